//! The parallel contract: with a fixed seed, results are bitwise
//! identical for any worker count, and propagation scales across cores.
//!
//!     cargo run --release --example parallel_determinism

use std::path::PathBuf;

use cppl::codegen::{compile, CompileOptions};
use cppl::smc::{run_smc, SmcConfig};

fn main() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models/crbd_toy.cppl");
    let src = std::fs::read_to_string(path).expect("model");
    let art = compile(&src, &CompileOptions::default()).expect("compiles");

    let mut reference: Option<(f64, Vec<f64>)> = None;
    for threads in [1usize, 2, 4, 8] {
        let cfg = SmcConfig {
            particles: 100_000,
            root_seed: 7,
            threads,
            ..Default::default()
        };
        let r = run_smc(&art.program, &cfg).expect("inference");
        let identical = match &reference {
            None => {
                reference = Some((r.log_z, r.norm_weights.clone()));
                true
            }
            Some((z, w)) => *z == r.log_z && *w == r.norm_weights,
        };
        println!(
            "threads {:>2}: logZ {:.6}  propagate {:>8.1?}  identical to 1-thread run: {}",
            threads, r.log_z, r.timings.propagate, identical
        );
        assert!(identical, "determinism contract violated");
    }
}
