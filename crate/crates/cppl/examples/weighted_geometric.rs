//! The weighted geometric model: infer the outcome distribution and the
//! normalizing constant, and compare both against their closed forms
//! P(n) = 0.5^n 1.5^(n-1) / 2 and Z = 2.
//!
//!     cargo run --release --example weighted_geometric

use std::collections::BTreeMap;
use std::path::PathBuf;

use cppl::codegen::{compile, CompileOptions};
use cppl::oracle::{decode_result_values, Val};
use cppl::smc::{run_smc, SmcConfig};

fn main() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models/geometric.cppl");
    let src = std::fs::read_to_string(path).expect("model");
    let art = compile(&src, &CompileOptions::default()).expect("compiles");

    let cfg = SmcConfig {
        particles: 100_000,
        root_seed: 1,
        ..Default::default()
    };
    let r = run_smc(&art.program, &cfg).expect("inference");

    let mut mass: BTreeMap<i64, f64> = BTreeMap::new();
    let values = decode_result_values(&art.anf, &art.program, &r.states).unwrap();
    for (v, w) in values.iter().zip(&r.norm_weights) {
        if let Val::Int(n) = v {
            *mass.entry(*n).or_insert(0.0) += w;
        }
    }

    println!("logZ = {:.4}   (ln 2 = {:.4})", r.log_z, 2.0f64.ln());
    println!("{:>3} {:>10} {:>10}", "n", "estimate", "exact");
    for n in 1..=10i64 {
        let exact = 0.5f64.powi(n as i32) * 1.5f64.powi(n as i32 - 1) / 2.0;
        let got = mass.get(&n).copied().unwrap_or(0.0);
        println!("{:>3} {:>10.5} {:>10.5}", n, got, exact);
    }
}
