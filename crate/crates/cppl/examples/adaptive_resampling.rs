//! ESS-gated resampling: sweep the threshold from plain importance
//! sampling (0) to resampling at every checkpoint (1) and watch the
//! resampling count and evidence spread.
//!
//!     cargo run --release --example adaptive_resampling

use std::path::PathBuf;

use cppl::cli::{gen_ssm_data, parse_data_csv, SsmGen};
use cppl::codegen::{compile, CompileOptions};
use cppl::smc::{run_smc, SmcConfig};

fn main() {
    let csv = gen_ssm_data(10, 4242, &SsmGen::default()).expect("generate");
    let ys = parse_data_csv(&csv).expect("parse");
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models/ssm.cppl");
    let src = std::fs::read_to_string(path).expect("model");
    let art = compile(&src, &CompileOptions { data: Some(ys) }).expect("compiles");

    println!("{:>5} {:>10} {:>12} {:>10}", "tau", "resamples", "mean logZ", "sd logZ");
    for tau in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let mut zs = Vec::new();
        let mut resamples = 0;
        for seed in 0..20 {
            let cfg = SmcConfig {
                particles: 5_000,
                root_seed: seed,
                ess_threshold: tau,
                ..Default::default()
            };
            let r = run_smc(&art.program, &cfg).expect("inference");
            resamples = r.resample_count;
            zs.push(r.log_z);
        }
        let mean = zs.iter().sum::<f64>() / zs.len() as f64;
        let sd = (zs.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / (zs.len() - 1) as f64)
            .sqrt();
        println!("{:>5.2} {:>10} {:>12.4} {:>10.4}", tau, resamples, mean, sd);
    }
}
