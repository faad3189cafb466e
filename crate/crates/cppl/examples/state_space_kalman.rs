//! The linear-Gaussian state-space model: simulate observations, run the
//! bootstrap particle filter, and compare the evidence and final-state
//! posterior against the exact Kalman filter.
//!
//!     cargo run --release --example state_space_kalman

use std::path::PathBuf;

use cppl::cli::{gen_ssm_data, parse_data_csv, SsmGen};
use cppl::codegen::{compile, CompileOptions};
use cppl::oracle::{decode_result_values, kalman_filter, SsmParams, Val};
use cppl::smc::{run_smc, SmcConfig};

fn main() {
    let csv = gen_ssm_data(10, 4242, &SsmGen::default()).expect("generate");
    let ys = parse_data_csv(&csv).expect("parse");

    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models/ssm.cppl");
    let src = std::fs::read_to_string(path).expect("model");
    let art = compile(&src, &CompileOptions { data: Some(ys.clone()) }).expect("compiles");

    let cfg = SmcConfig {
        particles: 50_000,
        root_seed: 7,
        ..Default::default()
    };
    let r = run_smc(&art.program, &cfg).expect("inference");

    // the model's Normal takes (mean, stddev); X1's marginal prior is
    // N(2, 100^2 + 1)
    let params = SsmParams {
        first_mean: 2.0,
        first_var: 100.0 * 100.0 + 1.0,
        drift: 2.0,
        trans_var: 1.0,
        obs_var: 25.0,
    };
    let (kz, filtered) = kalman_filter(&params, &ys).expect("kalman");

    let values = decode_result_values(&art.anf, &art.program, &r.states).unwrap();
    let post_mean: f64 = values
        .iter()
        .zip(&r.norm_weights)
        .map(|(v, w)| match v {
            Val::Float(x) => x * w,
            _ => 0.0,
        })
        .sum();

    println!("particle filter logZ = {:.4}", r.log_z);
    println!("kalman exact    logZ = {:.4}", kz);
    println!("posterior mean of X_T = {:.3}", post_mean);
    println!("kalman filtered  mean = {:.3}", filtered.last().unwrap().0);
    println!("resampled {} times; ESS trace head: {:?}",
        r.resample_count,
        &r.ess_trace[..r.ess_trace.len().min(4)]);
}
