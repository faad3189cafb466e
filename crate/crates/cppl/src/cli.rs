//! Command implementations behind the thin binary: stage-dump
//! compilation, inference runs, and synthetic observation generation.

use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_distr::Distribution;

use crate::codegen::{compile, Artifacts, CompileOptions};
use crate::dump;
use crate::error::Error;
use crate::oracle::decode_result_values;
use crate::report::{
    build_histogram, to_csv, val_as_scalar, val_to_json, ConfigEcho, RunReport, Sample, TimingMs,
};
use crate::smc::{run_smc, SmcConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitStage {
    Ast,
    Anf,
    Analysis,
    Stmt,
    Blocks,
    Frames,
    Pcfg,
}

impl FromStr for EmitStage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "ast" => EmitStage::Ast,
            "anf" => EmitStage::Anf,
            "analysis" => EmitStage::Analysis,
            "stmt" => EmitStage::Stmt,
            "blocks" => EmitStage::Blocks,
            "frames" => EmitStage::Frames,
            "pcfg" => EmitStage::Pcfg,
            other => {
                return Err(format!(
                    "unknown stage '{}'; expected ast|anf|analysis|stmt|blocks|frames|pcfg",
                    other
                ))
            }
        })
    }
}

fn read_model(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn compile_model(path: &Path, data: Option<&Path>) -> Result<Artifacts, Error> {
    let src = read_model(path)?;
    let opts = CompileOptions {
        data: match data {
            Some(p) => Some(load_data_csv(p)?),
            None => None,
        },
    };
    Ok(compile(&src, &opts)?)
}

/// `compile <model> --emit <stage>`: the canonical dump of one pipeline
/// stage.
pub fn cmd_compile(path: &Path, stage: EmitStage, data: Option<&Path>) -> Result<String, Error> {
    let art = compile_model(path, data)?;
    Ok(match stage {
        EmitStage::Ast => dump::dump_ast(&art),
        EmitStage::Anf => dump::dump_anf(&art),
        EmitStage::Analysis => dump::dump_analysis(&art),
        EmitStage::Stmt => dump::dump_stmt(&art),
        EmitStage::Blocks => dump::dump_blocks(&art),
        EmitStage::Frames => dump::dump_frames(&art),
        EmitStage::Pcfg => dump::dump_pcfg(&art),
    })
}

#[derive(Debug, Clone)]
pub struct RunOpts {
    pub particles: usize,
    pub seed: u64,
    pub ess_threshold: f64,
    pub threads: usize,
    pub stack_cells: usize,
    pub output: OutputFormat,
    pub histogram: Option<usize>,
    pub data: Option<std::path::PathBuf>,
    pub timings: bool,
}

impl Default for RunOpts {
    fn default() -> Self {
        RunOpts {
            particles: 10_000,
            seed: 0,
            ess_threshold: 1.0,
            threads: 0,
            stack_cells: crate::vm::DEFAULT_STACK_CELLS,
            output: OutputFormat::Json,
            histogram: None,
            data: None,
            timings: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(format!("unknown output format '{}'", other)),
        }
    }
}

/// `run <model>`: compile, run SMC, and render the run report.
pub fn cmd_run(path: &Path, opts: &RunOpts) -> Result<String, Error> {
    let t_all = Instant::now();
    let t_compile = Instant::now();
    let art = compile_model(path, opts.data.as_deref())?;
    let compile_ms = t_compile.elapsed().as_secs_f64() * 1e3;

    let cfg = SmcConfig {
        particles: opts.particles,
        root_seed: opts.seed,
        ess_threshold: opts.ess_threshold,
        threads: opts.threads,
        stack_cells: opts.stack_cells,
    };
    let result = run_smc(&art.program, &cfg)?;
    let report = build_report(path, &art, &cfg, &result, opts, compile_ms, t_all)?;
    Ok(match opts.output {
        OutputFormat::Json => serde_json::to_string_pretty(&report).expect("serializable") + "\n",
        OutputFormat::Csv => to_csv(&report),
    })
}

fn build_report(
    path: &Path,
    art: &Artifacts,
    cfg: &SmcConfig,
    result: &crate::smc::SmcResult,
    opts: &RunOpts,
    compile_ms: f64,
    t_all: Instant,
) -> Result<RunReport, Error> {
    let values = decode_result_values(&art.anf, &art.program, &result.states)
        .map_err(|e| Error::Smc(crate::error::SmcError::Particle { particle: 0, source: e }))?;

    let (histogram, samples) = match opts.histogram {
        Some(bins) => {
            let scalars: Vec<f64> = values
                .iter()
                .map(|v| {
                    val_as_scalar(v).ok_or_else(|| {
                        Error::Usage("histogram output needs a scalar program result".into())
                    })
                })
                .collect::<Result<_, _>>()?;
            (
                Some(build_histogram(&scalars, &result.norm_weights, bins)),
                None,
            )
        }
        None => (
            None,
            Some(
                values
                    .iter()
                    .zip(&result.norm_weights)
                    .map(|(v, w)| Sample {
                        value: val_to_json(v),
                        weight: *w,
                    })
                    .collect(),
            ),
        ),
    };

    let timing_ms = opts.timings.then(|| TimingMs {
        compile: compile_ms,
        propagate: result.timings.propagate.as_secs_f64() * 1e3,
        resample: result.timings.resample.as_secs_f64() * 1e3,
        total: t_all.elapsed().as_secs_f64() * 1e3,
    });

    Ok(RunReport {
        schema: 1,
        model: path.display().to_string(),
        config: ConfigEcho {
            particles: cfg.particles,
            seed: cfg.root_seed,
            ess_threshold: cfg.ess_threshold,
            stack_cells: cfg.stack_cells,
        },
        log_z: result.log_z,
        resample_count: result.resample_count,
        histogram,
        samples,
        timing_ms,
    })
}

/// Parameters of the synthetic observation generator (the linear-
/// Gaussian chain: X0 ~ N(0, 100), Xt ~ N(X(t-1) + 2, 1), Yt ~ N(Xt, 5),
/// with the Normal written as (mean, stddev)).
#[derive(Debug, Clone, Copy)]
pub struct SsmGen {
    pub x0_mean: f64,
    pub x0_std: f64,
    pub drift: f64,
    pub trans_std: f64,
    pub obs_std: f64,
}

impl Default for SsmGen {
    fn default() -> Self {
        SsmGen {
            x0_mean: 0.0,
            x0_std: 100.0,
            drift: 2.0,
            trans_std: 1.0,
            obs_std: 5.0,
        }
    }
}

/// Simulates the chain forward and renders `Y1..YT` as CSV with a header
/// row.
pub fn gen_ssm_data(steps: usize, seed: u64, gen: &SsmGen) -> Result<String, Error> {
    if steps < 1 {
        return Err(Error::Usage("--steps must be at least 1".into()));
    }
    let mut rng = rand::rngs::SmallRng::seed_from_u64(seed);
    let normal = |mean: f64, std: f64, rng: &mut rand::rngs::SmallRng| -> f64 {
        if std == 0.0 {
            mean
        } else {
            rand_distr::Normal::new(mean, std).expect("valid stddev").sample(rng)
        }
    };
    let mut x = normal(gen.x0_mean, gen.x0_std, &mut rng);
    let mut out = String::from("t,y\n");
    for t in 1..=steps {
        x = normal(x + gen.drift, gen.trans_std, &mut rng);
        let y = normal(x, gen.obs_std, &mut rng);
        out.push_str(&format!("{},{:?}\n", t, y));
    }
    Ok(out)
}

/// Reads a `t,y` observation CSV (header row required).
pub fn load_data_csv(path: &Path) -> Result<Vec<f64>, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_data_csv(&text).map_err(Error::Usage)
}

pub fn parse_data_csv(text: &str) -> Result<Vec<f64>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty observation file")?;
    if header.trim() != "t,y" {
        return Err(format!("expected header 't,y', found '{}'", header));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let y = line
            .split(',')
            .nth(1)
            .ok_or_else(|| format!("line {}: expected 't,y'", i + 2))?;
        out.push(
            y.trim()
                .parse::<f64>()
                .map_err(|_| format!("line {}: bad observation '{}'", i + 2, y))?,
        );
    }
    if out.is_empty() {
        return Err("observation file has no rows".into());
    }
    Ok(out)
}
