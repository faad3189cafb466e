//! The run report: logZ, weighted samples or histogram bins, config
//! echo, and optional per-phase timings.
//!
//! The config echo deliberately excludes the thread count and timings
//! are opt-in, so reports for the same (model, seed, particles,
//! threshold, stack) are byte-identical regardless of parallelism.

use serde::Serialize;

use crate::oracle::Val;

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunReport {
    pub schema: u32,
    pub model: String,
    pub config: ConfigEcho,
    pub log_z: f64,
    pub resample_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram: Option<Vec<HistBin>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<Sample>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<TimingMs>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ConfigEcho {
    pub particles: usize,
    pub seed: u64,
    pub ess_threshold: f64,
    pub stack_cells: usize,
}

/// `[lo, hi, count, normWeight]`
#[derive(Debug, Clone, Serialize)]
pub struct HistBin(pub f64, pub f64, pub u64, pub f64);

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Sample {
    pub value: serde_json::Value,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TimingMs {
    pub compile: f64,
    pub propagate: f64,
    pub resample: f64,
    pub total: f64,
}

pub fn val_to_json(v: &Val) -> serde_json::Value {
    match v {
        Val::Int(i) => serde_json::json!(i),
        Val::Float(f) => serde_json::json!(f),
        Val::Bool(b) => serde_json::json!(b),
        Val::Record(fields) => {
            let mut m = serde_json::Map::new();
            for (l, fv) in fields {
                m.insert(l.clone(), val_to_json(fv));
            }
            serde_json::Value::Object(m)
        }
        Val::Variant(name, payload) => serde_json::json!({
            "con": name,
            "payload": val_to_json(payload),
        }),
        Val::Seq(vs) => serde_json::Value::Array(vs.iter().map(val_to_json).collect()),
    }
}

/// Scalar view of a result for histogram binning.
pub fn val_as_scalar(v: &Val) -> Option<f64> {
    match v {
        Val::Int(i) => Some(*i as f64),
        Val::Float(f) => Some(*f),
        Val::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
        _ => None,
    }
}

/// Equal-width histogram over the weighted results.
pub fn build_histogram(values: &[f64], weights: &[f64], bins: usize) -> Vec<HistBin> {
    assert!(bins >= 1 && !values.is_empty());
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut out: Vec<HistBin> = (0..bins)
        .map(|b| HistBin(lo + b as f64 * width, lo + (b + 1) as f64 * width, 0, 0.0))
        .collect();
    for (v, w) in values.iter().zip(weights) {
        let mut b = ((v - lo) / width) as usize;
        if b >= bins {
            b = bins - 1;
        }
        out[b].2 += 1;
        out[b].3 += w;
    }
    out
}

/// CSV rendering: histogram rows when present, otherwise samples.
pub fn to_csv(report: &RunReport) -> String {
    let mut out = String::new();
    if let Some(hist) = &report.histogram {
        out.push_str("lo,hi,count,norm_weight\n");
        for HistBin(lo, hi, n, w) in hist {
            out.push_str(&format!("{:?},{:?},{},{:?}\n", lo, hi, n, w));
        }
    } else if let Some(samples) = &report.samples {
        out.push_str("value,weight\n");
        for s in samples {
            out.push_str(&format!("{},{:?}\n", s.value, s.weight));
        }
    }
    out
}
