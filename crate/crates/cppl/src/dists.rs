//! Distribution primitives: validated parameters, sampling, and exact
//! log-density/log-mass evaluation.
//!
//! Sampling delegates to `rand_distr` (whose binomial sampler uses
//! inversion for small n*p and BTPE-style rejection above); densities are
//! written out in closed form so the two routes stay independent.

use rand::rngs::SmallRng;
use rand::Rng;
use rand_distr::Distribution;
use statrs::function::gamma::ln_gamma;

use crate::ast::DistName;
use crate::error::{DistError, VmError};

pub const LN_2PI: f64 = 1.8378770664093453;

/// A scalar draw or observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
}

impl Value {
    pub fn as_float(self) -> f64 {
        match self {
            Value::Float(v) => v,
            Value::Int(v) => v as f64,
            Value::Bool(b) => {
                if b {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Validated distribution parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistParams {
    Bernoulli { p: f64 },
    Normal { mean: f64, std_dev: f64 },
    Gamma { shape: f64, scale: f64 },
    Exponential { rate: f64 },
    Poisson { rate: f64 },
    Binomial { n: u64, p: f64 },
    Uniform { lo: f64, hi: f64 },
    Beta { alpha: f64, beta: f64 },
}

impl DistParams {
    /// Builds and validates parameters from evaluated argument values in
    /// declaration order.
    pub fn new(name: DistName, args: &[Value]) -> Result<DistParams, DistError> {
        let f = |i: usize| args[i].as_float();
        let d = match name {
            DistName::Bernoulli => DistParams::Bernoulli { p: f(0) },
            DistName::Normal => DistParams::Normal {
                mean: f(0),
                std_dev: f(1),
            },
            DistName::Gamma => DistParams::Gamma {
                shape: f(0),
                scale: f(1),
            },
            DistName::Exponential => DistParams::Exponential { rate: f(0) },
            DistName::Poisson => DistParams::Poisson { rate: f(0) },
            DistName::Binomial => {
                let n = match args[0] {
                    Value::Int(n) if n >= 0 => n as u64,
                    _ => {
                        return Err(DistError::bad("Binomial", "n must be a non-negative integer"))
                    }
                };
                DistParams::Binomial { n, p: f(1) }
            }
            DistName::Uniform => DistParams::Uniform { lo: f(0), hi: f(1) },
            DistName::Beta => DistParams::Beta {
                alpha: f(0),
                beta: f(1),
            },
        };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<(), DistError> {
        let ok = |c: bool, dist: &'static str, msg: &str| {
            if c {
                Ok(())
            } else {
                Err(DistError::bad(dist, msg))
            }
        };
        match *self {
            DistParams::Bernoulli { p } => {
                ok(p.is_finite() && (0.0..=1.0).contains(&p), "Bernoulli", "p must be in [0, 1]")
            }
            DistParams::Normal { mean, std_dev } => ok(
                mean.is_finite() && std_dev.is_finite() && std_dev > 0.0,
                "Normal",
                "stddev must be positive",
            ),
            DistParams::Gamma { shape, scale } => ok(
                shape.is_finite() && scale.is_finite() && shape > 0.0 && scale > 0.0,
                "Gamma",
                "shape and scale must be positive",
            ),
            DistParams::Exponential { rate } => {
                ok(rate.is_finite() && rate > 0.0, "Exponential", "rate must be positive")
            }
            DistParams::Poisson { rate } => {
                ok(rate.is_finite() && rate > 0.0, "Poisson", "rate must be positive")
            }
            DistParams::Binomial { p, .. } => {
                ok(p.is_finite() && (0.0..=1.0).contains(&p), "Binomial", "p must be in [0, 1]")
            }
            DistParams::Uniform { lo, hi } => ok(
                lo.is_finite() && hi.is_finite() && lo < hi,
                "Uniform",
                "bounds must satisfy lo < hi",
            ),
            DistParams::Beta { alpha, beta } => ok(
                alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0,
                "Beta",
                "alpha and beta must be positive",
            ),
        }
    }

    /// Draws a value; advances the generator deterministically.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Value {
        match *self {
            DistParams::Bernoulli { p } => {
                Value::Bool(rng.random::<f64>() < p)
            }
            DistParams::Normal { mean, std_dev } => Value::Float(
                rand_distr::Normal::new(mean, std_dev)
                    .expect("validated")
                    .sample(rng),
            ),
            DistParams::Gamma { shape, scale } => Value::Float(
                rand_distr::Gamma::new(shape, scale)
                    .expect("validated")
                    .sample(rng),
            ),
            DistParams::Exponential { rate } => Value::Float(
                rand_distr::Exp::new(rate).expect("validated").sample(rng),
            ),
            DistParams::Poisson { rate } => {
                let v: f64 = rand_distr::Poisson::new(rate).expect("validated").sample(rng);
                Value::Int(v as i64)
            }
            DistParams::Binomial { n, p } => Value::Int(
                rand_distr::Binomial::new(n, p)
                    .expect("validated")
                    .sample(rng) as i64,
            ),
            DistParams::Uniform { lo, hi } => {
                Value::Float(lo + rng.random::<f64>() * (hi - lo))
            }
            DistParams::Beta { alpha, beta } => Value::Float(
                rand_distr::Beta::new(alpha, beta)
                    .expect("validated")
                    .sample(rng),
            ),
        }
    }

    /// Exact log pdf/pmf at `x`. Discrete distributions return -inf
    /// outside their support.
    pub fn log_density(&self, x: &Value) -> f64 {
        match *self {
            DistParams::Bernoulli { p } => {
                let b = match x {
                    Value::Bool(b) => *b,
                    Value::Int(v) => *v != 0,
                    Value::Float(v) => *v != 0.0,
                };
                if b {
                    p.ln()
                } else {
                    (1.0 - p).ln()
                }
            }
            DistParams::Normal { mean, std_dev } => {
                let z = (x.as_float() - mean) / std_dev;
                -0.5 * LN_2PI - std_dev.ln() - 0.5 * z * z
            }
            DistParams::Gamma { shape, scale } => {
                let v = x.as_float();
                if v < 0.0 {
                    f64::NEG_INFINITY
                } else if v == 0.0 {
                    if shape > 1.0 {
                        f64::NEG_INFINITY
                    } else if shape == 1.0 {
                        -scale.ln()
                    } else {
                        f64::INFINITY
                    }
                } else {
                    -ln_gamma(shape) - shape * scale.ln() + (shape - 1.0) * v.ln() - v / scale
                }
            }
            DistParams::Exponential { rate } => {
                let v = x.as_float();
                if v < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    rate.ln() - rate * v
                }
            }
            DistParams::Poisson { rate } => match int_of(x) {
                Some(k) if k >= 0 => {
                    k as f64 * rate.ln() - rate - ln_gamma(k as f64 + 1.0)
                }
                _ => f64::NEG_INFINITY,
            },
            DistParams::Binomial { n, p } => match int_of(x) {
                Some(k) if k >= 0 && (k as u64) <= n => {
                    let k = k as f64;
                    let n = n as f64;
                    let choose = ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0);
                    let succ = if p == 0.0 {
                        if k == 0.0 { 0.0 } else { f64::NEG_INFINITY }
                    } else {
                        k * p.ln()
                    };
                    let fail = if p == 1.0 {
                        if k == n { 0.0 } else { f64::NEG_INFINITY }
                    } else {
                        (n - k) * (1.0 - p).ln()
                    };
                    choose + succ + fail
                }
                _ => f64::NEG_INFINITY,
            },
            DistParams::Uniform { lo, hi } => {
                let v = x.as_float();
                if v >= lo && v <= hi {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            DistParams::Beta { alpha, beta } => {
                let v = x.as_float();
                if v <= 0.0 || v >= 1.0 {
                    f64::NEG_INFINITY
                } else {
                    let ln_b = ln_gamma(alpha) + ln_gamma(beta) - ln_gamma(alpha + beta);
                    (alpha - 1.0) * v.ln() + (beta - 1.0) * (1.0 - v).ln() - ln_b
                }
            }
        }
    }

    /// Analytic mean, variance, and fourth central moment (for the
    /// statistical tests).
    pub fn moments(&self) -> (f64, f64, f64) {
        match *self {
            DistParams::Bernoulli { p } => {
                let q = 1.0 - p;
                (p, p * q, p * q * (p.powi(3) + q.powi(3)))
            }
            DistParams::Normal { mean, std_dev } => {
                let v = std_dev * std_dev;
                (mean, v, 3.0 * v * v)
            }
            DistParams::Gamma { shape, scale } => {
                let v = shape * scale * scale;
                (shape * scale, v, v * v * (3.0 + 6.0 / shape))
            }
            DistParams::Exponential { rate } => {
                let v = 1.0 / (rate * rate);
                (1.0 / rate, v, 9.0 * v * v)
            }
            DistParams::Poisson { rate } => (rate, rate, rate * (1.0 + 3.0 * rate)),
            DistParams::Binomial { n, p } => {
                let n = n as f64;
                let q = 1.0 - p;
                let v = n * p * q;
                (n * p, v, v * (1.0 - 6.0 * p * q) + 3.0 * v * v)
            }
            DistParams::Uniform { lo, hi } => {
                let w = hi - lo;
                ((lo + hi) / 2.0, w * w / 12.0, w.powi(4) / 80.0)
            }
            DistParams::Beta { alpha, beta } => {
                let s = alpha + beta;
                let mean = alpha / s;
                let var = alpha * beta / (s * s * (s + 1.0));
                let excess = 6.0 * ((alpha - beta).powi(2) * (s + 1.0) - alpha * beta * (s + 2.0))
                    / (alpha * beta * (s + 2.0) * (s + 3.0));
                (mean, var, (excess + 3.0) * var * var)
            }
        }
    }
}

fn int_of(x: &Value) -> Option<i64> {
    match x {
        Value::Int(v) => Some(*v),
        Value::Float(v) if v.fract() == 0.0 => Some(*v as i64),
        _ => None,
    }
}

/// Source of randomness for a particle: a real generator, a forced-choice
/// tape, or a generator that records its draws as a tape.
#[derive(Debug, Clone)]
pub enum RandomSource {
    Prng(SmallRng),
    Tape { values: Vec<Value>, pos: usize },
    Recording { rng: SmallRng, trace: Vec<Value> },
}

impl RandomSource {
    pub fn seeded(seed: u64) -> RandomSource {
        use rand::SeedableRng;
        RandomSource::Prng(SmallRng::seed_from_u64(seed))
    }

    pub fn recording(seed: u64) -> RandomSource {
        use rand::SeedableRng;
        RandomSource::Recording {
            rng: SmallRng::seed_from_u64(seed),
            trace: Vec::new(),
        }
    }

    pub fn tape(values: Vec<Value>) -> RandomSource {
        RandomSource::Tape { values, pos: 0 }
    }

    pub fn draw(&mut self, d: &DistParams) -> Result<Value, VmError> {
        match self {
            RandomSource::Prng(rng) => Ok(d.sample(rng)),
            RandomSource::Recording { rng, trace } => {
                let v = d.sample(rng);
                trace.push(v);
                Ok(v)
            }
            RandomSource::Tape { values, pos } => {
                let v = values
                    .get(*pos)
                    .copied()
                    .ok_or(VmError::TapeExhausted(*pos))?;
                *pos += 1;
                let ok = matches!(
                    (d, v),
                    (DistParams::Bernoulli { .. }, Value::Bool(_))
                        | (DistParams::Poisson { .. }, Value::Int(_))
                        | (DistParams::Binomial { .. }, Value::Int(_))
                        | (
                            DistParams::Normal { .. }
                                | DistParams::Gamma { .. }
                                | DistParams::Exponential { .. }
                                | DistParams::Uniform { .. }
                                | DistParams::Beta { .. },
                            Value::Float(_)
                        )
                );
                if !ok {
                    return Err(VmError::TapeTypeMismatch(match d {
                        DistParams::Bernoulli { .. } => "Bernoulli",
                        DistParams::Normal { .. } => "Normal",
                        DistParams::Gamma { .. } => "Gamma",
                        DistParams::Exponential { .. } => "Exponential",
                        DistParams::Poisson { .. } => "Poisson",
                        DistParams::Binomial { .. } => "Binomial",
                        DistParams::Uniform { .. } => "Uniform",
                        DistParams::Beta { .. } => "Beta",
                    }));
                }
                Ok(v)
            }
        }
    }

    /// The recorded trace, when this source is a recorder.
    pub fn into_trace(self) -> Option<Vec<Value>> {
        match self {
            RandomSource::Recording { trace, .. } => Some(trace),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::DistName;

    fn params(name: DistName, args: &[Value]) -> DistParams {
        DistParams::new(name, args).unwrap()
    }

    #[test]
    fn degenerate_bernoulli_always_true() {
        let d = params(DistName::Bernoulli, &[Value::Float(1.0)]);
        let mut rng = RandomSource::seeded(3);
        for _ in 0..100 {
            assert_eq!(rng.draw(&d).unwrap(), Value::Bool(true));
        }
    }

    #[test]
    fn zero_stddev_rejected() {
        let e = DistParams::new(DistName::Normal, &[Value::Float(0.0), Value::Float(0.0)]);
        assert!(e.is_err());
    }

    #[test]
    fn known_log_densities() {
        let n01 = params(DistName::Normal, &[Value::Float(0.0), Value::Float(1.0)]);
        let at0 = n01.log_density(&Value::Float(0.0));
        assert!((at0 - (-0.9189385332046727)).abs() < 1e-12);
        let at03 = n01.log_density(&Value::Float(0.3));
        assert!((at03 - (-0.9639385332046727)).abs() < 1e-12);

        let b = params(DistName::Bernoulli, &[Value::Float(0.5)]);
        assert!((b.log_density(&Value::Bool(true)) - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn discrete_mass_sums_to_one() {
        let b = params(DistName::Bernoulli, &[Value::Float(0.37)]);
        let total = b.log_density(&Value::Bool(true)).exp() + b.log_density(&Value::Bool(false)).exp();
        assert!((total - 1.0).abs() < 1e-12);

        let bin = params(
            DistName::Binomial,
            &[Value::Int(10), Value::Float(0.3)],
        );
        let total: f64 = (0..=10).map(|k| bin.log_density(&Value::Int(k)).exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);

        let poi = params(DistName::Poisson, &[Value::Float(3.0)]);
        let total: f64 = (0..=200).map(|k| poi.log_density(&Value::Int(k)).exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn outside_support_is_neg_inf() {
        let poi = params(DistName::Poisson, &[Value::Float(3.0)]);
        assert_eq!(poi.log_density(&Value::Int(-1)), f64::NEG_INFINITY);
        let exp = params(DistName::Exponential, &[Value::Float(2.0)]);
        assert_eq!(exp.log_density(&Value::Float(-0.1)), f64::NEG_INFINITY);
        let uni = params(DistName::Uniform, &[Value::Float(0.0), Value::Float(1.0)]);
        assert_eq!(uni.log_density(&Value::Float(1.5)), f64::NEG_INFINITY);
    }

    /// Law-of-large-numbers check: empirical mean and variance of 1e5
    /// draws within 5 standard errors of the analytic moments.
    #[test]
    fn sample_moments_match_analytic() {
        let cases = vec![
            params(DistName::Bernoulli, &[Value::Float(0.3)]),
            params(DistName::Normal, &[Value::Float(0.0), Value::Float(100.0)]),
            params(DistName::Gamma, &[Value::Float(2.0), Value::Float(3.0)]),
            params(DistName::Exponential, &[Value::Float(0.5)]),
            params(DistName::Poisson, &[Value::Float(4.0)]),
            params(DistName::Binomial, &[Value::Int(20), Value::Float(0.25)]),
            params(DistName::Uniform, &[Value::Float(-1.0), Value::Float(3.0)]),
            params(DistName::Beta, &[Value::Float(2.0), Value::Float(5.0)]),
        ];
        let n = 100_000usize;
        for (i, d) in cases.iter().enumerate() {
            let mut rng = RandomSource::seeded(1000 + i as u64);
            let xs: Vec<f64> = (0..n).map(|_| rng.draw(d).unwrap().as_float()).collect();
            let mean: f64 = xs.iter().sum::<f64>() / n as f64;
            let var: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            let (m, v, mu4) = d.moments();
            let se_mean = (v / n as f64).sqrt();
            let se_var = ((mu4 - v * v).max(0.0) / n as f64).sqrt();
            assert!(
                (mean - m).abs() <= 5.0 * se_mean,
                "case {}: mean {} vs {} (se {})",
                i,
                mean,
                m,
                se_mean
            );
            assert!(
                (var - v).abs() <= 5.0 * se_var.max(1e-12),
                "case {}: var {} vs {} (se {})",
                i,
                var,
                v,
                se_var
            );
        }
    }

    /// The Normal(0,100) sample-mean bound: 1e5 draws within +-1.0.
    #[test]
    fn normal_0_100_sample_mean() {
        let d = params(DistName::Normal, &[Value::Float(0.0), Value::Float(100.0)]);
        let mut rng = RandomSource::seeded(7);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| rng.draw(&d).unwrap().as_float()).sum::<f64>() / n as f64;
        assert!(mean.abs() < 1.0, "mean {}", mean);
    }

    #[test]
    fn tape_replays_and_checks_types() {
        let b = params(DistName::Bernoulli, &[Value::Float(0.5)]);
        let mut tape = RandomSource::tape(vec![Value::Bool(true), Value::Bool(false)]);
        assert_eq!(tape.draw(&b).unwrap(), Value::Bool(true));
        assert_eq!(tape.draw(&b).unwrap(), Value::Bool(false));
        assert!(matches!(tape.draw(&b), Err(VmError::TapeExhausted(_))));

        let n = params(DistName::Normal, &[Value::Float(0.0), Value::Float(1.0)]);
        let mut tape = RandomSource::tape(vec![Value::Bool(true)]);
        assert!(matches!(tape.draw(&n), Err(VmError::TapeTypeMismatch(_))));
    }
}
