//! The SMC inference engine over compiled block programs.
//!
//! The engine repeats: propagate every non-checkpointed particle with
//! `sim` until all have flagged a checkpoint (finished particles flag
//! from the stop sentinel, so nothing deadlocks); check termination by
//! testing particle 0 first and scanning the rest only if it stopped;
//! resample systematically when the effective sample size falls under
//! the threshold (threshold 1 forces resampling at every checkpoint).
//! The normalizing-constant estimate accumulates the mean particle
//! weight at each resampling point and at termination, with weights
//! reset to zero after each resample.
//!
//! Weight snapshots live in an engine-owned array during resampling
//! (separate from the per-particle states), ancestor duplication uses
//! the stack-prefix copy, and each particle gets a fresh generator
//! stream keyed by (seed, epoch, index) after every resample, so results
//! are bitwise identical for any thread count.

use std::time::{Duration, Instant};

use rand::Rng;

use crate::dists::RandomSource;
use crate::error::{SmcError, VmError};
use crate::vm::{copy_state, sim_scratch, BlockProgram, BlockRef, ParticleState, Scratch};

#[derive(Debug, Clone)]
pub struct SmcConfig {
    /// Particle count N.
    pub particles: usize,
    pub root_seed: u64,
    /// Resample when ESS < threshold * N; 1.0 resamples at every
    /// checkpoint, 0.0 never (plain importance sampling).
    pub ess_threshold: f64,
    /// 0 = all available cores.
    pub threads: usize,
    /// Per-particle stack capacity in cells.
    pub stack_cells: usize,
}

impl Default for SmcConfig {
    fn default() -> Self {
        SmcConfig {
            particles: 10_000,
            root_seed: 0,
            ess_threshold: 1.0,
            threads: 1,
            stack_cells: crate::vm::DEFAULT_STACK_CELLS,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PhaseTimings {
    pub propagate: Duration,
    pub resample: Duration,
}

#[derive(Debug)]
pub struct SmcResult {
    pub states: Vec<ParticleState>,
    /// Final normalized weights (sum to 1).
    pub norm_weights: Vec<f64>,
    /// Log normalizing-constant estimate.
    pub log_z: f64,
    pub resample_count: usize,
    /// ESS observed at each checkpoint barrier (before any resampling
    /// decision).
    pub ess_trace: Vec<f64>,
    pub timings: PhaseTimings,
}

/// Numerically stable log(sum(exp(xs))); -inf for an all-rejected set.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Effective sample size (sum w)^2 / sum(w^2), computed in log space.
/// Scale-invariant, so unnormalized log-weights are fine.
pub fn ess(log_weights: &[f64]) -> Result<f64, SmcError> {
    let lse = log_sum_exp(log_weights);
    if lse == f64::NEG_INFINITY {
        return Err(SmcError::AllParticlesRejected);
    }
    let doubled: Vec<f64> = log_weights.iter().map(|w| 2.0 * w).collect();
    let lse2 = log_sum_exp(&doubled);
    Ok((2.0 * lse - lse2).exp())
}

/// Normalized weights from log-weights (at least one finite).
pub fn normalize_weights(log_weights: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(log_weights);
    log_weights.iter().map(|w| (w - lse).exp()).collect()
}

/// Systematic resampling: ancestor k is chosen for position j iff
/// cumulative(k-1) <= (j+u)/N < cumulative(k). One uniform draw, evenly
/// spaced positions, ancestors ascending.
pub fn systematic_resample(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    debug_assert!(u > 0.0 && u < 1.0);
    let mut out = Vec::with_capacity(n);
    let mut k = 0usize;
    let mut cum = weights[0];
    for j in 0..n {
        let pos = (j as f64 + u) / n as f64;
        while pos >= cum && k + 1 < n {
            k += 1;
            cum += weights[k];
        }
        out.push(k);
    }
    out
}

fn effective_threads(requested: usize, n: usize) -> usize {
    let cores = std::thread::available_parallelism().map(|v| v.get()).unwrap_or(1);
    let t = if requested == 0 { cores } else { requested.min(cores) };
    t.clamp(1, n.max(1))
}

fn propagate_one(
    prog: &BlockProgram,
    s: &mut ParticleState,
    flag: &mut bool,
    scratch: &mut Scratch,
) -> Result<(), VmError> {
    while !*flag {
        let (_, cp) = sim_scratch(prog, s.next, s, scratch)?;
        *flag = cp;
    }
    Ok(())
}

/// Runs every non-checkpointed particle to its next checkpoint (or the
/// stop sentinel), partitioning the particles across worker threads.
/// The result is bitwise identical for any thread count because each
/// particle carries its own generator.
pub fn propagate_parallel(
    prog: &BlockProgram,
    states: &mut [ParticleState],
    flags: &mut [bool],
    threads: usize,
) -> Result<(), SmcError> {
    let n = states.len();
    let threads = effective_threads(threads, n);
    if threads <= 1 {
        let mut scratch = Scratch::default();
        for (i, (s, flag)) in states.iter_mut().zip(flags.iter_mut()).enumerate() {
            propagate_one(prog, s, flag, &mut scratch)
                .map_err(|e| SmcError::Particle { particle: i, source: e })?;
        }
        return Ok(());
    }
    // Work is claimed chunk by chunk from a shared queue so uneven
    // per-particle cost cannot idle a worker at the barrier. Each
    // particle's outcome is independent of which worker runs it, so
    // results stay bitwise identical for any schedule.
    let chunk = n.div_ceil(threads * 64).max(64);
    let queue: std::sync::Mutex<Vec<(usize, (&mut [ParticleState], &mut [bool]))>> = {
        let pairs: Vec<(usize, (&mut [ParticleState], &mut [bool]))> = states
            .chunks_mut(chunk)
            .zip(flags.chunks_mut(chunk))
            .enumerate()
            .map(|(ci, pair)| (ci * chunk, pair))
            .collect();
        std::sync::Mutex::new(pairs)
    };
    let results: Vec<Result<(), SmcError>> = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for _ in 0..threads {
            let queue = &queue;
            handles.push(scope.spawn(move || {
                let mut scratch = Scratch::default();
                loop {
                    let item = queue.lock().expect("queue lock").pop();
                    let Some((base, (schunk, fchunk))) = item else {
                        return Ok(());
                    };
                    for (i, (s, flag)) in schunk.iter_mut().zip(fchunk.iter_mut()).enumerate() {
                        propagate_one(prog, s, flag, &mut scratch).map_err(|e| {
                            SmcError::Particle {
                                particle: base + i,
                                source: e,
                            }
                        })?;
                    }
                }
            }));
        }
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    for r in results {
        r?;
    }
    Ok(())
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Per-particle stream key: root seed, resampling epoch, particle index.
pub fn particle_seed(root: u64, epoch: u64, index: u64) -> u64 {
    splitmix64(root ^ splitmix64(epoch ^ splitmix64(index)))
}

/// Runs SMC inference over a compiled program.
pub fn run_smc(prog: &BlockProgram, cfg: &SmcConfig) -> Result<SmcResult, SmcError> {
    if cfg.particles == 0 {
        return Err(SmcError::BadConfig("particle count must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&cfg.ess_threshold) {
        return Err(SmcError::BadConfig("ess threshold must be in [0, 1]".into()));
    }
    let n = cfg.particles;
    let ln_n = (n as f64).ln();

    // Initialize each worker's chunk inside that worker (same chunking
    // as propagation), so first-epoch stack growth reallocates in the
    // thread that owns the buffers.
    let threads_eff = effective_threads(cfg.threads, n);
    let chunk = n.div_ceil(threads_eff);
    let mut states: Vec<ParticleState> = Vec::with_capacity(n);
    {
        let mut slots: Vec<Vec<ParticleState>> = (0..threads_eff).map(|_| Vec::new()).collect();
        std::thread::scope(|scope| {
            for (ci, slot) in slots.iter_mut().enumerate() {
                scope.spawn(move || {
                    let lo = ci * chunk;
                    let hi = ((ci + 1) * chunk).min(n);
                    let mut v = Vec::with_capacity(hi.saturating_sub(lo));
                    for i in lo..hi {
                        v.push(prog.init_state(
                            RandomSource::seeded(particle_seed(cfg.root_seed, 0, i as u64)),
                            cfg.stack_cells,
                        ));
                    }
                    *slot = v;
                });
            }
        });
        for v in slots {
            states.extend(v);
        }
    }
    let mut flags = vec![false; n];
    let mut weights = vec![0.0f64; n];

    use rand::SeedableRng;
    let mut engine_rng =
        rand::rngs::SmallRng::seed_from_u64(splitmix64(cfg.root_seed ^ 0x454E47494E45));

    let mut log_z = 0.0f64;
    let mut resample_count = 0usize;
    let mut ess_trace = Vec::new();
    let mut timings = PhaseTimings::default();

    loop {
        // propagation: run all pending particles to their checkpoints
        let t0 = Instant::now();
        propagate_parallel(prog, &mut states, &mut flags, cfg.threads)?;
        timings.propagate += t0.elapsed();

        // engine-owned weight snapshot, authoritative for resampling
        for (w, s) in weights.iter_mut().zip(&states) {
            *w = s.log_weight;
        }

        // termination check: particle 0 first, scan the rest only if it
        // has stopped
        let terminated =
            states[0].next == BlockRef::Stop && states.iter().all(|s| s.next == BlockRef::Stop);
        if terminated {
            let lse = log_sum_exp(&weights);
            if lse == f64::NEG_INFINITY {
                return Err(SmcError::AllParticlesRejected);
            }
            log_z += lse - ln_n;
            let norm_weights = normalize_weights(&weights);
            return Ok(SmcResult {
                states,
                norm_weights,
                log_z,
                resample_count,
                ess_trace,
                timings,
            });
        }

        let t1 = Instant::now();
        let e = ess(&weights)?;
        ess_trace.push(e);
        if cfg.ess_threshold >= 1.0 || e < cfg.ess_threshold * n as f64 {
            log_z += log_sum_exp(&weights) - ln_n;
            let norm = normalize_weights(&weights);
            let u = loop {
                let u: f64 = engine_rng.random();
                if u > 0.0 {
                    break u;
                }
            };
            let ancestors = systematic_resample(&norm, u);
            let new_states: Vec<ParticleState> =
                ancestors.iter().map(|&a| copy_state(&states[a])).collect();
            states = new_states;
            resample_count += 1;
            for (i, s) in states.iter_mut().enumerate() {
                s.log_weight = 0.0;
                s.rng = RandomSource::seeded(particle_seed(
                    cfg.root_seed,
                    resample_count as u64,
                    i as u64,
                ));
            }
            debug_assert!(states.iter().all(crate::vm::relative_addresses_valid));
        }
        timings.resample += t1.elapsed();

        for f in flags.iter_mut() {
            *f = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codegen::{compile, CompileOptions};

    #[test]
    fn ess_known_values() {
        let n = 64;
        let uniform: Vec<f64> = vec![0.25f64.ln(); n];
        assert!((ess(&uniform).unwrap() - n as f64).abs() < 1e-9);

        let single: Vec<f64> = {
            let mut v = vec![f64::NEG_INFINITY; 10];
            v[3] = 1.7;
            v
        };
        assert!((ess(&single).unwrap() - 1.0).abs() < 1e-12);

        let two = vec![0.75f64.ln(), 0.25f64.ln()];
        assert!((ess(&two).unwrap() - 1.6).abs() < 1e-12);

        assert!(matches!(
            ess(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            Err(SmcError::AllParticlesRejected)
        ));
    }

    #[test]
    fn systematic_known_cases() {
        assert_eq!(
            systematic_resample(&[0.25, 0.25, 0.25, 0.25], 0.5),
            vec![0, 1, 2, 3]
        );
        assert_eq!(systematic_resample(&[1.0, 0.0, 0.0, 0.0], 0.3), vec![0, 0, 0, 0]);
        assert_eq!(systematic_resample(&[0.5, 0.5], 0.25), vec![0, 1]);
    }

    #[test]
    fn systematic_never_selects_zero_weight() {
        let w = vec![0.0, 0.5, 0.0, 0.5, 0.0];
        for i in 1..10 {
            let u = i as f64 / 10.0;
            for a in systematic_resample(&w, u) {
                assert!(w[a] > 0.0);
            }
        }
    }

    #[test]
    fn systematic_offspring_counts_within_one() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(1..12usize);
            let mut w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= total);
            let u = rng.random::<f64>().max(1e-12);
            let anc = systematic_resample(&w, u);
            assert!(anc.windows(2).all(|p| p[0] <= p[1]), "sorted ascending");
            for k in 0..n {
                let count = anc.iter().filter(|&&a| a == k).count() as f64;
                assert!(
                    (count - n as f64 * w[k]).abs() <= 1.0 + 1e-9,
                    "offspring {} of expected {}",
                    count,
                    n as f64 * w[k]
                );
            }
        }
    }

    #[test]
    fn constant_weight_program_is_exact() {
        let art = compile(
            "weight (log 3.0);\nresample;\n0",
            &CompileOptions::default(),
        )
        .unwrap();
        for tau in [1.0, 0.5, 0.0] {
            for n in [1usize, 7, 100] {
                let cfg = SmcConfig {
                    particles: n,
                    root_seed: 42,
                    ess_threshold: tau,
                    ..Default::default()
                };
                let r = run_smc(&art.program, &cfg).unwrap();
                assert!(
                    (r.log_z - 3.0f64.ln()).abs() < 1e-12,
                    "tau={} n={} log_z={}",
                    tau,
                    n,
                    r.log_z
                );
            }
        }
    }

    #[test]
    fn all_rejected_is_an_error() {
        let art = compile(
            "weight (log 0.0);\nresample;\n0",
            &CompileOptions::default(),
        )
        .unwrap();
        let cfg = SmcConfig {
            particles: 10,
            root_seed: 1,
            ..Default::default()
        };
        assert!(matches!(
            run_smc(&art.program, &cfg),
            Err(SmcError::AllParticlesRejected)
        ));
    }

    /// Half the particles finish one checkpoint earlier (stochastic
    /// resample count); nothing deadlocks and all states reach stop.
    #[test]
    fn early_termination_keeps_everyone_eligible() {
        let src = "let x = assume (Bernoulli 0.5) in\n\
                   if x then\n\
                     resample;\n\
                     resample;\n\
                     1\n\
                   else\n\
                     resample;\n\
                     0";
        let art = compile(src, &CompileOptions::default()).unwrap();
        let cfg = SmcConfig {
            particles: 200,
            root_seed: 5,
            ..Default::default()
        };
        let r = run_smc(&art.program, &cfg).unwrap();
        assert_eq!(r.states.len(), 200);
        assert!(r.resample_count >= 2);
        assert!((r.norm_weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(r.log_z, 0.0);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let src = "recursive let geometric = lam p.\n\
                   let x = assume (Bernoulli p) in\n\
                   if x then\n\
                     weight (log 1.5);\n\
                     resample;\n\
                     addi 1 (geometric p)\n\
                   else 1\n\
                   in geometric 0.5";
        let art = compile(src, &CompileOptions::default()).unwrap();
        let run = |threads: usize| {
            let cfg = SmcConfig {
                particles: 500,
                root_seed: 9,
                threads,
                ..Default::default()
            };
            let r = run_smc(&art.program, &cfg).unwrap();
            let results: Vec<Vec<crate::vm::Cell>> = r
                .states
                .iter()
                .map(|s| s.result(&art.program).to_vec())
                .collect();
            (r.log_z, r.resample_count, r.norm_weights.clone(), results)
        };
        let a = run(1);
        let b = run(2);
        let c = run(4);
        assert_eq!(a.0, b.0);
        assert_eq!(b.0, c.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
        assert_eq!(a.3, b.3);
        assert_eq!(b.2, c.2);
        assert_eq!(b.3, c.3);
    }

    #[test]
    fn propagate_with_all_flags_set_is_noop() {
        let art = compile("0", &CompileOptions::default()).unwrap();
        let mut states = vec![art
            .program
            .init_state(crate::dists::RandomSource::seeded(1), 64)];
        let mut flags = vec![true];
        let before = states[0].clone();
        propagate_parallel(&art.program, &mut states, &mut flags, 2).unwrap();
        assert_eq!(states[0].stack, before.stack);
        assert_eq!(states[0].next, before.next);
    }
}
