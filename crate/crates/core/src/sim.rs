//! Monte Carlo for the one-sided reflected Brownian particle system and the
//! GUE top-eigenvalue sampler.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::saddle::DeviationParam;
use crate::stats::{ks_one_sample, mean_stderr};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimIc {
    Packed,
    Flat,
    Stationary { rho: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub ic: SimIc,
    /// Final time and tagged particle index.
    pub t: u32,
    pub dt: f64,
    /// Particles kept below the tagged index (flat and stationary).
    pub cutoff: u32,
    pub reps: usize,
    pub seed: u64,
    /// Reflect against the sampled maximum of the Brownian bridge between
    /// grid times instead of the grid values only.
    pub bridge: bool,
}

pub const MAX_DT: f64 = 1e-2;

impl SimConfig {
    pub fn new(ic: SimIc, t: u32, reps: usize, seed: u64) -> Self {
        SimConfig {
            ic,
            t,
            dt: default_dt(t),
            cutoff: 4 * t,
            reps,
            seed,
            bridge: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t == 0 {
            return Err(Error::invalid("t must be a positive integer"));
        }
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::invalid(format!(
                "dt must lie in (0, {MAX_DT}], got {}",
                self.dt
            )));
        }
        if self.reps == 0 {
            return Err(Error::invalid("reps must be >= 1"));
        }
        match self.ic {
            SimIc::Packed => {}
            SimIc::Flat => {
                if self.cutoff == 0 {
                    return Err(Error::invalid("cutoff must be >= 1 for flat data"));
                }
            }
            SimIc::Stationary { rho } => {
                if self.cutoff == 0 {
                    return Err(Error::invalid("cutoff must be >= 1 for stationary data"));
                }
                if !(rho > 0.0 && rho <= 1.0) {
                    return Err(Error::invalid(format!("rho must lie in (0, 1], got {rho}")));
                }
            }
        }
        Ok(())
    }

    /// Lowest simulated index.
    pub fn n_min(&self) -> i64 {
        match self.ic {
            SimIc::Packed => 1,
            _ => self.t as i64 - self.cutoff as i64,
        }
    }

    pub fn steps(&self) -> u64 {
        (self.t as f64 / self.dt).round().max(1.0) as u64
    }
}

pub fn default_dt(t: u32) -> f64 {
    1e-4 * (t as f64).max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleBatch {
    /// `x_t(t)` per replica, in replica order.
    pub values: Vec<f64>,
    pub config: SimConfig,
    #[serde(skip)]
    pub elapsed: f64,
}

fn replica_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

/// Stream of particle `n` in replica `rep`. Particles keep their noise when
/// the window changes, which couples runs with different cutoffs.
fn particle_rng(seed: u64, n: i64, rep: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&n.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(rep as u64);
    rng
}

fn particle_rngs(cfg: &SimConfig, rep: usize) -> Vec<ChaCha8Rng> {
    (cfg.n_min()..=cfg.t as i64)
        .map(|n| particle_rng(cfg.seed, n, rep))
        .collect()
}

/// Positions at time zero for indices `n_min..=t`; the gap below particle
/// `n` comes from `n`'s stream.
fn initial_positions_with(cfg: &SimConfig, rngs: &mut [ChaCha8Rng]) -> Result<Vec<f64>> {
    let n_min = cfg.n_min();
    let t = cfg.t as i64;
    let len = (t - n_min + 1) as usize;
    Ok(match cfg.ic {
        SimIc::Packed => vec![0.0; len],
        SimIc::Flat => (n_min..=t).map(|n| n as f64).collect(),
        SimIc::Stationary { rho } => {
            let right = Exp::new(1.0).map_err(|e| Error::invalid(e.to_string()))?;
            let left = Exp::new(rho).map_err(|e| Error::invalid(e.to_string()))?;
            // gaps[i] = x_n - x_{n-1} for n = n_min + i
            let gaps: Vec<f64> = rngs
                .iter_mut()
                .enumerate()
                .map(|(i, rng)| {
                    let n = n_min + i as i64;
                    if n >= 1 {
                        right.sample(rng)
                    } else {
                        left.sample(rng)
                    }
                })
                .collect();
            let mut x = vec![0.0; len];
            if n_min <= 0 {
                let zero = (-n_min) as usize;
                for i in (0..zero).rev() {
                    x[i] = x[i + 1] - gaps[i + 1];
                }
                for i in zero + 1..len {
                    x[i] = x[i - 1] + gaps[i];
                }
            } else {
                // x_{n_min} is a sum of n_min unit gaps above x_0 = 0
                x[0] = (1..n_min).map(|_| right.sample(&mut rngs[0])).sum::<f64>() + gaps[0];
                for i in 1..len {
                    x[i] = x[i - 1] + gaps[i];
                }
            }
            x
        }
    })
}

/// Initial configuration of replica `rep`.
pub fn initial_positions(cfg: &SimConfig, rep: usize) -> Result<Vec<f64>> {
    initial_positions_with(cfg, &mut particle_rngs(cfg, rep))
}

/// One particle over one step: free increment `db`, then reflection off the
/// left neighbour whose values at the two ends of the step are `left`.
/// With `u`, the barrier is the sampled maximum of `x_{n-1}(s) - B_n(s)`
/// over the step, a bridge of variance rate 2 between its endpoints.
#[inline]
fn advance(old: f64, db: f64, left: Option<(f64, f64)>, u: Option<f64>, dt: f64) -> f64 {
    let free = old + db;
    let Some((l0, l1)) = left else {
        return free;
    };
    let barrier = match u {
        Some(u) => {
            let (y0, y1) = (l0, l1 - db);
            0.5 * (y0 + y1 + ((y1 - y0).powi(2) - 4.0 * dt * u.ln()).sqrt()) + db
        }
        None => l1,
    };
    free.max(barrier)
}

fn bridge_uniform(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Option<f64> {
    cfg.bridge.then(|| 1.0 - rng.random::<f64>())
}

fn check_finite(x: &[f64], step: u64) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(format!(
            "non-finite position at step {step}"
        )));
    }
    Ok(())
}

/// One replica: every particle from the lowest index up to the tagged one.
pub fn run_replica(cfg: &SimConfig, rep: usize) -> Result<Vec<f64>> {
    let mut rngs = particle_rngs(cfg, rep);
    let mut x = initial_positions_with(cfg, &mut rngs)?;
    let sdt = cfg.dt.sqrt();
    let steps = cfg.steps();
    for step in 0..steps {
        let mut left = None;
        for (xn, rng) in x.iter_mut().zip(rngs.iter_mut()) {
            let old = *xn;
            let db = sdt * rng.sample::<f64, _>(StandardNormal);
            let u = bridge_uniform(cfg, rng);
            let new = advance(old, db, left, u, cfg.dt);
            debug_assert!(
                left.is_none_or(|l: (f64, f64)| new >= l.1),
                "ordering violated at step {step}"
            );
            left = Some((old, new));
            *xn = new;
        }
        if step % 1024 == 1023 {
            check_finite(&x, step)?;
        }
    }
    check_finite(&x, steps)?;
    Ok(x)
}

/// The replica at steps `dt` and `dt/2` driven by the same Brownian paths.
pub fn run_replica_pair(cfg: &SimConfig, rep: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rngs = particle_rngs(cfg, rep);
    let mut coarse = initial_positions_with(cfg, &mut rngs)?;
    let mut fine = coarse.clone();
    let h = 0.5 * cfg.dt;
    let sh = h.sqrt();
    let steps = cfg.steps();
    for step in 0..steps {
        let mut lc = None;
        let mut lf: Option<(f64, f64, f64)> = None;
        for i in 0..coarse.len() {
            let rng = &mut rngs[i];
            let z1 = sh * rng.sample::<f64, _>(StandardNormal);
            let z2 = sh * rng.sample::<f64, _>(StandardNormal);
            let (uc, u1, u2) = (
                bridge_uniform(cfg, rng),
                bridge_uniform(cfg, rng),
                bridge_uniform(cfg, rng),
            );
            let oc = coarse[i];
            coarse[i] = advance(oc, z1 + z2, lc, uc, cfg.dt);
            lc = Some((oc, coarse[i]));
            let f0 = fine[i];
            let f1 = advance(f0, z1, lf.map(|l| (l.0, l.1)), u1, h);
            let f2 = advance(f1, z2, lf.map(|l| (l.1, l.2)), u2, h);
            lf = Some((f0, f1, f2));
            fine[i] = f2;
        }
        if step % 1024 == 1023 {
            check_finite(&coarse, step)?;
            check_finite(&fine, step)?;
        }
    }
    check_finite(&coarse, steps)?;
    check_finite(&fine, steps)?;
    Ok((coarse, fine))
}

/// Draws of `x_t(t)` at steps `dt` and `dt/2` on shared Brownian paths.
pub fn simulate_dt_pair(cfg: &SimConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    cfg.validate()?;
    let pairs = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            run_replica_pair(cfg, rep)
                .map(|(c, f)| (*c.last().expect("nonempty"), *f.last().expect("nonempty")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pairs.into_iter().unzip())
}

/// Independent draws of `x_t(t)`, replicas in parallel.
pub fn simulate_samples(cfg: &SimConfig) -> Result<SampleBatch> {
    cfg.validate()?;
    let start = Instant::now();
    let values = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| run_replica(cfg, rep).map(|x| *x.last().expect("nonempty")))
        .collect::<Result<Vec<f64>>>()?;
    Ok(SampleBatch {
        values,
        config: *cfg,
        elapsed: start.elapsed().as_secs_f64(),
    })
}

fn gue_matrix(n: usize, t: f64, rng: &mut impl Rng) -> DMatrix<Complex64> {
    let sd = t.sqrt();
    let sd_off = (t / 2.0).sqrt();
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    // bordered fill: the leading k x k block only uses the first k^2 draws
    for k in 0..n {
        for i in 0..k {
            let re = sd_off * rng.sample::<f64, _>(StandardNormal);
            let im = sd_off * rng.sample::<f64, _>(StandardNormal);
            m[(i, k)] = Complex64::new(re, im);
            m[(k, i)] = Complex64::new(re, -im);
        }
        m[(k, k)] = Complex64::new(sd * rng.sample::<f64, _>(StandardNormal), 0.0);
    }
    m
}

fn top_eigenvalue(m: DMatrix<Complex64>) -> f64 {
    m.symmetric_eigenvalues().max()
}

fn check_gue(n: usize, t: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("matrix size must be >= 1"));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::invalid(format!("t must be > 0, got {t}")));
    }
    Ok(())
}

/// Largest eigenvalue of `n x n` GUE matrices: diagonal `N(0, t)`,
/// off-diagonal complex with total variance `t`.
pub fn gue_top_sample(n: usize, t: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
    check_gue(n, t)?;
    Ok((0..count)
        .into_par_iter()
        .map(|i| top_eigenvalue(gue_matrix(n, t, &mut replica_rng(seed, i))))
        .collect())
}

/// Top eigenvalues of the leading `1..=n` blocks of the same matrices.
pub fn gue_top_nested(n: usize, t: f64, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    check_gue(n, t)?;
    Ok((0..count)
        .into_par_iter()
        .map(|i| {
            let m = gue_matrix(n, t, &mut replica_rng(seed, i));
            (1..=n)
                .map(|k| top_eigenvalue(m.view((0, 0), (k, k)).into_owned()))
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailEstimate {
    pub p_hat: f64,
    pub stderr: f64,
    /// One-sided 95% upper bound (`3/reps` when there are no hits).
    pub upper_bound: f64,
    pub hits: usize,
    pub reps: usize,
}

pub fn tail_from_samples(values: &[f64], level: f64) -> TailEstimate {
    let reps = values.len();
    let hits = values.iter().filter(|&&v| v >= level).count();
    let n = reps as f64;
    let p_hat = hits as f64 / n;
    let stderr = (p_hat * (1.0 - p_hat) / n).sqrt();
    let upper_bound = if hits == 0 {
        3.0 / n
    } else {
        p_hat + 1.645 * stderr
    };
    TailEstimate {
        p_hat,
        stderr,
        upper_bound,
        hits,
        reps,
    }
}

/// Fraction of draws with `x_t(t) >= (2 + a) t`.
pub fn tail_estimate(cfg: &SimConfig, a: DeviationParam) -> Result<TailEstimate> {
    let batch = simulate_samples(cfg)?;
    Ok(tail_from_samples(
        &batch.values,
        (2.0 + a.get()) * cfg.t as f64,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapReport {
    pub ks_stat: f64,
    pub p_value: f64,
    pub mean_gap: f64,
    pub stderr: f64,
    pub count: usize,
}

/// Middle third of the window `n_min..=t`, as offsets into a replica.
fn middle_third(len: usize) -> std::ops::Range<usize> {
    len / 3..2 * len / 3
}

fn gap_report(gaps: &[f64]) -> GapReport {
    let ks = ks_one_sample(gaps, |x| if x <= 0.0 { 0.0 } else { -(-x).exp_m1() });
    let (mean_gap, stderr) = mean_stderr(gaps);
    GapReport {
        ks_stat: ks.statistic,
        p_value: ks.p_value,
        mean_gap,
        stderr,
        count: gaps.len(),
    }
}

fn check_gap_window(cfg: &SimConfig) -> Result<()> {
    cfg.validate()?;
    if !matches!(cfg.ic, SimIc::Stationary { rho } if rho == 1.0) {
        return Err(Error::invalid(
            "gap check needs stationary data with rho = 1",
        ));
    }
    if cfg.cutoff < 6 * cfg.t.max(2) {
        return Err(Error::invalid(format!(
            "window too small: cutoff {} < 6 t; the middle third would feel the truncation",
            cfg.cutoff
        )));
    }
    Ok(())
}

fn middle_gaps(x: &[f64]) -> impl Iterator<Item = f64> + '_ {
    middle_third(x.len()).map(move |i| x[i + 1] - x[i])
}

/// Exp(1) test of the gaps in the middle of the window after time `t`.
pub fn stationary_gap_check(cfg: &SimConfig) -> Result<GapReport> {
    check_gap_window(cfg)?;
    let gaps: Vec<f64> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| run_replica(cfg, rep).map(|x| middle_gaps(&x).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?
        .concat();
    Ok(gap_report(&gaps))
}

/// The same statistics for the initial configuration.
pub fn initial_gap_check(cfg: &SimConfig) -> Result<GapReport> {
    check_gap_window(cfg)?;
    let gaps: Vec<f64> = (0..cfg.reps)
        .map(|rep| {
            let x = initial_positions(cfg, rep)?;
            Ok(middle_gaps(&x).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    Ok(gap_report(&gaps))
}
