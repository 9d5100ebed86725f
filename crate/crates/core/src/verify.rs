//! The acceptance suite: thirteen numbered checks with pinned tolerances.
//!
//! `Mode::Fast` shrinks sample sizes and grids so the whole suite runs in
//! seconds; its verdicts are indicative only.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::contour::{
    build_flat_contour, build_packed_contours, steep_descent_report, ContourConfig,
};
use crate::error::Result;
use crate::fredholm::{
    default_stat_step, prob_packed, prob_packed_raw, prob_stat, prob_stat_rho, tail_rate_table,
    CdfTable, FredholmConfig,
};
use crate::kernel::{khat_flat, khat_packed};
use crate::lambert::lambert_w;
use crate::saddle::{
    packed_saddles, phase_flat, phase_flat_complex, phase_packed, phase_packed_d1,
    phase_packed_real, rate_flat, rate_packed, rate_stat, DeviationParam, InitialCondition,
};
use crate::sim::{
    gue_top_sample, simulate_samples, stationary_gap_check, tail_from_samples, SimConfig, SimIc,
};
use crate::stats::{ks_one_sample, ks_two_sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Fast,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    /// Labels of the sub-checks that failed (`"all"` for single checks).
    pub failed_checks: Vec<String>,
}

pub const CRITERIA: [(u8, &str); 13] = [
    (1, "lambert identities"),
    (2, "saddle residuals"),
    (3, "closed-form rate identities"),
    (4, "rate asymptotics"),
    (5, "steep-descent certificates"),
    (6, "contour-deformation invariance"),
    (7, "gaussian reduction"),
    (8, "gue cross-validation"),
    (9, "ldp convergence"),
    (10, "stationary continuation"),
    (11, "simulator stationarity"),
    (12, "monte carlo vs fredholm tail"),
    (13, "determinism"),
];

pub const LAMBERT_TOL: f64 = 1e-12;
pub const SADDLE_TOL: f64 = 1e-12;
pub const IDENTITY_TOL: f64 = 1e-12;
pub const FLAT_MAX_TOL: f64 = 1e-8;
pub const INVARIANCE_TOL: f64 = 1e-8;
pub const GAUSS_TOL: f64 = 1e-6;
pub const KS_LEVEL: f64 = 0.01;
pub const LDP_REL_TOL: f64 = 0.25;
pub const PREFACTOR_DRIFT: f64 = 0.35;
pub const CONTINUATION_TOL: f64 = 5e-3;
pub const STD_ERRS: f64 = 3.0;
pub const SEED: u64 = 20_240_601;

fn a_grid(points: usize) -> Vec<DeviationParam> {
    (0..points)
        .map(|i| {
            let e = -2.0 + 4.0 * i as f64 / (points - 1) as f64;
            DeviationParam::new(10f64.powf(e)).expect("positive")
        })
        .collect()
}

fn outcome(id: u8, passed: bool, detail: String) -> Outcome {
    let failed_checks = if passed {
        Vec::new()
    } else {
        vec!["all".to_string()]
    };
    checked(id, detail, failed_checks)
}

fn checked(id: u8, detail: String, failed_checks: Vec<String>) -> Outcome {
    let name = CRITERIA[id as usize - 1].1;
    Outcome {
        id,
        name,
        passed: failed_checks.is_empty(),
        detail,
        failed_checks,
    }
}

fn failures(checks: &[(&str, bool)]) -> Vec<String> {
    checks
        .iter()
        .filter(|c| !c.1)
        .map(|c| c.0.to_string())
        .collect()
}

pub fn lambert_identities(mode: Mode) -> Result<Outcome> {
    let count = if mode == Mode::Full { 10_000 } else { 1_000 };
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let k: i32 = rng.random_range(-2..=2);
        let r = 10f64.powf(rng.random_range(-3.0..3.0));
        let th = rng.random_range(-PI..PI);
        let z = Complex64::from_polar(r, th);
        let w = lambert_w(k, z)?;
        worst = worst.max((w * w.exp() - z).norm() / (1.0 + z.norm()));
    }
    Ok(outcome(
        1,
        worst <= LAMBERT_TOL,
        format!("{count} points, max |W e^W - z|/(1+|z|) = {worst:.3e} (tol {LAMBERT_TOL:.0e})"),
    ))
}

pub fn saddle_residuals(_mode: Mode) -> Result<Outcome> {
    let mut worst_h = 0.0f64;
    let mut worst_g = 0.0f64;
    for a in a_grid(50) {
        let (wm, wp) = packed_saddles(a);
        for w in [wm, wp] {
            worst_h = worst_h.max(phase_packed_d1(Complex64::new(w, 0.0), a).norm());
        }
        let d = rate_flat(a)?;
        let r = ((d.saddle_lo + 1.0) * (d.saddle_hi + 1.0) + a.get()).abs() / (1.0 + a.get());
        worst_g = worst_g.max(r);
    }
    Ok(outcome(
        2,
        worst_h <= SADDLE_TOL && worst_g <= SADDLE_TOL,
        format!("max |H'(w)| = {worst_h:.3e}, max flat saddle residual/(1+a) = {worst_g:.3e}"),
    ))
}

/// Golden-section maximum of `-G` on `(lo, hi)`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let x1 = hi - g * (hi - lo);
        let x2 = lo + g * (hi - lo);
        if f(x1) < f(x2) {
            lo = x1;
        } else {
            hi = x2;
        }
    }
    f(0.5 * (lo + hi))
}

pub fn rate_identities(_mode: Mode) -> Result<Outcome> {
    let (mut ws, mut wp_, mut wf) = (0.0f64, 0.0f64, 0.0f64);
    for a in a_grid(50) {
        let (wm, wp) = packed_saddles(a);
        let (hm, hp) = (phase_packed_real(wm, a), phase_packed_real(wp, a));
        ws = ws.max((rate_stat(a) - hp).abs() / (1.0 + hp.abs()));
        wp_ = wp_.max((rate_packed(a) - (hp - hm)).abs() / (1.0 + (hp - hm).abs()));
        // coarse scan for the bracket, then golden section
        let neg_g = |z: f64| -phase_flat(z, a).unwrap_or(f64::NAN);
        let zs: Vec<f64> = (1..4000)
            .map(|i| -1.0 - 1e-3 * (i as f64).powf(1.5))
            .collect();
        let best = zs
            .iter()
            .enumerate()
            .max_by(|x, y| neg_g(*x.1).total_cmp(&neg_g(*y.1)))
            .map(|(i, _)| i)
            .expect("nonempty");
        let lo = zs[(best + 1).min(zs.len() - 1)];
        let hi = zs[best.saturating_sub(1)];
        let m = golden_max(neg_g, lo, hi);
        wf = wf.max((rate_flat(a)?.rate - m).abs());
    }
    Ok(outcome(
        3,
        ws <= IDENTITY_TOL && wp_ <= IDENTITY_TOL && wf <= FLAT_MAX_TOL,
        format!("stat {ws:.3e}, packed {wp_:.3e} (relative, tol {IDENTITY_TOL:.0e}); flat vs maximised -G {wf:.3e} (tol {FLAT_MAX_TOL:.0e})"),
    ))
}

pub fn rate_asymptotics(_mode: Mode) -> Result<Outcome> {
    let small = DeviationParam::new(1e-4)?;
    let s = small.get();
    let ef = (rate_flat(small)?.rate - 4.0 / 3.0 * s.powf(1.5)).abs();
    let es = (rate_stat(small) - 2.0 / 3.0 * s.powf(1.5)).abs();
    let a20 = DeviationParam::new(20.0)?;
    let el = (rate_flat(a20)?.rate - 0.5 * 21.0 * 21.0).abs();
    let a30 = DeviationParam::new(30.0)?;
    let esl = (rate_stat(a30) - (30.0 + 0.5 - 30f64.ln())).abs();
    let failed = failures(&[
        ("flat small a", ef <= 5.0 * s * s),
        ("stationary small a", es <= 5.0 * s * s),
        ("flat large a", el <= 1e-3),
        ("stationary large a", esl <= 0.05),
    ]);
    Ok(checked(
        4,
        format!(
            "a=1e-4: flat {ef:.3e}, stat {es:.3e} (tol {:.0e}); a=20 flat {el:.3e} (tol 1e-3); a=30 stat {esl:.4} (tol 0.05)",
            5.0 * s * s
        ),
        failed,
    ))
}

pub fn steep_descent(_mode: Mode) -> Result<Outcome> {
    let cfg = ContourConfig::default();
    let mut eps = Vec::new();
    for a in [0.1, 1.0, 10.0] {
        let a = DeviationParam::new(a)?;
        let (line, circle) = build_packed_contours(a, 4.0, &cfg)?;
        let rl = steep_descent_report(
            &line,
            |k| phase_packed(line.nodes[k], a).map_or(f64::NAN, |v| v.re),
            0.1,
        );
        let rc = steep_descent_report(
            &circle,
            |k| -phase_packed(circle.nodes[k], a).map_or(f64::NAN, |v| v.re),
            0.1,
        );
        let g = build_flat_contour(a, &cfg)?;
        let rg = steep_descent_report(
            &g,
            |k| phase_flat_complex(g.nodes[k], g.images[k], a).re,
            0.1,
        );
        eps.extend([rl.epsilon, rc.epsilon, rg.epsilon]);
    }
    let min = eps.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(outcome(
        5,
        min > 0.0,
        format!("smallest epsilon over 9 contours = {min:.4e}"),
    ))
}

pub fn contour_invariance(_mode: Mode) -> Result<Outcome> {
    let cfg = ContourConfig::default();
    let a = DeviationParam::new(1.0)?;
    let mut worst_p = 0.0f64;
    let mut worst_f = 0.0f64;
    for &(x, y) in &[(0.0, 0.0), (0.3, 0.7), (1.5, 0.2)] {
        let base = khat_packed(a, 4.0, x, y, 1.0, &cfg)?.value;
        for scale in [0.9, 1.1] {
            let v = khat_packed(a, 4.0, x, y, scale, &cfg)?.value;
            worst_p = worst_p.max((v - base).abs() / base.abs());
        }
        let f4 = khat_flat(a, 4.0, x, y, &cfg)?.value;
        let f6 = khat_flat(
            a,
            4.0,
            x,
            y,
            &ContourConfig {
                tau_max: 6.0,
                ..cfg
            },
        )?
        .value;
        worst_f = worst_f.max((f6 - f4).abs() / f4.abs());
    }
    Ok(outcome(
        6,
        worst_p <= INVARIANCE_TOL && worst_f <= INVARIANCE_TOL,
        format!("packed radius +-10%: {worst_p:.3e}; flat tau_max 4->6: {worst_f:.3e} (relative, tol {INVARIANCE_TOL:.0e})"),
    ))
}

pub fn gaussian_reduction(mode: Mode) -> Result<Outcome> {
    let cfg = FredholmConfig::default();
    let n01 = Normal::new(0.0, 1.0).expect("valid");
    let points = if mode == Mode::Full { 25 } else { 7 };
    let mut worst1 = 0.0f64;
    let mut worst0 = 0.0f64;
    for &t in &[1.0, 4.0] {
        for i in 0..points {
            let x = -3.0 + 6.0 * i as f64 / (points - 1) as f64;
            let s = x * f64::sqrt(t);
            worst1 = worst1.max((prob_packed_raw(1, t, s, &cfg)?.p - n01.cdf(x)).abs());
            worst0 = worst0.max((prob_packed_raw(0, t, s, &cfg)?.p - n01.cdf(x)).abs());
        }
    }
    Ok(outcome(
        7,
        worst1 <= GAUSS_TOL,
        format!("lowest free particle is n=1: max error {worst1:.3e} (tol {GAUSS_TOL:.0e}); n=0 would give {worst0:.3e}"),
    ))
}

pub fn gue_cross_validation(mode: Mode) -> Result<Outcome> {
    let full = mode == Mode::Full;
    let cfg = FredholmConfig::default();
    let count = if full { 10_000 } else { 1_000 };
    let table = CdfTable::packed_raw(5, 1.0, -2.0, 7.0, if full { 121 } else { 31 }, &cfg)?;
    let gue1 = gue_top_sample(5, 1.0, count, SEED)?;
    let k1 = ks_one_sample(&gue1, |s| table.cdf(s));
    let gue5 = gue_top_sample(5, 5.0, count, SEED + 1)?;
    let mut sim = SimConfig::new(SimIc::Packed, 5, count, SEED + 2);
    sim.dt = if full { 1e-4 } else { 1e-3 };
    let batch = simulate_samples(&sim)?;
    let k2 = ks_two_sample(&batch.values, &gue5);
    Ok(outcome(
        8,
        !k1.rejects(KS_LEVEL) && !k2.rejects(KS_LEVEL) && table.is_monotone(),
        format!(
            "fredholm vs gue (n=5, t=1): D = {:.4}, p = {:.3}; simulator vs gue (t=5, dt={:.0e}): D = {:.4}, p = {:.3}",
            k1.statistic, k1.p_value, sim.dt, k2.statistic, k2.p_value
        ),
    ))
}

pub fn ldp_convergence(mode: Mode) -> Result<Outcome> {
    let cfg = FredholmConfig::default();
    let a = DeviationParam::new(1.0)?;
    let ts: &[f64] = if mode == Mode::Full {
        &[4.0, 8.0, 16.0]
    } else {
        &[4.0, 8.0]
    };
    let mut checks = Vec::new();
    let mut detail = Vec::new();
    for ic in [InitialCondition::Packed, InitialCondition::Flat] {
        let rows = tail_rate_table(ic, a, ts, &cfg)?;
        let errs: Vec<f64> = rows.iter().map(|r| (r.r_hat - r.r).abs()).collect();
        let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
        let last = rows.last().expect("nonempty");
        let close = (last.r_hat - last.r).abs() <= LDP_REL_TOL * last.r;
        let n = rows.len();
        let drift = (rows[n - 1].scaled - rows[n - 2].scaled).abs() / rows[n - 2].scaled;
        let name = ic.name();
        checks.push((format!("{name} monotone"), decreasing));
        checks.push((format!("{name} r_hat at largest t"), close));
        checks.push((format!("{name} prefactor drift"), drift < PREFACTOR_DRIFT));
        let hats: Vec<String> = rows.iter().map(|r| format!("{:.4}", r.r_hat)).collect();
        detail.push(format!(
            "{}: r = {:.4}, r_hat = [{}], rel err at t={} {:.3}, prefactor drift {:.3}, ratio to closed form {:.5}",
            ic.name(),
            last.r,
            hats.join(", "),
            last.t,
            (last.r_hat - last.r).abs() / last.r,
            drift,
            last.ratio_to_closed_form.unwrap_or(f64::NAN)
        ));
    }
    let failed = checks.into_iter().filter(|c| !c.1).map(|c| c.0).collect();
    Ok(checked(9, detail.join("; "), failed))
}

pub fn stationary_continuation(_mode: Mode) -> Result<Outcome> {
    let cfg = FredholmConfig::default();
    let a = DeviationParam::new(1.0)?;
    let st = prob_stat(4.0, a, default_stat_step(4.0, a), &cfg)?.prob.p;
    let rhos = [0.9, 0.95, 0.99];
    let ps = rhos
        .iter()
        .map(|&r| prob_stat_rho(4.0, a, r, &cfg).map(|x| x.p))
        .collect::<Result<Vec<_>>>()?;
    let gaps: Vec<f64> = ps.iter().map(|p| (p - st).abs()).collect();
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
    Ok(outcome(
        10,
        monotone && gaps[2] <= CONTINUATION_TOL,
        format!(
            "rho=1: {st:.8}; rho=0.9/0.95/0.99: {:.8} / {:.8} / {:.8}; gap at 0.99 = {:.3e} (tol {CONTINUATION_TOL:.0e})",
            ps[0], ps[1], ps[2], gaps[2]
        ),
    ))
}

pub fn simulator_stationarity(mode: Mode) -> Result<Outcome> {
    let full = mode == Mode::Full;
    let mut cfg = SimConfig::new(
        SimIc::Stationary { rho: 1.0 },
        4,
        if full { 1000 } else { 100 },
        SEED + 3,
    );
    cfg.cutoff = 48;
    cfg.dt = if full { 1e-4 } else { 1e-3 };
    let r = stationary_gap_check(&cfg)?;
    let mean_ok = (r.mean_gap - 1.0).abs() <= STD_ERRS * r.stderr;
    Ok(outcome(
        11,
        r.p_value >= KS_LEVEL && mean_ok,
        format!(
            "{} gaps: D = {:.4}, p = {:.3}; mean {:.4} +- {:.4}",
            r.count, r.ks_stat, r.p_value, r.mean_gap, r.stderr
        ),
    ))
}

pub fn mc_vs_fredholm(mode: Mode) -> Result<Outcome> {
    let full = mode == Mode::Full;
    let a = DeviationParam::new(0.5)?;
    let fred = prob_packed(4.0, a, &FredholmConfig::default())?;
    let mut cfg = SimConfig::new(
        SimIc::Packed,
        4,
        if full { 100_000 } else { 10_000 },
        SEED + 4,
    );
    if !full {
        cfg.dt = 1e-3;
    }
    let batch = simulate_samples(&cfg)?;
    let e = tail_from_samples(&batch.values, (2.0 + a.get()) * 4.0);
    let z = (e.p_hat - fred.survival) / e.stderr.max(f64::MIN_POSITIVE);
    Ok(outcome(
        12,
        z.abs() <= STD_ERRS,
        format!(
            "{} reps: p_hat = {:.4e} +- {:.2e}, fredholm {:.4e}, z = {z:.2}",
            e.reps, e.p_hat, e.stderr, fred.survival
        ),
    ))
}

/// In-process repeatability of seeded computations.
pub fn determinism(_mode: Mode) -> Result<Outcome> {
    let run = || -> Result<String> {
        let mut cfg = SimConfig::new(SimIc::Flat, 3, 200, SEED + 5);
        cfg.dt = 1e-3;
        let b = simulate_samples(&cfg)?;
        let g = gue_top_sample(3, 1.0, 200, SEED + 6)?;
        let p = prob_packed(2.0, DeviationParam::new(0.7)?, &FredholmConfig::default())?;
        Ok(format!("{:?}{:?}{:?}", b.values, g, p))
    };
    let (x, y) = (run()?, run()?);
    Ok(outcome(
        13,
        x == y,
        format!("repeated seeded runs identical: {}", x == y),
    ))
}

pub fn run_criterion(id: u8, mode: Mode) -> Result<Outcome> {
    match id {
        1 => lambert_identities(mode),
        2 => saddle_residuals(mode),
        3 => rate_identities(mode),
        4 => rate_asymptotics(mode),
        5 => steep_descent(mode),
        6 => contour_invariance(mode),
        7 => gaussian_reduction(mode),
        8 => gue_cross_validation(mode),
        9 => ldp_convergence(mode),
        10 => stationary_continuation(mode),
        11 => simulator_stationarity(mode),
        12 => mc_vs_fredholm(mode),
        13 => determinism(mode),
        _ => Err(crate::error::Error::invalid(format!("no criterion {id}"))),
    }
}

/// Errors inside a criterion count as failures.
pub fn errored(id: u8, e: &crate::error::Error) -> Outcome {
    outcome(id, false, format!("error: {e}"))
}

pub fn run_all(mode: Mode) -> Vec<Outcome> {
    CRITERIA
        .iter()
        .map(|&(id, _)| run_criterion(id, mode).unwrap_or_else(|e| errored(id, &e)))
        .collect()
}

pub fn format_line(o: &Outcome) -> String {
    format!(
        "{} criterion {:>2} {}: {}",
        if o.passed { "PASS" } else { "FAIL" },
        o.id,
        o.name,
        o.detail
    )
}
