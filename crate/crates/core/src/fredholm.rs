//! Fredholm determinants `det(1 - P_s K P_s)` on `L^2(s, inf)` by Nyström
//! discretisation and the one-point probabilities built from them.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::contour::{build_circle, ContourConfig, ContourRole};
use crate::error::{Error, Result};
use crate::kernel::{
    flat_kernel, klimit, packed_kernel, packed_saddle_ratio, raw_packed_kernel, ExpSum,
    SeparableKernel, StatContours, IM_TOLERANCE,
};
use crate::saddle::{
    packed_saddles, phase_packed, rate, rate_flat, DeviationParam, InitialCondition,
};

/// Gauss-Legendre nodes in `u in (0, 1)` mapped to `xi = s - log(1 - u)/d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadGrid {
    pub s: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub decay_rate: f64,
    pub size: usize,
}

impl QuadGrid {
    pub fn exp_decay(s: f64, decay_rate: f64, size: usize) -> Result<Self> {
        if size < 8 {
            return Err(Error::invalid(format!(
                "grid size must be >= 8, got {size}"
            )));
        }
        if !(decay_rate.is_finite() && decay_rate > 0.0 && s.is_finite()) {
            return Err(Error::invalid(format!(
                "bad grid: s = {s}, decay rate = {decay_rate}"
            )));
        }
        let rule = GaussLegendre::new(NonZeroUsize::new(size).expect("size >= 8"));
        let mut pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut nodes = Vec::with_capacity(size);
        let mut weights = Vec::with_capacity(size);
        for (x, w) in pairs {
            // 1 - u = (1 - x)/2 without forming u
            let one_minus_u = 0.5 * (1.0 - x);
            nodes.push(s - one_minus_u.ln() / decay_rate);
            weights.push(0.5 * w / (decay_rate * one_minus_u));
        }
        Ok(QuadGrid {
            s,
            nodes,
            weights,
            decay_rate,
            size,
        })
    }

    pub fn doubled(&self) -> Result<Self> {
        QuadGrid::exp_decay(self.s, self.decay_rate, 2 * self.size)
    }

    pub fn shifted(&self, s: f64) -> Result<Self> {
        QuadGrid::exp_decay(s, self.decay_rate, self.size)
    }

    pub fn max_node(&self) -> f64 {
        *self.nodes.last().unwrap_or(&self.s)
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// `det(I - M)` together with `1 - det(I - M)` computed without cancellation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetParts {
    pub det: f64,
    pub survival: f64,
}

impl DetParts {
    pub fn log_survival(&self) -> f64 {
        self.survival.ln()
    }
}

fn ln_one_minus(l: Complex64) -> Complex64 {
    if l.norm() < 1e-4 {
        let (l2, l3) = (l * l, l * l * l);
        -(l + l2 / 2.0 + l3 / 3.0 + l2 * l2 / 4.0)
    } else {
        (1.0 - l).ln()
    }
}

/// Determinant of `I - m`. Small matrices (`|m|_F < 1/2`) go through
/// `log det = sum log(1 - lambda)` so that `1 - det` keeps full relative
/// precision when it is tiny; otherwise LU.
pub fn det_i_minus(m: &DMatrix<f64>) -> Result<DetParts> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite entry in Nyström matrix"));
    }
    let n = m.nrows();
    if m.norm() < 0.5 {
        let eig = m.clone().complex_eigenvalues();
        let logdet: Complex64 = eig.iter().map(|&l| ln_one_minus(l)).sum();
        let det = logdet.re.exp();
        return Ok(DetParts {
            det,
            survival: -logdet.re.exp_m1(),
        });
    }
    let det = (DMatrix::<f64>::identity(n, n) - m).lu().determinant();
    Ok(DetParts {
        det,
        survival: 1.0 - det,
    })
}

/// `det(I - W^{1/2} K W^{1/2})` for a pointwise kernel on the grid.
pub fn nystrom_det(kernel: impl Fn(f64, f64) -> f64, grid: &QuadGrid) -> Result<f64> {
    let n = grid.size;
    let m = DMatrix::from_fn(n, n, |i, j| {
        (grid.weights[i] * grid.weights[j]).sqrt() * kernel(grid.nodes[i], grid.nodes[j])
    });
    Ok(det_i_minus(&m)?.det)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FredholmConfig {
    pub contour: ContourConfig,
    pub grid_size: usize,
    pub max_grid_size: usize,
    /// Accept when `|p(2N) - p(N)|` is below this ...
    pub p_tol: f64,
    /// ... and `|log_survival(2N) - log_survival(N)|` below this.
    pub log_tol: f64,
}

impl Default for FredholmConfig {
    fn default() -> Self {
        FredholmConfig {
            contour: ContourConfig::default(),
            grid_size: 48,
            max_grid_size: 768,
            p_tol: 1e-9,
            log_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbResult {
    /// `P(x <= level)`.
    pub p: f64,
    /// `1 - p`.
    pub survival: f64,
    pub log_survival: f64,
    pub im_residue: f64,
    pub refinement_delta: f64,
    pub grid_size: usize,
    pub decay_rate: f64,
}

fn check_t(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("t must be finite and > 0, got {t}")))
    }
}

fn clamp_p(p: f64, survival: f64) -> Result<(f64, f64)> {
    if !p.is_finite() || !survival.is_finite() {
        return Err(Error::numeric("probability is not finite"));
    }
    if !(-1e-9..=1.0 + 1e-9).contains(&p) || survival < -1e-9 {
        return Err(Error::numeric(format!("probability {p} outside [0, 1]")));
    }
    if !(0.0..=1.0).contains(&p) || survival < 0.0 {
        warn!("clamping probability {p} into [0, 1]");
    }
    // + 0.0 turns -0.0 into 0.0
    Ok((p.clamp(0.0, 1.0) + 0.0, survival.clamp(0.0, 1.0) + 0.0))
}

/// Evaluate `eval(grid)` on grids of growing size until two consecutive
/// results agree.
fn refine(
    s: f64,
    decay_rate: f64,
    cfg: &FredholmConfig,
    eval: impl Fn(&QuadGrid) -> Result<(f64, f64, f64)>,
) -> Result<ProbResult> {
    let mut grid = QuadGrid::exp_decay(s, decay_rate, cfg.grid_size)?;
    let (mut p, mut surv, mut im) = eval(&grid)?;
    loop {
        let next = grid.doubled()?;
        if next.size > cfg.max_grid_size {
            return Err(Error::numeric(format!(
                "Fredholm determinant not converged at grid size {} (p = {p}, survival = {surv:e})",
                grid.size
            )));
        }
        let (p2, surv2, im2) = eval(&next)?;
        let dp = (p2 - p).abs();
        let dlog = if surv > 0.0 && surv2 > 0.0 {
            (surv2.ln() - surv.ln()).abs()
        } else {
            (surv2 - surv).abs()
        };
        debug!(
            "grid {} -> {}: dp = {dp:e}, dlog = {dlog:e}",
            grid.size, next.size
        );
        grid = next;
        p = p2;
        surv = surv2;
        im = im.max(im2);
        if dp < cfg.p_tol && dlog < cfg.log_tol {
            let (p, survival) = clamp_p(p, surv)?;
            return Ok(ProbResult {
                p,
                survival,
                log_survival: survival.ln(),
                im_residue: im,
                refinement_delta: dp,
                grid_size: grid.size,
                decay_rate,
            });
        }
    }
}

fn check_im(im: f64, scale: f64) -> Result<()> {
    if im > IM_TOLERANCE * (1.0 + scale) {
        return Err(Error::numeric(format!(
            "kernel matrix imaginary residue {im:e} too large"
        )));
    }
    Ok(())
}

fn kernel_det(kernel: &SeparableKernel, grid: &QuadGrid) -> Result<(DetParts, f64)> {
    let (m, im) = kernel.weighted_matrix(&grid.nodes, &grid.weights);
    check_im(im, m.amax())?;
    Ok((det_i_minus(&m)?, im))
}

/// Kernel-independent part of the grid decay: a quarter of the slowest
/// diagonal decay keeps the mapped integrand smooth at `u = 1`.
const DECAY_FRACTION: f64 = 0.25;

fn packed_decay(a: DeviationParam) -> f64 {
    let (wm, wp) = packed_saddles(a);
    DECAY_FRACTION * (wp - wm)
}

/// `P(x_t(t) <= (2 + a) t + s)` for packed initial data.
pub fn prob_packed_at(
    t: f64,
    a: DeviationParam,
    s: f64,
    cfg: &FredholmConfig,
) -> Result<ProbResult> {
    check_t(t)?;
    refine(s, packed_decay(a), cfg, |grid| {
        let k = packed_kernel(a, t, grid.max_node().max(s.abs()), &cfg.contour)?;
        let (d, im) = kernel_det(&k, grid)?;
        Ok((d.det, d.survival, im))
    })
}

/// `P(x_t(t) <= (2 + a) t)` for packed initial data.
pub fn prob_packed(t: f64, a: DeviationParam, cfg: &FredholmConfig) -> Result<ProbResult> {
    prob_packed_at(t, a, 0.0, cfg)
}

/// `P(x_n(t) <= s)` for packed initial data, any `n >= 0` and level `s`.
pub fn prob_packed_raw(n: u32, t: f64, s: f64, cfg: &FredholmConfig) -> Result<ProbResult> {
    check_t(t)?;
    if !s.is_finite() {
        return Err(Error::invalid(format!("level must be finite, got {s}")));
    }
    let d = 0.5 / t.sqrt();
    refine(s, d, cfg, |grid| {
        let k = raw_packed_kernel(n, t, s, grid.max_node(), &cfg.contour)?;
        let (det, im) = kernel_det(&k, grid)?;
        Ok((det.det, det.survival, im))
    })
}

fn flat_decay(a: DeviationParam) -> Result<f64> {
    let d = rate_flat(a)?;
    Ok(DECAY_FRACTION * (d.saddle_hi - d.saddle_lo))
}

/// `P(x_t(t) <= (2 + a) t + s)` for flat initial data.
pub fn prob_flat_at(t: f64, a: DeviationParam, s: f64, cfg: &FredholmConfig) -> Result<ProbResult> {
    check_t(t)?;
    refine(s, flat_decay(a)?, cfg, |grid| {
        let k = flat_kernel(
            a,
            t,
            grid.max_node().max(s.abs()),
            cfg.contour.tau_max,
            &cfg.contour,
        )?;
        let (d, im) = kernel_det(&k, grid)?;
        Ok((d.det, d.survival, im))
    })
}

pub fn prob_flat(t: f64, a: DeviationParam, cfg: &FredholmConfig) -> Result<ProbResult> {
    prob_flat_at(t, a, 0.0, cfg)
}

fn exp_sum_on(e: &ExpSum, grid: &QuadGrid, sign: f64) -> Result<DVector<f64>> {
    let mut im = 0.0f64;
    let v = DVector::from_iterator(
        grid.size,
        grid.nodes.iter().zip(&grid.weights).map(|(&x, &w)| {
            let c: Complex64 = e
                .coeffs
                .iter()
                .zip(&e.rates)
                .map(|(&c, &r)| c * (sign * r * x).exp())
                .sum();
            im = im.max(c.im.abs());
            w.sqrt() * c.re
        }),
    );
    check_im(im, v.amax())?;
    Ok(v)
}

/// Pieces of the determinant expression at one level offset.
struct RankOne {
    det: f64,
    /// `<(I - K)^{-1} f, g>` on the grid.
    pairing: f64,
}

fn rank_one(
    kernel: &SeparableKernel,
    grid: &QuadGrid,
    f: &DVector<f64>,
    g: &DVector<f64>,
) -> Result<RankOne> {
    let (m, im) = kernel.weighted_matrix(&grid.nodes, &grid.weights);
    check_im(im, m.amax())?;
    let n = grid.size;
    let lu = (DMatrix::<f64>::identity(n, n) - m).lu();
    let det = lu.determinant();
    let y = lu
        .solve(f)
        .ok_or_else(|| Error::numeric("I - K is singular on the Nyström grid"))?;
    Ok(RankOne {
        det,
        pairing: g.dot(&y),
    })
}

/// Stationary determinant expression and its two summands:
/// `D(s) = F(s) det(I - K) + det(I - K - f*_s (x) g_1)`.
#[derive(Debug, Clone, Copy)]
struct StatD {
    first: f64,
    second: f64,
}

fn stat_d(sc: &StatContours, kernel: &SeparableKernel, s: f64, grid: &QuadGrid) -> Result<StatD> {
    let comp = sc.components(s);
    let f = exp_sum_on(&comp.f_star, grid, 1.0)?;
    let mut g = exp_sum_on(&comp.g_one_tail, grid, 1.0)?;
    for (gi, &w) in g.iter_mut().zip(&grid.weights) {
        *gi += w.sqrt();
    }
    let r1 = rank_one(kernel, grid, &f, &g)?;
    Ok(StatD {
        first: comp.f_hat_t * r1.det,
        second: r1.det * (1.0 - r1.pairing),
    })
}

/// Stationary probability with the split of the derivative into its two
/// summands.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatProbResult {
    pub prob: ProbResult,
    /// `d/ds [F(s) det(I - K)]` at `s = 0`.
    pub first_summand_deriv: f64,
    /// `d/ds det(I - K - f*_s (x) g_1)` at `s = 0`.
    pub second_summand_deriv: f64,
    pub step: f64,
}

/// Central difference with one Richardson step; `f` returns a vector of
/// values whose derivatives are all wanted.
fn richardson<const N: usize>(
    h: f64,
    f: impl Fn(f64) -> Result<[f64; N]>,
) -> Result<([f64; N], f64)> {
    let (p1, m1, p2, m2) = (f(h)?, f(-h)?, f(2.0 * h)?, f(-2.0 * h)?);
    let mut out = [0.0; N];
    let mut disagreement = 0.0f64;
    for i in 0..N {
        let d1 = (p1[i] - m1[i]) / (2.0 * h);
        let d2 = (p2[i] - m2[i]) / (4.0 * h);
        out[i] = (4.0 * d1 - d2) / 3.0;
        disagreement = disagreement.max((out[i] - d1).abs());
    }
    Ok((out, disagreement))
}

/// Tolerated disagreement between the plain and extrapolated differences.
pub const RICHARDSON_TOL: f64 = 1e-5;

/// `P(x_t(t) <= (2 + a) t)` for stationary (`rho = 1`) initial data,
/// `d/ds D(s)` at `s = 0` by finite differences with step `h`.
pub fn prob_stat(
    t: f64,
    a: DeviationParam,
    h: f64,
    cfg: &FredholmConfig,
) -> Result<StatProbResult> {
    check_t(t)?;
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid(format!(
            "finite-difference step must be > 0, got {h}"
        )));
    }
    let (wm, _) = packed_saddles(a);
    let decay = DECAY_FRACTION * (packed_decay(a) / DECAY_FRACTION).min(-wm - 1.0);
    let eval = |size: usize| -> Result<([f64; 3], f64)> {
        let grid0 = QuadGrid::exp_decay(0.0, decay, size)?;
        let sc = StatContours::new(a, t, 1.0, grid0.max_node() + 4.0 * h, &cfg.contour)?;
        let kernel = sc.kernel()?;
        richardson(h, |s| {
            let d = stat_d(&sc, &kernel, s, &grid0.shifted(s)?)?;
            Ok([d.first + d.second, d.first, d.second])
        })
    };
    let mut size = cfg.grid_size;
    let (mut v, _) = eval(size)?;
    loop {
        if 2 * size > cfg.max_grid_size {
            return Err(Error::numeric(format!(
                "stationary determinant not converged at grid size {size}"
            )));
        }
        let (v2, dis2) = eval(2 * size)?;
        let dp = (v2[0] - v[0]).abs();
        size *= 2;
        let done = dp < cfg.p_tol.max(1e-8);
        v = v2;
        if done {
            let dis = dis2;
            if dis > RICHARDSON_TOL {
                return Err(Error::numeric(format!(
                    "finite-difference step {h} unstable (Richardson disagreement {dis:e})"
                )));
            }
            let (p, survival) = clamp_p(v[0], 1.0 - v[0])?;
            return Ok(StatProbResult {
                prob: ProbResult {
                    p,
                    survival,
                    log_survival: survival.ln(),
                    im_residue: 0.0,
                    refinement_delta: dp,
                    grid_size: size,
                    decay_rate: decay,
                },
                first_summand_deriv: v[1],
                second_summand_deriv: v[2],
                step: h,
            });
        }
    }
}

/// Default finite-difference step `1e-3 (1 + a t)`.
pub fn default_stat_step(t: f64, a: DeviationParam) -> f64 {
    1e-3 * (1.0 + a.get() * t)
}

/// Residue circle around `-rho` used for `Gamma_{0,-rho}`.
fn residue_circle(rho: f64, inner: f64) -> Result<crate::contour::ContourPath> {
    let r = 0.5 * (rho - inner).min(1.0 - rho);
    build_circle(-rho, r, 65, ContourRole::ResidueCircle)
}

/// `g_rho` as an exponential sum in `xi` (`exp(xi * rate)`), from the
/// `gamma_+` part and the residue circle.
fn g_rho_sum(
    sc: &StatContours,
    a: DeviationParam,
    t: f64,
    rho: f64,
    extra: impl Fn(Complex64) -> Complex64,
) -> Result<ExpSum> {
    let mut out = ExpSum::default();
    for (&z, &c) in sc.circle.nodes.iter().zip(&sc.circle_coef) {
        out.coeffs.push(c * extra(z) / (z + rho));
        out.rates.push(-(z + 1.0));
    }
    let inner = sc.circle.nodes[0].norm();
    let rc = residue_circle(rho, inner)?;
    for (&z, &dz) in rc.nodes.iter().zip(&rc.weights) {
        let c =
            dz * (-t * phase_packed(z, a)?).exp() / Complex64::new(0.0, 2.0 * std::f64::consts::PI);
        out.coeffs.push(c * extra(z) / (z + rho));
        out.rates.push(-(z + 1.0));
    }
    Ok(out)
}

/// `(1/2 pi i) oint_{Gamma_{0,-rho}} exp(-t H(z) - xi (z+1)) / (z + rho) dz`.
pub fn g_rho(a: DeviationParam, t: f64, rho: f64, xi: f64, cfg: &ContourConfig) -> Result<f64> {
    let sc = rho_contours(a, t, rho, xi.abs() + 1.0, cfg)?;
    Ok(g_rho_sum(&sc, a, t, rho, |_| Complex64::new(1.0, 0.0))?
        .eval(xi)
        .re)
}

/// Residue-circle part of `g_rho` alone (equals `exp(-t H(-rho) - xi (1 - rho))`).
pub fn g_rho_residue(a: DeviationParam, t: f64, rho: f64, xi: f64) -> Result<f64> {
    let (_, wp) = packed_saddles(a);
    let rc = residue_circle(rho, wp.abs().min(0.8 * rho))?;
    let v: Complex64 = rc
        .nodes
        .iter()
        .zip(&rc.weights)
        .map(|(&z, &dz)| Ok(dz * (-t * phase_packed(z, a)? - xi * (z + 1.0)).exp() / (z + rho)))
        .sum::<Result<Complex64>>()?;
    Ok((v / Complex64::new(0.0, 2.0 * std::f64::consts::PI)).re)
}

fn rho_contours(
    a: DeviationParam,
    t: f64,
    rho: f64,
    xi_max: f64,
    cfg: &ContourConfig,
) -> Result<StatContours> {
    let (_, wp) = packed_saddles(a);
    let scale = if wp.abs() > 0.8 * rho {
        warn!(
            "shrinking gamma_+ below |w_+| = {} to keep -rho = {} outside",
            wp.abs(),
            -rho
        );
        0.8 * rho / wp.abs()
    } else {
        1.0
    };
    StatContours::new(a, t, scale, xi_max, cfg)
}

/// `P(x_t(t) <= (2 + a) t)` for the stationary system of density `rho < 1`:
/// `(1 + (1/(1 - rho)) d/ds) det(I - K - (1 - rho) f (x) g_rho)` at `s = 0`.
pub fn prob_stat_rho(
    t: f64,
    a: DeviationParam,
    rho: f64,
    cfg: &FredholmConfig,
) -> Result<ProbResult> {
    check_t(t)?;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid(format!("rho must lie in (0, 1), got {rho}")));
    }
    let delta = 1.0 - rho;
    let h = default_stat_step(t, a);
    let (wm, _) = packed_saddles(a);
    let decay = DECAY_FRACTION * (packed_decay(a) / DECAY_FRACTION).min(-wm - 1.0);
    let eval = |size: usize| -> Result<(f64, f64)> {
        let grid0 = QuadGrid::exp_decay(0.0, decay, size)?;
        let sc = rho_contours(a, t, rho, grid0.max_node() + 4.0 * h, &cfg.contour)?;
        let kernel = sc.kernel()?;
        let g_sum = g_rho_sum(&sc, a, t, rho, |_| Complex64::new(1.0, 0.0))?;
        let d = |s: f64| -> Result<[f64; 1]> {
            let grid = grid0.shifted(s)?;
            // <1, g_rho>_s = oint exp(-t H - s(z+1)) / ((z+1)(z+rho))
            let one_g = g_rho_sum(&sc, a, t, rho, |z| (-s * (z + 1.0)).exp() / (z + 1.0))?;
            let one_g: Complex64 = one_g.coeffs.iter().sum();
            let f = exp_sum_on(&sc.f_star(s), &grid, 1.0)?;
            let g = exp_sum_on(&g_sum, &grid, 1.0)?;
            let r1 = rank_one(&kernel, &grid, &f, &g)?;
            Ok([r1.det * (1.0 - delta * (one_g.re + r1.pairing))])
        };
        let (dd, dis) = richardson(h, d)?;
        if dis > RICHARDSON_TOL {
            return Err(Error::numeric(format!(
                "finite-difference step {h} unstable (Richardson disagreement {dis:e})"
            )));
        }
        Ok((d(0.0)?[0] + dd[0] / delta, dis))
    };
    let mut size = cfg.grid_size;
    let (mut p, _) = eval(size)?;
    loop {
        if 2 * size > cfg.max_grid_size {
            return Err(Error::numeric(format!(
                "rho-stationary determinant not converged at grid size {size}"
            )));
        }
        let (p2, _) = eval(2 * size)?;
        let dp = (p2 - p).abs();
        size *= 2;
        p = p2;
        if dp < cfg.p_tol.max(1e-8) {
            let (p, survival) = clamp_p(p, 1.0 - p)?;
            return Ok(ProbResult {
                p,
                survival,
                log_survival: survival.ln(),
                im_residue: 0.0,
                refinement_delta: dp,
                grid_size: size,
                decay_rate: decay,
            });
        }
    }
}

/// Probability `P(x_t(t) <= (2 + a) t)` for any initial condition.
pub fn prob(
    ic: InitialCondition,
    t: f64,
    a: DeviationParam,
    cfg: &FredholmConfig,
) -> Result<ProbResult> {
    match ic {
        InitialCondition::Packed => prob_packed(t, a, cfg),
        InitialCondition::Flat => prob_flat(t, a, cfg),
        InitialCondition::Stationary => Ok(prob_stat(t, a, default_stat_step(t, a), cfg)?.prob),
    }
}

/// `P(x_n(t) <= s)` for packed data tabulated on an even `s`-grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdfTable {
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
}

impl CdfTable {
    pub fn packed_raw(
        n: u32,
        t: f64,
        lo: f64,
        hi: f64,
        points: usize,
        cfg: &FredholmConfig,
    ) -> Result<Self> {
        if points < 2 || !(hi > lo) {
            return Err(Error::invalid(
                "CDF table needs >= 2 points on a nonempty range",
            ));
        }
        let levels: Vec<f64> = (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect();
        let values = levels
            .par_iter()
            .map(|&s| prob_packed_raw(n, t, s, cfg).map(|r| r.p))
            .collect::<Result<Vec<_>>>()?;
        Ok(CdfTable { levels, values })
    }

    /// Linear interpolation, 0 and 1 outside the table.
    pub fn cdf(&self, s: f64) -> f64 {
        let (lo, hi) = (self.levels[0], *self.levels.last().expect("nonempty"));
        if s <= lo {
            return 0.0;
        }
        if s >= hi {
            return 1.0;
        }
        let h = (hi - lo) / (self.levels.len() - 1) as f64;
        let i = (((s - lo) / h) as usize).min(self.levels.len() - 2);
        let u = (s - self.levels[i]) / h;
        self.values[i] + u * (self.values[i + 1] - self.values[i])
    }

    pub fn is_monotone(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailRow {
    pub t: f64,
    pub survival: f64,
    pub log_survival: f64,
    /// `-log_survival / t`.
    pub r_hat: f64,
    pub r: f64,
    /// `t e^{t r} survival` (packed), `sqrt(t) e^{t r} survival` (flat),
    /// `e^{t r} survival` (stationary).
    pub scaled: f64,
    /// Log-survival predicted from the large-`t` prefactor, where known.
    pub predicted_log_survival: Option<f64>,
    /// `scaled` divided by the closed-form prefactor constant, where known.
    pub ratio_to_closed_form: Option<f64>,
}

/// `t -> (-log P(x_t(t) > (2 + a) t)/t, ...)` for increasing `t`.
pub fn tail_rate_table(
    ic: InitialCondition,
    a: DeviationParam,
    ts: &[f64],
    cfg: &FredholmConfig,
) -> Result<Vec<TailRow>> {
    if ts.is_empty() || ts.windows(2).any(|w| w[1] <= w[0]) || ts[0] <= 0.0 {
        return Err(Error::invalid(
            "t values must be positive and strictly increasing",
        ));
    }
    let r = rate(ic, a)?;
    let closed_form = match ic {
        InitialCondition::Stationary => None,
        _ => Some(klimit(ic, a)?.diagonal_integral()),
    };
    ts.par_iter()
        .map(|&t| {
            let res = prob(ic, t, a, cfg)?;
            let (scale_log, sd_constant) = match ic {
                InitialCondition::Packed => {
                    (t.ln(), closed_form.map(|c| c * packed_saddle_ratio()))
                }
                InitialCondition::Flat => (0.5 * t.ln(), closed_form),
                InitialCondition::Stationary => (0.0, None),
            };
            let scaled = (scale_log + t * r + res.log_survival).exp();
            Ok(TailRow {
                t,
                survival: res.survival,
                log_survival: res.log_survival,
                r_hat: -res.log_survival / t,
                r,
                scaled,
                predicted_log_survival: sd_constant.map(|c| c.ln() - scale_log - t * r),
                ratio_to_closed_form: closed_form.map(|c| scaled / c),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn dp(a: f64) -> DeviationParam {
        DeviationParam::new(a).unwrap()
    }

    #[test]
    fn grid_integrates_exponentials() {
        let g = QuadGrid::exp_decay(0.5, 1.0, 48).unwrap();
        let v = g.integrate(|x| (-2.0 * x).exp());
        assert!((v - (-1.0f64).exp() / 2.0).abs() < 1e-12);
        assert!(g.nodes.windows(2).all(|w| w[0] < w[1]) && g.nodes[0] > 0.5);
        assert!(g.weights.iter().all(|&w| w > 0.0));
        assert!(QuadGrid::exp_decay(0.0, 1.0, 4).is_err());
    }

    #[test]
    fn determinant_oracles() {
        let g = QuadGrid::exp_decay(0.0, 1.0, 48).unwrap();
        assert_eq!(nystrom_det(|_, _| 0.0, &g).unwrap(), 1.0);
        // rank one u(x) v(y): det = 1 - int u v
        let (u, v) = (|x: f64| 0.7 * (-1.5 * x).exp(), |y: f64| (-0.5 * y).exp());
        let d = nystrom_det(|x, y| u(x) * v(y), &g).unwrap();
        assert!((d - (1.0 - 0.7 / 2.0)).abs() < 1e-13);
        // tiny kernels keep relative precision in 1 - det
        let m = DMatrix::from_fn(5, 5, |i, j| 1e-14 * ((i + 1) * (j + 2)) as f64 / 30.0);
        let parts = det_i_minus(&m).unwrap();
        let tr: f64 = (0..5).map(|i| m[(i, i)]).sum();
        assert!((parts.survival - tr).abs() < 1e-10 * tr);
    }

    #[test]
    fn lowest_particle_is_gaussian() {
        let cfg = FredholmConfig::default();
        let n01 = Normal::new(0.0, 1.0).unwrap();
        for &(t, x) in &[(1.0, -2.0), (1.0, 0.3), (2.0, 1.7)] {
            let s = x * f64::sqrt(t);
            let r = prob_packed_raw(1, t, s, &cfg).unwrap();
            assert!(
                (r.p - n01.cdf(x)).abs() < 1e-9,
                "t={t} x={x}: {} vs {}",
                r.p,
                n01.cdf(x)
            );
            assert_eq!(prob_packed_raw(0, t, s, &cfg).unwrap().p, 1.0);
        }
    }

    #[test]
    fn packed_probability_is_monotone() {
        let cfg = FredholmConfig::default();
        let p1 = prob_packed_at(4.0, dp(0.5), -0.5, &cfg).unwrap();
        let p2 = prob_packed_at(4.0, dp(0.5), 0.0, &cfg).unwrap();
        let p3 = prob_packed_at(4.0, dp(0.5), 0.5, &cfg).unwrap();
        assert!(0.0 < p1.p && p1.p < p2.p && p2.p < p3.p && p3.p < 1.0);
        let hi = prob_packed(4.0, dp(8.0), &cfg).unwrap();
        assert!(hi.p > 1.0 - 1e-12);
    }

    #[test]
    fn scaled_matches_raw_determinant() {
        let cfg = FredholmConfig::default();
        let (t, a) = (4.0, dp(0.5));
        let hat = prob_packed(t, a, &cfg).unwrap();
        let raw = prob_packed_raw(4, t, (2.0 + a.get()) * t, &cfg).unwrap();
        assert!((hat.p - raw.p).abs() < 1e-8, "{} vs {}", hat.p, raw.p);
    }

    #[test]
    fn flat_probability_monotone_in_a() {
        let cfg = FredholmConfig::default();
        let p10 = prob_flat(8.0, dp(1.0), &cfg).unwrap();
        let p12 = prob_flat(8.0, dp(1.2), &cfg).unwrap();
        assert!(p12.p > p10.p && p10.survival > 0.0);
    }

    #[test]
    fn g_rho_residue_circle_matches_residue() {
        let a = dp(1.0);
        for &(t, rho, xi) in &[(2.0, 0.5, 0.3), (4.0, 0.95, 1.0)] {
            let num = g_rho_residue(a, t, rho, xi).unwrap();
            let h = phase_packed(Complex64::new(-rho, 0.0), a).unwrap().re;
            let exact = (-t * h - xi * (1.0 - rho)).exp();
            assert!((num - exact).abs() < 1e-12 * exact, "{num} vs {exact}");
        }
    }

    #[test]
    fn stationary_rho_approaches_one() {
        let cfg = FredholmConfig::default();
        let (t, a) = (4.0, dp(1.0));
        let st = prob_stat(t, a, default_stat_step(t, a), &cfg).unwrap();
        assert!((st.first_summand_deriv + st.second_summand_deriv - st.prob.p).abs() < 1e-9);
        let mut last = f64::INFINITY;
        for rho in [0.9, 0.99, 0.999] {
            let gap = (prob_stat_rho(t, a, rho, &cfg).unwrap().p - st.prob.p).abs();
            assert!(gap < last, "rho = {rho}: gap {gap}");
            last = gap;
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn stationary_tail_exceeds_flat_and_packed() {
        let cfg = FredholmConfig::default();
        let (t, a) = (4.0, dp(1.0));
        let st = prob(InitialCondition::Stationary, t, a, &cfg).unwrap();
        let fl = prob(InitialCondition::Flat, t, a, &cfg).unwrap();
        let pk = prob(InitialCondition::Packed, t, a, &cfg).unwrap();
        assert!(st.survival > fl.survival && fl.survival > pk.survival);
        assert!(prob_stat_rho(t, a, 1.0, &cfg)
            .unwrap_err()
            .is_invalid_argument());
    }
}
