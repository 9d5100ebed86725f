//! Contour-quadrature kernels.
//!
//! After discretising the contours every kernel used here is a finite sum of
//! exponentials,
//!
//! `K(x, y) = sum_j sum_k a_j exp(x alpha_j) C_jk b_k exp(-y beta_k)`,
//!
//! where `C_jk = 1/(w_j - z_k)` for double contour integrals and
//! `C = identity` for the single-contour flat kernel. Storing the kernel this
//! way makes Nyström matrices two (complex) matrix products.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::contour::{
    build_circle, build_line, circle_node_count, flat_contour_with, line_step,
    packed_contours_with, ContourConfig, ContourPath, ContourRole,
};
use crate::error::{Error, Result};
use crate::saddle::{
    flat_eta, packed_saddles, phase_flat_complex, phase_packed, phase_packed_real, rate_flat,
    rate_packed, DeviationParam, InitialCondition,
};

const TWO_PI_I: Complex64 = Complex64::new(0.0, 2.0 * PI);

/// Relative imaginary residue above which an evaluation is rejected.
pub const IM_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEval {
    pub value: f64,
    pub im_residue: f64,
    pub refinement_delta: f64,
}

/// `sum_j c_j exp(x r_j)`.
#[derive(Debug, Clone, Default)]
pub struct ExpSum {
    pub coeffs: Vec<Complex64>,
    pub rates: Vec<Complex64>,
}

impl ExpSum {
    pub fn eval(&self, x: f64) -> Complex64 {
        self.coeffs
            .iter()
            .zip(&self.rates)
            .map(|(&c, &r)| c * (r * x).exp())
            .sum()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

#[derive(Debug, Clone)]
enum Coupling {
    Diagonal,
    Cauchy {
        w: Vec<Complex64>,
        z: Vec<Complex64>,
    },
}

#[derive(Debug, Clone)]
pub struct SeparableKernel {
    /// `(a_j, alpha_j)`.
    left: ExpSum,
    /// `(b_k, beta_k)`; the kernel uses `exp(-y beta_k)`.
    right: ExpSum,
    coupling: Coupling,
}

impl SeparableKernel {
    /// Kernel identically zero.
    pub fn zero() -> Self {
        SeparableKernel {
            left: ExpSum::default(),
            right: ExpSum::default(),
            coupling: Coupling::Diagonal,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.left.is_empty()
    }

    /// Number of (left, right) terms.
    pub fn terms(&self) -> (usize, usize) {
        (self.left.len(), self.right.len())
    }

    pub fn eval_complex(&self, x: f64, y: f64) -> Complex64 {
        if self.is_zero() {
            return Complex64::new(0.0, 0.0);
        }
        let l: Vec<Complex64> = (0..self.left.len())
            .map(|j| self.left.coeffs[j] * (self.left.rates[j] * x).exp())
            .collect();
        let r: Vec<Complex64> = (0..self.right.len())
            .map(|k| self.right.coeffs[k] * (-self.right.rates[k] * y).exp())
            .collect();
        match &self.coupling {
            Coupling::Diagonal => l.iter().zip(&r).map(|(a, b)| a * b).sum(),
            Coupling::Cauchy { w, z } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, lj) in l.iter().enumerate() {
                    let inner: Complex64 = r.iter().zip(z).map(|(rk, zk)| rk / (w[j] - zk)).sum();
                    acc += lj * inner;
                }
                acc
            }
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> KernelEval {
        let v = self.eval_complex(x, y);
        KernelEval {
            value: v.re,
            im_residue: v.im.abs(),
            refinement_delta: 0.0,
        }
    }

    /// `D^{1/2} K(x_i, x_j) D^{1/2}` with `D = diag(weights)`, together with
    /// the largest discarded imaginary part.
    pub fn weighted_matrix(&self, xs: &[f64], weights: &[f64]) -> (DMatrix<f64>, f64) {
        let n = xs.len();
        if self.is_zero() {
            return (DMatrix::zeros(n, n), 0.0);
        }
        let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
        let (nl, nr) = self.terms();
        let e1 = DMatrix::from_fn(n, nl, |i, j| {
            self.left.coeffs[j] * (self.left.rates[j] * xs[i]).exp() * sw[i]
        });
        let e2 = DMatrix::from_fn(nr, n, |k, l| {
            self.right.coeffs[k] * (-self.right.rates[k] * xs[l]).exp() * sw[l]
        });
        let m = match &self.coupling {
            Coupling::Diagonal => e1 * e2,
            Coupling::Cauchy { w, z } => {
                let c = DMatrix::from_fn(nl, nr, |j, k| (w[j] - z[k]).inv());
                e1 * (c * e2)
            }
        };
        let im = m.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        (m.map(|v| v.re), im)
    }
}

fn check_t(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("t must be finite and > 0, got {t}")))
    }
}

/// Packed kernel `K_hat` (conjugated, LDP-scaled) on the given contours:
/// `a_j = dw_j exp(t H(w_j)) / (2 pi i)`, `alpha_j = w_j + 1`,
/// `b_k = dz_k exp(-t H(z_k)) / (2 pi i)`, `beta_k = z_k + 1`.
pub fn packed_kernel_on(
    a: DeviationParam,
    t: f64,
    line: &ContourPath,
    circle: &ContourPath,
) -> Result<SeparableKernel> {
    check_t(t)?;
    let mut left = ExpSum::default();
    for (&w, &dw) in line.nodes.iter().zip(&line.weights) {
        let c = dw * (t * phase_packed(w, a)?).exp() / TWO_PI_I;
        if c.norm() > 0.0 {
            left.coeffs.push(c);
            left.rates.push(w + 1.0);
        }
    }
    let mut right = ExpSum::default();
    for (&z, &dz) in circle.nodes.iter().zip(&circle.weights) {
        right
            .coeffs
            .push(dz * (-t * phase_packed(z, a)?).exp() / TWO_PI_I);
        right.rates.push(z + 1.0);
    }
    let w = left.rates.iter().map(|r| r - 1.0).collect();
    Ok(SeparableKernel {
        left,
        right,
        coupling: Coupling::Cauchy {
            w,
            z: circle.nodes.clone(),
        },
    })
}

/// Packed kernel with contours sized for arguments `|xi| <= xi_max`.
pub fn packed_kernel(
    a: DeviationParam,
    t: f64,
    xi_max: f64,
    cfg: &ContourConfig,
) -> Result<SeparableKernel> {
    let (line, circle) = packed_contours_with(a, t, 1.0, xi_max, cfg)?;
    packed_kernel_on(a, t, &line, &circle)
}

/// Flat kernel `K_hat`: `a_j = h gamma_j/(1 + gamma_j) exp(t G(gamma_j))`,
/// `alpha_j = gamma_j + 1`, `b_j = 1`, `beta_j = phi(gamma_j) + 1`.
pub fn flat_kernel_on(a: DeviationParam, t: f64, gamma: &ContourPath) -> Result<SeparableKernel> {
    check_t(t)?;
    if gamma.role != ContourRole::LambertGamma {
        return Err(Error::invalid("flat kernel needs the Lambert contour"));
    }
    let mut left = ExpSum::default();
    let mut right = ExpSum::default();
    for k in 0..gamma.len() {
        let (g, p) = (gamma.nodes[k], gamma.images[k]);
        let c = gamma.weights[k] * (t * phase_flat_complex(g, p, a)).exp() / TWO_PI_I;
        if c.norm() > 0.0 {
            left.coeffs.push(c);
            left.rates.push(g + 1.0);
            right.coeffs.push(Complex64::new(1.0, 0.0));
            right.rates.push(p + 1.0);
        }
    }
    Ok(SeparableKernel {
        left,
        right,
        coupling: Coupling::Diagonal,
    })
}

pub fn flat_kernel(
    a: DeviationParam,
    t: f64,
    xi_max: f64,
    tau_max: f64,
    cfg: &ContourConfig,
) -> Result<SeparableKernel> {
    let gamma = flat_contour_with(a, t, xi_max, tau_max, cfg)?;
    flat_kernel_on(a, t, &gamma)
}

/// Unscaled packed kernel `K_{n,t}(x, y)` for `x, y` in `[x_min, x_max]`.
///
/// `n = 0` is the zero kernel. Otherwise the `w` line sits at
/// `Re w = -c`, `c = max(sqrt(n/t), 1/sqrt(t))`, and the `z` circle has
/// radius `c/2`.
pub fn raw_packed_kernel(
    n: u32,
    t: f64,
    x_min: f64,
    x_max: f64,
    cfg: &ContourConfig,
) -> Result<SeparableKernel> {
    check_t(t)?;
    cfg.validate()?;
    if n == 0 {
        return Ok(SeparableKernel::zero());
    }
    let nf = n as f64;
    let c = (nf / t).sqrt().max(1.0 / t.sqrt());
    let xi_abs = x_min.abs().max(x_max.abs());
    let density = cfg.density_at(t.max(nf));
    let target = -cfg.truncation_tol.ln();
    let drop = |y: f64| 0.5 * t * y * y - 0.5 * nf * (y * y / (c * c)).ln_1p();
    let (mut lo, mut hi) = (0.0, 1.0);
    while drop(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if drop(mid) < target {
            lo = mid
        } else {
            hi = mid
        }
    }
    let line = build_line(-c, hi, line_step(density, 0.25 * c, xi_abs, t))?;
    let r = 0.5 * c;
    let nodes = circle_node_count(r, xi_abs, 0.5 * t, nf, c, density, cfg.points_per_unit);
    let circle = build_circle(0.0, r, nodes, ContourRole::ZCircle)?;

    let w_phase = |w: Complex64| 0.5 * t * w * w + nf * (-w).ln();
    let mut left = ExpSum::default();
    for (&w, &dw) in line.nodes.iter().zip(&line.weights) {
        let cf = dw * w_phase(w).exp() / TWO_PI_I;
        if cf.norm() > 0.0 {
            left.coeffs.push(cf);
            left.rates.push(w);
        }
    }
    let mut right = ExpSum::default();
    for (&z, &dz) in circle.nodes.iter().zip(&circle.weights) {
        right.coeffs.push(dz * (-w_phase(z)).exp() / TWO_PI_I);
        right.rates.push(z);
    }
    let w = left.rates.clone();
    Ok(SeparableKernel {
        left,
        right,
        coupling: Coupling::Cauchy { w, z: circle.nodes },
    })
}

/// Evaluate the packed kernel at one point with the configured contours and
/// with doubled node density.
pub fn khat_packed(
    a: DeviationParam,
    t: f64,
    xi1: f64,
    xi2: f64,
    radius_scale: f64,
    cfg: &ContourConfig,
) -> Result<KernelEval> {
    let xi_max = xi1.abs().max(xi2.abs());
    let eval = |c: &ContourConfig| -> Result<Complex64> {
        let (line, circle) = packed_contours_with(a, t, radius_scale, xi_max, c)?;
        Ok(packed_kernel_on(a, t, &line, &circle)?.eval_complex(xi1, xi2))
    };
    finish_eval(eval(cfg)?, eval(&cfg.doubled())?)
}

/// Evaluate the flat kernel at one point; `tau_max` from the configuration.
pub fn khat_flat(
    a: DeviationParam,
    t: f64,
    xi1: f64,
    xi2: f64,
    cfg: &ContourConfig,
) -> Result<KernelEval> {
    let xi_max = xi1.abs().max(xi2.abs());
    let eval = |c: &ContourConfig| -> Result<Complex64> {
        Ok(flat_kernel(a, t, xi_max, c.tau_max, c)?.eval_complex(xi1, xi2))
    };
    finish_eval(eval(cfg)?, eval(&cfg.doubled())?)
}

fn finish_eval(v: Complex64, v2: Complex64) -> Result<KernelEval> {
    let out = KernelEval {
        value: v.re,
        im_residue: v.im.abs(),
        refinement_delta: (v2.re - v.re).abs(),
    };
    if out.im_residue > IM_TOLERANCE * (1.0 + out.value.abs()) {
        return Err(Error::numeric(format!(
            "kernel imaginary residue {:e} too large; increase points_per_unit",
            out.im_residue
        )));
    }
    Ok(out)
}

/// Auxiliary functions of the stationary (`rho = 1`) formula at level
/// offset `s`:
///
/// * `R_hat(s) = -(1/2 pi i) oint exp(-t H(z) - s(z+1)) / (1+z)^2`
/// * `g_1(xi) = 1 + (1/2 pi i) oint exp(-t H(z) - xi(z+1)) / (z+1)`
/// * `f*_s(xi)` = line integral of `exp(t H(w) + xi(w+1))/(w+1)` plus the
///   double integral with `exp(-s(z+1))/((w-z)(1+z))`
/// * `F_hat(s) = s + a t + R_hat(s) - 1`
#[derive(Debug, Clone)]
pub struct StatComponents {
    pub s: f64,
    pub r_hat: f64,
    pub r_hat_prime: f64,
    pub f_hat_t: f64,
    pub f_star: ExpSum,
    /// `g_1 - 1`.
    pub g_one_tail: ExpSum,
}

impl StatComponents {
    pub fn f_star(&self, xi: f64) -> f64 {
        self.f_star.eval(xi).re
    }

    pub fn g_one(&self, xi: f64) -> f64 {
        1.0 + self.g_one_tail.eval(xi).re
    }
}

/// Line and circle terms shared by the stationary functions.
pub struct StatContours {
    pub a: DeviationParam,
    pub t: f64,
    pub line: ContourPath,
    pub circle: ContourPath,
    /// `dw exp(t H(w)) / (2 pi i)`.
    pub line_coef: Vec<Complex64>,
    /// `dz exp(-t H(z)) / (2 pi i)`.
    pub circle_coef: Vec<Complex64>,
}

impl StatContours {
    pub fn new(
        a: DeviationParam,
        t: f64,
        radius_scale: f64,
        xi_max: f64,
        cfg: &ContourConfig,
    ) -> Result<Self> {
        let (line, circle) = packed_contours_with(a, t, radius_scale, xi_max, cfg)?;
        let line_coef = line
            .nodes
            .iter()
            .zip(&line.weights)
            .map(|(&w, &dw)| Ok(dw * (t * phase_packed(w, a)?).exp() / TWO_PI_I))
            .collect::<Result<Vec<_>>>()?;
        let circle_coef = circle
            .nodes
            .iter()
            .zip(&circle.weights)
            .map(|(&z, &dz)| Ok(dz * (-t * phase_packed(z, a)?).exp() / TWO_PI_I))
            .collect::<Result<Vec<_>>>()?;
        Ok(StatContours {
            a,
            t,
            line,
            circle,
            line_coef,
            circle_coef,
        })
    }

    pub fn kernel(&self) -> Result<SeparableKernel> {
        packed_kernel_on(self.a, self.t, &self.line, &self.circle)
    }

    /// `(1/2 pi i) int_{gamma_-} exp(t H(w) + xi(w+1)) / (w+1) dw` as an exponential sum.
    pub fn f_line(&self) -> ExpSum {
        let mut out = ExpSum::default();
        for (&w, &c) in self.line.nodes.iter().zip(&self.line_coef) {
            out.coeffs.push(c / (w + 1.0));
            out.rates.push(w + 1.0);
        }
        out
    }

    /// `f*_s` for level offset `s`.
    pub fn f_star(&self, s: f64) -> ExpSum {
        let inner: Vec<Complex64> = self
            .circle
            .nodes
            .iter()
            .zip(&self.circle_coef)
            .map(|(&z, &c)| c * (-s * (z + 1.0)).exp() / (1.0 + z))
            .collect();
        let mut out = ExpSum::default();
        for (&w, &c) in self.line.nodes.iter().zip(&self.line_coef) {
            let dbl: Complex64 = inner
                .iter()
                .zip(&self.circle.nodes)
                .map(|(&b, &z)| b / (w - z))
                .sum();
            out.coeffs.push(c * ((w + 1.0).inv() + dbl));
            out.rates.push(w + 1.0);
        }
        out
    }

    /// `(1/2 pi i) oint_{gamma_+} exp(-t H(z) - xi(z+1)) / (z + rho) dz`
    /// as an exponential sum in `xi` (rates negated: `exp(xi * rate)`).
    pub fn circle_tail(&self, rho: f64) -> ExpSum {
        let mut out = ExpSum::default();
        for (&z, &c) in self.circle.nodes.iter().zip(&self.circle_coef) {
            out.coeffs.push(c / (z + rho));
            out.rates.push(-(z + 1.0));
        }
        out
    }

    pub fn components(&self, s: f64) -> StatComponents {
        let mut r_hat = Complex64::new(0.0, 0.0);
        let mut r_hat_prime = Complex64::new(0.0, 0.0);
        for (&z, &c) in self.circle.nodes.iter().zip(&self.circle_coef) {
            let e = c * (-s * (z + 1.0)).exp() / (1.0 + z);
            r_hat -= e / (1.0 + z);
            r_hat_prime += e;
        }
        let f_hat_t = s + self.a.get() * self.t + r_hat.re - 1.0;
        StatComponents {
            s,
            r_hat: r_hat.re,
            r_hat_prime: r_hat_prime.re,
            f_hat_t,
            f_star: self.f_star(s),
            g_one_tail: self.circle_tail(1.0),
        }
    }
}

/// Stationary auxiliary functions at level offset `s` with default contours.
pub fn stat_components(
    a: DeviationParam,
    t: f64,
    s: f64,
    cfg: &ContourConfig,
) -> Result<StatComponents> {
    Ok(StatContours::new(a, t, 1.0, s.abs() + 16.0, cfg)?.components(s))
}

/// Closed-form large-`t` limit of the scaled kernel:
///
/// * packed: `t e^{t r} K_hat -> 2 pi / sqrt(-H''(w_+) H''(w_-)) exp(xi1 (w_- + 1) - xi2 (w_+ + 1)) / (w_+ - w_-)`
/// * flat: `sqrt(t) e^{t r} K_hat -> sqrt(2 pi / -eta) z_a/(1+z_a) exp(xi1 (z_a + 1) - xi2 (phi(z_a) + 1))`
///
/// The packed prefactor is the closed-form one with the sign of the
/// denominator chosen so the diagonal integral is positive; a plain
/// steepest-descent evaluation of the `(2 pi i)^{-2}` integral gives the
/// prefactor divided by `(2 pi)^2` (see [`packed_saddle_ratio`]).
#[derive(Debug, Clone, Copy)]
pub struct LimitKernel {
    pub ic: InitialCondition,
    pub prefactor: f64,
    pub rate1: f64,
    pub rate2: f64,
}

impl LimitKernel {
    pub fn eval(&self, xi1: f64, xi2: f64) -> f64 {
        self.prefactor * (self.rate1 * xi1 - self.rate2 * xi2).exp()
    }

    /// `int_0^inf K(xi, xi) d xi`.
    pub fn diagonal_integral(&self) -> f64 {
        self.prefactor / (self.rate2 - self.rate1)
    }
}

pub fn klimit(ic: InitialCondition, a: DeviationParam) -> Result<LimitKernel> {
    match ic {
        InitialCondition::Packed => {
            let (wm, wp) = packed_saddles(a);
            let h2 = (1.0 - 1.0 / (wp * wp)) * (1.0 - 1.0 / (wm * wm));
            Ok(LimitKernel {
                ic,
                prefactor: 2.0 * PI / (-h2).sqrt() / (wp - wm),
                rate1: wm + 1.0,
                rate2: wp + 1.0,
            })
        }
        InitialCondition::Flat => {
            let d = rate_flat(a)?;
            let (za, p) = (d.saddle_lo, d.saddle_hi);
            let eta = flat_eta(za)?;
            Ok(LimitKernel {
                ic,
                prefactor: (2.0 * PI / -eta).sqrt() * za / (1.0 + za),
                rate1: za + 1.0,
                rate2: p + 1.0,
            })
        }
        InitialCondition::Stationary => Err(Error::invalid(
            "no limit kernel for the stationary condition",
        )),
    }
}

/// Ratio between the steepest-descent constant of the packed double integral
/// and the closed-form prefactor, `1/(2 pi)^2`.
pub fn packed_saddle_ratio() -> f64 {
    1.0 / (4.0 * PI * PI)
}

/// `t e^{t r} K_hat(xi1, xi2)` (packed) or `sqrt(t) e^{t r} K_hat` (flat).
pub fn scaled_kernel(
    ic: InitialCondition,
    a: DeviationParam,
    t: f64,
    xi1: f64,
    xi2: f64,
    cfg: &ContourConfig,
) -> Result<f64> {
    match ic {
        InitialCondition::Packed => {
            Ok(t * (t * rate_packed(a)).exp() * khat_packed(a, t, xi1, xi2, 1.0, cfg)?.value)
        }
        InitialCondition::Flat => {
            let r = rate_flat(a)?.rate;
            Ok(t.sqrt() * (t * r).exp() * khat_flat(a, t, xi1, xi2, cfg)?.value)
        }
        InitialCondition::Stationary => Err(Error::invalid(
            "no scaled kernel for the stationary condition",
        )),
    }
}

/// `H(w_+)` and `H(w_-)`, exposed for the stationary order checks.
pub fn packed_saddle_phases(a: DeviationParam) -> (f64, f64) {
    let (wm, wp) = packed_saddles(a);
    (phase_packed_real(wm, a), phase_packed_real(wp, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dp(a: f64) -> DeviationParam {
        DeviationParam::new(a).unwrap()
    }

    #[test]
    fn packed_kernel_is_real_and_contour_independent() {
        let cfg = ContourConfig::default();
        let a = dp(1.0);
        let base = khat_packed(a, 4.0, 0.3, 0.7, 1.0, &cfg).unwrap();
        assert!(base.im_residue < 1e-10 * (1.0 + base.value.abs()));
        assert!(base.refinement_delta < 1e-12);
        for scale in [0.9, 1.1] {
            let v = khat_packed(a, 4.0, 0.3, 0.7, scale, &cfg).unwrap();
            assert!(
                (v.value - base.value).abs() < 1e-8 * base.value.abs().max(1e-300),
                "{scale}: {} vs {}",
                v.value,
                base.value
            );
        }
    }

    #[test]
    fn flat_kernel_is_real_and_truncation_stable() {
        let a = dp(1.0);
        let cfg = ContourConfig::default();
        let v4 = khat_flat(a, 8.0, 0.0, 0.0, &cfg).unwrap();
        let v6 = khat_flat(
            a,
            8.0,
            0.0,
            0.0,
            &ContourConfig {
                tau_max: 6.0,
                ..cfg
            },
        )
        .unwrap();
        assert!(v4.im_residue < 1e-10 * (1.0 + v4.value.abs()));
        assert!((v4.value - v6.value).abs() < 1e-8 * v4.value.abs());
        assert!(v4.value > 0.0);
    }

    #[test]
    fn raw_kernel_one_particle_is_gaussian() {
        // n = 1: K(x, y) = exp(-x^2/(2t)) / sqrt(2 pi t)
        let cfg = ContourConfig::default();
        for &t in &[0.5, 1.0, 3.0] {
            let k = raw_packed_kernel(1, t, -6.0, 6.0, &cfg).unwrap();
            for &(x, y) in &[(0.0, 0.0), (1.0, -2.0), (-2.5, 3.0)] {
                let v = k.eval_complex(x, y);
                let g = (-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt();
                assert!((v.re - g).abs() < 1e-12, "t={t} x={x}: {} vs {g}", v.re);
                assert!(v.im.abs() < 1e-12);
            }
        }
        assert!(raw_packed_kernel(0, 1.0, 0.0, 1.0, &cfg).unwrap().is_zero());
    }

    #[test]
    fn raw_kernel_matches_scaled_kernel() {
        // K_hat(x, y) = e^{x - y} K_{t,t}((2+a)t + x, (2+a)t + y)
        let cfg = ContourConfig::default();
        let (a, t) = (dp(1.0), 4.0);
        let hat = khat_packed(a, t, 0.2, 0.5, 1.0, &cfg).unwrap().value;
        let lvl = (2.0 + a.get()) * t;
        let raw = raw_packed_kernel(4, t, lvl, lvl + 1.0, &cfg)
            .unwrap()
            .eval_complex(lvl + 0.2, lvl + 0.5)
            .re;
        assert!(
            (hat - (0.2f64 - 0.5).exp() * raw).abs() < 1e-9 * hat.abs(),
            "{hat} vs {raw}"
        );
    }

    #[test]
    fn limit_kernels() {
        let a = dp(1.0);
        let (wm, wp) = packed_saddles(a);
        let lp = klimit(InitialCondition::Packed, a).unwrap();
        // separable: K(x1,y1) K(x2,y2) = K(x1,y2) K(x2,y1)
        let lhs = lp.eval(0.3, 1.1) * lp.eval(2.0, 0.4);
        let rhs = lp.eval(0.3, 0.4) * lp.eval(2.0, 1.1);
        assert!((lhs - rhs).abs() < 1e-14 * lhs.abs());
        let closed_form =
            2.0 * PI * wm * wp / ((wm - wp).powi(2) * ((wm * wm - 1.0) * (1.0 - wp * wp)).sqrt());
        assert!((lp.diagonal_integral() - closed_form).abs() < 1e-12 * closed_form);
        let lf = klimit(InitialCondition::Flat, a).unwrap();
        let d = rate_flat(a).unwrap();
        let eta = d.second_deriv.0;
        let (za, p) = (d.saddle_lo, d.saddle_hi);
        let closed_flat = (2.0 * PI / -eta).sqrt() * za / ((1.0 + za) * (p - za));
        assert!((lf.diagonal_integral() - closed_flat).abs() < 1e-12 * closed_flat);
        assert!(klimit(InitialCondition::Stationary, a).is_err());
    }

    #[test]
    fn scaled_kernels_approach_limits() {
        let a = dp(1.0);
        let cfg = ContourConfig::default();
        let lp = klimit(InitialCondition::Packed, a).unwrap().eval(0.0, 0.0);
        let lf = klimit(InitialCondition::Flat, a).unwrap().eval(0.0, 0.0);
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for &t in &[4.0, 8.0, 16.0] {
            let rp = scaled_kernel(InitialCondition::Packed, a, t, 0.0, 0.0, &cfg).unwrap()
                / (lp * packed_saddle_ratio());
            let rf = scaled_kernel(InitialCondition::Flat, a, t, 0.0, 0.0, &cfg).unwrap() / lf;
            assert!(
                (rp - 1.0).abs() < prev.0 && (rf - 1.0).abs() < prev.1,
                "t={t}: {rp} {rf}"
            );
            prev = ((rp - 1.0).abs(), (rf - 1.0).abs());
        }
        assert!(prev.0 < 0.15 && prev.1 < 0.15, "{prev:?}");
    }

    #[test]
    fn stat_components_identities() {
        let a = dp(1.0);
        let cfg = ContourConfig::default();
        let sc = StatContours::new(a, 4.0, 1.0, 20.0, &cfg).unwrap();
        let c0 = sc.components(0.0);
        // R_hat' = g_1 - 1
        assert!((c0.r_hat_prime - (c0.g_one(0.0) - 1.0)).abs() < 1e-14);
        let h = 1e-5;
        let fd = (sc.components(h).r_hat - sc.components(-h).r_hat) / (2.0 * h);
        assert!((fd - c0.r_hat_prime).abs() < 1e-8 * (1.0 + fd.abs()));
        assert!((c0.f_hat_t - (4.0 + c0.r_hat - 1.0)).abs() < 1e-15);
        // f* decays like e^{-a xi}
        let ratio = c0.f_star(6.0).abs() / c0.f_star(2.0).abs();
        assert!(ratio < (-4.0f64 * a.get()).exp() * 1.5);
        // g_1 -> 1 with t
        let g4 = (c0.g_one(1.0) - 1.0).abs();
        let g8 = (stat_components(a, 8.0, 0.0, &cfg).unwrap().g_one(1.0) - 1.0).abs();
        assert!(g8 < g4);
    }
}
