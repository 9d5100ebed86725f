//! Discretised integration contours.
//!
//! Every path stores its nodes `z_k`, the tangent `dz/dp` at each node and the
//! trapezoidal weight `w_k = tangent * dp`, so that `sum_k f(z_k) w_k`
//! approximates `int f(z) dz` along the path in its orientation.

use std::f64::consts::{E, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lambert::{lambert_w, lambert_w_from};
use crate::saddle::{flat_eta, packed_saddles, solve_za, DeviationParam};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Target for `-log` of the trapezoidal aliasing error.
const ALIAS_EXPONENT: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContourRole {
    WLine,
    ZCircle,
    LambertGamma,
    ResidueCircle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourConfig {
    /// Nodes per unit of path parameter (before the `t`-dependent boost).
    pub points_per_unit: usize,
    /// Relative integrand magnitude below which a tail is dropped.
    pub truncation_tol: f64,
    /// Cut-off `|tau|` for the flat contour.
    pub tau_max: f64,
}

impl Default for ContourConfig {
    fn default() -> Self {
        ContourConfig {
            points_per_unit: 64,
            truncation_tol: 1e-15,
            tau_max: 4.0,
        }
    }
}

impl ContourConfig {
    pub fn new(points_per_unit: usize, truncation_tol: f64, tau_max: f64) -> Result<Self> {
        let cfg = ContourConfig {
            points_per_unit,
            truncation_tol,
            tau_max,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points_per_unit < 8 {
            return Err(Error::invalid(format!(
                "points_per_unit must be >= 8, got {}",
                self.points_per_unit
            )));
        }
        if !(self.truncation_tol > 0.0 && self.truncation_tol <= 1e-8) {
            return Err(Error::invalid(format!(
                "truncation_tol must lie in (0, 1e-8], got {}",
                self.truncation_tol
            )));
        }
        if !(self.tau_max.is_finite() && self.tau_max > 0.0) {
            return Err(Error::invalid(format!(
                "tau_max must be > 0, got {}",
                self.tau_max
            )));
        }
        Ok(())
    }

    /// Same configuration with twice the node density.
    pub fn doubled(&self) -> Self {
        ContourConfig {
            points_per_unit: 2 * self.points_per_unit,
            ..*self
        }
    }

    /// Node density used at time `t`; the saddle region narrows like `1/sqrt(t)`.
    pub fn density_at(&self, t: f64) -> f64 {
        self.points_per_unit as f64 * (t / 16.0).sqrt().max(1.0)
    }
}

#[derive(Debug, Clone)]
pub struct ContourPath {
    pub role: ContourRole,
    pub nodes: Vec<Complex64>,
    /// `dz/dp` at each node.
    pub tangents: Vec<Complex64>,
    /// `tangent * dp`.
    pub weights: Vec<Complex64>,
    /// Parameter value of each node (`y`, angle or `tau`).
    pub params: Vec<f64>,
    pub param_range: (f64, f64),
    pub closed: bool,
    /// Index of the node at the saddle point (for circles: angle `pi`).
    pub critical: usize,
    /// `phi(node)` on the Lambert contour; empty otherwise.
    pub images: Vec<Complex64>,
}

impl ContourPath {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `sum_k f(k, z_k) w_k`.
    pub fn integrate(&self, mut f: impl FnMut(usize, Complex64) -> Complex64) -> Complex64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .enumerate()
            .map(|(k, (&z, &w))| f(k, z) * w)
            .sum()
    }

    /// Largest `|z_{c+j} - conj(z_{c-j})|` about the critical node.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let c = self.critical;
        let m = c.min(self.len() - 1 - c);
        (0..=m)
            .map(|j| (self.nodes[c + j] - self.nodes[c - j].conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Distance in parameter space from the critical node (angular for
    /// closed paths).
    pub fn param_distance(&self, k: usize) -> f64 {
        let d = (self.params[k] - self.params[self.critical]).abs();
        if self.closed {
            d.min(2.0 * PI - d)
        } else {
            d
        }
    }
}

/// Hard cap on nodes per contour; beyond it the parameters are out of the
/// range this discretisation handles.
pub const MAX_NODES: usize = 200_000;

/// Vertical line `Re w = center_re`, oriented upwards, `|Im w| <= half_len`.
pub fn build_line(center_re: f64, half_len: f64, step: f64) -> Result<ContourPath> {
    if !(step > 0.0 && half_len >= 0.0 && center_re.is_finite() && half_len.is_finite()) {
        return Err(Error::invalid(format!(
            "bad line contour: center {center_re}, half length {half_len}, step {step}"
        )));
    }
    let ratio = (half_len / step).ceil();
    if ratio > MAX_NODES as f64 / 2.0 {
        return Err(Error::numeric(format!(
            "line contour would need {ratio:e} nodes per half (limit {MAX_NODES})"
        )));
    }
    let j_max = ratio as usize;
    let n = 2 * j_max + 1;
    let mut path = ContourPath {
        role: ContourRole::WLine,
        nodes: Vec::with_capacity(n),
        tangents: vec![I; n],
        weights: vec![I * step; n],
        params: Vec::with_capacity(n),
        param_range: (-(j_max as f64) * step, j_max as f64 * step),
        closed: false,
        critical: j_max,
        images: Vec::new(),
    };
    for j in 0..n {
        let y = (j as f64 - j_max as f64) * step;
        path.params.push(y);
        path.nodes.push(Complex64::new(center_re, y));
    }
    Ok(path)
}

/// Counter-clockwise circle about a real center with an odd number of nodes
/// placed symmetrically about angle `pi`; no node sits at angle `0`.
pub fn build_circle(center: f64, radius: f64, n: usize, role: ContourRole) -> Result<ContourPath> {
    if !(radius > 0.0 && radius.is_finite() && center.is_finite() && n >= 3) {
        return Err(Error::invalid(format!(
            "bad circle contour: center {center}, radius {radius}, {n} nodes"
        )));
    }
    if n > MAX_NODES {
        return Err(Error::numeric(format!(
            "circle contour would need {n} nodes (limit {MAX_NODES})"
        )));
    }
    let n = n | 1;
    let c = (n - 1) / 2;
    let dpsi = 2.0 * PI / n as f64;
    let mut path = ContourPath {
        role,
        nodes: Vec::with_capacity(n),
        tangents: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
        params: Vec::with_capacity(n),
        param_range: (0.0, 2.0 * PI),
        closed: true,
        critical: c,
        images: Vec::new(),
    };
    for k in 0..n {
        let psi = PI + (k as f64 - c as f64) * dpsi;
        let e = Complex64::from_polar(radius, psi);
        path.params.push(psi);
        path.nodes.push(center + e);
        path.tangents.push(I * e);
        path.weights.push(I * e * dpsi);
    }
    Ok(path)
}

/// Node count for a circle of radius `r` around the origin carrying
/// `exp(lin * z + quad * z^2) z^{-pole}` type factors, with the nearest
/// foreign singularity at modulus `outer`.
pub fn circle_node_count(
    r: f64,
    lin: f64,
    quad: f64,
    pole: f64,
    outer: f64,
    density: f64,
    min: usize,
) -> usize {
    let taylor = E * (lin.abs() * r + quad.abs() * r * r);
    let entire = 2.0 * pole.max(0.0).ceil() + 2.0 * taylor.ceil() + 2.0 * ALIAS_EXPONENT;
    let geometric = if outer > r {
        ALIAS_EXPONENT / (outer / r).ln()
    } else {
        f64::INFINITY
    };
    let arc = 2.0 * PI * r * density;
    let n = (min as f64).max(entire).max(geometric).max(arc).ceil();
    if !n.is_finite() || n > 1e7 {
        return usize::MAX;
    }
    (n as usize) | 1
}

/// Trapezoidal step on a line whose integrand is analytic in a strip of
/// half-width `clearance`, oscillates with frequency up to `xi_max` and
/// carries a Gaussian factor `exp(-t y^2 / 2)`.
pub fn line_step(density: f64, clearance: f64, xi_max: f64, t: f64) -> f64 {
    let d = clearance;
    let strip = 2.0 * PI * d / (ALIAS_EXPONENT + xi_max.abs() * d + 0.5 * t * d * d);
    (1.0 / density).min(strip)
}

/// Half-length `Y` of the packed line beyond which
/// `|exp(t H(w_- + iy))| < tol |exp(t H(w_-))|`.
pub fn packed_line_half_length(w_minus: f64, t: f64, tol: f64) -> f64 {
    // t (y^2/2 - log(1 + y^2/w^2)/2) is increasing in y
    let target = -tol.ln();
    let drop = |y: f64| t * (0.5 * y * y - 0.5 * (y * y / (w_minus * w_minus)).ln_1p());
    let mut hi = 1.0;
    while drop(hi) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if drop(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// `(gamma_-, gamma_+)` for the packed kernel with the default radius and no
/// oscillation allowance.
pub fn build_packed_contours(
    a: DeviationParam,
    t: f64,
    cfg: &ContourConfig,
) -> Result<(ContourPath, ContourPath)> {
    packed_contours_with(a, t, 1.0, 0.0, cfg)
}

/// Packed contours with the circle radius scaled to `radius_scale * |w_+|`
/// and the node spacing fine enough for `exp(xi (w + 1))`, `|xi| <= xi_max`.
pub fn packed_contours_with(
    a: DeviationParam,
    t: f64,
    radius_scale: f64,
    xi_max: f64,
    cfg: &ContourConfig,
) -> Result<(ContourPath, ContourPath)> {
    cfg.validate()?;
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::invalid(format!("t must be > 0, got {t}")));
    }
    let (wm, wp) = packed_saddles(a);
    let r = radius_scale * wp.abs();
    if !(r > 0.0 && r < 1.0 && r < wm.abs()) {
        return Err(Error::invalid(format!(
            "circle radius {r} must lie below 1 and inside the line at {wm}"
        )));
    }
    let density = cfg.density_at(t);
    let half_len = packed_line_half_length(wm, t, cfg.truncation_tol);
    let clearance = 0.5 * (wm.abs() - r).min(wm.abs() - 1.0);
    let line = build_line(wm, half_len, line_step(density, clearance, xi_max, t))?;
    let n = circle_node_count(
        r,
        t * (2.0 + a.get()) + xi_max,
        0.5 * t,
        t,
        wm.abs().min(1.0),
        density,
        cfg.points_per_unit,
    );
    let circle = build_circle(0.0, r, n, ContourRole::ZCircle)?;
    Ok((line, circle))
}

/// Flat contour `gamma(tau)` with the configured step and `tau_max`.
pub fn build_flat_contour(a: DeviationParam, cfg: &ContourConfig) -> Result<ContourPath> {
    flat_contour_with(a, 1.0, 0.0, cfg.tau_max, cfg)
}

/// `gamma(tau) = L_{floor(tau) + [tau >= 0]}(z_a exp(z_a + 2 pi i tau))`,
/// `|tau| <= tau_max`, built by continuation from `tau = 0` in both
/// directions and cross-checked against direct branch evaluation.
pub fn flat_contour_with(
    a: DeviationParam,
    t: f64,
    xi_max: f64,
    tau_max: f64,
    cfg: &ContourConfig,
) -> Result<ContourPath> {
    cfg.validate()?;
    if !(t.is_finite() && t > 0.0 && tau_max.is_finite() && tau_max > 0.0) {
        return Err(Error::invalid(format!(
            "bad flat contour request t={t}, tau_max={tau_max}"
        )));
    }
    let za = solve_za(a)?;
    let c = za * za.exp();
    let eta = flat_eta(za)?;
    // distance in tau to the branch point -1/e in the complex tau plane
    let delta_branch = (-(E * c.abs()).ln()) / (2.0 * PI);
    let d = 0.8 * delta_branch;
    let stretch = (za / (1.0 + za)).abs().max(2.0);
    let strip = 2.0 * PI * d
        / (ALIAS_EXPONENT + 2.0 * PI * d * stretch * xi_max.abs() + 0.5 * t * eta.abs() * d * d);
    let h = (1.0 / cfg.density_at(t)).min(strip);
    let ratio = (tau_max / h).ceil();
    if ratio > MAX_NODES as f64 / 2.0 {
        return Err(Error::numeric(format!(
            "flat contour would need {ratio:e} nodes per half (limit {MAX_NODES})"
        )));
    }
    let j_max = ratio as usize;
    let n = 2 * j_max + 1;

    let arg = |tau: f64| c * Complex64::from_polar(1.0, 2.0 * PI * tau);
    let tangent = |g: Complex64| 2.0 * PI * I * g / (1.0 + g);

    let mut nodes = vec![Complex64::new(0.0, 0.0); n];
    nodes[j_max] = Complex64::new(za, 0.0);
    for dir in [1.0f64, -1.0] {
        let mut prev = Complex64::new(za, 0.0);
        for j in 1..=j_max {
            let tau = dir * j as f64 * h;
            let seed = prev + dir * h * tangent(prev);
            let g = lambert_w_from(arg(tau), seed)?;
            let local = h * tangent(prev).norm();
            if (g - prev).norm() > 10.0 * local {
                return Err(Error::numeric(format!(
                    "flat contour jumps at tau = {tau} ({prev} -> {g})"
                )));
            }
            let idx = if dir > 0.0 { j_max + j } else { j_max - j };
            nodes[idx] = g;
            prev = g;
        }
    }

    // Direct branch lookup at midpoints away from the switch lines.
    for (idx, &node) in nodes.iter().enumerate().take(n - 1) {
        let tau = (idx as f64 - j_max as f64 + 0.5) * h;
        let frac = tau - tau.round();
        if frac.abs() < 0.25 * h || tau.abs() < 0.25 * h {
            continue;
        }
        let k = tau.floor() as i32 + i32::from(tau >= 0.0);
        let direct = lambert_w(k, arg(tau))?;
        let followed = lambert_w_from(arg(tau), node)?;
        if (direct - followed).norm() > 1e-9 * (1.0 + direct.norm()) {
            return Err(Error::numeric(format!(
                "flat contour left branch {k} at tau = {tau} (continued {followed}, direct {direct})"
            )));
        }
    }

    let mut path = ContourPath {
        role: ContourRole::LambertGamma,
        nodes,
        tangents: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
        params: Vec::with_capacity(n),
        param_range: (-(j_max as f64) * h, j_max as f64 * h),
        closed: false,
        critical: j_max,
        images: Vec::with_capacity(n),
    };
    for idx in 0..n {
        let tau = (idx as f64 - j_max as f64) * h;
        let g = path.nodes[idx];
        let tg = tangent(g);
        path.params.push(tau);
        path.tangents.push(tg);
        path.weights.push(tg * h);
        path.images.push(if idx == j_max {
            Complex64::new(crate::lambert::phi_real(za)?, 0.0)
        } else {
            lambert_w(0, arg(tau))?
        });
    }
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteepDescentReport {
    pub max_interior: f64,
    pub max_exterior: f64,
    pub epsilon: f64,
    pub passed: bool,
}

/// `epsilon = phase(critical) - max { phase(k) : dist(k, critical) >= delta }`.
pub fn steep_descent_report(
    path: &ContourPath,
    phase: impl Fn(usize) -> f64,
    delta: f64,
) -> SteepDescentReport {
    let mut max_interior = f64::NEG_INFINITY;
    let mut max_exterior = f64::NEG_INFINITY;
    for k in 0..path.len() {
        let v = phase(k);
        if path.param_distance(k) >= delta {
            max_exterior = max_exterior.max(v);
        } else {
            max_interior = max_interior.max(v);
        }
    }
    let epsilon = phase(path.critical) - max_exterior;
    SteepDescentReport {
        max_interior,
        max_exterior,
        epsilon,
        passed: epsilon > 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saddle::{phase_flat_complex, phase_packed};

    fn dp(a: f64) -> DeviationParam {
        DeviationParam::new(a).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(ContourConfig::new(4, 1e-15, 4.0).is_err());
        assert!(ContourConfig::new(64, 1e-3, 4.0).is_err());
        assert!(ContourConfig::new(64, 1e-12, 0.0).is_err());
        assert_eq!(ContourConfig::default().doubled().points_per_unit, 128);
    }

    #[test]
    fn circle_trapezoid_is_exact_for_residues() {
        let c = build_circle(0.0, 0.5, 33, ContourRole::ZCircle).unwrap();
        let res = c.integrate(|_, z| z.inv()) / (2.0 * PI * I);
        assert!((res - 1.0).norm() < 1e-14);
        let res2 = c.integrate(|_, z| (z * z).inv());
        assert!(res2.norm() < 1e-14);
        assert!(c.nodes.iter().all(|z| !(z.im == 0.0 && z.re > 0.0)));
        assert!((c.nodes[c.critical] - Complex64::new(-0.5, 0.0)).norm() < 1e-15);
        assert!(c.conjugate_symmetry_defect() < 1e-15);
    }

    #[test]
    fn line_trapezoid_integrates_gaussian() {
        // int exp(w^2/2) dw over Re w = 0 upward = i sqrt(2 pi)
        let l = build_line(0.0, 12.0, 0.05).unwrap();
        let v = l.integrate(|_, w| (w * w * 0.5).exp());
        assert!((v - I * (2.0 * PI).sqrt()).norm() < 1e-13);
    }

    #[test]
    fn packed_contours_geometry() {
        let cfg = ContourConfig::default();
        let (line, circle) = build_packed_contours(dp(1.0), 4.0, &cfg).unwrap();
        assert!((line.nodes[line.critical].re + 2.618_034).abs() < 1e-6);
        assert_eq!(line.nodes[line.critical].im, 0.0);
        assert!((circle.nodes[0].norm() - 0.381_966).abs() < 1e-6);
        let r = circle.nodes[0].norm();
        assert!(line.nodes.iter().all(|w| w.norm() > r));
        assert!((r * line.nodes[line.critical].re.abs() - 1.0).abs() < 1e-12);
        let y = *line.params.last().unwrap();
        let h = phase_packed(line.nodes[line.len() - 1], dp(1.0))
            .unwrap()
            .re;
        let h0 = phase_packed(line.nodes[line.critical], dp(1.0)).unwrap().re;
        assert!(4.0 * (h - h0) <= cfg.truncation_tol.ln() + 1e-9, "y = {y}");
    }

    #[test]
    fn packed_phases_peak_at_saddles() {
        let a = dp(1.0);
        let (line, circle) = build_packed_contours(a, 4.0, &ContourConfig::default()).unwrap();
        let re_h: Vec<f64> = line
            .nodes
            .iter()
            .map(|&w| phase_packed(w, a).unwrap().re)
            .collect();
        let c = line.critical;
        for j in 1..=c {
            assert!((re_h[c + j] - re_h[c - j]).abs() < 1e-12);
            assert!(re_h[c + j] < re_h[c + j - 1]);
        }
        let neg_h: Vec<f64> = circle
            .nodes
            .iter()
            .map(|&z| -phase_packed(z, a).unwrap().re)
            .collect();
        let imax = (0..neg_h.len())
            .max_by(|&i, &j| neg_h[i].total_cmp(&neg_h[j]))
            .unwrap();
        assert_eq!(imax, circle.critical);
    }

    #[test]
    fn steep_descent_reports() {
        let a = dp(1.0);
        let (line, circle) = build_packed_contours(a, 4.0, &ContourConfig::default()).unwrap();
        let rl = steep_descent_report(&line, |k| phase_packed(line.nodes[k], a).unwrap().re, 0.1);
        assert!(rl.passed && rl.epsilon > 0.0);
        let rc = steep_descent_report(
            &circle,
            |k| -phase_packed(circle.nodes[k], a).unwrap().re,
            0.1,
        );
        assert!(rc.passed);
        let g = build_flat_contour(a, &ContourConfig::default()).unwrap();
        let rg = steep_descent_report(
            &g,
            |k| phase_flat_complex(g.nodes[k], g.images[k], a).re,
            0.1,
        );
        assert!(rg.passed);
        let empty = steep_descent_report(&line, |_| 0.0, 1e9);
        assert_eq!(empty.max_exterior, f64::NEG_INFINITY);
        assert_eq!(empty.epsilon, f64::INFINITY);
    }

    #[test]
    fn flat_contour_properties() {
        let a = dp(1.0);
        let g = build_flat_contour(a, &ContourConfig::default()).unwrap();
        let za = solve_za(a).unwrap();
        assert!((g.nodes[g.critical].re - (-2.4076)).abs() < 1e-4);
        assert!(g.conjugate_symmetry_defect() < 1e-12);
        let c = (za * za.exp()).abs();
        for (k, z) in g.nodes.iter().enumerate() {
            assert!(((z * z.exp()).norm() - c).abs() < 1e-12, "node {k}");
            assert!((g.images[k] * g.images[k].exp() - z * z.exp()).norm() < 1e-12);
        }
        // tangent against a direct derivative of the continued branch
        for &k in &[g.critical + 3, g.critical + 70, g.critical - 150] {
            let tau = g.params[k];
            let eps = 1e-5;
            let f = |s: f64| {
                lambert_w_from(
                    (za * za.exp()) * Complex64::from_polar(1.0, 2.0 * PI * s),
                    g.nodes[k],
                )
                .unwrap()
            };
            let fd = (f(tau + eps) - f(tau - eps)) / (2.0 * eps);
            assert!(
                (fd - g.tangents[k]).norm() < 1e-8 * (1.0 + fd.norm()),
                "tau {tau}"
            );
        }
        // continuity across the branch switches
        for k in 1..g.len() {
            let gap = (g.nodes[k] - g.nodes[k - 1]).norm();
            assert!(gap <= 10.0 * g.weights[k].norm());
        }
        assert!((g.params.last().unwrap() - 4.0).abs() < 0.02);
        // Re G <= G(z_a) everywhere
        let g0 = phase_flat_complex(g.nodes[g.critical], g.images[g.critical], a).re;
        for k in 0..g.len() {
            assert!(phase_flat_complex(g.nodes[k], g.images[k], a).re <= g0 + 1e-12);
        }
    }

    #[test]
    fn flat_contour_other_deviations() {
        for &a in &[0.1, 10.0] {
            let g = build_flat_contour(dp(a), &ContourConfig::default()).unwrap();
            assert!(g.conjugate_symmetry_defect() < 1e-10);
            assert!(g.nodes[g.critical].re < -1.0);
        }
    }
}
