//! Multi-branch Lambert W and the conjugate-root map `phi`.
//!
//! `lambert_w(k, z)` solves `w e^w = z` on branch `k` with Halley iteration.
//! The initial guesses follow the usual branch-aware recipe: a series around
//! the branch point `-1/e`, a (2,2) Padé approximant near the origin for the
//! principal branch, and the logarithmic asymptotic expansion elsewhere.
//!
//! `phi(z) = W_0(z e^z)` is the "other" real root of `w e^w = z e^z`. On
//! `(-inf, -1)` it maps bijectively and decreasingly onto `(-1, 0)`; on
//! `[-1, inf)` it is the identity.

use std::f64::consts::{E, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Lambert branch label (any integer).
pub type BranchIndex = i32;

const INV_E: f64 = 1.0 / E;
const MAX_ITER: usize = 64;
const BRANCH_POINT_RADIUS: f64 = 1e-12;

/// Residual bound accepted for `w e^w = z`.
pub fn residual_tolerance(z: Complex64) -> f64 {
    1e-12 * (1.0 + z.norm())
}

/// Closed horizontal strip containing `Im W_k(z)` for every `z`.
pub fn branch_strip(k: BranchIndex) -> (f64, f64) {
    let k = k as f64;
    if k == 0.0 {
        (-PI, PI)
    } else if k > 0.0 {
        ((2.0 * k - 2.0) * PI, (2.0 * k + 1.0) * PI)
    } else {
        ((2.0 * k - 1.0) * PI, (2.0 * k + 2.0) * PI)
    }
}

/// Branch `k` of the Lambert W function.
///
/// Real arguments on a branch cut are read from the upper side
/// (`Im z = +0`), which makes `W_{-1}` real on `[-1/e, 0)`.
pub fn lambert_w(k: BranchIndex, z: Complex64) -> Result<Complex64> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::invalid(format!(
            "lambert_w: non-finite argument {z}"
        )));
    }
    if z.re == 0.0 && z.im == 0.0 {
        return if k == 0 {
            Ok(Complex64::new(0.0, 0.0))
        } else {
            Err(Error::Singularity(format!("W_{k}(0) is -infinity")))
        };
    }
    if (k == 0 || k == -1) && (z + INV_E).norm() < BRANCH_POINT_RADIUS {
        return Ok(Complex64::new(-1.0, 0.0));
    }
    if z.im == 0.0 {
        let x = z.re;
        if k == 0 && x >= -INV_E {
            return real_principal(x).map(|w| Complex64::new(w, 0.0));
        }
        if k == -1 && (-INV_E..0.0).contains(&x) {
            return real_lower(x).map(|w| Complex64::new(w, 0.0));
        }
    }
    let z = if z.im == 0.0 {
        // normalise -0.0 so the principal log reads the upper side of the cut
        Complex64::new(z.re, 0.0)
    } else {
        z
    };
    halley(z, initial_guess(k, z))
}

fn initial_guess(k: BranchIndex, z: Complex64) -> Complex64 {
    let near_branch = (z + INV_E).norm() < 0.3;
    match k {
        0 if near_branch => branch_point_series(z, 1.0),
        0 if z.re > -1.0 && z.re < 1.5 && z.im.abs() < 1.0 && -2.5 * z.im.abs() - 0.2 < z.re => {
            pade0(z)
        }
        -1 if near_branch && z.im >= 0.0 => branch_point_series(z, -1.0),
        1 if near_branch && z.im < 0.0 => branch_point_series(z, -1.0),
        _ => asymptotic(k, z),
    }
}

fn branch_point_series(z: Complex64, sign: f64) -> Complex64 {
    let p = (2.0 * (E * z + 1.0)).sqrt() * sign;
    -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
}

fn pade0(z: Complex64) -> Complex64 {
    let num = (12.851_063_829_787_234 * z + 12.340_425_531_914_894) * z + 1.0;
    let den = (32.531_914_893_617_02 * z + 14.340_425_531_914_894) * z + 1.0;
    z * num / den
}

fn asymptotic(k: BranchIndex, z: Complex64) -> Complex64 {
    let l1 = z.ln() + Complex64::new(0.0, 2.0 * PI * k as f64);
    let l2 = l1.ln();
    l1 - l2 + l2 / l1
}

/// Halley iteration for `w e^w = z` started from `seed`; used to follow a
/// branch by continuation.
pub fn lambert_w_from(z: Complex64, seed: Complex64) -> Result<Complex64> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::invalid(format!(
            "lambert_w: non-finite argument {z}"
        )));
    }
    halley(z, seed)
}

fn halley(z: Complex64, mut w: Complex64) -> Result<Complex64> {
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - z;
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let dw = f / denom;
        if !dw.re.is_finite() || !dw.im.is_finite() {
            break;
        }
        w -= dw;
        if dw.norm() <= 4.0 * f64::EPSILON * (1.0 + w.norm()) {
            let residual = (w * w.exp() - z).norm();
            if residual <= residual_tolerance(z) {
                return Ok(w);
            }
            return Err(Error::NoConvergence {
                what: "lambert_w",
                last: w,
                residual,
            });
        }
    }
    // near the branch point the iteration is only linear; accept a small
    // residual even without a converged step
    let residual = (w * w.exp() - z).norm();
    if residual <= residual_tolerance(z) {
        return Ok(w);
    }
    Err(Error::NoConvergence {
        what: "lambert_w",
        last: w,
        residual,
    })
}

fn real_halley(x: f64, mut w: f64) -> Result<f64> {
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            return Ok(w);
        }
        let dw = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        if !dw.is_finite() {
            break;
        }
        w -= dw;
        if dw.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            return Ok(w);
        }
    }
    Err(Error::NoConvergence {
        what: "lambert_w (real)",
        last: Complex64::new(w, 0.0),
        residual: (w * w.exp() - x).abs(),
    })
}

fn real_principal(x: f64) -> Result<f64> {
    let guess = if x + INV_E < 0.3 {
        let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        pade0(Complex64::new(x, 0.0)).re
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };
    real_halley(x, guess)
}

fn real_lower(x: f64) -> Result<f64> {
    let guess = if x + INV_E < 0.3 {
        let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
        -1.0 - p - p * p / 3.0 - 11.0 / 72.0 * p * p * p
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    };
    real_halley(x, guess)
}

/// `phi(z) = W_0(z e^z)`.
pub fn phi(z: Complex64) -> Result<Complex64> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::invalid(format!("phi: non-finite argument {z}")));
    }
    if z.im == 0.0 {
        return phi_real(z.re).map(|p| Complex64::new(p, 0.0));
    }
    lambert_w(0, z * z.exp())
}

/// `phi` on the real line.
pub fn phi_real(x: f64) -> Result<f64> {
    Ok(phi_real_parts(x)?.0)
}

/// Returns `(phi(x), phi(x) + 1)` with the second component accurate to
/// full relative precision near the branch point `x = -1`.
pub fn phi_real_parts(x: f64) -> Result<(f64, f64)> {
    if !x.is_finite() {
        return Err(Error::invalid(format!("phi: non-finite argument {x}")));
    }
    if x >= -1.0 {
        return Ok((x, x + 1.0));
    }
    if x > -2.0 {
        let u = solve_shifted(x + 1.0)?;
        Ok((u - 1.0, u))
    } else {
        let w = solve_small_root(x * x.exp())?;
        Ok((w, 1.0 + w))
    }
}

/// `-v - ln(1 - v) = sum_{k>=2} v^k / k`, accurate for small `v`.
fn psi(v: f64) -> f64 {
    if v.abs() < 1e-2 {
        let mut term = v * v;
        let mut sum = 0.0;
        for k in 2..40 {
            let add = term / k as f64;
            sum += add;
            if add.abs() <= 1e-18 * sum.abs() {
                break;
            }
            term *= v;
        }
        sum
    } else {
        -v - (-v).ln_1p()
    }
}

/// For `h < 0` finds `u` in `(0, 1)` with `psi(u) = psi(h)`; then
/// `phi(-1 + h) = -1 + u`. Both roots of `w + ln(-w) = const` meet at `-1`,
/// so working in the shifted variable keeps `phi + 1` accurate.
fn solve_shifted(h: f64) -> Result<f64> {
    let target = psi(h);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut u = (-h - 2.0 / 3.0 * h * h).clamp(1e-300, 1.0 - 1e-16);
    if !(u > lo && u < hi) {
        u = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let g = psi(u) - target;
        if g > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let dg = u / (1.0 - u);
        let mut next = u - g / dg;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - u).abs() <= 2.0 * f64::EPSILON * u || hi - lo <= 2.0 * f64::EPSILON * u {
            return Ok(next);
        }
        u = next;
    }
    Err(Error::NoConvergence {
        what: "phi (shifted)",
        last: Complex64::new(u - 1.0, 0.0),
        residual: (psi(u) - target).abs(),
    })
}

/// Root of `w e^w = c` in `(-1, 0)` for `c` in `(-1/e, 0)`, by bracketed
/// Newton with bisection fallback.
fn solve_small_root(c: f64) -> Result<f64> {
    let (mut lo, mut hi) = (-1.0_f64, 0.0_f64);
    let mut w = if c > -0.25 {
        c * (1.0 - c)
    } else {
        real_principal(c).unwrap_or(-0.5)
    };
    if !(w > lo && w < hi) {
        w = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let ew = w.exp();
        let g = w * ew - c;
        if g > 0.0 {
            hi = w;
        } else {
            lo = w;
        }
        let mut next = w - g / (ew * (1.0 + w));
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - w).abs() <= 2.0 * f64::EPSILON * w.abs() {
            return Ok(next);
        }
        w = next;
    }
    Err(Error::NoConvergence {
        what: "phi",
        last: Complex64::new(w, 0.0),
        residual: (w * w.exp() - c).abs(),
    })
}

/// `phi'(z) = (1 + z) phi(z) / (z (1 + phi(z)))`.
pub fn phi_prime(z: Complex64) -> Result<Complex64> {
    if (z + 1.0).norm() == 0.0 {
        return Err(Error::Singularity("phi' at the branch point z = -1".into()));
    }
    if z.norm() == 0.0 {
        return Err(Error::Singularity("phi' at z = 0".into()));
    }
    if z.im == 0.0 {
        let (p, p1) = phi_real_parts(z.re)?;
        return Ok(Complex64::new((1.0 + z.re) * p / (z.re * p1), 0.0));
    }
    let p = phi(z)?;
    Ok((1.0 + z) * p / (z * (1.0 + p)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Independent oracle: plain bisection on `w e^w = x` over `(lo, hi)`.
    fn bisect_root(x: f64, mut lo: f64, mut hi: f64) -> f64 {
        let f = |w: f64| w * w.exp() - x;
        let increasing = f(hi) > f(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == increasing {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn trivial_values() {
        assert_eq!(lambert_w(0, c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
        assert!((lambert_w(0, c(E, 0.0)).unwrap() - 1.0).norm() < 1e-15);
        assert!((lambert_w(-1, c(-INV_E, 0.0)).unwrap() + 1.0).norm() < 1e-15);
        assert!((lambert_w(0, c(-INV_E, 0.0)).unwrap() + 1.0).norm() < 1e-15);
    }

    #[test]
    fn principal_branch_matches_bisection() {
        let oracle = bisect_root(-0.2, -1.0, 0.0);
        let w = lambert_w(0, c(-0.2, 0.0)).unwrap();
        assert!((w.re - oracle).abs() < 1e-14);
        assert!((w.re - (-0.259_171_101_819_073_7)).abs() < 1e-12);
        assert_eq!(w.im, 0.0);
    }

    #[test]
    fn lower_real_branch() {
        for &x in &[-0.3, -0.1, -1e-3, -1e-10] {
            let w = lambert_w(-1, c(x, 0.0)).unwrap();
            let oracle = bisect_root(x, -60.0, -1.0);
            assert!((w.re - oracle).abs() < 1e-12 * oracle.abs(), "x={x}");
            assert_eq!(w.im, 0.0);
        }
    }

    #[test]
    fn invalid_and_singular_inputs() {
        assert!(matches!(
            lambert_w(0, c(f64::NAN, 0.0)),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            lambert_w(1, c(0.0, 0.0)),
            Err(Error::Singularity(_))
        ));
        assert!(phi(c(f64::INFINITY, 0.0)).is_err());
    }

    #[test]
    fn complex_branches_satisfy_identity_and_strip() {
        let pts = [
            c(1.0, 1.0),
            c(-1.0, 0.5),
            c(-0.3, -0.01),
            c(100.0, -50.0),
            c(1e-3, 1e-3),
            c(-0.36, 1e-6),
            c(-0.37, -1e-6),
            c(-500.0, 0.0),
            c(3.0, 0.0),
        ];
        for k in -3..=3 {
            for &z in &pts {
                let w = lambert_w(k, z).unwrap();
                let res = (w * w.exp() - z).norm();
                assert!(res <= residual_tolerance(z), "k={k} z={z} res={res}");
                let (lo, hi) = branch_strip(k);
                assert!(
                    w.im >= lo - 1e-12 && w.im <= hi + 1e-12,
                    "k={k} z={z} w={w}"
                );
            }
        }
    }

    #[test]
    fn phi_trivial_and_derived_values() {
        assert_eq!(phi_real(-1.0).unwrap(), -1.0);
        assert_eq!(phi_real(-0.5).unwrap(), -0.5);
        assert_eq!(phi_real(2.0).unwrap(), 2.0);
        let target = -2.0 * (-2.0f64).exp();
        let oracle = bisect_root(target, -1.0, 0.0);
        let p = phi_real(-2.0).unwrap();
        assert!((p - oracle).abs() < 1e-14);
        assert!((p - (-0.406_375_739_959_959_5)).abs() < 1e-10);
    }

    #[test]
    fn phi_near_branch_point_keeps_shift_accurate() {
        for &h in &[1e-2, 1e-4, 1e-6, 1e-8] {
            let z = -1.0 - h;
            let h = -(z + 1.0);
            let (p, p1) = phi_real_parts(z).unwrap();
            // phi(-1 + d) = -1 - d - 2/3 d^2 + O(d^3) with d = -h
            let series = h - 2.0 / 3.0 * h * h;
            assert!((p1 - series).abs() < 2.0 * h.powi(3), "h={h} p1={p1}");
            assert!((p + 1.0 - p1).abs() < 1e-15);
        }
    }

    #[test]
    fn phi_prime_values() {
        assert!((phi_prime(c(-0.5, 0.0)).unwrap() - 1.0).norm() < 1e-15);
        let step = 1e-6;
        let fd = (phi_real(-2.0 + step).unwrap() - phi_real(-2.0 - step).unwrap()) / (2.0 * step);
        let d = phi_prime(c(-2.0, 0.0)).unwrap().re;
        assert!((d - fd).abs() < 1e-8 * d.abs());
        assert!((d - (-0.342_29)).abs() < 1e-4);
        assert!(matches!(
            phi_prime(c(-1.0, 0.0)),
            Err(Error::Singularity(_))
        ));
        assert!(matches!(phi_prime(c(0.0, 0.0)), Err(Error::Singularity(_))));
    }

    #[test]
    fn phi_is_decreasing_below_minus_one() {
        let grid: Vec<f64> = (0..500)
            .map(|i| -1.01 - i as f64 * (48.99 / 499.0))
            .collect();
        let vals: Vec<f64> = grid.iter().map(|&z| phi_real(z).unwrap()).collect();
        for w in vals.windows(2) {
            // grid descends, so phi must ascend
            assert!(w[1] > w[0], "{} !> {}", w[1], w[0]);
        }
        for (&z, &p) in grid.iter().zip(&vals) {
            assert!(p > -1.0 && p < 0.0);
            let lhs = p * p.exp();
            let rhs = z * z.exp();
            assert!((lhs - rhs).abs() <= 1e-15, "z={z}");
        }
    }

    #[test]
    fn phi_prime_identity_residual() {
        for i in 0..200 {
            let z = -1.05 - i as f64 * 0.1;
            let p = phi_real(z).unwrap();
            let d = phi_prime(c(z, 0.0)).unwrap().re;
            let res = (d * z * (1.0 + p) - (1.0 + z) * p).abs();
            assert!(res <= 1e-12, "z={z} res={res}");
        }
        let z = c(-2.0, 0.7);
        let p = phi(z).unwrap();
        let d = phi_prime(z).unwrap();
        assert!((d * z * (1.0 + p) - (1.0 + z) * p).norm() <= 1e-12);
    }
}
