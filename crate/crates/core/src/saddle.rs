//! Phase functions, saddle points and upper-tail rate functions.
//!
//! The packed and stationary cases share the phase
//! `H(w) = (w^2 - 1)/2 + (2 + a)(w + 1) + log(-w)` whose two real saddles
//! `w_- < -1 - a` and `w_+ in (-1, 0)` are the roots of `w^2 + (2 + a) w + 1`.
//! The flat case uses `G(z) = (z^2 - phi(z)^2)/2 + (1 + a)(z - phi(z))` with
//! the single saddle `z_a < -1` solving `(z + 1)(phi(z) + 1) + a = 0`.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lambert::phi_real_parts;

/// Deviation `a > 0` beyond the typical velocity 2, so that the event is
/// `x_t(t) >= (2 + a) t`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct DeviationParam(f64);

impl DeviationParam {
    pub fn new(a: f64) -> Result<Self> {
        if a.is_finite() && a > 0.0 {
            Ok(DeviationParam(a))
        } else {
            Err(Error::invalid(format!(
                "deviation a must be finite and > 0, got {a}"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl fmt::Display for DeviationParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// The three initial conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    Packed,
    Flat,
    Stationary,
}

impl InitialCondition {
    pub fn name(self) -> &'static str {
        match self {
            InitialCondition::Packed => "packed",
            InitialCondition::Flat => "flat",
            InitialCondition::Stationary => "stationary",
        }
    }
}

impl std::str::FromStr for InitialCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "packed" => Ok(InitialCondition::Packed),
            "flat" => Ok(InitialCondition::Flat),
            "stationary" | "stat" => Ok(InitialCondition::Stationary),
            other => Err(Error::invalid(format!(
                "unknown initial condition '{other}'"
            ))),
        }
    }
}

/// Saddle locations, phase values and rate for one `(ic, a)`.
///
/// For packed/stationary `saddle_lo = w_-`, `saddle_hi = w_+` and
/// `second_deriv = (H''(w_-), H''(w_+))`. For flat `saddle_lo = z_a`,
/// `saddle_hi = phi(z_a)`, `phase_hi = 0` and `second_deriv = (eta, eta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaddleDiagnostics {
    pub ic: InitialCondition,
    pub a: f64,
    pub saddle_lo: f64,
    pub saddle_hi: f64,
    pub phase_lo: f64,
    pub phase_hi: f64,
    pub second_deriv: (f64, f64),
    pub rate: f64,
}

/// `H(w)` on the principal branch of `log(-w)`.
pub fn phase_packed(w: Complex64, a: DeviationParam) -> Result<Complex64> {
    if w.im == 0.0 && w.re >= 0.0 {
        return Err(Error::invalid(format!(
            "H(w) is undefined on the cut w = {}",
            w.re
        )));
    }
    let a = a.get();
    Ok((w * w - 1.0) * 0.5 + (2.0 + a) * (w + 1.0) + (-w).ln())
}

/// `H(w)` for real `w < 0`.
pub fn phase_packed_real(w: f64, a: DeviationParam) -> f64 {
    let a = a.get();
    (w * w - 1.0) * 0.5 + (2.0 + a) * (w + 1.0) + (-w).ln()
}

/// `H'(w) = w + 2 + a + 1/w`.
pub fn phase_packed_d1(w: Complex64, a: DeviationParam) -> Complex64 {
    w + 2.0 + a.get() + w.inv()
}

/// `H''(w) = 1 - 1/w^2`.
pub fn phase_packed_d2(w: Complex64) -> Complex64 {
    1.0 - (w * w).inv()
}

/// `(w_-, w_+)`; `w_+` is taken as `1/w_-` to avoid cancellation.
pub fn packed_saddles(a: DeviationParam) -> (f64, f64) {
    let a = a.get();
    let q = (a + a * a / 4.0).sqrt();
    let w_minus = -1.0 - a / 2.0 - q;
    (w_minus, 1.0 / w_minus)
}

pub fn saddle_packed(a: DeviationParam) -> SaddleDiagnostics {
    let (wm, wp) = packed_saddles(a);
    let hm = phase_packed_real(wm, a);
    let hp = phase_packed_real(wp, a);
    SaddleDiagnostics {
        ic: InitialCondition::Packed,
        a: a.get(),
        saddle_lo: wm,
        saddle_hi: wp,
        phase_lo: hm,
        phase_hi: hp,
        second_deriv: (1.0 - 1.0 / (wm * wm), 1.0 - 1.0 / (wp * wp)),
        rate: rate_packed(a),
    }
}

/// `(2 + a) sqrt(a + a^2/4) + 2 log(1 + a/2 - sqrt(a + a^2/4))`.
pub fn rate_packed(a: DeviationParam) -> f64 {
    let a = a.get();
    let q = (a + a * a / 4.0).sqrt();
    // 1 + a/2 - q = 1 / (1 + a/2 + q)
    (2.0 + a) * q - 2.0 * (1.0 + a / 2.0 + q).ln()
}

/// `-a^2/4 + (1 + a/2) sqrt(a + a^2/4) + log(1 + a/2 - sqrt(a + a^2/4))`.
pub fn rate_stat(a: DeviationParam) -> f64 {
    let a = a.get();
    let q = (a + a * a / 4.0).sqrt();
    // (1 + a/2) q - a^2/4 = (1 + a/2) q - (q^2 - a) rewritten to avoid the a^2 cancellation
    let lead = a + q * (1.0 + a / 2.0 - q);
    lead - (1.0 + a / 2.0 + q).ln()
}

/// `G(z)` for real `z < -1`.
pub fn phase_flat(z: f64, a: DeviationParam) -> Result<f64> {
    if !(z < -1.0) {
        return Err(Error::invalid(format!("G(z) requires z < -1, got {z}")));
    }
    let (p, p1) = phi_real_parts(z)?;
    let a = a.get();
    Ok(0.5 * (z + 1.0) * (z + 1.0) - 0.5 * p1 * p1 + a * (z - p))
}

/// `G'(z) = (z - phi)/(z (phi + 1)) ((z + 1)(phi + 1) + a)`.
pub fn phase_flat_d1(z: f64, a: DeviationParam) -> Result<f64> {
    if !(z < -1.0) {
        return Err(Error::invalid(format!("G'(z) requires z < -1, got {z}")));
    }
    let (p, p1) = phi_real_parts(z)?;
    Ok((z - p) / (z * p1) * ((z + 1.0) * p1 + a.get()))
}

/// `G` on the complex plane, given `phi(z)` (computed by the caller on the
/// branch that matches its contour).
pub fn phase_flat_complex(z: Complex64, phi_z: Complex64, a: DeviationParam) -> Complex64 {
    let a = a.get();
    (z + 1.0) * (z + 1.0) * 0.5 - (phi_z + 1.0) * (phi_z + 1.0) * 0.5 + a * (z - phi_z)
}

fn za_residual(z: f64, a: f64) -> Result<f64> {
    let (_, p1) = phi_real_parts(z)?;
    Ok((z + 1.0) * p1 + a)
}

/// Unique root `z_a < -1` of `(z + 1)(phi(z) + 1) + a = 0`.
pub fn solve_za(a: DeviationParam) -> Result<f64> {
    let av = a.get();
    let (mut lo, mut hi) = (-3.0 - av, -1.0 - 1e-9);
    let (flo, fhi) = (za_residual(lo, av)?, za_residual(hi, av)?);
    if !(flo < 0.0 && fhi > 0.0) {
        return Err(Error::numeric(format!(
            "z_a bracket [{lo}, {hi}] does not change sign ({flo:e}, {fhi:e})"
        )));
    }
    while hi - lo > 1e-14 * lo.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if za_residual(mid, av)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut z = 0.5 * (lo + hi);
    // Newton polish: d/dz (z+1)(phi+1) = (phi+1) + (z+1) phi'
    for _ in 0..2 {
        let (p, p1) = phi_real_parts(z)?;
        let dphi = (1.0 + z) * p / (z * p1);
        let f = (z + 1.0) * p1 + av;
        let df = p1 + (z + 1.0) * dphi;
        let next = z - f / df;
        if next.is_finite() && next < -1.0 && za_residual(next, av)?.abs() <= f.abs() {
            z = next;
        }
    }
    Ok(z)
}

/// `eta = d^2/dtau^2 G(gamma(tau))` at `tau = 0`.
pub fn flat_eta(za: f64) -> Result<f64> {
    let (p, p1) = phi_real_parts(za)?;
    let z1 = za + 1.0;
    Ok(4.0 * PI * PI * (p - za) * (p / (p1 * p1) + za / (z1 * z1)))
}

/// Flat rate `(phi(z_a) - z_a)((z_a + phi(z_a))/2 + 1 + a) = -G(z_a)`.
pub fn rate_flat(a: DeviationParam) -> Result<SaddleDiagnostics> {
    let za = solve_za(a)?;
    let (p, p1) = phi_real_parts(za)?;
    let av = a.get();
    // (z + phi)/2 + 1 + a written with the accurate shifts z+1 and phi+1
    let rate = (p - za) * (0.5 * ((za + 1.0) + p1) + av);
    let eta = flat_eta(za)?;
    Ok(SaddleDiagnostics {
        ic: InitialCondition::Flat,
        a: av,
        saddle_lo: za,
        saddle_hi: p,
        phase_lo: phase_flat(za, a)?,
        phase_hi: 0.0,
        second_deriv: (eta, eta),
        rate,
    })
}

/// Rate function for any initial condition.
pub fn rate(ic: InitialCondition, a: DeviationParam) -> Result<f64> {
    match ic {
        InitialCondition::Packed => Ok(rate_packed(a)),
        InitialCondition::Flat => Ok(rate_flat(a)?.rate),
        InitialCondition::Stationary => Ok(rate_stat(a)),
    }
}

/// Asymptotic regime of `rate_asymptote`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Small,
    Large,
}

/// Leading small-/large-`a` behaviour of the flat and stationary rates.
pub fn rate_asymptote(ic: InitialCondition, a: DeviationParam, regime: Regime) -> Result<f64> {
    let a = a.get();
    match (ic, regime) {
        (InitialCondition::Flat, Regime::Small) => Ok(4.0 / 3.0 * a.powf(1.5)),
        (InitialCondition::Flat, Regime::Large) => Ok(0.5 * (a + 1.0) * (a + 1.0)),
        (InitialCondition::Stationary, Regime::Small) => Ok(2.0 / 3.0 * a.powf(1.5)),
        (InitialCondition::Stationary, Regime::Large) => Ok(a + 0.5 - a.ln()),
        (InitialCondition::Packed, _) => Err(Error::invalid(
            "rate_asymptote is defined for the flat and stationary conditions",
        )),
    }
}
