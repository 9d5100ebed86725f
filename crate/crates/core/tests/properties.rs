use std::f64::consts::PI;

use bmcoll::contour::{build_flat_contour, build_packed_contours, ContourConfig};
use bmcoll::fredholm::{prob_packed_at, FredholmConfig, QuadGrid};
use bmcoll::lambert::{branch_strip, lambert_w, phi_prime, phi_real, residual_tolerance};
use bmcoll::saddle::{
    packed_saddles, phase_flat_complex, phase_flat_d1, phase_packed, phase_packed_real, rate_flat,
    rate_packed, rate_stat, solve_za,
};
use bmcoll::sim::{gue_top_nested, run_replica, SimConfig, SimIc};
use bmcoll::stats::{ks_one_sample, ks_two_sample};
use bmcoll::DeviationParam;
use num_complex::Complex64;
use proptest::prelude::*;

fn dp(a: f64) -> DeviationParam {
    DeviationParam::new(a).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn lambert_defining_identity(k in -3i32..=3, log_r in -3.0f64..3.0, th in -PI..PI) {
        let z = Complex64::from_polar(10f64.powf(log_r), th);
        let w = lambert_w(k, z).unwrap();
        prop_assert!((w * w.exp() - z).norm() <= residual_tolerance(z));
        let (lo, hi) = branch_strip(k);
        prop_assert!(w.im >= lo - 1e-12 && w.im <= hi + 1e-12, "k={} w={}", k, w);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn phi_pairs_roots(x in -60.0f64..-1.0001, dx in 1e-3f64..5.0) {
        let p = phi_real(x).unwrap();
        prop_assert!(p > -1.0 && p < 0.0);
        prop_assert!((p * p.exp() - x * x.exp()).abs() <= 1e-14 * (1.0 + (x * x.exp()).abs()));
        // decreasing on (-inf, -1)
        prop_assert!(phi_real(x - dx).unwrap() > p);
        let z = Complex64::new(x, 0.0);
        let pz = Complex64::new(p, 0.0);
        let d = phi_prime(z).unwrap();
        prop_assert!((d * z * (1.0 + pz) - (1.0 + z) * pz).norm() <= 1e-12);
    }

    #[test]
    fn packed_saddle_structure(a in 1e-2f64..1e2) {
        let a = dp(a);
        let (wm, wp) = packed_saddles(a);
        prop_assert!(wm < -1.0 && -1.0 < wp && wp < 0.0);
        prop_assert!((wm * wp - 1.0).abs() < 1e-12);
        let (hm, hp) = (phase_packed_real(wm, a), phase_packed_real(wp, a));
        prop_assert!(hp > 0.0 && hm < 0.0 && hp < -hm);
        prop_assert!((rate_stat(a) - hp).abs() <= 1e-12 * (1.0 + hp));
        prop_assert!((rate_packed(a) - (hp - hm)).abs() <= 1e-12 * (1.0 + hp - hm));
    }

    #[test]
    fn flat_saddle_structure(a in 1e-2f64..1e2) {
        let d = dp(a);
        let za = solve_za(d).unwrap();
        let p = phi_real(za).unwrap();
        prop_assert!(za < -1.0 && p > -1.0 && p < 0.0);
        prop_assert!(((za + 1.0) * (p + 1.0) + a).abs() <= 1e-12 * (1.0 + a));
        prop_assert!(phase_flat_d1(za, d).unwrap().abs() <= 1e-10 * (1.0 + a));
    }

    #[test]
    fn rates_increase_in_a(a in 1e-2f64..50.0, da in 1e-3f64..1.0) {
        let (x, y) = (dp(a), dp(a + da));
        prop_assert!(rate_packed(y) > rate_packed(x));
        prop_assert!(rate_stat(y) > rate_stat(x));
        prop_assert!(rate_flat(y).unwrap().rate > rate_flat(x).unwrap().rate);
        prop_assert!(rate_stat(x) > 0.0);
    }

    #[test]
    fn quad_grid_invariants(s in -5.0f64..5.0, d in 0.05f64..5.0, lam in 0.5f64..4.0) {
        let g = QuadGrid::exp_decay(s, d, 64).unwrap();
        prop_assert!(g.nodes[0] > s && g.nodes.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(g.weights.iter().all(|&w| w > 0.0));
        // in u the integrand is (1-u)^{lam/d - 1}: smooth enough once lam >= 3d,
        // and resolved by 64 nodes while lam/d stays modest
        if (3.0..40.0).contains(&(lam / d)) {
            let exact = (-lam * s).exp() / lam;
            let v = g.integrate(|x| (-lam * x).exp());
            prop_assert!((v - exact).abs() <= 1e-6 * exact, "{} vs {}", v, exact);
        }
    }

    #[test]
    fn ks_p_values_in_unit_interval(xs in prop::collection::vec(-3.0f64..3.0, 5..200), ys in prop::collection::vec(-3.0f64..3.0, 5..200)) {
        let one = ks_one_sample(&xs, |x| (x + 3.0) / 6.0);
        let two = ks_two_sample(&xs, &ys);
        for r in [one, two] {
            prop_assert!((0.0..=1.0).contains(&r.p_value) && (0.0..=1.0).contains(&r.statistic));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn contour_phase_maxima(a in 0.05f64..20.0) {
        let a = dp(a);
        let cfg = ContourConfig::default();
        let (line, circle) = build_packed_contours(a, 4.0, &cfg).unwrap();
        // line: Re H even in y, maximal at y = 0
        let c = line.critical;
        let hl = |k: usize| phase_packed(line.nodes[k], a).unwrap().re;
        for j in 1..c.min(400) {
            prop_assert!((hl(c + j) - hl(c - j)).abs() <= 1e-12 * (1.0 + hl(c).abs()));
            prop_assert!(hl(c + j) < hl(c + j - 1));
        }
        // circle: -Re H largest at w_+
        let hc: Vec<f64> = circle.nodes.iter().map(|&z| -phase_packed(z, a).unwrap().re).collect();
        let imax = hc.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).unwrap().0;
        prop_assert_eq!(imax, circle.critical);
        let g = build_flat_contour(a, &cfg).unwrap();
        let gc = phase_flat_complex(g.nodes[g.critical], g.images[g.critical], a).re;
        for k in 0..g.len() {
            prop_assert!(phase_flat_complex(g.nodes[k], g.images[k], a).re <= gc + 1e-12 * (1.0 + gc.abs()));
        }
        prop_assert!(g.conjugate_symmetry_defect() < 1e-12);
    }

    #[test]
    fn simulation_keeps_order_and_repeats(seed in any::<u64>(), rep in 0usize..1000, flat in any::<bool>()) {
        let ic = if flat { SimIc::Flat } else { SimIc::Stationary { rho: 0.7 } };
        let mut cfg = SimConfig::new(ic, 3, 1, seed);
        cfg.dt = 1e-2;
        let x = run_replica(&cfg, rep).unwrap();
        prop_assert!(x.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(x, run_replica(&cfg, rep).unwrap());
    }

    #[test]
    fn gue_top_grows_with_size(seed in any::<u64>()) {
        for v in gue_top_nested(6, 1.0, 20, seed).unwrap() {
            prop_assert!(v.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn packed_probability_monotone_in_level(a in 0.1f64..3.0, s in -1.0f64..1.0, ds in 0.05f64..1.0) {
        let cfg = FredholmConfig::default();
        let lo = prob_packed_at(3.0, dp(a), s, &cfg).unwrap();
        let hi = prob_packed_at(3.0, dp(a), s + ds, &cfg).unwrap();
        prop_assert!((0.0..=1.0).contains(&lo.p) && (0.0..=1.0).contains(&hi.p));
        prop_assert!(hi.p >= lo.p);
        prop_assert!((lo.p + lo.survival - 1.0).abs() < 1e-12);
    }
}
