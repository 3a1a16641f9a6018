use std::f64::consts::E;

use dartsketch::analysis::quadrature::integrate_real_line;
use dartsketch::analysis::{
    curtain_grid_search, kappa_curtain, kappa_loglog, kappa_numeric, kappa_pcsa, KappaScheme,
};
use proptest::prelude::*;

const SCHEMES: [KappaScheme; 3] = [KappaScheme::Pcsa, KappaScheme::LogLog, KappaScheme::Curtain];

fn closed(scheme: KappaScheme, q: f64, a: u32, h: u32) -> f64 {
    match scheme {
        KappaScheme::Pcsa => kappa_pcsa(q),
        KappaScheme::LogLog => kappa_loglog(q),
        KappaScheme::Curtain => kappa_curtain(q, a, h),
    }
}

/// Three bases, three window shapes and three densities.
fn grid() -> Vec<(f64, u32, u32, f64)> {
    let mut out = Vec::new();
    for q in [2.0, E, 4.0] {
        for (a, h) in [(1, 0), (2, 1), (4, 3)] {
            for lambda in [1.0, 10.0, 100.0] {
                out.push((q, a, h, lambda));
            }
        }
    }
    out
}

#[test]
fn quadrature_matches_closed_forms_on_grid() {
    let g = grid();
    assert_eq!(g.len(), 27);
    for (q, a, h, lambda) in g {
        for s in SCHEMES {
            let num = kappa_numeric(s, q, a, h, lambda).unwrap().value;
            let exact = closed(s, q, a, h);
            assert!((num - exact).abs() <= 1e-6, "{s:?} q={q} a={a} h={h} λ={lambda}: {num} vs {exact}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn kappa_does_not_depend_on_lambda(q in 1.5f64..8.0, a in prop::sample::select(vec![1u32, 2, 4, 8]), h in 0u32..5) {
        for s in SCHEMES {
            let values: Vec<f64> = [1.0, 10.0, 100.0]
                .iter()
                .map(|&l| kappa_numeric(s, q, a, h, l).unwrap().value)
                .collect();
            let spread = values.iter().cloned().fold(f64::MIN, f64::max) - values.iter().cloned().fold(f64::MAX, f64::min);
            prop_assert!(spread <= 1e-8, "{:?} q={} a={} h={}: {:?}", s, q, a, h, values);
        }
    }

    #[test]
    fn scale_integral_identity(c0 in 0.1f64..10.0, c1 in 0.1f64..10.0, q in 1.2f64..10.0) {
        let ln_q = q.ln();
        let got = integrate_real_line(|t| c0 * q.powf(-t) * (-c1 * q.powf(-t)).exp(), 1e-11, 0.0).unwrap();
        let want = c0 / (c1 * ln_q);
        prop_assert!((got.value - want).abs() <= 1e-8 * want.max(1.0), "{} vs {}", got.value, want);
    }
}

#[test]
fn window_limits() {
    for q in [2.0, E, 3.5] {
        assert!((kappa_curtain(q, 2, 40) - kappa_pcsa(q)).abs() < 1e-9);
        assert!((kappa_curtain(q, 1 << 15, 0) - kappa_loglog(q)).abs() < 1e-6);
    }
}

#[test]
fn grid_optimum_is_stable_under_refinement() {
    let a = [1, 2, 4, 8];
    let h = [0, 1, 2, 3, 4];
    let coarse = curtain_grid_search(1.5, 5.0, 0.01, &a, &h).unwrap();
    let fine = curtain_grid_search(1.5, 5.0, 0.005, &a, &h).unwrap();
    assert_eq!((coarse.a, coarse.h), (2, 1));
    assert_eq!((fine.a, fine.h), (coarse.a, coarse.h));
    assert!((fine.q - coarse.q).abs() <= 0.01);
    assert!((coarse.q - 2.91).abs() < 0.015);
    assert!(fine.mvp <= coarse.mvp);
}
