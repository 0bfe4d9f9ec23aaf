use proptest::prelude::*;

use super::oracles::{annulus_report, window_report};
use super::*;

fn quick(entry: Entry) -> FreConfig {
    let mut c = FreConfig::new(entry, 1.5);
    c.samples = 300;
    c.refine_budget = 24;
    c
}

#[test]
fn oracle_exponents() {
    let ms = logspace(1.0, 100.0, 5);
    let r = window_report(0.0, &ms, 0.05).unwrap();
    assert!((r.beta - 0.5).abs() < 0.05 && r.residual < 1e-9, "{}", r.beta);
    let r = annulus_report(200.0, 100.0, &ms, 0.05).unwrap();
    assert!((r.beta - 1.0).abs() < 0.05, "{}", r.beta);
    // beta = 1 leaves no room for b'
    assert!(r.passes && !r.admissible());
}

#[test]
fn window_values_match_closed_form() {
    let ms = [1.0, 2.0, 10.0];
    let r = window_report(3.0, &ms, 0.05).unwrap();
    for row in &r.rows {
        assert!((row.sup - oracles::window_length(3.0, row.m)).abs() < 1e-12);
    }
}

fn sampled_points(cfg: &FreConfig, n: u64) -> Vec<FrePoint> {
    let layout = cfg.layout().unwrap();
    (0..n)
        .filter_map(|i| draw_point(cfg, &layout, &mut stream(cfg.seed, i)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn nondecreasing_in_m(i in 0u64..10_000, which in 0usize..3) {
        let entry = [Entry::KdvSmoothA, Entry::NlsA, Entry::KdvNosmooth][which];
        let cfg = FreConfig::new(entry, 1.5);
        let layout = cfg.layout().unwrap();
        if let Some(p) = draw_point(&cfg, &layout, &mut stream(7, i)) {
            let mut prev = 0.0;
            for m in [1.0, 3.0, 10.0, 30.0] {
                let v = restricted_integral(&cfg, &p.fixed, p.alpha, p.sigma, m).unwrap();
                prop_assert!(v >= prev * (1.0 - 2.0 * cfg.rtol), "{v} < {prev} at M={m}");
                prev = v;
            }
        }
    }

    #[test]
    fn reflection_symmetry(i in 0u64..10_000, which in 0usize..3) {
        let entry = [Entry::KdvSmoothB, Entry::NlsB, Entry::KdvNosmooth][which];
        let cfg = FreConfig::new(entry, 1.5).with_signs(if entry.dispersion() == Dispersion::Cubic {
            &[1.0; 5]
        } else {
            &[1.0, -1.0, -1.0]
        });
        let layout = cfg.layout().unwrap();
        if let Some(p) = draw_point(&cfg, &layout, &mut stream(11, i)) {
            // the cubic phase is odd, the quadratic one even
            let alpha = match entry.dispersion() {
                Dispersion::Cubic => -p.alpha,
                Dispersion::Quadratic => p.alpha,
            };
            let flipped: Vec<f64> = p.fixed.iter().map(|x| -x).collect();
            let a = restricted_integral(&cfg, &p.fixed, p.alpha, p.sigma, 10.0).unwrap();
            let b = restricted_integral(&cfg, &flipped, alpha, -p.sigma, 10.0).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-300), "{a} vs {b}");
        }
    }
}

#[test]
fn zero_multiplier_has_zero_sup() {
    let mut cfg = quick(Entry::NlsA);
    cfg.constant_multiplier = Some(0.0);
    let (sup, _) = sup_restricted_integral(&cfg, 10.0).unwrap();
    assert_eq!(sup, 0.0);
}

#[test]
fn constant_multiplier_scales_the_measure() {
    let mut one = quick(Entry::NlsA);
    one.constant_multiplier = Some(1.0);
    let mut two = one.clone();
    two.constant_multiplier = Some(2.0);
    let p = &sampled_points(&one, 5)[0];
    let a = restricted_integral(&one, &p.fixed, p.alpha, p.sigma, 5.0).unwrap();
    let b = restricted_integral(&two, &p.fixed, p.alpha, p.sigma, 5.0).unwrap();
    assert_eq!(2.0 * a, b);
}

#[test]
fn nosmooth_sup_is_seed_stable() {
    let mut cfg = FreConfig::new(Entry::KdvNosmooth, 1.5);
    let (a, _) = sup_restricted_integral(&cfg, 10.0).unwrap();
    cfg.seed = 1;
    let (b, _) = sup_restricted_integral(&cfg, 10.0).unwrap();
    assert!(a.is_finite() && b.is_finite());
    assert!((a - b).abs() <= 0.3 * a.min(b), "{a} vs {b}");
}

/// Smallest `|dPhi/dxi_1|` on the window support along the free line, over `|xi|`.
fn min_gradient(cfg: &FreConfig, p: &FrePoint, m: f64) -> Option<f64> {
    let layout = cfg.layout().unwrap();
    let prob = layout.problem(&p.fixed, p.sigma).unwrap();
    let poly = prob.phase_poly(0.0);
    let xi = p.fixed[0].abs();
    let n = 20_000;
    (0..=n)
        .map(|k| -xi + 2.0 * xi * k as f64 / n as f64)
        .filter(|s| prob.in_region([*s, 0.0]) && (quad::poly_eval(&poly, *s) - p.alpha).abs() < m)
        .map(|s| (poly[1] + 2.0 * poly[2] * s + 3.0 * poly[3] * s * s).abs() / xi)
        .reduce(f64::min)
}

#[test]
fn case1_argmax_sits_where_the_phase_is_flattest() {
    let mut cfg = FreConfig::new(Entry::NlsA, 1.5);
    cfg.nls_case1 = true;
    let m = 10.0;
    let (_, best) = sup_restricted_integral(&cfg, m).unwrap();
    let g_best = min_gradient(&cfg, &best, m).unwrap();
    let mut gs: Vec<f64> = sampled_points(&cfg, 400)
        .iter()
        .filter_map(|p| min_gradient(&cfg, p, m))
        .collect();
    gs.sort_by(|a, b| a.total_cmp(b));
    let rank = gs.iter().filter(|g| **g < g_best).count() as f64 / gs.len() as f64;
    assert!(rank <= 0.1, "argmax gradient {g_best} ranks at {rank}");
}

#[test]
fn catalog_reports_pass_at_theta_one_and_a_half() {
    for entry in [Entry::KdvNosmooth, Entry::NlsA, Entry::NlsB] {
        let r = scaling_exponent(&quick(entry)).unwrap();
        assert!(r.passes && r.admissible() && r.monotone, "{}: beta {}", r.label, r.beta);
        assert_eq!(r.bprime_hi, -0.5 * r.beta);
    }
}

#[test]
fn search_is_reproducible() {
    let cfg = quick(Entry::NlsB);
    assert_eq!(scaling_exponent(&cfg).unwrap(), scaling_exponent(&cfg).unwrap());
}

#[test]
fn rejects_bad_input() {
    let mut cfg = quick(Entry::NlsA);
    cfg.m_grid = vec![1.0, 10.0];
    assert!(scaling_exponent(&cfg).is_err());
    let cfg = quick(Entry::NlsA);
    assert!(restricted_integral(&cfg, &[5.0, 1.0], 0.0, 0.0, 0.5).is_err());
    // the shift exceeds half of |xi_2|
    assert!(restricted_integral(&cfg, &[5.0, 1.0], 0.0, 0.6, 2.0).is_err());
    assert!(restricted_integral(&cfg, &[5.0], 0.0, 0.0, 2.0).is_err());
    let mut cfg = quick(Entry::KdvSmoothA);
    cfg.signs = vec![1.0, -1.0, 1.0, 1.0, 1.0];
    assert!(cfg.validate().is_err());
    assert!(FreConfig::new(Entry::NlsA, 1.5).with_signs(&[1.0, 1.0]).validate().is_err());
}

#[test]
fn avoid_list_defaults() {
    let plus = FreConfig::new(Entry::NlsA, 1.5).with_signs(&[1.0, 1.0, -1.0]);
    assert_eq!(plus.avoid_list, vec![-2.0]);
    assert!(FreConfig::new(Entry::NlsA, 1.5).avoid_list.is_empty());
    // sigma = -2 xi is excluded when the shift cap is lifted
    let mut cfg = plus.clone();
    cfg.shift_cap = 10.0;
    let layout = cfg.layout().unwrap();
    let p = FrePoint { fixed: vec![3.0, 1.0], alpha: 0.0, sigma: -6.1 };
    assert!(!cfg.point_admissible(&layout, &p));
    let q = FrePoint { sigma: -5.0, ..p };
    assert!(cfg.point_admissible(&layout, &q));
}
