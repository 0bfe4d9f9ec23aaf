use gevrey_core::evolution::{run_experiment, EvolutionConfig};
use gevrey_core::extension::{sigma_curve, Branch};
use gevrey_core::multiplier::sup_defect_ratio;
use gevrey_core::weights::{estimate_radius, RadiusOptions};
use gevrey_core::{Equation, ExtensionParams, Grid, InitialData, SpectralField};
use num_complex::Complex64;

#[test]
fn short_nls_run_keeps_mass() {
    let grid = Grid::new(128, 16.0 * std::f64::consts::PI).unwrap();
    let mut cfg = EvolutionConfig::new(Equation::Nls { p: 3 }, grid, 1e-3, 0.1).unwrap();
    cfg.edge_floor = Some(0.1);
    let u0 = InitialData::Gaussian { amplitude: 1.0, width: 2.0 }.field(&cfg).unwrap();
    let ledger = run_experiment(&u0, &cfg, &[0.0, 0.5]).unwrap();
    let m0 = ledger.mass[0];
    assert!(ledger.mass.iter().all(|m| (m / m0 - 1.0).abs() < 1e-10));
    assert!(ledger.e_sigma[1][0] >= ledger.e_sigma[0][0]);
}

#[test]
fn exponential_spectrum_radius() {
    let grid = Grid::new(256, 40.0 * std::f64::consts::PI).unwrap();
    let u = SpectralField::from_spectrum(grid, false, |xi| Complex64::new((-0.7 * xi.abs()).exp(), 0.0)).unwrap();
    let r = estimate_radius(&u, &RadiusOptions::default()).unwrap();
    assert!((r.sigma_hat - 0.7).abs() < 1e-10, "{r:?}");
    assert!(!r.flagged);
}

#[test]
fn sigma_curve_saturates_then_decays() {
    let params = ExtensionParams::new(Equation::Gkdv { k: 4 }, 1.0, 1.0, 1.0, 1.5);
    let ts: Vec<f64> = (0..13).map(|i| 10f64.powf(i as f64 * 0.5)).collect();
    let curve = sigma_curve(&params, &ts).unwrap();
    assert!(curve.rows.windows(2).all(|w| w[1].sigma <= w[0].sigma));
    assert_eq!(curve.rows.last().unwrap().branch, Branch::PowerLaw);
    assert!(curve.slope < 0.0);
}

#[test]
fn multiplier_sup_is_seed_deterministic() {
    let a = sup_defect_ratio(2, 1.5, 20_000, 3).unwrap();
    let b = sup_defect_ratio(2, 1.5, 20_000, 3).unwrap();
    assert_eq!(a.sup, b.sup);
    assert!(a.sup.is_finite() && a.sup > 0.0);
}
