use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use gevrey_core::evolution::{energy_flux, Solver};
use gevrey_core::extension::{max_sigma, simulate_induction};
use gevrey_core::fre::{draw_point, restricted_integrals, FrePoint};
use gevrey_core::multiplier::{defect_ratio, sup_defect_ratio};
use gevrey_core::sampling::stream;
use gevrey_core::spectral::{forward_transform, inverse_transform, make_grid};
use gevrey_core::{Entry, Equation, EvolutionConfig, ExtensionParams, FreConfig, InitialData};

const KDV: Equation = Equation::Gkdv { k: 4 };

fn reference(eq: Equation) -> EvolutionConfig {
    let mut c = EvolutionConfig::new(eq, make_grid(512, 40.0 * PI).unwrap(), 1e-3, 1.0).unwrap();
    c.edge_floor = None;
    c
}

fn spectral(c: &mut Criterion) {
    let g = make_grid(512, 40.0 * PI).unwrap();
    let v: Vec<f64> = g.nodes().iter().map(|x| 1.0 / x.cosh()).collect();
    c.bench_function("transform_round_trip_512", |b| {
        b.iter(|| inverse_transform(&forward_transform(black_box(&v), &g).unwrap()).unwrap())
    });
}

fn evolution(c: &mut Criterion) {
    for eq in [KDV, Equation::Nls { p: 3 }] {
        let cfg = reference(eq);
        let u = InitialData::Sech { amplitude: 1.0, lambda: 1.0 }.field(&cfg).unwrap();
        let solver = Solver::new(&cfg).unwrap();
        c.bench_function(&format!("etdrk4_step_{}", eq.name()), |b| b.iter(|| solver.step(black_box(&u)).unwrap()));
        let sigma = 5.0 / 4.25;
        c.bench_function(&format!("energy_flux_{}", eq.name()), |b| {
            b.iter(|| energy_flux(black_box(&u), sigma, &cfg).unwrap())
        });
    }
}

fn multiplier(c: &mut Criterion) {
    let xi = [3.0, -1.5, 0.7, 0.2, -0.05];
    c.bench_function("defect_ratio_k5", |b| b.iter(|| defect_ratio(0.8, 1.5, black_box(&xi)).unwrap()));
    let mut g = c.benchmark_group("sup");
    g.sample_size(10);
    g.bench_function("sup_defect_ratio_k2_1e5", |b| b.iter(|| sup_defect_ratio(2, 1.5, 100_000, 1).unwrap()));
    g.finish();
}

fn admissible_point(cfg: &FreConfig) -> FrePoint {
    let layout = cfg.layout().unwrap();
    (0..).find_map(|i| draw_point(cfg, &layout, &mut stream(cfg.seed, i))).unwrap()
}

fn fre(c: &mut Criterion) {
    for entry in [Entry::KdvNosmooth, Entry::KdvSmoothA, Entry::NlsA] {
        let cfg = FreConfig::new(entry, 1.5);
        let p = admissible_point(&cfg);
        c.bench_function(&format!("restricted_integrals_{}", entry.name()), |b| {
            b.iter(|| restricted_integrals(&cfg, black_box(&p.fixed), p.alpha, p.sigma, &cfg.m_grid).unwrap())
        });
    }
}

fn extension(c: &mut Criterion) {
    let p = ExtensionParams::new(KDV, 1.0, 1.0, 1.0, 1.5);
    c.bench_function("max_sigma", |b| b.iter(|| max_sigma(&p, black_box(1e4)).unwrap()));
    c.bench_function("simulate_induction_1e3", |b| b.iter(|| simulate_induction(&p, black_box(1e3)).unwrap()));
}

criterion_group!(benches, spectral, evolution, multiplier, fre, extension);
criterion_main!(benches);
