//! One function per subcommand. Configs are parsed and validated first;
//! nothing touches the disk here.

use gevrey_core::evolution::{drift_exponent, run_trajectory, Diagnostics, EvolutionConfig};
use gevrey_core::extension::{knee, local_lifespan, sigma_curve, simulate_induction};
use gevrey_core::fre::{catalog, scaling_exponent};
use gevrey_core::multiplier::{sup_defect_ratio, thinned_samples, Stratum, SUP_MIN_SAMPLES};
use gevrey_core::weights::estimate_radius;
use gevrey_core::SpectralField;
use serde::Serialize;

use crate::config::{
    parse, DriftScanConfig, ExtensionConfig, FreScanConfig, MultiplierScanConfig, RadiusConfig, SolveConfig, VerifyConfig,
};
use crate::manifest::Input;
use crate::verify::{run_battery, VerifyOptions, SEED_SPREAD};
use crate::{columns, Artifact, Command, Failure, Outcome};

pub const QUICK_MULTIPLIER_SAMPLES: u64 = 100_000;
pub const QUICK_FRE_SAMPLES: usize = 200;

pub fn execute(command: Command, input: &Input) -> Result<Outcome, Failure> {
    match command {
        Command::Solve => solve(input),
        Command::DriftScan => drift_scan(input),
        Command::MultiplierScan => multiplier_scan(input),
        Command::FreScan => fre_scan(input),
        Command::Extension => extension(input),
        Command::Radius => radius(input),
        Command::Verify => verify(input),
    }
}

fn grid_constants(o: &mut Outcome, cfg: &EvolutionConfig) -> Result<(), Failure> {
    let rule = cfg.dealias_rule();
    o.derive("dx", cfg.grid.dx());
    o.derive("dxi", cfg.grid.dxi());
    o.derive("nyquist", cfg.grid.nyquist());
    o.derive("dealias_fraction", rule.fraction);
    o.derive("xi_max", Diagnostics::new(cfg)?.band_max());
    o.derive("n_steps", cfg.n_steps());
    Ok(())
}

/// `ln |u(xi)|` on the nonnegative retained modes.
fn spectrum(field: &SpectralField) -> String {
    let g = field.grid();
    let mut rows: Vec<(f64, f64)> = field
        .coeffs()
        .iter()
        .enumerate()
        .filter(|(j, c)| g.frequency(*j) >= 0.0 && c.norm() > 0.0)
        .map(|(j, c)| (g.frequency(j), c.norm().ln()))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    columns(["xi", "ln_abs_u"], rows)
}

fn solve(input: &Input) -> Result<Outcome, Failure> {
    let cfg: SolveConfig = parse(input.config_text()?)?;
    let plan = cfg.plan()?;
    let u0 = plan.initial.field(&plan.evolution)?;
    let traj = run_trajectory(&u0, &plan.evolution, &plan.sigmas)?;
    let l = &traj.ledger;
    let mut o = Outcome::default();
    grid_constants(&mut o, &plan.evolution)?;
    o.derive("sigmas", &plan.sigmas);
    let drift = |c: &[f64]| c.iter().map(|x| (x - c[0]).abs()).fold(0.0, f64::max) / c[0].abs();
    o.derive("mass_rel_drift", drift(&l.mass));
    o.derive("energy_rel_drift", drift(&l.energy));
    o.artifacts.push(Artifact::text("ledger.csv", l.to_csv()));
    o.artifacts.push(Artifact::text("spectrum_final.dat", spectrum(&traj.final_state)));
    o.summary = format!(
        "{} rows; mass drift {:e}, energy drift {:e}\n",
        l.len(),
        drift(&l.mass),
        drift(&l.energy)
    );
    Ok(o)
}

#[derive(Serialize)]
struct ThetaFit<'a> {
    sigmas: &'a [f64],
    drifts: &'a [f64],
    noise: &'a [f64],
    used: &'a [bool],
    base_drift: f64,
    slope: f64,
    intercept: f64,
    residual: f64,
    theta_emp: f64,
}

fn drift_scan(input: &Input) -> Result<Outcome, Failure> {
    let cfg: DriftScanConfig = parse(input.config_text()?)?;
    let plan = cfg.plan()?;
    let u0 = plan.initial.field(&plan.evolution)?;
    let d = drift_exponent(&u0, &plan.evolution, &plan.sigmas, plan.evolution.t_end)?;
    let mut o = Outcome::default();
    grid_constants(&mut o, &plan.evolution)?;
    o.derive("theta_emp", d.theta_emp);
    o.derive("C", d.fit.intercept.exp());
    o.artifacts.push(Artifact::text("ledger.csv", d.ledger.to_csv()));
    o.artifacts.push(Artifact::json(
        "theta_fit.json",
        &ThetaFit {
            sigmas: &d.sigmas,
            drifts: &d.drifts,
            noise: &d.noise,
            used: &d.used,
            base_drift: d.base_drift,
            slope: d.fit.slope,
            intercept: d.fit.intercept,
            residual: d.fit.residual,
            theta_emp: d.theta_emp,
        },
    ));
    o.artifacts.push(Artifact::text(
        "drift_vs_sigma.dat",
        columns(["sigma", "max_drift"], d.sigmas.iter().copied().zip(d.drifts.iter().copied())),
    ));
    o.summary = format!("theta_emp = {}\n", d.theta_emp);
    Ok(o)
}

fn multiplier_scan(input: &Input) -> Result<Outcome, Failure> {
    let mut cfg: MultiplierScanConfig = parse(input.config_text()?)?;
    if let Some(s) = input.seed {
        cfg.seeds = vec![s, s + 1];
    }
    if input.quick {
        cfg.samples = cfg.samples.min(QUICK_MULTIPLIER_SAMPLES).max(SUP_MIN_SAMPLES);
    }
    cfg.validate()?;
    let mut o = Outcome::default();
    o.seeds = cfg.seeds.clone();
    o.derive("samples", cfg.samples);
    o.derive("stability_factor", gevrey_core::multiplier::STABILITY_FACTOR);
    o.derive("seed_spread_limit", SEED_SPREAD);
    let mut reports = Vec::new();
    let mut csv = String::from("k,theta,seed,sup,max_1.1,max_1.2,max_2,max_3,stable\n");
    for &k in &cfg.k {
        for &theta in &cfg.theta {
            let mut sups = Vec::new();
            for &seed in &cfg.seeds {
                let r = sup_defect_ratio(k, theta, cfg.samples, seed)?;
                let m: Vec<String> = Stratum::ALL.iter().map(|s| format!("{:e}", r.stratum(*s).max_ratio)).collect();
                csv.push_str(&format!("{k},{theta},{seed},{:e},{},{}\n", r.sup, m.join(","), r.stable));
                if !r.stable {
                    o.flagged.push(format!("k={k} theta={theta} seed={seed}: second half exceeds first"));
                }
                sups.push(r.sup);
                reports.push(r);
            }
            let (lo, hi) = sups.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), s| (lo.min(*s), hi.max(*s)));
            if hi > SEED_SPREAD * lo {
                o.flagged.push(format!("k={k} theta={theta}: seeds disagree by {:.3}", hi / lo));
            }
            let rows = thinned_samples(k, theta, cfg.samples, cfg.seeds[0], cfg.csv_rows)?;
            let mut s = String::from("sigma,");
            s.push_str(&(1..=k).map(|j| format!("xi_{j}")).collect::<Vec<_>>().join(","));
            s.push_str(",defect,bound,ratio,stratum\n");
            for r in rows {
                let xi: Vec<String> = r.freqs.iter().map(|x| format!("{x:e}")).collect();
                s.push_str(&format!(
                    "{:e},{},{:e},{:e},{:e},{}\n",
                    r.sigma,
                    xi.join(","),
                    r.defect,
                    r.bound,
                    r.ratio,
                    r.stratum.label()
                ));
            }
            o.artifacts.push(Artifact::text(&format!("samples_k{k}_theta{theta}.csv"), s));
        }
    }
    o.summary = csv.clone();
    o.artifacts.push(Artifact::text("multiplier.csv", csv));
    o.artifacts.push(Artifact::json("multiplier.json", &reports));
    Ok(o)
}

fn fre_scan(input: &Input) -> Result<Outcome, Failure> {
    let cfg: FreScanConfig = parse(input.config_text()?)?;
    let mut c = cfg.fre_config()?;
    if let Some(s) = input.seed {
        c.seed = s;
    }
    if input.quick {
        c.samples = c.samples.min(QUICK_FRE_SAMPLES);
    }
    let r = scaling_exponent(&c)?;
    let mut o = Outcome::default();
    o.seeds = vec![c.seed];
    o.derive("kappa", catalog::KAPPA);
    o.derive("eps", catalog::EPS);
    o.derive("fre_config", &c);
    o.derive("beta", r.beta);
    o.derive("bprime_interval", [r.bprime_lo, r.bprime_hi]);
    if !r.stable {
        o.flagged.push(format!("{}: split halves disagree", r.label));
    }
    if r.diverging {
        o.flagged.push(format!("{}: maximizer at the truncation edge", r.label));
    }
    o.artifacts.push(Artifact::text("sup_vs_M.dat", columns(["M", "sup"], r.rows.iter().map(|x| (x.m, x.sup)))));
    o.summary = format!(
        "{}: beta = {:.4}, passes = {}, b' in ({}, {})\n",
        r.label, r.beta, r.passes, r.bprime_lo, r.bprime_hi
    );
    o.artifacts.push(Artifact::json("fre_report.json", &r));
    Ok(o)
}

fn extension(input: &Input) -> Result<Outcome, Failure> {
    let cfg: ExtensionConfig = parse(input.config_text()?)?;
    let p = cfg.params()?;
    let grid = cfg.t_grid()?;
    let horizons = if cfg.induction_t.is_empty() { vec![cfg.t_max] } else { cfg.induction_t.clone() };
    let curve = sigma_curve(&p, &grid)?;
    let ledgers = horizons.iter().map(|t| simulate_induction(&p, *t)).collect::<gevrey_core::Result<Vec<_>>>()?;
    let mut o = Outcome::default();
    o.derive("K", p.k());
    o.derive("q", p.q());
    o.derive("delta", local_lifespan(&p)?);
    o.derive("knee", knee(&p)?);
    o.derive("slope", curve.slope);
    for l in &ledgers {
        if !l.holds() {
            o.flagged.push(format!("induction violated at step {:?}", l.first_violation));
        }
    }
    let mut csv = String::from("T,sigma,branch\n");
    for r in &curve.rows {
        let b = serde_json::to_value(r.branch).expect("plain enum");
        csv.push_str(&format!("{:e},{:e},{}\n", r.t, r.sigma, b.as_str().unwrap_or_default()));
    }
    o.artifacts.push(Artifact::text("sigma_curve.csv", csv));
    o.artifacts.push(Artifact::text("sigma_vs_T.dat", columns(["T", "sigma"], curve.rows.iter().map(|r| (r.t, r.sigma)))));
    o.artifacts.push(Artifact::json("sigma_curve.json", &curve));
    o.artifacts.push(Artifact::json("induction.json", &ledgers));
    o.summary = format!("slope = {:.9}, knee = {:e}\n", curve.slope, curve.knee);
    Ok(o)
}

fn radius(input: &Input) -> Result<Outcome, Failure> {
    let cfg: RadiusConfig = parse(input.config_text()?)?;
    let plan = cfg.plan()?;
    let u0 = plan.initial.field(&plan.evolution)?;
    let state = if plan.evolution.t_end > 0.0 {
        run_trajectory(&u0, &plan.evolution, &[])?.final_state
    } else {
        u0
    };
    let r = estimate_radius(&state, &cfg.options)?;
    let mut o = Outcome::default();
    grid_constants(&mut o, &plan.evolution)?;
    o.derive("sigma_hat", r.sigma_hat);
    if r.flagged {
        o.flagged.push(format!("decay fit residual {:e} above threshold", r.residual));
    }
    o.artifacts.push(Artifact::json("radius.json", &r));
    o.artifacts.push(Artifact::text("spectrum.dat", spectrum(&state)));
    o.summary = format!("sigma_hat = {} over {} modes\n", r.sigma_hat, r.modes_used);
    Ok(o)
}

fn verify(input: &Input) -> Result<Outcome, Failure> {
    let cfg: VerifyConfig = match &input.config {
        Some(t) => parse(t)?,
        None => VerifyConfig::default(),
    };
    let opts = VerifyOptions {
        quick: input.quick,
        seed: input.seed.unwrap_or(0),
        flip_remainder_sign: cfg.flip_remainder_sign,
    };
    let b = run_battery(&opts);
    for (n, s) in &b.seconds {
        eprintln!("criterion {n}: {s:.1} s");
    }
    let mut o = Outcome::default();
    o.seeds = vec![opts.seed];
    o.summary = b.render();
    o.checks_failed = !b.passed();
    o.artifacts.push(Artifact::text("verify.txt", b.render()));
    o.artifacts.push(Artifact::json("verify.json", &b.checks));
    Ok(o)
}
