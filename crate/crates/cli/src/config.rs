//! Experiment configs. One flat TOML document per run; unknown keys are
//! rejected and every value is validated before any computation starts.

use std::f64::consts::PI;

use gevrey_core::evolution::{Diagnostics, Hooks, Scheme};
use gevrey_core::extension::NlsExponent;
use gevrey_core::fit::logspace;
use gevrey_core::weights::RadiusOptions;
use gevrey_core::{Entry, Equation, EvolutionConfig, ExtensionParams, FreConfig, Grid, InitialData};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::Failure;

pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T, Failure> {
    toml::from_str(text).map_err(|e| Failure::Config(e.to_string()))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    #[serde(rename = "L", default)]
    pub box_length: Option<f64>,
    /// The period in units of pi.
    #[serde(rename = "L_over_pi", default)]
    pub l_over_pi: Option<f64>,
}

impl GridSpec {
    pub fn grid(&self) -> Result<Grid, Failure> {
        let l = match (self.box_length, self.l_over_pi) {
            (Some(l), None) => l,
            (None, Some(q)) => q * PI,
            _ => return Err(invalid("grid needs exactly one of L and L_over_pi")),
        };
        Ok(Grid::new(self.n, l)?)
    }
}

fn default_edge_floor() -> f64 {
    1e-10
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Edge amplitude, relative to the initial peak, that aborts the run.
    #[serde(default = "default_edge_floor")]
    pub edge_floor: f64,
    #[serde(default = "one")]
    pub stride: usize,
}

fn evolution(model: Equation, grid: &GridSpec, time: &TimeSpec, hooks: Hooks) -> Result<EvolutionConfig, Failure> {
    let mut cfg = EvolutionConfig::new(model, grid.grid()?, time.dt, time.t_end)?;
    cfg.scheme = time.scheme;
    cfg.edge_floor = Some(time.edge_floor);
    cfg.stride = time.stride;
    cfg.hooks = hooks;
    cfg.validate()?;
    Ok(cfg)
}

/// Absolute sigmas followed by multiples of `1 / xi_max`.
fn sigma_list(cfg: &EvolutionConfig, sigmas: &[f64], sigma_xi: &[f64]) -> Result<Vec<f64>, Failure> {
    let band = Diagnostics::new(cfg)?.band_max();
    let out: Vec<f64> = sigmas.iter().copied().chain(sigma_xi.iter().map(|s| s / band)).collect();
    if out.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(invalid("sigmas must be finite and >= 0"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    #[serde(default)]
    pub sigmas: Vec<f64>,
    /// Sigmas given as `sigma * xi_max`.
    #[serde(default)]
    pub sigma_xi: Vec<f64>,
    pub model: Equation,
    pub grid: GridSpec,
    pub time: TimeSpec,
    pub initial: InitialData,
    #[serde(default)]
    pub hooks: Hooks,
}

pub struct SolvePlan {
    pub evolution: EvolutionConfig,
    pub initial: InitialData,
    pub sigmas: Vec<f64>,
}

impl SolveConfig {
    pub fn plan(&self) -> Result<SolvePlan, Failure> {
        let evolution = evolution(self.model, &self.grid, &self.time, self.hooks)?;
        let mut sigmas = vec![0.0];
        sigmas.extend(sigma_list(&evolution, &self.sigmas, &self.sigma_xi)?);
        sigmas.dedup();
        Ok(SolvePlan { evolution, initial: self.initial, sigmas })
    }
}

fn ten() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    #[serde(default)]
    pub sigmas: Vec<f64>,
    /// Log-spaced `sigma * xi_max` range.
    #[serde(default)]
    pub sigma_xi_range: Option<[f64; 2]>,
    #[serde(default = "ten")]
    pub n_sigma: usize,
}

/// `time.t_end` is the drift horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftScanConfig {
    pub model: Equation,
    pub grid: GridSpec,
    pub time: TimeSpec,
    pub initial: InitialData,
    pub scan: ScanSpec,
    #[serde(default)]
    pub hooks: Hooks,
}

impl DriftScanConfig {
    pub fn plan(&self) -> Result<SolvePlan, Failure> {
        let evolution = evolution(self.model, &self.grid, &self.time, self.hooks)?;
        let scaled = match self.scan.sigma_xi_range {
            Some([lo, hi]) if lo > 0.0 && hi > lo && self.scan.n_sigma >= 3 => logspace(lo, hi, self.scan.n_sigma),
            Some(_) => return Err(invalid("sigma_xi_range needs 0 < lo < hi and n_sigma >= 3")),
            None => Vec::new(),
        };
        let sigmas = sigma_list(&evolution, &self.scan.sigmas, &scaled)?;
        if sigmas.len() < 3 || sigmas.iter().any(|s| *s <= 0.0) || sigmas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("drift scan needs at least 3 ascending positive sigmas"));
        }
        Ok(SolvePlan { evolution, initial: self.initial, sigmas })
    }
}

fn two_seeds() -> Vec<u64> {
    vec![1, 2]
}

fn csv_cap() -> u64 {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierScanConfig {
    pub k: Vec<usize>,
    pub theta: Vec<f64>,
    pub samples: u64,
    #[serde(default = "two_seeds")]
    pub seeds: Vec<u64>,
    /// Rows of the per-run sample CSV.
    #[serde(default = "csv_cap")]
    pub csv_rows: u64,
}

impl MultiplierScanConfig {
    pub fn validate(&self) -> Result<(), Failure> {
        if self.k.is_empty() || self.theta.is_empty() || self.seeds.is_empty() {
            return Err(invalid("k, theta and seeds must be nonempty"));
        }
        if self.k.iter().any(|k| !(2..=8).contains(k)) {
            return Err(invalid("k must lie in 2..=8"));
        }
        if self.theta.iter().any(|t| !(*t >= 1.0 && t.is_finite())) {
            return Err(invalid("theta must be >= 1"));
        }
        if self.samples < gevrey_core::multiplier::SUP_MIN_SAMPLES {
            return Err(invalid(format!(
                "samples must be >= {}",
                gevrey_core::multiplier::SUP_MIN_SAMPLES
            )));
        }
        Ok(())
    }
}

/// Unset keys take the library defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreScanConfig {
    pub entry: Entry,
    pub theta: f64,
    #[serde(default)]
    pub signs: Option<Vec<f64>>,
    #[serde(default)]
    pub nls_case1: bool,
    #[serde(default)]
    pub constant_multiplier: Option<f64>,
    #[serde(rename = "M_grid", default)]
    pub m_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub shift_cap: Option<f64>,
    #[serde(default)]
    pub avoid_list: Option<Vec<f64>>,
    #[serde(default)]
    pub avoid_window: Option<f64>,
    #[serde(default)]
    pub xi_max: Option<f64>,
    #[serde(default)]
    pub rtol: Option<f64>,
    #[serde(default)]
    pub max_panels: Option<usize>,
    #[serde(default)]
    pub refine_budget: Option<usize>,
    #[serde(default)]
    pub fit_tol: Option<f64>,
}

impl FreScanConfig {
    pub fn fre_config(&self) -> Result<FreConfig, Failure> {
        let mut c = FreConfig::new(self.entry, self.theta);
        if let Some(s) = &self.signs {
            if s.len() != self.entry.arity() {
                return Err(invalid(format!("{} takes {} signs", self.entry.name(), self.entry.arity())));
            }
            c = c.with_signs(s);
        }
        c.nls_case1 = self.nls_case1;
        c.constant_multiplier = self.constant_multiplier;
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = &self.$f { c.$f = v.clone(); } )*};
        }
        set!(m_grid, samples, seed, shift_cap, avoid_list, avoid_window, xi_max, rtol, max_panels, refine_budget, fit_tol);
        c.layout()?;
        Ok(c)
    }
}

fn default_c0() -> f64 {
    1.0
}

fn default_a() -> f64 {
    2.0
}

fn twenty_five() -> usize {
    25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtensionConfig {
    pub sigma0: f64,
    #[serde(rename = "E0")]
    pub e0: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub theta: f64,
    #[serde(default = "default_c0")]
    pub c0: f64,
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(rename = "M", default = "default_c0")]
    pub big_m: f64,
    #[serde(default)]
    pub nls_exponent: NlsExponent,
    pub t_min: f64,
    pub t_max: f64,
    #[serde(default = "twenty_five")]
    pub n_t: usize,
    /// Horizons for the induction ledger; empty means `t_max`.
    #[serde(default)]
    pub induction_t: Vec<f64>,
    pub model: Equation,
}

impl ExtensionConfig {
    pub fn params(&self) -> Result<ExtensionParams, Failure> {
        let mut p = ExtensionParams::new(self.model, self.sigma0, self.e0, self.c, self.theta);
        p.c0 = self.c0;
        p.a = self.a;
        p.big_m = self.big_m;
        p.nls_exponent = self.nls_exponent;
        p.validate()?;
        if !(self.sigma0 > 0.0 && self.e0 > 0.0 && self.c > 0.0) {
            return Err(invalid("sigma0, E0 and C must be positive"));
        }
        Ok(p)
    }

    pub fn t_grid(&self) -> Result<Vec<f64>, Failure> {
        if !(self.t_min > 0.0 && self.t_max > self.t_min && self.n_t >= 2) {
            return Err(invalid("T grid needs 0 < t_min < t_max and n_t >= 2"));
        }
        Ok(logspace(self.t_min, self.t_max, self.n_t))
    }
}

/// With a `time` section the data is evolved before the fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiusConfig {
    pub model: Equation,
    pub grid: GridSpec,
    pub initial: InitialData,
    #[serde(default)]
    pub time: Option<TimeSpec>,
    #[serde(default)]
    pub options: RadiusOptions,
}

impl RadiusConfig {
    pub fn plan(&self) -> Result<SolvePlan, Failure> {
        let time = self.time.unwrap_or(TimeSpec {
            dt: 1e-3,
            t_end: 0.0,
            scheme: Scheme::default(),
            edge_floor: default_edge_floor(),
            stride: 1,
        });
        let evolution = evolution(self.model, &self.grid, &time, Hooks::default())?;
        let o = &self.options;
        if !(o.noise_floor >= 0.0 && (0.0..1.0).contains(&o.exclude_top) && o.min_modes >= 2) {
            return Err(invalid("radius options out of range"));
        }
        Ok(SolvePlan { evolution, initial: self.initial, sigmas: vec![0.0] })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Negates the remainder inside the flux; the flux check must then fail.
    #[serde(default)]
    pub flip_remainder_sign: bool,
}
