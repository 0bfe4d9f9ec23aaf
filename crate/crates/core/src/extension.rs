//! Bookkeeping of the global extension argument: local lifespan, the
//! energy ceiling, the step-by-step energy bound and the resulting radius
//! law `sigma(T) ~ T^{-1/theta}`.
//!
//! With `q = E0 + E0^{k/2+1}` and `K = M^k C q^{k/2} (1 + q^{k/2})`:
//!
//! ```text
//! ceiling    = 2 M q
//! delta      = c0 / (1 + 2 M q)^a
//! sigma(T)   = min(sigma0, (delta / (K T))^{1/theta})
//! increment  = C M^{k+1} sigma^theta q^{k/2+1} (1 + q^{k/2})
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::Equation;
use crate::fit::{fit_loglog, LineFit};

/// Exponent standing in for `k` in the NLS formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NlsExponent {
    /// `k = p - 1`, the degree of the nonlinearity `|u|^{p-1} u`.
    #[default]
    PMinusOne,
    /// `k = p`.
    P,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtensionParams {
    pub sigma0: f64,
    pub equation: Equation,
    #[serde(default)]
    pub nls_exponent: NlsExponent,
    #[serde(rename = "E0")]
    pub e0: f64,
    pub big_m: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub c0: f64,
    pub a: f64,
    pub theta: f64,
}

impl ExtensionParams {
    /// Defaults `c0 = 1`, `a = 2`, `M = 1`.
    pub fn new(equation: Equation, sigma0: f64, e0: f64, c: f64, theta: f64) -> Self {
        Self {
            sigma0,
            equation,
            nls_exponent: NlsExponent::default(),
            e0,
            big_m: 1.0,
            c,
            c0: 1.0,
            a: 2.0,
            theta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.equation.validate()?;
        let positive = [
            ("sigma0", self.sigma0),
            ("E0", self.e0),
            ("C", self.c),
            ("c0", self.c0),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.big_m >= 1.0 && self.big_m.is_finite()) {
            return Err(Error::InvalidParameter(format!("M must be >= 1, got {}", self.big_m)));
        }
        if !(self.a > 1.0 && self.a.is_finite()) {
            return Err(Error::InvalidParameter(format!("a must exceed 1, got {}", self.a)));
        }
        if !(1.0..2.0).contains(&self.theta) {
            return Err(Error::InvalidParameter(format!("theta must lie in [1, 2), got {}", self.theta)));
        }
        Ok(())
    }

    /// The exponent `k` of the formulas.
    pub fn k(&self) -> f64 {
        match (self.equation, self.nls_exponent) {
            (Equation::Gkdv { k }, _) => k as f64,
            (Equation::Nls { p }, NlsExponent::PMinusOne) => p as f64 - 1.0,
            (Equation::Nls { p }, NlsExponent::P) => p as f64,
        }
    }

    /// `E0 + E0^{k/2+1}`.
    pub fn q(&self) -> f64 {
        self.e0 + self.e0.powf(0.5 * self.k() + 1.0)
    }

    /// `K` with `sigma(T)^theta = delta / (K T)` on the power-law branch.
    fn growth(&self) -> f64 {
        let (k, q) = (self.k(), self.q());
        self.big_m.powf(k) * self.c * q.powf(0.5 * k) * (1.0 + q.powf(0.5 * k))
    }
}

pub fn gn_energy_bound(params: &ExtensionParams, sigma: f64) -> Result<f64> {
    params.validate()?;
    if !(sigma > 0.0 && sigma <= params.sigma0) {
        return Err(Error::InvalidParameter(format!(
            "sigma must lie in (0, sigma0 = {}], got {sigma}",
            params.sigma0
        )));
    }
    Ok(2.0 * params.big_m * params.q())
}

pub fn local_lifespan(params: &ExtensionParams) -> Result<f64> {
    params.validate()?;
    Ok(params.c0 / (1.0 + 2.0 * params.big_m * params.q()).powf(params.a))
}

pub fn max_sigma(params: &ExtensionParams, t: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("T must be positive, got {t}")));
    }
    let delta = local_lifespan(params)?;
    Ok(params.sigma0.min((delta / (params.growth() * t)).powf(1.0 / params.theta)))
}

/// Time at which the power law reaches `sigma0`.
pub fn knee(params: &ExtensionParams) -> Result<f64> {
    let delta = local_lifespan(params)?;
    Ok(delta / (params.growth() * params.sigma0.powf(params.theta)))
}

/// Energy added per lifespan step at shift `sigma`.
pub fn step_increment(params: &ExtensionParams, sigma: f64) -> f64 {
    let (k, q) = (params.k(), params.q());
    params.c * params.big_m.powf(k + 1.0) * sigma.powf(params.theta) * q.powf(0.5 * k + 1.0) * (1.0 + q.powf(0.5 * k))
}

/// Steps stored in an [`InductionLedger`]; longer runs keep evenly spaced checkpoints.
pub const LEDGER_ROWS: usize = 512;
/// Runs up to this many steps are summed one step at a time.
pub const ITERATE_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InductionLedger {
    pub delta: f64,
    pub sigma: f64,
    pub steps: u64,
    pub increment: f64,
    pub ceiling: f64,
    /// `(j, bound after step j)` at checkpoints, always including the last step.
    pub rows: Vec<(u64, f64)>,
    pub final_bound: f64,
    pub first_violation: Option<u64>,
}

impl InductionLedger {
    pub fn holds(&self) -> bool {
        self.first_violation.is_none()
    }

    /// `ceiling - final_bound`.
    pub fn margin(&self) -> f64 {
        self.ceiling - self.final_bound
    }
}

/// Induction at `sigma = max_sigma(T)`.
pub fn simulate_induction(params: &ExtensionParams, t: f64) -> Result<InductionLedger> {
    let sigma = max_sigma(params, t)?;
    simulate_induction_at(params, t, sigma)
}

/// Induction at an arbitrary shift, for negative controls.
pub fn simulate_induction_at(params: &ExtensionParams, t: f64, sigma: f64) -> Result<InductionLedger> {
    let delta = local_lifespan(params)?;
    if !(t >= delta * (1.0 - 1e-12) && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("T must be at least delta = {delta}, got {t}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let n = (((t / delta) * (1.0 + 1e-12)).floor() as u64).max(1);
    let inc = step_increment(params, sigma);
    let ceiling = 2.0 * params.big_m * params.q();
    let stride = n.div_ceil(LEDGER_ROWS as u64).max(1);
    let mut rows = Vec::new();
    let mut first_violation = None;
    let final_bound;
    if n <= ITERATE_LIMIT {
        let mut e = params.e0;
        for j in 1..=n {
            e += inc;
            if e > ceiling && first_violation.is_none() {
                first_violation = Some(j);
            }
            if j % stride == 0 || j == n {
                rows.push((j, e));
            }
        }
        final_bound = e;
    } else {
        let at = |j: u64| params.e0 + j as f64 * inc;
        let mut j = stride;
        while j < n {
            rows.push((j, at(j)));
            j += stride;
        }
        rows.push((n, at(n)));
        final_bound = at(n);
        if final_bound > ceiling {
            let j = (((ceiling - params.e0) / inc).floor() as u64 + 1).max(1);
            first_violation = Some(j.min(n));
        }
    }
    Ok(InductionLedger {
        delta,
        sigma,
        steps: n,
        increment: inc,
        ceiling,
        rows,
        final_bound,
        first_violation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Saturated,
    PowerLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaRow {
    #[serde(rename = "T")]
    pub t: f64,
    pub sigma: f64,
    pub branch: Branch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaCurve {
    pub rows: Vec<SigmaRow>,
    /// Fit of `log sigma` against `log T` on the power-law rows.
    pub fit: LineFit,
    pub slope: f64,
    /// Analytic crossover of the two branches.
    pub knee: f64,
    /// Grid cell `(T_i, T_{i+1})` where the branch changes, if inside the grid.
    pub knee_cell: Option<(f64, f64)>,
}

pub fn sigma_curve(params: &ExtensionParams, t_grid: &[f64]) -> Result<SigmaCurve> {
    let knee = knee(params)?;
    let rows = t_grid
        .iter()
        .map(|t| {
            let sigma = max_sigma(params, *t)?;
            let branch = if *t > knee { Branch::PowerLaw } else { Branch::Saturated };
            Ok(SigmaRow { t: *t, sigma, branch })
        })
        .collect::<Result<Vec<_>>>()?;
    let (ts, ss): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.branch == Branch::PowerLaw)
        .map(|r| (r.t, r.sigma))
        .unzip();
    if ts.is_empty() {
        return Err(Error::SaturatedGrid);
    }
    let fit = fit_loglog(&ts, &ss)?;
    let knee_cell = rows
        .windows(2)
        .find(|w| w[0].branch != w[1].branch)
        .map(|w| (w[0].t, w[1].t));
    Ok(SigmaCurve {
        rows,
        slope: fit.slope,
        fit,
        knee,
        knee_cell,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::logspace;
    use proptest::prelude::*;

    fn kdv(e0: f64, theta: f64) -> ExtensionParams {
        ExtensionParams::new(Equation::Gkdv { k: 4 }, 1.0, e0, 1.0, theta)
    }

    #[test]
    fn worked_values() {
        let p = kdv(1.0, 1.5);
        assert_eq!(gn_energy_bound(&p, 0.5).unwrap(), 4.0);
        assert!((local_lifespan(&p).unwrap() - 1.0 / 25.0).abs() < 1e-16);
        assert!(gn_energy_bound(&p, 1.5).is_err());
        let mut q = p;
        q.c0 = 3.0;
        assert!((local_lifespan(&q).unwrap() - 3.0 / 25.0).abs() < 1e-16);
        let p6 = ExtensionParams::new(Equation::Gkdv { k: 6 }, 1.0, 2.0, 1.0, 1.5);
        assert!(gn_energy_bound(&p6, 0.5).unwrap() > gn_energy_bound(&kdv(2.0, 1.5), 0.5).unwrap());
    }

    #[test]
    fn nls_exponent_modes() {
        let mut p = ExtensionParams::new(Equation::Nls { p: 3 }, 1.0, 2.0, 1.0, 1.5);
        assert_eq!(p.k(), 2.0);
        assert_eq!(p.q(), 2.0 + 4.0);
        p.nls_exponent = NlsExponent::P;
        assert_eq!(p.k(), 3.0);
        assert!((p.q() - (2.0 + 2f64.powf(2.5))).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        let mut p = kdv(1.0, 2.0);
        assert!(p.validate().is_err());
        p.theta = 1.5;
        p.a = 1.0;
        assert!(p.validate().is_err());
        p.a = 2.0;
        p.big_m = 0.5;
        assert!(p.validate().is_err());
        assert!(max_sigma(&kdv(1.0, 1.5), 0.0).is_err());
    }

    #[test]
    fn saturated_and_power_law_branches() {
        let p = kdv(1.0, 1.5);
        assert_eq!(max_sigma(&p, 1e-9).unwrap(), p.sigma0);
        let t = 10.0 * knee(&p).unwrap();
        let r = max_sigma(&p, 100.0 * t).unwrap() / max_sigma(&p, t).unwrap();
        assert!((r - 100f64.powf(-1.0 / 1.5)).abs() < 1e-12);
        let k = knee(&p).unwrap();
        let (lo, hi) = (max_sigma(&p, k * (1.0 - 1e-9)).unwrap(), max_sigma(&p, k * (1.0 + 1e-9)).unwrap());
        assert!((lo - hi).abs() < 1e-8);
    }

    #[test]
    fn curve_slope_and_knee() {
        for theta in [1.0, 1.5, 1.99] {
            let p = kdv(1.0, theta);
            let k = knee(&p).unwrap();
            let grid = logspace(k / 10.0, k * 1e3, 41);
            let c = sigma_curve(&p, &grid).unwrap();
            assert!((c.slope + 1.0 / theta).abs() < 1e-6, "{theta}: {}", c.slope);
            let (lo, hi) = c.knee_cell.unwrap();
            assert!(lo <= k && k <= hi);
        }
        let p = kdv(1.0, 1.5);
        let k = knee(&p).unwrap();
        assert_eq!(sigma_curve(&p, &logspace(k / 100.0, k / 2.0, 5)), Err(Error::SaturatedGrid));
    }

    #[test]
    fn induction_closes_at_max_sigma() {
        for e0 in [0.1, 1.0, 10.0] {
            let p = kdv(e0, 1.5);
            let delta = local_lifespan(&p).unwrap();
            for t in logspace(delta, 1e3 * delta, 13) {
                let l = simulate_induction(&p, t).unwrap();
                assert!(l.holds() && l.margin() >= 0.0, "E0={e0} T={t}");
            }
            let single = simulate_induction(&p, delta).unwrap();
            assert_eq!(single.steps, 1);
            let t = 1e3 * delta;
            let bad = simulate_induction_at(&p, t, 2.0 * max_sigma(&p, t).unwrap()).unwrap();
            assert!(bad.first_violation.is_some(), "E0={e0}");
        }
    }

    #[test]
    fn closed_form_matches_iteration() {
        let p = kdv(1.0, 1.5);
        let t = 1e3 * local_lifespan(&p).unwrap();
        let sigma = 3.0 * max_sigma(&p, t).unwrap();
        let l = simulate_induction_at(&p, t, sigma).unwrap();
        let j = l.first_violation.unwrap();
        assert!(p.e0 + (j - 1) as f64 * l.increment <= l.ceiling);
        assert!(p.e0 + j as f64 * l.increment > l.ceiling);
    }

    proptest! {
        #[test]
        fn max_sigma_monotone(e0 in 0.05f64..20.0, t in 1e-3f64..1e3, theta in 1.0f64..1.99) {
            let p = kdv(e0, theta);
            let s = max_sigma(&p, t).unwrap();
            prop_assert!(max_sigma(&p, 2.0 * t).unwrap() <= s);
            prop_assert!(max_sigma(&kdv(1.5 * e0, theta), t).unwrap() <= s);
        }
    }
}
