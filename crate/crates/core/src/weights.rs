//! Gevrey-type Fourier weights, Gevrey norms, gap ratios and the
//! Fourier-decay radius estimator.
//!
//! The smooth weight is `m(r) = 1` for `|r| <= 1`, `e^{|r|}` for `|r| >= 2`
//! and `exp(rho(|r| - 1))` in between, where
//! `rho(t) = 16 t^3 - 23 t^4 + 9 t^5` is the quintic with
//! `rho(0) = rho'(0) = rho''(0) = 0`, `rho(1) = 2`, `rho'(1) = 1`, `rho''(1) = 0`.
//! The scaled weight is `m_sigma(xi) = m(sigma xi)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::fit_line;
use crate::spectral::SpectralField;

/// Above this value of `sigma * xi_max` norms are accumulated in log space.
pub const LOG_SPACE_THRESHOLD: f64 = 300.0;
/// Default bound on `sigma * xi_max` beyond which a norm is reported as overflow.
pub const DEFAULT_OVERFLOW_BOUND: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeightKind {
    Exp,
    Cosh,
    Smooth,
    /// `1` below `cutoff`, `(cutoff/|xi|)^{1-index}` above it.
    Imethod { cutoff: f64, index: f64 },
}

impl WeightKind {
    pub fn name(&self) -> &'static str {
        match self {
            WeightKind::Exp => "exp",
            WeightKind::Cosh => "cosh",
            WeightKind::Smooth => "smooth",
            WeightKind::Imethod { .. } => "imethod",
        }
    }
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Gap-ratio kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapKind {
    Exp,
    Cosh,
}

impl FromStr for GapKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp" => Ok(GapKind::Exp),
            "cosh" => Ok(GapKind::Cosh),
            other => Err(Error::InvalidParameter(format!("unknown gap kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    pub kind: WeightKind,
    pub sigma: f64,
    pub sobolev_s: f64,
}

impl Weight {
    pub fn new(kind: WeightKind, sigma: f64, sobolev_s: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
        }
        if !sobolev_s.is_finite() {
            return Err(Error::InvalidParameter("sobolev index must be finite".into()));
        }
        if let WeightKind::Imethod { cutoff, index } = kind {
            if !(cutoff > 1.0 && cutoff.is_finite()) {
                return Err(Error::InvalidParameter(format!("cutoff N must be > 1, got {cutoff}")));
            }
            if !(index > 0.0 && index < 1.0) {
                return Err(Error::InvalidParameter(format!("index s must lie in (0,1), got {index}")));
            }
        }
        Ok(Self {
            kind,
            sigma,
            sobolev_s,
        })
    }

    pub fn smooth(sigma: f64) -> Result<Self> {
        Self::new(WeightKind::Smooth, sigma, 0.0)
    }

    pub fn exponential(sigma: f64) -> Result<Self> {
        Self::new(WeightKind::Exp, sigma, 0.0)
    }

    pub fn with_sobolev(mut self, s: f64) -> Self {
        self.sobolev_s = s;
        self
    }

    /// Natural log of the weight at `xi`.
    pub fn ln_eval(&self, xi: f64) -> f64 {
        let a = xi.abs();
        match self.kind {
            WeightKind::Exp => self.sigma * a,
            WeightKind::Cosh => ln_cosh(self.sigma * a),
            WeightKind::Smooth => ln_smooth(self.sigma * a),
            WeightKind::Imethod { cutoff, index } => {
                if a <= cutoff {
                    0.0
                } else {
                    (1.0 - index) * (cutoff / a).ln()
                }
            }
        }
    }

    pub fn eval(&self, xi: f64) -> f64 {
        self.ln_eval(xi).exp()
    }
}

fn ln_cosh(x: f64) -> f64 {
    let x = x.abs();
    if x < 20.0 {
        x.cosh().ln()
    } else {
        x - std::f64::consts::LN_2 + (-2.0 * x).exp().ln_1p()
    }
}

/// `rho(t) = 16 t^3 - 23 t^4 + 9 t^5` on `t in [0, 1]`.
pub fn bridge(t: f64) -> f64 {
    t * t * t * (16.0 + t * (-23.0 + 9.0 * t))
}

/// `ln m(r)` for the unscaled smooth weight.
pub fn ln_smooth(r: f64) -> f64 {
    let a = r.abs();
    if a <= 1.0 {
        0.0
    } else if a >= 2.0 {
        a
    } else {
        bridge(a - 1.0)
    }
}

/// Unscaled smooth weight `m(r)`.
pub fn smooth_unscaled(r: f64) -> f64 {
    ln_smooth(r).exp()
}

pub fn eval_weight(w: &Weight, xi: f64) -> Result<f64> {
    if !xi.is_finite() {
        return Err(Error::InvalidParameter(format!("frequency must be finite, got {xi}")));
    }
    if w.sigma < 0.0 {
        return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {}", w.sigma)));
    }
    Ok(w.eval(xi))
}

fn ln_japanese(xi: f64) -> f64 {
    0.5 * (xi * xi).ln_1p()
}

/// Natural log of the Gevrey norm. Never overflows; `-inf` for the zero field.
pub fn ln_gevrey_norm(field: &SpectralField, w: &Weight) -> f64 {
    let g = field.grid();
    let terms: Vec<f64> = field
        .coeffs()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.norm() > 0.0)
        .map(|(j, c)| {
            let xi = g.frequency(j);
            2.0 * (w.ln_eval(xi) + w.sobolev_s * ln_japanese(xi) + c.norm().ln())
        })
        .collect();
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    let sum: f64 = terms.iter().map(|t| (t - top).exp()).sum();
    0.5 * (top + sum.ln())
}

/// `(sum m^2 <xi>^{2s} |c|^2)^{1/2}` with the default overflow bound.
pub fn gevrey_norm(field: &SpectralField, w: &Weight) -> Result<f64> {
    gevrey_norm_bounded(field, w, DEFAULT_OVERFLOW_BOUND)
}

pub fn gevrey_norm_bounded(field: &SpectralField, w: &Weight, bound: f64) -> Result<f64> {
    let g = field.grid();
    let exponent = w.sigma * g.nyquist();
    let support_exponent = field
        .coeffs()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.norm() > 0.0)
        .map(|(j, _)| w.ln_eval(g.frequency(j)))
        .fold(0.0, f64::max);
    if support_exponent > bound {
        return Err(Error::WeightOverflow { exponent, bound });
    }
    if exponent > LOG_SPACE_THRESHOLD {
        let ln = ln_gevrey_norm(field, w);
        let v = ln.exp();
        if !v.is_finite() {
            return Err(Error::WeightOverflow { exponent, bound });
        }
        return Ok(v);
    }
    let sum: f64 = field
        .coeffs()
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let xi = g.frequency(j);
            let m = w.eval(xi);
            m * m * (1.0 + xi * xi).powf(w.sobolev_s) * c.norm_sqr()
        })
        .sum();
    if !sum.is_finite() {
        return Err(Error::WeightOverflow { exponent, bound });
    }
    Ok(sum.sqrt())
}

/// `(W(x) - 1) / (x^theta W(x))` at `x = sigma |xi|`, `W = e^x` or `cosh x`.
///
/// At `x = 0` the analytic limit is returned where it is finite.
pub fn weight_gap_ratio(kind: GapKind, sigma: f64, theta: f64, xi: f64) -> Result<f64> {
    if sigma < 0.0 || !sigma.is_finite() || !xi.is_finite() || !theta.is_finite() {
        return Err(Error::InvalidParameter("gap ratio needs finite sigma >= 0".into()));
    }
    let x = sigma * xi.abs();
    if x == 0.0 {
        let critical = match kind {
            GapKind::Exp => 1.0,
            GapKind::Cosh => 2.0,
        };
        let at_critical = match kind {
            GapKind::Exp => 1.0,
            GapKind::Cosh => 0.5,
        };
        return if theta < critical {
            Ok(0.0)
        } else if theta == critical {
            Ok(at_critical)
        } else {
            Err(Error::InvalidParameter(format!(
                "gap ratio diverges at x = 0 for theta = {theta}"
            )))
        };
    }
    let gap = match kind {
        GapKind::Exp => -(-x).exp_m1(),
        GapKind::Cosh => {
            if x < 1.0 {
                let s = (0.5 * x).sinh();
                2.0 * s * s / x.cosh()
            } else {
                let e = (-x).exp();
                1.0 - 2.0 * e / (1.0 + e * e)
            }
        }
    };
    Ok(gap / x.powf(theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadiusOptions {
    /// Optional `[lo, hi]` band in `|xi|`; `None` uses the whole grid.
    pub band: Option<(f64, f64)>,
    /// Relative floor, multiplied by the peak `|c|`.
    pub noise_floor: f64,
    /// Fraction of the top of the frequency range that is never fitted.
    pub exclude_top: f64,
    pub min_modes: usize,
    /// RMS residual of `ln |c|` above which the fit is flagged.
    pub residual_threshold: f64,
}

impl Default for RadiusOptions {
    fn default() -> Self {
        Self {
            band: None,
            noise_floor: 1e-13,
            exclude_top: 0.1,
            min_modes: 8,
            residual_threshold: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiusEstimate {
    pub sigma_hat: f64,
    pub intercept: f64,
    pub residual: f64,
    pub modes_used: usize,
    pub flagged: bool,
}

/// Minus the slope of `ln |c(xi)|` against `|xi|`.
pub fn estimate_radius(field: &SpectralField, opts: &RadiusOptions) -> Result<RadiusEstimate> {
    let g = field.grid();
    let peak = field.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
    let floor = opts.noise_floor * peak;
    let top = (1.0 - opts.exclude_top) * g.nyquist();
    let (lo, hi) = opts.band.unwrap_or((0.0, f64::INFINITY));
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (j, c) in field.coeffs().iter().enumerate() {
        let a = g.frequency(j).abs();
        let amp = c.norm();
        if a <= top && a >= lo && a <= hi && amp > floor && amp > 0.0 {
            xs.push(a);
            ys.push(amp.ln());
        }
    }
    if xs.len() < opts.min_modes {
        return Err(Error::InsufficientDecayBand {
            used: xs.len(),
            needed: opts.min_modes,
        });
    }
    let f = fit_line(&xs, &ys)?;
    Ok(RadiusEstimate {
        sigma_hat: -f.slope,
        intercept: f.intercept,
        residual: f.residual,
        modes_used: f.points,
        flagged: f.residual > opts.residual_threshold || f.slope >= 0.0,
    })
}
