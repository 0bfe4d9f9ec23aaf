//! Resonance functions on a convolution hyperplane.
//!
//! Variables are indexed `0..=arity`, index 0 being the outgoing frequency.
//!
//! ```text
//! Cubic      Phi = xi^3 - sum_j lambda_j xi_j^3    xi + sigma = sum_j lambda_j xi_j
//! Quadratic  Phi = xi^2 + sum_j lambda_j xi_j^2    xi + sigma = sum_j h_j xi_j,  h = (+, -, +, ...)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dispersion {
    /// `L(xi) = xi^3`.
    Cubic,
    /// `L(xi) = -xi^2`.
    Quadratic,
}

impl Dispersion {
    pub fn degree(&self) -> u32 {
        match self {
            Dispersion::Cubic => 3,
            Dispersion::Quadratic => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub dispersion: Dispersion,
    /// `lambda_j`, one per incoming frequency.
    pub signs: Vec<f64>,
}

impl PhaseSpec {
    pub fn new(dispersion: Dispersion, signs: Vec<f64>) -> Result<Self> {
        let spec = Self { dispersion, signs };
        spec.validate()?;
        Ok(spec)
    }

    /// All-plus cubic phase of the given arity.
    pub fn cubic(arity: usize) -> Self {
        Self {
            dispersion: Dispersion::Cubic,
            signs: vec![1.0; arity],
        }
    }

    pub fn quadratic(signs: &[f64]) -> Result<Self> {
        Self::new(Dispersion::Quadratic, signs.to_vec())
    }

    pub fn validate(&self) -> Result<()> {
        if self.signs.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "phase arity must be >= 2, got {}",
                self.signs.len()
            )));
        }
        if self.signs.iter().any(|s| *s != 1.0 && *s != -1.0) {
            return Err(Error::InvalidParameter("phase signs must be +1 or -1".into()));
        }
        Ok(())
    }

    pub fn arity(&self) -> usize {
        self.signs.len()
    }

    /// Coefficient of `L`-power of variable `j` in `Phi`.
    pub fn weight(&self, j: usize) -> f64 {
        if j == 0 {
            return 1.0;
        }
        match self.dispersion {
            Dispersion::Cubic => -self.signs[j - 1],
            Dispersion::Quadratic => self.signs[j - 1],
        }
    }

    /// Coefficient `h_j` of `xi_j` on the hyperplane `xi + sigma = sum h_j xi_j`.
    pub fn hyperplane(&self, j: usize) -> f64 {
        assert!(j >= 1, "the outgoing frequency has no hyperplane coefficient");
        match self.dispersion {
            Dispersion::Cubic => self.signs[j - 1],
            Dispersion::Quadratic => {
                if j % 2 == 1 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// Compact label such as `(+,+,-)`.
    pub fn sign_label(&self) -> String {
        let s: Vec<&str> = self
            .signs
            .iter()
            .map(|x| if *x > 0.0 { "+" } else { "-" })
            .collect();
        format!("({})", s.join(","))
    }
}

pub fn phase_value(spec: &PhaseSpec, xi: f64, freqs: &[f64]) -> Result<f64> {
    if freqs.len() != spec.arity() {
        return Err(Error::LengthMismatch {
            expected: spec.arity(),
            actual: freqs.len(),
        });
    }
    let p = spec.dispersion.degree() as i32;
    let mut phi = xi.powi(p);
    for (j, x) in freqs.iter().enumerate() {
        phi += spec.weight(j + 1) * x.powi(p);
    }
    Ok(phi)
}

/// Rate `d xi_partner / d xi_direction` when only these two move on the hyperplane.
pub fn partner_rate(spec: &PhaseSpec, direction: usize, partner: usize) -> Result<f64> {
    let n = spec.arity();
    if direction > n || partner > n || direction == partner {
        return Err(Error::InvalidParameter(format!(
            "direction {direction} and partner {partner} must be distinct indices in 0..={n}"
        )));
    }
    Ok(if direction == 0 {
        1.0 / spec.hyperplane(partner)
    } else if partner == 0 {
        spec.hyperplane(direction)
    } else {
        -spec.hyperplane(direction) / spec.hyperplane(partner)
    })
}

/// One component of the stationary set of `Phi` along a direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryManifold {
    /// The set is `xi_direction = slope * xi_partner`.
    pub slope: f64,
    /// Second derivative along the direction is `curvature * xi_partner`
    /// (cubic) or the constant `curvature` (quadratic).
    pub curvature: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryReport {
    pub direction: usize,
    pub partner: usize,
    /// `dPhi/dt = a * xi_dir^(p-1) + b * xi_partner^(p-1)` with `(a, b)` here.
    pub gradient: (f64, f64),
    pub manifolds: Vec<StationaryManifold>,
}

impl StationaryReport {
    /// `|dPhi/dt|` at a point.
    pub fn gradient_magnitude(&self, xi_dir: f64, xi_partner: f64, degree: u32) -> f64 {
        let e = degree as i32 - 1;
        (self.gradient.0 * xi_dir.powi(e) + self.gradient.1 * xi_partner.powi(e)).abs()
    }
}

/// Stationary sets of `Phi` when `xi_direction` moves and `xi_partner`
/// absorbs the hyperplane constraint, all other variables fixed.
pub fn stationary_scan(spec: &PhaseSpec, direction: usize, partner: usize) -> Result<StationaryReport> {
    spec.validate()?;
    let r = partner_rate(spec, direction, partner)?;
    let wd = spec.weight(direction);
    let wp = spec.weight(partner);
    let (gradient, manifolds) = match spec.dispersion {
        Dispersion::Quadratic => {
            // dPhi/dt = 2 wd xi_d + 2 wp r xi_p, d2Phi/dt2 = 2 (wd + wp r^2)
            let curvature = 2.0 * (wd + wp * r * r);
            let slope = -wp * r / wd;
            (
                (2.0 * wd, 2.0 * wp * r),
                vec![StationaryManifold {
                    slope,
                    curvature,
                    degenerate: curvature == 0.0,
                }],
            )
        }
        Dispersion::Cubic => {
            // dPhi/dt = 3 wd xi_d^2 + 3 wp r xi_p^2
            let q = -wp * r / wd;
            let mut ms = Vec::new();
            if q > 0.0 {
                for s in [q.sqrt(), -q.sqrt()] {
                    // d2Phi/dt2 = 6 wd xi_d + 6 wp r^2 xi_p on xi_d = s xi_p
                    let curvature = 6.0 * (wd * s + wp * r * r);
                    ms.push(StationaryManifold {
                        slope: s,
                        curvature,
                        degenerate: curvature.abs() < 1e-12,
                    });
                }
            } else if q == 0.0 {
                ms.push(StationaryManifold {
                    slope: 0.0,
                    curvature: 6.0 * wp * r * r,
                    degenerate: true,
                });
            }
            ((3.0 * wd, 3.0 * wp * r), ms)
        }
    };
    Ok(StationaryReport {
        direction,
        partner,
        gradient,
        manifolds,
    })
}
