//! Named multipliers with their frequency regions and integrated variables.

use serde::{Deserialize, Serialize};

use super::phase::{Dispersion, PhaseSpec};
use super::quad::{Affine, Constraint, Factor, PhaseTerm, Problem};
use crate::error::{Error, Result};

/// Constant behind `|a| >~ |b|`, read as `|a| >= KAPPA |b|`.
pub const KAPPA: f64 = 0.25;
/// Constant behind `|a| << |b|`, read as `|a| <= EPS |b|`.
pub const EPS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entry {
    KdvSmoothA,
    KdvSmoothB,
    KdvSmoothC,
    KdvSmoothD,
    KdvNosmooth,
    NlsA,
    NlsB,
}

/// `|xi_big| >= c |xi_small|` or `|xi_var| >= v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rule {
    Dom { big: usize, small: usize, c: f64 },
    AtLeast { var: usize, v: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightFactor {
    Abs { var: usize, exp: f64 },
    InvJapanese { var: usize, exp: f64 },
}

const fn dom(big: usize, small: usize) -> Rule {
    Rule::Dom { big, small, c: 1.0 }
}

impl Entry {
    pub const ALL: [Entry; 7] = [
        Entry::KdvSmoothA,
        Entry::KdvSmoothB,
        Entry::KdvSmoothC,
        Entry::KdvSmoothD,
        Entry::KdvNosmooth,
        Entry::NlsA,
        Entry::NlsB,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Entry::KdvSmoothA => "kdv_smooth_a",
            Entry::KdvSmoothB => "kdv_smooth_b",
            Entry::KdvSmoothC => "kdv_smooth_c",
            Entry::KdvSmoothD => "kdv_smooth_d",
            Entry::KdvNosmooth => "kdv_nosmooth",
            Entry::NlsA => "nls_a",
            Entry::NlsB => "nls_b",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == name)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown catalog entry {name:?}")))
    }

    pub fn dispersion(&self) -> Dispersion {
        match self {
            Entry::NlsA | Entry::NlsB => Dispersion::Quadratic,
            _ => Dispersion::Cubic,
        }
    }

    pub fn arity(&self) -> usize {
        match self.dispersion() {
            Dispersion::Cubic => 5,
            Dispersion::Quadratic => 3,
        }
    }

    /// Integrated variables; the last one is eliminated by the hyperplane.
    pub fn free_set(&self) -> &'static [usize] {
        match self {
            Entry::KdvSmoothA | Entry::KdvSmoothC => &[1, 3, 5],
            Entry::KdvSmoothB | Entry::KdvSmoothD => &[0, 2, 4],
            Entry::KdvNosmooth | Entry::NlsA => &[1, 3],
            Entry::NlsB => &[0, 2],
        }
    }

    pub fn fixed_set(&self) -> Vec<usize> {
        let free = self.free_set();
        (0..=self.arity()).filter(|j| !free.contains(j)).collect()
    }

    /// Variables from largest to smallest magnitude.
    pub fn rank_order(&self) -> Vec<usize> {
        match self {
            Entry::KdvNosmooth => vec![1, 2, 3, 4, 5, 0],
            _ => (0..=self.arity()).collect(),
        }
    }

    pub fn rules(&self, nls_case1: bool) -> Vec<Rule> {
        let order = self.rank_order();
        let mut rules: Vec<Rule> = order.windows(2).map(|w| dom(w[0], w[1])).collect();
        rules.push(Rule::AtLeast { var: order[0], v: 1.0 });
        match self {
            Entry::KdvSmoothA | Entry::KdvSmoothB => {
                rules.push(Rule::Dom { big: 1, small: 5, c: 1.0 / EPS });
                rules.push(Rule::Dom { big: 3, small: 2, c: KAPPA });
            }
            Entry::KdvSmoothC | Entry::KdvSmoothD => {
                rules.push(Rule::Dom { big: 1, small: 5, c: 1.0 / EPS });
                rules.push(Rule::Dom { big: 2, small: 3, c: 1.0 / EPS });
            }
            Entry::KdvNosmooth => rules.push(Rule::Dom { big: 2, small: 1, c: KAPPA }),
            Entry::NlsA | Entry::NlsB => {
                if nls_case1 {
                    rules.push(Rule::Dom { big: 0, small: 3, c: 1.0 / EPS });
                }
            }
        }
        rules
    }

    pub fn weight(&self, theta: f64) -> Vec<WeightFactor> {
        use WeightFactor::*;
        match self {
            Entry::KdvSmoothA => vec![
                Abs { var: 0, exp: theta },
                InvJapanese { var: 3, exp: 1.0 },
                InvJapanese { var: 5, exp: 2.0 },
            ],
            Entry::KdvSmoothB => vec![
                Abs { var: 0, exp: theta },
                InvJapanese { var: 3, exp: 1.0 },
                InvJapanese { var: 4, exp: 2.0 },
            ],
            Entry::KdvSmoothC => vec![
                Abs { var: 0, exp: theta },
                InvJapanese { var: 3, exp: 2.0 },
                InvJapanese { var: 5, exp: 2.0 },
            ],
            Entry::KdvSmoothD => vec![Abs { var: 0, exp: theta }, InvJapanese { var: 4, exp: 2.0 }],
            Entry::KdvNosmooth => {
                let mut w = vec![
                    Abs { var: 1, exp: 1.0 },
                    InvJapanese { var: 1, exp: -1.0 },
                    InvJapanese { var: 0, exp: 1.0 },
                ];
                w.extend((2..=5).map(|var| InvJapanese { var, exp: 1.0 }));
                w
            }
            Entry::NlsA | Entry::NlsB => vec![
                Abs { var: 0, exp: theta - 1.0 },
                InvJapanese { var: 3, exp: 1.0 },
            ],
        }
    }

    /// Default excluded shift ratios `sigma / xi` for a sign pattern.
    pub fn default_avoid_list(&self, signs: &[f64]) -> Vec<f64> {
        if self.dispersion() == Dispersion::Quadratic
            && (signs == [1.0, 1.0, -1.0] || signs == [-1.0, -1.0, -1.0])
        {
            vec![-2.0]
        } else {
            Vec::new()
        }
    }
}

/// Everything needed to place one integral on the hyperplane.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub entry: Entry,
    pub phase: PhaseSpec,
    pub theta: f64,
    pub nls_case1: bool,
    pub constant_multiplier: Option<f64>,
    pub shift_cap: f64,
    pub xi_max: f64,
    pub rtol: f64,
    pub max_panels: usize,
}

impl Layout {
    /// Each variable as an affine function of the integration coordinates.
    pub fn variables(&self, fixed: &[f64], sigma: f64) -> Result<Vec<Affine>> {
        let n = self.phase.arity();
        let free = self.entry.free_set();
        let fixed_idx = self.entry.fixed_set();
        if fixed.len() != fixed_idx.len() {
            return Err(Error::LengthMismatch {
                expected: fixed_idx.len(),
                actual: fixed.len(),
            });
        }
        let dep = *free.last().expect("free set is nonempty");
        let mut vars = vec![Affine::constant(0.0); n + 1];
        for (j, v) in fixed_idx.iter().zip(fixed) {
            vars[*j] = Affine::constant(*v);
        }
        for (c, j) in free[..free.len() - 1].iter().enumerate() {
            vars[*j] = Affine::coord(c);
        }
        // h_dep xi_dep = xi_0 + sigma - sum_{j != dep} h_j xi_j
        let mut rhs = vars[0].add(Affine::constant(sigma));
        for j in (1..=n).filter(|j| *j != dep) {
            rhs = rhs.add(vars[j].scale(-self.phase.hyperplane(j)));
        }
        vars[dep] = rhs.scale(1.0 / self.phase.hyperplane(dep));
        Ok(vars)
    }

    pub fn problem(&self, fixed: &[f64], sigma: f64) -> Result<Problem> {
        let vars = self.variables(fixed, sigma)?;
        let free = self.entry.free_set();
        let mut p = Problem::new(free.len() - 1);
        p.xi_max = self.xi_max;
        p.rtol = self.rtol;
        p.max_panels = self.max_panels;
        let power = self.phase.dispersion.degree();
        p.phase = (0..vars.len())
            .map(|j| PhaseTerm {
                coef: self.phase.weight(j),
                power,
                expr: vars[j],
            })
            .collect();
        match self.constant_multiplier {
            Some(c) => p.prefactor = c,
            None => {
                p.factors = self
                    .entry
                    .weight(self.theta)
                    .into_iter()
                    .map(|w| match w {
                        WeightFactor::Abs { var, exp } => Factor::Abs { expr: vars[var], exp },
                        WeightFactor::InvJapanese { var, exp } => Factor::InvJapanese { expr: vars[var], exp },
                    })
                    .collect();
            }
        }
        for rule in self.entry.rules(self.nls_case1) {
            p.constraints.push(match rule {
                Rule::Dom { big, small, c } => Constraint {
                    big: vars[big],
                    small: vars[small],
                    c,
                },
                Rule::AtLeast { var, v } => Constraint {
                    big: vars[var],
                    small: Affine::constant(v),
                    c: 1.0,
                },
            });
        }
        if sigma != 0.0 && self.shift_cap > 0.0 {
            for j in 1..vars.len() {
                p.constraints.push(Constraint {
                    big: vars[j],
                    small: Affine::constant(sigma),
                    c: 1.0 / self.shift_cap,
                });
            }
        }
        p.truncated = free.iter().map(|j| vars[*j]).collect();
        Ok(p)
    }

    /// True when the fixed variables respect every rule that involves only them.
    pub fn fixed_admissible(&self, fixed: &[f64]) -> bool {
        let idx = self.entry.fixed_set();
        let val = |j: usize| idx.iter().position(|i| *i == j).map(|p| fixed[p].abs());
        self.entry.rules(self.nls_case1).iter().all(|r| match *r {
            Rule::Dom { big, small, c } => match (val(big), val(small)) {
                (Some(b), Some(s)) => b >= c * s,
                _ => true,
            },
            Rule::AtLeast { var, v } => val(var).is_none_or(|x| x >= v),
        })
    }
}
