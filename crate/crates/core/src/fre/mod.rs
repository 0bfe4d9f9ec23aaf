//! Frequency-restricted estimates: sup over the fixed frequencies, the
//! modulation `alpha` and the hyperplane shift of a weighted integral over
//! `|Phi - alpha| < M`, and the growth exponent of that sup in `M`.

pub mod catalog;
pub mod oracles;
pub mod phase;
pub mod quad;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_loglog, logspace};
use crate::sampling::{log_uniform, sign, stream, uniform};
pub use catalog::{Entry, Layout, EPS, KAPPA};
pub use phase::{phase_value, stationary_scan, Dispersion, PhaseSpec, StationaryManifold, StationaryReport};
pub use quad::{Integral, Problem};

/// Magnitude range for sampled fixed frequencies.
pub const FIXED_RANGE: (f64, f64) = (1e-2, 1e3);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreConfig {
    pub entry: Entry,
    pub theta: f64,
    /// Conjugation signs `lambda_j`; all plus for the cubic phase.
    pub signs: Vec<f64>,
    /// Adds `|xi_3| << |xi|` to the NLS region.
    #[serde(default)]
    pub nls_case1: bool,
    /// Replaces the catalog weight by a constant.
    #[serde(default)]
    pub constant_multiplier: Option<f64>,
    pub m_grid: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    /// `|sigma| <= shift_cap * min |xi_j|`.
    pub shift_cap: f64,
    /// Shift ratios `c` with `sigma` kept away from `c * xi`.
    pub avoid_list: Vec<f64>,
    pub avoid_window: f64,
    pub xi_max: f64,
    pub rtol: f64,
    pub max_panels: usize,
    /// Integrals spent per local refinement; each `M` refines from several starts.
    pub refine_budget: usize,
    pub fit_tol: f64,
}

impl FreConfig {
    pub fn new(entry: Entry, theta: f64) -> Self {
        let signs = vec![1.0; entry.arity()];
        Self {
            entry,
            theta,
            avoid_list: entry.default_avoid_list(&signs),
            signs,
            nls_case1: false,
            constant_multiplier: None,
            m_grid: logspace(1.0, 100.0, 5),
            samples: 2000,
            seed: 0,
            shift_cap: 0.5,
            avoid_window: 0.05,
            xi_max: 1e3,
            rtol: 1e-3,
            max_panels: 200,
            refine_budget: 96,
            fit_tol: 0.05,
        }
    }

    /// Sets the NLS sign pattern together with its default avoid list.
    pub fn with_signs(mut self, signs: &[f64]) -> Self {
        self.signs = signs.to_vec();
        self.avoid_list = self.entry.default_avoid_list(signs);
        self
    }

    pub fn phase(&self) -> Result<PhaseSpec> {
        PhaseSpec::new(self.entry.dispersion(), self.signs.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let phase = self.phase()?;
        if phase.arity() != self.entry.arity() {
            return Err(Error::InvalidParameter(format!(
                "{} takes {} signs, got {}",
                self.entry.name(),
                self.entry.arity(),
                phase.arity()
            )));
        }
        if phase.dispersion == Dispersion::Cubic && self.signs.iter().any(|s| *s != 1.0) {
            return Err(Error::InvalidParameter("the cubic phase uses all plus signs".into()));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::InvalidParameter(format!("theta must be positive, got {}", self.theta)));
        }
        if self.m_grid.is_empty() || self.m_grid.iter().any(|m| !(*m >= 1.0)) || self.m_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("M grid must be ascending with M >= 1".into()));
        }
        if self.samples == 0 {
            return Err(Error::InvalidParameter("at least one sample is required".into()));
        }
        if !(self.shift_cap >= 0.0 && self.avoid_window >= 0.0 && self.xi_max > 0.0 && self.rtol > 0.0) {
            return Err(Error::InvalidParameter("shift cap, avoid window, truncation and tolerance must be positive".into()));
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<Layout> {
        self.validate()?;
        Ok(Layout {
            entry: self.entry,
            phase: self.phase()?,
            theta: self.theta,
            nls_case1: self.nls_case1,
            constant_multiplier: self.constant_multiplier,
            shift_cap: self.shift_cap,
            xi_max: self.xi_max,
            rtol: self.rtol,
            max_panels: self.max_panels,
        })
    }

    /// Shift bound from the fixed frequencies other than `xi`.
    fn shift_bound(&self, fixed: &[f64]) -> f64 {
        self.entry
            .fixed_set()
            .iter()
            .zip(fixed)
            .filter(|(j, _)| **j >= 1)
            .map(|(_, v)| v.abs())
            .fold(f64::INFINITY, f64::min)
            * self.shift_cap
    }

    /// True when the point respects the shift cap and the avoid list.
    pub fn point_admissible(&self, layout: &Layout, p: &FrePoint) -> bool {
        if !layout.fixed_admissible(&p.fixed) {
            return false;
        }
        let bound = self.shift_bound(&p.fixed);
        if bound.is_finite() && p.sigma.abs() > bound {
            return false;
        }
        let fixed_idx = self.entry.fixed_set();
        if let Some(pos) = fixed_idx.iter().position(|j| *j == 0) {
            let xi = p.fixed[pos];
            for c in &self.avoid_list {
                if (p.sigma - c * xi).abs() <= self.avoid_window * (c * xi).abs() {
                    return false;
                }
            }
        }
        true
    }
}

/// Fixed frequencies, modulation and shift of one integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrePoint {
    pub fixed: Vec<f64>,
    pub alpha: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreRow {
    #[serde(rename = "M")]
    pub m: f64,
    pub sup: f64,
    pub argmax: FrePoint,
    pub tail_bound: f64,
    /// Best value among the random draws, before refinement.
    pub sampled_sup: f64,
    /// Refined values started from the best draw of each half of the sample.
    pub split_sups: [f64; 2],
}

impl FreRow {
    /// The two half-sample refinements agree within [`SPLIT_TOL`].
    pub fn stable(&self) -> bool {
        let [a, b] = self.split_sups;
        a.min(b) > 0.0 && a.max(b) <= (1.0 + SPLIT_TOL) * a.min(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreReport {
    pub label: String,
    pub rows: Vec<FreRow>,
    pub beta: f64,
    pub residual: f64,
    pub bprime_lo: f64,
    pub bprime_hi: f64,
    pub monotone: bool,
    /// Every row is [`FreRow::stable`].
    pub stable: bool,
    /// Some argmax lies within a factor [`EDGE_FACTOR`] of the largest sampled
    /// magnitude, so the sup is still growing there.
    pub diverging: bool,
    pub passes: bool,
}

pub const SPLIT_TOL: f64 = 0.3;
pub const EDGE_FACTOR: f64 = 2.0;

impl FreReport {
    pub fn from_rows(label: String, rows: Vec<FreRow>, fit_tol: f64) -> Result<Self> {
        let ms: Vec<f64> = rows.iter().map(|r| r.m).collect();
        let sups: Vec<f64> = rows.iter().map(|r| r.sup).collect();
        if sups.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParameter(format!("{label}: sup estimates must be positive and finite")));
        }
        let fit = fit_loglog(&ms, &sups)?;
        let monotone = sups.windows(2).all(|w| w[1] >= w[0]);
        let stable = rows.iter().all(FreRow::stable);
        let diverging = rows
            .iter()
            .any(|r| r.argmax.fixed.iter().any(|x| x.abs() * EDGE_FACTOR >= FIXED_RANGE.1));
        let beta = fit.slope;
        Ok(Self {
            label,
            rows,
            beta,
            residual: fit.residual,
            bprime_lo: -0.5,
            bprime_hi: -0.5 * beta,
            monotone,
            stable,
            diverging,
            passes: beta.is_finite() && beta <= 1.0 + fit_tol && monotone && !diverging,
        })
    }

    /// The interval `(bprime_lo, bprime_hi)` is nonempty.
    pub fn admissible(&self) -> bool {
        self.bprime_lo < self.bprime_hi
    }
}

/// Integral at one `M`.
pub fn restricted_integral(cfg: &FreConfig, fixed: &[f64], alpha: f64, shift: f64, m: f64) -> Result<f64> {
    Ok(restricted_integrals(cfg, fixed, alpha, shift, &[m])?.values[0])
}

/// Integrals for every `M` of an ascending list, sharing one pass.
pub fn restricted_integrals(cfg: &FreConfig, fixed: &[f64], alpha: f64, shift: f64, ms: &[f64]) -> Result<Integral> {
    let layout = cfg.layout()?;
    if ms.iter().any(|m| !(*m >= 1.0)) {
        return Err(Error::InvalidParameter("M must be >= 1".into()));
    }
    let expected = cfg.entry.fixed_set().len();
    if fixed.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            actual: fixed.len(),
        });
    }
    let p = FrePoint {
        fixed: fixed.to_vec(),
        alpha,
        sigma: shift,
    };
    if fixed.iter().any(|x| !x.is_finite()) || !cfg.point_admissible(&layout, &p) {
        return Err(Error::InvalidParameter("fixed values or shift outside the admissible set".into()));
    }
    layout.problem(fixed, shift)?.integrate(alpha, ms)
}

/// Sup and argmax at a single `M`.
pub fn sup_restricted_integral(cfg: &FreConfig, m: f64) -> Result<(f64, FrePoint)> {
    let mut c = cfg.clone();
    c.m_grid = vec![m];
    let rows = search(&c)?;
    let r = rows.into_iter().next().expect("one row per M");
    Ok((r.sup, r.argmax))
}

/// Sup curve over the configured grid and its fitted exponent.
pub fn scaling_exponent(cfg: &FreConfig) -> Result<FreReport> {
    let (lo, hi) = (cfg.m_grid[0], cfg.m_grid[cfg.m_grid.len() - 1]);
    if !(hi / lo >= 99.99) {
        return Err(Error::InvalidParameter("M grid must span at least two decades".into()));
    }
    let rows = search(cfg)?;
    FreReport::from_rows(label(cfg), rows, cfg.fit_tol)
}

pub fn label(cfg: &FreConfig) -> String {
    let mut s = format!("{} theta={}", cfg.entry.name(), cfg.theta);
    if cfg.entry.dispersion() == Dispersion::Quadratic {
        s.push(' ');
        s.push_str(&PhaseSpec { dispersion: Dispersion::Quadratic, signs: cfg.signs.clone() }.sign_label());
    }
    if cfg.nls_case1 {
        s.push_str(" case1");
    }
    if let Some(c) = cfg.constant_multiplier {
        s.push_str(&format!(" const={c}"));
    }
    s
}

/// Draws one admissible point, or `None` after repeated rejection.
pub fn draw_point<R: Rng + ?Sized>(cfg: &FreConfig, layout: &Layout, rng: &mut R) -> Option<FrePoint> {
    let fixed_idx = cfg.entry.fixed_set();
    let order = cfg.entry.rank_order();
    for _ in 0..20 {
        let mut mags: Vec<f64> = (0..fixed_idx.len())
            .map(|_| log_uniform(rng, FIXED_RANGE.0, FIXED_RANGE.1))
            .collect();
        mags.sort_by(|a, b| b.total_cmp(a));
        // fixed variables in rank order receive magnitudes in decreasing order
        let mut ranked: Vec<usize> = fixed_idx.clone();
        ranked.sort_by_key(|j| order.iter().position(|o| o == j));
        let mut fixed = vec![0.0; fixed_idx.len()];
        for (j, m) in ranked.iter().zip(&mags) {
            let pos = fixed_idx.iter().position(|i| i == j).expect("ranked is a permutation");
            fixed[pos] = sign(rng) * m;
        }
        if !layout.fixed_admissible(&fixed) {
            continue;
        }
        let bound = cfg.shift_bound(&fixed);
        let sigma = if rng.random::<f64>() < 0.25 || !bound.is_finite() {
            0.0
        } else {
            uniform(rng, -1.0, 1.0) * bound
        };
        let alpha = draw_alpha(layout, &fixed, sigma, &cfg.m_grid, rng);
        let p = FrePoint { fixed, alpha, sigma };
        if cfg.point_admissible(layout, &p) {
            return Some(p);
        }
    }
    None
}

fn draw_alpha<R: Rng + ?Sized>(layout: &Layout, fixed: &[f64], sigma: f64, ms: &[f64], rng: &mut R) -> f64 {
    let scale = fixed.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    let degree = layout.phase.dispersion.degree() as i32;
    let phi_scale = (layout.phase.arity() + 1) as f64 * scale.powi(degree);
    let u = rng.random::<f64>();
    if u < 0.6 {
        if let Ok(p) = layout.problem(fixed, sigma) {
            let crit = if u < 0.3 {
                // vertices, edges and a few inner lines of the region
                p.critical_values(8)
            } else {
                // inner-line critical values through a random outer value
                let poly = p.phase_poly(uniform(rng, -scale, scale));
                let mut r = Vec::new();
                quad::real_roots([poly[1], 2.0 * poly[2], 3.0 * poly[3], 0.0], 0.0, &mut r);
                r.iter().map(|s| quad::poly_eval(&poly, *s)).collect()
            };
            if !crit.is_empty() {
                let c = crit[rng.random_range(0..crit.len())];
                let m = ms[rng.random_range(0..ms.len())];
                return c + uniform(rng, -1.0, 1.0) * m;
            }
        }
    }
    sign(rng) * log_uniform(rng, 1e-3, phi_scale)
}

fn evaluate(layout: &Layout, p: &FrePoint, ms: &[f64]) -> Result<Integral> {
    layout.problem(&p.fixed, p.sigma)?.integrate(p.alpha, ms)
}

/// Random draws followed by a compass search around each per-`M` argmax.
pub fn search(cfg: &FreConfig) -> Result<Vec<FreRow>> {
    let layout = cfg.layout()?;
    let ms = cfg.m_grid.clone();
    let draws: Vec<Option<(FrePoint, Integral)>> = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(cfg.seed, i);
            match draw_point(cfg, &layout, &mut rng) {
                None => Ok(None),
                Some(p) => evaluate(&layout, &p, &ms).map(|v| Some((p, v))),
            }
        })
        .collect::<Result<_>>()?;
    let mut pool: Vec<(FrePoint, Integral)> = draws.into_iter().flatten().collect();
    if pool.is_empty() {
        return Err(Error::InvalidParameter("no admissible sample was drawn".into()));
    }
    let sampled: Vec<f64> = (0..ms.len()).map(|i| pool[best(&pool, i, 0..pool.len())].1.values[i]).collect();
    // the two halves are searched independently and compared
    let second = pool.split_off(pool.len().div_ceil(2));
    let mut halves = [pool, second];
    if halves[1].is_empty() {
        halves[1] = halves[0].clone();
    }
    let [mut h0, mut h1] = halves;
    let (r0, r1) = rayon::join(
        || search_half(cfg, &layout, &ms, &mut h0),
        || search_half(cfg, &layout, &ms, &mut h1),
    );
    r0?;
    r1?;
    let n0 = h0.len();
    let pool: Vec<(FrePoint, Integral)> = h0.into_iter().chain(h1).collect();
    Ok((0..ms.len())
        .map(|i| {
            let b = best(&pool, i, 0..pool.len());
            let (p, v) = &pool[b];
            FreRow {
                m: ms[i],
                sup: v.values[i],
                argmax: p.clone(),
                tail_bound: v.tails[i],
                sampled_sup: sampled[i],
                split_sups: [
                    pool[best(&pool, i, 0..n0)].1.values[i],
                    pool[best(&pool, i, n0..pool.len())].1.values[i],
                ],
            }
        })
        .collect())
}

/// Starts per `M` and pass in [`search_half`].
const STARTS: usize = 2;
const PASSES: usize = 2;

/// Compass refinement from the best distinct points of one half, in two
/// passes so that points found for one `M` seed the others.
fn search_half(cfg: &FreConfig, layout: &Layout, ms: &[f64], pool: &mut Vec<(FrePoint, Integral)>) -> Result<()> {
    for _ in 0..PASSES {
        for i in 0..ms.len() {
            let mut order: Vec<usize> = (0..pool.len()).collect();
            order.sort_by(|a, b| pool[*b].1.values[i].total_cmp(&pool[*a].1.values[i]).then(a.cmp(b)));
            let mut starts: Vec<usize> = Vec::new();
            for k in order {
                if starts.len() == STARTS {
                    break;
                }
                if starts.iter().all(|s| distinct(&pool[*s].0, &pool[k].0)) {
                    starts.push(k);
                }
            }
            for s in starts {
                refine(cfg, layout, ms, i, s, pool)?;
            }
        }
    }
    Ok(())
}

fn distinct(a: &FrePoint, b: &FrePoint) -> bool {
    let far = |x: f64, y: f64| (x - y).abs() > 1e-2 * x.abs().max(y.abs()).max(1e-2);
    far(a.alpha, b.alpha) || far(a.sigma, b.sigma) || a.fixed.iter().zip(&b.fixed).any(|(x, y)| far(*x, *y))
}

/// Index of the largest value at `M_i` in `range`; the first index wins ties.
fn best(pool: &[(FrePoint, Integral)], i: usize, range: std::ops::Range<usize>) -> usize {
    let mut b = range.start;
    for k in range {
        if pool[k].1.values[i] > pool[b].1.values[i] {
            b = k;
        }
    }
    b
}

fn refine(
    cfg: &FreConfig,
    layout: &Layout,
    ms: &[f64],
    i: usize,
    start: usize,
    pool: &mut Vec<(FrePoint, Integral)>,
) -> Result<f64> {
    let mut cur = pool[start].0.clone();
    let mut val = pool[start].1.values[i];
    if val <= 0.0 {
        return Ok(val);
    }
    let nf = cur.fixed.len();
    // steps: alpha additive, sigma as a fraction of its bound, fixed multiplicative
    let mut steps = vec![ms[i]; 1];
    steps.push(0.25);
    steps.extend(std::iter::repeat_n(0.2, nf));
    // joint dilation of every frequency, with alpha scaled to match
    steps.push(0.1);
    let degree = layout.phase.dispersion.degree() as f64;
    let mut used = 0;
    while used < cfg.refine_budget {
        let mut improved = false;
        'coords: for c in 0..steps.len() {
            for dir in [1.0, -1.0] {
                if used >= cfg.refine_budget {
                    break 'coords;
                }
                let mut q = cur.clone();
                match c {
                    0 => q.alpha += dir * steps[0],
                    1 => {
                        let bound = cfg.shift_bound(&q.fixed);
                        if !bound.is_finite() {
                            continue;
                        }
                        q.sigma += dir * steps[1] * bound;
                    }
                    c if c < 2 + nf => q.fixed[c - 2] *= (dir * steps[c]).exp(),
                    _ => {
                        let k = (dir * steps[c]).exp();
                        q.fixed.iter_mut().for_each(|x| *x *= k);
                        q.sigma *= k;
                        q.alpha *= k.powf(degree);
                    }
                }
                if !cfg.point_admissible(layout, &q)
                    || q.fixed.iter().any(|x| x.abs() > FIXED_RANGE.1 || x.abs() < FIXED_RANGE.0)
                {
                    continue;
                }
                used += 1;
                let v = evaluate(layout, &q, ms)?;
                let better = v.values[i] > val;
                if better {
                    val = v.values[i];
                    cur = q.clone();
                }
                pool.push((q, v));
                if better {
                    improved = true;
                    continue 'coords;
                }
            }
        }
        if !improved {
            for s in steps.iter_mut() {
                *s *= 0.5;
            }
            if steps[1] < 1e-3 {
                break;
            }
        }
    }
    Ok(val)
}

#[cfg(test)]
mod tests;
