//! Sampling check of the multiplier-defect bound
//! `|1 - m_sigma(xi) / prod m_sigma(xi_j)| <= C sigma^theta |xi_1|^{theta-1} |xi_2|`
//! for `xi = sum xi_j`, `|xi_1| >= |xi_2| >= ... >= |xi_k|`.
//!
//! Everything is evaluated in the scaled variables `eta = sigma xi`, in which
//! the bound reads `|eta_1|^{theta-1} |eta_2|`; the ratio does not depend on
//! `sigma` at all.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sampling::{log_uniform, sign, stream, uniform};
use crate::weights::ln_smooth;

/// The four regimes of the case analysis, in scaled variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Stratum {
    /// `|eta_1| <= 1`, `|eta| <= 1`.
    AllSmall,
    /// `|eta_1| <= 1 < |eta|`.
    SumLarge,
    /// `|eta_1| > 1 >= |eta_2|`.
    OneLarge,
    /// `|eta_2| > 1`.
    TwoLarge,
}

impl Stratum {
    pub const ALL: [Stratum; 4] = [
        Stratum::AllSmall,
        Stratum::SumLarge,
        Stratum::OneLarge,
        Stratum::TwoLarge,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Stratum::AllSmall => "1.1",
            Stratum::SumLarge => "1.2",
            Stratum::OneLarge => "2",
            Stratum::TwoLarge => "3",
        }
    }

    fn slot(&self) -> usize {
        match self {
            Stratum::AllSmall => 0,
            Stratum::SumLarge => 1,
            Stratum::OneLarge => 2,
            Stratum::TwoLarge => 3,
        }
    }
}

/// Classify sorted scaled frequencies. `eta_sum` is `sigma * sum xi_j`.
pub fn classify(eta_sorted: &[f64], eta_sum: f64) -> Stratum {
    let a1 = eta_sorted[0].abs();
    let a2 = eta_sorted[1].abs();
    if a1 <= 1.0 {
        if eta_sum.abs() <= 1.0 {
            Stratum::AllSmall
        } else {
            Stratum::SumLarge
        }
    } else if a2 <= 1.0 {
        Stratum::OneLarge
    } else {
        Stratum::TwoLarge
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefectSample {
    pub sigma: f64,
    /// Sorted by decreasing magnitude.
    pub freqs: Vec<f64>,
    pub theta: f64,
    pub defect: f64,
    pub bound: f64,
    pub ratio: f64,
    pub stratum: Stratum,
}

fn sort_by_magnitude(freqs: &[f64]) -> Vec<f64> {
    let mut v = freqs.to_vec();
    v.sort_by(|a, b| b.abs().total_cmp(&a.abs()).then(b.total_cmp(a)));
    v
}

fn check_inputs(sigma: f64, freqs: &[f64]) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
    }
    if freqs.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least two frequencies, got {}",
            freqs.len()
        )));
    }
    if freqs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("frequencies must be finite".into()));
    }
    Ok(())
}

/// `|1 - m_sigma(sum xi_j) prod 1/m_sigma(xi_j)|` with the smooth weight.
pub fn multiplier_defect(sigma: f64, freqs: &[f64]) -> Result<f64> {
    check_inputs(sigma, freqs)?;
    let sum: f64 = freqs.iter().sum();
    let mut ln = ln_smooth(sigma * sum);
    for x in freqs {
        ln -= ln_smooth(sigma * x);
    }
    Ok(ln.exp_m1().abs())
}

pub fn defect_ratio(sigma: f64, theta: f64, freqs: &[f64]) -> Result<DefectSample> {
    check_inputs(sigma, freqs)?;
    if !(theta >= 1.0 && theta.is_finite()) {
        return Err(Error::InvalidParameter(format!("theta must be >= 1, got {theta}")));
    }
    let sorted = sort_by_magnitude(freqs);
    let defect = multiplier_defect(sigma, &sorted)?;
    let eta1 = (sigma * sorted[0]).abs();
    let eta2 = (sigma * sorted[1]).abs();
    // sigma^theta |xi_1|^{theta-1} |xi_2| = |eta_1|^{theta-1} |eta_2|
    let bound = if eta2 == 0.0 {
        0.0
    } else {
        eta1.powf(theta - 1.0) * eta2
    };
    let ratio = if bound > 0.0 {
        defect / bound
    } else if defect == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let eta: Vec<f64> = sorted.iter().map(|x| sigma * x).collect();
    let stratum = classify(&eta, sigma * sorted.iter().sum::<f64>());
    Ok(DefectSample {
        sigma,
        freqs: sorted,
        theta,
        defect,
        bound,
        ratio,
        stratum,
    })
}

/// Sampling ranges. Scaled magnitudes `|sigma xi_j|` are drawn log-uniformly
/// within the stratum's bounds intersected with `[eta_lo, eta_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplerRanges {
    pub eta_lo: f64,
    pub eta_hi: f64,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    /// `|eta_1|` window of the threshold enrichment.
    pub enrich_lo: f64,
    pub enrich_hi: f64,
    /// Max magnitude spread inside a clustered draw.
    pub cluster_spread: f64,
}

impl Default for SamplerRanges {
    fn default() -> Self {
        Self {
            eta_lo: 1e-3,
            eta_hi: 1e3,
            sigma_lo: 1e-4,
            sigma_hi: 1.0,
            enrich_lo: 0.5,
            enrich_hi: 4.0,
            cluster_spread: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Draw {
    Base,
    Threshold,
    Cluster,
}

fn draw_kind(u: f64) -> Draw {
    if u < 0.5 {
        Draw::Base
    } else if u < 0.75 {
        Draw::Threshold
    } else {
        Draw::Cluster
    }
}

/// Scaled frequencies for sample `index`; the target stratum is `index mod 4`.
pub fn draw_scaled(k: usize, seed: u64, index: u64, r: &SamplerRanges) -> (f64, Vec<f64>) {
    let mut rng = stream(seed, index);
    let target = Stratum::ALL[(index % 4) as usize];
    let kind = draw_kind(rng.random::<f64>());
    let sigma = log_uniform(&mut rng, r.sigma_lo, r.sigma_hi);
    let kf = k as f64;

    // window for |eta_1|
    let (mut lo1, mut hi1) = match target {
        Stratum::AllSmall => (r.eta_lo, 1.0),
        Stratum::SumLarge => ((1.0 / kf) * (1.0 + 1e-9), 1.0),
        Stratum::OneLarge | Stratum::TwoLarge => (1.0 * (1.0 + 1e-12), r.eta_hi),
    };
    if kind == Draw::Threshold || kind == Draw::Cluster {
        lo1 = lo1.max(r.enrich_lo);
        hi1 = hi1.min(r.enrich_hi);
    }
    let a1 = log_uniform(&mut rng, lo1, hi1);
    let s1 = sign(&mut rng);

    let mut eta = Vec::with_capacity(k);
    eta.push(s1 * a1);
    for j in 1..k {
        let (lo, hi) = match target {
            Stratum::TwoLarge if j == 1 => ((1.0f64 + 1e-12).min(a1), a1),
            Stratum::TwoLarge => {
                let hi = eta[1].abs();
                (r.eta_lo.min(hi), hi)
            }
            Stratum::OneLarge => (r.eta_lo, 1.0),
            _ => (r.eta_lo.min(a1), a1),
        };
        let (a, s) = if kind == Draw::Cluster {
            let u = rng.random::<f64>();
            let spread = r.cluster_spread.ln() * u * u;
            let cap = if target == Stratum::OneLarge { 1.0 } else { a1 };
            let a = (cap * (-spread).exp()).clamp(lo, hi);
            (a, s1)
        } else {
            (log_uniform(&mut rng, lo, hi), sign(&mut rng))
        };
        eta.push(s * a);
    }

    // enforce the sum condition of the first two strata
    match target {
        Stratum::AllSmall => {
            let s: f64 = eta.iter().sum();
            if s.abs() > 1.0 {
                let f = uniform(&mut rng, 0.5, 1.0) / s.abs();
                for e in eta.iter_mut() {
                    *e *= f;
                }
            }
        }
        Stratum::SumLarge => {
            let s: f64 = eta.iter().sum();
            if s.abs() <= 1.0 {
                // align signs, then lift the tail until the sum leaves [-1, 1]
                for e in eta.iter_mut() {
                    *e = s1 * e.abs();
                }
                let total: f64 = eta.iter().map(|e| e.abs()).sum();
                if total <= 1.0 {
                    let need = 1.0 - total;
                    let room: f64 = eta[1..].iter().map(|e| a1 - e.abs()).sum();
                    let t = (need / room * uniform(&mut rng, 1.0 + 1e-6, 2.0)).min(1.0);
                    for e in eta[1..].iter_mut() {
                        let m = e.abs();
                        *e = s1 * (m + t * (a1 - m));
                    }
                }
            }
        }
        _ => {}
    }
    (sigma, eta)
}

/// Sample `index` in unscaled form `(sigma, xi = eta / sigma)`.
pub fn draw_sample(k: usize, seed: u64, index: u64, r: &SamplerRanges) -> (f64, Vec<f64>) {
    let (sigma, eta) = draw_scaled(k, seed, index, r);
    (sigma, eta.iter().map(|e| e / sigma).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumSummary {
    pub stratum: Stratum,
    pub label: &'static str,
    pub samples: u64,
    pub max_ratio: f64,
    pub max_defect: f64,
    pub argmax: Option<DefectSample>,
    pub argmax_index: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupReport {
    pub k: usize,
    pub theta: f64,
    pub n_samples: u64,
    pub seed: u64,
    pub sup: f64,
    pub strata: Vec<StratumSummary>,
    pub first_half_max: f64,
    pub second_half_max: f64,
    pub stable: bool,
    /// Count of draws that landed outside their target stratum after rounding.
    pub misplaced: u64,
}

impl SupReport {
    pub fn stratum(&self, s: Stratum) -> &StratumSummary {
        &self.strata[s.slot()]
    }
}

#[derive(Clone)]
struct Acc {
    max: [(f64, u64); 4],
    max_defect: [f64; 4],
    count: [u64; 4],
    half: [f64; 2],
    misplaced: u64,
}

impl Acc {
    fn new() -> Self {
        Self {
            max: [(f64::NEG_INFINITY, u64::MAX); 4],
            max_defect: [0.0; 4],
            count: [0; 4],
            half: [f64::NEG_INFINITY; 2],
            misplaced: 0,
        }
    }

    fn merge(mut self, o: Acc) -> Acc {
        for s in 0..4 {
            self.max[s] = better(self.max[s], o.max[s]);
            self.max_defect[s] = self.max_defect[s].max(o.max_defect[s]);
            self.count[s] += o.count[s];
        }
        for h in 0..2 {
            self.half[h] = self.half[h].max(o.half[h]);
        }
        self.misplaced += o.misplaced;
        self
    }
}

// larger ratio wins; ties go to the smaller index so the result is order-free
fn better(a: (f64, u64), b: (f64, u64)) -> (f64, u64) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

pub const SUP_MIN_SAMPLES: u64 = 10_000;
/// Allowed growth of the second-half max over the first-half max.
pub const STABILITY_FACTOR: f64 = 1.25;

pub fn sup_defect_ratio(k: usize, theta: f64, n_samples: u64, seed: u64) -> Result<SupReport> {
    sup_defect_ratio_with(k, theta, n_samples, seed, &SamplerRanges::default())
}

pub fn sup_defect_ratio_with(
    k: usize,
    theta: f64,
    n_samples: u64,
    seed: u64,
    ranges: &SamplerRanges,
) -> Result<SupReport> {
    if !(2..=8).contains(&k) {
        return Err(Error::InvalidParameter(format!("k must lie in 2..=8, got {k}")));
    }
    if n_samples < SUP_MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "need at least {SUP_MIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    if !(theta >= 1.0 && theta.is_finite()) {
        return Err(Error::InvalidParameter(format!("theta must be >= 1, got {theta}")));
    }
    let half = n_samples / 2;
    let acc = (0..n_samples)
        .into_par_iter()
        .fold(Acc::new, |mut acc, i| {
            let (sigma, xi) = draw_sample(k, seed, i, ranges);
            let s = defect_ratio(sigma, theta, &xi).expect("sampler produces valid input");
            let slot = s.stratum.slot();
            if slot != (i % 4) as usize {
                acc.misplaced += 1;
            }
            acc.count[slot] += 1;
            acc.max[slot] = better(acc.max[slot], (s.ratio, i));
            acc.max_defect[slot] = acc.max_defect[slot].max(s.defect);
            let h = usize::from(i >= half);
            acc.half[h] = acc.half[h].max(s.ratio);
            acc
        })
        .reduce(Acc::new, Acc::merge);

    let strata = Stratum::ALL
        .iter()
        .map(|&st| {
            let (m, idx) = acc.max[st.slot()];
            let argmax = (idx != u64::MAX).then(|| {
                let (sigma, xi) = draw_sample(k, seed, idx, ranges);
                defect_ratio(sigma, theta, &xi).expect("valid")
            });
            StratumSummary {
                stratum: st,
                label: st.label(),
                samples: acc.count[st.slot()],
                max_ratio: if m.is_finite() { m } else { 0.0 },
                max_defect: acc.max_defect[st.slot()],
                argmax,
                argmax_index: (idx != u64::MAX).then_some(idx),
            }
        })
        .collect::<Vec<_>>();
    let sup = strata.iter().map(|s| s.max_ratio).fold(0.0, f64::max);
    let (first, second) = (acc.half[0].max(0.0), acc.half[1].max(0.0));
    Ok(SupReport {
        k,
        theta,
        n_samples,
        seed,
        sup,
        strata,
        first_half_max: first,
        second_half_max: second,
        stable: sup.is_finite() && second <= STABILITY_FACTOR * first,
        misplaced: acc.misplaced,
    })
}

/// Every `stride`-th sample, for CSV output.
pub fn thinned_samples(
    k: usize,
    theta: f64,
    n_samples: u64,
    seed: u64,
    cap: u64,
) -> Result<Vec<DefectSample>> {
    let stride = (n_samples / cap.max(1)).max(1);
    (0..n_samples)
        .step_by(stride as usize)
        .map(|i| {
            let (sigma, xi) = draw_sample(k, seed, i, &SamplerRanges::default());
            defect_ratio(sigma, theta, &xi)
        })
        .collect()
}
