//! Closed forms and independent quadratures for the model windows
//! `|p^2 - alpha| < M` and `|p^2 +- q^2 - alpha| < M`.

use super::quad::{Affine, Constraint, PhaseTerm, Problem};
use super::{FrePoint, FreReport, FreRow};
use crate::error::{Error, Result};
use crate::fit::{fit_loglog, LineFit};

/// Length of `{p : |p^2 - alpha| < M}`.
pub fn window_length(alpha: f64, m: f64) -> f64 {
    2.0 * ((alpha + m).max(0.0).sqrt() - (alpha - m).max(0.0).sqrt())
}

/// Area of `{|p^2 + q^2 - alpha| < M}` in the plane.
pub fn annulus_area(alpha: f64, m: f64) -> f64 {
    std::f64::consts::PI * ((alpha + m).max(0.0) - (alpha - m).max(0.0))
}

/// `q`-measure of `{|q| < n, lo < q^2 < hi}`.
fn q_measure(lo: f64, hi: f64, n: f64) -> f64 {
    let cap = n * n;
    let (lo, hi) = (lo.clamp(0.0, cap), hi.clamp(0.0, cap));
    if hi <= lo {
        0.0
    } else {
        2.0 * (hi.sqrt() - lo.sqrt())
    }
}

fn plus_sign(sign: f64) -> Result<bool> {
    match sign {
        s if s == 1.0 => Ok(true),
        s if s == -1.0 => Ok(false),
        _ => Err(Error::InvalidParameter(format!("sign must be +1 or -1, got {sign}"))),
    }
}

/// Area of `{|p|, |q| < n, |p^2 + sign q^2 - alpha| < M}` by exact
/// `q`-measures and a graded midpoint rule in `p`.
pub fn square_integral_oracle(alpha: f64, m: f64, n: f64, sign: f64) -> Result<f64> {
    let plus = plus_sign(sign)?;
    if !(m > 0.0 && n > 0.0) {
        return Err(Error::InvalidParameter("M and N must be positive".into()));
    }
    let bounds = |p: f64| -> (f64, f64) {
        let p2 = p * p;
        if plus {
            (alpha - m - p2, alpha + m - p2)
        } else {
            (p2 - alpha - m, p2 - alpha + m)
        }
    };
    let levels = if plus {
        [alpha - m, alpha + m, alpha - m - n * n, alpha + m - n * n]
    } else {
        [alpha + m, alpha - m, alpha + m + n * n, alpha - m + n * n]
    };
    let mut cuts = vec![-n, 0.0, n];
    for l in levels {
        if l > 0.0 && l.sqrt() < n {
            cuts.push(l.sqrt());
            cuts.push(-l.sqrt());
        }
    }
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup();
    let steps = 4000;
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        // p = a + (b - a) (3u^2 - 2u^3) flattens square-root endpoints
        for i in 0..steps {
            let u = (i as f64 + 0.5) / steps as f64;
            let p = a + (b - a) * u * u * (3.0 - 2.0 * u);
            let jac = (b - a) * 6.0 * u * (1.0 - u);
            let (lo, hi) = bounds(p);
            total += q_measure(lo, hi, n) * jac / steps as f64;
        }
    }
    Ok(total)
}

fn square_problem(m_sign: f64, n: f64) -> Problem {
    let mut p = Problem::new(2);
    p.phase = vec![
        PhaseTerm { coef: 1.0, power: 2, expr: Affine::coord(0) },
        PhaseTerm { coef: m_sign, power: 2, expr: Affine::coord(1) },
    ];
    for i in 0..2 {
        p.constraints.push(Constraint {
            big: Affine::constant(n),
            small: Affine::coord(i),
            c: 1.0,
        });
    }
    p.xi_max = f64::INFINITY;
    p.rtol = 1e-6;
    p.max_panels = 4000;
    p
}

/// The same area through the hyperplane quadrature engine.
pub fn auxiliary_square_integral(alpha: f64, m: f64, n: f64, sign: f64) -> Result<f64> {
    plus_sign(sign)?;
    if !(m > 0.0 && n > 0.0) {
        return Err(Error::InvalidParameter("M and N must be positive".into()));
    }
    Ok(square_problem(sign, n).integrate(alpha, &[m])?.values[0])
}

/// Growth of the area in `N` at fixed `alpha` and `M`.
pub fn square_n_sweep(alpha: f64, m: f64, ns: &[f64], sign: f64) -> Result<LineFit> {
    let vals = ns
        .iter()
        .map(|n| auxiliary_square_integral(alpha, m, *n, sign))
        .collect::<Result<Vec<_>>>()?;
    fit_loglog(ns, &vals)
}

fn rows(alpha: f64, ms: &[f64], values: &[f64]) -> Vec<FreRow> {
    ms.iter()
        .zip(values)
        .map(|(m, v)| FreRow {
            m: *m,
            sup: *v,
            argmax: FrePoint { fixed: Vec::new(), alpha, sigma: 0.0 },
            tail_bound: 0.0,
            sampled_sup: *v,
            split_sups: [*v, *v],
        })
        .collect()
}

/// Engine values of `|p^2 - alpha| < M` with the standard fit.
pub fn window_report(alpha: f64, ms: &[f64], fit_tol: f64) -> Result<FreReport> {
    let mut p = Problem::new(1);
    p.phase.push(PhaseTerm { coef: 1.0, power: 2, expr: Affine::coord(0) });
    p.xi_max = f64::INFINITY;
    let v = p.integrate(alpha, ms)?;
    FreReport::from_rows(format!("window alpha={alpha}"), rows(alpha, ms, &v.values), fit_tol)
}

/// Engine values of the plus-sign square at half-width `n` with the standard fit.
pub fn annulus_report(alpha: f64, n: f64, ms: &[f64], fit_tol: f64) -> Result<FreReport> {
    let v = square_problem(1.0, n).integrate(alpha, ms)?;
    FreReport::from_rows(format!("annulus alpha={alpha} N={n}"), rows(alpha, ms, &v.values), fit_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn closed_forms() {
        assert_eq!(window_length(0.0, 4.0), 4.0);
        assert!((window_length(10.0, 1.0) - 2.0 * (11f64.sqrt() - 3.0)).abs() < 1e-15);
        assert!((annulus_area(10.0, 1.0) - 2.0 * PI).abs() < 1e-14);
        assert!((annulus_area(0.5, 1.0) - 1.5 * PI).abs() < 1e-14);
    }

    #[test]
    fn oracle_on_full_square_and_annulus() {
        let full = square_integral_oracle(0.0, 1e5, 100.0, 1.0).unwrap();
        assert!((full - 4e4).abs() < 1e-6 * 4e4);
        let ring = square_integral_oracle(10.0, 1.0, 100.0, 1.0).unwrap();
        assert!((ring / (2.0 * PI) - 1.0).abs() < 1e-4, "{ring}");
        assert!(square_integral_oracle(0.0, 1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn engine_matches_oracle() {
        for (alpha, m, n, sign) in [(10.0, 1.0, 100.0, 1.0), (0.0, 1.0, 10.0, -1.0), (30.0, 5.0, 8.0, -1.0), (50.0, 3.0, 6.0, 1.0)] {
            let a = auxiliary_square_integral(alpha, m, n, sign).unwrap();
            let b = square_integral_oracle(alpha, m, n, sign).unwrap();
            assert!((a - b).abs() < 1e-3 * b, "{alpha} {m} {n} {sign}: {a} vs {b}");
        }
        let full = auxiliary_square_integral(0.0, 1e5, 100.0, 1.0).unwrap();
        assert!((full - 4e4).abs() < 1e-6 * 4e4);
    }
}
