//! Integrals over a convolution hyperplane restricted to `|Phi - alpha| < M`.
//!
//! A problem has one or two integration coordinates `t = (s, r)`: `s` is the
//! inner coordinate, `r` the outer one. Every frequency is affine in `t`, the
//! phase is a sum of squares and cubes of such affine forms, and the region is
//! cut out by constraints `|E1| >= c |E2|`. On an inner line the window and
//! the region are unions of intervals whose endpoints are computed exactly,
//! and the integrand is smooth in between, so each piece gets an 8-point
//! Gauss-Legendre rule. The outer coordinate is integrated by adaptive
//! Gauss-Kronrod (7, 15) on panels split at every vertex of the region and
//! every point where a region edge meets a window edge.
//!
//! Pieces outside `|E| <= xi_max` for the truncated forms are reported
//! separately as the tail.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const GL8_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_W: [f64; 4] = [
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

const GK15_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK15_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// Gauss weights at `GK15_X[1], [3], [5], [7]`.
const GK15_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Geometric ladder `|E| in {0, 4^m}` used to split bumps of `<E>^{-a}`.
const LADDER: [f64; 9] = [0.0, 1.0, 4.0, 16.0, 64.0, 256.0, 1024.0, 4096.0, 16384.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub c: f64,
    pub g: [f64; 2],
}

impl Affine {
    pub const fn constant(c: f64) -> Self {
        Self { c, g: [0.0, 0.0] }
    }

    /// The coordinate `t_i` itself.
    pub fn coord(i: usize) -> Self {
        let mut g = [0.0, 0.0];
        g[i] = 1.0;
        Self { c: 0.0, g }
    }

    pub fn eval(&self, t: [f64; 2]) -> f64 {
        self.c + self.g[0] * t[0] + self.g[1] * t[1]
    }

    pub fn scale(self, k: f64) -> Self {
        Self {
            c: k * self.c,
            g: [k * self.g[0], k * self.g[1]],
        }
    }

    pub fn add(self, o: Self) -> Self {
        Self {
            c: self.c + o.c,
            g: [self.g[0] + o.g[0], self.g[1] + o.g[1]],
        }
    }

    fn on_line(&self, r: f64) -> Line {
        Line {
            a: self.c + self.g[1] * r,
            b: self.g[0],
        }
    }

    fn is_inner(&self) -> bool {
        self.g[0] != 0.0
    }
}

/// `a + b s` along an inner line.
#[derive(Debug, Clone, Copy)]
struct Line {
    a: f64,
    b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseTerm {
    pub coef: f64,
    /// 2 or 3.
    pub power: u32,
    pub expr: Affine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Factor {
    /// `|E|^exp`.
    Abs { expr: Affine, exp: f64 },
    /// `<E>^{-exp}` with `<x> = sqrt(1 + x^2)`.
    InvJapanese { expr: Affine, exp: f64 },
}

impl Factor {
    fn expr(&self) -> &Affine {
        match self {
            Factor::Abs { expr, .. } | Factor::InvJapanese { expr, .. } => expr,
        }
    }

    fn eval(&self, v: f64) -> f64 {
        match *self {
            Factor::Abs { exp, .. } => {
                if exp == 0.0 {
                    1.0
                } else {
                    v.abs().powf(exp)
                }
            }
            Factor::InvJapanese { exp, .. } => (1.0 + v * v).powf(-0.5 * exp),
        }
    }
}

/// `|big| >= c |small|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constraint {
    pub big: Affine,
    pub small: Affine,
    pub c: f64,
}

impl Constraint {
    fn holds(&self, t: [f64; 2], slack: f64) -> bool {
        let b = self.big.eval(t).abs();
        let s = self.c * self.small.eval(t).abs();
        b >= s - slack * (b + s + 1e-300)
    }

    fn inner(&self) -> bool {
        self.big.is_inner() || self.small.is_inner()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    /// 1 or 2.
    pub dim: usize,
    pub prefactor: f64,
    pub phase: Vec<PhaseTerm>,
    pub factors: Vec<Factor>,
    pub constraints: Vec<Constraint>,
    /// Forms confined to `|E| <= xi_max`; the rest counts as tail.
    pub truncated: Vec<Affine>,
    pub xi_max: f64,
    pub rtol: f64,
    pub max_panels: usize,
}

/// Values and tail contributions, one per window half-width.
#[derive(Debug, Clone, PartialEq)]
pub struct Integral {
    pub values: Vec<f64>,
    pub tails: Vec<f64>,
    pub panels: usize,
}

impl Problem {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            prefactor: 1.0,
            phase: Vec::new(),
            factors: Vec::new(),
            constraints: Vec::new(),
            truncated: Vec::new(),
            xi_max: 1e3,
            rtol: 1e-4,
            max_panels: 400,
        }
    }

    pub fn phase_at(&self, t: [f64; 2]) -> f64 {
        self.phase
            .iter()
            .map(|p| p.coef * p.expr.eval(t).powi(p.power as i32))
            .sum()
    }

    pub fn integrand_at(&self, t: [f64; 2]) -> f64 {
        self.factors
            .iter()
            .fold(self.prefactor, |acc, f| acc * f.eval(f.expr().eval(t)))
    }

    pub fn in_region(&self, t: [f64; 2]) -> bool {
        self.constraints.iter().all(|c| c.holds(t, 0.0))
    }

    fn in_truncation(&self, t: [f64; 2]) -> bool {
        self.truncated.iter().all(|e| e.eval(t).abs() <= self.xi_max)
    }

    /// Phase along the inner line at outer value `r`, as `[p0, p1, p2, p3]`.
    pub fn phase_poly(&self, r: f64) -> [f64; 4] {
        let mut p = [0.0; 4];
        for term in &self.phase {
            let l = term.expr.on_line(r);
            let (a, b, k) = (l.a, l.b, term.coef);
            match term.power {
                2 => {
                    p[0] += k * a * a;
                    p[1] += k * 2.0 * a * b;
                    p[2] += k * b * b;
                }
                3 => {
                    p[0] += k * a * a * a;
                    p[1] += k * 3.0 * a * a * b;
                    p[2] += k * 3.0 * a * b * b;
                    p[3] += k * b * b * b;
                }
                _ => unreachable!("phase powers are 2 or 3"),
            }
        }
        p
    }

    /// Integrates over the region for each `M` in ascending `ms`.
    pub fn integrate(&self, alpha: f64, ms: &[f64]) -> Result<Integral> {
        if ms.windows(2).any(|w| w[1] < w[0]) || ms.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::InvalidParameter("window half-widths must be positive and ascending".into()));
        }
        if self.dim == 1 {
            let mut values = vec![0.0; ms.len()];
            let mut tails = vec![0.0; ms.len()];
            self.inner(0.0, alpha, ms, &mut values, &mut tails)?;
            return Ok(Integral {
                values,
                tails,
                panels: 1,
            });
        }
        self.outer(alpha, ms)
    }

    /// Inner integral at outer value `r`, accumulated into `out` and `tail`.
    fn inner(&self, r: f64, alpha: f64, ms: &[f64], out: &mut [f64], tail: &mut [f64]) -> Result<()> {
        let poly = self.phase_poly(r);
        let mut bp: Vec<f64> = Vec::with_capacity(64);
        for c in &self.constraints {
            if c.inner() {
                let (e1, e2) = (c.big.on_line(r), c.small.on_line(r));
                for sgn in [1.0, -1.0] {
                    let den = e1.b - sgn * c.c * e2.b;
                    if den != 0.0 {
                        bp.push((sgn * c.c * e2.a - e1.a) / den);
                    }
                }
            }
        }
        for e in &self.truncated {
            let l = e.on_line(r);
            if l.b != 0.0 {
                bp.push((self.xi_max - l.a) / l.b);
                bp.push((-self.xi_max - l.a) / l.b);
            }
        }
        for f in &self.factors {
            let l = f.expr().on_line(r);
            if l.b != 0.0 {
                for v in LADDER {
                    bp.push((v - l.a) / l.b);
                    if v != 0.0 {
                        bp.push((-v - l.a) / l.b);
                    }
                }
            }
        }
        for m in ms {
            real_roots(poly, alpha + m, &mut bp);
            real_roots(poly, alpha - m, &mut bp);
        }
        bp.retain(|x| x.is_finite());
        bp.sort_by(|a, b| a.total_cmp(b));
        bp.dedup();

        let at = |s: f64| -> [f64; 2] { [s, r] };
        let window_index = |s: f64| -> Option<usize> {
            let d = (poly_eval(&poly, s) - alpha).abs();
            ms.iter().position(|m| d < *m)
        };
        let piece = |x0: f64, x1: f64| -> f64 {
            let (c, h) = (0.5 * (x0 + x1), 0.5 * (x1 - x0));
            let mut acc = 0.0;
            for k in 0..4 {
                acc += GL8_W[k] * (self.integrand_at(at(c - h * GL8_X[k])) + self.integrand_at(at(c + h * GL8_X[k])));
            }
            acc * h
        };

        for w in bp.windows(2) {
            let (x0, x1) = (w[0], w[1]);
            let mid = 0.5 * (x0 + x1);
            if !self.in_region(at(mid)) {
                continue;
            }
            let Some(i) = window_index(mid) else { continue };
            let v = piece(x0, x1);
            let dest = if self.in_truncation(at(mid)) {
                &mut *out
            } else {
                &mut *tail
            };
            for d in dest[i..].iter_mut() {
                *d += v;
            }
        }
        // unbounded ends
        if let (Some(&first), Some(&last)) = (bp.first(), bp.last()) {
            for (end, dir) in [(first, -1.0), (last, 1.0)] {
                let probe = end + dir * end.abs().max(1.0);
                if !self.in_region(at(probe)) {
                    continue;
                }
                let Some(i) = window_index(probe) else { continue };
                let v = self.end_tail(end, dir, r)?;
                for d in tail[i..].iter_mut() {
                    *d += v;
                }
            }
        } else if self.in_region(at(0.0)) && window_index(0.0).is_some() {
            return Err(Error::NonintegrableDirection(
                "window and region cover the whole inner line".into(),
            ));
        }
        Ok(())
    }

    /// Bound on the integral over `[end, +-inf)` from a power-law envelope.
    fn end_tail(&self, end: f64, dir: f64, r: f64) -> Result<f64> {
        let scale = end.abs().max(1.0);
        let s1 = end + dir * scale;
        let s2 = end + dir * 3.0 * scale;
        let f1 = self.integrand_at([s1, r]);
        let f2 = self.integrand_at([s2, r]);
        if f1 == 0.0 {
            return Ok(0.0);
        }
        let decay = -(f2 / f1).ln() / (s2.abs() / s1.abs()).ln();
        if !(decay > 1.0 + 1e-9) {
            return Err(Error::NonintegrableDirection(format!(
                "integrand decays like |t|^-{decay:.3} along the inner line"
            )));
        }
        let near = {
            let (c, h) = (0.5 * (end + s1), 0.5 * (s1 - end));
            let mut acc = 0.0;
            for k in 0..4 {
                acc += GL8_W[k] * (self.integrand_at([c - h * GL8_X[k], r]) + self.integrand_at([c + h * GL8_X[k], r]));
            }
            (acc * h).abs()
        };
        Ok(near + f1 * s1.abs() / (decay - 1.0))
    }

    fn inner_values(&self, r: f64, alpha: f64, ms: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut v = vec![0.0; ms.len()];
        let mut t = vec![0.0; ms.len()];
        self.inner(r, alpha, ms, &mut v, &mut t)?;
        Ok((v, t))
    }

    /// Outer breakpoints: outer-only edges, ladders, and region vertices.
    fn outer_breakpoints(&self, alpha: f64, ms: &[f64]) -> Vec<f64> {
        let mut bp = Vec::new();
        let outer_only = |e: &Affine| !e.is_inner() && e.g[1] != 0.0;
        for c in &self.constraints {
            if !c.inner() {
                for sgn in [1.0, -1.0] {
                    let den = c.big.g[1] - sgn * c.c * c.small.g[1];
                    if den != 0.0 {
                        bp.push((sgn * c.c * c.small.c - c.big.c) / den);
                    }
                }
            }
        }
        for e in &self.truncated {
            if outer_only(e) {
                bp.push((self.xi_max - e.c) / e.g[1]);
                bp.push((-self.xi_max - e.c) / e.g[1]);
            }
        }
        for f in &self.factors {
            let e = f.expr();
            if outer_only(e) {
                for v in LADDER {
                    bp.push((v - e.c) / e.g[1]);
                    if v != 0.0 {
                        bp.push((-v - e.c) / e.g[1]);
                    }
                }
            }
        }

        // edges that move with the inner coordinate: lines u . t = w
        let lines = self.edge_lines(true);
        let keep = |t: [f64; 2]| self.in_closure(t);
        for i in 0..lines.len() {
            let (u, w) = lines[i];
            for &(v, z) in &lines[i + 1..] {
                if let Some(t) = intersect((u, w), (v, z)) {
                    if keep(t) {
                        bp.push(t[1]);
                    }
                }
            }
            // meet the window edges: t = p0 + lambda d along the line
            let (p0, d) = line_frame(u, w);
            let poly = self.phase_along(p0, d);
            let mut roots = Vec::new();
            for m in ms {
                real_roots(poly, alpha + m, &mut roots);
                real_roots(poly, alpha - m, &mut roots);
            }
            for l in roots {
                let t = [p0[0] + l * d[0], p0[1] + l * d[1]];
                if keep(t) {
                    bp.push(t[1]);
                }
            }
        }
        bp.retain(|x| x.is_finite());
        bp.sort_by(|a, b| a.total_cmp(b));
        bp.dedup();
        bp
    }

    fn in_closure(&self, t: [f64; 2]) -> bool {
        t[0].is_finite() && t[1].is_finite() && self.constraints.iter().all(|c| c.holds(t, 1e-9))
    }

    /// Region edges as lines `u . t = w`; `moving` keeps only those that
    /// depend on the inner coordinate and adds the inner truncation edges.
    fn edge_lines(&self, moving: bool) -> Vec<([f64; 2], f64)> {
        let mut lines = Vec::new();
        for c in self.constraints.iter().filter(|c| !moving || c.inner()) {
            for sgn in [1.0, -1.0] {
                let u = [c.big.g[0] - sgn * c.c * c.small.g[0], c.big.g[1] - sgn * c.c * c.small.g[1]];
                if u != [0.0, 0.0] {
                    lines.push((u, sgn * c.c * c.small.c - c.big.c));
                }
            }
        }
        if moving {
            for e in self.truncated.iter().filter(|e| e.is_inner()) {
                for v in [self.xi_max, -self.xi_max] {
                    lines.push((e.g, v - e.c));
                }
            }
        }
        lines
    }

    /// Phase along `p0 + lambda d` as a cubic in `lambda`.
    fn phase_along(&self, p0: [f64; 2], d: [f64; 2]) -> [f64; 4] {
        let mut poly = [0.0; 4];
        for term in &self.phase {
            let a = term.expr.eval(p0);
            let b = term.expr.g[0] * d[0] + term.expr.g[1] * d[1];
            let k = term.coef;
            if term.power == 2 {
                poly[0] += k * a * a;
                poly[1] += k * 2.0 * a * b;
                poly[2] += k * b * b;
            } else {
                poly[0] += k * a * a * a;
                poly[1] += k * 3.0 * a * a * b;
                poly[2] += k * 3.0 * a * b * b;
                poly[3] += k * b * b * b;
            }
        }
        poly
    }

    /// Values of the phase at region vertices, at its critical points along
    /// region edges, and at inner-line critical points on `rows` outer lines.
    pub fn critical_values(&self, rows: usize) -> Vec<f64> {
        let mut out = Vec::new();
        let crit_on = |p0: [f64; 2], d: [f64; 2], out: &mut Vec<f64>| {
            let poly = self.phase_along(p0, d);
            let mut r = Vec::new();
            real_roots([poly[1], 2.0 * poly[2], 3.0 * poly[3], 0.0], 0.0, &mut r);
            for l in r {
                let t = [p0[0] + l * d[0], p0[1] + l * d[1]];
                if self.in_closure(t) {
                    out.push(self.phase_at(t));
                }
            }
        };
        let lines = self.edge_lines(false);
        if self.dim == 1 {
            for (u, w) in &lines {
                if u[0] != 0.0 && self.in_closure([w / u[0], 0.0]) {
                    out.push(self.phase_at([w / u[0], 0.0]));
                }
            }
            crit_on([0.0, 0.0], [1.0, 0.0], &mut out);
            return out;
        }
        let mut rs = Vec::new();
        for i in 0..lines.len() {
            for j in i + 1..lines.len() {
                if let Some(t) = intersect(lines[i], lines[j]) {
                    if self.in_closure(t) {
                        out.push(self.phase_at(t));
                        rs.push(t[1]);
                    }
                }
            }
            let (p0, d) = line_frame(lines[i].0, lines[i].1);
            crit_on(p0, d, &mut out);
        }
        if let (Some(lo), Some(hi)) = (
            rs.iter().cloned().reduce(f64::min),
            rs.iter().cloned().reduce(f64::max),
        ) {
            for k in 0..rows {
                let r = lo + (hi - lo) * (k as f64 + 0.5) / rows as f64;
                crit_on([0.0, r], [1.0, 0.0], &mut out);
            }
        }
        out.retain(|v| v.is_finite());
        out
    }

    fn outer(&self, alpha: f64, ms: &[f64]) -> Result<Integral> {
        let n = ms.len();
        let bp = self.outer_breakpoints(alpha, ms);
        let mut values = vec![0.0; n];
        let mut tails = vec![0.0; n];
        if bp.len() < 2 {
            return Ok(Integral {
                values,
                tails,
                panels: 0,
            });
        }

        let mut heap = BinaryHeap::new();
        let mut done: Vec<Panel> = Vec::new();
        for w in bp.windows(2) {
            let p = self.gk_panel(w[0], w[1], alpha, ms)?;
            heap.push(p);
        }
        let scale = |heap: &BinaryHeap<Panel>, done: &[Panel]| -> Vec<f64> {
            let mut s = vec![0.0; n];
            for p in heap.iter().chain(done) {
                for i in 0..n {
                    s[i] += p.value[i].abs() + p.tail[i].abs();
                }
            }
            s
        };
        let mut total_panels = heap.len();
        loop {
            let s = scale(&heap, &done);
            let floor = s.iter().cloned().fold(0.0, f64::max) * 1e-12 + 1e-300;
            let err: f64 = heap
                .iter()
                .map(|p| rel_err(p, &s, floor))
                .sum();
            if err <= self.rtol || total_panels >= self.max_panels {
                break;
            }
            // split the panel with the largest relative error
            let mut worst: Vec<Panel> = heap.into_vec();
            worst.sort_by(|a, b| rel_err(b, &s, floor).total_cmp(&rel_err(a, &s, floor)));
            let p = worst.remove(0);
            heap = worst.into_iter().collect();
            if rel_err(&p, &s, floor) == 0.0 || (p.b - p.a) <= 1e-12 * p.a.abs().max(p.b.abs()).max(1.0) {
                done.push(p);
                if heap.is_empty() {
                    break;
                }
                continue;
            }
            let m = 0.5 * (p.a + p.b);
            heap.push(self.gk_panel(p.a, m, alpha, ms)?);
            heap.push(self.gk_panel(m, p.b, alpha, ms)?);
            total_panels += 1;
        }
        for p in heap.iter().chain(&done) {
            for i in 0..n {
                values[i] += p.value[i];
                tails[i] += p.tail[i];
            }
        }
        // beyond the outermost breakpoints
        for (end, dir) in [(bp[0], -1.0), (bp[bp.len() - 1], 1.0)] {
            let sc = end.abs().max(1.0);
            let (g1, _) = self.inner_values(end + dir * sc, alpha, ms)?;
            let (g2, _) = self.inner_values(end + dir * 3.0 * sc, alpha, ms)?;
            let (r1, r2) = ((end + dir * sc).abs(), (end + dir * 3.0 * sc).abs());
            for i in 0..n {
                if g1[i] == 0.0 {
                    continue;
                }
                let decay = -(g2[i] / g1[i]).ln() / (r2 / r1).ln();
                if !(decay > 1.0 + 1e-9) {
                    return Err(Error::NonintegrableDirection(format!(
                        "inner integral decays like |r|^-{decay:.3} in the outer coordinate"
                    )));
                }
                tails[i] += g1[i] * (sc + r1 / (decay - 1.0));
            }
        }
        for i in 0..n {
            values[i] *= 1.0;
            if values[i] < 0.0 {
                values[i] = 0.0;
            }
        }
        Ok(Integral {
            values,
            tails,
            panels: total_panels,
        })
    }

    fn gk_panel(&self, a: f64, b: f64, alpha: f64, ms: &[f64]) -> Result<Panel> {
        let n = ms.len();
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        let mut k = vec![0.0; n];
        let mut g = vec![0.0; n];
        let mut kt = vec![0.0; n];
        for (j, x) in GK15_X.iter().enumerate() {
            let pts: &[f64] = if *x == 0.0 { &[0.0] } else { &[-1.0, 1.0] };
            for sgn in pts {
                let (v, t) = self.inner_values(c + sgn * h * x, alpha, ms)?;
                for i in 0..n {
                    k[i] += GK15_WK[j] * v[i];
                    kt[i] += GK15_WK[j] * t[i];
                    if j % 2 == 1 {
                        g[i] += GK15_WG[j / 2] * v[i];
                    }
                }
            }
        }
        let err: Vec<f64> = (0..n).map(|i| (h * (k[i] - g[i])).abs()).collect();
        Ok(Panel {
            a,
            b,
            value: k.iter().map(|v| v * h).collect(),
            tail: kt.iter().map(|v| v * h).collect(),
            err,
        })
    }
}

fn intersect((u, w): ([f64; 2], f64), (v, z): ([f64; 2], f64)) -> Option<[f64; 2]> {
    let det = u[0] * v[1] - u[1] * v[0];
    if det.abs() > 1e-14 * (u[0].abs() + u[1].abs()) * (v[0].abs() + v[1].abs()) {
        Some([(w * v[1] - u[1] * z) / det, (u[0] * z - w * v[0]) / det])
    } else {
        None
    }
}

/// Foot point and direction of the line `u . t = w`.
fn line_frame(u: [f64; 2], w: f64) -> ([f64; 2], [f64; 2]) {
    let n2 = u[0] * u[0] + u[1] * u[1];
    ([u[0] * w / n2, u[1] * w / n2], [-u[1], u[0]])
}

fn rel_err(p: &Panel, scale: &[f64], floor: f64) -> f64 {
    p.err
        .iter()
        .zip(scale)
        .map(|(e, s)| e / s.max(floor))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    tail: Vec<f64>,
    err: Vec<f64>,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.a == o.a && self.b == o.b
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Panel {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.a.total_cmp(&o.a).then(self.b.total_cmp(&o.b))
    }
}

pub fn poly_eval(p: &[f64; 4], s: f64) -> f64 {
    ((p[3] * s + p[2]) * s + p[1]) * s + p[0]
}

/// Appends the real roots of `p(s) = level`.
pub fn real_roots(p: [f64; 4], level: f64, out: &mut Vec<f64>) {
    let q = [p[0] - level, p[1], p[2], p[3]];
    let deg = (0..4).rev().find(|&i| q[i] != 0.0);
    match deg {
        None | Some(0) => {}
        Some(1) => out.push(-q[0] / q[1]),
        Some(2) => quadratic_roots(q[2], q[1], q[0], out),
        _ => cubic_roots(q, out),
    }
}

fn quadratic_roots(a: f64, b: f64, c: f64, out: &mut Vec<f64>) {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return;
    }
    let t = -0.5 * (b + b.signum() * disc.sqrt());
    if t != 0.0 {
        out.push(t / a);
        out.push(c / t);
    } else {
        // b = 0 and c = 0
        out.push(0.0);
    }
}

fn cubic_roots(q: [f64; 4], out: &mut Vec<f64>) {
    let mut crit = Vec::with_capacity(2);
    quadratic_roots(3.0 * q[3], 2.0 * q[2], q[1], &mut crit);
    crit.sort_by(|a, b| a.total_cmp(b));
    let bound = 1.0 + (0..3).map(|i| (q[i] / q[3]).abs()).fold(0.0, f64::max);
    let mut edges = vec![-bound];
    edges.extend(crit.iter().copied().filter(|c| c.abs() < bound));
    edges.push(bound);
    for w in edges.windows(2) {
        if let Some(r) = bisect(&q, w[0], w[1]) {
            out.push(r);
        }
    }
}

fn bisect(q: &[f64; 4], mut lo: f64, mut hi: f64) -> Option<f64> {
    let mut flo = poly_eval(q, lo);
    let fhi = poly_eval(q, hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = poly_eval(q, mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sorted_roots(p: [f64; 4], level: f64) -> Vec<f64> {
        let mut r = Vec::new();
        real_roots(p, level, &mut r);
        r.sort_by(|a, b| a.total_cmp(b));
        r
    }

    #[test]
    fn roots_of_low_degree() {
        assert_eq!(sorted_roots([1.0, 2.0, 0.0, 0.0], 0.0), vec![-0.5]);
        let r = sorted_roots([-4.0, 0.0, 1.0, 0.0], 0.0);
        assert!((r[0] + 2.0).abs() < 1e-15 && (r[1] - 2.0).abs() < 1e-15);
        assert!(sorted_roots([1.0, 0.0, 1.0, 0.0], 0.0).is_empty());
        // (s - 1)(s - 2)(s + 3) = s^3 - 7 s + 6
        let r = sorted_roots([6.0, -7.0, 0.0, 1.0], 0.0);
        for (a, b) in r.iter().zip([-3.0, 1.0, 2.0]) {
            assert!((a - b).abs() < 1e-12, "{r:?}");
        }
        assert_eq!(sorted_roots([0.0, 0.0, 0.0, 1.0], 8.0).len(), 1);
    }

    fn parabola_1d() -> Problem {
        let mut p = Problem::new(1);
        p.phase.push(PhaseTerm {
            coef: 1.0,
            power: 2,
            expr: Affine::coord(0),
        });
        p
    }

    #[test]
    fn one_dimensional_window_is_exact() {
        let p = parabola_1d();
        let ms = [1.0, 4.0, 25.0];
        let r = p.integrate(0.0, &ms).unwrap();
        for (v, m) in r.values.iter().zip(ms) {
            assert!((v - 2.0 * m.sqrt()).abs() < 1e-12);
        }
        let r = p.integrate(10.0, &[1.0]).unwrap();
        let expect = 2.0 * (11f64.sqrt() - 9f64.sqrt());
        assert!((r.values[0] - expect).abs() < 1e-12);
        // multiplier one without a window bound never closes
        let mut q = Problem::new(1);
        q.phase.push(PhaseTerm {
            coef: 0.0,
            power: 2,
            expr: Affine::coord(0),
        });
        assert!(matches!(q.integrate(0.0, &[1.0]), Err(Error::NonintegrableDirection(_))));
    }

    #[test]
    fn annulus_area() {
        let mut p = Problem::new(2);
        for i in 0..2 {
            p.phase.push(PhaseTerm {
                coef: 1.0,
                power: 2,
                expr: Affine::coord(i),
            });
            p.constraints.push(Constraint {
                big: Affine::constant(100.0),
                small: Affine::coord(i),
                c: 1.0,
            });
        }
        p.rtol = 1e-8;
        p.max_panels = 2000;
        let ms = [1.0, 10.0, 100.0];
        let r = p.integrate(200.0, &ms).unwrap();
        for (v, m) in r.values.iter().zip(ms) {
            assert!((v / (2.0 * PI * m) - 1.0).abs() < 1e-6, "{v} {m}");
        }
    }

    #[test]
    fn weighted_strip_matches_closed_form() {
        // int_{|s| < 3} int <r>^{-2} 1_{|s - r - a| < M} dr ds, inner line s
        let mut p = Problem::new(2);
        p.phase.push(PhaseTerm {
            coef: 0.0,
            power: 2,
            expr: Affine::coord(0),
        });
        // Phi = s - r is linear: write it as ((s - r + 1)^2 - (s - r - 1)^2) / 4
        let d = Affine::coord(0).add(Affine::coord(1).scale(-1.0));
        p.phase = vec![
            PhaseTerm { coef: 0.25, power: 2, expr: d.add(Affine::constant(1.0)) },
            PhaseTerm { coef: -0.25, power: 2, expr: d.add(Affine::constant(-1.0)) },
        ];
        p.factors.push(Factor::InvJapanese { expr: Affine::coord(1), exp: 2.0 });
        p.constraints.push(Constraint { big: Affine::constant(3.0), small: Affine::coord(0), c: 1.0 });
        p.rtol = 1e-9;
        p.max_panels = 3000;
        let (alpha, m) = (0.5, 0.75);
        let r = p.integrate(alpha, &[m]).unwrap();
        // for fixed r: s in (r + a - M, r + a + M) cut to |s| < 3
        let f = |r: f64| -> f64 {
            let lo = (r + alpha - m).max(-3.0);
            let hi = (r + alpha + m).min(3.0);
            (hi - lo).max(0.0) / (1.0 + r * r)
        };
        let n = 400_000;
        let (a, b) = (-3.0 - alpha - m, 3.0 - alpha + m);
        let h = (b - a) / n as f64;
        let oracle: f64 = (0..n).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h;
        assert!((r.values[0] - oracle).abs() < 1e-7, "{} {oracle}", r.values[0]);
    }
}
