//! Time integration of the defocusing gKdV and NLS equations, their
//! conserved quantities, the weighted energy `E_sigma` and its flux.
//!
//! In Fourier variables (normalization of [`crate::spectral`]):
//!
//! ```text
//! gKdV  u_t + u_xxx - u^k u_x = 0        c_t = i xi^3 c + i xi/(k+1) P[(u^{k+1})^]
//! NLS   i v_t + v_xx - |v|^{p-1} v = 0   c_t = -i xi^2 c - i P[(|v|^{p-1} v)^]
//! ```
//!
//! `P` is the dealiasing projection at degree `k+1` (resp. `p`). The state is
//! kept inside the retained band, so every product below is computed without
//! aliasing and mass, energy and the flux identity hold exactly for the
//! semi-discrete system.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_loglog, LineFit};
use crate::spectral::{DealiasRule, Grid, SpectralField, Transformer};
use crate::weights::{gevrey_norm, Weight};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Weights with `ln m` above this are refused.
pub const WEIGHT_LN_BOUND: f64 = 700.0;
/// Points on the contour used for the ETDRK4 coefficients.
pub const CONTOUR_POINTS: usize = 64;
/// Boundary layer, as a fraction of the box, probed by the edge diagnostic.
pub const EDGE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "equation", rename_all = "lowercase", deny_unknown_fields)]
pub enum Equation {
    Gkdv { k: u32 },
    Nls { p: u32 },
}

impl Equation {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Equation::Gkdv { k } if k >= 4 && k % 2 == 0 => Ok(()),
            Equation::Gkdv { k } => Err(Error::InvalidParameter(format!(
                "gKdV needs even k >= 4, got {k}"
            ))),
            Equation::Nls { p } if p >= 3 && p % 2 == 1 => Ok(()),
            Equation::Nls { p } => Err(Error::InvalidParameter(format!(
                "NLS needs odd p >= 3, got {p}"
            ))),
        }
    }

    /// Degree of the nonlinearity, which sets the dealiasing fraction.
    pub fn dealias_degree(&self) -> usize {
        match *self {
            Equation::Gkdv { k } => k as usize + 1,
            Equation::Nls { p } => p as usize,
        }
    }

    /// Dispersion symbol `L(xi)`; the linear flow is `exp(i L(xi) t)`.
    pub fn symbol(&self, xi: f64) -> f64 {
        match self {
            Equation::Gkdv { .. } => xi * xi * xi,
            Equation::Nls { .. } => -xi * xi,
        }
    }

    pub fn is_real(&self) -> bool {
        matches!(self, Equation::Gkdv { .. })
    }

    /// Coefficient of the potential term in the energy.
    pub fn potential_coefficient(&self) -> f64 {
        match *self {
            Equation::Gkdv { k } => 2.0 / ((k as f64 + 1.0) * (k as f64 + 2.0)),
            Equation::Nls { p } => 2.0 / (p as f64 + 1.0),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Equation::Gkdv { k } => format!("gkdv_k{k}"),
            Equation::Nls { p } => format!("nls_p{p}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Etdrk4,
    Strang,
}

/// Switches used by tests to break the solver on purpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hooks {
    /// Drop the nonlinearity.
    pub linear_only: bool,
    /// Negate the remainder inside the flux.
    pub flip_remainder_sign: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvolutionConfig {
    pub equation: Equation,
    pub grid: Grid,
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    /// Largest allowed edge amplitude relative to the initial peak.
    pub edge_floor: Option<f64>,
    /// Record every `stride`-th step.
    pub stride: usize,
    pub record_flux: bool,
    pub hooks: Hooks,
}

impl EvolutionConfig {
    pub fn new(equation: Equation, grid: Grid, dt: f64, t_end: f64) -> Result<Self> {
        let cfg = Self {
            equation,
            grid,
            dt,
            t_end,
            scheme: Scheme::Etdrk4,
            edge_floor: Some(1e-10),
            stride: 1,
            record_flux: true,
            hooks: Hooks::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.equation.validate()?;
        if !(self.dt > 0.0 && self.dt <= 1.0) {
            return Err(Error::InvalidParameter(format!("dt must lie in (0, 1], got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        if self.stride == 0 {
            return Err(Error::InvalidParameter("stride must be >= 1".into()));
        }
        if self.scheme == Scheme::Strang && self.equation.is_real() {
            return Err(Error::InvalidParameter("Strang splitting is offered for NLS only".into()));
        }
        if let Some(f) = self.edge_floor {
            if !(f > 0.0) {
                return Err(Error::InvalidParameter(format!("edge floor must be > 0, got {f}")));
            }
        }
        Ok(())
    }

    pub fn dealias_rule(&self) -> DealiasRule {
        DealiasRule::new(&self.grid, self.equation.dealias_degree())
            .expect("equation degree is always >= 2")
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Named families of initial data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// `A sech(lambda x)`.
    Sech { amplitude: f64, lambda: f64 },
    /// `A exp(-x^2 / w^2)`.
    Gaussian { amplitude: f64, width: f64 },
    /// `A cos(xi0 x)` for real fields, `A exp(i xi0 x)` otherwise.
    SingleMode { xi0: f64, amplitude: f64 },
}

impl InitialData {
    pub fn samples(&self, grid: &Grid, real: bool) -> Vec<Complex64> {
        grid.nodes()
            .into_iter()
            .map(|x| match *self {
                InitialData::Sech { amplitude, lambda } => {
                    Complex64::new(amplitude / (lambda * x).cosh(), 0.0)
                }
                InitialData::Gaussian { amplitude, width } => {
                    Complex64::new(amplitude * (-(x / width).powi(2)).exp(), 0.0)
                }
                InitialData::SingleMode { xi0, amplitude } => {
                    if real {
                        Complex64::new(amplitude * (xi0 * x).cos(), 0.0)
                    } else {
                        amplitude * Complex64::from_polar(1.0, xi0 * x)
                    }
                }
            })
            .collect()
    }

    /// Transform, then project onto the equation's retained band.
    pub fn field(&self, cfg: &EvolutionConfig) -> Result<SpectralField> {
        let t = Transformer::new(cfg.grid);
        let real = cfg.equation.is_real();
        let samples = self.samples(&cfg.grid, real);
        let f = if real {
            let re: Vec<f64> = samples.iter().map(|c| c.re).collect();
            t.forward_real(&re)?
        } else {
            t.forward_complex(&samples)?
        };
        Ok(project(&f, cfg))
    }
}

pub fn project(field: &SpectralField, cfg: &EvolutionConfig) -> SpectralField {
    let rule = cfg.dealias_rule();
    let mut c = field.coeffs().to_vec();
    rule.apply_in_place(&cfg.grid, &mut c);
    SpectralField::new(cfg.grid, c, field.is_real()).expect("same grid")
}

/// Makes `c(-xi) = conj c(xi)` exact.
fn symmetrize(grid: &Grid, c: &mut [Complex64]) {
    let n = grid.n_points();
    for j in 1..n / 2 {
        let m = n - j;
        let avg = 0.5 * (c[j] + c[m].conj());
        c[j] = avg;
        c[m] = avg.conj();
    }
    c[0].im = 0.0;
    c[n / 2] = ZERO;
}

/// Shared kernel: transforms, band and nonlinear products.
#[derive(Clone)]
struct Kernel {
    equation: Equation,
    grid: Grid,
    rule: DealiasRule,
    fft: Transformer,
    xi: Vec<f64>,
    keep: Vec<bool>,
}

impl Kernel {
    fn new(equation: Equation, grid: Grid) -> Result<Self> {
        equation.validate()?;
        let rule = DealiasRule::new(&grid, equation.dealias_degree())?;
        let keep = (0..grid.n_points()).map(|j| rule.keeps(&grid, j)).collect();
        Ok(Self {
            equation,
            grid,
            rule,
            fft: Transformer::new(grid),
            xi: grid.frequencies(),
            keep,
        })
    }

    fn physical(&self, c: &[Complex64]) -> Vec<Complex64> {
        let mut buf = c.to_vec();
        self.fft.inverse_in_place(&mut buf);
        buf
    }

    /// Projected power: `P[(u^{k+1})^]` for gKdV, `P[(|v|^{p-1} v)^]` for NLS.
    fn power(&self, c: &[Complex64]) -> Vec<Complex64> {
        let mut buf = self.physical(c);
        match self.equation {
            Equation::Gkdv { k } => {
                for z in buf.iter_mut() {
                    *z = Complex64::new(z.re.powi(k as i32 + 1), 0.0);
                }
            }
            Equation::Nls { p } => {
                for z in buf.iter_mut() {
                    *z *= z.norm_sqr().powi((p as i32 - 1) / 2);
                }
            }
        }
        self.fft.forward_in_place(&mut buf);
        for (z, keep) in buf.iter_mut().zip(&self.keep) {
            if !keep {
                *z = ZERO;
            }
        }
        if self.equation.is_real() {
            symmetrize(&self.grid, &mut buf);
        }
        buf
    }

    /// Nonlinear part of `c_t`.
    fn nonlinear(&self, c: &[Complex64]) -> Vec<Complex64> {
        let mut w = self.power(c);
        match self.equation {
            Equation::Gkdv { k } => {
                let f = 1.0 / (k as f64 + 1.0);
                for (z, xi) in w.iter_mut().zip(&self.xi) {
                    *z *= I * (xi * f);
                }
            }
            Equation::Nls { .. } => {
                for z in w.iter_mut() {
                    *z *= -I;
                }
            }
        }
        w
    }

    fn ln_weights(&self, sigma: f64) -> Result<Vec<f64>> {
        let w = Weight::smooth(sigma)?;
        let lw: Vec<f64> = self
            .xi
            .iter()
            .zip(&self.keep)
            .map(|(xi, keep)| if *keep { w.ln_eval(*xi) } else { 0.0 })
            .collect();
        let top = lw.iter().copied().fold(0.0, f64::max);
        if top > WEIGHT_LN_BOUND {
            return Err(Error::WeightOverflow {
                exponent: top,
                bound: WEIGHT_LN_BOUND,
            });
        }
        Ok(lw)
    }

    /// `U = m_sigma(D) u`, restricted to the band.
    fn weighted(&self, c: &[Complex64], lw: &[f64]) -> Vec<Complex64> {
        c.iter()
            .zip(lw)
            .zip(&self.keep)
            .map(|((z, l), keep)| if *keep { z * l.exp() } else { ZERO })
            .collect()
    }

    fn mass(&self, c: &[Complex64]) -> f64 {
        c.iter().map(|z| z.norm_sqr()).sum()
    }

    fn gradient_sq(&self, c: &[Complex64]) -> f64 {
        let nyq = self.grid.nyquist_slot();
        c.iter()
            .zip(&self.xi)
            .enumerate()
            .filter(|(j, _)| *j != nyq)
            .map(|(_, (z, xi))| xi * xi * z.norm_sqr())
            .sum()
    }

    fn potential(&self, c: &[Complex64]) -> f64 {
        let phys = self.physical(c);
        let dx = self.grid.dx();
        let s: f64 = match self.equation {
            Equation::Gkdv { k } => phys.iter().map(|z| z.re.powi(k as i32 + 2)).sum(),
            Equation::Nls { p } => phys.iter().map(|z| z.norm_sqr().powi((p as i32 + 1) / 2)).sum(),
        };
        self.equation.potential_coefficient() * dx * s
    }

    fn energy(&self, c: &[Complex64]) -> f64 {
        self.gradient_sq(c) + self.potential(c)
    }

    /// Spectral coefficients of `F(U)` (gKdV) or `G(V)` (NLS).
    fn remainder(&self, c: &[Complex64], lw: &[f64]) -> Vec<Complex64> {
        let u_big = self.weighted(c, lw);
        let pu = self.power(c);
        let pw = self.power(&u_big);
        let mut r: Vec<Complex64> = pw
            .iter()
            .zip(&pu)
            .zip(lw)
            .zip(&self.keep)
            .map(|(((a, b), l), keep)| if *keep { a - b * l.exp() } else { ZERO })
            .collect();
        match self.equation {
            Equation::Gkdv { k } => {
                let f = -1.0 / (k as f64 + 1.0);
                for (z, xi) in r.iter_mut().zip(&self.xi) {
                    *z *= I * (xi * f);
                }
            }
            Equation::Nls { .. } => {
                for z in r.iter_mut() {
                    *z = -*z;
                }
            }
        }
        r
    }

    fn flux(&self, c: &[Complex64], lw: &[f64], flip: bool) -> f64 {
        let u_big = self.weighted(c, lw);
        let mut r = self.remainder(c, lw);
        let sign = if flip { -1.0 } else { 1.0 };
        for z in r.iter_mut() {
            *z *= sign;
        }
        // A = P U^{k+1} (resp. P |V|^{p-1} V), B = P u^{k+1}. The part of the
        // last term quadratic in A vanishes identically and is left out, since
        // for large sigma it is many orders above the flux itself.
        let a = self.power(&u_big);
        let b = self.power(c);
        match self.equation {
            Equation::Gkdv { k } => {
                // 2<U,F> + 2<U_x,F_x> + 2/(k+1) <A, F>
                let kp = k as f64 + 1.0;
                let g = 2.0 / (kp * kp);
                let mut s = 0.0;
                for j in 0..c.len() {
                    if !self.keep[j] {
                        continue;
                    }
                    let xi = self.xi[j];
                    s += 2.0 * (1.0 + xi * xi) * (u_big[j].conj() * r[j]).re;
                    s -= sign * g * xi * lw[j].exp() * (a[j].conj() * b[j]).im;
                }
                s
            }
            Equation::Nls { .. } => {
                // 2 Im <V - V_xx + A, G>
                let mut s = 0.0;
                for j in 0..c.len() {
                    if !self.keep[j] {
                        continue;
                    }
                    let xi = self.xi[j];
                    s += 2.0 * (u_big[j].conj() * r[j]).im * (1.0 + xi * xi);
                    s += 2.0 * sign * lw[j].exp() * (a[j].conj() * b[j]).im;
                }
                s
            }
        }
    }

    fn edge_amplitude(&self, c: &[Complex64]) -> f64 {
        let phys = self.physical(c);
        let half = 0.5 * self.grid.box_length();
        let edge = half * (1.0 - 2.0 * EDGE_FRACTION);
        self.grid
            .nodes()
            .iter()
            .zip(&phys)
            .filter(|(x, _)| x.abs() >= edge)
            .map(|(_, z)| z.norm())
            .fold(0.0, f64::max)
    }

    fn peak(&self, c: &[Complex64]) -> f64 {
        self.physical(c).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Mean of `f` over a circle of radius 1 around `z0` (Kassam-Trefethen).
fn contour_mean(z0: Complex64, f: impl Fn(Complex64) -> Complex64) -> Complex64 {
    let m = CONTOUR_POINTS;
    (0..m)
        .map(|j| {
            let r = Complex64::from_polar(1.0, 2.0 * PI * (j as f64 + 0.5) / m as f64);
            f(z0 + r)
        })
        .sum::<Complex64>()
        / m as f64
}

#[derive(Clone)]
struct EtdCoefficients {
    e: Vec<Complex64>,
    e2: Vec<Complex64>,
    q: Vec<Complex64>,
    f1: Vec<Complex64>,
    f2: Vec<Complex64>,
    f3: Vec<Complex64>,
}

impl EtdCoefficients {
    fn new(kernel: &Kernel, h: f64) -> Self {
        let n = kernel.grid.n_points();
        let mut c = Self {
            e: Vec::with_capacity(n),
            e2: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            f1: Vec::with_capacity(n),
            f2: Vec::with_capacity(n),
            f3: Vec::with_capacity(n),
        };
        for &xi in &kernel.xi {
            let z0 = I * kernel.equation.symbol(xi) * h;
            c.e.push(z0.exp());
            c.e2.push((z0 / 2.0).exp());
            c.q.push(h * contour_mean(z0, |z| ((z / 2.0).exp() - 1.0) / z));
            c.f1.push(
                h * contour_mean(z0, |z| {
                    (-4.0 - z + z.exp() * (4.0 - 3.0 * z + z * z)) / (z * z * z)
                }),
            );
            c.f2.push(h * contour_mean(z0, |z| (2.0 + z + z.exp() * (z - 2.0)) / (z * z * z)));
            c.f3.push(
                h * contour_mean(z0, |z| (-4.0 - 3.0 * z - z * z + z.exp() * (4.0 - z)) / (z * z * z)),
            );
        }
        c
    }
}

/// Stateful stepper for one configuration.
#[derive(Clone)]
pub struct Solver {
    cfg: EvolutionConfig,
    kernel: Kernel,
    etd: Option<EtdCoefficients>,
    half_phase: Vec<Complex64>,
}

impl Solver {
    pub fn new(cfg: &EvolutionConfig) -> Result<Self> {
        cfg.validate()?;
        let kernel = Kernel::new(cfg.equation, cfg.grid)?;
        let etd = match cfg.scheme {
            Scheme::Etdrk4 => Some(EtdCoefficients::new(&kernel, cfg.dt)),
            Scheme::Strang => None,
        };
        let half_phase = kernel
            .xi
            .iter()
            .map(|&xi| (I * cfg.equation.symbol(xi) * (0.5 * cfg.dt)).exp())
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            kernel,
            etd,
            half_phase,
        })
    }

    pub fn config(&self) -> &EvolutionConfig {
        &self.cfg
    }

    fn nonlinear(&self, c: &[Complex64]) -> Vec<Complex64> {
        if self.cfg.hooks.linear_only {
            vec![ZERO; c.len()]
        } else {
            self.kernel.nonlinear(c)
        }
    }

    /// Advance the coefficient vector by one `dt`.
    pub fn step_coeffs(&self, v: &mut [Complex64]) {
        match &self.etd {
            Some(k) => {
                let n = v.len();
                let nv = self.nonlinear(v);
                let a: Vec<Complex64> = (0..n).map(|j| k.e2[j] * v[j] + k.q[j] * nv[j]).collect();
                let na = self.nonlinear(&a);
                let b: Vec<Complex64> = (0..n).map(|j| k.e2[j] * v[j] + k.q[j] * na[j]).collect();
                let nb = self.nonlinear(&b);
                let c: Vec<Complex64> = (0..n)
                    .map(|j| k.e2[j] * a[j] + k.q[j] * (2.0 * nb[j] - nv[j]))
                    .collect();
                let nc = self.nonlinear(&c);
                for j in 0..n {
                    v[j] = k.e[j] * v[j]
                        + k.f1[j] * nv[j]
                        + 2.0 * k.f2[j] * (na[j] + nb[j])
                        + k.f3[j] * nc[j];
                }
            }
            None => {
                for (z, e) in v.iter_mut().zip(&self.half_phase) {
                    *z *= e;
                }
                if !self.cfg.hooks.linear_only {
                    let p = match self.cfg.equation {
                        Equation::Nls { p } => p as i32,
                        Equation::Gkdv { .. } => unreachable!("validated"),
                    };
                    let mut phys = self.kernel.physical(v);
                    for z in phys.iter_mut() {
                        let rate = z.norm_sqr().powi((p - 1) / 2);
                        *z *= Complex64::from_polar(1.0, -rate * self.cfg.dt);
                    }
                    self.kernel.fft.forward_in_place(&mut phys);
                    v.copy_from_slice(&phys);
                }
                for (z, e) in v.iter_mut().zip(&self.half_phase) {
                    *z *= e;
                }
            }
        }
        self.kernel.rule.apply_in_place(&self.kernel.grid, v);
        if self.cfg.equation.is_real() {
            symmetrize(&self.kernel.grid, v);
        }
    }

    pub fn step(&self, state: &SpectralField) -> Result<SpectralField> {
        check_state(state, &self.cfg)?;
        let mut v = state.coeffs().to_vec();
        self.step_coeffs(&mut v);
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFiniteState { time: self.cfg.dt });
        }
        SpectralField::new(self.cfg.grid, v, state.is_real())
    }
}

fn check_state(state: &SpectralField, cfg: &EvolutionConfig) -> Result<()> {
    if *state.grid() != cfg.grid {
        return Err(Error::InvalidGrid("state grid differs from config grid".into()));
    }
    if cfg.equation.is_real() && !state.is_real() {
        return Err(Error::InvalidParameter("gKdV state must be real".into()));
    }
    Ok(())
}

/// One step of length `cfg.dt`.
pub fn step(state: &SpectralField, cfg: &EvolutionConfig) -> Result<SpectralField> {
    Solver::new(cfg)?.step(state)
}

/// Quantities that depend only on the equation and the grid.
#[derive(Clone)]
pub struct Diagnostics {
    kernel: Kernel,
    flip: bool,
}

impl Diagnostics {
    pub fn new(cfg: &EvolutionConfig) -> Result<Self> {
        Ok(Self {
            kernel: Kernel::new(cfg.equation, cfg.grid)?,
            flip: cfg.hooks.flip_remainder_sign,
        })
    }

    pub fn mass(&self, state: &SpectralField) -> f64 {
        self.kernel.mass(state.coeffs())
    }

    pub fn energy(&self, state: &SpectralField) -> f64 {
        self.kernel.energy(state.coeffs())
    }

    pub fn modified_energy(&self, state: &SpectralField, sigma: f64) -> Result<f64> {
        let lw = self.kernel.ln_weights(sigma)?;
        let u = self.kernel.weighted(state.coeffs(), &lw);
        Ok(self.kernel.mass(&u) + self.kernel.energy(&u))
    }

    pub fn remainder(&self, state: &SpectralField, sigma: f64) -> Result<SpectralField> {
        let lw = self.kernel.ln_weights(sigma)?;
        let mut r = self.kernel.remainder(state.coeffs(), &lw);
        if self.flip {
            for z in r.iter_mut() {
                *z = -*z;
            }
        }
        SpectralField::new(self.kernel.grid, r, state.is_real())
    }

    pub fn energy_flux(&self, state: &SpectralField, sigma: f64) -> Result<f64> {
        let lw = self.kernel.ln_weights(sigma)?;
        Ok(self.kernel.flux(state.coeffs(), &lw, self.flip))
    }

    /// Largest `|u|` in the outer `EDGE_FRACTION` of the box on each side.
    pub fn edge_amplitude(&self, state: &SpectralField) -> f64 {
        self.kernel.edge_amplitude(state.coeffs())
    }

    pub fn peak(&self, state: &SpectralField) -> f64 {
        self.kernel.peak(state.coeffs())
    }

    /// Retained band edge `max |xi|`.
    pub fn band_max(&self) -> f64 {
        self.kernel.rule.max_frequency(&self.kernel.grid)
    }
}

pub fn mass(state: &SpectralField) -> f64 {
    state.norm_sqr()
}

pub fn energy(state: &SpectralField, cfg: &EvolutionConfig) -> Result<f64> {
    check_state(state, cfg)?;
    Ok(Diagnostics::new(cfg)?.energy(state))
}

pub fn modified_energy(state: &SpectralField, sigma: f64, cfg: &EvolutionConfig) -> Result<f64> {
    check_state(state, cfg)?;
    Diagnostics::new(cfg)?.modified_energy(state, sigma)
}

/// `F(U)` for gKdV.
pub fn remainder_f(state: &SpectralField, sigma: f64, cfg: &EvolutionConfig) -> Result<SpectralField> {
    if !matches!(cfg.equation, Equation::Gkdv { .. }) {
        return Err(Error::InvalidParameter("remainder_f needs a gKdV config".into()));
    }
    check_state(state, cfg)?;
    Diagnostics::new(cfg)?.remainder(state, sigma)
}

/// `G(V)` for NLS.
pub fn remainder_g(state: &SpectralField, sigma: f64, cfg: &EvolutionConfig) -> Result<SpectralField> {
    if !matches!(cfg.equation, Equation::Nls { .. }) {
        return Err(Error::InvalidParameter("remainder_g needs an NLS config".into()));
    }
    check_state(state, cfg)?;
    Diagnostics::new(cfg)?.remainder(state, sigma)
}

pub fn energy_flux(state: &SpectralField, sigma: f64, cfg: &EvolutionConfig) -> Result<f64> {
    check_state(state, cfg)?;
    Diagnostics::new(cfg)?.energy_flux(state, sigma)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyLedger {
    pub sigmas: Vec<f64>,
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
    /// `e_sigma[i][r]`: sigma index `i`, record `r`.
    pub e_sigma: Vec<Vec<f64>>,
    /// Empty columns when flux recording is off.
    pub flux: Vec<Vec<f64>>,
    pub edge_amp: Vec<f64>,
}

impl EnergyLedger {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,mass,energy");
        for s in &self.sigmas {
            out.push_str(&format!(",e_sigma_{s}"));
        }
        let with_flux = self.flux.iter().any(|c| !c.is_empty());
        if with_flux {
            for s in &self.sigmas {
                out.push_str(&format!(",flux_{s}"));
            }
        }
        out.push_str(",edge_amp\n");
        for r in 0..self.len() {
            out.push_str(&format!("{},{},{}", self.times[r], self.mass[r], self.energy[r]));
            for col in &self.e_sigma {
                out.push_str(&format!(",{}", col[r]));
            }
            if with_flux {
                for col in &self.flux {
                    out.push_str(&format!(",{}", col[r]));
                }
            }
            out.push_str(&format!(",{}\n", self.edge_amp[r]));
        }
        out
    }

    /// `max_t |E_sigma(t) - E_sigma(0)|` per tracked sigma.
    pub fn max_drift(&self) -> Vec<f64> {
        self.e_sigma
            .iter()
            .map(|col| col.iter().map(|e| (e - col[0]).abs()).fold(0.0, f64::max))
            .collect()
    }
}

/// Final state alongside the ledger.
pub struct Trajectory {
    pub ledger: EnergyLedger,
    pub final_state: SpectralField,
}

pub fn run_experiment(u0: &SpectralField, cfg: &EvolutionConfig, sigmas: &[f64]) -> Result<EnergyLedger> {
    Ok(run_trajectory(u0, cfg, sigmas)?.ledger)
}

pub fn run_trajectory(u0: &SpectralField, cfg: &EvolutionConfig, sigmas: &[f64]) -> Result<Trajectory> {
    check_state(u0, cfg)?;
    let solver = Solver::new(cfg)?;
    let diag = Diagnostics::new(cfg)?;
    let kernel = &diag.kernel;
    let lws = sigmas
        .iter()
        .map(|&s| kernel.ln_weights(s))
        .collect::<Result<Vec<_>>>()?;

    let mut v = u0.coeffs().to_vec();
    kernel.rule.apply_in_place(&cfg.grid, &mut v);
    if cfg.equation.is_real() {
        symmetrize(&cfg.grid, &mut v);
    }
    let peak0 = kernel.peak(&v);
    check_nonlinear_scale(cfg, kernel, peak0)?;

    let mut ledger = EnergyLedger {
        sigmas: sigmas.to_vec(),
        times: Vec::new(),
        mass: Vec::new(),
        energy: Vec::new(),
        e_sigma: vec![Vec::new(); sigmas.len()],
        flux: vec![Vec::new(); sigmas.len()],
        edge_amp: Vec::new(),
    };
    let record = |t: f64, v: &[Complex64], ledger: &mut EnergyLedger| -> Result<()> {
        let edge = if peak0 > 0.0 {
            kernel.edge_amplitude(v) / peak0
        } else {
            0.0
        };
        if let Some(floor) = cfg.edge_floor {
            if edge > floor {
                return Err(Error::EdgeFloorViolation {
                    time: t,
                    amplitude: edge,
                    floor,
                });
            }
        }
        ledger.times.push(t);
        ledger.mass.push(kernel.mass(v));
        ledger.energy.push(kernel.energy(v));
        for (i, lw) in lws.iter().enumerate() {
            let u = kernel.weighted(v, lw);
            ledger.e_sigma[i].push(kernel.mass(&u) + kernel.energy(&u));
            if cfg.record_flux {
                ledger.flux[i].push(kernel.flux(v, lw, cfg.hooks.flip_remainder_sign));
            }
        }
        ledger.edge_amp.push(edge);
        Ok(())
    };

    record(0.0, &v, &mut ledger)?;
    let n = cfg.n_steps();
    for i in 1..=n {
        solver.step_coeffs(&mut v);
        let t = i as f64 * cfg.dt;
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFiniteState { time: t });
        }
        if i % cfg.stride == 0 || i == n {
            record(t, &v, &mut ledger)?;
        }
    }
    let final_state = SpectralField::new(cfg.grid, v, u0.is_real())?;
    Ok(Trajectory {
        ledger,
        final_state,
    })
}

/// Heuristic bound `dt * nonlinear frequency <= 0.5`.
fn check_nonlinear_scale(cfg: &EvolutionConfig, kernel: &Kernel, peak: f64) -> Result<()> {
    let rate = match cfg.equation {
        Equation::Gkdv { k } => kernel.rule.max_frequency(&cfg.grid) * peak.powi(k as i32) / (k as f64 + 1.0),
        Equation::Nls { p } => peak.powi(p as i32 - 1),
    };
    if cfg.dt * rate > 0.5 {
        return Err(Error::InvalidParameter(format!(
            "dt * nonlinear frequency = {} exceeds 0.5",
            cfg.dt * rate
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftFit {
    pub sigmas: Vec<f64>,
    pub drifts: Vec<f64>,
    /// Drift of the unweighted energy.
    pub base_drift: f64,
    /// Per-sigma noise level used to select fit points.
    pub noise: Vec<f64>,
    pub used: Vec<bool>,
    pub fit: LineFit,
    pub theta_emp: f64,
    pub ledger: EnergyLedger,
}

/// Multiple of the unweighted drift below which a weighted drift is noise.
pub const DRIFT_NOISE_FACTOR: f64 = 10.0;
/// Relative roundoff level of `E_sigma` itself.
pub const DRIFT_RELATIVE_FLOOR: f64 = 1e-13;

/// Fits `ln max_t |E_sigma(t) - E_sigma(0)|` against `ln sigma`.
pub fn drift_exponent(
    u0: &SpectralField,
    cfg: &EvolutionConfig,
    sigma_grid: &[f64],
    horizon: f64,
) -> Result<DriftFit> {
    if sigma_grid.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidParameter("sigma grid must be positive".into()));
    }
    let mut run = cfg.clone();
    run.t_end = horizon;
    run.record_flux = false;
    let mut sigmas = vec![0.0];
    sigmas.extend_from_slice(sigma_grid);
    let ledger = run_experiment(u0, &run, &sigmas)?;
    let all = ledger.max_drift();
    let base = all[0];
    let drifts = all[1..].to_vec();
    let noise: Vec<f64> = ledger.e_sigma[1..]
        .iter()
        .map(|col| (DRIFT_NOISE_FACTOR * base).max(DRIFT_RELATIVE_FLOOR * col[0].abs()))
        .collect();
    let used: Vec<bool> = drifts.iter().zip(&noise).map(|(d, n)| d > n).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = sigma_grid
        .iter()
        .zip(&drifts)
        .zip(&used)
        .filter(|(_, u)| **u)
        .map(|((s, d), _)| (*s, *d))
        .unzip();
    if xs.is_empty() {
        return Err(Error::DriftAtNoiseFloor);
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientFitPoints {
            needed: 3,
            got: xs.len(),
        });
    }
    let fit = fit_loglog(&xs, &ys)?;
    Ok(DriftFit {
        sigmas: sigma_grid.to_vec(),
        drifts,
        base_drift: base,
        noise,
        used,
        theta_emp: fit.slope,
        fit,
        ledger,
    })
}

/// `E_sigma >= ||u||_{G^{sigma,1}}^2`, checked with relative slack `tol`.
pub fn coercivity_holds(state: &SpectralField, sigma: f64, cfg: &EvolutionConfig, tol: f64) -> Result<bool> {
    let e = modified_energy(state, sigma, cfg)?;
    let g = gevrey_norm(state, &Weight::smooth(sigma)?.with_sobolev(1.0))?;
    Ok(e >= g * g * (1.0 - tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{forward_transform, make_grid};

    fn cfg(eq: Equation, n: usize, l: f64, dt: f64, t_end: f64) -> EvolutionConfig {
        let mut c = EvolutionConfig::new(eq, make_grid(n, l).unwrap(), dt, t_end).unwrap();
        c.edge_floor = None;
        c
    }

    const KDV: Equation = Equation::Gkdv { k: 4 };
    const NLS: Equation = Equation::Nls { p: 3 };

    #[test]
    fn rejects_bad_equations() {
        assert!(Equation::Gkdv { k: 3 }.validate().is_err());
        assert!(Equation::Gkdv { k: 2 }.validate().is_err());
        assert!(Equation::Nls { p: 4 }.validate().is_err());
        assert!(Equation::Nls { p: 1 }.validate().is_err());
        let g = make_grid(64, 10.0).unwrap();
        assert!(EvolutionConfig::new(KDV, g, 2.0, 1.0).is_err());
        let mut c = EvolutionConfig::new(KDV, g, 0.01, 1.0).unwrap();
        c.scheme = Scheme::Strang;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_state_stays_zero() {
        for eq in [KDV, NLS] {
            let c = cfg(eq, 64, 20.0, 0.01, 0.1);
            let z = SpectralField::zeros(c.grid, eq.is_real());
            let s = step(&z, &c).unwrap();
            assert!(s.coeffs().iter().all(|x| x.norm() == 0.0));
        }
    }

    #[test]
    fn linear_mode_rotates_exactly() {
        for eq in [KDV, NLS] {
            let mut c = cfg(eq, 64, 2.0 * PI, 0.013, 1.0);
            c.hooks.linear_only = true;
            let g = c.grid;
            let mut v = vec![ZERO; 64];
            v[g.slot(3).unwrap()] = Complex64::new(0.7, 0.2);
            if eq.is_real() {
                v[g.slot(-3).unwrap()] = Complex64::new(0.7, -0.2);
            }
            let f = SpectralField::new(g, v.clone(), eq.is_real()).unwrap();
            let s = step(&f, &c).unwrap();
            for kk in [3i64, -3] {
                let j = g.slot(kk).unwrap();
                let xi = g.frequency(j);
                let expect = v[j] * Complex64::from_polar(1.0, eq.symbol(xi) * c.dt);
                assert!((s.coeffs()[j] - expect).norm() < 1e-15);
            }
        }
        // NLS rotates by e^{-i xi^2 dt}, gKdV by e^{i xi^3 dt}
        assert_eq!(NLS.symbol(2.0), -4.0);
        assert_eq!(KDV.symbol(2.0), 8.0);
    }

    #[test]
    fn mass_and_energy_closed_forms() {
        let c = cfg(KDV, 64, 2.0 * PI, 0.01, 1.0);
        let g = c.grid;
        let sinx: Vec<f64> = g.nodes().iter().map(|x| x.sin()).collect();
        let f = forward_transform(&sinx, &g).unwrap();
        assert!((mass(&f) - PI).abs() < 1e-13);
        let cosx: Vec<f64> = g.nodes().iter().map(|x| x.cos()).collect();
        let f = forward_transform(&cosx, &g).unwrap();
        assert!((energy(&f, &c).unwrap() - (PI + PI / 24.0)).abs() < 1e-13);

        let cn = cfg(NLS, 64, 5.0, 0.01, 1.0);
        let cst = Complex64::new(0.6, 0.8) * 1.5;
        let v = vec![cst; 64];
        let f = crate::spectral::forward_transform_complex(&v, &cn.grid).unwrap();
        let expect = 0.5 * cst.norm().powi(4) * 5.0;
        assert!((energy(&f, &cn).unwrap() - expect).abs() < 1e-12);
    }

    fn sech_state(c: &EvolutionConfig, a: f64) -> SpectralField {
        InitialData::Sech {
            amplitude: a,
            lambda: 1.0,
        }
        .field(c)
        .unwrap()
    }

    #[test]
    fn modified_energy_reduces_at_zero_sigma() {
        for eq in [KDV, NLS] {
            let c = cfg(eq, 256, 40.0, 1e-3, 1.0);
            let u = sech_state(&c, 0.8);
            let d = Diagnostics::new(&c).unwrap();
            let e0 = d.modified_energy(&u, 0.0).unwrap();
            assert_eq!(e0, d.mass(&u) + d.energy(&u));
            // flat on the band
            let sigma = 0.999 / d.band_max();
            assert_eq!(d.modified_energy(&u, sigma).unwrap(), e0);
            assert!(coercivity_holds(&u, 0.3, &c, 1e-13).unwrap());
        }
    }

    #[test]
    fn remainders_vanish_when_weight_flat() {
        for eq in [KDV, NLS] {
            let c = cfg(eq, 256, 40.0, 1e-3, 1.0);
            let u = sech_state(&c, 0.8);
            let d = Diagnostics::new(&c).unwrap();
            for sigma in [0.0, 0.5 / d.band_max(), 1.0 / d.band_max()] {
                let r = d.remainder(&u, sigma).unwrap();
                assert!(r.coeffs().iter().all(|z| z.norm() == 0.0));
                assert_eq!(d.energy_flux(&u, sigma).unwrap(), 0.0);
            }
            let r = d.remainder(&u, 2.0 / d.band_max()).unwrap();
            assert!(r.norm_sqr() > 0.0);
        }
        let c = cfg(KDV, 64, 10.0, 1e-3, 1.0);
        let n = cfg(NLS, 64, 10.0, 1e-3, 1.0);
        let z = SpectralField::zeros(c.grid, true);
        assert!(remainder_g(&z, 0.1, &c).is_err());
        assert!(remainder_f(&SpectralField::zeros(n.grid, false), 0.1, &n).is_err());
    }

    #[test]
    fn flux_scales_with_amplitude() {
        // 2<U,F> is the lowest-degree term, of degree k+2 in the amplitude
        let c = cfg(KDV, 256, 40.0, 1e-3, 1.0);
        let d = Diagnostics::new(&c).unwrap();
        let sigma = 3.0 / d.band_max();
        let amps = [1e-3, 2e-3, 4e-3, 8e-3];
        let fl: Vec<f64> = amps
            .iter()
            .map(|a| d.energy_flux(&sech_state(&c, *a), sigma).unwrap().abs())
            .collect();
        let fit = fit_loglog(&amps, &fl).unwrap();
        assert!((fit.slope - 6.0).abs() < 1e-3, "{}", fit.slope);
    }

    #[test]
    fn conservation_short_run() {
        for eq in [KDV, NLS] {
            let c = cfg(eq, 256, 40.0, 1e-3, 0.2);
            let u = sech_state(&c, 1.0);
            let l = run_experiment(&u, &c, &[0.0]).unwrap();
            assert_eq!(l.len(), 201);
            let m0 = l.mass[0];
            let e0 = l.energy[0];
            for r in 0..l.len() {
                assert!((l.mass[r] - m0).abs() < 1e-10 * m0);
                assert!((l.energy[r] - e0).abs() < 1e-10 * e0.abs());
                assert!((l.e_sigma[0][r] - (l.mass[r] + l.energy[r])).abs() < 1e-12 * m0);
            }
        }
    }

    #[test]
    fn zero_horizon_single_row() {
        let c = cfg(KDV, 64, 20.0, 1e-3, 0.0);
        let u = sech_state(&c, 1.0);
        let l = run_experiment(&u, &c, &[0.0, 0.5]).unwrap();
        assert_eq!(l.len(), 1);
        let csv = l.to_csv();
        assert!(csv.starts_with("t,mass,energy,e_sigma_0,e_sigma_0.5,flux_0,flux_0.5,edge_amp\n"));
    }

    #[test]
    fn strang_agrees_with_etdrk4() {
        let mut c = cfg(NLS, 256, 40.0, 1e-3, 0.5);
        let u = sech_state(&c, 1.0);
        let a = run_trajectory(&u, &c, &[]).unwrap().final_state;
        c.scheme = Scheme::Strang;
        let b = run_trajectory(&u, &c, &[]).unwrap().final_state;
        let diff: f64 = a
            .coeffs()
            .iter()
            .zip(b.coeffs())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-5 * a.norm_sqr().sqrt(), "{diff}");
    }

    #[test]
    fn edge_floor_aborts() {
        let mut c = cfg(KDV, 128, 10.0, 1e-3, 0.01);
        c.edge_floor = Some(1e-10);
        let u = sech_state(&c, 1.0);
        assert!(matches!(
            run_experiment(&u, &c, &[]),
            Err(Error::EdgeFloorViolation { .. })
        ));
    }

    #[test]
    fn nonlinear_scale_guard() {
        let c = cfg(KDV, 256, 40.0, 0.5, 1.0);
        let u = sech_state(&c, 3.0);
        assert!(run_experiment(&u, &c, &[]).is_err());
    }

    #[test]
    fn drift_in_flat_region_is_noise() {
        let c = cfg(KDV, 256, 40.0, 1e-3, 0.1);
        let u = sech_state(&c, 1.0);
        let d = Diagnostics::new(&c).unwrap();
        let grid = crate::fit::logspace(0.1 / d.band_max(), 0.9 / d.band_max(), 5);
        assert!(matches!(
            drift_exponent(&u, &c, &grid, 0.1),
            Err(Error::DriftAtNoiseFloor)
        ));
    }

    fn max_dev(col: &[f64]) -> f64 {
        col.iter().map(|x| (x - col[0]).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn etdrk4_is_fourth_order() {
        for eq in [KDV, NLS] {
            let drifts: Vec<(f64, f64)> = [0.02, 0.01, 0.005]
                .iter()
                .map(|&dt| {
                    let c = cfg(eq, 512, 40.0 * PI, dt, 1.0);
                    let l = run_experiment(&sech_state(&c, 1.0), &c, &[]).unwrap();
                    (max_dev(&l.mass), max_dev(&l.energy))
                })
                .collect();
            for w in drifts.windows(2) {
                let order_m = (w[0].0 / w[1].0).log2();
                let order_e = (w[0].1 / w[1].1).log2();
                assert!(order_m > 3.9 && order_e > 3.9, "{eq:?} {order_m} {order_e}");
            }
        }
    }

    #[test]
    fn flux_matches_time_derivative() {
        for eq in [KDV, NLS] {
            let c = cfg(eq, 256, 40.0, 1e-3, 0.05);
            let d = Diagnostics::new(&c).unwrap();
            let sigma = 5.0 / d.band_max();
            let l = run_experiment(&sech_state(&c, 1.0), &c, &[0.0, sigma]).unwrap();
            let e = &l.e_sigma[1];
            let h = c.dt;
            let scale = l.flux[1].iter().map(|f| f.abs()).fold(0.0, f64::max);
            assert!(scale > 0.0);
            for r in 2..l.len() - 2 {
                let fd = (-e[r + 2] + 8.0 * e[r + 1] - 8.0 * e[r - 1] + e[r - 2]) / (12.0 * h);
                assert!((fd - l.flux[1][r]).abs() < 1e-3 * scale, "{eq:?} {r}");
            }
        }
    }

    #[test]
    fn flipped_remainder_breaks_flux() {
        let mut c = cfg(KDV, 256, 40.0, 1e-3, 0.01);
        let d = Diagnostics::new(&c).unwrap();
        let sigma = 5.0 / d.band_max();
        let u = sech_state(&c, 1.0);
        let good = run_experiment(&u, &c, &[sigma]).unwrap().flux[0][5];
        c.hooks.flip_remainder_sign = true;
        let bad = run_experiment(&u, &c, &[sigma]).unwrap().flux[0][5];
        assert!((good - bad).abs() > 0.5 * good.abs());
    }
}
