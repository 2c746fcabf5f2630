//! Renormalised lattice Φ⁴₃:
//! `dΦ = (Δ_ε Φ − Φ³ + m Φ) dt + dW`, `m = 3C₀ − 9(C₁₁ + C₁₂)`,
//! stepped with `R = Φ + dt(−Φ³ + mΦ) + ΔW`, `Φ̂ ← R̂ / (1 + dt λ_ε)`.
//!
//! `C₀` is the stationary per-site variance of the free lattice field
//! (nonzero modes). `C₁₁` is the sunset integral
//! `∫₀^∞ ds ε³ Σ_x Q_s(x)² p_s(x)`, with `p_s` the lattice heat kernel and
//! `Q_s` the free-field covariance at time lag `s` (nonzero modes, so
//! `Q_0(0) = C₀`); it is evaluated with FFTs at each node of a log-spaced
//! `s` axis.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chaos::{WickBasis, WickFeatureVector};
use crate::config::{save_times, step_count, ChaosConfig, InitialCondition};
use crate::error::{Error, Result};
use crate::grid::{cutoff_mask, discrete_laplacian_symbol, FftEngine, GridSpec, RealField};
use crate::noise::{GaussianIntegrator, NoiseKind, NoisePath, SeedSpec};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Counterterm settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountertermConfig {
    /// Requested quadrature nodes for `C₁₁` (rounded up to `4m + 1`).
    pub quadrature_points: usize,
    /// Bounded sideband part of `C₁`; zero unless overridden.
    pub c12: f64,
    /// Replaces `3C₀ − 9(C₁₁ + C₁₂)` when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass_shift: Option<f64>,
}

impl Default for CountertermConfig {
    fn default() -> Self {
        Self {
            quadrature_points: 257,
            c12: 0.0,
            mass_shift: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Phi43Config {
    pub n: usize,
    pub length: f64,
    pub t_end: f64,
    pub dt: f64,
    pub n_save: usize,
    pub initial: InitialCondition,
    pub cubic: bool,
    pub store_noise: bool,
    pub counterterms: CountertermConfig,
    pub chaos: ChaosConfig,
}

impl Default for Phi43Config {
    fn default() -> Self {
        Self {
            n: 32,
            length: 1.0,
            t_end: 1.0,
            dt: 1e-4,
            n_save: 2,
            initial: InitialCondition::WhiteNoise,
            cubic: true,
            store_noise: false,
            counterterms: CountertermConfig::default(),
            chaos: ChaosConfig::default(),
        }
    }
}

impl Phi43Config {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(3, self.n, self.length)
    }

    pub fn validate(&self) -> Result<usize> {
        self.grid()?;
        if self.counterterms.quadrature_points < 16 {
            return Err(Error::Config("quadrature_points must be >= 16".into()));
        }
        if !self.counterterms.c12.is_finite() || self.counterterms.mass_shift.is_some_and(|m| !m.is_finite()) {
            return Err(Error::Config("counterterm overrides must be finite".into()));
        }
        let steps = step_count(self.t_end, self.dt, self.n_save)?;
        let spec = self.chaos.spec()?;
        if spec.j > steps {
            return Err(Error::Config(format!(
                "chaos J = {} exceeds the step count {steps}",
                spec.j
            )));
        }
        Ok(steps)
    }

    pub fn save_times(&self) -> Vec<f64> {
        save_times(self.t_end, self.n_save)
    }

    pub fn noise_path(&self, seed: SeedSpec) -> Result<NoisePath> {
        let steps = self.validate()?;
        NoisePath::new(seed, self.grid()?, steps, self.dt, NoiseKind::LatticeWhite, 0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Counterterms {
    pub c0: f64,
    pub c11: f64,
    pub c12: f64,
    pub mass_shift: f64,
}

impl Counterterms {
    pub fn compute(grid: &GridSpec, cfg: &CountertermConfig) -> Result<Self> {
        let c0 = compute_c0(grid);
        let c11 = compute_c11(grid, cfg.quadrature_points)?;
        let mass_shift = cfg.mass_shift.unwrap_or(3.0 * c0 - 9.0 * (c11 + cfg.c12));
        Ok(Self {
            c0,
            c11,
            c12: cfg.c12,
            mass_shift,
        })
    }

    pub fn from_config(cfg: &Phi43Config) -> Result<Self> {
        cfg.validate()?;
        Self::compute(&cfg.grid()?, &cfg.counterterms)
    }

    /// Only a mass term, for linear checks.
    pub fn mass_only(mass_shift: f64) -> Self {
        Self {
            c0: 0.0,
            c11: 0.0,
            c12: 0.0,
            mass_shift,
        }
    }
}

/// `C₀ = L^{-d} Σ_{k≠0} 1 / (2 λ_ε(k))`.
pub fn compute_c0(grid: &GridSpec) -> f64 {
    let table = discrete_laplacian_symbol(grid);
    let mut sum = 0.0;
    for (flat, &lam) in table.lattice().iter().enumerate().skip(1) {
        sum += grid.hermitian_weight(flat) / (2.0 * lam);
    }
    sum / grid.volume()
}

/// Integrand of `C₁₁` at auxiliary time `s`.
pub struct SunsetIntegrand {
    grid: GridSpec,
    lambda: Vec<f64>,
    engine: FftEngine,
    spec: Vec<Complex64>,
    q: Vec<f64>,
    p: Vec<f64>,
}

impl SunsetIntegrand {
    pub fn new(grid: GridSpec) -> Self {
        Self {
            lambda: discrete_laplacian_symbol(&grid).lattice().to_vec(),
            engine: FftEngine::new(grid),
            spec: vec![ZERO; grid.spectral_len()],
            q: vec![0.0; grid.n_total()],
            p: vec![0.0; grid.n_total()],
            grid,
        }
    }

    /// `ε^d Σ_x Q_s(x)² p_s(x)`.
    pub fn eval(&mut self, s: f64) -> f64 {
        let scale = self.grid.n_total() as f64 / self.grid.volume();
        for (c, &l) in self.spec.iter_mut().zip(&self.lambda) {
            *c = Complex64::new(scale * (-s * l).exp(), 0.0);
        }
        self.engine.inverse_into(&self.spec, &mut self.p);
        self.spec[0] = ZERO;
        for (c, &l) in self.spec.iter_mut().zip(&self.lambda).skip(1) {
            c.re /= 2.0 * l;
        }
        self.engine.inverse_into(&self.spec, &mut self.q);
        let sum: f64 = self.q.iter().zip(&self.p).map(|(q, p)| q * q * p).sum();
        sum * self.grid.cell_volume()
    }
}

/// Sunset constant `C₁₁` by composite Simpson on `s = e^u`.
///
/// The `u` range is cut where the bounds `g(u) ≤ s C₀²` (left) and
/// `g(u) ≤ s C₀² e^{−2λ_min s}` (right) drop below `1e-14` of the peak of
/// `g(u) = s f(s)`. The rule on every other node is used as the refinement
/// check; a relative difference above 1% is reported as non-convergence.
pub fn compute_c11(grid: &GridSpec, quadrature_points: usize) -> Result<f64> {
    let mut f = SunsetIntegrand::new(*grid);
    compute_c11_with(grid, quadrature_points, |s| f.eval(s))
}

/// The quadrature of [`compute_c11`] applied to any evaluation of the
/// integrand `f(s)`.
pub fn compute_c11_with(grid: &GridSpec, quadrature_points: usize, mut f: impl FnMut(f64) -> f64) -> Result<f64> {
    if quadrature_points < 16 {
        return Err(Error::InvalidParameter("quadrature_points must be >= 16".into()));
    }
    let c0 = compute_c0(grid);
    let lam = discrete_laplacian_symbol(grid);
    let lam_min = lam.lattice().iter().skip(1).cloned().fold(f64::INFINITY, f64::min);
    let lam_max = lam.lattice().iter().cloned().fold(0.0, f64::max);

    let lo_scan = (1e-3 / lam_max).ln();
    let hi_scan = (30.0 / lam_min).ln();
    let mut peak = 0.0f64;
    for i in 0..=64 {
        let u = lo_scan + (hi_scan - lo_scan) * i as f64 / 64.0;
        let s = u.exp();
        peak = peak.max(s * f(s));
    }
    if !(peak.is_finite() && peak > 0.0) {
        return Err(Error::Quadrature(format!("integrand peak is {peak}")));
    }
    let tol = 1e-14 * peak;
    let s_lo = tol / (c0 * c0);
    // Fixed point of s = ln(s C₀² / tol) / (2 λ_min) beyond 1/(2λ_min).
    let mut s_hi = 1.0 / lam_min;
    for _ in 0..100 {
        s_hi = (s_hi * c0 * c0 / tol).ln() / (2.0 * lam_min);
    }
    let (u_lo, u_hi) = (s_lo.ln(), s_hi.ln());
    if u_lo.partial_cmp(&u_hi) != Some(std::cmp::Ordering::Less) {
        return Err(Error::Quadrature(format!("empty integration range [{s_lo}, {s_hi}]")));
    }

    let m = (quadrature_points - 1).div_ceil(4).max(1);
    let nodes = 4 * m + 1;
    let h = (u_hi - u_lo) / (nodes - 1) as f64;
    let g: Vec<f64> = (0..nodes)
        .map(|i| {
            let s = (u_lo + h * i as f64).exp();
            s * f(s)
        })
        .collect();
    let fine = simpson(&g, h);
    let coarse_nodes: Vec<f64> = g.iter().step_by(2).cloned().collect();
    let coarse = simpson(&coarse_nodes, 2.0 * h);
    if !(fine.is_finite() && fine > 0.0) {
        return Err(Error::Quadrature(format!("quadrature produced {fine}")));
    }
    let rel = (fine - coarse).abs() / fine;
    if rel > 0.01 {
        return Err(Error::Quadrature(format!(
            "{nodes} vs {} nodes differ by {:.3}% over s in [{s_lo:.3e}, {s_hi:.3e}]",
            coarse_nodes.len(),
            100.0 * rel
        )));
    }
    Ok(fine)
}

fn simpson(g: &[f64], h: f64) -> f64 {
    debug_assert!(g.len() % 2 == 1 && g.len() >= 3);
    let last = g.len() - 1;
    let mut acc = g[0] + g[last];
    for (i, v) in g.iter().enumerate().take(last).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0
}

/// Semi-implicit Euler stepper carrying `Φ̂` on the half-spectrum.
#[derive(Debug)]
pub struct Phi43Stepper {
    dt: f64,
    mass: f64,
    cubic: bool,
    implicit: Vec<f64>,
    keep: Vec<bool>,
    engine: FftEngine,
    state: Vec<Complex64>,
    spec: Vec<Complex64>,
    buf: Vec<f64>,
    steps_done: usize,
}

impl Phi43Stepper {
    pub fn new(initial: &RealField, counterterms: &Counterterms, dt: f64, cubic: bool) -> Result<Self> {
        if !initial.is_finite() {
            return Err(Error::NonFinite("initial condition".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let grid = *initial.grid();
        let table = discrete_laplacian_symbol(&grid);
        let mut engine = FftEngine::new(grid);
        let mut state = vec![ZERO; grid.spectral_len()];
        engine.forward_into(initial.values(), &mut state);
        Ok(Self {
            dt,
            mass: counterterms.mass_shift,
            cubic,
            implicit: table.lattice().iter().map(|&l| 1.0 / (1.0 + dt * l)).collect(),
            keep: cutoff_mask(&grid, grid.dealias_cutoff()),
            engine,
            state,
            spec: vec![ZERO; grid.spectral_len()],
            buf: vec![0.0; grid.n_total()],
            steps_done: 0,
        })
    }

    /// One step with a spectral (FFT of physical) noise increment.
    pub fn step(&mut self, increment: &[Complex64]) -> Result<()> {
        if self.cubic {
            self.spec.copy_from_slice(&self.state);
            mask(&self.keep, &mut self.spec);
            self.engine.inverse_into(&self.spec, &mut self.buf);
            for v in self.buf.iter_mut() {
                *v = *v * *v * *v;
            }
            if let Some(i) = self.buf.iter().position(|v| !v.is_finite()) {
                return Err(self.blow_up(format!("non-finite cube at site {i}")));
            }
            self.engine.forward_into(&self.buf, &mut self.spec);
            mask(&self.keep, &mut self.spec);
        } else {
            self.spec.fill(ZERO);
        }
        let growth = 1.0 + self.dt * self.mass;
        for (((c, &n), &q), &dw) in self.state.iter_mut().zip(&self.spec).zip(&self.implicit).zip(increment) {
            *c = (*c * growth - n * self.dt + dw) * q;
        }
        self.steps_done += 1;
        if !self.state[0].is_finite() {
            return Err(self.blow_up("non-finite mean".into()));
        }
        Ok(())
    }

    fn blow_up(&self, detail: String) -> Error {
        Error::BlowUp {
            step: self.steps_done,
            time: self.steps_done as f64 * self.dt,
            detail,
        }
    }

    pub fn spectrum(&self) -> &[Complex64] {
        &self.state
    }

    pub fn field(&mut self) -> RealField {
        let mut out = vec![0.0; self.buf.len()];
        self.engine.inverse_into(&self.state, &mut out);
        RealField::from_raw(*self.engine.grid(), out)
    }

    pub fn engine(&mut self) -> &mut FftEngine {
        &mut self.engine
    }
}

fn mask(keep: &[bool], coeffs: &mut [Complex64]) {
    for (c, &k) in coeffs.iter_mut().zip(keep) {
        if !k {
            *c = ZERO;
        }
    }
}

/// One step of the scheme in physical space (cube dealiased).
pub fn phi43_step(
    state: &RealField,
    counterterms: &Counterterms,
    dt: f64,
    noise_increment: &RealField,
) -> Result<RealField> {
    if state.grid() != noise_increment.grid() {
        return Err(Error::InvalidParameter(
            "noise increment grid differs from the state grid".into(),
        ));
    }
    if !noise_increment.is_finite() {
        return Err(Error::NonFinite("noise increment".into()));
    }
    let mut stepper = Phi43Stepper::new(state, counterterms, dt, true)?;
    let mut incr = vec![ZERO; state.grid().spectral_len()];
    stepper.engine().forward_into(noise_increment.values(), &mut incr);
    stepper.step(&incr)?;
    let out = stepper.field();
    if !out.is_finite() {
        return Err(stepper.blow_up("non-finite state".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phi43Trajectory {
    pub config: Phi43Config,
    pub seed: SeedSpec,
    pub counterterms: Counterterms,
    pub times: Vec<f64>,
    pub phi: Vec<RealField>,
    pub xi: Vec<f64>,
    pub wick_features: WickFeatureVector,
    /// Physical-space `ΔW` per step, `[n_steps, n, n, n]`, if requested.
    pub noise: Option<Vec<f64>>,
}

pub fn run_phi43(cfg: &Phi43Config, seed: SeedSpec) -> Result<Phi43Trajectory> {
    let ct = Counterterms::from_config(cfg)?;
    let basis = WickBasis::new(cfg.chaos.spec()?)?;
    run_phi43_with(cfg, seed, &ct, &basis)
}

/// [`run_phi43`] with counterterms and chaos basis computed once per config.
pub fn run_phi43_with(
    cfg: &Phi43Config,
    seed: SeedSpec,
    counterterms: &Counterterms,
    basis: &WickBasis,
) -> Result<Phi43Trajectory> {
    let steps = cfg.validate()?;
    if basis.spec() != &cfg.chaos.spec()? {
        return Err(Error::InvalidParameter("chaos basis does not match the config".into()));
    }
    let grid = cfg.grid()?;
    let path = cfg.noise_path(seed)?;
    let phi0 = cfg.initial.realize(&grid, seed)?;
    let (phi, xi) = evolve(cfg, steps, &path, &phi0, counterterms)?;
    let wick_features = basis.eval(&xi)?;
    Ok(Phi43Trajectory {
        config: cfg.clone(),
        seed,
        counterterms: *counterterms,
        times: cfg.save_times(),
        phi,
        xi,
        wick_features,
        noise: cfg.store_noise.then(|| path.materialize_real()),
    })
}

/// Saved states for a given path and initial state.
pub fn solve_phi43(
    cfg: &Phi43Config,
    path: &NoisePath,
    phi0: &RealField,
    counterterms: &Counterterms,
) -> Result<Vec<RealField>> {
    let steps = cfg.validate()?;
    if path.n_steps() != steps || (path.dt() - cfg.dt).abs() > 1e-12 * cfg.dt || path.grid() != &cfg.grid()? {
        return Err(Error::InvalidParameter("noise path does not match the config".into()));
    }
    Ok(evolve(cfg, steps, path, phi0, counterterms)?.0)
}

fn evolve(
    cfg: &Phi43Config,
    steps: usize,
    path: &NoisePath,
    phi0: &RealField,
    counterterms: &Counterterms,
) -> Result<(Vec<RealField>, Vec<f64>)> {
    let grid = cfg.grid()?;
    let per_save = steps / cfg.n_save;
    let mut integ = GaussianIntegrator::new(path, cfg.chaos.basis, cfg.chaos.j, cfg.chaos.channels)?;
    let mut stepper = Phi43Stepper::new(phi0, counterterms, cfg.dt, cfg.cubic)?;
    let mut incr = vec![ZERO; grid.spectral_len()];
    let mut out = vec![stepper.field()];
    for step in 0..steps {
        path.spectral_increment(step, stepper.engine(), &mut incr);
        stepper.step(&incr)?;
        integ.push(step, &incr);
        if (step + 1) % per_save == 0 {
            let f = stepper.field();
            if !f.is_finite() {
                return Err(stepper.blow_up("non-finite snapshot".into()));
            }
            out.push(f);
        }
    }
    Ok((out, integ.finish()))
}
