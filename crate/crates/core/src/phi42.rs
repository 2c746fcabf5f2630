//! Renormalised Φ⁴₂ on the 2-d torus through the Da Prato–Debussche
//! splitting `u = v + X`.
//!
//! `X` is the stochastic convolution of the spectrally truncated noise, advanced
//! mode by mode with the exact Ornstein–Uhlenbeck update, so its pointwise
//! variance `a(t)` is known in closed form. The remainder `v` solves the shift
//! equation with a semi-implicit Euler step (Laplacian implicit, the Wick
//! polynomial in `v` and `X` explicit and dealiased). A direct semi-implicit
//! solver for `u` with the Wick cube `u³ − 3au` is kept as a cross-check.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chaos::{WickBasis, WickFeatureVector};
use crate::config::{save_times, step_count, ChaosConfig, InitialCondition};
use crate::error::{Error, Result};
use crate::grid::{cutoff_mask, discrete_laplacian_symbol, FftEngine, GridSpec, RealField, SpectralField};
use crate::noise::{GaussianIntegrator, NoiseKind, NoisePath, SeedSpec};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Phi42Config {
    /// Grid points per axis.
    pub n: usize,
    /// Side length of the torus.
    pub length: f64,
    /// Noise cutoff `N` (max-norm Fourier index).
    pub cutoff: usize,
    pub sigma: f64,
    pub t_end: f64,
    pub dt: f64,
    pub n_save: usize,
    pub initial: InitialCondition,
    /// Set to false to drop the nonlinearity (linear checks only).
    pub cubic: bool,
    /// Keep the physical-space noise increments in the trajectory.
    pub store_noise: bool,
    pub chaos: ChaosConfig,
}

impl Default for Phi42Config {
    fn default() -> Self {
        Self {
            n: 32,
            length: 1.0,
            cutoff: 8,
            sigma: 1.0,
            t_end: 1.0,
            dt: 1e-3,
            n_save: 10,
            initial: InitialCondition::Zero,
            cubic: true,
            store_noise: false,
            chaos: ChaosConfig::default(),
        }
    }
}

impl Phi42Config {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(2, self.n, self.length)
    }

    /// Checks the config and returns the number of time steps.
    pub fn validate(&self) -> Result<usize> {
        let grid = self.grid()?;
        if self.cutoff == 0 || self.cutoff > grid.nyquist() {
            return Err(Error::Config(format!(
                "cutoff must be in 1..={}, got {}",
                grid.nyquist(),
                self.cutoff
            )));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
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

    /// Noise path of one trajectory.
    pub fn noise_path(&self, seed: SeedSpec) -> Result<NoisePath> {
        let steps = self.validate()?;
        NoisePath::new(
            seed,
            self.grid()?,
            steps,
            self.dt,
            NoiseKind::SpectralTruncated,
            self.cutoff,
            self.sigma,
        )
    }

    fn check_path(&self, path: &NoisePath) -> Result<usize> {
        let steps = self.validate()?;
        let grid = self.grid()?;
        if path.grid() != &grid {
            return Err(Error::InvalidParameter(
                "noise path grid differs from the config grid".into(),
            ));
        }
        match path.kind() {
            NoiseKind::SpectralTruncated if path.cutoff() == self.cutoff => {}
            NoiseKind::Zero => {}
            kind => {
                return Err(Error::InvalidParameter(format!(
                    "Φ⁴₂ needs spectral noise with cutoff {}, got {kind:?} with cutoff {}",
                    self.cutoff,
                    path.cutoff()
                )))
            }
        }
        if path.n_steps() != steps || (path.dt() - self.dt).abs() > 1e-12 * self.dt {
            return Err(Error::InvalidParameter(format!(
                "noise path has {} steps of {}, config needs {steps} of {}",
                path.n_steps(),
                path.dt(),
                self.dt
            )));
        }
        Ok(steps)
    }
}

/// Closed form of `a(t) = E[X(t, x)²]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenormModel {
    sigma2_per_volume: f64,
    // (λ_k, number of full-spectrum modes with that symbol), zero mode excluded
    shells: Vec<(f64, f64)>,
}

impl RenormModel {
    pub fn new(grid: &GridSpec, cutoff: usize, sigma: f64) -> Self {
        let table = discrete_laplacian_symbol(grid);
        let mask = cutoff_mask(grid, cutoff);
        let mut shells: Vec<(f64, f64)> = Vec::new();
        for (flat, &keep) in mask.iter().enumerate() {
            if flat == 0 || !keep {
                continue;
            }
            let lam = table.continuous()[flat];
            let w = grid.hermitian_weight(flat);
            match shells.iter_mut().find(|(l, _)| *l == lam) {
                Some(s) => s.1 += w,
                None => shells.push((lam, w)),
            }
        }
        shells.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            sigma2_per_volume: sigma * sigma / grid.volume(),
            shells,
        }
    }

    pub fn from_config(cfg: &Phi42Config) -> Result<Self> {
        cfg.validate()?;
        Ok(Self::new(&cfg.grid()?, cfg.cutoff, cfg.sigma))
    }

    pub fn at(&self, t: f64) -> f64 {
        let modes: f64 = self
            .shells
            .iter()
            .map(|&(lam, m)| m * -(-2.0 * lam * t).exp_m1() / (2.0 * lam))
            .sum();
        self.sigma2_per_volume * (t + modes)
    }

    pub fn tabulate(&self, times: &[f64]) -> RenormConstant {
        RenormConstant {
            times: times.to_vec(),
            a_values: times.iter().map(|&t| self.at(t)).collect(),
        }
    }
}

/// `a(t)` at the saved times.
#[derive(Debug, Clone, PartialEq)]
pub struct RenormConstant {
    pub times: Vec<f64>,
    pub a_values: Vec<f64>,
}

pub fn renorm_constant(cfg: &Phi42Config) -> Result<RenormConstant> {
    Ok(RenormModel::from_config(cfg)?.tabulate(&cfg.save_times()))
}

/// `x² − a` pointwise.
pub fn wick_square(x: &RealField, a: f64) -> RealField {
    let values = x.values().iter().map(|v| v * v - a).collect();
    RealField::from_raw(*x.grid(), values)
}

/// `x³ − 3a·x`, evaluated on the dealiased field and dealiased again.
pub fn wick_cube(x: &RealField, a: f64) -> Result<RealField> {
    if !x.is_finite() {
        return Err(Error::NonFinite("wick_cube input".into()));
    }
    let g = *x.grid();
    let mut engine = FftEngine::new(g);
    let keep = cutoff_mask(&g, g.dealias_cutoff());
    let mut spec = vec![ZERO; g.spectral_len()];
    let mut p = vec![0.0; g.n_total()];
    engine.forward_into(x.values(), &mut spec);
    apply_mask(&keep, &mut spec);
    engine.inverse_into(&spec, &mut p);
    for v in p.iter_mut() {
        *v = *v * *v * *v - 3.0 * a * *v;
    }
    engine.forward_into(&p, &mut spec);
    apply_mask(&keep, &mut spec);
    engine.inverse_into(&spec, &mut p);
    Ok(RealField::from_raw(g, p))
}

fn apply_mask(keep: &[bool], coeffs: &mut [Complex64]) {
    for (c, &k) in coeffs.iter_mut().zip(keep) {
        if !k {
            *c = ZERO;
        }
    }
}

/// Exact per-mode OU stepper for `dX = ΔX dt + σ dW_N`, `X(0) = 0`.
#[derive(Debug, Clone)]
pub struct StochasticConvolution {
    state: SpectralField,
    decay: Vec<f64>,
    gain: Vec<f64>,
}

impl StochasticConvolution {
    pub fn new(grid: GridSpec, dt: f64, sigma: f64) -> Self {
        let table = discrete_laplacian_symbol(&grid);
        let decay = table.continuous().iter().map(|&l| (-l * dt).exp()).collect();
        // Exact integrated variance: ∫₀^dt e^{-2λs} ds = dt · gain².
        let gain = table
            .continuous()
            .iter()
            .map(|&l| {
                let x = l * dt;
                if x == 0.0 {
                    sigma
                } else {
                    sigma * (-(-2.0 * x).exp_m1() / (2.0 * x)).sqrt()
                }
            })
            .collect();
        Self {
            state: SpectralField::zeros(grid),
            decay,
            gain,
        }
    }

    /// Advances one step with the unscaled increment of that step.
    pub fn step(&mut self, increment: &[Complex64]) {
        for ((x, &d), (&g, &dw)) in self
            .state
            .coeffs_mut()
            .iter_mut()
            .zip(&self.decay)
            .zip(self.gain.iter().zip(increment))
        {
            *x = *x * d + dw * g;
        }
    }

    pub fn state(&self) -> &SpectralField {
        &self.state
    }
}

/// `X` at the saved times.
pub fn stochastic_convolution(cfg: &Phi42Config, path: &NoisePath) -> Result<Vec<RealField>> {
    let steps = cfg.check_path(path)?;
    let grid = cfg.grid()?;
    let per_save = steps / cfg.n_save;
    let mut engine = FftEngine::new(grid);
    let mut x = StochasticConvolution::new(grid, cfg.dt, cfg.sigma);
    let mut incr = vec![ZERO; grid.spectral_len()];
    let mut out = vec![engine.inverse(x.state())];
    for step in 0..steps {
        path.spectral_increment(step, &mut engine, &mut incr);
        x.step(&incr);
        if (step + 1) % per_save == 0 {
            out.push(engine.inverse(x.state()));
        }
    }
    Ok(out)
}

/// `X̂` at every step `t_0, …, t_{n_steps}` (lazy).
pub fn stochastic_convolution_steps<'a>(
    cfg: &Phi42Config,
    path: &'a NoisePath,
) -> Result<impl Iterator<Item = SpectralField> + 'a> {
    let steps = cfg.check_path(path)?;
    let grid = cfg.grid()?;
    let mut engine = FftEngine::new(grid);
    let mut x = StochasticConvolution::new(grid, cfg.dt, cfg.sigma);
    let mut incr = vec![ZERO; grid.spectral_len()];
    let mut step = 0;
    Ok(std::iter::from_fn(move || {
        if step > steps {
            return None;
        }
        if step > 0 {
            path.spectral_increment(step - 1, &mut engine, &mut incr);
            x.step(&incr);
        }
        step += 1;
        Some(x.state().clone())
    }))
}

// Shared machinery of the two semi-implicit solvers.
#[derive(Debug)]
struct SemiImplicit {
    dt: f64,
    cubic: bool,
    implicit: Vec<f64>,
    keep: Vec<bool>,
    engine: FftEngine,
    state: SpectralField,
    spec: Vec<Complex64>,
    a_buf: Vec<f64>,
    b_buf: Vec<f64>,
    steps_done: usize,
}

impl SemiImplicit {
    fn new(initial: &RealField, dt: f64, cubic: bool) -> Result<Self> {
        if !initial.is_finite() {
            return Err(Error::NonFinite("initial condition".into()));
        }
        let grid = *initial.grid();
        let table = discrete_laplacian_symbol(&grid);
        let mut engine = FftEngine::new(grid);
        let state = engine.forward(initial);
        Ok(Self {
            dt,
            cubic,
            implicit: table.continuous().iter().map(|&l| 1.0 / (1.0 + dt * l)).collect(),
            keep: cutoff_mask(&grid, grid.dealias_cutoff()),
            engine,
            state,
            spec: vec![ZERO; grid.spectral_len()],
            a_buf: vec![0.0; grid.n_total()],
            b_buf: vec![0.0; grid.n_total()],
            steps_done: 0,
        })
    }

    // Dealiased state in physical space, into a_buf.
    fn state_to_a(&mut self) {
        self.spec.copy_from_slice(self.state.coeffs());
        apply_mask(&self.keep, &mut self.spec);
        self.engine.inverse_into(&self.spec, &mut self.a_buf);
    }

    fn coeffs_to_b(&mut self, coeffs: &[Complex64]) {
        self.spec.copy_from_slice(coeffs);
        apply_mask(&self.keep, &mut self.spec);
        self.engine.inverse_into(&self.spec, &mut self.b_buf);
    }

    // a_buf holds the pointwise nonlinearity; replace it by its dealiased
    // spectrum in `spec`.
    fn nonlinearity_spectrum(&mut self) -> Result<()> {
        if let Some(i) = self.a_buf.iter().position(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                step: self.steps_done,
                time: self.steps_done as f64 * self.dt,
                detail: format!("non-finite nonlinearity at site {i}"),
            });
        }
        self.engine.forward_into(&self.a_buf, &mut self.spec);
        apply_mask(&self.keep, &mut self.spec);
        Ok(())
    }

    fn field(&mut self) -> RealField {
        self.engine.inverse(&self.state)
    }
}

/// Semi-implicit Euler stepper for the shift equation
/// `∂v = Δv − (v³ + 3v²X + 3v X^⋄2 + X^⋄3)`.
#[derive(Debug)]
pub struct ShiftSolver {
    inner: SemiImplicit,
}

impl ShiftSolver {
    pub fn new(v0: &RealField, dt: f64, cubic: bool) -> Result<Self> {
        Ok(Self {
            inner: SemiImplicit::new(v0, dt, cubic)?,
        })
    }

    /// One step using `X̂` and `a` at the current time.
    pub fn step(&mut self, x_hat: &[Complex64], a: f64) -> Result<()> {
        let s = &mut self.inner;
        if s.cubic {
            s.state_to_a();
            s.coeffs_to_b(x_hat);
            for (v, &x) in s.a_buf.iter_mut().zip(&s.b_buf) {
                let pv = *v;
                let x2 = x * x - a;
                let x3 = x * x * x - 3.0 * a * x;
                *v = pv * pv * pv + 3.0 * pv * pv * x + 3.0 * pv * x2 + x3;
            }
            s.nonlinearity_spectrum()?;
            for ((c, &m), &q) in s.state.coeffs_mut().iter_mut().zip(&s.spec).zip(&s.implicit) {
                *c = (*c - m * s.dt) * q;
            }
        } else {
            for (c, &q) in s.state.coeffs_mut().iter_mut().zip(&s.implicit) {
                *c *= q;
            }
        }
        s.steps_done += 1;
        Ok(())
    }

    pub fn state(&self) -> &SpectralField {
        &self.inner.state
    }

    pub fn field(&mut self) -> RealField {
        self.inner.field()
    }
}

/// Semi-implicit Euler stepper for `du = (Δu − (u³ − 3au))dt + σ dW_N`.
#[derive(Debug)]
pub struct DirectSolver {
    inner: SemiImplicit,
    sigma: f64,
}

impl DirectSolver {
    pub fn new(u0: &RealField, dt: f64, sigma: f64, cubic: bool) -> Result<Self> {
        Ok(Self {
            inner: SemiImplicit::new(u0, dt, cubic)?,
            sigma,
        })
    }

    pub fn step(&mut self, increment: &[Complex64], a: f64) -> Result<()> {
        let s = &mut self.inner;
        if s.cubic {
            s.state_to_a();
            for v in s.a_buf.iter_mut() {
                let p = *v;
                *v = p * p * p - 3.0 * a * p;
            }
            s.nonlinearity_spectrum()?;
        } else {
            s.spec.fill(ZERO);
        }
        for (((c, &m), &q), &dw) in s
            .state
            .coeffs_mut()
            .iter_mut()
            .zip(&s.spec)
            .zip(&s.implicit)
            .zip(increment)
        {
            *c = (*c - m * s.dt + dw * self.sigma) * q;
        }
        s.steps_done += 1;
        Ok(())
    }

    pub fn state(&self) -> &SpectralField {
        &self.inner.state
    }

    pub fn field(&mut self) -> RealField {
        self.inner.field()
    }
}

/// `v` at the saved times, given `X̂` at every step from `t_0` on.
pub fn solve_shift_equation(
    cfg: &Phi42Config,
    x_steps: impl IntoIterator<Item = SpectralField>,
    renorm: &RenormModel,
) -> Result<Vec<RealField>> {
    let steps = cfg.validate()?;
    let grid = cfg.grid()?;
    let u0 = cfg.initial.realize(&grid, SeedSpec::new(0, 0))?;
    shift_from(cfg, steps, &u0, x_steps, renorm)
}

fn shift_from(
    cfg: &Phi42Config,
    steps: usize,
    u0: &RealField,
    x_steps: impl IntoIterator<Item = SpectralField>,
    renorm: &RenormModel,
) -> Result<Vec<RealField>> {
    let per_save = steps / cfg.n_save;
    let mut solver = ShiftSolver::new(u0, cfg.dt, cfg.cubic)?;
    let mut out = vec![solver.field()];
    let mut xs = x_steps.into_iter();
    for step in 0..steps {
        let x = xs.next().ok_or(Error::LengthMismatch {
            expected: steps,
            found: step,
        })?;
        if x.grid() != solver.state().grid() {
            return Err(Error::InvalidParameter("X grid differs from the config grid".into()));
        }
        solver.step(x.coeffs(), renorm.at(step as f64 * cfg.dt))?;
        if (step + 1) % per_save == 0 {
            out.push(solver.field());
        }
    }
    Ok(out)
}

/// `u` at the saved times from the direct renormalised scheme, started at
/// `P_N u₀`.
pub fn solve_direct_renormalized(cfg: &Phi42Config, path: &NoisePath) -> Result<Vec<RealField>> {
    let u0 = cfg.initial.realize(&cfg.grid()?, path.seed())?;
    direct_from(cfg, path, &u0)
}

fn direct_from(cfg: &Phi42Config, path: &NoisePath, u0: &RealField) -> Result<Vec<RealField>> {
    let steps = cfg.check_path(path)?;
    let grid = cfg.grid()?;
    let renorm = RenormModel::new(&grid, cfg.cutoff, cfg.sigma);
    let per_save = steps / cfg.n_save;
    let mut engine = FftEngine::new(grid);
    let mut start = engine.forward(u0);
    crate::grid::project_in_place(&grid, start.coeffs_mut(), cfg.cutoff);
    let start = engine.inverse(&start);
    let mut solver = DirectSolver::new(&start, cfg.dt, cfg.sigma, cfg.cubic)?;
    let mut incr = vec![ZERO; grid.spectral_len()];
    let mut out = vec![solver.field()];
    for step in 0..steps {
        path.spectral_increment(step, &mut engine, &mut incr);
        solver.step(&incr, renorm.at(step as f64 * cfg.dt))?;
        if (step + 1) % per_save == 0 {
            out.push(solver.field());
        }
    }
    Ok(out)
}

/// Saved fields of the splitting route.
#[derive(Debug, Clone, PartialEq)]
pub struct DpddSnapshots {
    pub times: Vec<f64>,
    pub x: Vec<RealField>,
    pub v: Vec<RealField>,
    pub u: Vec<RealField>,
}

/// Runs `X` and `v` in lock-step on a given path and reconstructs `u = v + X`.
pub fn solve_dpdd(cfg: &Phi42Config, path: &NoisePath, u0: &RealField) -> Result<DpddSnapshots> {
    dpdd_impl(cfg, path, u0, None)
}

fn dpdd_impl(
    cfg: &Phi42Config,
    path: &NoisePath,
    u0: &RealField,
    mut integrator: Option<&mut GaussianIntegrator>,
) -> Result<DpddSnapshots> {
    let steps = cfg.check_path(path)?;
    let grid = cfg.grid()?;
    if u0.grid() != &grid {
        return Err(Error::InvalidParameter(
            "initial condition grid differs from the config grid".into(),
        ));
    }
    let renorm = RenormModel::new(&grid, cfg.cutoff, cfg.sigma);
    let per_save = steps / cfg.n_save;
    let mut engine = FftEngine::new(grid);
    let mut x = StochasticConvolution::new(grid, cfg.dt, cfg.sigma);
    let mut v = ShiftSolver::new(u0, cfg.dt, cfg.cubic)?;
    let mut incr = vec![ZERO; grid.spectral_len()];

    let mut snaps = DpddSnapshots {
        times: cfg.save_times(),
        x: Vec::with_capacity(cfg.n_save + 1),
        v: Vec::with_capacity(cfg.n_save + 1),
        u: Vec::with_capacity(cfg.n_save + 1),
    };
    let mut save = |x: &StochasticConvolution, v: &mut ShiftSolver, engine: &mut FftEngine| {
        let xf = engine.inverse(x.state());
        let vf = v.field();
        let uf: Vec<f64> = xf.values().iter().zip(vf.values()).map(|(a, b)| a + b).collect();
        snaps.u.push(RealField::from_raw(grid, uf));
        snaps.x.push(xf);
        snaps.v.push(vf);
    };
    save(&x, &mut v, &mut engine);
    for step in 0..steps {
        path.spectral_increment(step, &mut engine, &mut incr);
        v.step(x.state().coeffs(), renorm.at(step as f64 * cfg.dt))?;
        x.step(&incr);
        if let Some(integ) = integrator.as_deref_mut() {
            integ.push(step, &incr);
        }
        if (step + 1) % per_save == 0 {
            save(&x, &mut v, &mut engine);
        }
    }
    Ok(snaps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phi42Trajectory {
    pub config: Phi42Config,
    pub seed: SeedSpec,
    pub times: Vec<f64>,
    pub x: Vec<RealField>,
    pub v: Vec<RealField>,
    pub u: Vec<RealField>,
    pub renorm: RenormConstant,
    /// Gaussian integrals `ξ_ij`, flattened `(i−1)·J + (j−1)`.
    pub xi: Vec<f64>,
    pub wick_features: WickFeatureVector,
    /// `σ·ΔW` per step in physical space, `[n_steps, n, n]`, if requested.
    pub noise: Option<Vec<f64>>,
}

/// One complete trajectory: noise, `X`, `v`, `u = v + X`, `a(t)` and the
/// chaos features of the driving path.
pub fn run_phi42(cfg: &Phi42Config, seed: SeedSpec) -> Result<Phi42Trajectory> {
    let basis = WickBasis::new(cfg.chaos.spec()?)?;
    run_phi42_with(cfg, seed, &basis)
}

/// [`run_phi42`] with a prebuilt chaos basis (shared across trajectories).
pub fn run_phi42_with(cfg: &Phi42Config, seed: SeedSpec, basis: &WickBasis) -> Result<Phi42Trajectory> {
    cfg.validate()?;
    if basis.spec() != &cfg.chaos.spec()? {
        return Err(Error::InvalidParameter("chaos basis does not match the config".into()));
    }
    let grid = cfg.grid()?;
    let path = cfg.noise_path(seed)?;
    let u0 = cfg.initial.realize(&grid, seed)?;
    let mut integ = GaussianIntegrator::new(&path, cfg.chaos.basis, cfg.chaos.j, cfg.chaos.channels)?;
    let snaps = dpdd_impl(cfg, &path, &u0, Some(&mut integ))?;
    let xi = integ.finish();
    let wick_features = basis.eval(&xi)?;
    let noise = cfg.store_noise.then(|| {
        let mut raw = path.materialize_real();
        for v in raw.iter_mut() {
            *v *= cfg.sigma;
        }
        raw
    });
    Ok(Phi42Trajectory {
        config: cfg.clone(),
        seed,
        renorm: RenormModel::new(&grid, cfg.cutoff, cfg.sigma).tabulate(&snaps.times),
        times: snaps.times,
        x: snaps.x,
        v: snaps.v,
        u: snaps.u,
        xi,
        wick_features,
        noise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize, cutoff: usize, dt: f64, t_end: f64) -> Phi42Config {
        Phi42Config {
            n,
            cutoff,
            dt,
            t_end,
            n_save: 2,
            chaos: ChaosConfig {
                j: 2,
                k: 2,
                ..ChaosConfig::default()
            },
            ..Phi42Config::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(Phi42Config::default().validate().is_ok());
        let mut c = Phi42Config {
            cutoff: 17,
            ..Phi42Config::default()
        };
        assert!(c.validate().is_err());
        c = Phi42Config::default();
        c.sigma = 0.0;
        assert!(c.validate().is_err());
        c = Phi42Config::default();
        c.n_save = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn renorm_vanishes_at_zero_and_grows() {
        let cfg = Phi42Config::default();
        let r = renorm_constant(&cfg).unwrap();
        assert_eq!(r.a_values[0], 0.0);
        assert!(r.a_values.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn renorm_matches_direct_mode_sum() {
        // Independent route: full-spectrum loop over signed modes.
        let cfg = small(16, 4, 1e-3, 0.5);
        let model = RenormModel::from_config(&cfg).unwrap();
        let t = 0.37;
        let mut sum = t;
        for k1 in -4i64..=4 {
            for k2 in -4i64..=4 {
                if k1 == 0 && k2 == 0 {
                    continue;
                }
                let lam = 4.0 * std::f64::consts::PI.powi(2) * (k1 * k1 + k2 * k2) as f64;
                sum += (1.0 - (-2.0 * lam * t).exp()) / (2.0 * lam);
            }
        }
        assert!((model.at(t) - sum).abs() < 1e-13 * sum);
    }

    #[test]
    fn renorm_grows_with_cutoff() {
        let g = GridSpec::new(2, 32, 1.0).unwrap();
        let a: Vec<f64> = [4, 8, 16]
            .iter()
            .map(|&n| RenormModel::new(&g, n, 1.0).at(1.0))
            .collect();
        assert!(a[0] < a[1] && a[1] < a[2]);
    }

    #[test]
    fn wick_powers_of_constants() {
        let g = GridSpec::new(2, 8, 1.0).unwrap();
        let x = RealField::constant(g, 2.0);
        assert!(wick_square(&x, 1.0).values().iter().all(|v| (v - 3.0).abs() < 1e-14));
        assert!(wick_cube(&x, 1.0)
            .unwrap()
            .values()
            .iter()
            .all(|v| (v - 2.0).abs() < 1e-13));
        assert!(wick_square(&x, 0.0).values().iter().all(|v| (v - 4.0).abs() < 1e-14));
        assert!(wick_cube(&x, 0.0)
            .unwrap()
            .values()
            .iter()
            .all(|v| (v - 8.0).abs() < 1e-13));
    }

    #[test]
    fn zero_noise_zero_data_stays_zero() {
        let cfg = small(16, 4, 1e-2, 0.1);
        let path = NoisePath::zero(cfg.grid().unwrap(), 10, 1e-2).unwrap();
        let xs = stochastic_convolution(&cfg, &path).unwrap();
        assert!(xs.iter().all(|x| x.max_abs() == 0.0));
        let u0 = RealField::zeros(cfg.grid().unwrap());
        let s = solve_dpdd(&cfg, &path, &u0).unwrap();
        assert!(s.v.iter().all(|v| v.max_abs() == 0.0));
        let d = solve_direct_renormalized(&cfg, &path).unwrap();
        assert!(d.iter().all(|u| u.max_abs() == 0.0));
    }

    #[test]
    fn lazy_x_steps_match_snapshots() {
        let cfg = small(16, 4, 1e-2, 0.1);
        let path = cfg.noise_path(SeedSpec::new(5, 1)).unwrap();
        let snaps = stochastic_convolution(&cfg, &path).unwrap();
        let all: Vec<SpectralField> = stochastic_convolution_steps(&cfg, &path).unwrap().collect();
        assert_eq!(all.len(), 11);
        let last = inverse(&all[10]);
        assert!(last.relative_l2_to(&snaps[2]) < 1e-14);
    }

    fn inverse(s: &SpectralField) -> RealField {
        crate::grid::inverse_fft(s)
    }

    #[test]
    fn shift_api_agrees_with_lockstep() {
        let cfg = small(16, 4, 1e-2, 0.2);
        let path = cfg.noise_path(SeedSpec::new(2, 0)).unwrap();
        let renorm = RenormModel::from_config(&cfg).unwrap();
        let v = solve_shift_equation(&cfg, stochastic_convolution_steps(&cfg, &path).unwrap(), &renorm).unwrap();
        let s = solve_dpdd(&cfg, &path, &RealField::zeros(cfg.grid().unwrap())).unwrap();
        for (a, b) in v.iter().zip(&s.v) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn shift_needs_enough_x_steps() {
        let cfg = small(16, 4, 1e-2, 0.2);
        let renorm = RenormModel::from_config(&cfg).unwrap();
        let few = vec![SpectralField::zeros(cfg.grid().unwrap()); 3];
        assert!(matches!(
            solve_shift_equation(&cfg, few, &renorm),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn mismatched_path_is_rejected() {
        let cfg = small(16, 4, 1e-2, 0.1);
        let other = small(16, 3, 1e-2, 0.1);
        let path = other.noise_path(SeedSpec::new(0, 0)).unwrap();
        assert!(stochastic_convolution(&cfg, &path).is_err());
    }

    #[test]
    fn blow_up_reports_step() {
        let mut cfg = small(16, 4, 0.5, 10.0);
        cfg.initial = InitialCondition::Constant { value: 40.0 };
        cfg.n_save = 1;
        let path = NoisePath::zero(cfg.grid().unwrap(), 20, 0.5).unwrap();
        let u0 = RealField::constant(cfg.grid().unwrap(), 40.0);
        match solve_dpdd(&cfg, &path, &u0) {
            Err(Error::BlowUp { step, .. }) => assert!(step < 20),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn run_is_deterministic_and_consistent() {
        let cfg = small(16, 4, 1e-2, 0.2);
        let a = run_phi42(&cfg, SeedSpec::new(9, 3)).unwrap();
        let b = run_phi42(&cfg, SeedSpec::new(9, 3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.x.len(), 3);
        for i in 0..3 {
            for ((u, v), x) in a.u[i].values().iter().zip(a.v[i].values()).zip(a.x[i].values()) {
                assert!((u - v - x).abs() <= 1e-10);
            }
        }
        assert_eq!(a.wick_features.len(), 6);
        assert_eq!(a.renorm.a_values[0], 0.0);
    }
}
