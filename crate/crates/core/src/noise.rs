//! Driving noise: reproducible increments for the spectrally truncated 2-d
//! noise and the i.i.d. lattice noise, plus the scalar Gaussian integrals
//! `ξ_ij = ∫ e_j(s) dW⁽ⁱ⁾_s` that feed the chaos features.
//!
//! Increments are never stored by default. Every fine time step `n` of a
//! trajectory owns its own ChaCha stream keyed by
//! `(master_seed, trajectory_index)` with stream id `n`, and draws within a
//! step follow the fixed site / mode order. A path can therefore be
//! regenerated step by step, in any order and on any thread, bit for bit.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{max_norm, FftEngine, GridSpec};

/// Stream id reserved for initial-condition draws.
pub(crate) const INITIAL_CONDITION_STREAM: u64 = u64::MAX;

/// Identifies one trajectory of one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub trajectory_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, trajectory_index: u64) -> Self {
        Self {
            master_seed,
            trajectory_index,
        }
    }

    /// Independent generator for one stream of this trajectory.
    pub fn stream(&self, stream: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.trajectory_index.to_le_bytes());
        key[16..24].copy_from_slice(&0x5350_4445_5749_434bu64.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    /// Lattice white noise projected onto max-norm modes `<= cutoff`
    /// (sampled directly in Fourier space).
    SpectralTruncated,
    /// i.i.d. Gaussian per site with variance `dt · ε^{-dim}`.
    LatticeWhite,
    /// All increments zero.
    Zero,
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    flat: usize,
    partner: Option<usize>,
    real: bool,
}

/// Lazily evaluated noise increments for one trajectory.
///
/// Increments are returned *without* the amplitude `σ`; consumers scale by
/// [`NoisePath::sigma`].
#[derive(Debug, Clone)]
pub struct NoisePath {
    seed: SeedSpec,
    grid: GridSpec,
    kind: NoiseKind,
    cutoff: usize,
    sigma: f64,
    fine_dt: f64,
    stride: usize,
    n_steps: usize,
    slots: Arc<Vec<Slot>>,
}

/// Builds a noise path descriptor; no random numbers are drawn until
/// increments are requested.
pub fn sample_noise_path(
    seed: SeedSpec,
    grid: &GridSpec,
    n_steps: usize,
    dt: f64,
    kind: NoiseKind,
    cutoff: usize,
    sigma: f64,
) -> Result<NoisePath> {
    NoisePath::new(seed, *grid, n_steps, dt, kind, cutoff, sigma)
}

impl NoisePath {
    pub fn new(
        seed: SeedSpec,
        grid: GridSpec,
        n_steps: usize,
        dt: f64,
        kind: NoiseKind,
        cutoff: usize,
        sigma: f64,
    ) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
        }
        if kind == NoiseKind::SpectralTruncated && cutoff > grid.nyquist() {
            return Err(Error::InvalidParameter(format!(
                "noise cutoff {cutoff} exceeds the Nyquist index {}",
                grid.nyquist()
            )));
        }
        let slots = if kind == NoiseKind::SpectralTruncated {
            spectral_slots(&grid, cutoff)
        } else {
            Vec::new()
        };
        Ok(Self {
            seed,
            grid,
            kind,
            cutoff,
            sigma,
            fine_dt: dt,
            stride: 1,
            n_steps,
            slots: Arc::new(slots),
        })
    }

    /// All-zero path, used for deterministic checks.
    pub fn zero(grid: GridSpec, n_steps: usize, dt: f64) -> Result<Self> {
        Self::new(SeedSpec::new(0, 0), grid, n_steps, dt, NoiseKind::Zero, 0, 0.0)
    }

    /// Same Brownian path observed on a grid `factor` times coarser in time:
    /// each coarse increment is the sum of `factor` consecutive increments.
    pub fn coarsened(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.n_steps % factor != 0 {
            return Err(Error::InvalidParameter(format!(
                "cannot coarsen {} steps by a factor {factor}",
                self.n_steps
            )));
        }
        let mut out = self.clone();
        out.stride *= factor;
        out.n_steps /= factor;
        Ok(out)
    }

    pub fn seed(&self) -> SeedSpec {
        self.seed
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dt(&self) -> f64 {
        self.fine_dt * self.stride as f64
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> f64 {
        self.dt() * self.n_steps as f64
    }

    /// Per-site variance of a lattice-white increment, `dt · ε^{-dim}`.
    pub fn site_variance(&self) -> f64 {
        self.dt() / self.grid.cell_volume()
    }

    /// Half-spectrum (FFT-convention) increment of step `step`.
    pub fn spectral_increment(&self, step: usize, engine: &mut FftEngine, out: &mut [Complex64]) {
        debug_assert!(step < self.n_steps);
        match self.kind {
            NoiseKind::Zero => out.fill(Complex64::new(0.0, 0.0)),
            NoiseKind::SpectralTruncated => {
                out.fill(Complex64::new(0.0, 0.0));
                for f in 0..self.stride {
                    self.add_spectral_fine(step * self.stride + f, out);
                }
            }
            NoiseKind::LatticeWhite => {
                let mut buf = vec![0.0; self.grid.n_total()];
                self.lattice_increment(step, &mut buf);
                engine.forward_into(&buf, out);
            }
        }
    }

    /// Physical-space increment of step `step`.
    pub fn real_increment(&self, step: usize, engine: &mut FftEngine, out: &mut [f64]) {
        debug_assert!(step < self.n_steps);
        match self.kind {
            NoiseKind::Zero => out.fill(0.0),
            NoiseKind::LatticeWhite => self.lattice_increment(step, out),
            NoiseKind::SpectralTruncated => {
                let mut spec = vec![Complex64::new(0.0, 0.0); self.grid.spectral_len()];
                self.spectral_increment(step, engine, &mut spec);
                engine.inverse_into(&spec, out);
            }
        }
    }

    /// Every increment in physical space, `[n_steps, n_total]` row-major.
    pub fn materialize_real(&self) -> Vec<f64> {
        let mut engine = FftEngine::new(self.grid);
        let nt = self.grid.n_total();
        let mut out = vec![0.0; nt * self.n_steps];
        for (step, chunk) in out.chunks_exact_mut(nt).enumerate() {
            self.real_increment(step, &mut engine, chunk);
        }
        out
    }

    fn lattice_increment(&self, step: usize, out: &mut [f64]) {
        let sd = (self.fine_dt / self.grid.cell_volume()).sqrt();
        out.fill(0.0);
        for f in 0..self.stride {
            let mut rng = self.seed.stream((step * self.stride + f) as u64);
            for v in out.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += sd * z;
            }
        }
    }

    fn add_spectral_fine(&self, fine_step: usize, out: &mut [Complex64]) {
        let g = &self.grid;
        let nt = g.n_total() as f64;
        // E|F_k|² = n_total² L^{-d} dt for the FFT of projected lattice white noise.
        let var = nt * nt / g.volume() * self.fine_dt;
        let sd_real = var.sqrt();
        let sd_half = (0.5 * var).sqrt();
        let mut rng = self.seed.stream(fine_step as u64);
        for slot in self.slots.iter() {
            if slot.real {
                let z: f64 = StandardNormal.sample(&mut rng);
                out[slot.flat].re += sd_real * z;
            } else {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                let c = Complex64::new(sd_half * a, sd_half * b);
                out[slot.flat] += c;
                if let Some(p) = slot.partner {
                    out[p] += c.conj();
                }
            }
        }
    }
}

fn spectral_slots(grid: &GridSpec, cutoff: usize) -> Vec<Slot> {
    let mut slots = Vec::new();
    for flat in 0..grid.spectral_len() {
        if max_norm(&grid.mode_of(flat)) > cutoff as u64 {
            continue;
        }
        match grid.stored_conjugate(flat) {
            Some(c) if c == flat => slots.push(Slot {
                flat,
                partner: None,
                real: true,
            }),
            Some(c) if c < flat => {}
            Some(c) => slots.push(Slot {
                flat,
                partner: Some(c),
                real: false,
            }),
            None => slots.push(Slot {
                flat,
                partner: None,
                real: false,
            }),
        }
    }
    slots
}

/// Orthonormal temporal basis `{e_j}` of `L²([0, T])`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemporalBasis {
    /// `e_1 = T^{-1/2}`, `e_j(s) = (2/T)^{1/2} cos((j−1)πs/T)`.
    #[default]
    Cosine,
}

impl TemporalBasis {
    pub fn eval(&self, j: usize, s: f64, horizon: f64) -> f64 {
        match self {
            TemporalBasis::Cosine => {
                if j <= 1 {
                    horizon.sqrt().recip()
                } else {
                    (2.0 / horizon).sqrt() * ((j - 1) as f64 * PI * s / horizon).cos()
                }
            }
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            TemporalBasis::Cosine => "cosine",
        }
    }
}

/// Which scalar Brownian components `W⁽ⁱ⁾` are read off a space-time path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseChannels {
    /// A single channel: the spatial mean of the noise, rescaled to unit
    /// quadratic variation rate.
    #[default]
    ZeroMode,
    /// The first `count` real degrees of freedom of the lowest nonzero
    /// Fourier modes (ordered by `|k|²`, then storage order), each rescaled
    /// to unit rate.
    LowModes { count: usize },
}

impl NoiseChannels {
    pub fn count(&self) -> usize {
        match self {
            NoiseChannels::ZeroMode => 1,
            NoiseChannels::LowModes { count } => *count,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ChannelTap {
    flat: usize,
    imag: bool,
    scale: f64,
}

fn channel_taps(grid: &GridSpec, channels: NoiseChannels, cutoff: Option<usize>) -> Result<Vec<ChannelTap>> {
    let nt = grid.n_total() as f64;
    let base = grid.volume().sqrt() / nt;
    match channels {
        NoiseChannels::ZeroMode => Ok(vec![ChannelTap {
            flat: 0,
            imag: false,
            scale: base,
        }]),
        NoiseChannels::LowModes { count } => {
            let mut cands: Vec<(i64, usize)> = (1..grid.spectral_len())
                .filter(|&f| match grid.stored_conjugate(f) {
                    Some(c) => c >= f,
                    None => true,
                })
                .filter(|&f| cutoff.is_none_or(|n| max_norm(&grid.mode_of(f)) <= n as u64))
                .map(|f| {
                    let m = grid.mode_of(f);
                    (m.iter().map(|k| k * k).sum::<i64>(), f)
                })
                .collect();
            cands.sort_unstable();
            let mut taps = Vec::with_capacity(count);
            for (_, f) in cands {
                if taps.len() == count {
                    break;
                }
                if grid.stored_conjugate(f) == Some(f) {
                    taps.push(ChannelTap {
                        flat: f,
                        imag: false,
                        scale: base,
                    });
                } else {
                    let s = base * std::f64::consts::SQRT_2;
                    taps.push(ChannelTap {
                        flat: f,
                        imag: false,
                        scale: s,
                    });
                    if taps.len() < count {
                        taps.push(ChannelTap {
                            flat: f,
                            imag: true,
                            scale: s,
                        });
                    }
                }
            }
            if taps.len() < count {
                return Err(Error::InvalidParameter(format!(
                    "only {} noise channels are available, {count} requested",
                    taps.len()
                )));
            }
            Ok(taps)
        }
    }
}

/// Streaming accumulator for `ξ_ij ≈ Σ_n e_j(t_{n+1/2}) ΔW⁽ⁱ⁾_n`.
///
/// The basis is tagged at step midpoints, which makes the discrete cosine
/// family exactly orthonormal against i.i.d. increments for `J <= n_steps`.
#[derive(Debug, Clone)]
pub struct GaussianIntegrator {
    basis: TemporalBasis,
    j: usize,
    dt: f64,
    horizon: f64,
    taps: Vec<ChannelTap>,
    acc: Vec<f64>,
}

impl GaussianIntegrator {
    pub fn new(path: &NoisePath, basis: TemporalBasis, j: usize, channels: NoiseChannels) -> Result<Self> {
        if j == 0 {
            return Err(Error::InvalidParameter("J must be >= 1".into()));
        }
        if path.n_steps() == 0 {
            return Err(Error::InvalidParameter(
                "Gaussian integrals need a nonempty path".into(),
            ));
        }
        if j > path.n_steps() {
            return Err(Error::InvalidParameter(format!(
                "J = {j} temporal modes cannot be resolved by {} steps (max J = n_steps)",
                path.n_steps()
            )));
        }
        let cutoff = (path.kind() == NoiseKind::SpectralTruncated).then_some(path.cutoff());
        let taps = channel_taps(path.grid(), channels, cutoff)?;
        Ok(Self {
            basis,
            j,
            dt: path.dt(),
            horizon: path.horizon(),
            acc: vec![0.0; taps.len() * j],
            taps,
        })
    }

    /// Feeds the (unscaled) spectral increment of step `step`.
    pub fn push(&mut self, step: usize, increment: &[Complex64]) {
        let t_mid = (step as f64 + 0.5) * self.dt;
        for (i, tap) in self.taps.iter().enumerate() {
            let c = increment[tap.flat];
            let dw = tap.scale * if tap.imag { c.im } else { c.re };
            for jj in 0..self.j {
                self.acc[i * self.j + jj] += self.basis.eval(jj + 1, t_mid, self.horizon) * dw;
            }
        }
    }

    /// `ξ_ij` flattened as `(i−1)·J + (j−1)`.
    pub fn finish(self) -> Vec<f64> {
        self.acc
    }
}

/// Gaussian integrals of a whole path, length `I·J`.
pub fn gaussian_integrals(
    path: &NoisePath,
    basis: TemporalBasis,
    j: usize,
    channels: NoiseChannels,
) -> Result<Vec<f64>> {
    let mut integ = GaussianIntegrator::new(path, basis, j, channels)?;
    let mut engine = FftEngine::new(*path.grid());
    let mut buf = vec![Complex64::new(0.0, 0.0); path.grid().spectral_len()];
    for step in 0..path.n_steps() {
        path.spectral_increment(step, &mut engine, &mut buf);
        integ.push(step, &buf);
    }
    Ok(integ.finish())
}
