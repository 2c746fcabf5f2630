//! Periodic lattice geometry and the Fourier-space machinery shared by both
//! solvers.
//!
//! Conventions, fixed for the whole crate:
//!
//! - real arrays are row-major with the last axis contiguous;
//! - spectra are stored as the half-spectrum of a real-input FFT along the
//!   last axis, i.e. shape `[n, n/2+1]` in 2-d and `[n, n, n/2+1]` in 3-d;
//! - the forward transform is unscaled and the inverse is scaled by
//!   `1 / n_total`, so `inverse(forward(f)) == f` and a constant field `c`
//!   has zero-mode coefficient `c * n_total`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of a periodic cubic lattice `n^dim` on the torus of side `length`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    n: usize,
    length: f64,
}

impl GridSpec {
    pub fn new(dim: usize, n_per_axis: usize, length: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidGrid(format!("dimension must be 2 or 3, got {dim}")));
        }
        if n_per_axis < 4 || n_per_axis % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and >= 4, got {n_per_axis}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "domain length must be positive, got {length}"
            )));
        }
        Ok(Self {
            dim,
            n: n_per_axis,
            length,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_per_axis(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Lattice spacing `ε = L / n`.
    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Cell volume `ε^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Torus volume `L^dim`.
    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    pub fn n_total(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn nyquist(&self) -> usize {
        self.n / 2
    }

    /// Length of the last axis of the half-spectrum.
    pub fn n_half(&self) -> usize {
        self.n / 2 + 1
    }

    pub fn spectral_len(&self) -> usize {
        self.n.pow(self.dim as u32 - 1) * self.n_half()
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.n; self.dim]
    }

    pub fn spectral_shape(&self) -> Vec<usize> {
        let mut s = vec![self.n; self.dim];
        s[self.dim - 1] = self.n_half();
        s
    }

    /// Signed mode vector of a flattened half-spectrum index. Unused trailing
    /// components are zero. The Nyquist index maps to `+n/2`.
    pub fn mode_of(&self, flat: usize) -> [i64; 3] {
        let nh = self.n_half();
        let n = self.n;
        let mut mode = [0i64; 3];
        let last = flat % nh;
        let mut rest = flat / nh;
        mode[self.dim - 1] = last as i64;
        for axis in (0..self.dim - 1).rev() {
            let i = rest % n;
            rest /= n;
            mode[axis] = signed_index(i, n);
        }
        mode
    }

    /// Flattened half-spectrum index of the conjugate mode `-k`, when `-k` is
    /// stored (last-axis index `0` or `n/2`); `None` otherwise.
    pub fn stored_conjugate(&self, flat: usize) -> Option<usize> {
        let nh = self.n_half();
        let n = self.n;
        let last = flat % nh;
        if last != 0 && last != n / 2 {
            return None;
        }
        let mut rest = flat / nh;
        let mut conj = 0usize;
        let mut mul = nh;
        for _ in 0..self.dim - 1 {
            let i = rest % n;
            rest /= n;
            conj += ((n - i) % n) * mul;
            mul *= n;
        }
        Some(conj + last)
    }

    /// Multiplicity of a stored half-spectrum entry in the full spectrum
    /// (1 on the self-conjugate last-axis planes, 2 elsewhere).
    pub fn hermitian_weight(&self, flat: usize) -> f64 {
        let last = flat % self.n_half();
        if last == 0 || last == self.n / 2 {
            1.0
        } else {
            2.0
        }
    }

    /// Largest max-norm mode index kept by the 1/2 rule for cubic products:
    /// the largest `k` with `4k < n`.
    pub fn dealias_cutoff(&self) -> usize {
        (self.n - 1) / 4
    }
}

#[inline]
pub(crate) fn signed_index(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

#[inline]
pub(crate) fn max_norm(mode: &[i64; 3]) -> u64 {
    mode.iter().map(|k| k.unsigned_abs()).max().unwrap_or(0)
}

/// A real scalar field sampled on the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl RealField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_total() {
            return Err(Error::LengthMismatch {
                expected: grid.n_total(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("real field values".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n_total()],
        }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.n_total()],
        }
    }

    /// Samples `f` at the lattice points `x = ε·index`.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let n = grid.n;
        let h = grid.spacing();
        let mut x = vec![0.0; grid.dim];
        let mut values = Vec::with_capacity(grid.n_total());
        for flat in 0..grid.n_total() {
            let mut rest = flat;
            for axis in (0..grid.dim).rev() {
                x[axis] = (rest % n) as f64 * h;
                rest /= n;
            }
            values.push(f(&x));
        }
        Self::new(grid, values)
    }

    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_total());
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Plain grid ℓ² norm `sqrt(Σ f²)`.
    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Spatial variance about the spatial mean.
    pub fn spatial_variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.values.len() as f64
    }

    /// `‖self − other‖₂ / ‖other‖₂`.
    pub fn relative_l2_to(&self, other: &RealField) -> f64 {
        let num: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (num / other.values.iter().map(|b| b * b).sum::<f64>()).sqrt()
    }
}

/// Half-spectrum Fourier coefficients of a real field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.spectral_len()],
        }
    }

    pub fn new(grid: GridSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.spectral_len() {
            return Err(Error::LengthMismatch {
                expected: grid.spectral_len(),
                found: coeffs.len(),
            });
        }
        Ok(Self { grid, coeffs })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient of a mode given as signed integers (last component must be
    /// non-negative since only the half-spectrum is stored).
    pub fn index_of(&self, mode: &[i64]) -> Option<usize> {
        let g = &self.grid;
        if mode.len() != g.dim {
            return None;
        }
        let n = g.n as i64;
        let last = mode[g.dim - 1];
        if last < 0 || last > n / 2 {
            return None;
        }
        let mut flat = 0usize;
        for &k in &mode[..g.dim - 1] {
            if k.abs() > n / 2 {
                return None;
            }
            flat = flat * g.n + k.rem_euclid(n) as usize;
        }
        Some(flat * g.n_half() + last as usize)
    }

    /// `Σ_x f(x)²` recovered from the coefficients (Parseval under the crate
    /// convention: `Σ_x f² = (1/n_total) Σ_k |F_k|²` over the full spectrum).
    pub fn parseval_sum_sq(&self) -> f64 {
        let s: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| self.grid.hermitian_weight(i) * c.norm_sqr())
            .sum();
        s / self.grid.n_total() as f64
    }
}

/// Reusable FFT plans plus scratch space for one grid.
///
/// Plans are shared (`Arc`) and thread-safe; the scratch buffers make the
/// engine itself single-owner, so each worker keeps its own.
pub struct FftEngine {
    grid: GridSpec,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    real_line: Vec<f64>,
    r_scratch: Vec<Complex64>,
    c_scratch: Vec<Complex64>,
    lines: Vec<Complex64>,
    work: Vec<Complex64>,
}

impl std::fmt::Debug for FftEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftEngine").field("grid", &self.grid).finish()
    }
}

impl FftEngine {
    pub fn new(grid: GridSpec) -> Self {
        let n = grid.n;
        let mut rp = RealFftPlanner::<f64>::new();
        let r2c = rp.plan_fft_forward(n);
        let c2r = rp.plan_fft_inverse(n);
        let mut cp = FftPlanner::<f64>::new();
        let fwd = cp.plan_fft_forward(n);
        let inv = cp.plan_fft_inverse(n);
        let r_len = r2c.get_scratch_len().max(c2r.get_scratch_len());
        let c_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Self {
            grid,
            r2c,
            c2r,
            fwd,
            inv,
            real_line: vec![0.0; n],
            r_scratch: vec![Complex64::new(0.0, 0.0); r_len],
            c_scratch: vec![Complex64::new(0.0, 0.0); c_len],
            lines: vec![Complex64::new(0.0, 0.0); grid.spectral_len()],
            work: vec![Complex64::new(0.0, 0.0); grid.spectral_len()],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Unscaled forward transform of raw lattice values into a half-spectrum
    /// buffer.
    pub fn forward_into(&mut self, input: &[f64], out: &mut [Complex64]) {
        let g = self.grid;
        let n = g.n;
        let nh = g.n_half();
        assert_eq!(input.len(), g.n_total());
        assert_eq!(out.len(), g.spectral_len());
        for (line, spec) in input.chunks_exact(n).zip(out.chunks_exact_mut(nh)) {
            self.real_line.copy_from_slice(line);
            self.r2c
                .process_with_scratch(&mut self.real_line, spec, &mut self.r_scratch)
                .expect("real FFT buffer sizes are fixed by the grid");
        }
        for axis in 0..g.dim - 1 {
            self.transform_axis(out, axis, true);
        }
    }

    /// Inverse transform (scaled by `1/n_total`) of a half-spectrum into raw
    /// lattice values.
    pub fn inverse_into(&mut self, input: &[Complex64], out: &mut [f64]) {
        let g = self.grid;
        let n = g.n;
        let nh = g.n_half();
        assert_eq!(input.len(), g.spectral_len());
        assert_eq!(out.len(), g.n_total());
        let mut work = std::mem::take(&mut self.work);
        work.copy_from_slice(input);
        for axis in 0..g.dim - 1 {
            self.transform_axis(&mut work, axis, false);
        }
        let scale = 1.0 / g.n_total() as f64;
        for (spec, line) in work.chunks_exact_mut(nh).zip(out.chunks_exact_mut(n)) {
            spec[0].im = 0.0;
            spec[nh - 1].im = 0.0;
            self.c2r
                .process_with_scratch(spec, line, &mut self.r_scratch)
                .expect("real FFT buffer sizes are fixed by the grid");
            for v in line.iter_mut() {
                *v *= scale;
            }
        }
        self.work = work;
    }

    pub fn forward(&mut self, f: &RealField) -> SpectralField {
        let mut out = SpectralField::zeros(self.grid);
        self.forward_into(&f.values, &mut out.coeffs);
        out
    }

    pub fn inverse(&mut self, f: &SpectralField) -> RealField {
        let mut out = RealField::zeros(self.grid);
        self.inverse_into(&f.coeffs, &mut out.values);
        out
    }

    // Complex transform along one of the leading (full-length) axes of the
    // half-spectrum array, batching all lines through a contiguous buffer.
    fn transform_axis(&mut self, data: &mut [Complex64], axis: usize, forward: bool) {
        let g = self.grid;
        let n = g.n;
        let shape = g.spectral_shape();
        let stride: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let block = n * stride;
        let mut pos = 0;
        for o in 0..outer {
            let base = o * block;
            for i in 0..stride {
                for j in 0..n {
                    self.lines[pos + j] = data[base + j * stride + i];
                }
                pos += n;
            }
        }
        let plan = if forward { &self.fwd } else { &self.inv };
        plan.process_with_scratch(&mut self.lines[..pos], &mut self.c_scratch);
        pos = 0;
        for o in 0..outer {
            let base = o * block;
            for i in 0..stride {
                for j in 0..n {
                    data[base + j * stride + i] = self.lines[pos + j];
                }
                pos += n;
            }
        }
    }
}

/// Forward FFT of a finite field (unscaled; see module docs).
pub fn forward_fft(f: &RealField) -> Result<SpectralField> {
    if !f.is_finite() {
        return Err(Error::NonFinite("forward_fft input".into()));
    }
    Ok(FftEngine::new(f.grid).forward(f))
}

/// Inverse FFT, scaled by `1/n_total`.
pub fn inverse_fft(f: &SpectralField) -> RealField {
    FftEngine::new(f.grid).inverse(f)
}

/// Per-mode symbols of the Laplacian on the half-spectrum.
#[derive(Debug, Clone)]
pub struct WavenumberTable {
    grid: GridSpec,
    modes: Vec<[i64; 3]>,
    continuous: Vec<f64>,
    lattice: Vec<f64>,
}

impl WavenumberTable {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[[i64; 3]] {
        &self.modes
    }

    /// `|2πk/L|²`, the symbol of `−Δ` on the continuum torus.
    pub fn continuous(&self) -> &[f64] {
        &self.continuous
    }

    /// `(4/ε²) Σ_j sin²(k_j ε / 2)`, the symbol of the nearest-neighbour `−Δ_ε`.
    pub fn lattice(&self) -> &[f64] {
        &self.lattice
    }
}

/// Builds the symbol table for every stored half-spectrum index.
pub fn discrete_laplacian_symbol(grid: &GridSpec) -> WavenumberTable {
    let h = grid.spacing();
    let two_pi_over_l = 2.0 * PI / grid.length;
    let n = grid.n as f64;
    let len = grid.spectral_len();
    let mut modes = Vec::with_capacity(len);
    let mut continuous = Vec::with_capacity(len);
    let mut lattice = Vec::with_capacity(len);
    for flat in 0..len {
        let m = grid.mode_of(flat);
        let mut c = 0.0;
        let mut l = 0.0;
        for &k in &m[..grid.dim] {
            let kw = two_pi_over_l * k as f64;
            c += kw * kw;
            // k_j ε / 2 = π m_j / n
            let s = (PI * k as f64 / n).sin();
            l += s * s;
        }
        modes.push(m);
        continuous.push(c);
        lattice.push(4.0 / (h * h) * l);
    }
    WavenumberTable {
        grid: *grid,
        modes,
        continuous,
        lattice,
    }
}

/// Zeroes every coefficient whose max-norm mode index exceeds `cutoff`.
pub(crate) fn project_in_place(grid: &GridSpec, coeffs: &mut [Complex64], cutoff: usize) {
    if cutoff >= grid.nyquist() {
        return;
    }
    for (flat, c) in coeffs.iter_mut().enumerate() {
        if max_norm(&grid.mode_of(flat)) > cutoff as u64 {
            *c = Complex64::new(0.0, 0.0);
        }
    }
}

/// Boolean keep-mask for a max-norm cutoff, aligned with the half-spectrum.
pub(crate) fn cutoff_mask(grid: &GridSpec, cutoff: usize) -> Vec<bool> {
    (0..grid.spectral_len())
        .map(|flat| max_norm(&grid.mode_of(flat)) <= cutoff as u64)
        .collect()
}

/// Spectral Galerkin projection `P_N`: keep modes with max-norm index `<= cutoff`.
pub fn spectral_project(f: &SpectralField, cutoff: usize) -> Result<SpectralField> {
    if cutoff > f.grid.nyquist() {
        return Err(Error::InvalidParameter(format!(
            "cutoff {cutoff} exceeds the Nyquist index {}",
            f.grid.nyquist()
        )));
    }
    let mut out = f.clone();
    project_in_place(&f.grid, &mut out.coeffs, cutoff);
    Ok(out)
}

/// Cubic nonlinearity evaluator with 1/2-rule dealiasing: the input is
/// truncated to the dealias cutoff, cubed pointwise and the product is
/// truncated again.
#[derive(Debug)]
pub struct Dealiaser {
    engine: FftEngine,
    keep: Vec<bool>,
    spec: Vec<Complex64>,
    buf: Vec<f64>,
}

impl Dealiaser {
    pub fn new(grid: GridSpec) -> Self {
        Self {
            engine: FftEngine::new(grid),
            keep: cutoff_mask(&grid, grid.dealias_cutoff()),
            spec: vec![Complex64::new(0.0, 0.0); grid.spectral_len()],
            buf: vec![0.0; grid.n_total()],
        }
    }

    pub fn keep_mask(&self) -> &[bool] {
        &self.keep
    }

    pub fn engine(&mut self) -> &mut FftEngine {
        &mut self.engine
    }

    /// Applies the dealias mask to a spectrum in place.
    pub fn mask(&self, coeffs: &mut [Complex64]) {
        for (c, &k) in coeffs.iter_mut().zip(&self.keep) {
            if !k {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Physical-space values of the dealias-truncated field.
    pub fn truncate(&mut self, values: &[f64], out: &mut [f64]) {
        self.engine.forward_into(values, &mut self.spec);
        let mut spec = std::mem::take(&mut self.spec);
        self.mask(&mut spec);
        self.engine.inverse_into(&spec, out);
        self.spec = spec;
    }

    /// Physical-space values of the truncation of a spectrum.
    pub fn truncate_spectrum(&mut self, coeffs: &[Complex64], out: &mut [f64]) {
        self.spec.copy_from_slice(coeffs);
        let mut spec = std::mem::take(&mut self.spec);
        self.mask(&mut spec);
        self.engine.inverse_into(&spec, out);
        self.spec = spec;
    }

    /// `P[(P f)³]` in physical space.
    pub fn cubic(&mut self, f: &RealField) -> Result<RealField> {
        let mut buf = std::mem::take(&mut self.buf);
        self.truncate(f.values(), &mut buf);
        for v in buf.iter_mut() {
            *v = *v * *v * *v;
        }
        let mut out = vec![0.0; f.grid.n_total()];
        self.truncate(&buf, &mut out);
        self.buf = buf;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dealiased cube".into()));
        }
        Ok(RealField::from_raw(f.grid, out))
    }
}

/// `f³` with 1/2-rule dealiasing before and after the pointwise cube.
pub fn dealias_cubic(f: &RealField) -> Result<RealField> {
    if !f.is_finite() {
        return Err(Error::NonFinite("dealias_cubic input".into()));
    }
    Dealiaser::new(f.grid).cubic(f)
}

/// Nearest-neighbour periodic Laplacian applied in physical space.
pub fn stencil_laplacian(f: &RealField) -> RealField {
    let g = f.grid;
    let n = g.n;
    let h2 = g.spacing() * g.spacing();
    let strides: Vec<usize> = (0..g.dim).map(|a| n.pow((g.dim - 1 - a) as u32)).collect();
    let mut out = vec![0.0; g.n_total()];
    for (flat, o) in out.iter_mut().enumerate() {
        let centre = f.values[flat];
        let mut acc = -2.0 * g.dim as f64 * centre;
        for &s in &strides {
            let i = (flat / s) % n;
            let up = if i + 1 == n { flat + s - n * s } else { flat + s };
            let down = if i == 0 { flat + (n - 1) * s } else { flat - s };
            acc += f.values[up] + f.values[down];
        }
        *o = acc / h2;
    }
    RealField::from_raw(g, out)
}
