//! Fixtures shared by the kernel benchmarks.

use sspde_core::noise::NoiseKind;
use sspde_core::{GridSpec, NoisePath, RealField, SeedSpec};

/// Unit torus with `n` points per axis.
pub fn grid(dim: usize, n: usize) -> GridSpec {
    GridSpec::new(dim, n, 1.0).expect("valid bench grid")
}

/// A smooth non-trivial field.
pub fn smooth_field(grid: GridSpec) -> RealField {
    RealField::from_fn(grid, |x| {
        x.iter()
            .enumerate()
            .map(|(i, &xi)| ((i + 1) as f64 * std::f64::consts::TAU * xi).sin())
            .sum()
    })
    .expect("finite field")
}

pub fn noise(grid: GridSpec, kind: NoiseKind, cutoff: usize, n_steps: usize, dt: f64) -> NoisePath {
    NoisePath::new(SeedSpec::new(1, 0), grid, n_steps, dt, kind, cutoff, 1.0).expect("valid bench noise")
}
