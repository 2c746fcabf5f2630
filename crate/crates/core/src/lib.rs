//! Simulation core for singular stochastic PDEs: pseudo-spectral grids,
//! reproducible noise, Wiener chaos features, renormalised Φ⁴₂ and lattice
//! Φ⁴₃ solvers, and the dataset format shared with downstream consumers.

pub mod chaos;
pub mod config;
pub mod dataset;
pub mod error;
pub mod export;
pub mod grid;
pub mod noise;
pub mod phi42;
pub mod phi43;
pub mod pipeline;
pub mod verify;

pub use chaos::{
    enumerate_indices, hermite, ordering_digest, wick_features, ChaosBasisSpec, MultiIndex, WickBasis,
    WickFeatureVector,
};
pub use config::{ChaosConfig, Equation, InitialCondition, RunConfig};
pub use dataset::{
    read_dataset, read_manifest, write_dataset, DatasetManifest, DatasetSummary, Tensor, TrajectoryRecord,
};
pub use error::{Error, Result};
pub use export::{export_snapshots, ExportFormat, ExportRequest, Slice2d};
pub use grid::{
    dealias_cubic, discrete_laplacian_symbol, forward_fft, inverse_fft, spectral_project, FftEngine, GridSpec,
    RealField, SpectralField, WavenumberTable,
};
pub use noise::{gaussian_integrals, sample_noise_path, NoiseChannels, NoiseKind, NoisePath, SeedSpec, TemporalBasis};
pub use phi42::{run_phi42, Phi42Config, Phi42Trajectory, RenormConstant};
pub use phi43::{compute_c0, compute_c11, phi43_step, run_phi43, Counterterms, Phi43Config, Phi43Trajectory};
pub use pipeline::{counterterms_for, regenerate, simulate, simulate_with};
pub use verify::{run_suite, Check, Suite, SuiteReport};
