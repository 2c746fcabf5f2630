//! Batch generation: one config, one master seed, trajectories in parallel.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::chaos::WickBasis;
use crate::config::{Equation, RunConfig};
use crate::dataset::{DatasetManifest, TrajectoryRecord};
use crate::error::Result;
use crate::noise::SeedSpec;
use crate::phi42::run_phi42_with;
use crate::phi43::{run_phi43_with, Counterterms};

/// Counterterms of a Φ⁴₃ config (`None` for Φ⁴₂).
pub fn counterterms_for(config: &RunConfig) -> Result<Option<Counterterms>> {
    config.validate()?;
    match config.equation {
        Equation::Phi42 => Ok(None),
        Equation::Phi43 => Counterterms::from_config(config.phi43.as_ref().expect("validated")).map(Some),
    }
}

/// Runs trajectories `0..n_trajectories` on the current rayon pool.
/// `progress` is called with the number of finished trajectories.
pub fn simulate(
    config: &RunConfig,
    master_seed: u64,
    n_trajectories: u64,
    progress: impl Fn(usize) + Sync,
) -> Result<(DatasetManifest, Vec<TrajectoryRecord>)> {
    let counterterms = counterterms_for(config)?;
    simulate_with(config, master_seed, n_trajectories, counterterms, progress)
}

/// [`simulate`] with precomputed counterterms.
pub fn simulate_with(
    config: &RunConfig,
    master_seed: u64,
    n_trajectories: u64,
    counterterms: Option<Counterterms>,
    progress: impl Fn(usize) + Sync,
) -> Result<(DatasetManifest, Vec<TrajectoryRecord>)> {
    let manifest = DatasetManifest::new(config, master_seed, n_trajectories, counterterms)?;
    let basis = WickBasis::new(config.chaos().spec()?)?;
    let done = AtomicUsize::new(0);
    let records = (0..n_trajectories)
        .into_par_iter()
        .map(|index| {
            let seed = SeedSpec::new(master_seed, index);
            let rec = match config.equation {
                Equation::Phi42 => {
                    let cfg = config.phi42.as_ref().expect("validated");
                    TrajectoryRecord::from_phi42(&run_phi42_with(cfg, seed, &basis)?)
                }
                Equation::Phi43 => {
                    let cfg = config.phi43.as_ref().expect("validated");
                    let ct = counterterms.as_ref().expect("computed for phi43");
                    TrajectoryRecord::from_phi43(&run_phi43_with(cfg, seed, ct, &basis)?)
                }
            }?;
            progress(done.fetch_add(1, Ordering::Relaxed) + 1);
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, records))
}

/// Recomputes every record of a dataset from its manifest alone.
pub fn regenerate(manifest: &DatasetManifest) -> Result<Vec<TrajectoryRecord>> {
    let config = manifest.run_config();
    let (_, records) = simulate(&config, manifest.master_seed, manifest.n_trajectories, |_| {})?;
    Ok(records)
}
