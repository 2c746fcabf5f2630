//! Run configuration. The same TOML schema serves as the input config of a
//! simulation and as the body of a dataset manifest, so a manifest can be fed
//! back in to regenerate its dataset.

use std::f64::consts::PI;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::chaos::ChaosBasisSpec;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, RealField};
use crate::noise::{NoiseChannels, SeedSpec, TemporalBasis, INITIAL_CONDITION_STREAM};
use crate::phi42::Phi42Config;
use crate::phi43::Phi43Config;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equation {
    Phi42,
    Phi43,
}

impl Equation {
    pub fn tag(&self) -> &'static str {
        match self {
            Equation::Phi42 => "phi42",
            Equation::Phi43 => "phi43",
        }
    }
}

/// Initial datum `u₀` / `Φ(0)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialCondition {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// `amplitude · cos(2π k·x / L)`.
    Mode {
        mode: Vec<i64>,
        amplitude: f64,
    },
    /// Per-trajectory random Fourier series over modes with max-norm index
    /// `<= max_mode`, coefficient standard deviation `amplitude / (1 + |k|²)`.
    RandomSmooth {
        amplitude: f64,
        max_mode: usize,
    },
    /// i.i.d. `N(0, ε^{-dim})` per site.
    WhiteNoise,
}

impl InitialCondition {
    pub fn realize(&self, grid: &GridSpec, seed: SeedSpec) -> Result<RealField> {
        let l = grid.length();
        match self {
            InitialCondition::Zero => Ok(RealField::zeros(*grid)),
            InitialCondition::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::Config("constant initial value must be finite".into()));
                }
                Ok(RealField::constant(*grid, *value))
            }
            InitialCondition::Mode { mode, amplitude } => {
                if mode.len() != grid.dim() {
                    return Err(Error::Config(format!(
                        "initial mode has {} components, grid is {}-d",
                        mode.len(),
                        grid.dim()
                    )));
                }
                RealField::from_fn(*grid, |x| {
                    let phase: f64 = mode.iter().zip(x).map(|(k, xi)| *k as f64 * xi).sum();
                    amplitude * (2.0 * PI * phase / l).cos()
                })
            }
            InitialCondition::RandomSmooth { amplitude, max_mode } => {
                let m = *max_mode as i64;
                let mut rng = seed.stream(INITIAL_CONDITION_STREAM);
                let mut terms = Vec::new();
                // Enumerate one representative of each ±k pair.
                let side = 2 * m + 1;
                for flat in 0..side.pow(grid.dim() as u32) {
                    let mut k = vec![0i64; grid.dim()];
                    let mut r = flat;
                    for c in k.iter_mut().rev() {
                        *c = r % side - m;
                        r /= side;
                    }
                    let first_nonzero = k.iter().find(|&&c| c != 0);
                    if !matches!(first_nonzero, Some(&c) if c > 0) {
                        continue;
                    }
                    let k2: i64 = k.iter().map(|c| c * c).sum();
                    let sd = amplitude / (1.0 + k2 as f64);
                    let a: f64 = StandardNormal.sample(&mut rng);
                    let b: f64 = StandardNormal.sample(&mut rng);
                    terms.push((k, sd * a, sd * b));
                }
                let c0: f64 = StandardNormal.sample(&mut rng);
                let mean = amplitude * c0;
                RealField::from_fn(*grid, |x| {
                    let mut v = mean;
                    for (k, a, b) in &terms {
                        let th: f64 = 2.0 * PI / l * k.iter().zip(x).map(|(k, x)| *k as f64 * x).sum::<f64>();
                        v += a * th.cos() + b * th.sin();
                    }
                    v
                })
            }
            InitialCondition::WhiteNoise => {
                let sd = grid.cell_volume().sqrt().recip();
                let mut rng = seed.stream(INITIAL_CONDITION_STREAM);
                let values = (0..grid.n_total())
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        sd * z
                    })
                    .collect();
                RealField::new(*grid, values)
            }
        }
    }
}

/// Chaos feature settings: `I` is implied by the noise channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChaosConfig {
    #[serde(default = "default_j")]
    pub j: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub basis: TemporalBasis,
    #[serde(default)]
    pub channels: NoiseChannels,
}

fn default_j() -> usize {
    4
}

fn default_k() -> usize {
    3
}

impl Default for ChaosConfig {
    fn default() -> Self {
        Self {
            j: default_j(),
            k: default_k(),
            basis: TemporalBasis::Cosine,
            channels: NoiseChannels::ZeroMode,
        }
    }
}

impl ChaosConfig {
    pub fn spec(&self) -> Result<ChaosBasisSpec> {
        ChaosBasisSpec::new(self.channels.count(), self.j, self.k)
    }
}

/// Number of steps `T / dt`, required to be an integer multiple of `n_save`.
pub(crate) fn step_count(t_end: f64, dt: f64, n_save: usize) -> Result<usize> {
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::Config(format!("t_end must be positive, got {t_end}")));
    }
    if !(dt.is_finite() && dt > 0.0 && dt <= t_end) {
        return Err(Error::Config(format!("dt must satisfy 0 < dt <= t_end, got {dt}")));
    }
    if n_save == 0 {
        return Err(Error::Config("n_save must be >= 1".into()));
    }
    let ratio = t_end / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-9 * ratio {
        return Err(Error::Config(format!("t_end / dt = {ratio} is not an integer")));
    }
    let steps = steps as usize;
    if steps % n_save != 0 {
        return Err(Error::Config(format!(
            "n_save = {n_save} does not divide the step count {steps}"
        )));
    }
    Ok(steps)
}

/// A simulation config file / the config part of a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub equation: Equation,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_seed")]
    pub master_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_trajectories: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi42: Option<Phi42Config>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi43: Option<Phi43Config>,
}

impl RunConfig {
    pub fn phi42(cfg: Phi42Config) -> Self {
        Self {
            equation: Equation::Phi42,
            master_seed: None,
            n_trajectories: None,
            phi42: Some(cfg),
            phi43: None,
        }
    }

    pub fn phi43(cfg: Phi43Config) -> Self {
        Self {
            equation: Equation::Phi43,
            master_seed: None,
            n_trajectories: None,
            phi42: None,
            phi43: Some(cfg),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        match (self.equation, &self.phi42, &self.phi43) {
            (Equation::Phi42, Some(c), None) => c.validate().map(|_| ()),
            (Equation::Phi43, None, Some(c)) => c.validate().map(|_| ()),
            (eq, _, _) => Err(Error::Config(format!(
                "equation = \"{}\" requires exactly one [{}] section",
                eq.tag(),
                eq.tag()
            ))),
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        match self.equation {
            Equation::Phi42 => self.phi42.as_ref().expect("validated").grid(),
            Equation::Phi43 => self.phi43.as_ref().expect("validated").grid(),
        }
    }

    pub fn chaos(&self) -> ChaosConfig {
        match self.equation {
            Equation::Phi42 => self.phi42.as_ref().expect("validated").chaos,
            Equation::Phi43 => self.phi43.as_ref().expect("validated").chaos,
        }
    }

    pub fn save_times(&self) -> Result<Vec<f64>> {
        let (t_end, n_save) = match self.equation {
            Equation::Phi42 => {
                let c = self.phi42.as_ref().expect("validated");
                (c.t_end, c.n_save)
            }
            Equation::Phi43 => {
                let c = self.phi43.as_ref().expect("validated");
                (c.t_end, c.n_save)
            }
        };
        Ok(save_times(t_end, n_save))
    }
}

/// Snapshot times `k·T/n_save`, `k = 0..=n_save`.
pub fn save_times(t_end: f64, n_save: usize) -> Vec<f64> {
    (0..=n_save).map(|k| t_end * k as f64 / n_save as f64).collect()
}

// TOML integers are signed 64-bit; seeds above i64::MAX round-trip as strings.
pub(crate) mod seed_repr {
    use super::*;

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if *v <= i64::MAX as u64 {
            s.serialize_i64(*v as i64)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u64, D::Error> {
        super::opt_seed::deserialize(d)?.ok_or_else(|| serde::de::Error::custom("missing seed"))
    }
}

pub(crate) mod opt_seed {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(i64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<u64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) => super::seed_repr::serialize(x, s),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<u64>, D::Error> {
        use serde::de::Error as _;
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Int(i)) => u64::try_from(i).map(Some).map_err(D::Error::custom),
            Some(Repr::Text(t)) => t.parse().map(Some).map_err(D::Error::custom),
        }
    }
}
