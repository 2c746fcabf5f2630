//! On-disk dataset layout.
//!
//! ```text
//! <dest>/manifest.toml
//! <dest>/trajectories/000000/{u,v,x}.wcf   f32 [n_snap, n, n]       (phi42)
//! <dest>/trajectories/000000/a_eps.wcf     f64 [n_snap]             (phi42)
//! <dest>/trajectories/000000/phi.wcf       f32 [n_snap, n, n, n]    (phi43)
//! <dest>/trajectories/000000/xi.wcf        f64 [I, J]
//! <dest>/trajectories/000000/wick.wcf      f64 [n_features]
//! <dest>/trajectories/000000/noise.wcf     f32 [n_steps, n, ...]    (optional)
//! ```
//!
//! Every `.wcf` file is a 32-byte header, `rank` little-endian u64 dims and
//! the little-endian row-major payload:
//!
//! | bytes  | field                                 |
//! |--------|---------------------------------------|
//! | 0..4   | magic `WCF1`                          |
//! | 4..8   | dtype, u32 (1 = f32, 2 = f64)         |
//! | 8..12  | rank, u32                             |
//! | 12..16 | reserved, zero                        |
//! | 16..24 | payload length in bytes, u64          |
//! | 24..32 | reserved, zero                        |

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chaos::{enumerate_indices, ordering_digest, WickFeatureVector};
use crate::config::{seed_repr, Equation, RunConfig};
use crate::error::{Error, Result};
use crate::noise::SeedSpec;
use crate::phi42::{Phi42Config, Phi42Trajectory, RenormConstant};
use crate::phi43::{Counterterms, Phi43Config, Phi43Trajectory};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const MAGIC: [u8; 4] = *b"WCF1";
pub const HEADER_LEN: usize = 32;
const MAX_RANK: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u32 {
        match self {
            DType::F32 => 1,
            DType::F64 => 2,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(DType::F32),
            2 => Some(DType::F64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

/// A dense row-major array as stored in one `.wcf` file.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: TensorData,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let expected: usize = shape.iter().product();
        let found = match &data {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        };
        if expected != found {
            return Err(Error::LengthMismatch { expected, found });
        }
        Ok(Self { shape, data })
    }

    pub fn f32(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        Self::new(shape, TensorData::F32(data))
    }

    pub fn f64(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::new(shape, TensorData::F64(data))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values widened to f64.
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let payload = self.len() * self.dtype().size();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.shape.len() + payload);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&self.dtype().code().to_le_bytes());
        out.extend_from_slice(&(self.shape.len() as u32).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        out.extend_from_slice(&(payload as u64).to_le_bytes());
        out.extend_from_slice(&0u64.to_le_bytes());
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        out
    }

    /// Parses an encoded tensor; `path` is used for diagnostics only.
    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |detail: String| Error::MalformedTensor {
            path: path.to_path_buf(),
            detail,
        };
        if bytes.len() < HEADER_LEN {
            return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
        }
        if bytes[0..4] != MAGIC {
            return Err(bad("bad magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let dtype = DType::from_code(u32_at(4)).ok_or_else(|| bad(format!("unknown dtype code {}", u32_at(4))))?;
        let rank = u32_at(8);
        if rank > MAX_RANK {
            return Err(bad(format!("rank {rank} exceeds {MAX_RANK}")));
        }
        if u32_at(12) != 0 || u64_at(24) != 0 {
            return Err(bad("reserved header bytes are not zero".into()));
        }
        let payload = u64_at(16);
        let dims_end = HEADER_LEN + 8 * rank as usize;
        if bytes.len() < dims_end {
            return Err(bad("truncated dimension block".into()));
        }
        let shape: Vec<usize> = (0..rank as usize)
            .map(|i| u64_at(HEADER_LEN + 8 * i) as usize)
            .collect();
        let implied = shape
            .iter()
            .try_fold(dtype.size() as u64, |acc, &d| acc.checked_mul(d as u64))
            .ok_or_else(|| bad("dimension product overflows".into()))?;
        if implied != payload {
            return Err(bad(format!(
                "header declares {payload} payload bytes, shape implies {implied}"
            )));
        }
        let actual = (bytes.len() - dims_end) as u64;
        if actual != payload {
            return Err(bad(format!(
                "header declares {payload} payload bytes, file holds {actual}"
            )));
        }
        let body = &bytes[dims_end..];
        let data = match dtype {
            DType::F32 => TensorData::F32(
                body.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect(),
            ),
            DType::F64 => TensorData::F64(
                body.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            ),
        };
        Ok(Self { shape, data })
    }
}

pub fn write_tensor(path: &Path, tensor: &Tensor) -> Result<FileEntry> {
    let bytes = tensor.encode();
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(FileEntry {
        path: path.to_string_lossy().into_owned(),
        bytes: bytes.len() as u64,
        crc32: crc32fast::hash(&bytes),
        dtype: tensor.dtype(),
        shape: tensor.shape().iter().map(|&d| d as u64).collect(),
    })
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::decode(&bytes, path)
}

/// One inventory line of the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the dataset root, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub crc32: u32,
    pub dtype: DType,
    pub shape: Vec<u64>,
}

/// Chaos feature layout shared by every trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChaosLayout {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub temporal_basis: String,
    pub n_features: usize,
    /// SHA-256 of the canonical ordering.
    pub digest: String,
    pub ordering: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub equation: Equation,
    #[serde(with = "seed_repr")]
    pub master_seed: u64,
    pub n_trajectories: u64,
    pub times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi42: Option<Phi42Config>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi43: Option<Phi43Config>,
    /// Counterterms used for Φ⁴₃ runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterterms: Option<Counterterms>,
    pub chaos_layout: ChaosLayout,
    #[serde(default)]
    pub files: Vec<FileEntry>,
}

impl DatasetManifest {
    /// Manifest for `n_trajectories` runs of `config` (file inventory empty).
    pub fn new(
        config: &RunConfig,
        master_seed: u64,
        n_trajectories: u64,
        counterterms: Option<Counterterms>,
    ) -> Result<Self> {
        config.validate()?;
        let chaos = config.chaos();
        let spec = chaos.spec()?;
        let ordering = enumerate_indices(&spec)?;
        Ok(Self {
            format_version: FORMAT_VERSION,
            equation: config.equation,
            master_seed,
            n_trajectories,
            times: config.save_times()?,
            phi42: config.phi42.clone(),
            phi43: config.phi43.clone(),
            counterterms,
            chaos_layout: ChaosLayout {
                i: spec.i,
                j: spec.j,
                k: spec.k,
                temporal_basis: chaos.basis.tag().to_string(),
                n_features: ordering.len(),
                digest: ordering_digest(&ordering),
                ordering: ordering.iter().map(|a| a.to_string()).collect(),
            },
            files: Vec::new(),
        })
    }

    /// The config part, usable to rerun the simulation.
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            equation: self.equation,
            master_seed: Some(self.master_seed),
            n_trajectories: Some(self.n_trajectories),
            phi42: self.phi42.clone(),
            phi43: self.phi43.clone(),
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Manifest(e.to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            format_version: Option<u32>,
        }
        let v: Version = toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        match v.format_version {
            Some(FORMAT_VERSION) => {}
            Some(found) => {
                return Err(Error::FormatVersion {
                    found,
                    supported: FORMAT_VERSION,
                })
            }
            None => return Err(Error::Manifest("missing format_version".into())),
        }
        let m: DatasetManifest = toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        m.run_config().validate()?;
        Ok(m)
    }

    fn grid_shape(&self) -> Result<Vec<usize>> {
        Ok(self.run_config().grid()?.shape())
    }

    fn step_count(&self) -> Result<usize> {
        match self.equation {
            Equation::Phi42 => self.phi42.as_ref().expect("validated").validate(),
            Equation::Phi43 => self.phi43.as_ref().expect("validated").validate(),
        }
    }

    fn stores_noise(&self) -> bool {
        match self.equation {
            Equation::Phi42 => self.phi42.as_ref().is_some_and(|c| c.store_noise),
            Equation::Phi43 => self.phi43.as_ref().is_some_and(|c| c.store_noise),
        }
    }

    /// Field names saved per trajectory.
    pub fn field_names(&self) -> &'static [&'static str] {
        match self.equation {
            Equation::Phi42 => &["u", "v", "x"],
            Equation::Phi43 => &["phi"],
        }
    }

    /// Expected (name, dtype, shape) of every file of one trajectory.
    fn expected_files(&self) -> Result<Vec<(&'static str, DType, Vec<usize>)>> {
        let grid = self.grid_shape()?;
        let n_snap = self.times.len();
        let mut out = Vec::new();
        for &name in self.field_names() {
            let mut shape = vec![n_snap];
            shape.extend(&grid);
            out.push((name, DType::F32, shape));
        }
        if self.equation == Equation::Phi42 {
            out.push(("a_eps", DType::F64, vec![n_snap]));
        }
        out.push(("xi", DType::F64, vec![self.chaos_layout.i, self.chaos_layout.j]));
        out.push(("wick", DType::F64, vec![self.chaos_layout.n_features]));
        if self.stores_noise() {
            let mut shape = vec![self.step_count()?];
            shape.extend(&grid);
            out.push(("noise", DType::F32, shape));
        }
        Ok(out)
    }
}

/// Everything stored for one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub trajectory_index: u64,
    pub seed: SeedSpec,
    pub xi: Vec<f64>,
    pub wick_features: WickFeatureVector,
    /// `a(t)` at the saved times (Φ⁴₂ only).
    pub a_eps: Option<RenormConstant>,
    /// Snapshot stacks keyed by field name (`u`, `v`, `x` or `phi`).
    pub snapshots: BTreeMap<String, Tensor>,
    pub noise: Option<Tensor>,
}

fn stack_f32(fields: &[crate::grid::RealField]) -> Result<Tensor> {
    let grid = fields.first().map(|f| f.grid().shape()).unwrap_or_default();
    let mut shape = vec![fields.len()];
    shape.extend(grid);
    let data = fields
        .iter()
        .flat_map(|f| f.values().iter().map(|&v| v as f32))
        .collect();
    Tensor::f32(shape, data)
}

fn noise_tensor(raw: &[f64], grid: &crate::grid::GridSpec) -> Result<Tensor> {
    let mut shape = vec![raw.len() / grid.n_total()];
    shape.extend(grid.shape());
    Tensor::f32(shape, raw.iter().map(|&v| v as f32).collect())
}

impl TrajectoryRecord {
    pub fn from_phi42(t: &Phi42Trajectory) -> Result<Self> {
        let mut snapshots = BTreeMap::new();
        snapshots.insert("u".to_string(), stack_f32(&t.u)?);
        snapshots.insert("v".to_string(), stack_f32(&t.v)?);
        snapshots.insert("x".to_string(), stack_f32(&t.x)?);
        let grid = t.config.grid()?;
        Ok(Self {
            trajectory_index: t.seed.trajectory_index,
            seed: t.seed,
            xi: t.xi.clone(),
            wick_features: t.wick_features.clone(),
            a_eps: Some(t.renorm.clone()),
            snapshots,
            noise: t.noise.as_deref().map(|n| noise_tensor(n, &grid)).transpose()?,
        })
    }

    pub fn from_phi43(t: &Phi43Trajectory) -> Result<Self> {
        let mut snapshots = BTreeMap::new();
        snapshots.insert("phi".to_string(), stack_f32(&t.phi)?);
        let grid = t.config.grid()?;
        Ok(Self {
            trajectory_index: t.seed.trajectory_index,
            seed: t.seed,
            xi: t.xi.clone(),
            wick_features: t.wick_features.clone(),
            a_eps: None,
            snapshots,
            noise: t.noise.as_deref().map(|n| noise_tensor(n, &grid)).transpose()?,
        })
    }

    fn tensors(&self, manifest: &DatasetManifest) -> Result<Vec<(&'static str, Tensor)>> {
        let mut out = Vec::new();
        for &name in manifest.field_names() {
            let t = self
                .snapshots
                .get(name)
                .ok_or_else(|| Error::Manifest(format!("trajectory {} lacks field {name}", self.trajectory_index)))?;
            out.push((name, t.clone()));
        }
        if manifest.equation == Equation::Phi42 {
            let a = self
                .a_eps
                .as_ref()
                .ok_or_else(|| Error::Manifest(format!("trajectory {} lacks a_eps", self.trajectory_index)))?;
            out.push(("a_eps", Tensor::f64(vec![a.a_values.len()], a.a_values.clone())?));
        }
        let layout = &manifest.chaos_layout;
        out.push(("xi", Tensor::f64(vec![layout.i, layout.j], self.xi.clone())?));
        out.push((
            "wick",
            Tensor::f64(vec![self.wick_features.len()], self.wick_features.values.clone())?,
        ));
        if let Some(n) = &self.noise {
            out.push(("noise", n.clone()));
        }
        Ok(out)
    }
}

fn trajectory_dir(index: u64) -> String {
    format!("trajectories/{index:06}")
}

/// Result of a successful write.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub n_files: usize,
    pub total_bytes: u64,
}

/// Writes every record plus `manifest.toml` (with a fresh file inventory).
pub fn write_dataset(
    records: &[TrajectoryRecord],
    manifest: &DatasetManifest,
    destination: &Path,
) -> Result<DatasetSummary> {
    if records.len() as u64 != manifest.n_trajectories {
        return Err(Error::Manifest(format!(
            "manifest declares {} trajectories, {} records given",
            manifest.n_trajectories,
            records.len()
        )));
    }
    let expected = manifest.expected_files()?;
    let mut seen = std::collections::BTreeSet::new();
    for r in records {
        if !seen.insert(r.trajectory_index) {
            return Err(Error::Manifest(format!(
                "duplicate trajectory index {}",
                r.trajectory_index
            )));
        }
        if r.seed != SeedSpec::new(manifest.master_seed, r.trajectory_index) {
            return Err(Error::Manifest(format!(
                "trajectory {} was not generated from master seed {}",
                r.trajectory_index, manifest.master_seed
            )));
        }
        if r.wick_features.digest() != manifest.chaos_layout.digest {
            return Err(Error::Manifest(format!(
                "trajectory {} uses a different chaos ordering",
                r.trajectory_index
            )));
        }
        let tensors = r.tensors(manifest)?;
        for (name, t) in &tensors {
            let (_, dtype, shape) = expected.iter().find(|(n, _, _)| n == name).ok_or_else(|| {
                Error::Manifest(format!("trajectory {} has unexpected array {name}", r.trajectory_index))
            })?;
            if t.dtype() != *dtype || t.shape() != shape.as_slice() {
                return Err(Error::Manifest(format!(
                    "trajectory {} array {name}: {:?} {:?}, manifest expects {dtype:?} {shape:?}",
                    r.trajectory_index,
                    t.dtype(),
                    t.shape()
                )));
            }
        }
        if tensors.len() != expected.len() {
            return Err(Error::Manifest(format!(
                "trajectory {} has {} arrays, manifest expects {}",
                r.trajectory_index,
                tensors.len(),
                expected.len()
            )));
        }
    }

    fs::create_dir_all(destination).map_err(|e| Error::io(destination, e))?;
    let mut out = manifest.clone();
    out.files.clear();
    let mut sorted: Vec<&TrajectoryRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.trajectory_index);
    for r in sorted {
        let rel_dir = trajectory_dir(r.trajectory_index);
        let dir = destination.join(&rel_dir);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (name, t) in r.tensors(manifest)? {
            let file = format!("{name}.wcf");
            let mut entry = write_tensor(&dir.join(&file), &t)?;
            entry.path = format!("{rel_dir}/{file}");
            out.files.push(entry);
        }
    }
    let text = out.to_toml_string()?;
    let mpath = destination.join(MANIFEST_FILE);
    fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;
    Ok(DatasetSummary {
        root: destination.to_path_buf(),
        n_files: out.files.len(),
        total_bytes: out.files.iter().map(|f| f.bytes).sum(),
        manifest: out,
    })
}

pub fn read_manifest(source: &Path) -> Result<DatasetManifest> {
    let mpath = source.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    DatasetManifest::from_toml_str(&text)
}

/// Reads and checks one inventory entry: length, CRC-32, header and the
/// dtype/shape recorded in the manifest.
pub fn read_checked(source: &Path, entry: &FileEntry) -> Result<Tensor> {
    if entry.path.split('/').any(|c| c == ".." || c.is_empty()) {
        return Err(Error::Manifest(format!("refusing file path {}", entry.path)));
    }
    let path = source.join(&entry.path);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if bytes.len() as u64 != entry.bytes {
        return Err(Error::MalformedTensor {
            path,
            detail: format!("manifest declares {} bytes, file holds {}", entry.bytes, bytes.len()),
        });
    }
    let crc = crc32fast::hash(&bytes);
    if crc != entry.crc32 {
        return Err(Error::Checksum {
            path,
            expected: entry.crc32,
            found: crc,
        });
    }
    let t = Tensor::decode(&bytes, &path)?;
    let shape: Vec<u64> = t.shape().iter().map(|&d| d as u64).collect();
    if t.dtype() != entry.dtype || shape != entry.shape {
        return Err(Error::Manifest(format!(
            "{}: file holds {:?} {:?}, manifest says {:?} {:?}",
            entry.path,
            t.dtype(),
            shape,
            entry.dtype,
            entry.shape
        )));
    }
    Ok(t)
}

/// Inverse of [`write_dataset`]; every file is verified before use.
pub fn read_dataset(source: &Path) -> Result<(Vec<TrajectoryRecord>, DatasetManifest)> {
    let manifest = read_manifest(source)?;
    let expected = manifest.expected_files()?;
    let spec = crate::chaos::ChaosBasisSpec::new(
        manifest.chaos_layout.i,
        manifest.chaos_layout.j,
        manifest.chaos_layout.k,
    )?;
    let ordering = enumerate_indices(&spec)?;
    if ordering_digest(&ordering) != manifest.chaos_layout.digest {
        return Err(Error::Manifest("chaos ordering digest does not match I, J, K".into()));
    }

    let mut by_traj: BTreeMap<u64, BTreeMap<String, Tensor>> = BTreeMap::new();
    for entry in &manifest.files {
        let (index, name) = parse_entry_path(&entry.path)?;
        let (_, dtype, shape) = expected
            .iter()
            .find(|(n, _, _)| *n == name)
            .ok_or_else(|| Error::Manifest(format!("unexpected file {}", entry.path)))?;
        let t = read_checked(source, entry)?;
        if t.dtype() != *dtype || t.shape() != shape.as_slice() {
            return Err(Error::Manifest(format!(
                "{}: {:?} {:?} does not match the config ({dtype:?} {shape:?})",
                entry.path,
                t.dtype(),
                t.shape()
            )));
        }
        if by_traj.entry(index).or_default().insert(name.to_string(), t).is_some() {
            return Err(Error::Manifest(format!("duplicate file {}", entry.path)));
        }
    }
    if by_traj.len() as u64 != manifest.n_trajectories {
        return Err(Error::Manifest(format!(
            "manifest declares {} trajectories, inventory covers {}",
            manifest.n_trajectories,
            by_traj.len()
        )));
    }

    let mut records = Vec::with_capacity(by_traj.len());
    for (index, mut files) in by_traj {
        if files.len() != expected.len() {
            return Err(Error::Manifest(format!(
                "trajectory {index} has {} files, expected {}",
                files.len(),
                expected.len()
            )));
        }
        let mut take = |name: &str| files.remove(name).expect("presence checked above");
        let mut snapshots = BTreeMap::new();
        for &name in manifest.field_names() {
            snapshots.insert(name.to_string(), take(name));
        }
        let a_eps = (manifest.equation == Equation::Phi42).then(|| RenormConstant {
            times: manifest.times.clone(),
            a_values: take("a_eps").to_f64(),
        });
        let xi = take("xi").to_f64();
        let wick = take("wick").to_f64();
        let noise = manifest.stores_noise().then(|| take("noise"));
        records.push(TrajectoryRecord {
            trajectory_index: index,
            seed: SeedSpec::new(manifest.master_seed, index),
            xi,
            wick_features: WickFeatureVector {
                basis: spec,
                ordering: ordering.clone(),
                values: wick,
            },
            a_eps,
            snapshots,
            noise,
        });
    }
    Ok((records, manifest))
}

fn parse_entry_path(path: &str) -> Result<(u64, &str)> {
    let bad = || Error::Manifest(format!("unrecognised file path {path}"));
    let mut parts = path.split('/');
    let (Some("trajectories"), Some(idx), Some(file), None) = (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(bad());
    };
    let index = idx.parse().map_err(|_| bad())?;
    let name = file.strip_suffix(".wcf").ok_or_else(bad)?;
    Ok((index, name))
}
