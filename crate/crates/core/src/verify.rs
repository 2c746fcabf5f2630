//! Self-check suites run by `sspde verify`.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::chaos::{enumerate_indices, ChaosBasisSpec, WickBasis};
use crate::config::{ChaosConfig, InitialCondition, RunConfig};
use crate::dataset::{read_dataset, write_dataset, Tensor, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::grid::{discrete_laplacian_symbol, GridSpec, RealField, SpectralField};
use crate::noise::{GaussianIntegrator, NoiseChannels, NoiseKind, NoisePath, SeedSpec, TemporalBasis};
use crate::phi42::{solve_direct_renormalized, solve_dpdd, Phi42Config, RenormModel, ShiftSolver};
use crate::phi43::{compute_c0, compute_c11, Counterterms, Phi43Stepper};
use crate::pipeline::{regenerate, simulate};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Chaos,
    Phi42,
    Phi43,
    Io,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Chaos, Suite::Phi42, Suite::Phi43, Suite::Io];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Chaos => "chaos",
            Suite::Phi42 => "phi42",
            Suite::Phi43 => "phi43",
            Suite::Io => "io",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
    /// Machine-readable values computed along the way.
    pub values: Vec<(String, String)>,
}

impl SuiteReport {
    fn new(suite: Suite) -> Self {
        Self {
            suite,
            checks: Vec::new(),
            values: Vec::new(),
        }
    }

    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        });
    }

    fn record(&mut self, name: &str, outcome: Result<(bool, String)>) {
        match outcome {
            Ok((passed, detail)) => self.check(name, passed, detail),
            Err(e) => self.check(name, false, format!("error: {e}")),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed)
    }
}

/// Runs one suite. `config` supplies the equation parameters for the phi42 /
/// phi43 suites (defaults otherwise); `seed` drives the Monte Carlo checks.
pub fn run_suite(suite: Suite, config: Option<&RunConfig>, seed: u64) -> SuiteReport {
    let mut r = SuiteReport::new(suite);
    match suite {
        Suite::Chaos => {
            r.record("count-law", chaos_count_law());
            r.record("orthonormality", chaos_orthonormality(seed, 100_000));
        }
        Suite::Phi42 => {
            let cfg = config.and_then(|c| c.phi42.clone()).unwrap_or_default();
            r.record("renorm-analytic", phi42_renorm(&cfg));
            r.record("shift-linear-exact", phi42_linear(&cfg));
            r.record("dpdd-invariant", phi42_invariant(&cfg, seed));
            let gaps = dpdd_gaps(&cfg, seed, &[4e-4, 2e-4, 1e-4]);
            match gaps {
                Ok(g) => {
                    let detail = format!(
                        "relative gaps at dt = 4e-4, 2e-4, 1e-4: {:.4e}, {:.4e}, {:.4e}",
                        g[0], g[1], g[2]
                    );
                    r.check("dpdd-monotone", g.windows(2).all(|w| w[1] < w[0]), detail.clone());
                    r.check("dpdd-gap<=1e-2", g[2] <= 1e-2, detail);
                    for (dt, v) in [4e-4, 2e-4, 1e-4].iter().zip(&g) {
                        r.values.push((format!("dpdd_gap_dt_{dt:e}"), format!("{v:?}")));
                    }
                }
                Err(e) => r.check("dpdd", false, format!("error: {e}")),
            }
        }
        Suite::Phi43 => {
            r.record("c0-brute-force", phi43_c0());
            r.record("c11-exact-sum", phi43_c11_exact());
            r.record("c11-refinement", phi43_c11_refinement());
            r.record("linear-multiplier", phi43_linear());
            r.record("mass-shift-growth", phi43_mass());
            let cfg = config.and_then(|c| c.phi43.clone()).unwrap_or_default();
            match Counterterms::from_config(&cfg) {
                Ok(ct) => {
                    r.values.push(("c0".into(), format!("{:?}", ct.c0)));
                    r.values.push(("c11".into(), format!("{:?}", ct.c11)));
                    r.values.push(("c12".into(), format!("{:?}", ct.c12)));
                    r.values.push(("mass_shift".into(), format!("{:?}", ct.mass_shift)));
                    r.check(
                        "counterterm-signs",
                        ct.c0 > 0.0 && ct.c11 > 0.0,
                        format!("C0 = {:?}, C11 = {:?}", ct.c0, ct.c11),
                    );
                }
                Err(e) => r.check("counterterms", false, format!("error: {e}")),
            }
        }
        Suite::Io => {
            r.record("tensor-round-trip", io_tensor_round_trip());
            r.record("dataset-round-trip", io_dataset(seed));
        }
    }
    r
}

fn binomial(n: u64, k: u64) -> u128 {
    let mut num: u128 = 1;
    for i in 0..k {
        num = num * (n - i) as u128 / (i + 1) as u128;
    }
    num
}

fn chaos_count_law() -> Result<(bool, String)> {
    let mut cases = 0;
    for i in 1..=12usize {
        for j in 1..=12 / i {
            for k in 0..=6 {
                let n = enumerate_indices(&ChaosBasisSpec::new(i, j, k)?)?.len() as u128;
                let want = binomial((i * j + k) as u64, k as u64);
                if n != want {
                    return Ok((false, format!("I={i} J={j} K={k}: {n} indices, formula {want}")));
                }
                cases += 1;
            }
        }
    }
    Ok((true, format!("{cases} (I, J, K) cases")))
}

/// Second moments of the Wick features over `draws` independent noise paths,
/// `I = 1`, `J = 3`, `K = 3`. Returns (mean matrix, standard errors).
pub fn wick_second_moments(seed: u64, draws: u64) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let grid = GridSpec::new(2, 4, 1.0)?;
    let basis = WickBasis::new(ChaosBasisSpec::new(1, 3, 3)?)?;
    let m = basis.len();
    let mut sum = vec![0.0; m * m];
    let mut sum2 = vec![0.0; m * m];
    let mut feat = vec![0.0; m];
    let mut engine = crate::grid::FftEngine::new(grid);
    let mut incr = vec![num_complex::Complex64::new(0.0, 0.0); grid.spectral_len()];
    for d in 0..draws {
        let path = NoisePath::new(
            SeedSpec::new(seed, d),
            grid,
            12,
            1.0 / 12.0,
            NoiseKind::SpectralTruncated,
            0,
            1.0,
        )?;
        let mut integ = GaussianIntegrator::new(&path, TemporalBasis::Cosine, 3, NoiseChannels::ZeroMode)?;
        for step in 0..path.n_steps() {
            path.spectral_increment(step, &mut engine, &mut incr);
            integ.push(step, &incr);
        }
        basis.eval_into(&integ.finish(), &mut feat)?;
        for a in 0..m {
            for b in a..m {
                let p = feat[a] * feat[b];
                sum[a * m + b] += p;
                sum2[a * m + b] += p * p;
            }
        }
    }
    let n = draws as f64;
    let mut mean = vec![0.0; m * m];
    let mut se = vec![0.0; m * m];
    for a in 0..m {
        for b in a..m {
            let mu = sum[a * m + b] / n;
            let var = (sum2[a * m + b] / n - mu * mu) * n / (n - 1.0);
            mean[a * m + b] = mu;
            se[a * m + b] = (var / n).sqrt();
        }
    }
    Ok((mean, se, m))
}

fn chaos_orthonormality(seed: u64, draws: u64) -> Result<(bool, String)> {
    let (mean, se, m) = wick_second_moments(seed, draws)?;
    let mut bad = Vec::new();
    let mut worst = 0.0f64;
    for a in 0..m {
        for b in a..m {
            let target = if a == b { 1.0 } else { 0.0 };
            let z = (mean[a * m + b] - target).abs() / se[a * m + b];
            worst = worst.max(z);
            if z > 3.0 {
                bad.push((a, b, z));
            }
        }
    }
    let pairs = m * (m + 1) / 2;
    Ok((
        bad.is_empty(),
        format!(
            "{draws} draws, {pairs} pairs, max |z| = {worst:.2}, outside 3 SE: {:?}",
            bad.iter()
                .map(|(a, b, z)| format!("({a},{b}) z={z:.2}"))
                .collect::<Vec<_>>()
        ),
    ))
}

fn phi42_renorm(cfg: &Phi42Config) -> Result<(bool, String)> {
    let grid = cfg.grid()?;
    let model = RenormModel::new(&grid, cfg.cutoff, cfg.sigma);
    let at_zero = model.at(0.0);
    let cuts: Vec<usize> = [4, 8, 16].into_iter().filter(|&c| c <= grid.nyquist()).collect();
    let by_cut: Vec<f64> = cuts
        .iter()
        .map(|&c| RenormModel::new(&grid, c, cfg.sigma).at(cfg.t_end))
        .collect();
    let times = cfg.save_times();
    let a = model.tabulate(&times).a_values;
    let ok = at_zero == 0.0 && by_cut.windows(2).all(|w| w[1] > w[0]) && a.windows(2).all(|w| w[1] > w[0]);
    Ok((ok, format!("a(0) = {at_zero}, a(T) for N = {cuts:?}: {by_cut:.6?}")))
}

fn phi42_linear(cfg: &Phi42Config) -> Result<(bool, String)> {
    let grid = cfg.grid()?;
    let mode = [1i64, 2];
    let u0 = RealField::from_fn(grid, |x| 1e-3 * (2.0 * PI * (x[0] + 2.0 * x[1]) / grid.length()).cos())?;
    let mut solver = ShiftSolver::new(&u0, cfg.dt, false)?;
    let idx = SpectralField::zeros(grid).index_of(&mode).expect("mode on grid");
    let before = solver.state().coeffs()[idx];
    let zero = vec![num_complex::Complex64::new(0.0, 0.0); grid.spectral_len()];
    let n = 100;
    for _ in 0..n {
        solver.step(&zero, 0.0)?;
    }
    let lam = discrete_laplacian_symbol(&grid).continuous()[idx];
    let expect = before * (1.0 + cfg.dt * lam).powi(-n);
    let rel = (solver.state().coeffs()[idx] - expect).norm() / expect.norm();
    Ok((
        rel <= 1e-12,
        format!("mode {mode:?}, {n} steps, relative deviation {rel:.2e}"),
    ))
}

fn phi42_invariant(cfg: &Phi42Config, seed: u64) -> Result<(bool, String)> {
    let mut c = cfg.clone();
    c.t_end = 10.0 * cfg.dt * cfg.n_save as f64;
    c.chaos = ChaosConfig { j: 1, ..cfg.chaos };
    let t = crate::phi42::run_phi42(&c, SeedSpec::new(seed, 0))?;
    let mut worst = 0.0f64;
    for ((u, v), x) in t.u.iter().zip(&t.v).zip(&t.x) {
        for ((a, b), c) in u.values().iter().zip(v.values()).zip(x.values()) {
            worst = worst.max((a - b - c).abs());
        }
    }
    Ok((worst <= 1e-10, format!("max |u − v − X| = {worst:.2e}")))
}

/// Relative L2 distance between the direct solution and `v + X` at `T`, for
/// each step in `dts`. All runs share one Brownian path sampled at the
/// smallest step; every step must be an integer multiple of it.
pub fn dpdd_gaps(cfg: &Phi42Config, seed: u64, dts: &[f64]) -> Result<Vec<f64>> {
    let finest = dts.iter().cloned().fold(f64::INFINITY, f64::min);
    let fine = Phi42Config {
        dt: finest,
        n_save: 1,
        chaos: ChaosConfig { j: 1, ..cfg.chaos },
        ..cfg.clone()
    };
    let fine_path = fine.noise_path(SeedSpec::new(seed, 0))?;
    let u0 = fine.initial.realize(&fine.grid()?, fine_path.seed())?;
    let mut out = Vec::new();
    for &dt in dts {
        let factor = (dt / finest).round() as usize;
        if (factor as f64 * finest - dt).abs() > 1e-9 * dt {
            return Err(Error::InvalidParameter(format!(
                "dt {dt} is not a multiple of {finest}"
            )));
        }
        let c = Phi42Config { dt, ..fine.clone() };
        let path = fine_path.coarsened(factor)?;
        let split = solve_dpdd(&c, &path, &u0)?;
        let direct = solve_direct_renormalized(&c, &path)?;
        out.push(split.u[1].relative_l2_to(&direct[1]));
    }
    Ok(out)
}

fn phi43_c0() -> Result<(bool, String)> {
    let g = GridSpec::new(3, 4, 1.0)?;
    let eps = g.spacing();
    let mut sum = 0.0;
    let mut terms = 0;
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                if a + b + c == 0 {
                    continue;
                }
                let lam: f64 = [a, b, c]
                    .iter()
                    .map(|&m| 4.0 / (eps * eps) * (PI * m as f64 / 4.0).sin().powi(2))
                    .sum();
                sum += 1.0 / (2.0 * lam);
                terms += 1;
            }
        }
    }
    let c0 = compute_c0(&g);
    let rel = (c0 - sum).abs() / sum;
    Ok((rel <= 1e-12, format!("{terms}-term sum, relative deviation {rel:.2e}")))
}

/// `L^{-6} Σ_{k1,k2≠0} 1 / (4 λ1 λ2 (λ1 + λ2 + λ(k1+k2)))`.
pub fn c11_double_sum(grid: &GridSpec) -> f64 {
    let n = grid.n_per_axis();
    let eps = grid.spacing();
    let s2: Vec<f64> = (0..n)
        .map(|m| 4.0 / (eps * eps) * (PI * m as f64 / n as f64).sin().powi(2))
        .collect();
    let modes: Vec<[usize; 3]> = (0..n * n * n).map(|f| [f / (n * n), (f / n) % n, f % n]).collect();
    let lam = |m: &[usize; 3]| s2[m[0]] + s2[m[1]] + s2[m[2]];
    let mut sum = 0.0;
    for k1 in &modes[1..] {
        let l1 = lam(k1);
        for k2 in &modes[1..] {
            let l2 = lam(k2);
            let k3 = [(k1[0] + k2[0]) % n, (k1[1] + k2[1]) % n, (k1[2] + k2[2]) % n];
            sum += 1.0 / (4.0 * l1 * l2 * (l1 + l2 + lam(&k3)));
        }
    }
    sum / grid.volume().powi(2)
}

fn phi43_c11_exact() -> Result<(bool, String)> {
    let g = GridSpec::new(3, 4, 1.0)?;
    let q = compute_c11(&g, 257)?;
    let exact = c11_double_sum(&g);
    let rel = (q - exact).abs() / exact;
    Ok((
        rel <= 1e-8,
        format!("4³: quadrature {q:?}, mode sum {exact:?}, relative {rel:.2e}"),
    ))
}

fn phi43_c11_refinement() -> Result<(bool, String)> {
    let g = GridSpec::new(3, 8, 1.0)?;
    let a = compute_c11(&g, 129)?;
    let b = compute_c11(&g, 257)?;
    let rel = (a - b).abs() / b;
    Ok((
        rel < 0.01 && b > 0.0,
        format!("8³: 129 nodes {a:?}, 257 nodes {b:?}, relative change {rel:.2e}"),
    ))
}

fn phi43_linear() -> Result<(bool, String)> {
    let g = GridSpec::new(3, 8, 1.0)?;
    let dt = 1e-3;
    let phi = RealField::from_fn(g, |x| (2.0 * PI * (x[0] + 3.0 * x[1])).cos())?;
    let mut st = Phi43Stepper::new(&phi, &Counterterms::mass_only(0.0), dt, false)?;
    let idx = SpectralField::zeros(g).index_of(&[1, 3, 0]).expect("mode on grid");
    let before = st.spectrum()[idx];
    let zero = vec![num_complex::Complex64::new(0.0, 0.0); g.spectral_len()];
    let n = 100;
    for _ in 0..n {
        st.step(&zero)?;
    }
    let lam = discrete_laplacian_symbol(&g).lattice()[idx];
    let expect = before * (1.0 + dt * lam).powi(-n);
    let rel = (st.spectrum()[idx] - expect).norm() / expect.norm();
    Ok((
        rel <= 1e-12,
        format!("mode (1,3,0), {n} steps, relative deviation {rel:.2e}"),
    ))
}

fn phi43_mass() -> Result<(bool, String)> {
    let g = GridSpec::new(3, 8, 1.0)?;
    let (dt, m, n) = (1e-3, 10.0, 100);
    let phi = RealField::constant(g, 1e-6);
    let mut st = Phi43Stepper::new(&phi, &Counterterms::mass_only(m), dt, true)?;
    let zero = vec![num_complex::Complex64::new(0.0, 0.0); g.spectral_len()];
    for _ in 0..n {
        st.step(&zero)?;
    }
    let mean = st.field().mean();
    let expect = 1e-6 * (1.0 + dt * m).powi(n);
    let rel = (mean - expect).abs() / expect;
    Ok((
        rel < 1e-9,
        format!("zero mode after {n} steps: {mean:.6e}, (1 + dt m)^n gives {expect:.6e}"),
    ))
}

fn io_tensor_round_trip() -> Result<(bool, String)> {
    let a = Tensor::f32(vec![2, 3], vec![0.1, -2.5, f32::MAX, f32::MIN_POSITIVE, 0.0, -0.0])?;
    let b = Tensor::f64(vec![3], vec![std::f64::consts::E, -1e300, 5e-324])?;
    let ok = [&a, &b].iter().all(|t| {
        Tensor::decode(&t.encode(), std::path::Path::new("mem")).is_ok_and(|back| back.encode() == t.encode())
    });
    Ok((ok, "f32 and f64 tensors".into()))
}

struct ScratchDir(PathBuf);

impl ScratchDir {
    fn new(tag: &str) -> Result<Self> {
        let nanos = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0);
        let p = std::env::temp_dir().join(format!("sspde-verify-{tag}-{}-{nanos}", std::process::id()));
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        Ok(Self(p))
    }
}

impl Drop for ScratchDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn io_dataset(seed: u64) -> Result<(bool, String)> {
    let cfg = RunConfig::phi42(Phi42Config {
        n: 8,
        cutoff: 2,
        t_end: 0.04,
        dt: 1e-2,
        n_save: 2,
        initial: InitialCondition::RandomSmooth {
            amplitude: 0.5,
            max_mode: 1,
        },
        store_noise: true,
        chaos: ChaosConfig {
            j: 2,
            k: 2,
            ..ChaosConfig::default()
        },
        ..Phi42Config::default()
    });
    let dir = ScratchDir::new("io")?;
    let (manifest, records) = simulate(&cfg, seed, 3, |_| {})?;
    let summary = write_dataset(&records, &manifest, &dir.0)?;
    let (back, m2) = read_dataset(&dir.0)?;
    if back != records || m2 != summary.manifest {
        return Ok((false, "read-back differs from written records".into()));
    }
    if regenerate(&m2)? != records {
        return Ok((false, "regeneration from the manifest differs".into()));
    }
    // Flip one payload byte.
    let victim = dir.0.join(&summary.manifest.files[0].path);
    let mut bytes = std::fs::read(&victim).map_err(|e| Error::io(&victim, e))?;
    let last = bytes.len() - 1;
    bytes[last] ^= 0x01;
    std::fs::write(&victim, &bytes).map_err(|e| Error::io(&victim, e))?;
    let tamper = matches!(read_dataset(&dir.0), Err(Error::Checksum { .. }));
    let empty = ScratchDir::new("empty")?;
    let (m0, r0) = simulate(&cfg, seed, 0, |_| {})?;
    write_dataset(&r0, &m0, &empty.0)?;
    let empty_ok = read_dataset(&empty.0)?.0.is_empty()
        && std::fs::read_dir(&empty.0).map_err(|e| Error::io(&empty.0, e))?.count() == 1
        && empty.0.join(MANIFEST_FILE).exists();
    Ok((
        tamper && empty_ok,
        format!(
            "{} files round-tripped and regenerated; tamper rejected: {tamper}; empty dataset ok: {empty_ok}",
            summary.n_files
        ),
    ))
}
