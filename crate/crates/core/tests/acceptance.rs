//! Acceptance criteria 1-10. Runs as a plain binary (no libtest harness) so
//! every criterion prints exactly one PASS/FAIL line; exits non-zero if any
//! criterion fails.
//!
//! All Monte Carlo checks use master seed 1.

use std::cell::OnceCell;
use std::f64::consts::PI;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rayon::prelude::*;

use sspde_core::chaos::{enumerate_indices, ChaosBasisSpec, WickBasis};
use sspde_core::dataset::{read_dataset, write_dataset};
use sspde_core::grid::{GridSpec, RealField};
use sspde_core::noise::{GaussianIntegrator, NoiseChannels, NoiseKind, NoisePath, SeedSpec, TemporalBasis};
use sspde_core::phi42::{
    solve_direct_renormalized, solve_dpdd, stochastic_convolution, wick_cube, wick_square, Phi42Config, RenormModel,
    ShiftSolver,
};
use sspde_core::phi43::{
    compute_c0, compute_c11, compute_c11_with, run_phi43, solve_phi43, Counterterms, Phi43Config, Phi43Stepper,
};
use sspde_core::pipeline::{regenerate, simulate};
use sspde_core::{ChaosConfig, Error, InitialCondition, RunConfig};

const SEED: u64 = 1;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn binomial_by_factorials(n: u32, k: u32) -> u128 {
    let fact = |m: u32| (1..=m as u128).product::<u128>();
    fact(n) / (fact(n - k) * fact(k))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut mismatches = Vec::new();
    let mut cases = 0;
    for i in 1..=12u32 {
        for j in 1..=12 / i {
            for k in 0..=6u32 {
                let got = enumerate_indices(&ChaosBasisSpec::new(i as usize, j as usize, k as usize).unwrap())
                    .unwrap()
                    .len() as u128;
                let want = binomial_by_factorials(i * j + k, k);
                if got != want {
                    mismatches.push(format!("I={i} J={j} K={k}: {got} vs {want}"));
                }
                cases += 1;
            }
        }
    }
    let t = start.elapsed();
    outcome(
        mismatches.is_empty() && t < Duration::from_secs(1),
        format!("{cases} (I,J,K) cases, mismatches {mismatches:?}, runtime {}", secs(t)),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let draws = 100_000u64;
    let grid = GridSpec::new(2, 4, 1.0).unwrap();
    let basis = WickBasis::new(ChaosBasisSpec::new(1, 3, 3).unwrap()).unwrap();
    let m = basis.len();
    let steps = 12;
    let (sum, sum2) = (0..draws)
        .into_par_iter()
        .fold(
            || (vec![0.0; m * m], vec![0.0; m * m]),
            |(mut s, mut s2), d| {
                let path = NoisePath::new(
                    SeedSpec::new(SEED, d),
                    grid,
                    steps,
                    1.0 / steps as f64,
                    NoiseKind::SpectralTruncated,
                    0,
                    1.0,
                )
                .unwrap();
                let mut integ =
                    GaussianIntegrator::new(&path, TemporalBasis::Cosine, 3, NoiseChannels::ZeroMode).unwrap();
                let mut engine = sspde_core::FftEngine::new(grid);
                let mut incr = vec![Complex64::new(0.0, 0.0); grid.spectral_len()];
                for step in 0..steps {
                    path.spectral_increment(step, &mut engine, &mut incr);
                    integ.push(step, &incr);
                }
                let f = basis.eval(&integ.finish()).unwrap().values;
                for a in 0..m {
                    for b in 0..m {
                        let p = f[a] * f[b];
                        s[a * m + b] += p;
                        s2[a * m + b] += p * p;
                    }
                }
                (s, s2)
            },
        )
        .reduce(
            || (vec![0.0; m * m], vec![0.0; m * m]),
            |(mut a, mut a2), (b, b2)| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a2.iter_mut().zip(&b2).for_each(|(x, y)| *x += y);
                (a, a2)
            },
        );
    let n = draws as f64;
    let mut outside = Vec::new();
    let mut worst = 0.0f64;
    for a in 0..m {
        for b in a..m {
            let mean = sum[a * m + b] / n;
            let var = (sum2[a * m + b] / n - mean * mean) * n / (n - 1.0);
            let se = (var / n).sqrt();
            let z = (mean - if a == b { 1.0 } else { 0.0 }) / se;
            worst = worst.max(z.abs());
            if z.abs() > 3.0 {
                outside.push(format!("({a},{b}) z={z:.2}"));
            }
        }
    }
    let t = start.elapsed();
    outcome(
        outside.is_empty() && t < Duration::from_secs(30),
        format!(
            "{} features, {} pairs, {draws} draws, max |z| {worst:.2}, beyond 3 SE {outside:?}, runtime {}",
            m,
            m * (m + 1) / 2,
            secs(t)
        ),
    )
}

/// Per-time sums over trajectories of the spatial means of X², X⋄2, X⋄3.
struct XMoments {
    times: [f64; 3],
    a: [f64; 3],
    sq: [[f64; 2]; 3],
    w2: [[f64; 2]; 3],
    w3: [[f64; 2]; 3],
    n: f64,
    runtime: Duration,
}

fn mean_se(s: [f64; 2], n: f64) -> (f64, f64) {
    let mean = s[0] / n;
    let var = (s[1] / n - mean * mean) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn x_monte_carlo() -> XMoments {
    let start = Instant::now();
    let cfg = Phi42Config {
        n_save: 10,
        chaos: ChaosConfig {
            j: 1,
            ..ChaosConfig::default()
        },
        ..Phi42Config::default()
    };
    assert_eq!((cfg.n, cfg.cutoff, cfg.t_end), (32, 8, 1.0));
    let saves = [1usize, 5, 10];
    let times = [0.1, 0.5, 1.0];
    let model = RenormModel::new(&cfg.grid().unwrap(), cfg.cutoff, cfg.sigma);
    let a = times.map(|t| model.at(t));
    let trajectories = 10_000u64;
    type Acc = [[[f64; 2]; 3]; 3];
    let acc: Acc = (0..trajectories)
        .into_par_iter()
        .fold(
            || [[[0.0; 2]; 3]; 3],
            |mut acc: Acc, d| {
                let path = cfg.noise_path(SeedSpec::new(SEED, d)).unwrap();
                let xs = stochastic_convolution(&cfg, &path).unwrap();
                for (slot, &s) in saves.iter().enumerate() {
                    let x = &xs[s];
                    let sq = x.values().iter().map(|v| v * v).sum::<f64>() / x.values().len() as f64;
                    let w2 = wick_square(x, a[slot]).mean();
                    let w3 = wick_cube(x, a[slot]).unwrap().mean();
                    for (q, v) in [sq, w2, w3].into_iter().enumerate() {
                        acc[q][slot][0] += v;
                        acc[q][slot][1] += v * v;
                    }
                }
                acc
            },
        )
        .reduce(
            || [[[0.0; 2]; 3]; 3],
            |mut a, b| {
                for q in 0..3 {
                    for s in 0..3 {
                        for k in 0..2 {
                            a[q][s][k] += b[q][s][k];
                        }
                    }
                }
                a
            },
        );
    XMoments {
        times,
        a,
        sq: acc[0],
        w2: acc[1],
        w3: acc[2],
        n: trajectories as f64,
        runtime: start.elapsed(),
    }
}

/// `a(t)` written out mode by mode on the 2-d unit torus.
fn renorm_oracle(t: f64, cutoff: i64) -> f64 {
    let mut sum = t;
    for k1 in -cutoff..=cutoff {
        for k2 in -cutoff..=cutoff {
            if k1 == 0 && k2 == 0 {
                continue;
            }
            let lam = 4.0 * PI * PI * (k1 * k1 + k2 * k2) as f64;
            sum += (1.0 - (-2.0 * lam * t).exp()) / (2.0 * lam);
        }
    }
    sum
}

fn criterion_3(mc: &XMoments) -> Outcome {
    let grid = GridSpec::new(2, 32, 1.0).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for s in 0..3 {
        let (mean, se) = mean_se(mc.sq[s], mc.n);
        let rel = (mc.a[s] - mean).abs() / mean;
        let oracle = renorm_oracle(mc.times[s], 8);
        let closed = (mc.a[s] - oracle).abs() / oracle;
        ok &= rel <= 0.02 && closed <= 1e-12;
        parts.push(format!(
            "t={}: a={:.5} MC={mean:.5}±{se:.5} rel {rel:.2e}",
            mc.times[s], mc.a[s]
        ));
    }
    let a0 = RenormModel::new(&grid, 8, 1.0).at(0.0);
    let by_n: Vec<f64> = [4, 8, 16]
        .iter()
        .map(|&n| RenormModel::new(&grid, n, 1.0).at(1.0))
        .collect();
    let increasing = by_n.windows(2).all(|w| w[1] > w[0]);
    ok &= a0 == 0.0 && increasing && mc.runtime < Duration::from_secs(300);
    outcome(
        ok,
        format!(
            "{}; a(0)={a0}; a(1) for N=4,8,16: {:.4}, {:.4}, {:.4}; MC runtime {}",
            parts.join("; "),
            by_n[0],
            by_n[1],
            by_n[2],
            secs(mc.runtime)
        ),
    )
}

fn criterion_4(mc: &XMoments) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for s in 0..3 {
        for (name, acc) in [("X⋄2", mc.w2[s]), ("X⋄3", mc.w3[s])] {
            let (mean, se) = mean_se(acc, mc.n);
            let z = mean / se;
            ok &= z.abs() <= 3.0;
            parts.push(format!("t={} {name} z={z:.2}", mc.times[s]));
        }
    }
    outcome(ok, parts.join(", "))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    // One Brownian path at dt = 1e-4, observed at 4e-4 and 2e-4 by summing
    // increments.
    let fine = Phi42Config {
        dt: 1e-4,
        n_save: 1,
        chaos: ChaosConfig {
            j: 1,
            ..ChaosConfig::default()
        },
        ..Phi42Config::default()
    };
    assert_eq!((fine.cutoff, fine.t_end), (8, 1.0));
    let fine_path = fine.noise_path(SeedSpec::new(SEED, 0)).unwrap();
    let u0 = fine.initial.realize(&fine.grid().unwrap(), fine_path.seed()).unwrap();
    let mut gaps = Vec::new();
    for factor in [4, 2, 1] {
        let cfg = Phi42Config {
            dt: fine.dt * factor as f64,
            ..fine.clone()
        };
        let path = fine_path.coarsened(factor).unwrap();
        let split = solve_dpdd(&cfg, &path, &u0).unwrap();
        let direct = solve_direct_renormalized(&cfg, &path).unwrap();
        let diff: f64 = direct[1]
            .values()
            .iter()
            .zip(split.u[1].values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        gaps.push(diff / direct[1].l2_norm());
    }
    let t = start.elapsed();
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
    outcome(
        gaps[2] <= 1e-2 && monotone && t < Duration::from_secs(120),
        format!(
            "relative gap at dt=4e-4, 2e-4, 1e-4: {:.4e}, {:.4e}, {:.4e} (threshold 1e-2 at dt=1e-4), monotone {monotone}, runtime {}",
            gaps[0],
            gaps[1],
            gaps[2],
            secs(t)
        ),
    )
}

fn max_rel_mode_error(got: &[Complex64], expect: &[Complex64]) -> f64 {
    got.iter()
        .zip(expect)
        .filter(|(_, e)| e.norm() > 1e-200)
        .map(|(g, e)| (g - e).norm() / e.norm())
        .fold(0.0, f64::max)
}

fn lattice_lambda(grid: &GridSpec, flat: usize) -> f64 {
    let eps = grid.spacing();
    grid.mode_of(flat)
        .iter()
        .take(grid.dim())
        .map(|&k| 4.0 / (eps * eps) * (PI * k as f64 / grid.n_per_axis() as f64).sin().powi(2))
        .sum()
}

fn continuous_lambda(grid: &GridSpec, flat: usize) -> f64 {
    let w = 2.0 * PI / grid.length();
    grid.mode_of(flat)
        .iter()
        .take(grid.dim())
        .map(|&k| (w * k as f64).powi(2))
        .sum()
}

fn criterion_6() -> Outcome {
    let n = 50;
    let zero = |g: &GridSpec| vec![Complex64::new(0.0, 0.0); g.spectral_len()];

    let g2 = GridSpec::new(2, 32, 1.0).unwrap();
    let dt2 = 1e-4;
    let u0 = InitialCondition::WhiteNoise
        .realize(&g2, SeedSpec::new(SEED, 0))
        .unwrap();
    let mut shift = ShiftSolver::new(&u0, dt2, false).unwrap();
    let start: Vec<Complex64> = shift.state().coeffs().to_vec();
    for _ in 0..n {
        shift.step(&zero(&g2), 0.0).unwrap();
    }
    let expect: Vec<Complex64> = start
        .iter()
        .enumerate()
        .map(|(f, c)| c * (1.0 + dt2 * continuous_lambda(&g2, f)).powi(-n))
        .collect();
    let e2 = max_rel_mode_error(shift.state().coeffs(), &expect);

    let g3 = GridSpec::new(3, 16, 1.0).unwrap();
    let dt3 = 1e-4;
    let phi0 = InitialCondition::WhiteNoise
        .realize(&g3, SeedSpec::new(SEED, 0))
        .unwrap();
    let mut st = Phi43Stepper::new(&phi0, &Counterterms::mass_only(0.0), dt3, false).unwrap();
    let start: Vec<Complex64> = st.spectrum().to_vec();
    for _ in 0..n {
        st.step(&zero(&g3)).unwrap();
    }
    let expect: Vec<Complex64> = start
        .iter()
        .enumerate()
        .map(|(f, c)| c * (1.0 + dt3 * lattice_lambda(&g3, f)).powi(-n))
        .collect();
    let e3 = max_rel_mode_error(st.spectrum(), &expect);
    outcome(
        e2 <= 1e-12 && e3 <= 1e-12,
        format!("{n} steps, max per-mode relative error: shift solver {e2:.2e} (32²), Φ⁴₃ stepper {e3:.2e} (16³)"),
    )
}

/// `ε³ Σ_x Q_s(x)² p_s(x)` from explicit cosine sums over all sites and modes.
fn dense_sunset(grid: &GridSpec, s: f64) -> f64 {
    let n = grid.n_per_axis() as i64;
    let v = grid.volume();
    let modes: Vec<([i64; 3], f64)> = (0..n * n * n)
        .map(|f| {
            let k = [f / (n * n), (f / n) % n, f % n];
            let eps = grid.spacing();
            let lam: f64 = k
                .iter()
                .map(|&m| 4.0 / (eps * eps) * (PI * m as f64 / n as f64).sin().powi(2))
                .sum();
            (k, lam)
        })
        .collect();
    let mut total = 0.0;
    for x in 0..n * n * n {
        let site = [x / (n * n), (x / n) % n, x % n];
        let (mut p, mut q) = (0.0, 0.0);
        for (k, lam) in &modes {
            let phase = 2.0 * PI * (k[0] * site[0] + k[1] * site[1] + k[2] * site[2]) as f64 / n as f64;
            let heat = (-s * lam).exp() * phase.cos() / v;
            p += heat;
            if *lam > 0.0 {
                q += heat / (2.0 * lam);
            }
        }
        total += q * q * p;
    }
    total * grid.cell_volume()
}

/// `L^{-6} Σ_{k1,k2≠0} 1 / (4 λ1 λ2 (λ1 + λ2 + λ12))`.
fn sunset_mode_sum(grid: &GridSpec) -> f64 {
    let n = grid.n_per_axis();
    let eps = grid.spacing();
    let s2: Vec<f64> = (0..n)
        .map(|m| 4.0 / (eps * eps) * (PI * m as f64 / n as f64).sin().powi(2))
        .collect();
    let lam = |k: [usize; 3]| s2[k[0]] + s2[k[1]] + s2[k[2]];
    let modes: Vec<[usize; 3]> = (1..n * n * n).map(|f| [f / (n * n), (f / n) % n, f % n]).collect();
    let mut sum = 0.0;
    for &a in &modes {
        for &b in &modes {
            let c = [(a[0] + b[0]) % n, (a[1] + b[1]) % n, (a[2] + b[2]) % n];
            sum += 1.0 / (4.0 * lam(a) * lam(b) * (lam(a) + lam(b) + lam(c)));
        }
    }
    sum / grid.volume().powi(2)
}

/// Free lattice field (no cubic, no mass) from zero; time average of the
/// spatial variance after burn-in.
fn free_field_variance(grid: GridSpec, dt: f64, burn_in: f64, horizon: f64, every: f64) -> (f64, f64) {
    let steps = (horizon / dt).round() as usize;
    let burn = (burn_in / dt).round() as usize;
    let stride = (every / dt).round() as usize;
    let path = NoisePath::new(SeedSpec::new(SEED, 0), grid, steps, dt, NoiseKind::LatticeWhite, 0, 1.0).unwrap();
    let mut st = Phi43Stepper::new(&RealField::zeros(grid), &Counterterms::mass_only(0.0), dt, false).unwrap();
    let mut incr = vec![Complex64::new(0.0, 0.0); grid.spectral_len()];
    let mut samples = Vec::new();
    for step in 0..steps {
        path.spectral_increment(step, st.engine(), &mut incr);
        st.step(&incr).unwrap();
        if step + 1 > burn && (step + 1) % stride == 0 {
            samples.push(st.field().spatial_variance());
        }
    }
    // Standard error from 10 batch means.
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let b = samples.len() / 10;
    let batch: Vec<f64> = samples
        .chunks(b)
        .take(10)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    let bv = batch.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / 9.0;
    (mean, (bv / 10.0).sqrt())
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let g4 = GridSpec::new(3, 4, 1.0).unwrap();
    let mut brute = 0.0;
    let mut terms = 0;
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                if a + b + c == 0 {
                    continue;
                }
                let lam: f64 = [a, b, c]
                    .iter()
                    .map(|&m| 64.0 * (PI * m as f64 / 4.0).sin().powi(2))
                    .sum();
                brute += 1.0 / (2.0 * lam);
                terms += 1;
            }
        }
    }
    let c0_rel = (compute_c0(&g4) - brute).abs() / brute;

    let g8 = GridSpec::new(3, 8, 1.0).unwrap();
    let c0_8 = compute_c0(&g8);
    let (mc, mc_se) = free_field_variance(g8, 2e-5, 0.2, 3.0, 0.01);
    let mc_rel = (mc - c0_8).abs() / c0_8;

    let mut refine = Vec::new();
    let mut refine_ok = true;
    for n in [8, 16, 32] {
        let g = GridSpec::new(3, n, 1.0).unwrap();
        let coarse = compute_c11(&g, 129);
        let fine = compute_c11(&g, 257);
        match (coarse, fine) {
            (Ok(c), Ok(f)) => {
                let r = (c - f).abs() / f;
                refine_ok &= r < 0.01;
                refine.push(format!("{n}³ {r:.1e}"));
            }
            (c, f) => {
                refine_ok = false;
                refine.push(format!("{n}³ error {:?} {:?}", c.err(), f.err()));
            }
        }
    }

    let q = compute_c11(&g4, 257).unwrap();
    let dense = compute_c11_with(&g4, 257, |s| dense_sunset(&g4, s)).unwrap();
    let dense_rel = (q - dense).abs() / dense;
    let exact = sunset_mode_sum(&g4);
    let exact_rel = (q - exact).abs() / exact;

    outcome(
        terms == 63 && c0_rel <= 1e-12 && mc_rel <= 0.02 && refine_ok && dense_rel <= 1e-8 && exact_rel <= 1e-8,
        format!(
            "C0(4³) vs {terms}-term sum {c0_rel:.1e}; C0(8³)={c0_8:.5} vs MC {mc:.5}±{mc_se:.5} ({mc_rel:.2e}); \
             C11 129 vs 257 nodes: {}; C11(4³) vs dense kernels {dense_rel:.1e}, vs mode sum {exact_rel:.1e}; runtime {}",
            refine.join(", "),
            secs(start.elapsed())
        ),
    )
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let cfg = Phi43Config::default();
    assert_eq!((cfg.n, cfg.t_end, cfg.dt, cfg.n_save), (32, 1.0, 1e-4, 2));
    assert_eq!(cfg.initial, InitialCondition::WhiteNoise);
    match run_phi43(&cfg, SeedSpec::new(SEED, 0)) {
        Ok(t) => {
            let finite = t.phi.iter().all(|f| f.is_finite());
            let (v_half, v_end) = (t.phi[1].spatial_variance(), t.phi[2].spatial_variance());
            let ratio = v_end / v_half;
            let elapsed = start.elapsed();
            outcome(
                finite && (0.1..=10.0).contains(&ratio) && elapsed < Duration::from_secs(900),
                format!(
                    "mass shift {:.4}, variance t=0 {:.1}, t=0.5 {v_half:.4}, t=1 {v_end:.4}, ratio {ratio:.3}, runtime {}",
                    t.counterterms.mass_shift,
                    t.phi[0].spatial_variance(),
                    secs(elapsed)
                ),
            )
        }
        Err(e) => outcome(false, format!("run failed: {e}")),
    }
}

fn rel_diff(a: &RealField, b: &RealField) -> f64 {
    let d: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    d / b.l2_norm()
}

/// Final states on one fine Brownian path observed at coarser steps
/// `fine_dt · factor`.
fn phi42_finals(fine_dt: f64, factors: &[usize], index: u64) -> Vec<RealField> {
    let fine = Phi42Config {
        dt: fine_dt,
        n_save: 1,
        chaos: ChaosConfig {
            j: 1,
            ..ChaosConfig::default()
        },
        ..Phi42Config::default()
    };
    let path = fine.noise_path(SeedSpec::new(SEED, index)).unwrap();
    let u0 = fine.initial.realize(&fine.grid().unwrap(), path.seed()).unwrap();
    factors
        .iter()
        .map(|&f| {
            let cfg = Phi42Config {
                dt: fine.dt * f as f64,
                ..fine.clone()
            };
            let p = path.coarsened(f).unwrap();
            solve_dpdd(&cfg, &p, &u0).unwrap().u.pop().unwrap()
        })
        .collect()
}

fn phi43_finals(fine_dt: f64, factors: &[usize], index: u64) -> Vec<RealField> {
    let fine = Phi43Config {
        n: 16,
        t_end: 0.1,
        dt: fine_dt,
        n_save: 1,
        chaos: ChaosConfig {
            j: 1,
            ..ChaosConfig::default()
        },
        ..Phi43Config::default()
    };
    let ct = Counterterms::from_config(&fine).unwrap();
    let seed = SeedSpec::new(SEED, index);
    let path = fine.noise_path(seed).unwrap();
    let phi0 = fine.initial.realize(&fine.grid().unwrap(), seed).unwrap();
    factors
        .iter()
        .map(|&f| {
            let cfg = Phi43Config {
                dt: fine.dt * f as f64,
                ..fine.clone()
            };
            let p = path.coarsened(f).unwrap();
            solve_phi43(&cfg, &p, &phi0, &ct).unwrap().pop().unwrap()
        })
        .collect()
}

const CONVERGENCE_PATHS: u64 = 8;

/// Root-mean-square over paths of the successive differences
/// `‖u(h) − u(h/2)‖ / ‖u(h/2)‖`, and their ratios.
fn reduction(finals: impl Fn(u64) -> Vec<RealField> + Sync) -> (Vec<f64>, Vec<f64>) {
    let per_path: Vec<Vec<f64>> = (0..CONVERGENCE_PATHS)
        .into_par_iter()
        .map(|i| finals(i).windows(2).map(|w| rel_diff(&w[0], &w[1]).powi(2)).collect())
        .collect();
    let levels = per_path[0].len();
    let diffs: Vec<f64> = (0..levels)
        .map(|l| (per_path.iter().map(|p| p[l]).sum::<f64>() / CONVERGENCE_PATHS as f64).sqrt())
        .collect();
    let factors = diffs.windows(2).map(|w| w[0] / w[1]).collect();
    (diffs, factors)
}

/// Strong self-convergence (RMS over paths), Φ⁴₂ from dt = 2e-4 and Φ⁴₃
/// from dt = 1e-4, halving down to 1.25e-5.
fn criterion_9() -> Outcome {
    let start = Instant::now();
    let (d2, f2) = reduction(|i| phi42_finals(1.25e-5, &[16, 8, 4, 2, 1], i));
    let (d3, f3) = reduction(|i| phi43_finals(1.25e-5, &[8, 4, 2, 1], i));
    let ok = f2.iter().chain(&f3).all(|&f| f >= 1.8);
    outcome(
        ok,
        format!(
            "Φ⁴₂ 32² T=1: differences over dt 2e-4→1.25e-5 {}, factors {f2:.3?}; \
             Φ⁴₃ 16³ T=0.1: differences over dt 1e-4→1.25e-5 {}, factors {f3:.3?}; runtime {}",
            sci(&d2),
            sci(&d3),
            secs(start.elapsed())
        ),
    )
}

fn files_identical(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names = Vec::new();
    let mut stack = vec![a.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let p = e.map_err(|e| e.to_string())?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                names.push(p.strip_prefix(a).unwrap().to_path_buf());
            }
        }
    }
    for rel in &names {
        let x = std::fs::read(a.join(rel)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(rel)).map_err(|e| format!("{}: {e}", rel.display()))?;
        if x != y {
            return Err(format!("{} differs", rel.display()));
        }
    }
    Ok(names.len())
}

fn dataset_case(config: &RunConfig, n: u64) -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (first, second, third) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    let (manifest, records) = simulate(config, SEED, n, |_| {}).map_err(|e| e.to_string())?;
    write_dataset(&records, &manifest, &first).map_err(|e| e.to_string())?;

    let (back, back_manifest) = read_dataset(&first).map_err(|e| e.to_string())?;
    if back != records {
        return Err("read-back records differ".into());
    }
    write_dataset(&back, &back_manifest, &second).map_err(|e| e.to_string())?;
    let files = files_identical(&first, &second)?;

    let regenerated = regenerate(&back_manifest).map_err(|e| e.to_string())?;
    write_dataset(&regenerated, &back_manifest, &third).map_err(|e| e.to_string())?;
    files_identical(&first, &third).map_err(|e| format!("regeneration: {e}"))?;

    let victim = first.join(&back_manifest.files[back_manifest.files.len() / 2].path);
    let mut bytes = std::fs::read(&victim).map_err(|e| e.to_string())?;
    let mid = bytes.len() - 3;
    bytes[mid] ^= 0x20;
    std::fs::write(&victim, &bytes).map_err(|e| e.to_string())?;
    match read_dataset(&first) {
        Err(Error::Checksum { .. }) => Ok(format!(
            "{files} files identical, regeneration identical, tamper rejected"
        )),
        other => Err(format!("tampered read gave {:?}", other.map(|_| ()))),
    }
}

fn criterion_10() -> Outcome {
    let chaos = ChaosConfig {
        j: 2,
        k: 2,
        ..ChaosConfig::default()
    };
    let phi42 = RunConfig::phi42(Phi42Config {
        n: 16,
        cutoff: 4,
        t_end: 0.05,
        dt: 1e-3,
        n_save: 5,
        initial: InitialCondition::RandomSmooth {
            amplitude: 0.3,
            max_mode: 2,
        },
        store_noise: true,
        chaos,
        ..Phi42Config::default()
    });
    let phi43 = RunConfig::phi43(Phi43Config {
        n: 8,
        t_end: 0.01,
        dt: 1e-4,
        n_save: 2,
        store_noise: true,
        chaos,
        ..Phi43Config::default()
    });
    let r2 = dataset_case(&phi42, 3);
    let r3 = dataset_case(&phi43, 2);
    outcome(
        r2.is_ok() && r3.is_ok(),
        format!("Φ⁴₂: {}; Φ⁴₃: {}", r2.unwrap_or_else(|e| e), r3.unwrap_or_else(|e| e)),
    )
}

fn main() -> ExitCode {
    // `ACCEPTANCE_ONLY=5,9` restricts the run to the listed criteria.
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |id: usize| only.as_ref().is_none_or(|o| o.contains(&id));
    let mut failed = Vec::new();
    let mut ran = 0;
    let mut report = |id: usize, name: &str, run: &mut dyn FnMut() -> Outcome| {
        if !wanted(id) {
            return;
        }
        let o = run();
        ran += 1;
        println!(
            "criterion {id:>2} [{name}]: {} | {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.passed {
            failed.push(id);
        }
    };
    let mc = OnceCell::new();
    report(1, "chaos count law", &mut criterion_1);
    report(2, "Wick orthonormality", &mut criterion_2);
    report(3, "OU / renormalization oracle", &mut || {
        criterion_3(mc.get_or_init(x_monte_carlo))
    });
    report(4, "Wick mean zero", &mut || criterion_4(mc.get_or_init(x_monte_carlo)));
    report(5, "DPDD equivalence", &mut criterion_5);
    report(6, "linear exactness", &mut criterion_6);
    report(7, "Φ⁴₃ counterterms", &mut criterion_7);
    report(8, "Φ⁴₃ stability run", &mut criterion_8);
    report(9, "self-convergence order", &mut criterion_9);
    report(10, "dataset round-trip", &mut criterion_10);
    if failed.is_empty() {
        println!("acceptance: all {ran} criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
