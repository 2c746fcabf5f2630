use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sspde_core::dataset::read_checked;
use sspde_core::export::parse_csv;
use sspde_core::read_manifest;

const PHI42: &str = r#"
equation = "phi42"
master_seed = 7
n_trajectories = 3

[phi42]
n = 16
cutoff = 4
t_end = 0.1
dt = 1e-3
n_save = 4

[phi42.initial]
kind = "random-smooth"
amplitude = 1.0
max_mode = 2
"#;

const PHI43: &str = r#"
equation = "phi43"
master_seed = 3
n_trajectories = 1

[phi43]
n = 8
t_end = 0.01
dt = 1e-3
n_save = 2
"#;

fn sspde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sspde"))
        .args(args)
        .env_remove("SSPDE_THREADS")
        .output()
        .expect("spawn sspde")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, s(config), "--out", s(out)];
    args.extend_from_slice(extra);
    sspde(&args)
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn empty_dataset_writes_only_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", PHI42);
    let out = tmp.path().join("ds");
    let o = simulate("simulate-phi42", &cfg, &out, &["--n-trajectories", "0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files = tree(&out);
    assert_eq!(files.len(), 1);
    assert_eq!(files[0].0, Path::new("manifest.toml"));
    assert_eq!(read_manifest(&out).unwrap().n_trajectories, 0);
}

#[test]
fn simulation_is_reproducible_and_manifest_regenerates() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", PHI42);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    assert!(simulate("simulate-phi42", &cfg, &a, &[]).status.success());
    assert!(simulate("simulate-phi42", &cfg, &b, &["--threads", "1"])
        .status
        .success());
    assert_eq!(tree(&a), tree(&b));

    let o = simulate("simulate-phi42", &a.join("manifest.toml"), &c, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(tree(&a), tree(&c));

    let text = stdout(&o);
    assert_eq!(value(&text, "master_seed"), Some("7"));
    assert_eq!(value(&text, "n_trajectories"), Some("3"));
    assert_eq!(value(&text, "grid"), Some("16x16"));
}

#[test]
fn seed_override_changes_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", PHI42);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(simulate("simulate-phi42", &cfg, &a, &["--n-trajectories", "1"])
        .status
        .success());
    assert!(simulate(
        "simulate-phi42",
        &cfg,
        &b,
        &["--n-trajectories", "1", "--master-seed", "8"]
    )
    .status
    .success());
    assert_ne!(tree(&a), tree(&b));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", PHI42);

    // wrong subcommand for the config
    let o = simulate("simulate-phi43", &cfg, &tmp.path().join("x"), &[]);
    assert_eq!(o.status.code(), Some(2));

    // odd grid
    let odd = write_config(tmp.path(), "odd.toml", &PHI42.replace("n = 16", "n = 15"));
    assert_eq!(
        simulate("simulate-phi42", &odd, &tmp.path().join("y"), &[])
            .status
            .code(),
        Some(2)
    );

    // unknown key
    let typo = write_config(tmp.path(), "typo.toml", &PHI42.replace("cutoff = 4", "cutof = 4"));
    assert_eq!(
        simulate("simulate-phi42", &typo, &tmp.path().join("z"), &[])
            .status
            .code(),
        Some(2)
    );

    // non-empty destination
    let busy = tmp.path().join("busy");
    fs::create_dir(&busy).unwrap();
    fs::write(busy.join("keep"), b"x").unwrap();
    assert_eq!(simulate("simulate-phi42", &cfg, &busy, &[]).status.code(), Some(4));
    assert_eq!(fs::read(busy.join("keep")).unwrap(), b"x");

    // unreadable config
    let o = simulate(
        "simulate-phi42",
        &tmp.path().join("nope.toml"),
        &tmp.path().join("w"),
        &[],
    );
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn verify_io_passes() {
    let o = sspde(&["verify", "--suite", "io"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(value(&text, "io.tensor-round-trip"), Some("PASS"));
    assert_eq!(value(&text, "io.dataset-round-trip"), Some("PASS"));
}

#[test]
fn phi43_header_matches_verify_suite() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", PHI43);
    let out = tmp.path().join("ds");
    let sim = simulate("simulate-phi43", &cfg, &out, &[]);
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    let ver = sspde(&["verify", "--suite", "phi43", "--config", s(&cfg)]);
    assert!(ver.status.success(), "{}", String::from_utf8_lossy(&ver.stderr));
    let (a, b) = (stdout(&sim), stdout(&ver));
    for key in ["c0", "c11", "c12", "mass_shift"] {
        let x = value(&a, key).unwrap();
        let y = value(&b, &format!("phi43.{key}")).unwrap();
        assert_eq!(x, y, "{key}");
    }
    let manifest = read_manifest(&out).unwrap();
    let ct = manifest.counterterms.expect("phi43 manifest records counterterms");
    assert_eq!(format!("{:?}", ct.c0), value(&a, "c0").unwrap());
}

#[test]
fn csv_export_matches_stored_values() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", PHI42);
    let ds = tmp.path().join("ds");
    assert!(simulate("simulate-phi42", &cfg, &ds, &[]).status.success());

    let ex = tmp.path().join("ex");
    let o = sspde(&[
        "export-snapshots",
        s(&ds),
        "--trajectory",
        "2",
        "--times",
        "0.025,0.1",
        "--out",
        s(&ex),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files: Vec<PathBuf> = stdout(&o)
        .lines()
        .filter_map(|l| l.strip_prefix("file="))
        .map(PathBuf::from)
        .collect();
    assert_eq!(files.len(), 2);

    let manifest = read_manifest(&ds).unwrap();
    let entry = manifest
        .files
        .iter()
        .find(|e| e.path == "trajectories/000002/u.wcf")
        .unwrap();
    let stored = read_checked(&ds, entry).unwrap().to_f64();
    let plane = 16 * 16;
    for (file, snap) in files.iter().zip([1usize, 4]) {
        let slice = parse_csv(&fs::read_to_string(file).unwrap()).unwrap();
        assert_eq!((slice.rows, slice.cols), (16, 16));
        let want = &stored[snap * plane..(snap + 1) * plane];
        for (got, &w) in slice.values.iter().zip(want) {
            assert_eq!(got.to_bits(), (w as f32).to_bits());
        }
        let side: toml::Table = fs::read_to_string(file.with_extension("range.toml"))
            .unwrap()
            .parse()
            .unwrap();
        assert_eq!(side["snapshot"].as_integer(), Some(snap as i64));
        assert_eq!(side["field"].as_str(), Some("u"));
    }
}

#[test]
fn pgm_export_of_phi43_plane() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", PHI43);
    let ds = tmp.path().join("ds");
    assert!(simulate("simulate-phi43", &cfg, &ds, &[]).status.success());
    let ex = tmp.path().join("ex");
    let o = sspde(&[
        "export-snapshots",
        s(&ds),
        "--times",
        "0.01",
        "--format",
        "pgm",
        "--z-plane",
        "5",
        "--out",
        s(&ex),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pgm = fs::read(ex.join("traj000000_phi_t002.pgm")).unwrap();
    let header = b"P5\n8 8\n255\n";
    assert_eq!(&pgm[..header.len()], header);
    assert_eq!(pgm.len(), header.len() + 64);
    assert!(pgm[header.len()..].contains(&0) && pgm[header.len()..].contains(&255));

    assert_eq!(
        sspde(&[
            "export-snapshots",
            s(&ds),
            "--times",
            "0.01",
            "--z-plane",
            "8",
            "--out",
            s(&ex)
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        sspde(&["export-snapshots", s(&ds), "--times", "0.003", "--out", s(&ex)])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        sspde(&[
            "export-snapshots",
            s(&ds),
            "--times",
            "0",
            "--field",
            "u",
            "--out",
            s(&ex)
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn constant_field_exports_uniform_pgm() {
    let tmp = tempfile::tempdir().unwrap();
    let text = PHI42.replace(
        "[phi42.initial]\nkind = \"random-smooth\"\namplitude = 1.0\nmax_mode = 2",
        "[phi42.initial]\nkind = \"constant\"\nvalue = 0.5",
    );
    assert!(text.contains("constant"));
    let cfg = write_config(tmp.path(), "c.toml", &text);
    let ds = tmp.path().join("ds");
    assert!(simulate("simulate-phi42", &cfg, &ds, &["--n-trajectories", "1"])
        .status
        .success());
    let ex = tmp.path().join("ex");
    let o = sspde(&[
        "export-snapshots",
        s(&ds),
        "--times",
        "0",
        "--format",
        "pgm",
        "--out",
        s(&ex),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pgm = fs::read(ex.join("traj000000_u_t000.pgm")).unwrap();
    let body = &pgm[b"P5\n16 16\n255\n".len()..];
    assert_eq!(body.len(), 256);
    assert!(body.iter().all(|&b| b == body[0]));
}
