use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use herald_cli::{cmd_fit, cmd_homodyne, cmd_simulate, FitArgs};
use herald_core::tagio::read_tags;
use herald_core::EnvelopeKind;

fn herald(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_herald"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_HBT: &str = "tau_ns = 7.2
duration_s = 0.5
pair_rate = 2e5
background_rate_idler = 1e5
efficiency = 0.4
dark_rate = 100
";

const SMALL_HOMODYNE: &str = "tau_ns = 7.2
n_traces = 20000
eta = 0.5
";

#[test]
fn repository_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "conf") {
            herald_cli::load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 4);
}

#[test]
fn zero_rate_gives_empty_channels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "zero.conf",
        "tau_ns = 7.2\nduration_s = 1\npair_rate = 0\nbackground_rate_idler = 0\ndark_rate = 0\n",
    );
    let out = dir.path().join("out");
    let o = herald(&["simulate", "--config", s(&cfg), "--seed", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let streams = read_tags(&out.join("tags.bin")).unwrap();
    assert_eq!(streams.len(), 3);
    assert!(streams.iter().all(|t| t.is_empty()));
    assert!(out.join("manifest.txt").exists());
}

#[test]
fn bad_config_is_exit_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.conf", "tau_ns = 7.2\n# note\nsplit_ratio = 1.5\n");
    let o = herald(&[
        "simulate",
        "--config",
        s(&cfg),
        "--seed",
        "1",
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn missing_and_malformed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = herald(&["hbt", "--tags", s(&dir.path().join("none.bin")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));

    let junk = dir.path().join("junk.bin");
    fs::write(&junk, b"not a tag file at all").unwrap();
    let o = herald(&["hbt", "--tags", s(&junk), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));

    let csv = dir.path().join("bad.csv");
    fs::write(&csv, "t_ns,value,error\n1,2,0.1\n2,oops,0.1\n").unwrap();
    let o = herald(&["fit", "--input", s(&csv), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    let o = herald(&["fit", "--input", s(&csv), "--out", s(&out), "--t0", "soon"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_hbt_geometry_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.conf", SMALL_HBT);
    let out = dir.path().join("o");
    cmd_simulate(&cfg, 3, &out).unwrap();
    let o = herald(&[
        "hbt",
        "--tags",
        s(&out.join("tags.bin")),
        "--out",
        s(&out),
        "--bins",
        "0.3",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn refit_reproduces_embedded_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "h.conf", SMALL_HOMODYNE);
    let out = dir.path().join("run");
    cmd_homodyne(&cfg, 5, &out, false).unwrap();
    let refit = dir.path().join("refit");
    cmd_fit(&FitArgs {
        input: out.join("variance.csv"),
        config: Some(cfg.clone()),
        out: refit.clone(),
        ..FitArgs::default()
    })
    .unwrap();
    assert_eq!(
        fs::read(out.join("fit.csv")).unwrap(),
        fs::read(refit.join("fit.csv")).unwrap()
    );
    assert_eq!(
        fs::read(out.join("fit.txt")).unwrap(),
        fs::read(refit.join("fit.txt")).unwrap()
    );
}

#[test]
fn stored_traces_give_same_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "h.conf", SMALL_HOMODYNE);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cmd_homodyne(&cfg, 9, &a, false).unwrap();
    cmd_homodyne(&cfg, 9, &b, true).unwrap();
    assert!(b.join("traces.bin").exists() && b.join("reference.bin").exists());
    for f in ["variance.csv", "fit.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn vacuum_fit_flags_zero_amplitude() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "v.conf", "tau_ns = 7.2\nn_traces = 20000\neta = 0\n");
    let out = dir.path().join("o");
    let o = herald(&["homodyne", "--config", s(&cfg), "--seed", "2", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let report = fs::read_to_string(out.join("fit.txt")).unwrap();
    assert!(report.contains("consistent with zero"), "{report}");
}

#[test]
fn synthetic_csv_recovers_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("t_ns,variance,error\n");
    for k in -30..=60 {
        let t = k as f64;
        let v = if t >= 0.0 { 1.0 + 0.2 * (-t / 6.5).exp() } else { 1.0 };
        text.push_str(&format!("{t},{v},0.001\n"));
    }
    let csv = write_config(dir.path(), "syn.csv", &text);
    let r = cmd_fit(&FitArgs {
        input: csv,
        out: dir.path().join("o"),
        model: Some(EnvelopeKind::Decay),
        edge_skip_ns: Some(0.0),
        ..FitArgs::default()
    })
    .unwrap();
    assert!(
        (r.tau() - 6.5).abs() < 1e-6 && (r.amplitude() - 0.2).abs() < 1e-6,
        "{r:?}"
    );
}

#[test]
fn swapped_roles_complete() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{SMALL_HBT}herald = idler\nherald_shift_ns = -30\n");
    let cfg = write_config(dir.path(), "sw.conf", &text);
    let out = dir.path().join("o");
    let o = herald(&["simulate", "--config", s(&cfg), "--seed", "4", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let o = herald(&[
        "hbt",
        "--tags",
        s(&out.join("tags.bin")),
        "--config",
        s(&cfg),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("g2_zero = "), "{summary}");
}

/// Manifest lines that do not name a run-specific path.
fn without_paths(manifest: &str) -> String {
    manifest
        .lines()
        .filter(|l| !l.starts_with("out = ") && !l.starts_with("input = "))
        .collect::<Vec<_>>()
        .join("\n")
}

fn assert_same_dirs(a: &Path, b: &Path) {
    let mut names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for n in names {
        let (x, y) = (fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap());
        if n == "manifest.txt" {
            let (x, y) = (String::from_utf8(x).unwrap(), String::from_utf8(y).unwrap());
            assert_eq!(without_paths(&x), without_paths(&y));
        } else {
            assert!(x == y, "{n:?} differs between {} and {}", a.display(), b.display());
        }
    }
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let hbt = write_config(dir.path(), "c.conf", SMALL_HBT);
    let hom = write_config(dir.path(), "h.conf", SMALL_HOMODYNE);
    let mut runs = Vec::new();
    for threads in ["1", "2", "8"] {
        let root = dir.path().join(format!("t{threads}"));
        let (sim, cor, env) = (root.join("sim"), root.join("hbt"), root.join("hom"));
        let tags = sim.join("tags.bin");
        for args in [
            vec![
                "--threads",
                threads,
                "simulate",
                "--config",
                s(&hbt),
                "--seed",
                "6",
                "--out",
                s(&sim),
            ],
            vec![
                "--threads",
                threads,
                "hbt",
                "--tags",
                s(&tags),
                "--config",
                s(&hbt),
                "--out",
                s(&cor),
            ],
            vec![
                "--threads",
                threads,
                "homodyne",
                "--config",
                s(&hom),
                "--seed",
                "6",
                "--out",
                s(&env),
                "--store-traces",
            ],
        ] {
            let o = herald(&args);
            assert_eq!(
                o.status.code(),
                Some(0),
                "{args:?}: {}",
                String::from_utf8_lossy(&o.stderr)
            );
        }
        runs.push(root);
    }
    for r in &runs[1..] {
        for sub in ["sim", "hbt", "hom"] {
            assert_same_dirs(&runs[0].join(sub), &r.join(sub));
        }
    }
}
