use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn villain(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_villain"));
    cmd.args(args).env_remove("VILLAIN_SEED").env_remove("VILLAIN_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_VILLAIN: &str = r#"
experiment = "villain"
seed = 5

[lattice]
n = 4
j = 1
boundary = "zero"

[chain]
beta = [0.7, 1.5]
samples = 300
burn_in = 20
checkpoint_every = 100
"#;

#[test]
fn ranks_reproduce_the_dimension_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ranks");
    let o = villain(&["run", configs().join("ranks.toml").to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = fs::read_to_string(out.join("ranks.csv")).unwrap();
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows, ["type,Omega^(0->1),Omega^(2->1),Omega^(3->2),Omega^(4->3)", "free,80,136,80,16", "zero,1,7,17,15"]);
    // resolved config and stamped outputs
    let resolved = fs::read_to_string(out.join("config.resolved.toml")).unwrap();
    let stamp = resolved.lines().next().unwrap();
    assert!(stamp.starts_with("# villain ") && stamp.contains("config-sha256"));
    assert!(fs::read_to_string(out.join("report.csv")).unwrap().starts_with(stamp));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["verdict"], "pass");
    assert!(stamp.ends_with(json["config_hash"].as_str().unwrap()));
}

#[test]
fn calculus_check_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = villain(&["run", configs().join("calculus-check.toml").to_str().unwrap(), "--out", tmp.path().to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(tmp.path().join("report.csv")).unwrap();
    assert!(report.lines().skip(2).all(|l| l.ends_with(",pass")), "{report}");
}

#[test]
fn same_seed_gives_identical_outputs_for_any_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "v.toml", SMALL_VILLAIN);
    let run = |dir: &str, threads: &str| {
        let out = tmp.path().join(dir);
        let o = villain(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", threads], &[]);
        assert!(matches!(o.status.code(), Some(0 | 2)), "{}", stderr(&o));
        out
    };
    let (a, b, c) = (run("a", "1"), run("b", "1"), run("c", "2"));
    for file in ["report.csv", "samples-b0.csv", "samples-b1.csv"] {
        let fa = fs::read(a.join(file)).unwrap();
        assert_eq!(fa, fs::read(b.join(file)).unwrap(), "{file}");
        assert_eq!(fa, fs::read(c.join(file)).unwrap(), "{file} with two threads");
    }
    // snapshots are named by the config hash and are identical too
    let snaps: Vec<_> = fs::read_dir(&a).unwrap().filter_map(|e| e.ok()).map(|e| e.file_name()).filter(|n| n.to_string_lossy().ends_with(".form")).collect();
    assert_eq!(snaps.len(), 4);
    for s in snaps {
        assert_eq!(fs::read(a.join(&s)).unwrap(), fs::read(c.join(&s)).unwrap());
    }
}

#[test]
fn interrupted_run_resumes_to_the_same_result() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "v.toml", SMALL_VILLAIN);
    let full = tmp.path().join("full");
    let o = villain(&["run", cfg.to_str().unwrap(), "--out", full.to_str().unwrap()], &[]);
    assert!(matches!(o.status.code(), Some(0 | 2)), "{}", stderr(&o));

    let part = tmp.path().join("part");
    let o = villain(&["run", cfg.to_str().unwrap(), "--out", part.to_str().unwrap(), "--stop-after", "150"], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("resume"), "{}", stderr(&o));
    assert!(!part.join("report.csv").exists());
    assert!(part.join("checkpoint-b0.bin").exists());
    // a torn write: rows past the last checkpoint are discarded on resume
    let mut rows = fs::read_to_string(part.join("samples-b1.csv")).unwrap();
    rows.push_str("999,1,2,3\n");
    fs::write(part.join("samples-b1.csv"), rows).unwrap();

    let o = villain(&["resume", part.to_str().unwrap()], &[]);
    assert!(matches!(o.status.code(), Some(0 | 2)), "{}", stderr(&o));
    for file in ["report.csv", "samples-b0.csv", "samples-b1.csv"] {
        assert_eq!(fs::read(full.join(file)).unwrap(), fs::read(part.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn resume_refuses_experiments_without_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    villain(&["run", configs().join("ranks.toml").to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    let o = villain(&["resume", out.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("only `villain`"));
}

#[test]
fn unknown_keys_are_rejected_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL_VILLAIN.replace("samples = 300", "samples = 300\nwarmup = 3");
    let cfg = write_config(tmp.path(), "bad.toml", &text);
    let o = villain(&["run", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("warmup"), "{}", stderr(&o));
}

#[test]
fn exit_codes_follow_the_verdicts() {
    let tmp = tempfile::tempdir().unwrap();
    // no grid point in the range of either bound: nothing is decided
    let cfg = write_config(tmp.path(), "ivg.toml", "experiment = \"ivg-table\"\n[ivg]\nbetas = [5.0]\n");
    let o = villain(&["run", cfg.to_str().unwrap(), "--out", tmp.path().join("i").to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    // tiny loops are far from the asymptotic slope: a genuine failure
    let cfg = write_config(tmp.path(), "green.toml", "experiment = \"green\"\n[green]\nsides = [1, 2]\n");
    let o = villain(&["run", cfg.to_str().unwrap(), "--out", tmp.path().join("g").to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let report = fs::read_to_string(tmp.path().join("g/report.csv")).unwrap();
    assert!(report.contains("two_c_gff") && report.contains(",fail"));
}

#[test]
fn environment_overrides_seed_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("calculus-check.toml");
    let resolved = |dir: &str, args: &[&str], envs: &[(&str, &str)]| {
        let out = tmp.path().join(dir);
        let mut all = vec!["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
        all.extend_from_slice(args);
        let o = villain(&all, envs);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        fs::read_to_string(out.join("config.resolved.toml")).unwrap()
    };
    assert!(resolved("a", &[], &[("VILLAIN_SEED", "77"), ("VILLAIN_THREADS", "2")]).contains("seed = 77"));
    let b = resolved("b", &["--seed", "9"], &[("VILLAIN_SEED", "77")]);
    assert!(b.contains("seed = 9") && !b.contains("seed = 77"));
    let o = villain(&["run", cfg.to_str().unwrap(), "--out", tmp.path().join("c").to_str().unwrap()], &[("VILLAIN_SEED", "x")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn oversized_boxes_fail_before_any_compute() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL_VILLAIN.replace("j = 1", "j = 40") + "\n[limits]\nmax_memory_mb = 64\n";
    let cfg = write_config(tmp.path(), "big.toml", &text);
    let o = villain(&["run", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("box too large"), "{}", stderr(&o));
}

#[test]
fn describe_lists_targets_and_runtime() {
    for (exp, keys) in [
        ("wilson", &["spin_wave", "mcbryan_spencer", "decay_gap"][..]),
        ("free-energy", &["below_finite_size_floor", "asymptotic_bound"][..]),
        ("green", &["c_gff", "loop_energy_slope"][..]),
    ] {
        let o = villain(&["describe", exp], &[]);
        assert_eq!(o.status.code(), Some(0));
        let text = String::from_utf8_lossy(&o.stdout);
        assert!(text.contains("estimated runtime"));
        for k in keys {
            assert!(text.contains(k), "{exp}: {k}");
        }
    }
    let o = villain(&["describe", "nonsense"], &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn chain_experiments_run_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("decouple", "experiment = \"decouple\"\nseed = 3\n[lattice]\nn = 4\nj = 1\nboundary = \"zero\"\n[chain]\nbeta = 1.0\nsamples = 400\n"),
        ("coulomb", "experiment = \"coulomb-sample\"\nseed = 3\n[lattice]\nn = 4\nj = 1\nboundary = \"zero\"\n[chain]\nbeta = 0.5\nsamples = 2000\n"),
        ("free", "experiment = \"free-energy\"\nseed = 3\n[lattice]\nn = 4\nj = 1\nboundary = \"zero\"\n[chain]\nbeta = [1.0, 2.0]\nsamples = 2000\n"),
        ("wilson", "experiment = \"wilson\"\nseed = 3\n[lattice]\nn = 4\nj = 2\nboundary = \"zero\"\n[chain]\nbeta = 4.0\nsamples = 200\n[wilson]\nsizes = [1]\nmargin = 1\n"),
    ];
    for (name, text) in cases {
        let cfg = write_config(tmp.path(), &format!("{name}.toml"), text);
        let out = tmp.path().join(name);
        let o = villain(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
        let code = o.status.code();
        assert!(matches!(code, Some(0 | 2)), "{name}: {code:?} {}", stderr(&o));
        let report = fs::read_to_string(out.join("report.csv")).unwrap();
        assert!(report.lines().count() > 2, "{name}");
        assert!(!report.contains(",fail"), "{name}: {report}");
    }
}
