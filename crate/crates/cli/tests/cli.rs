use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lrtower(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrtower"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    fs::write(dir.join(name), body).unwrap();
    name.to_string()
}

fn stage(dir: &Path, cmd: &str, cfg: &str, out: &str) -> Output {
    lrtower(&[cmd, "--config", cfg, "--out", out, "--seed", "11"], dir)
}

#[test]
fn fibonacci_points_include_the_origin() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.cfg",
        "generator = fibonacci\nextent = 10000\n",
    );
    let o = stage(dir.path(), "generate", &cfg, "out");
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("out/points.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "x");
    let xs: Vec<f64> = rows[1..].iter().map(|r| r.parse().unwrap()).collect();
    assert!(xs.contains(&0.0));
    assert!(xs.windows(2).all(|w| w[0] < w[1]));
    let meta = fs::read_to_string(dir.path().join("out/points.meta")).unwrap();
    assert!(meta.contains("config_hash=") && meta.contains("schema_version=1"));
}

#[test]
fn lattice_plane_is_a_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.cfg", "generator = lattice2\nextent = 3\n");
    assert_eq!(code(&stage(dir.path(), "generate", &cfg, "g")), 0);
    let csv = fs::read_to_string(dir.path().join("g/points.csv")).unwrap();
    let rows: Vec<(f64, f64)> = csv
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 49);
    assert!(rows
        .iter()
        .all(|(x, y)| x.fract() == 0.0 && y.fract() == 0.0));
}

#[test]
fn pipeline_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.cfg",
        "extent = 30000\nk = 5\nn_max = 2\nn_values = 10, 100, 1000\nanchors = 5\nsamples = 5000\n",
    );
    for out in ["a", "b"] {
        for cmd in ["generate", "tower", "verify", "markov", "deviation"] {
            let o = stage(dir.path(), cmd, &cfg, out);
            assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        }
    }
    let names = [
        "points.csv",
        "points.meta",
        "tower.json",
        "ledger.json",
        "verify.json",
        "markov.json",
        "deviation_s3.csv",
        "deviation_plot_s3.csv",
        "deviation_fit.json",
    ];
    for name in names {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
        let text = String::from_utf8(a).unwrap();
        assert!(text.contains("config_hash"), "{name} lacks the config hash");
        assert!(
            text.contains("schema_version"),
            "{name} lacks the schema version"
        );
    }
    let sweep = fs::read_to_string(dir.path().join("a/deviation_s3.csv")).unwrap();
    assert!(sweep
        .lines()
        .any(|l| l == "N,anchor_x,n_p,freq_hat,dev,n0,n1"));
    let plot = fs::read_to_string(dir.path().join("a/deviation_plot_s3.csv")).unwrap();
    assert!(plot.lines().any(|l| l == "log_N,log_abs_dev"));
    let fit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/deviation_fit.json")).unwrap())
            .unwrap();
    let first = &fit["data"][0];
    for key in ["slope", "d_minus_delta", "ratio_series"] {
        assert!(!first[key].is_null(), "missing {key}");
    }
    let markov: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/markov.json")).unwrap())
            .unwrap();
    assert!(markov["data"]["mixing"]["c_T"].is_number());
    assert!(markov["data"]["mixing"]["delta_T"].is_number());
    assert!(!markov["data"]["speed"].as_array().unwrap().is_empty());

    let o = lrtower(
        &["markov", "--config", &cfg, "--out", "a", "--seed", "12"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let other = fs::read(dir.path().join("a/markov.json")).unwrap();
    assert_ne!(other, fs::read(dir.path().join("b/markov.json")).unwrap());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.cfg", "bogus = 1\n");
    assert_eq!(code(&stage(dir.path(), "generate", &bad, "o")), 2);
    let empty = write_config(dir.path(), "empty.cfg", "n_values =\n");
    assert_eq!(code(&stage(dir.path(), "deviation", &empty, "o")), 2);
    let ok = write_config(dir.path(), "ok.cfg", "extent = 1000\n");
    assert_eq!(code(&stage(dir.path(), "tower", &ok, "fresh")), 2);
    assert_eq!(
        code(&lrtower(
            &["generate", "--config", "missing.cfg"],
            dir.path()
        )),
        2
    );
    assert_eq!(code(&lrtower(&["nonsense"], dir.path())), 2);
}

#[test]
fn exhausted_windows_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.cfg", "extent = 5000\nk = 20\nn_max = 3\n");
    assert_eq!(code(&stage(dir.path(), "generate", &cfg, "o")), 0);
    let o = stage(dir.path(), "tower", &cfg, "o");
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("deepest complete level"));
}

#[test]
fn strict_hypothesis_violation_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.cfg", "extent = 20000\nk = 3\nn_max = 2\n");
    assert_eq!(code(&stage(dir.path(), "generate", &cfg, "o")), 0);
    let o = lrtower(
        &["tower", "--config", &cfg, "--out", "o", "--strict"],
        dir.path(),
    );
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("hypothesis"));
}

#[test]
fn degenerate_lattice_tower_warns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.cfg",
        "generator = lattice1\nextent = 300\ns0 = 1\nk = 3\nn_max = 2\nl_hat = 1.5\nn_values = 10, 20\n",
    );
    assert_eq!(code(&stage(dir.path(), "generate", &cfg, "o")), 0);
    stage(dir.path(), "tower", &cfg, "o");
    let o = stage(dir.path(), "markov", &cfg, "o");
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("undefined"));
}
