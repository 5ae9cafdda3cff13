use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[atom]
omega_s_mhz = 0.99
omega_p_mhz = 20.7
delta_mhz = -82.0
gamma_e_mhz = 5.225
gamma_ab_mhz = 0.29
od0 = 0.0142

[ensemble]
n_atoms = 40
t_end_us = 2.0

[chirality]
spin = "-4"
b_gauss = 7.29

[run]
mode = "bidirectional"
"#;

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_raman-chiral"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn column(csv: &str, idx: usize) -> Vec<f64> {
    csv.lines().skip(1).map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn simulate_writes_csv_and_reproducible_manifest() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    let o = cli(dir.path(), &["simulate", "--config", "c.toml", "--out", "a.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let a = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert!(a.starts_with("t_us,T_12,T_21\n"));
    assert!(a.ends_with('\n'));
    assert_eq!(a.lines().count(), 1 + 1501);
    let manifest = std::fs::read_to_string(dir.path().join("a.manifest.toml")).unwrap();
    assert!(manifest.contains("wall_time_s"));
    assert!(manifest.contains("[[manifest.effective]]"));

    let o = cli(dir.path(), &["simulate", "--config", "a.manifest.toml", "--out", "b.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let b = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn empty_array_is_transparent() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), SMALL.replace("n_atoms = 40", "n_atoms = 0")).unwrap();
    let o = cli(dir.path(), &["simulate", "--config", "c.toml", "--out", "n0.csv", "--mode", "dynamics"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("n0.csv")).unwrap();
    assert!(column(&csv, 1).iter().chain(column(&csv, 2).iter()).all(|&t| t == 1.0));
}

#[test]
fn scan_then_fit_recovers_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SMALL.replace("mode = \"bidirectional\"", "scan_start_mhz = -3.0\nscan_end_mhz = 3.0\nscan_points = 601");
    let cfg = cfg.replace("gamma_ab_mhz = 0.29", "gamma_ab_mhz = 0.47").replace("n_atoms = 40", "n_atoms = 1420");
    std::fs::write(dir.path().join("c.toml"), &cfg).unwrap();
    let o = cli(dir.path(), &["scan", "--config", "c.toml", "--out", "s.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let scan = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert!(scan.starts_with("delta_MHz,T_ss_12,T_ss_21\n"));

    let mut input = String::from("delta_MHz,T\n");
    for l in scan.lines().skip(1) {
        let f: Vec<&str> = l.split(',').collect();
        input.push_str(&format!("{},{}\n", f[0], f[1]));
    }
    std::fs::write(dir.path().join("in.csv"), input).unwrap();
    let o = cli(dir.path(), &["fit", "--config", "c.toml", "--input", "in.csv", "--out", "fit.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fit = std::fs::read_to_string(dir.path().join("fit.csv")).unwrap();
    assert!(fit.starts_with("parameter,value,std_error\n"));
    let value = |name: &str| -> f64 {
        let line = fit.lines().find(|l| l.starts_with(name)).unwrap();
        line.split(',').nth(1).unwrap().parse().unwrap()
    };
    assert!((value("gamma_ab_MHz") - 0.47).abs() < 1e-4, "{fit}");
    assert!((value("delta_MHz") + 82.0).abs() < 1e-2, "{fit}");
    assert!(value("resonance_MHz").abs() < 1e-4, "{fit}");
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("missing.toml"), SMALL.replace("gamma_e_mhz = 5.225\n", "")).unwrap();
    let o = cli(dir.path(), &["simulate", "--config", "missing.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("atom.gamma_e_mhz"), "{}", stderr(&o));

    std::fs::write(dir.path().join("syntax.toml"), "[atom]\nomega_s_mhz = = 1\n").unwrap();
    let o = cli(dir.path(), &["simulate", "--config", "syntax.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    let o = cli(dir.path(), &["simulate", "--config", "nowhere.toml"]);
    assert_eq!(o.status.code(), Some(2));

    let o = cli(dir.path(), &["preset", "fig9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("fig9"));

    let o = cli(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SMALL.replace("t_end_us = 2.0", "t_end_us = 2.0\nrtol = 1e-300\natol = 1e-300");
    std::fs::write(dir.path().join("c.toml"), cfg).unwrap();
    let o = cli(dir.path(), &["simulate", "--config", "c.toml", "--out", "x.csv"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("atom 0"));
}

#[test]
fn preset_listing_and_specscan() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(dir.path(), &["preset", "--list"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 7);

    let o = cli(dir.path(), &["preset", "fig2b-dynamics", "--emit-config"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("n_atoms = 1420"));

    let o = cli(dir.path(), &["preset", "specscan-7G", "--out", "p"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = std::fs::read_to_string(dir.path().join("p/specscan-7G.summary.toml")).unwrap();
    let sep: f64 = summary
        .lines()
        .find(|l| l.starts_with("separation_mhz"))
        .and_then(|l| l.split('=').nth(1))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!((sep - 35.7).abs() < 0.1, "{summary}");
    assert!(dir.path().join("p/specscan-7G-spin+4.manifest.toml").exists());
}
