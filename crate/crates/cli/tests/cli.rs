//! End-to-end checks of the command-line interface.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vaoi(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vaoi"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("experiment.toml");
    let text = format!(
        r#"scheme = "noma"
pbar = 15.0

[[streams]]
lambda = 0.5
r0 = 2.0
weight = 0.5

[[streams]]
lambda = 0.5
r0 = 2.0
weight = 0.5

[channel]
levels = [0.1, 1.0]
pmf = [0.2, 0.8]
{extra}"#
    );
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn solve_cosrp_writes_policy_and_csv_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("out");
    let run = vaoi(
        &["solve-cosrp", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert!(run.status.success(), "stderr: {}", String::from_utf8_lossy(&run.stderr));
    let policy = fs::read_to_string(out.join("policy_noma.txt")).unwrap();
    assert!(policy.starts_with("state_index,gain_1,gain_2,subset_mask,probability"));
    assert!(policy.contains("objective="));
    let csv1 = fs::read_to_string(out.join("solve_cosrp.csv")).unwrap();
    assert!(csv1.lines().next().unwrap().starts_with("# vaoi "));
    assert!(csv1.contains("scheme,pbar,objective,power,theta,iters"));

    // rerun is byte-identical
    let rerun = vaoi(
        &["solve-cosrp", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert!(rerun.status.success());
    let csv2 = fs::read_to_string(out.join("solve_cosrp.csv")).unwrap();
    let policy2 = fs::read_to_string(out.join("policy_noma.txt")).unwrap();
    assert_eq!(csv1, csv2);
    assert_eq!(policy, policy2);
}

#[test]
fn simulate_reproduces_the_solver_within_three_se() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "\n[sim]\nhorizon = 400000\nwarmup = 4000\nseed = 5\nreplications = 4\ntrace = 100\n",
    );
    let out = dir.path().join("out");
    let solved = vaoi(
        &["solve-cosrp", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert!(solved.status.success());
    let policy_path = out.join("policy_noma.txt");
    let footer: Vec<(String, f64)> = fs::read_to_string(&policy_path)
        .unwrap()
        .lines()
        .filter(|l| l.contains('=') && !l.contains(','))
        .map(|l| {
            let (k, v) = l.split_once('=').unwrap();
            (k.to_string(), v.parse::<f64>().unwrap())
        })
        .collect();
    let objective = footer.iter().find(|(k, _)| k == "objective").unwrap().1;

    let sim = vaoi(
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--policy",
            policy_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(sim.status.success(), "stderr: {}", String::from_utf8_lossy(&sim.stderr));
    let csv = fs::read_to_string(out.join("simulate.csv")).unwrap();
    let data = csv.lines().nth(2).unwrap();
    let fields: Vec<f64> = data.split(',').map(|v| v.parse().unwrap()).collect();
    // vaoi_user_1, vaoi_user_2, vaoi_weighted, power, se_vaoi, se_power, ...
    let (weighted, se) = (fields[2], fields[4]);
    assert!(
        (weighted - objective).abs() <= 3.0 * se,
        "simulated {weighted} vs solved {objective} (se {se})"
    );
    // trace exported with the expected columns
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.lines().nth(1).unwrap().starts_with("t,delta_1,delta_2,action_mask,power"));
    assert_eq!(trace.lines().count(), 2 + 100);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "\n[solver]\neps_sigma = 1.0\n");
    let out = dir.path().join("out");
    let run = vaoi(
        &["solve-cosrp", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert!(!run.status.success());
    let stderr = String::from_utf8_lossy(&run.stderr);
    assert!(stderr.contains("eps_sigma"), "stderr: {stderr}");
}

#[test]
fn malformed_policy_reports_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let bad = dir.path().join("bad_policy.txt");
    fs::write(
        &bad,
        "state_index,gain_1,gain_2,subset_mask,probability\n0,0.1,0.1,0,not_a_number\n",
    )
    .unwrap();
    let run = vaoi(
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--policy",
            bad.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(!run.status.success());
    let stderr = String::from_utf8_lossy(&run.stderr);
    assert!(stderr.contains("line 2"), "stderr: {stderr}");
}

#[test]
fn bound_halves_the_objective() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("out");
    let run = vaoi(
        &["bound", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert!(run.status.success());
    let csv = fs::read_to_string(out.join("bound.csv")).unwrap();
    let fields: Vec<&str> = csv.lines().nth(2).unwrap().split(',').collect();
    let v: f64 = fields[2].parse().unwrap();
    let lb: f64 = fields[3].parse().unwrap();
    assert!((lb - v / 2.0).abs() < 1e-12);
}

#[test]
fn sweep_emits_ordered_grid_and_chart() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("out");
    let run = vaoi(
        &[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--param",
            "pbar",
            "--from",
            "8",
            "--to",
            "24",
            "--steps",
            "5",
        ],
        dir.path(),
    );
    assert!(run.status.success(), "stderr: {}", String::from_utf8_lossy(&run.stderr));
    let csv = fs::read_to_string(out.join("sweep_pbar.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 5);
    let objectives: Vec<f64> = csv
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(5).unwrap().parse().unwrap())
        .collect();
    for w in objectives.windows(2) {
        assert!(w[1] <= w[0] + 1e-9);
    }
    assert!(out.join("sweep_pbar.svg").exists());

    // invalid grids are rejected
    let bad = vaoi(
        &[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--param",
            "pbar",
            "--from",
            "10",
            "--to",
            "5",
            "--steps",
            "3",
        ],
        dir.path(),
    );
    assert!(!bad.status.success());
}

#[test]
fn zero_budget_emits_sentinel_with_success() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "").to_str().unwrap().to_string();
    let text = fs::read_to_string(&cfg).unwrap().replace("pbar = 15.0", "pbar = 0.0");
    fs::write(&cfg, text).unwrap();
    let dirp = dir.path();
    let out = dirp.join("out");
    let run = vaoi(&["solve-cosrp", "--config", &cfg, "--out", out.to_str().unwrap()], dirp);
    assert!(run.status.success());
    assert!(String::from_utf8_lossy(&run.stderr).contains("warning"));
    let csv = fs::read_to_string(out.join("solve_cosrp.csv")).unwrap();
    assert!(csv.lines().nth(2).unwrap().contains("inf"));
}

#[test]
fn reproduce_table1_passes_its_tolerances() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let run = vaoi(
        &["reproduce", "--target", "table1", "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert!(run.status.success(), "stderr: {}", String::from_utf8_lossy(&run.stderr));
    let csv = fs::read_to_string(out.join("table1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 5);
    assert!(csv.lines().skip(2).all(|l| l.ends_with("true")));
}

#[test]
fn solve_cmdp_reports_clean_structure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "\n[mdp]\ndelta_max = 8\ngamma = 0.95\n");
    let out = dir.path().join("out");
    let run = vaoi(
        &["solve-cmdp", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert!(run.status.success(), "stderr: {}", String::from_utf8_lossy(&run.stderr));
    let csv = fs::read_to_string(out.join("solve_cmdp.csv")).unwrap();
    let fields: Vec<&str> = csv.lines().nth(2).unwrap().split(',').collect();
    // pbar, gamma, delta_max, theta, vaoi, power, tail_mass, threshold_violations
    assert_eq!(fields[0], "15");
    assert_eq!(fields[7], "0");
    let power: f64 = fields[5].parse().unwrap();
    assert!(power <= 15.0 + 1e-6);
    assert!(out.join("cmdp_policy.txt").exists());
    assert!(out.join("cmdp_values.txt").exists());
}
