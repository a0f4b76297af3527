use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use instadep_cli::ExperimentConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_instadep"))
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let out = dir.join("out");
    let text = format!("output_dir = {:?}\n{body}", out.display().to_string());
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run(config: &Path) -> Output {
    bin().arg("run").arg(config).output().unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

const SMALL_TRAIN: &str = r#"
[train]
epochs = 2
env_steps = 30
rollouts = 2
rollout_k = 2
q_updates = 5
warmup_steps = 50
eval_episodes = 3
"#;

const CARTPOLE_GRID: &str = r#"
[q_grid]
bounds = [[-2.4, 2.4], [-3.0, 3.0], [-0.21, 0.21], [-3.5, 3.5]]
n = 3
"#;

#[test]
fn shipped_configs_validate() {
    let mut n = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let out = bin().arg("validate").arg(&path).output().unwrap();
        assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        n += 1;
    }
    assert!(n >= 5);
}

#[test]
fn unknown_key_is_a_validation_error_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "experiment = \"theory_report\"\nseeds = [0]\n\n[theory]\nn_mc = 10\nnmc = 3\n");
    let out = bin().arg("validate").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 7") && err.contains("nmc"), "{err}");
}

#[test]
fn missing_block_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        dir.path(),
        "experiment = \"reward_families\"\nseeds = [0]\n[env]\nkind = \"cartpole_lite\"\n",
    );
    let out = run(&path);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("q_grid"));
}

#[test]
fn runtime_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("out");
    fs::write(&blocker, "not a directory").unwrap();
    let path = write_config(dir.path(), "experiment = \"theory_report\"\nseeds = [0]\n[theory]\nn_mc = 100\n");
    assert_eq!(run(&path).status.code(), Some(2));
}

#[test]
fn reward_families_rows_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "experiment = \"reward_families\"\nseeds = [0, 1]\n[env]\nkind = \"cartpole_lite\"\n[env.cartpole]\ncalibration_steps = 500\n{SMALL_TRAIN}{CARTPOLE_GRID}"
    );
    let path = write_config(dir.path(), &body);
    assert!(run(&path).status.success());
    let first = (read(dir.path(), "family_gaps.csv"), read(dir.path(), "family_returns.csv"));
    assert!(run(&path).status.success());
    let second = (read(dir.path(), "family_gaps.csv"), read(dir.path(), "family_returns.csv"));
    assert_eq!(first, second);

    let rows = csv_rows(&first.0);
    let names: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["Original", "A", "B", "C", "D", "E"]);
    assert_eq!(csv_rows(&first.1).len(), 12);
    for r in csv_rows(&first.1) {
        let v: Vec<f64> = r[2..].iter().map(|x| x.parse().unwrap()).collect();
        assert_eq!(v[2], v[0] - v[1]);
    }
}

#[test]
fn visual_region_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let body = "experiment = \"visual_region\"\nseeds = [0, 1]\n[env]\nkind = \"driving\"\n\
                [region]\nn_mc = 20\neval_episodes = 5\n[region.window]\nbounds = [[-2.0, 2.0], [-2.0, 2.0]]\nn = 8\n";
    let path = write_config(dir.path(), body);
    assert!(run(&path).status.success());
    let region: serde_json::Value = serde_json::from_str(&read(dir.path(), "region.json")).unwrap();
    assert_eq!(region["upper"].as_f64(), Some(-1.1));
    let metrics = csv_rows(&read(dir.path(), "metrics.csv"));
    // Per mode: one row per seed plus mean and std.
    assert_eq!(metrics.len(), 2 * (2 + 2));
    assert_eq!(metrics.iter().filter(|r| r[1] == "mean").count(), 2);
    let map = read(dir.path(), "policy_true_seed0.csv");
    assert_eq!(map.lines().count(), 8);
    assert!(map.lines().all(|l| l.split(',').count() == 8));
}

#[test]
fn zero_noise_gives_identical_policy_maps() {
    let dir = tempfile::tempdir().unwrap();
    let body = "experiment = \"visual_region\"\nseeds = [3]\n[env]\nkind = \"driving\"\n\
                [env.driving]\nsigma_v = 0.0\nsign_mode = \"appendix\"\nreward_mode = \"product\"\nmax_steps = 1\n\
                [region]\nn_mc = 5\neval_episodes = 2\n[region.window]\nbounds = [[-2.0, 2.0], [-2.0, 2.0]]\nn = 16\n";
    let path = write_config(dir.path(), body);
    assert!(run(&path).status.success());
    assert_eq!(read(dir.path(), "policy_true_seed3.csv"), read(dir.path(), "policy_lagged_seed3.csv"));
}

const NOISY_DRIVING: &str = r#"
[env]
kind = "driving"
[env.driving]
g_ratio = 1.0
sign_mode = "appendix"
reward_mode = "product"
max_steps = 1
[env.noise]
r_noise = 0.4
pair_corr = 0.9
pairs = [[0, 1]]
[q_grid]
bounds = [[-2.0, 2.0], [-2.0, 2.0]]
n = 4
"#;

#[test]
fn model_compare_curves_and_lagged_identity() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("experiment = \"model_compare\"\nseeds = [0]\n{NOISY_DRIVING}{SMALL_TRAIN}[eval]\nlikelihood_samples = 50\n");
    let path = write_config(dir.path(), &body);
    assert!(run(&path).status.success());
    let curves = csv_rows(&read(dir.path(), "curves.csv"));
    for mode in ["instantaneous", "lagged"] {
        assert_eq!(curves.iter().filter(|r| r[0] == mode).count(), 2);
    }
    let like = csv_rows(&read(dir.path(), "likelihood.csv"));
    for r in like.iter().filter(|r| r[0] == "lagged") {
        assert_eq!(r.last().unwrap(), "0");
    }
}

#[test]
fn sweep_echoes_values_and_advantage() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "experiment = \"sweep\"\nseeds = [0, 1]\n{NOISY_DRIVING}{SMALL_TRAIN}[sweep]\naxis = \"pair_corr\"\nvalues = [-0.5, 0.25, 0.9]\n"
    );
    let path = write_config(dir.path(), &body);
    assert!(run(&path).status.success());
    let text = read(dir.path(), "sweep.csv");
    assert!(text.starts_with("pair_corr,"));
    let rows = csv_rows(&text);
    let values: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(values, ["-0.5", "0.25", "0.9"]);
    for r in &rows {
        let v: Vec<f64> = r.iter().map(|x| x.parse().unwrap()).collect();
        assert_eq!(v[5], (v[1] - v[3]) / v[3]);
    }
}

#[test]
fn noiseless_sweep_point_has_no_advantage() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "experiment = \"sweep\"\nseeds = [0]\n{}{SMALL_TRAIN}[sweep]\naxis = \"r_noise\"\nvalues = [0.0]\n",
        NOISY_DRIVING.replace("max_steps = 1", "max_steps = 1\nsigma_v = 0.0")
    );
    let path = write_config(dir.path(), &body);
    assert!(run(&path).status.success());
    let rows = csv_rows(&read(dir.path(), "sweep.csv"));
    assert_eq!(rows[0][1], rows[0][3]);
    assert_eq!(rows[0][5].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn theory_report_subcommand_emits_passing_checks() {
    let out = bin().args(["theory-report", "--n-mc", "20000"]).output().unwrap();
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let checks = report["checks"].as_array().unwrap();
    assert!(checks.len() >= 10);
    assert!(checks.iter().all(|c| c["pass"] == true), "{report}");
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = ExperimentConfig::load(&configs_dir().join("model_compare.toml")).unwrap();
    let text = toml::to_string(&cfg).unwrap();
    assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
}
