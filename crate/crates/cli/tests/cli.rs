use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 9

[problem]
n = 6
family = "varying-spectrum"
l_range = [1.0, 40.0]
seed = 3

[algorithm]
name = "heavy_ball"
n_iterations = 15

[pac]
regime = "conditioned"
grid_size = 100

[prior]
targets = [0.9]
n_particles = 20

[partitions]
prior_1 = 15
prior_2 = 15
train = 20
test = 10

[sweep]
n_test_sets = 2
test_set_size = 6
"#;

fn pacopt(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pacopt"));
    cmd.args(args).env_remove("PACOPT_OUT_DIR");
    if let Some(d) = out_env {
        cmd.env("PACOPT_OUT_DIR", d);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, SMALL).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_then_learn_with_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let ds = tmp.path().join("data/ds.txt");
    let o = pacopt(&["gen", "--config", &cfg, "--out", ds.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(ds.exists());

    let out = tmp.path().join("out");
    let o = pacopt(
        &["learn", "--config", &cfg, "--dataset", ds.to_str().unwrap(), "--out-dir", out.to_str().unwrap()],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let bounds = std::fs::read_to_string(out.join("bounds.csv")).unwrap();
    let mut lines = bounds.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(
        lines.next().unwrap(),
        "regime,lambda_star,bound,kappa_at_star,log_term,n_particles,seed"
    );
    assert!(lines.next().unwrap().starts_with("conditioned,"));
}

#[test]
fn env_var_sets_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("from-env");
    let o = pacopt(&["exp", "conv-prob", "--config", &cfg], Some(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("conv_prob.csv").exists());
}

#[test]
fn missing_config_reports_io_error() {
    let o = pacopt(&["learn", "--config", "/nonexistent/run.toml"], None);
    assert_eq!(o.status.code(), Some(1));
    let line = stderr(&o);
    assert!(line.starts_with("error kind="), "{line}");
    assert!(line.contains("message="));
}

#[test]
fn bad_config_reports_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.toml");
    std::fs::write(&p, "seed = \"x\"\n").unwrap();
    let o = pacopt(&["learn", "--config", p.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error kind=config"), "{}", stderr(&o));
}

#[test]
fn unknown_experiment_is_a_usage_error() {
    let o = pacopt(&["exp", "nonsense", "--config", "x.toml"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error kind=usage message="));
}

#[test]
fn seed_override_changes_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("o");
    let o = pacopt(
        &["exp", "conv-prob", "--config", &cfg, "--seed", "123", "--out-dir", out.to_str().unwrap()],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("conv_prob.csv")).unwrap();
    assert!(text.lines().next().unwrap().ends_with("seed=123"));
}

#[test]
fn verify_passes_and_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let o = pacopt(&["verify", "--seed", "3", "--out-dir", tmp.path().to_str().unwrap()], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().filter(|l| l.starts_with("PASS")).count() >= 5, "{stdout}");
    assert!(tmp.path().join("verify.csv").exists());
}
