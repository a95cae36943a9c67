use std::path::Path;
use std::process::{Command, Output};

fn ruap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ruap")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("exp.conf");
    std::fs::write(
        &path,
        "dataset = toy
model_train_n = 200
train_n = 30
eval_n = 30
attacks = standard-uap, robust-uap
gamma = 0.3
gammas = 0.2, 0.3
psi = 0.25
max_epochs = 1
max_inner_iters = 3
output_dir = out
",
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn help_exits_cleanly() {
    let o = ruap(&["--help"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("gradcheck"));
}

#[test]
fn usage_errors_exit_one() {
    let o = ruap(&["attack", "--algo", "nope"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: usage:"), "{}", stderr(&o));
}

#[test]
fn runtime_errors_carry_a_code() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.bin");
    let o = ruap(&["train-model", "--data", missing.to_str().unwrap(), "--out", "m.ruap"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: io:"), "{}", stderr(&o));

    let bad = dir.path().join("bad.rupt");
    std::fs::write(&bad, b"XXXX").unwrap();
    let o = ruap(&["evaluate", "--perturbation", bad.to_str().unwrap(), "--config", &write_config(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: "), "{}", stderr(&o));
}

#[test]
fn gradcheck_passes() {
    let o = ruap(&["gradcheck", "--seed", "3"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.lines().all(|l| l.starts_with("ok ")));
    assert!(out.contains("attack/batch-loss"));
}

#[test]
fn train_then_experiment_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("toy.ruap");
    let o = ruap(&["train-model", "--data", "toy:200", "--out", model.to_str().unwrap(), "--learning-rate", "0.05"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(model.exists());

    let config = write_config(dir.path());
    let o = ruap(&["experiment", "--config", &config]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("RobustUAP"));
    let out = dir.path().join("out");
    assert!(out.join("results.csv").exists());

    let o = ruap(&["report", "--dir", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("## Runtime"));

    let dump = out.join("robust-uap.rupt");
    assert!(dump.exists(), "dump files: {:?}", std::fs::read_dir(&out).unwrap().collect::<Vec<_>>());
    let o = ruap(&["evaluate", "--perturbation", dump.to_str().unwrap(), "--config", &config]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("attack,transform_set"));
}

#[test]
fn attack_writes_one_perturbation() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("single");
    let o = ruap(&["attack", "--algo", "sgd", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("sgd.rupt").exists());
    assert!(!out.join("robust-uap.rupt").exists());
}
