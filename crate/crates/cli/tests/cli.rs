use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tdcsem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdcsem")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn generate(dir: &Path, name: &str, n: usize) -> PathBuf {
    let out = dir.join(name);
    let o = tdcsem(&["generate", "--n", &n.to_string(), "--seed", "42", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    rd.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn generate_reports_split_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.tdcsemds");
    let o = tdcsem(&["generate", "--n", "40", "--seed", "42", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("28/6/6"));
    let again = generate(dir.path(), "e.tdcsemds", 40);
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(again).unwrap());
    let manifest = std::fs::read_to_string(dir.path().join("d.tdcsemds.manifest.txt")).unwrap();
    assert!(manifest.contains("command: generate") && manifest.contains("sha256="));
}

#[test]
fn train_then_invert_with_network() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "d.tdcsemds", 40);
    let ck = dir.path().join("m.ckpt");
    let o = tdcsem(&["train", "--in", s(&data), "--out", s(&ck), "--epochs", "2", "--batch-size", "8"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let log = csv_rows(&dir.path().join("m.ckpt.epochs.csv"));
    assert_eq!(log.len(), 3);
    assert_eq!(log[0][0], "epoch");
    assert!(dir.path().join("m.ckpt.manifest.txt").exists());

    let est = dir.path().join("est.csv");
    let o = tdcsem(&["invert", "--checkpoint", s(&ck), "--in", s(&data), "--split", "test", "--out", s(&est)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&est);
    assert_eq!(rows[0], ["index", "sigma1", "sigma2", "d1", "d2"]);
    assert_eq!(rows.len(), 7);
    assert_eq!(rows[1][0], "34");
}

#[test]
fn classical_invert_writes_objective_and_evals() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "d.tdcsemds", 20);
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[invert]\nstarts = \"midpoint\"\nmax_evals = 40\n").unwrap();
    let est = dir.path().join("est.csv");
    let o = tdcsem(&["--config", s(&cfg), "invert", "--in", s(&data), "--limit", "1", "--out", s(&est)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&est);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].last().unwrap(), "evals");
    assert!(rows[1].last().unwrap().parse::<usize>().unwrap() <= 40);
}

#[test]
fn validate_forward_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("vf");
    let o = tdcsem(&["validate-forward", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csv_rows(&out.join("whole_space.csv")).len(), 1 + 4 * 64);
    assert_eq!(csv_rows(&out.join("dense_grid.csv")).len(), 1 + 5 * 4);
    assert!(out.join("manifest.txt").exists());
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tdcsem(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(tdcsem(&["generate", "--n", "ten", "--out", "x"]).status.code(), Some(2));
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[train]\nepochz = 3\n").unwrap();
    let o = tdcsem(&["--config", s(&cfg), "validate-forward", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("epochz"));
}

#[test]
fn runtime_errors_exit_one_with_module() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.tdcsemds");
    let o = tdcsem(&["invert", "--in", s(&missing), "--out", s(&dir.path().join("e.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("synth_data:"), "{}", stderr(&o));
}
