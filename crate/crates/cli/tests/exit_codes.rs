use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn epmix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epmix")).args(args).output().unwrap()
}

fn desk() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/desk_synthetic.csv")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn configuration_errors_exit_with_one() {
    let data = desk();
    let data = data.to_str().unwrap();
    assert_eq!(code(&epmix(&["run", "--bogus"])), 1);
    assert_eq!(code(&epmix(&["run", "--data", data, "--chains", "0"])), 1);
    assert_eq!(code(&epmix(&["run", "--data", data, "--params", "sideways"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "warmup = lots\n").unwrap();
    assert_eq!(code(&epmix(&["run", "--config", cfg.to_str().unwrap()])), 1);
}

#[test]
fn data_errors_exit_with_two() {
    assert_eq!(code(&epmix(&["run", "--data", "/definitely/not/here.csv"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "y,a\n1,2\n2,oops\n").unwrap();
    let out = epmix(&["run", "--data", bad.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("row 2") && stderr.contains("'a'"), "{stderr}");
}

#[test]
fn all_failed_cells_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("huge.csv");
    fs::write(&data, "y,a,b\n1e200,1,2\n-1e200,2,1\n1e200,0,3\n-1e200,3,0\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = epmix(&[
        "run", "--data", data.to_str().unwrap(), "--standardize", "false", "--sigma2", "1", "--tau2", "1",
        "--chains", "2", "--warmup", "20", "--retain", "20", "--q-list", "1.0", "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 3 * 2);
    assert!(summary.lines().skip(1).all(|l| l.ends_with("init_failed")));
}

#[test]
fn small_run_succeeds_and_replots() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let o = out_dir.to_str().unwrap();
    let out = epmix(&[
        "run", "--data", desk().to_str().unwrap(), "--chains", "2", "--warmup", "60", "--retain", "60",
        "--q-list", "0.6,1.4", "--params", "naive,noncentered", "--out", o,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 2 * 2);

    let replot = dir.path().join("replot");
    let out = epmix(&[
        "plot", "--summary", out_dir.join("summary.csv").to_str().unwrap(), "--kde",
        out_dir.join("kde.csv").to_str().unwrap(), "--out", replot.to_str().unwrap(), "--plot-q", "0.6",
    ]);
    assert_eq!(code(&out), 0);
    for fig in ["fig1_summary.svg", "fig2_kde.svg", "fig3_divergences.svg"] {
        assert!(replot.join(fig).exists(), "{fig}");
    }
}

#[test]
fn synth_writes_preset_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    let out = epmix(&["synth", "--preset", "prostate", "--seed", "3", "--out", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1 + 97);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 9);
}
