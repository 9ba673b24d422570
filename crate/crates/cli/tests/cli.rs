use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_rough-vol-kit");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn rough-vol-kit")
}

fn write_config(dir: &Path, name: &str, body: &str, out: &Path) -> String {
    let path = dir.join(name);
    fs::write(&path, format!("{body}out_dir = {}\n", out.display())).unwrap();
    path.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_key_is_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.cfg", "h = 0.07\nhurst_index = 0.1\n", &dir.path().join("out"));
    let o = run(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("hurst_index"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for body in ["eta = 1.9\n", "h = abc\n", "h = 0.07\nrho = 1.5\n", "h = 0.07\nscheme = euler\n"] {
        let cfg = write_config(dir.path(), "c.cfg", body, &out);
        let o = run(&["simulate", "--config", &cfg, "--force"]);
        assert_eq!(o.status.code(), Some(2), "{body:?}: {}", stderr(&o));
    }
    let o = run(&["simulate", "--config", dir.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    let o = run(&["no-such-command", "--config", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn out_dir_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "c.cfg", "h = 0.07\neps = 1e-3\n", &out);
    assert_eq!(run(&["kernel-fit", "--config", &cfg]).status.code(), Some(0));
    let first = fs::read(out.join("soe.csv")).unwrap();
    let o = run(&["kernel-fit", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert_eq!(run(&["kernel-fit", "--config", &cfg, "--force"]).status.code(), Some(0));
    assert_eq!(fs::read(out.join("soe.csv")).unwrap(), first);
}

#[test]
fn resolved_config_records_defaults_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "c.cfg", "h = 0.07\nn_steps = 8\nm_paths = 10\n", &out);
    assert_eq!(run(&["simulate", "--config", &cfg, "--seed", "5"]).status.code(), Some(0));
    let text = fs::read_to_string(out.join("config.resolved")).unwrap();
    assert!(text.starts_with("# rough-vol-kit simulate\n"), "{text}");
    for line in ["seed = 5\n", "eta = 1.9\n", "n_steps = 8\n", "m_paths = 10\n"] {
        assert!(text.contains(line), "missing {line:?} in {text}");
    }
}

#[test]
fn gen_data_depends_on_seed_only() {
    let dir = tempfile::tempdir().unwrap();
    let body = "h = 0.07\nn_steps = 16\nn_soe = 4\nm_paths = 700\n";
    let read = |out: &Path| fs::read(out.join("data.csv")).unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (out, seed, threads) in [(&a, "3", "1"), (&b, "3", "2"), (&c, "4", "1")] {
        let cfg = write_config(dir.path(), "c.cfg", body, out);
        let o = run(&["gen-data", "--config", &cfg, "--seed", seed, "--threads", threads]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let header = String::from_utf8(read(&a)).unwrap();
    assert!(header.starts_with("path_id,S_T\n"));
    assert_eq!(header.lines().count(), 701);
}

#[test]
fn training_rejects_a_dataset_from_another_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let cfg = write_config(dir.path(), "g.cfg", "h = 0.07\nn_steps = 8\nn_soe = 4\nm_paths = 600\n", &data);
    assert_eq!(run(&["gen-data", "--config", &cfg]).status.code(), Some(0));
    let body = format!("h = 0.1\nn_steps = 8\nn_soe = 4\nbatch_size = 64\nepochs = 1\ndata_dir = {}\n", data.display());
    let cfg = write_config(dir.path(), "t.cfg", &body, &dir.path().join("train"));
    let o = run(&["train", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`h`"), "{}", stderr(&o));
}

#[test]
fn smile_reports_every_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let body = "h = 0.07\nn_steps = 16\nm_paths = 2000\nschemes = 2,4\nstrikes = -0.2:0.2:5\n";
    let cfg = write_config(dir.path(), "c.cfg", body, &out);
    let o = run(&["smile", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let diff = fs::read_to_string(out.join("smile_diff.csv")).unwrap();
    assert!(diff.starts_with("scheme,N,k,implied_vol,exact_vol,diff\n"));
    // two mSOE schemes at five strikes
    assert_eq!(diff.lines().count(), 1 + 2 * 5);
}
