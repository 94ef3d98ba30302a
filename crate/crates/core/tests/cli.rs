//! End-to-end behaviour of the `tdn` binary on small runs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

use tdn::arch::IdnArch;
use tdn::config::ExperimentConfig;
use tdn::idn::Idn;
use tdn::nn::ModelFile;
use tdn::pipeline::{self, TDN_FILE, VAE_FILE};
use tdn::seeds::substream;
use tdn::sim::System;

struct Run {
    _tmp: TempDir,
    root: PathBuf,
}

impl Run {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        for d in ["data", "models", "out"] {
            std::fs::create_dir(root.join(d)).unwrap();
        }
        Self { _tmp: tmp, root }
    }

    fn dir(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Common flags for a small, fast numerical-example run.
    fn flags(&self) -> Vec<String> {
        let mut v: Vec<String> = ["--system", "numex", "--n-train", "2000", "--n-test-faulty", "300", "--epochs", "1"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for d in ["data", "model", "out"] {
            let sub = if d == "model" { "models" } else { d };
            v.push(format!("--{d}-dir"));
            v.push(self.dir(sub).display().to_string());
        }
        v
    }

    fn tdn(&self, verb: &str, extra: &[&str]) -> Output {
        let mut args = vec![verb.to_string()];
        let mut flags = self.flags();
        if extra.contains(&"--epochs") {
            let i = flags.iter().position(|f| f == "--epochs").unwrap();
            flags.drain(i..i + 2);
        }
        args.extend(flags);
        args.extend(extra.iter().map(|s| s.to_string()));
        tdn(&args)
    }

    fn config(&self) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::defaults(System::Numex);
        cfg.data.n_train = 2000;
        cfg.data.n_test_faulty = 300;
        cfg.vae.epochs = 1;
        cfg.transfer.epochs = 1;
        cfg.paths.data_dir = self.dir("data");
        cfg.paths.model_dir = self.dir("models");
        cfg.paths.out_dir = self.dir("out");
        cfg
    }
}

fn tdn<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdn")).args(args).output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn digest(path: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

fn files_in(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn default_training_set_has_fifteen_thousand_rows() {
    let run = Run::new();
    let data = run.dir("data");
    ok(&tdn(&["simulate", "--system", "numex", "--scenario", "train", "--data-dir", data.to_str().unwrap()]));
    let csv = std::fs::read_to_string(data.join("numex-train.csv")).unwrap();
    assert_eq!(csv.lines().count(), 15000 + 1);
    assert!(data.join("numex-train.csv.meta.json").exists());
}

#[test]
fn missing_output_directory_fails_cleanly() {
    let run = Run::new();
    let missing = run.dir("nowhere");
    let out = tdn(&["simulate", "--system", "numex", "--scenario", "train", "--data-dir", missing.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(!missing.exists());
    assert!(files_in(&run.dir("data")).is_empty());
}

#[test]
fn simulation_is_reproducible_and_seed_dependent() {
    let a = Run::new();
    let b = Run::new();
    ok(&a.tdn("simulate", &["--scenario", "test-F05"]));
    ok(&b.tdn("simulate", &["--scenario", "test-F05"]));
    let name = "numex-test-F05.csv";
    assert_eq!(digest(&a.dir("data").join(name)), digest(&b.dir("data").join(name)));
    ok(&b.tdn("simulate", &["--scenario", "test-F05", "--seed", "1"]));
    assert_ne!(digest(&a.dir("data").join(name)), digest(&b.dir("data").join(name)));
}

#[test]
fn corrupt_dataset_is_a_data_error() {
    let run = Run::new();
    ok(&run.tdn("simulate", &["--scenario", "train"]));
    let path = run.dir("data").join("numex-train.csv");
    let text = std::fs::read_to_string(&path).unwrap().replacen(",0,", ",x,", 1);
    std::fs::write(&path, text).unwrap();
    let out = run.tdn("pretrain", &[]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn training_without_a_pretrained_vae_fails() {
    let run = Run::new();
    ok(&run.tdn("simulate", &["--scenario", "train"]));
    let out = run.tdn("train", &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains(VAE_FILE));
    assert!(!run.dir("models").join(TDN_FILE).exists());
}

#[test]
fn tampered_vae_checksum_stops_training() {
    let run = Run::new();
    ok(&run.tdn("simulate", &["--scenario", "train"]));
    ok(&run.tdn("pretrain", &[]));
    let path = run.dir("models").join(VAE_FILE);
    let mut file = ModelFile::load(&path).unwrap();
    file.meta.insert("vae_sha256".into(), "0".repeat(64));
    file.save(&path).unwrap();
    let out = run.tdn("train", &[]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!run.dir("models").join(TDN_FILE).exists());
}

#[test]
fn overrides_change_the_recorded_config_hash() {
    let run = Run::new();
    ok(&run.tdn("simulate", &["--scenario", "train"]));
    let read_hash = |p: &Path| -> String {
        let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap();
        meta["config_hash"].as_str().unwrap().to_string()
    };
    let sidecar = run.dir("data").join("numex-train.csv.meta.json");
    let base = read_hash(&sidecar);
    assert_eq!(base, run.config().config_hash());
    ok(&run.tdn("simulate", &["--scenario", "train", "--lambda-tl", "0.5"]));
    assert_ne!(read_hash(&sidecar), base);
}

#[test]
fn zero_epochs_leave_the_network_at_its_initialisation() {
    let run = Run::new();
    ok(&run.tdn("simulate", &["--scenario", "train"]));
    ok(&run.tdn("pretrain", &[]));
    ok(&run.tdn("train", &["--epochs", "0"]));
    let model = pipeline::load_tdn(&run.dir("models").join(TDN_FILE)).unwrap();
    let cfg = run.config();
    let init = Idn::new(&IdnArch::D1.layers(5), &mut substream(cfg.seed, "init/idn")).unwrap();
    assert_eq!(model.idn, init);
}

#[test]
fn evaluation_needs_every_test_set() {
    let run = Run::new();
    ok(&run.tdn("simulate", &["--scenario", "train"]));
    ok(&run.tdn("pretrain", &[]));
    ok(&run.tdn("train", &[]));
    let out = run.tdn("evaluate", &[]);
    assert_eq!(code(&out), 3);
    assert!(!run.dir("out").join(pipeline::SUMMARY_FILE).exists());

    ok(&run.tdn("simulate", &[]));
    std::fs::write(run.dir("data").join("numex-test-F07.csv"), "").unwrap();
    assert_eq!(code(&run.tdn("evaluate", &[])), 3);
}

#[test]
fn full_run_and_report() {
    let run = Run::new();
    for verb in ["simulate", "pretrain", "train", "evaluate"] {
        ok(&run.tdn(verb, &[]));
    }
    let out = run.dir("out");
    for f in ["report.csv", "summary.json", "pretrain_loss.csv", "transfer_loss.csv"] {
        assert!(out.join(f).exists(), "{f}");
        assert!(out.join(format!("{f}.meta.json")).exists() || f == "summary.json", "{f} sidecar");
    }
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.starts_with("fault_id,FAR,MDR,RMSE"));
    assert_eq!(report.lines().count(), 1 + 10 + 1);
    assert!(report.lines().last().unwrap().starts_with("average,"));

    // one run: std is undefined and left empty
    let merged = run.dir("merged");
    std::fs::create_dir(&merged).unwrap();
    ok(&tdn(&["report", "--run", out.to_str().unwrap(), "--out-dir", merged.to_str().unwrap()]));
    let table = std::fs::read_to_string(merged.join("merged.csv")).unwrap();
    let header: Vec<&str> = table.lines().next().unwrap().split(',').collect();
    let far_std = header.iter().position(|h| *h == "FAR_std").unwrap();
    let row: Vec<&str> = table.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[far_std], "");

    // a missing run is reported but does not fail the merge
    let gone = run.dir("gone");
    let rep = tdn(&[
        "report",
        "--run",
        out.to_str().unwrap(),
        "--run",
        gone.to_str().unwrap(),
        "--out-dir",
        merged.to_str().unwrap(),
    ]);
    ok(&rep);
    assert!(String::from_utf8_lossy(&rep.stderr).contains("gone"));

    // a run under a different protocol cannot be merged
    let other = Run::new();
    for verb in ["simulate", "pretrain", "train", "evaluate"] {
        ok(&other.tdn(verb, &["--lambda-tl", "0.2"]));
    }
    let bad = tdn(&[
        "report",
        "--run",
        out.to_str().unwrap(),
        "--run",
        other.dir("out").to_str().unwrap(),
        "--out-dir",
        merged.to_str().unwrap(),
    ]);
    assert_eq!(code(&bad), 2);
}
