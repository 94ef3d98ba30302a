//! End-to-end commands: simulate, pretrain, train, evaluate and report.
//!
//! Layout under the configured directories:
//!
//! ```text
//! data_dir/{system}-{scenario}.csv        datasets (+ .meta.json)
//! model_dir/vae.model, model_dir/tdn.model
//! out_dir/pretrain_loss.csv, transfer_loss.csv
//! out_dir/report.csv, summary.json
//! out_dir/traces/detection-*.csv, estimation-*.csv
//! ```
//!
//! Every CSV gets a `.meta.json` sidecar carrying the config hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::artifact::{self, csv_bytes, write_atomic, write_with_sidecar};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::idn::Idn;
use crate::monitor::{self, rmse, Counts, DetectionReport, FaultScore, Monitor, ResidualStats};
use crate::nn::{ModelFile, ModelRole};
use crate::seeds::substream;
use crate::sim::{generate, Dataset, Scenario, System};
use crate::transfer::{train_tdn, vae_checksum, Scaler, TdnModel, TransferRecord};
use crate::vae::{pretrain_vae, Vae};

pub const VAE_FILE: &str = "vae.model";
pub const TDN_FILE: &str = "tdn.model";
pub const SUMMARY_FILE: &str = "summary.json";
pub const REPORT_FILE: &str = "report.csv";

/// Sidecar written next to every output table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputMeta {
    pub kind: String,
    pub system: System,
    pub architecture: String,
    pub seed: u64,
    pub config_hash: String,
    pub protocol_hash: String,
}

impl OutputMeta {
    fn new(cfg: &ExperimentConfig, kind: &str) -> Self {
        Self {
            kind: kind.into(),
            system: cfg.system,
            architecture: cfg.arch_label(),
            seed: cfg.seed,
            config_hash: cfg.config_hash(),
            protocol_hash: cfg.protocol_hash(),
        }
    }
}

fn require_dir(dir: &Path) -> Result<()> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "directory does not exist")))
    }
}

pub fn dataset_path(cfg: &ExperimentConfig, scenario: Scenario) -> PathBuf {
    cfg.paths.data_dir.join(format!("{}.csv", scenario.file_stem(cfg.system)))
}

fn write_table(cfg: &ExperimentConfig, path: &Path, kind: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let header: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    write_with_sidecar(path, &csv_bytes(&header, rows)?, &OutputMeta::new(cfg, kind))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Generate the given scenarios (all of them when empty).
pub fn cmd_simulate(cfg: &ExperimentConfig, scenarios: &[Scenario]) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    require_dir(&cfg.paths.data_dir)?;
    let all: Vec<Scenario> = if scenarios.is_empty() {
        std::iter::once(Scenario::Train).chain(Scenario::tests(cfg.system)).collect()
    } else {
        scenarios.to_vec()
    };
    let hash = cfg.config_hash();
    let mut written = Vec::new();
    for sc in all {
        let mut d = generate(cfg.system, sc, cfg.seed, &cfg.data)?;
        d.meta.config_hash = Some(hash.clone());
        let path = dataset_path(cfg, sc);
        d.save(&path)?;
        log::info!("wrote {} ({} rows)", path.display(), d.len());
        written.push(path);
    }
    Ok(written)
}

fn load_dataset(cfg: &ExperimentConfig, scenario: Scenario) -> Result<Dataset> {
    let path = dataset_path(cfg, scenario);
    let d = Dataset::load(&path)?;
    if d.meta.system != cfg.system || d.dim() != cfg.system.dim() {
        return Err(Error::Data(format!("{} does not hold {} data", path.display(), cfg.system)));
    }
    if d.is_empty() {
        return Err(Error::Data(format!("{} is empty", path.display())));
    }
    Ok(d)
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub vae: Vae,
    pub scaler: Scaler,
    /// Mean loss per epoch.
    pub losses: Vec<f64>,
    pub model_path: PathBuf,
}

/// Fit the scaler on the training set and pretrain the VAE.
pub fn cmd_pretrain(cfg: &ExperimentConfig) -> Result<PretrainOutcome> {
    cfg.validate()?;
    require_dir(&cfg.paths.model_dir)?;
    require_dir(&cfg.paths.out_dir)?;
    let train = load_dataset(cfg, Scenario::Train)?;
    let scaler = Scaler::fit(train.z.view())?;
    let z = scaler.apply(train.z.view())?;
    let spec = cfg.architecture.vae.spec(cfg.system.dim(), cfg.vae.latent_dim);
    let mut vae = Vae::new(&spec, cfg.vae.lambda_v, &mut substream(cfg.seed, "init/vae"))?;
    let losses = pretrain_vae(&mut vae, z.view(), &cfg.pretrain(), &mut substream(cfg.seed, "pretrain"))?;

    let mut file = vae.to_model_file();
    file.scaler = Some(scaler.clone());
    file.meta.insert("config_hash".into(), cfg.config_hash());
    file.meta.insert("vae_sha256".into(), vae_checksum(&vae));
    let model_path = cfg.paths.model_dir.join(VAE_FILE);
    file.save(&model_path)?;

    let rows = losses.iter().enumerate().map(|(e, l)| vec![e.to_string(), l.to_string()]).collect();
    write_table(cfg, &cfg.paths.out_dir.join("pretrain_loss.csv"), "pretrain_loss", &["epoch", "J_V"], rows)?;
    Ok(PretrainOutcome {
        vae,
        scaler,
        losses,
        model_path,
    })
}

/// Load a pretrained VAE and its scaler, checking the recorded checksum.
pub fn load_vae(path: &Path) -> Result<(Vae, Scaler)> {
    let file = ModelFile::load(path)?;
    file.expect_role(ModelRole::Vae)?;
    let vae = Vae::from_model_file(&file)?;
    let scaler = file
        .scaler
        .clone()
        .ok_or_else(|| Error::Data(format!("{} carries no scaler", path.display())))?;
    if let Ok(recorded) = file.meta_value("vae_sha256") {
        let actual = vae_checksum(&vae);
        if recorded != actual {
            return Err(Error::Contract(format!(
                "{}: VAE checksum {actual} does not match the recorded {recorded}",
                path.display()
            )));
        }
    }
    Ok((vae, scaler))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TdnModel,
    pub trace: Vec<TransferRecord>,
    pub model_path: PathBuf,
}

/// Transfer-train the decoupling network against the pretrained VAE.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    require_dir(&cfg.paths.model_dir)?;
    require_dir(&cfg.paths.out_dir)?;
    let (vae, scaler) = load_vae(&cfg.paths.model_dir.join(VAE_FILE))?;
    let before = vae_checksum(&vae);
    let train = load_dataset(cfg, Scenario::Train)?;
    let z = scaler.apply(train.z.view())?;
    let idn = Idn::new(&cfg.architecture.idn.layers(cfg.system.dim()), &mut substream(cfg.seed, "init/idn"))?;
    let mut model = TdnModel::new(idn, vae, scaler)?;
    let trace = train_tdn(&mut model, z.view(), &cfg.sampler()?, &cfg.transfer())?;
    if vae_checksum(&model.vae) != before {
        return Err(Error::Contract("VAE changed during transfer training".into()));
    }

    let mut file = model.to_model_file();
    file.meta.insert("config_hash".into(), cfg.config_hash());
    file.meta.insert("vae_sha256".into(), before);
    let model_path = cfg.paths.model_dir.join(TDN_FILE);
    file.save(&model_path)?;

    let rows = trace
        .iter()
        .map(|r| {
            vec![
                r.epoch.to_string(),
                r.batch.to_string(),
                r.loss.jv_n.to_string(),
                r.loss.jv_f.to_string(),
                r.loss.mmd.to_string(),
                r.loss.total.to_string(),
            ]
        })
        .collect();
    write_table(
        cfg,
        &cfg.paths.out_dir.join("transfer_loss.csv"),
        "transfer_loss",
        &["epoch", "batch", "J_V_n", "J_V_f", "J_mmd", "J_tl"],
        rows,
    )?;
    Ok(TrainOutcome { model, trace, model_path })
}

pub fn load_tdn(path: &Path) -> Result<TdnModel> {
    let file = ModelFile::load(path)?;
    let model = TdnModel::from_model_file(&file)?;
    if let Ok(recorded) = file.meta_value("vae_sha256") {
        if recorded != vae_checksum(&model.vae) {
            return Err(Error::Contract(format!("{}: embedded VAE does not match its checksum", path.display())));
        }
    }
    Ok(model)
}

/// Everything an evaluation produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub system: System,
    pub architecture: String,
    pub seed: u64,
    pub config_hash: String,
    pub protocol_hash: String,
    pub report: DetectionReport,
    /// Alarm rate on the training set itself.
    pub train_far: f64,
    /// Residual column means on held-out normal data (standardized units).
    pub heldout_residual_mean: Vec<f64>,
    /// Residual correlation on held-out normal data.
    pub heldout_correlation: Vec<Vec<f64>>,
    pub max_offdiag_corr: f64,
    /// `mean |D(z)+z| / mean |z|` on held-out normal data; near 0 means `D(z) = -z`.
    pub collapse_ratio: f64,
    pub vae_sha256: String,
}

fn row_norm_mean(a: ArrayView2<f64>) -> f64 {
    a.rows().into_iter().map(|r| r.dot(&r).sqrt()).sum::<f64>() / a.nrows() as f64
}

/// `mean |D(z)+z| / mean |z|` over standardized rows.
pub fn collapse_ratio(model: &TdnModel, z: ArrayView2<f64>) -> Result<f64> {
    let d = model.residuals(z)?;
    Ok(row_norm_mean((&d + &z).view()) / row_norm_mean(z))
}

/// Score every test set.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    require_dir(&cfg.paths.out_dir)?;
    let model = load_tdn(&cfg.paths.model_dir.join(TDN_FILE))?;
    if model.dim() != cfg.system.dim() {
        return Err(Error::shape("model dimension", cfg.system.dim(), model.dim()));
    }
    let train = load_dataset(cfg, Scenario::Train)?;
    let z_train = model.scaler.apply(train.z.view())?;
    let mon = Monitor::fit(&model, z_train.view(), cfg.monitor.expected_far, cfg.monitor.kde_grid_points)?;
    let j_th = mon.threshold.j_th;
    let train_alarms = mon.alarms(&mon.t2(&model, z_train.view())?);
    let train_far = train_alarms.iter().filter(|a| **a).count() as f64 / train_alarms.len() as f64;

    let traces = cfg.paths.out_dir.join("traces");
    if !traces.is_dir() {
        std::fs::create_dir(&traces).map_err(|e| Error::io(&traces, e))?;
    }
    let channels = cfg.system.channels();
    let mut scores = Vec::new();
    let mut heldout = Vec::new();
    for sc in Scenario::tests(cfg.system) {
        let d = load_dataset(cfg, sc)?;
        let z = model.scaler.apply(d.z.view())?;
        let t2 = mon.t2(&model, z.view())?;
        let alarms = mon.alarms(&t2);
        let counts = Counts::tally(&d.labels, &alarms)?;
        let est = monitor::estimate_fault_physical(&model, z.view())?;
        let score_rmse = if d.meta.estimable {
            Some(rmse(est.view(), d.truth.view())?)
        } else {
            None
        };
        let fault_id = d.meta.fault_id.map(|f| f.to_string()).unwrap_or_else(|| sc.to_string());
        scores.push(FaultScore::new(fault_id, counts, score_rmse));
        let onset = d.meta.onset.unwrap_or(d.len());
        heldout.push(z.slice(s![..onset, ..]).to_owned());

        let stem = sc.file_stem(cfg.system);
        let det = (0..d.len())
            .map(|k| {
                vec![
                    k.to_string(),
                    t2[k].to_string(),
                    j_th.to_string(),
                    u8::from(d.labels[k]).to_string(),
                    u8::from(alarms[k]).to_string(),
                ]
            })
            .collect();
        write_table(
            cfg,
            &traces.join(format!("detection-{stem}.csv")),
            "detection_trace",
            &["k", "T2", "J_th", "label", "prediction"],
            det,
        )?;
        let mut fe = Vec::with_capacity(d.len() * channels.len());
        for k in 0..d.len() {
            for (j, name) in channels.iter().enumerate() {
                fe.push(vec![
                    k.to_string(),
                    name.to_string(),
                    d.truth[[k, j]].to_string(),
                    est[[k, j]].to_string(),
                ]);
            }
        }
        write_table(
            cfg,
            &traces.join(format!("estimation-{stem}.csv")),
            "estimation_trace",
            &["k", "variable", "f_true", "f_est"],
            fe,
        )?;
    }

    let views: Vec<ArrayView2<f64>> = heldout.iter().map(|a| a.view()).collect();
    let normal: Array2<f64> = concatenate(Axis(0), &views).map_err(|e| Error::Data(e.to_string()))?;
    let phi = model.residuals(normal.view())?;
    let corr = ResidualStats::fit(phi.view())?.correlation();
    let m = corr.nrows();
    let max_offdiag_corr = (0..m)
        .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| corr[[i, j]].abs())
        .fold(0.0, f64::max);

    let report = DetectionReport::new(scores, j_th, cfg.seed);
    let mut rows: Vec<Vec<String>> = report
        .faults
        .iter()
        .map(|f| vec![f.fault_id.clone(), fmt_opt(f.far), fmt_opt(f.mdr), fmt_opt(f.rmse)])
        .collect();
    rows.push(vec!["average".into(), fmt_opt(report.afar), fmt_opt(report.amdr), fmt_opt(report.armse)]);
    write_table(cfg, &cfg.paths.out_dir.join(REPORT_FILE), "report", &["fault_id", "FAR", "MDR", "RMSE"], rows)?;

    let summary = RunSummary {
        system: cfg.system,
        architecture: cfg.arch_label(),
        seed: cfg.seed,
        config_hash: cfg.config_hash(),
        protocol_hash: cfg.protocol_hash(),
        report,
        train_far,
        heldout_residual_mean: phi.mean_axis(Axis(0)).expect("non-empty").to_vec(),
        heldout_correlation: corr.rows().into_iter().map(|r| r.to_vec()).collect(),
        max_offdiag_corr,
        collapse_ratio: collapse_ratio(&model, normal.view())?,
        vae_sha256: vae_checksum(&model.vae),
    };
    write_atomic(&cfg.paths.out_dir.join(SUMMARY_FILE), &artifact::to_json(&summary)?)?;
    Ok(summary)
}

/// Simulate everything, then pretrain, train and evaluate.
pub fn run_all(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cmd_simulate(cfg, &[])?;
    cmd_pretrain(cfg)?;
    cmd_train(cfg)?;
    cmd_evaluate(cfg)
}

/// Mean and sample standard deviation; the std is `None` for fewer than two values.
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), std)
}

/// Result of merging runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedReport {
    pub protocol_hash: String,
    pub runs: Vec<String>,
    pub missing: Vec<String>,
    pub rows: Vec<MergedRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedRow {
    pub architecture: String,
    pub fault_id: String,
    pub n_runs: usize,
    pub far_mean: Option<f64>,
    pub far_std: Option<f64>,
    pub mdr_mean: Option<f64>,
    pub mdr_std: Option<f64>,
    pub rmse_mean: Option<f64>,
    pub rmse_std: Option<f64>,
}

/// Merge the `summary.json` of several run directories into `out_dir`.
///
/// Missing runs are listed and skipped. Runs from different protocols
/// (anything but seed and architecture differs) are refused.
pub fn cmd_report(run_dirs: &[PathBuf], out_dir: &Path) -> Result<MergedReport> {
    require_dir(out_dir)?;
    let mut summaries = Vec::new();
    let mut runs = Vec::new();
    let mut missing = Vec::new();
    for dir in run_dirs {
        let p = dir.join(SUMMARY_FILE);
        if !p.is_file() {
            log::warn!("run {} has no {SUMMARY_FILE}; skipped", dir.display());
            missing.push(dir.display().to_string());
            continue;
        }
        summaries.push(artifact::read_json::<RunSummary>(&p)?);
        runs.push(dir.display().to_string());
    }
    let Some(first) = summaries.first() else {
        return Err(Error::Data("no completed runs to merge".into()));
    };
    let protocol_hash = first.protocol_hash.clone();
    if let Some(bad) = summaries.iter().position(|s| s.protocol_hash != protocol_hash) {
        return Err(Error::Config(format!(
            "run {} was produced under a different protocol ({} vs {})",
            runs[bad], summaries[bad].protocol_hash, protocol_hash
        )));
    }

    type Acc = (Vec<f64>, Vec<f64>, Vec<f64>, usize);
    let mut groups: BTreeMap<(String, String), Acc> = BTreeMap::new();
    let mut push = |arch: &str, fault: &str, far: Option<f64>, mdr: Option<f64>, rmse: Option<f64>| {
        let acc = groups.entry((arch.to_string(), fault.to_string())).or_default();
        acc.0.extend(far);
        acc.1.extend(mdr);
        acc.2.extend(rmse);
        acc.3 += 1;
    };
    for s in &summaries {
        for f in &s.report.faults {
            push(&s.architecture, &f.fault_id, f.far, f.mdr, f.rmse);
        }
        push(&s.architecture, "average", s.report.afar, s.report.amdr, s.report.armse);
    }
    // per architecture, catalog order with the average last
    let mut rows: Vec<MergedRow> = groups
        .into_iter()
        .map(|((architecture, fault_id), (far, mdr, rm, n))| {
            let (far_mean, far_std) = mean_std(&far);
            let (mdr_mean, mdr_std) = mean_std(&mdr);
            let (rmse_mean, rmse_std) = mean_std(&rm);
            MergedRow {
                architecture,
                fault_id,
                n_runs: n,
                far_mean,
                far_std,
                mdr_mean,
                mdr_std,
                rmse_mean,
                rmse_std,
            }
        })
        .collect();
    rows.sort_by(|a, b| (&a.architecture, a.fault_id == "average", &a.fault_id).cmp(&(&b.architecture, b.fault_id == "average", &b.fault_id)));

    let header: Vec<String> = [
        "architecture", "fault_id", "n_runs", "FAR_mean", "FAR_std", "MDR_mean", "MDR_std", "RMSE_mean", "RMSE_std",
    ]
    .iter()
    .map(|h| h.to_string())
    .collect();
    let table: Vec<Vec<String>> = rows.iter().map(|r| {
        vec![
            r.architecture.clone(),
            r.fault_id.clone(),
            r.n_runs.to_string(),
            fmt_opt(r.far_mean),
            fmt_opt(r.far_std),
            fmt_opt(r.mdr_mean),
            fmt_opt(r.mdr_std),
            fmt_opt(r.rmse_mean),
            fmt_opt(r.rmse_std),
        ]
    }).collect();
    let merged = MergedReport {
        protocol_hash,
        runs,
        missing,
        rows,
    };
    let meta = serde_json::json!({
        "kind": "merged_report",
        "protocol_hash": merged.protocol_hash,
        "runs": merged.runs,
        "missing": merged.missing,
    });
    write_with_sidecar(&out_dir.join("merged.csv"), &csv_bytes(&header, table)?, &meta)?;
    write_atomic(&out_dir.join("merged.json"), &artifact::to_json(&merged)?)?;
    Ok(merged)
}
