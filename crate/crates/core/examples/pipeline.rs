//! Full numerical-example run in a scratch directory: simulate, pretrain,
//! train and evaluate, then print the detection table.

use tdn::config::ExperimentConfig;
use tdn::pipeline::run_all;
use tdn::sim::System;

fn main() -> tdn::Result<()> {
    let dir = std::env::temp_dir().join(format!("tdn-example-{}", std::process::id()));
    let mut cfg = ExperimentConfig::defaults(System::Numex);
    cfg.paths.data_dir = dir.join("data");
    cfg.paths.model_dir = dir.join("models");
    cfg.paths.out_dir = dir.join("out");
    for d in [&cfg.paths.data_dir, &cfg.paths.model_dir, &cfg.paths.out_dir] {
        std::fs::create_dir_all(d).map_err(|e| tdn::Error::io(d, e))?;
    }

    let s = run_all(&cfg)?;
    println!("{} {} seed {}", s.system, s.architecture, s.seed);
    for f in &s.report.faults {
        let pct = |v: Option<f64>| v.map(|x| format!("{:6.2}%", 100.0 * x)).unwrap_or_else(|| "      -".into());
        let rmse = f.rmse.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        println!("{:<8} FAR {}  MDR {}  RMSE {rmse}", f.fault_id, pct(f.far), pct(f.mdr));
    }
    println!("J_th {:.3}, max residual correlation {:.3}", s.report.j_th, s.max_offdiag_corr);
    println!("outputs in {}", dir.display());
    Ok(())
}
