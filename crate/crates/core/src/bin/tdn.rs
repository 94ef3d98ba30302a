use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tdn::arch::{IdnArch, VaeArch};
use tdn::config::ExperimentConfig;
use tdn::pipeline;
use tdn::sim::{Scenario, System};
use tdn::{Error, Result};

/// Decoupled residual networks for fault detection and estimation.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Generate training and test datasets.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Scenario such as `train` or `test-F09`; repeatable. All when omitted.
        #[arg(long)]
        scenario: Vec<String>,
    },
    /// Fit the scaler and pretrain the VAE on normal data.
    Pretrain {
        #[command(flatten)]
        common: Common,
    },
    /// Transfer-train the decoupling network.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Detect and estimate faults on every test set.
    Evaluate {
        #[command(flatten)]
        common: Common,
    },
    /// Merge finished runs into mean/std tables.
    Report {
        /// Run output directories holding summary.json.
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// Config file plus overrides; flags win over the file.
#[derive(Args)]
struct Common {
    /// TOML experiment file. Without it, defaults for `--system` are used.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Decoupling network: D1, D2 or D3.
    #[arg(long)]
    idn: Option<String>,
    /// VAE: V1 .. V6.
    #[arg(long)]
    vae: Option<String>,
    #[arg(long)]
    lambda_tl: Option<f64>,
    #[arg(long)]
    lambda_v: Option<f64>,
    /// Epochs for both pretraining and transfer.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test_faulty: Option<usize>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    model_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.system) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(s)) => ExperimentConfig::defaults(s.parse()?),
            (None, None) => return Err(Error::Config("give --config or --system".into())),
        };
        if let Some(s) = &self.system {
            let system: System = s.parse()?;
            if system != cfg.system {
                return Err(Error::Config(format!("--system {system} contradicts the config file ({})", cfg.system)));
            }
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.idn {
            cfg.architecture.idn = v.parse::<IdnArch>()?;
        }
        if let Some(v) = &self.vae {
            cfg.architecture.vae = v.parse::<VaeArch>()?;
        }
        if let Some(v) = self.lambda_tl {
            cfg.transfer.lambda_tl = v;
        }
        if let Some(v) = self.lambda_v {
            cfg.vae.lambda_v = v;
        }
        if let Some(v) = self.epochs {
            cfg.vae.epochs = v;
            cfg.transfer.epochs = v;
        }
        if let Some(v) = self.n_train {
            cfg.data.n_train = v;
        }
        if let Some(v) = self.n_test_faulty {
            cfg.data.n_test_faulty = v;
        }
        if let Some(v) = &self.data_dir {
            cfg.paths.data_dir = v.clone();
        }
        if let Some(v) = &self.model_dir {
            cfg.paths.model_dir = v.clone();
        }
        if let Some(v) = &self.out_dir {
            cfg.paths.out_dir = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{:.2}%", 100.0 * x)).unwrap_or_else(|| "-".into())
}

fn run(cli: Cli) -> Result<()> {
    match cli.verb {
        Verb::Simulate { common, scenario } => {
            let cfg = common.resolve()?;
            let scenarios = scenario.iter().map(|s| s.parse()).collect::<Result<Vec<Scenario>>>()?;
            for p in pipeline::cmd_simulate(&cfg, &scenarios)? {
                println!("{}", p.display());
            }
        }
        Verb::Pretrain { common } => {
            let cfg = common.resolve()?;
            let out = pipeline::cmd_pretrain(&cfg)?;
            if let (Some(a), Some(b)) = (out.losses.first(), out.losses.last()) {
                println!("J_V first epoch {a:.4}, last epoch {b:.4}");
            }
            println!("{}", out.model_path.display());
        }
        Verb::Train { common } => {
            let cfg = common.resolve()?;
            let out = pipeline::cmd_train(&cfg)?;
            if let Some(r) = out.trace.last() {
                println!("last batch J_tl {:.4} (J_mmd {:.4})", r.loss.total, r.loss.mmd);
            }
            println!("{}", out.model_path.display());
        }
        Verb::Evaluate { common } => {
            let cfg = common.resolve()?;
            let s = pipeline::cmd_evaluate(&cfg)?;
            println!("{:<10} {:>8} {:>8} {:>8}", "fault", "FAR", "MDR", "RMSE");
            for f in &s.report.faults {
                let r = f.rmse.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
                println!("{:<10} {:>8} {:>8} {:>8}", f.fault_id, pct(f.far), pct(f.mdr), r);
            }
            let r = s.report.armse.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
            println!("{:<10} {:>8} {:>8} {:>8}", "average", pct(s.report.afar), pct(s.report.amdr), r);
            println!("J_th {:.4}, training alarm rate {}", s.report.j_th, pct(Some(s.train_far)));
        }
        Verb::Report { runs, out_dir } => {
            let m = pipeline::cmd_report(&runs, &out_dir)?;
            for r in &m.missing {
                eprintln!("missing run: {r}");
            }
            println!("merged {} run(s) into {}", m.runs.len(), out_dir.join("merged.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
