//! Experiment harness for the abstention active-learning algorithms.
//!
//! Subcommands: `run` (single run, optional trace dump), `sweep`
//! (budgets x replicates grid to CSV with a summary block), `plot`
//! (log-log rate figure from a sweep CSV). Configuration comes from a flat
//! `key=value` file plus flag overrides; identical config and seed give
//! byte-identical data rows (timings aside).

mod config;
mod plot;
mod sweep;

use clap::{Args, Parser, Subcommand};
use config::{Algo, ExperimentConfig};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "abstention", version, about = "Active learning with a reject option: experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<String>,
    /// Comma-separated algorithms: algo1,algo2,algo3,adaptive,passive,glm.
    #[arg(long)]
    algo: Option<String>,
    /// Query model: membership | pool | stream.
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated ascending label budgets.
    #[arg(long = "n-grid")]
    n_grid: Option<String>,
    #[arg(long)]
    replicates: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fixed abstention cost (settings 1, adaptive, passive, glm).
    #[arg(long)]
    lambda: Option<f64>,
    /// Abstention-rate budget (settings 2 and 3).
    #[arg(long)]
    delta: Option<f64>,
    /// Detectability constant C2 (setting 3).
    #[arg(long = "de-c2")]
    de_c2: Option<f64>,
    /// Detectability exponent alpha2 (setting 3).
    #[arg(long = "de-alpha2")]
    de_alpha2: Option<f64>,
    /// Parallel replicate workers.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output CSV path (relative paths land under $ABSTENTION_OUT_DIR).
    #[arg(long)]
    out: Option<String>,
    /// Extra key=value overrides (repeatable), e.g. --set instance=glm.
    #[arg(long = "set")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// One run of one algorithm at one budget; prints the record.
    Run {
        #[command(flatten)]
        overrides: Overrides,
        /// Label budget for this run.
        #[arg(long, default_value_t = 1024)]
        n: u64,
        /// Write the per-round trace CSV here.
        #[arg(long)]
        trace: Option<String>,
    },
    /// Full budgets x replicates sweep; writes CSV rows plus a summary block.
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Render a log-log rate figure from a sweep CSV.
    Plot {
        /// Input sweep CSV.
        #[arg(long)]
        csv: String,
        /// Output SVG path.
        #[arg(long)]
        out: String,
    },
}

fn build_config(ov: &Overrides) -> Result<ExperimentConfig, abstention::Error> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &ov.config {
        let text = std::fs::read_to_string(path).map_err(|e| {
            abstention::Error::InvalidConfig(format!("cannot read config {path}: {e}"))
        })?;
        cfg.apply_kv(&config::parse_kv_text(&text))?;
    }
    let mut kv = std::collections::HashMap::new();
    for s in &ov.set {
        if let Some((k, v)) = s.split_once('=') {
            kv.insert(k.trim().to_string(), v.trim().to_string());
        } else {
            return Err(abstention::Error::InvalidConfig(format!("--set wants key=value, got {s}")));
        }
    }
    if let Some(v) = &ov.algo {
        kv.insert("algo".into(), v.clone());
    }
    if let Some(v) = &ov.model {
        kv.insert("model".into(), v.clone());
    }
    if let Some(v) = &ov.n_grid {
        kv.insert("n_grid".into(), v.clone());
    }
    if let Some(v) = ov.replicates {
        kv.insert("replicates".into(), v.to_string());
    }
    if let Some(v) = ov.seed {
        kv.insert("seed".into(), v.to_string());
    }
    if let Some(v) = ov.lambda {
        kv.insert("lambda".into(), v.to_string());
    }
    if let Some(v) = ov.delta {
        kv.insert("delta".into(), v.to_string());
    }
    if let Some(v) = ov.de_c2 {
        kv.insert("de_c2".into(), v.to_string());
    }
    if let Some(v) = ov.de_alpha2 {
        kv.insert("de_alpha2".into(), v.to_string());
    }
    if let Some(v) = ov.jobs {
        kv.insert("jobs".into(), v.to_string());
    }
    if let Some(v) = &ov.out {
        kv.insert("out".into(), v.clone());
    }
    cfg.apply_kv(&kv)?;
    Ok(cfg)
}

fn real_main() -> Result<(), abstention::Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { overrides, n, trace } => {
            let cfg = build_config(&overrides)?;
            let algo = *cfg.algos.first().unwrap_or(&Algo::Algo1);
            let (rec, tr) = sweep::run_once(&cfg, algo, n)?;
            println!("{}", sweep::CSV_HEADER);
            println!("{}", rec.to_csv_row());
            if algo == Algo::Glm {
                print_glm_table(&cfg, n)?;
            }
            if let (Some(path), Some(tr)) = (trace, tr) {
                std::fs::write(&path, tr.to_csv()).map_err(|e| {
                    abstention::Error::InvalidConfig(format!("cannot write trace {path}: {e}"))
                })?;
                eprintln!("trace written to {path}");
            }
            Ok(())
        }
        Command::Sweep { overrides } => {
            let cfg = build_config(&overrides)?;
            let csv = sweep::run_sweep(&cfg)?;
            let path = cfg.out_path();
            if let Some(dir) = path.parent() {
                if !dir.as_os_str().is_empty() {
                    let _ = std::fs::create_dir_all(dir);
                }
            }
            std::fs::write(&path, csv).map_err(|e| {
                abstention::Error::InvalidConfig(format!("cannot write {}: {e}", path.display()))
            })?;
            eprintln!("sweep written to {}", path.display());
            Ok(())
        }
        Command::Plot { csv, out } => {
            let text = std::fs::read_to_string(&csv).map_err(|e| {
                abstention::Error::InvalidConfig(format!("cannot read {csv}: {e}"))
            })?;
            let svg = plot::render_svg(&text)?;
            std::fs::write(&out, svg).map_err(|e| {
                abstention::Error::InvalidConfig(format!("cannot write {out}: {e}"))
            })?;
            eprintln!("plot written to {out}");
            Ok(())
        }
    }
}

/// Per-pair report for the direction-recovery pipeline: pair index, angle
/// estimate, residual against the instance's known direction, labels used.
fn print_glm_table(cfg: &ExperimentConfig, n: u64) -> Result<(), abstention::Error> {
    use abstention::glm::recover_direction;
    use abstention::problems::EtaKind;
    let instance = cfg.instance.build()?;
    let rd = recover_direction(&instance, n, cfg.lambda, cfg.seed)?;
    let truth: Option<Vec<f64>> = match &instance.kind {
        EtaKind::Glm { w, .. } => Some(w.clone()),
        _ => None,
    };
    println!("pair,theta_hat,residual,labels,degenerate");
    for (k, th) in rd.pair_angles.iter().enumerate() {
        let residual = truth
            .as_ref()
            .map(|w| {
                let target = w[k + 1].atan2(w[0]).rem_euclid(2.0 * std::f64::consts::PI);
                let mut d = (th - target).abs() % (2.0 * std::f64::consts::PI);
                if d > std::f64::consts::PI {
                    d = 2.0 * std::f64::consts::PI - d;
                }
                format!("{d:.6}")
            })
            .unwrap_or_default();
        println!(
            "(1;{}),{th:.6},{residual},{},{}",
            k + 2,
            rd.pair_labels[k],
            rd.degenerate[k]
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
