//! Sweep execution: (algorithm, budget, replicate) grid with reproducible
//! seeding, CSV persistence and a fitted-slope summary block.

use crate::config::{Algo, ExperimentConfig};
use abstention::adaptive::{run_adaptive, AdaptiveOptions};
use abstention::classifier::AbstainClassifier;
use abstention::fixed_cost::run_algorithm1;
use abstention::glm::recover_direction;
use abstention::known_marginal::{run_algorithm2, Algo2Options};
use abstention::oracle::{Oracle, QueryModel};
use abstention::partition::TreeParams;
use abstention::problems::{EtaKind, McOptions, ProblemInstance};
use abstention::risk::{fit_rate, risk_of, RiskMode};
use abstention::trace::RunTrace;
use abstention::unlabelled::{run_algorithm3, Algo3Options, DeParams};
use abstention::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::time::Instant;

/// One CSV row.
#[derive(Debug, Clone)]
pub struct ExperimentRecord {
    pub run_id: String,
    pub algo: Algo,
    pub model: String,
    pub n: u64,
    pub m: u64,
    pub seed: u64,
    pub excess_risk: f64,
    pub abstain_rate: f64,
    pub feasible: u8,
    pub labels_used: u64,
    pub wall_ms: u128,
    pub error: Option<String>,
}

pub const CSV_HEADER: &str =
    "run_id,algo,model,n,m,seed,excess_risk,abstain_rate,feasible,labels_used,wall_ms,error";

impl ExperimentRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.run_id,
            self.algo,
            self.model,
            self.n,
            self.m,
            self.seed,
            self.excess_risk,
            self.abstain_rate,
            self.feasible,
            self.labels_used,
            self.wall_ms,
            self.error.as_deref().unwrap_or("")
        )
    }
}

fn model_of(s: &str) -> QueryModel {
    match s {
        "pool" => QueryModel::Pool,
        "stream" => QueryModel::Stream,
        _ => QueryModel::Membership,
    }
}

/// Run one (algo, n, replicate) cell of the grid.
pub fn run_single(
    cfg: &ExperimentConfig,
    instance: &ProblemInstance,
    algo: Algo,
    n: u64,
    replicate: u64,
) -> ExperimentRecord {
    let seed = cfg.seed + replicate;
    let t0 = Instant::now();
    let mut rec = ExperimentRecord {
        run_id: format!("{algo}-n{n}-r{replicate}"),
        algo,
        model: cfg.model.clone(),
        n,
        m: 0,
        seed,
        excess_risk: f64::NAN,
        abstain_rate: f64::NAN,
        feasible: 1,
        labels_used: 0,
        wall_ms: 0,
        error: None,
    };
    match run_inner(cfg, instance, algo, n, seed, &mut rec) {
        Ok(_) => {}
        Err(e) => rec.error = Some(e.to_string().replace(',', ";")),
    }
    rec.wall_ms = t0.elapsed().as_millis();
    rec
}

fn run_inner(
    cfg: &ExperimentConfig,
    instance: &ProblemInstance,
    algo: Algo,
    n: u64,
    seed: u64,
    rec: &mut ExperimentRecord,
) -> Result<Option<RunTrace>> {
    let tp = TreeParams::default_for_dim(instance.dim)?;
    let sm = instance.descriptors.smoothness;
    let mc = McOptions { samples: cfg.mc_samples };
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xabcd_1234);
    let model = model_of(&cfg.model);

    fn eval_fixed(
        instance: &ProblemInstance,
        lambda: f64,
        mc: &McOptions,
        rng: &mut ChaCha12Rng,
        g: &AbstainClassifier,
        rec: &mut ExperimentRecord,
    ) {
        let rep = risk_of(instance, g, RiskMode::Fixed { lambda }, mc, rng);
        rec.excess_risk = rep.excess;
        rec.abstain_rate = rep.abstain_rate;
    }

    let trace = match algo {
        Algo::Algo1 => {
            let mut oracle = Oracle::new(model, n, instance, seed);
            let out = run_algorithm1(instance, &mut oracle, n, cfg.lambda, sm, tp)?;
            rec.labels_used = out.labels_used;
            eval_fixed(instance, cfg.lambda, &mc, &mut rng, &out.classifier, rec);
            Some(out.trace)
        }
        Algo::Adaptive => {
            let mut oracle = Oracle::new(model, n, instance, seed);
            let out = run_adaptive(instance, &mut oracle, n, cfg.lambda, tp, AdaptiveOptions::default())?;
            rec.labels_used = out.labels_used;
            eval_fixed(instance, cfg.lambda, &mc, &mut rng, &out.classifier, rec);
            Some(out.trace)
        }
        Algo::Passive => {
            let g = abstention::risk::passive_plugin(
                instance,
                n,
                RiskMode::Fixed { lambda: cfg.lambda },
                cfg.delta,
                &mut rng,
            )?;
            rec.labels_used = n;
            eval_fixed(instance, cfg.lambda, &mc, &mut rng, &g, rec);
            None
        }
        Algo::Algo2 => {
            let mut oracle = Oracle::new(model, n, instance, seed);
            let out = run_algorithm2(instance, &mut oracle, n, cfg.delta, sm, tp, Algo2Options::default())?;
            rec.labels_used = out.labels_used;
            let rep = risk_of(instance, &out.classifier, RiskMode::Bounded, &mc, &mut rng);
            rec.excess_risk = rep.excess;
            let meas = out.classifier.abstain_measure(instance, &mc, &mut rng);
            rec.abstain_rate = meas.value;
            rec.feasible = u8::from(meas.value <= cfg.delta + 1e-9 + 3.0 * meas.stderr);
            Some(out.trace)
        }
        Algo::Algo3 => {
            let mut oracle = Oracle::new(model, n, instance, seed);
            let de = cfg.de.map(|(c2, alpha2)| DeParams { c2, alpha2 });
            let out = run_algorithm3(
                instance,
                &mut oracle,
                n,
                cfg.delta,
                sm,
                tp,
                de,
                Algo3Options::default(),
            )?;
            rec.labels_used = out.labels_used;
            rec.m = out.m_n;
            let rep = risk_of(instance, &out.classifier, RiskMode::Bounded, &mc, &mut rng);
            rec.excess_risk = rep.excess;
            let meas = out.classifier.abstain_measure(instance, &mc, &mut rng);
            rec.abstain_rate = meas.value;
            rec.feasible = u8::from(meas.value <= cfg.delta + 1e-9 + 3.0 * meas.stderr);
            Some(out.trace)
        }
        Algo::Glm => {
            let rd = recover_direction(instance, n, cfg.lambda, seed)?;
            rec.labels_used = rd.labels_used;
            let EtaKind::Glm { w, .. } = &instance.kind else {
                return Err(Error::InvalidConfig("glm algo needs a glm instance".into()));
            };
            let err: f64 = rd
                .w_hat
                .iter()
                .zip(w)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            rec.excess_risk = err;
            rec.abstain_rate = 0.0;
            None
        }
    };
    Ok(trace)
}

/// Execute the full sweep and return the CSV text (rows sorted by
/// `(algo, n, replicate)`, then a `#`-prefixed summary block).
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<String> {
    cfg.validate()?;
    let instance = cfg.instance.build()?;

    let mut grid: Vec<(Algo, u64, u64)> = Vec::new();
    for &algo in &cfg.algos {
        for &n in &cfg.n_grid {
            for r in 0..cfg.replicates {
                grid.push((algo, n, r));
            }
        }
    }
    let mut records: Vec<ExperimentRecord> = if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| {
            grid.par_iter()
                .map(|(a, n, r)| run_single(cfg, &instance, *a, *n, *r))
                .collect()
        })
    } else {
        grid.iter()
            .map(|(a, n, r)| run_single(cfg, &instance, *a, *n, *r))
            .collect()
    };
    records.sort_by(|a, b| {
        a.algo
            .to_string()
            .cmp(&b.algo.to_string())
            .then(a.n.cmp(&b.n))
            .then(a.run_id.cmp(&b.run_id))
    });

    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }

    // Summary block: per-(algo, n) median excess and per-algo fitted slope.
    for &algo in &cfg.algos {
        let mut budgets = Vec::new();
        let mut medians = Vec::new();
        for &n in &cfg.n_grid {
            let mut ex: Vec<f64> = records
                .iter()
                .filter(|r| r.algo == algo && r.n == n && r.error.is_none())
                .map(|r| r.excess_risk)
                .filter(|e| e.is_finite())
                .collect();
            if ex.is_empty() {
                continue;
            }
            ex.sort_by(f64::total_cmp);
            let med = ex[ex.len() / 2];
            let _ = writeln!(out, "# summary algo={algo} n={n} median_excess={med}");
            budgets.push(n);
            medians.push(med);
        }
        if budgets.len() >= 2 {
            if let Ok(fit) = fit_rate(&budgets, &medians) {
                let _ = writeln!(
                    out,
                    "# slope algo={algo} slope={:.4} points={} dropped={}",
                    fit.slope, fit.points_used, fit.points_dropped
                );
            }
        }
    }
    Ok(out)
}

/// Single-run entry point used by the `run` subcommand: returns the record
/// and, when the algorithm produces one, the trace.
pub fn run_once(
    cfg: &ExperimentConfig,
    algo: Algo,
    n: u64,
) -> Result<(ExperimentRecord, Option<RunTrace>)> {
    cfg.validate()?;
    let instance = cfg.instance.build()?;
    let t0 = Instant::now();
    let mut rec = ExperimentRecord {
        run_id: format!("{algo}-n{n}-r0"),
        algo,
        model: cfg.model.clone(),
        n,
        m: 0,
        seed: cfg.seed,
        excess_risk: f64::NAN,
        abstain_rate: f64::NAN,
        feasible: 1,
        labels_used: 0,
        wall_ms: 0,
        error: None,
    };
    let trace = run_inner(cfg, &instance, algo, n, cfg.seed, &mut rec)?;
    rec.wall_ms = t0.elapsed().as_millis();
    Ok((rec, trace))
}
