//! Experiment configuration: flat `key=value` files with CLI flag overrides.

use abstention::problems::InstanceSpec;
use abstention::Error;
use std::collections::HashMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algo {
    Algo1,
    Algo2,
    Algo3,
    Adaptive,
    Passive,
    Glm,
}

impl Algo {
    pub fn parse(s: &str) -> Result<Self, Error> {
        match s.trim() {
            "algo1" => Ok(Algo::Algo1),
            "algo2" => Ok(Algo::Algo2),
            "algo3" => Ok(Algo::Algo3),
            "adaptive" => Ok(Algo::Adaptive),
            "passive" => Ok(Algo::Passive),
            "glm" => Ok(Algo::Glm),
            other => Err(Error::InvalidConfig(format!("unknown algo {other}"))),
        }
    }

    pub fn needs_delta(&self) -> bool {
        matches!(self, Algo::Algo2 | Algo::Algo3)
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Algo::Algo1 => "algo1",
            Algo::Algo2 => "algo2",
            Algo::Algo3 => "algo3",
            Algo::Adaptive => "adaptive",
            Algo::Passive => "passive",
            Algo::Glm => "glm",
        };
        write!(f, "{s}")
    }
}

/// One sweep configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub algos: Vec<Algo>,
    pub model: String,
    pub instance: InstanceSpec,
    pub n_grid: Vec<u64>,
    pub replicates: u64,
    pub seed: u64,
    pub lambda: f64,
    pub delta: f64,
    pub de: Option<(f64, f64)>,
    pub jobs: usize,
    pub out: String,
    /// Monte-Carlo samples for risk evaluation (analytic instances ignore it).
    pub mc_samples: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algos: vec![Algo::Algo1],
            model: "membership".into(),
            instance: InstanceSpec::Linear1d,
            n_grid: vec![256, 1024, 4096],
            replicates: 5,
            seed: 1,
            lambda: 0.2,
            delta: 0.2,
            de: None,
            jobs: 1,
            out: "experiments.csv".into(),
            mc_samples: 100_000,
        }
    }
}

pub fn parse_kv_text(text: &str) -> HashMap<String, String> {
    let mut kv = HashMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some((k, v)) = line.split_once('=') {
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    kv
}

impl ExperimentConfig {
    /// Apply `key=value` pairs on top of the current config.
    pub fn apply_kv(&mut self, kv: &HashMap<String, String>) -> Result<(), Error> {
        let bad = |k: &str, v: &str| Error::InvalidConfig(format!("bad value {v} for {k}"));
        for (k, v) in kv {
            match k.as_str() {
                "algo" => {
                    self.algos = v
                        .split(',')
                        .map(Algo::parse)
                        .collect::<Result<Vec<_>, _>>()?;
                }
                "model" => self.model = v.clone(),
                "n_grid" => {
                    self.n_grid = v
                        .split(',')
                        .map(|s| s.trim().parse().map_err(|_| bad(k, v)))
                        .collect::<Result<Vec<_>, _>>()?;
                }
                "replicates" => self.replicates = v.parse().map_err(|_| bad(k, v))?,
                "seed" => self.seed = v.parse().map_err(|_| bad(k, v))?,
                "lambda" => self.lambda = v.parse().map_err(|_| bad(k, v))?,
                "delta" => self.delta = v.parse().map_err(|_| bad(k, v))?,
                "de_c2" => {
                    let c2 = v.parse().map_err(|_| bad(k, v))?;
                    self.de = Some((c2, self.de.map(|d| d.1).unwrap_or(1.0)));
                }
                "de_alpha2" => {
                    let a2 = v.parse().map_err(|_| bad(k, v))?;
                    self.de = Some((self.de.map(|d| d.0).unwrap_or(1.0), a2));
                }
                "jobs" => self.jobs = v.parse().map_err(|_| bad(k, v))?,
                "out" => self.out = v.clone(),
                "mc_samples" => self.mc_samples = v.parse().map_err(|_| bad(k, v))?,
                _ if k.starts_with("instance")
                    || k.starts_with("holder.")
                    || k.starts_with("lb.")
                    || k.starts_with("glm.")
                    || k.starts_with("const.") => {}
                other => return Err(Error::InvalidConfig(format!("unknown key {other}"))),
            }
        }
        // Instance keys are parsed as a block.
        if kv.contains_key("instance") {
            let text: String = kv
                .iter()
                .map(|(k, v)| format!("{k}={v}\n"))
                .collect();
            self.instance = InstanceSpec::parse_kv(&text)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.algos.is_empty() {
            return Err(Error::InvalidConfig("no algorithms selected".into()));
        }
        if self.n_grid.is_empty() {
            return Err(Error::InvalidConfig("empty n_grid".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("n_grid must be strictly ascending".into()));
        }
        if !(0.0 < self.lambda && self.lambda < 0.5) {
            return Err(Error::InvalidConfig(format!("lambda={} not in (0,1/2)", self.lambda)));
        }
        if self.algos.iter().any(Algo::needs_delta) && !(0.0 < self.delta && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!("delta={} not in (0,1)", self.delta)));
        }
        if !matches!(self.model.as_str(), "membership" | "pool" | "stream") {
            return Err(Error::InvalidConfig(format!("unknown model {}", self.model)));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be at least 1".into()));
        }
        Ok(())
    }

    /// Resolve the output path against `ABSTENTION_OUT_DIR` when set.
    pub fn out_path(&self) -> std::path::PathBuf {
        let p = std::path::PathBuf::from(&self.out);
        if p.is_absolute() {
            return p;
        }
        match std::env::var_os("ABSTENTION_OUT_DIR") {
            Some(dir) => std::path::PathBuf::from(dir).join(p),
            None => p,
        }
    }
}
