//! The three active-learning interaction models and their label subroutine.
//!
//! - membership: a label can be requested at any point (we use cell centers);
//! - pool: labels come from a finite pre-drawn pool, a cell with no pool
//!   point left is discarded;
//! - stream: i.i.d. points pass by, at most `N_n = ceil(2 n^2 ln n)`
//!   consecutive draws are discarded before the cell itself is.
//!
//! Budget accounting is strict: exactly one unit per label, none for a
//! discard. Every interaction lands in an auditable ledger.

use crate::partition::Cell;
use crate::problems::ProblemInstance;
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryModel {
    Membership,
    Pool,
    Stream,
}

impl std::fmt::Display for QueryModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QueryModel::Membership => write!(f, "membership"),
            QueryModel::Pool => write!(f, "pool"),
            QueryModel::Stream => write!(f, "stream"),
        }
    }
}

/// Outcome of one label request.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelOutcome {
    Label { y: u8, at: Vec<f64> },
    Discarded,
}

/// One ledger row for audits.
#[derive(Debug, Clone)]
pub struct QueryEvent {
    pub seq: u64,
    pub kind: &'static str,
    pub cell: Option<(u32, u64)>,
    pub labelled: bool,
}

/// Oracle state: query model, budget, pool/stream bookkeeping, RNG stream.
#[derive(Debug)]
pub struct Oracle {
    pub model: QueryModel,
    pub budget: u64,
    pub used: u64,
    /// Remaining unlabelled pool points (pool model), in insertion order.
    pool: Vec<Vec<f64>>,
    pool_taken: Vec<bool>,
    pub pool_size: u64,
    /// Max consecutive discarded stream draws before a cell is dropped.
    pub stream_cutoff: u64,
    /// Log of unlabelled draws (setting 3).
    unlabelled_drawn: u64,
    ledger: Vec<QueryEvent>,
    rng: ChaCha12Rng,
}

/// `N_n = ceil(2 n^2 ln n)`.
pub fn stream_cutoff(n: u64) -> u64 {
    if n < 2 {
        return 1;
    }
    (2.0 * (n as f64).powi(2) * (n as f64).ln()).ceil() as u64
}

/// `M_n = ceil(max{2 n^3, 16 n^2 ln n})`.
pub fn pool_size(n: u64) -> u64 {
    let a = 2.0 * (n as f64).powi(3);
    let b = 16.0 * (n as f64).powi(2) * (n as f64).max(1.0).ln();
    a.max(b).ceil() as u64
}

impl Oracle {
    /// Membership-query oracle with the given label budget.
    pub fn membership(n: u64, seed: u64) -> Oracle {
        Oracle {
            model: QueryModel::Membership,
            budget: n,
            used: 0,
            pool: Vec::new(),
            pool_taken: Vec::new(),
            pool_size: 0,
            stream_cutoff: stream_cutoff(n),
            unlabelled_drawn: 0,
            ledger: Vec::new(),
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Pool oracle: fills the pool with `M_n` i.i.d. draws from the marginal.
    pub fn pool(n: u64, instance: &ProblemInstance, seed: u64) -> Oracle {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let m = pool_size(n);
        let pool: Vec<Vec<f64>> = (0..m).map(|_| instance.sample_x(&mut rng)).collect();
        Oracle {
            model: QueryModel::Pool,
            budget: n,
            used: 0,
            pool_taken: vec![false; pool.len()],
            pool,
            pool_size: m,
            stream_cutoff: stream_cutoff(n),
            unlabelled_drawn: 0,
            ledger: Vec::new(),
            rng,
        }
    }

    /// Stream oracle with cutoff `N_n`.
    pub fn stream(n: u64, seed: u64) -> Oracle {
        Oracle {
            model: QueryModel::Stream,
            budget: n,
            used: 0,
            pool: Vec::new(),
            pool_taken: Vec::new(),
            pool_size: 0,
            stream_cutoff: stream_cutoff(n),
            unlabelled_drawn: 0,
            ledger: Vec::new(),
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    pub fn new(model: QueryModel, n: u64, instance: &ProblemInstance, seed: u64) -> Oracle {
        match model {
            QueryModel::Membership => Oracle::membership(n, seed),
            QueryModel::Pool => Oracle::pool(n, instance, seed),
            QueryModel::Stream => Oracle::stream(n, seed),
        }
    }

    pub fn remaining(&self) -> u64 {
        self.budget - self.used
    }

    pub fn labels_used(&self) -> u64 {
        self.used
    }

    pub fn pool_remaining(&self) -> usize {
        self.pool_taken.iter().filter(|t| !**t).count()
    }

    pub fn unlabelled_drawn(&self) -> u64 {
        self.unlabelled_drawn
    }

    /// Derive an independent seed from this oracle's stream (for auxiliary
    /// samplers that must vary with the run seed).
    pub fn fork_seed(&mut self) -> u64 {
        self.rng.random::<u64>()
    }

    pub fn ledger(&self) -> &[QueryEvent] {
        &self.ledger
    }

    fn log(&mut self, kind: &'static str, cell: Option<(u32, u64)>, labelled: bool) {
        self.ledger.push(QueryEvent {
            seq: self.ledger.len() as u64,
            kind,
            cell,
            labelled,
        });
    }

    /// Request a label for `cell` under the oracle's query model.
    pub fn request_label(
        &mut self,
        cell: &Cell,
        instance: &ProblemInstance,
    ) -> Result<LabelOutcome> {
        if self.used >= self.budget {
            return Err(Error::BudgetExhausted);
        }
        match self.model {
            QueryModel::Membership => {
                let at = cell.center();
                let y = instance.sample_label(&at, &mut self.rng);
                self.used += 1;
                self.log("label", Some(cell.id()), true);
                Ok(LabelOutcome::Label { y, at })
            }
            QueryModel::Pool => {
                // First unlabelled pool point (insertion order) inside the cell.
                let found = self
                    .pool
                    .iter()
                    .enumerate()
                    .position(|(i, x)| !self.pool_taken[i] && cell.contains(x));
                match found {
                    Some(i) => {
                        self.pool_taken[i] = true;
                        let at = self.pool[i].clone();
                        let y = instance.sample_label(&at, &mut self.rng);
                        self.used += 1;
                        self.log("label", Some(cell.id()), true);
                        Ok(LabelOutcome::Label { y, at })
                    }
                    None => {
                        self.log("discard", Some(cell.id()), false);
                        Ok(LabelOutcome::Discarded)
                    }
                }
            }
            QueryModel::Stream => {
                for _ in 0..self.stream_cutoff {
                    let x = instance.sample_x(&mut self.rng);
                    if cell.contains(&x) {
                        let y = instance.sample_label(&x, &mut self.rng);
                        self.used += 1;
                        self.log("label", Some(cell.id()), true);
                        return Ok(LabelOutcome::Label { y, at: x });
                    }
                }
                self.log("discard", Some(cell.id()), false);
                Ok(LabelOutcome::Discarded)
            }
        }
    }

    /// Membership-only: label an explicit point.
    pub fn label_at(&mut self, x: &[f64], instance: &ProblemInstance) -> Result<u8> {
        if self.model != QueryModel::Membership {
            return Err(Error::UnsupportedModel(format!(
                "label_at requires the membership model, not {}",
                self.model
            )));
        }
        if self.used >= self.budget {
            return Err(Error::BudgetExhausted);
        }
        let y = instance.sample_label(x, &mut self.rng);
        self.used += 1;
        self.log("label", None, true);
        Ok(y)
    }

    /// Draw `count` fresh unlabelled points (setting 3).
    pub fn draw_unlabelled(&mut self, count: u64, instance: &ProblemInstance) -> Vec<Vec<f64>> {
        let out: Vec<Vec<f64>> = (0..count).map(|_| instance.sample_x(&mut self.rng)).collect();
        self.unlabelled_drawn += count;
        if count > 0 {
            self.log("unlabelled", None, false);
        }
        out
    }

    /// Ledger as CSV (`seq,kind,h,i,labelled`).
    pub fn ledger_csv(&self) -> String {
        let mut out = String::from("seq,kind,h,i,labelled\n");
        for e in &self.ledger {
            let (h, i) = match e.cell {
                Some((h, i)) => (h.to_string(), i.to_string()),
                None => (String::new(), String::new()),
            };
            out.push_str(&format!("{},{},{},{},{}\n", e.seq, e.kind, h, i, e.labelled));
        }
        out
    }
}
