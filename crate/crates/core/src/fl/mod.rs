//! Training regimes: centralized, local-only, federated averaging and
//! personalized federated learning with a shared body and private heads.

mod aggregate;
mod local;
mod regimes;

use serde::{Deserialize, Serialize};

pub use aggregate::{aggregate, compute_weights, AggregationPolicy, ServerAudit};
pub use local::{local_train, mean_nll, LocalOutcome, LocalSchedule};
pub use regimes::{
    run_centralized, run_fl, run_local_only, run_pfl, run_pfl_finetune, Exclusion, RoundReport,
    TrainOutput, TrainedModel,
};

use crate::error::{Error, Result};
use crate::model::{GrowthModel, Instance};
use crate::nn::ParamSet;

/// Training regime as selected on the command line. The `-sqrt` variants use
/// square-root aggregation weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Centralized,
    Local,
    Fl,
    FlSqrt,
    Pfl,
    PflSqrt,
    PflFinetune,
}

impl Regime {
    pub const ALL: [Regime; 7] = [
        Regime::Centralized,
        Regime::Local,
        Regime::Fl,
        Regime::FlSqrt,
        Regime::Pfl,
        Regime::PflSqrt,
        Regime::PflFinetune,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Centralized => "centralized",
            Regime::Local => "local",
            Regime::Fl => "fl",
            Regime::FlSqrt => "fl-sqrt",
            Regime::Pfl => "pfl",
            Regime::PflSqrt => "pfl-sqrt",
            Regime::PflFinetune => "pfl-finetune",
        }
    }

    pub fn parse(s: &str) -> Option<Regime> {
        Regime::ALL.into_iter().find(|r| r.name() == s)
    }

    pub fn policy(self) -> AggregationPolicy {
        match self {
            Regime::FlSqrt | Regime::PflSqrt => AggregationPolicy::Sqrt,
            _ => AggregationPolicy::Size,
        }
    }

    /// Runs this regime with `cfg`, overriding its aggregation policy.
    pub fn run(self, model: &GrowthModel, cfg: &FederationConfig, clients: &[ClientState]) -> Result<TrainOutput> {
        let cfg = FederationConfig {
            policy: self.policy(),
            ..cfg.clone()
        };
        match self {
            Regime::Centralized => run_centralized(model, &cfg, clients),
            Regime::Local => run_local_only(model, &cfg, clients),
            Regime::Fl | Regime::FlSqrt => run_fl(model, &cfg, clients),
            Regime::Pfl | Regime::PflSqrt => run_pfl(model, &cfg, clients),
            Regime::PflFinetune => run_pfl_finetune(model, &cfg, clients),
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationConfig {
    pub rounds: usize,
    pub local_epochs: usize,
    pub learning_rate: f64,
    pub policy: AggregationPolicy,
    pub seed: u64,
    /// Local epochs after federated training in `pfl-finetune`.
    pub finetune_epochs: usize,
    /// Per-step cap on the gradient L2 norm; off by default.
    pub grad_clip: Option<f64>,
    /// Learning rate of round `r` (0-based) is `learning_rate · lr_decay^r`.
    pub lr_decay: f64,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            rounds: 30,
            local_epochs: 2,
            learning_rate: 1e-3,
            policy: AggregationPolicy::Size,
            seed: 0,
            finetune_epochs: 2,
            grad_clip: None,
            lr_decay: 1.0,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds < 1 {
            return Err(Error::config("training.rounds", "must be >= 1"));
        }
        if self.local_epochs < 1 {
            return Err(Error::config("training.local_epochs", "must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("training.learning_rate", "must be > 0"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::config("training.lr_decay", "must lie in (0, 1]"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::config("training.grad_clip", "must be > 0"));
            }
        }
        Ok(())
    }

    /// Local schedule for `round` with `epochs` passes.
    pub fn schedule(&self, round: usize, epochs: usize) -> LocalSchedule {
        LocalSchedule {
            epochs,
            learning_rate: self.learning_rate * self.lr_decay.powi(round as i32),
            grad_clip: self.grad_clip,
            seed: self.seed,
            round,
        }
    }
}

/// One participant with its private data. Heads are held by the regime
/// runners, never by the server.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: u32,
    pub train: Vec<Instance>,
    /// Held-out slice of the client's training animals; never the test set.
    pub validation: Vec<Instance>,
    /// Private head, present only under personalized regimes.
    pub private_head: Option<ParamSet>,
}

impl ClientState {
    pub fn new(client_id: u32, train: Vec<Instance>) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Argument(format!("client {client_id} has no training instances")));
        }
        Ok(Self {
            client_id,
            train,
            validation: Vec::new(),
            private_head: None,
        })
    }

    pub fn with_validation(mut self, validation: Vec<Instance>) -> Self {
        self.validation = validation;
        self
    }

    pub fn n(&self) -> usize {
        self.train.len()
    }
}

fn check_clients(clients: &[ClientState]) -> Result<()> {
    if clients.is_empty() {
        return Err(Error::Argument("at least one client is required".into()));
    }
    let mut ids: Vec<u32> = clients.iter().map(|c| c.client_id).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Argument(format!("duplicate client id {}", w[0])));
    }
    if let Some(c) = clients.iter().find(|c| c.train.is_empty()) {
        return Err(Error::Argument(format!("client {} has no training instances", c.client_id)));
    }
    Ok(())
}
