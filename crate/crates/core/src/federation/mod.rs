//! Federated training over ego-network clients.
//!
//! Each round the server samples clients, every sampled client blends its
//! previous local model with the broadcast model according to how far apart
//! their predicted label distributions are, trains with the fairness penalty,
//! and uploads parameters together with its fairness gaps and group balance
//! score. The server turns those statistics into aggregation weights.

mod client;
mod orchestrate;
mod server;

pub use client::{client_local_update, ClientState, ClientUpload, UploadSummary};
pub use orchestrate::{
    run_federation, run_fedavg_baseline, sample_clients, Federation, ReplayRecord, RoundReport,
    RunOutcome,
};
pub use server::{combined_weights, server_aggregate, server_combined_weights, softmax, ServerWeights};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{Aggregate, DistributionMode, StatsError};
use crate::nn::{Activation, NnError};

#[derive(Debug, Error)]
pub enum FederationError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("non-finite values in round {round} (client {client:?})")]
    NonFinite { round: usize, client: Option<usize> },
    #[error("invalid federation setup: {0}")]
    InvalidConfig(String),
    #[error("failed to write replay record: {0}")]
    Replay(#[from] std::io::Error),
}

/// How the blending coefficient between local and broadcast model is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Jensen–Shannon divergence of the two models' label distributions.
    JsDivergence,
    /// Fixed coefficient; `1.0` always restarts from the broadcast model.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Softmax of bias and fairness scores.
    #[default]
    Combined,
    /// `1/K'` for every sampled client.
    Uniform,
}

/// Which model is scored on each client's local test nodes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalEvalModel {
    #[default]
    Global,
    Client,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub hidden_dim: usize,
    pub activation: Activation,
    pub learning_rate: f64,
    /// Fairness penalty weight.
    pub alpha: f64,
    /// Weight of the bias score inside the combined softmax.
    pub lambda: f64,
    /// Softmax temperature.
    pub tau: f64,
    pub local_epochs: usize,
    pub rounds: usize,
    /// Clients sampled per round; `None` means all of them.
    pub clients_per_round: Option<usize>,
    pub invert_fairness_weight: bool,
    pub weighting: Weighting,
    pub interpolation: Interpolation,
    pub distribution: DistributionMode,
    pub local_eval: LocalEvalModel,
    pub local_aggregate: Aggregate,
    /// Stop once global validation accuracy has not improved for this many
    /// rounds.
    pub early_stop_patience: Option<usize>,
    /// Seeds parameter initialization and client sampling.
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            activation: Activation::Relu,
            learning_rate: 0.01,
            alpha: 2.0,
            lambda: 2.0,
            tau: 1.0,
            local_epochs: 3,
            rounds: 50,
            clients_per_round: None,
            invert_fairness_weight: false,
            weighting: Weighting::Combined,
            interpolation: Interpolation::JsDivergence,
            distribution: DistributionMode::Soft,
            local_eval: LocalEvalModel::Global,
            local_aggregate: Aggregate::Median,
            early_stop_patience: None,
            seed: 0,
        }
    }
}

impl ProtocolConfig {
    /// Plain federated averaging: no penalty, uniform weights, every client
    /// starts its local training from the broadcast model.
    pub fn fedavg(&self) -> Self {
        Self {
            alpha: 0.0,
            weighting: Weighting::Uniform,
            interpolation: Interpolation::Fixed(1.0),
            ..self.clone()
        }
    }

    pub fn validate(&self, num_clients: usize) -> Result<(), FederationError> {
        let bad = |m: &str| Err(FederationError::InvalidConfig(m.into()));
        if num_clients == 0 {
            return bad("no clients");
        }
        if let Some(k) = self.clients_per_round {
            if k == 0 || k > num_clients {
                return bad("clients_per_round must be in 1..=number of clients");
            }
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return bad("tau must be positive");
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !self.alpha.is_finite() || !self.lambda.is_finite() {
            return bad("alpha and lambda must be finite");
        }
        if let Interpolation::Fixed(t) = self.interpolation {
            if !(0.0..=1.0).contains(&t) {
                return bad("fixed interpolation coefficient must be in [0, 1]");
            }
        }
        Ok(())
    }
}

/// Disjoint train/validation/test node index sets.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl NodeSplit {
    /// Shuffles `0..n` and cuts it by `fractions` (train, val); the rest is
    /// test. Each set is returned sorted.
    pub fn random(n: usize, train_fraction: f64, val_fraction: f64, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((n as f64) * train_fraction).round() as usize;
        let n_val = (((n as f64) * val_fraction).round() as usize).min(n - n_train.min(n));
        let n_train = n_train.min(n);
        let mut train = order[..n_train].to_vec();
        let mut val = order[n_train..n_train + n_val].to_vec();
        let mut test = order[n_train + n_val..].to_vec();
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();
        Self { train, val, test }
    }

    /// Maps a global split onto a subgraph whose local id `i` is global node
    /// `global_ids[i]` (ascending).
    pub fn restrict(&self, global_ids: &[usize]) -> Self {
        let local = |set: &[usize]| {
            global_ids
                .iter()
                .enumerate()
                .filter(|(_, g)| set.binary_search(g).is_ok())
                .map(|(i, _)| i)
                .collect()
        };
        Self {
            train: local(&self.train),
            val: local(&self.val),
            test: local(&self.test),
        }
    }
}
