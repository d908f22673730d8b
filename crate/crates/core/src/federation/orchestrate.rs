use std::io::Write;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    client_local_update, server_aggregate, server_combined_weights, ClientState, ClientUpload,
    FederationError, LocalEvalModel, NodeSplit, ProtocolConfig, ServerWeights, UploadSummary,
    Weighting,
};
use crate::graph::{EgoNetwork, Graph};
use crate::metrics::{aggregate, evaluate, MetricBundle};
use crate::nn::{forward, ModelParams, NormalizedAdjacency};

/// Everything logged about one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    /// 1-based.
    pub round: usize,
    pub selected: Vec<usize>,
    pub uploads: Vec<UploadSummary>,
    pub gamma_e: Vec<f64>,
    pub gamma_f_raw: Vec<f64>,
    pub gamma_f: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Aggregated model on the full-graph test nodes.
    pub global: MetricBundle,
    /// Aggregated model on each client's local test nodes, summarized.
    pub local: Option<MetricBundle>,
    pub val_accuracy: f64,
}

/// Full protocol traffic of one round, for record/replay debugging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub round: usize,
    pub broadcast: ModelParams,
    pub uploads: Vec<ClientUpload>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub reports: Vec<RoundReport>,
    pub final_params: ModelParams,
    pub stopped_early: bool,
}

/// `k_prime` distinct ids from `0..k`, sorted.
pub fn sample_clients(rng: &mut ChaCha8Rng, k: usize, k_prime: usize) -> Vec<usize> {
    let mut ids = index::sample(rng, k, k_prime).into_vec();
    ids.sort_unstable();
    ids
}

/// Server plus clients over one full graph.
#[derive(Debug, Clone)]
pub struct Federation {
    pub graph: Graph,
    pub adjacency: NormalizedAdjacency,
    pub split: NodeSplit,
    pub clients: Vec<ClientState>,
    pub global: ModelParams,
    pub cfg: ProtocolConfig,
    pub round: usize,
    rng: ChaCha8Rng,
}

impl Federation {
    /// Initializes the broadcast model with Glorot-uniform weights drawn from
    /// `cfg.seed`; every client starts from it.
    pub fn new(
        graph: Graph,
        egos: Vec<EgoNetwork>,
        split: NodeSplit,
        cfg: ProtocolConfig,
    ) -> Result<Self, FederationError> {
        cfg.validate(egos.len())?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let global = ModelParams::glorot(graph.feature_dim(), cfg.hidden_dim, &mut rng);
        let clients = egos
            .into_iter()
            .enumerate()
            .map(|(id, ego)| ClientState::new(id, ego, &split, &global, cfg.learning_rate))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            adjacency: NormalizedAdjacency::from_graph(&graph),
            graph,
            split,
            clients,
            global,
            cfg,
            round: 0,
            rng,
        })
    }

    pub fn clients_per_round(&self) -> usize {
        self.cfg.clients_per_round.unwrap_or(self.clients.len())
    }

    pub fn global_probabilities(&self, params: &ModelParams) -> Result<Vec<f64>, FederationError> {
        Ok(forward(params, &self.adjacency, self.graph.features(), self.cfg.activation)?.probs)
    }

    fn evaluate_global(&self, mask: &[usize]) -> Result<MetricBundle, FederationError> {
        let probs = self.global_probabilities(&self.global)?;
        Ok(evaluate(&probs, self.graph.labels(), self.graph.sensitive(), mask)?)
    }

    fn evaluate_local(&self) -> Result<Option<MetricBundle>, FederationError> {
        let mut bundles = Vec::new();
        for c in &self.clients {
            if c.split.test.is_empty() {
                continue;
            }
            let params = match self.cfg.local_eval {
                LocalEvalModel::Global => &self.global,
                LocalEvalModel::Client => &c.params,
            };
            let probs = c.probabilities(params, &self.cfg)?;
            bundles.push(evaluate(&probs, c.graph.labels(), c.graph.sensitive(), &c.split.test)?);
        }
        Ok(aggregate(&bundles, self.cfg.local_aggregate))
    }

    /// Runs one sample / update / aggregate / evaluate cycle.
    pub fn step<'w>(&mut self, replay: Option<&mut (dyn Write + 'w)>) -> Result<RoundReport, FederationError> {
        self.round += 1;
        let round = self.round;
        let k_prime = self.clients_per_round();
        let selected = sample_clients(&mut self.rng, self.clients.len(), k_prime);
        let broadcast = self.global.clone();
        let cfg = &self.cfg;
        let uploads = self
            .clients
            .par_iter_mut()
            .filter(|c| selected.binary_search(&c.id).is_ok())
            .map(|c| client_local_update(c, &broadcast, cfg, round))
            .collect::<Result<Vec<_>, _>>()?;

        let weights = match cfg.weighting {
            Weighting::Combined => {
                server_combined_weights(&uploads, cfg.lambda, cfg.tau, cfg.invert_fairness_weight)
            }
            Weighting::Uniform => ServerWeights::uniform(uploads.len()),
        };
        let next = server_aggregate(&uploads, &weights.gamma)?;
        if !next.is_finite() {
            return Err(FederationError::NonFinite { round, client: None });
        }
        self.global = next;

        if let Some(w) = replay {
            let rec = ReplayRecord {
                round,
                broadcast,
                uploads: uploads.clone(),
            };
            serde_json::to_writer(&mut *w, &rec).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }

        let global = self.evaluate_global(&self.split.test)?;
        let val_accuracy = if self.split.val.is_empty() {
            global.accuracy
        } else {
            self.evaluate_global(&self.split.val)?.accuracy
        };
        Ok(RoundReport {
            round,
            selected,
            uploads: uploads.iter().map(UploadSummary::from).collect(),
            gamma_e: weights.gamma_e,
            gamma_f_raw: weights.gamma_f_raw,
            gamma_f: weights.gamma_f,
            gamma: weights.gamma,
            global,
            local: self.evaluate_local()?,
            val_accuracy,
        })
    }
}

/// Runs `cfg.rounds` rounds, or fewer when early stopping triggers. The final
/// parameters are those of the last completed round.
pub fn run_federation(
    fed: &mut Federation,
    mut replay: Option<&mut dyn Write>,
) -> Result<RunOutcome, FederationError> {
    let mut reports = Vec::with_capacity(fed.cfg.rounds);
    let mut best = f64::NEG_INFINITY;
    let mut since_best = 0;
    let mut stopped_early = false;
    for _ in 0..fed.cfg.rounds {
        let report = fed.step(replay.as_deref_mut())?;
        if report.val_accuracy > best {
            best = report.val_accuracy;
            since_best = 0;
        } else {
            since_best += 1;
        }
        reports.push(report);
        if fed.cfg.early_stop_patience.is_some_and(|p| since_best >= p) {
            stopped_early = true;
            break;
        }
    }
    Ok(RunOutcome {
        reports,
        final_params: fed.global.clone(),
        stopped_early,
    })
}

/// Same loop with the plain-averaging overrides applied to `fed.cfg`.
pub fn run_fedavg_baseline(
    fed: &mut Federation,
    replay: Option<&mut dyn Write>,
) -> Result<RunOutcome, FederationError> {
    fed.cfg = fed.cfg.fedavg();
    run_federation(fed, replay)
}
