use serde::{Deserialize, Serialize};

use super::{FederationError, Interpolation, NodeSplit, ProtocolConfig};
use crate::graph::{edge_group_stats, EgoNetwork, Graph};
use crate::metrics::{js_divergence, LabelDistribution};
use crate::nn::{
    forward, loss_and_grad, soft_fairness, AdamState, DegenerateFlags, ModelParams,
    NormalizedAdjacency, TrainingBatch,
};

/// One participant: its ego-network, node split and optimizer state.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub center: usize,
    pub graph: Graph,
    /// Local id `i` is node `global_ids[i]` of the full graph.
    pub global_ids: Vec<usize>,
    pub adjacency: NormalizedAdjacency,
    /// Split in local ids.
    pub split: NodeSplit,
    pub params: ModelParams,
    pub adam: AdamState,
    /// Group balance score of the whole local graph, fixed at construction.
    pub gbs: f64,
    pub last_delta_sp: f64,
    pub last_delta_eo: f64,
}

impl ClientState {
    /// `global_split` is in full-graph ids; it is restricted to the client's
    /// nodes.
    pub fn new(
        id: usize,
        ego: EgoNetwork,
        global_split: &NodeSplit,
        initial: &ModelParams,
        learning_rate: f64,
    ) -> Result<Self, FederationError> {
        let stats = edge_group_stats(&ego.graph).map_err(|e| {
            FederationError::InvalidConfig(format!("client {id} (center {}): {e}", ego.center))
        })?;
        let (d, h) = initial.dims();
        if d != ego.graph.feature_dim() {
            return Err(FederationError::InvalidConfig(format!(
                "client {id} has {} features, model expects {d}",
                ego.graph.feature_dim()
            )));
        }
        Ok(Self {
            id,
            center: ego.center,
            adjacency: NormalizedAdjacency::from_graph(&ego.graph),
            split: global_split.restrict(&ego.global_ids),
            graph: ego.graph,
            global_ids: ego.global_ids,
            params: initial.clone(),
            adam: AdamState::new(learning_rate, d, h),
            gbs: stats.gbs,
            last_delta_sp: 0.0,
            last_delta_eo: 0.0,
        })
    }

    pub fn batch<'a>(&'a self, mask: &'a [usize]) -> TrainingBatch<'a> {
        TrainingBatch {
            adj: &self.adjacency,
            features: self.graph.features(),
            labels: self.graph.labels(),
            sensitive: self.graph.sensitive(),
            mask,
        }
    }

    pub fn probabilities(&self, params: &ModelParams, cfg: &ProtocolConfig) -> Result<Vec<f64>, FederationError> {
        Ok(forward(params, &self.adjacency, self.graph.features(), cfg.activation)?.probs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientUpload {
    pub client: usize,
    pub params: ModelParams,
    /// `|SP_soft|` on the local training nodes after the update.
    pub delta_sp: f64,
    /// `|EO_soft|` on the local training nodes after the update.
    pub delta_eo: f64,
    pub gbs: f64,
    /// Blending coefficient used for this round.
    pub js: f64,
    /// Final training loss.
    pub loss: f64,
    pub degenerate: DegenerateFlags,
}

/// An upload without its parameters, for round logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadSummary {
    pub client: usize,
    pub delta_sp: f64,
    pub delta_eo: f64,
    pub gbs: f64,
    pub js: f64,
    pub loss: f64,
    pub degenerate: DegenerateFlags,
}

impl From<&ClientUpload> for UploadSummary {
    fn from(u: &ClientUpload) -> Self {
        Self {
            client: u.client,
            delta_sp: u.delta_sp,
            delta_eo: u.delta_eo,
            gbs: u.gbs,
            js: u.js,
            loss: u.loss,
            degenerate: u.degenerate,
        }
    }
}

/// Blends the local model toward the broadcast one, trains for
/// `local_epochs` Adam steps and reports the resulting fairness gaps.
///
/// A client without training nodes keeps the blended model untrained and
/// reports zero gaps with both degenerate flags set.
pub fn client_local_update(
    client: &mut ClientState,
    global: &ModelParams,
    cfg: &ProtocolConfig,
    round: usize,
) -> Result<ClientUpload, FederationError> {
    let non_finite = || FederationError::NonFinite {
        round,
        client: Some(client.id),
    };
    let train = client.split.train.clone();

    let js = match cfg.interpolation {
        Interpolation::Fixed(t) => t,
        Interpolation::JsDivergence if train.is_empty() => 0.0,
        Interpolation::JsDivergence => {
            let p_global = client.probabilities(global, cfg)?;
            let p_local = client.probabilities(&client.params, cfg)?;
            let d_global = LabelDistribution::from_probs(&p_global, &train, cfg.distribution)?;
            let d_local = LabelDistribution::from_probs(&p_local, &train, cfg.distribution)?;
            js_divergence(&d_global, &d_local)
        }
    };
    let mut params = client.params.interpolate(global, js)?;

    if train.is_empty() {
        client.params = params.clone();
        client.last_delta_sp = 0.0;
        client.last_delta_eo = 0.0;
        return Ok(ClientUpload {
            client: client.id,
            params,
            delta_sp: 0.0,
            delta_eo: 0.0,
            gbs: client.gbs,
            js,
            loss: 0.0,
            degenerate: DegenerateFlags { sp: true, eo: true },
        });
    }

    for _ in 0..cfg.local_epochs {
        let out = loss_and_grad(&params, &client.batch(&train), cfg.alpha, cfg.activation)?;
        if !out.loss.is_finite() || !out.grads.is_finite() {
            return Err(non_finite());
        }
        params = client.adam.step(&params, &out.grads);
    }
    if !params.is_finite() {
        return Err(non_finite());
    }

    let final_loss = loss_and_grad(&params, &client.batch(&train), cfg.alpha, cfg.activation)?;
    let probs = client.probabilities(&params, cfg)?;
    let fair = soft_fairness(&probs, client.graph.labels(), client.graph.sensitive(), &train);
    client.params = params.clone();
    client.last_delta_sp = fair.sp.abs();
    client.last_delta_eo = fair.eo.abs();
    Ok(ClientUpload {
        client: client.id,
        params,
        delta_sp: fair.sp.abs(),
        delta_eo: fair.eo.abs(),
        gbs: client.gbs,
        js,
        loss: final_loss.loss,
        degenerate: fair.degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{partition_ego_networks, LabelRule, SbmConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (ClientState, ModelParams, ProtocolConfig) {
        let g = crate::graph::generate_sbm(&SbmConfig {
            nodes_per_group: (30, 30),
            p_intra: 0.15,
            p_inter: 0.03,
            feature_means: (vec![0.0, 1.0], vec![1.0, 0.0]),
            feature_stds: (vec![1.0, 1.0], vec![1.0, 1.0]),
            label_rule: LabelRule::GroupWithFlip { flip: 0.2 },
            seed: 1,
        })
        .unwrap();
        let ego = partition_ego_networks(&g, 1, 2, 0).unwrap().remove(0);
        let split = NodeSplit::random(g.num_nodes(), 0.5, 0.25, 0);
        let cfg = ProtocolConfig {
            hidden_dim: 4,
            ..Default::default()
        };
        let init = ModelParams::glorot(2, 4, &mut ChaCha8Rng::seed_from_u64(0));
        (ClientState::new(0, ego, &split, &init, 0.01).unwrap(), init, cfg)
    }

    #[test]
    fn identical_models_have_zero_divergence() {
        let (mut c, init, cfg) = setup();
        let up = client_local_update(&mut c, &init, &cfg, 1).unwrap();
        assert_eq!(up.js, 0.0);
    }

    #[test]
    fn forced_coefficients_hit_the_endpoints() {
        let (mut c, _, _) = setup();
        let cfg = ProtocolConfig {
            hidden_dim: 4,
            local_epochs: 0,
            interpolation: Interpolation::Fixed(1.0),
            ..Default::default()
        };
        let mut global = ModelParams::zeros(2, 4);
        global.values_mut().for_each(|v| *v = 2.0);
        let up = client_local_update(&mut c, &global, &cfg, 1).unwrap();
        assert_eq!(up.params, global);

        c.params = ModelParams::zeros(2, 4);
        let cfg = ProtocolConfig {
            interpolation: Interpolation::Fixed(0.5),
            ..cfg
        };
        let up = client_local_update(&mut c, &global, &cfg, 2).unwrap();
        assert!(up.params.values().all(|v| v == 1.0));
    }

    #[test]
    fn upload_gaps_are_in_unit_interval() {
        let (mut c, init, cfg) = setup();
        let mut global = init.clone();
        for r in 1..4 {
            let up = client_local_update(&mut c, &global, &cfg, r).unwrap();
            assert!((0.0..=1.0).contains(&up.delta_sp));
            assert!((0.0..=1.0).contains(&up.delta_eo));
            assert!((0.0..=1.0).contains(&up.js));
            global = global.interpolate(&up.params, 0.5).unwrap();
        }
        assert_eq!(c.adam.steps_taken(), 9);
    }
}
