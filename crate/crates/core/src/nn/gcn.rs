//! Two-layer GCN forward pass and the fairness-penalized training loss.
//!
//! ```text
//! H¹ = act(Ā X W1)      z = Ā H¹ W2      p = sigmoid(z)
//! loss = BCE(p, y) + α (|SP_soft| + |EO_soft|)
//! ```
//!
//! `SP_soft` is the difference of mean probabilities between the sensitive
//! groups over the training mask, `EO_soft` the same difference restricted to
//! `y = 1`. Hard predictions are only used by the evaluation metrics.

use serde::{Deserialize, Serialize};

use super::{ModelParams, NnError, NormalizedAdjacency};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Linear,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Linear => v,
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `Ā X`
    pub propagated: Matrix,
    /// `Ā X W1`
    pub pre_hidden: Matrix,
    /// `act(Ā X W1)`
    pub hidden: Matrix,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

fn check_shapes(
    params: &ModelParams,
    adj: &NormalizedAdjacency,
    features: &Matrix,
) -> Result<(), NnError> {
    if features.rows() != adj.num_nodes() {
        return Err(NnError::ShapeMismatch(format!(
            "{} feature rows for {} nodes",
            features.rows(),
            adj.num_nodes()
        )));
    }
    if features.cols() != params.w1.rows() {
        return Err(NnError::ShapeMismatch(format!(
            "feature width {} but w1 expects {}",
            features.cols(),
            params.w1.rows()
        )));
    }
    if params.w1.cols() != params.w2.rows() || params.w2.cols() != 1 {
        return Err(NnError::ShapeMismatch("w1/w2 do not chain".into()));
    }
    Ok(())
}

pub fn forward(
    params: &ModelParams,
    adj: &NormalizedAdjacency,
    features: &Matrix,
    activation: Activation,
) -> Result<ForwardTrace, NnError> {
    check_shapes(params, adj, features)?;
    let propagated = adj.apply(features);
    let pre_hidden = propagated.matmul(&params.w1);
    let hidden = pre_hidden.map(|v| activation.apply(v));
    let head = hidden.matmul(&params.w2).into_vec();
    let logits = adj.apply_vec(&head);
    let probs = logits.iter().map(|&z| sigmoid(z)).collect();
    Ok(ForwardTrace {
        propagated,
        pre_hidden,
        hidden,
        logits,
        probs,
    })
}

/// Which penalty terms had an empty group and were therefore zeroed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegenerateFlags {
    pub sp: bool,
    pub eo: bool,
}

impl DegenerateFlags {
    pub fn any(self) -> bool {
        self.sp || self.eo
    }
}

/// Signed soft parity gaps `mean(p | s=0) − mean(p | s=1)`, overall and
/// among `y = 1`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SoftFairness {
    pub sp: f64,
    pub eo: f64,
    pub degenerate: DegenerateFlags,
}

impl SoftFairness {
    /// `|SP_soft| + |EO_soft|`
    pub fn penalty(&self) -> f64 {
        self.sp.abs() + self.eo.abs()
    }
}

struct GroupCounts {
    sp: (usize, usize),
    eo: (usize, usize),
}

fn group_counts(labels: &[bool], sensitive: &[bool], mask: &[usize]) -> GroupCounts {
    let mut c = GroupCounts {
        sp: (0, 0),
        eo: (0, 0),
    };
    for &i in mask {
        let slot = |pair: &mut (usize, usize)| {
            if sensitive[i] {
                pair.1 += 1
            } else {
                pair.0 += 1
            }
        };
        slot(&mut c.sp);
        if labels[i] {
            slot(&mut c.eo);
        }
    }
    c
}

fn group_gap(values: impl Iterator<Item = (bool, f64)>, counts: (usize, usize)) -> Option<f64> {
    if counts.0 == 0 || counts.1 == 0 {
        return None;
    }
    let (mut s0, mut s1) = (0.0, 0.0);
    for (s, v) in values {
        if s {
            s1 += v
        } else {
            s0 += v
        }
    }
    Some(s0 / counts.0 as f64 - s1 / counts.1 as f64)
}

pub fn soft_fairness(probs: &[f64], labels: &[bool], sensitive: &[bool], mask: &[usize]) -> SoftFairness {
    let counts = group_counts(labels, sensitive, mask);
    let sp = group_gap(mask.iter().map(|&i| (sensitive[i], probs[i])), counts.sp);
    let eo = group_gap(
        mask.iter()
            .filter(|&&i| labels[i])
            .map(|&i| (sensitive[i], probs[i])),
        counts.eo,
    );
    SoftFairness {
        sp: sp.unwrap_or(0.0),
        eo: eo.unwrap_or(0.0),
        degenerate: DegenerateFlags {
            sp: sp.is_none(),
            eo: eo.is_none(),
        },
    }
}

/// Everything the loss needs besides the parameters.
#[derive(Debug, Clone, Copy)]
pub struct TrainingBatch<'a> {
    pub adj: &'a NormalizedAdjacency,
    pub features: &'a Matrix,
    pub labels: &'a [bool],
    pub sensitive: &'a [bool],
    /// Node indices the loss is computed over.
    pub mask: &'a [usize],
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    /// `util + α · fair`
    pub loss: f64,
    pub util: f64,
    pub fairness: SoftFairness,
    pub grads: ModelParams,
}

pub fn loss_and_grad(
    params: &ModelParams,
    batch: &TrainingBatch<'_>,
    alpha: f64,
    activation: Activation,
) -> Result<LossOutput, NnError> {
    let n = batch.adj.num_nodes();
    if batch.labels.len() != n || batch.sensitive.len() != n {
        return Err(NnError::ShapeMismatch("label/sensitive length differs from node count".into()));
    }
    if batch.mask.is_empty() {
        return Err(NnError::EmptyMask);
    }
    let trace = forward(params, batch.adj, batch.features, activation)?;
    let p = &trace.probs;
    let m = batch.mask.len() as f64;

    let mut util = 0.0;
    let mut grad_logits = vec![0.0; n];
    for &i in batch.mask {
        let z = trace.logits[i];
        let y = if batch.labels[i] { 1.0 } else { 0.0 };
        util += softplus(z) - y * z;
        grad_logits[i] += (p[i] - y) / m;
    }
    util /= m;

    let fairness = soft_fairness(p, batch.labels, batch.sensitive, batch.mask);
    if alpha != 0.0 {
        let counts = group_counts(batch.labels, batch.sensitive, batch.mask);
        // d|gap|/dp_i = sign(gap) · (+1/n₀ for s=0, −1/n₁ for s=1)
        let mut push = |gap: f64, degenerate: bool, (n0, n1): (usize, usize), only_pos: bool| {
            if degenerate || gap == 0.0 {
                return;
            }
            let sign = gap.signum();
            for &i in batch.mask {
                if only_pos && !batch.labels[i] {
                    continue;
                }
                let dgap = if batch.sensitive[i] {
                    -1.0 / n1 as f64
                } else {
                    1.0 / n0 as f64
                };
                grad_logits[i] += alpha * sign * dgap * p[i] * (1.0 - p[i]);
            }
        };
        push(fairness.sp, fairness.degenerate.sp, counts.sp, false);
        push(fairness.eo, fairness.degenerate.eo, counts.eo, true);
    }

    // z = Ā u, u = H¹ W2
    let grad_head = Matrix::column_vector(batch.adj.apply_vec(&grad_logits));
    let grad_w2 = trace.hidden.t_matmul(&grad_head);
    let mut grad_pre = grad_head.matmul_t(&params.w2);
    for (g, &pre) in grad_pre
        .as_mut_slice()
        .iter_mut()
        .zip(trace.pre_hidden.as_slice())
    {
        *g *= activation.derivative(pre);
    }
    let grad_w1 = trace.propagated.t_matmul(&grad_pre);

    Ok(LossOutput {
        loss: util + alpha * fairness.penalty(),
        util,
        fairness,
        grads: ModelParams {
            w1: grad_w1,
            w2: grad_w2,
        },
    })
}
