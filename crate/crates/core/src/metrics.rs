//! Evaluation statistics and the protocol's internal divergences.
//!
//! Everything is computed in `[0, 1]`; scaling to percentages happens only
//! where results are rendered for people.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("one sensitive group is empty")]
    EmptyGroup,
    #[error("variable has zero variance")]
    ZeroVariance,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("node set is empty")]
    EmptySet,
}

/// Hard decision with ties at 0.5 going to the negative class.
pub fn hard_prediction(p: f64) -> bool {
    p > 0.5
}

fn positive_rate_gap<'a>(rows: impl Iterator<Item = (bool, bool)> + 'a) -> (f64, bool) {
    let (mut n, mut pos) = ([0usize; 2], [0usize; 2]);
    for (s, yhat) in rows {
        let g = s as usize;
        n[g] += 1;
        pos[g] += yhat as usize;
    }
    if n[0] == 0 || n[1] == 0 {
        return (0.0, true);
    }
    let r0 = pos[0] as f64 / n[0] as f64;
    let r1 = pos[1] as f64 / n[1] as f64;
    ((r0 - r1).abs(), false)
}

/// `|P(ŷ=1 | s=0) − P(ŷ=1 | s=1)|` over `mask`, with a degenerate flag when a
/// group is absent (the value is then 0).
pub fn statistical_parity(yhat: &[bool], s: &[bool], mask: &[usize]) -> (f64, bool) {
    positive_rate_gap(mask.iter().map(|&i| (s[i], yhat[i])))
}

/// True-positive-rate gap between the groups; degenerate when a group has no
/// positives in `mask`.
pub fn equalized_odds(yhat: &[bool], y: &[bool], s: &[bool], mask: &[usize]) -> (f64, bool) {
    positive_rate_gap(mask.iter().filter(|&&i| y[i]).map(|&i| (s[i], yhat[i])))
}

/// Mann–Whitney AUC with midranks. Returns `(0.5, true)` when one class is
/// missing from `mask`.
pub fn auc(scores: &[f64], y: &[bool], mask: &[usize]) -> (f64, bool) {
    let mut items: Vec<(f64, bool)> = mask.iter().map(|&i| (scores[i], y[i])).collect();
    let n_pos = items.iter().filter(|r| r.1).count();
    let n_neg = items.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return (0.5, true);
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < items.len() {
        let mut j = i;
        while j < items.len() && items[j].0 == items[i].0 {
            j += 1;
        }
        // ranks i+1..=j share their mean
        let midrank = (i + 1 + j) as f64 / 2.0;
        let tied_pos = items[i..j].iter().filter(|r| r.1).count();
        rank_sum += midrank * tied_pos as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    ((rank_sum - p * (p + 1.0) / 2.0) / (p * n), false)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tradeoffs {
    pub acc: f64,
    pub auc: f64,
    /// Set when `delta_sp + delta_eo == 0`; both values are then `+∞`.
    pub undefined: bool,
}

/// `accuracy / (ΔSP + ΔEO)` and `auc / (ΔSP + ΔEO)`.
///
/// The ratio does not depend on whether the inputs are fractions or
/// percentages, as long as all four use the same unit.
pub fn tradeoffs(accuracy: f64, auc: f64, delta_sp: f64, delta_eo: f64) -> Tradeoffs {
    let denom = delta_sp + delta_eo;
    if denom > 0.0 {
        Tradeoffs {
            acc: accuracy / denom,
            auc: auc / denom,
            undefined: false,
        }
    } else {
        Tradeoffs {
            acc: f64::INFINITY,
            auc: f64::INFINITY,
            undefined: true,
        }
    }
}

/// Predicted class distribution `[P(ŷ=0), P(ŷ=1)]` over a node set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution(pub [f64; 2]);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionMode {
    /// Mean of per-node `[1 − p, p]`.
    #[default]
    Soft,
    /// Histogram of hard predictions.
    Hard,
}

impl LabelDistribution {
    pub fn from_probs(probs: &[f64], nodes: &[usize], mode: DistributionMode) -> Result<Self, StatsError> {
        if nodes.is_empty() {
            return Err(StatsError::EmptySet);
        }
        let pos: f64 = match mode {
            DistributionMode::Soft => nodes.iter().map(|&i| probs[i]).sum(),
            DistributionMode::Hard => nodes.iter().filter(|&&i| hard_prediction(probs[i])).count() as f64,
        };
        let q = (pos / nodes.len() as f64).clamp(0.0, 1.0);
        Ok(Self([1.0 - q, q]))
    }
}

fn kl_to_mixture(p: &[f64; 2], m: &[f64; 2]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &mi)| pi * (pi / mi).log2())
        .sum()
}

/// Base-2 Jensen–Shannon divergence, in `[0, 1]`.
pub fn js_divergence(p: &LabelDistribution, q: &LabelDistribution) -> f64 {
    let m = [0.5 * (p.0[0] + q.0[0]), 0.5 * (p.0[1] + q.0[1])];
    let js = 0.5 * kl_to_mixture(&p.0, &m) + 0.5 * kl_to_mixture(&q.0, &m);
    js.clamp(0.0, 1.0)
}

/// `(μ₀ − μ₁)/σ · sqrt(N₀N₁)/N` with the population standard deviation.
///
/// Positive when the `s = 0` group has the larger mean, so this is the
/// Pearson correlation of `x` with the indicator of `s = 0`.
pub fn point_biserial(x: &[f64], s: &[bool]) -> Result<f64, StatsError> {
    if x.len() != s.len() {
        return Err(StatsError::LengthMismatch(format!("{} values, {} groups", x.len(), s.len())));
    }
    let (mut n, mut sum) = ([0usize; 2], [0.0f64; 2]);
    for (&v, &g) in x.iter().zip(s) {
        n[g as usize] += 1;
        sum[g as usize] += v;
    }
    if n[0] == 0 || n[1] == 0 {
        return Err(StatsError::EmptyGroup);
    }
    let total = x.len() as f64;
    let mean = (sum[0] + sum[1]) / total;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / total;
    if var <= 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let (n0, n1) = (n[0] as f64, n[1] as f64);
    let diff = sum[0] / n0 - sum[1] / n1;
    Ok(diff / var.sqrt() * (n0 * n1).sqrt() / total)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricFlags {
    pub sp_degenerate: bool,
    pub eo_degenerate: bool,
    pub auc_undefined: bool,
    pub tradeoff_undefined: bool,
}

impl MetricFlags {
    pub fn union(self, other: Self) -> Self {
        Self {
            sp_degenerate: self.sp_degenerate || other.sp_degenerate,
            eo_degenerate: self.eo_degenerate || other.eo_degenerate,
            auc_undefined: self.auc_undefined || other.auc_undefined,
            tradeoff_undefined: self.tradeoff_undefined || other.tradeoff_undefined,
        }
    }

    /// `|`-separated names of the raised flags, empty when none.
    pub fn render(self) -> String {
        let names = [
            (self.sp_degenerate, "sp_degenerate"),
            (self.eo_degenerate, "eo_degenerate"),
            (self.auc_undefined, "auc_undefined"),
            (self.tradeoff_undefined, "tradeoff_undefined"),
        ];
        names
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| *n)
            .collect::<Vec<_>>()
            .join("|")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub accuracy: f64,
    pub auc: f64,
    pub delta_sp: f64,
    pub delta_eo: f64,
    /// `+∞` when the fairness gaps are both zero (JSON renders it as `null`).
    pub tradeoff_acc: f64,
    pub tradeoff_auc: f64,
    pub flags: MetricFlags,
}

impl MetricBundle {
    pub const CSV_FIELDS: [&'static str; 7] = [
        "accuracy",
        "auc",
        "delta_sp",
        "delta_eo",
        "tradeoff_acc",
        "tradeoff_auc",
        "flags",
    ];

    fn from_parts(accuracy: f64, auc: f64, delta_sp: f64, delta_eo: f64, flags: MetricFlags) -> Self {
        let t = tradeoffs(accuracy, auc, delta_sp, delta_eo);
        Self {
            accuracy,
            auc,
            delta_sp,
            delta_eo,
            tradeoff_acc: t.acc,
            tradeoff_auc: t.auc,
            flags: MetricFlags {
                tradeoff_undefined: t.undefined,
                ..flags
            },
        }
    }

    /// Values in `CSV_FIELDS` order, full `f64` round-trip precision.
    pub fn csv_values(&self) -> [String; 7] {
        [
            self.accuracy.to_string(),
            self.auc.to_string(),
            self.delta_sp.to_string(),
            self.delta_eo.to_string(),
            self.tradeoff_acc.to_string(),
            self.tradeoff_auc.to_string(),
            self.flags.render(),
        ]
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("bundle serializes")
    }
}

/// Scores the nodes in `mask` given positive-class probabilities.
pub fn evaluate(probs: &[f64], y: &[bool], s: &[bool], mask: &[usize]) -> Result<MetricBundle, StatsError> {
    if mask.is_empty() {
        return Err(StatsError::EmptySet);
    }
    if probs.len() != y.len() || y.len() != s.len() {
        return Err(StatsError::LengthMismatch("probs/labels/sensitive".into()));
    }
    let yhat: Vec<bool> = probs.iter().map(|&p| hard_prediction(p)).collect();
    let correct = mask.iter().filter(|&&i| yhat[i] == y[i]).count();
    let accuracy = correct as f64 / mask.len() as f64;
    let (auc_value, auc_undefined) = auc(probs, y, mask);
    let (sp, sp_degenerate) = statistical_parity(&yhat, s, mask);
    let (eo, eo_degenerate) = equalized_odds(&yhat, y, s, mask);
    Ok(MetricBundle::from_parts(
        accuracy,
        auc_value,
        sp,
        eo,
        MetricFlags {
            sp_degenerate,
            eo_degenerate,
            auc_undefined,
            tradeoff_undefined: false,
        },
    ))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    #[default]
    Median,
    Mean,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn fieldwise(bundles: &[MetricBundle], f: impl Fn(Vec<f64>) -> f64) -> Option<MetricBundle> {
    if bundles.is_empty() {
        return None;
    }
    let col = |g: fn(&MetricBundle) -> f64| f(bundles.iter().map(g).collect());
    let flags = bundles
        .iter()
        .fold(MetricFlags::default(), |acc, b| acc.union(b.flags));
    Some(MetricBundle {
        accuracy: col(|b| b.accuracy),
        auc: col(|b| b.auc),
        delta_sp: col(|b| b.delta_sp),
        delta_eo: col(|b| b.delta_eo),
        tradeoff_acc: col(|b| b.tradeoff_acc),
        tradeoff_auc: col(|b| b.tradeoff_auc),
        flags,
    })
}

/// Field-by-field summary of several bundles; flags are OR-ed.
pub fn aggregate(bundles: &[MetricBundle], how: Aggregate) -> Option<MetricBundle> {
    match how {
        Aggregate::Median => fieldwise(bundles, median),
        Aggregate::Mean => fieldwise(bundles, |v| mean(&v)),
    }
}

/// Field-by-field population standard deviation.
pub fn spread(bundles: &[MetricBundle]) -> Option<MetricBundle> {
    fieldwise(bundles, |v| std_dev(&v))
}
