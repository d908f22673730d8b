//! Correlation between linear GCN embeddings and the sensitive attribute.
//!
//! The closed form predicts the point-biserial correlation of one embedding
//! column from group sizes, group feature means, the intra/inter edge mix and
//! the embedding's spread:
//!
//! ```text
//! ρ = (N₀μ₀ − N₁μ₁)(H_intra − H_inter) · sqrt(N₀N₁) / (σ_Z N²)
//! ```
//!
//! The empirical side embeds with one linear propagation `Z = Ā X W` and
//! measures the point-biserial correlation of each column directly.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{edge_group_stats, generate_sbm, Graph, GraphError, SbmConfig};
use crate::linalg::Matrix;
use crate::metrics::{point_biserial, StatsError};
use crate::nn::NormalizedAdjacency;

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("embedding standard deviation is zero")]
    ZeroSigma,
    #[error("invalid inputs: {0}")]
    InvalidInputs(String),
    #[error("d = {d} needs p_intra = {p_intra}, p_inter = {p_inter}, outside [0, 1]")]
    UnrealizableD { d: f64, p_intra: f64, p_inter: f64 },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaInputs {
    pub n0: usize,
    pub n1: usize,
    /// Mean of the input feature column over `s = 0`.
    pub mu0: f64,
    pub mu1: f64,
    pub h_intra: f64,
    pub h_inter: f64,
    /// Population standard deviation of the embedding column.
    pub sigma_z: f64,
}

pub fn rho_closed_form(inp: &LemmaInputs) -> Result<f64, TheoryError> {
    if inp.n0 == 0 || inp.n1 == 0 {
        return Err(TheoryError::InvalidInputs("both groups need at least one node".into()));
    }
    if (inp.h_intra + inp.h_inter - 1.0).abs() > 1e-9 {
        return Err(TheoryError::InvalidInputs("h_intra + h_inter must be 1".into()));
    }
    if !(inp.sigma_z > 0.0) {
        return Err(TheoryError::ZeroSigma);
    }
    let (n0, n1) = (inp.n0 as f64, inp.n1 as f64);
    let n = n0 + n1;
    Ok((n0 * inp.mu0 - n1 * inp.mu1) * (inp.h_intra - inp.h_inter) * (n0 * n1).sqrt()
        / (inp.sigma_z * n * n))
}

/// `Ā X W`
pub fn embed_linear(g: &Graph, w: &Matrix) -> Result<Matrix, TheoryError> {
    if w.rows() != g.feature_dim() {
        return Err(TheoryError::InvalidInputs(format!(
            "projection has {} rows for {} features",
            w.rows(),
            g.feature_dim()
        )));
    }
    Ok(NormalizedAdjacency::from_graph(g).apply(&g.features().matmul(w)))
}

fn column_of(z: &Matrix, column: usize) -> Result<Vec<f64>, TheoryError> {
    if column >= z.cols() {
        return Err(TheoryError::InvalidInputs(format!("column {column} of {}", z.cols())));
    }
    Ok(z.column(column))
}

pub fn rho_empirical(g: &Graph, w: &Matrix, column: usize) -> Result<f64, TheoryError> {
    let z = embed_linear(g, w)?;
    Ok(point_biserial(&column_of(&z, column)?, g.sensitive())?)
}

fn population_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// Closed-form inputs measured on a graph: group means of `X W` before
/// propagation, the graph's edge mix, and σ of the propagated column.
pub fn lemma_inputs(g: &Graph, w: &Matrix, column: usize) -> Result<LemmaInputs, TheoryError> {
    let z = embed_linear(g, w)?;
    let projected = g.features().matmul(w);
    lemma_inputs_from(g, &projected, &z, column)
}

fn lemma_inputs_from(
    g: &Graph,
    projected: &Matrix,
    z: &Matrix,
    column: usize,
) -> Result<LemmaInputs, TheoryError> {
    let stats = edge_group_stats(g)?;
    let (n0, n1) = g.group_sizes();
    if n0 == 0 || n1 == 0 {
        return Err(StatsError::EmptyGroup.into());
    }
    let x = column_of(projected, column)?;
    let (mut s0, mut s1) = (0.0, 0.0);
    for (v, &s) in x.iter().zip(g.sensitive()) {
        if s {
            s1 += v
        } else {
            s0 += v
        }
    }
    Ok(LemmaInputs {
        n0,
        n1,
        mu0: s0 / n0 as f64,
        mu1: s1 / n1 as f64,
        h_intra: stats.h_intra,
        h_inter: stats.h_inter,
        sigma_z: population_sd(&column_of(z, column)?),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnComparison {
    pub column: usize,
    pub empirical: f64,
    pub closed_form: f64,
}

impl ColumnComparison {
    pub fn gap(&self) -> f64 {
        (self.empirical - self.closed_form).abs()
    }
}

/// Empirical and closed-form correlation for every embedding column.
pub fn compare_columns(g: &Graph, w: &Matrix) -> Result<Vec<ColumnComparison>, TheoryError> {
    let z = embed_linear(g, w)?;
    let projected = g.features().matmul(w);
    (0..z.cols())
        .map(|c| {
            let inputs = lemma_inputs_from(g, &projected, &z, c)?;
            Ok(ColumnComparison {
                column: c,
                empirical: point_biserial(&z.column(c), g.sensitive())?,
                closed_form: rho_closed_form(&inputs)?,
            })
        })
        .collect()
}

/// Edge probabilities that give intra-edge fraction `(1 + d)/2` while keeping
/// the base configuration's expected edge count.
pub fn realize_d(base: &SbmConfig, d: f64) -> Result<SbmConfig, TheoryError> {
    if !(0.0..=1.0).contains(&d) {
        return Err(TheoryError::InvalidInputs(format!("d = {d} outside [0, 1]")));
    }
    let (n0, n1) = (base.nodes_per_group.0 as f64, base.nodes_per_group.1 as f64);
    let intra_pairs = n0 * (n0 - 1.0) / 2.0 + n1 * (n1 - 1.0) / 2.0;
    let inter_pairs = n0 * n1;
    let edges = base.p_intra * intra_pairs + base.p_inter * inter_pairs;
    let h = (1.0 + d) / 2.0;
    let p_intra = h * edges / intra_pairs;
    let p_inter = (1.0 - h) * edges / inter_pairs;
    if !(0.0..=1.0).contains(&p_intra) || !(0.0..=1.0).contains(&p_inter) {
        return Err(TheoryError::UnrealizableD { d, p_intra, p_inter });
    }
    Ok(SbmConfig {
        p_intra,
        p_inter,
        ..base.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Target `|H_intra − H_inter|`.
    pub d: f64,
    pub seed_count: usize,
    /// Mean over seeds of the column-averaged `|ρ|` of the embedding.
    pub mean_abs_rho_empirical: f64,
    /// Mean over seeds of the column-averaged `|closed form|`.
    pub rho_closed_form: f64,
    /// Mean realized `|H_intra − H_inter|`.
    pub realized_d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub seeds: Vec<u64>,
    pub p_intra: Vec<f64>,
    pub p_inter: Vec<f64>,
}

impl SweepResult {
    pub const CSV_HEADER: &'static str = "d,seed_count,mean_abs_rho_empirical,rho_closed_form";

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{}",
                r.d, r.seed_count, r.mean_abs_rho_empirical, r.rho_closed_form
            )?;
        }
        Ok(())
    }
}

struct SampleOutcome {
    abs_empirical: f64,
    abs_closed: f64,
    realized_d: f64,
}

fn sample(cfg: &SbmConfig, w: &Matrix) -> Result<SampleOutcome, TheoryError> {
    let g = generate_sbm(cfg)?;
    let stats = edge_group_stats(&g)?;
    let cols = compare_columns(&g, w)?;
    let k = cols.len() as f64;
    Ok(SampleOutcome {
        abs_empirical: cols.iter().map(|c| c.empirical.abs()).sum::<f64>() / k,
        abs_closed: cols.iter().map(|c| c.closed_form.abs()).sum::<f64>() / k,
        realized_d: (stats.h_intra - stats.h_inter).abs(),
    })
}

/// For each target `d`, generates one graph per seed (the base seed is
/// replaced) and averages `|ρ|` over seeds. `w` defaults to the identity.
pub fn theorem_sweep(
    base: &SbmConfig,
    d_values: &[f64],
    seeds: &[u64],
    w: Option<&Matrix>,
) -> Result<SweepResult, TheoryError> {
    if seeds.is_empty() {
        return Err(TheoryError::InvalidInputs("no seeds".into()));
    }
    let identity = Matrix::identity(base.feature_dim());
    let w = w.unwrap_or(&identity);
    let mut ds = d_values.to_vec();
    ds.sort_by(f64::total_cmp);
    let configs = ds
        .iter()
        .map(|&d| realize_d(base, d))
        .collect::<Result<Vec<_>, _>>()?;

    let jobs: Vec<SbmConfig> = configs
        .iter()
        .flat_map(|c| seeds.iter().map(move |&seed| SbmConfig { seed, ..c.clone() }))
        .collect();
    let outcomes = jobs
        .par_iter()
        .map(|cfg| sample(cfg, w))
        .collect::<Result<Vec<_>, _>>()?;

    let k = seeds.len() as f64;
    let rows = ds
        .iter()
        .zip(outcomes.chunks(seeds.len()))
        .map(|(&d, chunk)| SweepRow {
            d,
            seed_count: seeds.len(),
            mean_abs_rho_empirical: chunk.iter().map(|o| o.abs_empirical).sum::<f64>() / k,
            rho_closed_form: chunk.iter().map(|o| o.abs_closed).sum::<f64>() / k,
            realized_d: chunk.iter().map(|o| o.realized_d).sum::<f64>() / k,
        })
        .collect();
    Ok(SweepResult {
        rows,
        seeds: seeds.to_vec(),
        p_intra: configs.iter().map(|c| c.p_intra).collect(),
        p_inter: configs.iter().map(|c| c.p_inter).collect(),
    })
}

fn midranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation with midranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (midranks(x), midranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::test_support::bare;
    use crate::graph::LabelRule;
    use proptest::prelude::*;

    fn inputs(h_intra: f64) -> LemmaInputs {
        LemmaInputs {
            n0: 100,
            n1: 100,
            mu0: 1.0,
            mu1: 0.0,
            h_intra,
            h_inter: 1.0 - h_intra,
            sigma_z: 1.0,
        }
    }

    #[test]
    fn closed_form_examples() {
        assert!((rho_closed_form(&inputs(0.8)).unwrap() - 0.15).abs() < 1e-15);
        assert_eq!(rho_closed_form(&inputs(0.5)).unwrap(), 0.0);
        let balanced_mass = LemmaInputs {
            n0: 50,
            n1: 100,
            mu0: 2.0,
            mu1: 1.0,
            ..inputs(0.9)
        };
        assert_eq!(rho_closed_form(&balanced_mass).unwrap(), 0.0);
        assert!(matches!(
            rho_closed_form(&LemmaInputs { sigma_z: 0.0, ..inputs(0.8) }),
            Err(TheoryError::ZeroSigma)
        ));
        assert!(rho_closed_form(&LemmaInputs { h_inter: 0.5, ..inputs(0.8) }).is_err());
    }

    #[test]
    fn four_node_hand_computation() {
        // path 0-1-2-3, s = [0,0,1,1], x = [1,2,3,5]
        let g = bare(&[0, 0, 1, 1], &[(0, 1), (1, 2), (2, 3)], 1);
        let x = Matrix::from_vec(4, 1, vec![1.0, 2.0, 3.0, 5.0]);
        let g = Graph::new(x, g.sensitive().to_vec(), g.labels().to_vec(), g.edges().to_vec()).unwrap();
        let (a, b) = (1.0 / 2.0, 1.0 / 3.0);
        let r = |p: f64, q: f64| 1.0 / (p * q).sqrt();
        let z = [
            a * 1.0 + r(2.0, 3.0) * 2.0,
            r(2.0, 3.0) * 1.0 + b * 2.0 + b * 3.0,
            b * 2.0 + b * 3.0 + r(3.0, 2.0) * 5.0,
            r(2.0, 3.0) * 3.0 + a * 5.0,
        ];
        let mean = z.iter().sum::<f64>() / 4.0;
        let ind = [1.0, 1.0, 0.0, 0.0];
        let cov: f64 = z.iter().zip(&ind).map(|(v, i)| (v - mean) * (i - 0.5)).sum();
        let vz: f64 = z.iter().map(|v| (v - mean).powi(2)).sum();
        let pearson = cov / (vz * 1.0).sqrt();
        let got = rho_empirical(&g, &Matrix::identity(1), 0).unwrap();
        assert!((got - pearson).abs() < 1e-12, "{got} vs {pearson}");
    }

    #[test]
    fn identical_features_give_zero() {
        let g = bare(&[0, 1, 0, 1], &[(0, 1), (1, 2), (2, 3), (0, 3)], 2);
        let feats = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![3.0, 0.5], vec![3.0, 0.5]]);
        let g = Graph::new(feats, g.sensitive().to_vec(), g.labels().to_vec(), g.edges().to_vec()).unwrap();
        // symmetric pairs make both group means of Z equal
        let r = rho_empirical(&g, &Matrix::identity(2), 0).unwrap();
        assert!(r.abs() < 1e-12);
    }

    fn base(mu_gap: f64) -> SbmConfig {
        SbmConfig {
            nodes_per_group: (150, 150),
            p_intra: 0.06,
            p_inter: 0.06,
            feature_means: (vec![mu_gap], vec![0.0]),
            feature_stds: (vec![1.0], vec![1.0]),
            label_rule: LabelRule::GroupWithFlip { flip: 0.2 },
            seed: 0,
        }
    }

    #[test]
    fn realized_probabilities_keep_edge_budget() {
        let b = base(0.3);
        let c = realize_d(&b, 0.6).unwrap();
        let intra = 2.0 * 150.0 * 149.0 / 2.0;
        let inter = 150.0 * 150.0;
        let budget = |p: f64, q: f64| p * intra + q * inter;
        assert!((budget(c.p_intra, c.p_inter) - budget(b.p_intra, b.p_inter)).abs() < 1e-9);
        assert!((c.p_intra * intra / budget(c.p_intra, c.p_inter) - 0.8).abs() < 1e-12);
        let dense = SbmConfig {
            p_intra: 0.9,
            p_inter: 0.9,
            ..b
        };
        assert!(matches!(realize_d(&dense, 0.8), Err(TheoryError::UnrealizableD { .. })));
    }

    #[test]
    fn sweep_rows_sorted_and_flat_without_mean_gap() {
        let r = theorem_sweep(&base(0.0), &[0.6, 0.0, 0.3], &[1, 2, 3], None).unwrap();
        let ds: Vec<f64> = r.rows.iter().map(|r| r.d).collect();
        assert_eq!(ds, vec![0.0, 0.3, 0.6]);
        for row in &r.rows {
            assert!(row.mean_abs_rho_empirical < 0.15);
            assert_eq!(row.seed_count, 3);
        }
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(SweepResult::CSV_HEADER));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]) - 0.8).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn closed_form_is_odd_in_edge_mix(h in 0.0f64..=1.0, mu0 in -3.0f64..3.0, sigma in 0.1f64..3.0) {
            let a = LemmaInputs { mu0, sigma_z: sigma, ..inputs(h) };
            let b = LemmaInputs { h_intra: a.h_inter, h_inter: a.h_intra, ..a };
            prop_assert!((rho_closed_form(&a).unwrap() + rho_closed_form(&b).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn closed_form_grows_with_imbalance(d1 in 0.0f64..=1.0, d2 in 0.0f64..=1.0) {
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let at = |d: f64| rho_closed_form(&inputs((1.0 + d) / 2.0)).unwrap().abs();
            prop_assert!(at(lo) <= at(hi) + 1e-15);
        }

        #[test]
        fn empirical_equals_pearson_with_indicator(seed in 0u64..500) {
            let g = generate_sbm(&SbmConfig { seed, nodes_per_group: (12, 9), ..base(0.7) }).unwrap();
            let z = embed_linear(&g, &Matrix::identity(1)).unwrap().column(0);
            let ind: Vec<f64> = g.sensitive().iter().map(|&s| if s { 0.0 } else { 1.0 }).collect();
            let n = z.len() as f64;
            let (mz, mi) = (z.iter().sum::<f64>() / n, ind.iter().sum::<f64>() / n);
            let cov: f64 = z.iter().zip(&ind).map(|(a, b)| (a - mz) * (b - mi)).sum();
            let vz: f64 = z.iter().map(|a| (a - mz).powi(2)).sum();
            let vi: f64 = ind.iter().map(|b| (b - mi).powi(2)).sum();
            let r = rho_empirical(&g, &Matrix::identity(1), 0).unwrap();
            prop_assert!((r - cov / (vz * vi).sqrt()).abs() < 1e-12);
        }
    }
}
