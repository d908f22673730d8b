//! Two-block stochastic block model with per-group Gaussian node features.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Graph, GraphError};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    /// `y = 1[x[column] > threshold]`
    FeatureThreshold { column: usize, threshold: f64 },
    /// `y = s XOR Bernoulli(flip)`
    GroupWithFlip { flip: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    /// `(N₀, N₁)`; group 0 occupies ids `0..N₀`.
    pub nodes_per_group: (usize, usize),
    pub p_intra: f64,
    pub p_inter: f64,
    /// Per-column feature means for groups 0 and 1.
    pub feature_means: (Vec<f64>, Vec<f64>),
    /// Per-column feature standard deviations for groups 0 and 1.
    pub feature_stds: (Vec<f64>, Vec<f64>),
    pub label_rule: LabelRule,
    pub seed: u64,
}

impl SbmConfig {
    pub fn feature_dim(&self) -> usize {
        self.feature_means.0.len()
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |m: String| Err(GraphError::InvalidConfig(m));
        for (name, p) in [("p_intra", self.p_intra), ("p_inter", self.p_inter)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        let d = self.feature_dim();
        if d == 0 {
            return bad("feature dimension must be at least 1".into());
        }
        let lens = [
            self.feature_means.1.len(),
            self.feature_stds.0.len(),
            self.feature_stds.1.len(),
        ];
        if lens.iter().any(|&l| l != d) {
            return bad("feature mean/std vectors must all have the same length".into());
        }
        if self
            .feature_stds
            .0
            .iter()
            .chain(&self.feature_stds.1)
            .any(|&s| !(s > 0.0 && s.is_finite()))
        {
            return bad("feature standard deviations must be positive and finite".into());
        }
        if self
            .feature_means
            .0
            .iter()
            .chain(&self.feature_means.1)
            .any(|m| !m.is_finite())
        {
            return bad("feature means must be finite".into());
        }
        match self.label_rule {
            LabelRule::GroupWithFlip { flip } if !(0.0..=1.0).contains(&flip) => {
                bad(format!("label flip probability {flip} is not a probability"))
            }
            LabelRule::FeatureThreshold { column, .. } if column >= d => {
                bad(format!("label column {column} out of range for {d} features"))
            }
            _ => Ok(()),
        }
    }
}

/// Samples a graph from `cfg`. Fully determined by `cfg.seed`.
pub fn generate_sbm(cfg: &SbmConfig) -> Result<Graph, GraphError> {
    cfg.validate()?;
    let (n0, n1) = cfg.nodes_per_group;
    let n = n0 + n1;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut edges = Vec::new();
    sample_within(&mut rng, 0, n0, cfg.p_intra, &mut edges);
    sample_within(&mut rng, n0, n1, cfg.p_intra, &mut edges);
    sample_between(&mut rng, (0, n0), (n0, n1), cfg.p_inter, &mut edges);

    let d = cfg.feature_dim();
    let normals = |means: &[f64], stds: &[f64]| -> Vec<Normal<f64>> {
        means
            .iter()
            .zip(stds)
            .map(|(&m, &s)| Normal::new(m, s).expect("validated std"))
            .collect()
    };
    let dists = [
        normals(&cfg.feature_means.0, &cfg.feature_stds.0),
        normals(&cfg.feature_means.1, &cfg.feature_stds.1),
    ];
    let sensitive: Vec<bool> = (0..n).map(|v| v >= n0).collect();
    let mut features = Matrix::zeros(n, d);
    for (v, &s) in sensitive.iter().enumerate() {
        for (x, dist) in features.row_mut(v).iter_mut().zip(&dists[usize::from(s)]) {
            *x = dist.sample(&mut rng);
        }
    }

    let labels = match cfg.label_rule {
        LabelRule::GroupWithFlip { flip } => sensitive
            .iter()
            .map(|&s| s ^ (rng.random::<f64>() < flip))
            .collect(),
        LabelRule::FeatureThreshold { column, threshold } => {
            (0..n).map(|v| features.get(v, column) > threshold).collect()
        }
    };

    Graph::new(features, sensitive, labels, edges)
}

/// Geometric gap length between successes of a Bernoulli(p) sequence.
fn skip(rng: &mut impl Rng, log_q: f64) -> usize {
    let r: f64 = rng.random();
    ((1.0 - r).ln() / log_q).floor() as usize
}

/// Each unordered pair inside `start..start + m` independently w.p. `p`.
fn sample_within(rng: &mut impl Rng, start: usize, m: usize, p: f64, out: &mut Vec<(usize, usize)>) {
    if p <= 0.0 || m < 2 {
        return;
    }
    if p >= 1.0 {
        for i in 0..m {
            for j in i + 1..m {
                out.push((start + i, start + j));
            }
        }
        return;
    }
    // Batagelj & Brandes skipping over the strict lower triangle.
    let log_q = (1.0 - p).ln();
    let (mut v, mut w) = (1usize, 0usize);
    let mut first = true;
    while v < m {
        let gap = skip(rng, log_q);
        w = if first { gap } else { w + 1 + gap };
        first = false;
        while w >= v && v < m {
            w -= v;
            v += 1;
        }
        if v < m {
            out.push((start + w, start + v));
        }
    }
}

/// Each pair in `a × b` independently w.p. `p`.
fn sample_between(
    rng: &mut impl Rng,
    (a0, am): (usize, usize),
    (b0, bm): (usize, usize),
    p: f64,
    out: &mut Vec<(usize, usize)>,
) {
    let total = am * bm;
    if p <= 0.0 || total == 0 {
        return;
    }
    if p >= 1.0 {
        for i in 0..am {
            for j in 0..bm {
                out.push((a0 + i, b0 + j));
            }
        }
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut k = skip(rng, log_q);
    while k < total {
        out.push((a0 + k / bm, b0 + k % bm));
        k = k.saturating_add(1 + skip(rng, log_q));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::edge_group_stats;

    fn config(n: (usize, usize), p_intra: f64, p_inter: f64, seed: u64) -> SbmConfig {
        SbmConfig {
            nodes_per_group: n,
            p_intra,
            p_inter,
            feature_means: (vec![0.0, 1.0], vec![1.0, 0.0]),
            feature_stds: (vec![1.0, 1.0], vec![0.5, 0.5]),
            label_rule: LabelRule::GroupWithFlip { flip: 0.0 },
            seed,
        }
    }

    #[test]
    fn complete_k4() {
        let g = generate_sbm(&config((2, 2), 1.0, 1.0, 0)).unwrap();
        assert_eq!(g.num_edges(), 6);
        let st = edge_group_stats(&g).unwrap();
        assert_eq!((st.n_intra, st.n_inter), (2, 4));
        assert!((st.gbs - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn no_inter_edges_when_p_inter_zero() {
        let g = generate_sbm(&config((30, 30), 0.2, 0.0, 4)).unwrap();
        let st = edge_group_stats(&g).unwrap();
        assert_eq!((st.h_intra, st.gbs), (1.0, 0.0));
    }

    #[test]
    fn balanced_probabilities_balance_edges() {
        for seed in 0..10 {
            let g = generate_sbm(&config((500, 500), 0.02, 0.02, seed)).unwrap();
            let st = edge_group_stats(&g).unwrap();
            assert!((st.h_intra - st.h_inter).abs() < 0.05, "seed {seed}: {st:?}");
        }
    }

    #[test]
    fn skip_sampling_is_unbiased() {
        // every pair counted over many draws should hit about p
        let m = 12;
        let p = 0.3;
        let mut counts = vec![0usize; m * m];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let reps = 4000;
        for _ in 0..reps {
            let mut e = Vec::new();
            sample_within(&mut rng, 0, m, p, &mut e);
            for (u, v) in e {
                assert!(u < v && v < m);
                counts[u * m + v] += 1;
            }
        }
        for u in 0..m {
            for v in u + 1..m {
                let f = counts[u * m + v] as f64 / reps as f64;
                assert!((f - p).abs() < 0.04, "pair ({u},{v}) rate {f}");
            }
        }
    }

    #[test]
    fn inter_fraction_grows_with_p_inter() {
        let mut prev = -1.0;
        for p_inter in [0.0, 0.005, 0.01, 0.02, 0.04] {
            let mean: f64 = (0..5)
                .map(|seed| {
                    let g = generate_sbm(&config((200, 200), 0.02, p_inter, seed)).unwrap();
                    edge_group_stats(&g).unwrap().h_inter
                })
                .sum::<f64>()
                / 5.0;
            assert!(mean >= prev, "h_inter {mean} after {prev}");
            prev = mean;
        }
    }

    #[test]
    fn features_and_labels_follow_config() {
        let mut cfg = config((400, 400), 0.01, 0.01, 3);
        let g = generate_sbm(&cfg).unwrap();
        assert_eq!(g.group_sizes(), (400, 400));
        // flip = 0 makes labels equal the sensitive attribute
        assert_eq!(g.labels(), g.sensitive());
        let col_mean = |group: bool, c: usize| {
            let vals: Vec<f64> = (0..g.num_nodes())
                .filter(|&v| g.sensitive()[v] == group)
                .map(|v| g.features().get(v, c))
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        assert!((col_mean(false, 1) - 1.0).abs() < 0.15);
        assert!((col_mean(true, 0) - 1.0).abs() < 0.1);

        cfg.label_rule = LabelRule::FeatureThreshold { column: 0, threshold: 0.5 };
        let g = generate_sbm(&cfg).unwrap();
        for v in 0..g.num_nodes() {
            assert_eq!(g.labels()[v], g.features().get(v, 0) > 0.5);
        }
    }

    #[test]
    fn same_seed_same_graph() {
        let a = generate_sbm(&config((100, 80), 0.05, 0.01, 42)).unwrap();
        let b = generate_sbm(&config((100, 80), 0.05, 0.01, 42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = config((5, 5), 1.5, 0.0, 0);
        assert!(generate_sbm(&cfg).is_err());
        cfg.p_intra = 0.5;
        cfg.feature_stds.1[0] = 0.0;
        assert!(generate_sbm(&cfg).is_err());
    }
}
