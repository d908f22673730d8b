use serde::{Deserialize, Serialize};

use super::{ClientUpload, FederationError};
use crate::nn::ModelParams;

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Aggregation weights for one round, all of length `K'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerWeights {
    /// `softmax(B)`
    pub gamma_e: Vec<f64>,
    /// `ΔSP + ΔEO` per client, negated when the fairness weight is inverted.
    pub gamma_f_raw: Vec<f64>,
    /// `exp(softmax(gamma_f_raw))`
    pub gamma_f: Vec<f64>,
    /// `softmax((λ·γ_E + γ_F) / τ)`
    pub gamma: Vec<f64>,
}

impl ServerWeights {
    pub fn uniform(k: usize) -> Self {
        let u = vec![1.0 / k as f64; k];
        Self {
            gamma_e: u.clone(),
            gamma_f_raw: vec![0.0; k],
            gamma_f: vec![1.0; k],
            gamma: u,
        }
    }
}

pub fn combined_weights(
    gbs: &[f64],
    fairness_sums: &[f64],
    lambda: f64,
    tau: f64,
    invert_fairness_weight: bool,
) -> ServerWeights {
    assert_eq!(gbs.len(), fairness_sums.len(), "one score pair per client");
    let gamma_e = softmax(gbs);
    let gamma_f_raw: Vec<f64> = if invert_fairness_weight {
        fairness_sums.iter().map(|v| -v).collect()
    } else {
        fairness_sums.to_vec()
    };
    let gamma_f: Vec<f64> = softmax(&gamma_f_raw).into_iter().map(f64::exp).collect();
    let logits: Vec<f64> = gamma_e
        .iter()
        .zip(&gamma_f)
        .map(|(e, f)| (lambda * e + f) / tau)
        .collect();
    ServerWeights {
        gamma: softmax(&logits),
        gamma_e,
        gamma_f_raw,
        gamma_f,
    }
}

pub fn server_combined_weights(
    uploads: &[ClientUpload],
    lambda: f64,
    tau: f64,
    invert_fairness_weight: bool,
) -> ServerWeights {
    let gbs: Vec<f64> = uploads.iter().map(|u| u.gbs).collect();
    let sums: Vec<f64> = uploads.iter().map(|u| u.delta_sp + u.delta_eo).collect();
    combined_weights(&gbs, &sums, lambda, tau, invert_fairness_weight)
}

/// `Σ γᵢ ωᵢ`
pub fn server_aggregate(uploads: &[ClientUpload], gamma: &[f64]) -> Result<ModelParams, FederationError> {
    if uploads.len() != gamma.len() {
        return Err(FederationError::InvalidConfig(format!(
            "{} uploads but {} weights",
            uploads.len(),
            gamma.len()
        )));
    }
    let items: Vec<(&ModelParams, f64)> = uploads.iter().map(|u| &u.params).zip(gamma.iter().copied()).collect();
    Ok(ModelParams::weighted_sum(&items)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn symmetric_inputs_give_uniform_weights() {
        let w = combined_weights(&[0.4, 0.4], &[0.1, 0.1], 2.0, 0.5, false);
        assert_eq!(w.gamma, vec![0.5, 0.5]);
        let w = combined_weights(&[0.1, 0.5, 0.9], &[0.2, 0.2, 0.2], 0.0, 0.5, false);
        for g in w.gamma {
            assert!((g - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn three_client_reference_values() {
        // 50-digit evaluation with mpmath, step by step
        let w = combined_weights(&[0.2, 0.5, 0.9], &[0.3, 0.1, 0.2], 2.0, 0.5, false);
        let gamma_e = [0.22916797165646593, 0.30934440495480838, 0.46148762338872569];
        let gamma_f = [1.4436366784794948, 1.3506819396019319, 1.3940664691705032];
        let gamma = [0.22532980632184460, 0.25784571193234091, 0.51682448174581450];
        for i in 0..3 {
            assert!((w.gamma_e[i] - gamma_e[i]).abs() < 1e-14, "gamma_e[{i}]");
            assert!((w.gamma_f[i] - gamma_f[i]).abs() < 1e-14, "gamma_f[{i}]");
            assert!((w.gamma[i] - gamma[i]).abs() < 1e-14, "gamma[{i}]");
        }
    }

    #[test]
    fn huge_temperature_flattens_weights() {
        let w = combined_weights(&[0.0, 1.0, 0.3], &[2.0, 0.0, 0.7], 4.0, 1e6, false);
        for g in w.gamma {
            assert!((g - 1.0 / 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn inversion_flips_fairness_ordering() {
        let lit = combined_weights(&[0.5, 0.5], &[0.4, 0.1], 0.0, 1.0, false);
        let inv = combined_weights(&[0.5, 0.5], &[0.4, 0.1], 0.0, 1.0, true);
        assert!(lit.gamma[0] > lit.gamma[1]);
        assert!(inv.gamma[0] < inv.gamma[1]);
    }

    proptest! {
        #[test]
        fn weights_live_on_simplex(
            rows in prop::collection::vec((0.0f64..=1.0, 0.0f64..=2.0), 1..12),
            lambda in 0.0f64..5.0,
            tau in 0.01f64..5.0,
            invert in any::<bool>(),
        ) {
            let b: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let f: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let w = combined_weights(&b, &f, lambda, tau, invert);
            for v in [&w.gamma, &w.gamma_e] {
                prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert!(v.iter().all(|&g| g > 0.0));
            }
            let lo = softmax(&w.gamma_f_raw).into_iter().fold(f64::INFINITY, f64::min).exp();
            prop_assert!(w.gamma_f.iter().all(|&g| g >= lo - 1e-15 && g <= std::f64::consts::E + 1e-15));
        }

        #[test]
        fn less_fair_client_gets_more_weight_when_bias_term_is_off(
            a in 0.0f64..2.0, b in 0.0f64..2.0, tau in 0.05f64..4.0,
        ) {
            prop_assume!((a - b).abs() > 1e-6);
            let w = combined_weights(&[0.3, 0.8], &[a, b], 0.0, tau, false);
            prop_assert_eq!(a > b, w.gamma_f[0] > w.gamma_f[1]);
            prop_assert_eq!(a > b, w.gamma[0] > w.gamma[1]);
        }
    }
}
