//! Line-oriented experiment configuration.
//!
//! ```text
//! # comment
//! mode = federate
//!
//! [sbm]
//! n0 = 600
//! p_intra = 0.05
//! ```
//!
//! Keys before the first section header belong to the top level. Unknown
//! sections, unknown keys and repeated keys are errors. Every key has a
//! default except `mode`; [`ExperimentConfig::render`] prints all of them.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::federation::{Interpolation, LocalEvalModel, ProtocolConfig, Weighting};
use crate::graph::{LabelRule, SbmConfig};
use crate::metrics::{Aggregate, DistributionMode};
use crate::nn::Activation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Federate,
    FedavgBaseline,
    TheorySweep,
    Audit,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Federate => "federate",
            Mode::FedavgBaseline => "fedavg_baseline",
            Mode::TheorySweep => "theory_sweep",
            Mode::Audit => "audit",
        }
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "federate" => Ok(Mode::Federate),
            "fedavg_baseline" => Ok(Mode::FedavgBaseline),
            "theory_sweep" => Ok(Mode::TheorySweep),
            "audit" => Ok(Mode::Audit),
            _ => Err(format!("unknown mode `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataSource {
    Files { nodes: PathBuf, edges: PathBuf },
    Sbm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub k_clients: usize,
    pub hops: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    /// Number of independent splits; split `r` uses `split_seed + r` and
    /// model seed `protocol.seed + r`.
    pub splits: usize,
    pub split_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub d_values: Vec<f64>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub data: DataSource,
    /// Generator settings; used when `data` is `Sbm` and as the sweep base.
    pub sbm: SbmConfig,
    pub partition: PartitionConfig,
    pub protocol: ProtocolConfig,
    pub eval: EvalConfig,
    pub sweep: SweepSettings,
    pub predictions: Option<PathBuf>,
    /// Also write every broadcast and upload to `replay.jsonl`.
    pub replay: bool,
}

/// `(section, key)` in render order. The empty section is the top level.
const KEYS: &[(&str, &str)] = &[
    ("", "mode"),
    ("data", "source"),
    ("data", "nodes"),
    ("data", "edges"),
    ("sbm", "n0"),
    ("sbm", "n1"),
    ("sbm", "p_intra"),
    ("sbm", "p_inter"),
    ("sbm", "feature_means_0"),
    ("sbm", "feature_means_1"),
    ("sbm", "feature_stds_0"),
    ("sbm", "feature_stds_1"),
    ("sbm", "label_rule"),
    ("sbm", "label_flip"),
    ("sbm", "label_column"),
    ("sbm", "label_threshold"),
    ("sbm", "seed"),
    ("partition", "k_clients"),
    ("partition", "hops"),
    ("partition", "seed"),
    ("model", "hidden_dim"),
    ("model", "activation"),
    ("model", "seed"),
    ("training", "learning_rate"),
    ("training", "alpha"),
    ("training", "local_epochs"),
    ("training", "rounds"),
    ("training", "clients_per_round"),
    ("training", "early_stop_patience"),
    ("training", "interpolation"),
    ("training", "label_distribution"),
    ("server", "lambda"),
    ("server", "tau"),
    ("server", "invert_fairness_weight"),
    ("server", "weighting"),
    ("eval", "train_fraction"),
    ("eval", "val_fraction"),
    ("eval", "test_fraction"),
    ("eval", "splits"),
    ("eval", "split_seed"),
    ("eval", "local_aggregate"),
    ("eval", "local_model"),
    ("sweep", "d_values"),
    ("sweep", "seeds"),
    ("audit", "predictions"),
    ("output", "replay"),
];

struct Entry {
    value: String,
    line: usize,
}

struct Raw {
    entries: BTreeMap<(String, String), Entry>,
    base_dir: PathBuf,
}

fn parse_error(line: usize, message: impl Into<String>) -> ExperimentError {
    ExperimentError::Parse {
        line,
        message: message.into(),
    }
}

fn invalid(field: &str, message: impl Into<String>) -> ExperimentError {
    ExperimentError::Validation {
        field: field.into(),
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<BTreeMap<(String, String), Entry>, ExperimentError> {
    let mut section = String::new();
    let mut entries = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| parse_error(line, "unterminated section header"))?
                .trim();
            if !KEYS.iter().any(|(s, _)| *s == name) || name.is_empty() {
                return Err(parse_error(line, format!("unknown section `{name}`")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| parse_error(line, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.iter().any(|&(s, k)| s == section && k == key) {
            let place = if section.is_empty() { "top level".to_string() } else { format!("[{section}]") };
            return Err(parse_error(line, format!("unknown key `{key}` in {place}")));
        }
        let slot = (section.clone(), key.to_string());
        if let Some(prev) = entries.get(&slot) {
            let prev: &Entry = prev;
            return Err(parse_error(line, format!("`{key}` already set on line {}", prev.line)));
        }
        entries.insert(
            slot,
            Entry {
                value: value.to_string(),
                line,
            },
        );
    }
    Ok(entries)
}

impl Raw {
    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.get(&(section.to_string(), key.to_string()))
    }

    fn get<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, ExperimentError>
    where
        T::Err: Display,
    {
        match self.entry(section, key) {
            None => Ok(default),
            Some(e) => e
                .value
                .parse()
                .map_err(|err| parse_error(e.line, format!("`{key}`: {err}"))),
        }
    }

    fn list<T: FromStr>(&self, section: &str, key: &str, default: Vec<T>) -> Result<Vec<T>, ExperimentError>
    where
        T::Err: Display,
    {
        match self.entry(section, key) {
            None => Ok(default),
            Some(e) if e.value.is_empty() => Ok(Vec::new()),
            Some(e) => e
                .value
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse()
                        .map_err(|err| parse_error(e.line, format!("`{key}`: {err}")))
                })
                .collect(),
        }
    }

    fn optional<T: FromStr>(&self, section: &str, key: &str, none_word: &str) -> Result<Option<T>, ExperimentError>
    where
        T::Err: Display,
    {
        match self.entry(section, key) {
            None => Ok(None),
            Some(e) if e.value == none_word => Ok(None),
            Some(e) => e
                .value
                .parse()
                .map(Some)
                .map_err(|err| parse_error(e.line, format!("`{key}`: {err}"))),
        }
    }

    fn word<T>(&self, section: &str, key: &str, default: T, table: &[(&str, T)]) -> Result<T, ExperimentError>
    where
        T: Copy,
    {
        match self.entry(section, key) {
            None => Ok(default),
            Some(e) => table
                .iter()
                .find(|(w, _)| *w == e.value)
                .map(|(_, v)| *v)
                .ok_or_else(|| {
                    let options: Vec<&str> = table.iter().map(|(w, _)| *w).collect();
                    parse_error(e.line, format!("`{key}` must be one of {}", options.join(", ")))
                }),
        }
    }

    fn path(&self, section: &str, key: &str) -> Option<PathBuf> {
        self.entry(section, key).map(|e| {
            let p = PathBuf::from(&e.value);
            if p.is_absolute() {
                p
            } else {
                self.base_dir.join(p)
            }
        })
    }
}

const ACTIVATIONS: &[(&str, Activation)] = &[("relu", Activation::Relu), ("linear", Activation::Linear)];
const DISTRIBUTIONS: &[(&str, DistributionMode)] =
    &[("soft", DistributionMode::Soft), ("hard", DistributionMode::Hard)];
const WEIGHTINGS: &[(&str, Weighting)] = &[("combined", Weighting::Combined), ("uniform", Weighting::Uniform)];
const AGGREGATES: &[(&str, Aggregate)] = &[("median", Aggregate::Median), ("mean", Aggregate::Mean)];
const LOCAL_MODELS: &[(&str, LocalEvalModel)] =
    &[("global", LocalEvalModel::Global), ("client", LocalEvalModel::Client)];

fn word_of<T: PartialEq + Copy>(table: &[(&'static str, T)], v: T) -> &'static str {
    table.iter().find(|(_, t)| *t == v).map(|(w, _)| *w).expect("value in table")
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    pub fn parse_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
        Self::parse_str(&text, &base)
    }

    /// Relative data paths are resolved against `base_dir`.
    pub fn parse_str(text: &str, base_dir: &Path) -> Result<Self, ExperimentError> {
        let raw = Raw {
            entries: tokenize(text)?,
            base_dir: base_dir.to_path_buf(),
        };
        let cfg = Self::from_raw(&raw)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn from_raw(r: &Raw) -> Result<Self, ExperimentError> {
        let mode: Mode = match r.entry("", "mode") {
            None => return Err(invalid("mode", "missing")),
            Some(e) => e.value.parse().map_err(|m: String| parse_error(e.line, m))?,
        };
        let source: String = r.get("data", "source", "sbm".to_string())?;
        let data = match source.as_str() {
            "sbm" => DataSource::Sbm,
            "files" => DataSource::Files {
                nodes: r.path("data", "nodes").ok_or_else(|| invalid("data.nodes", "required when source = files"))?,
                edges: r.path("data", "edges").ok_or_else(|| invalid("data.edges", "required when source = files"))?,
            },
            other => {
                let line = r.entry("data", "source").map_or(0, |e| e.line);
                return Err(parse_error(line, format!("`source` must be sbm or files, got `{other}`")));
            }
        };
        let rule: String = r.get("sbm", "label_rule", "group_with_flip".to_string())?;
        let label_rule = match rule.as_str() {
            "group_with_flip" => LabelRule::GroupWithFlip {
                flip: r.get("sbm", "label_flip", 0.2)?,
            },
            "feature_threshold" => LabelRule::FeatureThreshold {
                column: r.get("sbm", "label_column", 0)?,
                threshold: r.get("sbm", "label_threshold", 0.0)?,
            },
            other => {
                let line = r.entry("sbm", "label_rule").map_or(0, |e| e.line);
                return Err(parse_error(
                    line,
                    format!("`label_rule` must be group_with_flip or feature_threshold, got `{other}`"),
                ));
            }
        };
        let sbm = SbmConfig {
            nodes_per_group: (r.get("sbm", "n0", 500)?, r.get("sbm", "n1", 500)?),
            p_intra: r.get("sbm", "p_intra", 0.02)?,
            p_inter: r.get("sbm", "p_inter", 0.005)?,
            feature_means: (
                r.list("sbm", "feature_means_0", vec![1.0])?,
                r.list("sbm", "feature_means_1", vec![0.0])?,
            ),
            feature_stds: (
                r.list("sbm", "feature_stds_0", vec![1.0])?,
                r.list("sbm", "feature_stds_1", vec![1.0])?,
            ),
            label_rule,
            seed: r.get("sbm", "seed", 0)?,
        };
        let interpolation = match r.entry("training", "interpolation") {
            None => Interpolation::JsDivergence,
            Some(e) if e.value == "js" => Interpolation::JsDivergence,
            Some(e) => Interpolation::Fixed(
                e.value
                    .parse()
                    .map_err(|_| parse_error(e.line, "`interpolation` must be js or a number in [0, 1]"))?,
            ),
        };
        let protocol = ProtocolConfig {
            hidden_dim: r.get("model", "hidden_dim", 64)?,
            activation: r.word("model", "activation", Activation::Relu, ACTIVATIONS)?,
            learning_rate: r.get("training", "learning_rate", 0.01)?,
            alpha: r.get("training", "alpha", 2.0)?,
            lambda: r.get("server", "lambda", 2.0)?,
            tau: r.get("server", "tau", 1.0)?,
            local_epochs: r.get("training", "local_epochs", 3)?,
            rounds: r.get("training", "rounds", 50)?,
            clients_per_round: r.optional("training", "clients_per_round", "all")?,
            invert_fairness_weight: r.get("server", "invert_fairness_weight", false)?,
            weighting: r.word("server", "weighting", Weighting::Combined, WEIGHTINGS)?,
            interpolation,
            distribution: r.word("training", "label_distribution", DistributionMode::Soft, DISTRIBUTIONS)?,
            local_eval: r.word("eval", "local_model", LocalEvalModel::Global, LOCAL_MODELS)?,
            local_aggregate: r.word("eval", "local_aggregate", Aggregate::Median, AGGREGATES)?,
            early_stop_patience: r.optional("training", "early_stop_patience", "none")?,
            seed: r.get("model", "seed", 0)?,
        };
        Ok(Self {
            mode,
            data,
            sbm,
            partition: PartitionConfig {
                k_clients: r.get("partition", "k_clients", 10)?,
                hops: r.get("partition", "hops", 2)?,
                seed: r.get("partition", "seed", 0)?,
            },
            protocol,
            eval: EvalConfig {
                train_fraction: r.get("eval", "train_fraction", 0.5)?,
                val_fraction: r.get("eval", "val_fraction", 0.25)?,
                test_fraction: r.get("eval", "test_fraction", 0.25)?,
                splits: r.get("eval", "splits", 5)?,
                split_seed: r.get("eval", "split_seed", 0)?,
            },
            sweep: SweepSettings {
                d_values: r.list("sweep", "d_values", vec![0.0, 0.2, 0.4, 0.6, 0.8])?,
                seeds: r.list("sweep", "seeds", (0..10).collect())?,
            },
            predictions: r.path("audit", "predictions"),
            replay: r.get("output", "replay", false)?,
        })
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let e = &self.eval;
        for (name, v) in [
            ("eval.train_fraction", e.train_fraction),
            ("eval.val_fraction", e.val_fraction),
            ("eval.test_fraction", e.test_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(name, "must be in [0, 1]"));
            }
        }
        let sum = e.train_fraction + e.val_fraction + e.test_fraction;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid("eval.test_fraction", format!("fractions sum to {sum}, not 1")));
        }
        if e.train_fraction == 0.0 {
            return Err(invalid("eval.train_fraction", "must be positive"));
        }
        if e.splits == 0 {
            return Err(invalid("eval.splits", "must be at least 1"));
        }
        if self.partition.k_clients == 0 {
            return Err(invalid("partition.k_clients", "must be at least 1"));
        }
        if self.partition.hops == 0 {
            return Err(invalid("partition.hops", "must be at least 1"));
        }
        let p = &self.protocol;
        if p.hidden_dim == 0 {
            return Err(invalid("model.hidden_dim", "must be positive"));
        }
        if !(p.learning_rate > 0.0) || !p.learning_rate.is_finite() {
            return Err(invalid("training.learning_rate", "must be positive"));
        }
        if !p.alpha.is_finite() || p.alpha < 0.0 {
            return Err(invalid("training.alpha", "must be finite and nonnegative"));
        }
        if !(p.tau > 0.0) || !p.tau.is_finite() {
            return Err(invalid("server.tau", "must be positive"));
        }
        if !p.lambda.is_finite() {
            return Err(invalid("server.lambda", "must be finite"));
        }
        if let Some(k) = p.clients_per_round {
            if k == 0 || k > self.partition.k_clients {
                return Err(invalid("training.clients_per_round", "must be in 1..=k_clients"));
            }
        }
        if p.early_stop_patience == Some(0) {
            return Err(invalid("training.early_stop_patience", "must be at least 1"));
        }
        if let Interpolation::Fixed(t) = p.interpolation {
            if !(0.0..=1.0).contains(&t) {
                return Err(invalid("training.interpolation", "fixed value must be in [0, 1]"));
            }
        }
        let needs_sbm = matches!(self.data, DataSource::Sbm) && self.mode != Mode::Audit
            || self.mode == Mode::TheorySweep;
        if needs_sbm {
            self.sbm
                .validate()
                .map_err(|err| invalid("sbm", err.to_string()))?;
        }
        if self.mode == Mode::TheorySweep {
            if self.sweep.seeds.is_empty() {
                return Err(invalid("sweep.seeds", "at least one seed"));
            }
            if self.sweep.d_values.iter().any(|d| !(0.0..=1.0).contains(d)) {
                return Err(invalid("sweep.d_values", "each d must be in [0, 1]"));
            }
        }
        if self.mode == Mode::Audit && self.predictions.is_none() {
            return Err(invalid("audit.predictions", "required in audit mode"));
        }
        Ok(())
    }

    /// Applies one seed to every seeded component.
    pub fn override_seeds(&mut self, seed: u64) {
        self.sbm.seed = seed;
        self.partition.seed = seed;
        self.protocol.seed = seed;
        self.eval.split_seed = seed;
    }

    /// Every key with its resolved value; parsing the output reproduces
    /// `self`.
    pub fn render(&self) -> String {
        let p = &self.protocol;
        let (flip, column, threshold, rule) = match self.sbm.label_rule {
            LabelRule::GroupWithFlip { flip } => (flip, 0, 0.0, "group_with_flip"),
            LabelRule::FeatureThreshold { column, threshold } => (0.2, column, threshold, "feature_threshold"),
        };
        let (source, nodes, edges) = match &self.data {
            DataSource::Sbm => ("sbm", None, None),
            DataSource::Files { nodes, edges } => ("files", Some(nodes), Some(edges)),
        };
        let mut values: BTreeMap<(&str, &str), String> = BTreeMap::new();
        let mut put = |s: &'static str, k: &'static str, v: String| {
            values.insert((s, k), v);
        };
        put("", "mode", self.mode.name().into());
        put("data", "source", source.into());
        if let Some(n) = nodes {
            put("data", "nodes", n.display().to_string());
        }
        if let Some(e) = edges {
            put("data", "edges", e.display().to_string());
        }
        put("sbm", "n0", self.sbm.nodes_per_group.0.to_string());
        put("sbm", "n1", self.sbm.nodes_per_group.1.to_string());
        put("sbm", "p_intra", self.sbm.p_intra.to_string());
        put("sbm", "p_inter", self.sbm.p_inter.to_string());
        put("sbm", "feature_means_0", join(&self.sbm.feature_means.0));
        put("sbm", "feature_means_1", join(&self.sbm.feature_means.1));
        put("sbm", "feature_stds_0", join(&self.sbm.feature_stds.0));
        put("sbm", "feature_stds_1", join(&self.sbm.feature_stds.1));
        put("sbm", "label_rule", rule.into());
        put("sbm", "label_flip", flip.to_string());
        put("sbm", "label_column", column.to_string());
        put("sbm", "label_threshold", threshold.to_string());
        put("sbm", "seed", self.sbm.seed.to_string());
        put("partition", "k_clients", self.partition.k_clients.to_string());
        put("partition", "hops", self.partition.hops.to_string());
        put("partition", "seed", self.partition.seed.to_string());
        put("model", "hidden_dim", p.hidden_dim.to_string());
        put("model", "activation", word_of(ACTIVATIONS, p.activation).into());
        put("model", "seed", p.seed.to_string());
        put("training", "learning_rate", p.learning_rate.to_string());
        put("training", "alpha", p.alpha.to_string());
        put("training", "local_epochs", p.local_epochs.to_string());
        put("training", "rounds", p.rounds.to_string());
        put(
            "training",
            "clients_per_round",
            p.clients_per_round.map_or("all".into(), |k| k.to_string()),
        );
        put(
            "training",
            "early_stop_patience",
            p.early_stop_patience.map_or("none".into(), |k| k.to_string()),
        );
        put(
            "training",
            "interpolation",
            match p.interpolation {
                Interpolation::JsDivergence => "js".into(),
                Interpolation::Fixed(t) => t.to_string(),
            },
        );
        put("training", "label_distribution", word_of(DISTRIBUTIONS, p.distribution).into());
        put("server", "lambda", p.lambda.to_string());
        put("server", "tau", p.tau.to_string());
        put("server", "invert_fairness_weight", p.invert_fairness_weight.to_string());
        put("server", "weighting", word_of(WEIGHTINGS, p.weighting).into());
        put("eval", "train_fraction", self.eval.train_fraction.to_string());
        put("eval", "val_fraction", self.eval.val_fraction.to_string());
        put("eval", "test_fraction", self.eval.test_fraction.to_string());
        put("eval", "splits", self.eval.splits.to_string());
        put("eval", "split_seed", self.eval.split_seed.to_string());
        put("eval", "local_aggregate", word_of(AGGREGATES, p.local_aggregate).into());
        put("eval", "local_model", word_of(LOCAL_MODELS, p.local_eval).into());
        put("sweep", "d_values", join(&self.sweep.d_values));
        put("sweep", "seeds", join(&self.sweep.seeds));
        if let Some(pred) = &self.predictions {
            put("audit", "predictions", pred.display().to_string());
        }
        put("output", "replay", self.replay.to_string());

        let mut out = String::new();
        let mut current = None;
        for &(section, key) in KEYS {
            let Some(v) = values.get(&(section, key)) else {
                continue;
            };
            if current != Some(section) {
                if !section.is_empty() {
                    out.push_str(&format!("\n[{section}]\n"));
                }
                current = Some(section);
            }
            out.push_str(&format!("{key} = {v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ExperimentError> {
        ExperimentConfig::parse_str(text, Path::new("/cfg"))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse("mode = federate\n[data]\nsource = sbm\n").unwrap();
        assert_eq!(c.protocol.tau, 1.0);
        assert_eq!(c.protocol.lambda, 2.0);
        assert_eq!(c.protocol.alpha, 2.0);
        assert_eq!(c.protocol.local_epochs, 3);
        assert_eq!(c.protocol.hidden_dim, 64);
        assert_eq!(c.eval.splits, 5);
        assert_eq!((c.eval.train_fraction, c.eval.val_fraction), (0.5, 0.25));
        let dump = c.render();
        for line in ["tau = 1", "lambda = 2", "alpha = 2", "local_epochs = 3", "hidden_dim = 64"] {
            assert!(dump.contains(line), "{line} missing from\n{dump}");
        }
    }

    #[test]
    fn rendered_config_round_trips() {
        let text = "mode = theory_sweep\n[data]\nsource = files\nnodes = n.csv\nedges = /abs/e.csv\n\
                    [sbm]\nfeature_means_0 = 0.1, -2.5\nfeature_means_1 = 0, 1e-3\n\
                    feature_stds_0 = 1, 1\nfeature_stds_1 = 0.5, 2\nlabel_rule = feature_threshold\n\
                    label_column = 1\n[training]\nclients_per_round = 3\ninterpolation = 0.25\n\
                    early_stop_patience = 10\n[server]\ntau = 0.1\ninvert_fairness_weight = true\n\
                    [sweep]\nd_values = 0, 0.5\nseeds = 4, 9\n";
        let c = parse(text).unwrap();
        assert_eq!(
            c.data,
            DataSource::Files {
                nodes: PathBuf::from("/cfg/n.csv"),
                edges: PathBuf::from("/abs/e.csv")
            }
        );
        let again = parse(&c.render()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.render(), c.render());
    }

    #[test]
    fn bad_fractions_name_the_field() {
        let err = parse("mode = federate\n[eval]\ntrain_fraction = 0.5\nval_fraction = 0.3\ntest_fraction = 0.3\n")
            .unwrap_err();
        assert!(matches!(err, ExperimentError::Validation { ref field, .. } if field.starts_with("eval.")));
    }

    #[test]
    fn empty_file_misses_mode() {
        assert!(matches!(
            parse("").unwrap_err(),
            ExperimentError::Validation { ref field, .. } if field == "mode"
        ));
    }

    #[test]
    fn unknown_and_repeated_keys_report_lines() {
        let err = parse("mode = federate\n\n[server]\ntemperature = 3\n").unwrap_err();
        assert!(matches!(err, ExperimentError::Parse { line: 4, .. }));
        let err = parse("mode = federate\n[bogus]\n").unwrap_err();
        assert!(matches!(err, ExperimentError::Parse { line: 2, .. }));
        let err = parse("mode = federate\nmode = audit\n").unwrap_err();
        assert!(matches!(err, ExperimentError::Parse { line: 2, .. }));
        let err = parse("mode = federate\n[training]\nalpha = lots\n").unwrap_err();
        assert!(matches!(err, ExperimentError::Parse { line: 3, .. }));
        let err = parse("mode = federate\njust words\n").unwrap_err();
        assert!(matches!(err, ExperimentError::Parse { line: 2, .. }));
    }

    #[test]
    fn seed_override_touches_every_seed() {
        let mut c = parse("mode = federate\n").unwrap();
        c.override_seeds(77);
        assert_eq!(
            (c.sbm.seed, c.partition.seed, c.protocol.seed, c.eval.split_seed),
            (77, 77, 77, 77)
        );
    }
}
