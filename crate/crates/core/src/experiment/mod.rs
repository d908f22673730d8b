//! End-to-end experiment runs: configuration, data loading, the four run
//! modes and their output files.
//!
//! Outputs land in one directory, each written to a temporary file and
//! renamed into place:
//!
//! | file | modes | content |
//! |---|---|---|
//! | `resolved_config.txt` | all | every configuration key with its value |
//! | `rounds.jsonl` | federate, fedavg_baseline | one round report per line, tagged with its split |
//! | `metrics.csv` | federate, fedavg_baseline, audit | final metrics per split and scope, then mean and std |
//! | `model.ckpt` | federate, fedavg_baseline | final model of split 0 in the parameter wire format |
//! | `replay.jsonl` | federate, fedavg_baseline with `replay = true` | every broadcast and full upload, tagged with its split |
//! | `sweep.csv` | theory_sweep | `d,seed_count,mean_abs_rho_empirical,rho_closed_form` |

mod config;

pub use config::{DataSource, EvalConfig, ExperimentConfig, Mode, PartitionConfig, SweepSettings};

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::federation::{
    run_fedavg_baseline, run_federation, Federation, FederationError, NodeSplit, RoundReport,
    RunOutcome,
};
use crate::graph::{
    edge_group_stats, generate_sbm, load_csv, partition_ego_networks, EdgeLoadReport, Graph,
    GraphError,
};
use crate::metrics::{aggregate, evaluate, spread, Aggregate, MetricBundle, StatsError};
use crate::theory::{theorem_sweep, SweepResult, TheoryError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{field}: {message}")]
    Validation { field: String, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Federation(#[from] FederationError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("predictions file, row {row}: {message}")]
    Predictions { row: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    /// Stable error class name for command-line reporting.
    pub fn class(&self) -> &'static str {
        match self {
            ExperimentError::Parse { .. } => "ParseError",
            ExperimentError::Validation { .. } => "ValidationError",
            ExperimentError::Graph(GraphError::Format { .. }) => "FormatError",
            ExperimentError::Graph(GraphError::Io(_)) | ExperimentError::Theory(TheoryError::Io(_)) => "IoError",
            ExperimentError::Graph(GraphError::BinaryViolation { .. }) => "BinaryViolation",
            ExperimentError::Graph(_) => "GraphError",
            ExperimentError::Federation(FederationError::NonFinite { .. }) => "NonFinite",
            ExperimentError::Federation(_) => "FederationError",
            ExperimentError::Theory(TheoryError::UnrealizableD { .. }) => "UnrealizableD",
            ExperimentError::Theory(_) => "TheoryError",
            ExperimentError::Stats(_) => "StatsError",
            ExperimentError::Predictions { .. } => "FormatError",
            ExperimentError::Io(_) => "IoError",
        }
    }

    /// Process exit code: 2 configuration, 3 data, 4 run, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Parse { .. } | ExperimentError::Validation { .. } => 2,
            ExperimentError::Io(_) | ExperimentError::Graph(GraphError::Io(_)) => 5,
            ExperimentError::Graph(_) | ExperimentError::Predictions { .. } => 3,
            ExperimentError::Theory(TheoryError::Io(_)) => 5,
            _ => 4,
        }
    }
}

/// Dataset statistics after isolated nodes are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSummary {
    pub nodes: usize,
    pub edges: usize,
    pub gbs: f64,
    pub h_intra: f64,
    pub group_sizes: (usize, usize),
    pub isolated_removed: usize,
    pub edge_report: Option<EdgeLoadReport>,
}

impl LoadSummary {
    pub fn render(&self) -> String {
        let mut s = format!(
            "nodes {}  edges {}  gbs {:.4}  intra fraction {:.4}  group sizes {}/{}  isolated removed {}",
            self.nodes,
            self.edges,
            self.gbs,
            self.h_intra,
            self.group_sizes.0,
            self.group_sizes.1,
            self.isolated_removed
        );
        if let Some(r) = &self.edge_report {
            s.push_str(&format!(
                "  edge rows {}  duplicates removed {}  self-loops rejected {}",
                r.rows, r.duplicates_removed, r.self_loops_rejected
            ));
        }
        s
    }
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<(Graph, LoadSummary), ExperimentError> {
    let (raw, edge_report) = match &cfg.data {
        DataSource::Sbm => (generate_sbm(&cfg.sbm)?, None),
        DataSource::Files { nodes, edges } => {
            let (g, report) = load_csv(nodes, edges)?;
            (g, Some(report))
        }
    };
    let (graph, _) = raw.without_isolated();
    let stats = edge_group_stats(&graph)?;
    let summary = LoadSummary {
        nodes: graph.num_nodes(),
        edges: graph.num_edges(),
        gbs: stats.gbs,
        h_intra: stats.h_intra,
        group_sizes: graph.group_sizes(),
        isolated_removed: raw.num_nodes() - graph.num_nodes(),
        edge_report,
    };
    Ok((graph, summary))
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub split: usize,
    pub global: MetricBundle,
    pub local: Option<MetricBundle>,
    pub rounds_run: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub load: Option<LoadSummary>,
    pub splits: Vec<SplitMetrics>,
    pub sweep: Option<SweepResult>,
    pub audit: Option<MetricBundle>,
    pub outputs: Vec<PathBuf>,
}

impl RunSummary {
    pub fn mean_global(&self) -> Option<MetricBundle> {
        let g: Vec<MetricBundle> = self.splits.iter().map(|s| s.global).collect();
        aggregate(&g, Aggregate::Mean)
    }
}

#[derive(Serialize)]
struct TaggedRound<'a> {
    split: usize,
    #[serde(flatten)]
    report: &'a RoundReport,
}

fn metrics_csv(rows: &[(String, &str, MetricBundle)]) -> Result<Vec<u8>, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["split", "scope"];
    header.extend(MetricBundle::CSV_FIELDS);
    w.write_record(&header).map_err(csv_io)?;
    for (split, scope, b) in rows {
        let mut rec = vec![split.clone(), scope.to_string()];
        rec.extend(b.csv_values());
        w.write_record(&rec).map_err(csv_io)?;
    }
    w.into_inner().map_err(|e| std::io::Error::other(e.to_string()).into())
}

fn csv_io(e: csv::Error) -> ExperimentError {
    ExperimentError::Io(std::io::Error::other(e.to_string()))
}

/// Trains one split. Split `r` uses node split seed `split_seed + r` and
/// model seed `protocol.seed + r`.
pub fn run_split(
    cfg: &ExperimentConfig,
    graph: &Graph,
    split_index: usize,
    replay: Option<&mut dyn std::io::Write>,
) -> Result<RunOutcome, ExperimentError> {
    let egos = partition_ego_networks(graph, cfg.partition.k_clients, cfg.partition.hops, cfg.partition.seed)?;
    let split = NodeSplit::random(
        graph.num_nodes(),
        cfg.eval.train_fraction,
        cfg.eval.val_fraction,
        cfg.eval.split_seed.wrapping_add(split_index as u64),
    );
    let mut protocol = cfg.protocol.clone();
    protocol.seed = protocol.seed.wrapping_add(split_index as u64);
    let mut fed = Federation::new(graph.clone(), egos, split, protocol)?;
    let out = match cfg.mode {
        Mode::FedavgBaseline => run_fedavg_baseline(&mut fed, replay)?,
        _ => run_federation(&mut fed, replay)?,
    };
    Ok(out)
}

fn run_training(cfg: &ExperimentConfig, out_dir: &Path, summary: &mut RunSummary) -> Result<(), ExperimentError> {
    let (graph, load) = load_dataset(cfg)?;
    summary.load = Some(load);
    let mut rounds = Vec::new();
    let mut replay_buf = Vec::new();
    let mut checkpoint = None;
    for r in 0..cfg.eval.splits {
        let mut split_replay = Vec::new();
        let replay: Option<&mut dyn std::io::Write> = if cfg.replay { Some(&mut split_replay) } else { None };
        let out = run_split(cfg, &graph, r, replay)?;
        for line in split_replay.split(|&b| b == b'\n').filter(|l| l.first() == Some(&b'{')) {
            replay_buf.extend_from_slice(format!("{{\"split\":{r},").as_bytes());
            replay_buf.extend_from_slice(&line[1..]);
            replay_buf.push(b'\n');
        }
        for report in &out.reports {
            serde_json::to_writer(&mut rounds, &TaggedRound { split: r, report }).map_err(std::io::Error::from)?;
            rounds.push(b'\n');
        }
        let last = out.reports.last();
        let global = match last {
            Some(rep) => rep.global,
            None => {
                // zero rounds: score the initial model
                let split = NodeSplit::random(
                    graph.num_nodes(),
                    cfg.eval.train_fraction,
                    cfg.eval.val_fraction,
                    cfg.eval.split_seed.wrapping_add(r as u64),
                );
                let probs = crate::nn::forward(
                    &out.final_params,
                    &crate::nn::NormalizedAdjacency::from_graph(&graph),
                    graph.features(),
                    cfg.protocol.activation,
                )
                .map_err(FederationError::from)?
                .probs;
                evaluate(&probs, graph.labels(), graph.sensitive(), &split.test)?
            }
        };
        summary.splits.push(SplitMetrics {
            split: r,
            global,
            local: last.and_then(|rep| rep.local),
            rounds_run: out.reports.len(),
        });
        if r == 0 {
            checkpoint = Some(out.final_params.to_bytes());
        }
    }

    let mut rows: Vec<(String, &str, MetricBundle)> = Vec::new();
    for s in &summary.splits {
        rows.push((s.split.to_string(), "global", s.global));
        if let Some(l) = s.local {
            rows.push((s.split.to_string(), "local", l));
        }
    }
    let globals: Vec<MetricBundle> = summary.splits.iter().map(|s| s.global).collect();
    let locals: Vec<MetricBundle> = summary.splits.iter().filter_map(|s| s.local).collect();
    for (scope, set) in [("global", &globals), ("local", &locals)] {
        if let (Some(m), Some(sd)) = (aggregate(set, Aggregate::Mean), spread(set)) {
            rows.push(("mean".into(), scope, m));
            rows.push(("std".into(), scope, sd));
        }
    }

    let mut emit = |name: &str, bytes: &[u8]| -> Result<(), ExperimentError> {
        let path = out_dir.join(name);
        write_atomic(&path, bytes)?;
        summary.outputs.push(path);
        Ok(())
    };
    emit("rounds.jsonl", &rounds)?;
    if cfg.replay {
        emit("replay.jsonl", &replay_buf)?;
    }
    if let Some(ckpt) = checkpoint {
        emit("model.ckpt", &ckpt)?;
    }
    emit("metrics.csv", &metrics_csv(&rows)?)?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct PredictionRow {
    node_id: usize,
    score: f64,
    label: u8,
    sensitive: u8,
}

/// Reads `node_id,score,label,sensitive` rows.
pub fn read_predictions(path: &Path) -> Result<(Vec<f64>, Vec<bool>, Vec<bool>), ExperimentError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_io)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<PredictionRow>().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| ExperimentError::Predictions {
            row,
            message: e.to_string(),
        })?;
        if rec.label > 1 || rec.sensitive > 1 {
            return Err(ExperimentError::Predictions {
                row,
                message: "label and sensitive must be 0 or 1".into(),
            });
        }
        if !(0.0..=1.0).contains(&rec.score) {
            return Err(ExperimentError::Predictions {
                row,
                message: format!("score {} outside [0, 1]", rec.score),
            });
        }
        rows.push(rec);
    }
    rows.sort_by_key(|r| r.node_id);
    Ok((
        rows.iter().map(|r| r.score).collect(),
        rows.iter().map(|r| r.label == 1).collect(),
        rows.iter().map(|r| r.sensitive == 1).collect(),
    ))
}

/// Executes the configured mode and writes its outputs into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary, ExperimentError> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut summary = RunSummary::default();
    let resolved = out_dir.join("resolved_config.txt");
    write_atomic(&resolved, cfg.render().as_bytes())?;
    summary.outputs.push(resolved);

    match cfg.mode {
        Mode::Federate | Mode::FedavgBaseline => run_training(cfg, out_dir, &mut summary)?,
        Mode::TheorySweep => {
            let sweep = theorem_sweep(&cfg.sbm, &cfg.sweep.d_values, &cfg.sweep.seeds, None)?;
            let mut buf = Vec::new();
            sweep.write_csv(&mut buf)?;
            let path = out_dir.join("sweep.csv");
            write_atomic(&path, &buf)?;
            summary.outputs.push(path);
            summary.sweep = Some(sweep);
        }
        Mode::Audit => {
            let path = cfg.predictions.as_ref().expect("validated");
            let (scores, y, s) = read_predictions(path)?;
            let all: Vec<usize> = (0..scores.len()).collect();
            let bundle = evaluate(&scores, &y, &s, &all)?;
            let out = out_dir.join("metrics.csv");
            write_atomic(&out, &metrics_csv(&[("all".into(), "audit", bundle)])?)?;
            summary.outputs.push(out);
            summary.audit = Some(bundle);
        }
    }
    Ok(summary)
}
