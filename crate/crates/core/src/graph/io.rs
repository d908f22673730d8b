//! CSV node/edge loaders.
//!
//! Node file: `node_id,sensitive,label,f1,...,fd` with contiguous ids from 0.
//! Edge file: `src,dst`, undirected. Reverse and duplicate rows collapse to
//! one edge; self-loop rows are dropped and counted.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Graph, GraphError};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeLoadReport {
    pub rows: usize,
    pub duplicates_removed: usize,
    pub self_loops_rejected: usize,
}

fn line_of(rec: &csv::StringRecord, fallback: usize) -> usize {
    rec.position().map_or(fallback, |p| p.line() as usize)
}

fn csv_error(e: csv::Error) -> GraphError {
    let row = e.position().map_or(0, |p| p.line() as usize);
    GraphError::Format {
        row,
        message: e.to_string(),
    }
}

fn parse_bit(field: &str, row: usize, name: &'static str) -> Result<bool, GraphError> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(GraphError::BinaryViolation { row, field: name }),
    }
}

/// Parses a node table into `(features, sensitive, labels)`, ordered by id.
pub fn parse_nodes_csv(reader: impl Read) -> Result<(Matrix, Vec<bool>, Vec<bool>), GraphError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.len() < 4
        || &header[0] != "node_id"
        || &header[1] != "sensitive"
        || &header[2] != "label"
    {
        return Err(GraphError::Format {
            row: 1,
            message: "expected header `node_id,sensitive,label,f1,...`".into(),
        });
    }
    let d = header.len() - 3;
    let mut rows: Vec<(usize, bool, bool, Vec<f64>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let row = line_of(&rec, i + 2);
        let id: usize = rec[0].parse().map_err(|_| GraphError::Format {
            row,
            message: format!("bad node id `{}`", &rec[0]),
        })?;
        let s = parse_bit(&rec[1], row, "sensitive")?;
        let y = parse_bit(&rec[2], row, "label")?;
        let feats = (3..3 + d)
            .map(|c| {
                rec[c].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    GraphError::Format {
                        row,
                        message: format!("bad feature value `{}`", &rec[c]),
                    }
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((id, s, y, feats));
    }
    rows.sort_by_key(|r| r.0);
    for (expected, r) in rows.iter().enumerate() {
        if r.0 != expected {
            return Err(GraphError::Format {
                row: 0,
                message: format!("node ids must be contiguous from 0; missing or repeated id near {expected}"),
            });
        }
    }
    let n = rows.len();
    let mut features = Matrix::zeros(n, d);
    let mut sensitive = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (i, (_, s, y, f)) in rows.into_iter().enumerate() {
        features.row_mut(i).copy_from_slice(&f);
        sensitive.push(s);
        labels.push(y);
    }
    Ok((features, sensitive, labels))
}

/// Parses an edge table over `num_nodes` nodes.
pub fn parse_edges_csv(
    reader: impl Read,
    num_nodes: usize,
) -> Result<(Vec<(usize, usize)>, EdgeLoadReport), GraphError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.len() != 2 || &header[0] != "src" || &header[1] != "dst" {
        return Err(GraphError::Format {
            row: 1,
            message: "expected header `src,dst`".into(),
        });
    }
    let mut report = EdgeLoadReport::default();
    let mut set = BTreeSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let row = line_of(&rec, i + 2);
        let parse = |f: &str| {
            f.parse::<usize>()
                .ok()
                .filter(|&v| v < num_nodes)
                .ok_or_else(|| GraphError::Format {
                    row,
                    message: format!("bad node reference `{f}`"),
                })
        };
        let (u, v) = (parse(&rec[0])?, parse(&rec[1])?);
        report.rows += 1;
        if u == v {
            report.self_loops_rejected += 1;
            continue;
        }
        if !set.insert((u.min(v), u.max(v))) {
            report.duplicates_removed += 1;
        }
    }
    Ok((set.into_iter().collect(), report))
}

/// Loads a graph from a node file and an edge file.
pub fn load_csv(nodes: &Path, edges: &Path) -> Result<(Graph, EdgeLoadReport), GraphError> {
    let (features, sensitive, labels) = parse_nodes_csv(File::open(nodes)?)?;
    let (edge_list, report) = parse_edges_csv(File::open(edges)?, sensitive.len())?;
    Ok((Graph::new(features, sensitive, labels, edge_list)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    const NODES: &str = "node_id,sensitive,label,f1,f2\n\
                         0,0,1,0.5,1.0\n\
                         1,1,0,-1.0,2.0\n\
                         3,1,1,0.0,0.0\n\
                         2,0,0,3.0,-2.5\n";

    #[test]
    fn toy_graph_round_trip() {
        let (f, s, y) = parse_nodes_csv(NODES.as_bytes()).unwrap();
        assert_eq!(f.shape(), (4, 2));
        assert_eq!(f.row(2), &[3.0, -2.5]);
        assert_eq!(s, vec![false, true, false, true]);
        assert_eq!(y, vec![true, false, false, true]);
        let edges = "src,dst\n0,1\n1,2\n2,3\n";
        let (e, rep) = parse_edges_csv(edges.as_bytes(), 4).unwrap();
        assert_eq!(e, vec![(0, 1), (1, 2), (2, 3)]);
        assert_eq!(rep.duplicates_removed, 0);
        let g = Graph::new(f, s, y, e).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn duplicates_and_self_loops_are_counted() {
        let edges = "src,dst\n0,1\n1,0\n0,1\n2,2\n1,3\n";
        let (e, rep) = parse_edges_csv(edges.as_bytes(), 4).unwrap();
        assert_eq!(e, vec![(0, 1), (1, 3)]);
        assert_eq!(
            rep,
            EdgeLoadReport {
                rows: 5,
                duplicates_removed: 2,
                self_loops_rejected: 1
            }
        );
    }

    #[test]
    fn non_binary_attribute_names_row() {
        let bad = "node_id,sensitive,label,f1\n0,0,1,0.5\n1,2,0,1.0\n";
        match parse_nodes_csv(bad.as_bytes()) {
            Err(GraphError::BinaryViolation { row: 3, field: "sensitive" }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let bad = "node_id,sensitive,label,f1\n0,0,x,0.5\n";
        assert!(matches!(
            parse_nodes_csv(bad.as_bytes()),
            Err(GraphError::BinaryViolation { row: 2, field: "label" })
        ));
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let bad = "node_id,sensitive,label,f1\n0,0,1,abc\n";
        assert!(matches!(parse_nodes_csv(bad.as_bytes()), Err(GraphError::Format { row: 2, .. })));
        let bad = "src,dst\n0,1\n0,9\n";
        assert!(matches!(parse_edges_csv(bad.as_bytes(), 4), Err(GraphError::Format { row: 3, .. })));
        let gap = "node_id,sensitive,label,f1\n0,0,1,0\n2,0,1,0\n";
        assert!(parse_nodes_csv(gap.as_bytes()).is_err());
    }
}
