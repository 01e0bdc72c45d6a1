use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// What the loader dropped while building a simple graph.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub self_loops: usize,
    pub duplicates: usize,
}

#[derive(Clone, Debug, Default)]
pub struct EdgeListOptions {
    /// Fix the node count; ids must then be integers in `0..n`.
    pub num_nodes: Option<usize>,
}

/// Parses an edge list. Tokens that are all non-negative integers are used as
/// node ids directly; otherwise labels are remapped to `0..n` in order of first
/// appearance and kept as node names.
pub fn read_edge_list(text: &str, source: &Path, opts: &EdgeListOptions) -> Result<(Graph, LoadReport)> {
    let mut pairs: Vec<(usize, &str, &str)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        match (toks.next(), toks.next()) {
            (Some(a), Some(b)) => pairs.push((lineno + 1, a, b)),
            _ => {
                return Err(Error::Parse {
                    path: source.to_path_buf(),
                    line: lineno + 1,
                    msg: format!("expected two node ids, got {line:?}"),
                })
            }
        }
    }
    let numeric = pairs
        .iter()
        .all(|(_, a, b)| a.parse::<usize>().is_ok() && b.parse::<usize>().is_ok());
    if numeric || opts.num_nodes.is_some() {
        let mut edges = Vec::with_capacity(pairs.len());
        let mut max_id = 0usize;
        for &(line, a, b) in &pairs {
            let parse = |t: &str| {
                t.parse::<usize>().map_err(|_| Error::Parse {
                    path: source.to_path_buf(),
                    line,
                    msg: format!("node id {t:?} is not a non-negative integer"),
                })
            };
            let (u, v) = (parse(a)?, parse(b)?);
            if let Some(n) = opts.num_nodes {
                if u >= n || v >= n {
                    return Err(Error::Parse {
                        path: source.to_path_buf(),
                        line,
                        msg: format!("node id out of range for n = {n}"),
                    });
                }
            }
            max_id = max_id.max(u).max(v);
            edges.push((u, v));
        }
        let n = opts.num_nodes.unwrap_or(if pairs.is_empty() { 0 } else { max_id + 1 });
        return Graph::from_edges_report(n, &edges);
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut names: Vec<String> = Vec::new();
    let mut edges = Vec::with_capacity(pairs.len());
    for &(_, a, b) in &pairs {
        let mut ends = [0usize; 2];
        for (slot, t) in ends.iter_mut().zip([a, b]) {
            *slot = *index.entry(t).or_insert_with(|| {
                names.push(t.to_string());
                names.len() - 1
            });
        }
        edges.push((ends[0], ends[1]));
    }
    let (g, report) = Graph::from_edges_report(names.len(), &edges)?;
    Ok((g.with_names(names)?, report))
}

pub fn load_edge_list(path: &Path, opts: &EdgeListOptions) -> Result<(Graph, LoadReport)> {
    let text = fs::read_to_string(path)?;
    let (g, report) = read_edge_list(&text, path, opts)?;
    if report.self_loops + report.duplicates > 0 {
        log::warn!(
            "{}: dropped {} self-loops and {} duplicate edges",
            path.display(),
            report.self_loops,
            report.duplicates
        );
    }
    Ok((g, report))
}

/// Feature file: one whitespace-separated row of reals per node.
pub fn load_features(path: &Path, n: usize) -> Result<Tensor> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: e.to_string(),
            })?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    msg: format!("expected {} values, got {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.len() != n {
        return Err(Error::invalid(format!(
            "{}: {} feature rows for {} nodes",
            path.display(),
            rows.len(),
            n
        )));
    }
    Tensor::from_rows(&rows)
}

/// Loads the LINQS cora layout: `cora.content` (`id f_1 … f_d label`) fixes
/// node order and features, `cora.cites` holds the citation pairs.
pub fn load_cora(dir: &Path) -> Result<(Graph, LoadReport)> {
    let content_path = dir.join("cora.content");
    let content = fs::read_to_string(&content_path)?;
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut names = Vec::new();
    let mut rows = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() < 3 {
            return Err(Error::Parse {
                path: content_path.clone(),
                line: lineno + 1,
                msg: "expected id, features and label".into(),
            });
        }
        let feats = toks[1..toks.len() - 1]
            .iter()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                path: content_path.clone(),
                line: lineno + 1,
                msg: e.to_string(),
            })?;
        index.insert(toks[0].to_string(), names.len());
        names.push(toks[0].to_string());
        rows.push(feats);
    }
    let cites_path = dir.join("cora.cites");
    let cites = fs::read_to_string(&cites_path)?;
    let mut edges = Vec::new();
    for (lineno, line) in cites.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let lookup = |t: &str| {
            index.get(t).copied().ok_or_else(|| Error::Parse {
                path: cites_path.clone(),
                line: lineno + 1,
                msg: format!("unknown node id {t:?}"),
            })
        };
        if toks.len() != 2 {
            return Err(Error::Parse {
                path: cites_path.clone(),
                line: lineno + 1,
                msg: "expected two node ids".into(),
            });
        }
        edges.push((lookup(toks[0])?, lookup(toks[1])?));
    }
    let (g, report) = Graph::from_edges_report(names.len(), &edges)?;
    let g = g.with_names(names)?.with_features(Tensor::from_rows(&rows)?)?;
    Ok((g, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<(Graph, LoadReport)> {
        read_edge_list(text, Path::new("mem"), &EdgeListOptions::default())
    }

    #[test]
    fn simple_path() {
        let (g, _) = parse("0 1\n1 2").unwrap();
        assert_eq!((g.n(), g.m()), (3, 2));
    }

    #[test]
    fn duplicates_and_loops_dropped() {
        let (g, rep) = parse("0 1\n1 0\n0 0").unwrap();
        assert_eq!((g.n(), g.m()), (2, 1));
        assert_eq!(rep, LoadReport { self_loops: 1, duplicates: 1 });
    }

    #[test]
    fn comments_and_blank_lines() {
        let (g, _) = parse("# header\n0 1 # trailing\n\n2 1\n").unwrap();
        assert_eq!(g.m(), 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse("0 1\n2\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_with_fixed_n() {
        let opts = EdgeListOptions { num_nodes: Some(3) };
        let err = read_edge_list("0 1\n1 3\n", Path::new("mem"), &opts).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn string_labels_are_remapped() {
        let (g, _) = parse("alice bob\nbob carol\n").unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.names().unwrap(), &["alice", "bob", "carol"]);
        assert!(g.has_edge(1, 2));
    }

    #[test]
    fn features_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.txt");
        std::fs::write(&p, "1 0.5\n-2 3\n0 0\n").unwrap();
        let f = load_features(&p, 3).unwrap();
        assert_eq!(f.shape(), (3, 2));
        assert_eq!(f.get(1, 0), -2.0);
        assert!(load_features(&p, 4).is_err());
    }

    #[test]
    fn cora_layout() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("cora.content"), "31 1 0 Theory\n7 0 1 AI\n99 1 1 AI\n").unwrap();
        std::fs::write(dir.path().join("cora.cites"), "31 7\n7 99\n99 99\n").unwrap();
        let (g, rep) = load_cora(dir.path()).unwrap();
        assert_eq!((g.n(), g.m()), (3, 2));
        assert_eq!(rep.self_loops, 1);
        assert_eq!(g.features().unwrap().shape(), (3, 2));
    }
}
