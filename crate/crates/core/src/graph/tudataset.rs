use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use super::{Graph, LabeledGraph};
use crate::error::{Error, Result};

fn read_required(root: &Path, name: &str, suffix: &str) -> Result<(PathBuf, String)> {
    let path = root.join(format!("{name}_{suffix}.txt"));
    match fs::read_to_string(&path) {
        Ok(s) => Ok((path, s)),
        Err(e) => Err(Error::Format {
            msg: format!("cannot read required file: {e}"),
            path,
        }),
    }
}

fn read_optional(root: &Path, name: &str, suffix: &str) -> Result<Option<(PathBuf, String)>> {
    let path = root.join(format!("{name}_{suffix}.txt"));
    if !path.exists() {
        return Ok(None);
    }
    let s = fs::read_to_string(&path)?;
    Ok(Some((path, s)))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_int(path: &Path, line: usize, tok: &str) -> Result<i64> {
    let tok = tok.trim();
    tok.parse::<i64>()
        .or_else(|_| tok.parse::<f64>().map(|f| f as i64))
        .map_err(|_| Error::Format {
            path: path.to_path_buf(),
            msg: format!("line {line}: expected an integer, got {tok:?}"),
        })
}

fn parse_float(path: &Path, line: usize, tok: &str) -> Result<f64> {
    tok.trim().parse::<f64>().map_err(|_| Error::Format {
        path: path.to_path_buf(),
        msg: format!("line {line}: expected a number, got {tok:?}"),
    })
}

/// Loads a dataset stored in the TUDataset text layout from `root/{name}_*.txt`.
///
/// Graphs come back in ascending graph-id order with labels remapped to
/// `0..k` in ascending order of the raw label values. Edges listed in both
/// directions collapse to one undirected edge; self-loops are dropped.
pub fn load_tudataset(root: impl AsRef<Path>, name: &str) -> Result<Vec<LabeledGraph>> {
    let root = root.as_ref();
    let (a_path, a_text) = read_required(root, name, "A")?;
    let (ind_path, ind_text) = read_required(root, name, "graph_indicator")?;
    let (lab_path, lab_text) = read_required(root, name, "graph_labels")?;
    let node_labels = read_optional(root, name, "node_labels")?;
    let node_attrs = read_optional(root, name, "node_attributes")?;

    // node -> graph id, and each graph's nodes in file order
    let mut node_graph: Vec<i64> = Vec::new();
    for (ln, l) in data_lines(&ind_text) {
        node_graph.push(parse_int(&ind_path, ln, l)?);
    }
    let total_nodes = node_graph.len();
    let mut members: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    let mut local = vec![0usize; total_nodes];
    for (v, &g) in node_graph.iter().enumerate() {
        let m = members.entry(g).or_default();
        local[v] = m.len();
        m.push(v);
    }

    let mut raw_labels: Vec<i64> = Vec::new();
    for (ln, l) in data_lines(&lab_text) {
        raw_labels.push(parse_int(&lab_path, ln, l)?);
    }
    for &gid in members.keys() {
        if gid < 1 || gid as usize > raw_labels.len() {
            return Err(Error::Format {
                path: lab_path.clone(),
                msg: format!("no label line for graph id {gid}"),
            });
        }
    }
    let classes: BTreeSet<i64> = members.keys().map(|&g| raw_labels[g as usize - 1]).collect();
    let class_index: BTreeMap<i64, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();

    let mut edges: BTreeMap<i64, Vec<(usize, usize)>> = BTreeMap::new();
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    for (ln, l) in data_lines(&a_text) {
        let mut parts = l.split(',');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Format {
                path: a_path.clone(),
                msg: format!("line {ln}: expected `u, v`"),
            });
        };
        let u = parse_int(&a_path, ln, a)?;
        let v = parse_int(&a_path, ln, b)?;
        let in_range = |x: i64| x >= 1 && (x as usize) <= total_nodes;
        if !in_range(u) || !in_range(v) {
            return Err(Error::Integrity {
                path: a_path.clone(),
                line: ln,
                msg: format!("edge ({u},{v}) references a node outside 1..={total_nodes}"),
            });
        }
        let (u, v) = (u as usize - 1, v as usize - 1);
        if node_graph[u] != node_graph[v] {
            return Err(Error::Integrity {
                path: a_path.clone(),
                line: ln,
                msg: format!(
                    "edge ({},{}) joins graphs {} and {}",
                    u + 1,
                    v + 1,
                    node_graph[u],
                    node_graph[v]
                ),
            });
        }
        if u == v {
            continue;
        }
        let key = (u.min(v), u.max(v));
        if seen.insert(key) {
            edges
                .entry(node_graph[u])
                .or_default()
                .push((local[key.0], local[key.1]));
        }
    }

    // node features: attributes, else one-hot node labels, else constant
    let (feature_dim, features): (usize, Vec<Vec<f64>>) = if let Some((path, text)) = &node_attrs {
        let rows = data_lines(text)
            .map(|(ln, l)| {
                l.split(',')
                    .map(|t| parse_float(path, ln, t))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        check_node_rows(path, rows.len(), total_nodes)?;
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::Format {
                path: path.clone(),
                msg: format!("node {} has {} attributes, expected {dim}", i + 1, rows[i].len()),
            });
        }
        (dim, rows)
    } else if let Some((path, text)) = &node_labels {
        let raw = data_lines(text)
            .map(|(ln, l)| parse_int(path, ln, l))
            .collect::<Result<Vec<_>>>()?;
        check_node_rows(path, raw.len(), total_nodes)?;
        let values: BTreeSet<i64> = raw.iter().copied().collect();
        let index: BTreeMap<i64, usize> = values.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let dim = values.len();
        let rows = raw
            .iter()
            .map(|l| {
                let mut r = vec![0.0; dim];
                r[index[l]] = 1.0;
                r
            })
            .collect();
        (dim, rows)
    } else {
        (1, vec![vec![1.0]; total_nodes])
    };

    members
        .iter()
        .map(|(gid, nodes)| {
            let feats: Vec<f64> = nodes.iter().flat_map(|&v| features[v].iter().copied()).collect();
            let graph = Graph::new(
                nodes.len(),
                edges.remove(gid).unwrap_or_default(),
                None,
                feature_dim,
                feats,
            )?;
            Ok(LabeledGraph {
                graph,
                label: class_index[&raw_labels[*gid as usize - 1]],
            })
        })
        .collect()
}

fn check_node_rows(path: &Path, rows: usize, nodes: usize) -> Result<()> {
    if rows != nodes {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("{rows} node rows, graph indicator lists {nodes} nodes"),
        });
    }
    Ok(())
}
