//! Plain-text graph, label and matrix files.
//!
//! Edge list: a header line `n m`, then `m` lines `u v` with 0-based
//! indices and `u < v`. Labels: one integer per line, `n` lines.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{Graph, LabelVector, Matrix};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

pub fn format_edge_list(g: &Graph) -> String {
    let mut out = String::with_capacity(16 * (g.edge_count() + 1));
    writeln!(out, "{} {}", g.n(), g.edge_count()).unwrap();
    for &(u, v) in g.edges() {
        writeln!(out, "{u} {v}").unwrap();
    }
    out
}

pub fn parse_edge_list(text: &str, path: &Path) -> Result<Graph> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or_else(|| parse_err(path, 1, "missing header `n m`"))?;
    let nums: Vec<&str> = header.split_whitespace().collect();
    let [n, m] = nums.as_slice() else {
        return Err(parse_err(path, hline + 1, "header must be `n m`"));
    };
    let n: usize = n.parse().map_err(|_| parse_err(path, hline + 1, "bad node count"))?;
    let m: usize = m.parse().map_err(|_| parse_err(path, hline + 1, "bad edge count"))?;
    let mut edges = Vec::with_capacity(m);
    let mut last: Option<(usize, usize)> = None;
    for (i, line) in lines {
        let lineno = i + 1;
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [u, v] = parts.as_slice() else {
            return Err(parse_err(path, lineno, "expected `u v`"));
        };
        let u: usize = u.parse().map_err(|_| parse_err(path, lineno, format!("bad node index `{u}`")))?;
        let v: usize = v.parse().map_err(|_| parse_err(path, lineno, format!("bad node index `{v}`")))?;
        if u >= v {
            return Err(parse_err(path, lineno, "edges must satisfy u < v"));
        }
        if v >= n {
            return Err(parse_err(path, lineno, format!("node {v} out of range for n = {n}")));
        }
        if last == Some((u, v)) {
            return Err(parse_err(path, lineno, "duplicate edge"));
        }
        last = Some((u, v));
        edges.push((u, v));
    }
    if edges.len() != m {
        return Err(parse_err(path, hline + 1, format!("header promises {m} edges, found {}", edges.len())));
    }
    Graph::from_edges(n, edges).map_err(|e| parse_err(path, 0, e.to_string()))
}

pub fn write_graph(path: &Path, g: &Graph) -> Result<()> {
    fs::write(path, format_edge_list(g)).map_err(io_err(path))
}

pub fn read_graph(path: &Path) -> Result<Graph> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_edge_list(&text, path)
}

pub fn format_labels(labels: &LabelVector) -> String {
    let mut out = String::with_capacity(3 * labels.len());
    for l in labels.iter() {
        writeln!(out, "{l}").unwrap();
    }
    out
}

pub fn parse_labels(text: &str, path: &Path) -> Result<LabelVector> {
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        labels.push(t.parse().map_err(|_| parse_err(path, i + 1, format!("bad label `{t}`")))?);
    }
    Ok(LabelVector(labels))
}

pub fn write_labels(path: &Path, labels: &LabelVector) -> Result<()> {
    fs::write(path, format_labels(labels)).map_err(io_err(path))
}

pub fn read_labels(path: &Path) -> Result<LabelVector> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_labels(&text, path)
}

/// One row per line, whitespace-separated.
pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = String::new();
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(io_err(path))
}
