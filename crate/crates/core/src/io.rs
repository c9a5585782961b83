//! File formats: CSV datasets, TSV weight matrices and edge lists, DOT
//! graphs and JSON fit documents. Vertex indices are 1-based on disk.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::density::WeightMatrix;
use crate::error::{Error, Result};
use crate::eval::ScoreReport;
use crate::forest::{Edge, EdgeTrace, Forest};
use crate::solvers::FitResult;

const VERTICES_PREFIX: &str = "# vertices:";

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a CSV whose first row holds column names. In discrete mode every
/// cell must be an integer code.
pub fn read_dataset(path: impl AsRef<Path>, discrete: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let names: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let d = names.len();
    let mut flat = Vec::new();
    let mut n = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != d {
            return Err(parse_error(
                path,
                line,
                format!("expected {d} fields, found {}", record.len()),
            ));
        }
        for (j, field) in record.iter().enumerate() {
            let value = if discrete {
                field.parse::<i64>().map(|v| v as f64).map_err(|_| {
                    parse_error(
                        path,
                        line,
                        format!("column {}: {field:?} is not an integer code", names[j]),
                    )
                })?
            } else {
                let v = field.parse::<f64>().map_err(|_| {
                    parse_error(
                        path,
                        line,
                        format!("column {}: {field:?} is not a number", names[j]),
                    )
                })?;
                if !v.is_finite() {
                    return Err(parse_error(
                        path,
                        line,
                        format!("column {}: non-finite value", names[j]),
                    ));
                }
                v
            };
            flat.push(value);
        }
        n += 1;
    }
    let values =
        Array2::from_shape_vec((n, d), flat).map_err(|e| parse_error(path, 0, e.to_string()))?;
    Dataset::new(values, names).map_err(|e| parse_error(path, 0, e.to_string()))
}

pub fn write_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(data.column_names())?;
    for row in data.values().rows() {
        writer.write_record(row.iter().map(|v| v.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn weight_matrix_tsv(w: &WeightMatrix) -> String {
    let mut out = w.labels().join("\t");
    out.push('\n');
    for row in w.as_array().rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    out
}

pub fn write_weight_matrix(path: impl AsRef<Path>, w: &WeightMatrix) -> Result<()> {
    fs::write(path, weight_matrix_tsv(w))?;
    Ok(())
}

pub fn read_weight_matrix(path: impl AsRef<Path>) -> Result<WeightMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let labels: Vec<String> = lines
        .next()
        .ok_or_else(|| parse_error(path, 1, "missing header"))?
        .split('\t')
        .map(str::to_owned)
        .collect();
    let d = labels.len();
    let mut flat = Vec::with_capacity(d * d);
    for (k, line) in lines.enumerate() {
        let row: Vec<f64> = line
            .split('\t')
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_error(path, k + 2, e.to_string()))?;
        if row.len() != d {
            return Err(parse_error(
                path,
                k + 2,
                format!("expected {d} cells, found {}", row.len()),
            ));
        }
        flat.extend(row);
    }
    if flat.len() != d * d {
        return Err(parse_error(path, 0, format!("expected {d} rows")));
    }
    let m = Array2::from_shape_vec((d, d), flat).expect("length checked");
    WeightMatrix::new(m, labels).map_err(|e| parse_error(path, 0, e.to_string()))
}

/// A weighted edge list over labeled vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList {
    pub labels: Vec<String>,
    pub edges: Vec<(Edge, f64)>,
}

impl EdgeList {
    /// Edges of `forest` in sorted order, weighted by `weight(i, j)`.
    pub fn from_forest(
        forest: &Forest,
        labels: &[String],
        weight: impl Fn(usize, usize) -> f64,
    ) -> Self {
        Self {
            labels: labels.to_vec(),
            edges: forest.edges().map(|e| (e, weight(e.i, e.j))).collect(),
        }
    }

    pub fn from_trace(trace: &EdgeTrace, labels: &[String]) -> Self {
        Self {
            labels: labels.to_vec(),
            edges: trace.steps().iter().map(|s| (s.edge, s.weight)).collect(),
        }
    }

    pub fn d(&self) -> usize {
        self.labels.len()
    }

    pub fn forest(&self) -> Result<Forest> {
        Forest::from_edges(self.d(), self.edges.iter().map(|(e, _)| (e.i, e.j)))
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!(
            "{VERTICES_PREFIX}\t{}\ni\tj\tweight\n",
            self.labels.join("\t")
        );
        for (e, w) in &self.edges {
            let _ = writeln!(out, "{}\t{}\t{w}", e.i + 1, e.j + 1);
        }
        out
    }
}

pub fn write_edge_list(path: impl AsRef<Path>, list: &EdgeList) -> Result<()> {
    fs::write(path, list.to_tsv())?;
    Ok(())
}

/// Reads an edge list. Vertex labels come from the `# vertices:` line; without
/// it vertices are named `X1..Xd` with `d` the largest index present.
pub fn read_edge_list(path: impl AsRef<Path>) -> Result<EdgeList> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut labels = None;
    let mut edges = Vec::new();
    let mut seen_header = false;
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        if let Some(rest) = line.strip_prefix(VERTICES_PREFIX) {
            labels = Some(
                rest.split('\t')
                    .filter(|s| !s.is_empty())
                    .map(|s| s.trim().to_owned())
                    .collect::<Vec<_>>(),
            );
            continue;
        }
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split('\t').map(str::trim).collect();
        if !seen_header && cells.first() == Some(&"i") {
            seen_header = true;
            continue;
        }
        if cells.len() < 2 {
            return Err(parse_error(path, line_no, "expected at least two columns"));
        }
        let index = |s: &str| -> Result<usize> {
            match s.parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v - 1),
                _ => Err(parse_error(
                    path,
                    line_no,
                    format!("{s:?} is not a 1-based vertex index"),
                )),
            }
        };
        let (i, j) = (index(cells[0])?, index(cells[1])?);
        if i == j {
            return Err(parse_error(path, line_no, "self-loop"));
        }
        let weight = match cells.get(2) {
            Some(s) => s
                .parse::<f64>()
                .map_err(|_| parse_error(path, line_no, format!("{s:?} is not a weight")))?,
            None => 1.0,
        };
        edges.push((Edge::new(i, j), weight));
    }
    let labels = match labels {
        Some(l) => l,
        None => crate::data::default_names(edges.iter().map(|(e, _)| e.j + 1).max().unwrap_or(0)),
    };
    if let Some((e, _)) = edges.iter().find(|(e, _)| e.j >= labels.len()) {
        return Err(parse_error(
            path,
            0,
            format!("edge {e} exceeds the {} listed vertices", labels.len()),
        ));
    }
    Ok(EdgeList { labels, edges })
}

/// Graphviz rendering. `colors` assigns a fill color per vertex; `highlight`
/// edges are drawn bold.
pub fn to_dot(
    forest: &Forest,
    labels: &[String],
    colors: Option<&[String]>,
    highlight: &BTreeSet<Edge>,
) -> String {
    let mut out =
        String::from("graph forest {\n  node [shape=circle, style=filled, fillcolor=white];\n");
    for (v, label) in labels.iter().enumerate() {
        let fill = colors
            .and_then(|c| c.get(v))
            .map(|c| format!(", fillcolor=\"{c}\""))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "  {} [label=\"{}\"{fill}];",
            v + 1,
            label.replace('"', "\\\"")
        );
    }
    for e in forest.edges() {
        let style = if highlight.contains(&e) {
            " [penwidth=3]"
        } else {
            ""
        };
        let _ = writeln!(out, "  {} -- {}{style};", e.i + 1, e.j + 1);
    }
    out.push_str("}\n");
    out
}

/// One edge as written to result documents (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

impl EdgeRecord {
    fn new(e: Edge, weight: f64) -> Self {
        Self {
            i: e.i + 1,
            j: e.j + 1,
            weight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaScore {
    pub lambda: f64,
    pub score: f64,
}

/// The result document written for every fitted unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unit: Option<usize>,
    pub labels: Vec<String>,
    pub lambda: f64,
    /// Edges weighted by the unpenalized training weights.
    pub spanning_tree: Vec<EdgeRecord>,
    pub pruned: Vec<EdgeRecord>,
    /// Kruskal insertion order of the final iterate, with adjusted weights.
    pub trace: Vec<EdgeRecord>,
    pub objective_per_iter: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub holdout_loglik: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambda_scores: Vec<LambdaScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<ScoreReport>,
    pub config: serde_json::Value,
}

impl FitDocument {
    pub fn new(
        method: &str,
        fit: &FitResult,
        w: &WeightMatrix,
        holdout_loglik: f64,
        config: serde_json::Value,
    ) -> Self {
        let weighted = |f: &Forest| {
            f.edges()
                .map(|e| EdgeRecord::new(e, w.get(e.i, e.j)))
                .collect()
        };
        Self {
            method: method.to_owned(),
            unit: None,
            labels: w.labels().to_vec(),
            lambda: fit.lambda,
            spanning_tree: weighted(&fit.tree),
            pruned: weighted(&fit.pruned),
            trace: fit
                .trace
                .steps()
                .iter()
                .map(|s| EdgeRecord::new(s.edge, s.weight))
                .collect(),
            objective_per_iter: fit.objective_per_iter.clone(),
            iterations: fit.iterations,
            converged: fit.converged,
            holdout_loglik,
            lambda_scores: Vec::new(),
            score: None,
            config,
        }
    }

    pub fn pruned_forest(&self) -> Result<Forest> {
        Forest::from_edges(
            self.labels.len(),
            self.pruned.iter().map(|e| (e.i - 1, e.j - 1)),
        )
    }
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_error(path, e.line(), e.to_string()))
}

/// One row of a batch summary: a replication × method × unit score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub replication: String,
    pub method: String,
    pub unit: String,
    pub true_positive: f64,
    pub false_positive: f64,
    pub false_negative: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl SummaryRow {
    pub fn new(replication: &str, method: &str, unit: &str, r: &ScoreReport) -> Self {
        Self {
            replication: replication.to_owned(),
            method: method.to_owned(),
            unit: unit.to_owned(),
            true_positive: r.true_positive as f64,
            false_positive: r.false_positive as f64,
            false_negative: r.false_negative as f64,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
        }
    }

    /// Column-wise mean of `rows`, labeled `mean`.
    pub fn mean(method: &str, rows: &[SummaryRow]) -> Self {
        let n = rows.len().max(1) as f64;
        let avg = |f: fn(&SummaryRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        Self {
            replication: "mean".into(),
            method: method.to_owned(),
            unit: "all".into(),
            true_positive: avg(|r| r.true_positive),
            false_positive: avg(|r| r.false_positive),
            false_negative: avg(|r| r.false_negative),
            precision: avg(|r| r.precision),
            recall: avg(|r| r.recall),
            f1: avg(|r| r.f1),
        }
    }
}

pub fn write_summary(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Vec<SummaryRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader
        .deserialize()
        .collect::<std::result::Result<_, _>>()?)
}

/// `dir/name`, with `prefix` prepended to the file name.
pub fn prefixed(dir: &Path, prefix: &str, name: &str) -> PathBuf {
    dir.join(format!("{prefix}{name}"))
}
