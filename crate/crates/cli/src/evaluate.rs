use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use forestprior::eval::f1_score;
use forestprior::io::{read_edge_list, write_json, write_summary, SummaryRow};
use forestprior::Forest;
use serde_json::json;

use crate::manifest::{OutDir, RunManifest};
use crate::{usage, Outcome};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Estimated edge lists (TSV).
    #[arg(long, required = true, num_args = 1..)]
    pub estimated: Vec<PathBuf>,

    /// True edge lists, paired with --estimated in order.
    #[arg(long, required = true, num_args = 1..)]
    pub truth: Vec<PathBuf>,

    /// Method name written to the summary rows.
    #[arg(long, default_value = "estimate")]
    pub method: String,

    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Fails with a listing of the labels that differ between `a` and `b`.
pub fn check_labels(a: &[String], b: &[String]) -> Result<()> {
    if a == b {
        return Ok(());
    }
    let sa: BTreeSet<&String> = a.iter().collect();
    let sb: BTreeSet<&String> = b.iter().collect();
    let mut lines = Vec::new();
    for l in sa.difference(&sb) {
        lines.push(format!("- {l}"));
    }
    for l in sb.difference(&sa) {
        lines.push(format!("+ {l}"));
    }
    if lines.is_empty() {
        for (pos, (x, y)) in a.iter().zip(b).enumerate() {
            if x != y {
                lines.push(format!("  position {}: {x} vs {y}", pos + 1));
            }
        }
    }
    if a.len() != b.len() {
        lines.push(format!("  {} vs {} vertices", a.len(), b.len()));
    }
    bail!("vertex labels differ:\n{}", lines.join("\n"))
}

/// Reads an edge list whose labels must equal `labels`.
pub fn read_truth(path: &Path, labels: &[String]) -> Result<Forest> {
    let list = read_edge_list(path).with_context(|| format!("reading {}", path.display()))?;
    check_labels(labels, &list.labels).with_context(|| format!("labels of {}", path.display()))?;
    Ok(list.forest()?)
}

pub fn run(args: &Args, argv: Vec<String>) -> Result<Outcome> {
    if args.estimated.len() != args.truth.len() {
        return Err(usage(format!(
            "{} estimated files but {} truth files",
            args.estimated.len(),
            args.truth.len()
        )));
    }
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut manifest_inputs = Vec::new();
    for (r, (est_path, truth_path)) in args.estimated.iter().zip(&args.truth).enumerate() {
        let est =
            read_edge_list(est_path).with_context(|| format!("reading {}", est_path.display()))?;
        let truth = read_truth(truth_path, &est.labels)?;
        let report = f1_score(&est.forest()?, &truth)?;
        let unit = est_path
            .file_name()
            .map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        rows.push(SummaryRow::new(
            &(r + 1).to_string(),
            &args.method,
            &unit,
            &report,
        ));
        reports.push(json!({ "estimated": est_path, "truth": truth_path, "score": report }));
        manifest_inputs.extend([est_path.clone(), truth_path.clone()]);
    }
    rows.push(SummaryRow::mean(&args.method, &rows));

    let mut out = OutDir::create(&args.out)?;
    write_summary(out.file("scores.csv"), &rows)?;
    write_json(out.file("scores.json"), &reports)?;
    for row in &rows {
        println!(
            "{:>5} {:<20} precision {:.4} recall {:.4} f1 {:.4}",
            row.replication, row.unit, row.precision, row.recall, row.f1
        );
    }
    let mut manifest = RunManifest::new("evaluate", argv, json!({ "method": args.method }));
    for p in &manifest_inputs {
        manifest.add_input(p)?;
    }
    manifest.finish(&out)?;
    Ok(Outcome::Done)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn label_diff_names_offenders() {
        assert!(check_labels(&names(&["a", "b"]), &names(&["a", "b"])).is_ok());
        let msg = check_labels(&names(&["a", "b", "c"]), &names(&["a", "x", "c"]))
            .unwrap_err()
            .to_string();
        assert!(msg.contains("- b") && msg.contains("+ x"), "{msg}");
        let msg = check_labels(&names(&["a", "b"]), &names(&["b", "a"]))
            .unwrap_err()
            .to_string();
        assert!(msg.contains("position 1"), "{msg}");
    }
}
