use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use forestprior::density::{holdout_terms, weight_matrix, Bandwidth, Kernel};
use forestprior::eval::{
    common_edges, entropy_offset, f1_score, holdout_loglik, tune_joint, tune_scalefree, TuneMode,
};
use forestprior::io::{
    read_dataset, to_dot, write_edge_list, write_json, write_weight_matrix, EdgeList, FitDocument,
    LambdaScore,
};
use forestprior::solvers::{default_lambda_grid, fit_fde, fit_joint, fit_scalefree, Convergence};
use forestprior::{
    Dataset, FitResult, Forest, HoldoutTerms, KernelConfig, PriorConfig, WeightMatrix, WeightMode,
};
use serde_json::json;

use crate::evaluate::{check_labels, read_truth};
use crate::manifest::{OutDir, RunManifest};
use crate::simulate::unit_prefix;
use crate::{usage, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Plain forest density estimation.
    Fde,
    /// Scale-free penalized estimation.
    Sf,
    /// Joint estimation over several units.
    Joint,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Fde => "fde",
            Method::Sf => "sf",
            Method::Joint => "joint",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Gaussian,
    Epanechnikov,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConvergenceArg {
    /// Stop when the spanning tree(s) repeat.
    EdgeSet,
    /// Stop when the objective gain falls below --tolerance.
    Objective,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Training CSV files, one per unit.
    #[arg(required = true)]
    pub train: Vec<PathBuf>,

    /// Held-out CSV files, in the same order as the training files.
    #[arg(long, required = true, num_args = 1..)]
    pub holdout: Vec<PathBuf>,

    #[arg(long, value_enum, default_value = "fde")]
    pub method: Method,

    /// Fixed penalty strength; disables tuning.
    #[arg(long, conflicts_with = "lambda_grid")]
    pub lambda: Option<f64>,

    /// Tuning grid: `auto` or comma-separated values. Used by sf and joint
    /// when --lambda is absent.
    #[arg(long)]
    pub lambda_grid: Option<String>,

    /// Beta prior parameters of the joint method.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,

    #[arg(long, default_value_t = 50)]
    pub max_iters: usize,

    #[arg(long, value_enum, default_value = "edge-set")]
    pub convergence: ConvergenceArg,

    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,

    #[arg(long, value_enum, default_value = "gaussian")]
    pub kernel: KernelArg,

    /// Univariate bandwidth (default: 1.06·σ·n^(-1/5)).
    #[arg(long)]
    pub h1: Option<f64>,

    /// Bivariate per-axis bandwidth (default: σ·n^(-1/6)).
    #[arg(long)]
    pub h2: Option<f64>,

    /// Quadrature points per axis.
    #[arg(long, default_value_t = 100)]
    pub grid_points: usize,

    /// Treat values as integer category codes.
    #[arg(long)]
    pub discrete: bool,

    /// True edge lists; switches tuning to oracle F1 and adds scores.
    #[arg(long, num_args = 1..)]
    pub truth: Vec<PathBuf>,

    /// Add univariate entropy terms to the reported held-out log-likelihood.
    #[arg(long)]
    pub absolute_loglik: bool,

    /// Also write the training weight matrices.
    #[arg(long)]
    pub write_weights: bool,

    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

struct Unit {
    train: Dataset,
    weights: WeightMatrix,
    terms: HoldoutTerms,
    truth: Option<Forest>,
}

fn kernel_config(args: &Args) -> Result<KernelConfig> {
    let cfg = KernelConfig {
        kernel: match args.kernel {
            KernelArg::Gaussian => Kernel::Gaussian,
            KernelArg::Epanechnikov => Kernel::Epanechnikov,
        },
        h1: args.h1.map_or(Bandwidth::Rule, Bandwidth::Fixed),
        h2: args.h2.map_or(Bandwidth::Rule, Bandwidth::Fixed),
        grid_points: args.grid_points,
        ..KernelConfig::default()
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn prior_config(args: &Args) -> Result<PriorConfig> {
    let cfg = PriorConfig {
        lambda: args.lambda.unwrap_or(0.0),
        alpha: args.alpha,
        beta: args.beta,
        max_iters: args.max_iters,
        convergence: match args.convergence {
            ConvergenceArg::EdgeSet => Convergence::EdgeSetStable,
            ConvergenceArg::Objective => Convergence::ObjectiveDelta {
                tolerance: args.tolerance,
            },
        },
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn lambda_grid(spec: &str, units: &[Unit]) -> Result<Vec<f64>> {
    if spec == "auto" {
        let mean = units
            .iter()
            .map(|u| u.weights.mean_off_diagonal())
            .sum::<f64>()
            / units.len() as f64;
        return Ok(default_lambda_grid(mean));
    }
    let grid = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| {
            usage(format!(
                "--lambda-grid: {spec:?} is not `auto` or a list of numbers"
            ))
        })?;
    if grid.is_empty() || grid.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(usage("--lambda-grid values must be finite and nonnegative"));
    }
    Ok(grid)
}

fn load_unit(
    train_path: &Path,
    holdout_path: &Path,
    truth_path: Option<&Path>,
    cfg: &KernelConfig,
    mode: WeightMode,
    discrete: bool,
) -> Result<Unit> {
    let train = read_dataset(train_path, discrete)
        .with_context(|| format!("reading {}", train_path.display()))?;
    let holdout = read_dataset(holdout_path, discrete)
        .with_context(|| format!("reading {}", holdout_path.display()))?;
    check_labels(train.column_names(), holdout.column_names())
        .with_context(|| format!("{} vs {}", train_path.display(), holdout_path.display()))?;
    let weights = weight_matrix(&train, cfg, mode)?;
    let terms = holdout_terms(&train, &holdout, cfg, mode)?;
    let truth = match truth_path {
        Some(p) => Some(read_truth(p, train.column_names())?),
        None => None,
    };
    Ok(Unit {
        train,
        weights,
        terms,
        truth,
    })
}

pub fn run(args: &Args, argv: Vec<String>) -> Result<Outcome> {
    let k = args.train.len();
    if args.holdout.len() != k {
        return Err(usage(format!(
            "{k} training files but {} held-out files",
            args.holdout.len()
        )));
    }
    if !args.truth.is_empty() && args.truth.len() != k {
        return Err(usage(format!(
            "{k} training files but {} truth files",
            args.truth.len()
        )));
    }
    match args.method {
        Method::Joint if k < 2 => {
            return Err(usage("--method joint needs at least two training files"))
        }
        Method::Fde | Method::Sf if k != 1 => {
            return Err(usage(format!(
                "--method {} takes one training file",
                args.method.name()
            )))
        }
        _ => {}
    }
    if args.method == Method::Fde && (args.lambda.is_some() || args.lambda_grid.is_some()) {
        return Err(usage("--method fde has no lambda"));
    }
    let kernel = kernel_config(args)?;
    let prior = prior_config(args)?;
    let mode = if args.discrete {
        WeightMode::Discrete
    } else {
        WeightMode::Kde
    };

    let mut manifest_inputs = Vec::new();
    let mut units = Vec::with_capacity(k);
    for u in 0..k {
        let truth = args.truth.get(u).map(PathBuf::as_path);
        units.push(load_unit(
            &args.train[u],
            &args.holdout[u],
            truth,
            &kernel,
            mode,
            args.discrete,
        )?);
        manifest_inputs.extend([args.train[u].clone(), args.holdout[u].clone()]);
        manifest_inputs.extend(truth.map(Path::to_path_buf));
    }
    let truths: Option<Vec<Forest>> = units.iter().map(|u| u.truth.clone()).collect();
    let tune_mode = match &truths {
        Some(t) => TuneMode::Oracle(t),
        None => TuneMode::HeldOut,
    };
    let grid = match (args.method, args.lambda, &args.lambda_grid) {
        (Method::Fde, ..) | (_, Some(_), _) => None,
        (_, None, spec) => Some(lambda_grid(spec.as_deref().unwrap_or("auto"), &units)?),
    };

    let weights: Vec<WeightMatrix> = units.iter().map(|u| u.weights.clone()).collect();
    let terms: Vec<HoldoutTerms> = units.iter().map(|u| u.terms.clone()).collect();
    let (fits, lambda_scores): (Vec<FitResult>, Vec<(f64, f64)>) = match (args.method, &grid) {
        (Method::Fde, _) => (vec![fit_fde(&weights[0], &terms[0])?], Vec::new()),
        (Method::Sf, None) => (
            vec![fit_scalefree(&weights[0], &prior, &terms[0])?],
            Vec::new(),
        ),
        (Method::Sf, Some(grid)) => {
            let t = tune_scalefree(&weights[0], &terms[0], &prior, grid, tune_mode)?;
            (vec![t.result], t.scores)
        }
        (Method::Joint, None) => (fit_joint(&weights, &prior, &terms)?, Vec::new()),
        (Method::Joint, Some(grid)) => {
            let t = tune_joint(&weights, &terms, &prior, grid, tune_mode)?;
            (t.result, t.scores)
        }
    };

    let config = json!({
        "method": args.method.name(),
        "kernel": kernel,
        "prior": prior,
        "weight_mode": mode,
        "lambda_grid": grid,
        "tuning": if grid.is_none() { "none" } else if truths.is_some() { "oracle_f1" } else { "held_out" },
        "absolute_loglik": args.absolute_loglik,
    });

    let mut out = OutDir::create(&args.out)?;
    let pruned: Vec<Forest> = fits.iter().map(|f| f.pruned.clone()).collect();
    let shared = if k > 1 {
        common_edges(&pruned)?
    } else {
        Default::default()
    };
    for (u, (unit, fit)) in units.iter().zip(&fits).enumerate() {
        let prefix = unit_prefix(k, u);
        let mut loglik = holdout_loglik(&fit.pruned, &unit.terms)?;
        if args.absolute_loglik {
            loglik += entropy_offset(&unit.train, &kernel)?;
        }
        let mut doc = FitDocument::new(
            args.method.name(),
            fit,
            &unit.weights,
            loglik,
            config.clone(),
        );
        if k > 1 {
            doc.unit = Some(u + 1);
        }
        doc.lambda_scores = lambda_scores
            .iter()
            .map(|&(lambda, score)| LambdaScore { lambda, score })
            .collect();
        if let Some(truth) = &unit.truth {
            let mut report = f1_score(&fit.pruned, truth)?;
            report.holdout_loglik = Some(loglik);
            doc.score = Some(report);
        }
        write_json(out.file(&format!("{prefix}fit.json")), &doc)?;

        let labels = unit.weights.labels();
        let w = |i, j| unit.weights.get(i, j);
        write_edge_list(
            out.file(&format!("{prefix}edges.tsv")),
            &EdgeList::from_forest(&fit.pruned, labels, w),
        )?;
        write_edge_list(
            out.file(&format!("{prefix}tree.tsv")),
            &EdgeList::from_forest(&fit.tree, labels, w),
        )?;
        std::fs::write(
            out.file(&format!("{prefix}graph.dot")),
            to_dot(&fit.pruned, labels, None, &shared),
        )?;
        if args.write_weights {
            write_weight_matrix(out.file(&format!("{prefix}weights.tsv")), &unit.weights)?;
        }
        println!(
            "unit {}: lambda {} | {} of {} edges kept | held-out {:.4} | {} iteration(s){}",
            u + 1,
            fit.lambda,
            fit.pruned.len(),
            fit.tree.len(),
            loglik,
            fit.iterations,
            if fit.converged {
                ""
            } else {
                " (not converged)"
            }
        );
    }
    if k > 1 {
        let labels = units[0].weights.labels();
        let list = EdgeList {
            labels: labels.to_vec(),
            edges: shared.iter().map(|&e| (e, 1.0)).collect(),
        };
        write_edge_list(out.file("common_edges.tsv"), &list)?;
        let pairwise: Vec<Vec<usize>> = pruned
            .iter()
            .map(|a| {
                pruned
                    .iter()
                    .map(|b| a.edge_set().intersection(b.edge_set()).count())
                    .collect()
            })
            .collect();
        write_json(
            out.file("common_edges.json"),
            &json!({ "units": k, "common_to_all": shared.len(), "pairwise": pairwise }),
        )?;
        println!("{} edges common to all {k} units", shared.len());
    }

    let mut manifest = RunManifest::new("fit", argv, config);
    for p in &manifest_inputs {
        manifest.add_input(p)?;
    }
    manifest.finish(&out)?;
    if fits.iter().any(|f| !f.converged) {
        return Ok(Outcome::NotConverged);
    }
    Ok(Outcome::Done)
}
