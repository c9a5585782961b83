//! Tree estimators: plain forest density estimation, the scale-free penalized
//! variant and joint estimation of several structurally similar forests.
//!
//! Both penalized problems are solved by minorize-maximization. At the
//! current spanning tree(s) the concave (scale-free) or convex (joint) penalty
//! is replaced by its tangent, which turns the bound into a sum of adjusted
//! edge weights that Kruskal's algorithm maximizes exactly. The objective
//! therefore never decreases from one iterate to the next.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::density::{HoldoutTerms, WeightMatrix};
use crate::error::{Error, Result};
use crate::forest::{kruskal, kruskal_matrix, prune_by_holdout, EdgeTrace, Forest};

/// Multipliers of the mean off-diagonal weight forming the default λ grid.
///
/// The small end reproduces the usual fine grid near zero; the upper end
/// reaches the scale of typical weight gaps between true and spurious edges.
pub const LAMBDA_GRID_FACTORS: [f64; 15] = [
    0.0, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0,
];

/// The default λ grid for weights whose mean off-diagonal entry is `mean_weight`.
pub fn default_lambda_grid(mean_weight: f64) -> Vec<f64> {
    LAMBDA_GRID_FACTORS
        .iter()
        .map(|f| f * mean_weight)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Convergence {
    /// Stop once an iteration reproduces the previous edge set(s).
    #[default]
    EdgeSetStable,
    /// Stop once the objective gains no more than `tolerance`.
    ObjectiveDelta { tolerance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub max_iters: usize,
    pub convergence: Convergence,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            lambda: 0.0,
            alpha: 1.0,
            beta: 1.0,
            max_iters: 50,
            convergence: Convergence::EdgeSetStable,
        }
    }
}

impl PriorConfig {
    pub fn with_lambda(self, lambda: f64) -> Self {
        PriorConfig { lambda, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::Config(format!(
                "alpha and beta must be positive, got {} and {}",
                self.alpha, self.beta
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if let Convergence::ObjectiveDelta { tolerance } = self.convergence {
            if tolerance.is_nan() || tolerance < 0.0 {
                return Err(Error::Config(format!("negative tolerance {tolerance}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Spanning tree at the returned iterate.
    pub tree: Forest,
    /// `tree` truncated by held-out likelihood.
    pub pruned: Forest,
    /// Insertion order of the Kruskal pass that produced `tree`.
    pub trace: EdgeTrace,
    pub objective_per_iter: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub lambda: f64,
}

/// Plain forest density estimate: one Kruskal pass, then held-out pruning.
pub fn fit_fde(w: &WeightMatrix, holdout: &HoldoutTerms) -> Result<FitResult> {
    let (tree, trace) = kruskal(w)?;
    let pruned = prune_by_holdout(&trace, &holdout.along(&trace)?)?;
    Ok(FitResult {
        objective_per_iter: vec![tree.total_weight(w)],
        tree,
        pruned,
        trace,
        iterations: 0,
        converged: true,
        lambda: 0.0,
    })
}

/// `Σ_edges w − λ Σ_ℓ log δ(ℓ)` for a spanning tree.
pub fn scalefree_objective(f: &Forest, w: &WeightMatrix, cfg: &PriorConfig) -> Result<f64> {
    if f.d() != w.d() {
        return Err(Error::contract(format!(
            "forest has {} vertices, weights {}",
            f.d(),
            w.d()
        )));
    }
    let fit = f.total_weight(w);
    if cfg.lambda == 0.0 {
        return Ok(fit);
    }
    if let Some(l) = f.degrees().iter().position(|&k| k == 0) {
        return Err(Error::contract(format!(
            "vertex {} has degree 0; the degree penalty needs a spanning tree",
            l + 1
        )));
    }
    let penalty: f64 = f.degrees().iter().map(|&k| (k as f64).ln()).sum();
    Ok(fit - cfg.lambda * penalty)
}

/// Weights of the tangent bound at `current`: `w_ij − λ/δ_i − λ/δ_j`.
pub fn scalefree_adjusted_weights(w: &WeightMatrix, current: &Forest, lambda: f64) -> Array2<f64> {
    let d = w.d();
    let inv: Vec<f64> = current
        .degrees()
        .iter()
        .map(|&k| lambda / k as f64)
        .collect();
    let mut out = Array2::zeros((d, d));
    for i in 0..d {
        for j in (i + 1)..d {
            let v = w.get(i, j) - inv[i] - inv[j];
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

/// `log B(α + k, β + K − k)`.
pub fn beta_penalty(k: usize, units: usize, cfg: &PriorConfig) -> Result<f64> {
    if k > units {
        return Err(Error::contract(format!(
            "edge count {k} exceeds {units} units"
        )));
    }
    let a = cfg.alpha + k as f64;
    let b = cfg.beta + (units - k) as f64;
    Ok(ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b))
}

/// Slope of the sharing penalty at edge count `k`: `ψ(α + k) − ψ(β + K − k)`.
pub fn sharing_adjustment(k: usize, units: usize, alpha: f64, beta: f64) -> f64 {
    digamma(alpha + k as f64) - digamma(beta + (units - k) as f64)
}

fn check_units(forests: &[Forest], weights: &[WeightMatrix]) -> Result<usize> {
    if forests.len() != weights.len() {
        return Err(Error::contract(format!(
            "{} forests for {} weight matrices",
            forests.len(),
            weights.len()
        )));
    }
    let d = weights.first().map(WeightMatrix::d).unwrap_or(0);
    if weights.iter().any(|w| w.d() != d) || forests.iter().any(|f| f.d() != d) {
        return Err(Error::contract("units disagree on the vertex count"));
    }
    Ok(d)
}

fn edge_counts(forests: &[Forest], d: usize) -> Array2<usize> {
    let mut counts = Array2::zeros((d, d));
    for f in forests {
        for e in f.edges() {
            counts[[e.i, e.j]] += 1;
        }
    }
    counts
}

/// `Σ_k Σ_edges w^(k) + λ Σ_{i<j} log B(α + c_ij, β + K − c_ij)`, where
/// `c_ij` counts the units containing edge `(i, j)`.
pub fn joint_objective(
    forests: &[Forest],
    weights: &[WeightMatrix],
    cfg: &PriorConfig,
) -> Result<f64> {
    let d = check_units(forests, weights)?;
    let units = forests.len();
    let fit: f64 = forests
        .iter()
        .zip(weights)
        .map(|(f, w)| f.total_weight(w))
        .sum();
    if cfg.lambda == 0.0 {
        return Ok(fit);
    }
    let table = (0..=units)
        .map(|k| beta_penalty(k, units, cfg))
        .collect::<Result<Vec<_>>>()?;
    let counts = edge_counts(forests, d);
    let mut penalty = 0.0;
    for i in 0..d {
        for j in (i + 1)..d {
            penalty += table[counts[[i, j]]];
        }
    }
    Ok(fit + cfg.lambda * penalty)
}

#[derive(Clone)]
struct Iterate {
    forests: Vec<Forest>,
    traces: Vec<EdgeTrace>,
}

struct MmRun {
    best: Iterate,
    objectives: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Shared MM loop. `step` maps the current forests to the next Kruskal
/// iterate; `objective` scores an iterate.
fn run_mm(
    init: Iterate,
    cfg: &PriorConfig,
    objective: impl Fn(&[Forest]) -> Result<f64>,
    mut step: impl FnMut(&[Forest]) -> Result<Iterate>,
) -> Result<MmRun> {
    let mut objectives = vec![objective(&init.forests)?];
    let mut history = vec![init];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iters {
        let current = history.last().expect("history starts non-empty");
        let next = step(&current.forests)?;
        iterations += 1;

        if next.forests == current.forests {
            // Keep the latest insertion order for pruning.
            *history.last_mut().expect("non-empty") = next;
            converged = true;
            break;
        }
        // A recurrence further back is a limit cycle between equal-valued trees.
        if history[..history.len() - 1]
            .iter()
            .any(|h| h.forests == next.forests)
        {
            converged = true;
            break;
        }
        let value = objective(&next.forests)?;
        let gain = value - objectives.last().copied().unwrap_or(f64::NEG_INFINITY);
        objectives.push(value);
        history.push(next);
        if let Convergence::ObjectiveDelta { tolerance } = cfg.convergence {
            if gain <= tolerance {
                converged = true;
                break;
            }
        }
    }

    let best_index =
        objectives.iter().enumerate().fold(
            0,
            |best, (t, &v)| if v >= objectives[best] { t } else { best },
        );
    Ok(MmRun {
        best: history.swap_remove(best_index),
        objectives,
        iterations,
        converged,
    })
}

/// Scale-free forest estimate by MM over the log-degree penalty.
pub fn fit_scalefree(
    w: &WeightMatrix,
    cfg: &PriorConfig,
    holdout: &HoldoutTerms,
) -> Result<FitResult> {
    cfg.validate()?;
    let (tree, trace) = kruskal(w)?;
    let init = Iterate {
        forests: vec![tree],
        traces: vec![trace],
    };
    let run = run_mm(
        init,
        cfg,
        |f| scalefree_objective(&f[0], w, cfg),
        |f| {
            let adjusted = scalefree_adjusted_weights(w, &f[0], cfg.lambda);
            let (tree, trace) = kruskal_matrix(adjusted.view())?;
            Ok(Iterate {
                forests: vec![tree],
                traces: vec![trace],
            })
        },
    )?;
    let Iterate {
        mut forests,
        mut traces,
    } = run.best;
    let (tree, trace) = (forests.remove(0), traces.remove(0));
    let pruned = prune_by_holdout(&trace, &holdout.along(&trace)?)?;
    Ok(FitResult {
        tree,
        pruned,
        trace,
        objective_per_iter: run.objectives,
        iterations: run.iterations,
        converged: run.converged,
        lambda: cfg.lambda,
    })
}

/// Joint estimate of `K ≥ 2` forests sharing a Beta-Bernoulli edge prior.
///
/// Every returned unit carries the same joint objective trace.
pub fn fit_joint(
    weights: &[WeightMatrix],
    cfg: &PriorConfig,
    holdout: &[HoldoutTerms],
) -> Result<Vec<FitResult>> {
    cfg.validate()?;
    let units = weights.len();
    if units < 2 {
        return Err(Error::contract(format!(
            "joint fit needs at least 2 units, got {units}"
        )));
    }
    if holdout.len() != units {
        return Err(Error::contract(format!(
            "{} held-out term sets for {units} units",
            holdout.len()
        )));
    }
    let labels = weights[0].labels();
    if weights.iter().any(|w| w.labels() != labels) {
        return Err(Error::contract("units have different vertex labels"));
    }
    let d = weights[0].d();
    let slopes: Vec<f64> = (0..=units)
        .map(|k| cfg.lambda * sharing_adjustment(k, units, cfg.alpha, cfg.beta))
        .collect();

    let starts = weights
        .par_iter()
        .map(kruskal)
        .collect::<Result<Vec<_>>>()?;
    let (forests, traces) = starts.into_iter().unzip();
    let run = run_mm(
        Iterate { forests, traces },
        cfg,
        |f| joint_objective(f, weights, cfg),
        |f| {
            let counts = edge_counts(f, d);
            let passes = weights
                .par_iter()
                .map(|w| {
                    let mut adjusted = w.as_array().clone();
                    for i in 0..d {
                        for j in (i + 1)..d {
                            let v = adjusted[[i, j]] + slopes[counts[[i, j]]];
                            adjusted[[i, j]] = v;
                            adjusted[[j, i]] = v;
                        }
                    }
                    kruskal_matrix(adjusted.view())
                })
                .collect::<Result<Vec<_>>>()?;
            let (forests, traces) = passes.into_iter().unzip();
            Ok(Iterate { forests, traces })
        },
    )?;

    run.best
        .forests
        .into_iter()
        .zip(run.best.traces)
        .zip(holdout)
        .map(|((tree, trace), terms)| {
            let pruned = prune_by_holdout(&trace, &terms.along(&trace)?)?;
            Ok(FitResult {
                tree,
                pruned,
                trace,
                objective_per_iter: run.objectives.clone(),
                iterations: run.iterations,
                converged: run.converged,
                lambda: cfg.lambda,
            })
        })
        .collect()
}
