//! Scoring estimated forests and selecting λ.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::density::{estimate_entropy, HoldoutTerms, KernelConfig, WeightMatrix};
use crate::error::{Error, Result};
use crate::forest::{Edge, Forest};
use crate::solvers::{fit_joint, fit_scalefree, FitResult, PriorConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holdout_loglik: Option<f64>,
}

/// Edge-recovery precision, recall and F1. Two empty edge sets score 1.
pub fn f1_score(estimated: &Forest, truth: &Forest) -> Result<ScoreReport> {
    if estimated.d() != truth.d() {
        return Err(Error::contract(format!(
            "estimated graph has {} vertices, truth {}",
            estimated.d(),
            truth.d()
        )));
    }
    let tp = estimated.edge_set().intersection(truth.edge_set()).count();
    let fp = estimated.len() - tp;
    let fn_ = truth.len() - tp;
    let (precision, recall, f1) = if estimated.is_empty() && truth.is_empty() {
        (1.0, 1.0, 1.0)
    } else {
        let p = if estimated.is_empty() {
            0.0
        } else {
            tp as f64 / estimated.len() as f64
        };
        let r = if truth.is_empty() {
            0.0
        } else {
            tp as f64 / truth.len() as f64
        };
        let f = if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        };
        (p, r, f)
    };
    Ok(ScoreReport {
        true_positive: tp,
        false_positive: fp,
        false_negative: fn_,
        precision,
        recall,
        f1,
        holdout_loglik: None,
    })
}

/// Edges present in every forest.
pub fn common_edges(forests: &[Forest]) -> Result<BTreeSet<Edge>> {
    let Some(first) = forests.first() else {
        return Ok(BTreeSet::new());
    };
    if forests.iter().any(|f| f.d() != first.d()) {
        return Err(Error::contract("forests disagree on the vertex count"));
    }
    Ok(first
        .edges()
        .filter(|e| forests[1..].iter().all(|f| f.contains(e.i, e.j)))
        .collect())
}

/// Sum of the pairwise held-out terms over the forest's edges. The univariate
/// terms are left out since every forest on the same vertices shares them.
pub fn holdout_loglik(forest: &Forest, terms: &HoldoutTerms) -> Result<f64> {
    if forest.d() != terms.d() {
        return Err(Error::contract(format!(
            "held-out terms cover {} vertices, forest has {}",
            terms.d(),
            forest.d()
        )));
    }
    Ok(forest.edges().map(|e| terms.get(e.i, e.j)).sum())
}

/// `−Σ_ℓ Ĥ(X_ℓ)`: the forest-independent part of the log-likelihood, added
/// when an absolute scale is wanted.
pub fn entropy_offset(data: &Dataset, cfg: &KernelConfig) -> Result<f64> {
    let mut total = 0.0;
    for j in 0..data.d() {
        total -= estimate_entropy(&data.column_vec(j), cfg)?.value;
    }
    Ok(total)
}

/// How λ is chosen.
#[derive(Debug, Clone, Copy)]
pub enum TuneMode<'a> {
    /// Maximize the held-out log-likelihood of the pruned forest(s).
    HeldOut,
    /// Maximize F1 against known true forests (one per unit).
    Oracle(&'a [Forest]),
}

#[derive(Debug, Clone)]
pub struct Tuned<T> {
    pub lambda: f64,
    pub result: T,
    pub score: f64,
    /// `(λ, score)` for every grid point, in grid order.
    pub scores: Vec<(f64, f64)>,
}

/// Fits at every λ in `grid` and keeps the best-scoring result, breaking ties
/// toward the smaller λ. Grid points may be evaluated in parallel.
pub fn tune<T, F, S>(grid: &[f64], fit: F, score: S) -> Result<Tuned<T>>
where
    T: Send,
    F: Fn(f64) -> Result<T> + Sync,
    S: Fn(&T) -> Result<f64> + Sync,
{
    if grid.is_empty() {
        return Err(Error::Config("empty lambda grid".into()));
    }
    let evaluated = grid
        .par_iter()
        .map(|&lambda| {
            let annotate = |e: Error| Error::AtLambda {
                lambda,
                source: Box::new(e),
            };
            let result = fit(lambda).map_err(annotate)?;
            let s = score(&result).map_err(annotate)?;
            Ok((lambda, s, result))
        })
        .collect::<Result<Vec<_>>>()?;

    let scores = evaluated.iter().map(|(l, s, _)| (*l, *s)).collect();
    let mut best: Option<(f64, f64, T)> = None;
    for (lambda, s, result) in evaluated {
        let s_key = if s.is_nan() { f64::NEG_INFINITY } else { s };
        let better = match &best {
            None => true,
            Some((bl, bs, _)) => s_key > *bs || (s_key == *bs && lambda < *bl),
        };
        if better {
            best = Some((lambda, s_key, result));
        }
    }
    let (lambda, score, result) = best.expect("grid is non-empty");
    Ok(Tuned {
        lambda,
        result,
        score,
        scores,
    })
}

fn oracle_truth<'a>(mode: TuneMode<'a>, units: usize) -> Result<Option<&'a [Forest]>> {
    match mode {
        TuneMode::HeldOut => Ok(None),
        TuneMode::Oracle(truth) if truth.len() == units => Ok(Some(truth)),
        TuneMode::Oracle(truth) => Err(Error::contract(format!(
            "{} true forests for {units} units",
            truth.len()
        ))),
    }
}

/// [`tune`] over [`fit_scalefree`].
pub fn tune_scalefree(
    w: &WeightMatrix,
    holdout: &HoldoutTerms,
    cfg: &PriorConfig,
    grid: &[f64],
    mode: TuneMode<'_>,
) -> Result<Tuned<FitResult>> {
    let truth = oracle_truth(mode, 1)?;
    tune(
        grid,
        |lambda| fit_scalefree(w, &cfg.with_lambda(lambda), holdout),
        |fit| match truth {
            None => holdout_loglik(&fit.pruned, holdout),
            Some(t) => Ok(f1_score(&fit.pruned, &t[0])?.f1),
        },
    )
}

/// [`tune`] over [`fit_joint`]; held-out scores are summed over units and
/// oracle scores averaged.
pub fn tune_joint(
    weights: &[WeightMatrix],
    holdout: &[HoldoutTerms],
    cfg: &PriorConfig,
    grid: &[f64],
    mode: TuneMode<'_>,
) -> Result<Tuned<Vec<FitResult>>> {
    let truth = oracle_truth(mode, weights.len())?;
    tune(
        grid,
        |lambda| fit_joint(weights, &cfg.with_lambda(lambda), holdout),
        |fits| match truth {
            None => fits
                .iter()
                .zip(holdout)
                .map(|(f, t)| holdout_loglik(&f.pruned, t))
                .sum(),
            Some(t) => {
                let mut total = 0.0;
                for (f, truth) in fits.iter().zip(t) {
                    total += f1_score(&f.pruned, truth)?.f1;
                }
                Ok(total / fits.len() as f64)
            }
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::default_names;
    use crate::forest::{best_prefix, kruskal};
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn path(d: usize) -> Forest {
        Forest::from_edges(d, (0..d - 1).map(|v| (v, v + 1))).unwrap()
    }

    #[test]
    fn f1_examples() {
        let truth = path(5);
        assert_eq!(f1_score(&truth, &truth).unwrap().f1, 1.0);

        let half = Forest::from_edges(5, [(0, 1), (1, 2)]).unwrap();
        let r = f1_score(&half, &truth).unwrap();
        assert_eq!((r.precision, r.recall), (1.0, 0.5));
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-15);

        let r = f1_score(&Forest::empty(5), &truth).unwrap();
        assert_eq!(r.f1, 0.0);
        assert_eq!(r.false_negative, 4);
        assert_eq!(
            f1_score(&Forest::empty(5), &Forest::empty(5)).unwrap().f1,
            1.0
        );
        assert!(f1_score(&Forest::empty(4), &truth).is_err());
    }

    #[test]
    fn common_edge_examples() {
        let a = path(5);
        assert_eq!(
            common_edges(&[a.clone(), a.clone(), a.clone()]).unwrap(),
            *a.edge_set()
        );
        let b = Forest::from_edges(5, [(0, 2), (0, 3), (0, 4)]).unwrap();
        assert!(common_edges(&[a.clone(), b]).unwrap().is_empty());
        assert!(common_edges(&[a, path(4)]).is_err());
    }

    fn random_terms(d: usize, rng: &mut ChaCha8Rng) -> HoldoutTerms {
        let mut m = Array2::zeros((d, d));
        for i in 0..d {
            for j in (i + 1)..d {
                let v = rng.random_range(-0.1..0.1);
                m[[i, j]] = v;
                m[[j, i]] = v;
            }
        }
        HoldoutTerms::new(m).unwrap()
    }

    #[test]
    fn holdout_loglik_is_additive_and_peaks_at_prune_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = 10;
        let terms = random_terms(d, &mut rng);
        assert_eq!(holdout_loglik(&Forest::empty(d), &terms).unwrap(), 0.0);

        let w = WeightMatrix::from_fn(default_names(d), |_, _| rng.random::<f64>());
        let (_, trace) = kruskal(&w).unwrap();
        let along = terms.along(&trace).unwrap();
        for (k, term) in along.iter().enumerate() {
            let delta = holdout_loglik(&trace.prefix(k + 1), &terms).unwrap()
                - holdout_loglik(&trace.prefix(k), &terms).unwrap();
            assert!((delta - term).abs() < 1e-12);
        }
        let (k_star, _) = best_prefix(&along);
        let best = holdout_loglik(&trace.prefix(k_star), &terms).unwrap();
        for k in 0..=trace.len() {
            assert!(holdout_loglik(&trace.prefix(k), &terms).unwrap() <= best + 1e-12);
        }
    }

    #[test]
    fn tune_examples() {
        let t = tune(&[0.3], Ok, |&l| Ok(-l)).unwrap();
        assert_eq!(t.lambda, 0.3);
        // Ties go to the smallest lambda.
        let t = tune(&[0.5, 0.1, 0.2], Ok, |_| Ok(1.0)).unwrap();
        assert_eq!(t.lambda, 0.1);
        let t = tune(&[0.0, 1.0, 2.0], Ok, |&l| Ok(-(l - 1.0f64).powi(2))).unwrap();
        assert_eq!(t.lambda, 1.0);
        assert_eq!(t.scores.len(), 3);
        assert!(tune::<f64, _, _>(&[], Ok, |_| Ok(0.0)).is_err());
        let err = tune(
            &[0.7],
            |_| Err::<f64, _>(Error::Config("x".into())),
            |_| Ok(0.0),
        );
        assert!(matches!(err, Err(Error::AtLambda { lambda, .. }) if lambda == 0.7));
    }

    #[test]
    fn oracle_tuning_reaches_best_f1() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 12;
        let w = WeightMatrix::from_fn(default_names(d), |_, _| rng.random_range(0.0..0.2));
        let terms = HoldoutTerms::new(Array2::from_elem((d, d), 0.0) + 0.01).unwrap();
        let grid = [0.0, 0.01, 0.05, 0.1];
        let cfg = PriorConfig::default();
        let truth = fit_scalefree(&w, &cfg.with_lambda(0.05), &terms)
            .unwrap()
            .pruned;
        let tuned = tune_scalefree(
            &w,
            &terms,
            &cfg,
            &grid,
            TuneMode::Oracle(std::slice::from_ref(&truth)),
        )
        .unwrap();
        assert_eq!(tuned.score, 1.0);
        let max = tuned
            .scores
            .iter()
            .map(|s| s.1)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(tuned.score, max);

        let held = tune_scalefree(&w, &terms, &cfg, &grid, TuneMode::HeldOut).unwrap();
        let at_zero = fit_scalefree(&w, &cfg, &terms).unwrap();
        assert!(held.score >= holdout_loglik(&at_zero.pruned, &terms).unwrap());
    }

    proptest! {
        #[test]
        fn scores_bounded_and_relabeling_invariant(seed: u64, d in 3usize..15) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tree = |rng: &mut ChaCha8Rng| {
                let w = WeightMatrix::from_fn(default_names(d), |_, _| rng.random::<f64>());
                let (_, trace) = kruskal(&w).unwrap();
                trace.prefix(rng.random_range(0..d))
            };
            let (a, b) = (tree(&mut rng), tree(&mut rng));
            let r = f1_score(&a, &b).unwrap();
            for v in [r.precision, r.recall, r.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            let mut perm: Vec<usize> = (0..d).collect();
            for i in (1..d).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let relabel = |f: &Forest| Forest::from_edges(d, f.edges().map(|e| (perm[e.i], perm[e.j]))).unwrap();
            prop_assert_eq!(f1_score(&relabel(&a), &relabel(&b)).unwrap(), r);
            let common = common_edges(&[a.clone(), b.clone()]).unwrap();
            prop_assert!(common.iter().all(|e| a.contains(e.i, e.j) && b.contains(e.i, e.j)));
        }
    }
}
