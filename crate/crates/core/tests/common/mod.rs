#![allow(dead_code)]

use forestprior::datagen::{sample_tree_copula, CopulaFamily, CopulaSpec};
use forestprior::density::{holdout_terms, weight_matrix};
use forestprior::{Forest, HoldoutTerms, KernelConfig, WeightMatrix, WeightMode};
use statrs::distribution::{ContinuousCDF, Normal};

/// All `d^(d−2)` labeled spanning trees on `d ≥ 2` vertices, by Prüfer decoding.
pub fn all_spanning_trees(d: usize) -> Vec<Vec<(usize, usize)>> {
    if d == 2 {
        return vec![vec![(0, 1)]];
    }
    let len = d - 2;
    let total = d.pow(len as u32);
    let mut trees = Vec::with_capacity(total);
    for mut code in 0..total {
        let mut seq = vec![0; len];
        for s in seq.iter_mut() {
            *s = code % d;
            code /= d;
        }
        trees.push(prufer_decode(&seq, d));
    }
    trees
}

fn prufer_decode(seq: &[usize], d: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; d];
    for &v in seq {
        degree[v] += 1;
    }
    let mut edges = Vec::with_capacity(d - 1);
    for &v in seq {
        let leaf = (0..d).find(|&u| degree[u] == 1).expect("a leaf exists");
        edges.push((leaf, v));
        degree[leaf] -= 1;
        degree[v] -= 1;
    }
    let rest: Vec<usize> = (0..d).filter(|&u| degree[u] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Two-sided one-sample Kolmogorov–Smirnov statistic against uniform(0, 1).
pub fn ks_uniform_statistic(sample: &[f64]) -> f64 {
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let v = v.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - v).max(v - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Kolmogorov distribution survival function `P(K > t)`.
pub fn kolmogorov_survival(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * t * t).exp();
        s += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

/// Asymptotic KS p-value with the Stephens small-sample correction.
pub fn ks_uniform_pvalue(sample: &[f64]) -> f64 {
    let n = sample.len() as f64;
    let d = ks_uniform_statistic(sample);
    kolmogorov_survival((n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d)
}

/// Average ranks (1-based), ties sharing their mean rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = mean;
        }
        i = j + 1;
    }
    r
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

/// Kendall's τ-a by pair counting.
pub fn kendall(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut s = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let p = (a[i] - a[j]) * (b[i] - b[j]);
            s += if p > 0.0 {
                1
            } else if p < 0.0 {
                -1
            } else {
                0
            };
        }
    }
    s as f64 / (n * (n - 1) / 2) as f64
}

/// Van der Waerden scores `Φ⁻¹(rank / (n + 1))`.
pub fn normal_scores(x: &[f64]) -> Vec<f64> {
    let phi = Normal::new(0.0, 1.0).unwrap();
    let n = x.len() as f64;
    ranks(x)
        .into_iter()
        .map(|r| phi.inverse_cdf(r / (n + 1.0)))
        .collect()
}

/// Partial correlation of `a` and `c` given `b`.
pub fn partial_correlation(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let (rab, rbc, rac) = (pearson(a, b), pearson(b, c), pearson(a, c));
    (rac - rab * rbc) / ((1.0 - rab * rab) * (1.0 - rbc * rbc)).sqrt()
}

pub fn excess_kurtosis(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn gaussian_mi(rho: f64) -> f64 {
    -0.5 * (1.0 - rho * rho).ln()
}

/// One simulated unit: true forest, training weights and held-out terms.
pub struct Unit {
    pub truth: Forest,
    pub weights: WeightMatrix,
    pub terms: HoldoutTerms,
}

pub fn simulate_unit(
    truth: &Forest,
    family: CopulaFamily,
    n: usize,
    n_holdout: usize,
    seed: u64,
) -> Unit {
    let spec = CopulaSpec {
        family,
        n: n + n_holdout,
        rng_seed: seed,
    };
    let data = sample_tree_copula(truth, &spec).unwrap();
    let (train, holdout) = data.split_rows(n).unwrap();
    let cfg = KernelConfig::default();
    Unit {
        truth: truth.clone(),
        weights: weight_matrix(&train, &cfg, WeightMode::Kde).unwrap(),
        terms: holdout_terms(&train, &holdout, &cfg, WeightMode::Kde).unwrap(),
    }
}
