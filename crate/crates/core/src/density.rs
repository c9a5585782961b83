//! Kernel and empirical estimates of marginal densities, mutual information and
//! entropy, and the pairwise weight matrices built from them.
//!
//! All grid-based quantities use the same construction: each column gets a
//! uniform grid of `grid_points` nodes spanning its range padded by three
//! bandwidths, and integrals are taken with the trapezoidal rule. Bivariate
//! densities are evaluated on the tensor product of the two column grids.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use log::warn;
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::EdgeTrace;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Gaussian,
    Epanechnikov,
}

impl Kernel {
    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => INV_SQRT_2PI * (-0.5 * u * u).exp(),
            Kernel::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
        }
    }
}

/// A bandwidth, either derived from the column by the default rule or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    #[default]
    Rule,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub kernel: Kernel,
    /// Univariate bandwidth. The rule is Silverman's `1.06 σ n^(-1/5)`.
    pub h1: Bandwidth,
    /// Per-axis bivariate bandwidth. The rule is `σ n^(-1/6)`.
    pub h2: Bandwidth,
    pub grid_points: usize,
    pub floor: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            kernel: Kernel::Gaussian,
            h1: Bandwidth::Rule,
            h2: Bandwidth::Rule,
            grid_points: 100,
            floor: 1e-10,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 16 {
            return Err(Error::Config(format!(
                "grid_points must be at least 16, got {}",
                self.grid_points
            )));
        }
        if !(self.floor > 0.0 && self.floor < 1e-6) {
            return Err(Error::Config(format!(
                "density floor must lie in (0, 1e-6), got {}",
                self.floor
            )));
        }
        for (name, bw) in [("h1", self.h1), ("h2", self.h2)] {
            if let Bandwidth::Fixed(h) = bw {
                if !(h.is_finite() && h > 0.0) {
                    return Err(Error::Config(format!("{name} must be positive, got {h}")));
                }
            }
        }
        Ok(())
    }

    /// Resolves `(h1, h2)` for one column. Either may come out as zero for a
    /// constant column under the rule.
    pub fn bandwidths(&self, column: &[f64]) -> (f64, f64) {
        let n = column.len() as f64;
        let sd = sample_sd(column);
        let h1 = match self.h1 {
            Bandwidth::Rule => 1.06 * sd * n.powf(-0.2),
            Bandwidth::Fixed(h) => h,
        };
        let h2 = match self.h2 {
            Bandwidth::Rule => sd * n.powf(-1.0 / 6.0),
            Bandwidth::Fixed(h) => h,
        };
        (h1, h2)
    }
}

fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1) as f64).sqrt()
}

fn is_constant(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[0] == w[1])
}

fn check_column(x: &[f64], column: usize) -> Result<()> {
    if x.is_empty() {
        return Err(Error::InvalidData("empty column".into()));
    }
    match x.iter().position(|v| !v.is_finite()) {
        Some(row) => Err(Error::NonFinite { column, row }),
        None => Ok(()),
    }
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    check_column(a, 0)?;
    check_column(b, 1)?;
    if a.len() != b.len() {
        return Err(Error::InvalidData(format!(
            "column lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

fn positive_bandwidth(h: f64, name: &str) -> Result<f64> {
    if h > 0.0 && h.is_finite() {
        Ok(h)
    } else {
        Err(Error::Config(format!("{name} resolved to {h}")))
    }
}

#[inline]
fn kde_raw(data: &[f64], kernel: Kernel, h: f64, x: f64) -> f64 {
    let s: f64 = data.iter().map(|&v| kernel.eval((v - x) / h)).sum();
    s / (data.len() as f64 * h)
}

/// Univariate kernel density estimate at `x`, clamped below at the floor.
pub fn kde_univariate(data: &[f64], cfg: &KernelConfig, x: f64) -> Result<f64> {
    cfg.validate()?;
    check_column(data, 0)?;
    let h1 = positive_bandwidth(cfg.bandwidths(data).0, "h1")?;
    Ok(kde_raw(data, cfg.kernel, h1, x).max(cfg.floor))
}

/// Product-kernel bivariate density estimate at `(xa, xb)`, clamped below at
/// the floor. Each axis uses its own resolved `h2`.
pub fn kde_bivariate(a: &[f64], b: &[f64], cfg: &KernelConfig, xa: f64, xb: f64) -> Result<f64> {
    cfg.validate()?;
    check_pair(a, b)?;
    let ha = positive_bandwidth(cfg.bandwidths(a).1, "h2")?;
    let hb = positive_bandwidth(cfg.bandwidths(b).1, "h2")?;
    let k = cfg.kernel;
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(&u, &v)| k.eval((u - xa) / ha) * k.eval((v - xb) / hb))
        .sum();
    Ok((s / (a.len() as f64 * ha * hb)).max(cfg.floor))
}

fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let g = grid.len();
    let dx = grid[1] - grid[0];
    let mut w = vec![dx; g];
    w[0] = 0.5 * dx;
    w[g - 1] = 0.5 * dx;
    w
}

/// Per-column state shared by every pair the column takes part in.
#[derive(Debug, Clone)]
struct ColumnModel {
    data: Vec<f64>,
    degenerate: bool,
    trap: Vec<f64>,
    /// `K((x_t - g_a) / h2) / h2`, shape `G × n`.
    kmat: Array2<f64>,
    /// Floored univariate density on the grid.
    uni: Vec<f64>,
}

impl ColumnModel {
    fn build(data: Vec<f64>, cfg: &KernelConfig) -> Self {
        if is_constant(&data) {
            return ColumnModel {
                data,
                degenerate: true,
                trap: Vec::new(),
                kmat: Array2::zeros((0, 0)),
                uni: Vec::new(),
            };
        }
        let (h1, h2) = cfg.bandwidths(&data);
        let pad = 3.0 * h1.max(h2);
        let lo = data.iter().copied().fold(f64::INFINITY, f64::min) - pad;
        let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max) + pad;
        let g = cfg.grid_points;
        let step = (hi - lo) / (g - 1) as f64;
        let grid: Vec<f64> = (0..g).map(|a| lo + step * a as f64).collect();
        let k = cfg.kernel;
        let kmat = Array2::from_shape_fn((g, data.len()), |(a, t)| {
            k.eval((data[t] - grid[a]) / h2) / h2
        });
        let uni = grid
            .iter()
            .map(|&x| kde_raw(&data, k, h1, x).max(cfg.floor))
            .collect();
        ColumnModel {
            trap: trapezoid_weights(&grid),
            data,
            degenerate: false,
            kmat,
            uni,
        }
    }

    fn entropy(&self) -> f64 {
        -self
            .uni
            .iter()
            .zip(&self.trap)
            .map(|(&p, &w)| w * p * p.ln())
            .sum::<f64>()
    }

    #[cfg(test)]
    fn mass(&self) -> f64 {
        self.uni.iter().zip(&self.trap).map(|(p, w)| p * w).sum()
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Bivariate KDE of the pair on the tensor grid, floored, shape `G × G`.
fn joint_grid(a: &ColumnModel, b: &ColumnModel, floor: f64) -> Array2<f64> {
    let n = a.data.len() as f64;
    let mut p = a.kmat.dot(&b.kmat.t());
    p.mapv_inplace(|v| (v / n).max(floor));
    p
}

fn pair_mi(a: &ColumnModel, b: &ColumnModel, floor: f64) -> f64 {
    if a.degenerate || b.degenerate {
        return 0.0;
    }
    // A fixed operand order makes the result exactly symmetric.
    let (a, b) = match lexicographic(&a.data, &b.data) {
        Ordering::Greater => (b, a),
        _ => (a, b),
    };
    let p = joint_grid(a, b, floor);
    let mut total = 0.0;
    for (x, row) in p.outer_iter().enumerate() {
        let (wx, ux) = (a.trap[x], a.uni[x]);
        let mut acc = 0.0;
        for (y, &pxy) in row.iter().enumerate() {
            acc += b.trap[y] * pxy * (pxy / (ux * b.uni[y])).ln();
        }
        total += wx * acc;
    }
    total.max(0.0)
}

/// A mutual-information or entropy estimate, flagged when an input column
/// was constant and a fallback value was returned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub degenerate: bool,
}

/// Plug-in mutual information of the kernel density estimates, integrated
/// numerically and clamped at zero.
pub fn estimate_mi(a: &[f64], b: &[f64], cfg: &KernelConfig) -> Result<Estimate> {
    cfg.validate()?;
    check_pair(a, b)?;
    if a.len() < 2 {
        return Err(Error::InvalidData("need at least 2 samples".into()));
    }
    let ma = ColumnModel::build(a.to_vec(), cfg);
    let mb = ColumnModel::build(b.to_vec(), cfg);
    let degenerate = ma.degenerate || mb.degenerate;
    if degenerate {
        warn!("constant column in mutual information estimate; returning 0");
    }
    Ok(Estimate {
        value: pair_mi(&ma, &mb, cfg.floor),
        degenerate,
    })
}

/// Differential entropy of the univariate KDE. Constant columns give 0.
pub fn estimate_entropy(data: &[f64], cfg: &KernelConfig) -> Result<Estimate> {
    cfg.validate()?;
    check_column(data, 0)?;
    let model = ColumnModel::build(data.to_vec(), cfg);
    if model.degenerate {
        warn!("constant column in entropy estimate; returning 0");
        return Ok(Estimate {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(Estimate {
        value: model.entropy(),
        degenerate: false,
    })
}

/// Plug-in mutual information of two categorical code columns.
pub fn estimate_mi_discrete(a: &[i64], b: &[i64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidData(format!(
            "column lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidData("empty column".into()));
    }
    let table = DiscreteTable::new(a, b);
    let n = a.len() as f64;
    let mi: f64 = table
        .joint
        .iter()
        .map(|(&(x, y), &c)| {
            let c = c as f64;
            let ca = table.left[&x] as f64;
            let cb = table.right[&y] as f64;
            c * ((c * n) / (ca * cb)).ln()
        })
        .sum();
    Ok(mi / n)
}

struct DiscreteTable {
    n: usize,
    joint: BTreeMap<(i64, i64), usize>,
    left: BTreeMap<i64, usize>,
    right: BTreeMap<i64, usize>,
}

impl DiscreteTable {
    fn new(a: &[i64], b: &[i64]) -> Self {
        let mut joint = BTreeMap::new();
        let mut left = BTreeMap::new();
        let mut right = BTreeMap::new();
        for (&x, &y) in a.iter().zip(b) {
            *joint.entry((x, y)).or_insert(0) += 1;
            *left.entry(x).or_insert(0) += 1;
            *right.entry(y).or_insert(0) += 1;
        }
        DiscreteTable {
            n: a.len(),
            joint,
            left,
            right,
        }
    }

    fn log_ratio(&self, x: i64, y: i64, floor: f64) -> f64 {
        let n = self.n as f64;
        let pj = (*self.joint.get(&(x, y)).unwrap_or(&0) as f64 / n).max(floor);
        let pa = (*self.left.get(&x).unwrap_or(&0) as f64 / n).max(floor);
        let pb = (*self.right.get(&y).unwrap_or(&0) as f64 / n).max(floor);
        (pj / (pa * pb)).ln()
    }
}

/// Which estimator fills a weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    #[default]
    Kde,
    Discrete,
}

/// Symmetric `d × d` edge weights with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    w: Array2<f64>,
    labels: Vec<String>,
    degenerate: Vec<usize>,
}

impl WeightMatrix {
    pub fn new(w: Array2<f64>, labels: Vec<String>) -> Result<Self> {
        let (r, c) = w.dim();
        if r != c {
            return Err(Error::contract(format!("weight matrix is {r}×{c}")));
        }
        if labels.len() != r {
            return Err(Error::contract(format!(
                "{} labels for a {r}×{r} weight matrix",
                labels.len()
            )));
        }
        for i in 0..r {
            if w[[i, i]] != 0.0 {
                return Err(Error::contract(format!("nonzero diagonal at {i}")));
            }
            for j in (i + 1)..r {
                let (x, y) = (w[[i, j]], w[[j, i]]);
                if x.is_nan() || x != y {
                    return Err(Error::contract(format!(
                        "weight matrix not symmetric at ({i}, {j}): {x} vs {y}"
                    )));
                }
            }
        }
        Ok(WeightMatrix {
            w,
            labels,
            degenerate: Vec::new(),
        })
    }

    /// Fills the upper triangle from `f(i, j)` with `i < j` and mirrors it.
    pub fn from_fn(labels: Vec<String>, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let d = labels.len();
        let mut w = Array2::zeros((d, d));
        for i in 0..d {
            for j in (i + 1)..d {
                let v = f(i, j);
                w[[i, j]] = v;
                w[[j, i]] = v;
            }
        }
        WeightMatrix {
            w,
            labels,
            degenerate: Vec::new(),
        }
    }

    pub fn d(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[[i, j]]
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Columns that were constant and therefore got zero weight to everything.
    pub fn degenerate_columns(&self) -> &[usize] {
        &self.degenerate
    }

    pub fn mean_off_diagonal(&self) -> f64 {
        let d = self.d();
        if d < 2 {
            return 0.0;
        }
        let mut s = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                s += self.w[[i, j]];
            }
        }
        s / (d * (d - 1) / 2) as f64
    }
}

fn upper_pairs(d: usize) -> Vec<(usize, usize)> {
    (0..d)
        .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
        .collect()
}

fn fill_symmetric(d: usize, pairs: &[(usize, usize)], values: &[f64]) -> Array2<f64> {
    let mut w = Array2::zeros((d, d));
    for (&(i, j), &v) in pairs.iter().zip(values) {
        w[[i, j]] = v;
        w[[j, i]] = v;
    }
    w
}

/// Estimates every pairwise weight of `data`.
pub fn weight_matrix(data: &Dataset, cfg: &KernelConfig, mode: WeightMode) -> Result<WeightMatrix> {
    let d = data.d();
    let pairs = upper_pairs(d);
    let values: Vec<f64>;
    let mut degenerate = Vec::new();
    match mode {
        WeightMode::Kde => {
            cfg.validate()?;
            let models: Vec<ColumnModel> = (0..d)
                .into_par_iter()
                .map(|j| ColumnModel::build(data.column_vec(j), cfg))
                .collect();
            degenerate = (0..d).filter(|&j| models[j].degenerate).collect();
            values = pairs
                .par_iter()
                .map(|&(i, j)| pair_mi(&models[i], &models[j], cfg.floor))
                .collect();
        }
        WeightMode::Discrete => {
            let codes = (0..d).map(|j| data.codes(j)).collect::<Result<Vec<_>>>()?;
            values = pairs
                .par_iter()
                .map(|&(i, j)| {
                    estimate_mi_discrete(&codes[i], &codes[j]).map_err(|e| e.at_pair(i, j))
                })
                .collect::<Result<_>>()?;
        }
    }
    for &j in &degenerate {
        warn!(
            "column {:?} is constant; its weights are set to 0",
            data.column_names()[j]
        );
    }
    Ok(WeightMatrix {
        w: fill_symmetric(d, &pairs, &values),
        labels: data.column_names().to_vec(),
        degenerate,
    })
}

/// Per-column state for scoring held-out rows.
struct HoldoutColumn {
    degenerate: bool,
    n_train: usize,
    /// `K((x_t - y_s) / h2) / h2`, shape `m × n`.
    kmat: Array2<f64>,
    /// Floored univariate density at each held-out point.
    uni: Vec<f64>,
}

impl HoldoutColumn {
    fn build(train: &[f64], holdout: &[f64], cfg: &KernelConfig) -> Self {
        if is_constant(train) {
            return HoldoutColumn {
                degenerate: true,
                n_train: train.len(),
                kmat: Array2::zeros((0, 0)),
                uni: Vec::new(),
            };
        }
        let (h1, h2) = cfg.bandwidths(train);
        let k = cfg.kernel;
        let kmat = Array2::from_shape_fn((holdout.len(), train.len()), |(s, t)| {
            k.eval((train[t] - holdout[s]) / h2) / h2
        });
        let uni = holdout
            .iter()
            .map(|&y| kde_raw(train, k, h1, y).max(cfg.floor))
            .collect();
        HoldoutColumn {
            degenerate: false,
            n_train: train.len(),
            kmat,
            uni,
        }
    }
}

fn pair_holdout(a: &HoldoutColumn, b: &HoldoutColumn, floor: f64) -> f64 {
    if a.degenerate || b.degenerate {
        return 0.0;
    }
    let n = a.n_train as f64;
    let m = a.uni.len();
    let mut total = 0.0;
    for s in 0..m {
        let ra = a.kmat.row(s);
        let rb = b.kmat.row(s);
        let joint: f64 = ra.iter().zip(rb.iter()).map(|(x, y)| x * y).sum::<f64>() / n;
        total += (joint.max(floor) / (a.uni[s] * b.uni[s])).ln();
    }
    total / m as f64
}

/// Average held-out log-ratio `log p̂_ij / (p̂_i p̂_j)` of one edge, with the
/// densities fitted on the training columns.
pub fn pairwise_holdout_term(
    train_a: &[f64],
    train_b: &[f64],
    holdout_a: &[f64],
    holdout_b: &[f64],
    cfg: &KernelConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_pair(train_a, train_b)?;
    check_pair(holdout_a, holdout_b)?;
    let a = HoldoutColumn::build(train_a, holdout_a, cfg);
    let b = HoldoutColumn::build(train_b, holdout_b, cfg);
    Ok(pair_holdout(&a, &b, cfg.floor))
}

/// Held-out log-likelihood contribution of every candidate edge.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutTerms {
    terms: Array2<f64>,
}

impl HoldoutTerms {
    pub fn new(terms: Array2<f64>) -> Result<Self> {
        let (r, c) = terms.dim();
        if r != c {
            return Err(Error::contract(format!("held-out term matrix is {r}×{c}")));
        }
        for i in 0..r {
            for j in (i + 1)..r {
                if terms[[i, j]] != terms[[j, i]] || terms[[i, j]].is_nan() {
                    return Err(Error::contract(format!(
                        "held-out terms not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(HoldoutTerms { terms })
    }

    pub fn d(&self) -> usize {
        self.terms.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.terms[[i, j]]
    }

    /// Terms for each edge of a trace, in insertion order.
    pub fn along(&self, trace: &EdgeTrace) -> Result<Vec<f64>> {
        trace
            .edges()
            .map(|e| {
                if e.j >= self.d() {
                    Err(Error::contract(format!(
                        "no held-out term for edge ({}, {})",
                        e.i + 1,
                        e.j + 1
                    )))
                } else {
                    Ok(self.get(e.i, e.j))
                }
            })
            .collect()
    }
}

/// Computes [`pairwise_holdout_term`] for every pair of columns.
pub fn holdout_terms(
    train: &Dataset,
    holdout: &Dataset,
    cfg: &KernelConfig,
    mode: WeightMode,
) -> Result<HoldoutTerms> {
    if train.column_names() != holdout.column_names() {
        return Err(Error::InvalidData(
            "training and held-out columns differ".into(),
        ));
    }
    let d = train.d();
    let pairs = upper_pairs(d);
    let values: Vec<f64> = match mode {
        WeightMode::Kde => {
            cfg.validate()?;
            let cols: Vec<HoldoutColumn> = (0..d)
                .into_par_iter()
                .map(|j| HoldoutColumn::build(&train.column_vec(j), &holdout.column_vec(j), cfg))
                .collect();
            pairs
                .par_iter()
                .map(|&(i, j)| pair_holdout(&cols[i], &cols[j], cfg.floor))
                .collect()
        }
        WeightMode::Discrete => {
            let tr = (0..d).map(|j| train.codes(j)).collect::<Result<Vec<_>>>()?;
            let ho = (0..d)
                .map(|j| holdout.codes(j))
                .collect::<Result<Vec<_>>>()?;
            let m = holdout.n() as f64;
            pairs
                .par_iter()
                .map(|&(i, j)| {
                    let table = DiscreteTable::new(&tr[i], &tr[j]);
                    ho[i]
                        .iter()
                        .zip(&ho[j])
                        .map(|(&x, &y)| table.log_ratio(x, y, cfg.floor))
                        .sum::<f64>()
                        / m
                })
                .collect()
        }
    };
    Ok(HoldoutTerms {
        terms: fill_symmetric(d, &pairs, &values),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::ContinuousCDF;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn uniforms(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random::<f64>()).collect()
    }

    fn fixed(h: f64) -> KernelConfig {
        KernelConfig {
            h1: Bandwidth::Fixed(h),
            h2: Bandwidth::Fixed(h),
            ..Default::default()
        }
    }

    #[test]
    fn univariate_at_kernel_center() {
        let v = kde_univariate(&[0.0], &fixed(1.0), 0.0).unwrap();
        assert!(close(v, INV_SQRT_2PI, 1e-15));
        let v = kde_univariate(&[-1.0, 1.0], &fixed(1.0), 0.0).unwrap();
        assert!(close(v, 0.241_970_724_519_143_37, 1e-15));
    }

    #[test]
    fn univariate_uniform_density_near_one() {
        let x = uniforms(1000, 3);
        let v = kde_univariate(&x, &KernelConfig::default(), 0.5).unwrap();
        assert!(close(v, 1.0, 0.1), "{v}");
    }

    #[test]
    fn bivariate_center_and_floor() {
        let cfg = fixed(1.0);
        let v = kde_bivariate(&[0.0], &[0.0], &cfg, 0.0, 0.0).unwrap();
        assert!(close(v, 1.0 / (2.0 * std::f64::consts::PI), 1e-15));
        let v = kde_bivariate(&[0.0], &[0.0], &cfg, 50.0, 0.0).unwrap();
        assert_eq!(v, cfg.floor);
    }

    #[test]
    fn bivariate_independent_uniforms_near_one() {
        let a = uniforms(2000, 5);
        let b = uniforms(2000, 6);
        let cfg = KernelConfig::default();
        let mut total = 0.0;
        for xa in [0.3, 0.5, 0.7] {
            for xb in [0.3, 0.5, 0.7] {
                total += kde_bivariate(&a, &b, &cfg, xa, xb).unwrap();
            }
        }
        let v = total / 9.0;
        assert!(close(v, 1.0, 0.1), "{v}");
    }

    #[test]
    fn errors_on_nonfinite_and_zero_bandwidth() {
        let cfg = KernelConfig::default();
        assert!(matches!(
            kde_univariate(&[0.0, f64::INFINITY], &cfg, 0.0),
            Err(Error::NonFinite { row: 1, .. })
        ));
        assert!(matches!(
            kde_univariate(&[2.0, 2.0, 2.0], &cfg, 0.0),
            Err(Error::Config(_))
        ));
        assert!(kde_univariate(&[1.0], &fixed(0.0), 0.0).is_err());
        let bad = KernelConfig {
            grid_points: 8,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn kde_integrates_to_one_on_grid() {
        for kernel in [Kernel::Gaussian, Kernel::Epanechnikov] {
            let cfg = KernelConfig {
                kernel,
                ..Default::default()
            };
            let a = uniforms(500, 11);
            let b: Vec<f64> = uniforms(500, 12)
                .iter()
                .zip(&a)
                .map(|(u, v)| u + v)
                .collect();
            let ma = ColumnModel::build(a, &cfg);
            let mb = ColumnModel::build(b, &cfg);
            assert!(close(ma.mass(), 1.0, 0.01), "{}", ma.mass());
            assert!(close(mb.mass(), 1.0, 0.01), "{}", mb.mass());
            let p = joint_grid(&ma, &mb, cfg.floor);
            let mut mass = 0.0;
            for x in 0..cfg.grid_points {
                for y in 0..cfg.grid_points {
                    mass += ma.trap[x] * mb.trap[y] * p[[x, y]];
                }
            }
            assert!(close(mass, 1.0, 0.02), "{mass}");
        }
    }

    #[test]
    fn mi_of_permuted_copy_is_small() {
        let a = uniforms(2000, 21);
        let mut b = a.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for i in (1..b.len()).rev() {
            let j = rng.random_range(0..=i);
            b.swap(i, j);
        }
        let est = estimate_mi(&a, &b, &KernelConfig::default()).unwrap();
        assert!(est.value < 0.05, "{}", est.value);
        assert!(!est.degenerate);
    }

    #[test]
    fn mi_self_dependence_dominates() {
        let a = uniforms(500, 31);
        let noise = uniforms(500, 32);
        let noisy: Vec<f64> = a.iter().zip(&noise).map(|(x, e)| x + 0.3 * e).collect();
        let cfg = KernelConfig::default();
        let same = estimate_mi(&a, &a, &cfg).unwrap().value;
        let other = estimate_mi(&a, &noisy, &cfg).unwrap().value;
        assert!(same > 0.5 && same >= other, "{same} vs {other}");
    }

    #[test]
    fn constant_column_is_flagged() {
        let a = uniforms(50, 1);
        let c = vec![0.3; 50];
        let cfg = KernelConfig::default();
        let est = estimate_mi(&a, &c, &cfg).unwrap();
        assert_eq!(est.value, 0.0);
        assert!(est.degenerate);
        let h = estimate_entropy(&c, &cfg).unwrap();
        assert_eq!(h.value, 0.0);
        assert!(h.degenerate);
    }

    #[test]
    fn entropy_of_uniform_and_scaling() {
        let cfg = KernelConfig::default();
        let x = uniforms(4000, 41);
        let h = estimate_entropy(&x, &cfg).unwrap().value;
        // Entropy of U(0,1) smoothed by the kernel: p(x) = Φ(x/b) − Φ((x−1)/b).
        let b = cfg.bandwidths(&x).0;
        let phi = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        let steps = 20_000;
        let (lo, hi) = (-8.0 * b, 1.0 + 8.0 * b);
        let dx = (hi - lo) / steps as f64;
        let smoothed: f64 = (0..=steps)
            .map(|k| {
                let t = lo + k as f64 * dx;
                let p = phi.cdf(t / b) - phi.cdf((t - 1.0) / b);
                if p > 0.0 {
                    -p * p.ln() * dx
                } else {
                    0.0
                }
            })
            .sum();
        assert!(close(h, smoothed, 0.03), "{h} vs {smoothed}");
        let scaled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let h2 = estimate_entropy(&scaled, &cfg).unwrap().value;
        // Scaling shifts the integral by ln 2 times the quadrature mass.
        let mass = ColumnModel::build(x.clone(), &cfg).mass();
        assert!(close(mass, 1.0, 1e-4));
        assert!(close(h2 - h, mass * 2f64.ln(), 1e-9), "{}", h2 - h);
    }

    #[test]
    fn discrete_mi_reference_values() {
        let a = [0, 0, 1, 1];
        assert!(close(
            estimate_mi_discrete(&a, &a).unwrap(),
            2f64.ln(),
            1e-15
        ));
        let b = [0, 1, 0, 1];
        assert_eq!(estimate_mi_discrete(&a, &b).unwrap(), 0.0);
        // Counts [[2, 1], [1, 2]].
        let x = [0, 0, 0, 1, 1, 1];
        let y = [0, 0, 1, 0, 1, 1];
        let oracle = 2.0 * (2.0 / 6.0) * ((2.0 / 6.0) / 0.25f64).ln()
            + 2.0 * (1.0 / 6.0) * ((1.0 / 6.0) / 0.25f64).ln();
        assert!(close(estimate_mi_discrete(&x, &y).unwrap(), oracle, 1e-15));
        assert!(estimate_mi_discrete(&x, &y[..5]).is_err());
    }

    #[test]
    fn weight_matrix_small_cases() {
        let a = uniforms(300, 51);
        let b: Vec<f64> = a
            .iter()
            .zip(uniforms(300, 52))
            .map(|(x, e)| x + e)
            .collect();
        let values = Array2::from_shape_fn((300, 2), |(t, j)| if j == 0 { a[t] } else { b[t] });
        let ds = Dataset::from_values(values).unwrap();
        let cfg = KernelConfig::default();
        let w = weight_matrix(&ds, &cfg, WeightMode::Kde).unwrap();
        assert_eq!(w.get(0, 1), estimate_mi(&a, &b, &cfg).unwrap().value);
        assert_eq!(w.get(0, 1), w.get(1, 0));
        assert_eq!(w.get(0, 0), 0.0);

        let same = Array2::from_shape_fn((300, 3), |(t, _)| a[t]);
        let w = weight_matrix(&Dataset::from_values(same).unwrap(), &cfg, WeightMode::Kde).unwrap();
        assert_eq!(w.get(0, 1), w.get(0, 2));
        assert_eq!(w.get(0, 1), w.get(1, 2));
    }

    #[test]
    fn discrete_weights_match_direct_estimate() {
        let codes = [
            [0.0, 1.0, 2.0],
            [1.0, 1.0, 0.0],
            [0.0, 0.0, 2.0],
            [1.0, 0.0, 1.0],
        ];
        let values = Array2::from_shape_fn((4, 3), |(t, j)| codes[t][j]);
        let ds = Dataset::from_values(values).unwrap();
        let w = weight_matrix(&ds, &KernelConfig::default(), WeightMode::Discrete).unwrap();
        let direct = estimate_mi_discrete(&ds.codes(0).unwrap(), &ds.codes(2).unwrap()).unwrap();
        assert_eq!(w.get(0, 2), direct);

        let bad = Dataset::from_values(Array2::from_elem((2, 2), 0.5)).unwrap();
        assert!(matches!(
            weight_matrix(&bad, &KernelConfig::default(), WeightMode::Discrete),
            Err(Error::InvalidData(_))
        ));
    }

    #[test]
    fn holdout_term_signs() {
        let cfg = KernelConfig::default();
        let a = uniforms(400, 61);
        let b: Vec<f64> = a
            .iter()
            .zip(uniforms(400, 62))
            .map(|(x, e)| x + 0.2 * e)
            .collect();
        assert!(pairwise_holdout_term(&a, &b, &a, &b, &cfg).unwrap() > 0.0);

        let x = uniforms(2000, 63);
        let y = uniforms(2000, 64);
        let hx = uniforms(1000, 65);
        let hy = uniforms(1000, 66);
        let t = pairwise_holdout_term(&x, &y, &hx, &hy, &cfg).unwrap();
        assert!(t.abs() < 0.05, "{t}");
    }

    #[test]
    fn weight_matrix_rejects_asymmetry() {
        let mut w = Array2::zeros((2, 2));
        w[[0, 1]] = 1.0;
        assert!(WeightMatrix::new(w, vec!["a".into(), "b".into()]).is_err());
    }

    proptest! {
        #[test]
        fn mi_is_symmetric_and_nonnegative(seed in 0u64..1000, n in 5usize..60) {
            let a = uniforms(n, seed);
            let b: Vec<f64> = uniforms(n, seed + 7).iter().zip(&a).map(|(x, y)| x * y).collect();
            let cfg = KernelConfig { grid_points: 32, ..Default::default() };
            let ab = estimate_mi(&a, &b, &cfg).unwrap().value;
            let ba = estimate_mi(&b, &a, &cfg).unwrap().value;
            prop_assert_eq!(ab, ba);
            prop_assert!(ab >= 0.0);
        }

        #[test]
        fn discrete_mi_nonnegative(pairs in proptest::collection::vec((0i64..4, 0i64..3), 1..80)) {
            let (a, b): (Vec<i64>, Vec<i64>) = pairs.into_iter().unzip();
            let mi = estimate_mi_discrete(&a, &b).unwrap();
            prop_assert!(mi >= -1e-12);
            prop_assert!((mi - estimate_mi_discrete(&b, &a).unwrap()).abs() < 1e-12);
        }
    }
}
