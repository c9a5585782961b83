//! Synthetic graphs and tree-structured copula samples.

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::Forest;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphKind {
    /// Preferential attachment grown from a chain of `seed_chain_len` vertices;
    /// a new vertex attaches to `i` with probability `∝ δ_i^exponent`.
    ScaleFree {
        exponent: f64,
        seed_chain_len: usize,
    },
    /// Disjoint stars of `star_size` vertices each.
    Stars { num_stars: usize, star_size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphGenSpec {
    pub kind: GraphKind,
    pub d: usize,
    pub rng_seed: u64,
}

impl GraphGenSpec {
    pub fn scale_free(d: usize, exponent: f64, rng_seed: u64) -> Self {
        GraphGenSpec {
            kind: GraphKind::ScaleFree {
                exponent,
                seed_chain_len: 4,
            },
            d,
            rng_seed,
        }
    }

    pub fn stars(num_stars: usize, star_size: usize, rng_seed: u64) -> Self {
        GraphGenSpec {
            kind: GraphKind::Stars {
                num_stars,
                star_size,
            },
            d: num_stars * star_size,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            GraphKind::ScaleFree {
                exponent,
                seed_chain_len,
            } => {
                if seed_chain_len < 2 {
                    return Err(Error::Validation(format!(
                        "seed chain needs at least 2 vertices, got {seed_chain_len}"
                    )));
                }
                if self.d < seed_chain_len {
                    return Err(Error::Validation(format!(
                        "d = {} is smaller than the seed chain ({seed_chain_len})",
                        self.d
                    )));
                }
                if !exponent.is_finite() {
                    return Err(Error::Validation(format!("bad exponent {exponent}")));
                }
            }
            GraphKind::Stars {
                num_stars,
                star_size,
            } => {
                if num_stars == 0 || star_size == 0 {
                    return Err(Error::Validation(
                        "stars need positive count and size".into(),
                    ));
                }
                if num_stars * star_size != self.d {
                    return Err(Error::Validation(format!(
                        "{num_stars} stars of size {star_size} do not cover d = {}",
                        self.d
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Adds vertices `start..d`, each attached to one existing vertex with
/// probability proportional to its degree raised to `exponent`.
fn grow_preferential(
    edges: &mut Vec<(usize, usize)>,
    degrees: &mut [f64],
    start: usize,
    d: usize,
    exponent: f64,
    rng: &mut ChaCha8Rng,
) {
    for v in start..d {
        let weights = degrees[..v].iter().map(|&k| k.powf(exponent));
        let target = WeightedIndex::new(weights)
            .expect("existing vertices all have positive degree")
            .sample(rng);
        edges.push((target, v));
        degrees[target] += 1.0;
        degrees[v] = 1.0;
    }
}

fn seed_chain(len: usize, d: usize) -> (Vec<(usize, usize)>, Vec<f64>) {
    let edges: Vec<_> = (1..len).map(|v| (v - 1, v)).collect();
    let mut degrees = vec![0.0; d];
    for &(a, b) in &edges {
        degrees[a] += 1.0;
        degrees[b] += 1.0;
    }
    (edges, degrees)
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gen_scale_free(spec: &GraphGenSpec) -> Result<Forest> {
    spec.validate()?;
    let GraphKind::ScaleFree {
        exponent,
        seed_chain_len,
    } = spec.kind
    else {
        return Err(Error::Validation("expected a scale-free spec".into()));
    };
    let (mut edges, mut degrees) = seed_chain(seed_chain_len, spec.d);
    let mut rng = rng_for(spec.rng_seed, 0);
    grow_preferential(
        &mut edges,
        &mut degrees,
        seed_chain_len,
        spec.d,
        exponent,
        &mut rng,
    );
    Forest::from_edges(spec.d, edges)
}

fn star_edges(
    block: usize,
    star_size: usize,
    root_offset: usize,
) -> impl Iterator<Item = (usize, usize)> {
    let start = block * star_size;
    let root = start + root_offset;
    (start..start + star_size)
        .filter(move |&v| v != root)
        .map(move |v| (root, v))
}

pub fn gen_stars(spec: &GraphGenSpec) -> Result<Forest> {
    spec.validate()?;
    let GraphKind::Stars {
        num_stars,
        star_size,
    } = spec.kind
    else {
        return Err(Error::Validation("expected a stars spec".into()));
    };
    Forest::from_edges(
        spec.d,
        (0..num_stars).flat_map(|b| star_edges(b, star_size, 0)),
    )
}

pub fn gen_graph(spec: &GraphGenSpec) -> Result<Forest> {
    match spec.kind {
        GraphKind::ScaleFree { .. } => gen_scale_free(spec),
        GraphKind::Stars { .. } => gen_stars(spec),
    }
}

/// Several units sharing part of their structure. `shared` is the number of
/// vertices in the common attachment tree (scale-free) or the number of
/// common stars (stars). Randomness comes from `base.rng_seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiGraphSpec {
    pub units: usize,
    pub base: GraphGenSpec,
    pub shared: usize,
}

impl MultiGraphSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.units == 0 {
            return Err(Error::Validation("need at least one unit".into()));
        }
        match self.base.kind {
            GraphKind::ScaleFree { seed_chain_len, .. } => {
                if self.shared < seed_chain_len || self.shared > self.base.d {
                    return Err(Error::Validation(format!(
                        "shared tree size {} must lie in [{seed_chain_len}, {}]",
                        self.shared, self.base.d
                    )));
                }
            }
            GraphKind::Stars {
                num_stars,
                star_size,
            } => {
                if self.shared >= num_stars {
                    return Err(Error::Validation(format!(
                        "shared stars ({}) must be fewer than stars ({num_stars})",
                        self.shared
                    )));
                }
                if self.units > star_size {
                    return Err(Error::Validation(format!(
                        "{} units cannot have distinct roots in stars of size {star_size}",
                        self.units
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-unit forests: a common attachment tree continued independently per
/// unit, or common stars plus unit-specific stars rooted at distinct vertices.
pub fn gen_multi(spec: &MultiGraphSpec) -> Result<Vec<Forest>> {
    spec.validate()?;
    let d = spec.base.d;
    match spec.base.kind {
        GraphKind::ScaleFree {
            exponent,
            seed_chain_len,
        } => {
            let (mut edges, mut degrees) = seed_chain(seed_chain_len, d);
            let mut rng = rng_for(spec.base.rng_seed, 0);
            grow_preferential(
                &mut edges,
                &mut degrees,
                seed_chain_len,
                spec.shared,
                exponent,
                &mut rng,
            );
            (0..spec.units)
                .map(|k| {
                    let (mut e, mut deg) = (edges.clone(), degrees.clone());
                    let mut rng = rng_for(spec.base.rng_seed, k as u64 + 1);
                    grow_preferential(&mut e, &mut deg, spec.shared, d, exponent, &mut rng);
                    Forest::from_edges(d, e)
                })
                .collect()
        }
        GraphKind::Stars {
            num_stars,
            star_size,
        } => (0..spec.units)
            .map(|k| {
                let edges = (0..num_stars).flat_map(|b| {
                    let offset = if b < spec.shared { 0 } else { k };
                    star_edges(b, star_size, offset)
                });
                Forest::from_edges(d, edges)
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CopulaFamily {
    Gaussian { rho: f64 },
    StudentT { rho: f64, nu: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopulaSpec {
    pub family: CopulaFamily,
    pub n: usize,
    pub rng_seed: u64,
}

impl CopulaSpec {
    pub fn validate(&self) -> Result<()> {
        let rho = match self.family {
            CopulaFamily::Gaussian { rho } => rho,
            CopulaFamily::StudentT { rho, nu } => {
                if !(nu >= 1.0 && nu.is_finite()) {
                    return Err(Error::Validation(format!("nu must be >= 1, got {nu}")));
                }
                rho
            }
        };
        if rho.is_nan() || rho.abs() >= 1.0 {
            return Err(Error::Validation(format!("|rho| must be < 1, got {rho}")));
        }
        if self.n < 2 {
            return Err(Error::Validation(format!("need n >= 2, got {}", self.n)));
        }
        Ok(())
    }
}

/// Visit order for sequential sampling: each component from its lowest
/// vertex, then breadth-first, with every vertex after its parent.
fn traversal(tree: &Forest) -> Vec<(usize, Option<usize>)> {
    let adj = tree.neighbors();
    let mut seen = vec![false; tree.d()];
    let mut order = Vec::with_capacity(tree.d());
    for root in 0..tree.d() {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut head = order.len();
        order.push((root, None));
        while head < order.len() {
            let parent = order[head].0;
            head += 1;
            for &c in &adj[parent] {
                if !seen[c] {
                    seen[c] = true;
                    order.push((c, Some(parent)));
                }
            }
        }
    }
    order
}

/// Latent Gaussian or Student-t draws, Markov to `tree`, before mapping to
/// the copula scale. Row `r` uses its own RNG stream.
pub fn sample_tree_latent(tree: &Forest, spec: &CopulaSpec) -> Result<Array2<f64>> {
    spec.validate()?;
    let order = traversal(tree);
    let d = tree.d();
    let rows: Vec<Vec<f64>> = (0..spec.n)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_for(spec.rng_seed, r as u64);
            let mut z = vec![0.0; d];
            match spec.family {
                CopulaFamily::Gaussian { rho } => {
                    let sd = (1.0 - rho * rho).sqrt();
                    for &(v, parent) in &order {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        z[v] = match parent {
                            None => e,
                            Some(p) => rho * z[p] + sd * e,
                        };
                    }
                }
                CopulaFamily::StudentT { rho, nu } => {
                    let root = StudentT::new(nu).expect("validated nu");
                    let child = StudentT::new(nu + 1.0).expect("validated nu");
                    for &(v, parent) in &order {
                        z[v] = match parent {
                            None => root.sample(&mut rng),
                            Some(p) => {
                                let tp = z[p];
                                let scale =
                                    ((nu + tp * tp) * (1.0 - rho * rho) / (nu + 1.0)).sqrt();
                                rho * tp + scale * child.sample(&mut rng)
                            }
                        };
                    }
                }
            }
            z
        })
        .collect();
    Ok(Array2::from_shape_fn((spec.n, d), |(r, v)| rows[r][v]))
}

/// Samples with uniform(0, 1) marginals whose dependence is Markov to `tree`.
pub fn sample_tree_copula(tree: &Forest, spec: &CopulaSpec) -> Result<Dataset> {
    let mut latent = sample_tree_latent(tree, spec)?;
    match spec.family {
        CopulaFamily::Gaussian { .. } => {
            let cdf = Normal::new(0.0, 1.0).expect("standard normal");
            latent.mapv_inplace(|z| cdf.cdf(z));
        }
        CopulaFamily::StudentT { nu, .. } => {
            let cdf = StudentsT::new(0.0, 1.0, nu).expect("validated nu");
            latent.mapv_inplace(|t| cdf.cdf(t));
        }
    }
    Dataset::from_values(latent)
}
