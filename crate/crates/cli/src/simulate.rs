use std::path::PathBuf;

use anyhow::Result;
use clap::ValueEnum;
use forestprior::datagen::{
    gen_graph, gen_multi, sample_tree_copula, CopulaFamily, CopulaSpec, GraphGenSpec,
    MultiGraphSpec,
};
use forestprior::io::{write_dataset, write_edge_list, EdgeList};
use serde_json::json;

use crate::manifest::{OutDir, RunManifest};
use crate::{usage, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GraphArg {
    Stars,
    ScaleFree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CopulaArg {
    Gaussian,
    T,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Graph family of the true forest(s).
    #[arg(long, value_enum)]
    pub graph: GraphArg,

    /// Number of vertices (scale-free graphs).
    #[arg(long)]
    pub d: Option<usize>,

    /// Number of stars (star graphs).
    #[arg(long)]
    pub stars: Option<usize>,

    /// Vertices per star (star graphs).
    #[arg(long)]
    pub star_size: Option<usize>,

    /// Preferential-attachment exponent: P(attach to v) ∝ deg(v)^alpha.
    #[arg(long, default_value_t = 1.5)]
    pub alpha_pa: f64,

    /// Length of the initial chain grown before preferential attachment.
    #[arg(long, default_value_t = 4)]
    pub seed_chain: usize,

    #[arg(long, value_enum, default_value = "gaussian")]
    pub copula: CopulaArg,

    /// Edge correlation (default 0.4 for gaussian, 0.25 for t).
    #[arg(long)]
    pub rho: Option<f64>,

    /// Degrees of freedom of the t copula.
    #[arg(long, default_value_t = 1.0)]
    pub nu: f64,

    /// Training rows per unit.
    #[arg(long, default_value_t = 200)]
    pub n: usize,

    /// Held-out rows per unit.
    #[arg(long, default_value_t = 100)]
    pub n_holdout: usize,

    /// Number of related units.
    #[arg(long, default_value_t = 1)]
    pub units: usize,

    /// Shared structure across units: attachment-tree size (scale-free) or
    /// number of common stars (stars).
    #[arg(long)]
    pub shared: Option<usize>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Seed of unit `k`'s copula sample, distinct from the graph seed.
fn copula_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(k as u64 + 1)
}

pub fn unit_prefix(units: usize, k: usize) -> String {
    if units > 1 {
        format!("unit{}_", k + 1)
    } else {
        String::new()
    }
}

fn graph_spec(args: &Args) -> Result<GraphGenSpec> {
    match args.graph {
        GraphArg::Stars => {
            let stars = args
                .stars
                .ok_or_else(|| usage("--graph stars requires --stars"))?;
            let size = args
                .star_size
                .ok_or_else(|| usage("--graph stars requires --star-size"))?;
            if args.d.is_some_and(|d| d != stars * size) {
                return Err(usage("--d must equal --stars × --star-size"));
            }
            Ok(GraphGenSpec::stars(stars, size, args.seed))
        }
        GraphArg::ScaleFree => {
            let d = args
                .d
                .ok_or_else(|| usage("--graph scale-free requires --d"))?;
            let mut spec = GraphGenSpec::scale_free(d, args.alpha_pa, args.seed);
            if let forestprior::datagen::GraphKind::ScaleFree { seed_chain_len, .. } =
                &mut spec.kind
            {
                *seed_chain_len = args.seed_chain;
            }
            Ok(spec)
        }
    }
}

pub fn run(args: &Args, argv: Vec<String>) -> Result<Outcome> {
    let base = graph_spec(args)?;
    base.validate().map_err(|e| usage(e.to_string()))?;
    let multi = match (args.units, args.shared) {
        (0, _) => return Err(usage("--units must be at least 1")),
        (1, None) => None,
        (1, Some(_)) => return Err(usage("--shared needs --units > 1")),
        (_, None) => return Err(usage("--units > 1 requires --shared")),
        (units, Some(shared)) => {
            let spec = MultiGraphSpec {
                units,
                base,
                shared,
            };
            spec.validate().map_err(|e| usage(e.to_string()))?;
            Some(spec)
        }
    };
    let rho = args.rho.unwrap_or(match args.copula {
        CopulaArg::Gaussian => 0.4,
        CopulaArg::T => 0.25,
    });
    let family = match args.copula {
        CopulaArg::Gaussian => CopulaFamily::Gaussian { rho },
        CopulaArg::T => CopulaFamily::StudentT { rho, nu: args.nu },
    };
    if args.n < 2 || args.n_holdout < 2 {
        return Err(usage("--n and --n-holdout must be at least 2"));
    }

    let forests = match &multi {
        Some(spec) => gen_multi(spec)?,
        None => vec![gen_graph(&base)?],
    };
    let mut out = OutDir::create(&args.out)?;
    let mut copulas = Vec::new();
    for (k, tree) in forests.iter().enumerate() {
        let spec = CopulaSpec {
            family,
            n: args.n + args.n_holdout,
            rng_seed: copula_seed(args.seed, k),
        };
        spec.validate().map_err(|e| usage(e.to_string()))?;
        let data = sample_tree_copula(tree, &spec)?;
        let (train, holdout) = data.split_rows(args.n)?;
        let prefix = unit_prefix(forests.len(), k);
        write_dataset(out.file(&format!("{prefix}train.csv")), &train)?;
        write_dataset(out.file(&format!("{prefix}holdout.csv")), &holdout)?;
        let truth = EdgeList::from_forest(tree, train.column_names(), |_, _| rho);
        write_edge_list(out.file(&format!("{prefix}truth.tsv")), &truth)?;
        copulas.push(spec);
    }

    let config = json!({
        "graph": base,
        "multi": multi,
        "copulas": copulas,
        "n_train": args.n,
        "n_holdout": args.n_holdout,
    });
    RunManifest::new("simulate", argv, config).finish(&out)?;
    println!(
        "wrote {} unit(s) with {} vertices to {}",
        forests.len(),
        base.d,
        args.out.display()
    );
    Ok(Outcome::Done)
}
