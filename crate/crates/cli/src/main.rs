//! `shellwalk`: experiment harness over the shellwalk library.  One manifest
//! file describes one experiment; every run writes columnar plot data plus a
//! `summary.json`, all stamped with the manifest digest.  Exit codes: 0 on
//! success, 2 on validation failure, 3 on budget exhaustion.

mod emit;
mod manifest;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use manifest::{CliError, Manifest, PointSpec};

#[derive(Parser)]
#[command(
    name = "shellwalk",
    version,
    about = "Orbit, spectral, and equidistribution experiments for matrix groups on the torus"
)]
struct Cli {
    /// Fix the data-parallel thread count (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a manifest file (any kind).
    Run {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Enumerate a metric ball and tabulate its growth.
    Enumerate(EnumerateArgs),
    /// Count orbit approximations `d(g.x, y) < |g|^-alpha` per radius.
    Exponent(ExponentArgs),
    /// Solve a shrinking-target problem and record witnesses.
    Shrink(ShrinkArgs),
    /// Certified lower bounds for shell-averaging operator norms.
    Spectral(SpectralArgs),
    /// Column-sum norm certificates for the boundary-model operators.
    Boundary(BoundaryArgs),
    /// Walk pushforwards: Fourier decay, equidistribution bound, discrepancy.
    Discrepancy(DiscrepancyArgs),
    /// Exact and Monte Carlo character averages over shells.
    Ergodic(ErgodicArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Manifest file; excludes every parameter flag.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Group document path (flag mode).
    #[arg(long)]
    group: Option<PathBuf>,
    /// Output directory (flag mode).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EnumerateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    radius: Option<u32>,
    #[arg(long)]
    max_elements: Option<u64>,
}

#[derive(Args)]
struct ExponentArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    radius: Option<u32>,
    /// Seed for a uniform random base point.
    #[arg(long)]
    x_seed: Option<u64>,
    /// Base point coordinates, comma separated (e.g. `1/3,1/7`).
    #[arg(long)]
    x: Option<String>,
    /// Exponents, comma separated.
    #[arg(long)]
    alphas: Option<String>,
    #[arg(long)]
    max_elements: Option<u64>,
}

#[derive(Args)]
struct ShrinkArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    max_radius: Option<u32>,
    #[arg(long)]
    x_seed: Option<u64>,
    #[arg(long)]
    x: Option<String>,
    /// Power-law exponent of the target radius.
    #[arg(long)]
    psi_a: Option<f64>,
    /// Logarithmic correction exponent.
    #[arg(long)]
    psi_b: Option<f64>,
    /// Target family: `ball` or `box`.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    max_elements: Option<u64>,
}

#[derive(Args)]
struct SpectralArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Shell radii, comma separated (e.g. `2,4,6`).
    #[arg(long)]
    lengths: Option<String>,
    #[arg(long)]
    window: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Args)]
struct BoundaryArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    rank: Option<usize>,
    /// `r:n` pairs, comma separated (e.g. `4:2,5:3`).
    #[arg(long)]
    pairs: Option<String>,
    #[arg(long)]
    dense_budget: Option<u64>,
}

#[derive(Args)]
struct DiscrepancyArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    steps: Option<u32>,
    #[arg(long)]
    window: Option<u32>,
    #[arg(long)]
    x_seed: Option<u64>,
    #[arg(long)]
    x: Option<String>,
    #[arg(long)]
    walk_budget: Option<usize>,
}

#[derive(Args)]
struct ErgodicArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    radius: Option<u32>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `b1:b2` frequency pairs, comma separated (e.g. `1:0,1:1`).
    #[arg(long)]
    freqs: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(summary) => {
            println!("summary: {}", summary.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(cli: Cli) -> Result<PathBuf, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::validation("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Other(format!("thread pool: {e}")))?;
    }
    let (manifest, base) = build_manifest(cli.command)?;
    run::run_experiment(&manifest, &base, cli.threads)
}

/// Turns the invocation into a manifest: either loaded from a file or
/// assembled from flags (flags and manifests are mutually exclusive).
fn build_manifest(command: Command) -> Result<(Manifest, PathBuf), CliError> {
    match command {
        Command::Run { manifest } => Manifest::from_file(&manifest),
        Command::Enumerate(a) => {
            let mut params = Map::new();
            put(&mut params, "radius", a.radius);
            put(&mut params, "max_elements", a.max_elements);
            assemble("enumerate", a.common, params)
        }
        Command::Exponent(a) => {
            let mut params = Map::new();
            put(&mut params, "radius", a.radius);
            put_point(&mut params, "x", a.x_seed, a.x.as_deref())?;
            if let Some(text) = a.alphas.as_deref() {
                params.insert("alphas".into(), json!(parse_list::<f64>(text, "alphas")?));
            }
            put(&mut params, "max_elements", a.max_elements);
            assemble("exponent", a.common, params)
        }
        Command::Shrink(a) => {
            let mut params = Map::new();
            put(&mut params, "max_radius", a.max_radius);
            put_point(&mut params, "x", a.x_seed, a.x.as_deref())?;
            put(&mut params, "psi_a", a.psi_a);
            put(&mut params, "psi_b", a.psi_b);
            put(&mut params, "target", a.target);
            put(&mut params, "max_elements", a.max_elements);
            assemble("shrink", a.common, params)
        }
        Command::Spectral(a) => {
            let mut params = Map::new();
            if let Some(text) = a.lengths.as_deref() {
                params.insert("lengths".into(), json!(parse_list::<u32>(text, "lengths")?));
            }
            put(&mut params, "window", a.window);
            put(&mut params, "seed", a.seed);
            put(&mut params, "max_iter", a.max_iter);
            assemble("spectral", a.common, params)
        }
        Command::Boundary(a) => {
            let mut params = Map::new();
            put(&mut params, "rank", a.rank);
            if let Some(text) = a.pairs.as_deref() {
                params.insert("pairs".into(), json!(parse_pairs::<u32>(text, "pairs")?));
            }
            put(&mut params, "dense_budget", a.dense_budget);
            assemble("boundary", a.common, params)
        }
        Command::Discrepancy(a) => {
            let mut params = Map::new();
            put(&mut params, "steps", a.steps);
            put(&mut params, "window", a.window);
            put_point(&mut params, "x", a.x_seed, a.x.as_deref())?;
            put(&mut params, "walk_budget", a.walk_budget);
            assemble("discrepancy", a.common, params)
        }
        Command::Ergodic(a) => {
            let mut params = Map::new();
            put(&mut params, "radius", a.radius);
            put(&mut params, "samples", a.samples);
            put(&mut params, "seed", a.seed);
            if let Some(text) = a.freqs.as_deref() {
                let pairs = parse_pairs::<i64>(text, "freqs")?;
                let freqs: Vec<Vec<i64>> = pairs.into_iter().map(|(a, b)| vec![a, b]).collect();
                params.insert("freqs".into(), json!(freqs));
            }
            assemble("ergodic", a.common, params)
        }
    }
}

fn put<T: serde::Serialize>(params: &mut Map<String, Value>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        params.insert(key.into(), json!(v));
    }
}

fn put_point(
    params: &mut Map<String, Value>,
    key: &str,
    seed: Option<u64>,
    coords: Option<&str>,
) -> Result<(), CliError> {
    let spec = match (seed, coords) {
        (Some(_), Some(_)) => {
            return Err(CliError::validation(format!(
                "give --{key}-seed or --{key}, not both"
            )))
        }
        (Some(s), None) => PointSpec::from_seed(s),
        (None, Some(text)) => PointSpec {
            coords: Some(text.split(',').map(|c| c.trim().to_string()).collect()),
            seed: None,
        },
        (None, None) => return Ok(()),
    };
    params.insert(key.into(), serde_json::to_value(spec).expect("point spec serializes"));
    Ok(())
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, CliError> {
    text.split(',')
        .map(|c| {
            c.trim()
                .parse::<T>()
                .map_err(|_| CliError::validation(format!("--{what}: bad entry {:?}", c.trim())))
        })
        .collect()
}

fn parse_pairs<T: std::str::FromStr + Copy>(
    text: &str,
    what: &str,
) -> Result<Vec<(T, T)>, CliError> {
    text.split(',')
        .map(|c| {
            let (a, b) = c
                .trim()
                .split_once(':')
                .ok_or_else(|| {
                    CliError::validation(format!("--{what}: entry {:?} needs the form a:b", c.trim()))
                })?;
            let pa = a.trim().parse::<T>().map_err(|_| {
                CliError::validation(format!("--{what}: bad entry {:?}", a.trim()))
            })?;
            let pb = b.trim().parse::<T>().map_err(|_| {
                CliError::validation(format!("--{what}: bad entry {:?}", b.trim()))
            })?;
            Ok((pa, pb))
        })
        .collect()
}

fn assemble(
    kind: &str,
    common: CommonArgs,
    params: Map<String, Value>,
) -> Result<(Manifest, PathBuf), CliError> {
    if let Some(mpath) = common.manifest {
        if common.group.is_some() || common.out.is_some() || !params.is_empty() {
            return Err(CliError::validation(
                "--manifest excludes --group, --out, and the parameter flags",
            ));
        }
        let (m, base) = Manifest::from_file(&mpath)?;
        if m.kind != kind {
            return Err(CliError::validation(format!(
                "manifest kind {:?} does not match the {kind:?} subcommand",
                m.kind
            )));
        }
        Ok((m, base))
    } else {
        let out = common
            .out
            .ok_or_else(|| CliError::validation("--out is required without --manifest"))?;
        let manifest = Manifest {
            kind: kind.into(),
            group: common.group.map(|p| p.to_string_lossy().into_owned()),
            out_dir: out.to_string_lossy().into_owned(),
            params: Value::Object(params),
        };
        manifest.check_kind()?;
        Ok((manifest, PathBuf::from(".")))
    }
}
