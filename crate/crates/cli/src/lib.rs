//! Argument parsing and subcommand dispatch for the `cutoff-lab` binary.
//!
//! Every subcommand writes CSV with a fixed header to `--out` (or stdout).
//! Exit codes: 0 success, 1 a checked inequality failed, 2 bad input or a
//! failed computation. Errors print one line to stderr.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use cutoff_lab::hitting::{hitting_moments, return_moments, HittingMoments};
use cutoff_lab::mixing::{mix_profile, mixing_time_with, DEFAULT_EPS_GRID, DEFAULT_STEP_CAP};
use cutoff_lab::simulate::{sample_hitting_with, sample_rs_with};
use cutoff_lab::spectral::{decomposed_spectrum, dense_spectrum, lambda2};
use cutoff_lab::tree::{enumerate_profiles, explicit_tree, oracle_cap_from_env};
use cutoff_lab::verify::{
    check_corpus, cutoff_table, CutoffRow, FamilySpec, VerifyOptions, VerifyReport, CHECK_NAMES,
};
use cutoff_lab::{build_profile, Execution, TreeProfile, VertexPair};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Eigenvalues closer than this are printed as one row.
pub const SPECTRUM_MERGE_TOL: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{0}")]
    Lab(#[from] cutoff_lab::Error),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

/// Parse failure; `help` is set for `--help`/`--version`, which exit 0.
#[derive(Debug)]
pub struct UsageError {
    pub message: String,
    pub help: bool,
}

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "cutoff-lab",
    version,
    about = "Exact mixing, spectral and hitting-time analysis of lazy walks on spherically symmetric trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Largest tree (vertex count) for brute-force oracles [env: CUTOFFLAB_ORACLE_CAP]
    #[arg(long, global = true)]
    oracle_cap: Option<u64>,
    /// Worker threads; 1 runs sequentially [default: available parallelism]
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,
    /// Write CSV here instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TreeArgs {
    /// Tree spec file, e.g. {"children":[2,2,1]}
    #[arg(long, conflicts_with = "children")]
    pub tree: Option<PathBuf>,
    /// Inline children counts, e.g. 2,2,1
    #[arg(long, value_parser = parse_children, allow_hyphen_values = true)]
    pub children: Option<Children>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Children(pub Vec<i64>);

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Per-level sizes, degrees and stationary masses
    Describe {
        #[command(flatten)]
        input: TreeArgs,
    },
    /// Transition eigenvalues with multiplicities
    Spectrum {
        #[command(flatten)]
        input: TreeArgs,
        /// Use the dense explicit-tree eigensolver instead of the decomposition
        #[arg(long)]
        dense: bool,
    },
    /// Mixing time, or the full distance profile with --profile
    Mix {
        #[command(flatten)]
        input: TreeArgs,
        #[arg(long, default_value_t = 0.25, value_parser = parse_epsilon)]
        epsilon: f64,
        /// Emit d(t) for t = 0..=horizon
        #[arg(long)]
        profile: bool,
        /// Last time step of --profile [default: t_mix(epsilon)]
        #[arg(long, requires = "profile")]
        horizon: Option<u64>,
    },
    /// Exact hitting-time or return-time moments
    Hit {
        #[command(flatten)]
        input: TreeArgs,
        /// Pair levels lx,ly,lq (lq = level of the common ancestor)
        #[arg(long, value_parser = parse_pair, conflicts_with = "return_level")]
        pair: Option<VertexPair>,
        /// Return time to a vertex at this level
        #[arg(long = "return")]
        return_level: Option<usize>,
    },
    /// Monte Carlo hitting times on the quotient chain
    Simulate {
        #[command(flatten)]
        input: TreeArgs,
        #[arg(long, value_parser = parse_pair)]
        pair: VertexPair,
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report the on-path/off-path split instead
        #[arg(long)]
        rs: bool,
    },
    /// Evaluate every inequality on a tree, a corpus, or a family
    Verify {
        #[command(flatten)]
        input: TreeArgs,
        /// All profiles with height <= H and children in 1..=C, as H,C
        #[arg(long, value_parser = parse_corpus, conflicts_with_all = ["tree", "children", "family"])]
        corpus: Option<(usize, u64)>,
        /// Family spec (file or inline JSON)
        #[arg(long, conflicts_with_all = ["tree", "children"])]
        family: Option<String>,
        /// Also write the full reports as JSON
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Cutoff diagnostics across a tree family
    Sweep {
        /// Family spec (file or inline JSON)
        #[arg(long)]
        family: String,
        /// Comma-separated epsilon grid
        #[arg(long, value_parser = parse_grid)]
        grid: Option<Grid>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub oracle_cap: u64,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

fn parse_children(s: &str) -> Result<Children, String> {
    if s.trim().is_empty() {
        return Ok(Children(Vec::new()));
    }
    s.split(',')
        .map(|t| t.trim().parse::<i64>().map_err(|e| format!("'{t}': {e}")))
        .collect::<Result<_, _>>()
        .map(Children)
}

fn parse_epsilon(s: &str) -> Result<f64, String> {
    let e: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if e > 0.0 && e < 1.0 {
        Ok(e)
    } else {
        Err(format!("{e} is not in (0, 1)"))
    }
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    s.split(',')
        .map(|t| parse_epsilon(t.trim()))
        .collect::<Result<_, _>>()
        .map(Grid)
}

fn parse_pair(s: &str) -> Result<VertexPair, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("'{t}': {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [lx, ly, lq] => Ok(VertexPair::new(lx, ly, lq)),
        _ => Err(format!("expected lx,ly,lq, got {} values", parts.len())),
    }
}

fn parse_corpus(s: &str) -> Result<(usize, u64), String> {
    let (h, c) = s
        .split_once(',')
        .ok_or_else(|| "expected max_h,max_children".to_string())?;
    Ok((
        h.trim().parse().map_err(|e| format!("max_h: {e}"))?,
        c.trim().parse().map_err(|e| format!("max_children: {e}"))?,
    ))
}

/// Parses `argv` (without the program name) into a validated config.
pub fn parse_args<I, S>(argv: I) -> Result<RunConfig, UsageError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let args = std::iter::once(std::ffi::OsString::from("cutoff-lab"))
        .chain(argv.into_iter().map(Into::into));
    let cli = Cli::try_parse_from(args).map_err(|e| {
        use clap::error::ErrorKind;
        let help = matches!(
            e.kind(),
            ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
        );
        UsageError {
            message: if help {
                e.to_string()
            } else {
                e.to_string()
                    .lines()
                    .next()
                    .unwrap_or("usage error")
                    .to_string()
            },
            help,
        }
    })?;
    let usage = |message: &str| UsageError {
        message: format!("error: {message}"),
        help: false,
    };
    match &cli.command {
        Command::Describe { input }
        | Command::Spectrum { input, .. }
        | Command::Mix { input, .. }
        | Command::Simulate { input, .. } => require_tree(input).map_err(|m| usage(&m))?,
        Command::Hit {
            input,
            pair,
            return_level,
        } => {
            require_tree(input).map_err(|m| usage(&m))?;
            if pair.is_none() && return_level.is_none() {
                return Err(usage("hit needs one of '--pair' or '--return'"));
            }
        }
        Command::Verify {
            input,
            corpus,
            family,
            ..
        } => {
            let sources = usize::from(input.tree.is_some())
                + usize::from(input.children.is_some())
                + usize::from(corpus.is_some())
                + usize::from(family.is_some());
            if sources != 1 {
                return Err(usage(
                    "verify needs exactly one of '--tree', '--children', '--corpus', '--family'",
                ));
            }
        }
        Command::Sweep { .. } => {}
    }
    Ok(RunConfig {
        command: cli.command,
        oracle_cap: cli.oracle_cap.unwrap_or_else(oracle_cap_from_env),
        threads: cli.threads.map(|t| t as usize),
        out: cli.out,
    })
}

fn require_tree(input: &TreeArgs) -> Result<(), String> {
    if input.tree.is_none() && input.children.is_none() {
        Err("one of '--tree' or '--children' is required".into())
    } else {
        Ok(())
    }
}

/// Shortest round-trip decimal, switching to exponent form for very small
/// or very large magnitudes.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load_tree(input: &TreeArgs) -> Result<TreeProfile, CliError> {
    match (&input.tree, &input.children) {
        (_, Some(Children(c))) => Ok(build_profile(c)?),
        (Some(path), None) => {
            let text = read_file(path)?;
            serde_json::from_str(&text).map_err(|e| {
                CliError::Lab(cutoff_lab::Error::Parse(format!("{}: {e}", path.display())))
            })
        }
        (None, None) => Err(CliError::Usage("no tree given".into())),
    }
}

fn load_family(spec: &str) -> Result<FamilySpec, CliError> {
    let text = if spec.trim_start().starts_with('{') {
        spec.to_string()
    } else {
        read_file(Path::new(spec))?
    };
    serde_json::from_str(&text)
        .map_err(|e| CliError::Lab(cutoff_lab::Error::Parse(format!("family spec: {e}"))))
}

/// Runs a config and returns the process exit code.
pub fn run(config: RunConfig) -> i32 {
    match execute(&config) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("cutoff-lab: {e}");
            EXIT_INPUT
        }
    }
}

fn execution(config: &RunConfig) -> Result<Execution, CliError> {
    match config.threads {
        Some(1) => Ok(Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            // a second call in the same process keeps the first pool
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
            Ok(Execution::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => Ok(Execution::Sequential),
        None => Ok(Execution::default()),
    }
}

fn writer(out: &Option<PathBuf>) -> Result<csv::Writer<Box<dyn Write>>, CliError> {
    let sink: Box<dyn Write> = match out {
        Some(path) => Box::new(io::BufWriter::new(File::create(path).map_err(
            |source| CliError::Io {
                path: path.display().to_string(),
                source,
            },
        )?)),
        None => Box::new(io::stdout().lock()),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn execute(config: &RunConfig) -> Result<i32, CliError> {
    let exec = execution(config)?;
    match &config.command {
        Command::Describe { input } => {
            let p = load_tree(input)?;
            let mut w = writer(&config.out)?;
            w.write_record([
                "level",
                "children",
                "level_size",
                "degree",
                "pi_vertex",
                "level_mass",
            ])?;
            for k in 0..=p.height() {
                let children = if k < p.height() {
                    p.children_at(k).to_string()
                } else {
                    String::new()
                };
                w.write_record([
                    k.to_string(),
                    children,
                    p.level_size(k).to_string(),
                    p.degree(k).to_string(),
                    num(p.pi_vertex(k)),
                    num(p.level_mass(k)),
                ])?;
            }
            w.flush().map_err(csv::Error::from)?;
            Ok(EXIT_OK)
        }
        Command::Spectrum { input, dense } => {
            let p = load_tree(input)?;
            let spectrum = if *dense {
                dense_spectrum(&explicit_tree(&p, config.oracle_cap)?)?
            } else {
                decomposed_spectrum(&p)?
            };
            let mut w = writer(&config.out)?;
            w.write_record(["value", "multiplicity", "source"])?;
            for e in spectrum.merged(SPECTRUM_MERGE_TOL) {
                w.write_record([
                    num(e.value),
                    e.multiplicity.to_string(),
                    spectrum.source().as_str().to_string(),
                ])?;
            }
            w.flush().map_err(csv::Error::from)?;
            Ok(EXIT_OK)
        }
        Command::Mix {
            input,
            epsilon,
            profile,
            horizon,
        } => {
            let p = load_tree(input)?;
            let t_mix = mixing_time_with(&p, *epsilon, DEFAULT_STEP_CAP, exec)?;
            let mut w = writer(&config.out)?;
            if *profile {
                let mp = mix_profile(&p, horizon.unwrap_or(t_mix), &[], exec)?;
                w.write_record(["t", "d", "argmax_level"])?;
                for (t, (d, level)) in mp.distances.iter().zip(&mp.argmax_level).enumerate() {
                    w.write_record([t.to_string(), d.to_string(), level.to_string()])?;
                }
            } else {
                let t_rel = lambda2(&p)?.t_rel;
                w.write_record(["epsilon", "t_mix", "t_rel", "ratio"])?;
                w.write_record([
                    num(*epsilon),
                    t_mix.to_string(),
                    num(t_rel),
                    num(t_mix as f64 / t_rel),
                ])?;
            }
            w.flush().map_err(csv::Error::from)?;
            Ok(EXIT_OK)
        }
        Command::Hit {
            input,
            pair,
            return_level,
        } => {
            let p = load_tree(input)?;
            let (kind, levels, m): (&str, [usize; 3], HittingMoments) = match (pair, return_level) {
                (Some(pair), _) => (
                    "hit",
                    [pair.lx, pair.ly, pair.lq],
                    hitting_moments(&p, pair)?,
                ),
                (None, Some(l)) => ("return", [*l; 3], return_moments(&p, *l)?),
                (None, None) => return Err(CliError::Usage("no query".into())),
            };
            let mut w = writer(&config.out)?;
            w.write_record(["kind", "lx", "ly", "lq", "E", "Var", "Var_over_E2"])?;
            w.write_record([
                kind.to_string(),
                levels[0].to_string(),
                levels[1].to_string(),
                levels[2].to_string(),
                num(m.mean),
                num(m.variance),
                num(m.concentration()),
            ])?;
            w.flush().map_err(csv::Error::from)?;
            Ok(EXIT_OK)
        }
        Command::Simulate {
            input,
            pair,
            samples,
            seed,
            rs,
        } => {
            let p = load_tree(input)?;
            let mut w = writer(&config.out)?;
            if *rs {
                let s = sample_rs_with(&p, pair, *samples, *seed, exec)?;
                w.write_record([
                    "count",
                    "seed",
                    "mean_r",
                    "mean_s",
                    "std_error_s",
                    "variance_s",
                    "variance_s_std_error",
                    "covariance",
                    "covariance_std_error",
                    "offpath_empty",
                ])?;
                w.write_record([
                    s.count.to_string(),
                    s.seed.to_string(),
                    num(s.mean_r),
                    num(s.mean_s),
                    num(s.std_error_s),
                    num(s.variance_s),
                    num(s.variance_s_std_error),
                    num(s.covariance),
                    num(s.covariance_std_error),
                    s.offpath_empty.to_string(),
                ])?;
            } else {
                let s = sample_hitting_with(&p, pair, *samples, *seed, exec)?;
                let exact = hitting_moments(&p, pair)?;
                w.write_record(["count", "seed", "mean", "variance", "std_error", "exact_E"])?;
                w.write_record([
                    s.count.to_string(),
                    s.seed.to_string(),
                    num(s.mean),
                    num(s.variance),
                    num(s.std_error),
                    num(exact.mean),
                ])?;
            }
            w.flush().map_err(csv::Error::from)?;
            Ok(EXIT_OK)
        }
        Command::Verify {
            input,
            corpus,
            family,
            json,
        } => {
            let profiles = match (corpus, family) {
                (Some((h, c)), _) => enumerate_profiles(*h, *c)?,
                (None, Some(spec)) => load_family(spec)?.members()?,
                (None, None) => vec![load_tree(input)?],
            };
            let options = VerifyOptions {
                oracle_cap: config.oracle_cap,
                ..VerifyOptions::default()
            };
            let reports = check_corpus(&profiles, &options, exec)
                .into_iter()
                .collect::<Result<Vec<_>, _>>()?;
            write_reports(&reports, &config.out)?;
            if let Some(path) = json {
                let text = serde_json::to_string_pretty(&reports).expect("reports serialise");
                std::fs::write(path, text + "\n").map_err(|source| CliError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
            }
            let failed: Vec<&VerifyReport> = reports.iter().filter(|r| !r.all_pass()).collect();
            if failed.is_empty() {
                Ok(EXIT_OK)
            } else {
                let first = failed[0];
                let names: Vec<&str> = first.failures().iter().map(|c| c.name.as_str()).collect();
                eprintln!(
                    "cutoff-lab: {} of {} trees failed; first: {} ({})",
                    failed.len(),
                    reports.len(),
                    first.tree,
                    names.join(", ")
                );
                Ok(EXIT_VIOLATION)
            }
        }
        Command::Sweep { family, grid } => {
            let members = load_family(family)?.members()?;
            let grid = grid
                .as_ref()
                .map_or_else(|| DEFAULT_EPS_GRID.to_vec(), |g| g.0.clone());
            let rows = cutoff_table(&members, &grid, exec)?;
            write_cutoff_rows(&rows, &grid, &config.out)?;
            let bad = rows.iter().filter(|r| !r.bounded || !r.monotone).count();
            if bad == 0 {
                Ok(EXIT_OK)
            } else {
                eprintln!("cutoff-lab: {bad} rows break the ratio bound or monotonicity");
                Ok(EXIT_VIOLATION)
            }
        }
    }
}

/// Header of the `verify` CSV.
pub fn verify_header() -> Vec<String> {
    let mut header: Vec<String> = [
        "tree",
        "vertices",
        "height",
        "t_mix",
        "t_rel",
        "ratio",
        "min_concentration",
        "worst_start_level",
        "pass",
        "failed_checks",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(CHECK_NAMES.iter().map(|n| format!("{n}_margin")));
    header
}

fn write_reports(reports: &[VerifyReport], out: &Option<PathBuf>) -> Result<(), CliError> {
    let mut w = writer(out)?;
    w.write_record(verify_header())?;
    for r in reports {
        let failed: Vec<&str> = r.failures().iter().map(|c| c.name.as_str()).collect();
        let mut row = vec![
            r.tree.clone(),
            r.vertices.to_string(),
            r.height.to_string(),
            r.t_mix.to_string(),
            num(r.t_rel),
            num(r.ratio),
            num(r.min_concentration),
            r.worst_start_level.to_string(),
            r.all_pass().to_string(),
            failed.join(";"),
        ];
        row.extend(r.checks.iter().map(|c| {
            if c.instances == 0 {
                String::new()
            } else {
                num(c.margin)
            }
        }));
        w.write_record(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Header of the `sweep` CSV for a given grid.
pub fn sweep_header(grid: &[f64]) -> Vec<String> {
    let mut eps = grid.to_vec();
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    let mut header: Vec<String> = [
        "index",
        "tree",
        "height",
        "vertices",
        "t_rel",
        "t_mix_quarter",
        "quarter_ratio",
        "bounded",
        "monotone",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(eps.iter().map(|e| format!("t_mix_{e}")));
    header.extend(eps.iter().map(|e| format!("t_mix_over_t_rel_{e}")));
    header.extend(
        eps.iter()
            .filter(|&&e| e < 0.5 && eps.iter().any(|&o| (o - (1.0 - e)).abs() < 1e-12))
            .map(|e| format!("window_{e}")),
    );
    header
}

fn write_cutoff_rows(
    rows: &[CutoffRow],
    grid: &[f64],
    out: &Option<PathBuf>,
) -> Result<(), CliError> {
    let mut w = writer(out)?;
    w.write_record(sweep_header(grid))?;
    for r in rows {
        let mut row = vec![
            r.index.to_string(),
            r.tree.clone(),
            r.height.to_string(),
            r.vertices.to_string(),
            num(r.t_rel),
            r.t_mix_quarter.to_string(),
            num(r.t_mix_quarter as f64 / r.t_rel),
            r.bounded.to_string(),
            r.monotone.to_string(),
        ];
        row.extend(r.t_mix.iter().map(u64::to_string));
        row.extend(r.product_ratios.iter().map(|&q| num(q)));
        row.extend(r.window_ratios.iter().map(|&(_, q)| num(q)));
        w.write_record(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_config() {
        let c = parse_args(["verify", "--corpus", "5,3"]).unwrap();
        assert!(matches!(
            c.command,
            Command::Verify {
                corpus: Some((5, 3)),
                ..
            }
        ));
    }

    #[test]
    fn mix_config() {
        let c = parse_args(["mix", "--tree", "t.json", "--epsilon", "0.25"]).unwrap();
        match c.command {
            Command::Mix { input, epsilon, .. } => {
                assert_eq!(input.tree, Some(PathBuf::from("t.json")));
                assert_eq!(epsilon, 0.25);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_epsilon_names_flag() {
        let e = parse_args(["mix", "--epsilon", "1.5"]).unwrap_err();
        assert!(!e.help);
        assert!(e.message.contains("--epsilon"), "{}", e.message);
        assert_eq!(e.message.lines().count(), 1);
    }

    #[test]
    fn verify_needs_one_source() {
        assert!(parse_args(["verify"]).is_err());
        assert!(parse_args(["verify", "--corpus", "2,2", "--children", "1"]).is_err());
        assert!(parse_args(["hit", "--children", "1,1"]).is_err());
        assert!(parse_args(["hit", "--children", "1,1", "--pair", "2,0"]).is_err());
    }

    #[test]
    fn help_is_not_an_error() {
        assert!(parse_args(["--help"]).unwrap_err().help);
    }

    #[test]
    fn sweep_header_pairs_window_columns() {
        let h = sweep_header(&[0.75, 0.25, 0.1]);
        assert!(h.contains(&"window_0.25".to_string()));
        assert!(!h.contains(&"window_0.1".to_string()));
        assert_eq!(h[9], "t_mix_0.1");
    }
}
