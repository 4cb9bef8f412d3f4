//! `bethe`: runs the numerical experiments and writes CSV tables plus a
//! manifest per command.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 convergence failure
//! (partial output kept), 4 resource cap exceeded, 1 anything else.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bethe_core::report::{write_json, Manifest, SCHEMA_VERSION};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use config::Grid;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(bethe_core::Error),
}

impl From<bethe_core::Error> for CliError {
    fn from(e: bethe_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use bethe_core::Error::*;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(Config(_) | Domain(_) | Json(_)) => 2,
            CliError::Core(Convergence(_) | Sampling(_)) => 3,
            CliError::Core(Size(_)) => 4,
            CliError::Core(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "configuration error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "bethe", version, about = "Anderson model on the Bethe lattice: cavity estimates, finite graphs, spectral statistics")]
struct Cli {
    /// JSON or TOML configuration file (flags override its values).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, global = true, env = "BETHE_WORKERS")]
    workers: Option<usize>,
    /// Arbitrary override `path/to/key=<json>`, e.g. `mc/n_pool=20000`.
    #[arg(long = "set", global = true, value_name = "PATH=JSON")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the cavity-based commands.
#[derive(Args, Debug, Default)]
struct ModelFlags {
    #[arg(long = "K")]
    k: Option<u32>,
    /// `cauchy`, `gaussian` or `uniform` (tabulated densities go in the config file).
    #[arg(long)]
    disorder: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "n-pool")]
    n_pool: Option<usize>,
    /// Comma-separated decreasing `η` sequence for extrapolation.
    #[arg(long, value_delimiter = ',')]
    etas: Option<Vec<f64>>,
}

#[derive(Args, Debug, Default)]
struct GridFlags {
    /// Energy range `start:stop:step` (inclusive).
    #[arg(long = "E-grid", allow_hyphen_values = true)]
    e_grid: Option<String>,
    /// Explicit comma-separated energies.
    #[arg(long = "E", allow_hyphen_values = true, value_delimiter = ',')]
    energies: Option<Vec<f64>>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lyapunov exponent over an energy grid.
    Lyapunov {
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        grid: GridFlags,
    },
    /// Free-energy curve φ(s) and its extrapolation to s = 1.
    FreeEnergy {
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long = "E", allow_hyphen_values = true)]
        energy: Option<f64>,
        #[arg(long = "s", value_delimiter = ',')]
        s_values: Option<Vec<f64>>,
    },
    /// Density of states (and optionally the integrated density) over an energy grid.
    Dos {
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        grid: GridFlags,
        #[arg(long)]
        ids: bool,
    },
    /// Classify an (E, λ) grid and extract the mobility edge.
    PhaseScan {
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        grid: GridFlags,
        /// λ range `start:stop:step`.
        #[arg(long = "lambda-grid")]
        lambda_grid: Option<String>,
        #[arg(long = "no-cache")]
        no_cache: bool,
    },
    /// Gap-ratio and spacing statistics on truncated trees or random regular graphs.
    SpectralStats {
        /// `tree` or `rrg`.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long = "K")]
        k: Option<u32>,
        #[arg(long)]
        disorder: Option<String>,
        /// Comma-separated disorder strengths (rrg) or a single strength (tree).
        #[arg(long, value_delimiter = ',')]
        lambda: Option<Vec<f64>>,
        /// Graph size N (rrg) or depth L (tree).
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        realizations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Second moment of the Green function and finite-ball dynamics.
    Transport {
        #[command(flatten)]
        model: ModelFlags,
        #[arg(long = "E", allow_hyphen_values = true)]
        energy: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Resonance counts on Bethe-lattice balls.
    Resonance {
        #[arg(long = "K")]
        k: Option<u32>,
        #[arg(long)]
        disorder: Option<String>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long = "E", allow_hyphen_values = true)]
        energy: Option<f64>,
        #[arg(long)]
        realizations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Disorder thresholds and spectrum edges.
    Thresholds {
        #[arg(long = "K")]
        k: Option<u32>,
        #[arg(long)]
        disorder: Option<String>,
        #[arg(long)]
        lambda: Option<f64>,
    },
}

type Overrides = Vec<(String, Value)>;

fn disorder_value(name: &str) -> Result<Value, CliError> {
    match name {
        "cauchy" | "gaussian" | "uniform" => Ok(json!({ "kind": name })),
        other => Err(CliError::Usage(format!("unknown disorder {other:?}; use cauchy, gaussian or uniform"))),
    }
}

/// Overrides for the model flags, with `prefix` the path of the model block.
fn model_overrides(m: &ModelFlags, prefix: &str, o: &mut Overrides) -> Result<(), CliError> {
    let p = |k: &str| format!("{prefix}{k}");
    if let Some(k) = m.k {
        o.push((p("k"), json!(k)));
    }
    if let Some(d) = &m.disorder {
        o.push((p("disorder"), disorder_value(d)?));
    }
    if let Some(n) = m.n_pool {
        o.push((p("mc/n_pool"), json!(n)));
    }
    if let Some(e) = &m.etas {
        o.push((p("protocol"), json!({ "kind": "extrapolate", "etas": e, "rule": "linear" })));
    }
    Ok(())
}

fn grid_overrides(g: &GridFlags, key: &str, o: &mut Overrides) -> Result<(), CliError> {
    if let Some(r) = &g.e_grid {
        o.push((key.into(), serde_json::to_value(Grid::parse_range(r).map_err(CliError::Usage)?).expect("grid serializes")));
    }
    if let Some(e) = &g.energies {
        o.push((key.into(), json!(e)));
    }
    Ok(())
}

fn set_overrides(sets: &[String], o: &mut Overrides) -> Result<(), CliError> {
    for s in sets {
        let (path, raw) = s.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects PATH=JSON, got {s:?}")))?;
        let v = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()));
        o.push((path.into(), v));
    }
    Ok(())
}

struct Run {
    command: &'static str,
    config: Value,
    outcome: commands::Outcome,
}

fn run_with<T, F>(command: &'static str, file: Option<Value>, o: Overrides, out: &Path, f: F) -> Result<Run, CliError>
where
    T: Default + Serialize + serde::de::DeserializeOwned,
    F: FnOnce(&T, &Path) -> Result<commands::Outcome, CliError>,
{
    let cfg: T = config::resolve(file, o)?;
    let config = serde_json::to_value(&cfg).map_err(bethe_core::Error::from)?;
    let outcome = f(&cfg, out)?;
    Ok(Run { command, config, outcome })
}

fn dispatch(cli: &Cli) -> Result<Run, CliError> {
    let file = cli.config.as_deref().map(config::load_file).transpose()?;
    let out = cli.out.as_path();
    std::fs::create_dir_all(out).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out.display())))?;
    let mut o: Overrides = Vec::new();
    let r = match &cli.command {
        Command::Lyapunov { model, grid } => {
            model_overrides(model, "", &mut o)?;
            push_opt(&mut o, "lambda", model.lambda);
            push_opt(&mut o, "seed", model.seed);
            grid_overrides(grid, "energies", &mut o)?;
            set_overrides(&cli.set, &mut o)?;
            run_with("lyapunov", file, o, out, commands::lyapunov)?
        }
        Command::FreeEnergy { model, energy, s_values } => {
            model_overrides(model, "", &mut o)?;
            push_opt(&mut o, "lambda", model.lambda);
            push_opt(&mut o, "seed", model.seed);
            push_opt(&mut o, "energy", *energy);
            push_opt(&mut o, "s_values", s_values.clone());
            set_overrides(&cli.set, &mut o)?;
            run_with("free-energy", file, o, out, commands::free_energy)?
        }
        Command::Dos { model, grid, ids } => {
            model_overrides(model, "", &mut o)?;
            push_opt(&mut o, "lambda", model.lambda);
            push_opt(&mut o, "seed", model.seed);
            grid_overrides(grid, "energies", &mut o)?;
            if *ids {
                o.push(("ids".into(), json!(true)));
            }
            set_overrides(&cli.set, &mut o)?;
            run_with("dos", file, o, out, commands::dos)?
        }
        Command::PhaseScan { model, grid, lambda_grid, no_cache } => {
            model_overrides(model, "phase/", &mut o)?;
            if let Some(l) = model.lambda {
                o.push(("lambdas".into(), json!([l])));
            }
            push_opt(&mut o, "seed", model.seed);
            grid_overrides(grid, "energies", &mut o)?;
            if let Some(r) = lambda_grid {
                o.push(("lambdas".into(), serde_json::to_value(Grid::parse_range(r).map_err(CliError::Usage)?).expect("grid serializes")));
            }
            if *no_cache {
                o.push(("cache".into(), json!(false)));
            }
            set_overrides(&cli.set, &mut o)?;
            run_with("phase-scan", file, o, out, commands::phase_scan)?
        }
        Command::SpectralStats { mode, k, disorder, lambda, size, realizations, seed } => {
            let mode = mode.clone().unwrap_or_else(|| {
                file.as_ref().and_then(|f| f.get("mode")).and_then(Value::as_str).unwrap_or("rrg").to_string()
            });
            if mode != "tree" && mode != "rrg" {
                return Err(CliError::Usage(format!("mode must be tree or rrg, got {mode:?}")));
            }
            o.push(("mode".into(), json!(mode)));
            let block = if mode == "tree" { "tree/" } else { "rrg/" };
            push_opt(&mut o, &format!("{block}k"), *k);
            if let Some(d) = disorder {
                o.push((format!("{block}disorder"), disorder_value(d)?));
            }
            if let Some(l) = lambda {
                if mode == "tree" {
                    let first = *l.first().ok_or_else(|| CliError::Usage("--lambda needs a value".into()))?;
                    o.push(("tree/lambda".into(), json!(first)));
                } else {
                    o.push(("rrg/lambdas".into(), json!(l)));
                }
            }
            push_opt(&mut o, &format!("{block}{}", if mode == "tree" { "depth" } else { "n" }), *size);
            push_opt(&mut o, &format!("{block}n_realizations"), *realizations);
            push_opt(&mut o, &format!("{block}seed"), *seed);
            set_overrides(&cli.set, &mut o)?;
            run_with("spectral-stats", file, o, out, commands::spectral_stats)?
        }
        Command::Transport { model, energy, eta } => {
            model_overrides(model, "", &mut o)?;
            push_opt(&mut o, "lambda", model.lambda);
            push_opt(&mut o, "seed", model.seed);
            push_opt(&mut o, "energy", *energy);
            push_opt(&mut o, "eta", *eta);
            set_overrides(&cli.set, &mut o)?;
            run_with("transport", file, o, out, commands::transport)?
        }
        Command::Resonance { k, disorder, lambda, energy, realizations, seed } => {
            push_opt(&mut o, "k", *k);
            if let Some(d) = disorder {
                o.push(("disorder".into(), disorder_value(d)?));
            }
            push_opt(&mut o, "lambda", *lambda);
            push_opt(&mut o, "energy", *energy);
            push_opt(&mut o, "n_realizations", *realizations);
            push_opt(&mut o, "seed", *seed);
            set_overrides(&cli.set, &mut o)?;
            run_with("resonance", file, o, out, commands::resonance)?
        }
        Command::Thresholds { k, disorder, lambda } => {
            push_opt(&mut o, "k", *k);
            if let Some(d) = disorder {
                o.push(("disorder".into(), disorder_value(d)?));
            }
            push_opt(&mut o, "lambda", *lambda);
            set_overrides(&cli.set, &mut o)?;
            run_with("thresholds", file, o, out, commands::thresholds)?
        }
    };
    Ok(r)
}

fn push_opt<T: Serialize>(o: &mut Overrides, key: &str, v: Option<T>) {
    if let Some(v) = v {
        o.push((key.into(), serde_json::to_value(v).expect("flag values serialize")));
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let workers = cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        eprintln!("configuration error: --workers must be at least 1");
        return ExitCode::from(2);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
        eprintln!("cannot start worker pool: {e}");
        return ExitCode::from(1);
    }
    match dispatch(&cli) {
        Ok(run) => {
            let failures = run.outcome.convergence_failures;
            let manifest = Manifest {
                schema_version: SCHEMA_VERSION,
                tool_version: env!("CARGO_PKG_VERSION").into(),
                command: run.command.into(),
                config: run.config,
                master_seed: run.outcome.master_seed,
                streams: run.outcome.streams,
                workers,
                outputs: run.outcome.outputs,
                status: if failures == 0 { "ok".into() } else { format!("{failures} convergence failure(s)") },
                warnings: run.outcome.warnings,
            };
            for w in &manifest.warnings {
                log::info!("{w}");
            }
            if !manifest.warnings.is_empty() {
                eprintln!("{} warning(s) recorded in the manifest", manifest.warnings.len());
            }
            if let Err(e) = write_json(&commands::manifest_path(&cli.out, run.command), &manifest) {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            if failures > 0 {
                eprintln!("{failures} point(s) failed to converge; partial results kept");
                return ExitCode::from(3);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
