//! Command-line front end.
//!
//! Configuration precedence, highest first: command-line flags, the JSON
//! file given by `--config`, the `UAT_BENCH_OUT` environment variable (output
//! directory only), built-in defaults.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::experiment::{self, CellResult, ExperimentConfig, Problem, SweepOptions, DEFAULT_SURFACE_K};
use crate::format::format_sig;
use crate::functions;
use crate::gradcheck;

pub const OUT_ENV: &str = "UAT_BENCH_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "uat-bench",
    version,
    about = "Sup-norm approximation error of fixed-width ReLU networks across depths"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Print the registered test functions and their domains.
    ListFunctions,
    /// Run a width x depth sweep from scratch.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Maximum number of worker threads (default: one per core).
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Finish a sweep from its checkpoint.
    Resume {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Train a single (width, depth) cell and save its best network.
    Train {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        depth: usize,
    },
    /// Write the `x y f(x,y)` surface of a function.
    EmitSurface {
        #[arg(long)]
        function: String,
        /// Grid points per axis.
        #[arg(long, default_value_t = DEFAULT_SURFACE_K)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare backpropagation with central differences on random networks.
    GradCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 24)]
        draws: usize,
    },
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// JSON experiment configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    function: Option<String>,
    #[arg(long)]
    train_k: Option<usize>,
    #[arg(long)]
    test_k: Option<usize>,
    /// Comma-separated list, e.g. `1,2,4,8`.
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    depths: Option<Vec<usize>>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    normalize: Option<bool>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A validated command.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    ListFunctions,
    Sweep {
        config: ExperimentConfig,
        parallelism: Option<usize>,
    },
    Resume {
        config: ExperimentConfig,
        parallelism: Option<usize>,
    },
    Train {
        config: ExperimentConfig,
        width: usize,
        depth: usize,
    },
    EmitSurface {
        function: String,
        k: usize,
        out: PathBuf,
    },
    GradCheck {
        seed: u64,
        draws: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// `--help` or `--version`: print and exit successfully.
    Info(String),
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Info(_) => EXIT_OK,
            CliError::Usage(_) => EXIT_USAGE,
        }
    }
}

fn usage(msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("error: {msg}\n\nRun `uat-bench --help` for usage."))
}

impl ExperimentArgs {
    fn resolve(self, env_out: Option<PathBuf>) -> Result<ExperimentConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
                let config = ExperimentConfig::from_json(&text)
                    .map_err(|e| usage(format!("bad config {}: {e}", path.display())))?;
                let sets_out = serde_json::from_str::<serde_json::Value>(&text)
                    .ok()
                    .and_then(|v| v.get("output_dir").cloned())
                    .is_some();
                match env_out {
                    Some(dir) if !sets_out => ExperimentConfig {
                        output_dir: dir,
                        ..config
                    },
                    _ => config,
                }
            }
            None => ExperimentConfig {
                output_dir: env_out.unwrap_or_else(|| ExperimentConfig::default().output_dir),
                ..Default::default()
            },
        };

        macro_rules! apply {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { config.$($field).+ = v; })*
            };
        }
        apply!(
            function => function,
            train_k => train_k,
            test_k => test_k,
            widths => widths,
            depths => depths,
            restarts => restarts,
            learning_rate => adam.learning_rate,
            beta1 => adam.beta1,
            beta2 => adam.beta2,
            epsilon => adam.epsilon,
            epochs => epochs,
            batch_size => batch_size,
            seed => master_seed,
            normalize => normalize,
            out => output_dir,
        );
        config.validate().map_err(usage)?;
        Ok(config)
    }
}

/// Parse `argv` (including the program name) into a command.
pub fn parse_args<I, T>(argv: I) -> Result<Command, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    parse_args_with_env(argv, std::env::var_os(OUT_ENV).map(PathBuf::from))
}

/// As [`parse_args`], with the `UAT_BENCH_OUT` value passed explicitly.
pub fn parse_args_with_env<I, T>(argv: I, env_out: Option<PathBuf>) -> Result<Command, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| {
        use clap::error::ErrorKind;
        match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => CliError::Info(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    })?;
    Ok(match cli.verb {
        Verb::ListFunctions => Command::ListFunctions,
        Verb::Sweep { exp, parallelism } => Command::Sweep {
            config: exp.resolve(env_out)?,
            parallelism: check_parallelism(parallelism)?,
        },
        Verb::Resume { exp, parallelism } => Command::Resume {
            config: exp.resolve(env_out)?,
            parallelism: check_parallelism(parallelism)?,
        },
        Verb::Train { exp, width, depth } => {
            if width == 0 || depth == 0 {
                return Err(usage("--width and --depth must be >= 1"));
            }
            Command::Train {
                config: exp.resolve(env_out)?,
                width,
                depth,
            }
        }
        Verb::EmitSurface { function, k, out } => {
            functions::lookup(&function).map_err(usage)?;
            if k < 2 {
                return Err(usage("--k must be >= 2"));
            }
            Command::EmitSurface {
                function,
                k,
                out: out
                    .or(env_out)
                    .unwrap_or_else(|| ExperimentConfig::default().output_dir),
            }
        }
        Verb::GradCheck { seed, draws } => {
            if draws == 0 {
                return Err(usage("--draws must be >= 1"));
            }
            Command::GradCheck { seed, draws }
        }
    })
}

fn check_parallelism(p: Option<usize>) -> Result<Option<usize>, CliError> {
    match p {
        Some(0) => Err(usage("--parallelism must be >= 1")),
        other => Ok(other),
    }
}

pub fn cell_summary(function: &str, cell: &CellResult) -> String {
    format!(
        "{function} width={} depth={} best_error={} restart={} diverged={}",
        cell.width,
        cell.depth,
        format_sig(cell.best_error, experiment::TABLE_DIGITS),
        cell.best_restart_index,
        cell.diverged.len()
    )
}

fn runtime(e: Error) -> i32 {
    eprintln!("error: {e}");
    EXIT_RUNTIME
}

fn sweep(config: &ExperimentConfig, parallelism: Option<usize>, resume: bool) -> i32 {
    if resume && !config.checkpoint_path().exists() {
        eprintln!(
            "error: no checkpoint at {}; start with `sweep`",
            config.checkpoint_path().display()
        );
        return EXIT_RUNTIME;
    }
    let print = |cell: &CellResult| {
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{}", cell_summary(&config.function, cell));
    };
    let options = SweepOptions {
        parallelism,
        resume,
        stop_after: None,
        on_cell: Some(&print),
    };
    let result = experiment::run_sweep_with(config, &options).and_then(|_| {
        let f = config.test_function()?;
        experiment::emit_surface(&f, DEFAULT_SURFACE_K, &config.surface_path())
    });
    match result {
        Ok(()) => {
            println!("wrote {}", config.error_table_path().display());
            println!("wrote {}", config.surface_path().display());
            EXIT_OK
        }
        Err(e) => runtime(e),
    }
}

fn train(config: &ExperimentConfig, width: usize, depth: usize) -> i32 {
    let run = || -> crate::Result<PathBuf> {
        let problem = Problem::from_config(config)?;
        let cell = problem.run_cell(config, width, depth)?;
        println!("{}", cell_summary(&config.function, &cell));
        let best = problem.train_restart(config, width, depth, cell.best_restart_index)?;
        fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
        let path = config
            .output_dir
            .join(format!("{}_w{width}_d{depth}.net", config.function));
        fs::write(&path, best.params.to_text()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    };
    match run() {
        Ok(path) => {
            println!("wrote {}", path.display());
            EXIT_OK
        }
        Err(e) => runtime(e),
    }
}

/// Execute a command, returning the process exit status.
pub fn run(command: Command) -> i32 {
    match command {
        Command::ListFunctions => {
            for f in functions::all() {
                println!("{:<10} {}", f.name, f.domain);
            }
            EXIT_OK
        }
        Command::Sweep {
            config,
            parallelism,
        } => sweep(&config, parallelism, false),
        Command::Resume {
            config,
            parallelism,
        } => sweep(&config, parallelism, true),
        Command::Train {
            config,
            width,
            depth,
        } => train(&config, width, depth),
        Command::EmitSurface { function, k, out } => {
            let run = || -> crate::Result<PathBuf> {
                let f = functions::lookup(&function)?;
                fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
                let path = out.join(format!("fig_{function}.dat"));
                experiment::emit_surface(&f, k, &path)?;
                Ok(path)
            };
            match run() {
                Ok(path) => {
                    println!("wrote {}", path.display());
                    EXIT_OK
                }
                Err(e) => runtime(e),
            }
        }
        Command::GradCheck { seed, draws } => match gradcheck::run(seed, draws) {
            Ok(report) => {
                println!(
                    "grad-check: {} networks, {} coordinates, max relative error {:.3e}, max small-gradient abs error {:.3e}",
                    report.draws,
                    report.coordinates,
                    report.max_relative_error,
                    report.max_small_abs_error
                );
                if report.passed() {
                    EXIT_OK
                } else {
                    eprintln!("grad-check failed: tolerance {:e}", gradcheck::TOLERANCE);
                    EXIT_RUNTIME
                }
            }
            Err(e) => runtime(e),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<Command, CliError> {
        let argv = std::iter::once("uat-bench").chain(args.iter().copied());
        parse_args_with_env(argv, None)
    }

    #[test]
    fn sweep_with_seed() {
        match parse(&["sweep", "--function", "ackley", "--seed", "7"]).unwrap() {
            Command::Sweep { config, parallelism } => {
                assert_eq!(config.master_seed, 7);
                assert_eq!(
                    config,
                    ExperimentConfig {
                        master_seed: 7,
                        ..Default::default()
                    }
                );
                assert_eq!(parallelism, None);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn train_single_cell() {
        match parse(&["train", "--function", "rosenbrock", "--width", "4", "--depth", "6"]).unwrap() {
            Command::Train { config, width, depth } => {
                assert_eq!((width, depth), (4, 6));
                assert_eq!(config.function, "rosenbrock");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_function_is_a_usage_error() {
        let err = parse(&["sweep", "--function", "sphere"]).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_USAGE);
        match err {
            CliError::Usage(msg) => {
                assert!(msg.contains("sphere"));
                assert!(msg.contains("ackley, rosenbrock, borehole"));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse(&["emit-surface", "--function", "sphere"]).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        for args in [
            &["frobnicate"][..],
            &[],
            &["sweep", "--bogus"],
            &["sweep", "--restarts", "zero"],
            &["sweep", "--restarts", "0"],
            &["sweep", "--widths", "1,0"],
            &["sweep", "--parallelism", "0"],
            &["train", "--width", "2"],
            &["emit-surface", "--function", "ackley", "--k", "1"],
            &["grad-check", "--draws", "0"],
            &["sweep", "--config", "/nonexistent/c.json"],
        ] {
            match parse(args) {
                Err(CliError::Usage(_)) => {}
                other => panic!("{args:?} gave {other:?}"),
            }
        }
    }

    #[test]
    fn help_is_not_an_error_exit() {
        let err = parse(&["--help"]).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_OK);
    }

    #[test]
    fn output_directory_precedence() {
        let argv = ["uat-bench", "sweep"];
        let env = Some(PathBuf::from("/env/out"));
        let out = |c: Command| match c {
            Command::Sweep { config, .. } => config.output_dir,
            other => panic!("{other:?}"),
        };
        assert_eq!(out(parse_args_with_env(argv, None).unwrap()), PathBuf::from("out"));
        assert_eq!(out(parse_args_with_env(argv, env.clone()).unwrap()), PathBuf::from("/env/out"));
        let flagged = ["uat-bench", "sweep", "--out", "/flag/out"];
        assert_eq!(out(parse_args_with_env(flagged, env.clone()).unwrap()), PathBuf::from("/flag/out"));

        let dir = tempfile::tempdir().unwrap();
        let with_out = dir.path().join("a.json");
        fs::write(&with_out, r#"{"output_dir": "/file/out"}"#).unwrap();
        let without_out = dir.path().join("b.json");
        fs::write(&without_out, r#"{"epochs": 3}"#).unwrap();
        let p = |path: &PathBuf| {
            parse_args_with_env(
                ["uat-bench", "sweep", "--config", path.to_str().unwrap()],
                env.clone(),
            )
            .unwrap()
        };
        assert_eq!(out(p(&with_out)), PathBuf::from("/file/out"));
        assert_eq!(out(p(&without_out)), PathBuf::from("/env/out"));
    }
}
