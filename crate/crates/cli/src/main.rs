mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hetagg::config::{Config, CONFIG_ENV};
use hetagg::Error;

#[derive(Parser, Debug)]
#[command(name = "hetagg", version, about = "Fractal hetero-aggregate generator, renderer and dataset factory")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Configuration file (default: $HETAGG_CONFIG, else built-in defaults).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides `seed` from the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Log progress to stderr (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Grow aggregates for one parameter vector.
    Generate {
        /// `df,rho,c0,c1`.
        #[arg(long)]
        theta: String,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Render geometry files to 16-bit PGM images.
    Render {
        /// Geometry files or directories containing `.txt` geometry files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Also write raw little-endian f32 pixel dumps.
        #[arg(long)]
        raw: bool,
    },
    /// Run a parameter sweep into a dataset with manifest and splits.
    Dataset {
        /// Batch size for the batch listings.
        #[arg(long)]
        nu: Option<usize>,
    },
    /// Compare descriptor distributions under θ and θ̂.
    Metrics {
        /// Manifest whose configurations are compared with themselves.
        #[arg(long, conflicts_with = "pairs", required_unless_present = "pairs")]
        manifest: Option<PathBuf>,
        /// File with one `θ θ̂` pair per line, each as `df,rho,c0,c1`.
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// Aggregates per configuration and side.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Calibrate the two-threshold mixing-ratio baseline on a dataset.
    Baseline {
        #[arg(long)]
        manifest: PathBuf,
        /// Batch size for batch-level errors.
        #[arg(long)]
        nu: Option<usize>,
    },
    /// Turn comparison samples into histogram and density tables.
    Plotdata {
        /// `comparison_samples.csv` written by `metrics`.
        #[arg(long)]
        samples: PathBuf,
    },
}

/// Failure of a command, with its exit code.
pub enum Failure {
    Lib(Error),
    /// Some entries failed; their records were already printed.
    Entries { failed: usize, total: usize },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 4,
        Error::Config(_)
        | Error::InvalidParams(_)
        | Error::Parse { .. }
        | Error::SplitInfeasible { .. }
        | Error::InsufficientEntries { .. } => 2,
        _ => 3,
    }
}

/// One JSON object per line on stderr.
pub fn error_record(e: &Error, entry: Option<&str>) -> String {
    let mut rec = serde_json::json!({
        "error": e.kind(),
        "message": e.to_string(),
        "exit_code": exit_code(e),
    });
    if let Some(entry) = entry {
        rec["entry"] = entry.into();
    }
    rec.to_string()
}

fn load_config(global: &GlobalArgs) -> Result<Config, Error> {
    let path = global.config.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let mut cfg = match path {
        Some(p) => Config::load(&p)?,
        None => Config::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli.global)?;
    let ctx = commands::Context::new(cli.global, cfg)?;
    match cli.command {
        Command::Generate { theta, count } => ctx.generate(&theta, count),
        Command::Render { inputs, raw } => ctx.render(&inputs, raw),
        Command::Dataset { nu } => ctx.dataset(nu),
        Command::Metrics { manifest, pairs, count } => ctx.metrics(manifest.as_deref(), pairs.as_deref(), count),
        Command::Baseline { manifest, nu } => ctx.baseline(&manifest, nu),
        Command::Plotdata { samples } => ctx.plotdata(&samples),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("{}", error_record(&e, None));
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Entries { failed, total }) => {
            eprintln!("{}", serde_json::json!({ "error": "entries_failed", "failed": failed, "total": total, "exit_code": 3 }));
            ExitCode::from(3)
        }
    }
}
