mod commands;
mod error;
mod keys;
mod net;
mod rundir;

use clap::{Args, Parser, Subcommand, ValueEnum};
use error::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

/// Secure split learning for smart-meter energy-theft detection.
#[derive(Parser, Debug)]
#[command(name = "gridsplit", version)]
struct Cli {
    /// Directory for report files.
    #[arg(long, global = true, default_value = "reports")]
    reports: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a client and a server key file.
    Keygen {
        #[arg(long, default_value = "keys")]
        out: PathBuf,
        #[arg(long, default_value = "meter-0001")]
        id: String,
    },
    /// Serve split-learning sessions over TCP.
    Server {
        #[arg(long)]
        listen: String,
        #[arg(long)]
        keys: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Sessions to accept before exiting.
        #[arg(long, default_value_t = 1)]
        sessions: usize,
    },
    /// Train the encoder against a remote server, then score the test split.
    Client {
        #[arg(long)]
        connect: String,
        #[arg(long)]
        keys: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a synthetic meter CSV.
    Synth {
        #[arg(long)]
        days: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        households: usize,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Under-report `grid` by ALPHA over [START, START + DURATION).
    Inject {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        start: usize,
        #[arg(long)]
        duration: usize,
        /// Input CSV; stdin when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Episode sidecar, read if present and rewritten.
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
    /// Train a split model in-process and save it as a run directory.
    Train(TrainArgs),
    /// Score the test split and flag windows above a clean-score quantile.
    Detect {
        #[arg(long)]
        quantile: f64,
        #[command(flatten)]
        run: RunArgs,
        /// Data to screen; defaults to the run's own data.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Episode sidecar giving true labels for `--data`.
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
    /// Reconstruction attack on intercepted activations.
    Attack {
        #[arg(long, value_enum, default_value_t = AttackMode::Both)]
        mode: AttackMode,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 1500)]
        steps: usize,
    },
    /// Evaluation tables.
    Eval {
        #[command(subcommand)]
        what: EvalCommand,
    },
    /// Time masking against AES, Simon and Speck in CTR mode.
    Bench {
        #[arg(long, default_value_t = 1.0)]
        payload_mib: f64,
    },
    /// Data statistics.
    Stats {
        #[command(subcommand)]
        what: StatsCommand,
    },
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// `key=value` experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Meter CSV; synthetic data from the config when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Run directory written by `train`.
    #[arg(long, default_value = "reports/run")]
    run: PathBuf,
}

#[derive(Subcommand, Debug)]
enum EvalCommand {
    /// AUC per theft level.
    Auc {
        #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = vec![0.1, 0.2, 0.3])]
        levels: Vec<f64>,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Subcommand, Debug)]
enum StatsCommand {
    /// Correlation matrix and daily autocorrelation of a meter CSV.
    Corr {
        /// Input CSV; stdin when absent.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AttackMode {
    Plain,
    Masked,
    Both,
}

fn init_logging() {
    let level = std::env::var("SG_LOG").unwrap_or_else(|_| "warn".into());
    let level = match level.as_str() {
        "error" | "warn" | "info" | "debug" => level,
        other => {
            eprintln!("SG_LOG={other:?} not recognised; using warn");
            "warn".into()
        }
    };
    env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .init();
}

fn run(cli: Cli) -> Result<(), CliError> {
    let reports = cli.reports;
    match cli.command {
        Command::Keygen { out, id } => commands::keygen(&out, &id),
        Command::Server {
            listen,
            keys,
            config,
            sessions,
        } => net::server(&listen, &keys, config.as_deref(), sessions, &reports),
        Command::Client {
            connect,
            keys,
            data,
            config,
        } => net::client(&connect, &keys, &data, config.as_deref(), &reports),
        Command::Synth {
            days,
            seed,
            households,
            out,
        } => commands::synth(days, seed, households, out.as_deref()),
        Command::Inject {
            alpha,
            start,
            duration,
            input,
            out,
            sidecar,
        } => commands::inject(alpha, start, duration, input.as_deref(), out.as_deref(), sidecar.as_deref()),
        Command::Train(a) => commands::train(a.config.as_deref(), a.data.as_deref(), &a.run.run),
        Command::Detect {
            quantile,
            run,
            data,
            sidecar,
        } => commands::detect(quantile, &run.run, data.as_deref(), sidecar.as_deref(), &reports),
        Command::Attack { mode, run, steps } => commands::attack(mode, &run.run, steps, &reports),
        Command::Eval {
            what: EvalCommand::Auc { levels, run },
        } => commands::eval_auc(&levels, &run.run, &reports),
        Command::Bench { payload_mib } => commands::bench(payload_mib, &reports),
        Command::Stats {
            what: StatsCommand::Corr { input },
        } => commands::stats_corr(input.as_deref(), &reports),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
