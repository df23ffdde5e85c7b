//! `megadapt`: batch front end for training and evaluating domain-adapted classifiers.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "megadapt", version, about = "Domain adaptation for maximum-entropy classifiers")]
struct Cli {
    /// Worker threads. Defaults to $MEGADAPT_THREADS, then to all cores.
    /// Results do not depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Settings {
    /// key=value file of hyperparameters
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set sigma2=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a synthetic corpus and its generating model.
    Synth {
        /// key=value generator spec; defaults apply to missing keys
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Override one generator key, e.g. `--set pi_in=0.8`. Repeatable
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output directory; receives train.tsv, test.tsv and truth.model
        #[arg(long)]
        out: PathBuf,
        /// Emit tagged sequences of this length instead of classification data
        #[arg(long)]
        seq_len: Option<usize>,
    },
    /// Train one system and write its model file.
    Train {
        #[arg(long)]
        system: String,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Per-block CEM trace (mixture systems only)
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Label a data file with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// One label per line; sequences are separated by blank lines
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model on labeled data, or train and compare several systems.
    Eval {
        #[arg(long, conflicts_with_all = ["systems", "train"])]
        model: Option<PathBuf>,
        /// Labeled test data
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated systems to train and compare
        #[arg(long, value_delimiter = ',', requires = "train")]
        systems: Vec<String>,
        #[arg(long)]
        train: Option<PathBuf>,
        /// System whose error reduction over the others is reported
        #[arg(long, default_value = "megam")]
        target: String,
        /// Also write the report here
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
    /// k-fold cross-validation over the in-domain data.
    Cv {
        #[arg(long)]
        system: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Test accuracy as the in-domain training set grows.
    Curve {
        #[arg(long, value_delimiter = ',', required = true)]
        systems: Vec<String>,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
    /// McNemar's test between two prediction files, or % reduction rows of
    /// an accuracy table.
    Compare {
        /// Labeled data holding the gold answers
        #[arg(long, requires_all = ["a", "b"], conflicts_with = "table")]
        gold: Option<PathBuf>,
        /// Gold data is in sequence format
        #[arg(long)]
        sequences: bool,
        #[arg(long)]
        a: Option<PathBuf>,
        #[arg(long)]
        b: Option<PathBuf>,
        /// TSV of accuracies: header `system<TAB>task...`, one row per system
        #[arg(long, requires = "target")]
        table: Option<PathBuf>,
        #[arg(long)]
        target: Option<String>,
        /// Reference rows; defaults to every other row
        #[arg(long, value_delimiter = ',')]
        reference: Vec<String>,
        /// Emit TSV instead of a fixed-width table
        #[arg(long)]
        tsv: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-example component posteriors of a mixture model, as TSV.
    Introspect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, commands::CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("MEGADAPT_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| commands::CliError::Usage(format!("MEGADAPT_THREADS={v:?} is not a count"))),
        _ => Ok(None),
    }
}

#[cfg(feature = "parallel")]
fn init_threads(n: Option<usize>) -> Result<(), commands::CliError> {
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| commands::CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn init_threads(_: Option<usize>) -> Result<(), commands::CliError> {
    Ok(())
}

fn run(cli: Cli) -> Result<(), commands::CliError> {
    init_threads(thread_count(cli.threads)?)?;
    use commands::*;
    match cli.command {
        Command::Synth { spec, set, out, seq_len } => synth(spec.as_deref(), &set, &out, seq_len),
        Command::Train {
            system,
            train: data,
            model,
            trace,
            settings,
        } => train(&system, &data, &model, trace.as_deref(), &settings),
        Command::Predict { model, data, out } => predict(&model, &data, &out),
        Command::Eval {
            model,
            data,
            systems,
            train,
            target,
            out,
            settings,
        } => match (model, train) {
            (Some(m), None) => eval_model(&m, &data, out.as_deref()),
            (None, Some(t)) => eval_systems(&systems, &t, &data, &target, out.as_deref(), &settings),
            _ => Err(CliError::Usage("eval needs either --model or --systems with --train".into())),
        },
        Command::Cv {
            system,
            data,
            folds,
            out,
            settings,
        } => cv(&system, &data, folds, out.as_deref(), &settings),
        Command::Curve {
            systems,
            train,
            test,
            sizes,
            out,
            settings,
        } => curve(&systems, &train, &test, &sizes, out.as_deref(), &settings),
        Command::Compare {
            gold,
            sequences,
            a,
            b,
            table,
            target,
            reference,
            tsv,
            out,
        } => match (gold, table) {
            (Some(g), None) => compare_predictions(&g, sequences, a.as_deref(), b.as_deref(), out.as_deref()),
            (None, Some(t)) => compare_table(&t, target.as_deref(), &reference, tsv, out.as_deref()),
            _ => Err(CliError::Usage("compare needs --gold with --a/--b, or --table".into())),
        },
        Command::Introspect { model, data, out } => introspect(&model, &data, out.as_deref()),
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("megadapt: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
