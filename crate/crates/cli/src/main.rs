use std::path::PathBuf;
use std::process::ExitCode;

use cadgen::config::{PipelineConfig, ENDPOINT_ENV};
use cadgen::corpus::load_lexicon;
use cadgen::pipeline::{config_error, ErrorKind, PipelineError, Run, Stage};
use cadgen::synth::{write_bundle, SynthConfig};
use clap::{Parser, Subcommand};

/// Counterfactual data augmentation for binary sentiment classifiers.
///
/// Any `--section.key=value` argument overrides the matching config entry,
/// e.g. `--filter.threshold=0.6`.
#[derive(Debug, Parser)]
#[command(name = "cadgen", version, after_help = override_help())]
struct Cli {
    /// TOML config file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

fn override_help() -> String {
    format!("Config overrides: --section.key=value (e.g. --filter.threshold=0.55).\nThe {ENDPOINT_ENV} environment variable overrides proposer.endpoint.")
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the linear classifier on paths.train and save the checkpoint.
    Train,
    /// Score candidate causal terms of every training document.
    Attribute,
    /// Generate RM-CT, REP-CT and synonym counterfactual candidates.
    Generate,
    /// Score candidates against their sources and gate them by similarity.
    Filter,
    /// Pair originals with accepted counterfactuals and write the manifest.
    Augment,
    /// Train on O, CF, C and AC and test on the O and CF test splits.
    EvalMatrix,
    /// Compare term importance under the original and augmented models.
    Probe,
    /// Test the original and augmented models on out-of-domain sets.
    Ood,
    /// Compare augmentation above and below the similarity threshold.
    Ablate,
    /// Run train, attribute, generate, filter, augment and eval-matrix.
    Pipeline,
    /// Print the resolved config (defaults, file and overrides) as TOML.
    Config,
    /// Write the synthetic corpora bundle.
    Synth {
        /// Destination directory.
        #[arg(long, default_value = "data")]
        out: PathBuf,
        /// Generator seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Splits `--a.b=c` overrides from the arguments clap should see.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<String>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for a in args {
        match a.strip_prefix("--") {
            Some(body) if body.split_once('=').is_some_and(|(k, _)| k.contains('.')) => overrides.push(body.to_string()),
            _ => rest.push(a),
        }
    }
    (rest, overrides)
}

fn run(cli: Cli, overrides: &[String]) -> Result<(), PipelineError> {
    let config = PipelineConfig::load(cli.config.as_deref(), overrides).map_err(config_error)?;
    if let Command::Config = cli.command {
        print!("{}", config.to_toml());
        return Ok(());
    }
    if let Command::Synth { out, seed } = &cli.command {
        let p = &config.paths;
        let lex = load_lexicon(&p.lexicon_positive, &p.lexicon_negative, &p.antonyms).map_err(|e| PipelineError {
            stage: Stage::Config,
            input: "paths.lexicon_*".into(),
            kind: ErrorKind::Validation,
            source: Box::new(e),
        })?;
        let mut sc = SynthConfig::default();
        if let Some(s) = seed {
            sc.seed = *s;
        }
        return write_bundle(&lex, &sc, out).map_err(|e| PipelineError {
            stage: Stage::Config,
            input: out.display().to_string(),
            kind: ErrorKind::Runtime,
            source: Box::new(e),
        });
    }
    let run = Run::new(config)?;
    match cli.command {
        Command::Train => {
            let m = run.train()?;
            println!("trained {} features, train accuracy {:.4}", m.num_features(), m.train_accuracy());
        }
        Command::Attribute => println!("scored {} terms", run.attribute()?),
        Command::Generate => print!("{}", run.generate()?),
        Command::Filter => {
            let (a, r) = run.filter()?;
            println!("{a} accepted, {r} rejected");
        }
        Command::Augment => {
            let m = run.augment()?;
            println!(
                "{} of {} originals covered, {} documents written",
                m.covered, m.originals.count, m.output.count
            );
        }
        Command::EvalMatrix | Command::Pipeline => {
            let m = if matches!(cli.command, Command::Pipeline) { run.pipeline()? } else { run.eval_matrix()? };
            println!("{m}");
        }
        Command::Probe => print!("{}", run.probe()?),
        Command::Ood => print!("{}", run.ood()?),
        Command::Ablate => println!("{}", run.ablate()?),
        Command::Config | Command::Synth { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let (args, overrides) = split_overrides(std::env::args().collect());
    let cli = Cli::parse_from(args);
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot start {n} workers: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
