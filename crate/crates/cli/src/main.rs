use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use icu_mortality::pipeline::{self, RunConfig, StageOutcome};
use icu_mortality::Error;

/// ICU in-hospital mortality pipeline on MIMIC-III-shaped CSV tables.
#[derive(Parser, Debug)]
#[command(name = "icu-mortality", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic MIMIC-III-shaped tables into --output.
    Synth(Flags),
    /// Summary statistics of the tables in --input.
    Describe(Flags),
    /// Select first adult ICU stays over 48 h, label them, split 60/20/20.
    Cohort(Flags),
    /// Build 48x13 hourly tensors plus static features for the cohort.
    Featurize(Flags),
    /// Train the LSTM and the logistic-regression baseline.
    Train(Flags),
    /// Score the test split and write the report and ROC curves.
    Evaluate(Flags),
    /// Run every stage in order (generating data first with --synth-patients).
    RunAll(Flags),
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// key = value file; flags given on the command line take precedence.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory holding the MIMIC-III CSV tables.
    #[arg(long, value_name = "DIR")]
    input: Option<PathBuf>,
    /// Directory for stage artifacts and logs.
    #[arg(long, alias = "out", value_name = "DIR")]
    output: Option<PathBuf>,
    /// Global seed; every stage derives its own from it.
    #[arg(long)]
    seed: Option<u64>,
    /// LSTM hidden size.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Non-improving epochs tolerated before stopping.
    #[arg(long)]
    patience: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Early-stopping signal: val_loss or val_auc.
    #[arg(long)]
    monitor: Option<String>,
    /// Keep the training order fixed across epochs.
    #[arg(long)]
    no_shuffle: bool,
    /// L2 strength of the logistic-regression baseline.
    #[arg(long)]
    lambda: Option<f64>,
    /// Decision threshold for precision, recall and F1.
    #[arg(long)]
    threshold: Option<f64>,
    /// Imputation means over all stays instead of the training split.
    #[arg(long)]
    all_stays_means: bool,
    /// Random pick among same-hour urine events instead of the hourly sum.
    #[arg(long)]
    literal_urine: bool,
    /// Keep raw units.
    #[arg(long)]
    no_standardize: bool,
    /// Shorthand for --all-stays-means --literal-urine --no-standardize.
    #[arg(long)]
    literal: bool,
    /// Fail on the first malformed CSV row instead of skipping it.
    #[arg(long)]
    strict: bool,
    /// Number of synthetic patients.
    #[arg(long, alias = "patients")]
    synth_patients: Option<usize>,
    /// none, static_only or temporal_trend.
    #[arg(long)]
    signal_mode: Option<String>,
    #[arg(long)]
    effect_size: Option<f64>,
    #[arg(long)]
    mortality_rate: Option<f64>,
    /// Inject unit, error-text, duplicate and gap anomalies after generation.
    #[arg(long)]
    anomalies: bool,
}

impl Flags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut v = Vec::new();
        let mut opt = |k: &'static str, x: Option<String>| {
            if let Some(x) = x {
                v.push((k, x));
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        opt("input", path(&self.input));
        opt("output", path(&self.output));
        opt("seed", self.seed.map(|x| x.to_string()));
        opt("hidden", self.hidden.map(|x| x.to_string()));
        opt("batch_size", self.batch_size.map(|x| x.to_string()));
        opt("max_epochs", self.max_epochs.map(|x| x.to_string()));
        opt("patience", self.patience.map(|x| x.to_string()));
        opt("lr", self.lr.map(|x| x.to_string()));
        opt("monitor", self.monitor.clone());
        opt("lambda", self.lambda.map(|x| x.to_string()));
        opt("threshold", self.threshold.map(|x| x.to_string()));
        opt("synth_patients", self.synth_patients.map(|x| x.to_string()));
        opt("signal_mode", self.signal_mode.clone());
        opt("effect_size", self.effect_size.map(|x| x.to_string()));
        opt("mortality_rate", self.mortality_rate.map(|x| x.to_string()));
        for (key, on) in [
            ("literal", self.literal),
            ("all_stays_means", self.all_stays_means),
            ("literal_urine", self.literal_urine),
            ("no_standardize", self.no_standardize),
            ("strict", self.strict),
            ("anomalies", self.anomalies),
        ] {
            if on {
                v.push((key, "true".into()));
            }
        }
        if self.no_shuffle {
            v.push(("shuffle", "false".into()));
        }
        v
    }

    fn run_config(&self) -> Result<RunConfig, Error> {
        let mut config = RunConfig::default();
        if let Some(path) = &self.config {
            config.apply_file(path)?;
        }
        for (k, v) in self.pairs() {
            config
                .set(k, &v)
                .map_err(|reason| Error::Config(format!("--{}: {reason}", k.replace('_', "-"))))?;
        }
        Ok(config)
    }
}

fn print_outcome(o: &StageOutcome) {
    let counts: Vec<String> = o.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!(
        "{}: {} ({:.1}s)",
        o.stage,
        counts.join(" "),
        o.wall.as_secs_f64()
    );
}

fn run(command: &Command) -> Result<Vec<StageOutcome>, Error> {
    let one = |f: &Flags, stage: fn(&RunConfig) -> Result<StageOutcome, Error>| {
        Ok(vec![stage(&f.run_config()?)?])
    };
    match command {
        Command::Synth(f) => one(f, pipeline::run_synth),
        Command::Describe(f) => one(f, pipeline::run_describe),
        Command::Cohort(f) => one(f, pipeline::run_cohort),
        Command::Featurize(f) => one(f, pipeline::run_featurize),
        Command::Train(f) => one(f, pipeline::run_train),
        Command::Evaluate(f) => one(f, pipeline::run_evaluate),
        Command::RunAll(f) => pipeline::run_all(&f.run_config()?),
    }
}

fn name(command: &Command) -> &'static str {
    match command {
        Command::Synth(_) => "synth",
        Command::Describe(_) => "describe",
        Command::Cohort(_) => "cohort",
        Command::Featurize(_) => "featurize",
        Command::Train(_) => "train",
        Command::Evaluate(_) => "evaluate",
        Command::RunAll(_) => "run-all",
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("error kind=usage stage=-: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(&cli.command) {
        Ok(outcomes) => {
            for o in &outcomes {
                print_outcome(o);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!(
                "error kind={} stage={}: {}",
                e.kind(),
                name(&cli.command),
                one_line(&e.to_string())
            );
            ExitCode::from(if e.kind() == "config" { 2 } else { 1 })
        }
    }
}
