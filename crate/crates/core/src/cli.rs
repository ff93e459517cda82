//! Command-line front end. Data goes to files or stdout, diagnostics to
//! stderr. Exit codes: 0 success, 1 input or usage error, 2 internal error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::config::{config_hash, load_resources, load_stores, RunConfig};
use crate::embeddings::load_embeddings;
use crate::error::{Error, Result};
use crate::evaluation::{ablate, ablation_tsv, evaluate, parse_predictions, Prediction};
use crate::model::{parse_tsv, write_tsv, Schema};
use crate::pipeline::{missing_keys, predictions_tsv, requested_keys, run_dataset, Resources};
use crate::rewriter::{load_lexicon, IdiomLexicon};
use crate::similarity::{feature_text, text_key};
use crate::typer::lr::{predict_lr, train_lr_traced, LrModel};

#[derive(Debug, Parser)]
#[command(name = "polyframe", version, about = "Idiom-aware multilingual image ranking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config value, e.g. `pipeline.tau=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads for per-instance processing.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a dataset TSV, report rejected rows and write a normalized copy.
    Ingest {
        #[command(flatten)]
        common: Common,
        /// Dataset to read; defaults to `paths.dataset`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the logistic-regression sentence typer on labelled embeddings.
    TrainTyper {
        #[command(flatten)]
        common: Common,
        /// Model output; defaults to `paths.lr_model`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank candidates for every instance and write predictions.
    Rank {
        #[command(flatten)]
        common: Common,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Omit the generation timestamp so reruns are byte-identical.
        #[arg(long)]
        no_timestamp: bool,
        /// Also write the per-language coverage table here.
        #[arg(long)]
        coverage: Option<PathBuf>,
    },
    /// Score a prediction file against gold orders.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Predictions TSV written by `rank`.
        #[arg(long)]
        pred: PathBuf,
        /// Dataset TSV carrying gold orders and labels.
        #[arg(long)]
        gold: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the `[ablation]` axes and tabulate macro metrics per cell.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List embedding keys the pipeline would request but the stores lack.
    ValidateEmbeddings {
        #[command(flatten)]
        common: Common,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    config.apply_overrides(&common.overrides)?;
    if let Some(w) = common.workers {
        if w == 0 {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        config.pipeline.workers = w;
    }
    config.pipeline.validate()?;
    Ok(config)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn ingest(common: &Common, input: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let config = load_config(common)?;
    let path = match input {
        Some(p) => p,
        None => config.dataset_path()?,
    };
    let dataset = parse_tsv(path, &config.schema)?;
    for r in &dataset.rejected {
        eprintln!("rejected row {}: {}", r.row, r.reason);
    }
    eprintln!(
        "{} instances, {} rejected, {} languages",
        dataset.len(),
        dataset.rejected.len(),
        dataset.language_counts.len()
    );
    let mut table = String::from("language\tinstances\n");
    for (lang, n) in &dataset.language_counts {
        table.push_str(&format!("{lang}\t{n}\n"));
    }
    if let Some(p) = out {
        write_tsv(&dataset, &Schema::default(), p)?;
    }
    emit(None, &table)
}

fn train_typer(common: &Common, out: Option<&Path>) -> Result<()> {
    let config = load_config(common)?;
    let path = config
        .paths
        .train
        .as_deref()
        .map_or_else(|| config.dataset_path(), Ok)?;
    let dataset = parse_tsv(path, &config.schema)?;
    let m3_path = config
        .paths
        .m3_embeddings
        .as_deref()
        .ok_or_else(|| Error::Config("paths.m3_embeddings is required for training".into()))?;
    let m3 = load_embeddings(m3_path)?;
    let mut data = Vec::new();
    for inst in &dataset.instances {
        let Some(label) = inst.gold_sentence_type else { continue };
        let key = text_key(&feature_text(&inst.sentence, &inst.compound));
        let feature = m3.get(&key).ok_or_else(|| {
            Error::MissingEmbedding {
                store: "m3".into(),
                key: key.clone(),
            }
            .in_instance(&inst.id)
        })?;
        data.push((feature.iter().map(|&x| f64::from(x)).collect::<Vec<f64>>(), label));
    }
    if data.is_empty() {
        return Err(Error::MissingGold("no labelled instances to train on".into()));
    }
    let (model, history) = train_lr_traced(&data, &config.training, &path.display().to_string())?;
    let correct = data
        .iter()
        .filter(|(x, y)| predict_lr(&model, x).is_ok_and(|d| d.label == *y))
        .count();
    eprintln!(
        "trained on {} instances: final loss {:.6}, training accuracy {:.4}",
        data.len(),
        history.last().copied().unwrap_or(f64::NAN),
        correct as f64 / data.len() as f64
    );
    let out = out
        .or(config.paths.lr_model.as_deref())
        .ok_or_else(|| Error::Config("pass --out or set paths.lr_model".into()))?;
    model.save(out)
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn rank(common: &Common, out: Option<&Path>, no_timestamp: bool, coverage_out: Option<&Path>) -> Result<()> {
    let config = load_config(common)?;
    let dataset = config.load_dataset()?;
    let resources = load_resources(&config)?;
    let run = run_dataset(&dataset, &config.pipeline, &resources)?;
    let hash = config_hash(&config.pipeline);
    let timestamp = (!no_timestamp).then(unix_now);
    emit(
        out,
        &predictions_tsv(&run.records, config.pipeline.variant, &hash, timestamp),
    )?;

    let coverage = run.coverage.to_tsv();
    eprint!("{coverage}");
    if let Some(p) = coverage_out {
        fs::write(p, &coverage).map_err(|e| Error::io(p, e))?;
    }
    if let Some(p) = &config.paths.miss_log {
        fs::write(p, run.miss_log()).map_err(|e| Error::io(p, e))?;
    }
    info!("{} predictions, {} failures", run.records.len(), run.failures.len());
    Ok(())
}

fn evaluate_cmd(common: &Common, pred: &Path, gold: &Path, out: Option<&Path>) -> Result<()> {
    let config = load_config(common)?;
    let text = fs::read_to_string(pred).map_err(|e| Error::io(pred, e))?;
    let predictions: Vec<Prediction> = parse_predictions(&text)?;
    let variant = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .flat_map(|l| l.split_whitespace())
        .find_map(|t| t.strip_prefix("variant="))
        .unwrap_or("unknown")
        .to_string();
    let hash = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .flat_map(|l| l.split_whitespace())
        .find_map(|t| t.strip_prefix("config="))
        .unwrap_or("unknown")
        .to_string();
    let gold = parse_tsv(gold, &config.schema)?;
    let report = evaluate(&predictions, &gold, &config.evaluation, &variant, &hash)?;
    emit(out, &report.to_tsv())
}

fn ablate_cmd(common: &Common, out: Option<&Path>) -> Result<()> {
    let config = load_config(common)?;
    let dataset = config.load_dataset()?;
    let resources = load_resources(&config)?;
    let cells = ablate(
        &dataset,
        &config.pipeline,
        &config.ablation,
        &resources,
        &config.evaluation,
        config_hash,
    );
    for (i, c) in cells.iter().enumerate() {
        if let Err(e) = &c.report {
            eprintln!("cell {i} failed: {e}");
        }
    }
    emit(out, &ablation_tsv(&cells, &config.evaluation))
}

fn validate_embeddings(common: &Common, out: Option<&Path>) -> Result<()> {
    let config = load_config(common)?;
    let dataset = config.load_dataset()?;
    let lexicon = match &config.paths.lexicon {
        Some(p) => load_lexicon(p)?,
        None => IdiomLexicon::new(),
    };
    let mut resources = Resources::new(lexicon, load_stores(&config)?);
    if let Some(p) = &config.paths.lr_model {
        resources.lr_model = Some(LrModel::load(p)?);
    }
    if let Some(p) = &config.paths.translation_cache {
        resources.translation_cache = crate::typer::cache::TextCache::open(p)?;
    }
    let live = config.pipeline.llm.command.is_some();
    let requests = requested_keys(&dataset, &config.pipeline, &resources, live);
    let missing = missing_keys(&requests, &resources.stores);
    let mut report = format!("{} requested, {} missing\n", requests.len(), missing.len());
    for m in &missing {
        report.push_str(&format!(
            "missing\t{}\t{}\t{}\t{}\n",
            m.instance_id, m.store, m.key, m.what
        ));
    }
    emit(out, &report)
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest { common, input, out } => ingest(common, input.as_deref(), out.as_deref()),
        Command::TrainTyper { common, out } => train_typer(common, out.as_deref()),
        Command::Rank {
            common,
            out,
            no_timestamp,
            coverage,
        } => rank(common, out.as_deref(), *no_timestamp, coverage.as_deref()),
        Command::Evaluate {
            common,
            pred,
            gold,
            out,
        } => evaluate_cmd(common, pred, gold, out.as_deref()),
        Command::Ablate { common, out } => ablate_cmd(common, out.as_deref()),
        Command::ValidateEmbeddings { common, out } => validate_embeddings(common, out.as_deref()),
    }
}

/// Parses `args` and runs the selected subcommand, returning the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                1
            } else {
                2
            }
        }
        Err(_) => 2,
    }
}
