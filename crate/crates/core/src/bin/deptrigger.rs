use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use deptrigger::corpus::{ReadOptions, TagScheme};
use deptrigger::nernet::EncoderMode;
use deptrigger::pipeline::{score_files, stats, sweep, Pipeline, RunConfig};
use deptrigger::{synthetic, Error, Result};

#[derive(Parser)]
#[command(name = "deptrigger", version, about = "Dependency-trigger NER pipeline")]
struct Cli {
    /// Print human-readable tables instead of JSON where available.
    #[arg(long, global = true)]
    table: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML run configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory holding the artifacts.
    #[arg(long, visible_alias = "data")]
    out: Option<PathBuf>,
    /// Training corpus (column format).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// CoNLL-U parses of the training corpus.
    #[arg(long)]
    parses: Option<PathBuf>,
    /// Word vectors in text format.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Tag scheme of the input corpora (iob1, bio, bioes).
    #[arg(long)]
    scheme: Option<TagScheme>,
    #[arg(long)]
    seed: Option<u64>,
    /// Share of training sentences to annotate, in (0, 1].
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    max_hops: Option<usize>,
    /// Encoder sharing between matcher and tagger.
    #[arg(long)]
    mode: Option<EncoderMode>,
    #[arg(long)]
    matcher_epochs: Option<usize>,
    #[arg(long)]
    ner_epochs: Option<usize>,
    /// Disable trigger attention (plain BiLSTM-CRF).
    #[arg(long)]
    no_trigger_attention: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Extract triggers and write replicated training instances.
    Annotate(Common),
    /// Train the trigger match network.
    TrainMatcher(Common),
    /// Encode every training trigger set into the prototype table.
    BuildPrototype(Common),
    /// Train the tagger against the frozen matcher.
    TrainNer(Common),
    /// Score the trained model on a test corpus, or score two tag files.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Gold test corpus.
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Predicted tags (last column); scores files without a model.
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Tag scheme of the prediction file.
        #[arg(long, default_value = "bioes")]
        pred_scheme: TagScheme,
        /// Proceed even if artifact hashes disagree with the config.
        #[arg(long)]
        allow_hash_mismatch: bool,
    },
    /// All stages in order: annotate, train-matcher, build-prototype, train-ner, evaluate.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gold: Option<PathBuf>,
    },
    /// Corpus statistics and, with parses, trigger counts.
    Stats(Common),
    /// Full pipeline for each annotation fraction.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gold: Option<PathBuf>,
        /// Comma-separated fractions.
        #[arg(long, value_delimiter = ',')]
        fractions: Vec<f64>,
        /// Comma-separated seeds; F1 is averaged over them.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Write the synthetic corpus and its config.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
}

fn build_config(c: &Common, gold: Option<&PathBuf>) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
        if v.is_some() {
            slot.clone_from(v);
        }
    };
    set(&mut cfg.paths.out_dir, &c.out);
    set(&mut cfg.paths.corpus, &c.corpus);
    set(&mut cfg.paths.parses, &c.parses);
    set(&mut cfg.paths.embeddings, &c.embeddings);
    set(&mut cfg.paths.test_corpus, &gold.cloned());
    if let Some(s) = c.scheme {
        cfg.corpus.scheme = s;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(f) = c.fraction {
        cfg.corpus.fraction = f;
    }
    if let Some(h) = c.max_hops {
        cfg.trigger.max_hops = h;
    }
    if let Some(m) = c.mode {
        cfg.ner.mode = m;
    }
    if let Some(e) = c.matcher_epochs {
        cfg.matcher_train.epochs = e;
    }
    if let Some(e) = c.ner_epochs {
        cfg.ner_train.epochs = e;
    }
    if c.no_trigger_attention {
        cfg.ner.trigger_attention = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit<T: serde::Serialize>(value: &T, table: Option<String>) -> Result<()> {
    match table {
        Some(t) => print!("{t}"),
        None => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let table = cli.table;
    match cli.command {
        Command::Annotate(c) => emit(&Pipeline::new(build_config(&c, None)?)?.annotate()?, None),
        Command::TrainMatcher(c) => emit(&Pipeline::new(build_config(&c, None)?)?.train_matcher()?, None),
        Command::BuildPrototype(c) => emit(&Pipeline::new(build_config(&c, None)?)?.build_prototype()?, None),
        Command::TrainNer(c) => emit(&Pipeline::new(build_config(&c, None)?)?.train_ner()?, None),
        Command::Evaluate {
            common,
            gold,
            pred,
            pred_scheme,
            allow_hash_mismatch,
        } => {
            let report = match pred {
                Some(pred) => {
                    let gold = gold.ok_or_else(|| Error::Argument("--pred needs --gold".into()))?;
                    let cfg = build_config(&common, None)?;
                    let pred_opts = ReadOptions {
                        scheme: pred_scheme,
                        strict: false,
                    };
                    score_files(&gold, &pred, cfg.corpus.read_options(), pred_opts)?
                }
                None => {
                    let mut p = Pipeline::new(build_config(&common, gold.as_ref())?)?;
                    p.allow_hash_mismatch = allow_hash_mismatch;
                    p.evaluate()?
                }
            };
            let t = table.then(|| report.table());
            emit(&report, t)
        }
        Command::Run { common, gold } => {
            let report = Pipeline::new(build_config(&common, gold.as_ref())?)?.run_all()?;
            let t = table.then(|| report.table());
            emit(&report, t)
        }
        Command::Stats(c) => {
            let cfg = build_config(&c, None)?;
            let corpus = cfg.require(&cfg.paths.corpus, "--corpus")?;
            let report = stats(corpus, cfg.corpus.read_options(), cfg.paths.parses.as_deref(), &cfg.trigger)?;
            let t = table.then(|| report.table());
            emit(&report, t)
        }
        Command::Sweep {
            common,
            gold,
            fractions,
            seeds,
        } => {
            let mut cfg = build_config(&common, gold.as_ref())?;
            if !fractions.is_empty() {
                cfg.sweep.fractions = fractions;
            }
            if !seeds.is_empty() {
                cfg.sweep.seeds = seeds;
            }
            let report = sweep(&cfg)?;
            let t = table.then(|| report.table());
            emit(&report, t)
        }
        Command::Synth { out } => {
            synthetic::write_bundle(&out)?;
            emit(&json!({ "command": "synth", "out": out }), None)
        }
    }
}

fn fail(kind: &str, message: String) -> ExitCode {
    let err = json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{err}");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string()),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string()),
    }
}
