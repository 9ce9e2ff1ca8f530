//! Command-line front end.
//!
//! Every command starts from an [`ExperimentConfig`]: the file named by
//! `--config` if given, otherwise the defaults. Command flags then override
//! individual fields.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::corpus::{load_vectors, write_corpus, CorpusFormat};
use crate::encoder::Encoder;
use crate::encoder::{
    load_model, save_model, EncoderConfig, EncoderMode, ModelEncoding, Vocabulary,
};
use crate::episodes::{generate_episodes, write_pair_dump, EpisodeSpec};
use crate::error::{Error, Result};
use crate::eval::{emit_report, ReportRow};
use crate::experiment::{
    evaluate, load_corpora, orig_surrogate, run_experiment, ExperimentConfig, ModelVariant,
    Workspace,
};
use crate::synthetic::{generate_synthetic, SyntheticSpec};

#[derive(Debug, Parser)]
#[command(
    name = "siamtune",
    version,
    about = "Siamese finetuning of sentence encoders"
)]
pub struct Cli {
    /// Master seed; component seeds are derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Model file encoding: binary or text.
    #[arg(long, global = true, value_parser = parse_encoding)]
    pub format: Option<ModelEncoding>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a vocabulary from training corpora.
    BuildVocab {
        #[arg(long = "train", required = true)]
        train: Vec<PathBuf>,
        #[arg(long)]
        min_count: Option<usize>,
        /// Defaults to `<out-dir>/vocab.txt`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate training pairs and dump them as TSV.
    GenPairs {
        #[arg(long = "train", required = true)]
        train: Vec<PathBuf>,
        /// Pair count for a single corpus.
        #[arg(long)]
        pairs: Option<usize>,
        /// Pair count per corpus when several are given.
        #[arg(long)]
        pairs_per_dataset: Option<usize>,
        #[arg(long)]
        same_fraction: Option<f64>,
        /// Defaults to `<out-dir>/pairs.tsv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model variant.
    Train {
        #[arg(long, value_parser = parse_variant)]
        model: ModelVariant,
        /// One corpus for NAIVE and SIAMESE, two or more for ALL.
        #[arg(long = "train")]
        train: Vec<PathBuf>,
        #[command(flatten)]
        encoder: EncoderFlags,
        #[command(flatten)]
        training: TrainingFlags,
    },
    /// Evaluate models on test corpora.
    Eval {
        /// Model file, or ORIG for a fresh frozen projection over `--vectors`.
        #[arg(long = "model", required = true)]
        models: Vec<String>,
        #[arg(long = "test", required = true)]
        test: Vec<PathBuf>,
        #[command(flatten)]
        encoder: EncoderFlags,
        #[arg(long)]
        n_pairs: Option<usize>,
        /// Defaults to `<out-dir>/report.tsv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a full experiment from a configuration file.
    Experiment {
        /// Configuration file; may also be given with `--config`.
        config_path: Option<PathBuf>,
    },
    /// Write a seeded synthetic train/test corpus pair.
    GenSynthetic {
        #[command(flatten)]
        spec: SyntheticFlags,
        /// jsonl or tsv.
        #[arg(long, default_value = "jsonl", value_parser = parse_corpus_format)]
        corpus_format: CorpusFormat,
    },
}

#[derive(Debug, Args)]
pub struct EncoderFlags {
    /// trainable or frozen-projection.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<EncoderMode>,
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    #[arg(long)]
    pub d_tok: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub d_out: Option<usize>,
    #[arg(long)]
    pub min_count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainingFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub pairs_per_dataset: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SyntheticFlags {
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub unseen_test_classes: Option<usize>,
    #[arg(long)]
    pub tokens_per_class: Option<usize>,
    #[arg(long)]
    pub shared_tokens: Option<usize>,
    #[arg(long)]
    pub tokens_per_text: Option<usize>,
    #[arg(long)]
    pub overlap: Option<f64>,
    #[arg(long)]
    pub train_per_class: Option<usize>,
    #[arg(long)]
    pub test_per_class: Option<usize>,
}

fn parse_encoding(s: &str) -> Result<ModelEncoding, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<ModelVariant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<EncoderMode, String> {
    match s {
        "trainable" => Ok(EncoderMode::Trainable),
        "frozen" | "frozen-projection" => Ok(EncoderMode::FrozenProjection),
        _ => Err(format!("unknown encoder mode {s:?}")),
    }
}

fn parse_corpus_format(s: &str) -> Result<CorpusFormat, String> {
    match s {
        "jsonl" | "json-lines" => Ok(CorpusFormat::JsonLines),
        "tsv" | "delimited-text" => Ok(CorpusFormat::DelimitedText),
        _ => Err(format!("unknown corpus format {s:?}")),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let config_path = match &cli.command {
        Command::Experiment {
            config_path: Some(p),
        } => Some(p.clone()),
        _ => cli.config.clone(),
    };
    let mut config = match &config_path {
        Some(p) => ExperimentConfig::from_json_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        config.output_dir = dir.clone();
    }
    if let Some(f) = cli.format {
        config.model_encoding = f;
    }

    match cli.command {
        Command::BuildVocab {
            train,
            min_count,
            out,
        } => {
            let corpora = load_corpora(&train)?;
            let vocab = Vocabulary::build(&corpora, min_count.unwrap_or(config.encoder.min_count))?;
            let out = out.unwrap_or_else(|| config.output_dir.join("vocab.txt"));
            let mut text = String::new();
            for token in vocab.tokens() {
                text.push_str(token);
                text.push('\n');
            }
            write_file(&out, text.as_bytes())?;
            eprintln!("{} tokens -> {}", vocab.len(), out.display());
        }
        Command::GenPairs {
            train,
            pairs,
            pairs_per_dataset,
            same_fraction,
            out,
        } => {
            let corpora = load_corpora(&train)?;
            let seed = config.episode_seed();
            let mut spec = if let [single] = corpora.as_slice() {
                EpisodeSpec::single(
                    single.dataset_id(),
                    pairs.unwrap_or(config.episodes.pairs),
                    seed,
                )
            } else {
                let per = pairs_per_dataset.unwrap_or(config.episodes.pairs_per_dataset);
                EpisodeSpec::balanced(&corpora, per, seed)
            };
            spec.same_fraction = same_fraction.unwrap_or(config.episodes.same_fraction);
            let episodes = generate_episodes(&corpora, &spec)?;
            let out = out.unwrap_or_else(|| config.output_dir.join("pairs.tsv"));
            ensure_parent(&out)?;
            write_pair_dump(&corpora, &episodes, &out)?;
            eprintln!("{} pairs -> {}", episodes.len(), out.display());
        }
        Command::Train {
            model,
            train,
            encoder,
            training,
        } => {
            apply_encoder_flags(&mut config, &encoder);
            if let Some(v) = training.epochs {
                config.siamese.epochs = v;
                config.naive.epochs = v;
            }
            if let Some(v) = training.batch_size {
                config.siamese.batch_size = v;
                config.naive.batch_size = v;
            }
            if let Some(v) = training.learning_rate {
                config.siamese.learning_rate = v;
                config.naive.learning_rate = v;
            }
            if let Some(v) = training.pairs {
                config.episodes.pairs = v;
            }
            if let Some(v) = training.pairs_per_dataset {
                config.episodes.pairs_per_dataset = v;
            }
            if !train.is_empty() {
                if model == ModelVariant::All {
                    config.all_train_sets = train;
                } else {
                    config.train_sets = train;
                    config.all_train_sets.clear();
                }
            }
            config.models = vec![model];
            config.validate_training()?;
            let ws = Workspace::load(&config)?;
            let out = &config.output_dir;
            let encoder = ws.train(model, &config, &out.join("logs"))?;
            let path = out.join("models").join(format!("{model}.model"));
            ensure_parent(&path)?;
            save_model(&encoder, &path, config.model_encoding)?;
            eprintln!("{model} -> {}", path.display());
        }
        Command::Eval {
            models,
            test,
            encoder,
            n_pairs,
            out,
        } => {
            apply_encoder_flags(&mut config, &encoder);
            if let Some(n) = n_pairs {
                config.eval.n_pairs = n;
            }
            let tests = load_corpora(&test)?;
            let vectors = config
                .encoder
                .vectors
                .as_ref()
                .map(load_vectors)
                .transpose()?;
            let spec = config.eval_spec();
            let mut rows = Vec::new();
            for name in &models {
                let (label, encoder) = if name.eq_ignore_ascii_case("ORIG") {
                    ("ORIG".to_string(), orig_encoder(&config, vectors.as_ref())?)
                } else {
                    let path = Path::new(name);
                    let label = path
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| name.clone());
                    (label, load_model(path)?)
                };
                if encoder.config.mode == EncoderMode::FrozenProjection && vectors.is_none() {
                    return Err(Error::Config(format!(
                        "--vectors: model {label} runs in frozen-projection mode and needs a vector file"
                    )));
                }
                for t in &tests {
                    let report = evaluate(&encoder, vectors.as_ref(), t, &spec)?;
                    rows.push(ReportRow::new(label.clone(), t.dataset_id(), &report));
                }
            }
            let out = out.unwrap_or_else(|| config.output_dir.join("report.tsv"));
            ensure_parent(&out)?;
            emit_report(&rows, &out)?;
            eprintln!("{} rows -> {}", rows.len(), out.display());
        }
        Command::Experiment { .. } => {
            if config_path.is_none() {
                return Err(Error::Config(
                    "experiment needs a configuration file".into(),
                ));
            }
            let outcome = run_experiment(&config)?;
            eprintln!(
                "{} rows -> {}",
                outcome.results.len(),
                outcome.report_path.display()
            );
        }
        Command::GenSynthetic {
            spec,
            corpus_format,
        } => {
            let spec = synthetic_spec(spec, config.seed);
            let (train, test) = generate_synthetic(&spec)?;
            let ext = match corpus_format {
                CorpusFormat::JsonLines => "jsonl",
                CorpusFormat::DelimitedText => "tsv",
            };
            fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
            for corpus in [&train, &test] {
                let path = config
                    .output_dir
                    .join(format!("{}.{ext}", corpus.dataset_id()));
                write_corpus(corpus, &path, corpus_format)?;
                eprintln!("{} examples -> {}", corpus.len(), path.display());
            }
        }
    }
    Ok(())
}

fn apply_encoder_flags(config: &mut ExperimentConfig, flags: &EncoderFlags) {
    let e = &mut config.encoder;
    if let Some(m) = flags.mode {
        e.mode = m;
    }
    if let Some(v) = &flags.vectors {
        e.vectors = Some(v.clone());
    }
    if let Some(v) = flags.d_tok {
        e.d_tok = v;
    }
    if flags.hidden.is_some() {
        e.hidden = flags.hidden;
    }
    if let Some(v) = flags.d_out {
        e.d_out = v;
    }
    if let Some(v) = flags.min_count {
        e.min_count = v;
    }
}

/// A fresh frozen projection over the supplied vectors.
fn orig_encoder(
    config: &ExperimentConfig,
    vectors: Option<&crate::corpus::VectorTable>,
) -> Result<Encoder> {
    let table =
        vectors.ok_or_else(|| Error::Config("--vectors: ORIG needs a vector file".into()))?;
    let hidden = config.encoder.hidden.unwrap_or(2 * table.dim());
    let enc_config = EncoderConfig::frozen(table.dim(), hidden, config.encoder.d_out);
    let encoder = Encoder::new_frozen(enc_config, config.init_seed())?;
    eprintln!("ORIG: {}", orig_surrogate(&encoder));
    Ok(encoder)
}

fn synthetic_spec(f: SyntheticFlags, seed: u64) -> SyntheticSpec {
    let d = SyntheticSpec::default();
    SyntheticSpec {
        name: f.name.unwrap_or(d.name),
        classes: f.classes.unwrap_or(d.classes),
        unseen_test_classes: f.unseen_test_classes.unwrap_or(d.unseen_test_classes),
        tokens_per_class: f.tokens_per_class.unwrap_or(d.tokens_per_class),
        shared_tokens: f.shared_tokens.unwrap_or(d.shared_tokens),
        tokens_per_text: f.tokens_per_text.unwrap_or(d.tokens_per_text),
        overlap: f.overlap.unwrap_or(d.overlap),
        train_per_class: f.train_per_class.unwrap_or(d.train_per_class),
        test_per_class: f.test_per_class.unwrap_or(d.test_per_class),
        seed,
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
        }
        _ => Ok(()),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    ensure_parent(path)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}
