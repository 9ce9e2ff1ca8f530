//! The four-way ORIG / NAIVE / SIAMESE / ALL comparison.
//!
//! Every trained variant starts from the same seeded base encoder, and that
//! base encoder itself is evaluated as ORIG. In frozen-projection mode with
//! matching input/output widths the base encoder is the identity map, so
//! ORIG scores the imported vectors as-is; in trainable mode ORIG is the
//! untrained reference encoder.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{load_corpus, load_vectors, Corpus, CorpusFormat, VectorTable};
use crate::encoder::{
    save_model, Encoder, EncoderConfig, EncoderMode, ModelEncoding, PreparedInput, Vocabulary,
    DEFAULT_OUTPUT_DIM,
};
use crate::episodes::{generate_episodes, EpisodeSpec};
use crate::error::{Error, Result};
use crate::eval::{delta_cosine_distance, emit_report, DeltaReport, EvalSpec, ReportRow};
use crate::numfmt::sig9;
use crate::training::{
    train_naive_with, train_siamese_with, EpochSummary, NaiveConfig, SiameseConfig, TrainingReport,
};

pub const DEFAULT_SIAMESE_PAIRS: usize = 70_000;
pub const DEFAULT_PAIRS_PER_DATASET: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModelVariant {
    Orig,
    Naive,
    Siamese,
    All,
}

impl ModelVariant {
    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Orig => "ORIG",
            ModelVariant::Naive => "NAIVE",
            ModelVariant::Siamese => "SIAMESE",
            ModelVariant::All => "ALL",
        }
    }
}

impl std::str::FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ORIG" => Ok(ModelVariant::Orig),
            "NAIVE" => Ok(ModelVariant::Naive),
            "SIAMESE" => Ok(ModelVariant::Siamese),
            "ALL" => Ok(ModelVariant::All),
            _ => Err(Error::Config(format!("unknown model variant {s:?}"))),
        }
    }
}

impl std::fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSettings {
    pub mode: EncoderMode,
    pub d_tok: usize,
    /// Defaults to 256 in trainable mode and `2 * d_in` in frozen mode.
    pub hidden: Option<usize>,
    pub d_out: usize,
    pub min_count: usize,
    /// Precomputed sentence vectors; required in frozen-projection mode.
    pub vectors: Option<PathBuf>,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        Self {
            mode: EncoderMode::Trainable,
            d_tok: 64,
            hidden: None,
            d_out: DEFAULT_OUTPUT_DIM,
            min_count: 1,
            vectors: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeSettings {
    /// Pairs generated for single-dataset Siamese training.
    pub pairs: usize,
    /// Pairs generated per dataset for the ALL variant.
    pub pairs_per_dataset: usize,
    pub same_fraction: f64,
}

impl Default for EpisodeSettings {
    fn default() -> Self {
        Self {
            pairs: DEFAULT_SIAMESE_PAIRS,
            pairs_per_dataset: DEFAULT_PAIRS_PER_DATASET,
            same_fraction: EpisodeSpec::DEFAULT_SAME_FRACTION,
        }
    }
}

/// One experiment: which variants to train on which data, and where to
/// evaluate them. Component seeds are derived from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// The single training set of NAIVE and SIAMESE.
    pub train_sets: Vec<PathBuf>,
    /// Training sets of the ALL variant; falls back to `train_sets`.
    pub all_train_sets: Vec<PathBuf>,
    pub test_sets: Vec<PathBuf>,
    pub models: Vec<ModelVariant>,
    pub encoder: EncoderSettings,
    pub siamese: SiameseConfig,
    pub naive: NaiveConfig,
    pub episodes: EpisodeSettings,
    pub eval: EvalSpec,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub model_encoding: ModelEncoding,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            train_sets: Vec::new(),
            all_train_sets: Vec::new(),
            test_sets: Vec::new(),
            models: Vec::new(),
            encoder: EncoderSettings::default(),
            siamese: SiameseConfig::default(),
            naive: NaiveConfig::default(),
            episodes: EpisodeSettings::default(),
            eval: EvalSpec::default(),
            seed: 0,
            output_dir: PathBuf::from("out"),
            model_encoding: ModelEncoding::Binary,
        }
    }
}

/// Seed stream `k` of a master seed (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const INIT_STREAM: u64 = 0;
const EPISODE_STREAM: u64 = 1;
const SIAMESE_STREAM: u64 = 2;
const NAIVE_STREAM: u64 = 3;
const EVAL_STREAM: u64 = 4;

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn all_sets(&self) -> &[PathBuf] {
        if self.all_train_sets.is_empty() {
            &self.train_sets
        } else {
            &self.all_train_sets
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_training()?;
        if self.test_sets.is_empty() {
            return Err(Error::Config(
                "test_sets: at least one test set is required".into(),
            ));
        }
        Ok(())
    }

    /// Everything `validate` checks except the presence of test sets.
    pub fn validate_training(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config(
                "models: at least one variant is required".into(),
            ));
        }
        let unique: BTreeSet<_> = self.models.iter().collect();
        if unique.len() != self.models.len() {
            return Err(Error::Config("models: duplicate variant".into()));
        }
        let needs_single = self
            .models
            .iter()
            .any(|m| matches!(m, ModelVariant::Naive | ModelVariant::Siamese));
        if needs_single && self.train_sets.len() != 1 {
            return Err(Error::Config(format!(
                "train_sets: NAIVE and SIAMESE need exactly one training set, got {}",
                self.train_sets.len()
            )));
        }
        if self.models.contains(&ModelVariant::All) && self.all_sets().len() < 2 {
            return Err(Error::Config(format!(
                "all_train_sets: ALL needs at least two training sets, got {}",
                self.all_sets().len()
            )));
        }
        if self.encoder.mode == EncoderMode::FrozenProjection && self.encoder.vectors.is_none() {
            return Err(Error::Config(
                "encoder.vectors: frozen-projection mode needs a vector file".into(),
            ));
        }
        if self.encoder.mode == EncoderMode::Trainable
            && self.train_sets.is_empty()
            && self.all_train_sets.is_empty()
        {
            return Err(Error::Config(
                "train_sets: a trainable encoder needs training text to build its vocabulary"
                    .into(),
            ));
        }
        if self.episodes.pairs == 0 || self.episodes.pairs_per_dataset == 0 {
            return Err(Error::Config(
                "episodes: pair counts must be positive".into(),
            ));
        }
        self.siamese.validate()?;
        self.naive.validate()?;
        Ok(())
    }

    pub fn siamese_config(&self) -> SiameseConfig {
        SiameseConfig {
            seed: derive_seed(self.seed, SIAMESE_STREAM),
            ..self.siamese.clone()
        }
    }

    pub fn naive_config(&self) -> NaiveConfig {
        NaiveConfig {
            seed: derive_seed(self.seed, NAIVE_STREAM),
            ..self.naive.clone()
        }
    }

    pub fn eval_spec(&self) -> EvalSpec {
        EvalSpec {
            seed: derive_seed(self.seed, EVAL_STREAM),
            ..self.eval.clone()
        }
    }

    pub fn episode_seed(&self) -> u64 {
        derive_seed(self.seed, EPISODE_STREAM)
    }

    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, INIT_STREAM)
    }
}

pub fn load_corpora(paths: &[PathBuf]) -> Result<Vec<Corpus>> {
    let corpora: Vec<Corpus> = paths
        .iter()
        .map(|p| load_corpus(p, CorpusFormat::from_path(p)))
        .collect::<Result<_>>()?;
    let mut ids = BTreeSet::new();
    for c in &corpora {
        if !ids.insert(c.dataset_id()) {
            return Err(Error::Config(format!(
                "two corpora share the dataset id {:?} (file stem)",
                c.dataset_id()
            )));
        }
    }
    Ok(corpora)
}

/// The seeded base encoder shared by every variant.
pub fn base_encoder(
    settings: &EncoderSettings,
    train: &[&Corpus],
    vectors: Option<&VectorTable>,
    seed: u64,
) -> Result<Encoder> {
    match settings.mode {
        EncoderMode::Trainable => {
            let vocab = Vocabulary::build(train.iter().copied(), settings.min_count)?;
            let hidden = settings.hidden.unwrap_or(256);
            let config = EncoderConfig::trainable(settings.d_tok, hidden, settings.d_out);
            Encoder::new_trainable(config, vocab, seed)
        }
        EncoderMode::FrozenProjection => {
            let table = vectors.ok_or_else(|| {
                Error::Config("encoder.vectors: frozen-projection mode needs a vector file".into())
            })?;
            let hidden = settings.hidden.unwrap_or(2 * table.dim());
            let config = EncoderConfig::frozen(table.dim(), hidden, settings.d_out);
            Encoder::new_frozen(config, seed)
        }
    }
}

/// Short description of what ORIG means for this base encoder.
pub fn orig_surrogate(encoder: &Encoder) -> &'static str {
    let c = &encoder.config;
    match c.mode {
        EncoderMode::Trainable => {
            "untrained reference encoder (seeded initialization shared by all variants)"
        }
        EncoderMode::FrozenProjection if c.d_in == c.d_out && c.hidden >= 2 * c.d_in => {
            "imported vectors through an identity-initialized projection"
        }
        EncoderMode::FrozenProjection => "imported vectors through a random-initialized projection",
    }
}

pub fn prepare_inputs(
    encoder: &Encoder,
    corpora: &[&Corpus],
    vectors: Option<&VectorTable>,
) -> Result<Vec<Vec<PreparedInput>>> {
    corpora
        .iter()
        .map(|c| encoder.prepare_corpus(c, vectors))
        .collect()
}

/// Trains `variant` from `base` on `corpora` (one corpus for NAIVE and
/// SIAMESE, several for ALL). ORIG returns the base encoder untouched.
pub fn train_variant(
    variant: ModelVariant,
    base: &Encoder,
    corpora: &[&Corpus],
    vectors: Option<&VectorTable>,
    config: &ExperimentConfig,
    observer: impl FnMut(&EpochSummary),
) -> Result<(Encoder, Option<TrainingReport>)> {
    let mut trained = base.clone();
    match variant {
        ModelVariant::Orig => Ok((trained, None)),
        ModelVariant::Naive => {
            let [corpus] = corpora else {
                return Err(Error::Config("NAIVE trains on exactly one corpus".into()));
            };
            let inputs = base.prepare_corpus(corpus, vectors)?;
            let labels = corpus.class_positions();
            let (params, _head, report) = train_naive_with(
                base.params.clone(),
                &base.config,
                &inputs,
                &labels,
                corpus.num_classes(),
                &config.naive_config(),
                observer,
            )?;
            trained.params = params;
            Ok((trained, Some(report)))
        }
        ModelVariant::Siamese | ModelVariant::All => {
            let spec = if variant == ModelVariant::Siamese {
                let [corpus] = corpora else {
                    return Err(Error::Config("SIAMESE trains on exactly one corpus".into()));
                };
                EpisodeSpec::single(
                    corpus.dataset_id(),
                    config.episodes.pairs,
                    config.episode_seed(),
                )
            } else {
                EpisodeSpec {
                    quotas: corpora
                        .iter()
                        .map(|c| {
                            (
                                c.dataset_id().to_string(),
                                config.episodes.pairs_per_dataset,
                            )
                        })
                        .collect(),
                    same_fraction: config.episodes.same_fraction,
                    seed: config.episode_seed(),
                }
            };
            let spec = EpisodeSpec {
                same_fraction: config.episodes.same_fraction,
                ..spec
            };
            let owned: Vec<Corpus> = corpora.iter().map(|c| (*c).clone()).collect();
            let pairs = generate_episodes(&owned, &spec)?;
            let inputs = prepare_inputs(base, corpora, vectors)?;
            let (params, report) = train_siamese_with(
                base.params.clone(),
                &base.config,
                &pairs,
                &inputs,
                &config.siamese_config(),
                observer,
            )?;
            trained.params = params;
            Ok((trained, Some(report)))
        }
    }
}

pub fn evaluate(
    encoder: &Encoder,
    vectors: Option<&VectorTable>,
    test: &Corpus,
    spec: &EvalSpec,
) -> Result<DeltaReport> {
    delta_cosine_distance(|ex| encoder.embed(ex, vectors), test, spec)
}

#[derive(Debug, Clone)]
pub struct EvaluatedModel {
    pub variant: ModelVariant,
    pub test_set: String,
    pub report: DeltaReport,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub results: Vec<EvaluatedModel>,
    pub report_path: PathBuf,
}

impl ExperimentOutcome {
    pub fn get(&self, variant: ModelVariant, test_set: &str) -> Option<&DeltaReport> {
        self.results
            .iter()
            .find(|r| r.variant == variant && r.test_set == test_set)
            .map(|r| &r.report)
    }

    pub fn rows(&self) -> Vec<ReportRow> {
        self.results
            .iter()
            .map(|r| ReportRow::new(r.variant.name(), &r.test_set, &r.report))
            .collect()
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    name: &'a str,
    status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    seed: u64,
    models: Vec<&'static str>,
    orig_surrogate: Option<&'static str>,
    report: &'a str,
}

/// Writes one `epoch\tmean_loss\telapsed_seconds` line per epoch.
pub fn epoch_logger(mut sink: impl Write) -> impl FnMut(&EpochSummary) {
    move |s: &EpochSummary| {
        // A failing log sink must not abort training.
        let _ = writeln!(
            sink,
            "{}\t{}\t{:.3}",
            s.epoch,
            sig9(s.mean_loss),
            s.elapsed.as_secs_f64()
        );
        let _ = sink.flush();
    }
}

/// Runs every requested variant, evaluates each on every test set and
/// writes models, logs, `report.tsv` and `manifest.json` under
/// `config.output_dir`. Stops at the first error, leaving a manifest with
/// status `failed` and any rows finished so far in `report.partial.tsv`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let out = &config.output_dir;
    for dir in [out.clone(), out.join("models"), out.join("logs")] {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let report_path = out.join("report.tsv");
    let partial_path = out.join("report.partial.tsv");
    for stale in [&report_path, &partial_path] {
        if stale.exists() {
            fs::remove_file(stale).map_err(|e| Error::io(stale, e))?;
        }
    }

    let mut results = Vec::new();
    let mut surrogate = None;
    let outcome = run_variants(config, &mut results, &mut surrogate);
    let rows: Vec<ReportRow> = results
        .iter()
        .map(|r: &EvaluatedModel| ReportRow::new(r.variant.name(), &r.test_set, &r.report))
        .collect();

    let (status, error) = match &outcome {
        Ok(()) => ("complete", None),
        Err(e) => ("failed", Some(e.to_string())),
    };
    if outcome.is_ok() {
        emit_report(&rows, &report_path)?;
    } else if !rows.is_empty() {
        emit_report(&rows, &partial_path)?;
    }
    let manifest = Manifest {
        name: &config.name,
        status,
        error,
        seed: config.seed,
        models: config.models.iter().map(|m| m.name()).collect(),
        orig_surrogate: surrogate,
        report: if outcome.is_ok() {
            "report.tsv"
        } else {
            "report.partial.tsv"
        },
    };
    let manifest_path = out.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;

    outcome?;
    Ok(ExperimentOutcome {
        results,
        report_path,
    })
}

fn run_variants(
    config: &ExperimentConfig,
    results: &mut Vec<EvaluatedModel>,
    surrogate: &mut Option<&'static str>,
) -> Result<()> {
    let ws = Workspace::load(config)?;
    let tests = load_corpora(&config.test_sets)?;
    *surrogate = Some(orig_surrogate(&ws.base));
    let eval_spec = config.eval_spec();

    for &variant in &config.models {
        let encoder = ws.train(variant, config, &config.output_dir.join("logs"))?;
        let model_path = config
            .output_dir
            .join("models")
            .join(format!("{variant}.model"));
        save_model(&encoder, &model_path, config.model_encoding)?;
        for test in &tests {
            let report = evaluate(&encoder, ws.vectors.as_ref(), test, &eval_spec)?;
            results.push(EvaluatedModel {
                variant,
                test_set: test.dataset_id().to_string(),
                report,
            });
        }
    }
    Ok(())
}

/// Loaded training data plus the shared base encoder.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub train: Vec<Corpus>,
    pub all_train: Vec<Corpus>,
    pub vectors: Option<VectorTable>,
    pub base: Encoder,
}

impl Workspace {
    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        let train = load_corpora(&config.train_sets)?;
        let all_train = if config.all_train_sets.is_empty() {
            train.clone()
        } else {
            load_corpora(&config.all_train_sets)?
        };
        let vectors = match (&config.encoder.mode, &config.encoder.vectors) {
            (EncoderMode::FrozenProjection, Some(p)) => Some(load_vectors(p)?),
            _ => None,
        };
        // The vocabulary covers every training corpus any variant will see.
        let mut seen = BTreeSet::new();
        let sources: Vec<&Corpus> = train
            .iter()
            .chain(&all_train)
            .filter(|c| seen.insert(c.dataset_id().to_string()))
            .collect();
        let base = base_encoder(
            &config.encoder,
            &sources,
            vectors.as_ref(),
            config.init_seed(),
        )?;
        Ok(Self {
            train,
            all_train,
            vectors,
            base,
        })
    }

    pub fn corpora_for(&self, variant: ModelVariant) -> Vec<&Corpus> {
        match variant {
            ModelVariant::Orig => Vec::new(),
            ModelVariant::Naive | ModelVariant::Siamese => self.train.iter().collect(),
            ModelVariant::All => self.all_train.iter().collect(),
        }
    }

    /// Trains `variant`, logging epochs to `<log_dir>/<VARIANT>.log`.
    pub fn train(
        &self,
        variant: ModelVariant,
        config: &ExperimentConfig,
        log_dir: &Path,
    ) -> Result<Encoder> {
        fs::create_dir_all(log_dir).map_err(|e| Error::io(log_dir, e))?;
        let log_path = log_dir.join(format!("{variant}.log"));
        let log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
        let corpora = self.corpora_for(variant);
        let (encoder, _) = train_variant(
            variant,
            &self.base,
            &corpora,
            self.vectors.as_ref(),
            config,
            epoch_logger(log),
        )?;
        Ok(encoder)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(models: &[ModelVariant], train: usize, all: usize) -> ExperimentConfig {
        ExperimentConfig {
            models: models.to_vec(),
            train_sets: (0..train)
                .map(|i| PathBuf::from(format!("t{i}.jsonl")))
                .collect(),
            all_train_sets: (0..all)
                .map(|i| PathBuf::from(format!("a{i}.jsonl")))
                .collect(),
            test_sets: vec![PathBuf::from("test.jsonl")],
            ..Default::default()
        }
    }

    #[test]
    fn variant_rules() {
        use ModelVariant::*;
        assert!(cfg(&[Naive], 2, 0)
            .validate()
            .unwrap_err()
            .to_string()
            .contains("train_sets"));
        assert!(cfg(&[Siamese], 1, 0).validate().is_ok());
        assert!(cfg(&[All], 1, 0).validate().is_err());
        assert!(cfg(&[All], 2, 0).validate().is_ok());
        assert!(cfg(&[Orig, Naive, Siamese, All], 1, 3).validate().is_ok());
        assert!(cfg(&[], 1, 0)
            .validate()
            .unwrap_err()
            .to_string()
            .contains("models"));
        let mut frozen = cfg(&[Orig], 0, 0);
        frozen.encoder.mode = EncoderMode::FrozenProjection;
        assert!(frozen.validate().is_err());
        frozen.encoder.vectors = Some("v.tsv".into());
        assert!(frozen.validate().is_ok());
    }

    #[test]
    fn config_json_defaults_and_names() {
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"models": ["ORIG", "SIAMESE"], "train_sets": ["x.jsonl"]}"#)
                .unwrap();
        assert_eq!(c.models, vec![ModelVariant::Orig, ModelVariant::Siamese]);
        assert_eq!(c.episodes.pairs, 70_000);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"modles": []}"#).is_err());
    }

    #[test]
    fn seed_streams_differ() {
        let s: BTreeSet<u64> = (0..5).map(|k| derive_seed(42, k)).collect();
        assert_eq!(s.len(), 5);
        assert_eq!(derive_seed(42, 1), derive_seed(42, 1));
    }
}
