//! Differentiable sentence encoder.
//!
//! Two input modes share one projection network `z = W2 relu(W1 m + b1) + b2`:
//! in trainable mode `m` is the mean of token-embedding rows, in frozen
//! mode `m` is a precomputed sentence vector and no embedding table exists.

mod model_file;
mod vocab;

pub use model_file::{load_model, save_model, ModelEncoding, MODEL_FORMAT_VERSION};
pub use vocab::{build_vocab, tokenize, Vocabulary, UNK_INDEX, UNK_TOKEN};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabeledExample, VectorTable};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, axpy, Matrix};

/// Default output dimensionality, matching common pretrained sentence encoders.
pub const DEFAULT_OUTPUT_DIM: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderMode {
    Trainable,
    FrozenProjection,
}

impl EncoderMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EncoderMode::Trainable => "trainable",
            EncoderMode::FrozenProjection => "frozen-projection",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub mode: EncoderMode,
    /// Token-embedding width (trainable mode).
    pub d_tok: usize,
    /// Input vector width (frozen mode).
    pub d_in: usize,
    pub hidden: usize,
    pub d_out: usize,
}

impl EncoderConfig {
    pub fn trainable(d_tok: usize, hidden: usize, d_out: usize) -> Self {
        Self {
            mode: EncoderMode::Trainable,
            d_tok,
            d_in: d_tok,
            hidden,
            d_out,
        }
    }

    pub fn frozen(d_in: usize, hidden: usize, d_out: usize) -> Self {
        Self {
            mode: EncoderMode::FrozenProjection,
            d_tok: d_in,
            d_in,
            hidden,
            d_out,
        }
    }

    /// Width of the pooled vector fed to the first layer.
    pub fn input_dim(&self) -> usize {
        match self.mode {
            EncoderMode::Trainable => self.d_tok,
            EncoderMode::FrozenProjection => self.d_in,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim() == 0 || self.hidden == 0 || self.d_out == 0 {
            return Err(Error::Config(format!(
                "encoder dimensions must be at least 1 (input {}, hidden {}, output {})",
                self.input_dim(),
                self.hidden,
                self.d_out
            )));
        }
        Ok(())
    }
}

/// The single shared parameter set of the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// `|V| x d_tok`; absent in frozen mode.
    pub embedding: Option<Matrix>,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

/// Additive gradient accumulator, shape-identical to its [`EncoderParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGradient(EncoderParams);

/// Borrowed encoder input.
#[derive(Debug, Clone, Copy)]
pub enum EncoderInput<'a> {
    Tokens(&'a [usize]),
    Vector(&'a [f64]),
}

/// Owned encoder input, prepared once per example.
#[derive(Debug, Clone, PartialEq)]
pub enum PreparedInput {
    Tokens(Vec<usize>),
    Vector(Vec<f64>),
}

impl PreparedInput {
    pub fn as_input(&self) -> EncoderInput<'_> {
        match self {
            PreparedInput::Tokens(t) => EncoderInput::Tokens(t),
            PreparedInput::Vector(v) => EncoderInput::Vector(v),
        }
    }
}

/// Intermediate values of one forward pass, needed by the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub pooled: Vec<f64>,
    pub pre_activation: Vec<f64>,
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

impl EncoderParams {
    pub fn zeros(config: &EncoderConfig, vocab_size: usize) -> Self {
        let d = config.input_dim();
        Self {
            embedding: (config.mode == EncoderMode::Trainable)
                .then(|| Matrix::zeros(vocab_size, config.d_tok)),
            w1: Matrix::zeros(config.hidden, d),
            b1: vec![0.0; config.hidden],
            w2: Matrix::zeros(config.d_out, config.hidden),
            b2: vec![0.0; config.d_out],
        }
    }

    /// Seeded initialization.
    ///
    /// Weight matrices are uniform in `±1/sqrt(fan_in)`, the embedding table
    /// uniform in `±0.1`, biases zero. A frozen-mode encoder with
    /// `d_in == d_out` and `hidden >= 2 d_in` starts as the exact identity
    /// map, since `relu(m) - relu(-m) = m`.
    pub fn init(config: &EncoderConfig, vocab_size: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.mode == EncoderMode::Trainable && vocab_size == 0 {
            return Err(Error::Config(
                "trainable encoder needs a non-empty vocabulary".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.input_dim();
        let embedding = (config.mode == EncoderMode::Trainable)
            .then(|| Matrix::uniform(vocab_size, config.d_tok, 0.1, &mut rng));
        let mut w1 = Matrix::uniform(config.hidden, d, 1.0 / (d as f64).sqrt(), &mut rng);
        let mut w2 = Matrix::uniform(
            config.d_out,
            config.hidden,
            1.0 / (config.hidden as f64).sqrt(),
            &mut rng,
        );
        if config.mode == EncoderMode::FrozenProjection
            && config.d_in == config.d_out
            && config.hidden >= 2 * config.d_in
        {
            for r in 0..2 * d {
                w1.row_mut(r).fill(0.0);
            }
            for i in 0..d {
                w1.set(i, i, 1.0);
                w1.set(d + i, i, -1.0);
                let row = w2.row_mut(i);
                row.fill(0.0);
                row[i] = 1.0;
                row[d + i] = -1.0;
            }
        }
        Ok(Self {
            embedding,
            w1,
            b1: vec![0.0; config.hidden],
            w2,
            b2: vec![0.0; config.d_out],
        })
    }

    /// Checks shapes against `config` and that every entry is finite.
    pub fn check(&self, config: &EncoderConfig) -> Result<()> {
        config.validate()?;
        let d = config.input_dim();
        match (config.mode, &self.embedding) {
            (EncoderMode::Trainable, Some(e)) if e.cols() == config.d_tok && e.rows() > 0 => {}
            (EncoderMode::FrozenProjection, None) => {}
            _ => {
                return Err(Error::ShapeMismatch(format!(
                    "embedding table inconsistent with {} mode",
                    config.mode.as_str()
                )))
            }
        }
        if self.w1.shape() != (config.hidden, d)
            || self.b1.len() != config.hidden
            || self.w2.shape() != (config.d_out, config.hidden)
            || self.b2.len() != config.d_out
        {
            return Err(Error::ShapeMismatch(
                "projection shapes inconsistent with config".into(),
            ));
        }
        if !self.tensors().iter().all(|t| all_finite(t)) {
            return Err(Error::NonFinite("encoder parameters".into()));
        }
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.as_ref().map_or(0, Matrix::rows)
    }

    /// Flat views in a fixed order: embedding (if any), W1, b1, W2, b2.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(5);
        if let Some(e) = &self.embedding {
            out.push(e.as_slice());
        }
        out.extend([self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(5);
        if let Some(e) = &mut self.embedding {
            out.push(e.as_mut_slice());
        }
        out.push(self.w1.as_mut_slice());
        out.push(&mut self.b1);
        out.push(self.w2.as_mut_slice());
        out.push(&mut self.b2);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn pool(&self, config: &EncoderConfig, input: EncoderInput<'_>) -> Result<Vec<f64>> {
        match (config.mode, input) {
            (EncoderMode::Trainable, EncoderInput::Tokens(tokens)) => {
                let table = self
                    .embedding
                    .as_ref()
                    .ok_or_else(|| Error::ShapeMismatch("missing embedding table".into()))?;
                if tokens.is_empty() {
                    return Err(Error::ShapeMismatch("empty token sequence".into()));
                }
                let mut pooled = vec![0.0; config.d_tok];
                for &t in tokens {
                    if t >= table.rows() {
                        return Err(Error::ShapeMismatch(format!(
                            "token index {t} outside vocabulary of {}",
                            table.rows()
                        )));
                    }
                    axpy(1.0, table.row(t), &mut pooled);
                }
                let n = tokens.len() as f64;
                pooled.iter_mut().for_each(|v| *v /= n);
                Ok(pooled)
            }
            (EncoderMode::FrozenProjection, EncoderInput::Vector(v)) => {
                if v.len() != config.d_in {
                    return Err(Error::ShapeMismatch(format!(
                        "input vector has length {}, encoder expects {}",
                        v.len(),
                        config.d_in
                    )));
                }
                Ok(v.to_vec())
            }
            (mode, _) => Err(Error::ShapeMismatch(format!(
                "input kind does not match {} mode",
                mode.as_str()
            ))),
        }
    }

    pub fn forward(&self, config: &EncoderConfig, input: EncoderInput<'_>) -> Result<ForwardCache> {
        let pooled = self.pool(config, input)?;
        let pre_activation = self.w1.affine(&pooled, &self.b1);
        let hidden: Vec<f64> = pre_activation.iter().map(|&a| a.max(0.0)).collect();
        let output = self.w2.affine(&hidden, &self.b2);
        Ok(ForwardCache {
            pooled,
            pre_activation,
            hidden,
            output,
        })
    }

    pub fn encode(&self, config: &EncoderConfig, input: EncoderInput<'_>) -> Result<Vec<f64>> {
        let z = self.forward(config, input)?.output;
        if !all_finite(&z) {
            return Err(Error::NonFinite("encoder output".into()));
        }
        Ok(z)
    }

    /// Adds `(dz/dθ)^T upstream` into `grad` for every parameter θ.
    ///
    /// `cache` must come from `forward` on the same `input`. The relu
    /// subgradient at exactly zero is zero.
    pub fn backward(
        &self,
        config: &EncoderConfig,
        input: EncoderInput<'_>,
        cache: &ForwardCache,
        upstream: &[f64],
        grad: &mut EncoderGradient,
    ) -> Result<()> {
        if upstream.len() != config.d_out {
            return Err(Error::ShapeMismatch(format!(
                "upstream gradient has length {}, expected {}",
                upstream.len(),
                config.d_out
            )));
        }
        if !grad.matches(self) {
            return Err(Error::ShapeMismatch(
                "gradient accumulator does not match parameters".into(),
            ));
        }
        let g = &mut grad.0;
        axpy(1.0, upstream, &mut g.b2);
        g.w2.add_outer(upstream, &cache.hidden);

        let mut delta = self.w2.transpose_mul(upstream);
        for (d, &a) in delta.iter_mut().zip(&cache.pre_activation) {
            if a <= 0.0 {
                *d = 0.0;
            }
        }
        axpy(1.0, &delta, &mut g.b1);
        g.w1.add_outer(&delta, &cache.pooled);

        if let (EncoderInput::Tokens(tokens), Some(table_grad)) = (input, g.embedding.as_mut()) {
            let d_pooled = self.w1.transpose_mul(&delta);
            let scale = 1.0 / tokens.len() as f64;
            for &t in tokens {
                axpy(scale, &d_pooled, table_grad.row_mut(t));
            }
        }
        Ok(())
    }

    /// Recomputes the forward pass, then accumulates the backward pass.
    pub fn encode_backward(
        &self,
        config: &EncoderConfig,
        input: EncoderInput<'_>,
        upstream: &[f64],
        grad: &mut EncoderGradient,
    ) -> Result<()> {
        let cache = self.forward(config, input)?;
        self.backward(config, input, &cache, upstream, grad)
    }
}

impl EncoderGradient {
    pub fn zeros_like(params: &EncoderParams) -> Self {
        let mut g = params.clone();
        g.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        Self(g)
    }

    pub fn matches(&self, params: &EncoderParams) -> bool {
        let (a, b) = (self.0.tensors(), params.tensors());
        a.len() == b.len()
            && a.iter().zip(&b).all(|(x, y)| x.len() == y.len())
            && self.0.w1.shape() == params.w1.shape()
            && self.0.w2.shape() == params.w2.shape()
    }

    pub fn reset(&mut self) {
        self.0.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.0.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn as_params(&self) -> &EncoderParams {
        &self.0
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.0.tensors()
    }
}

/// A complete encoder: configuration, parameters and (trainable mode) vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub params: EncoderParams,
    pub vocab: Option<Vocabulary>,
}

impl Encoder {
    pub fn new_trainable(config: EncoderConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        if config.mode != EncoderMode::Trainable {
            return Err(Error::Config("expected a trainable-mode config".into()));
        }
        let params = EncoderParams::init(&config, vocab.len(), seed)?;
        Ok(Self {
            config,
            params,
            vocab: Some(vocab),
        })
    }

    pub fn new_frozen(config: EncoderConfig, seed: u64) -> Result<Self> {
        if config.mode != EncoderMode::FrozenProjection {
            return Err(Error::Config("expected a frozen-projection config".into()));
        }
        let params = EncoderParams::init(&config, 0, seed)?;
        Ok(Self {
            config,
            params,
            vocab: None,
        })
    }

    pub fn check(&self) -> Result<()> {
        self.params.check(&self.config)?;
        match (self.config.mode, &self.vocab) {
            (EncoderMode::Trainable, Some(v)) if v.len() == self.params.vocab_size() => Ok(()),
            (EncoderMode::FrozenProjection, None) => Ok(()),
            _ => Err(Error::ShapeMismatch(
                "vocabulary inconsistent with parameters".into(),
            )),
        }
    }

    /// Turns an example into encoder input: token indices in trainable mode,
    /// its precomputed vector (looked up by id) in frozen mode.
    pub fn prepare(
        &self,
        example: &LabeledExample,
        vectors: Option<&VectorTable>,
    ) -> Result<PreparedInput> {
        match self.config.mode {
            EncoderMode::Trainable => {
                let vocab = self
                    .vocab
                    .as_ref()
                    .ok_or_else(|| Error::Config("trainable encoder has no vocabulary".into()))?;
                Ok(PreparedInput::Tokens(vocab.encode(&example.text)))
            }
            EncoderMode::FrozenProjection => {
                let table = vectors.ok_or_else(|| {
                    Error::Config("frozen-projection mode requires a vector table".into())
                })?;
                let v = table
                    .get(&example.id)
                    .ok_or_else(|| Error::MissingVector(example.id.clone()))?;
                Ok(PreparedInput::Vector(v.to_vec()))
            }
        }
    }

    pub fn prepare_corpus(
        &self,
        corpus: &Corpus,
        vectors: Option<&VectorTable>,
    ) -> Result<Vec<PreparedInput>> {
        corpus
            .examples()
            .iter()
            .map(|ex| self.prepare(ex, vectors))
            .collect()
    }

    pub fn embed(
        &self,
        example: &LabeledExample,
        vectors: Option<&VectorTable>,
    ) -> Result<Vec<f64>> {
        let input = self.prepare(example, vectors)?;
        self.params.encode(&self.config, input.as_input())
    }
}

#[cfg(test)]
mod tests;
