use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Adam, EpochSummary, NaiveConfig, TrainingReport};
use crate::encoder::{EncoderConfig, EncoderGradient, EncoderInput, EncoderParams, PreparedInput};
use crate::error::{Error, Result};
use crate::linalg::{axpy, Matrix};

/// Classification head used only during naive finetuning, then discarded.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub wh: Matrix,
    pub bh: Vec<f64>,
    pub wo: Matrix,
    pub bo: Vec<f64>,
}

impl HeadParams {
    pub fn zeros(d_in: usize, hidden: usize, n_classes: usize) -> Self {
        Self {
            wh: Matrix::zeros(hidden, d_in),
            bh: vec![0.0; hidden],
            wo: Matrix::zeros(n_classes, hidden),
            bo: vec![0.0; n_classes],
        }
    }

    pub fn init(d_in: usize, hidden: usize, n_classes: usize, rng: &mut impl rand::Rng) -> Self {
        Self {
            wh: Matrix::uniform(hidden, d_in, 1.0 / (d_in as f64).sqrt(), rng),
            bh: vec![0.0; hidden],
            wo: Matrix::uniform(n_classes, hidden, 1.0 / (hidden as f64).sqrt(), rng),
            bo: vec![0.0; n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.bo.len()
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![self.wh.as_slice(), &self.bh, self.wo.as_slice(), &self.bo]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.wh.as_mut_slice(),
            &mut self.bh,
            self.wo.as_mut_slice(),
            &mut self.bo,
        ]
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.wh.cols(), self.bh.len(), self.bo.len())
    }

    /// Logits and the intermediate values needed for backprop.
    fn forward(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let pre = self.wh.affine(z, &self.bh);
        let hidden: Vec<f64> = pre.iter().map(|&a| a.max(0.0)).collect();
        let logits = self.wo.affine(&hidden, &self.bo);
        (pre, hidden, logits)
    }

    pub fn predict(&self, z: &[f64]) -> usize {
        let (_, _, logits) = self.forward(z);
        logits
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &l)| {
                if l > best.1 {
                    (i, l)
                } else {
                    best
                }
            })
            .0
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax cross-entropy of one example; gradients flow through the head
/// into the encoder.
#[allow(clippy::too_many_arguments)]
pub fn naive_example_gradient(
    params: &EncoderParams,
    config: &EncoderConfig,
    head: &HeadParams,
    input: EncoderInput<'_>,
    class: usize,
    enc_grad: &mut EncoderGradient,
    head_grad: &mut HeadParams,
) -> Result<f64> {
    if class >= head.n_classes() {
        return Err(Error::ShapeMismatch(format!(
            "class {class} outside head with {} classes",
            head.n_classes()
        )));
    }
    let cache = params.forward(config, input)?;
    let z = &cache.output;
    if z.len() != head.wh.cols() {
        return Err(Error::ShapeMismatch(
            "head input width differs from encoder output".into(),
        ));
    }
    let (pre, hidden, logits) = head.forward(z);
    let probs = softmax(&logits);
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    let loss = log_sum - logits[class];

    let mut d_logits = probs;
    d_logits[class] -= 1.0;
    axpy(1.0, &d_logits, &mut head_grad.bo);
    head_grad.wo.add_outer(&d_logits, &hidden);
    let mut d_pre = head.wo.transpose_mul(&d_logits);
    for (d, &a) in d_pre.iter_mut().zip(&pre) {
        if a <= 0.0 {
            *d = 0.0;
        }
    }
    axpy(1.0, &d_pre, &mut head_grad.bh);
    head_grad.wh.add_outer(&d_pre, z);
    let d_z = head.wh.transpose_mul(&d_pre);
    params.backward(config, input, &cache, &d_z, enc_grad)?;
    Ok(loss)
}

pub fn train_naive(
    params: EncoderParams,
    config: &EncoderConfig,
    inputs: &[PreparedInput],
    labels: &[usize],
    n_classes: usize,
    ncfg: &NaiveConfig,
) -> Result<(EncoderParams, HeadParams, TrainingReport)> {
    train_naive_with(params, config, inputs, labels, n_classes, ncfg, |_| {})
}

/// End-to-end classification finetuning over the whole corpus, reshuffled
/// each epoch. Returns the finetuned encoder and the head.
pub fn train_naive_with(
    mut params: EncoderParams,
    config: &EncoderConfig,
    inputs: &[PreparedInput],
    labels: &[usize],
    n_classes: usize,
    ncfg: &NaiveConfig,
    mut observer: impl FnMut(&EpochSummary),
) -> Result<(EncoderParams, HeadParams, TrainingReport)> {
    ncfg.validate()?;
    params.check(config)?;
    if n_classes < 2 {
        return Err(Error::Config(
            "naive finetuning needs at least 2 classes".into(),
        ));
    }
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} inputs but {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::ShapeMismatch(format!(
            "label {bad} outside {n_classes} classes"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(ncfg.seed);
    let mut head = HeadParams::init(config.d_out, ncfg.hidden_dim, n_classes, &mut rng);
    let mut report = TrainingReport {
        items_per_epoch: inputs.len(),
        ..Default::default()
    };
    let all_tensors: Vec<&[f64]> = params.tensors().into_iter().chain(head.tensors()).collect();
    let mut adam = Adam::new(&all_tensors);
    let mut enc_grad = EncoderGradient::zeros_like(&params);
    let mut head_grad = head.zeros_like();
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let start = Instant::now();

    for epoch in 0..ncfg.epochs {
        let epoch_start = Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (batch_idx, batch) in order.chunks(ncfg.batch_size).enumerate() {
            enc_grad.reset();
            head_grad
                .tensors_mut()
                .into_iter()
                .for_each(|t| t.fill(0.0));
            let mut batch_loss = 0.0;
            for &i in batch {
                batch_loss += naive_example_gradient(
                    &params,
                    config,
                    &head,
                    inputs[i].as_input(),
                    labels[i],
                    &mut enc_grad,
                    &mut head_grad,
                )?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: batch_idx + 1,
                });
            }
            total += batch_loss;
            let scale = 1.0 / batch.len() as f64;
            enc_grad.scale(scale);
            for t in head_grad.tensors_mut() {
                t.iter_mut().for_each(|v| *v *= scale);
            }
            let targets: Vec<&mut [f64]> = params
                .tensors_mut()
                .into_iter()
                .chain(head.tensors_mut())
                .collect();
            let grads: Vec<&[f64]> = enc_grad
                .tensors()
                .into_iter()
                .chain(head_grad.tensors())
                .collect();
            adam.step(targets, grads, ncfg.learning_rate)?;
        }
        let mean_loss = total / inputs.len() as f64;
        report.epoch_losses.push(mean_loss);
        report.epoch_times.push(epoch_start.elapsed());
        observer(&EpochSummary {
            epoch: epoch + 1,
            mean_loss,
            elapsed: start.elapsed(),
        });
    }
    Ok((params, head, report))
}

/// Fraction of examples whose argmax prediction equals the label.
pub fn naive_accuracy(
    params: &EncoderParams,
    config: &EncoderConfig,
    head: &HeadParams,
    inputs: &[PreparedInput],
    labels: &[usize],
) -> Result<f64> {
    let mut correct = 0usize;
    for (input, &label) in inputs.iter().zip(labels) {
        let z = params.encode(config, input.as_input())?;
        if head.predict(&z) == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / inputs.len().max(1) as f64)
}
