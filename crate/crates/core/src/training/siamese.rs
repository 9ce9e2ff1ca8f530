use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    cosine_similarity_grad, siamese_loss, Adam, EpochSummary, SiameseConfig, TrainingReport,
};
use crate::encoder::{EncoderConfig, EncoderGradient, EncoderInput, EncoderParams, PreparedInput};
use crate::episodes::EpisodePair;
use crate::error::{Error, Result};

/// Loss of one pair; both branches run through the same `params` and their
/// gradients (including the cosine backward through each argument)
/// accumulate into `grad`.
#[allow(clippy::too_many_arguments)]
pub fn siamese_pair_gradient(
    params: &EncoderParams,
    config: &EncoderConfig,
    a: EncoderInput<'_>,
    b: EncoderInput<'_>,
    target: f64,
    epsilon_norm: f64,
    grad: &mut EncoderGradient,
) -> Result<f64> {
    let cache_a = params.forward(config, a)?;
    let cache_b = params.forward(config, b)?;
    let (sim, d_a, d_b) = cosine_similarity_grad(&cache_a.output, &cache_b.output, epsilon_norm)?;
    let (loss, d_sim) = siamese_loss(sim, target);
    if d_sim != 0.0 {
        let up_a: Vec<f64> = d_a.iter().map(|g| g * d_sim).collect();
        let up_b: Vec<f64> = d_b.iter().map(|g| g * d_sim).collect();
        params.backward(config, a, &cache_a, &up_a, grad)?;
        params.backward(config, b, &cache_b, &up_b, grad)?;
    }
    Ok(loss)
}

pub fn train_siamese(
    params: EncoderParams,
    config: &EncoderConfig,
    pairs: &[EpisodePair],
    inputs: &[Vec<PreparedInput>],
    scfg: &SiameseConfig,
) -> Result<(EncoderParams, TrainingReport)> {
    train_siamese_with(params, config, pairs, inputs, scfg, |_| {})
}

/// Mini-batch Siamese training over a fixed pair set whose order is
/// reshuffled every epoch. `inputs[c][i]` is example `i` of corpus `c`.
pub fn train_siamese_with(
    mut params: EncoderParams,
    config: &EncoderConfig,
    pairs: &[EpisodePair],
    inputs: &[Vec<PreparedInput>],
    scfg: &SiameseConfig,
    mut observer: impl FnMut(&EpochSummary),
) -> Result<(EncoderParams, TrainingReport)> {
    scfg.validate()?;
    params.check(config)?;
    if pairs.is_empty() {
        return Err(Error::Config("no training pairs".into()));
    }
    for p in pairs {
        let n = inputs.get(p.corpus).map_or(0, Vec::len);
        if p.a >= n || p.b >= n {
            return Err(Error::ShapeMismatch(format!(
                "pair references example outside corpus {}",
                p.corpus
            )));
        }
    }

    let mut report = TrainingReport {
        items_per_epoch: pairs.len(),
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(scfg.seed);
    let mut adam = Adam::new(&params.tensors());
    let mut grad = EncoderGradient::zeros_like(&params);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let start = Instant::now();

    for epoch in 0..scfg.epochs {
        let epoch_start = Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (batch_idx, batch) in order.chunks(scfg.batch_size).enumerate() {
            grad.reset();
            let mut batch_loss = 0.0;
            for &k in batch {
                let p = &pairs[k];
                let side = &inputs[p.corpus];
                batch_loss += siamese_pair_gradient(
                    &params,
                    config,
                    side[p.a].as_input(),
                    side[p.b].as_input(),
                    scfg.target(p.same),
                    scfg.epsilon_norm,
                    &mut grad,
                )?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: batch_idx + 1,
                });
            }
            total += batch_loss;
            grad.scale(1.0 / batch.len() as f64);
            adam.step(params.tensors_mut(), grad.tensors(), scfg.learning_rate)?;
        }
        let mean_loss = total / pairs.len() as f64;
        report.epoch_losses.push(mean_loss);
        report.epoch_times.push(epoch_start.elapsed());
        observer(&EpochSummary {
            epoch: epoch + 1,
            mean_loss,
            elapsed: start.elapsed(),
        });
    }
    Ok((params, report))
}
