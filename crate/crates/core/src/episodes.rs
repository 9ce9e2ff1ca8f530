//! Balanced same-class / different-class example pairs ("episodes").
//!
//! Sampling is class-first for both kinds of pair: a same-class pair picks
//! a class uniformly among those with at least two examples, then two
//! distinct members; a different-class pair picks an unordered class pair
//! uniformly, then one member of each. Pairs never cross datasets.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EpisodePair {
    /// Index of the source corpus in the slice passed to [`generate_episodes`].
    pub corpus: usize,
    pub a: usize,
    pub b: usize,
    pub same: bool,
}

impl EpisodePair {
    pub fn target(&self) -> u8 {
        u8::from(self.same)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSpec {
    pub quotas: BTreeMap<String, usize>,
    pub same_fraction: f64,
    pub seed: u64,
}

impl EpisodeSpec {
    pub const DEFAULT_SAME_FRACTION: f64 = 0.5;

    pub fn single(dataset_id: impl Into<String>, pairs: usize, seed: u64) -> Self {
        Self {
            quotas: BTreeMap::from([(dataset_id.into(), pairs)]),
            same_fraction: Self::DEFAULT_SAME_FRACTION,
            seed,
        }
    }

    /// Equal quota for every corpus.
    pub fn balanced(corpora: &[Corpus], per_dataset: usize, seed: u64) -> Self {
        Self {
            quotas: corpora
                .iter()
                .map(|c| (c.dataset_id().to_string(), per_dataset))
                .collect(),
            same_fraction: Self::DEFAULT_SAME_FRACTION,
            seed,
        }
    }

    pub fn total(&self) -> usize {
        self.quotas.values().sum()
    }

    fn validate(&self) -> Result<()> {
        if !(self.same_fraction > 0.0 && self.same_fraction < 1.0) {
            return Err(Error::Config(format!(
                "same_fraction {} must lie strictly between 0 and 1",
                self.same_fraction
            )));
        }
        if self.quotas.is_empty() {
            return Err(Error::Config("no episode quotas".into()));
        }
        if let Some((d, _)) = self.quotas.iter().find(|(_, &q)| q == 0) {
            return Err(Error::Config(format!("quota for {d:?} must be at least 1")));
        }
        Ok(())
    }
}

/// Class buckets of one corpus, prepared for sampling.
struct Sampler<'a> {
    buckets: Vec<&'a [usize]>,
    eligible: Vec<usize>,
}

impl<'a> Sampler<'a> {
    fn new(corpus: &'a Corpus) -> Result<Self> {
        let buckets: Vec<&[usize]> = corpus.buckets().map(|(_, m)| m).collect();
        if buckets.len() < 2 {
            return Err(Error::TooFewClasses {
                dataset: corpus.dataset_id().to_string(),
                found: buckets.len(),
            });
        }
        let eligible: Vec<usize> = (0..buckets.len())
            .filter(|&c| buckets[c].len() >= 2)
            .collect();
        if eligible.is_empty() {
            return Err(Error::NoSameClassPairs(corpus.dataset_id().to_string()));
        }
        Ok(Self { buckets, eligible })
    }

    fn same_pair(&self, rng: &mut impl Rng) -> (usize, usize) {
        let class = self.eligible[rng.random_range(0..self.eligible.len())];
        let members = self.buckets[class];
        let (i, j) = distinct_pair(members.len(), rng);
        (members[i], members[j])
    }

    fn different_pair(&self, rng: &mut impl Rng) -> (usize, usize) {
        let (ci, cj) = distinct_pair(self.buckets.len(), rng);
        let (bi, bj) = (self.buckets[ci], self.buckets[cj]);
        (
            bi[rng.random_range(0..bi.len())],
            bj[rng.random_range(0..bj.len())],
        )
    }
}

/// Uniform ordered pair of distinct indices below `n` (n >= 2).
fn distinct_pair(n: usize, rng: &mut impl Rng) -> (usize, usize) {
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

/// Generates exactly `quota` pairs per dataset, `round(quota * same_fraction)`
/// of them same-class, then shuffles the whole sequence.
pub fn generate_episodes(corpora: &[Corpus], spec: &EpisodeSpec) -> Result<Vec<EpisodePair>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pairs = Vec::with_capacity(spec.total());
    for (dataset, &quota) in &spec.quotas {
        let corpus_idx = corpora
            .iter()
            .position(|c| c.dataset_id() == dataset)
            .ok_or_else(|| Error::UnknownDataset(dataset.clone()))?;
        let sampler = Sampler::new(&corpora[corpus_idx])?;
        let n_same = ((quota as f64) * spec.same_fraction).round() as usize;
        for k in 0..quota {
            let same = k < n_same;
            let (a, b) = if same {
                sampler.same_pair(&mut rng)
            } else {
                sampler.different_pair(&mut rng)
            };
            pairs.push(EpisodePair {
                corpus: corpus_idx,
                a,
                b,
                same,
            });
        }
    }
    pairs.shuffle(&mut rng);
    Ok(pairs)
}

/// Writes `<dataset>\t<id_a>\t<id_b>\t<target>` lines.
pub fn write_pair_dump(
    corpora: &[Corpus],
    pairs: &[EpisodePair],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for p in pairs {
        let c = &corpora[p.corpus];
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            c.dataset_id(),
            c.examples()[p.a].id,
            c.examples()[p.b].id,
            p.target()
        )
        .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
