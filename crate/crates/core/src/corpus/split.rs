use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum SplitMode {
    /// Shuffle examples and put `round(train_fraction * n)` of them on the train side.
    RandomByExample { train_fraction: f64 },
    /// Shuffle class labels and put `round(train_fraction * k)` classes on the train side.
    ByClassFraction { train_fraction: f64 },
    /// Named classes go to the test side, the rest to train.
    ByClassList { test_classes: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub seed: u64,
}

impl SplitSpec {
    pub fn random_by_example(train_fraction: f64, seed: u64) -> Self {
        Self {
            mode: SplitMode::RandomByExample { train_fraction },
            seed,
        }
    }

    pub fn by_class_fraction(train_fraction: f64, seed: u64) -> Self {
        Self {
            mode: SplitMode::ByClassFraction { train_fraction },
            seed,
        }
    }

    pub fn by_class_list(test_classes: Vec<String>) -> Self {
        Self {
            mode: SplitMode::ByClassList { test_classes },
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        match &self.mode {
            SplitMode::RandomByExample { train_fraction }
            | SplitMode::ByClassFraction { train_fraction } => {
                if !(*train_fraction > 0.0 && *train_fraction < 1.0) {
                    return Err(Error::InvalidSplit(format!(
                        "fraction {train_fraction} must lie strictly between 0 and 1"
                    )));
                }
            }
            SplitMode::ByClassList { test_classes } => {
                if test_classes.is_empty() {
                    return Err(Error::InvalidSplit("empty test class list".into()));
                }
            }
        }
        Ok(())
    }
}

/// Partitions `corpus` into `(train, test)`; both sides keep the original
/// record order and dataset id.
pub fn split_corpus(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut on_train = vec![false; corpus.len()];

    match &spec.mode {
        SplitMode::RandomByExample { train_fraction } => {
            let n = corpus.len();
            let n_train = (train_fraction * n as f64).round() as usize;
            if n_train == 0 || n_train == n {
                return Err(Error::InvalidSplit(format!(
                    "fraction {train_fraction} of {n} examples leaves one side empty"
                )));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            for &i in &order[..n_train] {
                on_train[i] = true;
            }
        }
        SplitMode::ByClassFraction { train_fraction } => {
            let k = corpus.num_classes();
            let n_train = (train_fraction * k as f64).round() as usize;
            check_class_counts(n_train, k)?;
            let mut buckets: Vec<&[usize]> = corpus.buckets().map(|(_, m)| m).collect();
            buckets.shuffle(&mut rng);
            for members in &buckets[..n_train] {
                for &i in members.iter() {
                    on_train[i] = true;
                }
            }
        }
        SplitMode::ByClassList { test_classes } => {
            for label in test_classes {
                if !corpus.class_index().contains_key(label) {
                    return Err(Error::InvalidSplit(format!("unknown class {label:?}")));
                }
            }
            let n_test = corpus
                .class_labels()
                .filter(|l| test_classes.iter().any(|t| t == l))
                .count();
            check_class_counts(corpus.num_classes() - n_test, corpus.num_classes())?;
            for (label, members) in corpus.buckets() {
                if !test_classes.iter().any(|t| t == label) {
                    for &i in members {
                        on_train[i] = true;
                    }
                }
            }
        }
    }

    let side = |train: bool| {
        let examples = corpus
            .examples()
            .iter()
            .zip(&on_train)
            .filter(|(_, &t)| t == train)
            .map(|(ex, _)| ex.clone())
            .collect();
        Corpus::new(corpus.dataset_id(), examples).map_err(|e| match e {
            Error::TooFewClasses { found, .. } => Error::InvalidSplit(format!(
                "{} side would have {found} class(es); at least 2 are required",
                if train { "train" } else { "test" }
            )),
            other => other,
        })
    };
    Ok((side(true)?, side(false)?))
}

fn check_class_counts(n_train: usize, k: usize) -> Result<()> {
    if n_train < 2 || k - n_train < 2 {
        return Err(Error::InvalidSplit(format!(
            "{n_train} train / {} test classes; each side needs at least 2",
            k - n_train
        )));
    }
    Ok(())
}
