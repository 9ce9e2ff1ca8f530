//! Seeded synthetic corpora standing in for real labeled datasets.
//!
//! Every class owns a pool of class tokens; all classes share one pool of
//! domain (noise) tokens. Each text mixes tokens from its class pool with
//! tokens from the shared pool, in proportions set by `overlap`.
//!
//! With `unseen_test_classes > 0` the test split uses new labels: unseen
//! class `j` draws its class tokens from the union of the pools of a
//! contiguous group of training classes, so its tokens are known to a
//! vocabulary built on the training split while the labels are not.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabeledExample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Dataset name; also prefixes tokens, ids and labels.
    pub name: String,
    pub classes: usize,
    /// 0 keeps the training classes for the test split.
    pub unseen_test_classes: usize,
    pub tokens_per_class: usize,
    pub shared_tokens: usize,
    pub tokens_per_text: usize,
    /// Fraction of each text's tokens drawn from the shared pool.
    pub overlap: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            name: "synth".into(),
            classes: 4,
            unseen_test_classes: 0,
            tokens_per_class: 5,
            shared_tokens: 40,
            tokens_per_text: 8,
            overlap: 0.75,
            train_per_class: 50,
            test_per_class: 20,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.classes < 2 {
            return bad("synthetic corpus needs at least 2 classes".into());
        }
        if self.unseen_test_classes == 1 || self.unseen_test_classes > self.classes {
            return bad(format!(
                "unseen_test_classes must be 0 or between 2 and {}",
                self.classes
            ));
        }
        if self.tokens_per_class == 0 || self.tokens_per_text == 0 {
            return bad("token pool and text length must be positive".into());
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return bad(format!("overlap {} must lie in [0, 1)", self.overlap));
        }
        if self.overlap > 0.0 && self.shared_tokens == 0 {
            return bad("overlap > 0 needs shared tokens".into());
        }
        if self.train_per_class < 2 || self.test_per_class < 2 {
            return bad("need at least 2 examples per class on each side".into());
        }
        Ok(())
    }

    pub fn class_tokens_per_text(&self) -> usize {
        let n = (self.tokens_per_text as f64 * (1.0 - self.overlap)).round() as usize;
        n.clamp(1, self.tokens_per_text)
    }
}

/// Returns `(train, test)`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Corpus, Corpus)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let name = &spec.name;
    let pools: Vec<Vec<String>> = (0..spec.classes)
        .map(|c| {
            (0..spec.tokens_per_class)
                .map(|i| format!("{name}c{c}w{i}"))
                .collect()
        })
        .collect();
    let shared: Vec<String> = (0..spec.shared_tokens)
        .map(|i| format!("{name}s{i}"))
        .collect();

    let train_classes: Vec<(String, Vec<String>)> = pools
        .iter()
        .enumerate()
        .map(|(c, p)| (format!("{name}-class{c}"), p.clone()))
        .collect();
    let test_classes: Vec<(String, Vec<String>)> =
        match spec.classes.checked_div(spec.unseen_test_classes) {
            None => train_classes.clone(),
            Some(group) => (0..spec.unseen_test_classes)
                .map(|j| {
                    let pool = pools[j * group..(j + 1) * group].concat();
                    (format!("{name}-unseen{j}"), pool)
                })
                .collect(),
        };

    let n_class = spec.class_tokens_per_text();
    let mut make = |classes: &[(String, Vec<String>)], per_class: usize, split: &str| {
        let mut examples = Vec::with_capacity(classes.len() * per_class);
        for (label, pool) in classes {
            for j in 0..per_class {
                let mut tokens: Vec<&str> = (0..spec.tokens_per_text)
                    .map(|k| {
                        if k < n_class {
                            pool[rng.random_range(0..pool.len())].as_str()
                        } else {
                            shared[rng.random_range(0..shared.len())].as_str()
                        }
                    })
                    .collect();
                tokens.shuffle(&mut rng);
                examples.push(LabeledExample {
                    id: format!("{name}-{split}-{label}-{j}"),
                    text: tokens.join(" "),
                    class_label: label.clone(),
                    dataset_id: String::new(),
                });
            }
        }
        examples.shuffle(&mut rng);
        examples
    };
    let train = make(&train_classes, spec.train_per_class, "train");
    let test = make(&test_classes, spec.test_per_class, "test");
    Ok((
        Corpus::new(format!("{name}-train"), train)?,
        Corpus::new(format!("{name}-test"), test)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::tokenize;
    use std::collections::BTreeSet;

    #[test]
    fn seen_classes_share_labels() {
        let (train, test) = generate_synthetic(&SyntheticSpec::default()).unwrap();
        assert_eq!(train.num_classes(), 4);
        assert_eq!(train.len(), 200);
        assert_eq!(test.len(), 80);
        assert!(train.class_labels().eq(test.class_labels()));
    }

    #[test]
    fn unseen_classes_reuse_training_tokens() {
        let spec = SyntheticSpec {
            classes: 8,
            unseen_test_classes: 4,
            ..Default::default()
        };
        let (train, test) = generate_synthetic(&spec).unwrap();
        let train_labels: BTreeSet<_> = train.class_labels().collect();
        let test_labels: BTreeSet<_> = test.class_labels().collect();
        assert!(train_labels.is_disjoint(&test_labels));
        assert_eq!(test.num_classes(), 4);
        let train_tokens: BTreeSet<String> = train
            .examples()
            .iter()
            .flat_map(|e| tokenize(&e.text))
            .collect();
        for ex in test.examples() {
            for t in tokenize(&ex.text) {
                assert!(train_tokens.contains(&t), "{t}");
            }
        }
    }

    #[test]
    fn text_composition() {
        let spec = SyntheticSpec {
            overlap: 0.75,
            tokens_per_text: 8,
            ..Default::default()
        };
        assert_eq!(spec.class_tokens_per_text(), 2);
        let (train, _) = generate_synthetic(&spec).unwrap();
        for ex in train.examples() {
            let toks = tokenize(&ex.text);
            assert_eq!(toks.len(), 8);
            let class_toks = toks
                .iter()
                .filter(|t| t.contains('c') && t.contains('w'))
                .count();
            assert_eq!(class_toks, 2);
        }
    }

    #[test]
    fn seeded() {
        let a = generate_synthetic(&SyntheticSpec::default()).unwrap();
        let b = generate_synthetic(&SyntheticSpec::default()).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&SyntheticSpec {
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate_synthetic(&SyntheticSpec {
            classes: 1,
            ..Default::default()
        })
        .is_err());
        assert!(generate_synthetic(&SyntheticSpec {
            unseen_test_classes: 1,
            ..Default::default()
        })
        .is_err());
        assert!(generate_synthetic(&SyntheticSpec {
            overlap: 1.0,
            ..Default::default()
        })
        .is_err());
    }
}
