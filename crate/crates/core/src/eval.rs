//! ΔCosineDistance: mean cosine distance of different-class pairs minus
//! mean cosine distance of same-class pairs, over class-balanced random
//! test pairs.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabeledExample};
use crate::episodes::{generate_episodes, EpisodeSpec};
use crate::error::{Error, Result};
use crate::linalg::all_finite;
use crate::numfmt::sig9;
use crate::training::cosine_similarity;

pub const DEFAULT_EVAL_PAIRS: usize = 5_000;
const NORM_EPSILON: f64 = 1e-12;

pub const REPORT_HEADER: &str =
    "model\ttest_set\tn_pairs\tmean_same\tmean_diff\tsame_stderr\tdiff_stderr\tdelta";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSpec {
    pub n_pairs: usize,
    pub same_fraction: f64,
    pub seed: u64,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            n_pairs: DEFAULT_EVAL_PAIRS,
            same_fraction: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaReport {
    /// Number of different-class pairs.
    pub n_diff: usize,
    /// Number of same-class pairs.
    pub n_same: usize,
    pub mean_diff_distance: f64,
    pub mean_same_distance: f64,
    pub diff_stderr: f64,
    pub same_stderr: f64,
    pub delta: f64,
}

impl DeltaReport {
    pub fn n_pairs(&self) -> usize {
        self.n_diff + self.n_same
    }

    /// Standard error of `delta`, treating the two means as independent.
    pub fn delta_stderr(&self) -> f64 {
        self.diff_stderr.hypot(self.same_stderr)
    }

    /// Builds the report from per-pair distances.
    pub fn from_distances(diff: &[f64], same: &[f64]) -> Self {
        let (mean_diff_distance, diff_stderr) = mean_and_stderr(diff);
        let (mean_same_distance, same_stderr) = mean_and_stderr(same);
        Self {
            n_diff: diff.len(),
            n_same: same.len(),
            mean_diff_distance,
            mean_same_distance,
            diff_stderr,
            same_stderr,
            delta: mean_diff_distance - mean_same_distance,
        }
    }
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `1 - cos(u, v)`, clamped to `[0, 2]`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64> {
    let s = cosine_similarity(u, v, NORM_EPSILON)?;
    Ok(1.0 - s.clamp(-1.0, 1.0))
}

/// Samples `spec.n_pairs` class-balanced pairs from `corpus`, embeds each
/// distinct example once and reports the distance gap.
pub fn delta_cosine_distance<F>(
    mut embed: F,
    corpus: &Corpus,
    spec: &EvalSpec,
) -> Result<DeltaReport>
where
    F: FnMut(&LabeledExample) -> Result<Vec<f64>>,
{
    if spec.n_pairs < 2 {
        return Err(Error::Config("evaluation needs at least 2 pairs".into()));
    }
    let episodes = EpisodeSpec {
        quotas: [(corpus.dataset_id().to_string(), spec.n_pairs)].into(),
        same_fraction: spec.same_fraction,
        seed: spec.seed,
    };
    let pairs = generate_episodes(std::slice::from_ref(corpus), &episodes)?;

    let mut cache: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut lookup = |i: usize| -> Result<Vec<f64>> {
        if let Some(v) = cache.get(&i) {
            return Ok(v.clone());
        }
        let ex = &corpus.examples()[i];
        let v = embed(ex)?;
        if !all_finite(&v) {
            return Err(Error::NonFinite(format!(
                "embedding of example {:?}",
                ex.id
            )));
        }
        cache.insert(i, v.clone());
        Ok(v)
    };

    let (mut diff, mut same) = (Vec::new(), Vec::new());
    for p in &pairs {
        let d = cosine_distance(&lookup(p.a)?, &lookup(p.b)?)?;
        if p.same {
            same.push(d);
        } else {
            diff.push(d);
        }
    }
    Ok(DeltaReport::from_distances(&diff, &same))
}

/// One row of a report table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub test_set: String,
    pub n_pairs: usize,
    pub mean_same: f64,
    pub mean_diff: f64,
    pub same_stderr: f64,
    pub diff_stderr: f64,
    pub delta: f64,
}

impl ReportRow {
    pub fn new(model: impl Into<String>, test_set: impl Into<String>, r: &DeltaReport) -> Self {
        Self {
            model: model.into(),
            test_set: test_set.into(),
            n_pairs: r.n_pairs(),
            mean_same: r.mean_same_distance,
            mean_diff: r.mean_diff_distance,
            same_stderr: r.same_stderr,
            diff_stderr: r.diff_stderr,
            delta: r.delta,
        }
    }
}

pub fn emit_report(rows: &[ReportRow], path: impl AsRef<Path>) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Config("no report rows to write".into()));
    }
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_report(rows, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_report(rows: &[ReportRow], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.model,
            r.test_set,
            r.n_pairs,
            sig9(r.mean_same),
            sig9(r.mean_diff),
            sig9(r.same_stderr),
            sig9(r.diff_stderr),
            sig9(r.delta)
        )?;
    }
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::io(path, e))?
        .unwrap_or_default();
    if header != REPORT_HEADER {
        return Err(Error::parse(path, 1, "unexpected report header"));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let bad = |msg: &str| Error::parse(path, n + 2, msg.to_string());
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 8 {
            return Err(bad("expected 8 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        rows.push(ReportRow {
            model: f[0].to_string(),
            test_set: f[1].to_string(),
            n_pairs: f[2].parse().map_err(|_| bad("bad n_pairs"))?,
            mean_same: num(f[3])?,
            mean_diff: num(f[4])?,
            same_stderr: num(f[5])?,
            diff_stderr: num(f[6])?,
            delta: num(f[7])?,
        });
    }
    Ok(rows)
}
