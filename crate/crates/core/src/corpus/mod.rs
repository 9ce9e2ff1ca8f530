//! Labeled text corpora: loading, validation, class indexing and splitting.

mod split;
mod vectors;

pub use split::{split_corpus, SplitMode, SplitSpec};
pub use vectors::{load_vectors, write_vectors, VectorTable};

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub id: String,
    pub text: String,
    pub class_label: String,
    pub dataset_id: String,
}

/// An immutable, validated collection of examples from one dataset.
///
/// Classes are indexed by their byte-wise sorted label, so the position of a
/// label in [`Corpus::class_labels`] is a stable class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    dataset_id: String,
    examples: Vec<LabeledExample>,
    class_index: BTreeMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// Tab-separated with a header row naming `id`, `text` and `label`.
    DelimitedText,
    /// One `{"id", "text", "label"}` object per line.
    JsonLines,
}

impl CorpusFormat {
    /// `.tsv`/`.txt` select delimited text; everything else is json-lines.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("txt") => CorpusFormat::DelimitedText,
            _ => CorpusFormat::JsonLines,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    text: String,
    label: String,
}

impl Corpus {
    /// Validates and indexes `examples`, stamping each with `dataset_id`.
    pub fn new(dataset_id: impl Into<String>, mut examples: Vec<LabeledExample>) -> Result<Self> {
        let dataset_id = dataset_id.into();
        let mut seen = HashSet::with_capacity(examples.len());
        let mut class_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, ex) in examples.iter_mut().enumerate() {
            if !seen.insert(ex.id.clone()) {
                return Err(Error::DuplicateId(ex.id.clone()));
            }
            if ex.text.trim().is_empty() {
                return Err(Error::EmptyText { id: ex.id.clone() });
            }
            ex.dataset_id.clone_from(&dataset_id);
            class_index
                .entry(ex.class_label.clone())
                .or_default()
                .push(i);
        }
        if class_index.len() < 2 {
            return Err(Error::TooFewClasses {
                dataset: dataset_id,
                found: class_index.len(),
            });
        }
        Ok(Self {
            dataset_id,
            examples,
            class_index,
        })
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn class_index(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.class_index
    }

    pub fn num_classes(&self) -> usize {
        self.class_index.len()
    }

    pub fn class_labels(&self) -> impl Iterator<Item = &str> {
        self.class_index.keys().map(String::as_str)
    }

    /// Position of `label` among the sorted class labels.
    pub fn class_position(&self, label: &str) -> Option<usize> {
        self.class_index.keys().position(|k| k == label)
    }

    /// Class position of every example, in example order.
    pub fn class_positions(&self) -> Vec<usize> {
        let mut out = vec![0; self.examples.len()];
        for (pos, members) in self.class_index.values().enumerate() {
            for &i in members {
                out[i] = pos;
            }
        }
        out
    }

    /// Buckets in class order, as `(label, example indices)`.
    pub fn buckets(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.class_index
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus> {
    let path = path.as_ref();
    let dataset_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    load_corpus_as(path, format, dataset_id)
}

/// Like [`load_corpus`] with an explicit dataset id instead of the file stem.
pub fn load_corpus_as(
    path: impl AsRef<Path>,
    format: CorpusFormat,
    dataset_id: impl Into<String>,
) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let examples = match format {
        CorpusFormat::JsonLines => read_json_lines(path, reader)?,
        CorpusFormat::DelimitedText => read_delimited(path, reader)?,
    };
    Corpus::new(dataset_id, examples)
}

fn read_json_lines(path: &Path, reader: impl BufRead) -> Result<Vec<LabeledExample>> {
    let mut examples = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, n + 1, e.to_string()))?;
        examples.push(LabeledExample {
            id: rec.id,
            text: rec.text,
            class_label: rec.label,
            dataset_id: String::new(),
        });
    }
    Ok(examples)
}

fn read_delimited(path: &Path, reader: impl BufRead) -> Result<Vec<LabeledExample>> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| Error::io(path, e))?,
        None => return Err(Error::parse(path, 1, "missing header row")),
    };
    let columns: Vec<&str> = header.split('\t').collect();
    let find = |name: &str| {
        columns
            .iter()
            .position(|c| c.trim() == name)
            .ok_or_else(|| Error::parse(path, 1, format!("header lacks column {name:?}")))
    };
    let (id_col, text_col, label_col) = (find("id")?, find("text")?, find("label")?);

    let mut examples = Vec::new();
    for (n, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != columns.len() {
            return Err(Error::parse(
                path,
                n + 1,
                format!("expected {} fields, found {}", columns.len(), fields.len()),
            ));
        }
        examples.push(LabeledExample {
            id: fields[id_col].to_string(),
            text: fields[text_col].to_string(),
            class_label: fields[label_col].to_string(),
            dataset_id: String::new(),
        });
    }
    Ok(examples)
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>, format: CorpusFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    match format {
        CorpusFormat::JsonLines => {
            for ex in corpus.examples() {
                let rec = Record {
                    id: ex.id.clone(),
                    text: ex.text.clone(),
                    label: ex.class_label.clone(),
                };
                let line = serde_json::to_string(&rec).expect("record serializes");
                writeln!(out, "{line}").map_err(io)?;
            }
        }
        CorpusFormat::DelimitedText => {
            writeln!(out, "id\ttext\tlabel").map_err(io)?;
            for ex in corpus.examples() {
                for field in [&ex.id, &ex.text, &ex.class_label] {
                    if field.contains(['\t', '\n', '\r']) {
                        return Err(Error::Config(format!(
                            "example {:?} cannot be written as delimited text",
                            ex.id
                        )));
                    }
                }
                writeln!(out, "{}\t{}\t{}", ex.id, ex.text, ex.class_label).map_err(io)?;
            }
        }
    }
    out.flush().map_err(io)
}

#[cfg(test)]
pub(crate) fn example(id: &str, text: &str, label: &str) -> LabeledExample {
    LabeledExample {
        id: id.into(),
        text: text.into(),
        class_label: label.into(),
        dataset_id: String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn four_lines_two_classes() {
        let f = write_tmp(
            "{\"id\":\"1\",\"text\":\"x\",\"label\":\"a\"}\n\
             {\"id\":\"2\",\"text\":\"y\",\"label\":\"a\"}\n\
             {\"id\":\"3\",\"text\":\"z\",\"label\":\"b\"}\n\
             {\"id\":\"4\",\"text\":\"w\",\"label\":\"b\"}\n",
            ".jsonl",
        );
        let c = load_corpus(f.path(), CorpusFormat::JsonLines).unwrap();
        assert_eq!(c.num_classes(), 2);
        assert_eq!(c.class_index()["a"], vec![0, 1]);
        assert_eq!(c.class_index()["b"], vec![2, 3]);
    }

    #[test]
    fn duplicate_id_is_named() {
        let f = write_tmp(
            "{\"id\":\"t1\",\"text\":\"x\",\"label\":\"a\"}\n\
             {\"id\":\"t1\",\"text\":\"y\",\"label\":\"b\"}\n",
            ".jsonl",
        );
        let err = load_corpus(f.path(), CorpusFormat::JsonLines).unwrap_err();
        assert!(
            matches!(&err, Error::DuplicateId(id) if id == "t1"),
            "{err}"
        );
        assert!(err.to_string().contains("t1"));
    }

    #[test]
    fn empty_text_rejected() {
        let f = write_tmp("id\ttext\tlabel\n1\t  \ta\n2\tok\tb\n", ".tsv");
        let err = load_corpus(f.path(), CorpusFormat::DelimitedText).unwrap_err();
        assert!(matches!(err, Error::EmptyText { ref id } if id == "1"));
    }

    #[test]
    fn single_class_rejected() {
        let f = write_tmp("id\ttext\tlabel\n1\tx\ta\n2\ty\ta\n", ".tsv");
        let err = load_corpus(f.path(), CorpusFormat::DelimitedText).unwrap_err();
        assert!(matches!(err, Error::TooFewClasses { found: 1, .. }));
    }

    #[test]
    fn parse_error_reports_line() {
        let f = write_tmp(
            "{\"id\":\"1\",\"text\":\"x\",\"label\":\"a\"}\n{\"id\":\"2\",\"text\":\"y\"}\n",
            ".jsonl",
        );
        match load_corpus(f.path(), CorpusFormat::JsonLines).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
        let f = write_tmp("id\ttext\tlabel\n1\tx\ta\n2\ty\n", ".tsv");
        match load_corpus(f.path(), CorpusFormat::DelimitedText).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn tsv_columns_in_any_order() {
        let f = write_tmp(
            "label\tid\ttext\na\t1\thello, \"world\"\nb\t2\tbye\n",
            ".tsv",
        );
        let c = load_corpus(f.path(), CorpusFormat::from_path(f.path())).unwrap();
        assert_eq!(c.examples()[0].text, "hello, \"world\"");
        assert_eq!(c.examples()[1].class_label, "b");
    }

    #[test]
    fn labels_are_opaque_bytes() {
        let c = Corpus::new(
            "d",
            vec![
                example("1", "x", "A"),
                example("2", "y", "a"),
                example("3", "z", "a "),
            ],
        )
        .unwrap();
        assert_eq!(c.num_classes(), 3);
        assert_eq!(c.class_labels().collect::<Vec<_>>(), vec!["A", "a", "a "]);
        assert_eq!(c.class_positions(), vec![0, 1, 2]);
    }

    #[test]
    fn crisis_scale_corpus_has_eleven_classes() {
        let mut body = String::new();
        for i in 0..23_000 {
            let rec = Record {
                id: format!("tw{i}"),
                text: format!("tweet number {i} about the event"),
                label: format!("event_{:02}", i % 11),
            };
            body.push_str(&serde_json::to_string(&rec).unwrap());
            body.push('\n');
        }
        let f = write_tmp(&body, ".jsonl");
        let c = load_corpus(f.path(), CorpusFormat::JsonLines).unwrap();
        assert_eq!(c.len(), 23_000);
        assert_eq!(c.num_classes(), 11);
    }

    #[test]
    fn round_trip_both_formats() {
        let c = Corpus::new(
            "rt",
            vec![
                example("a", "Flu season, again! \u{1F637}", "flu"),
                example("b", "say \"hi\", ok", "other"),
                example("c", "  padded  ", "flu"),
            ],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        for (name, fmt) in [
            ("rt.jsonl", CorpusFormat::JsonLines),
            ("rt.tsv", CorpusFormat::DelimitedText),
        ] {
            let p = dir.path().join(name);
            write_corpus(&c, &p, fmt).unwrap();
            let back = load_corpus(&p, fmt).unwrap();
            assert_eq!(back, c);
        }
    }
}
