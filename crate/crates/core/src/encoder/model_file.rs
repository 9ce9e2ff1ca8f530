//! Versioned model file: a line-oriented text header (format version, mode,
//! dimensions, vocabulary) followed by the parameter tensors either as
//! little-endian f64 bytes or as one line of decimal text per tensor.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Encoder, EncoderConfig, EncoderMode, EncoderParams, Vocabulary};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "siamtune-model";
const END_HEADER: &str = "end-header";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelEncoding {
    #[default]
    Binary,
    Text,
}

impl ModelEncoding {
    fn as_str(self) -> &'static str {
        match self {
            ModelEncoding::Binary => "binary",
            ModelEncoding::Text => "text",
        }
    }
}

impl std::str::FromStr for ModelEncoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(ModelEncoding::Binary),
            "text" => Ok(ModelEncoding::Text),
            other => Err(Error::Config(format!("unknown model encoding {other:?}"))),
        }
    }
}

pub fn save_model(
    encoder: &Encoder,
    path: impl AsRef<Path>,
    encoding: ModelEncoding,
) -> Result<()> {
    encoder.check()?;
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_model(encoder, &mut out, encoding).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

fn write_model(
    encoder: &Encoder,
    out: &mut impl Write,
    encoding: ModelEncoding,
) -> std::io::Result<()> {
    let c = &encoder.config;
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "version={MODEL_FORMAT_VERSION}")?;
    writeln!(out, "mode={}", c.mode.as_str())?;
    writeln!(out, "d_tok={}", c.d_tok)?;
    writeln!(out, "d_in={}", c.d_in)?;
    writeln!(out, "hidden={}", c.hidden)?;
    writeln!(out, "d_out={}", c.d_out)?;
    writeln!(out, "encoding={}", encoding.as_str())?;
    match &encoder.vocab {
        Some(v) => {
            writeln!(out, "min_count={}", v.min_count())?;
            writeln!(out, "vocab={}", v.len())?;
            for t in v.tokens() {
                writeln!(out, "{t}")?;
            }
        }
        None => writeln!(out, "vocab=0")?,
    }
    writeln!(out, "{END_HEADER}")?;
    for tensor in encoder.params.tensors() {
        match encoding {
            ModelEncoding::Binary => {
                for v in tensor {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
            ModelEncoding::Text => {
                let line: Vec<String> = tensor.iter().map(|v| format!("{v:?}")).collect();
                writeln!(out, "{}", line.join(" "))?;
            }
        }
    }
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Encoder> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut line_no = 0usize;
    let mut next_line = |reader: &mut BufReader<File>| -> Result<String> {
        let mut line = String::new();
        line_no += 1;
        let n = reader
            .read_line(&mut line)
            .map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Err(Error::ModelFormat(format!(
                "unexpected end of header at line {line_no}"
            )));
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    };

    if next_line(&mut reader)? != MAGIC {
        return Err(Error::ModelFormat("not a model file".into()));
    }
    let mut field = |reader: &mut BufReader<File>, key: &str| -> Result<String> {
        let line = next_line(reader)?;
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .map(str::to_string)
            .ok_or_else(|| Error::ModelFormat(format!("expected {key}=..., found {line:?}")))
    };
    let num = |s: String, key: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::ModelFormat(format!("{key} is not a number: {s:?}")))
    };

    let version: u32 = field(&mut reader, "version")?
        .parse()
        .map_err(|_| Error::ModelFormat("bad version".into()))?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported format version {version}"
        )));
    }
    let mode = match field(&mut reader, "mode")?.as_str() {
        "trainable" => EncoderMode::Trainable,
        "frozen-projection" => EncoderMode::FrozenProjection,
        other => return Err(Error::ModelFormat(format!("unknown mode {other:?}"))),
    };
    let config = EncoderConfig {
        mode,
        d_tok: num(field(&mut reader, "d_tok")?, "d_tok")?,
        d_in: num(field(&mut reader, "d_in")?, "d_in")?,
        hidden: num(field(&mut reader, "hidden")?, "hidden")?,
        d_out: num(field(&mut reader, "d_out")?, "d_out")?,
    };
    config.validate()?;
    let encoding: ModelEncoding = field(&mut reader, "encoding")?
        .parse()
        .map_err(|e: Error| Error::ModelFormat(e.to_string()))?;

    let vocab = if mode == EncoderMode::Trainable {
        let min_count = num(field(&mut reader, "min_count")?, "min_count")?;
        let n = num(field(&mut reader, "vocab")?, "vocab")?;
        let tokens = (0..n)
            .map(|_| next_line(&mut reader))
            .collect::<Result<Vec<_>>>()?;
        Some(Vocabulary::from_tokens(tokens, min_count)?)
    } else {
        if num(field(&mut reader, "vocab")?, "vocab")? != 0 {
            return Err(Error::ModelFormat(
                "frozen-projection model carries a vocabulary".into(),
            ));
        }
        None
    };
    if next_line(&mut reader)? != END_HEADER {
        return Err(Error::ModelFormat(format!("missing {END_HEADER}")));
    }

    let mut params = EncoderParams::zeros(&config, vocab.as_ref().map_or(0, Vocabulary::len));
    match encoding {
        ModelEncoding::Binary => {
            let mut buf = [0u8; 8];
            for tensor in params.tensors_mut() {
                for v in tensor.iter_mut() {
                    reader
                        .read_exact(&mut buf)
                        .map_err(|_| Error::ModelFormat("truncated parameter data".into()))?;
                    *v = f64::from_le_bytes(buf);
                }
            }
        }
        ModelEncoding::Text => {
            for tensor in params.tensors_mut() {
                let line = next_line(&mut reader)?;
                let values: Vec<f64> = line
                    .split_ascii_whitespace()
                    .map(|s| s.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::ModelFormat("unparseable parameter value".into()))?;
                if values.len() != tensor.len() {
                    return Err(Error::ModelFormat(format!(
                        "tensor has {} values, expected {}",
                        values.len(),
                        tensor.len()
                    )));
                }
                tensor.copy_from_slice(&values);
            }
        }
    }
    let mut rest = Vec::new();
    reader
        .read_to_end(&mut rest)
        .map_err(|e| Error::io(path, e))?;
    if rest.iter().any(|b| !b.is_ascii_whitespace()) {
        return Err(Error::ModelFormat("trailing data after parameters".into()));
    }

    let encoder = Encoder {
        config,
        params,
        vocab,
    };
    encoder.check()?;
    Ok(encoder)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{example, Corpus};

    fn trainable() -> Encoder {
        let corpus = Corpus::new(
            "d",
            vec![
                example("1", "flu season again", "a"),
                example("2", "@user http://t.co/x #flu", "b"),
            ],
        )
        .unwrap();
        let vocab = Vocabulary::build([&corpus], 1).unwrap();
        let mut enc = Encoder::new_trainable(EncoderConfig::trainable(3, 5, 4), vocab, 17).unwrap();
        enc.params.b1[2] = 1e-300;
        enc.params.b2[0] = -0.1 + 0.2;
        enc
    }

    fn bits(p: &EncoderParams) -> Vec<u64> {
        p.tensors()
            .iter()
            .flat_map(|t| t.iter().map(|v| v.to_bits()))
            .collect()
    }

    #[test]
    fn binary_and_text_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for enc in [
            trainable(),
            Encoder::new_frozen(EncoderConfig::frozen(3, 7, 2), 4).unwrap(),
        ] {
            for encoding in [ModelEncoding::Binary, ModelEncoding::Text] {
                let p = dir.path().join("m.model");
                save_model(&enc, &p, encoding).unwrap();
                let back = load_model(&p).unwrap();
                assert_eq!(back.config, enc.config);
                assert_eq!(back.vocab, enc.vocab);
                assert_eq!(bits(&back.params), bits(&enc.params));
            }
        }
    }

    #[test]
    fn truncated_binary_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.model");
        save_model(&trainable(), &p, ModelEncoding::Binary).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_model(&p).unwrap_err(), Error::ModelFormat(_)));
    }

    #[test]
    fn wrong_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.model");
        save_model(&trainable(), &p, ModelEncoding::Text).unwrap();
        let text = std::fs::read_to_string(&p)
            .unwrap()
            .replace("version=1", "version=2");
        std::fs::write(&p, text).unwrap();
        assert!(load_model(&p).unwrap_err().to_string().contains("version"));
    }
}
