//! Single-file model checkpoints.
//!
//! Layout: the 8-byte magic `CADGENLM`, a little-endian `u32` format
//! version, a little-endian `u64` byte length followed by a JSON header
//! (config, vocabulary, bigram table, feature count), then the bias, the
//! IDF vector and the weight vector as little-endian `f64`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassifierError, LinearModel, TrainerConfig};

const MAGIC: &[u8; 8] = b"CADGENLM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: TrainerConfig,
    num_features: usize,
    words: Vec<String>,
    bigrams: Vec<(u32, u32)>,
    train_accuracy: Option<f64>,
}

pub fn write_model<W: Write>(model: &LinearModel, mut out: W) -> std::io::Result<()> {
    let header = Header {
        config: model.config.clone(),
        num_features: model.num_features(),
        words: model.words.clone(),
        bigrams: model.bigrams.clone(),
        train_accuracy: Some(model.train_accuracy).filter(|a| a.is_finite()),
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    out.write_all(&model.bias.to_le_bytes())?;
    for x in model.idf.iter().chain(&model.weights) {
        out.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn format_err(msg: impl Into<String>) -> ClassifierError {
    ClassifierError::Format(msg.into())
}

pub fn read_model<R: Read>(mut input: R) -> Result<LinearModel, ClassifierError> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| format_err(format!("read failed: {e}")))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(format_err("bad magic"));
    }
    let version = u32::from_le_bytes(cur.take(4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let len = u64::from_le_bytes(cur.take(8)?.try_into().unwrap());
    let len = usize::try_from(len).map_err(|_| format_err("header too large"))?;
    let header: Header =
        serde_json::from_slice(cur.take(len)?).map_err(|e| format_err(format!("header: {e}")))?;
    let bias = cur.f64()?;
    let n = header.num_features;
    let idf = (0..n).map(|_| cur.f64()).collect::<Result<Vec<_>, _>>()?;
    let weights = (0..n).map(|_| cur.f64()).collect::<Result<Vec<_>, _>>()?;
    if cur.pos != bytes.len() {
        return Err(format_err(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    let mut model = LinearModel::from_parts(header.config, header.words, header.bigrams, idf, weights, bias)?;
    model.train_accuracy = header.train_accuracy.unwrap_or(f64::NAN);
    Ok(model)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ClassifierError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format_err("unexpected end of file"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn f64(&mut self) -> Result<f64, ClassifierError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn save_model(model: &LinearModel, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
    let path = path.as_ref();
    let io_err = |e| ClassifierError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut buf = Vec::new();
    write_model(model, &mut buf).map_err(io_err)?;
    fs::write(path, buf).map_err(io_err)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LinearModel, ClassifierError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| ClassifierError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    read_model(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::train;
    use crate::corpus::{Label, LabeledDataset, LabeledDocument};

    #[test]
    fn round_trip_is_exact() {
        let docs = (0..12)
            .map(|i| {
                let (t, l) = if i % 3 == 0 {
                    ("a dull, bad film", Label::Neg)
                } else {
                    ("a good film, great cast", Label::Pos)
                };
                LabeledDocument::new(i.to_string(), t, l)
            })
            .collect();
        let ds = LabeledDataset::new("t", docs).unwrap();
        let model = train(&ds, &TrainerConfig::default(), 11).unwrap();
        let mut buf = Vec::new();
        write_model(&model, &mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        let back = read_model(buf.as_slice()).unwrap();
        assert_eq!(back.weights(), model.weights());
        assert_eq!(back.bias().to_bits(), model.bias().to_bits());
        assert_eq!(back.train_accuracy(), model.train_accuracy());
        assert_eq!(back, model);
    }

    #[test]
    fn truncated_and_corrupt_files_fail() {
        let model = LinearModel::unigram(&[("good", 1.0)], 0.0);
        let mut buf = Vec::new();
        write_model(&model, &mut buf).unwrap();
        assert!(read_model(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_model(bad.as_slice()).is_err());
        let mut extra = buf;
        extra.push(0);
        assert!(read_model(extra.as_slice()).is_err());
    }
}
