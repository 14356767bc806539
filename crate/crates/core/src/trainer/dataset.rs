//! Labelled image sets. On disk a dataset is a headerless CSV with one
//! sample per row: the integer label first, then the flattened
//! `channels x side x side` pixel values.

use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::report::fmt_f64;
use crate::rng::stream_rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("dataset is empty")]
    Empty,
    #[error("row {row} has {found} values, expected {expected}")]
    Ragged { row: usize, found: usize, expected: usize },
    #[error("label {label} is outside 0..{classes}")]
    LabelOutOfRange { label: usize, classes: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub sample_len: usize,
    pub classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, sample_len: usize, classes: usize) -> Result<Self, DatasetError> {
        if labels.is_empty() || sample_len == 0 {
            return Err(DatasetError::Empty);
        }
        if features.len() != labels.len() * sample_len {
            return Err(DatasetError::Ragged { row: 0, found: features.len(), expected: labels.len() * sample_len });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(DatasetError::LabelOutOfRange { label, classes });
        }
        Ok(Dataset { features, labels, sample_len, classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.sample_len..][..self.sample_len]
    }

    /// Concatenated samples and labels for `indices`.
    pub fn gather(&self, indices: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let mut x = Vec::with_capacity(indices.len() * self.sample_len);
        for &i in indices {
            x.extend_from_slice(self.sample(i));
        }
        (x, indices.iter().map(|&i| self.labels[i]).collect())
    }

    /// Parses the CSV form. With `classes = None` the class count is one
    /// more than the largest label.
    pub fn from_csv(text: &str, classes: Option<usize>) -> Result<Self, DatasetError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut sample_len = None;
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| DatasetError::Parse { row, message: e.to_string() })?;
            let parse_err = |message: String| DatasetError::Parse { row, message };
            let mut fields = record.iter();
            let label: usize = fields
                .next()
                .ok_or_else(|| parse_err("missing label".into()))?
                .parse()
                .map_err(|e| parse_err(format!("label: {e}")))?;
            let before = features.len();
            for f in fields {
                features.push(f.parse::<f64>().map_err(|e| parse_err(format!("value {f:?}: {e}")))?);
            }
            let found = features.len() - before;
            match sample_len {
                None => sample_len = Some(found),
                Some(expected) if expected != found => return Err(DatasetError::Ragged { row, found, expected }),
                _ => {}
            }
            labels.push(label);
        }
        let classes = classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
        Dataset::new(features, labels, sample_len.unwrap_or(0), classes)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.len() {
            out.push_str(&self.labels[i].to_string());
            for v in self.sample(i) {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn load(path: impl AsRef<Path>, classes: Option<usize>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| DatasetError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_csv(&text, classes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv())
            .map_err(|e| DatasetError::Io { path: path.display().to_string(), message: e.to_string() })
    }
}

const GLYPHS: [[&str; 7]; 10] = [
    ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
    ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
    ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],
    ["11111", "00010", "00100", "00010", "00001", "10001", "01110"],
    ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
    ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
    ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
    ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
    ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
    ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],
];

/// Knobs for the procedural digit set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DigitsConfig {
    /// Image side, at least 7.
    pub side: usize,
    /// Half-width of the uniform pixel noise.
    pub noise: f64,
    /// Probability that a stroke pixel is dropped.
    pub dropout: f64,
}

impl Default for DigitsConfig {
    fn default() -> Self {
        DigitsConfig { side: 8, noise: 0.35, dropout: 0.15 }
    }
}

/// Ten-class single-channel digits: 5x7 glyphs at a random offset with
/// random stroke intensity, stroke dropout and pixel noise. Labels cycle so
/// classes are balanced.
pub fn synthetic_digits(count: usize, seed: u64, config: &DigitsConfig) -> Dataset {
    assert!(config.side >= 7, "digit images need side >= 7");
    let side = config.side;
    let mut rng = stream_rng(seed, 0);
    let mut features = Vec::with_capacity(count * side * side);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label = i % 10;
        let (dx, dy) = (rng.gen_range(0..=side - 5), rng.gen_range(0..=side - 7));
        let ink = rng.gen_range(0.6..1.0);
        let mut img = vec![0.0; side * side];
        for (r, row) in GLYPHS[label].iter().enumerate() {
            for (c, bit) in row.bytes().enumerate() {
                if bit == b'1' && !rng.gen_bool(config.dropout) {
                    img[(r + dy) * side + c + dx] = ink;
                }
            }
        }
        for v in &mut img {
            *v += rng.gen_range(-config.noise..=config.noise);
        }
        features.extend(img);
        labels.push(label);
    }
    Dataset { features, labels, sample_len: side * side, classes: 10 }
}
