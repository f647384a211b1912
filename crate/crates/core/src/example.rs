//! Sparse examples and line-oriented dataset ingestion.
//!
//! The text format is one example per line:
//!
//! ```text
//! <label> <index>:<value> <index>:<value> ...
//! ```
//!
//! Labels are dense class ids in `[0, K)`. Indices are non-negative integers
//! and may repeat; repeated indices are kept as-is and summed when scored.
//! Files whose name ends in `.gz` are decompressed on the fly.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Feature index emitted by the constant-feature option.
pub const CONSTANT_FEATURE: u64 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseExample {
    pub label: u32,
    pub features: Vec<(u64, f32)>,
    /// Scales every update driven by this example. The text format has no
    /// syntax for it, so parsed examples always carry 1.
    pub importance: f32,
}

impl SparseExample {
    pub fn new(label: u32, features: Vec<(u64, f32)>) -> Self {
        SparseExample {
            label,
            features,
            importance: 1.0,
        }
    }

    pub fn max_index(&self) -> Option<u64> {
        self.features.iter().map(|&(i, _)| i).max()
    }

    /// Prepends the intercept feature `(0, 1.0)`.
    pub fn add_constant_feature(&mut self) {
        self.features.insert(0, (CONSTANT_FEATURE, 1.0));
    }
}

impl fmt::Display for SparseExample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label)?;
        for (idx, val) in &self.features {
            write!(f, " {idx}:{val}")?;
        }
        Ok(())
    }
}

/// Shape of a dataset: class count, raw feature space and size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetMeta {
    pub num_classes: u32,
    pub num_raw_features: u64,
    pub example_count: u64,
}

impl DatasetMeta {
    /// Infers the smallest meta that admits every example: `K = max label + 1`
    /// and `num_raw_features = max index + 1`.
    pub fn infer<'a>(examples: impl IntoIterator<Item = &'a SparseExample>) -> Result<Self> {
        let mut max_label = None::<u32>;
        let mut max_index = None::<u64>;
        let mut count = 0u64;
        for ex in examples {
            max_label = max_label.max(Some(ex.label));
            max_index = max_index.max(ex.max_index());
            count += 1;
        }
        let max_label = max_label.ok_or_else(|| Error::domain("dataset is empty"))?;
        Ok(DatasetMeta {
            num_classes: max_label + 1,
            num_raw_features: max_index.map_or(1, |m| m + 1),
            example_count: count,
        })
    }

    pub fn check(&self, ex: &SparseExample) -> Result<()> {
        if ex.label >= self.num_classes {
            return Err(Error::domain(format!(
                "label {} outside [0, {})",
                ex.label, self.num_classes
            )));
        }
        if let Some(m) = ex.max_index() {
            if m >= self.num_raw_features {
                return Err(Error::domain(format!(
                    "feature index {m} outside declared raw feature space of {}",
                    self.num_raw_features
                )));
            }
        }
        Ok(())
    }
}

fn parse_error(line: &str, offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line: 0,
        column: line[..offset].chars().count() + 1,
        message: message.into(),
    }
}

/// Whitespace-separated tokens with their byte offsets.
fn tokens(line: &str) -> impl Iterator<Item = (usize, &str)> {
    line.split_ascii_whitespace()
        .map(move |tok| (tok.as_ptr() as usize - line.as_ptr() as usize, tok))
}

/// Parses one dataset line. Errors carry the 1-based column of the offending
/// token; the line number is filled in by the dataset stream.
pub fn parse_example(line: &str) -> Result<SparseExample> {
    let mut toks = tokens(line);
    let (off, label_tok) = toks
        .next()
        .ok_or_else(|| parse_error(line, 0, "missing label"))?;
    let label = match label_tok.parse::<u32>() {
        Ok(l) => l,
        Err(_) if label_tok.starts_with('-') && label_tok[1..].parse::<u64>().is_ok() => {
            return Err(Error::domain(format!("negative label {label_tok}")));
        }
        Err(_) => return Err(parse_error(line, off, format!("invalid label {label_tok:?}"))),
    };

    let mut features = Vec::new();
    for (off, tok) in toks {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| parse_error(line, off, format!("expected <index>:<value>, got {tok:?}")))?;
        let idx = idx
            .parse::<u64>()
            .map_err(|_| parse_error(line, off, format!("invalid feature index {idx:?}")))?;
        let val = val
            .parse::<f32>()
            .map_err(|_| parse_error(line, off, format!("invalid feature value {val:?}")))?;
        if !val.is_finite() {
            return Err(parse_error(line, off, format!("non-finite feature value {val}")));
        }
        features.push((idx, val));
    }
    Ok(SparseExample::new(label, features))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StreamOptions {
    /// Yield a uniformly random permutation of the file instead of file order.
    pub permute: bool,
    pub seed: u64,
    /// Prepend feature `(0, 1.0)` to every example as an intercept.
    pub constant_feature: bool,
}

fn is_gzip(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

fn open_lines(path: &Path) -> Result<Box<dyn BufRead>> {
    let file = File::open(path)?;
    Ok(if is_gzip(path) {
        Box::new(BufReader::new(MultiGzDecoder::new(file)))
    } else {
        Box::new(BufReader::new(file))
    })
}

enum Source {
    Sequential {
        reader: Box<dyn BufRead>,
        line_no: usize,
    },
    /// Plain file: only the byte offsets of the lines are held in memory.
    Seeking {
        reader: BufReader<File>,
        order: Vec<(u64, usize)>,
        pos: usize,
    },
    /// Compressed input cannot seek, so lines are buffered.
    Buffered {
        lines: Vec<(usize, String)>,
        order: Vec<usize>,
        pos: usize,
    },
}

/// Single-consumer iterator over a dataset file. Stops after the first error.
pub struct DatasetStream {
    source: Source,
    constant_feature: bool,
    failed: bool,
    buf: String,
}

pub fn stream_dataset(path: impl AsRef<Path>, opts: &StreamOptions) -> Result<DatasetStream> {
    let path = path.as_ref();
    let source = if !opts.permute {
        Source::Sequential {
            reader: open_lines(path)?,
            line_no: 0,
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        if is_gzip(path) {
            let mut lines = Vec::new();
            for (i, line) in open_lines(path)?.lines().enumerate() {
                let line = line?;
                if !line.trim().is_empty() {
                    lines.push((i + 1, line));
                }
            }
            let mut order: Vec<usize> = (0..lines.len()).collect();
            order.shuffle(&mut rng);
            Source::Buffered {
                lines,
                order,
                pos: 0,
            }
        } else {
            let mut reader = BufReader::new(File::open(path)?);
            let mut order = line_offsets(&mut reader)?;
            order.shuffle(&mut rng);
            Source::Seeking {
                reader,
                order,
                pos: 0,
            }
        }
    };
    Ok(DatasetStream {
        source,
        constant_feature: opts.constant_feature,
        failed: false,
        buf: String::new(),
    })
}

/// Byte offset and 1-based line number of every non-blank line.
fn line_offsets(reader: &mut BufReader<File>) -> Result<Vec<(u64, usize)>> {
    let mut offsets = Vec::new();
    let mut offset = 0u64;
    let mut line = Vec::new();
    let mut line_no = 0;
    loop {
        line.clear();
        let n = reader.read_until(b'\n', &mut line)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        if !line.iter().all(u8::is_ascii_whitespace) {
            offsets.push((offset, line_no));
        }
        offset += n as u64;
    }
    Ok(offsets)
}

impl DatasetStream {
    fn next_line(&mut self) -> Option<Result<usize>> {
        self.buf.clear();
        match &mut self.source {
            Source::Sequential { reader, line_no } => loop {
                self.buf.clear();
                match reader.read_line(&mut self.buf) {
                    Ok(0) => return None,
                    Ok(_) => {
                        *line_no += 1;
                        if !self.buf.trim().is_empty() {
                            return Some(Ok(*line_no));
                        }
                    }
                    Err(e) => return Some(Err(e.into())),
                }
            },
            Source::Seeking { reader, order, pos } => {
                let &(offset, line_no) = order.get(*pos)?;
                *pos += 1;
                let res = reader
                    .seek(SeekFrom::Start(offset))
                    .and_then(|_| reader.read_line(&mut self.buf));
                Some(res.map(|_| line_no).map_err(Error::from))
            }
            Source::Buffered { lines, order, pos } => {
                let &i = order.get(*pos)?;
                *pos += 1;
                let (line_no, text) = &lines[i];
                self.buf.push_str(text);
                Some(Ok(*line_no))
            }
        }
    }
}

impl Iterator for DatasetStream {
    type Item = Result<SparseExample>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let item = self.next_line()?.and_then(|line_no| {
            let mut ex = parse_example(&self.buf).map_err(|e| e.at_line(line_no))?;
            if self.constant_feature {
                ex.add_constant_feature();
            }
            Ok(ex)
        });
        self.failed = item.is_err();
        Some(item)
    }
}

/// Reads a whole dataset into memory.
pub fn read_dataset(path: impl AsRef<Path>, opts: &StreamOptions) -> Result<Vec<SparseExample>> {
    stream_dataset(path, opts)?.collect()
}

/// Names for dense class ids, one name per line: line `i` names class `i`.
#[derive(Debug, Clone, Default)]
pub struct LabelMap {
    names: Vec<String>,
}

impl LabelMap {
    pub fn load(path: impl Into<PathBuf>) -> Result<Self> {
        let mut text = String::new();
        File::open(path.into())?.read_to_string(&mut text)?;
        Ok(LabelMap {
            names: text.lines().map(|l| l.trim().to_owned()).collect(),
        })
    }

    pub fn name(&self, class: u32) -> Option<&str> {
        self.names.get(class as usize).map(String::as_str)
    }

    pub fn id_of(&self, name: &str) -> Option<u32> {
        self.names.iter().position(|n| n == name).map(|i| i as u32)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}
