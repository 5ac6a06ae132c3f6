//! Backbone feature vectors: synthetic clusters and the `emb/1` file format.
//!
//! `emb/1` is line-oriented UTF-8 JSON:
//!
//! ```text
//! {"format":"emb/1","dim":4,"classes":["apple","bread"]}
//! {"c":0,"s":"train","v":[0.1,0.2,0.3,0.4]}
//! {"c":1,"s":"test","v":[0.5,0.6,0.7,0.8]}
//! ```

use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, ParseErrorKind, Result};

pub const EMB_FORMAT: &str = "emb/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub class: usize,
    pub split: Split,
    pub vector: Vec<f64>,
}

/// A labelled feature vector borrowed from a dataset.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub label: usize,
    pub features: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    dim: usize,
    class_names: Vec<String>,
    records: Vec<Record>,
}

impl EmbeddingDataset {
    pub fn new(dim: usize, class_names: Vec<String>, records: Vec<Record>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dim must be >= 1"));
        }
        for (i, r) in records.iter().enumerate() {
            if r.vector.len() != dim {
                return Err(Error::invalid(format!(
                    "record {i} has {} values, expected {dim}",
                    r.vector.len()
                )));
            }
            if r.class >= class_names.len() {
                return Err(Error::invalid(format!("record {i} has class {} out of range", r.class)));
            }
            if r.vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("record {i} has a non-finite value")));
            }
        }
        Ok(Self {
            dim,
            class_names,
            records,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn record(&self, index: usize) -> Option<&Record> {
        self.records.get(index)
    }

    /// Examples of the given split whose class lies in `classes`.
    pub fn examples(&self, split: Split, classes: std::ops::Range<usize>) -> Vec<Example<'_>> {
        self.records
            .iter()
            .filter(|r| r.split == split && classes.contains(&r.class))
            .map(|r| Example {
                label: r.class,
                features: &r.vector,
            })
            .collect()
    }

    /// Record indices of `split` grouped by class.
    pub fn indices_by_class(&self, split: Split) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes()];
        for (i, r) in self.records.iter().enumerate() {
            if r.split == split {
                out[r.class].push(i);
            }
        }
        out
    }

    /// Concatenate two datasets over the same classes, e.g. the halves of a split.
    pub fn combine(first: Self, second: Self) -> Result<Self> {
        if first.dim != second.dim || first.class_names != second.class_names {
            return Err(Error::invalid("cannot combine datasets with different dims or classes"));
        }
        let mut records = first.records;
        records.extend(second.records);
        Ok(Self { records, ..first })
    }
}

/// Parameters for a synthetic Gaussian-cluster dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticClusterSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub centroid_separation: f64,
    pub noise_sigma: f64,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl SyntheticClusterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.dim == 0 || self.samples_per_class == 0 {
            return Err(Error::invalid("synthetic spec counts must be >= 1"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise_sigma must be finite and >= 0"));
        }
        if !self.centroid_separation.is_finite() {
            return Err(Error::invalid("centroid_separation must be finite"));
        }
        Ok(())
    }
}

/// Class centroids of a synthetic spec: uniform directions scaled to the separation radius.
pub fn synthetic_centroids(spec: &SyntheticClusterSpec) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.num_classes)
        .map(|_| loop {
            let g: Vec<f64> = (0..spec.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = crate::linalg::norm(&g);
            if n > 1e-9 {
                break g.iter().map(|x| x / n * spec.centroid_separation).collect();
            }
        })
        .collect()
}

/// Gaussian clusters around seeded centroids. Every record is tagged `train`;
/// use [`split_dataset`] to carve out a test split.
pub fn generate_synthetic(spec: &SyntheticClusterSpec) -> Result<EmbeddingDataset> {
    spec.validate()?;
    let centroids = synthetic_centroids(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let mut records = Vec::with_capacity(spec.num_classes * spec.samples_per_class);
    for (class, c) in centroids.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            let vector = c
                .iter()
                .map(|&m| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    m + spec.noise_sigma * e
                })
                .collect();
            records.push(Record {
                class,
                split: Split::Train,
                vector,
            });
        }
    }
    let names = (0..spec.num_classes).map(|i| format!("food{i:03}")).collect();
    EmbeddingDataset::new(spec.dim, names, records)
}

/// Stratified split: per class, `round(n · test_fraction)` records (at least
/// one, at most `n − 1`) go to the test half.
pub fn split_dataset(
    dataset: &EmbeddingDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(EmbeddingDataset, EmbeddingDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid("test_fraction must lie strictly inside (0, 1)"));
    }
    let mut by_class = vec![Vec::new(); dataset.num_classes()];
    for (i, r) in dataset.records.iter().enumerate() {
        by_class[r.class].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut idx) in by_class.into_iter().enumerate() {
        if idx.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "class {class} ({}) has {} records, need at least 2 to split",
                dataset.class_names[class],
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let n_test = ((idx.len() as f64 * test_fraction).round() as usize).clamp(1, idx.len() - 1);
        let (te, tr) = idx.split_at(n_test);
        test.extend_from_slice(te);
        train.extend_from_slice(tr);
    }
    let pick = |ids: &[usize], split: Split| {
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        let records = ids
            .iter()
            .map(|&i| Record {
                split,
                ..dataset.records[i].clone()
            })
            .collect();
        EmbeddingDataset {
            records,
            ..dataset.clone_header()
        }
    };
    Ok((pick(&train, Split::Train), pick(&test, Split::Test)))
}

impl EmbeddingDataset {
    fn clone_header(&self) -> Self {
        Self {
            dim: self.dim,
            class_names: self.class_names.clone(),
            records: Vec::new(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    dim: usize,
    classes: Vec<String>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    c: usize,
    s: Split,
    v: &'a [f64],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordIn<'a> {
    c: usize,
    s: &'a str,
    #[serde(borrow)]
    v: Vec<&'a RawValue>,
}

pub fn write_embeddings<W: Write>(mut out: W, dataset: &EmbeddingDataset) -> Result<()> {
    let io = |e| Error::io("<embeddings>", e);
    let header = Header {
        format: EMB_FORMAT.into(),
        dim: dataset.dim,
        classes: dataset.class_names.clone(),
    };
    writeln!(out, "{}", serde_json::to_string(&header)?).map_err(io)?;
    for r in &dataset.records {
        let line = crate::json::to_string(&RecordOut {
            c: r.class,
            s: r.split,
            v: &r.vector,
        })?;
        writeln!(out, "{line}").map_err(io)?;
    }
    Ok(())
}

pub fn read_embeddings<R: BufRead>(input: R) -> Result<EmbeddingDataset> {
    let mut lines = input.lines();
    let header_line = match lines.next() {
        Some(l) => l.map_err(|e| Error::io("<embeddings>", e))?,
        None => return Err(Error::parse(1, ParseErrorKind::MalformedHeader("empty file".into()))),
    };
    let header: Header = serde_json::from_str(&header_line)
        .map_err(|e| Error::parse(1, ParseErrorKind::MalformedHeader(e.to_string())))?;
    if header.format != EMB_FORMAT {
        return Err(Error::parse(
            1,
            ParseErrorKind::MalformedHeader(format!("unsupported format {:?}", header.format)),
        ));
    }
    if header.dim == 0 {
        return Err(Error::parse(
            1,
            ParseErrorKind::MalformedHeader("dim must be >= 1".into()),
        ));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io("<embeddings>", e))?;
        records.push(parse_record(&line, &header).map_err(|k| Error::parse(lineno, k))?);
    }
    Ok(EmbeddingDataset {
        dim: header.dim,
        class_names: header.classes,
        records,
    })
}

fn parse_record(line: &str, header: &Header) -> std::result::Result<Record, ParseErrorKind> {
    let raw: RecordIn = serde_json::from_str(line).map_err(|e| {
        // JSON has no spelling for non-finite numbers; catch the usual ones so
        // they get a precise diagnosis.
        if ["NaN", "Infinity", "inf"].iter().any(|t| line.contains(t)) {
            ParseErrorKind::NonFinite
        } else {
            ParseErrorKind::MalformedRecord(e.to_string())
        }
    })?;
    let split = match raw.s {
        "train" => Split::Train,
        "test" => Split::Test,
        other => return Err(ParseErrorKind::UnknownSplit(other.to_string())),
    };
    if raw.c >= header.classes.len() {
        return Err(ParseErrorKind::ClassOutOfRange {
            index: raw.c,
            classes: header.classes.len(),
        });
    }
    if raw.v.len() != header.dim {
        return Err(ParseErrorKind::DimensionMismatch {
            expected: header.dim,
            got: raw.v.len(),
        });
    }
    let mut vector = Vec::with_capacity(raw.v.len());
    for v in raw.v {
        let x: f64 = v
            .get()
            .parse()
            .map_err(|_| ParseErrorKind::MalformedRecord(format!("not a number: {}", v.get())))?;
        if !x.is_finite() {
            return Err(ParseErrorKind::NonFinite);
        }
        vector.push(x);
    }
    Ok(Record {
        class: raw.c,
        split,
        vector,
    })
}

pub fn save_embeddings(path: &Path, dataset: &EmbeddingDataset) -> Result<()> {
    let mut buf = Vec::new();
    write_embeddings(&mut buf, dataset)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingDataset> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(std::io::BufReader::new(f))
}
