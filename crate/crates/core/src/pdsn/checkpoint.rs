//! `pdsn/1` checkpoints: one JSON document with shapes, seeds, gate mode,
//! temperature and every weight matrix as a row-major list.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GammaMode, GammaNet, HeadParams, PdsnModel, SessionParams};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const CHECKPOINT_FORMAT: &str = "pdsn/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixDoc {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl From<&Matrix> for MatrixDoc {
    fn from(m: &Matrix) -> Self {
        Self {
            rows: m.rows(),
            cols: m.cols(),
            data: m.as_slice().to_vec(),
        }
    }
}

impl MatrixDoc {
    fn into_matrix(self, what: &str) -> Result<Matrix> {
        Matrix::from_vec(self.rows, self.cols, self.data).ok_or_else(|| {
            Error::invalid(format!(
                "{what}: data length does not match {}x{}",
                self.rows, self.cols
            ))
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionDoc {
    index: usize,
    class_offset: usize,
    w_s: MatrixDoc,
    w_i: MatrixDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    format: String,
    feature_dim: usize,
    embed_dim: usize,
    base_classes: usize,
    max_sessions: usize,
    num_classes: usize,
    gamma_mode: GammaMode,
    temperature: f64,
    seeds: BTreeMap<String, u64>,
    w_fm: MatrixDoc,
    w_0: MatrixDoc,
    w_gamma: MatrixDoc,
    sessions: Vec<SessionDoc>,
}

pub fn write_checkpoint<W: Write>(mut out: W, model: &PdsnModel) -> Result<()> {
    let doc = CheckpointDoc {
        format: CHECKPOINT_FORMAT.into(),
        feature_dim: model.feature_dim(),
        embed_dim: model.head.embed_dim(),
        base_classes: model.base_classes(),
        max_sessions: model.gamma.max_sessions(),
        num_classes: model.num_classes(),
        gamma_mode: model.gamma_mode,
        temperature: model.temperature,
        seeds: model.seeds.clone(),
        w_fm: (&model.head.w_fm).into(),
        w_0: (&model.head.w_0).into(),
        w_gamma: (&model.gamma.w_gamma).into(),
        sessions: model
            .sessions
            .iter()
            .map(|s| SessionDoc {
                index: s.index,
                class_offset: s.class_offset,
                w_s: (&s.w_s).into(),
                w_i: (&s.w_i).into(),
            })
            .collect(),
    };
    let text = crate::json::to_string(&doc)?;
    writeln!(out, "{text}").map_err(|e| Error::io("<checkpoint>", e))
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<PdsnModel> {
    let doc: CheckpointDoc = serde_json::from_reader(input)?;
    if doc.format != CHECKPOINT_FORMAT {
        return Err(Error::invalid(format!(
            "unsupported checkpoint format {:?}",
            doc.format
        )));
    }
    let head = HeadParams::new(doc.w_fm.into_matrix("w_fm")?, doc.w_0.into_matrix("w_0")?)?;
    let gamma = GammaNet::new(doc.w_gamma.into_matrix("w_gamma")?)?;
    let sessions = doc
        .sessions
        .into_iter()
        .map(|s| {
            SessionParams::new(
                s.index,
                s.w_s.into_matrix("w_s")?,
                s.w_i.into_matrix("w_i")?,
                s.class_offset,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let model = PdsnModel::from_parts(head, gamma, sessions, doc.gamma_mode, doc.temperature, doc.seeds)?;
    let shapes = [
        (model.feature_dim(), doc.feature_dim),
        (model.head.embed_dim(), doc.embed_dim),
        (model.base_classes(), doc.base_classes),
        (model.gamma.max_sessions(), doc.max_sessions),
        (model.num_classes(), doc.num_classes),
    ];
    for (actual, declared) in shapes {
        if actual != declared {
            return Err(Error::Dimension {
                expected: declared,
                got: actual,
            });
        }
    }
    Ok(model)
}

pub fn save_checkpoint(path: &Path, model: &PdsnModel) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, model)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<PdsnModel> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(f))
}
