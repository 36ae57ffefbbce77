//! Checkpoint container.
//!
//! JSON document, format version 1:
//!
//! ```text
//! {
//!   "format": "metaview-checkpoint",
//!   "version": 1,
//!   "meta": { ... free-form string map ... },
//!   "params": [ { "name": "...", "shape": [rows, cols], "values": [row-major f64] } ],
//!   "optimizer": null | {
//!     "beta1": f64, "beta2": f64, "eps": f64, "step": u64,
//!     "first":  [ { "name", "shape", "values" } ],
//!     "second": [ { "name", "shape", "values" } ]
//!   }
//! }
//! ```
//!
//! Entries appear in parameter-store order; floats round-trip exactly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::Adam;
use super::params::{Param, ParamStore};
use super::tape::Mat;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "metaview-checkpoint";

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: [usize; 2],
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct OptimizerState {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    first: Vec<Entry>,
    second: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Document {
    format: String,
    version: u32,
    meta: BTreeMap<String, String>,
    params: Vec<Entry>,
    optimizer: Option<OptimizerState>,
}

fn entry(name: &str, m: &Mat) -> Entry {
    Entry {
        name: name.to_string(),
        shape: [m.nrows(), m.ncols()],
        values: m.iter().copied().collect(),
    }
}

fn matrix(e: &Entry) -> Result<Mat> {
    Mat::from_shape_vec((e.shape[0], e.shape[1]), e.values.clone())
        .map_err(|_| Error::Checkpoint(format!("entry {} has inconsistent shape", e.name)))
}

pub fn checkpoint_to_string(
    store: &ParamStore,
    adam: Option<&Adam>,
    meta: &BTreeMap<String, String>,
) -> Result<String> {
    let params = store.params();
    let doc = Document {
        format: FORMAT.into(),
        version: CHECKPOINT_VERSION,
        meta: meta.clone(),
        params: params.iter().map(|p| entry(&p.name, &p.value)).collect(),
        optimizer: adam.map(|a| OptimizerState {
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            step: a.step,
            first: params.iter().zip(&a.first).map(|(p, m)| entry(&p.name, m)).collect(),
            second: params.iter().zip(&a.second).map(|(p, m)| entry(&p.name, m)).collect(),
        }),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Loads values into `store` (names and shapes must match) and returns the
/// optimizer state and metadata if present.
pub fn checkpoint_from_str(
    store: &mut ParamStore,
    text: &str,
) -> Result<(Option<Adam>, BTreeMap<String, String>)> {
    let doc: Document = serde_json::from_str(text)?;
    if doc.format != FORMAT {
        return Err(Error::Checkpoint(format!("unexpected format tag {:?}", doc.format)));
    }
    if doc.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", doc.version)));
    }
    let params = doc
        .params
        .iter()
        .map(|e| {
            Ok(Param {
                name: e.name.clone(),
                value: matrix(e)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    store.replace(params)?;
    let adam = match doc.optimizer {
        None => None,
        Some(o) => {
            let first = o.first.iter().map(matrix).collect::<Result<Vec<_>>>()?;
            let second = o.second.iter().map(matrix).collect::<Result<Vec<_>>>()?;
            if first.len() != store.len() || second.len() != store.len() {
                return Err(Error::Checkpoint("optimizer moments do not match parameters".into()));
            }
            for ((p, m), v) in store.params().iter().zip(&first).zip(&second) {
                if m.dim() != p.value.dim() || v.dim() != p.value.dim() {
                    return Err(Error::Checkpoint(format!("moment shape mismatch for {}", p.name)));
                }
            }
            Some(Adam {
                beta1: o.beta1,
                beta2: o.beta2,
                eps: o.eps,
                step: o.step,
                first,
                second,
            })
        }
    };
    Ok((adam, doc.meta))
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    store: &ParamStore,
    adam: Option<&Adam>,
    meta: &BTreeMap<String, String>,
) -> Result<()> {
    let path = path.as_ref();
    let text = checkpoint_to_string(store, adam, meta)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(
    path: impl AsRef<Path>,
    store: &mut ParamStore,
) -> Result<(Option<Adam>, BTreeMap<String, String>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(store, &text)
}
