//! Return-supervised topic modeling: collapsed Gibbs LDA, branching chain
//! selection scored by out-of-sample return R², and frozen-model fold-in
//! inference.

pub mod branching;
pub mod gibbs;
pub mod infer;

pub use branching::{score_oos_r2, train_branching, BranchingConfig, RoundDiagnostics, SessionReturns};
pub use gibbs::LdaState;
pub use infer::{infer_frozen, InferenceFlag};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use chrono::{Datelike, NaiveDate};
use std::collections::HashMap;
use std::io::{Read, Write};
use thiserror::Error;

const MODEL_MAGIC: &[u8; 4] = b"NFTM";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TopicModelError {
    #[error("corpus has no documents")]
    EmptyCorpus,
    #[error("invalid branching config: {0}")]
    BadConfig(String),
    #[error("every chain was excluded from scoring")]
    AllChainsExcluded,
    #[error("no scorable firm-session cells in the training sample")]
    EmptyTrainingSample,
    #[error("holdout returns have zero variance around the training mean")]
    DegenerateHoldout,
    #[error("model is not frozen; fold-in inference requires frozen topic-word distributions")]
    NotFrozen,
    #[error("model container is not in a supported format: {0}")]
    BadContainer(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A trained topic model: row-stochastic topic-word distributions plus the
/// per-training-document topic distributions.
#[derive(Debug, Clone)]
pub struct TopicModel {
    pub k: usize,
    pub v: usize,
    pub alpha: f64,
    pub beta: f64,
    /// K rows of length V, each summing to one.
    pub phi: Vec<Vec<f64>>,
    /// One K-vector per training document, aligned with `doc_ids`.
    pub theta: Vec<Vec<f64>>,
    pub doc_ids: Vec<String>,
    pub frozen: bool,
    pub training_cutoff: Option<NaiveDate>,
    pub seed: u64,
}

impl TopicModel {
    /// Freeze the topic-word distributions; later documents get fold-in
    /// inference only.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn doc_index(&self) -> HashMap<&str, usize> {
        self.doc_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect()
    }

    /// Highest-probability words per topic, resolved against a vocabulary.
    pub fn top_words<'a>(
        &self,
        vocab: &'a crate::corpus::Vocabulary,
        n: usize,
    ) -> Vec<Vec<(&'a str, f64)>> {
        self.phi
            .iter()
            .map(|row| {
                let mut idx: Vec<usize> = (0..row.len()).collect();
                idx.sort_by(|&a, &b| {
                    row[b].partial_cmp(&row[a]).unwrap().then_with(|| a.cmp(&b))
                });
                idx.into_iter().take(n).map(|w| (vocab.token(w as u32), row[w])).collect()
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), TopicModelError> {
        for row in &self.phi {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 || row.iter().any(|&p| p < 0.0) {
                return Err(TopicModelError::BadContainer("phi row is not a distribution".into()));
            }
        }
        for th in &self.theta {
            let s: f64 = th.iter().sum();
            if (s - 1.0).abs() > 1e-9 || th.iter().any(|&p| p < 0.0) {
                return Err(TopicModelError::BadContainer("theta is not a distribution".into()));
            }
        }
        Ok(())
    }
}

/// Versioned binary model container.
pub fn write_model<W: Write>(w: &mut W, m: &TopicModel) -> Result<(), TopicModelError> {
    w.write_all(MODEL_MAGIC)?;
    w.write_u32::<LittleEndian>(MODEL_VERSION)?;
    w.write_u32::<LittleEndian>(m.k as u32)?;
    w.write_u32::<LittleEndian>(m.v as u32)?;
    w.write_f64::<LittleEndian>(m.alpha)?;
    w.write_f64::<LittleEndian>(m.beta)?;
    w.write_u64::<LittleEndian>(m.seed)?;
    w.write_u8(m.frozen as u8)?;
    w.write_i32::<LittleEndian>(m.training_cutoff.map_or(0, |d| d.num_days_from_ce()))?;
    for row in &m.phi {
        for &p in row {
            w.write_f64::<LittleEndian>(p)?;
        }
    }
    w.write_u32::<LittleEndian>(m.doc_ids.len() as u32)?;
    for (id, th) in m.doc_ids.iter().zip(&m.theta) {
        w.write_u32::<LittleEndian>(id.len() as u32)?;
        w.write_all(id.as_bytes())?;
        for &p in th {
            w.write_f64::<LittleEndian>(p)?;
        }
    }
    Ok(())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<TopicModel, TopicModelError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(TopicModelError::BadContainer("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != MODEL_VERSION {
        return Err(TopicModelError::BadContainer(format!("unsupported version {version}")));
    }
    let k = r.read_u32::<LittleEndian>()? as usize;
    let v = r.read_u32::<LittleEndian>()? as usize;
    let alpha = r.read_f64::<LittleEndian>()?;
    let beta = r.read_f64::<LittleEndian>()?;
    let seed = r.read_u64::<LittleEndian>()?;
    let frozen = r.read_u8()? != 0;
    let cutoff_days = r.read_i32::<LittleEndian>()?;
    let training_cutoff = if cutoff_days == 0 {
        None
    } else {
        Some(
            NaiveDate::from_num_days_from_ce_opt(cutoff_days)
                .ok_or_else(|| TopicModelError::BadContainer("bad cutoff".into()))?,
        )
    };
    let mut phi = Vec::with_capacity(k);
    for _ in 0..k {
        let mut row = Vec::with_capacity(v);
        for _ in 0..v {
            row.push(r.read_f64::<LittleEndian>()?);
        }
        phi.push(row);
    }
    let n_docs = r.read_u32::<LittleEndian>()? as usize;
    let mut doc_ids = Vec::with_capacity(n_docs);
    let mut theta = Vec::with_capacity(n_docs);
    for _ in 0..n_docs {
        let len = r.read_u32::<LittleEndian>()? as usize;
        if len > 1 << 24 {
            return Err(TopicModelError::BadContainer(format!("doc id length {len}")));
        }
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        doc_ids.push(
            String::from_utf8(buf).map_err(|e| TopicModelError::BadContainer(e.to_string()))?,
        );
        let mut th = Vec::with_capacity(k);
        for _ in 0..k {
            th.push(r.read_f64::<LittleEndian>()?);
        }
        theta.push(th);
    }
    Ok(TopicModel { k, v, alpha, beta, phi, theta, doc_ids, frozen, training_cutoff, seed })
}

/// Human-inspection sidecar: top words per topic as JSON.
pub fn topics_sidecar_json(
    model: &TopicModel,
    vocab: &crate::corpus::Vocabulary,
    n_words: usize,
) -> serde_json::Value {
    let topics: Vec<serde_json::Value> = model
        .top_words(vocab, n_words)
        .into_iter()
        .enumerate()
        .map(|(t, words)| {
            serde_json::json!({
                "topic": t,
                "top_words": words
                    .into_iter()
                    .map(|(tok, p)| serde_json::json!({"token": tok, "prob": p}))
                    .collect::<Vec<_>>(),
            })
        })
        .collect();
    serde_json::json!({
        "k": model.k,
        "vocabulary_size": model.v,
        "frozen": model.frozen,
        "training_cutoff": model.training_cutoff.map(|d| d.to_string()),
        "topics": topics,
    })
}
