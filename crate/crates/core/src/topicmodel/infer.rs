//! Fold-in inference for documents arriving after the model freeze: token
//! topics are resampled against the fixed topic-word distributions, leaving
//! phi and every stored training theta untouched.

use super::{TopicModel, TopicModelError};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InferenceFlag {
    Inferred,
    /// No in-vocabulary tokens; the returned theta is uniform.
    UniformNoEvidence,
}

pub const DEFAULT_BURN_IN: usize = 50;
pub const DEFAULT_SAMPLES: usize = 50;

/// Fold-in Gibbs: `burn_in` sweeps, then the posterior-mean theta averaged
/// over `samples` further sweeps. Requires a frozen model.
pub fn infer_frozen(
    model: &TopicModel,
    tokens: &[u32],
    burn_in: usize,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, InferenceFlag), TopicModelError> {
    if !model.frozen {
        return Err(TopicModelError::NotFrozen);
    }
    let k = model.k;
    let in_vocab: Vec<usize> =
        tokens.iter().filter(|&&w| (w as usize) < model.v).map(|&w| w as usize).collect();
    if in_vocab.is_empty() {
        return Ok((vec![1.0 / k as f64; k], InferenceFlag::UniformNoEvidence));
    }

    let n = in_vocab.len();
    let alpha = model.alpha;
    let denom = n as f64 + k as f64 * alpha;

    let mut z: Vec<usize> = Vec::with_capacity(n);
    let mut counts = vec![0u32; k];
    for _ in 0..n {
        let t = rng.gen_range(0..k);
        z.push(t);
        counts[t] += 1;
    }

    let mut weights = vec![0.0f64; k];
    let mut theta_acc = vec![0.0f64; k];
    let total_sweeps = burn_in + samples.max(1);
    for sweep in 0..total_sweeps {
        for (i, &w) in in_vocab.iter().enumerate() {
            let old = z[i];
            counts[old] -= 1;
            let mut total = 0.0;
            for (t, wt) in weights.iter_mut().enumerate() {
                let val = model.phi[t][w] * (counts[t] as f64 + alpha);
                *wt = val;
                total += val;
            }
            let target = rng.gen::<f64>() * total;
            let mut cum = 0.0;
            let mut new = k - 1;
            for (t, &wt) in weights.iter().enumerate() {
                cum += wt;
                if target < cum {
                    new = t;
                    break;
                }
            }
            z[i] = new;
            counts[new] += 1;
        }
        if sweep >= burn_in {
            for (t, acc) in theta_acc.iter_mut().enumerate() {
                *acc += (counts[t] as f64 + alpha) / denom;
            }
        }
    }
    let s = samples.max(1) as f64;
    for acc in &mut theta_acc {
        *acc /= s;
    }
    Ok((theta_acc, InferenceFlag::Inferred))
}
