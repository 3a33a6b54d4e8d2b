//! Collapsed Gibbs sampler for latent Dirichlet allocation.
//!
//! The sampler state is the per-token topic assignment plus the three count
//! tables; topic-word and document-topic distributions are posterior means of
//! the counts. One `f64` draw is consumed per token per sweep (and one
//! `gen_range` per token at initialization), which is the determinism contract
//! the reference-sampler test relies on.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct LdaState {
    k: usize,
    v: usize,
    alpha: f64,
    beta: f64,
    assignments: Vec<Vec<u16>>,
    doc_topic: Vec<u32>,
    topic_word: Vec<u32>,
    topic_totals: Vec<u32>,
}

impl LdaState {
    /// Random uniform topic initialization.
    pub fn init(docs: &[Vec<u32>], k: usize, v: usize, alpha: f64, beta: f64, rng: &mut ChaCha8Rng) -> LdaState {
        assert!(k >= 1 && k <= u16::MAX as usize, "topic count {k}");
        let mut state = LdaState {
            k,
            v,
            alpha,
            beta,
            assignments: docs.iter().map(|d| Vec::with_capacity(d.len())).collect(),
            doc_topic: vec![0; docs.len() * k],
            topic_word: vec![0; k * v],
            topic_totals: vec![0; k],
        };
        for (d, doc) in docs.iter().enumerate() {
            for &w in doc {
                debug_assert!((w as usize) < v, "token id {w} out of vocabulary");
                let z = rng.gen_range(0..k) as u16;
                state.assignments[d].push(z);
                state.doc_topic[d * k + z as usize] += 1;
                state.topic_word[z as usize * v + w as usize] += 1;
                state.topic_totals[z as usize] += 1;
            }
        }
        state
    }

    pub fn topics(&self) -> usize {
        self.k
    }

    pub fn vocab_size(&self) -> usize {
        self.v
    }

    pub fn priors(&self) -> (f64, f64) {
        (self.alpha, self.beta)
    }

    pub fn assignments(&self) -> &[Vec<u16>] {
        &self.assignments
    }

    pub fn doc_topic_counts(&self, d: usize) -> &[u32] {
        &self.doc_topic[d * self.k..(d + 1) * self.k]
    }

    pub fn topic_totals(&self) -> &[u32] {
        &self.topic_totals
    }

    /// One full pass resampling every token's topic from the collapsed
    /// conditional p(z=k) ∝ (n_dk+α)(n_kw+β)/(n_k+Vβ).
    pub fn sweep(&mut self, docs: &[Vec<u32>], rng: &mut ChaCha8Rng) {
        let k = self.k;
        let v = self.v;
        let vbeta = v as f64 * self.beta;
        let mut weights = vec![0.0f64; k];
        for (d, doc) in docs.iter().enumerate() {
            let dt = d * k;
            for (i, &w) in doc.iter().enumerate() {
                let old = self.assignments[d][i] as usize;
                self.doc_topic[dt + old] -= 1;
                self.topic_word[old * v + w as usize] -= 1;
                self.topic_totals[old] -= 1;

                let mut total = 0.0;
                for (t, wt) in weights.iter_mut().enumerate() {
                    let val = (self.doc_topic[dt + t] as f64 + self.alpha)
                        * (self.topic_word[t * v + w as usize] as f64 + self.beta)
                        / (self.topic_totals[t] as f64 + vbeta);
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

                self.assignments[d][i] = new as u16;
                self.doc_topic[dt + new] += 1;
                self.topic_word[new * v + w as usize] += 1;
                self.topic_totals[new] += 1;
            }
        }
    }

    /// Posterior-mean document-topic distribution for one document.
    pub fn theta(&self, d: usize) -> Vec<f64> {
        let counts = self.doc_topic_counts(d);
        let nd: u32 = counts.iter().sum();
        let denom = nd as f64 + self.k as f64 * self.alpha;
        counts.iter().map(|&c| (c as f64 + self.alpha) / denom).collect()
    }

    pub fn all_theta(&self, n_docs: usize) -> Vec<Vec<f64>> {
        (0..n_docs).map(|d| self.theta(d)).collect()
    }

    /// Posterior-mean topic-word distributions, K rows of length V.
    pub fn phi(&self) -> Vec<Vec<f64>> {
        let denom_base = self.v as f64 * self.beta;
        (0..self.k)
            .map(|t| {
                let denom = self.topic_totals[t] as f64 + denom_base;
                self.topic_word[t * self.v..(t + 1) * self.v]
                    .iter()
                    .map(|&c| (c as f64 + self.beta) / denom)
                    .collect()
            })
            .collect()
    }

    /// Count-table consistency: row sums equal document lengths, topic totals
    /// match both tables, total assignments equal total tokens.
    pub fn invariants_hold(&self, docs: &[Vec<u32>]) -> bool {
        let mut token_total = 0u64;
        for (d, doc) in docs.iter().enumerate() {
            token_total += doc.len() as u64;
            let row_sum: u32 = self.doc_topic_counts(d).iter().sum();
            if row_sum as usize != doc.len() {
                return false;
            }
        }
        let totals_sum: u64 = self.topic_totals.iter().map(|&c| c as u64).sum();
        if totals_sum != token_total {
            return false;
        }
        for t in 0..self.k {
            let word_sum: u64 =
                self.topic_word[t * self.v..(t + 1) * self.v].iter().map(|&c| c as u64).sum();
            if word_sum != self.topic_totals[t] as u64 {
                return false;
            }
            let doc_sum: u64 = (0..docs.len()).map(|d| self.doc_topic[d * self.k + t] as u64).sum();
            if doc_sum != self.topic_totals[t] as u64 {
                return false;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn toy_docs() -> Vec<Vec<u32>> {
        vec![vec![0, 1, 2], vec![2, 1, 0]]
    }

    #[test]
    fn single_topic_sweep_is_noop_on_counts() {
        let docs = toy_docs();
        let mut rng = stream_rng(1, 0);
        let mut st = LdaState::init(&docs, 1, 3, 0.5, 0.01, &mut rng);
        let before = (st.doc_topic.clone(), st.topic_word.clone(), st.topic_totals.clone());
        st.sweep(&docs, &mut rng);
        assert!(st.assignments().iter().flatten().all(|&z| z == 0));
        assert_eq!(before.0, st.doc_topic);
        assert_eq!(before.1, st.topic_word);
        assert_eq!(before.2, st.topic_totals);
    }

    #[test]
    fn counts_conserve_over_randomized_sweeps() {
        let mut seed_rng = stream_rng(42, 9);
        for trial in 0..20 {
            let docs: Vec<Vec<u32>> = (0..8)
                .map(|_| (0..seed_rng.gen_range(1..30)).map(|_| seed_rng.gen_range(0..17)).collect())
                .collect();
            let mut rng = stream_rng(100 + trial, 0);
            let mut st = LdaState::init(&docs, 4, 17, 0.3, 0.05, &mut rng);
            assert!(st.invariants_hold(&docs));
            for _ in 0..50 {
                st.sweep(&docs, &mut rng);
                assert!(st.invariants_hold(&docs));
            }
        }
    }

    /// Straight-line reference resampler: recomputes the collapsed conditional
    /// from scratch counts at every step, sharing the RNG stream.
    fn reference_sweep(
        docs: &[Vec<u32>],
        assignments: &mut [Vec<u16>],
        k: usize,
        v: usize,
        alpha: f64,
        beta: f64,
        rng: &mut ChaCha8Rng,
    ) {
        for d in 0..docs.len() {
            for i in 0..docs[d].len() {
                let w = docs[d][i] as usize;
                // counts with the current token removed, recomputed naively
                let mut n_dk = vec![0u32; k];
                let mut n_kw = vec![0u32; k];
                let mut n_k = vec![0u32; k];
                for dd in 0..docs.len() {
                    for ii in 0..docs[dd].len() {
                        if dd == d && ii == i {
                            continue;
                        }
                        let z = assignments[dd][ii] as usize;
                        if dd == d {
                            n_dk[z] += 1;
                        }
                        if docs[dd][ii] as usize == w {
                            n_kw[z] += 1;
                        }
                        n_k[z] += 1;
                    }
                }
                let mut weights = vec![0.0f64; k];
                let mut total = 0.0;
                for t in 0..k {
                    let val = (n_dk[t] as f64 + alpha) * (n_kw[t] as f64 + beta)
                        / (n_k[t] as f64 + v as f64 * beta);
                    weights[t] = val;
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
                assignments[d][i] = new as u16;
            }
        }
    }

    #[test]
    fn matches_reference_sampler_trajectory() {
        let docs = toy_docs();
        let (k, v, alpha, beta) = (2usize, 3usize, 0.7, 0.02);

        let mut rng_a = stream_rng(7, 3);
        let mut st = LdaState::init(&docs, k, v, alpha, beta, &mut rng_a);

        // replicate the initialization draws on the shared stream
        let mut rng_b = stream_rng(7, 3);
        let mut ref_assign: Vec<Vec<u16>> = docs
            .iter()
            .map(|doc| doc.iter().map(|_| rng_b.gen_range(0..k) as u16).collect())
            .collect();
        assert_eq!(st.assignments(), ref_assign.as_slice());

        for sweep in 0..30 {
            st.sweep(&docs, &mut rng_a);
            reference_sweep(&docs, &mut ref_assign, k, v, alpha, beta, &mut rng_b);
            assert_eq!(st.assignments(), ref_assign.as_slice(), "diverged at sweep {sweep}");
        }
    }

    #[test]
    fn theta_and_phi_are_probability_vectors() {
        let docs = toy_docs();
        let mut rng = stream_rng(3, 1);
        let mut st = LdaState::init(&docs, 3, 3, 0.4, 0.02, &mut rng);
        st.sweep(&docs, &mut rng);
        for d in 0..docs.len() {
            let th = st.theta(d);
            assert!((th.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(th.iter().all(|&p| p >= 0.0));
        }
        for row in st.phi() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn empty_document_gets_uniform_theta() {
        let docs = vec![vec![], vec![0, 1]];
        let mut rng = stream_rng(5, 0);
        let st = LdaState::init(&docs, 4, 2, 0.5, 0.01, &mut rng);
        let th = st.theta(0);
        assert!(th.iter().all(|&p| (p - 0.25).abs() < 1e-12));
    }
}
