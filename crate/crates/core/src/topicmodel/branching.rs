//! Branching chain selection: rounds of parallel Gibbs chains, each round's
//! winner chosen by out-of-sample return R² and cloned into the next round.

use super::gibbs::LdaState;
use super::{TopicModel, TopicModelError};
use crate::corpus::{Corpus, Session};
use crate::linalg::{self, Mat};
use crate::rng::{seeded_hash, stream_rng, streams};
use chrono::NaiveDate;
use rayon::prelude::*;
use std::collections::{BTreeMap, HashMap};

/// Default priors: symmetric alpha = 50/K, beta = 0.01.
pub fn default_alpha(k: usize) -> f64 {
    50.0 / k as f64
}
pub const DEFAULT_BETA: f64 = 0.01;

/// Ridge added to the scoring regression's normal equations for rank safety.
const SCORE_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BranchingConfig {
    pub chains_per_round: usize,
    pub rounds: usize,
    pub iterations_per_round: usize,
    pub holdout_fraction: f64,
}

impl Default for BranchingConfig {
    fn default() -> Self {
        BranchingConfig {
            chains_per_round: 10,
            rounds: 5,
            iterations_per_round: 200,
            holdout_fraction: 0.10,
        }
    }
}

impl BranchingConfig {
    pub fn validate(&self) -> Result<(), TopicModelError> {
        if self.chains_per_round == 0 || self.rounds == 0 || self.iterations_per_round == 0 {
            return Err(TopicModelError::BadConfig(
                "chains, rounds, and iterations must be positive".into(),
            ));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(TopicModelError::BadConfig(format!(
                "holdout fraction {} outside (0, 1)",
                self.holdout_fraction
            )));
        }
        Ok(())
    }
}

/// Daily session returns keyed by (firm, trading day, session).
#[derive(Debug, Clone, Default)]
pub struct SessionReturns {
    map: HashMap<(u32, NaiveDate, Session), f64>,
}

impl SessionReturns {
    pub fn insert(&mut self, firm: u32, day: NaiveDate, session: Session, ret: f64) {
        self.map.insert((firm, day, session), ret);
    }

    pub fn get(&self, firm: u32, day: NaiveDate, session: Session) -> Option<f64> {
        self.map.get(&(firm, day, session)).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct RoundDiagnostics {
    pub round: usize,
    /// Per-chain scores; excluded chains carry None.
    pub scores: Vec<Option<f64>>,
    pub winner_index: usize,
    pub winner_score: f64,
}

/// Out-of-sample R² of a linear return-on-exposure regression.
///
/// Coefficients come from the training cells (with a small ridge for rank
/// safety); R² is evaluated on the holdout cells against the benchmark of
/// predicting the training mean: R² = 1 - SSE / Σ(y_h - ȳ_train)².
pub fn score_oos_r2(
    train: &[(Vec<f64>, f64)],
    holdout: &[(Vec<f64>, f64)],
) -> Result<f64, TopicModelError> {
    if train.is_empty() || holdout.is_empty() {
        return Err(TopicModelError::EmptyTrainingSample);
    }
    let k = train[0].0.len();
    let p = k + 1;

    let mut xtx = Mat::zeros(p, p);
    let mut xty = vec![0.0; p];
    let mut row = vec![0.0; p];
    for (z, y) in train {
        row[0] = 1.0;
        row[1..].copy_from_slice(z);
        for i in 0..p {
            xty[i] += row[i] * y;
            for j in 0..p {
                xtx[(i, j)] += row[i] * row[j];
            }
        }
    }
    for i in 0..p {
        xtx[(i, i)] += SCORE_RIDGE;
    }
    let coef = linalg::solve_spd(&xtx, &xty)
        .map_err(|_| TopicModelError::EmptyTrainingSample)?;

    let train_mean = train.iter().map(|(_, y)| y).sum::<f64>() / train.len() as f64;
    let mut sse = 0.0;
    let mut sst = 0.0;
    for (z, y) in holdout {
        let mut pred = coef[0];
        for (j, &zj) in z.iter().enumerate() {
            pred += coef[j + 1] * zj;
        }
        sse += (y - pred) * (y - pred);
        sst += (y - train_mean) * (y - train_mean);
    }
    if sst <= 0.0 {
        return Err(TopicModelError::DegenerateHoldout);
    }
    Ok(1.0 - sse / sst)
}

/// Collect firm-session exposure cells for the subset of articles selected by
/// `take`, joined with contemporaneous returns. Cells are accumulated in
/// article order and emitted in key order, so results are deterministic.
fn exposure_cells(
    corpus: &Corpus,
    thetas: &[Vec<f64>],
    returns: &SessionReturns,
    take: impl Fn(usize) -> bool,
) -> Vec<(Vec<f64>, f64)> {
    let mut cells: BTreeMap<(u32, NaiveDate, Session), Vec<f64>> = BTreeMap::new();
    for (i, article) in corpus.articles.iter().enumerate() {
        if !take(i) {
            continue;
        }
        for &firm in &article.firm_ids {
            let entry = cells
                .entry((firm, article.trading_day, article.session))
                .or_insert_with(|| vec![0.0; thetas[i].len()]);
            for (acc, &t) in entry.iter_mut().zip(&thetas[i]) {
                *acc += t;
            }
        }
    }
    cells
        .into_iter()
        .filter_map(|((firm, day, session), z)| {
            returns.get(firm, day, session).map(|r| (z, r))
        })
        .collect()
}

/// Holdout membership by stable id hash, roughly `holdout_fraction` of
/// articles, fixed per (seed, id).
fn holdout_mask(corpus: &Corpus, seed: u64, fraction: f64) -> Vec<bool> {
    let threshold = (fraction * 1_000_000.0) as u64;
    corpus
        .articles
        .iter()
        .map(|a| seeded_hash(&a.article_id, seed) % 1_000_000 < threshold)
        .collect()
}

fn score_chain(
    state: &LdaState,
    corpus: &Corpus,
    returns: &SessionReturns,
    holdout: &[bool],
) -> Option<f64> {
    let thetas = state.all_theta(corpus.articles.len());
    let train = exposure_cells(corpus, &thetas, returns, |i| !holdout[i]);
    let hold = exposure_cells(corpus, &thetas, returns, |i| holdout[i]);
    match score_oos_r2(&train, &hold) {
        Ok(s) if s.is_finite() => Some(s),
        _ => None,
    }
}

/// Train a K-topic model by branching selection.
///
/// Round one launches `chains_per_round` independently initialized samplers;
/// every later round launches clones of the previous winner on fresh RNG
/// streams. Each round keeps the chain with the highest out-of-sample R².
/// Output depends only on (seed, config, corpus), never on thread scheduling.
pub fn train_branching(
    corpus: &Corpus,
    returns: &SessionReturns,
    k: usize,
    config: &BranchingConfig,
    master_seed: u64,
    training_cutoff: Option<NaiveDate>,
) -> Result<(TopicModel, Vec<RoundDiagnostics>), TopicModelError> {
    config.validate()?;
    if corpus.articles.is_empty() {
        return Err(TopicModelError::EmptyCorpus);
    }
    let v = corpus.vocabulary.len();
    let alpha = default_alpha(k);
    let beta = DEFAULT_BETA;
    let docs: Vec<Vec<u32>> = corpus.articles.iter().map(|a| a.tokens.clone()).collect();
    let holdout = holdout_mask(corpus, master_seed, config.holdout_fraction);

    let mut winner: Option<LdaState> = None;
    let mut diagnostics = Vec::with_capacity(config.rounds);

    for round in 0..config.rounds {
        let seed_base = streams::CHAIN + (round * config.chains_per_round) as u64;
        let parent = winner.take();
        let outcomes: Vec<(LdaState, Option<f64>)> = (0..config.chains_per_round)
            .into_par_iter()
            .map(|c| {
                let mut rng = stream_rng(master_seed, seed_base + c as u64);
                let mut state = match &parent {
                    Some(p) => p.clone(),
                    None => LdaState::init(&docs, k, v, alpha, beta, &mut rng),
                };
                for _ in 0..config.iterations_per_round {
                    state.sweep(&docs, &mut rng);
                }
                let score = score_chain(&state, corpus, returns, &holdout);
                (state, score)
            })
            .collect();

        let mut best: Option<(usize, f64)> = None;
        for (i, (_, score)) in outcomes.iter().enumerate() {
            if let Some(s) = score {
                if best.map_or(true, |(_, bs)| *s > bs) {
                    best = Some((i, *s));
                }
            }
        }
        let (wi, ws) = best.ok_or(TopicModelError::AllChainsExcluded)?;
        diagnostics.push(RoundDiagnostics {
            round,
            scores: outcomes.iter().map(|(_, s)| *s).collect(),
            winner_index: wi,
            winner_score: ws,
        });
        winner = Some(outcomes.into_iter().nth(wi).expect("winner index").0);
    }

    let state = winner.expect("at least one round ran");
    let model = TopicModel {
        k,
        v,
        alpha,
        beta,
        phi: state.phi(),
        theta: state.all_theta(corpus.articles.len()),
        doc_ids: corpus.articles.iter().map(|a| a.article_id.clone()).collect(),
        frozen: false,
        training_cutoff,
        seed: master_seed,
    };
    Ok((model, diagnostics))
}
