//! Query strategies for choosing which sample the oracle labels next.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::importance::{effective_weights, margin_from_vote, predictions, vote_fraction, DEFAULT_THRESHOLD};
use super::ImportanceState;
use crate::error::{Error, Result};
use crate::model::ScoreMatrix;
use crate::scalar::Scalar;

/// Default bias factor of low-confidence-anomaly sampling.
pub const DEFAULT_LAMBDA: f64 = 0.96;

/// Probability smoothing for the KL divergence.
const KL_SMOOTHING: f64 = 1e-9;

/// Rescales margins from `[0, 1]` to the `[0, 100]` range the bias factor is
/// calibrated for.
const MARGIN_SCALE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryKind {
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "ce")]
    ConsensusEntropy,
    #[serde(rename = "kl")]
    KlDivergence,
    #[serde(rename = "mla")]
    MostLikelyAnomalous,
    #[serde(rename = "lca")]
    LowConfidenceAnomaly,
}

impl QueryKind {
    pub const ALL: [QueryKind; 5] = [
        QueryKind::Random,
        QueryKind::ConsensusEntropy,
        QueryKind::KlDivergence,
        QueryKind::MostLikelyAnomalous,
        QueryKind::LowConfidenceAnomaly,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            QueryKind::Random => "random",
            QueryKind::ConsensusEntropy => "ce",
            QueryKind::KlDivergence => "kl",
            QueryKind::MostLikelyAnomalous => "mla",
            QueryKind::LowConfidenceAnomaly => "lca",
        }
    }
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QueryKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?} (random|ce|kl|mla|lca)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryStrategy {
    pub kind: QueryKind,
    pub lambda: f64,
    pub threshold: f64,
    pub seed: u64,
}

impl QueryStrategy {
    pub fn new(kind: QueryKind, seed: u64) -> Self {
        Self {
            kind,
            lambda: DEFAULT_LAMBDA,
            threshold: DEFAULT_THRESHOLD,
            seed,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold {} not in (0, 1)",
                self.threshold
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda {} must be >= 0", self.lambda)));
        }
        Ok(())
    }

    /// Whether labels are weighted by margin (normals get zero weight).
    pub fn weights_by_margin(&self) -> bool {
        self.kind == QueryKind::LowConfidenceAnomaly
    }
}

fn binary_entropy(p: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    term(p) + term(1.0 - p)
}

fn smooth(p: f64) -> f64 {
    (p + KL_SMOOTHING) / (1.0 + 2.0 * KL_SMOOTHING)
}

fn bernoulli_kl(p: f64, q: f64) -> f64 {
    let (p, q) = (smooth(p), smooth(q));
    p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
}

/// Selects one unqueried sample using precomputed predictions.
/// Ties are broken uniformly at random.
pub(crate) fn select_with_predictions<T: Scalar>(
    strategy: &QueryStrategy,
    state: &ImportanceState<T>,
    scores: &ScoreMatrix<T>,
    preds: &Array2<u8>,
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    let candidates: Vec<usize> = state
        .queried_mask()
        .iter()
        .enumerate()
        .filter_map(|(j, &q)| (!q).then_some(j))
        .collect();
    if candidates.is_empty() {
        return Err(Error::PoolExhausted);
    }
    if strategy.kind == QueryKind::Random {
        return Ok(candidates[rng.gen_range(0..candidates.len())]);
    }

    let weights = effective_weights(state.importances());
    let weights_f64: Vec<f64> = weights.iter().map(|w| w.as_f64()).collect();
    let criterion: Vec<f64> = match strategy.kind {
        QueryKind::Random => unreachable!("handled above"),
        QueryKind::ConsensusEntropy => candidates
            .iter()
            .map(|&j| {
                let row = scores.row(j);
                let consensus: f64 = row.iter().zip(&weights_f64).map(|(s, w)| s.as_f64() * w).sum();
                binary_entropy(consensus.clamp(0.0, 1.0))
            })
            .collect(),
        QueryKind::KlDivergence => candidates
            .iter()
            .map(|&j| {
                let row = scores.row(j);
                let consensus: f64 = row.iter().zip(&weights_f64).map(|(s, w)| s.as_f64() * w).sum();
                let consensus = consensus.clamp(0.0, 1.0);
                row.iter().map(|s| bernoulli_kl(s.as_f64(), consensus)).sum()
            })
            .collect(),
        QueryKind::MostLikelyAnomalous => candidates
            .iter()
            .map(|&j| vote_fraction(preds.row(j).as_slice().expect("row-major"), &weights).as_f64())
            .collect(),
        QueryKind::LowConfidenceAnomaly => {
            let bias = strategy.lambda * MARGIN_SCALE;
            candidates
                .iter()
                .map(|&j| {
                    let vote = vote_fraction(preds.row(j).as_slice().expect("row-major"), &weights);
                    let margin = margin_from_vote(vote).as_f64();
                    // log of exp(bias * margin) / u with u in (0, 1]
                    let u = 1.0 - rng.gen::<f64>();
                    bias * margin - u.ln()
                })
                .collect()
        }
    };

    let best = criterion.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = candidates
        .iter()
        .zip(&criterion)
        .filter_map(|(&j, &c)| (c == best).then_some(j))
        .collect();
    Ok(match ties.len() {
        0 => candidates[0],
        1 => ties[0],
        n => ties[rng.gen_range(0..n)],
    })
}

/// Selects the next sample to query.
pub fn select_query<T: Scalar>(
    strategy: &QueryStrategy,
    state: &ImportanceState<T>,
    scores: &ScoreMatrix<T>,
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    strategy.validate()?;
    let preds = predictions(scores, T::lit(strategy.threshold));
    select_with_predictions(strategy, state, scores, &preds, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    fn state(m: usize, n: usize) -> ImportanceState<f64> {
        ImportanceState::new(m, n, n).unwrap()
    }

    #[test]
    fn consensus_entropy_prefers_even_probability() {
        let scores = ScoreMatrix::new(array![[0.99, 0.99], [0.5, 0.5], [0.99, 0.99]], vec![1, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = QueryStrategy::new(QueryKind::ConsensusEntropy, 0);
        assert_eq!(select_query(&s, &state(2, 3), &scores, &mut rng).unwrap(), 1);
    }

    #[test]
    fn most_likely_anomalous_prefers_full_vote() {
        let scores = ScoreMatrix::new(
            array![[0.0, 0.0, 0.0, 0.0], [0.95, 0.95, 0.0, 0.0], [0.95, 0.95, 0.95, 0.95]],
            vec![1, 2, 3, 4],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = QueryStrategy::new(QueryKind::MostLikelyAnomalous, 0);
        assert_eq!(select_query(&s, &state(4, 3), &scores, &mut rng).unwrap(), 2);
    }

    #[test]
    fn kl_prefers_disagreement() {
        let scores = ScoreMatrix::new(array![[0.5, 0.5], [0.01, 0.99], [0.2, 0.2]], vec![1, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = QueryStrategy::new(QueryKind::KlDivergence, 0);
        assert_eq!(select_query(&s, &state(2, 3), &scores, &mut rng).unwrap(), 1);
    }

    #[test]
    fn exhausted_pool_errors() {
        let scores = ScoreMatrix::new(array![[0.5]], vec![1]).unwrap();
        let mut st = state(1, 1);
        st.mark_queried(0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for kind in QueryKind::ALL {
            let s = QueryStrategy::new(kind, 0);
            assert!(matches!(select_query(&s, &st, &scores, &mut rng), Err(Error::PoolExhausted)));
        }
    }

    #[test]
    fn parses_cli_names() {
        for kind in QueryKind::ALL {
            assert_eq!(kind.as_str().parse::<QueryKind>().unwrap(), kind);
        }
        assert!("qbc".parse::<QueryKind>().is_err());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(QueryStrategy::new(QueryKind::Random, 0).with_threshold(1.0).validate().is_err());
        assert!(QueryStrategy::new(QueryKind::Random, 0).with_lambda(-1.0).validate().is_err());
    }
}
