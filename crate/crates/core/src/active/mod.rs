//! Pool-based active learning of context importances.

mod importance;
mod strategy;

use std::sync::Arc;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use importance::{
    detection_error, effective_weights, importance, margin_from_vote, margin_rate, predictions,
    sample_weight, vote_fraction, DEFAULT_THRESHOLD, EPSILON_MIN,
};
pub use strategy::{select_query, QueryKind, QueryStrategy, DEFAULT_LAMBDA};

use crate::error::{Error, Result};
use crate::model::{LabeledPool, ScoreMatrix};
use crate::scalar::Scalar;
use importance::clamp_error;
use strategy::select_with_predictions;

/// Per-context detection errors and importances plus the labeled pool.
///
/// Importances start at 1 for every context, with the matching error
/// `1 / (1 + e^2)`, so every stored pair satisfies `I = importance(eps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceState<T> {
    epsilons: Vec<T>,
    importances: Vec<T>,
    pool: LabeledPool<T>,
    queried_mask: Vec<bool>,
}

impl<T: Scalar> ImportanceState<T> {
    pub fn new(n_contexts: usize, n_samples: usize, budget: usize) -> Result<Self> {
        if budget > n_samples {
            return Err(Error::BudgetExceedsPool {
                budget,
                pool: n_samples,
            });
        }
        let eps0 = T::one() / (T::one() + T::lit(2.0).exp());
        let i0 = importance(eps0);
        Ok(Self {
            epsilons: vec![eps0; n_contexts],
            importances: vec![i0; n_contexts],
            pool: LabeledPool::new(budget)?,
            queried_mask: vec![false; n_samples],
        })
    }

    pub fn epsilons(&self) -> &[T] {
        &self.epsilons
    }

    pub fn importances(&self) -> &[T] {
        &self.importances
    }

    pub fn pool(&self) -> &LabeledPool<T> {
        &self.pool
    }

    pub fn queried_mask(&self) -> &[bool] {
        &self.queried_mask
    }

    pub fn n_queried(&self) -> usize {
        self.pool.len()
    }

    pub(crate) fn mark_queried(&mut self, index: usize) {
        self.queried_mask[index] = true;
    }

    /// Recomputes every context's error and importance from the pool.
    /// Leaves them untouched while the pool carries no weight, since
    /// zero-weight labels hold no information about any context.
    fn refresh(&mut self, preds: &Array2<u8>) -> bool {
        let total = self.pool.total_weight();
        if !(total > T::zero()) {
            return false;
        }
        let m = self.epsilons.len();
        let mut wrong = vec![T::zero(); m];
        for e in self.pool.entries() {
            if e.weight == T::zero() {
                continue;
            }
            let row = preds.row(e.index);
            for (i, &p) in row.iter().enumerate() {
                if p != e.label {
                    wrong[i] = wrong[i] + e.weight;
                }
            }
        }
        for i in 0..m {
            let eps = clamp_error(wrong[i] / total);
            self.epsilons[i] = eps;
            self.importances[i] = importance(eps);
        }
        true
    }
}

/// Label source for the loop.
pub trait Oracle {
    fn label(&mut self, index: usize) -> Result<u8>;
}

/// Simulated oracle answering from ground-truth labels.
pub struct GroundTruthOracle<'a> {
    labels: &'a [u8],
}

impl<'a> GroundTruthOracle<'a> {
    pub fn new(labels: &'a [u8]) -> Self {
        Self { labels }
    }
}

impl Oracle for GroundTruthOracle<'_> {
    fn label(&mut self, index: usize) -> Result<u8> {
        self.labels.get(index).copied().ok_or(Error::DimensionMismatch {
            expected: self.labels.len(),
            found: index + 1,
        })
    }
}

/// The sample currently awaiting a label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingQuery<T> {
    pub index: usize,
    pub margin: T,
    pub vote_fraction: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextDelta<T> {
    pub context: usize,
    pub epsilon_before: T,
    pub epsilon_after: T,
    pub importance_before: T,
    pub importance_after: T,
}

/// One query of the loop, with the contexts whose estimates moved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord<T> {
    pub iteration: usize,
    pub sample_index: usize,
    pub margin: T,
    pub label: u8,
    pub weight: T,
    pub deltas: Vec<ContextDelta<T>>,
}

/// Stepwise active learner over a fixed score matrix.
///
/// `next_query` selects (or re-reports) the pending sample; `submit` applies
/// its label. Driving it with a ground-truth oracle is exactly
/// [`run_active_loop`].
#[derive(Debug, Clone)]
pub struct ActiveLearner<T> {
    scores: Arc<ScoreMatrix<T>>,
    preds: Array2<u8>,
    strategy: QueryStrategy,
    state: ImportanceState<T>,
    rng: ChaCha8Rng,
    pending: Option<PendingQuery<T>>,
    audit: Vec<AuditRecord<T>>,
}

impl<T: Scalar> ActiveLearner<T> {
    pub fn new(scores: Arc<ScoreMatrix<T>>, strategy: QueryStrategy, budget: usize) -> Result<Self> {
        strategy.validate()?;
        if budget == 0 {
            return Err(Error::InvalidParameter("budget must be at least 1".into()));
        }
        let state = ImportanceState::new(scores.n_contexts(), scores.n_samples(), budget)?;
        let preds = predictions(&scores, T::lit(strategy.threshold));
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(strategy.seed),
            scores,
            preds,
            strategy,
            state,
            pending: None,
            audit: Vec::new(),
        })
    }

    pub fn state(&self) -> &ImportanceState<T> {
        &self.state
    }

    pub fn strategy(&self) -> &QueryStrategy {
        &self.strategy
    }

    pub fn scores(&self) -> &ScoreMatrix<T> {
        &self.scores
    }

    pub fn predictions(&self) -> &Array2<u8> {
        &self.preds
    }

    pub fn audit(&self) -> &[AuditRecord<T>] {
        &self.audit
    }

    pub fn pending(&self) -> Option<&PendingQuery<T>> {
        self.pending.as_ref()
    }

    pub fn is_complete(&self) -> bool {
        self.state.pool.is_full()
    }

    pub fn budget(&self) -> usize {
        self.state.pool.budget()
    }

    /// Margin and weighted vote of a sample under the current importances.
    pub fn confidence(&self, index: usize) -> (T, T) {
        let weights = effective_weights(&self.state.importances);
        let vote = vote_fraction(self.preds.row(index).as_slice().expect("row-major"), &weights);
        (margin_from_vote(vote), vote)
    }

    pub fn next_query(&mut self) -> Result<PendingQuery<T>> {
        if let Some(p) = &self.pending {
            return Ok(p.clone());
        }
        if self.is_complete() {
            return Err(Error::PoolExhausted);
        }
        let index = select_with_predictions(&self.strategy, &self.state, &self.scores, &self.preds, &mut self.rng)?;
        let (margin, vote_fraction) = self.confidence(index);
        let pending = PendingQuery {
            index,
            margin,
            vote_fraction,
        };
        self.pending = Some(pending.clone());
        Ok(pending)
    }

    /// Applies the oracle's label to the pending sample.
    pub fn submit(&mut self, index: usize, label: u8) -> Result<&AuditRecord<T>> {
        let pending = match &self.pending {
            Some(p) if p.index == index => p.clone(),
            Some(p) => {
                return Err(Error::InvalidParameter(format!(
                    "sample {index} is not the pending query {}",
                    p.index
                )))
            }
            None if self.state.queried_mask.get(index) == Some(&true) => {
                return Err(Error::AlreadyLabeled { index })
            }
            None => return Err(Error::InvalidParameter("no pending query".into())),
        };
        if label > 1 {
            return Err(Error::LabelDomain {
                row: index,
                value: label.to_string(),
            });
        }
        let weight = if self.strategy.weights_by_margin() {
            sample_weight(label, pending.margin)
        } else {
            T::one()
        };
        let before_eps = self.state.epsilons.clone();
        let before_imp = self.state.importances.clone();
        self.state.pool.push(index, label, weight)?;
        self.state.mark_queried(index);
        self.pending = None;
        let mut deltas = Vec::new();
        if self.state.refresh(&self.preds) {
            for i in 0..before_eps.len() {
                if before_eps[i] != self.state.epsilons[i] {
                    deltas.push(ContextDelta {
                        context: i,
                        epsilon_before: before_eps[i],
                        epsilon_after: self.state.epsilons[i],
                        importance_before: before_imp[i],
                        importance_after: self.state.importances[i],
                    });
                }
            }
        }
        self.audit.push(AuditRecord {
            iteration: self.audit.len() + 1,
            sample_index: index,
            margin: pending.margin,
            label,
            weight,
            deltas,
        });
        Ok(self.audit.last().expect("just pushed"))
    }

    pub fn into_run(self) -> ActiveRun<T> {
        ActiveRun {
            state: self.state,
            audit: self.audit,
        }
    }
}

/// Final state and audit trail of a completed loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveRun<T> {
    pub state: ImportanceState<T>,
    pub audit: Vec<AuditRecord<T>>,
}

impl<T: Scalar> ActiveRun<T> {
    pub fn queried(&self) -> Vec<usize> {
        self.audit.iter().map(|r| r.sample_index).collect()
    }

    /// Audit trail as line-delimited JSON.
    pub fn audit_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.audit {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Runs `budget` query, label, reweight iterations.
pub fn run_active_loop<T: Scalar>(
    scores: Arc<ScoreMatrix<T>>,
    oracle: &mut dyn Oracle,
    strategy: QueryStrategy,
    budget: usize,
) -> Result<ActiveRun<T>> {
    let mut learner = ActiveLearner::new(scores, strategy, budget)?;
    while !learner.is_complete() {
        let q = learner.next_query()?;
        let y = oracle.label(q.index)?;
        learner.submit(q.index, y)?;
    }
    Ok(learner.into_run())
}
