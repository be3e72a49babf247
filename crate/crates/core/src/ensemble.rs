//! Pruning and aggregation of per-context scores into final scores.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detector::ContextModel;
use crate::error::{Error, Result};
use crate::model::{Context, Dataset, ScoreMatrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CombinerKind {
    #[serde(rename = "wiscon")]
    WisCon,
    #[serde(rename = "single")]
    Single,
    #[serde(rename = "true")]
    TrueContext,
    #[serde(rename = "avg")]
    Average,
    #[serde(rename = "max")]
    Maximization,
}

impl CombinerKind {
    pub const ALL: [CombinerKind; 5] = [
        CombinerKind::WisCon,
        CombinerKind::Single,
        CombinerKind::TrueContext,
        CombinerKind::Average,
        CombinerKind::Maximization,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CombinerKind::WisCon => "wiscon",
            CombinerKind::Single => "single",
            CombinerKind::TrueContext => "true",
            CombinerKind::Average => "avg",
            CombinerKind::Maximization => "max",
        }
    }

    /// Whether the combiner depends on the learned importances.
    pub fn uses_importances(&self) -> bool {
        matches!(self, CombinerKind::WisCon | CombinerKind::Single)
    }
}

impl fmt::Display for CombinerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CombinerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CombinerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown combiner {s:?} (wiscon|single|true|avg|max)")))
    }
}

/// A context retained by the combiner with its aggregation weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeptContext<T> {
    pub index: usize,
    pub bitmask: u64,
    pub weight: T,
}

/// Which columns a combiner uses and how. Computed once from the importances
/// and then applied to any score matrix over the same contexts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePlan<T> {
    pub kind: CombinerKind,
    pub kept: Vec<KeptContext<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult<T> {
    pub combiner_kind: CombinerKind,
    pub kept_contexts: Vec<KeptContext<T>>,
    pub final_scores: Vec<T>,
}

fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Indices of contexts with strictly positive importance, or the best single
/// context if there are none.
pub fn prune<T: Scalar>(importances: &[T]) -> Vec<usize> {
    let kept: Vec<usize> = importances
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| (v > T::zero()).then_some(i))
        .collect();
    if kept.is_empty() && !importances.is_empty() {
        vec![argmax(importances)]
    } else {
        kept
    }
}

/// Highest-importance context; ties go to the lowest index.
pub fn select_single<T: Scalar>(importances: &[T]) -> Result<usize> {
    if importances.is_empty() {
        return Err(Error::InvalidParameter("no contexts".into()));
    }
    Ok(argmax(importances))
}

/// Column of the dataset's known true context.
pub fn true_context_index<T: Scalar>(data: &Dataset<T>, scores: &ScoreMatrix<T>) -> Result<usize> {
    let context = data
        .true_context()
        .ok_or_else(|| Error::Config("combiner 'true' needs a dataset with a known true context".into()))?;
    context_index(context, scores)
}

pub fn context_index<T: Scalar>(context: &Context, scores: &ScoreMatrix<T>) -> Result<usize> {
    scores
        .position_of(context.bitmask())
        .ok_or_else(|| Error::InvalidContext(format!("context {context} was not scored")))
}

fn check_columns<T: Scalar>(scores: &ScoreMatrix<T>, kept: &[usize]) -> Result<()> {
    if kept.is_empty() {
        return Err(Error::InvalidParameter("no contexts kept".into()));
    }
    if let Some(&bad) = kept.iter().find(|&&i| i >= scores.n_contexts()) {
        return Err(Error::DimensionMismatch {
            expected: scores.n_contexts(),
            found: bad + 1,
        });
    }
    Ok(())
}

fn weighted_average<T: Scalar>(scores: &ScoreMatrix<T>, kept: &[(usize, T)]) -> Vec<T> {
    let total = kept.iter().fold(T::zero(), |a, &(_, w)| a + w);
    let s = scores.scores();
    (0..scores.n_samples())
        .map(|j| {
            let acc = kept.iter().fold(T::zero(), |a, &(i, w)| a + w * s[[j, i]]);
            (acc / total).max(T::zero()).min(T::one())
        })
        .collect()
}

/// Importance-weighted average of the kept columns.
pub fn aggregate_wiscon<T: Scalar>(scores: &ScoreMatrix<T>, kept: &[usize], importances: &[T]) -> Result<Vec<T>> {
    check_columns(scores, kept)?;
    if importances.len() != scores.n_contexts() {
        return Err(Error::DimensionMismatch {
            expected: scores.n_contexts(),
            found: importances.len(),
        });
    }
    let pairs: Vec<(usize, T)> = kept.iter().map(|&i| (i, importances[i])).collect();
    if pairs.iter().any(|&(_, w)| !(w > T::zero())) {
        return Err(Error::InvalidParameter("kept contexts need positive importance".into()));
    }
    Ok(weighted_average(scores, &pairs))
}

/// Unweighted mean or entrywise max over every column.
pub fn aggregate_baseline<T: Scalar>(scores: &ScoreMatrix<T>, kind: CombinerKind) -> Result<Vec<T>> {
    if scores.n_contexts() == 0 {
        return Err(Error::InvalidParameter("no contexts".into()));
    }
    let m = T::from_count(scores.n_contexts());
    let rows = scores.scores();
    match kind {
        CombinerKind::Average => Ok(rows
            .rows()
            .into_iter()
            .map(|r| (r.iter().copied().sum::<T>() / m).min(T::one()))
            .collect()),
        CombinerKind::Maximization => Ok(rows
            .rows()
            .into_iter()
            .map(|r| r.iter().copied().fold(T::zero(), T::max))
            .collect()),
        other => Err(Error::InvalidParameter(format!("{other} is not a baseline combiner"))),
    }
}

impl<T: Scalar> EnsemblePlan<T> {
    /// Builds the plan. `true_column` is required for the true-context
    /// combiner and ignored otherwise.
    pub fn new(
        kind: CombinerKind,
        scores: &ScoreMatrix<T>,
        importances: &[T],
        true_column: Option<usize>,
    ) -> Result<Self> {
        let m = scores.n_contexts();
        if importances.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: importances.len(),
            });
        }
        let ids = scores.context_ids();
        let entry = |index: usize, weight: T| KeptContext {
            index,
            bitmask: ids[index],
            weight,
        };
        let kept = match kind {
            CombinerKind::WisCon => {
                let kept = prune(importances);
                if kept.len() == 1 && !(importances[kept[0]] > T::zero()) {
                    vec![entry(kept[0], T::one())]
                } else {
                    kept.into_iter().map(|i| entry(i, importances[i])).collect()
                }
            }
            CombinerKind::Single => vec![entry(select_single(importances)?, T::one())],
            CombinerKind::TrueContext => {
                let i = true_column
                    .ok_or_else(|| Error::Config("combiner 'true' needs a known true context".into()))?;
                check_columns(scores, &[i])?;
                vec![entry(i, T::one())]
            }
            CombinerKind::Average | CombinerKind::Maximization => {
                let w = T::one() / T::from_count(m);
                (0..m).map(|i| entry(i, w)).collect()
            }
        };
        Ok(Self { kind, kept })
    }

    /// Applies the plan to a score matrix over the same contexts, in order.
    pub fn apply(&self, scores: &ScoreMatrix<T>) -> Result<EnsembleResult<T>> {
        for k in &self.kept {
            if scores.context_ids().get(k.index) != Some(&k.bitmask) {
                return Err(Error::InvalidContext(format!(
                    "score matrix has no context {:#x} at column {}",
                    k.bitmask, k.index
                )));
            }
        }
        let final_scores = match self.kind {
            CombinerKind::Average | CombinerKind::Maximization => aggregate_baseline(scores, self.kind)?,
            _ => {
                let pairs: Vec<(usize, T)> = self.kept.iter().map(|k| (k.index, k.weight)).collect();
                weighted_average(scores, &pairs)
            }
        };
        Ok(EnsembleResult {
            combiner_kind: self.kind,
            kept_contexts: self.kept.clone(),
            final_scores,
        })
    }

    pub fn kept_count(&self) -> usize {
        self.kept.len()
    }
}

/// Final scores of held-out rows from the kept contexts' fitted models.
pub fn score_test<T: Scalar>(
    models: &[ContextModel<T>],
    plan: &EnsemblePlan<T>,
    test: &Dataset<T>,
) -> Result<Vec<T>> {
    let lookup = |mask: u64| {
        models
            .iter()
            .find(|m| m.context.bitmask() == mask)
            .ok_or_else(|| Error::InvalidContext(format!("no fitted model for context {mask:#x}")))
    };
    let mut columns = Vec::new();
    let mut ids = Vec::new();
    let used: Vec<&KeptContext<T>> = plan.kept.iter().collect();
    for k in &used {
        columns.push(lookup(k.bitmask)?.score_unified(test)?);
        ids.push(k.bitmask);
    }
    let n = test.n();
    let mut matrix = ndarray::Array2::<T>::zeros((n, columns.len()));
    for (c, col) in columns.iter().enumerate() {
        for (j, &v) in col.iter().enumerate() {
            matrix[[j, c]] = v;
        }
    }
    let compact = ScoreMatrix::new(matrix, ids)?;
    let remapped = EnsemblePlan {
        kind: plan.kind,
        kept: used
            .iter()
            .enumerate()
            .map(|(c, k)| KeptContext {
                index: c,
                bitmask: k.bitmask,
                weight: k.weight,
            })
            .collect(),
    };
    Ok(remapped.apply(&compact)?.final_scores)
}
