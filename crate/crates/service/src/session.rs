use std::sync::Arc;

use wiscon_core::active::{effective_weights, ActiveLearner};
use wiscon_core::context::enumerate_contexts;
use wiscon_core::detector::{score_contexts, ModelCache};
use wiscon_core::ensemble::{context_index, EnsemblePlan};
use wiscon_core::eval::{auc_pr, auc_roc, prepare_run, project_features};
use wiscon_core::{Context, Dataset, Error, ScoreMatrix};

use crate::api::{
    AppliedLabel, ContextSummary, CreatedPayload, ImportanceDelta, LabelResponse, QueryPayload, ResultPayload,
    SessionStatus, StatePayload, TestEvaluation,
};
use crate::config::SessionConfig;

/// Contexts listed in each query payload.
pub const TOP_CONTEXTS: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("session is {0:?}, not awaiting a label")]
    NotAwaiting(SessionStatus),
    #[error("sample {found} is not the pending query {expected}")]
    IndexMismatch { expected: usize, found: usize },
    #[error("label must be 0 or 1, got {0}")]
    InvalidLabel(String),
    #[error("session is not complete ({used} of {budget} labels)")]
    NotComplete { used: usize, budget: usize },
    #[error("{0}")]
    Config(Error),
    #[error("{0}")]
    Internal(Error),
}

pub fn new_session_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

/// Parses a JSON label, accepting only the integers 0 and 1.
pub fn parse_label(value: &serde_json::Value) -> Result<u8, SessionError> {
    match value.as_u64() {
        Some(v @ (0 | 1)) => Ok(v as u8),
        _ => Err(SessionError::InvalidLabel(value.to_string())),
    }
}

/// A live active-learning session over one prepared dataset.
pub struct Session {
    id: String,
    config: SessionConfig,
    source: Dataset,
    train_rows: Vec<usize>,
    train: Dataset,
    test: Option<Dataset>,
    test_scores: Option<ScoreMatrix>,
    true_column: Option<usize>,
    learner: ActiveLearner<f64>,
}

impl Session {
    /// Loads the data, scores every context and selects the first query.
    pub fn build(id: String, config: SessionConfig, cache: Option<&ModelCache>) -> Result<Self, SessionError> {
        config.validate().map_err(SessionError::Config)?;
        let source = config.dataset.load().map_err(SessionError::Config)?;
        let experiment = config.experiment();
        let (train_rows, train, test, train_scores, test_scores, true_column) = if source.labels().is_some() {
            let p = prepare_run(&source, config.seed, &experiment, cache).map_err(SessionError::Config)?;
            (p.split.train, p.train, Some(p.test), p.train_scores, Some(p.test_scores), p.true_column)
        } else {
            let (train, _, _) = project_features(source.clone(), None, config.pca_k).map_err(SessionError::Config)?;
            let contexts = enumerate_contexts(train.d()).map_err(SessionError::Config)?;
            let detector = experiment.detector.with_seed(config.seed);
            let scores = score_contexts(&train, None, &contexts, &detector, cache).map_err(SessionError::Internal)?;
            let true_column = train.true_context().map(|c| context_index(c, &scores.train)).transpose().map_err(SessionError::Internal)?;
            ((0..source.n()).collect(), train, None, Arc::new(scores.train), None, true_column)
        };
        if config.combiner == wiscon_core::ensemble::CombinerKind::TrueContext && true_column.is_none() {
            return Err(SessionError::Config(Error::Config(
                "combiner 'true' needs a dataset with a known true context".into(),
            )));
        }
        let strategy = experiment.strategy(config.strategy, config.seed);
        let mut learner = ActiveLearner::new(train_scores, strategy, config.budget).map_err(SessionError::Config)?;
        learner.next_query().map_err(SessionError::Internal)?;
        Ok(Self {
            id,
            config,
            source,
            train_rows,
            train,
            test,
            test_scores,
            true_column,
            learner,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn learner(&self) -> &ActiveLearner<f64> {
        &self.learner
    }

    pub fn status(&self) -> SessionStatus {
        if self.learner.is_complete() {
            SessionStatus::Complete
        } else if self.learner.pending().is_some() {
            SessionStatus::AwaitingLabel
        } else {
            SessionStatus::Running
        }
    }

    fn context_summary(&self, index: usize) -> ContextSummary {
        let scores = self.learner.scores();
        let mask = scores.context_ids()[index];
        let names = self.train.feature_names();
        let context = Context::from_bitmask(mask, self.train.d()).expect("scored contexts are valid");
        let state = self.learner.state();
        ContextSummary {
            index,
            bitmask: mask,
            contextual: context.contextual().iter().map(|&f| names[f].clone()).collect(),
            behavioral: context.behavioral().iter().map(|&f| names[f].clone()).collect(),
            importance: state.importances()[index],
            epsilon: state.epsilons()[index],
        }
    }

    fn top_contexts(&self) -> Vec<ContextSummary> {
        let imp = self.learner.state().importances();
        let mut order: Vec<usize> = (0..imp.len()).collect();
        order.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]).then(a.cmp(&b)));
        order.into_iter().take(TOP_CONTEXTS).map(|i| self.context_summary(i)).collect()
    }

    pub fn created(&self) -> Result<CreatedPayload, SessionError> {
        Ok(CreatedPayload {
            session_id: self.id.clone(),
            status: self.status(),
            budget: self.learner.budget(),
            n_contexts: self.learner.scores().n_contexts(),
            n_train: self.train.n(),
            n_test: self.test.as_ref().map(Dataset::n),
            query: self.query()?,
        })
    }

    pub fn query(&self) -> Result<QueryPayload, SessionError> {
        let pending = match (self.status(), self.learner.pending()) {
            (SessionStatus::AwaitingLabel, Some(p)) => p.clone(),
            (status, _) => return Err(SessionError::NotAwaiting(status)),
        };
        let row_index = self.train_rows[pending.index];
        Ok(QueryPayload {
            session_id: self.id.clone(),
            sample_index: pending.index,
            row_index,
            feature_names: self.source.feature_names().to_vec(),
            features: self.source.row(row_index).to_vec(),
            margin: pending.margin,
            vote_fraction: pending.vote_fraction,
            predictions: self.learner.predictions().row(pending.index).to_vec(),
            weights: effective_weights(self.learner.state().importances()),
            top_contexts: self.top_contexts(),
            labels_used: self.learner.state().n_queried(),
            budget: self.learner.budget(),
        })
    }

    /// Checks a label submission without changing anything.
    pub fn check_label(&self, sample_index: usize, label: &serde_json::Value) -> Result<u8, SessionError> {
        let label = parse_label(label)?;
        match (self.status(), self.learner.pending()) {
            (SessionStatus::AwaitingLabel, Some(p)) if p.index == sample_index => Ok(label),
            (SessionStatus::AwaitingLabel, Some(p)) => Err(SessionError::IndexMismatch {
                expected: p.index,
                found: sample_index,
            }),
            (status, _) => Err(SessionError::NotAwaiting(status)),
        }
    }

    /// Applies a label that passed [`Session::check_label`].
    pub fn apply_label(&mut self, sample_index: usize, label: u8) -> Result<LabelResponse, SessionError> {
        let ids = self.learner.scores().context_ids().to_vec();
        let record = self.learner.submit(sample_index, label).map_err(SessionError::Internal)?.clone();
        if !self.learner.is_complete() {
            self.learner.next_query().map_err(SessionError::Internal)?;
        }
        let next_query = match self.status() {
            SessionStatus::AwaitingLabel => Some(self.query()?),
            _ => None,
        };
        Ok(LabelResponse {
            session_id: self.id.clone(),
            status: self.status(),
            applied: AppliedLabel {
                sample_index,
                label,
                weight: record.weight,
                margin: record.margin,
            },
            deltas: record
                .deltas
                .iter()
                .map(|d| ImportanceDelta {
                    context: d.context,
                    bitmask: ids[d.context],
                    epsilon_before: d.epsilon_before,
                    epsilon_after: d.epsilon_after,
                    importance_before: d.importance_before,
                    importance_after: d.importance_after,
                })
                .collect(),
            labels_used: self.learner.state().n_queried(),
            budget: self.learner.budget(),
            next_query,
        })
    }

    pub fn result(&self) -> Result<ResultPayload, SessionError> {
        if !self.learner.is_complete() {
            return Err(SessionError::NotComplete {
                used: self.learner.state().n_queried(),
                budget: self.learner.budget(),
            });
        }
        let state = self.learner.state();
        let plan = EnsemblePlan::new(self.config.combiner, self.learner.scores(), state.importances(), self.true_column)
            .map_err(SessionError::Internal)?;
        let ensemble = plan.apply(self.learner.scores()).map_err(SessionError::Internal)?;
        let test = match (&self.test, &self.test_scores) {
            (Some(test), Some(scores)) => {
                let final_scores = plan.apply(scores).map_err(SessionError::Internal)?.final_scores;
                let (pr, roc) = match test.labels() {
                    Some(l) => (auc_pr(&final_scores, l).ok(), auc_roc(&final_scores, l).ok()),
                    None => (None, None),
                };
                Some(TestEvaluation {
                    final_scores,
                    auc_pr: pr,
                    auc_roc: roc,
                })
            }
            _ => None,
        };
        Ok(ResultPayload {
            session_id: self.id.clone(),
            ensemble,
            test,
            importances: state.importances().to_vec(),
            epsilons: state.epsilons().to_vec(),
            audit: self.learner.audit().to_vec(),
        })
    }

    pub fn state(&self) -> StatePayload {
        let state = self.learner.state();
        StatePayload {
            session_id: self.id.clone(),
            status: self.status(),
            config: self.config.clone(),
            budget: self.learner.budget(),
            labels_used: state.n_queried(),
            context_ids: self.learner.scores().context_ids().to_vec(),
            epsilons: state.epsilons().to_vec(),
            importances: state.importances().to_vec(),
            pool: state.pool().entries().to_vec(),
            pending: self.learner.pending().cloned(),
        }
    }

    /// Audit trail as line-delimited JSON.
    pub fn audit_jsonl(&self) -> Result<String, SessionError> {
        let mut out = String::new();
        for r in self.learner.audit() {
            out.push_str(&serde_json::to_string(r).map_err(|e| SessionError::Internal(e.into()))?);
            out.push('\n');
        }
        Ok(out)
    }
}
