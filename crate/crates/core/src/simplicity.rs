//! Per-sample simplicity from a committee of cross-validation models, and
//! the easy/hard partition it induces.
//!
//! A sample's simplicity is the fraction of committee models that classify
//! it correctly, so every score lies on the grid `{0, 1/N, ..., 1}`. The
//! committee comes from repeated stratified k-fold rounds: round `r` uses a
//! fold seed derived from `(seed, r)` and contributes one model per fold,
//! each trained with that fold removed, truncated to the requested size.

use rayon::prelude::*;

use crate::data::{stratified_kfold, DataError, Dataset, FoldPlan};
use crate::model::{fit, ClassifierSpec, PredictError, TrainedModel, TrainError};
use crate::rng::derive_seed;

#[derive(Debug, thiserror::Error)]
pub enum CommitteeError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// One committee member plus its provenance inside the round structure.
#[derive(Debug, Clone)]
pub struct CommitteeModel {
    pub model: TrainedModel,
    pub round: usize,
    pub fold: usize,
    /// Row positions (into the committee's training dataset) this model did
    /// not see during training.
    pub held_out: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Committee {
    models: Vec<CommitteeModel>,
    k_folds: usize,
    seed: u64,
}

impl Committee {
    pub fn models(&self) -> &[CommitteeModel] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn k_folds(&self) -> usize {
        self.k_folds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Trains `n_models` committee members on `train`.
///
/// Models are ordered round-major then fold-ascending, and a committee of
/// size `m` is a prefix of any larger committee built from the same inputs.
pub fn build_committee(
    train: &Dataset,
    spec: &ClassifierSpec,
    k_folds: usize,
    n_models: usize,
    seed: u64,
) -> Result<Committee, CommitteeError> {
    if n_models == 0 {
        return Err(CommitteeError::Data(DataError::InvalidArgument(
            "committee size must be at least 1".into(),
        )));
    }
    let rounds = n_models.div_ceil(k_folds);
    let mut plans: Vec<FoldPlan> = Vec::with_capacity(rounds);
    for round in 0..rounds {
        plans.push(stratified_kfold(
            train.labels(),
            k_folds,
            derive_seed(seed, round as u64),
        )?);
    }
    let jobs: Vec<(usize, usize)> = (0..n_models)
        .map(|m| (m / k_folds, m % k_folds))
        .collect();
    let models: Vec<CommitteeModel> = jobs
        .into_par_iter()
        .map(|(round, fold)| {
            let plan = &plans[round];
            let subset = train.subset(&plan.train_rows(fold));
            let model = fit(spec, &subset)?;
            Ok(CommitteeModel {
                model,
                round,
                fold,
                held_out: plan.test_rows(fold),
            })
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    Ok(Committee {
        models,
        k_folds,
        seed,
    })
}

/// Simplicity scores aligned with a dataset's ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplicityScores {
    scores: Vec<f64>,
    ids: Vec<u64>,
    n_models: usize,
    committee_seed: u64,
}

impl SimplicityScores {
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn n_models(&self) -> usize {
        self.n_models
    }

    pub fn committee_seed(&self) -> u64 {
        self.committee_seed
    }

    pub fn from_parts(scores: Vec<f64>, ids: Vec<u64>, n_models: usize, committee_seed: u64) -> Self {
        SimplicityScores {
            scores,
            ids,
            n_models,
            committee_seed,
        }
    }

    /// Ids sorted by descending simplicity, ties by ascending id.
    pub fn ranking(&self) -> Vec<u64> {
        let mut order: Vec<usize> = (0..self.ids.len()).collect();
        order.sort_by(|&a, &b| {
            self.scores[b]
                .partial_cmp(&self.scores[a])
                .expect("scores are finite")
                .then(self.ids[a].cmp(&self.ids[b]))
        });
        order.into_iter().map(|i| self.ids[i]).collect()
    }

    /// CSV export: one `id,score` row per sample.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,score\n");
        for (id, score) in self.ids.iter().zip(&self.scores) {
            out.push_str(&format!("{id},{score}\n"));
        }
        out
    }
}

/// Scores every row of `ds` against a slice of committee members: the
/// fraction of models that classify it correctly (every model scores every
/// sample, its own training folds included).
pub fn simplicity_scores_for(
    models: &[CommitteeModel],
    ds: &Dataset,
    committee_seed: u64,
) -> Result<SimplicityScores, PredictError> {
    assert!(!models.is_empty(), "committee must be non-empty");
    let predictions: Vec<Vec<usize>> = models
        .par_iter()
        .map(|m| m.model.predict_batch(ds))
        .collect::<Result<Vec<_>, _>>()?;
    let n = ds.n_samples();
    let mut correct = vec![0usize; n];
    for preds in &predictions {
        for (i, &p) in preds.iter().enumerate() {
            if p == ds.label(i) {
                correct[i] += 1;
            }
        }
    }
    let n_models = models.len();
    let scores = correct.iter().map(|&c| c as f64 / n_models as f64).collect();
    Ok(SimplicityScores {
        scores,
        ids: ds.ids().to_vec(),
        n_models,
        committee_seed,
    })
}

/// Scores the committee's own training set per Eq.-style frequency.
pub fn simplicity_scores(committee: &Committee, ds: &Dataset) -> Result<SimplicityScores, PredictError> {
    simplicity_scores_for(committee.models(), ds, committee.seed())
}

/// Study-mode variant: each model scores only its held-out fold, so a
/// sample's denominator is the number of models that held it out. Requires
/// at least one full round (`n_models >= k_folds`).
pub fn simplicity_scores_out_of_fold(
    committee: &Committee,
    ds: &Dataset,
) -> Result<SimplicityScores, DataError> {
    if committee.len() < committee.k_folds() {
        return Err(DataError::InvalidArgument(format!(
            "out-of-fold scoring needs at least one full round ({} models), got {}",
            committee.k_folds(),
            committee.len()
        )));
    }
    let n = ds.n_samples();
    let mut correct = vec![0usize; n];
    let mut seen = vec![0usize; n];
    for member in committee.models() {
        for &row in &member.held_out {
            let pred = member
                .model
                .predict(ds.feature_row(row))
                .map_err(|e| DataError::InvalidArgument(e.to_string()))?;
            seen[row] += 1;
            if pred == ds.label(row) {
                correct[row] += 1;
            }
        }
    }
    let scores = correct
        .iter()
        .zip(&seen)
        .map(|(&c, &s)| c as f64 / s as f64)
        .collect();
    Ok(SimplicityScores {
        scores,
        ids: ds.ids().to_vec(),
        n_models: committee.len(),
        committee_seed: committee.seed(),
    })
}

/// Disjoint easy/hard split of sample ids at threshold `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub easy_ids: Vec<u64>,
    pub hard_ids: Vec<u64>,
    pub theta: f64,
}

impl Partition {
    pub fn is_partition_of(&self, ids: &[u64]) -> bool {
        let mut all: Vec<u64> = self.easy_ids.iter().chain(&self.hard_ids).copied().collect();
        all.sort_unstable();
        let mut expected = ids.to_vec();
        expected.sort_unstable();
        all == expected
    }
}

/// Splits samples into easy (`score >= theta`) and hard (`score < theta`),
/// in dataset order.
pub fn partition_by_threshold(scores: &SimplicityScores, theta: f64) -> Result<Partition, DataError> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(DataError::InvalidArgument(format!(
            "theta must lie in [0, 1], got {theta}"
        )));
    }
    let mut easy_ids = Vec::new();
    let mut hard_ids = Vec::new();
    for (id, score) in scores.ids().iter().zip(scores.scores()) {
        if *score >= theta {
            easy_ids.push(*id);
        } else {
            hard_ids.push(*id);
        }
    }
    let partition = Partition {
        easy_ids,
        hard_ids,
        theta,
    };
    debug_assert!(partition.is_partition_of(scores.ids()));
    Ok(partition)
}
