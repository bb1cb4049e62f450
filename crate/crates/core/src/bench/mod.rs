//! Cross-validated experiment harness: accuracy tables with paired folds,
//! threshold and committee-size sweeps, and the two-spirals noise grid.

pub mod report;

use rayon::prelude::*;

use crate::data::{generate_two_spirals, stratified_kfold, Dataset, FoldPlan};
use crate::model::{fit, ClassifierSpec, TrainedModel};
use crate::reverse::ConfusionMatrix;
use crate::rng::derive_seed;
use crate::rtml::{rtml_complete, rtml_foundation, rtml_predict, RtmlConfig, RtmlError};
use crate::simplicity::partition_by_threshold;

const STREAM_TUNE: u64 = 3;
const STREAM_CELL: u64 = 4;

/// Hyperparameter grids searched by nested cross-validation on each
/// training split.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneGrid {
    pub thetas: Vec<f64>,
    pub discrim_k: Vec<usize>,
    pub inner_folds: usize,
}

impl Default for TuneGrid {
    fn default() -> Self {
        TuneGrid {
            thetas: (0..=10).map(|i| i as f64 / 10.0).collect(),
            discrim_k: vec![3, 5, 9],
            inner_folds: 10,
        }
    }
}

/// An algorithm evaluated by [`cv_evaluate`].
#[derive(Debug, Clone)]
pub struct AlgorithmUnderTest {
    pub name: String,
    pub kind: AlgKind,
}

#[derive(Debug, Clone)]
pub enum AlgKind {
    /// The base classifier trained on the full training split.
    BaselineAll { spec: ClassifierSpec, normalize: bool },
    /// The base classifier trained on that split's easy samples only.
    BaselineEasy { cfg: RtmlConfig },
    /// The full pipeline, optionally with inner-CV parameter selection.
    Rtml { cfg: RtmlConfig, tune: Option<TuneGrid> },
}

impl AlgorithmUnderTest {
    pub fn baseline_all(spec: ClassifierSpec, normalize: bool) -> Self {
        AlgorithmUnderTest {
            name: format!("{} (all data)", spec.kind.display_name()),
            kind: AlgKind::BaselineAll { spec, normalize },
        }
    }

    pub fn baseline_easy(cfg: RtmlConfig) -> Self {
        AlgorithmUnderTest {
            name: format!("{} (simple data)", cfg.base_spec.kind.display_name()),
            kind: AlgKind::BaselineEasy { cfg },
        }
    }

    pub fn rtml(cfg: RtmlConfig) -> Self {
        AlgorithmUnderTest {
            name: "RTML algorithm".into(),
            kind: AlgKind::Rtml { cfg, tune: None },
        }
    }

    pub fn rtml_tuned(cfg: RtmlConfig, tune: TuneGrid) -> Self {
        AlgorithmUnderTest {
            name: "RTML algorithm".into(),
            kind: AlgKind::Rtml {
                cfg,
                tune: Some(tune),
            },
        }
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }
}

/// Accuracy of one algorithm on one dataset across the outer folds.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub dataset: String,
    pub algorithm: String,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub std_dev: f64,
}

/// Mean CV accuracy as one scalar parameter varies.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub parameter: String,
    pub grid: Vec<f64>,
    pub mean_accuracies: Vec<f64>,
}

/// One cell of the two-spirals noise grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub size: usize,
    pub variance: f64,
    pub theta_grid: Vec<f64>,
    pub rtml_accuracies: Vec<f64>,
    pub baseline_accuracy: f64,
}

impl GridCell {
    pub fn best_rtml_accuracy(&self) -> f64 {
        self.rtml_accuracies.iter().copied().fold(f64::MIN, f64::max)
    }
}

/// Test-set confusion counts accumulated across the outer folds.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportConfusion {
    pub dataset: String,
    pub algorithm: String,
    pub class_names: [String; 2],
    pub matrix: ConfusionMatrix,
}

/// Everything an experiment produced, serializable via [`report`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub seed: u64,
    pub k_folds: usize,
    pub rows: Vec<ReportRow>,
    pub curves: Vec<Curve>,
    pub grid_cells: Vec<GridCell>,
    pub confusions: Vec<ReportConfusion>,
}

impl ExperimentReport {
    pub fn merge(&mut self, other: ExperimentReport) {
        self.rows.extend(other.rows);
        self.curves.extend(other.curves);
        self.grid_cells.extend(other.grid_cells);
        self.confusions.extend(other.confusions);
    }
}

/// Sample standard deviation (n-1 denominator); 0 for fewer than two folds.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

fn accuracy(predictions: &[usize], truth: &[usize]) -> f64 {
    let correct = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    correct as f64 / truth.len() as f64
}

/// Predictions of one algorithm for the held-out rows of one fold.
struct FoldOutcome {
    test_rows: Vec<usize>,
    predictions: Vec<usize>,
}

fn normalized_pair(
    train: &Dataset,
    test: &Dataset,
    normalize: bool,
) -> Result<(Dataset, Dataset), RtmlError> {
    if normalize {
        let norm = crate::data::normalize_fit(train)?;
        Ok((norm.apply(train)?, norm.apply(test)?))
    } else {
        Ok((train.clone(), test.clone()))
    }
}

fn predict_with_model(model: &TrainedModel, test: &Dataset) -> Result<Vec<usize>, RtmlError> {
    Ok(model.predict_batch(test)?)
}

/// Trains the base classifier on the easy subset of `train` (falling back
/// to all of it when the partition degenerates) and predicts `test`.
fn run_baseline_easy(train: &Dataset, test: &Dataset, cfg: &RtmlConfig) -> Result<Vec<usize>, RtmlError> {
    // The committee and scores are theta-independent, so reuse the pipeline
    // foundation and just take the easy side.
    let foundation = rtml_foundation(train, cfg)?;
    let easy_rows: Vec<usize> = (0..foundation.train.n_samples())
        .filter(|&i| foundation.scores.scores()[i] >= cfg.theta)
        .collect();
    let model = if easy_rows.is_empty() {
        foundation.inertial.clone()
    } else {
        let easy = foundation.train.subset(&easy_rows);
        if easy.both_classes_present() {
            fit(&cfg.base_spec, &easy)?
        } else {
            foundation.inertial.clone()
        }
    };
    let test = match &foundation.normalizer {
        Some(norm) => norm.apply(test)?,
        None => test.clone(),
    };
    predict_with_model(&model, &test)
}

/// Nested-CV selection of `(theta, discriminator k)` on the training split.
/// Ties keep the earliest grid entry, so selection is deterministic.
fn tune_rtml(
    train: &Dataset,
    cfg: &RtmlConfig,
    grid: &TuneGrid,
    tune_seed: u64,
) -> Result<RtmlConfig, RtmlError> {
    let inner_plan = stratified_kfold(train.labels(), grid.inner_folds, tune_seed)?;
    let combos: Vec<(f64, usize)> = grid
        .thetas
        .iter()
        .flat_map(|&theta| grid.discrim_k.iter().map(move |&k| (theta, k)))
        .collect();
    let per_fold: Vec<Vec<f64>> = (0..grid.inner_folds)
        .into_par_iter()
        .map(|fold| {
            let inner_train = train.subset(&inner_plan.train_rows(fold));
            let inner_test = train.subset(&inner_plan.test_rows(fold));
            let foundation = rtml_foundation(&inner_train, cfg)?;
            let inner_test = match &foundation.normalizer {
                Some(norm) => norm.apply(&inner_test)?,
                None => inner_test,
            };
            combos
                .iter()
                .map(|&(theta, k)| {
                    let mut candidate = cfg.clone();
                    candidate.theta = theta;
                    candidate.discrim_spec = candidate.discrim_spec.with_k_neighbors(k);
                    candidate.normalize = false; // foundation already normalized
                    let model = rtml_complete(&foundation, &candidate)?;
                    let preds: Vec<usize> = (0..inner_test.n_samples())
                        .map(|r| rtml_predict(&model, inner_test.feature_row(r)).map(|(c, _)| c))
                        .collect::<Result<_, _>>()?;
                    Ok(accuracy(&preds, inner_test.labels()))
                })
                .collect::<Result<Vec<f64>, RtmlError>>()
        })
        .collect::<Result<Vec<_>, RtmlError>>()?;
    let mut best_idx = 0;
    let mut best_mean = f64::MIN;
    for (idx, _) in combos.iter().enumerate() {
        let mean = per_fold.iter().map(|f| f[idx]).sum::<f64>() / per_fold.len() as f64;
        if mean > best_mean {
            best_mean = mean;
            best_idx = idx;
        }
    }
    let (theta, k) = combos[best_idx];
    let mut tuned = cfg.clone();
    tuned.theta = theta;
    tuned.discrim_spec = tuned.discrim_spec.with_k_neighbors(k);
    Ok(tuned)
}

fn run_rtml(
    train: &Dataset,
    test: &Dataset,
    cfg: &RtmlConfig,
    tune: Option<(&TuneGrid, u64)>,
) -> Result<Vec<usize>, RtmlError> {
    let cfg = match tune {
        Some((grid, tune_seed)) => tune_rtml(train, cfg, grid, tune_seed)?,
        None => cfg.clone(),
    };
    let model = crate::rtml::rtml_train(train, &cfg)?;
    (0..test.n_samples())
        .map(|r| rtml_predict(&model, test.feature_row(r)).map(|(c, _)| c))
        .collect()
}

fn run_fold(
    ds: &Dataset,
    plan: &FoldPlan,
    fold: usize,
    alg: &AlgorithmUnderTest,
    seed: u64,
) -> Result<FoldOutcome, RtmlError> {
    let test_rows = plan.test_rows(fold);
    let train = ds.subset(&plan.train_rows(fold));
    let test = ds.subset(&test_rows);
    let predictions = match &alg.kind {
        AlgKind::BaselineAll { spec, normalize } => {
            let (train, test) = normalized_pair(&train, &test, *normalize)?;
            let model = fit(spec, &train)?;
            predict_with_model(&model, &test)?
        }
        AlgKind::BaselineEasy { cfg } => run_baseline_easy(&train, &test, cfg)?,
        AlgKind::Rtml { cfg, tune } => {
            let tune = tune
                .as_ref()
                .map(|grid| (grid, derive_seed(derive_seed(seed, STREAM_TUNE), fold as u64)));
            run_rtml(&train, &test, cfg, tune)?
        }
    };
    Ok(FoldOutcome {
        test_rows,
        predictions,
    })
}

/// Cross-validated predictions of one algorithm, one entry per sample in
/// dataset row order (each sample predicted by the model that did not see
/// it).
pub fn cv_predictions(
    ds: &Dataset,
    alg: &AlgorithmUnderTest,
    k_folds: usize,
    seed: u64,
) -> Result<Vec<usize>, RtmlError> {
    let plan = stratified_kfold(ds.labels(), k_folds, seed)?;
    let outcomes: Vec<FoldOutcome> = (0..k_folds)
        .into_par_iter()
        .map(|fold| run_fold(ds, &plan, fold, alg, seed))
        .collect::<Result<Vec<_>, _>>()?;
    let mut predictions = vec![0usize; ds.n_samples()];
    for outcome in outcomes {
        for (row, pred) in outcome.test_rows.iter().zip(&outcome.predictions) {
            predictions[*row] = *pred;
        }
    }
    Ok(predictions)
}

/// Evaluates each algorithm with stratified k-fold cross-validation. All
/// algorithms see identical train/test splits, per-fold accuracies are kept
/// alongside their mean and sample standard deviation, and the held-out
/// predictions accumulate into one confusion matrix per algorithm.
pub fn cv_evaluate(
    ds: &Dataset,
    ds_name: &str,
    algs: &[AlgorithmUnderTest],
    k_folds: usize,
    seed: u64,
) -> Result<ExperimentReport, RtmlError> {
    let plan = stratified_kfold(ds.labels(), k_folds, seed)?;
    let mut report = ExperimentReport {
        seed,
        k_folds,
        ..Default::default()
    };
    for alg in algs {
        let outcomes: Vec<FoldOutcome> = (0..k_folds)
            .into_par_iter()
            .map(|fold| run_fold(ds, &plan, fold, alg, seed))
            .collect::<Result<Vec<_>, _>>()?;
        let mut fold_accuracies = Vec::with_capacity(k_folds);
        let mut records = Vec::with_capacity(ds.n_samples());
        for outcome in &outcomes {
            let truth: Vec<usize> = outcome.test_rows.iter().map(|&r| ds.label(r)).collect();
            fold_accuracies.push(accuracy(&outcome.predictions, &truth));
            for (row, pred) in outcome.test_rows.iter().zip(&outcome.predictions) {
                records.push((ds.label(*row), *pred));
            }
        }
        let mean = fold_accuracies.iter().sum::<f64>() / k_folds as f64;
        report.rows.push(ReportRow {
            dataset: ds_name.into(),
            algorithm: alg.name.clone(),
            std_dev: sample_std(&fold_accuracies),
            fold_accuracies,
            mean,
        });
        report.confusions.push(ReportConfusion {
            dataset: ds_name.into(),
            algorithm: alg.name.clone(),
            class_names: ds.class_names().clone(),
            matrix: ConfusionMatrix::from_records(&records, k_folds, seed),
        });
    }
    Ok(report)
}

/// Per-fold work shared by the sweep entry points: one foundation per fold,
/// completed and evaluated once per theta.
fn theta_sweep_accuracies(
    ds: &Dataset,
    cfg: &RtmlConfig,
    thetas: &[f64],
) -> Result<Vec<f64>, RtmlError> {
    let plan = stratified_kfold(ds.labels(), cfg.k_folds, cfg.seed)?;
    let per_fold: Vec<Vec<f64>> = (0..cfg.k_folds)
        .into_par_iter()
        .map(|fold| {
            let train = ds.subset(&plan.train_rows(fold));
            let test = ds.subset(&plan.test_rows(fold));
            let foundation = rtml_foundation(&train, cfg)?;
            let test = match &foundation.normalizer {
                Some(norm) => norm.apply(&test)?,
                None => test,
            };
            thetas
                .iter()
                .map(|&theta| {
                    let mut candidate = cfg.clone();
                    candidate.theta = theta;
                    candidate.normalize = false;
                    let model = rtml_complete(&foundation, &candidate)?;
                    let preds: Vec<usize> = (0..test.n_samples())
                        .map(|r| rtml_predict(&model, test.feature_row(r)).map(|(c, _)| c))
                        .collect::<Result<_, _>>()?;
                    Ok(accuracy(&preds, test.labels()))
                })
                .collect::<Result<Vec<f64>, RtmlError>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((0..thetas.len())
        .map(|i| per_fold.iter().map(|f| f[i]).sum::<f64>() / cfg.k_folds as f64)
        .collect())
}

/// Mean CV accuracy as `theta` varies, with identical folds (and identical
/// committees) reused across the grid so the curve isolates theta.
pub fn sweep_theta(ds: &Dataset, cfg: &RtmlConfig, grid: &[f64]) -> Result<Curve, RtmlError> {
    if grid.is_empty() {
        return Err(RtmlError::Config("theta grid is empty".into()));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(RtmlError::Config("theta grid must be sorted".into()));
    }
    let mean_accuracies = theta_sweep_accuracies(ds, cfg, grid)?;
    Ok(Curve {
        parameter: "theta".into(),
        grid: grid.to_vec(),
        mean_accuracies,
    })
}

/// Mean CV accuracy as the committee size varies, folds fixed.
pub fn sweep_models(ds: &Dataset, cfg: &RtmlConfig, grid: &[usize]) -> Result<Curve, RtmlError> {
    if grid.is_empty() {
        return Err(RtmlError::Config("model-count grid is empty".into()));
    }
    let mean_accuracies: Vec<f64> = grid
        .iter()
        .map(|&n_models| {
            let mut candidate = cfg.clone();
            candidate.n_models = n_models;
            let accs = theta_sweep_accuracies(ds, &candidate, &[cfg.theta])?;
            Ok(accs[0])
        })
        .collect::<Result<Vec<f64>, RtmlError>>()?;
    Ok(Curve {
        parameter: "n_models".into(),
        grid: grid.iter().map(|&n| n as f64).collect(),
        mean_accuracies,
    })
}

/// The two-spirals noise grid: one generated dataset per (size, variance)
/// cell, scored with the RTML pipeline at every theta in the grid plus the
/// plain base classifier.
pub fn noise_grid(
    sizes: &[usize],
    variances: &[f64],
    theta_grid: &[f64],
    cfg: &RtmlConfig,
    seed: u64,
) -> Result<Vec<GridCell>, RtmlError> {
    if theta_grid.is_empty() {
        return Err(RtmlError::Config("theta grid is empty".into()));
    }
    let cells: Vec<(usize, f64, u64)> = sizes
        .iter()
        .enumerate()
        .flat_map(|(i, &size)| {
            variances.iter().enumerate().map(move |(j, &variance)| {
                let cell_seed = derive_seed(
                    derive_seed(seed, STREAM_CELL),
                    (i * variances.len() + j) as u64,
                );
                (size, variance, cell_seed)
            })
        })
        .collect();
    cells
        .into_iter()
        .map(|(size, variance, cell_seed)| {
            let ds = generate_two_spirals(size, variance, cell_seed)?;
            let mut cell_cfg = cfg.clone();
            cell_cfg.seed = cell_seed;
            let rtml_accuracies = theta_sweep_accuracies(&ds, &cell_cfg, theta_grid)?;
            let baseline = AlgorithmUnderTest::baseline_all(cfg.base_spec.clone(), cfg.normalize);
            let preds = cv_predictions(&ds, &baseline, cfg.k_folds, cell_seed)?;
            let baseline_accuracy = accuracy(&preds, ds.labels());
            Ok(GridCell {
                size,
                variance,
                theta_grid: theta_grid.to_vec(),
                rtml_accuracies,
                baseline_accuracy,
            })
        })
        .collect()
}

/// Sanity check used by tests: partitioning at theta must reproduce the
/// easy-subset sizes implied by the scores.
#[doc(hidden)]
pub fn easy_count(ds: &Dataset, cfg: &RtmlConfig) -> Result<usize, RtmlError> {
    let foundation = rtml_foundation(ds, cfg)?;
    let partition = partition_by_threshold(&foundation.scores, cfg.theta)?;
    Ok(partition.easy_ids.len())
}
