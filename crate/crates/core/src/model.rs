//! Classifier and discriminator contracts: softmax regression, k-nearest
//! neighbours, a primal linear SVM, and the composite SVM-KNN rule.
//!
//! Training is deterministic in `(spec, data)`: softmax and the linear SVM
//! start from zero weights and run fixed-schedule full-batch (sub)gradient
//! descent, kNN stores its training data verbatim.

use ndarray::{Array1, Array2, ArrayView1};
use thiserror::Error;

use crate::data::Dataset;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set contains a single class")]
    SingleClass,
    #[error("training diverged (non-finite loss)")]
    Diverged,
    #[error("invalid hyperparameter: {0}")]
    InvalidSpec(String),
    #[error("k_neighbors {k} exceeds training size {n}")]
    KnnTooLarge { k: usize, n: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum PredictError {
    #[error("dimension mismatch: model expects {expected} features, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}

/// Classifier family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    Softmax,
    Knn,
    Linsvm,
    Svmknn,
}

impl ClassifierKind {
    pub fn name(&self) -> &'static str {
        match self {
            ClassifierKind::Softmax => "softmax",
            ClassifierKind::Knn => "knn",
            ClassifierKind::Linsvm => "linsvm",
            ClassifierKind::Svmknn => "svmknn",
        }
    }

    /// Upper-case display form used in report column headers.
    pub fn display_name(&self) -> &'static str {
        match self {
            ClassifierKind::Softmax => "SOFTMAX",
            ClassifierKind::Knn => "KNN",
            ClassifierKind::Linsvm => "LINSVM",
            ClassifierKind::Svmknn => "SVM-KNN",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "softmax" => Some(ClassifierKind::Softmax),
            "knn" => Some(ClassifierKind::Knn),
            "linsvm" => Some(ClassifierKind::Linsvm),
            "svmknn" => Some(ClassifierKind::Svmknn),
            _ => None,
        }
    }
}

/// Declarative description of a learner. Hyperparameters irrelevant to
/// `kind` are carried but ignored; relevant ones are checked by
/// [`ClassifierSpec::validate`] before any training happens.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
    pub k_neighbors: usize,
    pub svm_c: f64,
    pub seed: u64,
}

impl ClassifierSpec {
    fn base(kind: ClassifierKind) -> Self {
        ClassifierSpec {
            kind,
            learning_rate: 0.1,
            epochs: 500,
            l2_penalty: 1e-4,
            k_neighbors: 9,
            svm_c: 1.0,
            seed: 0,
        }
    }

    pub fn softmax() -> Self {
        Self::base(ClassifierKind::Softmax)
    }

    pub fn knn(k_neighbors: usize) -> Self {
        ClassifierSpec {
            k_neighbors,
            ..Self::base(ClassifierKind::Knn)
        }
    }

    pub fn linsvm() -> Self {
        Self::base(ClassifierKind::Linsvm)
    }

    /// Local SVMs see at most `k_neighbors` points, so the default C is
    /// large: with the Pegasos coupling `lambda = 1/(C n)` a small C caps
    /// the weight norm below what tight neighborhood margins need.
    pub fn svmknn(k_neighbors: usize) -> Self {
        ClassifierSpec {
            k_neighbors,
            svm_c: 100.0,
            ..Self::base(ClassifierKind::Svmknn)
        }
    }

    pub fn with_learning_rate(mut self, learning_rate: f64) -> Self {
        self.learning_rate = learning_rate;
        self
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn with_l2_penalty(mut self, l2_penalty: f64) -> Self {
        self.l2_penalty = l2_penalty;
        self
    }

    pub fn with_k_neighbors(mut self, k_neighbors: usize) -> Self {
        self.k_neighbors = k_neighbors;
        self
    }

    pub fn with_svm_c(mut self, svm_c: f64) -> Self {
        self.svm_c = svm_c;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::InvalidSpec(msg));
        match self.kind {
            ClassifierKind::Softmax => {
                if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
                    return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
                }
                if self.epochs == 0 {
                    return bad("epochs must be at least 1".into());
                }
                if !(self.l2_penalty.is_finite() && self.l2_penalty >= 0.0) {
                    return bad(format!("l2_penalty must be non-negative, got {}", self.l2_penalty));
                }
            }
            ClassifierKind::Knn => {
                if self.k_neighbors == 0 || self.k_neighbors % 2 == 0 {
                    return bad(format!("k_neighbors must be odd and positive, got {}", self.k_neighbors));
                }
            }
            ClassifierKind::Linsvm => {
                if !(self.svm_c.is_finite() && self.svm_c > 0.0) {
                    return bad(format!("svm_c must be positive, got {}", self.svm_c));
                }
                if self.epochs == 0 {
                    return bad("epochs must be at least 1".into());
                }
            }
            ClassifierKind::Svmknn => {
                if self.k_neighbors == 0 || self.k_neighbors % 2 == 0 {
                    return bad(format!("k_neighbors must be odd and positive, got {}", self.k_neighbors));
                }
                if !(self.svm_c.is_finite() && self.svm_c > 0.0) {
                    return bad(format!("svm_c must be positive, got {}", self.svm_c));
                }
                if self.epochs == 0 {
                    return bad("epochs must be at least 1".into());
                }
            }
        }
        Ok(())
    }
}

/// Two-class softmax regression with the bias folded in as an extra weight
/// column; `weights` is 2 x (d+1).
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxModel {
    pub(crate) weights: Array2<f64>,
    pub(crate) training_loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub(crate) train: Dataset,
    pub(crate) k_neighbors: usize,
}

/// Linear SVM; `weights` has d+1 entries with the bias last.
#[derive(Debug, Clone, PartialEq)]
pub struct LinsvmModel {
    pub(crate) weights: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmknnModel {
    pub(crate) train: Dataset,
    pub(crate) k_neighbors: usize,
    pub(crate) svm_c: f64,
    pub(crate) epochs: usize,
}

const PROB_CLAMP: f64 = 1e-15;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

impl SoftmaxModel {
    pub fn from_weights(weights: Array2<f64>) -> Self {
        assert_eq!(weights.nrows(), 2, "softmax weights must have two rows");
        SoftmaxModel {
            weights,
            training_loss_trace: Vec::new(),
        }
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn training_loss_trace(&self) -> &[f64] {
        &self.training_loss_trace
    }

    pub fn n_features(&self) -> usize {
        self.weights.ncols() - 1
    }

    fn scores(&self, x: ArrayView1<'_, f64>) -> (f64, f64) {
        let d = self.n_features();
        let mut s0 = self.weights[(0, d)];
        let mut s1 = self.weights[(1, d)];
        for j in 0..d {
            s0 += self.weights[(0, j)] * x[j];
            s1 += self.weights[(1, j)] * x[j];
        }
        (s0, s1)
    }

    /// Class probabilities `(p0, p1)`; each lies in (0, 1) and they sum to
    /// one exactly.
    pub fn predict_proba(&self, x: ArrayView1<'_, f64>) -> Result<(f64, f64), PredictError> {
        if x.len() != self.n_features() {
            return Err(PredictError::DimensionMismatch {
                expected: self.n_features(),
                actual: x.len(),
            });
        }
        let (s0, s1) = self.scores(x);
        let m = s0.max(s1);
        let e0 = (s0 - m).exp();
        let e1 = (s1 - m).exp();
        let p0 = clamp_prob(e0 / (e0 + e1));
        Ok((p0, 1.0 - p0))
    }
}

impl KnnModel {
    pub fn train_data(&self) -> &Dataset {
        &self.train
    }

    pub fn k_neighbors(&self) -> usize {
        self.k_neighbors
    }
}

impl LinsvmModel {
    pub fn from_weights(weights: Array1<f64>) -> Self {
        LinsvmModel { weights }
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn n_features(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn decision_value(&self, x: ArrayView1<'_, f64>) -> Result<f64, PredictError> {
        let d = self.n_features();
        if x.len() != d {
            return Err(PredictError::DimensionMismatch {
                expected: d,
                actual: x.len(),
            });
        }
        let mut v = self.weights[d];
        for j in 0..d {
            v += self.weights[j] * x[j];
        }
        Ok(v)
    }
}

impl SvmknnModel {
    pub fn train_data(&self) -> &Dataset {
        &self.train
    }

    pub fn k_neighbors(&self) -> usize {
        self.k_neighbors
    }

    pub fn svm_c(&self) -> f64 {
        self.svm_c
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }
}

/// A fitted classifier of any supported kind.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Softmax(SoftmaxModel),
    Knn(KnnModel),
    Linsvm(LinsvmModel),
    Svmknn(SvmknnModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            TrainedModel::Softmax(_) => ClassifierKind::Softmax,
            TrainedModel::Knn(_) => ClassifierKind::Knn,
            TrainedModel::Linsvm(_) => ClassifierKind::Linsvm,
            TrainedModel::Svmknn(_) => ClassifierKind::Svmknn,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            TrainedModel::Softmax(m) => m.n_features(),
            TrainedModel::Knn(m) => m.train.n_features(),
            TrainedModel::Linsvm(m) => m.n_features(),
            TrainedModel::Svmknn(m) => m.train.n_features(),
        }
    }

    /// Argmax class; ties resolve to class 0.
    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<usize, PredictError> {
        match self {
            TrainedModel::Softmax(m) => {
                let (p0, p1) = m.predict_proba(x)?;
                Ok(usize::from(p1 > p0))
            }
            TrainedModel::Knn(m) => {
                let votes = knn_votes(&m.train, m.k_neighbors, x)?;
                Ok(usize::from(votes[1] > votes[0]))
            }
            TrainedModel::Linsvm(m) => Ok(usize::from(m.decision_value(x)? > 0.0)),
            TrainedModel::Svmknn(m) => svmknn_predict(m, x),
        }
    }

    /// Class probabilities `(p0, p1)` summing to one: softmax probabilities,
    /// kNN vote fractions, or a logistic squash of the SVM decision value.
    pub fn predict_proba(&self, x: ArrayView1<'_, f64>) -> Result<(f64, f64), PredictError> {
        match self {
            TrainedModel::Softmax(m) => m.predict_proba(x),
            TrainedModel::Knn(m) => {
                let votes = knn_votes(&m.train, m.k_neighbors, x)?;
                let p0 = votes[0] as f64 / m.k_neighbors as f64;
                Ok((p0, 1.0 - p0))
            }
            TrainedModel::Linsvm(m) => {
                let p1 = clamp_prob(sigmoid(m.decision_value(x)?));
                Ok((1.0 - p1, p1))
            }
            TrainedModel::Svmknn(m) => {
                let neighbors = nearest_neighbors(&m.train, m.k_neighbors, x)?;
                match unanimous_label(&m.train, &neighbors) {
                    Some(1) => Ok((0.0, 1.0)),
                    Some(_) => Ok((1.0, 0.0)),
                    None => {
                        let local = local_svm(m, &neighbors)?;
                        let p1 = clamp_prob(sigmoid(local.decision_value(x)?));
                        Ok((1.0 - p1, p1))
                    }
                }
            }
        }
    }

    /// Predicts every row of `ds`.
    pub fn predict_batch(&self, ds: &Dataset) -> Result<Vec<usize>, PredictError> {
        (0..ds.n_samples()).map(|r| self.predict(ds.feature_row(r))).collect()
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Trains a classifier; deterministic in `(spec, train)`.
pub fn fit(spec: &ClassifierSpec, train: &Dataset) -> Result<TrainedModel, TrainError> {
    spec.validate()?;
    if train.n_samples() == 0 {
        return Err(TrainError::EmptyTrainingSet);
    }
    match spec.kind {
        ClassifierKind::Softmax => fit_softmax(spec, train).map(TrainedModel::Softmax),
        ClassifierKind::Knn => {
            if spec.k_neighbors > train.n_samples() {
                return Err(TrainError::KnnTooLarge {
                    k: spec.k_neighbors,
                    n: train.n_samples(),
                });
            }
            Ok(TrainedModel::Knn(KnnModel {
                train: train.clone(),
                k_neighbors: spec.k_neighbors,
            }))
        }
        ClassifierKind::Linsvm => fit_linsvm_raw(train, spec.svm_c, spec.epochs).map(TrainedModel::Linsvm),
        ClassifierKind::Svmknn => {
            if spec.k_neighbors > train.n_samples() {
                return Err(TrainError::KnnTooLarge {
                    k: spec.k_neighbors,
                    n: train.n_samples(),
                });
            }
            Ok(TrainedModel::Svmknn(SvmknnModel {
                train: train.clone(),
                k_neighbors: spec.k_neighbors,
                svm_c: spec.svm_c,
                epochs: spec.epochs,
            }))
        }
    }
}

/// Mean cross-entropy of the 2 x (d+1) weight matrix on `train` plus an L2
/// penalty `l2/2 * sum(w^2)` over the non-bias columns. Returns
/// `(cross_entropy, total_loss)`.
pub fn softmax_loss(weights: &Array2<f64>, train: &Dataset, l2_penalty: f64) -> (f64, f64) {
    let n = train.n_samples();
    let d = train.n_features();
    let mut ce = 0.0;
    for r in 0..n {
        let x = train.feature_row(r);
        let mut s0 = weights[(0, d)];
        let mut s1 = weights[(1, d)];
        for j in 0..d {
            s0 += weights[(0, j)] * x[j];
            s1 += weights[(1, j)] * x[j];
        }
        let m = s0.max(s1);
        let lse = m + ((s0 - m).exp() + (s1 - m).exp()).ln();
        let sy = if train.label(r) == 1 { s1 } else { s0 };
        ce += lse - sy;
    }
    ce /= n as f64;
    let mut penalty = 0.0;
    for c in 0..2 {
        for j in 0..d {
            penalty += weights[(c, j)] * weights[(c, j)];
        }
    }
    (ce, ce + 0.5 * l2_penalty * penalty)
}

/// Analytic gradient of the loss in [`softmax_loss`] (bias column excluded
/// from the penalty).
pub fn softmax_gradient(weights: &Array2<f64>, train: &Dataset, l2_penalty: f64) -> Array2<f64> {
    let n = train.n_samples();
    let d = train.n_features();
    let mut grad = Array2::zeros((2, d + 1));
    for r in 0..n {
        let x = train.feature_row(r);
        let mut s0 = weights[(0, d)];
        let mut s1 = weights[(1, d)];
        for j in 0..d {
            s0 += weights[(0, j)] * x[j];
            s1 += weights[(1, j)] * x[j];
        }
        let m = s0.max(s1);
        let e0 = (s0 - m).exp();
        let e1 = (s1 - m).exp();
        let p0 = e0 / (e0 + e1);
        let p1 = 1.0 - p0;
        let y = train.label(r);
        let r0 = p0 - if y == 0 { 1.0 } else { 0.0 };
        let r1 = p1 - if y == 1 { 1.0 } else { 0.0 };
        for j in 0..d {
            grad[(0, j)] += r0 * x[j];
            grad[(1, j)] += r1 * x[j];
        }
        grad[(0, d)] += r0;
        grad[(1, d)] += r1;
    }
    grad.mapv_inplace(|g| g / n as f64);
    for c in 0..2 {
        for j in 0..d {
            grad[(c, j)] += l2_penalty * weights[(c, j)];
        }
    }
    grad
}

fn fit_softmax(spec: &ClassifierSpec, train: &Dataset) -> Result<SoftmaxModel, TrainError> {
    if !train.both_classes_present() {
        return Err(TrainError::SingleClass);
    }
    let d = train.n_features();
    let mut weights = Array2::zeros((2, d + 1));
    let mut trace = Vec::with_capacity(spec.epochs);
    for _ in 0..spec.epochs {
        let (ce, total) = softmax_loss(&weights, train, spec.l2_penalty);
        if !total.is_finite() {
            return Err(TrainError::Diverged);
        }
        trace.push(ce);
        let grad = softmax_gradient(&weights, train, spec.l2_penalty);
        weights.scaled_add(-spec.learning_rate, &grad);
    }
    Ok(SoftmaxModel {
        weights,
        training_loss_trace: trace,
    })
}

/// Hinge objective `lambda/2 * |w|^2 + mean hinge` over labels in {-1, +1},
/// with `lambda = 1 / (svm_c * n)` and the bias inside the penalty.
pub fn hinge_loss(weights: &Array1<f64>, train: &Dataset, lambda: f64) -> f64 {
    let n = train.n_samples();
    let d = train.n_features();
    let mut total = 0.0;
    for r in 0..n {
        let x = train.feature_row(r);
        let mut v = weights[d];
        for j in 0..d {
            v += weights[j] * x[j];
        }
        let y = if train.label(r) == 1 { 1.0 } else { -1.0 };
        total += (1.0 - y * v).max(0.0);
    }
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    0.5 * lambda * sq + total / n as f64
}

/// Subgradient of [`hinge_loss`]; samples exactly on the margin contribute
/// nothing.
pub fn hinge_subgradient(weights: &Array1<f64>, train: &Dataset, lambda: f64) -> Array1<f64> {
    let n = train.n_samples();
    let d = train.n_features();
    let mut grad = weights * lambda;
    for r in 0..n {
        let x = train.feature_row(r);
        let mut v = weights[d];
        for j in 0..d {
            v += weights[j] * x[j];
        }
        let y = if train.label(r) == 1 { 1.0 } else { -1.0 };
        if 1.0 - y * v > 0.0 {
            let scale = -y / n as f64;
            for j in 0..d {
                grad[j] += scale * x[j];
            }
            grad[d] += scale;
        }
    }
    grad
}

/// Pegasos-style primal training: step `1/(lambda t)` followed by
/// projection onto the ball of radius `1/sqrt(lambda)`.
fn fit_linsvm_raw(train: &Dataset, svm_c: f64, epochs: usize) -> Result<LinsvmModel, TrainError> {
    if !train.both_classes_present() {
        return Err(TrainError::SingleClass);
    }
    let n = train.n_samples();
    let d = train.n_features();
    let lambda = 1.0 / (svm_c * n as f64);
    let radius = 1.0 / lambda.sqrt();
    let mut weights = Array1::zeros(d + 1);
    for t in 1..=epochs {
        let loss = hinge_loss(&weights, train, lambda);
        if !loss.is_finite() {
            return Err(TrainError::Diverged);
        }
        let grad = hinge_subgradient(&weights, train, lambda);
        let step = 1.0 / (lambda * t as f64);
        weights.scaled_add(-step, &grad);
        let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        if norm > radius {
            weights.mapv_inplace(|w| w * radius / norm);
        }
    }
    Ok(LinsvmModel { weights })
}

/// Row positions of the k nearest training points by Euclidean distance,
/// ties broken by lower sample id.
fn nearest_neighbors(
    train: &Dataset,
    k: usize,
    x: ArrayView1<'_, f64>,
) -> Result<Vec<usize>, PredictError> {
    let d = train.n_features();
    if x.len() != d {
        return Err(PredictError::DimensionMismatch {
            expected: d,
            actual: x.len(),
        });
    }
    let mut dist: Vec<(f64, u64, usize)> = (0..train.n_samples())
        .map(|r| {
            let row = train.feature_row(r);
            let mut acc = 0.0;
            for j in 0..d {
                let diff = row[j] - x[j];
                acc += diff * diff;
            }
            (acc, train.ids()[r], r)
        })
        .collect();
    dist.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1)));
    Ok(dist.into_iter().take(k).map(|(_, _, r)| r).collect())
}

fn knn_votes(train: &Dataset, k: usize, x: ArrayView1<'_, f64>) -> Result<[usize; 2], PredictError> {
    let neighbors = nearest_neighbors(train, k, x)?;
    let mut votes = [0usize; 2];
    for r in neighbors {
        votes[train.label(r)] += 1;
    }
    Ok(votes)
}

fn unanimous_label(train: &Dataset, neighbors: &[usize]) -> Option<usize> {
    let first = train.label(neighbors[0]);
    neighbors.iter().all(|&r| train.label(r) == first).then_some(first)
}

fn local_svm(model: &SvmknnModel, neighbors: &[usize]) -> Result<LinsvmModel, PredictError> {
    let local = model.train.subset(neighbors);
    // Non-unanimous neighborhoods contain both classes, so this cannot fail.
    Ok(fit_linsvm_raw(&local, model.svm_c, model.epochs).expect("local SVM on a two-class neighborhood"))
}

/// Composite rule: unanimous k-neighborhood label, otherwise a linear SVM
/// fitted on just those k neighbours decides.
pub fn svmknn_predict(model: &SvmknnModel, x: ArrayView1<'_, f64>) -> Result<usize, PredictError> {
    let neighbors = nearest_neighbors(&model.train, model.k_neighbors, x)?;
    if let Some(label) = unanimous_label(&model.train, &neighbors) {
        return Ok(label);
    }
    let local = local_svm(model, &neighbors)?;
    Ok(usize::from(local.decision_value(x)? > 0.0))
}
