//! The end-to-end reverse-thinking pipeline: score training samples by
//! simplicity, partition them at a threshold, train the suitable/inertial/
//! discrimination models, and route test samples through the easy path or
//! the hard path with a single posterior-driven flip.

use ndarray::{Array1, Array2, ArrayView1};
use thiserror::Error;

use crate::data::{
    class_priors, normalize_fit, DataError, Dataset, Normalizer, ParseError,
};
use crate::model::{
    fit, ClassifierKind, ClassifierSpec, KnnModel, LinsvmModel, PredictError, SoftmaxModel,
    SvmknnModel, TrainError, TrainedModel,
};
use crate::reverse::{
    cv_confusion_matrix, reverse_decide, reverse_posteriors, CvError, ReverseError, ReverseMode,
    ReversePosteriors,
};
use crate::rng::derive_seed;
use crate::serialize::{Document, LoadError, Writer};
use crate::simplicity::{
    build_committee, partition_by_threshold, simplicity_scores, CommitteeError, Partition,
    SimplicityScores,
};

const STREAM_COMMITTEE: u64 = 1;
const STREAM_CONFUSION: u64 = 2;

/// Any failure in the composite pipeline.
#[derive(Debug, Error)]
pub enum RtmlError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Reverse(#[from] ReverseError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl From<CommitteeError> for RtmlError {
    fn from(err: CommitteeError) -> Self {
        match err {
            CommitteeError::Data(e) => RtmlError::Data(e),
            CommitteeError::Train(e) => RtmlError::Train(e),
        }
    }
}

impl From<CvError> for RtmlError {
    fn from(err: CvError) -> Self {
        match err {
            CvError::Data(e) => RtmlError::Data(e),
            CvError::Train(e) => RtmlError::Train(e),
            CvError::Predict(e) => RtmlError::Predict(e),
        }
    }
}

/// Full training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RtmlConfig {
    /// Base classifier for the suitable and inertial models.
    pub base_spec: ClassifierSpec,
    /// Easy/hard discrimination model.
    pub discrim_spec: ClassifierSpec,
    /// Simplicity threshold separating easy (`score >= theta`) from hard.
    pub theta: f64,
    pub k_folds: usize,
    /// Committee size for simplicity scoring.
    pub n_models: usize,
    pub reverse_mode: ReverseMode,
    /// Laplace smoothing for the reverse posteriors.
    pub smoothing: f64,
    pub seed: u64,
    /// Fit a z-score normalizer on the training data and bake it into the
    /// model.
    pub normalize: bool,
    /// Estimate the confusion matrix on the hard subset only instead of the
    /// full training set (experimental variant).
    pub cm_on_hard_only: bool,
}

impl RtmlConfig {
    pub fn new(base_spec: ClassifierSpec, theta: f64) -> Self {
        RtmlConfig {
            base_spec,
            discrim_spec: ClassifierSpec::svmknn(9),
            theta,
            k_folds: 10,
            n_models: 40,
            reverse_mode: ReverseMode::ModelProb,
            smoothing: 1.0,
            seed: 0,
            normalize: true,
            cm_on_hard_only: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn validate(&self) -> Result<(), RtmlError> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(RtmlError::Config(format!(
                "theta must lie in [0, 1], got {}",
                self.theta
            )));
        }
        if self.k_folds < 2 {
            return Err(RtmlError::Config(format!(
                "k_folds must be at least 2, got {}",
                self.k_folds
            )));
        }
        if self.n_models == 0 {
            return Err(RtmlError::Config("n_models must be at least 1".into()));
        }
        if !(self.smoothing.is_finite() && self.smoothing >= 0.0) {
            return Err(RtmlError::Config(format!(
                "smoothing must be a finite non-negative number, got {}",
                self.smoothing
            )));
        }
        self.base_spec.validate()?;
        self.discrim_spec.validate()?;
        Ok(())
    }
}

/// Outcome of the easy/hard partition at training time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegenerateFlag {
    None,
    /// Every sample was easy: the suitable model equals the inertial model
    /// and no discriminator exists; everything routes easy.
    AllEasy,
    /// The easy side was empty or single-class: the suitable model falls
    /// back to the inertial model. With an empty easy side there is no
    /// discriminator and everything routes hard.
    AllHard,
}

impl DegenerateFlag {
    fn name(&self) -> &'static str {
        match self {
            DegenerateFlag::None => "none",
            DegenerateFlag::AllEasy => "all_easy",
            DegenerateFlag::AllHard => "all_hard",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "none" => Some(DegenerateFlag::None),
            "all_easy" => Some(DegenerateFlag::AllEasy),
            "all_hard" => Some(DegenerateFlag::AllHard),
            _ => None,
        }
    }
}

/// Trained bundle: the three models plus everything the prediction path
/// needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RtmlModel {
    pub suitable: TrainedModel,
    pub inertial: TrainedModel,
    pub discriminator: Option<TrainedModel>,
    pub posteriors: ReversePosteriors,
    pub priors: (f64, f64),
    pub partition: Partition,
    pub degenerate: DegenerateFlag,
    pub normalizer: Option<Normalizer>,
    pub reverse_mode: ReverseMode,
}

/// Which route a prediction took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoutePath {
    Easy,
    Hard,
}

/// Record of one prediction's path through the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTrace {
    pub path: RoutePath,
    /// Raw discriminator output (1 = easy, 0 = hard); `None` when routing
    /// was forced by a degenerate partition.
    pub discriminator_output: Option<usize>,
    /// Inertial prediction before the reverse rule (hard path only).
    pub pre_flip: Option<usize>,
    /// Comparison probabilities handed to the reverse rule (hard path only).
    pub comparison: Option<(f64, f64)>,
    pub flipped: bool,
}

/// The theta-independent part of training: normalization, committee
/// simplicity scores, the inertial model, priors, and (unless deferred to
/// the hard subset) the reverse posteriors. Completing a model for any
/// theta from the same foundation is exactly equivalent to a full
/// [`rtml_train`] run with that theta.
#[derive(Debug, Clone)]
pub struct RtmlFoundation {
    pub normalizer: Option<Normalizer>,
    pub train: Dataset,
    pub scores: SimplicityScores,
    pub inertial: TrainedModel,
    pub priors: (f64, f64),
    pub posteriors: Option<ReversePosteriors>,
}

pub fn rtml_foundation(train: &Dataset, cfg: &RtmlConfig) -> Result<RtmlFoundation, RtmlError> {
    cfg.validate()?;
    if !train.both_classes_present() {
        return Err(RtmlError::Train(TrainError::SingleClass));
    }
    if train.n_samples() < 2 * cfg.k_folds {
        return Err(RtmlError::Config(format!(
            "training set has {} samples but at least {} (2 x k_folds) are required",
            train.n_samples(),
            2 * cfg.k_folds
        )));
    }
    let (normalizer, data) = if cfg.normalize {
        let norm = normalize_fit(train)?;
        let applied = norm.apply(train)?;
        (Some(norm), applied)
    } else {
        (None, train.clone())
    };
    let committee = build_committee(
        &data,
        &cfg.base_spec,
        cfg.k_folds,
        cfg.n_models,
        derive_seed(cfg.seed, STREAM_COMMITTEE),
    )?;
    let scores = simplicity_scores(&committee, &data)?;
    let inertial = fit(&cfg.base_spec, &data)?;
    let priors = class_priors(&data)?;
    let posteriors = if cfg.cm_on_hard_only {
        None
    } else {
        let cm = cv_confusion_matrix(
            &data,
            &cfg.base_spec,
            cfg.k_folds,
            derive_seed(cfg.seed, STREAM_CONFUSION),
        )?;
        Some(reverse_posteriors(&cm, cfg.smoothing)?)
    };
    Ok(RtmlFoundation {
        normalizer,
        train: data,
        scores,
        inertial,
        priors,
        posteriors,
    })
}

/// Builds the final model from a foundation at `cfg.theta`.
pub fn rtml_complete(foundation: &RtmlFoundation, cfg: &RtmlConfig) -> Result<RtmlModel, RtmlError> {
    let data = &foundation.train;
    let partition = partition_by_threshold(&foundation.scores, cfg.theta)?;
    let easy_rows: Vec<usize> = (0..data.n_samples())
        .filter(|&i| foundation.scores.scores()[i] >= cfg.theta)
        .collect();
    let hard_rows: Vec<usize> = (0..data.n_samples())
        .filter(|&i| foundation.scores.scores()[i] < cfg.theta)
        .collect();

    let mut degenerate = DegenerateFlag::None;
    let mut discriminator = None;
    let suitable;
    if hard_rows.is_empty() {
        degenerate = DegenerateFlag::AllEasy;
        suitable = foundation.inertial.clone();
    } else if easy_rows.is_empty() {
        degenerate = DegenerateFlag::AllHard;
        suitable = foundation.inertial.clone();
    } else {
        let easy_data = data.subset(&easy_rows);
        if easy_data.both_classes_present() {
            suitable = fit(&cfg.base_spec, &easy_data)?;
        } else {
            degenerate = DegenerateFlag::AllHard;
            suitable = foundation.inertial.clone();
        }
        let discrim_labels: Vec<usize> = foundation
            .scores
            .scores()
            .iter()
            .map(|&s| usize::from(s >= cfg.theta))
            .collect();
        let discrim_data = data.relabelled(discrim_labels, ["-".into(), "+".into()])?;
        discriminator = Some(fit(&cfg.discrim_spec, &discrim_data)?);
    }

    let posteriors = match &foundation.posteriors {
        Some(p) => p.clone(),
        None => {
            if hard_rows.is_empty() {
                // Nothing ever reaches the reverse rule.
                ReversePosteriors::identity()
            } else {
                let hard_data = data.subset(&hard_rows);
                let cm = cv_confusion_matrix(
                    &hard_data,
                    &cfg.base_spec,
                    cfg.k_folds,
                    derive_seed(cfg.seed, STREAM_CONFUSION),
                )?;
                reverse_posteriors(&cm, cfg.smoothing)?
            }
        }
    };

    Ok(RtmlModel {
        suitable,
        inertial: foundation.inertial.clone(),
        discriminator,
        posteriors,
        priors: foundation.priors,
        partition,
        degenerate,
        normalizer: foundation.normalizer.clone(),
        reverse_mode: cfg.reverse_mode,
    })
}

/// Trains the full pipeline on `train`.
pub fn rtml_train(train: &Dataset, cfg: &RtmlConfig) -> Result<RtmlModel, RtmlError> {
    let foundation = rtml_foundation(train, cfg)?;
    rtml_complete(&foundation, cfg)
}

impl RtmlModel {
    pub fn n_features(&self) -> usize {
        match &self.normalizer {
            Some(norm) => norm.means().len(),
            None => self.inertial.n_features(),
        }
    }
}

/// Classifies one sample, reporting the route and any flip in the trace.
pub fn rtml_predict(
    model: &RtmlModel,
    x: ArrayView1<'_, f64>,
) -> Result<(usize, PredictionTrace), RtmlError> {
    match &model.normalizer {
        Some(norm) => {
            let scaled: Array1<f64> = norm.apply_row(x)?;
            predict_scaled(model, scaled.view())
        }
        None => predict_scaled(model, x),
    }
}

fn predict_scaled(
    model: &RtmlModel,
    x: ArrayView1<'_, f64>,
) -> Result<(usize, PredictionTrace), RtmlError> {
    let (easy, discriminator_output) = match &model.discriminator {
        Some(d) => {
            let y = d.predict(x)?;
            (y == 1, Some(y))
        }
        None => (model.degenerate == DegenerateFlag::AllEasy, None),
    };

    if easy {
        let class = model.suitable.predict(x)?;
        return Ok((
            class,
            PredictionTrace {
                path: RoutePath::Easy,
                discriminator_output,
                pre_flip: None,
                comparison: None,
                flipped: false,
            },
        ));
    }

    let initial = model.inertial.predict(x)?;
    let comparison = match model.reverse_mode {
        ReverseMode::ModelProb => model.inertial.predict_proba(x)?,
        ReverseMode::ClassPrior => model.priors,
    };
    let class = reverse_decide(initial, comparison, &model.posteriors);
    Ok((
        class,
        PredictionTrace {
            path: RoutePath::Hard,
            discriminator_output,
            pre_flip: Some(initial),
            comparison: Some(comparison),
            flipped: class != initial,
        },
    ))
}

/// Predicts every row of `ds`, discarding traces.
pub fn rtml_predict_batch(model: &RtmlModel, ds: &Dataset) -> Result<Vec<usize>, RtmlError> {
    (0..ds.n_samples())
        .map(|r| rtml_predict(model, ds.feature_row(r)).map(|(class, _)| class))
        .collect()
}

const BUNDLE_NAME: &str = "rtml-bundle";
const BUNDLE_VERSION: &str = "v1";

fn write_dataset(w: &mut Writer, ds: &Dataset) {
    w.field("n", ds.n_samples());
    w.field("d", ds.n_features());
    w.field_str("class_name_0", &ds.class_names()[0]);
    w.field_str("class_name_1", &ds.class_names()[1]);
    w.field_int_list("ids", ds.ids().iter().copied());
    w.field_int_list("labels", ds.labels().iter().map(|&l| l as u64));
    w.field_f64_list("features", ds.features().iter().copied());
}

fn read_dataset(section: &crate::serialize::Section) -> Result<Dataset, LoadError> {
    let n: usize = section.req_parse("n")?;
    let d: usize = section.req_parse("d")?;
    let class_names = [section.req_string("class_name_0")?, section.req_string("class_name_1")?];
    let ids = section.req_u64_list("ids")?;
    let labels = section.req_usize_list("labels")?;
    let raw = section.req_f64_list("features")?;
    if raw.len() != n * d {
        return Err(LoadError::MalformedField {
            field: "features".into(),
            detail: format!("expected {} values, found {}", n * d, raw.len()),
        });
    }
    let features = Array2::from_shape_vec((n, d), raw).expect("length checked above");
    Dataset::with_ids(features, labels, class_names, ids).map_err(|e| LoadError::MalformedField {
        field: "features".into(),
        detail: e.to_string(),
    })
}

fn write_model(w: &mut Writer, name: &str, model: &TrainedModel) {
    w.section(&format!("model {name}"));
    w.field("kind", model.kind().name());
    match model {
        TrainedModel::Softmax(m) => {
            w.field("columns", m.weights().ncols());
            w.field_f64_list("weights", m.weights().iter().copied());
            w.field_f64_list("loss_trace", m.training_loss_trace().iter().copied());
        }
        TrainedModel::Knn(m) => {
            w.field("k_neighbors", m.k_neighbors());
            write_dataset(w, m.train_data());
        }
        TrainedModel::Linsvm(m) => {
            w.field_f64_list("weights", m.weights().iter().copied());
        }
        TrainedModel::Svmknn(m) => {
            w.field("k_neighbors", m.k_neighbors());
            w.field("svm_c", m.svm_c());
            w.field("epochs", m.epochs());
            write_dataset(w, m.train_data());
        }
    }
}

fn read_model(doc: &Document, name: &str) -> Result<TrainedModel, LoadError> {
    let section = doc.section(&format!("model {name}"))?;
    let kind_name = section.req_string("kind")?;
    let kind = ClassifierKind::from_name(&kind_name).ok_or_else(|| LoadError::MalformedField {
        field: "kind".into(),
        detail: format!("unknown classifier kind `{kind_name}`"),
    })?;
    match kind {
        ClassifierKind::Softmax => {
            let columns: usize = section.req_parse("columns")?;
            let raw = section.req_f64_list("weights")?;
            if columns == 0 || raw.len() != 2 * columns {
                return Err(LoadError::MalformedField {
                    field: "weights".into(),
                    detail: format!("expected {} values, found {}", 2 * columns, raw.len()),
                });
            }
            let weights = Array2::from_shape_vec((2, columns), raw).expect("length checked above");
            let training_loss_trace = section.req_f64_list("loss_trace")?;
            Ok(TrainedModel::Softmax(SoftmaxModel {
                weights,
                training_loss_trace,
            }))
        }
        ClassifierKind::Knn => Ok(TrainedModel::Knn(KnnModel {
            k_neighbors: section.req_parse("k_neighbors")?,
            train: read_dataset(section)?,
        })),
        ClassifierKind::Linsvm => {
            let weights = section.req_f64_list("weights")?;
            if weights.is_empty() {
                return Err(LoadError::MalformedField {
                    field: "weights".into(),
                    detail: "empty weight vector".into(),
                });
            }
            Ok(TrainedModel::Linsvm(LinsvmModel {
                weights: Array1::from_vec(weights),
            }))
        }
        ClassifierKind::Svmknn => Ok(TrainedModel::Svmknn(SvmknnModel {
            k_neighbors: section.req_parse("k_neighbors")?,
            svm_c: section.req_f64("svm_c")?,
            epochs: section.req_parse("epochs")?,
            train: read_dataset(section)?,
        })),
    }
}

/// Serializes a trained bundle to versioned text.
pub fn rtml_save(model: &RtmlModel) -> String {
    let mut w = Writer::new(BUNDLE_NAME, BUNDLE_VERSION);
    w.section("bundle");
    w.field("reverse_mode", model.reverse_mode.name());
    w.field("degenerate", model.degenerate.name());
    w.field("p0", model.priors.0);
    w.field("p1", model.priors.1);
    w.field("has_discriminator", model.discriminator.is_some());
    w.field("has_normalizer", model.normalizer.is_some());
    w.section("posteriors");
    w.field("smoothing", model.posteriors.smoothing());
    for truth in 0..2 {
        for pred in 0..2 {
            w.field(&format!("post_{truth}_{pred}"), model.posteriors.get(truth, pred));
        }
    }
    w.section("partition");
    w.field("theta", model.partition.theta);
    w.field_int_list("easy_ids", model.partition.easy_ids.iter().copied());
    w.field_int_list("hard_ids", model.partition.hard_ids.iter().copied());
    if let Some(norm) = &model.normalizer {
        w.section("normalizer");
        w.field_f64_list("means", norm.means().iter().copied());
        w.field_f64_list("stddevs", norm.stddevs().iter().copied());
    }
    write_model(&mut w, "suitable", &model.suitable);
    write_model(&mut w, "inertial", &model.inertial);
    if let Some(d) = &model.discriminator {
        write_model(&mut w, "discriminator", d);
    }
    w.finish()
}

/// Loads a bundle saved by [`rtml_save`].
pub fn rtml_load(text: &str) -> Result<RtmlModel, LoadError> {
    let doc = Document::parse(text, BUNDLE_NAME, BUNDLE_VERSION)?;
    let bundle = doc.section("bundle")?;
    let reverse_mode_name = bundle.req_string("reverse_mode")?;
    let reverse_mode =
        ReverseMode::from_name(&reverse_mode_name).ok_or_else(|| LoadError::MalformedField {
            field: "reverse_mode".into(),
            detail: format!("unknown mode `{reverse_mode_name}`"),
        })?;
    let degenerate_name = bundle.req_string("degenerate")?;
    let degenerate =
        DegenerateFlag::from_name(&degenerate_name).ok_or_else(|| LoadError::MalformedField {
            field: "degenerate".into(),
            detail: format!("unknown flag `{degenerate_name}`"),
        })?;
    let priors = (bundle.req_f64("p0")?, bundle.req_f64("p1")?);
    let has_discriminator = bundle.req_bool("has_discriminator")?;
    let has_normalizer = bundle.req_bool("has_normalizer")?;

    let post_section = doc.section("posteriors")?;
    let smoothing = post_section.req_f64("smoothing")?;
    let mut post = [[0.0; 2]; 2];
    for (truth, row) in post.iter_mut().enumerate() {
        for (pred, cell) in row.iter_mut().enumerate() {
            *cell = post_section.req_f64(&format!("post_{truth}_{pred}"))?;
        }
    }
    let posteriors = ReversePosteriors::from_parts(post, smoothing);

    let partition_section = doc.section("partition")?;
    let partition = Partition {
        theta: partition_section.req_f64("theta")?,
        easy_ids: partition_section.req_u64_list("easy_ids")?,
        hard_ids: partition_section.req_u64_list("hard_ids")?,
    };

    let normalizer = if has_normalizer {
        let section = doc.section("normalizer")?;
        Some(
            Normalizer::from_parts(section.req_f64_list("means")?, section.req_f64_list("stddevs")?)
                .map_err(|e| LoadError::MalformedField {
                    field: "stddevs".into(),
                    detail: e.to_string(),
                })?,
        )
    } else {
        None
    };

    let suitable = read_model(&doc, "suitable")?;
    let inertial = read_model(&doc, "inertial")?;
    let discriminator = if has_discriminator {
        Some(read_model(&doc, "discriminator")?)
    } else {
        None
    };

    Ok(RtmlModel {
        suitable,
        inertial,
        discriminator,
        posteriors,
        priors,
        partition,
        degenerate,
        normalizer,
        reverse_mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_two_spirals;
    use crate::rng::SplitMix64;
    use ndarray::array;

    fn small_cfg(theta: f64) -> RtmlConfig {
        let mut cfg = RtmlConfig::new(ClassifierSpec::softmax().with_epochs(60), theta);
        cfg.discrim_spec = ClassifierSpec::svmknn(3);
        cfg.k_folds = 5;
        cfg.n_models = 10;
        cfg.seed = 11;
        cfg
    }

    fn spirals() -> Dataset {
        generate_two_spirals(60, 0.05, 4).unwrap()
    }

    #[test]
    fn theta_zero_collapses_to_base_classifier() {
        let ds = spirals();
        let mut cfg = small_cfg(0.0);
        cfg.normalize = false;
        let model = rtml_train(&ds, &cfg).unwrap();
        assert_eq!(model.degenerate, DegenerateFlag::AllEasy);
        assert!(model.discriminator.is_none());
        let base = fit(&cfg.base_spec, &ds).unwrap();
        let mut rng = SplitMix64::new(8);
        for _ in 0..200 {
            let x = array![rng.next_f64() * 3.0 - 1.5, rng.next_f64() * 3.0 - 1.5];
            let (class, trace) = rtml_predict(&model, x.view()).unwrap();
            assert_eq!(class, base.predict(x.view()).unwrap());
            assert_eq!(trace.path, RoutePath::Easy);
            assert!(!trace.flipped);
        }
    }

    #[test]
    fn theta_one_on_noisy_labels_forces_hard_path() {
        // Conflicting duplicates: every location carries both labels, so a
        // 1-NN committee member is always wrong on one twin of each pair
        // and no sample reaches a simplicity of 1.
        let pairs = 30;
        let mut features = Array2::zeros((2 * pairs, 1));
        let mut labels = Vec::new();
        for p in 0..pairs {
            features[(2 * p, 0)] = p as f64 * 10.0;
            features[(2 * p + 1, 0)] = p as f64 * 10.0;
            labels.push(p % 2);
            labels.push(1 - p % 2);
        }
        let ds = Dataset::new(features, labels, ["C1".into(), "C2".into()]).unwrap();
        let mut cfg = small_cfg(1.0);
        cfg.base_spec = ClassifierSpec::knn(1);
        let foundation = rtml_foundation(&ds, &cfg).unwrap();
        assert!(foundation.scores.scores().iter().all(|&s| s < 1.0));
        let model = rtml_complete(&foundation, &cfg).unwrap();
        assert_eq!(model.degenerate, DegenerateFlag::AllHard);
        assert!(model.partition.easy_ids.is_empty());
        assert!(model.discriminator.is_none());
        let (_, trace) = rtml_predict(&model, array![0.3].view()).unwrap();
        assert_eq!(trace.path, RoutePath::Hard);
        assert!(trace.pre_flip.is_some());
    }

    #[test]
    fn training_is_deterministic() {
        let ds = spirals();
        let cfg = small_cfg(0.7);
        let a = rtml_save(&rtml_train(&ds, &cfg).unwrap());
        let b = rtml_save(&rtml_train(&ds, &cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn foundation_completion_matches_direct_training() {
        let ds = spirals();
        let foundation = rtml_foundation(&ds, &small_cfg(0.5)).unwrap();
        for theta in [0.0, 0.3, 0.8, 1.0] {
            let cfg = small_cfg(theta);
            let from_foundation = rtml_complete(&foundation, &cfg).unwrap();
            let direct = rtml_train(&ds, &cfg).unwrap();
            assert_eq!(rtml_save(&from_foundation), rtml_save(&direct), "theta {theta}");
        }
    }

    fn hand_built_model(post: ReversePosteriors, discriminator: Option<TrainedModel>) -> RtmlModel {
        // Suitable always answers 0, inertial always answers 1, so routing
        // is observable from the output alone.
        let zeros = Dataset::new(Array2::zeros((1, 2)), vec![0], ["C1".into(), "C2".into()]).unwrap();
        let ones = Dataset::new(Array2::zeros((1, 2)), vec![1], ["C1".into(), "C2".into()]).unwrap();
        RtmlModel {
            suitable: fit(&ClassifierSpec::knn(1), &zeros).unwrap(),
            inertial: fit(&ClassifierSpec::knn(1), &ones).unwrap(),
            discriminator,
            posteriors: post,
            priors: (0.5, 0.5),
            partition: Partition {
                easy_ids: vec![0],
                hard_ids: vec![1],
                theta: 0.5,
            },
            degenerate: DegenerateFlag::None,
            normalizer: None,
            reverse_mode: ReverseMode::ModelProb,
        }
    }

    fn constant_discriminator(label: usize) -> TrainedModel {
        let ds = Dataset::new(Array2::zeros((1, 2)), vec![label], ["-".into(), "+".into()]).unwrap();
        fit(&ClassifierSpec::knn(1), &ds).unwrap()
    }

    #[test]
    fn easy_route_bypasses_reverse_machinery() {
        let model = hand_built_model(
            ReversePosteriors::from_parts([[0.0, 1.0], [1.0, 0.0]], 0.0),
            Some(constant_discriminator(1)),
        );
        let (class, trace) = rtml_predict(&model, array![5.0, 5.0].view()).unwrap();
        assert_eq!(class, 0, "suitable model answers");
        assert_eq!(trace.path, RoutePath::Easy);
        assert_eq!(trace.discriminator_output, Some(1));
        assert!(trace.comparison.is_none() && !trace.flipped);
    }

    #[test]
    fn hard_route_with_identity_posteriors_is_inertial() {
        let model = hand_built_model(ReversePosteriors::identity(), Some(constant_discriminator(0)));
        let (class, trace) = rtml_predict(&model, array![5.0, 5.0].view()).unwrap();
        assert_eq!(class, 1, "inertial model answers unflipped");
        assert_eq!(trace.path, RoutePath::Hard);
        assert_eq!(trace.pre_flip, Some(1));
        assert!(!trace.flipped);
    }

    #[test]
    fn hard_route_flips_when_posterior_beats_comparison() {
        // Inertial predicts 1; posterior P(true=0 | pred=1) = 0.6; the kNN
        // inertial model is certain so q0 = 0 and the flip fires.
        let model = hand_built_model(
            ReversePosteriors::from_parts([[0.9, 0.6], [0.1, 0.4]], 0.0),
            Some(constant_discriminator(0)),
        );
        let (class, trace) = rtml_predict(&model, array![1.0, 1.0].view()).unwrap();
        assert_eq!(class, 0);
        assert!(trace.flipped);
        assert_eq!(trace.pre_flip, Some(1));
    }

    #[test]
    fn easy_path_ignores_posteriors() {
        let mut model = hand_built_model(ReversePosteriors::identity(), Some(constant_discriminator(1)));
        let x = array![2.0, -1.0];
        let before = rtml_predict(&model, x.view()).unwrap();
        model.posteriors = ReversePosteriors::from_parts([[0.0, 1.0], [1.0, 0.0]], 0.0);
        let after = rtml_predict(&model, x.view()).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn save_load_round_trip_is_identical() {
        let ds = spirals();
        for theta in [0.0, 0.6, 1.0] {
            let model = rtml_train(&ds, &small_cfg(theta)).unwrap();
            let text = rtml_save(&model);
            let loaded = rtml_load(&text).unwrap();
            assert_eq!(rtml_save(&loaded), text);
            assert_eq!(loaded, model);
        }
    }

    #[test]
    fn loaded_model_predicts_identically() {
        let ds = spirals();
        let model = rtml_train(&ds, &small_cfg(0.6)).unwrap();
        let loaded = rtml_load(&rtml_save(&model)).unwrap();
        let mut rng = SplitMix64::new(31);
        for _ in 0..1000 {
            let x = array![rng.next_f64() * 4.0 - 2.0, rng.next_f64() * 4.0 - 2.0];
            assert_eq!(
                rtml_predict(&model, x.view()).unwrap(),
                rtml_predict(&loaded, x.view()).unwrap()
            );
        }
    }

    #[test]
    fn truncated_bundle_names_missing_piece() {
        let ds = spirals();
        let model = rtml_train(&ds, &small_cfg(0.6)).unwrap();
        let text = rtml_save(&model);
        let cut = &text[..text.len() / 2];
        assert!(rtml_load(cut).is_err());
        let no_end = text.trim_end_matches("end\n");
        assert_eq!(rtml_load(no_end).unwrap_err(), LoadError::Truncated);
        let missing_field = text.replace("p0=", "px=");
        match rtml_load(&missing_field).unwrap_err() {
            LoadError::MissingField { field, .. } => assert_eq!(field, "p0"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let ds = spirals();
        let model = rtml_train(&ds, &small_cfg(0.6)).unwrap();
        let text = rtml_save(&model).replacen("v1", "v9", 1);
        assert_eq!(
            rtml_load(&text).unwrap_err(),
            LoadError::VersionMismatch {
                found: "v9".into(),
                expected: "v1".into()
            }
        );
    }

    #[test]
    fn config_validation_errors() {
        let ds = spirals();
        assert!(rtml_train(&ds, &small_cfg(1.5)).is_err());
        let mut cfg = small_cfg(0.5);
        cfg.k_folds = 1;
        assert!(rtml_train(&ds, &cfg).is_err());
        let mut cfg = small_cfg(0.5);
        cfg.n_models = 0;
        assert!(rtml_train(&ds, &cfg).is_err());
        let mut cfg = small_cfg(0.5);
        cfg.smoothing = -1.0;
        assert!(rtml_train(&ds, &cfg).is_err());
        // 60 samples cannot support 2 x 40 folds.
        let mut cfg = small_cfg(0.5);
        cfg.k_folds = 40;
        assert!(matches!(rtml_train(&ds, &cfg), Err(RtmlError::Config(_))));
    }

    #[test]
    fn routing_is_total_and_flips_only_on_hard() {
        let ds = spirals();
        let model = rtml_train(&ds, &small_cfg(0.8)).unwrap();
        let mut rng = SplitMix64::new(2);
        for _ in 0..300 {
            let x = array![rng.next_f64() * 3.0 - 1.5, rng.next_f64() * 3.0 - 1.5];
            let (_, trace) = rtml_predict(&model, x.view()).unwrap();
            match trace.path {
                RoutePath::Easy => assert!(!trace.flipped && trace.pre_flip.is_none()),
                RoutePath::Hard => assert!(trace.pre_flip.is_some() && trace.comparison.is_some()),
            }
        }
    }
}
