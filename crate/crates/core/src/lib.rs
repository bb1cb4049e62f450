//! Reverse-thinking meta-classification.
//!
//! The pipeline scores training samples by *simplicity* (the fraction of a
//! cross-validation committee that classifies them correctly), partitions
//! them into easy and hard sets at a threshold, and trains three models: a
//! suitable model on the easy samples, an inertial model on everything, and
//! a discriminator that routes test samples. Hard-routed predictions may be
//! flipped once when the confusion-matrix posterior for the opposite class
//! outweighs the model's own probability (or the class prior).
//!
//! Modules:
//! - [`data`]: datasets, LIBSVM/delimited parsing, two-spirals generation,
//!   stratified folds, normalization.
//! - [`model`]: softmax regression, kNN, linear SVM, and SVM-KNN.
//! - [`simplicity`]: committees, simplicity scores, easy/hard partitions.
//! - [`reverse`]: confusion matrices, reverse posteriors, the flip rule.
//! - [`rtml`]: the end-to-end pipeline plus bundle save/load.
//! - [`bench`]: cross-validated experiment harness and report emitters.

pub mod bench;
pub mod data;
pub mod model;
pub mod reverse;
pub mod rng;
pub mod rtml;
pub mod simplicity;

mod serialize;

pub use data::{
    class_priors, generate_two_spirals, normalize_fit, parse_delimited, parse_libsvm,
    stratified_kfold, write_libsvm, DataError, Dataset, FoldPlan, LabelColumn, Normalizer,
    ParseError,
};
pub use model::{
    fit, ClassifierKind, ClassifierSpec, PredictError, TrainError, TrainedModel,
};
pub use reverse::{
    cv_confusion_matrix, cv_records, reverse_decide, reverse_posteriors, theorem1_ratio,
    ConfusionMatrix, ReverseError, ReverseMode, ReversePosteriors,
};
pub use rtml::{
    rtml_load, rtml_predict, rtml_predict_batch, rtml_save, rtml_train, DegenerateFlag,
    PredictionTrace, RoutePath, RtmlConfig, RtmlError, RtmlModel,
};
pub use serialize::LoadError;
pub use simplicity::{
    build_committee, partition_by_threshold, simplicity_scores, Committee, Partition,
    SimplicityScores,
};
