//! The probabilistic group classifier: tf-idf features, multinomial logistic
//! regression, cross-validated model selection and classification rates.

mod features;
mod logistic;
mod persist;
mod selection;

pub use features::{FeatureVector, Vectorizer};
pub use logistic::{
    train, train_on_features, ClassWeighting, ClassifierHyperParams, LogisticModel, LogisticObjective,
    TrainingReport,
};
pub use persist::{read_model, write_model, ModelFile};
pub use selection::{
    cross_val_posteriors, cv_accuracy, cv_rate_matrix, default_grid, select_model, stratified_folds,
    SelectionOutcome, FOLDS,
};
