//! Bayesian time-series classification of multichannel neural recordings.
//!
//! The model is a per-channel quadratic discriminant over windowed feature
//! time series (slow evoked waveforms and log high-gamma power), extended
//! with three selection mechanisms that keep it usable on small datasets:
//!
//! * **Minimal horizon** — each channel classifier is evaluated at every
//!   cumulative feature length 1..=d via cross-validation and operates at the
//!   shortest length that maximizes accuracy, which also sidesteps estimating
//!   a full d×d covariance from few trials.
//! * **Ensembling** — channel classifiers combine either by summing log
//!   likelihoods under conditional independence (priors applied once) or by
//!   plurality voting.
//! * **Greedy subset selection** — members join the ensemble one at a time,
//!   best-first, only while cross-validated accuracy strictly improves.
//!
//! The crate also ships the supporting machinery: dataset/model file formats
//! ([`trial_io`]), preprocessing and feature extraction ([`dsp`]), stratified
//! evaluation with nested selection ([`eval`], [`pipeline`]), report emission
//! ([`report`]), and a synthetic generator with known ground truth and a
//! Monte Carlo Bayes-accuracy oracle ([`synth`]).

pub mod config;
pub mod dsp;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod gaussian;
pub mod pipeline;
pub mod report;
pub mod synth;
pub mod trial_io;

pub use config::{PreprocessConfig, RunConfig};
pub use dsp::{FeatureKind, FeatureSeries};
pub use ensemble::{
    combine_likelihood, combine_voting, greedy_select, CombinationRule, EnsembleModel,
};
pub use error::{Error, Result};
pub use eval::{accuracy, f1_macro, stratified_kfold};
pub use gaussian::{
    fit_class_gaussian, select_minimal_horizon, ChannelClassifier, GaussianClassModel, PriorMode,
};
pub use pipeline::{run_fit_eval, FeatureSource, FitEvalConfig, FitEvalOutput};
pub use report::EvalReport;
pub use synth::{bayes_optimal_accuracy, generate, SynthSpec};
pub use trial_io::{load_dataset, load_model, save_dataset, save_model, TrialSet};
