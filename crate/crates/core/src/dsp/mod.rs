//! Signal preprocessing and feature extraction.
//!
//! `fir` holds windowed-sinc kernel design and zero-phase application,
//! `preprocess` the trial-level cleanup steps (demean, line-noise subtraction,
//! decimation, bipolar re-referencing), and `features` the two per-channel
//! feature extractors (slow evoked waveform samples and log high-gamma power).

pub mod features;
pub mod fir;
pub mod preprocess;

pub use features::{
    direct_features, erp_kernel, extract_erp, extract_hgp, feature_count, featurize, hgp_kernel,
    write_features_csv, FeatureKind, FeatureOptions, FeatureSeries, FEATURE_RATE_HZ, HGP_MIN_FS,
};
pub use fir::{FilterKernel, FilterKind};
pub use preprocess::{
    bipolar_rereference, decimate, decimate_set, demean, demean_set, remove_line_noise,
    remove_line_noise_set,
};
