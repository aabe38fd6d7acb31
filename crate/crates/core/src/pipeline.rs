//! End-to-end train/select/evaluate orchestration.
//!
//! The evaluation protocol is nested: outer stratified folds measure held-out
//! performance, and everything that makes choices — horizon selection per
//! channel and greedy subset selection — runs on inner folds built from the
//! outer training split only. Test trials never influence any fitted
//! parameter, and every random choice derives from the single top-level seed,
//! so repeated runs (at any thread count) produce identical reports.

use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::dsp::{direct_features, featurize, FeatureOptions, FeatureSeries};
use crate::ensemble::{greedy_select, CombinationRule, EnsembleModel};
use crate::error::{Error, Result};
use crate::eval::{accuracy, derive_seed, f1_macro, stratified_kfold, Fold};
use crate::gaussian::{select_minimal_horizon, ChannelClassifier, PriorMode};
use crate::report::{EvalReport, FoldMetrics, MemberSummary, ReportConfig, TimePoint};
use crate::trial_io::TrialSet;

/// Where feature vectors come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    /// Extract ERP/HGP features from raw post-onset signals.
    #[default]
    Dsp,
    /// Stored samples already are feature values.
    Direct,
}

/// Everything the pipeline needs besides the data itself.
#[derive(Debug, Clone, Copy)]
pub struct FitEvalConfig {
    pub window_s: f64,
    pub use_erp: bool,
    pub use_hgp: bool,
    pub feature_source: FeatureSource,
    pub shrinkage: f64,
    pub k_folds: usize,
    pub seed: u64,
    pub rule: CombinationRule,
    pub max_members: usize,
    pub priors: PriorMode,
    /// Whether to compute the per-horizon accuracy curve (the most expensive
    /// part of a run).
    pub time_curve: bool,
}

impl Default for FitEvalConfig {
    fn default() -> Self {
        FitEvalConfig {
            window_s: 1.0,
            use_erp: true,
            use_hgp: true,
            feature_source: FeatureSource::Dsp,
            shrinkage: 0.2,
            k_folds: 5,
            seed: 0,
            rule: CombinationRule::Likelihood,
            max_members: 20,
            priors: PriorMode::Empirical,
            time_curve: true,
        }
    }
}

/// Training artifacts and held-out metrics for one outer fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub fold_index: usize,
    pub test: Vec<usize>,
    /// Every candidate fitted on this fold's training split.
    pub candidates: Vec<ChannelClassifier>,
    pub ensemble: EnsembleModel,
    pub predictions: Vec<usize>,
    pub accuracy: f64,
    pub f1_macro: f64,
}

/// Feature series for every candidate channel/kind, per the configured source.
pub fn extract_candidates(set: &TrialSet, cfg: &FitEvalConfig) -> Result<Vec<FeatureSeries>> {
    let series = match cfg.feature_source {
        FeatureSource::Dsp => featurize(
            set,
            &FeatureOptions {
                window_s: cfg.window_s,
                use_erp: cfg.use_erp,
                use_hgp: cfg.use_hgp,
            },
        )?,
        FeatureSource::Direct => direct_features(set)?,
    };
    common_dim(&series)?;
    Ok(series)
}

fn common_dim(series: &[FeatureSeries]) -> Result<usize> {
    let d = series
        .first()
        .map(|s| s.dim())
        .ok_or_else(|| Error::Data("no candidate feature series".into()))?;
    if series.iter().any(|s| s.dim() != d) {
        return Err(Error::Data("candidate feature lengths disagree".into()));
    }
    Ok(d)
}

/// Fits every candidate on the trials in `idx` (horizon selection via inner
/// CV, then a full-width fit) and greedily selects the member subset.
///
/// `stage_tag` decorrelates the inner-fold seed from other stages while
/// keeping the whole procedure a pure function of `cfg.seed`.
pub fn select_on(
    series: &[FeatureSeries],
    labels: &[usize],
    idx: &[usize],
    cfg: &FitEvalConfig,
    stage_tag: u64,
) -> Result<(Vec<ChannelClassifier>, EnsembleModel)> {
    let sub_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
    let sub_feats: Vec<ndarray::Array2<f64>> = series
        .iter()
        .map(|s| s.values.select(ndarray::Axis(0), idx))
        .collect();
    let inner_seed = derive_seed(cfg.seed, stage_tag);

    let candidates: Vec<ChannelClassifier> = series
        .par_iter()
        .zip(sub_feats.par_iter())
        .map(|(s, feats)| {
            let selection = select_minimal_horizon(
                feats.view(),
                &sub_labels,
                cfg.k_folds,
                inner_seed,
                cfg.shrinkage,
                cfg.priors,
            )?;
            let model = crate::gaussian::GaussianClassModel::fit(
                feats.view(),
                &sub_labels,
                cfg.shrinkage,
                cfg.priors,
            )?;
            ChannelClassifier::new(model, s.channel_name.clone(), s.kind, selection.curve)
        })
        .collect::<Result<Vec<_>>>()?;

    let views: Vec<ArrayView2<'_, f64>> = sub_feats.iter().map(|f| f.view()).collect();
    let ensemble = greedy_select(
        &candidates,
        &views,
        &sub_labels,
        cfg.rule,
        cfg.k_folds,
        inner_seed,
        cfg.max_members,
        cfg.priors,
    )?;
    Ok((candidates, ensemble))
}

/// Index of the series a fitted member was built from.
fn member_series_index(series: &[FeatureSeries], member: &ChannelClassifier) -> Result<usize> {
    series
        .iter()
        .position(|s| s.channel_name == member.channel_name && s.kind == member.feature_kind)
        .ok_or_else(|| {
            Error::Data(format!(
                "member ({}, {}) has no matching feature series",
                member.channel_name, member.feature_kind
            ))
        })
}

/// Runs training + selection inside each provided fold and scores the fold's
/// held-out trials. Folds are supplied by the caller so leakage tests can fix
/// them independently of label perturbations.
pub fn run_nested_cv(
    series: &[FeatureSeries],
    labels: &[usize],
    cfg: &FitEvalConfig,
    folds: &[Fold],
) -> Result<Vec<FoldOutcome>> {
    let k_classes = labels.iter().max().map_or(0, |m| m + 1);
    folds
        .iter()
        .enumerate()
        .map(|(fold_index, fold)| {
            let (candidates, ensemble) =
                select_on(series, labels, &fold.train, cfg, fold_index as u64 + 1)?;
            let member_feats: Vec<ndarray::Array2<f64>> = ensemble
                .members
                .iter()
                .map(|m| {
                    member_series_index(series, m)
                        .map(|i| series[i].values.select(ndarray::Axis(0), &fold.test))
                })
                .collect::<Result<Vec<_>>>()?;
            let views: Vec<ArrayView2<'_, f64>> = member_feats.iter().map(|f| f.view()).collect();
            let predictions = ensemble.predict_batch(&views)?;
            let test_labels: Vec<usize> = fold.test.iter().map(|&i| labels[i]).collect();
            let acc = accuracy(&predictions, &test_labels)?;
            let f1 = f1_macro(&predictions, &test_labels, k_classes)?;
            Ok(FoldOutcome {
                fold_index,
                test: fold.test.clone(),
                candidates,
                ensemble,
                predictions,
                accuracy: acc,
                f1_macro: f1,
            })
        })
        .collect()
}

/// Held-out accuracy and member count of the full pipeline restricted to the
/// first `j` features, for every horizon `j`.
///
/// The same outer folds and per-stage seeds are reused at every horizon, so
/// the final point reproduces the unrestricted evaluation exactly.
pub fn accuracy_over_time(
    series: &[FeatureSeries],
    labels: &[usize],
    cfg: &FitEvalConfig,
    folds: &[Fold],
) -> Result<Vec<TimePoint>> {
    let d = common_dim(series)?;
    let window_s = series[0].window_s;
    (1..=d)
        .into_par_iter()
        .map(|j| {
            let truncated = series
                .iter()
                .map(|s| s.truncated(j))
                .collect::<Result<Vec<_>>>()?;
            let outcomes = run_nested_cv(&truncated, labels, cfg, folds)?;
            let n = outcomes.len() as f64;
            let acc = outcomes.iter().map(|o| o.accuracy).sum::<f64>() / n;
            let members = outcomes
                .iter()
                .map(|o| o.ensemble.members.len() as f64)
                .sum::<f64>()
                / n;
            Ok(TimePoint {
                horizon: j,
                time_s: j as f64 * window_s / d as f64,
                accuracy: acc,
                mean_members: members,
            })
        })
        .collect()
}

/// Report plus the final model fitted on all trials.
#[derive(Debug, Clone)]
pub struct FitEvalOutput {
    pub report: EvalReport,
    pub model: EnsembleModel,
    pub series: Vec<FeatureSeries>,
    pub outcomes: Vec<FoldOutcome>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn member_summaries(ensemble: &EnsembleModel) -> Vec<MemberSummary> {
    ensemble
        .members
        .iter()
        .map(|m| MemberSummary {
            channel_name: m.channel_name.clone(),
            feature_kind: m.feature_kind,
            d_minimal: m.d_minimal,
        })
        .collect()
}

/// The complete protocol: featurize, nested CV, final full-data selection,
/// and (optionally) the per-horizon accuracy curve.
pub fn run_fit_eval(set: &TrialSet, cfg: &FitEvalConfig) -> Result<FitEvalOutput> {
    validate_config(cfg)?;
    let series = extract_candidates(set, cfg)?;
    let folds = stratified_kfold(&set.labels, cfg.k_folds, cfg.seed)?;
    let outcomes = run_nested_cv(&series, &set.labels, cfg, &folds)?;

    let all_idx: Vec<usize> = (0..set.labels.len()).collect();
    let (_, final_model) = select_on(&series, &set.labels, &all_idx, cfg, 0)?;

    let curve = if cfg.time_curve {
        accuracy_over_time(&series, &set.labels, cfg, &folds)?
    } else {
        Vec::new()
    };

    let accs: Vec<f64> = outcomes.iter().map(|o| o.accuracy).collect();
    let f1s: Vec<f64> = outcomes.iter().map(|o| o.f1_macro).collect();
    let (accuracy_mean, accuracy_std) = mean_std(&accs);
    let (f1_mean, f1_std) = mean_std(&f1s);

    let report = EvalReport {
        config: ReportConfig {
            k_folds: cfg.k_folds,
            seed: cfg.seed,
            shrinkage: cfg.shrinkage,
            rule: cfg.rule,
            priors: cfg.priors,
            f1_averaging: Default::default(),
            window_s: cfg.window_s,
            use_erp: cfg.use_erp,
            use_hgp: cfg.use_hgp,
            feature_source: cfg.feature_source,
            max_members: cfg.max_members,
            n_trials: set.n_trials(),
            n_channels: set.n_channels(),
            k_classes: set.k_classes(),
            feature_dim: series[0].dim(),
        },
        per_fold: outcomes
            .iter()
            .map(|o| FoldMetrics {
                fold: o.fold_index,
                accuracy: o.accuracy,
                f1_macro: o.f1_macro,
                selected: member_summaries(&o.ensemble),
            })
            .collect(),
        accuracy_mean,
        accuracy_std,
        f1_mean,
        f1_std,
        selected: member_summaries(&final_model),
        selection_trace: final_model.selection_trace.clone(),
        accuracy_over_time: curve,
    };
    Ok(FitEvalOutput {
        report,
        model: final_model,
        series,
        outcomes,
    })
}

pub fn validate_config(cfg: &FitEvalConfig) -> Result<()> {
    if cfg.k_folds < 2 {
        return Err(Error::Config(format!(
            "k_folds must be at least 2, got {}",
            cfg.k_folds
        )));
    }
    if cfg.window_s <= 0.0 || !cfg.window_s.is_finite() {
        return Err(Error::Config(format!(
            "window_s must be positive, got {}",
            cfg.window_s
        )));
    }
    if !(0.0..=1.0).contains(&cfg.shrinkage) {
        return Err(Error::Config(format!(
            "shrinkage must lie in [0, 1], got {}",
            cfg.shrinkage
        )));
    }
    if cfg.max_members == 0 {
        return Err(Error::Config("max_members must be at least 1".into()));
    }
    if cfg.feature_source == FeatureSource::Dsp && !cfg.use_erp && !cfg.use_hgp {
        return Err(Error::Config("no feature kinds enabled".into()));
    }
    Ok(())
}
