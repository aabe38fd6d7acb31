//! Synthetic trial generation with known ground truth.
//!
//! Feature mode draws exact multivariate-normal feature vectors per class and
//! channel; raw mode synthesizes time-domain signals whose extracted features
//! approximate the same targets (a smooth sub-7 Hz waveform through the
//! target values for ERP channels, a 90 Hz carrier whose per-window amplitude
//! encodes the target log power for HGP channels, plus white noise). Both
//! modes derive one RNG stream per trial from the top-level seed, so output
//! is deterministic and independent of generation order.
//!
//! [`bayes_optimal_accuracy`] scores the generating distribution itself by
//! Monte Carlo, giving an upper bound any fitted classifier can be checked
//! against.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::dsp::{feature_count, FeatureKind, FeatureSeries};
use crate::error::{Error, Result};
use crate::eval::derive_seed;
use crate::gaussian::{argmax_smallest, cholesky_lower};
use crate::trial_io::TrialSet;

/// Which signal component realizes a channel's targets in raw mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RawTarget {
    #[default]
    Erp,
    Hgp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthMode {
    Feature,
    Raw,
}

/// Ground-truth parameters for one generated channel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub name: String,
    /// Whether the class parameters actually differ (test-harness metadata;
    /// not validated against the parameters).
    #[serde(default = "default_true")]
    pub informative: bool,
    /// Raw-mode realization; ignored in feature mode.
    #[serde(default)]
    pub raw_target: RawTarget,
    /// `K x d` per-class feature means.
    pub class_means: Vec<Vec<f64>>,
    /// `K x d x d` per-class feature covariances.
    pub class_covs: Vec<Vec<Vec<f64>>>,
}

fn default_true() -> bool {
    true
}

fn default_window() -> f64 {
    1.0
}

fn default_fs() -> f64 {
    1000.0
}

fn default_pre_onset() -> f64 {
    0.25
}

fn default_post() -> f64 {
    0.1
}

fn default_noise_sd() -> f64 {
    0.01
}

/// Full description of a synthetic dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub k_classes: usize,
    pub n_trials_per_class: usize,
    /// Feature-vector length per channel.
    pub dim: usize,
    pub mode: SynthMode,
    pub seed: u64,
    #[serde(default = "default_window")]
    pub window_s: f64,
    /// Raw-mode sampling rate.
    #[serde(default = "default_fs")]
    pub fs: f64,
    /// Raw-mode seconds of signal before stimulus onset.
    #[serde(default = "default_pre_onset")]
    pub pre_onset_s: f64,
    /// Raw-mode seconds of signal after the feature window.
    #[serde(default = "default_post")]
    pub post_s: f64,
    /// Raw-mode white-noise standard deviation.
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    pub channels: Vec<ChannelSpec>,
}

/// Feature-mode output: one series per channel plus trial labels.
#[derive(Debug, Clone)]
pub struct FeatureBundle {
    pub series: Vec<FeatureSeries>,
    pub labels: Vec<usize>,
}

/// Either raw trials or ready-made feature vectors, depending on the mode.
#[derive(Debug, Clone)]
pub enum SynthData {
    Trials(TrialSet),
    Features(FeatureBundle),
}

/// Monte Carlo estimate of the generating distribution's own accuracy.
#[derive(Debug, Clone, Copy)]
pub struct BayesEstimate {
    pub estimate: f64,
    /// 95% normal-approximation binomial interval.
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_mc: usize,
}

impl BayesEstimate {
    pub fn ci_half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }
}

impl SynthSpec {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: SynthSpec = serde_json::from_str(&text)
            .map_err(|e| Error::format(path, format!("spec parse failed: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}",
                self.k_classes
            )));
        }
        if self.n_trials_per_class < 2 {
            return Err(Error::Config(format!(
                "need at least 2 trials per class, got {}",
                self.n_trials_per_class
            )));
        }
        if self.dim == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        if self.channels.is_empty() {
            return Err(Error::Config("channel list is empty".into()));
        }
        if self.mode == SynthMode::Raw {
            if self.fs <= 0.0 || !self.fs.is_finite() {
                return Err(Error::Config(format!(
                    "fs must be positive, got {}",
                    self.fs
                )));
            }
            if self.window_s <= 0.0 || !self.window_s.is_finite() {
                return Err(Error::Config(format!(
                    "window must be positive, got {}",
                    self.window_s
                )));
            }
        }
        for ch in &self.channels {
            if ch.class_means.len() != self.k_classes || ch.class_covs.len() != self.k_classes {
                return Err(Error::Config(format!(
                    "channel {} must list parameters for {} classes",
                    ch.name, self.k_classes
                )));
            }
            for (class, (mean, cov)) in ch.class_means.iter().zip(&ch.class_covs).enumerate() {
                if mean.len() != self.dim {
                    return Err(Error::Config(format!(
                        "channel {} class {class} mean has length {}, expected {}",
                        ch.name,
                        mean.len(),
                        self.dim
                    )));
                }
                if cov.len() != self.dim || cov.iter().any(|row| row.len() != self.dim) {
                    return Err(Error::Config(format!(
                        "channel {} class {class} covariance is not {d}x{d}",
                        ch.name,
                        d = self.dim
                    )));
                }
                let m = cov_matrix(cov);
                if cholesky_lower(&m).is_none() {
                    return Err(Error::Config(format!(
                        "channel {} class {class} covariance is not positive definite",
                        ch.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_trials(&self) -> usize {
        self.k_classes * self.n_trials_per_class
    }

    /// Trials ordered class-major: trial `i` has class `i / n_trials_per_class`.
    pub fn labels(&self) -> Vec<usize> {
        (0..self.n_trials())
            .map(|i| i / self.n_trials_per_class)
            .collect()
    }
}

fn cov_matrix(cov: &[Vec<f64>]) -> DMatrix<f64> {
    let d = cov.len();
    DMatrix::from_fn(d, d, |r, c| cov[r][c])
}

/// Per-channel, per-class factors for sampling and density evaluation.
struct ChannelParams {
    means: Vec<DVector<f64>>,
    chols: Vec<DMatrix<f64>>,
}

fn channel_params(spec: &SynthSpec) -> Vec<ChannelParams> {
    spec.channels
        .iter()
        .map(|ch| ChannelParams {
            means: ch
                .class_means
                .iter()
                .map(|m| DVector::from_vec(m.clone()))
                .collect(),
            chols: ch
                .class_covs
                .iter()
                .map(|c| cholesky_lower(&cov_matrix(c)).expect("validated SPD"))
                .collect(),
        })
        .collect()
}

/// One multivariate-normal draw `mu + L z`.
fn draw_mvn(rng: &mut ChaCha8Rng, mean: &DVector<f64>, chol: &DMatrix<f64>) -> DVector<f64> {
    let d = mean.len();
    let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    mean + chol * z
}

/// Generates the dataset described by `spec` in its native representation.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    match spec.mode {
        SynthMode::Feature => Ok(SynthData::Features(generate_features(spec)?)),
        SynthMode::Raw => Ok(SynthData::Trials(generate_trialset(spec)?)),
    }
}

/// Feature-mode draws as f64 series (no storage quantization).
pub fn generate_features(spec: &SynthSpec) -> Result<FeatureBundle> {
    spec.validate()?;
    if spec.mode != SynthMode::Feature {
        return Err(Error::Config(
            "generate_features requires a feature-mode spec".into(),
        ));
    }
    let params = channel_params(spec);
    let n = spec.n_trials();
    let labels = spec.labels();
    let d = spec.dim;
    let mut values: Vec<Array2<f64>> = vec![Array2::zeros((n, d)); spec.channels.len()];
    for trial in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, trial as u64));
        let class = labels[trial];
        for (c, p) in params.iter().enumerate() {
            let x = draw_mvn(&mut rng, &p.means[class], &p.chols[class]);
            for j in 0..d {
                values[c][[trial, j]] = x[j];
            }
        }
    }
    let series = spec
        .channels
        .iter()
        .zip(values)
        .map(|(ch, v)| FeatureSeries {
            channel_name: ch.name.clone(),
            kind: FeatureKind::Direct,
            window_s: spec.window_s,
            feature_times_s: (0..d)
                .map(|i| (i + 1) as f64 * spec.window_s / d as f64)
                .collect(),
            values: v,
        })
        .collect();
    Ok(FeatureBundle { series, labels })
}

/// Generates a [`TrialSet`] for either mode. Feature mode packs the feature
/// vectors as the stored samples (`fs = dim / window_s`, onset at 0) so the
/// dataset can round-trip through the standard manifest format and be
/// consumed with the `direct` feature source.
pub fn generate_trialset(spec: &SynthSpec) -> Result<TrialSet> {
    spec.validate()?;
    match spec.mode {
        SynthMode::Feature => {
            let bundle = generate_features(spec)?;
            let n = spec.n_trials();
            let d = spec.dim;
            let mut data = Array3::<f32>::zeros((n, spec.channels.len(), d));
            for (c, series) in bundle.series.iter().enumerate() {
                for t in 0..n {
                    for j in 0..d {
                        data[[t, c, j]] = series.values[[t, j]] as f32;
                    }
                }
            }
            let names = spec.channels.iter().map(|c| c.name.clone()).collect();
            TrialSet::new(data, d as f64 / spec.window_s, bundle.labels, names, 0)
        }
        SynthMode::Raw => generate_raw(spec),
    }
}

fn generate_raw(spec: &SynthSpec) -> Result<TrialSet> {
    let d = feature_count(spec.window_s);
    if d != spec.dim {
        return Err(Error::Config(format!(
            "raw mode requires dim = {d} for a {} s window, got {}",
            spec.window_s, spec.dim
        )));
    }
    let fs = spec.fs;
    let pre = (spec.pre_onset_s * fs).round() as usize;
    let window = (spec.window_s * fs).round() as usize;
    let post = (spec.post_s * fs).round() as usize;
    let n_samples = pre + window + post;
    let n = spec.n_trials();
    let labels = spec.labels();
    let params = channel_params(spec);

    let mut data = Array3::<f32>::zeros((n, spec.channels.len(), n_samples));
    for trial in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, trial as u64));
        let class = labels[trial];
        for (c, (ch, p)) in spec.channels.iter().zip(&params).enumerate() {
            let targets = draw_mvn(&mut rng, &p.means[class], &p.chols[class]);
            let component = match ch.raw_target {
                RawTarget::Erp => erp_waveform(&targets, spec.window_s, fs, pre, n_samples),
                RawTarget::Hgp => hgp_waveform(&targets, spec.window_s, fs, pre, n_samples),
            };
            for s in 0..n_samples {
                let noise: f64 = rng.sample::<f64, _>(StandardNormal) * spec.noise_sd;
                data[[trial, c, s]] = (component[s] + noise) as f32;
            }
        }
    }
    let names = spec.channels.iter().map(|c| c.name.clone()).collect();
    TrialSet::new(data, fs, labels, names, pre)
}

/// Smooth low-frequency waveform passing through the target values at the
/// feature times (cosine interpolation from a zero onset baseline).
fn erp_waveform(
    targets: &DVector<f64>,
    window_s: f64,
    fs: f64,
    pre: usize,
    n_samples: usize,
) -> Vec<f64> {
    let d = targets.len();
    let mut knots_t = Vec::with_capacity(d + 1);
    let mut knots_v = Vec::with_capacity(d + 1);
    knots_t.push(0.0);
    knots_v.push(0.0);
    for i in 0..d {
        knots_t.push((i + 1) as f64 * window_s / d as f64);
        knots_v.push(targets[i]);
    }
    (0..n_samples)
        .map(|s| {
            let t = (s as f64 - pre as f64) / fs;
            cosine_interp(&knots_t, &knots_v, t)
        })
        .collect()
}

fn cosine_interp(ts: &[f64], vs: &[f64], t: f64) -> f64 {
    if t <= ts[0] {
        return vs[0];
    }
    let last = ts.len() - 1;
    if t >= ts[last] {
        return vs[last];
    }
    let k = ts.partition_point(|&x| x <= t) - 1;
    let u = (t - ts[k]) / (ts[k + 1] - ts[k]);
    let w = (1.0 - (std::f64::consts::PI * u).cos()) / 2.0;
    vs[k] + (vs[k + 1] - vs[k]) * w
}

/// 90 Hz carrier whose amplitude in feature window `i` makes the window's
/// mean power equal `exp(target_i)`.
fn hgp_waveform(
    targets: &DVector<f64>,
    window_s: f64,
    fs: f64,
    pre: usize,
    n_samples: usize,
) -> Vec<f64> {
    let d = targets.len();
    let carrier_hz = 90.0;
    (0..n_samples)
        .map(|s| {
            if s < pre {
                return 0.0;
            }
            let t = (s as f64 - pre as f64) / fs;
            let idx = ((t / window_s * d as f64).floor() as usize).min(d - 1);
            let amplitude = (2.0 * targets[idx].exp()).sqrt();
            amplitude * (2.0 * std::f64::consts::PI * carrier_hz * t).sin()
        })
        .collect()
}

/// Monte Carlo accuracy of the true generating densities used as the decision
/// rule (uniform class prior, matching the balanced trial counts). Requires a
/// feature-mode spec.
pub fn bayes_optimal_accuracy(spec: &SynthSpec, n_mc: usize) -> Result<BayesEstimate> {
    spec.validate()?;
    if spec.mode != SynthMode::Feature {
        return Err(Error::Config(
            "bayes_optimal_accuracy requires a feature-mode spec".into(),
        ));
    }
    if n_mc == 0 {
        return Err(Error::Config("n_mc must be positive".into()));
    }
    let params = channel_params(spec);
    let k = spec.k_classes;
    let d = spec.dim;
    let log_dets: Vec<Vec<f64>> = params
        .iter()
        .map(|p| {
            p.chols
                .iter()
                .map(|l| 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>())
                .collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 0xBA7E5));
    let mut correct = 0usize;
    for _ in 0..n_mc {
        let class = rng.gen_range(0..k);
        let mut scores = vec![0.0f64; k];
        for (c, p) in params.iter().enumerate() {
            let x = draw_mvn(&mut rng, &p.means[class], &p.chols[class]);
            for (hyp, score) in scores.iter_mut().enumerate() {
                let delta = &x - &p.means[hyp];
                let z = p.chols[hyp]
                    .solve_lower_triangular(&delta)
                    .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
                *score +=
                    -0.5 * (d as f64 * crate::gaussian::LN_2PI + log_dets[c][hyp] + z.dot(&z));
            }
        }
        if argmax_smallest(&scores) == class {
            correct += 1;
        }
    }
    let estimate = correct as f64 / n_mc as f64;
    let half = 1.96 * (estimate * (1.0 - estimate) / n_mc as f64).sqrt();
    Ok(BayesEstimate {
        estimate,
        ci_low: (estimate - half).max(0.0),
        ci_high: (estimate + half).min(1.0),
        n_mc,
    })
}

// ── Spec builders used across tests and examples ───────────────────────────

/// A channel whose class means are `mean_per_class` with identity covariance.
pub fn shifted_mean_channel(name: &str, dim: usize, mean_per_class: &[Vec<f64>]) -> ChannelSpec {
    let identity: Vec<Vec<f64>> = (0..dim)
        .map(|r| (0..dim).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
        .collect();
    let informative = mean_per_class.windows(2).any(|w| w[0] != w[1]);
    ChannelSpec {
        name: name.into(),
        informative,
        raw_target: RawTarget::Erp,
        class_means: mean_per_class.to_vec(),
        class_covs: vec![identity; mean_per_class.len()],
    }
}

/// A channel with identical standard-normal parameters for every class.
pub fn noise_channel(name: &str, dim: usize, k_classes: usize) -> ChannelSpec {
    let mut ch = shifted_mean_channel(name, dim, &vec![vec![0.0; dim]; k_classes]);
    ch.informative = false;
    ch
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_class_spec(n_per_class: usize, dim: usize, shift: f64, seed: u64) -> SynthSpec {
        let mean1: Vec<f64> = (0..dim).map(|i| if i < 2 { shift } else { 0.0 }).collect();
        SynthSpec {
            k_classes: 2,
            n_trials_per_class: n_per_class,
            dim,
            mode: SynthMode::Feature,
            seed,
            window_s: 1.0,
            fs: 1000.0,
            pre_onset_s: 0.25,
            post_s: 0.1,
            noise_sd: 0.01,
            channels: vec![shifted_mean_channel("ch0", dim, &[vec![0.0; dim], mean1])],
        }
    }

    #[test]
    fn feature_draws_match_targets_in_the_large_sample_limit() {
        let spec = two_class_spec(10_000, 2, 1.0, 99);
        let bundle = generate_features(&spec).unwrap();
        let series = &bundle.series[0];
        // class 0 rows are the first half
        let n = spec.n_trials_per_class;
        let mut mean = [0.0f64; 2];
        for t in 0..n {
            mean[0] += series.values[[t, 0]];
            mean[1] += series.values[[t, 1]];
        }
        mean[0] /= n as f64;
        mean[1] /= n as f64;
        assert!(mean[0].abs() < 0.05 && mean[1].abs() < 0.05, "{mean:?}");

        let mut cov = [[0.0f64; 2]; 2];
        for t in 0..n {
            let a = series.values[[t, 0]] - mean[0];
            let b = series.values[[t, 1]] - mean[1];
            cov[0][0] += a * a;
            cov[0][1] += a * b;
            cov[1][1] += b * b;
        }
        let denom = (n - 1) as f64;
        let frob = ((cov[0][0] / denom - 1.0).powi(2)
            + 2.0 * (cov[0][1] / denom).powi(2)
            + (cov[1][1] / denom - 1.0).powi(2))
        .sqrt();
        assert!(frob < 0.05, "Frobenius distance {frob}");
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = two_class_spec(20, 3, 1.0, 7);
        let a = generate_trialset(&spec).unwrap();
        let b = generate_trialset(&spec).unwrap();
        assert_eq!(a, b);
        let spec2 = two_class_spec(20, 3, 1.0, 8);
        let c = generate_trialset(&spec2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bayes_accuracy_indistinguishable_classes() {
        let spec = two_class_spec(10, 3, 0.0, 5);
        let est = bayes_optimal_accuracy(&spec, 20_000).unwrap();
        assert!(
            (est.estimate - 0.5).abs() <= est.ci_half_width() + 0.01,
            "{est:?}"
        );
    }

    #[test]
    fn bayes_accuracy_unit_gap_matches_gaussian_overlap() {
        // d = 1, means ±1, unit variance: accuracy = Phi(1)
        let spec = SynthSpec {
            k_classes: 2,
            n_trials_per_class: 10,
            dim: 1,
            mode: SynthMode::Feature,
            seed: 21,
            window_s: 1.0,
            fs: 1000.0,
            pre_onset_s: 0.25,
            post_s: 0.1,
            noise_sd: 0.01,
            channels: vec![shifted_mean_channel("ch0", 1, &[vec![-1.0], vec![1.0]])],
        };
        let est = bayes_optimal_accuracy(&spec, 100_000).unwrap();
        let phi_1 = 0.8413447460685429;
        assert!(
            (est.estimate - phi_1).abs() <= est.ci_half_width() + 0.005,
            "{est:?}"
        );
    }

    #[test]
    fn bayes_accuracy_separated_classes_saturates() {
        let spec = two_class_spec(10, 2, 20.0, 3);
        let est = bayes_optimal_accuracy(&spec, 20_000).unwrap();
        assert!(est.estimate >= 0.999, "{est:?}");
    }

    #[test]
    fn invalid_covariance_rejected() {
        let mut spec = two_class_spec(10, 2, 1.0, 1);
        spec.channels[0].class_covs[0][0][0] = -1.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn raw_mode_dimension_must_match_grid() {
        let mut spec = two_class_spec(5, 4, 1.0, 1);
        spec.mode = SynthMode::Raw;
        // 1 s window implies 15 features
        assert!(generate_trialset(&spec).is_err());
    }

    #[test]
    fn raw_mode_emits_valid_trialset() {
        let dim = feature_count(0.4);
        let mut spec = two_class_spec(3, dim, 1.0, 9);
        spec.mode = SynthMode::Raw;
        spec.window_s = 0.4;
        spec.fs = 500.0;
        let set = generate_trialset(&spec).unwrap();
        assert_eq!(set.n_trials(), 6);
        assert_eq!(set.fs, 500.0);
        assert_eq!(set.t0_index, 125);
        assert!(set.n_samples() > set.t0_index + 200);
    }
}
