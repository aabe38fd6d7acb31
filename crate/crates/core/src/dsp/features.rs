//! Per-channel feature extraction.
//!
//! Two feature families are produced from the post-onset window of each
//! trial, both on the same 15-per-second grid so a channel's ERP and HGP
//! vectors always have equal length:
//!
//! * **ERP** — the signal is zero-phase lowpassed at 7 Hz and sampled by
//!   linear interpolation at `t_i = i / 15` s after onset (`i = 1..=d`).
//! * **HGP** — the signal is zero-phase bandpassed to 65–120 Hz, squared, and
//!   averaged over `d` equal non-overlapping windows (~67 ms each for a 1 s
//!   window); features are the natural log of each window's mean power,
//!   floored at a small constant so silent channels stay finite.

use std::io::Write;

use ndarray::Array2;

use crate::dsp::fir::FilterKernel;
use crate::dsp::preprocess::sample_linear;
use crate::error::{Error, Result};
use crate::trial_io::TrialSet;

/// Feature grid density: features per second of post-onset data.
pub const FEATURE_RATE_HZ: f64 = 15.0;

/// Floor applied to window power before the log transform (input units²).
pub const POWER_FLOOR: f64 = 1e-12;

const ERP_CUTOFF_HZ: f64 = 7.0;
const ERP_TRANSITION_HZ: f64 = 4.0;
const HGP_LO_HZ: f64 = 65.0;
const HGP_HI_HZ: f64 = 120.0;
const HGP_TRANSITION_HZ: f64 = 10.0;
/// Minimum sampling rate able to represent the high-gamma band.
pub const HGP_MIN_FS: f64 = 240.0;

/// Which extractor produced a feature vector.
///
/// `Direct` marks datasets whose stored samples already are feature values
/// (synthetic feature-mode data); no filtering is applied to those.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Erp,
    Hgp,
    Direct,
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FeatureKind::Erp => "erp",
            FeatureKind::Hgp => "hgp",
            FeatureKind::Direct => "direct",
        };
        f.write_str(s)
    }
}

/// Feature vectors for one channel and kind across all trials.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeries {
    pub channel_name: String,
    pub kind: FeatureKind,
    /// Seconds of post-onset data the features cover.
    pub window_s: f64,
    /// Center (HGP) or sample (ERP) time of each feature, strictly
    /// increasing, all in `(0, window_s]`.
    pub feature_times_s: Vec<f64>,
    /// `[n_trials x d]` feature values.
    pub values: Array2<f64>,
}

impl FeatureSeries {
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn n_trials(&self) -> usize {
        self.values.nrows()
    }

    /// The series restricted to its first `j` features (a cumulative
    /// post-onset window of `j / d` of the original length).
    pub fn truncated(&self, j: usize) -> Result<FeatureSeries> {
        let d = self.dim();
        if j == 0 || j > d {
            return Err(Error::Config(format!("horizon {j} out of range 1..={d}")));
        }
        Ok(FeatureSeries {
            channel_name: self.channel_name.clone(),
            kind: self.kind,
            window_s: self.window_s * j as f64 / d as f64,
            feature_times_s: self.feature_times_s[..j].to_vec(),
            values: self.values.slice(ndarray::s![.., ..j]).to_owned(),
        })
    }
}

/// Number of features for a post-onset window of `window_s` seconds.
pub fn feature_count(window_s: f64) -> usize {
    (FEATURE_RATE_HZ * window_s).round() as usize
}

fn check_window(signal_len: usize, fs: f64, window_s: f64) -> Result<usize> {
    if window_s <= 0.0 {
        return Err(Error::Config(format!(
            "window must be positive, got {window_s} s"
        )));
    }
    let d = feature_count(window_s);
    if d == 0 {
        return Err(Error::Config(format!(
            "window {window_s} s too short for the {FEATURE_RATE_HZ} Hz feature grid"
        )));
    }
    let needed = (window_s * fs).round() as usize;
    if signal_len < needed {
        return Err(Error::Data(format!(
            "window too long for trial: need {needed} post-onset samples, got {signal_len}"
        )));
    }
    Ok(d)
}

/// The 7 Hz lowpass used for ERP extraction at sampling rate `fs`.
pub fn erp_kernel(fs: f64) -> Result<FilterKernel> {
    FilterKernel::lowpass(ERP_CUTOFF_HZ, ERP_TRANSITION_HZ, fs)
}

/// The 65–120 Hz bandpass used for HGP extraction at sampling rate `fs`.
///
/// At rates just above the 240 Hz minimum the upper band edge would sit on
/// Nyquist, where a sinc cutoff degenerates; it is shaved to half a hertz
/// below instead, which only matters for `fs < 241`.
pub fn hgp_kernel(fs: f64) -> Result<FilterKernel> {
    let hi = HGP_HI_HZ.min(fs / 2.0 - 0.5);
    FilterKernel::bandpass(HGP_LO_HZ, hi, HGP_TRANSITION_HZ, fs)
}

/// ERP sample times for a window: `(i+1) * window / d`.
fn erp_times(window_s: f64, d: usize) -> Vec<f64> {
    (0..d)
        .map(|i| (i + 1) as f64 * window_s / d as f64)
        .collect()
}

/// HGP window centers: `(i + 0.5) * window / d`.
fn hgp_times(window_s: f64, d: usize) -> Vec<f64> {
    (0..d)
        .map(|i| (i as f64 + 0.5) * window_s / d as f64)
        .collect()
}

fn erp_with_kernel(
    kernel: &FilterKernel,
    signal: &[f64],
    fs: f64,
    window_s: f64,
) -> Result<Vec<f64>> {
    let d = check_window(signal.len(), fs, window_s)?;
    let filtered = kernel.apply_zero_phase(signal);
    Ok(erp_times(window_s, d)
        .iter()
        .map(|t| sample_linear(&filtered, t * fs))
        .collect())
}

fn hgp_with_kernel(
    kernel: &FilterKernel,
    signal: &[f64],
    fs: f64,
    window_s: f64,
) -> Result<Vec<f64>> {
    check_hgp_rate(fs)?;
    let d = check_window(signal.len(), fs, window_s)?;
    let filtered = kernel.apply_zero_phase(signal);
    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        let start = (i as f64 * window_s / d as f64 * fs).round() as usize;
        let stop = ((i + 1) as f64 * window_s / d as f64 * fs).round() as usize;
        if stop <= start {
            return Err(Error::Config(format!(
                "feature window {i} is empty at fs {fs} Hz"
            )));
        }
        let stop = stop.min(filtered.len());
        let mean_power =
            filtered[start..stop].iter().map(|v| v * v).sum::<f64>() / (stop - start) as f64;
        out.push(mean_power.max(POWER_FLOOR).ln());
    }
    Ok(out)
}

/// Low-frequency waveform features for one post-onset trial channel
/// (`signal[0]` is the onset sample).
pub fn extract_erp(signal: &[f64], fs: f64, window_s: f64) -> Result<Vec<f64>> {
    erp_with_kernel(&erp_kernel(fs)?, signal, fs, window_s)
}

/// Log high-gamma band power features for one post-onset trial channel.
pub fn extract_hgp(signal: &[f64], fs: f64, window_s: f64) -> Result<Vec<f64>> {
    check_hgp_rate(fs)?;
    hgp_with_kernel(&hgp_kernel(fs)?, signal, fs, window_s)
}

fn check_hgp_rate(fs: f64) -> Result<()> {
    if fs < HGP_MIN_FS {
        return Err(Error::Data(format!(
            "sampling rate {fs} Hz too low for high-gamma power (need >= {HGP_MIN_FS} Hz)"
        )));
    }
    Ok(())
}

/// Which extractors to run when featurizing a raw dataset.
#[derive(Debug, Clone, Copy)]
pub struct FeatureOptions {
    pub window_s: f64,
    pub use_erp: bool,
    pub use_hgp: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            window_s: 1.0,
            use_erp: true,
            use_hgp: true,
        }
    }
}

/// Extracts the enabled feature kinds for every channel of a raw dataset.
///
/// Candidates are ordered channel-major (channel 0 ERP, channel 0 HGP,
/// channel 1 ERP, ...), which fixes the tie-breaking order used by all
/// downstream selection.
pub fn featurize(set: &TrialSet, opts: &FeatureOptions) -> Result<Vec<FeatureSeries>> {
    if !opts.use_erp && !opts.use_hgp {
        return Err(Error::Config("no feature kinds enabled".into()));
    }
    let n_trials = set.n_trials();
    let d = feature_count(opts.window_s);
    let erp = if opts.use_erp {
        Some(erp_kernel(set.fs)?)
    } else {
        None
    };
    let hgp = if opts.use_hgp {
        check_hgp_rate(set.fs)?;
        Some(hgp_kernel(set.fs)?)
    } else {
        None
    };

    let mut out = Vec::new();
    for c in 0..set.n_channels() {
        let mut erp_values = Array2::zeros((n_trials, d));
        let mut hgp_values = Array2::zeros((n_trials, d));
        for t in 0..n_trials {
            let signal = set.post_onset_signal(t, c);
            if let Some(k) = &erp {
                let feats = erp_with_kernel(k, &signal, set.fs, opts.window_s)?;
                erp_values
                    .row_mut(t)
                    .assign(&ndarray::ArrayView1::from(&feats));
            }
            if let Some(k) = &hgp {
                let feats = hgp_with_kernel(k, &signal, set.fs, opts.window_s)?;
                hgp_values
                    .row_mut(t)
                    .assign(&ndarray::ArrayView1::from(&feats));
            }
        }
        if erp.is_some() {
            out.push(FeatureSeries {
                channel_name: set.channel_names[c].clone(),
                kind: FeatureKind::Erp,
                window_s: opts.window_s,
                feature_times_s: erp_times(opts.window_s, d),
                values: erp_values,
            });
        }
        if hgp.is_some() {
            out.push(FeatureSeries {
                channel_name: set.channel_names[c].clone(),
                kind: FeatureKind::Hgp,
                window_s: opts.window_s,
                feature_times_s: hgp_times(opts.window_s, d),
                values: hgp_values,
            });
        }
    }
    Ok(out)
}

/// Interprets the stored samples of each channel directly as feature values
/// (for datasets generated in feature mode).
pub fn direct_features(set: &TrialSet) -> Result<Vec<FeatureSeries>> {
    let (n_trials, n_ch, d) = set.data.dim();
    let window_s = d as f64 / set.fs;
    let mut out = Vec::with_capacity(n_ch);
    for c in 0..n_ch {
        let mut values = Array2::zeros((n_trials, d));
        for t in 0..n_trials {
            for s in 0..d {
                values[[t, s]] = f64::from(set.data[[t, c, s]]);
            }
        }
        out.push(FeatureSeries {
            channel_name: set.channel_names[c].clone(),
            kind: FeatureKind::Direct,
            window_s,
            feature_times_s: (0..d).map(|i| (i + 1) as f64 / set.fs).collect(),
            values,
        });
    }
    Ok(out)
}

/// Writes feature values as CSV with columns
/// `trial,channel,kind,feature_index,time_s,value`.
pub fn write_features_csv<W: Write>(writer: W, series: &[FeatureSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io_err = |e: csv::Error| Error::Data(format!("feature csv write failed: {e}"));
    w.write_record([
        "trial",
        "channel",
        "kind",
        "feature_index",
        "time_s",
        "value",
    ])
    .map_err(io_err)?;
    for s in series {
        for t in 0..s.n_trials() {
            for i in 0..s.dim() {
                w.write_record([
                    t.to_string(),
                    s.channel_name.clone(),
                    s.kind.to_string(),
                    i.to_string(),
                    format!("{:.6}", s.feature_times_s[i]),
                    format!("{}", s.values[[t, i]]),
                ])
                .map_err(io_err)?;
            }
        }
    }
    w.flush()
        .map_err(|e| Error::Data(format!("feature csv flush failed: {e}")))?;
    Ok(())
}
