//! On-disk dataset and model formats.
//!
//! A dataset is a `manifest.json` describing shape and labels plus a sibling
//! binary blob of raw little-endian `f32` samples in `[trial][channel][sample]`
//! order. Fitted ensembles are stored as a single JSON document whose float
//! arrays are base64-embedded little-endian `f64` bytes, so a loaded model
//! reproduces its predictions bit-for-bit.

use std::fs;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use nalgebra::{DMatrix, DVector};
use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::dsp::FeatureKind;
use crate::ensemble::{CombinationRule, EnsembleModel, TraceEntry};
use crate::error::{Error, Result};
use crate::gaussian::{cholesky_lower, ChannelClassifier, ClassGaussian, GaussianClassModel};

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const MODEL_FORMAT_VERSION: u32 = 1;
const DTYPE: &str = "f32le";

/// A labeled multi-channel, multi-trial recording.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    /// `[n_trials x n_channels x n_samples]` samples.
    pub data: Array3<f32>,
    /// Sampling rate in Hz.
    pub fs: f64,
    /// Class per trial, in `{0..K-1}`.
    pub labels: Vec<usize>,
    pub channel_names: Vec<String>,
    /// Sample index of stimulus onset within each trial.
    pub t0_index: usize,
}

impl TrialSet {
    /// Validates every invariant and constructs the set. Violations are
    /// reported with a diagnostic naming the broken invariant.
    pub fn new(
        data: Array3<f32>,
        fs: f64,
        labels: Vec<usize>,
        channel_names: Vec<String>,
        t0_index: usize,
    ) -> Result<Self> {
        let (n_trials, n_channels, n_samples) = data.dim();
        if n_trials == 0 || n_channels == 0 || n_samples == 0 {
            return Err(Error::Data("empty dataset".into()));
        }
        if labels.len() != n_trials {
            return Err(Error::Data(format!(
                "label count mismatch: {} labels for {n_trials} trials",
                labels.len()
            )));
        }
        if channel_names.len() != n_channels {
            return Err(Error::Data(format!(
                "channel name count mismatch: {} names for {n_channels} channels",
                channel_names.len()
            )));
        }
        if fs <= 0.0 || !fs.is_finite() {
            return Err(Error::Data(format!(
                "sampling rate must be positive, got {fs}"
            )));
        }
        if t0_index >= n_samples {
            return Err(Error::Data(format!(
                "onset index {t0_index} out of range for {n_samples} samples"
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite sample in dataset".into()));
        }
        let k = labels.iter().max().unwrap() + 1;
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        for (class, &count) in counts.iter().enumerate() {
            if count < 2 {
                return Err(Error::Data(format!(
                    "insufficient trials per class: class {class} has {count}"
                )));
            }
        }
        Ok(TrialSet {
            data,
            fs,
            labels,
            channel_names,
            t0_index,
        })
    }

    pub fn n_trials(&self) -> usize {
        self.data.dim().0
    }

    pub fn n_channels(&self) -> usize {
        self.data.dim().1
    }

    pub fn n_samples(&self) -> usize {
        self.data.dim().2
    }

    pub fn k_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// One trial channel as f64.
    pub fn channel_signal(&self, trial: usize, channel: usize) -> Vec<f64> {
        (0..self.n_samples())
            .map(|s| f64::from(self.data[[trial, channel, s]]))
            .collect()
    }

    /// One trial channel from onset onward, as f64.
    pub fn post_onset_signal(&self, trial: usize, channel: usize) -> Vec<f64> {
        (self.t0_index..self.n_samples())
            .map(|s| f64::from(self.data[[trial, channel, s]]))
            .collect()
    }
}

/// The `manifest.json` schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    /// Blob path relative to the manifest's directory.
    pub data_file: String,
    pub dtype: String,
    /// `[n_trials, n_channels, n_samples]`.
    pub dims: [usize; 3],
    pub fs: f64,
    pub labels: Vec<usize>,
    pub channel_names: Vec<String>,
    pub t0_index: usize,
}

/// Writes `manifest.json` + `data.f32` under `dir` and returns the manifest
/// path. Round-trips bit-exactly through [`load_dataset`].
pub fn save_dataset(set: &TrialSet, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let blob_path = dir.join("data.f32");
    let mut bytes = Vec::with_capacity(set.data.len() * 4);
    for v in set.data.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&blob_path, &bytes).map_err(|e| Error::io(&blob_path, e))?;

    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        data_file: "data.f32".into(),
        dtype: DTYPE.into(),
        dims: [set.n_trials(), set.n_channels(), set.n_samples()],
        fs: set.fs,
        labels: set.labels.clone(),
        channel_names: set.channel_names.clone(),
        t0_index: set.t0_index,
    };
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::format(&manifest_path, format!("manifest encode failed: {e}")))?;
    fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

/// Loads a dataset from its manifest, validating every [`TrialSet`]
/// invariant and the blob size against the declared dimensions.
pub fn load_dataset(manifest_path: &Path) -> Result<TrialSet> {
    if !manifest_path.exists() {
        return Err(Error::format(manifest_path, "manifest not found"));
    }
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| Error::format(manifest_path, format!("manifest parse failed: {e}")))?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::format(
            manifest_path,
            format!(
                "unsupported version {} (reader supports {DATASET_FORMAT_VERSION})",
                manifest.format_version
            ),
        ));
    }
    if manifest.dtype != DTYPE {
        return Err(Error::format(
            manifest_path,
            format!(
                "unsupported dtype {:?} (expected {DTYPE:?})",
                manifest.dtype
            ),
        ));
    }
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let blob_path = dir.join(&manifest.data_file);
    let bytes = fs::read(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
    let [n_trials, n_channels, n_samples] = manifest.dims;
    let expected = n_trials
        .checked_mul(n_channels)
        .and_then(|v| v.checked_mul(n_samples))
        .ok_or_else(|| Error::Data(format!("dims {:?} overflow", manifest.dims)))?;
    if bytes.len() != expected * 4 {
        return Err(Error::Data(format!(
            "size mismatch: dims {:?} imply {expected} elements, blob has {}",
            manifest.dims,
            bytes.len() / 4
        )));
    }
    let samples: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let data = Array3::from_shape_vec((n_trials, n_channels, n_samples), samples)
        .map_err(|e| Error::Data(format!("blob reshape failed: {e}")))?;
    TrialSet::new(
        data,
        manifest.fs,
        manifest.labels,
        manifest.channel_names,
        manifest.t0_index,
    )
}

// ── Model files ────────────────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    rule: CombinationRule,
    members: Vec<MemberRecord>,
    selection_trace: Vec<TraceEntry>,
}

#[derive(Serialize, Deserialize)]
struct MemberRecord {
    channel_name: String,
    feature_kind: FeatureKind,
    dim: usize,
    d_minimal: usize,
    shrinkage: f64,
    /// base64 f64le, length `dim`
    cv_accuracy_curve: String,
    /// base64 f64le, length K
    log_prior: String,
    classes: Vec<ClassRecord>,
}

#[derive(Serialize, Deserialize)]
struct ClassRecord {
    /// base64 f64le, length `dim`
    mean: String,
    /// base64 f64le, row-major `dim x dim`
    cov: String,
    jitter: f64,
}

fn encode_f64s(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    BASE64.encode(bytes)
}

fn decode_f64s(text: &str, expected_len: usize) -> std::result::Result<Vec<f64>, String> {
    let bytes = BASE64
        .decode(text)
        .map_err(|e| format!("bad base64 payload: {e}"))?;
    if bytes.len() != expected_len * 8 {
        return Err(format!(
            "float array has {} bytes, expected {}",
            bytes.len(),
            expected_len * 8
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Serializes a fitted ensemble to a single JSON document.
pub fn save_model(model: &EnsembleModel, path: &Path) -> Result<()> {
    let members = model
        .members
        .iter()
        .map(|m| {
            let d = m.model.dim;
            MemberRecord {
                channel_name: m.channel_name.clone(),
                feature_kind: m.feature_kind,
                dim: d,
                d_minimal: m.d_minimal,
                shrinkage: m.model.shrinkage,
                cv_accuracy_curve: encode_f64s(&m.cv_accuracy_curve),
                log_prior: encode_f64s(&m.model.log_prior),
                classes: m
                    .model
                    .classes
                    .iter()
                    .map(|c| ClassRecord {
                        mean: encode_f64s(c.mean.as_slice()),
                        cov: encode_f64s(&row_major(&c.cov)),
                        jitter: c.jitter,
                    })
                    .collect(),
            }
        })
        .collect();
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        rule: model.rule,
        members,
        selection_trace: model.selection_trace.clone(),
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::format(path, format!("model encode failed: {e}")))?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

/// Loads an ensemble saved by [`save_model`]; the reconstructed model
/// predicts bit-identically to the one that was saved.
pub fn load_model(path: &Path) -> Result<EnsembleModel> {
    if !path.exists() {
        return Err(Error::format(path, "model file not found"));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| Error::format(path, format!("corrupt model file: {e}")))?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::format(
            path,
            format!(
                "unsupported version {} (reader supports {MODEL_FORMAT_VERSION})",
                file.format_version
            ),
        ));
    }
    if file.members.is_empty() {
        return Err(Error::format(path, "corrupt model file: no members"));
    }
    let corrupt = |reason: String| Error::format(path, format!("corrupt model file: {reason}"));
    let members = file
        .members
        .into_iter()
        .map(|m| {
            let d = m.dim;
            let curve = decode_f64s(&m.cv_accuracy_curve, d).map_err(corrupt)?;
            let k = m.classes.len();
            if k < 2 {
                return Err(corrupt(format!(
                    "member {} has {k} classes",
                    m.channel_name
                )));
            }
            let log_prior = decode_f64s(&m.log_prior, k).map_err(corrupt)?;
            let classes = m
                .classes
                .iter()
                .map(|c| {
                    let mean = DVector::from_vec(decode_f64s(&c.mean, d).map_err(corrupt)?);
                    let cov_values = decode_f64s(&c.cov, d * d).map_err(corrupt)?;
                    let cov = DMatrix::from_row_slice(d, d, &cov_values);
                    let chol_lower = cholesky_lower(&cov).ok_or_else(|| {
                        corrupt("stored covariance is not positive definite".into())
                    })?;
                    Ok(ClassGaussian {
                        mean,
                        cov,
                        chol_lower,
                        jitter: c.jitter,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let model = GaussianClassModel {
                classes,
                log_prior,
                dim: d,
                shrinkage: m.shrinkage,
            };
            if m.d_minimal == 0 || m.d_minimal > d {
                return Err(corrupt(format!(
                    "member {} has horizon {} outside 1..={d}",
                    m.channel_name, m.d_minimal
                )));
            }
            Ok(ChannelClassifier {
                model,
                channel_name: m.channel_name,
                feature_kind: m.feature_kind,
                d_minimal: m.d_minimal,
                cv_accuracy_curve: curve,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut identities = std::collections::BTreeSet::new();
    for m in &members {
        if !identities.insert((m.channel_name.clone(), m.feature_kind.to_string())) {
            return Err(corrupt(format!(
                "duplicate member ({}, {})",
                m.channel_name, m.feature_kind
            )));
        }
    }
    if file
        .selection_trace
        .windows(2)
        .any(|w| w[1].cv_accuracy < w[0].cv_accuracy)
    {
        return Err(corrupt("selection trace accuracies decrease".into()));
    }
    Ok(EnsembleModel {
        members,
        rule: file.rule,
        selection_trace: file.selection_trace,
    })
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use tempfile::tempdir;

    fn small_set() -> TrialSet {
        let mut data = Array3::<f32>::zeros((4, 2, 100));
        for (i, v) in data.iter_mut().enumerate() {
            *v = (i as f32 * 0.1).sin() * 0.37 + 0.01;
        }
        TrialSet::new(
            data,
            1000.0,
            vec![0, 0, 1, 1],
            vec!["LTP02".into(), "LTP03".into()],
            10,
        )
        .unwrap()
    }

    #[test]
    fn dataset_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let set = small_set();
        let manifest = save_dataset(&set, dir.path()).unwrap();
        let loaded = load_dataset(&manifest).unwrap();
        assert_eq!(loaded, set);
        for (a, b) in loaded.data.iter().zip(set.data.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn manifest_example_dimensions() {
        let dir = tempdir().unwrap();
        let manifest = save_dataset(&small_set(), dir.path()).unwrap();
        let set = load_dataset(&manifest).unwrap();
        assert_eq!(set.n_trials(), 4);
        assert_eq!(set.n_channels(), 2);
        assert_eq!(set.n_samples(), 100);
    }

    #[test]
    fn missing_manifest_reported() {
        let err = load_dataset(Path::new("/nonexistent/manifest.json")).unwrap_err();
        assert!(err.to_string().contains("manifest not found"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn blob_size_mismatch_detected() {
        let dir = tempdir().unwrap();
        let manifest = save_dataset(&small_set(), dir.path()).unwrap();
        // drop the final sample: 799 elements for dims [4, 2, 100]
        let blob = dir.path().join("data.f32");
        let bytes = fs::read(&blob).unwrap();
        fs::write(&blob, &bytes[..bytes.len() - 4]).unwrap();
        let err = load_dataset(&manifest).unwrap_err();
        assert!(err.to_string().contains("size mismatch"), "{err}");
    }

    #[test]
    fn class_with_single_trial_rejected() {
        let data = Array3::<f32>::zeros((4, 1, 10));
        let err = TrialSet::new(data, 100.0, vec![0, 0, 0, 1], vec!["a".into()], 0).unwrap_err();
        assert!(err.to_string().contains("insufficient trials per class"));
    }

    #[test]
    fn absent_middle_class_rejected() {
        let data = Array3::<f32>::zeros((4, 1, 10));
        let err = TrialSet::new(data, 100.0, vec![0, 0, 2, 2], vec!["a".into()], 0).unwrap_err();
        assert!(err.to_string().contains("class 1 has 0"));
    }

    #[test]
    fn empty_dataset_rejected() {
        let data = Array3::<f32>::zeros((0, 1, 10));
        let err = TrialSet::new(data, 100.0, vec![], vec!["a".into()], 0).unwrap_err();
        assert!(err.to_string().contains("empty dataset"));
    }

    #[test]
    fn non_finite_sample_rejected() {
        let mut data = Array3::<f32>::zeros((4, 1, 10));
        data[[2, 0, 3]] = f32::NAN;
        let err = TrialSet::new(data, 100.0, vec![0, 0, 1, 1], vec!["a".into()], 0).unwrap_err();
        assert!(err.to_string().contains("non-finite sample"));
    }

    #[test]
    fn onset_out_of_range_rejected() {
        let data = Array3::<f32>::zeros((4, 1, 10));
        let err = TrialSet::new(data, 100.0, vec![0, 0, 1, 1], vec!["a".into()], 10).unwrap_err();
        assert!(err.to_string().contains("onset index"));
    }

    #[test]
    fn future_dataset_version_rejected() {
        let dir = tempdir().unwrap();
        let manifest = save_dataset(&small_set(), dir.path()).unwrap();
        let text = fs::read_to_string(&manifest).unwrap();
        fs::write(
            &manifest,
            text.replace("\"format_version\": 1", "\"format_version\": 9"),
        )
        .unwrap();
        let err = load_dataset(&manifest).unwrap_err();
        assert!(err.to_string().contains("unsupported version"));
    }
}
