//! Trial cleanup: demeaning, line-noise subtraction, decimation, bipolar
//! re-referencing.
//!
//! The 1-D functions operate on a single channel's samples; the `*_set`
//! variants apply them across a whole [`TrialSet`] and rebuild its metadata.

use crate::dsp::fir::FilterKernel;
use crate::error::{Error, Result};
use crate::trial_io::TrialSet;

/// Transition width for the narrow per-harmonic bands used in line-noise
/// subtraction.
const LINE_TRANSITION_HZ: f64 = 2.0;
/// Half-width of each subtracted harmonic band.
const LINE_HALF_BAND_HZ: f64 = 1.0;

/// Subtracts the signal mean from every sample.
pub fn demean(signal: &[f64]) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(Error::Data("cannot demean an empty signal".into()));
    }
    let mean = signal.iter().sum::<f64>() / signal.len() as f64;
    Ok(signal.iter().map(|v| v - mean).collect())
}

/// Removes the power-line tone and its harmonics up to `max_harmonic_hz`.
///
/// For each harmonic `k * line_hz` a narrow band (±1 Hz) of the input is
/// extracted with a zero-phase FIR bandpass and subtracted from the signal.
pub fn remove_line_noise(
    signal: &[f64],
    fs: f64,
    line_hz: f64,
    max_harmonic_hz: f64,
) -> Result<Vec<f64>> {
    if line_hz <= 0.0 || line_hz >= fs / 2.0 {
        return Err(Error::Config(format!(
            "line frequency {line_hz} Hz must lie in (0, {})",
            fs / 2.0
        )));
    }
    if fs <= 2.0 * max_harmonic_hz {
        return Err(Error::Config(format!(
            "sampling rate {fs} Hz too low to remove harmonics up to {max_harmonic_hz} Hz"
        )));
    }
    let mut out = signal.to_vec();
    let mut harmonic = line_hz;
    while harmonic <= max_harmonic_hz {
        let kernel = FilterKernel::bandpass(
            harmonic - LINE_HALF_BAND_HZ,
            harmonic + LINE_HALF_BAND_HZ,
            LINE_TRANSITION_HZ,
            fs,
        )?;
        let band = kernel.apply_zero_phase(signal);
        for (o, b) in out.iter_mut().zip(&band) {
            *o -= b;
        }
        harmonic += line_hz;
    }
    Ok(out)
}

/// Resamples `signal` from `fs_in` to `fs_out`.
///
/// An anti-alias lowpass at `0.45 * fs_out` is applied first (zero-phase),
/// then the filtered signal is sampled at the output grid by linear
/// interpolation. Output length is `floor(len * fs_out / fs_in)`. Equal rates
/// return the signal untouched.
pub fn decimate(signal: &[f64], fs_in: f64, fs_out: f64) -> Result<Vec<f64>> {
    if fs_out <= 0.0 {
        return Err(Error::Config(format!(
            "fs_out must be positive, got {fs_out}"
        )));
    }
    if fs_in < fs_out {
        return Err(Error::Config(format!(
            "cannot decimate upward: fs_in {fs_in} < fs_out {fs_out}"
        )));
    }
    if fs_in == fs_out {
        return Ok(signal.to_vec());
    }
    let kernel = FilterKernel::lowpass(0.45 * fs_out, 0.05 * fs_out, fs_in)?;
    let filtered = kernel.apply_zero_phase(signal);
    let out_len = (signal.len() as f64 * fs_out / fs_in + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        out.push(sample_linear(&filtered, i as f64 * fs_in / fs_out));
    }
    Ok(out)
}

/// Linear interpolation at a fractional index, clamped to the signal's ends.
pub(crate) fn sample_linear(signal: &[f64], pos: f64) -> f64 {
    let last = signal.len() - 1;
    if pos <= 0.0 {
        return signal[0];
    }
    let i0 = pos.floor() as usize;
    if i0 >= last {
        return signal[last];
    }
    let frac = pos - i0 as f64;
    signal[i0] + frac * (signal[i0 + 1] - signal[i0])
}

/// Re-references channels as anode minus cathode for every pair, producing
/// one output channel per pair named `"anode-cathode"`.
pub fn bipolar_rereference(set: &TrialSet, pairs: &[(usize, usize)]) -> Result<TrialSet> {
    if pairs.is_empty() {
        return Err(Error::Config("bipolar pair list is empty".into()));
    }
    let n_ch = set.n_channels();
    let mut seen = std::collections::BTreeSet::new();
    for &(a, b) in pairs {
        if a >= n_ch || b >= n_ch {
            return Err(Error::Config(format!(
                "bipolar pair ({a}, {b}) out of range for {n_ch} channels"
            )));
        }
        if a == b {
            return Err(Error::Config(format!(
                "bipolar pair ({a}, {b}) references a channel against itself"
            )));
        }
        if !seen.insert((a, b)) {
            return Err(Error::Config(format!("duplicate bipolar pair ({a}, {b})")));
        }
    }
    let (n_trials, _, n_samples) = set.data.dim();
    let mut data = ndarray::Array3::<f32>::zeros((n_trials, pairs.len(), n_samples));
    for t in 0..n_trials {
        for (j, &(a, b)) in pairs.iter().enumerate() {
            for s in 0..n_samples {
                data[[t, j, s]] = set.data[[t, a, s]] - set.data[[t, b, s]];
            }
        }
    }
    let names = pairs
        .iter()
        .map(|&(a, b)| format!("{}-{}", set.channel_names[a], set.channel_names[b]))
        .collect();
    TrialSet::new(data, set.fs, set.labels.clone(), names, set.t0_index)
}

/// Demeans every channel relative to the entire recording (all trials and
/// samples of that channel).
pub fn demean_set(set: &TrialSet) -> Result<TrialSet> {
    let (n_trials, n_ch, n_samples) = set.data.dim();
    let mut data = set.data.clone();
    for c in 0..n_ch {
        let mut acc = 0.0f64;
        for t in 0..n_trials {
            for s in 0..n_samples {
                acc += f64::from(set.data[[t, c, s]]);
            }
        }
        let mean = (acc / (n_trials * n_samples) as f64) as f32;
        for t in 0..n_trials {
            for s in 0..n_samples {
                data[[t, c, s]] -= mean;
            }
        }
    }
    TrialSet::new(
        data,
        set.fs,
        set.labels.clone(),
        set.channel_names.clone(),
        set.t0_index,
    )
}

/// Applies [`remove_line_noise`] to every trial and channel.
pub fn remove_line_noise_set(
    set: &TrialSet,
    line_hz: f64,
    max_harmonic_hz: f64,
) -> Result<TrialSet> {
    let (n_trials, n_ch, n_samples) = set.data.dim();
    let mut data = set.data.clone();
    for t in 0..n_trials {
        for c in 0..n_ch {
            let signal = set.channel_signal(t, c);
            let cleaned = remove_line_noise(&signal, set.fs, line_hz, max_harmonic_hz)?;
            for s in 0..n_samples {
                data[[t, c, s]] = cleaned[s] as f32;
            }
        }
    }
    TrialSet::new(
        data,
        set.fs,
        set.labels.clone(),
        set.channel_names.clone(),
        set.t0_index,
    )
}

/// Applies [`decimate`] to every trial and channel, rescaling the sampling
/// rate and onset index.
pub fn decimate_set(set: &TrialSet, fs_out: f64) -> Result<TrialSet> {
    if fs_out == set.fs {
        return Ok(set.clone());
    }
    let (n_trials, n_ch, n_samples) = set.data.dim();
    let out_len = (n_samples as f64 * fs_out / set.fs + 1e-9).floor() as usize;
    let mut data = ndarray::Array3::<f32>::zeros((n_trials, n_ch, out_len));
    for t in 0..n_trials {
        for c in 0..n_ch {
            let signal = set.channel_signal(t, c);
            let reduced = decimate(&signal, set.fs, fs_out)?;
            for s in 0..out_len {
                data[[t, c, s]] = reduced[s] as f32;
            }
        }
    }
    let t0 = (set.t0_index as f64 * fs_out / set.fs).floor() as usize;
    TrialSet::new(
        data,
        fs_out,
        set.labels.clone(),
        set.channel_names.clone(),
        t0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn demean_examples() {
        assert_eq!(demean(&[1.0, 2.0, 3.0]).unwrap(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(demean(&[4.5, 4.5, 4.5]).unwrap(), vec![0.0, 0.0, 0.0]);
        let zero_mean = vec![-1.0, 2.0, -1.0];
        assert_eq!(demean(&zero_mean).unwrap(), zero_mean);
        assert!(demean(&[]).is_err());
    }

    #[test]
    fn demean_mean_within_tolerance() {
        let signal: Vec<f64> = (0..977).map(|i| (i as f64 * 0.37).sin() + 11.0).collect();
        let out = demean(&signal).unwrap();
        let mean = out.iter().sum::<f64>() / out.len() as f64;
        assert!(mean.abs() < 1e-9 * 11.0);
    }

    #[test]
    fn line_noise_rejects_bad_rates() {
        let x = vec![0.0; 100];
        assert!(remove_line_noise(&x, 1000.0, 500.0, 200.0).is_err());
        assert!(remove_line_noise(&x, 300.0, 60.0, 200.0).is_err());
    }

    #[test]
    fn decimate_identity_and_errors() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(decimate(&x, 1000.0, 1000.0).unwrap(), x);
        assert!(decimate(&x, 1000.0, 0.0).is_err());
        assert!(decimate(&x, 1000.0, 2000.0).is_err());
    }

    #[test]
    fn decimate_halves_length() {
        let x = vec![0.5; 2000];
        let y = decimate(&x, 2000.0, 1000.0).unwrap();
        assert_eq!(y.len(), 1000);
    }

    fn two_channel_set(ch0: f32, ch1: f32) -> TrialSet {
        let mut data = Array3::<f32>::zeros((4, 2, 10));
        data.slice_mut(ndarray::s![.., 0, ..]).fill(ch0);
        data.slice_mut(ndarray::s![.., 1, ..]).fill(ch1);
        TrialSet::new(
            data,
            100.0,
            vec![0, 0, 1, 1],
            vec!["c0".into(), "c1".into()],
            0,
        )
        .unwrap()
    }

    #[test]
    fn bipolar_identical_channels_cancel() {
        let set = two_channel_set(2.5, 2.5);
        let out = bipolar_rereference(&set, &[(0, 1)]).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.0));
        assert_eq!(out.channel_names, vec!["c0-c1"]);
    }

    #[test]
    fn bipolar_constant_difference() {
        let set = two_channel_set(1.0, 0.0);
        let out = bipolar_rereference(&set, &[(0, 1)]).unwrap();
        assert!(out.data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn bipolar_chain_names_and_count() {
        let mut data = Array3::<f32>::zeros((4, 3, 10));
        for c in 0..3 {
            data.slice_mut(ndarray::s![.., c, ..]).fill(c as f32);
        }
        let set = TrialSet::new(
            data,
            100.0,
            vec![0, 0, 1, 1],
            vec!["c0".into(), "c1".into(), "c2".into()],
            0,
        )
        .unwrap();
        let out = bipolar_rereference(&set, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(out.n_channels(), 2);
        assert_eq!(out.channel_names, vec!["c0-c1", "c1-c2"]);
    }

    #[test]
    fn bipolar_invalid_pairs() {
        let set = two_channel_set(1.0, 0.0);
        assert!(bipolar_rereference(&set, &[(0, 2)]).is_err());
        assert!(bipolar_rereference(&set, &[(1, 1)]).is_err());
        assert!(bipolar_rereference(&set, &[(0, 1), (0, 1)]).is_err());
    }

    #[test]
    fn demean_set_zeroes_channel_means() {
        let mut data = Array3::<f32>::zeros((4, 2, 10));
        data.slice_mut(ndarray::s![.., 0, ..]).fill(5.0);
        data.slice_mut(ndarray::s![.., 1, ..]).fill(-3.0);
        let set = TrialSet::new(
            data,
            100.0,
            vec![0, 0, 1, 1],
            vec!["a".into(), "b".into()],
            0,
        )
        .unwrap();
        let out = demean_set(&set).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.0));
    }
}
