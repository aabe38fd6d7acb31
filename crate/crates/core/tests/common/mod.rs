//! Oracles shared by the integration suites. Everything here is independent
//! of the library's computation paths: spectra are measured by direct DFT
//! sums, Gaussian densities by explicit matrix inversion, and intervals by
//! the normal approximation to the binomial.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Complex DFT coefficient magnitude of `signal` at `freq_hz`, normalized so
/// a unit-amplitude tone at that frequency yields ~1.
pub fn tone_amplitude(signal: &[f64], freq_hz: f64, fs: f64) -> f64 {
    let n = signal.len() as f64;
    let mut re = 0.0;
    let mut im = 0.0;
    for (i, v) in signal.iter().enumerate() {
        let phase = 2.0 * std::f64::consts::PI * freq_hz * i as f64 / fs;
        re += v * phase.cos();
        im -= v * phase.sin();
    }
    2.0 * (re * re + im * im).sqrt() / n
}

/// Mean squared value.
pub fn signal_power(signal: &[f64]) -> f64 {
    signal.iter().map(|v| v * v).sum::<f64>() / signal.len() as f64
}

/// Transfer-function magnitude of an impulse response at `freq_hz`
/// (unnormalized DFT sum).
pub fn frequency_response(response: &[f64], freq_hz: f64, fs: f64) -> f64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (i, v) in response.iter().enumerate() {
        let phase = 2.0 * std::f64::consts::PI * freq_hz * i as f64 / fs;
        re += v * phase.cos();
        im -= v * phase.sin();
    }
    (re * re + im * im).sqrt()
}

pub fn tone(freq_hz: f64, fs: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (2.0 * std::f64::consts::PI * freq_hz * i as f64 / fs).sin())
        .collect()
}

/// Half-width of a z-level binomial interval around `p` with `n` draws.
pub fn binomial_half_width(p: f64, n: usize, z: f64) -> f64 {
    z * (p * (1.0 - p) / n as f64).sqrt()
}

/// Explicit inverse and determinant by Gauss-Jordan elimination with partial
/// pivoting. Intended for d <= 5 oracle checks.
pub fn invert_dense(matrix: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let d = matrix.len();
    let mut aug: Vec<Vec<f64>> = matrix
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..d).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    let mut det = 1.0;
    for col in 0..d {
        let pivot_row = (col..d)
            .max_by(|&a, &b| aug[a][col].abs().partial_cmp(&aug[b][col].abs()).unwrap())
            .unwrap();
        if pivot_row != col {
            aug.swap(pivot_row, col);
            det = -det;
        }
        let pivot = aug[col][col];
        det *= pivot;
        for v in aug[col].iter_mut() {
            *v /= pivot;
        }
        let pivot_row: Vec<f64> = aug[col].clone();
        for (row, values) in aug.iter_mut().enumerate() {
            if row != col {
                let factor = values[col];
                for (v, p) in values.iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
            }
        }
    }
    let inverse = aug.iter().map(|r| r[d..].to_vec()).collect();
    (inverse, det)
}

/// Multivariate normal log density via the dense inverse and determinant.
pub fn dense_log_density(x: &[f64], mean: &[f64], cov: &[Vec<f64>]) -> f64 {
    let d = x.len();
    let (inv, det) = invert_dense(cov);
    let delta: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    let mut quad = 0.0;
    for i in 0..d {
        for j in 0..d {
            quad += delta[i] * inv[i][j] * delta[j];
        }
    }
    -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + det.ln() + quad)
}

/// Random symmetric positive-definite matrix (A^T A plus a diagonal bump).
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> Vec<Vec<f64>> {
    let a: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            cov[i][j] = a.iter().map(|row| row[i] * row[j]).sum();
        }
    }
    let bump = rng.gen_range(0.3..1.0);
    for (i, row) in cov.iter_mut().enumerate() {
        row[i] += bump;
    }
    cov
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
