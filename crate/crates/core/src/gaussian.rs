//! Single-channel Bayesian time-series classifier.
//!
//! Each channel's feature vector is modeled as a multivariate normal per
//! class. Classification compares unnormalized log posteriors
//! `ln p(x | class) + ln p(class)`; because the feature sequence is ordered in
//! time, truncating it to its first `j` entries is a marginalization of the
//! joint normal, which lets the classifier be evaluated at every observation
//! horizon and pick the shortest one that maximizes cross-validated accuracy.
//!
//! All likelihood arithmetic stays in the log domain, and every argmax breaks
//! ties toward the smallest index so repeated runs are bit-reproducible.

use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::eval::stratified_kfold;

pub(crate) const LN_2PI: f64 = 1.837877066409345483560659472811;

/// How class priors p(I) are set when fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorMode {
    /// Class frequencies observed in the training data.
    Empirical,
    /// 1/K for every class.
    Uniform,
}

/// Per-class Gaussian parameters with a cached lower Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassGaussian {
    pub mean: DVector<f64>,
    /// Regularized covariance, including any jitter that was required.
    pub cov: DMatrix<f64>,
    /// Lower-triangular factor of `cov`.
    pub chol_lower: DMatrix<f64>,
    /// Diagonal loading that was added to make the factorization succeed
    /// (zero when none was needed).
    pub jitter: f64,
}

impl ClassGaussian {
    /// Builds a class Gaussian from explicit parameters. The covariance must
    /// already be symmetric positive definite; no jitter is applied.
    pub fn from_params(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if mean.len() != cov.nrows() || !cov.is_square() {
            return Err(Error::Config(format!(
                "dimension mismatch: mean length {} vs covariance {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        let chol_lower = cholesky_lower(&cov)
            .ok_or_else(|| Error::Numerical("covariance is not positive definite".into()))?;
        Ok(ClassGaussian {
            mean,
            cov,
            chol_lower,
            jitter: 0.0,
        })
    }

    /// Log density ln p(x | this class).
    ///
    /// Uses the cached factor: log-determinant from the factor diagonal and
    /// the quadratic form through one triangular solve.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let d = self.mean.len();
        if x.len() != d {
            return Err(Error::Config(format!(
                "dimension mismatch: input has {} features, model expects {d}",
                x.len()
            )));
        }
        let mut delta = DVector::from_column_slice(x);
        delta -= &self.mean;
        let z = self
            .chol_lower
            .solve_lower_triangular(&delta)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let quad = z.dot(&z);
        let log_det = 2.0
            * self
                .chol_lower
                .diagonal()
                .iter()
                .map(|v| v.ln())
                .sum::<f64>();
        Ok(-0.5 * (d as f64 * LN_2PI + log_det + quad))
    }

    fn marginal(&self, j: usize) -> Result<ClassGaussian> {
        let mean = DVector::from_fn(j, |i, _| self.mean[i]);
        let cov = DMatrix::from_fn(j, j, |r, c| self.cov[(r, c)]);
        let (cov, chol_lower, jitter) = regularized_cholesky(cov)?;
        Ok(ClassGaussian {
            mean,
            cov,
            chol_lower,
            jitter,
        })
    }
}

/// A K-class quadratic discriminant over a fixed-length feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianClassModel {
    pub classes: Vec<ClassGaussian>,
    /// ln p(I) per class; exp sums to 1.
    pub log_prior: Vec<f64>,
    pub dim: usize,
    /// Shrinkage weight used when the model was fitted.
    pub shrinkage: f64,
}

/// Mean, regularized covariance, and factor for one class's sample block.
///
/// The covariance is the unbiased sample estimate blended with a scaled
/// identity target, `(1 - lambda) S + lambda (tr S / d) I`, then diagonally
/// loaded by a doubling jitter ladder if the factorization fails.
pub fn fit_class_gaussian(samples: ArrayView2<'_, f64>, shrinkage: f64) -> Result<ClassGaussian> {
    let n = samples.nrows();
    let d = samples.ncols();
    if n < 2 {
        return Err(Error::Data(format!(
            "insufficient trials per class: need at least 2 samples to fit a covariance, got {n}"
        )));
    }
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(Error::Config(format!(
            "shrinkage must lie in [0, 1], got {shrinkage}"
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite sample in class data".into()));
    }

    let mut mean = DVector::zeros(d);
    for c in 0..d {
        let mut acc = 0.0;
        for r in 0..n {
            acc += samples[[r, c]];
        }
        mean[c] = acc / n as f64;
    }

    // Unbiased sample covariance, accumulated entrywise so that the top-left
    // block of a d-dimensional fit is bit-identical to a direct fit on the
    // first columns (the marginalization/refit identity at shrinkage 0).
    let mut sample_cov = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let mut acc = 0.0;
            for r in 0..n {
                acc += (samples[[r, a]] - mean[a]) * (samples[[r, b]] - mean[b]);
            }
            let v = acc / (n - 1) as f64;
            sample_cov[(a, b)] = v;
            sample_cov[(b, a)] = v;
        }
    }

    let trace_mean = sample_cov.trace() / d as f64;
    let mut cov = sample_cov * (1.0 - shrinkage);
    for i in 0..d {
        cov[(i, i)] += shrinkage * trace_mean;
    }

    let (cov, chol_lower, jitter) = regularized_cholesky(cov)?;
    Ok(ClassGaussian {
        mean,
        cov,
        chol_lower,
        jitter,
    })
}

/// Factorizes `cov`, repairing near-singular input by adding `eps * I` with
/// `eps` doubling from `1e-8 * (tr/d)` (or `1e-8` for a zero-trace matrix)
/// for at most 10 doublings.
fn regularized_cholesky(cov: DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>, f64)> {
    let d = cov.nrows();
    if let Some(l) = cholesky_lower(&cov) {
        return Ok((cov, l, 0.0));
    }
    let trace_mean = cov.trace() / d as f64;
    let base = 1e-8 * if trace_mean > 0.0 { trace_mean } else { 1.0 };
    let mut eps = base;
    for _ in 0..=10 {
        let mut candidate = cov.clone();
        for i in 0..d {
            candidate[(i, i)] += eps;
        }
        if let Some(l) = cholesky_lower(&candidate) {
            return Ok((candidate, l, eps));
        }
        eps *= 2.0;
    }
    Err(Error::Numerical(format!(
        "covariance not positive definite after jitter ladder (final eps {eps:e})"
    )))
}

/// Lower Cholesky factor of `cov`, or `None` when it is not strictly
/// positive definite.
pub(crate) fn cholesky_lower(cov: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let l = Cholesky::new(cov.clone())?.unpack();
    // a factor with non-positive or non-finite pivots would poison log-dets
    if l.diagonal().iter().all(|&v| v.is_finite() && v > 0.0) {
        Some(l)
    } else {
        None
    }
}

impl GaussianClassModel {
    /// Fits one Gaussian per class from `features` (rows = trials) and
    /// `labels` in `{0..K-1}`. Every class must contribute at least 2 trials.
    pub fn fit(
        features: ArrayView2<'_, f64>,
        labels: &[usize],
        shrinkage: f64,
        priors: PriorMode,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Data(format!(
                "length mismatch: {} feature rows vs {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::Data("cannot fit a model on an empty dataset".into()));
        }
        let k = labels.iter().max().unwrap() + 1;
        let d = features.ncols();

        let mut classes = Vec::with_capacity(k);
        let mut counts = vec![0usize; k];
        for &l in labels {
            counts[l] += 1;
        }
        for (class, &count) in counts.iter().enumerate() {
            if count < 2 {
                return Err(Error::Data(format!(
                    "insufficient trials per class: class {class} has {count}"
                )));
            }
            let rows: Vec<usize> = labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == class)
                .map(|(i, _)| i)
                .collect();
            let block = features.select(ndarray::Axis(0), &rows);
            classes.push(fit_class_gaussian(block.view(), shrinkage)?);
        }

        let n = labels.len() as f64;
        let log_prior = match priors {
            PriorMode::Empirical => counts.iter().map(|&c| (c as f64 / n).ln()).collect(),
            PriorMode::Uniform => vec![-(k as f64).ln(); k],
        };

        Ok(GaussianClassModel {
            classes,
            log_prior,
            dim: d,
            shrinkage,
        })
    }

    pub fn k_classes(&self) -> usize {
        self.classes.len()
    }

    /// ln p(x | I) for class `class`.
    pub fn log_density(&self, x: &[f64], class: usize) -> Result<f64> {
        self.classes
            .get(class)
            .ok_or_else(|| Error::Config(format!("class index {class} out of range")))?
            .log_density(x)
    }

    /// ln p(x | I) for every class (no priors applied).
    pub fn log_likelihoods(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.classes.iter().map(|c| c.log_density(x)).collect()
    }

    /// Unnormalized log posterior per class: ln p(x | I) + ln p(I).
    pub fn posterior_log_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut scores = self.log_likelihoods(x)?;
        for (s, lp) in scores.iter_mut().zip(&self.log_prior) {
            *s += lp;
        }
        Ok(scores)
    }

    /// Class with the highest posterior score; exact ties go to the smallest
    /// class index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax_smallest(&self.posterior_log_scores(x)?))
    }

    /// Restriction of the model to the first `j` features. Any marginal of a
    /// multivariate normal is again normal, so this just extracts the leading
    /// mean entries and covariance block and refactorizes.
    pub fn marginalize(&self, j: usize) -> Result<GaussianClassModel> {
        if j == 0 || j > self.dim {
            return Err(Error::Config(format!(
                "horizon {j} out of range 1..={}",
                self.dim
            )));
        }
        let classes = self
            .classes
            .iter()
            .map(|c| c.marginal(j))
            .collect::<Result<Vec<_>>>()?;
        Ok(GaussianClassModel {
            classes,
            log_prior: self.log_prior.clone(),
            dim: j,
            shrinkage: self.shrinkage,
        })
    }
}

/// Index of the largest value; ties resolve to the smallest index.
pub fn argmax_smallest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A fitted single-channel classifier bound to its channel + feature identity.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelClassifier {
    pub model: GaussianClassModel,
    pub channel_name: String,
    pub feature_kind: crate::dsp::FeatureKind,
    /// Shortest horizon maximizing the cross-validated accuracy curve.
    pub d_minimal: usize,
    /// Mean held-out accuracy at every horizon 1..=d.
    pub cv_accuracy_curve: Vec<f64>,
}

impl ChannelClassifier {
    /// Builds the classifier, deriving `d_minimal` from the curve so the
    /// argmax invariant holds by construction.
    pub fn new(
        model: GaussianClassModel,
        channel_name: impl Into<String>,
        feature_kind: crate::dsp::FeatureKind,
        cv_accuracy_curve: Vec<f64>,
    ) -> Result<Self> {
        if cv_accuracy_curve.len() != model.dim {
            return Err(Error::Config(format!(
                "accuracy curve length {} does not match model dimension {}",
                cv_accuracy_curve.len(),
                model.dim
            )));
        }
        if cv_accuracy_curve.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Data("accuracy curve value outside [0, 1]".into()));
        }
        let d_minimal = argmax_smallest(&cv_accuracy_curve) + 1;
        Ok(ChannelClassifier {
            model,
            channel_name: channel_name.into(),
            feature_kind,
            d_minimal,
            cv_accuracy_curve,
        })
    }

    /// The model truncated to its selected horizon; this is what ensemble
    /// prediction evaluates.
    pub fn horizon_model(&self) -> Result<GaussianClassModel> {
        self.model.marginalize(self.d_minimal)
    }
}

/// Result of the minimal-horizon search.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSelection {
    pub d_minimal: usize,
    /// `curve[j-1]` is the mean held-out accuracy using the first `j` features.
    pub curve: Vec<f64>,
}

/// Cross-validated accuracy at every horizon, and its argmax.
///
/// For each stratified fold the full-dimension model is fitted on the
/// training split once and marginalized to every horizon `j`; the curve entry
/// is the mean of per-fold held-out accuracies. Ties in the argmax resolve to
/// the smallest horizon.
pub fn select_minimal_horizon(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    k_folds: usize,
    seed: u64,
    shrinkage: f64,
    priors: PriorMode,
) -> Result<HorizonSelection> {
    let d = features.ncols();
    if d == 0 {
        return Err(Error::Data("feature matrix has zero columns".into()));
    }
    let folds = stratified_kfold(labels, k_folds, seed)?;
    let mut curve = vec![0.0; d];
    for fold in &folds {
        let train = features.select(ndarray::Axis(0), &fold.train);
        let train_labels: Vec<usize> = fold.train.iter().map(|&i| labels[i]).collect();
        let model = GaussianClassModel::fit(train.view(), &train_labels, shrinkage, priors)?;
        for j in 1..=d {
            let marginal = model.marginalize(j)?;
            let mut correct = 0usize;
            for &t in &fold.test {
                let x: Vec<f64> = (0..j).map(|c| features[[t, c]]).collect();
                if marginal.predict(&x)? == labels[t] {
                    correct += 1;
                }
            }
            curve[j - 1] += correct as f64 / fold.test.len() as f64;
        }
    }
    for v in &mut curve {
        *v /= folds.len() as f64;
    }
    let d_minimal = argmax_smallest(&curve) + 1;
    Ok(HorizonSelection { d_minimal, curve })
}
