//! Stratified cross-validation folds and classification metrics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One cross-validation fold: disjoint train/test index sets into the trial axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits `labels` into `k` stratified folds.
///
/// Every class contributes to every fold, with per-class counts across folds
/// differing by at most one. Assignment shuffles each class's indices with a
/// ChaCha8 stream seeded from `seed`, so folds are reproducible across runs
/// and platforms. Indices within each fold are returned in ascending order.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Config(format!(
            "k_folds must be at least 2, got {k}"
        )));
    }
    if labels.is_empty() {
        return Err(Error::Data(
            "cannot build folds from empty label set".into(),
        ));
    }
    let n_classes = labels.iter().max().unwrap() + 1;
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (idx, &label) in labels.iter().enumerate() {
        per_class[label].push(idx);
    }
    for (class, members) in per_class.iter().enumerate() {
        if members.len() < k {
            return Err(Error::Data(format!(
                "class {class} has {} trials, fewer than k_folds = {k}",
                members.len()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; labels.len()];
    for members in &mut per_class {
        members.shuffle(&mut rng);
        for (pos, &idx) in members.iter().enumerate() {
            fold_of[idx] = pos % k;
        }
    }

    let folds = (0..k)
        .map(|f| {
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for (idx, &fold) in fold_of.iter().enumerate() {
                if fold == f {
                    test.push(idx);
                } else {
                    train.push(idx);
                }
            }
            Fold { train, test }
        })
        .collect();
    Ok(folds)
}

/// Fraction of predictions matching labels.
pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::Data(format!(
            "length mismatch: {} predictions vs {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Data("cannot score an empty prediction set".into()));
    }
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / preds.len() as f64)
}

/// Macro-averaged F1 over `k_classes` classes.
///
/// Classes absent from both predictions and labels are skipped rather than
/// counted as zero; a class that appears on either side contributes its
/// 2PR/(P+R) score (zero when degenerate).
pub fn f1_macro(preds: &[usize], labels: &[usize], k_classes: usize) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::Data(format!(
            "length mismatch: {} predictions vs {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Data("cannot score an empty prediction set".into()));
    }
    let mut sum = 0.0;
    let mut counted = 0usize;
    for class in 0..k_classes {
        let tp = preds
            .iter()
            .zip(labels)
            .filter(|(p, l)| **p == class && **l == class)
            .count() as f64;
        let pred_pos = preds.iter().filter(|p| **p == class).count() as f64;
        let true_pos = labels.iter().filter(|l| **l == class).count() as f64;
        if pred_pos == 0.0 && true_pos == 0.0 {
            continue;
        }
        let precision = if pred_pos > 0.0 { tp / pred_pos } else { 0.0 };
        let recall = if true_pos > 0.0 { tp / true_pos } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        sum += f1;
        counted += 1;
    }
    Ok(sum / counted as f64)
}

/// Derives a decorrelated sub-seed from a base seed and a stage tag
/// (splitmix64 finalizer). Used to give each CV stage its own stream while
/// keeping the whole pipeline a pure function of the top-level seed.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_two_class_five_folds() {
        let labels = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let folds = stratified_kfold(&labels, 5, 7).unwrap();
        assert_eq!(folds.len(), 5);
        let mut seen = [0usize; 10];
        for fold in &folds {
            assert_eq!(fold.test.len(), 2);
            let classes: Vec<usize> = fold.test.iter().map(|&i| labels[i]).collect();
            assert!(classes.contains(&0) && classes.contains(&1));
            for &i in &fold.test {
                seen[i] += 1;
            }
        }
        // test folds partition all indices
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn folds_deterministic_for_seed() {
        let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let a = stratified_kfold(&labels, 5, 123).unwrap();
        let b = stratified_kfold(&labels, 5, 123).unwrap();
        assert_eq!(a, b);
        let c = stratified_kfold(&labels, 5, 124).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn class_smaller_than_k_rejected() {
        let labels = vec![0, 0, 0, 1, 1, 1, 1, 1];
        let err = stratified_kfold(&labels, 5, 0).unwrap_err();
        assert!(err.to_string().contains("fewer than k_folds"));
    }

    #[test]
    fn per_class_fold_counts_differ_by_at_most_one() {
        let labels: Vec<usize> = (0..23).map(|i| usize::from(i >= 13)).collect();
        let folds = stratified_kfold(&labels, 4, 9).unwrap();
        for class in 0..2 {
            let counts: Vec<usize> = folds
                .iter()
                .map(|f| f.test.iter().filter(|&&i| labels[i] == class).count())
                .collect();
            let lo = counts.iter().min().unwrap();
            let hi = counts.iter().max().unwrap();
            assert!(hi - lo <= 1, "counts {counts:?}");
        }
    }

    #[test]
    fn accuracy_basics() {
        assert_eq!(accuracy(&[1, 0, 1], &[1, 0, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 1, 0], &[0, 0, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 0, 1, 1], &[0, 0, 1, 0]).unwrap(), 0.75);
        assert!(accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn f1_macro_perfect_and_inverted() {
        assert_eq!(f1_macro(&[0, 1, 0, 1], &[0, 1, 0, 1], 2).unwrap(), 1.0);
        assert_eq!(f1_macro(&[1, 0, 1, 0], &[0, 1, 0, 1], 2).unwrap(), 0.0);
    }

    #[test]
    fn f1_macro_all_predicted_one_class() {
        // balanced 2-class, everything predicted class 0:
        // class 0: P = 0.5, R = 1 -> F1 = 2/3; class 1: F1 = 0 -> macro = 1/3
        let got = f1_macro(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap();
        assert!((got - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn f1_macro_skips_class_absent_everywhere() {
        // class 2 never appears on either side and must not drag the mean down
        let got = f1_macro(&[0, 1], &[0, 1], 3).unwrap();
        assert_eq!(got, 1.0);
    }

    #[test]
    fn derive_seed_spreads_tags() {
        let s = derive_seed(42, 0);
        assert_ne!(s, derive_seed(42, 1));
        assert_ne!(s, derive_seed(43, 0));
        assert_eq!(s, derive_seed(42, 0));
    }
}
