//! Multi-channel combination and greedy subset selection.
//!
//! Single-channel classifiers are combined either by summing per-class log
//! likelihoods under a conditional-independence assumption (priors applied
//! exactly once, at combination time) or by plurality voting over member
//! predictions. The member subset is grown greedily: start from the best
//! single classifier by cross-validated accuracy, then keep adding whichever
//! remaining classifier raises CV accuracy the most, stopping at the first
//! round with no strict improvement.

use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::stratified_kfold;
use crate::gaussian::{argmax_smallest, ChannelClassifier, GaussianClassModel, PriorMode};

/// How member outputs are merged into one decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombinationRule {
    #[default]
    Likelihood,
    Voting,
}

impl std::fmt::Display for CombinationRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CombinationRule::Likelihood => "likelihood",
            CombinationRule::Voting => "voting",
        })
    }
}

/// One greedy round: which member was added and the CV accuracy afterwards.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TraceEntry {
    pub round: usize,
    pub channel_name: String,
    pub feature_kind: crate::dsp::FeatureKind,
    pub d_minimal: usize,
    pub cv_accuracy: f64,
}

/// An ordered set of fitted channel classifiers plus the combination rule.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub members: Vec<ChannelClassifier>,
    pub rule: CombinationRule,
    pub selection_trace: Vec<TraceEntry>,
}

/// Sums the member log likelihoods per class, adds the prior once, and
/// returns the winning class with the combined scores.
///
/// Member scores must be pure log likelihoods (no priors). Per-class
/// summands are sorted before accumulation so the result is bit-identical
/// under any permutation of the members.
pub fn combine_likelihood(
    per_member_log_liks: &[Vec<f64>],
    log_prior: &[f64],
) -> Result<(usize, Vec<f64>)> {
    if per_member_log_liks.is_empty() {
        return Err(Error::Config("no member scores to combine".into()));
    }
    let k = log_prior.len();
    for (m, scores) in per_member_log_liks.iter().enumerate() {
        if scores.len() != k {
            return Err(Error::Config(format!(
                "member {m} has {} class scores, expected {k}",
                scores.len()
            )));
        }
    }
    let mut combined = Vec::with_capacity(k);
    let mut summands = Vec::with_capacity(per_member_log_liks.len());
    for class in 0..k {
        summands.clear();
        summands.extend(per_member_log_liks.iter().map(|s| s[class]));
        summands.sort_by(f64::total_cmp);
        combined.push(summands.iter().sum::<f64>() + log_prior[class]);
    }
    Ok((argmax_smallest(&combined), combined))
}

/// Plurality vote over member predictions. Ties among the top vote-getters
/// resolve by the summed log posterior over the tied classes, then by the
/// smallest class index.
pub fn combine_voting(
    per_member_predictions: &[usize],
    per_member_log_scores: &[Vec<f64>],
) -> Result<usize> {
    if per_member_predictions.is_empty() {
        return Err(Error::Config("no member votes to combine".into()));
    }
    if per_member_predictions.len() != per_member_log_scores.len() {
        return Err(Error::Config(format!(
            "{} votes but {} score vectors",
            per_member_predictions.len(),
            per_member_log_scores.len()
        )));
    }
    let k = per_member_log_scores[0].len();
    for (m, scores) in per_member_log_scores.iter().enumerate() {
        if scores.len() != k {
            return Err(Error::Config(format!(
                "member {m} has {} class scores, expected {k}",
                scores.len()
            )));
        }
    }
    let mut votes = vec![0usize; k];
    for &p in per_member_predictions {
        if p >= k {
            return Err(Error::Config(format!("vote for class {p} out of range")));
        }
        votes[p] += 1;
    }
    let top = *votes.iter().max().unwrap();
    let tied: Vec<usize> = (0..k).filter(|&c| votes[c] == top).collect();
    if tied.len() == 1 {
        return Ok(tied[0]);
    }
    let mut summed = vec![f64::NEG_INFINITY; k];
    let mut summands = Vec::with_capacity(per_member_log_scores.len());
    for &class in &tied {
        summands.clear();
        summands.extend(per_member_log_scores.iter().map(|s| s[class]));
        summands.sort_by(f64::total_cmp);
        summed[class] = summands.iter().sum();
    }
    Ok(argmax_smallest(&summed))
}

impl EnsembleModel {
    pub fn k_classes(&self) -> usize {
        self.members[0].model.k_classes()
    }

    /// Prior used at combination time. All members are fitted on the same
    /// training trials, so any member's prior is the ensemble prior.
    pub fn log_prior(&self) -> &[f64] {
        &self.members[0].model.log_prior
    }

    /// Predicts every row, given one full-width feature matrix per member
    /// (aligned with `members` order). Each member reads only its first
    /// `d_minimal` columns.
    pub fn predict_batch(&self, features_per_member: &[ArrayView2<'_, f64>]) -> Result<Vec<usize>> {
        if features_per_member.len() != self.members.len() {
            return Err(Error::Config(format!(
                "{} feature matrices for {} members",
                features_per_member.len(),
                self.members.len()
            )));
        }
        let n = features_per_member.first().map(|f| f.nrows()).unwrap_or(0);
        let horizon_models: Vec<GaussianClassModel> = self
            .members
            .iter()
            .map(|m| m.horizon_model())
            .collect::<Result<_>>()?;
        for ((m, feats), model) in self
            .members
            .iter()
            .zip(features_per_member)
            .zip(&horizon_models)
        {
            if feats.nrows() != n {
                return Err(Error::Config(
                    "feature matrices disagree on trial count".into(),
                ));
            }
            if feats.ncols() < model.dim {
                return Err(Error::Config(format!(
                    "member {} needs {} features, matrix has {}",
                    m.channel_name,
                    model.dim,
                    feats.ncols()
                )));
            }
        }
        let mut out = Vec::with_capacity(n);
        for row in 0..n {
            let mut liks = Vec::with_capacity(self.members.len());
            for (model, feats) in horizon_models.iter().zip(features_per_member) {
                let x: Vec<f64> = (0..model.dim).map(|c| feats[[row, c]]).collect();
                liks.push(model.log_likelihoods(&x)?);
            }
            out.push(self.decide(&liks)?);
        }
        Ok(out)
    }

    /// Predicts one trial from per-member feature slices (full width or
    /// longer than each member's horizon).
    pub fn predict_trial(&self, features_per_member: &[&[f64]]) -> Result<usize> {
        if features_per_member.len() != self.members.len() {
            return Err(Error::Config(format!(
                "{} feature slices for {} members",
                features_per_member.len(),
                self.members.len()
            )));
        }
        let mut liks = Vec::with_capacity(self.members.len());
        for (m, x) in self.members.iter().zip(features_per_member) {
            let model = m.horizon_model()?;
            if x.len() < model.dim {
                return Err(Error::Config(format!(
                    "member {} needs {} features, got {}",
                    m.channel_name,
                    model.dim,
                    x.len()
                )));
            }
            liks.push(model.log_likelihoods(&x[..model.dim])?);
        }
        self.decide(&liks)
    }

    /// Applies the combination rule to per-member log likelihood vectors.
    fn decide(&self, per_member_log_liks: &[Vec<f64>]) -> Result<usize> {
        let prior = self.log_prior();
        match self.rule {
            CombinationRule::Likelihood => Ok(combine_likelihood(per_member_log_liks, prior)?.0),
            CombinationRule::Voting => {
                let mut votes = Vec::with_capacity(per_member_log_liks.len());
                let mut posteriors = Vec::with_capacity(per_member_log_liks.len());
                for liks in per_member_log_liks {
                    let scores: Vec<f64> = liks.iter().zip(prior).map(|(l, p)| l + p).collect();
                    votes.push(argmax_smallest(&scores));
                    posteriors.push(scores);
                }
                combine_voting(&votes, &posteriors)
            }
        }
    }
}

/// Per-candidate, per-fold cache of held-out log likelihoods, member votes,
/// and the fold's training prior.
struct FoldScores {
    /// `log_liks[t][class]` for test trial `t` (fold test order).
    log_liks: Vec<Vec<f64>>,
    votes: Vec<usize>,
}

/// Greedy forward selection of a classifier subset.
///
/// Every candidate is evaluated at its own `d_minimal` horizon: within each
/// fold the candidate is refitted on the training split at full width,
/// marginalized to the horizon, and scored on the held-out split. Ties (best
/// initial candidate, best addition) resolve to the smallest candidate index.
#[allow(clippy::too_many_arguments)]
pub fn greedy_select(
    candidates: &[ChannelClassifier],
    features: &[ArrayView2<'_, f64>],
    labels: &[usize],
    rule: CombinationRule,
    k_folds: usize,
    seed: u64,
    max_members: usize,
    priors: PriorMode,
) -> Result<EnsembleModel> {
    if candidates.is_empty() {
        return Err(Error::Config("candidate list is empty".into()));
    }
    if candidates.len() != features.len() {
        return Err(Error::Config(format!(
            "{} candidates but {} feature matrices",
            candidates.len(),
            features.len()
        )));
    }
    if max_members == 0 {
        return Err(Error::Config("max_members must be at least 1".into()));
    }
    let mut identities = std::collections::BTreeSet::new();
    for c in candidates {
        if !identities.insert((c.channel_name.clone(), format!("{}", c.feature_kind))) {
            return Err(Error::Config(format!(
                "duplicate candidate identity ({}, {})",
                c.channel_name, c.feature_kind
            )));
        }
    }

    let folds = stratified_kfold(labels, k_folds, seed)?;

    // one fold refit per candidate; the greedy rounds then only re-combine
    // cached scores
    let cache: Vec<Vec<FoldScores>> = candidates
        .par_iter()
        .zip(features.par_iter())
        .map(|(cand, feats)| {
            folds
                .iter()
                .map(|fold| {
                    let train = feats.select(ndarray::Axis(0), &fold.train);
                    let train_labels: Vec<usize> = fold.train.iter().map(|&i| labels[i]).collect();
                    let model = GaussianClassModel::fit(
                        train.view(),
                        &train_labels,
                        cand.model.shrinkage,
                        priors,
                    )?;
                    let horizon = cand.d_minimal.min(model.dim);
                    let marginal = model.marginalize(horizon)?;
                    let mut log_liks = Vec::with_capacity(fold.test.len());
                    let mut votes = Vec::with_capacity(fold.test.len());
                    for &t in &fold.test {
                        let x: Vec<f64> = (0..horizon).map(|c| feats[[t, c]]).collect();
                        let liks = marginal.log_likelihoods(&x)?;
                        let scores: Vec<f64> = liks
                            .iter()
                            .zip(&marginal.log_prior)
                            .map(|(l, p)| l + p)
                            .collect();
                        votes.push(argmax_smallest(&scores));
                        log_liks.push(liks);
                    }
                    Ok(FoldScores { log_liks, votes })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    // fold priors are identical across candidates (same training labels);
    // compute them once
    let fold_priors: Vec<Vec<f64>> = folds
        .iter()
        .map(|fold| {
            let train_labels: Vec<usize> = fold.train.iter().map(|&i| labels[i]).collect();
            let k = train_labels.iter().max().unwrap() + 1;
            match priors {
                PriorMode::Uniform => Ok(vec![-(k as f64).ln(); k]),
                PriorMode::Empirical => {
                    let mut counts = vec![0usize; k];
                    for &l in &train_labels {
                        counts[l] += 1;
                    }
                    Ok(counts
                        .iter()
                        .map(|&c| (c as f64 / train_labels.len() as f64).ln())
                        .collect())
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let subset_accuracy = |subset: &[usize]| -> Result<f64> {
        let mut acc = 0.0;
        for (f, fold) in folds.iter().enumerate() {
            let mut correct = 0usize;
            for (ti, &t) in fold.test.iter().enumerate() {
                let pred = match rule {
                    CombinationRule::Likelihood => {
                        let liks: Vec<Vec<f64>> = subset
                            .iter()
                            .map(|&i| cache[i][f].log_liks[ti].clone())
                            .collect();
                        combine_likelihood(&liks, &fold_priors[f])?.0
                    }
                    CombinationRule::Voting => {
                        let votes: Vec<usize> =
                            subset.iter().map(|&i| cache[i][f].votes[ti]).collect();
                        let scores: Vec<Vec<f64>> = subset
                            .iter()
                            .map(|&i| {
                                cache[i][f].log_liks[ti]
                                    .iter()
                                    .zip(&fold_priors[f])
                                    .map(|(l, p)| l + p)
                                    .collect()
                            })
                            .collect();
                        combine_voting(&votes, &scores)?
                    }
                };
                if pred == labels[t] {
                    correct += 1;
                }
            }
            acc += correct as f64 / fold.test.len() as f64;
        }
        Ok(acc / folds.len() as f64)
    };

    let single_accs: Vec<f64> = (0..candidates.len())
        .map(|i| subset_accuracy(&[i]))
        .collect::<Result<_>>()?;
    let first = argmax_smallest(&single_accs);
    let mut selected = vec![first];
    let mut current_acc = single_accs[first];
    let mut trace = vec![trace_entry(0, &candidates[first], current_acc)];

    while selected.len() < max_members {
        let remaining: Vec<usize> = (0..candidates.len())
            .filter(|i| !selected.contains(i))
            .collect();
        if remaining.is_empty() {
            break;
        }
        let mut best: Option<(usize, f64)> = None;
        for &i in &remaining {
            let mut trial_subset = selected.clone();
            trial_subset.push(i);
            let acc = subset_accuracy(&trial_subset)?;
            if acc > current_acc && best.is_none_or(|(_, b)| acc > b) {
                best = Some((i, acc));
            }
        }
        match best {
            Some((i, acc)) => {
                selected.push(i);
                current_acc = acc;
                trace.push(trace_entry(trace.len(), &candidates[i], acc));
            }
            None => break,
        }
    }

    Ok(EnsembleModel {
        members: selected.iter().map(|&i| candidates[i].clone()).collect(),
        rule,
        selection_trace: trace,
    })
}

fn trace_entry(round: usize, cand: &ChannelClassifier, cv_accuracy: f64) -> TraceEntry {
    TraceEntry {
        round,
        channel_name: cand.channel_name.clone(),
        feature_kind: cand.feature_kind,
        d_minimal: cand.d_minimal,
        cv_accuracy,
    }
}
