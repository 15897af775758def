use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dataset, Hyperparams, RandomForest};
use crate::rng::seeded;
use crate::{derive_seed, Error, Label, Result};

// Stream ids for derive_seed, kept apart from per-tree indices.
const FOLD_SHUFFLE_STREAM: u64 = 0xF01D;
const FOLD_FIT_STREAM: u64 = 0xF17_0000;

/// Positive-class F1 with undefined precision or recall counted as 0.
pub fn f1_score(truth: &[Label], predicted: &[Label]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (t, p) in truth.iter().zip(predicted) {
        match (t.is_positive(), p.is_positive()) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScores {
    pub per_fold: Vec<f64>,
    pub mean: f64,
}

/// Assigns every row to one of `k` folds, stratified by class.
///
/// Each class is shuffled independently and dealt round-robin; negatives
/// continue the rotation where positives stopped so fold sizes stay within
/// one of each other.
pub fn stratified_folds(labels: &[Label], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, label) in labels.iter().enumerate() {
        by_class[label.slot()].push(i);
    }
    for (slot, members) in by_class.iter().enumerate() {
        if members.len() < k {
            return Err(Error::TooFewPerClass {
                label: if slot == 1 { 1 } else { -1 },
                count: members.len(),
                folds: k,
            });
        }
    }
    let mut rng = seeded(derive_seed(seed, FOLD_SHUFFLE_STREAM));
    let mut folds = vec![Vec::new(); k];
    let mut slot = 0;
    let [mut negatives, mut positives] = by_class;
    for members in [&mut positives, &mut negatives] {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[slot % k].push(i);
            slot += 1;
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Stratified k-fold cross-validation of the positive-class F1.
pub fn cross_validate(data: &Dataset, k: usize, hp: &Hyperparams, seed: u64) -> Result<CvScores> {
    hp.validate()?;
    let folds = stratified_folds(&data.labels, k, seed)?;
    let per_fold = (0..k)
        .into_par_iter()
        .map(|f| {
            let mut in_test = vec![false; data.len()];
            for &i in &folds[f] {
                in_test[i] = true;
            }
            let train: Vec<usize> = (0..data.len()).filter(|&i| !in_test[i]).collect();
            let model = RandomForest::fit(&data.subset(&train), hp, derive_seed(seed, FOLD_FIT_STREAM + f as u64))?;
            let truth: Vec<Label> = folds[f].iter().map(|&i| data.labels[i]).collect();
            let predicted = folds[f]
                .iter()
                .map(|&i| model.predict(&data.rows[i]))
                .collect::<Result<Vec<_>>>()?;
            Ok(f1_score(&truth, &predicted))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = per_fold.iter().sum::<f64>() / k as f64;
    Ok(CvScores { per_fold, mean })
}
