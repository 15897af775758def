//! Independent reference implementations and shared fixtures.
#![allow(dead_code)]

use std::collections::BTreeMap;

use facetouch::dataset::{protocol_manifest, session_log, synth_trials, SessionPlan, SynthConfig};
use facetouch::ensemble::{reference_hyperparams, train_ensemble, TrainOptions};
use facetouch::forest::{Dataset, DecisionTree, Node};
use facetouch::{seeded_rng, Label, PrefixSchedule, PrefixTime, PromptLog, TemporalEnsemble, TrialRecord};

/// Textbook statistics in the canonical order, computed without sharing
/// code with the library.
pub fn naive_axis_stats(xs: &[f64]) -> [f64; 10] {
    let n = xs.len();
    let nf = n as f64;
    let mut sum = 0.0;
    for x in xs {
        sum += *x;
    }
    let mean = sum / nf;

    let median_of = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if s.len() % 2 == 1 {
            s[s.len() / 2]
        } else {
            (s[s.len() / 2 - 1] + s[s.len() / 2]) / 2.0
        }
    };
    let median = median_of(xs);

    let central = |p: i32| xs.iter().map(|x| (x - mean).powi(p)).sum::<f64>() / nf;
    let (m2, m3, m4) = (central(2), central(3), central(4));
    let std = if n < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt()
    };
    let cv = if mean.abs() < 1e-12 { 0.0 } else { std / mean.abs() };

    let signs: Vec<bool> = xs.iter().filter(|x| **x != 0.0).map(|x| *x > 0.0).collect();
    let crossings = signs.windows(2).filter(|w| w[0] != w[1]).count() as f64;

    let mean_abs_dev = xs.iter().map(|x| (x - mean).abs()).sum::<f64>() / nf;
    let deviations: Vec<f64> = xs.iter().map(|x| (x - median).abs()).collect();
    let median_abs_dev = median_of(&deviations);

    let (skewness, kurtosis) = if m2 < 1e-24 {
        (0.0, 0.0)
    } else {
        (m3 / (m2 * m2.sqrt()), m4 / (m2 * m2) - 3.0)
    };
    [
        sum,
        mean,
        median,
        std,
        cv,
        crossings,
        mean_abs_dev,
        median_abs_dev,
        skewness,
        kurtosis,
    ]
}

/// Relative error with an absolute floor of `tol` near zero.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn gini(labels: &[Label]) -> f64 {
    let n = labels.len() as f64;
    let p = labels.iter().filter(|l| l.is_positive()).count() as f64 / n;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

/// Best split by exhaustive search: every feature, every midpoint between
/// distinct values. Highest decrease wins; near-ties go to the lowest
/// feature, then the lowest threshold.
pub fn brute_force_split(data: &Dataset, rows: &[usize], min_leaf: usize) -> Option<(usize, f64, f64)> {
    let labels: Vec<Label> = rows.iter().map(|&i| data.labels[i]).collect();
    let parent = gini(&labels);
    let n = rows.len() as f64;
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..data.n_features {
        let mut values: Vec<f64> = rows.iter().map(|&i| data.rows[i][f]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        for pair in values.windows(2) {
            let threshold = (pair[0] + pair[1]) / 2.0;
            let (left, right): (Vec<Label>, Vec<Label>) = {
                let l = rows
                    .iter()
                    .filter(|&&i| data.rows[i][f] <= threshold)
                    .map(|&i| data.labels[i])
                    .collect();
                let r = rows
                    .iter()
                    .filter(|&&i| data.rows[i][f] > threshold)
                    .map(|&i| data.labels[i])
                    .collect();
                (l, r)
            };
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let decrease = parent - left.len() as f64 / n * gini(&left) - right.len() as f64 / n * gini(&right);
            let better = match best {
                None => true,
                Some((bf, bt, bd)) => {
                    decrease > bd + 1e-12 || ((decrease - bd).abs() <= 1e-12 && (f, threshold) < (bf, bt))
                }
            };
            if better {
                best = Some((f, threshold, decrease));
            }
        }
    }
    best
}

/// Settings the tree oracle needs to reproduce stopping rules.
#[derive(Clone, Copy)]
pub struct OracleParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub min_split: usize,
}

/// Checks every node of `tree` against the brute-force oracle applied to
/// the rows reaching it. Returns a description of the first disagreement.
pub fn check_tree(tree: &DecisionTree, data: &Dataset, params: OracleParams) -> Result<(), String> {
    fn walk(
        tree: &DecisionTree,
        data: &Dataset,
        p: OracleParams,
        id: usize,
        rows: Vec<usize>,
        depth: usize,
    ) -> Result<(), String> {
        let pos = rows.iter().filter(|&&i| data.labels[i].is_positive()).count();
        let counts = [rows.len() - pos, pos];
        let stops = pos == 0
            || pos == rows.len()
            || depth >= p.max_depth
            || rows.len() < p.min_split
            || rows.len() < 2 * p.min_leaf;
        let expected = if stops {
            None
        } else {
            brute_force_split(data, &rows, p.min_leaf)
        };
        match (&tree.nodes[id], expected) {
            (Node::Leaf { label, counts: c }, None) => {
                let majority = Label::from_sign(counts[1] >= counts[0]);
                if *c != counts || *label != majority {
                    return Err(format!("leaf {id}: {c:?}/{label} vs {counts:?}/{majority}"));
                }
                Ok(())
            }
            (
                Node::Split {
                    feature,
                    threshold,
                    impurity_decrease,
                    left,
                    right,
                },
                Some((f, t, d)),
            ) => {
                if *feature != f || *threshold != t || (impurity_decrease - d).abs() > 1e-12 {
                    return Err(format!(
                        "node {id}: split ({feature}, {threshold}, {impurity_decrease}) vs ({f}, {t}, {d})"
                    ));
                }
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| data.rows[i][f] <= t);
                walk(tree, data, p, *left, l, depth + 1)?;
                walk(tree, data, p, *right, r, depth + 1)
            }
            (node, expected) => Err(format!("node {id}: {node:?} vs oracle {expected:?}")),
        }
    }
    walk(tree, data, params, 0, (0..data.len()).collect(), 0)
}

/// Weighted vote by definition.
pub fn oracle_vote(preds: &[Label], weights: &[f64]) -> Label {
    let s: f64 = preds.iter().zip(weights).map(|(p, w)| p.sign() * w).sum();
    Label::from_sign(s >= 0.0)
}

/// The `n` instants 1.0, 1.1, … s.
pub fn instants(n: usize) -> Vec<PrefixTime> {
    (0..n).map(|i| PrefixTime::from_millis(1000 + 100 * i as u32)).collect()
}

pub fn weight_map(values: &[f64]) -> BTreeMap<PrefixTime, f64> {
    instants(values.len()).into_iter().zip(values.iter().copied()).collect()
}

pub fn protocol_trials(seed: u64) -> Vec<TrialRecord> {
    synth_trials(&protocol_manifest(seed), &SynthConfig::default(), seed).unwrap()
}

/// The reference temporal ensemble trained on a synthetic protocol.
pub fn reference_ensemble(trials: &[TrialRecord], seed: u64) -> TemporalEnsemble {
    let schedule = PrefixSchedule::default();
    train_ensemble(trials, &schedule, &reference_hyperparams(), &TrainOptions::new(seed)).unwrap()
}

/// A smaller ensemble for tests that only need a working detector.
pub fn small_ensemble(trials: &[TrialRecord], trees: usize, seed: u64) -> TemporalEnsemble {
    let schedule = PrefixSchedule::default();
    let hp: BTreeMap<_, _> = reference_hyperparams()
        .into_iter()
        .map(|(t, mut hp)| {
            hp.n_estimators = trees;
            (t, hp)
        })
        .collect();
    train_ensemble(trials, &schedule, &hp, &TrainOptions::new(seed)).unwrap()
}

pub fn session(user: &str, duration: f64, prompts: usize, seed: u64) -> PromptLog {
    let plan = SessionPlan {
        user_id: user.into(),
        duration,
        prompts,
        ..SessionPlan::default()
    };
    session_log(&plan, &SynthConfig::default(), &mut seeded_rng(seed)).unwrap()
}
