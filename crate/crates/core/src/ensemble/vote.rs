use std::collections::BTreeMap;

use super::PrefixTime;
use crate::{Error, Label, Result};

/// Outcome of checking a partially evaluated vote.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Decided(Label),
    Pending,
}

/// `exp(lambda * (f1_t - min f1))` per instant. The lowest-F1 model gets
/// weight exactly 1.
pub fn compute_weights(f1: &BTreeMap<PrefixTime, f64>, lambda: f64) -> Result<BTreeMap<PrefixTime, f64>> {
    if f1.is_empty() {
        return Err(Error::Empty("F1 scores"));
    }
    if !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be finite, got {lambda}")));
    }
    if f1.values().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("F1 scores must be finite".into()));
    }
    let min = f1.values().copied().fold(f64::INFINITY, f64::min);
    Ok(f1
        .iter()
        .map(|(&t, &score)| (t, (lambda * (score - min)).exp()))
        .collect())
}

/// Sign of the weighted vote sum; a zero sum counts as positive.
pub fn decide(score: f64) -> Label {
    Label::from_sign(score >= 0.0)
}

/// Weighted vote `sgn(Σ w_t · pred_t)` over every instant.
pub fn vote(predictions: &BTreeMap<PrefixTime, Label>, weights: &BTreeMap<PrefixTime, f64>) -> Result<(Label, f64)> {
    if predictions.len() != weights.len() || predictions.keys().any(|t| !weights.contains_key(t)) {
        return Err(Error::KeyMismatch(
            "predictions and weights cover different instants".into(),
        ));
    }
    let score: f64 = predictions.iter().map(|(t, pred)| weights[t] * pred.sign()).sum();
    Ok((decide(score), score))
}

/// Weighted sum of the votes cast so far.
pub fn partial_score(partial: &[(PrefixTime, Label)], weights: &BTreeMap<PrefixTime, f64>) -> f64 {
    partial
        .iter()
        .map(|(t, pred)| weights.get(t).copied().unwrap_or(0.0) * pred.sign())
        .sum()
}

/// Finalizes a vote as soon as the outstanding weight can no longer flip it.
///
/// With `S` the weighted sum of votes cast so far and `R` the total weight
/// not yet evaluated, the result is decided once `|S| > R`. When every
/// instant has voted the result is exactly [`vote`]'s.
pub fn early_decide(partial: &[(PrefixTime, Label)], weights: &BTreeMap<PrefixTime, f64>) -> Result<Decision> {
    for pair in partial.windows(2) {
        if pair[0].0 >= pair[1].0 {
            return Err(Error::OutOfOrder(format!(
                "{} evaluated before {}",
                pair[0].0, pair[1].0
            )));
        }
    }
    if let Some((t, _)) = partial.iter().find(|(t, _)| !weights.contains_key(t)) {
        return Err(Error::KeyMismatch(format!("instant {t} has no weight")));
    }
    let score = partial_score(partial, weights);
    if partial.len() == weights.len() {
        return Ok(Decision::Decided(decide(score)));
    }
    let remaining: f64 = weights
        .iter()
        .filter(|(t, _)| partial.binary_search_by(|(p, _)| p.cmp(t)).is_err())
        .map(|(_, w)| *w)
        .sum();
    if score.abs() > remaining {
        Ok(Decision::Decided(decide(score)))
    } else {
        Ok(Decision::Pending)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Negative as N, Positive as P};

    fn instants(n: usize) -> Vec<PrefixTime> {
        (0..n).map(|i| PrefixTime::from_millis(1000 + 100 * i as u32)).collect()
    }

    fn weights(values: &[f64]) -> BTreeMap<PrefixTime, f64> {
        instants(values.len()).into_iter().zip(values.iter().copied()).collect()
    }

    fn preds(values: &[Label]) -> BTreeMap<PrefixTime, Label> {
        instants(values.len()).into_iter().zip(values.iter().copied()).collect()
    }

    #[test]
    fn weight_examples() {
        let ts = instants(6);
        let equal: BTreeMap<_, _> = ts.iter().map(|&t| (t, 0.8)).collect();
        assert!(compute_weights(&equal, 10.0).unwrap().values().all(|&w| w == 1.0));

        let f1 = BTreeMap::from([(ts[0], 0.90), (ts[5], 0.95)]);
        let w = compute_weights(&f1, 10.0).unwrap();
        assert_eq!(w[&ts[0]], 1.0);
        assert!((w[&ts[5]] - 1.6487212707001282).abs() < 1e-12);

        let single = BTreeMap::from([(ts[5], 0.42)]);
        assert_eq!(compute_weights(&single, 10.0).unwrap()[&ts[5]], 1.0);
    }

    #[test]
    fn vote_examples() {
        let w = weights(&[1.0; 6]);
        assert_eq!(vote(&preds(&[P; 6]), &w).unwrap(), (P, 6.0));
        assert_eq!(vote(&preds(&[P, P, P, N, N, N]), &w).unwrap(), (P, 0.0));
        assert_eq!(vote(&preds(&[N, P, P]), &weights(&[2.0, 1.0, 1.0])).unwrap(), (P, 0.0));
        assert!(vote(&preds(&[P; 5]), &w).is_err());
    }

    #[test]
    fn early_decide_examples() {
        let ts = instants(6);
        let w = weights(&[1.0; 6]);
        let four: Vec<_> = ts[..4].iter().map(|&t| (t, P)).collect();
        assert_eq!(early_decide(&four[..3], &w).unwrap(), Decision::Pending);
        assert_eq!(early_decide(&four, &w).unwrap(), Decision::Decided(P));

        let alternating: Vec<_> = ts
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, if i % 2 == 0 { P } else { N }))
            .collect();
        for m in 1..6 {
            assert_eq!(early_decide(&alternating[..m], &w).unwrap(), Decision::Pending);
        }
        assert_eq!(early_decide(&alternating, &w).unwrap(), Decision::Decided(P));

        let heavy = weights(&[10.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(early_decide(&[(ts[0], P)], &heavy).unwrap(), Decision::Decided(P));
    }

    #[test]
    fn early_decide_rejects_disorder() {
        let ts = instants(3);
        let w = weights(&[1.0; 3]);
        assert!(matches!(
            early_decide(&[(ts[1], P), (ts[0], P)], &w),
            Err(Error::OutOfOrder(_))
        ));
        let stray = PrefixTime::from_millis(700);
        assert!(early_decide(&[(stray, P)], &w).is_err());
    }
}
