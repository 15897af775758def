//! Two-stage hyperparameter search: a randomized pass over a wide space,
//! then an exhaustive grid over the ±1 neighborhood of the randomized winner.

use std::cmp::Ordering;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{cross_validate, Dataset, Hyperparams, MaxFeatures};
use crate::rng::seeded;
use crate::{derive_seed, Error, Result};

const SAMPLE_STREAM: u64 = 0x5EA4C4;

/// Candidate values per hyperparameter; the search space is their product.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub bootstrap: Vec<bool>,
    pub max_depth: Vec<usize>,
    pub max_features: Vec<MaxFeatures>,
    pub min_samples_leaf: Vec<usize>,
    pub min_samples_split: Vec<usize>,
    pub n_estimators: Vec<usize>,
}

impl Default for SearchSpace {
    /// The randomized-stage space; brackets every tuned value.
    fn default() -> Self {
        SearchSpace {
            bootstrap: vec![true, false],
            max_depth: (1..=10).map(|i| i * 50).collect(),
            max_features: vec![MaxFeatures::Log2, MaxFeatures::Sqrt],
            min_samples_leaf: (1..=4).collect(),
            min_samples_split: (2..=5).collect(),
            n_estimators: (1..=10).map(|i| i * 50).collect(),
        }
    }
}

impl SearchSpace {
    /// A space holding exactly one configuration.
    pub fn singleton(hp: &Hyperparams) -> Self {
        SearchSpace {
            bootstrap: vec![hp.bootstrap],
            max_depth: vec![hp.max_depth],
            max_features: vec![hp.max_features],
            min_samples_leaf: vec![hp.min_samples_leaf],
            min_samples_split: vec![hp.min_samples_split],
            n_estimators: vec![hp.n_estimators],
        }
    }

    fn radices(&self) -> [usize; 6] {
        [
            self.bootstrap.len(),
            self.max_depth.len(),
            self.max_features.len(),
            self.min_samples_leaf.len(),
            self.min_samples_split.len(),
            self.n_estimators.len(),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        const NAMES: [&str; 6] = [
            "bootstrap",
            "max_depth",
            "max_features",
            "min_samples_leaf",
            "min_samples_split",
            "n_estimators",
        ];
        for (len, name) in self.radices().into_iter().zip(NAMES) {
            if len == 0 {
                return Err(Error::InvalidArgument(format!("search space for {name} is empty")));
            }
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.radices().iter().product()
    }

    /// Configuration at mixed-radix position `i` (last field varies fastest).
    pub fn config(&self, mut i: usize) -> Hyperparams {
        let r = self.radices();
        let mut digit = [0usize; 6];
        for f in (0..6).rev() {
            digit[f] = i % r[f];
            i /= r[f];
        }
        Hyperparams {
            bootstrap: self.bootstrap[digit[0]],
            max_depth: self.max_depth[digit[1]],
            max_features: self.max_features[digit[2]],
            min_samples_leaf: self.min_samples_leaf[digit[3]],
            min_samples_split: self.min_samples_split[digit[4]],
            n_estimators: self.n_estimators[digit[5]],
        }
    }

    /// For each field, the listed values adjacent to `best`'s value (the value
    /// itself plus its neighbors one position left and right).
    pub fn neighborhood(&self, best: &Hyperparams) -> Self {
        fn around<T: PartialEq + Copy>(values: &[T], center: T) -> Vec<T> {
            match values.iter().position(|v| *v == center) {
                Some(p) => values[p.saturating_sub(1)..(p + 2).min(values.len())].to_vec(),
                None => vec![center],
            }
        }
        SearchSpace {
            bootstrap: around(&self.bootstrap, best.bootstrap),
            max_depth: around(&self.max_depth, best.max_depth),
            max_features: around(&self.max_features, best.max_features),
            min_samples_leaf: around(&self.min_samples_leaf, best.min_samples_leaf),
            min_samples_split: around(&self.min_samples_split, best.min_samples_split),
            n_estimators: around(&self.n_estimators, best.n_estimators),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredParams {
    pub params: Hyperparams,
    pub mean_f1: f64,
    /// Position in the space's enumeration; final tie-breaker.
    pub position: usize,
}

/// Higher F1 first, then fewer trees, then shallower, then enumeration order.
fn rank(a: &ScoredParams, b: &ScoredParams) -> Ordering {
    b.mean_f1
        .total_cmp(&a.mean_f1)
        .then_with(|| a.params.cost_key().cmp(&b.params.cost_key()))
        .then_with(|| a.position.cmp(&b.position))
}

fn evaluate(
    data: &Dataset,
    space: &SearchSpace,
    positions: impl IntoIterator<Item = usize>,
    k: usize,
    seed: u64,
) -> Result<Vec<ScoredParams>> {
    let mut scored = Vec::new();
    for position in positions {
        let params = space.config(position);
        // Invalid combinations (none in the default space) are skipped.
        if params.validate().is_err() {
            continue;
        }
        let cv = cross_validate(data, k, &params, seed)?;
        scored.push(ScoredParams {
            params,
            mean_f1: cv.mean,
            position,
        });
    }
    if scored.is_empty() {
        return Err(Error::InvalidArgument("search space has no valid configuration".into()));
    }
    scored.sort_by(rank);
    Ok(scored)
}

/// Evaluates `n_iter` distinct configurations drawn uniformly (all of them if
/// the space is smaller) and returns them best first.
pub fn random_search(
    data: &Dataset,
    space: &SearchSpace,
    n_iter: usize,
    k: usize,
    seed: u64,
) -> Result<Vec<ScoredParams>> {
    space.validate()?;
    if n_iter == 0 {
        return Err(Error::InvalidArgument("n_iter must be positive".into()));
    }
    let size = space.size();
    let positions: Vec<usize> = if n_iter >= size {
        (0..size).collect()
    } else {
        let mut rng = seeded(derive_seed(seed, SAMPLE_STREAM));
        let mut picked = index::sample(&mut rng, size, n_iter).into_vec();
        picked.sort_unstable();
        picked
    };
    evaluate(data, space, positions, k, seed)
}

/// Evaluates every configuration in the space and returns them best first.
pub fn grid_search(data: &Dataset, space: &SearchSpace, k: usize, seed: u64) -> Result<Vec<ScoredParams>> {
    space.validate()?;
    evaluate(data, space, 0..space.size(), k, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub random_stage: Option<Vec<ScoredParams>>,
    pub grid_stage: Vec<ScoredParams>,
    pub best: ScoredParams,
}

/// Randomized search over `space`, then a grid over the winner's
/// neighborhood. With `skip_random` the grid runs over `space` directly.
pub fn tune(
    data: &Dataset,
    space: &SearchSpace,
    n_iter: usize,
    k: usize,
    seed: u64,
    skip_random: bool,
) -> Result<TuneResult> {
    let (random_stage, grid_space) = if skip_random {
        (None, space.clone())
    } else {
        let ranked = random_search(data, space, n_iter, k, seed)?;
        let grid_space = space.neighborhood(&ranked[0].params);
        (Some(ranked), grid_space)
    };
    let grid_stage = grid_search(data, &grid_space, k, seed)?;
    let best = grid_stage[0].clone();
    Ok(TuneResult {
        random_stage,
        grid_stage,
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_covers_space() {
        let space = SearchSpace {
            bootstrap: vec![false, true],
            max_depth: vec![1, 2, 3],
            max_features: vec![MaxFeatures::Log2],
            min_samples_leaf: vec![1],
            min_samples_split: vec![2, 3],
            n_estimators: vec![10],
        };
        assert_eq!(space.size(), 12);
        let all: std::collections::HashSet<Hyperparams> = (0..12).map(|i| space.config(i)).collect();
        assert_eq!(all.len(), 12);
        assert_eq!(space.config(0).max_depth, 1);
        assert!(space.config(11).bootstrap);
    }

    #[test]
    fn neighborhood_of_default_space() {
        let space = SearchSpace::default();
        assert_eq!(space.size(), 10 * 10 * 2 * 4 * 4 * 2);
        let best = Hyperparams {
            bootstrap: false,
            max_depth: 150,
            max_features: MaxFeatures::Log2,
            min_samples_leaf: 1,
            min_samples_split: 5,
            n_estimators: 500,
        };
        let hood = space.neighborhood(&best);
        assert_eq!(hood.max_depth, vec![100, 150, 200]);
        assert_eq!(hood.min_samples_leaf, vec![1, 2]);
        assert_eq!(hood.min_samples_split, vec![4, 5]);
        assert_eq!(hood.n_estimators, vec![450, 500]);
        assert_eq!(hood.bootstrap, vec![true, false]);
    }

    #[test]
    fn empty_space_is_rejected() {
        let mut space = SearchSpace::default();
        space.max_depth.clear();
        assert!(space.validate().is_err());
    }
}
