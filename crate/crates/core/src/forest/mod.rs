//! Random forests of CART trees, written for determinism.
//!
//! Every tree draws from its own ChaCha generator seeded by
//! [`derive_seed`]`(seed, tree_index)`, trees are trained in parallel and
//! collected by index, and split ties are broken by lowest feature index then
//! lowest threshold. The same seed therefore always produces a byte-identical
//! model file.
//!
//! # Model file
//!
//! A model is a single JSON object (serialized with `serde_json`, keys in the
//! order listed, floats in shortest round-trip form):
//!
//! ```text
//! {
//!   "format": "facetouch-forest",
//!   "version": 1,
//!   "feature_count": 30,
//!   "feature_order_hash": "<hex sha256 of the comma-joined feature names>" | null,
//!   "seed": <u64>,
//!   "hyperparams": {"bootstrap": false, "max_depth": 150, "max_features": "log2",
//!                   "min_samples_leaf": 2, "min_samples_split": 3, "n_estimators": 300},
//!   "trees": [
//!     {"nodes": [
//!       {"split": {"feature": 4, "threshold": 0.31, "impurity_decrease": 0.12, "left": 1, "right": 2}},
//!       {"leaf": {"label": -1, "counts": [57, 0]}},
//!       ...
//!     ]},
//!     ...
//!   ]
//! }
//! ```
//!
//! Node 0 is the root; children always have larger indices than their parent.

mod cv;
mod search;
mod tree;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::{feature_order_hash, FeatureVector};
use crate::rng::seeded;
use crate::{derive_seed, Error, Label, Result};

pub use cv::{cross_validate, f1_score, stratified_folds, CvScores};
pub use search::{grid_search, random_search, tune, ScoredParams, SearchSpace, TuneResult};
pub use tree::{gini, DecisionTree, Node, SplitChoice};

pub const FOREST_FORMAT: &str = "facetouch-forest";
pub const FOREST_VERSION: u32 = 1;

/// Per-split feature subsampling rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    Log2,
    Sqrt,
    All,
}

impl MaxFeatures {
    /// Number of candidate features per split for `n_features` columns.
    pub fn candidates(self, n_features: usize) -> usize {
        let n = n_features as f64;
        let k = match self {
            MaxFeatures::Log2 => n.log2().floor(),
            MaxFeatures::Sqrt => n.sqrt().floor(),
            MaxFeatures::All => n,
        };
        (k as usize).clamp(1, n_features.max(1))
    }
}

impl fmt::Display for MaxFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaxFeatures::Log2 => "log2",
            MaxFeatures::Sqrt => "sqrt",
            MaxFeatures::All => "all",
        })
    }
}

impl FromStr for MaxFeatures {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log2" => Ok(MaxFeatures::Log2),
            "sqrt" => Ok(MaxFeatures::Sqrt),
            "all" | "none" | "None" => Ok(MaxFeatures::All),
            other => Err(Error::InvalidArgument(format!("unknown max_features {other:?}"))),
        }
    }
}

/// The six tunable forest settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hyperparams {
    pub bootstrap: bool,
    pub max_depth: usize,
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub n_estimators: usize,
}

impl Default for Hyperparams {
    /// The tuned full-window (1.5 s) configuration.
    fn default() -> Self {
        Hyperparams {
            bootstrap: false,
            max_depth: 150,
            max_features: MaxFeatures::Log2,
            min_samples_leaf: 2,
            min_samples_split: 3,
            n_estimators: 300,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.min_samples_leaf == 0 || self.n_estimators == 0 {
            return Err(Error::InvalidArgument(format!(
                "hyperparameter counts must be >= 1: {self:?}"
            )));
        }
        if self.min_samples_split < 2 {
            return Err(Error::InvalidArgument(format!(
                "min_samples_split must be >= 2, got {}",
                self.min_samples_split
            )));
        }
        Ok(())
    }

    /// Relative training/inference cost, used to break score ties.
    pub(crate) fn cost_key(&self) -> (usize, usize) {
        (self.n_estimators, self.max_depth)
    }
}

/// A labeled design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
    pub n_features: usize,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("training set"));
        }
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: labels.len(),
            });
        }
        let n_features = rows[0].len();
        if n_features == 0 {
            return Err(Error::Empty("feature row"));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_features {
                return Err(Error::DimensionMismatch {
                    expected: n_features,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index: i });
            }
        }
        Ok(Dataset {
            rows,
            labels,
            n_features,
        })
    }

    pub fn from_features(features: &[FeatureVector], labels: Vec<Label>) -> Result<Self> {
        Dataset::new(features.iter().map(|f| f.values.to_vec()).collect(), labels)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `[negative, positive]` counts.
    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for label in &self.labels {
            counts[label.slot()] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_features: self.n_features,
        }
    }
}

/// Rows each tree trains on: all of them, or `n` draws with replacement.
pub fn training_indices<R: Rng>(n: usize, bootstrap: bool, rng: &mut R) -> Vec<usize> {
    if bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    }
}

/// Fits one tree with its own derived generator.
pub fn fit_tree(data: &Dataset, hp: &Hyperparams, seed: u64) -> DecisionTree {
    let mut rng = seeded(seed);
    let mut indices = training_indices(data.len(), hp.bootstrap, &mut rng);
    tree::TreeBuilder::new(data, hp, &mut rng).build(&mut indices)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub feature_count: usize,
    pub feature_order_hash: Option<String>,
}

impl RandomForest {
    pub fn fit(data: &Dataset, hp: &Hyperparams, seed: u64) -> Result<Self> {
        hp.validate()?;
        if data.len() < hp.min_samples_split {
            return Err(Error::InvalidArgument(format!(
                "{} training rows, fewer than min_samples_split {}",
                data.len(),
                hp.min_samples_split
            )));
        }
        let counts = data.class_counts();
        if counts[0] == 0 || counts[1] == 0 {
            return Err(Error::SingleClass);
        }
        let trees = (0..hp.n_estimators)
            .into_par_iter()
            .map(|i| fit_tree(data, hp, derive_seed(seed, i as u64)))
            .collect();
        Ok(RandomForest {
            trees,
            hyperparams: *hp,
            seed,
            feature_count: data.n_features,
            feature_order_hash: None,
        })
    }

    /// Fits on 30-feature vectors and records the feature layout hash.
    pub fn fit_features(features: &[FeatureVector], labels: &[Label], hp: &Hyperparams, seed: u64) -> Result<Self> {
        let data = Dataset::from_features(features, labels.to_vec())?;
        let mut forest = RandomForest::fit(&data, hp, seed)?;
        forest.feature_order_hash = Some(feature_order_hash());
        Ok(forest)
    }

    /// Number of trees voting positive.
    pub fn positive_votes(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.feature_count {
            return Err(Error::DimensionMismatch {
                expected: self.feature_count,
                got: x.len(),
            });
        }
        Ok(self.trees.iter().filter(|tree| tree.predict(x).is_positive()).count())
    }

    /// Majority vote of the trees; a tie is positive.
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        let positive = self.positive_votes(x)?;
        Ok(Label::from_sign(2 * positive >= self.trees.len()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ForestFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ForestFile = serde_json::from_str(text)?;
        file.into_forest()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        RandomForest::from_json(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ForestFile {
    format: String,
    version: u32,
    feature_count: usize,
    feature_order_hash: Option<String>,
    seed: u64,
    hyperparams: Hyperparams,
    trees: Vec<DecisionTree>,
}

impl From<&RandomForest> for ForestFile {
    fn from(forest: &RandomForest) -> Self {
        ForestFile {
            format: FOREST_FORMAT.into(),
            version: FOREST_VERSION,
            feature_count: forest.feature_count,
            feature_order_hash: forest.feature_order_hash.clone(),
            seed: forest.seed,
            hyperparams: forest.hyperparams,
            trees: forest.trees.clone(),
        }
    }
}

impl ForestFile {
    fn into_forest(self) -> Result<RandomForest> {
        if self.format != FOREST_FORMAT {
            return Err(Error::InvalidArgument(format!(
                "not a forest model: format {:?}",
                self.format
            )));
        }
        if self.version != FOREST_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported forest version {}",
                self.version
            )));
        }
        self.hyperparams.validate()?;
        if self.trees.len() != self.hyperparams.n_estimators {
            return Err(Error::InvalidArgument(format!(
                "{} trees stored, n_estimators is {}",
                self.trees.len(),
                self.hyperparams.n_estimators
            )));
        }
        if let Some(hash) = &self.feature_order_hash {
            if *hash != feature_order_hash() {
                return Err(Error::InvalidArgument(
                    "model was trained on a different feature layout".into(),
                ));
            }
        }
        for (i, tree) in self.trees.iter().enumerate() {
            tree.validate(self.feature_count)
                .map_err(|e| Error::InvalidArgument(format!("tree {i}: {e}")))?;
        }
        Ok(RandomForest {
            trees: self.trees,
            hyperparams: self.hyperparams,
            seed: self.seed,
            feature_count: self.feature_count,
            feature_order_hash: self.feature_order_hash,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let x = i as f64 / n as f64 * 2.0 - 1.0 + 0.5 / n as f64;
                vec![x, ((i * 7) % 11) as f64]
            })
            .collect();
        let labels = rows.iter().map(|r| Label::from_sign(r[0] > 0.0)).collect();
        Dataset::new(rows, labels).unwrap()
    }

    fn xor() -> Dataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for &(a, b) in &[(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
            for _ in 0..3 {
                rows.push(vec![a, b]);
                labels.push(Label::from_sign((a > 0.5) != (b > 0.5)));
            }
        }
        Dataset::new(rows, labels).unwrap()
    }

    fn accuracy(forest: &RandomForest, data: &Dataset) -> f64 {
        let hits = data
            .rows
            .iter()
            .zip(&data.labels)
            .filter(|(row, label)| forest.predict(row).unwrap() == **label)
            .count();
        hits as f64 / data.len() as f64
    }

    #[test]
    fn candidate_counts() {
        assert_eq!(MaxFeatures::Log2.candidates(30), 4);
        assert_eq!(MaxFeatures::Sqrt.candidates(30), 5);
        assert_eq!(MaxFeatures::All.candidates(30), 30);
        assert_eq!(MaxFeatures::Log2.candidates(1), 1);
        assert_eq!(MaxFeatures::Log2.candidates(2), 1);
    }

    #[test]
    fn separable_training_accuracy() {
        let data = separable(40);
        for hp in [
            Hyperparams::default(),
            Hyperparams {
                n_estimators: 5,
                bootstrap: true,
                max_features: MaxFeatures::All,
                ..Hyperparams::default()
            },
        ] {
            let forest = RandomForest::fit(&data, &hp, 3).unwrap();
            assert_eq!(accuracy(&forest, &data), 1.0);
        }
    }

    #[test]
    fn xor_needs_depth_two() {
        let data = xor();
        let deep = Hyperparams {
            n_estimators: 25,
            max_depth: 4,
            min_samples_leaf: 1,
            min_samples_split: 2,
            max_features: MaxFeatures::All,
            ..Hyperparams::default()
        };
        let forest = RandomForest::fit(&data, &deep, 11).unwrap();
        assert_eq!(accuracy(&forest, &data), 1.0);

        let stump = Hyperparams {
            n_estimators: 1,
            max_depth: 1,
            ..deep
        };
        let forest = RandomForest::fit(&data, &stump, 11).unwrap();
        assert!(accuracy(&forest, &data) <= 0.75);
    }

    #[test]
    fn deterministic_serialization() {
        let data = separable(30);
        let hp = Hyperparams {
            n_estimators: 20,
            ..Hyperparams::default()
        };
        let a = RandomForest::fit(&data, &hp, 9).unwrap().to_json().unwrap();
        let b = RandomForest::fit(&data, &hp, 9).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let back = RandomForest::from_json(&a).unwrap();
        assert_eq!(back.to_json().unwrap(), a);
    }

    #[test]
    fn predict_tie_is_positive() {
        let leaf = |label| DecisionTree {
            nodes: vec![Node::Leaf { label, counts: [1, 1] }],
        };
        let forest = RandomForest {
            trees: vec![leaf(Label::Positive), leaf(Label::Negative)],
            hyperparams: Hyperparams {
                n_estimators: 2,
                ..Hyperparams::default()
            },
            seed: 0,
            feature_count: 1,
            feature_order_hash: None,
        };
        assert_eq!(forest.predict(&[0.0]).unwrap(), Label::Positive);
        assert!(matches!(
            forest.predict(&[0.0, 1.0]),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn fit_errors() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
        let single = Dataset::new(rows.clone(), vec![Label::Positive; 3]).unwrap();
        assert!(matches!(
            RandomForest::fit(&single, &Hyperparams::default(), 0),
            Err(Error::SingleClass)
        ));
        assert!(Dataset::new(vec![], vec![]).is_err());
        assert!(Dataset::new(vec![vec![0.0], vec![0.0, 1.0]], vec![Label::Positive; 2]).is_err());
        let bad = Hyperparams {
            min_samples_split: 1,
            ..Hyperparams::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn no_bootstrap_uses_every_row_once() {
        let data = separable(50);
        let hp = Hyperparams {
            n_estimators: 8,
            min_samples_leaf: 1,
            min_samples_split: 2,
            ..Hyperparams::default()
        };
        let forest = RandomForest::fit(&data, &hp, 5).unwrap();
        let expected = data.class_counts();
        for tree in &forest.trees {
            let mut seen = [0usize; 2];
            for (_, counts) in tree.leaves() {
                seen[0] += counts[0];
                seen[1] += counts[1];
            }
            assert_eq!(seen, expected);
        }
        let mut rng = seeded(1);
        assert_eq!(training_indices(5, false, &mut rng), vec![0, 1, 2, 3, 4]);
        let drawn = training_indices(100, true, &mut rng);
        assert_eq!(drawn.len(), 100);
        assert!(drawn.iter().all(|&i| i < 100));
    }

    #[test]
    fn splits_never_increase_impurity() {
        let data = xor();
        let hp = Hyperparams {
            n_estimators: 10,
            min_samples_leaf: 1,
            min_samples_split: 2,
            ..Hyperparams::default()
        };
        let forest = RandomForest::fit(&data, &hp, 2).unwrap();
        for tree in &forest.trees {
            for node in &tree.nodes {
                if let Node::Split { impurity_decrease, .. } = node {
                    assert!(*impurity_decrease >= -1e-15);
                }
            }
            assert!(tree.depth() <= hp.max_depth);
        }
    }

    #[test]
    fn rejects_foreign_layout() {
        let data = separable(20);
        let hp = Hyperparams {
            n_estimators: 2,
            ..Hyperparams::default()
        };
        let mut forest = RandomForest::fit(&data, &hp, 0).unwrap();
        forest.feature_order_hash = Some("deadbeef".into());
        assert!(RandomForest::from_json(&forest.to_json().unwrap()).is_err());
    }
}
