//! Binary CART classification tree on Gini impurity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Hyperparams};
use crate::Label;

// Decreases closer than this are treated as equal and the tie rule applies.
const GAIN_TIE_EPS: f64 = 1e-12;

/// Gini impurity `1 − Σ p_i²` of a class histogram.
///
/// Returns `None` for an empty histogram.
pub fn gini(counts: &[usize]) -> Option<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return None;
    }
    let total = total as f64;
    Some(1.0 - counts.iter().map(|&c| (c as f64 / total).powi(2)).sum::<f64>())
}

fn gini2(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    let (a, b) = (counts[0] as f64, counts[1] as f64);
    1.0 - (a * a + b * b) / (n * n)
}

/// Majority label; ties go to the positive class.
pub(crate) fn majority(counts: [usize; 2]) -> Label {
    Label::from_sign(counts[1] >= counts[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        impurity_decrease: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        label: Label,
        /// `[negative, positive]` training counts.
        counts: [usize; 2],
    },
}

/// A fitted tree stored as a flat node list with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

/// The split chosen at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub impurity_decrease: f64,
}

impl SplitChoice {
    fn beats(&self, other: &SplitChoice) -> bool {
        if self.impurity_decrease > other.impurity_decrease + GAIN_TIE_EPS {
            return true;
        }
        if self.impurity_decrease + GAIN_TIE_EPS < other.impurity_decrease {
            return false;
        }
        (self.feature, self.threshold) < (other.feature, other.threshold)
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    // Adjacent floats can round the midpoint up to `hi`.
    if mid >= hi {
        lo
    } else {
        mid
    }
}

/// Best Gini split of `indices` on one feature, honoring `min_samples_leaf`.
///
/// Thresholds are midpoints between consecutive distinct sorted values;
/// among equal decreases the lowest threshold wins.
pub(crate) fn best_split_on_feature(
    data: &Dataset,
    indices: &[usize],
    feature: usize,
    min_samples_leaf: usize,
    buf: &mut Vec<(f64, Label)>,
) -> Option<SplitChoice> {
    buf.clear();
    buf.extend(indices.iter().map(|&i| (data.rows[i][feature], data.labels[i])));
    buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

    let n = buf.len();
    let mut total = [0usize; 2];
    for &(_, label) in buf.iter() {
        total[label.slot()] += 1;
    }
    let parent = gini2(total);
    let mut left = [0usize; 2];
    let mut best: Option<SplitChoice> = None;
    for i in 0..n.saturating_sub(1) {
        left[buf[i].1.slot()] += 1;
        if buf[i].0 == buf[i + 1].0 {
            continue;
        }
        let nl = i + 1;
        let nr = n - nl;
        if nl < min_samples_leaf || nr < min_samples_leaf {
            continue;
        }
        let right = [total[0] - left[0], total[1] - left[1]];
        let weighted = (nl as f64 * gini2(left) + nr as f64 * gini2(right)) / n as f64;
        let candidate = SplitChoice {
            feature,
            threshold: midpoint(buf[i].0, buf[i + 1].0),
            impurity_decrease: parent - weighted,
        };
        if best.is_none_or(|b| candidate.beats(&b)) {
            best = Some(candidate);
        }
    }
    best
}

pub(crate) struct TreeBuilder<'a, R> {
    data: &'a Dataset,
    hp: &'a Hyperparams,
    candidates: usize,
    rng: &'a mut R,
    nodes: Vec<Node>,
    buf: Vec<(f64, Label)>,
    order: Vec<usize>,
}

impl<'a, R: Rng> TreeBuilder<'a, R> {
    pub(crate) fn new(data: &'a Dataset, hp: &'a Hyperparams, rng: &'a mut R) -> Self {
        TreeBuilder {
            data,
            hp,
            candidates: hp.max_features.candidates(data.n_features),
            rng,
            nodes: Vec::new(),
            buf: Vec::new(),
            order: (0..data.n_features).collect(),
        }
    }

    pub(crate) fn build(mut self, indices: &mut [usize]) -> DecisionTree {
        self.grow(indices, 0);
        DecisionTree { nodes: self.nodes }
    }

    fn is_constant(&self, indices: &[usize], feature: usize) -> bool {
        let first = self.data.rows[indices[0]][feature];
        indices.iter().all(|&i| self.data.rows[i][feature] == first)
    }

    /// Visits features in random order, skipping ones constant at this node,
    /// until `candidates` non-constant features have been evaluated.
    fn choose_split(&mut self, indices: &[usize]) -> Option<SplitChoice> {
        let d = self.order.len();
        let mut visited = 0;
        let mut best: Option<SplitChoice> = None;
        for pos in 0..d {
            if visited == self.candidates {
                break;
            }
            let pick = self.rng.random_range(pos..d);
            self.order.swap(pos, pick);
            let feature = self.order[pos];
            if self.is_constant(indices, feature) {
                continue;
            }
            visited += 1;
            if let Some(split) =
                best_split_on_feature(self.data, indices, feature, self.hp.min_samples_leaf, &mut self.buf)
            {
                if best.is_none_or(|b| split.beats(&b)) {
                    best = Some(split);
                }
            }
        }
        best
    }

    fn leaf(&mut self, counts: [usize; 2]) -> usize {
        self.nodes.push(Node::Leaf {
            label: majority(counts),
            counts,
        });
        self.nodes.len() - 1
    }

    fn grow(&mut self, indices: &mut [usize], depth: usize) -> usize {
        let mut counts = [0usize; 2];
        for &i in indices.iter() {
            counts[self.data.labels[i].slot()] += 1;
        }
        let n = indices.len();
        let pure = counts[0] == 0 || counts[1] == 0;
        if pure || depth >= self.hp.max_depth || n < self.hp.min_samples_split || n < 2 * self.hp.min_samples_leaf {
            return self.leaf(counts);
        }
        let Some(split) = self.choose_split(indices) else {
            return self.leaf(counts);
        };

        // Stable partition so child order does not depend on sort internals.
        let data = self.data;
        indices.sort_by_key(|&i| data.rows[i][split.feature] > split.threshold);
        let n_left = indices
            .iter()
            .take_while(|&&i| data.rows[i][split.feature] <= split.threshold)
            .count();

        let id = self.nodes.len();
        self.nodes.push(Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            impurity_decrease: split.impurity_decrease,
            left: 0,
            right: 0,
        });
        let (lo, hi) = indices.split_at_mut(n_left);
        let left = self.grow(lo, depth + 1);
        let right = self.grow(hi, depth + 1);
        if let Node::Split { left: l, right: r, .. } = &mut self.nodes[id] {
            *l = left;
            *r = right;
        }
        id
    }
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> Label {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { label, .. } => return *label,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    id = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Depth of the deepest leaf (a single leaf has depth 0).
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (Label, [usize; 2])> + '_ {
        self.nodes.iter().filter_map(|node| match node {
            Node::Leaf { label, counts } => Some((*label, *counts)),
            Node::Split { .. } => None,
        })
    }

    pub fn root_split(&self) -> Option<SplitChoice> {
        match self.nodes.first()? {
            Node::Split {
                feature,
                threshold,
                impurity_decrease,
                ..
            } => Some(SplitChoice {
                feature: *feature,
                threshold: *threshold,
                impurity_decrease: *impurity_decrease,
            }),
            Node::Leaf { .. } => None,
        }
    }

    pub(crate) fn validate(&self, n_features: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        for (id, node) in self.nodes.iter().enumerate() {
            if let Node::Split {
                feature,
                left,
                right,
                threshold,
                ..
            } = node
            {
                if *feature >= n_features {
                    return Err(format!("node {id}: feature {feature} out of range"));
                }
                if *left <= id || *right <= id || *left >= self.nodes.len() || *right >= self.nodes.len() {
                    return Err(format!("node {id}: invalid child index"));
                }
                if !threshold.is_finite() {
                    return Err(format!("node {id}: non-finite threshold"));
                }
            }
        }
        Ok(())
    }
}
