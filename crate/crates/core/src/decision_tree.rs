//! One hard-soft semi-multivariate decision tree.
//!
//! Nodes live in a map keyed by heap index: the root is 1 and node `i` has
//! children `2i` and `2i + 1`. Every node records the knots routed to it.
//! Internal nodes cache, per training point, the normalized distance gap
//! `(d_R - d_L) / C` so that gates for any decision type are one logistic
//! evaluation away.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knots::{KnotSystem, PreparedPoints};

/// Deepest heap index we allow; keeps ids inside `u64`.
pub const MAX_DEPTH_LIMIT: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DecisionType {
    Hard,
    /// Soft gate using level `c` (1-based) of the softness table.
    Soft(usize),
}

impl DecisionType {
    /// 0 for hard, `c` for soft level `c`.
    pub fn index(self) -> usize {
        match self {
            DecisionType::Hard => 0,
            DecisionType::Soft(c) => c,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            DecisionType::Hard
        } else {
            DecisionType::Soft(i)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitRule {
    Univariate {
        feature: usize,
        cutoff: f64,
    },
    Multivariate {
        left: Arc<[usize]>,
        right: Arc<[usize]>,
    },
}

impl SplitRule {
    /// Unstructured feature used for distances, `None` for structured splits.
    pub fn feature(&self) -> Option<usize> {
        match self {
            SplitRule::Univariate { feature, .. } => Some(*feature),
            SplitRule::Multivariate { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InternalNode {
    pub rule: SplitRule,
    pub decision: DecisionType,
    pub c_eta: f64,
    /// Normalized gaps for the training points (empty for loaded trees).
    pub gap: Arc<[f64]>,
}

impl InternalNode {
    /// Creates a node and its training-point gaps; `C` comes from `train`.
    pub fn build(
        knots: &KnotSystem,
        train: &PreparedPoints,
        rule: SplitRule,
        left: &[usize],
        right: &[usize],
        decision: DecisionType,
    ) -> Result<Self> {
        let d = knots.distance_gaps(train, rule.feature(), left, right)?;
        let c_eta = compute_normalizer(&d);
        let gap: Arc<[f64]> = d.iter().map(|(l, r)| (r - l) / c_eta).collect();
        Ok(Self {
            rule,
            decision,
            c_eta,
            gap,
        })
    }
}

#[derive(Debug, Clone)]
pub enum NodeKind {
    Leaf { mu: f64 },
    Internal(InternalNode),
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub knots: Arc<[usize]>,
    pub kind: NodeKind,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }

    pub fn internal(&self) -> Option<&InternalNode> {
        match &self.kind {
            NodeKind::Internal(n) => Some(n),
            NodeKind::Leaf { .. } => None,
        }
    }
}

/// Depth of a heap id (root has depth 0).
pub fn depth_of(id: u64) -> usize {
    (63 - id.leading_zeros()) as usize
}

/// `1 / (1 + exp(-x))`.
pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Probability of routing left given a normalized gap.
pub fn gate_from_gap(gap: f64, decision: DecisionType, levels: &[f64]) -> f64 {
    match decision {
        DecisionType::Hard => {
            if gap >= 0.0 {
                1.0
            } else {
                0.0
            }
        }
        DecisionType::Soft(c) => logistic(levels[c - 1] * gap),
    }
}

/// Gate probability from raw nearest-knot distances.
pub fn gate_probability(
    d_l: f64,
    d_r: f64,
    c_eta: f64,
    decision: DecisionType,
    levels: &[f64],
) -> f64 {
    gate_from_gap((d_r - d_l) / c_eta, decision, levels)
}

/// Largest nearest-knot distance over the data; 1 when every distance is 0.
pub fn compute_normalizer(distances: &[(f64, f64)]) -> f64 {
    let c = distances.iter().fold(0.0_f64, |m, &(l, r)| m.max(l).max(r));
    if c > 0.0 {
        c
    } else {
        1.0
    }
}

/// Leaf-probability columns, one per leaf in ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    pub n: usize,
    pub leaf_ids: Vec<u64>,
    pub cols: Vec<Vec<f64>>,
}

impl BasisMatrix {
    pub fn n_leaves(&self) -> usize {
        self.cols.len()
    }

    /// Row `i` as a vector (Φ for one point).
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.cols.iter().map(|c| c[i]).collect()
    }

    /// `Φ M` for every point.
    pub fn apply(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (c, &m) in self.cols.iter().zip(mu) {
            for (o, v) in out.iter_mut().zip(c) {
                *o += v * m;
            }
        }
        out
    }

    pub fn position(&self, leaf: u64) -> Option<usize> {
        self.leaf_ids.binary_search(&leaf).ok()
    }
}

#[derive(Debug, Clone)]
pub struct DecisionTree {
    nodes: BTreeMap<u64, TreeNode>,
    /// Per-tree softness, used only by the single-level variant.
    pub alpha: f64,
}

impl DecisionTree {
    pub fn single_leaf(knots: Arc<[usize]>, alpha: f64) -> Self {
        let mut nodes = BTreeMap::new();
        nodes.insert(
            1,
            TreeNode {
                knots,
                kind: NodeKind::Leaf { mu: 0.0 },
            },
        );
        Self { nodes, alpha }
    }

    pub fn node(&self, id: u64) -> Option<&TreeNode> {
        self.nodes.get(&id)
    }

    pub fn node_mut(&mut self, id: u64) -> Option<&mut TreeNode> {
        self.nodes.get_mut(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (u64, &TreeNode)> {
        self.nodes.iter().map(|(&id, n)| (id, n))
    }

    pub fn leaf_ids(&self) -> Vec<u64> {
        self.nodes
            .iter()
            .filter(|(_, n)| n.is_leaf())
            .map(|(&id, _)| id)
            .collect()
    }

    pub fn internal_ids(&self) -> Vec<u64> {
        self.nodes
            .iter()
            .filter(|(_, n)| !n.is_leaf())
            .map(|(&id, _)| id)
            .collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.values().filter(|n| n.is_leaf()).count()
    }

    pub fn n_internal(&self) -> usize {
        self.nodes.len() - self.n_leaves()
    }

    /// Internal nodes whose two children are leaves.
    pub fn prunable_ids(&self) -> Vec<u64> {
        self.nodes
            .iter()
            .filter(|(&id, n)| {
                !n.is_leaf()
                    && self.nodes[&(2 * id)].is_leaf()
                    && self.nodes[&(2 * id + 1)].is_leaf()
            })
            .map(|(&id, _)| id)
            .collect()
    }

    pub fn decisions(&self) -> impl Iterator<Item = DecisionType> + '_ {
        self.nodes
            .values()
            .filter_map(|n| n.internal().map(|i| i.decision))
    }

    pub fn leaf_values(&self) -> Vec<f64> {
        self.nodes
            .values()
            .filter_map(|n| match n.kind {
                NodeKind::Leaf { mu } => Some(mu),
                NodeKind::Internal(_) => None,
            })
            .collect()
    }

    /// Assigns leaf weights in ascending leaf-id order.
    pub fn set_leaf_values(&mut self, mu: &[f64]) {
        let mut it = mu.iter();
        for n in self.nodes.values_mut() {
            if let NodeKind::Leaf { mu } = &mut n.kind {
                *mu = *it.next().expect("one weight per leaf");
            }
        }
    }

    /// Turns leaf `id` into an internal node with two zero-weight leaves.
    pub fn grow(
        &mut self,
        id: u64,
        internal: InternalNode,
        left_knots: Arc<[usize]>,
        right_knots: Arc<[usize]>,
    ) -> Result<()> {
        match self.nodes.get(&id) {
            Some(n) if n.is_leaf() => {}
            _ => return Err(Error::InvalidInput(format!("node {id} is not a leaf"))),
        }
        if depth_of(id) >= MAX_DEPTH_LIMIT {
            return Err(Error::InvalidInput("tree depth limit reached".into()));
        }
        self.nodes.get_mut(&id).expect("checked").kind = NodeKind::Internal(internal);
        for (child, knots) in [(2 * id, left_knots), (2 * id + 1, right_knots)] {
            self.nodes.insert(
                child,
                TreeNode {
                    knots,
                    kind: NodeKind::Leaf { mu: 0.0 },
                },
            );
        }
        Ok(())
    }

    /// Collapses an internal node with two leaf children into a leaf.
    pub fn prune(&mut self, id: u64) -> Result<()> {
        if !self.prunable_ids().contains(&id) {
            return Err(Error::InvalidInput(format!("node {id} is not prunable")));
        }
        self.nodes.remove(&(2 * id));
        self.nodes.remove(&(2 * id + 1));
        self.nodes.get_mut(&id).expect("checked").kind = NodeKind::Leaf { mu: 0.0 };
        Ok(())
    }

    /// Leaf basis for the training points from cached gaps.
    pub fn train_basis(&self, n: usize, levels: &[f64]) -> BasisMatrix {
        self.basis_with(n, levels, |_, node| node.gap.to_vec())
    }

    /// Leaf basis for arbitrary prepared points.
    pub fn basis(
        &self,
        knots: &KnotSystem,
        pts: &PreparedPoints,
        levels: &[f64],
    ) -> Result<BasisMatrix> {
        let mut gaps = self.gaps(knots, pts)?;
        Ok(self.basis_with(pts.len(), levels, |id, _| {
            gaps.remove(&id).expect("gap per internal node")
        }))
    }

    /// Normalized gaps `(d_R - d_L) / C_η` of every internal node at `pts`.
    pub fn gaps(
        &self,
        knots: &KnotSystem,
        pts: &PreparedPoints,
    ) -> Result<BTreeMap<u64, Vec<f64>>> {
        let mut gaps = BTreeMap::new();
        for (&id, node) in &self.nodes {
            if let NodeKind::Internal(inner) = &node.kind {
                let left = &self.nodes[&(2 * id)].knots;
                let right = &self.nodes[&(2 * id + 1)].knots;
                let d = knots.distance_gaps(pts, inner.rule.feature(), left, right)?;
                gaps.insert(
                    id,
                    d.iter()
                        .map(|(l, r)| (r - l) / inner.c_eta)
                        .collect::<Vec<_>>(),
                );
            }
        }
        Ok(gaps)
    }

    fn basis_with(
        &self,
        n: usize,
        levels: &[f64],
        mut gap: impl FnMut(u64, &InternalNode) -> Vec<f64>,
    ) -> BasisMatrix {
        let mut path: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        path.insert(1, vec![1.0; n]);
        let mut leaf_ids = Vec::new();
        let mut cols = Vec::new();
        // Ascending ids visit parents before children.
        for (&id, node) in &self.nodes {
            let p = path.remove(&id).expect("parent visited first");
            match &node.kind {
                NodeKind::Leaf { .. } => {
                    leaf_ids.push(id);
                    cols.push(p);
                }
                NodeKind::Internal(inner) => {
                    let g = gap(id, inner);
                    let mut left = Vec::with_capacity(n);
                    let mut right = Vec::with_capacity(n);
                    for (pi, gi) in p.iter().zip(&g) {
                        let z = gate_from_gap(*gi, inner.decision, levels);
                        left.push(pi * z);
                        right.push(pi * (1.0 - z));
                    }
                    path.insert(2 * id, left);
                    path.insert(2 * id + 1, right);
                }
            }
        }
        // Leaves were pushed in ascending id order already.
        BasisMatrix { n, leaf_ids, cols }
    }

    /// Probability that training point `i` reaches leaf `leaf`.
    pub fn leaf_path_probability(&self, i: usize, leaf: u64, levels: &[f64]) -> f64 {
        let mut prob = 1.0;
        let mut id = leaf;
        while id > 1 {
            let parent = id / 2;
            let inner = self.nodes[&parent].internal().expect("parent is internal");
            let z = gate_from_gap(inner.gap[i], inner.decision, levels);
            prob *= if id.is_multiple_of(2) { z } else { 1.0 - z };
            id = parent;
        }
        prob
    }

    /// `Σ_l μ_l Φ_l` at every training point.
    pub fn predict_train(&self, n: usize, levels: &[f64]) -> Vec<f64> {
        self.train_basis(n, levels).apply(&self.leaf_values())
    }

    pub fn to_snapshot(&self) -> TreeSnapshot {
        let nodes = self
            .nodes
            .iter()
            .map(|(&id, n)| {
                let (rule, decision, c_eta, mu) = match &n.kind {
                    NodeKind::Leaf { mu } => (None, None, None, Some(*mu)),
                    NodeKind::Internal(inner) => {
                        let rule = match &inner.rule {
                            SplitRule::Univariate { feature, cutoff } => RuleSnapshot {
                                kind: "univariate".into(),
                                feature: Some(*feature),
                                cutoff: Some(*cutoff),
                                left_knots: None,
                                right_knots: None,
                            },
                            SplitRule::Multivariate { left, right } => RuleSnapshot {
                                kind: "multivariate".into(),
                                feature: None,
                                cutoff: None,
                                left_knots: Some(left.to_vec()),
                                right_knots: Some(right.to_vec()),
                            },
                        };
                        (
                            Some(rule),
                            Some(inner.decision.index()),
                            Some(inner.c_eta),
                            None,
                        )
                    }
                };
                NodeSnapshot {
                    id,
                    parent: if id == 1 { None } else { Some(id / 2) },
                    is_leaf: n.is_leaf(),
                    rule,
                    decision,
                    c_eta,
                    mu,
                }
            })
            .collect();
        TreeSnapshot {
            alpha: self.alpha,
            nodes,
        }
    }

    /// Rebuilds a tree; training gaps are left empty.
    pub fn from_snapshot(snap: &TreeSnapshot, knots: &KnotSystem) -> Result<Self> {
        let bad = |m: &str| Error::Parse {
            context: "tree snapshot".into(),
            message: m.into(),
        };
        let by_id: BTreeMap<u64, &NodeSnapshot> = snap.nodes.iter().map(|n| (n.id, n)).collect();
        let all: Arc<[usize]> = (0..knots.len()).collect();
        let mut tree = DecisionTree::single_leaf(all, snap.alpha);
        let ids: Vec<u64> = by_id.keys().copied().collect();
        for id in ids {
            let ns = by_id[&id];
            let node = tree
                .nodes
                .get(&id)
                .ok_or_else(|| bad(&format!("node {id} has no parent")))?;
            if ns.is_leaf {
                let mu = ns.mu.ok_or_else(|| bad("leaf without mu"))?;
                tree.nodes.get_mut(&id).expect("present").kind = NodeKind::Leaf { mu };
                continue;
            }
            let rs = ns
                .rule
                .as_ref()
                .ok_or_else(|| bad("internal node without rule"))?;
            let (rule, left, right): (SplitRule, Arc<[usize]>, Arc<[usize]>) =
                match rs.kind.as_str() {
                    "univariate" => {
                        let feature = rs.feature.ok_or_else(|| bad("missing feature"))?;
                        let cutoff = rs.cutoff.ok_or_else(|| bad("missing cutoff"))?;
                        if feature >= knots.n_unstructured() {
                            return Err(bad("feature out of range"));
                        }
                        let (l, r) = knots.partition_univariate(&node.knots, feature, cutoff);
                        (
                            SplitRule::Univariate { feature, cutoff },
                            l.into(),
                            r.into(),
                        )
                    }
                    "multivariate" => {
                        let l: Arc<[usize]> = rs
                            .left_knots
                            .clone()
                            .ok_or_else(|| bad("missing left_knots"))?
                            .into();
                        let r: Arc<[usize]> = rs
                            .right_knots
                            .clone()
                            .ok_or_else(|| bad("missing right_knots"))?
                            .into();
                        (
                            SplitRule::Multivariate {
                                left: l.clone(),
                                right: r.clone(),
                            },
                            l,
                            r,
                        )
                    }
                    other => return Err(bad(&format!("unknown rule kind `{other}`"))),
                };
            if left.is_empty() || right.is_empty() {
                return Err(Error::EmptyKnotSide);
            }
            let decision =
                DecisionType::from_index(ns.decision.ok_or_else(|| bad("missing decision"))?);
            let c_eta = ns.c_eta.ok_or_else(|| bad("missing c_eta"))?;
            if !(c_eta > 0.0) {
                return Err(bad("c_eta must be positive"));
            }
            tree.grow(
                id,
                InternalNode {
                    rule,
                    decision,
                    c_eta,
                    gap: Arc::from(Vec::new()),
                },
                left,
                right,
            )?;
        }
        if tree.nodes.len() != snap.nodes.len() {
            return Err(bad("node set is not a binary tree"));
        }
        Ok(tree)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSnapshot {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub feature: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cutoff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub left_knots: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub right_knots: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSnapshot {
    pub id: u64,
    pub parent: Option<u64>,
    pub is_leaf: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rule: Option<RuleSnapshot>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub decision: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub c_eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSnapshot {
    pub alpha: f64,
    pub nodes: Vec<NodeSnapshot>,
}

#[cfg(test)]
mod tests {
    use super::*;

    const LEVELS: [f64; 3] = [4.0, 8.0, 16.0];

    fn internal(decision: DecisionType, gap: Vec<f64>) -> InternalNode {
        InternalNode {
            rule: SplitRule::Univariate {
                feature: 0,
                cutoff: 0.0,
            },
            decision,
            c_eta: 1.0,
            gap: gap.into(),
        }
    }

    fn knots(v: &[usize]) -> Arc<[usize]> {
        v.to_vec().into()
    }

    /// Gap whose soft gate with level `a` equals `z`.
    fn gap_for(z: f64, a: f64) -> f64 {
        (z / (1.0 - z)).ln() / a
    }

    #[test]
    fn gates() {
        for c in 1..=3 {
            assert_eq!(
                gate_probability(0.7, 0.7, 2.0, DecisionType::Soft(c), &LEVELS),
                0.5
            );
        }
        assert_eq!(
            gate_probability(0.1, 0.3, 1.0, DecisionType::Hard, &LEVELS),
            1.0
        );
        assert_eq!(
            gate_probability(0.3, 0.1, 1.0, DecisionType::Hard, &LEVELS),
            0.0
        );
        assert_eq!(
            gate_probability(0.3, 0.3, 1.0, DecisionType::Hard, &LEVELS),
            1.0
        );
        // level 4, gap 0.5 / 2 => exponent 1
        let z = gate_probability(0.5, 1.0, 2.0, DecisionType::Soft(1), &LEVELS);
        assert!((z - 0.731_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn normalizer() {
        assert_eq!(compute_normalizer(&[(0.0, 2.0)]), 2.0);
        assert_eq!(compute_normalizer(&[(1.0, 1.0), (1.0, 1.0)]), 1.0);
        assert_eq!(compute_normalizer(&[(0.0, 0.0)]), 1.0);
        assert!(compute_normalizer(&[(0.0, 2.0), (3.0, 0.5)]) >= 2.0);
    }

    #[test]
    fn single_leaf_basis_is_one() {
        let t = DecisionTree::single_leaf(knots(&[0, 1]), 1.0);
        let b = t.train_basis(3, &LEVELS);
        assert_eq!(b.cols, vec![vec![1.0; 3]]);
        assert_eq!(t.leaf_path_probability(0, 1, &LEVELS), 1.0);
    }

    #[test]
    fn depth_one_soft_tree() {
        let g = gap_for(0.7, LEVELS[0]);
        let mut t = DecisionTree::single_leaf(knots(&[0, 1]), 1.0);
        t.grow(
            1,
            internal(DecisionType::Soft(1), vec![g]),
            knots(&[0]),
            knots(&[1]),
        )
        .unwrap();
        let b = t.train_basis(1, &LEVELS);
        assert!((b.cols[0][0] - 0.7).abs() < 1e-12);
        assert!((b.cols[1][0] - 0.3).abs() < 1e-12);
        t.set_leaf_values(&[1.0, -1.0]);
        assert!((t.predict_train(1, &LEVELS)[0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn depth_two_path_product() {
        let mut t = DecisionTree::single_leaf(knots(&[0, 1, 2]), 1.0);
        t.grow(
            1,
            internal(DecisionType::Soft(1), vec![gap_for(0.7, LEVELS[0])]),
            knots(&[0, 1]),
            knots(&[2]),
        )
        .unwrap();
        t.grow(
            2,
            internal(DecisionType::Soft(2), vec![gap_for(0.6, LEVELS[1])]),
            knots(&[0]),
            knots(&[1]),
        )
        .unwrap();
        assert!((t.leaf_path_probability(0, 4, &LEVELS) - 0.42).abs() < 1e-12);
        let b = t.train_basis(1, &LEVELS);
        assert_eq!(b.leaf_ids, vec![3, 4, 5]);
        for (pos, &leaf) in b.leaf_ids.iter().enumerate() {
            assert!((b.cols[pos][0] - t.leaf_path_probability(0, leaf, &LEVELS)).abs() < 1e-15);
        }
        t.set_leaf_values(&[0.25, 0.25, 0.25]);
        assert!((t.predict_train(1, &LEVELS)[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn hard_tree_is_one_hot() {
        let mut t = DecisionTree::single_leaf(knots(&[0, 1, 2]), 1.0);
        t.grow(
            1,
            internal(DecisionType::Hard, vec![0.3, -0.2, 0.0]),
            knots(&[0, 1]),
            knots(&[2]),
        )
        .unwrap();
        let b = t.train_basis(3, &LEVELS);
        for i in 0..3 {
            let row = b.row(i);
            assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn grow_prune_roundtrip() {
        let mut t = DecisionTree::single_leaf(knots(&[0, 1]), 1.0);
        t.grow(
            1,
            internal(DecisionType::Hard, vec![0.0]),
            knots(&[0]),
            knots(&[1]),
        )
        .unwrap();
        assert_eq!(t.prunable_ids(), vec![1]);
        assert_eq!(t.n_leaves(), 2);
        assert!(t
            .grow(
                1,
                internal(DecisionType::Hard, vec![0.0]),
                knots(&[0]),
                knots(&[1])
            )
            .is_err());
        t.prune(1).unwrap();
        assert_eq!(t.n_leaves(), 1);
        assert!(t.prune(1).is_err());
    }

    #[test]
    fn depths() {
        assert_eq!(depth_of(1), 0);
        assert_eq!(depth_of(2), 1);
        assert_eq!(depth_of(3), 1);
        assert_eq!(depth_of(7), 2);
        assert_eq!(depth_of(8), 3);
    }
}
