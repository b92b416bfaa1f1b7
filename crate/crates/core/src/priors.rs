//! Priors, hyperparameter calibration and split-rule proposals.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::decision_tree::{DecisionTree, DecisionType, InternalNode, SplitRule, MAX_DEPTH_LIMIT};
use crate::error::{Error, Result};
use crate::knots::{KnotSystem, PreparedPoints};
use crate::spectral_graph::{bipartition, tree_path};

/// How softness levels are parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// A fixed table of soft levels shared by all trees.
    Sk,
    /// One soft level per tree with its own Gamma-distributed softness.
    S2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveProbs {
    pub grow: f64,
    pub prune: f64,
    pub change: f64,
}

impl Default for MoveProbs {
    fn default() -> Self {
        Self {
            grow: 0.4,
            prune: 0.4,
            change: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub variant: Variant,
    /// Number of trees.
    pub m: usize,
    pub gamma: f64,
    pub delta: f64,
    /// Nodes at this depth never split.
    pub max_depth: usize,
    pub p_m: f64,
    /// Dirichlet concentration over decision types (Sk).
    pub psi: Vec<f64>,
    /// Beta shape for the hard-decision probability (S2).
    pub s_a: f64,
    pub s_b: f64,
    /// Gamma shape and rate of the per-tree softness (S2).
    pub alpha_g: f64,
    pub beta_g: f64,
    /// Shape of the Gamma random-walk proposal for the softness.
    pub alpha_proposal_shape: f64,
    pub base_levels: Vec<f64>,
    pub q: f64,
    pub alpha_mu: f64,
    pub beta_mu: f64,
    pub nu: f64,
    pub lambda: f64,
    /// Restrict every decision to hard.
    pub hard_only: bool,
    pub moves: MoveProbs,
}

impl Hyperparams {
    /// Defaults for the data-independent parameters; `beta_mu`, `lambda`
    /// and `p_m` are placeholders until [`Hyperparams::calibrate`].
    pub fn new(variant: Variant, m: usize) -> Self {
        let base_levels = vec![0.5, 1.0, 2.0];
        let k = match variant {
            Variant::Sk => base_levels.len(),
            Variant::S2 => 1,
        };
        Self {
            variant,
            m,
            gamma: 0.95,
            delta: 2.0,
            max_depth: MAX_DEPTH_LIMIT,
            p_m: 0.5,
            psi: vec![1.0; k + 1],
            s_a: 1.0,
            s_b: 2.0,
            alpha_g: 1.0,
            beta_g: 0.5,
            alpha_proposal_shape: 20.0,
            base_levels,
            q: 8.0,
            alpha_mu: 3.0,
            beta_mu: 1.0,
            nu: 3.0,
            lambda: 1.0,
            hard_only: false,
            moves: MoveProbs::default(),
        }
    }

    /// Sets `beta_mu`, `lambda` from the (rescaled) responses and `p_m` from
    /// the feature dimensions.
    pub fn calibrate(&mut self, y: &[f64], d_m: usize, p: usize) -> Result<()> {
        let var = crate::data::sample_variance(y);
        if !(var > 0.0) {
            return Err(Error::InvalidInput("response has zero variance".into()));
        }
        self.beta_mu = 0.5 * var / self.m as f64;
        self.lambda = calibrate_lambda(var, self.nu)?;
        self.p_m = multivariate_split_prob(d_m, p);
        Ok(())
    }

    /// Number of soft levels `k`.
    pub fn n_soft(&self) -> usize {
        match self.variant {
            Variant::Sk => self.base_levels.len(),
            Variant::S2 => 1,
        }
    }

    pub fn n_decisions(&self) -> usize {
        self.n_soft() + 1
    }

    /// Decision indices the sampler may use.
    pub fn allowed_decisions(&self) -> Vec<usize> {
        if self.hard_only {
            vec![0]
        } else {
            (0..self.n_decisions()).collect()
        }
    }

    /// Soft-gate scales for a tree with softness `alpha`.
    pub fn levels(&self, alpha: f64) -> Vec<f64> {
        match self.variant {
            Variant::Sk => self.base_levels.iter().map(|l| l * self.q).collect(),
            Variant::S2 => vec![self.q * alpha],
        }
    }

    /// Prior mean of the decision-type probabilities.
    pub fn initial_p_a(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.n_decisions()];
        if self.hard_only {
            p[0] = 1.0;
            return p;
        }
        match self.variant {
            Variant::Sk => {
                let s: f64 = self.psi.iter().sum();
                for (pi, w) in p.iter_mut().zip(&self.psi) {
                    *pi = w / s;
                }
            }
            Variant::S2 => {
                p[0] = self.s_a / (self.s_a + self.s_b);
                p[1] = 1.0 - p[0];
            }
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.m == 0 {
            return bad("at least one tree is required".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(self.delta > 0.0) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if self.max_depth > MAX_DEPTH_LIMIT {
            return bad(format!("max_depth must be at most {MAX_DEPTH_LIMIT}"));
        }
        if !(0.0..=1.0).contains(&self.p_m) {
            return bad(format!("p_m must lie in [0, 1], got {}", self.p_m));
        }
        if self.psi.len() != self.n_decisions() || self.psi.iter().any(|v| !(*v > 0.0)) {
            return bad("psi needs one positive entry per decision type".into());
        }
        for (name, v) in [
            ("s_a", self.s_a),
            ("s_b", self.s_b),
            ("alpha_g", self.alpha_g),
            ("beta_g", self.beta_g),
            ("alpha_proposal_shape", self.alpha_proposal_shape),
            ("alpha_mu", self.alpha_mu),
            ("beta_mu", self.beta_mu),
            ("nu", self.nu),
            ("lambda", self.lambda),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.base_levels.is_empty() || self.base_levels.iter().any(|v| !(*v > 0.0)) {
            return bad("soft levels must be positive".into());
        }
        if !(self.q >= 1.0) {
            return bad(format!("q must be at least 1, got {}", self.q));
        }
        let mv = &self.moves;
        if [mv.grow, mv.prune, mv.change].iter().any(|p| !(*p >= 0.0))
            || (mv.grow + mv.prune + mv.change - 1.0).abs() > 1e-9
            || mv.grow <= 0.0
            || mv.prune <= 0.0
        {
            return bad("move probabilities must be nonnegative and sum to 1".into());
        }
        Ok(())
    }
}

/// `γ / (1 + depth)^δ`.
pub fn p_split(depth: usize, gamma: f64, delta: f64) -> f64 {
    gamma / (1.0 + depth as f64).powf(delta)
}

/// Split probability of a node, zero when it may not split.
pub fn effective_split_prob(hyper: &Hyperparams, depth: usize, has_rule: bool) -> f64 {
    if has_rule && depth < hyper.max_depth {
        p_split(depth, hyper.gamma, hyper.delta)
    } else {
        0.0
    }
}

/// `d_M / (d_M + p)`.
pub fn multivariate_split_prob(d_m: usize, p: usize) -> f64 {
    d_m as f64 / (d_m + p) as f64
}

/// λ such that `P(σ² < σ̂²) = 0.9` when `σ² ~ νλ/χ²_ν`.
pub fn calibrate_lambda(sample_var: f64, nu: f64) -> Result<f64> {
    if !(sample_var > 0.0) {
        return Err(Error::NonPositiveVariance(sample_var));
    }
    let chi = ChiSquared::new(nu).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(sample_var * chi.inverse_cdf(0.1) / nu)
}

/// A sampled rule together with the knots it sends to each side.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposedRule {
    pub rule: SplitRule,
    pub left: Arc<[usize]>,
    pub right: Arc<[usize]>,
}

/// What splits are possible at one node.
pub struct RuleContext<'a> {
    knots: &'a KnotSystem,
    node_knots: &'a [usize],
    p_m: f64,
    features: Vec<(usize, std::ops::Range<usize>)>,
}

impl<'a> RuleContext<'a> {
    pub fn new(knots: &'a KnotSystem, node_knots: &'a [usize], p_m: f64) -> Self {
        let features = if p_m < 1.0 {
            (0..knots.n_unstructured())
                .map(|j| (j, knots.valid_cutoff_range(node_knots, j)))
                .filter(|(_, r)| !r.is_empty())
                .collect()
        } else {
            Vec::new()
        };
        Self {
            knots,
            node_knots,
            p_m,
            features,
        }
    }

    pub fn multivariate_available(&self) -> bool {
        self.p_m > 0.0 && self.node_knots.len() >= 2
    }

    pub fn univariate_available(&self) -> bool {
        !self.features.is_empty()
    }

    pub fn has_rule(&self) -> bool {
        self.multivariate_available() || self.univariate_available()
    }

    fn p_multivariate(&self) -> f64 {
        match (self.multivariate_available(), self.univariate_available()) {
            (true, true) => self.p_m,
            (true, false) => 1.0,
            _ => 0.0,
        }
    }

    /// Draws a rule from the prior restricted to realizable rules.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<ProposedRule> {
        if !self.has_rule() {
            return None;
        }
        if rng.random::<f64>() < self.p_multivariate() {
            let sub = self.knots.subtree(self.node_knots);
            let verts = sub.vertices();
            let a = rng.random_range(0..verts.len());
            let mut b = rng.random_range(0..verts.len() - 1);
            if b >= a {
                b += 1;
            }
            let path = tree_path(&sub, verts[a], verts[b]).expect("vertices in subtree");
            let edge = path[rng.random_range(0..path.len())];
            let (x, y) = bipartition(&sub, edge).expect("edge on path");
            let (l, r) = if x.vertices()[0] < y.vertices()[0] {
                (x, y)
            } else {
                (y, x)
            };
            let left: Arc<[usize]> = l.vertices().into();
            let right: Arc<[usize]> = r.vertices().into();
            Some(ProposedRule {
                rule: SplitRule::Multivariate {
                    left: left.clone(),
                    right: right.clone(),
                },
                left,
                right,
            })
        } else {
            let (feature, range) = &self.features[rng.random_range(0..self.features.len())];
            let cutoff = self.knots.cutoffs(*feature)[rng.random_range(range.clone())];
            let (l, r) = self
                .knots
                .partition_univariate(self.node_knots, *feature, cutoff);
            Some(ProposedRule {
                rule: SplitRule::Univariate {
                    feature: *feature,
                    cutoff,
                },
                left: l.into(),
                right: r.into(),
            })
        }
    }

    /// Probability that [`RuleContext::sample`] returns `rule`.
    pub fn probability(&self, rule: &SplitRule) -> f64 {
        match rule {
            SplitRule::Univariate { feature, cutoff } => {
                let Some((_, range)) = self.features.iter().find(|(j, _)| j == feature) else {
                    return 0.0;
                };
                let grid = self.knots.cutoffs(*feature);
                if !range.clone().any(|g| grid[g] == *cutoff) {
                    return 0.0;
                }
                (1.0 - self.p_multivariate()) / (self.features.len() * range.len()) as f64
            }
            SplitRule::Multivariate { left, right } => {
                let pm = self.p_multivariate();
                if pm == 0.0 {
                    return 0.0;
                }
                let sub = self.knots.subtree(self.node_knots);
                let t = sub.len() as f64;
                let pairs = t * (t - 1.0) / 2.0;
                let verts = sub.vertices();
                let mut total = 0.0;
                for &u in left.iter() {
                    let Ok(hops) = sub.hop_distances(u) else {
                        return 0.0;
                    };
                    for &v in right.iter() {
                        match verts.binary_search(&v) {
                            Ok(pos) => total += 1.0 / hops[pos] as f64,
                            Err(_) => return 0.0,
                        }
                    }
                }
                pm * total / pairs
            }
        }
    }
}

/// Draws a decision index from `p`.
pub fn sample_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let total: f64 = p.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in p.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    p.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Draws a tree from the Galton-Watson prior with prior leaf weights.
pub fn sample_tree_from_prior<R: Rng + ?Sized>(
    hyper: &Hyperparams,
    knots: &KnotSystem,
    train: &PreparedPoints,
    p_a: &[f64],
    sigma_mu2: f64,
    alpha: f64,
    rng: &mut R,
) -> Result<DecisionTree> {
    let all: Arc<[usize]> = (0..knots.len()).collect();
    let mut tree = DecisionTree::single_leaf(all, alpha);
    let mut frontier = vec![1u64];
    while let Some(id) = frontier.pop() {
        let node_knots = tree.node(id).expect("frontier node").knots.clone();
        let ctx = RuleContext::new(knots, &node_knots, hyper.p_m);
        let depth = crate::decision_tree::depth_of(id);
        let p = effective_split_prob(hyper, depth, ctx.has_rule());
        if rng.random::<f64>() >= p {
            continue;
        }
        let pr = ctx.sample(rng).expect("rule available");
        let decision = DecisionType::from_index(sample_categorical(p_a, rng));
        let inner = InternalNode::build(knots, train, pr.rule, &pr.left, &pr.right, decision)?;
        tree.grow(id, inner, pr.left, pr.right)?;
        frontier.push(2 * id);
        frontier.push(2 * id + 1);
    }
    let sd = sigma_mu2.sqrt();
    let normal = Normal::new(0.0, sd).map_err(|_| Error::NonPositiveVariance(sigma_mu2))?;
    let mu: Vec<f64> = (0..tree.n_leaves()).map(|_| normal.sample(rng)).collect();
    tree.set_leaf_values(&mu);
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PointSet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_knots(t: usize, p: usize, grid: usize) -> KnotSystem {
        let s: Vec<[f64; 2]> = (0..t)
            .map(|i| [(i as f64 * 0.7).cos(), i as f64 * 0.3])
            .collect();
        let x: Vec<Vec<f64>> = (0..t)
            .map(|i| (0..p).map(|j| ((i * (j + 2)) % 7) as f64).collect())
            .collect();
        let sp = PointSet::from_rows(&s).unwrap();
        let xp = if p == 0 {
            PointSet::empty()
        } else {
            PointSet::from_rows(&x).unwrap()
        };
        let rows: Vec<usize> = (0..t).collect();
        KnotSystem::build(&sp, &xp, &rows, None, grid).unwrap()
    }

    #[test]
    fn split_probabilities() {
        assert_eq!(p_split(0, 0.95, 2.0), 0.95);
        assert!((p_split(1, 0.95, 2.0) - 0.2375).abs() < 1e-15);
        assert!(p_split(3, 0.95, 200.0) < 1e-100);
        assert!((multivariate_split_prob(2, 10) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(multivariate_split_prob(2, 0), 1.0);
        assert_eq!(multivariate_split_prob(3, 3), 0.5);
    }

    /// χ²_3 CDF by composite Simpson integration of its density.
    fn chi2_3_cdf(x: f64) -> f64 {
        let f = |u: f64| {
            u.sqrt() * (-u / 2.0).exp() / (2f64.powf(1.5) * std::f64::consts::PI.sqrt() / 2.0)
        };
        // substitute u = w^2 to remove the sqrt singularity at 0
        let g = |w: f64| 2.0 * w * f(w * w);
        let b = x.sqrt();
        let n = 2000;
        let h = b / n as f64;
        let mut s = g(0.0) + g(b);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn lambda_matches_quantile_oracle() {
        let (mut lo, mut hi) = (0.0, 5.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if chi2_3_cdf(mid) < 0.1 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = lo / 3.0;
        let lambda = calibrate_lambda(1.0, 3.0).unwrap();
        assert!((lambda - oracle).abs() < 1e-9);
        assert!((lambda - 0.194_791_5).abs() < 1e-6);
        assert!((calibrate_lambda(2.0, 3.0).unwrap() - 2.0 * lambda).abs() < 1e-15);
    }

    #[test]
    fn lambda_gives_ninety_percent_below() {
        let lambda = calibrate_lambda(1.0, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let chi = rand_distr::ChiSquared::new(3.0).unwrap();
        let n = 1_000_000;
        let below = (0..n)
            .filter(|_| 3.0 * lambda / chi.sample(&mut rng) < 1.0)
            .count();
        let frac = below as f64 / n as f64;
        assert!((0.89..=0.91).contains(&frac), "{frac}");
    }

    #[test]
    fn two_knot_multivariate_rule_is_deterministic() {
        let ks = toy_knots(2, 0, 10);
        let ctx = RuleContext::new(&ks, &[0, 1], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = ctx.sample(&mut rng).unwrap();
        assert_eq!(&*r.left, &[0]);
        assert_eq!(&*r.right, &[1]);
        assert!((ctx.probability(&r.rule) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn univariate_rule_probability_is_uniform_product() {
        let ks = toy_knots(8, 3, 5);
        let node: Vec<usize> = (0..8).collect();
        let ctx = RuleContext::new(&ks, &node, 0.25);
        for j in 0..3 {
            for &c in ks.cutoffs(j) {
                let p = ctx.probability(&SplitRule::Univariate {
                    feature: j,
                    cutoff: c,
                });
                let n_valid = ks.valid_cutoff_range(&node, j).len();
                assert!((p - 0.75 / (3 * n_valid) as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn path_tree_multivariate_probabilities() {
        // Collinear knots give the path 0-1-2.
        let s = PointSet::from_rows(&[[0.0], [1.0], [2.5]]).unwrap();
        let ks = KnotSystem::build(&s, &PointSet::empty(), &[0, 1, 2], Some(1), 10).unwrap();
        assert_eq!(ks.mst().edges(), &[(0, 1), (1, 2)]);
        let ctx = RuleContext::new(&ks, &[0, 1, 2], 1.0);
        let rule = |l: &[usize], r: &[usize]| SplitRule::Multivariate {
            left: l.into(),
            right: r.into(),
        };
        // pairs: (0,1) -> edge a; (1,2) -> edge b; (0,2) -> either, half each
        let pa = ctx.probability(&rule(&[0], &[1, 2]));
        let pb = ctx.probability(&rule(&[0, 1], &[2]));
        assert!((pa - 0.5).abs() < 1e-15);
        assert!((pb - 0.5).abs() < 1e-15);
    }

    fn enumerate_total(ks: &KnotSystem, node: &[usize], p_m: f64) -> f64 {
        let ctx = RuleContext::new(ks, node, p_m);
        let mut total = 0.0;
        for j in 0..ks.n_unstructured() {
            for &c in ks.cutoffs(j) {
                total += ctx.probability(&SplitRule::Univariate {
                    feature: j,
                    cutoff: c,
                });
            }
        }
        let sub = ks.subtree(node);
        let mut seen = Vec::new();
        for &e in sub.edges() {
            let (a, b) = bipartition(&sub, e).unwrap();
            let (l, r) = if a.vertices()[0] < b.vertices()[0] {
                (a, b)
            } else {
                (b, a)
            };
            let key = l.vertices().to_vec();
            if !seen.contains(&key) {
                seen.push(key);
                total += ctx.probability(&SplitRule::Multivariate {
                    left: l.vertices().into(),
                    right: r.vertices().into(),
                });
            }
        }
        total
    }

    #[test]
    fn rule_probabilities_sum_to_one() {
        for t in 2..=5 {
            for p in 0..=2 {
                let ks = toy_knots(t, p, 5);
                let node: Vec<usize> = (0..t).collect();
                for p_m in [0.0, 0.3, 1.0] {
                    let ctx = RuleContext::new(&ks, &node, p_m);
                    if !ctx.has_rule() {
                        continue;
                    }
                    let total = enumerate_total(&ks, &node, p_m);
                    assert!(
                        (total - 1.0).abs() < 1e-12,
                        "t={t} p={p} p_m={p_m}: {total}"
                    );
                }
            }
        }
    }

    #[test]
    fn sampled_rule_frequencies_follow_probabilities() {
        let ks = toy_knots(5, 2, 4);
        let node: Vec<usize> = (0..5).collect();
        let ctx = RuleContext::new(&ks, &node, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 100_000;
        let mut counts: Vec<(ProposedRule, usize)> = Vec::new();
        for _ in 0..draws {
            let r = ctx.sample(&mut rng).unwrap();
            match counts.iter_mut().find(|(x, _)| x.rule == r.rule) {
                Some((_, c)) => *c += 1,
                None => counts.push((r, 1)),
            }
        }
        let mut chi2 = 0.0;
        let mut mass = 0.0;
        for (r, c) in &counts {
            let e = ctx.probability(&r.rule) * draws as f64;
            mass += ctx.probability(&r.rule);
            chi2 += (*c as f64 - e).powi(2) / e;
        }
        assert!((mass - 1.0).abs() < 1e-12, "all rules observed");
        let df = (counts.len() - 1) as f64;
        let crit = ChiSquared::new(df).unwrap().inverse_cdf(0.99);
        assert!(chi2 < crit, "chi2 {chi2} >= {crit}");
    }

    #[test]
    fn gamma_zero_like_prior_gives_single_leaf() {
        let ks = toy_knots(6, 1, 5);
        let s = PointSet::from_rows(
            &(0..6)
                .map(|i| [(i as f64 * 0.7).cos(), i as f64 * 0.3])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let x = PointSet::from_rows(&(0..6).map(|i| [((i * 2) % 7) as f64]).collect::<Vec<_>>())
            .unwrap();
        let pts = ks.prepare(&s, &x).unwrap();
        let mut h = Hyperparams::new(Variant::Sk, 1);
        h.max_depth = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let t = sample_tree_from_prior(&h, &ks, &pts, &h.initial_p_a(), 1.0, 1.0, &mut rng)
                .unwrap();
            assert_eq!(t.n_leaves(), 1);
        }
    }

    #[test]
    fn root_split_frequency() {
        let ks = toy_knots(6, 1, 5);
        let s = PointSet::from_rows(
            &(0..6)
                .map(|i| [(i as f64 * 0.7).cos(), i as f64 * 0.3])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let x = PointSet::from_rows(&(0..6).map(|i| [((i * 2) % 7) as f64]).collect::<Vec<_>>())
            .unwrap();
        let pts = ks.prepare(&s, &x).unwrap();
        let mut h = Hyperparams::new(Variant::Sk, 1);
        h.p_m = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let split = (0..n)
            .filter(|_| {
                sample_tree_from_prior(&h, &ks, &pts, &h.initial_p_a(), 1.0, 1.0, &mut rng)
                    .unwrap()
                    .n_leaves()
                    > 1
            })
            .count();
        let f = split as f64 / n as f64;
        let se = (0.95 * 0.05 / n as f64).sqrt();
        assert!((f - 0.95).abs() < 4.0 * se, "{f}");
    }

    /// Expected leaf count for a 1-D node holding `s` consecutive knots with
    /// one cutoff between each neighbouring pair.
    fn expected_leaves(depth: usize, s: usize, h: &Hyperparams, memo: &mut Vec<Vec<f64>>) -> f64 {
        if memo[depth][s] >= 0.0 {
            return memo[depth][s];
        }
        let p = if s >= 2 && depth < h.max_depth {
            p_split(depth, h.gamma, h.delta)
        } else {
            0.0
        };
        let mut e = 1.0 - p;
        if p > 0.0 {
            let mut acc = 0.0;
            for k in 1..s {
                acc += expected_leaves(depth + 1, k, h, memo)
                    + expected_leaves(depth + 1, s - k, h, memo);
            }
            e += p * acc / (s - 1) as f64;
        }
        memo[depth][s] = e;
        e
    }

    #[test]
    fn expected_leaf_count_matches_recursion() {
        let t = 6;
        // Knot values 0..t with cutoffs k(t-1)/t, one between each neighbour pair.
        let col = PointSet::from_rows(&(0..t).map(|i| [i as f64]).collect::<Vec<_>>()).unwrap();
        let ks =
            KnotSystem::build(&col, &col, &(0..t).collect::<Vec<_>>(), Some(1), t - 1).unwrap();
        let pts = ks.prepare(&col, &col).unwrap();
        let mut h = Hyperparams::new(Variant::Sk, 1);
        h.p_m = 0.0;
        h.max_depth = 3;
        h.gamma = 0.9;
        h.delta = 0.5;
        let mut memo = vec![vec![-1.0; t + 1]; h.max_depth + 2];
        let expected = expected_leaves(0, t, &h, &mut memo);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 40_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let l = sample_tree_from_prior(&h, &ks, &pts, &h.initial_p_a(), 1.0, 1.0, &mut rng)
                .unwrap()
                .n_leaves() as f64;
            sum += l;
            sum2 += l * l;
        }
        let mean = sum / n as f64;
        let se = ((sum2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - expected).abs() < 4.0 * se, "{mean} vs {expected}");
    }
}
