//! Backfitting Metropolis-within-Gibbs sampler.
//!
//! Each sweep visits the trees in order. For tree `h` it forms the partial
//! residual, updates the tree softness (single-level variant), proposes one
//! GROW / PRUNE / CHANGE move whose acceptance uses the likelihood with the
//! leaf weights integrated out, and redraws the leaf weights. The residual
//! variance, the leaf variance and the decision-type probabilities follow.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::decision_tree::{
    depth_of, BasisMatrix, DecisionTree, DecisionType, InternalNode, NodeKind, TreeSnapshot,
};
use crate::error::{Error, Result};
use crate::knots::{KnotSystem, PreparedPoints};
use crate::likelihood::{conditional_likelihood, integrated_likelihood, leaf_posterior};
use crate::priors::{
    effective_split_prob, sample_categorical, Hyperparams, ProposedRule, RuleContext, Variant,
};

/// Everything the sampler reads but never changes.
#[derive(Debug, Clone)]
pub struct TrainContext {
    pub knots: KnotSystem,
    pub points: PreparedPoints,
    /// Responses on the sampler's (rescaled) scale.
    pub y: Vec<f64>,
}

impl TrainContext {
    pub fn n(&self) -> usize {
        self.y.len()
    }
}

/// The full parameter vector at one iteration.
#[derive(Debug, Clone)]
pub struct PosteriorState {
    pub trees: Vec<DecisionTree>,
    pub sigma2: f64,
    pub sigma_mu2: f64,
    /// Probabilities of decision types `0..=k`; hard is index 0.
    pub p_a: Vec<f64>,
}

impl PosteriorState {
    /// Single-leaf trees with zero weights and prior-centred parameters.
    pub fn initial(ctx: &TrainContext, hyper: &Hyperparams) -> Self {
        let all: Arc<[usize]> = (0..ctx.knots.len()).collect();
        let alpha = hyper.alpha_g / hyper.beta_g;
        let var = crate::data::sample_variance(&ctx.y);
        let sigma_mu2 = if hyper.alpha_mu > 1.0 {
            hyper.beta_mu / (hyper.alpha_mu - 1.0)
        } else {
            hyper.beta_mu
        };
        Self {
            trees: (0..hyper.m)
                .map(|_| DecisionTree::single_leaf(all.clone(), alpha))
                .collect(),
            sigma2: if var > 0.0 { var } else { 1.0 },
            sigma_mu2,
            p_a: hyper.initial_p_a(),
        }
    }

    /// Counts of internal nodes per decision type.
    pub fn decision_counts(&self, n_decisions: usize) -> Vec<usize> {
        let mut c = vec![0; n_decisions];
        for t in &self.trees {
            for d in t.decisions() {
                c[d.index()] += 1;
            }
        }
        c
    }

    pub fn to_snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            trees: self.trees.iter().map(|t| t.to_snapshot()).collect(),
            sigma2: self.sigma2,
            sigma_mu2: self.sigma_mu2,
            p_a: self.p_a.clone(),
            alpha: self.trees.iter().map(|t| t.alpha).collect(),
        }
    }

    pub fn from_snapshot(s: &StateSnapshot, knots: &KnotSystem) -> Result<Self> {
        Ok(Self {
            trees: s
                .trees
                .iter()
                .map(|t| DecisionTree::from_snapshot(t, knots))
                .collect::<Result<_>>()?,
            sigma2: s.sigma2,
            sigma_mu2: s.sigma_mu2,
            p_a: s.p_a.clone(),
        })
    }
}

/// One NDJSON line of a posterior sample file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub trees: Vec<TreeSnapshot>,
    pub sigma2: f64,
    pub sigma_mu2: f64,
    #[serde(rename = "p_A")]
    pub p_a: Vec<f64>,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveStats {
    pub grow_proposed: u64,
    pub grow_accepted: u64,
    pub prune_proposed: u64,
    pub prune_accepted: u64,
    pub change_proposed: u64,
    pub change_accepted: u64,
    pub alpha_proposed: u64,
    pub alpha_accepted: u64,
    /// Leaf-posterior factorizations that needed jitter.
    pub jitter_events: u64,
}

impl MoveStats {
    pub fn merge(&mut self, o: &MoveStats) {
        self.grow_proposed += o.grow_proposed;
        self.grow_accepted += o.grow_accepted;
        self.prune_proposed += o.prune_proposed;
        self.prune_accepted += o.prune_accepted;
        self.change_proposed += o.change_proposed;
        self.change_accepted += o.change_accepted;
        self.alpha_proposed += o.alpha_proposed;
        self.alpha_accepted += o.alpha_accepted;
        self.jitter_events += o.jitter_events;
    }
}

/// Which blocks a sweep updates; everything is on by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerOptions {
    pub tree_moves: bool,
    pub update_leaves: bool,
    pub update_sigma2: bool,
    pub update_sigma_mu2: bool,
    pub update_p_a: bool,
    pub update_alpha: bool,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self {
            tree_moves: true,
            update_leaves: true,
            update_sigma2: true,
            update_sigma_mu2: true,
            update_p_a: true,
            update_alpha: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter <= self.burn_in {
            return Err(Error::InvalidConfig(format!(
                "n_iter ({}) must exceed burn_in ({})",
                self.n_iter, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thin must be positive".into()));
        }
        Ok(())
    }

    /// Whether iteration `t` (1-based) is kept.
    pub fn keeps(&self, t: usize) -> bool {
        t > self.burn_in && (t - self.burn_in).is_multiple_of(self.thin)
    }
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub snapshots: Vec<PosteriorState>,
    pub stats: MoveStats,
}

/// Metropolis-Hastings acceptance.
pub fn mh_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    if log_ratio >= 0.0 {
        return true;
    }
    rng.random::<f64>().ln() < log_ratio
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Inverse-Gamma draw as `scale / Gamma(shape, 1)`.
fn inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0).expect("positive shape");
    scale / g.sample(rng)
}

/// σ² from its Inverse-Gamma conditional given the residual sum of squares.
pub fn sample_sigma2<R: Rng + ?Sized>(
    sse: f64,
    n: usize,
    nu: f64,
    lambda: f64,
    rng: &mut R,
) -> f64 {
    inverse_gamma(0.5 * (n as f64 + nu), 0.5 * sse + 0.5 * nu * lambda, rng)
}

/// σ²_μ from its Inverse-Gamma conditional.
pub fn sample_sigma_mu2<R: Rng + ?Sized>(
    sum_mu2: f64,
    total_leaves: usize,
    alpha_mu: f64,
    beta_mu: f64,
    rng: &mut R,
) -> f64 {
    inverse_gamma(
        alpha_mu + 0.5 * total_leaves as f64,
        beta_mu + 0.5 * sum_mu2,
        rng,
    )
}

/// Decision-type probabilities given per-type node counts.
pub fn sample_p_a<R: Rng + ?Sized>(counts: &[usize], hyper: &Hyperparams, rng: &mut R) -> Vec<f64> {
    if hyper.hard_only {
        return hyper.initial_p_a();
    }
    let draw =
        |shape: f64, rng: &mut R| Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
    let g: Vec<f64> = match hyper.variant {
        Variant::Sk => counts
            .iter()
            .zip(&hyper.psi)
            .map(|(&c, &psi)| draw(c as f64 + psi, rng))
            .collect(),
        Variant::S2 => {
            let soft: usize = counts[1..].iter().sum();
            vec![
                draw(counts[0] as f64 + hyper.s_a, rng),
                draw(soft as f64 + hyper.s_b, rng),
            ]
        }
    };
    let total: f64 = g.iter().sum();
    g.into_iter().map(|v| v / total).collect()
}

/// Normalized full-conditional weights of a node's decision type.
pub fn decision_weights(log_lik: &[f64], p: &[f64]) -> Vec<f64> {
    let lw: Vec<f64> = log_lik.iter().zip(p).map(|(l, q)| l + q.ln()).collect();
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lw.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// One Metropolis-Hastings update of a tree's softness with a Gamma
/// proposal centred on the current value.
pub fn alpha_mh_step<R: Rng + ?Sized>(
    alpha: f64,
    hyper: &Hyperparams,
    mut log_lik: impl FnMut(f64) -> Result<f64>,
    rng: &mut R,
) -> Result<(f64, bool)> {
    let d = hyper.alpha_proposal_shape;
    let proposal = Gamma::new(d, alpha / d).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let cand = proposal.sample(rng);
    if !(cand > 0.0) {
        return Ok((alpha, false));
    }
    let log_q = |x: f64, a: f64| d * (d / a).ln() + (d - 1.0) * x.ln() - d * x / a;
    let log_tr = log_q(alpha, cand) - log_q(cand, alpha);
    let log_pr = (hyper.alpha_g - 1.0) * (cand / alpha).ln() - hyper.beta_g * (cand - alpha);
    let log_lr = log_lik(cand)? - log_lik(alpha)?;
    if mh_accept(log_tr + log_pr + log_lr, rng) {
        Ok((cand, true))
    } else {
        Ok((alpha, false))
    }
}

/// Basis with leaf `leaf` replaced by its two children's columns.
fn split_column(basis: &BasisMatrix, leaf: u64, left: Vec<f64>, right: Vec<f64>) -> BasisMatrix {
    let mut pairs: Vec<(u64, Vec<f64>)> = basis
        .leaf_ids
        .iter()
        .zip(&basis.cols)
        .filter(|(&id, _)| id != leaf)
        .map(|(&id, c)| (id, c.clone()))
        .collect();
    pairs.push((2 * leaf, left));
    pairs.push((2 * leaf + 1, right));
    pairs.sort_by_key(|p| p.0);
    let (leaf_ids, cols) = pairs.into_iter().unzip();
    BasisMatrix {
        n: basis.n,
        leaf_ids,
        cols,
    }
}

/// Basis with the children of `node` merged into one column.
fn merge_columns(basis: &BasisMatrix, node: u64) -> (BasisMatrix, Vec<f64>) {
    let l = basis.position(2 * node).expect("left child is a leaf");
    let r = basis.position(2 * node + 1).expect("right child is a leaf");
    let merged: Vec<f64> = basis.cols[l]
        .iter()
        .zip(&basis.cols[r])
        .map(|(a, b)| a + b)
        .collect();
    let mut pairs: Vec<(u64, Vec<f64>)> = basis
        .leaf_ids
        .iter()
        .zip(&basis.cols)
        .filter(|(&id, _)| id != 2 * node && id != 2 * node + 1)
        .map(|(&id, c)| (id, c.clone()))
        .collect();
    pairs.push((node, merged.clone()));
    pairs.sort_by_key(|p| p.0);
    let (leaf_ids, cols) = pairs.into_iter().unzip();
    (
        BasisMatrix {
            n: basis.n,
            leaf_ids,
            cols,
        },
        merged,
    )
}

fn gated_columns(
    parent: &[f64],
    gap: &[f64],
    decision: DecisionType,
    levels: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut left = Vec::with_capacity(parent.len());
    let mut right = Vec::with_capacity(parent.len());
    for (p, g) in parent.iter().zip(gap) {
        let z = crate::decision_tree::gate_from_gap(*g, decision, levels);
        left.push(p * z);
        right.push(p * (1.0 - z));
    }
    (left, right)
}

/// Variance parameters and weights shared by the move evaluations.
#[derive(Debug, Clone, Copy)]
pub struct MoveParams<'a> {
    pub sigma2: f64,
    pub sigma_mu2: f64,
    pub p_a: &'a [f64],
    pub levels: &'a [f64],
}

/// A fully evaluated GROW proposal.
#[derive(Debug, Clone)]
pub struct GrowEval {
    pub leaf: u64,
    pub log_ratio: f64,
    /// Log of the transition and tree-structure ratios (rule probability
    /// included in both, so it cancels).
    pub log_structure: f64,
    pub p_rule: f64,
    pub decisions: Vec<usize>,
    pub log_weights: Vec<f64>,
    bases: Vec<BasisMatrix>,
    node: InternalNode,
    left: Arc<[usize]>,
    right: Arc<[usize]>,
}

/// Tree-structure and transition terms shared by GROW and its reverse.
fn structure_terms(
    hyper: &Hyperparams,
    knots: &KnotSystem,
    node_id: u64,
    node_knots: &[usize],
    left: &[usize],
    right: &[usize],
    p_rule: f64,
    n_leaves_small: usize,
    n_prunable_big: usize,
) -> f64 {
    let depth = depth_of(node_id);
    let p_d = effective_split_prob(
        hyper,
        depth,
        RuleContext::new(knots, node_knots, hyper.p_m).has_rule(),
    );
    let p_l = effective_split_prob(
        hyper,
        depth + 1,
        RuleContext::new(knots, left, hyper.p_m).has_rule(),
    );
    let p_r = effective_split_prob(
        hyper,
        depth + 1,
        RuleContext::new(knots, right, hyper.p_m).has_rule(),
    );
    let log_tr = hyper.moves.prune.ln() + (n_leaves_small as f64).ln()
        - hyper.moves.grow.ln()
        - (n_prunable_big as f64).ln()
        - p_rule.ln();
    let log_tsr = p_d.ln() + (1.0 - p_l).ln() + (1.0 - p_r).ln() + p_rule.ln() - (1.0 - p_d).ln();
    log_tr + log_tsr
}

/// Evaluates growing `leaf` with `proposal`.
pub fn evaluate_grow(
    hyper: &Hyperparams,
    ctx: &TrainContext,
    tree: &DecisionTree,
    basis: &BasisMatrix,
    r: &[f64],
    leaf: u64,
    proposal: ProposedRule,
    params: MoveParams<'_>,
) -> Result<GrowEval> {
    let node_knots = tree.node(leaf).expect("leaf exists").knots.clone();
    let p_rule = RuleContext::new(&ctx.knots, &node_knots, hyper.p_m).probability(&proposal.rule);
    let prunable = tree.prunable_ids();
    let parent_was_prunable = leaf > 1 && prunable.contains(&(leaf / 2));
    let n_prunable_big = prunable.len() - usize::from(parent_was_prunable) + 1;
    let log_structure = structure_terms(
        hyper,
        &ctx.knots,
        leaf,
        &node_knots,
        &proposal.left,
        &proposal.right,
        p_rule,
        tree.n_leaves(),
        n_prunable_big,
    );
    let node = InternalNode::build(
        &ctx.knots,
        &ctx.points,
        proposal.rule,
        &proposal.left,
        &proposal.right,
        DecisionType::Hard,
    )?;
    let col = &basis.cols[basis.position(leaf).expect("leaf column")];
    let mut decisions = Vec::new();
    let mut log_weights = Vec::new();
    let mut bases = Vec::new();
    for l in hyper.allowed_decisions() {
        if !(params.p_a[l] > 0.0) {
            continue;
        }
        let (cl, cr) = gated_columns(col, &node.gap, DecisionType::from_index(l), params.levels);
        let b = split_column(basis, leaf, cl, cr);
        let il = integrated_likelihood(r, &b, params.sigma2, params.sigma_mu2)?;
        decisions.push(l);
        log_weights.push(params.p_a[l].ln() + il);
        bases.push(b);
    }
    let il_cur = integrated_likelihood(r, basis, params.sigma2, params.sigma_mu2)?;
    let log_ratio = log_structure + log_sum_exp(&log_weights) - il_cur;
    Ok(GrowEval {
        leaf,
        log_ratio,
        log_structure,
        p_rule,
        decisions,
        log_weights,
        bases,
        node,
        left: proposal.left,
        right: proposal.right,
    })
}

impl GrowEval {
    /// Applies the proposal with decision drawn from its conditional.
    pub fn apply<R: Rng + ?Sized>(
        self,
        tree: &mut DecisionTree,
        basis: &mut BasisMatrix,
        rng: &mut R,
    ) -> Result<DecisionType> {
        let m = self
            .log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_weights.iter().map(|v| (v - m).exp()).collect();
        let pick = sample_categorical(&w, rng);
        self.apply_with(pick, tree, basis)
    }

    /// Applies the proposal using candidate `pick` (an index into `decisions`).
    pub fn apply_with(
        mut self,
        pick: usize,
        tree: &mut DecisionTree,
        basis: &mut BasisMatrix,
    ) -> Result<DecisionType> {
        let decision = DecisionType::from_index(self.decisions[pick]);
        self.node.decision = decision;
        tree.grow(self.leaf, self.node, self.left, self.right)?;
        *basis = self.bases.swap_remove(pick);
        Ok(decision)
    }
}

/// Log Hastings ratio of pruning `node` (children merged into a leaf).
pub fn evaluate_prune(
    hyper: &Hyperparams,
    ctx: &TrainContext,
    tree: &DecisionTree,
    basis: &BasisMatrix,
    r: &[f64],
    node: u64,
    params: MoveParams<'_>,
) -> Result<(f64, BasisMatrix)> {
    let tn = tree.node(node).expect("node exists");
    let inner = tn.internal().expect("internal node");
    let left = tree.node(2 * node).expect("left child").knots.clone();
    let right = tree.node(2 * node + 1).expect("right child").knots.clone();
    let p_rule = RuleContext::new(&ctx.knots, &tn.knots, hyper.p_m).probability(&inner.rule);
    let log_structure = structure_terms(
        hyper,
        &ctx.knots,
        node,
        &tn.knots,
        &left,
        &right,
        p_rule,
        tree.n_leaves() - 1,
        tree.prunable_ids().len(),
    );
    let (pruned, merged) = merge_columns(basis, node);
    let mut log_weights = Vec::new();
    for l in hyper.allowed_decisions() {
        if !(params.p_a[l] > 0.0) {
            continue;
        }
        let (cl, cr) = gated_columns(
            &merged,
            &inner.gap,
            DecisionType::from_index(l),
            params.levels,
        );
        let b = split_column(&pruned, node, cl, cr);
        log_weights.push(
            params.p_a[l].ln() + integrated_likelihood(r, &b, params.sigma2, params.sigma_mu2)?,
        );
    }
    let il_pruned = integrated_likelihood(r, &pruned, params.sigma2, params.sigma_mu2)?;
    let grow_ratio = log_structure + log_sum_exp(&log_weights) - il_pruned;
    Ok((-grow_ratio, pruned))
}

/// Log Hastings ratio of switching `node` to decision `new`.
pub fn evaluate_change(
    tree: &DecisionTree,
    basis: &BasisMatrix,
    r: &[f64],
    node: u64,
    new: DecisionType,
    params: MoveParams<'_>,
) -> Result<(f64, BasisMatrix)> {
    let inner = tree
        .node(node)
        .and_then(|n| n.internal())
        .expect("internal node");
    let (pruned, merged) = merge_columns(basis, node);
    let (cl, cr) = gated_columns(&merged, &inner.gap, new, params.levels);
    let proposed = split_column(&pruned, node, cl, cr);
    let p_new = params.p_a[new.index()];
    if !(p_new > 0.0) {
        return Ok((f64::NEG_INFINITY, proposed));
    }
    let il_new = integrated_likelihood(r, &proposed, params.sigma2, params.sigma_mu2)?;
    let il_cur = integrated_likelihood(r, basis, params.sigma2, params.sigma_mu2)?;
    Ok((
        p_new.ln() - params.p_a[inner.decision.index()].ln() + il_new - il_cur,
        proposed,
    ))
}

/// A single chain with its cached per-tree bases and fits.
pub struct Chain<'a> {
    ctx: &'a TrainContext,
    hyper: &'a Hyperparams,
    opts: SamplerOptions,
    state: PosteriorState,
    bases: Vec<BasisMatrix>,
    fits: Vec<Vec<f64>>,
    total: Vec<f64>,
    stats: MoveStats,
    rng: ChaCha8Rng,
}

impl<'a> Chain<'a> {
    pub fn new(
        ctx: &'a TrainContext,
        hyper: &'a Hyperparams,
        opts: SamplerOptions,
        seed: u64,
    ) -> Result<Self> {
        Self::with_state(ctx, hyper, opts, PosteriorState::initial(ctx, hyper), seed)
    }

    pub fn with_state(
        ctx: &'a TrainContext,
        hyper: &'a Hyperparams,
        opts: SamplerOptions,
        state: PosteriorState,
        seed: u64,
    ) -> Result<Self> {
        hyper.validate()?;
        if state.trees.len() != hyper.m {
            return Err(Error::InvalidInput(
                "state tree count differs from m".into(),
            ));
        }
        let n = ctx.n();
        let bases: Vec<BasisMatrix> = state
            .trees
            .iter()
            .map(|t| t.train_basis(n, &hyper.levels(t.alpha)))
            .collect();
        let fits: Vec<Vec<f64>> = bases
            .iter()
            .zip(&state.trees)
            .map(|(b, t)| b.apply(&t.leaf_values()))
            .collect();
        let mut total = vec![0.0; n];
        for f in &fits {
            for (t, v) in total.iter_mut().zip(f) {
                *t += v;
            }
        }
        Ok(Self {
            ctx,
            hyper,
            opts,
            state,
            bases,
            fits,
            total,
            stats: MoveStats::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn state(&self) -> &PosteriorState {
        &self.state
    }

    pub fn stats(&self) -> &MoveStats {
        &self.stats
    }

    /// Current ensemble fit at the training points.
    pub fn fit(&self) -> &[f64] {
        &self.total
    }

    pub fn sweep(&mut self) -> Result<()> {
        let n = self.ctx.n();
        for h in 0..self.hyper.m {
            let r: Vec<f64> = (0..n)
                .map(|i| self.ctx.y[i] - self.total[i] + self.fits[h][i])
                .collect();
            if self.hyper.variant == Variant::S2 && self.opts.update_alpha {
                self.alpha_step(h, &r)?;
            }
            if self.opts.tree_moves {
                self.tree_move(h, &r)?;
            }
            if self.opts.update_leaves {
                let post =
                    leaf_posterior(&r, &self.bases[h], self.state.sigma2, self.state.sigma_mu2)?;
                if post.jittered {
                    self.stats.jitter_events += 1;
                }
                let mu = post.sample(&mut self.rng);
                self.state.trees[h].set_leaf_values(&mu);
            }
            let fit = self.bases[h].apply(&self.state.trees[h].leaf_values());
            for i in 0..n {
                self.total[i] += fit[i] - self.fits[h][i];
            }
            self.fits[h] = fit;
        }
        if self.opts.update_sigma2 {
            let sse: f64 = self
                .ctx
                .y
                .iter()
                .zip(&self.total)
                .map(|(y, f)| (y - f) * (y - f))
                .sum();
            self.state.sigma2 =
                sample_sigma2(sse, n, self.hyper.nu, self.hyper.lambda, &mut self.rng);
        }
        if self.opts.update_sigma_mu2 {
            let (mut s, mut l) = (0.0, 0);
            for t in &self.state.trees {
                let mu = t.leaf_values();
                s += mu.iter().map(|v| v * v).sum::<f64>();
                l += mu.len();
            }
            self.state.sigma_mu2 =
                sample_sigma_mu2(s, l, self.hyper.alpha_mu, self.hyper.beta_mu, &mut self.rng);
        }
        if self.opts.update_p_a {
            let counts = self.state.decision_counts(self.hyper.n_decisions());
            self.state.p_a = sample_p_a(&counts, self.hyper, &mut self.rng);
        }
        Ok(())
    }

    fn alpha_step(&mut self, h: usize, r: &[f64]) -> Result<()> {
        let tree = &self.state.trees[h];
        let has_soft = tree.decisions().any(|d| d != DecisionType::Hard);
        let mu = tree.leaf_values();
        let n = self.ctx.n();
        let (s2, hyper, cur_basis) = (self.state.sigma2, self.hyper, &self.bases[h]);
        let mut cand_basis = None;
        let (alpha, accepted) = alpha_mh_step(
            tree.alpha,
            hyper,
            |a| {
                if !has_soft {
                    return Ok(0.0);
                }
                if a == tree.alpha {
                    return conditional_likelihood(r, cur_basis, &mu, s2);
                }
                let b = tree.train_basis(n, &hyper.levels(a));
                let v = conditional_likelihood(r, &b, &mu, s2);
                cand_basis = Some(b);
                v
            },
            &mut self.rng,
        )?;
        self.stats.alpha_proposed += 1;
        if accepted {
            self.stats.alpha_accepted += 1;
            self.state.trees[h].alpha = alpha;
            if let Some(b) = cand_basis {
                self.bases[h] = b;
            }
        }
        Ok(())
    }

    fn tree_move(&mut self, h: usize, r: &[f64]) -> Result<()> {
        let levels = self.hyper.levels(self.state.trees[h].alpha);
        let params = MoveParams {
            sigma2: self.state.sigma2,
            sigma_mu2: self.state.sigma_mu2,
            p_a: &self.state.p_a,
            levels: &levels,
        };
        let mv = &self.hyper.moves;
        let u: f64 = self.rng.random();
        let tree = &self.state.trees[h];
        if u < mv.grow {
            self.stats.grow_proposed += 1;
            let leaves = tree.leaf_ids();
            let leaf = leaves[self.rng.random_range(0..leaves.len())];
            let node_knots = tree.node(leaf).expect("leaf").knots.clone();
            let rc = RuleContext::new(&self.ctx.knots, &node_knots, self.hyper.p_m);
            if effective_split_prob(self.hyper, depth_of(leaf), rc.has_rule()) == 0.0 {
                return Ok(());
            }
            let Some(proposal) = rc.sample(&mut self.rng) else {
                return Ok(());
            };
            let eval = evaluate_grow(
                self.hyper,
                self.ctx,
                tree,
                &self.bases[h],
                r,
                leaf,
                proposal,
                params,
            )?;
            if mh_accept(eval.log_ratio, &mut self.rng) {
                self.stats.grow_accepted += 1;
                eval.apply(&mut self.state.trees[h], &mut self.bases[h], &mut self.rng)?;
            }
        } else if u < mv.grow + mv.prune {
            self.stats.prune_proposed += 1;
            let prunable = tree.prunable_ids();
            if prunable.is_empty() {
                return Ok(());
            }
            let node = prunable[self.rng.random_range(0..prunable.len())];
            let (log_ratio, pruned) =
                evaluate_prune(self.hyper, self.ctx, tree, &self.bases[h], r, node, params)?;
            if mh_accept(log_ratio, &mut self.rng) {
                self.stats.prune_accepted += 1;
                self.state.trees[h].prune(node)?;
                self.bases[h] = pruned;
            }
        } else {
            self.stats.change_proposed += 1;
            let allowed = self.hyper.allowed_decisions();
            let prunable = tree.prunable_ids();
            if prunable.is_empty() || allowed.len() < 2 {
                return Ok(());
            }
            let node = prunable[self.rng.random_range(0..prunable.len())];
            let new = DecisionType::from_index(allowed[self.rng.random_range(0..allowed.len())]);
            let (log_ratio, proposed) =
                evaluate_change(tree, &self.bases[h], r, node, new, params)?;
            if mh_accept(log_ratio, &mut self.rng) {
                self.stats.change_accepted += 1;
                if let Some(n) = self.state.trees[h].node_mut(node) {
                    if let NodeKind::Internal(inner) = &mut n.kind {
                        inner.decision = new;
                    }
                }
                self.bases[h] = proposed;
            }
        }
        Ok(())
    }
}

/// Runs one chain from the initial state.
pub fn run_chain(
    ctx: &TrainContext,
    hyper: &Hyperparams,
    opts: SamplerOptions,
    schedule: Schedule,
    seed: u64,
) -> Result<ChainOutput> {
    run_chain_from(
        ctx,
        hyper,
        opts,
        PosteriorState::initial(ctx, hyper),
        schedule,
        seed,
    )
}

/// Runs one chain from a given state.
pub fn run_chain_from(
    ctx: &TrainContext,
    hyper: &Hyperparams,
    opts: SamplerOptions,
    state: PosteriorState,
    schedule: Schedule,
    seed: u64,
) -> Result<ChainOutput> {
    schedule.validate()?;
    let mut chain = Chain::with_state(ctx, hyper, opts, state, seed)?;
    let mut snapshots = Vec::with_capacity((schedule.n_iter - schedule.burn_in) / schedule.thin);
    for t in 1..=schedule.n_iter {
        chain.sweep()?;
        if schedule.keeps(t) {
            snapshots.push(chain.state.clone());
        }
    }
    Ok(ChainOutput {
        snapshots,
        stats: chain.stats,
    })
}
