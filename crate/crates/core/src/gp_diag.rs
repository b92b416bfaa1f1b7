//! Gaussian-process moments induced by a sum of soft trees.
//!
//! Conditional on the trees, `f(d) = Σ_h Φ_h(d)ᵀ M_h` is Gaussian in the
//! leaf weights, so its prior and posterior covariances are available in
//! closed form. The functions here compute them and provide Monte Carlo
//! counterparts for checking.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::decision_tree::{gate_from_gap, BasisMatrix, DecisionTree, DecisionType, NodeKind};
use crate::error::{Error, Result};
use crate::knots::{KnotSystem, PreparedPoints};
use crate::likelihood::leaf_posterior;
use crate::priors::{sample_categorical, Hyperparams};
use crate::sampler::{PosteriorState, TrainContext};

/// Analytic covariance next to its Monte Carlo estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub analytic: Vec<Vec<f64>>,
    pub monte_carlo: Vec<Vec<f64>>,
    pub standard_error: Vec<Vec<f64>>,
    pub max_abs_deviation: f64,
    /// Largest deviation in units of its standard error.
    pub max_z: f64,
    pub psd: bool,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

impl CovarianceReport {
    pub fn new(analytic: &DMatrix<f64>, mc: &MonteCarloCov) -> Result<Self> {
        if analytic.shape() != mc.mean.shape() {
            return Err(Error::DimensionMismatch {
                expected: analytic.nrows(),
                found: mc.mean.nrows(),
            });
        }
        let mut max_abs: f64 = 0.0;
        let mut max_z: f64 = 0.0;
        for ((a, m), s) in analytic.iter().zip(mc.mean.iter()).zip(mc.se.iter()) {
            let d = (a - m).abs();
            max_abs = max_abs.max(d);
            if d > 0.0 {
                max_z = max_z.max(if *s > 0.0 { d / s } else { f64::INFINITY });
            }
        }
        Ok(Self {
            analytic: rows(analytic),
            monte_carlo: rows(&mc.mean),
            standard_error: rows(&mc.se),
            max_abs_deviation: max_abs,
            max_z,
            psd: is_psd(analytic),
        })
    }
}

/// Symmetric with smallest eigenvalue at least `-1e-8 · trace`.
pub fn is_psd(m: &DMatrix<f64>) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    let scale = m
        .iter()
        .fold(0.0_f64, |a, v| a.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return false;
            }
        }
    }
    if n == 0 {
        return true;
    }
    let min = SymmetricEigen::new(m.clone()).eigenvalues.min();
    min >= -1e-8 * m.trace().abs()
}

fn prior_leaf_variance(hyper: &Hyperparams) -> Result<f64> {
    if hyper.alpha_mu <= 1.0 {
        return Err(Error::InvalidConfig(
            "alpha_mu must exceed 1 for a finite prior variance".into(),
        ));
    }
    Ok(hyper.beta_mu / (hyper.alpha_mu - 1.0))
}

/// `Σ_l E[Φ_l(d_i) Φ_l(d_j)]` where each internal node's decision is drawn
/// from `weights(node)` independently.
fn expected_products(
    tree: &DecisionTree,
    gaps: &BTreeMap<u64, Vec<f64>>,
    levels: &[f64],
    n: usize,
    weights: impl Fn(DecisionType) -> Vec<(DecisionType, f64)>,
) -> DMatrix<f64> {
    let mut reach: BTreeMap<u64, DMatrix<f64>> = BTreeMap::new();
    reach.insert(1, DMatrix::from_element(n, n, 1.0));
    let mut total = DMatrix::zeros(n, n);
    for (id, node) in tree.nodes() {
        let e = reach.remove(&id).expect("parent visited first");
        match &node.kind {
            NodeKind::Leaf { .. } => total += e,
            NodeKind::Internal(inner) => {
                let g = &gaps[&id];
                let mut left = DMatrix::zeros(n, n);
                let mut right = DMatrix::zeros(n, n);
                for (d, p) in weights(inner.decision) {
                    if p == 0.0 {
                        continue;
                    }
                    let z: Vec<f64> = g.iter().map(|&x| gate_from_gap(x, d, levels)).collect();
                    for i in 0..n {
                        for j in 0..n {
                            left[(i, j)] += p * z[i] * z[j];
                            right[(i, j)] += p * (1.0 - z[i]) * (1.0 - z[j]);
                        }
                    }
                }
                reach.insert(2 * id, e.component_mul(&left));
                reach.insert(2 * id + 1, e.component_mul(&right));
            }
        }
    }
    total
}

fn prior_cov(
    trees: &[DecisionTree],
    knots: &KnotSystem,
    pts: &PreparedPoints,
    hyper: &Hyperparams,
    p_a: Option<&[f64]>,
) -> Result<DMatrix<f64>> {
    let v = prior_leaf_variance(hyper)?;
    let n = pts.len();
    let parts: Vec<DMatrix<f64>> = trees
        .par_iter()
        .map(|t| {
            let gaps = t.gaps(knots, pts)?;
            let levels = hyper.levels(t.alpha);
            Ok(expected_products(t, &gaps, &levels, n, |own| match p_a {
                None => vec![(own, 1.0)],
                Some(p) => p
                    .iter()
                    .enumerate()
                    .map(|(c, &w)| (DecisionType::from_index(c), w))
                    .collect(),
            }))
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().fold(DMatrix::zeros(n, n), |a, b| a + b) * v)
}

/// Prior covariance of `f` given trees and their decision types.
pub fn prior_cov_given_ta(
    trees: &[DecisionTree],
    knots: &KnotSystem,
    pts: &PreparedPoints,
    hyper: &Hyperparams,
) -> Result<DMatrix<f64>> {
    prior_cov(trees, knots, pts, hyper, None)
}

/// Prior covariance of `f` given trees, averaging each node's decision type
/// over `p_a` by exact enumeration.
pub fn prior_cov_given_t(
    trees: &[DecisionTree],
    p_a: &[f64],
    knots: &KnotSystem,
    pts: &PreparedPoints,
    hyper: &Hyperparams,
) -> Result<DMatrix<f64>> {
    if p_a.len() != hyper.n_decisions() {
        return Err(Error::DimensionMismatch {
            expected: hyper.n_decisions(),
            found: p_a.len(),
        });
    }
    prior_cov(trees, knots, pts, hyper, Some(p_a))
}

/// Entrywise sample mean of `f_i f_j` and its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloCov {
    pub mean: DMatrix<f64>,
    pub se: DMatrix<f64>,
}

struct Moments {
    sum: DMatrix<f64>,
    sum_sq: DMatrix<f64>,
    count: usize,
}

impl Moments {
    fn new(n: usize) -> Self {
        Self {
            sum: DMatrix::zeros(n, n),
            sum_sq: DMatrix::zeros(n, n),
            count: 0,
        }
    }

    fn push(&mut self, f: &[f64]) {
        let n = f.len();
        for i in 0..n {
            for j in 0..n {
                let v = f[i] * f[j];
                self.sum[(i, j)] += v;
                self.sum_sq[(i, j)] += v * v;
            }
        }
        self.count += 1;
    }

    fn finish(self) -> MonteCarloCov {
        let c = self.count as f64;
        let mean = &self.sum / c;
        let se = DMatrix::from_fn(mean.nrows(), mean.ncols(), |i, j| {
            let var = (self.sum_sq[(i, j)] / c - mean[(i, j)].powi(2)).max(0.0) * c / (c - 1.0);
            (var / c).sqrt()
        });
        MonteCarloCov { mean, se }
    }
}

/// Leaf-probability columns with decisions chosen by `decide`.
fn leaf_columns(
    tree: &DecisionTree,
    gaps: &BTreeMap<u64, Vec<f64>>,
    levels: &[f64],
    n: usize,
    mut decide: impl FnMut(DecisionType) -> DecisionType,
) -> Vec<Vec<f64>> {
    let mut path: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    path.insert(1, vec![1.0; n]);
    let mut cols = Vec::new();
    for (id, node) in tree.nodes() {
        let p = path.remove(&id).expect("parent visited first");
        match &node.kind {
            NodeKind::Leaf { .. } => cols.push(p),
            NodeKind::Internal(inner) => {
                let d = decide(inner.decision);
                let z: Vec<f64> = gaps[&id]
                    .iter()
                    .map(|&x| gate_from_gap(x, d, levels))
                    .collect();
                path.insert(2 * id, p.iter().zip(&z).map(|(a, b)| a * b).collect());
                path.insert(
                    2 * id + 1,
                    p.iter().zip(&z).map(|(a, b)| a * (1.0 - b)).collect(),
                );
            }
        }
    }
    cols
}

/// Monte Carlo estimate of the prior covariance from draws of
/// `σ_μ² ~ IG(α_μ, β_μ)`, `M | σ_μ² ~ N(0, σ_μ²)` and, when `p_a` is given,
/// each node's decision type.
pub fn prior_cov_monte_carlo<R: Rng + ?Sized>(
    trees: &[DecisionTree],
    p_a: Option<&[f64]>,
    knots: &KnotSystem,
    pts: &PreparedPoints,
    hyper: &Hyperparams,
    n_draws: usize,
    rng: &mut R,
) -> Result<MonteCarloCov> {
    prior_leaf_variance(hyper)?;
    if n_draws < 2 {
        return Err(Error::TooFewDraws {
            needed: 2,
            got: n_draws,
        });
    }
    let n = pts.len();
    let prepared: Vec<(BTreeMap<u64, Vec<f64>>, Vec<f64>)> = trees
        .iter()
        .map(|t| Ok((t.gaps(knots, pts)?, hyper.levels(t.alpha))))
        .collect::<Result<_>>()?;
    let fixed: Option<Vec<Vec<Vec<f64>>>> = match p_a {
        Some(_) => None,
        None => Some(
            trees
                .iter()
                .zip(&prepared)
                .map(|(t, (g, l))| leaf_columns(t, g, l, n, |d| d))
                .collect(),
        ),
    };
    let gamma = Gamma::new(hyper.alpha_mu, 1.0 / hyper.beta_mu)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut acc = Moments::new(n);
    let mut f = vec![0.0; n];
    for _ in 0..n_draws {
        let sd = (1.0 / gamma.sample(rng)).sqrt();
        f.iter_mut().for_each(|v| *v = 0.0);
        for (h, t) in trees.iter().enumerate() {
            let drawn;
            let cols = match (&fixed, p_a) {
                (Some(c), _) => &c[h],
                (None, Some(p)) => {
                    let (g, l) = &prepared[h];
                    drawn = leaf_columns(t, g, l, n, |_| {
                        DecisionType::from_index(sample_categorical(p, rng))
                    });
                    &drawn
                }
                (None, None) => unreachable!(),
            };
            for c in cols {
                let m = sd * rng.sample::<f64, _>(StandardNormal);
                for (fi, ci) in f.iter_mut().zip(c) {
                    *fi += ci * m;
                }
            }
        }
        acc.push(&f);
    }
    Ok(acc.finish())
}

/// Posterior mean and covariance of `f` at a set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct GpMoments {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
}

/// Which leaf weights are integrated over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosteriorMode {
    /// Tree `h`'s weights, the others held at their current values.
    HeldOut(usize),
    /// All trees' weights jointly, including cross-tree covariance.
    AllTrees,
}

fn stack(bases: &[BasisMatrix], n: usize) -> BasisMatrix {
    let cols: Vec<Vec<f64>> = bases.iter().flat_map(|b| b.cols.iter().cloned()).collect();
    BasisMatrix {
        n,
        leaf_ids: (0..cols.len() as u64).collect(),
        cols,
    }
}

/// Posterior moments of `f` (sampler scale) given the trees, decisions,
/// `σ²` and `σ_μ²` of `state`.
pub fn posterior_gp_moments(
    state: &PosteriorState,
    ctx: &TrainContext,
    eval: &PreparedPoints,
    hyper: &Hyperparams,
    mode: PosteriorMode,
) -> Result<GpMoments> {
    let n = ctx.n();
    let train: Vec<BasisMatrix> = state
        .trees
        .iter()
        .map(|t| t.basis(&ctx.knots, &ctx.points, &hyper.levels(t.alpha)))
        .collect::<Result<_>>()?;
    let at: Vec<BasisMatrix> = state
        .trees
        .iter()
        .map(|t| t.basis(&ctx.knots, eval, &hyper.levels(t.alpha)))
        .collect::<Result<_>>()?;
    let (resid, phi_train, phi_eval, mut mean) = match mode {
        PosteriorMode::HeldOut(h) => {
            if h >= state.trees.len() {
                return Err(Error::InvalidInput(format!("tree {h} out of range")));
            }
            let mut r = ctx.y.clone();
            let mut mean = vec![0.0; eval.len()];
            for (g, t) in state.trees.iter().enumerate().filter(|(g, _)| *g != h) {
                let mu = t.leaf_values();
                for (ri, fi) in r.iter_mut().zip(train[g].apply(&mu)) {
                    *ri -= fi;
                }
                for (mi, fi) in mean.iter_mut().zip(at[g].apply(&mu)) {
                    *mi += fi;
                }
            }
            (r, train[h].clone(), at[h].clone(), mean)
        }
        PosteriorMode::AllTrees => (
            ctx.y.clone(),
            stack(&train, n),
            stack(&at, eval.len()),
            vec![0.0; eval.len()],
        ),
    };
    let post = leaf_posterior(&resid, &phi_train, state.sigma2, state.sigma_mu2)?;
    let mu_hat: Vec<f64> = post.mean.iter().copied().collect();
    for (mi, fi) in mean.iter_mut().zip(phi_eval.apply(&mu_hat)) {
        *mi += fi;
    }
    let phi = DMatrix::from_fn(eval.len(), phi_eval.n_leaves(), |i, l| phi_eval.cols[l][i]);
    let cov = &phi * post.covariance() * phi.transpose();
    Ok(GpMoments {
        mean,
        cov: (&cov + cov.transpose()) * 0.5,
    })
}

/// Empirical mean and covariance of `f` across posterior samples.
pub fn snapshot_moments<'a>(
    states: impl IntoIterator<Item = &'a PosteriorState>,
    knots: &KnotSystem,
    eval: &PreparedPoints,
    hyper: &Hyperparams,
) -> Result<GpMoments> {
    let fs: Vec<Vec<f64>> = states
        .into_iter()
        .map(|s| {
            let mut f = vec![0.0; eval.len()];
            for t in &s.trees {
                let b = t.basis(knots, eval, &hyper.levels(t.alpha))?;
                for (fi, v) in f.iter_mut().zip(b.apply(&t.leaf_values())) {
                    *fi += v;
                }
            }
            Ok(f)
        })
        .collect::<Result<_>>()?;
    if fs.len() < 2 {
        return Err(Error::TooFewDraws {
            needed: 2,
            got: fs.len(),
        });
    }
    let n = eval.len();
    let c = fs.len() as f64;
    let mean: Vec<f64> = (0..n)
        .map(|i| fs.iter().map(|f| f[i]).sum::<f64>() / c)
        .collect();
    let cov = DMatrix::from_fn(n, n, |i, j| {
        fs.iter()
            .map(|f| (f[i] - mean[i]) * (f[j] - mean[j]))
            .sum::<f64>()
            / (c - 1.0)
    });
    Ok(GpMoments { mean, cov })
}

/// Monte Carlo check of the held-out-tree posterior covariance: draws of
/// tree `h`'s weights from their conditional posterior pushed through `Φ_h`.
pub fn posterior_cov_monte_carlo<R: Rng + ?Sized>(
    state: &PosteriorState,
    ctx: &TrainContext,
    eval: &PreparedPoints,
    hyper: &Hyperparams,
    h: usize,
    n_draws: usize,
    rng: &mut R,
) -> Result<MonteCarloCov> {
    let tree = state
        .trees
        .get(h)
        .ok_or_else(|| Error::InvalidInput(format!("tree {h} out of range")))?;
    if n_draws < 2 {
        return Err(Error::TooFewDraws {
            needed: 2,
            got: n_draws,
        });
    }
    let mut r = ctx.y.clone();
    for (g, t) in state.trees.iter().enumerate().filter(|(g, _)| *g != h) {
        let b = t.basis(&ctx.knots, &ctx.points, &hyper.levels(state.trees[g].alpha))?;
        for (ri, fi) in r.iter_mut().zip(b.apply(&t.leaf_values())) {
            *ri -= fi;
        }
    }
    let levels = hyper.levels(tree.alpha);
    let post = leaf_posterior(
        &r,
        &tree.basis(&ctx.knots, &ctx.points, &levels)?,
        state.sigma2,
        state.sigma_mu2,
    )?;
    let phi = tree.basis(&ctx.knots, eval, &levels)?;
    let mu_hat: Vec<f64> = post.mean.iter().copied().collect();
    let centre = phi.apply(&mu_hat);
    let mut acc = Moments::new(eval.len());
    for _ in 0..n_draws {
        let f: Vec<f64> = phi
            .apply(&post.sample(rng))
            .iter()
            .zip(&centre)
            .map(|(a, b)| a - b)
            .collect();
        acc.push(&f);
    }
    Ok(acc.finish())
}
