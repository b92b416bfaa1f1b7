//! Fitting, prediction and feature importance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PointSet};
use crate::decision_tree::SplitRule;
use crate::error::{Error, Result};
use crate::knots::KnotSystem;
use crate::priors::{multivariate_split_prob, Hyperparams, MoveProbs};
use crate::sampler::{
    run_chain, ChainOutput, MoveStats, PosteriorState, SamplerOptions, Schedule, TrainContext,
};

pub use crate::priors::Variant;

/// Golden-ratio increment used to derive per-chain seeds.
pub const CHAIN_SEED_STEP: u64 = 0x9E37_79B9_7F4A_7C15;
const KNOT_STREAM: u64 = 0x6B6E_6F74_7321_0001;
const PREDICT_STREAM: u64 = 0x7072_6564_6963_0002;

/// Seed of chain `i`.
pub fn chain_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64).wrapping_mul(CHAIN_SEED_STEP)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ablation {
    Full,
    /// Every decision is hard.
    HardOnly,
    /// Only axis-aligned splits; structured coordinates become extra
    /// unstructured features.
    NoMultivariate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub variant: Variant,
    pub ablation: Ablation,
    pub n_trees: usize,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub n_chains: usize,
    /// Cap on concurrently running chains.
    pub max_threads: Option<usize>,
    /// Defaults to `min(100, n)`.
    pub n_knots: Option<usize>,
    /// Defaults to `min(3, knots - 1)`.
    pub embed_dim: Option<usize>,
    pub grid_size: usize,
    pub q: f64,
    pub gamma: f64,
    pub delta: f64,
    pub max_depth: usize,
    /// Defaults to `d_M / (d_M + p)`.
    pub p_m: Option<f64>,
    pub nu: f64,
    pub alpha_mu: f64,
    pub s_a: f64,
    pub s_b: f64,
    pub alpha_g: f64,
    pub beta_g: f64,
    pub alpha_proposal_shape: f64,
    pub base_levels: Vec<f64>,
    pub moves: MoveProbs,
}

impl Default for FitConfig {
    fn default() -> Self {
        let h = Hyperparams::new(Variant::Sk, 30);
        Self {
            variant: Variant::Sk,
            ablation: Ablation::Full,
            n_trees: 30,
            n_iter: 2000,
            burn_in: 1000,
            thin: 5,
            seed: 0,
            n_chains: 1,
            max_threads: None,
            n_knots: None,
            embed_dim: None,
            grid_size: 100,
            q: h.q,
            gamma: h.gamma,
            delta: h.delta,
            max_depth: h.max_depth,
            p_m: None,
            nu: h.nu,
            alpha_mu: h.alpha_mu,
            s_a: h.s_a,
            s_b: h.s_b,
            alpha_g: h.alpha_g,
            beta_g: h.beta_g,
            alpha_proposal_shape: h.alpha_proposal_shape,
            base_levels: h.base_levels,
            moves: h.moves,
        }
    }
}

impl FitConfig {
    pub fn schedule(&self) -> Schedule {
        Schedule {
            n_iter: self.n_iter,
            burn_in: self.burn_in,
            thin: self.thin,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule().validate()?;
        if self.n_chains == 0 {
            return Err(Error::InvalidConfig("n_chains must be at least 1".into()));
        }
        if self.grid_size == 0 {
            return Err(Error::InvalidConfig("grid_size must be positive".into()));
        }
        if self.max_threads == Some(0) {
            return Err(Error::InvalidConfig("max_threads must be positive".into()));
        }
        Ok(())
    }

    /// Hyperparameters calibrated to the rescaled responses.
    pub fn hyperparams(&self, y_scaled: &[f64], d_m: usize, p: usize) -> Result<Hyperparams> {
        let mut h = Hyperparams::new(self.variant, self.n_trees);
        h.q = self.q;
        h.gamma = self.gamma;
        h.delta = self.delta;
        h.max_depth = self.max_depth;
        h.nu = self.nu;
        h.alpha_mu = self.alpha_mu;
        h.s_a = self.s_a;
        h.s_b = self.s_b;
        h.alpha_g = self.alpha_g;
        h.beta_g = self.beta_g;
        h.alpha_proposal_shape = self.alpha_proposal_shape;
        h.base_levels = self.base_levels.clone();
        h.psi = vec![1.0; h.n_decisions()];
        h.moves = self.moves.clone();
        h.calibrate(y_scaled, d_m, p)?;
        h.p_m = match self.ablation {
            Ablation::NoMultivariate => 0.0,
            _ => self.p_m.unwrap_or_else(|| multivariate_split_prob(d_m, p)),
        };
        h.hard_only = self.ablation == Ablation::HardOnly;
        h.validate()?;
        Ok(h)
    }
}

/// Affine map of responses onto `[-0.5, 0.5]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub min: f64,
    pub max: f64,
}

impl Scaling {
    pub fn from_values(y: &[f64]) -> Result<Self> {
        let min = y.iter().copied().fold(f64::INFINITY, f64::min);
        let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) {
            return Err(Error::InvalidInput("response is constant".into()));
        }
        Ok(Self { min, max })
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    pub fn to_model(&self, y: f64) -> f64 {
        (y - self.min) / self.range() - 0.5
    }

    pub fn to_original(&self, v: f64) -> f64 {
        (v + 0.5) * self.range() + self.min
    }
}

#[derive(Debug, Clone)]
pub struct FittedModel {
    pub config: FitConfig,
    pub hyper: Hyperparams,
    pub knots: KnotSystem,
    /// Training rows used as knots.
    pub knot_rows: Vec<usize>,
    pub scaling: Scaling,
    /// Kept states per chain.
    pub chains: Vec<Vec<PosteriorState>>,
    pub stats: Vec<MoveStats>,
    pub d_structured: usize,
    /// Unstructured feature count of the input data.
    pub n_unstructured: usize,
}

/// Features as the sampler sees them under `ablation`.
pub fn model_features(
    ablation: Ablation,
    structured: &PointSet,
    unstructured: &PointSet,
) -> PointSet {
    match ablation {
        Ablation::NoMultivariate => unstructured.hstack(structured, structured.len()),
        _ => unstructured.clone(),
    }
}

/// Training rows used as knots, sampled without replacement and sorted.
pub fn choose_knots(n: usize, t: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ KNOT_STREAM);
    let mut rows = rand::seq::index::sample(&mut rng, n, t).into_vec();
    rows.sort_unstable();
    rows
}

/// Runs the sampler on `data`.
pub fn fit(data: &Dataset, config: &FitConfig) -> Result<FittedModel> {
    config.validate()?;
    let n = data.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "at least two observations are required".into(),
        ));
    }
    let scaling = Scaling::from_values(&data.y)?;
    let y: Vec<f64> = data.y.iter().map(|&v| scaling.to_model(v)).collect();
    let features = model_features(config.ablation, &data.structured, &data.unstructured);
    let t = config.n_knots.unwrap_or(100.min(n));
    if t < 2 || t > n {
        return Err(Error::InvalidConfig(format!(
            "knot count {t} must lie in [2, {n}]"
        )));
    }
    let knot_rows = choose_knots(n, t, config.seed);
    let knots = KnotSystem::build(
        &data.structured,
        &features,
        &knot_rows,
        config.embed_dim,
        config.grid_size,
    )?;
    let hyper = config.hyperparams(&y, data.d_structured(), data.n_unstructured())?;
    let points = knots.prepare(&data.structured, &features)?;
    let ctx = TrainContext { knots, points, y };
    let outputs = run_chains(&ctx, &hyper, config)?;
    let (chains, stats) = outputs.into_iter().map(|o| (o.snapshots, o.stats)).unzip();
    Ok(FittedModel {
        config: config.clone(),
        hyper,
        knots: ctx.knots,
        knot_rows,
        scaling,
        chains,
        stats,
        d_structured: data.d_structured(),
        n_unstructured: data.n_unstructured(),
    })
}

fn run_chains(
    ctx: &TrainContext,
    hyper: &Hyperparams,
    config: &FitConfig,
) -> Result<Vec<ChainOutput>> {
    let schedule = config.schedule();
    let run = |i: usize| {
        run_chain(
            ctx,
            hyper,
            SamplerOptions::default(),
            schedule,
            chain_seed(config.seed, i),
        )
    };
    if config.n_chains == 1 {
        return Ok(vec![run(0)?]);
    }
    let threads = config
        .max_threads
        .unwrap_or(config.n_chains)
        .min(config.n_chains);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    pool.install(|| (0..config.n_chains).into_par_iter().map(run).collect())
}

/// Posterior draws of `f` and of new responses at a set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDraws {
    pub n_points: usize,
    pub n_draws: usize,
    /// Point-major: draw `s` of point `i` is at `i * n_draws + s`.
    pub f: Vec<f64>,
    pub y: Vec<f64>,
}

impl PredictiveDraws {
    pub fn f_draws(&self, i: usize) -> &[f64] {
        &self.f[i * self.n_draws..(i + 1) * self.n_draws]
    }

    pub fn y_draws(&self, i: usize) -> &[f64] {
        &self.y[i * self.n_draws..(i + 1) * self.n_draws]
    }

    /// Posterior mean of `f` at every point.
    pub fn mean(&self) -> Vec<f64> {
        (0..self.n_points)
            .map(|i| self.f_draws(i).iter().sum::<f64>() / self.n_draws as f64)
            .collect()
    }

    /// Posterior standard deviation of `f` at every point.
    pub fn sd(&self) -> Vec<f64> {
        (0..self.n_points)
            .map(|i| {
                let d = self.f_draws(i);
                let m = d.iter().sum::<f64>() / d.len() as f64;
                (d.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / d.len() as f64).sqrt()
            })
            .collect()
    }
}

/// Linear-interpolated empirical quantile.
pub fn quantile(draws: &[f64], q: f64) -> f64 {
    let mut v = draws.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

impl FittedModel {
    pub fn snapshots(&self) -> impl Iterator<Item = &PosteriorState> {
        self.chains.iter().flatten()
    }

    pub fn n_snapshots(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }

    pub fn total_stats(&self) -> MoveStats {
        let mut s = MoveStats::default();
        for c in &self.stats {
            s.merge(c);
        }
        s
    }

    /// Per-snapshot `f` on the original scale, snapshot-major.
    fn f_by_snapshot(
        &self,
        structured: &PointSet,
        unstructured: &PointSet,
    ) -> Result<Vec<Vec<f64>>> {
        if structured.dim() != self.d_structured {
            return Err(Error::DimensionMismatch {
                expected: self.d_structured,
                found: structured.dim(),
            });
        }
        if unstructured.dim() != self.n_unstructured {
            return Err(Error::DimensionMismatch {
                expected: self.n_unstructured,
                found: unstructured.dim(),
            });
        }
        let features = model_features(self.config.ablation, structured, unstructured);
        let pts = self.knots.prepare(structured, &features)?;
        let snaps: Vec<&PosteriorState> = self.snapshots().collect();
        snaps
            .par_iter()
            .map(|s| {
                let mut f = vec![0.0; pts.len()];
                for t in &s.trees {
                    let b = t.basis(&self.knots, &pts, &self.hyper.levels(t.alpha))?;
                    for (o, v) in f.iter_mut().zip(b.apply(&t.leaf_values())) {
                        *o += v;
                    }
                }
                Ok(f.into_iter().map(|v| self.scaling.to_original(v)).collect())
            })
            .collect()
    }

    /// Posterior predictive draws at new points.
    pub fn predict(
        &self,
        structured: &PointSet,
        unstructured: &PointSet,
    ) -> Result<PredictiveDraws> {
        if self.n_snapshots() == 0 {
            return Err(Error::InvalidInput("model has no posterior samples".into()));
        }
        let by_snap = self.f_by_snapshot(structured, unstructured)?;
        let n_points = structured.len();
        let n_draws = by_snap.len();
        let mut f = vec![0.0; n_points * n_draws];
        let mut y = vec![0.0; n_points * n_draws];
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ PREDICT_STREAM);
        let range = self.scaling.range();
        for (s, (fs, state)) in by_snap.iter().zip(self.snapshots()).enumerate() {
            let sd = state.sigma2.sqrt() * range;
            for i in 0..n_points {
                f[i * n_draws + s] = fs[i];
                let z: f64 = rng.sample(StandardNormal);
                y[i * n_draws + s] = fs[i] + sd * z;
            }
        }
        Ok(PredictiveDraws {
            n_points,
            n_draws,
            f,
            y,
        })
    }

    /// Mean split counts per snapshot: `[structured, x_1, ..., x_p]`.
    pub fn feature_importance(&self) -> Vec<f64> {
        feature_importance(self.snapshots(), self.n_unstructured)
    }
}

/// Mean split counts over `snapshots`; splits on features at index `p` and
/// above (appended structured coordinates) count as structured.
pub fn feature_importance<'a>(
    snapshots: impl Iterator<Item = &'a PosteriorState>,
    p: usize,
) -> Vec<f64> {
    let mut counts = vec![0.0; p + 1];
    let mut n = 0usize;
    for s in snapshots {
        n += 1;
        for t in &s.trees {
            for (_, node) in t.nodes() {
                if let Some(inner) = node.internal() {
                    match inner.rule {
                        SplitRule::Univariate { feature, .. } if feature < p => {
                            counts[feature + 1] += 1.0
                        }
                        _ => counts[0] += 1.0,
                    }
                }
            }
        }
    }
    if n > 0 {
        for c in &mut counts {
            *c /= n as f64;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_roundtrip() {
        let s = Scaling::from_values(&[2.0, 6.0, 3.0]).unwrap();
        assert_eq!(s.to_model(2.0), -0.5);
        assert_eq!(s.to_model(6.0), 0.5);
        assert!((s.to_original(s.to_model(3.3)) - 3.3).abs() < 1e-14);
        assert!(Scaling::from_values(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn chain_seeds() {
        assert_eq!(chain_seed(42, 0), 42);
        assert_eq!(chain_seed(42, 1), 42 ^ CHAIN_SEED_STEP);
        assert_ne!(chain_seed(42, 2), chain_seed(42, 1));
    }

    #[test]
    fn knots_are_distinct_and_sorted() {
        let k = choose_knots(50, 20, 9);
        assert_eq!(k.len(), 20);
        assert!(k.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(k, choose_knots(50, 20, 9));
    }

    #[test]
    fn quantiles() {
        let d = [3.0, 1.0, 2.0, 4.0, 5.0];
        assert_eq!(quantile(&d, 0.0), 1.0);
        assert_eq!(quantile(&d, 0.5), 3.0);
        assert_eq!(quantile(&d, 1.0), 5.0);
        assert!((quantile(&d, 0.05) - 1.2).abs() < 1e-12);
    }

    #[test]
    fn invalid_schedule_rejected() {
        let c = FitConfig {
            n_iter: 10,
            burn_in: 10,
            ..FitConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
    }
}
