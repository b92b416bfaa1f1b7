//! Synthetic benchmarks: the rotated U-shape and the piecewise square.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PointSet};
use crate::error::{Error, Result};

/// Half-width of the notch cut from the bottom of the U.
pub const NOTCH_HALF_WIDTH: f64 = 1.0 / 3.0;
/// Upper edge of the U. Below the circle radius so that the circle cuts the
/// base and the two outside pieces are disconnected.
pub const U_TOP: f64 = 0.8;
pub const CIRCLE_RADIUS: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    UShape,
    Square,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub scenario: Scenario,
    pub n_train: usize,
    pub n_test: usize,
    pub sigma: f64,
    /// Number of GP features (U-shape only).
    pub n_unstructured: usize,
    pub seed: u64,
    pub gp_length_scale: f64,
    pub gp_variance: f64,
}

impl SyntheticSpec {
    pub fn ushape(n_train: usize, n_test: usize, seed: u64) -> Self {
        Self {
            scenario: Scenario::UShape,
            n_train,
            n_test,
            sigma: 0.1,
            n_unstructured: 10,
            seed,
            gp_length_scale: 0.5,
            gp_variance: 1.0,
        }
    }

    pub fn square(n_train: usize, n_test: usize, seed: u64) -> Self {
        Self {
            scenario: Scenario::Square,
            n_unstructured: 2,
            ..Self::ushape(n_train, n_test, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::InvalidConfig("sample sizes must be positive".into()));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::InvalidConfig("noise sd must be nonnegative".into()));
        }
        if !(self.gp_length_scale > 0.0) || !(self.gp_variance >= 0.0) {
            return Err(Error::InvalidConfig(
                "GP length scale must be positive and variance nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// A dataset together with the noiseless truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub data: Dataset,
    pub f_true: Vec<f64>,
}

fn rotate(p: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1]]
}

/// Maps a domain point back to the axis-aligned U.
pub fn unrotate(s: [f64; 2]) -> [f64; 2] {
    rotate(s, -std::f64::consts::FRAC_PI_4)
}

/// Membership of the axis-aligned U: `[-1, 1] × [-1, 0.8]` minus the open
/// notch `(-1/3, 1/3) × (-1, 0)`.
pub fn in_axis_aligned_u(p: [f64; 2]) -> bool {
    let in_square = p[0].abs() <= 1.0 && p[1] >= -1.0 && p[1] <= U_TOP;
    let in_notch = p[0].abs() < NOTCH_HALF_WIDTH && p[1] > -1.0 && p[1] < 0.0;
    in_square && !in_notch
}

pub fn in_ushape(s: [f64; 2]) -> bool {
    in_axis_aligned_u(unrotate(s))
}

/// Uniform points on the rotated U by rejection.
pub fn sample_ushape<R: Rng + ?Sized>(n: usize, rng: &mut R) -> PointSet {
    let mut coords = Vec::with_capacity(2 * n);
    while coords.len() < 2 * n {
        let p = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=U_TOP)];
        if in_axis_aligned_u(p) {
            let s = rotate(p, std::f64::consts::FRAC_PI_4);
            coords.extend_from_slice(&s);
        }
    }
    PointSet::new(2, coords).expect("finite coordinates")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cluster {
    Inside,
    /// Outside the circle, left leg.
    Arm1,
    /// Outside the circle, right leg.
    Arm2,
}

pub fn circle_cluster(s: [f64; 2]) -> Cluster {
    if (s[0] * s[0] + s[1] * s[1]).sqrt() < CIRCLE_RADIUS {
        Cluster::Inside
    } else if unrotate(s)[0] < 0.0 {
        Cluster::Arm1
    } else {
        Cluster::Arm2
    }
}

/// Piecewise-smooth truth on the U-shape.
pub fn ushape_truth(s: [f64; 2], x1: f64) -> f64 {
    match circle_cluster(s) {
        Cluster::Inside => (3.0 * s[0]).sin() * x1,
        Cluster::Arm1 => 2.0 + (3.0 * s[1]).cos() * x1,
        Cluster::Arm2 => -2.0 + s[0] * s[1],
    }
}

/// Four-piece function with jumps along `x1 = 0`, `x2 = 0` and `x2 = 0.2`.
pub fn square_truth(x1: f64, x2: f64) -> f64 {
    if x1 >= 0.0 {
        if x2 <= 0.0 {
            (7.0 * x1).sin() * (4.0 * x2).cos()
        } else {
            1.0 + 2.0 / 7.0 * (2.0 * x1 + 1.0).powi(2) + (2.0 * x2 + 1.0).powi(2)
        }
    } else if x2 <= 0.2 {
        5.0
    } else {
        -5.0
    }
}

/// Squared-exponential covariance.
pub fn se_kernel(a: &[f64], b: &[f64], length_scale: f64, variance: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    variance * (-d2 / (2.0 * length_scale * length_scale)).exp()
}

/// Lower Cholesky factor of the kernel over the distinct points, plus the
/// map from each point to its distinct representative.
pub struct GpFactor {
    lower: DMatrix<f64>,
    index: Vec<usize>,
}

impl GpFactor {
    pub fn new(points: &PointSet, length_scale: f64, variance: f64, jitter: f64) -> Result<Self> {
        let n = points.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| points.row(a).partial_cmp(points.row(b)).expect("finite"));
        let mut index = vec![0; n];
        let mut uniq: Vec<usize> = Vec::new();
        for &i in &order {
            match uniq.last() {
                Some(&u) if points.row(u) == points.row(i) => index[i] = uniq.len() - 1,
                _ => {
                    uniq.push(i);
                    index[i] = uniq.len() - 1;
                }
            }
        }
        let m = uniq.len();
        if variance == 0.0 {
            return Ok(Self {
                lower: DMatrix::zeros(m, m),
                index,
            });
        }
        let k = DMatrix::from_fn(m, m, |a, b| {
            let v = se_kernel(
                points.row(uniq[a]),
                points.row(uniq[b]),
                length_scale,
                variance,
            );
            if a == b {
                v + jitter * variance
            } else {
                v
            }
        });
        let lower = Cholesky::new(k).ok_or(Error::NotPositiveDefinite)?.l();
        Ok(Self { lower, index })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let m = self.lower.nrows();
        let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let u = &self.lower * z;
        self.index.iter().map(|&i| u[i]).collect()
    }
}

/// One Gaussian-process realisation at `points`.
pub fn gp_feature<R: Rng + ?Sized>(
    points: &PointSet,
    length_scale: f64,
    variance: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    Ok(GpFactor::new(points, length_scale, variance, 1e-8)?.draw(rng))
}

fn split(
    structured: &PointSet,
    unstructured: &PointSet,
    f: &[f64],
    sigma: f64,
    n_train: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let n = f.len();
    let y: Vec<f64> = f
        .iter()
        .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let part = |idx: Vec<usize>| -> Result<LabeledDataset> {
        Ok(LabeledDataset {
            data: Dataset::new(
                structured.select(&idx),
                unstructured.select(&idx),
                idx.iter().map(|&i| y[i]).collect(),
            )?,
            f_true: idx.iter().map(|&i| f[i]).collect(),
        })
    };
    Ok((part((0..n_train).collect())?, part((n_train..n).collect())?))
}

/// Training and test sets for `spec`.
pub fn assemble(spec: &SyntheticSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_train + spec.n_test;
    match spec.scenario {
        Scenario::UShape => {
            let s = sample_ushape(n, &mut rng);
            let factor = GpFactor::new(&s, spec.gp_length_scale, spec.gp_variance, 1e-8)?;
            let feats: Vec<Vec<f64>> = (0..spec.n_unstructured)
                .map(|_| factor.draw(&mut rng))
                .collect();
            let x = if feats.is_empty() {
                PointSet::empty()
            } else {
                PointSet::from_rows(
                    &(0..n)
                        .map(|i| feats.iter().map(|c| c[i]).collect::<Vec<_>>())
                        .collect::<Vec<_>>(),
                )?
            };
            let f: Vec<f64> = (0..n)
                .map(|i| {
                    let r = s.row(i);
                    ushape_truth([r[0], r[1]], feats.first().map_or(0.0, |c| c[i]))
                })
                .collect();
            split(&s, &x, &f, spec.sigma, spec.n_train, &mut rng)
        }
        Scenario::Square => {
            let coords: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let s = PointSet::new(2, coords)?;
            let f: Vec<f64> = s.rows().map(|r| square_truth(r[0], r[1])).collect();
            split(&s, &s.clone(), &f, spec.sigma, spec.n_train, &mut rng)
        }
    }
}
