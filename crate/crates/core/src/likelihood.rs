//! Gaussian likelihoods of one tree's residuals and its leaf-weight posterior.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::decision_tree::BasisMatrix;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// `Σ_i log N(R_i | Φ_i M, σ²)`.
pub fn conditional_likelihood(
    r: &[f64],
    phi: &BasisMatrix,
    mu: &[f64],
    sigma2: f64,
) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::NonPositiveVariance(sigma2));
    }
    check_shapes(r, phi)?;
    if mu.len() != phi.n_leaves() {
        return Err(Error::DimensionMismatch {
            expected: phi.n_leaves(),
            found: mu.len(),
        });
    }
    let fit = phi.apply(mu);
    let sse: f64 = r.iter().zip(&fit).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(-0.5 * r.len() as f64 * (LN_2PI + sigma2.ln()) - 0.5 * sse / sigma2)
}

fn check_shapes(r: &[f64], phi: &BasisMatrix) -> Result<()> {
    if r.len() != phi.n {
        return Err(Error::DimensionMismatch {
            expected: phi.n,
            found: r.len(),
        });
    }
    Ok(())
}

/// Gaussian posterior of the leaf weights with the marginal likelihood
/// obtained along the way.
#[derive(Debug, Clone)]
pub struct LeafPosterior {
    pub mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    /// Log of the likelihood with the leaf weights integrated out.
    pub log_integrated: f64,
    /// Whether the precision matrix needed diagonal jitter.
    pub jittered: bool,
}

impl LeafPosterior {
    /// Posterior covariance `Ω`.
    pub fn covariance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Posterior precision `Ω⁻¹`.
    pub fn precision(&self) -> DMatrix<f64> {
        let l = self.chol.l();
        &l * l.transpose()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let dim = self.mean.len();
        let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let lt = self.chol.l().transpose();
        let dev = lt
            .solve_upper_triangular(&z)
            .expect("cholesky factor is nonsingular");
        (&self.mean + dev).iter().copied().collect()
    }
}

/// Leaf posterior for residuals `r` under basis `phi`.
pub fn leaf_posterior(
    r: &[f64],
    phi: &BasisMatrix,
    sigma2: f64,
    sigma_mu2: f64,
) -> Result<LeafPosterior> {
    if !(sigma2 > 0.0) {
        return Err(Error::NonPositiveVariance(sigma2));
    }
    if !(sigma_mu2 > 0.0) {
        return Err(Error::NonPositiveVariance(sigma_mu2));
    }
    check_shapes(r, phi)?;
    let l = phi.n_leaves();
    let n = r.len();
    let mut prec = DMatrix::zeros(l, l);
    let mut b = DVector::zeros(l);
    for a in 0..l {
        let ca = &phi.cols[a];
        b[a] = ca.iter().zip(r).map(|(x, y)| x * y).sum::<f64>() / sigma2;
        for c in a..l {
            let v = ca.iter().zip(&phi.cols[c]).map(|(x, y)| x * y).sum::<f64>() / sigma2;
            prec[(a, c)] = v;
            prec[(c, a)] = v;
        }
        prec[(a, a)] += 1.0 / sigma_mu2;
    }
    let (chol, jittered) = match Cholesky::new(prec.clone()) {
        Some(c) => (c, false),
        None => {
            let jitter = 1e-10 * prec.trace() / l as f64;
            for a in 0..l {
                prec[(a, a)] += jitter;
            }
            (Cholesky::new(prec).ok_or(Error::NotPositiveDefinite)?, true)
        }
    };
    let mean = chol.solve(&b);
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let rr: f64 = r.iter().map(|v| v * v).sum();
    let log_integrated = -0.5 * log_det
        - 0.5 * l as f64 * sigma_mu2.ln()
        - 0.5 * n as f64 * (LN_2PI + sigma2.ln())
        - 0.5 * rr / sigma2
        + 0.5 * b.dot(&mean);
    Ok(LeafPosterior {
        mean,
        chol,
        log_integrated,
        jittered,
    })
}

/// Log marginal likelihood of `r` with `M ~ N(0, σ_μ² I)` integrated out.
pub fn integrated_likelihood(
    r: &[f64],
    phi: &BasisMatrix,
    sigma2: f64,
    sigma_mu2: f64,
) -> Result<f64> {
    Ok(leaf_posterior(r, phi, sigma2, sigma_mu2)?.log_integrated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn basis(rows: &[&[f64]]) -> BasisMatrix {
        let l = rows[0].len();
        BasisMatrix {
            n: rows.len(),
            leaf_ids: (0..l as u64).collect(),
            cols: (0..l)
                .map(|c| rows.iter().map(|r| r[c]).collect())
                .collect(),
        }
    }

    fn log_normal(x: f64, mean: f64, var: f64) -> f64 {
        -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - mean).powi(2) / (2.0 * var)
    }

    #[test]
    fn conditional_single_exact_fit() {
        let phi = basis(&[&[1.0]]);
        let v = conditional_likelihood(&[0.4], &phi, &[0.4], 0.3).unwrap();
        assert!((v + 0.5 * (2.0 * std::f64::consts::PI * 0.3).ln()).abs() < 1e-14);
    }

    #[test]
    fn conditional_matches_scalar_sum() {
        let phi = basis(&[&[0.3, 0.7], &[1.0, 0.0], &[0.5, 0.5]]);
        let r = [0.2, -1.0, 0.4];
        let mu = [0.5, -0.25];
        let oracle: f64 = (0..3)
            .map(|i| log_normal(r[i], phi.cols[0][i] * mu[0] + phi.cols[1][i] * mu[1], 0.7))
            .sum();
        assert!((conditional_likelihood(&r, &phi, &mu, 0.7).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn doubling_variance_with_zero_residuals() {
        let phi = basis(&[&[1.0], &[1.0], &[1.0], &[1.0]]);
        let r = [0.0; 4];
        let a = conditional_likelihood(&r, &phi, &[0.0], 0.5).unwrap();
        let b = conditional_likelihood(&r, &phi, &[0.0], 1.0).unwrap();
        assert!((a - b - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!(conditional_likelihood(&r, &phi, &[0.0], 0.0).is_err());
    }

    #[test]
    fn integrated_scalar_marginal() {
        let phi = basis(&[&[1.0]]);
        let v = integrated_likelihood(&[0.8], &phi, 0.2, 0.5).unwrap();
        assert!((v - log_normal(0.8, 0.0, 0.7)).abs() < 1e-13);
    }

    /// Log density of a zero-mean bivariate normal with covariance `c`.
    fn log_mvn2(x: [f64; 2], c: [[f64; 2]; 2]) -> f64 {
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        let q = (c[1][1] * x[0] * x[0] - 2.0 * c[0][1] * x[0] * x[1] + c[0][0] * x[1] * x[1]) / det;
        -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * q
    }

    #[test]
    fn integrated_hard_basis_factorizes() {
        // points 0, 1 in leaf A; point 2 in leaf B
        let phi = basis(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let r = [0.3, -0.1, 1.2];
        let (s2, sm2) = (0.4, 0.9);
        let group_a = log_mvn2([0.3, -0.1], [[s2 + sm2, sm2], [sm2, s2 + sm2]]);
        let group_b = log_normal(1.2, 0.0, s2 + sm2);
        let v = integrated_likelihood(&r, &phi, s2, sm2).unwrap();
        assert!((v - group_a - group_b).abs() < 1e-12);
    }

    #[test]
    fn single_leaf_posterior_mean() {
        let phi = basis(&[&[1.0], &[1.0], &[1.0]]);
        let r = [0.5, 0.1, -0.3];
        let (s2, sm2) = (0.25, 2.0);
        let post = leaf_posterior(&r, &phi, s2, sm2).unwrap();
        let expect = (0.3 / s2) / (1.0 / sm2 + 3.0 / s2);
        assert!((post.mean[0] - expect).abs() < 1e-14);
        let tiny = leaf_posterior(&r, &phi, s2, 1e-12).unwrap();
        assert!(tiny.mean[0].abs() < 1e-10);
    }

    #[test]
    fn covariance_is_symmetric_positive_definite() {
        let phi = basis(&[&[0.2, 0.8], &[0.6, 0.4], &[0.9, 0.1]]);
        let post = leaf_posterior(&[0.1, 0.2, 0.3], &phi, 0.3, 0.7).unwrap();
        let c = post.covariance();
        assert!((c[(0, 1)] - c[(1, 0)]).abs() < 1e-14);
        assert!(Cholesky::new(c).is_some());
        assert!(!post.jittered);
    }

    #[test]
    fn permutation_invariance() {
        let phi = basis(&[&[0.2, 0.8], &[0.6, 0.4], &[0.9, 0.1]]);
        let perm = basis(&[&[0.9, 0.1], &[0.2, 0.8], &[0.6, 0.4]]);
        let a = integrated_likelihood(&[0.1, 0.2, 0.3], &phi, 0.3, 0.7).unwrap();
        let b = integrated_likelihood(&[0.3, 0.1, 0.2], &perm, 0.3, 0.7).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn posterior_mean_maximizes_conditional_posterior() {
        let phi = basis(&[&[0.2, 0.8], &[0.6, 0.4], &[0.9, 0.1], &[0.5, 0.5]]);
        let r = [0.4, -0.2, 0.9, 0.1];
        let (s2, sm2) = (0.2, 0.5);
        let post = leaf_posterior(&r, &phi, s2, sm2).unwrap();
        let obj = |m: &[f64]| {
            conditional_likelihood(&r, &phi, m, s2).unwrap()
                - m.iter().map(|v| v * v).sum::<f64>() / (2.0 * sm2)
        };
        let best = [post.mean[0], post.mean[1]];
        let f0 = obj(&best);
        for (dx, dy) in [
            (1e-3, 0.0),
            (-1e-3, 0.0),
            (0.0, 1e-3),
            (0.0, -1e-3),
            (1e-3, -1e-3),
        ] {
            assert!(obj(&[best[0] + dx, best[1] + dy]) < f0);
        }
    }

    #[test]
    fn sample_moments_match_posterior() {
        let phi = basis(&[&[0.2, 0.8], &[0.6, 0.4], &[0.9, 0.1]]);
        let post = leaf_posterior(&[0.1, 0.2, 0.3], &phi, 0.3, 0.7).unwrap();
        let cov = post.covariance();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let mut s = [0.0; 2];
        let mut s01 = 0.0;
        for _ in 0..n {
            let m = post.sample(&mut rng);
            let d = [m[0] - post.mean[0], m[1] - post.mean[1]];
            s[0] += d[0];
            s[1] += d[1];
            s01 += d[0] * d[1];
        }
        for a in 0..2 {
            let se = (cov[(a, a)] / n as f64).sqrt();
            assert!((s[a] / n as f64).abs() < 4.0 * se);
        }
        let se01 = ((cov[(0, 0)] * cov[(1, 1)] + cov[(0, 1)].powi(2)) / n as f64).sqrt();
        assert!((s01 / n as f64 - cov[(0, 1)]).abs() < 4.0 * se01);
    }
}
