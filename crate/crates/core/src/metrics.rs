//! Point and probabilistic prediction scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rmspe: f64,
    pub mape: f64,
    pub crps: f64,
    pub crps_per_point: Vec<f64>,
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("no predictions to score".into()));
    }
    Ok(())
}

/// Root mean squared prediction error.
pub fn rmspe(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_len(pred, truth)?;
    let s: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((s / pred.len() as f64).sqrt())
}

/// Mean absolute prediction error.
pub fn mape(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_len(pred, truth)?;
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / pred.len() as f64)
}

/// `mean|X - y| - mean|X - X'| / 2` over all draw pairs.
pub fn crps_point(draws: &[f64], y: f64) -> Result<f64> {
    let m = draws.len();
    if m < 2 {
        return Err(Error::TooFewDraws { needed: 2, got: m });
    }
    let first = draws.iter().map(|x| (x - y).abs()).sum::<f64>() / m as f64;
    // Sum over ordered pairs via the sorted-order identity.
    let mut s = draws.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
    let mut pair_sum = 0.0;
    for (i, v) in s.iter().enumerate() {
        pair_sum += v * (2.0 * i as f64 - (m as f64 - 1.0));
    }
    let second = 2.0 * pair_sum / (m * m) as f64;
    Ok((first - 0.5 * second).max(0.0))
}

/// Per-point and mean CRPS; `draws[i]` holds the draws for point `i`.
pub fn crps_empirical<D: AsRef<[f64]>>(draws: &[D], y: &[f64]) -> Result<(Vec<f64>, f64)> {
    if draws.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: draws.len(),
        });
    }
    let per: Vec<f64> = draws
        .iter()
        .zip(y)
        .map(|(d, &yi)| crps_point(d.as_ref(), yi))
        .collect::<Result<_>>()?;
    let mean = per.iter().sum::<f64>() / per.len().max(1) as f64;
    Ok((per, mean))
}

/// All three scores for predictive means, draws and observations.
pub fn report<D: AsRef<[f64]>>(means: &[f64], draws: &[D], y: &[f64]) -> Result<MetricReport> {
    let (crps_per_point, crps) = crps_empirical(draws, y)?;
    Ok(MetricReport {
        rmspe: rmspe(means, y)?,
        mape: mape(means, y)?,
        crps,
        crps_per_point,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn crps_brute(d: &[f64], y: f64) -> f64 {
        let m = d.len() as f64;
        let a = d.iter().map(|x| (x - y).abs()).sum::<f64>() / m;
        let mut b = 0.0;
        for x in d {
            for z in d {
                b += (x - z).abs();
            }
        }
        a - 0.5 * b / (m * m)
    }

    #[test]
    fn point_errors() {
        assert_eq!(rmspe(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmspe(&[3.0], &[1.0]).unwrap(), 2.0);
        assert!((rmspe(&[3.0, 4.0], &[0.0, 0.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(mape(&[1.0, -3.0], &[0.0, 0.0]).unwrap(), 2.0);
        assert_eq!(mape(&[-1.0, 3.0], &[0.0, 0.0]).unwrap(), 2.0);
        assert!(rmspe(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn crps_cases() {
        assert_eq!(crps_point(&[0.7; 5], 0.7).unwrap(), 0.0);
        assert!((crps_point(&[1.2; 4], 0.7).unwrap() - 0.5).abs() < 1e-15);
        assert!((crps_point(&[0.0, 1.0], 0.0).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(
            crps_point(&[1.0], 0.0),
            Err(Error::TooFewDraws { .. })
        ));
        let d = [0.3, -1.2, 2.5, 0.0, 0.9, 0.9];
        assert!((crps_point(&d, 0.4).unwrap() - crps_brute(&d, 0.4)).abs() < 1e-14);
    }

    #[test]
    fn shift_invariance() {
        let d = vec![vec![0.3, -1.2, 2.5], vec![1.0, 1.5, 0.2]];
        let y = [0.4, 1.1];
        let m = [0.5, 0.9];
        let a = report(&m, &d, &y).unwrap();
        let sd: Vec<Vec<f64>> = d
            .iter()
            .map(|r| r.iter().map(|v| v + 10.0).collect())
            .collect();
        let b = report(&[10.5, 10.9], &sd, &[10.4, 11.1]).unwrap();
        assert!((a.rmspe - b.rmspe).abs() < 1e-12);
        assert!((a.mape - b.mape).abs() < 1e-12);
        assert!((a.crps - b.crps).abs() < 1e-12);
    }
}
