//! Empirical convergence rate: least-squares slope of `log residual`
//! against `log K`.

use thiserror::Error;

pub const MIN_POINTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("{got} points after burn-in, need at least {MIN_POINTS}")]
    InsufficientData { got: usize },
    #[error("residual at K={k} is {value}; the run has already converged or the data is invalid")]
    NonPositiveResiduals { k: usize, value: f64 },
}

/// Slope of the log-log fit over the points left after dropping the first
/// `burn_in` fraction of `ks`.
pub fn fit_rate(ks: &[usize], residuals: &[f64], burn_in: f64) -> Result<f64, FitError> {
    let n = ks.len().min(residuals.len());
    let skip = ((n as f64) * burn_in.clamp(0.0, 1.0)).ceil() as usize;
    let pts: Vec<(usize, f64)> = ks[..n]
        .iter()
        .copied()
        .zip(residuals[..n].iter().copied())
        .skip(skip)
        .filter(|&(k, _)| k > 0)
        .collect();
    if pts.len() < MIN_POINTS {
        return Err(FitError::InsufficientData { got: pts.len() });
    }
    if let Some(&(k, value)) = pts.iter().find(|(_, r)| !(*r > 0.0 && r.is_finite())) {
        return Err(FitError::NonPositiveResiduals { k, value });
    }
    let xs: Vec<f64> = pts.iter().map(|&(k, _)| (k as f64).ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|&(_, r)| r.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ks(n: usize) -> Vec<usize> {
        (1..=n).collect()
    }

    #[test]
    fn exact_power_laws() {
        let k = ks(200);
        let inv: Vec<f64> = k.iter().map(|&k| 3.0 / k as f64).collect();
        let inv2: Vec<f64> = k.iter().map(|&k| 0.5 / (k * k) as f64).collect();
        assert!((fit_rate(&k, &inv, 0.1).unwrap() + 1.0).abs() < 1e-6);
        assert!((fit_rate(&k, &inv2, 0.1).unwrap() + 2.0).abs() < 1e-6);
    }

    #[test]
    fn burn_in_drops_leading_rows() {
        let k = ks(100);
        let r: Vec<f64> = k
            .iter()
            .map(|&k| if k <= 50 { 1.0 } else { 1.0 / k as f64 })
            .collect();
        assert!((fit_rate(&k, &r, 0.5).unwrap() + 1.0).abs() < 1e-9);
    }

    #[test]
    fn too_few_points() {
        let k = ks(21);
        let r = vec![1.0; 21];
        assert_eq!(
            fit_rate(&k, &r, 0.1),
            Err(FitError::InsufficientData { got: 18 })
        );
    }

    #[test]
    fn zero_residual() {
        let k = ks(40);
        let mut r: Vec<f64> = k.iter().map(|&k| 1.0 / k as f64).collect();
        r[30] = 0.0;
        assert!(matches!(
            fit_rate(&k, &r, 0.0),
            Err(FitError::NonPositiveResiduals { k: 31, .. })
        ));
    }
}
