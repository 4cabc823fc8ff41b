//! Linear total least-squares (orthogonal distance) regression.
//!
//! The fit minimizes the weighted sum of squared orthogonal distances to a
//! line. When per-point errors are supplied, each axis is first scaled by
//! the root-mean-square of its errors and points are weighted by
//! `1 / (x_err^2 + y_err^2)`; this is the documented weighting scheme, not
//! a full iterative errors-in-variables solver. Standard errors come from
//! a delete-one jackknife, and the reported prediction band applies the
//! jackknife covariance of (slope, intercept) at each abscissa.

use serde::{Deserialize, Serialize};

use super::VerifierError;

/// Slope/intercept with uncertainties and a 3-sigma mean prediction band
/// evaluated at the input abscissas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
    pub intercept_std_error: f64,
    pub prediction_band_halfwidths: Vec<f64>,
}

struct Weighted {
    x: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    sx: f64,
    sy: f64,
}

fn rms(values: &[f64]) -> f64 {
    let s: f64 = values.iter().map(|v| v * v).sum();
    (s / values.len() as f64).sqrt()
}

/// Core closed-form TLS on scaled coordinates; returns (slope, intercept)
/// in the original coordinates.
fn fit(data: &Weighted, skip: Option<usize>) -> Result<(f64, f64), VerifierError> {
    let mut wsum = 0.0;
    let mut xbar = 0.0;
    let mut ybar = 0.0;
    for i in 0..data.x.len() {
        if Some(i) == skip {
            continue;
        }
        wsum += data.w[i];
        xbar += data.w[i] * data.x[i] / data.sx;
        ybar += data.w[i] * data.y[i] / data.sy;
    }
    xbar /= wsum;
    ybar /= wsum;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for i in 0..data.x.len() {
        if Some(i) == skip {
            continue;
        }
        let dx = data.x[i] / data.sx - xbar;
        let dy = data.y[i] / data.sy - ybar;
        sxx += data.w[i] * dx * dx;
        syy += data.w[i] * dy * dy;
        sxy += data.w[i] * dx * dy;
    }
    if sxx == 0.0 && syy == 0.0 {
        return Err(VerifierError::DegenerateInput("all points coincide".into()));
    }
    let slope_scaled = if sxy == 0.0 {
        if sxx > syy {
            0.0
        } else {
            return Err(VerifierError::DegenerateInput(
                "best orthogonal fit is a vertical line (or axes tie); slope is unbounded".into(),
            ));
        }
    } else {
        let d = syy - sxx;
        (d + (d * d + 4.0 * sxy * sxy).sqrt()) / (2.0 * sxy)
    };
    if sxx == 0.0 {
        return Err(VerifierError::DegenerateInput(
            "all abscissas coincide; the fit is a vertical line".into(),
        ));
    }
    let slope = slope_scaled * data.sy / data.sx;
    let intercept = ybar * data.sy - slope * xbar * data.sx;
    Ok((slope, intercept))
}

/// Orthogonal-distance linear regression; see the module docs for the
/// weighting scheme and uncertainty definitions.
pub fn total_least_squares(
    points: &[(f64, f64)],
    x_err: Option<&[f64]>,
    y_err: Option<&[f64]>,
) -> Result<RegressionResult, VerifierError> {
    let n = points.len();
    if n < 3 {
        return Err(VerifierError::DegenerateInput(format!(
            "need at least 3 points, got {n}"
        )));
    }
    for (name, err) in [("x_err", x_err), ("y_err", y_err)] {
        if let Some(e) = err {
            if e.len() != n {
                return Err(VerifierError::ShapeMismatch(format!(
                    "{name} has {} entries for {n} points",
                    e.len()
                )));
            }
            if e.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                return Err(VerifierError::DegenerateInput(format!(
                    "{name} contains a negative or non-finite entry"
                )));
            }
        }
    }
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let sx = x_err.map(rms).filter(|&s| s > 0.0).unwrap_or(1.0);
    let sy = y_err.map(rms).filter(|&s| s > 0.0).unwrap_or(1.0);
    let w: Vec<f64> = (0..n)
        .map(|i| {
            let ex = x_err.map(|e| e[i]).unwrap_or(0.0);
            let ey = y_err.map(|e| e[i]).unwrap_or(0.0);
            let v = ex * ex + ey * ey;
            if v > 0.0 {
                1.0 / v
            } else {
                1.0
            }
        })
        .collect();
    let data = Weighted { x, y, w, sx, sy };
    let (slope, intercept) = fit(&data, None)?;

    // Delete-one jackknife for the (slope, intercept) covariance. A
    // replicate that degenerates reuses the full fit, contributing zero
    // spread.
    let mut reps: Vec<(f64, f64)> = Vec::with_capacity(n);
    for i in 0..n {
        reps.push(fit(&data, Some(i)).unwrap_or((slope, intercept)));
    }
    let nf = n as f64;
    let mean_s = reps.iter().map(|r| r.0).sum::<f64>() / nf;
    let mean_b = reps.iter().map(|r| r.1).sum::<f64>() / nf;
    let factor = (nf - 1.0) / nf;
    let var_s = factor * reps.iter().map(|r| (r.0 - mean_s).powi(2)).sum::<f64>();
    let var_b = factor * reps.iter().map(|r| (r.1 - mean_b).powi(2)).sum::<f64>();
    let cov = factor
        * reps
            .iter()
            .map(|r| (r.0 - mean_s) * (r.1 - mean_b))
            .sum::<f64>();

    let band = data
        .x
        .iter()
        .map(|&xi| {
            let v = var_b + 2.0 * xi * cov + xi * xi * var_s;
            3.0 * v.max(0.0).sqrt()
        })
        .collect();

    Ok(RegressionResult {
        slope,
        intercept,
        slope_std_error: var_s.sqrt(),
        intercept_std_error: var_b.sqrt(),
        prediction_band_halfwidths: band,
    })
}
