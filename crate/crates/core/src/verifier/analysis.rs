//! Auxiliary analysis: the identity-product fidelity lower bound and the
//! sub-sampling convergence study.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::VerifierError;

/// Result of the identity-product bound over M stabilizer expectations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityBound {
    pub alpha_id: f64,
    pub f_min: f64,
    pub bell_violation: bool,
    pub settings: usize,
}

/// Computes `alpha_ID = sum_i lambda_i <O_i>`, the fidelity lower bound
/// `F_min = (alpha_ID - M + 4) / 4`, and whether the Bell-type threshold
/// `alpha_ID > M - 2` is crossed. Coefficients default to +1.
pub fn fidelity_lower_bound(
    stabilizer_expectations: &[f64],
    lambdas: Option<&[f64]>,
) -> Result<FidelityBound, VerifierError> {
    let m = stabilizer_expectations.len();
    if let Some(l) = lambdas {
        if l.len() != m {
            return Err(VerifierError::ShapeMismatch(format!(
                "{} coefficients for {m} expectations",
                l.len()
            )));
        }
    }
    for &e in stabilizer_expectations {
        if !(-1.0..=1.0).contains(&e) {
            return Err(VerifierError::OutOfRangeExpectation(e));
        }
    }
    let alpha_id: f64 = stabilizer_expectations
        .iter()
        .enumerate()
        .map(|(i, &e)| e * lambdas.map_or(1.0, |l| l[i]))
        .sum();
    let mf = m as f64;
    Ok(FidelityBound {
        alpha_id,
        f_min: (alpha_id - mf + 4.0) / 4.0,
        bell_violation: alpha_id > mf - 2.0,
        settings: m,
    })
}

/// Mean and one-sigma spread of subset averages for one subset size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleStat {
    pub size: usize,
    pub mean: f64,
    pub spread: f64,
}

/// Monte-Carlo sub-sampling study: for each size, draws `trials` random
/// subsets without replacement and reports the mean of subset means and
/// their population spread. Deterministic given `seed`.
pub fn subsample_analysis(
    values: &[f64],
    subset_sizes: &[usize],
    trials: u32,
    seed: u64,
) -> Result<Vec<SubsampleStat>, VerifierError> {
    let n = values.len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(subset_sizes.len());
    for &size in subset_sizes {
        if size > n {
            return Err(VerifierError::SubsetTooLarge { size, available: n });
        }
        if size == 0 {
            return Err(VerifierError::SubsetTooLarge { size, available: n });
        }
        let mut means = Vec::with_capacity(trials as usize);
        let mut indices: Vec<usize> = (0..n).collect();
        for _ in 0..trials {
            // Partial Fisher-Yates: the first `size` entries become the subset.
            for i in 0..size {
                let j = rng.gen_range(i..n);
                indices.swap(i, j);
            }
            let mean: f64 = indices[..size].iter().map(|&i| values[i]).sum::<f64>() / size as f64;
            means.push(mean);
        }
        let grand = means.iter().sum::<f64>() / means.len() as f64;
        let spread = (means.iter().map(|m| (m - grand).powi(2)).sum::<f64>()
            / means.len() as f64)
            .sqrt();
        out.push(SubsampleStat { size, mean: grand, spread });
    }
    Ok(out)
}
