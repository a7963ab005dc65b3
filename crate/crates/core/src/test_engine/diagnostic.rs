use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::kernel_smoothing::{kstar2, Bandwidth, KernelSpec};

/// Asymptotic-normal standardization of the statistic. Convergence is slow;
/// the simulated p-value is the primary result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalDiagnostic {
    /// `T b^{1/2} (N−1)^{−1/2} (Δ̂ − m̂) / √(σ² K₂*)`
    pub z: f64,
    /// Two-sided normal p-value of `z`.
    pub p_value: f64,
    /// `m̂`: mean of the surrogate statistics.
    pub centering: f64,
    /// `(Δ̂ − m̂) / sd` standardized by the surrogate spread instead.
    pub z_empirical: f64,
}

pub fn normal_diagnostic(
    delta_hat: f64,
    null_samples: &[f64],
    sigma2: f64,
    kernel: KernelSpec,
    b: Bandwidth,
    n: usize,
    t: usize,
) -> Result<NormalDiagnostic> {
    if null_samples.is_empty() {
        return Err(Error::InvalidParameter("empty null sample".into()));
    }
    let k = null_samples.len() as f64;
    let mean = null_samples.iter().sum::<f64>() / k;
    let var = null_samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
    let scale = t as f64 * b.value().sqrt() / ((n - 1) as f64).sqrt() / (sigma2 * kstar2(kernel)).sqrt();
    let z = scale * (delta_hat - mean);
    let std_normal = Normal::standard();
    let p_value = 2.0 * std_normal.sf(z.abs());
    let z_empirical = if var > 0.0 {
        (delta_hat - mean) / var.sqrt()
    } else {
        0.0
    };
    Ok(NormalDiagnostic {
        z,
        p_value,
        centering: mean,
        z_empirical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_statistic_gives_zero() {
        let samples = [1.0, 2.0, 3.0, 6.0];
        let b = Bandwidth::new(0.4, 100).unwrap();
        let d = normal_diagnostic(3.0, &samples, 1.0, KernelSpec::Epanechnikov, b, 10, 100).unwrap();
        assert_eq!(d.z, 0.0);
        assert!((d.p_value - 1.0).abs() < 1e-15);
        assert!(normal_diagnostic(3.0, &[], 1.0, KernelSpec::Epanechnikov, b, 10, 100).is_err());
    }

    #[test]
    fn scaling_by_hand() {
        let b = Bandwidth::new(0.25, 400).unwrap();
        let d = normal_diagnostic(2.0, &[1.0, 1.0], 4.0, KernelSpec::Epanechnikov, b, 5, 400).unwrap();
        let expected = 400.0 * 0.5 / 2.0 / (4.0f64 * 0.21688311688311687).sqrt();
        assert!((d.z - expected).abs() < 1e-8 * expected);
    }
}
