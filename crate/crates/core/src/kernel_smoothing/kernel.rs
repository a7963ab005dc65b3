use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

/// Symmetric kernel with support `[-1, 1]` integrating to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpec {
    /// `K(v) = 3(1 - v^2)/4` on `[-1, 1]`.
    #[default]
    Epanechnikov,
    /// Standard normal density restricted to `[-1, 1]` and renormalized.
    TruncatedGaussian,
}

impl KernelSpec {
    #[inline]
    pub fn eval(self, v: f64) -> f64 {
        if !(-1.0..=1.0).contains(&v) {
            return 0.0;
        }
        match self {
            KernelSpec::Epanechnikov => 0.75 * (1.0 - v * v),
            KernelSpec::TruncatedGaussian => {
                (-0.5 * v * v).exp() / ((2.0 * PI).sqrt() * truncated_gaussian_mass())
            }
        }
    }

    /// Second moment `∫ v^2 K(v) dv`.
    pub fn second_moment(self) -> f64 {
        match self {
            KernelSpec::Epanechnikov => 0.2,
            KernelSpec::TruncatedGaussian => {
                // ∫_{-1}^{1} v² φ(v) dv = P(|Z| ≤ 1) - 2φ(1)
                let mass = truncated_gaussian_mass();
                let phi1 = (-0.5f64).exp() / (2.0 * PI).sqrt();
                (mass - 2.0 * phi1) / mass
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelSpec::Epanechnikov => "epanechnikov",
            KernelSpec::TruncatedGaussian => "truncated_gaussian",
        }
    }
}

impl std::str::FromStr for KernelSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "epanechnikov" | "epa" => Ok(KernelSpec::Epanechnikov),
            "truncated_gaussian" | "gaussian" => Ok(KernelSpec::TruncatedGaussian),
            other => Err(format!("unknown kernel '{other}'")),
        }
    }
}

/// `P(|Z| <= 1)` for standard normal `Z`.
fn truncated_gaussian_mass() -> f64 {
    erf(FRAC_1_SQRT_2)
}
