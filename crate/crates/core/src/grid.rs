use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evaluation points in `[0, 1]` with quadrature weights for integrals over
/// rescaled time.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

/// Serializable choice of integration grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "size")]
pub enum GridSpec {
    /// Design points `t/T`, `t = 1..T`, each with weight `1/T`.
    #[default]
    Design,
    /// `size` equispaced points on `[0, 1]` with trapezoid weights.
    Uniform(usize),
}

impl EvalGrid {
    /// Design grid `{t/T}` with Riemann weights `1/T`.
    pub fn design(t: usize) -> Self {
        let tf = t as f64;
        Self {
            points: (1..=t).map(|i| i as f64 / tf).collect(),
            weights: vec![1.0 / tf; t],
        }
    }

    /// `size` equispaced points including both endpoints, trapezoid weights.
    pub fn uniform(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidParameter(format!(
                "uniform grid needs at least 2 points, got {size}"
            )));
        }
        let h = 1.0 / (size - 1) as f64;
        let points = (0..size).map(|j| j as f64 * h).collect();
        let mut weights = vec![h; size];
        weights[0] = h / 2.0;
        weights[size - 1] = h / 2.0;
        Ok(Self { points, weights })
    }

    pub fn from_spec(spec: GridSpec, t: usize) -> Result<Self> {
        match spec {
            GridSpec::Design => Ok(Self::design(t)),
            GridSpec::Uniform(g) => Self::uniform(g),
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Quadrature of sampled values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one() {
        assert!((EvalGrid::design(37).weights().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!((EvalGrid::uniform(101).unwrap().weights().iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_is_exact_for_affine() {
        let g = EvalGrid::uniform(11).unwrap();
        let v: Vec<f64> = g.points().iter().map(|u| 3.0 * u - 1.0).collect();
        assert!((g.integrate(&v) - 0.5).abs() < 1e-14);
    }
}
