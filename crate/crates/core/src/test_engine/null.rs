use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trends::TrendSmoothers;
use crate::error::{Error, Result};
use crate::longrun::LongRunVarianceFn;
use crate::rng::{substream, Domain};

/// Eigenvalues below this fraction of the largest are dropped.
const SPECTRUM_CUTOFF: f64 = 1e-13;

/// How surrogate draws are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullMethod {
    /// Exact law of the surrogate statistic, `Σ_j λ_j χ²_{N-1}`.
    #[default]
    Spectral,
    /// Simulate Gaussian panels and run them through the smoothing pipeline.
    Direct,
}

/// Pointwise scale of the surrogate errors `s(t/T) Z_it`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateScale {
    /// `s = √g`: the surrogate's long-run variance function is `g`.
    #[default]
    SqrtLongRun,
    /// `s = g`.
    Literal,
}

impl SurrogateScale {
    fn apply(self, g: f64) -> f64 {
        match self {
            SurrogateScale::SqrtLongRun => g.sqrt(),
            SurrogateScale::Literal => g,
        }
    }
}

/// The `T x T` matrix `M` with `Δ̂ = Σ_i D_iᵀ M D_i` for cross-sectionally
/// centered rows `D_i = X_i − X̄`.
///
/// `M = Aᵀ Q A` where `A = W − 1 w̄ᵀ`, `W` holds the smoothing weights on the
/// grid, `w̄` the column means of the design hat matrix and `Q` the
/// quadrature weights.
#[derive(Debug, Clone)]
pub struct StatisticOperator {
    matrix: DMatrix<f64>,
}

impl StatisticOperator {
    pub fn new(smoothers: &TrendSmoothers) -> Self {
        let t = smoothers.series_len();
        let grid = smoothers.grid();
        let mut wbar = vec![0.0; t];
        for row in smoothers.design_smoother().rows() {
            for (j, v) in row.values.iter().enumerate() {
                wbar[row.first + j] += v / t as f64;
            }
        }
        let g = grid.len();
        let mut a = DMatrix::zeros(g, t);
        for (r, row) in smoothers.grid_smoother().rows().iter().enumerate() {
            for c in 0..t {
                a[(r, c)] = -wbar[c];
            }
            for (j, v) in row.values.iter().enumerate() {
                a[(r, row.first + j)] += v;
            }
        }
        let mut qa = a.clone();
        for (r, q) in grid.weights().iter().enumerate() {
            qa.row_mut(r).scale_mut(*q);
        }
        let mut matrix = a.transpose() * qa;
        // symmetrize rounding
        let mt = matrix.transpose();
        matrix += mt;
        matrix.scale_mut(0.5);
        Self { matrix }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `Σ_i D_iᵀ M D_i` with `D_i` the rows centered at the column means.
    pub fn quadratic(&self, rows: &[Vec<f64>]) -> f64 {
        let t = self.matrix.nrows();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; t];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x / n;
            }
        }
        rows.iter()
            .map(|r| {
                let d = nalgebra::DVector::from_iterator(t, r.iter().zip(&mean).map(|(x, m)| x - m));
                d.dot(&(&self.matrix * &d))
            })
            .sum()
    }

    /// Eigenvalues of `S M S`, `S = diag(scale)`, above the relative cutoff,
    /// in decreasing order.
    pub fn spectrum(&self, scale: &[f64]) -> Vec<f64> {
        let t = self.matrix.nrows();
        let b = DMatrix::from_fn(t, t, |i, j| scale[i] * self.matrix[(i, j)] * scale[j]);
        let mut ev: Vec<f64> = SymmetricEigen::new(b).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        let max = ev.first().copied().unwrap_or(0.0);
        if max <= 0.0 {
            return Vec::new();
        }
        ev.retain(|&l| l > SPECTRUM_CUTOFF * max);
        ev
    }
}

/// Surrogate-statistic sampler for a fixed long-run variance function,
/// series length and bandwidth. Only the number of series may vary.
#[derive(Debug, Clone)]
pub struct NullSimulator {
    smoothers: TrendSmoothers,
    scale: Vec<f64>,
    method: NullMethod,
    spectrum: Option<Vec<f64>>,
}

impl NullSimulator {
    pub fn new(
        g: &LongRunVarianceFn,
        smoothers: TrendSmoothers,
        scale: SurrogateScale,
        method: NullMethod,
    ) -> Result<Self> {
        let t = smoothers.series_len();
        let mut s = Vec::with_capacity(t);
        for k in 1..=t {
            let u = k as f64 / t as f64;
            let v = g.eval(u);
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::NonPositiveLongRun { u, value: v });
            }
            s.push(scale.apply(v));
        }
        let spectrum = match method {
            NullMethod::Spectral => Some(StatisticOperator::new(&smoothers).spectrum(&s)),
            NullMethod::Direct => None,
        };
        Ok(Self {
            smoothers,
            scale: s,
            method,
            spectrum,
        })
    }

    pub fn method(&self) -> NullMethod {
        self.method
    }

    pub fn spectrum(&self) -> Option<&[f64]> {
        self.spectrum.as_deref()
    }

    /// One surrogate statistic for replicate `index`.
    pub fn draw(&self, n_series: usize, seed: u64, index: u64) -> Result<f64> {
        if n_series < 2 {
            return Err(Error::InvalidParameter(format!(
                "null simulation needs at least 2 series, got {n_series}"
            )));
        }
        let mut rng = substream(seed, Domain::NullReplicate, index);
        Ok(match &self.spectrum {
            Some(lambda) => {
                let chi = ChiSquared::new((n_series - 1) as f64)
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?;
                lambda.iter().map(|l| l * chi.sample(&mut rng)).sum()
            }
            None => {
                let rows: Vec<Vec<f64>> = (0..n_series)
                    .map(|_| {
                        self.scale
                            .iter()
                            .map(|s| {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                s * z
                            })
                            .collect()
                    })
                    .collect();
                let all: Vec<usize> = (0..n_series).collect();
                self.smoothers.fit(&rows).statistic(&all)
            }
        })
    }

    /// Sorted sample of `n_sims` surrogate statistics.
    pub fn samples(&self, n_series: usize, n_sims: usize, seed: u64) -> Result<Vec<f64>> {
        if n_sims == 0 {
            return Err(Error::InvalidParameter("n_sims must be positive".into()));
        }
        let mut out = (0..n_sims as u64)
            .into_par_iter()
            .map(|r| self.draw(n_series, seed, r))
            .collect::<Result<Vec<_>>>()?;
        out.sort_by(f64::total_cmp);
        Ok(out)
    }
}

/// The `ceil(level · n)`-th order statistic of a sorted sample.
pub fn empirical_quantile(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    let k = ((level * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[k.min(n) - 1]
}

/// `(1 + #{draws >= statistic}) / (1 + n)`.
pub fn p_value(statistic: f64, sorted: &[f64]) -> f64 {
    let below = sorted.partition_point(|&x| x < statistic);
    (1 + sorted.len() - below) as f64 / (1 + sorted.len()) as f64
}
