//! Banded estimate of the error covariance matrix and GCV bandwidth
//! selection whitened by that estimate.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel_smoothing::{Bandwidth, KernelSpec, Smoother};
use crate::panel::{center, residuals_with, ResidualPanel, TimeSeriesPanel};

/// Default pilot bandwidth (rescaled time) for residuals feeding the
/// covariance and long-run variance estimates.
pub const DEFAULT_PILOT_BANDWIDTH: f64 = 0.05;

const RIDGE_START: f64 = 1e-8;
const RIDGE_CAP: f64 = 1.0;

/// Pilot bandwidth for a series of length `t`, widened so short series
/// still have a few points per window.
pub fn default_pilot(t: usize) -> f64 {
    DEFAULT_PILOT_BANDWIDTH.max(3.0 / t as f64).min(1.0)
}

/// `floor(T^{4/15})`.
pub fn default_band(t: usize) -> usize {
    let l = (t as f64).powf(4.0 / 15.0);
    // Guard against 4.999999 for exact powers.
    (l + 1e-9).floor() as usize
}

/// Symmetric `T x T` covariance estimate, zero beyond `band_width`
/// off-diagonals. `bands[k][t]` holds entry `(t, t+k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedCovariance {
    t: usize,
    bands: Vec<Vec<f64>>,
    band_width: usize,
    pub ridge: f64,
}

impl BandedCovariance {
    pub fn from_bands(t: usize, bands: Vec<Vec<f64>>) -> Result<Self> {
        if bands.is_empty() || bands.len() > t {
            return Err(Error::InvalidParameter(format!(
                "{} bands for dimension {t}",
                bands.len()
            )));
        }
        for (k, band) in bands.iter().enumerate() {
            if band.len() != t - k {
                return Err(Error::InvalidParameter(format!(
                    "band {k} has length {}, expected {}",
                    band.len(),
                    t - k
                )));
            }
        }
        Ok(Self {
            t,
            band_width: bands.len() - 1,
            bands,
            ridge: 0.0,
        })
    }

    pub fn identity(t: usize) -> Self {
        Self {
            t,
            bands: vec![vec![1.0; t]],
            band_width: 0,
            ridge: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.t
    }

    pub fn band_width(&self) -> usize {
        self.band_width
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, k) = if i <= j { (i, j - i) } else { (j, i - j) };
        let base = if k <= self.band_width {
            self.bands[k][lo]
        } else {
            0.0
        };
        if k == 0 {
            base + self.ridge
        } else {
            base
        }
    }

    pub fn mean_diagonal(&self) -> f64 {
        self.bands[0].iter().sum::<f64>() / self.t as f64
    }

    /// Zero every entry with `|t - t'| > l`.
    pub fn banded(&self, l: usize) -> Self {
        let keep = l.min(self.band_width);
        Self {
            t: self.t,
            bands: self.bands[..=keep].to_vec(),
            band_width: keep,
            ridge: self.ridge,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.t, self.t, |i, j| self.get(i, j))
    }

    /// Banded Cholesky factorization with ridge escalation: starting at
    /// `1e-8` times the mean diagonal, the ridge grows tenfold until the
    /// factorization succeeds, up to the mean diagonal itself. Residuals of
    /// a narrow pilot fit carry negative short-lag correlations, so the
    /// banded estimate is often indefinite by a few percent of its diagonal.
    pub fn factorize(&self) -> Result<FactorizedCovariance> {
        if let Some(chol) = BandedCholesky::new(self, 0.0) {
            return Ok(FactorizedCovariance { chol, ridge: 0.0 });
        }
        let scale = self.mean_diagonal();
        if !(scale > 0.0) {
            return Err(Error::Factorization { ridge: 0.0 });
        }
        let mut ridge = RIDGE_START * scale;
        while ridge <= RIDGE_CAP * scale * (1.0 + 1e-12) {
            if let Some(chol) = BandedCholesky::new(self, ridge) {
                return Ok(FactorizedCovariance { chol, ridge });
            }
            ridge *= 10.0;
        }
        Err(Error::Factorization { ridge: ridge / 10.0 })
    }
}

/// Lower-triangular banded Cholesky factor `L` with `A + ridge I = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    width: usize,
    /// Row-major: entry `(i, i-d)` at `i*(width+1) + d`.
    factor: Vec<f64>,
}

impl BandedCholesky {
    fn new(a: &BandedCovariance, extra_ridge: f64) -> Option<Self> {
        let n = a.t;
        let w = a.band_width;
        let stride = w + 1;
        let mut f = vec![0.0; n * stride];
        for i in 0..n {
            let jmin = i.saturating_sub(w);
            for j in jmin..=i {
                let mut s = a.get(i, j);
                if i == j {
                    s += extra_ridge;
                }
                for k in jmin.max(j.saturating_sub(w))..j {
                    s -= f[i * stride + (i - k)] * f[j * stride + (j - k)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    f[i * stride] = s.sqrt();
                } else {
                    f[i * stride + (i - j)] = s / f[j * stride];
                }
            }
        }
        Some(Self {
            n,
            width: w,
            factor: f,
        })
    }

    /// Solve `L z = r` in place.
    pub fn forward_solve(&self, r: &mut [f64]) {
        let stride = self.width + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.width);
            let mut s = r[i];
            for (j, rj) in r[lo..i].iter().enumerate().map(|(k, v)| (lo + k, v)) {
                s -= self.factor[i * stride + (i - j)] * rj;
            }
            r[i] = s / self.factor[i * stride];
        }
    }

    /// `rᵀ A⁻¹ r` via `‖L⁻¹ r‖²`.
    pub fn quad_form(&self, r: &[f64]) -> f64 {
        let mut z = r.to_vec();
        self.forward_solve(&mut z);
        z.iter().map(|v| v * v).sum()
    }
}

#[derive(Debug, Clone)]
pub struct FactorizedCovariance {
    pub chol: BandedCholesky,
    pub ridge: f64,
}

/// Local-linear estimate of `γ_{t,t+k}` from residual products, banded at
/// `band` (default `floor(T^{4/15})`).
///
/// For lag `k` the products `ê_{iv} ê_{i,v+k}` are averaged over series and
/// smoothed on the shortened design `{v/(T-k)}` with bandwidth `b_cov`.
pub fn estimate_autocovariance(
    residuals: &ResidualPanel,
    kernel: KernelSpec,
    b_cov: f64,
    band: Option<usize>,
) -> Result<BandedCovariance> {
    let rows = &residuals.residuals;
    let n = rows.len() as f64;
    let t = rows[0].len();
    let l = band.unwrap_or_else(|| default_band(t)).min(t - 1);
    let bands = (0..=l)
        .into_par_iter()
        .map(|k| {
            let len = t - k;
            let bw = Bandwidth::new(b_cov, len)?;
            let mut products = vec![0.0; len];
            for r in rows {
                for (v, p) in products.iter_mut().enumerate() {
                    *p += r[v] * r[v + k];
                }
            }
            products.iter_mut().for_each(|p| *p /= n);
            Ok(Smoother::at_design(kernel, len, bw)?.apply(&products))
        })
        .collect::<Result<Vec<_>>>()?;
    BandedCovariance::from_bands(t, bands)
}

/// `Σ_i (Ŷ_i - Y_i)ᵀ Γ⁻¹ (Ŷ_i - Y_i) / (1 - tr(H)/T)²` with `Ŷ_i = H(b) Y_i`
/// and `Y` the cross-sectionally centered panel.
pub fn gcv_score(
    panel: &TimeSeriesPanel,
    kernel: KernelSpec,
    b: Bandwidth,
    cov: &BandedCovariance,
) -> Result<f64> {
    let factor = cov.factorize()?;
    let centered = center(panel);
    gcv_with(&centered, kernel, b, &factor)
}

fn gcv_with(
    centered: &[Vec<f64>],
    kernel: KernelSpec,
    b: Bandwidth,
    factor: &FactorizedCovariance,
) -> Result<f64> {
    let t = centered[0].len();
    let smoother = Smoother::at_design(kernel, t, b)?;
    let trace: f64 = smoother
        .rows()
        .iter()
        .enumerate()
        .map(|(r, w)| w.weight(r))
        .sum();
    let denom = 1.0 - trace / t as f64;
    if !(denom > 0.0) {
        return Err(Error::UndefinedGcv {
            b: b.value(),
            trace,
            t,
        });
    }
    let mut fitted = vec![0.0; t];
    let mut total = 0.0;
    for y in centered {
        smoother.apply_into(y, &mut fitted);
        let resid: Vec<f64> = fitted.iter().zip(y).map(|(f, v)| f - v).collect();
        total += factor.chol.quad_form(&resid);
    }
    Ok(total / (denom * denom))
}

/// Outcome of a GCV search over a bandwidth grid.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GcvSelection {
    pub candidates: Vec<f64>,
    /// `None` where the score is undefined (singular design, `tr(H) >= T`).
    pub scores: Vec<Option<f64>>,
    pub chosen: f64,
    pub band_width: usize,
    pub ridge: f64,
    pub pilot: f64,
}

/// `count` log-spaced bandwidths on `[2/T, 0.5]`.
pub fn default_grid(t: usize, count: usize) -> Vec<f64> {
    let lo = (2.0 / t as f64).min(0.5);
    let hi = 0.5f64;
    if count <= 1 {
        return vec![hi];
    }
    (0..count)
        .map(|j| {
            let f = j as f64 / (count - 1) as f64;
            (lo.ln() + f * (hi.ln() - lo.ln())).exp()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcvOptions {
    pub grid: Vec<f64>,
    pub pilot: f64,
    /// Covariance smoothing bandwidth; defaults to the pilot.
    pub cov_bandwidth: Option<f64>,
    pub band_override: Option<usize>,
}

impl GcvOptions {
    pub fn defaults(t: usize) -> Self {
        Self {
            grid: default_grid(t, 15),
            pilot: default_pilot(t),
            cov_bandwidth: None,
            band_override: None,
        }
    }
}

/// Pilot residuals, banded covariance, then GCV over the candidate grid.
/// Ties go to the smaller bandwidth.
pub fn select_bandwidth(
    panel: &TimeSeriesPanel,
    kernel: KernelSpec,
    options: &GcvOptions,
) -> Result<GcvSelection> {
    if options.grid.is_empty() {
        return Err(Error::InvalidParameter("empty bandwidth grid".into()));
    }
    let t = panel.t();
    let pilot = Bandwidth::new(options.pilot, t)?;
    let resid = residuals_with(panel, &Smoother::at_design(kernel, t, pilot)?);
    let cov = estimate_autocovariance(
        &resid,
        kernel,
        options.cov_bandwidth.unwrap_or(options.pilot),
        options.band_override,
    )?;
    let factor = cov.factorize()?;
    let centered = center(panel);
    let scores: Vec<Option<f64>> = options
        .grid
        .par_iter()
        .map(|&b| {
            Bandwidth::new(b, t)
                .and_then(|bw| gcv_with(&centered, kernel, bw, &factor))
                .ok()
                .filter(|s| s.is_finite())
        })
        .collect();
    // Scores within rounding of the data's own whitened energy count as ties.
    let energy: f64 = centered.iter().map(|y| factor.chol.quad_form(y)).sum();
    let chosen =
        pick_min(&options.grid, &scores, 1e-10 * energy).ok_or(Error::NoValidCandidate)?;
    Ok(GcvSelection {
        candidates: options.grid.clone(),
        scores,
        chosen,
        band_width: cov.band_width(),
        ridge: factor.ridge,
        pilot: options.pilot,
    })
}

fn pick_min(grid: &[f64], scores: &[Option<f64>], tol: f64) -> Option<f64> {
    let defined: Vec<(f64, f64)> = grid
        .iter()
        .zip(scores)
        .filter_map(|(&b, s)| s.map(|s| (b, s)))
        .collect();
    let min = defined.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    defined
        .iter()
        .filter(|p| p.1 <= min + tol)
        .map(|p| p.0)
        .fold(None, |acc: Option<f64>, b| Some(acc.map_or(b, |a| a.min(b))))
}
