//! Lag-window estimation of the long-run variance function `g(u)` from a
//! panel of errors (or residuals), and of `σ² = ∫ g²`.

use std::io::{Read, Write};
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::EvalGrid;
use crate::kernel_smoothing::{Bandwidth, KernelSpec, Smoother};
use crate::panel::{residuals_with, TimeSeriesPanel};

pub const DEFAULT_TAU: f64 = 0.05;
pub const DEFAULT_RHO: f64 = 0.3;
pub const DEFAULT_GRID_SIZE: usize = 101;
/// Relative positivity floor applied to `ĝ`.
pub const FLOOR_FRACTION: f64 = 1e-6;

/// Window half-width `τ` and truncation bandwidth `ϱ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowParams {
    pub tau: f64,
    pub rho: f64,
}

impl Default for WindowParams {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            rho: DEFAULT_RHO,
        }
    }
}

impl WindowParams {
    /// Truncation lag `K_T = floor(T τ ϱ)`.
    pub fn truncation(&self, t: usize) -> usize {
        ((t as f64) * self.tau * self.rho + 1e-9).floor() as usize
    }

    pub fn validate(&self, t: usize) -> Result<()> {
        let tt = t as f64 * self.tau;
        if !(self.tau > 0.0 && self.tau <= 0.5) {
            return Err(Error::InvalidParameter(format!("tau = {} not in (0, 0.5]", self.tau)));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidParameter(format!("rho = {} not in (0, 1]", self.rho)));
        }
        if tt < 4.0 - 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "T*tau = {tt} < 4: windows too small"
            )));
        }
        if self.truncation(t) as f64 >= tt {
            return Err(Error::InvalidParameter(format!(
                "truncation lag {} not below T*tau = {tt}",
                self.truncation(t)
            )));
        }
        Ok(())
    }
}

/// Zero-based index range of `N_τ(u) = {t : |t/T - u| <= τ}`.
pub fn neighborhood(t: usize, tau: f64, u: f64) -> Result<Range<usize>> {
    let tf = t as f64;
    let inside = |s: usize| (s as f64 / tf - u).abs() <= tau + 1e-12;
    let lo = ((u - tau) * tf).floor().max(1.0) as usize;
    let hi = ((u + tau) * tf).ceil().min(tf) as usize;
    let first = (lo..=hi).find(|&s| inside(s));
    let last = (lo..=hi).rev().find(|&s| inside(s));
    match (first, last) {
        (Some(a), Some(b)) if a <= b => Ok(a - 1..b),
        _ => Err(Error::WindowTooSmall { u, size: 0, lag: 0 }),
    }
}

/// Sample autocovariance at lag `k` over `N_τ(u)`, normalized by the number
/// of pairs and averaged over series. With `center`, each series is first
/// centered at its window mean.
pub fn local_autocov(
    errors: &[Vec<f64>],
    params: &WindowParams,
    u: f64,
    k: isize,
    center: bool,
) -> Result<f64> {
    let t = errors[0].len();
    let window = neighborhood(t, params.tau, u)?;
    let lag = k.unsigned_abs();
    if window.len() <= lag + 1 {
        return Err(Error::WindowTooSmall {
            u,
            size: window.len(),
            lag,
        });
    }
    Ok(window_autocovs(errors, window, lag, center)[lag])
}

/// `γ̂_0 .. γ̂_max_lag` over one window, averaged over series.
fn window_autocovs(errors: &[Vec<f64>], window: Range<usize>, max_lag: usize, center: bool) -> Vec<f64> {
    let n = window.len();
    let mut acc = vec![0.0; max_lag + 1];
    let mut centered = vec![0.0; n];
    for row in errors {
        let x = &row[window.clone()];
        let mean = if center { x.iter().sum::<f64>() / n as f64 } else { 0.0 };
        for (c, v) in centered.iter_mut().zip(x) {
            *c = v - mean;
        }
        for (k, a) in acc.iter_mut().enumerate() {
            let s: f64 = centered[..n - k]
                .iter()
                .zip(&centered[k..])
                .map(|(p, q)| p * q)
                .sum();
            *a += s / (n - k) as f64;
        }
    }
    let m = errors.len() as f64;
    acc.iter_mut().for_each(|a| *a /= m);
    acc
}

/// Long-run variance function sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LongRunVarianceFn {
    grid: EvalGrid,
    values: Vec<f64>,
    sigma2: f64,
    floor_applied: bool,
}

impl LongRunVarianceFn {
    /// Wrap sampled values; `σ²` is the grid quadrature of their squares.
    pub fn from_values(grid: EvalGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() || grid.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        let squares: Vec<f64> = values.iter().map(|v| v * v).collect();
        let sigma2 = grid.integrate(&squares);
        Ok(Self {
            grid,
            values,
            sigma2,
            floor_applied: false,
        })
    }

    /// Sample a known function on the grid.
    pub fn from_fn(grid: EvalGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.points().iter().map(|&u| f(u)).collect();
        Self::from_values(grid, values).expect("grid and values agree")
    }

    pub fn grid(&self) -> &EvalGrid {
        &self.grid
    }

    pub fn points(&self) -> &[f64] {
        self.grid.points()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn floor_applied(&self) -> bool {
        self.floor_applied
    }

    /// Linear interpolation between grid points, constant beyond the ends.
    pub fn eval(&self, u: f64) -> f64 {
        let p = self.grid.points();
        if u <= p[0] {
            return self.values[0];
        }
        let last = p.len() - 1;
        if u >= p[last] {
            return self.values[last];
        }
        let j = p.partition_point(|&x| x <= u) - 1;
        let w = (u - p[j]) / (p[j + 1] - p[j]);
        self.values[j] * (1.0 - w) + self.values[j + 1] * w
    }

    /// Values with every entry scaled by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = Self::from_values(self.grid.clone(), self.values.iter().map(|v| v * c).collect())
            .expect("same grid");
        out.floor_applied = self.floor_applied;
        out
    }

    /// `max(ĝ(u), 1e-6 · max ĝ)`, or the smallest positive double when
    /// nothing is positive.
    fn with_floor(mut self) -> Self {
        let max = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let floor = if max > 0.0 {
            FLOOR_FRACTION * max
        } else {
            f64::MIN_POSITIVE
        };
        let mut applied = false;
        for v in self.values.iter_mut() {
            if !(*v >= floor) {
                *v = floor;
                applied = true;
            }
        }
        let squares: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        self.sigma2 = self.grid.integrate(&squares);
        self.floor_applied = applied;
        self
    }

    /// Two columns `u,g` with a header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "u,g")?;
        for (u, g) in self.points().iter().zip(&self.values) {
            writeln!(w, "{u},{g}")?;
        }
        Ok(())
    }

    /// Reads `u,g` pairs on an equispaced grid written by [`Self::write_csv`].
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let mut us = Vec::new();
        let mut gs = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let field = |j: usize| -> Result<f64> {
                rec.get(j)
                    .ok_or_else(|| Error::Parse("expected two columns u,g".into()))?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(e.to_string()))
            };
            us.push(field(0)?);
            gs.push(field(1)?);
        }
        let grid = EvalGrid::uniform(us.len())?;
        for (a, b) in grid.points().iter().zip(&us) {
            if (a - b).abs() > 1e-9 {
                return Err(Error::Parse(format!(
                    "long-run variance grid must be equispaced on [0, 1]; found u = {b}"
                )));
            }
        }
        Self::from_values(grid, gs)
    }
}

/// Options for [`longrun_g`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LongRunOptions {
    pub params: WindowParams,
    pub grid_size: usize,
    /// Disable the positivity floor (diagnostics only).
    pub no_floor: bool,
    /// Subtract per-series window means before forming lagged products.
    /// Off by default: the centering bias accumulates over the `2K_T + 1`
    /// lags to a relative error of roughly `ϱ`, which does not vanish as
    /// `T` grows with `ϱ` fixed.
    pub window_centering: bool,
    /// Divide residual-based estimates by the factor the residual fit
    /// imposes on white noise of unit long-run variance.
    pub residual_correction: bool,
}

impl Default for LongRunOptions {
    fn default() -> Self {
        Self {
            params: WindowParams::default(),
            grid_size: DEFAULT_GRID_SIZE,
            no_floor: false,
            window_centering: false,
            residual_correction: true,
        }
    }
}

/// `ĝ(u) = Σ_{|k| <= K_T} γ̂_k(u) = γ̂_0 + 2 Σ_{k=1}^{K_T} γ̂_k`.
pub fn longrun_g(errors: &[Vec<f64>], options: &LongRunOptions) -> Result<LongRunVarianceFn> {
    let (grid, values) = raw_longrun(errors, options)?;
    finish(grid, values, options)
}

fn finish(grid: EvalGrid, values: Vec<f64>, options: &LongRunOptions) -> Result<LongRunVarianceFn> {
    let raw = LongRunVarianceFn::from_values(grid, values)?;
    Ok(if options.no_floor { raw } else { raw.with_floor() })
}

fn checked_window(t: usize, params: &WindowParams, u: f64) -> Result<Range<usize>> {
    let window = neighborhood(t, params.tau, u)?;
    let kt = params.truncation(t);
    if window.len() <= kt + 1 {
        return Err(Error::WindowTooSmall {
            u,
            size: window.len(),
            lag: kt,
        });
    }
    Ok(window)
}

fn raw_longrun(errors: &[Vec<f64>], options: &LongRunOptions) -> Result<(EvalGrid, Vec<f64>)> {
    if errors.is_empty() {
        return Err(Error::InvalidParameter("no series".into()));
    }
    let t = errors[0].len();
    let params = options.params;
    params.validate(t)?;
    let grid = EvalGrid::uniform(options.grid_size)?;
    let kt = params.truncation(t);
    let values = grid
        .points()
        .par_iter()
        .map(|&u| {
            let window = checked_window(t, &params, u)?;
            let gam = window_autocovs(errors, window, kt, options.window_centering);
            Ok(gam[0] + 2.0 * gam[1..].iter().sum::<f64>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((grid, values))
}

/// `E ĝ(u)` when the estimator is applied to `(I − H) ε` with `ε` white
/// noise of unit variance and `H` the smoother at the design points.
pub fn residual_bias_factors(smoother: &Smoother, options: &LongRunOptions) -> Result<Vec<f64>> {
    let t = smoother.len();
    let params = options.params;
    params.validate(t)?;
    let kt = params.truncation(t);
    let rows = smoother.rows();
    let h = |r: usize, j: usize| rows[r].weight(j);
    // ((I − H)(I − H)ᵀ)_{ts}
    let cov = |a: usize, b: usize| {
        let (ra, rb) = (&rows[a], &rows[b]);
        let lo = ra.first.max(rb.first);
        let hi = (ra.first + ra.values.len()).min(rb.first + rb.values.len());
        let cross: f64 = (lo..hi).map(|j| ra.weight(j) * rb.weight(j)).sum();
        f64::from(u8::from(a == b)) - h(a, b) - h(b, a) + cross
    };
    let grid = EvalGrid::uniform(options.grid_size)?;
    grid.points()
        .par_iter()
        .map(|&u| {
            let w = checked_window(t, &params, u)?;
            let n = w.len();
            // E[r_t m] for the window mean m
            let row_means: Option<Vec<f64>> = options.window_centering.then(|| {
                let mut q = vec![0.0; t];
                for s in w.clone() {
                    q[s] += 1.0;
                    for (j, v) in rows[s].values.iter().enumerate() {
                        q[rows[s].first + j] -= v;
                    }
                }
                w.clone()
                    .map(|a| {
                        let r = &rows[a];
                        let smoothed: f64 = r.values.iter().enumerate().map(|(j, v)| v * q[r.first + j]).sum();
                        (q[a] - smoothed) / n as f64
                    })
                    .collect()
            });
            let overall = row_means.as_ref().map_or(0.0, |m| m.iter().sum::<f64>() / n as f64);
            let mut total = 0.0;
            for k in 0..=kt {
                let mut acc = 0.0;
                for a in w.start..w.end - k {
                    let mut v = cov(a, a + k);
                    if let Some(m) = &row_means {
                        v += overall - m[a - w.start] - m[a + k - w.start];
                    }
                    acc += v;
                }
                let mean = acc / (n - k) as f64;
                total += if k == 0 { mean } else { 2.0 * mean };
            }
            Ok(total)
        })
        .collect()
}

/// `g̃`: [`longrun_g`] applied to residuals of a local linear fit with
/// bandwidth `b`, divided by [`residual_bias_factors`] unless disabled.
pub fn longrun_from_residuals(
    panel: &TimeSeriesPanel,
    kernel: KernelSpec,
    b: Bandwidth,
    options: &LongRunOptions,
) -> Result<LongRunVarianceFn> {
    let smoother = Smoother::at_design(kernel, panel.t(), b)?;
    let r = residuals_with(panel, &smoother);
    let (grid, mut values) = raw_longrun(&r.residuals, options)?;
    if options.residual_correction {
        let beta = residual_bias_factors(&smoother, options)?;
        for (v, f) in values.iter_mut().zip(beta) {
            *v /= f;
        }
    }
    finish(grid, values, options)
}
