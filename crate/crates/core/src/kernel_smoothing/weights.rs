use nalgebra::DMatrix;
use rayon::prelude::*;

use super::kernel::KernelSpec;
use crate::error::{Error, Result};

const EDGE_TOL: f64 = 1e-12;

/// Smoothing bandwidth in rescaled time, validated against a design length.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Bandwidth(f64);

impl Bandwidth {
    /// Requires `0 < b <= 1` and `T*b >= 2`.
    pub fn new(b: f64, t: usize) -> Result<Self> {
        if !(b > 0.0 && b <= 1.0) || (t as f64) * b < 2.0 - 1e-9 {
            return Err(Error::InvalidBandwidth { b, t });
        }
        Ok(Self(b))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Local moment sums `S_{b,j}(u) = Σ_t (u - t/T)^j K((u - t/T)/b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSums {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
}

impl MomentSums {
    pub fn determinant(&self) -> f64 {
        self.s2 * self.s0 - self.s1 * self.s1
    }

    fn is_singular(&self) -> bool {
        !(self.s0 > 0.0) || self.determinant() <= 1e-12 * self.s0 * self.s2
    }
}

/// Local linear weights `w_b(t, u)` at a single evaluation point. Only the
/// window `|u - t/T| <= b` is stored; weights outside it are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SmootherWeights {
    pub u: f64,
    /// Zero-based index of the first design point in the window.
    pub first: usize,
    pub values: Vec<f64>,
    pub moments: MomentSums,
}

impl SmootherWeights {
    /// Weight of design point with zero-based index `idx` (time `idx+1`).
    pub fn weight(&self, idx: usize) -> f64 {
        idx.checked_sub(self.first)
            .and_then(|j| self.values.get(j))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self, t: usize) -> Vec<f64> {
        let mut out = vec![0.0; t];
        out[self.first..self.first + self.values.len()].copy_from_slice(&self.values);
        out
    }

    #[inline]
    pub fn apply(&self, series: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(&series[self.first..self.first + self.values.len()])
            .map(|(w, x)| w * x)
            .sum()
    }
}

/// Zero-based index range of design points with `|u - t/T| <= b`.
fn window(t: usize, b: f64, u: f64) -> std::ops::Range<usize> {
    let tf = t as f64;
    let lo = ((u - b) * tf - EDGE_TOL * tf).ceil().max(1.0) as usize;
    let hi = ((u + b) * tf + EDGE_TOL * tf).floor().min(tf) as usize;
    if hi < lo {
        return 0..0;
    }
    let keep = |s: usize| (u - s as f64 / tf).abs() <= b + EDGE_TOL;
    let lo = (lo..=hi).find(|&s| keep(s)).unwrap_or(hi + 1);
    let hi = (lo..=hi).rev().find(|&s| keep(s)).unwrap_or(lo.saturating_sub(1));
    if hi < lo {
        0..0
    } else {
        (lo - 1)..hi
    }
}

#[inline]
fn scaled_kernel(kernel: KernelSpec, d: f64, b: f64) -> f64 {
    kernel.eval((d / b).clamp(-1.0, 1.0))
}

/// Moment sums over the window at `u` for a design of length `t`.
pub fn moment_sums(kernel: KernelSpec, t: usize, b: Bandwidth, u: f64) -> Result<MomentSums> {
    let m = raw_moments(kernel, t, b.value(), u).0;
    if m.is_singular() {
        return Err(Error::SingularDesign { u });
    }
    Ok(m)
}

fn raw_moments(kernel: KernelSpec, t: usize, b: f64, u: f64) -> (MomentSums, std::ops::Range<usize>) {
    let range = window(t, b, u);
    let tf = t as f64;
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for idx in range.clone() {
        let d = u - (idx + 1) as f64 / tf;
        let k = scaled_kernel(kernel, d, b);
        s0 += k;
        s1 += d * k;
        s2 += d * d * k;
    }
    (MomentSums { s0, s1, s2 }, range)
}

/// Local linear weights at `u` for a design `{t/T}` of length `t`.
pub fn local_linear_weights(
    kernel: KernelSpec,
    t: usize,
    b: Bandwidth,
    u: f64,
) -> Result<SmootherWeights> {
    let bw = b.value();
    let (m, range) = raw_moments(kernel, t, bw, u);
    if m.is_singular() {
        return Err(Error::SingularDesign { u });
    }
    let det = m.determinant();
    let tf = t as f64;
    let values = range
        .clone()
        .map(|idx| {
            let d = u - (idx + 1) as f64 / tf;
            scaled_kernel(kernel, d, bw) * (m.s2 - d * m.s1) / det
        })
        .collect();
    Ok(SmootherWeights {
        u,
        first: range.start,
        values,
        moments: m,
    })
}

/// Local linear smoother for a fixed design length and a fixed set of
/// evaluation points; the weights are computed once and reused.
#[derive(Debug, Clone)]
pub struct Smoother {
    kernel: KernelSpec,
    len: usize,
    bandwidth: Bandwidth,
    rows: Vec<SmootherWeights>,
}

impl Smoother {
    pub fn new(kernel: KernelSpec, len: usize, b: Bandwidth, points: &[f64]) -> Result<Self> {
        let rows = points
            .par_iter()
            .map(|&u| local_linear_weights(kernel, len, b, u))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kernel,
            len,
            bandwidth: b,
            rows,
        })
    }

    /// Smoother evaluated at the design points `t/T`.
    pub fn at_design(kernel: KernelSpec, len: usize, b: Bandwidth) -> Result<Self> {
        let points: Vec<f64> = (1..=len).map(|t| t as f64 / len as f64).collect();
        Self::new(kernel, len, b, &points)
    }

    pub fn kernel(&self) -> KernelSpec {
        self.kernel
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bandwidth(&self) -> Bandwidth {
        self.bandwidth
    }

    pub fn rows(&self) -> &[SmootherWeights] {
        &self.rows
    }

    pub fn apply(&self, series: &[f64]) -> Vec<f64> {
        assert_eq!(series.len(), self.len, "series length mismatch");
        self.rows.iter().map(|w| w.apply(series)).collect()
    }

    pub fn apply_into(&self, series: &[f64], out: &mut [f64]) {
        for (o, w) in out.iter_mut().zip(&self.rows) {
            *o = w.apply(series);
        }
    }
}

/// Smooth one length-`T` series onto `grid`.
pub fn smooth_series(
    kernel: KernelSpec,
    b: Bandwidth,
    series: &[f64],
    grid: &[f64],
) -> Result<Vec<f64>> {
    Ok(Smoother::new(kernel, series.len(), b, grid)?.apply(series))
}

/// The `T x T` smoothing matrix: row `t'` holds `w_b(., t'/T)`.
#[derive(Debug, Clone)]
pub struct HatMatrix {
    pub entries: DMatrix<f64>,
    pub trace: f64,
}

impl HatMatrix {
    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.nrows() == 0
    }
}

pub fn hat_matrix(kernel: KernelSpec, t: usize, b: Bandwidth) -> Result<HatMatrix> {
    Ok(hat_from_smoother(&Smoother::at_design(kernel, t, b)?))
}

fn hat_from_smoother(s: &Smoother) -> HatMatrix {
    let t = s.len();
    let mut entries = DMatrix::zeros(t, t);
    for (r, w) in s.rows().iter().enumerate() {
        for (j, v) in w.values.iter().enumerate() {
            entries[(r, w.first + j)] = *v;
        }
    }
    let trace = entries.diagonal().sum();
    HatMatrix { entries, trace }
}
