use crate::error::Result;
use crate::grid::EvalGrid;
use crate::kernel_smoothing::{Bandwidth, KernelSpec, Smoother};
use crate::panel::TimeSeriesPanel;

/// Local linear smoothers on a reporting grid and on the design points.
/// Intercepts are always computed from the design-point fits.
#[derive(Debug, Clone)]
pub struct TrendSmoothers {
    grid: EvalGrid,
    on_grid: Smoother,
    /// `None` when the reporting grid is the design grid.
    on_design: Option<Smoother>,
}

impl TrendSmoothers {
    pub fn new(kernel: KernelSpec, t: usize, b: Bandwidth, grid: EvalGrid) -> Result<Self> {
        let on_grid = Smoother::new(kernel, t, b, grid.points())?;
        let on_design = if grid == EvalGrid::design(t) {
            None
        } else {
            Some(Smoother::at_design(kernel, t, b)?)
        };
        Ok(Self {
            grid,
            on_grid,
            on_design,
        })
    }

    pub fn grid(&self) -> &EvalGrid {
        &self.grid
    }

    pub fn bandwidth(&self) -> Bandwidth {
        self.on_grid.bandwidth()
    }

    pub fn kernel(&self) -> KernelSpec {
        self.on_grid.kernel()
    }

    pub fn series_len(&self) -> usize {
        self.on_grid.len()
    }

    pub(crate) fn grid_smoother(&self) -> &Smoother {
        &self.on_grid
    }

    pub(crate) fn design_smoother(&self) -> &Smoother {
        self.on_design.as_ref().unwrap_or(&self.on_grid)
    }

    pub fn fit(&self, rows: &[Vec<f64>]) -> SeriesFits {
        let on_grid: Vec<Vec<f64>> = rows.iter().map(|r| self.on_grid.apply(r)).collect();
        let on_design = self
            .on_design
            .as_ref()
            .map(|s| rows.iter().map(|r| s.apply(r)).collect());
        SeriesFits {
            grid: self.grid.clone(),
            bandwidth: self.bandwidth(),
            on_grid,
            on_design,
        }
    }
}

/// Per-series fits `μ̂_i`, computed once and pooled over any subset.
#[derive(Debug, Clone)]
pub struct SeriesFits {
    grid: EvalGrid,
    bandwidth: Bandwidth,
    on_grid: Vec<Vec<f64>>,
    on_design: Option<Vec<Vec<f64>>>,
}

impl SeriesFits {
    pub fn new(panel: &TimeSeriesPanel, kernel: KernelSpec, b: Bandwidth, grid: EvalGrid) -> Result<Self> {
        Ok(TrendSmoothers::new(kernel, panel.t(), b, grid)?.fit(panel.rows()))
    }

    pub fn n(&self) -> usize {
        self.on_grid.len()
    }

    pub fn grid(&self) -> &EvalGrid {
        &self.grid
    }

    fn design(&self) -> &[Vec<f64>] {
        self.on_design.as_deref().unwrap_or(&self.on_grid)
    }

    /// Pooled trend, intercepts and fits restricted to `members`.
    pub fn trends(&self, members: &[usize]) -> TrendEstimates {
        let mean_of = |rows: &[Vec<f64>]| {
            let mut m = vec![0.0; rows[members[0]].len()];
            for &i in members {
                for (a, v) in m.iter_mut().zip(&rows[i]) {
                    *a += v;
                }
            }
            let k = members.len() as f64;
            m.iter_mut().for_each(|a| *a /= k);
            m
        };
        let mu = mean_of(&self.on_grid);
        let design = self.design();
        let mu_design = if self.on_design.is_some() {
            mean_of(design)
        } else {
            mu.clone()
        };
        let t = mu_design.len() as f64;
        let intercepts = members
            .iter()
            .map(|&i| {
                design[i]
                    .iter()
                    .zip(&mu_design)
                    .map(|(a, b)| a - b)
                    .sum::<f64>()
                    / t
            })
            .collect();
        TrendEstimates {
            mu_i: members.iter().map(|&i| self.on_grid[i].clone()).collect(),
            mu,
            intercepts,
            grid: self.grid.clone(),
            bandwidth: self.bandwidth,
        }
    }

    /// `Δ_i = ∫(μ̂_i − ĉ_i − μ̂)²` for each member, pooled over `members`.
    pub fn contributions(&self, members: &[usize]) -> Vec<f64> {
        self.trends(members).contributions()
    }

    /// The statistic on `members`.
    pub fn statistic(&self, members: &[usize]) -> f64 {
        self.contributions(members).iter().sum()
    }
}

/// `μ̂_i`, `μ̂` and `ĉ_i` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendEstimates {
    pub mu_i: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub grid: EvalGrid,
    pub bandwidth: Bandwidth,
}

impl TrendEstimates {
    pub fn contributions(&self) -> Vec<f64> {
        self.mu_i
            .iter()
            .zip(&self.intercepts)
            .map(|(row, c)| {
                let sq: Vec<f64> = row
                    .iter()
                    .zip(&self.mu)
                    .map(|(m, p)| (m - c - p).powi(2))
                    .collect();
                self.grid.integrate(&sq)
            })
            .collect()
    }

    pub fn delta_hat(&self) -> f64 {
        self.contributions().iter().sum()
    }
}

pub fn estimate_trends(
    panel: &TimeSeriesPanel,
    kernel: KernelSpec,
    b: Bandwidth,
    grid: EvalGrid,
) -> Result<TrendEstimates> {
    let all: Vec<usize> = (0..panel.n()).collect();
    Ok(SeriesFits::new(panel, kernel, b, grid)?.trends(&all))
}

/// `Δ̂ = Σ_i ∫(μ̂_i − ĉ_i − μ̂)²` by quadrature on `grid`.
pub fn delta_hat(panel: &TimeSeriesPanel, kernel: KernelSpec, b: Bandwidth, grid: EvalGrid) -> Result<f64> {
    Ok(estimate_trends(panel, kernel, b, grid)?.delta_hat())
}

/// `Δ_N` with its closed-form minimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelismIndex {
    pub delta_n: f64,
    pub minimizing_mu: Vec<f64>,
    pub minimizing_c: Vec<f64>,
}

/// `min Σ_i ∫(μ_i − c_i − μ)²` over `μ` and zero-sum `c`, attained at the
/// pointwise mean and `c_i = ∫(μ_i − μ)`.
pub fn delta_index(mu_list: &[Vec<f64>], grid: &EvalGrid) -> ParallelismIndex {
    let n = mu_list.len() as f64;
    let mut mu = vec![0.0; grid.len()];
    for f in mu_list {
        for (a, v) in mu.iter_mut().zip(f) {
            *a += v / n;
        }
    }
    let c: Vec<f64> = mu_list
        .iter()
        .map(|f| {
            let d: Vec<f64> = f.iter().zip(&mu).map(|(a, b)| a - b).collect();
            grid.integrate(&d)
        })
        .collect();
    let delta_n = mu_list
        .iter()
        .zip(&c)
        .map(|(f, ci)| {
            let sq: Vec<f64> = f.iter().zip(&mu).map(|(a, m)| (a - ci - m).powi(2)).collect();
            grid.integrate(&sq)
        })
        .sum();
    ParallelismIndex {
        delta_n,
        minimizing_mu: mu,
        minimizing_c: c,
    }
}
