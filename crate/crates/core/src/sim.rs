//! Generator for panels with a time-varying AR(1) error process and the
//! Monte Carlo studies built on it.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{EvalGrid, GridSpec};
use crate::kernel_smoothing::{Bandwidth, KernelSpec};
use crate::longrun::{longrun_from_residuals, LongRunOptions, LongRunVarianceFn};
use crate::panel::TimeSeriesPanel;
use crate::rng::{derive_seed, substream, Domain};
use crate::test_engine::{
    default_residual_bandwidth, empirical_quantile, normal_diagnostic, p_value, NormalDiagnostic,
    NullMethod, NullSimulator, SurrogateScale, TrendSmoothers,
};

pub const DEFAULT_MA_TRUNCATION: usize = 64;

/// `X_it = c_i + 2 sin(2πu) + a·2 cos(2πu)·[i < ceil(pN)] + e_it` at
/// `u = t/T`, where `e_it = ζ_{i,t}(t/T)` and `ζ(u)` is the stationary
/// AR(1) with coefficient `ρ(u) = ρ_0 + ρ_1 u` driven by Rademacher noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimModel {
    pub rho_intercept: f64,
    pub rho_slope: f64,
    pub sigma: f64,
    /// Distortion magnitude.
    pub a: f64,
    /// Proportion of distorted series.
    pub p: f64,
    /// Per-series shifts; zeros when empty.
    pub shifts: Vec<f64>,
    pub ma_truncation: usize,
    /// Use the recursion `e_t = ρ(t/T) e_{t-1} + σ ε_t` (burn-in of
    /// `ma_truncation` steps) instead of the truncated moving average.
    pub recursion: bool,
}

impl Default for SimModel {
    fn default() -> Self {
        Self {
            rho_intercept: 0.2,
            rho_slope: -0.3,
            sigma: 1.0,
            a: 0.0,
            p: 0.0,
            shifts: Vec::new(),
            ma_truncation: DEFAULT_MA_TRUNCATION,
            recursion: false,
        }
    }
}

impl SimModel {
    /// The alternative with a fraction `p` of series distorted by `a`.
    pub fn alternative(p: f64, a: f64) -> Self {
        Self {
            p,
            a,
            ..Self::default()
        }
    }

    pub fn trend(u: f64) -> f64 {
        2.0 * (2.0 * PI * u).sin()
    }

    pub fn distortion(u: f64) -> f64 {
        2.0 * (2.0 * PI * u).cos()
    }

    pub fn rho(&self, u: f64) -> f64 {
        self.rho_intercept + self.rho_slope * u
    }

    /// `Var ζ(u) = σ² / (1 − ρ(u)²)`.
    pub fn stationary_variance(&self, u: f64) -> f64 {
        self.sigma * self.sigma / (1.0 - self.rho(u).powi(2))
    }

    /// `g(u) = σ² / (1 − ρ(u))²`.
    pub fn true_longrun(&self, u: f64) -> f64 {
        self.sigma * self.sigma / (1.0 - self.rho(u)).powi(2)
    }

    pub fn true_longrun_fn(&self, grid_size: usize) -> Result<LongRunVarianceFn> {
        Ok(LongRunVarianceFn::from_fn(EvalGrid::uniform(grid_size)?, |u| {
            self.true_longrun(u)
        }))
    }

    pub fn validate(&self) -> Result<()> {
        let worst = self.rho(0.0).abs().max(self.rho(1.0).abs());
        if worst >= 1.0 {
            return Err(Error::InvalidParameter(format!("|rho(u)| reaches {worst} >= 1")));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidParameter(format!("p = {} not in [0, 1]", self.p)));
        }
        if self.ma_truncation == 0 {
            return Err(Error::InvalidParameter("MA truncation must be at least 1".into()));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!("sigma = {}", self.sigma)));
        }
        Ok(())
    }

    /// Number of distorted series, `ceil(pN)`.
    pub fn distorted(&self, n: usize) -> usize {
        ((self.p * n as f64) - 1e-12).ceil().max(0.0) as usize
    }

    /// Error series `i`; innovations cover `t = 1 − J .. T`.
    fn errors_for(&self, t: usize, seed: u64, i: usize) -> Vec<f64> {
        let j = self.ma_truncation;
        let mut rng = substream(seed, Domain::PanelSeries, i as u64);
        // eps[k] is the innovation at time k + 1 - J
        let eps: Vec<f64> = (0..t + j)
            .map(|_| if rng.random::<bool>() { self.sigma } else { -self.sigma })
            .collect();
        if self.recursion {
            let mut e = 0.0;
            let mut out = Vec::with_capacity(t);
            for (k, x) in eps.iter().enumerate() {
                let time = k as isize + 1 - j as isize;
                let u = (time.max(1) as f64) / t as f64;
                e = self.rho(u) * e + x;
                if time >= 1 {
                    out.push(e);
                }
            }
            return out;
        }
        (1..=t)
            .map(|s| {
                let r = self.rho(s as f64 / t as f64);
                let last = s - 1 + j;
                let mut acc = 0.0;
                let mut pow = 1.0;
                for lag in 0..=j {
                    acc += pow * eps[last - lag];
                    pow *= r;
                }
                acc
            })
            .collect()
    }

    pub fn generate_errors(&self, n: usize, t: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        Ok((0..n)
            .into_par_iter()
            .map(|i| self.errors_for(t, seed, i))
            .collect())
    }

    pub fn generate_panel(&self, n: usize, t: usize, seed: u64) -> Result<TimeSeriesPanel> {
        if !self.shifts.is_empty() && self.shifts.len() != n {
            return Err(Error::InvalidParameter(format!(
                "{} shifts for {n} series",
                self.shifts.len()
            )));
        }
        let errors = self.generate_errors(n, t, seed)?;
        let distorted = self.distorted(n);
        let rows = errors
            .into_iter()
            .enumerate()
            .map(|(i, e)| {
                let c = self.shifts.get(i).copied().unwrap_or(0.0);
                e.into_iter()
                    .enumerate()
                    .map(|(k, x)| {
                        let u = (k + 1) as f64 / t as f64;
                        let d = if i < distorted { self.a * Self::distortion(u) } else { 0.0 };
                        c + Self::trend(u) + d + x
                    })
                    .collect()
            })
            .collect();
        TimeSeriesPanel::new(rows)
    }
}

pub fn generate_panel(model: &SimModel, n: usize, t: usize, seed: u64) -> Result<TimeSeriesPanel> {
    model.generate_panel(n, t, seed)
}

/// Which long-run variance function drives the null in a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LongRunSource {
    /// The model's exact `g`.
    #[default]
    Known,
    /// Residual-based estimate per replicate.
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyOptions {
    pub outer_reps: usize,
    pub inner_sims: usize,
    pub alpha: f64,
    pub seed: u64,
    pub kernel: KernelSpec,
    pub grid: GridSpec,
    pub longrun_source: LongRunSource,
    pub longrun: LongRunOptions,
    pub residual_bandwidth: Option<f64>,
    pub null_method: NullMethod,
    pub surrogate_scale: SurrogateScale,
    pub normal_diag: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            outer_reps: 500,
            inner_sims: 1000,
            alpha: 0.05,
            seed: 1,
            kernel: KernelSpec::default(),
            grid: GridSpec::default(),
            longrun_source: LongRunSource::default(),
            longrun: LongRunOptions::default(),
            residual_bandwidth: None,
            null_method: NullMethod::default(),
            surrogate_scale: SurrogateScale::default(),
            normal_diag: false,
        }
    }
}

/// One outer replicate of a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub delta_hat: f64,
    pub q_alpha: f64,
    pub p_value: f64,
    pub reject: bool,
    pub normal_diag: Option<NormalDiagnostic>,
}

/// Runs the full test on `outer_reps` independent panels from `model`.
/// Replicate `r` uses the seed derived from `(seed, r)` for both its panel
/// and its null sample.
pub fn replicate_tests(
    model: &SimModel,
    n: usize,
    t: usize,
    b: f64,
    options: &StudyOptions,
) -> Result<Vec<ReplicateOutcome>> {
    if options.outer_reps == 0 || options.inner_sims == 0 {
        return Err(Error::InvalidParameter("replicate counts must be positive".into()));
    }
    if !(options.alpha > 0.0 && options.alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha = {}", options.alpha)));
    }
    model.validate()?;
    let bw = Bandwidth::new(b, t)?;
    let smoothers = TrendSmoothers::new(options.kernel, t, bw, EvalGrid::from_spec(options.grid, t)?)?;
    let known = match options.longrun_source {
        LongRunSource::Known => {
            let g = model.true_longrun_fn(options.longrun.grid_size)?;
            let sim = NullSimulator::new(&g, smoothers.clone(), options.surrogate_scale, options.null_method)?;
            Some((g, sim))
        }
        LongRunSource::Estimated => None,
    };
    let all: Vec<usize> = (0..n).collect();
    (0..options.outer_reps as u64)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(options.seed, Domain::OuterReplicate, r);
            let panel = model.generate_panel(n, t, seed)?;
            let delta_hat = smoothers.fit(panel.rows()).statistic(&all);
            let estimated;
            let (g, sim) = match &known {
                Some((g, sim)) => (g, sim),
                None => {
                    let rb = options.residual_bandwidth.unwrap_or_else(|| default_residual_bandwidth(t));
                    let g = longrun_from_residuals(&panel, options.kernel, Bandwidth::new(rb, t)?, &options.longrun)?;
                    let sim = NullSimulator::new(&g, smoothers.clone(), options.surrogate_scale, options.null_method)?;
                    estimated = (g, sim);
                    (&estimated.0, &estimated.1)
                }
            };
            let null = sim.samples(n, options.inner_sims, seed)?;
            let q_alpha = empirical_quantile(&null, 1.0 - options.alpha);
            let normal_diag = if options.normal_diag {
                Some(normal_diagnostic(delta_hat, &null, g.sigma2(), options.kernel, bw, n, t)?)
            } else {
                None
            };
            Ok(ReplicateOutcome {
                delta_hat,
                q_alpha,
                p_value: p_value(delta_hat, &null),
                reject: delta_hat > q_alpha,
                normal_diag,
            })
        })
        .collect()
}

/// One cell of the acceptance table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub t: usize,
    pub n: usize,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRow {
    pub t: usize,
    pub n: usize,
    pub b: f64,
    pub acceptance: f64,
    /// `√(α(1−α)/reps)`
    pub mc_se: f64,
    pub reps: usize,
}

/// Proportion of null panels with `Δ̂ <= q̂_{1−α}`, per cell.
pub fn acceptance_study(cells: &[StudyCell], options: &StudyOptions) -> Result<Vec<AcceptanceRow>> {
    if options.outer_reps < 100 {
        return Err(Error::InvalidParameter(format!(
            "outer_reps = {} below 100",
            options.outer_reps
        )));
    }
    let model = SimModel::default();
    cells
        .iter()
        .map(|c| {
            let reps = replicate_tests(&model, c.n, c.t, c.b, options)?;
            let accepted = reps.iter().filter(|r| !r.reject).count();
            Ok(AcceptanceRow {
                t: c.t,
                n: c.n,
                b: c.b,
                acceptance: accepted as f64 / reps.len() as f64,
                mc_se: mc_standard_error(options.alpha, reps.len()),
                reps: reps.len(),
            })
        })
        .collect()
}

pub fn mc_standard_error(alpha: f64, reps: usize) -> f64 {
    (alpha * (1.0 - alpha) / reps as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub p: f64,
    pub a: f64,
    pub rejection: f64,
    /// Binomial standard error of `rejection`, floored at the null value
    /// `√(α(1−α)/reps)`.
    pub mc_se: f64,
    pub reps: usize,
}

/// Rejection rates over a grid of `(p, a)`.
pub fn power_study(
    t: usize,
    n: usize,
    b: f64,
    cells: &[(f64, f64)],
    options: &StudyOptions,
) -> Result<Vec<PowerRow>> {
    cells
        .iter()
        .map(|&(p, a)| {
            let reps = replicate_tests(&SimModel::alternative(p, a), n, t, b, options)?;
            let rejected = reps.iter().filter(|r| r.reject).count();
            let rate = rejected as f64 / reps.len() as f64;
            let se = (rate * (1.0 - rate) / reps.len() as f64)
                .sqrt()
                .max(mc_standard_error(options.alpha, reps.len()));
            Ok(PowerRow {
                p,
                a,
                rejection: rate,
                mc_se: se,
                reps: reps.len(),
            })
        })
        .collect()
}
