//! The parallelism statistic, its simulated null distribution and the
//! resulting test.

mod diagnostic;
mod null;
mod trends;

use serde::{Deserialize, Serialize};

pub use diagnostic::{normal_diagnostic, NormalDiagnostic};
pub use null::{empirical_quantile, p_value, NullMethod, NullSimulator, StatisticOperator, SurrogateScale};
pub use trends::{
    delta_hat, delta_index, estimate_trends, ParallelismIndex, SeriesFits, TrendEstimates,
    TrendSmoothers,
};

use crate::covariance::{select_bandwidth, GcvOptions, GcvSelection};
use crate::error::{Error, Result, Stage, StageExt};
use crate::grid::{EvalGrid, GridSpec};
use crate::kernel_smoothing::{Bandwidth, KernelSpec};
use crate::longrun::{longrun_from_residuals, LongRunOptions, LongRunVarianceFn};
use crate::panel::TimeSeriesPanel;

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_SIMS: usize = 2000;
pub const MIN_SIMS: usize = 100;
pub const DEFAULT_SEED: u64 = 1;

/// Fixed bandwidth or GCV selection on the panel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum BandwidthMode {
    Fixed(f64),
    #[default]
    Gcv,
}

/// Bandwidth of the fit whose residuals feed the long-run variance
/// estimate, unless configured: `max(0.05, 2/T)`.
pub fn default_residual_bandwidth(t: usize) -> f64 {
    (0.05f64).max(2.0 / t as f64).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub kernel: KernelSpec,
    pub bandwidth: BandwidthMode,
    pub grid: GridSpec,
    pub alpha: f64,
    pub n_sims: usize,
    pub seed: u64,
    pub longrun: LongRunOptions,
    pub residual_bandwidth: Option<f64>,
    pub null_method: NullMethod,
    pub surrogate_scale: SurrogateScale,
    pub normal_diag: bool,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::default(),
            bandwidth: BandwidthMode::default(),
            grid: GridSpec::default(),
            alpha: DEFAULT_ALPHA,
            n_sims: DEFAULT_SIMS,
            seed: DEFAULT_SEED,
            longrun: LongRunOptions::default(),
            residual_bandwidth: None,
            null_method: NullMethod::default(),
            surrogate_scale: SurrogateScale::default(),
            normal_diag: false,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha = {} not in (0, 1)", self.alpha)));
        }
        if self.n_sims < MIN_SIMS {
            return Err(Error::InvalidParameter(format!(
                "n_sims = {} below the minimum of {MIN_SIMS}",
                self.n_sims
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    pub delta_hat: f64,
    /// Sorted surrogate statistics.
    pub null_samples: Vec<f64>,
    pub q_alpha: f64,
    pub p_value: f64,
    pub reject: bool,
    pub normal_diag: Option<NormalDiagnostic>,
    pub seed: u64,
    pub n_sims: usize,
    pub alpha: f64,
    pub members: Vec<usize>,
    pub trends: TrendEstimates,
}

/// Everything that does not depend on which series are tested: bandwidth,
/// per-series fits on the full panel, the long-run variance function and
/// the null sampler.
#[derive(Debug, Clone)]
pub struct TestContext {
    config: TestConfig,
    n: usize,
    t: usize,
    bandwidth: Bandwidth,
    selection: Option<GcvSelection>,
    fits: SeriesFits,
    longrun: LongRunVarianceFn,
    simulator: NullSimulator,
}

impl TestContext {
    /// Runs every member-independent stage. `longrun` replaces the
    /// residual-based estimate when given.
    pub fn prepare(
        panel: &TimeSeriesPanel,
        config: &TestConfig,
        longrun: Option<LongRunVarianceFn>,
    ) -> Result<Self> {
        config.validate()?;
        let t = panel.t();
        let kernel = config.kernel;
        let (bandwidth, selection) = match config.bandwidth {
            BandwidthMode::Fixed(b) => (Bandwidth::new(b, t).stage(Stage::Bandwidth)?, None),
            BandwidthMode::Gcv => {
                let sel = select_bandwidth(panel, kernel, &GcvOptions::defaults(t)).stage(Stage::Bandwidth)?;
                (Bandwidth::new(sel.chosen, t).stage(Stage::Bandwidth)?, Some(sel))
            }
        };
        let grid = EvalGrid::from_spec(config.grid, t).stage(Stage::Trends)?;
        let smoothers = TrendSmoothers::new(kernel, t, bandwidth, grid).stage(Stage::Trends)?;
        let fits = smoothers.fit(panel.rows());
        let longrun = match longrun {
            Some(g) => g,
            None => {
                let rb = config.residual_bandwidth.unwrap_or_else(|| default_residual_bandwidth(t));
                let rb = Bandwidth::new(rb, t).stage(Stage::Residuals)?;
                longrun_from_residuals(panel, kernel, rb, &config.longrun).stage(Stage::LongRun)?
            }
        };
        let simulator = NullSimulator::new(&longrun, smoothers, config.surrogate_scale, config.null_method)
            .stage(Stage::Null)?;
        Ok(Self {
            config: config.clone(),
            n: panel.n(),
            t,
            bandwidth,
            selection,
            fits,
            longrun,
            simulator,
        })
    }

    pub fn config(&self) -> &TestConfig {
        &self.config
    }

    pub fn bandwidth(&self) -> Bandwidth {
        self.bandwidth
    }

    pub fn selection(&self) -> Option<&GcvSelection> {
        self.selection.as_ref()
    }

    pub fn longrun(&self) -> &LongRunVarianceFn {
        &self.longrun
    }

    pub fn fits(&self) -> &SeriesFits {
        &self.fits
    }

    pub fn simulator(&self) -> &NullSimulator {
        &self.simulator
    }

    /// Surrogate statistics for `n_series` series with the configured seed.
    pub fn null_samples(&self, n_series: usize) -> Result<Vec<f64>> {
        self.simulator
            .samples(n_series, self.config.n_sims, self.config.seed)
            .stage(Stage::Null)
    }

    pub fn check_members(&self, members: &[usize]) -> Result<()> {
        if members.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "at least 2 series are needed, got {}",
                members.len()
            )));
        }
        let mut seen = vec![false; self.n];
        for &i in members {
            if i >= self.n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidParameter(format!("invalid or repeated series index {i}")));
            }
        }
        Ok(())
    }

    /// Test `members` against a precomputed sorted null sample.
    pub fn evaluate(&self, members: &[usize], null_samples: Vec<f64>) -> Result<TestOutcome> {
        self.check_members(members)?;
        let trends = self.fits.trends(members);
        let delta_hat: f64 = trends.contributions().iter().sum();
        let q_alpha = empirical_quantile(&null_samples, 1.0 - self.config.alpha);
        let p = p_value(delta_hat, &null_samples);
        let normal_diag = if self.config.normal_diag {
            Some(
                normal_diagnostic(
                    delta_hat,
                    &null_samples,
                    self.longrun.sigma2(),
                    self.config.kernel,
                    self.bandwidth,
                    members.len(),
                    self.t,
                )
                .stage(Stage::Diagnostic)?,
            )
        } else {
            None
        };
        Ok(TestOutcome {
            delta_hat,
            null_samples,
            q_alpha,
            p_value: p,
            reject: delta_hat > q_alpha,
            normal_diag,
            seed: self.config.seed,
            n_sims: self.config.n_sims,
            alpha: self.config.alpha,
            members: members.to_vec(),
            trends,
        })
    }

    pub fn run(&self, members: &[usize]) -> Result<TestOutcome> {
        self.check_members(members)?;
        let null = self.null_samples(members.len())?;
        self.evaluate(members, null)
    }
}

/// Full pipeline on every series: trends, residuals, long-run variance,
/// simulated null, p-value.
pub fn run_test(panel: &TimeSeriesPanel, config: &TestConfig) -> Result<TestOutcome> {
    let all: Vec<usize> = (0..panel.n()).collect();
    TestContext::prepare(panel, config, None)?.run(&all)
}

/// Sorted surrogate statistics `Δ̂⋄` for `n` series of length `t`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_null(
    g: &LongRunVarianceFn,
    n: usize,
    t: usize,
    kernel: KernelSpec,
    b: Bandwidth,
    grid: GridSpec,
    n_sims: usize,
    seed: u64,
    method: NullMethod,
    scale: SurrogateScale,
) -> Result<Vec<f64>> {
    if n_sims < MIN_SIMS {
        return Err(Error::InvalidParameter(format!(
            "n_sims = {n_sims} below the minimum of {MIN_SIMS}"
        )));
    }
    let smoothers = TrendSmoothers::new(kernel, t, b, EvalGrid::from_spec(grid, t)?)?;
    NullSimulator::new(g, smoothers, scale, method)?.samples(n, n_sims, seed)
}
