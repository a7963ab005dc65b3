//! Greedy search for maximal groups of series with parallel trends.
//!
//! Each search tests the working set; on rejection the series contributing
//! most to the statistic are removed, and after the first acceptance the
//! batch size is halved and the search backtracks to the previous working
//! set until single-series steps confirm the group.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::longrun::LongRunVarianceFn;
use crate::panel::TimeSeriesPanel;
use crate::test_engine::{TestConfig, TestContext, TestOutcome};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// Initial removal batch size; `max(1, N/20)` when unset.
    pub n_remove: Option<usize>,
    /// Remove the smallest contributors instead of the largest.
    pub strict_notation: bool,
    /// Test settings; `alpha` is the acceptance level of every cluster.
    pub test: TestConfig,
}

pub fn default_n_remove(n: usize) -> usize {
    (n / 20).max(1)
}

/// Search state for one cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    pub working: Vec<usize>,
    pub step: usize,
    pub backtracking: bool,
    pub batch: usize,
    /// Working sets of earlier steps, most recent last.
    pub history: Vec<Vec<usize>>,
}

impl ClusterState {
    pub fn new(working: Vec<usize>, batch: usize) -> Self {
        Self {
            working,
            step: 0,
            backtracking: false,
            batch,
            history: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub members: Vec<usize>,
    pub p_value: f64,
    pub delta_hat: f64,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// One test invocation during the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    pub cluster: usize,
    pub step: usize,
    pub size: usize,
    pub p_value: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub clusters: Vec<Cluster>,
    pub unclustered: Vec<usize>,
    pub steps: Vec<SearchStep>,
}

/// Runs the searches against one prepared test context, caching null
/// samples by the number of series tested.
pub struct Clusterer<'a> {
    ctx: &'a TestContext,
    strict_notation: bool,
    batch: usize,
    cache: HashMap<usize, Vec<f64>>,
    steps: Vec<SearchStep>,
    found: usize,
}

impl<'a> Clusterer<'a> {
    pub fn new(ctx: &'a TestContext, n: usize, config: &ClusterConfig) -> Result<Self> {
        let batch = config.n_remove.unwrap_or_else(|| default_n_remove(n));
        if batch == 0 || batch >= n {
            return Err(Error::InvalidParameter(format!(
                "removal batch {batch} must be in [1, {n})"
            )));
        }
        Ok(Self {
            ctx,
            strict_notation: config.strict_notation,
            batch,
            cache: HashMap::new(),
            steps: Vec::new(),
            found: 0,
        })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    fn test(&mut self, members: &[usize]) -> Result<TestOutcome> {
        let null = match self.cache.get(&members.len()) {
            Some(s) => s.clone(),
            None => {
                let s = self.ctx.null_samples(members.len())?;
                self.cache.insert(members.len(), s.clone());
                s
            }
        };
        self.ctx.evaluate(members, null)
    }

    /// `working` without its `count` largest contributors (smallest with
    /// strict notation). Ties are ordered by series index.
    fn remove(&self, working: &[usize], count: usize) -> Vec<usize> {
        let delta = self.ctx.fits().contributions(working);
        let mut order: Vec<usize> = (0..working.len()).collect();
        order.sort_by(|&a, &b| delta[a].total_cmp(&delta[b]).then(working[a].cmp(&working[b])));
        let dropped: Vec<usize> = if self.strict_notation {
            order[..count].iter().map(|&j| working[j]).collect()
        } else {
            order[order.len() - count..].iter().map(|&j| working[j]).collect()
        };
        working.iter().copied().filter(|i| !dropped.contains(i)).collect()
    }

    /// One cluster search from `state`. Returns `None` when the working set
    /// shrinks to a single series.
    pub fn find_cluster(&mut self, state: &mut ClusterState) -> Result<Option<Cluster>> {
        let alpha = self.ctx.config().alpha;
        loop {
            let nk = state.working.len();
            if nk <= 1 {
                return Ok(None);
            }
            let out = self.test(&state.working)?;
            let accepted = out.p_value > alpha;
            self.steps.push(SearchStep {
                cluster: self.found,
                step: state.step,
                size: nk,
                p_value: out.p_value,
                accepted,
            });
            if !accepted {
                if state.backtracking {
                    state.batch = (state.batch / 2).max(1);
                }
                let count = state.batch.min(nk.saturating_sub(2)).max(1);
                let next = self.remove(&state.working, count);
                state.history.push(std::mem::replace(&mut state.working, next));
                state.step += 1;
            } else if state.batch == 1 || state.step == 0 {
                self.found += 1;
                return Ok(Some(Cluster {
                    members: state.working.clone(),
                    p_value: out.p_value,
                    delta_hat: out.delta_hat,
                }));
            } else {
                state.backtracking = true;
                state.batch = (state.batch / 2).max(1);
                let previous = state.history.last().expect("step > 0 has history").clone();
                let count = state.batch.min(previous.len().saturating_sub(2)).max(1);
                state.working = self.remove(&previous, count);
            }
        }
    }

    /// Repeats the search on the series not yet clustered.
    pub fn cluster_all(mut self, n: usize) -> Result<ClusteringResult> {
        let mut remaining: Vec<usize> = (0..n).collect();
        let mut clusters = Vec::new();
        while remaining.len() >= 2 {
            let mut state = ClusterState::new(remaining.clone(), self.batch);
            match self.find_cluster(&mut state)? {
                Some(c) => {
                    remaining.retain(|i| !c.members.contains(i));
                    clusters.push(c);
                }
                None => break,
            }
        }
        Ok(ClusteringResult {
            clusters,
            unclustered: remaining,
            steps: self.steps,
        })
    }
}

/// Trends, residual long-run variance and bandwidth are fixed once on the
/// full panel; each subset only re-pools the fits and draws its null.
pub fn cluster_all(
    panel: &TimeSeriesPanel,
    config: &ClusterConfig,
    longrun: Option<LongRunVarianceFn>,
) -> Result<(TestContext, ClusteringResult)> {
    let ctx = TestContext::prepare(panel, &config.test, longrun)?;
    let result = Clusterer::new(&ctx, panel.n(), config)?.cluster_all(panel.n())?;
    Ok((ctx, result))
}
