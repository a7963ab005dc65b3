use anyhow::{bail, Context, Result};
use serde::Serialize;

use paratrend::clustering::{cluster_all, ClusterConfig, SearchStep};
use paratrend::covariance::{default_grid, default_pilot, select_bandwidth, GcvOptions};
use paratrend::longrun::{longrun_from_residuals, LongRunOptions, LongRunVarianceFn, WindowParams};
use paratrend::panel::{load_panel_path, PreprocessOptions, TimeSeriesPanel};
use paratrend::sim::{
    acceptance_study, power_study, LongRunSource, SimModel, StudyCell, StudyOptions,
};
use paratrend::test_engine::{
    default_residual_bandwidth, BandwidthMode, NormalDiagnostic, NullMethod, SurrogateScale,
    TestConfig, TestContext, TrendEstimates,
};
use paratrend::{Bandwidth, GridSpec, KernelSpec};

use crate::args::*;
use crate::output::{header, Outputs};
use crate::ConfigError;

fn kernel(k: KernelArg) -> KernelSpec {
    match k {
        KernelArg::Epanechnikov => KernelSpec::Epanechnikov,
        KernelArg::Gaussian => KernelSpec::TruncatedGaussian,
    }
}

fn null_method(m: NullArg) -> NullMethod {
    match m {
        NullArg::Spectral => NullMethod::Spectral,
        NullArg::Direct => NullMethod::Direct,
    }
}

fn scale(literal: bool) -> SurrogateScale {
    if literal {
        SurrogateScale::Literal
    } else {
        SurrogateScale::SqrtLongRun
    }
}

#[derive(Debug, Serialize)]
struct InputEcho {
    path: String,
    delimiter: char,
    header: Option<bool>,
    series_in_rows: bool,
    aggregate: Option<usize>,
    log10: bool,
}

fn load(input: &InputArgs) -> Result<(TimeSeriesPanel, InputEcho)> {
    let mut opts = PreprocessOptions::for_path(&input.input);
    if let Some(d) = input.delimiter {
        if !d.is_ascii() {
            bail!(ConfigError(format!("delimiter {d:?} is not ASCII")));
        }
        opts.delimiter = d as u8;
    }
    opts.header = match (input.header, input.no_header) {
        (true, _) => Some(true),
        (_, true) => Some(false),
        _ => None,
    };
    opts.series_in_rows = input.series_in_rows;
    opts.aggregate = input.aggregate;
    opts.log10 = input.log10;
    let panel = load_panel_path(&input.input, &opts)
        .with_context(|| format!("reading {}", input.input.display()))?;
    let echo = InputEcho {
        path: input.input.display().to_string(),
        delimiter: opts.delimiter as char,
        header: opts.header,
        series_in_rows: opts.series_in_rows,
        aggregate: opts.aggregate,
        log10: opts.log10,
    };
    Ok((panel, echo))
}

fn longrun_options(a: &LongRunArgs) -> LongRunOptions {
    LongRunOptions {
        params: WindowParams { tau: a.tau, rho: a.rho },
        grid_size: a.longrun_grid,
        no_floor: false,
        window_centering: a.window_centering,
        residual_correction: !a.no_residual_correction,
    }
}

fn test_config(a: &TestArgs) -> TestConfig {
    TestConfig {
        kernel: kernel(a.kernel),
        bandwidth: match a.bandwidth {
            Some(b) => BandwidthMode::Fixed(b),
            None => BandwidthMode::Gcv,
        },
        grid: a.grid_size.map_or(GridSpec::Design, GridSpec::Uniform),
        alpha: a.alpha,
        n_sims: a.sims,
        seed: a.seed,
        longrun: longrun_options(&a.longrun),
        residual_bandwidth: a.longrun.residual_bandwidth,
        null_method: null_method(a.null_method),
        surrogate_scale: scale(a.literal_scale),
        normal_diag: a.normal_diag,
    }
}

fn read_longrun(a: &TestArgs) -> Result<Option<LongRunVarianceFn>> {
    a.longrun_file
        .as_ref()
        .map(|p| {
            let f = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            LongRunVarianceFn::read_csv(f).with_context(|| format!("reading {}", p.display()))
        })
        .transpose()
}

fn csv_label(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_trends(out: &Outputs, name: &str, panel: &TimeSeriesPanel, trends: &TrendEstimates, members: &[usize]) -> Result<()> {
    let mut cols = header(["u", "mu"]);
    cols.extend(members.iter().map(|&i| csv_label(&panel.label(i))));
    let rows = trends.grid.points().iter().enumerate().map(|(g, u)| {
        let mut row = vec![*u, trends.mu[g]];
        row.extend(trends.mu_i.iter().map(|r| r[g]));
        row
    });
    out.csv(name, &cols, rows)
}

fn write_longrun(out: &Outputs, g: &LongRunVarianceFn) -> Result<()> {
    out.with("longrun.csv", |w| g.write_csv(w))
}

#[derive(Debug, Serialize)]
struct BandwidthEcho {
    value: f64,
    selected_by_gcv: bool,
}

#[derive(Debug, Serialize)]
struct TestRecord<'a> {
    command: &'static str,
    config: TestEcho<'a>,
    n_series: usize,
    t: usize,
    bandwidth: BandwidthEcho,
    members: Vec<usize>,
    delta_hat: f64,
    p_value: f64,
    q_alpha: f64,
    reject: bool,
    intercepts: &'a [f64],
    sigma2: f64,
    normal_diag: Option<NormalDiagnostic>,
}

#[derive(Debug, Serialize)]
struct TestEcho<'a> {
    input: InputEcho,
    test: &'a TestConfig,
    longrun_file: Option<String>,
    members: Option<Vec<usize>>,
}

fn bandwidth_echo(ctx: &TestContext) -> BandwidthEcho {
    BandwidthEcho {
        value: ctx.bandwidth().value(),
        selected_by_gcv: ctx.selection().is_some(),
    }
}

fn to_zero_based(members: &[usize], n: usize) -> Result<Vec<usize>> {
    members
        .iter()
        .map(|&m| {
            if m == 0 || m > n {
                bail!(ConfigError(format!("series number {m} outside 1..={n}")))
            }
            Ok(m - 1)
        })
        .collect()
}

pub fn test(a: &TestCommandArgs, out: &Outputs) -> Result<()> {
    let (panel, input) = load(&a.common.input)?;
    let config = test_config(&a.common);
    let members = match &a.members {
        Some(m) => to_zero_based(m, panel.n())?,
        None => (0..panel.n()).collect(),
    };
    let ctx = TestContext::prepare(&panel, &config, read_longrun(&a.common)?)?;
    let outcome = ctx.run(&members)?;
    let record = TestRecord {
        command: "test",
        config: TestEcho {
            input,
            test: &config,
            longrun_file: a.common.longrun_file.as_ref().map(|p| p.display().to_string()),
            members: a.members.clone(),
        },
        n_series: members.len(),
        t: panel.t(),
        bandwidth: bandwidth_echo(&ctx),
        members: members.iter().map(|i| i + 1).collect(),
        delta_hat: outcome.delta_hat,
        p_value: outcome.p_value,
        q_alpha: outcome.q_alpha,
        reject: outcome.reject,
        intercepts: &outcome.trends.intercepts,
        sigma2: ctx.longrun().sigma2(),
        normal_diag: outcome.normal_diag,
    };
    out.json("test.json", &record)?;
    write_trends(out, "trends.csv", &panel, &outcome.trends, &members)?;
    write_longrun(out, ctx.longrun())?;
    if a.common.null_csv {
        out.csv("null_samples.csv", &header(["delta_null"]), outcome.null_samples.iter().map(|x| vec![*x]))?;
    }
    println!(
        "delta_hat = {:.6e}  p = {:.4}  q = {:.6e}  {}",
        outcome.delta_hat,
        outcome.p_value,
        outcome.q_alpha,
        if outcome.reject { "reject" } else { "accept" }
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct ClusterOut {
    members: Vec<usize>,
    labels: Vec<String>,
    size: usize,
    p_value: f64,
    delta_hat: f64,
}

#[derive(Debug, Serialize)]
struct ClusterEcho<'a> {
    input: InputEcho,
    cluster: &'a ClusterConfig,
    n_remove: usize,
    longrun_file: Option<String>,
}

#[derive(Debug, Serialize)]
struct ClusterRecord<'a> {
    command: &'static str,
    config: ClusterEcho<'a>,
    n_series: usize,
    t: usize,
    bandwidth: BandwidthEcho,
    sigma2: f64,
    clusters: Vec<ClusterOut>,
    unclustered: Vec<usize>,
    steps: &'a [SearchStep],
}

pub fn cluster(a: &ClusterArgs, out: &Outputs) -> Result<()> {
    let (panel, input) = load(&a.common.input)?;
    let config = ClusterConfig {
        n_remove: a.n_remove,
        strict_notation: a.strict_notation,
        test: test_config(&a.common),
    };
    let n_remove = a.n_remove.unwrap_or_else(|| paratrend::clustering::default_n_remove(panel.n()));
    let (ctx, result) = cluster_all(&panel, &config, read_longrun(&a.common)?)?;
    let clusters: Vec<ClusterOut> = result
        .clusters
        .iter()
        .map(|c| ClusterOut {
            members: c.members.iter().map(|i| i + 1).collect(),
            labels: c.members.iter().map(|&i| panel.label(i)).collect(),
            size: c.size(),
            p_value: c.p_value,
            delta_hat: c.delta_hat,
        })
        .collect();
    let record = ClusterRecord {
        command: "cluster",
        config: ClusterEcho {
            input,
            cluster: &config,
            n_remove,
            longrun_file: a.common.longrun_file.as_ref().map(|p| p.display().to_string()),
        },
        n_series: panel.n(),
        t: panel.t(),
        bandwidth: bandwidth_echo(&ctx),
        sigma2: ctx.longrun().sigma2(),
        clusters,
        unclustered: result.unclustered.iter().map(|i| i + 1).collect(),
        steps: &result.steps,
    };
    out.json("cluster.json", &record)?;
    let all: Vec<usize> = (0..panel.n()).collect();
    write_trends(out, "trends.csv", &panel, &ctx.fits().trends(&all), &all)?;
    let pooled: Vec<Vec<f64>> = result.clusters.iter().map(|c| ctx.fits().trends(&c.members).mu).collect();
    let mut cols = header(["u"]);
    cols.extend((1..=pooled.len()).map(|l| format!("cluster_{l}")));
    let grid = ctx.fits().grid().points().to_vec();
    out.csv(
        "cluster_trends.csv",
        &cols,
        grid.iter().enumerate().map(|(g, u)| {
            let mut row = vec![*u];
            row.extend(pooled.iter().map(|m| m[g]));
            row
        }),
    )?;
    write_longrun(out, ctx.longrun())?;
    for (l, c) in result.clusters.iter().enumerate() {
        println!("cluster {}: {} series, p = {:.4}", l + 1, c.size(), c.p_value);
    }
    if !result.unclustered.is_empty() {
        println!("unclustered: {} series", result.unclustered.len());
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SimulateEcho {
    study: &'static str,
    t: Vec<usize>,
    n: Vec<usize>,
    b: Vec<f64>,
    p: Vec<f64>,
    a: Vec<f64>,
    model: SimModel,
    options: StudyOptions,
}

#[derive(Debug, Serialize)]
struct SimulateRecord<T: Serialize> {
    command: &'static str,
    config: SimulateEcho,
    results: T,
}

pub fn simulate(a: &SimulateArgs, out: &Outputs) -> Result<()> {
    let model = SimModel {
        ma_truncation: a.ma_truncation,
        recursion: a.recursion,
        ..SimModel::default()
    };
    let options = StudyOptions {
        outer_reps: a.reps,
        inner_sims: a.sims,
        alpha: a.alpha,
        seed: a.seed,
        kernel: kernel(a.kernel),
        grid: GridSpec::Design,
        longrun_source: if a.estimated_longrun {
            LongRunSource::Estimated
        } else {
            LongRunSource::Known
        },
        longrun: longrun_options(&a.longrun),
        residual_bandwidth: a.longrun.residual_bandwidth,
        null_method: null_method(a.null_method),
        surrogate_scale: scale(a.literal_scale),
        normal_diag: false,
    };
    let single = |v: &[usize], what: &str| -> Result<usize> {
        match v {
            [x] => Ok(*x),
            _ => bail!(ConfigError(format!("this study takes a single --{what}"))),
        }
    };
    match a.study {
        Study::Generate => {
            let (n, t) = (single(&a.n, "n")?, single(&a.t, "t")?);
            let (p, amp) = match (a.p.as_slice(), a.a.as_slice()) {
                ([p], [amp]) => (*p, *amp),
                _ if a.a.iter().all(|x| *x == 0.0) => (0.0, 0.0),
                _ => bail!(ConfigError("generate takes a single --p and --a".into())),
            };
            let model = SimModel { p, a: amp, ..model };
            let panel = model.generate_panel(n, t, a.seed)?;
            out.with("panel.csv", |w| panel.write_csv(w))?;
            let truth = model.true_longrun_fn(a.longrun.longrun_grid)?;
            write_longrun(out, &truth)?;
            let record = SimulateRecord {
                command: "simulate",
                config: SimulateEcho {
                    study: "generate",
                    t: vec![t],
                    n: vec![n],
                    b: vec![],
                    p: vec![p],
                    a: vec![amp],
                    model,
                    options,
                },
                results: serde_json::json!({ "sigma2": truth.sigma2() }),
            };
            out.json("simulate.json", &record)?;
            println!("wrote {n} series of length {t}");
        }
        Study::Acceptance => {
            let b = a.b.clone().unwrap_or_else(|| vec![0.3, 0.4, 0.5]);
            let mut cells = Vec::new();
            for &t in &a.t {
                for &n in &a.n {
                    for &bw in &b {
                        cells.push(StudyCell { t, n, b: bw });
                    }
                }
            }
            let rows = acceptance_study(&cells, &options)?;
            out.csv(
                "acceptance.csv",
                &header(["t", "n", "b", "acceptance", "mc_se", "reps"]),
                rows.iter().map(|r| {
                    vec![
                        r.t.to_string(),
                        r.n.to_string(),
                        r.b.to_string(),
                        r.acceptance.to_string(),
                        r.mc_se.to_string(),
                        r.reps.to_string(),
                    ]
                }),
            )?;
            for r in &rows {
                println!("T={} N={} b={}: acceptance {:.3} (MC se {:.3})", r.t, r.n, r.b, r.acceptance, r.mc_se);
            }
            let record = SimulateRecord {
                command: "simulate",
                config: SimulateEcho {
                    study: "acceptance",
                    t: a.t.clone(),
                    n: a.n.clone(),
                    b,
                    p: vec![],
                    a: vec![],
                    model,
                    options,
                },
                results: rows,
            };
            out.json("simulate.json", &record)?;
        }
        Study::Power => {
            let (n, t) = (single(&a.n, "n")?, single(&a.t, "t")?);
            let b = match a.b.as_deref() {
                None => 0.4,
                Some([b]) => *b,
                Some(_) => bail!(ConfigError("power takes a single --b".into())),
            };
            let cells: Vec<(f64, f64)> = a.p.iter().flat_map(|&p| a.a.iter().map(move |&x| (p, x))).collect();
            let rows = power_study(t, n, b, &cells, &options)?;
            out.csv(
                "power.csv",
                &header(["p", "a", "rejection", "mc_se", "reps"]),
                rows.iter().map(|r| {
                    vec![
                        r.p.to_string(),
                        r.a.to_string(),
                        r.rejection.to_string(),
                        r.mc_se.to_string(),
                        r.reps.to_string(),
                    ]
                }),
            )?;
            for r in &rows {
                println!("p={} a={}: rejection {:.3} (MC se {:.3})", r.p, r.a, r.rejection, r.mc_se);
            }
            let record = SimulateRecord {
                command: "simulate",
                config: SimulateEcho {
                    study: "power",
                    t: vec![t],
                    n: vec![n],
                    b: vec![b],
                    p: a.p.clone(),
                    a: a.a.clone(),
                    model,
                    options,
                },
                results: rows,
            };
            out.json("simulate.json", &record)?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct LongrunRecord {
    command: &'static str,
    config: LongrunEcho,
    sigma2: f64,
    floor_applied: bool,
    truncation_lag: usize,
}

#[derive(Debug, Serialize)]
struct LongrunEcho {
    input: InputEcho,
    kernel: KernelSpec,
    residual_bandwidth: f64,
    longrun: LongRunOptions,
}

pub fn longrun(a: &LongrunArgs, out: &Outputs) -> Result<()> {
    let (panel, input) = load(&a.input)?;
    let options = longrun_options(&a.longrun);
    let rb = a
        .longrun
        .residual_bandwidth
        .unwrap_or_else(|| default_residual_bandwidth(panel.t()));
    let g = longrun_from_residuals(&panel, kernel(a.kernel), Bandwidth::new(rb, panel.t())?, &options)?;
    write_longrun(out, &g)?;
    let record = LongrunRecord {
        command: "longrun",
        config: LongrunEcho {
            input,
            kernel: kernel(a.kernel),
            residual_bandwidth: rb,
            longrun: options.clone(),
        },
        sigma2: g.sigma2(),
        floor_applied: g.floor_applied(),
        truncation_lag: options.params.truncation(panel.t()),
    };
    out.json("longrun.json", &record)?;
    println!("sigma2 = {:.6}", g.sigma2());
    Ok(())
}

#[derive(Debug, Serialize)]
struct BandwidthRecord<'a> {
    command: &'static str,
    config: BandwidthConfigEcho,
    selection: &'a paratrend::covariance::GcvSelection,
}

#[derive(Debug, Serialize)]
struct BandwidthConfigEcho {
    input: InputEcho,
    kernel: KernelSpec,
    grid: Vec<f64>,
    pilot: f64,
    band: Option<usize>,
}

pub fn bandwidth(a: &BandwidthArgs, out: &Outputs) -> Result<()> {
    let (panel, input) = load(&a.input)?;
    let t = panel.t();
    let grid = a.grid.clone().unwrap_or_else(|| default_grid(t, a.candidates));
    let options = GcvOptions {
        grid: grid.clone(),
        pilot: a.pilot.unwrap_or_else(|| default_pilot(t)),
        cov_bandwidth: None,
        band_override: a.band,
    };
    let sel = select_bandwidth(&panel, kernel(a.kernel), &options)?;
    out.csv(
        "gcv.csv",
        &header(["b", "score"]),
        sel.candidates.iter().zip(&sel.scores).map(|(b, s)| {
            vec![b.to_string(), s.map(|v| v.to_string()).unwrap_or_default()]
        }),
    )?;
    out.json(
        "bandwidth.json",
        &BandwidthRecord {
            command: "bandwidth",
            config: BandwidthConfigEcho {
                input,
                kernel: kernel(a.kernel),
                grid,
                pilot: options.pilot,
                band: a.band,
            },
            selection: &sel,
        },
    )?;
    println!("b = {}", sel.chosen);
    Ok(())
}
