//! Panel container, pooled and centered series, residuals, and CSV ingestion.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::kernel_smoothing::{Bandwidth, KernelSpec, Smoother};

/// `N x T` observations `X_{it}`, one row per series, time rescaled to
/// `t/T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    rows: Vec<Vec<f64>>,
    labels: Option<Vec<String>>,
}

impl TimeSeriesPanel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_labels(rows, None)
    }

    pub fn with_labels(rows: Vec<Vec<f64>>, labels: Option<Vec<String>>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidPanel(format!(
                "need at least 2 series, got {}",
                rows.len()
            )));
        }
        let t = rows[0].len();
        if t < 4 {
            return Err(Error::InvalidPanel(format!("need at least 4 time points, got {t}")));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != t) {
            return Err(Error::InvalidPanel(format!(
                "ragged rows: series {i} has length {} but series 0 has {t}",
                rows[i].len()
            )));
        }
        for (i, r) in rows.iter().enumerate() {
            if let Some(j) = r.iter().position(|x| !x.is_finite()) {
                return Err(Error::InvalidPanel(format!(
                    "missing or non-finite value at series {i}, time {}",
                    j + 1
                )));
            }
        }
        if let Some(l) = &labels {
            if l.len() != rows.len() {
                return Err(Error::InvalidPanel(format!(
                    "{} labels for {} series",
                    l.len(),
                    rows.len()
                )));
            }
        }
        Ok(Self { rows, labels })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn t(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn label(&self, i: usize) -> String {
        self.labels
            .as_ref()
            .map(|l| l[i].clone())
            .unwrap_or_else(|| format!("s{}", i + 1))
    }

    /// Panel restricted to `members` (zero-based, in the given order).
    pub fn subset(&self, members: &[usize]) -> Result<Self> {
        if let Some(&bad) = members.iter().find(|&&i| i >= self.n()) {
            return Err(Error::InvalidParameter(format!(
                "series index {bad} out of range for {} series",
                self.n()
            )));
        }
        let rows = members.iter().map(|&i| self.rows[i].clone()).collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| members.iter().map(|&i| l[i].clone()).collect());
        Self::with_labels(rows, labels)
    }

    /// Block sums over consecutive periods of length `period`.
    pub fn aggregate(&self, period: usize) -> Result<Self> {
        if period == 0 || !self.t().is_multiple_of(period) {
            return Err(Error::AggregationMismatch {
                period,
                len: self.t(),
            });
        }
        let rows = self
            .rows
            .iter()
            .map(|r| r.chunks_exact(period).map(|c| c.iter().sum()).collect())
            .collect();
        Self::with_labels(rows, self.labels.clone())
    }

    pub fn log10(&self) -> Result<Self> {
        let mut rows = self.rows.clone();
        for (i, r) in rows.iter_mut().enumerate() {
            for (j, x) in r.iter_mut().enumerate() {
                if *x <= 0.0 {
                    return Err(Error::NonPositiveUnderLog {
                        series: i,
                        time: j + 1,
                    });
                }
                *x = x.log10();
            }
        }
        Self::with_labels(rows, self.labels.clone())
    }

    /// Writes one column per series, one row per time step, with a header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = (0..self.n()).map(|i| self.label(i)).collect();
        w.write_record(&header).map_err(csv_err)?;
        for t in 0..self.t() {
            w.write_record(self.rows.iter().map(|r| r[t].to_string()))
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

/// Options applied while reading a panel from delimited text.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessOptions {
    pub delimiter: u8,
    /// `Some(true)`: first record is a header. `None`: detect from content.
    pub header: Option<bool>,
    /// Input has one row per series instead of one column per series.
    pub series_in_rows: bool,
    /// Block-sum period, applied before any transform.
    pub aggregate: Option<usize>,
    pub log10: bool,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            header: None,
            series_in_rows: false,
            aggregate: None,
            log10: false,
        }
    }
}

impl PreprocessOptions {
    /// Tab delimiter for `.tsv`/`.tab` paths, comma otherwise.
    pub fn for_path(path: &Path) -> Self {
        let tsv = matches!(
            path.extension().and_then(|e| e.to_str()),
            Some("tsv") | Some("tab")
        );
        Self {
            delimiter: if tsv { b'\t' } else { b',' },
            ..Self::default()
        }
    }
}

pub fn load_panel<R: Read>(source: R, options: &PreprocessOptions) -> Result<TimeSeriesPanel> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        records.push(rec.iter().map(str::to_owned).collect::<Vec<_>>());
    }
    if records.is_empty() {
        return Err(Error::InvalidPanel("empty input".into()));
    }
    let width = records[0].len();
    if let Some(k) = records.iter().position(|r| r.len() != width) {
        return Err(Error::InvalidPanel(format!(
            "ragged rows: record {} has {} fields, expected {width}",
            k + 1,
            records[k].len()
        )));
    }
    let header = options
        .header
        .unwrap_or_else(|| records[0].iter().any(|f| f.parse::<f64>().is_err()));
    let labels = header.then(|| records.remove(0));
    let parse = |row: usize, col: usize, s: &str| -> Result<f64> {
        s.parse::<f64>().map_err(|_| {
            if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
                Error::InvalidPanel(format!("missing value at record {}, field {}", row + 1, col + 1))
            } else {
                Error::Parse(format!("'{s}' at record {}, field {}", row + 1, col + 1))
            }
        })
    };
    let mut table = Vec::with_capacity(records.len());
    for (r, rec) in records.iter().enumerate() {
        table.push(
            rec.iter()
                .enumerate()
                .map(|(c, s)| parse(r, c, s))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let rows = if options.series_in_rows {
        table
    } else {
        (0..width)
            .map(|c| table.iter().map(|r| r[c]).collect())
            .collect()
    };
    let labels = if options.series_in_rows { None } else { labels };
    let mut panel = TimeSeriesPanel::with_labels(rows, labels)?;
    if let Some(k) = options.aggregate {
        panel = panel.aggregate(k)?;
    }
    if options.log10 {
        panel = panel.log10()?;
    }
    Ok(panel)
}

pub fn load_panel_path(path: &Path, options: &PreprocessOptions) -> Result<TimeSeriesPanel> {
    load_panel(std::fs::File::open(path)?, options)
}

/// Cross-sectional and temporal means of a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledSeries {
    /// `X̄_{·t}`
    pub xbar_t: Vec<f64>,
    /// `X̄_{i·}`
    pub xbar_i: Vec<f64>,
    /// `X̄_{··}`
    pub xbar: f64,
}

pub fn pooled(panel: &TimeSeriesPanel) -> PooledSeries {
    let n = panel.n() as f64;
    let t = panel.t();
    let xbar_t = column_means(panel.rows());
    let xbar_i: Vec<f64> = panel
        .rows()
        .iter()
        .map(|r| r.iter().sum::<f64>() / t as f64)
        .collect();
    let xbar = xbar_i.iter().sum::<f64>() / n;
    PooledSeries {
        xbar_t,
        xbar_i,
        xbar,
    }
}

pub(crate) fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len() as f64;
    let mut m = vec![0.0; rows[0].len()];
    for r in rows {
        for (a, x) in m.iter_mut().zip(r) {
            *a += x;
        }
    }
    m.iter_mut().for_each(|a| *a /= n);
    m
}

/// `Y_{it} = X_{it} - X̄_{·t}`.
pub fn center(panel: &TimeSeriesPanel) -> Vec<Vec<f64>> {
    let xbar_t = column_means(panel.rows());
    panel
        .rows()
        .iter()
        .map(|r| r.iter().zip(&xbar_t).map(|(x, m)| x - m).collect())
        .collect()
}

/// Residuals `X_{it} - μ̂_i(t/T)` of a local linear fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPanel {
    pub residuals: Vec<Vec<f64>>,
    pub bandwidth_used: Bandwidth,
}

pub fn residuals(panel: &TimeSeriesPanel, kernel: KernelSpec, b: Bandwidth) -> Result<ResidualPanel> {
    let smoother = Smoother::at_design(kernel, panel.t(), b)?;
    Ok(residuals_with(panel, &smoother))
}

pub(crate) fn residuals_with(panel: &TimeSeriesPanel, smoother: &Smoother) -> ResidualPanel {
    let residuals = panel
        .rows()
        .iter()
        .map(|r| {
            smoother
                .apply(r)
                .iter()
                .zip(r)
                .map(|(fit, x)| x - fit)
                .collect()
        })
        .collect();
    ResidualPanel {
        residuals,
        bandwidth_used: smoother.bandwidth(),
    }
}
