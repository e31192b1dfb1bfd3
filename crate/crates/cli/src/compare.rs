//! Merges observable series from several runs onto the time grid of the
//! first one (the reference) and reports deviations from it.

use std::collections::BTreeSet;
use std::io::Write;

use hubbard_gpsr::ObservableSeries;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRun {
    pub label: String,
    pub series: Vec<ObservableSeries>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean_re: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub time: f64,
    pub observable_id: String,
    /// One entry per run, `None` where the run has no snapshot nearby.
    pub cells: Vec<Option<Cell>>,
    /// Deviation of run `k + 1` from the reference: the difference over
    /// the combined standard error, or the raw difference when both runs
    /// are exact.
    pub deviation: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareTable {
    pub labels: Vec<String>,
    pub rows: Vec<CompareRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationSummary {
    pub points: usize,
    /// Fraction of points with `|deviation| < gate`.
    pub within: f64,
    pub max_abs: f64,
}

impl CompareTable {
    /// Deviation statistics of run `k >= 1` against the reference.
    pub fn summary(&self, k: usize, gate: f64) -> DeviationSummary {
        let devs: Vec<f64> = self.rows.iter().filter_map(|r| r.deviation.get(k - 1).copied().flatten()).collect();
        let inside = devs.iter().filter(|d| d.abs() < gate).count();
        DeviationSummary {
            points: devs.len(),
            within: if devs.is_empty() { 0.0 } else { inside as f64 / devs.len() as f64 },
            max_abs: devs.iter().fold(0.0, |m: f64, d| m.max(d.abs())),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), CliError> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["time".to_string(), "observable_id".to_string()];
        for l in &self.labels {
            header.push(format!("{l}_mean"));
            header.push(format!("{l}_stderr"));
        }
        for l in &self.labels[1..] {
            header.push(format!("{l}_deviation"));
        }
        let csv_err = |e: csv::Error| CliError::Config(format!("csv write failed: {e}"));
        wr.write_record(&header).map_err(csv_err)?;
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            let mut rec = vec![r.time.to_string(), r.observable_id.clone()];
            for c in &r.cells {
                rec.push(fmt(c.map(|c| c.mean_re)));
                rec.push(fmt(c.map(|c| c.stderr)));
            }
            for d in &r.deviation {
                rec.push(fmt(*d));
            }
            wr.write_record(&rec).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn grid_spacing(s: &ObservableSeries) -> f64 {
    s.times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

fn cell(s: &ObservableSeries, t: f64, tol: f64) -> Option<Cell> {
    let k = s.nearest(t)?;
    if (s.times[k] - t).abs() > tol || s.pole[k] {
        return None;
    }
    Some(Cell { mean_re: s.mean[k].re, stderr: s.stderr[k] })
}

/// Merges runs by nearest snapshot. Every run must carry the same set of
/// observables.
pub fn compare_runs(runs: &[LabeledRun]) -> Result<CompareTable, CliError> {
    if runs.len() < 2 {
        return Err(CliError::Config("compare needs at least two runs".into()));
    }
    let ids = |r: &LabeledRun| r.series.iter().map(|s| s.id.clone()).collect::<BTreeSet<_>>();
    let reference = ids(&runs[0]);
    for r in &runs[1..] {
        let other = ids(r);
        if other != reference {
            let diff: Vec<_> = reference.symmetric_difference(&other).cloned().collect();
            return Err(CliError::Config(format!(
                "runs {} and {} cover different observables: {}",
                runs[0].label,
                r.label,
                diff.join(", ")
            )));
        }
    }
    let mut rows = Vec::new();
    for base in &runs[0].series {
        let matched: Vec<&ObservableSeries> = runs
            .iter()
            .map(|r| r.series.iter().find(|s| s.id == base.id).expect("checked above"))
            .collect();
        for &t in &base.times {
            let cells: Vec<Option<Cell>> = matched
                .iter()
                .map(|s| {
                    let spacing = grid_spacing(s).min(grid_spacing(base));
                    let tol = if spacing.is_finite() { 0.5 * spacing } else { 0.0 } + 1e-9 * t.abs().max(1.0);
                    cell(s, t, tol)
                })
                .collect();
            let deviation = cells[1..]
                .iter()
                .map(|c| match (cells[0], c) {
                    (Some(r), Some(c)) => {
                        let diff = c.mean_re - r.mean_re;
                        let se = r.stderr.hypot(c.stderr);
                        Some(if se > 0.0 { diff / se } else { diff })
                    }
                    _ => None,
                })
                .collect();
            rows.push(CompareRow { time: t, observable_id: base.id.clone(), cells, deviation });
        }
    }
    Ok(CompareTable { labels: runs.iter().map(|r| r.label.clone()).collect(), rows })
}
