use std::io::{BufRead, Write};

use super::backtest::ItemRecord;
use super::metrics::{MetricConfig, MetricsReport};
use crate::error::{Error, Result};

pub fn write_report_json<W: Write>(report: &MetricsReport, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, report)?;
    Ok(())
}

/// One `name=value` line per metric.
pub fn write_report_text<W: Write>(report: &MetricsReport, mut out: W) -> Result<()> {
    for (k, v) in report.entries() {
        writeln!(out, "{k}={v}")?;
    }
    Ok(())
}

/// Parses the output of [`write_report_text`] into `(name, value)` pairs.
pub fn read_report_text<R: BufRead>(input: R) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Data(format!("line {}: expected name=value", i + 1)))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Data(format!("line {}: `{v}` is not a number", i + 1)))?;
        out.push((k.trim().to_string(), v));
    }
    Ok(out)
}

/// Per-window scores: `series_id,window,history_len,crps,ql50,ql90,msis,nrmse,smape,mase`.
///
/// Weighted metrics use the window's own `Σ|y|`; cells are empty where a
/// score is undefined.
pub fn write_item_csv<W: Write>(items: &[ItemRecord], cfg: &MetricConfig, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "series_id",
        "window",
        "history_len",
        "crps",
        "ql50",
        "ql90",
        "msis",
        "nrmse",
        "smape",
        "mase",
    ])?;
    let cell = |v: Option<f64>| v.filter(|v| v.is_finite()).map_or_else(String::new, |v| v.to_string());
    for it in items {
        let s = &it.scores;
        let norm = (s.sum_abs_y > 0.0).then_some(s.sum_abs_y);
        let weighted = |l: f64| norm.map(|n| 2.0 * l / n);
        let crps = norm.map(|n| s.grid_loss.iter().map(|l| 2.0 * l / n).sum::<f64>() / cfg.quantile_grid.len() as f64);
        let n = s.num_points as f64;
        let nrmse = norm.map(|a| (s.sq_err / n).sqrt() / (a / n));
        w.write_record([
            it.series_id.clone(),
            it.window.window_index.to_string(),
            it.window.history_len.to_string(),
            cell(crps),
            cell(weighted(s.loss50)),
            cell(weighted(s.loss90)),
            cell(s.msis),
            cell(nrmse),
            cell(Some(s.smape)),
            cell(s.mase),
        ])?;
    }
    w.flush()?;
    Ok(())
}
