//! Dataset files.
//!
//! JSON lines: one object per line with `start` (timestamp string),
//! `target` (array of numbers) and optional `item_id` and `freq`.
//!
//! CSV: header `id,start,freq,v0,v1,...`; rows may be shorter than the
//! header when series differ in length.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde_json::Value;

use super::series::{format_timestamp, parse_timestamp, Dataset, Domain, Freq, TimeSeries};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataFormat {
    JsonLines,
    Csv,
}

impl DataFormat {
    /// Guesses from the file extension; anything but `.csv` is JSON lines.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => DataFormat::Csv,
            _ => DataFormat::JsonLines,
        }
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "jsonlines" | "json" => Ok(DataFormat::JsonLines),
            "csv" => Ok(DataFormat::Csv),
            other => Err(Error::Config(format!("unknown data format `{other}`"))),
        }
    }
}

/// What the file itself does not carry.
#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub name: String,
    /// Used when records carry no `freq`; records that do must agree.
    pub freq: Freq,
    pub domain: Domain,
    pub prediction_length: usize,
}

pub fn load_dataset(path: &Path, format: DataFormat, opts: &LoadOptions) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    match format {
        DataFormat::JsonLines => read_jsonl(reader, opts),
        DataFormat::Csv => read_csv(reader, opts),
    }
}

fn check_freq(declared: Option<Freq>, opts: &LoadOptions, line: usize) -> Result<Freq> {
    match declared {
        Some(f) if f != opts.freq => Err(Error::Data(format!(
            "line {line}: mixed frequencies ({f} vs {})",
            opts.freq
        ))),
        Some(f) => Ok(f),
        None => Ok(opts.freq),
    }
}

fn finish(opts: &LoadOptions, series: Vec<TimeSeries>) -> Result<Dataset> {
    if series.is_empty() {
        return Err(Error::EmptyDataset(format!("`{}` has no records", opts.name)));
    }
    Dataset::new(
        opts.name.clone(),
        opts.freq,
        opts.domain,
        opts.prediction_length,
        series,
    )
}

pub fn read_jsonl<R: BufRead>(reader: R, opts: &LoadOptions) -> Result<Dataset> {
    let mut series = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Data(format!("line {lineno}: {msg}"));
        let record: Value = serde_json::from_str(&line).map_err(|e| err(format!("invalid JSON: {e}")))?;
        let start = record
            .get("start")
            .and_then(Value::as_str)
            .ok_or_else(|| err("missing field `start`".into()))?;
        let start = parse_timestamp(start).map_err(|e| err(e.to_string()))?;
        let target = record
            .get("target")
            .and_then(Value::as_array)
            .ok_or_else(|| err("missing field `target`".into()))?;
        let values = target
            .iter()
            .enumerate()
            .map(|(j, v)| match v {
                Value::Number(n) => n.as_f64().ok_or_else(|| err(format!("target[{j}] not a float"))),
                Value::Null => Err(err(format!("target[{j}] is missing"))),
                Value::String(s) if s.eq_ignore_ascii_case("nan") => Err(err(format!("target[{j}] is missing"))),
                other => Err(err(format!("target[{j}] = {other} is not a number"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        let id = match record.get("item_id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => format!("series-{}", series.len()),
        };
        let declared = record
            .get("freq")
            .and_then(Value::as_str)
            .map(Freq::from_str)
            .transpose()
            .map_err(|e| err(e.to_string()))?;
        let freq = check_freq(declared, opts, lineno)?;
        let ts = TimeSeries::new(id, start, freq, opts.domain, values).map_err(|e| err(e.to_string()))?;
        series.push(ts);
    }
    finish(opts, series)
}

pub fn read_csv<R: std::io::Read>(reader: R, opts: &LoadOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["id", "start", "freq"];
    if headers.len() < 3 || headers.iter().take(3).ne(expected) {
        return Err(Error::Data("CSV header must begin with id,start,freq".into()));
    }
    let mut series = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let lineno = i + 2;
        let rec = rec?;
        let err = |msg: String| Error::Data(format!("line {lineno}: {msg}"));
        let id = rec.get(0).unwrap_or_default().to_string();
        let start = parse_timestamp(rec.get(1).unwrap_or_default()).map_err(|e| err(e.to_string()))?;
        let declared = match rec.get(2).map(str::trim) {
            Some("") | None => None,
            Some(f) => Some(Freq::from_str(f).map_err(|e| err(e.to_string()))?),
        };
        let freq = check_freq(declared, opts, lineno)?;
        let mut cells: Vec<&str> = rec.iter().skip(3).collect();
        while cells.last().is_some_and(|c| c.trim().is_empty()) {
            cells.pop();
        }
        let values = cells
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let c = c.trim();
                if c.is_empty() || c.eq_ignore_ascii_case("nan") {
                    return Err(err(format!("value {j} is missing")));
                }
                c.parse::<f64>()
                    .map_err(|_| err(format!("value {j} `{c}` is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        series.push(TimeSeries::new(id, start, freq, opts.domain, values).map_err(|e| err(e.to_string()))?);
    }
    finish(opts, series)
}

pub fn write_jsonl<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    for s in dataset.series() {
        let record = serde_json::json!({
            "item_id": s.id,
            "start": format_timestamp(s.start),
            "freq": s.freq.to_string(),
            "target": s.values(),
        });
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_csv<W: Write>(dataset: &Dataset, out: W) -> Result<()> {
    let width = dataset.series().iter().map(TimeSeries::len).max().unwrap_or(0);
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let mut header = vec!["id".to_string(), "start".into(), "freq".into()];
    header.extend((0..width).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for s in dataset.series() {
        let mut row = vec![s.id.clone(), format_timestamp(s.start), s.freq.to_string()];
        row.extend(s.values().iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
