use std::io::{Read, Write};

use chrono::{DateTime, NaiveDate, NaiveDateTime, Timelike};

use crate::error::{Error, Result};

use super::GenerationSeries;

const TIME_FORMATS: [&str; 3] = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"];

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_local());
    }
    TIME_FORMATS.iter().find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

fn parse_reading(field: Option<&str>, name: &str, line: u64) -> Result<f64> {
    let raw = field.ok_or_else(|| Error::Parse { line, message: format!("missing {name}") })?;
    let v: f64 = raw
        .parse()
        .map_err(|_| Error::Parse { line, message: format!("{name} '{raw}' is not a number") })?;
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::Parse { line, message: format!("{name} {v} must be finite and >= 0") });
    }
    Ok(v)
}

/// Reads `timestamp,generation_kwh[,demand_max_kwh]` with hourly ISO-8601 timestamps.
/// Lines starting with `#` are ignored.
pub fn read_series_csv<R: Read>(reader: R, label: &str) -> Result<GenerationSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    let header_line = rdr.position().line().saturating_sub(1).max(1);
    let cols: Vec<&str> = headers.iter().collect();
    let has_demand = match cols.as_slice() {
        ["timestamp", "generation_kwh"] => false,
        ["timestamp", "generation_kwh", "demand_max_kwh"] => true,
        _ => {
            return Err(Error::Parse {
                line: header_line,
                message: format!(
                    "expected header 'timestamp,generation_kwh[,demand_max_kwh]', got '{}'",
                    cols.join(",")
                ),
            })
        }
    };
    let width = cols.len();

    let mut values = Vec::new();
    let mut demand = Vec::new();
    let mut prev: Option<NaiveDateTime> = None;
    let mut start_hour = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(Error::Parse {
                line,
                message: format!("expected {width} fields, got {}", rec.len()),
            });
        }
        let ts = parse_timestamp(&rec[0]).ok_or_else(|| Error::Parse {
            line,
            message: format!("timestamp '{}' is not ISO-8601", &rec[0]),
        })?;
        match prev {
            None => start_hour = ts.hour() as usize,
            Some(p) if ts - p != chrono::Duration::hours(1) => {
                return Err(Error::Parse {
                    line,
                    message: format!("timestamp {ts} is not one hour after {p}"),
                })
            }
            Some(_) => {}
        }
        prev = Some(ts);
        values.push(parse_reading(rec.get(1), "generation_kwh", line)?);
        if has_demand {
            demand.push(parse_reading(rec.get(2), "demand_max_kwh", line)?);
        }
    }
    let series = GenerationSeries {
        label: label.to_string(),
        start_hour,
        values,
        demand_max: has_demand.then_some(demand),
    };
    series.validate()?;
    Ok(series)
}

/// Writes a series in the ingestion format, hourly from 2024-01-01 at `start_hour`.
/// `comment` lines are emitted first, each prefixed with `# `.
pub fn write_series_csv<W: Write>(
    mut out: W,
    series: &GenerationSeries,
    comment: &[String],
) -> Result<()> {
    for c in comment {
        writeln!(out, "# {c}")?;
    }
    let start = NaiveDate::from_ymd_opt(2024, 1, 1)
        .and_then(|d| d.and_hms_opt(series.start_hour as u32 % 24, 0, 0))
        .expect("valid start time");
    match &series.demand_max {
        Some(_) => writeln!(out, "timestamp,generation_kwh,demand_max_kwh")?,
        None => writeln!(out, "timestamp,generation_kwh")?,
    }
    for (k, &g) in series.values.iter().enumerate() {
        let ts = start + chrono::Duration::hours(k as i64);
        let ts = ts.format("%Y-%m-%dT%H:%M:%S");
        match &series.demand_max {
            Some(d) => writeln!(out, "{ts},{g},{}", d[k])?,
            None => writeln!(out, "{ts},{g}")?,
        }
    }
    Ok(())
}
