use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{sort_forecasts, ForecastRecord, IngestError, ObservationRecord, MAX_LEAD_HOURS};
use crate::time::HourStamp;

pub const FORECAST_HEADER: [&str; 5] = ["model_id", "member", "init_time", "valid_time", "value_degC"];
pub const OBSERVATION_HEADER: [&str; 2] = ["valid_time", "value_degC"];

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), IngestError> {
    let found = rdr.headers().map_err(|e| IngestError::Row {
        line: 1,
        message: e.to_string(),
    })?;
    if found.iter().ne(expected.iter().copied()) {
        return Err(IngestError::Header {
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

fn row_err(line: u64, message: impl Into<String>) -> IngestError {
    IngestError::Row {
        line,
        message: message.into(),
    }
}

fn parse_time(field: &str, line: u64) -> Result<HourStamp, IngestError> {
    field.parse().map_err(|e| row_err(line, format!("{e}")))
}

fn parse_value(field: &str, line: u64) -> Result<f64, IngestError> {
    let v: f64 = field
        .parse()
        .map_err(|_| row_err(line, format!("bad temperature `{field}`")))?;
    if !v.is_finite() {
        return Err(row_err(line, format!("non-finite temperature `{field}`")));
    }
    Ok(v)
}

/// Parses forecast CSV from any reader. All rows must parse or the whole read
/// fails. Output is sorted by (model_id, member, init_time, valid_time).
pub fn read_forecasts<R: Read>(r: R) -> Result<Vec<ForecastRecord>, IngestError> {
    let mut rdr = csv_reader(r);
    check_header(&mut rdr, &FORECAST_HEADER)?;
    let mut out = Vec::new();
    for result in rdr.records() {
        let rec = result.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            row_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != FORECAST_HEADER.len() {
            return Err(row_err(line, format!("expected 5 fields, found {}", rec.len())));
        }
        let model_id = rec[0].to_string();
        if model_id.is_empty() {
            return Err(row_err(line, "empty model_id"));
        }
        let member = match &rec[1] {
            "" => None,
            m => Some(
                m.parse::<u32>()
                    .map_err(|_| row_err(line, format!("bad member `{m}`")))?,
            ),
        };
        let init_time = parse_time(&rec[2], line)?;
        let valid_time = parse_time(&rec[3], line)?;
        let lead = valid_time.hours_since(init_time);
        if lead < 0 {
            return Err(IngestError::NegativeLead {
                line,
                init: init_time,
                valid: valid_time,
            });
        }
        if lead > MAX_LEAD_HOURS as i64 {
            return Err(IngestError::LeadOutOfRange { line, lead });
        }
        let value = parse_value(&rec[4], line)?;
        out.push(ForecastRecord {
            model_id,
            member,
            init_time,
            valid_time,
            value,
            rank: None,
        });
    }
    sort_forecasts(&mut out);
    Ok(out)
}

pub fn load_forecasts(path: &Path) -> Result<Vec<ForecastRecord>, IngestError> {
    read_forecasts(open(path)?)
}

/// Parses observation CSV; duplicate valid times are rejected. Output is
/// sorted by valid_time.
pub fn read_observations<R: Read>(r: R) -> Result<Vec<ObservationRecord>, IngestError> {
    let mut rdr = csv_reader(r);
    check_header(&mut rdr, &OBSERVATION_HEADER)?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for result in rdr.records() {
        let rec = result.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            row_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != OBSERVATION_HEADER.len() {
            return Err(row_err(line, format!("expected 2 fields, found {}", rec.len())));
        }
        let valid_time = parse_time(&rec[0], line)?;
        if !seen.insert(valid_time) {
            return Err(IngestError::DuplicateObservation {
                line,
                valid: valid_time,
            });
        }
        let value = parse_value(&rec[1], line)?;
        out.push(ObservationRecord { valid_time, value });
    }
    out.sort_by_key(|o| o.valid_time);
    Ok(out)
}

pub fn load_observations(path: &Path) -> Result<Vec<ObservationRecord>, IngestError> {
    read_observations(open(path)?)
}

fn io_err(path: &str) -> impl Fn(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_string(),
        source,
    }
}

fn csv_io_err(path: &str) -> impl Fn(csv::Error) -> IngestError + '_ {
    move |e| IngestError::Io {
        path: path.to_string(),
        source: std::io::Error::other(e),
    }
}

/// Writes forecasts in the loader's schema. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_forecasts<W: Write>(w: W, records: &[ForecastRecord]) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(w);
    let ctx = "forecasts";
    wtr.write_record(FORECAST_HEADER).map_err(csv_io_err(ctx))?;
    for r in records {
        wtr.write_record([
            r.model_id.clone(),
            r.member.map(|m| m.to_string()).unwrap_or_default(),
            r.init_time.to_string(),
            r.valid_time.to_string(),
            r.value.to_string(),
        ])
        .map_err(csv_io_err(ctx))?;
    }
    wtr.flush().map_err(io_err(ctx))
}

pub fn write_observations<W: Write>(
    w: W,
    records: &[ObservationRecord],
) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(w);
    let ctx = "observations";
    wtr.write_record(OBSERVATION_HEADER).map_err(csv_io_err(ctx))?;
    for r in records {
        wtr.write_record([r.valid_time.to_string(), r.value.to_string()])
            .map_err(csv_io_err(ctx))?;
    }
    wtr.flush().map_err(io_err(ctx))
}
