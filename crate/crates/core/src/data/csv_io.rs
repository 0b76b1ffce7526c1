//! CSV in/out: a `localminute` timestamp column, the `grid` total, and any
//! number of numeric appliance columns.

use super::series::{MeterSeries, STEP_MINUTES};
use super::DataError;
use chrono::{DateTime, Duration, NaiveDateTime};
use indexmap::IndexMap;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GapPolicy {
    #[default]
    Reject,
    /// Fill missing 15-minute steps by linear interpolation.
    Interpolate,
}

#[derive(Clone, Debug)]
pub struct CsvSchema {
    pub timestamp: String,
    pub grid: String,
    pub gaps: GapPolicy,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            timestamp: "localminute".into(),
            grid: "grid".into(),
            gaps: GapPolicy::Reject,
        }
    }
}

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    for f in [TIMESTAMP_FORMAT, "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, f) {
            return Some(t);
        }
    }
    // offsets such as "2018-01-01 00:00:00-06" keep their local wall clock
    DateTime::parse_from_rfc3339(s)
        .or_else(|_| DateTime::parse_from_str(&format!("{s}00"), "%Y-%m-%d %H:%M:%S%z"))
        .or_else(|_| DateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%z"))
        .ok()
        .map(|d| d.naive_local())
}

pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<MeterSeries, DataError> {
    read_csv(std::fs::File::open(path)?, schema)
}

pub fn read_csv<R: Read>(input: R, schema: &CsvSchema) -> Result<MeterSeries, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| DataError::Parse {
            row: 1,
            msg: e.to_string(),
        })?
        .clone();
    if headers.is_empty() {
        return Err(DataError::Empty);
    }
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let ts_col = col(&schema.timestamp)?;
    let grid_col = col(&schema.grid)?;
    let channel_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != ts_col && *i != grid_col)
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut rows: Vec<(usize, NaiveDateTime, f64, Vec<f64>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| DataError::Parse { row, msg: e.to_string() })?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let ts = parse_timestamp(field(ts_col)).ok_or_else(|| DataError::Parse {
            row,
            msg: format!("bad timestamp {:?}", field(ts_col)),
        })?;
        let num = |c: usize, name: &str| -> Result<f64, DataError> {
            let v: f64 = field(c).parse().map_err(|_| DataError::Parse {
                row,
                msg: format!("column {name}: bad number {:?}", field(c)),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(DataError::Parse {
                    row,
                    msg: format!("column {name}: non-finite value"),
                })
            }
        };
        let grid = num(grid_col, &schema.grid)?;
        let chans = channel_cols.iter().map(|(c, n)| num(*c, n)).collect::<Result<Vec<_>, _>>()?;
        rows.push((row, ts, grid, chans));
    }
    if rows.is_empty() {
        return Err(DataError::Empty);
    }
    rows.sort_by_key(|r| r.1);
    for w in rows.windows(2) {
        if w[0].1 == w[1].1 {
            return Err(DataError::Duplicate {
                row: w[0].0.max(w[1].0),
                timestamp: w[1].1.to_string(),
            });
        }
    }

    let step = Duration::minutes(STEP_MINUTES);
    let mut timestamps = vec![rows[0].1];
    let mut grid = vec![rows[0].2];
    let mut chans: Vec<Vec<f64>> = rows[0].3.iter().map(|&v| vec![v]).collect();
    for w in rows.windows(2) {
        let (prev, cur) = (&w[0], &w[1]);
        let delta = cur.1 - prev.1;
        if delta != step {
            let aligned = delta.num_seconds() % (STEP_MINUTES * 60) == 0;
            if schema.gaps == GapPolicy::Reject || !aligned {
                return Err(DataError::Gap {
                    timestamp: cur.1.to_string(),
                    minutes: delta.num_minutes(),
                });
            }
            let missing = delta.num_minutes() / STEP_MINUTES;
            for k in 1..missing {
                let f = k as f64 / missing as f64;
                timestamps.push(prev.1 + step * k as i32);
                grid.push(prev.2 + f * (cur.2 - prev.2));
                for (c, vals) in chans.iter_mut().enumerate() {
                    vals.push(prev.3[c] + f * (cur.3[c] - prev.3[c]));
                }
            }
        }
        timestamps.push(cur.1);
        grid.push(cur.2);
        for (c, vals) in chans.iter_mut().enumerate() {
            vals.push(cur.3[c]);
        }
    }
    let n = timestamps.len();
    let channels: IndexMap<String, Vec<f64>> = channel_cols.into_iter().map(|(_, n)| n).zip(chans).collect();
    Ok(MeterSeries {
        timestamps,
        channels,
        grid,
        labels: vec![false; n],
        episodes: Vec::new(),
    })
}

/// Writes `localminute,grid,<channels…>` with shortest round-trip numbers.
pub fn write_csv<W: Write>(s: &MeterSeries, out: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["localminute", "grid"];
    header.extend(s.channels.keys().map(String::as_str));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..s.len() {
        let mut rec = vec![s.timestamps[i].format(TIMESTAMP_FORMAT).to_string(), s.grid[i].to_string()];
        rec.extend(s.channels.values().map(|c| c[i].to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> DataError {
    DataError::Io(std::io::Error::other(e.to_string()))
}
