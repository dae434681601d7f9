//! Session logs and price series.
//!
//! Sessions are CSV with header
//! `session_id,connection_time,disconnect_time,kwh_requested,space_id` and an
//! optional `minutes_available` column. Prices are CSV
//! `timestamp,price_usd_per_kwh`. Timestamps are ISO-8601 in UTC.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{ChargingTask, PriceSeries, Timestamp};
use crate::scalar::{lit, to_f64, Scalar};
use crate::simulator::{Event, EventKind};

/// Parses an ISO-8601 timestamp. Values without an offset are read as UTC.
pub fn parse_timestamp(s: &str) -> Result<Timestamp> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(n) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(n.and_utc().timestamp());
        }
    }
    Err(Error::Timestamp { value: s.to_string(), message: "expected ISO-8601 date-time".into() })
}

/// `YYYY-MM-DDTHH:MM:SSZ`.
pub fn format_timestamp(t: Timestamp) -> String {
    match Utc.timestamp_opt(t, 0).single() {
        Some(dt) => dt.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
        None => t.to_string(),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub connection_time: Timestamp,
    pub disconnect_time: Timestamp,
    pub kwh_requested: f64,
    pub space_id: String,
    pub minutes_available: Option<f64>,
}

impl SessionRecord {
    pub fn minutes_available(&self) -> f64 {
        self.minutes_available.unwrap_or((self.disconnect_time - self.connection_time) as f64 / 60.0)
    }
}

#[derive(Debug, Deserialize)]
struct RawSession {
    session_id: String,
    connection_time: String,
    disconnect_time: String,
    kwh_requested: String,
    space_id: String,
    #[serde(default)]
    minutes_available: Option<String>,
}

fn malformed(line: u64, message: impl Into<String>) -> Error {
    Error::MalformedRow { line, message: message.into() }
}

fn parse_number(line: u64, field: &str, s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| malformed(line, format!("{field}: not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(malformed(line, format!("{field}: not finite")));
    }
    Ok(v)
}

/// Reads session records in file order.
pub fn read_sessions<R: Read>(reader: R) -> Result<Vec<SessionRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out: Vec<SessionRecord> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for row in rdr.deserialize::<RawSession>() {
        let raw = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(malformed(line, e.to_string()));
            }
        };
        let line = out.len() as u64 + 2;
        let ts = |s: &str| parse_timestamp(s).map_err(|e| malformed(line, e.to_string()));
        let connection_time = ts(&raw.connection_time)?;
        let disconnect_time = ts(&raw.disconnect_time)?;
        if disconnect_time <= connection_time {
            return Err(malformed(line, "disconnect_time must be after connection_time"));
        }
        let kwh_requested = parse_number(line, "kwh_requested", &raw.kwh_requested)?;
        if kwh_requested < 0.0 {
            return Err(malformed(line, "negative energy requested"));
        }
        let minutes_available = match raw.minutes_available.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(s) => Some(parse_number(line, "minutes_available", s)?),
        };
        if raw.session_id.is_empty() {
            return Err(malformed(line, "empty session_id"));
        }
        if !seen.insert(raw.session_id.clone()) {
            return Err(malformed(line, format!("duplicate session_id {}", raw.session_id)));
        }
        out.push(SessionRecord {
            session_id: raw.session_id,
            connection_time,
            disconnect_time,
            kwh_requested,
            space_id: raw.space_id,
            minutes_available,
        });
    }
    Ok(out)
}

pub fn read_sessions_file(path: &Path) -> Result<Vec<SessionRecord>> {
    read_sessions(open(path)?)
}

/// Writes records in the format [`read_sessions`] accepts.
pub fn write_sessions<W: Write>(records: &[SessionRecord], writer: W) -> Result<()> {
    let io = |e: csv::Error| Error::Io { path: "<sessions>".into(), message: e.to_string() };
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["session_id", "connection_time", "disconnect_time", "kwh_requested", "space_id", "minutes_available"])
        .map_err(io)?;
    for r in records {
        w.write_record([
            r.session_id.clone(),
            format_timestamp(r.connection_time),
            format_timestamp(r.disconnect_time),
            format!("{}", r.kwh_requested),
            r.space_id.clone(),
            r.minutes_available.map(|m| format!("{m}")).unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io { path: "<sessions>".into(), message: e.to_string() })
}

/// How requested energy becomes a departure SoC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConversion<T> {
    pub voltage: T,
    pub c_bat: T,
    /// SoC on arrival.
    pub soc_start: T,
}

impl<T: Scalar> SessionConversion<T> {
    /// `min(1, soc_start + kWh/(V·C_bat/1000))`.
    pub fn soc_dep(&self, kwh: T) -> T {
        (self.soc_start + kwh / (self.voltage * self.c_bat / lit(1000.0))).min(T::one())
    }
}

/// Arrival and departure events, time-ordered with arrivals first at equal times.
pub fn sessions_to_events<T: Scalar>(records: &[SessionRecord], conv: &SessionConversion<T>) -> Vec<Event<T>> {
    let mut events = Vec::with_capacity(2 * records.len());
    for r in records {
        let task = ChargingTask {
            vehicle_id: r.session_id.clone(),
            t_arr: r.connection_time,
            t_dep: r.disconnect_time,
            soc_start: conv.soc_start,
            soc_dep: conv.soc_dep(lit(r.kwh_requested)),
        };
        events.push(Event { time: r.connection_time, kind: EventKind::Arrival(task) });
        events.push(Event { time: r.disconnect_time, kind: EventKind::Departure(r.session_id.clone()) });
    }
    events.sort_by_key(|e| (e.time, e.kind.rank()));
    events
}

pub fn parse_sessions<T: Scalar>(path: &Path, conv: &SessionConversion<T>) -> Result<Vec<Event<T>>> {
    Ok(sessions_to_events(&read_sessions_file(path)?, conv))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceRecord<T> {
    pub timestamp: Timestamp,
    /// $/kWh.
    pub price: T,
}

/// Piecewise-constant price in force from each record until the next.
/// Past the final record the last price continues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceCurve<T> {
    records: Vec<PriceRecord<T>>,
}

impl<T: Scalar> PriceCurve<T> {
    pub fn new(records: Vec<PriceRecord<T>>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptySeries);
        }
        for (k, pair) in records.windows(2).enumerate() {
            if pair[1].timestamp <= pair[0].timestamp {
                return Err(malformed(k as u64 + 3, "price timestamps must be strictly increasing"));
            }
        }
        if let Some((k, r)) = records.iter().enumerate().find(|(_, r)| !(r.price >= T::zero())) {
            return Err(malformed(k as u64 + 2, format!("negative price {}", to_f64(r.price))));
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[PriceRecord<T>] {
        &self.records
    }

    pub fn start(&self) -> Timestamp {
        self.records[0].timestamp
    }

    pub fn price_at(&self, t: Timestamp) -> Result<T> {
        let k = self.records.partition_point(|r| r.timestamp <= t);
        if k == 0 {
            return Err(Error::PriceGap(format!("no price in force at {}", format_timestamp(t))));
        }
        Ok(self.records[k - 1].price)
    }

    /// Price in force at the start of each of `slots` slots from `t_s`.
    pub fn resample(&self, t_s: Timestamp, dt_secs: i64, slots: usize) -> Result<PriceSeries<T>> {
        let prices = (0..slots.max(1)).map(|i| self.price_at(t_s + i as i64 * dt_secs)).collect::<Result<Vec<_>>>()?;
        PriceSeries::new(prices)
    }
}

#[derive(Debug, Deserialize)]
struct RawPrice {
    timestamp: String,
    price_usd_per_kwh: String,
}

pub fn read_prices<T: Scalar, R: Read>(reader: R) -> Result<PriceCurve<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut records = Vec::new();
    for row in rdr.deserialize::<RawPrice>() {
        let raw = row.map_err(|e| malformed(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = records.len() as u64 + 2;
        let timestamp = parse_timestamp(&raw.timestamp)?;
        let price = parse_number(line, "price_usd_per_kwh", &raw.price_usd_per_kwh)?;
        records.push(PriceRecord { timestamp, price: lit(price) });
    }
    PriceCurve::new(records)
}

/// Reads a price file. A missing file is reported as a price gap.
pub fn parse_prices<T: Scalar>(path: &Path) -> Result<PriceCurve<T>> {
    let file = File::open(path).map_err(|e| Error::PriceGap(format!("cannot read price file {}: {e}", path.display())))?;
    read_prices(file)
}

pub fn write_prices<T: Scalar, W: Write>(curve: &PriceCurve<T>, writer: W) -> Result<()> {
    let io = |e: csv::Error| Error::Io { path: "<prices>".into(), message: e.to_string() };
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "price_usd_per_kwh"]).map_err(io)?;
    for r in curve.records() {
        w.write_record([format_timestamp(r.timestamp), format!("{}", to_f64(r.price))]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io { path: "<prices>".into(), message: e.to_string() })
}
