//! Raw telematics event model and the JSON-lines log format.
//!
//! One event per line:
//!
//! ```text
//! {"device":"dev-1","ts":"2019-02-04T08:00:00Z","kind":"position","lat":55.75,"lon":37.61}
//! ```
//!
//! Keys that do not apply to an event kind must be absent. Unknown keys are
//! ignored. Lines starting with `#` are comments (provenance headers).
//! Malformed lines are skipped and reported with their line number;
//! they never abort a parse.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use chrono::{DateTime, SecondsFormat, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Device accelerometer ceiling in G.
pub const MAX_ACCEL_G: f64 = 24.0;

/// Speeds above this are flagged as suspect by [`validate_log`], never dropped.
pub const SUSPECT_SPEED_KPH: f64 = 300.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unreadable event stream: {0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    InvalidEvent(String),

    #[error("device log for {expected} contains an event for {found}")]
    DeviceMismatch { expected: String, found: String },

    #[error("device log must contain at least one event")]
    EmptyLog,
}

/// A WGS84 coordinate in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, IngestError> {
        check_coordinates(lat, lon).map_err(IngestError::InvalidEvent)?;
        Ok(GeoPoint { lat, lon })
    }
}

fn check_coordinates(lat: f64, lon: f64) -> Result<(), String> {
    if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
        return Err("latitude out of range".into());
    }
    if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
        return Err("longitude out of range".into());
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    IgnitionOn,
    IgnitionOff,
    Position,
    Speed,
    Acceleration,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::IgnitionOn => "ignition_on",
            EventKind::IgnitionOff => "ignition_off",
            EventKind::Position => "position",
            EventKind::Speed => "speed",
            EventKind::Acceleration => "acceleration",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "ignition_on" => EventKind::IgnitionOn,
            "ignition_off" => EventKind::IgnitionOff,
            "position" => EventKind::Position,
            "speed" => EventKind::Speed,
            "acceleration" => EventKind::Acceleration,
            _ => return None,
        })
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Accelerometer axis of an acceleration event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Longitudinal,
    Lateral,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Longitudinal => "longitudinal",
            Axis::Lateral => "lateral",
        }
    }
}

/// Kind-specific content of an event.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    IgnitionOn,
    IgnitionOff,
    Position(GeoPoint),
    /// Speed packages may carry a fix; it is not required.
    Speed {
        speed_kph: f64,
        position: Option<GeoPoint>,
    },
    Acceleration {
        axis: Axis,
        accel_g: f64,
        position: Option<GeoPoint>,
    },
}

/// One raw telematics record.
#[derive(Debug, Clone, PartialEq)]
pub struct EventPackage {
    pub device_id: String,
    pub timestamp: DateTime<Utc>,
    pub payload: Payload,
}

impl EventPackage {
    pub fn new(device_id: impl Into<String>, timestamp: DateTime<Utc>, payload: Payload) -> Self {
        EventPackage {
            device_id: device_id.into(),
            timestamp: timestamp.with_nanosecond(0).unwrap_or(timestamp),
            payload,
        }
    }

    pub fn kind(&self) -> EventKind {
        match self.payload {
            Payload::IgnitionOn => EventKind::IgnitionOn,
            Payload::IgnitionOff => EventKind::IgnitionOff,
            Payload::Position(_) => EventKind::Position,
            Payload::Speed { .. } => EventKind::Speed,
            Payload::Acceleration { .. } => EventKind::Acceleration,
        }
    }

    /// Coordinates carried by the event, if any.
    pub fn position(&self) -> Option<GeoPoint> {
        match self.payload {
            Payload::Position(p) => Some(p),
            Payload::Speed { position, .. } | Payload::Acceleration { position, .. } => position,
            _ => None,
        }
    }

    pub fn speed_kph(&self) -> Option<f64> {
        match self.payload {
            Payload::Speed { speed_kph, .. } => Some(speed_kph),
            _ => None,
        }
    }

    /// Position and speed packages mark vehicle movement.
    pub fn is_movement(&self) -> bool {
        matches!(self.payload, Payload::Position(_) | Payload::Speed { .. })
    }

    /// Serializes to one JSON line (no trailing newline).
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&RawRecord::from(self)).expect("event records always serialize")
    }

    /// Parses and validates one JSON line.
    pub fn from_json_line(line: &str) -> Result<Self, String> {
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
        raw.into_event()
    }
}

/// Wire shape of one log line.
#[derive(Debug, Serialize, Deserialize)]
struct RawRecord {
    device: String,
    ts: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speed_kph: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axis: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    accel_g: Option<f64>,
}

impl From<&EventPackage> for RawRecord {
    fn from(ev: &EventPackage) -> Self {
        let mut raw = RawRecord {
            device: ev.device_id.clone(),
            ts: ev.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
            kind: ev.kind().as_str().to_string(),
            lat: None,
            lon: None,
            speed_kph: None,
            axis: None,
            accel_g: None,
        };
        if let Some(p) = ev.position() {
            raw.lat = Some(p.lat);
            raw.lon = Some(p.lon);
        }
        match ev.payload {
            Payload::Speed { speed_kph, .. } => raw.speed_kph = Some(speed_kph),
            Payload::Acceleration { axis, accel_g, .. } => {
                raw.axis = Some(axis.as_str().to_string());
                raw.accel_g = Some(accel_g);
            }
            _ => {}
        }
        raw
    }
}

impl RawRecord {
    fn into_event(self) -> Result<EventPackage, String> {
        if self.device.trim().is_empty() {
            return Err("empty device id".into());
        }
        let timestamp = DateTime::parse_from_rfc3339(&self.ts)
            .map_err(|e| format!("unparseable timestamp {:?}: {e}", self.ts))?
            .with_timezone(&Utc);
        let kind = EventKind::parse(&self.kind).ok_or_else(|| format!("unknown kind {:?}", self.kind))?;

        let position = match (self.lat, self.lon) {
            (Some(lat), Some(lon)) => {
                check_coordinates(lat, lon)?;
                Some(GeoPoint { lat, lon })
            }
            (None, None) => None,
            (Some(_), None) => return Err("latitude without longitude".into()),
            (None, Some(_)) => return Err("longitude without latitude".into()),
        };

        let forbid = |present: bool, field: &str| -> Result<(), String> {
            if present {
                Err(format!("field `{field}` not allowed for kind {kind}"))
            } else {
                Ok(())
            }
        };

        let payload = match kind {
            EventKind::IgnitionOn | EventKind::IgnitionOff => {
                forbid(position.is_some(), "lat")?;
                forbid(self.speed_kph.is_some(), "speed_kph")?;
                forbid(self.axis.is_some(), "axis")?;
                forbid(self.accel_g.is_some(), "accel_g")?;
                if kind == EventKind::IgnitionOn {
                    Payload::IgnitionOn
                } else {
                    Payload::IgnitionOff
                }
            }
            EventKind::Position => {
                forbid(self.speed_kph.is_some(), "speed_kph")?;
                forbid(self.axis.is_some(), "axis")?;
                forbid(self.accel_g.is_some(), "accel_g")?;
                Payload::Position(position.ok_or("position event without coordinates")?)
            }
            EventKind::Speed => {
                forbid(self.axis.is_some(), "axis")?;
                forbid(self.accel_g.is_some(), "accel_g")?;
                let speed_kph = self.speed_kph.ok_or("speed event without speed_kph")?;
                if !speed_kph.is_finite() || speed_kph < 0.0 {
                    return Err("negative speed".into());
                }
                Payload::Speed { speed_kph, position }
            }
            EventKind::Acceleration => {
                forbid(self.speed_kph.is_some(), "speed_kph")?;
                let axis = match self.axis.as_deref() {
                    Some("longitudinal") => Axis::Longitudinal,
                    Some("lateral") => Axis::Lateral,
                    Some(other) => return Err(format!("unknown axis {other:?}")),
                    None => return Err("acceleration event without axis".into()),
                };
                let accel_g = self.accel_g.ok_or("acceleration event without accel_g")?;
                if !accel_g.is_finite() || accel_g.abs() > MAX_ACCEL_G {
                    return Err("acceleration beyond 24 g ceiling".into());
                }
                Payload::Acceleration {
                    axis,
                    accel_g,
                    position,
                }
            }
        };
        Ok(EventPackage::new(self.device, timestamp, payload))
    }
}

/// Time-ordered raw stream of one device.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceLog {
    pub device_id: String,
    pub events: Vec<EventPackage>,
    pub observation_start: DateTime<Utc>,
    pub observation_end: DateTime<Utc>,
}

impl DeviceLog {
    /// Builds a log from events of a single device. Events are stably sorted
    /// by timestamp and the observation window spans first to last event.
    pub fn from_events(device_id: impl Into<String>, mut events: Vec<EventPackage>) -> Result<Self, IngestError> {
        let device_id = device_id.into();
        if let Some(ev) = events.iter().find(|e| e.device_id != device_id) {
            return Err(IngestError::DeviceMismatch {
                expected: device_id,
                found: ev.device_id.clone(),
            });
        }
        events.sort_by_key(|e| e.timestamp);
        let (first, last) = match (events.first(), events.last()) {
            (Some(f), Some(l)) => (f.timestamp, l.timestamp),
            _ => return Err(IngestError::EmptyLog),
        };
        Ok(DeviceLog {
            device_id,
            events,
            observation_start: first,
            observation_end: last,
        })
    }
}

/// A skipped input line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineDiagnostic {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    /// One log per device, ordered by device id.
    pub logs: Vec<DeviceLog>,
    pub skipped: Vec<LineDiagnostic>,
    pub comment_lines: usize,
    pub lines_read: usize,
}

impl ParseOutcome {
    pub fn event_count(&self) -> usize {
        self.logs.iter().map(|l| l.events.len()).sum()
    }
}

/// Parses a JSON-lines event stream into per-device logs.
///
/// Only an unreadable stream is fatal. Every other problem skips the line
/// and records why, so `skipped.len() + comment_lines + event_count() == lines_read`.
/// Exact duplicates of an earlier event (same device, timestamp, kind and
/// payload) are skipped as retransmissions.
pub fn parse_event_log<R: BufRead>(mut reader: R) -> Result<ParseOutcome, IngestError> {
    let mut by_device: BTreeMap<String, Vec<EventPackage>> = BTreeMap::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut outcome = ParseOutcome::default();
    let mut buf = Vec::new();

    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        outcome.lines_read += 1;
        let line_no = outcome.lines_read;
        let mut skip = |reason: String| outcome.skipped.push(LineDiagnostic { line: line_no, reason });

        let text = match std::str::from_utf8(&buf) {
            Ok(t) => t.trim_end_matches(['\n', '\r']),
            Err(_) => {
                skip("line is not valid UTF-8".into());
                continue;
            }
        };
        if text.starts_with('#') {
            outcome.comment_lines += 1;
            continue;
        }
        if text.trim().is_empty() {
            skip("empty line".into());
            continue;
        }
        match EventPackage::from_json_line(text) {
            Ok(ev) => {
                if !seen.insert(ev.to_json_line()) {
                    skip("duplicate event".into());
                    continue;
                }
                by_device.entry(ev.device_id.clone()).or_default().push(ev);
            }
            Err(reason) => skip(reason),
        }
    }

    for (device, events) in by_device {
        outcome.logs.push(DeviceLog::from_events(device, events)?);
    }
    Ok(outcome)
}

/// Writes logs as JSON lines in log order.
pub fn write_event_log<W: Write>(logs: &[DeviceLog], mut out: W) -> std::io::Result<()> {
    for log in logs {
        for ev in &log.events {
            writeln!(out, "{}", ev.to_json_line())?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IssueKind {
    NonMonotoneTime,
    DeviceMismatch,
    OutsideObservationWindow,
    UnterminatedTrip,
    UnmatchedIgnitionOff,
    SuspectSpeed,
}

impl IssueKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IssueKind::NonMonotoneTime => "non_monotone_time",
            IssueKind::DeviceMismatch => "device_mismatch",
            IssueKind::OutsideObservationWindow => "outside_observation_window",
            IssueKind::UnterminatedTrip => "unterminated_trip",
            IssueKind::UnmatchedIgnitionOff => "unmatched_ignition_off",
            IssueKind::SuspectSpeed => "suspect_speed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationIssue {
    pub kind: IssueKind,
    /// Index into `DeviceLog::events`.
    pub event_index: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub device_id: String,
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn count(&self, kind: IssueKind) -> usize {
        self.issues.iter().filter(|i| i.kind == kind).count()
    }
}

/// Checks a log against its invariants without modifying it.
pub fn validate_log(log: &DeviceLog) -> ValidationReport {
    let mut issues = Vec::new();
    let mut push = |kind, event_index, message: String| {
        issues.push(ValidationIssue {
            kind,
            event_index,
            message,
        })
    };

    let mut open_ignition: Option<usize> = None;
    for (i, ev) in log.events.iter().enumerate() {
        if ev.device_id != log.device_id {
            push(IssueKind::DeviceMismatch, i, format!("event belongs to device {}", ev.device_id));
        }
        if i > 0 && ev.timestamp < log.events[i - 1].timestamp {
            push(IssueKind::NonMonotoneTime, i, format!("timestamp {} goes back in time", ev.timestamp));
        }
        if ev.timestamp < log.observation_start || ev.timestamp > log.observation_end {
            push(
                IssueKind::OutsideObservationWindow,
                i,
                format!("timestamp {} outside observation window", ev.timestamp),
            );
        }
        match ev.payload {
            Payload::IgnitionOn => {
                if let Some(start) = open_ignition.replace(i) {
                    push(IssueKind::UnterminatedTrip, start, "unterminated trip".into());
                }
            }
            Payload::IgnitionOff => {
                if open_ignition.take().is_none() {
                    push(IssueKind::UnmatchedIgnitionOff, i, "ignition_off without ignition_on".into());
                }
            }
            Payload::Speed { speed_kph, .. } if speed_kph > SUSPECT_SPEED_KPH => {
                push(IssueKind::SuspectSpeed, i, format!("speed {speed_kph} kph above {SUSPECT_SPEED_KPH}"));
            }
            _ => {}
        }
    }
    if let Some(start) = open_ignition {
        push(IssueKind::UnterminatedTrip, start, "unterminated trip".into());
    }

    ValidationReport {
        device_id: log.device_id.clone(),
        issues,
    }
}
