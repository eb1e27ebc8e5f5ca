//! Trip segmentation and hourly rollups.
//!
//! Trips are bounded by matched ignition on/off pairs. Movement events that
//! fall outside every matched pair are grouped into trips by silence gaps.
//! Hourly records split each leg's mileage across hour boundaries in
//! proportion to time.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, FixedOffset, NaiveDateTime, TimeZone, Timelike, Utc};

use crate::features::{classify_accel_event, BandCounts};
use crate::ingest::{DeviceLog, EventPackage, GeoPoint, Payload};

/// Mean Earth radius (IUGG) in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Great-circle distance between two fixes.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripConfig {
    /// Silence between movement events that splits trips when ignition
    /// events are missing.
    pub gap_threshold_s: i64,
    /// Trips shorter than this are jitter.
    pub min_duration_s: i64,
    pub min_mileage_km: f64,
}

impl Default for TripConfig {
    fn default() -> Self {
        TripConfig {
            gap_threshold_s: 600,
            min_duration_s: 60,
            min_mileage_km: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trip {
    pub device_id: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub mileage_km: f64,
    pub duration_s: i64,
    pub mean_speed_kph: f64,
}

impl Trip {
    fn new(device_id: &str, start: DateTime<Utc>, end: DateTime<Utc>, mileage_km: f64) -> Self {
        let duration_s = (end - start).num_seconds();
        let mean_speed_kph = if duration_s > 0 {
            mileage_km / (duration_s as f64 / 3600.0)
        } else {
            0.0
        };
        Trip {
            device_id: device_id.to_string(),
            start,
            end,
            mileage_km,
            duration_s,
            mean_speed_kph,
        }
    }
}

/// Matched ignition intervals: an `on` opens, the next `off` closes. An
/// `on` that is followed by another `on` is dropped as unterminated.
fn ignition_intervals(events: &[EventPackage]) -> Vec<(DateTime<Utc>, DateTime<Utc>)> {
    let mut out = Vec::new();
    let mut open = None;
    for ev in events {
        match ev.payload {
            Payload::IgnitionOn => open = Some(ev.timestamp),
            Payload::IgnitionOff => {
                if let Some(start) = open.take() {
                    out.push((start, ev.timestamp));
                }
            }
            _ => {}
        }
    }
    out
}

/// Index range of events with timestamps in `[start, end]`.
fn events_between(events: &[EventPackage], start: DateTime<Utc>, end: DateTime<Utc>) -> &[EventPackage] {
    let lo = events.partition_point(|e| e.timestamp < start);
    let hi = events.partition_point(|e| e.timestamp <= end);
    &events[lo..hi.max(lo)]
}

fn path_length_km(events: &[EventPackage]) -> f64 {
    let mut total = 0.0;
    let mut prev: Option<GeoPoint> = None;
    for p in events.iter().filter_map(|e| e.position()) {
        if let Some(q) = prev {
            total += haversine_km(q, p);
        }
        prev = Some(p);
    }
    total
}

/// Splits a device log into trips.
pub fn segment_trips(log: &DeviceLog, config: &TripConfig) -> Vec<Trip> {
    let events = &log.events;
    let intervals = ignition_intervals(events);
    let inside = |t: DateTime<Utc>| -> Option<usize> {
        let i = intervals.partition_point(|&(s, _)| s <= t);
        (i > 0 && t <= intervals[i - 1].1).then(|| i - 1)
    };

    let mut bounds: Vec<(DateTime<Utc>, DateTime<Utc>)> = intervals.clone();

    // Gap-based grouping of movement events outside ignition intervals.
    let mut group: Option<(DateTime<Utc>, DateTime<Utc>, Option<usize>)> = None;
    for ev in events.iter().filter(|e| e.is_movement()) {
        if inside(ev.timestamp).is_some() {
            continue;
        }
        let next_interval = intervals.partition_point(|&(s, _)| s <= ev.timestamp);
        group = match group {
            Some((start, last, iv))
                if (ev.timestamp - last).num_seconds() <= config.gap_threshold_s && iv == Some(next_interval) =>
            {
                Some((start, ev.timestamp, iv))
            }
            Some((start, last, _)) => {
                bounds.push((start, last));
                Some((ev.timestamp, ev.timestamp, Some(next_interval)))
            }
            None => Some((ev.timestamp, ev.timestamp, Some(next_interval))),
        };
    }
    if let Some((start, last, _)) = group {
        bounds.push((start, last));
    }
    bounds.sort();

    bounds
        .into_iter()
        .filter_map(|(start, end)| {
            let mileage = path_length_km(events_between(events, start, end));
            let trip = Trip::new(&log.device_id, start, end, mileage);
            (trip.duration_s >= config.min_duration_s && trip.mileage_km >= config.min_mileage_km).then_some(trip)
        })
        .collect()
}

/// Mileage by speed band: `<20`, `20-60`, `60-100`, `100-130`, `>=130` kph.
pub const SPEED_BAND_EDGES_KPH: [f64; 4] = [20.0, 60.0, 100.0, 130.0];

pub fn speed_band(speed_kph: f64) -> usize {
    SPEED_BAND_EDGES_KPH.iter().take_while(|&&edge| speed_kph >= edge).count()
}

/// Per-device, per-hour rollup.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyRecord {
    pub device_id: String,
    /// Local hour start in the run's timezone.
    pub hour_start: DateTime<FixedOffset>,
    pub mileage_km: f64,
    /// Mileage-weighted mean speed; 0 without movement.
    pub mean_speed_kph: f64,
    /// Highest speed observed in the hour; 0 without movement.
    pub max_speed_kph: f64,
    pub counts: BandCounts,
    pub band_mileage_km: [f64; 5],
}

impl HourlyRecord {
    fn empty(device_id: &str, hour_start: DateTime<FixedOffset>) -> Self {
        HourlyRecord {
            device_id: device_id.to_string(),
            hour_start,
            mileage_km: 0.0,
            mean_speed_kph: 0.0,
            max_speed_kph: 0.0,
            counts: BandCounts::default(),
            band_mileage_km: [0.0; 5],
        }
    }

    /// Local hour of day, 0..24.
    pub fn hour_of_day(&self) -> u32 {
        self.hour_start.hour()
    }
}

/// Local hour containing `t`.
pub fn hour_bucket(t: DateTime<Utc>, tz: &FixedOffset) -> DateTime<FixedOffset> {
    let local = t.with_timezone(tz).naive_local();
    let floored: NaiveDateTime = local
        .date()
        .and_hms_opt(local.hour(), 0, 0)
        .expect("hour within range");
    tz.from_local_datetime(&floored)
        .single()
        .expect("fixed offsets are unambiguous")
}

#[derive(Default)]
struct HourAccumulator {
    band_mileage: [f64; 5],
    speed_mileage: f64,
    max_speed: f64,
    counts: BandCounts,
}

/// Rolls a log and its trips into hourly records, ordered by hour.
///
/// Hours with no events and no mileage are omitted.
pub fn aggregate_hourly(log: &DeviceLog, trips: &[Trip], tz: &FixedOffset) -> Vec<HourlyRecord> {
    let mut hours: BTreeMap<DateTime<FixedOffset>, HourAccumulator> = BTreeMap::new();

    for ev in &log.events {
        let acc = hours.entry(hour_bucket(ev.timestamp, tz)).or_default();
        if let Payload::Acceleration { axis, accel_g, .. } = ev.payload {
            if let Some(band) = classify_accel_event(axis, accel_g) {
                acc.counts.increment(band);
            }
        }
    }

    for trip in trips {
        let events = events_between(&log.events, trip.start, trip.end);
        for ev in events {
            if let Some(v) = ev.speed_kph() {
                let acc = hours.entry(hour_bucket(ev.timestamp, tz)).or_default();
                acc.max_speed = acc.max_speed.max(v);
            }
        }

        let fixes: Vec<(DateTime<Utc>, GeoPoint)> =
            events.iter().filter_map(|e| e.position().map(|p| (e.timestamp, p))).collect();
        for pair in fixes.windows(2) {
            let ((t0, p0), (t1, p1)) = (pair[0], pair[1]);
            let distance = haversine_km(p0, p1);
            let leg = &events[events.partition_point(|e| e.timestamp < t0)..events.partition_point(|e| e.timestamp < t1)];
            let packages: Vec<f64> = leg.iter().filter_map(|e| e.speed_kph()).collect();
            let elapsed_s = (t1 - t0).num_seconds();
            let speed = if !packages.is_empty() {
                packages.iter().sum::<f64>() / packages.len() as f64
            } else if elapsed_s > 0 {
                distance / (elapsed_s as f64 / 3600.0)
            } else {
                0.0
            };
            split_leg(&mut hours, tz, t0, t1, distance, speed);
        }
    }

    hours
        .into_iter()
        .map(|(hour_start, acc)| {
            let mut rec = HourlyRecord::empty(&log.device_id, hour_start);
            rec.band_mileage_km = acc.band_mileage;
            rec.mileage_km = acc.band_mileage.iter().sum();
            rec.mean_speed_kph = if rec.mileage_km > 0.0 {
                acc.speed_mileage / rec.mileage_km
            } else {
                0.0
            };
            rec.max_speed_kph = acc.max_speed;
            rec.counts = acc.counts;
            rec
        })
        .collect()
}

fn split_leg(
    hours: &mut BTreeMap<DateTime<FixedOffset>, HourAccumulator>,
    tz: &FixedOffset,
    t0: DateTime<Utc>,
    t1: DateTime<Utc>,
    distance: f64,
    speed: f64,
) {
    let band = speed_band(speed);
    let mut add = |hour: DateTime<FixedOffset>, km: f64| {
        let acc = hours.entry(hour).or_default();
        acc.band_mileage[band] += km;
        acc.speed_mileage += km * speed;
        // Leg speed counts too, so an hour's mean never exceeds its maximum.
        if km > 0.0 {
            acc.max_speed = acc.max_speed.max(speed);
        }
    };

    let total_s = (t1 - t0).num_seconds();
    if total_s <= 0 {
        add(hour_bucket(t0, tz), distance);
        return;
    }
    let mut cursor = t0;
    while cursor < t1 {
        let hour = hour_bucket(cursor, tz);
        let next = (hour + Duration::hours(1)).with_timezone(&Utc).min(t1);
        let share = (next - cursor).num_seconds() as f64 / total_s as f64;
        add(hour, distance * share);
        cursor = next;
    }
}

pub const HOURLY_CSV_HEADER: [&str; 19] = [
    "device", "hour_start", "mileage_km", "mean_speed_kph", "max_speed_kph",
    "a1", "a2", "a3", "d1", "d2", "d3", "s1", "s2", "s3",
    "m_lt20", "m_20_60", "m_60_100", "m_100_130", "m_gt130",
];

pub const TRIP_CSV_HEADER: [&str; 6] = ["device", "start", "end", "mileage_km", "duration_s", "mean_speed_kph"];

pub fn write_hourly_records(rows: &[HourlyRecord], provenance: Option<&crate::io::Provenance>) -> crate::Result<Vec<u8>> {
    use crate::io::fmt_f64;
    crate::io::csv_document(provenance, |w| {
        w.write_record(HOURLY_CSV_HEADER)?;
        for r in rows {
            let mut rec = vec![
                r.device_id.clone(),
                r.hour_start.to_rfc3339(),
                fmt_f64(r.mileage_km),
                fmt_f64(r.mean_speed_kph),
                fmt_f64(r.max_speed_kph),
            ];
            rec.extend(r.counts.0.iter().map(u64::to_string));
            rec.extend(r.band_mileage_km.iter().copied().map(fmt_f64));
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

pub fn write_trips(rows: &[Trip], provenance: Option<&crate::io::Provenance>) -> crate::Result<Vec<u8>> {
    use crate::io::fmt_f64;
    crate::io::csv_document(provenance, |w| {
        w.write_record(TRIP_CSV_HEADER)?;
        for t in rows {
            w.write_record([
                t.device_id.clone(),
                t.start.to_rfc3339(),
                t.end.to_rfc3339(),
                fmt_f64(t.mileage_km),
                t.duration_s.to_string(),
                fmt_f64(t.mean_speed_kph),
            ])?;
        }
        Ok(())
    })
}

/// Reads rows of a CSV with a fixed header, handing each row's cells to `f`.
fn read_fixed<R: std::io::Read, T>(
    reader: R,
    header: &[&str],
    mut f: impl FnMut(&csv::StringRecord) -> Result<T, String>,
) -> Result<Vec<T>, String> {
    let mut rdr = crate::io::csv_reader(reader);
    let found = rdr.headers().map_err(|e| e.to_string())?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(format!("unexpected header: expected `{}`", header.join(",")));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push(f(&rec).map_err(|e| format!("line {line}: {e}"))?);
    }
    Ok(out)
}

fn cell<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T, String> {
    let s = rec.get(i).unwrap_or("");
    s.parse().map_err(|_| format!("bad `{name}` value {s:?}"))
}

fn cell_time(rec: &csv::StringRecord, i: usize, name: &str) -> Result<DateTime<FixedOffset>, String> {
    let s = rec.get(i).unwrap_or("");
    DateTime::parse_from_rfc3339(s).map_err(|e| format!("bad `{name}` timestamp {s:?}: {e}"))
}

pub fn read_hourly_records<R: std::io::Read>(reader: R) -> Result<Vec<HourlyRecord>, String> {
    read_fixed(reader, &HOURLY_CSV_HEADER, |rec| {
        let mut r = HourlyRecord::empty(rec.get(0).unwrap_or(""), cell_time(rec, 1, "hour_start")?);
        r.mileage_km = cell(rec, 2, "mileage_km")?;
        r.mean_speed_kph = cell(rec, 3, "mean_speed_kph")?;
        r.max_speed_kph = cell(rec, 4, "max_speed_kph")?;
        for k in 0..9 {
            r.counts.0[k] = cell(rec, 5 + k, HOURLY_CSV_HEADER[5 + k])?;
        }
        for k in 0..5 {
            r.band_mileage_km[k] = cell(rec, 14 + k, HOURLY_CSV_HEADER[14 + k])?;
        }
        Ok(r)
    })
}

pub fn read_trips<R: std::io::Read>(reader: R) -> Result<Vec<Trip>, String> {
    read_fixed(reader, &TRIP_CSV_HEADER, |rec| {
        Ok(Trip {
            device_id: rec.get(0).unwrap_or("").to_string(),
            start: cell_time(rec, 1, "start")?.with_timezone(&Utc),
            end: cell_time(rec, 2, "end")?.with_timezone(&Utc),
            mileage_km: cell(rec, 3, "mileage_km")?,
            duration_s: cell(rec, 4, "duration_s")?,
            mean_speed_kph: cell(rec, 5, "mean_speed_kph")?,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::AccelBand;
    use crate::ingest::Axis;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn utc() -> FixedOffset {
        FixedOffset::east_opt(0).unwrap()
    }

    fn t(h: u32, m: u32, s: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2019, 2, 4, h, m, s).unwrap()
    }

    fn pos(lat: f64, lon: f64) -> Payload {
        Payload::Position(GeoPoint { lat, lon })
    }

    fn log(events: Vec<(DateTime<Utc>, Payload)>) -> DeviceLog {
        DeviceLog::from_events("dev", events.into_iter().map(|(ts, p)| EventPackage::new("dev", ts, p)).collect())
            .unwrap()
    }

    /// Kilometres per degree along a meridian or the equator.
    fn km_per_degree() -> f64 {
        EARTH_RADIUS_KM * std::f64::consts::PI / 180.0
    }

    #[test]
    fn haversine_reference_values() {
        let a = GeoPoint { lat: 0.0, lon: 0.0 };
        assert_eq!(haversine_km(a, a), 0.0);
        let b = GeoPoint { lat: 0.0, lon: 1.0 };
        // R * 1 deg * pi / 180 with R = 6371.0088
        assert_abs_diff_eq!(haversine_km(a, b), 111.195, epsilon = 0.001);
        assert_abs_diff_eq!(haversine_km(a, b), km_per_degree(), epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn haversine_symmetric_nonnegative(
            lat1 in -90.0f64..=90.0, lon1 in -180.0f64..=180.0,
            lat2 in -90.0f64..=90.0, lon2 in -180.0f64..=180.0,
        ) {
            let a = GeoPoint { lat: lat1, lon: lon1 };
            let b = GeoPoint { lat: lat2, lon: lon2 };
            prop_assert_eq!(haversine_km(a, b), haversine_km(b, a));
            prop_assert!(haversine_km(a, b) >= 0.0);
            prop_assert!(haversine_km(a, b) <= EARTH_RADIUS_KM * std::f64::consts::PI + 1e-9);
        }
    }

    #[test]
    fn ignition_pair_is_one_trip() {
        let l = log(vec![
            (t(8, 0, 0), Payload::IgnitionOn),
            (t(8, 1, 0), pos(55.0, 37.0)),
            (t(8, 15, 0), pos(55.05, 37.0)),
            (t(8, 29, 0), pos(55.1, 37.0)),
            (t(8, 30, 0), Payload::IgnitionOff),
        ]);
        let trips = segment_trips(&l, &TripConfig::default());
        assert_eq!(trips.len(), 1);
        assert_eq!(trips[0].duration_s, 1800);
        assert_abs_diff_eq!(trips[0].mileage_km, 0.1 * km_per_degree(), epsilon = 1e-9);
    }

    #[test]
    fn silence_gap_splits_trips_without_ignition() {
        let mut events = Vec::new();
        for i in 0..5 {
            events.push((t(8, i * 2, 0), pos(55.0 + 0.01 * i as f64, 37.0)));
        }
        for i in 0..5 {
            events.push((t(10, 10 + i * 2, 0), pos(56.0 + 0.01 * i as f64, 37.0)));
        }
        let trips = segment_trips(&log(events), &TripConfig::default());
        assert_eq!(trips.len(), 2);
        assert_eq!(trips[0].start, t(8, 0, 0));
        assert_eq!(trips[0].end, t(8, 8, 0));
        assert_eq!(trips[1].start, t(10, 10, 0));
    }

    #[test]
    fn straight_path_along_equator() {
        let events: Vec<_> = (0..=10).map(|i| (t(9, i, 0), pos(0.0, 0.01 * i as f64))).collect();
        let trips = segment_trips(&log(events), &TripConfig::default());
        assert_eq!(trips.len(), 1);
        // 0.1 deg of longitude at the equator.
        assert_abs_diff_eq!(trips[0].mileage_km, 11.1195, epsilon = 1e-3);
        assert_abs_diff_eq!(trips[0].mileage_km, 0.1 * km_per_degree(), epsilon = 1e-9);
    }

    #[test]
    fn jitter_trips_are_discarded() {
        let short = log(vec![
            (t(8, 0, 0), Payload::IgnitionOn),
            (t(8, 0, 10), pos(55.0, 37.0)),
            (t(8, 0, 30), pos(55.01, 37.0)),
            (t(8, 0, 40), Payload::IgnitionOff),
        ]);
        assert!(segment_trips(&short, &TripConfig::default()).is_empty());
        let tiny = log(vec![
            (t(8, 0, 0), Payload::IgnitionOn),
            (t(8, 1, 0), pos(55.0, 37.0)),
            (t(8, 5, 0), pos(55.0001, 37.0)),
            (t(8, 10, 0), Payload::IgnitionOff),
        ]);
        assert!(segment_trips(&tiny, &TripConfig::default()).is_empty());
        let no_movement = log(vec![(t(8, 0, 0), Payload::IgnitionOn), (t(9, 0, 0), Payload::IgnitionOff)]);
        assert!(segment_trips(&no_movement, &TripConfig::default()).is_empty());
    }

    #[test]
    fn trip_inside_one_hour() {
        let lat_step = 12.5 / km_per_degree() / 4.0;
        let mut events = vec![(t(9, 5, 0), Payload::IgnitionOn)];
        for i in 0..5 {
            events.push((t(9, 10 + i * 5, 0), pos(50.0 + lat_step * i as f64, 10.0)));
        }
        events.push((t(9, 40, 0), Payload::IgnitionOff));
        let l = log(events);
        let trips = segment_trips(&l, &TripConfig::default());
        let hourly = aggregate_hourly(&l, &trips, &utc());
        assert_eq!(hourly.len(), 1);
        assert_eq!(hourly[0].hour_start, hour_bucket(t(9, 0, 0), &utc()));
        assert_abs_diff_eq!(hourly[0].mileage_km, 12.5, epsilon = 1e-9);
    }

    #[test]
    fn trip_across_hour_boundary_is_split_by_time() {
        // 09:50 to 10:10, 10 km at uniform speed along a meridian.
        let l = log(vec![
            (t(9, 50, 0), Payload::IgnitionOn),
            (t(9, 50, 0), pos(50.0, 10.0)),
            (t(10, 10, 0), pos(50.0 + 10.0 / km_per_degree(), 10.0)),
            (t(10, 10, 0), Payload::IgnitionOff),
        ]);
        let trips = segment_trips(&l, &TripConfig::default());
        let hourly = aggregate_hourly(&l, &trips, &utc());
        assert_eq!(hourly.len(), 2);
        assert_abs_diff_eq!(hourly[0].mileage_km, 5.0, epsilon = 1e-9);
        assert_abs_diff_eq!(hourly[1].mileage_km, 5.0, epsilon = 1e-9);
        // 10 km in 20 min is 30 kph, derived from the fixes.
        assert_abs_diff_eq!(hourly[0].mean_speed_kph, 30.0, epsilon = 1e-9);
        assert_abs_diff_eq!(hourly[0].band_mileage_km[1], 5.0, epsilon = 1e-9);
    }

    #[test]
    fn speed_packages_drive_leg_speed_and_maxima() {
        let l = log(vec![
            (t(9, 0, 0), Payload::IgnitionOn),
            (t(9, 0, 0), pos(50.0, 10.0)),
            (t(9, 0, 0), Payload::Speed { speed_kph: 100.0, position: None }),
            (t(9, 0, 30), Payload::Speed { speed_kph: 140.0, position: None }),
            (t(9, 10, 0), pos(50.0 + 20.0 / km_per_degree(), 10.0)),
            (t(9, 10, 0), Payload::Speed { speed_kph: 10.0, position: None }),
            (t(9, 40, 0), pos(50.0 + 25.0 / km_per_degree(), 10.0)),
            (t(9, 41, 0), Payload::IgnitionOff),
        ]);
        let trips = segment_trips(&l, &TripConfig::default());
        let h = &aggregate_hourly(&l, &trips, &utc())[0];
        assert_abs_diff_eq!(h.mileage_km, 25.0, epsilon = 1e-9);
        assert_abs_diff_eq!(h.band_mileage_km[3], 20.0, epsilon = 1e-9); // 120 kph leg
        assert_abs_diff_eq!(h.band_mileage_km[0], 5.0, epsilon = 1e-9); // 10 kph leg
        assert_abs_diff_eq!(h.mean_speed_kph, (20.0 * 120.0 + 5.0 * 10.0) / 25.0, epsilon = 1e-9);
        assert_eq!(h.max_speed_kph, 140.0);
    }

    #[test]
    fn acceleration_events_land_in_their_hour() {
        let l = log(vec![
            (t(7, 59, 59), Payload::Acceleration { axis: Axis::Longitudinal, accel_g: 0.35, position: None }),
            (t(8, 0, 0), Payload::Acceleration { axis: Axis::Longitudinal, accel_g: -0.25, position: None }),
            (t(8, 0, 1), Payload::Acceleration { axis: Axis::Lateral, accel_g: 0.1, position: None }),
        ]);
        let hourly = aggregate_hourly(&l, &[], &utc());
        assert_eq!(hourly.len(), 2);
        assert_eq!(hourly[0].counts.get(AccelBand::A1), 1);
        assert_eq!(hourly[1].counts.get(AccelBand::D1), 1);
        assert_eq!(hourly[1].counts.total(), 1);
        assert_eq!(hourly[1].mileage_km, 0.0);
    }

    #[test]
    fn local_timezone_shifts_buckets() {
        let tz = FixedOffset::east_opt(3 * 3600).unwrap();
        let l = log(vec![(t(21, 30, 0), Payload::IgnitionOn)]);
        let hourly = aggregate_hourly(&l, &[], &tz);
        assert_eq!(hourly[0].hour_of_day(), 0);
    }

    #[test]
    fn hourly_and_trip_csv_round_trip() {
        let tz = FixedOffset::east_opt(3 * 3600).unwrap();
        let l = log(vec![
            (t(9, 0, 0), Payload::IgnitionOn),
            (t(9, 0, 0), pos(50.0, 10.0)),
            (t(9, 30, 0), Payload::Acceleration { axis: Axis::Lateral, accel_g: -0.45, position: None }),
            (t(10, 10, 0), pos(50.0 + 0.3, 10.1)),
            (t(10, 11, 0), Payload::IgnitionOff),
        ]);
        let trips = segment_trips(&l, &TripConfig::default());
        let hourly = aggregate_hourly(&l, &trips, &tz);
        let bytes = write_hourly_records(&hourly, None).unwrap();
        assert!(std::str::from_utf8(&bytes).unwrap().starts_with("device,hour_start,mileage_km,mean_speed_kph,max_speed_kph,a1"));
        assert_eq!(read_hourly_records(&bytes[..]).unwrap(), hourly);
        let bytes = write_trips(&trips, Some(&crate::io::Provenance::new("aggregate"))).unwrap();
        assert_eq!(read_trips(&bytes[..]).unwrap(), trips);
        assert!(read_trips(&b"device,start\n"[..]).is_err());
    }

    #[test]
    fn speed_band_edges_are_half_open() {
        assert_eq!(speed_band(0.0), 0);
        assert_eq!(speed_band(19.999), 0);
        assert_eq!(speed_band(20.0), 1);
        assert_eq!(speed_band(100.0), 3);
        assert_eq!(speed_band(130.0), 4);
        assert_eq!(speed_band(250.0), 4);
    }

    proptest! {
        #[test]
        fn hourly_mileage_conserves_trip_mileage(
            legs in prop::collection::vec((1i64..4000, 0.0f64..0.05), 1..40),
            start_min in 0i64..1440,
        ) {
            let mut ts = t(0, 0, 0) + Duration::minutes(start_min);
            let mut lat = 40.0;
            let mut events = vec![(ts, Payload::IgnitionOn), (ts, pos(lat, 20.0))];
            for (dt, dlat) in &legs {
                ts += Duration::seconds(*dt);
                lat += dlat;
                events.push((ts, pos(lat, 20.0)));
            }
            events.push((ts, Payload::IgnitionOff));
            let l = log(events);
            let trips = segment_trips(&l, &TripConfig { min_duration_s: 0, min_mileage_km: 0.0, ..TripConfig::default() });
            let hourly = aggregate_hourly(&l, &trips, &utc());
            let trip_total: f64 = trips.iter().map(|t| t.mileage_km).sum();
            let hourly_total: f64 = hourly.iter().map(|h| h.mileage_km).sum();
            prop_assert!((trip_total - hourly_total).abs() <= 1e-6);
            for h in &hourly {
                prop_assert!((h.band_mileage_km.iter().sum::<f64>() - h.mileage_km).abs() <= 1e-9);
            }
            prop_assert_eq!(aggregate_hourly(&l, &trips, &utc()), hourly);
        }
    }
}
