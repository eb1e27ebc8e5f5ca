//! Driving-style indicator catalog per device and window.
//!
//! Mileage indicators describe how much and when the vehicle is used, speed
//! indicators describe where it is driven, and acceleration indicators
//! (events per 100 km in three strength bands per direction) describe how it
//! is driven.

use std::collections::BTreeSet;
use std::fmt;

use chrono::{DateTime, Datelike, Duration, FixedOffset, NaiveDate, NaiveTime, TimeZone};
use serde::{Deserialize, Serialize};

use crate::calendar::HolidayCalendar;
use crate::ingest::Axis;
use crate::trips::{HourlyRecord, Trip};

/// Acceleration strength band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AccelBand {
    A1,
    A2,
    A3,
    D1,
    D2,
    D3,
    S1,
    S2,
    S3,
}

impl AccelBand {
    pub const ALL: [AccelBand; 9] = [
        AccelBand::A1,
        AccelBand::A2,
        AccelBand::A3,
        AccelBand::D1,
        AccelBand::D2,
        AccelBand::D3,
        AccelBand::S1,
        AccelBand::S2,
        AccelBand::S3,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        ["a1", "a2", "a3", "d1", "d2", "d3", "s1", "s2", "s3"][self.index()]
    }

    /// Half-open `[lo, hi)` interval in G; `hi` is infinite for level 3.
    pub fn interval_g(self) -> (f64, f64) {
        match self {
            AccelBand::A1 => (0.3, 0.4),
            AccelBand::A2 => (0.4, 0.5),
            AccelBand::A3 => (0.5, f64::INFINITY),
            AccelBand::D1 => (0.2, 0.3),
            AccelBand::D2 => (0.3, 0.4),
            // Decelerations of 0.4-0.5 G fall into level 3 so the bands stay contiguous.
            AccelBand::D3 => (0.4, f64::INFINITY),
            AccelBand::S1 => (0.3, 0.4),
            AccelBand::S2 => (0.4, 0.6),
            AccelBand::S3 => (0.6, f64::INFINITY),
        }
    }
}

/// Assigns an acceleration event to its band.
///
/// Positive longitudinal values are accelerations, negative ones
/// decelerations (classified on magnitude), lateral values are classified on
/// magnitude. Values below the lowest band return `None`.
pub fn classify_accel_event(axis: Axis, accel_g: f64) -> Option<AccelBand> {
    let family: [AccelBand; 3] = match axis {
        Axis::Longitudinal if accel_g > 0.0 => [AccelBand::A1, AccelBand::A2, AccelBand::A3],
        Axis::Longitudinal if accel_g < 0.0 => [AccelBand::D1, AccelBand::D2, AccelBand::D3],
        Axis::Longitudinal => return None,
        Axis::Lateral => [AccelBand::S1, AccelBand::S2, AccelBand::S3],
    };
    let g = accel_g.abs();
    family.into_iter().find(|b| {
        let (lo, hi) = b.interval_g();
        g >= lo && g < hi
    })
}

/// Event counts per acceleration band.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BandCounts(pub [u64; 9]);

impl BandCounts {
    pub fn get(&self, band: AccelBand) -> u64 {
        self.0[band.index()]
    }

    pub fn increment(&mut self, band: AccelBand) {
        self.0[band.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
}

impl std::ops::AddAssign for BandCounts {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Weekly,
    Lifetime,
}

impl WindowKind {
    pub fn as_str(self) -> &'static str {
        match self {
            WindowKind::Weekly => "weekly",
            WindowKind::Lifetime => "lifetime",
        }
    }
}

impl std::str::FromStr for WindowKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "weekly" => Ok(WindowKind::Weekly),
            "lifetime" => Ok(WindowKind::Lifetime),
            other => Err(format!("unknown window kind {other:?} (expected weekly or lifetime)")),
        }
    }
}

/// Aggregation window in local time, `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub kind: WindowKind,
    pub start: DateTime<FixedOffset>,
    pub end: DateTime<FixedOffset>,
}

fn local_midnight(date: NaiveDate, tz: &FixedOffset) -> DateTime<FixedOffset> {
    tz.from_local_datetime(&date.and_time(NaiveTime::MIN))
        .single()
        .expect("fixed offsets are unambiguous")
}

impl Window {
    /// ISO week (Monday 00:00 to Monday 00:00) containing `date`.
    pub fn iso_week(date: NaiveDate, tz: &FixedOffset) -> Self {
        let monday = date - Duration::days(date.weekday().num_days_from_monday() as i64);
        let start = local_midnight(monday, tz);
        Window {
            kind: WindowKind::Weekly,
            start,
            end: start + Duration::days(7),
        }
    }

    /// Whole local days from `first` to `last` inclusive.
    pub fn lifetime(first: NaiveDate, last: NaiveDate, tz: &FixedOffset) -> Self {
        Window {
            kind: WindowKind::Lifetime,
            start: local_midnight(first, tz),
            end: local_midnight(last, tz) + Duration::days(1),
        }
    }

    pub fn contains(&self, t: DateTime<FixedOffset>) -> bool {
        t >= self.start && t < self.end
    }

    /// Local calendar days overlapping the window.
    pub fn days(&self) -> Vec<NaiveDate> {
        let first = self.start.date_naive();
        let last = (self.end - Duration::seconds(1)).date_naive();
        first.iter_days().take_while(|d| *d <= last).collect()
    }
}

/// ISO-week windows covering every hourly record.
pub fn weekly_windows(hourly: &[HourlyRecord], tz: &FixedOffset) -> Vec<Window> {
    let weeks: BTreeSet<NaiveDate> = hourly
        .iter()
        .map(|h| Window::iso_week(h.hour_start.date_naive(), tz).start.date_naive())
        .collect();
    weeks.into_iter().map(|monday| Window::iso_week(monday, tz)).collect()
}

/// Lifetime window spanning all hourly records, or `None` without records.
pub fn lifetime_window(hourly: &[HourlyRecord], tz: &FixedOffset) -> Option<Window> {
    let first = hourly.iter().map(|h| h.hour_start.date_naive()).min()?;
    let last = hourly.iter().map(|h| h.hour_start.date_naive()).max()?;
    Some(Window::lifetime(first, last, tz))
}

macro_rules! feature_vector {
    ($($field:ident),+ $(,)?) => {
        /// Indicator values for one device over one window.
        #[derive(Debug, Clone, Copy, Default, PartialEq)]
        pub struct FeatureValues {
            $(pub $field: f64,)+
        }

        impl FeatureValues {
            /// Indicator names in column order.
            pub const NAMES: &'static [&'static str] = &[$(stringify!($field)),+];

            pub fn get(&self, name: &str) -> Option<f64> {
                match name {
                    $(stringify!($field) => Some(self.$field),)+
                    _ => None,
                }
            }

            pub fn set(&mut self, name: &str, value: f64) -> bool {
                match name {
                    $(stringify!($field) => { self.$field = value; true })+
                    _ => false,
                }
            }

            pub fn to_vec(&self) -> Vec<f64> {
                vec![$(self.$field),+]
            }
        }
    };
}

feature_vector!(
    mileage,
    trips_day,
    below_10_pr,
    below_30_pr,
    over_200,
    over_400,
    d_total_m,
    avg_trip_mil,
    avg_trip_dur,
    d_business_m,
    d_day_m,
    d_evening_jam_m,
    d_morning_jam_m,
    d_holi_m,
    d_night_m,
    day_m_pr,
    ej_m_pr,
    avg_sp,
    max_sp,
    max_ej_sp,
    max_mj_sp,
    max_n_sp,
    m_pr_below_20,
    m_pr_below_60,
    m_pr_over_100,
    m_pr_over_130,
    a1,
    a2,
    a3,
    d1,
    d2,
    d3,
    s1,
    s2,
    s3,
    sp1,
    sp2,
    sp3,
);

/// Acceleration indicator names, the group removed by ablation.
pub const ACCEL_FEATURES: [&str; 9] = ["a1", "a2", "a3", "d1", "d2", "d3", "s1", "s2", "s3"];

/// Speeding placeholder names; never model candidates by default.
pub const SPEEDING_FEATURES: [&str; 3] = ["sp1", "sp2", "sp3"];

/// Data-quality conditions under which some indicators were set to zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QualityFlags {
    pub no_trips: bool,
    pub no_mileage: bool,
    pub no_coverage: bool,
}

impl QualityFlags {
    pub fn is_clean(&self) -> bool {
        !(self.no_trips || self.no_mileage || self.no_coverage)
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        let mut flags = QualityFlags::default();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "no_trips" => flags.no_trips = true,
                "no_mileage" => flags.no_mileage = true,
                "no_coverage" => flags.no_coverage = true,
                other => return Err(format!("unknown quality flag {other:?}")),
            }
        }
        Ok(flags)
    }
}

impl fmt::Display for QualityFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = [
            (self.no_trips, "no_trips"),
            (self.no_mileage, "no_mileage"),
            (self.no_coverage, "no_coverage"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, name)| *name)
        .collect();
        f.write_str(&parts.join(";"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub device_id: String,
    pub window: Window,
    pub values: FeatureValues,
    pub quality: QualityFlags,
}

/// Hour-of-day slices. Hours 6 and 19-23 outside day/night belong to no
/// named slice except where listed; all hours count toward totals.
pub mod slices {
    /// 07:00-19:00.
    pub fn is_daytime(hour: u32) -> bool {
        (7..19).contains(&hour)
    }
    /// 08:00-10:00.
    pub fn is_morning_rush(hour: u32) -> bool {
        (8..10).contains(&hour)
    }
    /// 18:00-20:00.
    pub fn is_evening_rush(hour: u32) -> bool {
        (18..20).contains(&hour)
    }
    /// 00:00-06:00.
    pub fn is_night(hour: u32) -> bool {
        hour < 6
    }
}

/// Thresholds (kph) for the speeding placeholders: the share of moving
/// hours whose maximum speed reaches each threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedingThresholds(pub [f64; 3]);

impl Default for SpeedingThresholds {
    fn default() -> Self {
        SpeedingThresholds([110.0, 130.0, 150.0])
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Computes the indicator catalog for one device over one window.
///
/// Records and trips outside the window are ignored; trips belong to the
/// window containing their start. Zero trips or zero mileage zero the
/// affected ratios and raise a quality flag instead of dividing by zero.
pub fn compute_features(
    device_id: &str,
    hourly: &[HourlyRecord],
    trips: &[Trip],
    window: &Window,
    calendar: &HolidayCalendar,
    speeding: &SpeedingThresholds,
) -> FeatureVector {
    use slices::*;

    let tz = *window.start.offset();
    let hours: Vec<&HourlyRecord> = hourly
        .iter()
        .filter(|h| h.device_id == device_id && window.contains(h.hour_start))
        .collect();
    let trips: Vec<&Trip> = trips
        .iter()
        .filter(|t| t.device_id == device_id && window.contains(t.start.with_timezone(&tz)))
        .collect();

    let days = window.days();
    let calendar_days = days.len() as f64;
    let business_days = days.iter().filter(|d| calendar.is_business_day(**d)).count() as f64;
    let holiday_days = calendar_days - business_days;
    let coverage: BTreeSet<NaiveDate> = hours.iter().map(|h| h.hour_start.date_naive()).collect();

    let sum_where = |pred: &dyn Fn(&HourlyRecord) -> bool| -> f64 {
        hours.iter().filter(|h| pred(h)).map(|h| h.mileage_km).sum()
    };
    let max_where = |pred: &dyn Fn(u32) -> bool| -> f64 {
        hours
            .iter()
            .filter(|h| pred(h.hour_of_day()))
            .map(|h| h.max_speed_kph)
            .fold(0.0, f64::max)
    };

    let mileage: f64 = hours.iter().map(|h| h.mileage_km).sum();
    let business = sum_where(&|h| calendar.is_business_day(h.hour_start.date_naive()));
    let holiday = sum_where(&|h| calendar.is_holiday(h.hour_start.date_naive()));
    let day = sum_where(&|h| is_daytime(h.hour_of_day()));
    let morning = sum_where(&|h| is_morning_rush(h.hour_of_day()));
    let evening = sum_where(&|h| is_evening_rush(h.hour_of_day()));
    let night = sum_where(&|h| is_night(h.hour_of_day()));

    let mut bands = [0.0; 5];
    let mut counts = BandCounts::default();
    let mut speed_mileage = 0.0;
    for h in &hours {
        for (acc, km) in bands.iter_mut().zip(h.band_mileage_km) {
            *acc += km;
        }
        counts += h.counts;
        speed_mileage += h.mileage_km * h.mean_speed_kph;
    }

    let n_trips = trips.len() as f64;
    let trip_share = |pred: &dyn Fn(f64) -> bool| -> f64 {
        100.0 * ratio(trips.iter().filter(|t| pred(t.mileage_km)).count() as f64, n_trips)
    };

    let moving: Vec<&&HourlyRecord> = hours.iter().filter(|h| h.mileage_km > 0.0).collect();
    let speeding_share = |threshold: f64| -> f64 {
        ratio(
            moving.iter().filter(|h| h.max_speed_kph >= threshold).count() as f64,
            moving.len() as f64,
        )
    };
    let per_100km = |band: AccelBand| 100.0 * ratio(counts.get(band) as f64, mileage);
    let share_of_mileage = |km: f64| 100.0 * ratio(km, mileage);

    let values = FeatureValues {
        mileage,
        trips_day: ratio(n_trips, coverage.len() as f64),
        below_10_pr: trip_share(&|km| km < 10.0),
        below_30_pr: trip_share(&|km| km < 30.0),
        over_200: trip_share(&|km| km > 200.0),
        over_400: trip_share(&|km| km > 400.0),
        d_total_m: ratio(mileage, calendar_days),
        avg_trip_mil: ratio(trips.iter().map(|t| t.mileage_km).sum(), n_trips),
        avg_trip_dur: ratio(trips.iter().map(|t| t.duration_s as f64).sum(), n_trips),
        d_business_m: ratio(business, business_days),
        d_day_m: ratio(day, calendar_days),
        d_evening_jam_m: ratio(evening, calendar_days),
        d_morning_jam_m: ratio(morning, calendar_days),
        d_holi_m: ratio(holiday, holiday_days),
        d_night_m: ratio(night, calendar_days),
        day_m_pr: share_of_mileage(day),
        ej_m_pr: share_of_mileage(evening),
        avg_sp: ratio(speed_mileage, mileage),
        max_sp: max_where(&|_| true),
        max_ej_sp: max_where(&is_evening_rush),
        max_mj_sp: max_where(&is_morning_rush),
        max_n_sp: max_where(&is_night),
        m_pr_below_20: share_of_mileage(bands[0]),
        m_pr_below_60: share_of_mileage(bands[0] + bands[1]),
        m_pr_over_100: share_of_mileage(bands[3] + bands[4]),
        m_pr_over_130: share_of_mileage(bands[4]),
        a1: per_100km(AccelBand::A1),
        a2: per_100km(AccelBand::A2),
        a3: per_100km(AccelBand::A3),
        d1: per_100km(AccelBand::D1),
        d2: per_100km(AccelBand::D2),
        d3: per_100km(AccelBand::D3),
        s1: per_100km(AccelBand::S1),
        s2: per_100km(AccelBand::S2),
        s3: per_100km(AccelBand::S3),
        sp1: speeding_share(speeding.0[0]),
        sp2: speeding_share(speeding.0[1]),
        sp3: speeding_share(speeding.0[2]),
    };

    FeatureVector {
        device_id: device_id.to_string(),
        window: *window,
        values,
        quality: QualityFlags {
            no_trips: trips.is_empty(),
            no_mileage: mileage <= 0.0,
            no_coverage: coverage.is_empty(),
        },
    }
}

/// Checks the ordering and range invariants every vector must satisfy.
pub fn check_invariants(v: &FeatureValues) -> Result<(), String> {
    let mut problems = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            problems.push(what.to_string());
        }
    };
    check(v.below_10_pr <= v.below_30_pr, "below_10_pr <= below_30_pr");
    check(v.over_400 <= v.over_200, "over_400 <= over_200");
    check(v.m_pr_over_130 <= v.m_pr_over_100 + 1e-9, "m_pr_over_130 <= m_pr_over_100");
    check(v.m_pr_below_20 <= v.m_pr_below_60 + 1e-9, "m_pr_below_20 <= m_pr_below_60");
    check(v.max_ej_sp <= v.max_sp, "max_ej_sp <= max_sp");
    check(v.max_mj_sp <= v.max_sp, "max_mj_sp <= max_sp");
    check(v.max_n_sp <= v.max_sp, "max_n_sp <= max_sp");
    check(v.avg_sp <= v.max_sp + 1e-9, "avg_sp <= max_sp");
    check(v.d_night_m <= v.d_total_m + 1e-9, "d_night_m <= d_total_m");
    check(v.d_day_m <= v.d_total_m + 1e-9, "d_day_m <= d_total_m");
    for (name, share) in [
        ("below_10_pr", v.below_10_pr),
        ("below_30_pr", v.below_30_pr),
        ("over_200", v.over_200),
        ("over_400", v.over_400),
        ("day_m_pr", v.day_m_pr),
        ("ej_m_pr", v.ej_m_pr),
        ("m_pr_below_20", v.m_pr_below_20),
        ("m_pr_below_60", v.m_pr_below_60),
        ("m_pr_over_100", v.m_pr_over_100),
        ("m_pr_over_130", v.m_pr_over_130),
    ] {
        check((-1e-9..=100.0 + 1e-9).contains(&share), &format!("{name} in [0, 100]"));
    }
    for name in ACCEL_FEATURES {
        check(v.get(name).is_some_and(|x| x >= 0.0), &format!("{name} >= 0"));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems.join(", "))
    }
}

/// One feature CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub device_id: String,
    pub window_kind: WindowKind,
    /// Local window start, RFC 3339 with offset.
    pub window_start: String,
    pub values: FeatureValues,
    pub quality: QualityFlags,
}

impl From<&FeatureVector> for FeatureRecord {
    fn from(v: &FeatureVector) -> Self {
        FeatureRecord {
            device_id: v.device_id.clone(),
            window_kind: v.window.kind,
            window_start: v.window.start.to_rfc3339(),
            values: v.values,
            quality: v.quality,
        }
    }
}

/// Feature CSV header: identifiers, indicators in catalog order, flags.
pub fn feature_csv_header() -> Vec<&'static str> {
    let mut h = vec!["device", "window_kind", "window_start"];
    h.extend_from_slice(FeatureValues::NAMES);
    h.push("quality_flags");
    h
}

pub fn write_feature_records(
    rows: &[FeatureRecord],
    provenance: Option<&crate::io::Provenance>,
) -> crate::Result<Vec<u8>> {
    crate::io::csv_document(provenance, |w| {
        w.write_record(feature_csv_header())?;
        for r in rows {
            let mut rec = vec![r.device_id.clone(), r.window_kind.as_str().to_string(), r.window_start.clone()];
            rec.extend(r.values.to_vec().into_iter().map(crate::io::fmt_f64));
            rec.push(r.quality.to_string());
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

/// Reads a feature CSV. Columns are located by name, so extra columns are
/// ignored; every catalog indicator must be present.
pub fn read_feature_records<R: std::io::Read>(reader: R) -> Result<Vec<FeatureRecord>, String> {
    let mut rdr = crate::io::csv_reader(reader);
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| format!("missing column `{name}`"))
    };
    let (i_dev, i_kind, i_start) = (col("device")?, col("window_kind")?, col("window_start")?);
    let i_flags = headers.iter().position(|h| h == "quality_flags");
    let value_cols: Vec<usize> = FeatureValues::NAMES.iter().map(|n| col(n)).collect::<Result<_, _>>()?;

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut values = FeatureValues::default();
        for (name, &i) in FeatureValues::NAMES.iter().zip(&value_cols) {
            let cell = rec.get(i).unwrap_or("");
            let v = cell
                .parse::<f64>()
                .map_err(|_| format!("line {line}: `{name}` is not a number: {cell:?}"))?;
            values.set(name, v);
        }
        out.push(FeatureRecord {
            device_id: rec.get(i_dev).unwrap_or("").to_string(),
            window_kind: rec
                .get(i_kind)
                .unwrap_or("")
                .parse()
                .map_err(|e| format!("line {line}: {e}"))?,
            window_start: rec.get(i_start).unwrap_or("").to_string(),
            values,
            quality: QualityFlags::parse(i_flags.and_then(|i| rec.get(i)).unwrap_or(""))
                .map_err(|e| format!("line {line}: {e}"))?,
        });
    }
    Ok(out)
}
