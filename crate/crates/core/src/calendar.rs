//! Business-day / holiday classification.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::{Datelike, FixedOffset, NaiveDate, Weekday};

use crate::error::{Error, Result};

const RUSSIAN_HOLIDAYS: &str = include_str!("../data/holidays_ru.txt");

/// Weekends plus an explicit set of public holidays.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HolidayCalendar {
    dates: BTreeSet<NaiveDate>,
}

impl HolidayCalendar {
    /// Weekends only.
    pub fn weekends_only() -> Self {
        HolidayCalendar::default()
    }

    /// Fixed-date Russian public holidays, the default calendar.
    pub fn russian() -> Self {
        Self::parse(RUSSIAN_HOLIDAYS).expect("bundled calendar parses")
    }

    pub fn from_dates(dates: impl IntoIterator<Item = NaiveDate>) -> Self {
        HolidayCalendar {
            dates: dates.into_iter().collect(),
        }
    }

    /// Parses one ISO date per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut dates = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let date = NaiveDate::parse_from_str(line, "%Y-%m-%d")
                .map_err(|e| format!("line {}: {line:?}: {e}", i + 1))?;
            dates.insert(date);
        }
        Ok(HolidayCalendar { dates })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|m| Error::format(path, m))
    }

    pub fn is_holiday(&self, date: NaiveDate) -> bool {
        matches!(date.weekday(), Weekday::Sat | Weekday::Sun) || self.dates.contains(&date)
    }

    pub fn is_business_day(&self, date: NaiveDate) -> bool {
        !self.is_holiday(date)
    }
}

/// Parses a fixed UTC offset such as `+03:00`, `-05:30` or `Z`.
pub fn parse_utc_offset(s: &str) -> std::result::Result<FixedOffset, String> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("z") || s.eq_ignore_ascii_case("utc") {
        return Ok(FixedOffset::east_opt(0).expect("zero offset"));
    }
    s.parse::<FixedOffset>()
        .map_err(|_| format!("invalid UTC offset {s:?} (expected e.g. +03:00)"))
}
