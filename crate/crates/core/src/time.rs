//! Hour-aligned UTC timestamps.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

/// A UTC instant on a whole hour, stored as hours since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HourStamp(i64);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TimeError {
    #[error("unparseable timestamp `{0}`")]
    Unparseable(String),
    #[error("timestamp `{0}` is not aligned to a whole hour")]
    NotHourAligned(String),
}

impl HourStamp {
    pub const fn from_hours(hours: i64) -> Self {
        HourStamp(hours)
    }

    pub const fn hours(self) -> i64 {
        self.0
    }

    pub const fn add_hours(self, hours: i64) -> Self {
        HourStamp(self.0 + hours)
    }

    /// Signed number of hours from `earlier` to `self`.
    pub const fn hours_since(self, earlier: HourStamp) -> i64 {
        self.0 - earlier.0
    }

    /// Hour of day in 0..24.
    pub fn hour_of_day(self) -> u32 {
        self.0.rem_euclid(24) as u32
    }

    /// Day number since the epoch.
    pub fn day(self) -> i64 {
        self.0.div_euclid(24)
    }

    fn to_datetime(self) -> DateTime<Utc> {
        DateTime::from_timestamp(self.0 * 3600, 0).expect("hour stamp within chrono range")
    }
}

impl fmt::Display for HourStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_datetime().format("%Y-%m-%dT%H:%MZ"))
    }
}

impl FromStr for HourStamp {
    type Err = TimeError;

    /// Accepts `YYYY-MM-DDTHH:MMZ`, `YYYY-MM-DDTHH:MM:SSZ` and full RFC 3339.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let dt: DateTime<Utc> = if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
            dt.with_timezone(&Utc)
        } else {
            let body = s
                .strip_suffix('Z')
                .ok_or_else(|| TimeError::Unparseable(s.to_string()))?;
            let naive = NaiveDateTime::parse_from_str(body, "%Y-%m-%dT%H:%M")
                .or_else(|_| NaiveDateTime::parse_from_str(body, "%Y-%m-%dT%H:%M:%S"))
                .map_err(|_| TimeError::Unparseable(s.to_string()))?;
            naive.and_utc()
        };
        if dt.minute() != 0 || dt.second() != 0 || dt.nanosecond() != 0 {
            return Err(TimeError::NotHourAligned(s.to_string()));
        }
        Ok(HourStamp(dt.timestamp().div_euclid(3600)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_short_form_and_round_trips() {
        let t: HourStamp = "2020-01-01T12:00Z".parse().unwrap();
        assert_eq!(t.to_string(), "2020-01-01T12:00Z");
        assert_eq!(t.hour_of_day(), 12);
        let u: HourStamp = "2020-01-01T12:00:00+00:00".parse().unwrap();
        assert_eq!(t, u);
        let v: HourStamp = "2020-01-01T14:00:00+02:00".parse().unwrap();
        assert_eq!(t, v);
    }

    #[test]
    fn rejects_sub_hourly() {
        assert!(matches!(
            "2020-01-01T12:30Z".parse::<HourStamp>(),
            Err(TimeError::NotHourAligned(_))
        ));
        assert!(matches!(
            "yesterday".parse::<HourStamp>(),
            Err(TimeError::Unparseable(_))
        ));
    }

    #[test]
    fn pre_epoch_hours_are_floored() {
        let t: HourStamp = "1969-12-31T23:00Z".parse().unwrap();
        assert_eq!(t.hours(), -1);
        assert_eq!(t.hour_of_day(), 23);
        assert_eq!(t.to_string(), "1969-12-31T23:00Z");
    }
}
