//! Second-resolution UTC instants and human-readable durations.

use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An absolute instant, seconds since the Unix epoch, UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(i64);

impl Timestamp {
    pub const fn from_seconds(secs: i64) -> Self {
        Timestamp(secs)
    }

    pub const fn seconds(self) -> i64 {
        self.0
    }

    /// Parses `YYYY-MM-DDTHH:MM:SSZ`, `YYYY/MM/DD` or `YYYY-MM-DD`.
    /// Date-only forms are midnight UTC.
    pub fn parse(text: &str) -> Result<Self> {
        let s = text.trim();
        let bad = || Error::InvalidTimestamp(text.to_string());
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%SZ") {
            return Ok(Timestamp(dt.and_utc().timestamp()));
        }
        for fmt in ["%Y/%m/%d", "%Y-%m-%d"] {
            if let Ok(d) = NaiveDate::parse_from_str(s, fmt) {
                let dt = d.and_hms_opt(0, 0, 0).ok_or_else(bad)?;
                return Ok(Timestamp(dt.and_utc().timestamp()));
            }
        }
        Err(bad())
    }

    fn datetime(self) -> DateTime<Utc> {
        DateTime::from_timestamp(self.0, 0).expect("timestamp within chrono range")
    }

    /// Day of week, Monday = 0.
    pub fn weekday(self) -> u32 {
        self.datetime().weekday().num_days_from_monday()
    }

    pub fn day(self) -> u32 {
        self.datetime().day()
    }

    pub fn month(self) -> u32 {
        self.datetime().month()
    }

    pub fn is_weekend(self) -> bool {
        self.weekday() >= 5
    }

    pub fn checked_add(self, d: &Duration) -> Option<Timestamp> {
        self.0.checked_add(d.seconds()).map(Timestamp)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.datetime().format("%Y-%m-%dT%H:%M:%SZ"))
    }
}

impl FromStr for Timestamp {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Timestamp::parse(s)
    }
}

impl Add<&Duration> for Timestamp {
    type Output = Timestamp;
    fn add(self, d: &Duration) -> Timestamp {
        Timestamp(self.0 + d.seconds())
    }
}

impl Sub<&Duration> for Timestamp {
    type Output = Timestamp;
    fn sub(self, d: &Duration) -> Timestamp {
        Timestamp(self.0 - d.seconds())
    }
}

impl Sub for Timestamp {
    type Output = i64;
    fn sub(self, other: Timestamp) -> i64 {
        self.0 - other.0
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Timestamp::parse(&s).map_err(serde::de::Error::custom)
    }
}

const UNITS: &[(&str, &str, i64)] = &[
    ("seconds", "second", 1),
    ("minutes", "minute", 60),
    ("hours", "hour", 3_600),
    ("days", "day", 86_400),
    ("weeks", "week", 604_800),
    ("years", "year", 365 * 86_400),
];

/// A span of time that remembers the text it was written as, e.g. `"56 days"`.
#[derive(Debug, Clone)]
pub struct Duration {
    seconds: i64,
    text: String,
}

impl Duration {
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::InvalidDuration(text.to_string());
        let mut parts = text.split(' ');
        let (count, unit) = match (parts.next(), parts.next(), parts.next()) {
            (Some(c), Some(u), None) => (c, u),
            _ => return Err(bad()),
        };
        if count.is_empty() || !count.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let n: i64 = count.parse().map_err(|_| bad())?;
        let per = UNITS
            .iter()
            .find(|(plural, singular, _)| unit == *plural || unit == *singular)
            .map(|u| u.2)
            .ok_or_else(bad)?;
        let seconds = n.checked_mul(per).ok_or_else(bad)?;
        Ok(Duration {
            seconds,
            text: text.to_string(),
        })
    }

    pub fn from_days(days: i64) -> Self {
        Duration {
            seconds: days * 86_400,
            text: format!("{days} days"),
        }
    }

    pub fn from_seconds(seconds: i64) -> Self {
        Duration {
            seconds,
            text: format!("{seconds} seconds"),
        }
    }

    pub fn seconds(&self) -> i64 {
        self.seconds
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn is_zero(&self) -> bool {
        self.seconds == 0
    }
}

impl PartialEq for Duration {
    fn eq(&self, other: &Self) -> bool {
        self.seconds == other.seconds
    }
}

impl Eq for Duration {}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl FromStr for Duration {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Duration::parse(s)
    }
}

impl Serialize for Duration {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for Duration {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Duration::parse(&s).map_err(serde::de::Error::custom)
    }
}
