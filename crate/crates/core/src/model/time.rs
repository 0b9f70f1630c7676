use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;
use std::time::Duration;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A UTC instant at whole-second precision.
///
/// Serialized as an RFC 3339 string (`2017-02-01T04:00:00Z`). Anything with a
/// finer resolution or a non-UTC offset is normalized on parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(i64);

impl Timestamp {
    pub const fn from_unix(secs: i64) -> Self {
        Timestamp(secs)
    }

    pub fn now() -> Self {
        Timestamp(Utc::now().timestamp())
    }

    pub const fn unix(self) -> i64 {
        self.0
    }

    pub fn parse(text: &str) -> Result<Self, chrono::ParseError> {
        let parsed = DateTime::parse_from_rfc3339(text.trim())?;
        Ok(Timestamp(parsed.with_timezone(&Utc).timestamp()))
    }

    /// Signed distance `self - earlier`; negative when `earlier` is later.
    pub fn seconds_since(self, earlier: Timestamp) -> i64 {
        self.0 - earlier.0
    }
}

impl Add<Duration> for Timestamp {
    type Output = Timestamp;
    fn add(self, rhs: Duration) -> Timestamp {
        Timestamp(self.0.saturating_add(rhs.as_secs() as i64))
    }
}

impl Sub<Duration> for Timestamp {
    type Output = Timestamp;
    fn sub(self, rhs: Duration) -> Timestamp {
        Timestamp(self.0.saturating_sub(rhs.as_secs() as i64))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match DateTime::<Utc>::from_timestamp(self.0, 0) {
            Some(dt) => f.write_str(&dt.to_rfc3339_opts(SecondsFormat::Secs, true)),
            None => write!(f, "@{}", self.0),
        }
    }
}

impl FromStr for Timestamp {
    type Err = chrono::ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Timestamp::parse(s)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Timestamp::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Half-open interval `[start, end)` of timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeWindow {
    pub fn new(start: Timestamp, end: Timestamp) -> Self {
        TimeWindow { start, end }
    }

    /// Window spanning everything; handy for replaying a whole archive.
    pub fn all() -> Self {
        TimeWindow {
            start: Timestamp(i64::MIN / 2),
            end: Timestamp(i64::MAX / 2),
        }
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t < self.end
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn duration(&self) -> Duration {
        Duration::from_secs(self.end.seconds_since(self.start).max(0) as u64)
    }
}

impl fmt::Display for TimeWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

impl FromStr for TimeWindow {
    type Err = String;
    /// Parses `START..END` with RFC 3339 endpoints.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| format!("window `{s}` is not of the form START..END"))?;
        let start = Timestamp::parse(a).map_err(|e| format!("bad window start: {e}"))?;
        let end = Timestamp::parse(b).map_err(|e| format!("bad window end: {e}"))?;
        Ok(TimeWindow { start, end })
    }
}

/// Durations travel as whole milliseconds.
pub mod duration_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_offsets_and_fractions() {
        let t = Timestamp::parse("2017-02-01T05:00:00.750+01:00").unwrap();
        assert_eq!(t.to_string(), "2017-02-01T04:00:00Z");
    }

    #[test]
    fn window_is_start_inclusive_end_exclusive() {
        let w = TimeWindow::new(Timestamp::from_unix(10), Timestamp::from_unix(20));
        assert!(w.contains(Timestamp::from_unix(10)));
        assert!(!w.contains(Timestamp::from_unix(20)));
        assert!(TimeWindow::new(Timestamp::from_unix(5), Timestamp::from_unix(5)).is_empty());
    }

    #[test]
    fn window_parses_from_range_syntax() {
        let w: TimeWindow = "2017-02-01T00:00:00Z..2017-02-01T04:00:00Z".parse().unwrap();
        assert_eq!(w.duration(), Duration::from_secs(4 * 3600));
    }
}
