//! Timestamps and the clock abstraction shared by every component.
//!
//! Two clocks exist. [`SimClock`] is backed by tokio's paused time, so sleeping
//! advances virtual time instantly once every task is idle. [`WallClock`] follows
//! real time, optionally compressed by a speed-up factor.

use std::fmt;
use std::time::Duration;

use async_trait::async_trait;
use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

const MINUTE_MS: i64 = 60_000;

/// Milliseconds since the Unix epoch (UTC).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub const fn from_millis(ms: i64) -> Self {
        Timestamp(ms)
    }

    pub const fn from_secs(secs: i64) -> Self {
        Timestamp(secs * 1000)
    }

    pub const fn millis(self) -> i64 {
        self.0
    }

    pub fn parse_rfc3339(s: &str) -> Result<Self, chrono::ParseError> {
        let dt = DateTime::parse_from_rfc3339(s)?;
        Ok(Timestamp(dt.with_timezone(&Utc).timestamp_millis()))
    }

    pub fn to_rfc3339(self) -> String {
        match DateTime::<Utc>::from_timestamp_millis(self.0) {
            Some(dt) => dt.to_rfc3339_opts(SecondsFormat::Millis, true),
            None => format!("{}ms", self.0),
        }
    }

    pub fn plus_secs(self, secs: f64) -> Self {
        Timestamp(self.0 + (secs * 1000.0).round() as i64)
    }

    pub fn plus(self, d: Duration) -> Self {
        Timestamp(self.0 + d.as_millis() as i64)
    }

    /// Duration from `earlier` to `self`, saturating at zero.
    pub fn since(self, earlier: Timestamp) -> Duration {
        Duration::from_millis((self.0 - earlier.0).max(0) as u64)
    }

    pub fn is_minute_boundary(self) -> bool {
        self.0.rem_euclid(MINUTE_MS) == 0
    }

    /// Smallest minute boundary strictly after `self`.
    pub fn next_minute_boundary(self) -> Timestamp {
        Timestamp((self.0.div_euclid(MINUTE_MS) + 1) * MINUTE_MS)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_rfc3339())
    }
}

// Timestamps are stored as RFC 3339 strings in files, millisecond precision.
impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_rfc3339())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Timestamp::parse_rfc3339(&raw).map_err(serde::de::Error::custom)
    }
}

/// Abstract time source used by every actor in the harness.
#[async_trait]
pub trait ClockHandle: Send + Sync {
    fn now(&self) -> Timestamp;

    async fn sleep_until(&self, t: Timestamp);

    async fn sleep(&self, d: Duration) {
        let target = self.now().plus(d);
        self.sleep_until(target).await
    }

    fn next_minute_boundary(&self) -> Timestamp {
        self.now().next_minute_boundary()
    }

    /// Converts a span of clock time into the tokio duration that elapses meanwhile.
    fn to_runtime(&self, d: Duration) -> Duration {
        d
    }
}

/// Virtual clock on top of tokio's paused time.
///
/// The runtime must be built with `start_paused(true)` (or `tokio::time::pause()`
/// called) for sleeps to complete without real waiting.
#[derive(Clone, Debug)]
pub struct SimClock {
    origin: Timestamp,
    base: tokio::time::Instant,
}

impl SimClock {
    pub fn starting_at(origin: Timestamp) -> Self {
        SimClock {
            origin,
            base: tokio::time::Instant::now(),
        }
    }
}

#[async_trait]
impl ClockHandle for SimClock {
    fn now(&self) -> Timestamp {
        let elapsed = tokio::time::Instant::now().duration_since(self.base);
        Timestamp(self.origin.0 + elapsed.as_millis() as i64)
    }

    async fn sleep_until(&self, t: Timestamp) {
        let offset = Duration::from_millis((t.0 - self.origin.0).max(0) as u64);
        tokio::time::sleep_until(self.base + offset).await;
    }
}

/// Real-time clock. `scale` > 1 compresses time: one real second is `scale` clock seconds.
#[derive(Clone, Debug)]
pub struct WallClock {
    origin: Timestamp,
    base: tokio::time::Instant,
    scale: f64,
}

impl WallClock {
    pub fn new() -> Self {
        Self::scaled(1.0)
    }

    pub fn scaled(scale: f64) -> Self {
        let now_ms = Utc::now().timestamp_millis();
        Self::scaled_from(Timestamp(now_ms), scale)
    }

    /// A scaled clock whose current reading is `origin`.
    pub fn scaled_from(origin: Timestamp, scale: f64) -> Self {
        assert!(scale > 0.0, "clock scale must be positive");
        WallClock {
            origin,
            base: tokio::time::Instant::now(),
            scale,
        }
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

#[async_trait]
impl ClockHandle for WallClock {
    fn now(&self) -> Timestamp {
        let elapsed = tokio::time::Instant::now().duration_since(self.base);
        Timestamp(self.origin.0 + (elapsed.as_secs_f64() * 1000.0 * self.scale) as i64)
    }

    async fn sleep_until(&self, t: Timestamp) {
        let clock_ms = (t.0 - self.origin.0).max(0) as f64;
        let real = Duration::from_secs_f64(clock_ms / 1000.0 / self.scale);
        tokio::time::sleep_until(self.base + real).await;
    }

    fn to_runtime(&self, d: Duration) -> Duration {
        d.div_f64(self.scale)
    }
}

/// Trigger time for a routine.
///
/// The first routine fires on the next exact minute strictly after landing; later
/// routines fire one cycle after the previous trigger regardless of how long the
/// previous routine ran.
pub fn next_trigger_time(
    landed_at: Timestamp,
    previous_trigger: Option<Timestamp>,
    cycle_seconds: u64,
) -> Timestamp {
    match previous_trigger {
        None => landed_at.next_minute_boundary(),
        Some(prev) => Timestamp(prev.0 + cycle_seconds as i64 * 1000),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hms(h: i64, m: i64, s: i64, ms: i64) -> Timestamp {
        // 2021-03-15T00:00:00Z
        let day = Timestamp::parse_rfc3339("2021-03-15T00:00:00Z").unwrap();
        Timestamp(day.0 + ((h * 60 + m) * 60 + s) * 1000 + ms)
    }

    #[test]
    fn first_trigger_is_next_minute() {
        assert_eq!(next_trigger_time(hms(12, 3, 27, 0), None, 420), hms(12, 4, 0, 0));
    }

    #[test]
    fn later_triggers_follow_cycle() {
        assert_eq!(
            next_trigger_time(hms(12, 10, 59, 0), Some(hms(12, 4, 0, 0)), 420),
            hms(12, 11, 0, 0)
        );
    }

    #[test]
    fn landing_on_boundary_waits_for_following_minute() {
        assert_eq!(next_trigger_time(hms(12, 4, 0, 0), None, 420), hms(12, 5, 0, 0));
    }

    #[test]
    fn rfc3339_round_trip() {
        let t = hms(8, 1, 2, 345);
        assert_eq!(Timestamp::parse_rfc3339(&t.to_rfc3339()).unwrap(), t);
        assert_eq!(t.to_rfc3339(), "2021-03-15T08:01:02.345Z");
    }

    #[tokio::test(start_paused = true)]
    async fn sim_clock_advances_without_waiting() {
        let start = hms(12, 0, 0, 0);
        let clock = SimClock::starting_at(start);
        let real = std::time::Instant::now();
        clock.sleep_until(hms(13, 0, 0, 0)).await;
        assert_eq!(clock.now(), hms(13, 0, 0, 0));
        clock.sleep(Duration::from_secs(420)).await;
        assert_eq!(clock.now(), hms(13, 7, 0, 0));
        assert!(real.elapsed() < Duration::from_secs(5));
    }

    #[tokio::test]
    async fn wall_clock_scaling() {
        let clock = WallClock::scaled_from(hms(12, 0, 0, 0), 1000.0);
        clock.sleep(Duration::from_secs(30)).await;
        let now = clock.now();
        assert!(now >= hms(12, 0, 30, 0), "{now}");
        assert!(now < hms(12, 5, 0, 0), "{now}");
    }
}
