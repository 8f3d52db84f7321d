//! Domain types shared by every stage: timestamps, event records, streams and
//! the analyzer symbol/angle encoding.

use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use thiserror::Error;

/// Picoseconds per second.
pub const PS_PER_S: i64 = 1_000_000_000_000;

/// Timestamp resolution of the reference instrument, in picoseconds.
pub const DEFAULT_TICK_PS: i64 = 75;

/// A point in time, in integer picoseconds since the start of the run.
///
/// Picoseconds rather than instrument ticks so that sub-tick jitter and drift
/// can be represented before [`quantize`] is applied. An `i64` covers about
/// 10^7 seconds in either direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn from_ps(ps: i64) -> Self {
        Timestamp(ps)
    }

    pub fn ps(self) -> i64 {
        self.0
    }

    pub fn seconds(self) -> f64 {
        self.0 as f64 / PS_PER_S as f64
    }
}

impl Add<i64> for Timestamp {
    type Output = Timestamp;
    fn add(self, rhs: i64) -> Timestamp {
        Timestamp(self.0 + rhs)
    }
}

impl Sub<i64> for Timestamp {
    type Output = Timestamp;
    fn sub(self, rhs: i64) -> Timestamp {
        Timestamp(self.0 - rhs)
    }
}

impl Sub for Timestamp {
    type Output = i64;
    fn sub(self, rhs: Timestamp) -> i64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ps", self.0)
    }
}

/// Rounds `t_ps` to the nearest multiple of `tick_ps`; exact ties round toward +inf.
///
/// # Panics
///
/// Panics if `tick_ps <= 0`.
pub fn quantize(t_ps: i64, tick_ps: i64) -> Timestamp {
    assert!(tick_ps > 0, "tick_ps must be positive, got {tick_ps}");
    // floor((2t + tick) / (2 tick)) picks the upper neighbour on a tie.
    let q = (2 * t_ps as i128 + tick_ps as i128).div_euclid(2 * tick_ps as i128);
    Timestamp((q * tick_ps as i128) as i64)
}

/// Which station recorded a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Alice,
    Bob,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Alice => Side::Bob,
            Side::Bob => Side::Alice,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Alice => "Alice",
            Side::Bob => "Bob",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown side `{0}` (expected Alice or Bob)")]
pub struct ParseSideError(pub String);

impl FromStr for Side {
    type Err = ParseSideError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "alice" | "a" => Ok(Side::Alice),
            "bob" | "b" => Ok(Side::Bob),
            _ => Err(ParseSideError(s.to_string())),
        }
    }
}

/// Combined (setting, detector) code in `0..4`, equal to `setting + 2 * detector`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymbolCode(u8);

impl SymbolCode {
    pub const ALL: [SymbolCode; 4] = [SymbolCode(0), SymbolCode(1), SymbolCode(2), SymbolCode(3)];

    pub fn new(code: u8) -> Option<Self> {
        (code < 4).then_some(SymbolCode(code))
    }

    pub fn code(self) -> u8 {
        self.0
    }

    pub fn setting(self) -> u8 {
        self.0 & 1
    }

    pub fn detector(self) -> u8 {
        self.0 >> 1
    }

    /// Outcome sign: detector 0 reads +1, detector 1 reads -1.
    pub fn outcome(self) -> i8 {
        if self.detector() == 0 {
            1
        } else {
            -1
        }
    }
}

impl fmt::Display for SymbolCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Encodes a binary analyzer setting and detector index as a [`SymbolCode`].
///
/// # Panics
///
/// Panics if either argument is not 0 or 1.
pub fn symbol_code(setting: u8, detector: u8) -> SymbolCode {
    assert!(setting < 2 && detector < 2, "setting and detector must be binary");
    SymbolCode(setting + 2 * detector)
}

/// Analyzer angles, in degrees, for each side's two settings. The second
/// detector of a pair reads the orthogonal polarization, i.e. +90 degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettingMap {
    pub alice: [f64; 2],
    pub bob: [f64; 2],
}

impl Default for SettingMap {
    fn default() -> Self {
        SettingMap {
            alice: [0.0, 45.0],
            bob: [22.5, 67.5],
        }
    }
}

impl SettingMap {
    pub fn base_angle(&self, side: Side, setting: u8) -> f64 {
        match side {
            Side::Alice => self.alice[setting as usize & 1],
            Side::Bob => self.bob[setting as usize & 1],
        }
    }

    pub fn angle(&self, side: Side, code: SymbolCode) -> f64 {
        self.base_angle(side, code.setting()) + 90.0 * code.detector() as f64
    }
}

/// Angle in degrees of `code` at `side` under the default analyzer settings.
///
/// Bob's code 3 is 157.5 degrees (67.5 + 90).
pub fn angle_of(side: Side, code: SymbolCode) -> f64 {
    SettingMap::default().angle(side, code)
}

/// One detector firing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventRecord {
    pub t: Timestamp,
    setting: u8,
    detector: u8,
}

impl EventRecord {
    /// Returns `None` unless both `setting` and `detector` are 0 or 1.
    pub fn new(t: Timestamp, setting: u8, detector: u8) -> Option<Self> {
        (setting < 2 && detector < 2).then_some(EventRecord {
            t,
            setting,
            detector,
        })
    }

    pub fn setting(&self) -> u8 {
        self.setting
    }

    pub fn detector(&self) -> u8 {
        self.detector
    }

    pub fn symbol(&self) -> SymbolCode {
        SymbolCode(self.setting + 2 * self.detector)
    }

    pub fn with_time(self, t: Timestamp) -> Self {
        EventRecord { t, ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunMetadata {
    pub run_id: String,
    pub tick_ps: i64,
    pub duration_ps: i64,
}

impl Default for RunMetadata {
    fn default() -> Self {
        RunMetadata {
            run_id: String::new(),
            tick_ps: DEFAULT_TICK_PS,
            duration_ps: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StreamError {
    #[error("event {index} at {t} precedes its predecessor")]
    NonMonotonic { index: usize, t: Timestamp },
    #[error("event {index} duplicates (t={t}, detector={detector})")]
    Duplicate {
        index: usize,
        t: Timestamp,
        detector: u8,
    },
    #[error("tick_ps must be positive, got {0}")]
    BadTick(i64),
}

/// All events recorded at one station, sorted by time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    side: Side,
    events: Vec<EventRecord>,
    pub meta: RunMetadata,
}

impl EventStream {
    /// Builds a stream, rejecting unsorted input and duplicate `(t, detector)` pairs.
    pub fn new(
        side: Side,
        events: Vec<EventRecord>,
        meta: RunMetadata,
    ) -> Result<Self, StreamError> {
        if meta.tick_ps <= 0 {
            return Err(StreamError::BadTick(meta.tick_ps));
        }
        check_order(&events)?;
        Ok(EventStream { side, events, meta })
    }

    /// Sorts `events` by time and drops repeated `(t, detector)` pairs.
    pub fn from_unsorted(
        side: Side,
        mut events: Vec<EventRecord>,
        meta: RunMetadata,
    ) -> Result<Self, StreamError> {
        sort_dedup(&mut events);
        Self::new(side, events, meta)
    }

    pub fn empty(side: Side, meta: RunMetadata) -> Self {
        EventStream {
            side,
            events: Vec::new(),
            meta,
        }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn with_side(mut self, side: Side) -> Self {
        self.side = side;
        self
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn into_events(self) -> Vec<EventRecord> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Copies the timestamps out as raw picoseconds.
    pub fn times(&self) -> Vec<i64> {
        self.events.iter().map(|e| e.t.0).collect()
    }
}

pub(crate) fn sort_dedup(events: &mut Vec<EventRecord>) {
    events.sort_by_key(|e| (e.t, e.detector, e.setting));
    events.dedup_by_key(|e| (e.t, e.detector));
}

fn check_order(events: &[EventRecord]) -> Result<(), StreamError> {
    for (i, w) in events.windows(2).enumerate() {
        let (prev, cur) = (w[0], w[1]);
        if cur.t < prev.t {
            return Err(StreamError::NonMonotonic {
                index: i + 1,
                t: cur.t,
            });
        }
    }
    // Equal timestamps may interleave detectors, so duplicates are searched
    // within each run of equal t.
    let mut start = 0;
    while start < events.len() {
        let mut end = start + 1;
        while end < events.len() && events[end].t == events[start].t {
            end += 1;
        }
        if end - start > 1 {
            let mut seen = [false; 2];
            for (k, e) in events[start..end].iter().enumerate() {
                if std::mem::replace(&mut seen[e.detector as usize], true) {
                    return Err(StreamError::Duplicate {
                        index: start + k,
                        t: e.t,
                        detector: e.detector,
                    });
                }
            }
        }
        start = end;
    }
    Ok(())
}
