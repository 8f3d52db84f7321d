//! Event-file readers and writers.
//!
//! Two on-disk layouts are supported. Both store timestamps in instrument
//! ticks; streams hold picoseconds in memory.
//!
//! Text:
//!
//! ```text
//! # side=Alice
//! # run_id=demo
//! # tick_ps=75
//! # duration_ps=10000000000000
//! 0 1 0
//! 13 0 1
//! ```
//!
//! Body lines are `<t_ticks> <setting> <detector>`, single-space separated and
//! LF terminated. `side` and `tick_ps` are required; `duration_ps` is
//! optional and unknown `#` lines are ignored.
//!
//! Binary (all integers little-endian):
//!
//! | offset | size | field                               |
//! |--------|------|-------------------------------------|
//! | 0      | 16   | magic `COINLAB1` padded with NULs   |
//! | 16     | 4    | `tick_ps` (u32)                     |
//! | 20     | 4    | record count (u32)                  |
//! | 24     | 10·n | records: `t_ticks` u64, setting u8, detector u8 |

use std::fs::File;
use std::io::{self, BufRead, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::matcher::CoincidenceSet;
use crate::types::{
    sort_dedup, EventRecord, EventStream, RunMetadata, Side, StreamError, Timestamp,
};

pub const MAGIC: [u8; 16] = *b"COINLAB1\0\0\0\0\0\0\0\0";
pub const HEADER_LEN: usize = 24;
pub const RECORD_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Binary,
    /// Binary if the file starts with the magic, text otherwise. Reading only.
    Auto,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Format::Text),
            "binary" => Ok(Format::Binary),
            "auto" => Ok(Format::Auto),
            other => Err(format!("unknown format `{other}` (text, binary, auto)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{location}: malformed record: {reason}")]
    MalformedRecord { location: String, reason: String },
    #[error("{location}: timestamp goes backwards")]
    NonMonotonic { location: String },
    #[error("{location}: duplicate event for the same detector and time")]
    Duplicate { location: String },
    #[error("bad magic; not a COINLAB1 file")]
    BadMagic,
    #[error("file truncated: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: u64, found: u64 },
    #[error("cannot encode event at {t}: {reason}")]
    NotRepresentable { t: Timestamp, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// Sort out-of-order input (with a warning) instead of failing.
    pub allow_unsorted: bool,
    /// Side assigned to binary files, which do not record one. Defaults to Alice.
    pub side: Option<Side>,
}

pub fn read_events(path: &Path, format: Format, opts: ReadOptions) -> Result<EventStream, IoError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let format = match format {
        Format::Auto if bytes.starts_with(&MAGIC[..8]) => Format::Binary,
        Format::Auto => Format::Text,
        f => f,
    };
    let run_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match format {
        Format::Binary => decode_binary(&bytes, run_id, opts),
        _ => decode_text(&bytes[..], opts),
    }
}

pub fn write_events(stream: &EventStream, path: &Path, format: Format) -> Result<(), IoError> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        Format::Binary => encode_binary(stream, &mut out)?,
        _ => encode_text(stream, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn ticks_of(e: &EventRecord, tick_ps: i64) -> Result<u64, IoError> {
    if e.t.0 < 0 || e.t.0 % tick_ps != 0 {
        return Err(IoError::NotRepresentable {
            t: e.t,
            reason: format!("not a non-negative multiple of tick {tick_ps} ps"),
        });
    }
    Ok((e.t.0 / tick_ps) as u64)
}

pub fn encode_text<W: Write>(stream: &EventStream, out: &mut W) -> Result<(), IoError> {
    let meta = &stream.meta;
    writeln!(out, "# side={}", stream.side())?;
    writeln!(out, "# run_id={}", meta.run_id)?;
    writeln!(out, "# tick_ps={}", meta.tick_ps)?;
    writeln!(out, "# duration_ps={}", meta.duration_ps)?;
    for e in stream.events() {
        let ticks = ticks_of(e, meta.tick_ps)?;
        writeln!(out, "{} {} {}", ticks, e.setting(), e.detector())?;
    }
    Ok(())
}

pub fn encode_binary<W: Write>(stream: &EventStream, out: &mut W) -> Result<(), IoError> {
    let tick = u32::try_from(stream.meta.tick_ps).map_err(|_| IoError::NotRepresentable {
        t: Timestamp::ZERO,
        reason: format!("tick_ps {} does not fit in u32", stream.meta.tick_ps),
    })?;
    let count = u32::try_from(stream.len()).map_err(|_| IoError::NotRepresentable {
        t: Timestamp::ZERO,
        reason: format!("{} records exceed the u32 count field", stream.len()),
    })?;
    out.write_all(&MAGIC)?;
    out.write_all(&tick.to_le_bytes())?;
    out.write_all(&count.to_le_bytes())?;
    let mut rec = [0u8; RECORD_LEN];
    for e in stream.events() {
        rec[..8].copy_from_slice(&ticks_of(e, stream.meta.tick_ps)?.to_le_bytes());
        rec[8] = e.setting();
        rec[9] = e.detector();
        out.write_all(&rec)?;
    }
    Ok(())
}

fn malformed(location: String, reason: impl Into<String>) -> IoError {
    IoError::MalformedRecord {
        location,
        reason: reason.into(),
    }
}

fn finish(
    side: Side,
    mut events: Vec<EventRecord>,
    meta: RunMetadata,
    opts: ReadOptions,
    locate: impl Fn(usize) -> String,
) -> Result<EventStream, IoError> {
    if opts.allow_unsorted && events.windows(2).any(|w| w[1].t < w[0].t) {
        log::warn!("input is not time-ordered; sorting {} events", events.len());
        sort_dedup(&mut events);
    }
    EventStream::new(side, events, meta).map_err(|e| match e {
        StreamError::NonMonotonic { index, .. } => IoError::NonMonotonic {
            location: locate(index),
        },
        StreamError::Duplicate { index, .. } => IoError::Duplicate {
            location: locate(index),
        },
        StreamError::BadTick(t) => malformed(locate(0), format!("tick_ps {t}")),
    })
}

pub fn decode_text<R: BufRead>(input: R, opts: ReadOptions) -> Result<EventStream, IoError> {
    let mut side = None;
    let mut meta = RunMetadata::default();
    let mut tick_seen = false;
    let mut duration_seen = false;
    let mut events = Vec::new();
    // body line number of each event, for error reporting
    let mut lines_of = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        let loc = || format!("line {lineno}");
        if let Some(header) = line.strip_prefix('#') {
            if !events.is_empty() {
                return Err(malformed(loc(), "header after first record"));
            }
            let Some((key, value)) = header.trim().split_once('=') else {
                continue;
            };
            match key.trim() {
                "side" => {
                    side = Some(value.trim().parse::<Side>().map_err(|e| malformed(loc(), e.to_string()))?)
                }
                "run_id" => meta.run_id = value.trim().to_string(),
                "tick_ps" => {
                    meta.tick_ps = value
                        .trim()
                        .parse::<i64>()
                        .ok()
                        .filter(|&t| t > 0)
                        .ok_or_else(|| malformed(loc(), format!("bad tick_ps `{}`", value.trim())))?;
                    tick_seen = true;
                }
                "duration_ps" => {
                    meta.duration_ps = value
                        .trim()
                        .parse::<i64>()
                        .map_err(|_| malformed(loc(), format!("bad duration_ps `{}`", value.trim())))?;
                    duration_seen = true;
                }
                _ => {}
            }
            continue;
        }
        if !tick_seen {
            return Err(malformed(loc(), "record before `# tick_ps=` header"));
        }
        let mut fields = line.split(' ');
        let (Some(t), Some(s), Some(d), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(malformed(loc(), format!("expected `<t_ticks> <setting> <detector>`, got `{line}`")));
        };
        let ticks: u64 = t
            .parse()
            .map_err(|_| malformed(loc(), format!("bad timestamp `{t}`")))?;
        let setting: u8 = s
            .parse()
            .map_err(|_| malformed(loc(), format!("bad setting `{s}`")))?;
        let detector: u8 = d
            .parse()
            .map_err(|_| malformed(loc(), format!("bad detector `{d}`")))?;
        let t_ps = i64::try_from(ticks)
            .ok()
            .and_then(|t| t.checked_mul(meta.tick_ps))
            .ok_or_else(|| malformed(loc(), "timestamp overflows picosecond range"))?;
        let ev = EventRecord::new(Timestamp(t_ps), setting, detector).ok_or_else(|| {
            malformed(loc(), format!("setting {setting} / detector {detector} out of range"))
        })?;
        events.push(ev);
        lines_of.push(lineno);
    }
    let side = side.ok_or_else(|| malformed("header".into(), "missing `# side=` header"))?;
    if !duration_seen {
        meta.duration_ps = events.last().map_or(0, |e| e.t.0);
    }
    finish(side, events, meta, opts, |i| {
        format!("line {}", lines_of.get(i).copied().unwrap_or(0))
    })
}

pub fn decode_binary(bytes: &[u8], run_id: String, opts: ReadOptions) -> Result<EventStream, IoError> {
    if bytes.len() < HEADER_LEN {
        if !bytes.is_empty() && !MAGIC.starts_with(&bytes[..bytes.len().min(16)]) {
            return Err(IoError::BadMagic);
        }
        return Err(IoError::TruncatedFile {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    if bytes[..16] != MAGIC {
        return Err(IoError::BadMagic);
    }
    let tick = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as i64;
    let count = u32::from_le_bytes(bytes[20..24].try_into().unwrap()) as usize;
    let expected = HEADER_LEN as u64 + RECORD_LEN as u64 * count as u64;
    if (bytes.len() as u64) < expected {
        return Err(IoError::TruncatedFile {
            expected,
            found: bytes.len() as u64,
        });
    }
    if bytes.len() as u64 > expected {
        return Err(malformed(
            format!("offset {expected}"),
            format!("{} trailing bytes after {count} records", bytes.len() as u64 - expected),
        ));
    }
    if tick <= 0 {
        return Err(malformed("offset 16".into(), "tick_ps must be positive"));
    }
    let offset_of = |i: usize| HEADER_LEN + i * RECORD_LEN;
    let mut events = Vec::with_capacity(count);
    for (i, rec) in bytes[HEADER_LEN..].chunks_exact(RECORD_LEN).enumerate() {
        let loc = || format!("offset {}", offset_of(i));
        let ticks = u64::from_le_bytes(rec[..8].try_into().unwrap());
        let t_ps = i64::try_from(ticks)
            .ok()
            .and_then(|t| t.checked_mul(tick))
            .ok_or_else(|| malformed(loc(), "timestamp overflows picosecond range"))?;
        let ev = EventRecord::new(Timestamp(t_ps), rec[8], rec[9]).ok_or_else(|| {
            malformed(loc(), format!("setting {} / detector {} out of range", rec[8], rec[9]))
        })?;
        events.push(ev);
    }
    let meta = RunMetadata {
        run_id,
        tick_ps: tick,
        duration_ps: events.last().map_or(0, |e| e.t.0),
    };
    finish(opts.side.unwrap_or(Side::Alice), events, meta, opts, |i| {
        format!("offset {}", offset_of(i))
    })
}

pub const COINCIDENCE_CSV_HEADER: &str = "t_a_ps,delta_ps,symbol_a,symbol_b,multiple";

pub fn encode_coincidences_csv<W: Write>(set: &CoincidenceSet, out: &mut W) -> io::Result<()> {
    writeln!(out, "{COINCIDENCE_CSV_HEADER}")?;
    for r in &set.records {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.t.0,
            r.delta_ps,
            r.symbol_a,
            r.symbol_b,
            u8::from(r.multiple)
        )?;
    }
    Ok(())
}

pub fn write_coincidences_csv(set: &CoincidenceSet, path: &Path) -> Result<(), IoError> {
    let mut out = BufWriter::new(File::create(path)?);
    encode_coincidences_csv(set, &mut out)?;
    out.flush()?;
    Ok(())
}
