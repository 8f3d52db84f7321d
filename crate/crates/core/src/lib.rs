//! Timing analysis of two-station photon event streams.
//!
//! The crate pairs each station's detector events with their nearest partner
//! at the other station, calibrates clock offset, drift and per-detector
//! delays, computes CHSH statistics over mutual coincidences, and renders the
//! time/delta scatter and per-symbol histogram figures.
//!
//! Modules, bottom-up:
//!
//! - [`types`]: timestamps, events, streams and the symbol/angle encoding
//! - [`io`]: text and binary event files, coincidence CSV
//! - [`synth`]: seeded generator with injectable instrumental artifacts
//! - [`matcher`]: timing adjustment, nearest-partner matching, multiple tagging
//! - [`calibrate`]: offset, drift and detector-delay estimation
//! - [`bell`]: correlation tallies and the CHSH statistic
//! - [`plot`]: SVG and CSV figure output
//! - [`pipeline`]: the stages chained end to end

pub mod bell;
pub mod calibrate;
pub mod io;
pub mod kv;
pub mod matcher;
pub mod pipeline;
pub mod plot;
pub mod synth;
pub mod types;

pub use bell::{chsh_s, correlation_e, tally, BellError, BellReport, SettingCounts};
pub use calibrate::{
    calibrate, estimate_channel_delays, estimate_drift, estimate_offset, Calibration, CalibrationError,
    CalibrationOptions, DelayFit,
};
pub use io::{read_events, write_coincidences_csv, write_events, Format, IoError, ReadOptions};
pub use kv::{KvError, KvMap};
pub use matcher::{
    adjust, match_both, match_streams, mutual_pairs, nearest_deltas, tag_multiples, AdjustmentSet,
    CoincidenceRecord, CoincidenceSet, Matched, MutualPair, DEFAULT_WINDOW_PS,
};
pub use pipeline::{analyze, run_pipeline, Analysis, PipelineError, PipelineOptions, PipelineRun};
pub use plot::{histogram_grid, HistogramGrid, HistogramWindow, ScatterSpec};
pub use synth::{generate_run, ArtifactConfig, GroundTruth, SynthConfig, SynthError};
pub use types::{
    angle_of, quantize, symbol_code, EventRecord, EventStream, RunMetadata, Side, SymbolCode, Timestamp,
    PS_PER_S,
};
