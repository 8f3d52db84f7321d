//! The stages chained together: synthesize, calibrate, analyze, plot.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::bell::{BellError, BellReport};
use crate::calibrate::{calibrate, Calibration, CalibrationError, CalibrationOptions};
use crate::io::{self, Format, IoError};
use crate::kv::KvMap;
use crate::matcher::{match_both, AdjustmentSet, Matched, MutualPair};
use crate::plot::{self, HistogramWindow, ScatterSpec};
use crate::synth::{generate_run, ArtifactConfig, GroundTruth, SynthConfig, SynthError};
use crate::types::{EventStream, Side};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Bell(#[from] BellError),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        PipelineError::Io(IoError::Io(e))
    }
}

/// Coincidences and CHSH statistics for one set of adjustments.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub adjustments: AdjustmentSet,
    pub matched: Matched,
    pub pairs: Vec<MutualPair>,
    pub report: Result<BellReport, BellError>,
}

impl Analysis {
    pub fn multiples(&self) -> usize {
        self.matched.from_alice.multiples()
    }
}

pub fn analyze(alice: &EventStream, bob: &EventStream, adj: &AdjustmentSet, window_ps: i64) -> Analysis {
    let matched = match_both(alice, bob, adj, window_ps);
    let pairs = matched.mutual_pairs();
    let report = BellReport::from_pairs(&pairs);
    Analysis {
        adjustments: *adj,
        matched,
        pairs,
        report,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub calibration: CalibrationOptions,
    pub scatter: ScatterSpec,
    pub histogram: HistogramWindow,
    pub format: Format,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            calibration: CalibrationOptions::default(),
            scatter: ScatterSpec::default(),
            histogram: HistogramWindow::default(),
            format: Format::Binary,
        }
    }
}

/// Everything one synthetic run produces.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub alice: EventStream,
    pub bob: EventStream,
    pub truth: GroundTruth,
    pub calibration: Calibration,
    /// Offset-only correction, as from a single uniform timing adjustment.
    pub raw: Analysis,
    /// Offset, drift and per-detector delays.
    pub adjusted: Analysis,
}

impl PipelineRun {
    pub fn summary(&self) -> KvMap {
        let mut kv = KvMap::new();
        let put_s = |kv: &mut KvMap, prefix: &str, a: &Analysis| {
            kv.set(&format!("pairs_{prefix}"), a.pairs.len());
            kv.set(&format!("multiples_{prefix}"), a.multiples());
            if let Ok(r) = &a.report {
                kv.set(&format!("s_{prefix}"), format!("{:.6}", r.s));
                kv.set(&format!("s_{prefix}_err"), format!("{:.6}", r.s_err));
            }
        };
        put_s(&mut kv, "raw", &self.raw);
        put_s(&mut kv, "adjusted", &self.adjusted);
        if let (Ok(r), Ok(a)) = (&self.raw.report, &self.adjusted.report) {
            kv.set("s_difference", format!("{:.6}", a.s - r.s));
        }
        kv.set("offset_ps", self.calibration.adjustments.offset_ps);
        kv.set("drift_ps_per_s", self.calibration.adjustments.drift_ps_per_s);
        kv.set("delay_a1_minus_a0_ps", self.calibration.adjustments.delay_a[1] - self.calibration.adjustments.delay_a[0]);
        kv.set("delay_b1_minus_b0_ps", self.calibration.adjustments.delay_b[1] - self.calibration.adjustments.delay_b[0]);
        kv.set("events_a", self.alice.len());
        kv.set("events_b", self.bob.len());
        kv
    }

    /// Writes event files, reports and figures into `dir`, which must exist.
    pub fn write_outputs(&self, dir: &Path, opts: &PipelineOptions) -> Result<(), PipelineError> {
        let ext = match opts.format {
            Format::Binary => "bin",
            _ => "txt",
        };
        io::write_events(&self.alice, &dir.join(format!("alice.{ext}")), opts.format)?;
        io::write_events(&self.bob, &dir.join(format!("bob.{ext}")), opts.format)?;
        fs::write(dir.join("truth.txt"), self.truth.to_kv().render())?;
        fs::write(dir.join("calibration.txt"), self.calibration.to_kv().render())?;
        fs::write(dir.join("summary.txt"), self.summary().render())?;
        let from_alice = &self.adjusted.matched.from_alice;
        io::write_coincidences_csv(from_alice, &dir.join("coincidences.csv"))?;
        plot::scatter_svg(from_alice, &opts.scatter, &dir.join("scatter.svg"))?;
        let grid = plot::histogram_grid(from_alice, &self.adjusted.pairs, opts.histogram);
        plot::grid_export(&grid, &dir.join("grid.svg"), &dir.join("grid.csv"))?;
        if let Ok(r) = &self.adjusted.report {
            fs::write(dir.join("bell.csv"), r.to_csv())?;
        }
        Ok(())
    }
}

/// Generates a run, calibrates it and analyzes it with offset-only and full
/// corrections.
pub fn run_pipeline(
    cfg: &SynthConfig,
    art: &ArtifactConfig,
    opts: &PipelineOptions,
) -> Result<PipelineRun, PipelineError> {
    let (alice, bob, truth) = generate_run(cfg, art)?;
    let calibration = calibrate(&alice, &bob, &opts.calibration)?;
    let window = opts.calibration.window_ps;
    let raw = analyze(&alice, &bob, &AdjustmentSet::offset(calibration.initial_offset_ps), window);
    let adjusted = analyze(&alice, &bob, &calibration.adjustments, window);
    debug_assert_eq!(adjusted.matched.from_alice.perspective, Side::Alice);
    Ok(PipelineRun {
        alice,
        bob,
        truth,
        calibration,
        raw,
        adjusted,
    })
}
