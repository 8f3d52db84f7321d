//! Estimation of the timing corrections in an [`AdjustmentSet`] from raw
//! stream pairs: clock offset, linear drift and per-detector delays.
//!
//! Every estimator returns values in the adjustment sign convention, so a
//! result is applied by adding it to the corresponding field (the fitted
//! common term `c` of the delay model is applied as `offset_ps -= c`). The
//! estimators accept coincidence sets from either perspective.

use thiserror::Error;

use crate::kv::{pair, KvMap};
use crate::matcher::{match_streams, AdjustmentSet, CoincidenceSet, DEFAULT_WINDOW_PS};
use crate::types::{EventStream, Side};

pub const DEFAULT_SEARCH_RANGE_PS: i64 = 1_000_000;
pub const DEFAULT_COARSE_BIN_PS: i64 = 1_000;
/// Half-width of the dense central stripe of true coincidences.
pub const DEFAULT_CORE_PS: i64 = 1_000;
/// Half-width of the refinement window around the coarse offset peak.
pub const REFINE_HALF_WIDTH_PS: i64 = 50_000;
pub const MIN_DRIFT_RECORDS: usize = 100;
pub const MIN_CLASS_RECORDS: usize = 50;

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("no coincidence peak: tallest bin {max} against median {median} and mean {mean:.2}")]
    NoPeak { max: u64, median: u64, mean: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate delay fit: detector class (a={0}, b={1}) has no coincidences")]
    DegenerateFit(u8, u8),
}

/// Median of `values`; the mean of the two middle elements for even lengths.
pub fn median(values: &mut [f64]) -> Option<f64> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let cmp = |a: &f64, b: &f64| a.total_cmp(b);
    let (_, &mut upper, _) = values.select_nth_unstable_by(n / 2, cmp);
    if n % 2 == 1 {
        return Some(upper);
    }
    let lower = values[..n / 2].iter().copied().max_by(cmp).expect("n >= 2");
    Some(0.5 * (lower + upper))
}

/// Calls `f(t_other - t_own)` for every cross-stream pair with the difference
/// in `[lo, hi)`.
fn for_each_difference(own: &EventStream, other: &EventStream, lo: i64, hi: i64, mut f: impl FnMut(i64)) {
    let others = other.events();
    let mut start = 0;
    for e in own.events() {
        while start < others.len() && others[start].t.0 - e.t.0 < lo {
            start += 1;
        }
        for o in &others[start..] {
            let d = o.t.0 - e.t.0;
            if d >= hi {
                break;
            }
            f(d);
        }
    }
}

/// Offset of `other`'s clock relative to `own`'s, as the median of
/// `t_other - t_own` around the dominant peak of the cross-difference histogram.
///
/// With Alice as `own` this is the adjustment-convention offset; swapping the
/// streams reverses its sign.
pub fn estimate_offset(
    own: &EventStream,
    other: &EventStream,
    search_range_ps: i64,
    coarse_bin_ps: i64,
) -> Result<f64, CalibrationError> {
    if own.is_empty() || other.is_empty() {
        return Err(CalibrationError::InsufficientData("offset estimation needs two non-empty streams".into()));
    }
    assert!(search_range_ps > 0 && coarse_bin_ps > 0);
    let nbins = ((2 * search_range_ps + coarse_bin_ps - 1) / coarse_bin_ps) as usize;
    let mut hist = vec![0u64; nbins];
    for_each_difference(own, other, -search_range_ps, search_range_ps, |d| {
        hist[((d + search_range_ps) / coarse_bin_ps) as usize] += 1;
    });

    let (peak, &max) = hist
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("at least one bin");
    let mut sorted = hist.clone();
    sorted.sort_unstable();
    let median_bin = sorted[nbins / 2];
    let mean = hist.iter().sum::<u64>() as f64 / nbins as f64;
    // 3x the median bin, and a 6-sigma Poisson excess for sparse histograms
    // whose median is tiny.
    if max == 0 || max < 3 * median_bin || (max as f64) < mean + 6.0 * mean.sqrt() {
        return Err(CalibrationError::NoPeak {
            max,
            median: median_bin,
            mean,
        });
    }

    let center = -search_range_ps + peak as i64 * coarse_bin_ps + coarse_bin_ps / 2;
    let mut near = Vec::new();
    for_each_difference(
        own,
        other,
        center - REFINE_HALF_WIDTH_PS,
        center + REFINE_HALF_WIDTH_PS + 1,
        |d| near.push(d as f64),
    );
    Ok(median(&mut near).expect("peak bin lies inside the refinement window"))
}

fn windowed_center(set: &CoincidenceSet) -> Option<f64> {
    let mut inside: Vec<f64> = set
        .records
        .iter()
        .filter(|r| !r.multiple && r.delta_ps.abs() <= set.window_ps)
        .map(|r| set.alice_delta(r) as f64)
        .collect();
    median(&mut inside)
}

/// Records in the core: non-multiple, with Alice-convention delta within
/// `core_ps` of the median delta of in-window coincidences.
fn core_records(set: &CoincidenceSet, core_ps: i64) -> Vec<(f64, f64, u8, u8)> {
    let Some(center) = windowed_center(set) else {
        return Vec::new();
    };
    set.records
        .iter()
        .filter(|r| !r.multiple)
        .filter_map(|r| {
            let d = set.alice_delta(r) as f64;
            ((d - center).abs() <= core_ps as f64).then(|| (r.t.seconds(), d, r.symbol_a.code(), r.symbol_b.code()))
        })
        .collect()
}

/// Residual clock drift in ps/s: the least-squares slope of the core deltas
/// against time, negated into adjustment convention.
pub fn estimate_drift(set: &CoincidenceSet, core_ps: i64) -> Result<f64, CalibrationError> {
    let core = core_records(set, core_ps);
    if core.len() < MIN_DRIFT_RECORDS {
        return Err(CalibrationError::InsufficientData(format!(
            "{} core coincidences for drift, need {MIN_DRIFT_RECORDS}",
            core.len()
        )));
    }
    let n = core.len() as f64;
    let mean_t = core.iter().map(|c| c.0).sum::<f64>() / n;
    let mean_d = core.iter().map(|c| c.1).sum::<f64>() / n;
    let (sxy, sxx) = core.iter().fold((0.0, 0.0), |(sxy, sxx), c| {
        let dt = c.0 - mean_t;
        (sxy + dt * (c.1 - mean_d), sxx + dt * dt)
    });
    if sxx <= 0.0 {
        return Err(CalibrationError::InsufficientData("core coincidences span no time".into()));
    }
    // Bob running fast makes t_A - t_B fall over time.
    Ok(-sxy / sxx)
}

/// Gauge-fixed per-detector delays: `delay_a[0] = delay_b[0] = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayFit {
    pub delay_a: [f64; 2],
    pub delay_b: [f64; 2],
    /// Common term `c` of the fit; moves into the global offset.
    pub residual_offset_ps: f64,
    pub rms_residual_ps: f64,
    /// Median core delta per (Alice detector, Bob detector) class.
    pub class_medians: [[f64; 2]; 2],
}

impl DelayFit {
    /// Least-squares solution of `m[i][j] = c + a[i] - b[j]` with `a[0] = b[0] = 0`.
    pub fn solve(m: [[f64; 2]; 2]) -> DelayFit {
        let a1 = 0.5 * ((m[1][0] - m[0][0]) + (m[1][1] - m[0][1]));
        let b1 = 0.5 * ((m[0][0] - m[0][1]) + (m[1][0] - m[1][1]));
        let c = 0.25 * (m[0][0] + m[0][1] + m[1][0] + m[1][1]) - 0.5 * a1 + 0.5 * b1;
        let a = [0.0, a1];
        let b = [0.0, b1];
        let mut ss = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let r = m[i][j] - (c + a[i] - b[j]);
                ss += r * r;
            }
        }
        DelayFit {
            delay_a: a,
            delay_b: b,
            residual_offset_ps: c,
            rms_residual_ps: (ss / 4.0).sqrt(),
            class_medians: m,
        }
    }

    /// Folds this fit into `adj`.
    pub fn apply(&self, adj: &mut AdjustmentSet) {
        for k in 0..2 {
            adj.delay_a[k] += self.delay_a[k];
            adj.delay_b[k] += self.delay_b[k];
        }
        adj.offset_ps -= self.residual_offset_ps;
    }
}

/// Per-detector delays from the medians of the four detector classes.
/// The set should already be drift-corrected.
pub fn estimate_channel_delays(set: &CoincidenceSet, core_ps: i64) -> Result<DelayFit, CalibrationError> {
    let mut classes: [[Vec<f64>; 2]; 2] = Default::default();
    for (_, d, sa, sb) in core_records(set, core_ps) {
        classes[(sa >> 1) as usize][(sb >> 1) as usize].push(d);
    }
    for i in 0..2 {
        for j in 0..2 {
            if classes[i][j].is_empty() {
                return Err(CalibrationError::DegenerateFit(i as u8, j as u8));
            }
        }
    }
    let mut m = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let class = &mut classes[i][j];
            if class.len() < MIN_CLASS_RECORDS {
                return Err(CalibrationError::InsufficientData(format!(
                    "detector class (a={i}, b={j}) has {} core coincidences, need {MIN_CLASS_RECORDS}",
                    class.len()
                )));
            }
            m[i][j] = median(class).expect("non-empty");
        }
    }
    Ok(DelayFit::solve(m))
}

/// Median Alice-convention delta over non-multiple records with `|delta| <= core_ps`,
/// for each of the 16 (symbol_a, symbol_b) classes. `None` for empty classes.
pub fn symbol_class_medians(set: &CoincidenceSet, core_ps: i64) -> [[Option<f64>; 4]; 4] {
    let mut classes: [[Vec<f64>; 4]; 4] = Default::default();
    for r in set.records.iter().filter(|r| !r.multiple) {
        let d = set.alice_delta(r);
        if d.abs() <= core_ps {
            classes[r.symbol_a.code() as usize][r.symbol_b.code() as usize].push(d as f64);
        }
    }
    classes.map(|row| row.map(|mut c| median(&mut c)))
}

/// Size of the broad timing component around the central stripe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BroadeningEstimate {
    /// Accidental-corrected share of coincidences with `core < |delta| <= stripe`
    /// among all with `|delta| <= stripe`.
    pub fraction: f64,
    pub stripe_count: u64,
    pub total_count: u64,
    /// Accidental density per picosecond of delta, from the reference band.
    pub accidental_per_ps: f64,
}

/// Measures the broad stripe on a calibrated set. Accidentals are assumed
/// flat in delta and measured in `reference_ps.0 < |delta| <= reference_ps.1`.
pub fn estimate_broad_fraction(
    set: &CoincidenceSet,
    core_ps: i64,
    stripe_ps: i64,
    reference_ps: (i64, i64),
) -> Result<BroadeningEstimate, CalibrationError> {
    assert!(0 <= core_ps && core_ps < stripe_ps && stripe_ps <= reference_ps.0 && reference_ps.0 < reference_ps.1);
    let (mut stripe, mut total, mut reference) = (0u64, 0u64, 0u64);
    for r in set.records.iter().filter(|r| !r.multiple) {
        let d = r.delta_ps.abs();
        if d <= stripe_ps {
            total += 1;
            if d > core_ps {
                stripe += 1;
            }
        } else if d > reference_ps.0 && d <= reference_ps.1 {
            reference += 1;
        }
    }
    let density = reference as f64 / (2 * (reference_ps.1 - reference_ps.0)) as f64;
    let signal_total = total as f64 - density * (2 * stripe_ps + 1) as f64;
    if signal_total <= 0.0 {
        return Err(CalibrationError::InsufficientData("no coincidences above the accidental floor".into()));
    }
    let signal_stripe = stripe as f64 - density * (2 * (stripe_ps - core_ps)) as f64;
    Ok(BroadeningEstimate {
        fraction: signal_stripe / signal_total,
        stripe_count: stripe,
        total_count: total,
        accidental_per_ps: density,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub window_ps: i64,
    pub core_ps: i64,
    pub search_range_ps: i64,
    pub coarse_bin_ps: i64,
    pub max_iterations: usize,
    /// Stop once delay and offset updates fall below this many picoseconds.
    pub tolerance_ps: f64,
    /// ... and the drift update below this many ps/s.
    pub drift_tolerance_ps_per_s: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            window_ps: DEFAULT_WINDOW_PS,
            core_ps: DEFAULT_CORE_PS,
            search_range_ps: DEFAULT_SEARCH_RANGE_PS,
            coarse_bin_ps: DEFAULT_COARSE_BIN_PS,
            max_iterations: 20,
            tolerance_ps: 2.0,
            drift_tolerance_ps_per_s: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub adjustments: AdjustmentSet,
    /// Offset from the cross-difference peak alone, before refinement.
    pub initial_offset_ps: f64,
    /// Delay fit of the final iteration (residual corrections).
    pub last_fit: DelayFit,
    pub iterations: usize,
    pub converged: bool,
}

impl Calibration {
    /// Report keys beyond the adjustment keys.
    pub const DIAGNOSTIC_KEYS: [&'static str; 6] = [
        "initial_offset_ps",
        "fit_rms_residual_ps",
        "fit_class_medians_a0",
        "fit_class_medians_a1",
        "iterations",
        "converged",
    ];

    /// `key = value` report: the adjustment keys plus diagnostics.
    pub fn to_kv(&self) -> KvMap {
        let mut kv = self.adjustments.to_kv();
        kv.set("initial_offset_ps", self.initial_offset_ps);
        kv.set("fit_rms_residual_ps", self.last_fit.rms_residual_ps);
        kv.set("fit_class_medians_a0", pair(&self.last_fit.class_medians[0]));
        kv.set("fit_class_medians_a1", pair(&self.last_fit.class_medians[1]));
        kv.set("iterations", self.iterations);
        kv.set("converged", self.converged);
        kv
    }
}

/// Full calibration: coarse offset, then alternating drift and delay fits on
/// re-matched data until the updates settle.
///
/// Each refit sees data corrected by all previous estimates, which removes the
/// bias the fixed core window puts on off-center classes.
pub fn calibrate(
    alice: &EventStream,
    bob: &EventStream,
    opts: &CalibrationOptions,
) -> Result<Calibration, CalibrationError> {
    debug_assert!(alice.side() == Side::Alice && bob.side() == Side::Bob);
    let initial = estimate_offset(alice, bob, opts.search_range_ps, opts.coarse_bin_ps)?;
    let mut adj = AdjustmentSet::offset(initial);
    let mut last_fit = None;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations && !converged {
        iterations += 1;
        let set = match_streams(alice, bob, &adj, Side::Alice, opts.window_ps);
        let drift = estimate_drift(&set, opts.core_ps)?;
        adj.drift_ps_per_s += drift;

        let set = match_streams(alice, bob, &adj, Side::Alice, opts.window_ps);
        let fit = estimate_channel_delays(&set, opts.core_ps)?;
        fit.apply(&mut adj);
        converged = drift.abs() < opts.drift_tolerance_ps_per_s
            && fit.delay_a[1].abs() < opts.tolerance_ps
            && fit.delay_b[1].abs() < opts.tolerance_ps
            && fit.residual_offset_ps.abs() < opts.tolerance_ps;
        log::debug!("calibration iteration {iterations}: drift {drift:+.3} ps/s, fit {fit:?}");
        last_fit = Some(fit);
    }
    if !converged {
        log::warn!("calibration did not settle within {} iterations", opts.max_iterations);
    }
    Ok(Calibration {
        adjustments: adj,
        initial_offset_ps: initial,
        last_fit: last_fit.expect("at least one iteration"),
        iterations,
        converged,
    })
}
