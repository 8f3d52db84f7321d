//! Correlation and CHSH statistics over mutual coincidence pairs.

use std::fmt::Write as _;

use thiserror::Error;

use crate::matcher::MutualPair;
use crate::types::SymbolCode;

#[derive(Debug, Clone, Copy, Error, PartialEq, Eq)]
pub enum BellError {
    #[error("no coincidences for settings (a={0}, b={1})")]
    EmptyClass(u8, u8),
}

/// Outcome counts for one setting combination.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OutcomeCounts {
    pub pp: u64,
    pub pm: u64,
    pub mp: u64,
    pub mm: u64,
}

impl OutcomeCounts {
    pub fn total(&self) -> u64 {
        self.pp + self.pm + self.mp + self.mm
    }

    fn add(&mut self, o_a: i8, o_b: i8) {
        match (o_a > 0, o_b > 0) {
            (true, true) => self.pp += 1,
            (true, false) => self.pm += 1,
            (false, true) => self.mp += 1,
            (false, false) => self.mm += 1,
        }
    }
}

/// Outcome counts indexed `[setting_a][setting_b]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SettingCounts(pub [[OutcomeCounts; 2]; 2]);

impl SettingCounts {
    pub fn get(&self, setting_a: u8, setting_b: u8) -> &OutcomeCounts {
        &self.0[setting_a as usize][setting_b as usize]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().map(OutcomeCounts::total).sum()
    }

    pub fn record(&mut self, a: SymbolCode, b: SymbolCode) {
        self.0[a.setting() as usize][b.setting() as usize].add(a.outcome(), b.outcome());
    }
}

/// Tallies outcome counts. Callers pass pairs that already exclude multiples.
pub fn tally<'a>(pairs: impl IntoIterator<Item = &'a MutualPair>) -> SettingCounts {
    let mut counts = SettingCounts::default();
    for p in pairs {
        counts.record(p.symbol_a(), p.symbol_b());
    }
    counts
}

/// `E = (n_pp + n_mm - n_pm - n_mp) / n` for one setting combination.
pub fn correlation_e(counts: &SettingCounts, setting_a: u8, setting_b: u8) -> Result<f64, BellError> {
    let c = counts.get(setting_a, setting_b);
    let n = c.total();
    if n == 0 {
        return Err(BellError::EmptyClass(setting_a, setting_b));
    }
    Ok((c.pp as f64 + c.mm as f64 - c.pm as f64 - c.mp as f64) / n as f64)
}

/// Sign of each `E(a, b)` term in S. With Alice at 0/45 degrees and Bob at
/// 22.5/67.5 degrees only `E(0, 1)` is negative for ideal pair statistics.
pub const CHSH_SIGNS: [[f64; 2]; 2] = [[1.0, -1.0], [1.0, 1.0]];

/// `S = E(0,0) - E(0,1) + E(1,0) + E(1,1)`.
pub fn chsh_s(counts: &SettingCounts) -> Result<f64, BellError> {
    let mut s = 0.0;
    for a in 0..2u8 {
        for b in 0..2u8 {
            s += CHSH_SIGNS[a as usize][b as usize] * correlation_e(counts, a, b)?;
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationStat {
    pub setting_a: u8,
    pub setting_b: u8,
    pub counts: OutcomeCounts,
    pub e: f64,
    /// Binomial standard error, `sqrt((1 - E^2) / n)`.
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BellReport {
    pub classes: [[CorrelationStat; 2]; 2],
    pub s: f64,
    pub s_err: f64,
    pub pairs: u64,
}

impl BellReport {
    pub fn from_counts(counts: &SettingCounts) -> Result<Self, BellError> {
        let mut classes = [[None; 2]; 2];
        let mut var = 0.0;
        for a in 0..2u8 {
            for b in 0..2u8 {
                let e = correlation_e(counts, a, b)?;
                let c = *counts.get(a, b);
                let std_err = ((1.0 - e * e).max(0.0) / c.total() as f64).sqrt();
                var += std_err * std_err;
                classes[a as usize][b as usize] = Some(CorrelationStat {
                    setting_a: a,
                    setting_b: b,
                    counts: c,
                    e,
                    std_err,
                });
            }
        }
        Ok(BellReport {
            classes: classes.map(|row| row.map(|c| c.expect("filled"))),
            s: chsh_s(counts)?,
            s_err: var.sqrt(),
            pairs: counts.total(),
        })
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a MutualPair>) -> Result<Self, BellError> {
        Self::from_counts(&tally(pairs))
    }

    pub fn table(&self) -> String {
        let mut out = String::from("a b      n_pp      n_pm      n_mp      n_mm         E     err\n");
        for c in self.classes.iter().flatten() {
            let _ = writeln!(
                out,
                "{} {} {:>9} {:>9} {:>9} {:>9} {:>9.5} {:>7.5}",
                c.setting_a, c.setting_b, c.counts.pp, c.counts.pm, c.counts.mp, c.counts.mm, c.e, c.std_err
            );
        }
        let _ = writeln!(out, "S = {:.5} +/- {:.5} ({} pairs)", self.s, self.s_err, self.pairs);
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("setting_a,setting_b,n_pp,n_pm,n_mp,n_mm,e,std_err\n");
        for c in self.classes.iter().flatten() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.6},{:.6}",
                c.setting_a, c.setting_b, c.counts.pp, c.counts.pm, c.counts.mp, c.counts.mm, c.e, c.std_err
            );
        }
        let _ = writeln!(out, "S,,,,,,{:.6},{:.6}", self.s, self.s_err);
        out
    }
}
