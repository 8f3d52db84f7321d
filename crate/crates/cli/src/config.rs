//! Run configuration: synthesis, artifact and analysis keys in one flat file.
//!
//! Adjustments live in their own file (`offset_ps`, `drift_ps_per_s`,
//! `delay_a`, `delay_b`, `t0_ps`) because several of those names are also
//! artifact keys with the opposite meaning.

use std::fs;
use std::path::{Path, PathBuf};

use coinlab_core::kv::{pair, KvError, KvMap};
use coinlab_core::{
    AdjustmentSet, ArtifactConfig, Calibration, Format, PipelineOptions, SynthConfig,
};

use crate::CliError;

pub const ENV_CONFIG: &str = "COINLAB_CONFIG";

const ANALYSIS_KEYS: [&str; 7] = [
    "window_ps",
    "core_ps",
    "t_range_s",
    "delta_range_ns",
    "hist_half_width_ps",
    "hist_bin_ps",
    "format",
];

pub fn allowed_keys() -> Vec<&'static str> {
    SynthConfig::KEYS
        .iter()
        .chain(&ArtifactConfig::KEYS)
        .chain(&ANALYSIS_KEYS)
        .copied()
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub artifacts: ArtifactConfig,
    pub pipeline: PipelineOptions,
}

impl RunConfig {
    pub fn apply_kv(&mut self, kv: &KvMap) -> Result<(), KvError> {
        kv.check_keys(&allowed_keys())?;
        self.synth.apply_kv(kv)?;
        self.artifacts.apply_kv(kv)?;
        let p = &mut self.pipeline;
        kv.read_into("window_ps", &mut p.calibration.window_ps)?;
        kv.read_into("core_ps", &mut p.calibration.core_ps)?;
        let mut t_range = [p.scatter.t_range_s.0, p.scatter.t_range_s.1];
        kv.read_pair_into("t_range_s", &mut t_range)?;
        p.scatter.t_range_s = (t_range[0], t_range[1]);
        kv.read_into("delta_range_ns", &mut p.scatter.delta_range_ns)?;
        kv.read_into("hist_half_width_ps", &mut p.histogram.half_width_ps)?;
        kv.read_into("hist_bin_ps", &mut p.histogram.bin_ps)?;
        kv.read_into("format", &mut p.format)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.synth.validate().map_err(CliError::config)?;
        self.artifacts.validate().map_err(CliError::config)?;
        let p = &self.pipeline;
        if p.calibration.window_ps <= 0 || p.calibration.core_ps <= 0 {
            return Err(CliError::config("window_ps and core_ps must be positive"));
        }
        if !p.scatter.is_valid() {
            return Err(CliError::config("t_range_s must be increasing and delta_range_ns positive"));
        }
        let h = p.histogram;
        if h.bin_ps <= 0 || h.half_width_ps <= 0 || h.half_width_ps % h.bin_ps != 0 {
            return Err(CliError::config("hist_half_width_ps must be a positive multiple of hist_bin_ps"));
        }
        if p.format == Format::Auto {
            return Err(CliError::config("format must be text or binary for output"));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = self.synth.to_kv();
        kv.extend(&self.artifacts.to_kv());
        let p = &self.pipeline;
        kv.set("window_ps", p.calibration.window_ps);
        kv.set("core_ps", p.calibration.core_ps);
        kv.set("t_range_s", pair(&[p.scatter.t_range_s.0, p.scatter.t_range_s.1]));
        kv.set("delta_range_ns", p.scatter.delta_range_ns);
        kv.set("hist_half_width_ps", p.histogram.half_width_ps);
        kv.set("hist_bin_ps", p.histogram.bin_ps);
        kv.set("format", if p.format == Format::Text { "text" } else { "binary" });
        kv
    }
}

pub fn read_kv(path: &Path) -> Result<KvMap, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    KvMap::parse(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Picks `--config`, falling back to the file named by `COINLAB_CONFIG`.
pub fn config_path(flag: Option<&Path>) -> Option<PathBuf> {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(ENV_CONFIG).filter(|v| !v.is_empty()).map(PathBuf::from))
}

/// `base`, then the config file, then `--set` assignments in order.
pub fn load(base: RunConfig, file: Option<&Path>, sets: &[String]) -> Result<RunConfig, CliError> {
    let mut cfg = base;
    if let Some(path) = config_path(file) {
        let kv = read_kv(&path)?;
        cfg.apply_kv(&kv).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    }
    let mut overrides = KvMap::new();
    for s in sets {
        let (k, v) = KvMap::parse_assignment(s).map_err(CliError::config)?;
        overrides.set(&k, v);
    }
    cfg.apply_kv(&overrides).map_err(CliError::config)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads an adjustments file. A `calibrate` report is accepted as is; its
/// diagnostic keys are ignored.
pub fn load_adjustments(path: &Path) -> Result<AdjustmentSet, CliError> {
    let kv = read_kv(path)?;
    let allowed: Vec<&str> = AdjustmentSet::KEYS.iter().chain(&Calibration::DIAGNOSTIC_KEYS).copied().collect();
    kv.check_keys(&allowed)
        .and_then(|_| AdjustmentSet::from_kv(&kv))
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}
