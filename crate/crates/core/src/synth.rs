//! Deterministic generator of paired Alice/Bob event streams.
//!
//! Photon pairs arrive as a Poisson process. Each station holds a random
//! analyzer setting that is re-drawn on a fixed switching grid; after an actual
//! change of setting the station is blind for `switch_dead_ps`. Outcomes follow
//! the visibility-damped cosine law. Instrumental artifacts (clock offset,
//! linear drift, per-detector delays, and a broad timing component on a
//! fraction of Bob's pair events) are injected with known values so the
//! calibration estimators can be scored against them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use thiserror::Error;

use crate::kv::{pair, KvError, KvMap};
use crate::types::{
    quantize, EventRecord, EventStream, RunMetadata, SettingMap, Side, DEFAULT_TICK_PS, PS_PER_S,
};

/// Drift rates above this are implausible for the reference clocks and logged.
pub const DRIFT_WARN_PS_PER_S: f64 = 200.0;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Kv(#[from] KvError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub duration_s: f64,
    pub pair_rate_hz: f64,
    pub efficiency_a: f64,
    pub efficiency_b: f64,
    pub visibility: f64,
    /// Standard deviation of the relative Alice-Bob timing jitter. Each station
    /// contributes `jitter_sigma_ps / sqrt(2)`.
    pub jitter_sigma_ps: f64,
    /// Background rate per detector.
    pub background_rate_hz: f64,
    pub switch_period_ps: i64,
    pub switch_dead_ps: i64,
    pub switching_enabled_a: bool,
    pub switching_enabled_b: bool,
    pub seed: u64,
    pub tick_ps: i64,
    pub run_id: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            duration_s: 10.0,
            pair_rate_hz: 20_000.0,
            efficiency_a: 1.0,
            efficiency_b: 1.0,
            visibility: 1.0,
            jitter_sigma_ps: 400.0,
            background_rate_hz: 0.0,
            switch_period_ps: 100_000,
            switch_dead_ps: 14_000,
            switching_enabled_a: true,
            switching_enabled_b: true,
            seed: 1,
            tick_ps: DEFAULT_TICK_PS,
            run_id: "synth".into(),
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), SynthError> {
    if ok {
        Ok(())
    } else {
        Err(SynthError::ConfigInvalid(msg()))
    }
}

fn unit(name: &str, v: f64) -> Result<(), SynthError> {
    check((0.0..=1.0).contains(&v), || format!("{name} = {v} must lie in [0, 1]"))
}

fn non_negative(name: &str, v: f64) -> Result<(), SynthError> {
    check(v.is_finite() && v >= 0.0, || format!("{name} = {v} must be finite and >= 0"))
}

impl SynthConfig {
    pub const KEYS: [&'static str; 14] = [
        "duration_s",
        "pair_rate_hz",
        "efficiency_a",
        "efficiency_b",
        "visibility",
        "jitter_sigma_ps",
        "background_rate_hz",
        "switch_period_ps",
        "switch_dead_ps",
        "switching_enabled_a",
        "switching_enabled_b",
        "seed",
        "tick_ps",
        "run_id",
    ];

    pub fn validate(&self) -> Result<(), SynthError> {
        non_negative("duration_s", self.duration_s)?;
        non_negative("pair_rate_hz", self.pair_rate_hz)?;
        non_negative("background_rate_hz", self.background_rate_hz)?;
        non_negative("jitter_sigma_ps", self.jitter_sigma_ps)?;
        unit("efficiency_a", self.efficiency_a)?;
        unit("efficiency_b", self.efficiency_b)?;
        unit("visibility", self.visibility)?;
        check(self.switch_period_ps > 0, || "switch_period_ps must be positive".into())?;
        check((0..self.switch_period_ps).contains(&self.switch_dead_ps), || {
            "switch_dead_ps must lie in [0, switch_period_ps)".into()
        })?;
        check(self.tick_ps > 0, || "tick_ps must be positive".into())?;
        check(self.duration_s * 1e12 < i64::MAX as f64 / 2.0, || "duration_s too large".into())
    }

    pub fn duration_ps(&self) -> i64 {
        (self.duration_s * PS_PER_S as f64).round() as i64
    }

    pub fn apply_kv(&mut self, kv: &KvMap) -> Result<(), KvError> {
        kv.read_into("duration_s", &mut self.duration_s)?;
        kv.read_into("pair_rate_hz", &mut self.pair_rate_hz)?;
        kv.read_into("efficiency_a", &mut self.efficiency_a)?;
        kv.read_into("efficiency_b", &mut self.efficiency_b)?;
        kv.read_into("visibility", &mut self.visibility)?;
        kv.read_into("jitter_sigma_ps", &mut self.jitter_sigma_ps)?;
        kv.read_into("background_rate_hz", &mut self.background_rate_hz)?;
        kv.read_into("switch_period_ps", &mut self.switch_period_ps)?;
        kv.read_into("switch_dead_ps", &mut self.switch_dead_ps)?;
        kv.read_into("switching_enabled_a", &mut self.switching_enabled_a)?;
        kv.read_into("switching_enabled_b", &mut self.switching_enabled_b)?;
        kv.read_into("seed", &mut self.seed)?;
        kv.read_into("tick_ps", &mut self.tick_ps)?;
        kv.read_into("run_id", &mut self.run_id)
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.set("duration_s", self.duration_s);
        kv.set("pair_rate_hz", self.pair_rate_hz);
        kv.set("efficiency_a", self.efficiency_a);
        kv.set("efficiency_b", self.efficiency_b);
        kv.set("visibility", self.visibility);
        kv.set("jitter_sigma_ps", self.jitter_sigma_ps);
        kv.set("background_rate_hz", self.background_rate_hz);
        kv.set("switch_period_ps", self.switch_period_ps);
        kv.set("switch_dead_ps", self.switch_dead_ps);
        kv.set("switching_enabled_a", self.switching_enabled_a);
        kv.set("switching_enabled_b", self.switching_enabled_b);
        kv.set("seed", self.seed);
        kv.set("tick_ps", self.tick_ps);
        kv.set("run_id", &self.run_id);
        kv
    }

    pub fn schedule(&self, side: Side) -> SettingSchedule {
        let enabled = match side {
            Side::Alice => self.switching_enabled_a,
            Side::Bob => self.switching_enabled_b,
        };
        SettingSchedule {
            seed: self.seed,
            side,
            period_ps: self.switch_period_ps,
            dead_ps: self.switch_dead_ps,
            enabled,
        }
    }
}

/// Instrumental artifacts injected into a synthetic run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArtifactConfig {
    /// Bob's clock minus Alice's clock.
    pub clock_offset_ps: f64,
    /// Rate at which Bob's clock runs ahead of Alice's.
    pub drift_ps_per_s: f64,
    /// Extra signal delay per detector at Alice.
    pub delay_a: [f64; 2],
    /// Extra signal delay per detector at Bob.
    pub delay_b: [f64; 2],
    /// Fraction of Bob's pair events that receive a uniform broad shift.
    pub broad_fraction: f64,
    /// Half-width of that broad shift.
    pub broad_width_ps: f64,
}

impl Default for ArtifactConfig {
    fn default() -> Self {
        ArtifactConfig {
            clock_offset_ps: 0.0,
            drift_ps_per_s: 0.0,
            delay_a: [0.0; 2],
            delay_b: [0.0; 2],
            broad_fraction: 0.0,
            broad_width_ps: 20_000.0,
        }
    }
}

impl ArtifactConfig {
    pub const KEYS: [&'static str; 6] = [
        "clock_offset_ps",
        "drift_ps_per_s",
        "delay_a",
        "delay_b",
        "broad_fraction",
        "broad_width_ps",
    ];

    /// Offset, drift and detector delays of the long-distance reference run.
    pub fn longdist() -> Self {
        ArtifactConfig {
            clock_offset_ps: 4_000.0,
            drift_ps_per_s: 50.0,
            delay_a: [0.0, 900.0],
            delay_b: [4_400.0, 4_700.0],
            broad_fraction: 0.15,
            broad_width_ps: 20_000.0,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        check(self.clock_offset_ps.is_finite(), || "clock_offset_ps must be finite".into())?;
        check(self.drift_ps_per_s.is_finite(), || "drift_ps_per_s must be finite".into())?;
        check(
            self.delay_a.iter().chain(&self.delay_b).all(|d| d.is_finite()),
            || "delays must be finite".into(),
        )?;
        unit("broad_fraction", self.broad_fraction)?;
        non_negative("broad_width_ps", self.broad_width_ps)?;
        if self.drift_ps_per_s.abs() > DRIFT_WARN_PS_PER_S {
            log::warn!(
                "drift {} ps/s exceeds the plausible clock range of {} ps/s",
                self.drift_ps_per_s,
                DRIFT_WARN_PS_PER_S
            );
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, kv: &KvMap) -> Result<(), KvError> {
        kv.read_into("clock_offset_ps", &mut self.clock_offset_ps)?;
        kv.read_into("drift_ps_per_s", &mut self.drift_ps_per_s)?;
        kv.read_pair_into("delay_a", &mut self.delay_a)?;
        kv.read_pair_into("delay_b", &mut self.delay_b)?;
        kv.read_into("broad_fraction", &mut self.broad_fraction)?;
        kv.read_into("broad_width_ps", &mut self.broad_width_ps)
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.set("clock_offset_ps", self.clock_offset_ps);
        kv.set("drift_ps_per_s", self.drift_ps_per_s);
        kv.set("delay_a", pair(&self.delay_a));
        kv.set("delay_b", pair(&self.delay_b));
        kv.set("broad_fraction", self.broad_fraction);
        kv.set("broad_width_ps", self.broad_width_ps);
        kv
    }
}

/// Injected artifacts and generation counts for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub artifacts: ArtifactConfig,
    pub pairs_emitted: u64,
    /// Pairs with an event recorded at both stations.
    pub pairs_recorded: u64,
    pub background_a: u64,
    pub background_b: u64,
    pub dead_dropped_a: u64,
    pub dead_dropped_b: u64,
    pub events_a: u64,
    pub events_b: u64,
}

impl GroundTruth {
    pub fn to_kv(&self) -> KvMap {
        let mut kv = self.artifacts.to_kv();
        kv.set("pairs_emitted", self.pairs_emitted);
        kv.set("pairs_recorded", self.pairs_recorded);
        kv.set("background_a", self.background_a);
        kv.set("background_b", self.background_b);
        kv.set("dead_dropped_a", self.dead_dropped_a);
        kv.set("dead_dropped_b", self.dead_dropped_b);
        kv.set("events_a", self.events_a);
        kv.set("events_b", self.events_b);
        kv
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Piecewise-constant random analyzer setting of one station.
///
/// The bit for each switching epoch is a hash of `(seed, side, epoch)`, so the
/// schedule can be queried at any time without storing it.
#[derive(Debug, Clone, Copy)]
pub struct SettingSchedule {
    seed: u64,
    side: Side,
    period_ps: i64,
    dead_ps: i64,
    enabled: bool,
}

impl SettingSchedule {
    fn epoch(&self, t_ps: i64) -> i64 {
        t_ps.div_euclid(self.period_ps)
    }

    fn bit(&self, epoch: i64) -> u8 {
        let salt = match self.side {
            Side::Alice => 0xA11C_E000_0000_0001,
            Side::Bob => 0xB0B0_0000_0000_0002,
        };
        (splitmix64(self.seed ^ salt ^ splitmix64(epoch as u64)) & 1) as u8
    }

    /// Setting in force at local time `t_ps`. Constant 0 when switching is off.
    pub fn setting_at(&self, t_ps: i64) -> u8 {
        if self.enabled {
            self.bit(self.epoch(t_ps))
        } else {
            0
        }
    }

    /// True if the setting changed at the start of this epoch and the switch
    /// is still in progress.
    pub fn is_dead(&self, t_ps: i64) -> bool {
        if !self.enabled {
            return false;
        }
        let epoch = self.epoch(t_ps);
        t_ps - epoch * self.period_ps < self.dead_ps && self.bit(epoch) != self.bit(epoch - 1)
    }
}

/// Draws a pair of +/-1 outcomes with
/// `P(o_a, o_b) = (1 + o_a o_b V cos 2(angle_a - angle_b)) / 4`.
pub fn sample_outcome<R: Rng + ?Sized>(angle_a: f64, angle_b: f64, visibility: f64, rng: &mut R) -> (i8, i8) {
    let o_a = if rng.random::<bool>() { 1 } else { -1 };
    let corr = visibility * (2.0 * (angle_a - angle_b).to_radians()).cos();
    let same = rng.random::<f64>() < 0.5 * (1.0 + corr);
    (o_a, if same { o_a } else { -o_a })
}

/// The joint outcome probability that [`sample_outcome`] draws from.
pub fn outcome_probability(o_a: i8, o_b: i8, angle_a: f64, angle_b: f64, visibility: f64) -> f64 {
    let corr = visibility * (2.0 * (angle_a - angle_b).to_radians()).cos();
    0.25 * (1.0 + (o_a * o_b) as f64 * corr)
}

/// Arrival times of a Poisson process of `rate_hz` over `[0, duration_ps)`.
fn poisson_times<R: Rng>(rate_hz: f64, duration_ps: i64, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::new();
    if rate_hz <= 0.0 || duration_ps <= 0 {
        return out;
    }
    let gap = Exp::new(rate_hz / PS_PER_S as f64).expect("positive rate");
    let mut t = gap.sample(rng);
    while t < duration_ps as f64 {
        out.push(t);
        t += gap.sample(rng);
    }
    out
}

/// Generates both stations' streams for one run. Identical inputs give
/// identical outputs.
pub fn generate_run(
    cfg: &SynthConfig,
    art: &ArtifactConfig,
) -> Result<(EventStream, EventStream, GroundTruth), SynthError> {
    cfg.validate()?;
    art.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let duration_ps = cfg.duration_ps();
    let angles = SettingMap::default();
    let sched_a = cfg.schedule(Side::Alice);
    let sched_b = cfg.schedule(Side::Bob);
    let station_jitter = Normal::new(0.0, cfg.jitter_sigma_ps / std::f64::consts::SQRT_2)
        .map_err(|e| SynthError::ConfigInvalid(e.to_string()))?;

    let mut truth = GroundTruth {
        artifacts: *art,
        pairs_emitted: 0,
        pairs_recorded: 0,
        background_a: 0,
        background_b: 0,
        dead_dropped_a: 0,
        dead_dropped_b: 0,
        events_a: 0,
        events_b: 0,
    };
    let mut raw_a: Vec<(f64, u8, u8)> = Vec::new();
    let mut raw_b: Vec<(f64, u8, u8)> = Vec::new();

    let emissions = poisson_times(cfg.pair_rate_hz, duration_ps, &mut rng);
    truth.pairs_emitted = emissions.len() as u64;
    for &t in &emissions {
        // every draw happens unconditionally so the random sequence does not
        // depend on which events survive
        let seen_a = rng.random::<f64>() < cfg.efficiency_a;
        let seen_b = rng.random::<f64>() < cfg.efficiency_b;
        let t_local = t.round() as i64;
        let set_a = sched_a.setting_at(t_local);
        let set_b = sched_b.setting_at(t_local);
        let (o_a, o_b) = sample_outcome(
            angles.base_angle(Side::Alice, set_a),
            angles.base_angle(Side::Bob, set_b),
            cfg.visibility,
            &mut rng,
        );
        let det_a = u8::from(o_a < 0);
        let det_b = u8::from(o_b < 0);
        let jit_a = station_jitter.sample(&mut rng);
        let jit_b = station_jitter.sample(&mut rng);
        let broad = rng.random::<f64>() < art.broad_fraction;
        let broad_shift = rng.random_range(-1.0..=1.0) * art.broad_width_ps;

        let dead_a = sched_a.is_dead(t_local);
        let dead_b = sched_b.is_dead(t_local);
        truth.dead_dropped_a += u64::from(seen_a && dead_a);
        truth.dead_dropped_b += u64::from(seen_b && dead_b);
        let keep_a = seen_a && !dead_a;
        let keep_b = seen_b && !dead_b;
        if keep_a {
            raw_a.push((t + jit_a + art.delay_a[det_a as usize], set_a, det_a));
        }
        if keep_b {
            let mut tb = t + jit_b + art.delay_b[det_b as usize];
            if broad {
                tb += broad_shift;
            }
            tb += art.clock_offset_ps + art.drift_ps_per_s * t / PS_PER_S as f64;
            raw_b.push((tb, set_b, det_b));
        }
        truth.pairs_recorded += u64::from(keep_a && keep_b);
    }

    for (side, sched, raw, count, dropped) in [
        (Side::Alice, &sched_a, &mut raw_a, &mut truth.background_a, &mut truth.dead_dropped_a),
        (Side::Bob, &sched_b, &mut raw_b, &mut truth.background_b, &mut truth.dead_dropped_b),
    ] {
        for detector in 0..2u8 {
            for t in poisson_times(cfg.background_rate_hz, duration_ps, &mut rng) {
                let t_local = t.round() as i64;
                if sched.is_dead(t_local) {
                    *dropped += 1;
                    continue;
                }
                raw.push((t, sched.setting_at(t_local), detector));
                *count += 1;
            }
        }
        log::debug!("{side}: {} raw events", raw.len());
    }

    let meta = RunMetadata {
        run_id: cfg.run_id.clone(),
        tick_ps: cfg.tick_ps,
        duration_ps,
    };
    let finish = |side: Side, raw: Vec<(f64, u8, u8)>| {
        let events = raw
            .into_iter()
            .map(|(t, s, d)| (quantize(t.round() as i64, cfg.tick_ps), s, d))
            .filter(|(t, _, _)| t.0 >= 0)
            .map(|(t, s, d)| EventRecord::new(t, s, d).expect("binary setting and detector"))
            .collect();
        EventStream::from_unsorted(side, events, meta.clone()).expect("valid tick")
    };
    let a = finish(Side::Alice, raw_a);
    let b = finish(Side::Bob, raw_b);
    truth.events_a = a.len() as u64;
    truth.events_b = b.len() as u64;
    Ok((a, b, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(duration_s: f64) -> SynthConfig {
        SynthConfig {
            duration_s,
            ..Default::default()
        }
    }

    #[test]
    fn outcome_table_normalized() {
        for &(a, b, v) in &[(0.0, 22.5, 1.0), (45.0, 67.5, 0.6), (0.0, 0.0, 0.0)] {
            let mut total = 0.0;
            let mut e = 0.0;
            for oa in [1i8, -1] {
                for ob in [1i8, -1] {
                    let p = outcome_probability(oa, ob, a, b, v);
                    total += p;
                    e += (oa * ob) as f64 * p;
                }
            }
            assert!((total - 1.0).abs() < 1e-12);
            assert!((e - v * (2.0f64 * (a - b)).to_radians().cos()).abs() < 1e-12);
        }
        let ppp = outcome_probability(1, 1, 0.0, 22.5, 1.0);
        assert!((ppp - 0.426777).abs() < 1e-6);
        for (oa, ob) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
            assert_eq!(outcome_probability(oa, ob, 10.0, 70.0, 0.0), 0.25);
        }
    }

    #[test]
    fn sampled_outcomes_follow_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let mut counts = [[0u32; 2]; 2];
        for _ in 0..n {
            let (oa, ob) = sample_outcome(0.0, 22.5, 1.0, &mut rng);
            counts[(oa < 0) as usize][(ob < 0) as usize] += 1;
        }
        for (i, oa) in [1i8, -1].into_iter().enumerate() {
            for (j, ob) in [1i8, -1].into_iter().enumerate() {
                let p = outcome_probability(oa, ob, 0.0, 22.5, 1.0);
                let sigma = (p * (1.0 - p) / n as f64).sqrt();
                let got = counts[i][j] as f64 / n as f64;
                assert!((got - p).abs() < 5.0 * sigma, "{oa} {ob}: {got} vs {p}");
            }
        }
        let mut same = 0;
        for _ in 0..10_000 {
            let (oa, ob) = sample_outcome(0.0, 0.0, 1.0, &mut rng);
            same += (oa == ob) as u32;
        }
        assert_eq!(same, 10_000);
    }

    #[test]
    fn empty_when_no_rates() {
        let cfg = SynthConfig {
            pair_rate_hz: 0.0,
            background_rate_hz: 0.0,
            ..quick(1.0)
        };
        let (a, b, t) = generate_run(&cfg, &ArtifactConfig::default()).unwrap();
        assert!(a.is_empty() && b.is_empty());
        assert_eq!(t.pairs_emitted, 0);
        let zero = SynthConfig { duration_s: 0.0, ..quick(1.0) };
        let (a, b, _) = generate_run(&zero, &ArtifactConfig::default()).unwrap();
        assert!(a.is_empty() && b.is_empty());
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig {
            background_rate_hz: 1_000.0,
            ..quick(0.2)
        };
        let art = ArtifactConfig::longdist();
        let first = generate_run(&cfg, &art).unwrap();
        let second = generate_run(&cfg, &art).unwrap();
        assert_eq!(first, second);
        let other = generate_run(&SynthConfig { seed: 2, ..cfg }, &art).unwrap();
        assert_ne!(first.0, other.0);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = [
            SynthConfig { visibility: 1.5, ..quick(1.0) },
            SynthConfig { pair_rate_hz: -1.0, ..quick(1.0) },
            SynthConfig { efficiency_b: -0.1, ..quick(1.0) },
            SynthConfig { switch_dead_ps: 200_000, ..quick(1.0) },
            SynthConfig { tick_ps: 0, ..quick(1.0) },
            SynthConfig { duration_s: f64::NAN, ..quick(1.0) },
        ];
        for cfg in bad {
            assert!(matches!(
                generate_run(&cfg, &ArtifactConfig::default()),
                Err(SynthError::ConfigInvalid(_))
            ));
        }
        let art = ArtifactConfig { broad_fraction: 2.0, ..Default::default() };
        assert!(generate_run(&quick(0.01), &art).is_err());
    }

    #[test]
    fn dead_time_respected() {
        let cfg = SynthConfig {
            jitter_sigma_ps: 0.0,
            tick_ps: 1,
            background_rate_hz: 5_000.0,
            ..quick(0.5)
        };
        let (a, b, truth) = generate_run(&cfg, &ArtifactConfig::default()).unwrap();
        assert!(truth.dead_dropped_a > 0 && truth.dead_dropped_b > 0);
        for (stream, side) in [(&a, Side::Alice), (&b, Side::Bob)] {
            let sched = cfg.schedule(side);
            for e in stream.events() {
                assert!(!sched.is_dead(e.t.0), "{side} event at {} inside switch", e.t);
                assert_eq!(e.setting(), sched.setting_at(e.t.0));
            }
        }
    }

    #[test]
    fn constant_setting_when_switching_off() {
        let cfg = SynthConfig {
            switching_enabled_a: false,
            switching_enabled_b: false,
            ..quick(0.1)
        };
        let (a, b, truth) = generate_run(&cfg, &ArtifactConfig::default()).unwrap();
        assert_eq!(truth.dead_dropped_a + truth.dead_dropped_b, 0);
        assert!(a.events().iter().chain(b.events()).all(|e| e.setting() == 0));
    }

    #[test]
    fn marginals_unbiased() {
        let cfg = SynthConfig { visibility: 0.9, ..quick(2.0) };
        let (a, _, _) = generate_run(&cfg, &ArtifactConfig::default()).unwrap();
        for setting in 0..2 {
            let evs: Vec<_> = a.events().iter().filter(|e| e.setting() == setting).collect();
            let n = evs.len() as f64;
            let plus = evs.iter().filter(|e| e.detector() == 0).count() as f64;
            assert!((plus / n - 0.5).abs() < 4.0 * (0.25 / n).sqrt());
        }
    }

    #[test]
    fn timestamps_quantized() {
        let (a, b, _) = generate_run(&quick(0.05), &ArtifactConfig::longdist()).unwrap();
        assert!(a.events().iter().chain(b.events()).all(|e| e.t.0 % 75 == 0 && e.t.0 >= 0));
    }

    #[test]
    fn config_kv_round_trip() {
        let cfg = SynthConfig {
            visibility: 0.6,
            switching_enabled_b: false,
            run_id: "x1".into(),
            ..Default::default()
        };
        let mut back = SynthConfig::default();
        back.apply_kv(&cfg.to_kv()).unwrap();
        assert_eq!(back, cfg);
        let art = ArtifactConfig::longdist();
        let mut back = ArtifactConfig::default();
        back.apply_kv(&art.to_kv()).unwrap();
        assert_eq!(back, art);
    }
}
