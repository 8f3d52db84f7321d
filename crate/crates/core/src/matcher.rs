//! Nearest-partner coincidence extraction.
//!
//! For each event at the perspective station the matcher finds the closest
//! event at the other station (after timing adjustment) and records
//! `delta = t_self - t_partner`. A negative delta from Alice's perspective means
//! Alice's event came first. Records whose events have more than one candidate
//! partner inside the coincidence window are tagged as multiples; they stay in
//! the set for plotting but never enter correlation tallies.

use crate::kv::{pair, KvError, KvMap};
use crate::types::{EventRecord, EventStream, Side, SymbolCode, Timestamp, PS_PER_S};

/// Default coincidence window, in picoseconds.
pub const DEFAULT_WINDOW_PS: i64 = 4_000;

/// Timing corrections applied before matching.
///
/// All values follow Alice's sign convention: Bob's event at raw time `t` is
/// moved to `t - offset_ps - drift_ps_per_s * (t - t0_ps) / 1e12 - delay_b[detector]`
/// and Alice's to `t - delay_a[detector]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AdjustmentSet {
    pub offset_ps: f64,
    pub drift_ps_per_s: f64,
    pub delay_a: [f64; 2],
    pub delay_b: [f64; 2],
    pub t0_ps: i64,
}

impl AdjustmentSet {
    pub const KEYS: [&'static str; 5] = ["offset_ps", "drift_ps_per_s", "delay_a", "delay_b", "t0_ps"];

    pub fn offset(offset_ps: f64) -> Self {
        AdjustmentSet {
            offset_ps,
            ..Default::default()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.offset_ps.is_finite()
            && self.drift_ps_per_s.is_finite()
            && self.delay_a.iter().chain(&self.delay_b).all(|d| d.is_finite())
    }

    /// Picoseconds subtracted from an event of `side` at raw time `t`.
    pub fn shift_ps(&self, side: Side, t: Timestamp, detector: u8) -> i64 {
        let shift = match side {
            Side::Alice => self.delay_a[detector as usize],
            Side::Bob => {
                self.offset_ps
                    + self.drift_ps_per_s * (t.0 - self.t0_ps) as f64 / PS_PER_S as f64
                    + self.delay_b[detector as usize]
            }
        };
        shift.round() as i64
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.set("offset_ps", self.offset_ps);
        kv.set("drift_ps_per_s", self.drift_ps_per_s);
        kv.set("delay_a", pair(&self.delay_a));
        kv.set("delay_b", pair(&self.delay_b));
        kv.set("t0_ps", self.t0_ps);
        kv
    }

    /// Reads the adjustment keys from `kv`, leaving absent ones at zero.
    /// Other keys are ignored; callers that want strictness check keys first.
    pub fn from_kv(kv: &KvMap) -> Result<Self, KvError> {
        let mut adj = AdjustmentSet::default();
        kv.read_into("offset_ps", &mut adj.offset_ps)?;
        kv.read_into("drift_ps_per_s", &mut adj.drift_ps_per_s)?;
        kv.read_pair_into("delay_a", &mut adj.delay_a)?;
        kv.read_pair_into("delay_b", &mut adj.delay_b)?;
        kv.read_into("t0_ps", &mut adj.t0_ps)?;
        if !adj.is_finite() {
            return Err(KvError::BadValue {
                key: "adjustments".into(),
                value: format!("{adj:?}"),
                reason: "values must be finite".into(),
            });
        }
        Ok(adj)
    }
}

/// Applies `adj` to a stream according to its side and re-sorts it.
pub fn adjust(stream: &EventStream, adj: &AdjustmentSet) -> EventStream {
    let side = stream.side();
    let mut events: Vec<EventRecord> = stream
        .events()
        .iter()
        .map(|e| e.with_time(e.t - adj.shift_ps(side, e.t, e.detector())))
        .collect();
    // Per-detector shifts preserve order within a detector, so a stable sort
    // cannot create duplicate (t, detector) pairs.
    events.sort_by_key(|e| e.t);
    EventStream::new(side, events, stream.meta.clone()).expect("adjustment preserves stream invariants")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoincidenceRecord {
    /// Time of the perspective station's event.
    pub t: Timestamp,
    /// `t_self - t_partner` in picoseconds.
    pub delta_ps: i64,
    pub symbol_a: SymbolCode,
    pub symbol_b: SymbolCode,
    pub multiple: bool,
    /// Index of the perspective event in its (adjusted) stream.
    pub self_index: u32,
    /// Index of the nearest event in the other (adjusted) stream.
    pub partner_index: u32,
}

/// One record per event of the perspective stream, in stream order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoincidenceSet {
    pub perspective: Side,
    pub window_ps: i64,
    pub records: Vec<CoincidenceRecord>,
}

impl CoincidenceSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn multiples(&self) -> usize {
        self.records.iter().filter(|r| r.multiple).count()
    }

    /// Delta in Alice's sign convention (`t_A - t_B`).
    pub fn alice_delta(&self, r: &CoincidenceRecord) -> i64 {
        match self.perspective {
            Side::Alice => r.delta_ps,
            Side::Bob => -r.delta_ps,
        }
    }
}

/// Index in `other` of the event nearest to `t`, given `p` = first index with
/// `other[p] >= t`. Equidistant candidates resolve to the earlier one.
fn nearest_at(other: &[EventRecord], p: usize, t: Timestamp) -> usize {
    let after = other.get(p).map(|e| e.t - t);
    let before = p.checked_sub(1).map(|q| {
        // first index of the equal-time group ending at q
        let mut q = q;
        while q > 0 && other[q - 1].t == other[q].t {
            q -= 1;
        }
        (q, t - other[q].t)
    });
    match (before, after) {
        (Some((q, db)), Some(da)) if db <= da => q,
        (Some((q, _)), None) => q,
        (_, Some(_)) => p,
        (None, None) => unreachable!("other stream is non-empty"),
    }
}

/// Finds, for every event of `own`, its nearest partner in `other`.
///
/// Both streams must already be adjusted and sorted, and hold fewer than
/// 2^32 events. Linear in `own.len() + other.len()`. An empty `other` yields
/// an empty set.
pub fn nearest_deltas(own: &EventStream, other: &EventStream, window_ps: i64) -> CoincidenceSet {
    assert!(own.len() <= u32::MAX as usize && other.len() <= u32::MAX as usize, "stream too long to index");
    let perspective = own.side();
    let mut set = CoincidenceSet {
        perspective,
        window_ps,
        records: Vec::new(),
    };
    let others = other.events();
    if others.is_empty() {
        if !own.is_empty() {
            log::warn!("{} stream is empty; no coincidences", other.side());
        }
        return set;
    }
    set.records.reserve_exact(own.len());
    let mut p = 0;
    for (i, e) in own.events().iter().enumerate() {
        while p < others.len() && others[p].t < e.t {
            p += 1;
        }
        let j = nearest_at(others, p, e.t);
        let partner = &others[j];
        let (symbol_a, symbol_b) = match perspective {
            Side::Alice => (e.symbol(), partner.symbol()),
            Side::Bob => (partner.symbol(), e.symbol()),
        };
        set.records.push(CoincidenceRecord {
            t: e.t,
            delta_ps: e.t - partner.t,
            symbol_a,
            symbol_b,
            multiple: false,
            self_index: i as u32,
            partner_index: j as u32,
        });
    }
    set
}

/// For each `x` in `xs`, the number of `ys` within `[x - w, x + w]`.
pub fn counts_within(xs: &[EventRecord], ys: &[EventRecord], w: i64) -> Vec<u32> {
    let mut lo = 0;
    let mut hi = 0;
    xs.iter()
        .map(|x| {
            while lo < ys.len() && ys[lo].t.0 < x.t.0 - w {
                lo += 1;
            }
            hi = hi.max(lo);
            while hi < ys.len() && ys[hi].t.0 <= x.t.0 + w {
                hi += 1;
            }
            (hi - lo) as u32
        })
        .collect()
}

/// Flags records whose own event sees two or more partners within `window_ps`,
/// or whose partner sees two or more perspective events within it.
///
/// `own` and `other` must be the streams `set` was built from.
pub fn tag_multiples(
    mut set: CoincidenceSet,
    own: &EventStream,
    other: &EventStream,
    window_ps: i64,
) -> CoincidenceSet {
    assert!(window_ps > 0, "window must be positive");
    debug_assert_eq!(own.side(), set.perspective);
    let own_counts = counts_within(own.events(), other.events(), window_ps);
    let other_counts = counts_within(other.events(), own.events(), window_ps);
    for r in &mut set.records {
        r.multiple = own_counts[r.self_index as usize] >= 2 || other_counts[r.partner_index as usize] >= 2;
    }
    set.window_ps = window_ps;
    set
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MutualPair {
    pub alice: CoincidenceRecord,
    pub bob: CoincidenceRecord,
}

impl MutualPair {
    pub fn symbol_a(&self) -> SymbolCode {
        self.alice.symbol_a
    }

    pub fn symbol_b(&self) -> SymbolCode {
        self.alice.symbol_b
    }
}

/// Pairs of events that are each other's nearest partner, inside the window,
/// and not tagged as multiples.
///
/// `from_alice` and `from_bob` must come from the same adjusted streams.
pub fn mutual_pairs(from_alice: &CoincidenceSet, from_bob: &CoincidenceSet, window_ps: i64) -> Vec<MutualPair> {
    assert_eq!(from_alice.perspective, Side::Alice);
    assert_eq!(from_bob.perspective, Side::Bob);
    from_alice
        .records
        .iter()
        .filter_map(|a| {
            let b = from_bob.records.get(a.partner_index as usize)?;
            let mutual = b.self_index == a.partner_index && b.partner_index == a.self_index;
            (mutual && a.delta_ps.abs() <= window_ps && !a.multiple && !b.multiple)
                .then_some(MutualPair { alice: *a, bob: *b })
        })
        .collect()
}

/// Adjusted streams plus both perspectives' tagged coincidence sets.
#[derive(Debug, Clone)]
pub struct Matched {
    pub alice: EventStream,
    pub bob: EventStream,
    pub from_alice: CoincidenceSet,
    pub from_bob: CoincidenceSet,
}

impl Matched {
    pub fn perspective(&self, side: Side) -> &CoincidenceSet {
        match side {
            Side::Alice => &self.from_alice,
            Side::Bob => &self.from_bob,
        }
    }

    pub fn mutual_pairs(&self) -> Vec<MutualPair> {
        mutual_pairs(&self.from_alice, &self.from_bob, self.from_alice.window_ps)
    }
}

/// Adjusts both streams and computes tagged coincidences from one perspective.
pub fn match_streams(
    alice: &EventStream,
    bob: &EventStream,
    adj: &AdjustmentSet,
    perspective: Side,
    window_ps: i64,
) -> CoincidenceSet {
    let a = adjust(alice, adj);
    let b = adjust(bob, adj);
    let (own, other) = match perspective {
        Side::Alice => (&a, &b),
        Side::Bob => (&b, &a),
    };
    tag_multiples(nearest_deltas(own, other, window_ps), own, other, window_ps)
}

/// Adjusts both streams and computes tagged coincidences from both perspectives.
pub fn match_both(alice: &EventStream, bob: &EventStream, adj: &AdjustmentSet, window_ps: i64) -> Matched {
    let a = adjust(alice, adj);
    let b = adjust(bob, adj);
    let from_alice = tag_multiples(nearest_deltas(&a, &b, window_ps), &a, &b, window_ps);
    let from_bob = tag_multiples(nearest_deltas(&b, &a, window_ps), &b, &a, window_ps);
    Matched {
        alice: a,
        bob: b,
        from_alice,
        from_bob,
    }
}
