//! Brute-force reference matcher and stream helpers shared by integration tests.
#![allow(dead_code)]

use coinlab_core::{EventRecord, EventStream, RunMetadata, Side, Timestamp};
use rand::Rng;

/// Partner index and delta for every event of `own`, by full scan.
/// Ties go to the lowest index, i.e. the earliest candidate.
pub fn brute_nearest(own: &[i64], other: &[i64]) -> Vec<(usize, i64)> {
    own.iter()
        .map(|&t| {
            let mut best = (usize::MAX, i64::MAX);
            for (j, &u) in other.iter().enumerate() {
                if (t - u).abs() < best.1.abs() || best.0 == usize::MAX {
                    best = (j, t - u);
                }
            }
            best
        })
        .collect()
}

pub fn brute_count_within(t: i64, other: &[i64], w: i64) -> usize {
    other.iter().filter(|&&u| (t - u).abs() <= w).count()
}

/// Multiple flags for `own`'s nearest-partner records.
pub fn brute_multiples(own: &[i64], other: &[i64], w: i64) -> Vec<bool> {
    brute_nearest(own, other)
        .into_iter()
        .enumerate()
        .map(|(i, (j, _))| brute_count_within(own[i], other, w) >= 2 || brute_count_within(other[j], own, w) >= 2)
        .collect()
}

/// `(alice index, bob index)` of mutual, in-window, unflagged pairs.
pub fn brute_mutual(a: &[i64], b: &[i64], w: i64) -> Vec<(usize, usize)> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let na = brute_nearest(a, b);
    let nb = brute_nearest(b, a);
    let ma = brute_multiples(a, b, w);
    let mb = brute_multiples(b, a, w);
    (0..a.len())
        .filter_map(|i| {
            let (j, d) = na[i];
            (nb[j].0 == i && d.abs() <= w && !ma[i] && !mb[j]).then_some((i, j))
        })
        .collect()
}

pub fn stream(side: Side, events: Vec<EventRecord>) -> EventStream {
    EventStream::from_unsorted(side, events, RunMetadata::default()).expect("valid stream")
}

pub fn stream_from_times(side: Side, times: &[i64]) -> EventStream {
    let events = times
        .iter()
        .enumerate()
        .map(|(i, &t)| EventRecord::new(Timestamp(t), (i % 2) as u8, ((i / 2) % 2) as u8).unwrap())
        .collect();
    stream(side, events)
}

/// Random stream of up to `max_len` events in `[0, span)`. Small spans force
/// equal timestamps on different detectors.
pub fn random_stream<R: Rng>(rng: &mut R, side: Side, max_len: usize, span: i64) -> EventStream {
    let n = rng.random_range(0..=max_len);
    let events = (0..n)
        .map(|_| {
            EventRecord::new(
                Timestamp(rng.random_range(0..span)),
                rng.random_range(0..2),
                rng.random_range(0..2),
            )
            .unwrap()
        })
        .collect();
    stream(side, events)
}

/// Runs the fast matcher on `a`, `b` and compares every output with the
/// brute-force reference. Returns a description of the first mismatch.
pub fn compare_with_oracle(a: &EventStream, b: &EventStream, w: i64) -> Result<(), String> {
    use coinlab_core::matcher::{mutual_pairs, nearest_deltas, tag_multiples};
    let (ta, tb) = (a.times(), b.times());
    let from_a = tag_multiples(nearest_deltas(a, b, w), a, b, w);
    let from_b = tag_multiples(nearest_deltas(b, a, w), b, a, w);
    for (set, own, other) in [(&from_a, &ta, &tb), (&from_b, &tb, &ta)] {
        if other.is_empty() {
            if !set.records.is_empty() {
                return Err("records against an empty stream".into());
            }
            continue;
        }
        let near = brute_nearest(own, other);
        let mult = brute_multiples(own, other, w);
        if set.records.len() != own.len() {
            return Err(format!("{} records for {} events", set.records.len(), own.len()));
        }
        for (i, r) in set.records.iter().enumerate() {
            let got = (r.self_index as usize, r.partner_index as usize, r.delta_ps, r.multiple);
            let want = (i, near[i].0, near[i].1, mult[i]);
            if got != want {
                return Err(format!("{:?} record {i}: got {got:?}, want {want:?}", set.perspective));
            }
        }
    }
    let got: Vec<(usize, usize)> = mutual_pairs(&from_a, &from_b, w)
        .iter()
        .map(|p| (p.alice.self_index as usize, p.bob.self_index as usize))
        .collect();
    let want = brute_mutual(&ta, &tb, w);
    if got != want {
        return Err(format!("mutual pairs differ: got {got:?}, want {want:?}"));
    }
    Ok(())
}
