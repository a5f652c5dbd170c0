//! Admission decisions for DropTail, RED, CHOKe, gCHOKe and CHOKeD.
//!
//! Every function here is pure with respect to the queue: it reads the
//! buffer, consumes randomness, and describes what should happen.

use crate::engine::SimRng;

use super::factors::{drawing_factor, drawing_split, partition_regions, red_drop_probability};
use super::{EnqueueDecision, Outcome, Packet, QdiscState};

enum Zone {
    BelowMin,
    Between,
    AboveMax,
}

fn zone(state: &QdiscState) -> Zone {
    let avg = state.avg_queue;
    if avg < state.params.t_min as f64 {
        Zone::BelowMin
    } else if avg >= state.params.t_max as f64 {
        Zone::AboveMax
    } else {
        Zone::Between
    }
}

fn admit_unless_full(state: &QdiscState) -> Outcome {
    if state.is_full() {
        Outcome::DropArriving
    } else {
        Outcome::Admit
    }
}

/// Probabilistic early drop applied when no match occurred.
fn early_drop(state: &QdiscState, rng: &mut SimRng) -> Outcome {
    if rng.chance(red_drop_probability(state.avg_queue, &state.params)) {
        Outcome::DropArriving
    } else {
        admit_unless_full(state)
    }
}

fn threshold_decision(state: &QdiscState) -> Option<EnqueueDecision> {
    match zone(state) {
        Zone::BelowMin => Some(EnqueueDecision {
            outcome: admit_unless_full(state),
            ..EnqueueDecision::admit()
        }),
        Zone::AboveMax => Some(EnqueueDecision::drop_arriving()),
        Zone::Between => None,
    }
}

pub fn enqueue_droptail(state: &QdiscState, _arriving: &Packet) -> EnqueueDecision {
    EnqueueDecision {
        outcome: admit_unless_full(state),
        ..EnqueueDecision::admit()
    }
}

pub fn enqueue_red(state: &QdiscState, _arriving: &Packet, rng: &mut SimRng) -> EnqueueDecision {
    if let Some(decision) = threshold_decision(state) {
        return decision;
    }
    EnqueueDecision {
        outcome: early_drop(state, rng),
        ..EnqueueDecision::admit()
    }
}

/// One uniform draw from the whole buffer; a match drops both packets.
pub fn enqueue_choke(state: &QdiscState, arriving: &Packet, rng: &mut SimRng) -> EnqueueDecision {
    if let Some(decision) = threshold_decision(state) {
        return decision;
    }
    let budget = Some(1);
    if state.is_empty() {
        return EnqueueDecision {
            outcome: early_drop(state, rng),
            draw_budget: budget,
            ..EnqueueDecision::admit()
        };
    }
    let pos = rng.index(state.len()).expect("buffer is non-empty");
    if state.buffer[pos].flow_id == arriving.flow_id {
        return EnqueueDecision {
            outcome: Outcome::MatchDrop,
            dropped_queue_positions: vec![pos],
            draws_performed: 1,
            draw_budget: budget,
        };
    }
    EnqueueDecision {
        outcome: early_drop(state, rng),
        dropped_queue_positions: Vec::new(),
        draws_performed: 1,
        draw_budget: budget,
    }
}

/// Like CHOKe, but keeps drawing while draws match, up to `maxcomp`
/// draws. Matched packets are excluded from later draws.
pub fn enqueue_gchoke(state: &QdiscState, arriving: &Packet, rng: &mut SimRng) -> EnqueueDecision {
    if let Some(decision) = threshold_decision(state) {
        return decision;
    }
    let maxcomp = state.params.maxcomp;
    let budget = Some(maxcomp);
    let n = state.len();
    let mut matched: Vec<usize> = Vec::new();
    let mut draws = 0;
    while draws < maxcomp && matched.len() < n {
        let pos = nth_unmatched(rng.index(n - matched.len()).expect("range is non-empty"), &matched);
        draws += 1;
        if state.buffer[pos].flow_id != arriving.flow_id {
            break;
        }
        let at = matched.partition_point(|&m| m < pos);
        matched.insert(at, pos);
    }
    if matched.is_empty() {
        return EnqueueDecision {
            outcome: early_drop(state, rng),
            dropped_queue_positions: Vec::new(),
            draws_performed: draws,
            draw_budget: budget,
        };
    }
    EnqueueDecision {
        outcome: Outcome::MatchDrop,
        dropped_queue_positions: matched,
        draws_performed: draws,
        draw_budget: budget,
    }
}

/// Maps the `k`-th position not in `excluded` (sorted ascending) to its
/// buffer index.
fn nth_unmatched(k: usize, excluded: &[usize]) -> usize {
    let mut pos = k;
    for &e in excluded {
        if e <= pos {
            pos += 1;
        } else {
            break;
        }
    }
    pos
}

/// CHOKeD: draw `D_r` candidates from the rear half; on a miss draw `D_f`
/// from the front half; on a second miss fall back to the early-drop
/// probability.
pub fn enqueue_choked(state: &QdiscState, arriving: &Packet, rng: &mut SimRng) -> EnqueueDecision {
    if let Some(decision) = threshold_decision(state) {
        return decision;
    }
    let q_c = state.len();
    let (rear_draws, front_draws) = drawing_split(drawing_factor(q_c, &state.params));
    let budget = Some(rear_draws + front_draws);
    let (front, rear) = partition_regions(q_c);
    let mut draws = 0;

    for (region, count) in [(rear, rear_draws), (front, front_draws)] {
        let picks = rng.sample_distinct(region.len(), count as usize);
        draws += picks.len() as u32;
        let mut matched: Vec<usize> = picks
            .into_iter()
            .map(|i| region.start + i)
            .filter(|&pos| state.buffer[pos].flow_id == arriving.flow_id)
            .collect();
        if !matched.is_empty() {
            matched.sort_unstable();
            return EnqueueDecision {
                outcome: Outcome::MatchDrop,
                dropped_queue_positions: matched,
                draws_performed: draws,
                draw_budget: budget,
            };
        }
    }

    EnqueueDecision {
        outcome: early_drop(state, rng),
        dropped_queue_positions: Vec::new(),
        draws_performed: draws,
        draw_budget: budget,
    }
}
