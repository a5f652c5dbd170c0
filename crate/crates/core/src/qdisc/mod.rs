//! The bottleneck FIFO and its admission disciplines.
//!
//! A discipline only *decides*: it inspects the buffer and the arriving
//! packet and returns an [`EnqueueDecision`]. [`Qdisc`] owns the buffer,
//! maintains the average queue length and applies decisions. Drawn
//! candidates are index samples, so packets that fail to match never
//! leave the buffer and FIFO order is untouched.

mod discipline;
mod factors;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::engine::{SimRng, SimTime};

pub use discipline::{
    enqueue_choke, enqueue_choked, enqueue_droptail, enqueue_gchoke, enqueue_red,
};
pub use factors::{
    drawing_factor, drawing_split, partition_regions, red_drop_probability, update_avg_queue,
};

pub type FlowId = u32;

/// A data packet travelling from a source to its sink.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub flow_id: FlowId,
    pub seq: u64,
    pub size_bits: u32,
    /// Stamped when the bottleneck admits the packet.
    pub enqueue_time: SimTime,
    pub is_retransmission: bool,
}

impl Packet {
    pub fn new(flow_id: FlowId, seq: u64, size_bits: u32) -> Self {
        Packet {
            flow_id,
            seq,
            size_bits,
            enqueue_time: SimTime::ZERO,
            is_retransmission: false,
        }
    }

    pub fn retransmission(mut self) -> Self {
        self.is_retransmission = true;
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("buffer capacity must be at least 2 packets, got {0}")]
    Buffer(usize),
    #[error("thresholds must satisfy 0 < t_min < t_max <= buffer (t_min = {t_min}, t_max = {t_max}, buffer = {buffer})")]
    Thresholds {
        t_min: usize,
        t_max: usize,
        buffer: usize,
    },
    #[error("{name} must lie in (0, 1], got {value}")]
    Fraction { name: &'static str, value: f64 },
    #[error("maxcomp must be at least 1")]
    MaxComp,
}

/// Thresholds and weights shared by all disciplines. All sizes are in
/// packets.
#[derive(Debug, Clone, PartialEq)]
pub struct QdiscParams {
    pub buffer_capacity: usize,
    pub t_min: usize,
    pub t_max: usize,
    pub w_q: f64,
    pub max_p: f64,
    /// Upper bound on successive gCHOKe draws.
    pub maxcomp: u32,
}

impl Default for QdiscParams {
    fn default() -> Self {
        QdiscParams {
            buffer_capacity: 100,
            t_min: 40,
            t_max: 80,
            w_q: 0.02,
            max_p: 0.1,
            maxcomp: 3,
        }
    }
}

impl QdiscParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if self.buffer_capacity < 2 {
            return Err(ParamError::Buffer(self.buffer_capacity));
        }
        if self.t_min == 0 || self.t_min >= self.t_max || self.t_max > self.buffer_capacity {
            return Err(ParamError::Thresholds {
                t_min: self.t_min,
                t_max: self.t_max,
                buffer: self.buffer_capacity,
            });
        }
        for (name, value) in [("w_q", self.w_q), ("max_p", self.max_p)] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(ParamError::Fraction { name, value });
            }
        }
        if self.maxcomp == 0 {
            return Err(ParamError::MaxComp);
        }
        Ok(())
    }
}

/// The admission schemes implemented here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DisciplineKind {
    DropTail,
    Red,
    Choke,
    GChoke,
    ChokeD,
}

impl DisciplineKind {
    pub const ALL: [DisciplineKind; 5] = [
        DisciplineKind::DropTail,
        DisciplineKind::Red,
        DisciplineKind::Choke,
        DisciplineKind::GChoke,
        DisciplineKind::ChokeD,
    ];

    /// The four AQM schemes compared in every sweep.
    pub const COMPARED: [DisciplineKind; 4] = [
        DisciplineKind::Red,
        DisciplineKind::Choke,
        DisciplineKind::GChoke,
        DisciplineKind::ChokeD,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DisciplineKind::DropTail => "droptail",
            DisciplineKind::Red => "red",
            DisciplineKind::Choke => "choke",
            DisciplineKind::GChoke => "gchoke",
            DisciplineKind::ChokeD => "choked",
        }
    }
}

impl fmt::Display for DisciplineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown discipline `{0}` (expected droptail, red, choke, gchoke or choked)")]
pub struct UnknownDiscipline(pub String);

impl FromStr for DisciplineKind {
    type Err = UnknownDiscipline;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DisciplineKind::ALL
            .into_iter()
            .find(|d| d.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownDiscipline(s.to_string()))
    }
}

/// The buffer and the congestion indicator, as seen by a discipline.
#[derive(Debug, Clone)]
pub struct QdiscState {
    pub buffer: VecDeque<Packet>,
    /// Average queue length `Q_a` in packets.
    pub avg_queue: f64,
    pub params: QdiscParams,
}

impl QdiscState {
    pub fn new(params: QdiscParams) -> Self {
        QdiscState {
            buffer: VecDeque::with_capacity(params.buffer_capacity),
            avg_queue: 0.0,
            params,
        }
    }

    /// Instantaneous queue length `Q_c`.
    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.buffer.len() >= self.params.buffer_capacity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Admit,
    DropArriving,
    /// Queued packets of the arriving flow were drawn and dropped together
    /// with the arriving packet.
    MatchDrop,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Admit => "admit",
            Outcome::DropArriving => "drop_arriving",
            Outcome::MatchDrop => "match_drop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnqueueDecision {
    pub outcome: Outcome,
    /// Buffer indices (head = 0) to remove; non-empty only for `MatchDrop`.
    pub dropped_queue_positions: Vec<usize>,
    pub draws_performed: u32,
    /// Most draws this discipline may perform for the arrival, when it
    /// draws at all.
    pub draw_budget: Option<u32>,
}

impl EnqueueDecision {
    pub fn admit() -> Self {
        Self::simple(Outcome::Admit)
    }

    pub fn drop_arriving() -> Self {
        Self::simple(Outcome::DropArriving)
    }

    fn simple(outcome: Outcome) -> Self {
        EnqueueDecision {
            outcome,
            dropped_queue_positions: Vec::new(),
            draws_performed: 0,
            draw_budget: None,
        }
    }
}

/// Admission logic of one queue discipline. Implementations must not
/// assume anything about the buffer beyond what `state` exposes, and must
/// only name positions of packets from the arriving packet's flow.
pub trait QueueDiscipline: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// Decides the fate of `arriving`. `state.avg_queue` already accounts
    /// for this arrival.
    fn decide(&self, state: &QdiscState, arriving: &Packet, rng: &mut SimRng) -> EnqueueDecision;
}

impl QueueDiscipline for DisciplineKind {
    fn name(&self) -> &str {
        DisciplineKind::name(*self)
    }

    fn decide(&self, state: &QdiscState, arriving: &Packet, rng: &mut SimRng) -> EnqueueDecision {
        match self {
            DisciplineKind::DropTail => enqueue_droptail(state, arriving),
            DisciplineKind::Red => enqueue_red(state, arriving, rng),
            DisciplineKind::Choke => enqueue_choke(state, arriving, rng),
            DisciplineKind::GChoke => enqueue_gchoke(state, arriving, rng),
            DisciplineKind::ChokeD => enqueue_choked(state, arriving, rng),
        }
    }
}

/// What happened to one arrival, as reported to observers.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalRecord {
    pub time: SimTime,
    pub flow_id: FlowId,
    pub outcome: Outcome,
    pub draws_performed: u32,
    pub draw_budget: Option<u32>,
    /// Queue length found by the arrival.
    pub q_c: usize,
    /// Average queue after the arrival's update.
    pub q_a: f64,
}

/// Receives one record per packet arrival at the bottleneck.
pub trait QueueObserver {
    fn on_arrival(&mut self, record: &ArrivalRecord);
}

/// Result of offering a packet to the queue.
#[derive(Debug)]
pub struct Admission {
    pub record: ArrivalRecord,
    /// Every packet that left the system because of this arrival: matched
    /// queue packets first, then the arriving packet if it was refused.
    pub dropped: Vec<Packet>,
}

/// The bottleneck queue.
#[derive(Debug)]
pub struct Qdisc {
    state: QdiscState,
    discipline: Box<dyn QueueDiscipline>,
}

impl Qdisc {
    pub fn new(params: QdiscParams, discipline: Box<dyn QueueDiscipline>) -> Result<Self, ParamError> {
        params.validate()?;
        Ok(Qdisc {
            state: QdiscState::new(params),
            discipline,
        })
    }

    pub fn with_kind(params: QdiscParams, kind: DisciplineKind) -> Result<Self, ParamError> {
        Self::new(params, Box::new(kind))
    }

    pub fn state(&self) -> &QdiscState {
        &self.state
    }

    pub fn discipline_name(&self) -> &str {
        self.discipline.name()
    }

    pub fn len(&self) -> usize {
        self.state.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state.is_empty()
    }

    pub fn avg_queue(&self) -> f64 {
        self.state.avg_queue
    }

    /// Updates the average, asks the discipline, and applies its decision.
    pub fn enqueue(&mut self, mut packet: Packet, now: SimTime, rng: &mut SimRng) -> Admission {
        let q_c = self.state.len();
        let flow_id = packet.flow_id;
        self.state.avg_queue = update_avg_queue(self.state.avg_queue, q_c, self.state.params.w_q);

        let mut decision = self.discipline.decide(&self.state, &packet, rng);
        if decision.outcome == Outcome::Admit && self.state.is_full() {
            decision.outcome = Outcome::DropArriving;
        }

        let mut dropped = Vec::new();
        match decision.outcome {
            Outcome::Admit => {
                packet.enqueue_time = now;
                self.state.buffer.push_back(packet);
            }
            Outcome::DropArriving => dropped.push(packet),
            Outcome::MatchDrop => {
                let mut positions = decision.dropped_queue_positions.clone();
                positions.sort_unstable_by(|a, b| b.cmp(a));
                positions.dedup();
                for pos in positions {
                    let victim = self
                        .state
                        .buffer
                        .remove(pos)
                        .expect("discipline named a position outside the buffer");
                    assert_eq!(
                        victim.flow_id, packet.flow_id,
                        "match-drop removed a packet of another flow"
                    );
                    dropped.push(victim);
                }
                dropped.push(packet);
            }
        }
        assert!(self.state.len() <= self.state.params.buffer_capacity);

        Admission {
            record: ArrivalRecord {
                time: now,
                flow_id,
                outcome: decision.outcome,
                draws_performed: decision.draws_performed,
                draw_budget: decision.draw_budget,
                q_c,
                q_a: self.state.avg_queue,
            },
            dropped,
        }
    }

    /// Removes the head packet. The average is arrival-driven and is not
    /// touched here.
    pub fn dequeue(&mut self) -> Option<Packet> {
        self.state.buffer.pop_front()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn packets(flows: &[FlowId]) -> Vec<Packet> {
        flows
            .iter()
            .enumerate()
            .map(|(i, &f)| Packet::new(f, i as u64, 8000))
            .collect()
    }

    #[test]
    fn dequeue_is_fifo() {
        let mut q = Qdisc::with_kind(QdiscParams::default(), DisciplineKind::DropTail).unwrap();
        let mut rng = SimRng::new(1);
        for p in packets(&[1, 2, 3]) {
            q.enqueue(p, SimTime::ZERO, &mut rng);
        }
        assert_eq!(q.dequeue().unwrap().flow_id, 1);
        assert_eq!(q.len(), 2);
        assert_eq!(q.dequeue().unwrap().flow_id, 2);
        assert_eq!(q.dequeue().unwrap().flow_id, 3);
        assert!(q.dequeue().is_none());
    }

    #[test]
    fn enqueue_then_dequeue_round_trips() {
        let mut q = Qdisc::with_kind(QdiscParams::default(), DisciplineKind::Red).unwrap();
        let mut rng = SimRng::new(1);
        let x = Packet::new(4, 9, 8000);
        let now = SimTime::from_secs_f64(2.5);
        let adm = q.enqueue(x.clone(), now, &mut rng);
        assert_eq!(adm.record.outcome, Outcome::Admit);
        let out = q.dequeue().unwrap();
        assert_eq!(out.seq, 9);
        assert_eq!(out.enqueue_time, now);
    }

    #[test]
    fn dequeue_leaves_average_alone() {
        let mut q = Qdisc::with_kind(QdiscParams::default(), DisciplineKind::DropTail).unwrap();
        let mut rng = SimRng::new(1);
        for p in packets(&[1; 10]) {
            q.enqueue(p, SimTime::ZERO, &mut rng);
        }
        let avg = q.avg_queue();
        q.dequeue();
        assert_eq!(q.avg_queue(), avg);
    }

    #[test]
    fn average_updates_on_dropped_arrivals_too() {
        let params = QdiscParams {
            buffer_capacity: 2,
            t_min: 1,
            t_max: 2,
            ..QdiscParams::default()
        };
        let mut q = Qdisc::with_kind(params, DisciplineKind::DropTail).unwrap();
        let mut rng = SimRng::new(1);
        for p in packets(&[1, 1]) {
            q.enqueue(p, SimTime::ZERO, &mut rng);
        }
        let before = q.avg_queue();
        let adm = q.enqueue(Packet::new(1, 5, 8000), SimTime::ZERO, &mut rng);
        assert_eq!(adm.record.outcome, Outcome::DropArriving);
        assert!((q.avg_queue() - update_avg_queue(before, 2, 0.02)).abs() < 1e-15);
    }

    #[test]
    fn parse_discipline_names() {
        assert_eq!("CHOKeD".parse::<DisciplineKind>().unwrap(), DisciplineKind::ChokeD);
        assert_eq!("red".parse::<DisciplineKind>().unwrap(), DisciplineKind::Red);
        assert!("fq_codel".parse::<DisciplineKind>().is_err());
    }

    #[test]
    fn params_validation() {
        assert!(QdiscParams::default().validate().is_ok());
        let swapped = QdiscParams {
            t_min: 80,
            t_max: 40,
            ..QdiscParams::default()
        };
        assert!(matches!(swapped.validate(), Err(ParamError::Thresholds { .. })));
        let bad_w = QdiscParams {
            w_q: 0.0,
            ..QdiscParams::default()
        };
        assert!(matches!(bad_w.validate(), Err(ParamError::Fraction { name: "w_q", .. })));
    }

    #[test]
    fn match_drop_removes_only_matching_flow() {
        let mut q = Qdisc::with_kind(QdiscParams::default(), DisciplineKind::ChokeD).unwrap();
        let mut rng = SimRng::new(3);
        for p in packets(&[5; 83]) {
            q.state.buffer.push_back(p);
        }
        q.state.avg_queue = 60.0 / 0.98 - 83.0 * 0.02 / 0.98;
        let adm = q.enqueue(Packet::new(5, 1000, 8000), SimTime::ZERO, &mut rng);
        assert!((adm.record.q_a - 60.0).abs() < 1e-9);
        assert_eq!(adm.record.outcome, Outcome::MatchDrop);
        assert_eq!(adm.dropped.len(), 6);
        assert_eq!(q.len(), 78);
        assert!(adm.dropped.iter().all(|p| p.flow_id == 5));
    }
}
