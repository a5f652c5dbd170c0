//! Traffic sources and sinks.

mod tcp;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, Exp, Geometric};

use crate::engine::{SimDuration, SimRng, SimTime};
use crate::qdisc::{FlowId, Packet};

pub use tcp::{Phase, TcpConfig, TcpError, TcpReaction, TcpState, TcpVariant, TimerAction};

/// ACK size on the reverse path.
pub const ACK_SIZE_BITS: u32 = 320;

/// Cumulative acknowledgement carrying the highest in-order sequence
/// number received so far (`None` until the first in-order packet).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ack {
    pub flow_id: FlowId,
    pub highest_in_order: Option<u64>,
}

impl Ack {
    /// ACK covering every sequence number below `next_expected`.
    pub fn cumulative(flow_id: FlowId, next_expected: u64) -> Self {
        Ack {
            flow_id,
            highest_in_order: next_expected.checked_sub(1),
        }
    }

    pub fn next_expected(&self) -> u64 {
        self.highest_in_order.map_or(0, |s| s + 1)
    }
}

/// Constant-bit-rate source; emission never reacts to the network.
#[derive(Debug, Clone)]
pub struct CbrState {
    pub flow_id: FlowId,
    pub rate_bps: f64,
    pub packet_size_bits: u32,
    pub start: SimTime,
    pub next_emit: SimTime,
    interval: SimDuration,
    emitted: u64,
}

impl CbrState {
    pub fn new(flow_id: FlowId, rate_bps: f64, packet_size_bits: u32, start: SimTime) -> Self {
        CbrState {
            flow_id,
            rate_bps,
            packet_size_bits,
            start,
            next_emit: start,
            interval: SimDuration::transmission(packet_size_bits as u64, rate_bps),
            emitted: 0,
        }
    }

    pub fn interval(&self) -> SimDuration {
        self.interval
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    /// Emits the packet due now and returns it with the next emission time.
    pub fn cbr_emit(&mut self, now: SimTime) -> (Packet, SimTime) {
        debug_assert_eq!(now, self.next_emit);
        let pkt = Packet::new(self.flow_id, self.emitted, self.packet_size_bits);
        self.emitted += 1;
        self.next_emit = self.start + self.interval.saturating_mul(self.emitted);
        (pkt, self.next_emit)
    }
}

/// Receiver side of a flow.
#[derive(Debug, Clone)]
pub enum Sink {
    Tcp(TcpSink),
    Udp(UdpSink),
}

impl Sink {
    /// Accepts a delivered packet; TCP sinks answer with an ACK.
    pub fn sink_on_packet(&mut self, pkt: &Packet) -> Option<Ack> {
        match self {
            Sink::Tcp(s) => Some(s.on_packet(pkt)),
            Sink::Udp(s) => {
                s.on_packet(pkt);
                None
            }
        }
    }

    pub fn bits_received(&self) -> u64 {
        match self {
            Sink::Tcp(s) => s.bits_received,
            Sink::Udp(s) => s.bits_received,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TcpSink {
    pub flow_id: FlowId,
    pub bits_received: u64,
    next_expected: u64,
    out_of_order: BTreeSet<u64>,
}

impl TcpSink {
    pub fn new(flow_id: FlowId) -> Self {
        TcpSink {
            flow_id,
            ..Default::default()
        }
    }

    pub fn on_packet(&mut self, pkt: &Packet) -> Ack {
        self.bits_received += pkt.size_bits as u64;
        if pkt.seq == self.next_expected {
            self.next_expected += 1;
            while self.out_of_order.remove(&self.next_expected) {
                self.next_expected += 1;
            }
        } else if pkt.seq > self.next_expected {
            self.out_of_order.insert(pkt.seq);
        }
        Ack::cumulative(self.flow_id, self.next_expected)
    }
}

#[derive(Debug, Clone, Default)]
pub struct UdpSink {
    pub flow_id: FlowId,
    pub bits_received: u64,
    pub packets_received: u64,
}

impl UdpSink {
    pub fn new(flow_id: FlowId) -> Self {
        UdpSink {
            flow_id,
            ..Default::default()
        }
    }

    pub fn on_packet(&mut self, pkt: &Packet) {
        self.bits_received += pkt.size_bits as u64;
        self.packets_received += 1;
    }
}

/// Application driving a TCP connection.
#[derive(Debug, Clone, PartialEq)]
pub enum AppModel {
    /// Always backlogged.
    Ftp,
    /// Alternating page transfers and think times.
    Http(HttpModel),
}

impl AppModel {
    pub fn name(&self) -> &'static str {
        match self {
            AppModel::Ftp => "ftp",
            AppModel::Http(_) => "http",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpModel {
    /// Mean of the geometric page size (packets, support 1, 2, ...).
    pub page_mean_pkts: f64,
    /// Mean of the exponential think time (seconds).
    pub think_mean_s: f64,
}

impl Default for HttpModel {
    fn default() -> Self {
        HttpModel {
            page_mean_pkts: 12.0,
            think_mean_s: 1.0,
        }
    }
}

/// One page request and the idle period that follows it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HttpStep {
    pub page_size_pkts: u64,
    pub think_time: SimDuration,
}

pub fn http_app_step(model: &HttpModel, rng: &mut SimRng) -> HttpStep {
    let p = 1.0 / model.page_mean_pkts.max(1.0);
    let page = 1 + Geometric::new(p)
        .expect("success probability lies in (0, 1]")
        .sample(rng.inner_mut());
    let think = Exp::new(1.0 / model.think_mean_s)
        .expect("think mean is positive")
        .sample(rng.inner_mut());
    HttpStep {
        page_size_pkts: page,
        think_time: SimDuration::from_secs_f64(think),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlowKind {
    Tcp(TcpVariant),
    Udp,
}

impl fmt::Display for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowKind::Tcp(v) => write!(f, "tcp-{v}"),
            FlowKind::Udp => f.write_str("udp"),
        }
    }
}

impl FromStr for FlowKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "udp" => Ok(FlowKind::Udp),
            other => other
                .strip_prefix("tcp-")
                .ok_or_else(|| format!("unknown flow kind `{other}`"))?
                .parse()
                .map(FlowKind::Tcp),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cbr_interval_at_udp_rate() {
        let s = CbrState::new(1, 2e6, 8000, SimTime::ZERO);
        assert_eq!(s.interval(), SimDuration::from_nanos(4_000_000));
        let s = CbrState::new(1, 1e6, 8000, SimTime::ZERO);
        assert_eq!(s.interval(), SimDuration::from_nanos(8_000_000));
    }

    #[test]
    fn cbr_emission_is_an_exact_arithmetic_sequence() {
        let start = SimTime::from_secs_f64(0.5);
        let mut s = CbrState::new(3, 2e6, 8000, start);
        let mut t = start;
        for k in 0..1000u64 {
            let (pkt, next) = s.cbr_emit(t);
            assert_eq!(pkt.seq, k);
            assert_eq!(t.as_nanos(), start.as_nanos() + k * 4_000_000);
            t = next;
        }
    }

    #[test]
    fn tcp_sink_acks_in_order() {
        let mut sink = TcpSink::new(1);
        let acks: Vec<_> = (0..3)
            .map(|s| sink.on_packet(&Packet::new(1, s, 8000)).highest_in_order)
            .collect();
        assert_eq!(acks, vec![Some(0), Some(1), Some(2)]);
    }

    #[test]
    fn tcp_sink_duplicates_on_gap() {
        let mut sink = TcpSink::new(1);
        let acks: Vec<_> = [0, 2, 3]
            .into_iter()
            .map(|s| sink.on_packet(&Packet::new(1, s, 8000)).highest_in_order)
            .collect();
        assert_eq!(acks, vec![Some(0), Some(0), Some(0)]);
        assert_eq!(sink.on_packet(&Packet::new(1, 1, 8000)).highest_in_order, Some(3));
    }

    #[test]
    fn tcp_sink_before_first_packet() {
        let mut sink = TcpSink::new(1);
        assert_eq!(sink.on_packet(&Packet::new(1, 1, 8000)).next_expected(), 0);
    }

    #[test]
    fn udp_sink_counts_bits_only() {
        let mut sink = Sink::Udp(UdpSink::new(2));
        for s in 0..250 {
            assert!(sink.sink_on_packet(&Packet::new(2, s, 8000)).is_none());
        }
        assert_eq!(sink.bits_received(), 2_000_000);
    }

    #[test]
    fn http_steps_have_requested_means() {
        let model = HttpModel::default();
        let mut rng = SimRng::new(12);
        let n = 50_000;
        let (mut pages, mut think) = (0u64, 0.0);
        for _ in 0..n {
            let step = http_app_step(&model, &mut rng);
            assert!(step.page_size_pkts >= 1);
            pages += step.page_size_pkts;
            think += step.think_time.as_secs_f64();
        }
        let mean_pages = pages as f64 / n as f64;
        let mean_think = think / n as f64;
        assert!((mean_pages - 12.0).abs() < 0.3, "{mean_pages}");
        assert!((mean_think - 1.0).abs() < 0.03, "{mean_think}");
    }

    #[test]
    fn flow_kind_names_round_trip() {
        for k in [FlowKind::Udp, FlowKind::Tcp(TcpVariant::Reno), FlowKind::Tcp(TcpVariant::Vegas)] {
            assert_eq!(k.to_string().parse::<FlowKind>().unwrap(), k);
        }
    }
}
