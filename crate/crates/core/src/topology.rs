//! Dumbbell construction and store-and-forward links.

use thiserror::Error;

use crate::engine::{SimDuration, SimRng, SimTime};
use crate::harness::{Scenario, ScenarioError};
use crate::qdisc::{FlowId, ParamError, Qdisc};
use crate::transport::{
    AppModel, CbrState, FlowKind, Sink, TcpSink, TcpState, UdpSink, ACK_SIZE_BITS,
};

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("queue parameters: {0}")]
    Queue(#[from] ParamError),
}

/// A serializing link with fixed propagation delay.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub capacity_bps: f64,
    pub prop_delay: SimDuration,
    pub busy_until: SimTime,
}

/// When a transmission frees the link and when the packet reaches the far
/// end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transmission {
    pub start: SimTime,
    pub done: SimTime,
    pub delivered: SimTime,
}

impl Link {
    pub fn new(capacity_bps: f64, prop_delay_s: f64) -> Self {
        Link {
            capacity_bps,
            prop_delay: SimDuration::from_secs_f64(prop_delay_s),
            busy_until: SimTime::ZERO,
        }
    }

    pub fn serialization(&self, bits: u64) -> SimDuration {
        SimDuration::transmission(bits, self.capacity_bps)
    }

    pub fn is_idle(&self, now: SimTime) -> bool {
        self.busy_until <= now
    }

    /// Queues `bits` behind any transmission in progress.
    pub fn link_transmit(&mut self, bits: u64, now: SimTime) -> Transmission {
        let start = now.max(self.busy_until);
        let done = start + self.serialization(bits);
        self.busy_until = done;
        Transmission {
            start,
            done,
            delivered: done + self.prop_delay,
        }
    }
}

/// Traffic generator attached to one sender node.
#[derive(Debug, Clone)]
pub enum Source {
    Tcp { state: TcpState, app: AppModel },
    Cbr(CbrState),
}

#[derive(Debug, Clone)]
pub struct Sender {
    pub flow_id: FlowId,
    pub kind: FlowKind,
    pub source: Source,
    pub access: Link,
    pub start: SimTime,
    /// Fixed ACK path delay back to this sender.
    pub reverse_delay: SimDuration,
}

#[derive(Debug)]
pub struct Dumbbell {
    pub senders: Vec<Sender>,
    pub qdisc: Qdisc,
    pub bottleneck: Link,
    pub sinks: Vec<Sink>,
}

impl Dumbbell {
    pub fn sender(&self, flow: FlowId) -> &Sender {
        &self.senders[flow as usize - 1]
    }

    pub fn sender_mut(&mut self, flow: FlowId) -> &mut Sender {
        &mut self.senders[flow as usize - 1]
    }

    pub fn sink_mut(&mut self, flow: FlowId) -> &mut Sink {
        &mut self.sinks[flow as usize - 1]
    }

    /// Round-trip propagation plus serialization of one data packet and
    /// its ACK on an otherwise idle path.
    pub fn base_rtt(&self, flow: FlowId, packet_bits: u64) -> SimDuration {
        let s = self.sender(flow);
        s.access.serialization(packet_bits)
            + s.access.prop_delay
            + self.bottleneck.serialization(packet_bits)
            + self.bottleneck.prop_delay
            + s.reverse_delay
    }
}

/// Builds senders, the bottleneck and sinks for a validated scenario.
/// TCP start times are drawn from `rng`.
pub fn build_dumbbell(scenario: &Scenario, rng: &mut SimRng) -> Result<Dumbbell, TopologyError> {
    scenario.validate()?;
    let qdisc = Qdisc::with_kind(scenario.qdisc.clone(), scenario.discipline)?;
    let bottleneck = Link::new(scenario.bottleneck.capacity_bps, scenario.bottleneck.delay_s);
    let t = &scenario.traffic;

    let mut senders = Vec::with_capacity(scenario.n_flows());
    let mut sinks = Vec::with_capacity(scenario.n_flows());
    for flow in 1..=scenario.n_flows() as FlowId {
        let access = Link::new(scenario.access_capacity_bps(flow), scenario.access_delay_s(flow));
        let ack_bits = ACK_SIZE_BITS as u64;
        let reverse_delay = bottleneck.serialization(ack_bits)
            + bottleneck.prop_delay
            + access.serialization(ack_bits)
            + access.prop_delay;
        let override_start = scenario.flows.get(&flow).and_then(|o| o.start_s);

        let (kind, source, start, sink) = match scenario.tcp_variant(flow) {
            None => {
                let start = SimTime::from_secs_f64(override_start.unwrap_or(0.0));
                (
                    FlowKind::Udp,
                    Source::Cbr(CbrState::new(flow, t.udp_rate_bps, t.packet_size_bits, start)),
                    start,
                    Sink::Udp(UdpSink::new(flow)),
                )
            }
            Some(variant) => {
                let start = match override_start {
                    Some(s) => s,
                    None => rng.unit() * t.start_spread_s,
                };
                let app = if scenario.is_http(flow) {
                    AppModel::Http(t.http_model.clone())
                } else {
                    AppModel::Ftp
                };
                (
                    FlowKind::Tcp(variant),
                    Source::Tcp {
                        state: TcpState::new(flow, variant, t.packet_size_bits, scenario.tcp.clone()),
                        app,
                    },
                    SimTime::from_secs_f64(start),
                    Sink::Tcp(TcpSink::new(flow)),
                )
            }
        };
        senders.push(Sender {
            flow_id: flow,
            kind,
            source,
            access,
            start,
            reverse_delay,
        });
        sinks.push(sink);
    }

    Ok(Dumbbell {
        senders,
        qdisc,
        bottleneck,
        sinks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::presets;
    use crate::transport::TcpVariant;

    #[test]
    fn idle_link_delivery_time() {
        let mut l = Link::new(1e6, 0.01);
        let now = SimTime::from_secs_f64(1.0);
        let tx = l.link_transmit(8000, now);
        assert_eq!(tx.delivered, SimTime::from_secs_f64(1.018));
        assert_eq!(l.busy_until, SimTime::from_secs_f64(1.008));
    }

    #[test]
    fn back_to_back_serialization() {
        let mut l = Link::new(1e6, 0.01);
        let a = l.link_transmit(8000, SimTime::ZERO);
        let b = l.link_transmit(8000, SimTime::from_secs_f64(0.002));
        assert_eq!(b.start, a.done);
        assert_eq!(b.done, SimTime::from_secs_f64(0.016));
    }

    #[test]
    fn ideal_link_delivers_immediately() {
        let mut l = Link::new(f64::INFINITY, 0.0);
        let now = SimTime::from_secs_f64(3.0);
        assert_eq!(l.link_transmit(8000, now).delivered, now);
    }

    #[test]
    fn model1_layout() {
        let sc = presets::model1(crate::qdisc::DisciplineKind::ChokeD);
        let d = build_dumbbell(&sc, &mut SimRng::new(1)).unwrap();
        assert_eq!(d.senders.len(), 34);
        assert_eq!(d.senders.iter().filter(|s| s.kind == FlowKind::Udp).count(), 1);
        assert_eq!(d.sender(1).kind, FlowKind::Udp);
        assert_eq!(d.qdisc.state().params.buffer_capacity, 100);
        assert!((sc.fair_share_bps() / 1e6 - 0.0294).abs() < 1e-4);
    }

    #[test]
    fn model2_smallest_point() {
        let sc = presets::model2(crate::qdisc::DisciplineKind::Red, 25);
        let d = build_dumbbell(&sc, &mut SimRng::new(1)).unwrap();
        let udp = d.senders.iter().filter(|s| s.kind == FlowKind::Udp).count();
        assert_eq!((d.senders.len() - udp, udp), (22, 3));
    }

    #[test]
    fn rtt_mix_halves() {
        let sc = presets::rtt_mix(crate::qdisc::DisciplineKind::ChokeD, 25);
        let d = build_dumbbell(&sc, &mut SimRng::new(1)).unwrap();
        let tcp: Vec<&Sender> = d
            .senders
            .iter()
            .filter(|s| matches!(s.kind, FlowKind::Tcp(TcpVariant::Reno)))
            .collect();
        let prop_rtt = |s: &Sender| 2.0 * (s.access.prop_delay.as_secs_f64() + 0.01);
        let long = tcp.iter().filter(|s| (prop_rtt(s) - 0.05).abs() < 1e-9).count();
        let short = tcp.iter().filter(|s| (prop_rtt(s) - 0.02).abs() < 1e-9).count();
        assert_eq!(long, 11);
        assert_eq!(short, 11);
    }

    #[test]
    fn invalid_scenario_is_rejected() {
        let mut sc = Scenario::default();
        sc.traffic.tcp = 0;
        sc.traffic.udp = 0;
        assert!(build_dumbbell(&sc, &mut SimRng::new(1)).is_err());
    }
}
