//! The event loop that drives one scenario from time zero to its end.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::engine::{EngineError, EventQueue, SimDuration, SimRng, SimTime};
use crate::harness::Scenario;
use crate::metrics::{
    goodput_tcp, goodput_udp, jain_index, queuing_delay, throughput, DelaySample, FlowStats,
    MetricsCollector, MetricsError, QueueTracePoint, Window,
};
use crate::qdisc::{FlowId, Packet, QueueObserver};
use crate::topology::{build_dumbbell, Dumbbell, Source, TopologyError};
use crate::transport::{
    http_app_step, Ack, AppModel, FlowKind, TcpError, TcpReaction, TimerAction,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Tcp(#[from] TcpError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(
        "flow {flow}: emitted {emitted} != delivered {delivered} + dropped {dropped} + in flight {in_flight}"
    )]
    Conservation {
        flow: FlowId,
        emitted: u64,
        delivered: u64,
        dropped: u64,
        in_flight: u64,
    },
}

#[derive(Debug, Clone)]
enum SimEvent {
    /// Next CBR packet is due.
    CbrEmit(FlowId),
    /// A TCP connection opens, or an HTTP client requests its next page.
    AppStart(FlowId),
    ArrivalAtQueue(Packet),
    TransmissionComplete,
    PropagationDelivery(Packet),
    AckDelivery(Ack),
    Retransmit { flow: FlowId, generation: u64 },
    QueueSample,
}

/// Per-flow packet accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PacketCounts {
    pub emitted: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowReport {
    pub flow_id: FlowId,
    pub kind: FlowKind,
    pub app: &'static str,
    pub throughput_bps: f64,
    pub goodput_bps: f64,
    pub counts: PacketCounts,
}

/// Everything measured in one run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub scenario: String,
    pub discipline: &'static str,
    pub seed: u64,
    pub window: Window,
    pub fair_share_bps: f64,
    pub flows: Vec<FlowReport>,
    pub stats: Vec<FlowStats>,
    pub tcp_throughput_bps: f64,
    pub tcp_goodput_bps: f64,
    pub udp_throughput_bps: f64,
    pub fairness: f64,
    /// `None` when no packet entered service inside the window.
    pub queuing_delay_s: Option<f64>,
    pub queue_trace: Vec<QueueTracePoint>,
    /// Mean of the sampled average queue over the measurement window.
    pub mean_avg_queue: f64,
    pub decision_counts: BTreeMap<&'static str, u64>,
    pub draws_histogram: BTreeMap<u32, u64>,
    pub max_draws_by_queue_len: BTreeMap<usize, u32>,
    pub draw_budget_violations: u64,
    pub arrivals: u64,
    /// Per-flow throughput (bps) in consecutive one-second bins from t = 0.
    pub timeseries: Vec<Vec<f64>>,
}

impl RunReport {
    pub fn flow(&self, id: FlowId) -> &FlowReport {
        &self.flows[id as usize - 1]
    }

    pub fn throughputs(&self) -> Vec<f64> {
        self.flows.iter().map(|f| f.throughput_bps).collect()
    }
}

struct Simulation<'a> {
    scenario: &'a Scenario,
    net: Dumbbell,
    rng: SimRng,
    metrics: MetricsCollector,
    counts: Vec<PacketCounts>,
    /// Think time to wait after the current HTTP page completes.
    pending_think: Vec<Option<SimDuration>>,
    bottleneck_busy: bool,
    sample_period: SimDuration,
    samples_left: u64,
}

impl Simulation<'_> {
    fn handle(&mut self, q: &mut EventQueue<SimEvent>, ev: SimEvent) -> Result<(), RunError> {
        let now = q.now();
        match ev {
            SimEvent::CbrEmit(flow) => {
                let Source::Cbr(cbr) = &mut self.net.sender_mut(flow).source else {
                    unreachable!("CBR event for a TCP flow")
                };
                let (pkt, next) = cbr.cbr_emit(now);
                q.schedule(next, SimEvent::CbrEmit(flow))?;
                self.emit(q, pkt);
            }
            SimEvent::AppStart(flow) => {
                let reaction = {
                    let Source::Tcp { state, app } = &mut self.net.sender_mut(flow).source else {
                        unreachable!("application event for a UDP flow")
                    };
                    if let AppModel::Http(model) = app {
                        let step = http_app_step(model, &mut self.rng);
                        self.pending_think[flow as usize - 1] = Some(step.think_time);
                        state.start_transfer(step.page_size_pkts, true);
                    }
                    state.send_available(now)
                };
                self.apply(q, flow, reaction)?;
            }
            SimEvent::ArrivalAtQueue(pkt) => {
                let flow = pkt.flow_id;
                let admission = self.net.qdisc.enqueue(pkt, now, &mut self.rng);
                self.metrics.on_arrival(&admission.record);
                for dropped in &admission.dropped {
                    self.counts[dropped.flow_id as usize - 1].dropped += 1;
                }
                debug_assert!(admission.dropped.iter().all(|p| p.flow_id == flow));
                if !self.bottleneck_busy {
                    self.start_service(q)?;
                }
            }
            SimEvent::TransmissionComplete => {
                self.bottleneck_busy = false;
                self.start_service(q)?;
            }
            SimEvent::PropagationDelivery(pkt) => {
                let flow = pkt.flow_id;
                self.counts[flow as usize - 1].delivered += 1;
                self.metrics
                    .on_delivery(now, flow, pkt.size_bits, pkt.is_retransmission);
                if let Some(ack) = self.net.sink_mut(flow).sink_on_packet(&pkt) {
                    let delay = self.net.sender(flow).reverse_delay;
                    q.schedule_in(delay, SimEvent::AckDelivery(ack));
                }
            }
            SimEvent::AckDelivery(ack) => {
                let flow = ack.flow_id;
                let (reaction, finished) = {
                    let Source::Tcp { state, app } = &mut self.net.sender_mut(flow).source else {
                        unreachable!("ACK for a UDP flow")
                    };
                    let was_complete = state.transfer_complete();
                    let reaction = state.on_ack(&ack, now)?;
                    let finished = matches!(app, AppModel::Http(_))
                        && !was_complete
                        && state.transfer_complete();
                    (reaction, finished)
                };
                self.apply(q, flow, reaction)?;
                if finished {
                    let think = self.pending_think[flow as usize - 1]
                        .take()
                        .expect("an HTTP page was requested");
                    q.schedule_in(think, SimEvent::AppStart(flow));
                }
            }
            SimEvent::Retransmit { flow, generation } => {
                let Source::Tcp { state, .. } = &mut self.net.sender_mut(flow).source else {
                    unreachable!("timer for a UDP flow")
                };
                let reaction = state.on_timeout(generation, now);
                self.apply(q, flow, reaction)?;
            }
            SimEvent::QueueSample => {
                self.metrics.on_sample(QueueTracePoint {
                    t: now,
                    q_c: self.net.qdisc.len(),
                    q_a: self.net.qdisc.avg_queue(),
                });
                self.samples_left -= 1;
                if self.samples_left > 0 {
                    let k = self.metrics.trace.len() as u64;
                    q.schedule(SimTime::ZERO + self.sample_period.saturating_mul(k), SimEvent::QueueSample)?;
                }
            }
        }
        Ok(())
    }

    fn apply(
        &mut self,
        q: &mut EventQueue<SimEvent>,
        flow: FlowId,
        reaction: TcpReaction,
    ) -> Result<(), RunError> {
        for pkt in reaction.send {
            self.emit(q, pkt);
        }
        if let TimerAction::Arm { at, generation } = reaction.timer {
            q.schedule(at, SimEvent::Retransmit { flow, generation })?;
        }
        Ok(())
    }

    /// Hands a packet to its sender's access link.
    fn emit(&mut self, q: &mut EventQueue<SimEvent>, pkt: Packet) {
        let flow = pkt.flow_id;
        self.counts[flow as usize - 1].emitted += 1;
        let tx = self
            .net
            .sender_mut(flow)
            .access
            .link_transmit(pkt.size_bits as u64, q.now());
        q.schedule(tx.delivered, SimEvent::ArrivalAtQueue(pkt))
            .expect("link delivery is never in the past");
    }

    fn start_service(&mut self, q: &mut EventQueue<SimEvent>) -> Result<(), RunError> {
        let Some(pkt) = self.net.qdisc.dequeue() else {
            return Ok(());
        };
        let now = q.now();
        self.metrics.on_service(DelaySample {
            enqueued: pkt.enqueue_time,
            service_start: now,
        });
        let tx = self.net.bottleneck.link_transmit(pkt.size_bits as u64, now);
        debug_assert_eq!(tx.start, now);
        self.bottleneck_busy = true;
        q.schedule(tx.done, SimEvent::TransmissionComplete)?;
        q.schedule(tx.delivered, SimEvent::PropagationDelivery(pkt))?;
        Ok(())
    }
}

/// Builds the dumbbell for `scenario`, runs it for its full duration and
/// computes every metric. Deterministic for a given scenario and seed.
pub fn run_experiment(scenario: &Scenario) -> Result<RunReport, RunError> {
    let mut rng = SimRng::new(scenario.seed);
    let net = build_dumbbell(scenario, &mut rng)?;
    let end = SimTime::from_secs_f64(scenario.duration_s);
    let window = Window::new(SimTime::from_secs_f64(scenario.warmup_s), end);
    let n = scenario.n_flows();
    let sample_period = SimDuration::from_secs_f64(scenario.sample_period_s);
    let samples = (end.as_nanos() / sample_period.as_nanos()) + 1;

    let mut sim = Simulation {
        scenario,
        metrics: MetricsCollector::new(window, net.senders.iter().map(|s| (s.flow_id, s.kind))),
        net,
        rng,
        counts: vec![PacketCounts::default(); n],
        pending_think: vec![None; n],
        bottleneck_busy: false,
        sample_period,
        samples_left: samples,
    };

    let mut queue = EventQueue::new();
    queue.schedule(SimTime::ZERO, SimEvent::QueueSample)?;
    for s in &sim.net.senders {
        let ev = match s.source {
            Source::Cbr(_) => SimEvent::CbrEmit(s.flow_id),
            Source::Tcp { .. } => SimEvent::AppStart(s.flow_id),
        };
        queue.schedule(s.start, ev)?;
    }
    queue.run_until(end, |q, ev| sim.handle(q, ev.payload))?;

    // Packets still travelling sit either in a pending event or in the buffer.
    for ev in queue.pending() {
        if let SimEvent::ArrivalAtQueue(p) | SimEvent::PropagationDelivery(p) = &ev.payload {
            sim.counts[p.flow_id as usize - 1].in_flight += 1;
        }
    }
    for p in &sim.net.qdisc.state().buffer {
        sim.counts[p.flow_id as usize - 1].in_flight += 1;
    }
    for (i, c) in sim.counts.iter().enumerate() {
        if c.emitted != c.delivered + c.dropped + c.in_flight {
            return Err(RunError::Conservation {
                flow: i as FlowId + 1,
                emitted: c.emitted,
                delivered: c.delivered,
                dropped: c.dropped,
                in_flight: c.in_flight,
            });
        }
    }

    sim.report()
}

impl Simulation<'_> {
    fn report(self) -> Result<RunReport, RunError> {
        let scenario = self.scenario;
        let window = self.metrics.window;
        let mut flows = Vec::with_capacity(self.metrics.flows.len());
        let (mut tcp_tput, mut tcp_good, mut udp_tput) = (0.0, 0.0, 0.0);
        for (stats, sender) in self.metrics.flows.iter().zip(&self.net.senders) {
            let tput = throughput(stats, window)?;
            let (goodput, app) = match &sender.source {
                Source::Tcp { app, .. } => (goodput_tcp(stats)?, app.name()),
                Source::Cbr(_) => (goodput_udp(stats)?, "cbr"),
            };
            match stats.kind {
                FlowKind::Udp => udp_tput += tput,
                FlowKind::Tcp(_) => {
                    tcp_tput += tput;
                    tcp_good += goodput;
                }
            }
            flows.push(FlowReport {
                flow_id: stats.flow_id,
                kind: stats.kind,
                app,
                throughput_bps: tput,
                goodput_bps: goodput,
                counts: self.counts[stats.flow_id as usize - 1],
            });
        }

        let tputs: Vec<f64> = flows.iter().map(|f| f.throughput_bps).collect();
        let fairness = jain_index(&tputs).unwrap_or(0.0);
        let queuing_delay_s = queuing_delay(&self.metrics.delay_samples).ok();

        let in_window: Vec<f64> = self
            .metrics
            .trace
            .iter()
            .filter(|p| p.t >= window.start)
            .map(|p| p.q_a)
            .collect();
        let mean_avg_queue = if in_window.is_empty() {
            0.0
        } else {
            in_window.iter().sum::<f64>() / in_window.len() as f64
        };

        let bins = scenario.duration_s.ceil() as u64;
        let timeseries = self
            .metrics
            .flows
            .iter()
            .map(|s| {
                (0..bins)
                    .map(|b| {
                        let lo = SimTime::from_secs_f64(b as f64);
                        let hi = SimTime::from_secs_f64((b + 1) as f64).min(window.end);
                        throughput(s, Window::new(lo, hi)).unwrap_or(0.0)
                    })
                    .collect()
            })
            .collect();

        Ok(RunReport {
            scenario: scenario.name.clone(),
            discipline: scenario.discipline.name(),
            seed: scenario.seed,
            window,
            fair_share_bps: scenario.fair_share_bps(),
            flows,
            stats: self.metrics.flows,
            tcp_throughput_bps: tcp_tput,
            tcp_goodput_bps: tcp_good,
            udp_throughput_bps: udp_tput,
            fairness,
            queuing_delay_s,
            queue_trace: self.metrics.trace,
            mean_avg_queue,
            decision_counts: self.metrics.decision_counts,
            draws_histogram: self.metrics.draws_histogram,
            max_draws_by_queue_len: self.metrics.max_draws_by_queue_len,
            draw_budget_violations: self.metrics.draw_budget_violations,
            arrivals: self.metrics.arrivals,
            timeseries,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qdisc::DisciplineKind;

    fn small(kind: DisciplineKind) -> Scenario {
        let mut sc = Scenario {
            duration_s: 20.0,
            warmup_s: 2.0,
            discipline: kind,
            ..Scenario::default()
        };
        sc.traffic.tcp = 5;
        sc.traffic.udp = 1;
        sc
    }

    #[test]
    fn single_tcp_flow_fills_the_bottleneck() {
        let mut sc = small(DisciplineKind::DropTail);
        sc.traffic.tcp = 1;
        sc.traffic.udp = 0;
        let r = run_experiment(&sc).unwrap();
        let tput = r.flow(1).throughput_bps;
        assert!(tput > 0.8e6 && tput <= 1e6, "{tput}");
    }

    #[test]
    fn lone_cbr_is_capped_by_capacity() {
        let mut sc = small(DisciplineKind::DropTail);
        sc.traffic.tcp = 0;
        let r = run_experiment(&sc).unwrap();
        assert!((r.udp_throughput_bps - 1e6).abs() < 1e4, "{}", r.udp_throughput_bps);
        // A full buffer drains one packet every 8 ms.
        let d = r.queuing_delay_s.unwrap();
        assert!((d - 0.8).abs() < 0.02, "{d}");
    }

    #[test]
    fn idle_network_trace_is_empty_queue() {
        let mut sc = small(DisciplineKind::Red);
        sc.traffic.tcp = 1;
        sc.traffic.udp = 0;
        sc.flows.insert(
            1,
            crate::harness::FlowOverride {
                start_s: Some(19.99),
                ..Default::default()
            },
        );
        let r = run_experiment(&sc).unwrap();
        assert_eq!(r.queue_trace.len(), 201);
        assert!(r.queue_trace.iter().all(|p| p.q_c == 0));
    }

    #[test]
    fn trace_sample_count() {
        let mut sc = small(DisciplineKind::ChokeD);
        sc.duration_s = 12.35;
        sc.sample_period_s = 0.1;
        let r = run_experiment(&sc).unwrap();
        assert_eq!(r.queue_trace.len(), 124);
        assert!(r.queue_trace.iter().all(|p| p.q_c <= 100));
    }

    #[test]
    fn every_discipline_conserves_packets() {
        for kind in DisciplineKind::ALL {
            let r = run_experiment(&small(kind)).unwrap();
            assert_eq!(r.flows.len(), 6);
            let total: f64 = r.throughputs().iter().sum();
            assert!(total <= 1e6 * 1.0001, "{kind}: {total}");
            for f in &r.flows {
                assert!(f.goodput_bps <= f.throughput_bps + 1e-9);
            }
        }
    }

    #[test]
    fn http_flows_are_light() {
        let mut sc = small(DisciplineKind::ChokeD);
        sc.traffic.udp = 0;
        sc.traffic.tcp = 4;
        sc.traffic.http = 4;
        let r = run_experiment(&sc).unwrap();
        for f in &r.flows {
            assert_eq!(f.app, "http");
            // Roughly 12 packets per (1 s think + transfer time).
            assert!(f.throughput_bps < sc.fair_share_bps(), "{}", f.throughput_bps);
            assert!(f.throughput_bps > 0.0);
        }
    }
}
