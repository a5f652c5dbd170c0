//! Throughput, goodput, fairness, queuing delay and queue traces.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::engine::SimTime;
use crate::qdisc::{ArrivalRecord, FlowId, Outcome, QueueObserver};
use crate::transport::FlowKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("measurement window [{start}, {end}) is empty")]
    EmptyWindow { start: SimTime, end: SimTime },
    #[error("fairness index needs at least one positive value")]
    AllZero,
    #[error("no delay samples")]
    NoSamples,
}

/// Half-open interval `[start, end)` of simulated time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: SimTime,
    pub end: SimTime,
}

impl Window {
    pub fn new(start: SimTime, end: SimTime) -> Self {
        Window { start, end }
    }

    pub fn contains(&self, t: SimTime) -> bool {
        self.start <= t && t < self.end
    }

    fn seconds(&self) -> Result<f64, MetricsError> {
        if self.end <= self.start {
            return Err(MetricsError::EmptyWindow {
                start: self.start,
                end: self.end,
            });
        }
        Ok((self.end - self.start).as_secs_f64())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeliveryRecord {
    pub time: SimTime,
    pub bits: u32,
    pub retransmission: bool,
}

/// Deliveries of one flow at its sink. `start`/`end` bound the flow's
/// measurement period.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowStats {
    pub flow_id: FlowId,
    pub kind: FlowKind,
    pub start: SimTime,
    pub end: SimTime,
    deliveries: Vec<DeliveryRecord>,
}

impl FlowStats {
    pub fn new(flow_id: FlowId, kind: FlowKind, start: SimTime, end: SimTime) -> Self {
        FlowStats {
            flow_id,
            kind,
            start,
            end,
            deliveries: Vec::new(),
        }
    }

    pub fn record(&mut self, time: SimTime, bits: u32, retransmission: bool) {
        debug_assert!(self.deliveries.last().is_none_or(|d| d.time <= time));
        self.deliveries.push(DeliveryRecord {
            time,
            bits,
            retransmission,
        });
    }

    pub fn window(&self) -> Window {
        Window::new(self.start, self.end)
    }

    fn in_window(&self, w: Window) -> impl Iterator<Item = &DeliveryRecord> {
        let lo = self.deliveries.partition_point(|d| d.time < w.start);
        self.deliveries[lo..].iter().take_while(move |d| d.time < w.end)
    }

    /// `R_x`: bits received during the measurement period.
    pub fn bits_delivered(&self) -> u64 {
        self.bits_in(self.window())
    }

    /// `T_x`: bits of retransmitted packets received during the period.
    pub fn bits_retransmitted_delivered(&self) -> u64 {
        self.in_window(self.window())
            .filter(|d| d.retransmission)
            .map(|d| d.bits as u64)
            .sum()
    }

    pub fn bits_in(&self, w: Window) -> u64 {
        self.in_window(w).map(|d| d.bits as u64).sum()
    }
}

/// Bits delivered inside `window` per second of the window.
pub fn throughput(stats: &FlowStats, window: Window) -> Result<f64, MetricsError> {
    Ok(stats.bits_in(window) as f64 / window.seconds()?)
}

/// `(R_x - T_x) / T` over the flow's measurement period.
pub fn goodput_tcp(stats: &FlowStats) -> Result<f64, MetricsError> {
    let secs = stats.window().seconds()?;
    Ok((stats.bits_delivered() - stats.bits_retransmitted_delivered()) as f64 / secs)
}

/// `R_x / T` over the flow's measurement period.
pub fn goodput_udp(stats: &FlowStats) -> Result<f64, MetricsError> {
    Ok(stats.bits_delivered() as f64 / stats.window().seconds()?)
}

/// Jain's fairness index `(sum x)^2 / (n * sum x^2)`.
pub fn jain_index(xs: &[f64]) -> Result<f64, MetricsError> {
    let sum: f64 = xs.iter().sum();
    let sum_sq: f64 = xs.iter().map(|x| x * x).sum();
    if xs.is_empty() || sum_sq <= 0.0 {
        return Err(MetricsError::AllZero);
    }
    Ok(sum * sum / (xs.len() as f64 * sum_sq))
}

/// Sample standard deviation (n - 1 denominator); zero for fewer than two
/// values.
pub fn sample_std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Arrival into the buffer and start of transmission for one packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelaySample {
    pub enqueued: SimTime,
    pub service_start: SimTime,
}

/// Mean time transmitted packets spent waiting in the buffer.
pub fn queuing_delay(samples: &[DelaySample]) -> Result<f64, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::NoSamples);
    }
    let total: f64 = samples
        .iter()
        .map(|s| (s.service_start - s.enqueued).as_secs_f64())
        .sum();
    Ok(total / samples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueTracePoint {
    pub t: SimTime,
    pub q_c: usize,
    pub q_a: f64,
}

/// Observer wired into the event loop; accumulates everything the report
/// needs.
#[derive(Debug, Clone)]
pub struct MetricsCollector {
    pub window: Window,
    pub flows: Vec<FlowStats>,
    pub delay_samples: Vec<DelaySample>,
    pub trace: Vec<QueueTracePoint>,
    pub decision_counts: BTreeMap<&'static str, u64>,
    pub draws_histogram: BTreeMap<u32, u64>,
    /// Largest number of draws seen for each queue length found on arrival.
    pub max_draws_by_queue_len: BTreeMap<usize, u32>,
    /// Arrivals whose draws exceeded the discipline's stated budget.
    pub draw_budget_violations: u64,
    pub arrivals: u64,
}

impl MetricsCollector {
    pub fn new(window: Window, flows: impl IntoIterator<Item = (FlowId, FlowKind)>) -> Self {
        let flows = flows
            .into_iter()
            .map(|(id, kind)| FlowStats::new(id, kind, window.start, window.end))
            .collect();
        let decision_counts = [Outcome::Admit, Outcome::DropArriving, Outcome::MatchDrop]
            .into_iter()
            .map(|o| (o.name(), 0))
            .collect();
        MetricsCollector {
            window,
            flows,
            delay_samples: Vec::new(),
            trace: Vec::new(),
            decision_counts,
            draws_histogram: BTreeMap::new(),
            max_draws_by_queue_len: BTreeMap::new(),
            draw_budget_violations: 0,
            arrivals: 0,
        }
    }

    pub fn on_delivery(&mut self, time: SimTime, flow: FlowId, bits: u32, retransmission: bool) {
        self.flows[flow as usize - 1].record(time, bits, retransmission);
    }

    pub fn on_service(&mut self, sample: DelaySample) {
        debug_assert!(sample.service_start >= sample.enqueued);
        if self.window.contains(sample.service_start) {
            self.delay_samples.push(sample);
        }
    }

    pub fn on_sample(&mut self, point: QueueTracePoint) {
        self.trace.push(point);
    }

    pub fn queue_trace(&self) -> &[QueueTracePoint] {
        &self.trace
    }
}

impl QueueObserver for MetricsCollector {
    fn on_arrival(&mut self, record: &ArrivalRecord) {
        self.arrivals += 1;
        *self.decision_counts.entry(record.outcome.name()).or_default() += 1;
        *self.draws_histogram.entry(record.draws_performed).or_default() += 1;
        let max = self.max_draws_by_queue_len.entry(record.q_c).or_default();
        *max = (*max).max(record.draws_performed);
        if let Some(budget) = record.draw_budget {
            if record.draws_performed > budget {
                self.draw_budget_violations += 1;
            }
        }
    }
}
