//! Simplified packet-level TCP sender: slow start, additive increase,
//! fast retransmit on the third duplicate ACK, and timeout with
//! exponential backoff. Vegas replaces additive increase with a once-per-RTT
//! delay-based adjustment.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::engine::{SimDuration, SimTime};
use crate::qdisc::{FlowId, Packet};

use super::Ack;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TcpVariant {
    Reno,
    Vegas,
}

impl TcpVariant {
    pub fn name(self) -> &'static str {
        match self {
            TcpVariant::Reno => "reno",
            TcpVariant::Vegas => "vegas",
        }
    }
}

impl fmt::Display for TcpVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TcpVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "reno" => Ok(TcpVariant::Reno),
            "vegas" => Ok(TcpVariant::Vegas),
            other => Err(format!("unknown tcp variant `{other}` (expected reno or vegas)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    SlowStart,
    CongestionAvoidance,
    FastRecovery,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TcpError {
    #[error("flow {flow}: ACK up to {acked} but only {sent} packets were ever sent")]
    AckBeyondSent { flow: FlowId, acked: u64, sent: u64 },
    #[error("flow {flow}: RTT sample must be positive")]
    NonPositiveRtt { flow: FlowId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TcpConfig {
    pub initial_cwnd: f64,
    pub initial_ssthresh: f64,
    pub initial_rto: f64,
    pub min_rto: f64,
    pub max_rto: f64,
    pub dupack_threshold: u32,
    pub vegas_alpha: f64,
    pub vegas_beta: f64,
}

impl Default for TcpConfig {
    fn default() -> Self {
        TcpConfig {
            initial_cwnd: 1.0,
            initial_ssthresh: 64.0,
            initial_rto: 1.0,
            min_rto: 0.2,
            max_rto: 60.0,
            dupack_threshold: 3,
            vegas_alpha: 1.0,
            vegas_beta: 3.0,
        }
    }
}

/// What the event loop must do with the retransmission timer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimerAction {
    Keep,
    /// (Re)arm to fire at the given time; `generation` identifies the arm.
    Arm { at: SimTime, generation: u64 },
    Cancel,
}

/// Packets to hand to the access link plus the timer instruction.
#[derive(Debug, Clone, PartialEq)]
pub struct TcpReaction {
    pub send: Vec<Packet>,
    pub timer: TimerAction,
}

/// Per-connection congestion-control state.
#[derive(Debug, Clone)]
pub struct TcpState {
    pub flow_id: FlowId,
    pub variant: TcpVariant,
    pub packet_size_bits: u32,
    pub cwnd: f64,
    pub ssthresh: f64,
    pub phase: Phase,
    /// Oldest unacknowledged sequence number.
    pub snd_una: u64,
    /// Next sequence number to (re)send.
    pub next_seq: u64,
    /// One past the highest sequence number ever sent.
    pub max_sent: u64,
    pub dup_ack_count: u32,
    pub srtt: Option<f64>,
    pub rttvar: f64,
    pub rto: f64,
    pub base_rtt: Option<f64>,
    /// Exclusive bound on sequence numbers the application has supplied;
    /// `None` means always backlogged.
    pub app_limit: Option<u64>,
    config: TcpConfig,
    rtt_probe: Option<(u64, SimTime)>,
    vegas_epoch_end: u64,
    vegas_epoch_min_rtt: Option<f64>,
    timer_generation: u64,
    timer_armed: bool,
}

impl TcpState {
    pub fn new(flow_id: FlowId, variant: TcpVariant, packet_size_bits: u32, config: TcpConfig) -> Self {
        TcpState {
            flow_id,
            variant,
            packet_size_bits,
            cwnd: config.initial_cwnd,
            ssthresh: config.initial_ssthresh,
            phase: Phase::SlowStart,
            snd_una: 0,
            next_seq: 0,
            max_sent: 0,
            dup_ack_count: 0,
            srtt: None,
            rttvar: 0.0,
            rto: config.initial_rto,
            base_rtt: None,
            app_limit: None,
            config,
            rtt_probe: None,
            vegas_epoch_end: 0,
            vegas_epoch_min_rtt: None,
            timer_generation: 0,
            timer_armed: false,
        }
    }

    pub fn config(&self) -> &TcpConfig {
        &self.config
    }

    /// Packets sent but not yet cumulatively acknowledged.
    pub fn outstanding(&self) -> u64 {
        self.max_sent - self.snd_una
    }

    /// Packets the window currently accounts for.
    pub fn flight(&self) -> u64 {
        self.next_seq.saturating_sub(self.snd_una)
    }

    pub fn timer_generation(&self) -> u64 {
        self.timer_generation
    }

    /// True when an application-limited transfer has been fully acked.
    pub fn transfer_complete(&self) -> bool {
        matches!(self.app_limit, Some(limit) if self.snd_una >= limit)
    }

    /// Makes `packets` more packets available and, when `restart` is set,
    /// begins a fresh slow start as a new transfer would.
    pub fn start_transfer(&mut self, packets: u64, restart: bool) {
        let base = self.app_limit.unwrap_or(self.max_sent).max(self.max_sent);
        self.app_limit = Some(base + packets);
        if restart {
            self.cwnd = self.config.initial_cwnd;
            self.ssthresh = self.config.initial_ssthresh;
            self.phase = Phase::SlowStart;
            self.dup_ack_count = 0;
        }
    }

    fn has_data(&self, seq: u64) -> bool {
        self.app_limit.is_none_or(|limit| seq < limit)
    }

    /// Sends as many packets as the window and the application allow.
    pub fn send_available(&mut self, now: SimTime) -> TcpReaction {
        let window = (self.cwnd.floor() as u64).max(1);
        let mut send = Vec::new();
        while self.flight() < window && self.has_data(self.next_seq) {
            let seq = self.next_seq;
            let mut pkt = Packet::new(self.flow_id, seq, self.packet_size_bits);
            if seq < self.max_sent {
                pkt = pkt.retransmission();
            } else if self.rtt_probe.is_none() {
                self.rtt_probe = Some((seq, now));
            }
            self.next_seq += 1;
            self.max_sent = self.max_sent.max(self.next_seq);
            send.push(pkt);
        }
        debug_assert!(self.flight() as f64 <= self.cwnd.ceil().max(1.0) || send.is_empty());
        let timer = if !send.is_empty() && !self.timer_armed {
            self.arm(now)
        } else {
            TimerAction::Keep
        };
        TcpReaction { send, timer }
    }

    fn arm(&mut self, now: SimTime) -> TimerAction {
        self.timer_generation += 1;
        self.timer_armed = true;
        TimerAction::Arm {
            at: now + SimDuration::from_secs_f64(self.rto),
            generation: self.timer_generation,
        }
    }

    fn cancel(&mut self) -> TimerAction {
        self.timer_generation += 1;
        self.timer_armed = false;
        TimerAction::Cancel
    }

    fn update_rtt(&mut self, sample: f64) {
        match self.srtt {
            None => {
                self.srtt = Some(sample);
                self.rttvar = sample / 2.0;
            }
            Some(srtt) => {
                self.rttvar = 0.75 * self.rttvar + 0.25 * (srtt - sample).abs();
                self.srtt = Some(0.875 * srtt + 0.125 * sample);
            }
        }
        let srtt = self.srtt.expect("set above");
        self.rto = (srtt + 4.0 * self.rttvar).clamp(self.config.min_rto, self.config.max_rto);
        self.base_rtt = Some(self.base_rtt.map_or(sample, |b| b.min(sample)));
        self.vegas_epoch_min_rtt = Some(self.vegas_epoch_min_rtt.map_or(sample, |m| m.min(sample)));
    }

    fn enter_phase_for_window(&mut self) {
        self.phase = if self.cwnd < self.ssthresh {
            Phase::SlowStart
        } else {
            Phase::CongestionAvoidance
        };
    }

    /// Handles any cumulative ACK: new data acknowledged or a duplicate.
    pub fn on_ack(&mut self, ack: &Ack, now: SimTime) -> Result<TcpReaction, TcpError> {
        let acked = ack.next_expected();
        if acked > self.max_sent {
            return Err(TcpError::AckBeyondSent {
                flow: self.flow_id,
                acked,
                sent: self.max_sent,
            });
        }
        if acked > self.snd_una {
            Ok(self.on_new_ack(acked, now))
        } else if self.outstanding() > 0 {
            Ok(self.on_dup_ack(now))
        } else {
            Ok(TcpReaction {
                send: Vec::new(),
                timer: TimerAction::Keep,
            })
        }
    }

    /// New data acknowledged up to (excluding) `acked`.
    pub fn on_new_ack(&mut self, acked: u64, now: SimTime) -> TcpReaction {
        self.snd_una = acked;
        if self.next_seq < self.snd_una {
            self.next_seq = self.snd_una;
        }
        self.dup_ack_count = 0;

        if let Some((seq, sent_at)) = self.rtt_probe {
            if acked > seq {
                self.rtt_probe = None;
                self.update_rtt((now - sent_at).as_secs_f64());
            }
        }

        match self.phase {
            Phase::FastRecovery => {
                self.cwnd = self.ssthresh;
                self.phase = Phase::CongestionAvoidance;
            }
            Phase::SlowStart => {
                self.cwnd += 1.0;
                self.enter_phase_for_window();
            }
            Phase::CongestionAvoidance => match self.variant {
                TcpVariant::Reno => self.cwnd += 1.0 / self.cwnd,
                TcpVariant::Vegas => {}
            },
        }

        if self.variant == TcpVariant::Vegas && acked > self.vegas_epoch_end {
            if self.phase == Phase::CongestionAvoidance {
                if let Some(sample) = self.vegas_epoch_min_rtt {
                    self.vegas_adjust(sample)
                        .expect("RTT samples are positive");
                }
            }
            self.vegas_epoch_end = self.max_sent;
            self.vegas_epoch_min_rtt = None;
        }

        let mut reaction = self.send_available(now);
        reaction.timer = if self.outstanding() == 0 {
            self.cancel()
        } else {
            self.arm(now)
        };
        reaction
    }

    /// Duplicate ACK: fast retransmit on the threshold-th duplicate.
    pub fn on_dup_ack(&mut self, now: SimTime) -> TcpReaction {
        self.dup_ack_count += 1;
        if self.dup_ack_count != self.config.dupack_threshold || self.phase == Phase::FastRecovery {
            return TcpReaction {
                send: Vec::new(),
                timer: TimerAction::Keep,
            };
        }
        self.ssthresh = (self.cwnd / 2.0).max(2.0);
        self.cwnd = self.ssthresh;
        self.phase = Phase::FastRecovery;
        self.rtt_probe = None;
        let pkt = Packet::new(self.flow_id, self.snd_una, self.packet_size_bits).retransmission();
        let timer = self.arm(now);
        TcpReaction {
            send: vec![pkt],
            timer,
        }
    }

    /// Retransmission timer fired for the armed `generation`. Stale
    /// generations are ignored.
    pub fn on_timeout(&mut self, generation: u64, now: SimTime) -> TcpReaction {
        if generation != self.timer_generation || !self.timer_armed || self.outstanding() == 0 {
            return TcpReaction {
                send: Vec::new(),
                timer: TimerAction::Keep,
            };
        }
        self.ssthresh = (self.cwnd / 2.0).max(2.0);
        self.cwnd = 1.0;
        self.phase = Phase::SlowStart;
        self.dup_ack_count = 0;
        self.next_seq = self.snd_una;
        self.rtt_probe = None;
        self.rto = (self.rto * 2.0).min(self.config.max_rto);
        self.timer_armed = false;
        let mut reaction = self.send_available(now);
        if reaction.timer == TimerAction::Keep {
            reaction.timer = self.arm(now);
        }
        reaction
    }

    /// Vegas: compare expected and actual rate once per RTT and move the
    /// window by one packet towards the `[alpha, beta]` backlog band.
    pub fn vegas_adjust(&mut self, rtt_sample: f64) -> Result<(), TcpError> {
        if rtt_sample <= 0.0 {
            return Err(TcpError::NonPositiveRtt { flow: self.flow_id });
        }
        let base = self.base_rtt.unwrap_or(rtt_sample).min(rtt_sample);
        let diff = self.cwnd * (1.0 / base - 1.0 / rtt_sample) * base;
        if diff < self.config.vegas_alpha {
            self.cwnd += 1.0;
        } else if diff > self.config.vegas_beta {
            self.cwnd = (self.cwnd - 1.0).max(1.0);
            self.ssthresh = self.ssthresh.min(self.cwnd);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: f64) -> SimTime {
        SimTime::from_secs_f64(s)
    }

    fn reno() -> TcpState {
        TcpState::new(1, TcpVariant::Reno, 8000, TcpConfig::default())
    }

    fn ack(next_expected: u64) -> Ack {
        Ack::cumulative(1, next_expected)
    }

    #[test]
    fn slow_start_doubles_per_rtt() {
        let mut s = reno();
        s.cwnd = 2.0;
        let sent = s.send_available(t(0.0)).send;
        assert_eq!(sent.len(), 2);
        for (i, _) in sent.iter().enumerate() {
            s.on_ack(&ack(i as u64 + 1), t(0.1)).unwrap();
        }
        assert_eq!(s.cwnd, 4.0);
        assert_eq!(s.phase, Phase::SlowStart);
    }

    #[test]
    fn congestion_avoidance_adds_inverse_window() {
        let mut s = reno();
        s.cwnd = 10.0;
        s.ssthresh = 8.0;
        s.phase = Phase::CongestionAvoidance;
        s.send_available(t(0.0));
        s.on_ack(&ack(1), t(0.1)).unwrap();
        assert!((s.cwnd - 10.1).abs() < 1e-12);
    }

    #[test]
    fn slow_start_exits_at_threshold() {
        let mut s = reno();
        s.ssthresh = 4.0;
        s.cwnd = 3.5;
        s.send_available(t(0.0));
        s.on_ack(&ack(1), t(0.1)).unwrap();
        assert_eq!(s.phase, Phase::CongestionAvoidance);
        assert!(s.cwnd >= s.ssthresh);
    }

    #[test]
    fn ack_for_unsent_data_is_an_error() {
        let mut s = reno();
        s.send_available(t(0.0));
        assert!(matches!(
            s.on_ack(&ack(5), t(0.1)),
            Err(TcpError::AckBeyondSent { .. })
        ));
    }

    fn with_outstanding(cwnd: f64) -> TcpState {
        let mut s = reno();
        s.cwnd = cwnd;
        s.ssthresh = 1000.0;
        s.send_available(t(0.0));
        s
    }

    #[test]
    fn third_dup_ack_halves_and_retransmits() {
        let mut s = with_outstanding(16.0);
        assert!(s.on_ack(&ack(0), t(0.1)).unwrap().send.is_empty());
        assert!(s.on_ack(&ack(0), t(0.1)).unwrap().send.is_empty());
        assert_eq!(s.cwnd, 16.0);
        assert_eq!(s.dup_ack_count, 2);
        let r = s.on_ack(&ack(0), t(0.1)).unwrap();
        assert_eq!(s.ssthresh, 8.0);
        assert_eq!(s.cwnd, 8.0);
        assert_eq!(r.send.len(), 1);
        assert!(r.send[0].is_retransmission);
        assert_eq!(r.send[0].seq, 0);
    }

    #[test]
    fn dup_ack_threshold_floors_at_two() {
        let mut s = with_outstanding(3.0);
        for _ in 0..3 {
            s.on_ack(&ack(0), t(0.1)).unwrap();
        }
        assert_eq!(s.ssthresh, 2.0);
        assert_eq!(s.cwnd, 2.0);
    }

    #[test]
    fn timeout_collapses_window() {
        let mut s = with_outstanding(20.0);
        let g = s.timer_generation();
        let r = s.on_timeout(g, t(1.0));
        assert_eq!(s.ssthresh, 10.0);
        assert_eq!(s.cwnd, 1.0);
        assert_eq!(s.phase, Phase::SlowStart);
        assert_eq!(r.send.len(), 1);
        assert!(r.send[0].is_retransmission);
        assert_eq!(r.send[0].seq, 0);
    }

    #[test]
    fn consecutive_timeouts_double_rto() {
        let mut s = with_outstanding(1.0);
        assert_eq!(s.rto, 1.0);
        let r = s.on_timeout(s.timer_generation(), t(1.0));
        assert_eq!(s.rto, 2.0);
        let TimerAction::Arm { at, generation } = r.timer else {
            panic!("timer not rearmed")
        };
        assert_eq!(at, t(3.0));
        s.on_timeout(generation, at);
        assert_eq!(s.rto, 4.0);
    }

    #[test]
    fn rto_backoff_is_capped() {
        let mut s = with_outstanding(1.0);
        for _ in 0..10 {
            s.on_timeout(s.timer_generation(), t(0.0));
        }
        assert_eq!(s.rto, 60.0);
    }

    #[test]
    fn timeout_at_unit_window() {
        let mut s = with_outstanding(1.0);
        s.on_timeout(s.timer_generation(), t(1.0));
        assert_eq!(s.ssthresh, 2.0);
        assert_eq!(s.cwnd, 1.0);
    }

    #[test]
    fn stale_timer_is_ignored() {
        let mut s = with_outstanding(4.0);
        let stale = s.timer_generation();
        s.on_ack(&ack(1), t(0.1)).unwrap();
        let r = s.on_timeout(stale, t(1.0));
        assert!(r.send.is_empty());
        assert_eq!(s.cwnd, 5.0);
    }

    #[test]
    fn vegas_grows_on_uncongested_path() {
        let mut s = TcpState::new(1, TcpVariant::Vegas, 8000, TcpConfig::default());
        s.cwnd = 10.0;
        s.base_rtt = Some(0.04);
        s.vegas_adjust(0.04).unwrap();
        assert_eq!(s.cwnd, 11.0);
    }

    #[test]
    fn vegas_shrinks_when_backlog_exceeds_beta() {
        let mut s = TcpState::new(1, TcpVariant::Vegas, 8000, TcpConfig::default());
        s.cwnd = 20.0;
        s.base_rtt = Some(0.04);
        // diff = 20 * (1 - 0.04 / 0.06) = 6.67
        s.vegas_adjust(0.06).unwrap();
        assert_eq!(s.cwnd, 19.0);
    }

    #[test]
    fn vegas_dead_zone_holds_window() {
        let mut s = TcpState::new(1, TcpVariant::Vegas, 8000, TcpConfig::default());
        s.cwnd = 10.0;
        s.base_rtt = Some(0.04);
        // diff = 10 * (1 - 0.04 / 0.05) = 2
        s.vegas_adjust(0.05).unwrap();
        assert_eq!(s.cwnd, 10.0);
    }

    #[test]
    fn vegas_rejects_non_positive_rtt() {
        let mut s = TcpState::new(1, TcpVariant::Vegas, 8000, TcpConfig::default());
        assert!(s.vegas_adjust(0.0).is_err());
    }

    #[test]
    fn flight_never_exceeds_window_when_sending() {
        let mut s = reno();
        for cwnd in [1.0, 1.5, 2.9, 7.2] {
            s.cwnd = cwnd;
            s.send_available(t(0.0));
            assert!(s.flight() as f64 <= cwnd.ceil());
        }
    }

    #[test]
    fn application_limit_bounds_sending() {
        let mut s = reno();
        s.cwnd = 50.0;
        s.start_transfer(10, true);
        let r = s.send_available(t(0.0));
        assert_eq!(r.send.len(), 1);
        s.cwnd = 50.0;
        assert_eq!(s.send_available(t(0.0)).send.len(), 9);
        s.on_ack(&ack(10), t(0.2)).unwrap();
        assert!(s.transfer_complete());
    }

    #[test]
    fn go_back_after_timeout_flags_retransmissions() {
        let mut s = with_outstanding(4.0);
        s.on_timeout(s.timer_generation(), t(1.0));
        s.on_ack(&ack(1), t(1.2)).unwrap();
        // cwnd is now 2: seqs 1 and 2 go out again, both as retransmissions.
        assert_eq!(s.next_seq, 3);
        assert_eq!(s.max_sent, 4);
    }
}
