//! Scenario description and its text format.
//!
//! The format is line oriented:
//!
//! ```text
//! # comment
//! name = model1-choked
//! seed = 1
//!
//! [queue]
//! discipline = choked
//! buffer = 100
//!
//! [flow 3]
//! rtt = 0.05
//! ```
//!
//! Keys before the first section header belong to the run itself. Section
//! names are `queue`, `traffic`, `bottleneck`, `access` and `flow <id>`.
//! Values are numbers, names, or (for `tcp_rtt`) comma-separated numbers.
//! Every key is optional; omitted keys take the defaults listed in the
//! README. Unknown sections and keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::qdisc::{DisciplineKind, FlowId, QdiscParams};
use crate::transport::{HttpModel, TcpConfig, TcpVariant};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}` in section [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: invalid value for `{key}`: {message}")]
    Value {
        line: usize,
        key: String,
        message: String,
    },
    #[error("{}invalid {keys}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid {
        line: Option<usize>,
        keys: String,
        message: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub capacity_bps: f64,
    pub delay_s: f64,
}

/// Traffic mix. UDP flows take ids `1..=udp`, TCP flows follow. The last
/// `vegas` TCP flows run Vegas and the last `http` TCP flows are driven
/// by the HTTP application; all others are FTP over Reno.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSpec {
    pub tcp: usize,
    pub udp: usize,
    pub vegas: usize,
    pub http: usize,
    pub udp_rate_bps: f64,
    pub packet_size_bits: u32,
    /// TCP start times are drawn uniformly from `[0, start_spread)`.
    pub start_spread_s: f64,
    pub http_model: HttpModel,
    /// When non-empty, TCP flows are split into consecutive equal groups,
    /// one per listed round-trip propagation delay.
    pub tcp_rtt_s: Vec<f64>,
}

impl Default for TrafficSpec {
    fn default() -> Self {
        TrafficSpec {
            tcp: 33,
            udp: 1,
            vegas: 0,
            http: 0,
            udp_rate_bps: 2e6,
            packet_size_bits: 8000,
            start_spread_s: 1.0,
            http_model: HttpModel::default(),
            tcp_rtt_s: Vec::new(),
        }
    }
}

/// Per-flow settings that replace the defaults derived from the mix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowOverride {
    pub variant: Option<TcpVariant>,
    pub http: Option<bool>,
    /// Round-trip propagation delay; sets the access delay to
    /// `rtt / 2 - bottleneck delay`.
    pub rtt_s: Option<f64>,
    pub access_delay_s: Option<f64>,
    pub access_capacity_bps: Option<f64>,
    pub start_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub duration_s: f64,
    pub warmup_s: f64,
    pub sample_period_s: f64,
    pub discipline: DisciplineKind,
    pub qdisc: QdiscParams,
    pub traffic: TrafficSpec,
    pub bottleneck: LinkSpec,
    pub access: LinkSpec,
    pub tcp: TcpConfig,
    pub flows: BTreeMap<FlowId, FlowOverride>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "unnamed".to_string(),
            seed: 1,
            duration_s: 100.0,
            warmup_s: 10.0,
            sample_period_s: 0.1,
            discipline: DisciplineKind::ChokeD,
            qdisc: QdiscParams::default(),
            traffic: TrafficSpec::default(),
            bottleneck: LinkSpec {
                capacity_bps: 1e6,
                delay_s: 0.01,
            },
            access: LinkSpec {
                capacity_bps: 10e6,
                delay_s: 0.001,
            },
            tcp: TcpConfig::default(),
            flows: BTreeMap::new(),
        }
    }
}

impl Scenario {
    pub fn n_flows(&self) -> usize {
        self.traffic.tcp + self.traffic.udp
    }

    /// Bottleneck capacity divided evenly among all flows.
    pub fn fair_share_bps(&self) -> f64 {
        self.bottleneck.capacity_bps / self.n_flows() as f64
    }

    pub fn is_udp(&self, flow: FlowId) -> bool {
        (flow as usize) <= self.traffic.udp
    }

    /// Position of a TCP flow among the TCP flows, from zero.
    fn tcp_index(&self, flow: FlowId) -> Option<usize> {
        let idx = (flow as usize).checked_sub(self.traffic.udp + 1)?;
        (idx < self.traffic.tcp).then_some(idx)
    }

    pub fn tcp_variant(&self, flow: FlowId) -> Option<TcpVariant> {
        let idx = self.tcp_index(flow)?;
        if let Some(v) = self.flows.get(&flow).and_then(|o| o.variant) {
            return Some(v);
        }
        Some(if idx >= self.traffic.tcp - self.traffic.vegas {
            TcpVariant::Vegas
        } else {
            TcpVariant::Reno
        })
    }

    pub fn is_http(&self, flow: FlowId) -> bool {
        let Some(idx) = self.tcp_index(flow) else {
            return false;
        };
        self.flows
            .get(&flow)
            .and_then(|o| o.http)
            .unwrap_or(idx >= self.traffic.tcp - self.traffic.http)
    }

    /// One-way access propagation delay for `flow`.
    pub fn access_delay_s(&self, flow: FlowId) -> f64 {
        let o = self.flows.get(&flow);
        if let Some(d) = o.and_then(|o| o.access_delay_s) {
            return d;
        }
        if let Some(rtt) = o.and_then(|o| o.rtt_s) {
            return rtt / 2.0 - self.bottleneck.delay_s;
        }
        if let Some(idx) = self.tcp_index(flow) {
            let groups = &self.traffic.tcp_rtt_s;
            if !groups.is_empty() {
                let g = idx * groups.len() / self.traffic.tcp;
                return groups[g] / 2.0 - self.bottleneck.delay_s;
            }
        }
        self.access.delay_s
    }

    pub fn access_capacity_bps(&self, flow: FlowId) -> f64 {
        self.flows
            .get(&flow)
            .and_then(|o| o.access_capacity_bps)
            .unwrap_or(self.access.capacity_bps)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.validate_with_lines(&BTreeMap::new())
    }

    fn validate_with_lines(&self, lines: &BTreeMap<String, usize>) -> Result<(), ScenarioError> {
        let invalid = |keys: &[&str], message: String| {
            let line = keys.iter().filter_map(|k| lines.get(*k)).max().copied();
            ScenarioError::Invalid {
                line,
                keys: keys.join(" and "),
                message,
            }
        };
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(&[key], format!("must be positive and finite, got {v}")))
            }
        };

        if !(self.warmup_s >= 0.0 && self.duration_s > self.warmup_s) {
            return Err(invalid(
                &["duration", "warmup"],
                format!(
                    "need duration > warmup >= 0 (duration = {}, warmup = {})",
                    self.duration_s, self.warmup_s
                ),
            ));
        }
        positive("sample_period", self.sample_period_s)?;
        self.qdisc.validate().map_err(|e| {
            let keys: &[&str] = match e {
                crate::qdisc::ParamError::Buffer(_) => &["queue.buffer"],
                crate::qdisc::ParamError::Thresholds { .. } => &["queue.t_min", "queue.t_max"],
                crate::qdisc::ParamError::Fraction { name: "w_q", .. } => &["queue.w_q"],
                crate::qdisc::ParamError::Fraction { .. } => &["queue.max_p"],
                crate::qdisc::ParamError::MaxComp => &["queue.maxcomp"],
            };
            invalid(keys, e.to_string())
        })?;

        let t = &self.traffic;
        if t.tcp + t.udp == 0 {
            return Err(invalid(&["traffic.tcp", "traffic.udp"], "need at least one flow".into()));
        }
        if t.vegas > t.tcp {
            return Err(invalid(&["traffic.vegas"], format!("exceeds tcp flow count {}", t.tcp)));
        }
        if t.http > t.tcp {
            return Err(invalid(&["traffic.http"], format!("exceeds tcp flow count {}", t.tcp)));
        }
        if t.udp > 0 {
            positive("traffic.udp_rate", t.udp_rate_bps)?;
        }
        if t.packet_size_bits == 0 {
            return Err(invalid(&["traffic.packet_size"], "must be positive".into()));
        }
        if !(t.start_spread_s >= 0.0 && t.start_spread_s < self.duration_s) {
            return Err(invalid(
                &["traffic.start_spread"],
                "must lie in [0, duration)".into(),
            ));
        }
        if t.http > 0 {
            positive("traffic.http_page_mean", t.http_model.page_mean_pkts)?;
            positive("traffic.http_think_mean", t.http_model.think_mean_s)?;
        }
        for &rtt in &t.tcp_rtt_s {
            // Written negated so NaN is rejected too.
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(rtt / 2.0 >= self.bottleneck.delay_s) {
                return Err(invalid(
                    &["traffic.tcp_rtt"],
                    format!("round trip {rtt} s is shorter than twice the bottleneck delay"),
                ));
            }
        }
        if !t.tcp_rtt_s.is_empty() && t.tcp_rtt_s.len() > t.tcp {
            return Err(invalid(&["traffic.tcp_rtt"], "more rtt groups than tcp flows".into()));
        }

        positive("bottleneck.capacity", self.bottleneck.capacity_bps)?;
        positive("access.capacity", self.access.capacity_bps)?;
        for (key, d) in [("bottleneck.delay", self.bottleneck.delay_s), ("access.delay", self.access.delay_s)] {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(invalid(&[key], format!("must be non-negative, got {d}")));
            }
        }

        for (&flow, o) in &self.flows {
            let section = format!("flow {flow}");
            if flow == 0 || flow as usize > self.n_flows() {
                return Err(invalid(
                    &[section.as_str()],
                    format!("flow ids run from 1 to {}", self.n_flows()),
                ));
            }
            if self.is_udp(flow) && (o.variant.is_some() || o.http.is_some()) {
                return Err(invalid(
                    &[section.as_str()],
                    "variant and app apply only to tcp flows".into(),
                ));
            }
            let delay = self.access_delay_s(flow);
            if !(delay >= 0.0 && delay.is_finite()) {
                return Err(invalid(
                    &[section.as_str()],
                    format!("access delay {delay} s is negative (rtt too short?)"),
                ));
            }
            if let Some(c) = o.access_capacity_bps {
                positive(&format!("{section}.access_capacity"), c)?;
            }
            if let Some(s) = o.start_s {
                if !(s >= 0.0 && s < self.duration_s) {
                    return Err(invalid(&[section.as_str()], "start must lie in [0, duration)".into()));
                }
            }
        }
        Ok(())
    }

    pub fn from_path(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scenario::parse(&text)
    }

    /// Parses and validates a scenario document.
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut sc = Scenario::default();
        let mut section = String::new();
        let mut lines: BTreeMap<String, usize> = BTreeMap::new();

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ScenarioError::Syntax {
                    line: line_no,
                    message: format!("unterminated section header `{line}`"),
                })?;
                section = name.split_whitespace().collect::<Vec<_>>().join(" ");
                let known = matches!(section.as_str(), "queue" | "traffic" | "bottleneck" | "access")
                    || section.strip_prefix("flow ").is_some_and(|id| id.parse::<FlowId>().is_ok());
                if !known {
                    return Err(ScenarioError::Syntax {
                        line: line_no,
                        message: format!("unknown section [{section}]"),
                    });
                }
                lines.insert(section.clone(), line_no);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ScenarioError::Syntax {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let full_key = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            if lines.insert(full_key.clone(), line_no).is_some() && !section.starts_with("flow ") {
                return Err(ScenarioError::Syntax {
                    line: line_no,
                    message: format!("duplicate key `{full_key}`"),
                });
            }
            sc.assign(&section, key, value, line_no)?;
        }
        sc.validate_with_lines(&lines)?;
        Ok(sc)
    }

    fn assign(&mut self, section: &str, key: &str, value: &str, line: usize) -> Result<(), ScenarioError> {
        let bad = |message: String| ScenarioError::Value {
            line,
            key: key.to_string(),
            message,
        };
        let num = |v: &str| v.parse::<f64>().map_err(|_| bad(format!("`{v}` is not a number")));
        let int = |v: &str| {
            v.parse::<u64>()
                .or_else(|e| {
                    // Accept integral values written in float notation, e.g. 2e6.
                    match v.parse::<f64>() {
                        Ok(f) if f >= 0.0 && f.fract() == 0.0 && f < u64::MAX as f64 => Ok(f as u64),
                        _ => Err(e),
                    }
                })
                .map_err(|_| bad(format!("`{v}` is not a non-negative integer")))
        };
        let unknown = || ScenarioError::UnknownKey {
            line,
            section: if section.is_empty() { "top level".into() } else { section.into() },
            key: key.to_string(),
        };

        match (section, key) {
            ("", "name") => self.name = value.to_string(),
            ("", "seed") => self.seed = int(value)?,
            ("", "duration") => self.duration_s = num(value)?,
            ("", "warmup") => self.warmup_s = num(value)?,
            ("", "sample_period") => self.sample_period_s = num(value)?,

            ("queue", "discipline") => self.discipline = value.parse().map_err(|e| bad(format!("{e}")))?,
            ("queue", "buffer") => self.qdisc.buffer_capacity = int(value)? as usize,
            ("queue", "t_min") => self.qdisc.t_min = int(value)? as usize,
            ("queue", "t_max") => self.qdisc.t_max = int(value)? as usize,
            ("queue", "w_q") => self.qdisc.w_q = num(value)?,
            ("queue", "max_p") => self.qdisc.max_p = num(value)?,
            ("queue", "maxcomp") => self.qdisc.maxcomp = int(value)? as u32,

            ("traffic", "tcp") => self.traffic.tcp = int(value)? as usize,
            ("traffic", "udp") => self.traffic.udp = int(value)? as usize,
            ("traffic", "vegas") => self.traffic.vegas = int(value)? as usize,
            ("traffic", "http") => self.traffic.http = int(value)? as usize,
            ("traffic", "udp_rate") => self.traffic.udp_rate_bps = num(value)?,
            ("traffic", "packet_size") => self.traffic.packet_size_bits = int(value)? as u32,
            ("traffic", "start_spread") => self.traffic.start_spread_s = num(value)?,
            ("traffic", "http_page_mean") => self.traffic.http_model.page_mean_pkts = num(value)?,
            ("traffic", "http_think_mean") => self.traffic.http_model.think_mean_s = num(value)?,
            ("traffic", "tcp_rtt") => {
                self.traffic.tcp_rtt_s = value
                    .split(',')
                    .map(|v| num(v.trim()))
                    .collect::<Result<_, _>>()?
            }
            ("traffic", "min_rto") => self.tcp.min_rto = num(value)?,

            ("bottleneck", "capacity") => self.bottleneck.capacity_bps = num(value)?,
            ("bottleneck", "delay") => self.bottleneck.delay_s = num(value)?,
            ("access", "capacity") => self.access.capacity_bps = num(value)?,
            ("access", "delay") => self.access.delay_s = num(value)?,

            (s, k) if s.starts_with("flow ") => {
                let id: FlowId = s["flow ".len()..].parse().expect("checked at header");
                let o = self.flows.entry(id).or_default();
                match k {
                    "variant" => o.variant = Some(value.parse().map_err(bad)?),
                    "app" => {
                        o.http = Some(match value {
                            "http" => true,
                            "ftp" => false,
                            other => return Err(bad(format!("unknown app `{other}` (expected ftp or http)"))),
                        })
                    }
                    "rtt" => o.rtt_s = Some(num(value)?),
                    "access_delay" => o.access_delay_s = Some(num(value)?),
                    "access_capacity" => o.access_capacity_bps = Some(num(value)?),
                    "start" => o.start_s = Some(num(value)?),
                    _ => return Err(unknown()),
                }
            }
            _ => return Err(unknown()),
        }
        Ok(())
    }

    /// Renders the scenario in the text format accepted by [`Scenario::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let t = &self.traffic;
        let q = &self.qdisc;
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "duration = {}", self.duration_s);
        let _ = writeln!(s, "warmup = {}", self.warmup_s);
        let _ = writeln!(s, "sample_period = {}", self.sample_period_s);
        let _ = writeln!(s, "\n[queue]");
        let _ = writeln!(s, "discipline = {}", self.discipline);
        let _ = writeln!(s, "buffer = {}", q.buffer_capacity);
        let _ = writeln!(s, "t_min = {}", q.t_min);
        let _ = writeln!(s, "t_max = {}", q.t_max);
        let _ = writeln!(s, "w_q = {}", q.w_q);
        let _ = writeln!(s, "max_p = {}", q.max_p);
        let _ = writeln!(s, "maxcomp = {}", q.maxcomp);
        let _ = writeln!(s, "\n[traffic]");
        let _ = writeln!(s, "tcp = {}", t.tcp);
        let _ = writeln!(s, "udp = {}", t.udp);
        let _ = writeln!(s, "vegas = {}", t.vegas);
        let _ = writeln!(s, "http = {}", t.http);
        let _ = writeln!(s, "udp_rate = {}", t.udp_rate_bps);
        let _ = writeln!(s, "packet_size = {}", t.packet_size_bits);
        let _ = writeln!(s, "start_spread = {}", t.start_spread_s);
        let _ = writeln!(s, "http_page_mean = {}", t.http_model.page_mean_pkts);
        let _ = writeln!(s, "http_think_mean = {}", t.http_model.think_mean_s);
        let _ = writeln!(s, "min_rto = {}", self.tcp.min_rto);
        if !t.tcp_rtt_s.is_empty() {
            let list: Vec<String> = t.tcp_rtt_s.iter().map(|r| r.to_string()).collect();
            let _ = writeln!(s, "tcp_rtt = {}", list.join(", "));
        }
        let _ = writeln!(s, "\n[bottleneck]");
        let _ = writeln!(s, "capacity = {}", self.bottleneck.capacity_bps);
        let _ = writeln!(s, "delay = {}", self.bottleneck.delay_s);
        let _ = writeln!(s, "\n[access]");
        let _ = writeln!(s, "capacity = {}", self.access.capacity_bps);
        let _ = writeln!(s, "delay = {}", self.access.delay_s);
        for (id, o) in &self.flows {
            let _ = writeln!(s, "\n[flow {id}]");
            if let Some(v) = o.variant {
                let _ = writeln!(s, "variant = {v}");
            }
            if let Some(h) = o.http {
                let _ = writeln!(s, "app = {}", if h { "http" } else { "ftp" });
            }
            if let Some(v) = o.rtt_s {
                let _ = writeln!(s, "rtt = {v}");
            }
            if let Some(v) = o.access_delay_s {
                let _ = writeln!(s, "access_delay = {v}");
            }
            if let Some(v) = o.access_capacity_bps {
                let _ = writeln!(s, "access_capacity = {v}");
            }
            if let Some(v) = o.start_s {
                let _ = writeln!(s, "start = {v}");
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gets_defaults() {
        let sc = Scenario::parse("").unwrap();
        assert_eq!(sc, Scenario::default());
        assert_eq!(sc.seed, 1);
    }

    #[test]
    fn swapped_thresholds_name_both_keys() {
        let err = Scenario::parse("[queue]\nt_min = 80\nt_max = 40\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("queue.t_min") && msg.contains("queue.t_max"), "{msg}");
        assert!(msg.starts_with("line 3"), "{msg}");
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = Scenario::parse("seed = 4\n\n[queue]\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, ScenarioError::UnknownKey { line: 4, .. }), "{err}");
    }

    #[test]
    fn unknown_discipline_is_rejected() {
        let err = Scenario::parse("[queue]\ndiscipline = sfq\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Value { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("sfq"));
    }

    #[test]
    fn unknown_section_is_rejected() {
        assert!(matches!(
            Scenario::parse("[routing]\n"),
            Err(ScenarioError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn bad_number_is_rejected() {
        let err = Scenario::parse("duration = soon\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Value { line: 1, .. }));
    }

    #[test]
    fn flow_layout() {
        let sc = Scenario::parse("[traffic]\ntcp = 3\nudp = 2\nvegas = 1\nhttp = 2\n").unwrap();
        assert!(sc.is_udp(1) && sc.is_udp(2) && !sc.is_udp(3));
        assert_eq!(sc.tcp_variant(1), None);
        assert_eq!(sc.tcp_variant(3), Some(TcpVariant::Reno));
        assert_eq!(sc.tcp_variant(5), Some(TcpVariant::Vegas));
        assert!(!sc.is_http(3) && sc.is_http(4) && sc.is_http(5));
    }

    #[test]
    fn rtt_groups_set_access_delay() {
        let sc = Scenario::parse("[traffic]\ntcp = 4\nudp = 1\ntcp_rtt = 0.05, 0.02\n").unwrap();
        let d: Vec<f64> = (2..=5).map(|f| sc.access_delay_s(f)).collect();
        assert!((d[0] - 0.015).abs() < 1e-12 && (d[1] - 0.015).abs() < 1e-12);
        assert!(d[2].abs() < 1e-12 && d[3].abs() < 1e-12);
        assert!((sc.access_delay_s(1) - 0.001).abs() < 1e-12);
    }

    #[test]
    fn flow_override_too_short_rtt_rejected() {
        let err = Scenario::parse("[flow 2]\nrtt = 0.01\n").unwrap_err();
        assert!(err.to_string().contains("flow 2"), "{err}");
    }

    #[test]
    fn text_round_trip() {
        let mut sc = Scenario::default();
        sc.name = "rt".into();
        sc.traffic.tcp_rtt_s = vec![0.05, 0.02];
        sc.flows.insert(
            3,
            FlowOverride {
                variant: Some(TcpVariant::Vegas),
                start_s: Some(2.5),
                ..FlowOverride::default()
            },
        );
        assert_eq!(Scenario::parse(&sc.to_text()).unwrap(), sc);
    }

    #[test]
    fn warmup_must_precede_end() {
        let err = Scenario::parse("duration = 5\nwarmup = 10\n").unwrap_err();
        assert!(err.to_string().contains("duration and warmup"), "{err}");
    }
}
