//! Ready-made scenarios for the experiments and the sweeps built from them.

use std::fmt;
use std::str::FromStr;

use crate::qdisc::DisciplineKind;

use super::Scenario;

/// Flow counts of the multi-UDP model: (label, tcp, udp). The 73-flow
/// point uses a 66/9 split, 75 flows in total.
pub const MODEL2_POINTS: [(u32, usize, usize); 4] = [(25, 22, 3), (50, 44, 6), (73, 66, 9), (100, 88, 12)];

pub const BUFFER_SIZES: [usize; 3] = [100, 300, 500];

/// 33 FTP/Reno flows and one 2 Mb/s CBR flow on the default dumbbell.
pub fn model1(kind: DisciplineKind) -> Scenario {
    let mut sc = Scenario {
        name: format!("model1-{kind}"),
        discipline: kind,
        ..Scenario::default()
    };
    sc.traffic.tcp = 33;
    sc.traffic.udp = 1;
    sc
}

/// Multiple CBR flows (about 12% of the flows) among FTP/Reno flows.
///
/// # Panics
/// If `n_flows` is not one of the [`MODEL2_POINTS`] labels.
pub fn model2(kind: DisciplineKind, n_flows: u32) -> Scenario {
    let &(_, tcp, udp) = MODEL2_POINTS
        .iter()
        .find(|p| p.0 == n_flows)
        .unwrap_or_else(|| panic!("model 2 has no {n_flows}-flow point"));
    let mut sc = Scenario {
        name: format!("model2-{n_flows}-{kind}"),
        discipline: kind,
        ..Scenario::default()
    };
    sc.traffic.tcp = tcp;
    sc.traffic.udp = udp;
    sc
}

/// Model 1 with a buffer of `buffer` packets; thresholds scale with it.
pub fn buffer(kind: DisciplineKind, buffer: usize) -> Scenario {
    let mut sc = model1(kind);
    sc.name = format!("buffer-{buffer}-{kind}");
    sc.qdisc.buffer_capacity = buffer;
    sc.qdisc.t_min = buffer * 2 / 5;
    sc.qdisc.t_max = buffer * 4 / 5;
    sc
}

/// One Reno, one Vegas and one CBR flow.
pub fn reno_vs_vegas(kind: DisciplineKind) -> Scenario {
    let mut sc = Scenario {
        name: format!("reno-vs-vegas-{kind}"),
        discipline: kind,
        ..Scenario::default()
    };
    sc.traffic.tcp = 2;
    sc.traffic.vegas = 1;
    sc.traffic.udp = 1;
    sc
}

/// Model 2 with half the TCP flows at 50 ms and half at 20 ms round-trip
/// propagation delay, run for 200 s.
pub fn rtt_mix(kind: DisciplineKind, n_flows: u32) -> Scenario {
    let mut sc = model2(kind, n_flows);
    sc.name = format!("rtt-mix-{n_flows}-{kind}");
    sc.duration_s = 200.0;
    sc.traffic.tcp_rtt_s = vec![0.05, 0.02];
    sc
}

/// 15 long-lived FTP flows, 15 HTTP clients and one CBR flow.
pub fn web_mix(kind: DisciplineKind) -> Scenario {
    let mut sc = Scenario {
        name: format!("web-mix-{kind}"),
        discipline: kind,
        ..Scenario::default()
    };
    sc.traffic.tcp = 30;
    sc.traffic.http = 15;
    sc.traffic.udp = 1;
    sc
}

/// Looks up a single-run preset such as `model1-choked` or
/// `web-mix-red`.
pub fn scenario_preset(name: &str) -> Option<Scenario> {
    let (base, disc) = name.rsplit_once('-')?;
    let kind: DisciplineKind = disc.parse().ok()?;
    match base {
        "model1" => Some(model1(kind)),
        "reno-vs-vegas" => Some(reno_vs_vegas(kind)),
        "web-mix" => Some(web_mix(kind)),
        _ => None,
    }
}

/// Names accepted by [`scenario_preset`].
pub fn scenario_preset_names() -> Vec<String> {
    ["model1", "reno-vs-vegas", "web-mix"]
        .iter()
        .flat_map(|base| DisciplineKind::ALL.iter().map(move |k| format!("{base}-{k}")))
        .collect()
}

/// Multi-run experiments; each point runs under every compared discipline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepPreset {
    Model2,
    Buffer,
    RttMix,
    RenoVsVegas,
    WebMix,
}

/// One x-axis position of a sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepPoint {
    pub label: String,
    value: u32,
}

impl SweepPreset {
    pub const ALL: [SweepPreset; 5] = [
        SweepPreset::Model2,
        SweepPreset::Buffer,
        SweepPreset::RttMix,
        SweepPreset::RenoVsVegas,
        SweepPreset::WebMix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepPreset::Model2 => "model2-sweep",
            SweepPreset::Buffer => "buffer-sweep",
            SweepPreset::RttMix => "rtt-mix",
            SweepPreset::RenoVsVegas => "reno-vs-vegas",
            SweepPreset::WebMix => "web-mix",
        }
    }

    pub fn points(self) -> Vec<SweepPoint> {
        let point = |label: String, value: u32| SweepPoint { label, value };
        match self {
            SweepPreset::Model2 | SweepPreset::RttMix => MODEL2_POINTS
                .iter()
                .map(|&(n, _, _)| point(format!("flows={n}"), n))
                .collect(),
            SweepPreset::Buffer => BUFFER_SIZES
                .iter()
                .map(|&b| point(format!("buffer={b}"), b as u32))
                .collect(),
            SweepPreset::RenoVsVegas | SweepPreset::WebMix => vec![point("default".into(), 0)],
        }
    }

    pub fn scenario(self, point: &SweepPoint, kind: DisciplineKind) -> Scenario {
        match self {
            SweepPreset::Model2 => model2(kind, point.value),
            SweepPreset::Buffer => buffer(kind, point.value as usize),
            SweepPreset::RttMix => rtt_mix(kind, point.value),
            SweepPreset::RenoVsVegas => reno_vs_vegas(kind),
            SweepPreset::WebMix => web_mix(kind),
        }
    }
}

impl fmt::Display for SweepPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepPreset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SweepPreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = SweepPreset::ALL.iter().map(|p| p.name()).collect();
                format!("unknown sweep preset `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model1_parameters() {
        let sc = scenario_preset("model1-choked").unwrap();
        assert_eq!((sc.traffic.tcp, sc.traffic.udp), (33, 1));
        assert_eq!(sc.discipline, DisciplineKind::ChokeD);
        let q = &sc.qdisc;
        assert_eq!((q.buffer_capacity, q.t_min, q.t_max), (100, 40, 80));
        assert_eq!(q.w_q, 0.02);
        assert_eq!(sc.traffic.udp_rate_bps, 2e6);
        assert_eq!(sc.seed, 1);
    }

    #[test]
    fn every_preset_validates() {
        for name in scenario_preset_names() {
            scenario_preset(&name).unwrap().validate().unwrap();
        }
        for p in SweepPreset::ALL {
            for pt in p.points() {
                for k in DisciplineKind::COMPARED {
                    p.scenario(&pt, k).validate().unwrap();
                }
            }
        }
    }

    #[test]
    fn sweep_shapes() {
        let rows = |p: SweepPreset| p.points().len() * DisciplineKind::COMPARED.len();
        assert_eq!(rows(SweepPreset::Model2), 16);
        assert_eq!(rows(SweepPreset::Buffer), 12);
        assert_eq!(rows(SweepPreset::RenoVsVegas), 4);
    }

    #[test]
    fn buffer_thresholds_scale() {
        let sc = buffer(DisciplineKind::Red, 300);
        assert_eq!((sc.qdisc.t_min, sc.qdisc.t_max), (120, 240));
        assert_eq!(buffer(DisciplineKind::Red, 100).qdisc, model1(DisciplineKind::Red).qdisc);
    }

    #[test]
    fn presets_survive_text_round_trip() {
        for name in scenario_preset_names() {
            let sc = scenario_preset(&name).unwrap();
            assert_eq!(Scenario::parse(&sc.to_text()).unwrap(), sc);
        }
        let sc = rtt_mix(DisciplineKind::GChoke, 50);
        assert_eq!(Scenario::parse(&sc.to_text()).unwrap(), sc);
    }

    #[test]
    fn unknown_names() {
        assert!(scenario_preset("model3-red").is_none());
        assert!(scenario_preset("model1-fq").is_none());
        assert!("model9-sweep".parse::<SweepPreset>().is_err());
    }
}
