//! Scenarios, presets, sweeps and CSV output.

mod output;
pub mod presets;
mod scenario;

use rayon::prelude::*;

use crate::qdisc::DisciplineKind;

pub use crate::sim::{run_experiment, FlowReport, PacketCounts, RunError, RunReport};
pub use output::{emit_outputs, emit_sweep, OutputError};
pub use presets::{SweepPoint, SweepPreset};
pub use scenario::{FlowOverride, LinkSpec, Scenario, ScenarioError, TrafficSpec};

/// One (point, discipline, seed) run of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub preset: SweepPreset,
    pub point: String,
    pub discipline: DisciplineKind,
    pub seed: u64,
    pub report: RunReport,
}

/// Runs every point of `preset` under each compared discipline and each
/// seed. Runs execute in parallel; rows come back in (point, discipline,
/// seed) order.
pub fn run_sweep(preset: SweepPreset, seeds: &[u64]) -> Result<Vec<SweepRow>, RunError> {
    let mut jobs: Vec<(SweepPoint, DisciplineKind, u64)> = Vec::new();
    for pt in preset.points() {
        for kind in DisciplineKind::COMPARED {
            jobs.extend(seeds.iter().map(|&s| (pt.clone(), kind, s)));
        }
    }
    jobs.into_par_iter()
        .map(|(point, kind, seed)| {
            let mut sc = preset.scenario(&point, kind);
            sc.seed = seed;
            Ok(SweepRow {
                preset,
                point: point.label,
                discipline: kind,
                seed,
                report: run_experiment(&sc)?,
            })
        })
        .collect()
}
