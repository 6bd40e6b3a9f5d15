//! Minimax over a sweepout family, optionally continued in the penalty index.

use loopgeo_core::loops::energy;
use loopgeo_core::penalty::{classify_critical_point, corner_residual};
use loopgeo_core::variational::{minimax_sweepout, penalty_continuation, ContinuationResult, SweepoutFamily};
use loopgeo_core::MetricChart;
use serde_json::json;

use crate::config::FamilySpec;
use crate::{Failure, Outcome, RunConfig};

pub fn build_family(chart: &dyn MetricChart, spec: &FamilySpec, nodes: usize) -> Result<SweepoutFamily, Failure> {
    Ok(match *spec {
        FamilySpec::Birkhoff { members } => SweepoutFamily::birkhoff_sphere(chart, members, nodes)?,
        FamilySpec::Concentric { members, radius } => {
            SweepoutFamily::concentric_circles(chart, members, radius, nodes)?
        }
        FamilySpec::Winding {
            members,
            half_height,
            winding,
        } => SweepoutFamily::winding_family(chart, members, half_height, winding, nodes)?,
    })
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let chart = cfg.chart.build()?;
    let chart = chart.as_ref();
    let family = build_family(chart, &cfg.sweep.family, cfg.nodes)?;
    let sched = cfg.schedule();
    let opts = cfg.sweep_options();
    let alphas: Vec<usize> = (cfg.alpha..=cfg.alpha_max.unwrap_or(cfg.alpha)).collect();
    let ContinuationResult {
        values,
        violations,
        last,
    } = if alphas.len() > 1 {
        penalty_continuation(chart, &sched, &alphas, &family, &opts)?
    } else {
        let res = minimax_sweepout(chart, &sched, cfg.alpha, &family, &opts)?;
        ContinuationResult {
            values: vec![(cfg.alpha, res.value)],
            violations: Vec::new(),
            last: res,
        }
    };
    let alpha = *alphas.last().expect("non-empty alpha range");
    let lp = &last.argmax_loop;
    let class = classify_critical_point(chart, &sched, alpha, lp, cfg.ell, None)?;
    let corner = corner_residual(chart, &sched, alpha, lp)?;
    let member_energies = last
        .family
        .members
        .iter()
        .map(|m| energy(chart, m))
        .collect::<Result<Vec<_>, _>>()?;
    let mut assertions = Vec::new();
    if !violations.is_empty() {
        assertions.push(format!(
            "minimax values increase with the penalty index at alpha {violations:?}"
        ));
    }
    let summary = format!(
        "sweep on {}: value {:.6} at member {} after {} rounds ({}), {:?}",
        cfg.chart.name,
        last.value,
        last.argmax,
        last.rounds,
        if last.stabilized { "stable" } else { "round limit" },
        class.case
    );
    let result = json!({
        "values": values,
        "violations": violations,
        "monotone": violations.is_empty(),
        "value": last.value,
        "energy": energy(chart, lp)?,
        "argmax": last.argmax,
        "argmax_gradient_norm": last.argmax_gradient_norm,
        "rounds": last.rounds,
        "stabilized": last.stabilized,
        "inserted": last.inserted,
        "stalled": last.stalled,
        "history": last.history,
        "classification": class,
        "corner_residual": corner.norm,
        "member_energies": member_energies,
        "loop": lp.to_record(chart),
        "family": last.family.members.iter().map(|m| m.to_record(chart)).collect::<Vec<_>>(),
    });
    Ok(Outcome {
        result,
        assertions,
        summary,
    })
}
