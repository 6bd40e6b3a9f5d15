//! Spectral analysis of one stored or generated loop.

use loopgeo_core::loops::energy;
use loopgeo_core::morse::{analyze_critical_loop, AnalysisOptions, Verdict};
use loopgeo_core::variational::descend;
use serde_json::json;

use crate::source::build_loop;
use crate::{Context, Failure, Outcome, RunConfig};

pub fn run(cfg: &RunConfig, ctx: &Context) -> Result<Outcome, Failure> {
    let chart = cfg.chart.build()?;
    let chart = chart.as_ref();
    let a = &cfg.analyze;
    let sched = cfg.schedule();
    let mut lp = build_loop(chart, cfg.nodes, &a.source, ctx)?;
    if a.polish {
        lp = descend(chart, &sched, cfg.alpha, &lp, &cfg.descent_options())?.0;
    }
    let opts = AnalysisOptions {
        method: a.method,
        zero_band: a.zero_band,
        ell: cfg.ell,
        k_radius: a.k_radius,
        m_max: a.m_max,
        cross_method: a.cross_method,
    };
    let rep = analyze_critical_loop(chart, &sched, cfg.alpha, &lp, &opts)?;
    let mut assertions = Vec::new();
    if rep.index_bound.verdict == Verdict::Fail {
        assertions.push(format!(
            "no conjugate points but index {} + nullity {} exceeds {}",
            rep.inertia.index,
            rep.inertia.nullity,
            lp.dim()
        ));
    }
    if let Some(b) = rep.bott.as_ref().filter(|b| !b.holds) {
        assertions.push(format!(
            "iteration inequalities fail (average index {:.4})",
            b.average_index
        ));
    }
    let summary = format!(
        "analyze on {}: {} nodes, index {}, nullity {}{}, cp1 {}, {:?}",
        cfg.chart.name,
        lp.len(),
        rep.inertia.index,
        rep.inertia.nullity,
        if rep.inertia.ambiguous {
            " (near the zero band)"
        } else {
            ""
        },
        rep.cp1,
        rep.classification.case
    );
    let result = json!({
        "energy": energy(chart, &lp)?,
        "report": rep,
        "loop": lp.to_record(chart),
    });
    Ok(Outcome {
        result,
        assertions,
        summary,
    })
}
