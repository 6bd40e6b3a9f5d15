//! Multistart search: descend from seeded random loops, analyse each limit and
//! keep one representative per `(energy, index, basepoint radius)` signature.

use std::f64::consts::PI;

use loopgeo_core::loops::energy;
use loopgeo_core::morse::{analyze_critical_loop, AnalysisOptions, Assembly, Verdict};
use loopgeo_core::variational::descend;
use loopgeo_core::{CriticalCase, DiscreteLoop, Error, LoopRecord, MetricChart};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::{Failure, Outcome, RunConfig};

/// Loops below this energy count as constant.
pub const CONSTANT_ENERGY: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    /// Starts that converged to this point, in start order.
    pub starts: Vec<usize>,
    pub constant: bool,
    pub case: CriticalCase,
    pub energy: f64,
    pub penalized_energy: f64,
    pub basepoint_r: Option<f64>,
    pub winding: Vec<Option<i64>>,
    pub gradient_norm: f64,
    pub index: usize,
    pub nullity: usize,
    pub ambiguous: bool,
    pub cp1: usize,
    pub index_bound: Verdict,
    pub corner_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bott_holds: Option<bool>,
    #[serde(rename = "loop")]
    pub lp: LoopRecord,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailedStart {
    pub start: usize,
    pub error: String,
}

/// Per-start random generator: stream `i` of the base seed.
pub fn start_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

fn harmonics(rng: &mut ChaCha8Rng, amp: f64) -> [(f64, f64); 3] {
    std::array::from_fn(|k| {
        (
            amp * rng.random_range(-1.0..1.0) / (k + 1) as f64,
            rng.random_range(0.0..2.0 * PI),
        )
    })
}

fn wiggle(h: &[(f64, f64); 3], t: f64) -> f64 {
    h.iter()
        .enumerate()
        .map(|(k, (a, p))| a * (2.0 * PI * (k + 1) as f64 * t + p).sin())
        .sum()
}

/// Random start `i`: a perturbed parallel of random winding on surfaces of
/// revolution, a perturbed small circle elsewhere.
pub fn random_start(chart: &dyn MetricChart, cfg: &RunConfig, i: usize) -> Result<DiscreteLoop, Error> {
    let mut rng = start_rng(cfg.seed, i);
    let f = &cfg.find;
    let r_max = f.r_max.unwrap_or(cfg.schedule().radius(cfg.alpha) + 1.0);
    let x0 = chart.sample_point(&mut rng, 0.0, r_max);
    let amp = f.amplitude;
    let n = cfg.nodes;
    if chart.period(1).is_some() {
        let w = f.windings[rng.random_range(0..f.windings.len())];
        let (hs, ht) = (harmonics(&mut rng, amp), harmonics(&mut rng, amp));
        // Keep the radial coordinate positive on charts that stop at s = 0.
        let s0 = if chart.contains(&[-1.0, 0.0]) {
            x0[0]
        } else {
            x0[0].max(2.0 * amp + 0.1)
        };
        return DiscreteLoop::from_fn(chart, n, |t| {
            vec![s0 + wiggle(&hs, t), x0[1] + 2.0 * PI * w as f64 * t + wiggle(&ht, t)]
        });
    }
    let d = chart.dim();
    let hs: Vec<[(f64, f64); 3]> = (0..d).map(|_| harmonics(&mut rng, 0.3 * amp)).collect();
    let rho = amp * rng.random_range(0.2..1.0);
    let mut scale = 1.0;
    loop {
        let lp = DiscreteLoop::from_fn(chart, n, |t| {
            (0..d)
                .map(|k| {
                    let circle = match k {
                        0 => rho * (2.0 * PI * t).cos(),
                        1 => rho * (2.0 * PI * t).sin(),
                        _ => 0.0,
                    };
                    x0[k] + scale * (circle + wiggle(&hs[k], t))
                })
                .collect()
        });
        match lp {
            Err(Error::OutsideDomain { .. }) if scale > 1e-3 => scale *= 0.5,
            other => return other,
        }
    }
}

enum StartOutcome {
    Found(Box<CriticalPoint>),
    Failed(String),
    Mismatch(String),
}

fn run_start(chart: &dyn MetricChart, cfg: &RunConfig, i: usize) -> StartOutcome {
    let sched = cfg.schedule();
    let start = match random_start(chart, cfg, i) {
        Ok(lp) => lp,
        Err(e) => return StartOutcome::Failed(format!("start generation: {e}")),
    };
    let lp = match descend(chart, &sched, cfg.alpha, &start, &cfg.descent_options()) {
        Ok((lp, _)) => lp,
        Err(e) => return StartOutcome::Failed(e.to_string()),
    };
    let opts = AnalysisOptions {
        method: Assembly::ExactDiscrete,
        zero_band: None,
        ell: cfg.ell,
        k_radius: None,
        m_max: cfg.find.m_max,
        cross_method: false,
    };
    let rep = match analyze_critical_loop(chart, &sched, cfg.alpha, &lp, &opts) {
        Ok(r) => r,
        Err(e @ Error::OracleMismatch(_)) => return StartOutcome::Mismatch(format!("start {i}: {e}")),
        Err(e) => return StartOutcome::Failed(format!("analysis: {e}")),
    };
    let e = energy(chart, &lp).unwrap_or(f64::NAN);
    StartOutcome::Found(Box::new(CriticalPoint {
        starts: vec![i],
        constant: e < CONSTANT_ENERGY,
        case: rep.classification.case,
        energy: e,
        penalized_energy: rep.classification.penalized_energy,
        basepoint_r: rep.classification.basepoint_r,
        winding: lp.winding_numbers(chart),
        gradient_norm: rep.gradient_norm,
        index: rep.inertia.index,
        nullity: rep.inertia.nullity,
        ambiguous: rep.inertia.ambiguous,
        cp1: rep.cp1,
        index_bound: rep.index_bound.verdict,
        corner_residual: rep.corner_residual,
        bott_holds: rep.bott.map(|b| b.holds),
        lp: lp.to_record(chart),
    }))
}

fn same_point(a: &CriticalPoint, b: &CriticalPoint, tol_e: f64, tol_r: f64) -> bool {
    let radius = match (a.basepoint_r, b.basepoint_r) {
        (Some(x), Some(y)) => (x - y).abs() <= tol_r,
        (None, None) => true,
        _ => false,
    };
    a.index == b.index && radius && (a.energy - b.energy).abs() <= tol_e * a.energy.abs().max(1.0)
}

/// Folds points in start order; the first occurrence of a signature is kept.
pub fn deduplicate(found: Vec<CriticalPoint>, tol_e: f64, tol_r: f64) -> Vec<CriticalPoint> {
    let mut out: Vec<CriticalPoint> = Vec::new();
    for p in found {
        match out.iter_mut().find(|q| same_point(q, &p, tol_e, tol_r)) {
            Some(q) => q.starts.extend(p.starts),
            None => out.push(p),
        }
    }
    out
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let chart = cfg.chart.build()?;
    let chart = chart.as_ref();
    let outcomes: Vec<StartOutcome> = (0..cfg.find.starts)
        .into_par_iter()
        .map(|i| run_start(chart, cfg, i))
        .collect();
    let mut found = Vec::new();
    let mut failed = Vec::new();
    let mut assertions = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            StartOutcome::Found(p) => found.push(*p),
            StartOutcome::Failed(error) => failed.push(FailedStart { start: i, error }),
            StartOutcome::Mismatch(m) => assertions.push(m),
        }
    }
    let converged = found.len();
    let points = deduplicate(found, cfg.find.dedup_energy, cfg.find.dedup_radius);
    let checked: Vec<usize> = (0..points.len()).filter(|&k| points[k].cp1 == 0).collect();
    let violations: Vec<usize> = (0..points.len())
        .filter(|&k| points[k].index_bound == Verdict::Fail)
        .collect();
    for &k in &violations {
        let p = &points[k];
        assertions.push(format!(
            "critical point {k} has no conjugate points but index {} + nullity {} exceeds {}",
            p.index, p.nullity, p.lp.dim
        ));
    }
    let bott_failures: Vec<usize> = (0..points.len())
        .filter(|&k| points[k].bott_holds == Some(false))
        .collect();
    if !bott_failures.is_empty() {
        assertions.push(format!("iteration inequalities fail at points {bott_failures:?}"));
    }
    let count = |f: &dyn Fn(&CriticalPoint) -> bool| points.iter().filter(|p| f(p)).count();
    let constant = count(&|p| p.constant);
    let genuine_nonconstant = count(&|p| !p.constant && p.case == CriticalCase::Genuine);
    let penalty_supported = count(&|p| p.case == CriticalCase::PenaltySupported);
    let summary = format!(
        "find on {}: {} starts, {converged} converged, {} distinct ({constant} constant, {genuine_nonconstant} nonconstant genuine, {penalty_supported} penalty-supported)",
        cfg.chart.name,
        cfg.find.starts,
        points.len()
    );
    let result = json!({
        "starts": cfg.find.starts,
        "converged": converged,
        "failed": failed,
        "distinct": points.len(),
        "constant": constant,
        "nonconstant_genuine": genuine_nonconstant,
        "penalty_supported": penalty_supported,
        "index_bound": { "checked": checked.len(), "violations": violations },
        "points": points,
    });
    Ok(Outcome {
        result,
        assertions,
        summary,
    })
}
