//! Chart self-tests and the close-conjugate-points check.

use std::f64::consts::PI;

use loopgeo_core::jacobi::{close_conjugate_points_check, rauch_threshold_radius, CloseCheckOptions};
use loopgeo_core::metric::chart_self_test;
use serde_json::json;

use crate::{Failure, Outcome, RunConfig};

/// Self-test points are drawn with exhaustion below this radius, where finite
/// differences of every zoo metric are well conditioned.
pub const SELF_TEST_RADIUS: f64 = 3.0;

pub fn run(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let chart = cfg.chart.build()?;
    let chart = chart.as_ref();
    let v = &cfg.verify;
    let mut assertions = Vec::new();
    let self_test = chart_self_test(chart, v.self_test_samples, SELF_TEST_RADIUS, cfg.seed)?;
    if !self_test.passed {
        assertions.push(format!("chart self-test failed for {}", self_test.chart));
    }
    let ells = if v.ells.is_empty() {
        vec![cfg.ell]
    } else {
        v.ells.clone()
    };
    let mut thresholds = Vec::new();
    let mut checks = Vec::new();
    let mut implication_violations = 0;
    let skipped = chart
        .is_compact()
        .then_some("compact charts have no exhaustion to sample level sets of");
    if skipped.is_none() {
        for &ell in &ells {
            let radius = rauch_threshold_radius(chart, ell, v.r_max, cfg.seed)?;
            thresholds.push(json!({ "ell": ell, "curvature_bound": (PI / ell).powi(2), "radius": radius }));
            for &k in &v.k_radii {
                let opts = CloseCheckOptions {
                    n_samples: v.samples,
                    seed: cfg.seed,
                    shell: v.shell,
                    steps: v.steps,
                    ..CloseCheckOptions::default()
                };
                let rep = close_conjugate_points_check(chart, ell, k, &opts)?;
                if !rep.rauch_implies_direct {
                    implication_violations += 1;
                    assertions.push(format!(
                        "curvature criterion passes at ell {ell}, K radius {k} but sampled segments have conjugate points"
                    ));
                }
                checks.push(rep);
            }
        }
    }
    let summary = format!(
        "verify on {}: self-test {}, {} checks, {} implication violations",
        cfg.chart.name,
        if self_test.passed { "passed" } else { "failed" },
        checks.len(),
        implication_violations
    );
    let result = json!({
        "self_test": self_test,
        "skipped": skipped,
        "thresholds": thresholds,
        "checks": checks,
        "implication_violations": implication_violations,
    });
    Ok(Outcome {
        result,
        assertions,
        summary,
    })
}
