//! Desk-scale acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are printed on every run.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command as Process;
use std::time::Instant;

use loopgeo_cli::without_timestamp;
use loopgeo_core::jacobi::{conjugate_points, DEFAULT_STEPS};
use loopgeo_core::loops::{circle_polygon, energy, parallel_circle};
use loopgeo_core::morse::bott_check;
use loopgeo_core::{ChartPoint, ChartSpec, MetricChart, TangentVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const FOUR_PI2: f64 = 4.0 * PI * PI;

/// Every binary run, kept for the reproducibility criterion.
struct Runs<'a> {
    dir: &'a Path,
    log: Vec<(String, Vec<String>, Value)>,
}

impl Runs<'_> {
    fn run(&mut self, label: &str, cmd: &str, toml: &str) -> (i32, Value) {
        let cfg = format!("{label}.toml");
        std::fs::write(self.dir.join(&cfg), toml).unwrap();
        let args = vec![cmd.to_string(), "--quiet".into(), "--config".into(), cfg];
        let (code, json) = invoke(self.dir, &args);
        self.log.push((label.to_string(), args, json.clone()));
        (code, json)
    }
}

fn invoke(dir: &Path, args: &[String]) -> (i32, Value) {
    let out = Process::new(env!("CARGO_BIN_EXE_loopgeo"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs");
    let json = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (out.status.code().unwrap_or(-1), json)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn chart(name: &str) -> Box<dyn MetricChart> {
    ChartSpec::named(name).build().unwrap()
}

fn energy_convergence() -> (bool, String) {
    let plane = chart("plane");
    let mut errors = Vec::new();
    let mut exact = true;
    for n in [64usize, 128, 256] {
        let e = energy(
            plane.as_ref(),
            &circle_polygon(plane.as_ref(), &[0.0, 0.0], 1.0, n).unwrap(),
        )
        .unwrap();
        let chord = 4.0 * (n * n) as f64 * (PI / n as f64).sin().powi(2);
        exact &= rel(e, chord) < 1e-12;
        errors.push((e - FOUR_PI2).abs());
    }
    let ratios = [errors[0] / errors[1], errors[1] / errors[2]];
    let ok = exact && ratios.iter().all(|r| (3.5..=4.5).contains(r));
    (
        ok,
        format!(
            "E matches 4N²sin²(π/N); error ratios {:.4}, {:.4}",
            ratios[0], ratios[1]
        ),
    )
}

fn sphere_minimax(runs: &mut Runs) -> (bool, String) {
    let t = Instant::now();
    let (code, rep) = runs.run(
        "birkhoff",
        "sweep",
        "chart = { name = \"sphere\" }\nnodes = 128\n[sweep.family]\nkind = \"birkhoff\"\nmembers = 33\n",
    );
    let secs = t.elapsed().as_secs_f64();
    let r = &rep["result"];
    let value = r["value"].as_f64().unwrap_or(f64::NAN);
    let gnorm = r["argmax_gradient_norm"].as_f64().unwrap_or(f64::NAN);
    let ok = code == 0 && rel(value, FOUR_PI2) < 0.01 && gnorm < 1e-3 && secs < 60.0;
    (
        ok,
        format!(
            "value {value:.6} ({:.3}% off 4π²), gradient norm {gnorm:.2e}, {secs:.1} s",
            100.0 * rel(value, FOUR_PI2)
        ),
    )
}

fn great_circle_counts(runs: &mut Runs) -> (bool, String) {
    let (code, rep) = runs.run(
        "great_circle",
        "analyze",
        "chart = { name = \"sphere\" }\nnodes = 256\n[analyze]\nm_max = 0\n",
    );
    let r = &rep["result"]["report"];
    let (ind, nul) = (&r["inertia"]["index"], &r["inertia"]["nullity"]);
    let mono = &r["monodromy_nullity"];
    let (dir, conj) = (&r["based"]["dirichlet_index"], &r["based"]["conjugate"]["total"]);
    let ok = code == 0 && *ind == 1 && *nul == 3 && *mono == 3 && *dir == 1 && *conj == 1;
    (
        ok,
        format!(
            "(ind, nul) = ({ind}, {nul}), monodromy nullity {mono}, Dirichlet index {dir} = conjugate count {conj}"
        ),
    )
}

fn conjugate_points_criterion() -> (bool, String) {
    let sphere = chart("sphere");
    // Unit-speed-per-period equator through (1, 0), where the metric is the identity.
    let start = TangentVector::new(
        ChartPoint::new(sphere.as_ref(), vec![1.0, 0.0]).unwrap(),
        vec![0.0, 2.0 * PI],
    )
    .unwrap();
    let rep = conjugate_points(sphere.as_ref(), &start, 1.0, DEFAULT_STEPS).unwrap();
    let times: Vec<f64> = rep.points.iter().map(|p| p.time).collect();
    let located = times.len() == 2 && (times[0] - 0.5).abs() < 1e-3 && (times[1] - 1.0).abs() < 1e-3;
    let mut flat_counts = Vec::new();
    for (name, seed, len) in [("plane", 1u64, 20.0), ("hyperbolic", 2, 5.0)] {
        let c = chart(name);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = 0;
        for _ in 0..200 {
            let x = c.sample_point(&mut rng, 0.0, 3.0);
            let ang = rng.random_range(0.0..2.0 * PI);
            let l = rng.random_range(0.5..len);
            let p = ChartPoint::new(c.as_ref(), x).unwrap();
            let mut jet = loopgeo_core::metric::MetricJet::new(2);
            c.eval(p.coords(), 0, &mut jet);
            let dir = [ang.cos(), ang.sin()];
            let scale = l / jet.inner(&dir, &dir).sqrt();
            let start = TangentVector::new(p, dir.iter().map(|d| d * scale).collect()).unwrap();
            total += conjugate_points(c.as_ref(), &start, 1.0, 512).unwrap().total;
        }
        flat_counts.push(total);
    }
    let ok = rep.total == 2 && located && flat_counts == [0, 0];
    (
        ok,
        format!(
            "great circle cp₁ = {} at times {times:?}; plane and hyperbolic totals over 200 segments {flat_counts:?}",
            rep.total
        ),
    )
}

fn bott_criterion() -> (bool, String) {
    let sphere = chart("sphere");
    let n = 64;
    let great = circle_polygon(sphere.as_ref(), &[0.0, 0.0], 1.0 / (PI / n as f64).cos(), n).unwrap();
    let t = bott_check(sphere.as_ref(), &great, 6).unwrap();
    let equality = t.rows.iter().all(|r| r.right_gap.abs() < 1e-9);
    let both = t.rows.iter().all(|r| r.left_holds && r.right_holds);
    let cyl = chart("cylinder");
    let c = bott_check(cyl.as_ref(), &parallel_circle(cyl.as_ref(), 0.0, 1, n).unwrap(), 6).unwrap();
    let ok = both
        && t.holds
        && (t.average_index - 2.0).abs() <= 0.05
        && equality
        && c.holds
        && c.average_index.abs() < 1e-12;
    let idx: Vec<usize> = t.rows.iter().map(|r| r.index).collect();
    (
        ok,
        format!(
            "sphere ind(γᵐ) = {idx:?}, ī = {:.6}, right gap zero at every m: {equality}; cylinder ī = {}",
            t.average_index, c.average_index
        ),
    )
}

fn index_bound_census(runs: &mut Runs) -> (bool, String, Value) {
    let mut total = 0;
    let mut checked = 0;
    let mut violations = 0;
    let mut codes = Vec::new();
    let mut plane = Value::Null;
    for name in ["cylinder", "funnel", "bumped_cylinder", "plane"] {
        let (code, rep) = runs.run(
            &format!("find_{name}"),
            "find",
            &format!("chart = {{ name = \"{name}\" }}\n[find]\nstarts = 50\n"),
        );
        codes.push(code);
        let points = rep["result"]["points"].as_array().cloned().unwrap_or_default();
        total += points.len();
        for p in &points {
            if p["cp1"] == 0 {
                checked += 1;
                let sum = p["index"].as_u64().unwrap() + p["nullity"].as_u64().unwrap();
                if sum > 2 {
                    violations += 1;
                }
            }
        }
        if name == "plane" {
            plane = rep;
        }
    }
    let ok = codes.iter().all(|&c| c == 0) && total >= 50 && violations == 0;
    (
        ok,
        format!(
            "{total} distinct critical points, {checked} with cp₁ = 0, {violations} violations, exit codes {codes:?}"
        ),
        plane,
    )
}

fn penalization(runs: &mut Runs, plane: &Value) -> (bool, String) {
    let (code, rep) = runs.run(
        "funnel_continuation",
        "sweep",
        "chart = { name = \"funnel\" }\nalpha = 0\nalpha_max = 5\n[sweep.family]\nkind = \"winding\"\nmembers = 9\nhalf_height = 1.5\n",
    );
    let r = &rep["result"];
    let values: Vec<f64> = r["values"]
        .as_array()
        .into_iter()
        .flatten()
        .filter_map(|v| v[1].as_f64())
        .collect();
    let monotone = values.len() == 6 && values.windows(2).all(|w| w[1] <= w[0] + 1e-4);
    let genuine = r["classification"]["case"] == "genuine";
    let e = r["energy"].as_f64().unwrap_or(f64::NAN);
    let corner = r["corner_residual"].as_f64().unwrap_or(f64::NAN);
    let control = plane["result"]["nonconstant_genuine"].as_u64();
    let starts = plane["result"]["starts"].as_u64();
    let ok = code == 0
        && monotone
        && genuine
        && rel(e, FOUR_PI2) < 0.01
        && corner < 1e-2
        && control == Some(0)
        && starts == Some(50);
    (
        ok,
        format!(
            "values {values:.6?}, terminal {} with E {e:.6}, corner residual {corner:.2e}; plane control: {} nonconstant genuine in {} starts",
            r["classification"]["case"],
            control.unwrap_or(u64::MAX),
            starts.unwrap_or(0)
        ),
    )
}

fn close_conjugate_consistency(runs: &mut Runs) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    let mut paraboloid_radius = f64::NAN;
    for name in ["paraboloid", "bumped_cylinder"] {
        let (code, rep) = runs.run(
            &format!("verify_{name}"),
            "verify",
            &format!(
                "chart = {{ name = \"{name}\" }}\n[verify]\nells = [5.0, 10.0, 20.0]\nk_radii = [0.5, 1.0, 1.5, 3.0]\nsamples = 500\n"
            ),
        );
        let checks = rep["result"]["checks"].as_array().cloned().unwrap_or_default();
        let passing: Vec<&Value> = checks.iter().filter(|c| c["curvature"]["passed"] == true).collect();
        let implied = passing.iter().all(|c| c["direct"]["passed"] == true);
        let full = checks.iter().all(|c| c["direct"]["samples"] == 500);
        ok &= code == 0 && !passing.is_empty() && implied && full && rep["result"]["self_test"]["passed"] == true;
        parts.push(format!(
            "{name}: {} of {} pairs pass the curvature test, all pass directly: {implied}",
            passing.len(),
            checks.len()
        ));
        if name == "paraboloid" {
            let t = rep["result"]["thresholds"].as_array().cloned().unwrap_or_default();
            paraboloid_radius = t
                .iter()
                .find(|t| t["ell"] == 10.0)
                .and_then(|t| t["radius"].as_f64())
                .unwrap_or(f64::NAN);
        }
    }
    // K = 4/(1+4ρ²)² falls to (π/ℓ)² at 4ρ² = 2ℓ/π − 1.
    let oracle = ((2.0 * 10.0 / PI - 1.0) / 4.0).sqrt();
    ok &= rel(paraboloid_radius, oracle) < 0.05;
    parts.push(format!(
        "paraboloid ρ*(ℓ = 10) = {paraboloid_radius:.6} against {oracle:.6}"
    ));
    (ok, parts.join("; "))
}

fn determinism(runs: &Runs) -> (bool, String) {
    let mut differing = Vec::new();
    for (label, args, first) in &runs.log {
        let (_, again) = invoke(runs.dir, args);
        if first.is_null() || without_timestamp(first) != without_timestamp(&again) {
            differing.push(label.clone());
        }
    }
    (
        differing.is_empty(),
        format!("{} reports rerun, differing: {differing:?}", runs.log.len()),
    )
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Runs {
        dir: dir.path(),
        log: Vec::new(),
    };
    let mut results: Vec<(&str, bool, String)> = Vec::new();
    let mut record = |id: &'static str, (ok, detail): (bool, String)| {
        println!("{} {id}: {detail}", if ok { "PASS" } else { "FAIL" });
        results.push((id, ok, detail));
    };
    record("1 energy convergence", energy_convergence());
    record("2 sphere minimax", sphere_minimax(&mut runs));
    record("3 great circle index and nullity", great_circle_counts(&mut runs));
    record("4 conjugate points", conjugate_points_criterion());
    record("5 iteration inequalities", bott_criterion());
    let (ok, detail, plane) = index_bound_census(&mut runs);
    record("6 index bound without conjugate points", (ok, detail));
    record("7 penalization mechanism", penalization(&mut runs, &plane));
    record(
        "8 close conjugate points consistency",
        close_conjugate_consistency(&mut runs),
    );
    record("9 determinism", determinism(&runs));
    let failed: Vec<&str> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria pass",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        eprintln!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
