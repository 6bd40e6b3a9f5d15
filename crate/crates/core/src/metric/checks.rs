//! Sampled consistency checks of a chart: positivity of `g`, analytic against
//! finite-difference Christoffel symbols and curvature, tensor symmetries and
//! properness of the exhaustion along coordinate rays.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::zoo::gaussian;
use super::{christoffels_at, riemann_at, riemann_fd, sectional_curvature_with, ChartPoint, MetricChart, MetricJet};
use crate::error::Result;

/// Agreement required between analytic and finite-difference Christoffels.
pub const CHRISTOFFEL_TOLERANCE: f64 = 1e-6;
/// Relative agreement required between closed-form and finite-difference curvature.
pub const CURVATURE_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTestReport {
    pub chart: String,
    pub samples: usize,
    pub min_eigenvalue: f64,
    /// Largest relative deviation of Γ from central differences of `g`.
    pub christoffel_error: f64,
    /// Largest relative deviation of closed-form from finite-difference sectional curvature.
    pub curvature_error: f64,
    /// Largest relative violation of `R(v,w,w,v) = R(w,v,v,w)`.
    pub pair_exchange_error: f64,
    /// `None` for compact charts.
    pub exhaustion_proper: Option<bool>,
    pub passed: bool,
}

fn metric(chart: &dyn MetricChart, x: &[f64], jet: &mut MetricJet) -> DMatrix<f64> {
    chart.eval(x, 0, jet);
    jet.g.clone()
}

fn christoffel_error(chart: &dyn MetricChart, x: &[f64], jet: &mut MetricJet) -> f64 {
    let d = chart.dim();
    let h = 1e-5;
    let dg: Vec<DMatrix<f64>> = (0..d)
        .map(|k| {
            let (mut p, mut m) = (x.to_vec(), x.to_vec());
            p[k] += h;
            m[k] -= h;
            (metric(chart, &p, jet) - metric(chart, &m, jet)) / (2.0 * h)
        })
        .collect();
    let Some(ginv) = metric(chart, x, jet).try_inverse() else {
        return f64::INFINITY;
    };
    let gam = christoffels_at(chart, x);
    let mut worst = 0.0f64;
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                let fd: f64 = (0..d)
                    .map(|l| 0.5 * ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]))
                    .sum();
                worst = worst.max((gam.get(k, i, j) - fd).abs() / fd.abs().max(1.0));
            }
        }
    }
    worst
}

/// Coordinate rays used for the properness check: straight lines from the
/// origin, pulled back into the unit ball for bounded charts.
fn ray_point(chart: &dyn MetricChart, dir: &[f64], s: f64) -> Vec<f64> {
    if chart.period(1).is_some() {
        let mut x = vec![0.0; chart.dim()];
        x[0] = if chart.contains(&[-1.0, 0.0]) {
            dir[0].signum() * s
        } else {
            s
        };
        return x;
    }
    if chart.contains(&[1e3; 1].repeat(chart.dim())) {
        dir.iter().map(|c| c * s).collect()
    } else {
        dir.iter().map(|c| c * (1.0 - (-s).exp())).collect()
    }
}

/// Lower end of the sampled exhaustion range as a fraction of `r_max`. Polar
/// charts carry Christoffels of order `1/ρ`, whose finite differences lose
/// accuracy like `(h/ρ)²` near the axis.
pub const SELF_TEST_INNER: f64 = 0.05;

/// Runs every check on `samples` seeded points drawn with exhaustion in
/// `(SELF_TEST_INNER · r_max, r_max)`.
pub fn chart_self_test(chart: &dyn MetricChart, samples: usize, r_max: f64, seed: u64) -> Result<SelfTestReport> {
    let d = chart.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jet = MetricJet::new(d);
    let mut min_eig = f64::INFINITY;
    let (mut ce, mut ke, mut pe) = (0.0f64, 0.0f64, 0.0f64);
    let mut used = 0;
    for _ in 0..samples.max(1) {
        let x = chart.sample_point(&mut rng, SELF_TEST_INNER * r_max, r_max);
        if !chart.contains(&x) {
            continue;
        }
        used += 1;
        min_eig = min_eig.min(metric(chart, &x, &mut jet).symmetric_eigenvalues().min());
        ce = ce.max(christoffel_error(chart, &x, &mut jet));
        let p = ChartPoint::new(chart, x.clone())?;
        let exact = riemann_at(chart, &x, &mut jet);
        let fd = riemann_fd(chart, &p)?;
        let v: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
        let w: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
        if let (Ok(a), Ok(b)) = (
            sectional_curvature_with(chart, &p, &exact, &v, &w),
            sectional_curvature_with(chart, &p, &fd, &v, &w),
        ) {
            // Weighting by sin² of the plane angle measures the tensor error
            // rather than its amplification on nearly degenerate planes.
            chart.eval(&x, 0, &mut jet);
            let (vv, ww, vw) = (jet.inner(&v, &v), jet.inner(&w, &w), jet.inner(&v, &w));
            let sin2 = (vv * ww - vw * vw) / (vv * ww);
            ke = ke.max((a - b).abs() * sin2 / a.abs().max(1.0));
        }
        chart.eval(&x, 0, &mut jet);
        let mut out = vec![0.0; d];
        fd.apply(&v, &w, &w, &mut out);
        let a = jet.inner(&out, &v);
        fd.apply(&w, &v, &v, &mut out);
        let b = jet.inner(&out, &w);
        pe = pe.max((a - b).abs() / a.abs().max(1.0));
    }
    let exhaustion_proper = (!chart.is_compact()).then(|| {
        (0..8).all(|_| {
            let mut dir: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
            let n = dir.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-300);
            dir.iter_mut().for_each(|c| *c /= n);
            let rs: Vec<f64> = [1.0, 4.0, 16.0, 30.0]
                .iter()
                .map(|&s| chart.exhaustion(&ray_point(chart, &dir, s)).map_or(f64::NAN, |e| e.r))
                .collect();
            rs.windows(2).all(|p| p[1] > p[0]) && rs[3] > 25.0
        })
    });
    let passed = used > 0
        && min_eig > 0.0
        && ce < CHRISTOFFEL_TOLERANCE
        && ke < CURVATURE_TOLERANCE
        && pe < CURVATURE_TOLERANCE
        && exhaustion_proper.unwrap_or(true);
    Ok(SelfTestReport {
        chart: chart.name().to_string(),
        samples: used,
        min_eigenvalue: min_eig,
        christoffel_error: ce,
        curvature_error: ke,
        pair_exchange_error: pe,
        exhaustion_proper,
        passed,
    })
}
