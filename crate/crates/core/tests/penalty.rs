use std::f64::consts::PI;

use proptest::prelude::*;

use loopgeo_core::loops::{energy, parallel_circle};
use loopgeo_core::metric::{geodesic_flow, MetricJet};
use loopgeo_core::penalty::{
    classify_critical_point, corner_residual, penalized_energy, penalty_gradient_and_hessian, KReport,
};
use loopgeo_core::variational::{descend, DescentOptions};
use loopgeo_core::{ChartPoint, ChartSpec, CriticalCase, DiscreteLoop, MetricChart, PenaltySchedule, TangentVector};

fn chart(name: &str) -> Box<dyn MetricChart> {
    ChartSpec::named(name).build().unwrap()
}

fn loop_based_at(chart: &dyn MetricChart, z: f64, wobble: f64) -> DiscreteLoop {
    DiscreteLoop::from_fn(chart, 32, |t| {
        let s = 2.0 * PI * t;
        vec![z + wobble * s.sin(), s]
    })
    .unwrap()
}

#[test]
fn penalty_vanishes_inside_and_ramps_outside() {
    let cyl = chart("cylinder");
    let sched = PenaltySchedule::new(2.0, 1.0, 1.0).unwrap();
    let inside = loop_based_at(cyl.as_ref(), 1.5, 0.3);
    assert_eq!(
        penalized_energy(cyl.as_ref(), &sched, 0, &inside).unwrap(),
        energy(cyl.as_ref(), &inside).unwrap()
    );
    let outside = loop_based_at(cyl.as_ref(), 3.0, 0.3);
    let e = energy(cyl.as_ref(), &outside).unwrap();
    assert!((penalized_energy(cyl.as_ref(), &sched, 0, &outside).unwrap() - (e + 1.0)).abs() < 1e-12);
    let d = penalty_gradient_and_hessian(cyl.as_ref(), &sched, 0, &[1.0, 0.0]).unwrap();
    assert!(d.value == 0.0 && d.gradient.iter().all(|g| *g == 0.0) && d.hessian.iter().all(|h| *h == 0.0));
}

#[test]
fn plane_ramp_gradient() {
    let plane = chart("plane");
    let sched = PenaltySchedule::new(4.0, 1.0, 1.0).unwrap();
    let d = penalty_gradient_and_hessian(plane.as_ref(), &sched, 2, &[7.0, 0.0]).unwrap();
    assert!((d.gradient[0] - 3.0).abs() < 1e-12 && d.gradient[1].abs() < 1e-12);
}

#[test]
fn sphere_has_no_penalty() {
    let sphere = chart("sphere");
    let sched = PenaltySchedule::new(0.0, 1.0, 1.0).unwrap();
    assert_eq!(sched.value(sphere.as_ref(), 0, &[3.0, 1.0]), 0.0);
}

#[test]
fn supports_escape_every_compact_ball() {
    let funnel = chart("funnel");
    let sched = PenaltySchedule::default();
    let ball = 12.5;
    let alpha0 = ((ball - sched.r0) / sched.dr).floor() as usize + 1;
    for k in 0..200 {
        let x = [ball * (2.0 * (k as f64) / 200.0 - 1.0), k as f64 * 0.1];
        assert_eq!(sched.value(funnel.as_ref(), alpha0, &x), 0.0);
    }
    assert!(sched.value(funnel.as_ref(), alpha0 - 1, &[ball, 0.0]) > 0.0);
}

#[test]
fn corner_residuals_of_smooth_and_constant_loops() {
    let funnel = chart("funnel");
    let sched = PenaltySchedule::default();
    let waist = parallel_circle(funnel.as_ref(), 0.0, 1, 256).unwrap();
    assert!(corner_residual(funnel.as_ref(), &sched, 0, &waist).unwrap().norm < 1e-3);
    let point = DiscreteLoop::constant(funnel.as_ref(), &[1.0, 2.0], 16).unwrap();
    assert_eq!(corner_residual(funnel.as_ref(), &sched, 0, &point).unwrap().norm, 0.0);
}

#[test]
fn classification_follows_the_basepoint() {
    let funnel = chart("funnel");
    let sched = PenaltySchedule::new(5.0, 1.0, 1.0).unwrap();
    let waist = parallel_circle(funnel.as_ref(), 0.0, 1, 128).unwrap();
    let c = classify_critical_point(funnel.as_ref(), &sched, 0, &waist, 10.0, None).unwrap();
    assert_eq!(c.case, CriticalCase::Genuine);
    assert!(c.below_level && c.containment.is_none());

    let far = loop_based_at(funnel.as_ref(), 6.0, 0.0);
    let sep = PenaltySchedule::new(4.0, 1.0, 1.0).unwrap();
    let c = classify_critical_point(funnel.as_ref(), &sep, 0, &far, 1.0, Some(KReport { radius: 2.5 })).unwrap();
    assert_eq!(c.case, CriticalCase::PenaltySupported);
    let k = c.containment.unwrap();
    assert!(k.separated && k.contained == Some(true));
    let c = classify_critical_point(funnel.as_ref(), &sep, 0, &far, 3.0, Some(KReport { radius: 2.5 })).unwrap();
    assert!(!c.containment.unwrap().separated);
}

#[test]
fn penalty_supported_residual_shrinks_under_refinement() {
    let chart = chart("bumped_cylinder");
    let sched = PenaltySchedule::new(0.6, 1.0, 1.0).unwrap();
    let opts = DescentOptions::default();
    let start = parallel_circle(chart.as_ref(), 0.8, 1, 64).unwrap();
    let (coarse, _) = descend(chart.as_ref(), &sched, 0, &start, &opts).unwrap();
    let (fine, _) = descend(
        chart.as_ref(),
        &sched,
        0,
        &coarse.refined(chart.as_ref()).unwrap(),
        &opts,
    )
    .unwrap();
    let r64 = corner_residual(chart.as_ref(), &sched, 0, &coarse).unwrap().norm;
    let r128 = corner_residual(chart.as_ref(), &sched, 0, &fine).unwrap().norm;
    assert!(r64 < 1e-2 && r128 < r64, "{r64} {r128}");
    let c = classify_critical_point(chart.as_ref(), &sched, 0, &fine, 10.0, None).unwrap();
    assert_eq!(c.case, CriticalCase::PenaltySupported);
}

fn unit_tangent(chart: &dyn MetricChart, x: &[f64], angle: f64) -> TangentVector {
    let mut jet = MetricJet::new(2);
    chart.eval(x, 0, &mut jet);
    let v = vec![angle.cos() / jet.g[(0, 0)].sqrt(), angle.sin() / jet.g[(1, 1)].sqrt()];
    TangentVector::new(ChartPoint::new(chart, x.to_vec()).unwrap(), v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn penalized_energies_decrease_in_alpha(which in 0usize..4, z in 0.0f64..4.0, w in 0.0f64..0.5, alpha in 0usize..6) {
        let c = chart(["cylinder", "funnel", "bumped_cylinder", "paraboloid"][which]);
        let z = if which == 3 { z + 0.6 } else { z };
        let lp = loop_based_at(c.as_ref(), z, w);
        let sched = PenaltySchedule::new(0.5, 0.7, 2.0).unwrap();
        let e = energy(c.as_ref(), &lp).unwrap();
        let a = penalized_energy(c.as_ref(), &sched, alpha, &lp).unwrap();
        let b = penalized_energy(c.as_ref(), &sched, alpha + 1, &lp).unwrap();
        prop_assert!(a >= b && b >= e);
    }

    #[test]
    fn covariant_hessian_is_the_second_derivative_along_geodesics(z in 1.2f64..3.0, th in 0.0..2.0 * PI, angle in 0.0..2.0 * PI) {
        let funnel = chart("funnel");
        let sched = PenaltySchedule::new(1.0, 1.0, 1.0).unwrap();
        let x = [z, th];
        let s = unit_tangent(funnel.as_ref(), &x, angle);
        let ft = |t: f64| {
            if t == 0.0 {
                return sched.value(funnel.as_ref(), 0, &x);
            }
            let back = TangentVector::new(s.base.clone(), s.v.iter().map(|c| c * t.signum()).collect()).unwrap();
            let e = geodesic_flow(funnel.as_ref(), &back, t.abs(), 64).unwrap();
            sched.value(funnel.as_ref(), 0, e.base.coords())
        };
        let h = 1e-3;
        let oracle = (ft(h) - 2.0 * ft(0.0) + ft(-h)) / (h * h);
        let d = penalty_gradient_and_hessian(funnel.as_ref(), &sched, 0, &x).unwrap();
        let v = nalgebra::DVector::from_vec(s.v.clone());
        let exact = v.dot(&(&d.hessian * &v));
        prop_assert!((exact - oracle).abs() < 1e-5 * exact.abs().max(1.0), "{exact} vs {oracle}");
    }

    #[test]
    fn coordinate_hessian_matches_gradient_differences(z in 1.2f64..3.0, th in 0.0..2.0 * PI) {
        let funnel = chart("funnel");
        let sched = PenaltySchedule::new(1.0, 1.0, 1.0).unwrap();
        let d = penalty_gradient_and_hessian(funnel.as_ref(), &sched, 0, &[z, th]).unwrap();
        let eps = 1e-6;
        for k in 0..2 {
            let (mut p, mut m) = ([z, th], [z, th]);
            p[k] += eps;
            m[k] -= eps;
            let dp = penalty_gradient_and_hessian(funnel.as_ref(), &sched, 0, &p).unwrap().differential;
            let dm = penalty_gradient_and_hessian(funnel.as_ref(), &sched, 0, &m).unwrap().differential;
            for i in 0..2 {
                let fd = (dp[i] - dm[i]) / (2.0 * eps);
                let want = d.coordinate_hessian[(i, k)];
                prop_assert!((fd - want).abs() < 1e-5 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn plane_penalty_hessian_is_positive_semidefinite(rho in 2.0f64..6.0, th in 0.0..2.0 * PI) {
        let plane = chart("plane");
        let sched = PenaltySchedule::new(2.0, 1.0, 1.0).unwrap();
        let d = penalty_gradient_and_hessian(plane.as_ref(), &sched, 0, &[rho * th.cos(), rho * th.sin()]).unwrap();
        prop_assert!(d.hessian.symmetric_eigenvalues().min() >= -1e-10);
    }
}
