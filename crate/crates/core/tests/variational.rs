use std::f64::consts::PI;

use loopgeo_core::loops::{circle_polygon, energy, parallel_circle};
use loopgeo_core::variational::{
    descend, minimax_sweepout, penalty_continuation, DescentOptions, Penalized, Preconditioner, SweepOptions,
    SweepoutFamily,
};
use loopgeo_core::{ChartSpec, DiscreteLoop, PenaltySchedule};

fn wobbly_parallel(chart: &dyn loopgeo_core::MetricChart, z0: f64, n: usize) -> DiscreteLoop {
    DiscreteLoop::from_fn(chart, n, |t| {
        let a = 2.0 * PI * t;
        vec![z0 + 0.3 * (2.0 * a).sin() - 0.2 * (3.0 * a).cos(), a + 0.1 * a.sin()]
    })
    .unwrap()
}

#[test]
fn funnel_winding_loop_descends_to_the_waist() {
    let chart = ChartSpec::named("funnel").build().unwrap();
    let sched = PenaltySchedule::new(5.0, 1.0, 1.0).unwrap();
    let lp = wobbly_parallel(chart.as_ref(), 1.3, 128);
    let (out, rep) = descend(chart.as_ref(), &sched, 0, &lp, &DescentOptions::default()).unwrap();
    let e = energy(chart.as_ref(), &out).unwrap();
    assert!((e - 4.0 * PI * PI).abs() / (4.0 * PI * PI) < 0.01, "E = {e}");
    assert!(out.basepoint()[0].abs() < 1e-3);
    assert!(rep.gradient_norm < 1e-8);
    assert!(rep.max_increase <= 1e-10);
}

#[test]
fn contractible_plane_loop_shrinks_to_a_point() {
    let chart = ChartSpec::named("plane").build().unwrap();
    let sched = PenaltySchedule::new(50.0, 1.0, 1.0).unwrap();
    let lp = DiscreteLoop::from_fn(chart.as_ref(), 64, |t| {
        let a = 2.0 * PI * t;
        vec![1.0 + a.cos() + 0.3 * (2.0 * a).sin(), 0.5 * a.sin()]
    })
    .unwrap();
    let (out, _) = descend(chart.as_ref(), &sched, 0, &lp, &DescentOptions::default()).unwrap();
    assert!(energy(chart.as_ref(), &out).unwrap() < 1e-10);
}

#[test]
fn sphere_descent_approaches_a_great_circle_before_leaving_the_saddle() {
    let chart = ChartSpec::named("sphere").build().unwrap();
    let sched = PenaltySchedule::default();
    // log ρ odd under a sixth turn: the loop is inversion symmetric up to a
    // circle shift, so the unstable latitude mode is seeded only at the
    // discretisation level and descent first contracts the stable modes.
    let lp = DiscreteLoop::from_fn(chart.as_ref(), 128, |t| {
        let a = 2.0 * PI * t;
        let rho = (0.05 * (3.0 * a).sin()).exp();
        vec![rho * a.cos(), rho * a.sin()]
    })
    .unwrap();
    let obj = Penalized::new(chart.as_ref(), &sched, 0);
    let g0 = obj.gradient_norm(&lp, Preconditioner::PeriodicLaplacian).unwrap();
    let opts = DescentOptions {
        max_iterations: 6,
        ..DescentOptions::default()
    };
    let Err(loopgeo_core::Error::NotConverged {
        gradient_norm, last, ..
    }) = descend(chart.as_ref(), &sched, 0, &lp, &opts)
    else {
        panic!("a saddle cannot be reached in six steps");
    };
    let e = energy(chart.as_ref(), &last).unwrap();
    assert!((e - 4.0 * PI * PI).abs() / (4.0 * PI * PI) < 1e-3, "E = {e}");
    assert!(gradient_norm < 0.05 * g0, "{gradient_norm} vs {g0}");
    // Unconstrained descent eventually leaves the saddle for a point curve.
    let (out, _) = descend(chart.as_ref(), &sched, 0, &lp, &DescentOptions::default()).unwrap();
    assert!(energy(chart.as_ref(), &out).unwrap() < 1e-8);
}

#[test]
fn descent_commutes_with_circle_shift_on_the_sphere() {
    let chart = ChartSpec::named("sphere").build().unwrap();
    let sched = PenaltySchedule::default();
    let lp = DiscreteLoop::from_fn(chart.as_ref(), 64, |t| {
        let a = 2.0 * PI * t;
        vec![0.4 * a.cos() + 0.05 * (2.0 * a).sin(), 0.3 * a.sin()]
    })
    .unwrap();
    let opts = DescentOptions {
        tolerance: 1e-9,
        ..DescentOptions::default()
    };
    let (a, _) = descend(chart.as_ref(), &sched, 0, &lp.circle_shift(5).unwrap(), &opts).unwrap();
    let (b, _) = descend(chart.as_ref(), &sched, 0, &lp, &opts).unwrap();
    let b = b.circle_shift(5).unwrap();
    for (x, y) in a.as_flat().iter().zip(b.as_flat()) {
        assert!((x - y).abs() < 1e-6);
    }
}

#[test]
fn birkhoff_sweepout_attains_the_great_circle() {
    let chart = ChartSpec::named("sphere").build().unwrap();
    let sched = PenaltySchedule::default();
    let fam = SweepoutFamily::birkhoff_sphere(chart.as_ref(), 33, 128).unwrap();
    let opts = SweepOptions {
        climbing: true,
        ..SweepOptions::default()
    };
    let res = minimax_sweepout(chart.as_ref(), &sched, 0, &fam, &opts).unwrap();
    assert!(
        (res.value - 4.0 * PI * PI).abs() / (4.0 * PI * PI) < 0.01,
        "{}",
        res.value
    );
    assert!(res.argmax_gradient_norm < 1e-3);
    assert!(res.stabilized);
    // The discrete critical value: the regular 128-gon at chart radius 1/cos(π/128).
    let n = 128.0;
    let critical = energy(
        chart.as_ref(),
        &circle_polygon(chart.as_ref(), &[0.0, 0.0], 1.0 / (PI / n).cos(), 128).unwrap(),
    )
    .unwrap();
    assert!(
        (res.value - critical).abs() < 1e-6 * critical,
        "{} vs {critical}",
        res.value
    );
    let rev = minimax_sweepout(chart.as_ref(), &sched, 0, &fam.reversed(), &opts).unwrap();
    assert!((rev.value - res.value).abs() < 1e-6);
}

#[test]
fn plain_pull_tight_cannot_balance_on_the_saddle() {
    let chart = ChartSpec::named("sphere").build().unwrap();
    let fam = SweepoutFamily::birkhoff_sphere(chart.as_ref(), 9, 64).unwrap();
    let opts = SweepOptions {
        max_members: 64,
        ..SweepOptions::default()
    };
    let err = minimax_sweepout(chart.as_ref(), &PenaltySchedule::default(), 0, &fam, &opts).unwrap_err();
    assert!(matches!(err, loopgeo_core::Error::FamilyTear { .. }), "{err}");
}

#[test]
fn concentric_plane_family_collapses() {
    let chart = ChartSpec::named("plane").build().unwrap();
    let sched = PenaltySchedule::new(10.0, 1.0, 1.0).unwrap();
    let fam = SweepoutFamily::concentric_circles(chart.as_ref(), 9, 1.0, 64).unwrap();
    let res = minimax_sweepout(chart.as_ref(), &sched, 0, &fam, &SweepOptions::default()).unwrap();
    assert!(res.value < 1e-8, "{}", res.value);
}

#[test]
fn single_member_sweep_is_descent() {
    let chart = ChartSpec::named("funnel").build().unwrap();
    let sched = PenaltySchedule::new(5.0, 1.0, 1.0).unwrap();
    let lp = wobbly_parallel(chart.as_ref(), 0.7, 64);
    let fam = SweepoutFamily::new(vec![lp.clone()], vec![false]).unwrap();
    let opts = SweepOptions::default();
    let res = minimax_sweepout(chart.as_ref(), &sched, 0, &fam, &opts).unwrap();
    let (d, _) = descend(chart.as_ref(), &sched, 0, &lp, &opts.descent).unwrap();
    assert_eq!(res.argmax_loop, d);
}

#[test]
fn funnel_continuation_is_monotone_and_ends_at_the_waist() {
    let chart = ChartSpec::named("funnel").build().unwrap();
    let sched = PenaltySchedule::new(0.0, 1.0, 1.0).unwrap();
    let fam = SweepoutFamily::winding_family(chart.as_ref(), 9, 2.0, 1, 64).unwrap();
    let alphas: Vec<usize> = (0..=5).collect();
    let res = penalty_continuation(chart.as_ref(), &sched, &alphas, &fam, &SweepOptions::default()).unwrap();
    assert!(res.violations.is_empty(), "{:?}", res.values);
    let last = res.values.last().unwrap().1;
    assert!((last - 4.0 * PI * PI).abs() / (4.0 * PI * PI) < 0.01);
}

#[test]
fn preconditioned_norm_vanishes_on_critical_parallels() {
    let chart = ChartSpec::named("cylinder").build().unwrap();
    let sched = PenaltySchedule::new(5.0, 1.0, 1.0).unwrap();
    let lp = parallel_circle(chart.as_ref(), 0.2, 1, 32).unwrap();
    let obj = Penalized::new(chart.as_ref(), &sched, 0);
    assert!(obj.gradient_norm(&lp, Preconditioner::PeriodicLaplacian).unwrap() < 1e-12);
    let c = circle_polygon(
        ChartSpec::named("plane").build().unwrap().as_ref(),
        &[0.0, 0.0],
        1.0,
        32,
    )
    .unwrap();
    assert_eq!(c.len(), 32);
}

#[test]
fn wobbled_birkhoff_sweepout_is_pulled_tight_to_the_great_circle() {
    let chart = ChartSpec::named("sphere").build().unwrap();
    let sched = PenaltySchedule::default();
    let n = 128;
    let fam = SweepoutFamily::birkhoff_sphere(chart.as_ref(), 33, n).unwrap();
    // A radial wobble keeps every interior member off the critical equator.
    let members: Vec<DiscreteLoop> = fam
        .members
        .iter()
        .map(|m| {
            let coords: Vec<f64> = m
                .as_flat()
                .chunks(2)
                .enumerate()
                .flat_map(|(i, x)| {
                    let t = 2.0 * PI * i as f64 / n as f64;
                    let f = 1.0 + 0.15 * (2.0 * t).sin() + 0.1 * (3.0 * t).cos();
                    [x[0] * f, x[1] * f]
                })
                .collect();
            DiscreteLoop::from_flat(chart.as_ref(), coords, m.reflected()).unwrap()
        })
        .collect();
    let start_max = members
        .iter()
        .map(|m| energy(chart.as_ref(), m).unwrap())
        .fold(0.0, f64::max);
    let wobbled = SweepoutFamily::new(members, fam.frozen.clone()).unwrap();
    let opts = SweepOptions {
        climbing: true,
        ..SweepOptions::default()
    };
    let res = minimax_sweepout(chart.as_ref(), &sched, 0, &wobbled, &opts).unwrap();
    assert!(start_max > 1.05 * 4.0 * PI * PI, "{start_max}");
    assert!(
        (res.value - 4.0 * PI * PI).abs() / (4.0 * PI * PI) < 0.01,
        "{}",
        res.value
    );
    assert!(res.argmax_gradient_norm < 1e-3, "{}", res.argmax_gradient_norm);
}
