use std::f64::consts::PI;

use proptest::prelude::*;

use loopgeo_core::loops::{circle_polygon, energy, energy_and_gradient, energy_gradient, loop_length, parallel_circle};
use loopgeo_core::metric::CHART_NAMES;
use loopgeo_core::{ChartSpec, DiscreteLoop, Error, MetricChart};

fn chart(name: &str) -> Box<dyn MetricChart> {
    ChartSpec::named(name).build().unwrap()
}

fn ngon_energy(n: usize, r: f64) -> f64 {
    let nf = n as f64;
    4.0 * nf * nf * (PI / nf).sin().powi(2) * r * r
}

/// A smooth closed curve that stays well inside each chart.
fn wobbly(chart: &dyn MetricChart, n: usize, a: f64, b: f64, phase: f64) -> DiscreteLoop {
    let name = chart.name().to_string();
    DiscreteLoop::from_fn(chart, n, move |t| {
        let s = 2.0 * PI * t;
        match name.as_str() {
            "cylinder" | "funnel" | "bumped_cylinder" => vec![a + b * (s + phase).sin(), s + 0.2 * (2.0 * s).cos()],
            "paraboloid" => vec![1.0 + 0.5 * a + 0.3 * b * (s + phase).sin(), s],
            _ => vec![0.3 * a + 0.4 * s.cos(), 0.3 * b + 0.3 * (s + phase).sin()],
        }
    })
    .unwrap()
}

/// Largest deviation of the analytic gradient from central differences (step 1e-6), relative to its max norm.
fn gradient_fd_error(chart: &dyn MetricChart, lp: &DiscreteLoop) -> f64 {
    let g = energy_gradient(chart, lp).unwrap();
    let g = g.as_slice();
    let scale = g.iter().fold(0.0f64, |m, c| m.max(c.abs())).max(1e-12);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in 0..lp.as_flat().len() {
        let bumped = |s: f64| {
            let mut c = lp.as_flat().to_vec();
            c[i] += s;
            energy(chart, &DiscreteLoop::from_flat(chart, c, lp.reflected()).unwrap()).unwrap()
        };
        let fd = (bumped(h) - bumped(-h)) / (2.0 * h);
        worst = worst.max((fd - g[i]).abs() / scale);
    }
    worst
}

#[test]
fn constant_loops_have_zero_energy_and_gradient() {
    for name in CHART_NAMES {
        let c = chart(name);
        let x = if name == "paraboloid" {
            vec![1.0, 0.5]
        } else {
            vec![0.3, 0.5]
        };
        let lp = DiscreteLoop::constant(c.as_ref(), &x, 16).unwrap();
        let (e, g) = energy_and_gradient(c.as_ref(), &lp).unwrap();
        assert_eq!(e, 0.0);
        assert!(g.as_slice().iter().all(|v| *v == 0.0));
        assert_eq!(loop_length(c.as_ref(), &lp).unwrap(), 0.0);
        assert_eq!(
            lp.iterate(3).unwrap(),
            DiscreteLoop::constant(c.as_ref(), &x, 48).unwrap()
        );
    }
}

#[test]
fn plane_polygon_chord_arithmetic() {
    let c = chart("plane");
    for (n, r) in [(64, 1.0), (100, 2.5)] {
        let lp = circle_polygon(c.as_ref(), &[0.3, -1.0], r, n).unwrap();
        let e = energy(c.as_ref(), &lp).unwrap();
        assert!((e - ngon_energy(n, r)).abs() < 1e-11 * e);
        let len = loop_length(c.as_ref(), &lp).unwrap();
        assert!((len - 2.0 * n as f64 * (PI / n as f64).sin() * r).abs() < 1e-12 * len);
    }
}

#[test]
fn plane_polygon_gradient_is_radial_with_equal_norms() {
    let c = chart("plane");
    let center = [0.3, -1.0];
    let lp = circle_polygon(c.as_ref(), &center, 1.0, 64).unwrap();
    let g = energy_gradient(c.as_ref(), &lp).unwrap();
    let norms: Vec<f64> = (0..64)
        .map(|i| g.node(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    for (i, nrm) in norms.iter().enumerate() {
        assert!((nrm - norms[0]).abs() < 1e-10);
        let x = lp.node(i);
        let out = [x[0] - center[0], x[1] - center[1]];
        // The gradient points outward; descent moves nodes inward.
        let cross = out[0] * g.node(i)[1] - out[1] * g.node(i)[0];
        let dot = out[0] * g.node(i)[0] + out[1] * g.node(i)[1];
        assert!(cross.abs() < 1e-10 && dot > 0.0);
    }
}

#[test]
fn refinement_error_ratio_is_second_order() {
    let c = chart("plane");
    let err = |n: usize| {
        4.0 * PI * PI - energy(c.as_ref(), &circle_polygon(c.as_ref(), &[0.0, 0.0], 1.0, n).unwrap()).unwrap()
    };
    let (e64, e128, e256) = (err(64), err(128), err(256));
    for ratio in [e64 / e128, e128 / e256] {
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
    }
    let lp = circle_polygon(c.as_ref(), &[0.0, 0.0], 1.0, 64).unwrap();
    assert_eq!(lp.refined(c.as_ref()).unwrap().len(), 128);
}

#[test]
fn iterate_shift_and_relift_identities() {
    let c = chart("funnel");
    let lp = wobbly(c.as_ref(), 32, 0.2, 0.4, 0.3);
    let e = energy(c.as_ref(), &lp).unwrap();
    assert_eq!(lp.iterate(1).unwrap(), lp);
    assert_eq!(lp.circle_shift(0).unwrap(), lp);
    let composed = lp.circle_shift(5).unwrap().circle_shift(30).unwrap();
    assert_eq!(composed, lp.circle_shift(3).unwrap());
    assert!(lp.circle_shift(32).is_err());
    assert!(lp.iterate(0).is_err());
    let mut nodes = lp.nodes();
    nodes[7][1] += 2.0 * PI;
    let relifted = DiscreteLoop::new(c.as_ref(), nodes).unwrap();
    assert_eq!(energy(c.as_ref(), &relifted).unwrap(), e);
    assert_eq!(relifted.winding_numbers(c.as_ref()), vec![None, Some(1)]);
}

#[test]
fn polygon_doubled_has_four_times_the_energy() {
    let c = chart("plane");
    let lp = circle_polygon(c.as_ref(), &[0.0, 0.0], 1.0, 64).unwrap();
    let e = energy(c.as_ref(), &lp).unwrap();
    assert!((energy(c.as_ref(), &lp.iterate(2).unwrap()).unwrap() - 4.0 * e).abs() < 1e-12 * e);
}

#[test]
fn long_segments_need_refinement() {
    let c = chart("plane");
    let lp = circle_polygon(c.as_ref(), &[0.0, 0.0], 3.0, 16).unwrap();
    assert!(matches!(energy(c.as_ref(), &lp), Err(Error::RefineNeeded { .. })));
    let cyl = chart("cylinder");
    let coarse = parallel_circle(cyl.as_ref(), 0.0, 1, 8).unwrap();
    assert!(matches!(energy(cyl.as_ref(), &coarse), Err(Error::RefineNeeded { .. })));
    assert!(energy(cyl.as_ref(), &coarse.refined(cyl.as_ref()).unwrap()).is_ok());
}

#[test]
fn serialization_round_trips() {
    let c = chart("bumped_cylinder");
    let lp = wobbly(c.as_ref(), 24, 0.5, 0.3, 1.0);
    let csv = lp.to_csv();
    assert!(csv.starts_with("node_index,c0,c1\n"));
    assert_eq!(DiscreteLoop::from_csv(c.as_ref(), &csv).unwrap(), lp);
    let rec = lp.to_record(c.as_ref());
    assert_eq!(rec.winding, vec![None, Some(1)]);
    let json = serde_json::to_string(&rec).unwrap();
    let back: loopgeo_core::LoopRecord = serde_json::from_str(&json).unwrap();
    assert_eq!(DiscreteLoop::from_record(c.as_ref(), &back).unwrap(), lp);
    assert!(DiscreteLoop::from_record(chart("funnel").as_ref(), &back).is_err());
}

#[test]
fn paraboloid_gradient_matches_finite_differences() {
    let c = chart("paraboloid");
    let lp = wobbly(c.as_ref(), 32, 0.7, -0.4, 2.0);
    assert!(gradient_fd_error(c.as_ref(), &lp) < 1e-5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn gradient_matches_finite_differences(which in 0usize..7, a in -1.0f64..1.0, b in -1.0f64..1.0, phase in 0.0..2.0 * PI) {
        let c = chart(CHART_NAMES[which]);
        let lp = wobbly(c.as_ref(), 24, a, b, phase);
        let err = gradient_fd_error(c.as_ref(), &lp);
        prop_assert!(err < 1e-5, "{}: {err}", CHART_NAMES[which]);
    }

    #[test]
    fn energy_identities(which in 0usize..7, a in -1.0f64..1.0, b in -1.0f64..1.0, k in 0usize..24, m in 1usize..=8) {
        let c = chart(CHART_NAMES[which]);
        let lp = wobbly(c.as_ref(), 24, a, b, 0.4);
        let e = energy(c.as_ref(), &lp).unwrap();
        let shifted = energy(c.as_ref(), &lp.circle_shift(k).unwrap()).unwrap();
        prop_assert!((shifted - e).abs() <= 1e-12 * e);
        let it = energy(c.as_ref(), &lp.iterate(m).unwrap()).unwrap();
        let m2 = (m * m) as f64;
        prop_assert!((it - m2 * e).abs() <= 1e-12 * m2 * e);
        let len = loop_length(c.as_ref(), &lp).unwrap();
        prop_assert!(len * len <= e * (1.0 + 1e-14));
    }
}
