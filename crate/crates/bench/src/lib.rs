//! Fixtures shared by the benchmarks in `benches/`.

use std::f64::consts::PI;

use loopgeo_core::loops::circle_polygon;
use loopgeo_core::{ChartSpec, DiscreteLoop, MetricChart};

pub fn chart(name: &str) -> Box<dyn MetricChart> {
    ChartSpec::named(name).build().expect("zoo chart")
}

/// The regular `n`-gon on the equator of the stereographic sphere, at the
/// chart radius where it is a critical point of the discrete energy.
pub fn great_circle(sphere: &dyn MetricChart, n: usize) -> DiscreteLoop {
    circle_polygon(sphere, &[0.0, 0.0], 1.0 / (PI / n as f64).cos(), n).expect("great circle")
}

/// A winding-one loop around the funnel, displaced and wobbled off the waist.
pub fn wobbly_parallel(funnel: &dyn MetricChart, n: usize) -> DiscreteLoop {
    DiscreteLoop::from_fn(funnel, n, |t| {
        let a = 2.0 * PI * t;
        vec![0.7 + 0.3 * (2.0 * a).sin() - 0.2 * (3.0 * a).cos(), a + 0.1 * a.sin()]
    })
    .expect("funnel loop")
}
