//! Built-in model surfaces.
//!
//! Two families cover the whole zoo:
//!
//! * [`ConformalChart`]: `g = λ(|u|²) I` (flat plane, stereographic sphere,
//!   Poincaré disk), dimension-generic.
//! * [`RevolutionChart`]: `g = A(s) ds² + B(s) dθ²` with `θ` of period 2π
//!   (flat cylinder, funnel, paraboloid, bumped cylinder).

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{Exhaustion, MetricChart, MetricJet};
use crate::error::{Error, Result};

pub(crate) fn unit_f64(rng: &mut dyn RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub(crate) fn gaussian(rng: &mut dyn RngCore) -> f64 {
    let u1 = unit_f64(rng).max(1e-300);
    let u2 = unit_f64(rng);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Chart name plus numeric parameters, as written in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl ChartSpec {
    pub fn named(name: &str) -> Self {
        ChartSpec {
            name: name.to_string(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn build(&self) -> Result<Box<dyn MetricChart>> {
        chart_from_spec(self)
    }
}

pub const CHART_NAMES: [&str; 7] = [
    "plane",
    "cylinder",
    "sphere",
    "hyperbolic",
    "paraboloid",
    "funnel",
    "bumped_cylinder",
];

/// Instantiates a zoo chart, rejecting unknown names and parameters.
pub fn chart_from_spec(spec: &ChartSpec) -> Result<Box<dyn MetricChart>> {
    let allowed: &[&str] = match spec.name.as_str() {
        "plane" | "hyperbolic" => &["dim"],
        "sphere" => &["dim", "guard"],
        "cylinder" => &["radius"],
        "paraboloid" | "funnel" => &[],
        "bumped_cylinder" => &["amplitude", "center", "width"],
        other => {
            return Err(Error::invalid(format!(
                "unknown chart `{other}` (known: {})",
                CHART_NAMES.join(", ")
            )))
        }
    };
    for key in spec.params.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::invalid(format!(
                "chart `{}` has no parameter `{key}`",
                spec.name
            )));
        }
    }
    let get = |k: &str, default: f64| spec.params.get(k).copied().unwrap_or(default);
    let dim = get("dim", 2.0);
    if dim < 1.0 || dim.fract() != 0.0 {
        return Err(Error::invalid("`dim` must be a positive integer"));
    }
    let dim = dim as usize;
    let chart: Box<dyn MetricChart> = match spec.name.as_str() {
        "plane" => Box::new(ConformalChart::new(ConformalKind::Flat, dim)),
        "sphere" => {
            let guard = get("guard", 10.0);
            if guard <= 1.0 {
                return Err(Error::invalid("sphere guard radius must exceed 1"));
            }
            Box::new(ConformalChart::new(ConformalKind::Sphere { guard }, dim))
        }
        "hyperbolic" => Box::new(ConformalChart::new(ConformalKind::Hyperbolic, dim)),
        "cylinder" => {
            let radius = get("radius", 1.0);
            if radius <= 0.0 {
                return Err(Error::invalid("cylinder radius must be positive"));
            }
            Box::new(RevolutionChart::new(Profile::Cylinder { radius }))
        }
        "paraboloid" => Box::new(RevolutionChart::new(Profile::Paraboloid)),
        "funnel" => Box::new(RevolutionChart::new(Profile::Funnel)),
        "bumped_cylinder" => {
            let amplitude = get("amplitude", 0.5);
            let center = get("center", 0.5);
            let width = get("width", 0.5);
            if amplitude <= -1.0 || width <= 0.0 {
                return Err(Error::invalid("bump needs amplitude > -1 and width > 0"));
            }
            Box::new(RevolutionChart::new(Profile::Bumped {
                amplitude,
                center,
                width,
            }))
        }
        _ => unreachable!(),
    };
    Ok(chart)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConformalKind {
    Flat,
    /// Stereographic projection from the north pole; `|u| < guard`.
    Sphere {
        guard: f64,
    },
    /// Poincaré ball `|u| < 1`.
    Hyperbolic,
}

/// `g = λ(q) I` with `q = |u|²`.
#[derive(Debug, Clone)]
pub struct ConformalChart {
    kind: ConformalKind,
    dim: usize,
    name: String,
}

impl ConformalChart {
    pub fn new(kind: ConformalKind, dim: usize) -> Self {
        let name = match kind {
            ConformalKind::Flat => "plane",
            ConformalKind::Sphere { .. } => "sphere",
            ConformalKind::Hyperbolic => "hyperbolic",
        };
        ConformalChart {
            kind,
            dim,
            name: name.to_string(),
        }
    }

    pub fn kind(&self) -> ConformalKind {
        self.kind
    }

    /// `(λ, dλ/dq, d²λ/dq²)`.
    fn factor(&self, q: f64) -> (f64, f64, f64) {
        match self.kind {
            ConformalKind::Flat => (1.0, 0.0, 0.0),
            ConformalKind::Sphere { .. } => {
                let a = 1.0 + q;
                (4.0 / (a * a), -8.0 / (a * a * a), 24.0 / (a * a * a * a))
            }
            ConformalKind::Hyperbolic => {
                let a = 1.0 - q;
                (4.0 / (a * a), 8.0 / (a * a * a), 24.0 / (a * a * a * a))
            }
        }
    }
}

impl MetricChart for ConformalChart {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn contains(&self, x: &[f64]) -> bool {
        let q: f64 = x.iter().map(|c| c * c).sum();
        match self.kind {
            ConformalKind::Flat => true,
            ConformalKind::Sphere { guard } => q < guard * guard,
            ConformalKind::Hyperbolic => q < 1.0,
        }
    }

    fn eval(&self, x: &[f64], order: usize, jet: &mut MetricJet) {
        let d = self.dim;
        let q: f64 = x.iter().map(|c| c * c).sum();
        let (lam, dl, ddl) = self.factor(q);
        jet.g.fill(0.0);
        for i in 0..d {
            jet.g[(i, i)] = lam;
        }
        if order >= 1 {
            for k in 0..d {
                let m = &mut jet.dg[k];
                m.fill(0.0);
                let dk = 2.0 * dl * x[k];
                for i in 0..d {
                    m[(i, i)] = dk;
                }
            }
        }
        if order >= 2 {
            for k in 0..d {
                for l in 0..d {
                    let m = &mut jet.ddg[k * d + l];
                    m.fill(0.0);
                    let mut v = 4.0 * ddl * x[k] * x[l];
                    if k == l {
                        v += 2.0 * dl;
                    }
                    for i in 0..d {
                        m[(i, i)] = v;
                    }
                }
            }
        }
    }

    fn isotropic_curvature(&self, _x: &[f64]) -> Option<f64> {
        Some(match self.kind {
            ConformalKind::Flat => 0.0,
            ConformalKind::Sphere { .. } => 1.0,
            ConformalKind::Hyperbolic => -1.0,
        })
    }

    fn exhaustion(&self, x: &[f64]) -> Option<Exhaustion> {
        let d = self.dim;
        let rho = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        // r = φ(ρ): φ' and φ'' drive the radial gradient and Hessian.
        let (r, p1, p2) = match self.kind {
            ConformalKind::Sphere { .. } => return None,
            ConformalKind::Flat => (rho, 1.0, 0.0),
            ConformalKind::Hyperbolic => {
                let a = 1.0 - rho * rho;
                (2.0 * rho.atanh(), 2.0 / a, 4.0 * rho / (a * a))
            }
        };
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        if rho > 1e-300 {
            for i in 0..d {
                grad[i] = p1 * x[i] / rho;
                for j in 0..d {
                    let uu = x[i] * x[j] / (rho * rho);
                    let id = if i == j { 1.0 } else { 0.0 };
                    hess[(i, j)] = p2 * uu + p1 / rho * (id - uu);
                }
            }
        }
        Some(Exhaustion { r, grad, hess })
    }

    fn is_compact(&self) -> bool {
        matches!(self.kind, ConformalKind::Sphere { .. })
    }

    fn recenter_map(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self.kind {
            // Inversion in the unit sphere: the reflection through the equatorial plane.
            ConformalKind::Sphere { .. } => {
                let q: f64 = x.iter().map(|c| c * c).sum();
                if q < 1e-24 {
                    None
                } else {
                    Some(x.iter().map(|c| c / q).collect())
                }
            }
            _ => None,
        }
    }

    fn recenter_radius(&self) -> Option<f64> {
        match self.kind {
            ConformalKind::Sphere { .. } => Some(3.0),
            _ => None,
        }
    }

    fn sample_point(&self, rng: &mut dyn RngCore, r_lo: f64, r_hi: f64) -> Vec<f64> {
        let d = self.dim;
        let mut dir: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
        let n = dir.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-300);
        dir.iter_mut().for_each(|c| *c /= n);
        let t = unit_f64(rng);
        let rho = match self.kind {
            ConformalKind::Flat => r_lo + (r_hi - r_lo) * t,
            ConformalKind::Hyperbolic => ((r_lo + (r_hi - r_lo) * t) / 2.0).tanh(),
            ConformalKind::Sphere { .. } => 2.0 * t,
        };
        dir.iter().map(|c| c * rho).collect()
    }
}

/// Profile of a surface of revolution `A(s) ds² + B(s) dθ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// Flat cylinder of the given radius.
    Cylinder { radius: f64 },
    /// `dz² + cosh²(z) dθ²`.
    Funnel,
    /// The paraboloid `z = ρ²` in polar coordinates `(ρ, θ)`.
    Paraboloid,
    /// Flat unit cylinder with radius `1 + amplitude·b((z − center)/width)`,
    /// `b` the standard smooth bump supported in `(−1, 1)`.
    Bumped { amplitude: f64, center: f64, width: f64 },
}

/// Smooth bump `exp(1 − 1/(1 − s²))` and its first two derivatives.
fn bump(s: f64) -> (f64, f64, f64) {
    if s.abs() >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let q = 1.0 - s * s;
    let b = (1.0 - 1.0 / q).exp();
    let b1 = b * (-2.0 * s / (q * q));
    let b2 = b * (4.0 * s * s / q.powi(4) - 2.0 / (q * q) - 8.0 * s * s / q.powi(3));
    (b, b1, b2)
}

impl Profile {
    /// `([A, A', A''], [B, B', B''])` at `s`.
    fn coefficients(&self, s: f64) -> ([f64; 3], [f64; 3]) {
        match *self {
            Profile::Cylinder { radius } => ([1.0, 0.0, 0.0], [radius * radius, 0.0, 0.0]),
            Profile::Funnel => {
                let c = s.cosh();
                ([1.0, 0.0, 0.0], [c * c, (2.0 * s).sinh(), 2.0 * (2.0 * s).cosh()])
            }
            Profile::Paraboloid => ([1.0 + 4.0 * s * s, 8.0 * s, 8.0], [s * s, 2.0 * s, 2.0]),
            Profile::Bumped {
                amplitude,
                center,
                width,
            } => {
                let (b, b1, b2) = bump((s - center) / width);
                let a = 1.0 + amplitude * b;
                let a1 = amplitude * b1 / width;
                let a2 = amplitude * b2 / (width * width);
                ([1.0, 0.0, 0.0], [a * a, 2.0 * a * a1, 2.0 * (a1 * a1 + a * a2)])
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RevolutionChart {
    profile: Profile,
    name: String,
}

impl RevolutionChart {
    pub fn new(profile: Profile) -> Self {
        let name = match profile {
            Profile::Cylinder { .. } => "cylinder",
            Profile::Funnel => "funnel",
            Profile::Paraboloid => "paraboloid",
            Profile::Bumped { .. } => "bumped_cylinder",
        };
        RevolutionChart {
            profile,
            name: name.to_string(),
        }
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }
}

impl MetricChart for RevolutionChart {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        2
    }

    fn period(&self, axis: usize) -> Option<f64> {
        (axis == 1).then_some(2.0 * PI)
    }

    fn contains(&self, x: &[f64]) -> bool {
        match self.profile {
            Profile::Paraboloid => x[0] > 0.0 && x[0] < 1e6,
            _ => x[0].abs() < 1e6,
        }
    }

    fn eval(&self, x: &[f64], order: usize, jet: &mut MetricJet) {
        let ([a0, a1, a2], [b0, b1, b2]) = self.profile.coefficients(x[0]);
        jet.g.fill(0.0);
        jet.g[(0, 0)] = a0;
        jet.g[(1, 1)] = b0;
        if order >= 1 {
            jet.dg[0].fill(0.0);
            jet.dg[0][(0, 0)] = a1;
            jet.dg[0][(1, 1)] = b1;
            jet.dg[1].fill(0.0);
        }
        if order >= 2 {
            for m in jet.ddg.iter_mut() {
                m.fill(0.0);
            }
            jet.ddg[0][(0, 0)] = a2;
            jet.ddg[0][(1, 1)] = b2;
        }
    }

    fn isotropic_curvature(&self, x: &[f64]) -> Option<f64> {
        let ([a, a1, _], [b, b1, b2]) = self.profile.coefficients(x[0]);
        Some(-b2 / (2.0 * a * b) + b1 * (a1 * b + a * b1) / (4.0 * a * a * b * b))
    }

    fn exhaustion(&self, x: &[f64]) -> Option<Exhaustion> {
        let s = x[0];
        let mut grad = DVector::zeros(2);
        let r = match self.profile {
            Profile::Paraboloid => {
                grad[0] = 1.0;
                s
            }
            _ => {
                grad[0] = if s > 0.0 {
                    1.0
                } else if s < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                s.abs()
            }
        };
        Some(Exhaustion {
            r,
            grad,
            hess: DMatrix::zeros(2, 2),
        })
    }

    fn is_compact(&self) -> bool {
        false
    }

    fn sample_point(&self, rng: &mut dyn RngCore, r_lo: f64, r_hi: f64) -> Vec<f64> {
        let r = r_lo + (r_hi - r_lo) * unit_f64(rng);
        let sign = if rng.next_u32() & 1 == 0 { 1.0 } else { -1.0 };
        let theta = 2.0 * PI * unit_f64(rng);
        match self.profile {
            Profile::Paraboloid => vec![r.max(1e-6), theta],
            _ => vec![sign * r, theta],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_derivatives_match_finite_differences() {
        let h = 1e-5;
        for &s in &[-0.7, -0.2, 0.0, 0.3, 0.85] {
            let (_, b1, b2) = bump(s);
            let fd1 = (bump(s + h).0 - bump(s - h).0) / (2.0 * h);
            let fd2 = (bump(s + h).1 - bump(s - h).1) / (2.0 * h);
            assert!((b1 - fd1).abs() < 1e-7, "s={s}");
            assert!((b2 - fd2).abs() < 1e-6, "s={s}");
        }
        assert_eq!(bump(1.0), (0.0, 0.0, 0.0));
        assert!((bump(0.0).2 + 2.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_names_and_params_are_rejected() {
        assert!(ChartSpec::named("torus").build().is_err());
        assert!(ChartSpec::named("funnel").with("radius", 2.0).build().is_err());
        assert!(ChartSpec::named("cylinder").with("radius", -1.0).build().is_err());
        for name in CHART_NAMES {
            assert!(ChartSpec::named(name).build().is_ok(), "{name}");
        }
    }

    #[test]
    fn sphere_recentering_is_an_involution() {
        let chart = ChartSpec::named("sphere").build().unwrap();
        let x = [0.3, -2.5];
        let y = chart.recenter_map(&x).unwrap();
        let z = chart.recenter_map(&y).unwrap();
        assert!((z[0] - x[0]).abs() < 1e-14 && (z[1] - x[1]).abs() < 1e-14);
    }
}
