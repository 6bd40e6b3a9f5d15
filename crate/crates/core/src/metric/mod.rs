//! Chart-based Riemannian metrics and the quantities derived from them.
//!
//! A [`MetricChart`] is a single global coordinate chart carrying the metric
//! tensor `g_ij(x)` together with its first and second coordinate derivatives.
//! Everything else (Christoffel symbols, the Riemann tensor, sectional
//! curvature, the geodesic flow) is derived here from that jet, so every zoo
//! chart only has to supply `g` and its derivatives in closed form.
//!
//! Conventions: `Γ^k_ij = ½ g^{kl}(∂_i g_jl + ∂_j g_il − ∂_l g_ij)` and
//! `R(X,Y)Z = ∇_X∇_Y Z − ∇_Y∇_X Z − ∇_[X,Y] Z`, so that the round sphere has
//! `g(R(v,w)w,v) > 0`.

pub mod checks;
pub mod zoo;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::Rk4;

pub use checks::{chart_self_test, SelfTestReport};
pub use zoo::{chart_from_spec, ChartSpec, ConformalChart, ConformalKind, Profile, RevolutionChart, CHART_NAMES};

/// Step used for the finite-difference Riemann tensor (central differences of Γ).
pub const RIEMANN_FD_STEP: f64 = 1e-4;

/// Reduces `value` into `[0, period)`.
pub fn reduce_periodic(value: f64, period: f64) -> f64 {
    let r = value.rem_euclid(period);
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Difference `b − a` using the minimal lift along periodic axes.
pub fn lifted_delta(periods: &[Option<f64>], a: &[f64], b: &[f64], out: &mut [f64]) {
    for k in 0..a.len() {
        let mut d = b[k] - a[k];
        if let Some(p) = periods[k] {
            d -= p * (d / p).round();
        }
        out[k] = d;
    }
}

/// A point in chart coordinates, periodic axes reduced to `[0, period)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    coords: Vec<f64>,
}

impl ChartPoint {
    /// Builds a point for `chart`, reducing periodic coordinates and checking the domain.
    pub fn new(chart: &dyn MetricChart, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != chart.dim() {
            return Err(Error::invalid(format!(
                "point has {} coordinates, chart `{}` has dimension {}",
                coords.len(),
                chart.name(),
                chart.dim()
            )));
        }
        let p = Self::reduced(chart, coords);
        chart.check_domain(&p.coords)?;
        Ok(p)
    }

    pub(crate) fn reduced(chart: &dyn MetricChart, mut coords: Vec<f64>) -> Self {
        for (k, c) in coords.iter_mut().enumerate() {
            if let Some(p) = chart.period(k) {
                *c = reduce_periodic(*c, p);
            }
        }
        ChartPoint { coords }
    }

    pub(crate) fn from_reduced(coords: Vec<f64>) -> Self {
        ChartPoint { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// A tangent vector `(x, v)` with chart components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub base: ChartPoint,
    pub v: Vec<f64>,
}

impl TangentVector {
    pub fn new(base: ChartPoint, v: Vec<f64>) -> Result<Self> {
        if v.len() != base.dim() {
            return Err(Error::invalid("tangent vector dimension mismatch"));
        }
        Ok(TangentVector { base, v })
    }
}

/// Metric tensor with derivatives up to second order at one point.
#[derive(Debug, Clone)]
pub struct MetricJet {
    pub g: DMatrix<f64>,
    /// `dg[k] = ∂_k g`.
    pub dg: Vec<DMatrix<f64>>,
    /// `ddg[k * d + l] = ∂_k ∂_l g`.
    pub ddg: Vec<DMatrix<f64>>,
}

impl MetricJet {
    pub fn new(dim: usize) -> Self {
        MetricJet {
            g: DMatrix::zeros(dim, dim),
            dg: vec![DMatrix::zeros(dim, dim); dim],
            ddg: vec![DMatrix::zeros(dim, dim); dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn inner(&self, v: &[f64], w: &[f64]) -> f64 {
        quad(&self.g, v, w)
    }
}

/// `vᵀ A w` for a square matrix and slices.
pub(crate) fn quad(a: &DMatrix<f64>, v: &[f64], w: &[f64]) -> f64 {
    let d = v.len();
    let mut s = 0.0;
    for i in 0..d {
        let mut row = 0.0;
        for j in 0..d {
            row += a[(i, j)] * w[j];
        }
        s += v[i] * row;
    }
    s
}

/// Proper exhaustion coordinate `r(x)` with coordinate gradient and Hessian.
#[derive(Debug, Clone)]
pub struct Exhaustion {
    pub r: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

/// A Riemannian metric presented in one global chart.
///
/// Implementations are pure functions of the queried point and may be shared
/// across threads.
pub trait MetricChart: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Period of coordinate `axis`, if it is an angle.
    fn period(&self, axis: usize) -> Option<f64> {
        let _ = axis;
        None
    }

    fn periods(&self) -> Vec<Option<f64>> {
        (0..self.dim()).map(|k| self.period(k)).collect()
    }

    fn contains(&self, x: &[f64]) -> bool;

    fn check_domain(&self, x: &[f64]) -> Result<()> {
        if x.iter().all(|c| c.is_finite()) && self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutsideDomain {
                chart: self.name().to_string(),
                point: x.to_vec(),
            })
        }
    }

    /// Fills `jet` with `g` and its derivatives up to `order` (0, 1 or 2).
    /// The caller guarantees `x` lies in the domain.
    fn eval(&self, x: &[f64], order: usize, jet: &mut MetricJet);

    /// Closed-form curvature when it is the same for every plane at `x`
    /// (all surfaces, and constant-curvature charts in any dimension).
    fn isotropic_curvature(&self, x: &[f64]) -> Option<f64> {
        let _ = x;
        None
    }

    /// Exhaustion coordinate; `None` exactly when the manifold is compact.
    fn exhaustion(&self, x: &[f64]) -> Option<Exhaustion>;

    fn is_compact(&self) -> bool;

    /// Involutive isometry used to move loops away from a chart boundary.
    fn recenter_map(&self, x: &[f64]) -> Option<Vec<f64>> {
        let _ = x;
        None
    }

    /// Chart radius beyond which loops should be moved by [`MetricChart::recenter_map`].
    fn recenter_radius(&self) -> Option<f64> {
        None
    }

    /// Default cap on the chart length of loop segments.
    fn segment_cap(&self) -> f64 {
        0.5
    }

    /// Draws a point whose exhaustion value lies in `(r_lo, r_hi)`; compact
    /// charts ignore the bounds and sample a fixed coordinate region.
    fn sample_point(&self, rng: &mut dyn RngCore, r_lo: f64, r_hi: f64) -> Vec<f64>;
}

/// Christoffel symbols `Γ^k_ij`, stored as `data[(k * d + i) * d + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffels {
    dim: usize,
    data: Vec<f64>,
}

impl Christoffels {
    pub fn zeros(dim: usize) -> Self {
        Christoffels {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    /// `out^k = Γ^k_ij v^i w^j`.
    pub fn contract(&self, v: &[f64], w: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (k, o) in out.iter_mut().enumerate().take(d) {
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    s += self.data[(k * d + i) * d + j] * v[i] * w[j];
                }
            }
            *o = s;
        }
    }

    /// Fills `self` from a first-order jet.
    pub fn from_jet(&mut self, jet: &MetricJet) {
        let d = self.dim;
        let ginv = jet.g.clone().try_inverse().expect("metric tensor must be invertible");
        for k in 0..d {
            for i in 0..d {
                for j in i..d {
                    let mut s = 0.0;
                    for l in 0..d {
                        s += ginv[(k, l)] * (jet.dg[i][(j, l)] + jet.dg[j][(i, l)] - jet.dg[l][(i, j)]);
                    }
                    self.data[(k * d + i) * d + j] = 0.5 * s;
                    self.data[(k * d + j) * d + i] = 0.5 * s;
                }
            }
        }
    }
}

/// Christoffel symbols at `x` from the chart's analytic metric derivatives.
pub fn christoffels(chart: &dyn MetricChart, x: &ChartPoint) -> Result<Christoffels> {
    chart.check_domain(x.coords())?;
    Ok(christoffels_at(chart, x.coords()))
}

pub(crate) fn christoffels_at(chart: &dyn MetricChart, x: &[f64]) -> Christoffels {
    let d = chart.dim();
    let mut jet = MetricJet::new(d);
    chart.eval(x, 1, &mut jet);
    let mut gam = Christoffels::zeros(d);
    gam.from_jet(&jet);
    gam
}

/// Riemann tensor `R(∂_i,∂_j)∂_k = R^l_ijk ∂_l`, stored as `data[((l*d+i)*d+j)*d+k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Riemann {
    dim: usize,
    data: Vec<f64>,
}

impl Riemann {
    #[inline]
    pub fn get(&self, l: usize, i: usize, j: usize, k: usize) -> f64 {
        let d = self.dim;
        self.data[((l * d + i) * d + j) * d + k]
    }

    /// Constant-curvature form `R(u,v)w = K (g(v,w) u − g(u,w) v)`.
    pub fn isotropic(curvature: f64, g: &DMatrix<f64>) -> Self {
        let d = g.nrows();
        let mut data = vec![0.0; d * d * d * d];
        for l in 0..d {
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        let di = if l == i { g[(j, k)] } else { 0.0 };
                        let dj = if l == j { g[(i, k)] } else { 0.0 };
                        data[((l * d + i) * d + j) * d + k] = curvature * (di - dj);
                    }
                }
            }
        }
        Riemann { dim: d, data }
    }

    /// `R(u,v)w`.
    pub fn apply(&self, u: &[f64], v: &[f64], w: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (l, o) in out.iter_mut().enumerate().take(d) {
            let mut s = 0.0;
            for i in 0..d {
                if u[i] == 0.0 {
                    continue;
                }
                for j in 0..d {
                    if v[j] == 0.0 {
                        continue;
                    }
                    for k in 0..d {
                        s += self.data[((l * d + i) * d + j) * d + k] * u[i] * v[j] * w[k];
                    }
                }
            }
            *o = s;
        }
    }
}

/// Riemann tensor at `x`: closed form when the chart provides it, otherwise
/// central finite differences of the analytic Christoffel symbols.
pub fn riemann(chart: &dyn MetricChart, x: &ChartPoint) -> Result<Riemann> {
    chart.check_domain(x.coords())?;
    Ok(riemann_at(chart, x.coords(), &mut MetricJet::new(chart.dim())))
}

pub(crate) fn riemann_at(chart: &dyn MetricChart, x: &[f64], jet: &mut MetricJet) -> Riemann {
    match chart.isotropic_curvature(x) {
        Some(k) => {
            chart.eval(x, 0, jet);
            Riemann::isotropic(k, &jet.g)
        }
        None => riemann_fd_at(chart, x),
    }
}

/// Riemann tensor from finite differences of Γ, regardless of closed forms.
pub fn riemann_fd(chart: &dyn MetricChart, x: &ChartPoint) -> Result<Riemann> {
    chart.check_domain(x.coords())?;
    Ok(riemann_fd_at(chart, x.coords()))
}

fn riemann_fd_at(chart: &dyn MetricChart, x: &[f64]) -> Riemann {
    let d = chart.dim();
    let h = RIEMANN_FD_STEP;
    let gam = christoffels_at(chart, x);
    // dgam[i] = ∂_i Γ
    let mut dgam = Vec::with_capacity(d);
    let mut xp = x.to_vec();
    for i in 0..d {
        xp[i] = x[i] + h;
        let plus = christoffels_at(chart, &xp);
        xp[i] = x[i] - h;
        let minus = christoffels_at(chart, &xp);
        xp[i] = x[i];
        let diff: Vec<f64> = plus
            .data
            .iter()
            .zip(&minus.data)
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect();
        dgam.push(diff);
    }
    let idx = |k: usize, i: usize, j: usize| (k * d + i) * d + j;
    let mut data = vec![0.0; d * d * d * d];
    for l in 0..d {
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let mut s = dgam[i][idx(l, j, k)] - dgam[j][idx(l, i, k)];
                    for m in 0..d {
                        s += gam.get(l, i, m) * gam.get(m, j, k) - gam.get(l, j, m) * gam.get(m, i, k);
                    }
                    data[((l * d + i) * d + j) * d + k] = s;
                }
            }
        }
    }
    Riemann { dim: d, data }
}

/// Threshold below which a plane is considered degenerate.
pub const DEGENERATE_PLANE: f64 = 1e-12;

/// Sectional curvature `g(R(v,w)w,v) / (g(v,v)g(w,w) − g(v,w)²)` of `span{v, w}`.
pub fn sectional_curvature(
    chart: &dyn MetricChart,
    x: &ChartPoint,
    v: &TangentVector,
    w: &TangentVector,
) -> Result<f64> {
    let rm = riemann(chart, x)?;
    sectional_curvature_with(chart, x, &rm, &v.v, &w.v)
}

/// Sectional curvature from a precomputed Riemann tensor.
pub fn sectional_curvature_with(
    chart: &dyn MetricChart,
    x: &ChartPoint,
    rm: &Riemann,
    v: &[f64],
    w: &[f64],
) -> Result<f64> {
    let mut jet = MetricJet::new(chart.dim());
    chart.eval(x.coords(), 0, &mut jet);
    let denom = jet.inner(v, v) * jet.inner(w, w) - jet.inner(v, w).powi(2);
    if denom.abs() < DEGENERATE_PLANE {
        return Err(Error::DegeneratePlane { denominator: denom });
    }
    let mut rvw = vec![0.0; chart.dim()];
    rm.apply(v, w, w, &mut rvw);
    Ok(jet.inner(&rvw, v) / denom)
}

/// Reusable buffers for evaluating the geodesic vector field.
#[derive(Debug, Clone)]
pub(crate) struct GeoScratch {
    pub jet: MetricJet,
    pub gam: Christoffels,
}

impl GeoScratch {
    pub fn new(dim: usize) -> Self {
        GeoScratch {
            jet: MetricJet::new(dim),
            gam: Christoffels::zeros(dim),
        }
    }

    /// Evaluates the jet (to `order`) and Γ at `x`.
    pub fn update(&mut self, chart: &dyn MetricChart, x: &[f64], order: usize) {
        chart.eval(x, order.max(1), &mut self.jet);
        self.gam.from_jet(&self.jet);
    }
}

/// Integrates the geodesic equation `ẍ^k + Γ^k_ij ẋ^i ẋ^j = 0` from `s` for
/// time `t` with `steps` fixed RK4 steps.
pub fn geodesic_flow(chart: &dyn MetricChart, s: &TangentVector, t: f64, steps: usize) -> Result<TangentVector> {
    let state = geodesic_trajectory(chart, s.base.coords(), &s.v, t, steps, |_, _| true)?;
    let d = chart.dim();
    Ok(TangentVector {
        base: ChartPoint::reduced(chart, state[..d].to_vec()),
        v: state[d..].to_vec(),
    })
}

/// Geodesic integration with an observer called after every step with
/// `(time, state)`; returning `false` stops early. Periodic coordinates stay
/// lifted in the returned state.
pub(crate) fn geodesic_trajectory<F>(
    chart: &dyn MetricChart,
    x0: &[f64],
    v0: &[f64],
    t: f64,
    steps: usize,
    mut observe: F,
) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> bool,
{
    if !(t >= 0.0) {
        return Err(Error::invalid("flow time must be non-negative"));
    }
    if steps < 16 {
        return Err(Error::invalid("geodesic flow needs at least 16 steps"));
    }
    chart.check_domain(x0)?;
    let d = chart.dim();
    let mut y: Vec<f64> = x0.iter().chain(v0.iter()).copied().collect();
    let h = t / steps as f64;
    let mut rk = Rk4::new(2 * d);
    let mut scratch = GeoScratch::new(d);
    let mut acc = vec![0.0; d];
    let escaped = std::cell::Cell::new(false);
    let mut rhs = |s: &[f64], out: &mut [f64]| {
        if !chart.contains(&s[..d]) || s.iter().any(|c| !c.is_finite()) {
            escaped.set(true);
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        scratch.update(chart, &s[..d], 1);
        scratch.gam.contract(&s[d..], &s[d..], &mut acc);
        for k in 0..d {
            out[k] = s[d + k];
            out[d + k] = -acc[k];
        }
    };
    for n in 0..steps {
        rk.step(&mut y, h, &mut rhs);
        let time = (n + 1) as f64 * h;
        if escaped.get() || !chart.contains(&y[..d]) || y.iter().any(|c| !c.is_finite()) {
            return Err(Error::DomainEscape {
                chart: chart.name().to_string(),
                time,
            });
        }
        if !observe(time, &y) {
            break;
        }
    }
    Ok(y)
}
