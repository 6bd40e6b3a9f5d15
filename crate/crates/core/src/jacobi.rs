//! Jacobi fields along geodesics, the linearised flow `dφ_t` in a parallel
//! orthonormal frame, conjugate points and the monodromy nullity of closed
//! geodesics.
//!
//! A Jacobi field is written `ξ = Σ y_a e_a`, `∇ξ = Σ z_a e_a` in a frame
//! `e_a` parallel along the geodesic, so the Jacobi equation becomes
//! `y' = z`, `z' = −S y` with `S_ab = g(R(e_b, γ̇)γ̇, e_a)`. In these
//! coordinates the vertical subspace is `{y = 0}` at every time and the flow
//! matrix is symplectic for the canonical form.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loops::DiscreteLoop;
use crate::metric::zoo::gaussian;
use crate::metric::{lifted_delta, riemann_at, ChartPoint, GeoScratch, MetricChart, MetricJet, TangentVector};
use crate::ode::Rk4;

/// Relative singular-value threshold for ranks of `B(s)` and `P − ωI`.
pub const RANK_THRESHOLD: f64 = 1e-4;
/// Time tolerance for locating conjugate points.
pub const TIME_TOLERANCE: f64 = 1e-6;
/// Bound on `|det B|` (frame units) accepted at a local minimum without a sign change.
pub const NEAR_TANGENT_DET: f64 = 1e-8;
/// Relative slack separating the endpoint from the open interval.
pub const END_SLACK: f64 = 1e-3;
/// Default RK4 step count for one loop traversal.
pub const DEFAULT_STEPS: usize = 1024;
/// Closure defect above which a loop is not accepted as a closed geodesic.
pub const CLOSURE_TOLERANCE: f64 = 1e-2;
/// Loop speed below which the monodromy is balanced as for a constant loop.
/// Scaling the position block by a speed this small would push the shear of
/// a collapsed loop under [`RANK_THRESHOLD`].
pub const CONSTANT_SPEED: f64 = 1e-3;

/// `g`-orthonormal basis as columns, led by `lead` when it is nonzero.
pub fn orthonormal_frame(g: &DMatrix<f64>, lead: Option<&[f64]>) -> DMatrix<f64> {
    let d = g.nrows();
    let inner = |a: &[f64], b: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += a[i] * g[(i, j)] * b[j];
            }
        }
        s
    };
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    let candidates = lead
        .into_iter()
        .map(|v| v.to_vec())
        .chain((0..d).map(|k| (0..d).map(|i| if i == k { 1.0 } else { 0.0 }).collect()));
    for mut c in candidates {
        if cols.len() == d {
            break;
        }
        let scale = inner(&c, &c).sqrt();
        if !(scale > 1e-12) {
            continue;
        }
        for _ in 0..2 {
            for e in &cols {
                let p = inner(&c, e);
                c.iter_mut().zip(e).for_each(|(ci, ei)| *ci -= p * ei);
            }
        }
        let n = inner(&c, &c).sqrt();
        if n > 1e-8 * scale {
            c.iter_mut().for_each(|ci| *ci /= n);
            cols.push(c);
        }
    }
    DMatrix::from_fn(d, d, |i, a| cols[a][i])
}

/// `J = [[0, I], [−I, 0]]`.
pub fn symplectic_form(d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(2 * d, 2 * d, |i, j| {
        if j == i + d {
            1.0
        } else if i == j + d {
            -1.0
        } else {
            0.0
        }
    })
}

/// Linearised flow over `[0, time]` in parallel frames.
///
/// Column `j` holds `(ξ(t), ∇ξ(t))` in the end frame for the initial data
/// given by basis vector `j` in the start frame.
#[derive(Debug, Clone)]
pub struct MonodromyMatrix {
    pub matrix: DMatrix<f64>,
    pub time: f64,
    pub start: TangentVector,
    pub frame_start: DMatrix<f64>,
    /// End point with periodic coordinates left lifted.
    pub end_point: Vec<f64>,
    pub end_velocity: Vec<f64>,
    pub frame_end: DMatrix<f64>,
}

impl MonodromyMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows() / 2
    }

    /// `(A, B, C, D)` with `B` the vertical-to-horizontal block.
    pub fn blocks(&self) -> [DMatrix<f64>; 4] {
        let d = self.dim();
        let m = &self.matrix;
        [
            m.view((0, 0), (d, d)).into_owned(),
            m.view((0, d), (d, d)).into_owned(),
            m.view((d, 0), (d, d)).into_owned(),
            m.view((d, d), (d, d)).into_owned(),
        ]
    }

    /// Largest entry of `MᵀJM − J`.
    pub fn symplectic_defect(&self) -> f64 {
        let j = symplectic_form(self.dim());
        (self.matrix.transpose() * &j * &self.matrix - j).amax()
    }

    /// End state as a tangent vector, reduced into the chart's periods.
    pub fn end(&self, chart: &dyn MetricChart) -> TangentVector {
        TangentVector {
            base: ChartPoint::new(chart, self.end_point.clone())
                .unwrap_or_else(|_| ChartPoint::from_reduced(self.end_point.clone())),
            v: self.end_velocity.clone(),
        }
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.matrix.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

/// Right-hand side of the combined geodesic, frame and Jacobi system.
///
/// State layout: `x`, `v`, frame columns, then the `2d` columns of the flow
/// matrix, each `(y, z)`.
struct Field<'a> {
    chart: &'a dyn MetricChart,
    d: usize,
    scratch: GeoScratch,
    jet: MetricJet,
    acc: Vec<f64>,
    w: Vec<f64>,
    s: DMatrix<f64>,
    escaped: bool,
}

impl<'a> Field<'a> {
    fn new(chart: &'a dyn MetricChart) -> Self {
        let d = chart.dim();
        Field {
            chart,
            d,
            scratch: GeoScratch::new(d),
            jet: MetricJet::new(d),
            acc: vec![0.0; d],
            w: vec![0.0; d],
            s: DMatrix::zeros(d, d),
            escaped: false,
        }
    }

    fn len(&self) -> usize {
        let d = self.d;
        2 * d + d * d + 4 * d * d
    }

    fn frame_offset(&self) -> usize {
        2 * self.d
    }

    fn flow_offset(&self) -> usize {
        2 * self.d + self.d * self.d
    }

    fn initial(&self, x: &[f64], v: &[f64], frame: &DMatrix<f64>) -> Vec<f64> {
        let d = self.d;
        let mut y = vec![0.0; self.len()];
        y[..d].copy_from_slice(x);
        y[d..2 * d].copy_from_slice(v);
        let e = self.frame_offset();
        for a in 0..d {
            for k in 0..d {
                y[e + a * d + k] = frame[(k, a)];
            }
        }
        let f = self.flow_offset();
        for j in 0..2 * d {
            y[f + j * 2 * d + j] = 1.0;
        }
        y
    }

    fn eval(&mut self, s: &[f64], out: &mut [f64]) {
        let d = self.d;
        let x = &s[..d];
        if s.iter().any(|c| !c.is_finite()) || !self.chart.contains(x) {
            self.escaped = true;
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let v = &s[d..2 * d];
        self.scratch.update(self.chart, x, 1);
        self.scratch.gam.contract(v, v, &mut self.acc);
        out[..d].copy_from_slice(v);
        for k in 0..d {
            out[d + k] = -self.acc[k];
        }
        let eo = self.frame_offset();
        for a in 0..d {
            let ea = &s[eo + a * d..eo + (a + 1) * d];
            self.scratch.gam.contract(v, ea, &mut self.acc);
            for k in 0..d {
                out[eo + a * d + k] = -self.acc[k];
            }
        }
        let rm = riemann_at(self.chart, x, &mut self.jet);
        for b in 0..d {
            let eb = &s[eo + b * d..eo + (b + 1) * d];
            rm.apply(eb, v, v, &mut self.w);
            for a in 0..d {
                let ea = &s[eo + a * d..eo + (a + 1) * d];
                self.s[(a, b)] = self.scratch.jet.inner(ea, &self.w);
            }
        }
        let fo = self.flow_offset();
        for j in 0..2 * d {
            let col = fo + j * 2 * d;
            for a in 0..d {
                out[col + a] = s[col + d + a];
                let mut acc = 0.0;
                for b in 0..d {
                    acc += self.s[(a, b)] * s[col + b];
                }
                out[col + d + a] = -acc;
            }
        }
    }

    /// One RK4 step; `false` when the trajectory left the chart.
    fn advance(&mut self, rk: &mut Rk4, y: &mut [f64], h: f64) -> bool {
        self.escaped = false;
        rk.step(y, h, &mut |s: &[f64], o: &mut [f64]| self.eval(s, o));
        !self.escaped && y.iter().all(|c| c.is_finite()) && self.chart.contains(&y[..self.d])
    }

    /// State at `dt` after `y0`, in substeps no longer than `h`.
    fn advance_by(&mut self, rk: &mut Rk4, y0: &[f64], dt: f64, h: f64) -> Option<Vec<f64>> {
        let pieces = (dt / h).ceil().max(1.0) as usize;
        let mut y = y0.to_vec();
        for _ in 0..pieces {
            if !self.advance(rk, &mut y, dt / pieces as f64) {
                return None;
            }
        }
        Some(y)
    }

    fn vertical_block(&self, y: &[f64]) -> DMatrix<f64> {
        let d = self.d;
        let fo = self.flow_offset();
        DMatrix::from_fn(d, d, |i, j| y[fo + (d + j) * 2 * d + i])
    }

    fn flow_matrix(&self, y: &[f64]) -> DMatrix<f64> {
        let d = self.d;
        let fo = self.flow_offset();
        DMatrix::from_fn(2 * d, 2 * d, |i, j| y[fo + j * 2 * d + i])
    }

    fn frame(&self, y: &[f64]) -> DMatrix<f64> {
        let d = self.d;
        let eo = self.frame_offset();
        DMatrix::from_fn(d, d, |k, a| y[eo + a * d + k])
    }
}

fn validate_interval(t: f64, steps: usize) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::invalid("propagation time must be positive"));
    }
    if steps < 16 {
        return Err(Error::invalid("Jacobi propagation needs at least 16 steps"));
    }
    Ok(())
}

/// Orthonormal frame at the start, led by the velocity.
pub fn start_frame(chart: &dyn MetricChart, start: &TangentVector) -> Result<DMatrix<f64>> {
    chart.check_domain(start.base.coords())?;
    let mut jet = MetricJet::new(chart.dim());
    chart.eval(start.base.coords(), 0, &mut jet);
    Ok(orthonormal_frame(&jet.g, Some(&start.v)))
}

/// `dφ_t` at `start` in the velocity-led parallel frame.
pub fn jacobi_propagate(
    chart: &dyn MetricChart,
    start: &TangentVector,
    t: f64,
    steps: usize,
) -> Result<MonodromyMatrix> {
    let frame = start_frame(chart, start)?;
    jacobi_propagate_in_frame(chart, start, &frame, t, steps)
}

/// `dφ_t` with a caller-supplied orthonormal start frame (used to compose
/// flows over consecutive intervals).
pub fn jacobi_propagate_in_frame(
    chart: &dyn MetricChart,
    start: &TangentVector,
    frame: &DMatrix<f64>,
    t: f64,
    steps: usize,
) -> Result<MonodromyMatrix> {
    validate_interval(t, steps)?;
    chart.check_domain(start.base.coords())?;
    let d = chart.dim();
    if frame.nrows() != d || frame.ncols() != d || start.v.len() != d {
        return Err(Error::invalid("frame or velocity has the wrong dimension"));
    }
    let mut field = Field::new(chart);
    let mut y = field.initial(start.base.coords(), &start.v, frame);
    let mut rk = Rk4::new(y.len());
    let h = t / steps as f64;
    for n in 0..steps {
        if !field.advance(&mut rk, &mut y, h) {
            return Err(Error::DomainEscape {
                chart: chart.name().to_string(),
                time: (n + 1) as f64 * h,
            });
        }
    }
    Ok(MonodromyMatrix {
        matrix: field.flow_matrix(&y),
        time: t,
        start: start.clone(),
        frame_start: frame.clone(),
        end_point: y[..d].to_vec(),
        end_velocity: y[d..2 * d].to_vec(),
        frame_end: field.frame(&y),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interval {
    /// `(0, t]`.
    Closed,
    /// `(0, t)`, the limit `s → t⁻`.
    Open,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugatePoint {
    pub time: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugateReport {
    pub horizon: f64,
    pub interval: Interval,
    pub points: Vec<ConjugatePoint>,
    pub total: usize,
}

fn rank_deficiency(m: &DMatrix<f64>) -> (usize, f64) {
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if !(smax > 0.0) {
        return (m.nrows(), 0.0);
    }
    let count = sv.iter().filter(|&&s| s < RANK_THRESHOLD * smax).count();
    (count, sv.min() / smax)
}

/// Conjugate points of `start` on `(0, t]`.
pub fn conjugate_points(
    chart: &dyn MetricChart,
    start: &TangentVector,
    t: f64,
    steps: usize,
) -> Result<ConjugateReport> {
    conjugate_points_on(chart, start, t, steps, Interval::Closed)
}

/// Conjugate points of `start` on `(0, t]` or `(0, t)`.
///
/// Zeros of `det B(s)` are bracketed by sign changes between steps and
/// bisected to [`TIME_TOLERANCE`]; local minima of `|det B|` without a sign
/// change are refined by golden-section search and accepted when `B` is
/// rank-deficient there. The integration runs [`END_SLACK`] past `t` so that
/// zeros at the endpoint are bracketed; the open interval drops zeros within
/// the slack of `t`.
pub fn conjugate_points_on(
    chart: &dyn MetricChart,
    start: &TangentVector,
    t: f64,
    steps: usize,
    interval: Interval,
) -> Result<ConjugateReport> {
    scan(chart, start, t, steps, interval, |_| true)?.ok_or_else(|| Error::invalid("scan aborted"))
}

/// Conjugate scan that stops with `None` as soon as `stay` rejects a point.
fn scan<S>(
    chart: &dyn MetricChart,
    start: &TangentVector,
    t: f64,
    steps: usize,
    interval: Interval,
    stay: S,
) -> Result<Option<ConjugateReport>>
where
    S: Fn(&[f64]) -> bool,
{
    validate_interval(t, steps)?;
    let frame = start_frame(chart, start)?;
    let d = chart.dim();
    let mut field = Field::new(chart);
    let mut y = field.initial(start.base.coords(), &start.v, &frame);
    let mut rk = Rk4::new(y.len());
    let horizon = t * (1.0 + END_SLACK);
    let h = horizon / steps as f64;
    let escape = |time: f64| Error::DomainEscape {
        chart: chart.name().to_string(),
        time,
    };
    let mut points: Vec<ConjugatePoint> = Vec::new();
    // (time, state, det) at the most recent steps.
    let mut hist: Vec<(f64, Vec<f64>, f64)> = Vec::with_capacity(3);
    let mut deficient_since: Option<f64> = None;
    for n in 0..steps {
        if !field.advance(&mut rk, &mut y, h) {
            return Err(escape((n + 1) as f64 * h));
        }
        if !stay(&y[..d]) {
            return Ok(None);
        }
        let s = (n + 1) as f64 * h;
        let b = field.vertical_block(&y);
        let det = b.determinant();
        let (_, ratio) = rank_deficiency(&b);
        if ratio < RANK_THRESHOLD {
            let since = *deficient_since.get_or_insert(s);
            if s - since > 1e-2 * horizon {
                return Err(Error::DegenerateInterval { start: since, end: s });
            }
        } else {
            deficient_since = None;
        }
        if hist.is_empty() {
            hist.push((s, y.clone(), det));
            continue;
        }
        let (s1, y1, d1) = hist.last().cloned().expect("history is nonempty");
        if det == 0.0 || (d1 != 0.0 && det.signum() != d1.signum()) {
            let (root, state) = bisect_root(&mut field, &mut rk, &y1, s1, d1, s - s1, h).ok_or_else(|| escape(s))?;
            let (count, _) = rank_deficiency(&field.vertical_block(&state));
            points.push(ConjugatePoint {
                time: root,
                multiplicity: count.max(1),
            });
        } else if hist.len() >= 2 {
            let (s0, y0, d0) = hist[hist.len() - 2].clone();
            let same_sign = d0.signum() == d1.signum();
            if same_sign && d1.abs() < d0.abs() && d1.abs() <= det.abs() {
                let (tmin, state) = golden_min(&mut field, &mut rk, &y0, s0, s - s0, h).ok_or_else(|| escape(s))?;
                let bm = field.vertical_block(&state);
                let (count, _) = rank_deficiency(&bm);
                if count > 0 && bm.determinant().abs() < NEAR_TANGENT_DET {
                    points.push(ConjugatePoint {
                        time: tmin,
                        multiplicity: count,
                    });
                }
            }
        }
        hist.push((s, y.clone(), det));
        if hist.len() > 3 {
            hist.remove(0);
        }
    }
    points.retain(|p| match interval {
        Interval::Closed => p.time <= horizon,
        Interval::Open => p.time < t * (1.0 - END_SLACK),
    });
    points.sort_by(|a, b| a.time.total_cmp(&b.time));
    let total = points.iter().map(|p| p.multiplicity).sum();
    Ok(Some(ConjugateReport {
        horizon: t,
        interval,
        points,
        total,
    }))
}

/// Bisection for the sign change of `det B` on `[s0, s0 + width]`.
fn bisect_root(
    field: &mut Field,
    rk: &mut Rk4,
    y0: &[f64],
    s0: f64,
    det0: f64,
    width: f64,
    h: f64,
) -> Option<(f64, Vec<f64>)> {
    let (mut lo, mut hi) = (0.0, width);
    let sign0 = det0.signum();
    while hi - lo > TIME_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        let state = field.advance_by(rk, y0, mid, h)?;
        let det = field.vertical_block(&state).determinant();
        if det == 0.0 {
            return Some((s0 + mid, state));
        }
        if det.signum() == sign0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    Some((s0 + mid, field.advance_by(rk, y0, mid, h)?))
}

/// Golden-section minimum of `|det B|` on `[s0, s0 + width]`.
fn golden_min(field: &mut Field, rk: &mut Rk4, y0: &[f64], s0: f64, width: f64, h: f64) -> Option<(f64, Vec<f64>)> {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let f = |dt: f64, field: &mut Field, rk: &mut Rk4| -> Option<f64> {
        let state = field.advance_by(rk, y0, dt, h)?;
        Some(field.vertical_block(&state).determinant().abs())
    };
    let (mut a, mut b) = (0.0, width);
    let mut c = b - phi * (b - a);
    let mut e = a + phi * (b - a);
    let mut fc = f(c, field, rk)?;
    let mut fe = f(e, field, rk)?;
    while b - a > TIME_TOLERANCE {
        if fc < fe {
            b = e;
            e = c;
            fe = fc;
            c = b - phi * (b - a);
            fc = f(c, field, rk)?;
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + phi * (b - a);
            fe = f(e, field, rk)?;
        }
    }
    let mid = 0.5 * (a + b);
    Some((s0 + mid, field.advance_by(rk, y0, mid, h)?))
}

/// Velocity of the loop geodesic leaving the basepoint.
///
/// Genuine closed geodesics use the fourth-order central difference across
/// the basepoint; cornered loops use the second-order one-sided difference.
pub fn loop_start(chart: &dyn MetricChart, lp: &DiscreteLoop, one_sided: bool) -> Result<TangentVector> {
    let n = lp.len();
    let d = lp.dim();
    let nf = n as f64;
    let periods = chart.periods();
    let x0 = lp.basepoint();
    let delta = |k: usize| {
        let mut out = vec![0.0; d];
        lifted_delta(&periods, x0, lp.node(k % n), &mut out);
        out
    };
    let v: Vec<f64> = if one_sided {
        let (d1, d2) = (delta(1), delta(2));
        (0..d).map(|k| nf * (4.0 * d1[k] - d2[k]) / 2.0).collect()
    } else {
        let (p1, p2, m1, m2) = (delta(1), delta(2), delta(n - 1), delta(n - 2));
        (0..d)
            .map(|k| nf * (8.0 * (p1[k] - m1[k]) - (p2[k] - m2[k])) / 12.0)
            .collect()
    };
    TangentVector::new(ChartPoint::new(chart, x0.to_vec())?, v)
}

/// Time-1 flow of a closed geodesic with its frame holonomy folded in.
#[derive(Debug, Clone)]
pub struct LoopMonodromy {
    pub monodromy: MonodromyMatrix,
    /// `D diag(Q, Q) M D⁻¹` with `Q = E(0)ᵀ g E(1)` and `D = diag(|v| I, I)`:
    /// the return map in the start frame with the two blocks put on the same
    /// scale.
    pub balanced: DMatrix<f64>,
    /// Relative closure defect of the integrated geodesic.
    pub defect: f64,
    pub speed: f64,
}

pub fn loop_monodromy(chart: &dyn MetricChart, lp: &DiscreteLoop, steps: usize) -> Result<LoopMonodromy> {
    let start = loop_start(chart, lp, false)?;
    let mono = jacobi_propagate(chart, &start, 1.0, steps)?;
    let d = chart.dim();
    let x0 = start.base.coords();
    let mut jet = MetricJet::new(d);
    chart.eval(x0, 0, &mut jet);
    let speed = jet.inner(&start.v, &start.v).max(0.0).sqrt();
    let scale = if speed > CONSTANT_SPEED { speed } else { 1.0 };
    let mut dx = vec![0.0; d];
    lifted_delta(&chart.periods(), x0, &mono.end_point, &mut dx);
    let dv: Vec<f64> = mono.end_velocity.iter().zip(&start.v).map(|(a, b)| a - b).collect();
    let defect = jet.inner(&dx, &dx).max(0.0).sqrt() + jet.inner(&dv, &dv).max(0.0).sqrt() / scale;
    if !(defect <= CLOSURE_TOLERANCE) {
        return Err(Error::NotAGeodesic { defect });
    }
    let q = mono.frame_start.transpose() * &jet.g * &mono.frame_end;
    let mut p = mono.matrix.clone();
    for blk in 0..2 {
        let rows = p.rows(blk * d, d).into_owned();
        p.rows_mut(blk * d, d).copy_from(&(&q * rows));
    }
    let balanced = DMatrix::from_fn(2 * d, 2 * d, |i, j| {
        let si = if i < d { scale } else { 1.0 };
        let sj = if j < d { scale } else { 1.0 };
        p[(i, j)] * si / sj
    });
    Ok(LoopMonodromy {
        monodromy: mono,
        balanced,
        defect,
        speed,
    })
}

/// `dim ker(Pᵐ − I)` as the sum of `dim ker(P − ωI)` over the `m`-th roots
/// of unity `ω`, which is exact because the factors `P − ωI` commute and are
/// pairwise coprime. Each kernel is a singular-value count below
/// `rank_threshold · max(σ_max, 1)`.
pub fn nullity_of_iterate(balanced: &DMatrix<f64>, m: usize, rank_threshold: f64) -> usize {
    let n = balanced.nrows();
    (0..m.max(1))
        .map(|j| {
            let ang = 2.0 * PI * j as f64 / m.max(1) as f64;
            let w = Complex::new(ang.cos(), ang.sin());
            let a = DMatrix::from_fn(n, n, |r, c| {
                let z = Complex::new(balanced[(r, c)], 0.0);
                if r == c {
                    z - w
                } else {
                    z
                }
            });
            let sv = a.singular_values();
            let thr = rank_threshold * sv.max().max(1.0);
            sv.iter().filter(|&&s| s < thr).count()
        })
        .sum()
}

/// Nullity of the `m`-th iterate of a closed geodesic from its monodromy.
pub fn nullity_via_monodromy(
    chart: &dyn MetricChart,
    lp: &DiscreteLoop,
    m: usize,
    rank_threshold: f64,
) -> Result<usize> {
    if m == 0 {
        return Err(Error::invalid("iterate count must be at least 1"));
    }
    let mono = loop_monodromy(chart, lp, DEFAULT_STEPS)?;
    Ok(nullity_of_iterate(&mono.balanced, m, rank_threshold))
}

/// Sampling parameters for [`close_conjugate_points_check`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CloseCheckOptions {
    pub n_samples: usize,
    pub seed: u64,
    /// Width of the sampled shell `K < r < K + shell`; defaults to `ℓ`.
    pub shell: Option<f64>,
    /// RK4 steps per segment.
    pub steps: usize,
    /// Attempts allowed per requested segment before giving up.
    pub oversampling: usize,
}

impl Default for CloseCheckOptions {
    fn default() -> Self {
        CloseCheckOptions {
            n_samples: 200,
            seed: 0,
            shell: None,
            steps: 400,
            oversampling: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvaturePart {
    pub samples: usize,
    pub max_curvature: f64,
    /// `(π/ℓ)²`.
    pub bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentSample {
    pub start: Vec<f64>,
    pub velocity: Vec<f64>,
    pub attempts: usize,
    pub conjugate_times: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectPart {
    pub samples: usize,
    pub attempts: usize,
    pub discarded: usize,
    pub segments: Vec<SegmentSample>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CloseConjugateReport {
    pub ell: f64,
    pub k_radius: f64,
    pub shell: f64,
    pub curvature: CurvaturePart,
    pub direct: DirectPart,
    /// False exactly when the curvature criterion passed but a sampled
    /// segment carried a conjugate point.
    pub rauch_implies_direct: bool,
}

fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Largest sectional curvature over a few random planes at `x`.
fn max_plane_curvature(chart: &dyn MetricChart, x: &[f64], rng: &mut ChaCha8Rng) -> f64 {
    let d = chart.dim();
    let mut jet = MetricJet::new(d);
    chart.eval(x, 0, &mut jet);
    if let Some(k) = chart.isotropic_curvature(x) {
        return k;
    }
    let rm = riemann_at(chart, x, &mut MetricJet::new(d));
    let mut best = f64::NEG_INFINITY;
    let mut rvw = vec![0.0; d];
    for _ in 0..8 {
        let v: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
        let w: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
        let denom = jet.inner(&v, &v) * jet.inner(&w, &w) - jet.inner(&v, &w).powi(2);
        if denom.abs() < 1e-12 {
            continue;
        }
        rm.apply(&v, &w, &w, &mut rvw);
        best = best.max(jet.inner(&rvw, &v) / denom);
    }
    best
}

/// Sampled test of "no conjugate points on geodesics of length `ℓ` outside
/// `{r ≤ K}`".
///
/// Part (a) evaluates the curvature criterion `κ < (π/ℓ)²` at points of the
/// shell `K < r < K + shell`. Part (b) shoots geodesics of length `ℓ` from
/// random points and unit directions of the shell, discards those whose trace
/// enters `{r ≤ K}` and requires the survivors to be free of conjugate
/// points. Segment `i` draws from RNG stream `i`, so results do not depend on
/// thread scheduling.
pub fn close_conjugate_points_check(
    chart: &dyn MetricChart,
    ell: f64,
    k_radius: f64,
    opts: &CloseCheckOptions,
) -> Result<CloseConjugateReport> {
    if !(ell > 0.0) || !ell.is_finite() {
        return Err(Error::invalid("length bound must be positive"));
    }
    if chart.is_compact() {
        return Err(Error::invalid("the check needs a non-compact chart with an exhaustion"));
    }
    if opts.n_samples == 0 || opts.oversampling == 0 {
        return Err(Error::invalid("sample and oversampling counts must be positive"));
    }
    let shell = opts.shell.unwrap_or(ell);
    if !(shell > 0.0) {
        return Err(Error::invalid("shell width must be positive"));
    }
    let (lo, hi) = (k_radius.max(0.0), k_radius.max(0.0) + shell);
    let bound = (PI / ell).powi(2);
    let curv: Vec<f64> = (0..opts.n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(opts.seed, 2 * i as u64);
            let x = chart.sample_point(&mut rng, lo, hi);
            max_plane_curvature(chart, &x, &mut rng)
        })
        .collect();
    let max_curvature = curv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let curvature = CurvaturePart {
        samples: opts.n_samples,
        max_curvature,
        bound,
        passed: curv.iter().all(|&k| k < bound),
    };
    let stay = |x: &[f64]| chart.exhaustion(x).is_some_and(|e| e.r > k_radius);
    let segments: Vec<Result<Option<SegmentSample>>> = (0..opts.n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(opts.seed, 2 * i as u64 + 1);
            let d = chart.dim();
            let mut jet = MetricJet::new(d);
            for attempt in 1..=opts.oversampling {
                let x = chart.sample_point(&mut rng, lo, hi);
                if !stay(&x) {
                    continue;
                }
                chart.eval(&x, 0, &mut jet);
                let mut v: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
                let n = jet.inner(&v, &v).sqrt();
                if !(n > 1e-12) {
                    continue;
                }
                v.iter_mut().for_each(|c| *c *= ell / n);
                let start = TangentVector::new(ChartPoint::new(chart, x.clone())?, v.clone())?;
                match scan(chart, &start, 1.0, opts.steps, Interval::Closed, stay) {
                    Ok(Some(rep)) => {
                        return Ok(Some(SegmentSample {
                            start: x,
                            velocity: v,
                            attempts: attempt,
                            conjugate_times: rep.points.iter().map(|p| p.time).collect(),
                        }))
                    }
                    Ok(None) | Err(Error::DomainEscape { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
            Ok(None)
        })
        .collect();
    let mut accepted = Vec::with_capacity(opts.n_samples);
    let mut starved = false;
    for s in segments {
        match s? {
            Some(seg) => accepted.push(seg),
            None => starved = true,
        }
    }
    if starved {
        return Err(Error::SamplingStarvation {
            requested: opts.n_samples,
            accepted: accepted.len(),
            attempts: opts.n_samples * opts.oversampling,
            k_radius,
        });
    }
    let attempts: usize = accepted.iter().map(|s| s.attempts).sum();
    let passed = accepted.iter().all(|s| s.conjugate_times.is_empty());
    let direct = DirectPart {
        samples: accepted.len(),
        attempts,
        discarded: attempts - accepted.len(),
        segments: accepted,
        passed,
    };
    Ok(CloseConjugateReport {
        ell,
        k_radius,
        shell,
        rauch_implies_direct: !curvature.passed || direct.passed,
        curvature,
        direct,
    })
}

/// Largest curvature found on the level set `{r = radius}`.
pub fn level_max_curvature(chart: &dyn MetricChart, radius: f64, samples: usize, seed: u64) -> f64 {
    let mut rng = sample_rng(seed, 0);
    (0..samples.max(1))
        .map(|_| {
            let x = chart.sample_point(&mut rng, radius, radius);
            max_plane_curvature(chart, &x, &mut rng)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest radius `ρ*` beyond which the curvature criterion `κ < (π/ℓ)²`
/// holds on every scanned level set up to `r_max`, refined by bisection
/// between the last failing and first passing grid levels. `None` when the
/// criterion fails at `r_max`.
pub fn rauch_threshold_radius(chart: &dyn MetricChart, ell: f64, r_max: f64, seed: u64) -> Result<Option<f64>> {
    if chart.is_compact() || !(ell > 0.0) || !(r_max > 0.0) {
        return Err(Error::invalid(
            "threshold radius needs a non-compact chart, ℓ > 0 and r_max > 0",
        ));
    }
    let bound = (PI / ell).powi(2);
    let passes = |r: f64| level_max_curvature(chart, r, 16, seed) < bound;
    let grid = 512;
    let level = |j: usize| r_max * j as f64 / grid as f64;
    let mut first_pass = None;
    for j in (0..=grid).rev() {
        if passes(level(j)) {
            first_pass = Some(j);
        } else {
            break;
        }
    }
    let Some(j) = first_pass else {
        return Ok(None);
    };
    if j == 0 {
        return Ok(Some(0.0));
    }
    let (mut lo, mut hi) = (level(j - 1), level(j));
    while hi - lo > 1e-10 * r_max {
        let mid = 0.5 * (lo + hi);
        if passes(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::ChartSpec;

    #[test]
    fn frame_is_orthonormal_and_led_by_velocity() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let e = orthonormal_frame(&g, Some(&[1.0, 1.0]));
        let gram = e.transpose() * &g * &e;
        assert!((gram - DMatrix::identity(2, 2)).amax() < 1e-14);
        assert!((e[(0, 0)] - e[(1, 0)]).abs() < 1e-14);
        let z = orthonormal_frame(&g, Some(&[0.0, 0.0]));
        assert!((z.transpose() * &g * &z - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn plane_flow_is_a_shear() {
        let chart = ChartSpec::named("plane").build().unwrap();
        let start = TangentVector::new(
            ChartPoint::new(chart.as_ref(), vec![0.3, -0.2]).unwrap(),
            vec![0.7, 1.1],
        )
        .unwrap();
        let m = jacobi_propagate(chart.as_ref(), &start, 2.5, 64).unwrap();
        let want = DMatrix::from_row_slice(
            4,
            4,
            &[1., 0., 2.5, 0., 0., 1., 0., 2.5, 0., 0., 1., 0., 0., 0., 0., 1.],
        );
        assert!((m.matrix - want).amax() < 1e-12);
    }

    #[test]
    fn roots_of_unity_count_matches_power_kernel() {
        // Rotation by 2π/3 in the normal block, shear in the tangential one.
        let (c, s) = ((2.0 * PI / 3.0).cos(), (2.0 * PI / 3.0).sin());
        let p = DMatrix::from_row_slice(4, 4, &[1., 0., 1., 0., 0., c, 0., s, 0., 0., 1., 0., 0., -s, 0., c]);
        assert_eq!(nullity_of_iterate(&p, 1, RANK_THRESHOLD), 1);
        assert_eq!(nullity_of_iterate(&p, 2, RANK_THRESHOLD), 1);
        assert_eq!(nullity_of_iterate(&p, 3, RANK_THRESHOLD), 3);
        assert_eq!(nullity_of_iterate(&p, 6, RANK_THRESHOLD), 3);
    }
}
