//! Preconditioned gradient descent for `E_α`, discrete sweepout minimax and
//! warm-started penalty continuation.
//!
//! Descent directions are Sobolev gradients: the coordinate gradient is
//! mapped through the inverse of `P = (2/N) W^{1/2}(μI + N²D)W^{1/2}`, where
//! `D` is the periodic second difference acting on each coordinate
//! separately, `W` holds the diagonal metric entries `g_kk` at the nodes and
//! `μ = max(E, 1)`. `P` approximates the Gram matrix of twice the product
//! `∫ μ g(ξ,ξ) + g(ξ',ξ')`; weighting the mass term by the energy balances
//! the stiffness of displacements against that of bending, so that step
//! sizes stay close to one and convergence rates do not depend on `N`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loops::{energy_and_gradient, DiscreteLoop};
use crate::metric::{lifted_delta, MetricChart, MetricJet};
use crate::penalty::PenaltySchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    Identity,
    PeriodicLaplacian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescentOptions {
    pub max_iterations: usize,
    /// Stop once the preconditioned gradient norm drops below this.
    pub tolerance: f64,
    pub armijo: f64,
    pub backtrack: f64,
    /// Upper bound for trial step lengths.
    pub max_step: f64,
    pub preconditioner: Preconditioner,
    /// Refine once when a segment exceeds this fraction of the chart cap.
    pub refine_fraction: f64,
    pub allow_refine: bool,
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions {
            max_iterations: 20_000,
            tolerance: 1e-8,
            armijo: 1e-4,
            backtrack: 0.5,
            max_step: 4.0,
            preconditioner: Preconditioner::PeriodicLaplacian,
            refine_fraction: 0.9,
            allow_refine: true,
        }
    }
}

impl DescentOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.tolerance > 0.0
            && self.armijo > 0.0
            && self.armijo < 1.0
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.max_step > 0.0
            && self.refine_fraction > 0.0
            && self.refine_fraction <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(
                "descent tolerances and line-search constants must be in range",
            ))
        }
    }
}

/// Solves the constant-coefficient cyclic tridiagonal system with diagonal
/// `a` and off-diagonal `b` in place (Sherman–Morrison on top of Thomas).
fn solve_cyclic(a: f64, b: f64, rhs: &mut [f64]) {
    let n = rhs.len();
    let gamma = -a;
    let mut diag = vec![a; n];
    diag[0] = a - gamma;
    diag[n - 1] = a - b * b / gamma;
    let thomas = |r: &mut [f64]| {
        let mut c = vec![0.0; n];
        let mut beta = diag[0];
        r[0] /= beta;
        for i in 1..n {
            c[i] = b / beta;
            beta = diag[i] - b * c[i];
            r[i] = (r[i] - b * r[i - 1]) / beta;
        }
        for i in (0..n - 1).rev() {
            let ci = c[i + 1];
            r[i] -= ci * r[i + 1];
        }
    };
    thomas(rhs);
    let mut z = vec![0.0; n];
    z[0] = gamma;
    z[n - 1] = b;
    thomas(&mut z);
    let fact = (rhs[0] + b * rhs[n - 1] / gamma) / (1.0 + z[0] + b * z[n - 1] / gamma);
    for (x, zi) in rhs.iter_mut().zip(&z) {
        *x -= fact * zi;
    }
}

/// Diagonal metric entries `g_kk(x_i)`, node-major.
pub fn node_weights(chart: &dyn MetricChart, lp: &DiscreteLoop) -> Vec<f64> {
    let d = lp.dim();
    let mut jet = MetricJet::new(d);
    let mut out = Vec::with_capacity(lp.as_flat().len());
    for i in 0..lp.len() {
        chart.eval(lp.node(i), 0, &mut jet);
        out.extend((0..d).map(|k| jet.g[(k, k)]));
    }
    out
}

/// `P⁻¹ grad` for node-major data with mass weight `mu` and node weights `w`.
pub fn precondition(kind: Preconditioner, dim: usize, mu: f64, w: &[f64], grad: &[f64]) -> Vec<f64> {
    let n = grad.len() / dim;
    let nf = n as f64;
    match kind {
        Preconditioner::Identity => grad.iter().zip(w).map(|(g, wk)| g * nf / (2.0 * mu * wk)).collect(),
        Preconditioner::PeriodicLaplacian => {
            let a = 2.0 / nf * (mu + 2.0 * nf * nf);
            let b = -2.0 * nf;
            let mut out = vec![0.0; grad.len()];
            let mut col = vec![0.0; n];
            for k in 0..dim {
                for i in 0..n {
                    col[i] = grad[i * dim + k] / w[i * dim + k].sqrt();
                }
                solve_cyclic(a, b, &mut col);
                for i in 0..n {
                    out[i * dim + k] = col[i] / w[i * dim + k].sqrt();
                }
            }
            out
        }
    }
}

/// `P x`, the Sobolev metric whose inverse [`precondition`] applies.
pub fn apply_metric(kind: Preconditioner, dim: usize, mu: f64, w: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len() / dim;
    let nf = n as f64;
    match kind {
        Preconditioner::Identity => x.iter().zip(w).map(|(v, wk)| v * 2.0 * mu * wk / nf).collect(),
        Preconditioner::PeriodicLaplacian => {
            let a = 2.0 / nf * (mu + 2.0 * nf * nf);
            let b = -2.0 * nf;
            let mut out = vec![0.0; x.len()];
            for k in 0..dim {
                let y = |i: usize| x[i * dim + k] * w[i * dim + k].sqrt();
                for i in 0..n {
                    let z = a * y(i) + b * (y((i + n - 1) % n) + y((i + 1) % n));
                    out[i * dim + k] = z * w[i * dim + k].sqrt();
                }
            }
            out
        }
    }
}

/// `E_α` as an objective on loops.
#[derive(Debug, Clone, Copy)]
pub struct Penalized<'a> {
    pub chart: &'a dyn MetricChart,
    pub schedule: &'a PenaltySchedule,
    pub alpha: usize,
}

impl<'a> Penalized<'a> {
    pub fn new(chart: &'a dyn MetricChart, schedule: &'a PenaltySchedule, alpha: usize) -> Self {
        Penalized { chart, schedule, alpha }
    }

    pub fn value(&self, lp: &DiscreteLoop) -> Result<f64> {
        Ok(crate::loops::energy(self.chart, lp)? + self.schedule.value(self.chart, self.alpha, lp.basepoint()))
    }

    /// Value and flat coordinate gradient.
    pub fn value_and_gradient(&self, lp: &DiscreteLoop) -> Result<(f64, Vec<f64>)> {
        let (e, g) = energy_and_gradient(self.chart, lp)?;
        let mut grad = g.as_slice().to_vec();
        let (f, df, _) = self
            .schedule
            .coordinate_derivatives(self.chart, self.alpha, lp.basepoint());
        for (k, v) in df.iter().enumerate() {
            grad[k] += v;
        }
        Ok((e + f, grad))
    }

    /// Preconditioned gradient norm `(∇ᵀ P⁻¹ ∇)^{1/2}`.
    pub fn gradient_norm(&self, lp: &DiscreteLoop, kind: Preconditioner) -> Result<f64> {
        let (v, grad) = self.value_and_gradient(lp)?;
        let w = node_weights(self.chart, lp);
        let dir = precondition(kind, lp.dim(), mass(v), &w, &grad);
        Ok(dot(&grad, &dir).max(0.0).sqrt())
    }
}

/// Mass weight of the Sobolev product at energy level `value`.
pub fn mass(value: f64) -> f64 {
    value.max(1.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum StepStatus {
    Converged,
    Stepped,
    Stalled,
}

/// Line-search state of one loop under descent.
#[derive(Debug, Clone)]
pub(crate) struct Walker {
    pub lp: DiscreteLoop,
    pub value: f64,
    grad: Vec<f64>,
    dir: Vec<f64>,
    pub gnorm: f64,
    tau: f64,
    climb_tau: f64,
    pub iterations: usize,
    pub refined: bool,
    pub recenterings: usize,
    pub max_increase: f64,
    pub status: StepStatus,
}

impl Walker {
    pub fn new(obj: &Penalized, lp: DiscreteLoop, opts: &DescentOptions) -> Result<Self> {
        let mut w = Walker {
            lp,
            value: 0.0,
            grad: Vec::new(),
            dir: Vec::new(),
            gnorm: 0.0,
            tau: 0.5,
            climb_tau: 0.5,
            iterations: 0,
            refined: false,
            recenterings: 0,
            max_increase: 0.0,
            status: StepStatus::Stepped,
        };
        w.reload(obj, opts)?;
        if w.gnorm < opts.tolerance {
            w.status = StepStatus::Converged;
        }
        Ok(w)
    }

    fn reload(&mut self, obj: &Penalized, opts: &DescentOptions) -> Result<()> {
        let (v, g) = obj.value_and_gradient(&self.lp)?;
        let w = node_weights(obj.chart, &self.lp);
        self.dir = precondition(opts.preconditioner, self.lp.dim(), mass(v), &w, &g);
        self.gnorm = dot(&g, &self.dir).max(0.0).sqrt();
        self.value = v;
        self.grad = g;
        Ok(())
    }

    /// One Armijo step along the preconditioned gradient.
    ///
    /// Once the predicted decrease is too small to be resolved by energy
    /// differences, the decrease is estimated by the trapezoid rule on the
    /// directional derivatives instead, which is exact for quadratics and
    /// immune to cancellation.
    pub fn step(&mut self, obj: &Penalized, opts: &DescentOptions) -> Result<StepStatus> {
        if self.gnorm < opts.tolerance {
            self.status = StepStatus::Converged;
            return Ok(self.status);
        }
        let dir = std::mem::take(&mut self.dir);
        let slope = self.gnorm * self.gnorm;
        let tau = self.tau;
        let moved = self.line_step(obj, opts, &dir, slope, 1.0, tau);
        self.dir = dir;
        match moved {
            Some(tau) => self.tau = tau,
            None => {
                self.status = StepStatus::Stalled;
                return Ok(self.status);
            }
        }
        self.finish_step(obj, opts)
    }

    /// A step of the climbing-image band: descent with the component along
    /// the family tangent `t` removed (in the metric of the preconditioner),
    /// followed for the top member by an ascent along `t`.
    pub fn band_step(&mut self, obj: &Penalized, opts: &DescentOptions, t: &[f64], climb: bool) -> Result<StepStatus> {
        let d = self.lp.dim();
        let w = node_weights(obj.chart, &self.lp);
        let pt = apply_metric(opts.preconditioner, d, mass(self.value), &w, t);
        let tt = dot(t, &pt);
        let gt = dot(&self.grad, t);
        let along = if tt > 0.0 { gt / tt } else { 0.0 };
        let perp: Vec<f64> = self.dir.iter().zip(t).map(|(p, q)| p - along * q).collect();
        let perp_slope = (self.gnorm * self.gnorm - along * gt).max(0.0);
        let climb_slope = along * gt;
        let tol2 = opts.tolerance * opts.tolerance;
        if self.gnorm < opts.tolerance || (perp_slope < tol2 && (!climb || climb_slope < tol2)) {
            self.status = StepStatus::Converged;
            return Ok(self.status);
        }
        let mut moved = false;
        if perp_slope >= tol2 {
            let tau = self.tau;
            if let Some(tau) = self.line_step(obj, opts, &perp, perp_slope, 1.0, tau) {
                self.tau = tau;
                moved = true;
            }
        }
        if climb && climb_slope >= tol2 {
            // Ascent of E along +t is descent of −E along −along·t.
            let up: Vec<f64> = t.iter().map(|q| -along * q).collect();
            let (v, g) = obj.value_and_gradient(&self.lp)?;
            self.value = v;
            self.grad = g;
            let slope = -dot(&self.grad, &up);
            if slope > 0.0 {
                let tau = self.climb_tau;
                if let Some(tau) = self.line_step(obj, opts, &up, slope, -1.0, tau) {
                    self.climb_tau = tau;
                    moved = true;
                }
            }
        }
        if !moved {
            self.status = StepStatus::Stalled;
            return Ok(self.status);
        }
        self.finish_step(obj, opts)
    }

    fn finish_step(&mut self, obj: &Penalized, opts: &DescentOptions) -> Result<StepStatus> {
        self.iterations += 1;
        self.maintain(obj.chart, opts)?;
        self.reload(obj, opts)?;
        self.status = if self.gnorm < opts.tolerance {
            StepStatus::Converged
        } else {
            StepStatus::Stepped
        };
        Ok(self.status)
    }

    /// Armijo search decreasing `sign · E_α` along `−dir`, starting from twice
    /// the last accepted step `tau`; `slope` is the directional derivative of
    /// `sign · E_α` along `−dir`. Moves the loop and returns the accepted step.
    fn line_step(
        &mut self,
        obj: &Penalized,
        opts: &DescentOptions,
        dir: &[f64],
        slope: f64,
        sign: f64,
        tau: f64,
    ) -> Option<f64> {
        let resolvable = 1e-7 * self.value.abs().max(1.0);
        let mut tau = (2.0 * tau).min(opts.max_step);
        let accepted = loop {
            if tau < 1e-14 {
                return None;
            }
            if let Some((trial, v, decrease)) = self.try_step(obj, dir, sign, tau, slope, resolvable) {
                if decrease >= opts.armijo * tau * slope {
                    break (trial, v, decrease);
                }
            }
            tau *= opts.backtrack;
        };
        let (mut trial, mut v, decrease) = accepted;
        // Armijo admits steps that overshoot a stiff mode into a sign-flipping
        // oscillation; fall back to the minimiser of the quadratic model.
        let curvature = 2.0 * (tau * slope - decrease) / (tau * tau);
        if curvature > 0.0 {
            let best = slope / curvature;
            if tau > 1.5 * best {
                if let Some((t2, v2, d2)) = self.try_step(obj, dir, sign, best, slope, resolvable) {
                    if d2 > decrease {
                        trial = t2;
                        v = v2;
                        tau = best;
                    }
                }
            }
        }
        if sign > 0.0 {
            self.max_increase = self.max_increase.max(v - self.value);
        }
        self.lp = trial;
        self.value = v;
        Some(tau)
    }

    /// Trial loop, its value and the measured decrease of `sign · E_α` for step `tau`.
    ///
    /// Decreases too small to resolve against the value are estimated by the
    /// trapezoid rule on the directional derivative.
    fn try_step(
        &self,
        obj: &Penalized,
        dir: &[f64],
        sign: f64,
        tau: f64,
        slope: f64,
        resolvable: f64,
    ) -> Option<(DiscreteLoop, f64, f64)> {
        let coords: Vec<f64> = self.lp.as_flat().iter().zip(dir).map(|(x, p)| x - tau * p).collect();
        let trial = self.lp.with_coords(obj.chart, coords).ok()?;
        let (v, g) = obj.value_and_gradient(&trial).ok()?;
        let decrease = if tau * slope > resolvable {
            sign * (self.value - v)
        } else {
            0.5 * tau * (slope + sign * dot(&g, dir))
        };
        Some((trial, v, decrease))
    }

    /// Node doubling and recentering after an accepted step.
    fn maintain(&mut self, chart: &dyn MetricChart, opts: &DescentOptions) -> Result<()> {
        if opts.allow_refine {
            let cap = chart.segment_cap();
            let lens = self.lp.segment_lengths(chart);
            if let Some((i, &len)) = lens.iter().enumerate().find(|(_, &l)| l > opts.refine_fraction * cap) {
                if self.refined {
                    return Err(Error::RefineNeeded {
                        segment: i,
                        length: len,
                        cap: opts.refine_fraction * cap,
                    });
                }
                self.lp = self.lp.refined(chart)?;
                self.refined = true;
            }
        }
        if let Some(radius) = chart.recenter_radius() {
            let current = self.lp.max_chart_radius();
            if current > radius {
                if let Some(moved) = self.lp.recentered(chart) {
                    if moved.max_chart_radius() < current {
                        self.lp = moved;
                        self.recenterings += 1;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Outcome of a converged descent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DescentReport {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub penalized_energy: f64,
    pub refined: bool,
    pub recenterings: usize,
    /// Largest energy increase over accepted steps (only rounding-level
    /// increases, accepted once the predicted decrease drops below noise).
    pub max_increase: f64,
}

/// Descends `E_α` from `lp` until the preconditioned gradient norm is below tolerance.
pub fn descend(
    chart: &dyn MetricChart,
    schedule: &PenaltySchedule,
    alpha: usize,
    lp: &DiscreteLoop,
    opts: &DescentOptions,
) -> Result<(DiscreteLoop, DescentReport)> {
    opts.validate()?;
    let obj = Penalized::new(chart, schedule, alpha);
    let mut w = Walker::new(&obj, lp.clone(), opts)?;
    while w.status == StepStatus::Stepped {
        if w.iterations >= opts.max_iterations {
            break;
        }
        w.step(&obj, opts)?;
    }
    if w.status != StepStatus::Converged {
        return Err(Error::NotConverged {
            iterations: w.iterations,
            gradient_norm: w.gnorm,
            last: Box::new(w.lp),
        });
    }
    let report = DescentReport {
        iterations: w.iterations,
        gradient_norm: w.gnorm,
        penalized_energy: w.value,
        refined: w.refined,
        recenterings: w.recenterings,
        max_increase: w.max_increase,
    };
    Ok((w.lp, report))
}

/// A discrete one-parameter family of loops with frozen members.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepoutFamily {
    pub members: Vec<DiscreteLoop>,
    pub frozen: Vec<bool>,
}

impl SweepoutFamily {
    pub fn new(members: Vec<DiscreteLoop>, frozen: Vec<bool>) -> Result<Self> {
        if members.is_empty() || members.len() != frozen.len() {
            return Err(Error::invalid("family needs one frozen flag per member"));
        }
        let (n, d) = (members[0].len(), members[0].dim());
        if members.iter().any(|m| m.len() != n || m.dim() != d) {
            return Err(Error::invalid("family members must share node count and dimension"));
        }
        Ok(SweepoutFamily { members, frozen })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn reversed(&self) -> Self {
        let mut f = self.clone();
        f.members.reverse();
        f.frozen.reverse();
        f
    }

    /// Latitude circles from the south to the north pole of the stereographic
    /// sphere; constant loops at both poles are frozen. Northern members are
    /// stored in the reflected frame. The family has a saddle at the equator,
    /// so sweeps over it need [`SweepOptions::climbing`].
    pub fn birkhoff_sphere(chart: &dyn MetricChart, members: usize, n: usize) -> Result<Self> {
        if chart.recenter_radius().is_none() || chart.dim() != 2 {
            return Err(Error::invalid("the Birkhoff family needs the stereographic sphere"));
        }
        if members < 3 || members.is_multiple_of(2) {
            return Err(Error::invalid("the Birkhoff family needs an odd member count >= 3"));
        }
        let mid = members / 2;
        let mut out = Vec::with_capacity(members);
        for s in 0..members {
            let phi = -PI / 2.0 + PI * s as f64 / (members - 1) as f64;
            let (rho, reflected) = if s <= mid {
                ((PI / 4.0 + phi / 2.0).tan(), false)
            } else {
                ((PI / 4.0 - phi / 2.0).tan(), true)
            };
            let rho = if s == 0 || s == members - 1 { 0.0 } else { rho };
            let coords: Vec<f64> = (0..n)
                .flat_map(|i| {
                    let t = 2.0 * PI * i as f64 / n as f64;
                    [rho * t.cos(), rho * t.sin()]
                })
                .collect();
            out.push(DiscreteLoop::from_flat(chart, coords, reflected)?);
        }
        let mut frozen = vec![false; members];
        frozen[0] = true;
        frozen[members - 1] = true;
        Self::new(out, frozen)
    }

    /// Circles `r_s = radius·sin(π s / (members − 1))` about the origin; both
    /// (constant) endpoints are frozen.
    pub fn concentric_circles(chart: &dyn MetricChart, members: usize, radius: f64, n: usize) -> Result<Self> {
        if members < 2 {
            return Err(Error::invalid("a family needs at least two members"));
        }
        let center = vec![0.0; chart.dim()];
        let out = (0..members)
            .map(|s| {
                let r = radius * (PI * s as f64 / (members - 1) as f64).sin();
                let r = if s == 0 || s == members - 1 { 0.0 } else { r };
                crate::loops::circle_polygon(chart, &center, r, n)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut frozen = vec![false; members];
        frozen[0] = true;
        frozen[members - 1] = true;
        Self::new(out, frozen)
    }

    /// Parallels at evenly spaced heights in `[−half_height, half_height]`
    /// on a surface of revolution, all free.
    pub fn winding_family(
        chart: &dyn MetricChart,
        members: usize,
        half_height: f64,
        winding: i64,
        n: usize,
    ) -> Result<Self> {
        if members < 1 {
            return Err(Error::invalid("a family needs at least one member"));
        }
        let out = (0..members)
            .map(|s| {
                let z = if members == 1 {
                    0.0
                } else {
                    -half_height + 2.0 * half_height * s as f64 / (members - 1) as f64
                };
                crate::loops::parallel_circle(chart, z, winding, n)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(out, vec![false; members])
    }
}

/// Node-wise distance between two members and their midpoint, computed in
/// the frame that keeps the pair closest to the chart origin.
fn pair_geometry(chart: &dyn MetricChart, a: &DiscreteLoop, b: &DiscreteLoop) -> Option<(f64, Vec<f64>, bool)> {
    let candidates: Vec<(DiscreteLoop, DiscreteLoop)> = if a.reflected() == b.reflected() {
        vec![(a.clone(), b.clone())]
    } else {
        // Primary frame first, so that ties resolve to it.
        let mut v = Vec::new();
        for &frame in &[false, true] {
            if let (Some(x), Some(y)) = (a.in_frame(chart, frame), b.in_frame(chart, frame)) {
                v.push((x, y));
            }
        }
        v
    };
    let (x, y) = candidates.into_iter().min_by(|p, q| {
        let rp = p.0.max_chart_radius().max(p.1.max_chart_radius());
        let rq = q.0.max_chart_radius().max(q.1.max_chart_radius());
        rp.partial_cmp(&rq).unwrap_or(std::cmp::Ordering::Equal)
    })?;
    let periods = chart.periods();
    let d = x.dim();
    let mut delta = vec![0.0; d];
    let mut dist = 0.0f64;
    let mut mid = Vec::with_capacity(x.as_flat().len());
    for i in 0..x.len() {
        lifted_delta(&periods, x.node(i), y.node(i), &mut delta);
        dist = dist.max(delta.iter().map(|c| c * c).sum::<f64>().sqrt());
        mid.extend(x.node(i).iter().zip(&delta).map(|(p, q)| p + 0.5 * q));
    }
    Some((dist, mid, x.reflected()))
}

/// Largest node-wise distance between consecutive members.
pub fn family_gap(chart: &dyn MetricChart, family: &SweepoutFamily) -> f64 {
    family
        .members
        .windows(2)
        .map(|w| pair_geometry(chart, &w[0], &w[1]).map_or(f64::INFINITY, |g| g.0))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepOptions {
    pub descent: DescentOptions,
    pub max_rounds: usize,
    /// Rounds over which the maximum must be stable.
    pub window: usize,
    pub rel_change: f64,
    /// Continuity cap between consecutive members (defaults to the chart cap).
    pub cap: Option<f64>,
    pub max_members: usize,
    /// Climbing-image steps: interior members descend orthogonally to the
    /// family tangent and the top member also climbs along it, so that the
    /// top converges to the saddle instead of sliding off it. Families with no
    /// saddle between their ends (contractible sweeps) must not enable this.
    pub climbing: bool,
    /// A settled maximum is accepted once the argmax member has a gradient
    /// norm below this, even if it could still be polished further.
    pub argmax_tolerance: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            descent: DescentOptions {
                allow_refine: false,
                ..DescentOptions::default()
            },
            max_rounds: 5_000,
            window: 50,
            rel_change: 1e-6,
            cap: None,
            max_members: 1_024,
            climbing: false,
            argmax_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub value: f64,
    pub argmax: usize,
    pub argmax_loop: DiscreteLoop,
    pub argmax_gradient_norm: f64,
    pub family: SweepoutFamily,
    pub rounds: usize,
    /// The maximum stabilized (as opposed to hitting the round limit).
    pub stabilized: bool,
    pub inserted: usize,
    pub stalled: usize,
    /// Family maximum after every round.
    pub history: Vec<f64>,
}

/// Family-wise descent approximating the minimax value from above.
pub fn minimax_sweepout(
    chart: &dyn MetricChart,
    schedule: &PenaltySchedule,
    alpha: usize,
    family: &SweepoutFamily,
    opts: &SweepOptions,
) -> Result<SweepResult> {
    opts.descent.validate()?;
    let obj = Penalized::new(chart, schedule, alpha);
    let cap = opts.cap.unwrap_or_else(|| chart.segment_cap());
    let mut walkers = family
        .members
        .iter()
        .map(|m| Walker::new(&obj, m.clone(), &opts.descent))
        .collect::<Result<Vec<_>>>()?;
    let mut frozen = family.frozen.clone();
    let mut history = Vec::new();
    let mut inserted = 0;
    let mut stabilized = false;
    let mut rounds = 0;
    let argmax_of = |ws: &[Walker]| {
        let mut best = 0;
        for (i, w) in ws.iter().enumerate() {
            if w.value > ws[best].value {
                best = i;
            }
        }
        best
    };
    retighten(chart, &obj, &mut walkers, &mut frozen, cap, opts, 0, &mut inserted)?;
    while rounds < opts.max_rounds {
        let done = |w: &Walker, f: bool| f || w.status != StepStatus::Stepped;
        if walkers.iter().zip(&frozen).all(|(w, &f)| done(w, f)) {
            stabilized = true;
            break;
        }
        let outcomes: Vec<Result<StepStatus>> = if opts.climbing {
            let top = argmax_of(&walkers);
            let tangents: Vec<Option<Vec<f64>>> =
                (0..walkers.len()).map(|i| family_tangent(chart, &walkers, i)).collect();
            walkers
                .par_iter_mut()
                .zip(frozen.par_iter())
                .zip(tangents.into_par_iter())
                .enumerate()
                .map(|(i, ((w, &f), t))| match (f, t) {
                    (true, _) => Ok(w.status),
                    (false, Some(t)) => w.band_step(&obj, &opts.descent, &t, i == top),
                    (false, None) if done(w, f) => Ok(w.status),
                    (false, None) => w.step(&obj, &opts.descent),
                })
                .collect()
        } else {
            walkers
                .par_iter_mut()
                .zip(frozen.par_iter())
                .map(|(w, &f)| {
                    if done(w, f) {
                        Ok(w.status)
                    } else {
                        w.step(&obj, &opts.descent)
                    }
                })
                .collect()
        };
        for o in outcomes {
            o.map_err(|e| Error::FamilyTear {
                round: rounds,
                reason: e.to_string(),
            })?;
        }
        retighten(chart, &obj, &mut walkers, &mut frozen, cap, opts, rounds, &mut inserted)?;
        rounds += 1;
        let best = argmax_of(&walkers);
        history.push(walkers[best].value);
        if history.len() > opts.window {
            let now = history[history.len() - 1];
            let then = history[history.len() - 1 - opts.window];
            let settled = (now - then).abs() <= opts.rel_change * now.abs().max(f64::MIN_POSITIVE);
            if settled
                && (frozen[best]
                    || walkers[best].status != StepStatus::Stepped
                    || walkers[best].gnorm < opts.argmax_tolerance)
            {
                stabilized = true;
                break;
            }
        }
    }
    let best = argmax_of(&walkers);
    let stalled = walkers.iter().filter(|w| w.status == StepStatus::Stalled).count();
    let argmax_gradient_norm = walkers[best].gnorm;
    Ok(SweepResult {
        value: walkers[best].value,
        argmax: best,
        argmax_loop: walkers[best].lp.clone(),
        argmax_gradient_norm,
        family: SweepoutFamily {
            members: walkers.into_iter().map(|w| w.lp).collect(),
            frozen,
        },
        rounds,
        stabilized,
        inserted,
        stalled,
        history,
    })
}

/// Node-wise lifted difference `b − a`, with `b` expressed in the frame of `a`.
fn member_delta(chart: &dyn MetricChart, a: &DiscreteLoop, b: &DiscreteLoop) -> Option<Vec<f64>> {
    let b = b.in_frame(chart, a.reflected())?;
    let periods = chart.periods();
    let d = a.dim();
    let mut delta = vec![0.0; d];
    let mut out = Vec::with_capacity(a.as_flat().len());
    for i in 0..a.len() {
        lifted_delta(&periods, a.node(i), b.node(i), &mut delta);
        out.extend_from_slice(&delta);
    }
    Some(out)
}

/// Upwind tangent of the family at interior member `i`: towards the higher
/// neighbour on a slope, an energy-weighted blend at extrema.
fn family_tangent(chart: &dyn MetricChart, walkers: &[Walker], i: usize) -> Option<Vec<f64>> {
    if i == 0 || i + 1 >= walkers.len() {
        return None;
    }
    let here = &walkers[i].lp;
    let fwd = member_delta(chart, here, &walkers[i + 1].lp)?;
    let back: Vec<f64> = member_delta(chart, here, &walkers[i - 1].lp)?
        .iter()
        .map(|x| -x)
        .collect();
    let (lo, mid, hi) = (walkers[i - 1].value, walkers[i].value, walkers[i + 1].value);
    let (wf, wb) = if hi > mid && mid > lo {
        (1.0, 0.0)
    } else if hi < mid && mid < lo {
        (0.0, 1.0)
    } else {
        let (dmax, dmin) = {
            let (a, b) = ((hi - mid).abs(), (lo - mid).abs());
            (a.max(b), a.min(b))
        };
        if hi > lo {
            (dmax, dmin)
        } else {
            (dmin, dmax)
        }
    };
    let t: Vec<f64> = fwd.iter().zip(&back).map(|(f, b)| wf * f + wb * b).collect();
    t.iter().any(|x| *x != 0.0).then_some(t)
}

/// Inserts node-wise midpoints until consecutive members are within `cap`.
#[allow(clippy::too_many_arguments)]
fn retighten(
    chart: &dyn MetricChart,
    obj: &Penalized,
    walkers: &mut Vec<Walker>,
    frozen: &mut Vec<bool>,
    cap: f64,
    opts: &SweepOptions,
    round: usize,
    inserted: &mut usize,
) -> Result<()> {
    let mut i = 0;
    while i + 1 < walkers.len() {
        let (dist, mid, reflected) =
            pair_geometry(chart, &walkers[i].lp, &walkers[i + 1].lp).ok_or_else(|| Error::FamilyTear {
                round,
                reason: format!("members {i} and {} share no common frame", i + 1),
            })?;
        if dist < cap {
            i += 1;
            continue;
        }
        if walkers.len() >= opts.max_members {
            return Err(Error::FamilyTear {
                round,
                reason: format!(
                    "gap {dist:.3e} between members {i} and {} exceeds the member budget",
                    i + 1
                ),
            });
        }
        let lp = DiscreteLoop::from_flat(chart, mid, reflected).map_err(|e| Error::FamilyTear {
            round,
            reason: e.to_string(),
        })?;
        let w = Walker::new(obj, lp, &opts.descent).map_err(|e| Error::FamilyTear {
            round,
            reason: e.to_string(),
        })?;
        walkers.insert(i + 1, w);
        frozen.insert(i + 1, false);
        *inserted += 1;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ContinuationResult {
    /// `(α, value)` in the order run.
    pub values: Vec<(usize, f64)>,
    /// Indices `α` whose value exceeded the previous one by more than the tolerance.
    pub violations: Vec<usize>,
    pub last: SweepResult,
}

/// Tolerance for the monotonicity of continuation values.
pub const CONTINUATION_TOLERANCE: f64 = 1e-4;

/// Runs the sweepout for each `α`, warm-starting from the previous family.
pub fn penalty_continuation(
    chart: &dyn MetricChart,
    schedule: &PenaltySchedule,
    alphas: &[usize],
    family: &SweepoutFamily,
    opts: &SweepOptions,
) -> Result<ContinuationResult> {
    if alphas.is_empty() || alphas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("alpha range must be non-empty and strictly increasing"));
    }
    let mut current = family.clone();
    let mut values = Vec::new();
    let mut violations = Vec::new();
    let mut last = None;
    for &alpha in alphas {
        let res = minimax_sweepout(chart, schedule, alpha, &current, opts)?;
        if let Some(&(_, prev)) = values.last() {
            if res.value > prev + CONTINUATION_TOLERANCE {
                violations.push(alpha);
            }
        }
        values.push((alpha, res.value));
        current = res.family.clone();
        last = Some(res);
    }
    Ok(ContinuationResult {
        values,
        violations,
        last: last.expect("non-empty alpha range"),
    })
}
