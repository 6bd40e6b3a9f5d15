//! Periodic polygons as a discretization of the free loop space.
//!
//! A loop with nodes `x_0, …, x_{N−1}` (indices mod `N`) has energy
//! `E = N Σ_i g(m_i)(Δ_i, Δ_i)` with `Δ_i = x_{i+1} − x_i` taken along the
//! minimal lift of periodic coordinates and `m_i = x_i + Δ_i / 2`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{lifted_delta, reduce_periodic, ChartPoint, MetricChart, MetricJet};

/// Smallest admissible node count.
pub const MIN_NODES: usize = 8;

/// Discrete closed curve stored as reduced chart coordinates.
///
/// `reflected` marks loops whose coordinates live in the image of the chart's
/// recentering isometry (only used by the stereographic sphere).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLoop {
    dim: usize,
    coords: Vec<f64>,
    reflected: bool,
}

/// A discrete periodic vector field along a loop, stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopTangent {
    dim: usize,
    data: Vec<f64>,
}

impl LoopTangent {
    pub fn zeros(dim: usize, n: usize) -> Self {
        LoopTangent {
            dim,
            data: vec![0.0; dim * n],
        }
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Self {
        assert!(dim > 0 && data.len().is_multiple_of(dim));
        LoopTangent { dim, data }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn max_node_norm(&self) -> f64 {
        self.data
            .chunks(self.dim)
            .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

impl DiscreteLoop {
    /// Builds a loop from node coordinates, reducing periodic axes and
    /// checking the domain. Segment lengths are checked lazily by the
    /// operations that need them.
    pub fn new(chart: &dyn MetricChart, nodes: Vec<Vec<f64>>) -> Result<Self> {
        let d = chart.dim();
        if nodes.iter().any(|x| x.len() != d) {
            return Err(Error::invalid("node dimension does not match chart"));
        }
        Self::from_flat(chart, nodes.concat(), false)
    }

    /// Builds a loop from node-major flat coordinates.
    pub fn from_flat(chart: &dyn MetricChart, mut coords: Vec<f64>, reflected: bool) -> Result<Self> {
        let d = chart.dim();
        if !coords.len().is_multiple_of(d) {
            return Err(Error::invalid(
                "flat coordinate length is not a multiple of the dimension",
            ));
        }
        let n = coords.len() / d;
        if n < MIN_NODES {
            return Err(Error::invalid(format!(
                "a loop needs at least {MIN_NODES} nodes, got {n}"
            )));
        }
        let periods = chart.periods();
        for x in coords.chunks_mut(d) {
            for (k, c) in x.iter_mut().enumerate() {
                if let Some(p) = periods[k] {
                    *c = reduce_periodic(*c, p);
                }
            }
            chart.check_domain(x)?;
        }
        Ok(DiscreteLoop {
            dim: d,
            coords,
            reflected,
        })
    }

    /// Samples `curve(t)` at `t = i / n`.
    pub fn from_fn<F>(chart: &dyn MetricChart, n: usize, curve: F) -> Result<Self>
    where
        F: Fn(f64) -> Vec<f64>,
    {
        let nodes = (0..n).map(|i| curve(i as f64 / n as f64)).collect();
        Self::new(chart, nodes)
    }

    pub fn constant(chart: &dyn MetricChart, x: &[f64], n: usize) -> Result<Self> {
        Self::new(chart, vec![x.to_vec(); n])
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn point(&self, i: usize) -> ChartPoint {
        ChartPoint::from_reduced(self.node(i).to_vec())
    }

    pub fn basepoint(&self) -> &[f64] {
        self.node(0)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        self.coords.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub fn reflected(&self) -> bool {
        self.reflected
    }

    /// Same loop with flat coordinates replaced; used by solvers that move nodes.
    pub(crate) fn with_coords(&self, chart: &dyn MetricChart, coords: Vec<f64>) -> Result<Self> {
        Self::from_flat(chart, coords, self.reflected)
    }

    /// Applies the chart's recentering isometry to every node, toggling the frame flag.
    pub fn recentered(&self, chart: &dyn MetricChart) -> Option<Self> {
        let mut out = Vec::with_capacity(self.coords.len());
        for x in self.coords.chunks(self.dim) {
            out.extend(chart.recenter_map(x)?);
        }
        Self::from_flat(chart, out, !self.reflected).ok()
    }

    /// Expresses the loop in the requested frame, if the isometry is defined on it.
    pub fn in_frame(&self, chart: &dyn MetricChart, reflected: bool) -> Option<Self> {
        if reflected == self.reflected {
            Some(self.clone())
        } else {
            self.recentered(chart)
        }
    }

    /// Largest chart norm of a node.
    pub fn max_chart_radius(&self) -> f64 {
        self.coords
            .chunks(self.dim)
            .map(|x| x.iter().map(|c| c * c).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Lifted segment vector `x_{i+1} − x_i`.
    pub fn segment(&self, periods: &[Option<f64>], i: usize, out: &mut [f64]) {
        let j = (i + 1) % self.len();
        lifted_delta(periods, self.node(i), self.node(j), out);
    }

    /// Chart lengths of all segments.
    pub fn segment_lengths(&self, chart: &dyn MetricChart) -> Vec<f64> {
        let periods = chart.periods();
        let mut delta = vec![0.0; self.dim];
        (0..self.len())
            .map(|i| {
                self.segment(&periods, i, &mut delta);
                delta.iter().map(|c| c * c).sum::<f64>().sqrt()
            })
            .collect()
    }

    /// Fails with [`Error::RefineNeeded`] on the first segment at or above `cap`.
    pub fn check_segments(&self, chart: &dyn MetricChart, cap: f64) -> Result<()> {
        for (i, len) in self.segment_lengths(chart).into_iter().enumerate() {
            if !(len < cap) {
                return Err(Error::RefineNeeded {
                    segment: i,
                    length: len,
                    cap,
                });
            }
        }
        Ok(())
    }

    /// Continuous lift of the node coordinates starting from the stored node 0.
    pub fn lifted_coords(&self, chart: &dyn MetricChart) -> Vec<f64> {
        let periods = chart.periods();
        let d = self.dim;
        let mut out = Vec::with_capacity(self.coords.len());
        out.extend_from_slice(self.node(0));
        let mut delta = vec![0.0; d];
        for i in 0..self.len() - 1 {
            self.segment(&periods, i, &mut delta);
            for k in 0..d {
                let prev = out[i * d + k];
                out.push(prev + delta[k]);
            }
        }
        out
    }

    /// Winding number around each periodic axis (`None` for non-periodic axes).
    pub fn winding_numbers(&self, chart: &dyn MetricChart) -> Vec<Option<i64>> {
        let periods = chart.periods();
        let mut total = vec![0.0; self.dim];
        let mut delta = vec![0.0; self.dim];
        for i in 0..self.len() {
            self.segment(&periods, i, &mut delta);
            for k in 0..self.dim {
                total[k] += delta[k];
            }
        }
        periods
            .iter()
            .zip(&total)
            .map(|(p, t)| p.map(|p| (t / p).round() as i64))
            .collect()
    }

    /// The loop traced `m` times on `m·N` nodes.
    pub fn iterate(&self, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("iterate needs m >= 1"));
        }
        Ok(DiscreteLoop {
            dim: self.dim,
            coords: self.coords.repeat(m),
            reflected: self.reflected,
        })
    }

    /// Node rotation: the new node `j` is the old node `j + k (mod N)`.
    pub fn circle_shift(&self, k: usize) -> Result<Self> {
        let n = self.len();
        if k >= n {
            return Err(Error::invalid(format!("shift {k} out of range for {n} nodes")));
        }
        let mut coords = self.coords.clone();
        coords.rotate_left(k * self.dim);
        Ok(DiscreteLoop {
            dim: self.dim,
            coords,
            reflected: self.reflected,
        })
    }

    /// Doubles the node count by inserting chart midpoints of every segment.
    pub fn refined(&self, chart: &dyn MetricChart) -> Result<Self> {
        let periods = chart.periods();
        let d = self.dim;
        let mut delta = vec![0.0; d];
        let mut coords = Vec::with_capacity(2 * self.coords.len());
        for i in 0..self.len() {
            self.segment(&periods, i, &mut delta);
            coords.extend_from_slice(self.node(i));
            coords.extend(self.node(i).iter().zip(&delta).map(|(x, dx)| x + 0.5 * dx));
        }
        Self::from_flat(chart, coords, self.reflected)
    }

    pub fn to_record(&self, chart: &dyn MetricChart) -> LoopRecord {
        LoopRecord {
            chart: chart.name().to_string(),
            dim: self.dim,
            n: self.len(),
            reflected: self.reflected,
            winding: self.winding_numbers(chart),
            nodes: self.nodes(),
        }
    }

    pub fn from_record(chart: &dyn MetricChart, rec: &LoopRecord) -> Result<Self> {
        if rec.chart != chart.name() {
            return Err(Error::invalid(format!(
                "loop was stored for chart `{}`, not `{}`",
                rec.chart,
                chart.name()
            )));
        }
        if rec.nodes.len() != rec.n || rec.dim != chart.dim() {
            return Err(Error::invalid("loop record header does not match its nodes"));
        }
        let mut lp = Self::new(chart, rec.nodes.clone())?;
        lp.reflected = rec.reflected;
        Ok(lp)
    }

    /// CSV with header `node_index,c0,…,c{d−1}`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["node_index".to_string()];
        header.extend((0..self.dim).map(|k| format!("c{k}")));
        w.write_record(&header).expect("in-memory csv");
        for i in 0..self.len() {
            let mut row = vec![i.to_string()];
            row.extend(self.node(i).iter().map(|c| c.to_string()));
            w.write_record(&row).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }

    pub fn from_csv(chart: &dyn MetricChart, text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let d = chart.dim();
        let header = r.headers().map_err(|e| Error::invalid(e.to_string()))?;
        if header.len() != d + 1 || &header[0] != "node_index" {
            return Err(Error::invalid("csv header must be node_index,c0,...,c{d-1}"));
        }
        let mut nodes = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::invalid(e.to_string()))?;
            let idx: usize = rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad node index on row {row}")))?;
            if idx != row {
                return Err(Error::invalid(format!("node index {idx} out of order on row {row}")));
            }
            let x = (1..=d)
                .map(|k| {
                    rec[k]
                        .trim()
                        .parse::<f64>()
                        .map_err(|_| Error::invalid(format!("bad coordinate on row {row}")))
                })
                .collect::<Result<Vec<_>>>()?;
            nodes.push(x);
        }
        Self::new(chart, nodes)
    }
}

/// Serialized form of a loop, carrying winding metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopRecord {
    pub chart: String,
    pub dim: usize,
    pub n: usize,
    #[serde(default)]
    pub reflected: bool,
    pub winding: Vec<Option<i64>>,
    pub nodes: Vec<Vec<f64>>,
}

/// Per-segment data shared by energy, gradient and Hessian.
struct Segments<'a> {
    chart: &'a dyn MetricChart,
    periods: Vec<Option<f64>>,
    jet: MetricJet,
    delta: Vec<f64>,
    mid: Vec<f64>,
}

impl<'a> Segments<'a> {
    fn new(chart: &'a dyn MetricChart) -> Self {
        let d = chart.dim();
        Segments {
            chart,
            periods: chart.periods(),
            jet: MetricJet::new(d),
            delta: vec![0.0; d],
            mid: vec![0.0; d],
        }
    }

    /// Loads segment `i` and evaluates the metric jet at its midpoint.
    fn load(&mut self, lp: &DiscreteLoop, i: usize, order: usize) -> Result<()> {
        lp.segment(&self.periods, i, &mut self.delta);
        for (k, m) in self.mid.iter_mut().enumerate() {
            let v = lp.node(i)[k] + 0.5 * self.delta[k];
            *m = match self.periods[k] {
                Some(p) => reduce_periodic(v, p),
                None => v,
            };
        }
        self.chart.check_domain(&self.mid)?;
        self.chart.eval(&self.mid, order, &mut self.jet);
        Ok(())
    }

    fn sq(&self) -> f64 {
        self.jet.inner(&self.delta, &self.delta)
    }
}

/// Discrete energy `N Σ g(m_i)(Δ_i, Δ_i)`.
pub fn energy(chart: &dyn MetricChart, lp: &DiscreteLoop) -> Result<f64> {
    lp.check_segments(chart, chart.segment_cap())?;
    let n = lp.len();
    let mut seg = Segments::new(chart);
    let mut s = 0.0;
    for i in 0..n {
        seg.load(lp, i, 0)?;
        s += seg.sq();
    }
    Ok(n as f64 * s)
}

/// Energy together with its exact coordinate gradient.
pub fn energy_and_gradient(chart: &dyn MetricChart, lp: &DiscreteLoop) -> Result<(f64, LoopTangent)> {
    lp.check_segments(chart, chart.segment_cap())?;
    let n = lp.len();
    let d = lp.dim();
    let nf = n as f64;
    let mut seg = Segments::new(chart);
    let mut grad = LoopTangent::zeros(d, n);
    let mut s = 0.0;
    let mut gd = vec![0.0; d];
    for i in 0..n {
        seg.load(lp, i, 1)?;
        s += seg.sq();
        let j = (i + 1) % n;
        for (a, out) in gd.iter_mut().enumerate() {
            *out = (0..d).map(|b| seg.jet.g[(a, b)] * seg.delta[b]).sum();
        }
        for k in 0..d {
            let half_dg = 0.5 * crate::metric::quad(&seg.jet.dg[k], &seg.delta, &seg.delta);
            grad.data[i * d + k] += nf * (-2.0 * gd[k] + half_dg);
            grad.data[j * d + k] += nf * (2.0 * gd[k] + half_dg);
        }
    }
    Ok((nf * s, grad))
}

pub fn energy_gradient(chart: &dyn MetricChart, lp: &DiscreteLoop) -> Result<LoopTangent> {
    energy_and_gradient(chart, lp).map(|(_, g)| g)
}

/// Exact Hessian of the discrete energy in node coordinates (`dN × dN`,
/// index `node * d + k`).
pub fn energy_hessian(chart: &dyn MetricChart, lp: &DiscreteLoop) -> Result<DMatrix<f64>> {
    lp.check_segments(chart, chart.segment_cap())?;
    let n = lp.len();
    let d = lp.dim();
    let nf = n as f64;
    let mut h = DMatrix::zeros(d * n, d * n);
    let mut seg = Segments::new(chart);
    // c[(j, k)] = ∂²e/∂Δ_j∂m_k, s[(k, l)] = ∂²e/∂m_k∂m_l
    let mut c = DMatrix::zeros(d, d);
    let mut s = DMatrix::zeros(d, d);
    for i in 0..n {
        seg.load(lp, i, 2)?;
        let j = (i + 1) % n;
        for k in 0..d {
            for a in 0..d {
                c[(a, k)] = 2.0 * (0..d).map(|b| seg.jet.dg[k][(a, b)] * seg.delta[b]).sum::<f64>();
            }
            for l in 0..d {
                s[(k, l)] = crate::metric::quad(&seg.jet.ddg[k * d + l], &seg.delta, &seg.delta);
            }
        }
        for p in 0..d {
            for q in 0..d {
                let g2 = 2.0 * seg.jet.g[(p, q)];
                let sym = 0.5 * (c[(p, q)] + c[(q, p)]);
                let anti = 0.5 * (c[(q, p)] - c[(p, q)]);
                let ss = 0.25 * s[(p, q)];
                h[(i * d + p, i * d + q)] += nf * (g2 - sym + ss);
                h[(j * d + p, j * d + q)] += nf * (g2 + sym + ss);
                h[(i * d + p, j * d + q)] += nf * (-g2 + anti + ss);
                h[(j * d + q, i * d + p)] += nf * (-g2 + anti + ss);
            }
        }
    }
    Ok(h)
}

/// Discrete length `Σ g(m_i)(Δ_i, Δ_i)^{1/2}`.
pub fn loop_length(chart: &dyn MetricChart, lp: &DiscreteLoop) -> Result<f64> {
    lp.check_segments(chart, chart.segment_cap())?;
    let mut seg = Segments::new(chart);
    let mut s = 0.0;
    for i in 0..lp.len() {
        seg.load(lp, i, 0)?;
        s += seg.sq().max(0.0).sqrt();
    }
    Ok(s)
}

/// Regular `n`-gon of the given chart radius about `center` in the first two coordinates.
pub fn circle_polygon(chart: &dyn MetricChart, center: &[f64], radius: f64, n: usize) -> Result<DiscreteLoop> {
    if chart.dim() < 2 || center.len() != chart.dim() {
        return Err(Error::invalid("circle needs a center in a chart of dimension >= 2"));
    }
    DiscreteLoop::from_fn(chart, n, |t| {
        let mut x = center.to_vec();
        x[0] += radius * (2.0 * PI * t).cos();
        x[1] += radius * (2.0 * PI * t).sin();
        x
    })
}

/// Parallel `s = const` on a surface of revolution, traversed `winding` times.
pub fn parallel_circle(chart: &dyn MetricChart, s: f64, winding: i64, n: usize) -> Result<DiscreteLoop> {
    if chart.period(1).is_none() {
        return Err(Error::invalid("parallels need an angular second coordinate"));
    }
    DiscreteLoop::from_fn(chart, n, |t| vec![s, 2.0 * PI * winding as f64 * t])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::ChartSpec;

    #[test]
    fn polygon_energy_is_chord_arithmetic() {
        let chart = ChartSpec::named("plane").build().unwrap();
        let lp = circle_polygon(chart.as_ref(), &[0.0, 0.0], 1.0, 64).unwrap();
        let e = energy(chart.as_ref(), &lp).unwrap();
        let exact = 4.0 * 64.0f64.powi(2) * (PI / 64.0).sin().powi(2);
        assert!((e - exact).abs() < 1e-11);
        assert!((e - 39.44672).abs() < 1e-5);
    }

    #[test]
    fn winding_is_tracked_across_the_seam() {
        let chart = ChartSpec::named("cylinder").build().unwrap();
        let lp = parallel_circle(chart.as_ref(), 0.3, -2, 64).unwrap();
        assert_eq!(lp.winding_numbers(chart.as_ref()), vec![None, Some(-2)]);
        let lifted = lp.lifted_coords(chart.as_ref());
        assert!((lifted[63 * 2 + 1] - (-2.0 * PI * 63.0 * 2.0 / 64.0)).abs() < 1e-12);
    }

    #[test]
    fn long_segments_are_reported() {
        let chart = ChartSpec::named("plane").build().unwrap();
        let lp = circle_polygon(chart.as_ref(), &[0.0, 0.0], 1.0, 8).unwrap();
        assert!(matches!(
            energy(chart.as_ref(), &lp),
            Err(Error::RefineNeeded { segment: 0, .. })
        ));
    }

    #[test]
    fn csv_and_record_round_trip() {
        let chart = ChartSpec::named("cylinder").build().unwrap();
        let lp = parallel_circle(chart.as_ref(), -0.7, 1, 16).unwrap();
        let back = DiscreteLoop::from_csv(chart.as_ref(), &lp.to_csv()).unwrap();
        assert_eq!(back, lp);
        let rec = lp.to_record(chart.as_ref());
        let json = serde_json::to_string(&rec).unwrap();
        let parsed: LoopRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(DiscreteLoop::from_record(chart.as_ref(), &parsed).unwrap(), lp);
    }
}
