//! Second variation of the penalized energy at discrete critical loops, Morse
//! index and nullity by eigenvalue inertia, and the cross-checks tying them
//! to conjugate points and the monodromy.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jacobi::{
    conjugate_points_on, loop_monodromy, loop_start, nullity_of_iterate, orthonormal_frame, ConjugateReport, Interval,
    DEFAULT_STEPS, RANK_THRESHOLD,
};
use crate::loops::{energy_hessian, DiscreteLoop};
use crate::metric::{christoffels_at, lifted_delta, riemann_at, MetricChart, MetricJet};
use crate::penalty::{
    classify_critical_point, corner_residual, penalty_gradient_and_hessian, Classification, CriticalCase,
    PenaltySchedule,
};
use crate::variational::{Penalized, Preconditioner};

/// Gradient norm above which a loop is reported as not critical.
pub const CRITICAL_TOLERANCE: f64 = 1e-6;
/// Zero band as a multiple of `ρ/n²` (`ρ` the spectral radius, `n` nodes).
pub const ZERO_BAND_FACTOR: f64 = 1e-2;
/// Slack on the average index in the iteration inequalities.
pub const AVERAGE_INDEX_SLACK: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Assembly {
    /// Analytic Hessian of the discrete penalized energy in node coordinates.
    #[default]
    ExactDiscrete,
    /// Quadrature of `2∫[|∇ξ|² − g(R(ξ,γ̇)γ̇,ξ)] + ∇²f(ξ(0),ξ(0))` in a
    /// discretely parallel orthonormal frame.
    ContinuumQuadrature,
}

#[derive(Debug, Clone)]
pub struct SecondVariation {
    /// Symmetric `dN × dN`, index `node * d + k`.
    pub matrix: DMatrix<f64>,
    pub alpha: usize,
    pub method: Assembly,
    pub nodes: usize,
    pub dim: usize,
    /// Preconditioned gradient norm of the loop.
    pub gradient_norm: f64,
    /// False when the loop is not a converged critical point; the spectrum is
    /// still computed but its counts are not trustworthy.
    pub critical: bool,
}

pub fn assemble_second_variation(
    chart: &dyn MetricChart,
    schedule: &PenaltySchedule,
    alpha: usize,
    lp: &DiscreteLoop,
    method: Assembly,
) -> Result<SecondVariation> {
    let gradient_norm = Penalized::new(chart, schedule, alpha).gradient_norm(lp, Preconditioner::PeriodicLaplacian)?;
    let mut matrix = match method {
        Assembly::ExactDiscrete => exact_discrete(chart, schedule, alpha, lp)?,
        Assembly::ContinuumQuadrature => continuum_quadrature(chart, schedule, alpha, lp)?,
    };
    let sym = (&matrix + matrix.transpose()) * 0.5;
    matrix.copy_from(&sym);
    Ok(SecondVariation {
        matrix,
        alpha,
        method,
        nodes: lp.len(),
        dim: lp.dim(),
        gradient_norm,
        critical: gradient_norm < CRITICAL_TOLERANCE,
    })
}

fn exact_discrete(
    chart: &dyn MetricChart,
    schedule: &PenaltySchedule,
    alpha: usize,
    lp: &DiscreteLoop,
) -> Result<DMatrix<f64>> {
    let d = lp.dim();
    let mut h = energy_hessian(chart, lp)?;
    let (_, _, ph) = schedule.coordinate_derivatives(chart, alpha, lp.basepoint());
    let mut block = h.view_mut((0, 0), (d, d));
    block += ph;
    Ok(h)
}

/// Löwdin orthonormalisation `E (EᵀgE)^{-1/2}`, which keeps `E` as close to
/// its input as possible.
fn lowdin(e: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    let gram = e.transpose() * g * e;
    let eig = gram.symmetric_eigen();
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.max(1e-300).sqrt()));
    e * (&eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose())
}

/// Node frames transported along the polygon and the holonomy
/// `Q = E_0ᵀ g E_N` of the transported frame back at the basepoint.
fn parallel_frames(chart: &dyn MetricChart, lp: &DiscreteLoop) -> Result<(Vec<DMatrix<f64>>, DMatrix<f64>)> {
    let n = lp.len();
    let d = lp.dim();
    let periods = chart.periods();
    let mut jet = MetricJet::new(d);
    let x0 = lp.basepoint();
    chart.eval(x0, 0, &mut jet);
    let g0 = jet.g.clone();
    let mut lead = vec![0.0; d];
    lifted_delta(&periods, x0, lp.node(1), &mut lead);
    let mut frames = vec![orthonormal_frame(&g0, Some(&lead))];
    let mut delta = vec![0.0; d];
    let mut mid = vec![0.0; d];
    let mut col = vec![0.0; d];
    let mut out = vec![0.0; d];
    for i in 0..n {
        let a = lp.node(i);
        let b = lp.node((i + 1) % n);
        lifted_delta(&periods, a, b, &mut delta);
        for k in 0..d {
            mid[k] = a[k] + 0.5 * delta[k];
        }
        chart.check_domain(&mid)?;
        let gam = christoffels_at(chart, &mid);
        let e = frames.last().expect("frames is nonempty");
        let mut next = e.clone();
        for c in 0..d {
            for k in 0..d {
                col[k] = e[(k, c)];
            }
            gam.contract(&delta, &col, &mut out);
            for k in 0..d {
                next[(k, c)] -= out[k];
            }
        }
        chart.eval(b, 0, &mut jet);
        frames.push(lowdin(&next, &jet.g));
    }
    let last = frames.pop().expect("frames has n + 1 entries");
    let q = frames[0].transpose() * &g0 * &last;
    Ok((frames, q))
}

fn continuum_quadrature(
    chart: &dyn MetricChart,
    schedule: &PenaltySchedule,
    alpha: usize,
    lp: &DiscreteLoop,
) -> Result<DMatrix<f64>> {
    let n = lp.len();
    let d = lp.dim();
    let nf = n as f64;
    let periods = chart.periods();
    let (frames, q) = parallel_frames(chart, lp)?;
    let mut h = DMatrix::zeros(d * n, d * n);
    // Kinetic term 2N Σ |W y_{i+1} − y_i|², where W = I except on the wrap,
    // where the transported frame returns rotated and y_N = Qᵀ y_0.
    for i in 0..n {
        let j = (i + 1) % n;
        let w = if j == 0 { q.transpose() } else { DMatrix::identity(d, d) };
        let c = 2.0 * nf;
        let wtw = w.transpose() * &w;
        for p in 0..d {
            for r in 0..d {
                let id = if p == r { 1.0 } else { 0.0 };
                h[(i * d + p, i * d + r)] += c * id;
                h[(j * d + p, j * d + r)] += c * wtw[(p, r)];
                h[(i * d + p, j * d + r)] -= c * w[(p, r)];
                h[(j * d + r, i * d + p)] -= c * w[(p, r)];
            }
        }
    }
    // Curvature term −(2/N) Σ yᵀ S y with S_ab = g(R(e_b, v)v, e_a).
    let mut jet = MetricJet::new(d);
    let mut rjet = MetricJet::new(d);
    let mut fwd = vec![0.0; d];
    let mut bwd = vec![0.0; d];
    let mut w = vec![0.0; d];
    for (i, e) in frames.iter().enumerate() {
        let x = lp.node(i);
        lifted_delta(&periods, x, lp.node((i + 1) % n), &mut fwd);
        lifted_delta(&periods, lp.node((i + n - 1) % n), x, &mut bwd);
        let v: Vec<f64> = (0..d).map(|k| 0.5 * nf * (fwd[k] + bwd[k])).collect();
        chart.eval(x, 0, &mut jet);
        let rm = riemann_at(chart, x, &mut rjet);
        for b in 0..d {
            let eb: Vec<f64> = e.column(b).iter().copied().collect();
            rm.apply(&eb, &v, &v, &mut w);
            for a in 0..d {
                let ea: Vec<f64> = e.column(a).iter().copied().collect();
                h[(i * d + a, i * d + b)] -= 2.0 / nf * jet.inner(&ea, &w);
            }
        }
    }
    let pd = penalty_gradient_and_hessian(chart, schedule, alpha, lp.basepoint())?;
    let hf = frames[0].transpose() * &pd.hessian * &frames[0];
    let mut block = h.view_mut((0, 0), (d, d));
    block += hf;
    Ok(h)
}

/// Mesh-scaled zero band `ZERO_BAND_FACTOR · ρ / n²`.
///
/// Smooth modes of the discrete second variation have eigenvalues of order
/// `1/n` and the spectral radius grows like `n`, so the band sits between the
/// two levels; discretisation errors of nominal kernel vectors are several
/// orders smaller still.
pub fn default_zero_band(spectral_radius: f64, nodes: usize) -> f64 {
    ZERO_BAND_FACTOR * spectral_radius / (nodes as f64).powi(2)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Inertia {
    pub index: usize,
    pub nullity: usize,
    pub positive: usize,
    pub zero_band: f64,
    /// Some eigenvalue lies within a factor 10 of the band edge.
    pub ambiguous: bool,
    /// The three eigenvalues closest to the band edges.
    pub near_band: Vec<f64>,
    /// Sorted ascending.
    pub eigenvalues: Vec<f64>,
}

/// Sorted eigenvalues of a symmetric matrix.
pub fn spectrum(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Inertia of a sorted spectrum; `zero_band = None` uses the default band.
pub fn inertia(eigenvalues: Vec<f64>, nodes: usize, zero_band: Option<f64>) -> Result<Inertia> {
    let rho = eigenvalues.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let band = zero_band.unwrap_or_else(|| default_zero_band(rho, nodes));
    if !(band > 0.0) {
        return Err(Error::invalid("zero band must be positive"));
    }
    let index = eigenvalues.iter().filter(|&&e| e < -band).count();
    let nullity = eigenvalues.iter().filter(|&&e| e.abs() <= band).count();
    let positive = eigenvalues.len() - index - nullity;
    let edge_distance = |e: f64| (e.abs().max(1e-300).ln() - band.ln()).abs();
    let ambiguous = eigenvalues.iter().any(|&e| edge_distance(e) < 10f64.ln());
    let mut near: Vec<f64> = eigenvalues.clone();
    near.sort_by(|a, b| edge_distance(*a).total_cmp(&edge_distance(*b)));
    near.truncate(3);
    Ok(Inertia {
        index,
        nullity,
        positive,
        zero_band: band,
        ambiguous,
        near_band: near,
        eigenvalues,
    })
}

/// `(index, nullity)` of a second variation.
pub fn index_and_nullity(sv: &SecondVariation, zero_band: Option<f64>) -> Result<(usize, usize)> {
    let i = inertia(spectrum(&sv.matrix), sv.nodes, zero_band)?;
    Ok((i.index, i.nullity))
}

/// Velocity estimate used for conjugate counts: one-sided at corners.
fn start_for(chart: &dyn MetricChart, lp: &DiscreteLoop, case: CriticalCase) -> Result<crate::TangentVector> {
    loop_start(chart, lp, case == CriticalCase::PenaltySupported)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasedIndexReport {
    /// Negative count of the second variation with node 0 pinned.
    pub dirichlet_index: usize,
    pub zero_band: f64,
    pub conjugate: ConjugateReport,
    pub agree: bool,
}

/// Dirichlet index against the number of conjugate points in `(0, 1)`; a
/// mismatch is an error.
pub fn based_index_cross_check(
    chart: &dyn MetricChart,
    schedule: &PenaltySchedule,
    alpha: usize,
    lp: &DiscreteLoop,
    case: CriticalCase,
) -> Result<BasedIndexReport> {
    let report = based_index_report(chart, schedule, alpha, lp, case)?;
    if !report.agree {
        return Err(Error::OracleMismatch(format!(
            "Dirichlet index {} but {} conjugate points in (0, 1)",
            report.dirichlet_index, report.conjugate.total
        )));
    }
    Ok(report)
}

fn based_index_report(
    chart: &dyn MetricChart,
    schedule: &PenaltySchedule,
    alpha: usize,
    lp: &DiscreteLoop,
    case: CriticalCase,
) -> Result<BasedIndexReport> {
    let d = lp.dim();
    let sv = assemble_second_variation(chart, schedule, alpha, lp, Assembly::ExactDiscrete)?;
    let n = sv.matrix.nrows();
    let pinned = sv.matrix.view((d, d), (n - d, n - d)).into_owned();
    let full_rho = spectrum(&sv.matrix).iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let band = default_zero_band(full_rho, lp.len());
    let inert = inertia(spectrum(&pinned), lp.len(), Some(band))?;
    let start = start_for(chart, lp, case)?;
    let conjugate = conjugate_points_on(chart, &start, 1.0, DEFAULT_STEPS, Interval::Open)?;
    Ok(BasedIndexReport {
        dirichlet_index: inert.index,
        zero_band: band,
        agree: inert.index == conjugate.total,
        conjugate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexBoundReport {
    pub cp1: usize,
    pub index: usize,
    pub nullity: usize,
    pub dim: usize,
    pub verdict: Verdict,
}

/// When the loop geodesic has no conjugate points on `(0, 1]`, index plus
/// nullity may not exceed the dimension.
pub fn index_bound_check(
    chart: &dyn MetricChart,
    schedule: &PenaltySchedule,
    alpha: usize,
    lp: &DiscreteLoop,
    case: CriticalCase,
) -> Result<IndexBoundReport> {
    let sv = assemble_second_variation(chart, schedule, alpha, lp, Assembly::ExactDiscrete)?;
    let (index, nullity) = index_and_nullity(&sv, None)?;
    let start = start_for(chart, lp, case)?;
    let cp1 = conjugate_points_on(chart, &start, 1.0, DEFAULT_STEPS, Interval::Closed)?.total;
    Ok(index_bound_verdict(cp1, index, nullity, lp.dim()))
}

pub fn index_bound_verdict(cp1: usize, index: usize, nullity: usize, dim: usize) -> IndexBoundReport {
    let verdict = if cp1 > 0 {
        Verdict::NotApplicable
    } else if index + nullity <= dim {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    IndexBoundReport {
        cp1,
        index,
        nullity,
        dim,
        verdict,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BottRow {
    pub m: usize,
    pub index: usize,
    pub nullity: usize,
    pub monodromy_nullity: usize,
    pub ambiguous: bool,
    /// `m ī − d ≤ ind` with `ī` relaxed by the slack.
    pub left_holds: bool,
    /// `ind ≤ m ī + d − nul` with `ī` relaxed by the slack.
    pub right_holds: bool,
    /// `m ī + d − nul − ind` at the least-squares `ī`.
    pub right_gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BottTable {
    pub rows: Vec<BottRow>,
    /// `ind(γ^{m_max}) / m_max`.
    pub average_index_last: f64,
    /// Least-squares slope of `ind` against `m`.
    pub average_index: f64,
    pub slack: f64,
    pub holds: bool,
    /// Iterates grouped by equal nullity, in increasing `m`.
    pub nullity_partition: Vec<(usize, Vec<usize>)>,
    pub index_non_decreasing: bool,
}

/// Least-squares slope through `(m, y)`.
fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mx, my) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return points.first().map_or(0.0, |(x, y)| y / x);
    }
    points.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx
}

/// Iteration inequalities for `γ^m`, `m = 1..=m_max`, on the `mN`-node
/// iterates. Spectral and monodromy nullities must agree.
pub fn bott_check(chart: &dyn MetricChart, lp: &DiscreteLoop, m_max: usize) -> Result<BottTable> {
    if m_max == 0 {
        return Err(Error::invalid("m_max must be at least 1"));
    }
    let d = lp.dim();
    let mono = loop_monodromy(chart, lp, DEFAULT_STEPS)?;
    // Bott's inequalities concern the unpenalized energy.
    let free = PenaltySchedule {
        r0: f64::MAX,
        dr: 1.0,
        stiffness: 1.0,
    };
    let counts: Vec<Result<(usize, usize, bool)>> = (1..=m_max)
        .into_par_iter()
        .map(|m| {
            let it = lp.iterate(m)?;
            let sv = assemble_second_variation(chart, &free, 0, &it, Assembly::ExactDiscrete)?;
            let inert = inertia(spectrum(&sv.matrix), it.len(), None)?;
            Ok((inert.index, inert.nullity, inert.ambiguous))
        })
        .collect();
    let mut raw = Vec::with_capacity(m_max);
    for (k, c) in counts.into_iter().enumerate() {
        let (index, nullity, ambiguous) = c?;
        let m = k + 1;
        let monodromy_nullity = nullity_of_iterate(&mono.balanced, m, RANK_THRESHOLD);
        if monodromy_nullity != nullity {
            return Err(Error::OracleMismatch(format!(
                "iterate {m}: spectral nullity {nullity}, monodromy nullity {monodromy_nullity}"
            )));
        }
        raw.push((m, index, nullity, monodromy_nullity, ambiguous));
    }
    let pts: Vec<(f64, f64)> = raw.iter().map(|&(m, i, ..)| (m as f64, i as f64)).collect();
    let ibar = slope(&pts);
    let last = raw.last().map_or(0.0, |&(m, i, ..)| i as f64 / m as f64);
    let s = AVERAGE_INDEX_SLACK;
    let df = d as f64;
    let rows: Vec<BottRow> = raw
        .iter()
        .map(|&(m, index, nullity, monodromy_nullity, ambiguous)| {
            let mf = m as f64;
            let i = index as f64;
            BottRow {
                m,
                index,
                nullity,
                monodromy_nullity,
                ambiguous,
                left_holds: mf * (ibar - s) - df <= i,
                right_holds: i <= mf * (ibar + s) + df - nullity as f64,
                right_gap: mf * ibar + df - nullity as f64 - i,
            }
        })
        .collect();
    let mut partition: Vec<(usize, Vec<usize>)> = Vec::new();
    for r in &rows {
        match partition.iter_mut().find(|(n, _)| *n == r.nullity) {
            Some((_, ms)) => ms.push(r.m),
            None => partition.push((r.nullity, vec![r.m])),
        }
    }
    Ok(BottTable {
        holds: rows.iter().all(|r| r.left_holds && r.right_holds),
        index_non_decreasing: rows.windows(2).all(|w| w[0].index <= w[1].index),
        rows,
        average_index_last: last,
        average_index: ibar,
        slack: s,
        nullity_partition: partition,
    })
}

/// Options for [`analyze_critical_loop`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisOptions {
    pub method: Assembly,
    /// `None` selects the mesh-scaled default.
    pub zero_band: Option<f64>,
    /// Length bound used for the containment test of the classification.
    pub ell: f64,
    pub k_radius: Option<f64>,
    /// Largest iterate of the Bott table; 0 disables it.
    pub m_max: usize,
    /// Also assemble the other method and compare counts.
    pub cross_method: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            method: Assembly::ExactDiscrete,
            zero_band: None,
            ell: 10.0,
            k_radius: None,
            m_max: 4,
            cross_method: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodCounts {
    pub method: Assembly,
    pub index: usize,
    pub nullity: usize,
    pub ambiguous: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralReport {
    pub method: Assembly,
    pub nodes: usize,
    pub alpha: usize,
    pub gradient_norm: f64,
    pub critical: bool,
    pub inertia: Inertia,
    pub classification: Classification,
    pub corner_residual: f64,
    pub cp1: usize,
    pub conjugate_times: Vec<f64>,
    /// Monodromy nullity of the loop; absent for cornered loops.
    pub monodromy_nullity: Option<usize>,
    pub based: BasedIndexReport,
    pub index_bound: IndexBoundReport,
    pub cross_method: Option<MethodCounts>,
    pub bott: Option<BottTable>,
}

/// Full spectral analysis of a converged critical point of `E_α`.
///
/// Hard cross-check failures (based index against conjugate count, spectral
/// against monodromy nullity) are returned as errors.
pub fn analyze_critical_loop(
    chart: &dyn MetricChart,
    schedule: &PenaltySchedule,
    alpha: usize,
    lp: &DiscreteLoop,
    opts: &AnalysisOptions,
) -> Result<SpectralReport> {
    let classification = classify_critical_point(
        chart,
        schedule,
        alpha,
        lp,
        opts.ell,
        opts.k_radius.map(|radius| crate::penalty::KReport { radius }),
    )?;
    let case = classification.case;
    let sv = assemble_second_variation(chart, schedule, alpha, lp, opts.method)?;
    let inert = inertia(spectrum(&sv.matrix), lp.len(), opts.zero_band)?;
    let start = start_for(chart, lp, case)?;
    let conj = conjugate_points_on(chart, &start, 1.0, DEFAULT_STEPS, Interval::Closed)?;
    let cp1 = conj.total;
    let monodromy_nullity = match case {
        CriticalCase::Genuine => {
            let mono = loop_monodromy(chart, lp, DEFAULT_STEPS)?;
            let nul = nullity_of_iterate(&mono.balanced, 1, RANK_THRESHOLD);
            if sv.critical && nul != inert.nullity {
                return Err(Error::OracleMismatch(format!(
                    "spectral nullity {} but monodromy nullity {nul}",
                    inert.nullity
                )));
            }
            Some(nul)
        }
        CriticalCase::PenaltySupported => None,
    };
    let based = based_index_report(chart, schedule, alpha, lp, case)?;
    if sv.critical && !based.agree {
        return Err(Error::OracleMismatch(format!(
            "Dirichlet index {} but {} conjugate points in (0, 1)",
            based.dirichlet_index, based.conjugate.total
        )));
    }
    let cross_method = if opts.cross_method {
        let other = match opts.method {
            Assembly::ExactDiscrete => Assembly::ContinuumQuadrature,
            Assembly::ContinuumQuadrature => Assembly::ExactDiscrete,
        };
        let sv2 = assemble_second_variation(chart, schedule, alpha, lp, other)?;
        let i2 = inertia(spectrum(&sv2.matrix), lp.len(), opts.zero_band)?;
        Some(MethodCounts {
            method: other,
            index: i2.index,
            nullity: i2.nullity,
            ambiguous: i2.ambiguous,
        })
    } else {
        None
    };
    let bott = if opts.m_max > 0 && case == CriticalCase::Genuine && sv.critical {
        Some(bott_check(chart, lp, opts.m_max)?)
    } else {
        None
    };
    let corner = corner_residual(chart, schedule, alpha, lp)?.norm;
    Ok(SpectralReport {
        method: opts.method,
        nodes: lp.len(),
        alpha,
        gradient_norm: sv.gradient_norm,
        critical: sv.critical,
        index_bound: index_bound_verdict(cp1, inert.index, inert.nullity, lp.dim()),
        inertia: inert,
        classification,
        corner_residual: corner,
        cp1,
        conjugate_times: conj.points.iter().map(|p| p.time).collect(),
        monodromy_nullity,
        based,
        cross_method,
        bott,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_line() {
        let pts: Vec<(f64, f64)> = (1..=6).map(|m| (m as f64, 2.0 * m as f64 - 1.0)).collect();
        assert!((slope(&pts) - 2.0).abs() < 1e-14);
        assert_eq!(slope(&[(1.0, 3.0)]), 3.0);
    }

    #[test]
    fn verdicts() {
        assert_eq!(index_bound_verdict(0, 0, 2, 2).verdict, Verdict::Pass);
        assert_eq!(index_bound_verdict(0, 1, 2, 2).verdict, Verdict::Fail);
        assert_eq!(index_bound_verdict(2, 1, 3, 2).verdict, Verdict::NotApplicable);
    }

    #[test]
    fn inertia_counts_partition_the_spectrum() {
        let i = inertia(vec![-2.0, -1e-9, 0.0, 1e-9, 3.0], 4, Some(1e-6)).unwrap();
        assert_eq!((i.index, i.nullity, i.positive), (1, 3, 1));
        assert!(!i.ambiguous);
        let j = inertia(vec![-2.0, 5e-6, 3.0], 4, Some(1e-6)).unwrap();
        assert!(j.ambiguous);
    }
}
