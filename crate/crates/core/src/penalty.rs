//! Basepoint penalties `f_α(x) = c·max(0, r(x) − R_α)³` and the classification
//! of critical points of the penalized energy `E_α(γ) = E(γ) + f_α(γ(0))`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loops::{energy, DiscreteLoop};
use crate::metric::{christoffels_at, lifted_delta, MetricChart, MetricJet};

/// Radii `R_α = r0 + α·dr` and stiffness `c`; the exponent is fixed at 3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySchedule {
    pub r0: f64,
    pub dr: f64,
    pub stiffness: f64,
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        PenaltySchedule {
            r0: 5.0,
            dr: 1.0,
            stiffness: 1.0,
        }
    }
}

impl PenaltySchedule {
    pub fn new(r0: f64, dr: f64, stiffness: f64) -> Result<Self> {
        let s = PenaltySchedule { r0, dr, stiffness };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.r0.is_finite() || !(self.dr > 0.0) || !(self.stiffness > 0.0) {
            return Err(Error::invalid(
                "penalty schedule needs finite r0, dr > 0 and stiffness > 0",
            ));
        }
        Ok(())
    }

    pub fn radius(&self, alpha: usize) -> f64 {
        self.r0 + alpha as f64 * self.dr
    }

    /// `f_α(x)`; identically zero on compact charts.
    pub fn value(&self, chart: &dyn MetricChart, alpha: usize, x: &[f64]) -> f64 {
        match chart.exhaustion(x) {
            Some(ex) => {
                let t = ex.r - self.radius(alpha);
                if t > 0.0 {
                    self.stiffness * t * t * t
                } else {
                    0.0
                }
            }
            None => 0.0,
        }
    }

    /// Coordinate gradient and Hessian of `f_α` at `x`.
    pub fn coordinate_derivatives(
        &self,
        chart: &dyn MetricChart,
        alpha: usize,
        x: &[f64],
    ) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = chart.dim();
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        let Some(ex) = chart.exhaustion(x) else {
            return (0.0, grad, hess);
        };
        let t = ex.r - self.radius(alpha);
        if t <= 0.0 {
            return (0.0, grad, hess);
        }
        let c = self.stiffness;
        grad.axpy(3.0 * c * t * t, &ex.grad, 0.0);
        hess += &ex.grad * ex.grad.transpose() * (6.0 * c * t) + &ex.hess * (3.0 * c * t * t);
        (c * t * t * t, grad, hess)
    }
}

/// Penalty value with its Riemannian gradient and covariant Hessian.
#[derive(Debug, Clone)]
pub struct PenaltyDerivatives {
    pub value: f64,
    /// `∂_i f`.
    pub differential: DVector<f64>,
    /// `g^{ij} ∂_j f`.
    pub gradient: DVector<f64>,
    /// `∂_i∂_j f` (the Hessian of `f` as a function of coordinates).
    pub coordinate_hessian: DMatrix<f64>,
    /// `∇²f = ∂_i∂_j f − Γ^k_ij ∂_k f`.
    pub hessian: DMatrix<f64>,
}

pub fn penalty_gradient_and_hessian(
    chart: &dyn MetricChart,
    schedule: &PenaltySchedule,
    alpha: usize,
    x: &[f64],
) -> Result<PenaltyDerivatives> {
    chart.check_domain(x)?;
    let d = chart.dim();
    let (value, differential, coordinate_hessian) = schedule.coordinate_derivatives(chart, alpha, x);
    let mut jet = MetricJet::new(d);
    chart.eval(x, 1, &mut jet);
    let ginv = jet
        .g
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::invalid("singular metric"))?;
    let gradient = &ginv * &differential;
    let gam = christoffels_at(chart, x);
    let mut hessian = coordinate_hessian.clone();
    for i in 0..d {
        for j in 0..d {
            hessian[(i, j)] -= (0..d).map(|k| gam.get(k, i, j) * differential[k]).sum::<f64>();
        }
    }
    Ok(PenaltyDerivatives {
        value,
        differential,
        gradient,
        coordinate_hessian,
        hessian,
    })
}

/// `E(γ) + f_α(γ(0))`.
pub fn penalized_energy(
    chart: &dyn MetricChart,
    schedule: &PenaltySchedule,
    alpha: usize,
    lp: &DiscreteLoop,
) -> Result<f64> {
    Ok(energy(chart, lp)? + schedule.value(chart, alpha, lp.basepoint()))
}

/// Corner defect at the basepoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CornerResidual {
    /// `v(1⁻) − v(0⁺) + ½ grad f_α`, in basepoint chart components.
    pub residual: Vec<f64>,
    /// g-norm of the residual.
    pub norm: f64,
    /// g-norms of the incoming and outgoing velocities.
    pub speed_in: f64,
    pub speed_out: f64,
}

/// Discrete corner condition at node 0.
///
/// Critical points of `E_α` are geodesics on `(0, 1)` whose velocities at the
/// basepoint satisfy `v(1⁻) − v(0⁺) = −½ grad f_α(γ(0))` (the factor ½ comes
/// from `E = ∫|γ̇|²`). One-sided velocities are estimated from adjacent nodes
/// with a second-order Christoffel correction.
pub fn corner_residual(
    chart: &dyn MetricChart,
    schedule: &PenaltySchedule,
    alpha: usize,
    lp: &DiscreteLoop,
) -> Result<CornerResidual> {
    let n = lp.len();
    let d = lp.dim();
    let nf = n as f64;
    let x0 = lp.basepoint();
    let periods = chart.periods();
    let mut w_out = vec![0.0; d];
    let mut w_in = vec![0.0; d];
    lifted_delta(&periods, x0, lp.node(1), &mut w_out);
    lifted_delta(&periods, lp.node(n - 1), x0, &mut w_in);
    w_out.iter_mut().chain(w_in.iter_mut()).for_each(|c| *c *= nf);
    let gam = christoffels_at(chart, x0);
    let mut c_out = vec![0.0; d];
    let mut c_in = vec![0.0; d];
    gam.contract(&w_out, &w_out, &mut c_out);
    gam.contract(&w_in, &w_in, &mut c_in);
    let v_out: Vec<f64> = (0..d).map(|k| w_out[k] + c_out[k] / (2.0 * nf)).collect();
    let v_in: Vec<f64> = (0..d).map(|k| w_in[k] - c_in[k] / (2.0 * nf)).collect();
    let pd = penalty_gradient_and_hessian(chart, schedule, alpha, x0)?;
    let residual: Vec<f64> = (0..d).map(|k| v_in[k] - v_out[k] + 0.5 * pd.gradient[k]).collect();
    let mut jet = MetricJet::new(d);
    chart.eval(x0, 0, &mut jet);
    Ok(CornerResidual {
        norm: jet.inner(&residual, &residual).max(0.0).sqrt(),
        speed_in: jet.inner(&v_in, &v_in).max(0.0).sqrt(),
        speed_out: jet.inner(&v_out, &v_out).max(0.0).sqrt(),
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalCase {
    Genuine,
    PenaltySupported,
}

/// Radius of the compact set `K_ℓ = {r ≤ radius}` supplied by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KReport {
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Containment {
    pub k_radius: f64,
    /// `R_α − radius(K_ℓ) > ℓ`: every support point is farther than ℓ from `K_ℓ`.
    pub separated: bool,
    pub min_node_r: f64,
    /// Only meaningful when `separated`; `None` otherwise.
    pub contained: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Classification {
    pub case: CriticalCase,
    pub basepoint_r: Option<f64>,
    pub penalty: f64,
    pub penalized_energy: f64,
    pub below_level: bool,
    pub containment: Option<Containment>,
}

/// Genuine iff the basepoint lies off the penalty support.
///
/// For penalty-supported points with a `K_ℓ` report, the separation condition
/// is checked through the 1-Lipschitz exhaustion (`d(x, y) ≥ r(x) − r(y)`),
/// and when it holds every node is required to lie outside `K_ℓ`.
pub fn classify_critical_point(
    chart: &dyn MetricChart,
    schedule: &PenaltySchedule,
    alpha: usize,
    lp: &DiscreteLoop,
    ell: f64,
    k_report: Option<KReport>,
) -> Result<Classification> {
    let x0 = lp.basepoint();
    let penalty = schedule.value(chart, alpha, x0);
    let e_alpha = energy(chart, lp)? + penalty;
    let basepoint_r = chart.exhaustion(x0).map(|ex| ex.r);
    let case = match basepoint_r {
        Some(r) if r > schedule.radius(alpha) => CriticalCase::PenaltySupported,
        _ => CriticalCase::Genuine,
    };
    let containment = match (case, k_report) {
        (CriticalCase::PenaltySupported, Some(k)) => {
            let separated = schedule.radius(alpha) - k.radius > ell;
            let min_node_r = (0..lp.len())
                .filter_map(|i| chart.exhaustion(lp.node(i)).map(|ex| ex.r))
                .fold(f64::INFINITY, f64::min);
            Some(Containment {
                k_radius: k.radius,
                separated,
                min_node_r,
                contained: separated.then_some(min_node_r > k.radius),
            })
        }
        _ => None,
    };
    Ok(Classification {
        case,
        basepoint_r,
        penalty,
        penalized_energy: e_alpha,
        below_level: e_alpha < ell * ell,
        containment,
    })
}
