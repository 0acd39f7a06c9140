//! First return to a circle orbit, the rotation number `Theta`, and the
//! orbit integral `Phi` of a rotation form.

use std::f64::consts::TAU;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{integrate_until, Direction, EventSpec, OrbitSegment};
use crate::forms::{line_integral, RotationForm};
use crate::systems::{EMValue, FieldId, IntegrableSystem, PhasePoint, SystemKind, Vec6};
use crate::tolerances::{NumericsConfig, RETURN_CONFIRM_TOL};

#[derive(Debug, Clone)]
pub struct FirstReturnRecord {
    pub base: PhasePoint,
    /// First return time `T > 0`.
    pub t_return: f64,
    pub return_point: PhasePoint,
    /// Rotation number in `[0, 2pi)`.
    pub theta: f64,
    /// `|circle_flow(p, Theta) - p'|`.
    pub closure_residual: f64,
    pub orbit: OrbitSegment,
}

/// Summary of a first return, without the orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReturnSummary {
    pub t_return: f64,
    pub theta: f64,
    pub closure_residual: f64,
    pub max_drift: f64,
}

impl FirstReturnRecord {
    pub fn summary(&self) -> ReturnSummary {
        ReturnSummary {
            t_return: self.t_return,
            theta: self.theta,
            closure_residual: self.closure_residual,
            max_drift: self.orbit.drift.max_dev(),
        }
    }
}

/// Reduce an angle to `[0, 2pi)`; values that round to `2pi` are reported as 0.
pub fn reduce_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Circle-flow time carrying `p` to `q` (both on one circle orbit), in `[0, 2pi)`.
pub fn circle_angle(sys: &IntegrableSystem, p: &Vec6, q: &Vec6) -> f64 {
    let zp = sys.circle_coords(p);
    let zq = sys.circle_coords(q);
    let k = if zp[0].norm() >= zp[1].norm() { 0 } else { 1 };
    let w = zq[k] * zp[k].conj();
    reduce_angle(w.im.atan2(w.re))
}

/// Rate of change of the return invariants along `X_H` at `x`.
fn invariant_rates(sys: &IntegrableSystem, x: &Vec6) -> [f64; 2] {
    let v = sys.field_raw(FieldId::H, x);
    let scale = v.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-300);
    let e = 1e-6 / scale.max(1.0);
    let mut xp = *x;
    let mut xm = *x;
    for i in 0..6 {
        xp[i] += e * v[i];
        xm[i] -= e * v[i];
    }
    let (ip, im) = (sys.return_invariants(&xp), sys.return_invariants(&xm));
    [(ip[0] - im[0]) / (2.0 * e), (ip[1] - im[1]) / (2.0 * e)]
}

pub fn first_return(sys: &IntegrableSystem, p: &PhasePoint, cfg: &NumericsConfig) -> Result<FirstReturnRecord> {
    if sys.kind == SystemKind::FocusFocus {
        return Err(Error::NotCompact(sys.name().to_string()));
    }
    let x0 = p.coords;
    let i0 = sys.return_invariants(&x0);
    let rates = invariant_rates(sys, &x0);
    let lead = if rates[0].abs() >= rates[1].abs() { 0 } else { 1 };
    let other = 1 - lead;
    if rates[lead] == 0.0 {
        return Err(Error::InvalidParameter("base point is a relative equilibrium of X_H".into()));
    }
    let dir = if rates[lead] > 0.0 { Direction::Rising } else { Direction::Falling };
    let (target, second) = (i0[lead], i0[other]);
    let s = *sys;
    let event = EventSpec::root(move |y: &Vec6| s.return_invariants(y)[lead] - target, dir, 2)
        .with_confirm(move |y: &Vec6| {
            (s.return_invariants(y)[other] - second).abs() <= RETURN_CONFIRM_TOL * (1.0 + second.abs())
        });
    let (orbit, t) = integrate_until(sys, FieldId::H, p, &event, &cfg.integrator)?;
    let q = orbit.end_point();
    let theta = circle_angle(sys, &x0, &q.coords);
    let back = sys.circle_flow_raw(&x0, theta);
    let closure_residual = back
        .iter()
        .zip(q.coords.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(FirstReturnRecord { base: *p, t_return: t, return_point: q, theta, closure_residual, orbit })
}

/// First return from the solver's default point on the fiber over `v`.
pub fn first_return_at(sys: &IntegrableSystem, v: EMValue, cfg: &NumericsConfig) -> Result<FirstReturnRecord> {
    let p = sys.fiber_point(v)?;
    first_return(sys, &p, cfg)
}

/// `Phi = int theta` along the first-return segment of `rec`.
pub fn phi_from_record(form: &RotationForm, rec: &FirstReturnRecord, cfg: &NumericsConfig) -> Result<f64> {
    match line_integral(form, &rec.orbit, cfg.quad_tol, cfg.polar_safety) {
        Err(Error::NearPole { .. }) => {
            let v = form.system.f_raw(&rec.base.coords);
            Err(Error::FiberMeetsPolarLocus { h: v.h, j: v.j })
        }
        other => other,
    }
}

pub fn phi_value(sys: &IntegrableSystem, form: &RotationForm, v: EMValue, cfg: &NumericsConfig) -> Result<f64> {
    let rec = first_return_at(sys, v, cfg)?;
    phi_from_record(form, &rec, cfg)
}

/// `(Phi - Theta) mod 2pi`, the integral of the form over the cycle closing the
/// first-return segment with a circle arc.
pub fn theta_phi_defect(sys: &IntegrableSystem, form: &RotationForm, v: EMValue, cfg: &NumericsConfig) -> Result<f64> {
    let rec = first_return_at(sys, v, cfg)?;
    let phi = phi_from_record(form, &rec, cfg)?;
    Ok(reduce_angle(phi - rec.theta))
}
