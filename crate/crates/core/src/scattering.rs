//! Noncompact monodromy of the focus-focus normal form: truncation sections
//! `sigma_{+-m}`, the truncated integrals `Phi_m` and the identification angle `Theta_m`.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{integrate_until, Direction, EventSpec, OrbitSegment};
use crate::forms::{line_integral, FormKind, RotationForm};
use crate::monodromy::{k_from_variation, sample_series, Jump, LoopFunctions, LoopPath, SamplePoint};
use crate::rotation::{circle_angle, reduce_angle};
use crate::systems::{EMValue, FieldId, IntegrableSystem, PhasePoint, SystemKind, Vec6};
use crate::tolerances::NumericsConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Plus,
    Minus,
}

fn ff() -> IntegrableSystem {
    IntegrableSystem::new(SystemKind::FocusFocus)
}

/// The section `sigma_{+-m}(v)`; for `m >> |v|` close to `(sqrt m, 0, 0, -+sqrt m)`.
pub fn sigma_pm(m: f64, v: EMValue, side: Side) -> Result<PhasePoint> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::InvalidParameter(format!("m must be positive, got {m}")));
    }
    let (h, j) = (v.h, v.j);
    let r = (j * j + h * h + m * m).sqrt();
    let q1 = (r + j).sqrt();
    let c = ((r - j) / (h * h + m * m)).sqrt();
    let im = match side {
        Side::Plus => -m,
        Side::Minus => m,
    };
    Ok(PhasePoint::new(SystemKind::FocusFocus, &[q1, 0.0, c * h, c * im]))
}

#[derive(Debug, Clone)]
pub struct ScatteringNumbers {
    pub m: f64,
    pub v: EMValue,
    pub phi: Option<f64>,
    pub theta: f64,
    /// `|phi_J^{Theta_m}(sigma_{+m}) - p'|` where `p'` is the orbit endpoint.
    pub closure_residual: f64,
    pub orbit: OrbitSegment,
}

/// `Phi_m` and `Theta_m` at `v`: the `X_H` orbit from `sigma_{-m}(v)` to the level
/// `q1^2 + p1^2 = R + j` of `sigma_{+m}(v)`, and the circle angle from
/// `sigma_{+m}(v)` to its endpoint. `phi` is `None` when the orbit passes the polar locus.
pub fn scattering_numbers(form: &RotationForm, v: EMValue, m: f64, cfg: &NumericsConfig) -> Result<ScatteringNumbers> {
    if form.system.kind != SystemKind::FocusFocus {
        return Err(Error::InvalidParameter("scattering needs the focus-focus system".into()));
    }
    if v.h == 0.0 && v.j == 0.0 {
        return Err(Error::CriticalValue { h: 0.0, j: 0.0 });
    }
    let sys = ff();
    let start = sigma_pm(m, v, Side::Minus)?;
    let target = sigma_pm(m, v, Side::Plus)?;
    let l1 = target.coords[0] * target.coords[0] + target.coords[1] * target.coords[1];
    let l2 = target.coords[2] * target.coords[2] + target.coords[3] * target.coords[3];
    let event = EventSpec::root(move |y: &Vec6| y[0] * y[0] + y[1] * y[1] - l1, Direction::Rising, 1)
        .with_confirm(move |y: &Vec6| (y[2] * y[2] + y[3] * y[3] - l2).abs() <= 1e-6 * (1.0 + l2));
    // near v = 0 the orbit hugs the stable manifold and may exhaust max_time
    let (orbit, _) = integrate_until(&sys, FieldId::H, &start, &event, &cfg.integrator)?;
    let end = orbit.end_point();
    let theta = circle_angle(&sys, &target.coords, &end.coords);
    let back = sys.circle_flow_raw(&target.coords, theta);
    let closure_residual = back.iter().zip(end.coords.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let phi = match line_integral(form, &orbit, cfg.quad_tol, cfg.polar_safety) {
        Ok(x) => Some(x),
        Err(Error::NearPole { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(ScatteringNumbers { m, v, phi, theta, closure_residual, orbit })
}

/// `Theta_s(v) = arg(j + ih)` in `[0, 2pi)`.
pub fn theta_s(v: EMValue) -> f64 {
    reduce_angle(v.h.atan2(v.j))
}

struct MFunctions<'a> {
    form: RotationForm,
    path: &'a LoopPath,
    m: f64,
    cfg: NumericsConfig,
}

impl LoopFunctions for MFunctions<'_> {
    fn loop_path(&self) -> &LoopPath {
        self.path
    }
    fn eval(&self, s: f64) -> Result<SamplePoint> {
        let v = self.path.at(s);
        let r = scattering_numbers(&self.form, v, self.m, &self.cfg)?;
        Ok(SamplePoint { s, h: v.h, j: v.j, theta: Some(r.theta), phi: r.phi, max_drift: r.orbit.drift.max_dev() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringConfig {
    pub m_values: Vec<f64>,
    #[serde(rename = "loop")]
    pub path: LoopPath,
    pub form: FormKind,
    pub convergence_tol: f64,
    /// Values where `Theta_m` is compared with `Theta_s`.
    pub probes: Vec<EMValue>,
    pub samples: usize,
}

impl ScatteringConfig {
    /// The ladder `{2, 4, 8, 16}` on the circle of radius `radius` about the origin,
    /// with eight probes on a circle of radius 0.01.
    pub fn ladder(radius: f64) -> Result<Self> {
        Ok(Self {
            m_values: vec![2.0, 4.0, 8.0, 16.0],
            path: LoopPath::circle(EMValue::new(0.0, 0.0), radius)?,
            form: FormKind::Standard,
            convergence_tol: 1e-3,
            probes: default_probes(0.01, 8),
            samples: crate::tolerances::DEFAULT_SAMPLES,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_values.is_empty() {
            return Err(Error::InvalidParameter("m_values is empty".into()));
        }
        if self.m_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("m_values must be strictly increasing".into()));
        }
        let vmax = self.path.max_norm().max(self.probes.iter().map(|p| p.h.hypot(p.j)).fold(0.0, f64::max));
        if self.m_values[0] <= vmax {
            return Err(Error::InvalidParameter(format!(
                "every m must exceed the largest |v| on the loop and probes ({vmax})"
            )));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidParameter("convergence_tol must be positive".into()));
        }
        if self.probes.iter().any(|p| p.h == 0.0 && p.j == 0.0) {
            return Err(Error::InvalidParameter("probe at the critical value (0, 0)".into()));
        }
        Ok(())
    }
}

/// `count` values on the circle of radius `rho`, at angles `(i + 1/2) 2pi / count`.
pub fn default_probes(rho: f64, count: usize) -> Vec<EMValue> {
    (0..count)
        .map(|i| {
            let a = (i as f64 + 0.5) * TAU / count as f64;
            EMValue::new(rho * a.sin(), rho * a.cos())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderRung {
    pub m: f64,
    pub var_phi: f64,
    pub var_theta: f64,
    pub k: i64,
    pub integerness: f64,
    pub phi_jumps: Vec<Jump>,
    pub theta_jumps: Vec<Jump>,
    pub max_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRow {
    pub v: EMValue,
    pub theta_s: f64,
    /// `Theta_m` per ladder entry.
    pub theta_m: Vec<f64>,
    pub phi_m: Vec<Option<f64>>,
    /// Last ladder value and the bound `|Theta_last - Theta_prev|`.
    pub theta_limit: f64,
    pub theta_bound: f64,
    pub phi_limit: Option<f64>,
    pub deviation: f64,
    pub closure_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatteringReport {
    pub form: String,
    pub rungs: Vec<LadderRung>,
    pub probes: Vec<ProbeRow>,
    pub k: i64,
    /// `k_m` constant over the tested ladder; nothing is claimed beyond its last entry.
    pub stable: bool,
    pub max_probe_deviation: f64,
    pub converged: bool,
}

fn circ_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

pub fn noncompact_monodromy(cfg: &ScatteringConfig, num: &NumericsConfig) -> Result<ScatteringReport> {
    cfg.validate()?;
    let form = RotationForm::new(ff(), cfg.form)?;
    let mut rungs = Vec::new();
    for &m in &cfg.m_values {
        let f = MFunctions { form, path: &cfg.path, m, cfg: *num };
        let ser = sample_series(&f, cfg.samples)?;
        let var_phi = ser.var_phi.ok_or_else(|| {
            let v = cfg.path.at(0.0);
            Error::FiberMeetsPolarLocus { h: v.h, j: v.j }
        })?;
        let (k, integerness) = k_from_variation(var_phi)?;
        rungs.push(LadderRung {
            m,
            var_phi,
            var_theta: ser.var_theta.unwrap_or(0.0),
            k,
            integerness,
            max_drift: ser.samples.iter().map(|p| p.max_drift).fold(0.0, f64::max),
            phi_jumps: ser.phi_jumps,
            theta_jumps: ser.theta_jumps,
        });
    }
    let probes: Vec<Result<ProbeRow>> = cfg
        .probes
        .par_iter()
        .map(|&v| {
            let mut theta_m = Vec::new();
            let mut phi_m = Vec::new();
            let mut closure: f64 = 0.0;
            for &m in &cfg.m_values {
                let r = scattering_numbers(&form, v, m, num)?;
                theta_m.push(r.theta);
                phi_m.push(r.phi);
                closure = closure.max(r.closure_residual);
            }
            let n = theta_m.len();
            let theta_limit = theta_m[n - 1];
            let theta_bound = if n > 1 { circ_diff(theta_m[n - 1], theta_m[n - 2]) } else { f64::INFINITY };
            let ts = theta_s(v);
            Ok(ProbeRow {
                v,
                theta_s: ts,
                theta_limit,
                theta_bound,
                phi_limit: phi_m[n - 1],
                deviation: circ_diff(theta_limit, ts),
                theta_m,
                phi_m,
                closure_residual: closure,
            })
        })
        .collect();
    let probes = probes.into_iter().collect::<Result<Vec<_>>>()?;
    let ks: Vec<i64> = rungs.iter().map(|r| r.k).collect();
    let stable = ks.windows(2).all(|w| w[0] == w[1]);
    if !stable {
        return Err(Error::LadderUnstable(ks));
    }
    let max_probe_deviation = probes.iter().map(|p| p.deviation).fold(0.0, f64::max);
    Ok(ScatteringReport {
        form: form.name().to_string(),
        k: ks[0],
        stable,
        converged: max_probe_deviation <= cfg.convergence_tol,
        max_probe_deviation,
        rungs,
        probes,
    })
}
