//! The focus-focus normal form `H = q1 q2 - p1 p2`, `J = (q1^2 + p1^2 - q2^2 - p2^2)/2`
//! in coordinates `(q1, p1, q2, p2)`.
//!
//! With `z1 = q1 - i p1` and `z2 = q2 + i p2` the flows are
//! `J: (z1, z2) -> e^{it} (z1, z2)` and `H: z1 +- i z2 -> e^{+-t} (z1 +- i z2)`.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{integrate_until, integrate_until_signed, Direction, EventSpec, OrbitSegment};
use crate::forms::{line_integral, standard_form, FormKind, RotationForm};
use crate::monodromy::{
    all_residues, assemble_report, polar_crossings, residue, sample_series, Cylinder, LoopFunctions, LoopPath,
    Method, MonodromyReport, PolarCrossing, PolarOrbit, SamplePoint,
};
use crate::quadrature;
use crate::systems::{EMValue, FieldId, IntegrableSystem, PhasePoint, SystemKind, Vec6};
use crate::tolerances::NumericsConfig;

/// The Lagrangian section over `(h, j)`.
pub fn ff_section(j: f64, h: f64) -> PhasePoint {
    PhasePoint::new(
        SystemKind::FocusFocus,
        &[(j + 1.0) * FRAC_1_SQRT_2, h * FRAC_1_SQRT_2, h * FRAC_1_SQRT_2, (j - 1.0) * FRAC_1_SQRT_2],
    )
}

fn zs(x: &Vec6) -> (Complex64, Complex64) {
    (Complex64::new(x[0], -x[1]), Complex64::new(x[2], x[3]))
}

fn from_zs(z1: Complex64, z2: Complex64) -> Vec6 {
    [z1.re, -z1.im, z2.re, z2.im, 0.0, 0.0]
}

/// Exact time-`t` flow of `X_H`.
pub fn h_flow(x: &Vec6, t: f64) -> Vec6 {
    let (z1, z2) = zs(x);
    let i = Complex64::i();
    let (c, s) = (t.cosh(), t.sinh());
    from_zs(z1 * c + i * z2 * s, z2 * c - i * z1 * s)
}

/// Exact time-`t` flow of `X_J`.
pub fn j_flow(x: &Vec6, t: f64) -> Vec6 {
    let (z1, z2) = zs(x);
    let e = Complex64::from_polar(1.0, t);
    from_zs(z1 * e, z2 * e)
}

/// `A = z1 + i z2`, the unstable coordinate (`A -> e^t A` under `X_H`).
fn unstable(x: &Vec6) -> Complex64 {
    let (z1, z2) = zs(x);
    z1 + Complex64::i() * z2
}

/// `E = e^{2v}` of the chart, `|A|^2 / 2`.
pub fn chart_e(x: &Vec6) -> f64 {
    0.5 * unstable(x).norm_sqr()
}

/// Distance proxy to the stable manifold `{A = 0}`.
pub fn stable_distance(x: &Vec6) -> f64 {
    unstable(x).norm()
}

fn hj(x: &Vec6) -> (f64, f64) {
    (
        x[0] * x[2] - x[1] * x[3],
        0.5 * (x[0] * x[0] + x[1] * x[1]) - 0.5 * (x[2] * x[2] + x[3] * x[3]),
    )
}

/// Chart coordinates `(u, j, v, h)` and `w = e^{2v} + j` of a point off the stable manifold.
pub fn chart_of(x: &Vec6) -> (f64, f64, f64, f64, f64) {
    let (h, j) = hj(x);
    let e = chart_e(x);
    let w = e + j;
    (chart_u(x, h, j, e, w), j, 0.5 * e.ln(), h, w)
}

fn chart_u(x: &Vec6, h: f64, j: f64, e: f64, w: f64) -> f64 {
    let (z1, z2) = zs(x);
    // z1 = e^{-v} (w - ih) e^{iu} / sqrt 2, z2 = e^{-v} (h + i(j - E)) e^{iu} / sqrt 2
    let a = z1 * Complex64::new(w, h);
    let b = z2 * Complex64::new(h, -(j - e));
    let c = if a.norm() >= b.norm() { a } else { b };
    c.im.atan2(c.re)
}

/// `du(v)` at `x`, by differentiating the chart angle along `v`.
pub fn chart_du(x: &Vec6, v: &Vec6) -> f64 {
    let (h, j) = hj(x);
    let dh = v[0] * x[2] + x[0] * v[2] - v[1] * x[3] - x[1] * v[3];
    let dj = x[0] * v[0] + x[1] * v[1] - x[2] * v[2] - x[3] * v[3];
    let a = unstable(x);
    let da = unstable(v);
    let e = 0.5 * a.norm_sqr();
    let de = (a.conj() * da).re;
    let w = e + j;
    let dw = de + dj;
    let (z1, z2) = zs(x);
    let (dz1, dz2) = zs(v);
    let darg = |z: Complex64, dz: Complex64| (z.conj() * dz).im / z.norm_sqr();
    let c1 = Complex64::new(w, h);
    let c2 = Complex64::new(h, -(j - e));
    if (z1 * c1).norm() >= (z2 * c2).norm() {
        darg(z1, dz1) + darg(c1, Complex64::new(dw, dh))
    } else {
        darg(z2, dz2) + darg(c2, Complex64::new(dh, -(dj - de)))
    }
}

/// The ball `|x|^2 < 2r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub r: f64,
}

impl BallSpec {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidParameter(format!("ball radius parameter must be positive, got {r}")));
        }
        Ok(Self { r })
    }
}

/// A point of the `(u, j, v, h)` trivialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FFChartPoint {
    pub u: f64,
    pub j: f64,
    pub v: f64,
    pub h: f64,
}

/// `phi_J^u o phi_H^v (sigma(j, h))`.
pub fn ff_trivialize(c: FFChartPoint) -> PhasePoint {
    let s = ff_section(c.j, c.h);
    PhasePoint::from_vec(SystemKind::FocusFocus, j_flow(&h_flow(&s.coords, c.v), c.u))
}

/// `w = e^{2v} + j`.
pub fn ff_w(c: FFChartPoint) -> f64 {
    (2.0 * c.v).exp() + c.j
}

fn ff_system() -> IntegrableSystem {
    IntegrableSystem::new(SystemKind::FocusFocus)
}

/// The orbit segment of `X_H` inside the ball on the fiber over `v`.
#[derive(Debug, Clone)]
pub struct BallPassage {
    pub entry: PhasePoint,
    pub exit: PhasePoint,
    pub segment: OrbitSegment,
}

/// Integrate through the ball: start at the innermost point of the orbit through
/// `sigma(j, h)`, run backward to the entry and then forward from the entry to the exit,
/// both located as events on `|x|^2 - 2r`.
pub fn ball_passage(v: EMValue, ball: BallSpec, cfg: &NumericsConfig) -> Result<BallPassage> {
    let l = v.h.hypot(v.j);
    if l == 0.0 {
        return Err(Error::CriticalValue { h: v.h, j: v.j });
    }
    if l >= ball.r {
        return Err(Error::NotEnteringBall { h: v.h, j: v.j });
    }
    // |x|^2 = E + l^2/E along the orbit, smallest at E = l
    let inner = PhasePoint::from_vec(SystemKind::FocusFocus, h_flow(&ff_section(v.j, v.h).coords, 0.5 * l.ln()));
    ball_passage_through(&inner, ball, cfg)
}

/// As [`ball_passage`], for the `X_H` orbit through `p`, which must lie inside the ball.
pub fn ball_passage_through(p: &PhasePoint, ball: BallSpec, cfg: &NumericsConfig) -> Result<BallPassage> {
    let sys = ff_system();
    let two_r = 2.0 * ball.r;
    if p.norm_sq() >= two_r {
        let v = sys.f_raw(&p.coords);
        return Err(Error::InvalidParameter(format!("base point over ({}, {}) is not inside the ball", v.h, v.j)));
    }
    let g = move |y: &Vec6| y[0] * y[0] + y[1] * y[1] + y[2] * y[2] + y[3] * y[3] - two_r;
    let back = EventSpec::root(g, Direction::Rising, 1);
    let (seg_b, _) = integrate_until_signed(&sys, FieldId::H, -1.0, p, &back, &cfg.integrator)?;
    let entry = seg_b.end_point();
    let fwd = EventSpec::root(g, Direction::Rising, 1);
    let (segment, _) = integrate_until(&sys, FieldId::H, &entry, &fwd, &cfg.integrator)?;
    Ok(BallPassage { entry, exit: segment.end_point(), segment })
}

/// `Phi_rel(v)`: the integral of `form` along the in-ball orbit segment.
pub fn ff_phi_rel_with(form: &RotationForm, v: EMValue, ball: BallSpec, cfg: &NumericsConfig) -> Result<f64> {
    let pass = ball_passage(v, ball, cfg)?;
    match line_integral(form, &pass.segment, cfg.quad_tol, cfg.polar_safety) {
        Err(Error::NearPole { .. }) => Err(Error::FiberMeetsPolarLocus { h: v.h, j: v.j }),
        other => other,
    }
}

/// `Phi_rel(v)` of `d theta_1`.
pub fn ff_phi_rel(v: EMValue, ball: BallSpec, cfg: &NumericsConfig) -> Result<f64> {
    ff_phi_rel_with(&standard_form(&ff_system()), v, ball, cfg)
}

/// `Phi_rel` along a loop, for the variation engine.
pub struct LocalFunctions<'a> {
    pub form: RotationForm,
    pub path: &'a LoopPath,
    pub ball: BallSpec,
    pub cfg: NumericsConfig,
}

impl LoopFunctions for LocalFunctions<'_> {
    fn loop_path(&self) -> &LoopPath {
        self.path
    }
    fn eval(&self, s: f64) -> Result<SamplePoint> {
        let v = self.path.at(s);
        let pass = ball_passage(v, self.ball, &self.cfg)?;
        let phi = match line_integral(&self.form, &pass.segment, self.cfg.quad_tol, self.cfg.polar_safety) {
            Ok(x) => Some(x),
            Err(Error::NearPole { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(SamplePoint { s, h: v.h, j: v.j, theta: None, phi, max_drift: pass.segment.drift.max_dev() })
    }
}

/// The cylinder of in-ball orbit segments through the section, with exact flows.
pub struct LocalCylinder<'a> {
    pub form: RotationForm,
    pub path: &'a LoopPath,
    pub ball: BallSpec,
}

impl Cylinder for LocalCylinder<'_> {
    fn form(&self) -> &RotationForm {
        &self.form
    }
    fn loop_path(&self) -> &LoopPath {
        self.path
    }
    fn section(&self, s: f64, _seed: Option<&PhasePoint>) -> Result<PhasePoint> {
        let v = self.path.at(s);
        Ok(ff_section(v.j, v.h))
    }
    fn polar_minima(&self, base: &PhasePoint) -> Result<(f64, f64, Vec<(f64, Vec6)>)> {
        let v = ff_system().f_raw(&base.coords);
        let (em, ep) = crate::oracles::ff_ball_levels(v.h, v.j, self.ball.r)
            .ok_or(Error::NotEnteringBall { h: v.h, j: v.j })?;
        // E = e^{2t} along the orbit through the section
        let (ta, tb) = (0.5 * em.ln(), 0.5 * ep.ln());
        let form = self.form;
        let d = |t: f64| form.polar_distance(&h_flow(&base.coords, t));
        let n = 400;
        let ts: Vec<f64> = (0..=n).map(|i| ta + (tb - ta) * i as f64 / n as f64).collect();
        let ds: Vec<f64> = ts.iter().map(|&t| d(t)).collect();
        let mut out = Vec::new();
        for i in 1..n {
            if ds[i] <= ds[i - 1] && ds[i] < ds[i + 1] {
                let t = golden(&d, ts[i - 1], ts[i + 1]);
                out.push((t, h_flow(&base.coords, t)));
            }
        }
        Ok((ta, tb, out))
    }
    fn flow(&self, base: &PhasePoint, t: f64) -> Result<Vec6> {
        Ok(h_flow(&base.coords, t))
    }
}

fn golden(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-14 * (1.0 + a.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// The chart form `(h dw - w dh)/(h^2 + w^2)` integrated over the residue loop of the
/// cylinder, written in the chart: the loop is the positively oriented `(s, t)` ellipse
/// about the pole, mapped by `w = e^{2t} + j(s)`, `h = h(s)`.
pub fn chart_form_residue(path: &LoopPath, s0: f64, t0: f64, ds: f64, dt: f64) -> Result<f64> {
    let w_h = |phi: f64| {
        let (sn, cs) = phi.sin_cos();
        let s = s0 + ds * cs;
        let t = t0 + dt * sn;
        let v = path.at(s);
        let (dh_ds, dj_ds) = path.tangent(s);
        let e = (2.0 * t).exp();
        let w = e + v.j;
        let dw = 2.0 * e * dt * cs + dj_ds * (-ds * sn);
        let dh = dh_ds * (-ds * sn);
        (w, v.h, dw, dh)
    };
    let mut f = |phi: f64| {
        let (w, h, dw, dh) = w_h(phi);
        (h * dw - w * dh) / (h * h + w * w)
    };
    let br: Vec<f64> = (0..=64).map(|i| std::f64::consts::TAU * i as f64 / 64.0).collect();
    Ok(quadrature::integrate_breaks(&mut f, &br, 1e-12)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalReport {
    pub ball: BallSpec,
    pub report: MonodromyReport,
    /// `var Phi_rel` by the variation engine.
    pub var_phi_rel: f64,
    /// Residue of the chart form around the pole on the cylinder.
    pub chart_residue: f64,
    /// Closed-form value of the same residue.
    pub chart_residue_oracle: f64,
}

/// Local monodromy of the focus-focus point along `path` (which must wind once about the origin).
pub fn ff_local_monodromy(path: &LoopPath, ball: BallSpec, n: usize, cfg: &NumericsConfig) -> Result<LocalReport> {
    let sys = ff_system();
    let enclosed = path.winding_about(EMValue::new(0.0, 0.0));
    if enclosed != 1 {
        return Err(Error::InvalidLoop("the local computation needs a loop around (0, 0)".into()));
    }
    if path.max_norm() >= ball.r {
        return Err(Error::InvalidLoop("loop values must satisfy |v| < r so that fibers enter the ball".into()));
    }
    path.validate(&sys)?;
    let form = standard_form(&sys);
    let f = LocalFunctions { form, path, ball, cfg: *cfg };
    let series = sample_series(&f, n)?;
    let crossings = polar_crossings(&form, path)?;
    let cyl = LocalCylinder { form, path, ball };
    let residues = all_residues(&cyl, &crossings, n, cfg)?;
    let var_phi_rel = series.var_phi.unwrap_or(0.0);
    let mut chart = 0.0;
    for r in &residues {
        chart += chart_form_residue(path, r.s, r.t_pole, r.delta_s, r.delta_t)?;
    }
    let report = assemble_report(sys.name(), &form, Method::Both, n, Some(series), crossings, residues)?;
    Ok(LocalReport {
        ball,
        report,
        var_phi_rel,
        chart_residue: chart,
        chart_residue_oracle: crate::oracles::chart_residue(1.0),
    })
}

/// Negative control with the chart form `du`: its variation along `path` and the
/// residue engine's verdict on it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DuControl {
    pub var_phi: f64,
    pub polar_rank: usize,
    pub refusal: String,
}

pub fn du_control(path: &LoopPath, ball: BallSpec, n: usize, cfg: &NumericsConfig) -> Result<DuControl> {
    let sys = ff_system();
    let form = RotationForm::new(sys, FormKind::ChartU)?;
    let f = LocalFunctions { form, path, ball, cfg: *cfg };
    let series = sample_series(&f, n)?;
    let crossings = polar_crossings(&form, path).unwrap_or_default();
    let cyl = LocalCylinder { form, path, ball };
    let probe = PolarCrossing {
        s: 0.5,
        v: path.at(0.5),
        polar_orbits: vec![PolarOrbit { branch: "stable", point: ff_section(0.0, 0.0) }],
        crossing_sign: 0,
        angle: 0.0,
    };
    let first = crossings.first().unwrap_or(&probe);
    let refusal = match residue(&cyl, first, &first.polar_orbits[0], n, cfg) {
        Err(e) => e.to_string(),
        Ok(r) => format!("accepted with value {}", r.value),
    };
    Ok(DuControl { var_phi: series.var_phi.unwrap_or(0.0), polar_rank: form.polar_rank(32, 7), refusal })
}
