//! Rotation 1-forms, their polar sets, and line integrals.
//!
//! All built-in forms are angular forms `d arg(c)` of a complex coordinate `c`
//! that is linear in the ambient coordinates, so `theta(v) = Im(conj(c) dc(v)) / |c|^2`.
//! The sign is normalized so that `theta(X_J) = +1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::OrbitSegment;
use crate::local_ff;
use crate::quadrature;
use crate::systems::{EMValue, FieldId, IntegrableSystem, PhasePoint, SystemKind, Vec6};
use crate::tolerances::{CLOSEDNESS_SIDE, POLAR_SAFETY, QUAD_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormKind {
    /// The system's own angular form (for focus-focus this is `d theta_1`).
    Standard,
    /// `(q1 dp1 - p1 dq1)/(q1^2 + p1^2)` on the focus-focus normal form.
    Scattering,
    /// The chart angle `du` of the focus-focus trivialization. Closed, but not
    /// transversal to `F`.
    ChartU,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RotationForm {
    pub system: IntegrableSystem,
    pub kind: FormKind,
    /// Applied to the printed coordinate formula so that `theta(X_J) = +1`.
    pub sign: f64,
}

/// A connected piece of `F(Pi)`, a segment of a horizontal or vertical line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolarBranch {
    pub name: &'static str,
    /// `true` when the branch lies on `j = level`, `false` when on `h = level`.
    pub fixed_j: bool,
    pub level: f64,
    /// Extent in the free coordinate (may be infinite).
    pub lo: f64,
    pub hi: f64,
}

impl PolarBranch {
    /// The free coordinate of `v` along the branch and its signed offset from the line.
    pub fn split(&self, v: EMValue) -> (f64, f64) {
        if self.fixed_j {
            (v.h, v.j - self.level)
        } else {
            (v.j, v.h - self.level)
        }
    }

    pub fn contains(&self, v: EMValue, tol: f64) -> bool {
        let (along, off) = self.split(v);
        off.abs() <= tol && along >= self.lo - tol && along <= self.hi + tol
    }

    /// Sampled polyline `(h, j)` of the branch, clipped to `[lo, hi]` in the free coordinate.
    pub fn polyline(&self, lo: f64, hi: f64, n: usize) -> Vec<EMValue> {
        let a = self.lo.max(lo);
        let b = self.hi.min(hi);
        if !(a <= b) {
            return Vec::new();
        }
        (0..=n)
            .map(|i| {
                let t = a + (b - a) * i as f64 / n.max(1) as f64;
                if self.fixed_j {
                    EMValue::new(t, self.level)
                } else {
                    EMValue::new(self.level, t)
                }
            })
            .collect()
    }
}

#[inline]
fn darg(z: (f64, f64), dz: (f64, f64)) -> f64 {
    (z.0 * dz.1 - z.1 * dz.0) / (z.0 * z.0 + z.1 * z.1)
}

impl RotationForm {
    pub fn new(system: IntegrableSystem, kind: FormKind) -> Result<Self> {
        if kind != FormKind::Standard && system.kind != SystemKind::FocusFocus {
            return Err(Error::InvalidParameter(format!(
                "form {kind:?} is only defined on the focus-focus system"
            )));
        }
        let mut f = RotationForm { system, kind, sign: 1.0 };
        let p = system.reference_point();
        let raw = f.raw(&p.coords, &system.field_raw(FieldId::J, &p.coords));
        f.sign = raw.signum();
        Ok(f)
    }

    /// The printed coordinate formula, before sign normalization.
    fn raw(&self, x: &Vec6, v: &Vec6) -> f64 {
        match (self.kind, self.system.kind) {
            (FormKind::Standard, SystemKind::Champagne)
            | (FormKind::Standard, SystemKind::Pendulum)
            | (FormKind::Standard, SystemKind::Hydrogen) => darg((x[0], x[1]), (v[0], v[1])),
            // (p1 dq1 - q1 dp1)/(q1^2 + p1^2)
            (FormKind::Standard, SystemKind::FocusFocus) => darg((x[0], -x[1]), (v[0], -v[1])),
            // (q1 dp1 - p1 dq1)/(q1^2 + p1^2)
            (FormKind::Scattering, _) => darg((x[0], x[1]), (v[0], v[1])),
            (FormKind::ChartU, _) => local_ff::chart_du(x, v),
        }
    }

    /// `theta_p(v)`.
    pub fn coeff_eval(&self, x: &Vec6, v: &Vec6) -> f64 {
        self.sign * self.raw(x, v)
    }

    pub fn eval(&self, p: &PhasePoint, v: &Vec6) -> f64 {
        self.coeff_eval(&p.coords, v)
    }

    pub fn name(&self) -> String {
        match self.kind {
            FormKind::Standard if self.system.kind == SystemKind::FocusFocus => "dtheta1".into(),
            FormKind::Standard => "standard".into(),
            FormKind::Scattering => "theta_s".into(),
            FormKind::ChartU => "du".into(),
        }
    }

    /// Ambient distance to the polar set.
    pub fn polar_distance(&self, x: &Vec6) -> f64 {
        match (self.kind, self.system.kind) {
            (FormKind::ChartU, _) => local_ff::stable_distance(x),
            (_, _) => x[0].hypot(x[1]),
        }
    }

    pub fn polar_locus(&self) -> &'static str {
        match (self.kind, self.system.kind) {
            (FormKind::ChartU, _) => "{q1 = p2, p1 = q2} (stable manifold)",
            (_, SystemKind::Champagne) => "{q1 = q2 = 0}",
            (_, SystemKind::Pendulum) => "{(0, 0, +-1, p1, p2, 0)}",
            (_, SystemKind::Hydrogen) => "(0, 0, +-1) x S^2",
            (_, SystemKind::FocusFocus) => "{q1 = p1 = 0}",
        }
    }

    /// `F(Pi)` as a union of line segments.
    pub fn polar_branches(&self) -> Vec<PolarBranch> {
        let inf = f64::INFINITY;
        let br = |name, fixed_j, level, lo, hi| PolarBranch { name, fixed_j, level, lo, hi };
        match (self.kind, self.system.kind) {
            // F is constant (0, 0) on the locus
            (FormKind::ChartU, _) => vec![br("stable", true, 0.0, 0.0, 0.0)],
            (_, SystemKind::Champagne) => vec![br("origin", true, 0.0, 0.0, inf)],
            (_, SystemKind::Pendulum) => {
                vec![br("plus", true, 0.0, 1.0, inf), br("minus", true, 0.0, -1.0, inf)]
            }
            (_, SystemKind::Hydrogen) => {
                let a = self.system.a;
                vec![br("plus", false, a, 0.0, 2.0), br("minus", false, -a, -2.0, 0.0)]
            }
            (_, SystemKind::FocusFocus) => vec![br("axis", false, 0.0, -inf, 0.0)],
        }
    }

    /// Which branch a point on (or close to) the polar set belongs to.
    pub fn branch_of(&self, x: &Vec6) -> &'static str {
        match (self.kind, self.system.kind) {
            (FormKind::ChartU, _) => "stable",
            (_, SystemKind::Champagne) => "origin",
            (_, SystemKind::Pendulum) | (_, SystemKind::Hydrogen) => {
                if x[2] >= 0.0 {
                    "plus"
                } else {
                    "minus"
                }
            }
            (_, SystemKind::FocusFocus) => "axis",
        }
    }

    /// One representative point of the polar orbit over `v` on `branch`.
    pub fn polar_representative(&self, branch: &PolarBranch, v: EMValue) -> Result<PhasePoint> {
        let sys = &self.system;
        let bad = || Error::InvalidParameter(format!("({}, {}) is not on branch {}", v.h, v.j, branch.name));
        let (along, _) = branch.split(v);
        if along < branch.lo - 1e-12 || along > branch.hi + 1e-12 {
            return Err(bad());
        }
        let sq = |x: f64| x.max(0.0).sqrt();
        Ok(match (self.kind, sys.kind, branch.name) {
            (FormKind::ChartU, _, _) => return Err(Error::NotTransversal(self.name(), 0)),
            (_, SystemKind::Champagne, _) => sys.point(&[0.0, 0.0, sq(2.0 * v.h), 0.0]),
            (_, SystemKind::Pendulum, "plus") => sys.point(&[0.0, 0.0, 1.0, sq(2.0 * (v.h - 1.0)), 0.0, 0.0]),
            (_, SystemKind::Pendulum, _) => sys.point(&[0.0, 0.0, -1.0, sq(2.0 * (v.h + 1.0)), 0.0, 0.0]),
            (_, SystemKind::Hydrogen, "plus") => {
                let y3 = v.j - 1.0;
                sys.point(&[0.0, 0.0, 1.0, sq(1.0 - y3 * y3), 0.0, y3])
            }
            (_, SystemKind::Hydrogen, _) => {
                let y3 = v.j + 1.0;
                sys.point(&[0.0, 0.0, -1.0, sq(1.0 - y3 * y3), 0.0, y3])
            }
            (_, SystemKind::FocusFocus, _) => sys.point(&[0.0, 0.0, sq(-2.0 * v.j), 0.0]),
        })
    }

    /// Two-parameter description of the polar locus, used by the rank check.
    fn locus_param(&self, branch: &str, a: f64, b: f64) -> Vec6 {
        let mut x = [0.0; 6];
        match (self.kind, self.system.kind) {
            (FormKind::ChartU, _) => {
                // q1 - i p1 = -i (q2 + i p2): q1 = p2, p1 = q2
                x[0] = b;
                x[1] = a;
                x[2] = a;
                x[3] = b;
            }
            (_, SystemKind::Champagne) => {
                x[2] = a;
                x[3] = b;
            }
            (_, SystemKind::Pendulum) => {
                x[2] = if branch == "plus" { 1.0 } else { -1.0 };
                x[3] = a;
                x[4] = b;
            }
            (_, SystemKind::Hydrogen) => {
                x[2] = if branch == "plus" { 1.0 } else { -1.0 };
                let (st, ct) = a.sin_cos();
                let (sp, cp) = b.sin_cos();
                x[3] = st * cp;
                x[4] = st * sp;
                x[5] = ct;
            }
            (_, SystemKind::FocusFocus) => {
                x[2] = a;
                x[3] = b;
            }
        }
        x
    }

    /// Parameter ranges for random locus probes, avoiding the fixed points.
    fn locus_probe(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        match (self.kind, self.system.kind) {
            (FormKind::ChartU, _) => (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            (_, SystemKind::Hydrogen) => (rng.gen_range(0.2..2.9), rng.gen_range(0.0..6.28)),
            _ => {
                let r: f64 = rng.gen_range(0.2..1.5);
                let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                (r * t.cos(), r * t.sin())
            }
        }
    }

    /// `F` at `n` random points of the polar locus, with their branch names.
    pub fn polar_image_samples(&self, n: usize, seed: u64) -> Vec<(&'static str, EMValue)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let branches: Vec<&'static str> = self.polar_branches().iter().map(|b| b.name).collect();
        (0..n)
            .map(|i| {
                let br = branches[i % branches.len()];
                let (a, b) = self.locus_probe(&mut rng);
                (br, self.system.f_raw(&self.locus_param(br, a, b)))
            })
            .collect()
    }

    /// Rank of `F` restricted to the polar locus at `probes` random locus points.
    /// Returns the smallest rank seen.
    pub fn polar_rank(&self, probes: usize, seed: u64) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let branches: Vec<&'static str> = self.polar_branches().iter().map(|b| b.name).collect();
        let mut min_rank = 2;
        for i in 0..probes.max(1) {
            let br = branches[i % branches.len()];
            let (a, b) = self.locus_probe(&mut rng);
            let f = |a, b| self.system.f_raw(&self.locus_param(br, a, b));
            let e = 1e-6;
            let (fa1, fa0, fb1, fb0) = (f(a + e, b), f(a - e, b), f(a, b + e), f(a, b - e));
            let m = [
                [(fa1.h - fa0.h) / (2.0 * e), (fb1.h - fb0.h) / (2.0 * e)],
                [(fa1.j - fa0.j) / (2.0 * e), (fb1.j - fb0.j) / (2.0 * e)],
            ];
            let (s1, s2) = singular_values_2x2(m);
            let rank = if s1 <= 1e-6 {
                0
            } else if s2 <= 1e-6 * s1.max(1.0) {
                1
            } else {
                2
            };
            min_rank = min_rank.min(rank);
        }
        min_rank
    }

    /// Refuse forms whose polar locus is not mapped with rank 1.
    pub fn check_transversal(&self) -> Result<()> {
        let r = self.polar_rank(32, 7);
        if r == 1 {
            Ok(())
        } else {
            Err(Error::NotTransversal(self.name(), r))
        }
    }
}

fn singular_values_2x2(m: [[f64; 2]; 2]) -> (f64, f64) {
    let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
    let s = a * a + b * b + c * c + d * d;
    let det = (a * d - b * c).abs();
    let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
    let s1 = (0.5 * (s + disc)).sqrt();
    let s2 = if s1 > 0.0 { det / s1 } else { 0.0 };
    (s1, s2)
}

/// The standard rotation form of a built-in system.
pub fn standard_form(sys: &IntegrableSystem) -> RotationForm {
    RotationForm::new(*sys, FormKind::Standard).expect("standard form exists for every system")
}

/// A parameterized curve in phase space.
pub trait Path {
    /// Parameter breakpoints, in traversal order (may be decreasing).
    fn breaks(&self) -> Vec<f64>;
    fn point(&self, t: f64) -> Vec6;
    fn velocity(&self, t: f64) -> Vec6;
}

impl Path for OrbitSegment {
    fn breaks(&self) -> Vec<f64> {
        self.node_times()
    }
    fn point(&self, t: f64) -> Vec6 {
        self.eval(t).coords
    }
    fn velocity(&self, t: f64) -> Vec6 {
        OrbitSegment::velocity(self, t)
    }
}

/// A circle-action orbit traversed by the exact flow over `[0, angle]`.
#[derive(Debug, Clone, Copy)]
pub struct CircleOrbit {
    pub system: IntegrableSystem,
    pub start: PhasePoint,
    pub angle: f64,
}

impl Path for CircleOrbit {
    fn breaks(&self) -> Vec<f64> {
        let n = 8;
        (0..=n).map(|i| self.angle * i as f64 / n as f64).collect()
    }
    fn point(&self, t: f64) -> Vec6 {
        self.system.circle_flow_raw(&self.start.coords, t)
    }
    fn velocity(&self, t: f64) -> Vec6 {
        self.system.field_raw(FieldId::J, &self.point(t))
    }
}

/// A closed polygon through phase-space samples, parameterized by `s` in `[0, 1]`
/// with uniform parameter spacing per vertex.
#[derive(Debug, Clone)]
pub struct PhaseLoop {
    pub points: Vec<Vec6>,
}

impl PhaseLoop {
    /// Build from samples; the last vertex connects back to the first.
    pub fn new(mut points: Vec<Vec6>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidLoop("a phase loop needs at least 3 points".into()));
        }
        let first = points[0];
        let last = points[points.len() - 1];
        let gap = first.iter().zip(last.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if gap <= 1e-10 {
            points.pop();
        }
        Ok(Self { points })
    }

    fn seg(&self, t: f64) -> (usize, f64) {
        let n = self.points.len();
        let x = (t.clamp(0.0, 1.0) * n as f64).min(n as f64 - 1e-12);
        let i = x.floor() as usize;
        (i.min(n - 1), x - i as f64)
    }

    pub fn min_polar_distance(&self, form: &RotationForm) -> f64 {
        self.points.iter().map(|x| form.polar_distance(x)).fold(f64::INFINITY, f64::min)
    }
}

impl Path for PhaseLoop {
    fn breaks(&self) -> Vec<f64> {
        let n = self.points.len();
        (0..=n).map(|i| i as f64 / n as f64).collect()
    }
    fn point(&self, t: f64) -> Vec6 {
        let (i, f) = self.seg(t);
        let a = &self.points[i];
        let b = &self.points[(i + 1) % self.points.len()];
        let mut out = [0.0; 6];
        for k in 0..6 {
            out[k] = a[k] + f * (b[k] - a[k]);
        }
        out
    }
    fn velocity(&self, t: f64) -> Vec6 {
        let n = self.points.len();
        let (i, _) = self.seg(t);
        let a = &self.points[i];
        let b = &self.points[(i + 1) % n];
        let mut out = [0.0; 6];
        for k in 0..6 {
            out[k] = (b[k] - a[k]) * n as f64;
        }
        out
    }
}

/// A path given by closures.
pub struct FnPath<P, V>
where
    P: Fn(f64) -> Vec6,
    V: Fn(f64) -> Vec6,
{
    pub point: P,
    pub velocity: V,
    pub breaks: Vec<f64>,
}

impl<P: Fn(f64) -> Vec6, V: Fn(f64) -> Vec6> Path for FnPath<P, V> {
    fn breaks(&self) -> Vec<f64> {
        self.breaks.clone()
    }
    fn point(&self, t: f64) -> Vec6 {
        (self.point)(t)
    }
    fn velocity(&self, t: f64) -> Vec6 {
        (self.velocity)(t)
    }
}

/// Smallest polar distance along the path, sampled at the breakpoints and
/// `sub` interior points per interval, with golden-section refinement of every
/// sampled local minimum. Returns `(param, distance)`.
pub fn closest_approach(form: &RotationForm, path: &dyn Path, sub: usize) -> (f64, f64) {
    let br = path.breaks();
    let mut ts = Vec::with_capacity(br.len() * sub + 1);
    for w in br.windows(2) {
        for k in 0..sub {
            ts.push(w[0] + (w[1] - w[0]) * k as f64 / sub as f64);
        }
    }
    if let Some(&last) = br.last() {
        ts.push(last);
    }
    let d = |t: f64| form.polar_distance(&path.point(t));
    let ds: Vec<f64> = ts.iter().map(|&t| d(t)).collect();
    let mut best = (ts.first().copied().unwrap_or(0.0), f64::INFINITY);
    for (i, &di) in ds.iter().enumerate() {
        if di < best.1 {
            best = (ts[i], di);
        }
        if i > 0 && i + 1 < ds.len() && di <= ds[i - 1] && di <= ds[i + 1] {
            let (t, v) = golden_min(&d, ts[i - 1], ts[i + 1]);
            if v < best.1 {
                best = (t, v);
            }
        }
    }
    best
}

fn golden_min(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let g = 0.5 * (5.0_f64.sqrt() - 1.0);
    let (mut a, mut b) = if a <= b { (a, b) } else { (b, a) };
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if b - a <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
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
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// `int_path theta`, refusing paths that come within `d0` of the polar set.
pub fn line_integral(form: &RotationForm, path: &dyn Path, quad_tol: f64, d0: f64) -> Result<f64> {
    let (param, distance) = closest_approach(form, path, 8);
    if distance < d0 {
        return Err(Error::NearPole { param, distance, d0 });
    }
    let br = path.breaks();
    let mut f = |t: f64| form.coeff_eval(&path.point(t), &path.velocity(t));
    let (v, _) = quadrature::integrate_breaks(&mut f, &br, quad_tol)?;
    Ok(v)
}

/// Line integral with the default tolerances.
pub fn line_integral_default(form: &RotationForm, path: &dyn Path) -> Result<f64> {
    line_integral(form, path, QUAD_TOL, POLAR_SAFETY)
}

/// A random point of the phase space, off the polar set by at least `d0`.
pub fn random_phase_point(form: &RotationForm, rng: &mut ChaCha8Rng, d0: f64) -> PhasePoint {
    let sys = &form.system;
    loop {
        let mut x = [0.0; 6];
        match sys.kind {
            SystemKind::Champagne | SystemKind::FocusFocus => {
                for c in x.iter_mut().take(4) {
                    *c = rng.gen_range(-1.5..1.5);
                }
            }
            SystemKind::Pendulum | SystemKind::Hydrogen => {
                for c in x.iter_mut() {
                    *c = rng.gen_range(-1.0..1.0);
                }
                if x[..3].iter().map(|c| c * c).sum::<f64>() < 1e-2 {
                    continue;
                }
                if sys.kind == SystemKind::Hydrogen && x[3..].iter().map(|c| c * c).sum::<f64>() < 1e-2 {
                    continue;
                }
                sys.project(&mut x);
            }
        }
        if form.polar_distance(&x) >= d0 {
            return PhasePoint::from_vec(sys.kind, x);
        }
    }
}

/// Defining-property checks of a rotation form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormDiagnostics {
    pub form: String,
    pub probes: usize,
    /// `max |theta(X_J) - 1|`.
    pub max_xj_defect: f64,
    /// `max |oint theta - 2pi|` over full circle orbits.
    pub max_circle_defect: f64,
    /// Largest circulation around small coordinate squares.
    pub max_closedness_defect: f64,
    /// Smallest rank of `F` on the polar locus seen at the probes.
    pub polar_rank: usize,
    pub transversal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub probes: usize,
    pub circles: usize,
    pub squares: usize,
    pub seed: u64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self { probes: 1000, circles: 100, squares: 100, seed: 20240 }
    }
}

/// Square loop of side `eps` in the coordinate plane `(i, k)` through `x`,
/// projected onto the manifold for constrained systems.
pub fn coordinate_square(sys: &IntegrableSystem, x: &Vec6, i: usize, k: usize, eps: f64, per_side: usize) -> Vec<Vec6> {
    let mut pts = Vec::with_capacity(4 * per_side);
    let corners = [(0.0, 0.0), (eps, 0.0), (eps, eps), (0.0, eps)];
    for c in 0..4 {
        let (a0, b0) = corners[c];
        let (a1, b1) = corners[(c + 1) % 4];
        for n in 0..per_side {
            let f = n as f64 / per_side as f64;
            let mut y = *x;
            y[i] += a0 + f * (a1 - a0);
            y[k] += b0 + f * (b1 - b0);
            sys.project(&mut y);
            pts.push(y);
        }
    }
    pts
}

pub fn form_diagnostics(form: &RotationForm, spec: &SampleSpec) -> Result<FormDiagnostics> {
    let sys = form.system;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d0 = 10.0 * POLAR_SAFETY;
    let mut max_xj: f64 = 0.0;
    for _ in 0..spec.probes {
        let p = random_phase_point(form, &mut rng, d0);
        let v = form.coeff_eval(&p.coords, &sys.field_raw(FieldId::J, &p.coords));
        max_xj = max_xj.max((v - 1.0).abs());
    }
    let mut max_circle: f64 = 0.0;
    for _ in 0..spec.circles {
        let p = random_phase_point(form, &mut rng, 0.1);
        let c = CircleOrbit { system: sys, start: p, angle: std::f64::consts::TAU };
        let v = line_integral(form, &c, QUAD_TOL, POLAR_SAFETY)?;
        max_circle = max_circle.max((v - std::f64::consts::TAU).abs());
    }
    let mut max_closed: f64 = 0.0;
    let dim = sys.dim();
    for n in 0..spec.squares {
        let p = random_phase_point(form, &mut rng, 0.1);
        let i = n % dim;
        let k = (i + 1 + (n / dim) % (dim - 1)) % dim;
        let pts = coordinate_square(&sys, &p.coords, i, k, CLOSEDNESS_SIDE, 16);
        let l = PhaseLoop::new(pts)?;
        let v = line_integral(form, &l, 1e-13, POLAR_SAFETY)?;
        max_closed = max_closed.max(v.abs());
    }
    let rank = form.polar_rank(32, spec.seed ^ 0x5eed);
    Ok(FormDiagnostics {
        form: form.name(),
        probes: spec.probes,
        max_xj_defect: max_xj,
        max_circle_defect: max_circle,
        max_closedness_defect: max_closed,
        polar_rank: rank,
        transversal: rank == 1,
    })
}
