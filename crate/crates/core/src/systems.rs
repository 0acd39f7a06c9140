//! The built-in integrable systems `F = (H, J)`.
//!
//! Sign convention: every vector field is `f' = {f, H}` with the canonical
//! bracket `{q_i, p_i} = 1` on flat phase spaces and `{x_i, x_j} = eps_ijk x_k`
//! (same for `y`) on the product of spheres. Coordinates per system:
//!
//! | system      | coords                       |
//! |-------------|------------------------------|
//! | champagne   | `(q1, q2, p1, p2)`           |
//! | pendulum    | `(q1, q2, q3, p1, p2, p3)`   |
//! | hydrogen    | `(x1, x2, x3, y1, y2, y3)`   |
//! | focus-focus | `(q1, p1, q2, p2)`           |

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerances::{
    CONSTRAINT_TOL, FIBER_TOL, MAX_TIME_CHAMPAGNE, MAX_TIME_FOCUS_FOCUS, MAX_TIME_HYDROGEN,
    MAX_TIME_PENDULUM,
};

pub type Vec6 = [f64; 6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    Champagne,
    Pendulum,
    Hydrogen,
    FocusFocus,
}

impl SystemKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "champagne" => Ok(SystemKind::Champagne),
            "pendulum" => Ok(SystemKind::Pendulum),
            "hydrogen" => Ok(SystemKind::Hydrogen),
            "focus-focus" | "ff" => Ok(SystemKind::FocusFocus),
            other => Err(Error::UnknownSystem(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Champagne => "champagne",
            SystemKind::Pendulum => "pendulum",
            SystemKind::Hydrogen => "hydrogen",
            SystemKind::FocusFocus => "focus-focus",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            SystemKind::Champagne | SystemKind::FocusFocus => 4,
            SystemKind::Pendulum | SystemKind::Hydrogen => 6,
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A point of phase space. Unused trailing coordinates of 4-dimensional
/// systems are kept at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhasePoint {
    pub system: SystemKind,
    pub coords: Vec6,
}

impl PhasePoint {
    pub fn new(system: SystemKind, coords: &[f64]) -> Self {
        assert_eq!(coords.len(), system.dim(), "wrong coordinate count for {system}");
        let mut c = [0.0; 6];
        c[..coords.len()].copy_from_slice(coords);
        Self { system, coords: c }
    }

    pub fn from_vec(system: SystemKind, coords: Vec6) -> Self {
        Self { system, coords }
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords[..self.dim()]
    }

    pub fn distance(&self, other: &PhasePoint) -> f64 {
        self.coords
            .iter()
            .zip(other.coords.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum()
    }
}

/// A value `v = (h, j)` of the energy-momentum map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EMValue {
    pub h: f64,
    pub j: f64,
}

impl EMValue {
    pub const fn new(h: f64, j: f64) -> Self {
        Self { h, j }
    }

    pub fn dist(&self, other: &EMValue) -> f64 {
        (self.h - other.h).hypot(self.j - other.j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldId {
    H,
    J,
}

/// Isolated critical values declared per system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalValue {
    pub value: EMValue,
    pub kind: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegrableSystem {
    pub kind: SystemKind,
    /// Hydrogen toy-model coefficient; unused elsewhere.
    pub a: f64,
}

/// Build a system by name. `params` may contain `a` for the hydrogen model.
pub fn make_system(name: &str, params: &BTreeMap<String, f64>) -> Result<IntegrableSystem> {
    let kind = SystemKind::parse(name)?;
    for key in params.keys() {
        if !(kind == SystemKind::Hydrogen && key == "a") {
            return Err(Error::InvalidParameter(format!(
                "parameter `{key}` is not used by {kind}"
            )));
        }
    }
    let a = params.get("a").copied().unwrap_or(1.0);
    if kind == SystemKind::Hydrogen && (a == 0.0 || !a.is_finite()) {
        return Err(Error::InvalidParameter(
            "hydrogen requires a finite a != 0".into(),
        ));
    }
    Ok(IntegrableSystem { kind, a })
}

fn rot(c: f64, s: f64, x: f64, y: f64) -> (f64, f64) {
    (c * x - s * y, s * x + c * y)
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn brent(f: impl FnMut(f64) -> f64, a: f64, b: f64, eps: f64) -> Option<f64> {
    let mut conv = roots::SimpleConvergency { eps, max_iter: 200 };
    roots::find_root_brent(a, b, f, &mut conv).ok()
}

/// Roots of `f` on `[lo, hi]` located by sampling `n` subintervals and Brent refinement.
fn sampled_roots(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut x0 = lo;
    let mut f0 = f(x0);
    if f0 == 0.0 {
        out.push(x0);
    }
    for i in 1..=n {
        let x1 = lo + (hi - lo) * i as f64 / n as f64;
        let f1 = f(x1);
        if f1 == 0.0 {
            out.push(x1);
        } else if f0 * f1 < 0.0 {
            if let Some(r) = brent(&f, x0, x1, 1e-15) {
                out.push(r);
            }
        }
        x0 = x1;
        f0 = f1;
    }
    out
}

impl IntegrableSystem {
    pub fn new(kind: SystemKind) -> Self {
        Self { kind, a: 1.0 }
    }

    pub fn hydrogen(a: f64) -> Result<Self> {
        let mut p = BTreeMap::new();
        p.insert("a".to_string(), a);
        make_system("hydrogen", &p)
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn params(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        if self.kind == SystemKind::Hydrogen {
            m.insert("a".to_string(), self.a);
        }
        m
    }

    pub fn point(&self, coords: &[f64]) -> PhasePoint {
        PhasePoint::new(self.kind, coords)
    }

    pub fn default_max_time(&self) -> f64 {
        match self.kind {
            SystemKind::Champagne => MAX_TIME_CHAMPAGNE,
            SystemKind::Pendulum => MAX_TIME_PENDULUM,
            SystemKind::Hydrogen => MAX_TIME_HYDROGEN,
            SystemKind::FocusFocus => MAX_TIME_FOCUS_FOCUS,
        }
    }

    pub fn h_raw(&self, x: &Vec6) -> f64 {
        match self.kind {
            SystemKind::Champagne => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                0.5 * (x[2] * x[2] + x[3] * x[3]) + r2 * r2 - r2
            }
            SystemKind::Pendulum => 0.5 * (x[3] * x[3] + x[4] * x[4] + x[5] * x[5]) + x[2],
            SystemKind::Hydrogen => self.a * x[2] + x[0] * x[4] - x[1] * x[3],
            SystemKind::FocusFocus => x[0] * x[2] - x[1] * x[3],
        }
    }

    pub fn j_raw(&self, x: &Vec6) -> f64 {
        match self.kind {
            SystemKind::Champagne => x[0] * x[3] - x[1] * x[2],
            SystemKind::Pendulum => x[0] * x[4] - x[1] * x[3],
            SystemKind::Hydrogen => x[2] + x[5],
            SystemKind::FocusFocus => {
                0.5 * (x[0] * x[0] + x[1] * x[1]) - 0.5 * (x[2] * x[2] + x[3] * x[3])
            }
        }
    }

    pub fn h(&self, p: &PhasePoint) -> f64 {
        self.h_raw(&p.coords)
    }

    pub fn j(&self, p: &PhasePoint) -> f64 {
        self.j_raw(&p.coords)
    }

    /// `F(p)` without the constraint check.
    pub fn f_raw(&self, x: &Vec6) -> EMValue {
        EMValue::new(self.h_raw(x), self.j_raw(x))
    }

    pub fn eval_f(&self, p: &PhasePoint) -> Result<EMValue> {
        let residual = self.constraint_residual(&p.coords);
        if residual > CONSTRAINT_TOL {
            return Err(Error::ConstraintViolation { residual });
        }
        Ok(self.f_raw(&p.coords))
    }

    pub fn constraint_residual(&self, x: &Vec6) -> f64 {
        match self.kind {
            SystemKind::Champagne | SystemKind::FocusFocus => 0.0,
            SystemKind::Pendulum => {
                let qq = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                let qp = x[0] * x[3] + x[1] * x[4] + x[2] * x[5];
                (qq - 1.0).abs().max(qp.abs())
            }
            SystemKind::Hydrogen => {
                let xx = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                let yy = x[3] * x[3] + x[4] * x[4] + x[5] * x[5];
                (xx - 1.0).abs().max((yy - 1.0).abs())
            }
        }
    }

    /// Pull a point back onto the constraint manifold (identity for flat systems).
    pub fn project(&self, x: &mut Vec6) {
        match self.kind {
            SystemKind::Champagne | SystemKind::FocusFocus => {}
            SystemKind::Pendulum => {
                let n = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                for c in x.iter_mut().take(3) {
                    *c /= n;
                }
                let qp = x[0] * x[3] + x[1] * x[4] + x[2] * x[5];
                for i in 0..3 {
                    x[3 + i] -= qp * x[i];
                }
            }
            SystemKind::Hydrogen => {
                let nx = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                let ny = (x[3] * x[3] + x[4] * x[4] + x[5] * x[5]).sqrt();
                for i in 0..3 {
                    x[i] /= nx;
                    x[3 + i] /= ny;
                }
            }
        }
    }

    /// Hamiltonian vector field of `H` or `J` in ambient coordinates.
    pub fn field_raw(&self, which: FieldId, x: &Vec6) -> Vec6 {
        match (self.kind, which) {
            (SystemKind::Champagne, FieldId::H) => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                let g = 4.0 * r2 - 2.0;
                [x[2], x[3], -g * x[0], -g * x[1], 0.0, 0.0]
            }
            (SystemKind::Champagne, FieldId::J) => [-x[1], x[0], -x[3], x[2], 0.0, 0.0],
            (SystemKind::Pendulum, FieldId::H) => {
                let qq = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                let pp = x[3] * x[3] + x[4] * x[4] + x[5] * x[5];
                let lambda = (x[2] - pp) / qq;
                [
                    x[3],
                    x[4],
                    x[5],
                    lambda * x[0],
                    lambda * x[1],
                    lambda * x[2] - 1.0,
                ]
            }
            (SystemKind::Pendulum, FieldId::J) => [-x[1], x[0], 0.0, -x[4], x[3], 0.0],
            (SystemKind::Hydrogen, FieldId::H) => {
                let xs = [x[0], x[1], x[2]];
                let ys = [x[3], x[4], x[5]];
                let dx = cross([ys[1], -ys[0], self.a], xs);
                let dy = cross([-xs[1], xs[0], 0.0], ys);
                [dx[0], dx[1], dx[2], dy[0], dy[1], dy[2]]
            }
            (SystemKind::Hydrogen, FieldId::J) => [-x[1], x[0], 0.0, -x[4], x[3], 0.0],
            (SystemKind::FocusFocus, FieldId::H) => [-x[3], -x[2], -x[1], -x[0], 0.0, 0.0],
            (SystemKind::FocusFocus, FieldId::J) => [x[1], -x[0], -x[3], x[2], 0.0, 0.0],
        }
    }

    pub fn hamiltonian_field(&self, which: FieldId, p: &PhasePoint) -> Vec6 {
        self.field_raw(which, &p.coords)
    }

    pub fn circle_flow_raw(&self, x: &Vec6, t: f64) -> Vec6 {
        let (s, c) = t.sin_cos();
        let mut y = *x;
        match self.kind {
            SystemKind::Champagne => {
                (y[0], y[1]) = rot(c, s, x[0], x[1]);
                (y[2], y[3]) = rot(c, s, x[2], x[3]);
            }
            SystemKind::Pendulum | SystemKind::Hydrogen => {
                (y[0], y[1]) = rot(c, s, x[0], x[1]);
                (y[3], y[4]) = rot(c, s, x[3], x[4]);
            }
            SystemKind::FocusFocus => {
                // q1 + i p1 turns clockwise, q2 + i p2 counterclockwise.
                (y[0], y[1]) = rot(c, -s, x[0], x[1]);
                (y[2], y[3]) = rot(c, s, x[2], x[3]);
            }
        }
        y
    }

    /// Exact time-`t` flow of `X_J`.
    pub fn circle_flow_exact(&self, p: &PhasePoint, t: f64) -> PhasePoint {
        PhasePoint::from_vec(self.kind, self.circle_flow_raw(&p.coords, t))
    }

    /// Two complex coordinates that transform as `z -> e^{it} z` under the
    /// circle flow. The first one vanishes exactly on the polar set of the
    /// standard rotation form.
    pub fn circle_coords(&self, x: &Vec6) -> [Complex64; 2] {
        match self.kind {
            SystemKind::Champagne => [Complex64::new(x[0], x[1]), Complex64::new(x[2], x[3])],
            SystemKind::Pendulum | SystemKind::Hydrogen => {
                [Complex64::new(x[0], x[1]), Complex64::new(x[3], x[4])]
            }
            SystemKind::FocusFocus => [Complex64::new(x[0], -x[1]), Complex64::new(x[2], x[3])],
        }
    }

    /// Circle-invariant pair used to detect a return to the circle orbit of a point.
    pub fn return_invariants(&self, x: &Vec6) -> [f64; 2] {
        match self.kind {
            SystemKind::Champagne => [x[0] * x[0] + x[1] * x[1], x[0] * x[2] + x[1] * x[3]],
            SystemKind::Pendulum => [x[2], x[5]],
            SystemKind::Hydrogen => [x[2], x[0] * x[3] + x[1] * x[4]],
            SystemKind::FocusFocus => [x[0] * x[0] + x[1] * x[1], x[2] * x[2] + x[3] * x[3]],
        }
    }

    /// Fixed points of the circle action.
    pub fn fixed_points(&self) -> Vec<PhasePoint> {
        let k = self.kind;
        match k {
            SystemKind::Champagne | SystemKind::FocusFocus => vec![PhasePoint::new(k, &[0.0; 4])],
            SystemKind::Pendulum => vec![
                PhasePoint::new(k, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]),
                PhasePoint::new(k, &[0.0, 0.0, -1.0, 0.0, 0.0, 0.0]),
            ],
            SystemKind::Hydrogen => {
                let mut v = Vec::new();
                for sx in [1.0, -1.0] {
                    for sy in [1.0, -1.0] {
                        v.push(PhasePoint::new(k, &[0.0, 0.0, sx, 0.0, 0.0, sy]));
                    }
                }
                v
            }
        }
    }

    /// Isolated critical values: images of the fixed points with their type.
    pub fn critical_values(&self) -> Vec<CriticalValue> {
        let cv = |h, j, kind| CriticalValue { value: EMValue::new(h, j), kind };
        match self.kind {
            SystemKind::Champagne => vec![cv(0.0, 0.0, "focus-focus")],
            SystemKind::Pendulum => vec![cv(1.0, 0.0, "focus-focus"), cv(-1.0, 0.0, "elliptic")],
            SystemKind::Hydrogen => {
                let a = self.a;
                vec![
                    cv(a, 0.0, "focus-focus"),
                    cv(-a, 0.0, "focus-focus"),
                    cv(a, 2.0, "elliptic"),
                    cv(-a, -2.0, "elliptic"),
                ]
            }
            SystemKind::FocusFocus => vec![cv(0.0, 0.0, "focus-focus")],
        }
    }

    pub fn focus_focus_values(&self) -> Vec<EMValue> {
        self.critical_values()
            .into_iter()
            .filter(|c| c.kind == "focus-focus")
            .map(|c| c.value)
            .collect()
    }

    /// Human-readable description of where `fiber_point` succeeds.
    pub fn admissible_region(&self) -> &'static str {
        match self.kind {
            SystemKind::Champagne => "h > min_r (j^2/(2 r^2) + r^4 - r^2), (h, j) != (0, 0)",
            SystemKind::Pendulum => "2(h - z)(1 - z^2) > j^2 for some z in (-1, 1), (h, j) != (1, 0)",
            SystemKind::Hydrogen => {
                "|j| < 2 and h = a x3 +- sqrt(1 - x3^2) sqrt(1 - (j - x3)^2) solvable, not a critical value"
            }
            SystemKind::FocusFocus => "all (h, j); the section sigma(j, h) is exact",
        }
    }

    fn check_critical(&self, v: EMValue) -> Result<()> {
        for c in self.critical_values() {
            if c.value.dist(&v) < 1e-12 {
                return Err(Error::CriticalValue { h: v.h, j: v.j });
            }
        }
        Ok(())
    }

    fn not_solvable(&self, v: EMValue) -> Error {
        Error::NotSolvable { h: v.h, j: v.j, region: self.admissible_region().to_string() }
    }

    /// All points the seed family produces on the fiber over `v`.
    pub fn fiber_candidates(&self, v: EMValue) -> Result<Vec<PhasePoint>> {
        if !(v.h.is_finite() && v.j.is_finite()) {
            return Err(Error::InvalidParameter("non-finite value".into()));
        }
        self.check_critical(v)?;
        let pts = match self.kind {
            SystemKind::Champagne => self.champagne_candidates(v)?,
            SystemKind::Pendulum => self.pendulum_candidates(v)?,
            SystemKind::Hydrogen => self.hydrogen_candidates(v)?,
            SystemKind::FocusFocus => vec![crate::local_ff::ff_section(v.j, v.h)],
        };
        let good: Vec<PhasePoint> = pts
            .into_iter()
            .filter(|p| {
                let f = self.f_raw(&p.coords);
                (f.h - v.h).abs() <= FIBER_TOL * (1.0 + v.h.abs())
                    && (f.j - v.j).abs() <= FIBER_TOL * (1.0 + v.j.abs())
                    && self.constraint_residual(&p.coords) <= 1e-12
            })
            .collect();
        if good.is_empty() {
            return Err(self.not_solvable(v));
        }
        Ok(good)
    }

    /// A point on the fiber over `v`, as far from the standard polar set as the seed family allows.
    pub fn fiber_point(&self, v: EMValue) -> Result<PhasePoint> {
        let c = self.fiber_candidates(v)?;
        let polar = |p: &PhasePoint| self.circle_coords(&p.coords)[0].norm();
        Ok(c.into_iter()
            .fold(None::<PhasePoint>, |best, p| match best {
                Some(b) if polar(&b) >= polar(&p) => Some(b),
                _ => Some(p),
            })
            .expect("nonempty"))
    }

    /// The candidate on the fiber over `v` closest to `seed` (section continuation).
    pub fn fiber_point_near(&self, v: EMValue, seed: &PhasePoint) -> Result<PhasePoint> {
        let c = self.fiber_candidates(v)?;
        Ok(c.into_iter()
            .fold(None::<PhasePoint>, |best, p| match best {
                Some(b) if b.distance(seed) <= p.distance(seed) => Some(b),
                _ => Some(p),
            })
            .expect("nonempty"))
    }

    fn champagne_candidates(&self, v: EMValue) -> Result<Vec<PhasePoint>> {
        let (h, j) = (v.h, v.j);
        let u = |x: f64| j * j / (2.0 * x * x) + x.powi(4) - x * x;
        // minimum of the effective radial potential, y = x^2 >= 1/2
        let ystar = if j == 0.0 {
            0.5
        } else {
            let g = |y: f64| 4.0 * y * y * y - 2.0 * y * y - j * j;
            brent(g, 0.5, 1.0 + (j * j).cbrt(), 1e-15).ok_or_else(|| self.not_solvable(v))?
        };
        let xstar = ystar.sqrt();
        if h <= u(xstar) + 1e-12 {
            return Err(self.not_solvable(v));
        }
        let f = |x: f64| u(x) - h;
        let mut hi = 2.0_f64.max(xstar * 2.0);
        while f(hi) <= 0.0 {
            hi *= 2.0;
        }
        let mut roots = vec![brent(f, xstar, hi, 1e-15).ok_or_else(|| self.not_solvable(v))?];
        let inner = if j != 0.0 {
            let mut lo = xstar / 2.0;
            while f(lo) <= 0.0 {
                lo /= 2.0;
            }
            brent(f, lo, xstar, 1e-15)
        } else if h < 0.0 {
            Some(((1.0 - (1.0 + 4.0 * h).sqrt()) / 2.0).sqrt())
        } else {
            None
        };
        roots.extend(inner);
        Ok(roots
            .into_iter()
            .map(|x| PhasePoint::new(SystemKind::Champagne, &[x, 0.0, 0.0, j / x]))
            .collect())
    }

    fn pendulum_point(z: f64, a: f64, j: f64) -> PhasePoint {
        let st = (1.0 - z * z).sqrt();
        // q = (sin t, 0, cos t), p = a e_theta + (j / sin t) e_phi
        PhasePoint::new(
            SystemKind::Pendulum,
            &[st, 0.0, z, a * z, j / st, -a * st],
        )
    }

    fn pendulum_candidates(&self, v: EMValue) -> Result<Vec<PhasePoint>> {
        let (h, j) = (v.h, v.j);
        let k = |z: f64| 2.0 * (h - z) * (1.0 - z * z) - j * j;
        let (zl, zr) = if j == 0.0 {
            if h <= -1.0 {
                return Err(self.not_solvable(v));
            }
            (-1.0, h.min(1.0))
        } else {
            let r = sampled_roots(k, -1.0, 1.0, 2000);
            if r.len() < 2 {
                return Err(self.not_solvable(v));
            }
            (r[0], r[r.len() - 1])
        };
        if zr - zl < 1e-10 {
            return Err(Error::CriticalValue { h, j });
        }
        let mut zs = vec![0.0_f64.clamp(zl, zr)];
        for z in [zl, zr] {
            if 1.0 - z * z > 1e-6 && (z - zs[0]).abs() > 1e-9 {
                zs.push(z);
            }
        }
        let mut out = Vec::new();
        for z in zs {
            let a2 = 2.0 * (h - z) - j * j / (1.0 - z * z);
            let a = a2.max(0.0).sqrt();
            out.push(Self::pendulum_point(z, a, j));
            if a > 0.0 {
                out.push(Self::pendulum_point(z, -a, j));
            }
        }
        Ok(out)
    }

    fn hydrogen_candidates(&self, v: EMValue) -> Result<Vec<PhasePoint>> {
        let (h, j) = (v.h, v.j);
        let lo = (-1.0_f64).max(j - 1.0);
        let hi = 1.0_f64.min(j + 1.0);
        if hi - lo < 1e-12 {
            return Err(self.not_solvable(v));
        }
        let rho = |x3: f64| {
            let y3 = j - x3;
            ((1.0 - x3 * x3).max(0.0) * (1.0 - y3 * y3).max(0.0)).sqrt()
        };
        let mut out = Vec::new();
        for sigma in [1.0, -1.0] {
            let g = |x3: f64| self.a * x3 + sigma * rho(x3) - h;
            for x3 in sampled_roots(g, lo, hi, 4000) {
                let y3 = j - x3;
                let rx = (1.0 - x3 * x3).max(0.0).sqrt();
                let ry = (1.0 - y3 * y3).max(0.0).sqrt();
                out.push(PhasePoint::new(
                    SystemKind::Hydrogen,
                    &[rx, 0.0, x3, 0.0, sigma * ry, y3],
                ));
            }
        }
        if out.is_empty() {
            return Err(self.not_solvable(v));
        }
        Ok(out)
    }

    /// Reference point used for sign normalization of rotation forms.
    pub fn reference_point(&self) -> PhasePoint {
        match self.kind {
            SystemKind::Champagne => self.point(&[1.0, 0.0, 0.0, 0.3]),
            SystemKind::Pendulum => self.point(&[1.0, 0.0, 0.0, 0.0, 0.5, 0.0]),
            SystemKind::Hydrogen => {
                self.point(&[FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2, 0.0, 1.0, 0.0])
            }
            SystemKind::FocusFocus => self.point(&[1.0, 0.0, 0.5, 0.0]),
        }
    }
}
