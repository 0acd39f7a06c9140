//! Loops of regular values, the variation of `Theta` and `Phi` along them, and
//! the residue computation of the monodromy number.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::flow_to;
use crate::forms::{line_integral, PhaseLoop, RotationForm};
use crate::rotation::{first_return, phi_from_record, reduce_angle};
use crate::systems::{EMValue, FieldId, IntegrableSystem, PhasePoint, Vec6};
use crate::tolerances::{
    NumericsConfig, INTEGERNESS_TOL, JUMP_MULTIPLE_FRACTION, JUMP_THRESHOLD, MIN_SAMPLES, RESIDUE_FRACTION,
    TRANSVERSAL_ANGLE,
};

/// Geometry of a loop in the `(h, j)` plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum LoopShape {
    Circle { center: EMValue, radius: f64 },
    Ellipse { center: EMValue, semi_h: f64, semi_j: f64 },
    /// Vertices in counterclockwise order, each edge getting an equal share of `s`.
    Polygon { vertices: Vec<EMValue> },
}

/// A closed path `Gamma(s)`, `s` in `[0, 1]`, counterclockwise with `j` on the
/// horizontal and `h` on the vertical axis. Circles and ellipses start at the
/// point of largest `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopPath {
    #[serde(flatten)]
    pub shape: LoopShape,
}

impl LoopPath {
    pub fn circle(center: EMValue, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidLoop(format!("radius must be positive, got {radius}")));
        }
        Ok(Self { shape: LoopShape::Circle { center, radius } })
    }

    pub fn ellipse(center: EMValue, semi_h: f64, semi_j: f64) -> Result<Self> {
        if !(semi_h > 0.0 && semi_j > 0.0 && semi_h.is_finite() && semi_j.is_finite()) {
            return Err(Error::InvalidLoop("ellipse semi-axes must be positive".into()));
        }
        Ok(Self { shape: LoopShape::Ellipse { center, semi_h, semi_j } })
    }

    pub fn polygon(vertices: Vec<EMValue>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidLoop("a polygon needs at least 3 vertices".into()));
        }
        let n = vertices.len();
        let area: f64 = (0..n)
            .map(|i| {
                let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                a.j * b.h - b.j * a.h
            })
            .sum();
        if area <= 0.0 {
            return Err(Error::InvalidLoop(
                "polygon vertices must run counterclockwise (j horizontal, h vertical)".into(),
            ));
        }
        Ok(Self { shape: LoopShape::Polygon { vertices } })
    }

    pub fn at(&self, s: f64) -> EMValue {
        let s = s.rem_euclid(1.0);
        match &self.shape {
            LoopShape::Circle { center, radius } => {
                let (sn, cs) = (TAU * s).sin_cos();
                EMValue::new(center.h + radius * sn, center.j + radius * cs)
            }
            LoopShape::Ellipse { center, semi_h, semi_j } => {
                let (sn, cs) = (TAU * s).sin_cos();
                EMValue::new(center.h + semi_h * sn, center.j + semi_j * cs)
            }
            LoopShape::Polygon { vertices } => {
                let n = vertices.len();
                let x = s * n as f64;
                let i = (x.floor() as usize).min(n - 1);
                let f = x - i as f64;
                let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                EMValue::new(a.h + f * (b.h - a.h), a.j + f * (b.j - a.j))
            }
        }
    }

    /// `dGamma/ds` as `(dh, dj)`.
    pub fn tangent(&self, s: f64) -> (f64, f64) {
        let s = s.rem_euclid(1.0);
        match &self.shape {
            LoopShape::Circle { radius, .. } => {
                let (sn, cs) = (TAU * s).sin_cos();
                (TAU * radius * cs, -TAU * radius * sn)
            }
            LoopShape::Ellipse { semi_h, semi_j, .. } => {
                let (sn, cs) = (TAU * s).sin_cos();
                (TAU * semi_h * cs, -TAU * semi_j * sn)
            }
            LoopShape::Polygon { vertices } => {
                let n = vertices.len();
                let i = ((s * n as f64).floor() as usize).min(n - 1);
                let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                (n as f64 * (b.h - a.h), n as f64 * (b.j - a.j))
            }
        }
    }

    /// Winding number about `v`, counted positive counterclockwise.
    pub fn winding_about(&self, v: EMValue) -> i64 {
        let n = 4096;
        let mut total = 0.0;
        let ang = |p: EMValue| (p.h - v.h).atan2(p.j - v.j);
        let mut prev = ang(self.at(0.0));
        for i in 1..=n {
            let a = ang(self.at(i as f64 / n as f64));
            let mut d = a - prev;
            if d > PI {
                d -= TAU;
            } else if d < -PI {
                d += TAU;
            }
            total += d;
            prev = a;
        }
        (total / TAU).round() as i64
    }

    pub fn describe(&self) -> String {
        match &self.shape {
            LoopShape::Circle { center, radius } => {
                format!("circle center (h, j) = ({}, {}) radius {}", center.h, center.j, radius)
            }
            LoopShape::Ellipse { center, semi_h, semi_j } => format!(
                "ellipse center (h, j) = ({}, {}) semi-axes h {} j {}",
                center.h, center.j, semi_h, semi_j
            ),
            LoopShape::Polygon { vertices } => format!("polygon with {} vertices", vertices.len()),
        }
    }

    /// Center of a circle or ellipse; vertex mean of a polygon.
    pub fn center(&self) -> EMValue {
        match &self.shape {
            LoopShape::Circle { center, .. } | LoopShape::Ellipse { center, .. } => *center,
            LoopShape::Polygon { vertices } => {
                let n = vertices.len() as f64;
                EMValue::new(vertices.iter().map(|v| v.h).sum::<f64>() / n, vertices.iter().map(|v| v.j).sum::<f64>() / n)
            }
        }
    }

    /// The same shape translated to `center`.
    pub fn recentered(&self, center: EMValue) -> Result<Self> {
        let c0 = self.center();
        match &self.shape {
            LoopShape::Circle { radius, .. } => Self::circle(center, *radius),
            LoopShape::Ellipse { semi_h, semi_j, .. } => Self::ellipse(center, *semi_h, *semi_j),
            LoopShape::Polygon { vertices } => Self::polygon(
                vertices.iter().map(|v| EMValue::new(v.h - c0.h + center.h, v.j - c0.j + center.j)).collect(),
            ),
        }
    }

    /// Largest `|Gamma(s)|`.
    pub fn max_norm(&self) -> f64 {
        (0..1024).map(|i| self.at(i as f64 / 1024.0)).map(|v| v.h.hypot(v.j)).fold(0.0, f64::max)
    }

    /// Reject loops that touch a critical value or wind around one more than once.
    pub fn validate(&self, sys: &IntegrableSystem) -> Result<()> {
        for c in sys.critical_values() {
            let w = self.winding_about(c.value);
            if !(w == 0 || w == 1) {
                return Err(Error::InvalidLoop(format!(
                    "loop winds {w} times about the critical value ({}, {})",
                    c.value.h, c.value.j
                )));
            }
            let n = 4096;
            for i in 0..n {
                let v = self.at(i as f64 / n as f64);
                if v.dist(&c.value) < 1e-9 {
                    return Err(Error::CriticalValue { h: v.h, j: v.j });
                }
            }
        }
        Ok(())
    }

    /// Critical values enclosed by the loop.
    pub fn enclosed(&self, sys: &IntegrableSystem) -> Vec<EMValue> {
        sys.critical_values().into_iter().filter(|c| self.winding_about(c.value) != 0).map(|c| c.value).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Variation,
    Residues,
    Both,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "variation" => Ok(Method::Variation),
            "residues" => Ok(Method::Residues),
            "both" => Ok(Method::Both),
            _ => Err(Error::InvalidParameter(format!(
                "unknown method `{s}` (expected variation, residues or both)"
            ))),
        }
    }

    fn variation(self) -> bool {
        self != Method::Residues
    }

    fn residues(self) -> bool {
        self != Method::Variation
    }
}

/// The values sampled at one loop parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplePoint {
    pub s: f64,
    pub h: f64,
    pub j: f64,
    pub theta: Option<f64>,
    /// `None` where the fiber meets the polar set.
    pub phi: Option<f64>,
    pub max_drift: f64,
}

impl SamplePoint {
    /// `(Phi - Theta) mod 2pi` where both are defined.
    pub fn defect(&self) -> Option<f64> {
        Some(reduce_angle(self.phi? - self.theta?))
    }
}

/// Something that can be evaluated along a loop: the compact-fiber rotation
/// data, the relative integral near a focus-focus point, or the scattering numbers.
pub trait LoopFunctions: Sync {
    fn loop_path(&self) -> &LoopPath;
    fn eval(&self, s: f64) -> Result<SamplePoint>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Jump {
    pub s: f64,
    /// Bracketing interval of loop parameters.
    pub lo: f64,
    pub hi: f64,
    /// Right limit minus left limit.
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariationSeries {
    pub n: usize,
    pub samples: Vec<SamplePoint>,
    pub theta_jumps: Vec<Jump>,
    pub phi_jumps: Vec<Jump>,
    pub var_theta: Option<f64>,
    pub var_phi: Option<f64>,
}

#[derive(Clone, Copy)]
enum Component {
    Theta,
    Phi,
}

impl Component {
    fn get(self, p: &SamplePoint) -> Option<f64> {
        match self {
            Component::Theta => p.theta,
            Component::Phi => p.phi,
        }
    }
}

/// Evaluate at `s`, nudging once by `nudge` if the value is critical or unreachable.
fn eval_nudged(f: &dyn LoopFunctions, s: f64, nudge: f64) -> Result<SamplePoint> {
    match f.eval(s) {
        Err(Error::CriticalValue { .. }) | Err(Error::NotSolvable { .. }) => f.eval(s + nudge),
        other => other,
    }
}

struct Refiner<'a> {
    f: &'a dyn LoopFunctions,
    c: Component,
    min_width: f64,
    extra: Vec<SamplePoint>,
}

impl Refiner<'_> {
    fn eval(&mut self, s: f64) -> Result<SamplePoint> {
        let p = eval_nudged(self.f, s, 0.5 * self.min_width)?;
        self.extra.push(p);
        Ok(p)
    }

    /// Last defined point moving from `good` (defined) toward `bad` (undefined).
    fn edge(&mut self, mut good: SamplePoint, mut bad_s: f64) -> Result<SamplePoint> {
        while (bad_s - good.s).abs() > self.min_width {
            let m = 0.5 * (good.s + bad_s);
            let p = self.eval(m)?;
            if self.c.get(&p).is_some() {
                good = p;
            } else {
                bad_s = m;
            }
        }
        Ok(good)
    }

    fn refine(&mut self, a: SamplePoint, b: SamplePoint, out: &mut Vec<(SamplePoint, SamplePoint)>) -> Result<()> {
        let (ga, gb) = (self.c.get(&a).unwrap(), self.c.get(&b).unwrap());
        if b.s - a.s <= self.min_width * 1.000001 {
            if (gb - ga).abs() > JUMP_THRESHOLD {
                out.push((a, b));
            }
            return Ok(());
        }
        let m = self.eval(0.5 * (a.s + b.s))?;
        match self.c.get(&m) {
            Some(gm) => {
                if (gm - ga).abs() > JUMP_THRESHOLD {
                    self.refine(a, m, out)?;
                }
                if (gb - gm).abs() > JUMP_THRESHOLD {
                    self.refine(m, b, out)?;
                }
                Ok(())
            }
            None => {
                // undefined zone: bracket it from both sides and stop there
                let l = self.edge(a, m.s)?;
                let r = self.edge(b, m.s)?;
                let (gl, gr) = (self.c.get(&l).unwrap(), self.c.get(&r).unwrap());
                if (gr - gl).abs() > JUMP_THRESHOLD {
                    out.push((l, r));
                }
                Ok(())
            }
        }
    }
}

fn check_jump(s: f64, d: f64) -> Result<()> {
    let m = (d / TAU).round();
    if m == 0.0 || (d - TAU * m).abs() > JUMP_MULTIPLE_FRACTION * TAU {
        return Err(Error::JumpNotResolvable { s, d });
    }
    Ok(())
}

/// One-sided limits by linear extrapolation from the neighbouring samples.
fn jump_size(f: &dyn LoopFunctions, c: Component, l: &SamplePoint, r: &SamplePoint, w: f64) -> Result<f64> {
    let (gl, gr) = (c.get(l).unwrap(), c.get(r).unwrap());
    let raw = gr - gl;
    if r.s - l.s > 1.5 * w {
        // bracket widened by an undefined zone; the nearest defined values are used
        return Ok(raw);
    }
    let mid = 0.5 * (l.s + r.s);
    let (ll, rr) = (f.eval(l.s - w), f.eval(r.s + w));
    let left = match ll.ok().and_then(|p| c.get(&p)) {
        Some(g) if (gl - g).abs() < JUMP_THRESHOLD => gl + (gl - g) / w * (mid - l.s),
        _ => gl,
    };
    let right = match rr.ok().and_then(|p| c.get(&p)) {
        Some(g) if (g - gr).abs() < JUMP_THRESHOLD => gr - (g - gr) / w * (r.s - mid),
        _ => gr,
    };
    Ok(right - left)
}

fn find_jumps(f: &dyn LoopFunctions, c: Component, base: &[SamplePoint], n: usize) -> Result<(Vec<Jump>, Vec<SamplePoint>)> {
    let min_width = 1.0 / (8.0 * n as f64);
    let mut brackets = Vec::new();
    let mut extra = Vec::new();
    // consecutive defined samples, cyclically
    let defined: Vec<usize> = (0..base.len()).filter(|&i| c.get(&base[i]).is_some()).collect();
    if defined.is_empty() {
        return Ok((Vec::new(), extra));
    }
    let mut pairs = Vec::new();
    for (k, &i) in defined.iter().enumerate() {
        let inext = defined[(k + 1) % defined.len()];
        let a = base[i];
        let mut b = base[inext];
        if inext <= i {
            b.s += 1.0;
        }
        let gap = inext != (i + 1) % base.len();
        let (ga, gb) = (c.get(&a).unwrap(), c.get(&b).unwrap());
        if gap || (gb - ga).abs() > JUMP_THRESHOLD {
            pairs.push((a, b));
        }
    }
    let results: Vec<Result<(Vec<(SamplePoint, SamplePoint)>, Vec<SamplePoint>)>> = pairs
        .par_iter()
        .map(|(a, b)| {
            let mut r = Refiner { f, c, min_width, extra: Vec::new() };
            let mut out = Vec::new();
            r.refine(*a, *b, &mut out)?;
            Ok((out, r.extra))
        })
        .collect();
    for r in results {
        let (b, e) = r?;
        brackets.extend(b);
        extra.extend(e);
    }
    let jumps: Vec<Result<Jump>> = brackets
        .par_iter()
        .map(|(l, r)| {
            let d = jump_size(f, c, l, r, min_width)?;
            let s = (0.5 * (l.s + r.s)).rem_euclid(1.0);
            check_jump(s, d)?;
            Ok(Jump { s, lo: l.s, hi: r.s, d })
        })
        .collect();
    let mut jumps = jumps.into_iter().collect::<Result<Vec<_>>>()?;
    jumps.sort_by(|a, b| a.s.total_cmp(&b.s));
    Ok((jumps, extra))
}

/// Sample `f` at `n` equally spaced loop parameters and locate the jumps of `Theta` and `Phi`.
pub fn sample_series(f: &dyn LoopFunctions, n: usize) -> Result<VariationSeries> {
    if n < MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!("at least {MIN_SAMPLES} samples are required, got {n}")));
    }
    let nudge = 1.0 / (16.0 * n as f64);
    let samples: Vec<Result<SamplePoint>> =
        (0..n).into_par_iter().map(|i| eval_nudged(f, i as f64 / n as f64, nudge)).collect();
    let mut samples = samples.into_iter().collect::<Result<Vec<_>>>()?;
    let has_theta = samples.iter().any(|p| p.theta.is_some());
    let has_phi = samples.iter().any(|p| p.phi.is_some());
    let (theta_jumps, e1) = if has_theta { find_jumps(f, Component::Theta, &samples, n)? } else { (vec![], vec![]) };
    let (phi_jumps, e2) = if has_phi { find_jumps(f, Component::Phi, &samples, n)? } else { (vec![], vec![]) };
    for mut p in e1.into_iter().chain(e2) {
        p.s = p.s.rem_euclid(1.0);
        samples.push(p);
    }
    samples.sort_by(|a, b| a.s.total_cmp(&b.s));
    samples.dedup_by(|a, b| (a.s - b.s).abs() < 1e-15);
    let var = |j: &[Jump]| -j.iter().map(|x| x.d).sum::<f64>();
    Ok(VariationSeries {
        n,
        var_theta: has_theta.then(|| var(&theta_jumps)),
        var_phi: has_phi.then(|| var(&phi_jumps)),
        samples,
        theta_jumps,
        phi_jumps,
    })
}

/// `var g = -sum of jumps` for a function sampled on a loop, with jumps
/// detected between adjacent samples (no refinement).
pub fn variation(samples: &[(f64, f64)]) -> Result<(f64, Vec<Jump>)> {
    let n = samples.len();
    let mut jumps = Vec::new();
    for i in 0..n {
        let (sa, ga) = samples[i];
        let (mut sb, gb) = samples[(i + 1) % n];
        if i + 1 == n {
            sb += 1.0;
        }
        let d = gb - ga;
        if d.abs() > JUMP_THRESHOLD {
            let s = (0.5 * (sa + sb)).rem_euclid(1.0);
            check_jump(s, d)?;
            jumps.push(Jump { s, lo: sa, hi: sb, d });
        }
    }
    Ok((-jumps.iter().map(|j| j.d).sum::<f64>(), jumps))
}

/// `k = round(-var / 2pi)`, refusing estimates far from an integer.
pub fn k_from_variation(var: f64) -> Result<(i64, f64)> {
    let x = -var / TAU;
    let k = x.round();
    let resid = (x - k).abs();
    if resid > INTEGERNESS_TOL {
        return Err(Error::NotInteger { value: x });
    }
    Ok((k as i64, resid))
}

/// Rotation data of compact fibers along a loop.
pub struct CompactFunctions<'a> {
    pub system: IntegrableSystem,
    pub form: RotationForm,
    pub path: &'a LoopPath,
    pub cfg: NumericsConfig,
}

impl LoopFunctions for CompactFunctions<'_> {
    fn loop_path(&self) -> &LoopPath {
        self.path
    }

    fn eval(&self, s: f64) -> Result<SamplePoint> {
        let v = self.path.at(s);
        let p = self.system.fiber_point(v)?;
        let rec = first_return(&self.system, &p, &self.cfg)?;
        let phi = match phi_from_record(&self.form, &rec, &self.cfg) {
            Ok(x) => Some(x),
            Err(Error::FiberMeetsPolarLocus { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(SamplePoint {
            s,
            h: v.h,
            j: v.j,
            theta: Some(rec.theta),
            phi,
            max_drift: rec.orbit.drift.max_dev(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolarOrbit {
    pub branch: &'static str,
    pub point: PhasePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolarCrossing {
    pub s: f64,
    pub v: EMValue,
    pub polar_orbits: Vec<PolarOrbit>,
    /// Sign of the rate at which the loop crosses the polar image line.
    pub crossing_sign: i32,
    /// Angle between the loop and the polar image, radians.
    pub angle: f64,
}

/// All crossings of `Gamma` with `F(Pi)`, with their polar orbit representatives.
pub fn polar_crossings(form: &RotationForm, path: &LoopPath) -> Result<Vec<PolarCrossing>> {
    let n = 4096;
    let mut found: Vec<PolarCrossing> = Vec::new();
    for br in form.polar_branches() {
        let off = |s: f64| br.split(path.at(s)).1;
        let mut s0 = 0.0;
        let mut g0 = off(0.0);
        for i in 1..=n {
            let s1 = i as f64 / n as f64;
            let g1 = off(s1);
            let root = if g0 == 0.0 {
                Some(s0)
            } else if g0 * g1 < 0.0 {
                let mut conv = roots::SimpleConvergency { eps: 1e-15, max_iter: 200 };
                roots::find_root_brent(s0, s1, off, &mut conv).ok()
            } else {
                None
            };
            if let Some(s) = root {
                let v = path.at(s);
                let (along, _) = br.split(v);
                if along >= br.lo - 1e-12 && along <= br.hi + 1e-12 {
                    let (dh, dj) = path.tangent(s);
                    let (d_along, d_off) = if br.fixed_j { (dh, dj) } else { (dj, dh) };
                    let angle = d_off.abs().atan2(d_along.abs());
                    if angle < TRANSVERSAL_ANGLE {
                        return Err(Error::TangentialCrossing { s });
                    }
                    let orbit = PolarOrbit { branch: br.name, point: form.polar_representative(&br, v)? };
                    let sign = if d_off > 0.0 { 1 } else { -1 };
                    if let Some(c) = found.iter_mut().find(|c| (c.s - s).abs() < 1e-9) {
                        c.polar_orbits.push(orbit);
                    } else {
                        found.push(PolarCrossing { s, v, polar_orbits: vec![orbit], crossing_sign: sign, angle });
                    }
                }
            }
            s0 = s1;
            g0 = g1;
        }
    }
    found.sort_by(|a, b| a.s.total_cmp(&b.s));
    Ok(found)
}

/// The cylinder of `X_H` orbit segments over a loop, as needed by the residue engine.
pub trait Cylinder: Sync {
    fn form(&self) -> &RotationForm;
    fn loop_path(&self) -> &LoopPath;
    /// Section point over `Gamma(s)`, continued from `seed` when given.
    fn section(&self, s: f64, seed: Option<&PhasePoint>) -> Result<PhasePoint>;
    /// Time window of the cylinder orbit through `base` and the local minima
    /// `(t, x)` of the polar distance along it.
    fn polar_minima(&self, base: &PhasePoint) -> Result<(f64, f64, Vec<(f64, Vec6)>)>;
    /// `phi_H^t(base)`.
    fn flow(&self, base: &PhasePoint, t: f64) -> Result<Vec6>;
}

/// Cylinder of first-return segments of a compact system.
pub struct CompactCylinder<'a> {
    pub system: IntegrableSystem,
    pub form: RotationForm,
    pub path: &'a LoopPath,
    pub cfg: NumericsConfig,
}

impl Cylinder for CompactCylinder<'_> {
    fn form(&self) -> &RotationForm {
        &self.form
    }
    fn loop_path(&self) -> &LoopPath {
        self.path
    }
    fn section(&self, s: f64, seed: Option<&PhasePoint>) -> Result<PhasePoint> {
        let v = self.path.at(s);
        match seed {
            Some(p) => self.system.fiber_point_near(v, p),
            None => self.system.fiber_point(v),
        }
    }
    fn polar_minima(&self, base: &PhasePoint) -> Result<(f64, f64, Vec<(f64, Vec6)>)> {
        let rec = first_return(&self.system, base, &self.cfg)?;
        let form = self.form;
        let mins = rec.orbit.local_minima(&|x: &Vec6| form.polar_distance(x).powi(2), 8);
        let pts = mins.into_iter().map(|(t, _)| (t, rec.orbit.eval(t).coords)).collect();
        Ok((0.0, rec.t_return, pts))
    }
    fn flow(&self, base: &PhasePoint, t: f64) -> Result<Vec6> {
        Ok(flow_to(&self.system, FieldId::H, base, t, &self.cfg.integrator)?.coords)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidueRecord {
    pub s: f64,
    pub v: EMValue,
    pub branch: &'static str,
    /// `oint_delta theta`.
    pub value: f64,
    /// Winding number of the polar coordinate along `delta`.
    pub certificate: i64,
    /// Jacobian determinant of the polar coordinate with respect to `(s, t)` at the pole.
    pub determinant: f64,
    pub t_pole: f64,
    pub delta_s: f64,
    pub delta_t: f64,
    pub min_polar_distance: f64,
    pub loop_points: usize,
}

const RESIDUE_MAX_POINTS: usize = 4096;

fn polar_coordinate(form: &RotationForm, x: &Vec6) -> (f64, f64) {
    let z = form.system.circle_coords(x)[0];
    (z.re, z.im)
}

fn winding(form: &RotationForm, pts: &[Vec6]) -> i64 {
    let n = pts.len();
    let mut total = 0.0;
    for i in 0..n {
        let a = polar_coordinate(form, &pts[i]);
        let b = polar_coordinate(form, &pts[(i + 1) % n]);
        let d = (a.0 * b.1 - a.1 * b.0).atan2(a.0 * b.0 + a.1 * b.1);
        total += d;
    }
    (total / TAU).round() as i64
}

fn dist(a: &Vec6, b: &Vec6) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Image of the `(s, t)` ellipse of radii `(ds, dt)` about `(s0, t0)`,
/// chord-refined so that no chord straddles the polar set.
fn residue_loop(
    cyl: &dyn Cylinder,
    seed: &PhasePoint,
    s0: f64,
    t0: f64,
    ds: f64,
    dt: f64,
) -> Result<Vec<Vec6>> {
    let form = cyl.form();
    let point = |phi: f64| -> Result<Vec6> {
        let (sn, cs) = phi.sin_cos();
        let base = cyl.section(s0 + ds * cs, Some(seed))?;
        cyl.flow(&base, t0 + dt * sn)
    };
    let m0 = 64;
    let phis: Vec<f64> = (0..m0).map(|k| TAU * k as f64 / m0 as f64).collect();
    let pts: Vec<Result<Vec6>> = phis.par_iter().map(|&p| point(p)).collect();
    let mut ring: Vec<(f64, Vec6)> =
        phis.into_iter().zip(pts.into_iter().collect::<Result<Vec<_>>>()?).collect();
    loop {
        let n = ring.len();
        let mut splits = Vec::new();
        for i in 0..n {
            let (pa, xa) = &ring[i];
            let (pb, xb) = &ring[(i + 1) % n];
            let limit = (0.2 * form.polar_distance(xa).min(form.polar_distance(xb))).min(0.05);
            if dist(xa, xb) > limit {
                let pb = if i + 1 == n { pb + TAU } else { *pb };
                splits.push(0.5 * (pa + pb));
            }
        }
        if splits.is_empty() || n + splits.len() > RESIDUE_MAX_POINTS {
            break;
        }
        let new: Vec<Result<Vec6>> = splits.par_iter().map(|&p| point(p)).collect();
        for (p, x) in splits.into_iter().zip(new) {
            ring.push((p, x?));
        }
        ring.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(ring.into_iter().map(|(_, x)| x).collect())
}

/// `oint_delta theta` around the polar orbit `orbit` of `crossing`.
pub fn residue(
    cyl: &dyn Cylinder,
    crossing: &PolarCrossing,
    orbit: &PolarOrbit,
    n_samples: usize,
    cfg: &NumericsConfig,
) -> Result<ResidueRecord> {
    let form = cyl.form();
    form.check_transversal()?;
    let s0 = crossing.s;
    let base = cyl.section(s0, None)?;
    let (ta, tb, minima) = cyl.polar_minima(&base)?;
    let (t0, x0) = minima
        .iter()
        .filter(|(_, x)| form.branch_of(x) == orbit.branch)
        .min_by(|a, b| form.polar_distance(&a.1).total_cmp(&form.polar_distance(&b.1)))
        .copied()
        .ok_or(Error::Certificate { s: s0, winding: 0 })?;
    let _ = x0;
    let mut ds = 1.0 / (4.0 * n_samples as f64);
    let mut dt = 0.05 * (tb - ta);
    let d0 = cfg.polar_safety;
    let mut enlarged = 0;
    let mut retried = false;
    loop {
        let pts = residue_loop(cyl, &base, s0, t0, ds, dt)?;
        let dmin = pts.iter().map(|x| form.polar_distance(x)).fold(f64::INFINITY, f64::min);
        if dmin < d0 {
            if enlarged < 3 {
                enlarged += 1;
                ds *= 2.0;
                continue;
            }
            return Err(Error::NearPole { param: s0, distance: dmin, d0 });
        }
        let w = winding(form, &pts);
        if w == 0 || w.abs() >= 2 {
            if !retried {
                retried = true;
                let f = if w == 0 { 2.0 } else { 0.5 };
                ds *= f;
                dt *= f;
                continue;
            }
            return Err(Error::Certificate { s: s0, winding: w });
        }
        let npts = pts.len();
        let lp = PhaseLoop::new(pts)?;
        let value = line_integral(form, &lp, cfg.quad_tol, d0)?;
        let m = (value / TAU).round();
        if (value - TAU * m).abs() > RESIDUE_FRACTION * TAU {
            return Err(Error::ResidueNotInteger { s: s0, value });
        }
        let determinant = pole_determinant(cyl, &base, s0, t0, ds, dt).unwrap_or(f64::NAN);
        return Ok(ResidueRecord {
            s: s0,
            v: crossing.v,
            branch: orbit.branch,
            value,
            certificate: w,
            determinant,
            t_pole: t0,
            delta_s: ds,
            delta_t: dt,
            min_polar_distance: dmin,
            loop_points: npts,
        });
    }
}

/// `det d(Re c, Im c)/d(s, t)` of the polar coordinate `c` at the pole, by central differences.
fn pole_determinant(cyl: &dyn Cylinder, seed: &PhasePoint, s0: f64, t0: f64, ds: f64, dt: f64) -> Result<f64> {
    let form = cyl.form();
    let (hs, ht) = (0.1 * ds, 0.01 * dt);
    let at = |s: f64, t: f64| -> Result<(f64, f64)> {
        let b = cyl.section(s, Some(seed))?;
        Ok(polar_coordinate(form, &cyl.flow(&b, t)?))
    };
    let (sp, sm, tp, tm) = (at(s0 + hs, t0)?, at(s0 - hs, t0)?, at(s0, t0 + ht)?, at(s0, t0 - ht)?);
    let cs = ((sp.0 - sm.0) / (2.0 * hs), (sp.1 - sm.1) / (2.0 * hs));
    let ct = ((tp.0 - tm.0) / (2.0 * ht), (tp.1 - tm.1) / (2.0 * ht));
    Ok(cs.0 * ct.1 - cs.1 * ct.0)
}

/// Sum of residues over all polar orbits of all crossings.
pub fn all_residues(
    cyl: &dyn Cylinder,
    crossings: &[PolarCrossing],
    n_samples: usize,
    cfg: &NumericsConfig,
) -> Result<Vec<ResidueRecord>> {
    let jobs: Vec<(&PolarCrossing, &PolarOrbit)> =
        crossings.iter().flat_map(|c| c.polar_orbits.iter().map(move |o| (c, o))).collect();
    let out: Vec<Result<ResidueRecord>> =
        jobs.par_iter().map(|(c, o)| residue(cyl, c, o, n_samples, cfg)).collect();
    out.into_iter().collect()
}

/// `k = round(sum / 2pi)` of the residues, with its integerness residual.
pub fn k_from_residues(residues: &[ResidueRecord]) -> Result<(i64, f64)> {
    let x = residues.iter().map(|r| r.value).sum::<f64>() / TAU;
    let k = x.round();
    let resid = (x - k).abs();
    if resid > INTEGERNESS_TOL {
        return Err(Error::NotInteger { value: x });
    }
    Ok((k as i64, resid))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonodromyReport {
    pub system: String,
    pub form: String,
    pub method: Method,
    pub samples: usize,
    pub k: i64,
    pub k_variation: Option<i64>,
    pub k_variation_phi: Option<i64>,
    pub k_residues: Option<i64>,
    pub agreement: bool,
    pub var_theta: Option<f64>,
    pub var_phi: Option<f64>,
    pub integerness_variation: Option<f64>,
    pub integerness_residues: Option<f64>,
    pub crossings: Vec<PolarCrossing>,
    pub residues: Vec<ResidueRecord>,
    pub series: Option<VariationSeries>,
    pub max_drift: f64,
}

/// Combine variation and residue results into a report, refusing disagreement.
pub fn assemble_report(
    system: &str,
    form: &RotationForm,
    method: Method,
    n: usize,
    series: Option<VariationSeries>,
    crossings: Vec<PolarCrossing>,
    residues: Vec<ResidueRecord>,
) -> Result<MonodromyReport> {
    let mut k_var = None;
    let mut k_phi = None;
    let mut int_var: Option<f64> = None;
    if let Some(ser) = &series {
        if let Some(v) = ser.var_theta {
            let (k, r) = k_from_variation(v)?;
            k_var = Some(k);
            int_var = Some(r);
        }
        if let Some(v) = ser.var_phi {
            let (k, r) = k_from_variation(v)?;
            k_phi = Some(k);
            int_var = Some(int_var.map_or(r, |x| x.max(r)));
            if let Some(kt) = k_var {
                if kt != k {
                    return Err(Error::MethodDisagreement { variation: kt, residues: k });
                }
            } else {
                k_var = Some(k);
            }
        }
    }
    let (k_res, int_res) = if method.residues() {
        let (k, r) = k_from_residues(&residues)?;
        (Some(k), Some(r))
    } else {
        (None, None)
    };
    if let (Some(a), Some(b)) = (k_var, k_res) {
        if a != b {
            return Err(Error::MethodDisagreement { variation: a, residues: b });
        }
    }
    let k = k_var.or(k_res).ok_or_else(|| Error::InvalidParameter("no method produced a result".into()))?;
    let max_drift = series.as_ref().map_or(0.0, |s| s.samples.iter().map(|p| p.max_drift).fold(0.0, f64::max));
    Ok(MonodromyReport {
        system: system.to_string(),
        form: form.name(),
        method,
        samples: n,
        k,
        k_variation: k_var,
        k_variation_phi: k_phi,
        k_residues: k_res,
        agreement: k_var.is_none() || k_res.is_none() || k_var == k_res,
        var_theta: series.as_ref().and_then(|s| s.var_theta),
        var_phi: series.as_ref().and_then(|s| s.var_phi),
        integerness_variation: int_var,
        integerness_residues: int_res,
        crossings,
        residues,
        series,
        max_drift,
    })
}

/// Monodromy number of a compact system along `path`.
pub fn monodromy_number(
    sys: &IntegrableSystem,
    form: &RotationForm,
    path: &LoopPath,
    method: Method,
    n: usize,
    cfg: &NumericsConfig,
) -> Result<MonodromyReport> {
    if sys.kind == crate::systems::SystemKind::FocusFocus {
        return Err(Error::NotCompact(sys.name().to_string()));
    }
    path.validate(sys)?;
    let series = if method.variation() {
        let f = CompactFunctions { system: *sys, form: *form, path, cfg: *cfg };
        Some(sample_series(&f, n)?)
    } else {
        None
    };
    let crossings = polar_crossings(form, path)?;
    let residues = if method.residues() {
        let cyl = CompactCylinder { system: *sys, form: *form, path, cfg: *cfg };
        all_residues(&cyl, &crossings, n, cfg)?
    } else {
        Vec::new()
    };
    assemble_report(sys.name(), form, method, n, series, crossings, residues)
}
