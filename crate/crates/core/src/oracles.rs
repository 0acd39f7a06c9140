//! Closed-form and one-dimensional-quadrature reference values, independent of
//! the orbit integrator. Used by tests and by the CLI self-checks.

use std::f64::consts::PI;

use crate::quadrature;

fn brent(f: impl FnMut(f64) -> f64, a: f64, b: f64) -> Option<f64> {
    let mut conv = roots::SimpleConvergency { eps: 1e-15, max_iter: 300 };
    roots::find_root_brent(a, b, f, &mut conv).ok()
}

fn sign_changes(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut x0 = lo;
    let mut f0 = f(lo);
    for i in 1..=n {
        let x1 = lo + (hi - lo) * i as f64 / n as f64;
        let f1 = f(x1);
        if f0 * f1 < 0.0 {
            if let Some(r) = brent(f, x0, x1) {
                out.push(r);
            }
        }
        x0 = x1;
        f0 = f1;
    }
    out
}

/// Azimuthal advance of the spherical pendulum over one period of `z = q3`,
/// `2j int dz / ((1 - z^2) sqrt(2(h - z)(1 - z^2) - j^2))` between the turning points,
/// reduced to `[0, 2pi)`. `None` if `(h, j)` is outside the image or `j = 0`.
pub fn pendulum_theta(h: f64, j: f64) -> Option<f64> {
    if j == 0.0 {
        return None;
    }
    let k = |z: f64| 2.0 * (h - z) * (1.0 - z * z) - j * j;
    let r = sign_changes(&k, -1.0, 1.0, 4000);
    if r.len() != 2 {
        return None;
    }
    let (zm, zp) = (r[0], r[1]);
    // K = 2 (z - zm)(zp - z)(z3 - z), roots sum to h
    let z3 = h - zm - zp;
    let (c, d) = (0.5 * (zp + zm), 0.5 * (zp - zm));
    let mut f = |phi: f64| {
        let z = c + d * phi.cos();
        1.0 / ((1.0 - z * z) * (2.0 * (z3 - z)).sqrt())
    };
    let (v, _) = quadrature::integrate(&mut f, 0.0, PI, 1e-14).ok()?;
    Some(crate::rotation::reduce_angle(2.0 * j * v))
}

/// Rotation number of the champagne bottle from the radial quadrature
/// `2j int dr / (r^2 sqrt(2(h - V(r)) - j^2/r^2))`, reduced to `[0, 2pi)`.
pub fn champagne_theta(h: f64, j: f64) -> Option<f64> {
    if j == 0.0 {
        return None;
    }
    // with u = r^2: j int du / (u sqrt(P)), P = -2u^3 + 2u^2 + 2hu - j^2
    let p = |u: f64| -2.0 * u * u * u + 2.0 * u * u + 2.0 * h * u - j * j;
    let hi = 2.0 + h.abs().sqrt() + 1.0;
    let r = sign_changes(&p, 1e-12, hi, 8000);
    if r.len() != 2 {
        return None;
    }
    let (um, up) = (r[0], r[1]);
    // P = 2 (u - um)(up - u)(u - u3), roots sum to 1
    let u3 = 1.0 - um - up;
    let (c, d) = (0.5 * (up + um), 0.5 * (up - um));
    let mut f = |phi: f64| {
        let u = c + d * phi.cos();
        1.0 / (u * (2.0 * (u - u3)).sqrt())
    };
    let (v, _) = quadrature::integrate(&mut f, 0.0, PI, 1e-14).ok()?;
    Some(crate::rotation::reduce_angle(j * v))
}

/// Ball entry and exit values `E = e^{2v}` of the fiber over `(h, j)`.
pub fn ff_ball_levels(h: f64, j: f64, r: f64) -> Option<(f64, f64)> {
    let l2 = h * h + j * j;
    if l2 >= r * r {
        return None;
    }
    let s = (r * r - l2).sqrt();
    Some((r - s, r + s))
}

/// `Phi_rel` of `d theta_1` inside the ball `|x|^2 < 2r`:
/// `atan2(h, w_-) - atan2(h, w_+)` with `w = E + j` at entry and exit.
pub fn ff_phi_rel(h: f64, j: f64, r: f64) -> Option<f64> {
    let (em, ep) = ff_ball_levels(h, j, r)?;
    Some(h.atan2(em + j) - h.atan2(ep + j))
}

/// `Theta_m` of the scattering construction: circle angle from `sigma_{+m}` to
/// the end of the `X_H` orbit started at `sigma_{-m}`.
pub fn scattering_theta(m: f64, h: f64, j: f64) -> f64 {
    let r = (j * j + h * h + m * m).sqrt();
    let (em, ep) = (r - m, r + m);
    let a = h.atan2(em + j) - h.atan2(ep + j);
    crate::rotation::reduce_angle(a)
}

/// Integral of the chart form `(h dw - w dh)/(h^2 + w^2)` around a positively
/// oriented circle of radius `rho` about `(w, h) = (0, 0)`.
pub fn chart_residue(rho: f64) -> f64 {
    let mut f = |phi: f64| {
        let (s, c) = phi.sin_cos();
        let (w, h) = (rho * c, rho * s);
        let (dw, dh) = (-rho * s, rho * c);
        (h * dw - w * dh) / (h * h + w * w)
    };
    let br: Vec<f64> = (0..=8).map(|i| 2.0 * PI * i as f64 / 8.0).collect();
    quadrature::integrate_breaks(&mut f, &br, 1e-13).map(|r| r.0).unwrap_or(f64::NAN)
}
