use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use approx::assert_abs_diff_eq;
use monodromy_core::forms::standard_form;
use monodromy_core::systems::{make_system, Vec6};
use monodromy_core::{EMValue, Error, FieldId, IntegrableSystem, SystemKind};
use proptest::prelude::*;

fn sys(k: SystemKind) -> IntegrableSystem {
    IntegrableSystem::new(k)
}

fn all() -> Vec<IntegrableSystem> {
    vec![
        sys(SystemKind::Champagne),
        sys(SystemKind::Pendulum),
        IntegrableSystem::hydrogen(1.0).unwrap(),
        sys(SystemKind::FocusFocus),
    ]
}

/// A point on the phase space of `s` built from six free numbers.
fn on_manifold(s: &IntegrableSystem, r: [f64; 6]) -> Vec6 {
    let mut x = r;
    if s.dim() == 4 {
        x[4] = 0.0;
        x[5] = 0.0;
    }
    if s.kind == SystemKind::Pendulum && x[0].abs() + x[1].abs() + x[2].abs() < 0.1 {
        x[2] = 1.0;
    }
    if s.kind == SystemKind::Hydrogen {
        if x[0].abs() + x[1].abs() + x[2].abs() < 0.1 {
            x[0] = 1.0;
        }
        if x[3].abs() + x[4].abs() + x[5].abs() < 0.1 {
            x[5] = 1.0;
        }
    }
    s.project(&mut x);
    x
}

fn directional(f: impl Fn(&Vec6) -> f64, x: &Vec6, v: &Vec6) -> f64 {
    let e = 1e-6;
    let mut a = *x;
    let mut b = *x;
    for i in 0..6 {
        a[i] += e * v[i];
        b[i] -= e * v[i];
    }
    (f(&a) - f(&b)) / (2.0 * e)
}

#[test]
fn champagne_potential_is_quartic_minus_quadratic() {
    let s = make_system("champagne", &BTreeMap::new()).unwrap();
    for r in [0.0, 0.3, 0.7, 1.0, 1.4] {
        let v = s.h_raw(&[r * 0.6, r * 0.8, 0.0, 0.0, 0.0, 0.0]);
        assert_abs_diff_eq!(v, r.powi(4) - r * r, epsilon = 1e-14);
    }
}

#[test]
fn hydrogen_toy_hamiltonian() {
    let mut p = BTreeMap::new();
    p.insert("a".to_string(), 1.0);
    let s = make_system("hydrogen", &p).unwrap();
    let x = [0.6, 0.0, 0.8, 0.0, 1.0, 0.0];
    // H = x3 + x1 y2 - x2 y1
    assert_abs_diff_eq!(s.h_raw(&x), 0.8 + 0.6, epsilon = 1e-15);
    assert_abs_diff_eq!(s.j_raw(&x), 0.8, epsilon = 1e-15);
}

#[test]
fn focus_focus_momentum_is_oscillator_difference() {
    let s = make_system("focus-focus", &BTreeMap::new()).unwrap();
    let x = [0.3, -0.2, 0.5, 0.7, 0.0, 0.0];
    let j = 0.5 * (0.09 + 0.04) - 0.5 * (0.25 + 0.49);
    assert_abs_diff_eq!(s.j_raw(&x), j, epsilon = 1e-15);
    assert_abs_diff_eq!(s.h_raw(&x), 0.3 * 0.5 - (-0.2) * 0.7, epsilon = 1e-15);
}

#[test]
fn make_system_rejects_bad_input() {
    assert!(matches!(make_system("top", &BTreeMap::new()), Err(Error::UnknownSystem(_))));
    assert!(matches!(IntegrableSystem::hydrogen(0.0), Err(Error::InvalidParameter(_))));
    let mut p = BTreeMap::new();
    p.insert("a".to_string(), 2.0);
    assert!(matches!(make_system("champagne", &p), Err(Error::InvalidParameter(_))));
}

#[test]
fn eval_f_examples() {
    let c = sys(SystemKind::Champagne);
    let v = c.eval_f(&c.point(&[0.0; 4])).unwrap();
    assert_eq!((v.h, v.j), (0.0, 0.0));
    let v = c.eval_f(&c.point(&[1.0, 0.0, 0.0, 0.0])).unwrap();
    assert_abs_diff_eq!(v.h, 0.0, epsilon = 1e-15);
    assert_abs_diff_eq!(v.j, 0.0, epsilon = 1e-15);
    let p = sys(SystemKind::Pendulum);
    let v = p.eval_f(&p.point(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0])).unwrap();
    assert_eq!((v.h, v.j), (1.0, 0.0));
}

#[test]
fn eval_f_refuses_points_off_the_manifold() {
    let p = sys(SystemKind::Pendulum);
    let r = p.eval_f(&p.point(&[0.0, 0.0, 1.1, 0.0, 0.0, 0.0]));
    assert!(matches!(r, Err(Error::ConstraintViolation { .. })));
    let h = IntegrableSystem::hydrogen(1.0).unwrap();
    let r = h.eval_f(&h.point(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.5]));
    assert!(matches!(r, Err(Error::ConstraintViolation { .. })));
}

#[test]
fn focus_focus_h_field_at_unit_q1() {
    let s = sys(SystemKind::FocusFocus);
    // storage order (q1, p1, q2, p2); H = q1 q2 - p1 p2
    let v = s.hamiltonian_field(FieldId::H, &s.point(&[1.0, 0.0, 0.0, 0.0]));
    assert_eq!(v[0], 0.0);
    assert_eq!(v[1], 0.0);
    assert_eq!(v[2], 0.0);
    assert_eq!(v[3].abs(), 1.0);
}

#[test]
fn champagne_circle_generator_rotates_both_planes() {
    let s = sys(SystemKind::Champagne);
    let p = s.point(&[1.0, 0.0, 0.0, 0.0]);
    let v = s.hamiltonian_field(FieldId::J, &p);
    assert_eq!(v[..4], [0.0, 1.0, 0.0, 0.0]);
    let f = standard_form(&s);
    assert_abs_diff_eq!(f.eval(&p, &v), 1.0, epsilon = 1e-15);
}

#[test]
fn circle_generator_vanishes_exactly_at_fixed_points() {
    for s in all() {
        for p in s.fixed_points() {
            let v = s.hamiltonian_field(FieldId::J, &p);
            assert!(v.iter().all(|c| *c == 0.0), "{} {:?}", s.name(), p);
        }
    }
}

#[test]
fn circle_generator_is_nonzero_off_fixed_points() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for s in all() {
        for _ in 0..500 {
            let r: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-1.5..1.5));
            let x = on_manifold(&s, r);
            let dmin = s.fixed_points().iter().map(|p| p.distance(&s.point(&x[..s.dim()]))).fold(f64::MAX, f64::min);
            let n = s.field_raw(FieldId::J, &x).iter().map(|c| c * c).sum::<f64>().sqrt();
            if dmin > 1e-3 {
                assert!(n > 0.0, "{} at {:?}", s.name(), x);
            }
        }
    }
}

#[test]
fn circle_flow_examples() {
    for s in all() {
        let x = on_manifold(&s, [0.3, -0.4, 0.5, 0.2, -0.6, 0.1]);
        let once = s.circle_flow_raw(&x, TAU);
        let zero = s.circle_flow_raw(&x, 0.0);
        for i in 0..6 {
            assert_abs_diff_eq!(once[i], x[i], epsilon = 1e-14);
            assert_eq!(zero[i], x[i]);
        }
    }
    let c = sys(SystemKind::Champagne);
    let y = c.circle_flow_exact(&c.point(&[1.0, 0.0, 0.0, 0.0]), PI);
    assert_abs_diff_eq!(y.coords[0], -1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(y.coords[1], 0.0, epsilon = 1e-15);
}

#[test]
fn champagne_reflection_negates_momentum() {
    let c = sys(SystemKind::Champagne);
    let x = [0.4, -0.3, 0.2, 0.9, 0.0, 0.0];
    // (q1, q2, p1, p2) -> (q1, -q2, p1, -p2)
    let y = [0.4, 0.3, 0.2, -0.9, 0.0, 0.0];
    assert_eq!(c.h_raw(&x), c.h_raw(&y));
    assert_eq!(c.j_raw(&x), -c.j_raw(&y));
}

#[test]
fn hamiltonians_poisson_commute_pointwise() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for s in all() {
        for _ in 0..200 {
            let r: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-1.2..1.2));
            let x = on_manifold(&s, r);
            let xh = s.field_raw(FieldId::H, &x);
            let xj = s.field_raw(FieldId::J, &x);
            let scale = 1.0 + x.iter().map(|c| c * c).sum::<f64>();
            assert!(directional(|y| s.j_raw(y), &x, &xh).abs() < 1e-7 * scale.powi(2), "{}", s.name());
            assert!(directional(|y| s.h_raw(y), &x, &xj).abs() < 1e-7 * scale.powi(2), "{}", s.name());
        }
    }
}

#[test]
fn constrained_fields_are_tangent() {
    let p = sys(SystemKind::Pendulum);
    let x = on_manifold(&p, [0.3, 0.5, 0.8, 0.7, -0.2, 0.4]);
    let v = p.field_raw(FieldId::H, &x);
    // d/dt |q|^2 and d/dt q.p
    let dqq = 2.0 * (x[0] * v[0] + x[1] * v[1] + x[2] * v[2]);
    let dqp = (0..3).map(|i| v[i] * x[3 + i] + x[i] * v[3 + i]).sum::<f64>();
    assert_abs_diff_eq!(dqq, 0.0, epsilon = 1e-14);
    assert_abs_diff_eq!(dqp, 0.0, epsilon = 1e-14);
    let h = IntegrableSystem::hydrogen(1.0).unwrap();
    let x = on_manifold(&h, [0.3, 0.5, 0.8, 0.7, -0.2, 0.4]);
    let v = h.field_raw(FieldId::H, &x);
    assert_abs_diff_eq!((0..3).map(|i| x[i] * v[i]).sum::<f64>(), 0.0, epsilon = 1e-14);
    assert_abs_diff_eq!((3..6).map(|i| x[i] * v[i]).sum::<f64>(), 0.0, epsilon = 1e-14);
}

#[test]
fn focus_focus_section_is_the_fiber_point() {
    let s = sys(SystemKind::FocusFocus);
    let p = s.fiber_point(EMValue::new(-0.4, 0.3)).unwrap();
    let r = FRAC_1_SQRT_2;
    let want = [1.3 * r, -0.4 * r, -0.4 * r, -0.7 * r];
    for i in 0..4 {
        assert_abs_diff_eq!(p.coords[i], want[i], epsilon = 1e-15);
    }
    let f = s.eval_f(&p).unwrap();
    assert_abs_diff_eq!(f.h, -0.4, epsilon = 1e-15);
    assert_abs_diff_eq!(f.j, 0.3, epsilon = 1e-15);
}

#[test]
fn champagne_fiber_point_residual() {
    let s = sys(SystemKind::Champagne);
    let p = s.fiber_point(EMValue::new(0.5, 0.2)).unwrap();
    let f = s.eval_f(&p).unwrap();
    assert!((f.h - 0.5).abs() <= 1e-10 && (f.j - 0.2).abs() <= 1e-10);
}

#[test]
fn pendulum_fiber_point_has_polar_ansatz_form() {
    let s = sys(SystemKind::Pendulum);
    let v = EMValue::new(1.2, 0.1);
    let p = s.fiber_point(v).unwrap();
    let x = p.coords;
    let f = s.eval_f(&p).unwrap();
    assert!((f.h - 1.2).abs() <= 1e-10 && (f.j - 0.1).abs() <= 1e-10);
    // q = (sin t, 0, cos t); p = a (cos t, 0, -sin t) + (j / sin t) (0, 1, 0)
    assert_eq!(x[1], 0.0);
    let (st, ct) = (x[0], x[2]);
    assert_abs_diff_eq!(st * st + ct * ct, 1.0, epsilon = 1e-14);
    assert_abs_diff_eq!(x[4], 0.1 / st, epsilon = 1e-14);
    assert_abs_diff_eq!(x[3] * st + x[5] * ct, 0.0, epsilon = 1e-14);
}

#[test]
fn fiber_point_errors() {
    let c = sys(SystemKind::Champagne);
    assert!(matches!(c.fiber_point(EMValue::new(0.0, 0.0)), Err(Error::CriticalValue { .. })));
    assert!(matches!(c.fiber_point(EMValue::new(-1.0, 0.0)), Err(Error::NotSolvable { .. })));
    let p = sys(SystemKind::Pendulum);
    assert!(matches!(p.fiber_point(EMValue::new(1.0, 0.0)), Err(Error::CriticalValue { .. })));
    assert!(matches!(p.fiber_point(EMValue::new(-2.0, 0.0)), Err(Error::NotSolvable { .. })));
    let h = IntegrableSystem::hydrogen(1.0).unwrap();
    assert!(matches!(h.fiber_point(EMValue::new(0.0, 2.5)), Err(Error::NotSolvable { .. })));
}

#[test]
fn hydrogen_polar_orbits_lie_on_the_derived_circles() {
    // on Pi_+- with x = (0, 0, +-1): y3 = j -+ 1, y1^2 + y2^2 = 1 - (j -+ 1)^2
    let h = IntegrableSystem::hydrogen(1.0).unwrap();
    let form = standard_form(&h);
    for br in form.polar_branches() {
        let j = if br.name == "plus" { 0.6 } else { -0.6 };
        let v = if br.fixed_j { EMValue::new(0.0, br.level) } else { EMValue::new(br.level, j) };
        let p = form.polar_representative(&br, v).unwrap();
        let x = p.coords;
        let sgn = if br.name == "plus" { 1.0 } else { -1.0 };
        assert_abs_diff_eq!(x[2], sgn, epsilon = 1e-14);
        assert_abs_diff_eq!(x[5], j - sgn, epsilon = 1e-12);
        assert_abs_diff_eq!(x[3] * x[3] + x[4] * x[4], 1.0 - (j - sgn).powi(2), epsilon = 1e-12);
        let f = h.f_raw(&x);
        assert_abs_diff_eq!(f.h, v.h, epsilon = 1e-12);
        assert_abs_diff_eq!(f.j, v.j, epsilon = 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn circle_flow_is_a_group_action_conserving_f(
        r in proptest::array::uniform6(-1.5f64..1.5), s in -7.0f64..7.0, t in -7.0f64..7.0, which in 0usize..4
    ) {
        let sy = all()[which];
        let x = on_manifold(&sy, r);
        let a = sy.circle_flow_raw(&sy.circle_flow_raw(&x, s), t);
        let b = sy.circle_flow_raw(&x, s + t);
        for i in 0..6 {
            prop_assert!((a[i] - b[i]).abs() <= 1e-13);
        }
        let (f0, f1) = (sy.f_raw(&x), sy.f_raw(&b));
        prop_assert!((f0.j - f1.j).abs() <= 1e-13);
        prop_assert!((f0.h - f1.h).abs() <= 1e-13);
    }

    #[test]
    fn champagne_fiber_points_solve_f(h in 0.3f64..2.0, j in -0.8f64..0.8) {
        let c = sys(SystemKind::Champagne);
        let p = c.fiber_point(EMValue::new(h, j)).unwrap();
        let f = c.f_raw(&p.coords);
        prop_assert!((f.h - h).abs() <= 1e-10 && (f.j - j).abs() <= 1e-10);
    }

    #[test]
    fn pendulum_fiber_points_solve_f(h in -0.5f64..2.5, j in -0.3f64..0.3) {
        prop_assume!(EMValue::new(h, j).dist(&EMValue::new(1.0, 0.0)) > 1e-3);
        let p = sys(SystemKind::Pendulum);
        if let Ok(q) = p.fiber_point(EMValue::new(h, j)) {
            let f = p.f_raw(&q.coords);
            prop_assert!((f.h - h).abs() <= 1e-10 && (f.j - j).abs() <= 1e-10);
            prop_assert!(p.constraint_residual(&q.coords) <= 1e-12);
        }
    }
}
