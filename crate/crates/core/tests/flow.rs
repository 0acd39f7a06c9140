use std::f64::consts::{PI, TAU};

use monodromy_core::error::EventFailure;
use monodromy_core::flow::{integrate, integrate_until, Direction, EventSpec};
use monodromy_core::local_ff::{ff_section, h_flow};
use monodromy_core::rotation::first_return;
use monodromy_core::systems::Vec6;
use monodromy_core::{EMValue, Error, FieldId, IntegrableSystem, IntegratorConfig, NumericsConfig, SystemKind};

fn dist(a: &Vec6, b: &Vec6) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn fixtures() -> Vec<(IntegrableSystem, EMValue)> {
    vec![
        (IntegrableSystem::new(SystemKind::Champagne), EMValue::new(0.5, 0.2)),
        (IntegrableSystem::new(SystemKind::Pendulum), EMValue::new(1.2, 0.1)),
        (IntegrableSystem::hydrogen(1.0).unwrap(), EMValue::new(0.3, 0.4)),
        (IntegrableSystem::new(SystemKind::FocusFocus), EMValue::new(0.2, -0.1)),
    ]
}

#[test]
fn focus_focus_h_flow_matches_closed_form() {
    let s = IntegrableSystem::new(SystemKind::FocusFocus);
    let p = s.point(&[0.3, -0.7, 0.2, 0.5]);
    let cfg = IntegratorConfig::default();
    let seg = integrate(&s, FieldId::H, &p, 1.0, &cfg).unwrap();
    assert!(dist(&seg.end_point().coords, &h_flow(&p.coords, 1.0)) <= 1e-9);
    for t in [-3.0, -1.5, 2.0, 3.0] {
        let seg = integrate(&s, FieldId::H, &p, t, &cfg).unwrap();
        let e = dist(&seg.end_point().coords, &h_flow(&p.coords, t));
        assert!(e <= 1e-10 * (1.0 + p.norm_sq().sqrt() * t.abs().exp()), "t = {t}: {e:e}");
    }
}

#[test]
fn circle_field_has_period_two_pi() {
    let cfg = IntegratorConfig::default();
    for (s, v) in fixtures() {
        let p = s.fiber_point(v).unwrap();
        let seg = integrate(&s, FieldId::J, &p, TAU, &cfg).unwrap();
        assert!(dist(&seg.end_point().coords, &p.coords) <= 1e-9, "{}", s.name());
    }
}

#[test]
fn pendulum_drift_is_small() {
    let s = IntegrableSystem::new(SystemKind::Pendulum);
    let p = s.fiber_point(EMValue::new(1.2, 0.1)).unwrap();
    let seg = integrate(&s, FieldId::H, &p, 10.0, &IntegratorConfig::default()).unwrap();
    assert!(seg.drift.max_dev() <= 1e-9, "{:e}", seg.drift.max_dev());
    assert!(seg.drift.max_constraint <= 1e-9);
}

#[test]
fn segments_are_time_ordered_and_interpolate_nodes() {
    let s = IntegrableSystem::new(SystemKind::Champagne);
    let p = s.fiber_point(EMValue::new(0.5, 0.2)).unwrap();
    let seg = integrate(&s, FieldId::H, &p, 5.0, &IntegratorConfig::default()).unwrap();
    let st = seg.states();
    assert!(st.windows(2).all(|w| w[1].0 > w[0].0));
    assert_eq!(st[0].1.coords, p.coords);
    // the dense output at the node joining two steps is continuous
    for k in 1..seg.steps().len() {
        let a = seg.steps()[k - 1].eval(seg.steps()[k].tau0);
        let b = seg.steps()[k].eval(seg.steps()[k].tau0);
        assert!(dist(&a, &b) <= 1e-14);
    }
}

#[test]
fn backward_segments_run_in_negative_time() {
    let s = IntegrableSystem::new(SystemKind::FocusFocus);
    let p = ff_section(0.1, 0.2);
    let seg = integrate(&s, FieldId::H, &p, -2.0, &IntegratorConfig::default()).unwrap();
    assert_eq!(seg.t_end(), -2.0);
    assert!(dist(&seg.end_point().coords, &h_flow(&p.coords, -2.0)) <= 1e-9);
    assert!(dist(&seg.eval(-1.0).coords, &h_flow(&p.coords, -1.0)) <= 1e-9);
}

#[test]
fn dense_output_matches_reintegration_at_midpoints() {
    let cfg = IntegratorConfig::default();
    let tight = IntegratorConfig { rel_tol: 1e-13, abs_tol: 1e-13, event_refine_tol: 1e-14, ..cfg };
    for (s, v) in fixtures() {
        let p = s.fiber_point(v).unwrap();
        let seg = integrate(&s, FieldId::H, &p, 3.0, &cfg).unwrap();
        for st in seg.steps().iter().step_by(3) {
            let tm = st.tau0 + 0.5 * st.h;
            let re = integrate(&s, FieldId::H, &p, tm, &tight).unwrap().end_point();
            let e = dist(&seg.eval(tm).coords, &re.coords);
            assert!(e <= 10.0 * cfg.abs_tol * (1.0 + p.norm_sq().sqrt()), "{} at {tm}: {e:e}", s.name());
        }
    }
}

#[test]
fn champagne_return_event() {
    let s = IntegrableSystem::new(SystemKind::Champagne);
    let p = s.fiber_point(EMValue::new(0.5, 0.2)).unwrap();
    let rec = first_return(&s, &p, &NumericsConfig::default()).unwrap();
    assert!(rec.t_return > 0.0);
    let a = s.return_invariants(&p.coords);
    let b = s.return_invariants(&rec.return_point.coords);
    assert!((a[0] - b[0]).abs() <= 1e-8 && (a[1] - b[1]).abs() <= 1e-8);
}

#[test]
fn focus_focus_ball_exit_matches_closed_form() {
    // along the orbit through sigma(j, h), |x|^2 = E + l^2 / E with E = e^{2t}
    let s = IntegrableSystem::new(SystemKind::FocusFocus);
    let (h, j, r) = (0.05, -0.08, 1.0);
    let p = ff_section(j, h);
    let l2 = h * h + j * j;
    let ep = r + (r * r - l2).sqrt();
    let g = move |y: &Vec6| y[0] * y[0] + y[1] * y[1] + y[2] * y[2] + y[3] * y[3] - 2.0 * r;
    let ev = EventSpec::root(g, Direction::Rising, 1);
    let (_, t) = integrate_until(&s, FieldId::H, &p, &ev, &IntegratorConfig::default()).unwrap();
    assert!((t - 0.5 * ep.ln()).abs() <= 1e-9, "{t} vs {}", 0.5 * ep.ln());
}

#[test]
fn occurrence_count_includes_a_zero_at_the_start() {
    let s = IntegrableSystem::new(SystemKind::FocusFocus);
    let p = s.point(&[1.0, 0.0, 0.5, 0.0]);
    // p1 vanishes at t = 0, pi, 2 pi along the circle flow
    let ev = EventSpec::root(|y: &Vec6| y[1], Direction::Any, 2);
    let (seg, t) = integrate_until(&s, FieldId::J, &p, &ev, &IntegratorConfig::default()).unwrap();
    assert!((t - PI).abs() <= 1e-10, "{t}");
    assert!((seg.end_point().coords[1]).abs() <= 1e-12);
}

#[test]
fn event_failures_are_distinguished() {
    let s = IntegrableSystem::new(SystemKind::FocusFocus);
    let p = ff_section(0.3, 0.4);
    let never = EventSpec::root(|_: &Vec6| 1.0, Direction::Any, 1);
    let cfg = IntegratorConfig { max_time: Some(3.0), ..IntegratorConfig::default() };
    match integrate_until(&s, FieldId::H, &p, &never, &cfg) {
        Err(Error::EventNotFound { reason, .. }) => assert_eq!(reason, EventFailure::TimeBudget),
        other => panic!("{other:?}"),
    }
    let cfg = IntegratorConfig { max_time: Some(100.0), ..IntegratorConfig::default() };
    let never = EventSpec::root(|_: &Vec6| 1.0, Direction::Any, 1);
    match integrate_until(&s, FieldId::H, &p, &never, &cfg) {
        Err(Error::EventNotFound { reason, .. }) => assert_eq!(reason, EventFailure::Escaped),
        other => panic!("{other:?}"),
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = IntegratorConfig { rel_tol: -1.0, ..IntegratorConfig::default() };
    assert!(bad.validate().is_err());
    let bad = IntegratorConfig { event_refine_tol: 1e-6, ..IntegratorConfig::default() };
    assert!(bad.validate().is_err());
}

#[test]
fn event_time_converges_under_tolerance_halving() {
    let base = NumericsConfig::default();
    let mut half = base;
    half.integrator.rel_tol *= 0.5;
    half.integrator.abs_tol *= 0.5;
    for (s, v) in fixtures().into_iter().take(3) {
        let p = s.fiber_point(v).unwrap();
        let a = first_return(&s, &p, &base).unwrap().t_return;
        let b = first_return(&s, &p, &half).unwrap().t_return;
        assert!(
            (a - b).abs() < 10.0 * base.integrator.event_refine_tol,
            "{}: {a} vs {b} ({:e})",
            s.name(),
            (a - b).abs()
        );
    }
}
