//! End-to-end acceptance run: one PASS/FAIL line per criterion, then a single assertion.

use std::f64::consts::TAU;
use std::time::{Duration, Instant};

use monodromy_core::flow::integrate;
use monodromy_core::forms::{form_diagnostics, standard_form, SampleSpec};
use monodromy_core::local_ff::{du_control, ff_local_monodromy, BallSpec};
use monodromy_core::monodromy::monodromy_number;
use monodromy_core::oracles::{champagne_theta, pendulum_theta};
use monodromy_core::rotation::first_return;
use monodromy_core::scattering::{noncompact_monodromy, ScatteringConfig};
use monodromy_core::{
    EMValue, FieldId, IntegrableSystem, LoopPath, Method, MonodromyReport, NumericsConfig, PhasePoint, SystemKind,
};
use serde_json::Value;

const RESIDUE_TOL: f64 = 0.02 * TAU;
const INTEGERNESS: f64 = 0.02;
const N: usize = 256;

struct Verdict {
    ok: bool,
    detail: String,
}

fn check(ok: bool, detail: String) -> Verdict {
    Verdict { ok, detail }
}

fn near(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn champagne() -> IntegrableSystem {
    IntegrableSystem::new(SystemKind::Champagne)
}
fn pendulum() -> IntegrableSystem {
    IntegrableSystem::new(SystemKind::Pendulum)
}
fn hydrogen() -> IntegrableSystem {
    IntegrableSystem::hydrogen(1.0).unwrap()
}
fn origin() -> EMValue {
    EMValue::new(0.0, 0.0)
}
fn champagne_loop() -> LoopPath {
    LoopPath::circle(origin(), 0.15).unwrap()
}
fn pendulum_loop() -> LoopPath {
    LoopPath::circle(EMValue::new(1.0, 0.0), 0.2).unwrap()
}
fn hydrogen_loop() -> LoopPath {
    LoopPath::ellipse(origin(), 1.15, 0.3).unwrap()
}

fn both(sys: &IntegrableSystem, path: &LoopPath, n: usize, cfg: &NumericsConfig) -> MonodromyReport {
    monodromy_number(sys, &standard_form(sys), path, Method::Both, n, cfg).unwrap()
}

fn residues_of(r: &MonodromyReport) -> Vec<f64> {
    r.residues.iter().map(|x| x.value).collect()
}

fn criterion_1() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("champagne.json");
    let code = monodromy_cli::run([
        "monodromy",
        "monodromy",
        "--preset",
        "paper-champagne",
        "--method",
        "both",
        "--samples",
        "256",
        "--out",
        out.to_str().unwrap(),
    ]);
    if code != 0 {
        return check(false, format!("exit code {code}"));
    }
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let res: Vec<f64> = r["residues"].as_array().unwrap().iter().map(|x| x["value"].as_f64().unwrap()).collect();
    let int_of = |m: &str| r["integerness_residual"][m].as_f64().unwrap_or(f64::INFINITY);
    let int = int_of("variation").max(int_of("residues"));
    let ok = r["k"] == -1
        && r["k_variation"] == -1
        && r["k_residues"] == -1
        && r["agreement"] == true
        && int <= INTEGERNESS
        && res.len() == 1
        && near(res[0], -TAU, RESIDUE_TOL);
    check(ok, format!("k = {}, residues {:?}, integerness {:.2e}", r["k"], res, int))
}

fn criterion_2() -> Verdict {
    let r = both(&pendulum(), &pendulum_loop(), N, &NumericsConfig::default());
    let mut res = residues_of(&r);
    res.sort_by(f64::total_cmp);
    let shape = res.len() == 3
        && near(res[0], -TAU, RESIDUE_TOL)
        && near(res[1], -TAU, RESIDUE_TOL)
        && near(res[2], TAU, RESIDUE_TOL);
    // the pair on the branch away from the focus-focus value
    let far: Vec<f64> = r.residues.iter().filter(|x| x.branch == "minus").map(|x| x.value).collect();
    let cancel = far.len() == 2 && (far[0] + far[1]).abs() <= RESIDUE_TOL;
    let ok = r.k == -1 && r.agreement && shape && cancel;
    check(ok, format!("k = {}, residues {:?}, far pair sum {:.2e}", r.k, res, far.iter().sum::<f64>()))
}

fn criterion_3() -> Verdict {
    let r = both(&hydrogen(), &hydrogen_loop(), N, &NumericsConfig::default());
    let res = residues_of(&r);
    let ok = r.k == -2 && r.agreement && res.len() == 2 && res.iter().all(|x| near(*x, -TAU, RESIDUE_TOL));
    check(ok, format!("k = {}, residues {:?}", r.k, res))
}

fn criterion_4() -> Verdict {
    let cfg = NumericsConfig::default();
    let path = LoopPath::circle(origin(), 0.1).unwrap();
    let a = ff_local_monodromy(&path, BallSpec::new(1.0).unwrap(), N, &cfg).unwrap();
    let b = ff_local_monodromy(&path, BallSpec::new(2.0).unwrap(), N, &cfg).unwrap();
    let ok = near(a.var_phi_rel, TAU, RESIDUE_TOL)
        && near(a.chart_residue_oracle, -TAU, 1e-6)
        && near(a.chart_residue, -TAU, 1e-6)
        && a.report.k == -1
        && b.report.k == -1;
    check(
        ok,
        format!(
            "var Phi_rel = {:.6}, chart residue {:.10} (oracle {:.10}), k = {}, doubled-ball k = {}",
            a.var_phi_rel, a.chart_residue, a.chart_residue_oracle, a.report.k, b.report.k
        ),
    )
}

fn criterion_5() -> Verdict {
    let cfg = ScatteringConfig::ladder(0.5).unwrap();
    let r = noncompact_monodromy(&cfg, &NumericsConfig::default()).unwrap();
    let vars: Vec<f64> = r.rungs.iter().map(|x| x.var_phi).collect();
    let m16: f64 = r.probes.iter().map(|p| p.deviation).fold(0.0, f64::max);
    let ok = r.rungs.len() == 4
        && vars.iter().all(|v| near(*v, TAU, RESIDUE_TOL))
        && r.rungs.iter().all(|x| x.k == -1)
        && r.k == -1
        && r.probes.len() == 8
        && m16 <= 1e-3;
    check(ok, format!("var Phi_m {vars:.4?}, k = {}, max |Theta_16 - arg(j+ih)| = {m16:.2e}", r.k))
}

fn fiber_points(s: &IntegrableSystem, p: &PhasePoint, cfg: &NumericsConfig) -> Vec<PhasePoint> {
    (1..=5)
        .map(|k| {
            let q = integrate(s, FieldId::H, p, 0.41 * k as f64, &cfg.integrator).unwrap().end_point();
            PhasePoint::from_vec(s.kind, s.circle_flow_raw(&q.coords, 0.9 * k as f64))
        })
        .collect()
}

fn circ(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn criterion_6() -> Verdict {
    let cfg = NumericsConfig::default();
    let systems = [champagne(), pendulum(), hydrogen(), IntegrableSystem::new(SystemKind::FocusFocus)];
    let mut xj: f64 = 0.0;
    let mut circle: f64 = 0.0;
    let mut closed: f64 = 0.0;
    for s in &systems {
        let d = form_diagnostics(&standard_form(s), &SampleSpec::default()).unwrap();
        xj = xj.max(d.max_xj_defect);
        circle = circle.max(d.max_circle_defect);
        closed = closed.max(d.max_closedness_defect);
    }
    // drift on the orbits behind criteria 1-5
    let mut drift: f64 = 0.0;
    for (s, p) in [(champagne(), champagne_loop()), (pendulum(), pendulum_loop()), (hydrogen(), hydrogen_loop())] {
        drift = drift.max(both(&s, &p, N, &cfg).max_drift);
    }
    let path = LoopPath::circle(origin(), 0.1).unwrap();
    drift = drift.max(ff_local_monodromy(&path, BallSpec::new(1.0).unwrap(), N, &cfg).unwrap().report.max_drift);
    let sc = noncompact_monodromy(&ScatteringConfig::ladder(0.5).unwrap(), &cfg).unwrap();
    drift = drift.max(sc.rungs.iter().map(|r| r.max_drift).fold(0.0, f64::max));
    // fiber independence
    let mut fiber: f64 = 0.0;
    for (s, v) in [(champagne(), EMValue::new(0.5, 0.2)), (pendulum(), EMValue::new(1.2, 0.1)), (hydrogen(), EMValue::new(0.5, 0.4))] {
        let p = s.fiber_point(v).unwrap();
        let t0 = first_return(&s, &p, &cfg).unwrap().theta;
        for q in fiber_points(&s, &p, &cfg) {
            fiber = fiber.max(circ(first_return(&s, &q, &cfg).unwrap().theta, t0));
        }
    }
    // oracle agreement at 20 regular values each
    let mut oracle: f64 = 0.0;
    let mut counted = [0usize; 2];
    let cases: [(IntegrableSystem, fn(f64, f64) -> Option<f64>, (f64, f64), (f64, f64)); 2] =
        [(pendulum(), pendulum_theta, (-0.6, 2.5), (0.05, 0.5)), (champagne(), champagne_theta, (0.1, 1.5), (-0.5, 0.5))];
    for (idx, (s, f, hr, jr)) in cases.iter().enumerate() {
        'grid: for a in 0..6 {
            for b in 0..6 {
                if counted[idx] == 20 {
                    break 'grid;
                }
                let h = hr.0 + (a as f64 + 0.5) / 6.0 * (hr.1 - hr.0);
                let j = jr.0 + (b as f64 + 0.5) / 6.0 * (jr.1 - jr.0);
                let (Some(o), Ok(p)) = (f(h, j), s.fiber_point(EMValue::new(h, j))) else { continue };
                oracle = oracle.max(circ(first_return(s, &p, &cfg).unwrap().theta, o));
                counted[idx] += 1;
            }
        }
    }
    let ok = xj <= 1e-9
        && circle <= 1e-8
        && closed <= 1e-8
        && drift <= 1e-9
        && fiber <= 1e-6
        && oracle <= 1e-6
        && counted == [20, 20];
    check(
        ok,
        format!(
            "theta(X_J) {xj:.1e}, circles {circle:.1e}, squares {closed:.1e}, drift {drift:.1e}, fiber {fiber:.1e}, oracle {oracle:.1e} ({counted:?} values)"
        ),
    )
}

fn criterion_7() -> Verdict {
    let cfg = NumericsConfig::default();
    let a = both(&champagne(), &LoopPath::circle(EMValue::new(0.5, 0.0), 0.1).unwrap(), N, &cfg);
    let b = both(&pendulum(), &LoopPath::circle(EMValue::new(0.5, 0.4), 0.1).unwrap(), N, &cfg);
    let c = both(&hydrogen(), &LoopPath::circle(EMValue::new(0.0, 0.5), 0.2).unwrap(), N, &cfg);
    let contractible = [&a, &b, &c].iter().all(|r| r.k == 0 && r.k_variation == Some(0) && r.k_residues == Some(0));
    let du = du_control(&LoopPath::circle(origin(), 0.1).unwrap(), BallSpec::new(1.0).unwrap(), N, &cfg).unwrap();
    let refused = du.refusal.contains("not transversal") && du.polar_rank == 0;
    let ok = contractible && du.var_phi.abs() <= RESIDUE_TOL && refused;
    check(
        ok,
        format!("contractible k = ({}, {}, {}), du var = {:.2e}, refusal: {}", a.k, b.k, c.k, du.var_phi, du.refusal),
    )
}

fn criterion_8() -> Verdict {
    let base = NumericsConfig::default();
    let tight = base.scaled(0.1);
    let cases = [
        (champagne(), champagne_loop(), LoopPath::ellipse(origin(), 0.2, 0.1).unwrap(), -1),
        (pendulum(), pendulum_loop(), LoopPath::ellipse(EMValue::new(1.0, 0.0), 0.25, 0.12).unwrap(), -1),
        (hydrogen(), hydrogen_loop(), LoopPath::ellipse(origin(), 1.1, 0.5).unwrap(), -2),
    ];
    let mut ks = Vec::new();
    let mut ok = true;
    for (s, circle, ellipse, want) in cases {
        let r = [
            both(&s, &circle, N, &tight).k,
            both(&s, &circle, 2 * N, &base).k,
            both(&s, &ellipse, N, &base).k,
        ];
        ok &= r.iter().all(|k| *k == want);
        ks.push(r);
    }
    check(ok, format!("k (tight, 2N, deformed) = {ks:?}"))
}

#[test]
fn acceptance() {
    let criteria: [(u32, &str, Duration, fn() -> Verdict); 8] = [
        (1, "champagne bottle", Duration::from_secs(30), criterion_1),
        (2, "spherical pendulum", Duration::from_secs(60), criterion_2),
        (3, "hydrogen toy model", Duration::from_secs(60), criterion_3),
        (4, "focus-focus local", Duration::from_secs(10), criterion_4),
        (5, "scattering ladder", Duration::from_secs(60), criterion_5),
        (6, "property suites", Duration::MAX, criterion_6),
        (7, "negative controls", Duration::MAX, criterion_7),
        (8, "robustness", Duration::MAX, criterion_8),
    ];
    let mut failed = Vec::new();
    for (id, name, budget, f) in criteria {
        let t = Instant::now();
        let v = f();
        let el = t.elapsed();
        let in_time = el <= budget;
        let ok = v.ok && in_time;
        let limit = if budget == Duration::MAX { String::new() } else { format!(" / {}s", budget.as_secs()) };
        println!(
            "[{}] criterion {id} ({name}): {} [{:.2}s{limit}]",
            if ok { "PASS" } else { "FAIL" },
            v.detail,
            el.as_secs_f64()
        );
        if !ok {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
