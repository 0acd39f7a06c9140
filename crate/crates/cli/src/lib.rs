//! Command-line driver: argument handling, config layering, JSON and CSV output.

pub mod args;
pub mod config;
pub mod scan;

use std::ffi::OsString;
use std::io::Write;
use std::path::Path;

use clap::Parser;
use monodromy_core::forms::{form_diagnostics, standard_form, SampleSpec};
use monodromy_core::local_ff::{du_control, ff_local_monodromy, BallSpec};
use monodromy_core::monodromy::{monodromy_number, sample_series, CompactFunctions, SamplePoint, VariationSeries};
use monodromy_core::rotation::{first_return_at, phi_from_record};
use monodromy_core::scattering::{default_probes, noncompact_monodromy, ScatteringConfig};
use monodromy_core::tolerances::DEFAULT_SAMPLES;
use monodromy_core::{EMValue, Error, FormKind, LoopPath, Method, RotationForm, SystemKind};
use serde_json::{json, Map, Value};

use args::{Cli, Command, Common};
use config::{form_kind, parse_grid, parse_list, parse_value, resolve_common, Resolved};

/// Exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

enum Failure {
    Usage(String),
    Numerical(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Numerical(e)
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

struct Output {
    report: Value,
    csv: Option<Vec<Vec<String>>>,
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(default_subcommand(argv.into_iter().map(Into::into).collect())) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let common = common_of(&cli.command).clone();
    let name = command_name(&cli.command);
    let res = match resolve_common(&common, default_system(&cli.command)) {
        Ok(r) => r,
        Err(e) => return report_failure(name, None, Failure::from(e)),
    };
    let pool = match res.threads {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build().ok(),
        None => None,
    };
    let work = || dispatch(&cli.command, &res);
    let out = match &pool {
        Some(p) => p.install(work),
        None => work(),
    };
    match out {
        Ok(o) => match emit(&res, o) {
            Ok(()) => EXIT_OK,
            Err(msg) => {
                eprintln!("error: {msg}");
                EXIT_NUMERICAL
            }
        },
        Err(f) => report_failure(name, Some(&res), f),
    }
}

/// `monodromy --preset ...` with no subcommand means `monodromy monodromy --preset ...`.
fn default_subcommand(mut argv: Vec<OsString>) -> Vec<OsString> {
    let bare = argv.get(1).and_then(|a| a.to_str()).is_some_and(|a| {
        a.starts_with("--") && !matches!(a, "--help" | "--version")
    });
    if bare {
        argv.insert(1, "monodromy".into());
    }
    argv
}

fn common_of(c: &Command) -> &Common {
    match c {
        Command::Monodromy(a) => &a.common,
        Command::Rotation(a) => &a.common,
        Command::Scan(a) => &a.common,
        Command::Local(a) => &a.common,
        Command::Scattering(a) => &a.common,
        Command::Diagnose(a) => &a.common,
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Monodromy(_) => "monodromy",
        Command::Rotation(_) => "rotation",
        Command::Scan(_) => "scan",
        Command::Local(_) => "local",
        Command::Scattering(_) => "scattering",
        Command::Diagnose(_) => "diagnose",
    }
}

fn default_system(c: &Command) -> Option<&'static str> {
    match c {
        Command::Local(_) | Command::Scattering(_) => Some("focus-focus"),
        _ => None,
    }
}

fn report_failure(command: &str, res: Option<&Resolved>, f: Failure) -> i32 {
    match f {
        Failure::Usage(msg) => {
            eprintln!("error: {msg}\n\nRun `monodromy {command} --help` for the valid flags.");
            EXIT_USAGE
        }
        Failure::Numerical(e) => {
            eprintln!("numerical failure ({}): {e}", e.kind());
            if let Some(res) = res {
                let mut m = envelope(command, res);
                m.insert("error".into(), json!({ "kind": e.kind(), "message": e.to_string() }));
                if let Some(out) = &res.out {
                    let _ = write_json(out, &Value::Object(m));
                }
            }
            EXIT_NUMERICAL
        }
    }
}

fn envelope(command: &str, res: &Resolved) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("command".into(), json!(command));
    m.insert("system".into(), json!(res.system.name()));
    m.insert("params".into(), json!(res.system.params()));
    m.insert("timestamp".into(), json!(chrono::Utc::now().to_rfc3339()));
    m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    m
}

fn write_json(path: &Path, v: &Value) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, v)?;
    writeln!(f)
}

fn write_csv(path: &Path, rows: &[Vec<String>]) -> std::result::Result<(), String> {
    let mut w = csv::Writer::from_path(path).map_err(|e| e.to_string())?;
    for r in rows {
        w.write_record(r).map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())
}

fn emit(res: &Resolved, o: Output) -> std::result::Result<(), String> {
    if let (Some(path), Some(rows)) = (&res.csv, &o.csv) {
        write_csv(path, rows)?;
    }
    match &res.out {
        Some(path) => {
            write_json(path, &o.report).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
            if let Some(k) = o.report.get("k") {
                // a closed pipe is not an error worth reporting
                let _ = writeln!(std::io::stdout(), "k = {k}");
            }
            Ok(())
        }
        None => {
            let text = serde_json::to_string_pretty(&o.report).map_err(|e| e.to_string())?;
            let _ = writeln!(std::io::stdout(), "{text}");
            Ok(())
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.17e}")).unwrap_or_default()
}

fn series_rows(samples: &[SamplePoint]) -> Vec<Vec<String>> {
    let mut rows = vec![["s", "h", "j", "theta", "phi", "defect", "flags"].map(String::from).to_vec()];
    for p in samples {
        let mut flags = Vec::new();
        if p.theta.is_none() {
            flags.push("theta-undefined");
        }
        if p.phi.is_none() {
            flags.push("phi-undefined");
        }
        rows.push(vec![
            format!("{:.17e}", p.s),
            format!("{:.17e}", p.h),
            format!("{:.17e}", p.j),
            opt(p.theta),
            opt(p.phi),
            opt(p.defect()),
            flags.join(";"),
        ]);
    }
    rows
}

fn variation_json(ser: &VariationSeries) -> Value {
    json!({
        "var_theta": ser.var_theta,
        "var_phi": ser.var_phi,
        "jumps": { "theta": ser.theta_jumps, "phi": ser.phi_jumps },
        "samples": ser.n,
    })
}

fn tolerances_json(res: &Resolved) -> Value {
    serde_json::to_value(res.numerics).unwrap_or(Value::Null)
}

fn samples_of(flag: Option<usize>, res: &Resolved) -> usize {
    flag.or(res.file.samples).unwrap_or(DEFAULT_SAMPLES)
}

fn form_of(flag: Option<args::FormArg>, res: &Resolved) -> Outcome<RotationForm> {
    let kind = flag.map(form_kind).or(res.file.form).unwrap_or(FormKind::Standard);
    Ok(RotationForm::new(res.system, kind)?)
}

fn dispatch(cmd: &Command, res: &Resolved) -> Outcome<Output> {
    match cmd {
        Command::Monodromy(a) => cmd_monodromy(a, res),
        Command::Rotation(a) => cmd_rotation(a, res),
        Command::Scan(a) => cmd_scan(a, res),
        Command::Local(a) => cmd_local(a, res),
        Command::Scattering(a) => cmd_scattering(a, res),
        Command::Diagnose(a) => cmd_diagnose(a, res),
    }
}

fn cmd_monodromy(a: &args::MonodromyArgs, res: &Resolved) -> Outcome<Output> {
    let sys = res.system;
    if sys.kind == SystemKind::FocusFocus {
        return Err(Failure::Usage(
            "focus-focus fibers are not compact; use the `local` or `scattering` subcommand".into(),
        ));
    }
    let path = res.path(&a.path, None)?;
    let method = Method::parse(a.method.as_deref().or(res.file.method.as_deref()).unwrap_or("both"))?;
    let n = samples_of(a.samples, res);
    let form = form_of(a.form, res)?;
    let rep = monodromy_number(&sys, &form, &path, method, n, &res.numerics)?;
    let form_checks = if a.no_form_checks {
        Value::Null
    } else {
        serde_json::to_value(form_diagnostics(&form, &SampleSpec::default())?).unwrap_or(Value::Null)
    };
    let residues: Vec<Value> = rep
        .residues
        .iter()
        .map(|r| {
            json!({
                "s": r.s, "v": r.v, "branch": r.branch, "value": r.value,
                "certificate": r.certificate, "determinant": r.determinant,
            })
        })
        .collect();
    let mut m = envelope("monodromy", res);
    m.insert("loop".into(), json!(path));
    m.insert("method".into(), json!(method));
    m.insert("form".into(), json!(rep.form));
    m.insert("k".into(), json!(rep.k));
    m.insert("k_variation".into(), json!(rep.k_variation));
    m.insert("k_variation_phi".into(), json!(rep.k_variation_phi));
    m.insert("k_residues".into(), json!(rep.k_residues));
    m.insert("agreement".into(), json!(rep.agreement));
    m.insert("integerness_residual".into(), json!({
        "variation": rep.integerness_variation,
        "residues": rep.integerness_residues,
    }));
    m.insert("residues".into(), Value::Array(residues));
    m.insert("crossings".into(), json!(rep.crossings));
    m.insert("variation".into(), rep.series.as_ref().map(variation_json).unwrap_or(Value::Null));
    m.insert("diagnostics".into(), json!({
        "form_checks": form_checks,
        "drift": rep.max_drift,
        "tolerances": tolerances_json(res),
        "enclosed_critical_values": path.enclosed(&sys),
        "residue_details": rep.residues,
    }));
    let csv = rep.series.as_ref().map(|s| series_rows(&s.samples));
    Ok(Output { report: Value::Object(m), csv })
}

fn cmd_rotation(a: &args::RotationArgs, res: &Resolved) -> Outcome<Output> {
    let sys = res.system;
    let form = standard_form(&sys);
    let mut m = envelope("rotation", res);
    if !a.at.is_empty() {
        let mut rows = vec![["h", "j", "theta", "phi", "t_return", "drift", "closure"].map(String::from).to_vec()];
        let mut vals = Vec::new();
        for s in &a.at {
            let v = parse_value(s)?;
            let rec = first_return_at(&sys, v, &res.numerics)?;
            let phi = match phi_from_record(&form, &rec, &res.numerics) {
                Ok(x) => Some(x),
                Err(Error::FiberMeetsPolarLocus { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            let sm = rec.summary();
            rows.push(vec![
                format!("{:.17e}", v.h),
                format!("{:.17e}", v.j),
                format!("{:.17e}", sm.theta),
                opt(phi),
                format!("{:.17e}", sm.t_return),
                format!("{:.3e}", sm.max_drift),
                format!("{:.3e}", sm.closure_residual),
            ]);
            vals.push(json!({ "v": v, "theta": sm.theta, "phi": phi, "t_return": sm.t_return,
                "drift": sm.max_drift, "closure_residual": sm.closure_residual }));
        }
        m.insert("values".into(), Value::Array(vals));
        m.insert("diagnostics".into(), json!({ "tolerances": tolerances_json(res) }));
        return Ok(Output { report: Value::Object(m), csv: Some(rows) });
    }
    let path = res.path(&a.path, None)?;
    path.validate(&sys)?;
    let n = samples_of(a.samples, res);
    let f = CompactFunctions { system: sys, form, path: &path, cfg: res.numerics };
    let ser = sample_series(&f, n)?;
    m.insert("loop".into(), json!(path));
    m.insert("variation".into(), variation_json(&ser));
    m.insert("series".into(), json!(ser.samples));
    m.insert("diagnostics".into(), json!({
        "drift": ser.samples.iter().map(|p| p.max_drift).fold(0.0, f64::max),
        "tolerances": tolerances_json(res),
    }));
    let csv = Some(series_rows(&ser.samples));
    Ok(Output { report: Value::Object(m), csv })
}

fn cmd_scan(a: &args::ScanArgs, res: &Resolved) -> Outcome<Output> {
    let bbox = match &a.bbox {
        Some(s) => {
            let v = parse_list(s, "--box")?;
            let arr: [f64; 4] = v
                .try_into()
                .map_err(|_| Failure::Usage("--box expects h_min,h_max,j_min,j_max".into()))?;
            arr
        }
        None => res.file.bbox.ok_or_else(|| Failure::Usage("scan needs --box h_min,h_max,j_min,j_max".into()))?,
    };
    let grid = match &a.grid {
        Some(g) => parse_grid(g)?,
        None => res.file.grid.unwrap_or([100, 100]),
    };
    let sc = scan::scan_domain(&res.system, scan::ScanBox::new(bbox)?, grid, !a.no_theta, &res.numerics)?;
    let mut rows = vec![["h", "j", "class", "theta"].map(String::from).to_vec()];
    for c in &sc.cells {
        rows.push(vec![format!("{:.12e}", c.h), format!("{:.12e}", c.j), c.class.label().into(), opt(c.theta)]);
    }
    let counts: Map<String, Value> = [
        scan::CellClass::Regular,
        scan::CellClass::NearCritical,
        scan::CellClass::OnPolarImage,
        scan::CellClass::Unreachable,
    ]
    .iter()
    .map(|c| (c.label().to_string(), json!(sc.count(*c))))
    .collect();
    let form = standard_form(&res.system);
    let mut m = envelope("scan", res);
    m.insert("polar_locus".into(), json!(form.polar_locus()));
    m.insert("counts".into(), Value::Object(counts));
    m.insert("scan".into(), json!(sc));
    m.insert("diagnostics".into(), json!({ "tolerances": tolerances_json(res) }));
    Ok(Output { report: Value::Object(m), csv: Some(rows) })
}

fn cmd_local(a: &args::LocalArgs, res: &Resolved) -> Outcome<Output> {
    if res.system.kind != SystemKind::FocusFocus {
        return Err(Failure::Usage("`local` works on the focus-focus system".into()));
    }
    let default = LoopPath::circle(EMValue::new(0.0, 0.0), 0.1)?;
    let path = res.path(&a.path, Some(default))?;
    let ball = BallSpec::new(res.ball(a.ball))?;
    let n = samples_of(a.samples, res);
    let rep = ff_local_monodromy(&path, ball, n, &res.numerics)?;
    let doubled = ff_local_monodromy(&path, BallSpec::new(2.0 * ball.r)?, n, &res.numerics)?;
    let control = if a.control { Some(du_control(&path, ball, n, &res.numerics)?) } else { None };
    let residues: Vec<Value> = rep
        .report
        .residues
        .iter()
        .map(|r| json!({ "s": r.s, "v": r.v, "branch": r.branch, "value": r.value,
            "certificate": r.certificate, "determinant": r.determinant }))
        .collect();
    let mut m = envelope("local", res);
    m.insert("loop".into(), json!(path));
    m.insert("method".into(), json!(Method::Both));
    m.insert("ball".into(), json!(ball));
    m.insert("k".into(), json!(rep.report.k));
    m.insert("agreement".into(), json!(rep.report.agreement));
    m.insert("var_phi_rel".into(), json!(rep.var_phi_rel));
    m.insert("chart_residue".into(), json!(rep.chart_residue));
    m.insert("chart_residue_oracle".into(), json!(rep.chart_residue_oracle));
    m.insert("residues".into(), Value::Array(residues));
    m.insert("variation".into(), rep.report.series.as_ref().map(variation_json).unwrap_or(Value::Null));
    m.insert("doubled_ball".into(), json!({ "r": 2.0 * ball.r, "k": doubled.report.k, "var_phi_rel": doubled.var_phi_rel }));
    m.insert("du_control".into(), json!(control));
    m.insert("diagnostics".into(), json!({ "drift": rep.report.max_drift, "tolerances": tolerances_json(res) }));
    let csv = rep.report.series.as_ref().map(|s| series_rows(&s.samples));
    Ok(Output { report: Value::Object(m), csv })
}

fn cmd_scattering(a: &args::ScatteringArgs, res: &Resolved) -> Outcome<Output> {
    if res.system.kind != SystemKind::FocusFocus {
        return Err(Failure::Usage("`scattering` works on the focus-focus system".into()));
    }
    let mut cfg = ScatteringConfig::ladder(0.5)?;
    cfg.path = res.path(&a.path, Some(cfg.path.clone()))?;
    if let Some(ms) = a.m.as_deref().map(|s| parse_list(s, "--m")).transpose()?.or(res.file.m_values.clone()) {
        cfg.m_values = ms;
    }
    if let Some(f) = a.form.map(form_kind).or(res.file.form) {
        cfg.form = f;
    }
    cfg.samples = samples_of(a.samples, res);
    let rho = a.probe_radius.or(res.file.probe_radius).unwrap_or(0.01);
    let count = a.probes.or(res.file.probes).unwrap_or(8);
    cfg.probes = default_probes(rho, count);
    if let Some(t) = a.convergence_tol.or(res.file.convergence_tol) {
        cfg.convergence_tol = t;
    }
    let rep = noncompact_monodromy(&cfg, &res.numerics)?;
    let mut rows = vec![["m", "h", "j", "theta_m", "phi_m", "theta_s"].map(String::from).to_vec()];
    for p in &rep.probes {
        for (i, m) in cfg.m_values.iter().enumerate() {
            rows.push(vec![
                format!("{m}"),
                format!("{:.17e}", p.v.h),
                format!("{:.17e}", p.v.j),
                format!("{:.17e}", p.theta_m[i]),
                opt(p.phi_m[i]),
                format!("{:.17e}", p.theta_s),
            ]);
        }
    }
    let mut m = envelope("scattering", res);
    m.insert("loop".into(), json!(cfg.path));
    m.insert("method".into(), json!(Method::Variation));
    m.insert("k".into(), json!(rep.k));
    m.insert("stable".into(), json!(rep.stable));
    m.insert("converged".into(), json!(rep.converged));
    m.insert("config".into(), json!(cfg));
    m.insert("variation".into(), json!(rep.rungs));
    m.insert("probes".into(), json!(rep.probes));
    m.insert("residues".into(), json!([]));
    m.insert("diagnostics".into(), json!({
        "max_probe_deviation": rep.max_probe_deviation,
        "drift": rep.rungs.iter().map(|r| r.max_drift).fold(0.0, f64::max),
        "tolerances": tolerances_json(res),
        "stability_scope": "k_m constant over the tested ladder only",
    }));
    Ok(Output { report: Value::Object(m), csv: Some(rows) })
}

fn cmd_diagnose(a: &args::DiagnoseArgs, res: &Resolved) -> Outcome<Output> {
    let form = form_of(a.form, res)?;
    let mut spec = SampleSpec::default();
    if let Some(p) = a.probes {
        spec.probes = p;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let d = form_diagnostics(&form, &spec)?;
    let mut m = envelope("diagnose", res);
    m.insert("form".into(), json!(form.name()));
    m.insert("polar_locus".into(), json!(form.polar_locus()));
    m.insert("polar_image".into(), json!(form.polar_branches()));
    m.insert("critical_values".into(), json!(res.system.critical_values()));
    m.insert("diagnostics".into(), json!({ "form_checks": d, "tolerances": tolerances_json(res) }));
    Ok(Output { report: Value::Object(m), csv: None })
}
