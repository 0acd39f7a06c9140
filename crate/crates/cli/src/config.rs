//! Run configuration: flags override the JSON config file, which overrides defaults.
//! A `--preset` counts as a flag, but explicit geometry flags still win over it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use monodromy_core::systems::make_system;
use monodromy_core::{EMValue, Error, FormKind, IntegrableSystem, LoopPath, NumericsConfig, Result};
use serde::{Deserialize, Serialize};

use crate::args::{Common, FormArg, LoopArgs, Preset};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub quad_tol: Option<f64>,
    pub max_time: Option<f64>,
}

/// Contents of `--config`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub system: Option<String>,
    pub params: Option<BTreeMap<String, f64>>,
    #[serde(rename = "loop")]
    pub path: Option<LoopPath>,
    pub method: Option<String>,
    pub samples: Option<usize>,
    pub form: Option<FormKind>,
    pub tolerances: Tolerances,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub ball: Option<f64>,
    pub m_values: Option<Vec<f64>>,
    pub probe_radius: Option<f64>,
    pub probes: Option<usize>,
    pub convergence_tol: Option<f64>,
    #[serde(rename = "box")]
    pub bbox: Option<[f64; 4]>,
    pub grid: Option<[usize; 2]>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidParameter(format!("bad config {}: {e}", path.display())))
    }
}

pub struct PresetSpec {
    pub system: &'static str,
    pub path: LoopPath,
    pub ball: Option<f64>,
}

pub fn preset(p: Preset) -> PresetSpec {
    let o = EMValue::new(0.0, 0.0);
    let (system, path, ball) = match p {
        Preset::PaperChampagne => ("champagne", LoopPath::circle(o, 0.15), None),
        Preset::PaperPendulum => ("pendulum", LoopPath::circle(EMValue::new(1.0, 0.0), 0.2), None),
        Preset::PaperHydrogen => ("hydrogen", LoopPath::ellipse(o, 1.15, 0.3), None),
        Preset::PaperFf => ("focus-focus", LoopPath::circle(o, 0.1), Some(1.0)),
    };
    PresetSpec { system, path: path.expect("preset loops are valid"), ball }
}

pub fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("{what}: `{t}` is not a number")))
        })
        .collect()
}

pub fn parse_pair(s: &str, what: &str) -> Result<(f64, f64)> {
    match parse_list(s, what)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(Error::InvalidParameter(format!("{what} expects two comma-separated numbers, got `{s}`"))),
    }
}

pub fn parse_value(s: &str) -> Result<EMValue> {
    let (h, j) = parse_pair(s, "value h,j")?;
    Ok(EMValue::new(h, j))
}

pub fn parse_grid(s: &str) -> Result<[usize; 2]> {
    let bad = || Error::InvalidParameter(format!("--grid expects NjxNh, got `{s}`"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok([a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?])
}

pub fn form_kind(f: FormArg) -> FormKind {
    match f {
        FormArg::Standard => FormKind::Standard,
        FormArg::Scattering => FormKind::Scattering,
        FormArg::ChartU => FormKind::ChartU,
    }
}

/// Settings shared by every subcommand, after layering.
pub struct Resolved {
    pub file: FileConfig,
    pub system: IntegrableSystem,
    pub numerics: NumericsConfig,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub preset: Option<PresetSpec>,
}

pub fn resolve_common(c: &Common, default_system: Option<&str>) -> Result<Resolved> {
    let file = FileConfig::load(c.config.as_deref())?;
    let preset = c.preset.map(preset);
    let name = c
        .system
        .clone()
        .or_else(|| preset.as_ref().map(|p| p.system.to_string()))
        .or_else(|| file.system.clone())
        .or_else(|| default_system.map(str::to_string))
        .ok_or_else(|| Error::InvalidParameter("no system given (use --system or --preset)".into()))?;
    let mut params = file.params.clone().unwrap_or_default();
    for kv in &c.params {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("--param expects KEY=VALUE, got `{kv}`")))?;
        let v: f64 = v.trim().parse().map_err(|_| Error::InvalidParameter(format!("--param {k}: bad number")))?;
        params.insert(k.trim().to_string(), v);
    }
    let system = make_system(&name, &params)?;
    let mut numerics = NumericsConfig::default();
    let t = &file.tolerances;
    if let Some(x) = c.rel_tol.or(t.rel_tol) {
        numerics.integrator.rel_tol = x;
    }
    if let Some(x) = c.abs_tol.or(t.abs_tol) {
        numerics.integrator.abs_tol = x;
    }
    if let Some(x) = c.quad_tol.or(t.quad_tol) {
        numerics.quad_tol = x;
    }
    if let Some(x) = c.max_time.or(t.max_time) {
        numerics.integrator.max_time = Some(x);
    }
    numerics.integrator.validate()?;
    if !(numerics.quad_tol > 0.0) {
        return Err(Error::InvalidParameter("quad_tol must be positive".into()));
    }
    let threads = c.threads.or(file.threads);
    if threads == Some(0) {
        return Err(Error::InvalidParameter("--threads must be at least 1".into()));
    }
    Ok(Resolved {
        threads,
        out: c.out.clone().or_else(|| file.out.clone()),
        csv: c.csv.clone().or_else(|| file.csv.clone()),
        file,
        system,
        numerics,
        preset,
    })
}

impl Resolved {
    /// Loop from the flags, falling back to the preset, then the config, then `default`.
    pub fn path(&self, a: &LoopArgs, default: Option<LoopPath>) -> Result<LoopPath> {
        let base = self
            .preset
            .as_ref()
            .map(|p| p.path.clone())
            .or_else(|| self.file.path.clone())
            .or(default);
        let base_center = base.as_ref().map(|b| b.center());
        let center = match &a.center {
            Some(s) => Some(parse_value(s)?),
            None => base_center,
        };
        if let Some(p) = &a.polygon {
            let vs = p.split(';').map(parse_value).collect::<Result<Vec<_>>>()?;
            return LoopPath::polygon(vs);
        }
        if let Some(e) = &a.ellipse {
            let (sh, sj) = parse_pair(e, "--ellipse")?;
            let c = center.ok_or_else(|| Error::InvalidParameter("--ellipse needs --center".into()))?;
            return LoopPath::ellipse(c, sh, sj);
        }
        if let Some(r) = a.radius {
            let c = center.ok_or_else(|| Error::InvalidParameter("--radius needs --center".into()))?;
            return LoopPath::circle(c, r);
        }
        match (base, a.center.is_some()) {
            (Some(b), false) => Ok(b),
            (Some(b), true) => b.recentered(center.expect("center given")),
            (None, _) => Err(Error::InvalidParameter(
                "no loop given (use --preset, --center with --radius/--ellipse, or --polygon)".into(),
            )),
        }
    }

    pub fn ball(&self, flag: Option<f64>) -> f64 {
        flag.or_else(|| self.preset.as_ref().and_then(|p| p.ball)).or(self.file.ball).unwrap_or(1.0)
    }
}
