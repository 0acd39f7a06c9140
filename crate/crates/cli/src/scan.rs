//! Grid classification of the `(h, j)` plane.

use monodromy_core::forms::standard_form;
use monodromy_core::rotation::first_return_at;
use monodromy_core::systems::CriticalValue;
use monodromy_core::{EMValue, Error, IntegrableSystem, NumericsConfig, Result, SystemKind};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanBox {
    pub h_min: f64,
    pub h_max: f64,
    pub j_min: f64,
    pub j_max: f64,
}

impl ScanBox {
    pub fn new(v: [f64; 4]) -> Result<Self> {
        let [h_min, h_max, j_min, j_max] = v;
        if !v.iter().all(|x| x.is_finite()) || h_min >= h_max || j_min >= j_max {
            return Err(Error::InvalidParameter(format!("bad box {v:?}: need h_min < h_max, j_min < j_max")));
        }
        Ok(Self { h_min, h_max, j_min, j_max })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellClass {
    Regular,
    NearCritical,
    /// Within half a cell of `F(Pi)`.
    OnPolarImage,
    /// The fiber-point solver finds nothing (outside the image, or on a critical curve).
    Unreachable,
}

impl CellClass {
    pub fn label(self) -> &'static str {
        match self {
            CellClass::Regular => "regular",
            CellClass::NearCritical => "near-critical",
            CellClass::OnPolarImage => "on-polar-image",
            CellClass::Unreachable => "unreachable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanCell {
    pub h: f64,
    pub j: f64,
    pub class: CellClass,
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Locus {
    pub branch: &'static str,
    pub points: Vec<EMValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainScan {
    pub system: String,
    #[serde(rename = "box")]
    pub bbox: ScanBox,
    /// Columns along `j` (horizontal) and rows along `h` (vertical).
    pub grid: [usize; 2],
    pub cells: Vec<ScanCell>,
    pub polar_image: Vec<Locus>,
    pub critical_values: Vec<CriticalValue>,
    pub focus_focus: Vec<EMValue>,
}

impl DomainScan {
    pub fn count(&self, class: CellClass) -> usize {
        self.cells.iter().filter(|c| c.class == class).count()
    }
}

/// Cell centers row by row (`h` from top to bottom), `j` increasing along each row.
pub fn scan_domain(
    sys: &IntegrableSystem,
    bbox: ScanBox,
    grid: [usize; 2],
    with_theta: bool,
    cfg: &NumericsConfig,
) -> Result<DomainScan> {
    let [nj, nh] = grid;
    if nj < 16 || nh < 16 {
        return Err(Error::InvalidParameter(format!("grid must be at least 16x16, got {nj}x{nh}")));
    }
    let dj = (bbox.j_max - bbox.j_min) / nj as f64;
    let dh = (bbox.h_max - bbox.h_min) / nh as f64;
    let form = standard_form(sys);
    let branches = form.polar_branches();
    let crit = sys.critical_values();
    let theta_ok = with_theta && sys.kind != SystemKind::FocusFocus;
    let cells: Vec<ScanCell> = (0..nh * nj)
        .into_par_iter()
        .map(|idx| {
            let (row, col) = (idx / nj, idx % nj);
            let v = EMValue::new(bbox.h_max - (row as f64 + 0.5) * dh, bbox.j_min + (col as f64 + 0.5) * dj);
            let near = crit.iter().any(|c| (c.value.h - v.h).abs() <= dh && (c.value.j - v.j).abs() <= dj);
            let on_polar = branches.iter().any(|b| {
                let (along, off) = b.split(v);
                let (half_off, half_along) = if b.fixed_j { (0.5 * dj, 0.5 * dh) } else { (0.5 * dh, 0.5 * dj) };
                off.abs() <= half_off * (1.0 + 1e-9) && along >= b.lo - half_along && along <= b.hi + half_along
            });
            let reachable = sys.fiber_point(v).is_ok();
            let class = if near {
                CellClass::NearCritical
            } else if !reachable {
                CellClass::Unreachable
            } else if on_polar {
                CellClass::OnPolarImage
            } else {
                CellClass::Regular
            };
            let theta = if theta_ok && reachable && !near {
                first_return_at(sys, v, cfg).ok().map(|r| r.theta)
            } else {
                None
            };
            ScanCell { h: v.h, j: v.j, class, theta }
        })
        .collect();
    let polar_image = branches
        .iter()
        .map(|b| {
            let (lo, hi, olo, ohi) = if b.fixed_j {
                (bbox.h_min, bbox.h_max, bbox.j_min, bbox.j_max)
            } else {
                (bbox.j_min, bbox.j_max, bbox.h_min, bbox.h_max)
            };
            let points = if b.level >= olo && b.level <= ohi { b.polyline(lo, hi, 64) } else { Vec::new() };
            Locus { branch: b.name, points }
        })
        .collect();
    Ok(DomainScan {
        system: sys.name().to_string(),
        bbox,
        grid,
        cells,
        polar_image,
        focus_focus: sys.focus_focus_values(),
        critical_values: crit,
    })
}
