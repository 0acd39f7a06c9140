//! Every numerical threshold used by the library, in one place.

use serde::{Deserialize, Serialize};

use crate::flow::IntegratorConfig;

pub const REL_TOL: f64 = 1e-10;
pub const ABS_TOL: f64 = 1e-10;
pub const EVENT_REFINE_TOL: f64 = 1e-12;
pub const MAX_STEP: f64 = 0.25;

/// Absolute accuracy requested from line integrals.
pub const QUAD_TOL: f64 = 1e-10;
/// Polar safety distance: line integrals closer than this to the polar set are refused.
pub const POLAR_SAFETY: f64 = 1e-3;

/// Residual allowed on `F(p) = v` for solver-produced fiber points.
pub const FIBER_TOL: f64 = 1e-10;
/// Constraint residual accepted on input points.
pub const CONSTRAINT_TOL: f64 = 1e-9;
/// Second-invariant confirmation of a first return (relative).
pub const RETURN_CONFIRM_TOL: f64 = 1e-6;

/// An increment larger than this between adjacent samples is a jump.
pub const JUMP_THRESHOLD: f64 = std::f64::consts::PI;
/// A jump must lie within this fraction of 2pi of a nonzero multiple of 2pi.
pub const JUMP_MULTIPLE_FRACTION: f64 = 0.05;
/// `|-var/2pi - k|` allowed for the monodromy number.
pub const INTEGERNESS_TOL: f64 = 0.02;
/// Residues must lie within this fraction of 2pi of 2pi*Z.
pub const RESIDUE_FRACTION: f64 = 0.02;
/// Minimum crossing angle (radians) between a loop and the polar image.
pub const TRANSVERSAL_ANGLE: f64 = 1e-3;

/// Side of the small square loops used for closedness checks.
pub const CLOSEDNESS_SIDE: f64 = 1e-3;

/// Time budgets per system (time units of the system flows).
pub const MAX_TIME_CHAMPAGNE: f64 = 400.0;
pub const MAX_TIME_PENDULUM: f64 = 400.0;
pub const MAX_TIME_HYDROGEN: f64 = 800.0;
pub const MAX_TIME_FOCUS_FOCUS: f64 = 200.0;

/// Default number of samples along a loop.
pub const DEFAULT_SAMPLES: usize = 256;
/// Minimum number of loop samples accepted by the series sampler.
pub const MIN_SAMPLES: usize = 64;

/// Numerical settings shared by all engines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericsConfig {
    pub integrator: IntegratorConfig,
    pub quad_tol: f64,
    pub polar_safety: f64,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::default(),
            quad_tol: QUAD_TOL,
            polar_safety: POLAR_SAFETY,
        }
    }
}

impl NumericsConfig {
    /// Scale integrator and quadrature tolerances by `factor` (e.g. 0.1 to tighten 10x).
    pub fn scaled(mut self, factor: f64) -> Self {
        self.integrator.rel_tol *= factor;
        self.integrator.abs_tol *= factor;
        self.integrator.event_refine_tol = (self.integrator.event_refine_tol * factor).max(1e-15);
        self.quad_tol *= factor;
        self
    }
}
