//! Monodromy of two degree-of-freedom integrable systems with a Hamiltonian
//! circle action.
//!
//! The monodromy number `k` along a loop of regular values is computed in two
//! independent ways: from the variation of the rotation number, and from the
//! residues of a rotation 1-form around its polar orbits.

pub mod error;
pub mod flow;
pub mod forms;
pub mod local_ff;
pub mod monodromy;
pub mod oracles;
pub mod quadrature;
pub mod rotation;
pub mod scattering;
pub mod systems;
pub mod tolerances;

pub use error::{Error, Result};
pub use flow::{FieldId, IntegratorConfig, OrbitSegment};
pub use forms::{FormKind, RotationForm};
pub use monodromy::{LoopPath, Method, MonodromyReport};
pub use systems::{EMValue, IntegrableSystem, PhasePoint, SystemKind};
pub use tolerances::NumericsConfig;
