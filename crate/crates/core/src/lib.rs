//! Reduction of linear delay equations onto spectral subspaces, versality
//! tests for parametrized families and synthesis of mini-versal unfoldings.

pub mod error;
pub mod linalg;
pub mod matalg;
pub mod model;
pub mod problem;
pub mod spectral;
pub mod synthesis;
pub mod validate;
pub mod versality;

pub use error::{Error, Result};
pub use linalg::{c64, CMat, CVec, RankDecision, C64, DEFAULT_RANK_TOL};
pub use model::{DelayAtom, DirectionOperator, LinearRfde, ParametrizedFamily};
pub use spectral::{JordanSpec, SpectralBases};
