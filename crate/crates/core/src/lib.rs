pub mod beam3d;
pub mod cell_problem;
pub mod config;
pub mod convergence;
pub mod cross_section;
pub mod error;
pub mod material;
pub mod quadrature;
pub mod rod_model;
pub mod sparse;

pub use error::{Error, Result};

pub use beam3d::{BeamConfig, DeformationField, Observables};
pub use cell_problem::ReducedStiffness;
pub use config::RunConfig;
pub use convergence::{ConvergenceReport, LadderSpec};
pub use cross_section::CrossSection;
pub use material::{ExtendedReal, StoredEnergy};
pub use rod_model::{AlphaRegime, LoadFn, RodLoads, RodState};
