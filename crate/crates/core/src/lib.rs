//! Observer-based output-feedback stabilisation of dissipative state-affine systems
//! `ẋ = A(u)x + B(u)`, `y = Cx`.

pub mod analysis;
pub mod matrix;
pub mod observer;
pub mod scenarios;
pub mod sim;
pub mod system;
pub mod validate;

pub use matrix::{ColVec, ComplexScalar, LinalgError, Mat};
pub use observer::{ClosedLoopSystem, GainPolicy};
pub use scenarios::{ScenarioBundle, ScenarioName};
pub use sim::{SimConfig, Trajectory};
pub use system::{Equilibrium, FeedbackLaw, InputAffineSystem, LyapunovSpec, SystemError};
