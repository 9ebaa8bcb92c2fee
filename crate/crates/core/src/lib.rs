pub mod diffusion;
pub mod error;
pub mod heavy_traffic;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod output;
pub mod quadrature;
pub mod simulator;
pub mod stationary;
pub mod validation;

pub use diffusion::{DiffusionParams, LimitLaw};
pub use error::{Error, Result};
pub use heavy_traffic::{Rounding, ScalingSequence, StudyTable};
pub use model::{Model, ModelParams, Ratios, Region, State};
pub use stationary::{Branch, StationaryDistribution};
