//! Large deviations and deterministic time changes for generalized
//! one-dimensional diffusions `D_v D_u`, with KPP front propagation.

pub mod acceptance;
pub mod action;
pub mod error;
pub mod front;
pub mod numerics;
pub mod path;
pub mod rde;
pub mod rng;
pub mod scale;
pub mod simulator;
pub mod time_change;

pub use error::{Error, Result};
pub use path::PiecewisePath;
pub use rng::SeedSpec;
pub use scale::{PointClass, ScalePair, SpeedRatio};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
