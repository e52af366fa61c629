//! TDM-MIMO FMCW radar simulation and 3D localization of intra-chirp
//! modulated backscatter tags.

pub mod baseline;
pub mod chirp2d;
pub mod demos;
pub mod dsp;
pub mod elevation;
pub mod error;
pub mod io;
pub mod kalman;
pub mod pipeline;
pub mod radar;
pub mod rfdesign;
pub mod scenario;
pub mod synth;
pub mod tracker;
pub mod trajectory;

pub use error::{Error, Result};
pub use radar::RadarConfig;
