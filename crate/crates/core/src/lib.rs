//! Minimum-time bang-off-bang velocity commands for oscillatory plants.
//!
//! The numeric core (`plant`, `tdfilter`, `closed_form`, `poly`) is generic
//! over the scalar type so the same code runs on `f32`, `f64` and the forward
//! dual numbers used for frequency sensitivities. The optimizer and analysis
//! layers work in `f64`; the aliases below fix that choice.

pub mod analysis;
pub mod closed_form;
pub mod designer;
pub mod dual;
pub mod error;
pub mod io;
pub mod plant;
pub mod poly;
pub mod profile;
pub mod scalar;
pub mod tdfilter;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Mode = plant::ModeSpec<f64>;
pub type Plant = plant::PlantSpec<f64>;
pub type Profile = profile::BangOffBangProfile<f64>;
pub type Filter = tdfilter::TimeDelayFilter<f64>;
pub type Zone = closed_form::ZoneSolution<f64>;
