//! Text model format and command reports for the `nct` driver.

pub mod build;
pub mod model;
pub mod report;

pub use build::{build_model, load, FrontendError, Model};
pub use model::{parse_model, serialize_model, ModelDocument};
pub use report::{render, run_command, Command, Format, Options, Outcome, RequestError};
