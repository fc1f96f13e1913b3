//! Plain-text file formats: events, run configuration, posteriors and
//! evaluation tables.

pub mod config;
pub mod events;
pub mod posterior;
pub mod report;

pub use config::RunConfig;
pub use events::{format_events, load_events, read_events, save_events, write_events};
pub use posterior::{FactorParams, Method, PosteriorFile};
