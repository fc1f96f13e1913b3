//! Flexible state-switching Hawkes processes.
//!
//! A multivariate point process whose intensities are sigmoid-linked linear
//! functions of basis-expanded event histories, coupled to a finite state
//! process that jumps only at events. The crate provides
//!
//! - exact simulation by superposition thinning ([`simulate`]),
//! - a Pólya-Gamma / marked-Poisson augmented Gibbs sampler ([`gibbs`]),
//! - the matching mean-field variational scheme ([`meanfield`]),
//! - likelihood, time-rescaling and Q-Q diagnostics ([`evaluation`]),
//! - plain-text file formats for events, configs and posteriors ([`io`]).
//!
//! Data-parallel inner loops run on rayon when the `parallel` feature is
//! enabled (the default); see [`ExecPolicy`].

pub mod basis;
pub mod design;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod gibbs;
pub mod io;
pub mod linalg;
pub mod meanfield;
pub mod model;
pub mod polya_gamma;
pub mod priors;
pub mod quadrature;
pub mod simulate;

pub use basis::{cumulative_features, precompute_features, BasisSet, BetaBasis, FeatureMatrix};
pub use error::{Error, Result};
pub use evaluation::{fit_report, log_likelihood, FitReport, KsResult, LogLik};
pub use exec::ExecPolicy;
pub use gibbs::{run_gibbs, GibbsChain, GibbsOptions};
pub use io::{PosteriorFile, RunConfig};
pub use meanfield::{run_meanfield, MFState, MeanFieldFit, MfOptions};
pub use model::{activation, intensity, sigmoid, Event, ModelParams, Realization, StatePath};
pub use priors::Priors;
pub use simulate::{builtin_sim_fixture, simulate, InitialState, SimConfig};
