//! Run configuration (TOML).
//!
//! ```toml
//! seed = 1
//! horizon = 2000.0          # simulation only
//!
//! [basis]
//! support_end = 6.0
//! [[basis.functions]]
//! alpha = 50.0
//! beta = 50.0
//! scale = 6.0
//! shift = -2.0
//!
//! [prior]
//! alpha = [1.0, 1.0]
//! sigma2 = 1.0
//!
//! [solver]
//! iterations = 200
//! nodes_per_interval = 100
//!
//! [model]                   # ground truth, simulation only
//! initial_state = 1         # or "random"
//! lambda_bar = [2.0, 2.0]
//! transition = [[[0.99, 0.01], [0.01, 0.99]], ...]
//! weights = [[[1.0, 1.0, 0.5, -0.5, -0.25], ...], ...]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{BasisSet, BetaBasis};
use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::gibbs::GibbsOptions;
use crate::meanfield::MfOptions;
use crate::model::ModelParams;
use crate::priors::Priors;
use crate::simulate::{builtin_sim_fixture, InitialState, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub support_end: f64,
    pub functions: Vec<BetaBasis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    /// Dirichlet concentration of every transition row; length `K`.
    pub alpha: Vec<f64>,
    /// Prior variance of every weight.
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub iterations: usize,
    /// Gibbs burn-in; defaults to half the iterations.
    pub burn_in: Option<usize>,
    pub thin: usize,
    pub nodes_per_interval: usize,
    pub tol: f64,
    /// Gibbs likelihood-trace grid; defaults to 200000 points per 2000 time
    /// units, 0 disables the trace.
    pub trace_points: Option<usize>,
    /// Gauss-Legendre nodes per interval for evaluation.
    pub eval_nodes: usize,
    /// Mean-field posterior draws written with the factors.
    pub draws: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            burn_in: None,
            thin: 1,
            nodes_per_interval: 100,
            tol: 1e-6,
            trace_points: None,
            eval_nodes: 100,
            draws: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialStateConfig {
    /// 1-based state.
    Fixed(usize),
    /// `"random"`.
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub initial_state: Option<InitialStateConfig>,
    pub lambda_bar: Vec<f64>,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub weights: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub horizon: Option<f64>,
    pub basis: BasisConfig,
    pub prior: PriorConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub model: Option<ModelConfig>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises to TOML")
    }

    /// First 16 hex digits of the SHA-256 of the canonical serialisation.
    /// Formatting and comments in the source file do not affect it.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.basis_set()?;
        let p = &self.prior;
        if p.alpha.is_empty() || p.alpha.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::config("prior.alpha entries must be positive"));
        }
        if !(p.sigma2 > 0.0 && p.sigma2.is_finite()) {
            return Err(Error::config("prior.sigma2 must be positive"));
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::config("horizon must be positive"));
            }
        }
        let s = &self.solver;
        if s.iterations == 0 || s.thin == 0 || s.nodes_per_interval == 0 || s.eval_nodes < 2 {
            return Err(Error::config(
                "solver needs iterations, thin, nodes_per_interval >= 1 and eval_nodes >= 2",
            ));
        }
        if s.burn_in.is_some_and(|b| b >= s.iterations) {
            return Err(Error::config(
                "solver.burn_in must be below solver.iterations",
            ));
        }
        if s.tol.is_nan() || s.tol < 0.0 {
            return Err(Error::config("solver.tol must be non-negative"));
        }
        if self.model.is_some() {
            self.sim_config()?;
        }
        Ok(())
    }

    pub fn basis_set(&self) -> Result<BasisSet> {
        BasisSet::new(self.basis.functions.clone(), self.basis.support_end)
    }

    /// Priors for data with `states` states.
    pub fn priors(&self, states: usize) -> Result<Priors> {
        let priors = Priors {
            dirichlet_alpha: self.prior.alpha.clone(),
            weight_variance: self.prior.sigma2,
        };
        priors.validate(states)?;
        Ok(priors)
    }

    pub fn gibbs_options(&self, exec: ExecPolicy) -> GibbsOptions {
        GibbsOptions {
            iterations: self.solver.iterations,
            burn_in: self.solver.burn_in,
            thin: self.solver.thin,
            seed: self.seed,
            trace_points: self.solver.trace_points,
            exec,
        }
    }

    pub fn mf_options(&self, exec: ExecPolicy) -> MfOptions {
        MfOptions {
            max_iterations: self.solver.iterations,
            tol: self.solver.tol,
            nodes_per_interval: self.solver.nodes_per_interval,
            draws: self.solver.draws,
            seed: self.seed,
            exec,
        }
    }

    /// Simulation setup from the `[model]` section and `horizon`.
    pub fn sim_config(&self) -> Result<SimConfig> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| Error::config("simulation needs a [model] section"))?;
        let horizon = self
            .horizon
            .ok_or_else(|| Error::config("simulation needs a horizon"))?;
        let params = ModelParams::new(
            model.transition.clone(),
            model.lambda_bar.clone(),
            model.weights.clone(),
        )?;
        let initial_state = match &model.initial_state {
            None => InitialState::UniformRandom,
            Some(InitialStateConfig::Named(s)) if s == "random" => InitialState::UniformRandom,
            Some(InitialStateConfig::Named(s)) => {
                return Err(Error::config(format!(
                    "initial_state must be a state number or \"random\", got {s:?}"
                )))
            }
            Some(InitialStateConfig::Fixed(k)) if *k >= 1 => InitialState::Fixed(k - 1),
            Some(InitialStateConfig::Fixed(_)) => {
                return Err(Error::config("initial_state is 1-based"))
            }
        };
        let cfg = SimConfig {
            params,
            basis: self.basis_set()?,
            horizon,
            initial_state,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The simulation fixture with the training setup used for it: true
    /// basis, uniform Dirichlet prior, unit weight variance, 200 iterations
    /// and 100 quadrature nodes per interval.
    pub fn fixture() -> Self {
        let sim = builtin_sim_fixture();
        let initial_state = match sim.initial_state {
            InitialState::Fixed(k) => InitialStateConfig::Fixed(k + 1),
            InitialState::UniformRandom => InitialStateConfig::Named("random".into()),
        };
        Self {
            seed: sim.seed,
            horizon: Some(sim.horizon),
            basis: BasisConfig {
                support_end: sim.basis.support_end(),
                functions: sim.basis.functions().to_vec(),
            },
            prior: PriorConfig {
                alpha: vec![1.0; sim.params.states()],
                sigma2: 1.0,
            },
            solver: SolverConfig::default(),
            model: Some(ModelConfig {
                initial_state: Some(initial_state),
                lambda_bar: sim.params.lambda_bar.clone(),
                transition: sim.params.transition.clone(),
                weights: sim.params.weights.clone(),
            }),
        }
    }
}
