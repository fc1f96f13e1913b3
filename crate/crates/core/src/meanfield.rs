//! Mean-field variational inference on the augmented model.
//!
//! The factorised posterior `q(ω) q(Π) q(λ̄) q(w) q(Φ)` is updated by
//! coordinate ascent. Given Gaussian weight factors, every activation
//! `h_i(t)` has mean `h̄` and second moment `h̃²`; the PG factors are
//! `PG(1, h̃)` and the latent marked Poisson process has the
//! ω-marginalised rate
//!
//! ```text
//! λ̄¹ σ(−h̃) exp((h̃ − h̄)/2),    λ̄¹ = exp(ψ(N + R̃) − log T).
//! ```
//!
//! The ω-integrals are done in closed form (the PG density normalises and
//! its mean is `tanh(h̃/2)/(2h̃)`), so only the time integrals need a
//! quadrature: Gauss-Legendre nodes on every inter-event interval, where
//! the state is constant.
//!
//! One sweep per dimension computes `(h̄, h̃)` at events and nodes, the
//! latent rates at the nodes (with the current `λ̄¹`), then the Gamma factor
//! of `λ̄` and the Gaussian factors of the weights from those rates. The
//! transition factors are exact and computed once.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::digamma;

use crate::basis::BasisSet;
use crate::design::{DesignCache, EventBlocks};
use crate::error::{Error, Result};
use crate::evaluation::{log_likelihood_cached, LogLik};
use crate::exec::ExecPolicy;
use crate::gibbs::sample_transition;
use crate::linalg::{
    mean_and_quadratic, sample_mvn, weighted_gram, weighted_row_sum, GaussianPosterior,
};
use crate::model::{log_sigmoid, ModelParams, Realization};
use crate::polya_gamma::pg_mean;
use crate::priors::{dirichlet_mean, normalise_row, transition_posterior, Priors};
use crate::quadrature::QuadratureGrid;

/// Smallest Gamma shape kept for a dimension without events.
pub const MIN_GAMMA_SHAPE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct MfOptions {
    pub max_iterations: usize,
    /// Relative change of the mean-evaluated training log-likelihood below
    /// which the iteration stops.
    pub tol: f64,
    pub nodes_per_interval: usize,
    /// Posterior draws taken from the converged factors.
    pub draws: usize,
    pub seed: u64,
    pub exec: ExecPolicy,
}

impl Default for MfOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tol: 1e-6,
            nodes_per_interval: 100,
            draws: 100,
            seed: 0,
            exec: ExecPolicy::default(),
        }
    }
}

/// Variational factors of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DimFactors {
    /// `N_i + R̃_i`.
    pub gamma_shape: f64,
    /// `R̃_i`, the expected size of the latent process.
    pub latent_mass: f64,
    /// `m̃_i^k` per state.
    pub means: Vec<DVector<f64>>,
    /// `Σ̃_i^k` per state.
    pub covs: Vec<DMatrix<f64>>,
}

/// All factor parameters. The Gamma factor of `λ̄_i` has rate `T` for
/// every dimension.
#[derive(Debug, Clone)]
pub struct MFState {
    pub dims: Vec<DimFactors>,
    pub gamma_rate: f64,
    /// Dirichlet parameters `s_k^i + α`, indexed `[i][k][k']`.
    pub transition_posterior: Vec<Vec<Vec<f64>>>,
    pub quadrature: QuadratureGrid,
}

impl MFState {
    pub fn gamma_shapes(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.gamma_shape).collect()
    }

    /// Factor means: `E[λ̄] = shape / T`, `m̃`, Dirichlet means.
    pub fn posterior_mean(&self) -> Result<ModelParams> {
        let mut transition = self.transition_posterior.clone();
        for row in transition.iter_mut().flatten() {
            *row = dirichlet_mean(row);
            normalise_row(row);
        }
        ModelParams::new(
            transition,
            self.dims
                .iter()
                .map(|d| d.gamma_shape / self.gamma_rate)
                .collect(),
            self.dims
                .iter()
                .map(|d| d.means.iter().map(|m| m.as_slice().to_vec()).collect())
                .collect(),
        )
    }

    /// Standard deviation of the Gamma factor of `λ̄_dim`.
    pub fn lambda_bar_sd(&self, dim: usize) -> f64 {
        self.dims[dim].gamma_shape.sqrt() / self.gamma_rate
    }

    /// Standard deviation of weight `index` of `w_dim^state`.
    pub fn weight_sd(&self, dim: usize, state: usize, index: usize) -> f64 {
        self.dims[dim].covs[state][(index, index)].sqrt()
    }

    /// Independent draws of all parameters from the factorised posterior.
    pub fn sample(&self, draws: usize, seed: u64) -> Result<Vec<ModelParams>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gammas = self
            .dims
            .iter()
            .map(|d| {
                Gamma::new(d.gamma_shape, 1.0 / self.gamma_rate)
                    .map_err(|e| Error::numeric(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        (0..draws)
            .map(|_| {
                // draws from the floored shape of an empty dimension underflow to zero
                let lambda_bar = gammas
                    .iter()
                    .map(|g| g.sample(&mut rng).max(f64::MIN_POSITIVE))
                    .collect();
                let weights = self
                    .dims
                    .iter()
                    .map(|d| {
                        d.means
                            .iter()
                            .zip(&d.covs)
                            .map(|(m, c)| Ok(sample_mvn(m, c, &mut rng)?.as_slice().to_vec()))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                let transition = sample_transition(&mut rng, &self.transition_posterior);
                ModelParams::new(transition, lambda_bar, weights)
            })
            .collect()
    }
}

/// Converged (or budget-limited) fit.
#[derive(Debug, Clone)]
pub struct MeanFieldFit {
    pub state: MFState,
    /// Training log-likelihood at the factor means after every sweep.
    pub loglik_trace: Vec<LogLik>,
    pub iterations: usize,
    pub converged: bool,
    pub draws: Vec<ModelParams>,
}

/// `h̃ = sqrt(h̄² + v)`. Small negative variances from rounding are clamped.
pub fn tilted_scale(h_bar: f64, variance: f64) -> f64 {
    let v = if variance < 0.0 {
        if variance < -1e-9 * (1.0 + h_bar * h_bar) {
            warn!("negative activation variance {variance:e} clamped to zero");
        }
        0.0
    } else {
        variance
    };
    (h_bar * h_bar + v).sqrt()
}

/// `E[log λ̄] = ψ(shape) − log(rate)` under `Gamma(shape, rate)`.
pub fn expected_log_lambda(shape: f64, rate: f64) -> f64 {
    digamma(shape) - rate.ln()
}

/// ω-marginalised latent rate `λ̄¹ σ(−h̃) exp((h̃ − h̄)/2)`.
#[inline]
pub fn latent_rate(lambda_one: f64, h_bar: f64, h_tilde: f64) -> f64 {
    lambda_one * (log_sigmoid(-h_tilde) + 0.5 * (h_tilde - h_bar)).exp()
}

/// `(h̄, h̃)` at the events and nodes of one `(dimension, state)` block.
#[derive(Debug, Clone, Default)]
pub struct BlockActivations {
    pub event_mean: Vec<f64>,
    pub event_tilde: Vec<f64>,
    pub node_mean: Vec<f64>,
    pub node_tilde: Vec<f64>,
}

/// Integration nodes grouped by state.
struct NodeBlocks {
    features: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
}

impl NodeBlocks {
    fn new(cache: &DesignCache, states: usize) -> Self {
        let nodes = &cache.nodes;
        let mut features = vec![Vec::new(); states];
        let mut weights = vec![Vec::new(); states];
        for (r, f) in nodes.features.iter().enumerate() {
            let s = nodes.states[r];
            features[s].extend_from_slice(f);
            weights[s].push(nodes.weights[r]);
        }
        Self { features, weights }
    }
}

/// Gaussian factor from event PG means, node coefficients `q_r · rate_r`
/// and node PG means:
///
/// ```text
/// precision = Σ_ev E[ω] F Fᵀ + Σ_nodes c E[ω] F Fᵀ + I/σ²
/// linear    = ½ Σ_ev F − ½ Σ_nodes c F
/// ```
#[allow(clippy::too_many_arguments)]
pub fn weight_factor(
    width: usize,
    event_features: &[f64],
    event_pg: &[f64],
    event_half_sum: &DVector<f64>,
    node_features: &[f64],
    node_coef: &[f64],
    node_pg: &[f64],
    weight_variance: f64,
    exec: ExecPolicy,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let mut precision = weighted_gram(event_features, width, event_pg, exec);
    let node_w: Vec<f64> = node_coef.iter().zip(node_pg).map(|(c, w)| c * w).collect();
    precision += weighted_gram(node_features, width, &node_w, exec);
    for d in 0..width {
        precision[(d, d)] += 1.0 / weight_variance;
    }
    let half: Vec<f64> = node_coef.iter().map(|c| 0.5 * c).collect();
    let linear = event_half_sum - weighted_row_sum(node_features, width, &half, exec);
    let post = GaussianPosterior::from_natural(&precision, &linear)?;
    let cov = post.covariance();
    // symmetrise away rounding so the factor stays a valid covariance
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok((post.mean, cov))
}

/// Mean-field fitter bound to one data set.
pub struct MeanField<'a> {
    data: &'a Realization,
    priors: Priors,
    exec: ExecPolicy,
    cache: DesignCache,
    events: EventBlocks,
    nodes: NodeBlocks,
    dirichlet: Vec<Vec<Vec<f64>>>,
    width: usize,
}

impl<'a> MeanField<'a> {
    pub fn new(
        data: &'a Realization,
        basis: &BasisSet,
        priors: Priors,
        nodes_per_interval: usize,
        exec: ExecPolicy,
    ) -> Result<Self> {
        priors.validate(data.states())?;
        if nodes_per_interval == 0 {
            return Err(Error::contract("nodes_per_interval must be at least 1"));
        }
        let cache = DesignCache::gauss_legendre(basis, data, nodes_per_interval, exec)?;
        let events = EventBlocks::new(data, &cache.event_features);
        let nodes = NodeBlocks::new(&cache, data.states());
        let dirichlet = transition_posterior(data, &priors.dirichlet_alpha)?;
        Ok(Self {
            data,
            exec,
            width: basis.feature_len(data.dims()),
            priors,
            cache,
            events,
            nodes,
            dirichlet,
        })
    }

    pub fn design(&self) -> &DesignCache {
        &self.cache
    }

    /// `m̃ = 0`, `Σ̃ = σ² I`, `R̃_i = N_i`.
    pub fn initial_state(&self) -> MFState {
        let k = self.data.states();
        let p = self.width;
        let prior_cov = DMatrix::identity(p, p) * self.priors.weight_variance;
        let dims = (0..self.data.dims())
            .map(|i| {
                let n = self.data.dim_count(i) as f64;
                DimFactors {
                    gamma_shape: (2.0 * n).max(MIN_GAMMA_SHAPE),
                    latent_mass: n,
                    means: vec![DVector::zeros(p); k],
                    covs: vec![prior_cov.clone(); k],
                }
            })
            .collect();
        let nodes = &self.cache.nodes;
        MFState {
            dims,
            gamma_rate: self.data.horizon(),
            transition_posterior: self.dirichlet.clone(),
            quadrature: QuadratureGrid {
                times: nodes.times.clone(),
                weights: nodes.weights.clone(),
                states: nodes.states.clone(),
                interval_end: nodes.interval_end.clone(),
            },
        }
    }

    /// PG factors: `(h̄, h̃)` at every event and node, per state.
    pub fn update_pg_factor(&self, dim: usize, f: &DimFactors) -> Vec<BlockActivations> {
        (0..self.data.states())
            .map(|k| {
                let (m, s) = (&f.means[k], &f.covs[k]);
                let (event_mean, eq) =
                    mean_and_quadratic(&self.events.features[dim][k], self.width, m, s, self.exec);
                let (node_mean, nq) =
                    mean_and_quadratic(&self.nodes.features[k], self.width, m, s, self.exec);
                let tilde = |mean: &[f64], quad: &[f64]| -> Vec<f64> {
                    mean.iter()
                        .zip(quad)
                        .map(|(&h, &v)| tilted_scale(h, v))
                        .collect()
                };
                BlockActivations {
                    event_tilde: tilde(&event_mean, &eq),
                    node_tilde: tilde(&node_mean, &nq),
                    event_mean,
                    node_mean,
                }
            })
            .collect()
    }

    /// Latent-process factor: rates at the nodes of every state, using
    /// `λ̄¹` from the current Gamma factor.
    pub fn latent_rates(&self, f: &DimFactors, acts: &[BlockActivations]) -> Vec<Vec<f64>> {
        let lambda_one = expected_log_lambda(f.gamma_shape, self.data.horizon()).exp();
        acts.iter()
            .map(|a| {
                a.node_mean
                    .iter()
                    .zip(&a.node_tilde)
                    .map(|(&hb, &ht)| latent_rate(lambda_one, hb, ht))
                    .collect()
            })
            .collect()
    }

    /// Gamma factor of `λ̄_dim`: `R̃ = ∫ rate dt`, shape `N + R̃`.
    pub fn update_lambda_factor(&self, dim: usize, f: &mut DimFactors, rates: &[Vec<f64>]) {
        let mass: f64 = rates
            .iter()
            .zip(&self.nodes.weights)
            .map(|(r, w)| r.iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        f.latent_mass = mass;
        f.gamma_shape = (self.data.dim_count(dim) as f64 + mass).max(MIN_GAMMA_SHAPE);
    }

    /// Gaussian factors of all weight vectors of `dim`.
    pub fn update_weight_factor(
        &self,
        dim: usize,
        f: &mut DimFactors,
        acts: &[BlockActivations],
        rates: &[Vec<f64>],
    ) -> Result<()> {
        for (k, a) in acts.iter().enumerate() {
            let event_pg: Vec<f64> = a.event_tilde.iter().map(|&c| pg_mean(1.0, c)).collect();
            let node_pg: Vec<f64> = a.node_tilde.iter().map(|&c| pg_mean(1.0, c)).collect();
            let coef: Vec<f64> = rates[k]
                .iter()
                .zip(&self.nodes.weights[k])
                .map(|(r, w)| r * w)
                .collect();
            let (mean, cov) = weight_factor(
                self.width,
                &self.events.features[dim][k],
                &event_pg,
                &self.events.half_sums[dim][k],
                &self.nodes.features[k],
                &coef,
                &node_pg,
                self.priors.weight_variance,
                self.exec,
            )?;
            f.means[k] = mean;
            f.covs[k] = cov;
        }
        Ok(())
    }

    fn update_dim(&self, dim: usize, f: &mut DimFactors) -> Result<()> {
        let acts = self.update_pg_factor(dim, f);
        let rates = self.latent_rates(f, &acts);
        self.update_lambda_factor(dim, f, &rates);
        self.update_weight_factor(dim, f, &acts, &rates)
    }

    /// One sweep over all dimensions.
    pub fn step(&self, state: &mut MFState) -> Result<()> {
        let results = self
            .exec
            .map_mut(&mut state.dims, |i, f| self.update_dim(i, f));
        results.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(())
    }

    /// Training log-likelihood at the factor means.
    pub fn mean_loglik(&self, state: &MFState) -> Result<LogLik> {
        Ok(log_likelihood_cached(
            &state.posterior_mean()?,
            self.data,
            &self.cache,
            self.exec,
        ))
    }

    pub fn run(&self, opts: &MfOptions) -> Result<MeanFieldFit> {
        if opts.max_iterations == 0 {
            return Err(Error::contract("max_iterations must be at least 1"));
        }
        let mut state = self.initial_state();
        let mut trace: Vec<LogLik> = Vec::with_capacity(opts.max_iterations);
        let mut converged = false;
        for it in 0..opts.max_iterations {
            self.step(&mut state)?;
            let ll = self.mean_loglik(&state)?;
            if !ll.total.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite log-likelihood at iteration {}",
                    it + 1
                )));
            }
            let done = trace
                .last()
                .is_some_and(|prev| (ll.total - prev.total).abs() <= opts.tol * prev.total.abs());
            trace.push(ll);
            if done {
                converged = true;
                break;
            }
        }
        let draws = state.sample(opts.draws, opts.seed)?;
        Ok(MeanFieldFit {
            iterations: trace.len(),
            state,
            loglik_trace: trace,
            converged,
            draws,
        })
    }
}

pub fn run_meanfield(
    data: &Realization,
    basis: &BasisSet,
    priors: &Priors,
    opts: &MfOptions,
) -> Result<MeanFieldFit> {
    MeanField::new(
        data,
        basis,
        priors.clone(),
        opts.nodes_per_interval,
        opts.exec,
    )?
    .run(opts)
}
