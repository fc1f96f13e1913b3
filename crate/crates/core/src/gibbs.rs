//! Gibbs sampler on the Pólya-Gamma / marked-Poisson augmented model.
//!
//! One sweep visits, for every dimension `i`,
//!
//! 1. the PG marks `ω_n^i ~ PG(1, h_i(t_n^i))` of the observed events,
//! 2. the latent marked Poisson process `Π_i`, drawn by thinning at rate
//!    `λ̄_i σ(−h_i(t))` with marks `PG(1, h_i(t))`,
//! 3. the transition rows `Dir(s_k^i + α)`,
//! 4. the upper bound `λ̄_i ~ Gamma(N_i + R_i, T)`,
//! 5. the weights `w_i^k ~ N(m_i^k, Σ_i^k)` for every state.
//!
//! Given the data, the blocks of different dimensions are independent, so
//! each dimension owns a random stream and they are updated in parallel.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma};

use crate::basis::{features_for, BasisSet, FeatureMatrix};
use crate::design::{times_by_dim, DesignCache, EventBlocks};
use crate::error::{Error, Result};
use crate::evaluation::{log_likelihood_cached, LogLik};
use crate::exec::ExecPolicy;
use crate::linalg::{weighted_gram, weighted_row_sum, GaussianPosterior};
use crate::model::{dot, sigmoid, ModelParams, Realization};
use crate::polya_gamma::pg_sample;
use crate::priors::{normalise_row, sample_dirichlet, transition_posterior, Priors};

/// Grid size used for the in-chain likelihood trace at `T = 2000`; scaled
/// proportionally to the horizon for other data.
pub const DEFAULT_TRACE_POINTS_PER_2000: usize = 200_000;

#[derive(Debug, Clone)]
pub struct GibbsOptions {
    pub iterations: usize,
    /// Defaults to `iterations / 2`.
    pub burn_in: Option<usize>,
    pub thin: usize,
    pub seed: u64,
    /// Midpoint-grid size for the likelihood trace; `None` scales the
    /// default with `T`, `Some(0)` disables the trace.
    pub trace_points: Option<usize>,
    pub exec: ExecPolicy,
}

impl Default for GibbsOptions {
    fn default() -> Self {
        Self {
            iterations: 200,
            burn_in: None,
            thin: 1,
            seed: 0,
            trace_points: None,
            exec: ExecPolicy::default(),
        }
    }
}

/// Realisation of the latent marked Poisson process of one dimension.
#[derive(Debug, Clone)]
pub struct LatentProcess {
    pub times: Vec<f64>,
    pub states: Vec<usize>,
    pub marks: Vec<f64>,
    pub features: FeatureMatrix,
}

impl LatentProcess {
    fn empty(width: usize) -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            marks: Vec::new(),
            features: FeatureMatrix::zeros(0, width),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Chain state of one dimension.
#[derive(Debug, Clone)]
pub struct DimState {
    /// PG marks aligned with `Realization::dim_indices(i)`.
    pub pg_marks: Vec<f64>,
    pub latent: LatentProcess,
    pub lambda_bar: f64,
    pub weights: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone)]
pub struct GibbsState {
    pub dims: Vec<DimState>,
    pub transition: Vec<Vec<Vec<f64>>>,
    rng: ChaCha8Rng,
}

impl GibbsState {
    pub fn params(&self) -> ModelParams {
        ModelParams {
            transition: self.transition.clone(),
            lambda_bar: self.dims.iter().map(|d| d.lambda_bar).collect(),
            weights: self.dims.iter().map(|d| d.weights.clone()).collect(),
        }
    }
}

/// Thinned post-burn-in samples and the per-iteration training likelihood.
#[derive(Debug, Clone)]
pub struct GibbsChain {
    pub samples: Vec<ModelParams>,
    pub loglik_trace: Vec<LogLik>,
    pub latent_counts: Vec<Vec<usize>>,
}

/// Analytic Gibbs sampler bound to one data set.
pub struct GibbsSampler<'a> {
    data: &'a Realization,
    basis: &'a BasisSet,
    priors: Priors,
    exec: ExecPolicy,
    event_features: FeatureMatrix,
    blocks: EventBlocks,
    dirichlet: Vec<Vec<Vec<f64>>>,
    width: usize,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(
        data: &'a Realization,
        basis: &'a BasisSet,
        priors: Priors,
        exec: ExecPolicy,
    ) -> Result<Self> {
        priors.validate(data.states())?;
        if data.is_empty() {
            return Err(Error::contract("Gibbs sampling needs at least one event"));
        }
        let times: Vec<f64> = data.events().iter().map(|e| e.time).collect();
        let event_features = features_for(basis, &times_by_dim(data), &times, exec)?;
        let blocks = EventBlocks::new(data, &event_features);
        let dirichlet = transition_posterior(data, &priors.dirichlet_alpha)?;
        Ok(Self {
            data,
            basis,
            priors,
            exec,
            width: basis.feature_len(data.dims()),
            event_features,
            blocks,
            dirichlet,
        })
    }

    /// Initial state: zero weights, `λ̄_i = 2 N_i / T` (so `λ̄σ(0)` is the
    /// empirical rate), prior-mean transitions and empty latent processes.
    pub fn initial_state(&self, seed: u64) -> GibbsState {
        let (m, k) = (self.data.dims(), self.data.states());
        let t = self.data.horizon();
        let dims = (0..m)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(1 + i as u64);
                DimState {
                    pg_marks: vec![0.25; self.data.dim_count(i)],
                    latent: LatentProcess::empty(self.width),
                    lambda_bar: 2.0 * self.data.dim_count(i).max(1) as f64 / t,
                    weights: vec![vec![0.0; self.width]; k],
                    rng,
                }
            })
            .collect();
        let alpha = crate::priors::dirichlet_mean(&self.priors.dirichlet_alpha);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        GibbsState {
            dims,
            transition: vec![vec![alpha; k]; m],
            rng,
        }
    }

    /// Current activations `h_i(t_n^i, z(t_n^i))` at the events of `dim`.
    fn event_activations(&self, dim: usize, weights: &[Vec<f64>]) -> Vec<f64> {
        self.data
            .dim_indices(dim)
            .iter()
            .map(|&n| {
                dot(
                    &weights[self.data.event_state(n)],
                    self.event_features.row(n),
                )
            })
            .collect()
    }

    /// Step 1: PG marks of the observed events.
    pub fn sample_pg_marks(&self, dim: usize, st: &mut DimState) {
        let h = self.event_activations(dim, &st.weights);
        st.pg_marks = h.iter().map(|&c| pg_sample(&mut st.rng, c)).collect();
    }

    /// Step 2: latent marked Poisson process by thinning.
    pub fn sample_latent_process(&self, _dim: usize, st: &mut DimState) -> Result<()> {
        let horizon = self.data.horizon();
        let gap = Exp::new(st.lambda_bar).map_err(|e| Error::numeric(e.to_string()))?;
        let mut candidates = Vec::new();
        let mut t = gap.sample(&mut st.rng);
        while t < horizon {
            candidates.push(t);
            t += gap.sample(&mut st.rng);
        }
        let features = features_for(self.basis, &times_by_dim(self.data), &candidates, self.exec)?;
        let mut latent = LatentProcess::empty(self.width);
        let mut flat = Vec::new();
        for (r, &t) in candidates.iter().enumerate() {
            let s = self.data.path().state_at(t)?;
            let f = features.row(r);
            let h = dot(&st.weights[s], f);
            if st.rng.random::<f64>() < sigmoid(-h) {
                latent.times.push(t);
                latent.states.push(s);
                latent.marks.push(pg_sample(&mut st.rng, h));
                flat.extend_from_slice(f);
            }
        }
        latent.features = FeatureMatrix::from_flat(self.width, flat);
        st.latent = latent;
        Ok(())
    }

    /// Step 4: `λ̄_i ~ Gamma(N_i + R_i, T)`.
    pub fn sample_lambda_bar(&self, dim: usize, st: &mut DimState) -> Result<()> {
        st.lambda_bar = sample_lambda_bar(
            &mut st.rng,
            self.data.dim_count(dim),
            st.latent.len(),
            self.data.horizon(),
        )?;
        Ok(())
    }

    /// Gaussian conditional of `w_i^k` given the PG marks and `Π_i`.
    pub fn weight_conditional(
        &self,
        dim: usize,
        state: usize,
        st: &DimState,
    ) -> Result<GaussianPosterior> {
        let p = self.width;
        let rows = &self.blocks.rows[dim][state];
        let ev_flat = &self.blocks.features[dim][state];
        let ev_w: Vec<f64> = rows.iter().map(|&pos| st.pg_marks[pos]).collect();
        let mut precision = weighted_gram(ev_flat, p, &ev_w, self.exec);
        let mut linear = self.blocks.half_sums[dim][state].clone();

        let lat = &st.latent;
        let idx: Vec<usize> = (0..lat.len()).filter(|&r| lat.states[r] == state).collect();
        if !idx.is_empty() {
            let mut flat = Vec::with_capacity(idx.len() * p);
            for &r in &idx {
                flat.extend_from_slice(lat.features.row(r));
            }
            let marks: Vec<f64> = idx.iter().map(|&r| lat.marks[r]).collect();
            precision += weighted_gram(&flat, p, &marks, self.exec);
            linear -= weighted_row_sum(&flat, p, &vec![0.5; idx.len()], self.exec);
        }
        let prior_precision = 1.0 / self.priors.weight_variance;
        for d in 0..p {
            precision[(d, d)] += prior_precision;
        }
        GaussianPosterior::from_natural(&precision, &linear)
    }

    /// Step 5: all `K` weight vectors of one dimension.
    pub fn sample_weights(&self, dim: usize, st: &mut DimState) -> Result<()> {
        for k in 0..self.data.states() {
            let post = self.weight_conditional(dim, k, st)?;
            st.weights[k] = post.sample(&mut st.rng).as_slice().to_vec();
        }
        Ok(())
    }

    /// Step 3: every transition row from its Dirichlet posterior.
    pub fn sample_transition(&self, state: &mut GibbsState) {
        state.transition = sample_transition(&mut state.rng, &self.dirichlet);
    }

    fn update_dim(&self, dim: usize, st: &mut DimState) -> Result<()> {
        self.sample_pg_marks(dim, st);
        self.sample_latent_process(dim, st)?;
        self.sample_lambda_bar(dim, st)?;
        self.sample_weights(dim, st)
    }

    /// One full sweep.
    pub fn step(&self, state: &mut GibbsState) -> Result<()> {
        // dimension blocks are conditionally independent given the data
        let results = self
            .exec
            .map_mut(&mut state.dims, |i, st| self.update_dim(i, st));
        results.into_iter().collect::<Result<Vec<_>>>()?;
        self.sample_transition(state);
        Ok(())
    }

    pub fn run(&self, opts: &GibbsOptions) -> Result<GibbsChain> {
        let burn_in = opts.burn_in.unwrap_or(opts.iterations / 2);
        if opts.iterations <= burn_in {
            return Err(Error::contract("iterations must exceed burn_in"));
        }
        if opts.thin == 0 {
            return Err(Error::contract("thin must be at least 1"));
        }
        let trace_points = opts
            .trace_points
            .unwrap_or_else(|| default_trace_points(self.data.horizon()));
        let trace_cache = if trace_points > 0 {
            Some(DesignCache::new(
                self.basis,
                self.data,
                crate::design::IntegrationNodes::midpoint(
                    self.basis,
                    self.data,
                    trace_points,
                    self.exec,
                )?,
                self.exec,
            )?)
        } else {
            None
        };
        let mut state = self.initial_state(opts.seed);
        let mut chain = GibbsChain {
            samples: Vec::with_capacity((opts.iterations - burn_in) / opts.thin),
            loglik_trace: Vec::with_capacity(opts.iterations),
            latent_counts: Vec::with_capacity(opts.iterations),
        };
        for it in 0..opts.iterations {
            self.step(&mut state)?;
            let params = state.params();
            if let Some(cache) = &trace_cache {
                chain
                    .loglik_trace
                    .push(log_likelihood_cached(&params, self.data, cache, self.exec));
            }
            chain
                .latent_counts
                .push(state.dims.iter().map(|d| d.latent.len()).collect());
            if it >= burn_in && (it - burn_in + 1).is_multiple_of(opts.thin) {
                chain.samples.push(params);
            }
        }
        Ok(chain)
    }
}

pub fn default_trace_points(horizon: f64) -> usize {
    ((DEFAULT_TRACE_POINTS_PER_2000 as f64 * horizon / 2000.0).round() as usize).max(1000)
}

/// `λ̄ ~ Gamma(N + R, rate T)`; the improper prior needs `N + R ≥ 1`.
pub fn sample_lambda_bar<R: Rng + ?Sized>(
    rng: &mut R,
    observed: usize,
    latent: usize,
    horizon: f64,
) -> Result<f64> {
    let shape = (observed + latent) as f64;
    if shape < 1.0 {
        return Err(Error::numeric(
            "improper posterior for lambda_bar: no observed or latent points",
        ));
    }
    let g = Gamma::new(shape, 1.0 / horizon).map_err(|e| Error::numeric(e.to_string()))?;
    Ok(g.sample(rng))
}

/// One draw of every transition matrix from its Dirichlet posterior
/// parameters (`[i][k][k']`, as from [`transition_posterior`]).
pub fn sample_transition<R: Rng + ?Sized>(
    rng: &mut R,
    dirichlet: &[Vec<Vec<f64>>],
) -> Vec<Vec<Vec<f64>>> {
    dirichlet
        .iter()
        .map(|rows| {
            rows.iter()
                .map(|a| {
                    let mut row = sample_dirichlet(rng, a);
                    normalise_row(&mut row);
                    row
                })
                .collect()
        })
        .collect()
}

/// Runs the sampler from scratch.
pub fn run_gibbs(
    data: &Realization,
    basis: &BasisSet,
    priors: &Priors,
    opts: &GibbsOptions,
) -> Result<GibbsChain> {
    GibbsSampler::new(data, basis, priors.clone(), opts.exec)?.run(opts)
}

/// Posterior mean of the chain's samples (transition rows renormalised).
pub fn posterior_mean(samples: &[ModelParams]) -> Result<ModelParams> {
    let first = samples
        .first()
        .ok_or_else(|| Error::contract("no posterior samples"))?;
    let n = samples.len() as f64;
    let mut mean = first.clone();
    let zero = |x: &mut f64| *x = 0.0;
    mean.lambda_bar.iter_mut().for_each(zero);
    mean.transition
        .iter_mut()
        .flatten()
        .flatten()
        .for_each(zero);
    mean.weights.iter_mut().flatten().flatten().for_each(zero);
    for s in samples {
        for (a, b) in mean.lambda_bar.iter_mut().zip(&s.lambda_bar) {
            *a += b / n;
        }
        for (a, b) in mean
            .transition
            .iter_mut()
            .flatten()
            .flatten()
            .zip(s.transition.iter().flatten().flatten())
        {
            *a += b / n;
        }
        for (a, b) in mean
            .weights
            .iter_mut()
            .flatten()
            .flatten()
            .zip(s.weights.iter().flatten().flatten())
        {
            *a += b / n;
        }
    }
    mean.transition
        .iter_mut()
        .flatten()
        .for_each(|row| normalise_row(row));
    mean.validate()?;
    Ok(mean)
}

/// Sample standard deviation of a scalar functional over the chain.
pub fn posterior_sd(samples: &[ModelParams], f: impl Fn(&ModelParams) -> f64) -> f64 {
    let xs: Vec<f64> = samples.iter().map(f).collect();
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Precision and natural mean of one weight conditional, for inspection.
pub fn weight_natural_parameters(post: &GaussianPosterior) -> (DMatrix<f64>, DVector<f64>) {
    let l = post.precision_factor().l();
    let precision = &l * l.transpose();
    let linear = &precision * &post.mean;
    (precision, linear)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BetaBasis;
    use crate::model::Event;
    use crate::polya_gamma::{g_kernel, pg_mean};
    use crate::simulate::{simulate, InitialState, SimConfig};

    fn one_basis() -> BasisSet {
        BasisSet::new(vec![BetaBasis::new(2.0, 2.0, 1.0, 0.0).unwrap()], 1.0).unwrap()
    }

    fn homogeneous_data(n: usize, horizon: f64, states: usize) -> Realization {
        let ev = (0..n)
            .map(|k| {
                (
                    Event {
                        time: (k as f64 + 0.5) * horizon / n as f64,
                        dim: 0,
                    },
                    0,
                )
            })
            .collect();
        Realization::from_labeled(1, states, horizon, ev, 0).unwrap()
    }

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn pg_marks_follow_activation() {
        let data = homogeneous_data(4000, 100.0, 1);
        let basis = one_basis();
        let sampler =
            GibbsSampler::new(&data, &basis, Priors::standard(1), ExecPolicy::Sequential).unwrap();
        let mut state = sampler.initial_state(3);
        let st = &mut state.dims[0];
        sampler.sample_pg_marks(0, st);
        let (m, se) = mean_se(&st.pg_marks);
        assert!((m - 0.25).abs() < 3.0 * se);
        // constant activation c through the base weight; spacing 0.025 < support 1
        // so features are not zero, keep the influence weight at 0
        st.weights[0] = vec![1.7, 0.0];
        sampler.sample_pg_marks(0, st);
        let (m, se) = mean_se(&st.pg_marks);
        assert!((m - pg_mean(1.0, 1.7)).abs() < 3.0 * se);
    }

    #[test]
    fn empty_dimension_has_no_marks() {
        let ev = vec![(Event { time: 1.0, dim: 0 }, 0)];
        let data = Realization::from_labeled(2, 1, 10.0, ev, 0).unwrap();
        let basis = one_basis();
        let sampler =
            GibbsSampler::new(&data, &basis, Priors::standard(1), ExecPolicy::Sequential).unwrap();
        let mut state = sampler.initial_state(0);
        sampler.sample_pg_marks(1, &mut state.dims[1]);
        assert!(state.dims[1].pg_marks.is_empty());
    }

    #[test]
    fn latent_process_counts() {
        let data = homogeneous_data(10, 1000.0, 1);
        let basis = one_basis();
        let sampler =
            GibbsSampler::new(&data, &basis, Priors::standard(1), ExecPolicy::Parallel).unwrap();
        let mut state = sampler.initial_state(8);
        let st = &mut state.dims[0];
        st.lambda_bar = 3.0;
        // h ≡ 0: |Π| ~ Poisson(λ̄T/2)
        sampler.sample_latent_process(0, st).unwrap();
        let mean = 1500.0;
        assert!((st.latent.len() as f64 - mean).abs() < 4.0 * mean.sqrt());
        assert!(st.latent.marks.iter().all(|&w| w > 0.0));
        assert!(st.latent.times.iter().all(|&t| (0.0..=1000.0).contains(&t)));
        // h ≡ μ: acceptance fraction σ(−μ)
        st.weights[0] = vec![0.8, 0.0];
        let mut accepted = 0;
        let reps = 20;
        for _ in 0..reps {
            sampler.sample_latent_process(0, st).unwrap();
            accepted += st.latent.len();
        }
        let expected = reps as f64 * 3000.0 * sigmoid(-0.8);
        assert!((accepted as f64 - expected).abs() < 4.0 * expected.sqrt());
        // h → +∞: nothing survives
        st.weights[0] = vec![60.0, 0.0];
        sampler.sample_latent_process(0, st).unwrap();
        assert_eq!(st.latent.len(), 0);
    }

    #[test]
    fn transition_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = vec![vec![vec![99.0, 3.0], vec![1.0, 1.0]]];
        let n = 20_000;
        let mut acc = [0.0; 2];
        for _ in 0..n {
            let t = sample_transition(&mut rng, &params);
            acc[0] += t[0][0][0];
            acc[1] += t[0][1][0];
            assert!((t[0][0].iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        assert!((acc[0] / n as f64 - 0.9706).abs() < 1e-3);
        // prior row Dir(1,1): mean 1/2, sd 0.289
        assert!((acc[1] / n as f64 - 0.5).abs() < 4.0 * 0.289 / (n as f64).sqrt());
    }

    #[test]
    fn transition_counts_are_consistent() {
        let mut cfg = crate::simulate::builtin_sim_fixture();
        cfg.horizon = 400.0;
        let data = simulate(&cfg).unwrap();
        for i in 0..2 {
            let counts = data.transition_counts(i);
            for (k, row) in counts.iter().enumerate() {
                let in_state = data
                    .dim_indices(i)
                    .iter()
                    .filter(|&&n| data.event_state(n) == k)
                    .count();
                assert_eq!(row.iter().sum::<usize>(), in_state);
            }
        }
    }

    #[test]
    fn lambda_bar_moments_and_guard() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            sample_lambda_bar(&mut rng, 0, 0, 10.0),
            Err(Error::Numeric(_))
        ));
        let xs: Vec<f64> = (0..20_000)
            .map(|_| sample_lambda_bar(&mut rng, 1200, 800, 1000.0).unwrap())
            .collect();
        let (m, se) = mean_se(&xs);
        assert!((m - 2.0).abs() < 4.0 * se);
        let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
        assert!((sd - 0.0447).abs() < 0.002, "{sd}");
    }

    #[test]
    fn weights_without_data_follow_prior() {
        // state 1 is never visited
        let data = homogeneous_data(5, 50.0, 2);
        let basis = one_basis();
        let mut priors = Priors::standard(2);
        priors.weight_variance = 2.5;
        let sampler = GibbsSampler::new(&data, &basis, priors, ExecPolicy::Sequential).unwrap();
        let state = sampler.initial_state(0);
        let post = sampler.weight_conditional(0, 1, &state.dims[0]).unwrap();
        assert!(post.mean.iter().all(|&x| x == 0.0));
        let cov = post.covariance();
        assert!((cov[(0, 0)] - 2.5).abs() < 1e-12 && cov[(0, 1)].abs() < 1e-12);
    }

    /// Weight conditional vs the w-dependent terms of the augmented joint,
    /// for fixed marks and latent points.
    #[test]
    fn weight_conditional_is_conjugate() {
        let mut cfg = SimConfig {
            params: ModelParams::new(
                vec![vec![vec![0.9, 0.1], vec![0.2, 0.8]]],
                vec![3.0],
                vec![vec![vec![0.2, 0.5], vec![-0.3, 0.2]]],
            )
            .unwrap(),
            basis: one_basis(),
            horizon: 40.0,
            initial_state: InitialState::Fixed(0),
            seed: 4,
        };
        cfg.seed = 4;
        let data = simulate(&cfg).unwrap();
        let sampler = GibbsSampler::new(
            &data,
            &cfg.basis,
            Priors::standard(2),
            ExecPolicy::Sequential,
        )
        .unwrap();
        let mut state = sampler.initial_state(2);
        let st = &mut state.dims[0];
        st.lambda_bar = 3.0;
        sampler.sample_pg_marks(0, st);
        sampler.sample_latent_process(0, st).unwrap();
        for k in 0..2 {
            let post = sampler.weight_conditional(0, k, st).unwrap();
            let (precision, _) = weight_natural_parameters(&post);
            let log_cond = |w: &DVector<f64>| {
                let d = w - &post.mean;
                -0.5 * (d.transpose() * &precision * &d)[(0, 0)]
            };
            let log_joint = |w: &DVector<f64>| {
                let mut acc = -0.5 * w.norm_squared();
                for (pos, &n) in data.dim_indices(0).iter().enumerate() {
                    if data.event_state(n) == k {
                        let h = w
                            .as_slice()
                            .iter()
                            .zip(sampler.event_features.row(n))
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                        acc += g_kernel(st.pg_marks[pos], h);
                    }
                }
                for r in 0..st.latent.len() {
                    if st.latent.states[r] == k {
                        let h: f64 = w
                            .as_slice()
                            .iter()
                            .zip(st.latent.features.row(r))
                            .map(|(a, b)| a * b)
                            .sum();
                        acc += g_kernel(st.latent.marks[r], -h);
                    }
                }
                acc
            };
            let probes = [[0.0, 0.0], [1.0, -0.5], [-2.0, 0.3], [0.4, 2.2]];
            let diffs: Vec<f64> = probes
                .iter()
                .map(|p| {
                    let w = DVector::from_column_slice(p);
                    log_joint(&w) - log_cond(&w)
                })
                .collect();
            for d in &diffs[1..] {
                assert!((d - diffs[0]).abs() < 1e-8, "{diffs:?}");
            }
        }
    }

    #[test]
    fn one_parameter_conditional_matches_grid() {
        let data = homogeneous_data(30, 200.0, 1);
        let basis = BasisSet::new(vec![BetaBasis::new(2.0, 2.0, 0.5, 0.0).unwrap()], 0.5).unwrap();
        let sampler =
            GibbsSampler::new(&data, &basis, Priors::standard(1), ExecPolicy::Sequential).unwrap();
        let mut state = sampler.initial_state(6);
        let st = &mut state.dims[0];
        st.lambda_bar = 0.4;
        sampler.sample_pg_marks(0, st);
        sampler.sample_latent_process(0, st).unwrap();
        let post = sampler.weight_conditional(0, 0, st).unwrap();
        // Gaussian conditional of w0 given w1 = 0, so that h = w0 everywhere
        let (precision, _) = weight_natural_parameters(&post);
        let var = 1.0 / precision[(0, 0)];
        let mu = post.mean[0] + precision[(0, 1)] / precision[(0, 0)] * post.mean[1];
        // unnormalised log density on a grid
        let grid: Vec<f64> = (0..20_001)
            .map(|k| -6.0 + 12.0 * k as f64 / 20_000.0)
            .collect();
        let dx = grid[1] - grid[0];
        let logp: Vec<f64> = grid
            .iter()
            .map(|&w| {
                let mut acc = -0.5 * w * w;
                for &om in &st.pg_marks {
                    acc += g_kernel(om, w);
                }
                for &om in &st.latent.marks {
                    acc += g_kernel(om, -w);
                }
                acc
            })
            .collect();
        let max = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let unnorm: Vec<f64> = logp.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = unnorm.iter().sum::<f64>() * dx;
        let tv: f64 = grid
            .iter()
            .zip(&unnorm)
            .map(|(&w, &u)| {
                let gauss = (-(w - mu).powi(2) / (2.0 * var)).exp()
                    / (2.0 * std::f64::consts::PI * var).sqrt();
                (u / z - gauss).abs()
            })
            .sum::<f64>()
            * dx
            * 0.5;
        assert!(tv < 0.01, "total variation {tv}");
    }

    #[test]
    fn chain_is_reproducible_and_sized() {
        let mut cfg = crate::simulate::builtin_sim_fixture();
        cfg.horizon = 150.0;
        let data = simulate(&cfg).unwrap();
        let opts = GibbsOptions {
            iterations: 12,
            burn_in: Some(4),
            thin: 3,
            seed: 5,
            trace_points: Some(2000),
            exec: ExecPolicy::Parallel,
        };
        let a = run_gibbs(&data, &cfg.basis, &Priors::standard(2), &opts).unwrap();
        let b = run_gibbs(
            &data,
            &cfg.basis,
            &Priors::standard(2),
            &GibbsOptions {
                exec: ExecPolicy::Sequential,
                ..opts.clone()
            },
        )
        .unwrap();
        assert_eq!(a.samples.len(), (12 - 4) / 3);
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.loglik_trace.len(), 12);
        assert!(run_gibbs(
            &data,
            &cfg.basis,
            &Priors::standard(2),
            &GibbsOptions {
                burn_in: Some(12),
                ..opts
            }
        )
        .is_err());
    }

    #[test]
    fn empty_data_rejected() {
        let data = Realization::from_labeled(1, 1, 10.0, vec![], 0).unwrap();
        assert!(GibbsSampler::new(
            &data,
            &one_basis(),
            Priors::standard(1),
            ExecPolicy::Sequential
        )
        .is_err());
    }
}
