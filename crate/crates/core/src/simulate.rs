//! Exact simulation by superposition thinning with event-triggered state
//! switching.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSet, BetaBasis};
use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::model::{dot, sigmoid, Event, ModelParams, Realization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    Fixed(usize),
    #[default]
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub params: ModelParams,
    pub basis: BasisSet,
    pub horizon: f64,
    pub initial_state: InitialState,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::config(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        let expected = self.basis.feature_len(self.params.dims());
        if self.params.feature_len() != expected {
            return Err(Error::config(format!(
                "weights have length {} but M*B+1 = {expected}",
                self.params.feature_len()
            )));
        }
        if let InitialState::Fixed(s) = self.initial_state {
            if s >= self.params.states() {
                return Err(Error::config(format!("initial state {s} >= K")));
            }
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Draws one realization on `[0, T]`.
///
/// Candidates arrive at the superposed rate `Σ λ̄_i`; each is assigned to a
/// dimension proportionally to `λ̄_i` and kept with probability
/// `σ(h_i(t, z(t)))`. Every accepted event immediately draws the next state
/// from its dimension's transition row (self-transitions included, so the
/// random stream does not depend on whether the state changes). Rejected
/// candidates never move the state.
pub fn simulate(config: &SimConfig) -> Result<Realization> {
    config.validate()?;
    let params = &config.params;
    let basis = &config.basis;
    let m = params.dims();
    let k = params.states();
    let nb = basis.len();
    let tf = basis.support_end();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut state = match config.initial_state {
        InitialState::Fixed(s) => s,
        InitialState::UniformRandom => rng.random_range(0..k),
    };
    let total_rate: f64 = params.lambda_bar.iter().sum();
    let gap = Exp::new(total_rate).map_err(|e| Error::config(e.to_string()))?;
    let pick_dim =
        WeightedIndex::new(&params.lambda_bar).map_err(|e| Error::config(e.to_string()))?;
    let rows: Vec<Vec<WeightedIndex<f64>>> = params
        .transition
        .iter()
        .map(|phi| {
            phi.iter()
                .map(|row| WeightedIndex::new(row).map_err(|e| Error::config(e.to_string())))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut history: Vec<Vec<f64>> = vec![Vec::new(); m];
    let mut window_start = vec![0usize; m];
    let mut features = vec![0.0; basis.feature_len(m)];
    let mut events = Vec::new();
    let mut t = 0.0;
    loop {
        t += gap.sample(&mut rng);
        if t > config.horizon {
            break;
        }
        let dim = pick_dim.sample(&mut rng);
        features[0] = 1.0;
        for j in 0..m {
            let hj = &history[j];
            let lo = &mut window_start[j];
            while *lo < hj.len() && t - hj[*lo] > tf {
                *lo += 1;
            }
            for b in 0..nb {
                features[1 + j * nb + b] = hj[*lo..].iter().map(|&s| basis.eval(b, t - s)).sum();
            }
        }
        let h = dot(params.weights(dim, state), &features);
        if rng.random::<f64>() < sigmoid(h) {
            events.push((Event { time: t, dim }, state));
            history[dim].push(t);
            state = rows[dim][state].sample(&mut rng);
        }
    }
    Realization::from_labeled(m, k, config.horizon, events, state)
}

/// Independent realizations, one per seed, in seed order.
pub fn simulate_seeds(
    config: &SimConfig,
    seeds: &[u64],
    exec: ExecPolicy,
) -> Result<Vec<Realization>> {
    exec.map_range(seeds.len(), |n| simulate(&config.with_seed(seeds[n])))
        .into_iter()
        .collect()
}

/// Ground-truth fixture: two dimensions, two states, `T = 2000`, two
/// Beta(50, 50) bases scaled to 6 and shifted by −2 and 0; self-excitation
/// with mutual inhibition whose early/late emphasis flips between states.
pub fn builtin_sim_fixture() -> SimConfig {
    let basis = BasisSet::new(
        vec![
            BetaBasis {
                alpha: 50.0,
                beta: 50.0,
                scale: 6.0,
                shift: -2.0,
            },
            BetaBasis {
                alpha: 50.0,
                beta: 50.0,
                scale: 6.0,
                shift: 0.0,
            },
        ],
        6.0,
    )
    .expect("fixture basis is valid");
    // [μ, w_{i1,1}, w_{i1,2}, w_{i2,1}, w_{i2,2}]
    let weights = vec![
        vec![
            vec![1.0, 1.0, 0.5, -0.5, -0.25],
            vec![0.0, 0.5, 1.0, -0.25, -0.5],
        ],
        vec![
            vec![1.0, -0.25, -0.5, 0.5, 1.0],
            vec![0.0, -0.5, -0.25, 1.0, 0.5],
        ],
    ];
    let phi = vec![vec![0.99, 0.01], vec![0.01, 0.99]];
    let params = ModelParams::new(vec![phi.clone(), phi], vec![2.0, 2.0], weights)
        .expect("fixture parameters are valid");
    SimConfig {
        params,
        basis,
        horizon: 2000.0,
        initial_state: InitialState::Fixed(0),
        seed: 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_config(mu: f64, lambda_bar: f64, horizon: f64, seed: u64) -> SimConfig {
        SimConfig {
            params: ModelParams::new(
                vec![vec![vec![1.0]]],
                vec![lambda_bar],
                vec![vec![vec![mu, 0.0]]],
            )
            .unwrap(),
            basis: BasisSet::new(vec![BetaBasis::new(2.0, 2.0, 1.0, 0.0).unwrap()], 1.0).unwrap(),
            horizon,
            initial_state: InitialState::Fixed(0),
            seed,
        }
    }

    #[test]
    fn homogeneous_count_is_poisson() {
        let r = simulate(&constant_config(0.0, 2.0, 1000.0, 3)).unwrap();
        let n = r.len() as f64;
        assert!((n - 1000.0).abs() < 3.0 * 1000f64.sqrt(), "{n}");
    }

    #[test]
    fn thinning_rate_matches_sigmoid() {
        let cfg = constant_config(-0.7, 3.0, 500.0, 0);
        let seeds: Vec<u64> = (0..40).collect();
        let runs = simulate_seeds(&cfg, &seeds, ExecPolicy::Parallel).unwrap();
        let total: usize = runs.iter().map(Realization::len).sum();
        let mean_rate = 3.0 * sigmoid(-0.7) * 500.0 * seeds.len() as f64;
        assert!((total as f64 - mean_rate).abs() < 4.0 * mean_rate.sqrt());
    }

    #[test]
    fn identity_transitions_never_switch() {
        let mut cfg = builtin_sim_fixture();
        cfg.horizon = 300.0;
        for phi in &mut cfg.params.transition {
            *phi = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        }
        let r = simulate(&cfg).unwrap();
        assert!(!r.is_empty());
        assert!(r.path().switches().is_empty());
    }

    #[test]
    fn fixture_values() {
        let f = builtin_sim_fixture();
        assert_eq!(f.params.influence_weight(0, 1, 0, 0), -0.5);
        assert_eq!(f.params.influence_weight(0, 1, 1, 0), -0.25);
        assert_eq!(f.params.influence_weight(1, 0, 0, 1), -0.5);
        assert_eq!(f.params.lambda_bar, vec![2.0, 2.0]);
        assert_eq!(f.params.transition[0][0][0], 0.99);
        assert_eq!(f.params.base_activation(1, 1), 0.0);
        assert_eq!(f.horizon, 2000.0);
    }

    #[test]
    fn switches_happen_at_events_and_replay() {
        let mut cfg = builtin_sim_fixture();
        cfg.horizon = 400.0;
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a, b);
        for &(t, _) in a.path().switches() {
            assert!(a.events().iter().any(|e| e.time == t));
        }
        assert_ne!(a, simulate(&cfg.with_seed(99)).unwrap());
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = constant_config(0.0, 1.0, 10.0, 0);
        cfg.params.lambda_bar[0] = -1.0;
        assert!(matches!(simulate(&cfg), Err(Error::Config(_))));
        let mut cfg = constant_config(0.0, 1.0, 10.0, 0);
        cfg.params.transition[0][0][0] = 0.9;
        assert!(simulate(&cfg).is_err());
    }
}
