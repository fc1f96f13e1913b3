//! Prior hyperparameters and the conjugate transition-matrix posterior.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Realization;

/// `Dir(α)` on every transition row and `N(0, σ² I)` on every weight vector.
/// The upper bounds carry the scale-invariant prior `p(λ̄) ∝ 1/λ̄`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub dirichlet_alpha: Vec<f64>,
    pub weight_variance: f64,
}

impl Priors {
    /// Uniform Dirichlet over `states` and unit weight variance.
    pub fn standard(states: usize) -> Self {
        Self {
            dirichlet_alpha: vec![1.0; states],
            weight_variance: 1.0,
        }
    }

    pub fn validate(&self, states: usize) -> Result<()> {
        if self.dirichlet_alpha.len() != states {
            return Err(Error::config(format!(
                "alpha has {} entries but K = {states}",
                self.dirichlet_alpha.len()
            )));
        }
        if self
            .dirichlet_alpha
            .iter()
            .any(|&a| !(a > 0.0 && a.is_finite()))
        {
            return Err(Error::config("alpha entries must be positive"));
        }
        if !(self.weight_variance > 0.0 && self.weight_variance.is_finite()) {
            return Err(Error::config("sigma^2 must be positive"));
        }
        Ok(())
    }
}

/// Dirichlet parameters `s_k^i + α` of every row of `Φ_i`, indexed `[i][k][k']`.
pub fn transition_posterior(data: &Realization, alpha: &[f64]) -> Result<Vec<Vec<Vec<f64>>>> {
    if alpha.len() != data.states() || alpha.iter().any(|&a| a.is_nan() || a <= 0.0) {
        return Err(Error::contract("alpha must have K positive entries"));
    }
    Ok((0..data.dims())
        .map(|i| {
            data.transition_counts(i)
                .into_iter()
                .map(|row| row.iter().zip(alpha).map(|(&s, &a)| s as f64 + a).collect())
                .collect()
        })
        .collect())
}

pub fn dirichlet_mean(params: &[f64]) -> Vec<f64> {
    let total: f64 = params.iter().sum();
    params.iter().map(|a| a / total).collect()
}

/// One Dirichlet draw via normalised Gamma variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, params: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = params
        .iter()
        .map(|&a| {
            Gamma::new(a, 1.0)
                .expect("positive Dirichlet parameter")
                .sample(rng)
        })
        .collect();
    let total: f64 = g.iter().sum();
    if total > 0.0 {
        g.iter_mut().for_each(|x| *x /= total);
    } else {
        // all shapes tiny enough to underflow: put the mass on the largest parameter
        let best = params
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(i, _)| i);
        g.iter_mut()
            .enumerate()
            .for_each(|(i, x)| *x = if i == best { 1.0 } else { 0.0 });
    }
    g
}

/// Row sums are forced to exactly one so the draw passes parameter validation.
pub(crate) fn normalise_row(row: &mut [f64]) {
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= total);
    let drift: f64 = 1.0 - row.iter().sum::<f64>();
    if let Some(max) = row.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *max += drift;
    }
}
