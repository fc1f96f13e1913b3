//! Log-likelihood, time-rescaling residuals, Q-Q data and influence curves.

use log::warn;

use crate::basis::BasisSet;
use crate::design::DesignCache;
use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::model::{dot, log_sigmoid, sigmoid, ModelParams, Realization};

/// Log-likelihood split into its point-process and state-process parts.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLik {
    pub point_process: f64,
    pub state: f64,
    pub total: f64,
    /// Point-process log-likelihood of each dimension.
    pub per_dim: Vec<f64>,
    pub events: usize,
}

impl LogLik {
    /// Point-process log-likelihood per observed event.
    pub fn per_event(&self) -> f64 {
        self.point_process / self.events.max(1) as f64
    }

    pub fn per_event_total(&self) -> f64 {
        self.total / self.events.max(1) as f64
    }
}

/// Likelihood, rescaled times and Q-Q points of one fitted model on one data set.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub loglik_total: f64,
    pub loglik_point_process: f64,
    pub loglik_state: f64,
    pub per_event_loglik: f64,
    pub rescaled_times: Vec<Vec<f64>>,
    pub qq_points: Vec<Vec<(f64, f64)>>,
    pub ks: Vec<KsResult>,
}

fn check_shapes(params: &ModelParams, basis: &BasisSet, data: &Realization) -> Result<()> {
    if params.dims() != data.dims() || params.states() != data.states() {
        return Err(Error::contract(format!(
            "model has M = {}, K = {} but data has M = {}, K = {}",
            params.dims(),
            params.states(),
            data.dims(),
            data.states()
        )));
    }
    if params.feature_len() != basis.feature_len(data.dims()) {
        return Err(Error::contract("weight length does not match the basis"));
    }
    Ok(())
}

/// Log-likelihood using precomputed features.
pub fn log_likelihood_cached(
    params: &ModelParams,
    data: &Realization,
    cache: &DesignCache,
    exec: ExecPolicy,
) -> LogLik {
    let m = data.dims();
    let nodes = &cache.nodes;
    let per_dim = exec.map_range(m, |i| {
        let lb = params.lambda_bar[i];
        let ln_lb = lb.ln();
        let events: f64 = data
            .dim_indices(i)
            .iter()
            .map(|&n| {
                let h = dot(
                    params.weights(i, data.event_state(n)),
                    cache.event_features.row(n),
                );
                ln_lb + log_sigmoid(h)
            })
            .sum();
        let compensator: f64 = nodes
            .features
            .iter()
            .zip(&nodes.weights)
            .zip(&nodes.states)
            .map(|((f, w), &s)| w * sigmoid(dot(params.weights(i, s), f)))
            .sum();
        events - lb * compensator
    });
    let state = state_log_likelihood(params, data);
    let point_process: f64 = per_dim.iter().sum();
    LogLik {
        point_process,
        state,
        total: point_process + state,
        per_dim,
        events: data.len(),
    }
}

/// `Σ log φ_i(z(t_n), z(t_n⁺))`; `−∞` (with a warning) when an observed
/// transition has probability zero.
pub fn state_log_likelihood(params: &ModelParams, data: &Realization) -> f64 {
    let mut ll = 0.0;
    for (n, ev) in data.events().iter().enumerate() {
        let p = params.transition[ev.dim][data.event_state(n)][data.next_state(n)];
        if p <= 0.0 {
            warn!(
                "transition {} -> {} at t = {} has zero probability",
                data.event_state(n) + 1,
                data.next_state(n) + 1,
                ev.time
            );
            return f64::NEG_INFINITY;
        }
        ll += p.ln();
    }
    ll
}

/// Log-likelihood with `grid_points` Gauss-Legendre nodes per inter-event interval.
pub fn log_likelihood(
    params: &ModelParams,
    basis: &BasisSet,
    data: &Realization,
    grid_points: usize,
    exec: ExecPolicy,
) -> Result<LogLik> {
    check_shapes(params, basis, data)?;
    if grid_points < 2 {
        return Err(Error::contract(
            "need at least 2 quadrature points per interval",
        ));
    }
    let cache = DesignCache::gauss_legendre(basis, data, grid_points, exec)?;
    Ok(log_likelihood_cached(params, data, &cache, exec))
}

/// Compensator `∫₀^{t_n} λ_i(u) du` at every event of `dim`.
///
/// Requires a Gauss-Legendre cache, whose intervals end exactly at events.
pub fn rescale_cached(
    params: &ModelParams,
    data: &Realization,
    cache: &DesignCache,
    dim: usize,
) -> Result<Vec<f64>> {
    let nodes = &cache.nodes;
    if nodes.interval_end.is_empty() {
        return Err(Error::contract(
            "rescaling needs a per-interval Gauss-Legendre grid",
        ));
    }
    let lb = params.lambda_bar[dim];
    let intervals = data.intervals();
    let mut out = Vec::with_capacity(data.dim_count(dim));
    let mut acc = 0.0;
    let mut node = 0;
    let mut iv = 0;
    for &n in data.dim_indices(dim) {
        let t = data.events()[n].time;
        while iv < intervals.len() && intervals[iv].1 <= t {
            let end = nodes.interval_end[iv];
            for r in node..end {
                let h = dot(params.weights(dim, nodes.states[r]), nodes.features.row(r));
                acc += nodes.weights[r] * lb * sigmoid(h);
            }
            node = end;
            iv += 1;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Rescaled event times `τ_n` of one dimension.
pub fn rescale(
    params: &ModelParams,
    basis: &BasisSet,
    data: &Realization,
    dim: usize,
    grid_points: usize,
    exec: ExecPolicy,
) -> Result<Vec<f64>> {
    check_shapes(params, basis, data)?;
    if dim >= data.dims() {
        return Err(Error::Range(format!("dimension {dim} >= M")));
    }
    let cache = DesignCache::gauss_legendre(basis, data, grid_points.max(2), exec)?;
    rescale_cached(params, data, &cache, dim)
}

/// Transformed interarrivals `u = 1 − exp(−Δτ)`, the first measured from 0.
pub fn uniform_residuals(rescaled: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    rescaled
        .iter()
        .map(|&tau| {
            let u = -(-(tau - prev)).exp_m1();
            prev = tau;
            u
        })
        .collect()
}

/// Q-Q pairs `(theoretical, empirical)` for the transformed interarrivals
/// against Uniform(0, 1), with plotting positions `(r − 0.5)/n`.
pub fn qq_data(rescaled: &[f64]) -> Vec<(f64, f64)> {
    if rescaled.len() < 2 {
        return Vec::new();
    }
    let mut u = uniform_residuals(rescaled);
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    u.into_iter()
        .enumerate()
        .map(|(r, x)| ((r as f64 + 0.5) / n, x))
        .collect()
}

/// One-sample Kolmogorov-Smirnov test result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

impl KsResult {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// KS test of `samples` against Uniform(0, 1).
pub fn ks_uniform(samples: &[f64]) -> KsResult {
    let mut u = samples.to_vec();
    u.sort_by(f64::total_cmp);
    let n = u.len();
    if n == 0 {
        return KsResult {
            statistic: 0.0,
            p_value: 1.0,
            n,
        };
    }
    let nf = n as f64;
    let d = u
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            ((i as f64 + 1.0) / nf - x).max(x - i as f64 / nf)
        })
        .fold(0.0, f64::max);
    let sqrt_n = nf.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_q((sqrt_n + 0.12 + 0.11 / sqrt_n) * d),
        n,
    }
}

/// Critical value of the KS statistic at `level` for sample size `n`
/// (inverse of the same approximation used by [`ks_uniform`]).
pub fn ks_critical_value(n: usize, level: f64) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let (mut lo, mut hi) = (0.0, 5.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_q(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi) / (sqrt_n + 0.12 + 0.11 / sqrt_n)
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (−1)^{k−1} exp(−2k²λ²)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let a = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = sign * (a * kf * kf).exp();
        sum += term;
        if term.abs() < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Full report: likelihood, rescaled times, Q-Q points and KS tests per dimension.
pub fn fit_report(
    params: &ModelParams,
    basis: &BasisSet,
    data: &Realization,
    grid_points: usize,
    exec: ExecPolicy,
) -> Result<FitReport> {
    check_shapes(params, basis, data)?;
    let cache = DesignCache::gauss_legendre(basis, data, grid_points.max(2), exec)?;
    let ll = log_likelihood_cached(params, data, &cache, exec);
    let rescaled = (0..data.dims())
        .map(|i| rescale_cached(params, data, &cache, i))
        .collect::<Result<Vec<_>>>()?;
    let qq_points = rescaled.iter().map(|r| qq_data(r)).collect();
    let ks = rescaled
        .iter()
        .map(|r| ks_uniform(&uniform_residuals(r)))
        .collect();
    Ok(FitReport {
        loglik_total: ll.total,
        loglik_point_process: ll.point_process,
        loglik_state: ll.state,
        per_event_loglik: ll.per_event(),
        rescaled_times: rescaled,
        qq_points,
        ks,
    })
}

/// `f_ij^k(lag) = Σ_b w_ijb^k f̃_b(lag)` on `grid`.
pub fn influence_curve(
    params: &ModelParams,
    basis: &BasisSet,
    dim: usize,
    source: usize,
    state: usize,
    grid: &[f64],
) -> Result<Vec<f64>> {
    if dim >= params.dims() || source >= params.dims() || state >= params.states() {
        return Err(Error::Range("influence index out of range".into()));
    }
    if let Some(&bad) = grid
        .iter()
        .find(|&&x| !(0.0..=basis.support_end()).contains(&x))
    {
        return Err(Error::Range(format!("lag {bad} outside [0, T_f]")));
    }
    Ok(grid
        .iter()
        .map(|&lag| {
            (0..basis.len())
                .map(|b| params.influence_weight(dim, source, b, state) * basis.eval(b, lag))
                .sum()
        })
        .collect())
}
