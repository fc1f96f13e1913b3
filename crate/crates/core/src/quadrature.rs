//! Gauss-Legendre rules and the per-interval quadrature grid over `[0, T]`.

use crate::error::{Error, Result};
use crate::model::Realization;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point rule, exact for polynomials of degree `2n − 1`.
    ///
    /// Roots of `P_n` by Newton iteration from the Tricomi initial guess.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::contract("quadrature needs at least one node"));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.mapped(a, b).map(|(t, w)| w * f(t)).sum()
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Quadrature nodes covering `[0, T]`, split at every event time so the
/// state is constant on each piece and the features are smooth.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub times: Vec<f64>,
    pub weights: Vec<f64>,
    pub states: Vec<usize>,
    /// `interval_end[n]` is one past the last node of the `n`-th interval;
    /// intervals follow [`Realization::intervals`].
    pub interval_end: Vec<usize>,
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.weights.iter().enumerate().map(|(n, w)| w * f(n)).sum()
    }
}

/// Places `nodes_per_interval` Gauss-Legendre nodes on each inter-event
/// interval and labels each with the state in force there.
pub fn build_quadrature(data: &Realization, nodes_per_interval: usize) -> Result<QuadratureGrid> {
    let rule = GaussLegendre::new(nodes_per_interval)?;
    let intervals = data.intervals();
    let cap = intervals.len() * nodes_per_interval;
    let mut grid = QuadratureGrid {
        times: Vec::with_capacity(cap),
        weights: Vec::with_capacity(cap),
        states: Vec::with_capacity(cap),
        interval_end: Vec::with_capacity(intervals.len()),
    };
    for (a, b, state) in intervals {
        for (t, w) in rule.mapped(a, b) {
            grid.times.push(t);
            grid.weights.push(w);
            grid.states.push(state);
        }
        grid.interval_end.push(grid.times.len());
    }
    Ok(grid)
}
