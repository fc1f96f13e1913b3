//! Precomputed feature vectors at observed events and integration nodes.
//!
//! Both inference schemes and the likelihood need `F(t)` at every event and
//! at every node of a time quadrature. The features depend only on the data
//! and the basis, so they are computed once per data set.

use nalgebra::DVector;

use crate::basis::{features_for, BasisSet, FeatureMatrix};
use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::linalg::weighted_row_sum;
use crate::model::Realization;
use crate::quadrature::build_quadrature;

/// Integration nodes over `[0, T]` with their weights, states and features.
#[derive(Debug, Clone)]
pub struct IntegrationNodes {
    pub times: Vec<f64>,
    pub weights: Vec<f64>,
    pub states: Vec<usize>,
    pub features: FeatureMatrix,
    /// Cumulative node counts per inter-event interval (Gauss-Legendre
    /// grids only); empty for midpoint grids.
    pub interval_end: Vec<usize>,
}

impl IntegrationNodes {
    /// `per_interval` Gauss-Legendre nodes on every inter-event interval.
    pub fn gauss_legendre(
        basis: &BasisSet,
        data: &Realization,
        per_interval: usize,
        exec: ExecPolicy,
    ) -> Result<Self> {
        let grid = build_quadrature(data, per_interval)?;
        let features = features_for(basis, &times_by_dim(data), &grid.times, exec)?;
        Ok(Self {
            times: grid.times,
            weights: grid.weights,
            states: grid.states,
            features,
            interval_end: grid.interval_end,
        })
    }

    /// Midpoint rule on `points` equal cells.
    pub fn midpoint(
        basis: &BasisSet,
        data: &Realization,
        points: usize,
        exec: ExecPolicy,
    ) -> Result<Self> {
        if points == 0 {
            return Err(Error::contract("midpoint grid needs at least one point"));
        }
        let dt = data.horizon() / points as f64;
        let times: Vec<f64> = (0..points).map(|n| (n as f64 + 0.5) * dt).collect();
        let states = times
            .iter()
            .map(|&t| data.path().state_at(t))
            .collect::<Result<Vec<_>>>()?;
        let features = features_for(basis, &times_by_dim(data), &times, exec)?;
        Ok(Self {
            weights: vec![dt; points],
            times,
            states,
            features,
            interval_end: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Features at every observed event (in event order) plus integration nodes.
#[derive(Debug, Clone)]
pub struct DesignCache {
    pub event_features: FeatureMatrix,
    pub nodes: IntegrationNodes,
}

impl DesignCache {
    pub fn new(
        basis: &BasisSet,
        data: &Realization,
        nodes: IntegrationNodes,
        exec: ExecPolicy,
    ) -> Result<Self> {
        let times: Vec<f64> = data.events().iter().map(|e| e.time).collect();
        let event_features = features_for(basis, &times_by_dim(data), &times, exec)?;
        Ok(Self {
            event_features,
            nodes,
        })
    }

    pub fn gauss_legendre(
        basis: &BasisSet,
        data: &Realization,
        per_interval: usize,
        exec: ExecPolicy,
    ) -> Result<Self> {
        let nodes = IntegrationNodes::gauss_legendre(basis, data, per_interval, exec)?;
        Self::new(basis, data, nodes, exec)
    }

    pub fn midpoint(
        basis: &BasisSet,
        data: &Realization,
        points: usize,
        exec: ExecPolicy,
    ) -> Result<Self> {
        let nodes = IntegrationNodes::midpoint(basis, data, points, exec)?;
        Self::new(basis, data, nodes, exec)
    }
}

pub(crate) fn times_by_dim(data: &Realization) -> Vec<&[f64]> {
    (0..data.dims()).map(|j| data.dim_times(j)).collect()
}

/// Observed-event features split by `(dimension, state)`.
pub(crate) struct EventBlocks {
    /// `rows[i][k]`: positions within `dim_indices(i)` of events in state `k`.
    pub rows: Vec<Vec<Vec<usize>>>,
    /// Matching row-major feature blocks.
    pub features: Vec<Vec<Vec<f64>>>,
    /// `½ Σ F` over each block.
    pub half_sums: Vec<Vec<DVector<f64>>>,
}

impl EventBlocks {
    pub fn new(data: &Realization, event_features: &FeatureMatrix) -> Self {
        let (m, k, p) = (data.dims(), data.states(), event_features.width());
        let mut rows = vec![vec![Vec::new(); k]; m];
        let mut features = vec![vec![Vec::new(); k]; m];
        for i in 0..m {
            for (pos, &n) in data.dim_indices(i).iter().enumerate() {
                let s = data.event_state(n);
                rows[i][s].push(pos);
                features[i][s].extend_from_slice(event_features.row(n));
            }
        }
        let half_sums = features
            .iter()
            .map(|per_state| {
                per_state
                    .iter()
                    .map(|flat| {
                        let ones = vec![0.5; flat.len() / p];
                        weighted_row_sum(flat, p, &ones, ExecPolicy::Sequential)
                    })
                    .collect()
            })
            .collect();
        Self {
            rows,
            features,
            half_sums,
        }
    }
}
