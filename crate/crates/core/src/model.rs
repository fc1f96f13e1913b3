//! Observed data and model parameters.
//!
//! Dimensions and states are 0-based inside the library. File formats use
//! 1-based labels and convert at the boundary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log σ(x)` without underflow for very negative `x`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub dim: usize,
}

/// Piecewise-constant, left-continuous state process on `[0, T]`.
///
/// Stored sparsely as the initial state plus the list of switches. At a
/// switch time `z(t)` still returns the pre-switch state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePath {
    initial_state: usize,
    switches: Vec<(f64, usize)>,
    horizon: f64,
}

impl StatePath {
    pub fn new(initial_state: usize, switches: Vec<(f64, usize)>, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::contract(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let mut prev_time = f64::NEG_INFINITY;
        let mut prev_state = initial_state;
        for &(t, s) in &switches {
            if !(0.0..=horizon).contains(&t) {
                return Err(Error::Range(format!(
                    "switch time {t} outside [0, {horizon}]"
                )));
            }
            if t <= prev_time {
                return Err(Error::contract("switch times must be strictly increasing"));
            }
            if s == prev_state {
                return Err(Error::contract(format!(
                    "switch at {t} does not change the state ({s})"
                )));
            }
            prev_time = t;
            prev_state = s;
        }
        Ok(Self {
            initial_state,
            switches,
            horizon,
        })
    }

    /// A path that never leaves `state`.
    pub fn constant(state: usize, horizon: f64) -> Result<Self> {
        Self::new(state, Vec::new(), horizon)
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn switches(&self) -> &[(f64, usize)] {
        &self.switches
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn final_state(&self) -> usize {
        self.switches.last().map_or(self.initial_state, |&(_, s)| s)
    }

    /// Left-continuous evaluation `z(t)`.
    pub fn state_at(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::Range(format!(
                "t = {t} outside [0, {}]",
                self.horizon
            )));
        }
        // number of switches strictly before t
        let n = self.switches.partition_point(|&(s, _)| s < t);
        Ok(if n == 0 {
            self.initial_state
        } else {
            self.switches[n - 1].1
        })
    }

    pub fn max_state(&self) -> usize {
        self.switches
            .iter()
            .map(|&(_, s)| s)
            .fold(self.initial_state, usize::max)
    }
}

/// One observed realization: events, their states, and the closing state `z(T)`.
///
/// Events are ordered by time (ties across dimensions keep insertion order).
/// `labels[n]` is the state in force when event `n` fires, i.e. before the
/// transition it triggers; the post-transition state is `labels[n + 1]`, or
/// `z(T)` for the last event.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    dims: usize,
    states: usize,
    horizon: f64,
    events: Vec<Event>,
    labels: Vec<usize>,
    final_state: usize,
    path: StatePath,
    by_dim: Vec<Vec<usize>>,
    times_by_dim: Vec<Vec<f64>>,
}

impl Realization {
    /// Builds a realization from events carrying their pre-transition state.
    pub fn from_labeled(
        dims: usize,
        states: usize,
        horizon: f64,
        events: Vec<(Event, usize)>,
        final_state: usize,
    ) -> Result<Self> {
        if dims == 0 || states == 0 {
            return Err(Error::contract("need at least one dimension and one state"));
        }
        if final_state >= states {
            return Err(Error::Range(format!(
                "final state {final_state} >= K = {states}"
            )));
        }
        let (events, labels): (Vec<Event>, Vec<usize>) = events.into_iter().unzip();
        let initial = labels.first().copied().unwrap_or(final_state);
        let mut switches: Vec<(f64, usize)> = Vec::new();
        let mut current = initial;
        for (n, ev) in events.iter().enumerate() {
            let next = labels.get(n + 1).copied().unwrap_or(final_state);
            if next == current {
                continue;
            }
            // simultaneous events: keep only the net transition at that time
            if let Some(last) = switches.last_mut().filter(|(t, _)| *t == ev.time) {
                last.1 = next;
                let before = if switches.len() >= 2 {
                    switches[switches.len() - 2].1
                } else {
                    initial
                };
                if switches.last().unwrap().1 == before {
                    switches.pop();
                }
            } else {
                switches.push((ev.time, next));
            }
            current = next;
        }
        let path = StatePath::new(initial, switches, horizon)?;
        Self::assemble(dims, states, events, labels, final_state, path)
    }

    /// Builds a realization from unlabeled events and an explicit state path.
    /// Every switch must coincide with an event time.
    pub fn new(dims: usize, states: usize, events: Vec<Event>, path: StatePath) -> Result<Self> {
        if dims == 0 || states == 0 {
            return Err(Error::contract("need at least one dimension and one state"));
        }
        for &(t, _) in path.switches() {
            if !events.iter().any(|e| e.time == t) {
                return Err(Error::contract(format!(
                    "state switch at {t} does not coincide with an event"
                )));
            }
        }
        let labels = events
            .iter()
            .map(|e| path.state_at(e.time))
            .collect::<Result<Vec<_>>>()?;
        let final_state = path.final_state();
        Self::assemble(dims, states, events, labels, final_state, path)
    }

    fn assemble(
        dims: usize,
        states: usize,
        events: Vec<Event>,
        labels: Vec<usize>,
        final_state: usize,
        path: StatePath,
    ) -> Result<Self> {
        let horizon = path.horizon();
        if path.max_state() >= states {
            return Err(Error::Range(format!("state index >= K = {states}")));
        }
        let mut by_dim: Vec<Vec<usize>> = vec![Vec::new(); dims];
        let mut last_time = f64::NEG_INFINITY;
        for (n, (ev, &label)) in events.iter().zip(&labels).enumerate() {
            if !ev.time.is_finite() || ev.time < 0.0 || ev.time > horizon {
                return Err(Error::Range(format!(
                    "event {n} at time {} outside [0, {horizon}]",
                    ev.time
                )));
            }
            if ev.time < last_time {
                return Err(Error::contract(format!("event {n} is out of time order")));
            }
            if ev.dim >= dims {
                return Err(Error::Range(format!(
                    "event {n} has dim {} >= M = {dims}",
                    ev.dim
                )));
            }
            if label >= states {
                return Err(Error::Range(format!(
                    "event {n} has state {label} >= K = {states}"
                )));
            }
            if let Some(&prev) = by_dim[ev.dim].last() {
                if events[prev].time >= ev.time {
                    return Err(Error::contract(format!(
                        "duplicate event time {} within dimension {}",
                        ev.time, ev.dim
                    )));
                }
            }
            by_dim[ev.dim].push(n);
            last_time = ev.time;
        }
        let times_by_dim = by_dim
            .iter()
            .map(|idx| idx.iter().map(|&n| events[n].time).collect())
            .collect();
        Ok(Self {
            dims,
            states,
            horizon,
            events,
            labels,
            final_state,
            path,
            by_dim,
            times_by_dim,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn path(&self) -> &StatePath {
        &self.path
    }

    pub fn final_state(&self) -> usize {
        self.final_state
    }

    /// State in force when event `n` fires.
    pub fn event_state(&self, n: usize) -> usize {
        self.labels[n]
    }

    /// State right after event `n`.
    pub fn next_state(&self, n: usize) -> usize {
        self.labels.get(n + 1).copied().unwrap_or(self.final_state)
    }

    /// Indices (into `events()`) of the events on dimension `dim`.
    pub fn dim_indices(&self, dim: usize) -> &[usize] {
        &self.by_dim[dim]
    }

    /// Event times of dimension `dim`, ascending.
    pub fn dim_times(&self, dim: usize) -> &[f64] {
        &self.times_by_dim[dim]
    }

    pub fn dim_count(&self, dim: usize) -> usize {
        self.by_dim[dim].len()
    }

    /// Transition counts `s[k][k']` over events of dimension `dim`,
    /// self-transitions included.
    pub fn transition_counts(&self, dim: usize) -> Vec<Vec<usize>> {
        let mut counts = vec![vec![0usize; self.states]; self.states];
        for &n in &self.by_dim[dim] {
            counts[self.event_state(n)][self.next_state(n)] += 1;
        }
        counts
    }

    /// Maximal sub-intervals of `[0, T]` delimited by every event time,
    /// as `(start, end, state)`. Zero-length pieces are skipped.
    pub fn intervals(&self) -> Vec<(f64, f64, usize)> {
        let mut out = Vec::with_capacity(self.events.len() + 1);
        let mut start = 0.0;
        let mut state = self.path.initial_state();
        for (n, ev) in self.events.iter().enumerate() {
            if ev.time > start {
                out.push((start, ev.time, state));
            }
            start = ev.time;
            state = self.next_state(n);
        }
        if self.horizon > start {
            out.push((start, self.horizon, state));
        }
        out
    }

    /// Restricts the realization to the events in `[0, horizon]`.
    pub fn truncate(&self, horizon: f64) -> Result<Self> {
        let cut = self.events.partition_point(|e| e.time <= horizon);
        let events: Vec<(Event, usize)> = self.events[..cut]
            .iter()
            .copied()
            .zip(self.labels[..cut].iter().copied())
            .collect();
        let final_state = if cut == 0 {
            self.path.initial_state()
        } else {
            self.next_state(cut - 1)
        };
        Self::from_labeled(self.dims, self.states, horizon, events, final_state)
    }
}

/// Model parameters: transition matrices, intensity upper bounds and
/// per-state activation weights.
///
/// `weights[i][k]` has length `M·B + 1`: the base activation first, then the
/// basis weights ordered `(j, b)` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub transition: Vec<Vec<Vec<f64>>>,
    pub lambda_bar: Vec<f64>,
    pub weights: Vec<Vec<Vec<f64>>>,
}

impl ModelParams {
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        lambda_bar: Vec<f64>,
        weights: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let params = Self {
            transition,
            lambda_bar,
            weights,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn dims(&self) -> usize {
        self.lambda_bar.len()
    }

    pub fn states(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn feature_len(&self) -> usize {
        self.weights
            .first()
            .and_then(|w| w.first())
            .map_or(0, Vec::len)
    }

    pub fn weights(&self, dim: usize, state: usize) -> &[f64] {
        &self.weights[dim][state]
    }

    pub fn base_activation(&self, dim: usize, state: usize) -> f64 {
        self.weights[dim][state][0]
    }

    /// Weight of basis `b` in the influence from `source` onto `dim`.
    pub fn influence_weight(&self, dim: usize, source: usize, basis: usize, state: usize) -> f64 {
        let nb = (self.feature_len() - 1) / self.dims();
        self.weights[dim][state][1 + source * nb + basis]
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.lambda_bar.len();
        if m == 0 {
            return Err(Error::config("no dimensions"));
        }
        if self.transition.len() != m || self.weights.len() != m {
            return Err(Error::config("transition/weights/lambda_bar disagree on M"));
        }
        for (i, &lb) in self.lambda_bar.iter().enumerate() {
            if !(lb.is_finite() && lb > 0.0) {
                return Err(Error::config(format!("lambda_bar[{i}] = {lb} must be > 0")));
            }
        }
        let k = self.states();
        let p = self.feature_len();
        if k == 0 || p == 0 {
            return Err(Error::config("empty weight vectors"));
        }
        if !(p - 1).is_multiple_of(m) {
            return Err(Error::config(format!(
                "weight length {p} is not M*B+1 for M = {m}"
            )));
        }
        for i in 0..m {
            if self.transition[i].len() != k || self.weights[i].len() != k {
                return Err(Error::config(format!(
                    "dimension {i} does not have K = {k} states"
                )));
            }
            for (s, row) in self.transition[i].iter().enumerate() {
                if row.len() != k {
                    return Err(Error::config(format!(
                        "transition[{i}][{s}] has wrong length"
                    )));
                }
                if row.iter().any(|&x| !x.is_finite() || x < 0.0) {
                    return Err(Error::config(format!(
                        "transition[{i}][{s}] has negative entries"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::config(format!(
                        "transition[{i}][{s}] sums to {sum}, not 1"
                    )));
                }
            }
            for (s, w) in self.weights[i].iter().enumerate() {
                if w.len() != p {
                    return Err(Error::config(format!("weights[{i}][{s}] has wrong length")));
                }
                if w.iter().any(|x| !x.is_finite()) {
                    return Err(Error::config(format!("weights[{i}][{s}] not finite")));
                }
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `h_i(t, k) = w_i^k · F(t)`.
pub fn activation(params: &ModelParams, features: &[f64], dim: usize, state: usize) -> Result<f64> {
    if dim >= params.dims() || state >= params.states() {
        return Err(Error::Range(format!(
            "(dim {dim}, state {state}) out of range"
        )));
    }
    let w = params.weights(dim, state);
    if w.len() != features.len() {
        return Err(Error::contract(format!(
            "feature length {} does not match weight length {}",
            features.len(),
            w.len()
        )));
    }
    Ok(dot(w, features))
}

/// `λ̄_i σ(h_i(t, k))`.
pub fn intensity(params: &ModelParams, features: &[f64], dim: usize, state: usize) -> Result<f64> {
    Ok(params.lambda_bar[dim] * sigmoid(activation(params, features, dim, state)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn one_dim(w: Vec<f64>, lambda_bar: f64) -> ModelParams {
        ModelParams::new(vec![vec![vec![1.0]]], vec![lambda_bar], vec![vec![w]]).unwrap()
    }

    #[test]
    fn activation_examples() {
        let p = one_dim(vec![0.7, 0.0], 1.0);
        assert_eq!(activation(&p, &[1.0, 123.0], 0, 0).unwrap(), 0.7);
        let p = one_dim(vec![0.0, 0.0], 1.0);
        assert_eq!(activation(&p, &[1.0, 5.0], 0, 0).unwrap(), 0.0);
        let p = one_dim(vec![1.0, 0.5], 1.0);
        assert_relative_eq!(
            activation(&p, &[1.0, 0.3], 0, 0).unwrap(),
            1.15,
            epsilon = 1e-15
        );
    }

    #[test]
    fn activation_rejects_length_mismatch() {
        let p = one_dim(vec![1.0, 0.5], 1.0);
        assert!(matches!(
            activation(&p, &[1.0], 0, 0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn intensity_examples() {
        let p = one_dim(vec![0.0, 0.0], 2.0);
        assert_eq!(intensity(&p, &[1.0, 0.0], 0, 0).unwrap(), 1.0);
        let p = one_dim(vec![1.0, 0.0], 2.0);
        assert_relative_eq!(
            intensity(&p, &[1.0, 0.0], 0, 0).unwrap(),
            1.462117157,
            epsilon = 1e-8
        );
        let p = one_dim(vec![40.0, 0.0], 2.0);
        assert_relative_eq!(
            intensity(&p, &[1.0, 0.0], 0, 0).unwrap(),
            2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn state_at_is_left_continuous() {
        let path = StatePath::constant(0, 10.0).unwrap();
        assert_eq!(path.state_at(3.3).unwrap(), 0);
        let path = StatePath::new(0, vec![(5.0, 1)], 10.0).unwrap();
        assert_eq!(path.state_at(5.0).unwrap(), 0);
        assert_eq!(path.state_at(5.001).unwrap(), 1);
        assert_eq!(path.state_at(10.0).unwrap(), 1);
        assert_eq!(path.state_at(0.0).unwrap(), 0);
        assert!(matches!(path.state_at(10.5), Err(Error::Range(_))));
        assert!(matches!(path.state_at(-0.1), Err(Error::Range(_))));
    }

    #[test]
    fn path_rejects_unordered_switches() {
        assert!(StatePath::new(0, vec![(5.0, 1), (4.0, 0)], 10.0).is_err());
        assert!(StatePath::new(0, vec![(5.0, 0)], 10.0).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(
            vec![vec![vec![0.5, 0.4], vec![0.5, 0.5]]],
            vec![1.0],
            vec![vec![vec![0.0; 2]; 2]]
        )
        .is_err());
        assert!(
            ModelParams::new(vec![vec![vec![1.0]]], vec![0.0], vec![vec![vec![0.0; 2]]]).is_err()
        );
        // negative weights are fine
        assert!(ModelParams::new(
            vec![vec![vec![1.0]]],
            vec![1.0],
            vec![vec![vec![-3.0, -1.0]]]
        )
        .is_ok());
    }

    fn labeled(t: f64, dim: usize, s: usize) -> (Event, usize) {
        (Event { time: t, dim }, s)
    }

    #[test]
    fn realization_from_labels_rebuilds_path() {
        let r = Realization::from_labeled(
            2,
            2,
            10.0,
            vec![labeled(1.0, 0, 0), labeled(2.0, 1, 1), labeled(3.0, 0, 1)],
            0,
        )
        .unwrap();
        assert_eq!(r.path().initial_state(), 0);
        assert_eq!(r.path().switches(), &[(1.0, 1), (3.0, 0)]);
        assert_eq!(r.transition_counts(0), vec![vec![0, 1], vec![1, 0]]);
        assert_eq!(r.transition_counts(1), vec![vec![0, 0], vec![0, 1]]);
        let iv = r.intervals();
        assert_eq!(
            iv,
            vec![(0.0, 1.0, 0), (1.0, 2.0, 1), (2.0, 3.0, 1), (3.0, 10.0, 0)]
        );
    }

    #[test]
    fn empty_realization_is_single_interval() {
        let r = Realization::from_labeled(1, 2, 5.0, vec![], 1).unwrap();
        assert_eq!(r.intervals(), vec![(0.0, 5.0, 1)]);
        assert_eq!(r.path().state_at(5.0).unwrap(), 1);
    }

    #[test]
    fn duplicate_times_within_dimension_rejected() {
        let err =
            Realization::from_labeled(1, 1, 5.0, vec![labeled(1.0, 0, 0), labeled(1.0, 0, 0)], 0);
        assert!(err.is_err());
        // across dimensions is fine
        assert!(Realization::from_labeled(
            2,
            1,
            5.0,
            vec![labeled(1.0, 0, 0), labeled(1.0, 1, 0)],
            0
        )
        .is_ok());
    }

    #[test]
    fn new_requires_switches_at_events() {
        let path = StatePath::new(0, vec![(2.5, 1)], 5.0).unwrap();
        let events = vec![Event { time: 1.0, dim: 0 }];
        assert!(Realization::new(1, 2, events, path).is_err());
    }

    #[test]
    fn truncate_keeps_prefix() {
        let r = Realization::from_labeled(
            1,
            2,
            10.0,
            vec![labeled(1.0, 0, 0), labeled(4.0, 0, 1), labeled(8.0, 0, 1)],
            0,
        )
        .unwrap();
        let t = r.truncate(5.0).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.final_state(), 1);
        assert_eq!(t.horizon(), 5.0);
    }

    proptest! {
        #[test]
        fn intensity_bounded_and_monotone(a in -30.0f64..30.0, d in 0.0f64..5.0, lb in 0.1f64..10.0) {
            let lo = lb * sigmoid(a);
            let hi = lb * sigmoid(a + d);
            prop_assert!(lo > 0.0 && lo < lb);
            prop_assert!(hi >= lo);
        }

        #[test]
        fn state_path_piecewise_constant(
            mut times in proptest::collection::vec(0.01f64..9.99, 0..8),
            t in 0.0f64..10.0,
        ) {
            times.sort_by(f64::total_cmp);
            times.dedup();
            let switches: Vec<(f64, usize)> =
                times.iter().enumerate().map(|(n, &s)| (s, (n + 1) % 2)).collect();
            let path = StatePath::new(0, switches.clone(), 10.0).unwrap();
            let before = switches.iter().filter(|(s, _)| *s < t).count();
            prop_assert_eq!(path.state_at(t).unwrap(), before % 2);
        }

        #[test]
        fn log_sigmoid_matches(x in -700.0f64..700.0) {
            let s = sigmoid(x);
            if s > 1e-300 {
                prop_assert!((log_sigmoid(x) - s.ln()).abs() < 1e-9 * (1.0 + s.ln().abs()));
            }
        }
    }
}
