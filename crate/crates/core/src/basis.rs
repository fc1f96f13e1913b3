//! Scaled, shifted Beta basis functions and the cumulative features `F(t)`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::model::Realization;

/// `(1/scale) · Beta((lag − shift)/scale; α, β)`, clipped to `lag ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaBasis {
    pub alpha: f64,
    pub beta: f64,
    pub scale: f64,
    pub shift: f64,
}

impl BetaBasis {
    pub fn new(alpha: f64, beta: f64, scale: f64, shift: f64) -> Result<Self> {
        let f = Self {
            alpha,
            beta,
            scale,
            shift,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha > 0.0
            && self.beta > 0.0
            && self.scale > 0.0
            && self.alpha.is_finite()
            && self.beta.is_finite()
            && self.scale.is_finite()
            && self.shift.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid Beta basis {self:?}")))
        }
    }

    fn ln_norm(&self) -> f64 {
        ln_gamma(self.alpha + self.beta)
            - ln_gamma(self.alpha)
            - ln_gamma(self.beta)
            - self.scale.ln()
    }

    /// Raw support `[shift, shift + scale]`.
    pub fn raw_support(&self) -> (f64, f64) {
        (self.shift, self.shift + self.scale)
    }

    /// Density at `lag`; zero outside `[max(0, shift), shift + scale]`.
    pub fn eval(&self, lag: f64) -> Result<f64> {
        if !lag.is_finite() {
            return Err(Error::contract(format!("non-finite lag {lag}")));
        }
        Ok(self.eval_unchecked(lag, self.ln_norm()))
    }

    #[inline]
    fn eval_unchecked(&self, lag: f64, ln_norm: f64) -> f64 {
        if lag < 0.0 {
            return 0.0;
        }
        let x = (lag - self.shift) / self.scale;
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        let term = |shape: f64, v: f64| {
            if shape == 1.0 {
                0.0
            } else {
                (shape - 1.0) * v.ln()
            }
        };
        (ln_norm + term(self.alpha, x) + term(self.beta, 1.0 - x)).exp()
    }
}

/// The `B` basis functions shared by every influence function, with
/// common support end `T_f`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    functions: Vec<BetaBasis>,
    support_end: f64,
    ln_norms: Vec<f64>,
}

impl BasisSet {
    pub fn new(functions: Vec<BetaBasis>, support_end: f64) -> Result<Self> {
        if functions.is_empty() {
            return Err(Error::config("basis set needs at least one function"));
        }
        if !(support_end.is_finite() && support_end > 0.0) {
            return Err(Error::config(format!(
                "T_f must be positive, got {support_end}"
            )));
        }
        for f in &functions {
            f.validate()?;
        }
        let ln_norms = functions.iter().map(BetaBasis::ln_norm).collect();
        Ok(Self {
            functions,
            support_end,
            ln_norms,
        })
    }

    pub fn functions(&self) -> &[BetaBasis] {
        &self.functions
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn support_end(&self) -> f64 {
        self.support_end
    }

    /// Feature-vector length `M·B + 1` for `dims` dimensions.
    pub fn feature_len(&self, dims: usize) -> usize {
        dims * self.len() + 1
    }

    /// Basis `b` at `lag`, zero outside `(0, T_f]`.
    #[inline]
    pub fn eval(&self, b: usize, lag: f64) -> f64 {
        if lag <= 0.0 || lag > self.support_end {
            return 0.0;
        }
        self.functions[b].eval_unchecked(lag, self.ln_norms[b])
    }

    /// `F(t)` from an explicit per-dimension list of past-event times,
    /// written into `out` (length `M·B + 1`). Sums over events with
    /// `t − T_f ≤ t_n < t`; `window` gives that index range per dimension.
    fn fill_row(
        &self,
        times: &[&[f64]],
        window: impl Fn(usize) -> (usize, usize),
        t: f64,
        out: &mut [f64],
    ) {
        let nb = self.len();
        out[0] = 1.0;
        for (j, tj) in times.iter().enumerate() {
            let (lo, hi) = window(j);
            for b in 0..nb {
                let mut acc = 0.0;
                for &s in &tj[lo..hi] {
                    acc += self.eval(b, t - s);
                }
                out[1 + j * nb + b] = acc;
            }
        }
    }
}

/// Row-major matrix of feature vectors, one row per evaluation time.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    width: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn zeros(rows: usize, width: usize) -> Self {
        Self {
            width,
            data: vec![0.0; rows * width],
        }
    }

    pub fn from_flat(width: usize, data: Vec<f64>) -> Self {
        assert!(width > 0 && data.len().is_multiple_of(width));
        Self { width, data }
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.width..(r + 1) * self.width]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.width)
    }
}

fn dim_times(events: &Realization) -> Vec<&[f64]> {
    (0..events.dims()).map(|j| events.dim_times(j)).collect()
}

/// `F(t) = [1, F_11(t), …, F_MB(t)]` by direct summation over all strictly
/// earlier events.
pub fn cumulative_features(basis: &BasisSet, events: &Realization, t: f64) -> Result<Vec<f64>> {
    if !(0.0..=events.horizon()).contains(&t) {
        return Err(Error::Range(format!(
            "t = {t} outside [0, {}]",
            events.horizon()
        )));
    }
    let times = dim_times(events);
    let mut out = vec![0.0; basis.feature_len(events.dims())];
    basis.fill_row(
        &times,
        |j| (0, times[j].partition_point(|&s| s < t)),
        t,
        &mut out,
    );
    Ok(out)
}

/// Features at many sorted times. Each row only visits the events inside
/// `[t − T_f, t)`, located by binary search.
pub fn precompute_features(
    basis: &BasisSet,
    events: &Realization,
    times: &[f64],
    exec: ExecPolicy,
) -> Result<FeatureMatrix> {
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::contract("evaluation times must be sorted ascending"));
    }
    let times_by_dim = dim_times(events);
    features_for(basis, &times_by_dim, times, exec)
}

/// As [`precompute_features`] but with the per-dimension event times given
/// directly. Evaluation times need not be sorted.
pub(crate) fn features_for(
    basis: &BasisSet,
    times_by_dim: &[&[f64]],
    times: &[f64],
    exec: ExecPolicy,
) -> Result<FeatureMatrix> {
    let width = basis.feature_len(times_by_dim.len());
    let tf = basis.support_end();
    let rows = exec.map_range(times.len().div_ceil(crate::exec::REDUCE_CHUNK), |c| {
        let start = c * crate::exec::REDUCE_CHUNK;
        let end = (start + crate::exec::REDUCE_CHUNK).min(times.len());
        let mut block = vec![0.0; (end - start) * width];
        for (r, &t) in times[start..end].iter().enumerate() {
            basis.fill_row(
                times_by_dim,
                |j| {
                    let tj = times_by_dim[j];
                    (
                        tj.partition_point(|&s| s < t - tf),
                        tj.partition_point(|&s| s < t),
                    )
                },
                t,
                &mut block[r * width..(r + 1) * width],
            );
        }
        block
    });
    Ok(FeatureMatrix::from_flat(width, rows.concat()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Event;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fixture_basis() -> BasisSet {
        BasisSet::new(
            vec![
                BetaBasis::new(50.0, 50.0, 6.0, -2.0).unwrap(),
                BetaBasis::new(50.0, 50.0, 6.0, 0.0).unwrap(),
            ],
            6.0,
        )
        .unwrap()
    }

    fn realization(dims: usize, events: &[(f64, usize)], horizon: f64) -> Realization {
        let labeled = events
            .iter()
            .map(|&(time, dim)| (Event { time, dim }, 0))
            .collect();
        Realization::from_labeled(dims, 1, horizon, labeled, 0).unwrap()
    }

    #[test]
    fn zero_outside_support() {
        let f = BetaBasis::new(50.0, 50.0, 6.0, -2.0).unwrap();
        assert_eq!(f.eval(-0.5).unwrap(), 0.0);
        assert_eq!(f.eval(4.5).unwrap(), 0.0);
        let g = BetaBasis::new(2.0, 3.0, 1.0, 0.5).unwrap();
        assert_eq!(g.eval(0.25).unwrap(), 0.0);
        assert!(f.eval(f64::NAN).is_err());
    }

    #[test]
    fn peak_of_symmetric_beta() {
        // Beta(50,50) at its mode: 0.5^98 / B(50,50), B via factorials
        let ln_b: f64 = (1..50).map(|k| (k as f64).ln()).sum::<f64>() * 2.0
            - (1..100).map(|k| (k as f64).ln()).sum::<f64>();
        let expected = (98.0 * 0.5f64.ln() - ln_b).exp() / 6.0;
        let f = BetaBasis::new(50.0, 50.0, 6.0, 0.0).unwrap();
        assert_relative_eq!(f.eval(3.0).unwrap(), expected, max_relative = 1e-12);
        assert_relative_eq!(expected, 1.326487, max_relative = 1e-6);
    }

    #[test]
    fn integrates_to_one_over_raw_support() {
        // composite Simpson oracle on the raw support
        for f in [
            BetaBasis::new(50.0, 50.0, 6.0, 0.0).unwrap(),
            BetaBasis::new(2.0, 5.0, 3.0, 1.0).unwrap(),
            BetaBasis::new(1.0, 100.0, 10.0, 0.0).unwrap(),
        ] {
            let (a, b) = f.raw_support();
            let n = 200_000;
            let h = (b - a) / n as f64;
            let mut s = f.eval(a).unwrap() + f.eval(b).unwrap();
            for k in 1..n {
                let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                s += w * f.eval(a + k as f64 * h).unwrap();
            }
            let integral = s * h / 3.0;
            assert!((integral - 1.0).abs() < 1e-8, "{f:?}: {integral}");
        }
    }

    #[test]
    fn features_examples() {
        let basis = fixture_basis();
        let data = realization(1, &[], 10.0);
        assert_eq!(
            cumulative_features(&basis, &data, 5.0).unwrap(),
            vec![1.0, 0.0, 0.0]
        );

        let data = realization(1, &[(1.0, 0)], 10.0);
        let f = cumulative_features(&basis, &data, 1.0).unwrap();
        assert_eq!(f, vec![1.0, 0.0, 0.0]);

        let single = BasisSet::new(vec![BetaBasis::new(2.0, 2.0, 3.0, 0.0).unwrap()], 3.0).unwrap();
        let f = cumulative_features(&single, &data, 2.0).unwrap();
        assert_eq!(f, vec![1.0, single.functions()[0].eval(1.0).unwrap()]);
        assert!(cumulative_features(&basis, &data, 11.0).is_err());
    }

    #[test]
    fn precompute_examples() {
        let basis = fixture_basis();
        let data = realization(2, &[(0.5, 0), (1.2, 1), (2.0, 0)], 10.0);
        let single = precompute_features(&basis, &data, &[2.5], ExecPolicy::Sequential).unwrap();
        assert_eq!(
            single.row(0),
            cumulative_features(&basis, &data, 2.5).unwrap().as_slice()
        );

        let empty = realization(2, &[], 10.0);
        let grid: Vec<f64> = (0..50).map(|k| k as f64 * 0.2).collect();
        let m = precompute_features(&basis, &empty, &grid, ExecPolicy::Parallel).unwrap();
        for row in m.iter() {
            assert_eq!(row, &[1.0, 0.0, 0.0, 0.0, 0.0]);
        }
        assert!(precompute_features(&basis, &data, &[2.0, 1.0], ExecPolicy::Sequential).is_err());
    }

    #[test]
    fn sliding_window_matches_naive_on_dense_grid() {
        let basis = fixture_basis();
        let events: Vec<(f64, usize)> = (0..300).map(|k| (0.1 + k as f64 * 0.37, k % 2)).collect();
        let data = realization(2, &events, 120.0);
        let grid: Vec<f64> = (0..=12_000).map(|k| k as f64 * 0.01).collect();
        let fast = precompute_features(&basis, &data, &grid, ExecPolicy::Parallel).unwrap();
        for (r, &t) in grid.iter().enumerate() {
            let naive = cumulative_features(&basis, &data, t).unwrap();
            for (a, b) in fast.row(r).iter().zip(&naive) {
                assert!((a - b).abs() <= 1e-12, "t = {t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn features_vanish_after_support() {
        let basis = fixture_basis();
        let data = realization(2, &[(1.0, 0), (2.0, 1)], 20.0);
        let f = cumulative_features(&basis, &data, 8.01).unwrap();
        assert_eq!(&f[1..], &[0.0; 4]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn window_equals_naive_random(
            raw in proptest::collection::vec((0.0f64..100.0, 0usize..3), 0..500),
            probes in proptest::collection::vec(0.0f64..100.0, 1..40),
        ) {
            let mut raw = raw;
            raw.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut seen = [f64::NEG_INFINITY; 3];
            raw.retain(|&(t, d)| { let keep = t > seen[d]; if keep { seen[d] = t; } keep });
            let data = realization(3, &raw, 100.0);
            let basis = fixture_basis();
            let mut probes = probes;
            probes.sort_by(f64::total_cmp);
            let fast = precompute_features(&basis, &data, &probes, ExecPolicy::Sequential).unwrap();
            for (r, &t) in probes.iter().enumerate() {
                let naive = cumulative_features(&basis, &data, t).unwrap();
                for (a, b) in fast.row(r).iter().zip(&naive) {
                    prop_assert!((a - b).abs() <= 1e-12);
                    prop_assert!(*a >= 0.0);
                }
            }
        }
    }
}
