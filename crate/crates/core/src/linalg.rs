//! Dense linear-algebra helpers for the Gaussian weight updates.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::exec::{ExecPolicy, REDUCE_CHUNK};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

/// Cholesky factor of `a`, retrying with diagonal jitter `1e-10, 1e-9, …, 1e-4`
/// (scaled by the mean diagonal) when the plain factorisation fails.
pub fn cholesky_with_jitter(a: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(a.clone()) {
        return Ok(c);
    }
    let n = a.nrows();
    let scale = (a.trace() / n.max(1) as f64).abs().max(1.0);
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-9) {
        let mut b = a.clone();
        for d in 0..n {
            b[(d, d)] += jitter * scale;
        }
        if let Some(c) = Cholesky::new(b) {
            log::debug!("cholesky needed jitter {jitter:e}");
            return Ok(c);
        }
        jitter *= 10.0;
    }
    Err(Error::numeric(format!(
        "matrix of size {n} is not positive definite even with jitter {JITTER_MAX:e}"
    )))
}

/// Gaussian with precision `Λ` and natural mean `η`: mean `Λ⁻¹η`.
#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl GaussianPosterior {
    pub fn from_natural(precision: &DMatrix<f64>, linear: &DVector<f64>) -> Result<Self> {
        let chol = cholesky_with_jitter(precision)?;
        let mean = chol.solve(linear);
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::numeric("non-finite posterior mean"));
        }
        Ok(Self { mean, chol })
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn precision_factor(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    /// `mean + L⁻ᵀ z` with `Λ = L Lᵀ`, `z ~ N(0, I)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = self
            .chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .expect("cholesky factor has a positive diagonal");
        &self.mean + x
    }
}

/// Draws from `N(mean, cov)` through the Cholesky factor of `cov`.
pub fn sample_mvn<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let chol = cholesky_with_jitter(cov)?;
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(mean + chol.l() * z)
}

fn chunk_matrix(flat: &[f64], width: usize, range: std::ops::Range<usize>) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        range.len(),
        width,
        &flat[range.start * width..range.end * width],
    )
}

/// `Σ_r w_r x_r x_rᵀ` over the rows of a row-major matrix.
pub fn weighted_gram(
    flat: &[f64],
    width: usize,
    weights: &[f64],
    exec: ExecPolicy,
) -> DMatrix<f64> {
    let rows = weights.len();
    debug_assert_eq!(flat.len(), rows * width);
    exec.reduce_chunks(
        rows,
        |r| {
            // columns of `xt` are the rows; `tr_mul` would skip the blocked gemm
            let xt =
                DMatrix::from_column_slice(width, r.len(), &flat[r.start * width..r.end * width]);
            let w = DVector::from_column_slice(&weights[r.clone()]);
            let mut wx = xt.transpose();
            for mut col in wx.column_iter_mut() {
                col.component_mul_assign(&w);
            }
            xt * wx
        },
        |a, b| a + b,
    )
    .unwrap_or_else(|| DMatrix::zeros(width, width))
}

/// `Σ_r w_r x_r`.
pub fn weighted_row_sum(
    flat: &[f64],
    width: usize,
    weights: &[f64],
    exec: ExecPolicy,
) -> DVector<f64> {
    exec.reduce_chunks(
        weights.len(),
        |r| {
            let mut acc = DVector::zeros(width);
            for i in r {
                let w = weights[i];
                for (a, x) in acc.iter_mut().zip(&flat[i * width..(i + 1) * width]) {
                    *a += w * x;
                }
            }
            acc
        },
        |a, b| a + b,
    )
    .unwrap_or_else(|| DVector::zeros(width))
}

/// Per-row `(xᵀm, xᵀ S x)`.
pub fn mean_and_quadratic(
    flat: &[f64],
    width: usize,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    exec: ExecPolicy,
) -> (Vec<f64>, Vec<f64>) {
    let rows = flat.len() / width;
    let parts = exec.map_range(rows.div_ceil(REDUCE_CHUNK), |c| {
        let start = c * REDUCE_CHUNK;
        let end = (start + REDUCE_CHUNK).min(rows);
        let x = chunk_matrix(flat, width, start..end);
        let lin = &x * mean;
        let mut xs = &x * cov;
        xs.component_mul_assign(&x);
        let quad: Vec<f64> = xs.column_sum().as_slice().to_vec();
        (lin.as_slice().to_vec(), quad)
    });
    let mut lin = Vec::with_capacity(rows);
    let mut quad = Vec::with_capacity(rows);
    for (l, q) in parts {
        lin.extend(l);
        quad.extend(q);
    }
    (lin, quad)
}
