//! Pólya-Gamma variables: exact PG(1, c) draws, tilted means and the
//! augmentation kernel `g(ω, x)`.
//!
//! The sampler follows Devroye's alternating-series method for the Jacobi
//! distribution `J*(1, z)`, with `PG(1, c) = J*(1, c/2) / 4`. Proposals
//! mix a truncated exponential tail (right of 0.64) with a truncated
//! inverse-Gaussian head, and the series coefficients bound the target
//! from above and below alternately.

use std::f64::consts::{FRAC_2_PI, LN_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use statrs::function::erf::erfc;

const TRUNC: f64 = 0.64;
const PI_SQ_8: f64 = PI * PI / 8.0;

/// Pólya-Gamma distribution `PG(b, c)`, density proportional to
/// `exp(−c²ω/2) · PG(ω | b, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltedPg {
    pub b: f64,
    pub c: f64,
}

impl TiltedPg {
    pub fn new(b: f64, c: f64) -> Self {
        Self { b, c }
    }

    pub fn mean(&self) -> f64 {
        pg_mean(self.b, self.c)
    }
}

impl Distribution<f64> for TiltedPg {
    /// Exact for `b = 1`; integer `b` is drawn as a sum of `b` unit draws.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let n = self.b.round().max(1.0) as usize;
        debug_assert!(
            (self.b - n as f64).abs() < 1e-12,
            "only integer b is supported"
        );
        (0..n).map(|_| pg_sample(rng, self.c)).sum()
    }
}

/// `E[ω] = b/(2c) · tanh(c/2)`, with the limit `b/4` near `c = 0`.
pub fn pg_mean(b: f64, c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-6 {
        // tanh(x)/x ≈ 1 − x²/3 with x = c/2
        return b / 4.0 * (1.0 - c * c / 12.0);
    }
    b / (2.0 * c) * (c / 2.0).tanh()
}

/// Variance of `PG(1, 0)`.
pub const PG10_VARIANCE: f64 = 1.0 / 24.0;

/// `g(ω, x) = x/2 − x²ω/2 − log 2`.
#[inline]
pub fn g_kernel(omega: f64, x: f64) -> f64 {
    x / 2.0 - x * x * omega / 2.0 - LN_2
}

/// One exact draw from `PG(1, c)`.
pub fn pg_sample<R: Rng + ?Sized>(rng: &mut R, c: f64) -> f64 {
    let z = 0.5 * c.abs();
    let fz = PI_SQ_8 + 0.5 * z * z;
    let p_exp = exp_tail_mass(z, fz);
    loop {
        let x = if rng.random::<f64>() < p_exp {
            TRUNC + rng.sample::<f64, _>(Exp1) / fz
        } else {
            truncated_inv_gauss(rng, z)
        };
        let mut s = series_coef(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= series_coef(n, x);
                if y <= s {
                    return 0.25 * x;
                }
            } else {
                s += series_coef(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// Piecewise series coefficient `a_n(x)` of the `J*(1)` density.
#[inline]
fn series_coef(n: u32, x: f64) -> f64 {
    let k = n as f64 + 0.5;
    if x > TRUNC {
        PI * k * (-0.5 * k * k * PI * PI * x).exp()
    } else {
        (FRAC_2_PI / x).powf(1.5) * PI * k * (-2.0 * k * k / x).exp()
    }
}

fn ln_norm_cdf(x: f64) -> f64 {
    (0.5 * erfc(-x / std::f64::consts::SQRT_2)).ln()
}

/// Probability of proposing from the exponential tail.
fn exp_tail_mass(z: f64, fz: f64) -> f64 {
    let t = TRUNC;
    let rt = (1.0 / t).sqrt();
    let b = rt * (t * z - 1.0);
    let a = -rt * (t * z + 1.0);
    let x0 = fz.ln() + fz * t;
    let xb = x0 - z + ln_norm_cdf(b);
    let xa = x0 + z + ln_norm_cdf(a);
    let q_over_p = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + q_over_p)
}

/// Inverse Gaussian with mean `1/z`, shape 1, truncated to `(0, 0.64)`.
fn truncated_inv_gauss<R: Rng + ?Sized>(rng: &mut R, z: f64) -> f64 {
    let r = TRUNC;
    if z < 1.0 / r {
        // mean beyond the truncation point: chi-square proposal plus rejection
        loop {
            let e1 = loop {
                let e1: f64 = rng.sample(Exp1);
                let e2: f64 = rng.sample(Exp1);
                if e1 * e1 <= 2.0 * e2 / r {
                    break e1;
                }
            };
            let x = r / ((1.0 + r * e1) * (1.0 + r * e1));
            let accept = (-0.5 * z * z * x).exp();
            if rng.random::<f64>() <= accept {
                return x;
            }
        }
    }
    let mu = 1.0 / z;
    loop {
        let n: f64 = rng.sample(StandardNormal);
        let y = n * n;
        let half_mu = 0.5 * mu;
        let mut x = mu + half_mu * mu * y - half_mu * (4.0 * mu * y + (mu * y) * (mu * y)).sqrt();
        if rng.random::<f64>() > mu / (mu + x) {
            x = mu * mu / x;
        }
        if x < r {
            return x;
        }
    }
}
