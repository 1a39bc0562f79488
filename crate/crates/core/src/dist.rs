//! Scalar densities and draws used by the built-in models.

use std::f64::consts::PI;

use rand::RngCore;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal, StudentT};
use statrs::function::gamma::ln_gamma;

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

pub fn normal_lpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * LN_2PI - sd.ln() - 0.5 * z * z
}

/// t density with location/scale.
pub fn student_t_lpdf(x: f64, loc: f64, scale: f64, df: f64) -> f64 {
    let z = (x - loc) / scale;
    ln_gamma(0.5 * (df + 1.0)) - ln_gamma(0.5 * df) - 0.5 * (df * PI).ln() - scale.ln()
        - 0.5 * (df + 1.0) * (z * z / df).ln_1p()
}

/// log density of ℓ = log x when x ~ gamma(shape, rate).
pub fn log_gamma_lpdf(ell: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + shape * ell - rate * ell.exp()
}

pub fn std_normal(rng: &mut dyn RngCore) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normal(rng: &mut dyn RngCore, mean: f64, sd: f64) -> f64 {
    mean + sd * std_normal(rng)
}

pub fn gamma(rng: &mut dyn RngCore, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate).expect("valid gamma parameters").sample(rng)
}

pub fn poisson(rng: &mut dyn RngCore, rate: f64) -> f64 {
    if rate <= 0.0 {
        return 0.0;
    }
    Poisson::new(rate).expect("finite positive rate").sample(rng)
}

pub fn student_t(rng: &mut dyn RngCore, df: f64) -> f64 {
    StudentT::new(df).expect("df > 0").sample(rng)
}

pub fn uniform(rng: &mut dyn RngCore) -> f64 {
    // 53 random mantissa bits in [0, 1)
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn ln_factorial(k: f64) -> f64 {
    ln_gamma(k + 1.0)
}

/// ψ₁(x) for x > 0: recurrence up to x ≥ 20, then the asymptotic series.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 20.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x + x2 / 2.0
        + (1.0 / x) * x2 * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0)))
}

/// log Σ exp(x_i); −∞ for an empty or all −∞ input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
