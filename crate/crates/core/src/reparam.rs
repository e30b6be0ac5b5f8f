//! Reparameterized draws for the two variational families.
//!
//! Gaussian factors use `x = m + s·ε` with `ε ~ N(0, 1)`.
//!
//! Gamma factors (shape `α`, mean `m`) use the Marsaglia-Tsang rejection
//! sampler as a transform. With shape augmentation of degree `P`, a draw is
//!
//! ```text
//! x = (m / α) · h(ε, α + P) · Π_{i<P} u_i^{1/(α+i)},   h(ε, a) = (a − 1/3)(1 + ε/√(9a − 3))³
//! ```
//!
//! where `ε` is an accepted proposal of the sampler at shape `α + P` and the
//! `u_i` are uniforms. The density of an accepted `ε` is
//! `π(ε; a) = Gamma(h(ε, a); a, 1) · ∂h/∂ε`, which depends on the shape, so
//! shape gradients pick up the score term `f · ∂ log π / ∂α`.

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::{digamma, ln_gamma};

/// Degree of shape augmentation for gamma factors.
pub const SHAPE_AUGMENTATION: usize = 10;
/// Lower bound on standard deviations, gamma shapes and gamma means.
pub const POSITIVE_FLOOR: f64 = 1e-5;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[inline]
pub fn gaussian_transform(eps: f64, mean: f64, std: f64) -> f64 {
    mean + std.max(POSITIVE_FLOOR) * eps
}

pub fn gaussian_log_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * LN_2PI - std.ln() - 0.5 * z * z
}

/// `∂/∂x` of [`gaussian_log_pdf`].
#[inline]
pub fn gaussian_log_pdf_dx(x: f64, mean: f64, std: f64) -> f64 {
    -(x - mean) / (std * std)
}

/// Gamma log-density with shape/rate parameterization.
pub fn gamma_log_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

#[inline]
pub fn gamma_log_pdf_dx(x: f64, shape: f64, rate: f64) -> f64 {
    (shape - 1.0) / x - rate
}

/// Unit-scale Marsaglia-Tsang map `h(ε, a)`.
#[inline]
pub fn mt_transform(eps: f64, a: f64) -> f64 {
    let v = 1.0 + eps / (9.0 * a - 3.0).sqrt();
    (a - 1.0 / 3.0) * v * v * v
}

/// Draw an accepted Marsaglia-Tsang proposal for shape `a >= 1`.
pub fn sample_mt_eps<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    let d = a - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v3 = v * v * v;
        let u: f64 = rng.gen();
        if u.ln() < 0.5 * x * x + d - d * v3 + d * v3.ln() {
            return x;
        }
    }
}

/// Noise for one gamma entry: the accepted proposal and augmentation uniforms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaNoise {
    pub eps: f64,
    pub uniforms: [f64; SHAPE_AUGMENTATION],
}

impl GammaNoise {
    pub fn sample<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> Self {
        let eps = sample_mt_eps(shape + SHAPE_AUGMENTATION as f64, rng);
        let mut uniforms = [0.0; SHAPE_AUGMENTATION];
        for u in uniforms.iter_mut() {
            // Open interval so that ln(u) stays finite.
            *u = loop {
                let v: f64 = rng.gen();
                if v > 0.0 {
                    break v;
                }
            };
        }
        Self { eps, uniforms }
    }
}

/// Value of the gamma transform and its derivatives in shape and mean.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaDraw {
    pub value: f64,
    pub d_shape: f64,
    pub d_mean: f64,
}

pub fn gamma_transform(noise: &GammaNoise, shape: f64, mean: f64) -> GammaDraw {
    let a = shape + SHAPE_AUGMENTATION as f64;
    let root = (9.0 * a - 3.0).sqrt();
    let v = 1.0 + noise.eps / root;
    let h = (a - 1.0 / 3.0) * v * v * v;
    let dv_da = -4.5 * noise.eps / (root * root * root);
    let dh_da = v * v * v + 3.0 * (a - 1.0 / 3.0) * v * v * dv_da;

    let mut log_boost = 0.0;
    let mut d_log_boost = 0.0;
    for (i, &u) in noise.uniforms.iter().enumerate() {
        let k = shape + i as f64;
        log_boost += u.ln() / k;
        d_log_boost -= u.ln() / (k * k);
    }
    let value = (mean / shape * h * log_boost.exp()).max(f64::MIN_POSITIVE);
    let d_log_value = -1.0 / shape + dh_da / h + d_log_boost;
    GammaDraw {
        value,
        d_shape: value * d_log_value,
        d_mean: value / mean,
    }
}

/// `log π(ε; a)` for an accepted proposal at shape `a` (without augmentation).
pub fn mt_log_density(eps: f64, a: f64) -> f64 {
    let root = (9.0 * a - 3.0).sqrt();
    let v = 1.0 + eps / root;
    let h = (a - 1.0 / 3.0) * v * v * v;
    let log_dh_deps = 3f64.ln() + (a - 1.0 / 3.0).ln() + 2.0 * v.ln() - root.ln();
    (a - 1.0) * h.ln() - h - ln_gamma(a) + log_dh_deps
}

/// `∂ log π(ε; α + P) / ∂α`, the score of the augmented proposal density.
pub fn gamma_score_shape(eps: f64, shape: f64) -> f64 {
    let a = shape + SHAPE_AUGMENTATION as f64;
    let root = (9.0 * a - 3.0).sqrt();
    let v = 1.0 + eps / root;
    let h = (a - 1.0 / 3.0) * v * v * v;
    let dv_da = -4.5 * eps / (root * root * root);
    let dh_da = v * v * v + 3.0 * (a - 1.0 / 3.0) * v * v * dv_da;
    let d_log_dh_deps = 1.0 / (a - 1.0 / 3.0) + 2.0 * dv_da / v - 4.5 / (9.0 * a - 3.0);
    h.ln() + (a - 1.0) * dh_da / h - dh_da - digamma(a) + d_log_dh_deps
}

/// Gradient of one Gaussian entry's contribution: `(∂/∂mean, ∂/∂std)`.
#[inline]
pub fn gaussian_chain(eps: f64, df_dx: f64) -> (f64, f64) {
    (df_dx, df_dx * eps)
}

/// Gradient of one gamma entry's contribution: `(∂/∂shape, ∂/∂mean)`.
///
/// `f_value` multiplies the score term; pass the part of the objective that
/// depends on this entry (any additive terms independent of its noise only
/// add variance).
#[inline]
pub fn gamma_chain(
    noise: &GammaNoise,
    draw: &GammaDraw,
    shape: f64,
    df_dx: f64,
    f_value: Option<f64>,
) -> (f64, f64) {
    let score = f_value.map_or(0.0, |f| f * gamma_score_shape(noise.eps, shape));
    (df_dx * draw.d_shape + score, df_dx * draw.d_mean)
}
