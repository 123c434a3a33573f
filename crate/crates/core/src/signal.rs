//! The authority's noisy view of a market state.
//!
//! A signal is `(D_hat, q0_hat) = (D + E, q0 + eps)`. Three matrix-noise
//! schemes and two quantity-noise schemes are available; all matrix noise is
//! symmetric so that `D_hat` can be decomposed like `D`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::market::{normalize_slutsky, MarketState};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub d_hat: DMatrix<f64>,
    pub q0_hat: DVector<f64>,
}

impl Signal {
    /// The noiseless signal of a state.
    pub fn exact(state: &MarketState) -> Self {
        Self {
            d_hat: state.d.clone(),
            q0_hat: state.q0.clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.q0_hat.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum MatrixNoise {
    #[default]
    None,
    /// Off-diagonal entries uniform on `[-half_width, half_width]`, zero
    /// diagonal, mirrored.
    UniformOffdiag { half_width: f64 },
    /// Per-pair household experiments on the raw matrix, then
    /// re-normalization with the estimated diagonal.
    HouseholdSampling { f_std: f64, g_std: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum QuantityNoise {
    #[default]
    None,
    /// `q0_hat_i = q0_i Y_i` with `ln Y_i ~ Normal(log_mean, log_var)`.
    MultiplicativeLognormal { log_mean: f64, log_var: f64 },
    /// `q0_hat_i = q0_i + N(0, std^2)`.
    AdditiveGaussian { std: f64 },
}

impl QuantityNoise {
    /// Log-mean 1, log-variance 0.1, taken literally from the simulation
    /// description. Biases observed quantities up by `exp(1.05)` on average.
    pub const LITERAL_LOGNORMAL: QuantityNoise = QuantityNoise::MultiplicativeLognormal {
        log_mean: 1.0,
        log_var: 0.1,
    };

    /// Median-unbiased variant (`ln Y` centred at 0) used by the sweep presets.
    pub const CENTERED_LOGNORMAL: QuantityNoise = QuantityNoise::MultiplicativeLognormal {
        log_mean: 0.0,
        log_var: 0.1,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct NoiseConfig {
    #[serde(default)]
    pub matrix: MatrixNoise,
    #[serde(default)]
    pub quantity: QuantityNoise,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("{what} must be finite and >= 0")));
        match self.matrix {
            MatrixNoise::None => {}
            MatrixNoise::UniformOffdiag { half_width } => {
                if !(half_width >= 0.0) || !half_width.is_finite() {
                    return bad("half_width");
                }
            }
            MatrixNoise::HouseholdSampling { f_std, g_std } => {
                if !(f_std >= 0.0 && g_std >= 0.0) || !(f_std + g_std).is_finite() {
                    return bad("f_std/g_std");
                }
            }
        }
        match self.quantity {
            QuantityNoise::None => {}
            QuantityNoise::MultiplicativeLognormal { log_mean, log_var } => {
                if !(log_var >= 0.0) || !log_var.is_finite() || !log_mean.is_finite() {
                    return bad("log_var");
                }
            }
            QuantityNoise::AdditiveGaussian { std } => {
                if !(std >= 0.0) || !std.is_finite() {
                    return bad("std");
                }
            }
        }
        Ok(())
    }
}

/// Symmetric noise with zero diagonal and i.i.d. uniform upper triangle.
pub fn sample_uniform_matrix_noise<R: Rng + ?Sized>(
    n: usize,
    half_width: f64,
    rng: &mut R,
) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(n, n);
    if half_width == 0.0 {
        return e;
    }
    for j in 0..n {
        for i in 0..j {
            let x = half_width * (2.0 * rng.random::<f64>() - 1.0);
            e[(i, j)] = x;
            e[(j, i)] = x;
        }
    }
    e
}

pub fn sample_multiplicative_quantity_noise<R: Rng + ?Sized>(
    q0: &DVector<f64>,
    log_mean: f64,
    log_var: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if let Some(index) = q0.iter().position(|&x| x < 0.0) {
        return Err(Error::NegativeQuantity { index, value: q0[index] });
    }
    let normal = Normal::new(log_mean, log_var.sqrt())
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(q0.map(|q| q * normal.sample(rng).exp()))
}

pub fn sample_additive_quantity_noise<R: Rng + ?Sized>(
    q0: &DVector<f64>,
    std: f64,
    rng: &mut R,
) -> DVector<f64> {
    q0.map(|q| q + std * rng.sample::<f64, _>(StandardNormal))
}

/// Household-sampling estimate of the normalized Slutsky matrix.
///
/// Off-diagonal raw entries get symmetric uniform errors with standard
/// deviation `f_std`. Each raw diagonal entry is the average of `n` household
/// estimates with uniform errors of standard deviation `g_std`. The estimate
/// is then normalized by its own diagonal.
pub fn sample_household_signal<R: Rng + ?Sized>(
    d_raw: &DMatrix<f64>,
    f_std: f64,
    g_std: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    check_dim(d_raw.nrows(), d_raw.ncols())?;
    let n = d_raw.nrows();
    let f_half = 3f64.sqrt() * f_std;
    let g_half = 3f64.sqrt() * g_std;
    let mut est = d_raw.clone();
    for j in 0..n {
        for i in 0..j {
            let x = d_raw[(i, j)] + f_half * (2.0 * rng.random::<f64>() - 1.0);
            est[(i, j)] = x;
            est[(j, i)] = x;
        }
    }
    for i in 0..n {
        let mut g = 0.0;
        for _ in 0..n {
            g += g_half * (2.0 * rng.random::<f64>() - 1.0);
        }
        let v = d_raw[(i, i)] + g / n as f64;
        if !(v < 0.0) {
            return Err(Error::DiagonalSignFlip { index: i, value: v });
        }
        est[(i, i)] = v;
    }
    Ok(normalize_slutsky(&est)?.0)
}

/// Draws a signal of `state` under `cfg`, reproducibly in `cfg.seed`.
///
/// The matrix scheme reads from stream [`Stream::MatrixNoise`], the quantity
/// scheme from [`Stream::QuantityNoise`]. The household scheme treats
/// `state.d` itself as the raw matrix.
pub fn make_signal(state: &MarketState, cfg: &NoiseConfig) -> Result<Signal> {
    cfg.validate()?;
    let n = state.n();
    let mut mrng = stream(cfg.seed, Stream::MatrixNoise);
    let d_hat = match cfg.matrix {
        MatrixNoise::None => state.d.clone(),
        MatrixNoise::UniformOffdiag { half_width } => {
            &state.d + sample_uniform_matrix_noise(n, half_width, &mut mrng)
        }
        MatrixNoise::HouseholdSampling { f_std, g_std } => {
            sample_household_signal(&state.d, f_std, g_std, &mut mrng)?
        }
    };
    let mut qrng = stream(cfg.seed, Stream::QuantityNoise);
    let q0_hat = match cfg.quantity {
        QuantityNoise::None => state.q0.clone(),
        QuantityNoise::MultiplicativeLognormal { log_mean, log_var } => {
            sample_multiplicative_quantity_noise(&state.q0, log_mean, log_var, &mut qrng)?
        }
        QuantityNoise::AdditiveGaussian { std } => {
            sample_additive_quantity_noise(&state.q0, std, &mut qrng)
        }
    };
    Ok(Signal { d_hat, q0_hat })
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn spectral_norm(e: &DMatrix<f64>) -> f64 {
    if e.is_empty() {
        return 0.0;
    }
    let sym = (e + e.transpose()) * 0.5;
    sym.symmetric_eigenvalues().amax()
}
