//! Wick exponentials, the renormalized drift, and the exponential
//! nonlinearities of the coupled dynamics.
//!
//! The Wick exponential of a smoothed Gaussian field `Z` is
//! `:e^{αZ}: = e^{αZ − (α²/2) Var Z}` with the variance of the *exact*
//! smoothing chain in use (mollifier alone, or Fejér∘mollifier); the
//! subtraction sits in the exponent, which is the only normalization making
//! the pointwise ensemble mean equal 1 (Gaussian moment generating function).
//!
//! Nonlinearities:
//! - plain: `𝒢(X, Y) = α f :e^{α(g∗X)}: e^{α(g∗Y)}`
//! - projected: `𝒢_Q(X, Y) = α Q(g ∗ (:e^{αQ(g∗(X+Y))}:))` where `Q` is the
//!   Fejér smoothing; the exponent collapses to a function of `φ = X + Y`
//!   because the same chain smooths both arguments.
//!
//! Both are nonnegative whenever they are defined, which is what makes the
//! negativity invariant `Y ≤ 0` structural for the splitting integrator.

use crate::error::{Error, Result};
use crate::fields::{
    apply_multiplier, convolution_multiplier, convolve_with_multiplier, cutoff, mollifier,
    CutoffMode, Field, GridSpec,
};
use crate::gff::{
    fejer_mollifier_multiplier, renorm_constant_for_multiplier, ModelParams,
};
use serde::{Deserialize, Serialize};

/// Exponent ceiling for double precision; beyond this the parameters are
/// unresolved and the run must stop rather than overflow silently.
const MAX_EXPONENT: f64 = 700.0;

/// Precomputed multiplier tables and constants for one parameter set.
///
/// Everything the hot loops need: the mollifier multiplier `mult_g`, the
/// composite Fejér∘mollifier multiplier `mult_qg`, the matching variance
/// constants, and the cutoff field.
#[derive(Debug, Clone)]
pub struct Kernels {
    pub params: ModelParams,
    /// Convolution multiplier of `g_ε`.
    pub mult_g: Vec<f64>,
    /// Convolution multiplier of the square root `g̃_ε`.
    pub mult_g_sqrt: Vec<f64>,
    /// Composite multiplier of `Q_{N,M} ∘ (g_ε ∗ ·)`.
    pub mult_qg: Vec<f64>,
    /// Variance of `(g_ε∗X)(x)` under the free field.
    pub c_eps: f64,
    /// Variance of `(Q(g_ε∗X))(x)` under the free field.
    pub c_fejer: f64,
    /// Cutoff field `f`.
    pub cutoff: Field,
}

impl Kernels {
    pub fn new(params: ModelParams, cutoff_mode: CutoffMode) -> Result<Kernels> {
        let grid = params.grid;
        let g = mollifier(params.epsilon, grid)?;
        let mult_g = convolution_multiplier(&g);
        let mult_g_sqrt =
            convolution_multiplier(&crate::fields::mollifier_sqrt(params.epsilon, grid)?);
        let mult_qg = fejer_mollifier_multiplier(params.fejer_order, params.epsilon, grid)?;
        let c_eps = renorm_constant_for_multiplier(&mult_g, params.mass, grid);
        let c_fejer = renorm_constant_for_multiplier(&mult_qg, params.mass, grid);
        let cutoff = cutoff(cutoff_mode, grid)?;
        Ok(Kernels {
            params,
            mult_g,
            mult_g_sqrt,
            mult_qg,
            c_eps,
            c_fejer,
            cutoff,
        })
    }

    /// Smooth with the plain mollifier.
    pub fn smooth(&self, f: &Field) -> Field {
        convolve_with_multiplier(&self.mult_g, f)
    }

    /// Smooth with the composite Fejér∘mollifier chain.
    pub fn smooth_fejer(&self, f: &Field) -> Field {
        convolve_with_multiplier(&self.mult_qg, f)
    }
}

/// A Wick-exponential evaluation together with the inputs that normalized it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WickField {
    pub values: Field,
    pub alpha: f64,
    pub constant_used: f64,
}

fn checked_exp(grid: GridSpec, exponent: Vec<f64>, alpha: f64, epsilon: f64) -> Result<Field> {
    let max_exponent = exponent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max_exponent <= MAX_EXPONENT) {
        return Err(Error::ExponentOverflow {
            max_exponent,
            alpha,
            epsilon,
        });
    }
    Ok(Field {
        grid,
        values: exponent.into_iter().map(f64::exp).collect(),
    })
}

fn wick_exp_with_multiplier(x: &Field, mult: &[f64], constant: f64, params: &ModelParams) -> Result<WickField> {
    x.assert_finite()?;
    let alpha = params.alpha;
    let smoothed = convolve_with_multiplier(mult, x);
    let shift = alpha * alpha / 2.0 * constant;
    let exponent: Vec<f64> = smoothed.values.iter().map(|&z| alpha * z - shift).collect();
    let values = checked_exp(x.grid, exponent, alpha, params.epsilon)?;
    Ok(WickField {
        values,
        alpha,
        constant_used: constant,
    })
}

/// `:e^{α(g_ε∗X)}:` with the plain mollifier chain and constant `c_ε`.
pub fn wick_exp(x: &Field, kernels: &Kernels) -> Result<WickField> {
    wick_exp_with_multiplier(x, &kernels.mult_g, kernels.c_eps, &kernels.params)
}

/// `:e^{αQ(g_ε∗X)}:` with the composite chain and constant `c_{N,M,ε}`.
pub fn wick_exp_fejer(x: &Field, kernels: &Kernels) -> Result<WickField> {
    wick_exp_with_multiplier(x, &kernels.mult_qg, kernels.c_fejer, &kernels.params)
}

/// Renormalized drift `B(φ) = (−Δ + m²)φ + α f :e^{α(g_ε∗φ)}:`.
///
/// The output is the grid representation of a distributionally rough object;
/// consumers pair it with smooth test vectors only.
pub fn drift_b(phi: &Field, kernels: &Kernels) -> Result<Field> {
    let grid = phi.grid;
    let mass = kernels.params.mass;
    let linear = apply_multiplier(phi, |jx, jy| {
        let fx = jx as f64 / grid.torus_size;
        let fy = jy as f64 / grid.torus_size;
        fx * fx + fy * fy + mass * mass
    });
    let wick = wick_exp(phi, kernels)?;
    let alpha = kernels.params.alpha;
    Ok(Field {
        grid,
        values: linear
            .values
            .iter()
            .zip(&wick.values.values)
            .zip(&kernels.cutoff.values)
            .map(|((lin, w), f)| lin + alpha * f * w)
            .collect(),
    })
}

fn check_y_sign(y: &Field) -> Result<()> {
    let max_y = y.max_value();
    if max_y > 1e-9 {
        return Err(Error::NegativityViolated { step: 0, max_y });
    }
    Ok(())
}

/// Plain nonlinearity `𝒢(X, Y) = α f :e^{α(g∗X)}: e^{α(g∗Y)}`; nonnegative.
pub fn nonlinearity_g(x: &Field, y: &Field, kernels: &Kernels) -> Result<Field> {
    check_y_sign(y)?;
    let alpha = kernels.params.alpha;
    let wick_x = wick_exp(x, kernels)?;
    let smooth_y = kernels.smooth(y);
    let grid = x.grid;
    let values: Vec<f64> = wick_x
        .values
        .values
        .iter()
        .zip(&smooth_y.values)
        .zip(&kernels.cutoff.values)
        .map(|((w, gy), f)| alpha * f * w * (alpha * gy).exp())
        .collect();
    let out = Field { grid, values };
    out.assert_finite()?;
    Ok(out)
}

/// Fejér-projected nonlinearity `𝒢_Q(X, Y) = α Q(g ∗ :e^{αQ(g∗(X+Y))}:)`.
///
/// Also returns the exponential core `:e^{αQ(g∗(X+Y))}:` which doubles as the
/// multiplicative weight of the derivative `D𝒢_Q[ψ] = α² Q(g∗(core · Q(g∗ψ)))`.
pub fn nonlinearity_g_fejer_with_core(
    x: &Field,
    y: &Field,
    kernels: &Kernels,
) -> Result<(Field, Field)> {
    check_y_sign(y)?;
    let alpha = kernels.params.alpha;
    let phi = x.axpy(1.0, y);
    let smoothed = kernels.smooth_fejer(&phi);
    let shift = alpha * alpha / 2.0 * kernels.c_fejer;
    let exponent: Vec<f64> = smoothed.values.iter().map(|&z| alpha * z - shift).collect();
    let core = checked_exp(x.grid, exponent, alpha, kernels.params.epsilon)?;
    let g = kernels.smooth_fejer(&core).scale(alpha);
    Ok((g, core))
}

/// Fejér-projected nonlinearity (core discarded).
pub fn nonlinearity_g_fejer(x: &Field, y: &Field, kernels: &Kernels) -> Result<Field> {
    nonlinearity_g_fejer_with_core(x, y, kernels).map(|(g, _)| g)
}

/// Derivative of the projected nonlinearity in either argument:
/// `D𝒢_Q(X,Y)[ψ] = α² Q(g ∗ (core · Q(g∗ψ)))` with the core from
/// [`nonlinearity_g_fejer_with_core`]. The same operator serves `D_X` and
/// `D_Y` because `𝒢_Q` depends on `(X, Y)` only through `X + Y`.
pub fn d_nonlinearity_g_fejer(core: &Field, psi: &Field, kernels: &Kernels) -> Field {
    let alpha = kernels.params.alpha;
    let inner = core.mul(&kernels.smooth_fejer(psi));
    kernels.smooth_fejer(&inner).scale(alpha * alpha)
}

/// Probabilists' Hermite polynomial `He_n(z; v)` with variance parameter `v`
/// (the degree-`n` Wick power of a Gaussian with variance `v`).
pub fn wick_monomial(z: f64, n: usize, variance: f64) -> f64 {
    // Recurrence He_{k+1}(z) = z·He_k(z) − k·v·He_{k−1}(z).
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = z;
    for k in 1..n {
        let next = z * cur - k as f64 * variance * prev;
        prev = cur;
        cur = next;
    }
    cur
}
