//! Gaussian free field sampling, the exact Ornstein–Uhlenbeck dynamics of the
//! linear sector, covariance functions, and renormalization constants.
//!
//! The free field with mass `m` has independent Hermitian-paired complex
//! Gaussian modes with variance `v_j = (2πM)^{−2} / λ_j`, `λ_j = |j/M|² + m²`
//! (zero mode included; the mass is strictly positive). Its law is preserved
//! exactly by the per-mode integrating-factor update
//!
//! `X̂_j ← e^{−dt λ_j} X̂_j + √((1 − e^{−2 dt λ_j})/(2λ_j)) (2πM)^{−1} ζ_j`
//!
//! where `ζ_j` has independent standard normal real and imaginary parts for a
//! Hermitian pair (and `√2` times a standard normal for self-paired real
//! modes). With this normalization the stationary per-mode variance is
//! exactly `v_j`, which fixes the noise intensity to `2` under the L² pairing
//! — the factor that also enters the generator's trace term.

use crate::error::{Error, Result};
use crate::fields::{
    convolution_multiplier, fejer_weight, fourier_inverse, mollifier, Field, GridSpec,
    SpectralField,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Model parameters: coupling, mass, mollification scale, Fejér order, grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub mass: f64,
    pub epsilon: f64,
    pub fejer_order: usize,
    pub grid: GridSpec,
}

impl ModelParams {
    pub fn new(
        alpha: f64,
        mass: f64,
        epsilon: f64,
        fejer_order: usize,
        grid: GridSpec,
    ) -> Result<ModelParams> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "coupling alpha must be nonnegative, got {alpha}"
            )));
        }
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "mass must be positive, got {mass}"
            )));
        }
        if fejer_order == 0 || fejer_order > grid.points_per_side / 2 {
            return Err(Error::InvalidParameter(format!(
                "Fejér order must lie in [1, n/2] = [1, {}], got {fejer_order}",
                grid.points_per_side / 2
            )));
        }
        // Validates the mollification scale against the grid.
        mollifier(epsilon, grid)?;
        Ok(ModelParams {
            alpha,
            mass,
            epsilon,
            fejer_order,
            grid,
        })
    }

    /// Construct with the coupling given through `γ = α²/(4π)`.
    pub fn from_gamma(
        gamma: f64,
        mass: f64,
        epsilon: f64,
        fejer_order: usize,
        grid: GridSpec,
    ) -> Result<ModelParams> {
        if gamma < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "gamma must be nonnegative, got {gamma}"
            )));
        }
        ModelParams::new((4.0 * PI * gamma).sqrt(), mass, epsilon, fejer_order, grid)
    }

    /// Derived regularity parameter `γ = α²/(4π)`, recomputed on access.
    pub fn gamma(&self) -> f64 {
        self.alpha * self.alpha / (4.0 * PI)
    }

    /// Non-fatal parameter warnings (the constructions assume `γ < 2`).
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.gamma() >= 2.0 {
            out.push(format!(
                "gamma = {:.4} >= 2: outside the regime the model's constructions assume",
                self.gamma()
            ));
        }
        out
    }
}

/// Derive the RNG for a worker chain from a master seed.
///
/// Stream-splitting rule (documented contract): every chain uses ChaCha12
/// seeded with the master seed and `set_stream(chain_index)`, so chains are
/// statistically independent and reproducible for any worker count.
pub fn chain_rng(master_seed: u64, chain_index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(chain_index);
    rng
}

/// Per-mode stationary variance `v_j = (2πM)^{−2}/λ_j` at array slot (kx, ky).
fn mode_variance(grid: GridSpec, kx: usize, ky: usize, mass: f64) -> f64 {
    let vol = grid.side_length() * grid.side_length();
    1.0 / (vol * grid.lambda(kx, ky, mass))
}

/// Visit each Hermitian mode pair once, in a fixed deterministic order.
///
/// Calls `f(slot, None)` for self-paired (real) modes and
/// `f(slot, Some(mirror))` for the canonical member of a conjugate pair.
fn for_each_hermitian_pair(n: usize, mut f: impl FnMut(usize, Option<usize>)) {
    for ky in 0..n {
        let kyn = (n - ky) % n;
        for kx in 0..n {
            let kxn = (n - kx) % n;
            let idx = kx + n * ky;
            let mirror = kxn + n * kyn;
            match idx.cmp(&mirror) {
                std::cmp::Ordering::Equal => f(idx, None),
                std::cmp::Ordering::Less => f(idx, Some(mirror)),
                std::cmp::Ordering::Greater => {}
            }
        }
    }
}

/// Draw one exact free-field sample in spectral form.
pub fn sample_gff_spectral(grid: GridSpec, mass: f64, rng: &mut ChaCha12Rng) -> SpectralField {
    let n = grid.points_per_side;
    let mut spec = SpectralField::zeros(grid);
    for_each_hermitian_pair(n, |idx, mirror| {
        let (kx, ky) = (idx % n, idx / n);
        let v = mode_variance(grid, kx, ky, mass);
        match mirror {
            None => {
                // Self-paired modes are real with full variance v.
                let a: f64 = standard_normal(rng);
                spec.coeffs[idx] = Complex64::new(a * v.sqrt(), 0.0);
            }
            Some(mir) => {
                let a: f64 = standard_normal(rng);
                let b: f64 = standard_normal(rng);
                let s = (v / 2.0).sqrt();
                let z = Complex64::new(a * s, b * s);
                spec.coeffs[idx] = z;
                spec.coeffs[mir] = z.conj();
            }
        }
    });
    spec
}

/// Draw one exact free-field sample as a real-space field.
pub fn sample_gff(grid: GridSpec, mass: f64, rng: &mut ChaCha12Rng) -> Field {
    fourier_inverse(&sample_gff_spectral(grid, mass, rng))
}

/// Seeded convenience wrapper: two calls with the same seed are bit-identical.
pub fn sample_gff_seeded(grid: GridSpec, mass: f64, seed: u64) -> Field {
    sample_gff(grid, mass, &mut chain_rng(seed, 0))
}

fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    // Box–Muller; two uniforms per normal keeps the draw count per mode fixed,
    // which the determinism contract relies on.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Ornstein–Uhlenbeck state of the linear sector: spectral field plus the
/// chain's private RNG stream.
#[derive(Debug, Clone)]
pub struct OUState {
    pub time: f64,
    pub field: SpectralField,
    pub rng: ChaCha12Rng,
    pub mass: f64,
}

impl OUState {
    /// Start at stationarity (a fresh free-field sample).
    pub fn stationary(grid: GridSpec, mass: f64, mut rng: ChaCha12Rng) -> OUState {
        let field = sample_gff_spectral(grid, mass, &mut rng);
        OUState {
            time: 0.0,
            field,
            rng,
            mass,
        }
    }

    /// Start from a prescribed spectral field.
    pub fn from_field(field: SpectralField, mass: f64, rng: ChaCha12Rng) -> OUState {
        OUState {
            time: 0.0,
            field,
            rng,
            mass,
        }
    }

    /// Real-space view of the current state.
    pub fn real_field(&self) -> Field {
        fourier_inverse(&self.field)
    }
}

/// Exact-in-law OU update over a step `dt` (integrating factor per mode).
pub fn ou_step(state: &mut OUState, dt: f64) -> Result<()> {
    ou_step_scaled(state, dt, 1.0)
}

/// Deterministic decay only (test hook): the noise term is dropped.
pub fn ou_step_deterministic(state: &mut OUState, dt: f64) -> Result<()> {
    ou_step_scaled(state, dt, 0.0)
}

fn ou_step_scaled(state: &mut OUState, dt: f64, noise_scale: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "OU step requires dt > 0, got {dt}"
        )));
    }
    let grid = state.field.grid;
    let n = grid.points_per_side;
    let mass = state.mass;
    let side = grid.side_length();
    let coeffs = &mut state.field.coeffs;
    let rng = &mut state.rng;
    for_each_hermitian_pair(n, |idx, mirror| {
        let (kx, ky) = (idx % n, idx / n);
        let lam = grid.lambda(kx, ky, mass);
        let decay = (-dt * lam).exp();
        let s = noise_scale * ((1.0 - decay * decay) / (2.0 * lam)).sqrt() / side;
        match mirror {
            None => {
                let zeta = std::f64::consts::SQRT_2 * standard_normal(rng);
                let new = decay * coeffs[idx].re + s * zeta;
                coeffs[idx] = Complex64::new(new, 0.0);
            }
            Some(mir) => {
                let a = standard_normal(rng);
                let b = standard_normal(rng);
                let new = decay * coeffs[idx] + s * Complex64::new(a, b);
                coeffs[idx] = new;
                coeffs[mir] = new.conj();
            }
        }
    });
    state.time += dt;
    Ok(())
}

/// Free-field covariance function as a field: `𝒳(x) = Σ_j v_j e^{ij·x/M}`.
pub fn covariance_field(mass: f64, grid: GridSpec) -> Field {
    covariance_field_weighted(mass, grid, |_, _| 1.0)
}

/// Covariance of the mollified field `g_ε ∗ X`: spectral weights `mult_g(j)²`.
pub fn covariance_mollified_field(epsilon: f64, mass: f64, grid: GridSpec) -> Result<Field> {
    let mult = convolution_multiplier(&mollifier(epsilon, grid)?);
    let n = grid.points_per_side;
    Ok(covariance_field_weighted(mass, grid, |kx, ky| {
        let m = mult[kx + n * ky];
        m * m
    }))
}

fn covariance_field_weighted(
    mass: f64,
    grid: GridSpec,
    weight: impl Fn(usize, usize) -> f64,
) -> Field {
    let n = grid.points_per_side;
    let mut spec = SpectralField::zeros(grid);
    for ky in 0..n {
        for kx in 0..n {
            let v = mode_variance(grid, kx, ky, mass);
            spec.coeffs[kx + n * ky] = Complex64::new(weight(kx, ky) * v, 0.0);
        }
    }
    fourier_inverse(&spec)
}

/// Covariance value at a grid displacement (slot indices).
pub fn covariance(ix: usize, iy: usize, mass: f64, grid: GridSpec) -> f64 {
    covariance_field(mass, grid).value_at(ix, iy)
}

/// Mollified covariance value at a grid displacement.
pub fn covariance_mollified(
    ix: usize,
    iy: usize,
    epsilon: f64,
    mass: f64,
    grid: GridSpec,
) -> Result<f64> {
    Ok(covariance_mollified_field(epsilon, mass, grid)?.value_at(ix, iy))
}

/// Variance constant for an arbitrary smoothing multiplier chain:
/// `Σ_j mult(j)² v_j`. This is the pointwise variance of the smoothed field.
pub fn renorm_constant_for_multiplier(mult: &[f64], mass: f64, grid: GridSpec) -> f64 {
    let n = grid.points_per_side;
    let mut sum = 0.0;
    for ky in 0..n {
        for kx in 0..n {
            let m = mult[kx + n * ky];
            sum += m * m * mode_variance(grid, kx, ky, mass);
        }
    }
    sum
}

/// Renormalization constant `c_ε = Σ_j mult_g(j)² v_j` (variance of `g_ε∗X`
/// at a point; diverges like `(1/2π) log(1/ε)`).
pub fn renorm_constant(epsilon: f64, mass: f64, grid: GridSpec) -> Result<f64> {
    let mult = convolution_multiplier(&mollifier(epsilon, grid)?);
    Ok(renorm_constant_for_multiplier(&mult, mass, grid))
}

/// Renormalization constant of the Fejér-projected chain:
/// `c_{N,M,ε} = Σ_j (w_N(j) mult_g(j))² v_j`.
pub fn renorm_constant_fejer(
    order: usize,
    epsilon: f64,
    mass: f64,
    grid: GridSpec,
) -> Result<f64> {
    let mult = fejer_mollifier_multiplier(order, epsilon, grid)?;
    Ok(renorm_constant_for_multiplier(&mult, mass, grid))
}

/// Multiplier table of the composite smoothing `Q_{N,M} ∘ (g_ε ∗ ·)`.
pub fn fejer_mollifier_multiplier(
    order: usize,
    epsilon: f64,
    grid: GridSpec,
) -> Result<Vec<f64>> {
    if order == 0 || order > grid.points_per_side / 2 {
        return Err(Error::InvalidParameter(format!(
            "Fejér order must lie in [1, n/2] = [1, {}], got {order}",
            grid.points_per_side / 2
        )));
    }
    let mut mult = convolution_multiplier(&mollifier(epsilon, grid)?);
    let n = grid.points_per_side;
    for ky in 0..n {
        let jy = grid.mode_of(ky);
        for kx in 0..n {
            let jx = grid.mode_of(kx);
            mult[kx + n * ky] *= fejer_weight(order, jx, jy);
        }
    }
    Ok(mult)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{l2_inner, make_grid};
    use crate::stats::{ks_two_sample, Accumulator};

    #[test]
    fn gamma_derivation_and_validation() {
        let grid = make_grid(1.0, 64).unwrap();
        let p = ModelParams::from_gamma(0.25, 1.0, 0.4, 16, grid).unwrap();
        assert!((p.gamma() - 0.25).abs() < 1e-14);
        assert!(p.warnings().is_empty());
        let hot = ModelParams::from_gamma(2.5, 1.0, 0.4, 16, grid).unwrap();
        assert_eq!(hot.warnings().len(), 1);
        assert!(ModelParams::new(1.0, -1.0, 0.4, 16, grid).is_err());
        assert!(ModelParams::new(1.0, 1.0, 0.4, 64, grid).is_err());
    }

    #[test]
    fn sampler_is_deterministic_and_real() {
        let grid = make_grid(1.0, 32).unwrap();
        let a = sample_gff_seeded(grid, 1.0, 42);
        let b = sample_gff_seeded(grid, 1.0, 42);
        assert_eq!(a.values, b.values);
        let c = sample_gff_seeded(grid, 1.0, 43);
        assert_ne!(a.values, c.values);
        let spec = crate::fields::fourier_forward(&a);
        assert!(spec.hermitian_defect() < 1e-12);
    }

    #[test]
    fn per_mode_variance_matches_formula() {
        let grid = make_grid(1.0, 16).unwrap();
        let mass = 1.0;
        let n = grid.points_per_side;
        let n_samples = 4000;
        let mut rng = chain_rng(7, 0);
        let mut acc = vec![Accumulator::new(); n * n];
        let mut mean_acc = Accumulator::new();
        for _ in 0..n_samples {
            let spec = sample_gff_spectral(grid, mass, &mut rng);
            for (a, c) in acc.iter_mut().zip(&spec.coeffs) {
                a.push(c.norm_sqr());
            }
            mean_acc.push(spec.coeffs[0].re);
        }
        // Low modes: relative error < 5%.
        for &(kx, ky) in &[(0usize, 0usize), (1, 0), (0, 1), (2, 1), (1, 15)] {
            let v = mode_variance(grid, kx, ky, mass);
            let emp = acc[kx + n * ky].mean;
            assert!(
                (emp - v).abs() / v < 0.05,
                "mode ({kx},{ky}): empirical {emp} vs formula {v}"
            );
        }
        // Centered: zero-mode mean within 3 standard errors.
        assert!(mean_acc.z_score(0.0).abs() < 3.0);
    }

    #[test]
    fn ou_step_preserves_stationary_variance() {
        let grid = make_grid(1.0, 16).unwrap();
        let mass = 0.8;
        let n = grid.points_per_side;
        // Average the per-mode variance over many independent chains after
        // many steps; compare to the stationary formula.
        let n_chains = 400;
        let mut acc = vec![Accumulator::new(); n * n];
        for chain in 0..n_chains {
            let mut state = OUState::stationary(grid, mass, chain_rng(11, chain));
            for _ in 0..40 {
                ou_step(&mut state, 0.25).unwrap();
            }
            for (a, c) in acc.iter_mut().zip(&state.field.coeffs) {
                a.push(c.norm_sqr());
            }
        }
        for &(kx, ky) in &[(0usize, 0usize), (1, 0), (3, 2)] {
            let v = mode_variance(grid, kx, ky, mass);
            let emp = acc[kx + n * ky].mean;
            assert!(
                (emp - v).abs() / v < 0.2,
                "mode ({kx},{ky}): {emp} vs {v}"
            );
        }
    }

    #[test]
    fn large_dt_decorrelates_completely() {
        let grid = make_grid(1.0, 16).unwrap();
        let mass = 1.0;
        // After a huge step the state is independent of the start: correlation
        // between start and end coefficients over chains is ~ 0.
        let mut corr = Accumulator::new();
        for chain in 0..500 {
            let mut state = OUState::stationary(grid, mass, chain_rng(3, chain));
            let before = state.field.coeffs[1];
            ou_step(&mut state, 50.0).unwrap();
            let after = state.field.coeffs[1];
            corr.push((before * after.conj()).re);
        }
        let v = mode_variance(grid, 1, 0, mass);
        assert!(corr.mean.abs() < 5.0 * corr.stderr().max(v * 0.01));
    }

    #[test]
    fn zero_noise_step_is_exact_decay() {
        let grid = make_grid(1.0, 16).unwrap();
        let mass = 1.2;
        let mut state = OUState::stationary(grid, mass, chain_rng(9, 0));
        let before = state.field.clone();
        let dt = 0.37;
        ou_step_deterministic(&mut state, dt).unwrap();
        let n = grid.points_per_side;
        for ky in 0..n {
            for kx in 0..n {
                let lam = grid.lambda(kx, ky, mass);
                let expect = before.coeffs[kx + n * ky] * (-dt * lam).exp();
                assert!((state.field.coeffs[kx + n * ky] - expect).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn ou_chain_preserves_gff_law_ks() {
        let grid = make_grid(1.0, 16).unwrap();
        let mass = 1.0;
        let u = Field::from_fn(grid, |x, y| (x).cos() + 0.5 * (y).sin());
        let n_chains = 200;
        let mut before = Vec::with_capacity(n_chains);
        let mut after = Vec::with_capacity(n_chains);
        for chain in 0..n_chains as u64 {
            let mut state = OUState::stationary(grid, mass, chain_rng(21, chain));
            before.push(l2_inner(&state.real_field(), &u));
            for _ in 0..1000 {
                ou_step(&mut state, 0.05).unwrap();
            }
            after.push(l2_inner(&state.real_field(), &u));
        }
        let (d, crit) = ks_two_sample(&before, &after, 0.01);
        assert!(d <= crit, "KS rejects stationarity: d={d}, crit={crit}");
    }

    #[test]
    fn covariance_even_and_matches_renorm_constant_at_origin() {
        let grid = make_grid(1.0, 64).unwrap();
        let mass = 1.0;
        let eps = 0.4;
        let cov = covariance_mollified_field(eps, mass, grid).unwrap();
        let n = grid.points_per_side;
        for &(ix, iy) in &[(1usize, 0usize), (5, 3), (10, 20)] {
            let mirrored = cov.value_at((n - ix) % n, (n - iy) % n);
            assert!((cov.value_at(ix, iy) - mirrored).abs() < 1e-12);
        }
        let c_eps = renorm_constant(eps, mass, grid).unwrap();
        assert!((cov.value_at(0, 0) - c_eps).abs() < 1e-10);
    }

    #[test]
    fn renorm_constant_monotonicity() {
        let grid = make_grid(1.0, 128).unwrap();
        let mass = 1.0;
        let c1 = renorm_constant(0.4, mass, grid).unwrap();
        let c2 = renorm_constant(0.2, mass, grid).unwrap();
        assert!(c2 > c1, "c_eps increases as eps decreases");
        // Grid refinement at fixed eps only adds nonnegative spectral terms.
        let coarse = make_grid(1.0, 64).unwrap();
        let c_coarse = renorm_constant(0.4, mass, coarse).unwrap();
        assert!(c1 >= c_coarse - 5e-3 * c_coarse.abs());
        // Fejér-projected constant is dominated termwise.
        for order in [4, 8, 16, 32] {
            let cf = renorm_constant_fejer(order, 0.4, mass, grid).unwrap();
            assert!(cf <= c1 + 1e-12);
        }
    }

    #[test]
    fn renorm_log_rate() {
        // Successive eps-halvings change c_eps by (1/2π) log 2.
        let grid = make_grid(1.0, 256).unwrap();
        let mass = 1.0;
        let target = (2.0f64).ln() / (2.0 * PI);
        let c1 = renorm_constant(0.2, mass, grid).unwrap();
        let c2 = renorm_constant(0.1, mass, grid).unwrap();
        let diff = c2 - c1;
        assert!(
            (diff - target).abs() / target < 0.1,
            "log-rate {diff} vs {target}"
        );
    }

    #[test]
    fn empirical_smoothed_variance_matches_renorm_constant() {
        let grid = make_grid(1.0, 32).unwrap();
        let mass = 1.0;
        let eps = 0.4;
        let mult = convolution_multiplier(&mollifier(eps, grid).unwrap());
        let c_eps = renorm_constant(eps, mass, grid).unwrap();
        let mut rng = chain_rng(5, 0);
        let mut acc = Accumulator::new();
        for _ in 0..4000 {
            let x = sample_gff(grid, mass, &mut rng);
            let sm = crate::fields::convolve_with_multiplier(&mult, &x);
            acc.push(sm.value_at(3, 7) * sm.value_at(3, 7));
        }
        assert!(
            (acc.mean - c_eps).abs() / c_eps < 0.05,
            "empirical {} vs c_eps {}",
            acc.mean,
            c_eps
        );
    }
}
