//! Torus discretization, Fourier transforms, and the deterministic kernels
//! (mollifier, cutoff, Fejér smoothing, heat semigroup) used everywhere else.
//!
//! The torus is `(−πM, πM]²` sampled on an `n × n` grid with spacing
//! `h = 2πM/n`. A real field is stored row-major (`index = ix + n·iy`); its
//! spectral representation stores the coefficients of
//! `f(x) = Σ_j f̂_j e^{i j·x/M}` at array slot `j mod n` per axis, so the
//! discrete transform is a plain unnormalized FFT divided by `n²`.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

/// Torus geometry and resolution.
///
/// `torus_size` is the parameter `M` (side length `2πM`); `points_per_side`
/// is the even grid resolution `n`. Mode indices run over `[−n/2, n/2)²` and
/// the frequency of mode `j` is `j/M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub torus_size: f64,
    pub points_per_side: usize,
}

impl GridSpec {
    /// Grid spacing `h = 2πM/n`.
    pub fn spacing(&self) -> f64 {
        2.0 * PI * self.torus_size / self.points_per_side as f64
    }

    /// Side length `2πM`.
    pub fn side_length(&self) -> f64 {
        2.0 * PI * self.torus_size
    }

    /// Number of grid points (= number of Fourier modes).
    pub fn len(&self) -> usize {
        self.points_per_side * self.points_per_side
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Signed mode index of array slot `k ∈ [0, n)`: values in `[−n/2, n/2)`.
    pub fn mode_of(&self, k: usize) -> i64 {
        let n = self.points_per_side as i64;
        let k = k as i64;
        if k < n / 2 {
            k
        } else {
            k - n
        }
    }

    /// Signed coordinate of grid slot `k`, a representative in `(−πM, πM]`.
    pub fn coord_of(&self, k: usize) -> f64 {
        let n = self.points_per_side as i64;
        let k = k as i64;
        let signed = if k <= n / 2 { k } else { k - n };
        signed as f64 * self.spacing()
    }

    /// Laplacian-plus-mass symbol `λ_j = |j/M|² + m²` at array slots `(kx, ky)`.
    pub fn lambda(&self, kx: usize, ky: usize, mass: f64) -> f64 {
        let jx = self.mode_of(kx) as f64 / self.torus_size;
        let jy = self.mode_of(ky) as f64 / self.torus_size;
        jx * jx + jy * jy + mass * mass
    }

    pub fn check_match(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(
                self.points_per_side,
                other.points_per_side,
            ));
        }
        Ok(())
    }
}

/// Build a grid, validating resolution and torus size.
pub fn make_grid(torus_size: f64, points_per_side: usize) -> Result<GridSpec> {
    if !(torus_size > 0.0) || !torus_size.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "torus size M must be positive and finite, got {torus_size}"
        )));
    }
    if points_per_side < 8 || points_per_side % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "points per side must be an even integer >= 8, got {points_per_side}"
        )));
    }
    Ok(GridSpec {
        torus_size,
        points_per_side,
    })
}

/// Real scalar field on the grid, row-major (`index = ix + n·iy`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: GridSpec) -> Field {
        Field {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Field {
        Field {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Build a field from a function of the signed coordinates `(x, y)`.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Field {
        let n = grid.points_per_side;
        let mut values = vec![0.0; grid.len()];
        for iy in 0..n {
            let y = grid.coord_of(iy);
            for ix in 0..n {
                values[ix + n * iy] = f(grid.coord_of(ix), y);
            }
        }
        Field { grid, values }
    }

    pub fn value_at(&self, ix: usize, iy: usize) -> f64 {
        self.values[ix + self.grid.points_per_side * iy]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn assert_finite(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "field contains NaN/Inf values".into(),
            ));
        }
        Ok(())
    }

    /// Pointwise linear combination `self + c·other`.
    pub fn axpy(&self, c: f64, other: &Field) -> Field {
        assert_eq!(self.grid, other.grid);
        Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Field) -> Field {
        assert_eq!(self.grid, other.grid);
        Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }
}

/// Complex Fourier coefficients of a field under the fixed convention.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub grid: GridSpec,
    pub coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: GridSpec) -> SpectralField {
        SpectralField {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Apply a real Fourier multiplier `m(jx, jy)` in place.
    pub fn apply_multiplier(&mut self, m: impl Fn(i64, i64) -> f64) {
        let n = self.grid.points_per_side;
        for ky in 0..n {
            let jy = self.grid.mode_of(ky);
            for kx in 0..n {
                let jx = self.grid.mode_of(kx);
                self.coeffs[kx + n * ky] *= m(jx, jy);
            }
        }
    }

    /// Hermitian-symmetry defect `max_j |f̂_{−j} − conj(f̂_j)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.grid.points_per_side;
        let mut worst: f64 = 0.0;
        for ky in 0..n {
            let kyn = (n - ky) % n;
            for kx in 0..n {
                let kxn = (n - kx) % n;
                let d = (self.coeffs[kxn + n * kyn] - self.coeffs[kx + n * ky].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }
}

/// Polynomial weight `ρ_ℓ^k(x) = (1 + k|x|²)^{−ℓ/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub exponent: f64,
    pub scale: f64,
}

impl WeightSpec {
    /// Constant weight 1 (the torus default).
    pub fn constant() -> WeightSpec {
        WeightSpec {
            exponent: 0.0,
            scale: 1.0,
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        (1.0 + self.scale * (x * x + y * y)).powf(-self.exponent / 2.0)
    }

    /// Weight field sampled on a grid.
    pub fn field(&self, grid: GridSpec) -> Field {
        Field::from_fn(grid, |x, y| self.eval(x, y))
    }
}

thread_local! {
    static PLANNERS: RefCell<HashMap<usize, (Arc<dyn rustfft::Fft<f64>>, Arc<dyn rustfft::Fft<f64>>)>> =
        RefCell::new(HashMap::new());
}

fn with_plans<R>(n: usize, f: impl FnOnce(&dyn rustfft::Fft<f64>, &dyn rustfft::Fft<f64>) -> R) -> R {
    PLANNERS.with(|cell| {
        let mut map = cell.borrow_mut();
        let (fwd, inv) = map.entry(n).or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (
                planner.plan_fft_forward(n),
                planner.plan_fft_inverse(n),
            )
        });
        f(fwd.as_ref(), inv.as_ref())
    })
}

/// In-place 2D FFT (rows then columns), unnormalized.
fn fft2(data: &mut [Complex64], n: usize, forward: bool) {
    with_plans(n, |fwd, inv| {
        let plan = if forward { fwd } else { inv };
        // Rows are contiguous.
        for row in data.chunks_exact_mut(n) {
            plan.process(row);
        }
        // Columns via transpose, transform, transpose back.
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for kx in 0..n {
            for ky in 0..n {
                col[ky] = data[kx + n * ky];
            }
            plan.process(&mut col);
            for ky in 0..n {
                data[kx + n * ky] = col[ky];
            }
        }
    });
}

/// Forward transform: `f̂_j = (1/n²) Σ_k f_k e^{−2πi j·k/n}`.
pub fn fourier_forward(f: &Field) -> SpectralField {
    let n = f.grid.points_per_side;
    let mut coeffs: Vec<Complex64> = f
        .values
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    fft2(&mut coeffs, n, true);
    let scale = 1.0 / (n * n) as f64;
    for c in &mut coeffs {
        *c *= scale;
    }
    SpectralField { grid: f.grid, coeffs }
}

/// Inverse transform: `f_k = Σ_j f̂_j e^{+2πi j·k/n}`, real part returned.
pub fn fourier_inverse(spec: &SpectralField) -> Field {
    let n = spec.grid.points_per_side;
    let mut data = spec.coeffs.clone();
    fft2(&mut data, n, false);
    Field {
        grid: spec.grid,
        values: data.iter().map(|c| c.re).collect(),
    }
}

/// Apply a real Fourier multiplier `m(jx, jy)` to a real field.
pub fn apply_multiplier(f: &Field, m: impl Fn(i64, i64) -> f64) -> Field {
    let mut spec = fourier_forward(f);
    spec.apply_multiplier(m);
    fourier_inverse(&spec)
}

/// L² inner product by grid quadrature, `⟨f, g⟩ = h² Σ_k f_k g_k`.
pub fn l2_inner(f: &Field, g: &Field) -> f64 {
    assert_eq!(f.grid, g.grid);
    let h2 = f.grid.spacing() * f.grid.spacing();
    h2 * f
        .values
        .iter()
        .zip(&g.values)
        .map(|(a, b)| a * b)
        .sum::<f64>()
}

/// L² norm by grid quadrature.
pub fn l2_norm(f: &Field) -> f64 {
    l2_inner(f, f).sqrt()
}

/// Weighted L^p norm `(∫ |f|^p ρ dx)^{1/p}`; `p = ∞` gives the weighted sup.
pub fn lp_norm(f: &Field, p: f64, weight: Option<&Field>) -> f64 {
    assert!(p >= 1.0);
    if p.is_infinite() {
        return match weight {
            None => f.values.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            Some(w) => f
                .values
                .iter()
                .zip(&w.values)
                .fold(0.0f64, |m, (v, r)| m.max(v.abs() * r)),
        };
    }
    let h2 = f.grid.spacing() * f.grid.spacing();
    let sum: f64 = match weight {
        None => f.values.iter().map(|v| v.abs().powf(p)).sum(),
        Some(w) => f
            .values
            .iter()
            .zip(&w.values)
            .map(|(v, r)| v.abs().powf(p) * r)
            .sum(),
    };
    (h2 * sum).powf(1.0 / p)
}

/// Convolution multiplier of a kernel: `mult_g(j) = (2πM)² ĝ_j`.
///
/// For an even real kernel the multiplier is real; tiny imaginary residue
/// from quadrature is dropped. For an integral-one kernel `mult_g(0) = 1`, so
/// convolution preserves constants.
pub fn convolution_multiplier(kernel: &Field) -> Vec<f64> {
    let spec = fourier_forward(kernel);
    let vol = kernel.grid.side_length() * kernel.grid.side_length();
    spec.coeffs.iter().map(|c| vol * c.re).collect()
}

/// Convolve `f` with a kernel given by its multiplier table.
pub fn convolve_with_multiplier(mult: &[f64], f: &Field) -> Field {
    let n = f.grid.points_per_side;
    assert_eq!(mult.len(), n * n);
    let mut spec = fourier_forward(f);
    for (c, m) in spec.coeffs.iter_mut().zip(mult) {
        *c *= *m;
    }
    fourier_inverse(&spec)
}

/// Smooth transition `S: [0,1] → [0,1]` built from `e^{−1/x}`; `S(0)=0`,
/// `S(1)=1`, flat to all orders at both ends.
fn smoothstep(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / x).exp();
    let b = (-1.0 / (1.0 - x)).exp();
    a / (a + b)
}

/// The standard compactly supported bump `b(r) ∝ exp(−1/(1−r²))` for `r < 1`.
fn bump(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

fn mollifier_bounds(epsilon: f64, grid: GridSpec) -> Result<()> {
    let min_epsilon = 2.0 * grid.spacing();
    let max_epsilon = PI * grid.torus_size / 2.0;
    if !(epsilon >= min_epsilon && epsilon < max_epsilon) {
        return Err(Error::UnderResolvedMollifier {
            epsilon,
            min_epsilon,
            max_epsilon,
        });
    }
    Ok(())
}

/// Convolutional square root `g̃_ε`: the scaled bump `ε⁻² b(|x|/ε)`,
/// grid-normalized to integral one. Nonnegative, even, compactly supported
/// inside radius `ε < πM/2`.
pub fn mollifier_sqrt(epsilon: f64, grid: GridSpec) -> Result<Field> {
    mollifier_bounds(epsilon, grid)?;
    let mut field = Field::from_fn(grid, |x, y| bump((x * x + y * y).sqrt() / epsilon));
    let h2 = grid.spacing() * grid.spacing();
    let total: f64 = field.values.iter().sum::<f64>() * h2;
    for v in &mut field.values {
        *v /= total;
    }
    Ok(field)
}

/// Mollifier `g_ε = g̃_ε ∗ g̃_ε`: nonnegative, even, integral one, with a
/// nonnegative spectral density `ĝ_ε(j) = ĝ̃_ε(j)² ≥ 0`.
pub fn mollifier(epsilon: f64, grid: GridSpec) -> Result<Field> {
    let sqrt = mollifier_sqrt(epsilon, grid)?;
    let mult = convolution_multiplier(&sqrt);
    Ok(convolve_with_multiplier(&mult, &sqrt))
}

/// Cutoff profile selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CutoffMode {
    /// The constant function 1 (the whole torus carries the interaction).
    TorusUnity,
    /// A smooth radial plateau: 1 inside the radius, 0 near the boundary.
    Plateau { radius: f64 },
}

/// Smooth cutoff field `f`.
pub fn cutoff(mode: CutoffMode, grid: GridSpec) -> Result<Field> {
    match mode {
        CutoffMode::TorusUnity => Ok(Field::constant(grid, 1.0)),
        CutoffMode::Plateau { radius } => {
            let boundary = PI * grid.torus_size;
            if !(radius > 0.0 && radius < boundary) {
                return Err(Error::InvalidParameter(format!(
                    "plateau radius must lie in (0, pi*M) = (0, {boundary}), got {radius}"
                )));
            }
            // Descend smoothly from 1 at |x| = radius to 0 well before the
            // boundary so the corner value is exactly zero.
            let outer = radius + 0.8 * (boundary - radius);
            let width = outer - radius;
            Ok(Field::from_fn(grid, |x, y| {
                let r = (x * x + y * y).sqrt();
                1.0 - smoothstep((r - radius) / width)
            }))
        }
    }
}

/// Triangular (Fejér) weight `w_N(j) = (1 − |j₁|/N)₊ (1 − |j₂|/N)₊`.
pub fn fejer_weight(order: usize, jx: i64, jy: i64) -> f64 {
    let n = order as f64;
    let wx = (1.0 - jx.unsigned_abs() as f64 / n).max(0.0);
    let wy = (1.0 - jy.unsigned_abs() as f64 / n).max(0.0);
    wx * wy
}

/// Fejér smoothing: positivity-preserving triangular spectral weights.
pub fn fejer_apply(order: usize, f: &Field) -> Result<Field> {
    if order == 0 || order > f.grid.points_per_side / 2 {
        return Err(Error::InvalidParameter(format!(
            "Fejér order must lie in [1, n/2] = [1, {}], got {order}",
            f.grid.points_per_side / 2
        )));
    }
    Ok(apply_multiplier(f, |jx, jy| fejer_weight(order, jx, jy)))
}

/// Massive heat semigroup and its time derivatives: mode `j` is scaled by
/// `(−λ_j)^k e^{−t λ_j}` with `λ_j = |j/M|² + m²`.
pub fn heat_semigroup(t: f64, mass: f64, f: &Field, derivative_order: u32) -> Result<Field> {
    if t < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "heat semigroup time must be nonnegative, got {t}"
        )));
    }
    if !(mass > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mass must be positive, got {mass}"
        )));
    }
    let grid = f.grid;
    let k = derivative_order as i32;
    Ok(apply_multiplier(f, |jx, jy| {
        let lam = {
            let fx = jx as f64 / grid.torus_size;
            let fy = jy as f64 / grid.torus_size;
            fx * fx + fy * fy + mass * mass
        };
        (-lam).powi(k) * (-t * lam).exp()
    }))
}
