//! Time integration of the coupled (X, Y) system, stationary sampling, and
//! linearized flows along recorded trajectories.
//!
//! `X` evolves by the exact per-mode Ornstein–Uhlenbeck update (no time
//! discretization bias in the linear sector). `Y` solves
//! `(∂_t − Δ + m²)Y = −𝒢_Q(X, Y)` by operator splitting:
//!
//! - Lie: exact heat step, then explicit Euler on the nonlinear part;
//! - Strang: half heat step, Heun (second-order) nonlinear step, half heat
//!   step.
//!
//! Both sub-flows preserve `{Y ≤ 0}`: the heat kernel is positive and the
//! nonlinear step subtracts a nonnegative field (for Heun, both stage values
//! stay ≤ 0 and the averaged decrement is still nonnegative). The explicit
//! nonlinear step is non-stiff because `e^{α·smoothed Y} ≤ 1` on `{Y ≤ 0}`.
//!
//! Linearized flows differentiate the *discrete* splitting map exactly, so
//! common-random-number finite differences match to the perturbation size.

use crate::error::{Error, Result};
use crate::fields::{fourier_inverse, Field, GridSpec, SpectralField};
use crate::gff::{chain_rng, ou_step, ModelParams, OUState};
use crate::wick::{d_nonlinearity_g_fejer, nonlinearity_g_fejer_with_core, Kernels};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Splitting scheme for the Y-equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    LieSplit,
    StrangSplit,
}

/// Tolerance for the structural negativity invariant `Y ≤ 0` (roundoff only).
pub const NEGATIVITY_TOL: f64 = 1e-12;

/// Heat-semigroup decay table `e^{−t λ_j}` for fast repeated substeps.
fn heat_table(grid: GridSpec, mass: f64, t: f64) -> Vec<f64> {
    let n = grid.points_per_side;
    let mut table = vec![0.0; n * n];
    for ky in 0..n {
        for kx in 0..n {
            table[kx + n * ky] = (-t * grid.lambda(kx, ky, mass)).exp();
        }
    }
    table
}

fn apply_table(table: &[f64], f: &Field) -> Field {
    let mut spec = crate::fields::fourier_forward(f);
    for (c, m) in spec.coeffs.iter_mut().zip(table) {
        *c *= *m;
    }
    fourier_inverse(&spec)
}

/// Cached per-(dt, scheme) stepping machinery.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub kernels: Arc<Kernels>,
    pub dt: f64,
    pub scheme: Scheme,
    heat_full: Vec<f64>,
    heat_half: Vec<f64>,
}

impl Stepper {
    pub fn new(kernels: Arc<Kernels>, dt: f64, scheme: Scheme) -> Result<Stepper> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "time step must be positive, got {dt}"
            )));
        }
        let grid = kernels.params.grid;
        let mass = kernels.params.mass;
        Ok(Stepper {
            heat_full: heat_table(grid, mass, dt),
            heat_half: heat_table(grid, mass, dt / 2.0),
            kernels,
            dt,
            scheme,
        })
    }

    /// One splitting step of the Y-equation with X frozen at `x`.
    pub fn step_y(&self, x: &Field, y: &Field) -> Result<Field> {
        let dt = self.dt;
        let k = &self.kernels;
        // Free sector: the nonlinearity vanishes identically, so both
        // schemes reduce exactly to the heat semigroup.
        if k.params.alpha == 0.0 {
            if y.values.iter().all(|&v| v == 0.0) {
                return Ok(y.clone());
            }
            return Ok(apply_table(&self.heat_full, y));
        }
        let next = match self.scheme {
            Scheme::LieSplit => {
                let y1 = apply_table(&self.heat_full, y);
                let (g, _) = nonlinearity_g_fejer_with_core(x, &y1, k)?;
                y1.axpy(-dt, &g)
            }
            Scheme::StrangSplit => {
                let y1 = apply_table(&self.heat_half, y);
                // Heun on Y' = −𝒢(X, Y): both stages subtract nonnegative
                // fields, so negativity is preserved exactly.
                let (g1, _) = nonlinearity_g_fejer_with_core(x, &y1, k)?;
                let ya = y1.axpy(-dt, &g1);
                let (g2, _) = nonlinearity_g_fejer_with_core(x, &ya, k)?;
                let y2 = y1.axpy(-dt / 2.0, &g1).axpy(-dt / 2.0, &g2);
                apply_table(&self.heat_half, &y2)
            }
        };
        next.assert_finite()?;
        Ok(next)
    }
}

/// State of one coupled chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub t: f64,
    pub x: OUState,
    pub y: Field,
    pub stepper: Stepper,
    pub step_count: usize,
}

impl ChainState {
    /// Start at `(X, Y) = (stationary free-field sample, 0)`.
    pub fn new_stationary(stepper: Stepper, master_seed: u64, chain_index: u64) -> ChainState {
        let grid = stepper.kernels.params.grid;
        let mass = stepper.kernels.params.mass;
        let x = OUState::stationary(grid, mass, chain_rng(master_seed, chain_index));
        ChainState {
            t: 0.0,
            y: Field::zeros(grid),
            x,
            stepper,
            step_count: 0,
        }
    }

    /// Advance one step: Y uses X frozen at the step start, then X advances
    /// by its exact OU update.
    pub fn step(&mut self) -> Result<()> {
        // The free sector never reads X inside step_y; skip the transform.
        let y_next = if self.stepper.kernels.params.alpha == 0.0 {
            self.stepper.step_y(&self.y, &self.y)?
        } else {
            let x_real = self.x.real_field();
            self.stepper.step_y(&x_real, &self.y)?
        };
        // Structural invariants: negativity up to roundoff, no norm blowup.
        let max_y = y_next.max_value();
        if max_y > NEGATIVITY_TOL {
            return Err(Error::NegativityViolated {
                step: self.step_count,
                max_y,
            });
        }
        let norm = crate::fields::l2_norm(&y_next);
        if !norm.is_finite() || norm > 1e8 {
            return Err(Error::UnstableStep {
                step: self.step_count,
                dt: self.stepper.dt,
                norm,
            });
        }
        ou_step(&mut self.x, self.stepper.dt)?;
        self.y = y_next;
        self.t += self.stepper.dt;
        self.step_count += 1;
        Ok(())
    }

    pub fn run_for(&mut self, time: f64) -> Result<()> {
        let steps = (time / self.stepper.dt).round() as usize;
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }
}

/// Decorrelated stationary samples of the coupled system.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub samples: Vec<(Field, Field)>,
    pub burn_in: f64,
    pub spacing: f64,
    pub master_seed: u64,
    pub params: ModelParams,
    pub dt: f64,
    pub scheme: Scheme,
    /// Non-fatal warnings raised during sampling (e.g. short burn-in).
    pub warnings: Vec<String>,
}

impl Ensemble {
    /// Maximum Y value over all samples (≤ NEGATIVITY_TOL by construction).
    pub fn max_y(&self) -> f64 {
        self.samples
            .iter()
            .map(|(_, y)| y.max_value())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Run settings for stationary sampling.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimOptions {
    pub dt: f64,
    pub scheme: Scheme,
    pub burn_in: f64,
    pub n_samples: usize,
    pub spacing: f64,
    pub n_chains: usize,
}

impl SimOptions {
    /// Defaults: Strang splitting, burn-in 10/m², spacing 1/m².
    pub fn default_for(mass: f64) -> SimOptions {
        SimOptions {
            dt: 0.02,
            scheme: Scheme::StrangSplit,
            burn_in: 10.0 / (mass * mass),
            n_samples: 1000,
            spacing: 1.0 / (mass * mass),
            n_chains: 8,
        }
    }
}

/// Sample the stationary coupled law: start each chain at
/// `(free-field sample, 0)`, integrate past burn-in, then collect samples
/// separated by the decorrelation spacing. Chains run in parallel with
/// disjoint RNG streams; results are deterministic for fixed seeds and
/// independent of the worker count.
pub fn simulate_stationary(
    kernels: Arc<Kernels>,
    opts: &SimOptions,
    master_seed: u64,
) -> Result<Ensemble> {
    let mut warnings = Vec::new();
    let mass = kernels.params.mass;
    if opts.burn_in * mass * mass < 5.0 {
        warnings.push(format!(
            "burn-in {} is short relative to the relaxation time 1/m^2 = {}",
            opts.burn_in,
            1.0 / (mass * mass)
        ));
    }
    let per_chain = opts.n_samples.div_ceil(opts.n_chains);
    let chains: Vec<Result<Vec<(Field, Field)>>> = (0..opts.n_chains as u64)
        .into_par_iter()
        .map(|chain| {
            let stepper = Stepper::new(kernels.clone(), opts.dt, opts.scheme)?;
            let mut state = ChainState::new_stationary(stepper, master_seed, chain);
            state.run_for(opts.burn_in)?;
            let mut samples = Vec::with_capacity(per_chain);
            for _ in 0..per_chain {
                state.run_for(opts.spacing)?;
                samples.push((state.x.real_field(), state.y.clone()));
            }
            Ok(samples)
        })
        .collect();
    let mut samples = Vec::with_capacity(per_chain * opts.n_chains);
    for chain in chains {
        samples.extend(chain?);
    }
    samples.truncate(opts.n_samples);
    Ok(Ensemble {
        samples,
        burn_in: opts.burn_in,
        spacing: opts.spacing,
        master_seed,
        params: kernels.params,
        dt: opts.dt,
        scheme: opts.scheme,
        warnings,
    })
}

/// A recorded trajectory: the (X, Y) pair at the start of every step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    pub scheme: Scheme,
    /// X (real space) at step starts, length = steps.
    pub xs: Vec<Field>,
    /// Y at step starts, length = steps.
    pub ys: Vec<Field>,
    pub final_y: Field,
}

/// Integrate from a prescribed initial condition, recording every step.
/// The RNG draw count per step is independent of the state, so two runs with
/// the same `rng` but different initial fields see identical noise.
pub fn record_trajectory(
    stepper: &Stepper,
    x0: SpectralField,
    y0: Field,
    steps: usize,
    rng: rand_chacha::ChaCha12Rng,
) -> Result<Trajectory> {
    let mass = stepper.kernels.params.mass;
    let mut state = ChainState {
        t: 0.0,
        x: OUState::from_field(x0, mass, rng),
        y: y0,
        stepper: stepper.clone(),
        step_count: 0,
    };
    let mut xs = Vec::with_capacity(steps);
    let mut ys = Vec::with_capacity(steps);
    for _ in 0..steps {
        xs.push(state.x.real_field());
        ys.push(state.y.clone());
        state.step()?;
    }
    Ok(Trajectory {
        dt: stepper.dt,
        scheme: stepper.scheme,
        xs,
        ys,
        final_y: state.y,
    })
}

/// Exact derivative of one discrete splitting step of the Y-map.
///
/// `psi` is the current tangent; `forcing_x` is `∇X_i[h] = P_{t_i} h` for the
/// X-derivative flow (`None` for the Y₀-derivative flow, where X does not
/// depend on the differentiated datum). The derivative operator `D𝒢` is the
/// same for both arguments because `𝒢_Q` depends only on `X + Y`.
fn step_tangent(
    stepper: &Stepper,
    x: &Field,
    y: &Field,
    psi: &Field,
    forcing_x: Option<&Field>,
) -> Result<Field> {
    let dt = stepper.dt;
    let k = &stepper.kernels;
    let add_fx = |f: Field| -> Field {
        match forcing_x {
            Some(hx) => f.axpy(1.0, hx),
            None => f,
        }
    };
    Ok(match stepper.scheme {
        Scheme::LieSplit => {
            let y1 = apply_table(&stepper.heat_full, y);
            let psi1 = apply_table(&stepper.heat_full, psi);
            let (_, core) = nonlinearity_g_fejer_with_core(x, &y1, k)?;
            let dg = d_nonlinearity_g_fejer(&core, &add_fx(psi1.clone()), k);
            psi1.axpy(-dt, &dg)
        }
        Scheme::StrangSplit => {
            let y1 = apply_table(&stepper.heat_half, y);
            let psi1 = apply_table(&stepper.heat_half, psi);
            let (g1, core1) = nonlinearity_g_fejer_with_core(x, &y1, k)?;
            let ya = y1.axpy(-dt, &g1);
            let (_, core_a) = nonlinearity_g_fejer_with_core(x, &ya, k)?;
            // d(g1) and d(g2) along the Heun stages.
            let dg1 = d_nonlinearity_g_fejer(&core1, &add_fx(psi1.clone()), k);
            let dya = psi1.axpy(-dt, &dg1);
            let dg2 = d_nonlinearity_g_fejer(&core_a, &add_fx(dya), k);
            let psib = psi1.axpy(-dt / 2.0, &dg1).axpy(-dt / 2.0, &dg2);
            apply_table(&stepper.heat_half, &psib)
        }
    })
}

/// Linearized flow `∇_{Y₀} Y_t[h]` along a recorded trajectory.
///
/// Returns the tangent at every step start plus the final time (length
/// `steps + 1`, starting with `h` itself).
pub fn linearized_flow_y0(
    trajectory: &Trajectory,
    h: &Field,
    stepper: &Stepper,
) -> Result<Vec<Field>> {
    check_trajectory(trajectory, stepper)?;
    let mut psi = h.clone();
    let mut out = Vec::with_capacity(trajectory.xs.len() + 1);
    out.push(psi.clone());
    for (x, y) in trajectory.xs.iter().zip(&trajectory.ys) {
        psi = step_tangent(stepper, x, y, &psi, None)?;
        out.push(psi.clone());
    }
    Ok(out)
}

/// Linearized flow `∇_{X₀} Y_t[h]` along a recorded trajectory (zero initial
/// tangent; forcing through the X-derivative with `∇X_t[h] = P_t h`).
pub fn linearized_flow_x0(
    trajectory: &Trajectory,
    h: &Field,
    stepper: &Stepper,
) -> Result<Vec<Field>> {
    check_trajectory(trajectory, stepper)?;
    let grid = stepper.kernels.params.grid;
    let mut psi = Field::zeros(grid);
    let mut hx = h.clone();
    let mut out = Vec::with_capacity(trajectory.xs.len() + 1);
    out.push(psi.clone());
    for (x, y) in trajectory.xs.iter().zip(&trajectory.ys) {
        psi = step_tangent(stepper, x, y, &psi, Some(&hx))?;
        hx = apply_table(&stepper.heat_full, &hx);
        out.push(psi.clone());
    }
    Ok(out)
}

fn check_trajectory(trajectory: &Trajectory, stepper: &Stepper) -> Result<()> {
    if trajectory.dt != stepper.dt || trajectory.scheme != stepper.scheme {
        return Err(Error::TrajectoryMismatch(format!(
            "trajectory recorded at dt = {}, scheme {:?}; stepper has dt = {}, scheme {:?}",
            trajectory.dt, trajectory.scheme, stepper.dt, stepper.scheme
        )));
    }
    if trajectory.xs.len() != trajectory.ys.len() {
        return Err(Error::TrajectoryMismatch(
            "trajectory X/Y record lengths differ".into(),
        ));
    }
    Ok(())
}

/// Energy diagnostic along the forced linearized flow: integrates the
/// X₀-derivative equation with datum `h`, and reports
///
/// - `lhs`: `‖ψ_half(T)‖² + Σ dt (‖∇ψ_half‖² + m²‖ψ_half‖²)` with
///   `ψ_half` the half-smoothed tangent (square-root of the composite
///   smoothing chain applied to ψ),
/// - `rhs`: `Σ dt ‖α² core · (K P_t h)‖²` (the forcing term),
/// - `ratio = lhs/rhs`, an implementation-measured constant.
pub fn energy_diagnostic(
    trajectory: &Trajectory,
    h: &Field,
    stepper: &Stepper,
) -> Result<(f64, f64, f64)> {
    let k = &stepper.kernels;
    let grid = k.params.grid;
    let mass = k.params.mass;
    let alpha2 = k.params.alpha * k.params.alpha;
    // Square root of the composite multiplier (all entries nonnegative).
    let half_mult: Vec<f64> = k.mult_qg.iter().map(|m| m.max(0.0).sqrt()).collect();
    let tangents = linearized_flow_x0(trajectory, h, stepper)?;
    let dt = stepper.dt;
    let mut lhs_integral = 0.0;
    let mut rhs = 0.0;
    let mut hx = h.clone();
    for (i, psi) in tangents.iter().enumerate() {
        let psi_half = crate::fields::convolve_with_multiplier(&half_mult, psi);
        let grad_sq = {
            // ‖∇f‖² = (2πM)² Σ |j/M|² |f̂_j|².
            let spec = crate::fields::fourier_forward(&psi_half);
            let vol = grid.side_length() * grid.side_length();
            let n = grid.points_per_side;
            let mut sum = 0.0;
            for ky in 0..n {
                for kx in 0..n {
                    let freq_sq = grid.lambda(kx, ky, mass) - mass * mass;
                    sum += freq_sq * spec.coeffs[kx + n * ky].norm_sqr();
                }
            }
            vol * sum
        };
        let l2_sq = crate::fields::l2_inner(&psi_half, &psi_half);
        if i < tangents.len() - 1 {
            lhs_integral += dt * (grad_sq + mass * mass * l2_sq);
            // Forcing at step i: α² core_i · (K hx).
            let x = &trajectory.xs[i];
            let y = &trajectory.ys[i];
            let (_, core) = nonlinearity_g_fejer_with_core(x, y, k)?;
            let force = core.mul(&k.smooth_fejer(&hx)).scale(alpha2);
            rhs += dt * crate::fields::l2_inner(&force, &force);
            hx = apply_table(&stepper.heat_full, &hx);
        } else {
            lhs_integral += l2_sq; // terminal energy
        }
    }
    let ratio = lhs_integral / rhs;
    Ok((lhs_integral, rhs, ratio))
}
