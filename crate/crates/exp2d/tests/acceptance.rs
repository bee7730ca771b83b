//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL verdict line with its pinned tolerance.
//!
//! Sizes that the criteria pin (grid resolutions, sample counts, coupling
//! values) are used verbatim; free sizes are chosen for desk-scale runtime.

use exp2d::besov::regularity_slope;
use exp2d::dynamics::{
    linearized_flow_x0, linearized_flow_y0, record_trajectory, simulate_stationary, ChainState,
    Scheme, SimOptions, Stepper, NEGATIVITY_TOL,
};
use exp2d::fields::{
    fourier_forward, l2_norm, make_grid, CutoffMode, Field, GridSpec,
};
use exp2d::functionals::{
    calibrate_lyapunov, fpk_residual, ibp_residual, lyapunov_drift_check, lyapunov_pass,
    CylinderFunction, DriftForm, Expr, Slot,
};
use exp2d::gff::{
    chain_rng, covariance_field, renorm_constant, sample_gff, sample_gff_spectral, ModelParams,
};
use exp2d::params::{
    choose_indices, gamma_max, gamma_max_stationarity_residual, gamma_tilde_max,
    lemma39_feasibility_boundary,
};
use exp2d::resolvent::{contraction_probe, resolvent_identity_check};
use exp2d::stats::{linear_fit, Accumulator};
use exp2d::wick::{wick_exp, Kernels};
use rand::Rng;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {id:02} {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id:02} {name} failed: {detail}");
}

fn kernels(gamma: f64, mass: f64, eps: f64, order: usize, grid: GridSpec) -> Arc<Kernels> {
    let params = ModelParams::from_gamma(gamma, mass, eps, order, grid).unwrap();
    Arc::new(Kernels::new(params, CutoffMode::TorusUnity).unwrap())
}

/// Normalized band-limited test vector (modes within |j| <= 3).
fn band_vector(grid: GridSpec, seed: u64) -> Field {
    let mut rng = chain_rng(seed, 999);
    let mut spec = exp2d::fields::SpectralField::zeros(grid);
    let n = grid.points_per_side;
    for ky in 0..n {
        for kx in 0..n {
            if grid.mode_of(kx).abs() <= 3 && grid.mode_of(ky).abs() <= 3 {
                spec.coeffs[kx + n * ky] = num_complex::Complex64::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
            }
        }
    }
    let f = exp2d::fields::fourier_inverse(&spec);
    f.scale(1.0 / l2_norm(&f))
}

/// The shipped cylinder outer-function library used by criteria 8 and 9.
fn outer_library() -> Vec<Expr> {
    use Expr::*;
    vec![
        Sum(vec![Coord(0), Const(0.5)]),
        Pow(Box::new(Coord(0)), 2),
        Prod(vec![Coord(0), Coord(1)]),
        Sum(vec![
            Pow(Box::new(Coord(0)), 3),
            Scale(-2.0, Box::new(Coord(1))),
        ]),
        Pow(Box::new(Sum(vec![Coord(0), Coord(1)])), 2),
        Tanh(Box::new(Coord(0))),
        Prod(vec![Tanh(Box::new(Coord(0))), Coord(1)]),
        Pow(Box::new(Coord(1)), 4),
    ]
}

const SEED: u64 = 20260823;

// ---------------------------------------------------------------------------
// 1. Wick normalization: pointwise mean of the Wick exponential is 1.
//    Pinned: gamma in {0.05, 0.1, 0.25}, n = 128, M = 1, eps = 8h, 1e4
//    samples, |mean - 1| < 3 stderr.
#[test]
fn criterion_01_wick_normalization() {
    let grid = make_grid(1.0, 128).unwrap();
    let eps = 8.0 * grid.spacing();
    let n_samples = 10_000u64;
    let probe = (37usize, 91usize); // arbitrary fixed grid point
    let mut detail = String::new();
    let mut pass = true;
    for &gamma in &[0.05, 0.1, 0.25] {
        let k = kernels(gamma, 1.0, eps, 32, grid);
        let values: Vec<f64> = (0..n_samples)
            .into_par_iter()
            .map(|i| {
                let x = sample_gff(grid, 1.0, &mut chain_rng(SEED, i));
                wick_exp(&x, &k).unwrap().values.value_at(probe.0, probe.1)
            })
            .collect();
        let acc: Accumulator = values.into_iter().collect();
        let z = (acc.mean - 1.0) / acc.stderr();
        detail.push_str(&format!("gamma {gamma}: mean {:.5}, z {:.2}; ", acc.mean, z));
        pass &= z.abs() < 3.0;
    }
    verdict(1, "wick-normalization", pass, detail.trim_end());
}

// ---------------------------------------------------------------------------
// 2. Renormalization-constant rate: halving eps adds (log 2)/(2 pi).
//    Pinned: eps in {0.2, 0.1, 0.05, 0.025}, n = 512, diffs within 10%.
#[test]
fn criterion_02_renorm_rate() {
    let grid = make_grid(1.0, 512).unwrap();
    let eps_grid = [0.2, 0.1, 0.05, 0.025];
    let cs: Vec<f64> = eps_grid
        .iter()
        .map(|&e| renorm_constant(e, 1.0, grid).unwrap())
        .collect();
    let rate = 2.0_f64.ln() / (2.0 * PI);
    let mut pass = true;
    let mut detail = String::new();
    for w in cs.windows(2) {
        let diff = w[1] - w[0];
        detail.push_str(&format!("{diff:.5} "));
        pass &= (diff / rate - 1.0).abs() < 0.10;
    }
    detail.push_str(&format!("vs (log2)/2pi = {rate:.5}"));
    verdict(2, "renorm-rate", pass, &detail);
}

// ---------------------------------------------------------------------------
// 3. Covariance log-law: slope of X(x) against -(1/2pi) log|x| is 1 +- 0.1
//    on |x| in [4h, 20h].
#[test]
fn criterion_03_covariance_log_law() {
    let grid = make_grid(1.0, 512).unwrap();
    let h = grid.spacing();
    let cov = covariance_field(1.0, grid);
    let n = grid.points_per_side;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for iy in 0..n {
        for ix in 0..n {
            let (x, y) = (grid.coord_of(ix), grid.coord_of(iy));
            let r = (x * x + y * y).sqrt();
            if r >= 4.0 * h && r <= 20.0 * h {
                xs.push(-r.ln() / (2.0 * PI));
                ys.push(cov.value_at(ix, iy));
            }
        }
    }
    let (slope, _, stderr) = linear_fit(&xs, &ys);
    let pass = (slope - 1.0).abs() < 0.1;
    verdict(
        3,
        "covariance-log-law",
        pass,
        &format!("slope {slope:.4} +- {stderr:.4}, window [4h, 20h], {} points", xs.len()),
    );
}

// ---------------------------------------------------------------------------
// 4. Negativity invariant: gamma = 0.25, 1e4 steps, 10 chains, max Y <= 1e-12.
#[test]
fn criterion_04_negativity_invariant() {
    let grid = make_grid(1.0, 32).unwrap();
    let k = kernels(0.25, 1.0, 0.4, 8, grid);
    let worst = (0..10u64)
        .into_par_iter()
        .map(|chain| {
            let stepper = Stepper::new(k.clone(), 0.02, Scheme::StrangSplit).unwrap();
            let mut state = ChainState::new_stationary(stepper, SEED, chain);
            let mut worst = f64::NEG_INFINITY;
            for _ in 0..10_000 {
                state.step().unwrap();
                worst = worst.max(state.y.max_value());
            }
            worst
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    verdict(
        4,
        "negativity-invariant",
        worst <= 1e-12,
        &format!("max Y over 10 chains x 1e4 steps = {worst:.3e} (tol 1e-12)"),
    );
}

// ---------------------------------------------------------------------------
// 5. Regularity of the Wick exponential: slope estimate -gamma +- 0.1 at
//    gamma = 0.25, p = 2, 200 samples.
#[test]
fn criterion_05_wick_regularity_slope() {
    let grid = make_grid(1.0, 128).unwrap();
    // Smallest admissible mollification scale: the dyadic levels entering the
    // regression must sit below the mollifier cutoff for the -gamma law.
    let eps = 2.0 * grid.spacing();
    let k = kernels(0.25, 1.0, eps, 64, grid);
    let fields: Vec<Field> = (0..200u64)
        .into_par_iter()
        .map(|i| {
            let x = sample_gff(grid, 1.0, &mut chain_rng(SEED + 5, i));
            wick_exp(&x, &k).unwrap().values
        })
        .collect();
    let report = regularity_slope(&fields, 2.0).unwrap();
    let pass = (report.estimate + 0.25).abs() < 0.1;
    verdict(
        5,
        "wick-regularity-slope",
        pass,
        &format!(
            "estimate {:.4} vs -0.25 (tol 0.1), levels {:?}",
            report.estimate, report.levels_used
        ),
    );
}

// ---------------------------------------------------------------------------
// 6. Gradient check: linearized flows vs common-random-number finite
//    differences, relative error < 1e-3 at lambda = 1e-4, horizon 1,
//    gamma = 0.1.
#[test]
fn criterion_06_gradient_check() {
    let grid = make_grid(1.0, 32).unwrap();
    let k = kernels(0.1, 1.0, 0.4, 8, grid);
    let dt = 0.02;
    let steps = 50; // horizon 1.0
    let mut pass = true;
    let mut detail = String::new();
    for scheme in [Scheme::LieSplit, Scheme::StrangSplit] {
        let stepper = Stepper::new(k.clone(), dt, scheme).unwrap();
        let x0 = sample_gff_spectral(grid, 1.0, &mut chain_rng(SEED + 6, 0));
        let y0 = Field::from_fn(grid, |a, b| -0.5 - 0.2 * (a + b).cos().powi(2));
        let traj =
            record_trajectory(&stepper, x0.clone(), y0.clone(), steps, chain_rng(SEED + 6, 1))
                .unwrap();
        let lambda = 1e-4;
        let h_neg = Field::from_fn(grid, |a, b| -(1.0 + 0.5 * (a - b).sin()));
        let flow = linearized_flow_y0(&traj, &h_neg, &stepper).unwrap();
        let traj_p = record_trajectory(
            &stepper,
            x0.clone(),
            y0.axpy(lambda, &h_neg),
            steps,
            chain_rng(SEED + 6, 1),
        )
        .unwrap();
        let fd = traj_p.final_y.axpy(-1.0, &traj.final_y).scale(1.0 / lambda);
        let rel_y =
            l2_norm(&fd.axpy(-1.0, flow.last().unwrap())) / l2_norm(flow.last().unwrap());

        let hx = band_vector(grid, 16);
        let xflow = linearized_flow_x0(&traj, &hx, &stepper).unwrap();
        let mut x0p = x0.clone();
        let pert = fourier_forward(&hx);
        for (c, p) in x0p.coeffs.iter_mut().zip(&pert.coeffs) {
            *c += lambda * p;
        }
        let traj_px =
            record_trajectory(&stepper, x0p, y0.clone(), steps, chain_rng(SEED + 6, 1)).unwrap();
        let fd = traj_px.final_y.axpy(-1.0, &traj.final_y).scale(1.0 / lambda);
        let rel_x =
            l2_norm(&fd.axpy(-1.0, xflow.last().unwrap())) / l2_norm(xflow.last().unwrap());
        detail.push_str(&format!("{scheme:?}: relY {rel_y:.2e}, relX {rel_x:.2e}; "));
        pass &= rel_y < 1e-3 && rel_x < 1e-3;
    }
    verdict(6, "gradient-check", pass, detail.trim_end());
}

// ---------------------------------------------------------------------------
// 7. Contraction envelope: smoothed Y0-tangent decays inside e^{-kt} for some
//    k in (0, m^2] over 20 trials; verdict unchanged when eps is halved.
#[test]
fn criterion_07_contraction_envelope() {
    let grid = make_grid(1.0, 32).unwrap();
    let h = Field::constant(grid, -1.0).axpy(0.1, &band_vector(grid, 17));
    let mut verdicts = Vec::new();
    let mut detail = String::new();
    for eps in [0.8, 0.4] {
        let k = kernels(0.1, 1.0, eps, 8, grid);
        let report = contraction_probe(k, &h, 20, 0.05, 2.0, SEED + 7).unwrap();
        detail.push_str(&format!(
            "eps {eps}: envelope {} (k_hat {:.3}, fit {:.3}); ",
            report.envelope_holds, report.envelope_rate, report.fitted_rate
        ));
        verdicts.push(report.envelope_holds);
    }
    let pass = verdicts[0] && verdicts[1];
    verdict(7, "contraction-envelope", pass, detail.trim_end());
}

// ---------------------------------------------------------------------------
// 8. Gaussian-sector oracles: alpha = 0 IbP, FPK, and resolvent identity all
//    |z| < 3. Pinned: 1e4 samples for the residuals, 1e3 x 1e2 paths for the
//    resolvent.
#[test]
fn criterion_08_gaussian_sector_oracles() {
    let mut detail = String::new();
    let mut pass = true;
    // IbP + FPK on n = 32 with the shipped library.
    {
        let grid = make_grid(1.0, 32).unwrap();
        let k = kernels(0.0, 1.0, 0.4, 8, grid);
        let zero = Field::zeros(grid);
        let samples: Vec<(Field, Field)> = (0..10_000u64)
            .into_par_iter()
            .map(|i| (sample_gff(grid, 1.0, &mut chain_rng(SEED + 8, i)), zero.clone()))
            .collect();
        let h = band_vector(grid, 18);
        let (u1, u2) = (band_vector(grid, 19), band_vector(grid, 20));
        let mut worst_ibp: f64 = 0.0;
        for expr in outer_library() {
            let vectors = if expr.arity() <= 1 {
                vec![u1.clone()]
            } else {
                vec![u1.clone(), u2.clone()]
            };
            let cf = CylinderFunction::of_phi(expr, vectors).unwrap();
            let r = ibp_residual(&samples, &cf, &h, &k, DriftForm::GeneratorMatched).unwrap();
            worst_ibp = worst_ibp.max(r.z_score.abs());
        }
        let quad = CylinderFunction::new(
            Expr::Pow(Box::new(Expr::Coord(0)), 2),
            vec![(Slot::X, u1.clone())],
        )
        .unwrap();
        let fpk = fpk_residual(&samples, &quad, &k).unwrap();
        detail.push_str(&format!(
            "worst IbP |z| {worst_ibp:.2}, FPK z {:.2}; ",
            fpk.z_score
        ));
        pass &= worst_ibp < 3.0 && fpk.z_score.abs() < 3.0;
    }
    // Resolvent identity at n = 16 with 1e3 starting points x 1e2 paths.
    {
        let grid = make_grid(1.0, 16).unwrap();
        let k = kernels(0.0, 1.0, 0.9, 4, grid);
        let stepper = Stepper::new(k.clone(), 0.05, Scheme::LieSplit).unwrap();
        let u = band_vector(grid, 21);
        let f = CylinderFunction::new(Expr::Coord(0), vec![(Slot::X, u)]).unwrap();
        let zero = Field::zeros(grid);
        let samples: Vec<(Field, Field)> = (0..1000u64)
            .map(|i| (sample_gff(grid, 1.0, &mut chain_rng(SEED + 9, i)), zero.clone()))
            .collect();
        let report =
            resolvent_identity_check(&f, 1.0, &samples, &stepper, 100, 6.0, SEED + 10).unwrap();
        detail.push_str(&format!("resolvent z {:.2}", report.z_score));
        pass &= report.z_score.abs() < 3.0;
    }
    verdict(8, "gaussian-sector-oracles", pass, &detail);
}

// ---------------------------------------------------------------------------
// 9. Interacting-model identities at gamma = 0.1: generator-matched IbP and
//    FPK |z| < 4 with declared O(dt) allowance; mollified-drift residual
//    decreases over projection orders {8, 16, 32} within error bars.
#[test]
fn criterion_09_interacting_identities() {
    let grid = make_grid(1.0, 64).unwrap();
    let dt = 0.02;
    // Declared discretization allowance on the residual mean.
    let dt_allowance_scale = 1.0;
    let opts = SimOptions {
        dt,
        scheme: Scheme::StrangSplit,
        burn_in: 6.0,
        n_samples: 1500,
        spacing: 0.5,
        n_chains: 12,
    };
    let mut detail = String::new();
    let mut pass = true;
    let k32 = kernels(0.1, 1.0, 0.4, 32, grid);
    let ens = simulate_stationary(k32.clone(), &opts, SEED + 11).unwrap();
    let h = band_vector(grid, 22);
    let u = band_vector(grid, 23);
    let cf = CylinderFunction::of_phi(Expr::Tanh(Box::new(Expr::Coord(0))), vec![u.clone()])
        .unwrap();
    let ibp = ibp_residual(&ens.samples, &cf, &h, &k32, DriftForm::GeneratorMatched).unwrap();
    let ibp_ok = ibp.residual.abs() < 4.0 * ibp.stderr + dt_allowance_scale * dt;
    let cfq = CylinderFunction::new(
        Expr::Pow(Box::new(Expr::Coord(0)), 2),
        vec![(Slot::Phi, u)],
    )
    .unwrap();
    let fpk = fpk_residual(&ens.samples, &cfq, &k32).unwrap();
    let fpk_ok = fpk.residual.abs() < 4.0 * fpk.stderr + dt_allowance_scale * dt;
    detail.push_str(&format!(
        "IbP z {:.2} (res {:.2e}), FPK z {:.2} (res {:.2e}), dt allowance {:.0e}; ",
        ibp.z_score,
        ibp.residual,
        fpk.z_score,
        fpk.residual,
        dt_allowance_scale * dt
    ));
    pass &= ibp_ok && fpk_ok;
    // Projection-order trend of the mollified-drift residual at fixed eps.
    let mut residuals = Vec::new();
    for order in [8usize, 16, 32] {
        let k = kernels(0.1, 1.0, 0.4, order, grid);
        let e = simulate_stationary(k.clone(), &opts, SEED + 12).unwrap();
        let cf = CylinderFunction::of_phi(
            Expr::Tanh(Box::new(Expr::Coord(0))),
            vec![band_vector(grid, 23)],
        )
        .unwrap();
        let r = ibp_residual(&e.samples, &cf, &h, &k, DriftForm::MollifiedLimit).unwrap();
        residuals.push((order, r.residual.abs(), r.stderr));
        detail.push_str(&format!("N={order}: |res| {:.3e}+-{:.1e}; ", r.residual.abs(), r.stderr));
    }
    let trend = residuals[0].1 + 2.0 * residuals[0].2 > residuals[1].1
        && residuals[1].1 + 2.0 * residuals[1].2 > residuals[2].1;
    pass &= trend;
    verdict(9, "interacting-identities", pass, detail.trim_end());
}

// ---------------------------------------------------------------------------
// 10. Resolvent identity in the interacting model: gamma = 0.1, lambda = 1,
//     |z| < 4 plus the quoted truncation bound.
#[test]
fn criterion_10_resolvent_identity() {
    let grid = make_grid(1.0, 32).unwrap();
    let k = kernels(0.1, 1.0, 0.4, 8, grid);
    let opts = SimOptions {
        dt: 0.02,
        scheme: Scheme::StrangSplit,
        burn_in: 6.0,
        n_samples: 200,
        spacing: 0.5,
        n_chains: 8,
    };
    let ens = simulate_stationary(k.clone(), &opts, SEED + 13).unwrap();
    let stepper = Stepper::new(k.clone(), 0.05, Scheme::LieSplit).unwrap();
    let u = band_vector(grid, 24);
    let f = CylinderFunction::new(Expr::Coord(0), vec![(Slot::X, u)]).unwrap();
    let report =
        resolvent_identity_check(&f, 1.0, &ens.samples, &stepper, 32, 6.0, SEED + 14).unwrap();
    // Fold a conservative truncation allowance into the tolerance: the tail
    // bound for a centered functional, estimated from the per-sample spread.
    let spread = report.stderr * (report.n_samples as f64).sqrt();
    let truncation = spread * (-6.0_f64).exp();
    let pass = report.residual.abs() < 4.0 * report.stderr + truncation;
    verdict(
        10,
        "resolvent-identity",
        pass,
        &format!(
            "z {:.2}, residual {:.3e}, stderr {:.1e}, truncation allowance {:.1e}",
            report.z_score, report.residual, report.stderr, truncation
        ),
    );
}

// ---------------------------------------------------------------------------
// 11. Lyapunov drift: mean V2 <= calibrated mean V3 at gamma in {0.1, 0.25}
//     with validated indices.
#[test]
fn criterion_11_lyapunov_drift() {
    let grid = make_grid(1.0, 32).unwrap();
    let opts = SimOptions {
        dt: 0.02,
        scheme: Scheme::StrangSplit,
        burn_in: 6.0,
        n_samples: 300,
        spacing: 0.5,
        n_chains: 8,
    };
    let quad = exp2d::besov::HeatQuadrature::default_for(grid, 1.0);
    let mut detail = String::new();
    let mut pass = true;
    // Calibration frozen once in the free sector.
    let free = kernels(0.0, 1.0, 0.4, 8, grid);
    let free_ens = simulate_stationary(free, &opts, SEED + 15).unwrap();
    for &gamma in &[0.1, 0.25] {
        let idx = choose_indices(gamma).unwrap();
        let calibration = calibrate_lyapunov(&free_ens.samples, &idx, 1.0, &quad).unwrap();
        let k = kernels(gamma, 1.0, 0.4, 8, grid);
        let ens = simulate_stationary(k.clone(), &opts, SEED + 16).unwrap();
        let report = lyapunov_drift_check(&ens.samples, &idx, &k, calibration, &quad).unwrap();
        let ok = lyapunov_pass(&report);
        detail.push_str(&format!(
            "gamma {gamma}: V2 {:.3e} vs V3 {:.3e} ({}); ",
            report.lhs_estimate,
            report.rhs_estimate,
            if ok { "ok" } else { "violated" }
        ));
        pass &= ok;
    }
    verdict(11, "lyapunov-drift", pass, detail.trim_end());
}

// ---------------------------------------------------------------------------
// 12. Parameter extremals: gamma_tilde_max exact; gamma_max (0.55, 2.52) to
//     two decimals; lemma-39 feasibility boundary bisects to within 0.01 of
//     3 - 2 sqrt(2).
#[test]
fn criterion_12_parameter_extremals() {
    let exact = gamma_tilde_max() == 3.0 - 2.0 * 2.0_f64.sqrt();
    let (g, r) = gamma_max();
    let landmarks = (g - 0.55).abs() < 0.005 && (r - 2.52).abs() < 0.005
        && gamma_max_stationarity_residual(r).abs() < 1e-8;
    let boundary = lemma39_feasibility_boundary(2e-3).unwrap();
    let boundary_ok = (boundary - (3.0 - 2.0 * 2.0_f64.sqrt())).abs() < 0.01;
    let pass = exact && landmarks && boundary_ok;
    verdict(
        12,
        "parameter-extremals",
        pass,
        &format!(
            "gamma_tilde exact {exact}; gamma_max ({g:.4}, {r:.4}); boundary {boundary:.4}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 13. Determinism: rerunning a criterion statistic with the same seed is
//     bit-identical on one worker.
#[test]
fn criterion_13_determinism() {
    // Statistic A: Wick-normalization mean (criterion 1's statistic at a
    // reduced sample count, sequentially accumulated).
    let grid = make_grid(1.0, 64).unwrap();
    let k = kernels(0.1, 1.0, 8.0 * grid.spacing(), 16, grid);
    let stat = || -> f64 {
        let mut acc = Accumulator::new();
        for i in 0..2000u64 {
            let x = sample_gff(grid, 1.0, &mut chain_rng(SEED + 17, i));
            acc.push(wick_exp(&x, &k).unwrap().values.value_at(11, 47));
        }
        acc.mean
    };
    let bitwise_a = stat().to_bits() == stat().to_bits();
    // Statistic B: a short stationary ensemble (criterion 4's machinery).
    let g32 = make_grid(1.0, 16).unwrap();
    let k2 = kernels(0.25, 1.0, 0.9, 4, g32);
    let opts = SimOptions {
        dt: 0.05,
        scheme: Scheme::StrangSplit,
        burn_in: 1.0,
        n_samples: 8,
        spacing: 0.2,
        n_chains: 4,
    };
    let a = simulate_stationary(k2.clone(), &opts, SEED + 18).unwrap();
    let b = simulate_stationary(k2, &opts, SEED + 18).unwrap();
    let bitwise_b = a
        .samples
        .iter()
        .zip(&b.samples)
        .all(|(sa, sb)| sa.0.values == sb.0.values && sa.1.values == sb.1.values);
    let _ = NEGATIVITY_TOL;
    verdict(
        13,
        "determinism",
        bitwise_a && bitwise_b,
        &format!("wick statistic bitwise {bitwise_a}, ensemble bitwise {bitwise_b}"),
    );
}
