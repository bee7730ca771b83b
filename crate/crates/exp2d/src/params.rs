//! Closed-form parameter windows and feasibility searches for the coupling
//! strength `γ = α²/4π`.
//!
//! The model's analysis runs through chains of Hölder/Besov-embedding
//! inequalities whose exponents must satisfy explicit systems of strict
//! inequalities. This module evaluates those windows exactly where closed
//! forms exist and otherwise locates maximal-slack interior points by a
//! grid-plus-refinement search, so downstream simulations get indices with
//! genuine margin rather than boundary points.
//!
//! Known landmarks:
//! - `γ̃_max = 3 − 2√2 ≈ 0.1716`: the feasibility boundary of the
//!   four-variable system solved by [`solve_system_lemma39`];
//! - `γ_max ≈ 0.554` at `r* ≈ 2.521`: the maximum of
//!   `γ(r) = 2(r−1)²/(r((r−1)²+1))` over `r > 1`, with stationarity
//!   condition `(r−1)³ − (r−1) − 2 = 0`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A point in exponent space together with the named constraint values it
/// was validated against. `slack` is the minimum constraint margin (positive
/// for strictly feasible points).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeasibleTuple {
    pub gamma: f64,
    pub s: Option<f64>,
    pub p: Option<f64>,
    pub r: Option<f64>,
    pub q: Option<f64>,
    pub kappa: Option<f64>,
    pub delta: Option<f64>,
    pub theta: Option<f64>,
    pub beta: Option<f64>,
    /// name -> margin (constraint holds iff margin > 0, or ≥ 0 where noted).
    pub satisfied_constraints: BTreeMap<String, f64>,
    pub slack: f64,
    /// Notes on known discrepancies (e.g. a literature value that disagrees
    /// with the self-consistent solution).
    pub notes: Vec<String>,
}

impl FeasibleTuple {
    pub fn feasible(&self) -> bool {
        self.slack > 0.0
    }

    /// Name of the binding (minimal-margin) constraint.
    pub fn binding_constraint(&self) -> Option<String> {
        self.satisfied_constraints
            .iter()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k.clone())
    }
}

/// Exact feasibility boundary of the [`solve_system_lemma39`] system:
/// `3 − 2√2`.
pub fn gamma_tilde_max() -> f64 {
    3.0 - 2.0 * 2.0_f64.sqrt()
}

/// The coupling bound as a function of the integrability exponent:
/// `γ(r) = 2(r−1)²/(r((r−1)²+1))`.
pub fn gamma_of_r(r: f64) -> f64 {
    let u = r - 1.0;
    2.0 * u * u / (r * (u * u + 1.0))
}

/// Maximize [`gamma_of_r`] over `r > 1` by golden-section search to 1e−10.
///
/// Returns `(γ_max, r*)`. The optimizer also satisfies the closed-form
/// stationarity condition `(r−1)³ − (r−1) − 2 = 0`.
pub fn gamma_max() -> (f64, f64) {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (1.0 + 1e-9, 20.0);
    while b - a > 1e-12 {
        let c = b - inv_phi * (b - a);
        let d = a + inv_phi * (b - a);
        if gamma_of_r(c) >= gamma_of_r(d) {
            b = d;
        } else {
            a = c;
        }
    }
    // Golden section localizes r only to ~sqrt(eps) at the flat maximum;
    // polish with Newton on the stationarity cubic (r−1)³ − (r−1) − 2 = 0.
    let mut r_star = 0.5 * (a + b);
    for _ in 0..50 {
        let u = r_star - 1.0;
        let f = u * u * u - u - 2.0;
        let df = 3.0 * u * u - 1.0;
        let step = f / df;
        r_star -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    (gamma_of_r(r_star), r_star)
}

/// Residual of the stationarity condition `(r−1)³ − (r−1) − 2 = 0` at `r`.
pub fn gamma_max_stationarity_residual(r: f64) -> f64 {
    let u = r - 1.0;
    u * u * u - u - 2.0
}

/// Admissible smoothness window `s ∈ (0, γ + 2 − √(8γ))`.
///
/// Returns `(0, upper)`; an empty window is reported with `upper ≤ 0`, not
/// as an error.
pub fn s_interval(gamma: f64) -> Result<(f64, f64)> {
    if !(gamma > 0.0 && gamma < 2.0) {
        return Err(Error::InvalidParameter(format!(
            "s_interval requires 0 < gamma < 2, got {gamma}"
        )));
    }
    Ok((0.0, gamma + 2.0 - (8.0 * gamma).sqrt()))
}

/// Admissible integrability window: the roots of
/// `γ r² + r(s − γ − 2) + 2 = 0`, intersected with `{r : γ r < 2}`.
///
/// Returns `None` when the discriminant is negative or the intersection is
/// empty (reported, not an error).
pub fn r_interval(gamma: f64, s: f64) -> Result<Option<(f64, f64)>> {
    if !(gamma > 0.0 && gamma < 2.0) || !s.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "r_interval requires 0 < gamma < 2 and finite s, got gamma = {gamma}, s = {s}"
        )));
    }
    let b = s - gamma - 2.0;
    let disc = b * b - 8.0 * gamma;
    if disc < 0.0 {
        return Ok(None);
    }
    let sqrt_disc = disc.sqrt();
    let r_minus = (-b - sqrt_disc) / (2.0 * gamma);
    let r_plus = (-b + sqrt_disc) / (2.0 * gamma);
    let hi = r_plus.min(2.0 / gamma);
    let lo = r_minus.max(1.0);
    if lo < hi {
        Ok(Some((lo, hi)))
    } else {
        Ok(None)
    }
}

/// The basic admissibility conditions on `(s, p, r, γ, δ)`:
/// `1/p + 1/r ≤ 1`, `s − γ(r−1) − 2δ > 0`, `γ r < 2`.
///
/// Returns each inequality by name with its margin.
pub fn check_def_basic(s: f64, p: f64, r: f64, gamma: f64, delta: f64) -> BTreeMap<String, f64> {
    let mut map = BTreeMap::new();
    // Margin convention: value > 0 means satisfied (≥ 0 for the non-strict
    // Hölder duality condition).
    map.insert("holder_duality_1/p+1/r<=1".into(), 1.0 - 1.0 / p - 1.0 / r);
    map.insert(
        "smoothness_gap_s-gamma(r-1)-2delta>0".into(),
        s - gamma * (r - 1.0) - 2.0 * delta,
    );
    map.insert("integrability_gamma*r<2".into(), 2.0 - gamma * r);
    map
}

#[cfg(test)]
fn min_margin(map: &BTreeMap<String, f64>) -> f64 {
    map.values().copied().fold(f64::INFINITY, f64::min)
}

/// Constraint system for the moment-bound exponents `(r, q, κ, δ)` at a
/// given `γ`:
///
/// - `κ − γ(r−1) − γ(q−1) − 2δ > 0`
/// - `1/q + 1/r < 1`
/// - `κ q / 2 < 1`
/// - `γ q < 2`, `γ r < 2`, `r > 1`, `q > 1`, `κ > 0`, `δ > 0`
fn constraints_3_20(gamma: f64, r: f64, q: f64, kappa: f64, delta: f64) -> BTreeMap<String, f64> {
    let mut map = BTreeMap::new();
    map.insert(
        "gap_kappa-gamma(r-1)-gamma(q-1)-2delta>0".into(),
        kappa - gamma * (r - 1.0) - gamma * (q - 1.0) - 2.0 * delta,
    );
    map.insert("holder_1/q+1/r<1".into(), 1.0 - 1.0 / q - 1.0 / r);
    map.insert("moment_kappa*q/2<1".into(), 1.0 - kappa * q / 2.0);
    map.insert("integrability_gamma*q<2".into(), 2.0 - gamma * q);
    map.insert("integrability_gamma*r<2".into(), 2.0 - gamma * r);
    map.insert("r>1".into(), r - 1.0);
    map.insert("q>1".into(), q - 1.0);
    map.insert("kappa>0".into(), kappa);
    map.insert("delta>0".into(), delta);
    map
}

/// Allocation-free min-margin of the `(r, q, κ, δ)` system (search hot path).
fn margin_3_20(gamma: f64, r: f64, q: f64, kappa: f64, delta: f64) -> f64 {
    let mut m = kappa - gamma * (r - 1.0) - gamma * (q - 1.0) - 2.0 * delta;
    m = m.min(1.0 - 1.0 / q - 1.0 / r);
    m = m.min(1.0 - kappa * q / 2.0);
    m = m.min(2.0 - gamma * q);
    m = m.min(2.0 - gamma * r);
    m = m.min(r - 1.0).min(q - 1.0).min(kappa).min(delta);
    m
}

/// Allocation-free min-margin of the `(p, q, θ, β, δ)` system.
fn margin_lemma39(gamma: f64, p: f64, q: f64, theta: f64, beta: f64, delta: f64) -> f64 {
    let mut m = -gamma * (q - 1.0) + 2.0 * beta - 2.0 / q;
    m = m.min(-gamma * (p - 1.0) - delta + theta);
    m = m.min(0.5 - 1.0 / p);
    m = m.min(1.0 - (1.0 / p + beta - delta + theta / 2.0));
    m = m.min(1.0 - theta).min(theta);
    m = m.min(1.0 - beta).min(beta);
    m = m.min(delta).min(p - 1.0).min(q - 1.0);
    m
}

/// Multi-round coordinate grid search for a maximal-min-margin point.
///
/// `dims` are `(lo, hi)` boxes; `eval` maps a point to its min margin.
fn refine_search(
    dims: &[(f64, f64)],
    eval: &dyn Fn(&[f64]) -> f64,
    points_per_dim: usize,
    rounds: usize,
) -> (Vec<f64>, f64) {
    let mut boxes: Vec<(f64, f64)> = dims.to_vec();
    let mut best_point: Vec<f64> = boxes.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
    let mut best = eval(&best_point);
    for _ in 0..rounds {
        // Exhaustive grid over the current boxes (dimension ≤ 4 keeps this
        // cheap), then shrink the boxes around the winner.
        let grids: Vec<Vec<f64>> = boxes
            .iter()
            .map(|(lo, hi)| {
                (0..points_per_dim)
                    .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / points_per_dim as f64)
                    .collect()
            })
            .collect();
        let mut idx = vec![0usize; boxes.len()];
        loop {
            let point: Vec<f64> = idx.iter().zip(&grids).map(|(&i, g)| g[i]).collect();
            let value = eval(&point);
            if value > best {
                best = value;
                best_point = point;
            }
            // odometer increment
            let mut d = 0;
            loop {
                idx[d] += 1;
                if idx[d] < points_per_dim {
                    break;
                }
                idx[d] = 0;
                d += 1;
                if d == boxes.len() {
                    break;
                }
            }
            if d == boxes.len() {
                break;
            }
        }
        for (bx, center) in boxes.iter_mut().zip(&best_point) {
            let width = (bx.1 - bx.0) / points_per_dim as f64 * 2.0;
            bx.0 = (center - width).max(bx.0);
            bx.1 = (center + width).min(bx.1);
        }
    }
    (best_point, best)
}

/// Search the `(r, q, κ, δ)` system at `γ` for a maximal-slack interior
/// point. Infeasible reports carry the minimal violation and the binding
/// constraint name.
pub fn solve_system_3_20(gamma: f64) -> Result<FeasibleTuple> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "solve_system_3_20 requires gamma > 0, got {gamma}"
        )));
    }
    let r_hi = (2.0 / gamma).min(8.0);
    let dims = [
        (1.0 + 1e-6, r_hi),       // r
        (1.0 + 1e-6, r_hi),       // q
        (1e-6, 2.0),              // kappa
        (1e-6, 0.5),              // delta
    ];
    let eval = |v: &[f64]| margin_3_20(gamma, v[0], v[1], v[2], v[3]);
    // Seed the search at the proof's equality point q = r/(r−1), κq = 2,
    // evaluated at the extremal r, then take whichever wins.
    let (point, slack) = refine_search(&dims, &eval, 13, 6);
    let (_, r_star) = gamma_max();
    let q_eq = r_star / (r_star - 1.0);
    let seed = [r_star, q_eq, 2.0 / q_eq * (1.0 - 1e-3), 1e-4];
    let (point, slack) = if eval(&seed) > slack {
        (seed.to_vec(), eval(&seed))
    } else {
        (point, slack)
    };
    let constraints = constraints_3_20(gamma, point[0], point[1], point[2], point[3]);
    let mut notes = vec![format!(
        "self-consistent q at the extremal r* is r*/(r*-1) = {:.4}; \
         a commonly quoted value 1.21 is inconsistent with 1/q + 1/r = 1 at r* = {:.3}",
        q_eq, r_star
    )];
    if !(slack > 0.0) {
        notes.push("infeasible: minimal violation reported in slack".into());
    }
    Ok(FeasibleTuple {
        gamma,
        s: None,
        p: None,
        r: Some(point[0]),
        q: Some(point[1]),
        kappa: Some(point[2]),
        delta: Some(point[3]),
        theta: None,
        beta: None,
        satisfied_constraints: constraints,
        slack,
        notes,
    })
}

/// Constraint system for the exponents `(p, q, θ, β, δ)`:
///
/// - `−γ(q−1) + 2β − 2/q > 0`
/// - `−γ(p−1) − δ + θ > 0`
/// - `1/p + 1/2 < 1`
/// - `1/p + β − δ + θ/2 ≤ 1`
/// - `θ, β ∈ [0, 1]`, `δ > 0`, `p, q > 1`
fn constraints_lemma39(
    gamma: f64,
    p: f64,
    q: f64,
    theta: f64,
    beta: f64,
    delta: f64,
) -> BTreeMap<String, f64> {
    let mut map = BTreeMap::new();
    map.insert(
        "regularity_-gamma(q-1)+2beta-2/q>0".into(),
        -gamma * (q - 1.0) + 2.0 * beta - 2.0 / q,
    );
    map.insert(
        "interpolation_-gamma(p-1)-delta+theta>0".into(),
        -gamma * (p - 1.0) - delta + theta,
    );
    map.insert("holder_1/p+1/2<1".into(), 0.5 - 1.0 / p);
    map.insert(
        "scaling_1/p+beta-delta+theta/2<=1".into(),
        1.0 - (1.0 / p + beta - delta + theta / 2.0),
    );
    map.insert("theta<=1".into(), 1.0 - theta);
    map.insert("theta>=0".into(), theta);
    map.insert("beta<=1".into(), 1.0 - beta);
    map.insert("beta>=0".into(), beta);
    map.insert("delta>0".into(), delta);
    map.insert("p>1".into(), p - 1.0);
    map.insert("q>1".into(), q - 1.0);
    map
}

/// Search the `(p, q, θ, β, δ)` system at `γ` for a maximal-slack interior
/// point. Feasible exactly for `γ < 3 − 2√2` (the analytic optimum sits at
/// `p = q = √(2/γ)`, `θ = β = 1`, `δ → 0`).
pub fn solve_system_lemma39(gamma: f64) -> Result<FeasibleTuple> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "solve_system_lemma39 requires gamma > 0, got {gamma}"
        )));
    }
    let dims = [
        (2.0 + 1e-6, 12.0), // p (Hölder forces p > 2)
        (1.0 + 1e-6, 12.0), // q
        (0.0, 1.0),         // theta
        (0.0, 1.0),         // beta
        // delta is an infinitesimal slack: crediting a sizeable delta in the
        // budget constraint would artificially widen the window, so its
        // search range stays near zero.
        (1e-6, 0.01),       // delta
    ];
    let eval = |v: &[f64]| margin_lemma39(gamma, v[0], v[1], v[2], v[3], v[4]);
    let (point, slack) = refine_search(&dims, &eval, 9, 6);
    // Analytic candidate: p = q = √(2/γ) at the box corner θ = β = 1.
    let p_opt = (2.0 / gamma).sqrt();
    let seed = [p_opt, p_opt, 1.0, 1.0, 1e-5];
    let (point, slack) = if eval(&seed) > slack {
        (seed.to_vec(), eval(&seed))
    } else {
        (point, slack)
    };
    let constraints = constraints_lemma39(gamma, point[0], point[1], point[2], point[3], point[4]);
    Ok(FeasibleTuple {
        gamma,
        s: None,
        p: Some(point[0]),
        r: None,
        q: Some(point[1]),
        kappa: None,
        delta: Some(point[4]),
        theta: Some(point[2]),
        beta: Some(point[3]),
        satisfied_constraints: constraints,
        slack,
        notes: if slack > 0.0 {
            vec![]
        } else {
            vec!["infeasible: minimal violation reported in slack".into()]
        },
    })
}

/// Bisect the feasibility boundary of [`solve_system_lemma39`] in `γ`.
pub fn lemma39_feasibility_boundary(tol: f64) -> Result<f64> {
    let mut lo = 0.01; // feasible
    let mut hi = 0.5; // infeasible
    if !solve_system_lemma39(lo)?.feasible() || solve_system_lemma39(hi)?.feasible() {
        return Err(Error::InvalidParameter(
            "bisection bracket invalid: expected feasible at 0.01, infeasible at 0.5".into(),
        ));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if solve_system_lemma39(mid)?.feasible() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Validated Besov/Lyapunov index set for a given coupling.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LyapunovIndices {
    pub gamma: f64,
    pub s: f64,
    pub p: f64,
    pub r: f64,
    /// Heat-characterization derivative order for the `+s`-side norms.
    pub k: u32,
    /// Splitting weight in the drift inequality.
    pub sigma: f64,
    /// Small slack exponent in the negative-smoothness norm of the
    /// interaction term.
    pub delta: f64,
}

/// Validate `(s, p, r)` against the admissibility windows and the heat-norm
/// representability conditions: `s ∈ (0, γ+2−√(8γ))`, `s·p > 2`,
/// `(k − s/2)p > 1`, `r ∈ r_interval(γ, s)`, `γ r < 2`.
pub fn validate_indices(idx: &LyapunovIndices) -> Result<()> {
    let (_, s_hi) = s_interval(idx.gamma)?;
    if !(idx.s > 0.0 && idx.s < s_hi) {
        return Err(Error::IndexViolation(format!(
            "s = {} outside (0, {s_hi:.4}) for gamma = {}",
            idx.s, idx.gamma
        )));
    }
    if !(idx.s * idx.p > 2.0) {
        return Err(Error::IndexViolation(format!(
            "need s*p > 2, got {}",
            idx.s * idx.p
        )));
    }
    if !((idx.k as f64 - idx.s / 2.0) * idx.p > 1.0) {
        return Err(Error::IndexViolation(format!(
            "heat representation needs (k - s/2)p > 1, got {}",
            (idx.k as f64 - idx.s / 2.0) * idx.p
        )));
    }
    match r_interval(idx.gamma, idx.s)? {
        Some((lo, hi)) if idx.r > lo && idx.r < hi => {}
        window => {
            return Err(Error::IndexViolation(format!(
                "r = {} outside admissible window {window:?} for (gamma, s) = ({}, {})",
                idx.r, idx.gamma, idx.s
            )));
        }
    }
    if !(idx.sigma > 0.0 && idx.sigma < 1.0) {
        return Err(Error::IndexViolation(format!(
            "sigma must lie in (0,1), got {}",
            idx.sigma
        )));
    }
    if !(idx.delta > 0.0) {
        return Err(Error::IndexViolation(format!(
            "delta must be positive, got {}",
            idx.delta
        )));
    }
    Ok(())
}

/// Default validated index choice: s at the window midpoint, p minimal even
/// integer with s·p > 2, r at the admissible-window center.
pub fn choose_indices(gamma: f64) -> Result<LyapunovIndices> {
    let (_, s_hi) = s_interval(gamma)?;
    if s_hi <= 0.0 {
        return Err(Error::IndexViolation(format!(
            "empty smoothness window at gamma = {gamma}"
        )));
    }
    let s = 0.55 * s_hi;
    let mut p = 2.0;
    while s * p <= 2.0 + 1e-9 {
        p += 2.0;
    }
    let (r_lo, r_hi) = r_interval(gamma, s)?.ok_or_else(|| {
        Error::IndexViolation(format!("empty integrability window at gamma = {gamma}, s = {s}"))
    })?;
    let r = 0.5 * (r_lo + r_hi);
    let mut k = 1u32;
    while (k as f64 - s / 2.0) * p <= 1.0 + 1e-9 {
        k += 1;
    }
    // A small σ downweights the Y-block of the dissipative pair: its norm
    // sits at positive smoothness and carries the interaction's magnitude,
    // while the matching 1/σ on the source side inflates the majorant.
    let idx = LyapunovIndices {
        gamma,
        s,
        p,
        r,
        k,
        sigma: 0.1,
        delta: 0.01,
    };
    validate_indices(&idx)?;
    Ok(idx)
}
