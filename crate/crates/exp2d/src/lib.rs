//! Spectral simulator and verification suite for a two-dimensional stochastic
//! field dynamics with exponential nonlinearity.
//!
//! The model couples an Ornstein–Uhlenbeck free field `X` (a Gaussian free
//! field in its stationary law) with a remainder field `Y ≤ 0` driven by a
//! renormalized exponential nonlinearity. All operators are realized
//! spectrally on a square torus `(−πM, πM]²` discretized by an `n × n` grid.
//!
//! Conventions (fixed once, verified by tests):
//!
//! - Fourier series `f(x) = Σ_j f̂_j e^{i j·x / M}` with `j ∈ [−n/2, n/2)²`;
//!   the discrete transform is `f̂_j = (1/n²) Σ_k f_k e^{−2πi j·k/n}`.
//! - Parseval: `∫ |f|² dx = (2πM)² Σ_j |f̂_j|²`; the L² pairing is grid
//!   quadrature `⟨f, g⟩ = h² Σ_k f_k g_k` with `h = 2πM/n`.
//! - Convolution with an integral-one kernel `g` acts as the Fourier
//!   multiplier `(2πM)² ĝ_j`, which equals 1 at `j = 0` so constants are
//!   preserved.
//! - The free field has per-mode variance `(2πM)^{−2} / (|j/M|² + m²)`,
//!   zero mode included (the mass is strictly positive).

pub mod besov;
pub mod dynamics;
pub mod error;
pub mod fields;
pub mod functionals;
pub mod gff;
pub mod io;
pub mod params;
pub mod resolvent;
pub mod stats;
pub mod wick;

pub use error::{Error, Result};
