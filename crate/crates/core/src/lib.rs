//! Robust hyperspectral unmixing under mixed noise.
//!
//! Decomposes an observed hyperspectral image into per-pixel endmember
//! abundances, a sparse noise component, and a vertically flat stripe
//! component by solving a constrained convex program: row-sparse and
//! piecewise-smooth abundance regularization, an optional total-variation
//! regularizer on the reconstructed image, a Frobenius-ball data-fidelity
//! constraint, an l1-ball sparse-noise constraint, and an exact flatness
//! constraint on the stripe component. The program is solved by a
//! preconditioned primal-dual splitting iteration whose stepsizes are derived
//! automatically from certified operator-norm bounds.
//!
//! Modules:
//! - [`types`]: cubes, libraries, abundances, and the pixel layout contract.
//! - [`linops`]: matrix-free difference operators with adjoints and bounds.
//! - [`prox`]: proximity operators and ball projections.
//! - [`solver`]: the generic block primal-dual engine.
//! - [`unmix`]: problem assembly, the end-to-end solve, and diagnostics.
//! - [`simulate`]: seeded scene generation and the mixed-noise cases.
//! - [`metrics`]: SRE, RMSE, Ps, MPSNR, MSSIM, and SAD.
//! - [`io`]: cube/CSV/PGM formats and the reproducible run manifest.

pub mod error;
pub mod io;
pub mod linops;
pub mod metrics;
pub mod prox;
pub mod simulate;
pub mod solver;
pub mod types;
pub mod unmix;

pub use error::{Result, RhuidrError};
