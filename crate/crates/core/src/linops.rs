//! Matrix-free linear operators with adjoints and certified norm bounds.
//!
//! Every operator used by the solver implements [`LinearMap`]: a forward map,
//! its adjoint (satisfying `<G(X), Y> = <X, G*(Y)>`), and an upper bound on
//! the operator norm that feeds the automatic stepsize rule. The difference
//! operators use a zero boundary (the final row/column/band of differences is
//! zero); the norm bounds below assume exactly that convention.
//!
//! Grid layout: matrix column `c * n1 + r` holds grid pixel `(r, c)`, so the
//! vertical neighbor of column `p` is `p + 1` and the horizontal neighbor is
//! `p + n1`.

use ndarray::Array2;

use crate::error::{Result, RhuidrError};
use crate::types::{Dims, EndmemberLibrary};

/// Relative inflation applied to numerically estimated norm bounds so that a
/// converged lower estimate is safe to use as an upper bound.
const SIGMA_INFLATION: f64 = 1e-6;

/// Fixed seed for the per-problem largest-singular-value estimate.
const SIGMA1_SEED: u64 = 1;

/// Frobenius inner product `<X, Y>`.
pub fn inner_product(x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| a * b).sum()
}

/// Frobenius norm.
pub fn frobenius_norm(x: &Array2<f64>) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn check_shape(x: &Array2<f64>, expected: (usize, usize), context: &'static str) -> Result<()> {
    if x.dim() != expected {
        return Err(RhuidrError::ShapeMismatch {
            context,
            expected,
            found: x.dim(),
        });
    }
    Ok(())
}

/// A linear operator between matrix spaces, with adjoint and norm bound.
pub trait LinearMap {
    fn in_shape(&self) -> (usize, usize);
    fn out_shape(&self) -> (usize, usize);
    fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>>;
    fn adjoint(&self, y: &Array2<f64>) -> Result<Array2<f64>>;
    /// Certified upper bound on the operator norm.
    fn norm_bound(&self) -> f64;
    /// Squared norm bound; overridden where the square has an exact value.
    fn norm_bound_sq(&self) -> f64 {
        self.norm_bound() * self.norm_bound()
    }
}

// ---------------------------------------------------------------------------
// Difference kernels
// ---------------------------------------------------------------------------

fn diff_v_kernel(x: &Array2<f64>, n1: usize, n2: usize) -> Array2<f64> {
    let rows = x.nrows();
    let mut out = Array2::zeros((rows, n1 * n2));
    for k in 0..rows {
        let xr = x.row(k);
        let mut or = out.row_mut(k);
        for c in 0..n2 {
            let base = c * n1;
            for r in 0..n1.saturating_sub(1) {
                or[base + r] = xr[base + r + 1] - xr[base + r];
            }
        }
    }
    out
}

fn adjoint_diff_v_kernel(y: &Array2<f64>, n1: usize, n2: usize) -> Array2<f64> {
    let rows = y.nrows();
    let mut out = Array2::zeros((rows, n1 * n2));
    for k in 0..rows {
        let yr = y.row(k);
        let mut or = out.row_mut(k);
        for c in 0..n2 {
            let base = c * n1;
            for r in 0..n1 {
                let mut v = 0.0;
                if r >= 1 {
                    v += yr[base + r - 1];
                }
                if r + 1 < n1 {
                    v -= yr[base + r];
                }
                or[base + r] = v;
            }
        }
    }
    out
}

fn diff_h_kernel(x: &Array2<f64>, n1: usize, n2: usize) -> Array2<f64> {
    let rows = x.nrows();
    let mut out = Array2::zeros((rows, n1 * n2));
    for k in 0..rows {
        let xr = x.row(k);
        let mut or = out.row_mut(k);
        for c in 0..n2.saturating_sub(1) {
            let base = c * n1;
            for r in 0..n1 {
                or[base + r] = xr[base + n1 + r] - xr[base + r];
            }
        }
    }
    out
}

fn adjoint_diff_h_kernel(y: &Array2<f64>, n1: usize, n2: usize) -> Array2<f64> {
    let rows = y.nrows();
    let mut out = Array2::zeros((rows, n1 * n2));
    for k in 0..rows {
        let yr = y.row(k);
        let mut or = out.row_mut(k);
        for c in 0..n2 {
            let base = c * n1;
            for r in 0..n1 {
                let mut v = 0.0;
                if c >= 1 {
                    v += yr[base - n1 + r];
                }
                if c + 1 < n2 {
                    v -= yr[base + r];
                }
                or[base + r] = v;
            }
        }
    }
    out
}

fn diff_b_kernel(x: &Array2<f64>) -> Array2<f64> {
    let (rows, n) = x.dim();
    let mut out = Array2::zeros((rows, n));
    for k in 0..rows.saturating_sub(1) {
        for p in 0..n {
            out[[k, p]] = x[[k + 1, p]] - x[[k, p]];
        }
    }
    out
}

fn adjoint_diff_b_kernel(y: &Array2<f64>) -> Array2<f64> {
    let (rows, n) = y.dim();
    let mut out = Array2::zeros((rows, n));
    for k in 0..rows {
        for p in 0..n {
            let mut v = 0.0;
            if k >= 1 {
                v += y[[k - 1, p]];
            }
            if k + 1 < rows {
                v -= y[[k, p]];
            }
            out[[k, p]] = v;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Spec-surface free functions
// ---------------------------------------------------------------------------

fn check_grid(x: &Array2<f64>, dims: &Dims, context: &'static str) -> Result<()> {
    if x.ncols() != dims.n() {
        return Err(RhuidrError::ShapeMismatch {
            context,
            expected: (x.nrows(), dims.n()),
            found: x.dim(),
        });
    }
    Ok(())
}

/// Vertical difference with zero boundary at the last grid row.
pub fn diff_v(x: &Array2<f64>, dims: &Dims) -> Result<Array2<f64>> {
    check_grid(x, dims, "diff_v")?;
    Ok(diff_v_kernel(x, dims.n1, dims.n2))
}

/// Horizontal difference with zero boundary at the last grid column.
pub fn diff_h(x: &Array2<f64>, dims: &Dims) -> Result<Array2<f64>> {
    check_grid(x, dims, "diff_h")?;
    Ok(diff_h_kernel(x, dims.n1, dims.n2))
}

/// Spectral (band) difference with zero boundary at the last band.
pub fn diff_b(x: &Array2<f64>, dims: &Dims) -> Result<Array2<f64>> {
    check_grid(x, dims, "diff_b")?;
    Ok(diff_b_kernel(x))
}

/// Adjoint of [`diff_v`].
pub fn adjoint_diff_v(y: &Array2<f64>, dims: &Dims) -> Result<Array2<f64>> {
    check_grid(y, dims, "adjoint_diff_v")?;
    Ok(adjoint_diff_v_kernel(y, dims.n1, dims.n2))
}

/// Adjoint of [`diff_h`].
pub fn adjoint_diff_h(y: &Array2<f64>, dims: &Dims) -> Result<Array2<f64>> {
    check_grid(y, dims, "adjoint_diff_h")?;
    Ok(adjoint_diff_h_kernel(y, dims.n1, dims.n2))
}

/// Adjoint of [`diff_b`].
pub fn adjoint_diff_b(y: &Array2<f64>, dims: &Dims) -> Result<Array2<f64>> {
    check_grid(y, dims, "adjoint_diff_b")?;
    Ok(adjoint_diff_b_kernel(y))
}

/// Stacked spatial difference `[diff_v; diff_h]`, `rows x n -> 2rows x n`.
pub fn spatial_diff(x: &Array2<f64>, dims: &Dims) -> Result<Array2<f64>> {
    check_grid(x, dims, "spatial_diff")?;
    Ok(spatial_diff_kernel(x, dims.n1, dims.n2))
}

/// Adjoint of [`spatial_diff`]: sum of per-block adjoints.
pub fn adjoint_spatial_diff(y: &Array2<f64>, dims: &Dims) -> Result<Array2<f64>> {
    if y.nrows() % 2 != 0 {
        return Err(RhuidrError::invalid(
            "adjoint_spatial_diff input must have an even row count",
        ));
    }
    check_grid(y, dims, "adjoint_spatial_diff")?;
    Ok(adjoint_spatial_diff_kernel(y, dims.n1, dims.n2))
}

fn spatial_diff_kernel(x: &Array2<f64>, n1: usize, n2: usize) -> Array2<f64> {
    let rows = x.nrows();
    let n = n1 * n2;
    let mut out = Array2::zeros((2 * rows, n));
    out.slice_mut(ndarray::s![..rows, ..])
        .assign(&diff_v_kernel(x, n1, n2));
    out.slice_mut(ndarray::s![rows.., ..])
        .assign(&diff_h_kernel(x, n1, n2));
    out
}

fn adjoint_spatial_diff_kernel(y: &Array2<f64>, n1: usize, n2: usize) -> Array2<f64> {
    let rows = y.nrows() / 2;
    let top = y.slice(ndarray::s![..rows, ..]).to_owned();
    let bot = y.slice(ndarray::s![rows.., ..]).to_owned();
    adjoint_diff_v_kernel(&top, n1, n2) + adjoint_diff_h_kernel(&bot, n1, n2)
}

/// The combined spatio-spectral/spatial difference stack
/// `[spatial_diff(diff_b(X)); omega * spatial_diff(X)]`, `rows x n -> 4rows x n`.
pub fn hsstv_op(x: &Array2<f64>, dims: &Dims, omega: f64) -> Result<Array2<f64>> {
    check_grid(x, dims, "hsstv_op")?;
    if omega < 0.0 || !omega.is_finite() {
        return Err(RhuidrError::invalid(format!(
            "hsstv omega must be finite and nonnegative, got {omega}"
        )));
    }
    Ok(hsstv_kernel(x, dims.n1, dims.n2, omega))
}

fn hsstv_kernel(x: &Array2<f64>, n1: usize, n2: usize, omega: f64) -> Array2<f64> {
    let rows = x.nrows();
    let n = n1 * n2;
    let mut out = Array2::zeros((4 * rows, n));
    let band = diff_b_kernel(x);
    out.slice_mut(ndarray::s![..2 * rows, ..])
        .assign(&spatial_diff_kernel(&band, n1, n2));
    let mut lower = spatial_diff_kernel(x, n1, n2);
    lower.mapv_inplace(|v| omega * v);
    out.slice_mut(ndarray::s![2 * rows.., ..]).assign(&lower);
    out
}

fn adjoint_hsstv_kernel(y: &Array2<f64>, n1: usize, n2: usize, omega: f64) -> Array2<f64> {
    let rows = y.nrows() / 4;
    let top = y.slice(ndarray::s![..2 * rows, ..]).to_owned();
    let bot = y.slice(ndarray::s![2 * rows.., ..]).to_owned();
    let from_top = adjoint_diff_b_kernel(&adjoint_spatial_diff_kernel(&top, n1, n2));
    let mut from_bot = adjoint_spatial_diff_kernel(&bot, n1, n2);
    from_bot.mapv_inplace(|v| omega * v);
    from_top + from_bot
}

// ---------------------------------------------------------------------------
// LinearMap implementations
// ---------------------------------------------------------------------------

macro_rules! grid_op {
    ($name:ident, $fwd:path, $adj:path, $bound:expr, $bound_sq:expr, $out_factor:expr) => {
        #[derive(Debug, Clone)]
        pub struct $name {
            rows: usize,
            n1: usize,
            n2: usize,
        }

        impl $name {
            pub fn new(rows: usize, n1: usize, n2: usize) -> Self {
                Self { rows, n1, n2 }
            }
        }

        impl LinearMap for $name {
            fn in_shape(&self) -> (usize, usize) {
                (self.rows, self.n1 * self.n2)
            }
            fn out_shape(&self) -> (usize, usize) {
                ($out_factor * self.rows, self.n1 * self.n2)
            }
            fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
                check_shape(x, self.in_shape(), stringify!($name))?;
                Ok($fwd(x, self.n1, self.n2))
            }
            fn adjoint(&self, y: &Array2<f64>) -> Result<Array2<f64>> {
                check_shape(y, self.out_shape(), stringify!($name))?;
                Ok($adj(y, self.n1, self.n2))
            }
            fn norm_bound(&self) -> f64 {
                $bound
            }
            fn norm_bound_sq(&self) -> f64 {
                $bound_sq
            }
        }
    };
}

grid_op!(
    VerticalDiff,
    diff_v_kernel,
    adjoint_diff_v_kernel,
    2.0,
    4.0,
    1
);
grid_op!(
    HorizontalDiff,
    diff_h_kernel,
    adjoint_diff_h_kernel,
    2.0,
    4.0,
    1
);
grid_op!(
    SpatialDiff,
    spatial_diff_kernel,
    adjoint_spatial_diff_kernel,
    2.0 * std::f64::consts::SQRT_2,
    8.0,
    2
);

/// Band (spectral) difference as a [`LinearMap`].
#[derive(Debug, Clone)]
pub struct BandDiff {
    rows: usize,
    cols: usize,
}

impl BandDiff {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }
}

impl LinearMap for BandDiff {
    fn in_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
    fn out_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
    fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        check_shape(x, self.in_shape(), "BandDiff")?;
        Ok(diff_b_kernel(x))
    }
    fn adjoint(&self, y: &Array2<f64>) -> Result<Array2<f64>> {
        check_shape(y, self.out_shape(), "BandDiff")?;
        Ok(adjoint_diff_b_kernel(y))
    }
    fn norm_bound(&self) -> f64 {
        2.0
    }
    fn norm_bound_sq(&self) -> f64 {
        4.0
    }
}

/// The combined difference stack as a [`LinearMap`].
#[derive(Debug, Clone)]
pub struct HsstvOp {
    rows: usize,
    n1: usize,
    n2: usize,
    omega: f64,
}

impl HsstvOp {
    pub fn new(rows: usize, n1: usize, n2: usize, omega: f64) -> Self {
        Self {
            rows,
            n1,
            n2,
            omega,
        }
    }
}

impl LinearMap for HsstvOp {
    fn in_shape(&self) -> (usize, usize) {
        (self.rows, self.n1 * self.n2)
    }
    fn out_shape(&self) -> (usize, usize) {
        (4 * self.rows, self.n1 * self.n2)
    }
    fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        check_shape(x, self.in_shape(), "HsstvOp")?;
        Ok(hsstv_kernel(x, self.n1, self.n2, self.omega))
    }
    fn adjoint(&self, y: &Array2<f64>) -> Result<Array2<f64>> {
        check_shape(y, self.out_shape(), "HsstvOp")?;
        Ok(adjoint_hsstv_kernel(y, self.n1, self.n2, self.omega))
    }
    fn norm_bound(&self) -> f64 {
        self.norm_bound_sq().sqrt()
    }
    fn norm_bound_sq(&self) -> f64 {
        32.0 + 8.0 * self.omega * self.omega
    }
}

/// Identity on a fixed shape.
#[derive(Debug, Clone)]
pub struct IdentityMap {
    shape: (usize, usize),
}

impl IdentityMap {
    pub fn new(shape: (usize, usize)) -> Self {
        Self { shape }
    }
}

impl LinearMap for IdentityMap {
    fn in_shape(&self) -> (usize, usize) {
        self.shape
    }
    fn out_shape(&self) -> (usize, usize) {
        self.shape
    }
    fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        check_shape(x, self.shape, "IdentityMap")?;
        Ok(x.clone())
    }
    fn adjoint(&self, y: &Array2<f64>) -> Result<Array2<f64>> {
        check_shape(y, self.shape, "IdentityMap")?;
        Ok(y.clone())
    }
    fn norm_bound(&self) -> f64 {
        1.0
    }
    fn norm_bound_sq(&self) -> f64 {
        1.0
    }
}

/// Entrywise scaling by a constant (`factor = 0` gives the zero operator).
#[derive(Debug, Clone)]
pub struct ScaleMap {
    shape: (usize, usize),
    factor: f64,
}

impl ScaleMap {
    pub fn new(shape: (usize, usize), factor: f64) -> Self {
        Self { shape, factor }
    }
}

impl LinearMap for ScaleMap {
    fn in_shape(&self) -> (usize, usize) {
        self.shape
    }
    fn out_shape(&self) -> (usize, usize) {
        self.shape
    }
    fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        check_shape(x, self.shape, "ScaleMap")?;
        Ok(x * self.factor)
    }
    fn adjoint(&self, y: &Array2<f64>) -> Result<Array2<f64>> {
        check_shape(y, self.shape, "ScaleMap")?;
        Ok(y * self.factor)
    }
    fn norm_bound(&self) -> f64 {
        self.factor.abs()
    }
}

/// Composition `outer . inner` with the product norm bound.
pub struct ChainMap {
    outer: Box<dyn LinearMap>,
    inner: Box<dyn LinearMap>,
}

impl ChainMap {
    pub fn new(outer: Box<dyn LinearMap>, inner: Box<dyn LinearMap>) -> Result<Self> {
        if inner.out_shape() != outer.in_shape() {
            return Err(RhuidrError::ShapeMismatch {
                context: "ChainMap::new",
                expected: outer.in_shape(),
                found: inner.out_shape(),
            });
        }
        Ok(Self { outer, inner })
    }
}

impl LinearMap for ChainMap {
    fn in_shape(&self) -> (usize, usize) {
        self.inner.in_shape()
    }
    fn out_shape(&self) -> (usize, usize) {
        self.outer.out_shape()
    }
    fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.outer.forward(&self.inner.forward(x)?)
    }
    fn adjoint(&self, y: &Array2<f64>) -> Result<Array2<f64>> {
        self.inner.adjoint(&self.outer.adjoint(y)?)
    }
    fn norm_bound(&self) -> f64 {
        self.outer.norm_bound() * self.inner.norm_bound()
    }
    fn norm_bound_sq(&self) -> f64 {
        self.outer.norm_bound_sq() * self.inner.norm_bound_sq()
    }
}

/// Left-multiplication by the endmember library: `A -> E * A`.
#[derive(Debug, Clone)]
pub struct LibraryMul {
    e: Array2<f64>,
    cols: usize,
    sigma1: f64,
}

impl LibraryMul {
    pub fn new(e: &EndmemberLibrary, cols: usize) -> Self {
        Self {
            e: e.data().clone(),
            cols,
            sigma1: sigma1_upper_bound(e),
        }
    }
}

impl LinearMap for LibraryMul {
    fn in_shape(&self) -> (usize, usize) {
        (self.e.ncols(), self.cols)
    }
    fn out_shape(&self) -> (usize, usize) {
        (self.e.nrows(), self.cols)
    }
    fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        check_shape(x, self.in_shape(), "LibraryMul")?;
        Ok(self.e.dot(x))
    }
    fn adjoint(&self, y: &Array2<f64>) -> Result<Array2<f64>> {
        check_shape(y, self.out_shape(), "LibraryMul")?;
        Ok(self.e.t().dot(y))
    }
    fn norm_bound(&self) -> f64 {
        self.sigma1
    }
}

/// Composite `A -> K(E * A)` with adjoint `Z -> E^T * K*(Z)`.
pub struct LibraryCompose {
    k: Box<dyn LinearMap>,
    e: Array2<f64>,
    sigma1: f64,
}

/// Builds the composite of an image-domain operator `K` with the library
/// mixing map. Fails if `K`'s input band count differs from the library's.
pub fn compose_with_library(
    k: Box<dyn LinearMap>,
    e: &EndmemberLibrary,
) -> Result<LibraryCompose> {
    if k.in_shape().0 != e.bands() {
        return Err(RhuidrError::ShapeMismatch {
            context: "compose_with_library",
            expected: (e.bands(), k.in_shape().1),
            found: k.in_shape(),
        });
    }
    Ok(LibraryCompose {
        k,
        e: e.data().clone(),
        sigma1: sigma1_upper_bound(e),
    })
}

impl LinearMap for LibraryCompose {
    fn in_shape(&self) -> (usize, usize) {
        (self.e.ncols(), self.k.in_shape().1)
    }
    fn out_shape(&self) -> (usize, usize) {
        self.k.out_shape()
    }
    fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        check_shape(x, self.in_shape(), "LibraryCompose")?;
        self.k.forward(&self.e.dot(x))
    }
    fn adjoint(&self, y: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.e.t().dot(&self.k.adjoint(y)?))
    }
    fn norm_bound(&self) -> f64 {
        self.k.norm_bound() * self.sigma1
    }
    fn norm_bound_sq(&self) -> f64 {
        self.k.norm_bound_sq() * self.sigma1 * self.sigma1
    }
}

// ---------------------------------------------------------------------------
// Norm estimation
// ---------------------------------------------------------------------------

/// Upper bound on the largest singular value of the library matrix.
///
/// Power iteration on `E^T E` with a fixed seed, run for 1000 iterations or
/// until the eigenvalue estimate changes by less than 1e-12 relative,
/// whichever comes first. The converged lower estimate is inflated by 1e-6
/// so it can serve as a certified upper bound in the stepsize rule.
pub fn sigma1_upper_bound(e: &EndmemberLibrary) -> f64 {
    use rand::Rng;
    use rand::SeedableRng;
    let mat = e.data();
    let m = mat.ncols();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(SIGMA1_SEED);
    let mut v: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    normalize(&mut v);
    let mut lambda = 0.0;
    for _ in 0..1000 {
        // w = E^T (E v)
        let ev: Vec<f64> = (0..mat.nrows())
            .map(|i| (0..m).map(|j| mat[[i, j]] * v[j]).sum())
            .collect();
        let w: Vec<f64> = (0..m)
            .map(|j| (0..mat.nrows()).map(|i| mat[[i, j]] * ev[i]).sum())
            .collect();
        let new_lambda: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let norm_w = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm_w == 0.0 {
            return 0.0;
        }
        v = w;
        normalize(&mut v);
        if (new_lambda - lambda).abs() <= 1e-12 * new_lambda.abs() {
            lambda = new_lambda;
            break;
        }
        lambda = new_lambda;
    }
    lambda.max(0.0).sqrt() * (1.0 + SIGMA_INFLATION)
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

/// Deterministic power-iteration estimate of the operator norm of `g`.
///
/// Returns a lower estimate that is nondecreasing in `iters`; the zero
/// operator yields 0.
pub fn power_iteration_norm(g: &dyn LinearMap, iters: usize, seed: u64) -> Result<f64> {
    use rand::Rng;
    use rand::SeedableRng;
    if iters == 0 {
        return Err(RhuidrError::invalid("power iteration needs iters >= 1"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::from_shape_fn(g.in_shape(), |_| rng.random_range(-1.0..1.0));
    let nx = frobenius_norm(&x);
    if nx == 0.0 {
        return Ok(0.0);
    }
    x.mapv_inplace(|v| v / nx);
    let mut estimate = 0.0;
    for _ in 0..iters {
        let y = g.forward(&x)?;
        estimate = frobenius_norm(&y);
        if estimate == 0.0 {
            return Ok(0.0);
        }
        let mut w = g.adjoint(&y)?;
        let nw = frobenius_norm(&w);
        if nw == 0.0 {
            return Ok(estimate);
        }
        w.mapv_inplace(|v| v / nw);
        x = w;
    }
    Ok(estimate)
}
