//! Closed-form proximity operators and projections.
//!
//! Every prox here solves `argmin_Y f(Y) + ||X - Y||_F^2 / (2 gamma)` for its
//! function `f`. Indicator projections are independent of `gamma`; norm
//! shrinkages scale their threshold with it. The dual steps of the splitting
//! iteration evaluate conjugate proxes through [`prox_conjugate`].

use ndarray::Array2;

use crate::error::{Result, RhuidrError};
use crate::linops::frobenius_norm;

/// Entrywise projection onto the nonnegative orthant.
pub fn prox_nonneg(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Entrywise soft threshold: `sign(x) * max(|x| - gamma, 0)`.
pub fn prox_l1(x: &Array2<f64>, gamma: f64) -> Array2<f64> {
    x.mapv(|v| v.signum() * (v.abs() - gamma).max(0.0))
}

/// Row-grouped shrinkage for the mixed l1,2 norm summed over rows.
///
/// Each row is scaled by `max(1 - gamma / ||row||_2, 0)`; a zero row (where
/// the formula is 0/0) maps to zero, which is the prox of a norm at the
/// origin.
pub fn prox_l12_rows(x: &Array2<f64>, gamma: f64) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = if norm > 0.0 {
            (1.0 - gamma / norm).max(0.0)
        } else {
            0.0
        };
        row.mapv_inplace(|v| v * scale);
    }
    out
}

/// Column-grouped shrinkage for the mixed l1,2 norm summed over columns.
pub fn prox_l12_cols(x: &Array2<f64>, gamma: f64) -> Array2<f64> {
    let mut out = x.clone();
    for mut col in out.columns_mut() {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = if norm > 0.0 {
            (1.0 - gamma / norm).max(0.0)
        } else {
            0.0
        };
        col.mapv_inplace(|v| v * scale);
    }
    out
}

/// Projection onto the Frobenius ball of radius `eps` centered at `center`.
///
/// `eps = 0` degenerates to the singleton `{center}`. Negative radii are
/// rejected when the enclosing problem is configured, not here.
pub fn project_fro_ball(x: &Array2<f64>, center: &Array2<f64>, eps: f64) -> Array2<f64> {
    let diff = x - center;
    let dist = frobenius_norm(&diff);
    if dist <= eps {
        x.clone()
    } else if dist == 0.0 {
        center.clone()
    } else {
        center + &(diff * (eps / dist))
    }
}

/// Euclidean projection onto the l1 ball of radius `eta` centered at zero.
///
/// Soft-thresholds every entry by the unique `theta >= 0` at which the result
/// has l1 norm `eta`. The threshold is located by an expected-linear-time
/// pivot search over the absolute values.
pub fn project_l1_ball(x: &Array2<f64>, eta: f64) -> Array2<f64> {
    debug_assert!(eta > 0.0, "l1-ball radius must be positive");
    let total: f64 = x.iter().map(|v| v.abs()).sum();
    if total <= eta {
        return x.clone();
    }
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    let theta = l1_ball_threshold(&mut mags, eta);
    prox_l1(x, theta)
}

/// Pivot search for the l1-ball threshold on the absolute values `mags`,
/// assuming `sum(mags) > eta > 0`.
///
/// Maintains the running sum and count of entries confirmed to lie above the
/// threshold; each round partitions the remaining slice around a pivot and
/// keeps the half that can still contain the threshold.
fn l1_ball_threshold(mags: &mut [f64], eta: f64) -> f64 {
    let mut confirmed_sum = 0.0;
    let mut confirmed_count = 0usize;
    let mut slice = &mut mags[..];
    while !slice.is_empty() {
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |a, b| b.partial_cmp(a).expect("finite magnitudes"));
        let pivot = slice[mid];
        let ge_sum: f64 = slice[..=mid].iter().sum();
        let ge_count = mid + 1;
        // Residual l1 mass at threshold = pivot, over confirmed + this round.
        let residual = (confirmed_sum + ge_sum) - (confirmed_count + ge_count) as f64 * pivot;
        if residual < eta {
            // theta < pivot: everything >= pivot is in the support.
            confirmed_sum += ge_sum;
            confirmed_count += ge_count;
            slice = &mut slice[mid + 1..];
        } else {
            // theta >= pivot: entries <= pivot contribute nothing.
            slice = &mut slice[..mid];
        }
    }
    debug_assert!(confirmed_count > 0);
    ((confirmed_sum - eta) / confirmed_count as f64).max(0.0)
}

/// Prox of the indicator of `{O}`: the zero matrix of the input's shape.
pub fn prox_zero_set(x: &Array2<f64>) -> Array2<f64> {
    Array2::zeros(x.dim())
}

/// Moreau-decomposition step used by every dual update:
/// `ztilde - gamma * prox_{g at scale 1/gamma}(ztilde / gamma)`.
///
/// `prox_of_g(input, scale)` must evaluate the prox of `g` with parameter
/// `scale`. The result equals the prox of the conjugate `g*` at parameter
/// `gamma`.
pub fn prox_conjugate(
    ztilde: &Array2<f64>,
    gamma: f64,
    prox_of_g: impl Fn(&Array2<f64>, f64) -> Array2<f64>,
) -> Result<Array2<f64>> {
    if !(gamma > 0.0) {
        return Err(RhuidrError::invalid(format!(
            "prox_conjugate needs gamma > 0, got {gamma}"
        )));
    }
    let scaled = ztilde / gamma;
    let inner = prox_of_g(&scaled, 1.0 / gamma);
    Ok(ztilde - &(inner * gamma))
}
