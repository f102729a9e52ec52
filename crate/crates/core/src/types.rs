//! Matrix-shaped domain objects and the pixel linearization contract.
//!
//! A hyperspectral image over an `n1 x n2` grid with `l` bands is stored as an
//! `l x n` matrix (`n = n1 * n2`). Pixel `(r, c)` (0-based row/column on the
//! grid) lives in matrix column `c * n1 + r`, so vertically adjacent pixels
//! occupy adjacent columns. This layout is part of the public contract: the
//! vertical difference operator and the stripe-flatness constraint are
//! stride-1 under it.

use ndarray::Array2;

use crate::error::{Result, RhuidrError};

/// Problem dimensions: grid size, band count, and library size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    /// Grid rows (pixels).
    pub n1: usize,
    /// Grid columns (pixels).
    pub n2: usize,
    /// Spectral bands.
    pub l: usize,
    /// Endmember library size.
    pub m: usize,
}

impl Dims {
    /// Validates that every field is strictly positive.
    pub fn new(n1: usize, n2: usize, l: usize, m: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 || l == 0 || m == 0 {
            return Err(RhuidrError::invalid(format!(
                "dims must be strictly positive, got n1={n1}, n2={n2}, l={l}, m={m}"
            )));
        }
        n1.checked_mul(n2)
            .ok_or_else(|| RhuidrError::invalid("n1 * n2 overflows"))?;
        Ok(Dims { n1, n2, l, m })
    }

    /// Dimensions for a cube not tied to any library (`m = 1`).
    pub fn cube(n1: usize, n2: usize, l: usize) -> Result<Self> {
        Dims::new(n1, n2, l, 1)
    }

    /// Total pixel count `n = n1 * n2`.
    pub fn n(&self) -> usize {
        self.n1 * self.n2
    }
}

/// Column index of grid pixel `(r, c)` under the fixed linearization.
pub fn pixel_index(r: usize, c: usize, dims: &Dims) -> Result<usize> {
    if r >= dims.n1 || c >= dims.n2 {
        return Err(RhuidrError::PixelOutOfRange {
            row: r,
            col: c,
            n1: dims.n1,
            n2: dims.n2,
        });
    }
    Ok(c * dims.n1 + r)
}

/// Inverse of [`pixel_index`]: grid coordinates of matrix column `p`.
pub fn pixel_coords(p: usize, dims: &Dims) -> Result<(usize, usize)> {
    if p >= dims.n() {
        return Err(RhuidrError::PixelOutOfRange {
            row: p,
            col: 0,
            n1: dims.n1,
            n2: dims.n2,
        });
    }
    Ok((p % dims.n1, p / dims.n1))
}

/// Returns the position of the first non-finite entry, if any.
pub(crate) fn first_non_finite(data: &Array2<f64>) -> Option<(usize, usize)> {
    for ((i, j), v) in data.indexed_iter() {
        if !v.is_finite() {
            return Some((i, j));
        }
    }
    None
}

/// A hyperspectral cube stored as an `l x n` matrix under the fixed layout.
///
/// Intensities are unitless reflectance, nominally in `[0, 1]` for clean data
/// and deliberately unclamped after degradation.
#[derive(Debug, Clone, PartialEq)]
pub struct HSCube {
    dims: Dims,
    data: Array2<f64>,
}

impl HSCube {
    /// Wraps a matrix as a cube, validating the shape and rejecting
    /// non-finite entries. Never reshapes.
    pub fn from_matrix(data: Array2<f64>, dims: Dims) -> Result<Self> {
        let expected = (dims.l, dims.n());
        if data.dim() != expected {
            return Err(RhuidrError::ShapeMismatch {
                context: "HSCube::from_matrix",
                expected,
                found: data.dim(),
            });
        }
        if let Some((row, col)) = first_non_finite(&data) {
            return Err(RhuidrError::NonFinite {
                context: "HSCube::from_matrix",
                row,
                col,
            });
        }
        Ok(HSCube { dims, data })
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    /// Value of band `k` at grid pixel `(r, c)`.
    pub fn at(&self, k: usize, r: usize, c: usize) -> Result<f64> {
        let p = pixel_index(r, c, &self.dims)?;
        Ok(self.data[[k, p]])
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.data
    }
}

/// Library of candidate endmember spectra, one column per material.
#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberLibrary {
    data: Array2<f64>,
    names: Option<Vec<String>>,
}

impl EndmemberLibrary {
    /// Validates the `l x m` matrix: entries finite and nonnegative, and no
    /// all-zero column.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(RhuidrError::invalid("endmember library must be non-empty"));
        }
        if let Some((row, col)) = first_non_finite(&data) {
            return Err(RhuidrError::NonFinite {
                context: "EndmemberLibrary::new",
                row,
                col,
            });
        }
        for ((i, j), v) in data.indexed_iter() {
            if *v < 0.0 {
                return Err(RhuidrError::invalid(format!(
                    "endmember entry ({i}, {j}) is negative: {v}"
                )));
            }
        }
        for j in 0..data.ncols() {
            if data.column(j).iter().all(|v| *v == 0.0) {
                return Err(RhuidrError::invalid(format!(
                    "endmember column {j} is all zero"
                )));
            }
        }
        Ok(EndmemberLibrary { data, names: None })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.data.ncols() {
            return Err(RhuidrError::invalid(format!(
                "expected {} names, got {}",
                self.data.ncols(),
                names.len()
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Band count `l`.
    pub fn bands(&self) -> usize {
        self.data.nrows()
    }

    /// Library size `m`.
    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }
}

/// Per-pixel endmember fractions, one row per library entry.
///
/// Entries are nonnegative after solver convergence; intermediate solver
/// state may hold transiently unconstrained values internally.
#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceMatrix {
    data: Array2<f64>,
}

impl AbundanceMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if let Some((row, col)) = first_non_finite(&data) {
            return Err(RhuidrError::NonFinite {
                context: "AbundanceMatrix::new",
                row,
                col,
            });
        }
        Ok(AbundanceMatrix { data })
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.data
    }
}

/// The separated sparse and stripe noise components of an observation.
///
/// The Gaussian residual is implicit in the data-fidelity ball and is not
/// stored.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTriple {
    /// Sparse (impulsive) component, `l x n`.
    pub sparse: Array2<f64>,
    /// Stripe component, `l x n`, vertically flat at convergence.
    pub stripe: Array2<f64>,
}
