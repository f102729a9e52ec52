//! Evaluation functionals for abundances and reconstructed images.
//!
//! Abundance quality: SRE (dB), RMSE, and the per-pixel success rate Ps.
//! Reconstruction quality: MPSNR (peak fixed at 1, per-band values capped at
//! 300 dB so means stay finite) and MSSIM (11x11 Gaussian window, sigma 1.5,
//! stabilizers (0.01 R)^2 and (0.03 R)^2 with dynamic range R = 1).

use ndarray::Array2;

use crate::error::{Result, RhuidrError};
use crate::linops::frobenius_norm;
use crate::types::HSCube;

/// Per-band PSNR cap standing in for infinite values on exact matches.
pub const PSNR_CAP_DB: f64 = 300.0;

/// Default squared-relative-error threshold for [`ps`].
pub const PS_THRESHOLD: f64 = 3.16;

/// Collected metric values; fields are present when their inputs were.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub sre_db: Option<f64>,
    pub rmse: Option<f64>,
    pub ps: Option<f64>,
    pub mpsnr_db: Option<f64>,
    pub mssim: Option<f64>,
}

impl MetricReport {
    /// Single-line `key=value` record, skipping absent fields.
    pub fn to_kv_line(&self) -> String {
        let mut parts = Vec::new();
        if let Some(v) = self.sre_db {
            parts.push(format!("sre_db={v}"));
        }
        if let Some(v) = self.rmse {
            parts.push(format!("rmse={v}"));
        }
        if let Some(v) = self.ps {
            parts.push(format!("ps={v}"));
        }
        if let Some(v) = self.mpsnr_db {
            parts.push(format!("mpsnr_db={v}"));
        }
        if let Some(v) = self.mssim {
            parts.push(format!("mssim={v}"));
        }
        parts.join(" ")
    }
}

fn check_same_shape(a: &Array2<f64>, b: &Array2<f64>, context: &'static str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(RhuidrError::ShapeMismatch {
            context,
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

/// Signal reconstruction error in dB:
/// `10 log10(||A_true||_F^2 / ||A_true - A_est||_F^2)`.
///
/// A zero reference is rejected; a zero error reports positive infinity.
pub fn sre(a_true: &Array2<f64>, a_est: &Array2<f64>) -> Result<f64> {
    check_same_shape(a_true, a_est, "sre")?;
    let signal = frobenius_norm(a_true);
    if signal == 0.0 {
        return Err(RhuidrError::invalid("sre is undefined for a zero reference"));
    }
    let err = frobenius_norm(&(a_true - a_est));
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * ((signal * signal) / (err * err)).log10())
}

/// Root-mean-square error over all entries.
pub fn rmse(a_true: &Array2<f64>, a_est: &Array2<f64>) -> Result<f64> {
    check_same_shape(a_true, a_est, "rmse")?;
    let err = frobenius_norm(&(a_true - a_est));
    let count = (a_true.nrows() * a_true.ncols()) as f64;
    Ok((err * err / count).sqrt())
}

/// Fraction of pixels whose squared relative abundance error is at most
/// `threshold`. Pixels with a zero true abundance vector carry no relative
/// error and are excluded from both the count and the denominator.
pub fn ps(a_true: &Array2<f64>, a_est: &Array2<f64>, threshold: f64) -> Result<f64> {
    check_same_shape(a_true, a_est, "ps")?;
    if threshold < 0.0 {
        return Err(RhuidrError::invalid("ps threshold must be nonnegative"));
    }
    let mut counted = 0usize;
    let mut success = 0usize;
    for p in 0..a_true.ncols() {
        let truth = a_true.column(p);
        let est = a_est.column(p);
        let norm_sq: f64 = truth.iter().map(|v| v * v).sum();
        if norm_sq == 0.0 {
            continue;
        }
        let err_sq: f64 = truth
            .iter()
            .zip(est.iter())
            .map(|(t, e)| (t - e) * (t - e))
            .sum();
        counted += 1;
        if err_sq / norm_sq <= threshold {
            success += 1;
        }
    }
    if counted == 0 {
        return Err(RhuidrError::invalid(
            "ps is undefined when every true pixel is zero",
        ));
    }
    Ok(success as f64 / counted as f64)
}

/// Mean over bands of `10 log10(n / ||err_band||_F^2)` (peak value 1), with
/// each band capped at [`PSNR_CAP_DB`].
pub fn mpsnr(h_true: &HSCube, h_est: &HSCube) -> Result<f64> {
    if h_true.dims() != h_est.dims() {
        return Err(RhuidrError::ShapeMismatch {
            context: "mpsnr",
            expected: h_true.data().dim(),
            found: h_est.data().dim(),
        });
    }
    let n = h_true.dims().n() as f64;
    let l = h_true.dims().l;
    let mut total = 0.0;
    for band in 0..l {
        let err_sq: f64 = h_true
            .data()
            .row(band)
            .iter()
            .zip(h_est.data().row(band).iter())
            .map(|(t, e)| (t - e) * (t - e))
            .sum();
        let psnr = if err_sq == 0.0 {
            PSNR_CAP_DB
        } else {
            (10.0 * (n / err_sq).log10()).min(PSNR_CAP_DB)
        };
        total += psnr;
    }
    Ok(total / l as f64)
}

/// Mean single-band SSIM over all bands.
pub fn mssim(h_true: &HSCube, h_est: &HSCube) -> Result<f64> {
    if h_true.dims() != h_est.dims() {
        return Err(RhuidrError::ShapeMismatch {
            context: "mssim",
            expected: h_true.data().dim(),
            found: h_est.data().dim(),
        });
    }
    let dims = h_true.dims();
    let mut total = 0.0;
    for band in 0..dims.l {
        let a = band_image(h_true, band);
        let b = band_image(h_est, band);
        total += ssim_single(&a, &b)?;
    }
    Ok(total / dims.l as f64)
}

fn band_image(cube: &HSCube, band: usize) -> Array2<f64> {
    let dims = cube.dims();
    Array2::from_shape_fn((dims.n1, dims.n2), |(r, c)| {
        cube.data()[[band, c * dims.n1 + r]]
    })
}

/// Normalized 1-D Gaussian window of odd length `len` with deviation `sigma`.
fn gaussian_window(len: usize, sigma: f64) -> Vec<f64> {
    let half = (len / 2) as f64;
    let mut w: Vec<f64> = (0..len)
        .map(|i| {
            let d = (i as f64 - half) / sigma;
            (-0.5 * d * d).exp()
        })
        .collect();
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// SSIM of one band with the standard constants; windows are evaluated only
/// where they fit entirely inside the image. Images smaller than the 11x11
/// window fall back to the largest odd window that fits.
fn ssim_single(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    let (rows, cols) = a.dim();
    let mut win = 11usize.min(rows).min(cols);
    if win % 2 == 0 {
        win -= 1;
    }
    if win == 0 {
        return Err(RhuidrError::invalid("image too small for ssim"));
    }
    let w = gaussian_window(win, 1.5);
    let c1 = (0.01_f64).powi(2);
    let c2 = (0.03_f64).powi(2);

    // Separable weighted moments: filter rows then columns.
    let horiz = |img: &Array2<f64>| -> Array2<f64> {
        let out_cols = cols - win + 1;
        let mut out = Array2::zeros((rows, out_cols));
        for r in 0..rows {
            for c in 0..out_cols {
                let mut acc = 0.0;
                for (t, wt) in w.iter().enumerate() {
                    acc += wt * img[[r, c + t]];
                }
                out[[r, c]] = acc;
            }
        }
        out
    };
    let vert = |img: &Array2<f64>| -> Array2<f64> {
        let out_rows = img.nrows() - win + 1;
        let mut out = Array2::zeros((out_rows, img.ncols()));
        for c in 0..img.ncols() {
            for r in 0..out_rows {
                let mut acc = 0.0;
                for (t, wt) in w.iter().enumerate() {
                    acc += wt * img[[r + t, c]];
                }
                out[[r, c]] = acc;
            }
        }
        out
    };
    let smooth = |img: &Array2<f64>| vert(&horiz(img));

    let mu_a = smooth(a);
    let mu_b = smooth(b);
    let aa = smooth(&(a * a));
    let bb = smooth(&(b * b));
    let ab = smooth(&(a * b));

    let mut total = 0.0;
    let (or, oc) = mu_a.dim();
    for r in 0..or {
        for c in 0..oc {
            let ma = mu_a[[r, c]];
            let mb = mu_b[[r, c]];
            let va = aa[[r, c]] - ma * ma;
            let vb = bb[[r, c]] - mb * mb;
            let cov = ab[[r, c]] - ma * mb;
            let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
            total += num / den;
        }
    }
    Ok(total / (or * oc) as f64)
}

/// Spectral angle distance between two spectra, in radians.
pub fn sad(s1: &[f64], s2: &[f64]) -> Result<f64> {
    if s1.len() != s2.len() || s1.is_empty() {
        return Err(RhuidrError::invalid("sad requires equal-length spectra"));
    }
    let dot: f64 = s1.iter().zip(s2).map(|(a, b)| a * b).sum();
    let n1: f64 = s1.iter().map(|v| v * v).sum::<f64>().sqrt();
    let n2: f64 = s2.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n1 == 0.0 || n2 == 0.0 {
        return Err(RhuidrError::invalid("sad is undefined for a zero spectrum"));
    }
    Ok((dot / (n1 * n2)).clamp(-1.0, 1.0).acos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Dims;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn sre_examples() {
        // ||A||^2 = 100, ||err||^2 = 1 -> 20 dB.
        let a_true = Array2::from_elem((1, 4), 5.0); // norm^2 = 100
        let mut a_est = a_true.clone();
        a_est[[0, 0]] += 1.0; // err^2 = 1
        assert_abs_diff_eq!(sre(&a_true, &a_est).unwrap(), 20.0, epsilon = 1e-12);

        assert_eq!(sre(&a_true, &a_true).unwrap(), f64::INFINITY);
        // A_est = 0 -> error equals signal -> 0 dB.
        let zero = Array2::zeros((1, 4));
        assert_abs_diff_eq!(sre(&a_true, &zero).unwrap(), 0.0, epsilon = 1e-12);
        assert!(sre(&zero, &a_true).is_err());
    }

    #[test]
    fn rmse_examples() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let shifted = a.mapv(|v| v + 0.5);
        assert_abs_diff_eq!(rmse(&a, &shifted).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn sre_rmse_relation() {
        let mut r = rng(1);
        let a = Array2::from_shape_fn((3, 7), |_| r.random_range(0.1..1.0));
        let b = Array2::from_shape_fn((3, 7), |_| r.random_range(0.0..1.0));
        let s = sre(&a, &b).unwrap();
        let e = rmse(&a, &b).unwrap();
        let signal_sq = frobenius_norm(&a).powi(2);
        let via_rmse = 10.0 * (signal_sq / (21.0 * e * e)).log10();
        assert_abs_diff_eq!(s, via_rmse, epsilon = 1e-10);
    }

    #[test]
    fn ps_examples() {
        let a = array![[1.0, 1.0], [0.0, 0.0]];
        assert_eq!(ps(&a, &a, PS_THRESHOLD).unwrap(), 1.0);

        // One pixel at exactly 4x relative squared error, one exact.
        let est = array![[1.0, 3.0], [0.0, 0.0]]; // err^2/norm^2 = 4 for pixel 1
        assert_eq!(ps(&a, &est, PS_THRESHOLD).unwrap(), 0.5);

        // Zero-norm true pixels are excluded.
        let with_zero = array![[1.0, 0.0], [0.0, 0.0]];
        let est2 = array![[1.0, 9.0], [0.0, 9.0]];
        assert_eq!(ps(&with_zero, &est2, PS_THRESHOLD).unwrap(), 1.0);
    }

    #[test]
    fn ps_matches_per_pixel_loop() {
        let mut r = rng(2);
        let a = Array2::from_shape_fn((4, 50), |_| r.random_range(0.0..1.0));
        let b = Array2::from_shape_fn((4, 50), |_| r.random_range(0.0..2.0));
        let got = ps(&a, &b, 0.5).unwrap();
        let mut num = 0;
        let mut den = 0;
        for p in 0..50 {
            let ns: f64 = (0..4).map(|i| a[[i, p]] * a[[i, p]]).sum();
            if ns == 0.0 {
                continue;
            }
            let es: f64 = (0..4)
                .map(|i| (a[[i, p]] - b[[i, p]]) * (a[[i, p]] - b[[i, p]]))
                .sum();
            den += 1;
            if es / ns <= 0.5 {
                num += 1;
            }
        }
        assert_eq!(got, num as f64 / den as f64);
    }

    fn cube_from(data: Array2<f64>, n1: usize, n2: usize) -> HSCube {
        let dims = Dims::new(n1, n2, data.nrows(), 1).unwrap();
        HSCube::from_matrix(data, dims).unwrap()
    }

    #[test]
    fn mpsnr_examples() {
        // Per-band MSE 1e-4 on every band -> 40 dB.
        let n = 100;
        let truth = cube_from(Array2::zeros((3, n)), 10, 10);
        let est = cube_from(Array2::from_elem((3, n), 0.01), 10, 10);
        assert_abs_diff_eq!(mpsnr(&truth, &est).unwrap(), 40.0, epsilon = 1e-10);

        assert_eq!(mpsnr(&truth, &truth).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn mpsnr_matches_per_band_recompute() {
        let mut r = rng(3);
        let a = cube_from(
            Array2::from_shape_fn((4, 36), |_| r.random_range(0.0..1.0)),
            6,
            6,
        );
        let b = cube_from(
            Array2::from_shape_fn((4, 36), |_| r.random_range(0.0..1.0)),
            6,
            6,
        );
        let got = mpsnr(&a, &b).unwrap();
        let mut total = 0.0;
        for band in 0..4 {
            let err_sq: f64 = (0..36)
                .map(|p| (a.data()[[band, p]] - b.data()[[band, p]]).powi(2))
                .sum();
            total += 10.0 * (36.0 / err_sq).log10();
        }
        assert_abs_diff_eq!(got, total / 4.0, epsilon = 1e-10);
    }

    #[test]
    fn mssim_identical_is_one() {
        let mut r = rng(4);
        let a = cube_from(
            Array2::from_shape_fn((2, 256), |_| r.random_range(0.0..1.0)),
            16,
            16,
        );
        assert_abs_diff_eq!(mssim(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mssim_anticorrelated_is_nonpositive() {
        // High-frequency bands have (near-)zero local means, so negation
        // anticorrelates every window.
        let data = Array2::from_shape_fn((1, 256), |(_, p)| {
            let r = p % 16;
            let c = p / 16;
            ((r as f64 * 2.1).sin() + (c as f64 * 1.9).sin()) * 0.5
        });
        let a = cube_from(data.clone(), 16, 16);
        let b = cube_from(data.mapv(|v| -v), 16, 16);
        assert!(mssim(&a, &b).unwrap() <= 0.0);
    }

    #[test]
    fn mssim_symmetric() {
        let mut r = rng(5);
        let a = cube_from(
            Array2::from_shape_fn((2, 400), |_| r.random_range(0.0..1.0)),
            20,
            20,
        );
        let b = cube_from(
            Array2::from_shape_fn((2, 400), |_| r.random_range(0.0..1.0)),
            20,
            20,
        );
        assert_abs_diff_eq!(
            mssim(&a, &b).unwrap(),
            mssim(&b, &a).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn mssim_matches_windowed_bruteforce() {
        let mut r = rng(6);
        let a_img = Array2::from_shape_fn((14, 14), |_| r.random_range(0.0..1.0));
        let b_img = Array2::from_shape_fn((14, 14), |_| r.random_range(0.0..1.0));

        // Direct 2-D windowed oracle.
        let w1 = gaussian_window(11, 1.5);
        let mut total = 0.0;
        let mut count = 0;
        for r0 in 0..4 {
            for c0 in 0..4 {
                let mut ma = 0.0;
                let mut mb = 0.0;
                let mut saa = 0.0;
                let mut sbb = 0.0;
                let mut sab = 0.0;
                for i in 0..11 {
                    for j in 0..11 {
                        let wt = w1[i] * w1[j];
                        let x = a_img[[r0 + i, c0 + j]];
                        let y = b_img[[r0 + i, c0 + j]];
                        ma += wt * x;
                        mb += wt * y;
                        saa += wt * x * x;
                        sbb += wt * y * y;
                        sab += wt * x * y;
                    }
                }
                let va = saa - ma * ma;
                let vb = sbb - mb * mb;
                let cov = sab - ma * mb;
                let c1 = 0.0001;
                let c2 = 0.0009;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        let oracle = total / count as f64;

        let flat_a = Array2::from_shape_fn((1, 196), |(_, p)| a_img[[p % 14, p / 14]]);
        let flat_b = Array2::from_shape_fn((1, 196), |(_, p)| b_img[[p % 14, p / 14]]);
        let got = mssim(&cube_from(flat_a, 14, 14), &cube_from(flat_b, 14, 14)).unwrap();
        assert_abs_diff_eq!(got, oracle, epsilon = 1e-10);
    }

    #[test]
    fn sad_examples() {
        let s = vec![0.3, 0.7, 0.1];
        let doubled: Vec<f64> = s.iter().map(|v| 2.0 * v).collect();
        assert_abs_diff_eq!(sad(&s, &doubled).unwrap(), 0.0, epsilon = 1e-7);

        let e1 = vec![1.0, 0.0];
        let e2 = vec![0.0, 1.0];
        assert_abs_diff_eq!(
            sad(&e1, &e2).unwrap(),
            std::f64::consts::FRAC_PI_2,
            epsilon = 1e-12
        );

        let mut r = rng(7);
        let a: Vec<f64> = (0..9).map(|_| r.random_range(0.1..1.0)).collect();
        let b: Vec<f64> = (0..9).map(|_| r.random_range(0.1..1.0)).collect();
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_abs_diff_eq!(
            sad(&a, &b).unwrap(),
            (dot / (na * nb)).acos(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn metrics_invariant_under_pixel_permutation() {
        let mut r = rng(8);
        let a = Array2::from_shape_fn((3, 10), |_| r.random_range(0.1..1.0));
        let b = Array2::from_shape_fn((3, 10), |_| r.random_range(0.0..1.0));
        let perm: Vec<usize> = vec![3, 1, 4, 0, 9, 2, 7, 5, 8, 6];
        let permute = |x: &Array2<f64>| {
            Array2::from_shape_fn((3, 10), |(i, j)| x[[i, perm[j]]])
        };
        let (ap, bp) = (permute(&a), permute(&b));
        assert_abs_diff_eq!(
            sre(&a, &b).unwrap(),
            sre(&ap, &bp).unwrap(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            rmse(&a, &b).unwrap(),
            rmse(&ap, &bp).unwrap(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            ps(&a, &b, 1.0).unwrap(),
            ps(&ap, &bp, 1.0).unwrap(),
            epsilon = 0.0
        );
    }

    #[test]
    fn report_line_format() {
        let report = MetricReport {
            sre_db: Some(12.5),
            rmse: Some(0.01),
            ps: None,
            mpsnr_db: Some(35.0),
            mssim: None,
        };
        assert_eq!(report.to_kv_line(), "sre_db=12.5 rmse=0.01 mpsnr_db=35");
    }
}
