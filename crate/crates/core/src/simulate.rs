//! Seeded synthetic scenes and mixed-noise degradations.
//!
//! Endmember spectra are sums of a few Gaussians normalized to peak 1;
//! abundance fields are sums of spatial Gaussian bumps on `k` randomly chosen
//! library rows, normalized so per-pixel sums stay in (0, 1]. Degradations
//! compose i.i.d. or per-band Gaussian noise, salt-and-pepper replacement, and
//! vertical stripes, in that order. Everything is a pure function of its
//! inputs and a seed.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, RhuidrError};
use crate::types::{AbundanceMatrix, Dims, EndmemberLibrary, HSCube};

/// Parameters of one degradation case.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCase {
    pub case_id: u8,
    /// Standard deviation for i.i.d. Gaussian noise.
    pub sigma: Option<f64>,
    /// Sampling range for per-band standard deviations (non-i.i.d. cases).
    pub sigma_band_range: Option<(f64, f64)>,
    /// The per-band deviations actually drawn (non-i.i.d. cases).
    pub sigmas: Vec<f64>,
    /// Salt-and-pepper rate.
    pub p_s: f64,
    /// Stripe intensity range, when stripes are applied.
    pub stripe_range: Option<(f64, f64)>,
    /// Fraction of (band, column) pairs striped.
    pub stripe_fraction: f64,
}

/// Scene description for the generators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub dims: Dims,
    /// Number of active endmembers (nonzero abundance rows).
    pub k: usize,
    pub seed: u64,
    /// Scales the spatial bump widths; 1.0 is the default footprint.
    pub smoothness: f64,
}

impl SceneSpec {
    pub fn new(dims: Dims, k: usize, seed: u64) -> Result<Self> {
        if k == 0 || k > dims.m {
            return Err(RhuidrError::invalid(format!(
                "active endmember count k={k} must satisfy 1 <= k <= m={}",
                dims.m
            )));
        }
        Ok(SceneSpec {
            dims,
            k,
            seed,
            smoothness: 1.0,
        })
    }

    pub fn with_smoothness(mut self, smoothness: f64) -> Result<Self> {
        if !(smoothness > 0.0) || !smoothness.is_finite() {
            return Err(RhuidrError::invalid("smoothness must be positive"));
        }
        self.smoothness = smoothness;
        Ok(self)
    }
}

/// Derives `count` independent sub-seeds from one master seed, so that the
/// stages of a pipeline never share an RNG stream.
pub fn derive_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random()).collect()
}

/// Generates `m` smooth nonnegative spectra over `l` bands, each a sum of
/// 3 to 6 Gaussians, normalized to peak exactly 1.
pub fn gen_endmembers(l: usize, m: usize, seed: u64) -> Result<EndmemberLibrary> {
    if m < 2 {
        return Err(RhuidrError::invalid("library needs at least 2 endmembers"));
    }
    if l == 0 {
        return Err(RhuidrError::invalid("band count must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Array2::zeros((l, m));
    for j in 0..m {
        let bumps = rng.random_range(3..=6);
        let mut spectrum = vec![0.0_f64; l];
        for _ in 0..bumps {
            let center = rng.random_range(0.0..l as f64);
            let width = rng.random_range((l as f64 / 20.0).max(0.5)..(l as f64 / 4.0).max(1.0));
            let amp = rng.random_range(0.3..1.0);
            for (b, v) in spectrum.iter_mut().enumerate() {
                let d = (b as f64 - center) / width;
                *v += amp * (-0.5 * d * d).exp();
            }
        }
        let peak = spectrum.iter().cloned().fold(0.0_f64, f64::max);
        for (b, v) in spectrum.iter().enumerate() {
            data[[b, j]] = v / peak;
        }
    }
    EndmemberLibrary::new(data)
}

/// Generates abundance maps: `k` smooth nonnegative fields on randomly chosen
/// rows, the remaining rows exactly zero, per-pixel sums normalized into
/// (0, 1].
pub fn gen_abundance(spec: &SceneSpec, m: usize) -> Result<AbundanceMatrix> {
    if m != spec.dims.m {
        return Err(RhuidrError::invalid(format!(
            "library size {m} does not match scene dims m={}",
            spec.dims.m
        )));
    }
    let dims = spec.dims;
    let n = dims.n();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let active = rand::seq::index::sample(&mut rng, m, spec.k).into_vec();
    let mut data = Array2::zeros((m, n));
    let span = dims.n1.min(dims.n2) as f64;
    for &row in &active {
        let bumps = rng.random_range(4..=8);
        for _ in 0..bumps {
            let cr = rng.random_range(0.0..dims.n1 as f64);
            let cc = rng.random_range(0.0..dims.n2 as f64);
            let width = spec.smoothness * span * rng.random_range(0.15..0.35);
            let amp = rng.random_range(0.2..1.0);
            for c in 0..dims.n2 {
                for r in 0..dims.n1 {
                    let dr = (r as f64 - cr) / width;
                    let dc = (c as f64 - cc) / width;
                    data[[row, c * dims.n1 + r]] += amp * (-0.5 * (dr * dr + dc * dc)).exp();
                }
            }
        }
    }
    // Normalize so per-pixel sums land in (0, 1]. Gaussian bumps are strictly
    // positive, so every active pixel sum is positive.
    let mut max_sum = 0.0_f64;
    for p in 0..n {
        let s: f64 = active.iter().map(|&row| data[[row, p]]).sum();
        max_sum = max_sum.max(s);
    }
    if max_sum > 0.0 {
        for &row in &active {
            for p in 0..n {
                data[[row, p]] /= max_sum;
            }
        }
    }
    AbundanceMatrix::new(data)
}

/// Noise-free observation `V = E * A`.
pub fn clean_scene(e: &EndmemberLibrary, a: &AbundanceMatrix, dims: Dims) -> Result<HSCube> {
    if e.len() != a.data().nrows() {
        return Err(RhuidrError::ShapeMismatch {
            context: "clean_scene",
            expected: (e.len(), a.data().ncols()),
            found: a.data().dim(),
        });
    }
    HSCube::from_matrix(e.data().dot(a.data()), dims)
}

/// Adds i.i.d. Gaussian noise with standard deviation `sigma`.
pub fn add_gaussian(v: &HSCube, sigma: f64, seed: u64) -> Result<HSCube> {
    if sigma < 0.0 {
        return Err(RhuidrError::invalid("sigma must be nonnegative"));
    }
    if sigma == 0.0 {
        return Ok(v.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("validated sigma");
    let data = v.data().mapv(|x| x + normal.sample(&mut rng));
    HSCube::from_matrix(data, *v.dims())
}

/// Adds Gaussian noise with a per-band standard deviation drawn uniformly
/// from `range`; returns the degraded cube and the drawn deviations.
pub fn add_gaussian_noniid(
    v: &HSCube,
    range: (f64, f64),
    seed: u64,
) -> Result<(HSCube, Vec<f64>)> {
    if !(range.0 >= 0.0 && range.1 >= range.0) {
        return Err(RhuidrError::invalid("invalid sigma range"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = v.dims().l;
    let sigmas: Vec<f64> = (0..l)
        .map(|_| {
            if range.1 > range.0 {
                rng.random_range(range.0..range.1)
            } else {
                range.0
            }
        })
        .collect();
    let mut data = v.data().clone();
    for (band, &sigma) in sigmas.iter().enumerate() {
        if sigma == 0.0 {
            continue;
        }
        let normal = Normal::new(0.0, sigma).expect("validated sigma");
        for x in data.row_mut(band).iter_mut() {
            *x += normal.sample(&mut rng);
        }
    }
    Ok((HSCube::from_matrix(data, *v.dims())?, sigmas))
}

/// Replaces each entry by 0 with probability `p_s / 2` and by 1 with
/// probability `p_s / 2`.
pub fn add_salt_pepper(v: &HSCube, p_s: f64, seed: u64) -> Result<HSCube> {
    if !(0.0..=1.0).contains(&p_s) {
        return Err(RhuidrError::invalid("salt-and-pepper rate must be in [0, 1]"));
    }
    if p_s == 0.0 {
        return Ok(v.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = v.data().mapv(|x| {
        let u: f64 = rng.random_range(0.0..1.0);
        if u < p_s / 2.0 {
            0.0
        } else if u < p_s {
            1.0
        } else {
            x
        }
    });
    HSCube::from_matrix(data, *v.dims())
}

/// Adds vertical stripes: each (band, image-column) pair is selected with
/// probability `fraction`, and a constant drawn uniformly from
/// `intensity_range` is added along the whole vertical extent. Returns the
/// degraded cube and the true stripe component, which is vertically flat by
/// construction.
pub fn add_stripes(
    v: &HSCube,
    intensity_range: (f64, f64),
    fraction: f64,
    seed: u64,
) -> Result<(HSCube, Array2<f64>)> {
    if intensity_range.1 < intensity_range.0 {
        return Err(RhuidrError::invalid("invalid stripe intensity range"));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(RhuidrError::invalid("stripe fraction must be in [0, 1]"));
    }
    let dims = *v.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stripe = Array2::zeros((dims.l, dims.n()));
    for band in 0..dims.l {
        for c in 0..dims.n2 {
            let selected = fraction >= 1.0 || rng.random_range(0.0..1.0) < fraction;
            if !selected {
                continue;
            }
            let value = if intensity_range.1 > intensity_range.0 {
                rng.random_range(intensity_range.0..intensity_range.1)
            } else {
                intensity_range.0
            };
            for r in 0..dims.n1 {
                stripe[[band, c * dims.n1 + r]] = value;
            }
        }
    }
    let degraded = HSCube::from_matrix(v.data() + &stripe, dims)?;
    Ok((degraded, stripe))
}

/// Ground-truth decomposition of a degraded observation.
#[derive(Debug, Clone)]
pub struct DegradedScene {
    pub degraded: HSCube,
    /// Additive Gaussian component.
    pub gaussian: Array2<f64>,
    /// Salt-and-pepper replacement delta (degraded-after minus before).
    pub sparse: Array2<f64>,
    /// Stripe component, vertically flat.
    pub stripe: Array2<f64>,
    pub case: NoiseCase,
}

const STRIPE_RANGE: (f64, f64) = (-0.3, 0.3);

/// Applies one of the eight standard degradation cases, composing Gaussian
/// noise, then salt-and-pepper, then stripes. The returned components satisfy
/// `degraded = clean + gaussian + sparse + stripe` exactly.
pub fn make_case(v_clean: &HSCube, case_id: u8, seed: u64) -> Result<DegradedScene> {
    let (sigma, sigma_band_range, p_s, stripes) = match case_id {
        1 => (Some(0.05), None, 0.0, false),
        2 => (Some(0.1), None, 0.0, false),
        3 => (Some(0.05), None, 0.05, false),
        4 => (Some(0.05), None, 0.1, false),
        5 => (Some(0.05), None, 0.05, true),
        6 => (Some(0.1), None, 0.05, true),
        7 => (None, Some((0.1, 0.2)), 0.0, false),
        8 => (None, Some((0.1, 0.2)), 0.05, true),
        other => {
            return Err(RhuidrError::invalid(format!(
                "unknown noise case {other}; valid cases are 1..=8"
            )))
        }
    };
    let stripe_fraction = 1.0;
    let seeds = derive_seeds(seed, 3);

    let (after_gauss, sigmas) = match (sigma, sigma_band_range) {
        (Some(s), None) => (add_gaussian(v_clean, s, seeds[0])?, Vec::new()),
        (None, Some(range)) => add_gaussian_noniid(v_clean, range, seeds[0])?,
        _ => unreachable!(),
    };
    let gaussian = after_gauss.data() - v_clean.data();

    let after_sp = add_salt_pepper(&after_gauss, p_s, seeds[1])?;
    let sparse = after_sp.data() - after_gauss.data();

    let stripe = if stripes {
        add_stripes(&after_sp, STRIPE_RANGE, stripe_fraction, seeds[2])?.1
    } else {
        Array2::zeros(v_clean.data().dim())
    };

    // Materialize the observation from its components in one fixed
    // left-associated sum so the decomposition identity holds bitwise.
    let degraded = HSCube::from_matrix(
        v_clean.data() + &gaussian + &sparse + &stripe,
        *v_clean.dims(),
    )?;

    Ok(DegradedScene {
        degraded,
        gaussian,
        sparse,
        stripe,
        case: NoiseCase {
            case_id,
            sigma,
            sigma_band_range,
            sigmas,
            p_s,
            stripe_range: stripes.then_some(STRIPE_RANGE),
            stripe_fraction: if stripes { stripe_fraction } else { 0.0 },
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{diff_v, frobenius_norm};
    use crate::metrics::sad;

    fn dims(n1: usize, n2: usize, l: usize, m: usize) -> Dims {
        Dims::new(n1, n2, l, m).unwrap()
    }

    fn toy_cube(seed: u64, d: Dims) -> HSCube {
        let e = gen_endmembers(d.l, d.m, seed).unwrap();
        let spec = SceneSpec::new(d, 2.min(d.m), seed).unwrap();
        let a = gen_abundance(&spec, d.m).unwrap();
        clean_scene(&e, &a, d).unwrap()
    }

    #[test]
    fn endmembers_contract() {
        let e = gen_endmembers(8, 2, 0).unwrap();
        assert_eq!(e.data().dim(), (8, 2));
        for j in 0..2 {
            let col = e.data().column(j);
            assert!(col.iter().all(|v| *v >= 0.0));
            let peak = col.iter().cloned().fold(0.0_f64, f64::max);
            assert_eq!(peak, 1.0);
        }
        // Determinism.
        let e2 = gen_endmembers(8, 2, 0).unwrap();
        assert_eq!(e.data(), e2.data());
        // Distinct columns: positive pairwise spectral angle.
        let s1: Vec<f64> = e.data().column(0).to_vec();
        let s2: Vec<f64> = e.data().column(1).to_vec();
        assert!(sad(&s1, &s2).unwrap() > 0.0);
        assert!(gen_endmembers(8, 1, 0).is_err());
    }

    #[test]
    fn abundance_contract() {
        let d = dims(12, 10, 4, 6);
        let spec = SceneSpec::new(d, 3, 9).unwrap();
        let a = gen_abundance(&spec, 6).unwrap();
        let data = a.data();
        // Exactly k nonzero rows.
        let active: Vec<usize> = (0..6)
            .filter(|&i| data.row(i).iter().any(|v| *v != 0.0))
            .collect();
        assert_eq!(active.len(), 3);
        // Entries in [0, 1], per-pixel sums in (0, 1].
        assert!(data.iter().all(|v| (0.0..=1.0).contains(v)));
        for p in 0..d.n() {
            let s: f64 = data.column(p).sum();
            assert!(s > 0.0 && s <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn abundance_single_active_row() {
        let d = dims(6, 6, 3, 4);
        let spec = SceneSpec::new(d, 1, 4).unwrap();
        let a = gen_abundance(&spec, 4).unwrap();
        let nonzero_rows = (0..4)
            .filter(|&i| a.data().row(i).iter().any(|v| *v != 0.0))
            .count();
        assert_eq!(nonzero_rows, 1);
    }

    #[test]
    fn abundance_fields_are_smooth() {
        // Regression: median vertical difference of active rows stays well
        // below a tenth of the field amplitude on the seeded scene.
        let d = dims(32, 32, 4, 8);
        let spec = SceneSpec::new(d, 3, 11).unwrap();
        let a = gen_abundance(&spec, 8).unwrap();
        for i in 0..8 {
            let row = a.data().row(i);
            let amplitude = row.iter().cloned().fold(0.0_f64, f64::max);
            if amplitude == 0.0 {
                continue;
            }
            let field = row.insert_axis(ndarray::Axis(0)).to_owned();
            let dv = diff_v(&field, &d).unwrap();
            let mut grads: Vec<f64> = (0..d.n())
                .filter(|p| p % d.n1 != d.n1 - 1)
                .map(|p| dv[[0, p]].abs())
                .collect();
            grads.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = grads[grads.len() / 2];
            assert!(
                median < 0.1 * amplitude,
                "row {i}: median |Dv| {median} vs amplitude {amplitude}"
            );
        }
    }

    #[test]
    fn clean_scene_examples() {
        let d = dims(2, 2, 3, 2);
        let e = gen_endmembers(3, 2, 1).unwrap();
        let zero = AbundanceMatrix::new(Array2::zeros((2, 4))).unwrap();
        let cube = clean_scene(&e, &zero, d).unwrap();
        assert_eq!(cube.data(), &Array2::zeros((3, 4)));

        // Per-pixel matvec oracle.
        let spec = SceneSpec::new(d, 2, 2).unwrap();
        let a = gen_abundance(&spec, 2).unwrap();
        let cube = clean_scene(&e, &a, d).unwrap();
        for p in 0..4 {
            for band in 0..3 {
                let direct: f64 = (0..2).map(|j| e.data()[[band, j]] * a.data()[[j, p]]).sum();
                assert!((cube.data()[[band, p]] - direct).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn gaussian_noise_statistics() {
        let d = dims(100, 100, 10, 2);
        let v = HSCube::from_matrix(Array2::zeros((10, 10_000)), d).unwrap();
        let noisy = add_gaussian(&v, 0.05, 3).unwrap();
        let n_entries = 100_000;
        let mean: f64 = noisy.data().iter().sum::<f64>() / n_entries as f64;
        let var: f64 =
            noisy.data().iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n_entries as f64;
        let std = var.sqrt();
        assert!(
            (std - 0.05).abs() < 0.001,
            "sample std {std} too far from 0.05"
        );
        // sigma = 0 leaves the cube untouched; same seed reproduces.
        assert_eq!(add_gaussian(&v, 0.0, 3).unwrap().data(), v.data());
        assert_eq!(
            add_gaussian(&v, 0.05, 3).unwrap().data(),
            noisy.data()
        );
    }

    #[test]
    fn noniid_gaussian_draws_per_band_sigmas() {
        let d = dims(20, 20, 6, 2);
        let v = HSCube::from_matrix(Array2::zeros((6, 400)), d).unwrap();
        let (noisy, sigmas) = add_gaussian_noniid(&v, (0.1, 0.2), 5).unwrap();
        assert_eq!(sigmas.len(), 6);
        assert!(sigmas.iter().all(|s| (0.1..0.2).contains(s)));
        assert_ne!(noisy.data(), v.data());
    }

    #[test]
    fn salt_pepper_contract() {
        let d = dims(100, 100, 10, 2);
        let v = HSCube::from_matrix(Array2::from_elem((10, 10_000), 0.5), d).unwrap();
        let p = 0.05;
        let noisy = add_salt_pepper(&v, p, 8).unwrap();
        let corrupted: Vec<f64> = noisy
            .data()
            .iter()
            .zip(v.data().iter())
            .filter(|(a, b)| a != b)
            .map(|(a, _)| *a)
            .collect();
        assert!(corrupted.iter().all(|x| *x == 0.0 || *x == 1.0));
        // Binomial bound: fraction within 3 sigma of p.
        let n = 100_000.0;
        let frac = corrupted.len() as f64 / n;
        let sd = (p * (1.0 - p) / n).sqrt();
        assert!(
            (frac - p).abs() <= 3.0 * sd,
            "corrupted fraction {frac} vs {p}"
        );
        assert_eq!(add_salt_pepper(&v, 0.0, 8).unwrap().data(), v.data());
    }

    #[test]
    fn stripes_are_vertically_flat_and_uniform() {
        let d = dims(8, 125, 80, 2);
        let v = HSCube::from_matrix(Array2::zeros((80, 1000)), d).unwrap();
        let (noisy, stripe) = add_stripes(&v, (-0.3, 0.3), 1.0, 13).unwrap();
        assert_eq!(noisy.data(), &stripe);
        // Dv(L) = 0 exactly.
        let flat = diff_v(&stripe, &d).unwrap();
        assert_eq!(frobenius_norm(&flat), 0.0);
        // 80 bands x 125 columns = 10^4 stripe draws; KS test against
        // U(-0.3, 0.3) at alpha = 0.01 (critical value 1.628 / sqrt(n)).
        let mut values: Vec<f64> = (0..80)
            .flat_map(|band| (0..125).map(move |c| (band, c)))
            .map(|(band, c)| stripe[[band, c * 8]])
            .collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = values.len() as f64;
        let mut ks = 0.0_f64;
        for (i, x) in values.iter().enumerate() {
            let cdf = ((x + 0.3) / 0.6).clamp(0.0, 1.0);
            let hi = (i + 1) as f64 / n - cdf;
            let lo = cdf - i as f64 / n;
            ks = ks.max(hi.max(lo));
        }
        assert!(values.iter().all(|x| (-0.3..=0.3).contains(x)));
        assert!(ks <= 1.628 / n.sqrt(), "KS statistic {ks} too large");

        let (unchanged, l0) = add_stripes(&v, (-0.3, 0.3), 0.0, 13).unwrap();
        assert_eq!(unchanged.data(), v.data());
        assert_eq!(frobenius_norm(&l0), 0.0);
    }

    #[test]
    fn make_case_parameters_and_decomposition() {
        let d = dims(10, 10, 5, 4);
        let clean = toy_cube(21, d);
        let case1 = make_case(&clean, 1, 99).unwrap();
        assert_eq!(case1.case.sigma, Some(0.05));
        assert_eq!(case1.case.p_s, 0.0);
        assert!(case1.case.stripe_range.is_none());

        let case6 = make_case(&clean, 6, 99).unwrap();
        assert_eq!(case6.case.sigma, Some(0.1));
        assert_eq!(case6.case.p_s, 0.05);
        assert_eq!(case6.case.stripe_range, Some((-0.3, 0.3)));

        assert!(make_case(&clean, 0, 99).is_err());
        assert!(make_case(&clean, 9, 99).is_err());

        // Exact decomposition for every case.
        for case_id in 1..=8 {
            let scene = make_case(&clean, case_id, 42).unwrap();
            let recomposed =
                clean.data() + &scene.gaussian + &scene.sparse + &scene.stripe;
            assert_eq!(
                scene.degraded.data(),
                &recomposed,
                "case {case_id} decomposition not exact"
            );
        }

        // Determinism.
        let a = make_case(&clean, 5, 7).unwrap();
        let b = make_case(&clean, 5, 7).unwrap();
        assert_eq!(a.degraded.data(), b.degraded.data());
        assert_eq!(a.stripe, b.stripe);
    }
}
