//! Problem assembly and the end-to-end unmixing solve.
//!
//! The observation model is `V = E A + N + S + L`: library mixing plus
//! Gaussian residual, sparse noise, and vertically flat stripes. The program
//! minimizes
//!
//! `||A||_{1,2,r} + lambda1 ||D(A)||_1 + lambda2 R(K(E A)) + lambda3 ||L||_1`
//!
//! subject to `A >= 0`, `||E A + S + L - V||_F <= epsilon`, `||S||_1 <= eta`,
//! and `Dv(L) = O`. The image-domain term `R(K(.))` is one of the three
//! total-variation regularizers or absent. The splitting uses three primal
//! blocks (A, S, L) and up to five dual blocks, one per objective/constraint
//! term that needs a linear operator.

use ndarray::Array2;

use crate::error::{Result, RhuidrError};
use crate::linops::{
    compose_with_library, diff_v, frobenius_norm, hsstv_op, spatial_diff, BandDiff, ChainMap,
    HsstvOp, IdentityMap, LibraryMul, LinearMap, SpatialDiff, VerticalDiff,
};
use crate::prox::{
    project_fro_ball, project_l1_ball, prox_l1, prox_l12_cols, prox_l12_rows, prox_nonneg,
    prox_zero_set,
};
use crate::solver::{
    compute_stepsizes, solve, BlockProblem, PrimalId, ProxFn, SolveInit, SolveOptions, StopRule,
    Termination,
};
use crate::types::{AbundanceMatrix, Dims, EndmemberLibrary, HSCube, NoiseTriple};

/// Image-domain regularizer choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    /// `||D(X)||_{1,2,c}`: spatial differences grouped per pixel.
    Htv,
    /// `||D(Db(X))||_1`: spatio-spectral differences.
    Sstv,
    /// `||C_omega(X)||_1`: spatio-spectral plus weighted spatial.
    Hsstv,
    /// No image-domain term (the ablation configuration).
    None,
}

impl Regularizer {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regularizer::Htv => "htv",
            Regularizer::Sstv => "sstv",
            Regularizer::Hsstv => "hsstv",
            Regularizer::None => "none",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "htv" => Ok(Regularizer::Htv),
            "sstv" => Ok(Regularizer::Sstv),
            "hsstv" => Ok(Regularizer::Hsstv),
            "none" => Ok(Regularizer::None),
            other => Err(RhuidrError::invalid(format!(
                "unknown regularizer '{other}' (expected htv, sstv, hsstv, or none)"
            ))),
        }
    }
}

/// Solver configuration.
///
/// `epsilon` and `eta` have no universal defaults: on simulated data derive
/// them from the noise parameters with [`default_epsilon_iid`],
/// [`default_epsilon_noniid`], and [`default_eta`]; on real data they must be
/// supplied. `lambda1`/`lambda2` defaults were fixed by a grid search on the
/// seeded desk-scale scene.
#[derive(Debug, Clone, PartialEq)]
pub struct RhuidrConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub regularizer: Regularizer,
    pub omega: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub diagnostics_stride: usize,
}

impl RhuidrConfig {
    pub fn new(epsilon: f64, eta: f64) -> Self {
        RhuidrConfig {
            lambda1: 0.05,
            lambda2: 0.05,
            lambda3: 1.0,
            epsilon,
            eta,
            regularizer: Regularizer::Htv,
            omega: 0.05,
            max_iter: 50_000,
            tol: 1e-5,
            diagnostics_stride: 10,
        }
    }

    /// Parameter ranges plus the pairing rule: `lambda2 = 0` exactly when the
    /// regularizer is `none`.
    pub fn validate(&self) -> Result<()> {
        self.validate_ranges()?;
        match (self.regularizer, self.lambda2 == 0.0) {
            (Regularizer::None, false) => Err(RhuidrError::invalid(
                "lambda2 must be 0 when the regularizer is none",
            )),
            (Regularizer::None, true) => Ok(()),
            (_, true) => Err(RhuidrError::invalid(
                "lambda2 = 0 requires the regularizer to be none",
            )),
            (_, false) => Ok(()),
        }
    }

    fn validate_ranges(&self) -> Result<()> {
        if !(self.lambda1 > 0.0) {
            return Err(RhuidrError::invalid("lambda1 must be positive"));
        }
        if self.lambda2 < 0.0 {
            return Err(RhuidrError::invalid("lambda2 must be nonnegative"));
        }
        if !(self.lambda3 > 0.0) {
            return Err(RhuidrError::invalid("lambda3 must be positive"));
        }
        if self.epsilon < 0.0 {
            return Err(RhuidrError::invalid("epsilon must be nonnegative"));
        }
        if !(self.eta > 0.0) {
            return Err(RhuidrError::invalid("eta must be positive"));
        }
        if !(self.omega > 0.0) {
            return Err(RhuidrError::invalid("omega must be positive"));
        }
        if self.max_iter == 0 {
            return Err(RhuidrError::invalid("max_iter must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(RhuidrError::invalid("tol must be positive"));
        }
        if self.diagnostics_stride == 0 {
            return Err(RhuidrError::invalid("diagnostics stride must be at least 1"));
        }
        for v in [
            self.lambda1,
            self.lambda2,
            self.lambda3,
            self.epsilon,
            self.eta,
            self.omega,
            self.tol,
        ] {
            if !v.is_finite() {
                return Err(RhuidrError::invalid("config values must be finite"));
            }
        }
        Ok(())
    }
}

/// Fidelity radius for i.i.d. Gaussian noise:
/// `alpha_sigma * sigma * sqrt((1 - p_s) * n * l)`.
pub fn default_epsilon_iid(sigma: f64, p_s: f64, dims: &Dims, alpha_sigma: f64) -> Result<f64> {
    if sigma < 0.0 || alpha_sigma < 0.0 || !(0.0..=1.0).contains(&p_s) {
        return Err(RhuidrError::invalid("epsilon rule inputs must be nonnegative"));
    }
    let nl = (dims.n() * dims.l) as f64;
    Ok(alpha_sigma * sigma * ((1.0 - p_s) * nl).sqrt())
}

/// Fidelity radius for per-band Gaussian noise:
/// `alpha_sigma * sqrt((1 - p_s) * n * l * sum_i sigma_i)`.
pub fn default_epsilon_noniid(
    sigmas: &[f64],
    p_s: f64,
    dims: &Dims,
    alpha_sigma: f64,
) -> Result<f64> {
    if sigmas.len() != dims.l {
        return Err(RhuidrError::invalid(format!(
            "expected {} per-band sigmas, got {}",
            dims.l,
            sigmas.len()
        )));
    }
    if sigmas.iter().any(|s| *s < 0.0) || alpha_sigma < 0.0 || !(0.0..=1.0).contains(&p_s) {
        return Err(RhuidrError::invalid("epsilon rule inputs must be nonnegative"));
    }
    let nl = (dims.n() * dims.l) as f64;
    let sum: f64 = sigmas.iter().sum();
    Ok(alpha_sigma * ((1.0 - p_s) * nl * sum).sqrt())
}

/// Sparse-noise budget `0.5 * alpha_eta * p_s * n * l`.
///
/// Returns 0 when `p_s = 0`; the config layer rejects a zero budget, so
/// sparse-noise-free runs must floor the result to a small positive value
/// (which pins S to nearly zero).
pub fn default_eta(p_s: f64, dims: &Dims, alpha_eta: f64) -> Result<f64> {
    if alpha_eta < 0.0 || !(0.0..=1.0).contains(&p_s) {
        return Err(RhuidrError::invalid("eta rule inputs must be nonnegative"));
    }
    Ok(0.5 * alpha_eta * p_s * (dims.n() * dims.l) as f64)
}

/// Builds the image-domain operator `K` for a regularizer on `l`-band data.
fn image_operator(reg: Regularizer, l: usize, dims: &Dims, omega: f64) -> Option<Box<dyn LinearMap>> {
    match reg {
        Regularizer::Htv => Some(Box::new(SpatialDiff::new(l, dims.n1, dims.n2))),
        Regularizer::Sstv => {
            let spatial = Box::new(SpatialDiff::new(l, dims.n1, dims.n2));
            let band = Box::new(BandDiff::new(l, dims.n()));
            Some(Box::new(
                ChainMap::new(spatial, band).expect("band diff output matches spatial input"),
            ))
        }
        Regularizer::Hsstv => Some(Box::new(HsstvOp::new(l, dims.n1, dims.n2, omega))),
        Regularizer::None => None,
    }
}

/// Assembles the splitting problem: primal blocks `[A, S, L]` and dual blocks
/// `[Z1 = A, Z2 = D(A), Z3 = K(E A), Z4 = E A + S + L, Z5 = Dv(L)]`, with Z3
/// omitted when no regularizer is configured.
///
/// A regularizer with `lambda2 = 0` is accepted and wired with zero weight;
/// the public config layer additionally enforces the strict pairing.
pub fn build_problem(
    v: &HSCube,
    e: &EndmemberLibrary,
    cfg: &RhuidrConfig,
) -> Result<BlockProblem> {
    cfg.validate_ranges()?;
    if cfg.lambda2 > 0.0 && cfg.regularizer == Regularizer::None {
        return Err(RhuidrError::invalid(
            "lambda2 > 0 requires an image-domain regularizer",
        ));
    }
    let dims = *v.dims();
    if e.bands() != dims.l {
        return Err(RhuidrError::ShapeMismatch {
            context: "build_problem",
            expected: (dims.l, e.len()),
            found: (e.bands(), e.len()),
        });
    }
    let m = e.len();
    let l = dims.l;
    let n = dims.n();

    let mut prob = BlockProblem::new();
    let a = prob.add_primal(
        "abundance",
        (m, n),
        Box::new(|x: &Array2<f64>, _| prox_nonneg(x)) as ProxFn,
    );
    let eta = cfg.eta;
    let s = prob.add_primal(
        "sparse",
        (l, n),
        Box::new(move |x: &Array2<f64>, _| project_l1_ball(x, eta)) as ProxFn,
    );
    let lambda3 = cfg.lambda3;
    let stripe = prob.add_primal(
        "stripe",
        (l, n),
        Box::new(move |x: &Array2<f64>, scale| prox_l1(x, scale * lambda3)) as ProxFn,
    );

    let z1 = prob.add_dual(
        "row_sparsity",
        (m, n),
        Box::new(|x: &Array2<f64>, scale| prox_l12_rows(x, scale)) as ProxFn,
    );
    prob.connect(z1, a, Box::new(IdentityMap::new((m, n))))?;

    let lambda1 = cfg.lambda1;
    let z2 = prob.add_dual(
        "abundance_tv",
        (2 * m, n),
        Box::new(move |x: &Array2<f64>, scale| prox_l1(x, scale * lambda1)) as ProxFn,
    );
    prob.connect(z2, a, Box::new(SpatialDiff::new(m, dims.n1, dims.n2)))?;

    if let Some(k) = image_operator(cfg.regularizer, l, &dims, cfg.omega) {
        let lambda2 = cfg.lambda2;
        let prox_r: ProxFn = match cfg.regularizer {
            Regularizer::Htv => {
                Box::new(move |x: &Array2<f64>, scale| prox_l12_cols(x, scale * lambda2))
            }
            _ => Box::new(move |x: &Array2<f64>, scale| prox_l1(x, scale * lambda2)),
        };
        let composed = compose_with_library(k, e)?;
        let z3 = prob.add_dual("image_reg", composed.out_shape(), prox_r);
        prob.connect(z3, a, Box::new(composed))?;
    }

    let center = v.data().clone();
    let epsilon = cfg.epsilon;
    let z4 = prob.add_dual(
        "fidelity",
        (l, n),
        Box::new(move |x: &Array2<f64>, _| project_fro_ball(x, &center, epsilon)) as ProxFn,
    );
    prob.connect(z4, a, Box::new(LibraryMul::new(e, n)))?;
    prob.connect(z4, s, Box::new(IdentityMap::new((l, n))))?;
    prob.connect(z4, stripe, Box::new(IdentityMap::new((l, n))))?;

    let z5 = prob.add_dual(
        "stripe_flatness",
        (l, n),
        Box::new(|x: &Array2<f64>, _| prox_zero_set(x)) as ProxFn,
    );
    prob.connect(z5, stripe, Box::new(VerticalDiff::new(l, dims.n1, dims.n2)))?;

    Ok(prob)
}

/// The four-term objective of the program, evaluated exactly as written.
pub fn objective_value(
    a: &Array2<f64>,
    l_mat: &Array2<f64>,
    cfg: &RhuidrConfig,
    e: &EndmemberLibrary,
    dims: &Dims,
) -> Result<f64> {
    let row_sparsity: f64 = a
        .rows()
        .into_iter()
        .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum();
    let tv: f64 = spatial_diff(a, dims)?.iter().map(|v| v.abs()).sum();
    let image_term = if cfg.regularizer == Regularizer::None || cfg.lambda2 == 0.0 {
        0.0
    } else {
        let ea = e.data().dot(a);
        match cfg.regularizer {
            Regularizer::Htv => {
                let d = spatial_diff(&ea, dims)?;
                (0..d.ncols())
                    .map(|j| d.column(j).iter().map(|v| v * v).sum::<f64>().sqrt())
                    .sum()
            }
            Regularizer::Sstv => {
                let band = crate::linops::diff_b(&ea, dims)?;
                spatial_diff(&band, dims)?.iter().map(|v| v.abs()).sum()
            }
            Regularizer::Hsstv => hsstv_op(&ea, dims, cfg.omega)?
                .iter()
                .map(|v| v.abs())
                .sum(),
            Regularizer::None => unreachable!(),
        }
    };
    let stripe_l1: f64 = l_mat.iter().map(|v| v.abs()).sum();
    Ok(row_sparsity + cfg.lambda1 * tv + cfg.lambda2 * image_term + cfg.lambda3 * stripe_l1)
}

/// The four scalars tracked per diagnostics record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub objective: f64,
    /// `||V - E A - S - L||_F`.
    pub fidelity_dist: f64,
    /// `||S||_1`.
    pub s_l1: f64,
    /// Mean absolute value of `Dv(L)`.
    pub stripe_mav: f64,
}

/// Evaluates the diagnostics scalars for one solver state.
pub fn diagnostics_record(
    v: &HSCube,
    e: &EndmemberLibrary,
    cfg: &RhuidrConfig,
    a: &Array2<f64>,
    s: &Array2<f64>,
    l_mat: &Array2<f64>,
) -> Result<DiagnosticsRecord> {
    let dims = v.dims();
    let residual = v.data() - &e.data().dot(a) - s - l_mat;
    let dv = diff_v(l_mat, dims)?;
    let count = (dims.l * dims.n()) as f64;
    Ok(DiagnosticsRecord {
        objective: objective_value(a, l_mat, cfg, e, dims)?,
        fidelity_dist: frobenius_norm(&residual),
        s_l1: s.iter().map(|x| x.abs()).sum(),
        stripe_mav: dv.iter().map(|x| x.abs()).sum::<f64>() / count,
    })
}

/// One sampled row of the solve trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub rel_change: f64,
    pub objective: f64,
    pub fidelity_dist: f64,
    pub s_l1: f64,
    pub stripe_mav: f64,
}

/// Iteration history of an unmixing run.
#[derive(Debug, Clone)]
pub struct UnmixTrace {
    /// Diagnostics sampled every `diagnostics_stride` iterations and at
    /// termination.
    pub records: Vec<TraceRecord>,
    /// Relative abundance change after every iteration.
    pub rel_change: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
}

/// Estimated decomposition plus the reconstruction and the solve trace.
#[derive(Debug, Clone)]
pub struct UnmixResult {
    pub abundance: AbundanceMatrix,
    pub noise: NoiseTriple,
    pub reconstructed: HSCube,
    pub trace: UnmixTrace,
}

/// Runs the full unmixing solve from a zero start.
pub fn unmix(v: &HSCube, e: &EndmemberLibrary, cfg: &RhuidrConfig) -> Result<UnmixResult> {
    unmix_impl(v, e, cfg, None)
}

/// Runs the solve with a warm-started abundance block.
pub fn unmix_warm(
    v: &HSCube,
    e: &EndmemberLibrary,
    cfg: &RhuidrConfig,
    a0: &AbundanceMatrix,
) -> Result<UnmixResult> {
    unmix_impl(v, e, cfg, Some(a0))
}

fn unmix_impl(
    v: &HSCube,
    e: &EndmemberLibrary,
    cfg: &RhuidrConfig,
    a0: Option<&AbundanceMatrix>,
) -> Result<UnmixResult> {
    cfg.validate()?;
    let problem = build_problem(v, e, cfg)?;
    let steps = compute_stepsizes(&problem)?;
    let dims = *v.dims();
    let (m, l, n) = (e.len(), dims.l, dims.n());

    let init = match a0 {
        None => SolveInit::default(),
        Some(a) => {
            if a.data().dim() != (m, n) {
                return Err(RhuidrError::ShapeMismatch {
                    context: "unmix warm start",
                    expected: (m, n),
                    found: a.data().dim(),
                });
            }
            SolveInit {
                primal: Some(vec![
                    a.data().clone(),
                    Array2::zeros((l, n)),
                    Array2::zeros((l, n)),
                ]),
                dual: None,
            }
        }
    };

    let hook = |state: &crate::solver::SolveState| -> Vec<f64> {
        match diagnostics_record(
            v,
            e,
            cfg,
            &state.primal[0],
            &state.primal[1],
            &state.primal[2],
        ) {
            Ok(rec) => vec![rec.objective, rec.fidelity_dist, rec.s_l1, rec.stripe_mav],
            Err(_) => vec![f64::NAN; 4],
        }
    };

    let options = SolveOptions {
        stop: StopRule {
            max_iter: cfg.max_iter,
            tol: cfg.tol,
        },
        stop_fn: Box::new(crate::solver::relative_change(PrimalId(0))),
        diagnostics_stride: cfg.diagnostics_stride,
        diagnostics: Some(Box::new(hook)),
    };

    let sol = solve(&problem, &steps, init, options)?;

    let records = sol
        .trace
        .diagnostics
        .iter()
        .map(|(iter, scalars)| TraceRecord {
            iter: *iter,
            rel_change: sol.trace.rel_change[*iter - 1],
            objective: scalars[0],
            fidelity_dist: scalars[1],
            s_l1: scalars[2],
            stripe_mav: scalars[3],
        })
        .collect();

    let mut primal = sol.primal;
    let stripe_est = primal.pop().expect("three primal blocks");
    let sparse_est = primal.pop().expect("three primal blocks");
    let a_est = primal.pop().expect("three primal blocks");
    let reconstructed = HSCube::from_matrix(e.data().dot(&a_est), dims)?;

    Ok(UnmixResult {
        abundance: AbundanceMatrix::new(a_est)?,
        noise: NoiseTriple {
            sparse: sparse_est,
            stripe: stripe_est,
        },
        reconstructed,
        trace: UnmixTrace {
            records,
            rel_change: sol.trace.rel_change,
            iterations: sol.trace.iterations,
            termination: sol.trace.termination,
        },
    })
}
