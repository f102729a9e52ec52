//! File formats and the reproducible run pipeline.
//!
//! Cube files are a minimal text header (magic, grid, bands, layout tag)
//! followed by raw little-endian f64 samples, band-sequential with columns in
//! pixel-index order. Matrices travel as plain CSV with shortest-round-trip
//! float formatting. Abundance maps export to 16-bit PGM with the affine
//! scale recorded in a sidecar. A run manifest pins every input of a full
//! synth/degrade/unmix/metrics pipeline so reruns are byte-identical.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RhuidrError};
use crate::metrics::{mpsnr, mssim, ps, rmse, sre, MetricReport, PS_THRESHOLD};
use crate::simulate::{clean_scene, derive_seeds, gen_abundance, gen_endmembers, make_case,
    SceneSpec};
use crate::solver::Termination;
use crate::types::{AbundanceMatrix, Dims, EndmemberLibrary, HSCube};
use crate::unmix::{
    default_epsilon_iid, default_epsilon_noniid, default_eta, unmix, Regularizer, RhuidrConfig,
    UnmixResult,
};

/// Magic line of the cube format.
pub const CUBE_MAGIC: &str = "RHUIDRCUBE1";
/// Layout tag: band-sequential samples, columns in pixel-index order.
pub const CUBE_LAYOUT: &str = "band-major-colpix";

/// Lower bound applied to the sparse-noise budget when a degradation case
/// carries no salt-and-pepper component; the l1 ball must stay nonempty-
/// positive, and a near-zero radius pins S to (numerically) zero.
pub const ETA_FLOOR: f64 = 1e-9;

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

// ---------------------------------------------------------------------------
// Cube format
// ---------------------------------------------------------------------------

/// Writes a cube: five header lines then `8 * l * n` payload bytes.
pub fn write_cube(cube: &HSCube, path: &Path) -> Result<()> {
    let dims = cube.dims();
    let file = fs::File::create(path).map_err(|e| RhuidrError::io(path_str(path), e))?;
    let mut w = BufWriter::new(file);
    let header = format!(
        "{CUBE_MAGIC}\nn1 {}\nn2 {}\nl {}\nlayout {CUBE_LAYOUT}\n",
        dims.n1, dims.n2, dims.l
    );
    w.write_all(header.as_bytes())
        .map_err(|e| RhuidrError::io(path_str(path), e))?;
    let n = dims.n();
    for band in 0..dims.l {
        for p in 0..n {
            w.write_all(&cube.data()[[band, p]].to_le_bytes())
                .map_err(|e| RhuidrError::io(path_str(path), e))?;
        }
    }
    w.flush().map_err(|e| RhuidrError::io(path_str(path), e))
}

/// Reads a cube with strict header and payload-length validation.
pub fn read_cube(path: &Path) -> Result<HSCube> {
    let bytes = fs::read(path).map_err(|e| RhuidrError::io(path_str(path), e))?;
    let mut lines = Vec::new();
    let mut cursor = 0usize;
    for _ in 0..5 {
        let rest = &bytes[cursor..];
        let nl = rest
            .iter()
            .position(|b| *b == b'\n')
            .ok_or_else(|| RhuidrError::format(path_str(path), "truncated header"))?;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| RhuidrError::format(path_str(path), "non-utf8 header"))?;
        lines.push(line.to_string());
        cursor += nl + 1;
    }
    if lines[0] != CUBE_MAGIC {
        return Err(RhuidrError::format(
            path_str(path),
            format!("bad magic '{}'", lines[0]),
        ));
    }
    let parse_field = |line: &str, key: &str| -> Result<usize> {
        let rest = line.strip_prefix(key).and_then(|r| r.strip_prefix(' '));
        rest.and_then(|r| r.parse::<usize>().ok()).ok_or_else(|| {
            RhuidrError::format(path_str(path), format!("bad header line '{line}'"))
        })
    };
    let n1 = parse_field(&lines[1], "n1")?;
    let n2 = parse_field(&lines[2], "n2")?;
    let l = parse_field(&lines[3], "l")?;
    if lines[4] != format!("layout {CUBE_LAYOUT}") {
        return Err(RhuidrError::format(
            path_str(path),
            format!("unsupported layout '{}'", lines[4]),
        ));
    }
    let dims = Dims::cube(n1, n2, l)
        .map_err(|_| RhuidrError::format(path_str(path), "non-positive dimensions"))?;
    let expected_len = n1
        .checked_mul(n2)
        .and_then(|n| n.checked_mul(l))
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| RhuidrError::format(path_str(path), "dimension overflow"))?;
    let payload = &bytes[cursor..];
    if payload.len() != expected_len {
        return Err(RhuidrError::format(
            path_str(path),
            format!(
                "payload is {} bytes, expected {expected_len}",
                payload.len()
            ),
        ));
    }
    let n = dims.n();
    let mut data = Array2::zeros((l, n));
    for band in 0..l {
        for p in 0..n {
            let off = (band * n + p) * 8;
            let mut buf = [0u8; 8];
            buf.copy_from_slice(&payload[off..off + 8]);
            data[[band, p]] = f64::from_le_bytes(buf);
        }
    }
    HSCube::from_matrix(data, dims)
}

// ---------------------------------------------------------------------------
// CSV matrices
// ---------------------------------------------------------------------------

/// Writes a matrix as comma-separated rows using shortest-round-trip float
/// formatting.
pub fn write_matrix_csv(matrix: &Array2<f64>, path: &Path) -> Result<()> {
    let mut out = String::new();
    for row in matrix.rows() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| RhuidrError::io(path_str(path), e))
}

/// Reads a CSV matrix; rejects empty files, ragged rows, and non-finite
/// entries.
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path).map_err(|e| RhuidrError::io(path_str(path), e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                RhuidrError::format(
                    path_str(path),
                    format!("line {}: bad number '{field}'", lineno + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(RhuidrError::format(
                    path_str(path),
                    format!("line {}: non-finite entry", lineno + 1),
                ));
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(RhuidrError::format(
                    path_str(path),
                    format!(
                        "line {}: ragged row ({} fields, expected {})",
                        lineno + 1,
                        row.len(),
                        first.len()
                    ),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(RhuidrError::format(path_str(path), "empty matrix"));
    }
    let (r, c) = (rows.len(), rows[0].len());
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((r, c), flat)
        .map_err(|_| RhuidrError::format(path_str(path), "shape construction failed"))
}

// ---------------------------------------------------------------------------
// PGM export
// ---------------------------------------------------------------------------

/// Exports each abundance row as a 16-bit PGM image (`abundance_XYZ.pgm`)
/// under `out_dir`, plus a sidecar `abundance_scale.txt` recording the affine
/// map `pixel = round(value / max * 65535)` over `[0, max(A)]`.
pub fn export_abundance_pgm(
    a: &AbundanceMatrix,
    dims: &Dims,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    if a.data().ncols() != dims.n() {
        return Err(RhuidrError::ShapeMismatch {
            context: "export_abundance_pgm",
            expected: (a.data().nrows(), dims.n()),
            found: a.data().dim(),
        });
    }
    fs::create_dir_all(out_dir).map_err(|e| RhuidrError::io(path_str(out_dir), e))?;
    let max = a.data().iter().cloned().fold(0.0_f64, f64::max);
    let scale = if max > 0.0 { 65535.0 / max } else { 0.0 };
    let mut written = Vec::new();
    for (i, row) in a.data().rows().into_iter().enumerate() {
        let path = out_dir.join(format!("abundance_{i:03}.pgm"));
        let file = fs::File::create(&path).map_err(|e| RhuidrError::io(path_str(&path), e))?;
        let mut w = BufWriter::new(file);
        // PGM height = grid rows, width = grid columns; samples big-endian.
        write!(w, "P5\n{} {}\n65535\n", dims.n2, dims.n1)
            .map_err(|e| RhuidrError::io(path_str(&path), e))?;
        for r in 0..dims.n1 {
            for c in 0..dims.n2 {
                let v = row[c * dims.n1 + r];
                let pix = (v * scale).round().clamp(0.0, 65535.0) as u16;
                w.write_all(&pix.to_be_bytes())
                    .map_err(|e| RhuidrError::io(path_str(&path), e))?;
            }
        }
        w.flush().map_err(|e| RhuidrError::io(path_str(&path), e))?;
        written.push(path);
    }
    let sidecar = out_dir.join("abundance_scale.txt");
    let body = format!("max {max}\nmap pixel = round(value / max * 65535)\n");
    fs::write(&sidecar, body).map_err(|e| RhuidrError::io(path_str(&sidecar), e))?;
    written.push(sidecar);
    Ok(written)
}

/// Reads a 16-bit binary PGM written by [`export_abundance_pgm`].
pub fn read_pgm16(path: &Path) -> Result<Array2<u16>> {
    let bytes = fs::read(path).map_err(|e| RhuidrError::io(path_str(path), e))?;
    let mut cursor = 0usize;
    let mut next_line = || -> Result<String> {
        let rest = &bytes[cursor..];
        let nl = rest
            .iter()
            .position(|b| *b == b'\n')
            .ok_or_else(|| RhuidrError::format(path_str(path), "truncated pgm header"))?;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| RhuidrError::format(path_str(path), "non-utf8 pgm header"))?
            .to_string();
        cursor += nl + 1;
        Ok(line)
    };
    if next_line()? != "P5" {
        return Err(RhuidrError::format(path_str(path), "not a binary pgm"));
    }
    let dims_line = next_line()?;
    let mut it = dims_line.split_whitespace();
    let width: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| RhuidrError::format(path_str(path), "bad pgm size"))?;
    let height: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| RhuidrError::format(path_str(path), "bad pgm size"))?;
    if next_line()? != "65535" {
        return Err(RhuidrError::format(path_str(path), "expected 16-bit pgm"));
    }
    let payload = &bytes[cursor..];
    if payload.len() != width * height * 2 {
        return Err(RhuidrError::format(path_str(path), "bad pgm payload length"));
    }
    let mut out = Array2::zeros((height, width));
    for r in 0..height {
        for c in 0..width {
            let off = (r * width + c) * 2;
            out[[r, c]] = u16::from_be_bytes([payload[off], payload[off + 1]]);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Trace CSV
// ---------------------------------------------------------------------------

/// Writes the iteration trace with a `#`-prefixed header echoing every
/// numeric setting, so the file is self-describing.
pub fn write_trace_csv(
    result: &UnmixResult,
    cfg: &RhuidrConfig,
    echo: &[(String, String)],
    path: &Path,
) -> Result<()> {
    let mut out = String::from("# ");
    let mut fields: Vec<String> = vec![
        format!("reg={}", cfg.regularizer.as_str()),
        format!("lambda1={}", cfg.lambda1),
        format!("lambda2={}", cfg.lambda2),
        format!("lambda3={}", cfg.lambda3),
        format!("epsilon={}", cfg.epsilon),
        format!("eta={}", cfg.eta),
        format!("omega={}", cfg.omega),
        format!("max_iter={}", cfg.max_iter),
        format!("tol={}", cfg.tol),
        format!("stride={}", cfg.diagnostics_stride),
    ];
    for (k, v) in echo {
        fields.push(format!("{k}={v}"));
    }
    out.push_str(&fields.join(" "));
    out.push('\n');
    out.push_str("iter,rel_change,objective,fidelity_dist,s_l1,stripe_mav\n");
    for rec in &result.trace.records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            rec.iter, rec.rel_change, rec.objective, rec.fidelity_dist, rec.s_l1, rec.stripe_mav
        ));
    }
    fs::write(path, out).map_err(|e| RhuidrError::io(path_str(path), e))
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

fn default_smoothness() -> f64 {
    1.0
}
fn default_alpha_sigma() -> f64 {
    1.0
}
fn default_alpha_eta() -> f64 {
    0.9
}
fn default_lambda() -> f64 {
    0.05
}
fn default_lambda3() -> f64 {
    1.0
}
fn default_omega() -> f64 {
    0.05
}
fn default_max_iter() -> usize {
    50_000
}
fn default_tol() -> f64 {
    1e-5
}
fn default_stride() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSection {
    pub n1: usize,
    pub n2: usize,
    pub bands: usize,
    pub library_size: usize,
    /// Number of active endmembers.
    pub active: usize,
    #[serde(default = "default_smoothness")]
    pub smoothness: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DegradeSection {
    pub case: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveSection {
    pub regularizer: String,
    #[serde(default = "default_lambda")]
    pub lambda1: f64,
    #[serde(default = "default_lambda")]
    pub lambda2: f64,
    #[serde(default = "default_lambda3")]
    pub lambda3: f64,
    #[serde(default = "default_alpha_sigma")]
    pub alpha_sigma: f64,
    #[serde(default = "default_alpha_eta")]
    pub alpha_eta: f64,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Explicit fidelity radius; otherwise derived from the noise case.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Explicit sparse budget; otherwise derived from the noise case.
    #[serde(default)]
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LibrarySection {
    /// CSV file of spectra (bands x endmembers); generated when absent.
    pub path: PathBuf,
}

/// Everything that determines a run, byte for byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub scene: SceneSection,
    pub degrade: DegradeSection,
    pub solve: SolveSection,
    #[serde(default)]
    pub library: Option<LibrarySection>,
}

impl RunManifest {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text)
            .map_err(|e| RhuidrError::invalid(format!("manifest parse error: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| RhuidrError::io(path_str(path), e))?;
        Self::from_toml(&text)
    }
}

/// Outcome of a manifest run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub metrics: MetricReport,
    pub iterations: usize,
    pub termination: Termination,
    pub epsilon: f64,
    pub eta: f64,
    pub out_dir: PathBuf,
}

/// Executes the full pipeline described by a manifest: generate (or load) the
/// library, synthesize the scene, degrade it, unmix, score, and write every
/// artifact under `out_dir`. Identical manifests produce byte-identical
/// output trees.
pub fn run_manifest(manifest: &RunManifest) -> Result<RunSummary> {
    let scene_cfg = &manifest.scene;
    let seeds = derive_seeds(manifest.seed, 3);

    let library = match &manifest.library {
        Some(lib) => EndmemberLibrary::new(read_matrix_csv(&lib.path)?)?,
        None => gen_endmembers(scene_cfg.bands, scene_cfg.library_size, seeds[0])?,
    };
    if library.bands() != scene_cfg.bands {
        return Err(RhuidrError::invalid(format!(
            "library has {} bands, scene expects {}",
            library.bands(),
            scene_cfg.bands
        )));
    }
    let dims = Dims::new(scene_cfg.n1, scene_cfg.n2, scene_cfg.bands, library.len())?;
    let spec = SceneSpec::new(dims, scene_cfg.active, seeds[1])?
        .with_smoothness(scene_cfg.smoothness)?;
    let a_true = gen_abundance(&spec, library.len())?;
    let v_clean = clean_scene(&library, &a_true, dims)?;
    let degraded_scene = make_case(&v_clean, manifest.degrade.case, seeds[2])?;
    let case = &degraded_scene.case;

    let solve_cfg = &manifest.solve;
    let epsilon = match solve_cfg.epsilon {
        Some(e) => e,
        None => {
            if case.sigmas.is_empty() {
                default_epsilon_iid(
                    case.sigma.unwrap_or(0.0),
                    case.p_s,
                    &dims,
                    solve_cfg.alpha_sigma,
                )?
            } else {
                default_epsilon_noniid(&case.sigmas, case.p_s, &dims, solve_cfg.alpha_sigma)?
            }
        }
    };
    let eta = match solve_cfg.eta {
        Some(e) => e,
        None => default_eta(case.p_s, &dims, solve_cfg.alpha_eta)?.max(ETA_FLOOR),
    };

    let mut cfg = RhuidrConfig::new(epsilon, eta);
    cfg.lambda1 = solve_cfg.lambda1;
    cfg.lambda2 = solve_cfg.lambda2;
    cfg.lambda3 = solve_cfg.lambda3;
    cfg.regularizer = Regularizer::parse(&solve_cfg.regularizer)?;
    if cfg.regularizer == Regularizer::None {
        cfg.lambda2 = solve_cfg.lambda2;
    }
    cfg.omega = solve_cfg.omega;
    cfg.max_iter = solve_cfg.max_iter;
    cfg.tol = solve_cfg.tol;
    cfg.diagnostics_stride = solve_cfg.stride;
    cfg.validate()?;

    let result = unmix(&degraded_scene.degraded, &library, &cfg)?;

    // Score against the ground truth.
    let mut metrics = MetricReport::default();
    metrics.sre_db = Some(sre(a_true.data(), result.abundance.data())?);
    metrics.rmse = Some(rmse(a_true.data(), result.abundance.data())?);
    metrics.ps = Some(ps(a_true.data(), result.abundance.data(), PS_THRESHOLD)?);
    metrics.mpsnr_db = Some(mpsnr(&v_clean, &result.reconstructed)?);
    metrics.mssim = Some(mssim(&v_clean, &result.reconstructed)?);

    // Write the artifact tree.
    let out = &manifest.out_dir;
    fs::create_dir_all(out).map_err(|e| RhuidrError::io(path_str(out), e))?;
    write_matrix_csv(library.data(), &out.join("library.csv"))?;
    write_matrix_csv(a_true.data(), &out.join("abundance_true.csv"))?;
    write_cube(&v_clean, &out.join("clean.cube"))?;
    write_cube(&degraded_scene.degraded, &out.join("degraded.cube"))?;
    let as_cube = |m: &Array2<f64>| HSCube::from_matrix(m.clone(), dims);
    write_cube(&as_cube(&degraded_scene.gaussian)?, &out.join("gaussian_true.cube"))?;
    write_cube(&as_cube(&degraded_scene.sparse)?, &out.join("sparse_true.cube"))?;
    write_cube(&as_cube(&degraded_scene.stripe)?, &out.join("stripe_true.cube"))?;
    write_matrix_csv(result.abundance.data(), &out.join("abundance_est.csv"))?;
    write_cube(&as_cube(&result.noise.sparse)?, &out.join("sparse_est.cube"))?;
    write_cube(&as_cube(&result.noise.stripe)?, &out.join("stripe_est.cube"))?;
    write_cube(&result.reconstructed, &out.join("reconstructed.cube"))?;

    let echo = vec![
        ("seed".to_string(), manifest.seed.to_string()),
        ("case".to_string(), manifest.degrade.case.to_string()),
        ("n1".to_string(), dims.n1.to_string()),
        ("n2".to_string(), dims.n2.to_string()),
        ("bands".to_string(), dims.l.to_string()),
        ("library_size".to_string(), dims.m.to_string()),
        ("active".to_string(), scene_cfg.active.to_string()),
        ("smoothness".to_string(), format!("{}", scene_cfg.smoothness)),
        ("alpha_sigma".to_string(), format!("{}", solve_cfg.alpha_sigma)),
        ("alpha_eta".to_string(), format!("{}", solve_cfg.alpha_eta)),
    ];
    write_trace_csv(&result, &cfg, &echo, &out.join("trace.csv"))?;
    export_abundance_pgm(&result.abundance, &dims, &out.join("pgm"))?;

    let summary_line = format!(
        "{} iterations={} termination={}\n",
        metrics.to_kv_line(),
        result.trace.iterations,
        result.trace.termination.as_str()
    );
    fs::write(out.join("metrics.txt"), &summary_line)
        .map_err(|e| RhuidrError::io(&*path_str(&out.join("metrics.txt")), e))?;

    Ok(RunSummary {
        metrics,
        iterations: result.trace.iterations,
        termination: result.trace.termination,
        epsilon,
        eta,
        out_dir: out.clone(),
    })
}
