//! Desk-scale calibration run: builds the seeded 32x32x16 scene, degrades it
//! with the stripes-plus-impulse case, and prints trajectory snapshots
//! (constraint residuals and abundance SRE) for a grid of lambda settings.
//!
//! Usage: cargo run --release -p rhuidr-core --example calibrate [l1] [l2] [max_iter]

use ndarray::Array2;
use rhuidr_core::linops::frobenius_norm;
use rhuidr_core::metrics::{mpsnr, mssim, sre};
use rhuidr_core::simulate::{clean_scene, derive_seeds, gen_abundance, gen_endmembers, make_case,
    SceneSpec};
use rhuidr_core::solver::{compute_stepsizes, relative_change, solve, PrimalId, SolveInit,
    SolveOptions, StopRule};
use rhuidr_core::types::{Dims, EndmemberLibrary, HSCube};
use rhuidr_core::unmix::{build_problem, default_epsilon_iid, default_eta, diagnostics_record,
    RhuidrConfig};

fn lstsq_baseline(e: &EndmemberLibrary, v: &HSCube) -> Array2<f64> {
    let et = e.data().t();
    let mut ata = et.dot(e.data()); // m x m
    let atv = et.dot(v.data()); // m x n
    let m = ata.nrows();
    let n = atv.ncols();
    let mut rhs = atv.clone();
    // Gaussian elimination with partial pivoting.
    for col in 0..m {
        let mut piv = col;
        for r in col + 1..m {
            if ata[[r, col]].abs() > ata[[piv, col]].abs() {
                piv = r;
            }
        }
        for j in 0..m {
            let tmp = ata[[col, j]];
            ata[[col, j]] = ata[[piv, j]];
            ata[[piv, j]] = tmp;
        }
        for j in 0..n {
            let tmp = rhs[[col, j]];
            rhs[[col, j]] = rhs[[piv, j]];
            rhs[[piv, j]] = tmp;
        }
        let d = ata[[col, col]];
        for r in 0..m {
            if r == col {
                continue;
            }
            let f = ata[[r, col]] / d;
            for j in 0..m {
                ata[[r, j]] -= f * ata[[col, j]];
            }
            for j in 0..n {
                rhs[[r, j]] -= f * rhs[[col, j]];
            }
        }
    }
    for r in 0..m {
        let d = ata[[r, r]];
        for j in 0..n {
            rhs[[r, j]] /= d;
        }
    }
    rhs.mapv(|x| x.max(0.0))
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let l1: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let l2: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let max_iter: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(50_000);
    let tol: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1e-5);
    let seed_arg: u64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(2024);
    let alpha_sigma: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(1.0);

    let dims = Dims::new(32, 32, 16, 8).unwrap();
    let seed = seed_arg;
    let seeds = derive_seeds(seed, 3);
    let e = gen_endmembers(16, 8, seeds[0]).unwrap();
    let spec = SceneSpec::new(dims, 3, seeds[1]).unwrap();
    let a_true = gen_abundance(&spec, 8).unwrap();
    let v_clean = clean_scene(&e, &a_true, dims).unwrap();
    let scene = make_case(&v_clean, 5, seeds[2]).unwrap();
    let v = &scene.degraded;

    let epsilon = default_epsilon_iid(0.05, 0.05, &dims, alpha_sigma).unwrap();
    let eta = default_eta(0.05, &dims, 0.9).unwrap();
    println!("epsilon={epsilon:.4} eta={eta:.2} ||V||_F={:.3}", frobenius_norm(v.data()));

    let baseline = lstsq_baseline(&e, v);
    println!(
        "baseline lstsq-clipped SRE = {:.3} dB",
        sre(a_true.data(), &baseline).unwrap()
    );

    let mut cfg = RhuidrConfig::new(epsilon, eta);
    cfg.lambda1 = l1;
    cfg.lambda2 = l2;
    cfg.max_iter = max_iter;
    cfg.tol = tol;
    println!("lambda1={l1} lambda2={l2} max_iter={max_iter} tol={tol} seed={seed_arg}");

    let problem = build_problem(v, &e, &cfg).unwrap();
    let steps = compute_stepsizes(&problem).unwrap();
    println!("gamma1 = {:?}", steps.gamma1);

    let hook = |state: &rhuidr_core::solver::SolveState| -> Vec<f64> {
        let rec = diagnostics_record(v, &e, &cfg, &state.primal[0], &state.primal[1], &state.primal[2])
            .unwrap();
        let s = sre(a_true.data(), &state.primal[0]).unwrap_or(f64::NAN);
        vec![rec.objective, rec.fidelity_dist, rec.s_l1, rec.stripe_mav, s]
    };
    let options = SolveOptions {
        stop: StopRule {
            max_iter: cfg.max_iter,
            tol: cfg.tol,
        },
        stop_fn: Box::new(relative_change(PrimalId(0))),
        diagnostics_stride: 1000,
        diagnostics: Some(Box::new(hook)),
    };
    let t0 = std::time::Instant::now();
    let sol = solve(&problem, &steps, SolveInit::default(), options).unwrap();
    let dt = t0.elapsed();
    println!("iters={} wall={:.2?} per-iter={:.1?}us", sol.trace.iterations, dt,
        dt.as_micros() as f64 / sol.trace.iterations as f64);

    for (it, d) in &sol.trace.diagnostics {
        println!(
            "iter {it:6}  obj={:9.3} fid={:8.4} s_l1={:8.2} mav={:9.2e} SRE={:6.2} rel={:8.2e}",
            d[0], d[1], d[2], d[3], d[4], sol.trace.rel_change[it - 1]
        );
    }

    let a_est = &sol.primal[0];
    let rec = HSCube::from_matrix(e.data().dot(a_est), dims).unwrap();
    println!(
        "final: SRE={:.3} dB  MPSNR={:.2} dB  MSSIM={:.4}",
        sre(a_true.data(), a_est).unwrap(),
        mpsnr(&v_clean, &rec).unwrap(),
        mssim(&v_clean, &rec).unwrap()
    );
    println!(
        "constraints: fid={:.4} (eps {epsilon:.4})  s_l1={:.2} (eta {eta:.2})  mav(DvL)={:.3e} mav(L)={:.3e}",
        frobenius_norm(&(v.data() - &e.data().dot(a_est) - &sol.primal[1] - &sol.primal[2])),
        sol.primal[1].iter().map(|x| x.abs()).sum::<f64>(),
        rhuidr_core::linops::diff_v(&sol.primal[2], &dims).unwrap().iter().map(|x| x.abs()).sum::<f64>()
            / (dims.l * dims.n()) as f64,
        sol.primal[2].iter().map(|x| x.abs()).sum::<f64>() / (dims.l * dims.n()) as f64,
    );
}
