use rhuidr_core::metrics::sad;
use rhuidr_core::simulate::{derive_seeds, gen_endmembers};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2024);
    let seeds = derive_seeds(seed, 3);
    let e = gen_endmembers(16, 8, seeds[0]).unwrap();
    let mut min = f64::INFINITY;
    let mut max: f64 = 0.0;
    for i in 0..8 {
        for j in i + 1..8 {
            let a: Vec<f64> = e.data().column(i).to_vec();
            let b: Vec<f64> = e.data().column(j).to_vec();
            let s = sad(&a, &b).unwrap();
            min = min.min(s);
            max = max.max(s);
        }
    }
    println!("seed {seed}: SAD range [{min:.4}, {max:.4}] rad");
}
