//! Fixed inputs shared by the benchmarks.

use coordscope::dataset::Dataset;
use coordscope::lp::{LinearProgram, Relation};
use coordscope::sim::{self, NetworkSpec};

/// Dense random-looking LP with `rows` packing constraints over `cols` variables.
pub fn packing_lp(rows: usize, cols: usize) -> LinearProgram {
    let coef = |r: usize, c: usize| 0.1 + ((r * 31 + c * 17) % 23) as f64 / 23.0;
    let mut lp = LinearProgram::new(cols).maximize((0..cols).map(|c| 1.0 + (c % 5) as f64).collect());
    for r in 0..rows {
        let terms: Vec<(usize, f64)> = (0..cols).map(|c| (c, coef(r, c))).collect();
        lp.add_sparse(&terms, Relation::Le, 10.0 + r as f64);
    }
    lp
}

/// Coordinated three-radar data.
pub fn coordinated(steps: usize, seed: u64) -> Dataset {
    sim::simulate(&NetworkSpec::tri_radar(), steps, seed).expect("simulation").0
}

/// Independently drawn three-agent data.
pub fn independent(steps: usize, seed: u64) -> Dataset {
    sim::simulate_independent(3, 2, steps, seed).expect("simulation")
}
