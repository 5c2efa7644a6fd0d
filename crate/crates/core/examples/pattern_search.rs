//! Coverage search over rosette integers and frequency-bounded ranking.
//!
//! cargo run --example pattern_search -- [max_integer] [grid]

use std::env;

use rosette::search::{filter_patterns, pattern_coverage_search, CoverageConfig};

fn main() -> rosette::Result<()> {
    let args: Vec<String> = env::args().skip(1).collect();
    let top: u32 = args.first().map_or(40, |s| s.parse().unwrap());
    let grid: usize = args.get(1).map_or(128, |s| s.parse().unwrap());
    let config = CoverageConfig { grid_size: grid, sample_rate: 510_000.0 * (grid as f64 / 256.0).powi(2), ..Default::default() };

    let result = pattern_coverage_search(1..=top, 1..=top, 2.25, &config)?;
    println!("{} patterns searched, {} degenerate pairs skipped", result.entries.len(), result.invalid.len());
    for bound in [2500.0, 1000.0, 500.0] {
        let ranked = filter_patterns(&result, bound)?;
        println!("below {bound} Hz ({} patterns):", ranked.len());
        for e in ranked.iter().take(3) {
            println!(
                "  ({:>2}, {:>2})  f = ({:>6}, {:>6}) Hz  {} of {} pixels covered",
                e.n,
                e.m,
                e.f1,
                e.f2,
                e.nonzero_bins,
                grid * grid
            );
        }
    }
    let path = env::temp_dir().join("rosette_coverage_map.pgm");
    result.coverage_map()?.save_pgm(&path)?;
    println!("coverage map written to {}", path.display());
    Ok(())
}
