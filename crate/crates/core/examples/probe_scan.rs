//! Mean PSNR versus probe radius for random sampling on a dead-leaves corpus.
//!
//! cargo run --example probe_scan -- [grid] [images] [fraction] [radius,radius,...] [plain|frequency_weighted]

use std::env;

use rosette::leaves::{generate_corpus, LeavesConfig};
use rosette::search::{probe_size_scan, ProbeScanConfig};

fn main() -> rosette::Result<()> {
    let args: Vec<String> = env::args().skip(1).collect();
    let grid: usize = args.first().map_or(64, |s| s.parse().unwrap());
    let count: usize = args.get(1).map_or(20, |s| s.parse().unwrap());
    let fraction: f64 = args.get(2).map_or(0.197, |s| s.parse().unwrap());

    let corpus = generate_corpus(&LeavesConfig::new(grid, 11), count)?;
    let radii: Vec<f64> = match args.get(3) {
        Some(list) => list.split(',').map(|r| r.parse().unwrap()).collect(),
        None => vec![0.5, 1.0, 1.5, 2.0, 2.25, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0],
    };
    let mut config = ProbeScanConfig::new(radii, vec![fraction], grid, 11);
    if let Some(method) = args.get(4) {
        config.method = method.parse()?;
    }
    let result = probe_size_scan(&config, &corpus)?;

    print!("{}", result.to_csv());
    println!("best radius {} (interior maximum: {})", result.best_radius(0), result.has_interior_maximum(0));
    Ok(())
}
