//! How often a focal-plane array of a given size beats the rosette imager.
//!
//! cargo run --example fpa_sweep -- [grid] [images]

use std::env;

use rosette::infer::{fpa_outperform_sweep, McmcConfig};
use rosette::leaves::{generate_corpus, LeavesConfig};
use rosette::recon::{ReconstructionMethod, DEFAULT_TOLERANCE};
use rosette::scan::{discretize_pattern, rosette_locus, RosettePattern};
use rosette::search::corpus_psnrs;
use rosette::sense::rasterize_probe;

fn main() -> rosette::Result<()> {
    let args: Vec<String> = env::args().skip(1).collect();
    let grid: usize = args.first().map_or(48, |s| s.parse().unwrap());
    let count: usize = args.get(1).map_or(40, |s| s.parse().unwrap());
    let rate = 510_000.0 * (grid as f64 / 256.0).powi(2);
    let corpus = generate_corpus(&LeavesConfig::new(grid, 5), count)?;

    let samples = discretize_pattern(&rosette_locus(&RosettePattern::new(8, 99, 0.04, rate)?), grid)?;
    let rosette =
        corpus_psnrs(&samples, &rasterize_probe(2.25)?, &corpus, ReconstructionMethod::PlainPseudoinverse, DEFAULT_TOLERANCE)?;
    println!("rosette mean PSNR {:.2} dB", rosette.iter().sum::<f64>() / rosette.len() as f64);

    let sizes: Vec<usize> = [0.3, 0.4, 0.45, 0.5, 0.6, 0.8].iter().map(|f| (f * grid as f64).round() as usize).collect();
    let config = McmcConfig { draws: 5_000, burn_in: 2_000, ..McmcConfig::with_seed(3) };
    for p in fpa_outperform_sweep(&rosette, &corpus, &sizes, &config)? {
        println!("FPA {0:>3}x{0:<3} mean {1:6.2} dB  P(FPA better) = {2:.3}", p.fpa_size, p.mean_fpa_psnr, p.probability);
    }
    Ok(())
}
