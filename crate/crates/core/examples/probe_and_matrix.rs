//! Probe rasterization and the sparse measurement matrix of one rosette frame.

use std::env;
use std::fs::File;

use rosette::scan::{discretize_pattern, rosette_locus, RosettePattern};
use rosette::sense::{build_measurement_matrix, rasterize_probe, rasterize_probe_with, CoverageMethod};

fn main() -> rosette::Result<()> {
    let probe = rasterize_probe(2.25)?;
    println!("radius 2.25 probe, {0}x{0} patch, weight sum {1:.6}:", probe.side(), probe.weight_sum());
    for row in probe.weights().chunks(probe.side()) {
        println!("  {}", row.iter().map(|w| format!("{w:.3}")).collect::<Vec<_>>().join(" "));
    }
    let rough = rasterize_probe_with(2.25, CoverageMethod::Supersampled(8))?;
    let worst = probe.weights().iter().zip(rough.weights()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("8x8 supersampling differs from exact coverage by at most {worst:.4}");

    let pattern = RosettePattern::new(8, 99, 0.04, 510_000.0)?;
    let samples = discretize_pattern(&rosette_locus(&pattern), 256)?;
    let matrix = build_measurement_matrix(&samples, &probe)?;
    println!("measurement matrix {} x {}, {} nonzeros", matrix.rows(), matrix.cols(), matrix.nnz());

    let path = env::temp_dir().join("rosette_8_99.rcsm");
    matrix.write_to(File::create(&path)?)?;
    println!("written to {} (content hash {})", path.display(), &matrix.content_hash()[..16]);
    Ok(())
}
