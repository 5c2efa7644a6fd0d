//! Measure dead-leaves images through a rosette and reconstruct them with both operators.
//!
//! The detector rate is scaled with the grid area so the sample fraction matches the
//! 256x256, 510 kHz design.
//!
//! cargo run --example reconstruct -- [grid]

use std::env;

use rosette::leaves::{generate_corpus, LeavesConfig};
use rosette::quality::psnr;
use rosette::recon::{build_reconstruction_matrix, ReconstructionMethod, DEFAULT_TOLERANCE};
use rosette::scan::{discretize_pattern, rosette_locus, RosettePattern};
use rosette::sense::{build_measurement_matrix, measure, rasterize_probe};

fn main() -> rosette::Result<()> {
    let grid: usize = env::args().nth(1).map_or(64, |s| s.parse().expect("grid size"));
    let rate = 510_000.0 * (grid as f64 / 256.0).powi(2);
    let pattern = RosettePattern::new(8, 99, 0.04, rate)?;
    let samples = discretize_pattern(&rosette_locus(&pattern), grid)?;
    let matrix = build_measurement_matrix(&samples, &rasterize_probe(2.25)?)?;
    println!(
        "{grid}x{grid} grid, {} samples ({:.1}% of pixels)",
        matrix.rows(),
        100.0 * matrix.rows() as f64 / (grid * grid) as f64
    );

    let corpus = generate_corpus(&LeavesConfig::new(grid, 2024), 10)?;
    for method in [ReconstructionMethod::PlainPseudoinverse, ReconstructionMethod::FrequencyWeighted] {
        let p = build_reconstruction_matrix(&matrix, method, DEFAULT_TOLERANCE)?;
        let mut scores = Vec::new();
        for img in &corpus {
            let rec = p.reconstruct(&measure(&matrix, img)?, img.bit_depth())?;
            scores.push(psnr(&rec, img)?.psnr_db);
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        println!("{:>20}: mean PSNR {mean:.2} dB over {} images", method.name(), scores.len());
        if method == ReconstructionMethod::PlainPseudoinverse {
            let path = env::temp_dir().join("rosette_reconstruction.pgm");
            p.reconstruct(&measure(&matrix, &corpus[0])?, 16)?.save_pgm(&path)?;
            corpus[0].save_pgm(env::temp_dir().join("rosette_original.pgm"))?;
            println!("first reconstruction written to {}", path.display());
        }
    }
    Ok(())
}
