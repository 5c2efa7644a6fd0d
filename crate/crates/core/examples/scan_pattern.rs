//! Rosette locus, rotation frequencies and discretization onto the image grid.
//!
//! cargo run --example scan_pattern -- [n] [m]

use std::env;

use rosette::scan::{discretize_pattern, rosette_locus, RosettePattern, IMAGING_SIDE};

fn main() -> rosette::Result<()> {
    let args: Vec<u32> = env::args().skip(1).map(|a| a.parse().expect("integer pattern parameter")).collect();
    let (n, m) = (args.first().copied().unwrap_or(8), args.get(1).copied().unwrap_or(99));

    let pattern = RosettePattern::new(n, m, 0.04, 510_000.0)?;
    let locus = rosette_locus(&pattern);
    println!("pattern ({n}, {m}): f1 = {} Hz, f2 = {} Hz", pattern.f1, pattern.f2);
    println!("{} samples per {} s frame, max radius {:.6}", locus.len(), pattern.period, locus.max_radius());

    let samples = discretize_pattern(&locus, 256)?;
    println!(
        "{} samples fall in the {:.4} wide imaging square ({:.1}%), {} distinct pixels",
        samples.in_bounds_count,
        IMAGING_SIDE,
        100.0 * samples.in_square_fraction(),
        samples.unique_positions()
    );

    let path = env::temp_dir().join(format!("rosette_{n}_{m}.pgm"));
    samples.density_image().save_pgm(&path)?;
    println!("sample density written to {}", path.display());
    Ok(())
}
