//! Scale-invariant dead-leaves images.
//!
//! cargo run --example dead_leaves -- [size] [seed]

use std::env;

use rosette::leaves::{generate_dead_leaves_with_discs, LeavesConfig};

fn main() -> rosette::Result<()> {
    let args: Vec<String> = env::args().skip(1).collect();
    let size: usize = args.first().map_or(256, |s| s.parse().unwrap());
    let seed: u64 = args.get(1).map_or(7, |s| s.parse().unwrap());

    let config = LeavesConfig::new(size, seed);
    let (image, discs) = generate_dead_leaves_with_discs(&config)?;
    let small = discs.iter().filter(|d| d.radius < 2.0 * config.r_min).count();
    println!(
        "{size}x{size} image from {} discs, radii in [{}, {}] with exponent {}; {:.1}% below {}",
        discs.len(),
        config.r_min,
        config.r_max,
        config.exponent,
        100.0 * small as f64 / discs.len() as f64,
        2.0 * config.r_min
    );
    let distinct: std::collections::BTreeSet<u16> = image.pixels().iter().copied().collect();
    println!("{} distinct grey levels visible", distinct.len());

    let path = env::temp_dir().join(format!("dead_leaves_{seed}.pgm"));
    image.save_pgm(&path)?;
    println!("written to {}", path.display());
    Ok(())
}
