//! PSNR of DCT sparsification, Gaussian blur and focal-plane-array simulation on one image.

use rosette::leaves::{generate_dead_leaves, LeavesConfig};
use rosette::quality::{fpa_simulate, gaussian_filter, keep_fraction_to_cap, psnr, psnr_cap, DctSparsifier};

fn main() -> rosette::Result<()> {
    let image = generate_dead_leaves(&LeavesConfig::new(128, 5))?;
    println!("PSNR cap at 16 bits: {:.4} dB", psnr_cap(16));

    let sparse = DctSparsifier::new(&image)?;
    for keep in [0.01, 0.05, 0.1, 0.25, 0.5, 1.0] {
        println!("keep {keep:>5}: {:.2} dB", psnr(&sparse.at_fraction(keep)?, &image)?.psnr_db);
    }
    println!("fraction of coefficients needed for the cap: {:.4}", keep_fraction_to_cap(&image)?);

    for sigma in [0.5, 1.0, 2.0, 4.0] {
        let blurred = gaussian_filter(&image, sigma)?;
        println!("sigma {sigma}: {:.2} dB, sparsity {:.4}", psnr(&blurred, &image)?.psnr_db, keep_fraction_to_cap(&blurred)?);
    }
    for size in [16, 32, 57, 64, 96, 128] {
        println!("FPA {size}x{size}: {:.2} dB", psnr(&fpa_simulate(&image, size)?, &image)?.psnr_db);
    }
    Ok(())
}
