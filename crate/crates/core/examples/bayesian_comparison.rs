//! Bayesian comparison of the PSNRs two rosette patterns achieve on the same corpus.
//!
//! cargo run --example bayesian_comparison -- [grid] [images]

use std::env;

use rosette::infer::{best_fit, effect_size, hdi, posterior_predictive_exceedance, McmcConfig};
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
    let corpus = generate_corpus(&LeavesConfig::new(grid, 99), count)?;

    let mut groups = Vec::new();
    for ((n, m), radius) in [((76, 37), 2.25), ((8, 99), 2.25)] {
        let samples = discretize_pattern(&rosette_locus(&RosettePattern::new(n, m, 0.04, rate)?), grid)?;
        let scores = corpus_psnrs(
            &samples,
            &rasterize_probe(radius)?,
            &corpus,
            ReconstructionMethod::PlainPseudoinverse,
            DEFAULT_TOLERANCE,
        )?;
        println!("({n}, {m}): mean PSNR {:.2} dB", scores.iter().sum::<f64>() / scores.len() as f64);
        groups.push(scores);
    }

    let post = best_fit(&groups[0], &groups[1], &McmcConfig { draws: 10_000, burn_in: 3_000, ..McmcConfig::with_seed(1) })?;
    let e = hdi(&effect_size(&post), 0.95)?;
    println!("effect size (76,37) - (8,99): 95% HDI [{:.3}, {:.3}]", e.low, e.high);
    println!("max split R-hat {:.4}, converged: {}", post.max_r_hat(), post.converged);
    println!("P(a (76,37) image beats an (8,99) image) = {:.3}", posterior_predictive_exceedance(&post, 1)?);
    Ok(())
}
