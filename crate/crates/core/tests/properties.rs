use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rosette::infer::{best_fit, effect_size, hdi, ks_two_sample, McmcConfig};
use rosette::leaves::{generate_corpus, sample_radius, stream_rng, LeavesConfig};
use rosette::quality::{dct_sparsify, gaussian_filter, psnr};
use rosette::recon::{pseudo_inverse, ReconstructionMethod, DEFAULT_TOLERANCE};
use rosette::search::{probe_size_scan, ProbeScanConfig};

fn power_law_cdf(r: f64, a: f64, b: f64, alpha: f64) -> f64 {
    let k = 1.0 - alpha;
    (a.powf(k) - r.powf(k)) / (a.powf(k) - b.powf(k))
}

#[test]
fn leaf_radii_follow_the_truncated_power_law() {
    let (a, b) = (2.0, 128.0);
    for alpha in [2.0, 3.0, 4.0] {
        let mut radii: Vec<f64> = (0..1000).map(|s| sample_radius(&mut stream_rng(s, 0), a, b, alpha)).collect();
        radii.sort_by(f64::total_cmp);
        let n = radii.len() as f64;
        let d = radii
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let f = power_law_cdf(r, a, b, alpha);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 0.05, "alpha {alpha}: KS distance {d}");
    }
}

#[test]
fn pseudo_inverse_matches_an_independent_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for (r, c, k) in [(6, 9, 6), (12, 7, 3), (20, 20, 11)] {
        let b = DMatrix::from_fn(r, k, |_, _| rng.random_range(-1.0..1.0));
        let d = DMatrix::from_fn(k, c, |_, _| rng.random_range(-1.0..1.0));
        let a: DMatrix<f64> = b * d;
        let oracle = a.clone().pseudo_inverse(1e-9).unwrap();
        let data: Vec<f64> = (0..r).flat_map(|i| (0..c).map(move |j| (i, j))).map(|(i, j)| a[(i, j)]).collect();
        let ours = DMatrix::from_row_slice(c, r, &pseudo_inverse(r, c, &data, DEFAULT_TOLERANCE).unwrap());
        assert!((ours - oracle).abs().max() < 1e-9, "{r}x{c} rank {k}");
    }
}

#[test]
fn blur_makes_images_more_compressible() {
    let corpus = generate_corpus(&LeavesConfig::new(64, 41), 5).unwrap();
    for img in &corpus {
        let soft = gaussian_filter(img, 2.0).unwrap();
        let sharp_db = psnr(&dct_sparsify(img, 0.1).unwrap(), img).unwrap().psnr_db;
        let soft_db = psnr(&dct_sparsify(&soft, 0.1).unwrap(), &soft).unwrap().psnr_db;
        assert!(soft_db > sharp_db + 3.0, "blurred {soft_db} vs sharp {sharp_db}");
    }
}

#[test]
fn sparser_sampling_prefers_a_larger_probe() {
    let corpus = generate_corpus(&LeavesConfig::new(32, 52), 8).unwrap();
    let mut config = ProbeScanConfig::new(vec![0.5, 1.0, 2.0, 3.0, 4.0, 6.0], vec![0.05, 0.8], 32, 52);
    config.method = ReconstructionMethod::PlainPseudoinverse;
    let result = probe_size_scan(&config, &corpus).unwrap();
    assert!(result.best_radius(0) >= result.best_radius(1), "{:?}", result.mean_psnr);
}

fn groups(seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = (0..40).map(|_| 30.0 + 2.0 * (rng.random::<f64>() - 0.5)).collect();
    let b = (0..40).map(|_| 29.0 + 3.0 * (rng.random::<f64>() - 0.5)).collect();
    (a, b)
}

#[test]
fn effect_size_is_antisymmetric_and_shift_invariant() {
    let (a, b) = groups(61);
    let config = McmcConfig::with_seed(61);
    let forward = effect_size(&best_fit(&a, &b, &config).unwrap());
    let reverse: Vec<f64> = effect_size(&best_fit(&b, &a, &config).unwrap()).iter().map(|e| -e).collect();
    assert!(ks_two_sample(&forward, &reverse) < 0.05);

    let shift = |v: &[f64]| v.iter().map(|x| x + 100.0).collect::<Vec<_>>();
    let shifted = effect_size(&best_fit(&shift(&a), &shift(&b), &McmcConfig::with_seed(62)).unwrap());
    assert!(ks_two_sample(&forward, &shifted) < 0.05);

    let h = hdi(&forward, 0.95).unwrap();
    let r = hdi(&reverse, 0.95).unwrap();
    assert!((h.low - r.low).abs() < 0.1 && (h.high - r.high).abs() < 0.1, "{h:?} vs {r:?}");
}
