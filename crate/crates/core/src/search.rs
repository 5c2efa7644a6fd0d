//! Probe-size and scan-pattern optimization.

use std::ops::RangeInclusive;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::leaves::stream_rng;
use crate::quality::psnr;
use crate::raster::ImageGrid;
use crate::recon::{build_reconstructor, ReconstructionMethod, DEFAULT_TOLERANCE};
use crate::scan::{discretize_pattern, rosette_locus, RosettePattern, SampleGrid};
use crate::sense::{build_measurement_matrix, measure, rasterize_probe, Probe};

/// Settings of the greedy probe-radius / sample-fraction scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeScanConfig {
    pub radii: Vec<f64>,
    pub fractions: Vec<f64>,
    pub grid_size: usize,
    pub seed: u64,
    /// Independent position draws averaged per cell.
    pub replicates: usize,
    pub with_replacement: bool,
    pub method: ReconstructionMethod,
    pub tolerance: f64,
    pub corpus_id: String,
}

impl ProbeScanConfig {
    pub fn new(radii: Vec<f64>, fractions: Vec<f64>, grid_size: usize, seed: u64) -> Self {
        Self {
            radii,
            fractions,
            grid_size,
            seed,
            replicates: 1,
            with_replacement: true,
            method: ReconstructionMethod::PlainPseudoinverse,
            tolerance: DEFAULT_TOLERANCE,
            corpus_id: String::new(),
        }
    }
}

/// Mean PSNR for every `(fraction, radius)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeScanResult {
    pub radii: Vec<f64>,
    pub fractions: Vec<f64>,
    /// `mean_psnr[f][r]` for fraction index `f` and radius index `r`.
    pub mean_psnr: Vec<Vec<f64>>,
    pub corpus_id: String,
    pub replicates: usize,
    pub corpus_size: usize,
}

impl ProbeScanResult {
    /// Radius with the highest mean PSNR at fraction index `f` (first one on ties).
    pub fn best_radius(&self, f: usize) -> f64 {
        let row = &self.mean_psnr[f];
        let mut best = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        self.radii[best]
    }

    /// True when the best radius at fraction index `f` is neither the first nor the last scanned.
    pub fn has_interior_maximum(&self, f: usize) -> bool {
        let row = &self.mean_psnr[f];
        let best = self.radii.iter().position(|&r| r == self.best_radius(f)).unwrap();
        best > 0 && best + 1 < row.len() && row[best] > row[0] && row[best] > row[row.len() - 1]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("fraction,radius,mean_psnr_db\n");
        for (f, row) in self.fractions.iter().zip(&self.mean_psnr) {
            for (r, v) in self.radii.iter().zip(row) {
                out.push_str(&format!("{f},{r},{v}\n"));
            }
        }
        out
    }
}

/// `⌈fraction · grid_size²⌉` uniform pixel positions.
pub fn random_positions<R: Rng + ?Sized>(
    rng: &mut R,
    grid_size: usize,
    fraction: f64,
    with_replacement: bool,
) -> Result<Vec<(u32, u32)>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(domain(format!("sample fraction must lie in (0, 1], got {fraction}")));
    }
    let pixels = grid_size * grid_size;
    let count = crate::quality::kept_count(fraction, pixels);
    let to_rc = |i: usize| ((i / grid_size) as u32, (i % grid_size) as u32);
    Ok(if with_replacement {
        (0..count).map(|_| to_rc(rng.random_range(0..pixels))).collect()
    } else {
        rand::seq::index::sample(rng, pixels, count).into_iter().map(to_rc).collect()
    })
}

/// Mean PSNR of reconstructing every corpus image through one sampling layout.
pub fn corpus_mean_psnr(
    samples: &SampleGrid,
    probe: &Probe,
    corpus: &[ImageGrid],
    method: ReconstructionMethod,
    tolerance: f64,
) -> Result<f64> {
    Ok(corpus_psnrs(samples, probe, corpus, method, tolerance)?.iter().sum::<f64>() / corpus.len() as f64)
}

/// Per-image PSNRs of reconstructing `corpus` through one sampling layout.
pub fn corpus_psnrs(
    samples: &SampleGrid,
    probe: &Probe,
    corpus: &[ImageGrid],
    method: ReconstructionMethod,
    tolerance: f64,
) -> Result<Vec<f64>> {
    if corpus.is_empty() {
        return Err(Error::Empty("image corpus"));
    }
    let m = build_measurement_matrix(samples, probe)?;
    let p = build_reconstructor(&m, method, tolerance)?;
    corpus
        .par_iter()
        .map(|img| {
            let v = measure(&m, img)?;
            let rec = p.reconstruct(&v, img.bit_depth())?;
            Ok(psnr(&rec, img)?.psnr_db)
        })
        .collect()
}

/// Greedy scan over probe radii and random-sample fractions.
///
/// Positions for a fraction are drawn once per replicate and shared by all radii,
/// so radius comparisons within a fraction see the same layout.
pub fn probe_size_scan(config: &ProbeScanConfig, corpus: &[ImageGrid]) -> Result<ProbeScanResult> {
    if config.radii.is_empty() || config.fractions.is_empty() {
        return Err(Error::Empty("radius or fraction list"));
    }
    if corpus.is_empty() {
        return Err(Error::Empty("image corpus"));
    }
    if config.replicates == 0 {
        return Err(domain("replicate count must be positive"));
    }
    if let Some(img) = corpus.iter().find(|i| i.width() != config.grid_size || !i.is_square()) {
        return Err(crate::error::shape(format!("{0}x{0}", config.grid_size), format!("{}x{}", img.width(), img.height())));
    }
    let probes = config.radii.iter().map(|&r| rasterize_probe(r)).collect::<Result<Vec<_>>>()?;
    let mut mean_psnr = Vec::with_capacity(config.fractions.len());
    for (fi, &fraction) in config.fractions.iter().enumerate() {
        let mut row = vec![0.0; probes.len()];
        for rep in 0..config.replicates {
            let mut rng = stream_rng(config.seed, (rep * config.fractions.len() + fi) as u64);
            let positions = random_positions(&mut rng, config.grid_size, fraction, config.with_replacement)?;
            let samples = SampleGrid::from_positions(config.grid_size, positions)?;
            for (slot, probe) in row.iter_mut().zip(&probes) {
                *slot += corpus_mean_psnr(&samples, probe, corpus, config.method, config.tolerance)?;
            }
            log::info!("fraction {fraction}: replicate {} done", rep + 1);
        }
        mean_psnr.push(row.into_iter().map(|s| s / config.replicates as f64).collect());
    }
    Ok(ProbeScanResult {
        radii: config.radii.clone(),
        fractions: config.fractions.clone(),
        mean_psnr,
        corpus_id: config.corpus_id.clone(),
        replicates: config.replicates,
        corpus_size: corpus.len(),
    })
}

/// Coverage of one `(n, m)` rosette.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageEntry {
    pub n: u32,
    pub m: u32,
    pub f1: f64,
    pub f2: f64,
    pub in_bounds: usize,
    pub nonzero_bins: usize,
    /// Mean stamped mass per nonzero bin.
    pub mean_bin_mass: f64,
}

impl CoverageEntry {
    pub fn max_rotation_hz(&self) -> f64 {
        self.f1.abs().max(self.f2.abs())
    }
}

/// Settings shared by every pattern of a coverage search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageConfig {
    pub grid_size: usize,
    pub period: f64,
    pub sample_rate: f64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self { grid_size: 256, period: 0.04, sample_rate: 510_000.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageResult {
    pub grid_size: usize,
    pub n_range: RangeInclusive<u32>,
    pub m_range: RangeInclusive<u32>,
    /// Valid patterns in `(n, m)` lexicographic order.
    pub entries: Vec<CoverageEntry>,
    /// Skipped pairs (`n = m` or a zero integer).
    pub invalid: Vec<(u32, u32)>,
}

impl CoverageResult {
    pub fn get(&self, n: u32, m: u32) -> Option<&CoverageEntry> {
        self.entries.iter().find(|e| e.n == n && e.m == m)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,m,f1,f2,in_bounds,nonzero_bins\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{},{},{},{}\n", e.n, e.m, e.f1, e.f2, e.in_bounds, e.nonzero_bins));
        }
        out
    }

    /// 16-bit map with rows indexed by `n` and columns by `m`, scaled so full coverage is white.
    /// Invalid cells are black.
    pub fn coverage_map(&self) -> Result<ImageGrid> {
        let (n0, m0) = (*self.n_range.start(), *self.m_range.start());
        let rows = (self.n_range.end() - n0 + 1) as usize;
        let cols = (self.m_range.end() - m0 + 1) as usize;
        let full = (self.grid_size * self.grid_size) as f64;
        let mut values = vec![0.0; rows * cols];
        for e in &self.entries {
            values[(e.n - n0) as usize * cols + (e.m - m0) as usize] = 65535.0 * e.nonzero_bins as f64 / full;
        }
        ImageGrid::from_real(cols, rows, 16, &values)
    }
}

/// Stamps the probe at every sample of one frame and counts touched pixels.
pub fn pattern_coverage(pattern: &RosettePattern, probe: &Probe, grid_size: usize) -> Result<CoverageEntry> {
    let samples = discretize_pattern(&rosette_locus(pattern), grid_size)?;
    let (nonzero_bins, mass) = stamp_histogram(&samples, probe);
    Ok(CoverageEntry {
        n: pattern.n,
        m: pattern.m,
        f1: pattern.f1,
        f2: pattern.f2,
        in_bounds: samples.in_bounds_count,
        nonzero_bins,
        mean_bin_mass: if nonzero_bins == 0 { 0.0 } else { mass / nonzero_bins as f64 },
    })
}

/// Nonzero bin count and total in-grid mass of the fractional probe histogram.
pub fn stamp_histogram(samples: &SampleGrid, probe: &Probe) -> (usize, f64) {
    let n = samples.grid_size as i64;
    let footprint = probe.footprint();
    let mut hist = vec![0.0f64; (n * n) as usize];
    for &(r, c) in &samples.positions {
        for &(dr, dc, w) in &footprint {
            let (rr, cc) = (r as i64 + dr as i64, c as i64 + dc as i64);
            if rr >= 0 && cc >= 0 && rr < n && cc < n {
                hist[(rr * n + cc) as usize] += w;
            }
        }
    }
    let nonzero = hist.iter().filter(|&&v| v > 0.0).count();
    (nonzero, hist.iter().sum())
}

/// Coverage of every `(n, m)` pair in the two ranges.
pub fn pattern_coverage_search(
    n_range: RangeInclusive<u32>,
    m_range: RangeInclusive<u32>,
    radius: f64,
    config: &CoverageConfig,
) -> Result<CoverageResult> {
    if n_range.is_empty() || m_range.is_empty() {
        return Err(Error::Empty("pattern range"));
    }
    let probe = rasterize_probe(radius)?;
    let pairs: Vec<(u32, u32)> = n_range.clone().flat_map(|n| m_range.clone().map(move |m| (n, m))).collect();
    let cells: Vec<Result<Option<CoverageEntry>>> = pairs
        .par_iter()
        .map(|&(n, m)| {
            if n == m || n == 0 || m == 0 {
                return Ok(None);
            }
            let pattern = RosettePattern::new(n, m, config.period, config.sample_rate)?;
            pattern_coverage(&pattern, &probe, config.grid_size).map(Some)
        })
        .collect();
    let mut entries = Vec::new();
    let mut invalid = Vec::new();
    for (&pair, cell) in pairs.iter().zip(cells) {
        match cell? {
            Some(e) => entries.push(e),
            None => invalid.push(pair),
        }
    }
    Ok(CoverageResult { grid_size: config.grid_size, n_range, m_range, entries, invalid })
}

/// Patterns whose rotation frequencies both stay within `max_abs_rotation_hz`, best first.
///
/// Ranked by nonzero bins descending, then lower peak rotation frequency, then `(n, m)`.
pub fn filter_patterns(result: &CoverageResult, max_abs_rotation_hz: f64) -> Result<Vec<CoverageEntry>> {
    if !(max_abs_rotation_hz > 0.0) {
        return Err(domain(format!("frequency bound must be positive, got {max_abs_rotation_hz}")));
    }
    if result.entries.is_empty() {
        return Err(Error::Empty("coverage result"));
    }
    // m / T lands a few ulps off the integer bound
    let bound = max_abs_rotation_hz * (1.0 + 1e-12);
    let mut kept: Vec<CoverageEntry> =
        result.entries.iter().copied().filter(|e| e.f1.abs() <= bound && e.f2.abs() <= bound).collect();
    kept.sort_by(|a, b| {
        b.nonzero_bins
            .cmp(&a.nonzero_bins)
            .then(a.max_rotation_hz().total_cmp(&b.max_rotation_hz()))
            .then((a.n, a.m).cmp(&(b.n, b.m)))
    });
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leaves::{generate_corpus, LeavesConfig};
    use crate::quality::psnr_cap;

    #[test]
    fn reference_coverage_counts() {
        let probe = rasterize_probe(2.25).unwrap();
        for (n, m, bins, samples) in [(8, 99, 65450.0, 11966.0), (76, 37, 64383.0, f64::NAN)] {
            let p = RosettePattern::new(n, m, 0.04, 510_000.0).unwrap();
            let e = pattern_coverage(&p, &probe, 256).unwrap();
            assert!((e.nonzero_bins as f64 / bins - 1.0).abs() < 0.01, "({n},{m}) {}", e.nonzero_bins);
            if samples.is_finite() {
                assert!((e.in_bounds as f64 / samples - 1.0).abs() < 0.01);
            }
        }
    }

    #[test]
    fn saturating_probe_fills_grid() {
        let p = RosettePattern::new(8, 99, 0.04, 510_000.0).unwrap();
        let e = pattern_coverage(&p, &rasterize_probe(400.0).unwrap(), 256).unwrap();
        assert_eq!(e.nonzero_bins, 65536);
    }

    #[test]
    fn stamping_is_order_invariant_and_monotone_in_radius() {
        let p = RosettePattern::new(11, 4, 0.04, 51_000.0).unwrap();
        let mut samples = discretize_pattern(&rosette_locus(&p), 64).unwrap();
        let probe = rasterize_probe(1.5).unwrap();
        let forward = stamp_histogram(&samples, &probe).0;
        samples.positions.reverse();
        assert_eq!(stamp_histogram(&samples, &probe).0, forward);
        let mut last = 0;
        for r in [0.3, 0.6, 1.0, 1.5, 2.25, 3.0, 5.0] {
            let bins = stamp_histogram(&samples, &rasterize_probe(r).unwrap()).0;
            assert!(bins >= last);
            last = bins;
        }
    }

    #[test]
    fn search_skips_degenerate_pairs_and_filters() {
        let config = CoverageConfig { grid_size: 32, period: 0.04, sample_rate: 51_000.0 };
        let res = pattern_coverage_search(1..=6, 1..=6, 1.0, &config).unwrap();
        assert_eq!(res.entries.len(), 30);
        assert_eq!(res.invalid, (1..=6).map(|k| (k, k)).collect::<Vec<_>>());
        assert!(res.entries.iter().all(|e| e.nonzero_bins <= 32 * 32 && e.nonzero_bins > 0));
        let slow = filter_patterns(&res, 50.0).unwrap();
        assert!(!slow.is_empty());
        assert!(slow.iter().all(|e| e.m <= 2 && e.n <= 4));
        let all = filter_patterns(&res, 1e9).unwrap();
        assert_eq!(all.len(), 30);
        for w in all.windows(2) {
            assert!(w[0].nonzero_bins >= w[1].nonzero_bins);
        }
        assert_eq!(res.coverage_map().unwrap().width(), 6);
        assert!(res.to_csv().starts_with("n,m,f1,f2,in_bounds,nonzero_bins\n1,2,"));
        let again = pattern_coverage_search(1..=6, 1..=6, 1.0, &config).unwrap();
        assert_eq!(res, again);
    }

    #[test]
    fn ties_break_on_frequency_then_indices() {
        let mk =
            |n, m, f1: f64, f2: f64, bins| CoverageEntry { n, m, f1, f2, in_bounds: 0, nonzero_bins: bins, mean_bin_mass: 1.0 };
        let res = CoverageResult {
            grid_size: 8,
            n_range: 1..=9,
            m_range: 1..=9,
            entries: vec![
                mk(3, 2, 50.0, -25.0, 10),
                mk(1, 2, 50.0, 25.0, 10),
                mk(2, 9, 225.0, 175.0, 10),
                mk(9, 1, 25.0, -200.0, 12),
            ],
            invalid: vec![],
        };
        let ranked: Vec<_> = filter_patterns(&res, 1000.0).unwrap().iter().map(|e| (e.n, e.m)).collect();
        assert_eq!(ranked, vec![(9, 1), (1, 2), (3, 2), (2, 9)]);
        assert!(filter_patterns(&res, 0.0).is_err());
    }

    #[test]
    fn random_positions_counts() {
        let mut rng = stream_rng(1, 0);
        assert_eq!(random_positions(&mut rng, 64, 0.197, true).unwrap().len(), 807);
        let all = random_positions(&mut rng, 16, 1.0, false).unwrap();
        let mut sorted = all.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 256);
        assert!(random_positions(&mut rng, 16, 1.5, true).is_err());
    }

    #[test]
    fn complete_sampling_reaches_cap() {
        let corpus = generate_corpus(&LeavesConfig::new(16, 3), 3).unwrap();
        let mut config = ProbeScanConfig::new(vec![0.3], vec![1.0], 16, 5);
        config.with_replacement = false;
        let res = probe_size_scan(&config, &corpus).unwrap();
        assert!((res.mean_psnr[0][0] - psnr_cap(16)).abs() < 1e-9);
        assert_eq!(res, probe_size_scan(&config, &corpus).unwrap());
    }

    #[test]
    fn probe_scan_rejects_bad_input() {
        let corpus = generate_corpus(&LeavesConfig::new(16, 3), 1).unwrap();
        assert!(probe_size_scan(&ProbeScanConfig::new(vec![], vec![0.5], 16, 1), &corpus).is_err());
        assert!(probe_size_scan(&ProbeScanConfig::new(vec![1.0], vec![1.2], 16, 1), &corpus).is_err());
        assert!(probe_size_scan(&ProbeScanConfig::new(vec![1.0], vec![0.5], 32, 1), &corpus).is_err());
        assert!(probe_size_scan(&ProbeScanConfig::new(vec![1.0], vec![0.5], 16, 1), &[]).is_err());
    }
}
