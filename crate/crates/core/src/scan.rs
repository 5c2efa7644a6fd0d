//! Rosette scan trajectories.
//!
//! A wedge-type rosette scanner traces
//!
//! ```text
//! x(t) = phi2 * (cos(2 pi f1 t) - cos(2 pi f2 t))
//! y(t) = phi2 * (sin(2 pi f1 t) - sin(2 pi f2 t))
//! ```
//!
//! and closes after `T = m / f1 = (m - n) / f2 = n / (f1 - f2)`. Loci here are
//! generated with `phi2 = 1`, so every point lies in the disc of radius 2. The
//! imaging area is the square inscribed in that disc.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{domain, Error, Result};
use crate::raster::ImageGrid;

/// Radius of the scanned field of view in `phi2` units.
pub const LOCUS_RADIUS: f64 = 2.0;

/// Side of the square imaging area inscribed in the field of view.
pub const IMAGING_SIDE: f64 = 2.0 * SQRT_2;

/// Default number of outer pixel rings on which no sample centre is placed.
pub const DEFAULT_BORDER: usize = 1;

/// Optical layout of a wedge-and-canted-mirror scanner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WedgeGeometry {
    /// Vertical angle of the wedge (radians).
    pub phi1: f64,
    /// Refractive index of the wedge.
    pub n_refr: f64,
    /// Wedge-to-sensor distance.
    pub d1: f64,
    /// Mirror-to-sensor distance.
    pub d2: f64,
    /// Canted angle of the secondary mirror (radians), derived.
    pub phi2: f64,
}

impl WedgeGeometry {
    pub fn new(phi1: f64, n_refr: f64, d1: f64, d2: f64) -> Result<Self> {
        let phi2 = derive_phi2(phi1, n_refr, d1, d2)?;
        Ok(Self { phi1, n_refr, d1, d2, phi2 })
    }
}

/// Canted mirror angle `phi1 (n - 1) d1 / (2 d2)`.
pub fn derive_phi2(phi1: f64, n_refr: f64, d1: f64, d2: f64) -> Result<f64> {
    let finite = [phi1, n_refr, d1, d2].iter().all(|v| v.is_finite());
    if !finite || phi1 <= 0.0 || d1 <= 0.0 || d2 <= 0.0 {
        return Err(domain("wedge angle and distances must be positive"));
    }
    if n_refr <= 1.0 {
        return Err(domain(format!("refractive index must exceed 1, got {n_refr}")));
    }
    Ok(phi1 * (n_refr - 1.0) * d1 / (2.0 * d2))
}

/// Rotation frequencies `(f1, f2) = (m / T, (m - n) / T)` for a pattern repeating every `T` seconds.
pub fn frequencies_from_nm(n: u32, m: u32, period: f64) -> Result<(f64, f64)> {
    if n == 0 || m == 0 {
        return Err(domain("pattern integers must be positive"));
    }
    if n == m {
        return Err(Error::DegeneratePattern(n));
    }
    if !(period > 0.0 && period.is_finite()) {
        return Err(domain(format!("repeat period must be positive, got {period}")));
    }
    let f1 = f64::from(m) / period;
    let f2 = (f64::from(m) - f64::from(n)) / period;
    Ok((f1, f2))
}

/// An `(n, m)` rosette pattern together with its detector sampling rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RosettePattern {
    pub n: u32,
    pub m: u32,
    /// Repeat period `T` in seconds.
    pub period: f64,
    pub f1: f64,
    pub f2: f64,
    /// Detector sampling rate in Hz.
    pub sample_rate: f64,
}

impl RosettePattern {
    pub fn new(n: u32, m: u32, period: f64, sample_rate: f64) -> Result<Self> {
        let (f1, f2) = frequencies_from_nm(n, m, period)?;
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(domain(format!("sample rate must be positive, got {sample_rate}")));
        }
        let pattern = Self { n, m, period, f1, f2, sample_rate };
        if pattern.samples_per_frame() == 0 {
            return Err(domain("sample rate too low for a single sample per frame"));
        }
        Ok(pattern)
    }

    pub fn samples_per_frame(&self) -> usize {
        (self.sample_rate * self.period).round() as usize
    }

    /// Largest absolute rotation frequency.
    pub fn max_rotation_hz(&self) -> f64 {
        self.f1.abs().max(self.f2.abs())
    }

    /// Locus position at time `t`, in `phi2` units.
    pub fn position_at(&self, t: f64) -> (f64, f64) {
        let a = 2.0 * PI * (self.f1 * t).rem_euclid(1.0);
        let b = 2.0 * PI * (self.f2 * t).rem_euclid(1.0);
        (a.cos() - b.cos(), a.sin() - b.sin())
    }
}

/// Sampled points of one pattern frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanLocus {
    pub points: Vec<(f64, f64)>,
    pub timestamps: Vec<f64>,
}

impl ScanLocus {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_radius(&self) -> f64 {
        self.points.iter().map(|&(x, y)| x.hypot(y)).fold(0.0, f64::max)
    }
}

/// Samples one frame at `t_k = k / sample_rate`, `k = 0 .. samples_per_frame`.
pub fn rosette_locus(pattern: &RosettePattern) -> ScanLocus {
    let count = pattern.samples_per_frame();
    let timestamps: Vec<f64> = (0..count).map(|k| k as f64 / pattern.sample_rate).collect();
    let points = timestamps.iter().map(|&t| pattern.position_at(t)).collect();
    ScanLocus { points, timestamps }
}

/// Sample centres snapped to pixel centres of a square grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleGrid {
    pub grid_size: usize,
    /// `(row, col)` of every retained sample, in locus order. Duplicates are kept.
    pub positions: Vec<(u32, u32)>,
    pub in_bounds_count: usize,
    /// Number of locus points before discarding those outside the imaging area.
    pub total_samples: usize,
}

impl SampleGrid {
    /// Builds a grid from explicit pixel positions (e.g. random sampling).
    pub fn from_positions(grid_size: usize, positions: Vec<(u32, u32)>) -> Result<Self> {
        if grid_size == 0 {
            return Err(domain("grid size must be positive"));
        }
        if positions.iter().any(|&(r, c)| r as usize >= grid_size || c as usize >= grid_size) {
            return Err(domain("sample position outside the grid"));
        }
        let n = positions.len();
        Ok(Self { grid_size, positions, in_bounds_count: n, total_samples: n })
    }

    /// Every pixel exactly once, row-major.
    pub fn full(grid_size: usize) -> Result<Self> {
        let positions = (0..grid_size as u32).flat_map(|r| (0..grid_size as u32).map(move |c| (r, c))).collect();
        Self::from_positions(grid_size, positions)
    }

    pub fn in_square_fraction(&self) -> f64 {
        self.in_bounds_count as f64 / self.total_samples.max(1) as f64
    }

    /// Number of distinct pixels hit by at least one sample.
    pub fn unique_positions(&self) -> usize {
        let mut seen = vec![false; self.grid_size * self.grid_size];
        let mut count = 0;
        for &(r, c) in &self.positions {
            let idx = r as usize * self.grid_size + c as usize;
            if !seen[idx] {
                seen[idx] = true;
                count += 1;
            }
        }
        count
    }

    /// 8-bit rendering of the sample density, brightest where samples repeat most.
    pub fn density_image(&self) -> ImageGrid {
        let n = self.grid_size;
        let mut hits = vec![0u32; n * n];
        for &(r, c) in &self.positions {
            hits[r as usize * n + c as usize] += 1;
        }
        let peak = hits.iter().copied().max().unwrap_or(0).max(1) as f64;
        let values: Vec<f64> = hits.iter().map(|&h| 255.0 * h as f64 / peak).collect();
        ImageGrid::from_real(n, n, 8, &values).expect("density raster has consistent shape")
    }
}

/// Maps locus points onto a `grid_size`² raster covering the inscribed square,
/// leaving [`DEFAULT_BORDER`] outer pixel rings free of sample centres.
pub fn discretize_pattern(locus: &ScanLocus, grid_size: usize) -> Result<SampleGrid> {
    discretize_pattern_with(locus, grid_size, DEFAULT_BORDER)
}

/// Like [`discretize_pattern`] with an explicit border width (0 keeps every in-square point).
///
/// A coordinate lying exactly on a pixel edge goes to the pixel with the larger index.
pub fn discretize_pattern_with(locus: &ScanLocus, grid_size: usize, border: usize) -> Result<SampleGrid> {
    if locus.is_empty() {
        return Err(Error::Empty("scan locus"));
    }
    if grid_size < 2 {
        return Err(domain(format!("grid size must be at least 2, got {grid_size}")));
    }
    if 2 * border >= grid_size {
        return Err(domain(format!("border {border} leaves no imaging area on a {grid_size} grid")));
    }
    let n = grid_size as f64;
    let lo = border as f64;
    let hi = (grid_size - border) as f64;
    let positions: Vec<(u32, u32)> = locus
        .points
        .iter()
        .filter_map(|&(x, y)| {
            let col = ((x / IMAGING_SIDE + 0.5) * n).floor();
            let row = ((0.5 - y / IMAGING_SIDE) * n).floor();
            (col >= lo && col < hi && row >= lo && row < hi).then_some((row as u32, col as u32))
        })
        .collect();
    Ok(SampleGrid { grid_size, in_bounds_count: positions.len(), positions, total_samples: locus.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn phi2_direct_substitution() {
        assert!((derive_phi2(0.1, 1.5, 2.0, 1.0).unwrap() - 0.05).abs() < 1e-15);
        assert!((derive_phi2(0.2, 2.0, 1.0, 1.0).unwrap() - 0.1).abs() < 1e-15);
        assert!(derive_phi2(0.1, 1.0, 1.0, 1.0).is_err());
        assert!(derive_phi2(-0.1, 1.5, 1.0, 1.0).is_err());
        assert!(derive_phi2(0.1, 1.5, 0.0, 1.0).is_err());
        let g = WedgeGeometry::new(0.1, 1.5, 2.0, 1.0).unwrap();
        assert_eq!(g.phi2, 0.1 * 0.5 * 2.0 / 2.0);
    }

    #[test]
    fn frequencies_match_reference_patterns() {
        for (n, m, f1, f2) in [(11, 4, 100.0, -175.0), (8, 99, 2475.0, 2275.0), (76, 37, 925.0, -975.0)] {
            let (a, b) = frequencies_from_nm(n, m, 0.04).unwrap();
            assert!((a - f1).abs() < 1e-9 && (b - f2).abs() < 1e-9, "({n},{m}) -> ({a},{b})");
        }
    }

    #[test]
    fn equal_integers_are_degenerate() {
        assert!(matches!(frequencies_from_nm(5, 5, 0.04), Err(Error::DegeneratePattern(5))));
        assert!(frequencies_from_nm(0, 5, 0.04).is_err());
        assert!(frequencies_from_nm(3, 5, 0.0).is_err());
    }

    #[test]
    fn locus_starts_at_origin_and_has_frame_length() {
        let p = RosettePattern::new(8, 99, 0.04, 510_000.0).unwrap();
        let locus = rosette_locus(&p);
        assert_eq!(locus.len(), 20400);
        assert_eq!(locus.points[0], (0.0, 0.0));
        assert_eq!(locus.timestamps[1], 1.0 / 510_000.0);
    }

    #[test]
    fn sampled_radius_reaches_dense_sweep_maximum() {
        let p = RosettePattern::new(11, 4, 0.04, 510_000.0).unwrap();
        // independent dense sweep of the analytic locus
        let steps = 4_000_000;
        let oracle = (0..steps)
            .map(|k| {
                let t = p.period * k as f64 / steps as f64;
                let a = 2.0 * PI * p.f1 * t;
                let b = 2.0 * PI * p.f2 * t;
                (a.cos() - b.cos()).hypot(a.sin() - b.sin())
            })
            .fold(0.0, f64::max);
        assert!((oracle - 2.0).abs() < 1e-6);
        assert!((rosette_locus(&p).max_radius() - oracle).abs() < 1e-6);
    }

    #[test]
    fn origin_maps_to_grid_centre() {
        let locus = ScanLocus { points: vec![(0.0, 0.0)], timestamps: vec![0.0] };
        let grid = discretize_pattern(&locus, 256).unwrap();
        assert_eq!(grid.positions, vec![(128, 128)]);
        let grid = discretize_pattern(&locus, 7).unwrap();
        assert_eq!(grid.positions, vec![(3, 3)]);
    }

    #[test]
    fn square_edges_and_border() {
        let h = SQRT_2;
        let locus = ScanLocus {
            points: vec![(-h, 0.0), (h, 0.0), (h - 1e-9, 0.0), (0.0, h), (0.0, -h + 1e-9)],
            timestamps: vec![0.0; 5],
        };
        let g = discretize_pattern_with(&locus, 8, 0).unwrap();
        // x = +h lies on the outer edge and maps to index 8, outside the grid
        assert_eq!(g.positions, vec![(4, 0), (4, 7), (0, 4), (7, 4)]);
        let g = discretize_pattern_with(&locus, 8, 1).unwrap();
        assert!(g.positions.is_empty());
        assert_eq!(g.total_samples, 5);
    }

    #[test]
    fn discretize_rejects_bad_input() {
        let empty = ScanLocus { points: vec![], timestamps: vec![] };
        assert!(discretize_pattern(&empty, 16).is_err());
        let one = ScanLocus { points: vec![(0.0, 0.0)], timestamps: vec![0.0] };
        assert!(discretize_pattern(&one, 1).is_err());
        assert!(discretize_pattern_with(&one, 4, 2).is_err());
    }

    #[test]
    fn in_square_fraction_tracks_area_ratio() {
        let p = RosettePattern::new(8, 99, 0.04, 510_000.0).unwrap();
        let g = discretize_pattern(&rosette_locus(&p), 256).unwrap();
        let f = g.in_square_fraction();
        assert!((0.58..=0.68).contains(&f), "fraction {f}");
        assert!(g.unique_positions() < g.in_bounds_count);
    }

    #[test]
    fn discretization_is_deterministic() {
        let p = RosettePattern::new(76, 37, 0.04, 510_000.0).unwrap();
        let a = discretize_pattern(&rosette_locus(&p), 128).unwrap();
        let b = discretize_pattern(&rosette_locus(&p), 128).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn pattern_closes_after_one_period(n in 1u32..300, m in 1u32..300) {
            prop_assume!(n != m);
            let p = RosettePattern::new(n, m, 0.04, 510_000.0).unwrap();
            let (x0, y0) = p.position_at(0.0);
            let (x1, y1) = p.position_at(p.period);
            prop_assert!((x1 - x0).hypot(y1 - y0) < 1e-9);
        }

        #[test]
        fn period_expressions_agree(n in 1u32..2000, m in 1u32..2000, period in 0.001f64..1.0) {
            prop_assume!(n != m);
            let (f1, f2) = frequencies_from_nm(n, m, period).unwrap();
            let t1 = f64::from(m) / f1;
            let t3 = f64::from(n) / (f1 - f2);
            prop_assert!((t1 - period).abs() <= 1e-12 * period);
            prop_assert!((t3 - period).abs() <= 1e-12 * period);
            if m != n && f2 != 0.0 {
                let t2 = (f64::from(m) - f64::from(n)) / f2;
                prop_assert!((t2 - period).abs() <= 1e-12 * period);
            }
        }

        #[test]
        fn locus_stays_inside_field_of_view(n in 1u32..200, m in 1u32..200) {
            prop_assume!(n != m);
            let p = RosettePattern::new(n, m, 0.04, 50_000.0).unwrap();
            prop_assert!(rosette_locus(&p).max_radius() <= LOCUS_RADIUS + 1e-12);
        }

        #[test]
        fn positions_always_inside_grid(n in 1u32..200, m in 1u32..200, size in 2usize..300) {
            prop_assume!(n != m);
            let p = RosettePattern::new(n, m, 0.04, 20_000.0).unwrap();
            let g = discretize_pattern_with(&rosette_locus(&p), size, 0).unwrap();
            prop_assert!(g.positions.iter().all(|&(r, c)| (r as usize) < size && (c as usize) < size));
            prop_assert_eq!(g.in_bounds_count, g.positions.len());
        }
    }
}
