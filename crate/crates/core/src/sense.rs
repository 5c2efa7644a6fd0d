//! Probe rasterization and measurement-matrix assembly.
//!
//! The detector footprint is a disc centred on a pixel centre. Each pixel of the
//! stamp carries the fraction of its area covered by the disc, so a row of the
//! measurement matrix sums image intensities weighted by coverage.

use std::io::{Read, Write};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{domain, shape, Error, Result};
use crate::raster::ImageGrid;
use crate::scan::SampleGrid;

/// How pixel/disc overlap fractions are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoverageMethod {
    /// Closed-form area of disc ∩ pixel square.
    #[default]
    Analytic,
    /// Midpoint counting on an `n × n` subpixel lattice per pixel.
    Supersampled(u32),
}

/// A rasterized circular detector footprint.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    radius: f64,
    half_width: usize,
    weights: Vec<f64>,
}

impl Probe {
    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Patch side length, `2 * half_width + 1`.
    pub fn side(&self) -> usize {
        2 * self.half_width + 1
    }

    /// Offset from the patch origin to the centre pixel (both axes).
    pub fn anchor(&self) -> usize {
        self.half_width
    }

    /// Dense row-major weight patch.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_at(&self, d_row: i32, d_col: i32) -> f64 {
        let h = self.half_width as i32;
        if d_row.abs() > h || d_col.abs() > h {
            return 0.0;
        }
        self.weights[((d_row + h) * self.side() as i32 + d_col + h) as usize]
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Non-zero `(d_row, d_col, weight)` offsets relative to the centre pixel, row-major.
    pub fn footprint(&self) -> Vec<(i32, i32, f64)> {
        let h = self.half_width as i32;
        let side = self.side();
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, &w)| ((i / side) as i32 - h, (i % side) as i32 - h, w))
            .collect()
    }

    pub fn from_diameter(diameter: f64) -> Result<Self> {
        rasterize_probe(diameter / 2.0)
    }
}

/// Rasterizes a disc of `radius` pixels centred on a pixel centre, with analytic coverage.
pub fn rasterize_probe(radius: f64) -> Result<Probe> {
    rasterize_probe_with(radius, CoverageMethod::Analytic)
}

pub fn rasterize_probe_with(radius: f64, method: CoverageMethod) -> Result<Probe> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(domain(format!("probe radius must be positive, got {radius}")));
    }
    if let CoverageMethod::Supersampled(0) = method {
        return Err(domain("supersampling factor must be positive"));
    }
    // a pixel at offset j overlaps the disc iff |j| - 1/2 < r
    let half_width = ((radius + 0.5).ceil() as usize).saturating_sub(1);
    let side = 2 * half_width + 1;
    let h = half_width as f64;
    let mut weights = Vec::with_capacity(side * side);
    for i in 0..side {
        for j in 0..side {
            let cy = i as f64 - h;
            let cx = j as f64 - h;
            let w = match method {
                CoverageMethod::Analytic => disc_rect_area(radius, cx - 0.5, cx + 0.5, cy - 0.5, cy + 0.5),
                CoverageMethod::Supersampled(n) => supersampled_coverage(radius, cx, cy, n),
            };
            weights.push(if w < 1e-12 {
                0.0
            } else if w > 1.0 - 1e-12 {
                1.0
            } else {
                w
            });
        }
    }
    Ok(Probe { radius, half_width, weights })
}

/// `∫_0^t sqrt(r² - s²) ds` for `0 <= t <= r`.
fn circle_segment(t: f64, r: f64) -> f64 {
    let t = t.min(r);
    0.5 * (t * (r * r - t * t).max(0.0).sqrt() + r * r * (t / r).asin())
}

/// Area of the disc ∩ `[0, x] × [0, y]` for `x, y >= 0`.
fn quadrant_area(x: f64, y: f64, r: f64) -> f64 {
    let x = x.min(r);
    let y = y.min(r);
    if x * x + y * y <= r * r {
        return x * y;
    }
    let xs = (r * r - y * y).max(0.0).sqrt();
    xs * y + circle_segment(x, r) - circle_segment(xs, r)
}

fn signed_quadrant_area(x: f64, y: f64, r: f64) -> f64 {
    x.signum() * y.signum() * quadrant_area(x.abs(), y.abs(), r)
}

/// Area of the origin-centred disc of radius `r` intersected with an axis-aligned rectangle.
pub(crate) fn disc_rect_area(r: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    signed_quadrant_area(x1, y1, r) - signed_quadrant_area(x0, y1, r) - signed_quadrant_area(x1, y0, r)
        + signed_quadrant_area(x0, y0, r)
}

fn supersampled_coverage(r: f64, cx: f64, cy: f64, n: u32) -> f64 {
    let step = 1.0 / f64::from(n);
    let mut inside = 0u64;
    for a in 0..n {
        let y = cy - 0.5 + (f64::from(a) + 0.5) * step;
        for b in 0..n {
            let x = cx - 0.5 + (f64::from(b) + 0.5) * step;
            if x * x + y * y <= r * r {
                inside += 1;
            }
        }
    }
    inside as f64 / f64::from(n * n)
}

/// One non-zero of a measurement matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub row: u32,
    pub col: u32,
    pub weight: f64,
}

const MATRIX_MAGIC: &[u8; 4] = b"RCSM";

/// Sparse linear map from a flattened `grid_size²` image to detector samples.
///
/// Entries are stored sorted by `(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    rows: usize,
    cols: usize,
    grid_size: usize,
    entries: Vec<Entry>,
    row_offsets: Vec<usize>,
}

impl MeasurementMatrix {
    /// Assembles from triples. Triples are sorted; every row must be non-empty.
    pub fn from_entries(rows: usize, grid_size: usize, mut entries: Vec<Entry>) -> Result<Self> {
        let cols = grid_size * grid_size;
        if rows == 0 || cols == 0 {
            return Err(Error::Empty("measurement matrix"));
        }
        if let Some(e) = entries.iter().find(|e| e.row as usize >= rows || e.col as usize >= cols) {
            return Err(domain(format!("entry ({}, {}) outside {rows}x{cols}", e.row, e.col)));
        }
        entries.sort_by_key(|e| (e.row, e.col));
        let mut row_offsets = vec![0usize; rows + 1];
        for e in &entries {
            row_offsets[e.row as usize + 1] += 1;
        }
        for i in 0..rows {
            if row_offsets[i + 1] == 0 {
                return Err(domain(format!("measurement row {i} is empty")));
            }
            row_offsets[i + 1] += row_offsets[i];
        }
        Ok(Self { rows, cols, grid_size, entries, row_offsets })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[Entry] {
        &self.entries[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).iter().map(|e| e.weight).sum()
    }

    /// `M x` for a flattened image.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().map(|e| e.weight * x[e.col as usize]).sum()).collect()
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.rows * self.cols];
        for e in &self.entries {
            dense[e.row as usize * self.cols + e.col as usize] += e.weight;
        }
        dense
    }

    /// Binary layout: `"RCSM"`, `u32 rows`, `u32 cols`, `u64 nnz`, then `nnz` records of
    /// `(u32 row, u32 col, f64 weight)`, all little-endian.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = Vec::with_capacity(20 + self.entries.len() * 16);
        buf.extend_from_slice(MATRIX_MAGIC);
        buf.extend_from_slice(&(self.rows as u32).to_le_bytes());
        buf.extend_from_slice(&(self.cols as u32).to_le_bytes());
        buf.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        for e in &self.entries {
            buf.extend_from_slice(&e.row.to_le_bytes());
            buf.extend_from_slice(&e.col.to_le_bytes());
            buf.extend_from_slice(&e.weight.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let bad = |reason: &str| Error::Format { kind: "RCSM", reason: reason.into() };
        let mut header = [0u8; 20];
        input.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
        if &header[..4] != MATRIX_MAGIC {
            return Err(bad("wrong magic"));
        }
        let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let nnz = u64::from_le_bytes(header[12..20].try_into().unwrap()) as usize;
        let grid_size = (cols as f64).sqrt().round() as usize;
        if grid_size * grid_size != cols {
            return Err(bad("column count is not a square grid"));
        }
        let mut body = Vec::new();
        input.read_to_end(&mut body)?;
        if body.len() != nnz * 16 {
            return Err(bad("record count does not match nnz"));
        }
        let entries = body
            .chunks_exact(16)
            .map(|r| Entry {
                row: u32::from_le_bytes(r[0..4].try_into().unwrap()),
                col: u32::from_le_bytes(r[4..8].try_into().unwrap()),
                weight: f64::from_le_bytes(r[8..16].try_into().unwrap()),
            })
            .collect();
        Self::from_entries(rows, grid_size, entries)
    }

    /// SHA-256 of the binary serialization, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        hex::encode(Sha256::digest(&buf))
    }
}

/// Stamps `probe` at every sample position, one row per sample in sample order.
/// Stamp pixels outside the grid are dropped.
pub fn build_measurement_matrix(samples: &SampleGrid, probe: &Probe) -> Result<MeasurementMatrix> {
    if samples.positions.is_empty() {
        return Err(Error::Empty("sample positions"));
    }
    let n = samples.grid_size;
    if probe.side() > 2 * n {
        return Err(domain(format!("probe patch of side {} exceeds twice the grid size {n}", probe.side())));
    }
    let footprint = probe.footprint();
    let rows: Vec<Vec<Entry>> = samples
        .positions
        .par_iter()
        .enumerate()
        .map(|(i, &(r, c))| {
            footprint
                .iter()
                .filter_map(|&(dr, dc, w)| {
                    let rr = r as i64 + dr as i64;
                    let cc = c as i64 + dc as i64;
                    let inside = rr >= 0 && cc >= 0 && (rr as usize) < n && (cc as usize) < n;
                    inside.then(|| Entry { row: i as u32, col: (rr as usize * n + cc as usize) as u32, weight: w })
                })
                .collect()
        })
        .collect();
    if let Some(i) = rows.iter().position(Vec::is_empty) {
        return Err(domain(format!("probe at sample {i} lies entirely outside the grid")));
    }
    MeasurementMatrix::from_entries(samples.positions.len(), n, rows.concat())
}

/// Detector readings, one per measurement row.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVector {
    pub values: Vec<f64>,
}

impl MeasurementVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Simulates the detector: `M · flatten(image)` with row-major flattening.
pub fn measure(matrix: &MeasurementMatrix, image: &ImageGrid) -> Result<MeasurementVector> {
    let n = matrix.grid_size();
    if image.width() != n || image.height() != n {
        return Err(shape(format!("{n}x{n}"), format!("{}x{}", image.width(), image.height())));
    }
    Ok(MeasurementVector { values: matrix.apply(&image.to_f64()) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Independent subpixel counting oracle (256 × 256 per pixel).
    fn oracle_weight(r: f64, d_row: i32, d_col: i32) -> f64 {
        let n = 256;
        let mut inside = 0u32;
        for a in 0..n {
            let y = d_row as f64 - 0.5 + (a as f64 + 0.5) / n as f64;
            for b in 0..n {
                let x = d_col as f64 - 0.5 + (b as f64 + 0.5) / n as f64;
                if x * x + y * y <= r * r {
                    inside += 1;
                }
            }
        }
        inside as f64 / (n * n) as f64
    }

    #[test]
    fn tiny_probe_is_single_pixel() {
        let p = rasterize_probe(0.4).unwrap();
        assert_eq!(p.side(), 1);
        assert!((p.weights()[0] - PI * 0.16).abs() < 1e-12);
        assert!((oracle_weight(0.4, 0, 0) - 0.5027).abs() < 1e-3);
    }

    #[test]
    fn radius_two_has_unit_interior_and_grey_boundary() {
        let p = rasterize_probe(2.0).unwrap();
        assert_eq!(p.side(), 5);
        assert_eq!(p.weight_at(0, 0), 1.0);
        assert_eq!(p.weight_at(1, 0), 1.0);
        assert!(p.weight_at(1, 1) < 1.0);
        let edge = p.weight_at(0, 2);
        assert!(edge > 0.0 && edge < 1.0);
        // nearest corner of pixel (2, 2) sits at 1.5 sqrt 2 > 2
        assert_eq!(p.weight_at(2, 2), 0.0);
        let near = p.weight_at(1, 2);
        assert!(near > 0.0 && near < 0.5);
    }

    #[test]
    fn weight_sum_conserves_disc_area() {
        for r in [0.4, 1.0, 2.25, 3.0, 7.5, 31.0] {
            let p = rasterize_probe(r).unwrap();
            assert!((p.weight_sum() - PI * r * r).abs() < 1e-9 * r * r, "radius {r}");
        }
        let oracle: f64 = (-3..=3).flat_map(|i| (-3..=3).map(move |j| oracle_weight(3.0, i, j))).sum();
        assert!((oracle - 9.0 * PI).abs() < 0.01 * 9.0 * PI);
    }

    #[test]
    fn analytic_matches_supersampling_oracle() {
        for r in [0.5, 0.9, 1.7, 2.25, 4.3] {
            let p = rasterize_probe(r).unwrap();
            let h = p.anchor() as i32 + 1;
            for i in -h..=h {
                for j in -h..=h {
                    let diff = (p.weight_at(i, j) - oracle_weight(r, i, j)).abs();
                    assert!(diff < 0.01, "r={r} ({i},{j}) diff {diff}");
                }
            }
        }
    }

    #[test]
    fn supersampled_method_agrees_with_analytic() {
        let a = rasterize_probe(2.25).unwrap();
        let s = rasterize_probe_with(2.25, CoverageMethod::Supersampled(64)).unwrap();
        for (x, y) in a.weights().iter().zip(s.weights()) {
            assert!((x - y).abs() < 0.02);
        }
        assert!(rasterize_probe_with(1.0, CoverageMethod::Supersampled(0)).is_err());
    }

    #[test]
    fn probe_is_symmetric_under_quarter_turn() {
        let p = rasterize_probe(3.3).unwrap();
        let h = p.anchor() as i32;
        for i in -h..=h {
            for j in -h..=h {
                assert!((p.weight_at(i, j) - p.weight_at(j, -i)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_radius_is_rejected() {
        assert!(rasterize_probe(0.0).is_err());
        assert!(rasterize_probe(-1.0).is_err());
        assert!(rasterize_probe(f64::NAN).is_err());
    }

    #[test]
    fn diameter_interpretation_halves_radius() {
        assert_eq!(Probe::from_diameter(4.5).unwrap(), rasterize_probe(2.25).unwrap());
    }

    #[test]
    fn single_centre_sample_matrix() {
        let samples = SampleGrid::from_positions(8, vec![(4, 4)]).unwrap();
        let m = build_measurement_matrix(&samples, &rasterize_probe(0.4).unwrap()).unwrap();
        assert_eq!((m.rows(), m.cols(), m.nnz()), (1, 64, 1));
        assert_eq!(m.entries()[0].col, 36);
        let ones = ImageGrid::filled(8, 8, 16, 1).unwrap();
        let v = measure(&m, &ones).unwrap();
        assert!((v.values[0] - PI * 0.16).abs() < 1e-12);
    }

    #[test]
    fn corner_sample_is_truncated() {
        let probe = rasterize_probe(2.25).unwrap();
        let samples = SampleGrid::from_positions(16, vec![(0, 0), (8, 8)]).unwrap();
        let m = build_measurement_matrix(&samples, &probe).unwrap();
        assert!(m.row_sum(0) < PI * 2.25 * 2.25);
        assert!((m.row_sum(1) - probe.weight_sum()).abs() < 1e-12);
        assert!(m.row_sum(1) <= PI * 2.25 * 2.25 * 1.01);
    }

    #[test]
    fn assembly_errors() {
        let probe = rasterize_probe(1.0).unwrap();
        let empty = SampleGrid::from_positions(8, vec![]).unwrap();
        assert!(build_measurement_matrix(&empty, &probe).is_err());
        let big = rasterize_probe(9.0).unwrap();
        let one = SampleGrid::from_positions(4, vec![(0, 0)]).unwrap();
        assert!(build_measurement_matrix(&one, &big).is_err());
        let m = build_measurement_matrix(&SampleGrid::from_positions(8, vec![(1, 1)]).unwrap(), &probe).unwrap();
        assert!(measure(&m, &ImageGrid::filled(4, 4, 8, 0).unwrap()).is_err());
    }

    #[test]
    fn rows_follow_sample_order() {
        let probe = rasterize_probe(1.5).unwrap();
        let positions = vec![(5, 5), (1, 2), (5, 5), (9, 0)];
        let m = build_measurement_matrix(&SampleGrid::from_positions(10, positions.clone()).unwrap(), &probe).unwrap();
        assert_eq!(m.rows(), 4);
        assert_eq!(m.row(0), m.row(2).iter().map(|e| Entry { row: 0, ..*e }).collect::<Vec<_>>().as_slice());
        for (i, &(r, c)) in positions.iter().enumerate() {
            let centre = r * 10 + c;
            assert!(m.row(i).iter().any(|e| e.col == centre && e.weight == 1.0));
        }
    }

    #[test]
    fn measurement_is_linear() {
        let probe = rasterize_probe(2.25).unwrap();
        let positions: Vec<(u32, u32)> = (0..40).map(|k| ((k * 7 % 16) as u32, (k * 3 % 16) as u32)).collect();
        let m = build_measurement_matrix(&SampleGrid::from_positions(16, positions).unwrap(), &probe).unwrap();
        let a: Vec<f64> = (0..256).map(|i| ((i * 37) % 101) as f64).collect();
        let b: Vec<f64> = (0..256).map(|i| ((i * 11) % 53) as f64).collect();
        let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.5 * x - 0.75 * y).collect();
        let (ma, mb, mc) = (m.apply(&a), m.apply(&b), m.apply(&combo));
        for i in 0..m.rows() {
            let expect = 2.5 * ma[i] - 0.75 * mb[i];
            assert!((mc[i] - expect).abs() <= 1e-9 * expect.abs().max(1.0));
        }
        let zero = ImageGrid::filled(16, 16, 16, 0).unwrap();
        assert!(measure(&m, &zero).unwrap().values.iter().all(|&v| v == 0.0));
        let c = ImageGrid::filled(16, 16, 16, 300).unwrap();
        let v = measure(&m, &c).unwrap();
        for i in 0..m.rows() {
            assert!((v.values[i] - 300.0 * m.row_sum(i)).abs() < 1e-9);
        }
    }

    #[test]
    fn binary_format_layout() {
        let probe = rasterize_probe(0.4).unwrap();
        let m = build_measurement_matrix(&SampleGrid::from_positions(4, vec![(1, 2)]).unwrap(), &probe).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"RCSM");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 16);
        assert_eq!(u64::from_le_bytes(buf[12..20].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[24..28].try_into().unwrap()), 6);
        assert_eq!(buf.len(), 36);
        assert_eq!(MeasurementMatrix::read_from(&buf[..]).unwrap(), m);
        assert!(MeasurementMatrix::read_from(&buf[..30]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(MeasurementMatrix::read_from(&bad[..]).is_err());
    }
}
