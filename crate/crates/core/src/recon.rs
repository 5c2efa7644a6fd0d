//! Precomputed linear reconstruction.
//!
//! The reconstruction matrix is computed once per sampling pattern and an image is
//! recovered with a single dense matrix-vector product. The default operator is
//! the truncated-SVD Moore-Penrose pseudoinverse of the measurement matrix. A
//! frequency-weighted variant `P = W pinv(M W)` applies a diagonal low-pass
//! weighting `W` in the 2-D DFT basis,
//!
//! ```text
//! W(w1, w2) = 1 / sqrt(mu² + (1 - mu) (sin²(w1 / 2) + sin²(w2 / 2))),  mu = 0.5
//! ```

use std::io::{Read, Write};
use std::sync::Arc;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt_pivoting;
use faer::Mat;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{shape, Error, Result};
use crate::raster::ImageGrid;
use crate::sense::{MeasurementMatrix, MeasurementVector};

/// Default singular-value cutoff relative to the largest singular value.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Regularization weight of the spectral filter.
pub const SPECTRAL_MU: f64 = 0.5;

const RECON_MAGIC: &[u8; 4] = b"RCSP";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReconstructionMethod {
    #[default]
    PlainPseudoinverse,
    FrequencyWeighted,
}

impl ReconstructionMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::PlainPseudoinverse => "plain_pseudoinverse",
            Self::FrequencyWeighted => "frequency_weighted",
        }
    }

    fn code(self) -> u8 {
        match self {
            Self::PlainPseudoinverse => 0,
            Self::FrequencyWeighted => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::PlainPseudoinverse),
            1 => Some(Self::FrequencyWeighted),
            _ => None,
        }
    }
}

impl std::str::FromStr for ReconstructionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" | "pinv" | "plain_pseudoinverse" => Ok(Self::PlainPseudoinverse),
            "frequency_weighted" | "fdri" => Ok(Self::FrequencyWeighted),
            other => Err(Error::Config(format!("unknown reconstruction method {other:?}"))),
        }
    }
}

/// Dense `pixels × samples` reconstruction operator, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionMatrix {
    pixels: usize,
    samples: usize,
    method: ReconstructionMethod,
    tolerance: f64,
    data: Vec<f64>,
}

impl ReconstructionMatrix {
    /// Number of rows: image pixels.
    pub fn pixels(&self) -> usize {
        self.pixels
    }

    /// Number of columns: detector samples.
    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn grid_size(&self) -> usize {
        (self.pixels as f64).sqrt().round() as usize
    }

    pub fn method(&self) -> ReconstructionMethod {
        self.method
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, pixel: usize, sample: usize) -> f64 {
        self.data[pixel * self.samples + sample]
    }

    /// Unclipped real-valued reconstruction `P v`.
    pub fn reconstruct_real(&self, v: &MeasurementVector) -> Result<Vec<f64>> {
        if v.len() != self.samples {
            return Err(shape(self.samples, v.len()));
        }
        Ok(self.data.par_chunks(self.samples).map(|row| row.iter().zip(&v.values).map(|(p, x)| p * x).sum()).collect())
    }

    /// Reconstruction clipped to `[0, 2^B - 1]` and rounded half away from zero.
    pub fn reconstruct(&self, v: &MeasurementVector, bit_depth: u8) -> Result<ImageGrid> {
        let real = self.reconstruct_real(v)?;
        let n = self.grid_size();
        ImageGrid::from_real(n, n, bit_depth, &real)
    }

    /// Binary layout: `"RCSP"`, `u32 rows`, `u32 cols`, `u8 method`, `f64 tolerance`,
    /// then `rows × cols` row-major `f64`, all little-endian. Rows are pixels.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = Vec::with_capacity(21 + self.data.len() * 8);
        buf.extend_from_slice(RECON_MAGIC);
        buf.extend_from_slice(&(self.pixels as u32).to_le_bytes());
        buf.extend_from_slice(&(self.samples as u32).to_le_bytes());
        buf.push(self.method.code());
        buf.extend_from_slice(&self.tolerance.to_le_bytes());
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let bad = |reason: &str| Error::Format { kind: "RCSP", reason: reason.into() };
        let mut header = [0u8; 21];
        input.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
        if &header[..4] != RECON_MAGIC {
            return Err(bad("wrong magic"));
        }
        let pixels = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let samples = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let method = ReconstructionMethod::from_code(header[12]).ok_or_else(|| bad("unknown method code"))?;
        let tolerance = f64::from_le_bytes(header[13..21].try_into().unwrap());
        let mut body = Vec::new();
        input.read_to_end(&mut body)?;
        if body.len() != pixels * samples * 8 {
            return Err(bad("payload length does not match header"));
        }
        let data = body.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        Ok(Self { pixels, samples, method, tolerance, data })
    }
}

/// Builds the reconstruction operator for a known measurement matrix.
pub fn build_reconstruction_matrix(
    matrix: &MeasurementMatrix,
    method: ReconstructionMethod,
    tolerance: f64,
) -> Result<ReconstructionMatrix> {
    if !(0.0..1.0).contains(&tolerance) {
        return Err(Error::Domain(format!("singular-value tolerance must lie in [0, 1), got {tolerance}")));
    }
    let (rows, cols) = (matrix.rows(), matrix.cols());
    let data = match method {
        ReconstructionMethod::PlainPseudoinverse => pseudo_inverse(rows, cols, &matrix.to_dense(), tolerance)?,
        ReconstructionMethod::FrequencyWeighted => {
            let weight = SpectralWeight::new(matrix.grid_size(), SPECTRAL_MU);
            let mut weighted = matrix.to_dense();
            // rows of M W are W applied to each row image, since W is symmetric
            weighted.par_chunks_mut(cols).for_each(|row| weight.apply(row));
            let q = pseudo_inverse(rows, cols, &weighted, tolerance)?;
            apply_to_columns(&weight, &q, cols, rows)
        }
    };
    Ok(ReconstructionMatrix { pixels: cols, samples: rows, method, tolerance, data })
}

/// Truncated-SVD pseudoinverse of a row-major `rows × cols` matrix; returns row-major `cols × rows`.
///
/// Singular values below `tolerance · σ_max` are discarded.
pub fn pseudo_inverse(rows: usize, cols: usize, data: &[f64], tolerance: f64) -> Result<Vec<f64>> {
    if rows == 0 || cols == 0 {
        return Err(Error::Empty("matrix to invert"));
    }
    if data.len() != rows * cols {
        return Err(shape(rows * cols, data.len()));
    }
    let a = Mat::<f64>::from_fn(rows, cols, |i, j| data[i * cols + j]);
    let svd = a.thin_svd().map_err(|e| Error::LinAlg(format!("SVD did not converge: {e:?}")))?;
    let s = svd.S().column_vector();
    let k = rows.min(cols);
    let sigma_max = (0..k).map(|i| s[i]).fold(0.0, f64::max);
    if sigma_max <= 0.0 || !sigma_max.is_finite() {
        return Err(Error::Domain("cannot invert an all-zero matrix".into()));
    }
    let cutoff = tolerance * sigma_max;
    let inv: Vec<f64> = (0..k).map(|i| if s[i] > cutoff { 1.0 / s[i] } else { 0.0 }).collect();
    let v = svd.V();
    let scaled = Mat::<f64>::from_fn(cols, k, |i, j| v[(i, j)] * inv[j]);
    let p = &scaled * svd.U().transpose();
    let mut out = vec![0.0; cols * rows];
    for i in 0..cols {
        for j in 0..rows {
            out[i * rows + j] = p[(i, j)];
        }
    }
    Ok(out)
}

/// Dense operators above this size are replaced by [`GramReconstruction`] in [`build_reconstructor`].
pub const DENSE_LIMIT_BYTES: usize = 1 << 30;

/// Pseudoinverse applied as `Mᵀ z` with `M Mᵀ z = y`, without forming the dense operator.
///
/// When `y` lies in the range of `M`, as every noiseless measurement does, `Mᵀ z` is
/// the minimum-norm solution `pinv(M) y` for any solution `z`. The Gram matrix gets a
/// pivoted Cholesky factorization in place, so memory is one `samples × samples`
/// matrix. Rank ends at the first pivot below `max(tolerance², samples · ε)` times the
/// largest diagonal entry, and `z` is the solution supported on the leading rows.
///
/// The frequency-weighted operator uses the same identity with `A = M W`:
/// `W pinv(M W) y = W² Mᵀ z` with `M W² Mᵀ z = y`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramReconstruction {
    matrix: MeasurementMatrix,
    method: ReconstructionMethod,
    /// Leading `rank × rank` Cholesky factor, column-major lower triangle.
    factor: Vec<f64>,
    /// Sample index of each pivot.
    pivots: Vec<usize>,
    tolerance: f64,
}

impl GramReconstruction {
    /// Plain pseudoinverse.
    pub fn build(matrix: &MeasurementMatrix, tolerance: f64) -> Result<Self> {
        Self::build_with(matrix, ReconstructionMethod::PlainPseudoinverse, tolerance)
    }

    pub fn build_with(matrix: &MeasurementMatrix, method: ReconstructionMethod, tolerance: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&tolerance) {
            return Err(Error::Domain(format!("singular-value tolerance must lie in [0, 1), got {tolerance}")));
        }
        let n = matrix.rows();
        let mut gram = match method {
            ReconstructionMethod::PlainPseudoinverse => plain_gram(matrix),
            ReconstructionMethod::FrequencyWeighted => weighted_gram(matrix),
        };
        let top = (0..n).map(|i| gram[(i, i)]).fold(0.0, f64::max);
        if !(top > 0.0 && top.is_finite()) {
            return Err(Error::Domain("cannot invert an all-zero matrix".into()));
        }
        let (mut perm, mut perm_inv) = (vec![0usize; n], vec![0usize; n]);
        let par = faer::Par::rayon(0);
        let params = Default::default();
        let mut mem = MemBuffer::new(llt_pivoting::factor::cholesky_in_place_scratch::<usize, f64>(n, par, params));
        let (info, _) = llt_pivoting::factor::cholesky_in_place(
            gram.as_mut(),
            &mut perm,
            &mut perm_inv,
            par,
            MemStack::new(&mut mem),
            params,
        )
        .map_err(|e| Error::LinAlg(format!("pivoted Cholesky failed: {e:?}")))?;
        let cutoff = (tolerance * tolerance).max(n as f64 * f64::EPSILON) * top;
        let rank = (0..info.rank).find(|&j| gram[(j, j)] * gram[(j, j)] < cutoff).unwrap_or(info.rank);
        let mut factor = Vec::with_capacity(rank * rank);
        for j in 0..rank {
            factor.extend((0..rank).map(|i| if i >= j { gram[(i, j)] } else { 0.0 }));
        }
        perm.truncate(rank);
        Ok(Self { matrix: matrix.clone(), method, factor, pivots: perm, tolerance })
    }

    pub fn method(&self) -> ReconstructionMethod {
        self.method
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn reconstruct_real(&self, v: &MeasurementVector) -> Result<Vec<f64>> {
        let n = self.matrix.rows();
        if v.len() != n {
            return Err(shape(n, v.len()));
        }
        let k = self.rank();
        let column = |j: usize| &self.factor[j * k..(j + 1) * k];
        let mut w: Vec<f64> = self.pivots.iter().map(|&p| v.values[p]).collect();
        // L w' = w, then Lᵀ u = w'
        for j in 0..k {
            let l = column(j);
            w[j] /= l[j];
            let wj = w[j];
            for i in j + 1..k {
                w[i] -= l[i] * wj;
            }
        }
        for j in (0..k).rev() {
            let l = column(j);
            let dot: f64 = (j + 1..k).map(|i| l[i] * w[i]).sum();
            w[j] = (w[j] - dot) / l[j];
        }
        let mut z = vec![0.0; n];
        for (&p, u) in self.pivots.iter().zip(&w) {
            z[p] = *u;
        }
        let mut x = vec![0.0; self.matrix.cols()];
        for e in self.matrix.entries() {
            x[e.col as usize] += e.weight * z[e.row as usize];
        }
        if self.method == ReconstructionMethod::FrequencyWeighted {
            let weight = SpectralWeight::new(self.matrix.grid_size(), SPECTRAL_MU);
            weight.apply(&mut x);
            weight.apply(&mut x);
        }
        Ok(x)
    }

    pub fn reconstruct(&self, v: &MeasurementVector, bit_depth: u8) -> Result<ImageGrid> {
        let n = self.matrix.grid_size();
        ImageGrid::from_real(n, n, bit_depth, &self.reconstruct_real(v)?)
    }
}

/// Lower triangle of `M Mᵀ`, accumulated pixel by pixel.
fn plain_gram(matrix: &MeasurementMatrix) -> Mat<f64> {
    let mut by_pixel: Vec<Vec<(u32, f64)>> = vec![Vec::new(); matrix.cols()];
    for e in matrix.entries() {
        by_pixel[e.col as usize].push((e.row, e.weight));
    }
    let n = matrix.rows();
    let mut gram = Mat::<f64>::zeros(n, n);
    for touching in &by_pixel {
        for (a, &(ra, wa)) in touching.iter().enumerate() {
            for &(rb, wb) in &touching[a..] {
                let (hi, lo) = if rb >= ra { (rb, ra) } else { (ra, rb) };
                gram[(hi as usize, lo as usize)] += wa * wb;
            }
        }
    }
    gram
}

/// Lower triangle of `M W² Mᵀ`: each row of `M` is filtered densely, then dotted
/// with the sparse rows before it.
fn weighted_gram(matrix: &MeasurementMatrix) -> Mat<f64> {
    let n = matrix.rows();
    let weight = SpectralWeight::new(matrix.grid_size(), SPECTRAL_MU);
    let mut gram = Mat::<f64>::zeros(n, n);
    let block = 256;
    for start in (0..n).step_by(block) {
        let rows: Vec<Vec<f64>> = (start..(start + block).min(n))
            .into_par_iter()
            .map(|i| {
                let mut filtered = vec![0.0; matrix.cols()];
                for e in matrix.row(i) {
                    filtered[e.col as usize] = e.weight;
                }
                weight.apply(&mut filtered);
                weight.apply(&mut filtered);
                (0..=i).map(|j| matrix.row(j).iter().map(|e| e.weight * filtered[e.col as usize]).sum()).collect()
            })
            .collect();
        for (k, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                gram[(start + k, j)] = *v;
            }
        }
    }
    gram
}

/// Either reconstruction operator behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Reconstructor {
    Dense(ReconstructionMatrix),
    Gram(GramReconstruction),
}

impl Reconstructor {
    pub fn reconstruct_real(&self, v: &MeasurementVector) -> Result<Vec<f64>> {
        match self {
            Self::Dense(p) => p.reconstruct_real(v),
            Self::Gram(g) => g.reconstruct_real(v),
        }
    }

    pub fn reconstruct(&self, v: &MeasurementVector, bit_depth: u8) -> Result<ImageGrid> {
        match self {
            Self::Dense(p) => p.reconstruct(v, bit_depth),
            Self::Gram(g) => g.reconstruct(v, bit_depth),
        }
    }
}

/// Dense operator when it fits in [`DENSE_LIMIT_BYTES`], otherwise the Gram form.
pub fn build_reconstructor(matrix: &MeasurementMatrix, method: ReconstructionMethod, tolerance: f64) -> Result<Reconstructor> {
    if 8 * matrix.rows() * matrix.cols() > DENSE_LIMIT_BYTES {
        log::info!("{} x {} operator too large for dense storage: using the Gram form", matrix.cols(), matrix.rows());
        GramReconstruction::build_with(matrix, method, tolerance).map(Reconstructor::Gram)
    } else {
        build_reconstruction_matrix(matrix, method, tolerance).map(Reconstructor::Dense)
    }
}

/// Applies `weight` to every column (an image of `pixels` values) of a row-major `pixels × width` matrix.
fn apply_to_columns(weight: &SpectralWeight, data: &[f64], pixels: usize, width: usize) -> Vec<f64> {
    let columns: Vec<Vec<f64>> = (0..width)
        .into_par_iter()
        .map(|j| {
            let mut col: Vec<f64> = (0..pixels).map(|i| data[i * width + j]).collect();
            weight.apply(&mut col);
            col
        })
        .collect();
    let mut out = vec![0.0; pixels * width];
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            out[i * width + j] = *v;
        }
    }
    out
}

/// Diagonal operator in the 2-D DFT basis of an `n × n` image.
pub struct SpectralWeight {
    n: usize,
    gains: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl SpectralWeight {
    pub fn new(n: usize, mu: f64) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let half_sin2 = |k: usize| {
            let w = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            (w / 2.0).sin().powi(2)
        };
        let gains =
            (0..n * n).map(|idx| 1.0 / (mu * mu + (1.0 - mu) * (half_sin2(idx / n) + half_sin2(idx % n))).sqrt()).collect();
        Self { n, gains, forward, inverse }
    }

    /// Gain at DFT bin `(k1, k2)`.
    pub fn gain(&self, k1: usize, k2: usize) -> f64 {
        self.gains[k1 * self.n + k2]
    }

    /// In-place `x ← W x` for a row-major `n × n` image.
    pub fn apply(&self, image: &mut [f64]) {
        let n = self.n;
        let mut buf: Vec<Complex<f64>> = image.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut buf, &self.forward);
        for (c, g) in buf.iter_mut().zip(&self.gains) {
            *c *= g;
        }
        self.transform(&mut buf, &self.inverse);
        let scale = 1.0 / (n * n) as f64;
        for (dst, c) in image.iter_mut().zip(&buf) {
            *dst = c.re * scale;
        }
    }

    fn transform(&self, buf: &mut [Complex<f64>], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        for row in buf.chunks_exact_mut(n) {
            fft.process(row);
        }
        let mut column = vec![Complex::new(0.0, 0.0); n];
        for c in 0..n {
            for r in 0..n {
                column[r] = buf[r * n + c];
            }
            fft.process(&mut column);
            for r in 0..n {
                buf[r * n + c] = column[r];
            }
        }
    }
}
