//! Image-quality metrics and degradation transforms.

use crate::error::{domain, Error, Result};
use crate::raster::ImageGrid;

/// PSNR in dB together with the MSE it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsnrResult {
    pub psnr_db: f64,
    pub mse: f64,
    pub bit_depth: u8,
}

/// Largest attainable PSNR, `20 log10(2^B - 1)`; 96.33 dB at 16 bits.
pub fn psnr_cap(bit_depth: u8) -> f64 {
    20.0 * (((1u32 << bit_depth) - 1) as f64).log10()
}

pub fn mse(test: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    test.same_shape(reference)?;
    let sum: f64 = test
        .pixels()
        .iter()
        .zip(reference.pixels())
        .map(|(&a, &b)| {
            let d = f64::from(a) - f64::from(b);
            d * d
        })
        .sum();
    Ok(sum / test.pixels().len() as f64)
}

/// PSNR with the hard cap: below unit MSE the discrete images are treated as identical.
pub fn psnr(test: &ImageGrid, reference: &ImageGrid) -> Result<PsnrResult> {
    let mse = mse(test, reference)?;
    Ok(PsnrResult { psnr_db: psnr_from_mse(mse, test.bit_depth()), mse, bit_depth: test.bit_depth() })
}

pub fn psnr_from_mse(mse: f64, bit_depth: u8) -> f64 {
    if mse >= 1.0 {
        let peak = ((1u32 << bit_depth) - 1) as f64;
        20.0 * (peak / mse.sqrt()).log10()
    } else {
        psnr_cap(bit_depth)
    }
}

/// Orthonormal DCT-II basis for length `n`, row `k` holding `α(k) cos(π (2i + 1) k / 2n)`.
#[derive(Debug, Clone)]
pub struct DctBasis {
    n: usize,
    rows: Vec<f64>,
}

impl DctBasis {
    pub fn new(n: usize) -> Self {
        let mut rows = Vec::with_capacity(n * n);
        for k in 0..n {
            let alpha = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            for i in 0..n {
                rows.push(alpha * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos());
            }
        }
        Self { n, rows }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// 2-D forward transform of a row-major `n × n` field.
    pub fn forward(&self, data: &[f64]) -> Vec<f64> {
        let rows = self.rows_pass(data, false);
        transpose(&self.rows_pass(&transpose(&rows, self.n), false), self.n)
    }

    pub fn inverse(&self, coeffs: &[f64]) -> Vec<f64> {
        let rows = self.rows_pass(coeffs, true);
        transpose(&self.rows_pass(&transpose(&rows, self.n), true), self.n)
    }

    /// Applies the basis (or its transpose) along every row.
    fn rows_pass(&self, data: &[f64], inverse: bool) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for (src, dst) in data.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
            if inverse {
                for (k, &c) in src.iter().enumerate() {
                    if c != 0.0 {
                        let basis = &self.rows[k * n..(k + 1) * n];
                        for (d, b) in dst.iter_mut().zip(basis) {
                            *d += c * b;
                        }
                    }
                }
            } else {
                for (k, d) in dst.iter_mut().enumerate() {
                    let basis = &self.rows[k * n..(k + 1) * n];
                    *d = basis.iter().zip(src).map(|(b, x)| b * x).sum();
                }
            }
        }
        out
    }
}

fn transpose(data: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            out[c * n + r] = data[r * n + c];
        }
    }
    out
}

/// Number of coefficients kept for a fraction of `total`: `⌈keep · total⌉`.
pub fn kept_count(keep_fraction: f64, total: usize) -> usize {
    // absorb representation error such as 0.3 * 10 = 3.0000000000000004
    let exact = keep_fraction * total as f64;
    ((exact - 1e-9 * exact.max(1.0)).ceil().max(1.0) as usize).min(total)
}

/// Full-frame DCT of one image with coefficients ranked by magnitude.
///
/// Ties in magnitude keep the lower row-major index first. The DC term is ranked
/// like every other coefficient.
#[derive(Debug, Clone)]
pub struct DctSparsifier {
    basis: DctBasis,
    coeffs: Vec<f64>,
    order: Vec<usize>,
    bit_depth: u8,
}

impl DctSparsifier {
    pub fn new(image: &ImageGrid) -> Result<Self> {
        if !image.is_square() {
            return Err(domain("DCT sparsification needs a square image"));
        }
        let basis = DctBasis::new(image.width());
        let coeffs = basis.forward(&image.to_f64());
        let mut order: Vec<usize> = (0..coeffs.len()).collect();
        order.sort_by(|&a, &b| coeffs[b].abs().total_cmp(&coeffs[a].abs()).then(a.cmp(&b)));
        Ok(Self { basis, coeffs, order, bit_depth: image.bit_depth() })
    }

    pub fn coefficient_count(&self) -> usize {
        self.coeffs.len()
    }

    /// Real-valued inverse using the `count` largest coefficients.
    pub fn reconstruct_real(&self, count: usize) -> Vec<f64> {
        let mut kept = vec![0.0; self.coeffs.len()];
        for &i in self.order.iter().take(count) {
            kept[i] = self.coeffs[i];
        }
        self.basis.inverse(&kept)
    }

    pub fn reconstruct(&self, count: usize) -> ImageGrid {
        let n = self.basis.len();
        ImageGrid::from_real(n, n, self.bit_depth, &self.reconstruct_real(count)).expect("inverse DCT preserves the image shape")
    }

    pub fn at_fraction(&self, keep_fraction: f64) -> Result<ImageGrid> {
        check_keep(keep_fraction)?;
        Ok(self.reconstruct(kept_count(keep_fraction, self.coefficient_count())))
    }
}

fn check_keep(keep_fraction: f64) -> Result<()> {
    if keep_fraction > 0.0 && keep_fraction <= 1.0 {
        Ok(())
    } else {
        Err(domain(format!("keep fraction must lie in (0, 1], got {keep_fraction}")))
    }
}

/// Keeps the `⌈keep · N⌉` largest-magnitude DCT coefficients and inverts.
pub fn dct_sparsify(image: &ImageGrid, keep_fraction: f64) -> Result<ImageGrid> {
    check_keep(keep_fraction)?;
    DctSparsifier::new(image)?.at_fraction(keep_fraction)
}

/// Smallest kept fraction (found by bisection) at which the sparse image reaches the PSNR cap.
///
/// This is the sparsity measure of an image: sparser images need fewer coefficients.
pub fn keep_fraction_to_cap(image: &ImageGrid) -> Result<f64> {
    let sparse = DctSparsifier::new(image)?;
    let total = sparse.coefficient_count();
    let reaches = |count: usize| -> bool { mse(&sparse.reconstruct(count), image).map(|m| m < 1.0).unwrap_or(false) };
    let (mut lo, mut hi) = (0usize, total);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if reaches(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let count = if lo >= 1 && reaches(lo) { lo } else { hi };
    Ok(count as f64 / total as f64)
}

/// Normalized 1-D Gaussian taps on `[-⌈4σ⌉, ⌈4σ⌉]`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius).map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Half-sample symmetric reflection of an index into `[0, n)`.
fn reflect(i: i64, n: usize) -> usize {
    let period = 2 * n as i64;
    let m = i.rem_euclid(period);
    if m >= n as i64 {
        (period - 1 - m) as usize
    } else {
        m as usize
    }
}

/// Separable Gaussian blur of a real `width × height` field with reflected edges.
pub fn gaussian_filter_real(data: &[f64], width: usize, height: usize, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(domain(format!("sigma must be non-negative, got {sigma}")));
    }
    if data.len() != width * height {
        return Err(crate::error::shape(width * height, data.len()));
    }
    if sigma == 0.0 {
        return Ok(data.to_vec());
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let mut tmp = vec![0.0; data.len()];
    for r in 0..height {
        for c in 0..width {
            tmp[r * width + c] =
                kernel.iter().enumerate().map(|(k, w)| w * data[r * width + reflect(c as i64 + k as i64 - radius, width)]).sum();
        }
    }
    let mut out = vec![0.0; data.len()];
    for r in 0..height {
        for c in 0..width {
            out[r * width + c] =
                kernel.iter().enumerate().map(|(k, w)| w * tmp[reflect(r as i64 + k as i64 - radius, height) * width + c]).sum();
        }
    }
    Ok(out)
}

pub fn gaussian_filter(image: &ImageGrid, sigma: f64) -> Result<ImageGrid> {
    let out = gaussian_filter_real(&image.to_f64(), image.width(), image.height(), sigma)?;
    ImageGrid::from_real(image.width(), image.height(), image.bit_depth(), &out)
}

/// `to × from` area-averaging matrix (row-major) with box-overlap weights.
fn area_average_matrix(from: usize, to: usize) -> Vec<f64> {
    let scale = from as f64 / to as f64;
    let mut m = vec![0.0; to * from];
    for p in 0..to {
        let (lo, hi) = (p as f64 * scale, (p + 1) as f64 * scale);
        let first = lo.floor() as usize;
        let last = (hi.ceil() as usize).min(from);
        for q in first..last {
            let overlap = (hi.min((q + 1) as f64) - lo.max(q as f64)).max(0.0);
            m[p * from + q] = overlap / scale;
        }
    }
    m
}

/// `to × from` bilinear interpolation matrix with pixel-centre alignment.
fn bilinear_matrix(from: usize, to: usize) -> Vec<f64> {
    let mut m = vec![0.0; to * from];
    let scale = from as f64 / to as f64;
    for i in 0..to {
        let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (from - 1) as f64);
        let i0 = src.floor() as usize;
        let i1 = (i0 + 1).min(from - 1);
        let f = src - i0 as f64;
        m[i * from + i0] += 1.0 - f;
        m[i * from + i1] += f;
    }
    m
}

/// `A X Aᵀ` for a row-major `out × inp` matrix `A` and `inp × inp` field `X`.
fn separable(a: &[f64], x: &[f64], out: usize, inp: usize) -> Vec<f64> {
    // rows: Y = X Aᵀ  (inp × out)
    let mut y = vec![0.0; inp * out];
    for r in 0..inp {
        let row = &x[r * inp..(r + 1) * inp];
        for c in 0..out {
            y[r * out + c] = a[c * inp..(c + 1) * inp].iter().zip(row).map(|(w, v)| w * v).sum();
        }
    }
    // columns: Z = A Y  (out × out)
    let mut z = vec![0.0; out * out];
    for r in 0..out {
        let weights = &a[r * inp..(r + 1) * inp];
        for (q, &w) in weights.iter().enumerate() {
            if w != 0.0 {
                for c in 0..out {
                    z[r * out + c] += w * y[q * out + c];
                }
            }
        }
    }
    z
}

/// Focal-plane-array model: area-average down to `fpa_size²`, bilinear back up, quantize.
pub fn fpa_simulate(image: &ImageGrid, fpa_size: usize) -> Result<ImageGrid> {
    if !image.is_square() {
        return Err(domain("FPA simulation needs a square image"));
    }
    let n = image.width();
    if fpa_size == 0 || fpa_size > n {
        return Err(Error::Domain(format!("FPA size must lie in [1, {n}], got {fpa_size}")));
    }
    let down = separable(&area_average_matrix(n, fpa_size), &image.to_f64(), fpa_size, n);
    let up = separable(&bilinear_matrix(fpa_size, n), &down, n, fpa_size);
    ImageGrid::from_real(n, n, image.bit_depth(), &up)
}
