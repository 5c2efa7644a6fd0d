//! Square-ish integer rasters and binary PGM input/output.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{domain, shape, Error, Result};

/// A 2-D grayscale raster with integer intensities in `[0, 2^B - 1]`.
///
/// Pixels are stored row-major. Only 8- and 16-bit depths are supported.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    bit_depth: u8,
    pixels: Vec<u16>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, bit_depth: u8, pixels: Vec<u16>) -> Result<Self> {
        check_depth(bit_depth)?;
        if width == 0 || height == 0 {
            return Err(Error::Empty("image dimensions"));
        }
        if pixels.len() != width * height {
            return Err(shape(width * height, pixels.len()));
        }
        let max = max_value(bit_depth);
        if let Some(v) = pixels.iter().find(|&&v| f64::from(v) > max) {
            return Err(domain(format!("pixel value {v} exceeds {bit_depth}-bit range")));
        }
        Ok(Self { width, height, bit_depth, pixels })
    }

    pub fn filled(width: usize, height: usize, bit_depth: u8, value: u16) -> Result<Self> {
        Self::new(width, height, bit_depth, vec![value; width * height])
    }

    /// Quantizes a real-valued field: clip to `[0, 2^B - 1]`, then round half away from zero.
    pub fn from_real(width: usize, height: usize, bit_depth: u8, values: &[f64]) -> Result<Self> {
        check_depth(bit_depth)?;
        if values.len() != width * height {
            return Err(shape(width * height, values.len()));
        }
        let max = max_value(bit_depth);
        let pixels = values.iter().map(|&v| quantize(v, max)).collect();
        Self::new(width, height, bit_depth, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    /// `2^B - 1` as a float.
    pub fn max_value(&self) -> f64 {
        max_value(self.bit_depth)
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.pixels[row * self.width + col]
    }

    pub fn is_square(&self) -> bool {
        self.width == self.height
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| f64::from(p)).collect()
    }

    pub fn same_shape(&self, other: &ImageGrid) -> Result<()> {
        if self.width != other.width || self.height != other.height || self.bit_depth != other.bit_depth {
            return Err(shape(
                format!("{}x{}@{}", self.width, self.height, self.bit_depth),
                format!("{}x{}@{}", other.width, other.height, other.bit_depth),
            ));
        }
        Ok(())
    }

    /// Rescales to another bit depth. 8→16 multiplies by 257 so 255 maps to 65535.
    pub fn convert_depth(&self, bit_depth: u8) -> Result<Self> {
        check_depth(bit_depth)?;
        let pixels = match (self.bit_depth, bit_depth) {
            (a, b) if a == b => self.pixels.clone(),
            (8, 16) => self.pixels.iter().map(|&p| p * 257).collect(),
            _ => {
                let scale = max_value(bit_depth) / self.max_value();
                self.pixels.iter().map(|&p| quantize(f64::from(p) * scale, max_value(bit_depth))).collect()
            }
        };
        Self::new(self.width, self.height, bit_depth, pixels)
    }

    /// Writes binary PGM (`P5`). 16-bit images use two big-endian bytes per sample.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "P5\n{} {}\n{}\n", self.width, self.height, max_value(self.bit_depth) as u32)?;
        if self.bit_depth == 8 {
            let bytes: Vec<u8> = self.pixels.iter().map(|&p| p as u8).collect();
            out.write_all(&bytes)?;
        } else {
            let mut bytes = Vec::with_capacity(self.pixels.len() * 2);
            for &p in &self.pixels {
                bytes.extend_from_slice(&p.to_be_bytes());
            }
            out.write_all(&bytes)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|source| Error::File { path: path.into(), source })?;
        self.write_pgm(BufWriter::new(file))
    }

    /// Reads binary PGM. `maxval` 255 gives an 8-bit grid and 65535 a 16-bit grid;
    /// any other `maxval` is rescaled onto the nearer of the two.
    pub fn read_pgm<R: Read>(input: R) -> Result<Self> {
        let mut data = Vec::new();
        BufReader::new(input).read_to_end(&mut data)?;
        let mut cursor = 0usize;
        let magic = next_token(&data, &mut cursor)?;
        if magic != b"P5" {
            return Err(pgm_err("missing P5 magic"));
        }
        let width = parse_num(next_token(&data, &mut cursor)?)?;
        let height = parse_num(next_token(&data, &mut cursor)?)?;
        let maxval = parse_num(next_token(&data, &mut cursor)?)?;
        if maxval == 0 || maxval > 65535 {
            return Err(pgm_err("maxval out of range"));
        }
        // exactly one whitespace byte separates the header from the raster
        cursor += 1;
        let wide = maxval > 255;
        let need = width * height * if wide { 2 } else { 1 };
        let raster = data.get(cursor..cursor + need).ok_or_else(|| pgm_err("truncated raster"))?;
        let raw: Vec<u16> = if wide {
            raster.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect()
        } else {
            raster.iter().map(|&b| u16::from(b)).collect()
        };
        let bit_depth = if wide { 16 } else { 8 };
        let target = max_value(bit_depth);
        let pixels = if (maxval as f64 - target).abs() < 0.5 {
            raw
        } else {
            let scale = target / maxval as f64;
            raw.iter().map(|&p| quantize(f64::from(p.min(maxval as u16)) * scale, target)).collect()
        };
        Self::new(width, height, bit_depth, pixels)
    }

    pub fn load_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|source| Error::File { path: path.into(), source })?;
        Self::read_pgm(file)
    }
}

pub(crate) fn max_value(bit_depth: u8) -> f64 {
    ((1u32 << bit_depth) - 1) as f64
}

pub(crate) fn quantize(value: f64, max: f64) -> u16 {
    if value.is_nan() {
        return 0;
    }
    value.clamp(0.0, max).round() as u16
}

fn check_depth(bit_depth: u8) -> Result<()> {
    match bit_depth {
        8 | 16 => Ok(()),
        other => Err(domain(format!("unsupported bit depth {other}"))),
    }
}

fn pgm_err(reason: &str) -> Error {
    Error::Format { kind: "PGM", reason: reason.to_string() }
}

fn next_token<'a>(data: &'a [u8], cursor: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *cursor < data.len() && data[*cursor].is_ascii_whitespace() {
            *cursor += 1;
        }
        if *cursor < data.len() && data[*cursor] == b'#' {
            while *cursor < data.len() && data[*cursor] != b'\n' {
                *cursor += 1;
            }
            continue;
        }
        break;
    }
    let start = *cursor;
    while *cursor < data.len() && !data[*cursor].is_ascii_whitespace() {
        *cursor += 1;
    }
    if start == *cursor {
        return Err(pgm_err("unexpected end of header"));
    }
    Ok(&data[start..*cursor])
}

fn parse_num(token: &[u8]) -> Result<usize> {
    std::str::from_utf8(token).ok().and_then(|s| s.parse().ok()).ok_or_else(|| pgm_err("non-numeric header field"))
}
