//! In-memory RGB images and their file encodings.
//!
//! Pixels keep raw, unclamped values so losses see overexposed regions.
//! Clamping and 8-bit quantization happen only when writing PPM. The raw
//! float dump keeps full precision for quantization-free targets:
//!
//! ```text
//! b"DTRAW32\n" | width: u32 LE | height: u32 LE | width*height*3 f32 LE
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::{Real, Vec3};

const RAW_MAGIC: &[u8; 8] = b"DTRAW32\n";

#[derive(Clone, Debug, PartialEq)]
pub struct Image<R> {
    pub width: usize,
    pub height: usize,
    /// Row-major from the top-left.
    pub pixels: Vec<Vec3<R>>,
}

impl<R: Real> Image<R> {
    pub fn new(width: usize, height: usize, pixels: Vec<Vec3<R>>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Image(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Image { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, color: Vec3<R>) -> Self {
        Image {
            width,
            height,
            pixels: vec![color; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> Vec3<R> {
        self.pixels[row * self.width + col]
    }

    pub fn same_shape(&self, other: &Image<R>) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn cast<T: Real>(&self) -> Image<T> {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|p| p.map(|c| T::of(c.as_f64()))).collect(),
        }
    }

    /// Largest per-channel absolute difference.
    pub fn max_abs_diff(&self, other: &Image<R>) -> Result<R> {
        self.same_shape(other)?;
        Ok(self
            .pixels
            .iter()
            .zip(&other.pixels)
            .flat_map(|(a, b)| (*a - *b).to_array())
            .map(num_traits::Float::abs)
            .fold(R::of(0.0), num_traits::Float::max))
    }

    /// 8-bit RGB triples: `round(clamp01(c) * 255)`.
    pub fn quantize(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .flat_map(|p| p.to_array())
            .map(|c| {
                let c = c.as_f64();
                let c = if c.is_nan() { 0.0 } else { c.clamp(0.0, 1.0) };
                (c * 255.0).round() as u8
            })
            .collect()
    }

    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.quantize());
        out
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode_ppm()).map_err(|e| Error::io(path, e))
    }

    pub fn decode_ppm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut header = Vec::with_capacity(4);
        while header.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Image("truncated PPM header".into()));
            }
            header.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        if header[0] != "P6" {
            return Err(Error::Image(format!("unsupported PPM magic `{}`", header[0])));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Image(format!("bad PPM header field `{s}`")));
        let (width, height, maxval) = (num(&header[1])?, num(&header[2])?, num(&header[3])?);
        if maxval == 0 || maxval > 255 {
            return Err(Error::Image(format!("unsupported PPM maxval {maxval}")));
        }
        let need = width * height * 3;
        let raster = bytes
            .get(pos..pos + need)
            .ok_or_else(|| Error::Image("truncated PPM raster".into()))?;
        let scale = maxval as f64;
        let pixels = raster
            .chunks_exact(3)
            .map(|c| Vec3::new(c[0], c[1], c[2]).map(|b| R::of(b as f64 / scale)))
            .collect();
        Image::new(width, height, pixels)
    }

    pub fn read_ppm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_ppm(&bytes)
    }

    pub fn encode_raw(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.pixels.len() * 12);
        out.extend_from_slice(RAW_MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for p in &self.pixels {
            for c in p.to_array() {
                out.extend_from_slice(&(c.as_f64() as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn decode_raw(mut bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Image(format!("raw image: {m}"));
        let mut magic = [0u8; 8];
        bytes.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != RAW_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut word = [0u8; 4];
        bytes.read_exact(&mut word).map_err(|_| bad("truncated header"))?;
        let width = u32::from_le_bytes(word) as usize;
        bytes.read_exact(&mut word).map_err(|_| bad("truncated header"))?;
        let height = u32::from_le_bytes(word) as usize;
        if bytes.len() != width * height * 12 {
            return Err(bad("payload size does not match dimensions"));
        }
        let pixels = bytes
            .chunks_exact(12)
            .map(|c| {
                let ch = |k: usize| R::of(f32::from_le_bytes([c[k], c[k + 1], c[k + 2], c[k + 3]]) as f64);
                Vec3::new(ch(0), ch(4), ch(8))
            })
            .collect();
        Image::new(width, height, pixels)
    }

    pub fn write_raw(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.encode_raw()).map_err(|e| Error::io(path, e))
    }

    pub fn read_raw(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_raw(&bytes)
    }
}
