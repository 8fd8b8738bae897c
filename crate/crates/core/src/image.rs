//! Linear RGB image buffers and their on-disk forms: 8-bit sRGB PNG and an
//! exact little-endian f32 raw dump.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::math::Real;

/// Interleaved linear RGB, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub data: Vec<Real>,
}

/// Single-channel image in [0, 1] (masks).
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<Real>,
}

impl Image {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; 3 * width as usize * height as usize],
        }
    }

    pub fn filled(width: u32, height: u32, rgb: [Real; 3]) -> Self {
        let mut img = Self::new(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn pixel(&self, x: u32, y: u32) -> [Real; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn same_size(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn max_abs_diff(&self, other: &Image) -> Real {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, Real::max)
    }

    pub fn to_srgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| linear_to_srgb8(v)).collect()
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        ::image::RgbImage::from_raw(self.width, self.height, self.to_srgb8())
            .expect("buffer size matches dimensions")
            .write_to(&mut Cursor::new(&mut out), ::image::ImageFormat::Png)
            .map_err(|e| Error::Image {
                path: "<memory>".into(),
                message: e.to_string(),
            })?;
        Ok(out)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.encode_png()?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Reads an 8-bit PNG and converts sRGB to linear.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = ::image::open(path)
            .map_err(|e| Error::Image {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?
            .to_rgb8();
        Ok(Self {
            width: img.width(),
            height: img.height(),
            data: img.as_raw().iter().map(|&b| srgb8_to_linear(b)).collect(),
        })
    }

    /// Exact f32 dump: `MSRAW\0\0\0`, width, height, channels, then samples.
    pub fn save_raw(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::with_capacity(20 + 4 * self.data.len());
        out.extend_from_slice(b"MSRAW\0\0\0");
        out.write_u32::<LittleEndian>(self.width).unwrap();
        out.write_u32::<LittleEndian>(self.height).unwrap();
        out.write_u32::<LittleEndian>(3).unwrap();
        for &v in &self.data {
            out.write_f32::<LittleEndian>(v as f32).unwrap();
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load_raw(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let fmt = |offset: u64, message: &str| Error::Format {
            path: path.to_path_buf(),
            offset,
            message: message.into(),
        };
        let mut cur = Cursor::new(&bytes);
        let mut magic = [0u8; 8];
        cur.read_exact(&mut magic).map_err(|_| fmt(0, "truncated header"))?;
        if &magic != b"MSRAW\0\0\0" {
            return Err(fmt(0, "bad magic"));
        }
        let mut dims = [0u32; 3];
        for d in &mut dims {
            *d = cur
                .read_u32::<LittleEndian>()
                .map_err(|_| fmt(cur.position(), "truncated header"))?;
        }
        let [width, height, channels] = dims;
        if channels != 3 {
            return Err(fmt(16, "only 3-channel dumps are supported"));
        }
        let n = 3 * width as usize * height as usize;
        if bytes.len() != 20 + 4 * n {
            return Err(fmt(bytes.len() as u64, "payload size does not match header"));
        }
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(cur.read_f32::<LittleEndian>().unwrap() as Real);
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }
}

impl Mask {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width as usize * height as usize],
        }
    }

    /// Grayscale PNG, values mapped linearly to [0, 1].
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = ::image::open(path)
            .map_err(|e| Error::Image {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?
            .to_luma8();
        Ok(Self {
            width: img.width(),
            height: img.height(),
            data: img.as_raw().iter().map(|&b| b as Real / 255.0).collect(),
        })
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        ::image::GrayImage::from_raw(self.width, self.height, bytes)
            .expect("buffer size matches dimensions")
            .save(path)
            .map_err(|e| Error::Image {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
    }
}

pub fn linear_to_srgb8(v: Real) -> u8 {
    let x = v.clamp(0.0, 1.0);
    let s = if x <= 0.0031308 {
        12.92 * x
    } else {
        1.055 * x.powf(1.0 / 2.4) - 0.055
    };
    (s * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn srgb8_to_linear(b: u8) -> Real {
    let s = b as Real / 255.0;
    if s <= 0.04045 {
        s / 12.92
    } else {
        ((s + 0.055) / 1.055).powf(2.4)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn srgb_round_trips_every_byte() {
        for b in 0..=255u8 {
            assert_eq!(linear_to_srgb8(srgb8_to_linear(b)), b);
        }
    }

    #[test]
    fn raw_dump_is_lossless_for_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = Image::new(3, 2);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i as f32 * 0.123_456_7) as Real;
        }
        let p = dir.path().join("a.raw");
        img.save_raw(&p).unwrap();
        assert_eq!(Image::load_raw(&p).unwrap(), img);
    }

    #[test]
    fn png_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::filled(4, 4, [0.2, 0.5, 0.9]);
        let p = dir.path().join("a.png");
        img.save_png(&p).unwrap();
        let back = Image::load_png(&p).unwrap();
        assert!(back.max_abs_diff(&img) < 0.01);
    }
}
