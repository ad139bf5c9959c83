//! 8-bit grayscale images, binary masks and their PGM encoding.

use std::fs;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ColorType, ExtendedColorType, ImageEncoder, ImageFormat};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("dimension mismatch: {0}")]
    ShapeMismatch(String),
    #[error("mask contains a value other than 0 and 255: {0}")]
    NonBinaryMask(u8),
    #[error("not an 8-bit grayscale PGM: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major 8-bit grayscale pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if pixels.len() != width * height {
            return Err(RasterError::ShapeMismatch(format!(
                "{width}x{height} image given {} pixels",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.pixels.len() + 20);
        PnmEncoder::new(&mut out)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(
                &self.pixels,
                self.width as u32,
                self.height as u32,
                ExtendedColorType::L8,
            )
            .expect("in-memory PGM encoding");
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self, RasterError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Pnm)
            .map_err(|e| RasterError::Format(e.to_string()))?;
        if img.color() != ColorType::L8 {
            return Err(RasterError::Format(format!("color type {:?}", img.color())));
        }
        let luma = img.into_luma8();
        let (w, h) = luma.dimensions();
        Self::new(w as usize, h as usize, luma.into_raw())
    }

    pub fn read(path: &Path) -> Result<Self, RasterError> {
        Self::from_pgm(&fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), RasterError> {
        fs::write(path, self.to_pgm())?;
        Ok(())
    }
}

/// Row-major mask of `0`/`1` values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, RasterError> {
        if bits.len() != width * height {
            return Err(RasterError::ShapeMismatch(format!(
                "{width}x{height} mask given {} values",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits: bits.into_iter().map(u8::from).collect(),
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(u8::from(f(x, y)));
            }
        }
        Self { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x] != 0
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = u8::from(v);
    }

    /// Values in row-major order, each `0` or `1`.
    pub fn values(&self) -> &[u8] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b != 0).count()
    }

    /// Grayscale rendering with foreground at 255.
    pub fn to_image(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.bits.iter().map(|b| b * 255).collect(),
        }
    }

    /// Accepts only images whose pixels are all 0 or 255.
    pub fn from_image(img: &GrayImage) -> Result<Self, RasterError> {
        let bits = img
            .pixels
            .iter()
            .map(|p| match p {
                0 => Ok(0),
                255 => Ok(1),
                v => Err(RasterError::NonBinaryMask(*v)),
            })
            .collect::<Result<Vec<u8>, _>>()?;
        Ok(Self {
            width: img.width,
            height: img.height,
            bits,
        })
    }

    pub fn read(path: &Path) -> Result<Self, RasterError> {
        Self::from_image(&GrayImage::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), RasterError> {
        self.to_image().write(path)
    }
}

/// An eye image with its iris mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImage {
    pub image: GrayImage,
    pub mask: BinaryMask,
}

impl LabeledImage {
    pub fn new(image: GrayImage, mask: BinaryMask) -> Result<Self, RasterError> {
        if image.width != mask.width || image.height != mask.height {
            return Err(RasterError::ShapeMismatch(format!(
                "image {}x{} vs mask {}x{}",
                image.width, image.height, mask.width, mask.height
            )));
        }
        Ok(Self { image, mask })
    }

    pub fn width(&self) -> usize {
        self.image.width
    }

    pub fn height(&self) -> usize {
        self.image.height
    }
}
