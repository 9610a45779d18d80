//! Image loading, grayscale normalization and block fragmentation.
//!
//! Color inputs are converted with integer BT.601 luma
//! `(299 R + 587 G + 114 B + 500) / 1000`, i.e. `0.299R + 0.587G + 0.114B`
//! rounded half-up. Images smaller than one analysis block in either
//! dimension are rejected.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};
use ndarray::Array2;
use thiserror::Error;

/// Side length of an analysis block.
pub const BLOCK_SIZE: usize = 256;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot decode {path}: {reason}")]
    Decode { path: String, reason: String },
    #[error("image is {width}x{height}, both sides must be at least {min}")]
    TooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("pixel buffer has {got} values, expected {expected}")]
    BufferSize { got: usize, expected: usize },
    #[error("cannot encode {path}: {reason}")]
    Encode { path: String, reason: String },
}

/// 8-bit grayscale image stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    /// Wraps a row-major buffer. Enforces the minimum block size.
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if pixels.len() != width * height {
            return Err(ImageError::BufferSize {
                got: pixels.len(),
                expected: width * height,
            });
        }
        if width < BLOCK_SIZE || height < BLOCK_SIZE {
            return Err(ImageError::TooSmall {
                width,
                height,
                min: BLOCK_SIZE,
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self, ImageError> {
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self::new(width, height, pixels)
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

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    /// Pixels as a `height × width` float array.
    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.height, self.width), |(r, c)| self.get(r, c) as f64)
    }

    /// Writes the image as an 8-bit grayscale PNG.
    pub fn save_png(&self, path: &Path) -> Result<(), ImageError> {
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
                .expect("buffer size checked at construction");
        buf.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| ImageError::Encode {
                path: path.display().to_string(),
                reason: e.to_string(),
            })
    }
}

/// BT.601 luma with integer half-up rounding.
pub fn luma_bt601(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

/// Loads a PNG/BMP/JPEG file as 8-bit grayscale.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    let path = path.as_ref();
    let decoded = image::ImageReader::open(path)
        .and_then(|r| r.with_guessed_format())
        .map_err(|e| ImageError::Decode {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?
        .decode()
        .map_err(|e| ImageError::Decode {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
    to_gray(&decoded)
}

/// Converts any decoded raster to 8-bit grayscale.
pub fn to_gray(img: &DynamicImage) -> Result<GrayImage, ImageError> {
    let (width, height) = (img.width() as usize, img.height() as usize);
    let pixels = match img {
        DynamicImage::ImageLuma8(buf) => buf.as_raw().clone(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0]).collect(),
        DynamicImage::ImageLuma16(buf) => buf.pixels().map(|p| scale16(p.0[0])).collect(),
        DynamicImage::ImageLumaA16(buf) => buf.pixels().map(|p| scale16(p.0[0])).collect(),
        DynamicImage::ImageRgb8(buf) => {
            buf.pixels().map(|p| luma_bt601(p[0], p[1], p[2])).collect()
        }
        DynamicImage::ImageRgba8(buf) => {
            buf.pixels().map(|p| luma_bt601(p[0], p[1], p[2])).collect()
        }
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| luma_bt601(p[0], p[1], p[2]))
            .collect(),
    };
    GrayImage::new(width, height, pixels)
}

fn scale16(v: u16) -> u8 {
    ((v as u32 * 255 + 32767) / 65535) as u8
}

/// How partial tiles at the right/bottom edge are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlockPolicy {
    /// Add one extra column/row of tiles flush with the edge; may overlap interior tiles.
    #[default]
    Flush,
    /// Keep only the non-overlapping grid tiles; edge remainders are dropped.
    Discard,
}

impl BlockPolicy {
    pub fn name(self) -> &'static str {
        match self {
            BlockPolicy::Flush => "flush",
            BlockPolicy::Discard => "discard",
        }
    }
}

impl std::str::FromStr for BlockPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "flush" => Ok(BlockPolicy::Flush),
            "discard" => Ok(BlockPolicy::Discard),
            other => Err(format!("unknown block policy `{other}` (flush|discard)")),
        }
    }
}

/// Analysis tiles of one image together with their top-left anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSet {
    pub blocks: Vec<Array2<f64>>,
    pub origins: Vec<(usize, usize)>,
}

impl BlockSet {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

fn anchors(extent: usize, policy: BlockPolicy) -> Vec<usize> {
    let mut out: Vec<usize> = (0..extent / BLOCK_SIZE).map(|i| i * BLOCK_SIZE).collect();
    if policy == BlockPolicy::Flush && extent % BLOCK_SIZE != 0 {
        out.push(extent - BLOCK_SIZE);
    }
    out
}

/// Cuts an image into 256×256 tiles, row-major by anchor.
pub fn fragment(img: &GrayImage, policy: BlockPolicy) -> BlockSet {
    let rows = anchors(img.height, policy);
    let cols = anchors(img.width, policy);
    let mut blocks = Vec::with_capacity(rows.len() * cols.len());
    let mut origins = Vec::with_capacity(rows.len() * cols.len());
    for &r0 in &rows {
        for &c0 in &cols {
            blocks.push(Array2::from_shape_fn((BLOCK_SIZE, BLOCK_SIZE), |(r, c)| {
                img.get(r0 + r, c0 + c) as f64
            }));
            origins.push((r0, c0));
        }
    }
    BlockSet { blocks, origins }
}
