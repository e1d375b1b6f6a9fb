//! Grayscale raster helpers shared by every stage of the pipeline.

use std::path::Path;

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};

use crate::error::RasterError;

/// Axis-aligned pixel rectangle, half-open on the right and bottom edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub fn new(x: u32, y: u32, width: u32, height: u32) -> Self {
        Rect {
            x,
            y,
            width,
            height,
        }
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.width && y < self.y + self.height
    }

    pub fn right(&self) -> u32 {
        self.x + self.width
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.height
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }
}

/// Binary mask; `true` marks pixels to be completed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(width: u32, height: u32) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; (width * height) as usize],
        }
    }

    pub fn from_rect(width: u32, height: u32, rect: Rect) -> Self {
        let mut mask = Mask::empty(width, height);
        for y in rect.y..rect.bottom().min(height) {
            for x in rect.x..rect.right().min(width) {
                mask.set(x, y, true);
            }
        }
        mask
    }

    /// Any nonzero pixel counts as masked.
    pub fn from_image(img: &GrayImage) -> Self {
        let (width, height) = img.dimensions();
        Mask {
            width,
            height,
            bits: img.as_raw().iter().map(|&v| v != 0).collect(),
        }
    }

    /// 0/255 encoding used by the directory protocol.
    pub fn to_image(&self) -> GrayImage {
        let raw = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        GrayImage::from_raw(self.width, self.height, raw).expect("mask buffer size")
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.bits[(y * self.width + x) as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.bits
    }

    /// Tight bounding box of the masked pixels, `None` for an empty mask.
    pub fn bounding_rect(&self) -> Option<Rect> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    any = true;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        any.then(|| Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }

    /// True when no masked pixel lies on the outermost row or column.
    pub fn is_strictly_interior(&self) -> bool {
        match self.bounding_rect() {
            None => false,
            Some(r) => r.x > 0 && r.y > 0 && r.right() < self.width && r.bottom() < self.height,
        }
    }
}

pub fn crop(img: &GrayImage, rect: Rect) -> GrayImage {
    GrayImage::from_fn(rect.width, rect.height, |x, y| {
        *img.get_pixel(rect.x + x, rect.y + y)
    })
}

pub fn paste(dst: &mut GrayImage, src: &GrayImage, x0: u32, y0: u32) {
    for (x, y, p) in src.enumerate_pixels() {
        let (dx, dy) = (x0 + x, y0 + y);
        if dx < dst.width() && dy < dst.height() {
            dst.put_pixel(dx, dy, *p);
        }
    }
}

pub fn filled(width: u32, height: u32, value: u8) -> GrayImage {
    GrayImage::from_pixel(width, height, Luma([value]))
}

pub fn load_gray(path: &Path) -> Result<GrayImage, RasterError> {
    let img = image::open(path).map_err(|source| RasterError::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(img.into_luma8())
}

pub fn save_gray(img: &GrayImage, path: &Path) -> Result<(), RasterError> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| RasterError::Encode {
            path: path.to_path_buf(),
            source,
        })
}

/// Maximum absolute per-pixel difference outside the mask.
pub fn max_unmasked_delta(a: &GrayImage, b: &GrayImage, mask: &Mask) -> u8 {
    a.as_raw()
        .iter()
        .zip(b.as_raw())
        .zip(mask.as_slice())
        .filter(|(_, &m)| !m)
        .map(|((&p, &q), _)| p.abs_diff(q))
        .max()
        .unwrap_or(0)
}
