//! Aliasing-free rasterization of matrix items.
//!
//! Every pixel is tested once at its centre against the exact shape, using
//! only IEEE basic arithmetic (rotations are multiples of 45°, so the
//! trigonometry is the constants 0, 1 and 1/√2). Output is therefore
//! byte-identical across platforms.

use std::f64::consts::FRAC_1_SQRT_2;

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};

use super::shape::{ShapeKind, ShapeSpec};
use super::MatrixItem;
use crate::raster::{self, Mask, Rect};

pub const IMAGE_SIZE: u32 = 512;
/// Horizontal gap between repeated copies of a figure, in pixels.
pub const COPY_GAP: u32 = 6;

/// Placement of the 3×3 lattice inside the 512×512 canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellGeometry {
    pub origin_x: u32,
    pub origin_y: u32,
    pub pitch: u32,
    /// Total gap between neighbouring cell interiors (split evenly on both sides).
    pub border: u32,
}

impl Default for CellGeometry {
    fn default() -> Self {
        CellGeometry {
            origin_x: 4,
            origin_y: 4,
            pitch: 168,
            border: 8,
        }
    }
}

impl CellGeometry {
    pub fn interior(&self) -> u32 {
        self.pitch - self.border
    }

    /// Drawable interior of cell (`row`, `col`).
    pub fn cell_rect(&self, row: u32, col: u32) -> Rect {
        Rect::new(
            self.origin_x + col * self.pitch + self.border / 2,
            self.origin_y + row * self.pitch + self.border / 2,
            self.interior(),
            self.interior(),
        )
    }

    /// Interior of the answer cell.
    pub fn answer_rect(&self) -> Rect {
        self.cell_rect(2, 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub background: u8,
    pub frame: u8,
    pub frame_width: u32,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            background: 255,
            frame: 0,
            frame_width: 2,
        }
    }
}

/// Rendered puzzle with the answer cell blanked and masked.
#[derive(Debug, Clone)]
pub struct RasterCase {
    pub image: GrayImage,
    pub mask: Mask,
    pub option_cells: Vec<GrayImage>,
    pub geometry: CellGeometry,
}

impl RasterCase {
    /// The puzzle completed with option `k` pasted into the answer cell.
    pub fn completed_with(&self, k: usize) -> GrayImage {
        let mut img = self.image.clone();
        let r = self.geometry.answer_rect();
        raster::paste(&mut img, &self.option_cells[k], r.x, r.y);
        img
    }
}

/// Layout check: every figure must fit its cell without clipping.
pub fn fits_cell(shapes: &[ShapeSpec], interior: u32) -> bool {
    shapes.iter().all(|s| {
        let size = size_px(s, interior);
        if shapes.len() > 1 {
            // slot layout: one figure per sub-cell
            s.count == 1 && size + COPY_GAP <= interior / 3
        } else {
            let n = s.count as u32;
            n * size + (n - 1) * COPY_GAP + 2 * COPY_GAP <= interior
        }
    })
}

fn size_px(s: &ShapeSpec, interior: u32) -> u32 {
    s.size_pct as u32 * interior / 100
}

/// Renders a cell's figures onto a `size`×`size` canvas filled with `background`.
pub fn render_cell(shapes: &[ShapeSpec], size: u32, background: u8) -> GrayImage {
    let mut img = raster::filled(size, size, background);
    for s in shapes {
        draw_shape(&mut img, s);
    }
    img
}

fn draw_shape(img: &mut GrayImage, s: &ShapeSpec) {
    let w = img.width();
    let third = w as f64 / 3.0;
    let slot_x = (s.position % 3) as f64;
    let slot_y = (s.position / 3) as f64;
    let cy = (slot_y + 0.5) * third;
    let base_cx = (slot_x + 0.5) * third;
    let size = size_px(s, w) as f64;
    let half = size / 2.0;
    let spacing = size + COPY_GAP as f64;
    let n = s.count as f64;

    let (cos, sin) = match s.rotation {
        45 => (FRAC_1_SQRT_2, FRAC_1_SQRT_2),
        90 => (0.0, 1.0),
        135 => (-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
        _ => (1.0, 0.0),
    };

    for i in 0..s.count {
        let cx = base_cx + (i as f64 - (n - 1.0) / 2.0) * spacing;
        let reach = (half * 1.5).ceil() + 1.0;
        let x0 = (cx - reach).floor().max(0.0) as u32;
        let y0 = (cy - reach).floor().max(0.0) as u32;
        let x1 = ((cx + reach).ceil() as u32).min(w);
        let y1 = ((cy + reach).ceil() as u32).min(w);
        for py in y0..y1 {
            for px in x0..x1 {
                let u = px as f64 + 0.5 - cx;
                let v = py as f64 + 0.5 - cy;
                let ur = u * cos + v * sin;
                let vr = -u * sin + v * cos;
                if inside(s.kind, ur, vr, half) {
                    img.put_pixel(px, py, Luma([s.intensity]));
                }
            }
        }
    }
}

fn inside(kind: ShapeKind, u: f64, v: f64, h: f64) -> bool {
    match kind {
        ShapeKind::Disc => u * u + v * v <= h * h,
        ShapeKind::Square => u.abs() <= h && v.abs() <= h,
        // apex up, base down
        ShapeKind::Triangle => v >= -h && v <= h && 2.0 * u.abs() <= v + h,
        ShapeKind::Bar => u.abs() <= h && v.abs() <= h / 4.0,
        ShapeKind::Cross => {
            (u.abs() <= h && v.abs() <= h / 4.0) || (v.abs() <= h && u.abs() <= h / 4.0)
        }
    }
}

fn draw_frame(img: &mut GrayImage, geom: &CellGeometry, cfg: &RenderConfig, row: u32, col: u32) {
    let bx = geom.origin_x + col * geom.pitch + 1;
    let by = geom.origin_y + row * geom.pitch + 1;
    let side = geom.pitch - 2;
    for y in by..by + side {
        for x in bx..bx + side {
            let dx = (x - bx).min(bx + side - 1 - x);
            let dy = (y - by).min(by + side - 1 - y);
            if dx.min(dy) < cfg.frame_width {
                img.put_pixel(x, y, Luma([cfg.frame]));
            }
        }
    }
}

fn render_grid(item: &MatrixItem, cfg: &RenderConfig, answer: Option<&[ShapeSpec]>) -> GrayImage {
    let geom = CellGeometry::default();
    let mut img = raster::filled(IMAGE_SIZE, IMAGE_SIZE, cfg.background);
    for row in 0..3u32 {
        for col in 0..3u32 {
            draw_frame(&mut img, &geom, cfg, row, col);
            let idx = (row * 3 + col) as usize;
            let shapes: &[ShapeSpec] = if idx == 8 {
                answer.unwrap_or(&[])
            } else {
                &item.cells[idx]
            };
            let cell = render_cell(shapes, geom.interior(), cfg.background);
            let r = geom.cell_rect(row, col);
            raster::paste(&mut img, &cell, r.x, r.y);
        }
    }
    img
}

/// Renders the full puzzle with `answer` drawn in the ninth cell.
pub fn render_completed(item: &MatrixItem, cfg: &RenderConfig, answer: &[ShapeSpec]) -> GrayImage {
    render_grid(item, cfg, Some(answer))
}

pub fn render_case(item: &MatrixItem, cfg: &RenderConfig) -> RasterCase {
    let geometry = CellGeometry::default();
    let image = render_grid(item, cfg, None);
    let mask = Mask::from_rect(IMAGE_SIZE, IMAGE_SIZE, geometry.answer_rect());
    let option_cells = item
        .options
        .iter()
        .map(|o| render_cell(&o.cell, geometry.interior(), cfg.background))
        .collect();
    RasterCase {
        image,
        mask,
        option_cells,
        geometry,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(kind: ShapeKind, rotation: u16) -> ShapeSpec {
        ShapeSpec {
            kind,
            size_pct: 40,
            intensity: 10,
            count: 1,
            rotation,
            position: 4,
        }
    }

    #[test]
    fn answer_rect_is_inside_canvas() {
        let g = CellGeometry::default();
        let r = g.answer_rect();
        assert_eq!(r.width, g.pitch - g.border);
        assert!(r.right() <= IMAGE_SIZE && r.bottom() <= IMAGE_SIZE);
    }

    #[test]
    fn rotations_of_bar_and_triangle_are_distinct() {
        for kind in [ShapeKind::Bar, ShapeKind::Triangle] {
            let imgs: Vec<_> = [0, 45, 90, 135]
                .iter()
                .map(|&r| render_cell(&[shape(kind, r)], 160, 255).into_raw())
                .collect();
            for i in 0..4 {
                for j in i + 1..4 {
                    assert_ne!(imgs[i], imgs[j], "{kind:?} {i} {j}");
                }
            }
        }
    }

    #[test]
    fn disc_is_rotation_invariant() {
        let a = render_cell(&[shape(ShapeKind::Disc, 0)], 160, 255);
        let b = render_cell(&[shape(ShapeKind::Disc, 90)], 160, 255);
        assert_eq!(a, b);
    }

    #[test]
    fn square_area_matches_size() {
        let img = render_cell(&[shape(ShapeKind::Square, 0)], 160, 255);
        let ink = img.as_raw().iter().filter(|&&v| v == 10).count();
        assert_eq!(ink, 64 * 64);
    }

    #[test]
    fn layout_fit() {
        let mut s = shape(ShapeKind::Square, 0);
        s.count = 3;
        s.size_pct = 28;
        assert!(fits_cell(&[s], 160));
        s.size_pct = 40;
        assert!(!fits_cell(&[s], 160));
    }
}
