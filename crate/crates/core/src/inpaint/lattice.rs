//! Global lattice detection and per-pixel linear extrapolation.

use image::GrayImage;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::local::{harmonic_fill, LocalConfig};
use super::{InpaintRequest, InpaintResult};
use crate::error::InpaintError;
use crate::raster::Mask;

pub const MIN_PITCH: u32 = 16;
pub const MIN_PEAK_STRENGTH: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeEstimate {
    pub pitch_x: f64,
    pub pitch_y: f64,
    pub origin_x: f64,
    pub origin_y: f64,
    /// Weaker of the two axis peaks, as a fraction of the zero-lag value.
    pub peak_strength: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatticeConfig {
    pub fallback: LocalConfig,
    /// Regularizer (gray levels²) added to validation errors before weighting.
    pub validation_floor: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig {
            fallback: LocalConfig::default(),
            validation_floor: 1.0,
        }
    }
}

/// Coverage-normalized autocorrelation of the unmasked, mean-subtracted image.
///
/// Returns `(width_shifts, height_shifts, ratio)` where `ratio[dy * W + dx]`
/// holds the normalized autocorrelation at shift (dx, dy) for
/// `0 ≤ dx ≤ W/2`, `0 ≤ dy ≤ H/2`, divided by its zero-lag value.
pub fn masked_autocorrelation(image: &GrayImage, mask: &Mask) -> Option<(usize, usize, Vec<f64>)> {
    let (w, h) = image.dimensions();
    let (w, h) = (w as usize, h as usize);
    let valid = mask.as_slice();
    let raw = image.as_raw();

    let (sum, n) = raw
        .iter()
        .zip(valid)
        .filter(|(_, &m)| !m)
        .fold((0.0, 0usize), |(s, n), (&v, _)| (s + v as f64, n + 1));
    if n == 0 {
        return None;
    }
    let mean = sum / n as f64;

    let (max_dx, max_dy) = (w / 2, h / 2);
    let (pw, ph) = (w + max_dx, h + max_dy);

    // pack signal (real) and coverage (imaginary) into one transform
    let mut buf = vec![Complex::new(0.0, 0.0); pw * ph];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !valid[i] {
                buf[y * pw + x] = Complex::new(raw[i] as f64 - mean, 1.0);
            }
        }
    }
    let mut planner = FftPlanner::new();
    fft2d(&mut planner, &mut buf, pw, ph, false);

    let mut spec = vec![Complex::new(0.0, 0.0); pw * ph];
    for ky in 0..ph {
        for kx in 0..pw {
            let z = buf[ky * pw + kx];
            let zc = buf[((ph - ky) % ph) * pw + (pw - kx) % pw].conj();
            let a = (z + zc) * 0.5;
            let b = (z - zc) * Complex::new(0.0, -0.5);
            spec[ky * pw + kx] = Complex::new(a.norm_sqr(), b.norm_sqr());
        }
    }
    fft2d(&mut planner, &mut spec, pw, ph, true);

    let scale = 1.0 / (pw * ph) as f64;
    let at = |dx: usize, dy: usize| {
        let c = spec[dy * pw + dx] * scale;
        if c.im > 0.5 {
            c.re / c.im
        } else {
            0.0
        }
    };
    let zero = at(0, 0);
    if zero <= 1e-9 {
        return None;
    }
    let mut ratio = vec![0.0; (max_dx + 1) * (max_dy + 1)];
    for dy in 0..=max_dy {
        for dx in 0..=max_dx {
            ratio[dy * (max_dx + 1) + dx] = at(dx, dy) / zero;
        }
    }
    Some((max_dx + 1, max_dy + 1, ratio))
}

fn fft2d(planner: &mut FftPlanner<f64>, data: &mut [Complex<f64>], w: usize, h: usize, inverse: bool) {
    let row_fft = if inverse {
        planner.plan_fft_inverse(w)
    } else {
        planner.plan_fft_forward(w)
    };
    for row in data.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let col_fft = if inverse {
        planner.plan_fft_inverse(h)
    } else {
        planner.plan_fft_forward(h)
    };
    let mut col = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = data[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            data[y * w + x] = col[y];
        }
    }
}

/// Share of the strongest peak a shorter lag must reach to be chosen over it,
/// so that multiples of the true period do not win on noise.
const HARMONIC_TOLERANCE: f64 = 0.9;

/// Smallest-lag strict local maximum of `profile[lo..=hi]` whose height is
/// within [`HARMONIC_TOLERANCE`] of the highest one.
fn dominant_peak(profile: &[f64], lo: usize, hi: usize) -> Option<(usize, f64)> {
    let peaks: Vec<(usize, f64)> = (lo.max(1)..=hi.min(profile.len().saturating_sub(2)))
        .filter(|&d| profile[d] > profile[d - 1] && profile[d] >= profile[d + 1])
        .map(|d| (d, profile[d]))
        .collect();
    let best = peaks.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    peaks.into_iter().find(|p| p.1 > 0.0 && p.1 >= HARMONIC_TOLERANCE * best)
}

pub fn detect_lattice(image: &GrayImage, mask: &Mask) -> Result<LatticeEstimate, InpaintError> {
    if image.dimensions() != mask.dimensions() {
        return Err(InpaintError::DimensionMismatch {
            image: image.dimensions(),
            mask: mask.dimensions(),
        });
    }
    let (w, h) = image.dimensions();
    if mask.count() as u64 * 9 > w as u64 * h as u64 {
        return Err(InpaintError::InsufficientCoverage);
    }
    let (nx, ny, ratio) =
        masked_autocorrelation(image, mask).ok_or(InpaintError::ConstantImage)?;
    let along_x: Vec<f64> = (0..nx).map(|dx| ratio[dx]).collect();
    let along_y: Vec<f64> = (0..ny).map(|dy| ratio[dy * nx]).collect();
    let (px, sx) = dominant_peak(&along_x, MIN_PITCH as usize, nx - 1)
        .ok_or(InpaintError::ConstantImage)?;
    let (py, sy) = dominant_peak(&along_y, MIN_PITCH as usize, ny - 1)
        .ok_or(InpaintError::ConstantImage)?;
    let strength = sx.min(sy);
    if strength < MIN_PEAK_STRENGTH {
        return Err(InpaintError::ConstantImage);
    }
    let (ox, oy) = mask
        .bounding_rect()
        .map(|r| ((r.x as usize % px) as f64, (r.y as usize % py) as f64))
        .unwrap_or((0.0, 0.0));
    Ok(LatticeEstimate {
        pitch_x: px as f64,
        pitch_y: py as f64,
        origin_x: ox,
        origin_y: oy,
        peak_strength: strength.clamp(0.0, 1.0),
    })
}

/// Homologous samples for one masked pixel, in lattice coordinates
/// relative to the masked cell at (row 2, col 2).
struct Homologs {
    /// `v[r][c]` for the eight known cells; `v[2][2]` unused.
    v: [[f64; 3]; 3],
}

fn gather(img: &GrayImage, mask: &Mask, x: u32, y: u32, px: u32, py: u32) -> Option<Homologs> {
    let mut v = [[0.0; 3]; 3];
    for (r, row) in v.iter_mut().enumerate() {
        for (c, slot) in row.iter_mut().enumerate() {
            if r == 2 && c == 2 {
                continue;
            }
            let sx = x.checked_sub((2 - c as u32) * px)?;
            let sy = y.checked_sub((2 - r as u32) * py)?;
            if mask.get(sx, sy) {
                return None;
            }
            *slot = img.get_pixel(sx, sy)[0] as f64;
        }
    }
    Some(Homologs { v })
}

/// Lattice extrapolation of the masked region.
///
/// Each masked pixel gets two linear extrapolations: along its row
/// (`2·left − far-left`) and along its column (`2·above − far-above`). The
/// same extrapolations are scored on the six fully known cells (rows 0–1 for
/// the row model, columns 0–1 for the column model) and the two predictions
/// are blended with weights inversely proportional to those validation
/// errors; equal errors give the plain average.
pub fn inpaint_lattice(req: &InpaintRequest, cfg: &LatticeConfig) -> InpaintResult {
    let started = std::time::Instant::now();
    let fallback = |started: std::time::Instant| {
        let (image, converged) = harmonic_fill(&req.image, &req.mask, &cfg.fallback);
        InpaintResult {
            image,
            substrate_id: "lattice+localfallback".to_string(),
            elapsed: started.elapsed().as_secs_f64(),
            converged,
        }
    };
    let est = match detect_lattice(&req.image, &req.mask) {
        Ok(e) => e,
        Err(_) => return fallback(started),
    };
    let (px, py) = (est.pitch_x as u32, est.pitch_y as u32);
    let (w, h) = req.image.dimensions();

    let mut samples = Vec::new();
    let mut missing = Mask::empty(w, h);
    let (mut err_row, mut err_col) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            if !req.mask.get(x, y) {
                continue;
            }
            match gather(&req.image, &req.mask, x, y, px, py) {
                Some(hm) => {
                    let v = &hm.v;
                    let row_fit = |r: usize| 2.0 * v[r][1] - v[r][0];
                    let col_fit = |c: usize| 2.0 * v[1][c] - v[0][c];
                    err_row += (row_fit(0) - v[0][2]).powi(2) + (row_fit(1) - v[1][2]).powi(2);
                    err_col += (col_fit(0) - v[2][0]).powi(2) + (col_fit(1) - v[2][1]).powi(2);
                    samples.push((x, y, row_fit(2), col_fit(2)));
                }
                None => missing.set(x, y, true),
            }
        }
    }
    if samples.is_empty() {
        return fallback(started);
    }
    let n = (2 * samples.len()) as f64;
    let w_row = 1.0 / (err_row / n + cfg.validation_floor);
    let w_col = 1.0 / (err_col / n + cfg.validation_floor);

    let mut out = req.image.clone();
    for (x, y, rp, cp) in samples {
        let v = (w_row * rp + w_col * cp) / (w_row + w_col);
        out.put_pixel(x, y, image::Luma([v.round().clamp(0.0, 255.0) as u8]));
    }
    let mut converged = true;
    let mut substrate_id = "lattice".to_string();
    if !missing.is_empty() {
        let (filled, ok) = harmonic_fill(&out, &missing, &cfg.fallback);
        out = filled;
        converged = ok;
        substrate_id.push_str("+localfallback");
    }
    InpaintResult {
        image: out,
        substrate_id,
        elapsed: started.elapsed().as_secs_f64(),
        converged,
    }
}
