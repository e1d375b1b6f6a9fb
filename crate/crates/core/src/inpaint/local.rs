//! Harmonic (diffusion) fill of the masked region.

use image::GrayImage;
use serde::{Deserialize, Serialize};

use super::{InpaintRequest, InpaintResult};
use crate::raster::Mask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalConfig {
    pub iterations: usize,
    pub kernel_radius: u32,
    /// Stop once no pixel moves by this many gray levels in a sweep.
    pub tolerance: f64,
}

impl Default for LocalConfig {
    fn default() -> Self {
        LocalConfig {
            iterations: 2000,
            kernel_radius: 1,
            tolerance: 0.5,
        }
    }
}

/// Diffusion fill plus the convergence flag.
pub fn inpaint_local(req: &InpaintRequest, cfg: &LocalConfig) -> InpaintResult {
    let started = std::time::Instant::now();
    let (image, converged) = harmonic_fill(&req.image, &req.mask, cfg);
    InpaintResult {
        image,
        substrate_id: "local".to_string(),
        elapsed: started.elapsed().as_secs_f64(),
        converged,
    }
}

/// Fills masked pixels with the discrete harmonic interpolant of the
/// surrounding values.
///
/// Masked pixels start from the mean of the row-wise and column-wise linear
/// interpolation between the nearest known pixels (exact for linear data),
/// then Gauss-Seidel sweeps in raster order replace each masked pixel by the
/// mean of its `(2r+1)²−1` neighbours until the largest update drops below
/// the tolerance or the sweep cap is hit.
pub(crate) fn harmonic_fill(img: &GrayImage, mask: &Mask, cfg: &LocalConfig) -> (GrayImage, bool) {
    let (w, h) = img.dimensions();
    let (wu, hu) = (w as usize, h as usize);
    let known = mask.as_slice();
    let mut field: Vec<f64> = img.as_raw().iter().map(|&v| v as f64).collect();

    let masked: Vec<usize> = (0..wu * hu).filter(|&i| known[i]).collect();
    if masked.is_empty() {
        return (img.clone(), true);
    }

    let init = initial_guess(&field, known, wu, hu);
    for &i in &masked {
        field[i] = init[i];
    }

    let r = cfg.kernel_radius.max(1) as i64;
    let mut converged = false;
    for _ in 0..cfg.iterations {
        let mut max_delta: f64 = 0.0;
        for &i in &masked {
            let (x, y) = ((i % wu) as i64, (i / wu) as i64);
            let mut sum = 0.0;
            let mut n = 0u32;
            for dy in -r..=r {
                let yy = y + dy;
                if yy < 0 || yy >= h as i64 {
                    continue;
                }
                for dx in -r..=r {
                    let xx = x + dx;
                    if (dx == 0 && dy == 0) || xx < 0 || xx >= w as i64 {
                        continue;
                    }
                    sum += field[yy as usize * wu + xx as usize];
                    n += 1;
                }
            }
            let next = sum / n as f64;
            max_delta = max_delta.max((next - field[i]).abs());
            field[i] = next;
        }
        if max_delta < cfg.tolerance {
            converged = true;
            break;
        }
    }

    let mut out = img.clone();
    for &i in &masked {
        out.as_mut()[i] = field[i].round().clamp(0.0, 255.0) as u8;
    }
    (out, converged)
}

fn initial_guess(field: &[f64], masked: &[bool], w: usize, h: usize) -> Vec<f64> {
    let mut guess = vec![0.0; w * h];
    let mut weight = vec![0.0; w * h];

    let mut run = |idx: &dyn Fn(usize) -> usize, len: usize| {
        let mut k = 0;
        while k < len {
            if !masked[idx(k)] {
                k += 1;
                continue;
            }
            let start = k;
            while k < len && masked[idx(k)] {
                k += 1;
            }
            let left = start.checked_sub(1).map(|j| field[idx(j)]);
            let right = (k < len).then(|| field[idx(k)]);
            let span = (k - start + 1) as f64;
            for (off, j) in (start..k).enumerate() {
                let t = (off + 1) as f64 / span;
                let v = match (left, right) {
                    (Some(a), Some(b)) => a + (b - a) * t,
                    (Some(a), None) => a,
                    (None, Some(b)) => b,
                    (None, None) => continue,
                };
                guess[idx(j)] += v;
                weight[idx(j)] += 1.0;
            }
        }
    };
    for y in 0..h {
        run(&|x| y * w + x, w);
    }
    for x in 0..w {
        run(&|y| y * w + x, h);
    }

    let known_mean = {
        let (s, n) = field
            .iter()
            .zip(masked)
            .filter(|(_, &m)| !m)
            .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
        if n > 0 {
            s / n as f64
        } else {
            0.0
        }
    };
    guess
        .iter()
        .zip(&weight)
        .map(|(g, &wt)| if wt > 0.0 { g / wt } else { known_mean })
        .collect()
}
