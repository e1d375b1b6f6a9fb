//! Planar homographies: direct linear estimation, RANSAC and warping.

use image::{GrayImage, Luma};
use nalgebra::{DMatrix, Matrix3, SMatrix, SVector, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::RegisterError;
use crate::raster::Rect;

pub type Point = (f64, f64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub Matrix3<f64>);

impl Homography {
    pub fn identity() -> Self {
        Homography(Matrix3::identity())
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography(Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0))
    }

    /// Scales so that the bottom-right entry is 1 (when it is not ~0).
    pub fn normalized(self) -> Self {
        let s = self.0[(2, 2)];
        if s.abs() > 1e-12 {
            Homography(self.0 / s)
        } else {
            self
        }
    }

    pub fn apply(&self, p: Point) -> Point {
        let v = self.0 * Vector3::new(p.0, p.1, 1.0);
        (v.x / v.z, v.y / v.z)
    }

    pub fn inverse(&self) -> Option<Homography> {
        self.0.try_inverse().map(|m| Homography(m).normalized())
    }

    pub fn det(&self) -> f64 {
        self.0.determinant()
    }

    /// Non-singular, and the image of the unit square is a convex quadrilateral
    /// that does not pass through the line at infinity.
    pub fn is_valid(&self) -> bool {
        if self.det().abs() <= 1e-9 {
            return false;
        }
        let corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let mut w_sign = 0.0;
        for c in corners {
            let w = (self.0 * Vector3::new(c.0, c.1, 1.0)).z;
            if w.abs() < 1e-12 || (w_sign != 0.0 && w.signum() != w_sign) {
                return false;
            }
            w_sign = w.signum();
        }
        let q: Vec<Point> = corners.iter().map(|&c| self.apply(c)).collect();
        let mut sign = 0.0;
        for i in 0..4 {
            let (a, b, c) = (q[i], q[(i + 1) % 4], q[(i + 2) % 4]);
            let cross = (b.0 - a.0) * (c.1 - b.1) - (b.1 - a.1) * (c.0 - b.0);
            if cross.abs() < 1e-12 || (sign != 0.0 && cross.signum() != sign) {
                return false;
            }
            sign = cross.signum();
        }
        true
    }
}

/// Similarity transform taking the points to zero mean and mean distance √2.
fn normalizer(pts: &[Point]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let (cx, cy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (cx, cy) = (cx / n, cy / n);
    let mean_d = pts
        .iter()
        .map(|p| ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    let s = if mean_d > 1e-12 {
        std::f64::consts::SQRT_2 / mean_d
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn transform_all(t: &Matrix3<f64>, pts: &[Point]) -> Vec<Point> {
    pts.iter().map(|&p| Homography(*t).apply(p)).collect()
}

fn denormalize(h: Matrix3<f64>, ts: &Matrix3<f64>, td: &Matrix3<f64>) -> Option<Homography> {
    let td_inv = td.try_inverse()?;
    let out = Homography(td_inv * h * ts).normalized();
    out.0.iter().all(|v| v.is_finite()).then_some(out)
}

/// Exact homography from four correspondences (8×8 linear solve, h₃₃ = 1).
pub fn homography_from_four(src: &[Point; 4], dst: &[Point; 4]) -> Option<Homography> {
    let ts = normalizer(src);
    let td = normalizer(dst);
    let s = transform_all(&ts, src);
    let d = transform_all(&td, dst);
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for i in 0..4 {
        let ((x, y), (u, v)) = (s[i], d[i]);
        let r = 2 * i;
        a.row_mut(r)
            .copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
        b[r] = u;
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
        b[r + 1] = v;
    }
    let h = a.lu().solve(&b)?;
    let m = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0);
    denormalize(m, &ts, &td)
}

/// Least-squares homography (normalized DLT, smallest right singular vector).
pub fn homography_least_squares(src: &[Point], dst: &[Point]) -> Option<Homography> {
    if src.len() < 4 || src.len() != dst.len() {
        return None;
    }
    let ts = normalizer(src);
    let td = normalizer(dst);
    let s = transform_all(&ts, src);
    let d = transform_all(&td, dst);
    let mut a = DMatrix::<f64>::zeros(2 * s.len(), 9);
    for i in 0..s.len() {
        let ((x, y), (u, v)) = (s[i], d[i]);
        let r = 2 * i;
        for (j, val) in [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u].iter().enumerate() {
            a[(r, j)] = *val;
        }
        for (j, val) in [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v].iter().enumerate() {
            a[(r + 1, j)] = *val;
        }
    }
    let ata = a.transpose() * &a;
    let eig = ata.symmetric_eigen();
    let k = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|p, q| p.1.total_cmp(q.1))?
        .0;
    let h = eig.eigenvectors.column(k);
    let m = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    denormalize(m, &ts, &td)
}

fn collinear(a: Point, b: Point, c: Point) -> bool {
    let area = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    let scale = ((b.0 - a.0).hypot(b.1 - a.1)).max((c.0 - a.0).hypot(c.1 - a.1));
    area.abs() <= 1e-6 * scale.max(1.0) * scale.max(1.0)
}

fn any_three_collinear(p: &[Point; 4]) -> bool {
    [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
        .iter()
        .any(|&(i, j, k)| collinear(p[i], p[j], p[k]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    /// Forward reprojection error (pixels) below which a match is an inlier.
    pub inlier_threshold: f64,
    pub max_iterations: usize,
    pub min_inliers: usize,
    /// Stop early once this confidence of an all-inlier sample is reached.
    pub confidence: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            inlier_threshold: 2.0,
            max_iterations: 2000,
            min_inliers: 8,
            confidence: 0.999,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacFit {
    pub homography: Homography,
    pub inliers: Vec<bool>,
}

impl RansacFit {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

fn inlier_mask(h: &Homography, src: &[Point], dst: &[Point], thresh: f64) -> Vec<bool> {
    src.iter()
        .zip(dst)
        .map(|(&s, &d)| {
            let p = h.apply(s);
            let e = (p.0 - d.0).hypot(p.1 - d.1);
            e.is_finite() && e < thresh
        })
        .collect()
}

/// Robust homography from putative correspondences `src[i] → dst[i]`.
pub fn ransac_homography(
    src: &[Point],
    dst: &[Point],
    cfg: &RansacConfig,
) -> Result<RansacFit, RegisterError> {
    let n = src.len().min(dst.len());
    if n < 4 {
        return Err(RegisterError::TooFewPoints(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(Homography, usize)> = None;
    let mut needed = cfg.max_iterations;
    let mut it = 0;
    while it < needed.min(cfg.max_iterations) {
        it += 1;
        let idx = sample(&mut rng, n, 4);
        let s4: [Point; 4] = std::array::from_fn(|k| src[idx.index(k)]);
        let d4: [Point; 4] = std::array::from_fn(|k| dst[idx.index(k)]);
        if any_three_collinear(&s4) || any_three_collinear(&d4) {
            continue;
        }
        let Some(h) = homography_from_four(&s4, &d4) else {
            continue;
        };
        if !h.is_valid() {
            continue;
        }
        let count = inlier_mask(&h, &src[..n], &dst[..n], cfg.inlier_threshold)
            .iter()
            .filter(|&&b| b)
            .count();
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((h, count));
            let w = count as f64 / n as f64;
            let p_fail = 1.0 - w.powi(4);
            needed = if p_fail <= 0.0 {
                it
            } else {
                ((1.0 - cfg.confidence).ln() / p_fail.ln()).ceil() as usize
            };
        }
    }
    let (mut h, mut count) = match best {
        Some((h, c)) if c >= cfg.min_inliers.max(4) => (h, c),
        Some((_, c)) => return Err(RegisterError::Degenerate(c)),
        None => return Err(RegisterError::Degenerate(0)),
    };
    let mut mask = inlier_mask(&h, &src[..n], &dst[..n], cfg.inlier_threshold);
    for _ in 0..3 {
        let (s, d): (Vec<Point>, Vec<Point>) = (0..n)
            .filter(|&i| mask[i])
            .map(|i| (src[i], dst[i]))
            .unzip();
        let Some(refit) = homography_least_squares(&s, &d).filter(Homography::is_valid) else {
            break;
        };
        let refit_mask = inlier_mask(&refit, &src[..n], &dst[..n], cfg.inlier_threshold);
        let refit_count = refit_mask.iter().filter(|&&b| b).count();
        if refit_count < count {
            break;
        }
        let stable = refit_mask == mask;
        h = refit;
        count = refit_count;
        mask = refit_mask;
        if stable {
            break;
        }
    }
    Ok(RansacFit {
        homography: h,
        inliers: mask,
    })
}

/// Bilinear sample at a real position; `None` outside the image.
fn bilinear(img: &GrayImage, x: f64, y: f64) -> Option<f64> {
    let (w, h) = img.dimensions();
    const EPS: f64 = 1e-9;
    if !(x >= -EPS && y >= -EPS && x <= (w - 1) as f64 + EPS && y <= (h - 1) as f64 + EPS) {
        return None;
    }
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as u32, y.floor() as u32);
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let p = |xx, yy| img.get_pixel(xx, yy)[0] as f64;
    if fx == 0.0 && fy == 0.0 {
        return Some(p(x0, y0));
    }
    let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
    let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
    Some(top * (1.0 - fy) + bottom * fy)
}

/// Inverse-mapped bilinear warp into a `width × height` canvas; destination
/// pixels whose source falls outside the input are 0.
pub fn warp(img: &GrayImage, h: &Homography, width: u32, height: u32) -> GrayImage {
    warp_region(img, h, Rect::new(0, 0, width, height))
}

/// The `region` crop of what [`warp`] would produce, computed directly.
pub fn warp_region(img: &GrayImage, h: &Homography, region: Rect) -> GrayImage {
    let inv = h.inverse().unwrap_or_else(Homography::identity);
    GrayImage::from_fn(region.width, region.height, |x, y| {
        let (sx, sy) = inv.apply(((x + region.x) as f64, (y + region.y) as f64));
        let v = bilinear(img, sx, sy).unwrap_or(0.0);
        Luma([v.round().clamp(0.0, 255.0) as u8])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Homography, b: &Homography, tol: f64) -> bool {
        (a.0 - b.0).abs().max() <= tol
    }

    #[test]
    fn four_point_identity() {
        let p = [(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)];
        let h = homography_from_four(&p, &p).unwrap();
        assert!(close(&h, &Homography::identity(), 1e-12));
    }

    #[test]
    fn least_squares_recovers_translation() {
        let src: Vec<Point> = (0..12).map(|i| ((i * 7 % 50) as f64, (i * 13 % 41) as f64)).collect();
        let t = Homography::translation(5.0, -3.0);
        let dst: Vec<Point> = src.iter().map(|&p| t.apply(p)).collect();
        let h = homography_least_squares(&src, &dst).unwrap();
        assert!(close(&h, &t, 1e-9));
    }

    #[test]
    fn validity() {
        assert!(Homography::identity().is_valid());
        assert!(!Homography(Matrix3::zeros()).is_valid());
        // reflection through a line keeps convexity, so it stays valid
        let flip = Homography(Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0));
        assert!(flip.is_valid());
        // sends a unit-square corner to infinity
        let bad = Homography(Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 1.0));
        assert!(!bad.is_valid());
    }

    #[test]
    fn too_few_points() {
        let p = vec![(0.0, 0.0); 3];
        assert!(matches!(
            ransac_homography(&p, &p, &RansacConfig::default()),
            Err(RegisterError::TooFewPoints(3))
        ));
    }

    #[test]
    fn identity_warp_is_exact() {
        let img = GrayImage::from_fn(40, 30, |x, y| Luma([((x * 5 + y * 3) % 256) as u8]));
        assert_eq!(warp(&img, &Homography::identity(), 40, 30), img);
    }
}
