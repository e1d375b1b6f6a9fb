//! Segment-test corners, BRIEF-style binary descriptors and cross-checked
//! Hamming matching.

use image::GrayImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Radius-3 Bresenham circle, clockwise from 12 o'clock.
pub const RING: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

/// Minimum distance of a keypoint from every image edge.
pub const BORDER: u32 = 3;
pub const PATCH_RADIUS: i32 = 15;
pub const DESCRIPTOR_BITS: usize = 256;
/// Seed of the fixed comparison-pair layout.
pub const PAIR_LAYOUT_SEED: u64 = 0x0b1e_f00d;
/// Default contiguous-arc length of the segment test.
pub const DEFAULT_ARC: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: u32,
    pub y: u32,
    /// Sum of absolute differences between the ring pixels and the centre.
    pub score: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BinaryDescriptor(pub [u64; 4]);

impl BinaryDescriptor {
    pub fn bit(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn hamming(&self, other: &BinaryDescriptor) -> u32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

/// Segment test for one pixel with contiguous arc length `arc`.
pub fn segment_test(img: &GrayImage, x: u32, y: u32, threshold: u8, arc: usize) -> bool {
    let c = img.get_pixel(x, y)[0] as i32;
    let t = threshold as i32;
    let mut brighter = [false; 16];
    let mut darker = [false; 16];
    let (mut nb, mut nd) = (0, 0);
    for (k, (dx, dy)) in RING.iter().enumerate() {
        let v = img.get_pixel((x as i32 + dx) as u32, (y as i32 + dy) as u32)[0] as i32;
        if v > c + t {
            brighter[k] = true;
            nb += 1;
        } else if v < c - t {
            darker[k] = true;
            nd += 1;
        }
    }
    (nb >= arc && longest_circular_run(&brighter) >= arc)
        || (nd >= arc && longest_circular_run(&darker) >= arc)
}

fn longest_circular_run(flags: &[bool; 16]) -> usize {
    let (mut best, mut cur) = (0, 0);
    for k in 0..32 {
        if flags[k % 16] {
            cur += 1;
            best = best.max(cur);
        } else {
            cur = 0;
        }
    }
    best.min(16)
}

fn ring_score(img: &GrayImage, x: u32, y: u32) -> u32 {
    let c = img.get_pixel(x, y)[0] as i32;
    RING.iter()
        .map(|(dx, dy)| {
            let v = img.get_pixel((x as i32 + dx) as u32, (y as i32 + dy) as u32)[0] as i32;
            (v - c).unsigned_abs()
        })
        .sum()
}

/// Corners with the default 9-pixel arc.
pub fn detect_corners(img: &GrayImage, threshold: u8, max_n: usize) -> Vec<Keypoint> {
    detect_corners_with_arc(img, threshold, max_n, DEFAULT_ARC)
}

/// Segment-test corners, 3×3 non-maximum suppression on score (ties go to
/// the earlier pixel in raster order), then the `max_n` strongest.
pub fn detect_corners_with_arc(
    img: &GrayImage,
    threshold: u8,
    max_n: usize,
    arc: usize,
) -> Vec<Keypoint> {
    let (w, h) = img.dimensions();
    if w < 2 * BORDER + 1 || h < 2 * BORDER + 1 {
        return Vec::new();
    }
    let mut scores = vec![0u32; (w * h) as usize];
    for y in BORDER..h - BORDER {
        for x in BORDER..w - BORDER {
            if segment_test(img, x, y, threshold, arc) {
                // +1 keeps zero reserved for "not a corner"
                scores[(y * w + x) as usize] = ring_score(img, x, y) + 1;
            }
        }
    }

    let mut kps = Vec::new();
    for y in BORDER..h - BORDER {
        for x in BORDER..w - BORDER {
            let s = scores[(y * w + x) as usize];
            if s == 0 {
                continue;
            }
            let mut keep = true;
            'nbr: for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let q = scores[((y as i32 + dy) as u32 * w + (x as i32 + dx) as u32) as usize];
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if q > s || (q == s && earlier) {
                        keep = false;
                        break 'nbr;
                    }
                }
            }
            if keep {
                kps.push(Keypoint { x, y, score: s - 1 });
            }
        }
    }
    kps.sort_by(|a, b| b.score.cmp(&a.score).then(a.y.cmp(&b.y)).then(a.x.cmp(&b.x)));
    kps.truncate(max_n);
    kps
}

/// The fixed comparison-pair layout: 256 pairs of offsets inside a 31×31
/// patch, drawn from an isotropic Gaussian (σ = 31/5) and clamped.
pub fn pair_layout() -> Vec<((i32, i32), (i32, i32))> {
    let mut rng = ChaCha8Rng::seed_from_u64(PAIR_LAYOUT_SEED);
    let normal = Normal::new(0.0, 31.0 / 5.0).expect("valid sigma");
    let mut draw = || {
        let v: f64 = normal.sample(&mut rng);
        (v.round() as i32).clamp(-PATCH_RADIUS, PATCH_RADIUS)
    };
    (0..DESCRIPTOR_BITS)
        .map(|_| ((draw(), draw()), (draw(), draw())))
        .collect()
}

/// 5×5 box sums (unnormalized, so comparisons are exact), edge-replicated.
fn box_sums(img: &GrayImage) -> Vec<u32> {
    let (w, h) = img.dimensions();
    let (w, h) = (w as i64, h as i64);
    let at = |x: i64, y: i64| img.get_pixel(x.clamp(0, w - 1) as u32, y.clamp(0, h - 1) as u32)[0] as u32;
    let mut horiz = vec![0u32; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            horiz[(y * w + x) as usize] = (-2..=2).map(|d| at(x + d, y)).sum();
        }
    }
    let mut out = vec![0u32; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            out[(y * w + x) as usize] = (-2..=2)
                .map(|d| horiz[((y + d).clamp(0, h - 1) * w + x) as usize])
                .sum();
        }
    }
    out
}

/// Bit `i` is set when the smoothed intensity at the first point of pair `i`
/// is strictly below that at the second point.
pub fn describe(img: &GrayImage, keypoints: &[Keypoint]) -> Vec<BinaryDescriptor> {
    let layout = pair_layout();
    let smooth = box_sums(img);
    let (w, h) = img.dimensions();
    let (wi, hi) = (w as i32, h as i32);
    let at = |x: i32, y: i32| smooth[(y.clamp(0, hi - 1) * wi + x.clamp(0, wi - 1)) as usize];
    keypoints
        .iter()
        .map(|kp| {
            let (x, y) = (kp.x as i32, kp.y as i32);
            let mut bits = [0u64; 4];
            for (i, ((px, py), (qx, qy))) in layout.iter().enumerate() {
                if at(x + px, y + py) < at(x + qx, y + qy) {
                    bits[i / 64] |= 1 << (i % 64);
                }
            }
            BinaryDescriptor(bits)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Match {
    pub index_a: usize,
    pub index_b: usize,
    pub distance: u32,
}

pub const MAX_MATCH_DISTANCE: u32 = 64;

fn nearest(d: &BinaryDescriptor, set: &[BinaryDescriptor]) -> Option<(usize, u32)> {
    set.iter()
        .enumerate()
        .map(|(j, e)| (j, d.hamming(e)))
        .min_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)))
}

/// Mutual nearest neighbours under Hamming distance, at most 64 bits apart.
pub fn match_descriptors(a: &[BinaryDescriptor], b: &[BinaryDescriptor]) -> Vec<Match> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let back: Vec<Option<(usize, u32)>> = b.iter().map(|d| nearest(d, a)).collect();
    a.iter()
        .enumerate()
        .filter_map(|(i, d)| {
            let (j, dist) = nearest(d, b)?;
            let (i_back, _) = back[j]?;
            (i_back == i && dist <= MAX_MATCH_DISTANCE).then_some(Match {
                index_a: i,
                index_b: j,
                distance: dist,
            })
        })
        .collect()
}
