//! Feature-based alignment of an in-painted image to a candidate completion.
//!
//! Corners come from a radius-3 segment test, descriptors are unoriented
//! BRIEF-style bit strings, matches are cross-checked Hamming nearest
//! neighbours, and the model is a RANSAC homography. Whenever fewer than
//! `min_inliers` consistent matches exist the input is returned unchanged
//! and the outcome is flagged as an identity fallback.

mod features;
mod homography;

use image::GrayImage;
use serde::{Deserialize, Serialize};

pub use features::{
    describe, detect_corners, detect_corners_with_arc, match_descriptors, pair_layout,
    segment_test, BinaryDescriptor, Keypoint, Match, BORDER, DEFAULT_ARC, DESCRIPTOR_BITS,
    MAX_MATCH_DISTANCE, PAIR_LAYOUT_SEED, PATCH_RADIUS, RING,
};
pub use homography::{
    homography_from_four, homography_least_squares, ransac_homography, warp, warp_region,
    Homography, Point, RansacConfig, RansacFit,
};

use crate::raster::Rect;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegisterConfig {
    /// When false every registration is an identity fallback.
    pub enabled: bool,
    pub corner_threshold: u8,
    pub corner_arc: usize,
    pub max_keypoints: usize,
    pub ransac: RansacConfig,
    /// A fitted map that moves no inlier by more than this many pixels is
    /// replaced by the identity, so that near-identical renders are compared
    /// without resampling.
    pub snap_tolerance: f64,
}

impl Default for RegisterConfig {
    fn default() -> Self {
        RegisterConfig {
            enabled: true,
            corner_threshold: 20,
            corner_arc: DEFAULT_ARC,
            max_keypoints: 400,
            ransac: RansacConfig::default(),
            snap_tolerance: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegistrationMode {
    Homography,
    /// A homography was found but lies within the snap tolerance of the identity.
    NearIdentity,
    IdentityFallback,
}

impl RegistrationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegistrationMode::Homography => "homography",
            RegistrationMode::NearIdentity => "near_identity",
            RegistrationMode::IdentityFallback => "identity_fallback",
        }
    }
}

/// Keypoints and descriptors of one image, reusable across registrations.
#[derive(Debug, Clone)]
pub struct Features {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<BinaryDescriptor>,
}

pub fn extract_features(img: &GrayImage, cfg: &RegisterConfig) -> Features {
    let keypoints =
        detect_corners_with_arc(img, cfg.corner_threshold, cfg.max_keypoints, cfg.corner_arc);
    let descriptors = describe(img, &keypoints);
    Features {
        keypoints,
        descriptors,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    pub homography: Homography,
    pub mode: RegistrationMode,
    pub matches: usize,
    pub inliers: usize,
}

impl Registration {
    fn fallback(matches: usize, inliers: usize) -> Self {
        Registration {
            homography: Homography::identity(),
            mode: RegistrationMode::IdentityFallback,
            matches,
            inliers,
        }
    }

    /// The `region` crop of the aligned image.
    pub fn aligned_region(&self, source: &GrayImage, region: Rect) -> GrayImage {
        match self.mode {
            RegistrationMode::IdentityFallback | RegistrationMode::NearIdentity => {
                crate::raster::crop(source, region)
            }
            RegistrationMode::Homography => warp_region(source, &self.homography, region),
        }
    }
}

/// Estimates the map taking `source` coordinates onto `target` coordinates.
pub fn estimate(source: &Features, target: &Features, cfg: &RegisterConfig) -> Registration {
    if !cfg.enabled {
        return Registration::fallback(0, 0);
    }
    let matches = match_descriptors(&source.descriptors, &target.descriptors);
    let pt = |k: &Keypoint| (k.x as f64, k.y as f64);
    let (src, dst): (Vec<Point>, Vec<Point>) = matches
        .iter()
        .map(|m| (pt(&source.keypoints[m.index_a]), pt(&target.keypoints[m.index_b])))
        .unzip();
    match ransac_homography(&src, &dst, &cfg.ransac) {
        Ok(fit) => {
            let inliers = fit.inlier_count();
            if inliers < cfg.ransac.min_inliers {
                return Registration::fallback(matches.len(), inliers);
            }
            let displacement = src
                .iter()
                .zip(&fit.inliers)
                .filter(|(_, &inlier)| inlier)
                .map(|(&p, _)| {
                    let q = fit.homography.apply(p);
                    (q.0 - p.0).hypot(q.1 - p.1)
                })
                .fold(0.0, f64::max);
            let (homography, mode) = if displacement <= cfg.snap_tolerance {
                (Homography::identity(), RegistrationMode::NearIdentity)
            } else {
                (fit.homography, RegistrationMode::Homography)
            };
            Registration {
                homography,
                mode,
                matches: matches.len(),
                inliers,
            }
        }
        Err(crate::error::RegisterError::Degenerate(c)) => Registration::fallback(matches.len(), c),
        Err(_) => Registration::fallback(matches.len(), 0),
    }
}

/// Aligns `inpainted` onto `candidate`; the output always has the candidate's
/// dimensions.
pub fn register_to_candidate(
    inpainted: &GrayImage,
    candidate: &GrayImage,
    cfg: &RegisterConfig,
) -> (GrayImage, Registration) {
    let (w, h) = candidate.dimensions();
    if inpainted.dimensions() != candidate.dimensions() {
        let reg = Registration::fallback(0, 0);
        return (warp(inpainted, &Homography::identity(), w, h), reg);
    }
    let reg = estimate(
        &extract_features(inpainted, cfg),
        &extract_features(candidate, cfg),
        cfg,
    );
    let aligned = match reg.mode {
        RegistrationMode::IdentityFallback | RegistrationMode::NearIdentity => inpainted.clone(),
        RegistrationMode::Homography => warp(inpainted, &reg.homography, w, h),
    };
    (aligned, reg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::filled;

    #[test]
    fn constant_image_falls_back() {
        let img = filled(64, 64, 200);
        let (out, reg) = register_to_candidate(&img, &img, &RegisterConfig::default());
        assert_eq!(reg.mode, RegistrationMode::IdentityFallback);
        assert_eq!(out, img);
    }

    #[test]
    fn disabled_registration_is_identity() {
        let img = filled(64, 64, 0);
        let cfg = RegisterConfig {
            enabled: false,
            ..RegisterConfig::default()
        };
        let f = extract_features(&img, &cfg);
        assert_eq!(estimate(&f, &f, &cfg).mode, RegistrationMode::IdentityFallback);
    }
}
