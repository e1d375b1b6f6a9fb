//! In-painter contract and the reference substrates.
//!
//! Two built-ins bracket the behaviour of interest: [`inpaint_local`]
//! propagates only short-range information (harmonic diffusion from the
//! mask boundary), while [`inpaint_lattice`] exploits image-wide periodic
//! structure. [`run_external`] drives any other in-painter through a
//! directory protocol.

mod external;
mod lattice;
mod local;

use image::GrayImage;

pub use external::{
    image_file, mask_file, result_file, run_external, write_case_dir, ExternalConfig,
    ExternalResults, POLL_INTERVAL, UNMASKED_TOLERANCE,
};
pub use lattice::{
    detect_lattice, inpaint_lattice, masked_autocorrelation, LatticeConfig, LatticeEstimate,
    MIN_PEAK_STRENGTH, MIN_PITCH,
};
pub use local::{inpaint_local, LocalConfig};

use crate::error::InpaintError;
use crate::raster::Mask;

#[derive(Debug, Clone)]
pub struct InpaintRequest {
    pub image: GrayImage,
    pub mask: Mask,
}

impl InpaintRequest {
    /// Validates that the mask matches the image, is nonempty, and stays
    /// off the outermost pixel ring.
    pub fn new(image: GrayImage, mask: Mask) -> Result<Self, InpaintError> {
        if image.dimensions() != mask.dimensions() {
            return Err(InpaintError::DimensionMismatch {
                image: image.dimensions(),
                mask: mask.dimensions(),
            });
        }
        if mask.is_empty() {
            return Err(InpaintError::EmptyMask);
        }
        if !mask.is_strictly_interior() {
            return Err(InpaintError::MaskNotInterior);
        }
        Ok(InpaintRequest { image, mask })
    }
}

#[derive(Debug, Clone)]
pub struct InpaintResult {
    pub image: GrayImage,
    pub substrate_id: String,
    /// Wall-clock seconds; informational only, never serialized into reports.
    pub elapsed: f64,
    pub converged: bool,
}

/// Anything that can complete a masked region.
pub trait Inpainter: Sync {
    fn id(&self) -> String;
    fn inpaint(&self, req: &InpaintRequest) -> InpaintResult;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LocalInpainter(pub LocalConfig);

impl Inpainter for LocalInpainter {
    fn id(&self) -> String {
        "local".into()
    }

    fn inpaint(&self, req: &InpaintRequest) -> InpaintResult {
        inpaint_local(req, &self.0)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LatticeInpainter(pub LatticeConfig);

impl Inpainter for LatticeInpainter {
    fn id(&self) -> String {
        "lattice".into()
    }

    fn inpaint(&self, req: &InpaintRequest) -> InpaintResult {
        inpaint_lattice(req, &self.0)
    }
}
