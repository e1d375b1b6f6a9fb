//! Battery manifest and image export.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use ravenbench::matrixgen::{render_case, CellGeometry, MatrixItem, RenderConfig};
use ravenbench::raster::save_gray;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "ravenbench-battery/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryManifest {
    pub format: String,
    pub seed: u64,
    pub n_items: usize,
    pub geometry: CellGeometry,
    /// Distractor label frequencies across the battery. These are a free
    /// design choice of the generator, not matched to any published item set.
    pub taxonomy_counts: BTreeMap<String, usize>,
    pub items: Vec<MatrixItem>,
}

impl BatteryManifest {
    pub fn new(seed: u64, items: Vec<MatrixItem>) -> Self {
        let mut taxonomy_counts = BTreeMap::new();
        for item in &items {
            for opt in &item.options {
                let label = serde_json::to_value(opt.label)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default();
                *taxonomy_counts.entry(label).or_insert(0) += 1;
            }
        }
        BatteryManifest {
            format: MANIFEST_FORMAT.to_string(),
            seed,
            n_items: items.len(),
            geometry: CellGeometry::default(),
            taxonomy_counts,
            items,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn answer_key(&self) -> Vec<u8> {
        self.items.iter().map(|i| i.answer_index as u8).collect()
    }

    pub fn load(dir: &Path) -> anyhow::Result<(BatteryManifest, String)> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        let manifest = serde_json::from_slice(&bytes)
            .with_context(|| format!("parsing {}", path.display()))?;
        Ok((manifest, sha256_hex(&bytes)))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `manifest.json` and returns its SHA-256.
pub fn write_manifest(dir: &Path, manifest: &BatteryManifest) -> anyhow::Result<String> {
    let bytes = manifest.to_bytes();
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Renders every item as `item_NNN_image.png`, `item_NNN_mask.png` and
/// `item_NNN_opt{K}.png`, K counting options from 0.
pub fn write_images(dir: &Path, items: &[MatrixItem]) -> anyhow::Result<()> {
    items.par_iter().try_for_each(|item| {
        let case = render_case(item, &RenderConfig::default());
        save_gray(&case.image, &dir.join(format!("{}_image.png", item.id)))?;
        save_gray(&case.mask.to_image(), &dir.join(format!("{}_mask.png", item.id)))?;
        for (k, opt) in case.option_cells.iter().enumerate() {
            save_gray(opt, &dir.join(format!("{}_opt{k}.png", item.id)))?;
        }
        Ok::<_, anyhow::Error>(())
    })
}
