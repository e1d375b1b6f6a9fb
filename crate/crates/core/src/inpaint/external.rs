//! Directory protocol for out-of-process in-painters.
//!
//! Layout of a case directory:
//!
//! ```text
//! item_001_image.png   8-bit grayscale puzzle
//! item_001_mask.png    0 = keep, 255 = fill
//! item_001_result.png  written by the in-painter, same dimensions
//! ```
//!
//! The command is invoked as `<argv...> <case_dir>` and must exit with 0.

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use image::GrayImage;

use super::InpaintResult;
use crate::error::ExternalError;
use crate::raster::{load_gray, max_unmasked_delta, save_gray, Mask};

pub const POLL_INTERVAL: Duration = Duration::from_millis(100);
/// External models may re-encode their output; unmasked pixels may move this much.
pub const UNMASKED_TOLERANCE: u8 = 2;

#[derive(Debug, Clone)]
pub struct ExternalConfig {
    pub command: Vec<String>,
    pub timeout: Duration,
}

#[derive(Debug, Clone)]
pub struct ExternalResults {
    /// (item stem such as `item_001`, validated result), sorted by stem.
    pub items: Vec<(String, InpaintResult)>,
}

impl ExternalResults {
    pub fn get(&self, stem: &str) -> Option<&InpaintResult> {
        self.items.iter().find(|(s, _)| s == stem).map(|(_, r)| r)
    }
}

pub fn image_file(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}_image.png"))
}

pub fn mask_file(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}_mask.png"))
}

pub fn result_file(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}_result.png"))
}

/// Writes protocol inputs for each `(stem, image, mask)`.
pub fn write_case_dir(dir: &Path, items: &[(String, &GrayImage, &Mask)]) -> Result<(), ExternalError> {
    std::fs::create_dir_all(dir)?;
    for (stem, img, mask) in items {
        save_gray(img, &image_file(dir, stem))?;
        save_gray(&mask.to_image(), &mask_file(dir, stem))?;
    }
    Ok(())
}

fn case_stems(dir: &Path) -> Result<Vec<String>, ExternalError> {
    let mut stems: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let stem = name.strip_suffix("_image.png")?;
            let digits = stem.strip_prefix("item_")?;
            (!digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()))
                .then(|| stem.to_string())
        })
        .collect();
    stems.sort();
    Ok(stems)
}

/// Runs the external command on `case_dir` and validates every result.
pub fn run_external(
    case_dir: &Path,
    command: &[String],
    timeout: Duration,
) -> Result<ExternalResults, ExternalError> {
    let stems = case_stems(case_dir)?;
    if stems.is_empty() {
        return Err(ExternalError::EmptyCase);
    }
    let (program, args) = command
        .split_first()
        .ok_or_else(|| ExternalError::Spawn(std::io::Error::other("empty command")))?;

    let started = Instant::now();
    let mut child = Command::new(program)
        .args(args)
        .arg(case_dir)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .spawn()
        .map_err(ExternalError::Spawn)?;

    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if started.elapsed() >= timeout {
            let _ = child.kill();
            let _ = child.wait();
            return Err(ExternalError::Timeout(timeout.as_secs_f64()));
        }
        std::thread::sleep(POLL_INTERVAL);
    };
    if !status.success() {
        return Err(ExternalError::CommandFailed(status.code().unwrap_or(-1)));
    }
    let elapsed = started.elapsed().as_secs_f64();

    let mut items = Vec::with_capacity(stems.len());
    for stem in stems {
        let path = result_file(case_dir, &stem);
        if !path.exists() {
            return Err(ExternalError::MissingResult(stem));
        }
        let input = load_gray(&image_file(case_dir, &stem))?;
        let mask = Mask::from_image(&load_gray(&mask_file(case_dir, &stem))?);
        let result = load_gray(&path)?;
        if result.dimensions() != input.dimensions() {
            return Err(ExternalError::DimensionMismatch {
                item: stem,
                got: result.dimensions(),
                expected: input.dimensions(),
            });
        }
        let delta = max_unmasked_delta(&input, &result, &mask);
        if delta > UNMASKED_TOLERANCE {
            return Err(ExternalError::UnmaskedPixelsModified { item: stem, delta });
        }
        items.push((
            stem,
            InpaintResult {
                image: result,
                substrate_id: format!("external:{}", program),
                elapsed,
                converged: true,
            },
        ));
    }
    Ok(ExternalResults { items })
}
