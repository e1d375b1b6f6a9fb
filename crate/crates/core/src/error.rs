use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("failed to decode image {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("failed to encode image {path}: {source}")]
    Encode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("difficulty profile entry {index} asks for {rules} rules; at most 3 are supported")]
    TooManyRules { index: usize, rules: u8 },
    #[error("difficulty profile must be non-decreasing in rule count (entry {index})")]
    NonMonotoneProfile { index: usize },
    #[error("profile has {profile} entries but {requested} items were requested")]
    ProfileLength { profile: usize, requested: usize },
    #[error("n_items must be at least 1")]
    NoItems,
    #[error("invalid rule set: {0}")]
    InvalidRules(String),
    #[error("progression on {attribute} leaves its range at cell ({row}, {col})")]
    OutOfRange {
        attribute: &'static str,
        row: usize,
        col: usize,
    },
    #[error("item {item_index} could not be generated with 8 distinct options after {attempts} attempts")]
    Unsatisfiable { item_index: usize, attempts: usize },
    #[error("could not build 8 mutually distinct options")]
    DegenerateOptions,
    #[error("an empty answer cell would select the correct option")]
    BlankSolvable,
}

#[derive(Debug, Error)]
pub enum InpaintError {
    #[error("mask and image dimensions differ: image {image:?}, mask {mask:?}")]
    DimensionMismatch {
        image: (u32, u32),
        mask: (u32, u32),
    },
    #[error("mask is empty")]
    EmptyMask,
    #[error("mask touches the image border")]
    MaskNotInterior,
    #[error("unmasked area covers less than 8/9 of the image")]
    InsufficientCoverage,
    #[error("no periodic structure found (constant image)")]
    ConstantImage,
}

#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("external in-painter timed out after {0:.1} s")]
    Timeout(f64),
    #[error("external in-painter did not produce a result for {0}")]
    MissingResult(String),
    #[error("result for {item} has dimensions {got:?}, expected {expected:?}")]
    DimensionMismatch {
        item: String,
        got: (u32, u32),
        expected: (u32, u32),
    },
    #[error("result for {item} modified unmasked pixels by up to {delta} gray levels")]
    UnmaskedPixelsModified { item: String, delta: u8 },
    #[error("external in-painter exited with status {0}")]
    CommandFailed(i32),
    #[error("could not launch external in-painter: {0}")]
    Spawn(#[source] std::io::Error),
    #[error("case directory has no item images")]
    EmptyCase,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("image dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((u32, u32), (u32, u32)),
    #[error("reference image mean is zero; ERGAS undefined")]
    ZeroMeanReference,
}

#[derive(Debug, Error)]
pub enum RegisterError {
    #[error("need at least 4 correspondences, got {0}")]
    TooFewPoints(usize),
    #[error("best homography has only {0} inliers")]
    Degenerate(usize),
}

#[derive(Debug, Error)]
pub enum PsychError {
    #[error("need at least 3 distinct difficulty levels with trials, got {0}")]
    InsufficientData(usize),
    #[error("performance level {0} is outside the attainable range of the fitted function")]
    Unattainable(f64),
    #[error("invalid trial block at x = {x}: k = {k}, n = {n}")]
    InvalidBlock { x: f64, k: u32, n: u32 },
}

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("contingency table has a zero row or column margin")]
    ZeroMargin,
    #[error("contingency table is empty or ragged")]
    BadTable,
    #[error("response tables cover different item sets ({0} vs {1} items)")]
    ItemMismatch(usize, usize),
    #[error("response {value} for item {item} is outside 0..8")]
    BadResponse { item: usize, value: u8 },
    #[error("model answered every item correctly; error partition undefined")]
    NoModelErrors,
    #[error("sample is empty")]
    EmptySample,
}
