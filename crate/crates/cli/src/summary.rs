//! Serializable psychometric summaries.

use ravenbench::psychfit::{
    fit, psi_band, threshold_interval, GridConfig, Interval, PsychParams, PsychPosterior,
    PsychWarning, TrialBlock,
};
use serde::{Deserialize, Serialize};

pub const THRESHOLD_PERFORMANCE: f64 = 0.5;
pub const CREDIBLE_LEVEL: f64 = 0.95;
const CURVE_STEPS_PER_RANK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub median: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub performance: f64,
    pub level: f64,
    pub map: PsychParams,
    pub mean: PsychParams,
    /// Rank at which success falls to `performance`; absent when unattainable.
    pub threshold: Option<Interval>,
    pub m_interval: Interval,
    pub warnings: Vec<PsychWarning>,
    pub grid: GridConfig,
    pub trials: Vec<TrialBlock>,
    pub curve: Vec<CurvePoint>,
}

impl PosteriorSummary {
    pub fn from_posterior(post: &PsychPosterior, grid: GridConfig, trials: Vec<TrialBlock>) -> Self {
        let threshold = threshold_interval(post, THRESHOLD_PERFORMANCE, CREDIBLE_LEVEL).ok();
        let (lo, hi) = trials
            .iter()
            .map(|t| t.x)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        let (lo, hi) = (lo - 0.5, hi + 0.5);
        let steps = ((hi - lo) as usize).max(1) * CURVE_STEPS_PER_RANK;
        let curve = (0..=steps)
            .map(|i| {
                let x = lo + (hi - lo) * i as f64 / steps as f64;
                let band = psi_band(post, x, CREDIBLE_LEVEL);
                CurvePoint { x, median: band.point, lo: band.lo, hi: band.hi }
            })
            .collect();
        PosteriorSummary {
            performance: THRESHOLD_PERFORMANCE,
            level: CREDIBLE_LEVEL,
            map: post.map,
            mean: post.mean(),
            threshold,
            m_interval: post.marginal_interval_m(CREDIBLE_LEVEL),
            warnings: post.warnings.clone(),
            grid,
            trials,
            curve,
        }
    }
}

/// Fits the trial blocks; `None` with a reason when there is too little data.
pub fn summarize(trials: &[TrialBlock], grid: &GridConfig) -> Result<PosteriorSummary, String> {
    if trials.iter().all(|t| t.n == 0) {
        return Err("no trial data".to_string());
    }
    let post = fit(trials, grid).map_err(|e| e.to_string())?;
    Ok(PosteriorSummary::from_posterior(&post, *grid, trials.to_vec()))
}

/// True when both intervals exist, are disjoint, and `a` lies to the right of `b`.
pub fn right_of(a: Option<&Interval>, b: Option<&Interval>) -> bool {
    matches!((a, b), (Some(a), Some(b)) if a.lo > b.hi)
}

pub fn disjoint(a: Option<&Interval>, b: Option<&Interval>) -> bool {
    right_of(a, b) || right_of(b, a)
}
