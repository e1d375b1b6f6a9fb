//! Stimulus perturbation and Bayesian grid fits of a logistic psychometric
//! function with a fixed guess rate.

use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::PsychError;

pub use crate::pipeline::run_repetitions;

/// One of eight options.
pub const GUESS_RATE: f64 = 0.125;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    Gaussian { sigma: f64 },
    Brightness { delta: f64 },
}

impl Perturbation {
    pub fn kind(&self) -> &'static str {
        match self {
            Perturbation::Gaussian { .. } => "gaussian",
            Perturbation::Brightness { .. } => "brightness",
        }
    }

    pub fn magnitude(&self) -> f64 {
        match *self {
            Perturbation::Gaussian { sigma } => sigma,
            Perturbation::Brightness { delta } => delta,
        }
    }
}

/// Gaussian noise (i.i.d. per pixel) or a uniform brightness shift, rounded
/// and clipped to [0, 255]. Deterministic in `seed`.
pub fn perturb(img: &GrayImage, seed: u64, p: &Perturbation) -> GrayImage {
    let clip = |v: f64| Luma([v.round().clamp(0.0, 255.0) as u8]);
    match *p {
        Perturbation::Brightness { delta } => {
            let mut out = img.clone();
            for px in out.pixels_mut() {
                *px = clip(px[0] as f64 + delta);
            }
            out
        }
        Perturbation::Gaussian { sigma } => {
            let mut out = img.clone();
            if sigma <= 0.0 {
                return out;
            }
            let normal = Normal::new(0.0, sigma).expect("finite sigma");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for px in out.pixels_mut() {
                *px = clip(px[0] as f64 + normal.sample(&mut rng));
            }
            out
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbSchedule {
    pub sigma_range: (f64, f64),
    pub brightness_range: (f64, f64),
}

impl Default for PerturbSchedule {
    fn default() -> Self {
        PerturbSchedule {
            sigma_range: (2.0, 20.0),
            brightness_range: (-40.0, 40.0),
        }
    }
}

impl PerturbSchedule {
    /// Even reps get Gaussian noise, odd reps a brightness shift; the
    /// magnitude is drawn uniformly from the configured range.
    pub fn for_rep(&self, rep: usize, seed: u64) -> Perturbation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
            if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                lo
            }
        };
        if rep % 2 == 0 {
            Perturbation::Gaussian {
                sigma: draw(&mut rng, self.sigma_range),
            }
        } else {
            Perturbation::Brightness {
                delta: draw(&mut rng, self.brightness_range),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsychParams {
    /// Threshold location (rank units).
    pub m: f64,
    /// Width (rank units), positive.
    pub s: f64,
    pub lambda: f64,
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `γ + (1 − γ − λ) · L((m − x)/s)`: success probability falls with rank.
pub fn psi(x: f64, p: &PsychParams) -> f64 {
    GUESS_RATE + (1.0 - GUESS_RATE - p.lambda) * logistic((p.m - x) / p.s)
}

/// `(ln ψ, ln(1 − ψ))`, computed without cancellation near either end.
fn log_psi_pair(x: f64, p: &PsychParams) -> (f64, f64) {
    let t = (p.m - x) / p.s;
    let span = 1.0 - GUESS_RATE - p.lambda;
    let success = GUESS_RATE + span * logistic(t);
    let failure = p.lambda + span * logistic(-t);
    (success.ln(), failure.ln())
}

/// Rank at which `ψ` equals `performance`, if attainable.
pub fn threshold_at(p: &PsychParams, performance: f64) -> Option<f64> {
    let q = (performance - GUESS_RATE) / (1.0 - GUESS_RATE - p.lambda);
    (q > 0.0 && q < 1.0).then(|| p.m - p.s * (q / (1.0 - q)).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialBlock {
    /// Difficulty rank.
    pub x: f64,
    pub k: u32,
    pub n: u32,
}

impl TrialBlock {
    pub fn new(x: f64, k: u32, n: u32) -> Result<Self, PsychError> {
        if k > n || !x.is_finite() {
            return Err(PsychError::InvalidBlock { x, k, n });
        }
        Ok(TrialBlock { x, k, n })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub m_range: (f64, f64),
    pub m_nodes: usize,
    /// Width range; nodes are log-spaced and weighted so the prior stays
    /// uniform in `s`.
    pub s_range: (f64, f64),
    pub s_nodes: usize,
    pub lambda_max: f64,
    pub lambda_nodes: usize,
    /// Beta(a, b) prior on the lapse rate, truncated to `[0, lambda_max]`.
    pub lambda_prior: (f64, f64),
    /// Fraction of the `m` range at either end that triggers a boundary warning.
    pub boundary_fraction: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            m_range: (0.5, 12.5),
            m_nodes: 121,
            s_range: (0.1, 12.0),
            s_nodes: 61,
            lambda_max: 0.1,
            lambda_nodes: 21,
            lambda_prior: (1.5, 12.0),
            boundary_fraction: 0.02,
        }
    }
}

impl GridConfig {
    /// Same bounds, each axis with twice the node spacing density.
    pub fn refined(&self) -> Self {
        GridConfig {
            m_nodes: 2 * self.m_nodes - 1,
            s_nodes: 2 * self.s_nodes - 1,
            lambda_nodes: 2 * self.lambda_nodes - 1,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub m: Vec<f64>,
    pub s: Vec<f64>,
    pub lambda: Vec<f64>,
    pub log_prior_s: Vec<f64>,
    pub log_prior_lambda: Vec<f64>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Length of each node's cell (midpoints between neighbours, clipped to the range).
fn cell_widths(nodes: &[f64], lo: f64, hi: f64) -> Vec<(f64, f64)> {
    (0..nodes.len())
        .map(|i| {
            let left = if i == 0 { lo } else { 0.5 * (nodes[i - 1] + nodes[i]) };
            let right = if i + 1 == nodes.len() { hi } else { 0.5 * (nodes[i] + nodes[i + 1]) };
            (left.max(lo), right.min(hi))
        })
        .collect()
}

impl Grid {
    pub fn new(cfg: &GridConfig) -> Self {
        let m = linspace(cfg.m_range.0, cfg.m_range.1, cfg.m_nodes);

        let (s_lo, s_hi) = cfg.s_range;
        // the open lower end is represented by a first node one step above it
        let ratio = (s_hi / s_lo).powf(1.0 / cfg.s_nodes.max(1) as f64);
        let s: Vec<f64> = (1..=cfg.s_nodes).map(|i| s_lo * ratio.powi(i as i32)).collect();
        let log_prior_s = cell_widths(&s, s_lo, s_hi)
            .iter()
            .map(|(a, b)| (b - a).max(1e-300).ln())
            .collect();

        let lambda = linspace(0.0, cfg.lambda_max, cfg.lambda_nodes);
        let beta = Beta::new(cfg.lambda_prior.0, cfg.lambda_prior.1).expect("valid beta prior");
        let log_prior_lambda = cell_widths(&lambda, 0.0, cfg.lambda_max)
            .iter()
            .map(|&(a, b)| (beta.cdf(b) - beta.cdf(a)).max(1e-300).ln())
            .collect();
        Grid {
            m,
            s,
            lambda,
            log_prior_s,
            log_prior_lambda,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len() * self.s.len() * self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index layout: `((i_m · |s|) + i_s) · |λ| + i_λ`.
    pub fn params(&self, idx: usize) -> PsychParams {
        let nl = self.lambda.len();
        let ns = self.s.len();
        PsychParams {
            m: self.m[idx / (ns * nl)],
            s: self.s[(idx / nl) % ns],
            lambda: self.lambda[idx % nl],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsychWarning {
    /// The MAP threshold location sits in the outer band of its grid.
    BoundaryWarning,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub point: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsychPosterior {
    pub grid: Grid,
    /// Normalized mass per grid node, flat layout of [`Grid::params`].
    pub mass: Vec<f64>,
    pub map: PsychParams,
    pub marginal_m: Vec<f64>,
    pub marginal_s: Vec<f64>,
    pub marginal_lambda: Vec<f64>,
    pub warnings: Vec<PsychWarning>,
}

/// Weighted quantile on a discrete support: the smallest value whose
/// cumulative mass reaches `q`.
fn weighted_quantile(sorted: &[(f64, f64)], total: f64, q: f64) -> f64 {
    let target = q * total;
    let mut cum = 0.0;
    for &(v, w) in sorted {
        cum += w;
        if cum >= target - 1e-12 * total {
            return v;
        }
    }
    sorted.last().map(|p| p.0).unwrap_or(f64::NAN)
}

fn central_interval(mut values: Vec<(f64, f64)>, level: f64) -> Interval {
    values.retain(|p| p.1 > 0.0);
    values.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = values.iter().map(|p| p.1).sum();
    let tail = (1.0 - level) / 2.0;
    Interval {
        lo: weighted_quantile(&values, total, tail),
        hi: weighted_quantile(&values, total, 1.0 - tail),
        point: weighted_quantile(&values, total, 0.5),
    }
}

impl PsychPosterior {
    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn mean(&self) -> PsychParams {
        let avg = |axis: &[f64], marg: &[f64]| axis.iter().zip(marg).map(|(a, w)| a * w).sum();
        PsychParams {
            m: avg(&self.grid.m, &self.marginal_m),
            s: avg(&self.grid.s, &self.marginal_s),
            lambda: avg(&self.grid.lambda, &self.marginal_lambda),
        }
    }

    pub fn marginal_interval_m(&self, level: f64) -> Interval {
        central_interval(
            self.grid.m.iter().copied().zip(self.marginal_m.iter().copied()).collect(),
            level,
        )
    }

    /// A posterior concentrated on a single parameter point.
    pub fn point_mass(p: PsychParams) -> Self {
        let grid = Grid {
            m: vec![p.m],
            s: vec![p.s],
            lambda: vec![p.lambda],
            log_prior_s: vec![0.0],
            log_prior_lambda: vec![0.0],
        };
        PsychPosterior {
            grid,
            mass: vec![1.0],
            map: p,
            marginal_m: vec![1.0],
            marginal_s: vec![1.0],
            marginal_lambda: vec![1.0],
            warnings: Vec::new(),
        }
    }
}

/// Dense-grid posterior under a binomial likelihood with uniform priors on
/// `m` and `s` and a truncated Beta prior on `λ`.
pub fn fit(trials: &[TrialBlock], cfg: &GridConfig) -> Result<PsychPosterior, PsychError> {
    for t in trials {
        if t.k > t.n || !t.x.is_finite() {
            return Err(PsychError::InvalidBlock { x: t.x, k: t.k, n: t.n });
        }
    }
    let used: Vec<&TrialBlock> = trials.iter().filter(|t| t.n > 0).collect();
    let mut xs: Vec<f64> = used.iter().map(|t| t.x).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(PsychError::InsufficientData(xs.len()));
    }

    let grid = Grid::new(cfg);
    let (nm, ns, nl) = (grid.m.len(), grid.s.len(), grid.lambda.len());
    let mut logp = vec![f64::NEG_INFINITY; grid.len()];
    for (i_m, &m) in grid.m.iter().enumerate() {
        for (i_s, &s) in grid.s.iter().enumerate() {
            for (i_l, &lambda) in grid.lambda.iter().enumerate() {
                let p = PsychParams { m, s, lambda };
                let mut ll = grid.log_prior_s[i_s] + grid.log_prior_lambda[i_l];
                for t in &used {
                    let (ls, lf) = log_psi_pair(t.x, &p);
                    if t.k > 0 {
                        ll += t.k as f64 * ls;
                    }
                    if t.k < t.n {
                        ll += (t.n - t.k) as f64 * lf;
                    }
                }
                logp[(i_m * ns + i_s) * nl + i_l] = ll;
            }
        }
    }

    let (map_idx, max) = logp
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    let mut mass: Vec<f64> = logp.iter().map(|&v| (v - max).exp()).collect();
    let z: f64 = mass.iter().sum();
    for v in &mut mass {
        *v /= z;
    }

    let mut marginal_m = vec![0.0; nm];
    let mut marginal_s = vec![0.0; ns];
    let mut marginal_lambda = vec![0.0; nl];
    for (idx, &w) in mass.iter().enumerate() {
        marginal_m[idx / (ns * nl)] += w;
        marginal_s[(idx / nl) % ns] += w;
        marginal_lambda[idx % nl] += w;
    }

    let map = grid.params(map_idx);
    let (lo, hi) = cfg.m_range;
    let band = cfg.boundary_fraction * (hi - lo);
    let mut warnings = Vec::new();
    if map.m <= lo + band || map.m >= hi - band {
        warnings.push(PsychWarning::BoundaryWarning);
    }
    Ok(PsychPosterior {
        grid,
        mass,
        map,
        marginal_m,
        marginal_s,
        marginal_lambda,
        warnings,
    })
}

/// Central credible interval and posterior median of the rank at which
/// success probability equals `performance`. Nodes where that level is not
/// attainable are excluded.
pub fn threshold_interval(
    post: &PsychPosterior,
    performance: f64,
    level: f64,
) -> Result<Interval, PsychError> {
    let values: Vec<(f64, f64)> = post
        .mass
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .filter_map(|(idx, &w)| threshold_at(&post.grid.params(idx), performance).map(|x| (x, w)))
        .collect();
    if values.is_empty() {
        return Err(PsychError::Unattainable(performance));
    }
    Ok(central_interval(values, level))
}

/// Pointwise credible band and posterior median of `ψ(x)`.
pub fn psi_band(post: &PsychPosterior, x: f64, level: f64) -> Interval {
    let values = post
        .mass
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 1e-15)
        .map(|(idx, &w)| (psi(x, &post.grid.params(idx)), w))
        .collect();
    central_interval(values, level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::filled;

    #[test]
    fn analytic_points() {
        let p = PsychParams { m: 4.0, s: 2.0, lambda: 0.0 };
        assert!((psi(4.0, &p) - 0.5625).abs() < 1e-12);
        let x = threshold_at(&p, 0.5).unwrap();
        assert!((x - (4.0 + 2.0 * (4.0f64 / 3.0).ln())).abs() < 1e-9);
        assert!((psi(x, &p) - 0.5).abs() < 1e-12);
        assert!((psi(1e6, &p) - GUESS_RATE).abs() < 1e-12);
        let lapsing = PsychParams { lambda: 0.05, ..p };
        assert!((psi(-1e6, &lapsing) - 0.95).abs() < 1e-12);
    }

    #[test]
    fn brightness_shift() {
        let img = filled(16, 16, 100);
        assert_eq!(perturb(&img, 1, &Perturbation::Brightness { delta: 0.0 }), img);
        let up = perturb(&img, 1, &Perturbation::Brightness { delta: 10.0 });
        assert!(up.as_raw().iter().all(|&v| v == 110));
    }

    #[test]
    fn schedule_alternates() {
        let s = PerturbSchedule::default();
        assert_eq!(s.for_rep(0, 5).kind(), "gaussian");
        assert_eq!(s.for_rep(1, 5).kind(), "brightness");
        assert_eq!(s.for_rep(2, 9), s.for_rep(2, 9));
    }

    #[test]
    fn too_few_ranks() {
        let t = [TrialBlock { x: 1.0, k: 3, n: 5 }, TrialBlock { x: 2.0, k: 1, n: 5 }];
        assert!(matches!(fit(&t, &GridConfig::default()), Err(PsychError::InsufficientData(2))));
    }

    #[test]
    fn single_node_interval() {
        let post = PsychPosterior::point_mass(PsychParams { m: 5.0, s: 1.0, lambda: 0.0 });
        let iv = threshold_interval(&post, 0.5, 0.95).unwrap();
        let expect = 5.0 + (4.0f64 / 3.0).ln();
        assert!((iv.point - expect).abs() < 1e-12);
        assert_eq!(iv.lo, iv.point);
        assert_eq!(iv.hi, iv.point);
        assert!(matches!(threshold_interval(&post, 0.05, 0.95), Err(PsychError::Unattainable(_))));
    }

    #[test]
    fn posterior_is_normalized() {
        let t: Vec<TrialBlock> = (1..=12)
            .map(|x| TrialBlock { x: x as f64, k: (50 - 4 * x) as u32, n: 50 })
            .collect();
        let post = fit(&t, &GridConfig::default()).unwrap();
        assert!((post.total_mass() - 1.0).abs() < 1e-9);
        assert!((post.marginal_m.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
