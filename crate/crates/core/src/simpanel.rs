//! Five-metric similarity panel and the mode vote over answer options.

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::error::MetricError;
use crate::raster::Mask;

pub const DEFAULT_NMI_BINS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanelConfig {
    pub nmi_bins: usize,
    pub ergas_ratio: f64,
}

impl Default for PanelConfig {
    fn default() -> Self {
        PanelConfig {
            nmi_bins: DEFAULT_NMI_BINS,
            ergas_ratio: 1.0,
        }
    }
}

fn check_dims(a: &GrayImage, b: &GrayImage) -> Result<(), MetricError> {
    if a.dimensions() != b.dimensions() {
        return Err(MetricError::DimensionMismatch(a.dimensions(), b.dimensions()));
    }
    Ok(())
}

fn histogram(img: &GrayImage) -> [u64; 256] {
    let mut h = [0u64; 256];
    for &v in img.as_raw() {
        h[v as usize] += 1;
    }
    h
}

/// Otsu threshold `t`: pixels `≤ t` form the dark class. `None` for a
/// single-valued image.
pub fn otsu_threshold(img: &GrayImage) -> Option<u8> {
    let h = histogram(img);
    let total: u64 = h.iter().sum();
    let total_sum: f64 = h.iter().enumerate().map(|(v, &c)| v as f64 * c as f64).sum();
    let (mut w0, mut s0) = (0u64, 0.0);
    let mut best: Option<(u8, f64)> = None;
    for t in 0..255usize {
        w0 += h[t];
        s0 += t as f64 * h[t] as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let m0 = s0 / w0 as f64;
        let m1 = (total_sum - s0) / w1 as f64;
        let between = w0 as f64 * w1 as f64 * (m0 - m1).powi(2);
        if best.is_none_or(|(_, b)| between > b) {
            best = Some((t as u8, between));
        }
    }
    best.map(|(t, _)| t)
}

/// Dark (ink) pixels under the Otsu split; empty for a single-valued image.
pub fn foreground(img: &GrayImage) -> Mask {
    let (w, h) = img.dimensions();
    let mut m = Mask::empty(w, h);
    if let Some(t) = otsu_threshold(img) {
        for (x, y, p) in img.enumerate_pixels() {
            if p[0] <= t {
                m.set(x, y, true);
            }
        }
    }
    m
}

/// Exact squared Euclidean distance transform to the set pixels of `mask`
/// (`None` where the set is empty), in integer arithmetic.
pub fn squared_distance_transform(mask: &Mask) -> Option<Vec<i64>> {
    if mask.is_empty() {
        return None;
    }
    let (w, h) = mask.dimensions();
    let (w, h) = (w as usize, h as usize);
    // column pass: vertical distance to the nearest site, None when the column is empty
    let mut col: Vec<Option<i64>> = vec![None; w * h];
    for x in 0..w {
        let mut last: Option<usize> = None;
        for y in 0..h {
            if mask.as_slice()[y * w + x] {
                last = Some(y);
            }
            col[y * w + x] = last.map(|l| (y - l) as i64);
        }
        let mut next: Option<usize> = None;
        for y in (0..h).rev() {
            if mask.as_slice()[y * w + x] {
                next = Some(y);
            }
            if let Some(n) = next {
                let d = (n - y) as i64;
                let e = &mut col[y * w + x];
                *e = Some(e.map_or(d, |v| v.min(d)));
            }
        }
    }
    let mut out = vec![0i64; w * h];
    let mut f: Vec<Option<i64>> = vec![None; w];
    for y in 0..h {
        for x in 0..w {
            f[x] = col[y * w + x].map(|d| d * d);
        }
        lower_envelope(&f, &mut out[y * w..(y + 1) * w]);
    }
    Some(out)
}

/// `out[q] = min_p (q − p)² + f[p]` over finite `f[p]`, via the lower envelope
/// of parabolas with rational breakpoints compared by cross-multiplication.
fn lower_envelope(f: &[Option<i64>], out: &mut [i64]) {
    // breakpoint between sites p < q: ((f_q + q²) − (f_p + p²)) / (2(q − p))
    let brk = |p: usize, fp: i64, q: usize, fq: i64| -> (i64, i64) {
        let (p, q) = (p as i64, q as i64);
        ((fq + q * q) - (fp + p * p), 2 * (q - p))
    };
    // a/b ≤ c/d with b, d > 0
    let le = |a: (i64, i64), c: (i64, i64)| a.0 * c.1 <= c.0 * a.1;
    let mut sites: Vec<(usize, i64)> = Vec::with_capacity(f.len());
    let mut z: Vec<(i64, i64)> = Vec::with_capacity(f.len());
    for (q, fq) in f.iter().enumerate() {
        let Some(fq) = *fq else { continue };
        loop {
            let Some(&(p, fp)) = sites.last() else { break };
            let s = brk(p, fp, q, fq);
            match z.last() {
                Some(&zk) if le(s, zk) => {
                    sites.pop();
                    z.pop();
                }
                _ => {
                    z.push(s);
                    break;
                }
            }
        }
        sites.push((q, fq));
    }
    // z[k] is the left boundary of sites[k + 1]
    let mut k = 0;
    for (x, o) in out.iter_mut().enumerate() {
        while k < z.len() && z[k].0 < x as i64 * z[k].1 {
            k += 1;
        }
        let (p, fp) = sites[k];
        let d = x as i64 - p as i64;
        *o = d * d + fp;
    }
}

/// Symmetric Hausdorff distance between two pixel sets. Empty against
/// nonempty gives the image diagonal; empty against empty gives 0.
pub fn hausdorff_sets(a: &Mask, b: &Mask) -> f64 {
    let (w, h) = a.dimensions();
    match (squared_distance_transform(a), squared_distance_transform(b)) {
        (None, None) => 0.0,
        (None, Some(_)) | (Some(_), None) => ((w as f64).powi(2) + (h as f64).powi(2)).sqrt(),
        (Some(da), Some(db)) => {
            let directed = |from: &Mask, dt: &[i64]| {
                from.as_slice()
                    .iter()
                    .zip(dt)
                    .filter(|(&m, _)| m)
                    .map(|(_, &d)| d)
                    .max()
                    .unwrap_or(0)
            };
            (directed(a, &db).max(directed(b, &da)) as f64).sqrt()
        }
    }
}

/// Hausdorff distance between the Otsu foregrounds of two images.
pub fn hausdorff(a: &GrayImage, b: &GrayImage) -> Result<f64, MetricError> {
    check_dims(a, b)?;
    Ok(hausdorff_sets(&foreground(a), &foreground(b)))
}

pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64, MetricError> {
    check_dims(a, b)?;
    let n = a.as_raw().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: u64 = a
        .as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&x, &y)| (x as i64 - y as i64).pow(2) as u64)
        .sum();
    Ok(sum as f64 / n as f64)
}

/// 1-D Wasserstein-1 distance between the two intensity samples,
/// `∫ |F_a(t) − F_b(t)| dt` over the empirical CDFs.
pub fn wasserstein(a: &GrayImage, b: &GrayImage) -> f64 {
    let (ha, hb) = (histogram(a), histogram(b));
    let (na, nb) = (a.as_raw().len() as u128, b.as_raw().len() as u128);
    if na == 0 || nb == 0 {
        return 0.0;
    }
    let (mut ca, mut cb) = (0u128, 0u128);
    let mut total = 0u128;
    for t in 0..255 {
        ca += ha[t] as u128;
        cb += hb[t] as u128;
        total += (ca * nb).abs_diff(cb * na);
    }
    total as f64 / (na * nb) as f64
}

/// `100 · ratio · RMSE / mean(reference)` for a single band.
pub fn ergas(reference: &GrayImage, test: &GrayImage, ratio: f64) -> Result<f64, MetricError> {
    check_dims(reference, test)?;
    let n = reference.as_raw().len() as f64;
    let mean = reference.as_raw().iter().map(|&v| v as f64).sum::<f64>() / n.max(1.0);
    if mean <= 1e-9 {
        return Err(MetricError::ZeroMeanReference);
    }
    Ok(100.0 * ratio * mse(reference, test)?.sqrt() / mean)
}

fn entropy(counts: impl Iterator<Item = u64>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `(H(A) + H(B)) / H(A, B)` over `bins` equal-width intensity bins.
/// Two constant images give 2 when they share a bin and 1 otherwise.
pub fn nmi(a: &GrayImage, b: &GrayImage, bins: usize) -> Result<f64, MetricError> {
    check_dims(a, b)?;
    let bins = bins.clamp(1, 256);
    let bin = |v: u8| v as usize * bins / 256;
    let mut joint = vec![0u64; bins * bins];
    let mut ma = vec![0u64; bins];
    let mut mb = vec![0u64; bins];
    for (&x, &y) in a.as_raw().iter().zip(b.as_raw()) {
        let (i, j) = (bin(x), bin(y));
        joint[i * bins + j] += 1;
        ma[i] += 1;
        mb[j] += 1;
    }
    let n = a.as_raw().len() as f64;
    let hab = entropy(joint.iter().copied(), n);
    if hab <= 0.0 {
        let same = ma.iter().zip(&mb).any(|(&p, &q)| p > 0 && q > 0);
        return Ok(if same { 2.0 } else { 1.0 });
    }
    let ha = entropy(ma.into_iter(), n);
    let hb = entropy(mb.into_iter(), n);
    Ok(((ha + hb) / hab).clamp(1.0, 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPanel {
    pub hd: f64,
    pub mse: f64,
    pub wd: f64,
    pub ergas: f64,
    pub nmi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Hd,
    Mse,
    Wd,
    Ergas,
    Nmi,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Hd, Metric::Mse, Metric::Wd, Metric::Ergas, Metric::Nmi];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Hd => "hd",
            Metric::Mse => "mse",
            Metric::Wd => "wd",
            Metric::Ergas => "ergas",
            Metric::Nmi => "nmi",
        }
    }

    pub fn higher_is_better(&self) -> bool {
        matches!(self, Metric::Nmi)
    }
}

impl MetricPanel {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Hd => self.hd,
            Metric::Mse => self.mse,
            Metric::Wd => self.wd,
            Metric::Ergas => self.ergas,
            Metric::Nmi => self.nmi,
        }
    }
}

/// Metrics of an in-painted region against one option crop (the reference).
/// An all-black reference has no defined ERGAS and scores `f64::MAX`.
pub fn panel(region: &GrayImage, option: &GrayImage, cfg: &PanelConfig) -> Result<MetricPanel, MetricError> {
    check_dims(region, option)?;
    let ergas = match ergas(option, region, cfg.ergas_ratio) {
        Ok(v) => v,
        Err(MetricError::ZeroMeanReference) => f64::MAX,
        Err(e) => return Err(e),
    };
    Ok(MetricPanel {
        hd: hausdorff(region, option)?,
        mse: mse(region, option)?,
        wd: wasserstein(region, option),
        ergas,
        nmi: nmi(region, option, cfg.nmi_bins)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    None,
    Mse,
    LowestIndex,
}

impl TieBreak {
    pub fn as_str(&self) -> &'static str {
        match self {
            TieBreak::None => "none",
            TieBreak::Mse => "mse",
            TieBreak::LowestIndex => "lowest_index",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub panels: Vec<MetricPanel>,
    /// Winning option per metric, in [`Metric::ALL`] order.
    pub winners: [usize; 5],
    pub choice: usize,
    pub tiebreak: TieBreak,
}

/// Per-metric winners (first index on ties), then the mode of the winners;
/// a tied mode goes to the smaller MSE, then to the lower index.
pub fn vote_panels(panels: Vec<MetricPanel>) -> VoteRecord {
    let winners: [usize; 5] = std::array::from_fn(|k| {
        let m = Metric::ALL[k];
        let mut best = 0;
        for (i, p) in panels.iter().enumerate().skip(1) {
            let (v, b) = (p.get(m), panels[best].get(m));
            let better = if m.higher_is_better() { v > b } else { v < b };
            if better {
                best = i;
            }
        }
        best
    });
    let mut counts = vec![0usize; panels.len()];
    for &w in &winners {
        counts[w] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0);
    let tied: Vec<usize> = (0..panels.len()).filter(|&i| counts[i] == top).collect();
    let (choice, tiebreak) = if tied.len() == 1 {
        (tied[0], TieBreak::None)
    } else {
        let best_mse = tied
            .iter()
            .map(|&i| panels[i].mse)
            .fold(f64::INFINITY, f64::min);
        let at_best: Vec<usize> = tied.iter().copied().filter(|&i| panels[i].mse == best_mse).collect();
        if at_best.len() == 1 {
            (at_best[0], TieBreak::Mse)
        } else {
            (at_best[0], TieBreak::LowestIndex)
        }
    };
    VoteRecord {
        panels,
        winners,
        choice,
        tiebreak,
    }
}

pub fn vote(region: &GrayImage, options: &[GrayImage], cfg: &PanelConfig) -> Result<VoteRecord, MetricError> {
    let panels = options
        .iter()
        .map(|o| panel(region, o, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(vote_panels(panels))
}
