//! Error-pattern statistics: difficulty-ordered response grids, per-cell
//! proportion tests under Benjamini-Yekutieli control, and covariate tests
//! for participants who share a model's errors.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::error::StatsError;

pub const N_OPTIONS: usize = 8;

/// Two-sided p-value of a standard normal statistic.
fn normal_two_sided(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Pooled two-proportion z-test. A pooled proportion of 0 or 1 gives
/// `z = 0, p = 1`.
pub fn ztest_two_proportions(k1: u64, n1: u64, k2: u64, n2: u64) -> (f64, f64) {
    if n1 == 0 || n2 == 0 {
        return (0.0, 1.0);
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (k1 + k2) as f64 / (n1f + n2f);
    if pooled <= 0.0 || pooled >= 1.0 {
        return (0.0, 1.0);
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    let z = (k1 as f64 / n1f - k2 as f64 / n2f) / se;
    (z, normal_two_sided(z))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrResult {
    pub rejected: Vec<bool>,
    pub adjusted: Vec<f64>,
}

/// Benjamini-Yekutieli step-up procedure, results in input order.
pub fn fdr_by(pvals: &[f64], alpha: f64) -> FdrResult {
    let m = pvals.len();
    if m == 0 {
        return FdrResult {
            rejected: Vec::new(),
            adjusted: Vec::new(),
        };
    }
    let c: f64 = (1..=m).map(|i| 1.0 / i as f64).sum();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]).then(a.cmp(&b)));

    let mf = m as f64;
    let cutoff = (0..m)
        .rev()
        .find(|&r| pvals[order[r]] <= (r + 1) as f64 * alpha / (mf * c));
    let mut rejected = vec![false; m];
    if let Some(last) = cutoff {
        for &i in &order[..=last] {
            rejected[i] = true;
        }
    }
    let mut adjusted = vec![0.0; m];
    let mut running: f64 = 1.0;
    for r in (0..m).rev() {
        let i = order[r];
        running = running.min((pvals[i] * mf * c / (r + 1) as f64).min(1.0));
        adjusted[i] = running;
    }
    FdrResult { rejected, adjusted }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chi2Result {
    pub chi2: f64,
    pub dof: usize,
    pub p: f64,
    pub min_expected: f64,
    /// Some expected count is below 5; reported, never blocking.
    pub small_expected: bool,
}

/// Pearson chi-squared test of independence on an r×c table of counts.
pub fn chi2_contingency(table: &[Vec<u64>]) -> Result<Chi2Result, StatsError> {
    let r = table.len();
    let c = table.first().map_or(0, |row| row.len());
    if r < 2 || c < 2 || table.iter().any(|row| row.len() != c) {
        return Err(StatsError::BadTable);
    }
    let rows: Vec<u64> = table.iter().map(|row| row.iter().sum()).collect();
    let cols: Vec<u64> = (0..c).map(|j| table.iter().map(|row| row[j]).sum()).collect();
    if rows.contains(&0) || cols.contains(&0) {
        return Err(StatsError::ZeroMargin);
    }
    let total: u64 = rows.iter().sum();
    let mut chi2 = 0.0;
    let mut min_expected = f64::INFINITY;
    for i in 0..r {
        for j in 0..c {
            let e = rows[i] as f64 * cols[j] as f64 / total as f64;
            min_expected = min_expected.min(e);
            chi2 += (table[i][j] as f64 - e).powi(2) / e;
        }
    }
    let dof = (r - 1) * (c - 1);
    let p = ChiSquared::new(dof as f64)
        .map(|d| d.sf(chi2))
        .unwrap_or(1.0)
        .clamp(0.0, 1.0);
    Ok(Chi2Result {
        chi2,
        dof,
        p,
        min_expected,
        small_expected: min_expected < 5.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MwuMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MwuResult {
    /// U statistic of the first sample.
    pub u: f64,
    pub p: f64,
    pub method: MwuMethod,
}

/// Largest smaller-sample size handled by exact enumeration.
pub const MWU_EXACT_MAX: usize = 8;

/// Doubled midranks of the pooled sample (integers, so sums are exact).
fn doubled_ranks(pooled: &[f64]) -> (Vec<u64>, Vec<u64>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 averaged, doubled
        let doubled = (i + 1 + j + 1) as u64;
        for &k in &order[i..=j] {
            ranks[k] = doubled;
        }
        ties.push((j - i + 1) as u64);
        i = j + 1;
    }
    (ranks, ties)
}

/// Number of arrangements giving each value of U for sample sizes (n1, n2).
fn u_distribution(n1: usize, n2: usize) -> Vec<f64> {
    // f[a][b][u]: counts for sizes (a, b); iterate a outer keeping slices by b
    let max_u = n1 * n2;
    let mut prev: Vec<Vec<f64>> = (0..=n2).map(|_| vec![1.0]).collect(); // a = 0
    for a in 1..=n1 {
        let mut cur: Vec<Vec<f64>> = Vec::with_capacity(n2 + 1);
        cur.push(vec![1.0]); // b = 0
        for b in 1..=n2 {
            let mut f = vec![0.0; a * b + 1];
            // last element belongs to sample a: it beats all b of the other sample
            for (u, &v) in prev[b].iter().enumerate() {
                f[u + b] += v;
            }
            for (u, &v) in cur[b - 1].iter().enumerate() {
                f[u] += v;
            }
            cur.push(f);
        }
        prev = cur;
    }
    let mut out = prev.swap_remove(n2);
    out.resize(max_u + 1, 0.0);
    out
}

/// Mann-Whitney U test, two-sided.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MwuResult, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = doubled_ranks(&pooled);
    let r1_doubled: u64 = ranks[..n1].iter().sum();
    let u = r1_doubled as f64 / 2.0 - (n1 * (n1 + 1)) as f64 / 2.0;
    let has_ties = ties.iter().any(|&t| t > 1);

    if n1.min(n2) <= MWU_EXACT_MAX && !has_ties {
        let dist = u_distribution(n1, n2);
        let total: f64 = dist.iter().sum();
        let ui = u.round() as usize;
        let lower: f64 = dist[..=ui].iter().sum::<f64>() / total;
        let upper: f64 = dist[ui..].iter().sum::<f64>() / total;
        return Ok(MwuResult {
            u,
            p: (2.0 * lower.min(upper)).min(1.0),
            method: MwuMethod::Exact,
        });
    }

    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let n = n1f + n2f;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = n1f * n2f / 12.0 * ((n + 1.0) - tie_term);
    if var <= 0.0 {
        return Ok(MwuResult {
            u,
            p: 1.0,
            method: MwuMethod::Normal,
        });
    }
    let mu = n1f * n2f / 2.0;
    let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
    Ok(MwuResult {
        u,
        p: normal_two_sided(z),
        method: MwuMethod::Normal,
    })
}

/// Chosen option per item, one row per participant or model run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseTable {
    pub n_items: usize,
    pub rows: Vec<Vec<u8>>,
}

impl ResponseTable {
    pub fn new(n_items: usize, rows: Vec<Vec<u8>>) -> Result<Self, StatsError> {
        for row in &rows {
            if row.len() != n_items {
                return Err(StatsError::ItemMismatch(n_items, row.len()));
            }
            if let Some((item, &value)) = row.iter().enumerate().find(|(_, &v)| v as usize >= N_OPTIONS) {
                return Err(StatsError::BadResponse { item, value });
            }
        }
        Ok(ResponseTable { n_items, rows })
    }

    /// Selection counts per item and option.
    pub fn counts(&self) -> Vec<[u64; N_OPTIONS]> {
        let mut c = vec![[0u64; N_OPTIONS]; self.n_items];
        for row in &self.rows {
            for (item, &opt) in row.iter().enumerate() {
                c[item][opt as usize] += 1;
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorGrid {
    /// `counts[r][c]`: selections of the `c`-th ordered option of the `r`-th ordered item.
    pub counts: Vec<[u64; N_OPTIONS]>,
    /// Items by decreasing reference success.
    pub item_order: Vec<usize>,
    /// Per original item index: options by decreasing reference selection frequency.
    pub option_order: Vec<[usize; N_OPTIONS]>,
    pub group_size: usize,
}

/// Arranges `table`'s selections under orderings derived from `reference`:
/// items by decreasing share of correct answers, options by decreasing
/// selection frequency. Ties fall back to the original index.
pub fn build_error_grid(
    table: &ResponseTable,
    reference: &ResponseTable,
    answer_key: &[u8],
) -> Result<ErrorGrid, StatsError> {
    if table.n_items != reference.n_items {
        return Err(StatsError::ItemMismatch(table.n_items, reference.n_items));
    }
    if answer_key.len() != reference.n_items {
        return Err(StatsError::ItemMismatch(reference.n_items, answer_key.len()));
    }
    let ref_counts = reference.counts();
    let mut item_order: Vec<usize> = (0..reference.n_items).collect();
    item_order.sort_by(|&a, &b| {
        ref_counts[b][answer_key[b] as usize]
            .cmp(&ref_counts[a][answer_key[a] as usize])
            .then(a.cmp(&b))
    });
    let option_order: Vec<[usize; N_OPTIONS]> = ref_counts
        .iter()
        .map(|c| {
            let mut o: [usize; N_OPTIONS] = std::array::from_fn(|i| i);
            o.sort_by(|&x, &y| c[y].cmp(&c[x]).then(x.cmp(&y)));
            o
        })
        .collect();
    let counts = table.counts();
    let grid = item_order
        .iter()
        .map(|&item| std::array::from_fn(|col| counts[item][option_order[item][col]]))
        .collect();
    Ok(ErrorGrid {
        counts: grid,
        item_order,
        option_order,
        group_size: table.rows.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTest {
    /// Original item index.
    pub item: usize,
    /// Original option index.
    pub option: usize,
    /// Position in the ordered grid.
    pub row: usize,
    pub col: usize,
    pub z: f64,
    pub p: f64,
    pub p_adjusted: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTestReport {
    pub cells: Vec<CellTest>,
    /// Cells where neither group selected the option.
    pub skipped: usize,
    pub family_size: usize,
    pub alpha: f64,
}

/// Per-cell z-tests between two grids built under the same orderings,
/// corrected together with BY.
pub fn grid_tests(a: &ErrorGrid, b: &ErrorGrid, alpha: f64) -> Result<GridTestReport, StatsError> {
    if a.item_order != b.item_order || a.option_order != b.option_order {
        return Err(StatsError::ItemMismatch(a.item_order.len(), b.item_order.len()));
    }
    let (na, nb) = (a.group_size as u64, b.group_size as u64);
    let mut cells = Vec::new();
    let mut skipped = 0;
    for (row, &item) in a.item_order.iter().enumerate() {
        for col in 0..N_OPTIONS {
            let (ka, kb) = (a.counts[row][col], b.counts[row][col]);
            if ka == 0 && kb == 0 {
                skipped += 1;
                continue;
            }
            let (z, p) = ztest_two_proportions(ka, na, kb, nb);
            cells.push(CellTest {
                item,
                option: a.option_order[item][col],
                row,
                col,
                z,
                p,
                p_adjusted: p,
                rejected: false,
            });
        }
    }
    let pvals: Vec<f64> = cells.iter().map(|c| c.p).collect();
    let fdr = fdr_by(&pvals, alpha);
    for (i, c) in cells.iter_mut().enumerate() {
        c.rejected = fdr.rejected[i];
        c.p_adjusted = fdr.adjusted[i];
    }
    Ok(GridTestReport {
        family_size: cells.len(),
        cells,
        skipped,
        alpha,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub participant_id: String,
    pub group: String,
    pub age: f64,
    pub education_years: f64,
    pub premorbid_score: f64,
    pub sex: String,
    pub responses: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateTestKind {
    ChiSquared,
    MannWhitney,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateTest {
    pub covariate: String,
    pub kind: CovariateTestKind,
    pub statistic: f64,
    pub p: f64,
    pub p_adjusted: f64,
    pub rejected: bool,
    /// Chi-squared only: some expected count is below 5.
    pub small_expected: bool,
    /// The test could not be computed (empty partition side or zero margin); p = 1.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    /// (item, wrong option) pairs the model produced.
    pub model_errors: Vec<(usize, u8)>,
    pub sharers: Vec<String>,
    pub non_sharers: Vec<String>,
    pub tests: Vec<CovariateTest>,
    pub alpha: f64,
}

fn categorical_table(sharing: &[bool], labels: &[&str]) -> Vec<Vec<u64>> {
    let mut levels: Vec<&str> = labels.to_vec();
    levels.sort_unstable();
    levels.dedup();
    [true, false]
        .iter()
        .map(|&side| {
            levels
                .iter()
                .map(|lvl| {
                    sharing
                        .iter()
                        .zip(labels)
                        .filter(|(&s, l)| s == side && *l == lvl)
                        .count() as u64
                })
                .collect()
        })
        .collect()
}

/// Splits participants by whether they made at least one of the model's
/// wrong (item, option) choices, then tests group and sex by chi-squared and
/// age, education and premorbid score by Mann-Whitney, BY-corrected as one family.
pub fn model_error_overlap(
    model_choices: &[u8],
    answer_key: &[u8],
    participants: &[Participant],
    alpha: f64,
) -> Result<OverlapReport, StatsError> {
    if model_choices.len() != answer_key.len() {
        return Err(StatsError::ItemMismatch(model_choices.len(), answer_key.len()));
    }
    let model_errors: Vec<(usize, u8)> = model_choices
        .iter()
        .zip(answer_key)
        .enumerate()
        .filter(|(_, (c, a))| c != a)
        .map(|(i, (&c, _))| (i, c))
        .collect();
    if model_errors.is_empty() {
        return Err(StatsError::NoModelErrors);
    }
    for p in participants {
        if p.responses.len() != answer_key.len() {
            return Err(StatsError::ItemMismatch(answer_key.len(), p.responses.len()));
        }
    }
    let sharing: Vec<bool> = participants
        .iter()
        .map(|p| model_errors.iter().any(|&(i, c)| p.responses[i] == c))
        .collect();

    let mut tests = Vec::new();
    let categorical: [(&str, Vec<&str>); 2] = [
        ("group", participants.iter().map(|p| p.group.as_str()).collect()),
        ("sex", participants.iter().map(|p| p.sex.as_str()).collect()),
    ];
    for (name, labels) in categorical {
        let table = categorical_table(&sharing, &labels);
        let test = match chi2_contingency(&table) {
            Ok(r) => CovariateTest {
                covariate: name.to_string(),
                kind: CovariateTestKind::ChiSquared,
                statistic: r.chi2,
                p: r.p,
                p_adjusted: r.p,
                rejected: false,
                small_expected: r.small_expected,
                degenerate: false,
            },
            Err(_) => CovariateTest {
                covariate: name.to_string(),
                kind: CovariateTestKind::ChiSquared,
                statistic: 0.0,
                p: 1.0,
                p_adjusted: 1.0,
                rejected: false,
                small_expected: false,
                degenerate: true,
            },
        };
        tests.push(test);
    }
    let continuous: [(&str, fn(&Participant) -> f64); 3] = [
        ("age", |p| p.age),
        ("education_years", |p| p.education_years),
        ("premorbid_score", |p| p.premorbid_score),
    ];
    for (name, get) in continuous {
        let split = |side: bool| -> Vec<f64> {
            participants
                .iter()
                .zip(&sharing)
                .filter(|(_, &s)| s == side)
                .map(|(p, _)| get(p))
                .collect()
        };
        let test = match mann_whitney_u(&split(true), &split(false)) {
            Ok(r) => CovariateTest {
                covariate: name.to_string(),
                kind: CovariateTestKind::MannWhitney,
                statistic: r.u,
                p: r.p,
                p_adjusted: r.p,
                rejected: false,
                small_expected: false,
                degenerate: false,
            },
            Err(_) => CovariateTest {
                covariate: name.to_string(),
                kind: CovariateTestKind::MannWhitney,
                statistic: 0.0,
                p: 1.0,
                p_adjusted: 1.0,
                rejected: false,
                small_expected: false,
                degenerate: true,
            },
        };
        tests.push(test);
    }
    let fdr = fdr_by(&tests.iter().map(|t| t.p).collect::<Vec<_>>(), alpha);
    for (i, t) in tests.iter_mut().enumerate() {
        t.p_adjusted = fdr.adjusted[i];
        t.rejected = fdr.rejected[i];
    }
    let ids = |side: bool| {
        participants
            .iter()
            .zip(&sharing)
            .filter(|(_, &s)| s == side)
            .map(|(p, _)| p.participant_id.clone())
            .collect()
    };
    Ok(OverlapReport {
        model_errors,
        sharers: ids(true),
        non_sharers: ids(false),
        tests,
        alpha,
    })
}
