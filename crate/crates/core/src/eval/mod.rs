//! Evaluation of a ranking against a fault oracle.
//!
//! Developers are assumed to inspect elements in rank order and in uniformly
//! random order inside each tie group; every measure here is an expectation
//! over those within-tie permutations. A fault is found as soon as any of its
//! elements is inspected. Inspecting a faulty element is never wasted effort.

mod generate;
mod wilcoxon;

pub use generate::{generate_random_spectrum, GeneratedSpectrum, GeneratorConfig};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonMethod, WilcoxonResult};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::Ranking;
use crate::spectrum::FaultOracle;

/// Ties with more faulty members than this fall back to Monte-Carlo when the
/// wasted-effort expectation has no closed form.
const MAX_EXACT_FAULTY: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub precision_cutoffs: Vec<usize>,
    /// `R@N_f` is always reported in addition to these.
    pub recall_cutoffs: Vec<usize>,
    pub curve_resolution: usize,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            precision_cutoffs: vec![1, 5, 10],
            recall_cutoffs: vec![1, 5, 10],
            curve_resolution: 50,
            mc_samples: 10_000,
            seed: 0,
        }
    }
}

/// How tie expectations were computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectationMethod {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub cutoff: usize,
    pub fraction_inspected: f64,
    pub fraction_found: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_faults: usize,
    /// `awe[k - 1]` is the expected wasted effort to the k-th fault.
    pub awe: Vec<f64>,
    pub precision_at: BTreeMap<usize, f64>,
    pub recall_at: BTreeMap<usize, f64>,
    pub curve: Vec<CurvePoint>,
    pub method: ExpectationMethod,
    /// Oracle faults with no element in the ranking; excluded from every
    /// measure.
    pub dropped_faults: Vec<String>,
}

impl EvalReport {
    pub fn awe_first(&self) -> f64 {
        self.awe[0]
    }

    /// Wasted effort to fault `ceil(N_f / 2)`.
    pub fn awe_median(&self) -> f64 {
        self.awe[self.n_faults.div_ceil(2) - 1]
    }

    pub fn awe_last(&self) -> f64 {
        self.awe[self.n_faults - 1]
    }

    /// Named scalar measures in a fixed order; the rows of the report CSV.
    pub fn measures(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("n_faults".to_string(), self.n_faults as f64),
            ("awe_first".to_string(), self.awe_first()),
            ("awe_median".to_string(), self.awe_median()),
            ("awe_last".to_string(), self.awe_last()),
        ];
        for (k, v) in self.awe.iter().enumerate() {
            rows.push((format!("awe_{}", k + 1), *v));
        }
        for (x, v) in &self.precision_at {
            rows.push((format!("p_at_{x}"), *v));
        }
        for (x, v) in &self.recall_at {
            rows.push((format!("r_at_{x}"), *v));
        }
        rows.push((
            "r_at_nf".to_string(),
            self.recall_at.get(&self.n_faults).copied().unwrap_or(f64::NAN),
        ));
        rows.push(("dropped_faults".to_string(), self.dropped_faults.len() as f64));
        rows
    }

    /// `measure,value` CSV, one row per measure.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("measure,value\n");
        for (name, value) in self.measures() {
            let _ = writeln!(out, "{name},{value}");
        }
        match self.method {
            ExpectationMethod::Exact => out.push_str("method,exact\n"),
            ExpectationMethod::MonteCarlo { samples, seed } => {
                let _ = writeln!(out, "method,monte-carlo\nmc_samples,{samples}\nmc_seed,{seed}");
            }
        }
        out
    }

    /// `x_fraction,recall` CSV of the inspection curve.
    pub fn curve_csv(&self) -> String {
        curve_csv(&self.curve)
    }
}

pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("x_fraction,recall\n");
    for p in curve {
        let _ = writeln!(out, "{},{}", p.fraction_inspected, p.fraction_found);
    }
    out
}

/// Per-tie view of where the faults sit.
struct Layout {
    n_faults: usize,
    /// For each tie: its size and, per faulty member, the fault indices it carries.
    ties: Vec<(usize, Vec<Vec<usize>>)>,
}

impl Layout {
    fn new(ranking: &Ranking, oracle: &FaultOracle) -> Self {
        let by_element = oracle.fault_indices_by_element();
        let ties = ranking
            .tie_groups()
            .into_iter()
            .map(|g| {
                let faulty = g
                    .iter()
                    .filter_map(|e| by_element.get(&e.element).cloned())
                    .collect();
                (g.len(), faulty)
            })
            .collect();
        Layout {
            n_faults: oracle.num_faults(),
            ties,
        }
    }

    fn check_all_ranked(&self, oracle: &FaultOracle) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (_, faulty) in &self.ties {
            seen.extend(faulty.iter().flatten().copied());
        }
        if seen.len() == self.n_faults {
            return Ok(());
        }
        let missing: Vec<&str> = oracle
            .faults()
            .enumerate()
            .filter(|(i, _)| !seen.contains(i))
            .map(|(_, (label, _))| label)
            .collect();
        Err(Error::domain(format!(
            "faults without a ranked element: {}",
            missing.join(", ")
        )))
    }
}

/// Expected index (1-based, among the faulty members of a tie) at which the
/// `need`-th not-yet-found fault is completed, the faulty members being
/// inspected in uniformly random order.
fn expected_completion_index(
    members: &[Vec<usize>],
    found: &BTreeSet<usize>,
    need: usize,
    opts: &EvalOptions,
    method: &mut ExpectationMethod,
) -> f64 {
    let fresh: Vec<Vec<usize>> = members
        .iter()
        .map(|m| m.iter().copied().filter(|f| !found.contains(f)).collect())
        .collect();
    // Closed form: each member brings exactly one new fault of its own.
    let mut labels = BTreeSet::new();
    if fresh.iter().all(|m| m.len() == 1 && labels.insert(m[0])) {
        return need as f64;
    }
    let k = fresh.len();
    let mut ids: BTreeMap<usize, usize> = BTreeMap::new();
    for &f in fresh.iter().flatten() {
        let next = ids.len();
        ids.entry(f).or_insert(next);
    }
    if k <= MAX_EXACT_FAULTY && ids.len() <= 64 {
        let masks: Vec<u64> = fresh
            .iter()
            .map(|m| m.iter().fold(0u64, |acc, f| acc | 1u64 << ids[f]))
            .collect();
        // short[j] counts the j-subsets of members that do not yet cover `need` faults
        let mut short = vec![0u64; k + 1];
        for subset in 0u32..(1u32 << k) {
            let union = (0..k)
                .filter(|i| subset & (1 << i) != 0)
                .fold(0u64, |acc, i| acc | masks[i]);
            if (union.count_ones() as usize) < need {
                short[subset.count_ones() as usize] += 1;
            }
        }
        // E[J] = sum_j P(first j members fall short)
        let mut total = 0.0;
        let mut binom = 1.0f64;
        for (j, &count) in short.iter().enumerate().take(k) {
            if j > 0 {
                binom = binom * (k - j + 1) as f64 / j as f64;
            }
            total += count as f64 / binom;
        }
        return total;
    }
    *method = ExpectationMethod::MonteCarlo {
        samples: opts.mc_samples,
        seed: opts.seed,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..k).collect();
    let mut sum = 0usize;
    for _ in 0..opts.mc_samples {
        order.shuffle(&mut rng);
        let mut got = BTreeSet::new();
        for (j, &i) in order.iter().enumerate() {
            got.extend(fresh[i].iter().copied());
            if got.len() >= need {
                sum += j + 1;
                break;
            }
        }
    }
    sum as f64 / opts.mc_samples as f64
}

fn awe_all(layout: &Layout, opts: &EvalOptions, method: &mut ExpectationMethod) -> Vec<f64> {
    let mut result = Vec::with_capacity(layout.n_faults);
    let mut found = BTreeSet::new();
    let mut waste_above = 0.0;
    for (n, faulty) in &layout.ties {
        let kt = faulty.len();
        let fresh: BTreeSet<usize> = faulty
            .iter()
            .flatten()
            .copied()
            .filter(|f| !found.contains(f))
            .collect();
        let per_faulty = (n - kt) as f64 / (kt + 1) as f64;
        for need in 1..=fresh.len() {
            let j = expected_completion_index(faulty, &found, need, opts, method);
            result.push(waste_above + j * per_faulty);
        }
        found.extend(fresh);
        waste_above += (n - kt) as f64;
    }
    result
}

/// Expected number of non-faulty elements inspected before the `k`-th
/// distinct fault is found.
pub fn wasted_effort(ranking: &Ranking, oracle: &FaultOracle, k: usize) -> Result<f64> {
    let n_faults = oracle.num_faults();
    if k == 0 || k > n_faults {
        return Err(Error::domain(format!("k = {k} outside 1..={n_faults}")));
    }
    let layout = Layout::new(ranking, oracle);
    layout.check_all_ranked(oracle)?;
    let mut method = ExpectationMethod::Exact;
    Ok(awe_all(&layout, &EvalOptions::default(), &mut method)[k - 1])
}

/// Expected fraction of faulty elements among the first `x` inspected.
/// `x` beyond the ranking length is clamped to it.
pub fn precision_at(ranking: &Ranking, oracle: &FaultOracle, x: usize) -> Result<f64> {
    if x == 0 {
        return Err(Error::domain("precision cut-off must be >= 1"));
    }
    if ranking.is_empty() {
        return Ok(0.0);
    }
    let x = x.min(ranking.len());
    let layout = Layout::new(ranking, oracle);
    let mut start = 0;
    let mut expected = 0.0;
    for (n, faulty) in &layout.ties {
        if start >= x {
            break;
        }
        let inside = (x - start).min(*n);
        expected += faulty.len() as f64 * inside as f64 / *n as f64;
        start += n;
    }
    Ok(expected / x as f64)
}

/// Expected fraction of faults found within the first `x` inspected.
pub fn recall_at(ranking: &Ranking, oracle: &FaultOracle, x: usize) -> Result<f64> {
    let n_faults = oracle.num_faults();
    if n_faults == 0 {
        return Err(Error::domain("recall is undefined without faults"));
    }
    let layout = Layout::new(ranking, oracle);
    Ok(expected_found(&layout, x) / n_faults as f64)
}

fn expected_found(layout: &Layout, x: usize) -> f64 {
    let mut sure = BTreeSet::new();
    let mut start = 0;
    for (n, faulty) in &layout.ties {
        if start + n <= x {
            sure.extend(faulty.iter().flatten().copied());
            start += n;
            continue;
        }
        if start >= x {
            break;
        }
        // straddling tie: m of its n members fall inside the cut-off
        let m = x - start;
        let mut members_per_fault: BTreeMap<usize, usize> = BTreeMap::new();
        for f in faulty.iter().flatten() {
            *members_per_fault.entry(*f).or_default() += 1;
        }
        let partial: f64 = members_per_fault
            .into_iter()
            .filter(|(f, _)| !sure.contains(f))
            .map(|(_, a)| {
                // P(none of a given members lands in the first m of n)
                let miss: f64 = (0..a)
                    .map(|i| (n - m).saturating_sub(i) as f64 / (n - i) as f64)
                    .product();
                1.0 - miss
            })
            .sum();
        return sure.len() as f64 + partial;
    }
    sure.len() as f64
}

/// Cut-offs spaced geometrically between 1 and `len`, always including both.
pub fn curve_cutoffs(len: usize, resolution: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let resolution = resolution.max(2);
    let mut xs: Vec<usize> = (0..resolution)
        .map(|i| {
            let t = i as f64 / (resolution - 1) as f64;
            ((len as f64).powf(t).round() as usize).clamp(1, len)
        })
        .collect();
    xs.dedup();
    if xs.last() != Some(&len) {
        xs.push(len);
    }
    xs
}

/// Expected recall at geometrically spaced cut-offs.
pub fn inspection_curve(
    ranking: &Ranking,
    oracle: &FaultOracle,
    resolution: usize,
) -> Result<Vec<CurvePoint>> {
    let len = ranking.len();
    curve_cutoffs(len, resolution)
        .into_iter()
        .map(|x| {
            Ok(CurvePoint {
                cutoff: x,
                fraction_inspected: x as f64 / len as f64,
                fraction_found: recall_at(ranking, oracle, x)?,
            })
        })
        .collect()
}

/// Computes every measure. Faults with no ranked element are dropped and
/// listed in the report rather than failing the evaluation.
pub fn evaluate(ranking: &Ranking, oracle: &FaultOracle, opts: &EvalOptions) -> Result<EvalReport> {
    let ranked: BTreeSet<_> = ranking.elements().collect();
    let mut oracle = oracle.clone();
    let dropped_faults = oracle.retain_elements(|e| ranked.contains(&e));
    if oracle.is_empty() {
        return Err(Error::domain("no oracle fault has a ranked element"));
    }
    let layout = Layout::new(ranking, &oracle);
    let mut method = ExpectationMethod::Exact;
    let awe = awe_all(&layout, opts, &mut method);
    let mut precision = BTreeMap::new();
    for &x in &opts.precision_cutoffs {
        precision.insert(x, precision_at(ranking, &oracle, x)?);
    }
    let mut recall = BTreeMap::new();
    for &x in opts.recall_cutoffs.iter().chain([&oracle.num_faults()]) {
        if x == 0 {
            return Err(Error::domain("recall cut-off must be >= 1"));
        }
        recall.insert(x, recall_at(ranking, &oracle, x)?);
    }
    Ok(EvalReport {
        n_faults: oracle.num_faults(),
        awe,
        precision_at: precision,
        recall_at: recall,
        curve: inspection_curve(ranking, &oracle, opts.curve_resolution)?,
        method,
        dropped_faults,
    })
}
