//! Shared fixtures, printed table values and brute-force reference
//! implementations for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use sbfl_core::ingest;
use sbfl_core::metrics::TieGroup;
use sbfl_core::{ElementId, FaultOracle, Ranking, Score, Spectrum};

pub const ELEMENTS: [&str; 19] = [
    "l2", "l3", "l4", "l5", "l6", "l7", "l8", "l9", "l10", "l12", "l15", "l19", "l20", "l22", "l23", "l24",
    "l25", "l26", "l28",
];

pub const TARANTULA: [f64; 19] = [
    0.46, 0.46, 0.46, 0.46, 0.69, 0.45, 0.27, 0.56, 0.24, 1.00, 0.26, 0.46, 0.00, 0.49, 0.49, 0.43, 0.36, 0.00, 0.43,
];
pub const OCHIAI: [f64; 19] = [
    0.42, 0.42, 0.42, 0.42, 0.35, 0.37, 0.13, 0.43, 0.13, 0.61, 0.18, 0.32, 0.00, 0.34, 0.34, 0.18, 0.16, 0.00, 0.18,
];
pub const DSTAR: [f64; 19] = [
    1.56, 1.56, 1.56, 1.56, 0.50, 1.07, 0.08, 1.45, 0.07, 1.80, 0.21, 0.69, 0.00, 0.75, 0.75, 0.10, 0.09, 0.00, 0.10,
];

/// Printed two-decimal values are compared with this slack.
pub const PRINTED_TOL: f64 = 0.005 + 1e-9;

const N: f64 = f64::NAN;

/// Ochiai score per FLITSR iteration on the running example; NaN where the
/// table prints "-".
pub const TRACE: [[f64; 19]; 4] = [
    [0.42, 0.42, 0.42, 0.42, 0.35, 0.37, 0.13, 0.43, 0.13, 0.61, 0.18, 0.32, 0.00, 0.34, 0.34, 0.18, 0.16, 0.00, 0.18],
    [0.23, 0.23, 0.23, 0.23, 0.26, 0.13, 0.00, 0.16, 0.16, N, 0.23, 0.40, 0.00, 0.42, 0.42, 0.22, 0.20, 0.00, 0.22],
    [0.37, 0.37, 0.37, 0.37, 0.41, 0.20, 0.00, 0.25, 0.25, N, 0.37, 0.00, 0.00, N, N, 0.00, 0.00, 0.00, 0.00],
    [0.27, 0.27, 0.27, 0.27, N, 0.29, 0.00, 0.35, 0.35, N, 0.27, 0.00, 0.00, N, N, 0.00, 0.00, 0.00, 0.00],
];

/// Final FLITSR* position per element on the extended example; 0 for
/// elements ranked below every basis.
pub const STAR_RANKS: [usize; 19] = [2, 6, 6, 6, 4, 12, 13, 5, 14, 9, 10, 3, 0, 1, 1, 7, 11, 0, 8];

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .canonicalize()
        .expect("fixture directory")
}

pub fn load_example(name: &str) -> (Spectrum, FaultOracle) {
    let dir = fixtures().join(name);
    let s = ingest::load_coverage_dir(&dir).expect("fixture spectrum");
    let o = ingest::load_fault_oracle(&dir.join("faults.tsv"), s.elements(), true)
        .expect("fixture oracle")
        .oracle;
    (s, o)
}

pub fn ids(s: &Spectrum, names: &[&str]) -> Vec<ElementId> {
    names.iter().map(|n| s.element_id(n).expect(n)).collect()
}

pub fn names_of(s: &Spectrum, elems: &[ElementId]) -> Vec<String> {
    let mut v: Vec<String> = elems.iter().map(|&e| s.element_name(e).to_string()).collect();
    v.sort();
    v
}

/// Dense matrix copy of a spectrum, read cell by cell.
pub struct Matrix {
    pub cover: Vec<Vec<bool>>,
    pub failing: Vec<bool>,
}

impl Matrix {
    pub fn of(s: &Spectrum) -> Self {
        Matrix {
            cover: s
                .test_ids()
                .map(|t| s.element_ids().map(|e| s.covers(t, e)).collect())
                .collect(),
            failing: s.test_ids().map(|t| s.outcome(t).is_fail()).collect(),
        }
    }

    pub fn failing_of(&self, set: &[usize]) -> BTreeSet<usize> {
        (0..self.failing.len())
            .filter(|&t| self.failing[t] && set.iter().any(|&e| self.cover[t][e]))
            .collect()
    }

    pub fn all_failing(&self) -> BTreeSet<usize> {
        (0..self.failing.len()).filter(|&t| self.failing[t]).collect()
    }

    pub fn column(&self, e: usize) -> Vec<bool> {
        self.cover.iter().map(|row| row[e]).collect()
    }

    pub fn counts(&self, e: usize) -> (usize, usize, usize, usize) {
        let (mut ef, mut ep, mut nf, mut np) = (0, 0, 0, 0);
        for (row, &f) in self.cover.iter().zip(&self.failing) {
            match (row[e], f) {
                (true, true) => ef += 1,
                (true, false) => ep += 1,
                (false, true) => nf += 1,
                (false, false) => np += 1,
            }
        }
        (ef, ep, nf, np)
    }

    pub fn is_span(&self, set: &[usize]) -> bool {
        self.failing_of(set) == self.all_failing()
    }

    /// A span none of whose proper sub-selections is a span, where members
    /// with identical columns are kept or dropped together.
    pub fn is_basis(&self, set: &[usize]) -> bool {
        if !self.is_span(set) {
            return false;
        }
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for &e in set {
            match classes.iter_mut().find(|c| self.column(c[0]) == self.column(e)) {
                Some(c) => c.push(e),
                None => classes.push(vec![e]),
            }
        }
        let k = classes.len();
        (0..(1u32 << k) - 1).all(|mask| {
            let sub: Vec<usize> = (0..k)
                .filter(|i| mask & (1 << i) != 0)
                .flat_map(|i| classes[i].iter().copied())
                .collect();
            !self.is_span(&sub)
        })
    }
}

/// All orderings of `0..n`.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// A ranking described tie by tie: each member lists the fault labels it
/// belongs to (empty for non-faulty members).
pub type TieLayout = Vec<Vec<Vec<usize>>>;

pub struct Expectations {
    pub awe: Vec<f64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
}

/// Averages AWE_k, P@x and R@x (x = 1..=len) over every inspection order that
/// respects the tie groups.
pub fn enumerate_expectations(layout: &TieLayout, n_faults: usize) -> Expectations {
    let len: usize = layout.iter().map(|t| t.len()).sum();
    let perms: Vec<Vec<Vec<usize>>> = layout.iter().map(|t| permutations(t.len())).collect();
    let mut awe = vec![0.0; n_faults];
    let mut precision = vec![0.0; len];
    let mut recall = vec![0.0; len];
    let mut count = 0usize;
    let mut choice = vec![0usize; layout.len()];
    loop {
        let order: Vec<&Vec<usize>> = layout
            .iter()
            .enumerate()
            .flat_map(|(g, tie)| perms[g][choice[g]].iter().map(move |&i| &tie[i]))
            .collect();
        let mut found = BTreeSet::new();
        let mut wasted = 0usize;
        let mut faulty_seen = 0usize;
        for (pos, labels) in order.iter().enumerate() {
            if labels.is_empty() {
                wasted += 1;
            } else {
                faulty_seen += 1;
                let before = found.len();
                found.extend(labels.iter().copied());
                for a in &mut awe[before..found.len()] {
                    *a += wasted as f64;
                }
            }
            precision[pos] += faulty_seen as f64 / (pos + 1) as f64;
            recall[pos] += found.len() as f64 / n_faults as f64;
        }
        count += 1;
        let mut g = 0;
        loop {
            if g == layout.len() {
                let c = count as f64;
                return Expectations {
                    awe: awe.into_iter().map(|v| v / c).collect(),
                    precision: precision.into_iter().map(|v| v / c).collect(),
                    recall: recall.into_iter().map(|v| v / c).collect(),
                };
            }
            choice[g] += 1;
            if choice[g] < perms[g].len() {
                break;
            }
            choice[g] = 0;
            g += 1;
        }
    }
}

/// Builds a ranking and oracle matching `layout`; elements are numbered in
/// layout order and faults are labelled by index.
pub fn ranking_from_layout(layout: &TieLayout, n_faults: usize) -> (Ranking, FaultOracle) {
    let mut next = 0;
    let mut oracle = FaultOracle::new();
    let groups: Vec<TieGroup> = layout
        .iter()
        .enumerate()
        .map(|(g, tie)| {
            let members = tie
                .iter()
                .map(|labels| {
                    let e = ElementId(next);
                    next += 1;
                    for &l in labels {
                        oracle.insert(format!("F{l:02}"), e);
                    }
                    (e, Score::new((layout.len() - g) as f64))
                })
                .collect();
            TieGroup {
                members,
                below_all_bases: false,
            }
        })
        .collect();
    assert_eq!(oracle.num_faults(), n_faults);
    (Ranking::from_groups(groups), oracle)
}

/// Random tie layout with tie sizes at most 8 and a bounded number of
/// inspection orders. Every fault label in `0..n_faults` is used.
pub fn random_layout(rng: &mut impl rand::Rng, max_orders: usize) -> (TieLayout, usize) {
    loop {
        let n_ties = rng.random_range(1..=4);
        let sizes: Vec<usize> = (0..n_ties).map(|_| rng.random_range(1..=8)).collect();
        let orders: usize = sizes.iter().map(|&s| (1..=s).product::<usize>()).product();
        if orders > max_orders {
            continue;
        }
        let total: usize = sizes.iter().sum();
        let n_faults = rng.random_range(1..=total.min(4));
        let mut layout: TieLayout = sizes.iter().map(|&s| vec![Vec::new(); s]).collect();
        let slots: Vec<(usize, usize)> = sizes
            .iter()
            .enumerate()
            .flat_map(|(g, &s)| (0..s).map(move |i| (g, i)))
            .collect();
        for f in 0..n_faults {
            let spread = if rng.random_bool(0.25) { 2 } else { 1 };
            for _ in 0..spread {
                let (g, i) = slots[rng.random_range(0..slots.len())];
                if !layout[g][i].contains(&f) {
                    layout[g][i].push(f);
                }
            }
        }
        return (layout, n_faults);
    }
}

/// Two-sided exact Wilcoxon p-value by listing every sign assignment:
/// the share of assignments whose W+ lies at least as far from its mean as
/// the observed one. Returns (min(W+, W-), p).
pub fn wilcoxon_by_enumeration(diffs: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = diffs.iter().copied().filter(|v| *v != 0.0).collect();
    let n = d.len();
    let ranks: Vec<f64> = d
        .iter()
        .map(|x| {
            let below = d.iter().filter(|y| y.abs() < x.abs()).count() as f64;
            let equal = d.iter().filter(|y| y.abs() == x.abs()).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect();
    let observed: f64 = ranks.iter().zip(&d).filter(|(_, v)| **v > 0.0).map(|(r, _)| r).sum();
    let total: f64 = ranks.iter().sum();
    let mean = total / 2.0;
    let dev = (observed - mean).abs();
    let mut extreme = 0u64;
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
        if (w - mean).abs() >= dev - 1e-9 {
            extreme += 1;
        }
    }
    (observed.min(total - observed), extreme as f64 / (1u64 << n) as f64)
}
