//! Suspiciousness metrics and rankings.
//!
//! Every metric is a total function of the four execution counts. Sub-terms
//! with a zero denominator evaluate to zero, and cases that would diverge to
//! +infinity with `ef > 0` return [`Score::MAX`].
//!
//! Rankings order elements by the key `(ef > 0, score)` so that an element
//! executed by some failing test always precedes one that is not, whatever
//! the raw formula says.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::spectrum::{ElementId, MetricCounts, SpectrumView};

/// Default coefficients of the hyperbolic metric.
pub const HYPERBOLIC_DEFAULT: (f64, f64, f64) = (0.4, 0.1, 0.5);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricId {
    Tarantula,
    Ochiai,
    DStar { star: f64 },
    Jaccard,
    Gp13,
    Naish2,
    Overlap,
    Harmonic,
    Zoltar,
    Hyperbolic { k1: f64, k2: f64, k3: f64 },
    Barinel,
}

impl MetricId {
    pub const NAMES: [&'static str; 11] = [
        "tarantula",
        "ochiai",
        "dstar",
        "jaccard",
        "gp13",
        "naish2",
        "overlap",
        "harmonic",
        "zoltar",
        "hyperbolic",
        "barinel",
    ];

    pub fn dstar() -> Self {
        MetricId::DStar { star: 2.0 }
    }

    pub fn hyperbolic() -> Self {
        let (k1, k2, k3) = HYPERBOLIC_DEFAULT;
        MetricId::Hyperbolic { k1, k2, k3 }
    }

    /// All eleven metrics with default parameters.
    pub fn all() -> [MetricId; 11] {
        [
            MetricId::Tarantula,
            MetricId::Ochiai,
            MetricId::dstar(),
            MetricId::Jaccard,
            MetricId::Gp13,
            MetricId::Naish2,
            MetricId::Overlap,
            MetricId::Harmonic,
            MetricId::Zoltar,
            MetricId::hyperbolic(),
            MetricId::Barinel,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            MetricId::Tarantula => "tarantula",
            MetricId::Ochiai => "ochiai",
            MetricId::DStar { .. } => "dstar",
            MetricId::Jaccard => "jaccard",
            MetricId::Gp13 => "gp13",
            MetricId::Naish2 => "naish2",
            MetricId::Overlap => "overlap",
            MetricId::Harmonic => "harmonic",
            MetricId::Zoltar => "zoltar",
            MetricId::Hyperbolic { .. } => "hyperbolic",
            MetricId::Barinel => "barinel",
        }
    }

    /// Checks parameter ranges: `star >= 1`, finite coefficients.
    pub fn validate(&self) -> Result<()> {
        match *self {
            MetricId::DStar { star } if !(star.is_finite() && star >= 1.0) => {
                Err(Error::domain(format!("dstar exponent must be >= 1, got {star}")))
            }
            MetricId::Hyperbolic { k1, k2, k3 }
                if !(k1.is_finite() && k2.is_finite() && k3.is_finite()) =>
            {
                Err(Error::domain("hyperbolic coefficients must be finite"))
            }
            _ => Ok(()),
        }
    }

    pub fn score(&self, c: MetricCounts) -> Score {
        score_element(*self, c)
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "tarantula" => MetricId::Tarantula,
            "ochiai" => MetricId::Ochiai,
            "dstar" => MetricId::dstar(),
            "jaccard" => MetricId::Jaccard,
            "gp13" => MetricId::Gp13,
            "naish2" => MetricId::Naish2,
            "overlap" => MetricId::Overlap,
            "harmonic" => MetricId::Harmonic,
            "zoltar" => MetricId::Zoltar,
            "hyperbolic" => MetricId::hyperbolic(),
            "barinel" => MetricId::Barinel,
            other => return Err(Error::domain(format!("unknown metric {other:?}"))),
        })
    }
}

/// A suspiciousness score. Never NaN; `+inf` is the sentinel that sorts above
/// every finite score.
///
/// Finite values are snapped to a 1e-10 grid on construction so that scores
/// which are mathematically equal but computed along different floating-point
/// paths compare equal and form a tie.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score(f64);

impl Score {
    pub const MAX: Score = Score(f64::INFINITY);
    pub const ZERO: Score = Score(0.0);

    pub fn new(value: f64) -> Self {
        assert!(!value.is_nan(), "metric produced NaN");
        if !value.is_finite() {
            return Score(value);
        }
        let snapped = (value * 1e10).round() / 1e10;
        // normalises -0.0
        Score(if snapped == 0.0 { 0.0 } else { snapped })
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_sentinel(self) -> bool {
        self.0 == f64::INFINITY
    }
}

impl Eq for Score {}

impl PartialOrd for Score {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Score {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_sentinel() {
            f.write_str("inf")
        } else {
            write!(f, "{:.6}", self.0)
        }
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// Score of one element under `metric`.
pub fn score_element(metric: MetricId, c: MetricCounts) -> Score {
    let (ef, ep, nf, np) = (c.ef as f64, c.ep as f64, c.nf as f64, c.np as f64);
    let v = match metric {
        MetricId::Tarantula => {
            let f = ratio(ef, ef + nf);
            ratio(f, f + ratio(ep, ep + np))
        }
        MetricId::Ochiai => ratio(ef, ((ef + nf) * (ef + ep)).sqrt()),
        MetricId::DStar { star } => {
            if c.ef == 0 {
                0.0
            } else if ep + nf == 0.0 {
                return Score::MAX;
            } else {
                ef.powf(star) / (ep + nf)
            }
        }
        MetricId::Jaccard => ratio(ef, ef + nf + ep),
        MetricId::Gp13 => {
            if c.ef == 0 {
                0.0
            } else {
                ef * (1.0 + 1.0 / (2.0 * ep + ef))
            }
        }
        MetricId::Naish2 => ef - ep / (ep + np + 1.0),
        MetricId::Overlap => {
            if c.ef == 0 {
                0.0
            } else {
                let m = ef.min(nf).min(ep);
                if m == 0.0 {
                    return Score::MAX;
                }
                ef / m
            }
        }
        MetricId::Harmonic => {
            let num = (ef * np - nf * ep) * ((ef + ep) * (np + nf) + (ef + nf) * (ep + np));
            let den = (ef + ep) * (np + nf) * (ef + nf) * (ep + np);
            ratio(num, den)
        }
        MetricId::Zoltar => {
            if c.ef == 0 {
                0.0
            } else {
                ef / (ef + nf + ep + 10000.0 * nf * ep / ef)
            }
        }
        MetricId::Hyperbolic { k1, k2, k3 } => {
            if c.ef == 0 {
                0.0
            } else {
                ratio(1.0, k1 + nf / ef) + ratio(k3, k2 + ratio(ep, ep + np))
            }
        }
        MetricId::Barinel => 1.0 - ratio(ep, ep + ef),
    };
    Score::new(v)
}

/// Sort key of a ranking entry: failing-first, then score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct RankKey {
    pub executed_by_failing: bool,
    pub score: Score,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub element: ElementId,
    pub score: Score,
    /// 1-based rank of the entry's tie group.
    pub dense_rank: usize,
    /// 1-based position in the ranking.
    pub ordinal_rank: usize,
    /// Set on entries placed after every basis of a FLITSR/FLITSR* run.
    pub below_all_bases: bool,
}

/// Elements in inspection order, partitioned into tie groups. Elements within
/// a tie are listed by ascending index; evaluation treats their order as
/// uniformly random.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ranking {
    entries: Vec<RankEntry>,
}

/// One tie group passed to [`Ranking::from_groups`].
#[derive(Debug, Clone, PartialEq)]
pub struct TieGroup {
    pub members: Vec<(ElementId, Score)>,
    pub below_all_bases: bool,
}

impl Ranking {
    /// Builds a ranking from tie groups in rank order. Members of each group
    /// are sorted by element index; empty groups are skipped.
    pub fn from_groups(groups: impl IntoIterator<Item = TieGroup>) -> Self {
        let mut entries = Vec::new();
        let mut dense = 0;
        for mut g in groups {
            if g.members.is_empty() {
                continue;
            }
            dense += 1;
            g.members.sort_by_key(|(e, _)| *e);
            for (element, score) in g.members {
                entries.push(RankEntry {
                    element,
                    score,
                    dense_rank: dense,
                    ordinal_rank: entries.len() + 1,
                    below_all_bases: g.below_all_bases,
                });
            }
        }
        Ranking { entries }
    }

    pub fn entries(&self) -> &[RankEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn elements(&self) -> impl Iterator<Item = ElementId> + '_ {
        self.entries.iter().map(|e| e.element)
    }

    /// Maximal runs of entries sharing a dense rank.
    pub fn tie_groups(&self) -> Vec<&[RankEntry]> {
        self.entries
            .chunk_by(|a, b| a.dense_rank == b.dense_rank)
            .collect()
    }

    pub fn top_tie(&self) -> &[RankEntry] {
        self.entries
            .chunk_by(|a, b| a.dense_rank == b.dense_rank)
            .next()
            .unwrap_or(&[])
    }

    pub fn entry(&self, e: ElementId) -> Option<&RankEntry> {
        self.entries.iter().find(|x| x.element == e)
    }

    pub fn score_of(&self, e: ElementId) -> Option<Score> {
        self.entry(e).map(|x| x.score)
    }

    pub fn num_tie_groups(&self) -> usize {
        self.entries.last().map_or(0, |e| e.dense_rank)
    }
}

/// Scores every active element of `view` and sorts by [`RankKey`]
/// descending, breaking key ties by element index.
pub fn rank(view: &SpectrumView<'_>, metric: MetricId) -> Ranking {
    let mut keyed: Vec<(RankKey, ElementId)> = view
        .active_elements()
        .map(|e| {
            let c = view.counts_unchecked(e);
            let key = RankKey {
                executed_by_failing: c.ef > 0,
                score: score_element(metric, c),
            };
            (key, e)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let groups = keyed.chunk_by(|a, b| a.0 == b.0).map(|run| TieGroup {
        members: run.iter().map(|(k, e)| (*e, k.score)).collect(),
        below_all_bases: false,
    });
    Ranking::from_groups(groups)
}
