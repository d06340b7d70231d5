//! FLITSR: basis construction on top of a base metric, and FLITSR*, which
//! repeats it on shrinking element sets to produce successively lower-ranked
//! bases.
//!
//! Phase I repeatedly ranks the elements over the current test suite, selects
//! the top element (or its whole ambiguity group) and drops the failing tests
//! it executes, until no failing test is left. The selected elements form a
//! span. Phase II walks the iterations backwards and drops every step whose
//! failing tests (at the time it was selected) are already explained by steps
//! kept later, which leaves a basis.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use fixedbitset::FixedBitSet;

use crate::error::{Error, Result};
use crate::metrics::{rank, MetricId, RankKey, Ranking, Score, TieGroup};
use crate::spectrum::{AmbiguityGroups, ElementId, Spectrum, SpectrumView, TestId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisStep {
    pub rank: usize,
    /// One element, or a whole ambiguity group.
    pub elements: Vec<ElementId>,
}

/// Ordered basis; step ranks are dense and strictly increasing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Basis {
    steps: Vec<BasisStep>,
}

impl Basis {
    pub fn steps(&self) -> &[BasisStep] {
        &self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn num_ranks(&self) -> usize {
        self.steps.len()
    }

    /// Union of all steps in rank order.
    pub fn elements(&self) -> Vec<ElementId> {
        self.steps.iter().flat_map(|s| s.elements.iter().copied()).collect()
    }

    pub fn contains(&self, e: ElementId) -> bool {
        self.steps.iter().any(|s| s.elements.contains(&e))
    }

    pub fn rank_of(&self, e: ElementId) -> Option<usize> {
        self.steps.iter().find(|s| s.elements.contains(&e)).map(|s| s.rank)
    }

    fn shifted(mut self, offset: usize) -> Basis {
        for s in &mut self.steps {
            s.rank += offset;
        }
        self
    }
}

/// Renumbers step ranks densely from 1, preserving their order.
pub fn compact(mut steps: Vec<BasisStep>) -> Basis {
    steps.sort_by_key(|s| s.rank);
    for (i, s) in steps.iter_mut().enumerate() {
        s.rank = i + 1;
    }
    Basis { steps }
}

/// What one phase-I iteration saw and did.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based iteration number within its run.
    pub iteration: usize,
    /// Base-metric score per spectrum element over this iteration's suite;
    /// `None` for elements not ranked (inactive or already selected).
    pub scores: Vec<Option<Score>>,
    pub top_tie: Vec<ElementId>,
    pub selected: Vec<ElementId>,
    /// Failing tests of `selected` in this iteration's suite; these are the
    /// tests the iteration removed.
    pub removed: Vec<TestId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlitsrRun {
    pub basis: Basis,
    pub merged_ranking: Ranking,
    pub trace: Vec<IterationRecord>,
    /// Steps dropped in phase II, in iteration order.
    pub sifted: Vec<Vec<ElementId>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StarRound {
    pub basis: Basis,
    pub trace: Vec<IterationRecord>,
    pub sifted: Vec<Vec<ElementId>>,
    /// Failing tests executed only by this round's basis; removed before the
    /// next round.
    pub removed_tests: Vec<TestId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StarRun {
    pub rounds: Vec<StarRound>,
    pub merged_ranking: Ranking,
}

impl StarRun {
    pub fn bases(&self) -> Vec<&Basis> {
        self.rounds.iter().map(|r| &r.basis).collect()
    }
}

/// Context needed to break ties: the run's first-iteration ranking and suite,
/// and the full-suite ambiguity groups.
pub struct TieBreakContext<'r, 'v> {
    pub original_ranking: &'r Ranking,
    pub original_view: &'r SpectrumView<'v>,
    pub groups: &'r AmbiguityGroups,
}

/// Picks one element out of a tie: highest score in the original ranking,
/// then most failing tests in the original suite, then lowest index.
pub fn break_tie(
    tie: &[ElementId],
    original_ranking: &Ranking,
    original_view: &SpectrumView<'_>,
) -> Result<ElementId> {
    if tie.len() < 2 {
        return Err(Error::domain("break_tie needs at least two elements"));
    }
    let key = |e: ElementId| -> Result<(RankKey, usize, std::cmp::Reverse<ElementId>)> {
        let c = original_view.counts(e)?;
        let score = original_ranking
            .score_of(e)
            .ok_or_else(|| Error::domain(format!("element #{} not in original ranking", e.0)))?;
        Ok((
            RankKey {
                executed_by_failing: c.ef > 0,
                score,
            },
            c.ef,
            std::cmp::Reverse(e),
        ))
    };
    let mut best = tie[0];
    let mut best_key = key(best)?;
    for &e in &tie[1..] {
        let k = key(e)?;
        if k > best_key {
            best = e;
            best_key = k;
        }
    }
    Ok(best)
}

/// Selects the top of `ranking` and removes its failing tests from `view`.
///
/// The selection is the top element widened to its full-suite ambiguity
/// group. When the top tie spans several groups, [`break_tie`] picks the
/// element first. Selected elements are deactivated in the returned view.
pub fn reduce<'v>(
    view: &SpectrumView<'v>,
    ranking: &Ranking,
    ctx: &TieBreakContext<'_, 'v>,
) -> Result<(Vec<ElementId>, SpectrumView<'v>)> {
    if !view.has_failing() {
        return Err(Error::Contract("reduce called on a view without failing tests".into()));
    }
    let top: Vec<ElementId> = ranking.top_tie().iter().map(|e| e.element).collect();
    let Some(&first) = top.first() else {
        return Err(Error::Invariant("no active element left while failing tests remain".into()));
    };
    if view.counts(first)?.ef == 0 {
        return Err(Error::Invariant(format!(
            "top-ranked element #{} executes no failing test while {} remain",
            first.0,
            view.num_failing()
        )));
    }
    let chosen = if top.iter().all(|&e| ctx.groups.same_group(e, first)) {
        first
    } else {
        break_tie(&top, ctx.original_ranking, ctx.original_view)?
    };
    let selected: Vec<ElementId> = ctx
        .groups
        .group_of(chosen)
        .iter()
        .copied()
        .filter(|&e| view.is_element_active(e))
        .collect();
    let removed = view.failing_mask_of(&selected)?;
    let next = view.without_tests_mask(&removed).without_elements(&selected)?;
    if next.num_failing() >= view.num_failing() {
        return Err(Error::Invariant("reduce did not remove any failing test".into()));
    }
    Ok((selected, next))
}

/// Phase-II step for one iteration, visited in reverse order. Drops the step
/// if the failing tests it removed are already in `accumulator`; otherwise
/// keeps it and adds its failing tests over the run's input suite.
pub fn sift(
    record: &IterationRecord,
    input_view: &SpectrumView<'_>,
    accumulator: &mut FixedBitSet,
) -> Result<bool> {
    let mut removed = FixedBitSet::with_capacity(input_view.spectrum().num_tests());
    for t in &record.removed {
        removed.insert(t.0);
    }
    if removed.is_subset(accumulator) {
        return Ok(false);
    }
    accumulator.union_with(&input_view.failing_mask_of(&record.selected)?);
    Ok(true)
}

struct CoreResult {
    basis: Basis,
    trace: Vec<IterationRecord>,
    sifted: Vec<Vec<ElementId>>,
    original: Ranking,
}

fn run_core(input: &SpectrumView<'_>, metric: MetricId, groups: &AmbiguityGroups) -> Result<CoreResult> {
    metric.validate()?;
    if !input.has_failing() {
        return Err(Error::Contract("FLITSR needs at least one failing test".into()));
    }
    let uncovered = input.uncovered_failures();
    if !uncovered.is_empty() {
        let names: Vec<&str> = uncovered.iter().map(|&t| input.spectrum().test_name(t)).collect();
        return Err(Error::Contract(format!(
            "failing tests execute no active element: {}",
            names.join(", ")
        )));
    }
    let spectrum = input.spectrum();
    let original = rank(input, metric);
    let ctx = TieBreakContext {
        original_ranking: &original,
        original_view: input,
        groups,
    };

    let max_iterations = input.num_failing();
    let mut trace = Vec::new();
    let mut view = input.clone();
    loop {
        let ranking = if trace.is_empty() {
            original.clone()
        } else {
            rank(&view, metric)
        };
        let (selected, next) = reduce(&view, &ranking, &ctx)?;
        let mut scores = vec![None; spectrum.num_elements()];
        for entry in ranking.entries() {
            scores[entry.element.0] = Some(entry.score);
        }
        trace.push(IterationRecord {
            iteration: trace.len() + 1,
            scores,
            top_tie: ranking.top_tie().iter().map(|e| e.element).collect(),
            removed: view.failing_tests_of(&selected)?.into_iter().collect(),
            selected,
        });
        view = next;
        if !view.has_failing() {
            break;
        }
        if trace.len() >= max_iterations {
            return Err(Error::Invariant("phase I exceeded the failing-test count".into()));
        }
    }

    let mut accumulator = FixedBitSet::with_capacity(spectrum.num_tests());
    let mut kept = Vec::new();
    let mut sifted = Vec::new();
    for record in trace.iter().rev() {
        if sift(record, input, &mut accumulator)? {
            kept.push(BasisStep {
                rank: record.iteration,
                elements: record.selected.clone(),
            });
        } else {
            sifted.push(record.selected.clone());
        }
    }
    sifted.reverse();
    let basis = compact(kept);

    let elements = basis.elements();
    if !input.is_span(&elements)? {
        return Err(Error::Invariant("FLITSR result is not a span".into()));
    }
    if !input.is_basis(&elements)? {
        return Err(Error::Invariant("FLITSR result is reducible".into()));
    }
    Ok(CoreResult {
        basis,
        trace,
        sifted,
        original,
    })
}

fn basis_groups(basis: &Basis) -> impl Iterator<Item = TieGroup> + '_ {
    basis.steps().iter().map(|s| TieGroup {
        members: s.elements.iter().map(|&e| (e, Score::MAX)).collect(),
        below_all_bases: false,
    })
}

/// Remaining elements of `base` (minus `exclude`) with their tie structure,
/// flagged as lying below every basis.
fn tail_groups(base: &Ranking, exclude: &BTreeSet<ElementId>) -> Vec<TieGroup> {
    base.tie_groups()
        .into_iter()
        .map(|g| TieGroup {
            members: g
                .iter()
                .filter(|e| !exclude.contains(&e.element))
                .map(|e| (e.element, e.score))
                .collect(),
            below_all_bases: true,
        })
        .collect()
}

/// Runs FLITSR over `view`. The merged ranking puts the basis steps first in
/// selection order, followed by every other active element in base-metric
/// order over `view`.
pub fn flitsr_run(view: &SpectrumView<'_>, metric: MetricId) -> Result<FlitsrRun> {
    let groups = view.spectrum().ambiguity_groups();
    let core = run_core(view, metric, &groups)?;
    let in_basis: BTreeSet<ElementId> = core.basis.elements().into_iter().collect();
    let merged_ranking = Ranking::from_groups(
        basis_groups(&core.basis)
            .collect::<Vec<_>>()
            .into_iter()
            .chain(tail_groups(&core.original, &in_basis)),
    );
    Ok(FlitsrRun {
        basis: core.basis,
        merged_ranking,
        trace: core.trace,
        sifted: core.sifted,
    })
}

/// Runs FLITSR* over `view`: each round runs FLITSR on the remaining elements
/// and tests, ranks its basis below the previous ones, removes the basis
/// elements and the failing tests only they execute, and continues until no
/// failing test is left.
///
/// Failing tests that execute no element at all are ignored up front.
/// Elements never placed in a basis follow all bases in base-metric order
/// over `view`, flagged `below_all_bases`.
pub fn flitsr_star(view: &SpectrumView<'_>, metric: MetricId) -> Result<StarRun> {
    let start = view.drop_uncovered_failures();
    if !start.has_failing() {
        return Err(Error::Contract("FLITSR* needs at least one failing test".into()));
    }
    let groups = view.spectrum().ambiguity_groups();
    let max_rounds = start.num_active_elements();
    let mut rounds: Vec<StarRound> = Vec::new();
    let mut offset = 0;
    let mut current = start.clone();
    while current.has_failing() {
        if rounds.len() >= max_rounds {
            return Err(Error::Invariant("FLITSR* exceeded the element count".into()));
        }
        let core = run_core(&current, metric, &groups)?;
        if core.basis.is_empty() {
            break;
        }
        let basis = core.basis.shifted(offset);
        offset += basis.num_ranks();
        let members = basis.elements();
        let rest = current.without_elements(&members)?;
        let rest_elements: Vec<ElementId> = rest.active_elements().collect();
        let mut only_basis = current.failing_mask_of(&members)?;
        only_basis.difference_with(&current.failing_mask_of(&rest_elements)?);
        current = rest.without_tests_mask(&only_basis);
        rounds.push(StarRound {
            basis,
            trace: core.trace,
            sifted: core.sifted,
            removed_tests: only_basis.ones().map(TestId).collect(),
        });
    }

    let mut in_bases = BTreeSet::new();
    for r in &rounds {
        for e in r.basis.elements() {
            if !in_bases.insert(e) {
                return Err(Error::Invariant(format!("element #{} in two bases", e.0)));
            }
        }
    }
    let base = rank(&start, metric);
    let mut groups_out: Vec<TieGroup> = Vec::new();
    for r in &rounds {
        groups_out.extend(basis_groups(&r.basis));
    }
    groups_out.extend(tail_groups(&base, &in_bases));
    Ok(StarRun {
        rounds,
        merged_ranking: Ranking::from_groups(groups_out),
    })
}

fn fmt_score(s: Option<Score>) -> String {
    match s {
        None => "-".to_string(),
        Some(s) if s.is_sentinel() => "inf".to_string(),
        Some(s) => format!("{:.4}", s.value()),
    }
}

fn names(spectrum: &Spectrum, elems: &[ElementId]) -> String {
    elems
        .iter()
        .map(|&e| spectrum.element_name(e))
        .collect::<Vec<_>>()
        .join(",")
}

/// Renders iteration records as a tab-separated table (one row per
/// iteration, one column per element), followed by the basis row.
pub fn render_trace(
    spectrum: &Spectrum,
    title: &str,
    trace: &[IterationRecord],
    basis: &Basis,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {title}");
    out.push_str("iteration");
    for name in spectrum.elements().names() {
        out.push('\t');
        out.push_str(name);
    }
    out.push_str("\tselected\tremoved\n");
    for rec in trace {
        let _ = write!(out, "{}", rec.iteration);
        for s in &rec.scores {
            out.push('\t');
            out.push_str(&fmt_score(*s));
        }
        let removed: Vec<&str> = rec.removed.iter().map(|&t| spectrum.test_name(t)).collect();
        let _ = writeln!(out, "\t{}\t{}", names(spectrum, &rec.selected), removed.join(","));
    }
    out.push_str("basis");
    for e in spectrum.element_ids() {
        out.push('\t');
        match basis.rank_of(e) {
            Some(r) => {
                let _ = write!(out, "#{r}");
            }
            None => out.push('-'),
        }
    }
    out.push_str("\t\t\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::Outcome;

    #[test]
    fn compact_renumbers_densely() {
        let b = compact(vec![
            BasisStep { rank: 4, elements: vec![ElementId(9)] },
            BasisStep { rank: 2, elements: vec![ElementId(5), ElementId(6)] },
            BasisStep { rank: 3, elements: vec![ElementId(1)] },
        ]);
        let ranks: Vec<(usize, ElementId)> = b.steps().iter().map(|s| (s.rank, s.elements[0])).collect();
        assert_eq!(ranks, vec![(1, ElementId(5)), (2, ElementId(1)), (3, ElementId(9))]);
        assert_eq!(compact(b.steps().to_vec()), b);
    }

    #[test]
    fn single_cover_gives_singleton_basis() {
        // e0 executed by both failing tests, nothing else is.
        let s = Spectrum::new(
            vec!["e0".into(), "e1".into()],
            vec![
                ("t0".into(), Outcome::Fail),
                ("t1".into(), Outcome::Fail),
                ("t2".into(), Outcome::Pass),
            ],
            &[vec![true, false], vec![true, true], vec![false, true]],
        )
        .unwrap();
        let run = flitsr_run(&s.full_view(), MetricId::Ochiai).unwrap();
        assert_eq!(run.trace.len(), 1);
        assert_eq!(run.basis.elements(), vec![ElementId(0)]);
        let star = flitsr_star(&s.full_view(), MetricId::Ochiai).unwrap();
        assert_eq!(star.rounds.len(), 2);
        assert_eq!(star.rounds[0].basis.elements(), vec![ElementId(0)]);
    }

    #[test]
    fn no_failing_tests_is_contract_error() {
        let s = Spectrum::new(
            vec!["e0".into()],
            vec![("t0".into(), Outcome::Pass)],
            &[vec![true]],
        )
        .unwrap();
        assert!(matches!(flitsr_run(&s.full_view(), MetricId::Ochiai), Err(Error::Contract(_))));
        assert!(matches!(flitsr_star(&s.full_view(), MetricId::Ochiai), Err(Error::Contract(_))));
    }

    #[test]
    fn break_tie_rules() {
        // e0 and e1: identical original score but e1 has more failing tests?
        // Construct e0: ef=1, ep=0 ; e1: ef=2, ep=2 over F=2, P=2.
        let s = Spectrum::new(
            vec!["e0".into(), "e1".into(), "e2".into()],
            vec![
                ("f0".into(), Outcome::Fail),
                ("f1".into(), Outcome::Fail),
                ("p0".into(), Outcome::Pass),
                ("p1".into(), Outcome::Pass),
            ],
            &[
                vec![true, true, true],
                vec![false, true, false],
                vec![false, true, false],
                vec![false, true, false],
            ],
        )
        .unwrap();
        let v = s.full_view();
        // Ochiai: e0 = 1/sqrt(2*1) = 0.707, e1 = 2/sqrt(2*4) = 0.707, e2 == e0 (same column).
        let r = rank(&v, MetricId::Ochiai);
        assert_eq!(r.top_tie().len(), 3);
        assert_eq!(break_tie(&[ElementId(0), ElementId(1)], &r, &v).unwrap(), ElementId(1));
        assert_eq!(break_tie(&[ElementId(2), ElementId(0)], &r, &v).unwrap(), ElementId(0));
        assert!(break_tie(&[ElementId(0)], &r, &v).is_err());
    }

    #[test]
    fn sift_keeps_first_visited_step() {
        let s = Spectrum::new(
            vec!["e0".into()],
            vec![("t0".into(), Outcome::Fail)],
            &[vec![true]],
        )
        .unwrap();
        let v = s.full_view();
        let rec = IterationRecord {
            iteration: 1,
            scores: vec![None],
            top_tie: vec![ElementId(0)],
            selected: vec![ElementId(0)],
            removed: vec![TestId(0)],
        };
        let mut acc = FixedBitSet::with_capacity(1);
        assert!(sift(&rec, &v, &mut acc).unwrap());
        assert!(acc.contains(0));
        assert!(!sift(&rec, &v, &mut acc).unwrap());
    }
}
