//! Coverage spectra and the set algebra over them.
//!
//! A [`Spectrum`] is an immutable binary matrix over elements × tests with a
//! pass/fail outcome per test. Everything that "reduces" a test suite works on
//! a [`SpectrumView`], which is a pair of masks (active tests, active elements)
//! over a borrowed spectrum. The base matrix is never copied or mutated.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use fixedbitset::FixedBitSet;

use crate::error::{Error, Result};

/// Ordinal of a program element within one [`Spectrum`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ElementId(pub usize);

/// Ordinal of a test within one [`Spectrum`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TestId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Pass => "PASS",
            Outcome::Fail => "FAIL",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "PASS" => Some(Outcome::Pass),
            "FAIL" => Some(Outcome::Fail),
            _ => None,
        }
    }

    pub fn is_fail(self) -> bool {
        self == Outcome::Fail
    }
}

/// Bidirectional name <-> index table. Names are unique, non-empty and free
/// of tabs and line breaks so they survive every line-oriented format.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NameTable {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl NameTable {
    pub fn new(names: Vec<String>, kind: &str) -> Result<Self> {
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::domain(format!("{kind} #{i} has an empty name")));
            }
            if name.contains(['\t', '\n', '\r']) {
                return Err(Error::domain(format!(
                    "{kind} name {name:?} contains a tab or line break"
                )));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::domain(format!("duplicate {kind} name {name:?}")));
            }
        }
        Ok(NameTable { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Element name table; shared by spectra and by rankings loaded from disk.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ElementTable(NameTable);

impl ElementTable {
    pub fn new(names: Vec<String>) -> Result<Self> {
        NameTable::new(names, "element").map(ElementTable)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn name(&self, e: ElementId) -> &str {
        self.0.name(e.0)
    }

    pub fn id(&self, name: &str) -> Option<ElementId> {
        self.0.lookup(name).map(ElementId)
    }

    pub fn names(&self) -> &[String] {
        self.0.names()
    }

    pub fn ids(&self) -> impl Iterator<Item = ElementId> {
        (0..self.len()).map(ElementId)
    }
}

/// The four execution counts of one element over one view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MetricCounts {
    pub ef: usize,
    pub ep: usize,
    pub nf: usize,
    pub np: usize,
}

impl MetricCounts {
    pub fn new(ef: usize, ep: usize, nf: usize, np: usize) -> Self {
        MetricCounts { ef, ep, nf, np }
    }

    pub fn total_failing(&self) -> usize {
        self.ef + self.nf
    }

    pub fn total_passing(&self) -> usize {
        self.ep + self.np
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Spectrum {
    elements: ElementTable,
    tests: NameTable,
    outcomes: Vec<Outcome>,
    /// One bitset per element over test indices.
    columns: Vec<FixedBitSet>,
    failing: FixedBitSet,
}

impl Spectrum {
    /// Builds a spectrum from a row-major matrix: `coverage[t][e]` is true iff
    /// test `t` executes element `e`.
    pub fn new(
        element_names: Vec<String>,
        tests: Vec<(String, Outcome)>,
        coverage: &[Vec<bool>],
    ) -> Result<Self> {
        let m = element_names.len();
        if coverage.len() != tests.len() {
            return Err(Error::domain(format!(
                "coverage has {} rows but there are {} tests",
                coverage.len(),
                tests.len()
            )));
        }
        let n = tests.len();
        let mut columns = vec![FixedBitSet::with_capacity(n); m];
        for (t, row) in coverage.iter().enumerate() {
            if row.len() != m {
                return Err(Error::domain(format!(
                    "coverage row {t} has {} entries, expected {m}",
                    row.len()
                )));
            }
            for (e, &hit) in row.iter().enumerate() {
                if hit {
                    columns[e].insert(t);
                }
            }
        }
        Self::from_columns(element_names, tests, columns)
    }

    /// Builds a spectrum from per-element columns over test indices.
    pub fn from_columns(
        element_names: Vec<String>,
        tests: Vec<(String, Outcome)>,
        mut columns: Vec<FixedBitSet>,
    ) -> Result<Self> {
        let elements = ElementTable::new(element_names)?;
        if columns.len() != elements.len() {
            return Err(Error::domain(format!(
                "{} columns for {} elements",
                columns.len(),
                elements.len()
            )));
        }
        let n = tests.len();
        let (test_names, outcomes): (Vec<String>, Vec<Outcome>) = tests.into_iter().unzip();
        let tests = NameTable::new(test_names, "test")?;
        for (e, col) in columns.iter_mut().enumerate() {
            if col.ones().any(|t| t >= n) {
                return Err(Error::domain(format!(
                    "column of element {} references a test index >= {n}",
                    elements.name(ElementId(e))
                )));
            }
            col.grow(n);
        }
        let mut failing = FixedBitSet::with_capacity(n);
        for (t, o) in outcomes.iter().enumerate() {
            if o.is_fail() {
                failing.insert(t);
            }
        }
        Ok(Spectrum {
            elements,
            tests,
            outcomes,
            columns,
            failing,
        })
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_tests(&self) -> usize {
        self.tests.len()
    }

    pub fn num_failing(&self) -> usize {
        self.failing.count_ones(..)
    }

    pub fn elements(&self) -> &ElementTable {
        &self.elements
    }

    pub fn element_ids(&self) -> impl Iterator<Item = ElementId> {
        (0..self.num_elements()).map(ElementId)
    }

    pub fn test_ids(&self) -> impl Iterator<Item = TestId> {
        (0..self.num_tests()).map(TestId)
    }

    pub fn element_name(&self, e: ElementId) -> &str {
        self.elements.name(e)
    }

    pub fn element_id(&self, name: &str) -> Option<ElementId> {
        self.elements.id(name)
    }

    pub fn test_name(&self, t: TestId) -> &str {
        self.tests.name(t.0)
    }

    pub fn test_id(&self, name: &str) -> Option<TestId> {
        self.tests.lookup(name).map(TestId)
    }

    pub fn test_names(&self) -> &[String] {
        self.tests.names()
    }

    pub fn outcome(&self, t: TestId) -> Outcome {
        self.outcomes[t.0]
    }

    pub fn covers(&self, t: TestId, e: ElementId) -> bool {
        self.columns[e.0].contains(t.0)
    }

    /// The coverage column of `e` as a bitset over test indices.
    pub fn column(&self, e: ElementId) -> &FixedBitSet {
        &self.columns[e.0]
    }

    pub fn failing_mask(&self) -> &FixedBitSet {
        &self.failing
    }

    pub fn full_view(&self) -> SpectrumView<'_> {
        SpectrumView::new(self)
    }

    pub(crate) fn check_element(&self, e: ElementId) -> Result<()> {
        if e.0 < self.num_elements() {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "element #{} not in spectrum of {} elements",
                e.0,
                self.num_elements()
            )))
        }
    }

    pub(crate) fn check_test(&self, t: TestId) -> Result<()> {
        if t.0 < self.num_tests() {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "test #{} not in spectrum of {} tests",
                t.0,
                self.num_tests()
            )))
        }
    }

    /// Partition of all elements into groups with bit-identical coverage
    /// columns over the full test suite.
    pub fn ambiguity_groups(&self) -> AmbiguityGroups {
        let mut by_column: HashMap<&FixedBitSet, usize> = HashMap::new();
        let mut groups: Vec<Vec<ElementId>> = Vec::new();
        let mut group_of = Vec::with_capacity(self.num_elements());
        for (e, col) in self.columns.iter().enumerate() {
            let g = *by_column.entry(col).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(ElementId(e));
            group_of.push(g);
        }
        AmbiguityGroups { groups, group_of }
    }

    /// True iff every test executing any element of `set` also executes `d`.
    pub fn is_dominator(&self, d: ElementId, set: &[ElementId]) -> Result<bool> {
        self.check_element(d)?;
        for &e in set {
            self.check_element(e)?;
            if e == d {
                return Err(Error::domain(format!(
                    "dominator candidate {} is a member of the dominated set",
                    self.element_name(d)
                )));
            }
        }
        let dom = &self.columns[d.0];
        Ok(set.iter().all(|e| self.columns[e.0].is_subset(dom)))
    }

    /// Labels of oracle faults that no failing test executes.
    pub fn unexposed_faults<'o>(&self, oracle: &'o FaultOracle) -> Vec<&'o str> {
        oracle
            .faults()
            .filter(|(_, elems)| {
                !elems
                    .iter()
                    .any(|e| e.0 < self.num_elements() && !self.columns[e.0].is_disjoint(&self.failing))
            })
            .map(|(label, _)| label)
            .collect()
    }

    /// Checks that the test suite is strong for `oracle`, i.e. every fault is
    /// executed by at least one failing test.
    pub fn validate_strong(&self, oracle: &FaultOracle) -> Result<()> {
        self.check_oracle(oracle)?;
        let unexposed = self.unexposed_faults(oracle);
        if unexposed.is_empty() {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "test suite is not strong: unexposed faults {}",
                unexposed.join(", ")
            )))
        }
    }

    /// Checks that every element referenced by `oracle` exists here.
    pub fn check_oracle(&self, oracle: &FaultOracle) -> Result<()> {
        for (label, elems) in oracle.faults() {
            for &e in elems {
                if e.0 >= self.num_elements() {
                    return Err(Error::domain(format!(
                        "fault {label} references element #{} outside the spectrum",
                        e.0
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Equivalence classes of elements with identical coverage columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmbiguityGroups {
    groups: Vec<Vec<ElementId>>,
    group_of: Vec<usize>,
}

impl AmbiguityGroups {
    /// Groups ordered by their lowest element index; members ascending.
    pub fn groups(&self) -> &[Vec<ElementId>] {
        &self.groups
    }

    pub fn group_index(&self, e: ElementId) -> usize {
        self.group_of[e.0]
    }

    pub fn group_of(&self, e: ElementId) -> &[ElementId] {
        &self.groups[self.group_of[e.0]]
    }

    pub fn same_group(&self, a: ElementId, b: ElementId) -> bool {
        self.group_of[a.0] == self.group_of[b.0]
    }
}

/// A test-subset (and element-subset) mask over a borrowed [`Spectrum`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpectrumView<'a> {
    spectrum: &'a Spectrum,
    tests: FixedBitSet,
    elements: FixedBitSet,
}

impl<'a> SpectrumView<'a> {
    /// The view with every test and every element active.
    pub fn new(spectrum: &'a Spectrum) -> Self {
        let mut tests = FixedBitSet::with_capacity(spectrum.num_tests());
        tests.insert_range(..);
        let mut elements = FixedBitSet::with_capacity(spectrum.num_elements());
        elements.insert_range(..);
        SpectrumView {
            spectrum,
            tests,
            elements,
        }
    }

    /// A view with exactly the given tests active (all elements active).
    pub fn with_tests(
        spectrum: &'a Spectrum,
        tests: impl IntoIterator<Item = TestId>,
    ) -> Result<Self> {
        let mut view = SpectrumView::new(spectrum);
        view.tests.clear();
        for t in tests {
            spectrum.check_test(t)?;
            view.tests.insert(t.0);
        }
        Ok(view)
    }

    pub fn spectrum(&self) -> &'a Spectrum {
        self.spectrum
    }

    pub fn active_test_mask(&self) -> &FixedBitSet {
        &self.tests
    }

    pub fn is_test_active(&self, t: TestId) -> bool {
        self.tests.contains(t.0)
    }

    pub fn is_element_active(&self, e: ElementId) -> bool {
        self.elements.contains(e.0)
    }

    pub fn active_elements(&self) -> impl Iterator<Item = ElementId> + '_ {
        self.elements.ones().map(ElementId)
    }

    pub fn num_active_elements(&self) -> usize {
        self.elements.count_ones(..)
    }

    /// Active failing tests as a bitset over test indices.
    pub fn failing_mask(&self) -> FixedBitSet {
        let mut f = self.tests.clone();
        f.intersect_with(&self.spectrum.failing);
        f
    }

    pub fn failing_tests(&self) -> BTreeSet<TestId> {
        self.failing_mask().ones().map(TestId).collect()
    }

    pub fn num_failing(&self) -> usize {
        self.tests.intersection_count(&self.spectrum.failing)
    }

    pub fn num_passing(&self) -> usize {
        self.tests.count_ones(..) - self.num_failing()
    }

    pub fn has_failing(&self) -> bool {
        !self.tests.is_disjoint(&self.spectrum.failing)
    }

    /// Execution counts of `e` restricted to the active tests.
    pub fn counts(&self, e: ElementId) -> Result<MetricCounts> {
        self.spectrum.check_element(e)?;
        Ok(self.counts_unchecked(e))
    }

    pub(crate) fn counts_unchecked(&self, e: ElementId) -> MetricCounts {
        let col = &self.spectrum.columns[e.0];
        let failing = &self.spectrum.failing;
        let total_f = self.num_failing();
        let total_p = self.tests.count_ones(..) - total_f;
        let mut active_hit = col.clone();
        active_hit.intersect_with(&self.tests);
        let ef = active_hit.intersection_count(failing);
        let ep = active_hit.count_ones(..) - ef;
        MetricCounts {
            ef,
            ep,
            nf: total_f - ef,
            np: total_p - ep,
        }
    }

    /// Union of the active failing tests of every element of `set`, as a bitset.
    pub fn failing_mask_of(&self, set: &[ElementId]) -> Result<FixedBitSet> {
        let mut acc = FixedBitSet::with_capacity(self.spectrum.num_tests());
        for &e in set {
            self.spectrum.check_element(e)?;
            acc.union_with(&self.spectrum.columns[e.0]);
        }
        acc.intersect_with(&self.tests);
        acc.intersect_with(&self.spectrum.failing);
        Ok(acc)
    }

    /// `F(E)`: union of the active failing tests of each element of `set`.
    pub fn failing_tests_of(&self, set: &[ElementId]) -> Result<BTreeSet<TestId>> {
        Ok(self.failing_mask_of(set)?.ones().map(TestId).collect())
    }

    /// Deactivates the given failing tests. Every test must be an active
    /// failing test of this view.
    pub fn remove_failing_tests(&self, tests: &BTreeSet<TestId>) -> Result<SpectrumView<'a>> {
        let mut mask = FixedBitSet::with_capacity(self.spectrum.num_tests());
        for &t in tests {
            self.spectrum.check_test(t)?;
            if !self.spectrum.outcome(t).is_fail() {
                return Err(Error::domain(format!(
                    "cannot remove passing test {}",
                    self.spectrum.test_name(t)
                )));
            }
            if !self.is_test_active(t) {
                return Err(Error::domain(format!(
                    "test {} is not active in this view",
                    self.spectrum.test_name(t)
                )));
            }
            mask.insert(t.0);
        }
        Ok(self.without_tests_mask(&mask))
    }

    pub(crate) fn without_tests_mask(&self, mask: &FixedBitSet) -> SpectrumView<'a> {
        let mut next = self.clone();
        next.tests.difference_with(mask);
        next
    }

    /// Deactivates elements; counts of the remaining elements are unchanged.
    pub fn without_elements(&self, set: &[ElementId]) -> Result<SpectrumView<'a>> {
        let mut next = self.clone();
        for &e in set {
            self.spectrum.check_element(e)?;
            next.elements.set(e.0, false);
        }
        Ok(next)
    }

    /// Active failing tests that no active element executes. Such failures
    /// cannot be explained by any element of the view.
    pub fn uncovered_failures(&self) -> BTreeSet<TestId> {
        let mut covered = FixedBitSet::with_capacity(self.spectrum.num_tests());
        for e in self.elements.ones() {
            covered.union_with(&self.spectrum.columns[e]);
        }
        let mut f = self.failing_mask();
        f.difference_with(&covered);
        f.ones().map(TestId).collect()
    }

    /// This view minus its uncovered failing tests.
    pub fn drop_uncovered_failures(&self) -> SpectrumView<'a> {
        let mut mask = FixedBitSet::with_capacity(self.spectrum.num_tests());
        for t in self.uncovered_failures() {
            mask.insert(t.0);
        }
        self.without_tests_mask(&mask)
    }

    /// True iff `F(set)` equals all active failing tests.
    pub fn is_span(&self, set: &[ElementId]) -> Result<bool> {
        Ok(self.failing_mask_of(set)? == self.failing_mask())
    }

    /// True iff `set` is a span and no member can be dropped without losing
    /// the span property.
    ///
    /// Members of one ambiguity group (identical columns over the full suite)
    /// are indistinguishable, so they are dropped together: a basis may hold a
    /// whole group where a single representative would also span.
    pub fn is_basis(&self, set: &[ElementId]) -> Result<bool> {
        if !self.is_span(set)? {
            return Ok(false);
        }
        for &e in set {
            let col = &self.spectrum.columns[e.0];
            let rest: Vec<ElementId> = set
                .iter()
                .copied()
                .filter(|x| &self.spectrum.columns[x.0] != col)
                .collect();
            if self.is_span(&rest)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Ground-truth fault labels. One element may carry several labels and one
/// label may span several elements; `N_f` is the number of distinct labels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultOracle {
    faults: BTreeMap<String, BTreeSet<ElementId>>,
}

impl FaultOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, ElementId)>) -> Self {
        let mut oracle = FaultOracle::new();
        for (label, e) in pairs {
            oracle.insert(label, e);
        }
        oracle
    }

    pub fn insert(&mut self, label: impl Into<String>, e: ElementId) {
        self.faults.entry(label.into()).or_default().insert(e);
    }

    pub fn num_faults(&self) -> usize {
        self.faults.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faults.is_empty()
    }

    /// Faults in label order.
    pub fn faults(&self) -> impl Iterator<Item = (&str, &BTreeSet<ElementId>)> {
        self.faults.iter().map(|(l, e)| (l.as_str(), e))
    }

    pub fn fault_elements(&self, label: &str) -> Option<&BTreeSet<ElementId>> {
        self.faults.get(label)
    }

    pub fn is_faulty(&self, e: ElementId) -> bool {
        self.faults.values().any(|s| s.contains(&e))
    }

    pub fn faulty_elements(&self) -> BTreeSet<ElementId> {
        self.faults.values().flatten().copied().collect()
    }

    /// Fault indices (label order) carried by each faulty element.
    pub fn fault_indices_by_element(&self) -> BTreeMap<ElementId, Vec<usize>> {
        let mut map: BTreeMap<ElementId, Vec<usize>> = BTreeMap::new();
        for (i, elems) in self.faults.values().enumerate() {
            for &e in elems {
                map.entry(e).or_default().push(i);
            }
        }
        map
    }

    /// Keeps only elements accepted by `keep`; faults left without elements
    /// are dropped. Returns the labels that were dropped.
    pub fn retain_elements(&mut self, mut keep: impl FnMut(ElementId) -> bool) -> Vec<String> {
        let mut dropped = Vec::new();
        self.faults.retain(|label, elems| {
            elems.retain(|&e| keep(e));
            if elems.is_empty() {
                dropped.push(label.clone());
                false
            } else {
                true
            }
        });
        dropped
    }
}
