use fixedbitset::FixedBitSet;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::spectrum::{ElementId, FaultOracle, Outcome, Spectrum};

const MAX_ATTEMPTS: usize = 200;

/// Parameters of the synthetic spectrum generator.
///
/// Tests fail when they execute a planted fault, except with probability
/// `coincidental_correctness`. With `masking_bias > 0` every fault gets a
/// non-faulty "masker" element that is executed by each of the fault's failing
/// tests with that probability and rarely by passing tests, so it outranks the
/// fault under most metrics. Each dominator is a non-faulty element whose
/// column is a superset of the columns of a random set of other elements.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub elements: usize,
    pub tests: usize,
    pub faults: usize,
    pub coverage_density: f64,
    pub masking_bias: f64,
    pub dominator_count: usize,
    pub coincidental_correctness: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            elements: 12,
            tests: 16,
            faults: 2,
            coverage_density: 0.3,
            masking_bias: 0.0,
            dominator_count: 0,
            coincidental_correctness: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSpectrum {
    pub spectrum: Spectrum,
    pub oracle: FaultOracle,
    pub faults: Vec<ElementId>,
    /// Each planted dominator with the elements it dominates.
    pub dominators: Vec<(ElementId, Vec<ElementId>)>,
    pub maskers: Vec<ElementId>,
}

impl GeneratorConfig {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Generation(msg));
        if self.faults == 0 || self.faults > self.elements {
            return bad(format!("need 1..={} faults, got {}", self.elements, self.faults));
        }
        if self.faults + self.dominator_count > self.elements {
            return bad("faults plus dominators exceed the element count".into());
        }
        if self.tests == 0 {
            return bad("need at least one test".into());
        }
        if !(self.coverage_density > 0.0 && self.coverage_density < 1.0) {
            return bad(format!("density must lie in (0, 1), got {}", self.coverage_density));
        }
        for (name, p) in [
            ("masking_bias", self.masking_bias),
            ("coincidental_correctness", self.coincidental_correctness),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.coincidental_correctness >= 1.0 {
            return bad("coincidental_correctness of 1 can never expose a fault".into());
        }
        Ok(())
    }
}

/// Generates a strong spectrum and its oracle. Deterministic for a seed.
pub fn generate_random_spectrum(config: &GeneratorConfig) -> Result<GeneratedSpectrum> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..MAX_ATTEMPTS {
        if let Some(g) = attempt(config, &mut rng)? {
            return Ok(g);
        }
    }
    Err(Error::Generation(format!(
        "could not expose every fault within {MAX_ATTEMPTS} attempts"
    )))
}

fn attempt(config: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Result<Option<GeneratedSpectrum>> {
    let m = config.elements;
    let n = config.tests;
    let density = config.coverage_density;

    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    let faults: Vec<usize> = order[..config.faults].to_vec();
    let dominators: Vec<usize> = order[config.faults..config.faults + config.dominator_count].to_vec();
    let pool: Vec<usize> = order[config.faults + config.dominator_count..].to_vec();
    let maskers: Vec<usize> = if config.masking_bias > 0.0 && !pool.is_empty() {
        (0..config.faults).map(|i| pool[i % pool.len()]).collect()
    } else {
        Vec::new()
    };

    let mut columns = vec![FixedBitSet::with_capacity(n); m];
    for (e, col) in columns.iter_mut().enumerate() {
        if maskers.contains(&e) {
            continue;
        }
        for t in 0..n {
            if rng.random_bool(density) {
                col.insert(t);
            }
        }
    }
    for &f in &faults {
        if columns[f].is_clear() {
            columns[f].insert(rng.random_range(0..n));
        }
    }

    let mut failing = FixedBitSet::with_capacity(n);
    for t in 0..n {
        if faults.iter().any(|&f| columns[f].contains(t))
            && !rng.random_bool(config.coincidental_correctness)
        {
            failing.insert(t);
        }
    }

    let masker_rate = density * 0.25;
    for (&f, &s) in faults.iter().zip(&maskers) {
        for t in 0..n {
            let p = if failing.contains(t) {
                if columns[f].contains(t) {
                    config.masking_bias
                } else {
                    0.0
                }
            } else {
                masker_rate
            };
            if p > 0.0 && rng.random_bool(p) {
                columns[s].insert(t);
            }
        }
    }

    let mut planted = Vec::new();
    for &d in &dominators {
        let candidates: Vec<usize> = (0..m).filter(|e| !dominators.contains(e)).collect();
        let size = rng.random_range(1..=(candidates.len() / 3).max(1));
        let dominated: Vec<usize> = candidates.choose_multiple(rng, size).copied().collect();
        for t in 0..n {
            if rng.random_bool(density) {
                columns[d].insert(t);
            }
        }
        for &e in &dominated {
            let col = columns[e].clone();
            columns[d].union_with(&col);
        }
        let mut dominated: Vec<ElementId> = dominated.into_iter().map(ElementId).collect();
        dominated.sort();
        planted.push((ElementId(d), dominated));
    }

    if faults.iter().any(|&f| columns[f].is_disjoint(&failing)) {
        return Ok(None);
    }

    let element_names = (0..m).map(|i| format!("e{i}")).collect();
    let tests = (0..n)
        .map(|t| {
            let o = if failing.contains(t) { Outcome::Fail } else { Outcome::Pass };
            (format!("t{t}"), o)
        })
        .collect();
    let spectrum = Spectrum::from_columns(element_names, tests, columns)?;
    let oracle = FaultOracle::from_pairs(
        faults
            .iter()
            .enumerate()
            .map(|(i, &f)| (format!("F{}", i + 1), ElementId(f))),
    );
    spectrum.validate_strong(&oracle)?;
    let mut fault_ids: Vec<ElementId> = faults.into_iter().map(ElementId).collect();
    fault_ids.sort();
    Ok(Some(GeneratedSpectrum {
        spectrum,
        oracle,
        faults: fault_ids,
        dominators: planted,
        maskers: maskers.into_iter().map(ElementId).collect(),
    }))
}
