//! Spectrum-based fault localization with FLITSR basis construction and
//! multi-fault evaluation measures.

pub mod error;
pub mod eval;
pub mod flitsr;
pub mod ingest;
pub mod metrics;
pub mod spectrum;

pub use error::{Error, Result};
pub use eval::{
    evaluate, generate_random_spectrum, wilcoxon_signed_rank, EvalOptions, EvalReport, GeneratedSpectrum,
    GeneratorConfig, WilcoxonResult,
};
pub use flitsr::{flitsr_run, flitsr_star, Basis, BasisStep, FlitsrRun, StarRun};
pub use spectrum::MetricCounts;
pub use metrics::{rank, MetricId, RankEntry, Ranking, Score};
pub use spectrum::{ElementId, ElementTable, FaultOracle, Outcome, Spectrum, SpectrumView, TestId};
