//! Acceptance checks. Runs as a plain binary so every criterion prints one
//! PASS/FAIL line; exits non-zero if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbfl_core::eval::{
    evaluate, generate_random_spectrum, precision_at, recall_at, wasted_effort, wilcoxon_signed_rank,
    EvalOptions, GeneratorConfig,
};
use sbfl_core::{flitsr_run, flitsr_star, rank, MetricId};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn worked_scores() -> Outcome {
    let start = Instant::now();
    let (s, _) = load_example("running_example");
    let view = s.full_view();
    let mut worst: f64 = 0.0;
    for (metric, printed) in [
        (MetricId::Tarantula, TARANTULA),
        (MetricId::Ochiai, OCHIAI),
        (MetricId::dstar(), DSTAR),
    ] {
        let r = rank(&view, metric);
        for (name, want) in ELEMENTS.iter().zip(printed) {
            let got = r.score_of(s.element_id(name).unwrap()).unwrap().value();
            worst = worst.max((got - want).abs());
            check((got - want).abs() <= PRINTED_TOL, || format!("{metric} {name}: {got:.4} vs {want}"))?;
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("57 scores, max deviation {worst:.4}, {elapsed:?}"))
}

fn worked_trace() -> Outcome {
    let (s, _) = load_example("running_example");
    let run = flitsr_run(&s.full_view(), MetricId::Ochiai).map_err(|e| e.to_string())?;
    check(run.trace.len() == 4, || format!("{} iterations", run.trace.len()))?;
    for (rec, row) in run.trace.iter().zip(TRACE) {
        for (i, want) in row.iter().enumerate() {
            let ok = match rec.scores[i] {
                None => want.is_nan(),
                Some(got) => (got.value() - want).abs() <= PRINTED_TOL,
            };
            check(ok, || format!("iteration {} {}: {:?} vs {want}", rec.iteration, ELEMENTS[i], rec.scores[i]))?;
        }
    }
    let picks: Vec<String> = run.trace.iter().map(|r| names_of(&s, &r.selected).join("+")).collect();
    check(picks == ["l12", "l22+l23", "l6", "l9"], || format!("picks {picks:?}"))?;
    Ok(format!("picks {}", picks.join(" -> ")))
}

fn flitsr_result() -> Outcome {
    let (s, _) = load_example("running_example");
    let run = flitsr_run(&s.full_view(), MetricId::Ochiai).map_err(|e| e.to_string())?;
    let mut got: Vec<(String, usize)> = run
        .basis
        .elements()
        .iter()
        .map(|&e| (s.element_name(e).to_string(), run.basis.rank_of(e).unwrap()))
        .collect();
    got.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
    let want: Vec<(String, usize)> = [("l22", 1), ("l23", 1), ("l6", 2), ("l9", 3)]
        .iter()
        .map(|(n, r)| (n.to_string(), *r))
        .collect();
    check(got == want, || format!("basis {got:?}"))?;
    let sifted: Vec<String> = run.sifted.iter().flat_map(|st| names_of(&s, st)).collect();
    check(sifted == ["l12"], || format!("sifted {sifted:?}"))?;
    Ok("basis l22,l23=#1 l6=#2 l9=#3, sifted l12".into())
}

fn flitsr_star_result() -> Outcome {
    let (s, o) = load_example("extended_example");
    let run = flitsr_star(&s.full_view(), MetricId::Ochiai).map_err(|e| e.to_string())?;
    let round = |i: usize| run.rounds.get(i).map(|r| names_of(&s, &r.basis.elements())).unwrap_or_default();
    check(round(0) == ["l2", "l22", "l23"], || format!("round 1 {:?}", round(0)))?;
    check(round(1) == ["l19", "l6", "l9"], || format!("round 2 {:?}", round(1)))?;
    let mut positions = 0;
    for (name, want) in ELEMENTS.iter().zip(STAR_RANKS) {
        let entry = run.merged_ranking.entry(s.element_id(name).unwrap()).unwrap();
        if want == 0 {
            check(entry.below_all_bases, || format!("{name} should be below all bases"))?;
        } else {
            positions = positions.max(want);
            check(!entry.below_all_bases && entry.dense_rank == want, || {
                format!("{name} at #{} not #{want}", entry.dense_rank)
            })?;
        }
    }
    let awe_l = wasted_effort(&run.merged_ranking, &o, o.num_faults()).map_err(|e| e.to_string())?;
    check((awe_l - 2.0).abs() < 1e-9, || format!("AWE_L {awe_l}"))?;
    Ok(format!("{positions} ranked positions match, AWE_L = {awe_l}"))
}

fn awe_worked_values() -> Outcome {
    let (s, o) = load_example("running_example");
    let mut got = Vec::new();
    for (metric, want) in [(MetricId::Tarantula, 1.5), (MetricId::Ochiai, 6.5), (MetricId::dstar(), 8.0)] {
        let r = rank(&s.full_view(), metric);
        let v = evaluate(&r, &o, &EvalOptions::default()).map_err(|e| e.to_string())?.awe_last();
        check((v - want).abs() < 1e-9, || format!("{metric}: {v} vs {want}"))?;
        got.push(format!("{metric}={v}"));
    }
    Ok(got.join(" "))
}

fn basis_property_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut spectra = 0;
    let mut runs = 0;
    let mut seed = 0u64;
    while spectra < 1000 {
        seed += 1;
        let elements = rng.random_range(4..=12);
        let cfg = GeneratorConfig {
            elements,
            tests: rng.random_range(6..=16),
            faults: rng.random_range(1..=4.min(elements)),
            coverage_density: [0.15, 0.3, 0.5][rng.random_range(0..3)],
            masking_bias: [0.0, 0.4, 0.9][rng.random_range(0..3)],
            dominator_count: rng.random_range(0..=2),
            coincidental_correctness: [0.0, 0.2][rng.random_range(0..2)],
            seed,
        };
        if cfg.faults + cfg.dominator_count > cfg.elements {
            continue;
        }
        let Ok(g) = generate_random_spectrum(&cfg) else { continue };
        let mat = Matrix::of(&g.spectrum);
        for metric in MetricId::all() {
            let run = flitsr_run(&g.spectrum.full_view(), metric).map_err(|e| format!("seed {seed}: {e}"))?;
            let basis: Vec<usize> = run.basis.elements().iter().map(|e| e.0).collect();
            check(mat.is_span(&basis), || format!("seed {seed} {metric}: not a span"))?;
            check(mat.is_basis(&basis), || format!("seed {seed} {metric}: reducible"))?;
            runs += 1;
        }
        spectra += 1;
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!("{spectra} spectra, {runs} runs, 0 failures, {elapsed:.1?}"))
}

fn tie_expectations() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    let mut largest_tie = 0;
    for i in 0..500 {
        let (layout, n_faults) = random_layout(&mut rng, 40_320);
        largest_tie = largest_tie.max(layout.iter().map(|t| t.len()).max().unwrap());
        let (ranking, oracle) = ranking_from_layout(&layout, n_faults);
        let want = enumerate_expectations(&layout, n_faults);
        for k in 1..=n_faults {
            let got = wasted_effort(&ranking, &oracle, k).map_err(|e| e.to_string())?;
            worst = worst.max((got - want.awe[k - 1]).abs());
        }
        for x in 1..=ranking.len() {
            let p = precision_at(&ranking, &oracle, x).map_err(|e| e.to_string())?;
            let r = recall_at(&ranking, &oracle, x).map_err(|e| e.to_string())?;
            worst = worst.max((p - want.precision[x - 1]).abs()).max((r - want.recall[x - 1]).abs());
        }
        check(worst <= 1e-9, || format!("ranking {i}: deviation {worst:e} on {layout:?}"))?;
    }
    Ok(format!("500 rankings, largest tie {largest_tie}, max deviation {worst:.1e}"))
}

fn wilcoxon_exact() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut seen_n = std::collections::BTreeSet::new();
    for i in 0..100 {
        let n = 5 + i % 8;
        let diffs: Vec<f64> = (0..n)
            .map(|_| {
                let mag = rng.random_range(1..=6) as f64 * if rng.random_bool(0.3) { 0.5 } else { 1.0 };
                if rng.random_bool(0.5) { mag } else { -mag }
            })
            .collect();
        let pairs: Vec<(f64, f64)> = diffs.iter().map(|d| (*d, 0.0)).collect();
        let got = wilcoxon_signed_rank(&pairs).map_err(|e| e.to_string())?;
        let (stat, p) = wilcoxon_by_enumeration(&diffs);
        check(got.statistic == stat, || format!("input {i}: W {} vs {stat}", got.statistic))?;
        check((got.p_value - p).abs() <= 1e-12, || format!("input {i}: p {} vs {p}", got.p_value))?;
        seen_n.insert(n);
    }
    Ok(format!("100 inputs, n in {:?}", seen_n))
}

fn multi_fault_direction() -> Outcome {
    let mut pairs = Vec::new();
    for seed in 0..500u64 {
        let cfg = GeneratorConfig {
            elements: 30,
            tests: 40,
            faults: if seed % 2 == 0 { 4 } else { 8 },
            coverage_density: 0.2,
            masking_bias: 0.7,
            seed,
            ..Default::default()
        };
        let g = generate_random_spectrum(&cfg).map_err(|e| format!("seed {seed}: {e}"))?;
        let view = g.spectrum.full_view();
        let opts = EvalOptions::default();
        let base = rank(&view, MetricId::Ochiai);
        let star = flitsr_star(&view, MetricId::Ochiai).map_err(|e| e.to_string())?.merged_ranking;
        let awe_base = evaluate(&base, &g.oracle, &opts).map_err(|e| e.to_string())?.awe_median();
        let awe_star = evaluate(&star, &g.oracle, &opts).map_err(|e| e.to_string())?.awe_median();
        pairs.push((awe_star, awe_base));
    }
    let mean_star = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
    let mean_base = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
    let w = wilcoxon_signed_rank(&pairs).map_err(|e| e.to_string())?;
    let summary = format!(
        "mean AWE_M FLITSR* {mean_star:.3} vs Ochiai {mean_base:.3}, p = {:.2e} over {} spectra",
        w.p_value,
        pairs.len()
    );
    check(mean_star <= mean_base, || summary.clone())?;
    check(w.positive_rank_sum < w.negative_rank_sum, || format!("direction: {summary}"))?;
    check(w.p_value < 0.05, || summary.clone())?;
    Ok(summary)
}

fn run_twice(args: &[String], outputs: &[&Path]) -> Result<(), String> {
    let mut seen: Vec<Vec<u8>> = Vec::new();
    for _ in 0..2 {
        for p in outputs {
            if p.is_dir() {
                let _ = fs::remove_dir_all(p);
            } else {
                let _ = fs::remove_file(p);
            }
        }
        let out = Command::new(env!("CARGO_BIN_EXE_sbfl"))
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
        }
        let mut bytes = out.stdout;
        for p in outputs {
            if p.is_dir() {
                let mut names: Vec<_> = fs::read_dir(p).unwrap().map(|e| e.unwrap().path()).collect();
                names.sort();
                for n in names {
                    bytes.extend(n.file_name().unwrap().as_encoded_bytes());
                    bytes.extend(fs::read(n).unwrap());
                }
            } else {
                bytes.extend(fs::read(p).map_err(|e| format!("{}: {e}", p.display()))?);
            }
        }
        seen.push(bytes);
    }
    check(seen[0] == seen[1], || format!("{args:?} differs between runs"))
}

fn cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fx = fixtures();
    let run = fx.join("running_example");
    let ext = fx.join("extended_example");
    let tcm = fx.join("running_example.tcm");
    let s = |p: &Path| p.to_string_lossy().into_owned();
    let out = tmp.path().join("out");
    let trace = tmp.path().join("trace");
    let corpus = tmp.path().join("corpus");
    for (name, seed) in [("v1", "3"), ("v2", "4")] {
        let status = Command::new(env!("CARGO_BIN_EXE_sbfl"))
            .args(["generate", "-o", &s(&corpus.join(name)), "--faults", "3", "--seed", seed])
            .status()
            .map_err(|e| e.to_string())?;
        check(status.success(), || "generate failed".into())?;
    }
    let batch_out = tmp.path().join("batch");
    let gen_out = tmp.path().join("gen");
    let mut commands: Vec<(Vec<String>, Vec<&Path>)> = Vec::new();
    for mode in ["base", "flitsr", "flitsr-star"] {
        for metric in MetricId::NAMES {
            commands.push((
                vec!["localize".into(), s(&ext), "--metric".into(), metric.into(), "--mode".into(), mode.into()],
                vec![],
            ));
        }
        commands.push((
            vec![
                "localize".into(),
                s(&tcm),
                "--mode".into(),
                mode.into(),
                "--oracle".into(),
                s(&run.join("faults.tsv")),
                "-o".into(),
                s(&out),
            ],
            vec![out.as_path()],
        ));
        commands.push((
            vec!["evaluate".into(), s(&ext), "--mode".into(), mode.into(), "--oracle".into(), s(&ext.join("faults.tsv"))],
            vec![],
        ));
        commands.push((
            vec!["curve".into(), s(&run), "--mode".into(), mode.into(), "--oracle".into(), s(&run.join("faults.tsv"))],
            vec![],
        ));
        commands.push((
            vec!["batch".into(), s(&corpus), "--mode".into(), mode.into(), "-o".into(), s(&batch_out)],
            vec![batch_out.as_path()],
        ));
    }
    for mode in ["flitsr", "flitsr-star"] {
        commands.push((
            vec!["localize".into(), s(&ext), "--mode".into(), mode.into(), "--trace".into(), s(&trace)],
            vec![trace.as_path()],
        ));
    }
    commands.push((
        vec!["generate".into(), "-o".into(), s(&gen_out), "--faults".into(), "4".into(), "--masking-bias".into(), "0.5".into(), "--seed".into(), "9".into()],
        vec![gen_out.as_path()],
    ));
    for (args, outputs) in &commands {
        run_twice(args, outputs)?;
    }
    Ok(format!("{} command lines byte-identical across two runs", commands.len()))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("worked-example metric scores", worked_scores),
        ("FLITSR iteration trace", worked_trace),
        ("FLITSR basis and sift", flitsr_result),
        ("FLITSR* rounds, final ranking and AWE_L", flitsr_star_result),
        ("AWE worked values", awe_worked_values),
        ("basis correctness property suite", basis_property_suite),
        ("tie-expectation closed forms", tie_expectations),
        ("Wilcoxon exact branch", wilcoxon_exact),
        ("multi-fault direction on generated spectra", multi_fault_direction),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("acceptance {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("acceptance {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
