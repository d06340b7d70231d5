//! Line-oriented readers and writers for spectra, fault oracles and rankings.
//!
//! All formats are UTF-8 with LF line endings.

use std::fs;
use std::path::Path;

use fixedbitset::FixedBitSet;

use crate::error::{Error, Result};
use crate::metrics::{Ranking, Score, TieGroup};
use crate::spectrum::{ElementId, ElementTable, FaultOracle, Outcome, Spectrum};

pub const MATRIX_FILE: &str = "matrix.txt";
pub const SPECTRA_FILE: &str = "spectra.txt";
pub const TESTS_FILE: &str = "tests.csv";
pub const RANKING_HEADER: &str = "dense_rank\tordinal_rank\tscore\telement_name\tis_faulty\tbelow_all_bases";

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Lines of a file, numbered from 1, without the trailing empty line a final
/// LF produces.
fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let mut lines: Vec<&str> = if body.is_empty() && text.len() <= 1 {
        Vec::new()
    } else {
        body.split('\n').collect()
    };
    for l in &mut lines {
        *l = l.strip_suffix('\r').unwrap_or(l);
    }
    lines.into_iter().enumerate().map(|(i, l)| (i + 1, l))
}

/// Reads a coverage directory holding `matrix.txt`, `spectra.txt` and
/// `tests.csv`.
pub fn load_coverage_dir(dir: &Path) -> Result<Spectrum> {
    let spectra_path = dir.join(SPECTRA_FILE);
    let tests_path = dir.join(TESTS_FILE);
    let matrix_path = dir.join(MATRIX_FILE);

    let mut elements = Vec::new();
    for (line, text) in numbered_lines(&read(&spectra_path)?) {
        if text.is_empty() {
            return Err(Error::parse(&spectra_path, line, "empty element name"));
        }
        elements.push(text.to_string());
    }

    let tests = read_tests_csv(&tests_path)?;
    let m = elements.len();
    let mut columns = vec![FixedBitSet::with_capacity(tests.len()); m];
    let mut rows = 0;
    for (line, text) in numbered_lines(&read(&matrix_path)?) {
        let t = line - 1;
        let Some((name, outcome)) = tests.get(t) else {
            return Err(Error::parse(
                &matrix_path,
                line,
                format!("more matrix rows than the {} tests in {TESTS_FILE}", tests.len()),
            ));
        };
        let bytes = text.as_bytes();
        if bytes.len() != m + 1 {
            return Err(Error::parse(
                &matrix_path,
                line,
                format!("expected {} coverage digits and a terminator, found {} characters", m, bytes.len()),
            ));
        }
        for (e, &b) in bytes[..m].iter().enumerate() {
            match b {
                b'1' => columns[e].insert(t),
                b'0' => {}
                other => {
                    return Err(Error::parse(
                        &matrix_path,
                        line,
                        format!("unexpected character {:?} in column {}", other as char, e + 1),
                    ))
                }
            }
        }
        let row_outcome = match bytes[m] {
            b'+' => Outcome::Pass,
            b'-' => Outcome::Fail,
            other => {
                return Err(Error::parse(
                    &matrix_path,
                    line,
                    format!("terminator must be '+' or '-', found {:?}", other as char),
                ))
            }
        };
        if row_outcome != *outcome {
            return Err(Error::parse(
                &matrix_path,
                line,
                format!(
                    "terminator says {} but {TESTS_FILE} says {} for test {name}",
                    row_outcome.as_str(),
                    outcome.as_str()
                ),
            ));
        }
        rows += 1;
    }
    if rows != tests.len() {
        return Err(Error::parse(
            &matrix_path,
            rows + 1,
            format!("{rows} matrix rows for {} tests", tests.len()),
        ));
    }
    Spectrum::from_columns(elements, tests, columns).map_err(|e| match e {
        Error::Domain(msg) => Error::parse(dir, 0, msg),
        other => other,
    })
}

fn read_tests_csv(path: &Path) -> Result<Vec<(String, Outcome)>> {
    let text = read(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?;
    if headers.len() != 2 || &headers[0] != "name" || &headers[1] != "outcome" {
        return Err(Error::parse(path, 1, "header must be `name,outcome`"));
    }
    let mut tests = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 2 {
            return Err(Error::parse(path, line, "expected `name,outcome`"));
        }
        let outcome = Outcome::parse(&record[1]).ok_or_else(|| {
            Error::parse(path, line, format!("outcome must be PASS or FAIL, found {:?}", &record[1]))
        })?;
        tests.push((record[0].to_string(), outcome));
    }
    Ok(tests)
}

/// Writes `spectrum` as a coverage directory, creating `dir` if needed.
pub fn write_coverage_dir(spectrum: &Spectrum, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut spectra = String::new();
    for name in spectrum.elements().names() {
        spectra.push_str(name);
        spectra.push('\n');
    }
    write(&dir.join(SPECTRA_FILE), &spectra)?;

    let tests_path = dir.join(TESTS_FILE);
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::io(&tests_path, std::io::Error::other(e));
    writer.write_record(["name", "outcome"]).map_err(csv_err)?;
    for t in spectrum.test_ids() {
        writer
            .write_record([spectrum.test_name(t), spectrum.outcome(t).as_str()])
            .map_err(csv_err)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::io(&tests_path, std::io::Error::other(e.to_string())))?;
    fs::write(&tests_path, bytes).map_err(|e| Error::io(&tests_path, e))?;

    let mut matrix = String::with_capacity(spectrum.num_tests() * (spectrum.num_elements() + 2));
    for t in spectrum.test_ids() {
        for e in spectrum.element_ids() {
            matrix.push(if spectrum.covers(t, e) { '1' } else { '0' });
        }
        matrix.push(if spectrum.outcome(t).is_fail() { '-' } else { '+' });
        matrix.push('\n');
    }
    write(&dir.join(MATRIX_FILE), &matrix)
}

/// Reads a single-file test coverage matrix with `#tests`, `#uuts` and
/// `#matrix` sections.
pub fn load_tcm(path: &Path) -> Result<Spectrum> {
    let text = read(path)?;
    let mut lines = numbered_lines(&text).peekable();
    let err = |line: usize, msg: String| Error::parse(path, line, msg);

    let expect_header = |lines: &mut std::iter::Peekable<_>, header: &str| -> Result<()> {
        loop {
            match Iterator::next(lines) {
                Some((_, "")) => continue,
                Some((_, h)) if h == header => return Ok(()),
                Some((line, other)) => {
                    return Err(Error::parse(path, line, format!("expected {header}, found {other:?}")))
                }
                None => return Err(Error::parse(path, 0, format!("missing {header} section"))),
            }
        }
    };

    expect_header(&mut lines, "#tests")?;
    let mut tests = Vec::new();
    while let Some(&(line, l)) = lines.peek() {
        if l.is_empty() || l == "#uuts" {
            break;
        }
        lines.next();
        let (name, outcome) = l
            .rsplit_once(' ')
            .ok_or_else(|| err(line, "expected `<name> PASS|FAIL`".into()))?;
        let outcome = Outcome::parse(outcome)
            .ok_or_else(|| err(line, format!("outcome must be PASS or FAIL, found {outcome:?}")))?;
        tests.push((name.to_string(), outcome));
    }

    expect_header(&mut lines, "#uuts")?;
    let mut elements = Vec::new();
    while let Some(&(_, l)) = lines.peek() {
        if l.is_empty() || l == "#matrix" {
            break;
        }
        lines.next();
        elements.push(l.to_string());
    }

    expect_header(&mut lines, "#matrix")?;
    let m = elements.len();
    let mut columns = vec![FixedBitSet::with_capacity(tests.len()); m];
    for t in 0..tests.len() {
        let Some((line, row)) = lines.next() else {
            return Err(err(0, format!("#matrix has {t} rows for {} tests", tests.len())));
        };
        for token in row.split_whitespace() {
            let (idx, hits) = match token.split_once(':') {
                Some((i, h)) => (i, h.parse::<u64>().map_err(|_| err(line, format!("bad hit count in {token:?}")))?),
                None => (token, 1),
            };
            let e: usize = idx
                .parse()
                .map_err(|_| err(line, format!("bad element index {token:?}")))?;
            if e >= m {
                return Err(err(line, format!("element index {e} out of range 0..{m}")));
            }
            if hits > 0 {
                columns[e].insert(t);
            }
        }
    }
    for (line, rest) in lines {
        if !rest.trim().is_empty() {
            return Err(err(line, "unexpected content after the last matrix row".into()));
        }
    }
    Spectrum::from_columns(elements, tests, columns).map_err(|e| match e {
        Error::Domain(msg) => Error::parse(path, 0, msg),
        other => other,
    })
}

pub fn write_tcm(spectrum: &Spectrum, path: &Path) -> Result<()> {
    if spectrum.element_id("#matrix").is_some() {
        return Err(Error::domain("an element named #matrix cannot be written as TCM"));
    }
    let mut out = String::from("#tests\n");
    for t in spectrum.test_ids() {
        out.push_str(spectrum.test_name(t));
        out.push(' ');
        out.push_str(spectrum.outcome(t).as_str());
        out.push('\n');
    }
    out.push_str("\n#uuts\n");
    for name in spectrum.elements().names() {
        out.push_str(name);
        out.push('\n');
    }
    out.push_str("\n#matrix\n");
    for t in spectrum.test_ids() {
        let row: Vec<String> = spectrum
            .element_ids()
            .filter(|&e| spectrum.covers(t, e))
            .map(|e| e.0.to_string())
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    write(path, &out)
}

/// Result of loading a fault oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedOracle {
    pub oracle: FaultOracle,
    /// `(line, element name)` of entries that did not resolve and were skipped.
    pub unresolved: Vec<(usize, String)>,
}

/// Reads `label<TAB>element_name` lines. Unknown element names are skipped
/// and reported, or rejected when `strict`.
pub fn load_fault_oracle(path: &Path, elements: &ElementTable, strict: bool) -> Result<LoadedOracle> {
    let text = read(path)?;
    let mut oracle = FaultOracle::new();
    let mut unresolved = Vec::new();
    for (line, l) in numbered_lines(&text) {
        if l.trim().is_empty() {
            continue;
        }
        let (label, name) = l
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, line, "expected `label<TAB>element_name`"))?;
        if label.is_empty() {
            return Err(Error::parse(path, line, "empty fault label"));
        }
        match elements.id(name) {
            Some(e) => oracle.insert(label, e),
            None if strict => {
                return Err(Error::parse(path, line, format!("unknown element {name:?}")))
            }
            None => unresolved.push((line, name.to_string())),
        }
    }
    Ok(LoadedOracle { oracle, unresolved })
}

pub fn write_fault_oracle(oracle: &FaultOracle, elements: &ElementTable, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (label, elems) in oracle.faults() {
        for &e in elems {
            out.push_str(label);
            out.push('\t');
            out.push_str(elements.name(e));
            out.push('\n');
        }
    }
    write(path, &out)
}

/// Renders a ranking as TSV. `is_faulty` is left blank without an oracle.
pub fn render_ranking(ranking: &Ranking, elements: &ElementTable, oracle: Option<&FaultOracle>) -> String {
    let faulty = oracle.map(|o| o.faulty_elements());
    let mut out = String::from(RANKING_HEADER);
    out.push('\n');
    for entry in ranking.entries() {
        let flag = match &faulty {
            Some(set) if set.contains(&entry.element) => "1",
            Some(_) => "0",
            None => "",
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            entry.dense_rank,
            entry.ordinal_rank,
            entry.score,
            elements.name(entry.element),
            flag,
            if entry.below_all_bases { "1" } else { "0" }
        ));
    }
    out
}

pub fn write_ranking(
    ranking: &Ranking,
    elements: &ElementTable,
    oracle: Option<&FaultOracle>,
    path: &Path,
) -> Result<()> {
    write(path, &render_ranking(ranking, elements, oracle))
}

/// A ranking read back from disk with its own element table (row order).
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedRanking {
    pub elements: ElementTable,
    pub ranking: Ranking,
}

pub fn load_ranking(path: &Path) -> Result<LoadedRanking> {
    let text = read(path)?;
    let mut lines = numbered_lines(&text);
    match lines.next() {
        Some((_, h)) if h == RANKING_HEADER => {}
        _ => return Err(Error::parse(path, 1, "missing ranking header")),
    }
    let mut names = Vec::new();
    let mut groups: Vec<TieGroup> = Vec::new();
    let mut last_dense = 0;
    for (line, l) in lines {
        let cols: Vec<&str> = l.split('\t').collect();
        if cols.len() != 6 {
            return Err(Error::parse(path, line, format!("expected 6 columns, found {}", cols.len())));
        }
        let num = |s: &str, what: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::parse(path, line, format!("bad {what} {s:?}")))
        };
        let dense = num(cols[0], "dense_rank")?;
        let ordinal = num(cols[1], "ordinal_rank")?;
        if ordinal != names.len() + 1 {
            return Err(Error::parse(path, line, format!("ordinal_rank {ordinal} out of sequence")));
        }
        if dense != last_dense && dense != last_dense + 1 {
            return Err(Error::parse(path, line, format!("dense_rank {dense} after {last_dense}")));
        }
        let score = match cols[2] {
            "inf" => Score::MAX,
            s => {
                let v: f64 = s
                    .parse()
                    .map_err(|_| Error::parse(path, line, format!("bad score {s:?}")))?;
                if v.is_nan() {
                    return Err(Error::parse(path, line, "score is NaN"));
                }
                Score::new(v)
            }
        };
        let below = match cols[5] {
            "1" => true,
            "0" => false,
            other => return Err(Error::parse(path, line, format!("bad below_all_bases {other:?}"))),
        };
        let id = ElementId(names.len());
        names.push(cols[3].to_string());
        if dense == last_dense {
            groups.last_mut().expect("group exists").members.push((id, score));
        } else {
            groups.push(TieGroup {
                members: vec![(id, score)],
                below_all_bases: below,
            });
            last_dense = dense;
        }
    }
    let elements = ElementTable::new(names).map_err(|e| Error::parse(path, 0, e.to_string()))?;
    Ok(LoadedRanking {
        elements,
        ranking: Ranking::from_groups(groups),
    })
}
