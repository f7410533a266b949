//! Text formats: criteria manifests, long-format surveys and direct-relation
//! matrices in; JSON reports, DOT digraphs and scatter/stability CSVs out.
//!
//! CSV inputs are comma-separated, `.` decimal point, UTF-8. Line numbers in
//! errors are 1-based and count the header.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::DenseMatrix;
use crate::model::{
    validate_expert_response, AnalysisResult, CriteriaSet, Criterion, DirectRelationMatrix, Edge,
    ExpertResponse, Group, ModelError, NormalizationMode, NormalizedMatrix, ProminenceRecord,
    RawResponse, Strength, TotalRelationMatrix,
};
use crate::sensitivity::StabilityReport;

pub const SURVEY_HEADER: [&str; 4] = ["expert_id", "from", "to", "score"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("line {line}: duplicate criterion code {code:?}")]
    DuplicateCode { line: u64, code: String },
    #[error("line {line}: unknown criterion code {code:?}")]
    UnknownCode { line: u64, code: String },
    #[error("expert {expert:?} has no score for {from} -> {to}")]
    MissingCell {
        expert: String,
        from: String,
        to: String,
    },
    #[error("line {line}: expert {expert:?} scores {from} -> {to} more than once")]
    DuplicateCell {
        line: u64,
        expert: String,
        from: String,
        to: String,
    },
    #[error(
        "line {line}: expert {expert:?} score {value} for {from} -> {to} is outside the 0-4 scale"
    )]
    OutOfScale {
        line: u64,
        expert: String,
        from: String,
        to: String,
        value: i64,
    },
    #[error("line {line}: value {value} for {from} -> {to} is outside [0, 4]")]
    OutOfRange {
        line: u64,
        from: String,
        to: String,
        value: f64,
    },
    #[error("line {line}: diagonal entry for {code} must be 0")]
    NonzeroDiagonal { line: u64, code: String },
    #[error("invalid report: {0}")]
    Report(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn parse_err(line: u64, reason: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        reason: reason.into(),
    }
}

/// Reads all records with their 1-based line numbers.
fn read_records(text: &str) -> Result<Vec<(u64, Vec<String>)>, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        out.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(out)
}

/// Round half away from zero to 4 decimals, the convention of the published
/// tables. Never use the result for further arithmetic.
pub fn display4(x: f64) -> String {
    let r = (x * 1e4).round() / 1e4;
    // avoid "-0.0000"
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r:.4}")
}

/// Renders `x` the way a spreadsheet's general format does in a cell
/// `width` characters wide: as many decimals as fit, trailing zeros dropped.
/// Falls back to round-trip notation when even the integer part is too wide.
pub fn format_general(x: f64, width: usize) -> String {
    for decimals in (0..=width).rev() {
        let s = format!("{x:.decimals$}");
        if s.len() <= width {
            let s = if s.contains('.') {
                s.trim_end_matches('0').trim_end_matches('.').to_owned()
            } else {
                s
            };
            return if s == "-0" { "0".to_owned() } else { s };
        }
    }
    x.to_string()
}

/// Parses a `code,name` manifest. A leading `code,name` header line is
/// optional; row order becomes matrix order.
pub fn parse_criteria_manifest(text: &str) -> Result<CriteriaSet, IoError> {
    let mut records = read_records(text)?;
    if let Some((_, first)) = records.first() {
        if first.len() == 2
            && first[0].eq_ignore_ascii_case("code")
            && first[1].eq_ignore_ascii_case("name")
        {
            records.remove(0);
        }
    }
    let mut criteria: Vec<Criterion> = Vec::with_capacity(records.len());
    let mut seen: HashMap<String, u64> = HashMap::new();
    for (line, rec) in records {
        if rec.len() != 2 {
            return Err(parse_err(
                line,
                format!("expected 2 fields (code,name), found {}", rec.len()),
            ));
        }
        if rec[0].is_empty() {
            return Err(parse_err(line, "empty criterion code"));
        }
        if seen.insert(rec[0].clone(), line).is_some() {
            return Err(IoError::DuplicateCode {
                line,
                code: rec[0].clone(),
            });
        }
        criteria.push(Criterion::new(rec[0].clone(), rec[1].clone()));
    }
    if criteria.len() < 2 {
        return Err(parse_err(
            0,
            format!(
                "a manifest needs at least 2 criteria, found {}",
                criteria.len()
            ),
        ));
    }
    Ok(CriteriaSet::new(criteria)?)
}

pub fn write_criteria_manifest(cs: &CriteriaSet) -> String {
    let mut out = String::from("code,name\n");
    for c in cs {
        let _ = writeln!(out, "{},{}", c.code, c.name);
    }
    out
}

/// Parses a long-format survey, `expert_id,from,to,score`, one row per
/// off-diagonal cell per expert. Experts keep their order of first
/// appearance. Stops at the first problem; see [`parse_survey_csv_all`] to
/// collect every one.
pub fn parse_survey_csv(text: &str, cs: &CriteriaSet) -> Result<Vec<ExpertResponse>, IoError> {
    parse_survey_csv_all(text, cs).map_err(|mut errors| errors.swap_remove(0))
}

#[derive(Clone, Copy)]
enum Cell {
    Empty,
    Score(i64),
    // a row for this cell exists but was rejected; not reported again as missing
    Rejected,
}

/// Like [`parse_survey_csv`] but keeps going after bad rows, returning every
/// error found: row errors in line order, then missing cells. The error list
/// is never empty.
pub fn parse_survey_csv_all(
    text: &str,
    cs: &CriteriaSet,
) -> Result<Vec<ExpertResponse>, Vec<IoError>> {
    let records = read_records(text).map_err(|e| vec![e])?;
    let mut rows = records.into_iter();
    match rows.next() {
        Some((_, header)) if header.iter().map(String::as_str).eq(SURVEY_HEADER) => {}
        Some((line, header)) => {
            return Err(vec![parse_err(
                line,
                format!(
                    "expected header expert_id,from,to,score, found {}",
                    header.join(",")
                ),
            )])
        }
        None => return Err(vec![parse_err(0, "empty survey file")]),
    }

    let n = cs.len();
    let mut order: Vec<String> = Vec::new();
    let mut grids: HashMap<String, Vec<Cell>> = HashMap::new();
    let mut errors = Vec::new();
    for (line, rec) in rows {
        let [expert, from, to, score] = match <[String; 4]>::try_from(rec) {
            Ok(fields) => fields,
            Err(r) => {
                errors.push(parse_err(
                    line,
                    format!("expected 4 fields, found {}", r.len()),
                ));
                continue;
            }
        };
        if expert.is_empty() {
            errors.push(parse_err(line, "empty expert_id"));
            continue;
        }
        let grid = grids.entry(expert.clone()).or_insert_with(|| {
            order.push(expert.clone());
            vec![Cell::Empty; n * n]
        });
        let (i, j) = match (cs.index_of(&from), cs.index_of(&to)) {
            (Some(i), Some(j)) => (i, j),
            (None, _) => {
                errors.push(IoError::UnknownCode { line, code: from });
                continue;
            }
            (_, None) => {
                errors.push(IoError::UnknownCode { line, code: to });
                continue;
            }
        };
        if i == j {
            errors.push(parse_err(
                line,
                format!("self-influence row {from} -> {to}; the diagonal is implicitly 0"),
            ));
            continue;
        }
        let cell = &mut grid[i * n + j];
        if !matches!(cell, Cell::Empty) {
            errors.push(IoError::DuplicateCell {
                line,
                expert,
                from,
                to,
            });
            continue;
        }
        let value: i64 = match score.parse() {
            Ok(v) => v,
            Err(_) => {
                *cell = Cell::Rejected;
                errors.push(parse_err(
                    line,
                    format!("score {score:?} is not an integer"),
                ));
                continue;
            }
        };
        if !(0..=4).contains(&value) {
            *cell = Cell::Rejected;
            errors.push(IoError::OutOfScale {
                line,
                expert,
                from,
                to,
                value,
            });
            continue;
        }
        *cell = Cell::Score(value);
    }
    if order.is_empty() && errors.is_empty() {
        return Err(vec![parse_err(1, "survey has a header but no rows")]);
    }

    let mut out = Vec::with_capacity(order.len());
    for expert in order {
        let grid = &grids[&expert];
        let mut scores = vec![vec![0i64; n]; n];
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                match grid[i * n + j] {
                    Cell::Score(v) => scores[i][j] = v,
                    Cell::Rejected => {}
                    Cell::Empty => errors.push(IoError::MissingCell {
                        expert: expert.clone(),
                        from: cs.get(i).code.clone(),
                        to: cs.get(j).code.clone(),
                    }),
                }
            }
        }
        if errors.is_empty() {
            match validate_expert_response(
                &RawResponse {
                    expert_id: expert,
                    scores,
                },
                cs,
            ) {
                Ok(r) => out.push(r),
                Err(e) => errors.push(e.into()),
            }
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(errors)
    }
}

pub fn write_survey_csv(responses: &[ExpertResponse], cs: &CriteriaSet) -> String {
    let mut out = SURVEY_HEADER.join(",");
    out.push('\n');
    for r in responses {
        for (i, from) in cs.iter().enumerate() {
            for (j, to) in cs.iter().enumerate() {
                if i != j {
                    let _ = writeln!(
                        out,
                        "{},{},{},{}",
                        r.expert_id(),
                        from.code,
                        to.code,
                        r.score(i, j).value()
                    );
                }
            }
        }
    }
    out
}

/// Parses an `n x n` matrix with a header row and a leading column of
/// criterion codes, both in manifest order. The top-left cell is free text.
pub fn parse_drm_csv(text: &str, cs: &CriteriaSet) -> Result<DirectRelationMatrix, IoError> {
    let records = read_records(text)?;
    let n = cs.len();
    let mut rows = records.into_iter();
    let (header_line, header) = rows
        .next()
        .ok_or_else(|| parse_err(0, "empty matrix file"))?;
    let expected: Vec<&str> = cs.codes().collect();
    if header.len() != n + 1
        || header[1..]
            .iter()
            .map(String::as_str)
            .ne(expected.iter().copied())
    {
        return Err(parse_err(
            header_line,
            format!(
                "header codes must be {} in manifest order, found {}",
                expected.join(","),
                header.get(1..).unwrap_or_default().join(",")
            ),
        ));
    }
    let mut values = DenseMatrix::zeros(n, n);
    let mut count = 0;
    let mut last_line = header_line;
    for (i, (line, rec)) in rows.enumerate() {
        last_line = line;
        if i >= n {
            return Err(parse_err(line, format!("more than {n} matrix rows")));
        }
        if rec.len() != n + 1 {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", n + 1, rec.len()),
            ));
        }
        let from = cs.get(i);
        if rec[0] != from.code {
            return Err(parse_err(
                line,
                format!(
                    "row code {:?} out of order; expected {:?}",
                    rec[0], from.code
                ),
            ));
        }
        for (j, cell) in rec[1..].iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("{cell:?} is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("{cell:?} is not a finite number")));
            }
            if !(0.0..=4.0).contains(&v) {
                return Err(IoError::OutOfRange {
                    line,
                    from: from.code.clone(),
                    to: cs.get(j).code.clone(),
                    value: v,
                });
            }
            if i == j && v != 0.0 {
                return Err(IoError::NonzeroDiagonal {
                    line,
                    code: from.code.clone(),
                });
            }
            values[(i, j)] = v;
        }
        count += 1;
    }
    if count != n {
        return Err(parse_err(
            last_line,
            format!("expected {n} matrix rows, found {count}"),
        ));
    }
    Ok(DirectRelationMatrix::new(values)?)
}

/// Writes a square matrix with code headers, full precision.
pub fn write_matrix_csv(m: &DenseMatrix, cs: &CriteriaSet) -> String {
    let mut out = String::from("code");
    for c in cs {
        let _ = write!(out, ",{}", c.code);
    }
    out.push('\n');
    for (i, c) in cs.iter().enumerate() {
        out.push_str(&c.code);
        for v in m.row(i) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Scalar {
    value: f64,
    display: String,
}

impl From<f64> for Scalar {
    fn from(value: f64) -> Self {
        Self {
            value,
            display: display4(value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MatrixDoc {
    values: Vec<Vec<f64>>,
    display: Vec<Vec<String>>,
}

impl From<&DenseMatrix> for MatrixDoc {
    fn from(m: &DenseMatrix) -> Self {
        let values = m.to_rows();
        let display = values
            .iter()
            .map(|r| r.iter().map(|&v| display4(v)).collect())
            .collect();
        Self { values, display }
    }
}

impl MatrixDoc {
    fn to_matrix(&self, what: &str) -> Result<DenseMatrix, IoError> {
        DenseMatrix::from_rows(&self.values).map_err(|e| IoError::Report(format!("{what}: {e}")))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct NormalizationDoc {
    mode: NormalizationMode,
    divisor: Scalar,
}

#[derive(Debug, Serialize, Deserialize)]
struct MatricesDoc {
    direct_relation: MatrixDoc,
    normalized: MatrixDoc,
    total_relation: MatrixDoc,
    alpha_cut: MatrixDoc,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordDoc {
    code: String,
    name: String,
    d: Scalar,
    r: Scalar,
    prominence: Scalar,
    relation: Scalar,
    group: Group,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeDoc {
    from: String,
    to: String,
    weight: Scalar,
    strength: Strength,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportDoc {
    criteria: CriteriaSet,
    normalization: NormalizationDoc,
    alpha: Scalar,
    cut_threshold: Scalar,
    matrices: MatricesDoc,
    records: Vec<RecordDoc>,
    edges: Vec<EdgeDoc>,
}

/// Serializes a full analysis. Every number carries its exact value and a
/// 4-decimal `display` string.
pub fn write_report_json(result: &AnalysisResult) -> String {
    let doc = ReportDoc {
        criteria: result.criteria.clone(),
        normalization: NormalizationDoc {
            mode: result.nrm.mode(),
            divisor: result.nrm.divisor().into(),
        },
        alpha: result.alpha.into(),
        cut_threshold: result.cut_threshold.into(),
        matrices: MatricesDoc {
            direct_relation: result.drm.values().into(),
            normalized: result.nrm.values().into(),
            total_relation: result.trm.values().into(),
            alpha_cut: (&result.alpha_cut).into(),
        },
        records: result
            .records
            .iter()
            .map(|r| RecordDoc {
                code: r.criterion.code.clone(),
                name: r.criterion.name.clone(),
                d: r.d.into(),
                r: r.r.into(),
                prominence: r.prominence.into(),
                relation: r.relation.into(),
                group: r.group,
            })
            .collect(),
        edges: result
            .edges
            .iter()
            .map(|e| EdgeDoc {
                from: e.from.code.clone(),
                to: e.to.code.clone(),
                weight: e.weight.into(),
                strength: e.strength,
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
    s.push('\n');
    s
}

/// Reads back a document produced by [`write_report_json`]. Display strings
/// are ignored; structural invariants are re-checked.
pub fn parse_report_json(text: &str) -> Result<AnalysisResult, IoError> {
    let doc: ReportDoc = serde_json::from_str(text)?;
    let cs = doc.criteria;
    let n = cs.len();
    let criterion = |code: &str| {
        cs.index_of(code)
            .map(|i| cs.get(i).clone())
            .ok_or_else(|| IoError::Report(format!("unknown criterion code {code:?}")))
    };

    let drm =
        DirectRelationMatrix::new(doc.matrices.direct_relation.to_matrix("direct_relation")?)?;
    let nrm = NormalizedMatrix::from_matrix(
        doc.matrices.normalized.to_matrix("normalized")?,
        doc.normalization.divisor.value,
        doc.normalization.mode,
    )?;
    let trm =
        TotalRelationMatrix::from_matrix(doc.matrices.total_relation.to_matrix("total_relation")?)?;
    let alpha_cut = doc.matrices.alpha_cut.to_matrix("alpha_cut")?;
    for (what, dim) in [
        ("direct_relation", drm.dim()),
        ("normalized", nrm.dim()),
        ("total_relation", trm.dim()),
        ("alpha_cut", alpha_cut.n_rows()),
    ] {
        if dim != n {
            return Err(IoError::Report(format!(
                "{what} is {dim}x{dim}, expected {n}x{n}"
            )));
        }
    }

    if doc.records.len() != n {
        return Err(IoError::Report(format!(
            "{} records for {n} criteria",
            doc.records.len()
        )));
    }
    let mut records = Vec::with_capacity(n);
    for (i, r) in doc.records.into_iter().enumerate() {
        if r.code != cs.get(i).code {
            return Err(IoError::Report(format!(
                "record {i} is {:?}, expected {:?}",
                r.code,
                cs.get(i).code
            )));
        }
        records.push(ProminenceRecord {
            criterion: cs.get(i).clone(),
            d: r.d.value,
            r: r.r.value,
            prominence: r.prominence.value,
            relation: r.relation.value,
            group: r.group,
        });
    }
    let edges = doc
        .edges
        .into_iter()
        .map(|e| {
            Ok(Edge {
                from: criterion(&e.from)?,
                to: criterion(&e.to)?,
                weight: e.weight.value,
                strength: e.strength,
            })
        })
        .collect::<Result<Vec<_>, IoError>>()?;

    Ok(AnalysisResult {
        criteria: cs.clone(),
        drm,
        nrm,
        trm,
        alpha: doc.alpha.value,
        cut_threshold: doc.cut_threshold.value,
        alpha_cut,
        records,
        edges,
    })
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz digraph: one node per criterion, coloured by group, one edge per
/// surviving influence with its weight as label. Strong edges are solid,
/// moderate dashed, weak dotted.
pub fn write_dot(edges: &[Edge], cs: &CriteriaSet, records: &[ProminenceRecord]) -> String {
    let group_of: HashMap<&str, Group> = records
        .iter()
        .map(|r| (r.criterion.code.as_str(), r.group))
        .collect();
    let mut out = String::from("digraph dematel {\n");
    out.push_str("  rankdir=LR;\n");
    out.push_str("  node [shape=box, style=rounded];\n");
    for c in cs {
        let (group, color) = match group_of.get(c.code.as_str()) {
            Some(Group::Cause) => ("cause", "red"),
            Some(Group::Effect) => ("effect", "blue"),
            None => ("none", "black"),
        };
        let _ = writeln!(
            out,
            "  \"{}\" [label=\"{}: {}\", group=\"{group}\", color={color}, fontcolor={color}];",
            dot_escape(&c.code),
            dot_escape(&c.code),
            dot_escape(&c.name),
        );
    }
    for e in edges {
        let style = match e.strength {
            Strength::Strong => "solid",
            Strength::Moderate => "dashed",
            Strength::Weak => "dotted",
        };
        let _ = writeln!(
            out,
            "  \"{}\" -> \"{}\" [label=\"{}\", style={style}, strength=\"{}\"];",
            dot_escape(&e.from.code),
            dot_escape(&e.to.code),
            display4(e.weight),
            e.strength.as_str(),
        );
    }
    out.push_str("}\n");
    out
}

/// Number rendering for the scatter export.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScatterPrecision {
    /// Spreadsheet general format: prominence in an 8-character cell,
    /// relation in a 9-character cell, as in the published result table.
    #[default]
    Table,
    /// Shortest round-trip representation.
    Full,
}

pub const PROMINENCE_CELL_WIDTH: usize = 8;
pub const RELATION_CELL_WIDTH: usize = 9;

impl std::str::FromStr for ScatterPrecision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(Self::Table),
            "full" => Ok(Self::Full),
            other => Err(format!(
                "unknown scatter precision {other:?} (expected table or full)"
            )),
        }
    }
}

/// `code,prominence,relation,group`, one row per criterion.
pub fn write_scatter_csv(records: &[ProminenceRecord], precision: ScatterPrecision) -> String {
    let mut out = String::from("code,prominence,relation,group\n");
    for r in records {
        let (p, rel) = match precision {
            ScatterPrecision::Table => (
                format_general(r.prominence, PROMINENCE_CELL_WIDTH),
                format_general(r.relation, RELATION_CELL_WIDTH),
            ),
            ScatterPrecision::Full => (r.prominence.to_string(), r.relation.to_string()),
        };
        let _ = writeln!(out, "{},{p},{rel},{}", r.criterion.code, r.group);
    }
    out
}

/// `code,cause_probability`, one row per criterion.
pub fn write_stability_csv(report: &StabilityReport) -> String {
    let mut out = String::from("code,cause_probability\n");
    for (code, p) in report.codes.iter().zip(&report.cause_probability) {
        let _ = writeln!(out, "{code},{p:?}");
    }
    out
}
