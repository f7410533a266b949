//! Domain types shared across the pipeline.
//!
//! Criteria are positional: row and column `i` of every matrix refer to
//! `CriteriaSet::get(i)`. Expert scores stay integral until aggregation.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::DenseMatrix;

/// Highest score on the 0–4 influence scale.
pub const MAX_SCORE: u8 = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("at least 2 criteria are required, got {0}")]
    TooFewCriteria(usize),
    #[error("criterion {index} has an empty code")]
    EmptyCode { index: usize },
    #[error("duplicate criterion code {0:?}")]
    DuplicateCode(String),
    #[error(
        "expected a {expected}x{expected} grid, got {rows} rows with {cols} columns in row {row}"
    )]
    DimensionMismatch {
        expected: usize,
        rows: usize,
        row: usize,
        cols: usize,
    },
    #[error("score {value} at ({row}, {col}) is outside the 0-4 scale")]
    OutOfScale { row: usize, col: usize, value: i64 },
    #[error("value {value} at ({row}, {col}) is outside [0, 4]")]
    OutOfRange { row: usize, col: usize, value: f64 },
    #[error("diagonal entry {index} is nonzero")]
    NonzeroDiagonal { index: usize },
    #[error("normalized matrix: {0}")]
    InvalidNormalized(&'static str),
    #[error("total-relation matrix has a negative or non-finite entry at ({row}, {col})")]
    InvalidTotalRelation { row: usize, col: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Criterion {
    pub code: String,
    pub name: String,
}

impl Criterion {
    pub fn new(code: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            code: code.into(),
            name: name.into(),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.name)
    }
}

/// Ordered, uniquely-coded criteria. The order fixes matrix indexing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct CriteriaSet {
    criteria: Vec<Criterion>,
}

impl CriteriaSet {
    pub fn new(criteria: Vec<Criterion>) -> Result<Self, ModelError> {
        if criteria.len() < 2 {
            return Err(ModelError::TooFewCriteria(criteria.len()));
        }
        let mut seen = HashSet::with_capacity(criteria.len());
        for (index, c) in criteria.iter().enumerate() {
            if c.code.is_empty() {
                return Err(ModelError::EmptyCode { index });
            }
            if !seen.insert(c.code.as_str()) {
                return Err(ModelError::DuplicateCode(c.code.clone()));
            }
        }
        Ok(Self { criteria })
    }

    pub fn len(&self) -> usize {
        self.criteria.len()
    }

    /// Always false; a valid set holds at least two criteria.
    pub fn is_empty(&self) -> bool {
        self.criteria.is_empty()
    }

    pub fn get(&self, index: usize) -> &Criterion {
        &self.criteria[index]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Criterion> {
        self.criteria.iter()
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.criteria.iter().position(|c| c.code == code)
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.criteria.iter().map(|c| c.code.as_str())
    }

    /// `out[i] = self[perm[i]]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            criteria: perm.iter().map(|&p| self.criteria[p].clone()).collect(),
        }
    }
}

impl<'de> Deserialize<'de> for CriteriaSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let criteria = Vec::<Criterion>::deserialize(d)?;
        CriteriaSet::new(criteria).map_err(serde::de::Error::custom)
    }
}

impl<'a> IntoIterator for &'a CriteriaSet {
    type Item = &'a Criterion;
    type IntoIter = std::slice::Iter<'a, Criterion>;

    fn into_iter(self) -> Self::IntoIter {
        self.criteria.iter()
    }
}

/// One point on the 0–4 influence scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct InfluenceScore(u8);

impl InfluenceScore {
    pub const ZERO: Self = Self(0);

    pub fn new(value: i64) -> Option<Self> {
        (0..=i64::from(MAX_SCORE))
            .contains(&value)
            .then_some(Self(value as u8))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Display label. The numeric code is authoritative.
    pub fn label(self) -> &'static str {
        match self.0 {
            0 => "no influence",
            1 => "low influence",
            2 => "moderate influence",
            3 => "high influence",
            _ => "very high influence",
        }
    }
}

/// Unchecked survey grid, as read from input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawResponse {
    pub expert_id: String,
    pub scores: Vec<Vec<i64>>,
}

/// A validated expert matrix: `n x n`, scores on the 0–4 scale, zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpertResponse {
    expert_id: String,
    n: usize,
    scores: Vec<InfluenceScore>,
}

impl ExpertResponse {
    pub fn expert_id(&self) -> &str {
        &self.expert_id
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Influence of criterion `from` on criterion `to`.
    pub fn score(&self, from: usize, to: usize) -> InfluenceScore {
        self.scores[from * self.n + to]
    }

    pub fn to_raw(&self) -> RawResponse {
        RawResponse {
            expert_id: self.expert_id.clone(),
            scores: self
                .scores
                .chunks(self.n)
                .map(|row| row.iter().map(|s| i64::from(s.0)).collect())
                .collect(),
        }
    }

    /// Builds a response from already in-range cells; the diagonal is left
    /// as given by `f`, so callers must keep it zero.
    pub(crate) fn from_fn(
        expert_id: String,
        n: usize,
        mut f: impl FnMut(usize, usize) -> InfluenceScore,
    ) -> Self {
        let mut scores = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                scores.push(f(i, j));
            }
        }
        debug_assert!((0..n).all(|i| scores[i * n + i] == InfluenceScore::ZERO));
        Self {
            expert_id,
            n,
            scores,
        }
    }

    /// Reorders rows and columns consistently with [`CriteriaSet::permuted`].
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self::from_fn(self.expert_id.clone(), self.n, |i, j| {
            self.score(perm[i], perm[j])
        })
    }
}

/// Checks an expert grid against the criteria set. Returns the same grid,
/// typed, when it is `n x n`, every entry is in `0..=4`, and the diagonal
/// is zero.
pub fn validate_expert_response(
    resp: &RawResponse,
    cs: &CriteriaSet,
) -> Result<ExpertResponse, ModelError> {
    let n = cs.len();
    if resp.scores.len() != n {
        return Err(ModelError::DimensionMismatch {
            expected: n,
            rows: resp.scores.len(),
            row: 0,
            cols: resp.scores.first().map_or(0, Vec::len),
        });
    }
    if let Some((row, r)) = resp.scores.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(ModelError::DimensionMismatch {
            expected: n,
            rows: n,
            row,
            cols: r.len(),
        });
    }
    let mut scores = Vec::with_capacity(n * n);
    for (row, r) in resp.scores.iter().enumerate() {
        for (col, &value) in r.iter().enumerate() {
            let s = InfluenceScore::new(value).ok_or(ModelError::OutOfScale { row, col, value })?;
            scores.push(s);
        }
    }
    if let Some(index) = (0..n).find(|&i| scores[i * n + i] != InfluenceScore::ZERO) {
        return Err(ModelError::NonzeroDiagonal { index });
    }
    Ok(ExpertResponse {
        expert_id: resp.expert_id.clone(),
        n,
        scores,
    })
}

/// Mean expert influence, entry `(i, j)` being the influence of criterion
/// `i` on criterion `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectRelationMatrix {
    values: DenseMatrix,
}

impl DirectRelationMatrix {
    pub fn new(values: DenseMatrix) -> Result<Self, ModelError> {
        if !values.is_square() {
            return Err(ModelError::DimensionMismatch {
                expected: values.n_rows(),
                rows: values.n_rows(),
                row: 0,
                cols: values.n_cols(),
            });
        }
        let n = values.n_rows();
        for i in 0..n {
            for j in 0..n {
                let v = values[(i, j)];
                if !(0.0..=f64::from(MAX_SCORE)).contains(&v) {
                    return Err(ModelError::OutOfRange {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
        }
        if let Some(index) = (0..n).find(|&i| values[(i, i)] != 0.0) {
            return Err(ModelError::NonzeroDiagonal { index });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.n_rows()
    }
}

/// How the normalization divisor is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationMode {
    /// Largest row sum.
    RowMax,
    /// Largest of all row sums and all column sums.
    #[default]
    RowColMax,
}

impl NormalizationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::RowMax => "row-max",
            Self::RowColMax => "row-col-max",
        }
    }
}

impl std::str::FromStr for NormalizationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "row-max" => Ok(Self::RowMax),
            "row-col-max" => Ok(Self::RowColMax),
            other => Err(format!(
                "unknown normalization mode {other:?} (expected row-max or row-col-max)"
            )),
        }
    }
}

/// The direct-relation matrix divided by a single scalar `divisor`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedMatrix {
    values: DenseMatrix,
    divisor: f64,
    mode: NormalizationMode,
}

impl NormalizedMatrix {
    pub(crate) fn from_parts_unchecked(
        values: DenseMatrix,
        divisor: f64,
        mode: NormalizationMode,
    ) -> Self {
        Self {
            values,
            divisor,
            mode,
        }
    }

    /// Wraps an arbitrary square matrix, checking that it is nonnegative
    /// with a zero diagonal and that every row sum or every column sum is at
    /// most one (so its spectral radius is at most one).
    pub fn from_matrix(
        values: DenseMatrix,
        divisor: f64,
        mode: NormalizationMode,
    ) -> Result<Self, ModelError> {
        if !values.is_square() {
            return Err(ModelError::InvalidNormalized("not square"));
        }
        if values.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(ModelError::InvalidNormalized("entries must lie in [0, 1]"));
        }
        let n = values.n_rows();
        if let Some(index) = (0..n).find(|&i| values[(i, i)] != 0.0) {
            return Err(ModelError::NonzeroDiagonal { index });
        }
        let bound = 1.0 + 1e-12;
        let rows_ok = values.row_sums().iter().all(|&s| s <= bound);
        let cols_ok = values.col_sums().iter().all(|&s| s <= bound);
        if !(rows_ok || cols_ok) {
            return Err(ModelError::InvalidNormalized(
                "neither all row sums nor all column sums are at most 1",
            ));
        }
        Ok(Self {
            values,
            divisor,
            mode,
        })
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn divisor(&self) -> f64 {
        self.divisor
    }

    pub fn mode(&self) -> NormalizationMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.values.n_rows()
    }
}

/// Direct plus all indirect influence, `X (I − X)⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalRelationMatrix {
    values: DenseMatrix,
}

impl TotalRelationMatrix {
    pub fn from_matrix(values: DenseMatrix) -> Result<Self, ModelError> {
        if !values.is_square() {
            return Err(ModelError::DimensionMismatch {
                expected: values.n_rows(),
                rows: values.n_rows(),
                row: 0,
                cols: values.n_cols(),
            });
        }
        let n = values.n_rows();
        for i in 0..n {
            for j in 0..n {
                let v = values[(i, j)];
                if !(v.is_finite() && v >= 0.0) {
                    return Err(ModelError::InvalidTotalRelation { row: i, col: j });
                }
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.n_rows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Cause,
    Effect,
}

impl Group {
    /// Effect iff `relation < 0`; a zero relation counts as Cause.
    pub fn from_relation(relation: f64) -> Self {
        if relation < 0.0 {
            Self::Effect
        } else {
            Self::Cause
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Cause => "cause",
            Self::Effect => "effect",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-criterion dispatch (`d`, row sum) and receipt (`r`, column sum).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProminenceRecord {
    pub criterion: Criterion,
    pub d: f64,
    pub r: f64,
    pub prominence: f64,
    pub relation: f64,
    pub group: Group,
}

impl ProminenceRecord {
    pub fn new(criterion: Criterion, d: f64, r: f64) -> Self {
        let relation = d - r;
        Self {
            criterion,
            d,
            r,
            prominence: d + r,
            relation,
            group: Group::from_relation(relation),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strength {
    Weak,
    Moderate,
    Strong,
}

impl Strength {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Weak => "weak",
            Self::Moderate => "moderate",
            Self::Strong => "strong",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: Criterion,
    pub to: Criterion,
    pub weight: f64,
    pub strength: Strength,
}

/// Everything one pipeline run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisResult {
    pub criteria: CriteriaSet,
    pub drm: DirectRelationMatrix,
    pub nrm: NormalizedMatrix,
    pub trm: TotalRelationMatrix,
    /// Mean of all total-relation entries.
    pub alpha: f64,
    /// Threshold actually applied to the cut; equals `alpha` unless overridden.
    pub cut_threshold: f64,
    pub alpha_cut: DenseMatrix,
    pub records: Vec<ProminenceRecord>,
    pub edges: Vec<Edge>,
}

impl AnalysisResult {
    pub fn cause_codes(&self) -> Vec<&str> {
        self.codes_in(Group::Cause)
    }

    pub fn effect_codes(&self) -> Vec<&str> {
        self.codes_in(Group::Effect)
    }

    fn codes_in(&self, group: Group) -> Vec<&str> {
        self.records
            .iter()
            .filter(|r| r.group == group)
            .map(|r| r.criterion.code.as_str())
            .collect()
    }
}
