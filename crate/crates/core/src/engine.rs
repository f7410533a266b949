//! The analysis pipeline: aggregate expert scores, normalize, expand to the
//! total-relation matrix, threshold it, and read off prominence, relation,
//! cause/effect groups and the influence digraph.

use thiserror::Error;

use crate::matrix::{mat_invert, mat_mul, DenseMatrix, MatrixError};
use crate::model::{
    AnalysisResult, CriteriaSet, DirectRelationMatrix, Edge, ExpertResponse, Group, ModelError,
    NormalizationMode, NormalizedMatrix, ProminenceRecord, Strength, TotalRelationMatrix,
};

/// Largest tolerated `|T − X − X·T|` entry before the total-relation matrix
/// is rejected as numerically unreliable.
pub const FIXED_POINT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("no expert responses supplied")]
    EmptyPanel,
    #[error("dimension mismatch: expected {expected} criteria, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("direct-relation matrix is all zeros; nothing to normalize")]
    DegenerateMatrix,
    #[error("total-relation matrix does not converge: {0}")]
    ConvergenceFailure(String),
    #[error("alpha must be a finite nonnegative number, got {0}")]
    InvalidAlpha(f64),
    #[error("strength bounds must satisfy 0 <= moderate <= strong, got ({moderate}, {strong})")]
    InvalidStrengthBounds { moderate: f64, strong: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<MatrixError> for EngineError {
    fn from(e: MatrixError) -> Self {
        EngineError::ConvergenceFailure(e.to_string())
    }
}

/// Edge weights at or above `strong` are Strong, at or above `moderate`
/// Moderate, anything else Weak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrengthBounds {
    moderate: f64,
    strong: f64,
}

impl StrengthBounds {
    pub fn new(moderate: f64, strong: f64) -> Result<Self, EngineError> {
        if !(moderate.is_finite() && strong.is_finite() && 0.0 <= moderate && moderate <= strong) {
            return Err(EngineError::InvalidStrengthBounds { moderate, strong });
        }
        Ok(Self { moderate, strong })
    }

    /// Tertile boundaries (linear-interpolated 1/3 and 2/3 quantiles) of the
    /// given weights. `None` when there are no weights.
    pub fn tertiles(weights: &[f64]) -> Option<Self> {
        if weights.is_empty() {
            return None;
        }
        let mut sorted = weights.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            moderate: quantile_sorted(&sorted, 1.0 / 3.0),
            strong: quantile_sorted(&sorted, 2.0 / 3.0),
        })
    }

    pub fn moderate(&self) -> f64 {
        self.moderate
    }

    pub fn strong(&self) -> f64 {
        self.strong
    }

    /// Ties go to the stronger class.
    pub fn classify(&self, weight: f64) -> Strength {
        if weight >= self.strong {
            Strength::Strong
        } else if weight >= self.moderate {
            Strength::Moderate
        } else {
            Strength::Weak
        }
    }
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PipelineOptions {
    pub normalization: NormalizationMode,
    /// Cut threshold to use instead of the computed mean.
    pub alpha_override: Option<f64>,
    /// Strength classes; tertiles of the surviving weights when `None`.
    pub strength_bounds: Option<StrengthBounds>,
}

/// Where a pipeline run starts.
#[derive(Debug, Clone, Copy)]
pub enum PipelineInput<'a> {
    Panel(&'a [ExpertResponse]),
    Drm(&'a DirectRelationMatrix),
}

/// Cell-wise arithmetic mean of the panel's scores.
pub fn aggregate_responses(
    responses: &[ExpertResponse],
    cs: &CriteriaSet,
) -> Result<DirectRelationMatrix, EngineError> {
    if responses.is_empty() {
        return Err(EngineError::EmptyPanel);
    }
    let n = cs.len();
    if let Some(bad) = responses.iter().find(|r| r.dim() != n) {
        return Err(EngineError::DimensionMismatch {
            expected: n,
            found: bad.dim(),
        });
    }
    let panel = responses.len() as f64;
    let values = DenseMatrix::from_fn(n, n, |i, j| {
        let total: u32 = responses
            .iter()
            .map(|r| u32::from(r.score(i, j).value()))
            .sum();
        f64::from(total) / panel
    });
    Ok(DirectRelationMatrix::new(values)?)
}

/// Divides every entry by one scalar: the largest row sum, or with
/// [`NormalizationMode::RowColMax`] the largest row or column sum.
pub fn normalize_drm(
    drm: &DirectRelationMatrix,
    mode: NormalizationMode,
) -> Result<NormalizedMatrix, EngineError> {
    let a = drm.values();
    let row_max = a.row_sums().into_iter().fold(0.0, f64::max);
    let divisor = match mode {
        NormalizationMode::RowMax => row_max,
        NormalizationMode::RowColMax => a.col_sums().into_iter().fold(row_max, f64::max),
    };
    if divisor <= 0.0 {
        return Err(EngineError::DegenerateMatrix);
    }
    Ok(NormalizedMatrix::from_parts_unchecked(
        a.map(|v| v / divisor),
        divisor,
        mode,
    ))
}

/// `T = X (I − X)⁻¹`.
///
/// Fails with [`EngineError::ConvergenceFailure`] when `I − X` is singular or
/// the result does not satisfy `T = X + X·T` to [`FIXED_POINT_TOLERANCE`].
pub fn compute_trm(nrm: &NormalizedMatrix) -> Result<TotalRelationMatrix, EngineError> {
    let x = nrm.values();
    let n = x.n_rows();
    let i_minus_x = DenseMatrix::identity(n).sub(x)?;
    let inv = mat_invert(&i_minus_x)?;
    let mut t = mat_mul(x, &inv)?;

    let residual = t.sub(x)?.sub(&mat_mul(x, &t)?)?.max_abs();
    if residual.is_nan() || residual > FIXED_POINT_TOLERANCE {
        return Err(EngineError::ConvergenceFailure(format!(
            "fixed-point residual {residual:e} exceeds {FIXED_POINT_TOLERANCE:e}"
        )));
    }
    for i in 0..n {
        for j in 0..n {
            let v = t[(i, j)];
            if v < 0.0 {
                // rounding noise on structurally zero entries
                if v > -FIXED_POINT_TOLERANCE {
                    t[(i, j)] = 0.0;
                } else {
                    return Err(EngineError::ConvergenceFailure(format!(
                        "negative total relation {v:e} at ({i}, {j})"
                    )));
                }
            }
        }
    }
    Ok(TotalRelationMatrix::from_matrix(t)?)
}

/// Grand mean of the total-relation entries.
pub fn compute_threshold(trm: &TotalRelationMatrix) -> f64 {
    let n = trm.dim();
    if n == 0 {
        return 0.0;
    }
    trm.values().sum() / (n * n) as f64
}

/// Row sums `d`, column sums `r`, and the derived prominence, relation and
/// group for each criterion.
pub fn compute_prominence(
    trm: &TotalRelationMatrix,
    cs: &CriteriaSet,
) -> Result<Vec<ProminenceRecord>, EngineError> {
    if trm.dim() != cs.len() {
        return Err(EngineError::DimensionMismatch {
            expected: cs.len(),
            found: trm.dim(),
        });
    }
    let t = trm.values();
    let d = t.row_sums();
    let r = t.col_sums();
    Ok(cs
        .iter()
        .enumerate()
        .map(|(i, c)| ProminenceRecord::new(c.clone(), d[i], r[i]))
        .collect())
}

/// Keeps entries `>= alpha`, zeroes the rest.
pub fn apply_alpha_cut(trm: &TotalRelationMatrix, alpha: f64) -> DenseMatrix {
    trm.values().map(|v| if v >= alpha { v } else { 0.0 })
}

/// One edge per nonzero cell of the cut matrix, in row-major order.
pub fn build_digraph(
    alpha_cut: &DenseMatrix,
    cs: &CriteriaSet,
    strength_bounds: Option<StrengthBounds>,
) -> Result<Vec<Edge>, EngineError> {
    let n = cs.len();
    if alpha_cut.n_rows() != n || alpha_cut.n_cols() != n {
        return Err(EngineError::DimensionMismatch {
            expected: n,
            found: alpha_cut.n_rows(),
        });
    }
    let cells: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, alpha_cut[(i, j)]))
        .filter(|&(_, _, w)| w != 0.0)
        .collect();
    let weights: Vec<f64> = cells.iter().map(|c| c.2).collect();
    let bounds = match strength_bounds.or_else(|| StrengthBounds::tertiles(&weights)) {
        Some(b) => b,
        None => return Ok(Vec::new()),
    };
    Ok(cells
        .into_iter()
        .map(|(i, j, w)| Edge {
            from: cs.get(i).clone(),
            to: cs.get(j).clone(),
            weight: w,
            strength: bounds.classify(w),
        })
        .collect())
}

/// Group of each criterion, skipping the cut and digraph. Used where only
/// the cause/effect partition matters.
pub fn classify_groups(
    drm: &DirectRelationMatrix,
    mode: NormalizationMode,
) -> Result<Vec<Group>, EngineError> {
    let trm = compute_trm(&normalize_drm(drm, mode)?)?;
    let t = trm.values();
    Ok(t.row_sums()
        .into_iter()
        .zip(t.col_sums())
        .map(|(d, r)| Group::from_relation(d - r))
        .collect())
}

/// Runs the whole pipeline from a panel or a pre-aggregated matrix.
pub fn run_pipeline(
    input: PipelineInput<'_>,
    cs: &CriteriaSet,
    options: &PipelineOptions,
) -> Result<AnalysisResult, EngineError> {
    let drm = match input {
        PipelineInput::Panel(responses) => aggregate_responses(responses, cs)?,
        PipelineInput::Drm(drm) => {
            if drm.dim() != cs.len() {
                return Err(EngineError::DimensionMismatch {
                    expected: cs.len(),
                    found: drm.dim(),
                });
            }
            drm.clone()
        }
    };
    let nrm = normalize_drm(&drm, options.normalization)?;
    let trm = compute_trm(&nrm)?;
    let alpha = compute_threshold(&trm);
    let cut_threshold = match options.alpha_override {
        Some(a) if !(a.is_finite() && a >= 0.0) => return Err(EngineError::InvalidAlpha(a)),
        Some(a) => a,
        None => alpha,
    };
    let alpha_cut = apply_alpha_cut(&trm, cut_threshold);
    let records = compute_prominence(&trm, cs)?;
    let edges = build_digraph(&alpha_cut, cs, options.strength_bounds)?;
    Ok(AnalysisResult {
        criteria: cs.clone(),
        drm,
        nrm,
        trm,
        alpha,
        cut_threshold,
        alpha_cut,
        records,
        edges,
    })
}
