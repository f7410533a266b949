//! Monte-Carlo robustness of the cause/effect partition.
//!
//! Each trial nudges expert scores up or down by a fixed step, re-runs the
//! pipeline and records which criteria land in the Cause group. Random draws
//! come from a ChaCha stream seeded by `(seed, trial, expert)`, with a fixed
//! number of draws per cell, so every cell's outcome depends only on
//! `(seed, trial, expert, row, col)`. Trial tallies are integer counts, so
//! the report is identical whether trials run sequentially or on the rayon
//! pool.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::engine::{aggregate_responses, classify_groups, EngineError};
use crate::model::{
    CriteriaSet, ExpertResponse, Group, InfluenceScore, NormalizationMode, MAX_SCORE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensitivityError {
    #[error("invalid perturbation spec: {0}")]
    InvalidSpec(String),
    #[error("all {trials} trials were degenerate")]
    AllTrialsDegenerate { trials: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    flip_probability: f64,
    magnitude: u8,
    seed: u64,
    trials: usize,
}

impl PerturbationSpec {
    pub fn new(
        flip_probability: f64,
        magnitude: u8,
        seed: u64,
        trials: usize,
    ) -> Result<Self, SensitivityError> {
        if !(0.0..=1.0).contains(&flip_probability) {
            return Err(SensitivityError::InvalidSpec(format!(
                "flip probability {flip_probability} is outside [0, 1]"
            )));
        }
        if trials == 0 {
            return Err(SensitivityError::InvalidSpec(
                "trials must be at least 1".into(),
            ));
        }
        Ok(Self {
            flip_probability,
            magnitude,
            seed,
            trials,
        })
    }

    pub fn flip_probability(&self) -> f64 {
        self.flip_probability
    }

    pub fn magnitude(&self) -> u8 {
        self.magnitude
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trials(&self) -> usize {
        self.trials
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub codes: Vec<String>,
    /// Fraction of non-degenerate trials placing each criterion in Cause.
    pub cause_probability: Vec<f64>,
    pub trials_run: usize,
    pub degenerate_trials: usize,
}

// 64-bit FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn trial_rng(seed: u64, trial_index: usize, expert_id: &str) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(trial_index as u64).to_le_bytes());
    key[16..24].copy_from_slice(&fnv1a(expert_id.as_bytes()).to_le_bytes());
    key[24..32].copy_from_slice(&(expert_id.len() as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Moves each off-diagonal score by `±magnitude` with probability
/// `flip_probability`, direction uniform, clamped to the 0–4 scale.
pub fn perturb_response(
    resp: &ExpertResponse,
    spec: &PerturbationSpec,
    trial_index: usize,
) -> ExpertResponse {
    let mut rng = trial_rng(spec.seed, trial_index, resp.expert_id());
    let step = i16::from(spec.magnitude);
    ExpertResponse::from_fn(resp.expert_id().to_owned(), resp.dim(), |i, j| {
        let original = resp.score(i, j);
        if i == j {
            return original;
        }
        // two draws per cell whether or not it flips
        let u: f64 = rng.random();
        let up: bool = rng.random();
        if u >= spec.flip_probability {
            return original;
        }
        let moved = i16::from(original.value()) + if up { step } else { -step };
        let clamped = moved.clamp(0, i16::from(MAX_SCORE));
        InfluenceScore::new(i64::from(clamped)).expect("clamped into scale")
    })
}

/// Per-trial outcome: cause membership, or `None` for a degenerate trial.
fn run_trial(
    responses: &[ExpertResponse],
    cs: &CriteriaSet,
    spec: &PerturbationSpec,
    mode: NormalizationMode,
    trial_index: usize,
) -> Option<Vec<bool>> {
    let perturbed: Vec<ExpertResponse> = responses
        .iter()
        .map(|r| perturb_response(r, spec, trial_index))
        .collect();
    let drm = aggregate_responses(&perturbed, cs).ok()?;
    let groups = classify_groups(&drm, mode).ok()?;
    Some(groups.into_iter().map(|g| g == Group::Cause).collect())
}

#[derive(Debug, Clone, PartialEq)]
struct Tally {
    cause: Vec<usize>,
    degenerate: usize,
}

impl Tally {
    fn empty(n: usize) -> Self {
        Self {
            cause: vec![0; n],
            degenerate: 0,
        }
    }

    fn record(mut self, outcome: Option<Vec<bool>>) -> Self {
        match outcome {
            Some(flags) => {
                for (c, f) in self.cause.iter_mut().zip(flags) {
                    *c += usize::from(f);
                }
            }
            None => self.degenerate += 1,
        }
        self
    }

    #[cfg(feature = "parallel")]
    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.cause.iter_mut().zip(other.cause) {
            *a += b;
        }
        self.degenerate += other.degenerate;
        self
    }
}

fn check_panel(responses: &[ExpertResponse], cs: &CriteriaSet) -> Result<(), SensitivityError> {
    if responses.is_empty() {
        return Err(EngineError::EmptyPanel.into());
    }
    if let Some(bad) = responses.iter().find(|r| r.dim() != cs.len()) {
        return Err(EngineError::DimensionMismatch {
            expected: cs.len(),
            found: bad.dim(),
        }
        .into());
    }
    Ok(())
}

fn finish(
    tally: Tally,
    cs: &CriteriaSet,
    spec: &PerturbationSpec,
) -> Result<StabilityReport, SensitivityError> {
    let ok = spec.trials - tally.degenerate;
    if ok == 0 {
        return Err(SensitivityError::AllTrialsDegenerate {
            trials: spec.trials,
        });
    }
    Ok(StabilityReport {
        codes: cs.codes().map(str::to_owned).collect(),
        cause_probability: tally
            .cause
            .into_iter()
            .map(|c| c as f64 / ok as f64)
            .collect(),
        trials_run: spec.trials,
        degenerate_trials: tally.degenerate,
    })
}

/// Runs every trial on the calling thread.
pub fn monte_carlo_stability_sequential(
    responses: &[ExpertResponse],
    cs: &CriteriaSet,
    spec: &PerturbationSpec,
    mode: NormalizationMode,
) -> Result<StabilityReport, SensitivityError> {
    check_panel(responses, cs)?;
    let tally = (0..spec.trials).fold(Tally::empty(cs.len()), |acc, t| {
        acc.record(run_trial(responses, cs, spec, mode, t))
    });
    finish(tally, cs, spec)
}

/// Runs trials on the rayon pool. Same numbers as the sequential version.
#[cfg(feature = "parallel")]
pub fn monte_carlo_stability_parallel(
    responses: &[ExpertResponse],
    cs: &CriteriaSet,
    spec: &PerturbationSpec,
    mode: NormalizationMode,
) -> Result<StabilityReport, SensitivityError> {
    use rayon::prelude::*;

    check_panel(responses, cs)?;
    let n = cs.len();
    let tally = (0..spec.trials)
        .into_par_iter()
        .fold(
            || Tally::empty(n),
            |acc, t| acc.record(run_trial(responses, cs, spec, mode, t)),
        )
        .reduce(|| Tally::empty(n), Tally::merge);
    finish(tally, cs, spec)
}

/// Probability of each criterion staying in the Cause group under random
/// perturbation of the panel. Parallel when the `parallel` feature is on.
pub fn monte_carlo_stability(
    responses: &[ExpertResponse],
    cs: &CriteriaSet,
    spec: &PerturbationSpec,
    mode: NormalizationMode,
) -> Result<StabilityReport, SensitivityError> {
    #[cfg(feature = "parallel")]
    {
        monte_carlo_stability_parallel(responses, cs, spec, mode)
    }
    #[cfg(not(feature = "parallel"))]
    {
        monte_carlo_stability_sequential(responses, cs, spec, mode)
    }
}
