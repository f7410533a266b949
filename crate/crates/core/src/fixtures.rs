//! The bundled ten-criterion example: manifest, mean direct-relation matrix,
//! and a synthetic ten-expert survey that aggregates exactly to that matrix.
//!
//! The survey is reconstructed, not observed: only three of its cells
//! (C2→C1, C7→C2, C9→C2) are real expert vectors; every other cell is an
//! integer split chosen to hit the published mean.

use crate::io::{parse_criteria_manifest, parse_drm_csv, parse_survey_csv};
use crate::model::{CriteriaSet, DirectRelationMatrix, ExpertResponse};

pub const CRITERIA_CSV: &str = include_str!("../../../fixtures/criteria.csv");
pub const DIRECT_RELATION_CSV: &str = include_str!("../../../fixtures/direct_relation.csv");
pub const SURVEY_CSV: &str = include_str!("../../../fixtures/survey_synthetic.csv");

pub fn criteria() -> CriteriaSet {
    parse_criteria_manifest(CRITERIA_CSV).expect("bundled manifest parses")
}

pub fn direct_relation() -> DirectRelationMatrix {
    parse_drm_csv(DIRECT_RELATION_CSV, &criteria()).expect("bundled matrix parses")
}

pub fn survey() -> Vec<ExpertResponse> {
    parse_survey_csv(SURVEY_CSV, &criteria()).expect("bundled survey parses")
}
