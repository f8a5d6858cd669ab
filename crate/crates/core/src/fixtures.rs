//! Bundled policy, schema and dataset fixtures.

use crate::policy::Policy;
use crate::transform::{AttributeSchema, Dataset, Tier};

/// Healthcare case study: roles R1–R7, classes DMC/DAC/DSC, subjects S1–S3.
pub const CASE_STUDY_POLICY: &str = include_str!("../fixtures/case_study.toml");
/// Two roles, three objects, a generic access-rights matrix.
pub const ACCESS_RIGHTS_POLICY: &str = include_str!("../fixtures/access_rights.toml");
/// Wall table of the untouched case study, as printed by `report`.
pub const CASE_STUDY_WALL_TABLE: &str = include_str!("../fixtures/case_study_walls.txt");
/// Trace with a granted write followed by a wall-blocked read.
pub const CASE_STUDY_TRACE: &str = include_str!("../fixtures/case_study.trace");
pub const EHR_SCHEMA: &str = include_str!("../fixtures/ehr_schema.toml");
/// 200 synthetic patient records, see [`crate::synth::synthetic_ehr`].
pub const EHR_ORIGINAL: &str = include_str!("../fixtures/ehr_od.csv");

pub fn case_study_policy() -> Policy {
    crate::store::load_policy(CASE_STUDY_POLICY).expect("bundled fixture parses")
}

pub fn access_rights_policy() -> Policy {
    crate::store::load_policy(ACCESS_RIGHTS_POLICY).expect("bundled fixture parses")
}

pub fn ehr_schema() -> AttributeSchema {
    AttributeSchema::parse(EHR_SCHEMA).expect("bundled fixture parses")
}

pub fn ehr_original() -> Dataset {
    Dataset::read_csv(EHR_ORIGINAL, ehr_schema(), Tier::OD).expect("bundled fixture parses")
}
