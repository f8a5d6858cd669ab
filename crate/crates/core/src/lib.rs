//! Chinese-Wall access control over role classes, with a data pipeline that
//! moves records from original to de-identified to anonymised warehouses.
//!
//! - [`policy`]: roles, classes, conflicts, rights, validation.
//! - [`walls`]: binary subject/object walls and the access predicate.
//! - [`checkpoint`]: authorize, apply, replay, audit records.
//! - [`transform`]: de-identification, k-anonymisation, confidentiality α.
//! - [`store`]: engine state, snapshots, the audit log file.
//! - [`report`]: wall table rendering.
//! - [`synth`]: seeded generators for policies, traces and patient tables.

pub mod checkpoint;
pub mod fixtures;
pub mod policy;
pub mod report;
pub mod store;
pub mod synth;
pub mod transform;
pub mod walls;

pub use checkpoint::{apply, authorize, replay, AccessRequest, AuditRecord, AuditSink, Decision, Operation, Outcome, Reason};
pub use policy::{
    assign_user, lookup_rights, switch_role, validate_policy, ClassId, ObjectId, OperationKind, Policy, RoleId,
    UserId, ValidationReport, Violation,
};
pub use store::{EngineState, StateVersion};
pub use transform::{
    anonymize, build_warehouse_chain, deidentify, measure_confidentiality, verify_k_anonymity, Dataset, Tier,
    TransformRecipe,
};
pub use walls::{check_access, init_object_wall, init_subject_wall, BinaryObjectWall, BinarySubjectWall, BitVector};
