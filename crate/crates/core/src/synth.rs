//! Seeded generators: random policies and traces for equivalence testing,
//! and a synthetic patient table for the transform pipeline.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{AccessRequest, Operation};
use crate::policy::{
    AccessRightsMatrix, ConflictDecl, ConflictRelation, Domain, ObjectDescriptor, ObjectKind, OperationKind, Policy,
    Role, RoleClass, User,
};
use crate::transform::{AttributeSchema, Dataset, Tier};

/// Size bounds for [`random_policy`].
#[derive(Debug, Clone, Copy)]
pub struct PolicyShape {
    pub classes: (usize, usize),
    pub roles: (usize, usize),
    pub objects: (usize, usize),
}

impl Default for PolicyShape {
    fn default() -> Self {
        Self {
            classes: (2, 6),
            roles: (2, 12),
            objects: (1, 8),
        }
    }
}

fn random_ops(rng: &mut impl Rng) -> Vec<OperationKind> {
    match rng.gen_range(0..4) {
        0 => vec![OperationKind::Read],
        1 => vec![OperationKind::Write],
        _ => vec![OperationKind::Read, OperationKind::Write],
    }
}

/// A structurally valid policy: contiguous class indices, each role in at
/// most one class, no self-conflicts. Some roles are classless and some
/// conflicts are declared between roles.
pub fn random_policy(rng: &mut impl Rng, shape: PolicyShape) -> Policy {
    let n_classes = rng.gen_range(shape.classes.0..=shape.classes.1);
    let n_roles = rng.gen_range(shape.roles.0..=shape.roles.1);
    let n_objects = rng.gen_range(shape.objects.0..=shape.objects.1);
    let domain = Domain { name: "d".into() };

    let mut slots: Vec<u32> = (1..=n_classes as u32).collect();
    slots.shuffle(rng);
    let mut classes: Vec<RoleClass> = slots
        .iter()
        .enumerate()
        .map(|(i, &index)| RoleClass {
            id: format!("C{i}").into(),
            index,
            roles: Default::default(),
        })
        .collect();

    let mut roles = Vec::new();
    let mut users = Vec::new();
    let mut role_class = Vec::new();
    for r in 0..n_roles {
        let id = format!("R{r}");
        let class = if rng.gen_bool(0.8) {
            Some(rng.gen_range(0..n_classes))
        } else {
            None
        };
        if let Some(c) = class {
            classes[c].roles.insert(id.as_str().into());
        }
        role_class.push(class);
        roles.push(Role {
            id: id.as_str().into(),
            title: None,
            domain: domain.name.clone(),
            operations: if rng.gen_bool(0.8) {
                [OperationKind::Read, OperationKind::Write].into()
            } else {
                random_ops(rng).into_iter().collect()
            },
        });
        for u in 0..rng.gen_range(1..=2) {
            users.push(User {
                id: format!("U{r}_{u}").into(),
                role: id.as_str().into(),
            });
        }
    }

    let mut decls = Vec::new();
    for a in 0..n_classes {
        for b in a + 1..n_classes {
            if rng.gen_bool(0.5) {
                decls.push(ConflictDecl::classes(classes[a].id.as_str(), classes[b].id.as_str()));
            }
        }
    }
    for _ in 0..rng.gen_range(0..3) {
        let a = rng.gen_range(0..n_roles);
        let b = rng.gen_range(0..n_roles);
        match (role_class[a], role_class[b]) {
            (Some(ca), Some(cb)) if ca != cb => decls.push(ConflictDecl::roles(format!("R{a}"), format!("R{b}"))),
            _ => {}
        }
    }

    let objects: Vec<ObjectDescriptor> = (0..n_objects)
        .map(|o| ObjectDescriptor {
            id: format!("O{o}").into(),
            kind: ObjectKind::Generic,
            domain: domain.name.clone(),
            owning_class: classes[rng.gen_range(0..n_classes)].id.clone(),
            entities: Default::default(),
        })
        .collect();

    let mut rights = AccessRightsMatrix::default();
    for object in &objects {
        for role in &roles {
            if rng.gen_bool(0.6) {
                rights.grant(object.id.clone(), role.id.clone(), random_ops(rng));
            }
        }
    }

    Policy::assemble(
        None,
        vec![domain],
        classes,
        roles,
        users,
        objects,
        ConflictRelation::new(decls),
        rights,
        None,
    )
}

/// Requests against `policy` with strictly increasing sequence numbers.
/// About one in twenty names an unknown principal or an unsupported verb.
pub fn random_trace(rng: &mut impl Rng, policy: &Policy, len: usize) -> Vec<AccessRequest> {
    let mut seq = 0u64;
    (0..len)
        .map(|_| {
            seq += rng.gen_range(1..=3);
            let subject = if rng.gen_bool(0.05) || policy.users().is_empty() {
                "ghost".to_string()
            } else {
                policy.users().choose(rng).unwrap().id.to_string()
            };
            let object = if rng.gen_bool(0.05) || policy.objects().is_empty() {
                "nowhere".to_string()
            } else {
                policy.objects().choose(rng).unwrap().id.to_string()
            };
            let operation = match rng.gen_range(0..40) {
                0 => Operation::Other("delete".into()),
                n if n % 2 == 0 => Operation::Kind(OperationKind::Read),
                _ => Operation::Kind(OperationKind::Write),
            };
            AccessRequest::new(seq, subject, object, operation)
        })
        .collect()
}

/// Seed used for the bundled `ehr_od.csv`.
pub const EHR_SEED: u64 = 0x00E4_2022;

const FIRST: [&str; 16] = [
    "Aoife", "Bilal", "Chen", "Dara", "Elena", "Farid", "Grace", "Hugo", "Ines", "Jonas", "Kasia", "Liam", "Maya",
    "Niall", "Omar", "Priya",
];
const LAST: [&str; 12] = [
    "Byrne", "Costa", "Doyle", "Evans", "Fischer", "Gallagher", "Haddad", "Ito", "Kelly", "Murphy", "Novak", "Walsh",
];
const ZIPS: [&str; 9] = ["02139", "02141", "02144", "10001", "10003", "10027", "94103", "94110", "94117"];
const DIAGNOSES: [&str; 8] = [
    "asthma", "copd", "diabetes", "hypertension", "influenza", "migraine", "arthritis", "anemia",
];

/// Patient table: name and mrn identify, zip/age/sex are quasi-identifiers,
/// diagnosis is sensitive, visits is insensitive. Quasi profiles are drawn
/// so every raw profile occurs at least twice.
pub fn synthetic_ehr(seed: u64, rows: usize, schema: AttributeSchema) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_profiles = (rows / 3).max(1);
    let profiles: Vec<(String, u32, &str)> = (0..n_profiles)
        .map(|_| {
            (
                ZIPS.choose(&mut rng).unwrap().to_string(),
                rng.gen_range(18..=90),
                if rng.gen_bool(0.5) { "F" } else { "M" },
            )
        })
        .collect();
    let data = (0..rows)
        .map(|i| {
            let profile = if i < 2 * n_profiles {
                &profiles[i % n_profiles]
            } else {
                profiles.choose(&mut rng).unwrap()
            };
            vec![
                format!("{} {}", FIRST.choose(&mut rng).unwrap(), LAST.choose(&mut rng).unwrap()),
                format!("MRN{:06}", 100_000 + i * 37),
                profile.0.clone(),
                profile.1.to_string(),
                profile.2.to_string(),
                DIAGNOSES.choose(&mut rng).unwrap().to_string(),
                rng.gen_range(1..=12).to_string(),
            ]
        })
        .collect();
    Dataset::new(schema, data, Tier::OD)
}
