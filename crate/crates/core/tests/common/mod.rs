//! Test-only oracles, written against the raw policy document rather than the
//! engine's indexes and bit vectors.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use cwall_core::checkpoint::{AccessRequest, Operation, Outcome, Reason};
use cwall_core::policy::{ConflictDecl, OperationKind, Policy, PolicyDocument};
use cwall_core::store::EngineState;
use cwall_core::transform::{Dataset, Sensitivity};

type Classes = BTreeSet<String>;

/// Chinese-wall engine over class-name sets.
#[derive(Debug, Clone)]
pub struct SetEngine {
    class_of_role: BTreeMap<String, String>,
    conflicts: BTreeSet<(String, String)>,
    all_classes: Classes,
    slot_of: BTreeMap<String, usize>,
    role_of_user: BTreeMap<String, String>,
    role_ops: BTreeMap<String, BTreeSet<OperationKind>>,
    rights: BTreeMap<(String, String), BTreeSet<OperationKind>>,
    owner: BTreeMap<String, String>,
    pub subjects: BTreeMap<String, (Classes, Classes)>,
    pub objects: BTreeMap<String, (Classes, Classes)>,
}

impl SetEngine {
    pub fn new(policy: &Policy) -> Self {
        let doc: PolicyDocument = policy.to_document();
        let mut class_of_role = BTreeMap::new();
        for class in &doc.classes {
            for role in &class.roles {
                class_of_role.entry(role.0.clone()).or_insert(class.id.0.clone());
            }
        }
        let mut conflicts = BTreeSet::new();
        for decl in &doc.conflicts {
            let pair = match decl {
                ConflictDecl::Classes([a, b]) => Some((a.0.clone(), b.0.clone())),
                ConflictDecl::Roles([a, b]) => match (class_of_role.get(&a.0), class_of_role.get(&b.0)) {
                    (Some(x), Some(y)) => Some((x.clone(), y.clone())),
                    _ => None,
                },
            };
            if let Some((a, b)) = pair {
                conflicts.insert((a.clone(), b.clone()));
                conflicts.insert((b, a));
            }
        }
        let all_classes: Classes = doc.classes.iter().map(|c| c.id.0.clone()).collect();
        let slot_of = doc
            .classes
            .iter()
            .map(|c| (c.id.0.clone(), c.index as usize - 1))
            .collect();
        let conflicting = |c: &str| -> Classes {
            all_classes
                .iter()
                .filter(|o| conflicts.contains(&(c.to_string(), o.to_string())))
                .cloned()
                .collect()
        };

        let role_of_user: BTreeMap<String, String> =
            doc.users.iter().map(|u| (u.id.0.clone(), u.role.0.clone())).collect();
        let subjects = role_of_user
            .iter()
            .map(|(u, r)| {
                let wall = match class_of_role.get(r) {
                    Some(c) => ([c.clone()].into(), conflicting(c)),
                    None => (Classes::new(), all_classes.clone()),
                };
                (u.clone(), wall)
            })
            .collect();
        let objects = doc
            .objects
            .iter()
            .map(|o| {
                let c = &o.owning_class.0;
                (o.id.0.clone(), ([c.clone()].into(), conflicting(c)))
            })
            .collect();
        SetEngine {
            class_of_role,
            all_classes,
            slot_of,
            role_ops: doc.roles.iter().map(|r| (r.id.0.clone(), r.operations.clone())).collect(),
            rights: doc
                .rights
                .iter()
                .map(|e| ((e.object.0.clone(), e.role.0.clone()), e.ops.clone()))
                .collect(),
            owner: doc
                .objects
                .iter()
                .map(|o| (o.id.0.clone(), o.owning_class.0.clone()))
                .collect(),
            conflicts,
            role_of_user,
            subjects,
            objects,
        }
    }

    pub fn classes_conflict(&self, a: &str, b: &str) -> bool {
        self.conflicts.contains(&(a.to_string(), b.to_string()))
    }

    pub fn roles_conflict(&self, a: &str, b: &str) -> bool {
        match (self.class_of_role.get(a), self.class_of_role.get(b)) {
            (Some(x), Some(y)) => self.classes_conflict(x, y),
            _ => false,
        }
    }

    pub fn owner(&self, object: &str) -> &str {
        &self.owner[object]
    }

    /// Decides and applies one request.
    pub fn step(&mut self, req: &AccessRequest) -> (Outcome, Reason) {
        let user = req.subject.as_str();
        let object = req.object.as_str();
        let (Some((g, d)), Some((a, c))) = (self.subjects.get(user), self.objects.get(object)) else {
            return (Outcome::Denied, Reason::UnknownPrincipal);
        };
        if !(g.is_disjoint(c) && d.is_disjoint(a)) {
            return (Outcome::Denied, Reason::WallConflict);
        }
        let role = &self.role_of_user[user];
        let op = match &req.operation {
            Operation::Kind(k) => *k,
            Operation::Other(_) => return (Outcome::Denied, Reason::NoRight),
        };
        let has_right = self
            .rights
            .get(&(object.to_string(), role.clone()))
            .is_some_and(|ops| ops.contains(&op))
            && self.role_ops.get(role).is_some_and(|ops| ops.contains(&op));
        if !has_right {
            return (Outcome::Denied, Reason::NoRight);
        }
        let (a, c) = (a.clone(), c.clone());
        let (g, d) = (g.clone(), d.clone());
        match op {
            OperationKind::Read => {
                let s = self.subjects.get_mut(user).unwrap();
                s.0.extend(a);
                s.1.extend(c);
            }
            OperationKind::Write => {
                let o = self.objects.get_mut(object).unwrap();
                o.0.extend(g);
                o.1.extend(d);
            }
        }
        (Outcome::Granted, Reason::Ok)
    }

    /// Renders a class set as a bit string, slot 0 leftmost.
    pub fn bits(&self, set: &Classes) -> String {
        let mut out = vec!['0'; self.all_classes.len()];
        for c in set {
            out[self.slot_of[c]] = '1';
        }
        out.into_iter().collect()
    }

    /// Compares every wall with the bitset engine's.
    pub fn matches(&self, state: &EngineState) -> Result<(), String> {
        for (user, (g, d)) in &self.subjects {
            let wall = state
                .subject_wall(&user.as_str().into())
                .ok_or_else(|| format!("no wall for {user}"))?;
            let expected = format!("{{{}, {}}}", self.bits(g), self.bits(d));
            if wall.to_string() != expected {
                return Err(format!("subject {user}: {wall} vs oracle {expected}"));
            }
        }
        for (object, (a, c)) in &self.objects {
            let wall = state
                .object_wall(&object.as_str().into())
                .ok_or_else(|| format!("no wall for {object}"))?;
            let expected = format!("{{{}, {}}}", self.bits(a), self.bits(c));
            if wall.to_string() != expected {
                return Err(format!("object {object}: {wall} vs oracle {expected}"));
            }
        }
        if self.subjects.len() != state.subject_walls().len() || self.objects.len() != state.object_walls().len() {
            return Err("wall counts differ".into());
        }
        Ok(())
    }
}

/// Quasi-identifier group sizes by brute-force pairwise comparison.
pub fn quasi_group_sizes(ds: &Dataset) -> Vec<usize> {
    let quasi: Vec<usize> = ds
        .schema
        .columns
        .iter()
        .enumerate()
        .filter(|(_, c)| c.sensitivity == Sensitivity::Quasi)
        .map(|(i, _)| i)
        .collect();
    let mut seen = vec![false; ds.rows.len()];
    let mut sizes = Vec::new();
    for i in 0..ds.rows.len() {
        if seen[i] {
            continue;
        }
        let mut size = 0;
        for (j, other) in ds.rows.iter().enumerate().skip(i) {
            if quasi.iter().all(|&q| ds.rows[i][q] == other[q]) {
                seen[j] = true;
                size += 1;
            }
        }
        sizes.push(size);
    }
    sizes
}

pub fn min_quasi_group(ds: &Dataset) -> usize {
    quasi_group_sizes(ds).into_iter().min().unwrap_or(0)
}

/// Counts values per cell of a column, for invariants on untouched columns.
pub fn column_histogram(ds: &Dataset, name: &str) -> HashMap<String, usize> {
    let mut h = HashMap::new();
    for v in ds.column(name).unwrap() {
        *h.entry(v.to_string()).or_default() += 1;
    }
    h
}
