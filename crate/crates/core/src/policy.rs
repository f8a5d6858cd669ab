//! Roles, role classes, the conflict-of-interest relation and the access-rights matrix.
//!
//! A [`Policy`] is a plain, immutable value. It can hold structurally broken
//! data (dangling references, self-conflicts, ...) so that [`validate_policy`]
//! can describe every defect; engines refuse to start from a policy whose
//! report is not clean.
//!
//! Conflicts are declared between role classes. A declaration may also name two
//! roles, in which case it is lifted onto the classes that contain them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transform::TransformRecipe;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

id_type!(
    /// Name of a role (`R2`, `Data Analyst`, ...).
    RoleId
);
id_type!(
    /// Name of a user, also used as the subject name at the checkpoint.
    UserId
);
id_type!(
    /// Name of a protected object (a data warehouse).
    ObjectId
);
id_type!(
    /// Name of a role class (`DMC`, `DAC`, `DSC`).
    ClassId
);
id_type!(DomainId);

/// An operation that can appear in the rights matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperationKind {
    Read,
    Write,
}

impl OperationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OperationKind::Read => "read",
            OperationKind::Write => "write",
        }
    }
}

impl fmt::Display for OperationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Tier of a warehouse object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ObjectKind {
    #[serde(rename = "ODW")]
    Odw,
    #[serde(rename = "DDW")]
    Ddw,
    #[serde(rename = "ADW")]
    Adw,
    #[serde(rename = "generic")]
    Generic,
}

impl fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectKind::Odw => "ODW",
            ObjectKind::Ddw => "DDW",
            ObjectKind::Adw => "ADW",
            ObjectKind::Generic => "generic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub name: DomainId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Role {
    pub id: RoleId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub domain: DomainId,
    /// Operations members of the role may request.
    #[serde(default = "all_operations")]
    pub operations: BTreeSet<OperationKind>,
}

fn all_operations() -> BTreeSet<OperationKind> {
    [OperationKind::Read, OperationKind::Write].into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct User {
    pub id: UserId,
    /// The single role the user currently holds.
    pub role: RoleId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectDescriptor {
    pub id: ObjectId,
    pub kind: ObjectKind,
    pub domain: DomainId,
    pub owning_class: ClassId,
    #[serde(default)]
    pub entities: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleClass {
    pub id: ClassId,
    /// 1-based bit slot of the class in every wall vector.
    pub index: u32,
    pub roles: BTreeSet<RoleId>,
}

/// One declared conflict, stored unordered.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConflictDecl {
    Classes([ClassId; 2]),
    Roles([RoleId; 2]),
}

impl ConflictDecl {
    pub fn classes(a: impl Into<String>, b: impl Into<String>) -> Self {
        let mut pair = [ClassId(a.into()), ClassId(b.into())];
        pair.sort();
        ConflictDecl::Classes(pair)
    }

    pub fn roles(a: impl Into<String>, b: impl Into<String>) -> Self {
        let mut pair = [RoleId(a.into()), RoleId(b.into())];
        pair.sort();
        ConflictDecl::Roles(pair)
    }

    fn normalized(self) -> Self {
        match self {
            ConflictDecl::Classes(mut p) => {
                p.sort();
                ConflictDecl::Classes(p)
            }
            ConflictDecl::Roles(mut p) => {
                p.sort();
                ConflictDecl::Roles(p)
            }
        }
    }
}

/// Symmetric conflict-of-interest relation. Transitivity is not implied.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConflictRelation {
    decls: BTreeSet<ConflictDecl>,
}

impl ConflictRelation {
    pub fn new(decls: impl IntoIterator<Item = ConflictDecl>) -> Self {
        Self {
            decls: decls.into_iter().map(ConflictDecl::normalized).collect(),
        }
    }

    pub fn decls(&self) -> impl Iterator<Item = &ConflictDecl> {
        self.decls.iter()
    }

    pub fn len(&self) -> usize {
        self.decls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decls.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RightsEntry {
    pub object: ObjectId,
    pub role: RoleId,
    pub ops: BTreeSet<OperationKind>,
}

/// Per (object, role) operation sets. A missing entry is the empty set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccessRightsMatrix {
    entries: BTreeMap<(ObjectId, RoleId), BTreeSet<OperationKind>>,
}

impl AccessRightsMatrix {
    pub fn grant(&mut self, object: ObjectId, role: RoleId, ops: impl IntoIterator<Item = OperationKind>) {
        self.entries.entry((object, role)).or_default().extend(ops);
    }

    pub fn get(&self, object: &ObjectId, role: &RoleId) -> BTreeSet<OperationKind> {
        self.entries
            .get(&(object.clone(), role.clone()))
            .cloned()
            .unwrap_or_default()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ObjectId, &RoleId, &BTreeSet<OperationKind>)> {
        self.entries.iter().map(|((o, r), ops)| (o, r, ops))
    }
}

/// On-disk shape of a policy. [`Policy`] converts to and from it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, rename = "domain")]
    pub domains: Vec<Domain>,
    #[serde(default, rename = "class")]
    pub classes: Vec<RoleClass>,
    #[serde(default, rename = "role")]
    pub roles: Vec<Role>,
    #[serde(default, rename = "user")]
    pub users: Vec<User>,
    #[serde(default, rename = "object")]
    pub objects: Vec<ObjectDescriptor>,
    #[serde(default, rename = "conflict")]
    pub conflicts: Vec<ConflictDecl>,
    #[serde(default, rename = "right")]
    pub rights: Vec<RightsEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<TransformRecipe>,
}

/// The assembled model: domains, roles, users, objects, classes, conflicts and rights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "PolicyDocument", into = "PolicyDocument")]
pub struct Policy {
    pub name: Option<String>,
    domains: Vec<Domain>,
    classes: Vec<RoleClass>,
    roles: Vec<Role>,
    users: Vec<User>,
    objects: Vec<ObjectDescriptor>,
    conflicts: ConflictRelation,
    rights: AccessRightsMatrix,
    pub recipe: Option<TransformRecipe>,
    index: Index,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Index {
    roles: HashMap<RoleId, usize>,
    users: HashMap<UserId, usize>,
    objects: HashMap<ObjectId, usize>,
    classes: HashMap<ClassId, usize>,
    /// role -> position in `classes` of the first class listing it.
    class_of_role: HashMap<RoleId, usize>,
    /// Positions in `classes` sorted by declared index.
    slots: Vec<usize>,
    /// Symmetric matrix over positions in `classes`.
    conflict: Vec<Vec<bool>>,
}

impl Index {
    fn build(p: &Policy) -> Self {
        fn positions<K: std::hash::Hash + Eq + Clone, T>(items: &[T], key: impl Fn(&T) -> &K) -> HashMap<K, usize> {
            let mut map = HashMap::new();
            for (i, item) in items.iter().enumerate() {
                map.entry(key(item).clone()).or_insert(i);
            }
            map
        }
        let classes = positions(&p.classes, |c| &c.id);
        let mut class_of_role = HashMap::new();
        for (i, class) in p.classes.iter().enumerate() {
            for role in &class.roles {
                class_of_role.entry(role.clone()).or_insert(i);
            }
        }
        let mut slots: Vec<usize> = (0..p.classes.len()).collect();
        slots.sort_by_key(|&i| (p.classes[i].index, i));

        let n = p.classes.len();
        let mut conflict = vec![vec![false; n]; n];
        for decl in p.conflicts.decls() {
            let pair = match decl {
                ConflictDecl::Classes([a, b]) => classes.get(a).zip(classes.get(b)).map(|(a, b)| (*a, *b)),
                ConflictDecl::Roles([a, b]) => class_of_role
                    .get(a)
                    .zip(class_of_role.get(b))
                    .map(|(a, b)| (*a, *b)),
            };
            if let Some((a, b)) = pair {
                conflict[a][b] = true;
                conflict[b][a] = true;
            }
        }
        Index {
            roles: positions(&p.roles, |r| &r.id),
            users: positions(&p.users, |u| &u.id),
            objects: positions(&p.objects, |o| &o.id),
            classes,
            class_of_role,
            slots,
            conflict,
        }
    }
}

impl From<PolicyDocument> for Policy {
    fn from(doc: PolicyDocument) -> Self {
        let mut rights = AccessRightsMatrix::default();
        for entry in doc.rights {
            rights.grant(entry.object, entry.role, entry.ops);
        }
        Policy::assemble(
            doc.name,
            doc.domains,
            doc.classes,
            doc.roles,
            doc.users,
            doc.objects,
            ConflictRelation::new(doc.conflicts),
            rights,
            doc.recipe,
        )
    }
}

impl From<Policy> for PolicyDocument {
    fn from(p: Policy) -> Self {
        PolicyDocument {
            name: p.name,
            domains: p.domains,
            classes: p.classes,
            roles: p.roles,
            users: p.users,
            objects: p.objects,
            conflicts: p.conflicts.decls.into_iter().collect(),
            rights: p
                .rights
                .entries
                .into_iter()
                .map(|((object, role), ops)| RightsEntry { object, role, ops })
                .collect(),
            recipe: p.recipe,
        }
    }
}

impl Policy {
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        name: Option<String>,
        domains: Vec<Domain>,
        classes: Vec<RoleClass>,
        roles: Vec<Role>,
        users: Vec<User>,
        objects: Vec<ObjectDescriptor>,
        conflicts: ConflictRelation,
        rights: AccessRightsMatrix,
        recipe: Option<TransformRecipe>,
    ) -> Self {
        let mut policy = Policy {
            name,
            domains,
            classes,
            roles,
            users,
            objects,
            conflicts,
            rights,
            recipe,
            index: Index::default(),
        };
        policy.index = Index::build(&policy);
        policy
    }

    pub fn to_document(&self) -> PolicyDocument {
        self.clone().into()
    }

    fn rebuilt(doc: PolicyDocument) -> Self {
        doc.into()
    }

    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn users(&self) -> &[User] {
        &self.users
    }

    pub fn objects(&self) -> &[ObjectDescriptor] {
        &self.objects
    }

    pub fn classes(&self) -> &[RoleClass] {
        &self.classes
    }

    pub fn conflicts(&self) -> &ConflictRelation {
        &self.conflicts
    }

    pub fn rights(&self) -> &AccessRightsMatrix {
        &self.rights
    }

    pub fn role(&self, id: &RoleId) -> Option<&Role> {
        self.index.roles.get(id).map(|&i| &self.roles[i])
    }

    pub fn user(&self, id: &UserId) -> Option<&User> {
        self.index.users.get(id).map(|&i| &self.users[i])
    }

    pub fn object(&self, id: &ObjectId) -> Option<&ObjectDescriptor> {
        self.index.objects.get(id).map(|&i| &self.objects[i])
    }

    pub fn class(&self, id: &ClassId) -> Option<&RoleClass> {
        self.index.classes.get(id).map(|&i| &self.classes[i])
    }

    /// Users currently holding `role`.
    pub fn members(&self, role: &RoleId) -> BTreeSet<UserId> {
        self.users
            .iter()
            .filter(|u| &u.role == role)
            .map(|u| u.id.clone())
            .collect()
    }

    /// Class containing `role`, or `None` for classless roles.
    pub fn class_of(&self, role: &RoleId) -> Option<&RoleClass> {
        self.index.class_of_role.get(role).map(|&i| &self.classes[i])
    }

    /// Number of role classes, i.e. the wall width.
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// Classes ordered by their bit slot.
    pub fn classes_by_slot(&self) -> impl Iterator<Item = &RoleClass> {
        self.index.slots.iter().map(|&i| &self.classes[i])
    }

    /// Zero-based bit position of a class.
    pub fn slot_of(&self, class: &ClassId) -> Option<usize> {
        let pos = *self.index.classes.get(class)?;
        self.index.slots.iter().position(|&p| p == pos)
    }

    pub fn classes_conflict(&self, a: &ClassId, b: &ClassId) -> bool {
        match (self.index.classes.get(a), self.index.classes.get(b)) {
            (Some(&a), Some(&b)) => self.index.conflict[a][b],
            _ => false,
        }
    }

    /// Role-level query, delegated to the containing classes. Classless roles
    /// never conflict.
    pub fn roles_conflict(&self, a: &RoleId, b: &RoleId) -> bool {
        match (self.index.class_of_role.get(a), self.index.class_of_role.get(b)) {
            (Some(&a), Some(&b)) => self.index.conflict[a][b],
            _ => false,
        }
    }

    /// Classes declared in conflict with `class`, in slot order.
    pub fn conflicting_classes(&self, class: &ClassId) -> Vec<&RoleClass> {
        self.classes_by_slot()
            .filter(|c| self.classes_conflict(class, &c.id))
            .collect()
    }

    /// Two roles are cooperative when both are classless, share a class, or
    /// sit in classes that are not in conflict.
    pub fn cooperative(&self, a: &RoleId, b: &RoleId) -> bool {
        !self.roles_conflict(a, b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("unknown role `{0}`")]
    UnknownRole(RoleId),
    #[error("unknown user `{0}`")]
    UnknownUser(UserId),
    #[error("unknown object `{0}`")]
    UnknownObject(ObjectId),
    #[error("user `{user}` holds `{current}`, whose class conflicts with `{requested}`")]
    ConflictingAssignment {
        user: UserId,
        current: RoleId,
        requested: RoleId,
    },
    #[error("user `{user}` cannot switch from `{from}` to conflicting role `{to}`")]
    ConflictingSwitch { user: UserId, from: RoleId, to: RoleId },
    #[error("user `{0}` has no active role")]
    NoActiveRole(UserId),
}

/// Makes `user` hold `role`, creating the user if needed.
///
/// Rejected when the user currently holds a role whose class conflicts with
/// the requested role's class.
pub fn assign_user(policy: &Policy, user: &UserId, role: &RoleId) -> Result<Policy, PolicyError> {
    if policy.role(role).is_none() {
        return Err(PolicyError::UnknownRole(role.clone()));
    }
    let mut doc = policy.to_document();
    match doc.users.iter_mut().find(|u| &u.id == user) {
        Some(existing) => {
            if policy.roles_conflict(&existing.role, role) {
                return Err(PolicyError::ConflictingAssignment {
                    user: user.clone(),
                    current: existing.role.clone(),
                    requested: role.clone(),
                });
            }
            existing.role = role.clone();
        }
        None => doc.users.push(User {
            id: user.clone(),
            role: role.clone(),
        }),
    }
    Ok(Policy::rebuilt(doc))
}

/// Moves an existing user to a cooperative role.
pub fn switch_role(policy: &Policy, user: &UserId, to: &RoleId) -> Result<Policy, PolicyError> {
    let current = policy
        .user(user)
        .ok_or_else(|| PolicyError::NoActiveRole(user.clone()))?;
    if policy.role(to).is_none() {
        return Err(PolicyError::UnknownRole(to.clone()));
    }
    if !policy.cooperative(&current.role, to) {
        return Err(PolicyError::ConflictingSwitch {
            user: user.clone(),
            from: current.role.clone(),
            to: to.clone(),
        });
    }
    let mut doc = policy.to_document();
    if let Some(u) = doc.users.iter_mut().find(|u| &u.id == user) {
        u.role = to.clone();
    }
    Ok(Policy::rebuilt(doc))
}

pub fn lookup_rights(
    policy: &Policy,
    object: &ObjectId,
    role: &RoleId,
) -> Result<BTreeSet<OperationKind>, PolicyError> {
    if policy.object(object).is_none() {
        return Err(PolicyError::UnknownObject(object.clone()));
    }
    if policy.role(role).is_none() {
        return Err(PolicyError::UnknownRole(role.clone()));
    }
    Ok(policy.rights.get(object, role))
}

/// A structural defect that prevents walls from being built.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Violation {
    DuplicateId { kind: &'static str, id: String },
    /// A class declared in conflict with itself.
    SelfConflict { class: ClassId },
    /// Two roles of the same class declared in conflict.
    IntraClassConflict { class: ClassId, roles: [RoleId; 2] },
    /// `from` names `id`, which does not exist.
    DanglingReference { from: String, kind: &'static str, id: String },
    /// Class indices must be exactly 1..=n.
    NonContiguousIndices { indices: Vec<u32> },
    RoleInSeveralClasses { role: RoleId, classes: Vec<ClassId> },
    DuplicateWarehouse { domain: DomainId, kind: ObjectKind },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateId { kind, id } => write!(f, "duplicate {kind} id `{id}`"),
            Violation::SelfConflict { class } => {
                write!(f, "class `{class}` is declared in conflict with itself")
            }
            Violation::IntraClassConflict { class, roles } => write!(
                f,
                "roles `{}` and `{}` conflict but share class `{class}`",
                roles[0], roles[1]
            ),
            Violation::DanglingReference { from, kind, id } => {
                write!(f, "{from} refers to unknown {kind} `{id}`")
            }
            Violation::NonContiguousIndices { indices } => {
                write!(f, "class indices {indices:?} are not exactly 1..=n")
            }
            Violation::RoleInSeveralClasses { role, classes } => {
                let names: Vec<&str> = classes.iter().map(ClassId::as_str).collect();
                write!(f, "role `{role}` belongs to several classes: {}", names.join(", "))
            }
            Violation::DuplicateWarehouse { domain, kind } => {
                write!(f, "domain `{domain}` declares more than one {kind} object")
            }
        }
    }
}

/// Observations that never invalidate a policy.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Note {
    /// `a`–`b` and `b`–`c` conflict but `a`–`c` does not; allowed, since
    /// conflict need not propagate.
    NonTransitiveChain { a: ClassId, b: ClassId, c: ClassId },
    /// A role-level conflict naming a classless role has no effect.
    InertRoleConflict { roles: [RoleId; 2] },
}

impl fmt::Display for Note {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Note::NonTransitiveChain { a, b, c } => write!(
                f,
                "`{a}` and `{c}` both conflict with `{b}` but not with each other"
            ),
            Note::InertRoleConflict { roles } => write!(
                f,
                "conflict between `{}` and `{}` has no effect: a role is in no class",
                roles[0], roles[1]
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub notes: Vec<Note>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            writeln!(f, "ok: 0 violations")?;
        } else {
            writeln!(f, "invalid: {} violation(s)", self.violations.len())?;
        }
        for v in &self.violations {
            writeln!(f, "violation: {v}")?;
        }
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        Ok(())
    }
}

/// Checks every structural property walls depend on. Never fails; callers
/// decide whether to abort on a dirty report.
pub fn validate_policy(policy: &Policy) -> ValidationReport {
    let mut violations = Vec::new();

    fn duplicates<'a>(kind: &'static str, ids: impl Iterator<Item = &'a str>, out: &mut Vec<Violation>) {
        let mut seen = BTreeSet::new();
        let mut reported = BTreeSet::new();
        for id in ids {
            if !seen.insert(id) && reported.insert(id) {
                out.push(Violation::DuplicateId {
                    kind,
                    id: id.to_string(),
                });
            }
        }
    }
    duplicates("domain", policy.domains.iter().map(|d| d.name.as_str()), &mut violations);
    duplicates("class", policy.classes.iter().map(|c| c.id.as_str()), &mut violations);
    duplicates("role", policy.roles.iter().map(|r| r.id.as_str()), &mut violations);
    duplicates("user", policy.users.iter().map(|u| u.id.as_str()), &mut violations);
    duplicates("object", policy.objects.iter().map(|o| o.id.as_str()), &mut violations);

    let domain_known = |d: &DomainId| policy.domains.iter().any(|x| &x.name == d);
    let dangling = |from: String, kind: &'static str, id: &str| Violation::DanglingReference {
        from,
        kind,
        id: id.to_string(),
    };

    for role in &policy.roles {
        if !domain_known(&role.domain) {
            violations.push(dangling(format!("role `{}`", role.id), "domain", role.domain.as_str()));
        }
    }
    for user in &policy.users {
        if policy.role(&user.role).is_none() {
            violations.push(dangling(format!("user `{}`", user.id), "role", user.role.as_str()));
        }
    }
    for class in &policy.classes {
        for role in &class.roles {
            if policy.role(role).is_none() {
                violations.push(dangling(format!("class `{}`", class.id), "role", role.as_str()));
            }
        }
    }
    let mut warehouses = BTreeMap::new();
    for object in &policy.objects {
        if !domain_known(&object.domain) {
            violations.push(dangling(format!("object `{}`", object.id), "domain", object.domain.as_str()));
        }
        if policy.class(&object.owning_class).is_none() {
            violations.push(dangling(
                format!("object `{}`", object.id),
                "class",
                object.owning_class.as_str(),
            ));
        }
        if object.kind != ObjectKind::Generic {
            let count = warehouses.entry((object.domain.clone(), object.kind)).or_insert(0usize);
            *count += 1;
            if *count == 2 {
                violations.push(Violation::DuplicateWarehouse {
                    domain: object.domain.clone(),
                    kind: object.kind,
                });
            }
        }
    }
    for (object, role, _) in policy.rights.entries() {
        if policy.object(object).is_none() {
            violations.push(dangling("rights entry".into(), "object", object.as_str()));
        }
        if policy.role(role).is_none() {
            violations.push(dangling("rights entry".into(), "role", role.as_str()));
        }
    }

    let mut indices: Vec<u32> = policy.classes.iter().map(|c| c.index).collect();
    indices.sort_unstable();
    if indices.iter().enumerate().any(|(i, &idx)| idx as usize != i + 1) {
        violations.push(Violation::NonContiguousIndices { indices });
    }

    let mut role_classes: BTreeMap<&RoleId, Vec<ClassId>> = BTreeMap::new();
    for class in &policy.classes {
        for role in &class.roles {
            role_classes.entry(role).or_default().push(class.id.clone());
        }
    }
    for (role, classes) in role_classes {
        if classes.len() > 1 {
            violations.push(Violation::RoleInSeveralClasses {
                role: role.clone(),
                classes,
            });
        }
    }

    let mut notes = Vec::new();
    for decl in policy.conflicts.decls() {
        match decl {
            ConflictDecl::Classes([a, b]) => {
                for c in [a, b] {
                    if policy.class(c).is_none() {
                        violations.push(dangling("conflict".into(), "class", c.as_str()));
                    }
                }
                if a == b {
                    violations.push(Violation::SelfConflict { class: a.clone() });
                }
            }
            ConflictDecl::Roles([a, b]) => {
                let mut known = true;
                for r in [a, b] {
                    if policy.role(r).is_none() {
                        known = false;
                        violations.push(dangling("conflict".into(), "role", r.as_str()));
                    }
                }
                if !known {
                    continue;
                }
                match (policy.class_of(a), policy.class_of(b)) {
                    (Some(ca), Some(cb)) if ca.id == cb.id => {
                        violations.push(Violation::IntraClassConflict {
                            class: ca.id.clone(),
                            roles: [a.clone(), b.clone()],
                        });
                    }
                    (Some(_), Some(_)) => {}
                    _ => notes.push(Note::InertRoleConflict {
                        roles: [a.clone(), b.clone()],
                    }),
                }
            }
        }
    }

    let slots: Vec<&RoleClass> = policy.classes_by_slot().collect();
    for (i, a) in slots.iter().enumerate() {
        for b in &slots {
            if a.id == b.id || !policy.classes_conflict(&a.id, &b.id) {
                continue;
            }
            for c in &slots[i + 1..] {
                if c.id != b.id
                    && c.id != a.id
                    && policy.classes_conflict(&b.id, &c.id)
                    && !policy.classes_conflict(&a.id, &c.id)
                {
                    notes.push(Note::NonTransitiveChain {
                        a: a.id.clone(),
                        b: b.id.clone(),
                        c: c.id.clone(),
                    });
                }
            }
        }
    }

    ValidationReport { violations, notes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn case_study() -> Policy {
        fixtures::case_study_policy()
    }

    #[test]
    fn case_study_is_clean() {
        let report = validate_policy(&case_study());
        assert!(report.is_clean(), "{report}");
        assert!(report.notes.is_empty());
    }

    #[test]
    fn self_conflict_is_flagged() {
        let mut doc = case_study().to_document();
        doc.conflicts.push(ConflictDecl::classes("DMC", "DMC"));
        let report = validate_policy(&doc.into());
        assert_eq!(
            report.violations,
            vec![Violation::SelfConflict { class: "DMC".into() }]
        );
    }

    #[test]
    fn conflict_membership_is_symmetric() {
        let p = case_study();
        for a in p.classes() {
            for b in p.classes() {
                assert_eq!(p.classes_conflict(&a.id, &b.id), p.classes_conflict(&b.id, &a.id));
            }
        }
        assert!(!p.classes_conflict(&"DMC".into(), &"DMC".into()));
    }

    #[test]
    fn assign_and_switch_rules() {
        let p = case_study();
        let u1 = UserId::from("u1");
        let p = assign_user(&p, &u1, &"R5".into()).unwrap();
        assert_eq!(p.user(&u1).unwrap().role, RoleId::from("R5"));
        let err = assign_user(&p, &u1, &"R6".into()).unwrap_err();
        assert!(matches!(err, PolicyError::ConflictingAssignment { .. }));

        let u2 = UserId::from("u2");
        let p = assign_user(&p, &u2, &"R1".into()).unwrap();
        assert!(p.class_of(&"R1".into()).is_none());
        let p = assign_user(&p, &u2, &"R2".into()).unwrap();
        let p = switch_role(&p, &u2, &"R3".into()).unwrap();
        assert_eq!(p.user(&u2).unwrap().role, RoleId::from("R3"));

        let err = switch_role(&p, &u1, &"R6".into()).unwrap_err();
        assert!(matches!(err, PolicyError::ConflictingSwitch { .. }));

        let u3 = UserId::from("u3");
        let p = assign_user(&p, &u3, &"R1".into()).unwrap();
        let p = switch_role(&p, &u3, &"R7".into()).unwrap();
        assert_eq!(p.user(&u3).unwrap().role, RoleId::from("R7"));

        assert!(matches!(
            switch_role(&p, &"ghost".into(), &"R2".into()),
            Err(PolicyError::NoActiveRole(_))
        ));
        assert!(matches!(
            assign_user(&p, &u3, &"R99".into()),
            Err(PolicyError::UnknownRole(_))
        ));
    }

    #[test]
    fn rights_lookup() {
        let p = fixtures::access_rights_policy();
        let ops = |o: &str, r: &str| lookup_rights(&p, &o.into(), &r.into()).unwrap();
        assert_eq!(ops("Obj_1", "R_1"), [OperationKind::Read, OperationKind::Write].into());
        assert_eq!(ops("Obj_1", "R_2"), [OperationKind::Read].into());
        assert_eq!(ops("Obj_2", "R_1"), [OperationKind::Write].into());
        assert!(ops("Obj_2", "R_2").is_empty());
        assert!(ops("Obj_3", "R_2").is_empty());
        assert!(matches!(
            lookup_rights(&p, &"nope".into(), &"R_1".into()),
            Err(PolicyError::UnknownObject(_))
        ));
        assert!(matches!(
            lookup_rights(&p, &"Obj_1".into(), &"nope".into()),
            Err(PolicyError::UnknownRole(_))
        ));
    }

    #[test]
    fn dropping_a_conflict_yields_transitivity_note_only() {
        let mut doc = case_study().to_document();
        doc.conflicts.retain(|d| d != &ConflictDecl::classes("DMC", "DAC"));
        let report = validate_policy(&doc.into());
        assert!(report.is_clean());
        assert_eq!(
            report.notes,
            vec![Note::NonTransitiveChain {
                a: "DMC".into(),
                b: "DSC".into(),
                c: "DAC".into()
            }]
        );
    }

    #[test]
    fn intra_class_role_conflict() {
        let mut doc = case_study().to_document();
        doc.conflicts.push(ConflictDecl::roles("R3", "R2"));
        let report = validate_policy(&doc.into());
        assert_eq!(
            report.violations,
            vec![Violation::IntraClassConflict {
                class: "DMC".into(),
                roles: ["R2".into(), "R3".into()]
            }]
        );
    }

    #[test]
    fn role_conflict_with_classless_role_is_inert() {
        let mut doc = case_study().to_document();
        doc.conflicts.push(ConflictDecl::roles("R1", "R2"));
        let p: Policy = doc.into();
        let report = validate_policy(&p);
        assert!(report.is_clean());
        assert_eq!(report.notes.len(), 1);
        assert!(!p.roles_conflict(&"R1".into(), &"R2".into()));
    }
}
