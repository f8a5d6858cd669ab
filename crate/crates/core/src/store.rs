//! Engine state, text formats and file persistence.
//!
//! Everything on disk is UTF-8 text with LF line endings:
//!
//! - policy documents (TOML, see [`load_policy`] / [`render_policy`]),
//! - wall snapshots (one wall per line in brace notation, see [`snapshot_state`]),
//! - the audit log (one record per line, append-only, see [`AuditLog`]).
//!
//! Snapshots are written with atomic replace; the audit log is only ever
//! appended to and flushed per record.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::checkpoint::{AuditRecord, AuditSink, CheckpointError};
use crate::policy::{
    assign_user, switch_role, validate_policy, ObjectId, Policy, PolicyError, RoleId, UserId, ValidationReport,
};
use crate::walls::{init_object_wall, init_subject_wall, BinaryObjectWall, BinarySubjectWall, WallError};

/// Counter bumped by every applied mutation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateVersion(pub u64);

impl StateVersion {
    pub fn next(self) -> Self {
        StateVersion(self.0 + 1)
    }
}

impl fmt::Display for StateVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("policy failed validation:\n{0}")]
    ValidationFailed(ValidationReport),
    #[error(transparent)]
    Wall(#[from] WallError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("snapshot does not match policy: {0}")]
    SnapshotMismatch(String),
    #[error("snapshot version {new} does not exceed persisted version {persisted}")]
    StaleSnapshot { new: StateVersion, persisted: StateVersion },
    #[error("storage failure on {path}: {source}")]
    StorageFailure { path: PathBuf, source: io::Error },
}

impl StoreError {
    pub(crate) fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        StoreError::Parse {
            line,
            column,
            message: message.into(),
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        StoreError::StorageFailure {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Runtime walls for every user and object of a validated policy.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineState {
    policy: Arc<Policy>,
    subject_walls: BTreeMap<UserId, BinarySubjectWall>,
    object_walls: BTreeMap<ObjectId, BinaryObjectWall>,
    version: StateVersion,
}

impl EngineState {
    /// Validates `policy` and seeds every wall from it.
    pub fn new(policy: Policy) -> Result<Self, StoreError> {
        let report = validate_policy(&policy);
        if !report.is_clean() {
            return Err(StoreError::ValidationFailed(report));
        }
        let mut subject_walls = BTreeMap::new();
        for user in policy.users() {
            subject_walls.insert(user.id.clone(), init_subject_wall(&policy, &user.id)?);
        }
        let mut object_walls = BTreeMap::new();
        for object in policy.objects() {
            object_walls.insert(object.id.clone(), init_object_wall(&policy, &object.id)?);
        }
        Ok(Self {
            policy: Arc::new(policy),
            subject_walls,
            object_walls,
            version: StateVersion::default(),
        })
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn version(&self) -> StateVersion {
        self.version
    }

    pub fn subject_wall(&self, user: &UserId) -> Option<&BinarySubjectWall> {
        self.subject_walls.get(user)
    }

    pub fn object_wall(&self, object: &ObjectId) -> Option<&BinaryObjectWall> {
        self.object_walls.get(object)
    }

    pub fn subject_walls(&self) -> &BTreeMap<UserId, BinarySubjectWall> {
        &self.subject_walls
    }

    pub fn object_walls(&self) -> &BTreeMap<ObjectId, BinaryObjectWall> {
        &self.object_walls
    }

    pub(crate) fn install(
        &mut self,
        user: &UserId,
        subject: BinarySubjectWall,
        object: &ObjectId,
        object_wall: BinaryObjectWall,
    ) {
        self.subject_walls.insert(user.clone(), subject);
        self.object_walls.insert(object.clone(), object_wall);
    }

    pub(crate) fn bump(&mut self) {
        self.version = self.version.next();
    }

    /// Same walls and version, ignoring which policy allocation backs them.
    pub fn same_walls(&self, other: &EngineState) -> bool {
        self.subject_walls == other.subject_walls && self.object_walls == other.object_walls
    }

    fn with_policy(&self, policy: Policy, user: &UserId) -> Result<Self, StoreError> {
        let wall = init_subject_wall(&policy, user)?;
        let mut next = self.clone();
        next.policy = Arc::new(policy);
        next.subject_walls.insert(user.clone(), wall);
        next.version = self.version.next();
        Ok(next)
    }

    /// Assigns `user` to `role` and seeds the user's wall from the new class.
    pub fn assign_user(&self, user: &UserId, role: &RoleId) -> Result<Self, StoreError> {
        let policy = assign_user(&self.policy, user, role)?;
        self.with_policy(policy, user)
    }

    /// Switches `user` to a cooperative role; the subject wall is reset to
    /// the new role's class seed.
    pub fn switch_role(&self, user: &UserId, to: &RoleId) -> Result<Self, StoreError> {
        let policy = switch_role(&self.policy, user, to)?;
        self.with_policy(policy, user)
    }
}

fn toml_position(text: &str, err: &toml::de::Error) -> (usize, usize) {
    match err.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
            (line, column)
        }
        None => (1, 1),
    }
}

/// Parses a policy document. Structural problems are left to
/// [`validate_policy`]; see [`load_validated_policy`].
pub fn load_policy(text: &str) -> Result<Policy, StoreError> {
    if text.trim().is_empty() {
        return Err(StoreError::parse(1, 1, "empty policy document"));
    }
    toml::from_str::<Policy>(text).map_err(|e| {
        let (line, column) = toml_position(text, &e);
        StoreError::parse(line, column, e.message())
    })
}

pub fn load_validated_policy(text: &str) -> Result<Policy, StoreError> {
    let policy = load_policy(text)?;
    let report = validate_policy(&policy);
    if report.is_clean() {
        Ok(policy)
    } else {
        Err(StoreError::ValidationFailed(report))
    }
}

pub fn render_policy(policy: &Policy) -> String {
    toml::to_string(policy).expect("policy documents always serialize")
}

const SNAPSHOT_HEADER: &str = "# cwall wall snapshot";

/// Deterministic text rendering of the walls.
///
/// ```text
/// # cwall wall snapshot
/// version 0
/// classes DMC DAC DSC
/// object ODW {100, 011}
/// subject S1 {100, 011}
/// ```
pub fn snapshot_state(state: &EngineState) -> String {
    let mut out = String::new();
    out.push_str(SNAPSHOT_HEADER);
    out.push('\n');
    out.push_str(&format!("version {}\n", state.version));
    let classes: Vec<&str> = state.policy.classes_by_slot().map(|c| c.id.as_str()).collect();
    out.push_str(&format!("classes {}\n", classes.join(" ")));
    for object in state.policy.objects() {
        if let Some(wall) = state.object_walls.get(&object.id) {
            out.push_str(&format!("object {} {}\n", object.id, wall));
        }
    }
    for user in state.policy.users() {
        if let Some(wall) = state.subject_walls.get(&user.id) {
            out.push_str(&format!("subject {} {}\n", user.id, wall));
        }
    }
    out
}

/// Rebuilds a state from `policy` and a snapshot produced by [`snapshot_state`].
pub fn load_snapshot(policy: Policy, text: &str) -> Result<EngineState, StoreError> {
    let mut state = EngineState::new(policy)?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, SNAPSHOT_HEADER)) => {}
        _ => return Err(StoreError::parse(1, 1, "missing snapshot header")),
    }
    let mut saw_version = false;
    let mut seen_subjects = 0;
    let mut seen_objects = 0;
    for (n, line) in lines {
        let (tag, rest) = line
            .split_once(' ')
            .ok_or_else(|| StoreError::parse(n, 1, "expected `<tag> <value>`"))?;
        match tag {
            "version" => {
                let v = rest
                    .parse()
                    .map_err(|_| StoreError::parse(n, 9, format!("bad version `{rest}`")))?;
                state.version = StateVersion(v);
                saw_version = true;
            }
            "classes" => {
                let expected: Vec<&str> = state.policy.classes_by_slot().map(|c| c.id.as_str()).collect();
                let got: Vec<&str> = rest.split(' ').collect();
                if expected != got {
                    return Err(StoreError::SnapshotMismatch(format!(
                        "class order {got:?}, policy has {expected:?}"
                    )));
                }
            }
            "object" | "subject" => {
                let (id, wall) = rest
                    .split_once(' ')
                    .ok_or_else(|| StoreError::parse(n, tag.len() + 2, "expected `<id> {..., ...}`"))?;
                let column = tag.len() + id.len() + 3;
                let bad = |e: WallError| StoreError::parse(n, column, e.to_string());
                let width = state.policy.class_count();
                if tag == "object" {
                    let wall: BinaryObjectWall = wall.parse().map_err(bad)?;
                    let slot = state
                        .object_walls
                        .get_mut(&ObjectId::from(id))
                        .ok_or_else(|| StoreError::SnapshotMismatch(format!("unknown object `{id}`")))?;
                    if wall.width() != width {
                        return Err(StoreError::SnapshotMismatch(format!("object `{id}` has width {}", wall.width())));
                    }
                    *slot = wall;
                    seen_objects += 1;
                } else {
                    let wall: BinarySubjectWall = wall.parse().map_err(bad)?;
                    let slot = state
                        .subject_walls
                        .get_mut(&UserId::from(id))
                        .ok_or_else(|| StoreError::SnapshotMismatch(format!("unknown subject `{id}`")))?;
                    if wall.width() != width {
                        return Err(StoreError::SnapshotMismatch(format!("subject `{id}` has width {}", wall.width())));
                    }
                    *slot = wall;
                    seen_subjects += 1;
                }
            }
            other => return Err(StoreError::parse(n, 1, format!("unknown tag `{other}`"))),
        }
    }
    if !saw_version {
        return Err(StoreError::parse(2, 1, "missing version line"));
    }
    if seen_objects != state.object_walls.len() || seen_subjects != state.subject_walls.len() {
        return Err(StoreError::SnapshotMismatch("snapshot does not cover every wall".into()));
    }
    Ok(state)
}

/// Reads the version recorded in a snapshot without a policy.
pub fn snapshot_version(text: &str) -> Option<StateVersion> {
    text.lines()
        .find_map(|l| l.strip_prefix("version "))
        .and_then(|v| v.parse().ok())
        .map(StateVersion)
}

/// Writes a snapshot with atomic replace. Refuses to overwrite a snapshot
/// whose version is not strictly older.
pub fn persist_snapshot(path: &Path, state: &EngineState) -> Result<(), StoreError> {
    if let Ok(existing) = std::fs::read_to_string(path) {
        if let Some(persisted) = snapshot_version(&existing) {
            if state.version <= persisted {
                return Err(StoreError::StaleSnapshot {
                    new: state.version,
                    persisted,
                });
            }
        }
    }
    write_atomic(path, snapshot_state(state).as_bytes())
}

/// Writes `bytes` to a temporary sibling then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| StoreError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| StoreError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| StoreError::io(path, e))?;
    tmp.persist(path).map_err(|e| StoreError::io(path, e.error))?;
    Ok(())
}

/// Result of reading an audit log that may end in a torn write.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditReadout {
    pub records: Vec<AuditRecord>,
    /// Byte offset and content of an incomplete final line, if any.
    pub truncated_tail: Option<(usize, String)>,
}

/// Parses audit log bytes. Only LF-terminated lines count as records.
pub fn read_audit(bytes: &[u8]) -> Result<AuditReadout, StoreError> {
    let mut records = Vec::new();
    let mut offset = 0;
    let mut line_no = 0;
    while offset < bytes.len() {
        line_no += 1;
        match bytes[offset..].iter().position(|&b| b == b'\n') {
            Some(len) => {
                let line = std::str::from_utf8(&bytes[offset..offset + len])
                    .map_err(|e| StoreError::parse(line_no, e.valid_up_to() + 1, "invalid UTF-8"))?;
                let record = AuditRecord::parse_line(line).map_err(|e| StoreError::parse(line_no, 1, e.to_string()))?;
                records.push(record);
                offset += len + 1;
            }
            None => {
                let tail = String::from_utf8_lossy(&bytes[offset..]).into_owned();
                return Ok(AuditReadout {
                    records,
                    truncated_tail: Some((offset, tail)),
                });
            }
        }
    }
    Ok(AuditReadout {
        records,
        truncated_tail: None,
    })
}

/// Append-only audit log file.
#[derive(Debug)]
pub struct AuditLog {
    path: PathBuf,
    file: File,
    len: usize,
}

impl AuditLog {
    /// Opens (creating if needed) a log for appending. An incomplete final
    /// line left by a crash is reported as an error; see [`AuditLog::recover`].
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let existing = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(StoreError::io(&path, e)),
        };
        let readout = read_audit(&existing)?;
        if let Some((offset, _)) = readout.truncated_tail {
            return Err(StoreError::parse(
                readout.records.len() + 1,
                1,
                format!("audit log ends in a truncated record at byte {offset}"),
            ));
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| StoreError::io(&path, e))?;
        Ok(Self {
            path,
            file,
            len: readout.records.len(),
        })
    }

    /// Cuts a torn final line so that appending can resume. Returns the
    /// complete records that were kept.
    pub fn recover(path: impl AsRef<Path>) -> Result<AuditReadout, StoreError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| StoreError::io(path, e))?;
        let readout = read_audit(&bytes)?;
        if let Some((offset, _)) = &readout.truncated_tail {
            let file = OpenOptions::new().write(true).open(path).map_err(|e| StoreError::io(path, e))?;
            file.set_len(*offset as u64).map_err(|e| StoreError::io(path, e))?;
            file.sync_all().map_err(|e| StoreError::io(path, e))?;
        }
        Ok(readout)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append_audit(&mut self, record: &AuditRecord) -> Result<(), StoreError> {
        let mut line = record.render_line();
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| StoreError::io(&self.path, e))?;
        self.len += 1;
        Ok(())
    }

    pub fn read_all(&self) -> Result<Vec<AuditRecord>, StoreError> {
        let bytes = std::fs::read(&self.path).map_err(|e| StoreError::io(&self.path, e))?;
        Ok(read_audit(&bytes)?.records)
    }
}

impl AuditSink for AuditLog {
    fn append(&mut self, record: AuditRecord) -> Result<(), CheckpointError> {
        self.append_audit(&record)
            .map_err(|e| CheckpointError::Storage(e.to_string()))
    }
}
