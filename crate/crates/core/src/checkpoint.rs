//! The security checkpoint: wall check, rights check, wall update, audit.
//!
//! [`authorize`] is pure and stamps the [`Decision`] with the state version it
//! saw. [`apply`] installs the decision's post-walls, bumps the version and
//! appends an [`AuditRecord`]; it refuses decisions computed against another
//! version. Reads update only the subject wall, writes only the object wall.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use thiserror::Error;

use crate::policy::{ObjectId, OperationKind, UserId};
use crate::store::{EngineState, StateVersion};
use crate::walls::{check_access, update_on_read, update_on_write, BinaryObjectWall, BinarySubjectWall, WallError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckpointError {
    #[error("decision was computed against version {decided}, state is at {current}")]
    StaleDecision {
        decided: StateVersion,
        current: StateVersion,
    },
    #[error("sequence number {seq} does not follow {previous}")]
    NonMonotoneSequence { previous: u64, seq: u64 },
    #[error(transparent)]
    Wall(#[from] WallError),
    #[error("audit storage failed: {0}")]
    Storage(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Requested operation. Anything other than read/write is carried verbatim
/// and can never be granted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operation {
    Kind(OperationKind),
    Other(String),
}

impl Operation {
    pub fn kind(&self) -> Option<OperationKind> {
        match self {
            Operation::Kind(k) => Some(*k),
            Operation::Other(_) => None,
        }
    }
}

impl From<OperationKind> for Operation {
    fn from(k: OperationKind) -> Self {
        Operation::Kind(k)
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operation::Kind(k) => f.write_str(k.as_str()),
            Operation::Other(s) => f.write_str(s),
        }
    }
}

impl FromStr for Operation {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "read" => Operation::Kind(OperationKind::Read),
            "write" => Operation::Kind(OperationKind::Write),
            other => Operation::Other(other.to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AccessRequest {
    pub seq: u64,
    pub subject: UserId,
    pub object: ObjectId,
    pub operation: Operation,
}

impl AccessRequest {
    pub fn new(seq: u64, subject: impl Into<String>, object: impl Into<String>, operation: impl Into<Operation>) -> Self {
        Self {
            seq,
            subject: UserId(subject.into()),
            object: ObjectId(object.into()),
            operation: operation.into(),
        }
    }

    /// `seq subject object op`, the trace and wire format.
    pub fn render(&self) -> String {
        format!("{} {} {} {}", self.seq, self.subject, self.object, self.operation)
    }

    pub fn parse(line: &str) -> Result<Self, String> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [seq, subject, object, op] = fields[..] else {
            return Err(format!("expected `seq subject object op`, got {} field(s)", fields.len()));
        };
        let seq = seq.parse().map_err(|_| format!("bad sequence number `{seq}`"))?;
        Ok(Self {
            seq,
            subject: subject.into(),
            object: object.into(),
            operation: op.parse().unwrap_or_else(|e| match e {}),
        })
    }
}

/// Parses a trace file: one request per line, `#` comments and blank lines
/// ignored. Sequence numbers must strictly increase.
pub fn parse_trace(text: &str) -> Result<Vec<AccessRequest>, CheckpointError> {
    let mut out: Vec<AccessRequest> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let req = AccessRequest::parse(line).map_err(|message| CheckpointError::Parse { line: i + 1, message })?;
        if let Some(prev) = out.last() {
            if req.seq <= prev.seq {
                return Err(CheckpointError::Parse {
                    line: i + 1,
                    message: format!("sequence number {} does not follow {}", req.seq, prev.seq),
                });
            }
        }
        out.push(req);
    }
    Ok(out)
}

pub fn render_trace(trace: &[AccessRequest]) -> String {
    trace.iter().map(|r| r.render() + "\n").collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Granted,
    Denied,
}

/// First failing gate, or `Ok`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reason {
    Ok,
    WallConflict,
    NoRight,
    UnknownPrincipal,
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reason::Ok => "Ok",
            Reason::WallConflict => "WallConflict",
            Reason::NoRight => "NoRight",
            Reason::UnknownPrincipal => "UnknownPrincipal",
        })
    }
}

impl FromStr for Reason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Ok" => Ok(Reason::Ok),
            "WallConflict" => Ok(Reason::WallConflict),
            "NoRight" => Ok(Reason::NoRight),
            "UnknownPrincipal" => Ok(Reason::UnknownPrincipal),
            other => Err(format!("unknown reason `{other}`")),
        }
    }
}

/// The two walls touched by a request, before and after.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WallTransition {
    pub pre_subject: BinarySubjectWall,
    pub pre_object: BinaryObjectWall,
    pub post_subject: BinarySubjectWall,
    pub post_object: BinaryObjectWall,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Decision {
    pub request: AccessRequest,
    pub outcome: Outcome,
    pub reason: Reason,
    /// Version of the state the decision was computed against.
    pub version: StateVersion,
    /// `None` when a principal is unknown.
    pub walls: Option<WallTransition>,
}

impl Decision {
    pub fn is_granted(&self) -> bool {
        self.outcome == Outcome::Granted
    }

    /// `Granted` or `Denied (<Reason>)`.
    pub fn verdict(&self) -> String {
        match self.outcome {
            Outcome::Granted => "Granted".to_string(),
            Outcome::Denied => format!("Denied ({})", self.reason),
        }
    }

    /// Tab-separated: seq, subject, object, op, verdict, version, pre subject
    /// wall, pre object wall, post subject wall, post object wall.
    pub fn render_line(&self) -> String {
        let walls = match &self.walls {
            Some(w) => [
                w.pre_subject.to_string(),
                w.pre_object.to_string(),
                w.post_subject.to_string(),
                w.post_object.to_string(),
            ],
            None => std::array::from_fn(|_| "-".to_string()),
        };
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.request.seq,
            self.request.subject,
            self.request.object,
            self.request.operation,
            self.verdict(),
            self.version,
            walls.join("\t")
        )
    }

    pub fn parse_line(line: &str) -> Result<Self, String> {
        let fields: Vec<&str> = line.split('\t').collect();
        let [seq, subject, object, op, verdict, version, ps, po, qs, qo] = fields[..] else {
            return Err(format!("expected 10 tab-separated fields, got {}", fields.len()));
        };
        let (outcome, reason) = if verdict == "Granted" {
            (Outcome::Granted, Reason::Ok)
        } else {
            let reason = verdict
                .strip_prefix("Denied (")
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(|| format!("bad verdict `{verdict}`"))?;
            (Outcome::Denied, reason.parse()?)
        };
        let walls = if [ps, po, qs, qo].iter().all(|w| *w == "-") {
            None
        } else {
            let e = |e: WallError| e.to_string();
            Some(WallTransition {
                pre_subject: ps.parse().map_err(e)?,
                pre_object: po.parse().map_err(e)?,
                post_subject: qs.parse().map_err(e)?,
                post_object: qo.parse().map_err(e)?,
            })
        };
        Ok(Decision {
            request: AccessRequest {
                seq: seq.parse().map_err(|_| format!("bad sequence number `{seq}`"))?,
                subject: subject.into(),
                object: object.into(),
                operation: op.parse().unwrap_or_else(|e| match e {}),
            },
            outcome,
            reason,
            version: StateVersion(version.parse().map_err(|_| format!("bad version `{version}`"))?),
            walls,
        })
    }

    /// `seq GRANTED|DENIED reason`, the service response line.
    pub fn wire_line(&self) -> String {
        let outcome = match self.outcome {
            Outcome::Granted => "GRANTED",
            Outcome::Denied => "DENIED",
        };
        format!("{} {} {}", self.request.seq, outcome, self.reason)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditRecord {
    pub timestamp: DateTime<Utc>,
    pub decision: Decision,
}

impl AuditRecord {
    pub fn now(decision: Decision) -> Self {
        Self {
            timestamp: Utc::now(),
            decision,
        }
    }

    pub fn render_line(&self) -> String {
        format!(
            "{}\t{}",
            self.timestamp.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            self.decision.render_line()
        )
    }

    pub fn parse_line(line: &str) -> Result<Self, String> {
        let (ts, rest) = line.split_once('\t').ok_or("missing timestamp")?;
        let timestamp = DateTime::parse_from_rfc3339(ts)
            .map_err(|e| format!("bad timestamp `{ts}`: {e}"))?
            .with_timezone(&Utc);
        Ok(Self {
            timestamp,
            decision: Decision::parse_line(rest)?,
        })
    }
}

/// Destination for audit records.
pub trait AuditSink {
    fn append(&mut self, record: AuditRecord) -> Result<(), CheckpointError>;
}

impl AuditSink for Vec<AuditRecord> {
    fn append(&mut self, record: AuditRecord) -> Result<(), CheckpointError> {
        self.push(record);
        Ok(())
    }
}

/// Discards records.
pub struct NullSink;

impl AuditSink for NullSink {
    fn append(&mut self, _: AuditRecord) -> Result<(), CheckpointError> {
        Ok(())
    }
}

/// Decides `req` against `state` without touching it.
///
/// Granted iff the walls admit the access and the operation is in the
/// subject role's rights on the object. Walls are checked first.
pub fn authorize(state: &EngineState, req: &AccessRequest) -> Result<Decision, CheckpointError> {
    let policy = state.policy();
    let principals = policy
        .user(&req.subject)
        .zip(state.subject_wall(&req.subject))
        .zip(state.object_wall(&req.object));
    let Some(((user, sw), ow)) = principals else {
        return Ok(Decision {
            request: req.clone(),
            outcome: Outcome::Denied,
            reason: Reason::UnknownPrincipal,
            version: state.version(),
            walls: None,
        });
    };

    let unchanged = || WallTransition {
        pre_subject: sw.clone(),
        pre_object: ow.clone(),
        post_subject: sw.clone(),
        post_object: ow.clone(),
    };
    let denied = |reason| Decision {
        request: req.clone(),
        outcome: Outcome::Denied,
        reason,
        version: state.version(),
        walls: Some(unchanged()),
    };

    if !check_access(sw, ow)? {
        return Ok(denied(Reason::WallConflict));
    }
    let permitted = req.operation.kind().filter(|op| {
        policy.rights().get(&req.object, &user.role).contains(op)
            && policy.role(&user.role).is_some_and(|r| r.operations.contains(op))
    });
    let Some(op) = permitted else {
        return Ok(denied(Reason::NoRight));
    };

    let mut walls = unchanged();
    match op {
        OperationKind::Read => walls.post_subject = update_on_read(sw, ow)?,
        OperationKind::Write => walls.post_object = update_on_write(ow, sw)?,
    }
    Ok(Decision {
        request: req.clone(),
        outcome: Outcome::Granted,
        reason: Reason::Ok,
        version: state.version(),
        walls: Some(walls),
    })
}

/// Installs a decision computed by [`authorize`] against this exact state
/// version. Denied decisions leave the walls alone. Every call appends one
/// audit record and bumps the version.
pub fn apply(state: &mut EngineState, decision: &Decision, sink: &mut dyn AuditSink) -> Result<(), CheckpointError> {
    if decision.version != state.version() {
        return Err(CheckpointError::StaleDecision {
            decided: decision.version,
            current: state.version(),
        });
    }
    if let (Outcome::Granted, Some(w)) = (decision.outcome, &decision.walls) {
        state.install(
            &decision.request.subject,
            w.post_subject.clone(),
            &decision.request.object,
            w.post_object.clone(),
        );
    }
    sink.append(AuditRecord::now(decision.clone()))?;
    state.bump();
    Ok(())
}

/// Authorizes and applies each request in order.
pub fn replay(
    state: &mut EngineState,
    trace: &[AccessRequest],
    sink: &mut dyn AuditSink,
) -> Result<Vec<Decision>, CheckpointError> {
    let mut decisions = Vec::with_capacity(trace.len());
    let mut previous: Option<u64> = None;
    for req in trace {
        if let Some(prev) = previous {
            if req.seq <= prev {
                return Err(CheckpointError::NonMonotoneSequence {
                    previous: prev,
                    seq: req.seq,
                });
            }
        }
        previous = Some(req.seq);
        let decision = authorize(state, req)?;
        apply(state, &decision, sink)?;
        decisions.push(decision);
    }
    Ok(decisions)
}
