//! Line-oriented decision service.
//!
//! One request per line in, one decision per line out. Every connection
//! shares a single engine behind a mutex, so requests are decided and
//! applied strictly one at a time in arrival order.

use std::io::{self, BufRead, BufReader, Write};
use std::os::unix::net::{UnixListener, UnixStream};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::thread;

use anyhow::{Context, Result};

use cwall_core::checkpoint::{apply, authorize, AccessRequest, NullSink};
use cwall_core::store::{persist_snapshot, AuditLog, EngineState};

pub struct Service {
    state: EngineState,
    audit: Option<AuditLog>,
    snapshot: Option<PathBuf>,
}

impl Service {
    pub fn new(state: EngineState, audit: Option<AuditLog>, snapshot: Option<PathBuf>) -> Self {
        Self { state, audit, snapshot }
    }

    /// Answers one request line. Blank lines get no answer.
    pub fn handle(&mut self, line: &str) -> Option<String> {
        let line = line.trim();
        if line.is_empty() {
            return None;
        }
        Some(self.decide(line).unwrap_or_else(|e| format!("ERROR {e:#}")))
    }

    fn decide(&mut self, line: &str) -> Result<String> {
        let request = AccessRequest::parse(line).map_err(anyhow::Error::msg)?;
        let decision = authorize(&self.state, &request)?;
        match &mut self.audit {
            Some(log) => apply(&mut self.state, &decision, log)?,
            None => apply(&mut self.state, &decision, &mut NullSink)?,
        }
        if let Some(path) = &self.snapshot {
            persist_snapshot(path, &self.state)?;
        }
        Ok(decision.wire_line())
    }
}

fn answer(service: &Mutex<Service>, reader: impl BufRead, mut writer: impl Write) -> io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        let reply = service.lock().unwrap_or_else(|p| p.into_inner()).handle(&line);
        if let Some(reply) = reply {
            writeln!(writer, "{reply}")?;
            writer.flush()?;
        }
    }
    Ok(())
}

pub fn stdio(service: Service) -> Result<()> {
    let service = Mutex::new(service);
    answer(&service, io::stdin().lock(), io::stdout().lock()).context("stdio")
}

pub fn listen(service: Service, path: &Path) -> Result<()> {
    if path.exists() {
        std::fs::remove_file(path).with_context(|| format!("cannot replace {}", path.display()))?;
    }
    let listener = UnixListener::bind(path).with_context(|| format!("cannot bind {}", path.display()))?;
    let service = Arc::new(Mutex::new(service));
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                eprintln!("cwall: accept failed: {e}");
                continue;
            }
        };
        let service = Arc::clone(&service);
        thread::spawn(move || {
            if let Err(e) = connection(&service, stream) {
                eprintln!("cwall: connection dropped: {e}");
            }
        });
    }
    Ok(())
}

fn connection(service: &Mutex<Service>, stream: UnixStream) -> io::Result<()> {
    let reader = BufReader::new(stream.try_clone()?);
    answer(service, reader, stream)
}
