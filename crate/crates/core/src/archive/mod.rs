//! Append-only archive: one JSON record per line in a single file. A
//! dedicated writer thread serializes appends; readers parse the file.

mod export;
mod stats;

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BuildRecord, ModelError, PatchCandidate, ReproductionResult, RunStatistics, Timestamp, TriageVerdict};

pub use export::{build_table, export_report, ReportFormat, Table, TableKind};
pub use stats::{compute_statistics, percent, taxonomy_percentages, Percent};

pub const SCHEMA_VERSION: u32 = 1;
/// Appends waiting for the writer before `append` blocks.
const QUEUE_DEPTH: usize = 64;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("archive i/o: {0}")]
    Io(#[from] io::Error),
    #[error("schema violation: {0}")]
    Schema(#[from] ModelError),
    #[error("corrupt archive line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("archive writer has stopped")]
    Closed,
}

/// A build seen by the scanner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildEntry {
    pub build: BuildRecord,
    pub interesting: bool,
    /// Scanner diagnostic for builds that were not kept.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub screening: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReproductionEntry {
    pub result: ReproductionResult,
    /// Step-by-step detail, one line per step.
    pub steps: Vec<String>,
    /// Source manifest of the reproduced tree (path, sha256).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub manifest: Vec<(String, String)>,
}

/// A patch with the timestamps needed for response-time analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchEntry {
    pub patch: PatchCandidate,
    /// Commit time of the failing revision.
    pub committed_at: Option<Timestamp>,
    pub attempt_started_at: Timestamp,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    FeedError,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunEntry {
    pub status: RunStatus,
    pub stats: RunStatistics,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalEntry {
    pub patch_id: String,
    pub branch: String,
    pub repository: String,
    pub commit: String,
    pub proposed_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Payload {
    Build(BuildEntry),
    Reproduction(Box<ReproductionEntry>),
    Patch(PatchEntry),
    Verdict(TriageVerdict),
    Run(Box<RunEntry>),
    Proposal(ProposalEntry),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Build(_) => "build",
            Payload::Reproduction(_) => "reproduction",
            Payload::Patch(_) => "patch",
            Payload::Verdict(_) => "verdict",
            Payload::Run(_) => "run",
            Payload::Proposal(_) => "proposal",
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            Payload::Build(b) => b.build.validate(),
            Payload::Reproduction(r) => r.result.validate(),
            Payload::Patch(p) => p.patch.validate(),
            Payload::Verdict(v) => v.validate(),
            Payload::Run(r) => r.stats.validate(),
            Payload::Proposal(_) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub seq: u64,
    pub schema_version: u32,
    pub written_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    #[serde(flatten)]
    pub payload: Payload,
}

type Reply = SyncSender<Result<u64, String>>;

struct Writer {
    file: File,
    next_seq: u64,
}

impl Writer {
    fn write(&mut self, run_id: Option<String>, payload: Payload) -> Result<u64, String> {
        let record = ArchiveRecord {
            seq: self.next_seq,
            schema_version: SCHEMA_VERSION,
            written_at: Timestamp::now(),
            run_id,
            payload,
        };
        let mut line = serde_json::to_vec(&record).map_err(|e| e.to_string())?;
        line.push(b'\n');
        // One write per record, so a kill leaves at most a partial last line.
        self.file.write_all(&line).map_err(|e| e.to_string())?;
        self.next_seq += 1;
        Ok(record.seq)
    }
}

struct Inner {
    path: PathBuf,
    tx: Mutex<Option<SyncSender<(Option<String>, Payload, Reply)>>>,
    handle: Mutex<Option<JoinHandle<()>>>,
}

impl Drop for Inner {
    fn drop(&mut self) {
        self.tx.lock().unwrap().take();
        if let Some(h) = self.handle.lock().unwrap().take() {
            let _ = h.join();
        }
    }
}

/// Handle to an open archive. Clones share one writer.
#[derive(Clone)]
pub struct Archive {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Archive {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Archive").field("path", &self.inner.path).finish()
    }
}

impl Archive {
    /// Opens or creates the archive at `path`. A partial last line left by
    /// an interrupted write is cut off.
    pub fn open(path: impl AsRef<Path>) -> Result<Archive, ArchiveError> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let data = match fs::read(&path) {
            Ok(d) => d,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let complete = data.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
        let records = parse_lines(&data[..complete])?;
        let file = OpenOptions::new().create(true).append(true).read(true).open(&path)?;
        if complete < data.len() {
            log::warn!("{}: dropping {} bytes of partial record", path.display(), data.len() - complete);
            file.set_len(complete as u64)?;
        }
        let next_seq = records.last().map_or(0, |r| r.seq + 1);
        let (tx, rx) = sync_channel(QUEUE_DEPTH);
        let writer = Writer { file, next_seq };
        let handle = std::thread::Builder::new()
            .name("archive-writer".into())
            .spawn(move || writer_loop(writer, rx))?;
        Ok(Archive {
            inner: Arc::new(Inner { path, tx: Mutex::new(Some(tx)), handle: Mutex::new(Some(handle)) }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.inner.path
    }

    /// Validates and appends a record; returns its sequence number once it
    /// has been written.
    pub fn append(&self, run_id: Option<&str>, payload: Payload) -> Result<u64, ArchiveError> {
        payload.validate()?;
        let tx = self.inner.tx.lock().unwrap().clone().ok_or(ArchiveError::Closed)?;
        let (reply_tx, reply_rx) = sync_channel(1);
        tx.send((run_id.map(String::from), payload, reply_tx)).map_err(|_| ArchiveError::Closed)?;
        match reply_rx.recv() {
            Ok(Ok(seq)) => Ok(seq),
            Ok(Err(e)) => Err(ArchiveError::Io(io::Error::other(e))),
            Err(_) => Err(ArchiveError::Closed),
        }
    }

    pub fn records(&self) -> Result<Vec<ArchiveRecord>, ArchiveError> {
        read_archive(&self.inner.path)
    }
}

fn writer_loop(mut writer: Writer, rx: Receiver<(Option<String>, Payload, Reply)>) {
    for (run_id, payload, reply) in rx {
        let _ = reply.send(writer.write(run_id, payload));
    }
}

fn parse_lines(data: &[u8]) -> Result<Vec<ArchiveRecord>, ArchiveError> {
    let mut out = Vec::new();
    for (i, line) in data.split(|b| *b == b'\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        let r: ArchiveRecord =
            serde_json::from_slice(line).map_err(|e| ArchiveError::Corrupt { line: i + 1, reason: e.to_string() })?;
        out.push(r);
    }
    Ok(out)
}

/// Every complete record in the file; a partial last line is ignored.
/// A missing file reads as empty.
pub fn read_archive(path: &Path) -> Result<Vec<ArchiveRecord>, ArchiveError> {
    let data = match fs::read(path) {
        Ok(d) => d,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let complete = data.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    parse_lines(&data[..complete])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{TriageVerdict, Verdict};

    fn verdict(id: &str) -> Payload {
        Payload::Verdict(TriageVerdict {
            patch_id: id.into(),
            verdict: Verdict::Correct,
            analyst_id: "a".into(),
            note: String::new(),
            decided_at: Timestamp::from_unix(5),
        })
    }

    #[test]
    fn append_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let a = Archive::open(dir.path().join("archive.jsonl")).unwrap();
        let s0 = a.append(None, verdict("p0")).unwrap();
        let s1 = a.append(Some("r1"), verdict("p1")).unwrap();
        assert!(s1 > s0);
        let recs = a.records().unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].payload, verdict("p1"));
        assert_eq!(recs[1].run_id.as_deref(), Some("r1"));
        let line = fs::read_to_string(a.path()).unwrap();
        assert!(line.starts_with("{\"seq\":0,\"schema_version\":1,"), "{line}");
        assert!(line.contains("\"kind\":\"verdict\""));
    }

    #[test]
    fn schema_violations_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = Archive::open(dir.path().join("a.jsonl")).unwrap();
        let mut bad = verdict("p");
        if let Payload::Verdict(v) = &mut bad {
            v.verdict = Verdict::Pending;
        }
        assert!(matches!(a.append(None, bad), Err(ArchiveError::Schema(_))));
        assert!(a.records().unwrap().is_empty());
    }

    #[test]
    fn partial_tail_is_dropped_and_sequence_continues() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        {
            let a = Archive::open(&path).unwrap();
            a.append(None, verdict("p0")).unwrap();
            a.append(None, verdict("p1")).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"seq\":2,\"schema_ver").unwrap();
        drop(f);
        assert_eq!(read_archive(&path).unwrap().len(), 2);
        let a = Archive::open(&path).unwrap();
        assert_eq!(a.append(None, verdict("p2")).unwrap(), 2);
        let recs = read_archive(&path).unwrap();
        assert_eq!(recs.iter().map(|r| r.seq).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn corrupt_complete_lines_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        fs::write(&path, "not json\n").unwrap();
        assert!(matches!(read_archive(&path), Err(ArchiveError::Corrupt { line: 1, .. })));
        assert!(Archive::open(&path).is_err());
    }
}
