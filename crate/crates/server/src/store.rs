//! On-disk sessions: an append-only JSON-lines journal per session plus a
//! snapshot rewritten whenever a background job finishes.
//!
//! Layout: `<root>/sessions/<id>/journal.jsonl` and `snapshot.json`.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::session::{run_job, Event, JobError, Replay, Session, SessionConfig, SessionError, Status};

pub const JOURNAL: &str = "journal.jsonl";
pub const SNAPSHOT: &str = "snapshot.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("storage failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt session file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error(transparent)]
    Job(#[from] JobError),
}

#[derive(Serialize, Deserialize)]
struct JournalLine {
    seq: u64,
    #[serde(flatten)]
    event: Event,
}

#[derive(Serialize, Deserialize)]
struct SnapshotFile {
    seq: u64,
    session: Session,
}

/// Stable id derived from the creating request's id.
pub fn session_id_for(request_id: &str) -> String {
    let digest = Sha256::digest(format!("session:{request_id}").as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Fingerprint of a request body for replay detection.
pub fn fingerprint(route: &str, body: &impl Serialize) -> String {
    let text = serde_json::to_string(body).expect("request bodies serialize");
    let digest = Sha256::digest(format!("{route}\n{text}").as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// One session: serialized writers, lock-free-ish readers of the latest state.
pub struct Handle {
    dir: PathBuf,
    journal: Mutex<File>,
    state: RwLock<Arc<Session>>,
    job_running: AtomicBool,
}

impl Handle {
    /// Consistent view of the session at some point in time.
    pub fn snapshot(&self) -> Arc<Session> {
        self.state.read().expect("state lock").clone()
    }

    /// Runs `f` under the write lock. If it yields an event, the event is
    /// journaled (and synced) before being applied and before `f`'s response
    /// is returned.
    pub fn mutate<R>(&self, f: impl FnOnce(&Session) -> Result<(Option<Event>, R), SessionError>) -> Result<R, StoreError> {
        let mut journal = self.journal.lock().expect("journal lock");
        let cur = self.snapshot();
        let (event, out) = f(&cur)?;
        if let Some(ev) = event {
            let mut next = (*cur).clone();
            next.apply(ev.clone());
            let line = serde_json::to_string(&JournalLine { seq: next.seq, event: ev }).expect("events serialize");
            journal.write_all(line.as_bytes())?;
            journal.write_all(b"\n")?;
            journal.sync_data()?;
            *self.state.write().expect("state lock") = Arc::new(next);
        }
        Ok(out)
    }

    /// Applies a request if its id is new, or replays the stored response.
    pub fn request<F>(&self, request_id: &str, fingerprint: &str, f: F) -> Result<serde_json::Value, StoreError>
    where
        F: FnOnce(&Session) -> Result<(Event, serde_json::Value), SessionError>,
    {
        self.mutate(|s| match s.replay(request_id, fingerprint)? {
            Replay::Stored(v) => Ok((None, v)),
            Replay::Fresh => {
                let (ev, resp) = f(s)?;
                Ok((Some(ev), resp))
            }
        })
    }

    pub fn write_snapshot(&self) -> Result<(), StoreError> {
        let _guard = self.journal.lock().expect("journal lock");
        let s = self.snapshot();
        let text = serde_json::to_string(&SnapshotFile { seq: s.seq, session: (*s).clone() }).expect("sessions serialize");
        let tmp = self.dir.join(format!("{SNAPSHOT}.tmp"));
        {
            let mut f = File::create(&tmp)?;
            f.write_all(text.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(tmp, self.dir.join(SNAPSHOT))?;
        Ok(())
    }

    /// Whether a background job is owed and not already running.
    pub fn needs_job(&self) -> bool {
        self.snapshot().status == Status::Training && !self.job_running.load(Ordering::SeqCst)
    }

    /// Runs the pending job (if any) to completion on the calling thread.
    /// Returns false if another caller is already running it.
    pub fn run_pending_job(&self) -> Result<bool, StoreError> {
        if self.job_running.swap(true, Ordering::SeqCst) {
            return Ok(false);
        }
        let result = (|| {
            let start = self.snapshot();
            if start.status != Status::Training {
                return Ok(());
            }
            let ev = run_job(&start)?;
            self.mutate(|s| {
                // a job only ever follows the state it was computed from
                if s.seq != start.seq {
                    return Err(SessionError::State { status: s.status, action: "finishing the job" });
                }
                Ok((Some(ev), ()))
            })?;
            self.write_snapshot()
        })();
        self.job_running.store(false, Ordering::SeqCst);
        result.map(|_| true)
    }
}

/// All sessions under one data directory.
pub struct Store {
    root: PathBuf,
    sessions: Mutex<BTreeMap<String, Arc<Handle>>>,
}

impl Store {
    /// Opens `root`, loading every session found on disk.
    pub fn open(root: &Path) -> Result<Self, StoreError> {
        let dir = root.join("sessions");
        fs::create_dir_all(&dir)?;
        let mut sessions = BTreeMap::new();
        let mut entries: Vec<_> = fs::read_dir(&dir)?.collect::<Result<Vec<_>, _>>()?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            if e.file_type()?.is_dir() && e.path().join(JOURNAL).exists() {
                let h = load(&e.path())?;
                sessions.insert(h.snapshot().id.clone(), Arc::new(h));
            }
        }
        Ok(Self { root: root.to_path_buf(), sessions: Mutex::new(sessions) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn get(&self, id: &str) -> Result<Arc<Handle>, StoreError> {
        self.sessions
            .lock()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::NotFound(id.to_string()).into())
    }

    pub fn ids(&self) -> Vec<String> {
        self.sessions.lock().expect("session map lock").keys().cloned().collect()
    }

    /// Creates a session (idempotent per request id). Returns the handle and
    /// whether it was newly created.
    pub fn create(&self, config: SessionConfig, request_id: &str) -> Result<(Arc<Handle>, bool), StoreError> {
        config.validate()?;
        let fp = fingerprint("POST /sessions", &config);
        let id = session_id_for(request_id);
        let mut map = self.sessions.lock().expect("session map lock");
        if let Some(h) = map.get(&id) {
            match h.snapshot().replay(request_id, &fp)? {
                Replay::Stored(_) => return Ok((h.clone(), false)),
                Replay::Fresh => {
                    return Err(SessionError::Conflict { message: format!("session {id} already exists"), indices: vec![] }.into())
                }
            }
        }
        let dir = self.root.join("sessions").join(&id);
        fs::create_dir_all(&dir)?;
        let ev = Event::Created { id: id.clone(), config, request_id: request_id.to_string(), fingerprint: fp };
        let session = Session::new(&ev);
        let mut journal = OpenOptions::new().create(true).truncate(true).write(true).open(dir.join(JOURNAL))?;
        let line = serde_json::to_string(&JournalLine { seq: session.seq, event: ev }).expect("events serialize");
        journal.write_all(line.as_bytes())?;
        journal.write_all(b"\n")?;
        journal.sync_data()?;
        let h = Arc::new(Handle {
            dir,
            journal: Mutex::new(journal),
            state: RwLock::new(Arc::new(session)),
            job_running: AtomicBool::new(false),
        });
        map.insert(id, h.clone());
        Ok((h, true))
    }
}

fn corrupt(path: &Path, message: impl ToString) -> StoreError {
    StoreError::Corrupt { path: path.to_path_buf(), message: message.to_string() }
}

/// Rebuilds a session from its snapshot and the journal lines after it. A
/// torn final line (crash mid-append) is dropped and truncated away.
fn load(dir: &Path) -> Result<Handle, StoreError> {
    let jpath = dir.join(JOURNAL);
    let mut session: Option<Session> = None;
    let spath = dir.join(SNAPSHOT);
    if spath.exists() {
        let snap: SnapshotFile = serde_json::from_str(&fs::read_to_string(&spath)?).map_err(|e| corrupt(&spath, e))?;
        session = Some(snap.session);
    }
    let reader = BufReader::new(File::open(&jpath)?);
    let mut good_len = 0u64;
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
    let count = lines.len();
    for (i, line) in lines.into_iter().enumerate() {
        let parsed: Result<JournalLine, _> = serde_json::from_str(&line);
        let jl = match parsed {
            Ok(jl) => jl,
            Err(_) if i + 1 == count => break,
            Err(e) => return Err(corrupt(&jpath, format!("line {}: {e}", i + 1))),
        };
        good_len += line.len() as u64 + 1;
        match (&mut session, jl.event) {
            (None, ev @ Event::Created { .. }) => session = Some(Session::new(&ev)),
            (None, _) => return Err(corrupt(&jpath, "journal does not start with a created event")),
            (Some(s), ev) => {
                if jl.seq <= s.seq {
                    continue;
                }
                if jl.seq != s.seq + 1 {
                    return Err(corrupt(&jpath, format!("gap before event {}", jl.seq)));
                }
                s.apply(ev);
            }
        }
    }
    let session = session.ok_or_else(|| corrupt(&jpath, "empty journal"))?;
    let journal = OpenOptions::new().write(true).open(&jpath)?;
    journal.set_len(good_len)?;
    let mut journal = OpenOptions::new().append(true).open(&jpath)?;
    journal.flush()?;
    Ok(Handle {
        dir: dir.to_path_buf(),
        journal: Mutex::new(journal),
        state: RwLock::new(Arc::new(session)),
        job_running: AtomicBool::new(false),
    })
}
