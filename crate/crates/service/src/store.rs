//! Session registry with on-disk snapshots.
//!
//! Each session keeps its dataset in `<id>.dataset.json`, written once, and
//! the run state in `<id>.run.json`, rewritten after every mutation.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use labelopt_core::model::Dataset;
use labelopt_core::pipeline::OpalRun;
use parking_lot::{Mutex, RwLock};

pub struct Session {
    pub id: String,
    pub dataset: Arc<Dataset>,
    run: RwLock<Arc<OpalRun>>,
    /// Serializes mutations.
    pub(crate) writer: Arc<tokio::sync::Mutex<()>>,
    optimizing: AtomicBool,
    last_error: Mutex<Option<String>>,
}

impl Session {
    fn new(id: String, dataset: Dataset, run: OpalRun) -> Self {
        Self {
            id,
            dataset: Arc::new(dataset),
            run: RwLock::new(Arc::new(run)),
            writer: Arc::new(tokio::sync::Mutex::new(())),
            optimizing: AtomicBool::new(false),
            last_error: Mutex::new(None),
        }
    }

    /// Current run state; never blocks on writers.
    pub fn run(&self) -> Arc<OpalRun> {
        self.run.read().clone()
    }

    pub(crate) fn replace(&self, run: OpalRun) {
        *self.run.write() = Arc::new(run);
    }

    pub fn optimizing(&self) -> bool {
        self.optimizing.load(Ordering::SeqCst)
    }

    pub(crate) fn set_optimizing(&self, on: bool) {
        self.optimizing.store(on, Ordering::SeqCst);
    }

    pub fn last_error(&self) -> Option<String> {
        self.last_error.lock().clone()
    }

    pub(crate) fn set_last_error(&self, e: Option<String>) {
        *self.last_error.lock() = e;
    }
}

pub struct Store {
    dir: PathBuf,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

fn invalid(e: serde_json::Error) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e)
}

impl Store {
    /// Opens `dir`, creating it if needed, and restores every saved session.
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            let Some(id) = name.strip_suffix(".run.json") else {
                continue;
            };
            let run: OpalRun = serde_json::from_slice(&fs::read(&path)?).map_err(invalid)?;
            let dataset: Dataset =
                serde_json::from_slice(&fs::read(dir.join(format!("{id}.dataset.json")))?).map_err(invalid)?;
            log::info!("restored session {id}");
            sessions.insert(id.to_string(), Arc::new(Session::new(id.to_string(), dataset, run)));
        }
        Ok(Self {
            dir,
            sessions: RwLock::new(sessions),
        })
    }

    pub fn get(&self, id: &str) -> Option<Arc<Session>> {
        self.sessions.read().get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, id: String, dataset: Dataset, run: OpalRun) -> io::Result<Arc<Session>> {
        let bytes = serde_json::to_vec(&dataset).map_err(invalid)?;
        write_atomic(&self.dir.join(format!("{id}.dataset.json")), &bytes)?;
        self.persist(&id, &run)?;
        let session = Arc::new(Session::new(id.clone(), dataset, run));
        self.sessions.write().insert(id, session.clone());
        Ok(session)
    }

    pub fn persist(&self, id: &str, run: &OpalRun) -> io::Result<()> {
        let bytes = serde_json::to_vec(run).map_err(invalid)?;
        write_atomic(&self.dir.join(format!("{id}.run.json")), &bytes)
    }
}
