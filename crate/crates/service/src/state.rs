use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use captain_core::annotation::{load_bundle, Corpus, CorpusEntry, Skeleton};
use captain_core::index::{CompositionModel, Decomposer, FeatureRecord};
use captain_core::matching::ShotReport;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::wire::{DecompositionSummary, ModelInfo, RankResponse};

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    pub model: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    /// Sessions are read from and written back to this JSON file.
    pub snapshot: Option<PathBuf>,
}

/// A loaded model and the decomposer configured from its directory.
#[derive(Debug)]
pub struct Engine {
    pub model: CompositionModel,
    pub decomposer: Decomposer,
    pub path: Option<PathBuf>,
    pub generation: u64,
}

impl Engine {
    pub fn info(&self) -> ModelInfo {
        ModelInfo {
            path: self.path.as_ref().map(|p| p.display().to_string()),
            rows: self.model.len(),
            has_classifier: self.decomposer.svm.is_some(),
            has_clusters: self.decomposer.clusters.is_some(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub summary: DecompositionSummary,
    pub query: FeatureRecord,
    pub last_rank: Option<RankResponse>,
    /// Weights of the last ranking as the client sent them; shots are scored
    /// with these.
    pub raw_weights: Option<[f64; 6]>,
    /// Engine generation the cached ranking was computed against.
    #[serde(skip)]
    pub rank_generation: u64,
    pub preferred: Vec<String>,
    pub ignored: Vec<String>,
    pub last_shots: Option<ShotReport>,
}

/// `GET /sessions/{id}`: the session without its feature record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub summary: DecompositionSummary,
    pub last_rank: Option<RankResponse>,
    pub preferred: Vec<String>,
    pub ignored: Vec<String>,
    pub last_shots: Option<ShotReport>,
}

impl From<&Session> for SessionView {
    fn from(s: &Session) -> Self {
        SessionView {
            session_id: s.session_id.clone(),
            summary: s.summary.clone(),
            last_rank: s.last_rank.clone(),
            preferred: s.preferred.clone(),
            ignored: s.ignored.clone(),
            last_shots: s.last_shots.clone(),
        }
    }
}

pub type SessionHandle = Arc<tokio::sync::Mutex<Session>>;

/// Shared service state. The model is read-only once loaded; each session
/// has its own lock, so mutations of one session are serialized.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    engine: RwLock<Option<Arc<Engine>>>,
    corpus: RwLock<Arc<BTreeMap<String, CorpusEntry>>>,
    sessions: Mutex<BTreeMap<String, SessionHandle>>,
    next_id: AtomicU64,
    generation: AtomicU64,
    snapshot: Option<PathBuf>,
    saved: Mutex<BTreeMap<String, Session>>,
}

fn load_engine(dir: &Path, generation: u64) -> captain_core::Result<Engine> {
    Ok(Engine {
        model: CompositionModel::load(dir)?,
        decomposer: Decomposer::from_model_dir(dir)?,
        path: Some(dir.to_path_buf()),
        generation,
    })
}

impl AppState {
    pub fn open(config: &ServiceConfig) -> Result<AppState, ServiceError> {
        let engine = config
            .model
            .as_deref()
            .map(|dir| load_engine(dir, 1).map_err(ServiceError::Model))
            .transpose()?;
        let corpus = match &config.corpus {
            Some(root) => Corpus::open_or_scan(root)
                .and_then(|c| c.entries())
                .map_err(ServiceError::Corpus)?,
            None => BTreeMap::new(),
        };
        let sessions = match &config.snapshot {
            Some(path) if path.exists() => read_snapshot(path)?,
            _ => BTreeMap::new(),
        };
        let next = sessions
            .keys()
            .filter_map(|k| k.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()))
            .max()
            .unwrap_or(0)
            + 1;
        let handles = sessions
            .iter()
            .map(|(k, s)| (k.clone(), Arc::new(tokio::sync::Mutex::new(s.clone()))))
            .collect();
        Ok(AppState {
            inner: Arc::new(Inner {
                engine: RwLock::new(engine.map(Arc::new)),
                corpus: RwLock::new(Arc::new(corpus)),
                sessions: Mutex::new(handles),
                next_id: AtomicU64::new(next),
                generation: AtomicU64::new(1),
                snapshot: config.snapshot.clone(),
                saved: Mutex::new(sessions),
            }),
        })
    }

    /// State with an in-memory model, for embedding and tests.
    pub fn with_model(model: CompositionModel, decomposer: Decomposer, corpus: BTreeMap<String, CorpusEntry>) -> AppState {
        let state = AppState::open(&ServiceConfig::default()).expect("empty config opens");
        *state.inner.engine.write().unwrap() = Some(Arc::new(Engine {
            model,
            decomposer,
            path: None,
            generation: 1,
        }));
        *state.inner.corpus.write().unwrap() = Arc::new(corpus);
        state
    }

    pub fn engine(&self) -> Option<Arc<Engine>> {
        self.inner.engine.read().unwrap().clone()
    }

    /// Loads a model directory and swaps it in. Cached rankings computed
    /// against the previous model are not reused.
    pub fn load_model(&self, dir: &Path) -> captain_core::Result<Arc<Engine>> {
        let generation = self.inner.generation.fetch_add(1, Ordering::SeqCst) + 1;
        let engine = Arc::new(load_engine(dir, generation)?);
        *self.inner.engine.write().unwrap() = Some(engine.clone());
        Ok(engine)
    }

    pub fn corpus(&self) -> Arc<BTreeMap<String, CorpusEntry>> {
        self.inner.corpus.read().unwrap().clone()
    }

    /// Dominant skeleton of a corpus image, if its bundle can be read.
    pub fn skeleton_of(corpus: &BTreeMap<String, CorpusEntry>, image_id: &str) -> Option<Skeleton> {
        let entry = corpus.get(image_id)?;
        load_bundle(&entry.dir).ok()?.dominant_person().cloned()
    }

    pub fn session(&self, id: &str) -> Option<SessionHandle> {
        self.inner.sessions.lock().unwrap().get(id).cloned()
    }

    pub fn session_count(&self) -> usize {
        self.inner.sessions.lock().unwrap().len()
    }

    /// Registers a new session under the next sequential id.
    pub fn insert_session(&self, make: impl FnOnce(String) -> Session) -> Result<Session, ServiceError> {
        let n = self.inner.next_id.fetch_add(1, Ordering::SeqCst);
        let session = make(format!("s{n:06}"));
        self.inner
            .sessions
            .lock()
            .unwrap()
            .insert(session.session_id.clone(), Arc::new(tokio::sync::Mutex::new(session.clone())));
        self.persist(&session)?;
        Ok(session)
    }

    /// Records the session's new state in the snapshot, if one is configured.
    pub fn persist(&self, session: &Session) -> Result<(), ServiceError> {
        let Some(path) = &self.inner.snapshot else {
            return Ok(());
        };
        let mut saved = self.inner.saved.lock().unwrap();
        saved.insert(session.session_id.clone(), session.clone());
        write_snapshot(path, &saved)
    }
}

fn read_snapshot(path: &Path) -> Result<BTreeMap<String, Session>, ServiceError> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| ServiceError::Snapshot {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn write_snapshot(path: &Path, sessions: &BTreeMap<String, Session>) -> Result<(), ServiceError> {
    let bytes = serde_json::to_vec(sessions).map_err(|e| ServiceError::Snapshot {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
