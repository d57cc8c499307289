use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use tokio::sync::broadcast;

use flowforge::catalog::{CatalogError, CatalogStore, EnvironmentCatalog};
use flowforge::orchestrator::{EventPayload, GenerationSession, Orchestrator, SessionEvent, SubTaskRecord};
use flowforge::protocol::GeneratorRegistry;
use flowforge::retriever::LexicalIndex;

use crate::config::{ConfigError, ServiceConfig};

/// One catalog with its index and orchestrator. Replaced as a whole on
/// reload; running sessions keep the engine they started with.
pub struct Engine {
    pub catalog: Arc<EnvironmentCatalog>,
    pub index: Arc<LexicalIndex>,
    pub orchestrator: Orchestrator,
}

/// A live session and its event log.
pub struct SessionHandle {
    pub engine: Arc<Engine>,
    pub session: Arc<tokio::sync::Mutex<GenerationSession>>,
    pub cancel: Arc<AtomicBool>,
    /// Set while a command runs in the background.
    pub running: AtomicBool,
    log: Arc<EventLog>,
}

struct EventLog {
    events: Mutex<Vec<SessionEvent>>,
    tx: broadcast::Sender<SessionEvent>,
}

impl SessionHandle {
    fn new(engine: Arc<Engine>, mut session: GenerationSession) -> Self {
        let (tx, _) = broadcast::channel(256);
        let log = Arc::new(EventLog {
            events: Mutex::new(Vec::new()),
            tx,
        });
        let sink = log.clone();
        session.set_sink(Arc::new(move |e: &SessionEvent| {
            let mut events = sink.events.lock().unwrap();
            events.push(e.clone());
            let _ = sink.tx.send(e.clone());
        }));
        Self {
            engine,
            cancel: session.cancel_handle(),
            session: Arc::new(tokio::sync::Mutex::new(session)),
            running: AtomicBool::new(false),
            log,
        }
    }

    /// Events after `after` plus a receiver for later ones, taken together
    /// so that nothing falls between them.
    pub fn subscribe(&self, after: u64) -> (Vec<SessionEvent>, broadcast::Receiver<SessionEvent>) {
        let events = self.log.events.lock().unwrap();
        let backlog = events.iter().filter(|e| e.seq > after).cloned().collect();
        (backlog, self.log.tx.subscribe())
    }

    pub fn events_after(&self, after: u64) -> Vec<SessionEvent> {
        self.subscribe(after).0
    }
}

pub fn is_terminal(e: &SessionEvent) -> bool {
    matches!(
        e.payload,
        EventPayload::Completed { .. } | EventPayload::Stopped { .. } | EventPayload::Failed { .. }
    )
}

pub struct AppState {
    pub config: ServiceConfig,
    registry: GeneratorRegistry,
    store: CatalogStore,
    engine: RwLock<Arc<Engine>>,
    session_ids: Arc<AtomicU64>,
    sessions: Mutex<HashMap<String, Arc<SessionHandle>>>,
    transcripts: Mutex<HashMap<String, SubTaskRecord>>,
    transcript_ids: AtomicU64,
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Result<Arc<Self>, StartupError> {
        let registry = crate::registry(&config);
        Self::with_registry(config, registry)
    }

    pub fn with_registry(config: ServiceConfig, registry: GeneratorRegistry) -> Result<Arc<Self>, StartupError> {
        config.check(&registry)?;
        let store = CatalogStore::open(&config.catalog_dir)?;
        let session_ids = Arc::new(AtomicU64::new(1));
        let engine = build_engine(&config, &registry, store.current(), &session_ids);
        Ok(Arc::new(Self {
            config,
            registry,
            store,
            engine: RwLock::new(engine),
            session_ids,
            sessions: Mutex::new(HashMap::new()),
            transcripts: Mutex::new(HashMap::new()),
            transcript_ids: AtomicU64::new(1),
        }))
    }

    pub fn engine(&self) -> Arc<Engine> {
        self.engine.read().unwrap().clone()
    }

    /// Rereads the catalog directory and swaps in a new engine.
    pub fn reload(&self) -> Result<Arc<Engine>, CatalogError> {
        let catalog = self.store.reload()?;
        let engine = build_engine(&self.config, &self.registry, catalog, &self.session_ids);
        *self.engine.write().unwrap() = engine.clone();
        Ok(engine)
    }

    pub fn add_session(&self, engine: Arc<Engine>, session: GenerationSession) -> Arc<SessionHandle> {
        let id = session.id.clone();
        let handle = Arc::new(SessionHandle::new(engine, session));
        self.sessions.lock().unwrap().insert(id, handle.clone());
        handle
    }

    pub fn session(&self, id: &str) -> Option<Arc<SessionHandle>> {
        self.sessions.lock().unwrap().get(id).cloned()
    }

    pub fn keep_transcript(&self, record: SubTaskRecord) -> String {
        let id = format!("t{:06}", self.transcript_ids.fetch_add(1, Ordering::SeqCst));
        self.transcripts.lock().unwrap().insert(id.clone(), record);
        id
    }

    pub fn transcript(&self, id: &str) -> Option<SubTaskRecord> {
        self.transcripts.lock().unwrap().get(id).cloned()
    }
}

fn build_engine(
    config: &ServiceConfig,
    registry: &GeneratorRegistry,
    catalog: Arc<EnvironmentCatalog>,
    ids: &Arc<AtomicU64>,
) -> Arc<Engine> {
    let index = Arc::new(
        LexicalIndex::build_or_load(&config.index_dir, &catalog)
            .map(|(idx, _)| idx)
            .unwrap_or_else(|_| LexicalIndex::build(&catalog)),
    );
    let generator = registry
        .create(&config.generator_name, catalog.clone())
        .expect("generator checked at startup");
    let orchestrator = Orchestrator::new(catalog.clone(), index.clone(), generator, config.orchestration())
        .with_session_ids(ids.clone());
    Arc::new(Engine {
        catalog,
        index,
        orchestrator,
    })
}
