//! Loopback HTTP server for exported stores, configs, viewer assets and the
//! selection round-trip.
//!
//! ```text
//! GET  /m<k>/<path>             file under the k-th registered directory
//! GET  /viewer/<path>           viewer assets, when a viewer dir is set
//! GET  /api/selections/m<k>     JSON array of obs ids (default [])
//! POST /api/selections/m<k>     replace it with a JSON array of strings
//! ```
//!
//! Every response carries `Access-Control-Allow-Origin: *`. Range requests
//! are honored for a single `bytes=` range.

mod http;

use std::collections::HashMap;
use std::io::ErrorKind;
use std::net::{IpAddr, Ipv4Addr, SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use indexmap::IndexMap;
use thiserror::Error;
use tokio::sync::oneshot;

pub const PORT_ENV: &str = "PLOTMORPH_PORT";
pub const HOST_ENV: &str = "PLOTMORPH_HOST";

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("refusing to bind non-loopback host {0:?}")]
    NonLoopbackHost(String),
    #[error("invalid {PORT_ENV} value {0:?}")]
    InvalidPort(String),
    #[error("server not started")]
    NotStarted,
    #[error("unknown mount {0:?}")]
    UnknownMount(String),
    #[error("{0} is not a directory")]
    NotADirectory(PathBuf),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct ServerConfig {
    /// Falls back to `PLOTMORPH_PORT`, then an ephemeral port.
    pub port: Option<u16>,
    /// Falls back to `PLOTMORPH_HOST`, then 127.0.0.1. Must be loopback.
    pub host: Option<String>,
    /// Directory served under `/viewer/`.
    pub viewer_dir: Option<PathBuf>,
}

/// A registered directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mount {
    pub uid: String,
    /// `<base_url>/<uid>/`
    pub prefix: String,
}

pub(crate) struct ServerState {
    mounts: RwLock<IndexMap<String, PathBuf>>,
    selections: RwLock<HashMap<String, Arc<Vec<String>>>>,
    viewer_dir: Option<PathBuf>,
}

impl ServerState {
    pub(crate) fn mount_root(&self, uid: &str) -> Option<PathBuf> {
        self.mounts.read().expect("mount lock").get(uid).cloned()
    }

    pub(crate) fn viewer_dir(&self) -> Option<&Path> {
        self.viewer_dir.as_deref()
    }

    pub(crate) fn selection(&self, uid: &str) -> Option<Arc<Vec<String>>> {
        self.selections.read().expect("selection lock").get(uid).cloned()
    }

    pub(crate) fn replace_selection(&self, uid: &str, ids: Vec<String>) -> bool {
        let mut sel = self.selections.write().expect("selection lock");
        match sel.get_mut(uid) {
            Some(slot) => {
                *slot = Arc::new(ids);
                true
            }
            None => false,
        }
    }
}

pub struct Server {
    addr: SocketAddr,
    base_url: String,
    state: Arc<ServerState>,
    shutdown: Mutex<Option<oneshot::Sender<()>>>,
    runtime: Option<tokio::runtime::Runtime>,
}

impl std::fmt::Debug for Server {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Server").field("base_url", &self.base_url).finish_non_exhaustive()
    }
}

fn resolve_host(config: &ServerConfig) -> Result<IpAddr, ServeError> {
    let host = match &config.host {
        Some(h) => h.clone(),
        None => std::env::var(HOST_ENV).unwrap_or_default(),
    };
    if host.is_empty() {
        return Ok(IpAddr::V4(Ipv4Addr::LOCALHOST));
    }
    if host == "localhost" {
        return Ok(IpAddr::V4(Ipv4Addr::LOCALHOST));
    }
    match host.parse::<IpAddr>() {
        Ok(ip) if ip.is_loopback() => Ok(ip),
        _ => Err(ServeError::NonLoopbackHost(host)),
    }
}

fn resolve_port(config: &ServerConfig) -> Result<u16, ServeError> {
    if let Some(p) = config.port {
        return Ok(p);
    }
    match std::env::var(PORT_ENV) {
        Ok(v) if !v.trim().is_empty() => v.trim().parse().map_err(|_| ServeError::InvalidPort(v)),
        _ => Ok(0),
    }
}

impl Server {
    pub fn start(config: ServerConfig) -> Result<Server, ServeError> {
        let ip = resolve_host(&config)?;
        let port = resolve_port(&config)?;
        let listener = TcpListener::bind(SocketAddr::new(ip, port)).map_err(|e| match e.kind() {
            ErrorKind::AddrInUse => ServeError::PortInUse(port),
            _ => ServeError::Io(e),
        })?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let state = Arc::new(ServerState {
            mounts: RwLock::new(IndexMap::new()),
            selections: RwLock::new(HashMap::new()),
            viewer_dir: config.viewer_dir,
        });
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .thread_name("plotmorph-serve")
            .enable_io()
            .build()?;
        let (tx, rx) = oneshot::channel();
        let app = http::router(state.clone());
        let listener = {
            let _guard = runtime.enter();
            tokio::net::TcpListener::from_std(listener)?
        };
        runtime.spawn(async move {
            let served = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
            if let Err(e) = served {
                log::error!("server stopped: {e}");
            }
        });
        log::info!("serving on http://{addr}");
        Ok(Server {
            addr,
            base_url: format!("http://{addr}"),
            state,
            shutdown: Mutex::new(Some(tx)),
            runtime: Some(runtime),
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Mounts `dir`; registering the same directory again returns the
    /// existing mount.
    pub fn mount(&self, dir: &Path) -> Result<Mount, ServeError> {
        if !dir.is_dir() {
            return Err(ServeError::NotADirectory(dir.to_path_buf()));
        }
        let canonical = dir.canonicalize()?;
        let mut mounts = self.state.mounts.write().expect("mount lock");
        let uid = match mounts.iter().find(|(_, root)| **root == canonical) {
            Some((uid, _)) => uid.clone(),
            None => {
                let uid = format!("m{}", mounts.len());
                mounts.insert(uid.clone(), canonical);
                self.state
                    .selections
                    .write()
                    .expect("selection lock")
                    .insert(uid.clone(), Arc::new(Vec::new()));
                uid
            }
        };
        Ok(Mount {
            prefix: format!("{}/{uid}/", self.base_url),
            uid,
        })
    }

    /// URL prefix of the mounted directory.
    pub fn register_dir(&self, dir: &Path) -> Result<String, ServeError> {
        self.mount(dir).map(|m| m.prefix)
    }

    pub fn get_selection(&self, uid: &str) -> Result<Vec<String>, ServeError> {
        self.state
            .selection(uid)
            .map(|s| s.as_ref().clone())
            .ok_or_else(|| ServeError::UnknownMount(uid.into()))
    }

    pub fn set_selection(&self, uid: &str, ids: Vec<String>) -> Result<(), ServeError> {
        if self.state.replace_selection(uid, ids) {
            Ok(())
        } else {
            Err(ServeError::UnknownMount(uid.into()))
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.lock().expect("shutdown lock").take() {
            let _ = tx.send(());
        }
        if let Some(rt) = self.runtime.take() {
            rt.shutdown_background();
        }
    }
}

static GLOBAL: Mutex<Option<Arc<Server>>> = Mutex::new(None);

/// Starts the per-process server, or returns the running one's base url.
pub fn start(port: Option<u16>) -> Result<String, ServeError> {
    start_with(ServerConfig {
        port,
        ..Default::default()
    })
}

/// Like [`start`] with full configuration; ignored when already running.
pub fn start_with(config: ServerConfig) -> Result<String, ServeError> {
    let mut global = GLOBAL.lock().expect("server lock");
    if let Some(s) = global.as_ref() {
        return Ok(s.base_url().to_string());
    }
    let server = Arc::new(Server::start(config)?);
    let url = server.base_url().to_string();
    *global = Some(server);
    Ok(url)
}

pub fn global() -> Option<Arc<Server>> {
    GLOBAL.lock().expect("server lock").clone()
}

pub fn register_dir(dir: &Path) -> Result<String, ServeError> {
    global().ok_or(ServeError::NotStarted)?.register_dir(dir)
}

pub fn get_selection(uid: &str) -> Result<Vec<String>, ServeError> {
    global().ok_or(ServeError::NotStarted)?.get_selection(uid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn local() -> Server {
        Server::start(ServerConfig {
            port: Some(0),
            host: Some("127.0.0.1".into()),
            viewer_dir: None,
        })
        .unwrap()
    }

    #[test]
    fn base_url_is_loopback_with_port() {
        let s = local();
        assert!(s.base_url().starts_with("http://127.0.0.1:"));
        assert!(s.local_addr().port() > 0);
        assert!(s.local_addr().ip().is_loopback());
    }

    #[test]
    fn occupied_port() {
        let s = local();
        let err = Server::start(ServerConfig {
            port: Some(s.local_addr().port()),
            host: Some("127.0.0.1".into()),
            viewer_dir: None,
        })
        .unwrap_err();
        assert!(matches!(err, ServeError::PortInUse(p) if p == s.local_addr().port()));
    }

    #[test]
    fn non_loopback_refused() {
        let err = Server::start(ServerConfig {
            port: Some(0),
            host: Some("0.0.0.0".into()),
            viewer_dir: None,
        })
        .unwrap_err();
        assert!(matches!(err, ServeError::NonLoopbackHost(_)));
    }

    #[test]
    fn mounts_dedupe_and_count_up() {
        let s = local();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = s.mount(a.path()).unwrap();
        assert_eq!(ma.uid, "m0");
        assert_eq!(ma.prefix, format!("{}/m0/", s.base_url()));
        assert_eq!(s.mount(a.path()).unwrap(), ma);
        assert_eq!(s.mount(b.path()).unwrap().uid, "m1");
        assert!(matches!(
            s.mount(&a.path().join("missing")),
            Err(ServeError::NotADirectory(_))
        ));
    }

    #[test]
    fn kernel_side_selection() {
        let s = local();
        let d = tempfile::tempdir().unwrap();
        let m = s.mount(d.path()).unwrap();
        assert_eq!(s.get_selection(&m.uid).unwrap(), Vec::<String>::new());
        s.set_selection(&m.uid, vec!["b".into(), "a".into()]).unwrap();
        assert_eq!(s.get_selection(&m.uid).unwrap(), vec!["b", "a"]);
        assert!(matches!(s.get_selection("m9"), Err(ServeError::UnknownMount(_))));
    }
}
