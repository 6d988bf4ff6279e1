//! Interactive drop-in replacements for static single-cell and spatial
//! plotting functions.
//!
//! ```no_run
//! use std::sync::Arc;
//! use plotmorph::host::{DataHandle, PlotArgs, StubHost};
//! # fn data() -> Arc<plotmorph::stats::AnnotatedMatrix> { unimplemented!() }
//!
//! let host = StubHost::new();
//! plotmorph::install(&host.namespaces());
//!
//! let out = host
//!     .call("sc.pl.dotplot", &DataHandle::Matrix(data()), PlotArgs::new().arg(vec!["CD3E"]).arg("louvain"))
//!     .unwrap();
//! let handle = out.into_interactive().unwrap();
//! println!("{}", handle.viewer_url);
//! ```

pub mod bridge;
pub mod host;
pub mod intercept;
pub mod serve;
pub mod spatial;
pub mod stats;
pub mod store;
pub mod survey;
pub mod translate;
pub mod viewmodel;

use std::sync::{Arc, Mutex};

use host::HostNamespaces;
use intercept::{build_default_patchset, InteractiveBackend, PatchSet, PatchState};

pub use bridge::{display, export_config, InteractivePlotHandle};

/// Set to `1` to install without activating.
pub const DISABLED_ENV: &str = "PLOTMORPH_DISABLED";

static INSTALLED: Mutex<Option<Arc<PatchSet>>> = Mutex::new(None);

fn installed() -> Option<Arc<PatchSet>> {
    INSTALLED.lock().unwrap_or_else(|e| e.into_inner()).clone()
}

/// Patches every supported function of `namespaces` and activates the
/// patches unless `PLOTMORPH_DISABLED=1`. A previously installed set is
/// deactivated first.
pub fn install(namespaces: &HostNamespaces) -> Arc<PatchSet> {
    install_with(namespaces, Arc::new(InteractiveBackend::global()))
}

pub fn install_with(namespaces: &HostNamespaces, backend: Arc<InteractiveBackend>) -> Arc<PatchSet> {
    let set = Arc::new(build_default_patchset(namespaces, backend));
    let disabled = std::env::var(DISABLED_ENV).is_ok_and(|v| v.trim() == "1");
    if !disabled {
        set.activate();
    }
    let previous = INSTALLED.lock().unwrap_or_else(|e| e.into_inner()).replace(set.clone());
    if let Some(previous) = previous {
        previous.deactivate();
    }
    set
}

/// The installed patch set, if any.
pub fn patchset() -> Option<Arc<PatchSet>> {
    installed()
}

/// Re-applies the installed patches; returns how many changed.
pub fn enable() -> usize {
    installed().map_or(0, |s| s.activate().changed)
}

/// Restores every original; returns how many changed.
pub fn disable() -> usize {
    installed().map_or(0, |s| s.deactivate().changed)
}

pub fn is_enabled() -> bool {
    installed().is_some_and(|s| s.state() == PatchState::Active)
}

/// Runs `body` against the original static functions.
pub fn run_static<R>(body: impl FnOnce() -> R) -> R {
    match installed() {
        Some(s) => s.run_static(body),
        None => body(),
    }
}
