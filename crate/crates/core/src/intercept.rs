//! Swaps host plotting functions for interactive replacements and puts the
//! originals back on request.

use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::bridge::{DataSources, Materializer};
use crate::host::{
    Callable, DataHandle, HostNamespaces, Namespace, PlotArgs, PlotError, PlotFunction, PlotOutput, RenderedLayer,
    ShowHook, Signature, SpatialChain,
};
use crate::translate::{dispatch, translate_spatial_show, Dispatch, PlotCall, SpatialLayerStack, Translated, TranslatorRegistry};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InterceptError {
    #[error("{0} no longer resolves to the patched or original function")]
    TargetVanished(String),
}

/// Compares the objects behind two callables, ignoring vtables.
pub fn same_callable(a: &Callable, b: &Callable) -> bool {
    std::ptr::eq(Arc::as_ptr(a) as *const (), Arc::as_ptr(b) as *const ())
}

#[derive(Clone)]
pub struct PatchRecord {
    pub target_path: String,
    pub namespace: Arc<Namespace>,
    pub name: String,
    pub original: Callable,
    pub replacement: Callable,
    pub applied: bool,
}

impl fmt::Debug for PatchRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PatchRecord")
            .field("target_path", &self.target_path)
            .field("applied", &self.applied)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchState {
    Active,
    Inactive,
}

/// Outcome of activate or deactivate.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PatchReport {
    pub changed: usize,
    pub vanished: Vec<InterceptError>,
}

/// Ordered patch records. Methods take `&self` so a set can be shared and
/// [`PatchSet::run_static`] can nest.
pub struct PatchSet {
    records: Mutex<Vec<PatchRecord>>,
    enabled: AtomicBool,
    warnings: Vec<String>,
}

impl fmt::Debug for PatchSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PatchSet")
            .field("records", &*self.lock())
            .field("warnings", &self.warnings)
            .finish()
    }
}

impl PatchSet {
    pub fn new(records: Vec<PatchRecord>, warnings: Vec<String>) -> Self {
        for (i, r) in records.iter().enumerate() {
            assert!(
                records[..i].iter().all(|o| o.target_path != r.target_path),
                "duplicate patch target {}",
                r.target_path
            );
        }
        PatchSet {
            records: Mutex::new(records),
            enabled: AtomicBool::new(false),
            warnings,
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Vec<PatchRecord>> {
        self.records.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn records(&self) -> Vec<PatchRecord> {
        self.lock().clone()
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.lock().is_empty()
    }

    pub fn target_paths(&self) -> Vec<String> {
        self.lock().iter().map(|r| r.target_path.clone()).collect()
    }

    /// Targets skipped while building the set.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn state(&self) -> PatchState {
        let all = self.lock().iter().all(|r| r.applied);
        if all && self.enabled.load(Ordering::SeqCst) {
            PatchState::Active
        } else {
            PatchState::Inactive
        }
    }

    pub fn activate(&self) -> PatchReport {
        let mut report = PatchReport::default();
        for r in self.lock().iter_mut() {
            match r.namespace.resolve(&r.name) {
                Some(cur) if same_callable(&cur, &r.replacement) => r.applied = true,
                Some(cur) if same_callable(&cur, &r.original) => {
                    r.namespace.set(&r.name, r.replacement.clone());
                    r.applied = true;
                    report.changed += 1;
                }
                _ => {
                    r.applied = false;
                    report.vanished.push(InterceptError::TargetVanished(r.target_path.clone()));
                }
            }
        }
        self.enabled.store(true, Ordering::SeqCst);
        for v in &report.vanished {
            log::warn!("{v}");
        }
        report
    }

    pub fn deactivate(&self) -> PatchReport {
        let mut report = PatchReport::default();
        for r in self.lock().iter_mut() {
            if !r.applied {
                continue;
            }
            r.applied = false;
            match r.namespace.resolve(&r.name) {
                Some(cur) if same_callable(&cur, &r.replacement) => {
                    r.namespace.set(&r.name, r.original.clone());
                    report.changed += 1;
                }
                Some(cur) if same_callable(&cur, &r.original) => {}
                _ => report.vanished.push(InterceptError::TargetVanished(r.target_path.clone())),
            }
        }
        self.enabled.store(false, Ordering::SeqCst);
        for v in &report.vanished {
            log::warn!("{v}");
        }
        report
    }

    fn applied_flags(&self) -> (Vec<bool>, bool) {
        (
            self.lock().iter().map(|r| r.applied).collect(),
            self.enabled.load(Ordering::SeqCst),
        )
    }

    fn restore(&self, flags: &[bool], enabled: bool) {
        for (r, &want) in self.lock().iter_mut().zip(flags) {
            if want && !r.applied {
                if let Some(cur) = r.namespace.resolve(&r.name) {
                    if same_callable(&cur, &r.original) {
                        r.namespace.set(&r.name, r.replacement.clone());
                        r.applied = true;
                    }
                }
            }
        }
        self.enabled.store(enabled, Ordering::SeqCst);
    }

    /// Runs `body` with the originals in place, then restores the prior
    /// state, also when `body` panics. Not for concurrent use across threads.
    pub fn run_static<R>(&self, body: impl FnOnce() -> R) -> R {
        struct Guard<'a> {
            set: &'a PatchSet,
            flags: Vec<bool>,
            enabled: bool,
        }
        impl Drop for Guard<'_> {
            fn drop(&mut self) {
                self.set.restore(&self.flags, self.enabled);
            }
        }
        let (flags, enabled) = self.applied_flags();
        let _guard = Guard {
            set: self,
            flags,
            enabled,
        };
        self.deactivate();
        body()
    }
}

/// Shared state of all replacements: the translators and where to
/// materialize their output.
pub struct InteractiveBackend {
    pub registry: TranslatorRegistry,
    pub materializer: Materializer,
    warnings: Mutex<Vec<String>>,
}

impl InteractiveBackend {
    pub fn new(registry: TranslatorRegistry, materializer: Materializer) -> Self {
        InteractiveBackend {
            registry,
            materializer,
            warnings: Mutex::new(Vec::new()),
        }
    }

    /// Default translators, per-process server.
    pub fn global() -> Self {
        Self::new(TranslatorRegistry::with_defaults(), Materializer::global())
    }

    fn warn(&self, message: String) {
        log::warn!("{message}");
        self.warnings.lock().unwrap_or_else(|e| e.into_inner()).push(message);
    }

    /// Fallback warnings issued since the last call.
    pub fn take_warnings(&self) -> Vec<String> {
        std::mem::take(&mut *self.warnings.lock().unwrap_or_else(|e| e.into_inner()))
    }
}

/// Replacement with the original's signature: translate when possible,
/// otherwise call the original.
pub struct InteractiveFunction {
    name: String,
    original: Callable,
    signature: Signature,
    backend: Arc<InteractiveBackend>,
}

impl InteractiveFunction {
    pub fn new(original: Callable, backend: Arc<InteractiveBackend>) -> Self {
        InteractiveFunction {
            name: original.name().to_string(),
            signature: original.signature().clone(),
            original,
            backend,
        }
    }
}

impl PlotFunction for InteractiveFunction {
    fn name(&self) -> &str {
        &self.name
    }

    fn signature(&self) -> &Signature {
        &self.signature
    }

    fn call(&self, data: &DataHandle, args: &PlotArgs) -> Result<PlotOutput, PlotError> {
        let bound = self.signature.bind(&self.name, args)?;
        let call = PlotCall {
            function: self.name.clone(),
            data: data.clone(),
            args: bound,
        };
        match dispatch(&self.backend.registry, &call) {
            Dispatch::PassThrough { warning } => {
                if let Some(w) = warning {
                    self.backend.warn(w);
                }
                self.original.call(data, args)
            }
            Dispatch::Translated(Translated::Config(result)) => {
                let sources = match data {
                    DataHandle::Matrix(am) => DataSources {
                        matrix: Some(am.clone()),
                        spatial: None,
                    },
                    DataHandle::Spatial(chain) => DataSources {
                        matrix: None,
                        spatial: Some(chain.elements.clone()),
                    },
                };
                let handle = self.backend.materializer.materialize(&result, &sources)?;
                Ok(PlotOutput::Interactive(handle))
            }
            Dispatch::Translated(Translated::Layer(layer)) => {
                let DataHandle::Spatial(chain) = data else {
                    unreachable!("layer translators require spatial data")
                };
                let hook: Arc<dyn ShowHook> = Arc::new(SpatialShow {
                    backend: self.backend.clone(),
                });
                Ok(PlotOutput::Spatial(chain.push(
                    RenderedLayer {
                        function: self.name.clone(),
                        args: call.args,
                        interactive: Some(layer),
                    },
                    Some(hook),
                )))
            }
        }
    }
}

struct SpatialShow {
    backend: Arc<InteractiveBackend>,
}

impl ShowHook for SpatialShow {
    fn show(&self, chain: &SpatialChain) -> Result<PlotOutput, PlotError> {
        let stack = SpatialLayerStack::from_accepted(chain.layers.iter().filter_map(|l| l.interactive.clone()).collect());
        let result = translate_spatial_show(&chain.elements, &stack, None)?;
        let sources = DataSources {
            matrix: None,
            spatial: Some(chain.elements.clone()),
        };
        let handle = self.backend.materializer.materialize(&result, &sources)?;
        Ok(PlotOutput::Interactive(handle))
    }
}

/// One record per registered translator whose target resolves in
/// `namespaces`; the rest become warnings.
pub fn build_default_patchset(namespaces: &HostNamespaces, backend: Arc<InteractiveBackend>) -> PatchSet {
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for t in backend.registry.iter() {
        let ns_path = t.family().default_namespace();
        let target = format!("{ns_path}.{}", t.name());
        let Some(ns) = namespaces.get(ns_path) else {
            if !namespaces.is_empty() {
                warnings.push(format!("namespace {ns_path} not found; skipping {target}"));
            }
            continue;
        };
        let Some(original) = ns.resolve(t.name()) else {
            warnings.push(format!("{target} not found in host; skipping"));
            continue;
        };
        let replacement: Callable = Arc::new(InteractiveFunction::new(original.clone(), backend.clone()));
        records.push(PatchRecord {
            target_path: target,
            namespace: ns.clone(),
            name: t.name().to_string(),
            original,
            replacement,
            applied: false,
        });
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    PatchSet::new(records, warnings)
}
