//! Named case bases backed by a data directory.
//!
//! Directory layout:
//!
//! ```text
//! <data>/<name>.schema.json   schema documents (the student schema is always registered)
//! <data>/<name>.json          JSON case bases; the document names its schema
//! <data>/<name>.csv           CSV case bases, read against the student schema
//! ```
//!
//! Case bases are loaded on first use. Readers get an immutable snapshot; a
//! retain swaps in a new snapshot under the base's writer lock, and `flush`
//! writes the current snapshot back to its file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use crate::case_base::{peek_schema_id, CaseBase, Format, RetainOutcome};
use crate::error::{Error, Result};
use crate::schema::{define_schema, student_schema, Case, CaseSchema};

const SCHEMA_SUFFIX: &str = ".schema.json";

#[derive(Debug)]
struct Slot {
    path: Option<PathBuf>,
    format: Format,
    state: Mutex<SlotState>,
}

#[derive(Debug, Default)]
struct SlotState {
    current: Option<Arc<CaseBase>>,
    dirty: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CaseBaseInfo {
    pub id: String,
    pub schema_id: Option<String>,
    pub size: Option<usize>,
    pub format: String,
}

#[derive(Debug)]
pub struct CaseBaseStore {
    data_dir: Option<PathBuf>,
    schemas: RwLock<BTreeMap<String, Arc<CaseSchema>>>,
    bases: RwLock<BTreeMap<String, Arc<Slot>>>,
}

impl Default for CaseBaseStore {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl CaseBaseStore {
    /// A store with no backing directory; flushes are no-ops.
    pub fn in_memory() -> Self {
        let student = Arc::new(student_schema());
        Self {
            data_dir: None,
            schemas: RwLock::new(BTreeMap::from([(student.id().to_string(), student)])),
            bases: RwLock::new(BTreeMap::new()),
        }
    }

    /// Scans `dir` for schemas and case bases. Schemas are parsed eagerly;
    /// case bases are only indexed.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut store = Self::in_memory();
        store.data_dir = Some(dir.to_path_buf());

        let mut files: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();

        for path in &files {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if name.ends_with(SCHEMA_SUFFIX) {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                store.register_schema(define_schema(&text)?);
            }
        }
        for path in &files {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if name.ends_with(SCHEMA_SUFFIX) {
                continue;
            }
            let (Some(format), Some(stem)) = (Format::from_path(path), path.file_stem().and_then(|s| s.to_str()))
            else {
                continue;
            };
            let slot = Slot {
                path: Some(path.clone()),
                format,
                state: Mutex::new(SlotState::default()),
            };
            let mut bases = store.bases.write().expect("store lock poisoned");
            if bases.contains_key(stem) {
                return Err(Error::AlreadyExists {
                    what: "case base",
                    id: stem.to_string(),
                });
            }
            bases.insert(stem.to_string(), Arc::new(slot));
        }
        Ok(store)
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.data_dir.as_deref()
    }

    pub fn register_schema(&self, schema: CaseSchema) -> Arc<CaseSchema> {
        let schema = Arc::new(schema);
        self.schemas
            .write()
            .expect("store lock poisoned")
            .insert(schema.id().to_string(), schema.clone());
        schema
    }

    pub fn schema(&self, id: &str) -> Result<Arc<CaseSchema>> {
        self.schemas
            .read()
            .expect("store lock poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound {
                what: "schema",
                id: id.to_string(),
            })
    }

    pub fn schemas(&self) -> Vec<Arc<CaseSchema>> {
        self.schemas
            .read()
            .expect("store lock poisoned")
            .values()
            .cloned()
            .collect()
    }

    pub fn case_base_ids(&self) -> Vec<String> {
        self.bases
            .read()
            .expect("store lock poisoned")
            .keys()
            .cloned()
            .collect()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.bases.read().expect("store lock poisoned").contains_key(id)
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>> {
        self.bases
            .read()
            .expect("store lock poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound {
                what: "case base",
                id: id.to_string(),
            })
    }

    fn load_slot(&self, slot: &Slot, state: &mut SlotState) -> Result<Arc<CaseBase>> {
        if let Some(current) = &state.current {
            return Ok(current.clone());
        }
        let path = slot.path.as_ref().expect("in-memory slots are created loaded");
        let schema = match slot.format {
            Format::Json => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                self.schema(&peek_schema_id(&text)?)?
            }
            Format::Csv => self.schema(student_schema().id())?,
        };
        let loaded = Arc::new(CaseBase::load(path, slot.format, schema)?);
        state.current = Some(loaded.clone());
        Ok(loaded)
    }

    /// The current snapshot of the named case base, loading it if needed.
    pub fn snapshot(&self, id: &str) -> Result<Arc<CaseBase>> {
        let slot = self.slot(id)?;
        let mut state = slot.state.lock().expect("case base lock poisoned");
        self.load_slot(&slot, &mut state)
    }

    pub fn info(&self, id: &str) -> Result<CaseBaseInfo> {
        let slot = self.slot(id)?;
        let state = slot.state.lock().expect("case base lock poisoned");
        Ok(CaseBaseInfo {
            id: id.to_string(),
            schema_id: state.current.as_ref().map(|c| c.schema_id().to_string()),
            size: state.current.as_ref().map(|c| c.len()),
            format: slot.format.to_string(),
        })
    }

    /// Registers a new case base and, for directory-backed stores, writes it out.
    pub fn create(&self, id: &str, case_base: CaseBase, format: Format) -> Result<()> {
        validate_name(id)?;
        let mut bases = self.bases.write().expect("store lock poisoned");
        if bases.contains_key(id) {
            return Err(Error::AlreadyExists {
                what: "case base",
                id: id.to_string(),
            });
        }
        let path = self
            .data_dir
            .as_ref()
            .map(|d| d.join(format!("{id}.{}", format.extension())));
        if let Some(path) = &path {
            if format == Format::Csv && case_base.schema_id() != student_schema().id() {
                return Err(Error::SchemaMismatch {
                    expected: student_schema().id().to_string(),
                    found: case_base.schema_id().to_string(),
                });
            }
            case_base.save(path, format)?;
        }
        bases.insert(
            id.to_string(),
            Arc::new(Slot {
                path,
                format,
                state: Mutex::new(SlotState {
                    current: Some(Arc::new(case_base)),
                    dirty: false,
                }),
            }),
        );
        Ok(())
    }

    /// Retains `case` into the live case base, serialized by the base's writer lock.
    pub fn retain(&self, id: &str, case: Case) -> Result<RetainOutcome> {
        let slot = self.slot(id)?;
        let mut state = slot.state.lock().expect("case base lock poisoned");
        let current = self.load_slot(&slot, &mut state)?;
        let mut next = (*current).clone();
        let outcome = next.retain_in_place(case)?;
        state.current = Some(Arc::new(next));
        state.dirty = true;
        Ok(outcome)
    }

    /// Writes the live case base to its file if it changed since the last flush.
    pub fn flush(&self, id: &str) -> Result<()> {
        let slot = self.slot(id)?;
        let mut state = slot.state.lock().expect("case base lock poisoned");
        if !state.dirty {
            return Ok(());
        }
        if let (Some(path), Some(current)) = (&slot.path, &state.current) {
            current.save(path, slot.format)?;
        }
        state.dirty = false;
        Ok(())
    }

    pub fn flush_all(&self) -> Result<()> {
        for id in self.case_base_ids() {
            self.flush(&id)?;
        }
        Ok(())
    }
}

fn validate_name(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_'))
        && !id.ends_with(".schema");
    if ok {
        Ok(())
    } else {
        Err(Error::Parse {
            location: "case base id".into(),
            message: format!("`{id}` must be 1-128 characters of [A-Za-z0-9_-]"),
        })
    }
}
