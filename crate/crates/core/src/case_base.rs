//! In-memory case bases and their CSV/JSON file connectors.
//!
//! CSV layout: a header row `id,<attr1>,...,<attrN>` in schema order, one case
//! per row, empty field for an absent value. JSON layout:
//! `{"cases":[{"id":..,"values":{..}}],"schemaId":..}`, written with sorted keys
//! so that saving the same base twice gives identical bytes.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{ensure_valid, Case, CaseSchema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown case base format `{other}`")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

/// Whether a retain appended a new case or replaced one with the same ID.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RetainOutcome {
    Appended,
    Replaced,
}

/// An ordered collection of validated cases with unique IDs.
#[derive(Debug, Clone)]
pub struct CaseBase {
    schema: Arc<CaseSchema>,
    cases: Vec<Case>,
    index: HashMap<String, usize>,
}

impl PartialEq for CaseBase {
    fn eq(&self, other: &Self) -> bool {
        self.schema.id() == other.schema.id() && self.cases == other.cases
    }
}

impl CaseBase {
    pub fn new(schema: Arc<CaseSchema>) -> Self {
        Self {
            schema,
            cases: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Validates every case and checks ID uniqueness (positions are 1-based).
    pub fn from_cases(schema: Arc<CaseSchema>, cases: Vec<Case>) -> Result<Self> {
        let mut index = HashMap::with_capacity(cases.len());
        for (pos, case) in cases.iter().enumerate() {
            ensure_valid(&schema, case)?;
            if let Some(first) = index.insert(case.id.clone(), pos) {
                return Err(Error::DuplicateId {
                    id: case.id.clone(),
                    first: first + 1,
                    second: pos + 1,
                });
            }
        }
        Ok(Self { schema, cases, index })
    }

    pub fn schema(&self) -> &CaseSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<CaseSchema> {
        &self.schema
    }

    pub fn schema_id(&self) -> &str {
        self.schema.id()
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn cases(&self) -> &[Case] {
        &self.cases
    }

    /// All cases in stored order.
    pub fn list_cases(&self) -> &[Case] {
        &self.cases
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn get_case(&self, id: &str) -> Result<&Case> {
        self.index
            .get(id)
            .map(|&i| &self.cases[i])
            .ok_or_else(|| Error::NotFound {
                what: "case",
                id: id.to_string(),
            })
    }

    /// Stores `case`, replacing any case with the same ID. An invalid case
    /// leaves the base untouched.
    pub fn retain_in_place(&mut self, case: Case) -> Result<RetainOutcome> {
        ensure_valid(&self.schema, &case)?;
        match self.index.get(&case.id) {
            Some(&i) => {
                self.cases[i] = case;
                Ok(RetainOutcome::Replaced)
            }
            None => {
                self.index.insert(case.id.clone(), self.cases.len());
                self.cases.push(case);
                Ok(RetainOutcome::Appended)
            }
        }
    }

    /// Returns a new base with `case` retained.
    pub fn retain_case(&self, case: Case) -> Result<CaseBase> {
        let mut next = self.clone();
        next.retain_in_place(case)?;
        Ok(next)
    }

    pub fn load(path: impl AsRef<Path>, format: Format, schema: Arc<CaseSchema>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        match format {
            Format::Csv => Self::from_csv(&text, schema),
            Format::Json => Self::from_json(&text, schema),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>, format: Format) -> Result<()> {
        let path = path.as_ref();
        let bytes = match format {
            Format::Csv => self.to_csv()?,
            Format::Json => self.to_json(),
        };
        // write-then-rename so readers never observe a half-written file
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str, schema: Arc<CaseSchema>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| csv_error("header", e))?.clone();
        let expected: Vec<&str> = std::iter::once("id")
            .chain(schema.attributes().iter().map(|a| a.name.as_str()))
            .collect();
        if header.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Parse {
                location: "header".into(),
                message: format!("expected columns `{}`", expected.join(",")),
            });
        }

        let mut cases = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let row = format!("row {}", i + 1);
            let record = record.map_err(|e| csv_error(&row, e))?;
            let id = record.get(0).unwrap_or_default();
            if id.trim().is_empty() {
                return Err(Error::Parse {
                    location: row,
                    message: "empty case id".into(),
                });
            }
            let mut values = BTreeMap::new();
            for (spec, field) in schema.attributes().iter().zip(record.iter().skip(1)) {
                if field.is_empty() {
                    continue;
                }
                let value = spec.parse_text(field).map_err(|e| Error::Parse {
                    location: format!("{row}, case `{id}`"),
                    message: e.to_string(),
                })?;
                values.insert(spec.name.clone(), value);
            }
            cases.push(Case {
                id: id.to_string(),
                values,
            });
        }
        Self::from_cases(schema, cases)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let io_err = |e: csv::Error| Error::Parse {
            location: "csv writer".into(),
            message: e.to_string(),
        };
        let mut header = vec!["id"];
        header.extend(self.schema.attributes().iter().map(|a| a.name.as_str()));
        writer.write_record(&header).map_err(io_err)?;
        for case in &self.cases {
            let mut row = vec![case.id.clone()];
            row.extend(self.schema.attributes().iter().map(|a| match case.get(&a.name) {
                Some(v) => v.to_string(),
                None => String::new(),
            }));
            writer.write_record(&row).map_err(io_err)?;
        }
        writer.into_inner().map_err(|e| Error::Parse {
            location: "csv writer".into(),
            message: e.to_string(),
        })
    }

    pub fn from_json(text: &str, schema: Arc<CaseSchema>) -> Result<Self> {
        let doc: CaseBaseDocument = serde_json::from_str(text).map_err(|e| Error::Parse {
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        if doc.schema_id != schema.id() {
            return Err(Error::SchemaMismatch {
                expected: schema.id().to_string(),
                found: doc.schema_id,
            });
        }
        Self::from_cases(schema, doc.cases)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let doc = CaseBaseDocumentRef {
            cases: &self.cases,
            schema_id: self.schema.id(),
        };
        let mut out = serde_json::to_vec_pretty(&doc).expect("case bases always serialize");
        out.push(b'\n');
        out
    }
}

fn csv_error(location: &str, e: csv::Error) -> Error {
    let location = match e.position() {
        Some(pos) => format!("{location} (line {})", pos.line()),
        None => location.to_string(),
    };
    Error::Parse {
        location,
        message: e.to_string(),
    }
}

/// Wire form of a JSON case base.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct CaseBaseDocument {
    pub schema_id: String,
    pub cases: Vec<Case>,
}

// Field order is alphabetical; `Case` and its value map are already key-sorted.
#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct CaseBaseDocumentRef<'a> {
    cases: &'a [Case],
    schema_id: &'a str,
}

/// Reads only the `schemaId` of a JSON case base document.
pub fn peek_schema_id(text: &str) -> Result<String> {
    #[derive(Deserialize)]
    #[serde(rename_all = "camelCase")]
    struct Peek {
        schema_id: String,
    }
    serde_json::from_str::<Peek>(text)
        .map(|p| p.schema_id)
        .map_err(|e| Error::Parse {
            location: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })
}
