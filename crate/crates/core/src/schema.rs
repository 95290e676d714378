//! Case schemas, attribute values, cases and queries.
//!
//! A [`CaseSchema`] is an ordered list of typed, weighted attributes, each
//! assigned to one of the four case-structure groups (description, solution,
//! result, justification). Only description attributes take part in queries.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Part of the case structure an attribute belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Description,
    Solution,
    Result,
    Justification,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Group::Description => "description",
            Group::Solution => "solution",
            Group::Result => "result",
            Group::Justification => "justification",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttributeType {
    Numeric {
        min: f64,
        max: f64,
    },
    /// Ordered worst to best.
    Grade {
        scale: Vec<String>,
    },
    Boolean,
    Categorical {
        allowed: Vec<String>,
    },
    Text,
}

impl AttributeType {
    pub fn tag(&self) -> &'static str {
        match self {
            AttributeType::Numeric { .. } => "numeric",
            AttributeType::Grade { .. } => "grade",
            AttributeType::Boolean => "boolean",
            AttributeType::Categorical { .. } => "categorical",
            AttributeType::Text => "text",
        }
    }
}

/// A single attribute value. Grades and categorical labels are stored as
/// their canonical label text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Number(f64),
    Text(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Number(n) => write!(f, "{n}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Number(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeSpec {
    pub name: String,
    pub ty: AttributeType,
    pub weight: f64,
    pub group: Group,
}

impl AttributeSpec {
    pub fn new(name: impl Into<String>, ty: AttributeType, weight: f64, group: Group) -> Self {
        Self {
            name: name.into(),
            ty,
            weight,
            group,
        }
    }

    /// Checks that `value` conforms to this attribute's type.
    pub fn check(&self, value: &Value) -> std::result::Result<(), String> {
        match (&self.ty, value) {
            (AttributeType::Numeric { min, max }, Value::Number(v)) => {
                if v.is_finite() && *v >= *min && *v <= *max {
                    Ok(())
                } else {
                    Err(format!("out of range [{min},{max}]"))
                }
            }
            (AttributeType::Grade { scale }, Value::Text(label)) => {
                if scale.iter().any(|g| g == label) {
                    Ok(())
                } else {
                    Err(format!("unknown grade `{label}` (scale: {})", scale.join(" < ")))
                }
            }
            (AttributeType::Boolean, Value::Bool(_)) => Ok(()),
            (AttributeType::Categorical { allowed }, Value::Text(label)) => {
                if allowed.iter().any(|a| a == label) {
                    Ok(())
                } else {
                    Err(format!("`{label}` not in allowed set {{{}}}", allowed.join(", ")))
                }
            }
            (AttributeType::Text, Value::Text(_)) => Ok(()),
            (ty, v) => Err(format!("expected {} value, got `{v}`", ty.tag())),
        }
    }

    /// Parses a textual field (CSV cell, `key=value` shorthand) by attribute type.
    pub fn parse_text(&self, raw: &str) -> Result<Value> {
        let text = raw.trim();
        let value = match &self.ty {
            AttributeType::Numeric { .. } => {
                let v: f64 = text
                    .parse()
                    .map_err(|_| self.value_error(format!("`{text}` is not a number")))?;
                Value::Number(v)
            }
            AttributeType::Grade { scale } => Value::Text(parse_grade(text, scale)?.to_string()),
            AttributeType::Boolean => match text.to_ascii_lowercase().as_str() {
                "true" => Value::Bool(true),
                "false" => Value::Bool(false),
                _ => return Err(self.value_error(format!("`{text}` is not true/false"))),
            },
            AttributeType::Categorical { allowed } => allowed
                .iter()
                .find(|a| a.eq_ignore_ascii_case(text))
                .map(|a| Value::Text(a.clone()))
                .ok_or_else(|| self.value_error(format!("`{text}` not in allowed set")))?,
            AttributeType::Text => Value::Text(raw.to_string()),
        };
        self.check(&value).map_err(|reason| self.value_error(reason))?;
        Ok(value)
    }

    /// Canonicalizes a value received over a typed wire format (JSON): grade and
    /// categorical labels are matched case-insensitively, then conformance is checked.
    pub fn coerce(&self, value: Value) -> Result<Value> {
        let value = match (&self.ty, value) {
            (AttributeType::Grade { scale }, Value::Text(label)) => {
                Value::Text(parse_grade(&label, scale)?.to_string())
            }
            (AttributeType::Categorical { allowed }, Value::Text(label)) => Value::Text(
                allowed
                    .iter()
                    .find(|a| a.eq_ignore_ascii_case(&label))
                    .cloned()
                    .unwrap_or(label),
            ),
            (_, v) => v,
        };
        self.check(&value).map_err(|reason| self.value_error(reason))?;
        Ok(value)
    }

    fn value_error(&self, reason: String) -> Error {
        Error::Value {
            attribute: self.name.clone(),
            reason,
        }
    }
}

/// Returns the member of `scale` equal to `text`, ignoring ASCII case.
pub fn parse_grade<'a>(text: &str, scale: &'a [String]) -> Result<&'a str> {
    let text = text.trim();
    scale
        .iter()
        .find(|g| g.eq_ignore_ascii_case(text))
        .map(String::as_str)
        .ok_or_else(|| Error::UnknownGrade {
            label: text.to_string(),
            scale: scale.join(" < "),
        })
}

/// Position of `label` on `scale` (0 = worst).
pub fn grade_rank(scale: &[String], label: &str) -> Option<usize> {
    scale.iter().position(|g| g == label)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseSchema {
    id: String,
    attributes: Vec<AttributeSpec>,
}

impl CaseSchema {
    pub fn new(id: impl Into<String>, attributes: Vec<AttributeSpec>) -> Result<Self> {
        let schema = Self {
            id: id.into(),
            attributes,
        };
        schema.check_invariants()?;
        Ok(schema)
    }

    fn check_invariants(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::SchemaDocument("schema id is empty".into()));
        }
        if self.attributes.is_empty() {
            return Err(Error::SchemaDocument("schema has no attributes".into()));
        }
        let mut seen = HashSet::new();
        for attr in &self.attributes {
            let fail = |reason: &str| Error::Schema {
                attribute: attr.name.clone(),
                reason: reason.to_string(),
            };
            if attr.name.trim().is_empty() {
                return Err(fail("empty attribute name"));
            }
            if attr.name == "id" {
                return Err(fail("`id` is reserved for the case identifier"));
            }
            if !seen.insert(attr.name.as_str()) {
                return Err(fail("duplicate attribute"));
            }
            if !(0.0..=1.0).contains(&attr.weight) {
                return Err(fail("weight out of range [0,1]"));
            }
            match &attr.ty {
                AttributeType::Numeric { min, max } => {
                    if !(min.is_finite() && max.is_finite()) || min >= max {
                        return Err(fail("numeric range requires min < max"));
                    }
                }
                AttributeType::Grade { scale } => {
                    if scale.is_empty() {
                        return Err(fail("empty grade scale"));
                    }
                    if has_duplicates(scale) {
                        return Err(fail("grade scale labels must be unique"));
                    }
                }
                AttributeType::Categorical { allowed } => {
                    if allowed.is_empty() {
                        return Err(fail("empty categorical allowed set"));
                    }
                    if has_duplicates(allowed) {
                        return Err(fail("categorical labels must be unique"));
                    }
                }
                AttributeType::Text => {
                    if attr.weight != 0.0 {
                        return Err(fail("text attributes must have weight 0"));
                    }
                }
                AttributeType::Boolean => {}
            }
        }
        if !self
            .attributes
            .iter()
            .any(|a| a.group == Group::Description && a.weight > 0.0)
        {
            return Err(Error::SchemaDocument(
                "at least one description attribute needs weight > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn attributes(&self) -> &[AttributeSpec] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeSpec> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn description(&self) -> impl Iterator<Item = &AttributeSpec> {
        self.attributes.iter().filter(|a| a.group == Group::Description)
    }

    /// The graded solution attribute (the final grade for the student schema).
    pub fn outcome_attribute(&self) -> Option<&AttributeSpec> {
        self.attributes
            .iter()
            .find(|a| a.group == Group::Solution && matches!(a.ty, AttributeType::Grade { .. }))
    }

    /// Returns a copy with every weight replaced by `f(name, weight)`.
    pub fn with_weights(&self, mut f: impl FnMut(&str, f64) -> f64) -> Result<Self> {
        let attributes = self
            .attributes
            .iter()
            .map(|a| AttributeSpec {
                weight: f(&a.name, a.weight),
                ..a.clone()
            })
            .collect();
        Self::new(self.id.clone(), attributes)
    }

    /// Canonicalizes a raw name → value map (see [`AttributeSpec::coerce`]).
    pub fn coerce_values(&self, raw: BTreeMap<String, Value>) -> Result<BTreeMap<String, Value>> {
        raw.into_iter()
            .map(|(name, value)| {
                let spec = self.attribute(&name).ok_or_else(|| Error::Value {
                    attribute: name.clone(),
                    reason: "unknown attribute".into(),
                })?;
                Ok((name, spec.coerce(value)?))
            })
            .collect()
    }

    pub fn to_document(&self) -> SchemaDocument {
        SchemaDocument {
            id: self.id.clone(),
            attributes: self.attributes.iter().map(AttributeDocument::from).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("schema documents always serialize")
    }
}

// Labels are matched case-insensitively on input, so `a` and `A` collide.
fn has_duplicates(labels: &[String]) -> bool {
    let mut seen = HashSet::new();
    labels.iter().any(|l| !seen.insert(l.to_ascii_lowercase()))
}

/// Wire form of a schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaDocument {
    pub id: String,
    pub attributes: Vec<AttributeDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeDocument {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: TypeTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed: Option<Vec<String>>,
    pub weight: f64,
    pub group: Group,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TypeTag {
    Numeric,
    Grade,
    Boolean,
    Categorical,
    Text,
}

impl From<&AttributeSpec> for AttributeDocument {
    fn from(spec: &AttributeSpec) -> Self {
        let mut doc = AttributeDocument {
            name: spec.name.clone(),
            kind: TypeTag::Text,
            min: None,
            max: None,
            scale: None,
            allowed: None,
            weight: spec.weight,
            group: spec.group,
        };
        match &spec.ty {
            AttributeType::Numeric { min, max } => {
                doc.kind = TypeTag::Numeric;
                doc.min = Some(*min);
                doc.max = Some(*max);
            }
            AttributeType::Grade { scale } => {
                doc.kind = TypeTag::Grade;
                doc.scale = Some(scale.clone());
            }
            AttributeType::Boolean => doc.kind = TypeTag::Boolean,
            AttributeType::Categorical { allowed } => {
                doc.kind = TypeTag::Categorical;
                doc.allowed = Some(allowed.clone());
            }
            AttributeType::Text => {}
        }
        doc
    }
}

impl TryFrom<SchemaDocument> for CaseSchema {
    type Error = Error;

    fn try_from(doc: SchemaDocument) -> Result<Self> {
        let attributes = doc
            .attributes
            .into_iter()
            .map(|a| {
                let fail = |reason: &str| Error::Schema {
                    attribute: a.name.clone(),
                    reason: reason.to_string(),
                };
                let stray = |present: bool, key: &str| {
                    if present {
                        Err(fail(
                            &format!("`{key}` is not valid for a {:?} attribute", a.kind).to_lowercase(),
                        ))
                    } else {
                        Ok(())
                    }
                };
                let ty = match a.kind {
                    TypeTag::Numeric => {
                        stray(a.scale.is_some(), "scale")?;
                        stray(a.allowed.is_some(), "allowed")?;
                        match (a.min, a.max) {
                            (Some(min), Some(max)) => AttributeType::Numeric { min, max },
                            _ => return Err(fail("numeric attribute requires min and max")),
                        }
                    }
                    TypeTag::Grade => {
                        stray(a.min.is_some() || a.max.is_some(), "min/max")?;
                        stray(a.allowed.is_some(), "allowed")?;
                        AttributeType::Grade {
                            scale: a.scale.clone().ok_or_else(|| fail("empty grade scale"))?,
                        }
                    }
                    TypeTag::Categorical => {
                        stray(a.min.is_some() || a.max.is_some(), "min/max")?;
                        stray(a.scale.is_some(), "scale")?;
                        AttributeType::Categorical {
                            allowed: a.allowed.clone().ok_or_else(|| fail("empty categorical allowed set"))?,
                        }
                    }
                    TypeTag::Boolean | TypeTag::Text => {
                        stray(a.min.is_some() || a.max.is_some(), "min/max")?;
                        stray(a.scale.is_some(), "scale")?;
                        stray(a.allowed.is_some(), "allowed")?;
                        if a.kind == TypeTag::Boolean {
                            AttributeType::Boolean
                        } else {
                            AttributeType::Text
                        }
                    }
                };
                Ok(AttributeSpec::new(a.name, ty, a.weight, a.group))
            })
            .collect::<Result<Vec<_>>>()?;
        CaseSchema::new(doc.id, attributes)
    }
}

/// Parses and validates a schema-definition document.
pub fn define_schema(json: &str) -> Result<CaseSchema> {
    let doc: SchemaDocument = serde_json::from_str(json).map_err(|e| Error::SchemaDocument(e.to_string()))?;
    CaseSchema::try_from(doc)
}

pub const STUDENT_GRADE_SCALE: [&str; 5] = ["E", "D", "C", "B", "A"];

/// The Microprocessor Systems student model.
pub fn student_schema() -> CaseSchema {
    let scale: Vec<String> = STUDENT_GRADE_SCALE.iter().map(|s| s.to_string()).collect();
    let grade = || AttributeType::Grade { scale: scale.clone() };
    let score = || AttributeType::Numeric { min: 0.0, max: 100.0 };
    let d = Group::Description;
    let attributes = vec![
        AttributeSpec::new("studentId", AttributeType::Text, 0.0, Group::Justification),
        AttributeSpec::new("gpa", AttributeType::Numeric { min: 0.0, max: 4.0 }, 1.0, d),
        AttributeSpec::new("gradeDigitalSystems", grade(), 1.0, d),
        AttributeSpec::new("gradeBasicProgramming", grade(), 1.0, d),
        AttributeSpec::new("skillAssembly", AttributeType::Boolean, 1.0, d),
        AttributeSpec::new("skillProgramming", AttributeType::Boolean, 1.0, d),
        AttributeSpec::new("skillInstrumentDesign", AttributeType::Boolean, 1.0, d),
        AttributeSpec::new("quiz1", score(), 1.0, d),
        AttributeSpec::new("midExam", score(), 1.0, d),
        AttributeSpec::new("quiz2", score(), 1.0, d),
        AttributeSpec::new("finalGrade", grade(), 0.0, Group::Solution),
    ];
    CaseSchema::new("student", attributes).expect("bundled student schema is valid")
}

/// One student record (or any case conforming to a schema). Absent values are
/// simply missing from `values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    pub id: String,
    #[serde(default)]
    pub values: BTreeMap<String, Value>,
}

impl Case {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            values: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: &str, value: impl Into<Value>) -> Self {
        self.values.insert(name.to_string(), value.into());
        self
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub attribute: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.attribute, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

pub fn validate_case(schema: &CaseSchema, case: &Case) -> ValidationReport {
    let mut violations = Vec::new();
    if case.id.trim().is_empty() {
        violations.push(Violation {
            attribute: "id".into(),
            message: "empty case id".into(),
        });
    }
    for (name, value) in &case.values {
        match schema.attribute(name) {
            None => violations.push(Violation {
                attribute: name.clone(),
                message: "unknown attribute".into(),
            }),
            Some(spec) => {
                if let Err(message) = spec.check(value) {
                    violations.push(Violation {
                        attribute: name.clone(),
                        message,
                    });
                }
            }
        }
    }
    ValidationReport { violations }
}

/// Fails with [`Error::Validation`] unless the case conforms.
pub fn ensure_valid(schema: &CaseSchema, case: &Case) -> Result<()> {
    let report = validate_case(schema, case);
    if report.is_valid() {
        Ok(())
    } else {
        Err(Error::Validation {
            case_id: case.id.clone(),
            report,
        })
    }
}

/// A partial description acting as the new case in retrieval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Query {
    values: BTreeMap<String, Value>,
}

impl Query {
    pub fn new(schema: &CaseSchema, values: BTreeMap<String, Value>) -> Result<Self> {
        let mut weighted = false;
        for (name, value) in &values {
            let spec = schema
                .attribute(name)
                .ok_or_else(|| Error::InvalidQuery(format!("unknown attribute `{name}`")))?;
            if spec.group != Group::Description {
                return Err(Error::InvalidQuery(format!(
                    "`{name}` is a {} attribute; queries take description attributes only",
                    spec.group
                )));
            }
            spec.check(value)
                .map_err(|reason| Error::InvalidQuery(format!("{name} {reason}")))?;
            weighted |= spec.weight > 0.0;
        }
        if !weighted {
            return Err(Error::InvalidQuery(
                "no value given for any weighted description attribute".into(),
            ));
        }
        Ok(Self { values })
    }

    /// Like [`Query::new`], but canonicalizes labels first.
    pub fn parse(schema: &CaseSchema, raw: BTreeMap<String, Value>) -> Result<Self> {
        let values = raw
            .into_iter()
            .map(|(name, value)| match schema.attribute(&name) {
                Some(spec) => Ok((name, spec.coerce(value)?)),
                None => Err(Error::InvalidQuery(format!("unknown attribute `{name}`"))),
            })
            .collect::<Result<_>>()?;
        Self::new(schema, values)
    }

    /// The present description values of `case`.
    pub fn from_case(schema: &CaseSchema, case: &Case) -> Result<Self> {
        let values = schema
            .description()
            .filter_map(|a| case.get(&a.name).map(|v| (a.name.clone(), v.clone())))
            .collect();
        Self::new(schema, values)
    }

    pub fn values(&self) -> &BTreeMap<String, Value> {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }
}
