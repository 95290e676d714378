//! Data shipped with the crate: the student schema document and a 30-case
//! Microprocessor Systems fixture.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::case_base::CaseBase;
use crate::schema::{student_schema, CaseSchema, Query, Value};

pub const STUDENT_SCHEMA_JSON: &str = include_str!("../data/student_schema.json");
pub const STUDENT_FIXTURE_CSV: &str = include_str!("../data/student_fixture.csv");

pub fn student_fixture() -> CaseBase {
    CaseBase::from_csv(STUDENT_FIXTURE_CSV, Arc::new(student_schema())).expect("bundled fixture is valid")
}

/// A student known only up to the mid exam: strong prerequisite grades,
/// weak first quiz and mid exam.
pub fn mid_semester_query(schema: &CaseSchema) -> Query {
    let values: BTreeMap<String, Value> = [
        ("gpa", Value::Number(3.2)),
        ("gradeDigitalSystems", Value::from("A")),
        ("gradeBasicProgramming", Value::from("A")),
        ("skillAssembly", Value::Bool(true)),
        ("skillProgramming", Value::Bool(true)),
        ("skillInstrumentDesign", Value::Bool(false)),
        ("quiz1", Value::Number(45.0)),
        ("midExam", Value::Number(40.0)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    Query::new(schema, values).expect("scenario query fits the student schema")
}
