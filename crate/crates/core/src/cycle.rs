//! The Retrieve / Reuse / Revise / Retain session state machine.
//!
//! A session binds a read snapshot of a named case base when it starts
//! (precycle), walks the four stages (cycle), and on close writes back any
//! retained case (postcycle). Legal transitions:
//!
//! ```text
//! Created   --query-->  Retrieved  --query-->  Retrieved
//! Retrieved --choose--> Chosen     --revise--> Revised --revise--> Revised
//! Chosen | Revised --retain--> Retained
//! any state except Closed --close--> Closed
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::case_base::{CaseBase, RetainOutcome};
use crate::error::{Error, Result};
use crate::schema::{ensure_valid, Case, Query, Value};
use crate::similarity::{retrieve_k, RetrievalResult};
use crate::store::CaseBaseStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum SessionState {
    Created,
    Retrieved,
    Chosen,
    Revised,
    Retained,
    Closed,
}

impl SessionState {
    pub const ALL: [SessionState; 6] = [
        SessionState::Created,
        SessionState::Retrieved,
        SessionState::Chosen,
        SessionState::Revised,
        SessionState::Retained,
        SessionState::Closed,
    ];

    /// The state reached by applying `op`, or `None` if the transition is illegal.
    pub fn next(self, op: Operation) -> Option<SessionState> {
        use Operation as O;
        use SessionState as S;
        match (self, op) {
            (S::Closed, _) => None,
            (_, O::Close) => Some(S::Closed),
            (S::Created | S::Retrieved, O::Query) => Some(S::Retrieved),
            (S::Retrieved, O::Choose) => Some(S::Chosen),
            (S::Chosen | S::Revised, O::Revise) => Some(S::Revised),
            (S::Chosen | S::Revised, O::Retain) => Some(S::Retained),
            _ => None,
        }
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Operation {
    Query,
    Choose,
    Revise,
    Retain,
    Close,
}

impl Operation {
    pub const ALL: [Operation; 5] = [
        Operation::Query,
        Operation::Choose,
        Operation::Revise,
        Operation::Retain,
        Operation::Close,
    ];
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Operation::Query => "query",
            Operation::Choose => "choose",
            Operation::Revise => "revise",
            Operation::Retain => "retain",
            Operation::Close => "close",
        };
        f.write_str(s)
    }
}

/// Edits applied in the Revise stage; `None` clears a value.
pub type Edits = BTreeMap<String, Option<Value>>;

#[derive(Debug)]
pub struct Session {
    id: String,
    case_base_id: String,
    store: Arc<CaseBaseStore>,
    snapshot: Arc<CaseBase>,
    state: SessionState,
    query: Option<Query>,
    k: Option<usize>,
    results: Option<Vec<RetrievalResult>>,
    working_case: Option<Case>,
    retained_id: Option<String>,
    retain_outcome: Option<RetainOutcome>,
}

/// Precycle: resolves and loads the named case base and opens a session on a snapshot of it.
pub fn start_session(store: Arc<CaseBaseStore>, case_base_id: &str) -> Result<Session> {
    let snapshot = store.snapshot(case_base_id)?;
    Ok(Session {
        id: uuid::Uuid::new_v4().simple().to_string(),
        case_base_id: case_base_id.to_string(),
        store,
        snapshot,
        state: SessionState::Created,
        query: None,
        k: None,
        results: None,
        working_case: None,
        retained_id: None,
        retain_outcome: None,
    })
}

impl Session {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn case_base_id(&self) -> &str {
        &self.case_base_id
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn snapshot(&self) -> &CaseBase {
        &self.snapshot
    }

    pub fn query(&self) -> Option<&Query> {
        self.query.as_ref()
    }

    pub fn k(&self) -> Option<usize> {
        self.k
    }

    pub fn results(&self) -> Option<&[RetrievalResult]> {
        self.results.as_deref()
    }

    pub fn working_case(&self) -> Option<&Case> {
        self.working_case.as_ref()
    }

    pub fn retained_id(&self) -> Option<&str> {
        self.retained_id.as_deref()
    }

    pub fn retain_outcome(&self) -> Option<RetainOutcome> {
        self.retain_outcome
    }

    /// Fails with [`Error::IllegalState`] unless `op` is legal now.
    pub fn guard(&self, op: Operation) -> Result<SessionState> {
        self.state.next(op).ok_or(Error::IllegalState {
            state: self.state,
            operation: op,
        })
    }

    /// Retrieve: ranks the snapshot against `query`. Allowed again before a case is chosen.
    pub fn submit_query(&mut self, query: Query, k: usize) -> Result<&[RetrievalResult]> {
        let next = self.guard(Operation::Query)?;
        let results = retrieve_k(&self.snapshot, &query, k)?;
        self.query = Some(query);
        self.k = Some(k);
        self.state = next;
        Ok(self.results.insert(results))
    }

    /// Reuse: copies the chosen case, with the query's known values laid over it.
    pub fn choose_case(&mut self, case_id: &str) -> Result<&Case> {
        let next = self.guard(Operation::Choose)?;
        let in_results = self
            .results
            .as_ref()
            .is_some_and(|r| r.iter().any(|r| r.case_id == case_id));
        if !in_results {
            return Err(Error::NotInResults(case_id.to_string()));
        }
        let mut working = self.snapshot.get_case(case_id)?.clone();
        if let Some(query) = &self.query {
            for (name, value) in query.values() {
                working.values.insert(name.clone(), value.clone());
            }
        }
        ensure_valid(self.snapshot.schema(), &working)?;
        self.state = next;
        Ok(self.working_case.insert(working))
    }

    /// Revise: applies `edits` atomically; a failing edit set changes nothing.
    pub fn revise(&mut self, edits: Edits) -> Result<&Case> {
        let next = self.guard(Operation::Revise)?;
        let mut working = self.working_case.clone().expect("working case present once chosen");
        for (name, value) in edits {
            match value {
                Some(v) => {
                    // label canonicalization only; conformance is reported in full below
                    let v = match self.snapshot.schema().attribute(&name) {
                        Some(spec) => spec.coerce(v.clone()).unwrap_or(v),
                        None => v,
                    };
                    working.values.insert(name, v);
                }
                None => {
                    working.values.remove(&name);
                }
            }
        }
        ensure_valid(self.snapshot.schema(), &working)?;
        self.state = next;
        Ok(self.working_case.insert(working))
    }

    /// Retain: stores the working case under `new_id` in the live case base.
    pub fn retain(&mut self, new_id: &str) -> Result<RetainOutcome> {
        let next = self.guard(Operation::Retain)?;
        let mut case = self.working_case.clone().expect("working case present once chosen");
        case.id = new_id.to_string();
        let outcome = self.store.retain(&self.case_base_id, case.clone())?;
        self.working_case = Some(case);
        self.retained_id = Some(new_id.to_string());
        self.retain_outcome = Some(outcome);
        self.state = next;
        Ok(outcome)
    }

    /// Postcycle: flushes the case base if this session retained a case.
    pub fn close(&mut self) -> Result<()> {
        self.guard(Operation::Close)?;
        if self.retained_id.is_some() {
            self.store.flush(&self.case_base_id)?;
        }
        self.state = SessionState::Closed;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::student_schema;

    fn store() -> Arc<CaseBaseStore> {
        let store = CaseBaseStore::in_memory();
        let cb = CaseBase::from_cases(
            Arc::new(student_schema()),
            vec![
                Case::new("S01")
                    .with("gpa", 3.5)
                    .with("quiz2", 40.0)
                    .with("finalGrade", "B"),
                Case::new("S02").with("gpa", 2.0).with("finalGrade", "C"),
            ],
        )
        .unwrap();
        store.create("course", cb, crate::case_base::Format::Json).unwrap();
        Arc::new(store)
    }

    fn gpa_query(v: f64) -> Query {
        Query::new(&student_schema(), BTreeMap::from([("gpa".into(), Value::Number(v))])).unwrap()
    }

    #[test]
    fn transition_table() {
        use Operation as O;
        use SessionState as S;
        assert_eq!(S::Created.next(O::Query), Some(S::Retrieved));
        assert_eq!(S::Retrieved.next(O::Query), Some(S::Retrieved));
        assert_eq!(S::Chosen.next(O::Retain), Some(S::Retained));
        assert_eq!(S::Chosen.next(O::Query), None);
        assert_eq!(S::Retained.next(O::Revise), None);
        assert_eq!(S::Closed.next(O::Close), None);
    }

    #[test]
    fn full_cycle() {
        let store = store();
        let mut s = start_session(store.clone(), "course").unwrap();
        assert_eq!(s.state(), SessionState::Created);
        let results = s.submit_query(gpa_query(3.0), 5).unwrap();
        assert_eq!(results.len(), 2);
        assert_eq!(results[0].case_id, "S01");

        let working = s.choose_case("S01").unwrap();
        assert_eq!(working.get("gpa"), Some(&Value::Number(3.0)));
        assert_eq!(working.get("finalGrade"), Some(&Value::from("B")));

        let working = s
            .revise(BTreeMap::from([("quiz2".into(), Some(Value::Number(85.0)))]))
            .unwrap();
        assert_eq!(working.get("quiz2"), Some(&Value::Number(85.0)));

        assert_eq!(s.retain("S99").unwrap(), RetainOutcome::Appended);
        assert_eq!(s.retained_id(), Some("S99"));
        assert_eq!(s.snapshot().len(), 2);
        assert_eq!(store.snapshot("course").unwrap().len(), 3);
        s.close().unwrap();
        assert!(matches!(
            s.submit_query(gpa_query(3.0), 5),
            Err(Error::IllegalState { .. })
        ));
    }

    #[test]
    fn failed_operations_leave_session_unchanged() {
        let mut s = start_session(store(), "course").unwrap();
        let bad = Query::new(
            &student_schema(),
            BTreeMap::from([("quiz1".into(), Value::Number(10.0))]),
        )
        .unwrap();
        assert!(matches!(s.submit_query(bad, 5), Err(Error::NoComparableAttributes)));
        assert_eq!(s.state(), SessionState::Created);
        assert!(s.results().is_none());

        s.submit_query(gpa_query(3.0), 1).unwrap();
        assert!(matches!(s.choose_case("S02"), Err(Error::NotInResults(_))));
        assert_eq!(s.state(), SessionState::Retrieved);

        s.choose_case("S01").unwrap();
        let before = s.working_case().cloned();
        let err = s.revise(BTreeMap::from([
            ("quiz2".into(), Some(Value::Number(50.0))),
            ("gpa".into(), Some(Value::Number(9.9))),
        ]));
        assert!(err.is_err());
        assert_eq!(s.working_case().cloned(), before);
        assert_eq!(s.state(), SessionState::Chosen);
    }

    #[test]
    fn revise_can_clear_values_and_empty_edit_is_noop() {
        let mut s = start_session(store(), "course").unwrap();
        s.submit_query(gpa_query(3.0), 5).unwrap();
        s.choose_case("S01").unwrap();
        let before = s.working_case().cloned().unwrap();
        assert_eq!(s.revise(Edits::new()).unwrap(), &before);
        assert_eq!(s.state(), SessionState::Revised);
        let after = s.revise(BTreeMap::from([("quiz2".into(), None)])).unwrap();
        assert_eq!(after.get("quiz2"), None);
    }

    #[test]
    fn start_against_missing_base() {
        assert!(matches!(start_session(store(), "missing"), Err(Error::NotFound { .. })));
    }
}
