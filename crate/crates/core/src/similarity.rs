//! Local and global similarity, and k-nearest-neighbor retrieval.
//!
//! Local similarity per attribute type:
//!
//! - numeric: `1 - |t - s| / (max - min)` using the schema's range
//! - grade: `1 - |rank(t) - rank(s)| / (|scale| - 1)`
//! - boolean, categorical: exact match
//!
//! Global similarity is the weighted mean of local similarities over the
//! attributes with weight > 0 that are present in both the query and the case.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::case_base::CaseBase;
use crate::error::{Error, Result};
use crate::schema::{grade_rank, AttributeSpec, AttributeType, Case, CaseSchema, Query, Value};

pub const DEFAULT_K: usize = 5;

/// A similarity value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimilarityScore(f64);

impl SimilarityScore {
    pub const ONE: SimilarityScore = SimilarityScore(1.0);
    pub const ZERO: SimilarityScore = SimilarityScore(0.0);

    pub fn new(value: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&value), "similarity {value} outside [0,1]");
        Self(value.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RetrievalResult {
    pub case_id: String,
    pub score: SimilarityScore,
}

pub fn local_similarity(spec: &AttributeSpec, t: &Value, s: &Value) -> Result<SimilarityScore> {
    if matches!(spec.ty, AttributeType::Text) {
        return Err(Error::TextComparison(spec.name.clone()));
    }
    for v in [t, s] {
        spec.check(v).map_err(|reason| Error::Value {
            attribute: spec.name.clone(),
            reason,
        })?;
    }
    let sim = match (&spec.ty, t, s) {
        (AttributeType::Numeric { min, max }, Value::Number(a), Value::Number(b)) => 1.0 - (a - b).abs() / (max - min),
        (AttributeType::Grade { scale }, Value::Text(a), Value::Text(b)) => {
            if scale.len() == 1 {
                1.0
            } else {
                // both labels were checked against the scale above
                let ra = grade_rank(scale, a).unwrap_or_default();
                let rb = grade_rank(scale, b).unwrap_or_default();
                1.0 - ra.abs_diff(rb) as f64 / (scale.len() - 1) as f64
            }
        }
        (AttributeType::Boolean, a, b) | (AttributeType::Categorical { .. }, a, b) => {
            if a == b {
                1.0
            } else {
                0.0
            }
        }
        _ => unreachable!("conformance checked above"),
    };
    Ok(SimilarityScore::new(sim))
}

pub fn global_similarity(schema: &CaseSchema, query: &Query, case: &Case) -> Result<SimilarityScore> {
    let mut weighted_sum = 0.0;
    let mut weight_total = 0.0;
    for spec in schema.attributes() {
        if spec.weight <= 0.0 {
            continue;
        }
        let (Some(t), Some(s)) = (query.get(&spec.name), case.get(&spec.name)) else {
            continue;
        };
        weighted_sum += local_similarity(spec, t, s)?.value() * spec.weight;
        weight_total += spec.weight;
    }
    if weight_total == 0.0 {
        return Err(Error::NoComparableAttributes);
    }
    Ok(SimilarityScore::new((weighted_sum / weight_total).min(1.0)))
}

/// Score descending, then case ID ascending.
pub fn ranking_order(a: &RetrievalResult, b: &RetrievalResult) -> Ordering {
    b.score
        .value()
        .total_cmp(&a.score.value())
        .then_with(|| a.case_id.cmp(&b.case_id))
}

/// Scores and fully ranks `cases` against `query`. Cases sharing no weighted
/// attribute with the query are left out of the ranking.
pub fn rank_cases<'a>(
    schema: &CaseSchema,
    cases: impl IntoIterator<Item = &'a Case>,
    query: &Query,
) -> Result<Vec<RetrievalResult>> {
    let mut ranked = Vec::new();
    for case in cases {
        match global_similarity(schema, query, case) {
            Ok(score) => ranked.push(RetrievalResult {
                case_id: case.id.clone(),
                score,
            }),
            Err(Error::NoComparableAttributes) => {}
            Err(e) => return Err(e),
        }
    }
    ranked.sort_by(ranking_order);
    Ok(ranked)
}

/// Returns the `min(k, |comparable cases|)` most similar cases.
pub fn retrieve_k(case_base: &CaseBase, query: &Query, k: usize) -> Result<Vec<RetrievalResult>> {
    if k == 0 {
        return Err(Error::ZeroK);
    }
    if case_base.is_empty() {
        return Err(Error::EmptyCaseBase);
    }
    let mut ranked = rank_cases(case_base.schema(), case_base.cases(), query)?;
    if ranked.is_empty() {
        return Err(Error::NoComparableAttributes);
    }
    ranked.truncate(k);
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;
    use std::sync::Arc;

    use super::*;
    use crate::schema::{student_schema, Group};

    fn grades() -> AttributeType {
        AttributeType::Grade {
            scale: ["E", "D", "C", "B", "A"].map(String::from).to_vec(),
        }
    }

    fn two_attr_schema(extra_quiz: bool) -> CaseSchema {
        let mut attrs = vec![
            AttributeSpec::new(
                "gpa",
                AttributeType::Numeric { min: 0.0, max: 4.0 },
                0.5,
                Group::Description,
            ),
            AttributeSpec::new("gradeDS", grades(), 0.5, Group::Description),
        ];
        if extra_quiz {
            attrs.push(AttributeSpec::new(
                "quiz1",
                AttributeType::Numeric { min: 0.0, max: 100.0 },
                1.0,
                Group::Description,
            ));
        }
        CaseSchema::new("t", attrs).unwrap()
    }

    fn query(schema: &CaseSchema, pairs: &[(&str, Value)]) -> Query {
        let values: BTreeMap<_, _> = pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        Query::new(schema, values).unwrap()
    }

    #[test]
    fn local_examples() {
        let gpa = AttributeSpec::new(
            "gpa",
            AttributeType::Numeric { min: 0.0, max: 4.0 },
            1.0,
            Group::Description,
        );
        assert_eq!(local_similarity(&gpa, &3.0.into(), &3.5.into()).unwrap().value(), 0.875);

        let g = AttributeSpec::new("g", grades(), 1.0, Group::Description);
        assert_eq!(local_similarity(&g, &"B".into(), &"A".into()).unwrap().value(), 0.75);

        let b = AttributeSpec::new("b", AttributeType::Boolean, 1.0, Group::Description);
        assert_eq!(local_similarity(&b, &true.into(), &true.into()).unwrap().value(), 1.0);
        assert_eq!(local_similarity(&b, &true.into(), &false.into()).unwrap().value(), 0.0);

        let c = AttributeSpec::new(
            "c",
            AttributeType::Categorical {
                allowed: vec!["x".into(), "y".into()],
            },
            1.0,
            Group::Description,
        );
        assert_eq!(local_similarity(&c, &"y".into(), &"y".into()).unwrap().value(), 1.0);
    }

    #[test]
    fn local_errors() {
        let t = AttributeSpec::new("note", AttributeType::Text, 0.0, Group::Result);
        assert!(matches!(
            local_similarity(&t, &"a".into(), &"a".into()),
            Err(Error::TextComparison(_))
        ));
        let gpa = AttributeSpec::new(
            "gpa",
            AttributeType::Numeric { min: 0.0, max: 4.0 },
            1.0,
            Group::Description,
        );
        let err = local_similarity(&gpa, &3.0.into(), &7.0.into()).unwrap_err();
        assert!(err.to_string().contains("gpa"));
    }

    #[test]
    fn single_label_scale_is_always_similar() {
        let g = AttributeSpec::new(
            "g",
            AttributeType::Grade {
                scale: vec!["P".into()],
            },
            1.0,
            Group::Description,
        );
        assert_eq!(local_similarity(&g, &"P".into(), &"P".into()).unwrap().value(), 1.0);
    }

    #[test]
    fn global_weighted_mean() {
        let schema = two_attr_schema(false);
        let q = query(&schema, &[("gpa", 3.0.into()), ("gradeDS", "B".into())]);
        let c = Case::new("S").with("gpa", 3.5).with("gradeDS", "A");
        assert_eq!(global_similarity(&schema, &q, &c).unwrap().value(), 0.8125);

        let same = Case::new("T").with("gpa", 3.0).with("gradeDS", "B");
        assert_eq!(global_similarity(&schema, &q, &same).unwrap().value(), 1.0);
    }

    #[test]
    fn absent_attributes_are_renormalized_away() {
        let schema = two_attr_schema(true);
        let q = query(&schema, &[("gpa", 3.0.into()), ("gradeDS", "B".into())]);
        let c = Case::new("S").with("gpa", 3.5).with("gradeDS", "A").with("quiz1", 10.0);
        assert_eq!(global_similarity(&schema, &q, &c).unwrap().value(), 0.8125);
    }

    #[test]
    fn nothing_comparable() {
        let schema = two_attr_schema(true);
        let q = query(&schema, &[("quiz1", 50.0.into())]);
        let c = Case::new("S").with("gpa", 3.5);
        assert!(matches!(
            global_similarity(&schema, &q, &c),
            Err(Error::NoComparableAttributes)
        ));
    }

    fn base(cases: Vec<Case>) -> CaseBase {
        CaseBase::from_cases(Arc::new(two_attr_schema(false)), cases).unwrap()
    }

    #[test]
    fn retrieve_orders_and_truncates() {
        let cb = base(vec![
            Case::new("S03").with("gpa", 1.0).with("gradeDS", "B"), // 0.5*0.5 + 1*0.5 = 0.75
            Case::new("S02").with("gpa", 3.5).with("gradeDS", "A"), // 0.8125
            Case::new("S01").with("gpa", 3.0).with("gradeDS", "B"), // 1.0
        ]);
        let q = query(cb.schema(), &[("gpa", 3.0.into()), ("gradeDS", "B".into())]);
        let ids: Vec<_> = retrieve_k(&cb, &q, 5).unwrap().into_iter().map(|r| r.case_id).collect();
        assert_eq!(ids, ["S01", "S02", "S03"]);
        let top = retrieve_k(&cb, &q, 1).unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!((top[0].case_id.as_str(), top[0].score.value()), ("S01", 1.0));
    }

    #[test]
    fn ties_break_by_id() {
        let cb = base(vec![
            Case::new("S02").with("gpa", 2.0),
            Case::new("S01").with("gpa", 2.0),
        ]);
        let q = query(cb.schema(), &[("gpa", 3.0.into())]);
        let r = retrieve_k(&cb, &q, 5).unwrap();
        assert_eq!(r[0].case_id, "S01");
        assert_eq!(r[0].score, r[1].score);
    }

    #[test]
    fn retrieve_errors() {
        let empty = base(vec![]);
        let schema = student_schema();
        let q = query(&schema, &[("gpa", 3.0.into())]);
        assert!(matches!(retrieve_k(&empty, &q, 5), Err(Error::EmptyCaseBase)));

        let cb = base(vec![Case::new("S01").with("gradeDS", "A")]);
        let q = query(cb.schema(), &[("gpa", 3.0.into())]);
        assert!(matches!(retrieve_k(&cb, &q, 5), Err(Error::NoComparableAttributes)));
        assert!(matches!(retrieve_k(&cb, &q, 0), Err(Error::ZeroK)));
    }
}
