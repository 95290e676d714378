//! Final-grade outlook from the retrieved neighborhood, feedback text, and a
//! leave-one-out harness for the prediction.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::case_base::CaseBase;
use crate::error::{Error, Result};
use crate::schema::{grade_rank, AttributeType, Case, CaseSchema, Query, Value};
use crate::similarity::{rank_cases, SimilarityScore};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Neighbor {
    pub case_id: String,
    pub score: SimilarityScore,
    pub grade: String,
    pub values: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GradeDistribution {
    pub counts: BTreeMap<String, usize>,
    pub proportions: BTreeMap<String, f64>,
    /// Majority grade; ties go to the better grade.
    pub suggestion: String,
    /// Best grade present among the neighbors.
    pub best: String,
    pub hint: String,
    pub neighbors: Vec<Neighbor>,
}

impl GradeDistribution {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn is_unanimous(&self) -> bool {
        self.counts.len() == 1
    }
}

fn outcome_scale(schema: &CaseSchema) -> Result<(&str, &[String])> {
    let spec = schema.outcome_attribute().ok_or(Error::NoOutcomeAttribute)?;
    match &spec.ty {
        AttributeType::Grade { scale } => Ok((spec.name.as_str(), scale.as_slice())),
        _ => unreachable!("outcome attribute is graded"),
    }
}

pub fn predict_final_grade(case_base: &CaseBase, query: &Query, k: usize) -> Result<GradeDistribution> {
    predict_from(case_base.schema(), case_base.cases(), query, k)
}

/// Predicts from an arbitrary set of cases. Neighbors without a final grade
/// are skipped and the next-ranked labeled case takes their place.
pub fn predict_from<'a>(
    schema: &CaseSchema,
    cases: impl IntoIterator<Item = &'a Case> + Clone,
    query: &Query,
    k: usize,
) -> Result<GradeDistribution> {
    if k == 0 {
        return Err(Error::ZeroK);
    }
    let (outcome, scale) = outcome_scale(schema)?;
    let by_id: BTreeMap<&str, &Case> = cases.clone().into_iter().map(|c| (c.id.as_str(), c)).collect();
    let ranked = match rank_cases(schema, cases, query) {
        Ok(r) => r,
        Err(Error::NoComparableAttributes) => Vec::new(),
        Err(e) => return Err(e),
    };

    let neighbors: Vec<Neighbor> = ranked
        .into_iter()
        .filter_map(|r| {
            let case = by_id[r.case_id.as_str()];
            match case.get(outcome) {
                Some(Value::Text(grade)) => Some(Neighbor {
                    case_id: r.case_id,
                    score: r.score,
                    grade: grade.clone(),
                    values: case.values.clone(),
                }),
                _ => None,
            }
        })
        .take(k)
        .collect();
    if neighbors.is_empty() {
        return Err(Error::NoLabeledNeighbors);
    }

    let mut counts = BTreeMap::new();
    for n in &neighbors {
        *counts.entry(n.grade.clone()).or_insert(0usize) += 1;
    }
    let total = neighbors.len() as f64;
    let proportions = counts.iter().map(|(g, &c)| (g.clone(), c as f64 / total)).collect();
    let rank = |g: &str| grade_rank(scale, g).unwrap_or_default();
    let suggestion = counts
        .iter()
        .max_by(|(ga, ca), (gb, cb)| ca.cmp(cb).then_with(|| rank(ga).cmp(&rank(gb))))
        .map(|(g, _)| g.clone())
        .expect("at least one neighbor");
    let best = counts
        .keys()
        .max_by_key(|g| rank(g))
        .cloned()
        .expect("at least one neighbor");

    let n = neighbors.len();
    let hint = if counts.len() == 1 {
        format!("All {n} similar cases finished with {suggestion}.")
    } else if best == suggestion {
        format!(
            "Most likely {suggestion} ({} of {n} similar cases); no better grade appears among them.",
            counts[&suggestion]
        )
    } else {
        format!(
            "Most likely {suggestion} ({} of {n} similar cases), but there is a chance to get {best} ({} of {n} reached it).",
            counts[&suggestion], counts[&best]
        )
    };

    Ok(GradeDistribution {
        counts,
        proportions,
        suggestion,
        best,
        hint,
        neighbors,
    })
}

/// Thresholds for calling an open attribute a lever.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackConfig {
    /// Minimum mean difference as a fraction of a numeric attribute's range
    /// (0.10 is 10 points on a 0-100 score).
    pub numeric_fraction: f64,
    /// Minimum mean difference in grade steps.
    pub grade_steps: f64,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            numeric_fraction: 0.10,
            grade_steps: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Lever {
    pub attribute: String,
    pub better_mean: f64,
    pub majority_mean: f64,
}

type NumericView<'a> = dyn Fn(&Value) -> Option<f64> + 'a;

/// Open description attributes on which the better-graded neighbors scored
/// markedly higher than the neighbors holding the suggested grade.
pub fn find_levers(
    schema: &CaseSchema,
    dist: &GradeDistribution,
    query: &Query,
    config: &FeedbackConfig,
) -> Vec<Lever> {
    let Ok((_, scale)) = outcome_scale(schema) else {
        return Vec::new();
    };
    let rank = |g: &str| grade_rank(scale, g).unwrap_or_default();
    let target = rank(&dist.suggestion);
    let better: Vec<&Neighbor> = dist.neighbors.iter().filter(|n| rank(&n.grade) > target).collect();
    let majority: Vec<&Neighbor> = dist.neighbors.iter().filter(|n| rank(&n.grade) == target).collect();
    if better.is_empty() || majority.is_empty() {
        return Vec::new();
    }

    let mut levers = Vec::new();
    for spec in schema.description() {
        if query.get(&spec.name).is_some() {
            continue;
        }
        let (as_number, threshold): (Box<NumericView>, f64) = match &spec.ty {
            AttributeType::Numeric { min, max } => (
                Box::new(|v| match v {
                    Value::Number(x) => Some(*x),
                    _ => None,
                }),
                config.numeric_fraction * (max - min),
            ),
            AttributeType::Grade { scale } => (
                Box::new(move |v| match v {
                    Value::Text(g) => grade_rank(scale, g).map(|r| r as f64),
                    _ => None,
                }),
                config.grade_steps,
            ),
            _ => continue,
        };
        let mean = |group: &[&Neighbor]| {
            let xs: Vec<f64> = group
                .iter()
                .filter_map(|n| n.values.get(&spec.name).and_then(&as_number))
                .collect();
            (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
        };
        if let (Some(better_mean), Some(majority_mean)) = (mean(&better), mean(&majority)) {
            if better_mean - majority_mean >= threshold {
                levers.push(Lever {
                    attribute: spec.name.clone(),
                    better_mean,
                    majority_mean,
                });
            }
        }
    }
    levers
}

/// Deterministic feedback text: likely outcome, best attainable outcome, and levers.
pub fn generate_feedback(
    schema: &CaseSchema,
    dist: &GradeDistribution,
    query: &Query,
    config: &FeedbackConfig,
) -> String {
    let n = dist.total();
    let mut text = String::new();
    if dist.is_unanimous() {
        let _ = writeln!(text, "Likely final grade: {} (all {n} similar cases).", dist.suggestion);
        return text;
    }
    let share = dist.counts[&dist.suggestion];
    let _ = writeln!(
        text,
        "Likely final grade: {} ({share} of {n} similar cases, {:.0}%).",
        dist.suggestion,
        dist.proportions[&dist.suggestion] * 100.0
    );
    if dist.best != dist.suggestion {
        let _ = writeln!(
            text,
            "Best attainable: {} ({} of {n} similar cases reached it).",
            dist.best, dist.counts[&dist.best]
        );
        let levers = find_levers(schema, dist, query, config);
        if !levers.is_empty() {
            let list: Vec<String> = levers
                .iter()
                .map(|l| format!("{} (mean {:.1} vs {:.1})", l.attribute, l.better_mean, l.majority_mean))
                .collect();
            let _ = writeln!(
                text,
                "Levers: cases that reached a better grade than {} scored markedly higher on {}.",
                dist.suggestion,
                list.join(", ")
            );
        }
    }
    text
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LooReport {
    pub k: usize,
    pub total: usize,
    pub exact_matches: usize,
    pub accuracy: f64,
    /// actual grade → predicted grade → count
    pub confusion: BTreeMap<String, BTreeMap<String, usize>>,
    /// Labeled cases that could not be evaluated (no weighted description
    /// values, or no comparable labeled neighbor).
    pub skipped: usize,
}

/// Holds out each labeled case in turn and predicts its final grade from the rest.
pub fn leave_one_out(case_base: &CaseBase, k: usize) -> Result<LooReport> {
    let schema = case_base.schema();
    let (outcome, _) = outcome_scale(schema)?;
    let labeled: Vec<&Case> = case_base
        .cases()
        .iter()
        .filter(|c| matches!(c.get(outcome), Some(Value::Text(_))))
        .collect();
    if labeled.len() < 2 {
        return Err(Error::InsufficientLabeled(labeled.len()));
    }

    let mut report = LooReport {
        k,
        total: 0,
        exact_matches: 0,
        accuracy: 0.0,
        confusion: BTreeMap::new(),
        skipped: 0,
    };
    for held_out in labeled {
        let Some(Value::Text(actual)) = held_out.get(outcome) else {
            unreachable!("filtered to labeled cases");
        };
        let Ok(query) = Query::from_case(schema, held_out) else {
            report.skipped += 1;
            continue;
        };
        let rest = case_base.cases().iter().filter(|c| c.id != held_out.id);
        let predicted = match predict_from(schema, rest, &query, k) {
            Ok(dist) => dist.suggestion,
            Err(Error::NoLabeledNeighbors) => {
                report.skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        report.total += 1;
        if &predicted == actual {
            report.exact_matches += 1;
        }
        *report
            .confusion
            .entry(actual.clone())
            .or_default()
            .entry(predicted)
            .or_insert(0) += 1;
    }
    if report.total > 0 {
        report.accuracy = report.exact_matches as f64 / report.total as f64;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::schema::student_schema;

    fn case(id: &str, quiz1: f64, quiz2: Option<f64>, grade: Option<&str>) -> Case {
        let mut c = Case::new(id).with("quiz1", quiz1);
        if let Some(q) = quiz2 {
            c = c.with("quiz2", q);
        }
        if let Some(g) = grade {
            c = c.with("finalGrade", g);
        }
        c
    }

    fn base(cases: Vec<Case>) -> CaseBase {
        CaseBase::from_cases(Arc::new(student_schema()), cases).unwrap()
    }

    fn quiz1_query(v: f64) -> Query {
        Query::new(&student_schema(), BTreeMap::from([("quiz1".into(), Value::Number(v))])).unwrap()
    }

    #[test]
    fn four_b_one_a() {
        let cb = base(vec![
            case("S1", 50.0, Some(50.0), Some("B")),
            case("S2", 51.0, Some(55.0), Some("B")),
            case("S3", 49.0, Some(52.0), Some("B")),
            case("S4", 52.0, Some(60.0), Some("B")),
            case("S5", 48.0, Some(90.0), Some("A")),
            case("S6", 95.0, Some(95.0), Some("A")),
        ]);
        let q = quiz1_query(50.0);
        let dist = predict_final_grade(&cb, &q, 5).unwrap();
        assert_eq!(dist.counts, BTreeMap::from([("A".into(), 1), ("B".into(), 4)]));
        assert_eq!(dist.proportions["B"], 0.8);
        assert_eq!(dist.proportions["A"], 0.2);
        assert_eq!(dist.suggestion, "B");
        assert_eq!(dist.best, "A");
        assert!(dist.hint.contains("chance to get A"), "{}", dist.hint);

        let text = generate_feedback(&student_schema(), &dist, &q, &FeedbackConfig::default());
        assert!(text.contains("Likely final grade: B"), "{text}");
        assert!(text.contains("Best attainable: A"), "{text}");
        assert!(text.contains("quiz2 (mean 90.0 vs 54.2)"), "{text}");
        assert_eq!(
            text,
            generate_feedback(&student_schema(), &dist, &q, &FeedbackConfig::default())
        );
    }

    #[test]
    fn unanimous_neighborhood() {
        let cb = base(vec![
            case("S1", 50.0, None, Some("A")),
            case("S2", 60.0, None, Some("A")),
        ]);
        let q = quiz1_query(50.0);
        let dist = predict_final_grade(&cb, &q, 5).unwrap();
        assert_eq!(dist.suggestion, "A");
        assert_eq!(dist.proportions, BTreeMap::from([("A".into(), 1.0)]));
        let text = generate_feedback(&student_schema(), &dist, &q, &FeedbackConfig::default());
        assert_eq!(text, "Likely final grade: A (all 2 similar cases).\n");
    }

    #[test]
    fn tie_goes_to_better_grade() {
        let cb = base(vec![
            case("S1", 50.0, None, Some("A")),
            case("S2", 50.0, None, Some("A")),
            case("S3", 50.0, None, Some("B")),
            case("S4", 50.0, None, Some("B")),
            case("S5", 50.0, None, Some("C")),
        ]);
        let dist = predict_final_grade(&cb, &quiz1_query(50.0), 5).unwrap();
        assert_eq!(dist.suggestion, "A");
    }

    #[test]
    fn unlabeled_neighbors_are_backfilled() {
        let cb = base(vec![
            case("S1", 50.0, None, None),
            case("S2", 60.0, None, Some("C")),
            case("S3", 90.0, None, Some("A")),
        ]);
        let dist = predict_final_grade(&cb, &quiz1_query(50.0), 2).unwrap();
        let ids: Vec<_> = dist.neighbors.iter().map(|n| n.case_id.as_str()).collect();
        assert_eq!(ids, ["S2", "S3"]);

        let unlabeled = base(vec![case("S1", 50.0, None, None)]);
        assert!(matches!(
            predict_final_grade(&unlabeled, &quiz1_query(50.0), 5),
            Err(Error::NoLabeledNeighbors)
        ));
    }

    #[test]
    fn no_lever_section_when_everything_is_filled() {
        let cb = base(vec![
            case("S1", 50.0, Some(50.0), Some("B")),
            case("S2", 50.0, Some(90.0), Some("A")),
            case("S3", 50.0, Some(52.0), Some("B")),
        ]);
        let schema = student_schema();
        let values: BTreeMap<String, Value> = BTreeMap::from([
            ("gpa".into(), Value::Number(3.0)),
            ("gradeDigitalSystems".into(), "B".into()),
            ("gradeBasicProgramming".into(), "B".into()),
            ("skillAssembly".into(), true.into()),
            ("skillProgramming".into(), true.into()),
            ("skillInstrumentDesign".into(), false.into()),
            ("quiz1".into(), Value::Number(50.0)),
            ("midExam".into(), Value::Number(50.0)),
            ("quiz2".into(), Value::Number(50.0)),
        ]);
        let q = Query::new(&schema, values).unwrap();
        let dist = predict_final_grade(&cb, &q, 3).unwrap();
        let text = generate_feedback(&schema, &dist, &q, &FeedbackConfig::default());
        assert!(text.contains("Best attainable: A"));
        assert!(!text.contains("Levers"), "{text}");
    }

    #[test]
    fn loo_on_duplicate_pairs_is_perfect() {
        let grades = ["A", "B", "C", "D", "E"];
        let mut cases = Vec::new();
        for i in 0..10 {
            for twin in ["a", "b"] {
                cases.push(case(
                    &format!("S{i:02}{twin}"),
                    i as f64 * 10.0,
                    None,
                    Some(grades[i % 5]),
                ));
            }
        }
        let report = leave_one_out(&base(cases), 1).unwrap();
        assert_eq!(report.total, 20);
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.confusion.values().flat_map(|m| m.values()).sum::<usize>(), 20);
    }

    #[test]
    fn loo_needs_two_labeled_cases() {
        let cb = base(vec![case("S1", 50.0, None, Some("A")), case("S2", 50.0, None, None)]);
        assert!(matches!(leave_one_out(&cb, 5), Err(Error::InsufficientLabeled(1))));
    }
}
