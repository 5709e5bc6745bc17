//! External classifier protocol, exercised against real child processes.

use augaudit_core::classifier::{run_external, ClassifierError};
use augaudit_core::corpus::TestCase;

fn case(id: &str, category: &str, code: &str) -> TestCase {
    TestCase::original(id, category, code)
}

fn train_cases() -> Vec<TestCase> {
    vec![
        case("tr1", "Async", "a();"),
        case("tr2", "Async", "b();"),
        case("tr3", "Time", "c();"),
    ]
}

fn eval_cases() -> Vec<TestCase> {
    vec![case("e1", "Async", "x();"), case("e2", "Time", "y();")]
}

/// Stub emitting a fixed category for every eval record.
const FIXED_STUB: &str = r#"python3 -c '
import sys, json
for line in sys.stdin:
    r = json.loads(line)
    if r["role"] == "eval":
        print(json.dumps({"id": r["id"], "category": "Async"}))
'"#;

#[test]
fn fixed_category_stub() {
    let predictions = run_external(FIXED_STUB, &train_cases(), &eval_cases()).unwrap();
    assert_eq!(predictions.len(), 2);
    assert!(predictions.iter().all(|p| p.category == "Async"));
    // Output order follows eval order regardless of child ordering.
    assert_eq!(predictions[0].id, "e1");
    assert_eq!(predictions[1].id, "e2");
}

#[test]
fn majority_label_stub_matches_local_majority() {
    let stub = r#"python3 -c '
import sys, json, collections
counts = collections.Counter()
evals = []
for line in sys.stdin:
    r = json.loads(line)
    if r["role"] == "train":
        counts[r["category"]] += 1
    else:
        evals.append(r["id"])
majority = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
for eid in evals:
    print(json.dumps({"id": eid, "category": majority}))
'"#;
    let train = train_cases();
    let predictions = run_external(stub, &train, &eval_cases()).unwrap();
    // Local majority: Async appears twice, Time once.
    let mut tally = std::collections::BTreeMap::new();
    for c in &train {
        *tally.entry(c.category.clone()).or_insert(0usize) += 1;
    }
    let local_majority = tally.iter().max_by_key(|(_, n)| **n).unwrap().0.clone();
    assert!(predictions.iter().all(|p| p.category == local_majority));
}

#[test]
fn omitted_id_is_incomplete() {
    let stub = r#"python3 -c '
import sys, json
first = True
for line in sys.stdin:
    r = json.loads(line)
    if r["role"] == "eval":
        if first:
            first = False
            continue
        print(json.dumps({"id": r["id"], "category": "Async"}))
'"#;
    let err = run_external(stub, &train_cases(), &eval_cases()).unwrap_err();
    match err {
        ClassifierError::IncompletePredictions { missing, total, first } => {
            assert_eq!((missing, total), (1, 2));
            assert_eq!(first, "e1");
        }
        other => panic!("expected IncompletePredictions, got {other}"),
    }
}

#[test]
fn duplicate_prediction_is_rejected() {
    let stub = r#"python3 -c '
import sys, json
for line in sys.stdin:
    r = json.loads(line)
    if r["role"] == "eval":
        print(json.dumps({"id": r["id"], "category": "Async"}))
        print(json.dumps({"id": r["id"], "category": "Time"}))
'"#;
    let err = run_external(stub, &train_cases(), &eval_cases()).unwrap_err();
    assert!(matches!(err, ClassifierError::DuplicatePrediction(id) if id == "e1"));
}

#[test]
fn unknown_id_is_rejected() {
    let stub = r#"echo '{"id":"ghost","category":"Async"}'"#;
    let err = run_external(stub, &train_cases(), &eval_cases()).unwrap_err();
    assert!(matches!(err, ClassifierError::UnknownPredictionId(id) if id == "ghost"));
}

#[test]
fn malformed_output_reports_line() {
    let stub = "echo 'this is not json'";
    let err = run_external(stub, &train_cases(), &eval_cases()).unwrap_err();
    match err {
        ClassifierError::MalformedPrediction { line_no, line, .. } => {
            assert_eq!(line_no, 1);
            assert_eq!(line, "this is not json");
        }
        other => panic!("expected MalformedPrediction, got {other}"),
    }
}

#[test]
fn process_failure_is_reported() {
    let err = run_external("exit 7", &train_cases(), &eval_cases()).unwrap_err();
    assert!(matches!(err, ClassifierError::ProcessFailure(_)), "{err}");
}
