use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use axum::routing::post;
use axum::{Json, Router};
use ragged_core::dataset::{Corpus, DatasetError, QuerySet};
use ragged_core::retrieval::{
    rerank, Bm25Params, HttpScorer, InvertedIndex, MockScorer, RetrievalError, RetrievalRun,
};
use serde_json::{json, Value};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn toy6() -> (Corpus, QuerySet) {
    let corpus = Corpus::load(&fixture("toy6/corpus.jsonl")).unwrap();
    let queries = QuerySet::load(&fixture("toy6/queries.jsonl"), Some(&corpus)).unwrap();
    (corpus, queries)
}

fn bm25_run(corpus: &Corpus, queries: &QuerySet, k: usize) -> RetrievalRun {
    let index = InvertedIndex::build(corpus, Bm25Params { k1: 0.9, b: 0.4 }).unwrap();
    let lists = queries.iter().map(|q| {
        let hits = index.search(&q.question, k).unwrap();
        (
            q.query_id.clone(),
            hits.into_iter().map(|h| (h.passage_id, h.score)).collect(),
        )
    });
    RetrievalRun::from_ranked_lists("bm25", lists).unwrap()
}

fn ids(run: &RetrievalRun, q: &str) -> Vec<String> {
    run.ranking(q)
        .iter()
        .map(|e| e.passage_id.clone())
        .collect()
}

#[test]
fn corpus_export_ingest_round_trip() {
    let corpus = Corpus::load(&fixture("toy100/corpus.jsonl")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    corpus.export(&path).unwrap();
    let again = Corpus::load(&path).unwrap();
    assert_eq!(again.passages(), corpus.passages());
    let second = dir.path().join("c2.jsonl");
    again.export(&second).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(&second).unwrap()
    );
}

#[test]
fn malformed_corpus_lines_are_numbered() {
    let text =
        "{\"passage_id\":\"a\",\"doc_id\":\"d\",\"title\":\"\",\"text\":\"x\"}\n\n{not json\n";
    match Corpus::from_reader(text.as_bytes()) {
        Err(DatasetError::Malformed { line: 3, .. }) => {}
        other => panic!("unexpected {other:?}"),
    }
    let text = "{\"passage_id\":\"a\",\"doc_id\":\"d\",\"title\":\"\",\"text\":\"x\"}\n{\"passage_id\":\"b\",\"doc_id\":\"d\",\"title\":\"\",\"text\":\" \"}\n";
    match Corpus::from_reader(text.as_bytes()) {
        Err(DatasetError::InvalidPassage { line: 2, .. }) => {}
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn trec_export_import_round_trip() {
    let corpus = Corpus::load(&fixture("toy100/corpus.jsonl")).unwrap();
    let queries = QuerySet::load(&fixture("toy100/queries.jsonl"), Some(&corpus)).unwrap();
    let run = bm25_run(&corpus, &queries, 10);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.trec");
    run.export(&path).unwrap();
    let back = RetrievalRun::import(&path, "bm25").unwrap();
    assert_eq!(back, run);
    let again = dir.path().join("again.trec");
    back.export(&again).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(&again).unwrap()
    );
}

#[test]
fn malformed_trec_lines_are_numbered() {
    let cases: [(&str, usize); 4] = [
        ("q1 Q0 p1 1 2.0 r\nq1 Q0 p2 2 1.0\n", 2),
        ("q1 Q0 p1 1 2.0 r\n\nq1 Q0 p2 2 abc r\n", 3),
        ("q1 Q0 p1 x 2.0 r\n", 1),
        ("q1 Q0 p1 1 2.0 r\nq1 Q0 p1 2 1.0 r\n", 2),
    ];
    for (text, line) in cases {
        let err = RetrievalRun::from_trec(text.as_bytes(), "r").unwrap_err();
        let found = match err {
            RetrievalError::MalformedLine { line, .. }
            | RetrievalError::DuplicateEntry { line, .. } => line,
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(found, line, "{text:?}");
        assert!(err_text(text).contains(&format!("line {line}")));
    }
}

fn err_text(text: &str) -> String {
    RetrievalRun::from_trec(text.as_bytes(), "r")
        .unwrap_err()
        .to_string()
}

#[tokio::test]
async fn identity_rerank_keeps_order() {
    let (corpus, queries) = toy6();
    let run = bm25_run(&corpus, &queries, 5);
    let out = rerank(&run, &queries, &corpus, &MockScorer::Identity, 5, 2)
        .await
        .unwrap();
    for q in ["q1", "q2"] {
        assert_eq!(ids(&out, q), ids(&run, q));
    }
    assert_eq!(out.retriever_name(), "bm25+rerank");
}

#[tokio::test]
async fn negated_rerank_reverses_head_only() {
    let (corpus, queries) = toy6();
    let run = fixed_run();
    let out = rerank(&run, &queries, &corpus, &MockScorer::Negate, 3, 2)
        .await
        .unwrap();
    for q in ["q1", "q2"] {
        let before = ids(&run, q);
        let after = ids(&out, q);
        let mut head = before[..3].to_vec();
        head.reverse();
        assert_eq!(&after[..3], &head[..]);
        assert_eq!(&after[3..], &before[3..]);
        let mut a = before.clone();
        let mut b = after.clone();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        let scores: Vec<f64> = out.ranking(q).iter().map(|e| e.score).collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]), "{scores:?}");
    }
}

fn fixed_run() -> RetrievalRun {
    let lists = [
        (
            "q1".to_owned(),
            vec![
                ("p1", 5.0),
                ("p3", 4.0),
                ("p4", 3.0),
                ("p2", 2.0),
                ("p6", 1.0),
            ],
        ),
        (
            "q2".to_owned(),
            vec![
                ("p6", 5.0),
                ("p5", 4.0),
                ("p1", 3.0),
                ("p2", 2.0),
                ("p3", 1.0),
            ],
        ),
    ];
    RetrievalRun::from_ranked_lists(
        "bm25",
        lists
            .into_iter()
            .map(|(q, l)| (q, l.into_iter().map(|(p, s)| (p.to_owned(), s)).collect())),
    )
    .unwrap()
}

#[tokio::test]
async fn gold_aware_rerank_promotes_gold() {
    let (corpus, queries) = toy6();
    let run = fixed_run();
    let scorer = MockScorer::gold_aware(&queries);
    let out = rerank(&run, &queries, &corpus, &scorer, 5, 1)
        .await
        .unwrap();
    assert_eq!(ids(&out, "q1"), ["p2", "p1", "p3", "p4", "p6"]);
    assert_eq!(ids(&out, "q2"), ["p5", "p6", "p1", "p2", "p3"]);
}

async fn serve(app: Router) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}/score")
}

#[tokio::test]
async fn http_scorer_against_local_service() {
    // Scores each passage by its text length, so the longest comes first.
    let app = Router::new().route(
        "/score",
        post(|Json(body): Json<Value>| async move {
            let scores: Vec<f64> = body["passages"]
                .as_array()
                .unwrap()
                .iter()
                .map(|p| p["text"].as_str().unwrap().len() as f64)
                .collect();
            Json(json!({ "scores": scores }))
        }),
    );
    let endpoint = serve(app).await;
    let (corpus, queries) = toy6();
    let run = fixed_run();
    let scorer = HttpScorer::new(endpoint, vec![], Duration::from_secs(5)).unwrap();
    let out = rerank(&run, &queries, &corpus, &scorer, 3, 2)
        .await
        .unwrap();
    for q in ["q1", "q2"] {
        let head = &ids(&out, q)[..3];
        let lengths: Vec<usize> = head
            .iter()
            .map(|p| corpus.get(p).unwrap().text.len())
            .collect();
        assert!(lengths.windows(2).all(|w| w[0] >= w[1]), "{lengths:?}");
        assert_eq!(&ids(&out, q)[3..], &ids(&run, q)[3..]);
    }
}

#[tokio::test]
async fn http_scorer_errors_surface() {
    let app = Router::new().route(
        "/score",
        post(|| async { (axum::http::StatusCode::INTERNAL_SERVER_ERROR, "boom") }),
    );
    let endpoint = serve(app).await;
    let (corpus, queries) = toy6();
    let run = bm25_run(&corpus, &queries, 3);
    let scorer = HttpScorer::new(endpoint, vec![], Duration::from_secs(5)).unwrap();
    let err = rerank(&run, &queries, &corpus, &scorer, 2, 1)
        .await
        .unwrap_err();
    assert!(matches!(err, RetrievalError::Scorer { .. }), "{err:?}");
}

#[test]
fn index_search_is_deterministic() {
    let (corpus, queries) = toy6();
    let a = bm25_run(&corpus, &queries, 5);
    let b = bm25_run(&corpus, &queries, 5);
    let dump = |r: &RetrievalRun| {
        let mut buf = Vec::new();
        r.write_trec(&mut buf).unwrap();
        buf
    };
    assert_eq!(dump(&a), dump(&b));
    let lines: BTreeMap<&str, usize> =
        [("q1", a.ranking("q1").len()), ("q2", a.ranking("q2").len())].into();
    assert!(lines.values().sum::<usize>() <= 10);
    assert_eq!(a.ranking("q1")[0].passage_id, "p2");
    assert_eq!(a.ranking("q2")[0].passage_id, "p5");
}
