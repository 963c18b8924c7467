// Property suites shared by this crate's tests and the acceptance harness.
// Each suite runs a fixed number of generated cases from a fixed seed and
// reports the first counterexample.

use goalflow_core::enumerate::{count_markers, parse_enumerated};
use goalflow_core::goal::{GoalWorkflow, Repository, SlotSpec};
use goalflow_core::ops::{answer_operational, Edge, ObjectType, OperationalStore, Row, StoreSeed};
use goalflow_core::retriever::{
    Candidate, GoalIndex, HashedTrigramEmbedder, MatchKind, RetrieverConfig, TargetRef,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use std::sync::Arc;

pub const VOCAB: &[&str] = &[
    "segment", "audience", "pipeline", "dataset", "schema", "journey", "profile", "merge", "policy",
    "ingest", "batch", "stream", "export", "consent", "identity", "graph", "rule", "filter",
    "source", "field", "mapping", "error", "retry", "quota", "label", "owner", "archive",
    "delete", "duplicate", "refresh", "ticket", "priority", "phone", "title", "report",
    "alert", "monitor", "tag", "sandbox", "token",
];

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn phrase(min: usize, max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(VOCAB), min..=max).prop_map(|w| w.join(" "))
}

fn workflow(i: usize) -> impl Strategy<Value = GoalWorkflow> {
    let guidance = (phrase(2, 6), prop::collection::vec((phrase(1, 5), phrase(2, 8)), 1..=5)).prop_map(
        move |(goal, steps)| GoalWorkflow::guidance(&goal, steps).with_id(format!("g{i}")),
    );
    let slots = (phrase(2, 6), 1usize..=4).prop_map(move |(goal, n)| {
        GoalWorkflow::slot_filling(&goal, (0..n).map(|k| SlotSpec::new(format!("slot {k}")))).with_id(format!("g{i}"))
    });
    prop_oneof![3 => guidance, 1 => slots]
}

pub fn repository() -> impl Strategy<Value = Repository> {
    (1usize..=4)
        .prop_flat_map(|n| (0..n).map(workflow).collect::<Vec<_>>())
        .prop_map(|ws| Repository::from_workflows(ws).expect("generated workflows are valid"))
}

fn index(repo: &Repository, alpha: f64, tau: f64) -> GoalIndex {
    GoalIndex::build(repo, Arc::new(HashedTrigramEmbedder::default()), RetrieverConfig { alpha, tau })
        .expect("hashed embedder is infallible")
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

/// Querying with a target's own text scores it 1.0, the maximum.
pub fn retriever_self_retrieval(cases: u32) -> Result<(), String> {
    let strategy = repository().prop_flat_map(|repo| {
        let n = goalflow_core::retriever::enumerate_targets(&repo).len();
        (Just(repo), 0..n)
    });
    runner(cases)
        .run(&strategy, |(repo, pick)| {
            let idx = index(&repo, 0.5, 0.45);
            let target = &idx.targets()[pick];
            let m = idx.match_query(&target.text).unwrap();
            let own = m.candidates.iter().find(|c| c.target == target.target).unwrap();
            prop_assert!((own.combined - 1.0).abs() < 1e-9, "own score {}", own.combined);
            prop_assert!(m.combined_score <= own.combined + 1e-12);
            let unique = m
                .candidates
                .iter()
                .filter(|c| c.combined >= own.combined - 1e-9)
                .count()
                == 1;
            if unique {
                prop_assert_eq!(m.candidates[0].target.clone(), target.target.clone());
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// Every score lies in [0, 1] and the blend is exactly the weighted sum.
pub fn retriever_score_bounds(cases: u32) -> Result<(), String> {
    let strategy = (repository(), phrase(1, 8), 0.0f64..=1.0);
    runner(cases)
        .run(&strategy, |(repo, query, alpha)| {
            let m = index(&repo, alpha, 0.45).match_query(&query).unwrap();
            for c in &m.candidates {
                prop_assert!(in_unit(c.lexical) && in_unit(c.semantic) && in_unit(c.combined), "{c:?}");
                let blend = alpha * c.lexical + (1.0 - alpha) * c.semantic;
                prop_assert!((c.combined - blend).abs() < 1e-12, "{c:?} vs {blend}");
            }
            prop_assert!(in_unit(m.combined_score));
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn expected_order(idx: &GoalIndex, m_candidates: &[Candidate], score: fn(&Candidate) -> f64) -> Vec<TargetRef> {
    let pos = |t: &TargetRef| idx.targets().iter().position(|x| &x.target == t).unwrap();
    let mut sorted: Vec<&Candidate> = m_candidates.iter().collect();
    sorted.sort_by(|a, b| {
        score(b)
            .total_cmp(&score(a))
            .then_with(|| a.target.step_index.is_some().cmp(&b.target.step_index.is_some()))
            .then_with(|| pos(&a.target).cmp(&pos(&b.target)))
    });
    sorted.into_iter().map(|c| c.target.clone()).collect()
}

/// With alpha = 1 the ranking is the lexical ranking; with alpha = 0 it
/// is the semantic ranking.
pub fn retriever_alpha_extremes(cases: u32) -> Result<(), String> {
    let strategy = (repository(), phrase(1, 8));
    runner(cases)
        .run(&strategy, |(repo, query)| {
            for (alpha, score) in [(1.0, (|c: &Candidate| c.lexical) as fn(&Candidate) -> f64), (0.0, |c: &Candidate| c.semantic)] {
                let idx = index(&repo, alpha, 0.45);
                let m = idx.match_query(&query).unwrap();
                let got: Vec<TargetRef> = m.candidates.iter().map(|c| c.target.clone()).collect();
                prop_assert_eq!(got, expected_order(&idx, &m.candidates, score), "alpha {}", alpha);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// NoMatch exactly when the best blended score is below the threshold.
pub fn retriever_no_match_threshold(cases: u32) -> Result<(), String> {
    let strategy = (repository(), phrase(1, 8), 0.0f64..=1.0);
    runner(cases)
        .run(&strategy, |(repo, query, tau)| {
            let m = index(&repo, 0.5, tau).match_query(&query).unwrap();
            let best = m.candidates.iter().map(|c| c.combined).fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(m.kind == MatchKind::NoMatch, best < tau, "best {} tau {}", best, tau);
            if m.kind != MatchKind::NoMatch {
                prop_assert_eq!(m.combined_score, best);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

const ORDINALS: &[&str] = &["First", "Second", "Third", "Fourth", "Fifth", "Sixth", "Seventh", "Eighth", "Ninth", "Tenth"];

/// Render `bodies` as an enumerated description in one of three styles.
pub fn enumerated_text(style: usize, preamble: &str, bodies: &[String]) -> String {
    let mut out = format!("I have a goal to {preamble}.");
    for (i, body) in bodies.iter().enumerate() {
        match style {
            0 => out.push_str(&format!(" Step {}: {body}.", i + 1)),
            1 => out.push_str(&format!("\n{}. {body}.", i + 1)),
            _ => out.push_str(&format!(" {}, {body}.", ORDINALS[i])),
        }
    }
    out
}

/// A description with k markers parses into exactly k steps.
pub fn enumeration_marker_count(cases: u32) -> Result<(), String> {
    let strategy = (0usize..3, phrase(2, 5), prop::collection::vec(phrase(1, 7), 1..=9));
    runner(cases)
        .run(&strategy, |(style, preamble, bodies)| {
            let text = enumerated_text(style, &preamble, &bodies);
            let k = bodies.len();
            prop_assert_eq!(count_markers(&text), Some(k), "{}", text);
            let parsed = parse_enumerated(&text).unwrap();
            prop_assert_eq!(parsed.steps.len(), k, "{}", text);
            for (s, body) in parsed.steps.iter().zip(&bodies) {
                prop_assert!(s.0.to_lowercase().starts_with(&body.to_lowercase()), "{:?} vs {}", s, body);
            }
            let w = parsed.into_workflow();
            prop_assert!(goalflow_core::goal::validate_workflow(&w).is_empty());
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn seed() -> impl Strategy<Value = StoreSeed> {
    let sizes = prop::collection::vec(0usize..15, 8);
    sizes
        .prop_flat_map(|sizes| {
            let total: usize = sizes.iter().sum();
            let edges = prop::collection::vec((0..total.max(1), 0..total.max(1)), 0..=(total * 2));
            (Just(sizes), edges)
        })
        .prop_map(|(sizes, picks)| {
            let mut tables: Vec<Vec<Row>> = Vec::new();
            let mut flat: Vec<(ObjectType, String)> = Vec::new();
            for (t, n) in ObjectType::ALL.iter().zip(&sizes) {
                let rows: Vec<Row> = (0..*n)
                    .map(|i| Row {
                        id: format!("{}-{i}", t.table()),
                        name: format!("{} {i}", t.singular()),
                        created_at: format!("2024-02-{:02}", i + 1),
                    })
                    .collect();
                flat.extend(rows.iter().map(|r| (*t, r.id.clone())));
                tables.push(rows);
            }
            let edges = if flat.is_empty() {
                Vec::new()
            } else {
                picks
                    .into_iter()
                    .map(|(a, b)| {
                        let (ft, fid) = flat[a % flat.len()].clone();
                        let (tt, tid) = flat[b % flat.len()].clone();
                        Edge {
                            from_type: ft,
                            from_id: fid,
                            to_type: tt,
                            to_id: tid,
                        }
                    })
                    .collect()
            };
            let mut it = tables.into_iter();
            StoreSeed {
                attributes: it.next().unwrap(),
                audiences: it.next().unwrap(),
                dataflows: it.next().unwrap(),
                datasets: it.next().unwrap(),
                destinations: it.next().unwrap(),
                journeys: it.next().unwrap(),
                schemas: it.next().unwrap(),
                sources: it.next().unwrap(),
                edges,
            }
        })
}

fn seed_rows(seed: &StoreSeed, t: ObjectType) -> &[Row] {
    match t {
        ObjectType::Attributes => &seed.attributes,
        ObjectType::Audiences => &seed.audiences,
        ObjectType::Dataflows => &seed.dataflows,
        ObjectType::Datasets => &seed.datasets,
        ObjectType::Destinations => &seed.destinations,
        ObjectType::Journeys => &seed.journeys,
        ObjectType::Schemas => &seed.schemas,
        ObjectType::Sources => &seed.sources,
    }
}

fn leading_number(text: &str) -> Option<usize> {
    text.split(|c: char| !c.is_ascii_digit())
        .find(|s| !s.is_empty())
        .and_then(|s| s.parse().ok())
}

/// COUNT and COUNT_UNUSED answers equal a brute-force recount of the seed.
pub fn operational_oracle(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&seed(), |seed| {
            let store = OperationalStore::from_seed(seed.clone()).unwrap();
            for t in ObjectType::ALL {
                let rows = seed_rows(&seed, t);
                let brute_count = rows.len();
                let brute_unused = rows
                    .iter()
                    .filter(|r| !seed.edges.iter().any(|e| e.to_type == t && e.to_id == r.id))
                    .count();

                let a = answer_operational(&format!("How many {} do I have?", t.table()), &store);
                prop_assert_eq!(a.sql_text.clone(), Some(format!("SELECT COUNT(*) FROM {}", t.table())));
                prop_assert_eq!(leading_number(&a.text), Some(brute_count), "{}", a.text);

                let a = answer_operational(&format!("How many {} have never been used?", t.table()), &store);
                prop_assert!(a.sql_text.as_deref().unwrap_or("").contains("NOT EXISTS"));
                prop_assert_eq!(leading_number(&a.text), Some(brute_unused), "{}", a.text);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}
