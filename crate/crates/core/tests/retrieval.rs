mod common;

use attrib_core::modelio::LexicalScorer;
use attrib_core::retrieval::{rerank, trec, two_stage, Bm25Params, Depths, Index, RankedList};
use attrib_core::text::Analyzer;
use proptest::prelude::*;

fn index() -> Index {
    Index::build(&common::two_doc_corpus(), &Analyzer::default(), Bm25Params::default()).unwrap()
}

#[test]
fn hand_fixtures() {
    common::check_retrieval_fixtures().unwrap();
}

#[test]
fn bm25_hand_score() {
    let s = index().bm25_score(&["cat".into()], "d1").unwrap();
    assert!((s - 0.668).abs() < 1e-3, "{s}");
    assert_eq!(index().bm25_score(&["cat".into()], "d2").unwrap(), 0.0);
    assert!(index().bm25_score(&["the".into()], "d2").unwrap() > 0.0);
}

#[test]
fn index_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("index.json");
    let idx = index();
    idx.save(&path).unwrap();
    let back = Index::load(&path).unwrap();
    assert_eq!(back.search("q", "cat sat", 10), idx.search("q", "cat sat", 10));
}

#[test]
fn rerank_moves_matching_passage_up() {
    let corpus = common::two_doc_corpus();
    let first = RankedList::from_scores("q", [("d1", 2.0), ("d2", 1.0)], 2);
    let out = rerank(&first, "dog", &corpus, &LexicalScorer::default(), 100).unwrap();
    assert_eq!(out.ids()[0], "d2");
    let two = two_stage(&index(), &corpus, &LexicalScorer::default(), "q", "the dog", Depths::default()).unwrap();
    assert_eq!(two.ids()[0], "d2");
}

#[test]
fn run_file_round_trip() {
    let a = RankedList::from_scores("q1", [("d1", 2.5), ("d2", 1.0)], 10);
    let b = RankedList::from_scores("q2", [("d9", 0.5)], 10);
    let text = trec::format_run([&a, &b], "tag");
    let back = trec::parse_run(&text).unwrap();
    assert_eq!(back["q1"].ids(), a.ids());
    assert_eq!(back["q2"].ids(), b.ids());
}

fn corpus_strategy() -> impl Strategy<Value = Vec<String>> {
    let words = prop::sample::select(vec!["river", "mountain", "forest", "trout", "eagle", "north", "south"]);
    prop::collection::vec(prop::collection::vec(words, 1..8).prop_map(|w| w.join(" ")), 1..12)
}

proptest! {
    #[test]
    fn shallow_search_is_prefix_of_deep_search(texts in corpus_strategy(), k in 1usize..6) {
        let corpus = attrib_core::corpus::Corpus::from_passages(texts.iter().enumerate().map(|(i, t)| {
            attrib_core::corpus::Passage { id: format!("d{i:02}"), text: t.clone(), title: None }
        })).unwrap();
        let idx = Index::build(&corpus, &Analyzer::default(), Bm25Params::default()).unwrap();
        let deep = idx.search("q", "river trout north", 100);
        let shallow = idx.search("q", "river trout north", k);
        prop_assert!(deep.is_well_formed());
        prop_assert_eq!(shallow.ids(), deep.ids().into_iter().take(k).collect::<Vec<_>>());
    }
}
