//! Fixtures, independent oracles and property checks shared by the
//! integration tests and the acceptance runner.
//!
//! Every check returns `Err(description)` instead of panicking so the
//! acceptance runner can print one line per criterion.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use attrib_core::corpus::{AttributedAnswer, Corpus, Passage, Statement};
use attrib_core::fusion::{self, FusionInput, FusionMethod, RerankContext};
use attrib_core::metrics::{
    autoais_cit, autoais_pssg, bleu_tokens, citation_overlap, nli_citation_precision, nli_citation_recall,
    rouge_l, rouge_l_tokens, Entailment,
};
use attrib_core::modelio::LexicalScorer;
use attrib_core::retrieval::RankedList;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn close(name: &str, got: f64, want: f64, tol: f64) -> Check {
    ensure((got - want).abs() <= tol, || format!("{name}: got {got}, want {want} ±{tol}"))
}

// ---------------------------------------------------------------------------
// Text-metric oracles

/// Longest common subsequence by enumerating every subsequence of the
/// shorter sequence. Exponential; only for short fixtures.
pub fn brute_lcs(a: &[&str], b: &[&str]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let is_subseq = |sub: &[&str]| {
        let mut it = long.iter();
        sub.iter().all(|t| it.any(|l| l == t))
    };
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let n = mask.count_ones() as usize;
        if n <= best {
            continue;
        }
        let sub: Vec<&str> = (0..short.len()).filter(|i| mask & (1 << i) != 0).map(|i| short[i]).collect();
        if is_subseq(&sub) {
            best = n;
        }
    }
    best
}

/// (precision, recall, f) of ROUGE-L.
pub fn oracle_rouge_l(cand: &[&str], reference: &[&str]) -> (f64, f64, f64) {
    if cand.is_empty() || reference.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let l = brute_lcs(cand, reference) as f64;
    let p = l / cand.len() as f64;
    let r = l / reference.len() as f64;
    let f = if l == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

fn ngrams<'a>(toks: &[&'a str], n: usize) -> Vec<Vec<&'a str>> {
    if toks.len() < n {
        return Vec::new();
    }
    (0..=toks.len() - n).map(|i| toks[i..i + n].to_vec()).collect()
}

/// Sentence BLEU-4, add-one smoothing on every order, brevity penalty.
pub fn oracle_bleu(cand: &[&str], reference: &[&str]) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let mut product = 1.0;
    for n in 1..=4 {
        let c = ngrams(cand, n);
        let r = ngrams(reference, n);
        let mut distinct: Vec<&Vec<&str>> = Vec::new();
        for g in &c {
            if !distinct.contains(&g) {
                distinct.push(g);
            }
        }
        let clipped: usize = distinct
            .iter()
            .map(|g| {
                let in_c = c.iter().filter(|x| x == g).count();
                let in_r = r.iter().filter(|x| x == g).count();
                in_c.min(in_r)
            })
            .sum();
        product *= (clipped as f64 + 1.0) / (c.len() as f64 + 1.0);
    }
    let (c, r) = (cand.len() as f64, reference.len() as f64);
    let bp = if c >= r { 1.0 } else { (1.0 - r / c).exp() };
    bp * product.powf(0.25)
}

const VOCAB: [&str; 8] = ["the", "cat", "sat", "on", "mat", "dog", "ran", "red"];

/// Seeded candidate/reference pairs over a small vocabulary (lengths 0..=10),
/// so repeated n-grams and partial matches are common.
pub fn text_pairs(n: usize, seed: u64) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentence = |rng: &mut ChaCha8Rng| {
        let len = rng.gen_range(0..=10);
        (0..len).map(|_| VOCAB[rng.gen_range(0..VOCAB.len())]).collect::<Vec<_>>().join(" ")
    };
    (0..n).map(|_| (sentence(&mut rng), sentence(&mut rng))).collect()
}

pub fn check_text_metric_oracles() -> Check {
    let (p, r, f) = {
        let s = rouge_l("the cat sat", "the cat");
        (s.precision, s.recall, s.f)
    };
    close("rouge_l hand P", p, 2.0 / 3.0, 1e-9)?;
    close("rouge_l hand R", r, 1.0, 1e-9)?;
    close("rouge_l hand F", f, 0.8, 1e-9)?;
    let mut pairs = text_pairs(48, 7);
    pairs.push(("the cat sat".into(), "the cat".into()));
    pairs.push(("".into(), "the cat".into()));
    for (c, r) in &pairs {
        let ct: Vec<&str> = c.split_whitespace().collect();
        let rt: Vec<&str> = r.split_whitespace().collect();
        let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let got = rouge_l_tokens(&owned(&ct), &owned(&rt));
        let (op, or, of) = oracle_rouge_l(&ct, &rt);
        close(&format!("rouge_l P `{c}`|`{r}`"), got.precision, op, 1e-9)?;
        close(&format!("rouge_l R `{c}`|`{r}`"), got.recall, or, 1e-9)?;
        close(&format!("rouge_l F `{c}`|`{r}`"), got.f, of, 1e-9)?;
        let b = bleu_tokens(&owned(&ct), &owned(&rt));
        close(&format!("bleu `{c}`|`{r}`"), b, oracle_bleu(&ct, &rt), 1e-9)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Citation fixtures

/// Passages chosen so that containment entailment is easy to decide by eye.
pub fn citation_corpus() -> Corpus {
    let p = |id: &str, text: &str| Passage {
        id: id.into(),
        text: text.into(),
        title: None,
    };
    Corpus::from_passages([
        p("p1", "the cat sat on the mat"),
        p("p2", "dogs bark at night"),
        p("p3", "birds sing in spring"),
        p("p4", "the cat"),
        p("p5", "sat on the mat"),
        p("p6", "fish swim"),
    ])
    .expect("valid fixture corpus")
}

/// Entailment holds iff every hypothesis token occurs in the premise.
pub fn containment() -> LexicalScorer {
    LexicalScorer::default()
}

pub const CONTAINMENT_THRESHOLD: f64 = 1.0;

pub struct CitationCase {
    pub name: &'static str,
    pub answer: AttributedAnswer,
    pub support: RankedList,
    pub gold: BTreeSet<String>,
    pub cit: Option<f64>,
    pub pssg: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub overlap_precision: Option<f64>,
    pub overlap_recall: Option<f64>,
}

const CAT: &str = "the cat sat";
const FULL: &str = "the cat sat on the mat";
const DOG: &str = "dogs bark";
const BIRD: &str = "birds sing";
const FISH: &str = "fish swim";
const NONE: &str = "zebras run";

fn answer(statements: &[(&str, &[&str])]) -> AttributedAnswer {
    AttributedAnswer {
        statements: statements
            .iter()
            .map(|(t, c)| Statement {
                text: t.to_string(),
                citations: c.iter().map(|s| s.to_string()).collect(),
            })
            .collect(),
        raw_text: String::new(),
    }
}

fn support(ids: &[&str]) -> RankedList {
    let n = ids.len() as f64;
    RankedList::from_scores("support", ids.iter().enumerate().map(|(i, d)| (*d, n - i as f64)), ids.len())
}

fn set(ids: &[&str]) -> BTreeSet<String> {
    ids.iter().map(|s| s.to_string()).collect()
}

#[allow(clippy::too_many_arguments)]
fn case(
    name: &'static str,
    statements: &[(&str, &[&str])],
    sup: &[&str],
    gold: &[&str],
    cit: f64,
    pssg: f64,
    precision: Option<f64>,
    recall: f64,
    overlap: (Option<f64>, Option<f64>),
) -> CitationCase {
    CitationCase {
        name,
        answer: answer(statements),
        support: support(sup),
        gold: set(gold),
        cit: Some(cit),
        pssg: Some(pssg),
        precision,
        recall: Some(recall),
        overlap_precision: overlap.0,
        overlap_recall: overlap.1,
    }
}

/// Twenty answers with hand-computed scores (exact rationals).
pub fn citation_cases() -> Vec<CitationCase> {
    let third = 1.0 / 3.0;
    vec![
        case("single supported citation", &[(CAT, &["p1"])], &["p1"], &["p1"], 1.0, 1.0, Some(1.0), 1.0, (Some(1.0), Some(1.0))),
        case("uncited but supported by retrieval", &[(CAT, &[])], &["p1"], &["p1"], 0.0, 1.0, None, 0.0, (None, Some(0.0))),
        case("irrelevant second citation halves precision", &[(CAT, &["p1", "p3"])], &["p1", "p3"], &["p1"], 1.0, 1.0, Some(0.5), 1.0, (Some(0.5), Some(1.0))),
        case("jointly entailing pair", &[(FULL, &["p4", "p5"])], &["p4", "p5"], &["p4", "p5"], 0.0, 0.0, Some(1.0), 1.0, (Some(1.0), Some(1.0))),
        case("lone non-entailing citation", &[(CAT, &["p3"])], &["p3"], &["p1"], 0.0, 0.0, Some(1.0), 0.0, (Some(0.0), Some(0.0))),
        case("one of two statements unsupported", &[(CAT, &["p1"]), (NONE, &["p2"])], &["p1", "p2"], &["p1", "p2"], 0.5, 0.5, Some(1.0), 0.5, (Some(1.0), Some(1.0))),
        case("gold superset", &[(CAT, &["p1"]), (DOG, &["p2"])], &["p1", "p2"], &["p1", "p2", "p3"], 1.0, 1.0, Some(1.0), 1.0, (Some(1.0), Some(2.0 / 3.0))),
        case("miscited statement with supporting retrieval", &[(CAT, &["p2"])], &["p1", "p2"], &["p1"], 0.0, 1.0, Some(1.0), 0.0, (Some(0.0), Some(0.0))),
        case("redundant passage after entailing one", &[(DOG, &["p2", "p6"])], &["p2", "p6"], &["p2"], 1.0, 1.0, Some(0.5), 1.0, (Some(0.5), Some(1.0))),
        case("two redundant passages", &[(DOG, &["p1", "p3", "p2"])], &["p1", "p2", "p3"], &["p2"], 1.0, 1.0, Some(third), 1.0, (Some(third), Some(1.0))),
        case("wrong citation among three", &[(CAT, &["p1"]), (DOG, &["p3"]), (BIRD, &["p3"])], &["p1", "p3"], &["p1", "p3"], 2.0 / 3.0, 2.0 / 3.0, Some(1.0), 2.0 / 3.0, (Some(1.0), Some(1.0))),
        case("unsupported uncited statement", &[(NONE, &[])], &["p1"], &["p1"], 0.0, 0.0, None, 0.0, (None, Some(0.0))),
        case("no gold citations", &[(CAT, &["p1"])], &["p1"], &[], 1.0, 1.0, Some(1.0), 1.0, (Some(0.0), None)),
        case("partial passages redundant next to full one", &[(FULL, &["p4", "p5", "p1"])], &["p1", "p4", "p5"], &["p1"], 1.0, 1.0, Some(third), 1.0, (Some(third), Some(1.0))),
        case("partial citation, full passage retrieved", &[(FULL, &["p4"])], &["p1", "p4"], &["p1"], 0.0, 1.0, Some(1.0), 0.0, (Some(0.0), Some(0.0))),
        case("same passage for two statements", &[(CAT, &["p1"]), (DOG, &["p1"])], &["p1"], &["p1", "p2"], 0.5, 0.5, Some(1.0), 0.5, (Some(1.0), Some(0.5))),
        case("four statements, one outside retrieval", &[(CAT, &["p1"]), (DOG, &["p2"]), (BIRD, &["p3"]), (FISH, &["p3"])], &["p1", "p2", "p3"], &["p1", "p2", "p3", "p6"], 0.75, 0.75, Some(1.0), 0.75, (Some(1.0), Some(0.75))),
        case("cited passage outside retrieval", &[(FISH, &["p6", "p2"])], &["p6"], &["p6"], 1.0, 1.0, Some(0.5), 1.0, (Some(0.5), Some(1.0))),
        case("uncited statement next to cited one", &[(DOG, &[]), (BIRD, &["p3"])], &["p2", "p3"], &["p3"], 0.5, 1.0, Some(1.0), 0.5, (Some(1.0), Some(1.0))),
        case("only jointly entailing pairs", &[(FULL, &["p4", "p5"]), (CAT, &["p4", "p5"])], &["p4", "p5"], &["p1"], 0.0, 0.0, Some(1.0), 1.0, (Some(0.0), Some(0.0))),
    ]
}

fn eq_opt(name: &str, case: &str, got: Option<f64>, want: Option<f64>) -> Check {
    let same = match (got, want) {
        (Some(g), Some(w)) => (g - w).abs() <= 1e-12,
        (None, None) => true,
        _ => false,
    };
    ensure(same, || format!("{case}: {name} got {got:?}, want {want:?}"))
}

pub fn check_citation_case(c: &CitationCase) -> Check {
    let corpus = citation_corpus();
    let scorer = containment();
    let nli = Entailment::new(&scorer, CONTAINMENT_THRESHOLD);
    let err = |e: attrib_core::Error| format!("{}: {e}", c.name);
    eq_opt("autoais_cit", c.name, Some(autoais_cit(&c.answer, &corpus, &nli).map_err(err)?), c.cit)?;
    eq_opt("autoais_pssg", c.name, Some(autoais_pssg(&c.answer, &c.support, &corpus, &nli).map_err(err)?), c.pssg)?;
    eq_opt("nli_precision", c.name, nli_citation_precision(&c.answer, &corpus, &nli).map_err(err)?, c.precision)?;
    eq_opt("nli_recall", c.name, Some(nli_citation_recall(&c.answer, &corpus, &nli).map_err(err)?), c.recall)?;
    let generated: BTreeSet<String> = c.answer.cited_ids().into_iter().collect();
    let o = citation_overlap(&generated, &c.gold);
    eq_opt("overlap_precision", c.name, o.precision, c.overlap_precision)?;
    eq_opt("overlap_recall", c.name, o.recall, c.overlap_recall)
}

pub fn check_citation_suite() -> Check {
    let cases = citation_cases();
    ensure(cases.len() == 20, || format!("expected 20 cases, have {}", cases.len()))?;
    let has = |p: fn(&CitationCase) -> bool| cases.iter().any(p);
    ensure(has(|c| c.precision == Some(0.5)), || "no 0.5-precision case".into())?;
    ensure(has(|c| c.pssg > c.cit), || "no pssg > cit case".into())?;
    cases.iter().try_for_each(check_citation_case)
}

// ---------------------------------------------------------------------------
// Fusion properties

pub const FUSION_POOL: usize = 12;

pub fn doc(i: usize) -> String {
    format!("d{i:02}")
}

/// Texts for the rerank fuser: each passage shares a different word count
/// with the query used in [`rerank_query`].
pub fn fusion_corpus() -> Corpus {
    let words = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"];
    Corpus::from_passages((0..FUSION_POOL).map(|i| Passage {
        id: doc(i),
        text: format!("{} filler{i}", words[..=(i % words.len())].join(" ")),
        title: None,
    }))
    .expect("valid fusion corpus")
}

pub fn rerank_query() -> &'static str {
    "alpha beta gamma delta"
}

/// One ranked list: distinct ids from the pool, quarter-integer scores so
/// ties and exact comparisons are both exercised.
pub fn ranked_list_strategy(label: String) -> impl Strategy<Value = RankedList> {
    proptest::sample::subsequence((0..FUSION_POOL).collect::<Vec<_>>(), 0..=8)
        .prop_flat_map(|ids| {
            let n = ids.len();
            (Just(ids), proptest::collection::vec(0u8..=20, n))
        })
        .prop_map(move |(ids, scores)| {
            RankedList::from_scores(
                label.clone(),
                ids.into_iter().zip(scores).map(|(i, s)| (doc(i), s as f64 / 4.0)),
                FUSION_POOL,
            )
        })
}

pub fn fusion_lists_strategy() -> impl Strategy<Value = Vec<RankedList>> {
    (1usize..=4).prop_flat_map(|n| (0..n).map(|t| ranked_list_strategy(format!("t{t:03}"))).collect::<Vec<_>>())
}

/// Single list with pairwise distinct scores, so its order is unambiguous.
pub fn distinct_list_strategy() -> impl Strategy<Value = RankedList> {
    proptest::sample::subsequence((0..FUSION_POOL).collect::<Vec<_>>(), 1..=8)
        .prop_flat_map(|ids| {
            let n = ids.len();
            (Just(ids), proptest::sample::subsequence((0u32..40).collect::<Vec<_>>(), n).prop_shuffle())
        })
        .prop_map(|(ids, scores)| {
            RankedList::from_scores("t000", ids.into_iter().zip(scores).map(|(i, s)| (doc(i), s as f64)), FUSION_POOL)
        })
}

pub fn run_fusion(method: FusionMethod, lists: Vec<RankedList>, k: usize) -> Result<RankedList, String> {
    let corpus = fusion_corpus();
    let scorer = LexicalScorer::default();
    let ctx = RerankContext {
        query: rerank_query(),
        corpus: &corpus,
        scorer: &scorer,
    };
    let input = FusionInput::new("q", lists).map_err(|e| e.to_string())?;
    fusion::fuse(method, &input, k, fusion::DEFAULT_PM2_LAMBDA, &ctx).map_err(|e| e.to_string())
}

pub fn check_mnz_is_count_times_sum(lists: &[RankedList]) -> Check {
    let input = FusionInput::new("q", lists.to_vec()).map_err(|e| e.to_string())?.normalized();
    let all = FUSION_POOL * 4;
    let sum = fusion::fuse_comb_sum(&input, all);
    let mnz = fusion::fuse_comb_mnz(&input, all);
    ensure(sum.len() == mnz.len(), || format!("sum has {} candidates, mnz {}", sum.len(), mnz.len()))?;
    for e in mnz.entries() {
        let s = sum.score_of(&e.id).ok_or_else(|| format!("{} missing from CombSum", e.id))?;
        let want = input.membership(&e.id) as f64 * s;
        ensure((e.score - want).abs() <= 1e-12, || format!("{}: mnz {} != {} × {s}", e.id, e.score, input.membership(&e.id)))?;
    }
    Ok(())
}

pub fn check_single_list_order(list: &RankedList) -> Check {
    for method in [FusionMethod::Sort, FusionMethod::CombSum, FusionMethod::Pm2] {
        let out = run_fusion(method, vec![list.clone()], FUSION_POOL)?;
        ensure(out.ids() == list.ids(), || format!("{method}: {:?} reordered to {:?}", list.ids(), out.ids()))?;
    }
    Ok(())
}

pub fn check_invariants(lists: &[RankedList], k: usize) -> Check {
    let union: BTreeSet<String> = lists.iter().flat_map(|l| l.ids()).collect();
    for method in FusionMethod::ALL {
        let out = run_fusion(method, lists.to_vec(), k)?;
        ensure(out.is_well_formed(), || format!("{method}: malformed output {out:?}"))?;
        ensure(out.len() <= k, || format!("{method}: {} entries for k={k}", out.len()))?;
        ensure(out.len() == k.min(union.len()), || format!("{method}: {} entries, expected {}", out.len(), k.min(union.len())))?;
        ensure(out.ids().iter().all(|d| union.contains(d)), || format!("{method}: invented candidate"))?;
    }
    Ok(())
}

pub fn check_order_invariance(lists: &[RankedList], shuffled: &[RankedList], k: usize) -> Check {
    for method in FusionMethod::ALL {
        let a = run_fusion(method, lists.to_vec(), k)?;
        let b = run_fusion(method, shuffled.to_vec(), k)?;
        ensure(a == b, || format!("{method}: {:?} vs {:?}", a.ids(), b.ids()))?;
    }
    Ok(())
}

/// Runs a proptest property outside the test harness, reporting the first
/// (shrunk) failure as a string.
pub fn run_property<S: Strategy>(cases: u32, strategy: S, check: impl Fn(S::Value) -> Check) -> Check
where
    S::Value: std::fmt::Debug,
{
    use proptest::test_runner::{Config, TestCaseError, TestRunner};
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&strategy, |v| check(v).map_err(TestCaseError::fail))
        .map_err(|e| e.to_string())
}

pub fn check_fusion_properties(cases: u32) -> Check {
    run_property(cases, fusion_lists_strategy(), |l| check_mnz_is_count_times_sum(&l))?;
    run_property(cases, distinct_list_strategy(), |l| check_single_list_order(&l))?;
    run_property(cases, (fusion_lists_strategy(), 1usize..=10), |(l, k)| check_invariants(&l, k))?;
    run_property(
        cases,
        (fusion_lists_strategy(), 1usize..=10).prop_flat_map(|(l, k)| (Just(l.clone()), Just(l).prop_shuffle(), Just(k))),
        |(l, s, k)| check_order_invariance(&l, &s, k),
    )
}

// ---------------------------------------------------------------------------
// Retrieval hand fixtures

pub fn two_doc_corpus() -> Corpus {
    Corpus::from_passages([
        Passage {
            id: "d1".into(),
            text: "the cat sat".into(),
            title: None,
        },
        Passage {
            id: "d2".into(),
            text: "the dog".into(),
            title: None,
        },
    ])
    .expect("valid corpus")
}

pub fn check_retrieval_fixtures() -> Check {
    use attrib_core::retrieval::{eval_ranked_list, Bm25Params, Index};
    use attrib_core::text::Analyzer;
    let index = Index::build(&two_doc_corpus(), &Analyzer::default(), Bm25Params::default()).map_err(|e| e.to_string())?;
    close("avgdl", index.avg_doc_length(), 2.5, 1e-12)?;
    let score = index.bm25_score(&["cat".to_owned()], "d1").map_err(|e| e.to_string())?;
    close("bm25(cat, d1)", score, 0.668, 1e-3)?;
    let ids = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let gold = set(&["d1", "d2"]);
    let m = eval_ranked_list(&ids(&["d3", "d1", "d2"]), &gold, &[3]);
    close("nDCG@3", m["nDCG@3"], 0.693, 1e-3)?;
    let exact = (1.0 / 3f64.log2() + 0.5) / (1.0 + 1.0 / 3f64.log2());
    close("nDCG@3 exact", m["nDCG@3"], exact, 1e-6)?;
    let ideal = eval_ranked_list(&ids(&["d1", "d2", "d3"]), &gold, &[1, 10]);
    close("ideal P@1", ideal["P@1"], 1.0, 0.0)?;
    close("ideal nDCG@10", ideal["nDCG@10"], 1.0, 1e-12)
}

// ---------------------------------------------------------------------------
// End-to-end helpers

pub fn toy_config() -> attrib_core::harness::ExperimentConfig {
    attrib_core::harness::ExperimentConfig::load(&data_dir().join("toy/config.toml")).expect("toy config loads")
}

pub fn metric(report: &attrib_core::harness::ScoreReport, name: &str) -> Option<f64> {
    report.value(name)
}

pub fn file_bytes(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_owned()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).expect("under dir").to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).expect("readable file"));
            }
        }
    }
    out
}

fn err(e: attrib_core::Error) -> String {
    e.to_string()
}

fn scenario(
    base: &attrib_core::harness::ExperimentConfig,
    s: attrib_core::pipelines::Scenario,
) -> attrib_core::pipelines::ScenarioConfig {
    attrib_core::pipelines::ScenarioConfig {
        scenario: s,
        ..base.scenario.clone()
    }
}

/// Files of a run directory that must not vary between identical runs
/// (`run_info.json` carries wall-clock timestamps).
pub fn deterministic_files(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = file_bytes(dir);
    files.remove("run_info.json");
    files
}

/// rtg-gold, g and determinism on the toy fixture; returns a short summary.
pub fn check_hermetic_run(out: &std::path::Path) -> Result<String, String> {
    use attrib_core::exec::Executor;
    use attrib_core::harness::{run_loaded, Experiment};
    use attrib_core::pipelines::Scenario;

    let config = toy_config();
    let experiment = Experiment::load(config.clone()).map_err(err)?;
    ensure(experiment.corpus.len() == 50, || format!("toy corpus has {} passages", experiment.corpus.len()))?;
    ensure(experiment.dataset.queries.len() == 10, || format!("toy dataset has {} queries", experiment.dataset.queries.len()))?;
    let exec = Executor::with_threads(4);

    let gold = run_loaded(&experiment, &scenario(&config, Scenario::RtgGold), &out.join("gold"), &exec).map_err(err)?;
    ensure(gold.metadata.n_scored == 10, || format!("{} of 10 queries scored", gold.metadata.n_scored))?;
    for name in ["overlap_precision", "overlap_recall", "autoais_cit"] {
        let v = metric(&gold, name).ok_or_else(|| format!("rtg-gold: {name} missing"))?;
        close(&format!("rtg-gold {name}"), v, 1.0, 1e-12)?;
    }

    let g = run_loaded(&experiment, &scenario(&config, Scenario::G), &out.join("g"), &exec).map_err(err)?;
    let table = &g.table[Scenario::G.name()];
    ensure(table.contains_key("rouge_l.f"), || "g: correctness missing".into())?;
    for name in attrib_core::metrics::CitationScores::NAMES {
        ensure(!table.contains_key(name), || format!("g: emitted citation metric {name}"))?;
    }

    let again = run_loaded(&experiment, &scenario(&config, Scenario::RtgGold), &out.join("gold2"), &Executor::sequential())
        .map_err(err)?;
    ensure(again == gold, || "reports differ between runs".into())?;
    let a = deterministic_files(&out.join("gold"));
    let b = deterministic_files(&out.join("gold2"));
    ensure(a.keys().eq(b.keys()), || format!("file sets differ: {:?} vs {:?}", a.keys(), b.keys()))?;
    for (name, bytes) in &a {
        ensure(b[name] == *bytes, || format!("{name} differs between runs"))?;
    }
    Ok(format!("{} files byte-identical across runs", a.len()))
}

/// Overlap recall per k for rtg-vanilla over the toy fixture (two gold
/// citations per query).
pub fn sweep_recall(out: &std::path::Path, ks: &[usize]) -> Result<Vec<(usize, f64)>, String> {
    use attrib_core::exec::Executor;
    use attrib_core::harness::{sweep_k, Experiment};
    use attrib_core::pipelines::Scenario;

    let mut config = toy_config();
    config.scenario.scenario = Scenario::RtgVanilla;
    let experiment = Experiment::load(config).map_err(err)?;
    let rows = sweep_k(&experiment, ks, out, &Executor::with_threads(4)).map_err(err)?;
    rows.iter()
        .map(|(k, r)| metric(r, "overlap_recall").map(|v| (*k, v)).ok_or_else(|| format!("k={k}: no overlap_recall")))
        .collect()
}

pub fn check_sweep_shape(out: &std::path::Path) -> Result<String, String> {
    let curve = sweep_recall(out, &[1, 2, 3, 4])?;
    let max = curve.iter().map(|(_, v)| *v).fold(f64::MIN, f64::max);
    let at = |k: usize| curve.iter().find(|(kk, _)| *kk == k).map(|(_, v)| *v).unwrap_or(f64::NAN);
    ensure(at(2) == max, || format!("recall at k=2 is {} but max is {max}: {curve:?}", at(2)))?;
    ensure(at(1) < at(2), || format!("recall does not rise from k=1 to k=2: {curve:?}"))?;
    ensure(out.join("sweep.csv").is_file(), || "sweep.csv missing".into())?;
    Ok(curve.iter().map(|(k, v)| format!("k={k}:{v:.2}")).collect::<Vec<_>>().join(" "))
}

pub fn sample_dataset() -> Result<Vec<attrib_core::corpus::EvalQuery>, String> {
    let config = attrib_core::harness::ExperimentConfig::load(&data_dir().join("sample/hagrid.toml")).map_err(err)?;
    let ds = attrib_core::corpus::load_dataset(&config.dataset.queries, &config.dataset.fields).map_err(err)?;
    Ok(ds.queries)
}

pub fn check_sample_stats() -> Result<String, String> {
    let stats = attrib_core::corpus::dataset_stats(&sample_dataset()?);
    let text = std::fs::read_to_string(data_dir().join("sample/hagrid_sample.stats.json")).map_err(|e| e.to_string())?;
    let want: attrib_core::corpus::DatasetStats = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    ensure(
        (stats.n_queries, stats.n_answers, stats.n_informative, stats.n_attributable)
            == (want.n_queries, want.n_answers, want.n_informative, want.n_attributable),
        || format!("counts {stats:?} != {want:?}"),
    )?;
    close("avg_gold_passages", stats.avg_gold_passages, want.avg_gold_passages, 1e-12)?;
    close("avg_citations", stats.avg_citations, want.avg_citations, 1e-12)?;
    Ok(format!("{} queries / {} answers / {} attributable", stats.n_queries, stats.n_answers, stats.n_attributable))
}

/// GTR with one passage per statement: what is cited is exactly what
/// supports, so the two AutoAIS variants coincide on every query.
pub fn check_gtr_identity(out: &std::path::Path) -> Result<String, String> {
    use attrib_core::exec::Executor;
    use attrib_core::harness::{run_loaded, Experiment};
    use attrib_core::pipelines::Scenario;

    let config = toy_config();
    let experiment = Experiment::load(config.clone()).map_err(err)?;
    let mut sc = scenario(&config, Scenario::Gtr);
    sc.k_per_statement = 1;
    let report = run_loaded(&experiment, &sc, out, &Executor::with_threads(4)).map_err(err)?;
    let mut compared = 0;
    for r in &report.records {
        let c = r.citations.as_ref().ok_or_else(|| format!("{}: no citation scores", r.query_id))?;
        ensure(c.autoais_cit == c.autoais_pssg, || format!("{}: cit {:?} != pssg {:?}", r.query_id, c.autoais_cit, c.autoais_pssg))?;
        compared += 1;
    }
    ensure(compared > 0, || "no GTR records".into())?;
    Ok(format!("cit == pssg on {compared} queries"))
}
