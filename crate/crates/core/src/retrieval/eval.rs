use std::collections::{BTreeMap, BTreeSet};

use crate::MetricMap;

/// Precision, recall and nDCG at each cutoff for one ranking.
///
/// Relevance is binary. With no relevant passages, recall and nDCG are
/// undefined and left out of the map; precision is still reported.
pub fn eval_ranked_list(ranking: &[String], relevant: &BTreeSet<String>, cutoffs: &[usize]) -> MetricMap {
    let mut out = BTreeMap::new();
    for &k in cutoffs {
        if k == 0 {
            continue;
        }
        let hits = ranking.iter().take(k).filter(|d| relevant.contains(*d)).count();
        out.insert(format!("P@{k}"), hits as f64 / k as f64);
        if relevant.is_empty() {
            continue;
        }
        out.insert(format!("R@{k}"), hits as f64 / relevant.len() as f64);
        out.insert(format!("nDCG@{k}"), ndcg(ranking, relevant, k));
    }
    out
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Binary-gain nDCG with 1/log2(rank+1) discount (ranks start at 1).
pub fn ndcg(ranking: &[String], relevant: &BTreeSet<String>, k: usize) -> f64 {
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, d)| relevant.contains(*d))
        .map(|(i, _)| discount(i + 1))
        .sum();
    let ideal: f64 = (1..=relevant.len().min(k)).map(discount).sum();
    if ideal == 0.0 {
        0.0
    } else {
        dcg / ideal
    }
}

/// Mean of each metric over the maps that define it.
pub fn macro_average<'a>(maps: impl IntoIterator<Item = &'a MetricMap>) -> BTreeMap<String, (f64, usize)> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for m in maps {
        for (k, v) in m {
            let e = acc.entry(k.clone()).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(k, (sum, n))| (k, (sum / n as f64, n))).collect()
}
