//! Answer normalization and short-answer QA metrics.

use std::collections::{BTreeSet, HashMap};

use crate::knowledge::{EntryKind, IndexEntry};

/// Lowercase, drop ASCII punctuation, drop the articles `a`/`an`/`the` as
/// whole tokens, collapse whitespace.
pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let no_punct: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    no_punct
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match(pred: &str, gold: &str) -> f64 {
    f64::from(u8::from(normalize_answer(pred) == normalize_answer(gold)))
}

/// 1 when the normalized gold answer occurs contiguously in the normalized prediction.
pub fn accuracy(pred: &str, gold: &str) -> f64 {
    f64::from(u8::from(
        normalize_answer(pred).contains(&normalize_answer(gold)),
    ))
}

/// Token F1 with bag-of-tokens overlap. Two empty token lists score 1, one empty list scores 0.
pub fn f1(pred: &str, gold: &str) -> f64 {
    let pred_norm = normalize_answer(pred);
    let gold_norm = normalize_answer(gold);
    let pred_tokens: Vec<&str> = pred_norm.split_whitespace().collect();
    let gold_tokens: Vec<&str> = gold_norm.split_whitespace().collect();
    if pred_tokens.is_empty() || gold_tokens.is_empty() {
        return f64::from(u8::from(pred_tokens.is_empty() && gold_tokens.is_empty()));
    }
    let mut gold_counts: HashMap<&str, usize> = HashMap::new();
    for t in &gold_tokens {
        *gold_counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pred_tokens {
        if let Some(c) = gold_counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred_tokens.len() as f64;
    let recall = common as f64 / gold_tokens.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Share of gold passages represented by an AKU among the first `k` entries.
/// Bridging entries never count. Empty gold sets score 0.
pub fn recall_at_k<'a>(
    ranked: impl IntoIterator<Item = &'a IndexEntry>,
    gold_passage_ids: &BTreeSet<String>,
    k: usize,
) -> f64 {
    if gold_passage_ids.is_empty() {
        return 0.0;
    }
    let found: BTreeSet<&str> = ranked
        .into_iter()
        .take(k)
        .filter(|e| e.kind == EntryKind::Aku && e.provenance.len() == 1)
        .filter_map(|e| e.provenance.iter().next())
        .filter(|d| gold_passage_ids.contains(*d))
        .map(String::as_str)
        .collect();
    found.len() as f64 / gold_passage_ids.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_answer("The Answer."), "answer");
        assert_eq!(normalize_answer("YES"), "yes");
        assert_eq!(normalize_answer("Weston-super-Mare"), "westonsupermare");
        assert_eq!(normalize_answer("  a  cat\tand\nAN owl "), "cat and owl");
        assert_eq!(normalize_answer(""), "");
    }

    #[test]
    fn em_examples() {
        assert_eq!(exact_match("Weston-super-Mare", "weston super mare"), 0.0);
        assert_eq!(exact_match("Henry Edwards", "Henry Edwards"), 1.0);
        assert_eq!(exact_match("the yes", "yes"), 1.0);
    }

    #[test]
    fn acc_examples() {
        assert_eq!(accuracy("president barack obama", "barack obama"), 1.0);
        assert_eq!(accuracy("obama barack", "barack obama"), 0.0);
        assert_eq!(accuracy("Paris", "London"), 0.0);
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1("same answer", "Same answer!"), 1.0);
        assert_eq!(f1("cats", "dogs"), 0.0);
        // P = 2/3, R = 1
        assert!((f1("president barack obama", "barack obama") - 0.8).abs() < 1e-12);
        // bag semantics: "a a b" vs "a b" has overlap 2 not 1 (articles aside)
        assert!((f1("x x y", "x y") - 0.8).abs() < 1e-12);
        assert_eq!(f1("the", "a"), 1.0);
        assert_eq!(f1("the", "answer"), 0.0);
    }

    fn entry(id: &str, kind: EntryKind, docs: &[&str]) -> IndexEntry {
        IndexEntry {
            entry_id: id.into(),
            kind,
            text: id.into(),
            embedding: vec![1.0],
            provenance: docs.iter().map(|d| d.to_string()).collect(),
            entity: (kind == EntryKind::Bridging).then(|| "e".into()),
        }
    }

    #[test]
    fn recall_ignores_bridging_entries() {
        let gold: BTreeSet<String> = ["p1", "p2"].iter().map(|s| s.to_string()).collect();
        let ranked = [
            entry("b1", EntryKind::Bridging, &["p1", "p2"]),
            entry("a1", EntryKind::Aku, &["p1"]),
            entry("b2", EntryKind::Bridging, &["p2", "p3"]),
        ];
        assert_eq!(recall_at_k(&ranked, &gold, 3), 0.5);
        let bridging_only = [entry("b1", EntryKind::Bridging, &["p1", "p2"])];
        assert_eq!(recall_at_k(&bridging_only, &gold, 3), 0.0);
        let all = [
            entry("a1", EntryKind::Aku, &["p1"]),
            entry("a2", EntryKind::Aku, &["p2"]),
        ];
        assert_eq!(recall_at_k(&all, &gold, 2), 1.0);
        assert_eq!(recall_at_k(&all, &gold, 1), 0.5);
        assert_eq!(recall_at_k(&all, &BTreeSet::new(), 2), 0.0);
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(s in "\\PC{0,60}") {
            let once = normalize_answer(&s);
            prop_assert_eq!(normalize_answer(&once), once);
        }

        #[test]
        fn em_implies_acc_and_f1(a in "[a-zA-Z ,.!-]{0,30}", b in "[a-zA-Z ,.!-]{0,30}") {
            if exact_match(&a, &b) == 1.0 {
                prop_assert_eq!(accuracy(&a, &b), 1.0);
                prop_assert_eq!(f1(&a, &b), 1.0);
            }
        }

        #[test]
        fn f1_bounds_and_identity(a in "(the |an |cat |dog |owl ){0,6}", b in "(the |an |cat |dog |owl ){0,6}") {
            let score = f1(&a, &b);
            prop_assert!((0.0..=1.0).contains(&score));
            let mut ta: Vec<String> = normalize_answer(&a).split_whitespace().map(String::from).collect();
            let mut tb: Vec<String> = normalize_answer(&b).split_whitespace().map(String::from).collect();
            ta.sort();
            tb.sort();
            prop_assert_eq!(score == 1.0, ta == tb);
        }

        #[test]
        fn recall_is_monotone_in_k(kinds in proptest::collection::vec((any::<bool>(), 0u8..6), 0..12)) {
            let ranked: Vec<IndexEntry> = kinds
                .iter()
                .enumerate()
                .map(|(i, (is_aku, doc))| {
                    let d = format!("p{doc}");
                    if *is_aku {
                        entry(&format!("a{i}"), EntryKind::Aku, &[d.as_str()])
                    } else {
                        entry(&format!("b{i}"), EntryKind::Bridging, &[d.as_str(), "px"])
                    }
                })
                .collect();
            let gold: BTreeSet<String> = ["p0", "p1", "p2"].iter().map(|s| s.to_string()).collect();
            let mut last = 0.0;
            for k in 1..=ranked.len() + 1 {
                let r = recall_at_k(&ranked, &gold, k);
                prop_assert!(r >= last);
                last = r;
            }
        }
    }
}
