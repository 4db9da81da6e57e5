//! Exact match and token-level F1 with SQuAD-style answer normalization.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("macro_scores requires a non-empty list of pairs")]
    EmptyPairs,
}

/// Per-pair scores. `exact_match == 1.0` implies `f1 == 1.0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorePair {
    pub exact_match: f64,
    pub f1: f64,
}

/// Lowercase, strip ASCII punctuation, drop the articles a/an/the, collapse
/// whitespace. This is the normalization behind the usual extractive-QA
/// scorers, applied to both gold and predicted answers before comparison.
pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    no_punct
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn normalized_tokens(s: &str) -> Vec<String> {
    normalize_answer(s)
        .split_whitespace()
        .map(|t| t.to_string())
        .collect()
}

/// 1.0 iff the normalized answers are identical.
pub fn exact_match(gold: &str, pred: &str) -> f64 {
    if normalize_answer(gold) == normalize_answer(pred) {
        1.0
    } else {
        0.0
    }
}

fn token_counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut counts = HashMap::new();
    for t in tokens {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    counts
}

/// Size of the multiset intersection of normalized token lists.
pub fn shared_token_count(gold: &str, pred: &str) -> usize {
    let gold_tokens = normalized_tokens(gold);
    let pred_tokens = normalized_tokens(pred);
    let gold_counts = token_counts(&gold_tokens);
    let pred_counts = token_counts(&pred_tokens);
    gold_counts
        .iter()
        .map(|(t, &n)| n.min(pred_counts.get(t).copied().unwrap_or(0)))
        .sum()
}

/// Harmonic mean of token precision and recall over normalized multisets.
///
/// Both sides empty scores 1.0; one side empty scores 0.0.
pub fn token_f1(gold: &str, pred: &str) -> f64 {
    let gold_tokens = normalized_tokens(gold);
    let pred_tokens = normalized_tokens(pred);
    match (gold_tokens.is_empty(), pred_tokens.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let shared = {
        let gold_counts = token_counts(&gold_tokens);
        let pred_counts = token_counts(&pred_tokens);
        gold_counts
            .iter()
            .map(|(t, &n)| n.min(pred_counts.get(t).copied().unwrap_or(0)))
            .sum::<usize>()
    };
    if shared == 0 {
        return 0.0;
    }
    let precision = shared as f64 / pred_tokens.len() as f64;
    let recall = shared as f64 / gold_tokens.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn score_pair(gold: &str, pred: &str) -> ScorePair {
    let em = exact_match(gold, pred);
    let f1 = if em == 1.0 { 1.0 } else { token_f1(gold, pred) };
    ScorePair { exact_match: em, f1 }
}

/// Arithmetic mean of per-pair EM and F1 over a dataset, as percentages.
pub fn macro_scores<'a, I>(pairs: I) -> Result<(f64, f64), MetricsError>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut em_sum = 0.0;
    let mut f1_sum = 0.0;
    let mut n = 0usize;
    for (gold, pred) in pairs {
        let s = score_pair(gold, pred);
        em_sum += s.exact_match;
        f1_sum += s.f1;
        n += 1;
    }
    if n == 0 {
        return Err(MetricsError::EmptyPairs);
    }
    Ok((100.0 * em_sum / n as f64, 100.0 * f1_sum / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization_cases() {
        assert_eq!(normalize_answer("The Prime Suspect."), "prime suspect");
        assert_eq!(normalize_answer("Lynda La Plante"), "lynda la plante");
        assert_eq!(normalize_answer("  a  1987  "), "1987");
    }

    #[test]
    fn exact_match_cases() {
        assert_eq!(exact_match("Lynda La Plante", "lynda la plante"), 1.0);
        assert_eq!(exact_match("prime suspect", "suspect"), 0.0);
        assert_eq!(exact_match("", ""), 1.0);
    }

    #[test]
    fn token_f1_cases() {
        // precision 1.0, recall 2/3 -> F1 0.8
        assert!((token_f1("lynda la plante", "la plante") - 0.8).abs() < 1e-12);
        assert_eq!(token_f1("prime suspect", "prime suspect"), 1.0);
        assert_eq!(token_f1("1987", "season opener"), 0.0);
    }

    #[test]
    fn f1_empty_rules() {
        assert_eq!(token_f1("", ""), 1.0);
        assert_eq!(token_f1("x", ""), 0.0);
        assert_eq!(token_f1("", "x"), 0.0);
        // "the" normalizes to nothing, so this is the both-empty case.
        assert_eq!(token_f1("the", "a"), 1.0);
    }

    #[test]
    fn multiset_intersection_counts_duplicates() {
        // gold [big, big, dog] vs pred [big, dog]:
        // shared = min(2,1) + min(1,1) = 2, precision 2/2, recall 2/3
        let f1 = token_f1("big big dog", "big dog");
        assert!((f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn macro_scores_means() {
        let pairs = vec![
            ("prime suspect", "Prime Suspect."),  // EM 1, F1 1
            ("lynda la plante", "la plante"),     // EM 0, F1 0.8
        ];
        let (em, f1) = macro_scores(pairs.iter().map(|(g, p)| (*g, *p))).unwrap();
        assert!((em - 50.0).abs() < 1e-9);
        assert!((f1 - 90.0).abs() < 1e-9);
    }

    #[test]
    fn macro_scores_single_exact() {
        let (em, f1) = macro_scores([("x y", "x y")]).unwrap();
        assert_eq!((em, f1), (100.0, 100.0));
    }

    #[test]
    fn macro_scores_rejects_empty() {
        assert!(macro_scores(std::iter::empty::<(&str, &str)>()).is_err());
    }

    proptest! {
        #[test]
        fn self_f1_is_one(s in "[a-z0-9 ]{1,40}") {
            prop_assume!(!normalize_answer(&s).is_empty());
            prop_assert!((token_f1(&s, &s) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn em_implies_f1(g in "[A-Za-z0-9,. ]{0,30}", p in "[A-Za-z0-9,. ]{0,30}") {
            let s = score_pair(&g, &p);
            if s.exact_match == 1.0 {
                prop_assert_eq!(s.f1, 1.0);
            }
            prop_assert!((0.0..=1.0).contains(&s.f1));
        }

        #[test]
        fn macro_scores_permutation_invariant(
            pairs in proptest::collection::vec(("[a-z ]{1,12}", "[a-z ]{1,12}"), 1..8),
            seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let forward = macro_scores(pairs.iter().map(|(g, p)| (g.as_str(), p.as_str()))).unwrap();
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let back = macro_scores(shuffled.iter().map(|(g, p)| (g.as_str(), p.as_str()))).unwrap();
            prop_assert!((forward.0 - back.0).abs() < 1e-9);
            prop_assert!((forward.1 - back.1).abs() < 1e-9);
        }
    }
}
