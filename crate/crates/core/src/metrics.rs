//! Answer-quality metrics: exact match, token F1, BLEU and token accuracy.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

const PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':', '\'', '"', '(', ')', '[', ']'];
const ARTICLES: &[&str] = &["a", "an", "the"];

/// Lowercased, punctuation-stripped whitespace tokens.
pub fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .replace(PUNCTUATION, "")
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// [`tokens`] without articles, re-joined by single spaces.
///
/// ```
/// use token_guard::metrics::normalize;
/// assert_eq!(normalize(" Yes. "), "yes");
/// assert_eq!(normalize("The Jets"), "jets");
/// ```
pub fn normalize(text: &str) -> String {
    tokens(text)
        .into_iter()
        .filter(|t| !ARTICLES.contains(&t.as_str()))
        .collect::<Vec<_>>()
        .join(" ")
}

/// 1.0 when the normalised prediction equals any normalised reference.
pub fn exact_match<S: AsRef<str>>(pred: &str, golds: &[S]) -> f64 {
    let p = normalize(pred);
    if golds.iter().any(|g| normalize(g.as_ref()) == p) {
        1.0
    } else {
        0.0
    }
}

fn counts<T: std::hash::Hash + Eq + Clone>(items: impl IntoIterator<Item = T>) -> HashMap<T, usize> {
    let mut m = HashMap::new();
    for i in items {
        *m.entry(i).or_insert(0) += 1;
    }
    m
}

fn f1_single(pred: &[String], gold: &[String]) -> f64 {
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let g = counts(gold.iter());
    let overlap: usize = counts(pred.iter())
        .iter()
        .map(|(t, n)| (*n).min(g.get(t).copied().unwrap_or(0)))
        .sum();
    2.0 * overlap as f64 / (pred.len() + gold.len()) as f64
}

/// Token-multiset F1, best over references.
///
/// Articles are kept, so `f1("a b c", &["b c d"])` is exactly 2/3.
///
/// ```
/// use token_guard::metrics::f1;
/// assert!((f1("a b c", &["b c d"]) - 2.0 / 3.0).abs() < 1e-15);
/// ```
pub fn f1<S: AsRef<str>>(pred: &str, golds: &[S]) -> f64 {
    let p = tokens(pred);
    golds
        .iter()
        .map(|g| f1_single(&p, &tokens(g.as_ref())))
        .fold(0.0, f64::max)
}

fn ngrams(toks: &[String], n: usize) -> HashMap<&[String], usize> {
    counts(toks.windows(n))
}

/// Sentence BLEU with clipped n-gram precision up to `max_order`.
///
/// Orders longer than the prediction are skipped; a zero precision is
/// replaced by `1/(2|pred|)`; the brevity penalty is
/// `min(1, exp(1 − |gold|/|pred|))`.
pub fn bleu(pred: &str, gold: &str, max_order: usize) -> f64 {
    let p = tokens(pred);
    let g = tokens(gold);
    if p.is_empty() || max_order == 0 {
        return 0.0;
    }
    let orders = max_order.min(p.len());
    let smooth = 1.0 / (2.0 * p.len() as f64);
    let mut log_sum = 0.0;
    for n in 1..=orders {
        let pn = ngrams(&p, n);
        let gn = ngrams(&g, n);
        let total: usize = pn.values().sum();
        let clipped: usize = pn
            .iter()
            .map(|(k, c)| (*c).min(gn.get(k).copied().unwrap_or(0)))
            .sum();
        let precision = if clipped == 0 {
            smooth
        } else {
            clipped as f64 / total as f64
        };
        log_sum += precision.ln();
    }
    let bp = (1.0 - g.len() as f64 / p.len() as f64).exp().min(1.0);
    bp * (log_sum / orders as f64).exp()
}

/// Position-wise agreement over the longer sequence; both empty gives 1.
///
/// ```
/// use token_guard::metrics::token_accuracy;
/// assert_eq!(token_accuracy(&[1, 2], &[1, 2, 3, 4]), 0.5);
/// ```
pub fn token_accuracy<T: PartialEq>(pred: &[T], gold: &[T]) -> f64 {
    let longest = pred.len().max(gold.len());
    if longest == 0 {
        return 1.0;
    }
    pred.iter().zip(gold).filter(|(a, b)| a == b).count() as f64 / longest as f64
}

/// Per-record evaluation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub prediction: String,
    pub gold: Vec<String>,
    pub per_metric: BTreeMap<String, f64>,
}

impl EvalRecord {
    /// Scores text metrics against every reference. Token accuracy is added
    /// when id sequences are supplied.
    pub fn score(
        id: impl Into<String>,
        prediction: impl Into<String>,
        gold: Vec<String>,
        ids: Option<(&[u32], &[u32])>,
    ) -> Self {
        let prediction = prediction.into();
        let mut per_metric = BTreeMap::new();
        per_metric.insert("em".to_string(), exact_match(&prediction, &gold));
        per_metric.insert("f1".to_string(), f1(&prediction, &gold));
        let b = gold
            .iter()
            .map(|g| bleu(&prediction, g, 4))
            .fold(0.0, f64::max);
        per_metric.insert("bleu".to_string(), b);
        if let Some((p, g)) = ids {
            per_metric.insert("token_accuracy".to_string(), token_accuracy(p, g));
        }
        Self {
            id: id.into(),
            prediction,
            gold,
            per_metric,
        }
    }
}

/// Per-metric means over rows that report the metric.
pub fn aggregate(records: &[EvalRecord]) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in records {
        for (k, v) in &r.per_metric {
            let e = sums.entry(k.clone()).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(""), "");
        assert_eq!(normalize("  An  apple, (a) pie!  "), "apple pie");
    }

    #[test]
    fn em_examples() {
        assert_eq!(exact_match("14", &["14"]), 1.0);
        assert_eq!(exact_match("Yes.", &["yes"]), 1.0);
        assert_eq!(exact_match("Buddhist", &["Sikh"]), 0.0);
        assert_eq!(exact_match("Sikh", &["Buddhist", "sikh"]), 1.0);
    }

    #[test]
    fn f1_edges() {
        assert_eq!(f1("", &[""]), 1.0);
        assert_eq!(f1("x", &[""]), 0.0);
        assert_eq!(f1("x y", &["z"]), 0.0);
        assert_eq!(f1("x y", &["y x"]), 1.0);
    }

    #[test]
    fn bleu_examples() {
        let s = "one two three four five six";
        assert!((bleu(s, s, 4) - 1.0).abs() < 1e-12);
        assert_eq!(bleu("", s, 4), 0.0);
        // three correct unigrams, bigrams and the trigram; half the length
        let b = bleu("one two three", s, 4);
        assert!((b - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(token_accuracy(&[1, 2, 3], &[1, 2, 3]), 1.0);
        assert_eq!(token_accuracy(&[1, 2], &[3, 4]), 0.0);
        assert_eq!(token_accuracy::<u32>(&[], &[]), 1.0);
    }
}
