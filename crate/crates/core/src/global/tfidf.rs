//! TF-IDF document vectors.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::vector::{self, Vector};

/// Dense TF-IDF rows over the sorted corpus vocabulary.
///
/// Raw term counts, smooth idf `ln((1+N)/(1+df)) + 1`, each row
/// L2-normalised. Empty documents map to the zero row.
///
/// ```
/// use token_guard::global::tfidf;
///
/// let docs = [vec!["a", "b"], vec!["a", "b"], vec!["c", "d"]];
/// let rows = tfidf(&docs).unwrap();
/// assert_eq!(rows[0], rows[1]);
/// assert_eq!(token_guard::vector::dot(&rows[0], &rows[2]), 0.0);
/// ```
pub fn tfidf<D, S>(docs: &[D]) -> Result<Vec<Vector>>
where
    D: AsRef<[S]>,
    S: AsRef<str>,
{
    let mut vocab: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        for term in doc.as_ref() {
            vocab.entry(term.as_ref()).or_insert(0);
        }
    }
    if vocab.is_empty() {
        return Err(Error::AllEmptyDocuments);
    }
    for (i, slot) in vocab.values_mut().enumerate() {
        *slot = i;
    }

    let n = docs.len() as f64;
    let mut df = vec![0usize; vocab.len()];
    let counts: Vec<Vec<f64>> = docs
        .iter()
        .map(|doc| {
            let mut row = vec![0.0; vocab.len()];
            for term in doc.as_ref() {
                row[vocab[term.as_ref()]] += 1.0;
            }
            for (j, c) in row.iter().enumerate() {
                if *c > 0.0 {
                    df[j] += 1;
                }
            }
            row
        })
        .collect();
    let idf: Vec<f64> = df
        .iter()
        .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
        .collect();

    Ok(counts
        .into_iter()
        .map(|row| {
            let weighted: Vector = row.iter().zip(&idf).map(|(c, w)| c * w).collect();
            let len = vector::norm(&weighted);
            if len == 0.0 {
                weighted
            } else {
                weighted.into_iter().map(|x| x / len).collect()
            }
        })
        .collect())
}
