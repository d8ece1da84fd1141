use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// From a match count and the candidate / reference totals.
    pub fn from_counts(matched: usize, candidate: usize, reference: usize) -> Self {
        let precision = if candidate == 0 {
            0.0
        } else {
            matched as f64 / candidate as f64
        };
        let recall = if reference == 0 {
            0.0
        } else {
            matched as f64 / reference as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct RougeScores {
    pub rouge1: Prf,
    pub rouge2: Prf,
    #[serde(rename = "rougeL")]
    pub rouge_l: Prf,
}

/// Lowercase and split on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

fn rouge_n(c: &[String], r: &[String], n: usize) -> Prf {
    let cc = ngram_counts(c, n);
    let rc = ngram_counts(r, n);
    let matched = cc
        .iter()
        .map(|(g, &k)| k.min(rc.get(g).copied().unwrap_or(0)))
        .sum();
    Prf::from_counts(
        matched,
        c.len().saturating_sub(n - 1),
        r.len().saturating_sub(n - 1),
    )
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge(candidate: &str, reference: &str) -> Result<RougeScores> {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    if c.is_empty() || r.is_empty() {
        return Err(Error::Contract("ROUGE needs non-empty token lists".into()));
    }
    Ok(RougeScores {
        rouge1: rouge_n(&c, &r, 1),
        rouge2: rouge_n(&c, &r, 2),
        rouge_l: Prf::from_counts(lcs_len(&c, &r), c.len(), r.len()),
    })
}

/// Component-wise mean of several score sets.
pub fn mean_rouge(scores: &[RougeScores]) -> Option<RougeScores> {
    if scores.is_empty() {
        return None;
    }
    let n = scores.len() as f64;
    let avg = |f: &dyn Fn(&RougeScores) -> Prf| {
        let (p, r, f1) = scores.iter().map(f).fold((0.0, 0.0, 0.0), |(a, b, c), x| {
            (a + x.precision, b + x.recall, c + x.f1)
        });
        Prf {
            precision: p / n,
            recall: r / n,
            f1: f1 / n,
        }
    };
    Some(RougeScores {
        rouge1: avg(&|s| s.rouge1),
        rouge2: avg(&|s| s.rouge2),
        rouge_l: avg(&|s| s.rouge_l),
    })
}
