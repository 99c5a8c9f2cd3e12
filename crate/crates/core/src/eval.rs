//! Bag-of-words token F1 between predicted and gold answers.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::tokenize;

fn f1_single(pred: &[String], gold: &[String]) -> f64 {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / pred.len() as f64;
    let r = common as f64 / gold.len() as f64;
    2.0 * p * r / (p + r)
}

/// Maximum over the golds of the multiset-overlap F1.
pub fn token_f1<S: AsRef<str>>(prediction: &str, gold_answers: &[S]) -> Result<f64> {
    if gold_answers.is_empty() {
        return Err(Error::Argument("token_f1 needs at least one gold answer".into()));
    }
    let pred = tokenize(prediction);
    Ok(gold_answers
        .iter()
        .map(|g| f1_single(&pred, &tokenize(g.as_ref())))
        .fold(0.0, f64::max))
}

#[derive(Debug, Deserialize)]
struct PredLine {
    prediction: String,
}

#[derive(Debug, Deserialize)]
struct GoldLine {
    answers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    /// Mean token F1 in [0, 1].
    pub f1: f64,
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::parse(path, i + 1, e)))
        .collect()
}

/// Pairs `{"prediction"}` lines with `{"answers":[...]}` lines by position.
pub fn evaluate_files(pred: &Path, gold: &Path) -> Result<EvalReport> {
    let preds: Vec<PredLine> = read_lines(pred)?;
    let golds: Vec<GoldLine> = read_lines(gold)?;
    if preds.len() != golds.len() {
        return Err(Error::Validation(format!(
            "{} predictions but {} gold entries",
            preds.len(),
            golds.len()
        )));
    }
    let mut total = 0.0;
    for (i, (p, g)) in preds.iter().zip(&golds).enumerate() {
        total += token_f1(&p.prediction, &g.answers)
            .map_err(|_| Error::parse(gold, i + 1, "empty answers list"))?;
    }
    let count = preds.len();
    Ok(EvalReport {
        count,
        f1: if count == 0 { 0.0 } else { total / count as f64 },
    })
}
