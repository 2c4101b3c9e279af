//! Metrics: RandIndex and token-level F1 for parsing, anomaly F1 at template
//! and session level, ROUGE-1/L for free-text answers.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{tokenize, PLACEHOLDER};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("prediction and gold cover different items ({only_pred} only predicted, {only_gold} only gold)")]
    ItemSetMismatch { only_pred: usize, only_gold: usize },
    #[error("RandIndex needs at least 2 items, got {0}")]
    TooFewItems(usize),
    #[error("length mismatch: predicted {pred}, gold {gold}")]
    LengthMismatch { pred: usize, gold: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self { precision, recall, f1 }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn record(&mut self, gold_positive: bool, pred_positive: bool) {
        match (gold_positive, pred_positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn prf(&self) -> Prf {
        Prf::new(ratio(self.tp, self.tp + self.fp), ratio(self.tp, self.tp + self.fn_))
    }

    /// No positive in either gold or prediction: F1 is 0 by definition.
    pub fn no_positives(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }

    pub fn report(self) -> Scored {
        Scored {
            confusion: self,
            prf: self.prf(),
            no_positives: self.no_positives(),
        }
    }
}

impl std::ops::AddAssign for Confusion {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }
}

/// PRF together with the counts it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub confusion: Confusion,
    #[serde(flatten)]
    pub prf: Prf,
    pub no_positives: bool,
}

// ---------------------------------------------------------------------------
// RandIndex

/// Item → cluster label.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClusterAssignment {
    labels: BTreeMap<String, String>,
}

impl ClusterAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn assign(&mut self, item: impl Into<String>, cluster: impl Into<String>) {
        self.labels.insert(item.into(), cluster.into());
    }

    /// Items are the positions `0..n` of `labels`.
    pub fn from_sequence<L: ToString>(labels: &[L]) -> Self {
        Self {
            labels: labels.iter().enumerate().map(|(i, l)| (i.to_string(), l.to_string())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn pairs_of(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Share of item pairs on which both clusterings agree (together in both or
/// apart in both), computed from the contingency table.
pub fn rand_index(pred: &ClusterAssignment, gold: &ClusterAssignment) -> Result<f64, EvalError> {
    let only_pred = pred.labels.keys().filter(|k| !gold.labels.contains_key(*k)).count();
    let only_gold = gold.labels.keys().filter(|k| !pred.labels.contains_key(*k)).count();
    if only_pred + only_gold > 0 {
        return Err(EvalError::ItemSetMismatch { only_pred, only_gold });
    }
    let n = pred.len() as u64;
    if n < 2 {
        return Err(EvalError::TooFewItems(n as usize));
    }
    let mut cells: HashMap<(&str, &str), u64> = HashMap::new();
    let mut rows: HashMap<&str, u64> = HashMap::new();
    let mut cols: HashMap<&str, u64> = HashMap::new();
    for (item, p) in &pred.labels {
        let g = gold.labels[item].as_str();
        *cells.entry((p, g)).or_default() += 1;
        *rows.entry(p).or_default() += 1;
        *cols.entry(g).or_default() += 1;
    }
    let together_both: u64 = cells.values().map(|&c| pairs_of(c)).sum();
    let together_pred: u64 = rows.values().map(|&c| pairs_of(c)).sum();
    let together_gold: u64 = cols.values().map(|&c| pairs_of(c)).sum();
    let total = pairs_of(n);
    let apart_both = total + together_both - together_pred - together_gold;
    Ok((together_both + apart_both) as f64 / total as f64)
}

// ---------------------------------------------------------------------------
// Token-level F1

fn is_variable(token: &str) -> bool {
    token.contains(PLACEHOLDER)
}

/// Positive class is the variable token; positions are aligned one-to-one.
pub fn token_f1(pred_template: &str, gold_template: &str) -> Result<Scored, EvalError> {
    token_confusion(pred_template, gold_template).map(Confusion::report)
}

fn token_confusion(pred: &str, gold: &str) -> Result<Confusion, EvalError> {
    let (p, g) = (tokenize(pred), tokenize(gold));
    if p.len() != g.len() {
        return Err(EvalError::LengthMismatch {
            pred: p.len(),
            gold: g.len(),
        });
    }
    let mut c = Confusion::default();
    for (p, g) in p.iter().zip(&g) {
        c.record(is_variable(g), is_variable(p));
    }
    Ok(c)
}

/// Micro-averaged token F1 over many template pairs. Pairs of different
/// token length are tallied and left out of the counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenF1Accumulator {
    pub confusion: Confusion,
    pub pairs: usize,
    pub length_mismatches: usize,
}

impl TokenF1Accumulator {
    pub fn add(&mut self, pred: &str, gold: &str) {
        self.pairs += 1;
        match token_confusion(pred, gold) {
            Ok(c) => self.confusion += c,
            Err(_) => self.length_mismatches += 1,
        }
    }

    pub fn report(&self) -> Scored {
        self.confusion.report()
    }
}

// ---------------------------------------------------------------------------
// Anomaly detection

/// Positive class is "anomalous".
pub fn detection_f1(pred: &[bool], gold: &[bool]) -> Result<Scored, EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    let mut c = Confusion::default();
    for (&p, &g) in pred.iter().zip(gold) {
        c.record(g, p);
    }
    Ok(c.report())
}

/// Detection F1 over session labels produced with identical windowing.
pub fn session_f1(pred_sessions: &[bool], gold_sessions: &[bool]) -> Result<Scored, EvalError> {
    detection_f1(pred_sessions, gold_sessions)
}

// ---------------------------------------------------------------------------
// ROUGE

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    #[serde(flatten)]
    pub prf: Prf,
    /// Clipped unigram overlap (ROUGE-1) or LCS length (ROUGE-L).
    pub overlap: usize,
    pub candidate_len: usize,
    pub reference_len: usize,
    pub both_empty: bool,
}

impl RougeScore {
    fn new(overlap: usize, candidate_len: usize, reference_len: usize) -> Self {
        Self {
            prf: Prf::new(
                ratio(overlap as u64, candidate_len as u64),
                ratio(overlap as u64, reference_len as u64),
            ),
            overlap,
            candidate_len,
            reference_len,
            both_empty: candidate_len == 0 && reference_len == 0,
        }
    }
}

fn rouge_tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_lowercase).collect()
}

/// Clipped unigram overlap; case-folded, whitespace-tokenized, no stemming.
pub fn rouge1(candidate: &str, reference: &str) -> RougeScore {
    let (cand, refr) = (rouge_tokens(candidate), rouge_tokens(reference));
    let mut available: HashMap<&str, usize> = HashMap::new();
    for t in &refr {
        *available.entry(t).or_default() += 1;
    }
    let mut overlap = 0;
    for t in &cand {
        if let Some(n) = available.get_mut(t.as_str()).filter(|n| **n > 0) {
            *n -= 1;
            overlap += 1;
        }
    }
    RougeScore::new(overlap, cand.len(), refr.len())
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based ROUGE over case-folded whitespace tokens.
pub fn rouge_l(candidate: &str, reference: &str) -> RougeScore {
    let (cand, refr) = (rouge_tokens(candidate), rouge_tokens(reference));
    RougeScore::new(lcs_len(&cand, &refr), cand.len(), refr.len())
}

// ---------------------------------------------------------------------------
// Parsing report

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedLine {
    pub domain: String,
    pub predicted: String,
    pub gold: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainParsingScore {
    pub domain: String,
    pub lines: usize,
    pub rand_index: f64,
    pub f1: f64,
    pub token: TokenF1Accumulator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsingReport {
    pub domains: Vec<DomainParsingScore>,
}

impl ParsingReport {
    pub fn average(&self) -> Option<(f64, f64)> {
        let n = self.domains.len() as f64;
        (n > 0.0).then(|| {
            (
                self.domains.iter().map(|d| d.rand_index).sum::<f64>() / n,
                self.domains.iter().map(|d| d.f1).sum::<f64>() / n,
            )
        })
    }

    pub fn domain(&self, name: &str) -> Option<&DomainParsingScore> {
        self.domains.iter().find(|d| d.domain == name)
    }
}

impl fmt::Display for ParsingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14} {:>7} {:>7} {:>7} {:>10}", "Domain", "Lines", "RI", "F1", "Mismatch")?;
        for d in &self.domains {
            writeln!(
                f,
                "{:<14} {:>7} {:>7.3} {:>7.3} {:>10}",
                d.domain, d.lines, d.rand_index, d.f1, d.token.length_mismatches
            )?;
        }
        if let Some((ri, f1)) = self.average() {
            writeln!(f, "{:<14} {:>7} {:>7.3} {:>7.3} {:>10}", "Average", "", ri, f1, "")?;
        }
        Ok(())
    }
}

/// Per-domain RandIndex (clusters = template-string identity) and
/// micro-averaged token F1; domains in name order.
pub fn parsing_report(lines: &[ParsedLine]) -> Result<ParsingReport, EvalError> {
    let mut by_domain: BTreeMap<&str, Vec<&ParsedLine>> = BTreeMap::new();
    for l in lines {
        by_domain.entry(&l.domain).or_default().push(l);
    }
    let mut domains = Vec::new();
    for (domain, rows) in by_domain {
        let norm = |s: &str| tokenize(s).join(" ");
        let pred: Vec<String> = rows.iter().map(|r| norm(&r.predicted)).collect();
        let gold: Vec<String> = rows.iter().map(|r| norm(&r.gold)).collect();
        let ri = rand_index(&ClusterAssignment::from_sequence(&pred), &ClusterAssignment::from_sequence(&gold))?;
        let mut token = TokenF1Accumulator::default();
        for (p, g) in pred.iter().zip(&gold) {
            token.add(p, g);
        }
        domains.push(DomainParsingScore {
            domain: domain.to_owned(),
            lines: rows.len(),
            rand_index: ri,
            f1: token.report().prf.f1,
            token,
        });
    }
    Ok(ParsingReport { domains })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn rand_index_examples() {
        let same = ClusterAssignment::from_sequence(&[1, 1, 2, 3]);
        assert_eq!(rand_index(&same, &same).unwrap(), 1.0);
        let together = ClusterAssignment::from_sequence(&[0, 0, 0]);
        let apart = ClusterAssignment::from_sequence(&[0, 1, 2]);
        assert_eq!(rand_index(&together, &apart).unwrap(), 0.0);
        let pred = ClusterAssignment::from_sequence(&[1, 1, 2, 2]);
        let gold = ClusterAssignment::from_sequence(&[1, 2, 2, 2]);
        assert!(close(rand_index(&pred, &gold).unwrap(), 0.5));
    }

    #[test]
    fn rand_index_errors() {
        let mut a = ClusterAssignment::new();
        a.assign("x", "1");
        a.assign("y", "1");
        let mut b = ClusterAssignment::new();
        b.assign("x", "1");
        b.assign("z", "1");
        assert_eq!(
            rand_index(&a, &b),
            Err(EvalError::ItemSetMismatch { only_pred: 1, only_gold: 1 })
        );
        let one = ClusterAssignment::from_sequence(&[1]);
        assert_eq!(rand_index(&one, &one), Err(EvalError::TooFewItems(1)));
    }

    #[test]
    fn token_f1_examples() {
        let s = token_f1("Connection from <*> port 22", "Connection from <*> port <*>").unwrap();
        assert_eq!(s.confusion, Confusion { tp: 1, fp: 0, tn: 3, fn_: 1 });
        assert!(close(s.prf.f1, 2.0 / 3.0));
        let perfect = token_f1("a <*> b", "a <*> b").unwrap();
        assert_eq!(perfect.prf, Prf { precision: 1.0, recall: 1.0, f1: 1.0 });
        let fixed = token_f1("a b", "a b").unwrap();
        assert!(fixed.no_positives && fixed.prf.f1 == 0.0);
        assert!(token_f1("a b", "a").is_err());
    }

    #[test]
    fn accumulator_tallies_mismatches() {
        let mut acc = TokenF1Accumulator::default();
        acc.add("a <*>", "a <*>");
        acc.add("a <*> c", "a <*>");
        assert_eq!((acc.pairs, acc.length_mismatches, acc.confusion.tp), (2, 1, 1));
    }

    #[test]
    fn detection_examples() {
        let s = detection_f1(&[true, true, false, false], &[true, false, true, false]).unwrap();
        assert_eq!((s.confusion.tp, s.confusion.fp, s.confusion.fn_), (1, 1, 1));
        assert!(close(s.prf.precision, 0.5) && close(s.prf.recall, 0.5) && close(s.prf.f1, 0.5));
        let silent = detection_f1(&[false, false], &[true, false]).unwrap();
        assert_eq!((silent.prf.recall, silent.prf.f1), (0.0, 0.0));
        assert_eq!(detection_f1(&[true], &[true]).unwrap().prf.f1, 1.0);
        assert!(session_f1(&[true], &[]).is_err());
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge1("The cat", "the cat").prf.f1, 1.0);
        assert_eq!(rouge1("dog", "cat").prf.f1, 0.0);
        let clipped = rouge1("the cat the cat", "the cat");
        assert_eq!(clipped.overlap, 2);
        assert!(close(clipped.prf.precision, 0.5) && close(clipped.prf.recall, 1.0));
        assert!(close(clipped.prf.f1, 2.0 / 3.0));

        let l = rouge_l("a b c d", "a c b d");
        assert_eq!(l.overlap, 3);
        assert!(close(l.prf.f1, 0.75));
        assert_eq!(rouge_l("", "a b").prf.f1, 0.0);
        let empty = rouge_l("", " ");
        assert!(empty.both_empty && empty.prf.f1 == 0.0);
        assert!(rouge1("", "").both_empty);
    }

    #[test]
    fn report_on_gold_is_perfect() {
        let lines: Vec<ParsedLine> = ["a <*>", "a <*>", "b c <*>", "d"]
            .iter()
            .map(|t| ParsedLine {
                domain: "X".into(),
                predicted: (*t).into(),
                gold: (*t).into(),
            })
            .collect();
        let r = parsing_report(&lines).unwrap();
        assert_eq!((r.domains[0].rand_index, r.domains[0].f1), (1.0, 1.0));
        assert!(r.to_string().contains("Average"));
    }
}
