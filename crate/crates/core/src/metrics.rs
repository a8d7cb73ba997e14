//! Completion parsing and scoring.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{ClassLabel, LanguageTag, TagLabel, TaskKind};
use crate::prompt::PromptMode;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("gold has {gold} items but predictions have {pred}")]
    CountMismatch { gold: usize, pred: usize },
    #[error("example {index}: gold has {gold} tags but prediction has {pred}")]
    LengthMismatch {
        index: usize,
        gold: usize,
        pred: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassPrediction {
    Label(ClassLabel),
    Unparsed(Unparsed),
}

/// Marker for a classification output that named no label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unparsed {
    #[serde(rename = "<unparsed>")]
    Unparsed,
}

impl ClassPrediction {
    pub fn label(&self) -> Option<&ClassLabel> {
        match self {
            ClassPrediction::Label(l) => Some(l),
            ClassPrediction::Unparsed(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionPayload {
    Tags(Vec<TagLabel>),
    Class(ClassPrediction),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub example_id: String,
    pub payload: PredictionPayload,
}

fn is_tag_boundary(c: Option<char>) -> bool {
    c.is_none_or(|c| !(c.is_alphanumeric() || c == '-' || c == '_'))
}

/// Longest tag spelled at the start of `s` and followed by a boundary.
fn tag_at(s: &str) -> Option<(TagLabel, usize)> {
    TagLabel::ALL
        .iter()
        .filter(|t| s.starts_with(t.as_str()))
        .filter(|t| is_tag_boundary(s[t.as_str().len()..].chars().next()))
        .max_by_key(|t| t.as_str().len())
        .map(|t| (*t, t.as_str().len()))
}

/// Tags found after a colon, in order. Whitespace between the colon and the
/// tag is allowed.
fn colon_tags(raw: &str) -> Vec<TagLabel> {
    let mut found = Vec::new();
    for line in raw.lines() {
        let mut rest = line;
        while let Some(i) = rest.find(':') {
            let after = rest[i + 1..].trim_start();
            match tag_at(after) {
                Some((tag, len)) => {
                    found.push(tag);
                    let consumed = rest.len() - after.len() + len;
                    rest = &rest[consumed..];
                }
                None => rest = &rest[i + 1..],
            }
        }
    }
    found
}

fn bare_tags(raw: &str) -> Vec<TagLabel> {
    raw.split_whitespace()
        .filter_map(|w| {
            let w = w.trim_matches(|c: char| matches!(c, ',' | ';' | '.' | '[' | ']' | '"' | '\''));
            w.parse().ok()
        })
        .collect()
}

/// Tags read from a completion, plus whether anything was recognised.
pub fn parse_seqlab_detailed(raw: &str, token_count: usize) -> (Vec<TagLabel>, bool) {
    let mut tags = colon_tags(raw);
    if tags.is_empty() {
        tags = bare_tags(raw);
    }
    let parsed = !tags.is_empty();
    tags.resize(token_count, TagLabel::O);
    (tags, parsed)
}

/// Reads `word: TAG` lines (or a bare tag sequence) and returns exactly
/// `token_count` tags, padding with `O`.
pub fn parse_seqlab_output(raw: &str, token_count: usize) -> Vec<TagLabel> {
    parse_seqlab_detailed(raw, token_count).0
}

/// Case-insensitive search for each verbalized label; the earliest match
/// wins and, at equal positions, the longer verbalizer.
pub fn parse_cls_output(
    raw: &str,
    label_set: &[ClassLabel],
    verbalizers: &BTreeMap<String, String>,
) -> ClassPrediction {
    let hay = raw.to_lowercase();
    let mut best: Option<(usize, usize, &ClassLabel)> = None;
    for label in label_set {
        let surface = verbalizers
            .get(label.as_str())
            .map(String::as_str)
            .unwrap_or(label.as_str())
            .to_lowercase();
        if surface.is_empty() {
            continue;
        }
        if let Some(pos) = hay.find(&surface) {
            let better = match best {
                None => true,
                Some((bp, bl, _)) => pos < bp || (pos == bp && surface.len() > bl),
            };
            if better {
                best = Some((pos, surface.len(), label));
            }
        }
    }
    match best {
        Some((_, _, label)) => ClassPrediction::Label(label.clone()),
        None => ClassPrediction::Unparsed(Unparsed::Unparsed),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-tag precision/recall/F1 over all token positions, for tags that occur
/// in the gold or the predictions.
pub fn per_class_scores(
    gold: &[Vec<TagLabel>],
    pred: &[Vec<TagLabel>],
) -> Result<BTreeMap<TagLabel, ClassScores>, MetricError> {
    if gold.len() != pred.len() {
        return Err(MetricError::CountMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let mut tp = [0usize; 7];
    let mut gold_n = [0usize; 7];
    let mut pred_n = [0usize; 7];
    for (index, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(MetricError::LengthMismatch {
                index,
                gold: g.len(),
                pred: p.len(),
            });
        }
        for (a, b) in g.iter().zip(p) {
            gold_n[a.index()] += 1;
            pred_n[b.index()] += 1;
            if a == b {
                tp[a.index()] += 1;
            }
        }
    }
    let mut out = BTreeMap::new();
    for tag in TagLabel::ALL {
        let i = tag.index();
        if gold_n[i] == 0 && pred_n[i] == 0 {
            continue;
        }
        let precision = ratio(tp[i], pred_n[i]);
        let recall = ratio(tp[i], gold_n[i]);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        out.insert(
            tag,
            ClassScores {
                precision,
                recall,
                f1,
                support: gold_n[i],
            },
        );
    }
    Ok(out)
}

/// Token-level macro-F1 over the tags present in gold or predictions.
pub fn macro_f1(gold: &[Vec<TagLabel>], pred: &[Vec<TagLabel>]) -> Result<f64, MetricError> {
    let scores = per_class_scores(gold, pred)?;
    if scores.is_empty() {
        return Ok(0.0);
    }
    Ok(scores.values().map(|s| s.f1).sum::<f64>() / scores.len() as f64)
}

/// Fraction of exact matches; unparsed predictions count as wrong.
pub fn accuracy(gold: &[ClassLabel], pred: &[ClassPrediction]) -> Result<f64, MetricError> {
    if gold.len() != pred.len() {
        return Err(MetricError::CountMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    if gold.is_empty() {
        return Ok(0.0);
    }
    let correct = gold
        .iter()
        .zip(pred)
        .filter(|(g, p)| p.label() == Some(*g))
        .count();
    Ok(correct as f64 / gold.len() as f64)
}

/// Score of one (task, language, mode) run. `score` is on a 0-100 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: TaskKind,
    pub language: LanguageTag,
    pub mode: PromptMode,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class: Option<BTreeMap<String, ClassScores>>,
    pub n_examples: usize,
    pub n_unparsed: usize,
}

impl MetricReport {
    pub fn seqlab(
        language: LanguageTag,
        mode: PromptMode,
        gold: &[Vec<TagLabel>],
        pred: &[Vec<TagLabel>],
        n_unparsed: usize,
    ) -> Result<Self, MetricError> {
        let per_class = per_class_scores(gold, pred)?;
        let f1 = macro_f1(gold, pred)?;
        Ok(MetricReport {
            task: TaskKind::SeqLab,
            language,
            mode,
            score: 100.0 * f1,
            per_class: Some(
                per_class
                    .into_iter()
                    .map(|(t, s)| (t.as_str().to_string(), s))
                    .collect(),
            ),
            n_examples: gold.len(),
            n_unparsed,
        })
    }

    pub fn cls(
        language: LanguageTag,
        mode: PromptMode,
        gold: &[ClassLabel],
        pred: &[ClassPrediction],
    ) -> Result<Self, MetricError> {
        Ok(MetricReport {
            task: TaskKind::Cls,
            language,
            mode,
            score: 100.0 * accuracy(gold, pred)?,
            per_class: None,
            n_examples: gold.len(),
            n_unparsed: pred.iter().filter(|p| p.label().is_none()).count(),
        })
    }
}
