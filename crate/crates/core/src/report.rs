//! Per-language score aggregation and result tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::{LanguageTag, TaskKind};
use crate::metrics::MetricReport;
use crate::prompt::PromptMode;
use crate::romanizer::ScriptTag;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ReportError {
    #[error("no metric reports to aggregate")]
    Empty,
    #[error("reports mix task kinds {0} and {1}")]
    MixedTasks(TaskKind, TaskKind),
    #[error("duplicate report for {language} in mode {mode}")]
    Duplicate {
        language: LanguageTag,
        mode: PromptMode,
    },
    #[error("unknown format {0:?} (expected tsv, jsonl or md)")]
    UnknownFormat(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupingKind {
    AllLanguages,
    Script,
}

impl FromStr for GroupingKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(GroupingKind::AllLanguages),
            "script" => Ok(GroupingKind::Script),
            _ => Err(format!("unknown grouping {s:?} (expected all or script)")),
        }
    }
}

/// Row key. Serialized as `all` or the script code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Grouping {
    AllLanguages,
    Script(ScriptTag),
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Grouping::AllLanguages => f.write_str("all"),
            Grouping::Script(s) => write!(f, "{s}"),
        }
    }
}

impl FromStr for Grouping {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(Grouping::AllLanguages);
        }
        s.parse()
            .map(Grouping::Script)
            .map_err(|_| format!("invalid grouping {s:?}"))
    }
}

impl Serialize for Grouping {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Grouping {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub grouping: Grouping,
    pub mode: PromptMode,
    pub mean_score: f64,
    pub n_languages: usize,
}

/// Unweighted mean score per (group, mode). Rows come out ordered by group
/// (scripts ascending) and then Orig, Latn, Combined.
pub fn aggregate(
    reports: &[MetricReport],
    grouping: GroupingKind,
) -> Result<Vec<AggregateRow>, ReportError> {
    let first = reports.first().ok_or(ReportError::Empty)?;
    let mut seen = BTreeSet::new();
    let mut groups: BTreeMap<(Grouping, PromptMode), Vec<f64>> = BTreeMap::new();
    for r in reports {
        if r.task != first.task {
            return Err(ReportError::MixedTasks(first.task, r.task));
        }
        if !seen.insert((r.language, r.mode)) {
            return Err(ReportError::Duplicate {
                language: r.language,
                mode: r.mode,
            });
        }
        let key = match grouping {
            GroupingKind::AllLanguages => Grouping::AllLanguages,
            GroupingKind::Script => Grouping::Script(r.language.script()),
        };
        groups.entry((key, r.mode)).or_default().push(r.score);
    }
    Ok(groups
        .into_iter()
        .map(|((grouping, mode), mut scores)| {
            // summing in a fixed order keeps the mean independent of input order
            scores.sort_by(f64::total_cmp);
            AggregateRow {
                grouping,
                mode,
                mean_score: scores.iter().sum::<f64>() / scores.len() as f64,
                n_languages: scores.len(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Tsv,
    Jsonl,
    Markdown,
}

impl ReportFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Tsv => "tsv",
            ReportFormat::Jsonl => "jsonl",
            ReportFormat::Markdown => "md",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv" => Ok(ReportFormat::Tsv),
            "jsonl" => Ok(ReportFormat::Jsonl),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            _ => Err(ReportError::UnknownFormat(s.to_string())),
        }
    }
}

/// One line of a JSONL report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ReportLine {
    Aggregate(AggregateRow),
    Language(MetricReport),
}

pub const TSV_HEADER: &str = "grouping\tmode\tmean_score\tn_languages";
const TSV_LANGUAGE_HEADER: &str = "language\tmode\tscore\tn_examples\tn_unparsed";

/// Renders aggregate rows, followed by per-language scores when given.
/// TSV and JSONL print full-precision floats; Markdown rounds to one decimal
/// and bolds the best mode in each group.
pub fn render_report(
    rows: &[AggregateRow],
    per_language: &[MetricReport],
    format: ReportFormat,
) -> Result<String, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut out = String::new();
    match format {
        ReportFormat::Tsv => {
            writeln!(out, "{TSV_HEADER}").unwrap();
            for r in rows {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}",
                    r.grouping,
                    r.mode.as_str(),
                    r.mean_score,
                    r.n_languages
                )
                .unwrap();
            }
            if !per_language.is_empty() {
                writeln!(out, "\n{TSV_LANGUAGE_HEADER}").unwrap();
                for m in per_language {
                    writeln!(
                        out,
                        "{}\t{}\t{}\t{}\t{}",
                        m.language,
                        m.mode.as_str(),
                        m.score,
                        m.n_examples,
                        m.n_unparsed
                    )
                    .unwrap();
                }
            }
        }
        ReportFormat::Jsonl => {
            let lines = rows
                .iter()
                .cloned()
                .map(ReportLine::Aggregate)
                .chain(per_language.iter().cloned().map(ReportLine::Language));
            for line in lines {
                out.push_str(&serde_json::to_string(&line).expect("serializable"));
                out.push('\n');
            }
        }
        ReportFormat::Markdown => render_markdown(&mut out, rows, per_language),
    }
    Ok(out)
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Formats one table row of scores, bolding the best one. Ties on the rounded
/// value go to the earlier mode.
fn score_cells(scores: &BTreeMap<PromptMode, f64>) -> String {
    let best = scores
        .iter()
        .fold(None, |best: Option<(PromptMode, f64)>, (m, s)| match best {
            Some((_, b)) if round1(*s) <= round1(b) => best,
            _ => Some((*m, *s)),
        })
        .map(|(m, _)| m);
    PromptMode::ALL
        .iter()
        .map(|m| match scores.get(m) {
            Some(s) if Some(*m) == best => format!(" **{:.1}** |", s),
            Some(s) => format!(" {:.1} |", s),
            None => " - |".to_string(),
        })
        .collect()
}

fn render_markdown(out: &mut String, rows: &[AggregateRow], per_language: &[MetricReport]) {
    let mut groups: BTreeMap<Grouping, (BTreeMap<PromptMode, f64>, usize)> = BTreeMap::new();
    for r in rows {
        let entry = groups.entry(r.grouping).or_default();
        entry.0.insert(r.mode, r.mean_score);
        entry.1 = entry.1.max(r.n_languages);
    }
    out.push_str("| group | languages | Orig | Latn | Combined |\n");
    out.push_str("|---|---:|---:|---:|---:|\n");
    for (g, (scores, n)) in &groups {
        writeln!(out, "| {g} | {n} |{}", score_cells(scores)).unwrap();
    }
    if per_language.is_empty() {
        return;
    }
    let mut langs: BTreeMap<LanguageTag, BTreeMap<PromptMode, f64>> = BTreeMap::new();
    for m in per_language {
        langs.entry(m.language).or_default().insert(m.mode, m.score);
    }
    out.push_str("\n| language | Orig | Latn | Combined |\n");
    out.push_str("|---|---:|---:|---:|\n");
    for (lang, scores) in &langs {
        writeln!(out, "| {lang} |{}", score_cells(scores)).unwrap();
    }
}

/// Reads back a JSONL report.
pub fn parse_jsonl_report(
    text: &str,
) -> Result<(Vec<AggregateRow>, Vec<MetricReport>), ReportError> {
    let mut rows = Vec::new();
    let mut langs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ReportLine = serde_json::from_str(line).map_err(|e| ReportError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?;
        match parsed {
            ReportLine::Aggregate(r) => rows.push(r),
            ReportLine::Language(m) => langs.push(m),
        }
    }
    Ok((rows, langs))
}

/// Reads back the aggregate section of a TSV report.
pub fn parse_tsv_rows(text: &str) -> Result<Vec<AggregateRow>, ReportError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            break;
        }
        let err = |reason: String| ReportError::Parse {
            line: i + 1,
            reason,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(err(format!("expected 4 columns, found {}", cols.len())));
        }
        rows.push(AggregateRow {
            grouping: cols[0].parse().map_err(err)?,
            mode: cols[1].parse().map_err(err)?,
            mean_score: cols[2].parse().map_err(|e| err(format!("{e}")))?,
            n_languages: cols[3].parse().map_err(|e| err(format!("{e}")))?,
        });
    }
    Ok(rows)
}
