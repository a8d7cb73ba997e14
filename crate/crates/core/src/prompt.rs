//! Prompt rendering for the three script modes.
//!
//! A prompt is the instruction, then one block per demonstration, then the
//! query block, separated by blank lines. Blocks are `{slot}` templates; the
//! slots are `text_orig`, `text_latn` and `answer` (demonstrations only). The
//! instruction may use `{labels}`, the verbalized label list. `{{` and `}}`
//! produce literal braces.
//!
//! Sequence-labeling answers are one `word: TAG` line per token. In Latn mode
//! the word is the romanized token and in Combined mode it is
//! `token (romanized): TAG`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Example, Payload, TagLabel, TaskKind};
use crate::romanizer::RomanizerConfig;

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("template slot {{{0}}} cannot be filled")]
    SlotUnfilled(String),
    #[error("unbalanced brace in template at byte {0}")]
    UnbalancedBrace(usize),
    #[error("invalid {mode} template: {reason}")]
    InvalidTemplate { mode: PromptMode, reason: String },
    #[error("{0}")]
    Inconsistent(String),
    #[error("example {id:?} is {found} but the templates are for {expected}")]
    TaskMismatch {
        id: String,
        expected: TaskKind,
        found: TaskKind,
    },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    Orig,
    Latn,
    Combined,
}

impl PromptMode {
    pub const ALL: [PromptMode; 3] = [PromptMode::Orig, PromptMode::Latn, PromptMode::Combined];

    pub fn as_str(&self) -> &'static str {
        match self {
            PromptMode::Orig => "orig",
            PromptMode::Latn => "latn",
            PromptMode::Combined => "combined",
        }
    }

    fn uses_orig(&self) -> bool {
        !matches!(self, PromptMode::Latn)
    }

    fn uses_latn(&self) -> bool {
        !matches!(self, PromptMode::Orig)
    }
}

impl FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "orig" => Ok(PromptMode::Orig),
            "latn" => Ok(PromptMode::Latn),
            "combined" => Ok(PromptMode::Combined),
            _ => Err(format!(
                "unknown mode {s:?} (expected orig, latn or combined)"
            )),
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Substitutes `{name}` slots. Unknown slots are an error.
pub fn fill(template: &str, slots: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    let mut offset = 0;
    while let Some(i) = rest.find(['{', '}']) {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        if let Some(after) = tail.strip_prefix("{{") {
            out.push('{');
            rest = after;
            offset += i + 2;
        } else if let Some(after) = tail.strip_prefix("}}") {
            out.push('}');
            rest = after;
            offset += i + 2;
        } else if tail.starts_with('}') {
            return Err(PromptError::UnbalancedBrace(offset + i));
        } else {
            let end = tail
                .find('}')
                .ok_or(PromptError::UnbalancedBrace(offset + i))?;
            let name = &tail[1..end];
            let value = slots
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| PromptError::SlotUnfilled(name.to_string()))?;
            out.push_str(value);
            rest = &tail[end + 1..];
            offset += i + end + 1;
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Slot names referenced by a template, in order of appearance.
pub fn slots_of(template: &str) -> Vec<String> {
    let mut names = Vec::new();
    let mut rest = template;
    while let Some(i) = rest.find('{') {
        let tail = &rest[i..];
        if let Some(after) = tail.strip_prefix("{{") {
            rest = after;
            continue;
        }
        match tail.find('}') {
            Some(end) => {
                names.push(tail[1..end].to_string());
                rest = &tail[end + 1..];
            }
            None => break,
        }
    }
    names
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockTemplates {
    pub demo: String,
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    task_kind: TaskKind,
    instruction: String,
    blocks: [BlockTemplates; 3],
    labels: Vec<String>,
    verbalizers: BTreeMap<String, String>,
}

const SEQLAB_INSTRUCTION: &str = "Tag every word of the sentence with one of the named entity labels {labels}. Write one line per word in the form word: label.";
const CLS_INSTRUCTION: &str =
    "Classify the topic of the sentence. Answer with exactly one of these labels: {labels}.";

impl TemplateSet {
    pub fn new(
        task_kind: TaskKind,
        instruction: impl Into<String>,
        blocks: [BlockTemplates; 3],
        labels: Vec<String>,
        verbalizers: BTreeMap<String, String>,
    ) -> Result<Self, PromptError> {
        let set = TemplateSet {
            task_kind,
            instruction: instruction.into(),
            blocks,
            labels,
            verbalizers,
        };
        set.validate()?;
        Ok(set)
    }

    /// Canonical English templates for sequence labeling over the 7 BIO tags.
    pub fn default_seqlab() -> Self {
        let labels = TagLabel::ALL
            .iter()
            .map(|t| t.as_str().to_string())
            .collect();
        Self::new(
            TaskKind::SeqLab,
            SEQLAB_INSTRUCTION,
            default_blocks("Tags:\n"),
            labels,
            BTreeMap::new(),
        )
        .expect("built-in templates are valid")
    }

    /// Canonical English templates for classification over `labels`.
    pub fn default_cls(labels: &[impl AsRef<str>]) -> Self {
        Self::new(
            TaskKind::Cls,
            CLS_INSTRUCTION,
            default_blocks("Label: "),
            labels.iter().map(|l| l.as_ref().to_string()).collect(),
            BTreeMap::new(),
        )
        .expect("built-in templates are valid")
    }

    pub fn task_kind(&self) -> TaskKind {
        self.task_kind
    }

    pub fn instruction_template(&self) -> &str {
        &self.instruction
    }

    pub fn blocks(&self, mode: PromptMode) -> &BlockTemplates {
        &self.blocks[mode as usize]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn with_verbalizers(mut self, verbalizers: BTreeMap<String, String>) -> Self {
        self.verbalizers = verbalizers;
        self
    }

    /// Surface string for a label; the label itself when no verbalizer is set.
    pub fn verbalize<'a>(&'a self, label: &'a str) -> &'a str {
        self.verbalizers
            .get(label)
            .map(String::as_str)
            .unwrap_or(label)
    }

    /// `(label, surface)` pairs in label-set order.
    pub fn verbalized_labels(&self) -> Vec<(&str, &str)> {
        self.labels
            .iter()
            .map(|l| (l.as_str(), self.verbalize(l)))
            .collect()
    }

    fn validate(&self) -> Result<(), PromptError> {
        let instr_slots = slots_of(&self.instruction);
        if let Some(s) = instr_slots.iter().find(|s| s.as_str() != "labels") {
            return Err(PromptError::SlotUnfilled(s.clone()));
        }
        for mode in PromptMode::ALL {
            let invalid = |reason: String| PromptError::InvalidTemplate { mode, reason };
            let b = self.blocks(mode);
            for (kind, template, wants_answer) in
                [("demo", &b.demo, true), ("query", &b.query, false)]
            {
                let slots = slots_of(template);
                let has = |name: &str| slots.iter().any(|s| s == name);
                if let Some(s) = slots
                    .iter()
                    .find(|s| !matches!(s.as_str(), "text_orig" | "text_latn" | "answer"))
                {
                    return Err(PromptError::SlotUnfilled(s.clone()));
                }
                if has("text_orig") != mode.uses_orig() {
                    return Err(invalid(format!(
                        "{kind} block must {}use {{text_orig}}",
                        if mode.uses_orig() { "" } else { "not " }
                    )));
                }
                if has("text_latn") != mode.uses_latn() {
                    return Err(invalid(format!(
                        "{kind} block must {}use {{text_latn}}",
                        if mode.uses_latn() { "" } else { "not " }
                    )));
                }
                if has("answer") != wants_answer {
                    return Err(invalid(format!(
                        "{kind} block must {}use {{answer}}",
                        if wants_answer { "" } else { "not " }
                    )));
                }
            }
        }
        Ok(())
    }

    /// Reads override files from `dir`: `<task>.<mode>.txt` for any subset of
    /// modes and an optional `<task>.verbalizers.tsv` (`label<TAB>surface`).
    /// Modes without a file keep the built-in wording. The instruction must be
    /// the same in every mode.
    pub fn load_overrides(self, dir: &Path) -> Result<Self, PromptError> {
        let task = self.task_kind.to_string();
        let read = |path: &Path| {
            fs::read_to_string(path).map_err(|source| PromptError::Io {
                path: path.to_path_buf(),
                source,
            })
        };
        let mut instruction: Option<String> = None;
        let mut blocks = self.blocks.clone();
        for mode in PromptMode::ALL {
            let path = dir.join(format!("{task}.{mode}.txt"));
            if !path.exists() {
                continue;
            }
            let sections = parse_template_file(&read(&path)?)
                .map_err(|reason| PromptError::InvalidTemplate { mode, reason })?;
            match &instruction {
                Some(prev) if *prev != sections.0 => {
                    return Err(PromptError::Inconsistent(format!(
                        "instruction in {} differs from the other modes",
                        path.display()
                    )))
                }
                _ => instruction = Some(sections.0),
            }
            blocks[mode as usize] = BlockTemplates {
                demo: sections.1,
                query: sections.2,
            };
        }
        let replaced = PromptMode::ALL
            .iter()
            .filter(|m| dir.join(format!("{task}.{m}.txt")).exists())
            .count();
        if replaced > 0 && replaced < 3 && instruction.as_deref() != Some(&self.instruction) {
            return Err(PromptError::Inconsistent(
                "overriding the instruction requires a template file for every mode".into(),
            ));
        }
        let mut verbalizers = self.verbalizers.clone();
        let vpath = dir.join(format!("{task}.verbalizers.tsv"));
        if vpath.exists() {
            for (n, line) in read(&vpath)?.lines().enumerate() {
                if line.trim().is_empty() || line.starts_with('#') {
                    continue;
                }
                let (label, surface) = line.split_once('\t').ok_or_else(|| {
                    PromptError::Inconsistent(format!(
                        "{}:{}: expected label<TAB>surface",
                        vpath.display(),
                        n + 1
                    ))
                })?;
                verbalizers.insert(label.to_string(), surface.to_string());
            }
        }
        TemplateSet::new(
            self.task_kind,
            instruction.unwrap_or(self.instruction),
            blocks,
            self.labels,
            verbalizers,
        )
    }

    /// Renders the template file for one mode (the format `load_overrides` reads).
    pub fn to_template_file(&self, mode: PromptMode) -> String {
        let b = self.blocks(mode);
        format!(
            "[instruction]\n{}\n[demo]\n{}\n[query]\n{}\n",
            self.instruction, b.demo, b.query
        )
    }
}

fn default_blocks(answer_lead: &str) -> [BlockTemplates; 3] {
    let block = |lines: &str| BlockTemplates {
        demo: format!("{lines}{answer_lead}{{answer}}"),
        query: format!("{lines}{}", answer_lead.trim_end_matches(' ')),
    };
    [
        block("Sentence: {text_orig}\n"),
        block("Sentence: {text_latn}\n"),
        block("Sentence: {text_orig}\nTransliteration: {text_latn}\n"),
    ]
}

// Sections are introduced by `[instruction]`, `[demo]` and `[query]` lines.
// The single newline before the next header belongs to the file layout.
fn parse_template_file(contents: &str) -> Result<(String, String, String), String> {
    let mut sections: BTreeMap<&str, String> = BTreeMap::new();
    let mut current: Option<&str> = None;
    for line in contents.split_inclusive('\n') {
        let header = line.trim_end_matches(['\n', '\r']);
        if let Some(name @ ("instruction" | "demo" | "query")) =
            header.strip_prefix('[').and_then(|h| h.strip_suffix(']'))
        {
            if sections.contains_key(name) {
                return Err(format!("section [{name}] appears twice"));
            }
            sections.insert(name, String::new());
            current = Some(name);
            continue;
        }
        match current {
            Some(name) => sections.get_mut(name).expect("inserted").push_str(line),
            None if line.trim().is_empty() => {}
            None => return Err("text before the first section header".into()),
        }
    }
    let mut take = |name: &str| {
        sections
            .remove(name)
            .map(|mut s| {
                if s.ends_with('\n') {
                    s.pop();
                    if s.ends_with('\r') {
                        s.pop();
                    }
                }
                s
            })
            .ok_or_else(|| format!("missing [{name}] section"))
    };
    Ok((take("instruction")?, take("demo")?, take("query")?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub query_token_count: Option<usize>,
    pub mode: PromptMode,
}

/// Romanizes the target-language text of an example; labels are untouched.
pub fn transliterate_example(config: &RomanizerConfig, ex: &Example) -> Example {
    let payload = match &ex.payload {
        Payload::SeqLab { tokens, tags } => Payload::SeqLab {
            tokens: config.romanize_tokens(tokens),
            tags: tags.clone(),
        },
        Payload::Cls { text, label } => Payload::Cls {
            text: config.romanize_text(text),
            label: label.clone(),
        },
    };
    Example {
        id: ex.id.clone(),
        payload,
    }
}

struct Slots {
    orig: String,
    latn: String,
    answer: String,
}

fn example_slots(
    templates: &TemplateSet,
    mode: PromptMode,
    ex: &Example,
    config: &RomanizerConfig,
) -> Slots {
    match &ex.payload {
        Payload::SeqLab { tokens, tags } => {
            let latn = if mode.uses_latn() {
                config.romanize_tokens(tokens)
            } else {
                Vec::new()
            };
            let answer = tags
                .iter()
                .enumerate()
                .map(|(i, tag)| {
                    let tag = templates.verbalize(tag.as_str());
                    match mode {
                        PromptMode::Orig => format!("{}: {tag}", tokens[i]),
                        PromptMode::Latn => format!("{}: {tag}", latn[i]),
                        PromptMode::Combined => format!("{} ({}): {tag}", tokens[i], latn[i]),
                    }
                })
                .collect::<Vec<_>>()
                .join("\n");
            Slots {
                orig: tokens.join(" "),
                latn: latn.join(" "),
                answer,
            }
        }
        Payload::Cls { text, label } => Slots {
            orig: text.clone(),
            latn: if mode.uses_latn() {
                config.romanize_text(text)
            } else {
                String::new()
            },
            answer: templates.verbalize(label.as_str()).to_string(),
        },
    }
}

pub fn build_prompt(
    templates: &TemplateSet,
    mode: PromptMode,
    demos: &[&Example],
    query: &Example,
    config: &RomanizerConfig,
) -> Result<RenderedPrompt, PromptError> {
    for ex in demos.iter().copied().chain(std::iter::once(query)) {
        if ex.task_kind() != templates.task_kind {
            return Err(PromptError::TaskMismatch {
                id: ex.id.clone(),
                expected: templates.task_kind,
                found: ex.task_kind(),
            });
        }
    }
    let labels = templates
        .verbalized_labels()
        .iter()
        .map(|(_, v)| *v)
        .collect::<Vec<_>>()
        .join(", ");
    let mut parts = vec![fill(&templates.instruction, &[("labels", &labels)])?];
    let block = templates.blocks(mode);
    for demo in demos {
        let s = example_slots(templates, mode, demo, config);
        parts.push(fill(
            &block.demo,
            &[
                ("text_orig", &s.orig),
                ("text_latn", &s.latn),
                ("answer", &s.answer),
            ],
        )?);
    }
    let s = example_slots(templates, mode, query, config);
    parts.push(fill(
        &block.query,
        &[("text_orig", &s.orig), ("text_latn", &s.latn)],
    )?);
    let query_token_count = match &query.payload {
        Payload::SeqLab { tokens, .. } => Some(tokens.len()),
        Payload::Cls { .. } => None,
    };
    Ok(RenderedPrompt {
        text: parts.join("\n\n"),
        query_token_count,
        mode,
    })
}
