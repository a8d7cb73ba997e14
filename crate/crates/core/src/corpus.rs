//! Dataset and embedding loaders.
//!
//! On-disk formats (all UTF-8):
//!
//! * sequence labeling: one `token<TAB>tag` per line, a blank line between
//!   sentences. An optional `# id = <id>` line before a sentence names it;
//!   otherwise the id is `<file-stem>:<sentence index>`.
//! * classification: `id<TAB>label<TAB>text` per line. An empty id becomes
//!   `<file-stem>:<row index>`.
//! * embeddings: `id<TAB>v1,v2,...,vd` per line.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::romanizer::ScriptTag;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: record {record}: {reason}")]
    Invalid {
        file: String,
        record: usize,
        reason: String,
    },
    #[error("invalid language tag {0:?}: expected lll_Ssss, e.g. ben_Beng")]
    LanguageTag(String),
}

/// `lll_Ssss`: ISO 639-3 language plus ISO 15924 script.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LanguageTag {
    language: [u8; 3],
    script: ScriptTag,
}

impl LanguageTag {
    pub fn language(&self) -> &str {
        std::str::from_utf8(&self.language).expect("ASCII")
    }

    pub fn script(&self) -> ScriptTag {
        self.script
    }
}

impl FromStr for LanguageTag {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || CorpusError::LanguageTag(s.to_string());
        let (lang, script) = s.split_once('_').ok_or_else(err)?;
        let lb = lang.as_bytes();
        if lb.len() != 3 || !lb.iter().all(u8::is_ascii_lowercase) {
            return Err(err());
        }
        let script = script.parse().map_err(|_| err())?;
        Ok(LanguageTag {
            language: [lb[0], lb[1], lb[2]],
            script,
        })
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.language(), self.script)
    }
}

impl fmt::Debug for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LanguageTag({self})")
    }
}

impl Serialize for LanguageTag {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LanguageTag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The seven BIO tags for PER/ORG/LOC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TagLabel {
    #[serde(rename = "O")]
    O,
    #[serde(rename = "B-PER")]
    BPer,
    #[serde(rename = "I-PER")]
    IPer,
    #[serde(rename = "B-ORG")]
    BOrg,
    #[serde(rename = "I-ORG")]
    IOrg,
    #[serde(rename = "B-LOC")]
    BLoc,
    #[serde(rename = "I-LOC")]
    ILoc,
}

impl TagLabel {
    pub const ALL: [TagLabel; 7] = [
        TagLabel::O,
        TagLabel::BPer,
        TagLabel::IPer,
        TagLabel::BOrg,
        TagLabel::IOrg,
        TagLabel::BLoc,
        TagLabel::ILoc,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TagLabel::O => "O",
            TagLabel::BPer => "B-PER",
            TagLabel::IPer => "I-PER",
            TagLabel::BOrg => "B-ORG",
            TagLabel::IOrg => "I-ORG",
            TagLabel::BLoc => "B-LOC",
            TagLabel::ILoc => "I-LOC",
        }
    }

    pub fn index(&self) -> usize {
        *self as usize
    }
}

impl FromStr for TagLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TagLabel::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown tag {s:?}"))
    }
}

impl fmt::Display for TagLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A class name from a task's closed label set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassLabel(pub String);

impl ClassLabel {
    pub fn new(s: impl Into<String>) -> Self {
        ClassLabel(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl AsRef<str> for ClassLabel {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    #[serde(rename = "seqlab")]
    SeqLab,
    Cls,
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seqlab" => Ok(TaskKind::SeqLab),
            "cls" => Ok(TaskKind::Cls),
            other => Err(format!(
                "unknown task kind {other:?} (expected seqlab or cls)"
            )),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::SeqLab => "seqlab",
            TaskKind::Cls => "cls",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    SeqLab {
        tokens: Vec<String>,
        tags: Vec<TagLabel>,
    },
    Cls {
        text: String,
        label: ClassLabel,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub id: String,
    pub payload: Payload,
}

impl Example {
    pub fn seqlab(id: impl Into<String>, tokens: Vec<String>, tags: Vec<TagLabel>) -> Self {
        debug_assert_eq!(tokens.len(), tags.len());
        Example {
            id: id.into(),
            payload: Payload::SeqLab { tokens, tags },
        }
    }

    pub fn cls(id: impl Into<String>, text: impl Into<String>, label: ClassLabel) -> Self {
        Example {
            id: id.into(),
            payload: Payload::Cls {
                text: text.into(),
                label,
            },
        }
    }

    pub fn task_kind(&self) -> TaskKind {
        match self.payload {
            Payload::SeqLab { .. } => TaskKind::SeqLab,
            Payload::Cls { .. } => TaskKind::Cls,
        }
    }

    /// Gold labels as strings: every tag for sequence labeling, the class otherwise.
    pub fn label_strings(&self) -> Vec<&str> {
        match &self.payload {
            Payload::SeqLab { tags, .. } => tags.iter().map(TagLabel::as_str).collect(),
            Payload::Cls { label, .. } => vec![label.as_str()],
        }
    }

    /// The text an embedding or a human would read: tokens joined by spaces,
    /// or the classification text.
    pub fn surface_text(&self) -> String {
        match &self.payload {
            Payload::SeqLab { tokens, .. } => tokens.join(" "),
            Payload::Cls { text, .. } => text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub example_id: String,
    pub values: Vec<f64>,
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn file_name(path: &Path) -> String {
    path.display().to_string()
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses sequence-labeling text; `file` is used for error messages and default ids.
pub fn parse_seqlab(contents: &str, file: &str, stem: &str) -> Result<Vec<Example>, CorpusError> {
    let invalid = |record: usize, reason: String| CorpusError::Invalid {
        file: file.to_string(),
        record,
        reason,
    };
    let mut out: Vec<Example> = Vec::new();
    let mut ids = HashSet::new();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let mut pending_id: Option<String> = None;

    let mut flush = |tokens: &mut Vec<String>,
                     tags: &mut Vec<TagLabel>,
                     pending_id: &mut Option<String>,
                     out: &mut Vec<Example>|
     -> Result<(), CorpusError> {
        if tokens.is_empty() {
            if pending_id.is_some() {
                return Err(invalid(out.len(), "id line without a sentence".into()));
            }
            return Ok(());
        }
        let index = out.len();
        let id = pending_id
            .take()
            .unwrap_or_else(|| format!("{stem}:{index}"));
        if !ids.insert(id.clone()) {
            return Err(invalid(index, format!("duplicate id {id:?}")));
        }
        out.push(Example::seqlab(
            id,
            std::mem::take(tokens),
            std::mem::take(tags),
        ));
        Ok(())
    };

    for raw in contents.lines() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            flush(&mut tokens, &mut tags, &mut pending_id, &mut out)?;
            continue;
        }
        if tokens.is_empty() && !line.contains('\t') {
            if let Some(id) = line.strip_prefix("# id = ") {
                pending_id = Some(id.trim().to_string());
                continue;
            }
        }
        let sentence = out.len();
        let Some((token, tag)) = line.split_once('\t') else {
            return Err(invalid(
                sentence,
                format!("token {line:?} has no tag (tokens and tags differ in length)"),
            ));
        };
        if token.is_empty() {
            return Err(invalid(sentence, "empty token".into()));
        }
        let tag: TagLabel = tag.trim().parse().map_err(|e| invalid(sentence, e))?;
        tokens.push(token.to_string());
        tags.push(tag);
    }
    flush(&mut tokens, &mut tags, &mut pending_id, &mut out)?;
    Ok(out)
}

pub fn load_seqlab(path: &Path) -> Result<Vec<Example>, CorpusError> {
    parse_seqlab(&read(path)?, &file_name(path), &file_stem(path))
}

/// Writes examples back in the sequence-labeling format, ids included.
pub fn write_seqlab(examples: &[Example]) -> String {
    let mut out = String::new();
    for ex in examples {
        if let Payload::SeqLab { tokens, tags } = &ex.payload {
            out.push_str(&format!("# id = {}\n", ex.id));
            for (tok, tag) in tokens.iter().zip(tags) {
                out.push_str(&format!("{tok}\t{tag}\n"));
            }
            out.push('\n');
        }
    }
    out
}

pub fn parse_cls(
    contents: &str,
    file: &str,
    stem: &str,
    label_set: &[ClassLabel],
) -> Result<Vec<Example>, CorpusError> {
    let invalid = |record: usize, reason: String| CorpusError::Invalid {
        file: file.to_string(),
        record,
        reason,
    };
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for raw in contents.lines() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let record = out.len();
        let mut parts = line.splitn(3, '\t');
        let (Some(id), Some(label), Some(text)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(invalid(record, "expected id<TAB>label<TAB>text".into()));
        };
        if text.trim().is_empty() {
            return Err(invalid(record, "empty text".into()));
        }
        let label = ClassLabel::new(label);
        if !label_set.contains(&label) {
            return Err(invalid(record, format!("label {label} not in label set")));
        }
        let id = if id.is_empty() {
            format!("{stem}:{record}")
        } else {
            id.to_string()
        };
        if !ids.insert(id.clone()) {
            return Err(invalid(record, format!("duplicate id {id:?}")));
        }
        out.push(Example::cls(id, text, label));
    }
    Ok(out)
}

pub fn load_cls(path: &Path, label_set: &[ClassLabel]) -> Result<Vec<Example>, CorpusError> {
    parse_cls(&read(path)?, &file_name(path), &file_stem(path), label_set)
}

pub fn write_cls(examples: &[Example]) -> String {
    let mut out = String::new();
    for ex in examples {
        if let Payload::Cls { text, label } = &ex.payload {
            out.push_str(&format!("{}\t{}\t{}\n", ex.id, label, text));
        }
    }
    out
}

pub type EmbeddingMap = BTreeMap<String, EmbeddingVector>;

pub fn parse_embeddings(contents: &str, file: &str) -> Result<EmbeddingMap, CorpusError> {
    let invalid = |record: usize, reason: String| CorpusError::Invalid {
        file: file.to_string(),
        record,
        reason,
    };
    let mut out = EmbeddingMap::new();
    let mut dim = None;
    for raw in contents.lines() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let record = out.len();
        let (id, vector) = line
            .split_once('\t')
            .ok_or_else(|| invalid(record, "expected id<TAB>v1,v2,...".into()))?;
        let values = vector
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| invalid(record, format!("bad component: {e}")))?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid(record, "non-finite component".into()));
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(invalid(record, format!("vector for {id:?} is all zeros")));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(invalid(
                    record,
                    format!("dimension {} differs from {d}", values.len()),
                ))
            }
            _ => {}
        }
        if out.contains_key(id) {
            return Err(invalid(record, format!("duplicate id {id:?}")));
        }
        out.insert(
            id.to_string(),
            EmbeddingVector {
                example_id: id.to_string(),
                values,
            },
        );
    }
    Ok(out)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingMap, CorpusError> {
    parse_embeddings(&read(path)?, &file_name(path))
}
