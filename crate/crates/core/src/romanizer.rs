//! Table-driven romanization of non-Latin text.
//!
//! Each script has a [`MappingTable`] of `source -> target` rules loaded from
//! `<ScriptTag>.tsv`. Romanization scans left to right; at every non-ASCII
//! position the longest applicable rule wins, with context-restricted rules
//! (`initial`, `final`) tried before unrestricted ones of the same length.
//! ASCII characters are copied through untouched. Characters no rule covers
//! are handled by the configured [`FallbackPolicy`].
//!
//! A *word character* is any alphanumeric character or combining mark.
//! A match is word-initial when the character before it is not a word
//! character (or there is none) and word-final when the character after it
//! is not a word character (or there is none).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;
use unicode_script::{Script, UnicodeScript};

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("no tables found in {0}")]
    NoTables(PathBuf),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {reason}")]
    Malformed {
        file: String,
        line: usize,
        reason: String,
    },
    #[error("{file}:{line}: duplicate rule for {source_text:?} (context {context})")]
    Duplicate {
        file: String,
        line: usize,
        source_text: String,
        context: Context,
    },
    #[error("invalid script tag {0:?}: expected four ASCII letters like \"Cyrl\"")]
    InvalidScriptTag(String),
}

/// ISO 15924 script code, e.g. `Cyrl`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ScriptTag([u8; 4]);

impl ScriptTag {
    pub const LATIN: ScriptTag = ScriptTag(*b"Latn");
    pub const COMMON: ScriptTag = ScriptTag(*b"Zyyy");

    pub fn as_str(&self) -> &str {
        // constructed only from validated ASCII
        std::str::from_utf8(&self.0).expect("script tag is ASCII")
    }
}

impl FromStr for ScriptTag {
    type Err = TableError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let b = s.as_bytes();
        let valid = b.len() == 4
            && b[0].is_ascii_uppercase()
            && b[1..].iter().all(|c| c.is_ascii_lowercase());
        if !valid {
            return Err(TableError::InvalidScriptTag(s.to_string()));
        }
        Ok(ScriptTag([b[0], b[1], b[2], b[3]]))
    }
}

impl fmt::Display for ScriptTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for ScriptTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScriptTag({})", self.as_str())
    }
}

impl Serialize for ScriptTag {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ScriptTag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Positional constraint on a rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Context {
    Initial,
    Final,
    Any,
}

impl FromStr for Context {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "initial" => Ok(Context::Initial),
            "final" => Ok(Context::Final),
            "any" => Ok(Context::Any),
            other => Err(format!(
                "unknown context {other:?} (expected initial, final or any)"
            )),
        }
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Context::Initial => "initial",
            Context::Final => "final",
            Context::Any => "any",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub source: String,
    pub target: String,
    pub context: Context,
}

fn valid_target_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '\'' | ' ' | '-')
}

/// Rules for one script, longest source first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingTable {
    script: ScriptTag,
    rules: Vec<Rule>,
}

impl MappingTable {
    /// Parses the contents of a table file. `file` is only used in error messages.
    pub fn parse(script: ScriptTag, contents: &str, file: &str) -> Result<Self, TableError> {
        let malformed = |line: usize, reason: String| TableError::Malformed {
            file: file.to_string(),
            line,
            reason,
        };
        let mut rules = Vec::new();
        let mut seen = HashSet::new();
        for (idx, raw) in contents.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let (source, target, context) = match fields.as_slice() {
                [s, t] => (*s, *t, Context::Any),
                [s, t, c] => (*s, *t, c.parse().map_err(|e| malformed(line_no, e))?),
                [_] => return Err(malformed(line_no, "missing target column".into())),
                _ => return Err(malformed(line_no, "too many columns".into())),
            };
            if source.is_empty() {
                return Err(malformed(line_no, "empty source".into()));
            }
            if source.chars().any(|c| c.is_ascii()) {
                return Err(malformed(
                    line_no,
                    format!("source {source:?} contains ASCII characters"),
                ));
            }
            if let Some(bad) = target.chars().find(|&c| !valid_target_char(c)) {
                return Err(malformed(
                    line_no,
                    format!("target {target:?} contains {bad:?}; only [A-Za-z0-9' -] allowed"),
                ));
            }
            if !seen.insert((source.to_string(), context)) {
                return Err(TableError::Duplicate {
                    file: file.to_string(),
                    line: line_no,
                    source_text: source.to_string(),
                    context,
                });
            }
            rules.push(Rule {
                source: source.to_string(),
                target: target.to_string(),
                context,
            });
        }
        sort_rules(&mut rules);
        Ok(MappingTable { script, rules })
    }

    pub fn script(&self) -> ScriptTag {
        self.script
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }
}

// Longer sources first; among equal sources, restricted contexts first.
fn sort_rules(rules: &mut [Rule]) {
    rules.sort_by(|a, b| {
        b.source
            .chars()
            .count()
            .cmp(&a.source.chars().count())
            .then(a.context.cmp(&b.context))
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FallbackPolicy {
    /// Compatibility-decompose, keep the ASCII pieces, drop everything else.
    #[default]
    DecomposeStrip,
    Passthrough,
    Drop,
}

impl FromStr for FallbackPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "decompose-strip" => Ok(Self::DecomposeStrip),
            "passthrough" => Ok(Self::Passthrough),
            "drop" => Ok(Self::Drop),
            other => Err(format!("unknown fallback policy {other:?}")),
        }
    }
}

impl fmt::Display for FallbackPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::DecomposeStrip => "decompose-strip",
            Self::Passthrough => "passthrough",
            Self::Drop => "drop",
        })
    }
}

/// Loaded tables plus the lookup index built from them. Immutable once built.
#[derive(Debug, Clone)]
pub struct RomanizerConfig {
    tables: BTreeMap<ScriptTag, MappingTable>,
    fallback: FallbackPolicy,
    lowercase_output: bool,
    index: HashMap<char, Vec<Rule>>,
}

impl RomanizerConfig {
    pub fn new(
        tables: impl IntoIterator<Item = MappingTable>,
        fallback: FallbackPolicy,
        lowercase_output: bool,
    ) -> Result<Self, TableError> {
        let tables: BTreeMap<_, _> = tables.into_iter().map(|t| (t.script, t)).collect();
        if tables.is_empty() {
            return Err(TableError::NoTables(PathBuf::new()));
        }
        let mut index: HashMap<char, Vec<Rule>> = HashMap::new();
        for table in tables.values() {
            for rule in &table.rules {
                let first = rule.source.chars().next().expect("non-empty source");
                index.entry(first).or_default().push(rule.clone());
            }
        }
        // stable: ties keep script order, so the alphabetically first table wins
        for bucket in index.values_mut() {
            sort_rules(bucket);
        }
        Ok(RomanizerConfig {
            tables,
            fallback,
            lowercase_output,
            index,
        })
    }

    pub fn with_fallback(mut self, fallback: FallbackPolicy) -> Self {
        self.fallback = fallback;
        self
    }

    pub fn with_lowercase(mut self, lowercase: bool) -> Self {
        self.lowercase_output = lowercase;
        self
    }

    pub fn tables(&self) -> impl Iterator<Item = &MappingTable> {
        self.tables.values()
    }

    pub fn table(&self, script: ScriptTag) -> Option<&MappingTable> {
        self.tables.get(&script)
    }

    pub fn fallback(&self) -> FallbackPolicy {
        self.fallback
    }

    fn find_rule(&self, rest: &str, prev: Option<char>) -> Option<&Rule> {
        let first = rest.chars().next()?;
        let bucket = self.index.get(&first)?;
        let at_start = !prev.is_some_and(is_word_char);
        bucket.iter().find(|rule| {
            if !rest.starts_with(rule.source.as_str()) {
                return false;
            }
            match rule.context {
                Context::Any => true,
                Context::Initial => at_start,
                Context::Final => !rest[rule.source.len()..]
                    .chars()
                    .next()
                    .is_some_and(is_word_char),
            }
        })
    }

    /// Romanizes a whole string. Total and deterministic.
    pub fn romanize_text(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        let mut pos = 0;
        let mut prev = None;
        while let Some(c) = text[pos..].chars().next() {
            if c.is_ascii() {
                out.push(c);
                pos += 1;
                prev = Some(c);
                continue;
            }
            if let Some(rule) = self.find_rule(&text[pos..], prev) {
                self.push_latin(&mut out, &rule.target);
                pos += rule.source.len();
                prev = rule.source.chars().last();
                continue;
            }
            match self.fallback {
                FallbackPolicy::DecomposeStrip => {
                    let kept: String = std::iter::once(c).nfkd().filter(char::is_ascii).collect();
                    self.push_latin(&mut out, &kept);
                }
                FallbackPolicy::Passthrough => out.push(c),
                FallbackPolicy::Drop => {}
            }
            pos += c.len_utf8();
            prev = Some(c);
        }
        out
    }

    /// Romanizes each token separately. The output has exactly one entry per
    /// input token; whitespace introduced by a mapping becomes `-`.
    pub fn romanize_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<String> {
        tokens
            .iter()
            .map(|t| {
                self.romanize_text(t.as_ref())
                    .chars()
                    .map(|c| if c.is_whitespace() { '-' } else { c })
                    .collect()
            })
            .collect()
    }

    fn push_latin(&self, out: &mut String, latin: &str) {
        if self.lowercase_output {
            out.extend(latin.chars().map(|c| c.to_ascii_lowercase()));
        } else {
            out.push_str(latin);
        }
    }
}

pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || is_combining_mark(c)
}

/// Loads every `<ScriptTag>.tsv` file in `dir`.
pub fn load_tables(dir: &Path) -> Result<RomanizerConfig, TableError> {
    let io_err = |source| TableError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "tsv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(TableError::NoTables(dir.to_path_buf()));
    }
    let mut tables = Vec::with_capacity(paths.len());
    for path in paths {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let script: ScriptTag = stem.parse()?;
        let contents = fs::read_to_string(&path).map_err(|source| TableError::Io {
            path: path.clone(),
            source,
        })?;
        tables.push(MappingTable::parse(script, &contents, &name)?);
    }
    RomanizerConfig::new(tables, FallbackPolicy::default(), false)
}

/// Majority script of the letters in `text`; `Zyyy` when there are none.
/// Ties go to the script seen first.
pub fn detect_script(text: &str) -> ScriptTag {
    let mut counts: Vec<(Script, usize)> = Vec::new();
    for c in text.chars().filter(|c| c.is_alphabetic()) {
        let script = c.script();
        if matches!(script, Script::Common | Script::Inherited | Script::Unknown) {
            continue;
        }
        match counts.iter_mut().find(|(s, _)| *s == script) {
            Some((_, n)) => *n += 1,
            None => counts.push((script, 1)),
        }
    }
    let mut best: Option<(Script, usize)> = None;
    for (script, n) in counts {
        if best.is_none_or(|(_, m)| n > m) {
            best = Some((script, n));
        }
    }
    best.and_then(|(s, _)| s.short_name().parse().ok())
        .unwrap_or(ScriptTag::COMMON)
}
