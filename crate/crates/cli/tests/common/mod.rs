#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use translit_icl::corpus::Payload;
use translit_icl::llm::cassette_line;
use translit_icl::run::{plan, Overrides, RunConfig, RunInputs};
use translit_icl::PromptMode;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn e2e() -> PathBuf {
    fixtures().join("e2e")
}

pub fn tables() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../tables")
}

pub fn update_golden() -> bool {
    std::env::var_os("UPDATE_GOLDEN").is_some()
}

/// Config files of the end-to-end fixture, as `(stem, path)`.
pub fn configs() -> Vec<(String, PathBuf)> {
    let mut out: Vec<_> = fs::read_dir(e2e().join("configs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .map(|p| (p.file_stem().unwrap().to_string_lossy().into_owned(), p))
        .collect();
    out.sort();
    out
}

pub fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_translit-icl"))
        .args(args)
        .output()
        .unwrap()
}

pub fn cli_in(dir: &Path, args: &[&str], stdin: Option<&str>) -> Output {
    use std::io::Write;
    use std::process::Stdio;
    let mut child = Command::new(env!("CARGO_BIN_EXE_translit-icl"))
        .args(args)
        .current_dir(dir)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut input = child.stdin.take().unwrap();
    input.write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    drop(input);
    child.wait_with_output().unwrap()
}

/// The completion a perfect model would give: the gold answer in the
/// answer format of `mode`.
pub fn gold_answer(inputs: &RunInputs, mode: PromptMode, payload: &Payload) -> String {
    match payload {
        Payload::SeqLab { tokens, tags } => {
            let latn = inputs.romanizer.romanize_tokens(tokens);
            tokens
                .iter()
                .zip(&latn)
                .zip(tags)
                .map(|((t, l), tag)| match mode {
                    PromptMode::Orig => format!("{t}: {tag}"),
                    PromptMode::Latn => format!("{l}: {tag}"),
                    PromptMode::Combined => format!("{t} ({l}): {tag}"),
                })
                .collect::<Vec<_>>()
                .join("\n")
        }
        Payload::Cls { label, .. } => format!(" {}", label.as_str()),
    }
}

/// Cassette answering every fixture request with its gold answer.
pub fn gold_echo_cassette() -> String {
    let mut lines = BTreeSet::new();
    for (_, path) in configs() {
        for mode in PromptMode::ALL {
            let overrides = Overrides {
                mode: Some(mode),
                ..Overrides::default()
            };
            let config = RunConfig::load(&path, &overrides).unwrap();
            let inputs = RunInputs::load(&config).unwrap();
            for q in plan(&config, &inputs).unwrap() {
                let answer = gold_answer(&inputs, mode, &q.query.payload);
                lines.insert(cassette_line(&q.request, &answer));
            }
        }
    }
    lines.into_iter().map(|l| l + "\n").collect()
}
