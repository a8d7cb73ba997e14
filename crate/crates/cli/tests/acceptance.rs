//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any failed.

mod common;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use translit_icl::corpus::{ClassLabel, EmbeddingMap, EmbeddingVector, Example, TagLabel};
use translit_icl::metrics::macro_f1;
use translit_icl::romanizer::{load_tables, RomanizerConfig};
use translit_icl::run::{plan, Overrides, RunConfig, RunInputs, METRICS_FILE, RECORDS_FILE};
use translit_icl::selector::{select, Seed, SelectionPolicy};
use translit_icl::{MetricReport, PromptMode};

type Outcome = Result<String, String>;

/// `(source, target, context)` columns of one table row.
type TableRow = (String, String, String);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: f64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit, || {
        format!("took {:.2}s, limit {limit}s", elapsed.as_secs_f64())
    })
}

// 1. Aggregation reproduction

fn aggregation() -> Outcome {
    let started = Instant::now();
    let published = common::fixtures().join("published");
    let expected = fs::read_to_string(published.join("averages.tsv")).map_err(|e| e.to_string())?;
    let mut cells = 0;
    for line in expected.lines().filter(|l| !l.starts_with('#')) {
        let f: Vec<&str> = line.split('\t').collect();
        let (model, task, mode, want) = (f[0], f[1], f[2], f[3].parse::<f64>().unwrap());
        if task != "ner" {
            continue;
        }
        let file = published.join(model).join("ner.jsonl");
        let out = common::cli(&["report", file.to_str().unwrap(), "--format", "tsv"]);
        check(out.status.success(), || {
            String::from_utf8_lossy(&out.stderr).into_owned()
        })?;
        let stdout = String::from_utf8(out.stdout).unwrap();
        let got = stdout
            .lines()
            .map(|l| l.split('\t').collect::<Vec<_>>())
            .find(|r| r[0] == "all" && r[1] == mode)
            .ok_or_else(|| format!("no row for {model} {mode}"))?;
        let mean: f64 = got[2].parse().unwrap();
        check((mean - want).abs() <= 0.1, || {
            format!("{model} NER {mode}: {mean:.2} vs published {want}")
        })?;
        cells += 1;
    }
    check(cells == 18, || format!("only {cells} NER cells checked"))?;
    within(started.elapsed(), 1.0)?;
    Ok(format!(
        "{cells} NER cells within 0.1 in {:.2}s",
        started.elapsed().as_secs_f64()
    ))
}

// 2. Romanizer invariants

struct Oracle {
    script: String,
    alphabet: Vec<char>,
    noise: Vec<char>,
    map: HashMap<char, String>,
}

/// Per table, the characters whose romanization is a plain lookup: one
/// unconditional single-codepoint rule, not the start of a longer source
/// anywhere and not mapped by any other table.
fn oracles(dir: &Path) -> Vec<Oracle> {
    let mut rows: Vec<(String, Vec<TableRow>)> = Vec::new();
    let mut names: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "tsv"))
        .collect();
    names.sort();
    for path in names {
        let text = fs::read_to_string(&path).unwrap();
        let rules = text
            .lines()
            .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
            .map(|l| {
                let c: Vec<&str> = l.split('\t').collect();
                (
                    c[0].to_string(),
                    c[1].to_string(),
                    c.get(2).unwrap_or(&"any").to_string(),
                )
            })
            .collect();
        rows.push((
            path.file_stem().unwrap().to_string_lossy().into_owned(),
            rules,
        ));
    }
    let mut excluded = HashSet::new();
    let mut owners: HashMap<char, usize> = HashMap::new();
    for (_, rules) in &rows {
        for (src, _, ctx) in rules {
            let first = src.chars().next().unwrap();
            if src.chars().count() > 1 || ctx != "any" {
                excluded.insert(first);
            }
            *owners.entry(first).or_default() += 1;
        }
    }
    rows.into_iter()
        .map(|(script, rules)| {
            let mut map = HashMap::new();
            let mut noise = Vec::new();
            for (src, tgt, _) in &rules {
                let c = src.chars().next().unwrap();
                noise.push(c);
                if src.chars().count() == 1 && !excluded.contains(&c) && owners[&c] == 1 {
                    map.insert(c, tgt.clone());
                }
            }
            let mut alphabet: Vec<char> = map.keys().copied().collect();
            alphabet.sort();
            Oracle {
                script,
                alphabet,
                noise,
                map,
            }
        })
        .collect()
}

const STRINGS_PER_TABLE: usize = 10_000;

fn romanizer_invariants() -> Outcome {
    let started = Instant::now();
    let config: RomanizerConfig = load_tables(&common::tables()).map_err(|e| e.to_string())?;
    let oracles = oracles(&common::tables());
    check(oracles.len() == 12, || format!("{} tables", oracles.len()))?;
    let ascii: Vec<char> = "abcXYZ019 ,.-'".chars().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut total = 0;
    for o in &oracles {
        check(!o.alphabet.is_empty(), || {
            format!("{}: empty oracle alphabet", o.script)
        })?;
        for _ in 0..STRINGS_PER_TABLE {
            let len = rng.random_range(1..=16);
            let pure: String = (0..len)
                .map(|_| {
                    if rng.random_bool(0.8) {
                        o.alphabet[rng.random_range(0..o.alphabet.len())]
                    } else {
                        ascii[rng.random_range(0..ascii.len())]
                    }
                })
                .collect();
            let noisy: String = (0..len)
                .map(|_| match rng.random_range(0..4) {
                    0 => char::from_u32(rng.random_range(0x80..0x3_0000)).unwrap_or('?'),
                    1 => ascii[rng.random_range(0..ascii.len())],
                    _ => o.noise[rng.random_range(0..o.noise.len())],
                })
                .collect();

            let want: String = pure
                .chars()
                .map(|c| o.map.get(&c).cloned().unwrap_or_else(|| c.to_string()))
                .collect();
            let got = config.romanize_text(&pure);
            check(got == want, || {
                format!("{}: {pure:?} -> {got:?}, oracle {want:?}", o.script)
            })?;

            for s in [&pure, &noisy] {
                let once = config.romanize_text(s);
                check(once.is_ascii(), || {
                    format!("{}: {s:?} -> non-ASCII {once:?}", o.script)
                })?;
                let twice = config.romanize_text(&once);
                check(twice == once, || {
                    format!("{}: not idempotent on {once:?}", o.script)
                })?;
                let tokens: Vec<&str> = s.split_whitespace().collect();
                let out = config.romanize_tokens(&tokens);
                check(out.len() == tokens.len(), || {
                    format!("{}: token count on {s:?}", o.script)
                })?;
            }
            total += 1;
        }
    }
    within(started.elapsed(), 30.0)?;
    Ok(format!(
        "{total} oracle strings ({STRINGS_PER_TABLE} per table) plus as many noisy ones, 0 violations in {:.2}s",
        started.elapsed().as_secs_f64()
    ))
}

// 3. Retrieval oracle

fn retrieval_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let policy = SelectionPolicy::Retrieve { k: 3, pool: 10 };
    for corpus in 0..100 {
        let n = rng.random_range(4..=50);
        let dim = rng.random_range(1..=16);
        let vectors: Vec<Vec<f64>> = (0..=n)
            .map(|_| loop {
                let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                if v.iter().any(|x: &f64| x.abs() > 1e-3) {
                    break v;
                }
            })
            .collect();
        let mut examples = Vec::new();
        let mut map: EmbeddingMap = BTreeMap::new();
        for (i, v) in vectors.iter().enumerate() {
            let id = format!("e{i:02}");
            examples.push(Example::cls(&id, format!("t{i}"), ClassLabel::new("x")));
            map.insert(
                id.clone(),
                EmbeddingVector {
                    example_id: id,
                    values: v.clone(),
                },
            );
        }
        let (query, candidates) = examples.split_first().unwrap();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut exact: Vec<(f64, &str)> = candidates
            .iter()
            .map(|c| {
                let v = &map[&c.id].values;
                let dot: f64 = v.iter().zip(&vectors[0]).map(|(a, b)| a * b).sum();
                (dot / (norm(v) * norm(&vectors[0])), c.id.as_str())
            })
            .collect();
        exact.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
        let top: HashSet<&str> = exact.iter().take(10).map(|(_, id)| *id).collect();

        let seed = Seed(rng.random());
        let ids = |picked: Vec<&Example>| -> String {
            picked
                .iter()
                .map(|e| e.id.as_str())
                .collect::<Vec<_>>()
                .join(",")
        };
        let a =
            select(&policy, &query.id, candidates, Some(&map), seed).map_err(|e| e.to_string())?;
        let b =
            select(&policy, &query.id, candidates, Some(&map), seed).map_err(|e| e.to_string())?;
        for p in &a {
            check(top.contains(p.id.as_str()), || {
                format!("corpus {corpus}: {} outside top-10", p.id)
            })?;
        }
        let (a, b) = (ids(a), ids(b));
        check(a == b, || format!("corpus {corpus}: {a} then {b}"))?;
    }
    within(started.elapsed(), 10.0)?;
    Ok(format!(
        "100 corpora, all picks in exact top-10, stable in {:.2}s",
        started.elapsed().as_secs_f64()
    ))
}

// 4. Metric oracle

fn confusion_f1(gold: &[Vec<TagLabel>], pred: &[Vec<TagLabel>]) -> f64 {
    let mut m = [[0u64; 7]; 7];
    for (g, p) in gold.iter().zip(pred) {
        for (a, b) in g.iter().zip(p) {
            m[a.index()][b.index()] += 1;
        }
    }
    let mut f = Vec::new();
    for (c, counts) in m.iter().enumerate() {
        let row: u64 = counts.iter().sum();
        let col: u64 = (0..7).map(|r| m[r][c]).sum();
        if row + col == 0 {
            continue;
        }
        let tp = counts[c] as f64;
        let p = if col == 0 { 0.0 } else { tp / col as f64 };
        let r = if row == 0 { 0.0 } else { tp / row as f64 };
        f.push(if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        });
    }
    if f.is_empty() {
        0.0
    } else {
        f.iter().sum::<f64>() / f.len() as f64
    }
}

fn metric_oracle() -> Outcome {
    use TagLabel::*;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tag = |rng: &mut ChaCha8Rng| TagLabel::ALL[rng.random_range(0..7)];
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let lens: Vec<usize> = (0..rng.random_range(1..=6))
            .map(|_| rng.random_range(1..=8))
            .collect();
        let gold: Vec<Vec<TagLabel>> = lens
            .iter()
            .map(|&n| (0..n).map(|_| tag(&mut rng)).collect())
            .collect();
        let pred: Vec<Vec<TagLabel>> = lens
            .iter()
            .map(|&n| (0..n).map(|_| tag(&mut rng)).collect())
            .collect();
        let got = macro_f1(&gold, &pred).map_err(|e| e.to_string())?;
        let diff = (got - confusion_f1(&gold, &pred)).abs();
        worst = worst.max(diff);
        check(diff <= 1e-12, || format!("instance {i}: off by {diff:e}"))?;
    }
    let hand = macro_f1(&[vec![BPer, O, O]], &[vec![BPer, BPer, O]]).map_err(|e| e.to_string())?;
    check((hand - 0.6667).abs() <= 1e-4, || {
        format!("hand case gave {hand}")
    })?;
    within(started.elapsed(), 10.0)?;
    Ok(format!(
        "1000 instances, max deviation {worst:e}; hand case {hand:.4}; {:.2}s",
        started.elapsed().as_secs_f64()
    ))
}

// 5. End-to-end replay determinism

fn e2e_replay() -> Outcome {
    let cassette = common::e2e().join("cassette.jsonl");
    let echo = common::gold_echo_cassette();
    if common::update_golden() {
        fs::write(&cassette, &echo).unwrap();
    }
    check(
        fs::read_to_string(&cassette).ok().as_deref() == Some(echo.as_str()),
        || "cassette.jsonl is not the gold-echo cassette (rerun with UPDATE_GOLDEN=1)".into(),
    )?;

    let started = Instant::now();
    let scratch = tempfile::tempdir().unwrap();
    let expected = common::e2e().join("expected");
    let mut runs = 0;
    let mut languages = HashSet::new();
    for (stem, config) in common::configs() {
        for mode in PromptMode::ALL {
            let name = format!("{stem}.{mode}");
            let mut outputs = Vec::new();
            for pass in 0..2 {
                let out_dir = scratch.path().join(format!("{name}.{pass}"));
                let out = common::cli(&[
                    "run",
                    "--config",
                    config.to_str().unwrap(),
                    "--mode",
                    mode.as_str(),
                    "--out",
                    out_dir.to_str().unwrap(),
                ]);
                check(out.status.success(), || {
                    format!("{name}: {}", String::from_utf8_lossy(&out.stderr))
                })?;
                let read = |f| fs::read(out_dir.join(f)).unwrap();
                outputs.push((read(RECORDS_FILE), read(METRICS_FILE)));
            }
            check(outputs[0] == outputs[1], || {
                format!("{name}: outputs differ between invocations")
            })?;
            let golden = expected.join(&name);
            if common::update_golden() {
                fs::create_dir_all(&golden).unwrap();
                fs::write(golden.join(RECORDS_FILE), &outputs[0].0).unwrap();
                fs::write(golden.join(METRICS_FILE), &outputs[0].1).unwrap();
            }
            let want = (
                fs::read(golden.join(RECORDS_FILE)).unwrap_or_default(),
                fs::read(golden.join(METRICS_FILE)).unwrap_or_default(),
            );
            check(outputs[0] == want, || {
                format!("{name}: differs from checked-in output")
            })?;

            let report: MetricReport = serde_json::from_slice(&outputs[0].1).unwrap();
            check(report.score == 100.0, || {
                format!("{name}: score {}", report.score)
            })?;
            check(report.n_examples == 4, || {
                format!("{name}: {} examples", report.n_examples)
            })?;
            if let Some(per_class) = &report.per_class {
                check(per_class.values().all(|c| c.f1 == 1.0), || {
                    format!("{name}: per-tag F1 below 1")
                })?;
            }
            languages.insert(report.language.to_string());
            runs += 1;
        }
    }
    check(languages.len() == 3, || {
        format!("{} languages", languages.len())
    })?;
    within(started.elapsed(), 5.0)?;
    Ok(format!(
        "{runs} runs x 2 invocations byte-identical and equal to checked-in output, all 100.0; {:.2}s",
        started.elapsed().as_secs_f64()
    ))
}

// 6. Prompt goldens

fn prompt_goldens() -> Outcome {
    let dir = common::fixtures().join("prompts");
    let mut files = 0;
    for (task, stem) in [("seqlab", "rus_Cyrl.ner"), ("cls", "rus_Cyrl.topic")] {
        let config = common::e2e().join("configs").join(format!("{stem}.toml"));
        for mode in PromptMode::ALL {
            let out = common::cli(&[
                "prompts",
                "--config",
                config.to_str().unwrap(),
                "--mode",
                mode.as_str(),
            ]);
            check(out.status.success(), || {
                String::from_utf8_lossy(&out.stderr).into_owned()
            })?;
            let golden = dir.join(format!("{task}.{mode}.txt"));
            if common::update_golden() {
                fs::create_dir_all(&dir).unwrap();
                fs::write(&golden, &out.stdout).unwrap();
            }
            let want = fs::read(&golden).unwrap_or_default();
            check(out.stdout == want, || {
                format!("{} differs", golden.display())
            })?;
            files += 1;
        }
    }

    let mut prompts = 0;
    for (stem, path) in common::configs() {
        let mut rendered = Vec::new();
        for mode in PromptMode::ALL {
            let overrides = Overrides {
                mode: Some(mode),
                ..Overrides::default()
            };
            let config = RunConfig::load(&path, &overrides).map_err(|e| e.to_string())?;
            let inputs = RunInputs::load(&config).map_err(|e| e.to_string())?;
            let texts: Vec<String> = plan(&config, &inputs)
                .map_err(|e| e.to_string())?
                .into_iter()
                .map(|p| p.prompt.text)
                .collect();
            rendered.push(texts);
        }
        let triples = rendered[0].iter().zip(&rendered[1]).zip(&rendered[2]);
        for (i, ((orig, latn), combined)) in triples.enumerate() {
            let len = |s: &String| s.chars().count();
            check(latn.is_ascii(), || {
                format!("{stem} #{i}: non-ASCII Latn prompt")
            })?;
            check(len(combined) >= len(orig).max(len(latn)), || {
                format!("{stem} #{i}: Combined shorter")
            })?;
            prompts += 1;
        }
    }
    Ok(format!(
        "{files} golden files match; {prompts} prompt triples ASCII in Latn, Combined longest"
    ))
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 6] = [
        ("aggregation reproduction", aggregation),
        ("romanizer invariants", romanizer_invariants),
        ("retrieval oracle", retrieval_oracle),
        ("metric oracle", metric_oracle),
        ("end-to-end replay", e2e_replay),
        ("prompt goldens", prompt_goldens),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
