use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use translit_icl::llm::BackendSpec;
use translit_icl::prompt::PromptMode;
use translit_icl::report::{aggregate, render_report, GroupingKind, ReportFormat};
use translit_icl::romanizer::{load_tables, FallbackPolicy};
use translit_icl::run::{self, collect_reports, Overrides, RunConfig, RunError, RunInputs};

#[derive(Parser)]
#[command(
    name = "translit-icl",
    version,
    about = "Transliteration-augmented few-shot evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Romanize text line by line.
    Romanize {
        /// Input file; stdin when omitted.
        input: Option<PathBuf>,
        #[arg(long, default_value = "tables")]
        tables: PathBuf,
        #[arg(long, value_enum, default_value_t = RomanizeMode::Text)]
        mode: RomanizeMode,
        #[arg(long, default_value = "decompose-strip")]
        fallback: FallbackPolicy,
        #[arg(long)]
        lowercase: bool,
    },
    /// Render the prompts a run would send, without calling a backend.
    Prompts {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: RunArgs,
        /// Write one `<id>.txt` per query here instead of printing.
        #[arg(long = "prompts-dir")]
        prompts_dir: Option<PathBuf>,
    },
    /// Run an evaluation and write records.jsonl, metrics.json and config.snapshot.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: RunArgs,
    },
    /// Average per-language scores from run directories.
    Report {
        /// Run directories, directories of runs, metrics.json or .jsonl files.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = GroupingArg::All)]
        grouping: GroupingArg,
        #[arg(long, default_value = "tsv")]
        format: ReportFormat,
        /// Also list every language.
        #[arg(long)]
        per_language: bool,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RomanizeMode {
    Text,
    Tokens,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupingArg {
    All,
    Script,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    mode: Option<PromptMode>,
    #[arg(long)]
    seed: Option<u64>,
    /// live:<url>, replay:<file> or record:<file>=<url>
    #[arg(long)]
    backend: Option<BackendSpec>,
    #[arg(long)]
    tables: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl From<RunArgs> for Overrides {
    fn from(a: RunArgs) -> Self {
        Overrides {
            mode: a.mode,
            seed: a.seed,
            backend: a.backend,
            tables: a.tables,
            out: a.out,
        }
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn run_error(e: RunError) -> ExitCode {
    fail(e.exit_code() as u8, e)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Romanize {
            input,
            tables,
            mode,
            fallback,
            lowercase,
        } => romanize(input.as_deref(), &tables, mode, fallback, lowercase),
        Command::Prompts {
            config,
            overrides,
            prompts_dir,
        } => prompts(&config, overrides.into(), prompts_dir.as_deref()),
        Command::Run { config, overrides } => {
            let config = match RunConfig::load(&config, &overrides.into()) {
                Ok(c) => c,
                Err(e) => return run_error(e),
            };
            match run::run(&config) {
                Ok(summary) => {
                    for w in &summary.warnings {
                        eprintln!("warning: {w}");
                    }
                    println!(
                        "{} {} {}: {:.1} over {} examples -> {}",
                        summary.report.task,
                        summary.report.language,
                        summary.report.mode.as_str(),
                        summary.report.score,
                        summary.report.n_examples,
                        summary.out_dir.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => run_error(e),
            }
        }
        Command::Report {
            runs,
            grouping,
            format,
            per_language,
            out,
        } => report(&runs, grouping, format, per_language, out.as_deref()),
    }
}

fn romanize(
    input: Option<&Path>,
    tables: &Path,
    mode: RomanizeMode,
    fallback: FallbackPolicy,
    lowercase: bool,
) -> ExitCode {
    let config = match load_tables(tables) {
        Ok(c) => c.with_fallback(fallback).with_lowercase(lowercase),
        Err(e) => return fail(2, e),
    };
    let reader: Box<dyn BufRead> = match input {
        Some(p) => match fs::File::open(p) {
            Ok(f) => Box::new(io::BufReader::new(f)),
            Err(e) => return fail(2, format!("{}: {e}", p.display())),
        },
        None => Box::new(io::stdin().lock()),
    };
    let mut out = BufWriter::new(io::stdout().lock());
    for line in reader.lines() {
        let line = match line {
            Ok(l) => l,
            Err(e) => return fail(2, e),
        };
        let romanized = match mode {
            RomanizeMode::Text => config.romanize_text(&line),
            RomanizeMode::Tokens => {
                let tokens: Vec<&str> = line.split_whitespace().collect();
                config.romanize_tokens(&tokens).join(" ")
            }
        };
        if writeln!(out, "{romanized}").is_err() {
            return ExitCode::SUCCESS;
        }
    }
    let _ = out.flush();
    ExitCode::SUCCESS
}

fn prompts(config: &Path, overrides: Overrides, dir: Option<&Path>) -> ExitCode {
    let result = (|| {
        let config = RunConfig::load(config, &overrides)?;
        let inputs = RunInputs::load(&config)?;
        run::plan(&config, &inputs)
    })();
    let planned = match result {
        Ok(p) => p,
        Err(e) => return run_error(e),
    };
    match dir {
        Some(dir) => {
            if let Err(e) = fs::create_dir_all(dir) {
                return fail(2, format!("{}: {e}", dir.display()));
            }
            for p in &planned {
                let path = dir.join(format!("{}.txt", p.query.id.replace(['/', ':'], "_")));
                if let Err(e) = fs::write(&path, &p.prompt.text) {
                    return fail(2, format!("{}: {e}", path.display()));
                }
            }
        }
        None => {
            let mut out = io::stdout().lock();
            for p in &planned {
                let _ = writeln!(
                    out,
                    "=== {} ({})\n{}\n",
                    p.query.id,
                    p.request.hash(),
                    p.prompt.text
                );
            }
        }
    }
    ExitCode::SUCCESS
}

fn report(
    runs: &[PathBuf],
    grouping: GroupingArg,
    format: ReportFormat,
    per_language: bool,
    out: Option<&Path>,
) -> ExitCode {
    let mut reports = match collect_reports(runs) {
        Ok(r) => r,
        Err(e) => return run_error(e),
    };
    reports.sort_by_key(|r| (r.language, r.mode));
    let grouping = match grouping {
        GroupingArg::All => GroupingKind::AllLanguages,
        GroupingArg::Script => GroupingKind::Script,
    };
    let doc = aggregate(&reports, grouping).and_then(|rows| {
        let langs = if per_language { &reports[..] } else { &[] };
        render_report(&rows, langs, format)
    });
    let doc = match doc {
        Ok(d) => d,
        Err(e) => return fail(2, e),
    };
    match out {
        Some(path) => {
            if let Err(e) = fs::write(path, doc) {
                return fail(2, format!("{}: {e}", path.display()));
            }
        }
        None => print!("{doc}"),
    }
    ExitCode::SUCCESS
}
