//! The `code-dojo` command line: offline assessment, corpus validation,
//! race calibration, step-count measurement and the HTTP service.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::assess::{AssessError, Assessor, TscSettings};
use crate::coach::AssessmentReport;
use crate::race::{self, required_iterations, RaceJobConfig, RequiredIterations};
use crate::registry::{load_corpus, missing_ladders, validate_manifest, Challenge, Corpus, ReferenceKind};
use crate::sandbox::BuildProfile;
use crate::service::{self, ServiceConfig, BIND_ENV, CORPUS_ENV, DATA_DIR_ENV, DEFAULT_BIND, DEFAULT_WORKERS};
use crate::submission::SubmissionFiles;
use crate::tsc::{self, StepCounter, StepGranularity};

pub const EXIT_SOLVED: u8 = 0;
pub const EXIT_UNSOLVED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INFRASTRUCTURE: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Human,
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "code-dojo", version, about = "Secure-coding challenge assessment")]
pub struct Cli {
    /// Challenge corpus directory.
    #[arg(long, env = CORPUS_ENV, default_value = "corpus", global = true)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Human, global = true)]
    pub format: OutputFormat,
    /// Seed for generated inputs (first seed for measure-tsc).
    #[arg(long, default_value_t = 0, global = true)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReferenceArg {
    Vulnerable,
    Secure,
}

impl From<ReferenceArg> for ReferenceKind {
    fn from(r: ReferenceArg) -> Self {
        match r {
            ReferenceArg::Vulnerable => ReferenceKind::Vulnerable,
            ReferenceArg::Secure => ReferenceKind::Secure,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GranularityArg {
    Line,
    Insn,
    Both,
}

impl GranularityArg {
    fn expand(self) -> Vec<StepGranularity> {
        match self {
            GranularityArg::Line => vec![StepGranularity::SourceLine],
            GranularityArg::Insn => vec![StepGranularity::MachineInstruction],
            GranularityArg::Both => vec![StepGranularity::SourceLine, StepGranularity::MachineInstruction],
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assess source files against a challenge. Exit 0 when solved, 1 when not.
    Assess {
        challenge: String,
        /// Source files; their names select which skeleton files they replace.
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Measure the TOCTOU detection curve on this machine.
    CalibrateRace {
        #[arg(long, default_value = "toctou-race")]
        challenge: String,
        #[arg(long, value_enum, default_value_t = ReferenceArg::Vulnerable)]
        reference: ReferenceArg,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        /// Defaults to the challenge's configured budget.
        #[arg(long)]
        max_iterations: Option<u64>,
    },
    /// Count debugger steps of both sorting references over generated inputs.
    MeasureTsc {
        #[arg(long, default_value = "sorting-tsc")]
        challenge: String,
        #[arg(long, value_enum, default_value_t = GranularityArg::Both)]
        granularity: GranularityArg,
        #[arg(long, default_value_t = tsc::DEFAULT_INPUT_SIZE)]
        size: usize,
        /// Number of consecutive seeds, starting at --seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Check manifests, hint ladders and that every assessor tells the
    /// references apart.
    ValidateCorpus {
        /// Corpus root (overrides --corpus).
        root: Option<PathBuf>,
        /// Skip building and assessing the references.
        #[arg(long)]
        skip_discrimination: bool,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = BIND_ENV, default_value = DEFAULT_BIND)]
        bind: SocketAddr,
        #[arg(long, env = DATA_DIR_ENV, default_value = "dojo-data")]
        data_dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_WORKERS)]
        workers: usize,
        /// Web front end to serve under `/`.
        #[arg(long, env = "CODE_DOJO_STATIC_DIR")]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Infrastructure(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Infrastructure(_) => EXIT_INFRASTRUCTURE,
        }
    }
}

fn infra(e: impl std::fmt::Display) -> CliError {
    CliError::Infrastructure(e.to_string())
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Infrastructure(format!("writing output: {e}"))
}

fn load(root: &Path) -> Result<Corpus, CliError> {
    load_corpus(root).map_err(|e| CliError::Usage(format!("cannot load corpus: {e}")))
}

fn challenge<'a>(corpus: &'a Corpus, id: &str) -> Result<&'a Challenge, CliError> {
    corpus.get(id).map_err(|e| CliError::Usage(e.to_string()))
}

fn json(out: &mut dyn Write, value: &impl Serialize) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(infra)?;
    writeln!(out).map_err(io_err)
}

/// Reads the named files into a submission.
pub fn read_submission(files: &[PathBuf]) -> Result<SubmissionFiles, CliError> {
    let mut submission = SubmissionFiles::default();
    for path in files {
        let name = path
            .file_name()
            .ok_or_else(|| CliError::Usage(format!("{} is not a file", path.display())))?;
        let bytes = std::fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        submission.insert(name.to_string_lossy().into_owned(), bytes);
    }
    Ok(submission)
}

pub fn write_report(out: &mut dyn Write, format: OutputFormat, challenge_id: &str, report: &AssessmentReport) -> Result<(), CliError> {
    match format {
        OutputFormat::Json => json(out, report),
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["guideline", "channel", "file", "line", "severity", "evidence"])
                .map_err(infra)?;
            for f in &report.findings {
                let (file, line) = f
                    .location
                    .as_ref()
                    .map_or((String::new(), String::new()), |l| (l.file.clone(), l.line.to_string()));
                w.write_record([
                    f.guideline.as_str(),
                    serde_json::to_value(f.channel).map_err(infra)?.as_str().unwrap_or_default(),
                    &file,
                    &line,
                    &format!("{:?}", f.severity),
                    &f.evidence,
                ])
                .map_err(infra)?;
            }
            w.flush().map_err(io_err)
        }
        OutputFormat::Human => {
            let verdict = if report.solved { "SOLVED" } else { "UNSOLVED" };
            let functional = if report.functional_pass { "pass" } else { "FAIL" };
            writeln!(out, "{challenge_id}: {verdict} (functional tests: {functional})").map_err(io_err)?;
            for (name, s) in &report.per_assessor_verdicts {
                let mark = if s.passed { "pass" } else { "FAIL" };
                writeln!(out, "  [{name}] {mark}: {}", s.summary).map_err(io_err)?;
            }
            for f in &report.findings {
                writeln!(out, "  - {f}").map_err(io_err)?;
            }
            Ok(())
        }
    }
}

pub fn cmd_assess(cli: &Cli, challenge_id: &str, files: &[PathBuf], out: &mut dyn Write) -> Result<u8, CliError> {
    let corpus = load(&cli.corpus)?;
    let challenge = challenge(&corpus, challenge_id)?;
    let submission = read_submission(files)?;
    let report = Assessor::default()
        .assess(challenge, "cli", &submission)
        .map_err(|e| match e {
            AssessError::InvalidSubmission(m) => CliError::Usage(m),
            other => infra(other),
        })?;
    write_report(out, cli.format, challenge_id, &report)?;
    Ok(if report.solved { EXIT_SOLVED } else { EXIT_UNSOLVED })
}

#[derive(Debug, Serialize)]
struct CalibrationOutput<'a> {
    curve: &'a race::RaceCalibrationCurve,
    required_iterations_99: RequiredIterations,
}

pub fn cmd_calibrate_race(
    cli: &Cli,
    challenge_id: &str,
    reference: ReferenceKind,
    trials: u64,
    max_iterations: Option<u64>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<u8, CliError> {
    let corpus = load(&cli.corpus)?;
    let challenge = challenge(&corpus, challenge_id)?;
    if trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let mut config = RaceJobConfig::from_manifest(&challenge.manifest);
    if let Some(n) = max_iterations {
        config.max_iterations = n;
    }
    let assessor = Assessor::default();
    let files = challenge.reference(reference).map_err(infra)?;
    let artifact = assessor
        .build_submission(challenge, &files, &BuildProfile::plain())
        .map_err(infra)?;
    let step = (trials / 10).max(1);
    let curve = race::calibrate_with_progress(&assessor.sandbox, &artifact, &config, trials, |done, total| {
        if cli.format == OutputFormat::Human && (done % step == 0 || done == total) {
            let _ = writeln!(err, "calibrating: {done}/{total} trials");
        }
    })
    .map_err(infra)?;
    let required = required_iterations(&curve, 0.99);
    match cli.format {
        OutputFormat::Json => json(
            out,
            &CalibrationOutput {
                curve: &curve,
                required_iterations_99: required,
            },
        )?,
        OutputFormat::Csv | OutputFormat::Human => {
            write!(out, "{}", curve.to_csv()).map_err(io_err)?;
            let line = match required {
                RequiredIterations::Reached(n) => format!("iterations for 99% detection: {n}"),
                RequiredIterations::Unreachable => format!(
                    "iterations for 99% detection: unreachable within {} ({} of {} trials detected)",
                    config.max_iterations, curve.detected_trials, curve.trials
                ),
            };
            // Keep CSV output machine-readable.
            if cli.format == OutputFormat::Csv {
                writeln!(err, "{line}").map_err(io_err)?;
            } else {
                writeln!(out, "{line}").map_err(io_err)?;
            }
        }
    }
    Ok(0)
}

/// One measured count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MeasureRow {
    pub solution: String,
    pub granularity: StepGranularity,
    pub input_label: String,
    pub count: u64,
    pub seed: u64,
}

/// Spread range of one solution at one granularity across seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpreadSummary {
    pub solution: String,
    pub granularity: StepGranularity,
    pub min_spread: f64,
    pub max_spread: f64,
}

/// Counts steps of the challenge's measured function for both references,
/// over `seeds` consecutive seeds starting at `first_seed`.
pub fn measure_references(
    challenge: &Challenge,
    granularities: &[StepGranularity],
    size: usize,
    first_seed: u64,
    seeds: u64,
) -> Result<(Vec<MeasureRow>, Vec<SpreadSummary>), AssessError> {
    let settings = TscSettings::from_challenge(challenge)?;
    let assessor = Assessor::default();
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for kind in [ReferenceKind::Secure, ReferenceKind::Vulnerable] {
        let files = challenge
            .reference(kind)
            .map_err(|e| AssessError::Config(e.to_string()))?;
        let artifact = assessor.build_submission(challenge, &files, &BuildProfile::debug())?;
        for &granularity in granularities {
            let mut counter = StepCounter::with_config(
                assessor.debugger.clone(),
                &artifact,
                &settings.function,
                granularity,
                settings.step_ceiling,
            );
            let mut spreads = Vec::new();
            for seed in first_seed..first_seed + seeds {
                let mut counts = Vec::new();
                for input in tsc::default_inputs(size, seed) {
                    let sample = counter.count(&input)?;
                    counts.push(sample.count);
                    rows.push(MeasureRow {
                        solution: kind.dir_name().to_string(),
                        granularity,
                        input_label: sample.input_label,
                        count: sample.count,
                        seed,
                    });
                }
                spreads.push(tsc::relative_spread(&counts));
            }
            summaries.push(SpreadSummary {
                solution: kind.dir_name().to_string(),
                granularity,
                min_spread: spreads.iter().copied().fold(f64::INFINITY, f64::min),
                max_spread: spreads.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
        }
    }
    Ok((rows, summaries))
}

pub fn cmd_measure_tsc(
    cli: &Cli,
    challenge_id: &str,
    granularity: GranularityArg,
    size: usize,
    seeds: u64,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<u8, CliError> {
    let corpus = load(&cli.corpus)?;
    let challenge = challenge(&corpus, challenge_id)?;
    if seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let (rows, summaries) =
        measure_references(challenge, &granularity.expand(), size, cli.seed, seeds).map_err(infra)?;
    let summary_lines: Vec<String> = summaries
        .iter()
        .map(|s| {
            format!(
                "{} {}: spread {:.1}%..{:.1}%",
                s.solution,
                s.granularity,
                s.min_spread * 100.0,
                s.max_spread * 100.0
            )
        })
        .collect();
    match cli.format {
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct Output<'a> {
                samples: &'a [MeasureRow],
                summary: &'a [SpreadSummary],
            }
            json(
                out,
                &Output {
                    samples: &rows,
                    summary: &summaries,
                },
            )?;
        }
        OutputFormat::Csv | OutputFormat::Human => {
            let mut w = csv::Writer::from_writer(&mut *out);
            for row in &rows {
                w.serialize(row).map_err(infra)?;
            }
            w.flush().map_err(io_err)?;
            drop(w);
            let sink: &mut dyn Write = if cli.format == OutputFormat::Csv { err } else { out };
            for line in summary_lines {
                writeln!(sink, "{line}").map_err(io_err)?;
            }
        }
    }
    Ok(0)
}

/// A corpus problem found by [`validate_corpus`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusProblem {
    pub challenge: String,
    pub problem: String,
}

/// Static checks (manifest invariants, ladder coverage and shape) and,
/// with `discrimination`, a run of both references through every assessor
/// of each challenge.
pub fn validate_corpus(corpus: &Corpus, discrimination: bool) -> Result<Vec<CorpusProblem>, AssessError> {
    let mut problems = Vec::new();
    let mut push = |c: &Challenge, problem: String| {
        problems.push(CorpusProblem {
            challenge: c.manifest.id.clone(),
            problem,
        })
    };
    for c in corpus.challenges() {
        for v in validate_manifest(&c.manifest).violations {
            push(c, v.to_string());
        }
        for g in missing_ladders(c) {
            push(c, format!("no hint ladder for {g}"));
        }
        if let Some(book) = &c.hints {
            for ladder in &book.ladders {
                if let Err(e) = ladder.check() {
                    push(c, format!("hint ladder for {}: {e}", ladder.guideline));
                }
            }
        }
    }
    if discrimination {
        let assessor = Assessor::default();
        for c in corpus.challenges() {
            let run = |kind| -> Result<AssessmentReport, AssessError> {
                let files = c.reference(kind).map_err(|e| AssessError::Config(e.to_string()))?;
                assessor.assess(c, kind.dir_name(), &files)
            };
            let vulnerable = run(ReferenceKind::Vulnerable)?;
            let secure = run(ReferenceKind::Secure)?;
            for kind in &c.manifest.assessors {
                let passed = |r: &AssessmentReport| r.per_assessor_verdicts.get(kind.as_str()).map(|s| s.passed);
                if passed(&vulnerable) == passed(&secure) {
                    problems.push(CorpusProblem {
                        challenge: c.manifest.id.clone(),
                        problem: format!("{kind} assessor cannot discriminate the vulnerable and secure references"),
                    });
                }
            }
            if !secure.solved {
                problems.push(CorpusProblem {
                    challenge: c.manifest.id.clone(),
                    problem: "secure reference does not solve the challenge".into(),
                });
            }
        }
    }
    Ok(problems)
}

pub fn cmd_validate_corpus(cli: &Cli, root: Option<&Path>, skip_discrimination: bool, out: &mut dyn Write) -> Result<u8, CliError> {
    let root = root.unwrap_or(&cli.corpus);
    let corpus = match load_corpus(root) {
        Ok(c) => c,
        Err(e) => {
            let problem = CorpusProblem {
                challenge: String::new(),
                problem: e.to_string(),
            };
            match cli.format {
                OutputFormat::Json => json(out, &vec![problem])?,
                _ => writeln!(out, "corpus: {}", problem.problem).map_err(io_err)?,
            }
            return Ok(1);
        }
    };
    let problems = validate_corpus(&corpus, !skip_discrimination).map_err(infra)?;
    match cli.format {
        OutputFormat::Json => json(out, &problems)?,
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut *out);
            w.write_record(["challenge", "problem"]).map_err(infra)?;
            for p in &problems {
                w.serialize(p).map_err(infra)?;
            }
            w.flush().map_err(io_err)?;
        }
        OutputFormat::Human => {
            for p in &problems {
                writeln!(out, "{}: {}", p.challenge, p.problem).map_err(io_err)?;
            }
            if problems.is_empty() {
                writeln!(out, "{} challenge(s) ok", corpus.challenges().len()).map_err(io_err)?;
            }
        }
    }
    Ok(if problems.is_empty() { 0 } else { 1 })
}

fn cmd_serve(cli: &Cli, bind: SocketAddr, data_dir: PathBuf, workers: usize, static_dir: Option<PathBuf>) -> Result<u8, CliError> {
    let config = ServiceConfig {
        corpus: cli.corpus.clone(),
        data_dir,
        bind,
        workers,
        static_dir,
    };
    let runtime = tokio::runtime::Runtime::new().map_err(infra)?;
    runtime
        .block_on(service::serve(config, Arc::new(Assessor::default())))
        .map_err(infra)?;
    Ok(0)
}

/// Runs a parsed command line; returns the process exit code.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let result = match &cli.command {
        Command::Assess { challenge, files } => cmd_assess(cli, challenge, files, out),
        Command::CalibrateRace {
            challenge,
            reference,
            trials,
            max_iterations,
        } => cmd_calibrate_race(cli, challenge, (*reference).into(), *trials, *max_iterations, out, err),
        Command::MeasureTsc {
            challenge,
            granularity,
            size,
            seeds,
        } => cmd_measure_tsc(cli, challenge, *granularity, *size, *seeds, out, err),
        Command::ValidateCorpus {
            root,
            skip_discrimination,
        } => cmd_validate_corpus(cli, root.as_deref(), *skip_discrimination, out),
        Command::Serve {
            bind,
            data_dir,
            workers,
            static_dir,
        } => cmd_serve(cli, *bind, data_dir.clone(), *workers, static_dir.clone()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let code = run(&cli, &mut std::io::stdout().lock(), &mut std::io::stderr().lock());
    ExitCode::from(code)
}
