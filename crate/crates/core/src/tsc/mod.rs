//! Time-side-channel oracle.
//!
//! Executed debugger steps stand in for running time: a breakpoint is set
//! on the target function, the wrapper is run with one input, and every
//! step event until control returns to the caller is counted. A function
//! whose count changes between equally sized inputs leaks information about
//! the values through its timing.

mod mi;
mod session;

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sandbox::BuildArtifact;

pub use mi::{parse_line as parse_mi_line, Record as MiRecord, RecordKind as MiRecordKind, Value as MiValue};
pub use session::{DebuggerConfig, DEBUGGER_ENV, DEFAULT_DEBUGGER};

/// Guideline reported when a timing discrepancy is found.
pub const TSC_GUIDELINE: &str = "CWE-208";
pub const DEFAULT_STEP_CEILING: u64 = 1_000_000;
pub const DEFAULT_INPUT_SIZE: usize = 5;

#[derive(Debug, Error)]
pub enum TscError {
    #[error("symbol {0:?} not found in the binary")]
    SymbolNotFound(String),
    #[error("debugger protocol error: {0}")]
    DebuggerProtocolError(String),
    #[error("function did not return within {ceiling} steps")]
    StepCeilingExceeded { ceiling: u64 },
    #[error("inputs must all have the same length")]
    InputShapeMismatch,
    #[error("at least two inputs are needed to compare step counts")]
    TooFewInputs,
    #[error("debugger {0:?} is not available")]
    DebuggerMissing(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepGranularity {
    /// One event per source line (`step`).
    SourceLine,
    /// One event per machine instruction (`stepi`).
    MachineInstruction,
}

impl StepGranularity {
    pub fn short_name(self) -> &'static str {
        match self {
            StepGranularity::SourceLine => "line",
            StepGranularity::MachineInstruction => "insn",
        }
    }
}

impl fmt::Display for StepGranularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for StepGranularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "line" | "source-line" | "step" => Ok(StepGranularity::SourceLine),
            "insn" | "machine-instruction" | "stepi" => Ok(StepGranularity::MachineInstruction),
            other => Err(format!("unknown step granularity {other:?} (expected line or insn)")),
        }
    }
}

/// An oracle input with a human-readable label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledInput {
    pub label: String,
    pub values: Vec<i64>,
}

impl LabeledInput {
    pub fn new(label: impl Into<String>, values: Vec<i64>) -> Self {
        LabeledInput {
            label: label.into(),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCountSample {
    pub input_label: String,
    pub input: Vec<i64>,
    pub granularity: StepGranularity,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TscVerdict {
    pub detected: bool,
    pub samples: Vec<StepCountSample>,
    /// `(max - min) / min` over the sample counts.
    pub relative_spread: f64,
    pub threshold: f64,
}

/// Sorted, reverse-sorted and three seeded random permutations of
/// `[1..=size]`.
pub fn default_inputs(size: usize, seed: u64) -> Vec<LabeledInput> {
    let sorted: Vec<i64> = (1..=size as i64).collect();
    let mut reversed = sorted.clone();
    reversed.reverse();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = vec![
        LabeledInput::new("sorted", sorted.clone()),
        LabeledInput::new("reverse-sorted", reversed),
    ];
    for i in 1..=3 {
        let mut v = sorted.clone();
        v.shuffle(&mut rng);
        inputs.push(LabeledInput::new(format!("random-{i}"), v));
    }
    inputs
}

/// Relative spread `(max - min) / min` of a set of counts; 0 for fewer than
/// two counts. A zero minimum is treated as one.
pub fn relative_spread(counts: &[u64]) -> f64 {
    let (Some(&min), Some(&max)) = (counts.iter().min(), counts.iter().max()) else {
        return 0.0;
    };
    (max - min) as f64 / min.max(1) as f64
}

/// Decides the verdict for already measured samples.
pub fn verdict_from_samples(samples: Vec<StepCountSample>, threshold: f64) -> Result<TscVerdict, TscError> {
    if samples.len() < 2 {
        return Err(TscError::TooFewInputs);
    }
    let len = samples[0].input.len();
    let granularity = samples[0].granularity;
    if samples.iter().any(|s| s.input.len() != len || s.granularity != granularity) {
        return Err(TscError::InputShapeMismatch);
    }
    let counts: Vec<u64> = samples.iter().map(|s| s.count).collect();
    let spread = relative_spread(&counts);
    Ok(TscVerdict {
        detected: spread > threshold,
        samples,
        relative_spread: spread,
        threshold,
    })
}

/// Counts steps of one function of one binary, reusing a single debugger
/// session across inputs and caching counts per distinct input.
pub struct StepCounter {
    config: DebuggerConfig,
    binary: PathBuf,
    function: String,
    granularity: StepGranularity,
    step_ceiling: u64,
    session: Option<session::Session>,
    cache: HashMap<Vec<i64>, u64>,
}

impl StepCounter {
    pub fn new(artifact: &BuildArtifact, function: &str, granularity: StepGranularity) -> Self {
        Self::with_config(DebuggerConfig::default(), artifact, function, granularity, DEFAULT_STEP_CEILING)
    }

    pub fn with_config(
        config: DebuggerConfig,
        artifact: &BuildArtifact,
        function: &str,
        granularity: StepGranularity,
        step_ceiling: u64,
    ) -> Self {
        StepCounter {
            config,
            binary: artifact.binary_path.clone(),
            function: function.to_string(),
            granularity,
            step_ceiling,
            session: None,
            cache: HashMap::new(),
        }
    }

    pub fn granularity(&self) -> StepGranularity {
        self.granularity
    }

    pub fn count(&mut self, input: &LabeledInput) -> Result<StepCountSample, TscError> {
        let count = match self.cache.get(&input.values) {
            Some(&c) => c,
            None => {
                let c = self.measure(&input.values)?;
                self.cache.insert(input.values.clone(), c);
                c
            }
        };
        Ok(StepCountSample {
            input_label: input.label.clone(),
            input: input.values.clone(),
            granularity: self.granularity,
            count,
        })
    }

    fn measure(&mut self, values: &[i64]) -> Result<u64, TscError> {
        if self.session.is_none() {
            self.session = Some(session::Session::start(&self.config, &self.binary, &self.function)?);
        }
        let args: Vec<String> = values.iter().map(i64::to_string).collect();
        let session = self.session.as_mut().expect("session started");
        let result = session.count(&args, self.granularity, self.step_ceiling);
        if result.is_err() {
            // The session may be mid-run; never reuse it after a failure.
            self.session = None;
        }
        result
    }
}

/// Counts executed steps of `function_symbol` for a single input.
pub fn count_steps(
    artifact: &BuildArtifact,
    function_symbol: &str,
    input: &[i64],
    granularity: StepGranularity,
    step_ceiling: u64,
) -> Result<StepCountSample, TscError> {
    let mut counter = StepCounter::with_config(
        DebuggerConfig::default(),
        artifact,
        function_symbol,
        granularity,
        step_ceiling,
    );
    counter.count(&LabeledInput::new("input", input.to_vec()))
}

/// Measures every input and decides whether the step count depends on the
/// input values.
pub fn assess_tsc(
    artifact: &BuildArtifact,
    function_symbol: &str,
    inputs: &[LabeledInput],
    granularity: StepGranularity,
    threshold: f64,
) -> Result<TscVerdict, TscError> {
    let mut counter = StepCounter::new(artifact, function_symbol, granularity);
    assess_with(&mut counter, inputs, threshold)
}

/// [`assess_tsc`] on an existing counter, so cached counts are reused.
pub fn assess_with(counter: &mut StepCounter, inputs: &[LabeledInput], threshold: f64) -> Result<TscVerdict, TscError> {
    if inputs.len() < 2 {
        return Err(TscError::TooFewInputs);
    }
    if inputs.iter().any(|i| i.values.len() != inputs[0].values.len()) {
        return Err(TscError::InputShapeMismatch);
    }
    let samples = inputs.iter().map(|i| counter.count(i)).collect::<Result<Vec<_>, _>>()?;
    verdict_from_samples(samples, threshold)
}
