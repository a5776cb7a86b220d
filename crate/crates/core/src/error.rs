use thiserror::Error;

/// Errors raised by the analytic model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("bonding level {level} outside 1..={max}")]
    LevelOutOfRange { level: u32, max: u32 },
    #[error("invalid model parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
    #[error("idle-then-busy probability is zero; OWRP collision probability is undefined")]
    DegenerateDenominator,
    #[error("fixed point did not converge (last residual {residual:e})")]
    NoConvergence { residual: f64 },
}

/// Errors raised by the bonding-level controller.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("no history recorded for bucket {bucket}")]
    NoHistory { bucket: usize },
    #[error("no history recorded for level {level} in bucket {bucket}")]
    NoRecord { bucket: usize, level: u8 },
    #[error("throughput {0} is not a normalized value in [0, 1]")]
    ThroughputOutOfRange(f64),
    #[error("bonding level {level} outside 1..={max}")]
    LevelOutOfRange { level: u8, max: u8 },
    #[error("invalid bucket configuration: {0}")]
    InvalidBuckets(String),
    #[error("malformed table snapshot at line {line}: {reason}")]
    Snapshot { line: usize, reason: String },
}

/// A single configuration problem, located by its field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldIssue {
    pub path: String,
    pub reason: String,
}

impl std::fmt::Display for FieldIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.reason)
    }
}

/// Errors raised by the simulator and the baselines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration:\n{}", format_issues(.0))]
    InvalidConfig(Vec<FieldIssue>),
    #[error("empty station group")]
    EmptyGroup,
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

fn format_issues(issues: &[FieldIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Errors raised by the experiment harness.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("series covers {have} ms but at least {need} ms are required")]
    InsufficientData { have: f64, need: f64 },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("{failed} of {total} sweep cells failed")]
    CellsFailed { failed: usize, total: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("config parse error: {0}")]
    Parse(String),
}
