//! Empirical checks of the operator's properties and the solvers' rates.
//!
//! Every check runs on fixed seeds and reports the measured quantity next to
//! its tolerance, so a report is reproducible and machine-readable.

mod checks;
mod rates;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checks::{
    batch_size_spread, bn_reparameterization, ce_gap_bound, gradient_oracles, lipschitz_bound, mismatch_gap,
    monotonicity, operator_finite_difference, operator_gradient_equivalence, softmax_kappa, strong_monotonicity,
    unbiasedness, zero_at_teacher_expectations, zero_at_teacher_sampled, MonotonePairs,
};
pub use rates::{
    adaptive_rate_curve, loglog_slope, oe_rate_curve, RateCurve, ADAPTIVE_RATE_HORIZONS, OE_BATCH_DIVISOR,
    OE_RATE_HORIZONS,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tolerance {
    AtMost { limit: f64 },
    AtLeast { limit: f64 },
    Within { low: f64, high: f64 },
}

impl Tolerance {
    pub fn accepts(self, v: f64) -> bool {
        match self {
            Tolerance::AtMost { limit } => v <= limit,
            Tolerance::AtLeast { limit } => v >= limit,
            Tolerance::Within { low, high } => v >= low && v <= high,
        }
    }

    fn describe(self) -> String {
        match self {
            Tolerance::AtMost { limit } => format!("<= {limit:e}"),
            Tolerance::AtLeast { limit } => format!(">= {limit:e}"),
            Tolerance::Within { low, high } => format!("in [{low}, {high}]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub description: String,
    pub tolerance: Tolerance,
    /// NaN when the check could not be evaluated.
    pub measured: f64,
    pub passed: bool,
    pub instances: usize,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl CheckResult {
    pub fn new(name: &str, description: &str, tolerance: Tolerance, measured: f64, instances: usize) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            tolerance,
            measured,
            passed: measured.is_finite() && tolerance.accepts(measured),
            instances,
            note: String::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub checks: Vec<CheckResult>,
}

impl TheoryReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `name,tolerance,measured,passed,instances`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,tolerance,measured,passed,instances\n");
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                c.name,
                c.tolerance.describe(),
                c.measured,
                c.passed,
                c.instances
            );
        }
        out
    }

    /// One human-readable line per check.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(
                out,
                "[{}] {:<36} measured {:<12.4e} {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.tolerance.describe()
            );
        }
        out
    }
}

type CheckFn = fn() -> Result<CheckResult>;

const BATTERY: &[(&str, CheckFn)] = &[
    ("operator_gradient_equivalence", operator_gradient_equivalence),
    ("operator_finite_difference", operator_finite_difference),
    ("zero_at_teacher_expectations", zero_at_teacher_expectations),
    ("zero_at_teacher_sampled", zero_at_teacher_sampled),
    ("monotonicity", monotonicity),
    ("strong_monotonicity", strong_monotonicity),
    ("lipschitz_bound", lipschitz_bound),
    ("unbiasedness", unbiasedness),
    ("softmax_kappa", softmax_kappa),
    ("bn_reparameterization", bn_reparameterization),
    ("gradient_oracles", gradient_oracles),
    ("mismatch_bound", mismatch_gap),
    ("ce_gap_bound", ce_gap_bound),
    ("batch_size_insensitivity", batch_size_spread),
    ("adaptive_rate", rates::adaptive_rate_check),
    ("oe_rate", rates::oe_rate_check),
];

/// Names accepted in `theory.checks`, in battery order.
pub fn check_names() -> Vec<&'static str> {
    BATTERY.iter().map(|(n, _)| *n).collect()
}

pub fn validate_selection(selected: &[String]) -> Result<()> {
    for s in selected {
        if !BATTERY.iter().any(|(n, _)| n == s) {
            return Err(Error::config(
                "theory.checks",
                format!("unknown check {s:?}; known: {}", check_names().join(", ")),
            ));
        }
    }
    Ok(())
}

/// Runs the selected checks (all when `selected` is empty) in battery order.
/// A check that errors is reported as failed with the error as its note.
pub fn run_checks(selected: &[String]) -> Result<TheoryReport> {
    validate_selection(selected)?;
    let mut report = TheoryReport::default();
    for (name, f) in BATTERY {
        if !selected.is_empty() && !selected.iter().any(|s| s == name) {
            continue;
        }
        let result = f().unwrap_or_else(|e| {
            CheckResult::new(name, "evaluation failed", Tolerance::AtMost { limit: 0.0 }, f64::NAN, 0)
                .with_note(e.to_string())
        });
        report.checks.push(result);
    }
    Ok(report)
}
