//! Machine-readable run reports.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// One verified quantity: the measured value, the tolerance it is held to,
/// and whether it passed.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    /// Passes iff `value < tolerance` (NaN fails).
    pub fn below(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value < tolerance,
            note: None,
        }
    }

    /// Passes iff `value <= tolerance` (NaN fails).
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            passed: value <= tolerance,
            ..Self::below(name, value, tolerance)
        }
    }

    /// A violation count that must be zero.
    pub fn none(name: impl Into<String>, violations: usize) -> Self {
        Self {
            name: name.into(),
            value: violations as f64,
            tolerance: 0.0,
            passed: violations == 0,
            note: None,
        }
    }

    /// A condition with no meaningful residual.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 0.0 } else { 1.0 },
            tolerance: 0.0,
            passed: ok,
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Hash of the command line's effective inputs (scene, options).
    pub inputs_digest: String,
    /// Hash of everything below: identical runs give identical digests.
    pub digest: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub outputs: Vec<String>,
    pub notes: Vec<String>,
    pub data: serde_json::Value,
}

impl RunReport {
    pub fn new(command: &str, seed: Option<u64>, inputs: &serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            seed,
            inputs_digest: digest(inputs.to_string().as_bytes()),
            digest: String::new(),
            passed: true,
            checks: Vec::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
            data: serde_json::Value::Null,
        }
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, checks: impl IntoIterator<Item = Check>) {
        self.checks.extend(checks);
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Settle `passed` and `digest`; call once all checks are in.
    pub fn finish(mut self) -> Self {
        self.passed = self.checks.iter().all(|c| c.passed);
        self.digest.clear();
        let body = serde_json::to_string(&self).expect("report serializes");
        self.digest = digest(body.as_bytes());
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// First 16 hex digits of the SHA-256 of `bytes`.
pub fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}
