//! Structured pass/fail records shared by every diagnostic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Outcome of one inequality or identity check.
///
/// Non-finite measurements serialize as `null` and read back as NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub name: String,
    pub passed: bool,
    pub tolerance: f64,
    #[serde(with = "lossy_floats")]
    pub measured: BTreeMap<String, f64>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl DiagnosticReport {
    pub fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: true,
            tolerance,
            measured: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn measure(mut self, key: impl Into<String>, value: f64) -> Self {
        self.measured.insert(key.into(), value);
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn with_passed(mut self, passed: bool) -> Self {
        self.passed = passed;
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.measured.get(key).copied()
    }

    /// One line: `PASS name (k=v, ...)`.
    pub fn summary_line(&self) -> String {
        let vals: Vec<String> =
            self.measured.iter().map(|(k, v)| format!("{k}={v:.6e}")).collect();
        format!(
            "{} {} ({})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            vals.join(", ")
        )
    }
}

mod lossy_floats {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
        let lossy: BTreeMap<&String, Option<f64>> =
            m.iter().map(|(k, v)| (k, v.is_finite().then_some(*v))).collect();
        lossy.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
        let lossy = BTreeMap::<String, Option<f64>>::deserialize(d)?;
        Ok(lossy.into_iter().map(|(k, v)| (k, v.unwrap_or(f64::NAN))).collect())
    }
}
