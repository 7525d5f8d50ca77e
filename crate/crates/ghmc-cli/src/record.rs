//! Result records and their serialized forms.
//!
//! A run produces one self-describing [`ResultRecord`]: the echoed
//! configuration, every scalar the experiment measured (each labeled with its
//! meaning), one entry per assertion, and an overall pass flag. JSON emission
//! is one document; CSV emission is one row per (step, quantity) plus one row
//! per check, with floats printed to 17 significant digits so they parse back
//! exactly. Everything except `wall_clock_ms` is reproducible bit-for-bit
//! from `(config, seed)`.

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// One measured scalar, optionally attached to a step index.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Quantity {
    pub step: Option<u64>,
    pub name: String,
    pub value: f64,
    pub meaning: String,
}

/// One assertion outcome.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// The complete output of one experiment run.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub kind: String,
    pub library_version: String,
    pub seed: u64,
    pub config: toml::Value,
    pub wall_clock_ms: f64,
    pub quantities: Vec<Quantity>,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl ResultRecord {
    pub fn new(kind: &str, seed: u64, config: toml::Value) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: kind.to_string(),
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            wall_clock_ms: 0.0,
            quantities: Vec::new(),
            checks: Vec::new(),
            passed: true,
        }
    }

    pub fn quantity(&mut self, step: Option<u64>, name: &str, value: f64, meaning: &str) {
        self.quantities.push(Quantity {
            step,
            name: name.to_string(),
            value,
            meaning: meaning.to_string(),
        });
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.passed &= passed;
        self.checks.push(CheckResult {
            name: name.to_string(),
            passed,
            detail,
        });
    }

    /// Asserts `value <= bound`, records both, and returns the outcome.
    pub fn check_le(&mut self, name: &str, value: f64, bound: f64) -> bool {
        let passed = value <= bound;
        self.check(
            name,
            passed,
            format!("{} <= {} is {}", fmt_float(value), fmt_float(bound), passed),
        );
        passed
    }

    /// The record as one pretty-printed JSON document.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("record serializes");
        text.push('\n');
        text
    }

    /// CSV form: a header, a schema-version row, one row per quantity, then
    /// one row per check. The wall clock stays out so the bytes depend only
    /// on `(config, seed)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,name,value,meaning\n");
        out.push_str(&format!(
            ",schema_version,{},result record schema version\n",
            fmt_float(self.schema_version as f64)
        ));
        for q in &self.quantities {
            let step = q.step.map(|s| s.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{step},{},{},{}\n",
                csv_escape(&q.name),
                fmt_float(q.value),
                csv_escape(&q.meaning)
            ));
        }
        for c in &self.checks {
            out.push_str(&format!(
                ",{},{},{}\n",
                csv_escape(&format!("check:{}", c.name)),
                if c.passed { 1 } else { 0 },
                csv_escape(&c.detail)
            ));
        }
        out
    }
}

/// 17 significant digits: round-trip exact for f64.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_round_trips() {
        for &x in &[std::f64::consts::PI, 1.0 / 3.0, 1e-300, -2.5e17, 0.1] {
            let printed = fmt_float(x);
            assert_eq!(printed.parse::<f64>().unwrap(), x, "{printed}");
        }
    }

    #[test]
    fn csv_has_header_even_when_empty() {
        let record = ResultRecord::new("metrics", 1, toml::Value::Table(Default::default()));
        let csv = record.to_csv();
        assert!(csv.starts_with("step,name,value,meaning\n"));
        assert_eq!(csv.lines().count(), 2); // header + schema version only
    }

    #[test]
    fn json_round_trips() {
        let mut record = ResultRecord::new("metrics", 1, toml::Value::Table(Default::default()));
        record.quantity(Some(3), "gap", 0.125, "test gap");
        record.check("bound", true, "ok".into());
        let parsed: ResultRecord = serde_json::from_str(&record.to_json()).unwrap();
        assert_eq!(parsed, record);
    }

    #[test]
    fn csv_escapes_delimiters() {
        let mut record = ResultRecord::new("metrics", 1, toml::Value::Table(Default::default()));
        record.quantity(None, "a,b", 1.0, "has \"quotes\", and commas");
        let csv = record.to_csv();
        assert!(csv.contains("\"a,b\""));
        assert!(csv.contains("\"has \"\"quotes\"\", and commas\""));
    }
}
