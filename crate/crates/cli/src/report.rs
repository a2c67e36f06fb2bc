//! `summary.json` and `report.txt`.

use std::fmt::Write as _;
use std::path::Path;

use perispec_core::Result;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, WeightSource};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail,
    /// Preconditions not met; neither pass nor fail.
    Skip,
    /// Informational three-valued result (yes / no / marginal / unknown).
    Info,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckLine {
    /// The mathematical statement being instantiated.
    pub statement: String,
    pub outcome: Outcome,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct Report {
    pub task: String,
    pub setup: Value,
    pub results: Value,
    pub checks: Vec<CheckLine>,
    pub artifacts: Vec<String>,
}

impl Report {
    pub fn new(config: &ExperimentConfig) -> Self {
        let weight = match &config.weight {
            WeightSource::Expr(e) => json!({ "expr": e }),
            WeightSource::Csv(p) => json!({ "csv": p.display().to_string() }),
        };
        Report {
            task: config.task.to_string(),
            setup: json!({
                "kernel": { "profile": config.profile.to_string(), "radius": config.radius },
                "grid": {
                    "boundary": config.boundary.to_string(),
                    "lengths": config.lengths,
                    "n_per_axis": config.n_per_axis,
                },
                "weight": weight,
                "period": config.period,
                "seed": config.seed,
                "n_steps": config.numerics.n_steps,
                "n_time": config.numerics.n_time,
            }),
            results: Value::Null,
            checks: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn check(
        &mut self,
        statement: impl Into<String>,
        outcome: Outcome,
        detail: impl Into<String>,
    ) {
        self.checks.push(CheckLine {
            statement: statement.into(),
            outcome,
            detail: detail.into(),
        });
    }

    pub fn pass_if(&mut self, statement: impl Into<String>, ok: bool, detail: impl Into<String>) {
        let outcome = if ok { Outcome::Pass } else { Outcome::Fail };
        self.check(statement, outcome, detail);
    }

    pub fn failed_checks(&self) -> usize {
        self.checks
            .iter()
            .filter(|c| c.outcome == Outcome::Fail)
            .count()
    }

    pub fn summary(&self) -> Value {
        json!({
            "format": "perispec-summary v1",
            "task": self.task,
            "setup": self.setup,
            "results": self.results,
            "checks": self.checks,
            "artifacts": self.artifacts,
        })
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "perispec report: task {}", self.task);
        let _ = writeln!(s);
        let _ = writeln!(s, "setup");
        push_value(&mut s, &self.setup, 1);
        let _ = writeln!(s);
        let _ = writeln!(s, "results");
        push_value(&mut s, &self.results, 1);
        let _ = writeln!(s);
        let _ = writeln!(s, "checks");
        for c in &self.checks {
            let tag = match c.outcome {
                Outcome::Pass => "PASS",
                Outcome::Fail => "FAIL",
                Outcome::Skip => "SKIP",
                Outcome::Info => "INFO",
            };
            let _ = writeln!(s, "  [{tag}] {}", c.statement);
            if !c.detail.is_empty() {
                let _ = writeln!(s, "         {}", c.detail);
            }
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "artifacts: {}", self.artifacts.join(", "));
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut json =
            serde_json::to_string_pretty(&self.summary()).expect("summary is valid JSON");
        json.push('\n');
        std::fs::write(dir.join("summary.json"), json)?;
        std::fs::write(dir.join("report.txt"), self.text())?;
        Ok(())
    }
}

fn push_value(s: &mut String, v: &Value, depth: usize) {
    let pad = "  ".repeat(depth);
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                match v {
                    Value::Object(_) => {
                        let _ = writeln!(s, "{pad}{k}:");
                        push_value(s, v, depth + 1);
                    }
                    Value::Array(items) if items.iter().any(Value::is_object) => {
                        let _ = writeln!(s, "{pad}{k}:");
                        for (i, item) in items.iter().enumerate() {
                            let _ = writeln!(s, "{pad}  [{i}]");
                            push_value(s, item, depth + 2);
                        }
                    }
                    _ => {
                        let _ = writeln!(s, "{pad}{k}: {}", scalar(v));
                    }
                }
            }
        }
        Value::Null => {}
        other => {
            let _ = writeln!(s, "{pad}{}", scalar(other));
        }
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "n/a".to_string(),
        other => other.to_string(),
    }
}
