//! JSON verification reports.

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub residual: Option<f64>,
    pub pass: bool,
}

impl CheckRecord {
    pub fn statistical(name: impl Into<String>, statistic: f64, p_value: f64, pass: bool) -> Self {
        Self {
            name: name.into(),
            statistic: Some(statistic),
            p_value: Some(p_value),
            residual: None,
            pass,
        }
    }

    pub fn residual(name: impl Into<String>, residual: f64, pass: bool) -> Self {
        Self {
            name: name.into(),
            statistic: None,
            p_value: None,
            residual: Some(residual),
            pass,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub command: String,
    pub config: Value,
    pub checks: Vec<CheckRecord>,
    pub pass: bool,
}

impl Report {
    pub fn new(command: impl Into<String>, config: Value, checks: Vec<CheckRecord>) -> Self {
        let pass = !checks.is_empty() && checks.iter().all(|c| c.pass);
        Self {
            command: command.into(),
            config,
            checks,
            pass,
        }
    }
}
