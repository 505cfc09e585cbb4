use std::process::ExitCode;

use serde_json::{json, Value};
use valence_core::diagnostic::Diagnostic;
use valence_core::value::ValueVector;

use crate::Format;

/// Why a command stopped.
#[derive(Debug)]
pub enum Failure {
    /// Bad invocation or unreadable input; exit 2.
    Usage(String),
    /// The input was understood but is wrong; exit 1.
    Domain { code: &'static str, message: String },
    /// Scenario or protocol diagnostics; exit 1.
    Diagnostics {
        source: String,
        diagnostics: Vec<Diagnostic>,
    },
}

impl Failure {
    pub fn domain(code: &'static str, message: impl Into<String>) -> Self {
        Failure::Domain {
            code,
            message: message.into(),
        }
    }
}

pub struct Output {
    format: Format,
}

impl Output {
    pub fn new(format: Format) -> Self {
        Output { format }
    }

    pub fn json(&self) -> bool {
        self.format == Format::Json
    }

    /// Prints `text`, or `doc` in JSON mode.
    pub fn emit(&self, text: impl FnOnce() -> String, doc: impl FnOnce() -> Value) {
        if self.json() {
            println!("{}", serde_json::to_string_pretty(&doc()).expect("documents serialise"));
        } else {
            print!("{}", text());
        }
    }

    pub fn warn(&self, source: &str, d: &Diagnostic) {
        if self.json() {
            eprintln!("{}", json!({ "source": source, "diagnostic": d }));
        } else {
            eprintln!("{source}: {d}");
        }
    }

    pub fn note(&self, code: &str, message: &str) {
        if self.json() {
            eprintln!("{}", json!({ "code": code, "message": message }));
        } else {
            eprintln!("warning: {message}");
        }
    }

    pub fn fail(&self, failure: Failure) -> ExitCode {
        match failure {
            Failure::Usage(message) => {
                if self.json() {
                    eprintln!("{}", json!({ "code": "usage", "message": message }));
                } else {
                    eprintln!("error: {message}");
                }
                ExitCode::from(2)
            }
            Failure::Domain { code, message } => {
                if self.json() {
                    eprintln!("{}", json!({ "code": code, "message": message }));
                } else {
                    eprintln!("error: {message}");
                }
                ExitCode::from(1)
            }
            Failure::Diagnostics { source, diagnostics } => {
                for d in &diagnostics {
                    self.warn(&source, d);
                }
                ExitCode::from(1)
            }
        }
    }
}

/// A number for people: at most six decimals, trailing zeros dropped.
pub fn num(x: f64) -> String {
    let text = format!("{x:.6}");
    let text = text.trim_end_matches('0').trim_end_matches('.');
    if text == "-0" {
        "0".to_string()
    } else {
        text.to_string()
    }
}

pub fn vector(v: &ValueVector) -> String {
    let parts: Vec<String> = v.iter().map(|&x| num(x)).collect();
    format!("({})", parts.join(", "))
}

pub fn named(names: &[String], values: &[f64]) -> String {
    names
        .iter()
        .zip(values)
        .map(|(n, &x)| format!("{n} {}", num(x)))
        .collect::<Vec<_>>()
        .join(", ")
}
