//! Located diagnostics for scenario and protocol documents.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// Where a diagnostic points: a JSON pointer into the document plus the
/// 1-based line and column it resolves to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub path: String,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: String,
    pub message: String,
    pub location: Location,
}

impl Diagnostic {
    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let severity = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        let path = if self.location.path.is_empty() {
            "/"
        } else {
            &self.location.path
        };
        write!(
            f,
            "{}:{}: {severity}[{}] {} (at {path})",
            self.location.line, self.location.column, self.code, self.message
        )
    }
}

/// A successfully parsed document together with its warnings.
#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub value: T,
    pub warnings: Vec<Diagnostic>,
}

/// Maps JSON pointers to the line/column where each value starts.
#[derive(Debug, Clone, Default)]
pub struct SourceMap {
    starts: HashMap<String, (usize, usize)>,
}

impl SourceMap {
    /// Indexes `text`. Malformed JSON yields a partial map; syntax errors
    /// are reported separately by the deserialiser.
    pub fn index(text: &str) -> Self {
        let mut scanner = Scanner {
            chars: text.chars().collect(),
            pos: 0,
            line: 1,
            col: 1,
            starts: HashMap::new(),
        };
        scanner.skip_ws();
        let _ = scanner.value(String::new());
        SourceMap { starts: scanner.starts }
    }

    /// Position of `path`, falling back to its nearest indexed ancestor.
    pub fn locate(&self, path: &str) -> Location {
        let mut probe = path;
        loop {
            if let Some(&(line, column)) = self.starts.get(probe) {
                return Location {
                    path: path.to_string(),
                    line,
                    column,
                };
            }
            match probe.rfind('/') {
                Some(cut) => probe = &probe[..cut],
                None => {
                    return Location {
                        path: path.to_string(),
                        line: 1,
                        column: 1,
                    }
                }
            }
        }
    }

    /// Position of a character offset inside the string value at `path`.
    pub fn locate_in_string(&self, path: &str, offset: usize) -> Location {
        let mut loc = self.locate(path);
        if self.starts.contains_key(path) {
            loc.column += 1 + offset;
        }
        loc
    }

    pub fn error(&self, path: &str, code: &str, message: impl Into<String>) -> Diagnostic {
        Diagnostic {
            severity: Severity::Error,
            code: code.to_string(),
            message: message.into(),
            location: self.locate(path),
        }
    }

    pub fn warning(&self, path: &str, code: &str, message: impl Into<String>) -> Diagnostic {
        Diagnostic {
            severity: Severity::Warning,
            code: code.to_string(),
            message: message.into(),
            location: self.locate(path),
        }
    }
}

/// Escapes one JSON pointer segment.
pub fn pointer_segment(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

struct Scanner {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
    starts: HashMap<String, (usize, usize)>,
}

impl Scanner {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn value(&mut self, path: String) -> Option<()> {
        self.starts.insert(path.clone(), (self.line, self.col));
        match self.peek()? {
            '{' => {
                self.bump();
                self.skip_ws();
                if self.peek()? == '}' {
                    self.bump();
                    return Some(());
                }
                loop {
                    self.skip_ws();
                    let key = self.string()?;
                    self.skip_ws();
                    if self.bump()? != ':' {
                        return None;
                    }
                    self.skip_ws();
                    self.value(format!("{path}/{}", pointer_segment(&key)))?;
                    self.skip_ws();
                    match self.bump()? {
                        ',' => continue,
                        '}' => return Some(()),
                        _ => return None,
                    }
                }
            }
            '[' => {
                self.bump();
                self.skip_ws();
                if self.peek()? == ']' {
                    self.bump();
                    return Some(());
                }
                let mut i = 0;
                loop {
                    self.skip_ws();
                    self.value(format!("{path}/{i}"))?;
                    i += 1;
                    self.skip_ws();
                    match self.bump()? {
                        ',' => continue,
                        ']' => return Some(()),
                        _ => return None,
                    }
                }
            }
            '"' => self.string().map(|_| ()),
            _ => {
                while self
                    .peek()
                    .is_some_and(|c| !c.is_whitespace() && !matches!(c, ',' | '}' | ']'))
                {
                    self.bump();
                }
                Some(())
            }
        }
    }

    fn string(&mut self) -> Option<String> {
        if self.bump()? != '"' {
            return None;
        }
        let mut out = String::new();
        loop {
            match self.bump()? {
                '"' => return Some(out),
                '\\' => {
                    let esc = self.bump()?;
                    out.push(match esc {
                        'n' => '\n',
                        't' => '\t',
                        'u' => {
                            for _ in 0..4 {
                                self.bump()?;
                            }
                            '?'
                        }
                        other => other,
                    });
                }
                c => out.push(c),
            }
        }
    }
}
