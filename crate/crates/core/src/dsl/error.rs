use super::ast::Span;
use serde::Serialize;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Parse,
    Type,
    Distribution,
}

/// First problem found in an avatar script, with its source position.
#[derive(Clone, Debug, Error, PartialEq, Eq, Serialize)]
#[error("{line}:{column}: {} error: {message}", kind_name(.kind))]
pub struct DslError {
    pub kind: ErrorKind,
    pub line: u32,
    pub column: u32,
    pub message: String,
}

fn kind_name(k: &ErrorKind) -> &'static str {
    match k {
        ErrorKind::Parse => "parse",
        ErrorKind::Type => "type",
        ErrorKind::Distribution => "distribution",
    }
}

impl DslError {
    pub fn new(kind: ErrorKind, span: Span, message: impl Into<String>) -> Self {
        DslError {
            kind,
            line: span.line,
            column: span.col,
            message: message.into(),
        }
    }

    pub fn parse(span: Span, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Parse, span, message)
    }

    pub fn type_error(span: Span, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Type, span, message)
    }
}
