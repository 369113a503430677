use super::sampling::Distribution;
use crate::market::Side;
use serde::{Deserialize, Serialize};

/// Source position (1-based). Positions never take part in structural
/// equality, so a reparsed canonical print compares equal to the original.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Type {
    Int,
    Real,
    Bool,
    Side,
}

impl Type {
    pub fn name(self) -> &'static str {
        match self {
            Type::Int => "int",
            Type::Real => "real",
            Type::Bool => "bool",
            Type::Side => "side",
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, Type::Int | Type::Real)
    }
}

/// Numeric or boolean literal as written in declarations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Bool(bool),
    Int(i64),
    Real(f64),
}

impl Literal {
    pub fn as_f64(self) -> Option<f64> {
        match self {
            Literal::Int(i) => Some(i as f64),
            Literal::Real(r) => Some(r),
            Literal::Bool(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamDecl {
    pub name: String,
    pub ty: Type,
    pub dist: Distribution,
    #[serde(skip)]
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateDecl {
    pub name: String,
    pub ty: Type,
    pub init: Literal,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HandlerKind {
    Wake,
    Trade,
    News,
    Message,
}

impl HandlerKind {
    pub fn keyword(self) -> &'static str {
        match self {
            HandlerKind::Wake => "wake",
            HandlerKind::Trade => "trade",
            HandlerKind::News => "news",
            HandlerKind::Message => "message",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Handler {
    pub kind: HandlerKind,
    /// Bound payload name for `news(v)` and `message(m)`.
    pub param: Option<String>,
    pub body: Vec<Stmt>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Stmt {
    Let {
        name: String,
        value: Expr,
        span: Span,
    },
    Assign {
        name: String,
        value: Expr,
        span: Span,
    },
    If {
        cond: Expr,
        then: Vec<Stmt>,
        /// `else if` chains are an `else` block holding a single `If`.
        otherwise: Option<Vec<Stmt>>,
        span: Span,
    },
    Call {
        name: String,
        args: Vec<Expr>,
        span: Span,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "or",
            BinOp::And => "and",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 6,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 4
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Real(f64),
    Bool(bool),
    Side(Side),
    /// Plain or dotted (`my.cash`) name.
    Var(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
}

/// A parsed avatar script.
#[derive(Clone, Debug, PartialEq)]
pub struct AvatarSpec {
    pub name: String,
    pub params: Vec<ParamDecl>,
    pub states: Vec<StateDecl>,
    pub handlers: Vec<Handler>,
}

impl AvatarSpec {
    pub fn handler(&self, kind: HandlerKind) -> Option<&Handler> {
        self.handlers.iter().find(|h| h.kind == kind)
    }
}
