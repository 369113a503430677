use crate::market::Side;
use std::fmt;

/// Runtime value of the avatar language. `Nil` stands for a market
/// quantity that is not available yet (e.g. a windowed statistic over too
/// little history).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value {
    Int(i64),
    Real(f64),
    Bool(bool),
    Side(Side),
    Nil,
}

impl Value {
    pub fn from_opt_int(v: Option<i64>) -> Value {
        v.map_or(Value::Nil, Value::Int)
    }

    pub fn from_opt_real(v: Option<f64>) -> Value {
        v.map_or(Value::Nil, Value::Real)
    }

    pub fn as_f64(self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(i as f64),
            Value::Real(r) => Some(r),
            _ => None,
        }
    }

    pub fn as_i64(self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(i),
            _ => None,
        }
    }

    pub fn is_nil(self) -> bool {
        matches!(self, Value::Nil)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r:?}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Side(s) => write!(f, "{s}"),
            Value::Nil => f.write_str("nil"),
        }
    }
}
