//! Parameter distributions and family instantiation.

use super::ast::{Literal, ParamDecl, Type};
use super::value::Value;
use crate::agent::AgentRng;
use crate::kernel::rng::derive_seed;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Sampling law of an avatar parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Constant(Literal),
    /// Continuous uniform on `[a, b)`.
    Uniform(f64, f64),
    /// Integer uniform on `[a, b]`.
    UniformInt(i64, i64),
    Normal(f64, f64),
    LogNormal(f64, f64),
}

impl Distribution {
    pub fn keyword(&self) -> &'static str {
        match self {
            Distribution::Constant(_) => "constant",
            Distribution::Uniform(..) => "uniform",
            Distribution::UniformInt(..) => "uniform_int",
            Distribution::Normal(..) => "normal",
            Distribution::LogNormal(..) => "lognormal",
        }
    }

    /// Checks the distribution's own parameters and its compatibility
    /// with the declared type. Returns a human-readable reason on failure.
    pub fn validate(&self, ty: Type) -> Result<(), String> {
        match (self, ty) {
            (Distribution::Constant(Literal::Bool(_)), Type::Bool) => Ok(()),
            (Distribution::Constant(Literal::Int(_)), Type::Int | Type::Real) => Ok(()),
            (Distribution::Constant(Literal::Real(v)), Type::Real) if v.is_finite() => Ok(()),
            (Distribution::Constant(_), _) => {
                Err(format!("constant value does not fit type {}", ty.name()))
            }
            (Distribution::UniformInt(a, b), Type::Int | Type::Real) => {
                if a <= b {
                    Ok(())
                } else {
                    Err(format!("uniform_int({a}, {b}) needs a <= b"))
                }
            }
            (Distribution::Uniform(a, b), Type::Real) => {
                if a.is_finite() && b.is_finite() && a <= b {
                    Ok(())
                } else {
                    Err(format!("uniform({a}, {b}) needs finite a <= b"))
                }
            }
            (Distribution::Normal(m, s) | Distribution::LogNormal(m, s), Type::Real) => {
                if m.is_finite() && s.is_finite() && *s >= 0.0 {
                    Ok(())
                } else {
                    Err(format!("{}({m}, {s}) needs sigma >= 0", self.keyword()))
                }
            }
            (_, Type::Int) => Err(format!(
                "int parameters take constant or uniform_int, not {}",
                self.keyword()
            )),
            (_, t) => Err(format!(
                "{} cannot produce {} values",
                self.keyword(),
                t.name()
            )),
        }
    }

    /// Closed hull of the support, when bounded.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Distribution::Constant(l) => {
                let v = l.as_f64().unwrap_or(0.0);
                (v, v)
            }
            Distribution::Uniform(a, b) => (a, b),
            Distribution::UniformInt(a, b) => (a as f64, b as f64),
            Distribution::Normal(..) => (f64::NEG_INFINITY, f64::INFINITY),
            Distribution::LogNormal(..) => (0.0, f64::INFINITY),
        }
    }

    pub fn sample(&self, ty: Type, rng: &mut AgentRng) -> Value {
        let v = match *self {
            Distribution::Constant(Literal::Bool(b)) => return Value::Bool(b),
            Distribution::Constant(Literal::Int(i)) => Value::Int(i),
            Distribution::Constant(Literal::Real(r)) => Value::Real(r),
            Distribution::Uniform(a, b) => Value::Real(rng.uniform(a, b)),
            Distribution::UniformInt(a, b) => Value::Int(rng.uniform_int(a, b)),
            Distribution::Normal(m, s) => Value::Real(rng.normal(m, s)),
            Distribution::LogNormal(m, s) => Value::Real(rng.normal(m, s).exp()),
        };
        match (ty, v) {
            (Type::Real, Value::Int(i)) => Value::Real(i as f64),
            _ => v,
        }
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Constant(l) => write!(f, "constant({})", fmt_literal(*l)),
            Distribution::Uniform(a, b) => write!(f, "uniform({a:?}, {b:?})"),
            Distribution::UniformInt(a, b) => write!(f, "uniform_int({a}, {b})"),
            Distribution::Normal(m, s) => write!(f, "normal({m:?}, {s:?})"),
            Distribution::LogNormal(m, s) => write!(f, "lognormal({m:?}, {s:?})"),
        }
    }
}

pub(crate) fn fmt_literal(l: Literal) -> String {
    match l {
        Literal::Bool(b) => b.to_string(),
        Literal::Int(i) => i.to_string(),
        Literal::Real(r) => format!("{r:?}"),
    }
}

/// Draws one value per declaration, in declaration order.
pub fn sample_params(decls: &[ParamDecl], rng: &mut AgentRng) -> Vec<Value> {
    decls.iter().map(|d| d.dist.sample(d.ty, rng)).collect()
}

/// Parameter vectors for `n` family members. Member `i` draws from its
/// own stream derived from `(family_seed, i)`, so a member's parameters do
/// not depend on the family size.
pub fn sample_family(decls: &[ParamDecl], n: usize, family_seed: u64) -> Vec<Vec<Value>> {
    (0..n)
        .map(|i| {
            let mut rng = AgentRng::from_seed(derive_seed(family_seed, "member", i as u64));
            sample_params(decls, &mut rng)
        })
        .collect()
}
