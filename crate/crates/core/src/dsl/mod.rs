//! The avatar scripting language.
//!
//! ```text
//! avatar "momentum" {
//!     param lookback: int ~ constant(10);
//!     param threshold: real ~ uniform(0.001, 0.01);
//!
//!     on wake {
//!         let r = log_return(lookback);
//!         if r > threshold { submit_limit(buy, best_ask, 5); }
//!     }
//! }
//! ```
//!
//! See `docs/dsl.md` for the grammar.

pub mod ast;
mod check;
mod error;
mod interp;
mod lexer;
mod parser;
mod printer;
mod sampling;
mod value;

pub use ast::{AvatarSpec, HandlerKind, Type};
pub use check::{check, Program, NEWS_SENS, WAKE_RATE};
pub use error::{DslError, ErrorKind};
pub use interp::{evaluate, AgentInstance, ScriptBehavior};
pub use parser::parse_syntax;
pub use printer::print;
pub use sampling::{sample_family, sample_params, Distribution};
pub use value::Value;

use crate::market::AgentId;

/// Parses and type-checks a script.
pub fn parse(src: &str) -> Result<Program, DslError> {
    check(parse_syntax(src)?)
}

/// Samples `n` agents from a checked program. Ids are assigned
/// consecutively from `first_id`.
pub fn instantiate_family(
    program: &Program,
    n: usize,
    family_seed: u64,
    family_id: u32,
    first_id: AgentId,
) -> Vec<AgentInstance> {
    sample_family(&program.spec.params, n, family_seed)
        .into_iter()
        .enumerate()
        .map(|(i, params)| AgentInstance::new(program, first_id + i as AgentId, family_id, params))
        .collect()
}
