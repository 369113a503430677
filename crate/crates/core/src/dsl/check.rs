//! Name resolution and type checking. A successful check yields a
//! [`Program`]: the spec plus handler bodies compiled to slot-addressed
//! instructions for the interpreter.

use super::ast::*;
use super::error::{DslError, ErrorKind};
use super::parser::is_reserved;
use super::value::Value;
use crate::market::Side;
use std::collections::HashMap;

pub const WAKE_RATE: &str = "wake_rate";
pub const NEWS_SENS: &str = "news_sens";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Slot {
    Param(usize),
    State(usize),
    Local(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum ViewVar {
    LastPrice,
    BestBid,
    BestAsk,
    Mid,
    Time,
    InitialPrice,
    AgentCount,
    Cash,
    Shares,
    Wealth,
    Id,
}

impl ViewVar {
    fn lookup(name: &str) -> Option<(ViewVar, Type)> {
        use ViewVar::*;
        Some(match name {
            "last_price" => (LastPrice, Type::Int),
            "best_bid" => (BestBid, Type::Int),
            "best_ask" => (BestAsk, Type::Int),
            "mid" => (Mid, Type::Real),
            "time" => (Time, Type::Int),
            "initial_price" => (InitialPrice, Type::Int),
            "agent_count" => (AgentCount, Type::Int),
            "my.cash" => (Cash, Type::Int),
            "my.shares" => (Shares, Type::Int),
            "my.wealth" => (Wealth, Type::Int),
            "my.id" => (Id, Type::Int),
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Builtin {
    Abs,
    Min,
    Max,
    Exp,
    Ln,
    Sqrt,
    Floor,
    Ceil,
    Round,
    Idiv,
    IsNil,
    Coalesce,
    Rand,
    RandUniform,
    RandInt,
    RandNormal,
    Sma,
    Std,
    LogReturn,
    Volume,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum ActionCall {
    SubmitLimit,
    SubmitMarket,
    CancelAll,
    Send,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Arith {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Cmp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Clone, Debug)]
pub(crate) enum CExpr {
    Const(Value),
    Load(Slot),
    View(ViewVar),
    Neg(Box<CExpr>),
    Not(Box<CExpr>),
    Arith(Arith, Box<CExpr>, Box<CExpr>),
    Cmp(Cmp, Box<CExpr>, Box<CExpr>),
    And(Box<CExpr>, Box<CExpr>),
    Or(Box<CExpr>, Box<CExpr>),
    Call(Builtin, Vec<CExpr>),
}

#[derive(Clone, Debug)]
pub(crate) enum CStmt {
    Store {
        slot: Slot,
        value: CExpr,
        to_real: bool,
    },
    If {
        cond: CExpr,
        then: Vec<CStmt>,
        otherwise: Vec<CStmt>,
    },
    Act(ActionCall, Vec<CExpr>),
}

#[derive(Clone, Debug)]
pub(crate) struct CHandler {
    pub body: Vec<CStmt>,
    pub n_locals: usize,
}

/// A validated avatar, ready to be instantiated and evaluated.
#[derive(Clone, Debug)]
pub struct Program {
    pub spec: AvatarSpec,
    pub(crate) handlers: HashMap<HandlerKind, CHandler>,
    pub(crate) state_init: Vec<Value>,
    wake_rate_param: Option<usize>,
    news_sens_param: Option<usize>,
}

impl Program {
    pub fn has_handler(&self, kind: HandlerKind) -> bool {
        self.handlers.contains_key(&kind)
    }

    pub fn initial_state(&self) -> Vec<Value> {
        self.state_init.clone()
    }

    /// Wake rate of an instance with these sampled parameters.
    pub fn wake_rate(&self, params: &[Value]) -> f64 {
        self.wake_rate_param
            .and_then(|i| params[i].as_f64())
            .unwrap_or(1.0)
    }

    pub fn news_sens(&self, params: &[Value]) -> f64 {
        self.news_sens_param
            .and_then(|i| params[i].as_f64())
            .unwrap_or(0.0)
    }
}

fn literal_value(l: Literal, ty: Type) -> Value {
    match (l, ty) {
        (Literal::Int(i), Type::Real) => Value::Real(i as f64),
        (Literal::Int(i), _) => Value::Int(i),
        (Literal::Real(r), _) => Value::Real(r),
        (Literal::Bool(b), _) => Value::Bool(b),
    }
}

fn literal_fits(l: Literal, ty: Type) -> bool {
    matches!(
        (l, ty),
        (Literal::Int(_), Type::Int | Type::Real)
            | (Literal::Real(_), Type::Real)
            | (Literal::Bool(_), Type::Bool)
    )
}

/// Validates a parsed spec and compiles its handlers.
pub fn check(spec: AvatarSpec) -> Result<Program, DslError> {
    let mut globals: HashMap<String, (Slot, Type)> = HashMap::new();
    let mut wake_rate_param = None;
    let mut news_sens_param = None;

    for (i, p) in spec.params.iter().enumerate() {
        declare_global(&globals, &p.name, p.span)?;
        p.dist.validate(p.ty).map_err(|m| {
            DslError::new(
                ErrorKind::Distribution,
                p.span,
                format!("param `{}`: {m}", p.name),
            )
        })?;
        if p.name == WAKE_RATE || p.name == NEWS_SENS {
            if p.ty != Type::Real {
                return Err(DslError::type_error(
                    p.span,
                    format!("reserved parameter `{}` must be real", p.name),
                ));
            }
            if p.name == WAKE_RATE {
                let (lo, _) = p.dist.bounds();
                if lo <= 0.0 {
                    return Err(DslError::new(
                        ErrorKind::Distribution,
                        p.span,
                        "wake_rate must be strictly positive over its whole support",
                    ));
                }
                wake_rate_param = Some(i);
            } else {
                news_sens_param = Some(i);
            }
        }
        globals.insert(p.name.clone(), (Slot::Param(i), p.ty));
    }

    let mut state_init = Vec::new();
    for (i, s) in spec.states.iter().enumerate() {
        declare_global(&globals, &s.name, s.span)?;
        if s.name == WAKE_RATE || s.name == NEWS_SENS {
            return Err(DslError::type_error(
                s.span,
                format!("`{}` is a reserved parameter name", s.name),
            ));
        }
        if !literal_fits(s.init, s.ty) {
            return Err(DslError::type_error(
                s.span,
                format!("initial value of `{}` is not a {}", s.name, s.ty.name()),
            ));
        }
        state_init.push(literal_value(s.init, s.ty));
        globals.insert(s.name.clone(), (Slot::State(i), s.ty));
    }

    let mut handlers = HashMap::new();
    for h in &spec.handlers {
        if handlers.contains_key(&h.kind) {
            return Err(DslError::type_error(
                h.span,
                format!("duplicate `on {}` handler", h.kind.keyword()),
            ));
        }
        let mut cx = HandlerCx {
            globals: &globals,
            scopes: vec![Vec::new()],
            n_locals: 0,
        };
        if let Some(p) = &h.param {
            if globals.contains_key(p) || ViewVar::lookup(p).is_some() {
                return Err(DslError::type_error(
                    h.span,
                    format!("handler parameter `{p}` shadows a declaration"),
                ));
            }
            cx.bind(p.clone(), Type::Real);
        }
        let body = cx.block(&h.body)?;
        handlers.insert(
            h.kind,
            CHandler {
                body,
                n_locals: cx.n_locals,
            },
        );
    }

    Ok(Program {
        spec,
        handlers,
        state_init,
        wake_rate_param,
        news_sens_param,
    })
}

fn declare_global(
    globals: &HashMap<String, (Slot, Type)>,
    name: &str,
    span: Span,
) -> Result<(), DslError> {
    if globals.contains_key(name) {
        return Err(DslError::type_error(
            span,
            format!("`{name}` declared twice"),
        ));
    }
    if ViewVar::lookup(name).is_some() || builtin(name).is_some() || action(name).is_some() {
        return Err(DslError::type_error(
            span,
            format!("`{name}` is a built-in name"),
        ));
    }
    if is_reserved(name) {
        return Err(DslError::type_error(span, format!("`{name}` is reserved")));
    }
    Ok(())
}

fn builtin(name: &str) -> Option<Builtin> {
    use Builtin::*;
    Some(match name {
        "abs" => Abs,
        "min" => Min,
        "max" => Max,
        "exp" => Exp,
        "ln" => Ln,
        "sqrt" => Sqrt,
        "floor" => Floor,
        "ceil" => Ceil,
        "round" => Round,
        "idiv" => Idiv,
        "is_nil" => IsNil,
        "coalesce" => Coalesce,
        "rand" => Rand,
        "rand_uniform" => RandUniform,
        "rand_int" => RandInt,
        "rand_normal" => RandNormal,
        "sma" => Sma,
        "std" => Std,
        "log_return" => LogReturn,
        "volume" => Volume,
        _ => return None,
    })
}

fn action(name: &str) -> Option<ActionCall> {
    Some(match name {
        "submit_limit" => ActionCall::SubmitLimit,
        "submit_market" => ActionCall::SubmitMarket,
        "cancel_all" => ActionCall::CancelAll,
        "send" => ActionCall::Send,
        _ => return None,
    })
}

struct HandlerCx<'a> {
    globals: &'a HashMap<String, (Slot, Type)>,
    scopes: Vec<Vec<(String, usize, Type)>>,
    n_locals: usize,
}

fn numeric_join(a: Type, b: Type) -> Type {
    if a == Type::Int && b == Type::Int {
        Type::Int
    } else {
        Type::Real
    }
}

impl HandlerCx<'_> {
    fn bind(&mut self, name: String, ty: Type) -> usize {
        let idx = self.n_locals;
        self.n_locals += 1;
        self.scopes.last_mut().expect("scope").push((name, idx, ty));
        idx
    }

    fn local(&self, name: &str) -> Option<(usize, Type)> {
        self.scopes
            .iter()
            .rev()
            .flat_map(|s| s.iter().rev())
            .find(|(n, _, _)| n == name)
            .map(|&(_, i, t)| (i, t))
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<Vec<CStmt>, DslError> {
        self.scopes.push(Vec::new());
        let out = stmts.iter().map(|s| self.stmt(s)).collect();
        self.scopes.pop();
        out
    }

    fn stmt(&mut self, s: &Stmt) -> Result<CStmt, DslError> {
        match s {
            Stmt::Let { name, value, span } => {
                if self.local(name).is_some()
                    || self.globals.contains_key(name)
                    || ViewVar::lookup(name).is_some()
                    || builtin(name).is_some()
                    || name == WAKE_RATE
                    || name == NEWS_SENS
                {
                    return Err(DslError::type_error(
                        *span,
                        format!("`{name}` is already defined"),
                    ));
                }
                let (value, ty) = self.expr(value)?;
                let idx = self.bind(name.clone(), ty);
                Ok(CStmt::Store {
                    slot: Slot::Local(idx),
                    value,
                    to_real: false,
                })
            }
            Stmt::Assign { name, value, span } => {
                let (slot, target) = if let Some((i, t)) = self.local(name) {
                    (Slot::Local(i), t)
                } else {
                    match self.globals.get(name) {
                        Some(&(slot @ Slot::State(_), t)) => (slot, t),
                        Some(_) => {
                            return Err(DslError::type_error(
                                *span,
                                format!("parameter `{name}` is read-only"),
                            ))
                        }
                        None if ViewVar::lookup(name).is_some() => {
                            return Err(DslError::type_error(
                                *span,
                                format!("market variable `{name}` is read-only"),
                            ))
                        }
                        None => {
                            return Err(DslError::type_error(
                                *span,
                                format!("undeclared identifier `{name}`"),
                            ))
                        }
                    }
                };
                let (value, ty) = self.expr(value)?;
                let to_real = target == Type::Real && ty == Type::Int;
                if ty != target && !to_real {
                    return Err(DslError::type_error(
                        *span,
                        format!(
                            "cannot assign {} value to `{name}` of type {}",
                            ty.name(),
                            target.name()
                        ),
                    ));
                }
                Ok(CStmt::Store {
                    slot,
                    value,
                    to_real,
                })
            }
            Stmt::If {
                cond,
                then,
                otherwise,
                span,
            } => {
                let (cond, ty) = self.expr(cond)?;
                if ty != Type::Bool {
                    return Err(DslError::type_error(
                        *span,
                        format!("`if` condition must be bool, found {}", ty.name()),
                    ));
                }
                let then = self.block(then)?;
                let otherwise = match otherwise {
                    Some(b) => self.block(b)?,
                    None => Vec::new(),
                };
                Ok(CStmt::If {
                    cond,
                    then,
                    otherwise,
                })
            }
            Stmt::Call { name, args, span } => {
                let Some(act) = action(name) else {
                    let msg = if builtin(name).is_some() {
                        format!("result of `{name}` is unused; only actions can be statements")
                    } else {
                        format!("unknown action `{name}`")
                    };
                    return Err(DslError::type_error(*span, msg));
                };
                let expected: &[Type] = match act {
                    ActionCall::SubmitLimit => &[Type::Side, Type::Int, Type::Int],
                    ActionCall::SubmitMarket => &[Type::Side, Type::Int],
                    ActionCall::CancelAll => &[],
                    ActionCall::Send => &[Type::Int, Type::Real],
                };
                let args = self.args(name, args, expected, *span)?;
                Ok(CStmt::Act(act, args))
            }
        }
    }

    /// Checks arity and argument types; numeric parameters accept either
    /// int or real arguments.
    fn args(
        &mut self,
        name: &str,
        args: &[Expr],
        expected: &[Type],
        span: Span,
    ) -> Result<Vec<CExpr>, DslError> {
        if args.len() != expected.len() {
            return Err(DslError::type_error(
                span,
                format!(
                    "`{name}` takes {} argument(s), got {}",
                    expected.len(),
                    args.len()
                ),
            ));
        }
        let mut out = Vec::with_capacity(args.len());
        for (a, &want) in args.iter().zip(expected) {
            let (e, ty) = self.expr(a)?;
            let ok = if want.is_numeric() {
                ty.is_numeric()
            } else {
                ty == want
            };
            if !ok {
                return Err(DslError::type_error(
                    a.span,
                    format!(
                        "`{name}` expects {} argument, found {}",
                        want.name(),
                        ty.name()
                    ),
                ));
            }
            out.push(e);
        }
        Ok(out)
    }

    fn expr(&mut self, e: &Expr) -> Result<(CExpr, Type), DslError> {
        Ok(match &e.kind {
            ExprKind::Int(i) => (CExpr::Const(Value::Int(*i)), Type::Int),
            ExprKind::Real(r) => (CExpr::Const(Value::Real(*r)), Type::Real),
            ExprKind::Bool(b) => (CExpr::Const(Value::Bool(*b)), Type::Bool),
            ExprKind::Side(s) => (CExpr::Const(Value::Side(*s)), Type::Side),
            ExprKind::Var(name) => {
                if let Some((i, t)) = self.local(name) {
                    (CExpr::Load(Slot::Local(i)), t)
                } else if let Some(&(slot, t)) = self.globals.get(name) {
                    (CExpr::Load(slot), t)
                } else if let Some((v, t)) = ViewVar::lookup(name) {
                    (CExpr::View(v), t)
                } else if name == WAKE_RATE {
                    (CExpr::Const(Value::Real(1.0)), Type::Real)
                } else if name == NEWS_SENS {
                    (CExpr::Const(Value::Real(0.0)), Type::Real)
                } else {
                    return Err(DslError::type_error(
                        e.span,
                        format!("undeclared identifier `{name}`"),
                    ));
                }
            }
            ExprKind::Unary(UnaryOp::Neg, inner) => {
                let (c, t) = self.expr(inner)?;
                if !t.is_numeric() {
                    return Err(DslError::type_error(
                        e.span,
                        format!("cannot negate {}", t.name()),
                    ));
                }
                (CExpr::Neg(Box::new(c)), t)
            }
            ExprKind::Unary(UnaryOp::Not, inner) => {
                let (c, t) = self.expr(inner)?;
                if t != Type::Bool {
                    return Err(DslError::type_error(
                        e.span,
                        format!("`not` needs bool, found {}", t.name()),
                    ));
                }
                (CExpr::Not(Box::new(c)), Type::Bool)
            }
            ExprKind::Binary(op, l, r) => {
                let (lc, lt) = self.expr(l)?;
                let (rc, rt) = self.expr(r)?;
                let mismatch = || {
                    DslError::type_error(
                        e.span,
                        format!(
                            "operator `{}` cannot combine {} and {}",
                            op.symbol(),
                            lt.name(),
                            rt.name()
                        ),
                    )
                };
                let (lb, rb) = (Box::new(lc), Box::new(rc));
                match op {
                    BinOp::And | BinOp::Or => {
                        if lt != Type::Bool || rt != Type::Bool {
                            return Err(mismatch());
                        }
                        let c = if *op == BinOp::And {
                            CExpr::And(lb, rb)
                        } else {
                            CExpr::Or(lb, rb)
                        };
                        (c, Type::Bool)
                    }
                    BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Rem => {
                        if !lt.is_numeric() || !rt.is_numeric() {
                            return Err(mismatch());
                        }
                        let (a, ty) = match op {
                            BinOp::Add => (Arith::Add, numeric_join(lt, rt)),
                            BinOp::Sub => (Arith::Sub, numeric_join(lt, rt)),
                            BinOp::Mul => (Arith::Mul, numeric_join(lt, rt)),
                            BinOp::Div => (Arith::Div, Type::Real),
                            _ => {
                                if lt != Type::Int || rt != Type::Int {
                                    return Err(mismatch());
                                }
                                (Arith::Rem, Type::Int)
                            }
                        };
                        (CExpr::Arith(a, lb, rb), ty)
                    }
                    _ => {
                        let comparable = (lt.is_numeric() && rt.is_numeric())
                            || (lt == rt && matches!(op, BinOp::Eq | BinOp::Ne));
                        if !comparable {
                            return Err(mismatch());
                        }
                        let c = match op {
                            BinOp::Eq => Cmp::Eq,
                            BinOp::Ne => Cmp::Ne,
                            BinOp::Lt => Cmp::Lt,
                            BinOp::Le => Cmp::Le,
                            BinOp::Gt => Cmp::Gt,
                            _ => Cmp::Ge,
                        };
                        (CExpr::Cmp(c, lb, rb), Type::Bool)
                    }
                }
            }
            ExprKind::Call(name, args) => self.call(name, args, e.span)?,
        })
    }

    fn call(&mut self, name: &str, args: &[Expr], span: Span) -> Result<(CExpr, Type), DslError> {
        let Some(b) = builtin(name) else {
            let msg = if action(name).is_some() {
                format!("action `{name}` cannot be used as a value")
            } else {
                format!("unknown function `{name}`")
            };
            return Err(DslError::type_error(span, msg));
        };
        use Builtin::*;
        use Type::{Int, Real};
        let sig: &[Type] = match b {
            Abs | Exp | Ln | Sqrt | Floor | Ceil | Round | IsNil => &[Real],
            Min | Max | Coalesce | RandUniform | RandNormal => &[Real, Real],
            Idiv | RandInt => &[Int, Int],
            Rand => &[],
            Sma | Std | LogReturn | Volume => &[Int],
        };
        // Int-only slots are checked strictly; `Real` slots take any number.
        let typed: Vec<(CExpr, Type)> = {
            if args.len() != sig.len() {
                return Err(DslError::type_error(
                    span,
                    format!(
                        "`{name}` takes {} argument(s), got {}",
                        sig.len(),
                        args.len()
                    ),
                ));
            }
            let mut v = Vec::new();
            for (a, &want) in args.iter().zip(sig) {
                let (c, t) = self.expr(a)?;
                let ok = match want {
                    Int => t == Int,
                    _ => t.is_numeric(),
                };
                if !ok {
                    return Err(DslError::type_error(
                        a.span,
                        format!(
                            "`{name}` expects {} argument, found {}",
                            want.name(),
                            t.name()
                        ),
                    ));
                }
                v.push((c, t));
            }
            v
        };
        let ret = match b {
            Abs => typed[0].1,
            Min | Max | Coalesce => numeric_join(typed[0].1, typed[1].1),
            Exp | Ln | Sqrt | Rand | RandUniform | RandNormal | Sma | Std | LogReturn => Real,
            Floor | Ceil | Round | Idiv | RandInt | Volume => Int,
            IsNil => Type::Bool,
        };
        Ok((
            CExpr::Call(b, typed.into_iter().map(|(c, _)| c).collect()),
            ret,
        ))
    }
}

/// Side literal helper for the interpreter.
pub(crate) fn side_of(v: Value) -> Option<Side> {
    match v {
        Value::Side(s) => Some(s),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::super::parser::parse_syntax;
    use super::*;

    fn check_src(src: &str) -> Result<Program, DslError> {
        check(parse_syntax(src).unwrap())
    }

    #[test]
    fn undeclared_identifier_named() {
        let e =
            check_src(r#"avatar "x" { on wake { if foo > 1 { cancel_all(); } } }"#).unwrap_err();
        assert_eq!(e.kind, ErrorKind::Type);
        assert!(e.message.contains("`foo`"), "{}", e.message);
    }

    #[test]
    fn type_mismatches() {
        for src in [
            r#"avatar "x" { on wake { if 1 { cancel_all(); } } }"#,
            r#"avatar "x" { state s: int = 0; on wake { s = 1.5; } }"#,
            r#"avatar "x" { on wake { let a = buy + 1; } }"#,
            r#"avatar "x" { on wake { submit_market(1, 2); } }"#,
            r#"avatar "x" { param q: int ~ constant(1); on wake { q = 2; } }"#,
            r#"avatar "x" { on wake { last_price = 2; } }"#,
            r#"avatar "x" { on wake { let a = 1.5 % 2; } }"#,
            r#"avatar "x" { on wake { let a = idiv(1.0, 2); } }"#,
            r#"avatar "x" { on wake { sma(3); } }"#,
            r#"avatar "x" { on wake { let a = 1; let a = 2; } }"#,
            r#"avatar "x" { on wake { } on wake { } }"#,
        ] {
            assert!(check_src(src).is_err(), "accepted: {src}");
        }
    }

    #[test]
    fn widening_and_scoping() {
        let p = check_src(
            r#"avatar "x" {
                state s: real = 0;
                on wake { let a = 1; s = a; if true { let b = 2; s = b; } if true { let b = 3.0; s = b; } }
            }"#,
        )
        .unwrap();
        assert_eq!(p.state_init, vec![Value::Real(0.0)]);
        assert_eq!(p.handlers[&HandlerKind::Wake].n_locals, 3);
    }

    #[test]
    fn bad_distribution_support() {
        let e = check_src(r#"avatar "x" { param a: real ~ uniform(2, 1); }"#).unwrap_err();
        assert_eq!(e.kind, ErrorKind::Distribution);
        let e = check_src(r#"avatar "x" { param wake_rate: real ~ uniform(0, 1); }"#).unwrap_err();
        assert_eq!(e.kind, ErrorKind::Distribution);
    }

    #[test]
    fn reserved_parameters_default() {
        let p = check_src(r#"avatar "x" { on wake { let r = wake_rate + news_sens; } }"#).unwrap();
        assert_eq!(p.wake_rate(&[]), 1.0);
        assert_eq!(p.news_sens(&[]), 0.0);
    }
}
