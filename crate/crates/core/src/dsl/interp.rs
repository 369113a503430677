//! Handler evaluation.

use super::ast::HandlerKind;
use super::check::{
    side_of, ActionCall, Arith, Builtin, CExpr, CStmt, Cmp, Program, Slot, ViewVar,
};
use super::value::Value;
use crate::agent::{Action, AgentEvent, AgentRng, Behavior, EvalError, EventKind, MarketView};
use crate::market::AgentId;
use std::sync::Arc;

/// One sampled realization of an avatar.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentInstance {
    pub agent_id: AgentId,
    pub family_id: u32,
    pub params: Vec<Value>,
    pub state: Vec<Value>,
    pub wake_rate: f64,
    pub news_sens: f64,
}

impl AgentInstance {
    pub fn new(program: &Program, agent_id: AgentId, family_id: u32, params: Vec<Value>) -> Self {
        AgentInstance {
            agent_id,
            family_id,
            wake_rate: program.wake_rate(&params),
            news_sens: program.news_sens(&params),
            state: program.initial_state(),
            params,
        }
    }

    pub fn param(&self, program: &Program, name: &str) -> Option<Value> {
        let i = program.spec.params.iter().position(|p| p.name == name)?;
        Some(self.params[i])
    }

    pub fn state_var(&self, program: &Program, name: &str) -> Option<Value> {
        let i = program.spec.states.iter().position(|s| s.name == name)?;
        Some(self.state[i])
    }
}

fn handler_kind(event: &AgentEvent) -> HandlerKind {
    match event {
        AgentEvent::Wake => HandlerKind::Wake,
        AgentEvent::Trade => HandlerKind::Trade,
        AgentEvent::News(_) => HandlerKind::News,
        AgentEvent::Message { .. } => HandlerKind::Message,
    }
}

/// Runs the handler matching `event`. On error the instance's state is
/// restored and no actions are returned.
pub fn evaluate(
    program: &Program,
    instance: &mut AgentInstance,
    event: &AgentEvent,
    view: &MarketView<'_>,
    rng: &mut AgentRng,
) -> Result<Vec<Action>, EvalError> {
    let Some(handler) = program.handlers.get(&handler_kind(event)) else {
        return Ok(Vec::new());
    };
    let mut locals = vec![Value::Nil; handler.n_locals];
    match *event {
        AgentEvent::News(v) | AgentEvent::Message { value: v, .. } => {
            if let Some(first) = locals.first_mut() {
                *first = Value::Real(v);
            }
        }
        _ => {}
    }
    let saved = instance.state.clone();
    let mut frame = Frame {
        params: &instance.params,
        state: &mut instance.state,
        locals,
        view,
        rng,
        actions: Vec::new(),
    };
    match frame.block(&handler.body) {
        Ok(()) => Ok(frame.actions),
        Err(e) => {
            instance.state = saved;
            Err(e)
        }
    }
}

struct Frame<'a, 'v> {
    params: &'a [Value],
    state: &'a mut Vec<Value>,
    locals: Vec<Value>,
    view: &'a MarketView<'v>,
    rng: &'a mut AgentRng,
    actions: Vec<Action>,
}

/// Action-boundary coercion: truncate toward zero; nil or non-finite
/// values make the action drop.
fn to_int(v: Value) -> Option<i64> {
    match v {
        Value::Int(i) => Some(i),
        Value::Real(r) if r.is_finite() => Some(r.trunc() as i64),
        _ => None,
    }
}

fn num(v: Value) -> Result<f64, EvalError> {
    match v {
        Value::Nil => Err(EvalError::NilArithmetic),
        other => other.as_f64().ok_or(EvalError::NilArithmetic),
    }
}

fn int(v: Value) -> Result<i64, EvalError> {
    match v {
        Value::Int(i) => Ok(i),
        _ => Err(EvalError::NilArithmetic),
    }
}

fn real_to_int(r: f64) -> Result<i64, EvalError> {
    if r.is_finite() && r.abs() < 9.0e18 {
        Ok(r as i64)
    } else {
        Err(EvalError::Domain(format!("{r} does not fit an int")))
    }
}

impl Frame<'_, '_> {
    fn load(&self, slot: Slot) -> Value {
        match slot {
            Slot::Param(i) => self.params[i],
            Slot::State(i) => self.state[i],
            Slot::Local(i) => self.locals[i],
        }
    }

    fn store(&mut self, slot: Slot, v: Value) {
        match slot {
            Slot::Param(_) => unreachable!("params are read-only after checking"),
            Slot::State(i) => self.state[i] = v,
            Slot::Local(i) => self.locals[i] = v,
        }
    }

    fn block(&mut self, stmts: &[CStmt]) -> Result<(), EvalError> {
        for s in stmts {
            match s {
                CStmt::Store {
                    slot,
                    value,
                    to_real,
                } => {
                    let mut v = self.eval(value)?;
                    if *to_real {
                        if let Value::Int(i) = v {
                            v = Value::Real(i as f64);
                        }
                    }
                    self.store(*slot, v);
                }
                CStmt::If {
                    cond,
                    then,
                    otherwise,
                } => {
                    if self.eval(cond)? == Value::Bool(true) {
                        self.block(then)?;
                    } else {
                        self.block(otherwise)?;
                    }
                }
                CStmt::Act(act, args) => self.act(*act, args)?,
            }
        }
        Ok(())
    }

    fn act(&mut self, act: ActionCall, args: &[CExpr]) -> Result<(), EvalError> {
        let vals = args
            .iter()
            .map(|a| self.eval(a))
            .collect::<Result<Vec<_>, _>>()?;
        let action = match act {
            ActionCall::SubmitLimit => {
                let side = side_of(vals[0]).expect("checked side");
                match (to_int(vals[1]), to_int(vals[2])) {
                    (Some(price), Some(qty)) if qty >= 1 => {
                        Some(Action::Limit { side, price, qty })
                    }
                    _ => None,
                }
            }
            ActionCall::SubmitMarket => {
                let side = side_of(vals[0]).expect("checked side");
                match to_int(vals[1]) {
                    Some(qty) if qty >= 1 => Some(Action::Market { side, qty }),
                    _ => None,
                }
            }
            ActionCall::CancelAll => Some(Action::CancelAll),
            ActionCall::Send => match (to_int(vals[0]), vals[1].as_f64()) {
                (Some(to), Some(value)) => Some(Action::Send { to, value }),
                _ => None,
            },
        };
        self.actions.extend(action);
        Ok(())
    }

    fn view_var(&self, v: ViewVar) -> Value {
        let view = self.view;
        match v {
            ViewVar::LastPrice => Value::from_opt_int(view.last_price()),
            ViewVar::BestBid => Value::from_opt_int(view.best_bid),
            ViewVar::BestAsk => Value::from_opt_int(view.best_ask),
            ViewVar::Mid => Value::from_opt_real(view.mid()),
            ViewVar::Time => Value::Int(view.time as i64),
            ViewVar::InitialPrice => Value::Int(view.initial_price),
            ViewVar::AgentCount => Value::Int(view.agent_count as i64),
            ViewVar::Cash => Value::Int(view.cash),
            ViewVar::Shares => Value::Int(view.shares),
            ViewVar::Wealth => Value::Int(view.wealth()),
            ViewVar::Id => Value::Int(view.agent_id as i64),
        }
    }

    fn eval(&mut self, e: &CExpr) -> Result<Value, EvalError> {
        Ok(match e {
            CExpr::Const(v) => *v,
            CExpr::Load(slot) => self.load(*slot),
            CExpr::View(v) => self.view_var(*v),
            CExpr::Neg(inner) => match self.eval(inner)? {
                Value::Int(i) => Value::Int(i.checked_neg().ok_or(EvalError::Overflow)?),
                Value::Real(r) => Value::Real(-r),
                _ => return Err(EvalError::NilArithmetic),
            },
            CExpr::Not(inner) => Value::Bool(self.eval(inner)? != Value::Bool(true)),
            CExpr::And(l, r) => Value::Bool(
                self.eval(l)? == Value::Bool(true) && self.eval(r)? == Value::Bool(true),
            ),
            CExpr::Or(l, r) => Value::Bool(
                self.eval(l)? == Value::Bool(true) || self.eval(r)? == Value::Bool(true),
            ),
            CExpr::Arith(op, l, r) => {
                let (a, b) = (self.eval(l)?, self.eval(r)?);
                arith(*op, a, b)?
            }
            CExpr::Cmp(op, l, r) => {
                let (a, b) = (self.eval(l)?, self.eval(r)?);
                Value::Bool(compare(*op, a, b))
            }
            CExpr::Call(b, args) => self.call(*b, args)?,
        })
    }

    fn call(&mut self, b: Builtin, args: &[CExpr]) -> Result<Value, EvalError> {
        let mut vals = [Value::Nil; 2];
        for (slot, a) in vals.iter_mut().zip(args) {
            *slot = self.eval(a)?;
        }
        let [a, c] = vals;
        let h = self.view.history;
        Ok(match b {
            Builtin::IsNil => Value::Bool(a.is_nil()),
            Builtin::Coalesce => match (a, c) {
                (Value::Nil, other) => other,
                (v, _) => {
                    // keep the joined static type: int only if both are int
                    if matches!(c, Value::Real(_)) {
                        Value::Real(num(v)?)
                    } else {
                        v
                    }
                }
            },
            Builtin::Abs => match a {
                Value::Int(i) => Value::Int(i.checked_abs().ok_or(EvalError::Overflow)?),
                v => Value::Real(num(v)?.abs()),
            },
            Builtin::Min | Builtin::Max => match (a, c) {
                (Value::Int(x), Value::Int(y)) => Value::Int(if b == Builtin::Min {
                    x.min(y)
                } else {
                    x.max(y)
                }),
                (x, y) => {
                    let (x, y) = (num(x)?, num(y)?);
                    Value::Real(if b == Builtin::Min {
                        x.min(y)
                    } else {
                        x.max(y)
                    })
                }
            },
            Builtin::Exp => Value::Real(num(a)?.exp()),
            Builtin::Ln => {
                let x = num(a)?;
                if x <= 0.0 {
                    return Err(EvalError::Domain(format!("ln({x})")));
                }
                Value::Real(x.ln())
            }
            Builtin::Sqrt => {
                let x = num(a)?;
                if x < 0.0 {
                    return Err(EvalError::Domain(format!("sqrt({x})")));
                }
                Value::Real(x.sqrt())
            }
            Builtin::Floor => match a {
                Value::Int(i) => Value::Int(i),
                v => Value::Int(real_to_int(num(v)?.floor())?),
            },
            Builtin::Ceil => match a {
                Value::Int(i) => Value::Int(i),
                v => Value::Int(real_to_int(num(v)?.ceil())?),
            },
            Builtin::Round => match a {
                Value::Int(i) => Value::Int(i),
                v => Value::Int(real_to_int(num(v)?.round())?),
            },
            Builtin::Idiv => {
                let (x, y) = (int(a)?, int(c)?);
                if y == 0 {
                    return Err(EvalError::DivisionByZero);
                }
                Value::Int(x.div_euclid(y))
            }
            Builtin::Rand => Value::Real(self.rng.uniform01()),
            Builtin::RandUniform => Value::Real(self.rng.uniform(num(a)?, num(c)?)),
            Builtin::RandInt => Value::Int(self.rng.uniform_int(int(a)?, int(c)?)),
            Builtin::RandNormal => Value::Real(self.rng.normal(num(a)?, num(c)?)),
            Builtin::Sma => Value::from_opt_real(h.sma(int(a)?)),
            Builtin::Std => Value::from_opt_real(h.std(int(a)?)),
            Builtin::LogReturn => Value::from_opt_real(h.log_return(int(a)?)),
            Builtin::Volume => Value::from_opt_int(h.volume(int(a)?)),
        })
    }
}

fn arith(op: Arith, a: Value, b: Value) -> Result<Value, EvalError> {
    if a.is_nil() || b.is_nil() {
        return Err(EvalError::NilArithmetic);
    }
    if let (Value::Int(x), Value::Int(y)) = (a, b) {
        let r = match op {
            Arith::Add => x.checked_add(y),
            Arith::Sub => x.checked_sub(y),
            Arith::Mul => x.checked_mul(y),
            Arith::Rem => {
                if y == 0 {
                    return Err(EvalError::DivisionByZero);
                }
                Some(x.rem_euclid(y))
            }
            Arith::Div => {
                if y == 0 {
                    return Err(EvalError::DivisionByZero);
                }
                return Ok(Value::Real(x as f64 / y as f64));
            }
        };
        return r.map(Value::Int).ok_or(EvalError::Overflow);
    }
    let (x, y) = (num(a)?, num(b)?);
    Ok(Value::Real(match op {
        Arith::Add => x + y,
        Arith::Sub => x - y,
        Arith::Mul => x * y,
        Arith::Div => {
            if y == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            x / y
        }
        Arith::Rem => unreachable!("rem is int-only"),
    }))
}

/// Any comparison involving nil is false.
fn compare(op: Cmp, a: Value, b: Value) -> bool {
    use std::cmp::Ordering;
    let ord = match (a, b) {
        (Value::Nil, _) | (_, Value::Nil) => return false,
        (Value::Int(x), Value::Int(y)) => Some(x.cmp(&y)),
        (Value::Bool(x), Value::Bool(y)) => Some(x.cmp(&y)),
        (Value::Side(x), Value::Side(y)) => {
            return match op {
                Cmp::Eq => x == y,
                Cmp::Ne => x != y,
                _ => false,
            }
        }
        (x, y) => match (x.as_f64(), y.as_f64()) {
            (Some(x), Some(y)) => x.partial_cmp(&y),
            _ => None,
        },
    };
    let Some(ord) = ord else { return false };
    match op {
        Cmp::Eq => ord == Ordering::Equal,
        Cmp::Ne => ord != Ordering::Equal,
        Cmp::Lt => ord == Ordering::Less,
        Cmp::Le => ord != Ordering::Greater,
        Cmp::Gt => ord == Ordering::Greater,
        Cmp::Ge => ord != Ordering::Less,
    }
}

/// [`Behavior`] adapter running a compiled avatar for one agent.
pub struct ScriptBehavior {
    program: Arc<Program>,
    instance: AgentInstance,
}

impl ScriptBehavior {
    pub fn new(program: Arc<Program>, instance: AgentInstance) -> Self {
        ScriptBehavior { program, instance }
    }

    pub fn instance(&self) -> &AgentInstance {
        &self.instance
    }
}

impl Behavior for ScriptBehavior {
    fn handles(&self, kind: EventKind) -> bool {
        let k = match kind {
            EventKind::Wake => HandlerKind::Wake,
            EventKind::Trade => HandlerKind::Trade,
            EventKind::News => HandlerKind::News,
            EventKind::Message => HandlerKind::Message,
        };
        self.program.has_handler(k)
    }

    fn wake_rate(&self) -> f64 {
        self.instance.wake_rate
    }

    fn on_event(
        &mut self,
        event: &AgentEvent,
        view: &MarketView<'_>,
        rng: &mut AgentRng,
    ) -> Result<Vec<Action>, EvalError> {
        evaluate(&self.program, &mut self.instance, event, view, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::PriceHistory;
    use crate::dsl::parse;
    use crate::market::Side;

    fn view(h: &PriceHistory) -> MarketView<'_> {
        MarketView {
            time: 0,
            best_bid: Some(99),
            best_ask: Some(101),
            initial_price: 100,
            agent_id: 0,
            agent_count: 1,
            cash: 1000,
            shares: 10,
            history: h,
        }
    }

    fn run(
        src: &str,
        h: &PriceHistory,
        event: AgentEvent,
    ) -> (Result<Vec<Action>, EvalError>, AgentInstance) {
        let p = parse(src).unwrap();
        let params = crate::dsl::sample_params(&p.spec.params, &mut AgentRng::from_seed(1));
        let mut inst = AgentInstance::new(&p, 0, 0, params);
        let mut rng = AgentRng::from_seed(2);
        let out = evaluate(&p, &mut inst, &event, &view(h), &mut rng);
        (out, inst)
    }

    #[test]
    fn empty_handler_yields_nothing() {
        let h = PriceHistory::new();
        let (out, _) = run(r#"avatar "x" { on wake {} }"#, &h, AgentEvent::Wake);
        assert_eq!(out.unwrap(), vec![]);
        let (out, _) = run(r#"avatar "x" {}"#, &h, AgentEvent::Wake);
        assert_eq!(out.unwrap(), vec![]);
    }

    #[test]
    fn nil_guard_on_short_history() {
        let h = PriceHistory::from_series(vec![100, 101, 102, 103, 104], vec![1; 5]);
        let src = r#"avatar "m" { param t: real ~ constant(0.0); param q: int ~ constant(1);
            on wake { if log_return(10) > t { submit_market(buy, q); } } }"#;
        let (out, _) = run(src, &h, AgentEvent::Wake);
        assert_eq!(out.unwrap(), vec![]);
    }

    #[test]
    fn nil_arithmetic_aborts_and_rolls_back() {
        let h = PriceHistory::new();
        let src = r#"avatar "x" { state s: int = 0;
            on wake { s = 5; cancel_all(); let p = last_price + 1; } }"#;
        let (out, inst) = run(src, &h, AgentEvent::Wake);
        assert_eq!(out.unwrap_err(), EvalError::NilArithmetic);
        assert_eq!(inst.state, vec![Value::Int(0)]);
    }

    #[test]
    fn division_by_zero() {
        let h = PriceHistory::new();
        let (out, _) = run(
            r#"avatar "x" { on wake { let a = 1 / 0; } }"#,
            &h,
            AgentEvent::Wake,
        );
        assert_eq!(out.unwrap_err(), EvalError::DivisionByZero);
    }

    #[test]
    fn actions_and_coercion() {
        let h = PriceHistory::from_series(vec![100], vec![3]);
        let src = r#"avatar "x" {
            on wake {
                submit_limit(buy, 100.9, 2.7);
                submit_limit(sell, best_ask, 0.5);
                submit_market(sell, 3);
                cancel_all();
                send(my.id + 1, 0.25);
            }
            on news(v) { if v > 0.0 { submit_market(buy, 1); } }
            on message(m) { send(0, m * 2.0); }
        }"#;
        let (out, _) = run(src, &h, AgentEvent::Wake);
        assert_eq!(
            out.unwrap(),
            vec![
                Action::Limit {
                    side: Side::Buy,
                    price: 100,
                    qty: 2
                },
                Action::Market {
                    side: Side::Sell,
                    qty: 3
                },
                Action::CancelAll,
                Action::Send { to: 1, value: 0.25 },
            ]
        );
        let (out, _) = run(src, &h, AgentEvent::News(0.5));
        assert_eq!(
            out.unwrap(),
            vec![Action::Market {
                side: Side::Buy,
                qty: 1
            }]
        );
        let (out, _) = run(
            src,
            &h,
            AgentEvent::Message {
                from: 3,
                value: 1.5,
            },
        );
        assert_eq!(out.unwrap(), vec![Action::Send { to: 0, value: 3.0 }]);
    }

    #[test]
    fn nil_comparisons_are_false() {
        let h = PriceHistory::new();
        let src = r#"avatar "x" { state a: int = 0; state b: int = 0; state c: int = 0;
            on wake {
                if last_price == last_price { a = 1; }
                if last_price != 5 { b = 1; }
                if not (last_price > 5) { c = 1; }
            } }"#;
        let (out, inst) = run(src, &h, AgentEvent::Wake);
        out.unwrap();
        assert_eq!(
            inst.state,
            vec![Value::Int(0), Value::Int(0), Value::Int(1)]
        );
    }

    #[test]
    fn state_persists_across_events() {
        let p = parse(r#"avatar "c" { state n: int = 0; on news(v) { n = n + 1; } }"#).unwrap();
        let mut inst = AgentInstance::new(&p, 0, 0, vec![]);
        let h = PriceHistory::new();
        let mut rng = AgentRng::from_seed(0);
        for _ in 0..3 {
            evaluate(&p, &mut inst, &AgentEvent::News(0.1), &view(&h), &mut rng).unwrap();
        }
        assert_eq!(inst.state_var(&p, "n"), Some(Value::Int(3)));
    }
}
