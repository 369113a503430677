//! Shared vocabulary between the simulation kernel and the two kinds of
//! agent behavior (native archetypes and interpreted avatar scripts).

use crate::market::{AgentId, Price, Side, Time};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp, Normal};
use thiserror::Error;

/// Market intention emitted by an agent's decision procedure.
#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Limit { side: Side, price: Price, qty: i64 },
    Market { side: Side, qty: i64 },
    CancelAll,
    Send { to: i64, value: f64 },
}

/// What an agent is being asked to react to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AgentEvent {
    Wake,
    /// One or more of the agent's own orders executed.
    Trade,
    News(f64),
    Message {
        from: AgentId,
        value: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    Wake,
    Trade,
    News,
    Message,
}

impl AgentEvent {
    pub fn kind(&self) -> EventKind {
        match self {
            AgentEvent::Wake => EventKind::Wake,
            AgentEvent::Trade => EventKind::Trade,
            AgentEvent::News(_) => EventKind::News,
            AgentEvent::Message { .. } => EventKind::Message,
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("nil value used in arithmetic")]
    NilArithmetic,
    #[error("integer overflow")]
    Overflow,
    #[error("{0}")]
    Domain(String),
}

/// A decision procedure bound to one agent instance.
pub trait Behavior: Send {
    /// Whether the agent has a handler for events of this kind. Events
    /// without a handler are never scheduled for the agent.
    fn handles(&self, kind: EventKind) -> bool;

    /// Wake intensity, in wakes per unit of simulation time.
    fn wake_rate(&self) -> f64;

    fn on_event(
        &mut self,
        event: &AgentEvent,
        view: &MarketView<'_>,
        rng: &mut AgentRng,
    ) -> Result<Vec<Action>, EvalError>;
}

/// Microticks per unit of simulation time.
pub const TIME_UNIT: u64 = 1_000_000;

/// Per-agent random stream. Native archetypes and their script twins draw
/// through the same primitives, so equal seeds give equal decisions.
#[derive(Clone, Debug)]
pub struct AgentRng(ChaCha8Rng);

impl AgentRng {
    pub fn from_seed(seed: u64) -> Self {
        AgentRng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform01(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    /// Uniform on `[a, b)`; always consumes one draw, even when `a == b`.
    pub fn uniform(&mut self, a: f64, b: f64) -> f64 {
        a + (b - a) * self.uniform01()
    }

    /// Uniform integer on `[a, b]`.
    pub fn uniform_int(&mut self, a: i64, b: i64) -> i64 {
        if a >= b {
            let _ = self.uniform01();
            return a;
        }
        let span = (b - a + 1) as f64;
        let k = (self.uniform01() * span).floor() as i64;
        a + k.min(b - a)
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        if sd <= 0.0 {
            return mean;
        }
        Normal::new(mean, sd).expect("sd > 0").sample(&mut self.0)
    }

    pub fn exponential(&mut self, rate: f64) -> f64 {
        Exp::new(rate).expect("rate > 0").sample(&mut self.0)
    }
}

/// Transaction-tick price and volume history.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PriceHistory {
    prices: Vec<Price>,
    volumes: Vec<i64>,
}

impl PriceHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_series(prices: Vec<Price>, volumes: Vec<i64>) -> Self {
        assert_eq!(prices.len(), volumes.len());
        PriceHistory { prices, volumes }
    }

    pub fn push(&mut self, price: Price, qty: i64) {
        self.prices.push(price);
        self.volumes.push(qty);
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn prices(&self) -> &[Price] {
        &self.prices
    }

    pub fn volumes(&self) -> &[i64] {
        &self.volumes
    }

    pub fn last(&self) -> Option<Price> {
        self.prices.last().copied()
    }

    fn window(&self, w: i64) -> Option<&[Price]> {
        if w < 1 || (w as usize) > self.prices.len() {
            return None;
        }
        Some(&self.prices[self.prices.len() - w as usize..])
    }

    pub fn sma(&self, w: i64) -> Option<f64> {
        let win = self.window(w)?;
        Some(win.iter().map(|&p| p as f64).sum::<f64>() / win.len() as f64)
    }

    /// Population standard deviation of the last `w` prices.
    pub fn std(&self, w: i64) -> Option<f64> {
        let win = self.window(w)?;
        let n = win.len() as f64;
        let mean = win.iter().map(|&p| p as f64).sum::<f64>() / n;
        let var = win
            .iter()
            .map(|&p| {
                let d = p as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        Some(var.sqrt())
    }

    /// `ln(p_last / p_{last - w})`; needs `w + 1` prices.
    pub fn log_return(&self, w: i64) -> Option<f64> {
        if w < 1 || (w as usize) >= self.prices.len() {
            return None;
        }
        let n = self.prices.len();
        let now = self.prices[n - 1] as f64;
        let then = self.prices[n - 1 - w as usize] as f64;
        Some((now / then).ln())
    }

    /// Traded quantity over the last `w` transactions.
    pub fn volume(&self, w: i64) -> Option<i64> {
        if w < 1 || (w as usize) > self.volumes.len() {
            return None;
        }
        Some(self.volumes[self.volumes.len() - w as usize..].iter().sum())
    }
}

/// Read-only information an agent sees when it decides.
#[derive(Clone, Copy, Debug)]
pub struct MarketView<'a> {
    pub time: Time,
    pub best_bid: Option<Price>,
    pub best_ask: Option<Price>,
    pub initial_price: Price,
    pub agent_id: AgentId,
    pub agent_count: u32,
    pub cash: i64,
    pub shares: i64,
    pub history: &'a PriceHistory,
}

impl MarketView<'_> {
    pub fn last_price(&self) -> Option<Price> {
        self.history.last()
    }

    pub fn mid(&self) -> Option<f64> {
        match (self.best_bid, self.best_ask) {
            (Some(b), Some(a)) => Some((b + a) as f64 / 2.0),
            _ => None,
        }
    }

    /// Last trade price, or the scenario's initial reference price before
    /// the first trade.
    pub fn mark_price(&self) -> Price {
        self.last_price().unwrap_or(self.initial_price)
    }

    pub fn wealth(&self) -> i64 {
        self.cash + self.shares * self.mark_price()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(prices: &[Price]) -> PriceHistory {
        PriceHistory::from_series(prices.to_vec(), vec![1; prices.len()])
    }

    #[test]
    fn windowed_accessors() {
        let h = hist(&[100, 100, 100, 100, 120]);
        assert_eq!(h.sma(5), Some(104.0));
        assert_eq!(h.std(5), Some(8.0));
        assert_eq!(h.sma(6), None);
        assert_eq!(h.volume(5), Some(5));
        assert_eq!(h.volume(0), None);
        assert!((h.log_return(1).unwrap() - (1.2f64).ln()).abs() < 1e-15);
        assert_eq!(h.log_return(5), None);
    }

    #[test]
    fn log_return_of_five_percent_move() {
        let h = hist(&[100, 101, 102, 103, 105]);
        let r = h.log_return(4).unwrap();
        assert!((r - 0.048790164169432).abs() < 1e-12);
    }

    #[test]
    fn uniform_int_stays_in_range() {
        let mut rng = AgentRng::from_seed(3);
        for _ in 0..10_000 {
            let k = rng.uniform_int(1, 6);
            assert!((1..=6).contains(&k));
        }
        assert_eq!(rng.uniform_int(4, 4), 4);
    }

    #[test]
    fn seeded_streams_repeat() {
        let mut a = AgentRng::from_seed(11);
        let mut b = AgentRng::from_seed(11);
        for _ in 0..100 {
            assert_eq!(a.uniform01().to_bits(), b.uniform01().to_bits());
        }
    }
}
