//! Single-instrument limit order book with continuous double-auction
//! matching under price-time priority, plus cash/share settlement.
//!
//! All prices are integer ticks and all cash amounts are integer money
//! units, so the conservation identities hold exactly.

mod account;
mod book;
mod engine;
pub mod reference;
pub mod tape;

pub use account::{settle, Account, Reservation, SettlementError};
pub use book::{Level, OrderBook};
pub use engine::{CancelOutcome, LimitOutcome, Market, MarketOutcome, Submission};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Dense agent index; agents are numbered `0..n` across all families.
pub type AgentId = u32;
pub type OrderId = u64;
/// Price in integer ticks.
pub type Price = i64;
pub type Qty = i64;
/// Simulation time in integer microticks.
pub type Time = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Buy => "buy",
            Side::Sell => "sell",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderKind {
    Limit,
    Market,
}

/// A resting (or incoming) order. Market orders never rest, so every order
/// stored in the book is a limit order with a price.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Order {
    pub order_id: OrderId,
    pub agent_id: AgentId,
    pub side: Side,
    pub kind: OrderKind,
    pub price: Option<Price>,
    pub qty: Qty,
    pub remaining: Qty,
    pub submit_time: Time,
    pub submit_seq: u64,
}

impl Order {
    /// Limit price of a resting order.
    pub fn limit(&self) -> Price {
        self.price
            .expect("resting orders always carry a limit price")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trade {
    pub trade_id: u64,
    pub buy_order_id: OrderId,
    pub sell_order_id: OrderId,
    pub buy_agent: AgentId,
    pub sell_agent: AgentId,
    pub price: Price,
    pub qty: Qty,
    pub time: Time,
    pub aggressor_side: Side,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    InsufficientFunds,
    InsufficientShares,
    BadPrice,
    BadQty,
    NoLiquidity,
    UnknownAgent,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}
