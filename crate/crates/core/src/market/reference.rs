//! Naive reference matcher used as an oracle for [`super::Market`].
//!
//! Resting orders live in one flat vector that is rescanned in full for
//! every match step. It shares no code with the optimized book and engine;
//! only the plain data types are common.

use super::{AgentId, OrderId, Price, Qty, RejectReason, Side, Time, Trade};
use serde::{Deserialize, Serialize};

/// One instruction in a replayable order stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    Limit {
        agent: AgentId,
        side: Side,
        price: Price,
        qty: Qty,
    },
    Market {
        agent: AgentId,
        side: Side,
        qty: Qty,
    },
    Cancel {
        agent: AgentId,
        order_id: OrderId,
    },
}

#[derive(Clone, Debug)]
struct Resting {
    id: OrderId,
    seq: u64,
    agent: AgentId,
    side: Side,
    price: Price,
    remaining: Qty,
}

#[derive(Clone, Debug)]
struct Holdings {
    cash: i64,
    shares: i64,
    locked_cash: i64,
    locked_shares: i64,
}

/// Result of one op, comparable with the engine's outcome enums through
/// [`RefOutcome`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RefOutcome {
    Rested(OrderId),
    Filled,
    Remainder(Qty),
    Rejected(RejectReason),
    Canceled,
    NotFound,
    NotOwner,
}

pub struct ReferenceMatcher {
    resting: Vec<Resting>,
    holdings: Vec<Holdings>,
    next_id: u64,
    next_trade: u64,
    pub tape: Vec<Trade>,
}

impl ReferenceMatcher {
    pub fn new(endowments: &[(i64, i64)]) -> Self {
        ReferenceMatcher {
            resting: Vec::new(),
            holdings: endowments
                .iter()
                .map(|&(cash, shares)| Holdings {
                    cash,
                    shares,
                    locked_cash: 0,
                    locked_shares: 0,
                })
                .collect(),
            next_id: 1,
            next_trade: 1,
            tape: Vec::new(),
        }
    }

    pub fn holdings(&self, agent: AgentId) -> (i64, i64) {
        let h = &self.holdings[agent as usize];
        (h.cash, h.shares)
    }

    /// Index of the best opposite order for an aggressor on `side`,
    /// found by scanning every resting order.
    fn best_opposite(&self, side: Side) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, o) in self.resting.iter().enumerate() {
            if o.side == side {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(j) => {
                    let b = &self.resting[j];
                    let better = match side {
                        Side::Buy => (o.price, o.seq) < (b.price, b.seq),
                        Side::Sell => o.price > b.price || (o.price == b.price && o.seq < b.seq),
                    };
                    if better {
                        Some(i)
                    } else {
                        Some(j)
                    }
                }
            };
        }
        best
    }

    fn execute(
        &mut self,
        idx: usize,
        agg_id: OrderId,
        agg_agent: AgentId,
        side: Side,
        qty: Qty,
        agg_unlock_cash: i64,
        time: Time,
    ) {
        let price = self.resting[idx].price;
        let r_agent = self.resting[idx].agent;
        let r_id = self.resting[idx].id;
        self.resting[idx].remaining -= qty;
        if self.resting[idx].remaining == 0 {
            self.resting.remove(idx);
        }
        let (buyer, seller, buy_id, sell_id, unlock_cash) = match side {
            Side::Buy => (agg_agent, r_agent, agg_id, r_id, agg_unlock_cash),
            Side::Sell => (r_agent, agg_agent, r_id, agg_id, price * qty),
        };
        let b = &mut self.holdings[buyer as usize];
        b.locked_cash -= unlock_cash;
        b.cash -= price * qty;
        b.shares += qty;
        let s = &mut self.holdings[seller as usize];
        s.locked_shares -= qty;
        s.shares -= qty;
        s.cash += price * qty;
        self.tape.push(Trade {
            trade_id: self.next_trade,
            buy_order_id: buy_id,
            sell_order_id: sell_id,
            buy_agent: buyer,
            sell_agent: seller,
            price,
            qty,
            time,
            aggressor_side: side,
        });
        self.next_trade += 1;
    }

    pub fn apply(&mut self, op: &Op, time: Time) -> RefOutcome {
        match *op {
            Op::Limit {
                agent,
                side,
                price,
                qty,
            } => self.limit(agent, side, price, qty, time),
            Op::Market { agent, side, qty } => self.market(agent, side, qty, time),
            Op::Cancel { agent, order_id } => self.cancel(agent, order_id),
        }
    }

    fn limit(
        &mut self,
        agent: AgentId,
        side: Side,
        price: Price,
        qty: Qty,
        time: Time,
    ) -> RefOutcome {
        if agent as usize >= self.holdings.len() {
            return RefOutcome::Rejected(RejectReason::UnknownAgent);
        }
        if qty < 1 {
            return RefOutcome::Rejected(RejectReason::BadQty);
        }
        if price < 1 {
            return RefOutcome::Rejected(RejectReason::BadPrice);
        }
        let h = &mut self.holdings[agent as usize];
        match side {
            Side::Buy => {
                if h.cash - h.locked_cash < price * qty {
                    return RefOutcome::Rejected(RejectReason::InsufficientFunds);
                }
                h.locked_cash += price * qty;
            }
            Side::Sell => {
                if h.shares - h.locked_shares < qty {
                    return RefOutcome::Rejected(RejectReason::InsufficientShares);
                }
                h.locked_shares += qty;
            }
        }
        let id = self.next_id;
        self.next_id += 1;
        let mut left = qty;
        while left > 0 {
            let Some(i) = self.best_opposite(side) else {
                break;
            };
            let p = self.resting[i].price;
            let ok = match side {
                Side::Buy => p <= price,
                Side::Sell => p >= price,
            };
            if !ok {
                break;
            }
            let q = left.min(self.resting[i].remaining);
            self.execute(i, id, agent, side, q, price * q, time);
            left -= q;
        }
        if left > 0 {
            self.resting.push(Resting {
                id,
                seq: id,
                agent,
                side,
                price,
                remaining: left,
            });
            RefOutcome::Rested(id)
        } else {
            RefOutcome::Filled
        }
    }

    fn market(&mut self, agent: AgentId, side: Side, qty: Qty, time: Time) -> RefOutcome {
        if agent as usize >= self.holdings.len() {
            return RefOutcome::Rejected(RejectReason::UnknownAgent);
        }
        if qty < 1 {
            return RefOutcome::Rejected(RejectReason::BadQty);
        }
        let Some(first) = self.best_opposite(side) else {
            return RefOutcome::Rejected(RejectReason::NoLiquidity);
        };
        let first_price = self.resting[first].price;
        let h = &self.holdings[agent as usize];
        match side {
            Side::Buy if h.cash - h.locked_cash < first_price => {
                return RefOutcome::Rejected(RejectReason::InsufficientFunds)
            }
            Side::Sell if h.shares - h.locked_shares < qty => {
                return RefOutcome::Rejected(RejectReason::InsufficientShares)
            }
            _ => {}
        }
        let id = self.next_id;
        self.next_id += 1;
        let mut left = qty;
        while left > 0 {
            let Some(i) = self.best_opposite(side) else {
                break;
            };
            let p = self.resting[i].price;
            let mut q = left.min(self.resting[i].remaining);
            let h = &mut self.holdings[agent as usize];
            match side {
                Side::Buy => {
                    q = q.min((h.cash - h.locked_cash) / p);
                    if q == 0 {
                        break;
                    }
                    h.locked_cash += p * q;
                }
                Side::Sell => h.locked_shares += q,
            }
            self.execute(i, id, agent, side, q, p * q, time);
            left -= q;
        }
        if left == 0 {
            RefOutcome::Filled
        } else {
            RefOutcome::Remainder(left)
        }
    }

    fn cancel(&mut self, agent: AgentId, order_id: OrderId) -> RefOutcome {
        let Some(i) = self.resting.iter().position(|o| o.id == order_id) else {
            return RefOutcome::NotFound;
        };
        if self.resting[i].agent != agent {
            return RefOutcome::NotOwner;
        }
        let o = self.resting.remove(i);
        let h = &mut self.holdings[agent as usize];
        match o.side {
            Side::Buy => h.locked_cash -= o.price * o.remaining,
            Side::Sell => h.locked_shares -= o.remaining,
        }
        RefOutcome::Canceled
    }
}

/// Deterministic pseudo-random order stream for oracle comparisons. Uses
/// a self-contained xorshift generator so streams stay stable across
/// dependency upgrades.
pub fn random_ops(seed: u64, n: usize, n_agents: u32) -> Vec<Op> {
    let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let mut next = move || {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        s
    };
    let mut ops = Vec::with_capacity(n);
    let mut issued = 0u64;
    for _ in 0..n {
        let agent = (next() % n_agents as u64) as AgentId;
        let side = if next() % 2 == 0 {
            Side::Buy
        } else {
            Side::Sell
        };
        let roll = next() % 100;
        let op = if roll < 65 {
            issued += 1;
            Op::Limit {
                agent,
                side,
                price: 90 + (next() % 21) as i64,
                qty: 1 + (next() % 20) as i64,
            }
        } else if roll < 80 {
            issued += 1;
            Op::Market {
                agent,
                side,
                qty: 1 + (next() % 30) as i64,
            }
        } else {
            // mostly recent ids so cancels hit live orders
            let back = next() % 40;
            Op::Cancel {
                agent,
                order_id: issued.saturating_sub(back).max(1),
            }
        };
        ops.push(op);
    }
    ops
}

/// First disagreement between the engine and the reference matcher.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mismatch {
    pub op_index: usize,
    pub detail: String,
}

impl std::fmt::Display for Mismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "op {}: {}", self.op_index, self.detail)
    }
}

/// Feeds `ops` to both the engine and the reference matcher, comparing
/// outcomes, trades and holdings after every op. Returns the common tape.
pub fn cross_check(ops: &[Op], endowments: &[(i64, i64)]) -> Result<Vec<Trade>, Mismatch> {
    use super::engine::{CancelOutcome, LimitOutcome, Market, MarketOutcome};
    use super::Account;
    let accounts = endowments
        .iter()
        .enumerate()
        .map(|(i, &(c, s))| Account::new(i as AgentId, c, s))
        .collect();
    let mut engine = Market::new(accounts);
    let mut oracle = ReferenceMatcher::new(endowments);
    let mut tape = Vec::new();
    for (i, op) in ops.iter().enumerate() {
        let time = i as Time;
        let fail = |detail: String| Mismatch {
            op_index: i,
            detail,
        };
        let expected = oracle.apply(op, time);
        let (got, trades) = match *op {
            Op::Limit {
                agent,
                side,
                price,
                qty,
            } => {
                let s = engine
                    .submit_limit(agent, side, price, qty, time)
                    .map_err(|e| fail(e.to_string()))?;
                let o = match s.outcome {
                    LimitOutcome::Rested(id) => RefOutcome::Rested(id),
                    LimitOutcome::FullyFilled => RefOutcome::Filled,
                    LimitOutcome::Rejected(r) => RefOutcome::Rejected(r),
                };
                (o, s.trades)
            }
            Op::Market { agent, side, qty } => {
                let s = engine
                    .submit_market(agent, side, qty, time)
                    .map_err(|e| fail(e.to_string()))?;
                let o = match s.outcome {
                    MarketOutcome::FullyFilled => RefOutcome::Filled,
                    MarketOutcome::PartiallyFilledRemainderCanceled(q) => RefOutcome::Remainder(q),
                    MarketOutcome::Rejected(r) => RefOutcome::Rejected(r),
                };
                (o, s.trades)
            }
            Op::Cancel { agent, order_id } => {
                let o = match engine.cancel(agent, order_id) {
                    CancelOutcome::Canceled => RefOutcome::Canceled,
                    CancelOutcome::NotFound => RefOutcome::NotFound,
                    CancelOutcome::NotOwner => RefOutcome::NotOwner,
                };
                (o, Vec::new())
            }
        };
        if got != expected {
            return Err(fail(format!("engine {got:?}, reference {expected:?}")));
        }
        tape.extend(trades);
        if tape.len() != oracle.tape.len() || tape.last() != oracle.tape.last() {
            return Err(fail("trade tapes diverge".into()));
        }
        for (a, acct) in engine.accounts().iter().enumerate() {
            if (acct.cash, acct.shares) != oracle.holdings(a as AgentId) {
                return Err(fail(format!("holdings of agent {a} differ")));
            }
        }
    }
    if tape != oracle.tape {
        return Err(Mismatch {
            op_index: ops.len(),
            detail: "final tapes differ".into(),
        });
    }
    Ok(tape)
}
