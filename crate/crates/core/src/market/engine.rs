use super::account::{settle, Account, Reservation, SettlementError};
use super::book::OrderBook;
use super::{AgentId, Order, OrderId, OrderKind, Price, Qty, RejectReason, Side, Time, Trade};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitOutcome {
    Rested(OrderId),
    FullyFilled,
    Rejected(RejectReason),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarketOutcome {
    FullyFilled,
    PartiallyFilledRemainderCanceled(Qty),
    Rejected(RejectReason),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CancelOutcome {
    Canceled,
    NotFound,
    NotOwner,
}

/// Trades generated by one submission together with its final state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Submission<O> {
    pub trades: Vec<Trade>,
    pub outcome: O,
}

impl<O> Submission<O> {
    fn rejected(outcome: O) -> Self {
        Submission {
            trades: Vec::new(),
            outcome,
        }
    }
}

/// Order book plus the accounts it settles against. Agent ids index
/// directly into the account table.
///
/// Order ids and submit sequence numbers are handed out only to accepted
/// submissions (rejections consume neither), starting from 1.
#[derive(Clone, Debug)]
pub struct Market {
    book: OrderBook,
    accounts: Vec<Account>,
    open_orders: Vec<Vec<OrderId>>,
    next_order_id: OrderId,
    next_trade_id: u64,
    next_seq: u64,
}

impl Market {
    pub fn new(accounts: Vec<Account>) -> Self {
        for (i, a) in accounts.iter().enumerate() {
            assert_eq!(a.agent_id as usize, i, "account ids must be dense");
        }
        let n = accounts.len();
        Market {
            book: OrderBook::new(),
            accounts,
            open_orders: vec![Vec::new(); n],
            next_order_id: 1,
            next_trade_id: 1,
            next_seq: 1,
        }
    }

    /// `n` agents with identical endowments.
    pub fn with_uniform_accounts(n: usize, cash: i64, shares: i64) -> Self {
        Self::new(
            (0..n)
                .map(|i| Account::new(i as AgentId, cash, shares))
                .collect(),
        )
    }

    pub fn book(&self) -> &OrderBook {
        &self.book
    }

    pub fn accounts(&self) -> &[Account] {
        &self.accounts
    }

    pub fn account(&self, agent: AgentId) -> Option<&Account> {
        self.accounts.get(agent as usize)
    }

    /// Resting order ids of `agent`, oldest first.
    pub fn open_orders(&self, agent: AgentId) -> &[OrderId] {
        self.open_orders
            .get(agent as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn total_cash(&self) -> i64 {
        self.accounts.iter().map(|a| a.cash).sum()
    }

    pub fn total_shares(&self) -> i64 {
        self.accounts.iter().map(|a| a.shares).sum()
    }

    fn take_ids(&mut self) -> (OrderId, u64) {
        let ids = (self.next_order_id, self.next_seq);
        self.next_order_id += 1;
        self.next_seq += 1;
        ids
    }

    fn record_trade(
        &mut self,
        aggressor: &Order,
        resting_id: OrderId,
        resting_agent: AgentId,
        price: Price,
        qty: Qty,
        time: Time,
    ) -> Trade {
        let (buy_order_id, buy_agent, sell_order_id, sell_agent) = match aggressor.side {
            Side::Buy => (
                aggressor.order_id,
                aggressor.agent_id,
                resting_id,
                resting_agent,
            ),
            Side::Sell => (
                resting_id,
                resting_agent,
                aggressor.order_id,
                aggressor.agent_id,
            ),
        };
        let trade = Trade {
            trade_id: self.next_trade_id,
            buy_order_id,
            sell_order_id,
            buy_agent,
            sell_agent,
            price,
            qty,
            time,
            aggressor_side: aggressor.side,
        };
        self.next_trade_id += 1;
        trade
    }

    /// Executes `qty` against the front resting order on the side opposite
    /// to `aggressor`, settling immediately.
    fn fill_front(
        &mut self,
        aggressor: &Order,
        qty: Qty,
        aggressor_cash_release: i64,
        time: Time,
    ) -> Result<Trade, SettlementError> {
        let resting_side = aggressor.side.opposite();
        let resting = self
            .book
            .front_mut(resting_side)
            .expect("caller checked the opposite side is non-empty");
        debug_assert!(qty >= 1 && qty <= resting.remaining);
        resting.remaining -= qty;
        let (resting_id, resting_agent, price) =
            (resting.order_id, resting.agent_id, resting.limit());
        let exhausted = resting.remaining == 0;
        if exhausted {
            self.book.pop_front(resting_side);
            let open = &mut self.open_orders[resting_agent as usize];
            if let Some(pos) = open.iter().position(|&id| id == resting_id) {
                open.remove(pos);
            }
        }

        let trade = self.record_trade(aggressor, resting_id, resting_agent, price, qty, time);
        let release = match aggressor.side {
            Side::Buy => Reservation {
                buyer_cash: aggressor_cash_release,
                seller_shares: qty,
            },
            Side::Sell => Reservation {
                buyer_cash: price * qty,
                seller_shares: qty,
            },
        };
        settle(&mut self.accounts, &trade, release)?;
        Ok(trade)
    }

    fn check_agent(&self, agent: AgentId) -> bool {
        (agent as usize) < self.accounts.len()
    }

    /// Limit order: match while the opposite best price satisfies the
    /// limit, then rest any remainder. Budget is reserved up front.
    pub fn submit_limit(
        &mut self,
        agent: AgentId,
        side: Side,
        price: Price,
        qty: Qty,
        time: Time,
    ) -> Result<Submission<LimitOutcome>, SettlementError> {
        use LimitOutcome::Rejected;
        if !self.check_agent(agent) {
            return Ok(Submission::rejected(Rejected(RejectReason::UnknownAgent)));
        }
        if qty < 1 {
            return Ok(Submission::rejected(Rejected(RejectReason::BadQty)));
        }
        if price < 1 {
            return Ok(Submission::rejected(Rejected(RejectReason::BadPrice)));
        }
        let acct = &mut self.accounts[agent as usize];
        match side {
            Side::Buy => {
                let Some(cost) = price.checked_mul(qty) else {
                    return Ok(Submission::rejected(Rejected(
                        RejectReason::InsufficientFunds,
                    )));
                };
                if acct.available_cash() < cost {
                    return Ok(Submission::rejected(Rejected(
                        RejectReason::InsufficientFunds,
                    )));
                }
                acct.reserved_cash += cost;
            }
            Side::Sell => {
                if acct.available_shares() < qty {
                    return Ok(Submission::rejected(Rejected(
                        RejectReason::InsufficientShares,
                    )));
                }
                acct.reserved_shares += qty;
            }
        }

        let (order_id, seq) = self.take_ids();
        let mut order = Order {
            order_id,
            agent_id: agent,
            side,
            kind: OrderKind::Limit,
            price: Some(price),
            qty,
            remaining: qty,
            submit_time: time,
            submit_seq: seq,
        };

        let mut trades = Vec::new();
        while order.remaining > 0 {
            let Some(front) = self.book.front_mut(side.opposite()) else {
                break;
            };
            let front_price = front.limit();
            let crosses = match side {
                Side::Buy => front_price <= price,
                Side::Sell => front_price >= price,
            };
            if !crosses {
                break;
            }
            let q = order.remaining.min(front.remaining);
            trades.push(self.fill_front(&order, q, price * q, time)?);
            order.remaining -= q;
        }

        let outcome = if order.remaining > 0 {
            self.open_orders[agent as usize].push(order_id);
            self.book.insert(order);
            LimitOutcome::Rested(order_id)
        } else {
            LimitOutcome::FullyFilled
        };
        debug_assert!(!self.book.is_crossed());
        Ok(Submission { trades, outcome })
    }

    /// Immediate-or-cancel market order. A buy stops as soon as the next
    /// unit is unaffordable; any unfilled remainder is dropped.
    pub fn submit_market(
        &mut self,
        agent: AgentId,
        side: Side,
        qty: Qty,
        time: Time,
    ) -> Result<Submission<MarketOutcome>, SettlementError> {
        use MarketOutcome::Rejected;
        if !self.check_agent(agent) {
            return Ok(Submission::rejected(Rejected(RejectReason::UnknownAgent)));
        }
        if qty < 1 {
            return Ok(Submission::rejected(Rejected(RejectReason::BadQty)));
        }
        let Some(best) = self.book.best(side.opposite()) else {
            return Ok(Submission::rejected(Rejected(RejectReason::NoLiquidity)));
        };
        let acct = &mut self.accounts[agent as usize];
        match side {
            Side::Buy => {
                if acct.available_cash() < best {
                    return Ok(Submission::rejected(Rejected(
                        RejectReason::InsufficientFunds,
                    )));
                }
            }
            Side::Sell => {
                if acct.available_shares() < qty {
                    return Ok(Submission::rejected(Rejected(
                        RejectReason::InsufficientShares,
                    )));
                }
                acct.reserved_shares += qty;
            }
        }

        let (order_id, seq) = self.take_ids();
        let mut order = Order {
            order_id,
            agent_id: agent,
            side,
            kind: OrderKind::Market,
            price: None,
            qty,
            remaining: qty,
            submit_time: time,
            submit_seq: seq,
        };

        let mut trades = Vec::new();
        while order.remaining > 0 {
            let Some(front) = self.book.front_mut(side.opposite()) else {
                break;
            };
            let front_price = front.limit();
            let mut q = order.remaining.min(front.remaining);
            if side == Side::Buy {
                let affordable = self.accounts[agent as usize].available_cash() / front_price;
                q = q.min(affordable);
                if q == 0 {
                    break;
                }
                self.accounts[agent as usize].reserved_cash += front_price * q;
            }
            trades.push(self.fill_front(&order, q, front_price * q, time)?);
            order.remaining -= q;
        }

        if side == Side::Sell {
            self.accounts[agent as usize].reserved_shares -= order.remaining;
        }
        let outcome = if order.remaining == 0 {
            MarketOutcome::FullyFilled
        } else {
            MarketOutcome::PartiallyFilledRemainderCanceled(order.remaining)
        };
        debug_assert!(!self.book.is_crossed());
        Ok(Submission { trades, outcome })
    }

    /// Removes a resting order and releases exactly what it still reserves.
    pub fn cancel(&mut self, agent: AgentId, order_id: OrderId) -> CancelOutcome {
        match self.book.get(order_id) {
            None => return CancelOutcome::NotFound,
            Some(o) if o.agent_id != agent => return CancelOutcome::NotOwner,
            Some(_) => {}
        }
        let order = self.book.remove(order_id).expect("order present");
        self.release(&order);
        let open = &mut self.open_orders[agent as usize];
        if let Some(pos) = open.iter().position(|&id| id == order_id) {
            open.remove(pos);
        }
        CancelOutcome::Canceled
    }

    /// Cancels every resting order of `agent`, returning the canceled ids.
    pub fn cancel_all(&mut self, agent: AgentId) -> Vec<OrderId> {
        let Some(open) = self.open_orders.get_mut(agent as usize) else {
            return Vec::new();
        };
        let ids = std::mem::take(open);
        for &id in &ids {
            if let Some(order) = self.book.remove(id) {
                self.release(&order);
            }
        }
        ids
    }

    fn release(&mut self, order: &Order) {
        let acct = &mut self.accounts[order.agent_id as usize];
        match order.side {
            Side::Buy => acct.reserved_cash -= order.limit() * order.remaining,
            Side::Sell => acct.reserved_shares -= order.remaining,
        }
    }

    /// Full consistency check of books and reservations. Linear in the
    /// number of resting orders; intended for tests and debug runs.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.book.is_crossed() {
            return Err(format!(
                "book crossed: bid {:?} ask {:?}",
                self.book.best_bid(),
                self.book.best_ask()
            ));
        }
        let mut cash = vec![0i64; self.accounts.len()];
        let mut shares = vec![0i64; self.accounts.len()];
        for side in [Side::Buy, Side::Sell] {
            for o in self.book.iter_side(side) {
                if o.remaining < 1 || o.remaining > o.qty {
                    return Err(format!(
                        "order {} has remaining {}",
                        o.order_id, o.remaining
                    ));
                }
                match side {
                    Side::Buy => cash[o.agent_id as usize] += o.limit() * o.remaining,
                    Side::Sell => shares[o.agent_id as usize] += o.remaining,
                }
            }
        }
        for (i, a) in self.accounts.iter().enumerate() {
            if !a.is_consistent() {
                return Err(format!("account {i} inconsistent: {a:?}"));
            }
            if a.reserved_cash != cash[i] || a.reserved_shares != shares[i] {
                return Err(format!(
                    "account {i} reservations {}/{} but book holds {}/{}",
                    a.reserved_cash, a.reserved_shares, cash[i], shares[i]
                ));
            }
        }
        Ok(())
    }
}
