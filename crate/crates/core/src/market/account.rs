use super::{AgentId, Trade};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Holdings of one agent. `cash` and `shares` are totals; the reserved
/// amounts are the parts of them locked by resting orders.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub agent_id: AgentId,
    pub cash: i64,
    pub shares: i64,
    pub reserved_cash: i64,
    pub reserved_shares: i64,
}

impl Account {
    pub fn new(agent_id: AgentId, cash: i64, shares: i64) -> Self {
        Account {
            agent_id,
            cash,
            shares,
            reserved_cash: 0,
            reserved_shares: 0,
        }
    }

    pub fn available_cash(&self) -> i64 {
        self.cash - self.reserved_cash
    }

    pub fn available_shares(&self) -> i64 {
        self.shares - self.reserved_shares
    }

    pub fn is_consistent(&self) -> bool {
        self.cash >= 0
            && self.shares >= 0
            && (0..=self.cash).contains(&self.reserved_cash)
            && (0..=self.shares).contains(&self.reserved_shares)
    }
}

/// Amounts released from the counterparties' reservations when a trade
/// settles. A limit buy that rested at limit `L` and fills `q` at a price
/// below `L` releases `L * q` of reserved cash but only pays `price * q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Reservation {
    pub buyer_cash: i64,
    pub seller_shares: i64,
}

impl Reservation {
    pub fn exact(trade: &Trade) -> Self {
        Reservation {
            buyer_cash: trade.price * trade.qty,
            seller_shares: trade.qty,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SettlementError {
    #[error("unknown agent {0} in trade")]
    UnknownAgent(AgentId),
    #[error("buyer {agent} reserved {reserved} but trade releases {needed}")]
    BuyerReservation {
        agent: AgentId,
        reserved: i64,
        needed: i64,
    },
    #[error("seller {agent} reserved {reserved} shares but trade releases {needed}")]
    SellerReservation {
        agent: AgentId,
        reserved: i64,
        needed: i64,
    },
    #[error("trade {trade_id} settles below the buyer's reservation floor")]
    Underpriced { trade_id: u64 },
}

/// Applies one trade to the two accounts. Cash and shares only move between
/// the counterparties, so the totals over `accounts` are unchanged.
pub fn settle(
    accounts: &mut [Account],
    trade: &Trade,
    release: Reservation,
) -> Result<(), SettlementError> {
    let cost = trade.price * trade.qty;
    let buyer = trade.buy_agent as usize;
    let seller = trade.sell_agent as usize;
    if buyer >= accounts.len() {
        return Err(SettlementError::UnknownAgent(trade.buy_agent));
    }
    if seller >= accounts.len() {
        return Err(SettlementError::UnknownAgent(trade.sell_agent));
    }
    if release.buyer_cash < cost {
        return Err(SettlementError::Underpriced {
            trade_id: trade.trade_id,
        });
    }
    let b = &accounts[buyer];
    if b.reserved_cash < release.buyer_cash {
        return Err(SettlementError::BuyerReservation {
            agent: trade.buy_agent,
            reserved: b.reserved_cash,
            needed: release.buyer_cash,
        });
    }
    let s = &accounts[seller];
    if s.reserved_shares < release.seller_shares || release.seller_shares != trade.qty {
        return Err(SettlementError::SellerReservation {
            agent: trade.sell_agent,
            reserved: s.reserved_shares,
            needed: trade.qty,
        });
    }

    let b = &mut accounts[buyer];
    b.reserved_cash -= release.buyer_cash;
    b.cash -= cost;
    b.shares += trade.qty;

    let s = &mut accounts[seller];
    s.reserved_shares -= release.seller_shares;
    s.shares -= trade.qty;
    s.cash += cost;
    Ok(())
}
