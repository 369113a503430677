use super::{Order, OrderId, Price, Qty, Side};
use std::collections::{BTreeMap, HashMap, VecDeque};

/// FIFO queue of resting orders at one price.
#[derive(Clone, Debug, Default)]
pub struct Level {
    pub orders: VecDeque<Order>,
}

impl Level {
    pub fn total_qty(&self) -> Qty {
        self.orders.iter().map(|o| o.remaining).sum()
    }
}

/// Two price-time priority queues. Bids are served highest price first,
/// asks lowest price first; within a price, lowest `submit_seq` first.
#[derive(Clone, Debug, Default)]
pub struct OrderBook {
    bids: BTreeMap<Price, Level>,
    asks: BTreeMap<Price, Level>,
    index: HashMap<OrderId, (Side, Price)>,
}

impl OrderBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn best_bid(&self) -> Option<Price> {
        self.bids.keys().next_back().copied()
    }

    pub fn best_ask(&self) -> Option<Price> {
        self.asks.keys().next().copied()
    }

    pub fn best(&self, side: Side) -> Option<Price> {
        match side {
            Side::Buy => self.best_bid(),
            Side::Sell => self.best_ask(),
        }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn contains(&self, order_id: OrderId) -> bool {
        self.index.contains_key(&order_id)
    }

    pub fn get(&self, order_id: OrderId) -> Option<&Order> {
        let (side, price) = *self.index.get(&order_id)?;
        self.side(side)
            .get(&price)?
            .orders
            .iter()
            .find(|o| o.order_id == order_id)
    }

    fn side(&self, side: Side) -> &BTreeMap<Price, Level> {
        match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        }
    }

    fn side_mut(&mut self, side: Side) -> &mut BTreeMap<Price, Level> {
        match side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        }
    }

    /// Appends a limit order at the back of its price level.
    pub(crate) fn insert(&mut self, order: Order) {
        let price = order.limit();
        self.index.insert(order.order_id, (order.side, price));
        self.side_mut(order.side)
            .entry(price)
            .or_default()
            .orders
            .push_back(order);
    }

    /// Front order of the best level on `side`.
    pub(crate) fn front_mut(&mut self, side: Side) -> Option<&mut Order> {
        let level = match side {
            Side::Buy => self.bids.values_mut().next_back()?,
            Side::Sell => self.asks.values_mut().next()?,
        };
        level.orders.front_mut()
    }

    /// Removes the front order of the best level on `side`.
    pub(crate) fn pop_front(&mut self, side: Side) -> Option<Order> {
        let price = self.best(side)?;
        let book = self.side_mut(side);
        let level = book.get_mut(&price)?;
        let order = level.orders.pop_front()?;
        if level.orders.is_empty() {
            book.remove(&price);
        }
        self.index.remove(&order.order_id);
        Some(order)
    }

    pub(crate) fn remove(&mut self, order_id: OrderId) -> Option<Order> {
        let (side, price) = self.index.remove(&order_id)?;
        let book = self.side_mut(side);
        let level = book.get_mut(&price)?;
        let pos = level.orders.iter().position(|o| o.order_id == order_id)?;
        let order = level.orders.remove(pos);
        if level.orders.is_empty() {
            book.remove(&price);
        }
        order
    }

    /// Resting orders on `side` in priority order.
    pub fn iter_side(&self, side: Side) -> Box<dyn Iterator<Item = &Order> + '_> {
        match side {
            Side::Buy => Box::new(self.bids.values().rev().flat_map(|l| l.orders.iter())),
            Side::Sell => Box::new(self.asks.values().flat_map(|l| l.orders.iter())),
        }
    }

    /// Aggregated `(price, qty)` depth, best first.
    pub fn depth(&self, side: Side, levels: usize) -> Vec<(Price, Qty)> {
        let it: Box<dyn Iterator<Item = (&Price, &Level)>> = match side {
            Side::Buy => Box::new(self.bids.iter().rev()),
            Side::Sell => Box::new(self.asks.iter()),
        };
        it.take(levels).map(|(p, l)| (*p, l.total_qty())).collect()
    }

    pub fn is_crossed(&self) -> bool {
        matches!((self.best_bid(), self.best_ask()), (Some(b), Some(a)) if b >= a)
    }
}
