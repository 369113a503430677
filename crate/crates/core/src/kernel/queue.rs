use crate::market::{AgentId, Time};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Payload {
    Wake(AgentId),
    News(f64),
    Message {
        from: AgentId,
        to: AgentId,
        value: f64,
    },
    /// The agent's orders executed during an earlier event.
    Filled(AgentId),
    EndOfRun,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimEvent {
    pub time: Time,
    pub seq: u64,
    pub payload: Payload,
}

impl Eq for SimEvent {}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Pops events in `(time, seq)` order, where `seq` is the push order.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<SimEvent>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: Time, payload: Payload) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(SimEvent { time, seq, payload });
        seq
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        self.heap.pop()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
