//! Time-ordered event queue with FIFO tie-breaking.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Event {
    FlowStart { flow: usize },
    /// A packet reaches the bottleneck queue after the forward delay.
    QueueArrival { packet: usize },
    /// The link serves the head of one queue.
    LinkService { link: usize },
    AckArrival { packet: usize },
    GuardianTick { flow: usize },
    CwndSample,
}

#[derive(Debug, PartialEq, Eq)]
struct Entry {
    at: SimTime,
    seq: u64,
    event: Event,
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap.
        other.at.cmp(&self.at).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Default)]
pub(crate) struct EventQueue {
    heap: BinaryHeap<Entry>,
    next_seq: u64,
}

impl EventQueue {
    pub(crate) fn push(&mut self, at: SimTime, event: Event) {
        self.heap.push(Entry { at, seq: self.next_seq, event });
        self.next_seq += 1;
    }

    pub(crate) fn pop(&mut self) -> Option<(SimTime, Event)> {
        self.heap.pop().map(|e| (e.at, e.event))
    }

    pub(crate) fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.at)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_by_time_then_insertion() {
        let mut q = EventQueue::default();
        q.push(SimTime(5), Event::CwndSample);
        q.push(SimTime(1), Event::FlowStart { flow: 0 });
        q.push(SimTime(5), Event::FlowStart { flow: 1 });
        q.push(SimTime(1), Event::FlowStart { flow: 2 });
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).collect();
        assert_eq!(
            order,
            vec![
                (SimTime(1), Event::FlowStart { flow: 0 }),
                (SimTime(1), Event::FlowStart { flow: 2 }),
                (SimTime(5), Event::CwndSample),
                (SimTime(5), Event::FlowStart { flow: 1 }),
            ]
        );
        assert_eq!(q.peek_time(), None);
    }
}
