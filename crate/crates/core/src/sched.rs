//! Random-order data scheduling under the per-TTI RE budget.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::config::SimConfig;
use crate::traffic::{expire_rrc, DeviceState, Population, TrafficError};

/// A connected device waiting for data resources.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingEntry {
    pub device: usize,
    pub group: usize,
    /// Data REs, fixed at the TTI the device completed RACH.
    pub cost: u64,
    pub enqueued_tti: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PendingQueue {
    entries: Vec<PendingEntry>,
}

impl PendingQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: PendingEntry) {
        debug_assert!(
            self.entries.iter().all(|e| e.device != entry.device),
            "device {} queued twice",
            entry.device
        );
        self.entries.push(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PendingEntry] {
        &self.entries
    }

    pub fn take(&mut self) -> Vec<PendingEntry> {
        std::mem::take(&mut self.entries)
    }

    /// Re-queues the unserved entries that are still retained.
    pub fn carry_over<F: Fn(&PendingEntry) -> bool>(&mut self, unserved: Vec<PendingEntry>, retained: F) {
        debug_assert!(self.entries.is_empty());
        self.entries = unserved.into_iter().filter(|e| retained(e)).collect();
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScheduleResult {
    pub served: Vec<PendingEntry>,
    pub unserved: Vec<PendingEntry>,
    pub used: u64,
}

/// Shuffles `queue` and serves devices in that order until the next one does
/// not fit in what remains of `budget`; that device and all after it stay
/// unserved.
pub fn schedule_data<R: Rng + ?Sized>(mut queue: Vec<PendingEntry>, budget: u64, rng: &mut R) -> ScheduleResult {
    queue.shuffle(rng);
    serve_prefix(queue, budget)
}

/// The greedy stop-at-first-blocker pass over an already ordered queue.
pub fn serve_prefix(queue: Vec<PendingEntry>, budget: u64) -> ScheduleResult {
    let mut used = 0u64;
    let mut split = queue.len();
    for (i, e) in queue.iter().enumerate() {
        if used + e.cost > budget {
            split = i;
            break;
        }
        used += e.cost;
    }
    let mut served = queue;
    let unserved = served.split_off(split);
    ScheduleResult { served, unserved, used }
}

/// Ages the unserved devices and puts the ones still retained back into
/// `queue` with their original cost. Returns the ids dropped on expiry.
pub fn carryover_unserved(
    queue: &mut PendingQueue,
    unserved: Vec<PendingEntry>,
    pop: &mut Population,
    cfg: &SimConfig,
) -> Result<Vec<usize>, TrafficError> {
    let ids: Vec<usize> = unserved.iter().map(|e| e.device).collect();
    let (_, dropped) = expire_rrc(pop, &ids, cfg)?;
    queue.carry_over(unserved, |e| pop.device(e.device).state == DeviceState::ConnectedWaiting);
    Ok(dropped)
}
