//! Capacity-limited device replay of a schedule.
//!
//! The device executes contractions in schedule order under a byte capacity.
//! Each step pins its inputs and output; everything else is evictable,
//! least-recently-used first. Evicted leaves cost nothing to write back (the
//! host keeps every input tensor), evicted intermediates are spilled
//! device-to-host; any evicted tensor that is needed again is refetched
//! host-to-device. A step whose pinned working set alone exceeds capacity is
//! infeasible. With capacity at least the schedule's transient peak the
//! device never evicts.

use serde::Serialize;

use crate::dag::{ContractionDag, NodeId};
use crate::memory::{check_schedule, InvalidSchedule, Schedule};

#[derive(Debug, Clone, Copy)]
pub struct DeviceConfig {
    pub capacity: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DeviceError {
    #[error("schedule is not executable: {0}")]
    Invalid(#[from] InvalidSchedule),
    #[error(
        "contraction {contraction} needs {need} bytes pinned at step {step}, capacity is {capacity}"
    )]
    Infeasible { step: usize, contraction: NodeId, need: u64, capacity: u64 },
}

/// Transfer and eviction totals of one replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DeviceReport {
    pub capacity: u64,
    /// High-water mark of bytes on the device.
    pub peak_resident: u64,
    /// Tensors pushed out to make room, leaves included.
    pub evictions: u64,
    pub leaf_evictions: u64,
    /// Intermediate spills; each moves its tensor device-to-host.
    pub d2h_transfers: u64,
    pub d2h_bytes: u64,
    /// Loads onto the device: first leaf fetches plus refetches.
    pub h2d_transfers: u64,
    pub h2d_bytes: u64,
    /// Loads of tensors that had been resident before and were evicted.
    pub refetches: u64,
}

/// Largest pinned working set (inputs plus output) over the schedule; the
/// smallest capacity that can replay it.
pub fn min_working_set(dag: &ContractionDag, schedule: &Schedule) -> u64 {
    schedule
        .order
        .iter()
        .map(|&u| {
            let node = dag.node(u);
            node.size + node.children.iter().map(|&c| dag.node(c).size).sum::<u64>()
        })
        .max()
        .unwrap_or(0)
}

struct Device<'d> {
    dag: &'d ContractionDag,
    capacity: u64,
    resident: Vec<bool>,
    /// Evicted while still live; its bytes survive on the host.
    on_host: Vec<bool>,
    pinned: Vec<bool>,
    /// (last-use stamp, id) of every unpinned resident tensor.
    lru: std::collections::BTreeSet<(u64, NodeId)>,
    stamp_of: Vec<u64>,
    clock: u64,
    pending_uses: Vec<usize>,
    resident_bytes: u64,
    report: DeviceReport,
}

impl<'d> Device<'d> {
    fn touch(&mut self, x: NodeId) {
        // Pinned tensors live outside the LRU set; stamp only.
        debug_assert!(self.pinned[x.index()]);
        self.clock += 1;
        self.stamp_of[x.index()] = self.clock;
    }

    fn pin(&mut self, x: NodeId) {
        if !self.pinned[x.index()] {
            self.pinned[x.index()] = true;
            if self.resident[x.index()] {
                self.lru.remove(&(self.stamp_of[x.index()], x));
            }
        }
    }

    fn unpin(&mut self, x: NodeId) {
        debug_assert!(self.pinned[x.index()]);
        self.pinned[x.index()] = false;
        if self.resident[x.index()] {
            self.lru.insert((self.stamp_of[x.index()], x));
        }
    }

    /// Evicts LRU tensors until `need` more bytes fit. Only called once the
    /// pinned working set is known to fit, so this cannot get stuck.
    fn make_room(&mut self, need: u64) {
        while self.resident_bytes + need > self.capacity {
            let &(stamp, victim) = self.lru.iter().next().expect("working set was checked");
            self.lru.remove(&(stamp, victim));
            let v = self.dag.node(victim);
            self.resident[victim.index()] = false;
            self.on_host[victim.index()] = true;
            self.resident_bytes -= v.size;
            self.report.evictions += 1;
            if v.is_leaf() {
                self.report.leaf_evictions += 1;
            } else {
                self.report.d2h_transfers += 1;
                self.report.d2h_bytes += v.size;
            }
        }
    }

    /// Puts `x` on the device, evicting as needed; `x` must already be pinned.
    fn load(&mut self, x: NodeId) {
        debug_assert!(!self.resident[x.index()]);
        let size = self.dag.node(x).size;
        self.make_room(size);
        self.resident[x.index()] = true;
        self.resident_bytes += size;
        self.report.h2d_transfers += 1;
        self.report.h2d_bytes += size;
        if self.on_host[x.index()] {
            self.report.refetches += 1;
            self.on_host[x.index()] = false;
        }
    }

    fn free(&mut self, x: NodeId) {
        self.on_host[x.index()] = false;
        if self.resident[x.index()] {
            self.resident[x.index()] = false;
            self.resident_bytes -= self.dag.node(x).size;
            if !self.pinned[x.index()] {
                self.lru.remove(&(self.stamp_of[x.index()], x));
            }
        }
    }

    fn run(&mut self, schedule: &Schedule) -> Result<(), DeviceError> {
        for (step, &u) in schedule.order.iter().enumerate() {
            let node = self.dag.node(u);
            let need: u64 =
                node.size + node.children.iter().map(|&c| self.dag.node(c).size).sum::<u64>();
            if need > self.capacity {
                return Err(DeviceError::Infeasible {
                    step,
                    contraction: u,
                    need,
                    capacity: self.capacity,
                });
            }
            self.pin(u);
            for &c in &node.children {
                self.pin(c);
            }
            for &c in &node.children {
                if !self.resident[c.index()] {
                    self.load(c);
                }
                self.touch(c);
            }
            self.make_room(node.size);
            self.resident[u.index()] = true;
            self.resident_bytes += node.size;
            self.touch(u);
            self.report.peak_resident = self.report.peak_resident.max(self.resident_bytes);

            for &c in &node.children {
                self.unpin(c);
                self.pending_uses[c.index()] -= 1;
                if self.pending_uses[c.index()] == 0 {
                    self.free(c);
                }
            }
            self.unpin(u);
            if self.pending_uses[u.index()] == 0 {
                self.free(u);
            }
        }
        debug_assert_eq!(self.resident_bytes, 0);
        Ok(())
    }
}

/// Replays `schedule` on a device of the given capacity.
pub fn run(
    dag: &ContractionDag,
    schedule: &Schedule,
    config: &DeviceConfig,
) -> Result<DeviceReport, DeviceError> {
    let violations = check_schedule(dag, schedule);
    if !violations.is_empty() {
        return Err(DeviceError::Invalid(InvalidSchedule(violations)));
    }
    let mut pending_uses = vec![0usize; dag.len()];
    for node in dag.nodes() {
        pending_uses[node.id.index()] = node.parents.len();
    }
    let mut dev = Device {
        dag,
        capacity: config.capacity,
        resident: vec![false; dag.len()],
        on_host: vec![false; dag.len()],
        pinned: vec![false; dag.len()],
        lru: std::collections::BTreeSet::new(),
        stamp_of: vec![0; dag.len()],
        clock: 0,
        pending_uses,
        resident_bytes: 0,
        report: DeviceReport {
            capacity: config.capacity,
            peak_resident: 0,
            evictions: 0,
            leaf_evictions: 0,
            d2h_transfers: 0,
            d2h_bytes: 0,
            h2d_transfers: 0,
            h2d_bytes: 0,
            refetches: 0,
        },
    };
    dev.run(schedule)?;
    Ok(dev.report)
}
