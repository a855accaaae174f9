//! Cells and the three buffering stages: per-input VOQs, VOMQs on each CIM
//! output link, and per-output crosspoint buffers.

use std::collections::VecDeque;

use crate::error::{Error, QueueKind, Result};
use crate::topology::{LinkAddress, PortAddress, SwitchGeometry};

/// A fixed-size data unit. Ports are stored as flat indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub src: usize,
    pub dst: usize,
    /// Per-flow sequence number, starting at 0.
    pub seq: u64,
    pub t_arrival: u64,
    pub t_voq_depart: Option<u64>,
    pub t_vomq_depart: Option<u64>,
    pub t_op_depart: Option<u64>,
}

impl Cell {
    pub fn new(src: usize, dst: usize, seq: u64, t_arrival: u64) -> Self {
        Self {
            src,
            dst,
            seq,
            t_arrival,
            t_voq_depart: None,
            t_vomq_depart: None,
            t_op_depart: None,
        }
    }

    pub fn source(&self, geometry: &SwitchGeometry) -> PortAddress {
        PortAddress::new(self.src / geometry.k(), self.src % geometry.k())
    }

    pub fn destination(&self, geometry: &SwitchGeometry) -> PortAddress {
        PortAddress::new(self.dst / geometry.m(), self.dst % geometry.m())
    }

    /// End-to-end delay in slots, once the cell has left its output port.
    pub fn delay(&self) -> Option<u64> {
        self.t_op_depart.map(|t| t - self.t_arrival)
    }
}

/// A FIFO of cells with optional capacity and occupancy tracking.
///
/// Overflowing a bounded queue is a simulation fault: flow control is
/// responsible for never letting it happen, so cells are never dropped.
#[derive(Debug, Clone)]
pub struct CellQueue {
    kind: QueueKind,
    index: usize,
    capacity: Option<usize>,
    cells: VecDeque<Cell>,
    high_water: usize,
}

impl CellQueue {
    pub fn new(kind: QueueKind, index: usize, capacity: Option<usize>) -> Self {
        Self {
            kind,
            index,
            capacity,
            cells: VecDeque::new(),
            high_water: 0,
        }
    }

    pub fn kind(&self) -> QueueKind {
        self.kind
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.capacity.is_some_and(|c| self.cells.len() >= c)
    }

    /// Largest occupancy seen since construction or the last reset.
    pub fn high_water(&self) -> usize {
        self.high_water
    }

    pub fn reset_high_water(&mut self) {
        self.high_water = self.cells.len();
    }

    pub fn head(&self) -> Option<&Cell> {
        self.cells.front()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter()
    }

    /// Appends `cell`. Entering a VOQ stamps the arrival slot.
    pub fn enqueue(&mut self, mut cell: Cell, t: u64) -> Result<()> {
        if self.is_full() {
            return Err(Error::Overflow {
                kind: self.kind,
                index: self.index,
                capacity: self.capacity.unwrap_or(usize::MAX),
                slot: t,
            });
        }
        if self.kind == QueueKind::Voq {
            cell.t_arrival = t;
        }
        self.cells.push_back(cell);
        self.high_water = self.high_water.max(self.cells.len());
        Ok(())
    }

    /// Removes the head cell and stamps its departure from this stage.
    pub fn dequeue_head(&mut self, t: u64) -> Result<Cell> {
        let mut cell = self.cells.pop_front().ok_or(Error::EmptyDequeue {
            kind: self.kind,
            index: self.index,
            slot: t,
        })?;
        match self.kind {
            QueueKind::Voq => cell.t_voq_depart = Some(t),
            QueueKind::Vomq => cell.t_vomq_depart = Some(t),
            QueueKind::Crosspoint => cell.t_op_depart = Some(t),
        }
        Ok(cell)
    }
}

/// Identity of `VOMQ(r, p, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VomqId {
    pub link: LinkAddress,
    pub om: usize,
}

impl VomqId {
    pub fn flat(&self, geometry: &SwitchGeometry) -> usize {
        vomq_index(
            self.link.cim * geometry.k() + self.link.port,
            self.om,
            geometry,
        )
    }

    pub fn from_flat(flat: usize, geometry: &SwitchGeometry) -> Self {
        let k = geometry.k();
        let link = flat / k;
        Self {
            link: LinkAddress::new(link / k, link % k),
            om: flat % k,
        }
    }
}

/// Identity of `CB(r, j, d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CrosspointId {
    pub com: usize,
    pub output: PortAddress,
}

/// Selects the VOMQ at `link` that holds cells for the cell's destination
/// OM. This is where a per-port (VOPQ) central buffer would plug in.
pub fn vomq_for(cell: &Cell, link: LinkAddress, geometry: &SwitchGeometry) -> VomqId {
    VomqId {
        link,
        om: cell.dst / geometry.m(),
    }
}

/// Flat index of `VOQ(u, v)` among all `N²` VOQs.
pub fn voq_index(u: usize, v: usize, geometry: &SwitchGeometry) -> usize {
    u * geometry.ports() + v
}

/// Flat index of the VOMQ for OM `j` on CIM link `link_flat`; there are `N·k`.
pub fn vomq_index(link_flat: usize, j: usize, geometry: &SwitchGeometry) -> usize {
    link_flat * geometry.k() + j
}

/// Flat index of `CB(r, ·, ·)` at output `v`; there are `N·m`.
pub fn cb_index(v: usize, r: usize, geometry: &SwitchGeometry) -> usize {
    v * geometry.m() + r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(k: usize) -> SwitchGeometry {
        SwitchGeometry::symmetric(k).unwrap()
    }

    #[test]
    fn enqueue_tracks_occupancy() {
        let mut q = CellQueue::new(QueueKind::Vomq, 0, Some(4));
        q.enqueue(Cell::new(0, 1, 0, 0), 3).unwrap();
        assert_eq!(q.len(), 1);
        assert_eq!(q.high_water(), 1);
    }

    #[test]
    fn bounded_queue_overflow_is_a_fault() {
        let mut q = CellQueue::new(QueueKind::Vomq, 7, Some(2));
        q.enqueue(Cell::new(0, 1, 0, 0), 1).unwrap();
        q.enqueue(Cell::new(0, 1, 1, 0), 2).unwrap();
        let err = q.enqueue(Cell::new(0, 1, 2, 0), 3).unwrap_err();
        assert_eq!(
            err,
            Error::Overflow {
                kind: QueueKind::Vomq,
                index: 7,
                capacity: 2,
                slot: 3
            }
        );
        assert_eq!(q.len(), 2);
    }

    #[test]
    fn voq_is_fifo_and_stamps_times() {
        let mut q = CellQueue::new(QueueKind::Voq, 0, None);
        for seq in 0..3 {
            q.enqueue(Cell::new(0, 1, seq, 0), 10 + seq).unwrap();
        }
        for seq in 0..3 {
            let c = q.dequeue_head(20 + seq).unwrap();
            assert_eq!(c.seq, seq);
            assert_eq!(c.t_arrival, 10 + seq);
            assert_eq!(c.t_voq_depart, Some(20 + seq));
        }
        assert!(q.is_empty());
    }

    #[test]
    fn empty_dequeue_is_a_fault() {
        let mut q = CellQueue::new(QueueKind::Crosspoint, 3, Some(8));
        assert!(matches!(
            q.dequeue_head(5),
            Err(Error::EmptyDequeue {
                index: 3,
                slot: 5,
                ..
            })
        ));
    }

    #[test]
    fn crosspoint_dequeue_stamps_output_departure() {
        let mut q = CellQueue::new(QueueKind::Crosspoint, 0, Some(8));
        let mut cell = Cell::new(0, 0, 0, 1);
        cell.t_voq_depart = Some(2);
        q.enqueue(cell, 3).unwrap();
        let c = q.dequeue_head(5).unwrap();
        assert_eq!(c.delay(), Some(4));
    }

    #[test]
    fn vomq_selection_by_destination_module() {
        let geo = g(3);
        // dest OP(2,0) at link (1,1) -> VOMQ(1,1,2)
        let c = Cell::new(0, 6, 0, 0);
        let id = vomq_for(&c, LinkAddress::new(1, 1), &geo);
        assert_eq!(
            id,
            VomqId {
                link: LinkAddress::new(1, 1),
                om: 2
            }
        );

        let geo4 = g(4);
        let c = Cell::new(0, 3, 0, 0); // OP(0,3)
        assert_eq!(vomq_for(&c, LinkAddress::new(0, 0), &geo4).om, 0);

        // Two ports on the same OM share one VOMQ.
        let a = Cell::new(0, 3, 0, 0); // OP(1,0)
        let b = Cell::new(0, 5, 0, 0); // OP(1,2)
        let link = LinkAddress::new(2, 0);
        assert_eq!(vomq_for(&a, link, &geo), vomq_for(&b, link, &geo));
        assert_eq!(vomq_for(&a, link, &geo).om, 1);
    }

    #[test]
    fn vomq_flat_round_trip() {
        let geo = g(4);
        for flat in 0..geo.links() * geo.k() {
            assert_eq!(VomqId::from_flat(flat, &geo).flat(&geo), flat);
        }
    }
}
