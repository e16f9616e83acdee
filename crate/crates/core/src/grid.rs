//! Adaptive Cartesian discretization of `[0, l]^d`.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Result, SdotError};
use crate::geom::{Point, Rect, MAX_DIM};
use crate::measure::Density;

pub type Index = [u32; MAX_DIM];

const AXIS_BITS: u32 = 21;
/// Cells per axis must stay below this at every level.
pub const MAX_CELLS_PER_AXIS: u64 = 1 << AXIS_BITS;

/// Packs an index so that key order is lexicographic in `(i0, i1, i2)`.
#[inline]
pub fn pack(idx: &Index) -> u64 {
    (idx[0] as u64) << (2 * AXIS_BITS) | (idx[1] as u64) << AXIS_BITS | idx[2] as u64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxRec {
    pub index: Index,
    pub mass: f64,
    pub label: Option<usize>,
    pub split: bool,
    pub edge: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborStatus {
    Active {
        id: usize,
        label: Option<usize>,
    },
    Zero,
    Outside,
    /// Inside a discarded interior box; carries its frozen label.
    Discarded {
        label: usize,
    },
}

impl NeighborStatus {
    pub fn label(&self) -> Option<usize> {
        match *self {
            NeighborStatus::Active { label, .. } => label,
            NeighborStatus::Discarded { label } => Some(label),
            _ => None,
        }
    }
}

/// One neighbor position: index at the current level plus its status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub index: Index,
    pub status: NeighborStatus,
}

#[derive(Debug, Clone)]
pub struct ActiveSet {
    dim: usize,
    side: f64,
    w1: f64,
    level: u32,
    cells: u64,
    boxes: Vec<BoxRec>,
    lookup: HashMap<u64, usize>,
    /// `halo[k - 1]`: boxes discarded at level `k` with their labels.
    halo: Vec<HashMap<u64, usize>>,
    offsets: Vec<[i64; MAX_DIM]>,
}

fn moore_offsets(dim: usize) -> Vec<[i64; MAX_DIM]> {
    let mut out = Vec::with_capacity(3usize.pow(dim as u32) - 1);
    for code in 0..3usize.pow(dim as u32) {
        let mut v = [0i64; MAX_DIM];
        let mut c = code;
        for a in (0..dim).rev() {
            v[a] = (c % 3) as i64 - 1;
            c /= 3;
        }
        if v.iter().any(|&x| x != 0) {
            out.push(v);
        }
    }
    out
}

impl ActiveSet {
    /// All positive-mass boxes of the uniform tiling at width `w1`.
    pub fn initial_grid(side: f64, w1: f64, density: &Density) -> Result<ActiveSet> {
        let dim = density.dim();
        let ratio = side / w1;
        let cells = ratio.round();
        if !(side > 0.0 && w1 > 0.0) || cells < 1.0 || (ratio - cells).abs() > 1e-9 * ratio {
            return Err(SdotError::InvalidInput(format!(
                "side {side} is not a positive integer multiple of w1 = {w1}"
            )));
        }
        let cells = cells as u64;
        if cells >= MAX_CELLS_PER_AXIS {
            return Err(SdotError::InvalidInput(format!(
                "{cells} cells per axis exceeds the index range"
            )));
        }
        let total = cells.pow(dim as u32);
        let mut set = ActiveSet {
            dim,
            side,
            w1,
            level: 1,
            cells,
            boxes: Vec::new(),
            lookup: HashMap::new(),
            halo: vec![HashMap::new()],
            offsets: moore_offsets(dim),
        };
        let boxes: Vec<BoxRec> = (0..total)
            .into_par_iter()
            .filter_map(|flat| {
                let mut index = [0u32; MAX_DIM];
                let mut f = flat;
                for a in (0..dim).rev() {
                    index[a] = (f % cells) as u32;
                    f /= cells;
                }
                set.positive_box(index, density)
            })
            .collect();
        set.install(boxes);
        set.classify();
        Ok(set)
    }

    fn positive_box(&self, index: Index, density: &Density) -> Option<BoxRec> {
        let r = self.rect_of(&index);
        if density.is_zero_on(&r) {
            return None;
        }
        let mass = density.mass(&r);
        (mass > 0.0).then_some(BoxRec {
            index,
            mass,
            label: None,
            split: false,
            edge: false,
        })
    }

    fn install(&mut self, boxes: Vec<BoxRec>) {
        self.lookup = boxes
            .iter()
            .enumerate()
            .map(|(i, b)| (pack(&b.index), i))
            .collect();
        self.boxes = boxes;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn width(&self) -> f64 {
        self.w1 / (1u64 << (self.level - 1)) as f64
    }

    pub fn cells_per_axis(&self) -> u64 {
        self.cells
    }

    pub fn boxes(&self) -> &[BoxRec] {
        &self.boxes
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn id_of(&self, index: &Index) -> Option<usize> {
        self.lookup.get(&pack(index)).copied()
    }

    pub fn rect_of(&self, index: &Index) -> Rect {
        let w = self.width();
        let mut r = Rect {
            dim: self.dim,
            lo: [0.0; MAX_DIM],
            hi: [0.0; MAX_DIM],
        };
        for a in 0..self.dim {
            r.lo[a] = index[a] as f64 * w;
            r.hi[a] = if index[a] as u64 + 1 == self.cells {
                self.side
            } else {
                (index[a] + 1) as f64 * w
            };
        }
        r
    }

    pub fn rect(&self, id: usize) -> Rect {
        self.rect_of(&self.boxes[id].index)
    }

    pub fn center_of(&self, index: &Index) -> Point {
        let w = self.width();
        let mut c = [0.0; MAX_DIM];
        for a in 0..self.dim {
            c[a] = (index[a] as f64 + 0.5) * w;
        }
        c
    }

    pub fn center(&self, id: usize) -> Point {
        self.center_of(&self.boxes[id].index)
    }

    pub fn set_label(&mut self, id: usize, label: usize, split: bool) {
        self.boxes[id].label = Some(label);
        self.boxes[id].split = split;
    }

    /// Frozen label of the deepest discarded ancestor of a position, if any.
    pub fn halo_label(&self, index: &Index) -> Option<usize> {
        for k in (1..=self.level).rev() {
            let map = &self.halo[k as usize - 1];
            if map.is_empty() {
                continue;
            }
            let shift = self.level - k;
            let mut anc = [0u32; MAX_DIM];
            for a in 0..self.dim {
                anc[a] = index[a] >> shift;
            }
            if let Some(&l) = map.get(&pack(&anc)) {
                return Some(l);
            }
        }
        None
    }

    pub fn status_of(&self, pos: &[i64; MAX_DIM]) -> (Index, NeighborStatus) {
        let mut index = [0u32; MAX_DIM];
        for a in 0..self.dim {
            if pos[a] < 0 || pos[a] as u64 >= self.cells {
                return (index, NeighborStatus::Outside);
            }
            index[a] = pos[a] as u32;
        }
        if let Some(&id) = self.lookup.get(&pack(&index)) {
            return (
                index,
                NeighborStatus::Active {
                    id,
                    label: self.boxes[id].label,
                },
            );
        }
        match self.halo_label(&index) {
            Some(label) => (index, NeighborStatus::Discarded { label }),
            None => (index, NeighborStatus::Zero),
        }
    }

    /// The `3^d - 1` Moore neighbor positions of box `id`.
    pub fn neighbors(&self, id: usize) -> Vec<Neighbor> {
        let mut out = Vec::with_capacity(self.offsets.len());
        self.for_each_neighbor(id, |n| out.push(n));
        out
    }

    pub fn for_each_neighbor(&self, id: usize, mut f: impl FnMut(Neighbor)) {
        let idx = self.boxes[id].index;
        for v in &self.offsets {
            let mut pos = [0i64; MAX_DIM];
            for a in 0..self.dim {
                pos[a] = idx[a] as i64 + v[a];
            }
            let (index, status) = self.status_of(&pos);
            f(Neighbor { index, status });
        }
    }

    /// Edge iff some neighbor position is zero-mass or outside the domain.
    pub fn classify(&mut self) {
        let flags: Vec<bool> = (0..self.boxes.len())
            .into_par_iter()
            .map(|id| {
                let mut edge = false;
                self.for_each_neighbor(id, |n| {
                    edge |= matches!(n.status, NeighborStatus::Zero | NeighborStatus::Outside);
                });
                edge
            })
            .collect();
        for (b, e) in self.boxes.iter_mut().zip(flags) {
            b.edge = e;
        }
    }

    /// Moves the given boxes (ascending ids) into the halo at the current
    /// level. Returns the removed records.
    pub fn discard(&mut self, ids: &[usize]) -> Vec<BoxRec> {
        let mut drop = vec![false; self.boxes.len()];
        let level_halo = self.level as usize - 1;
        let mut removed = Vec::with_capacity(ids.len());
        for &id in ids {
            let b = self.boxes[id];
            drop[id] = true;
            let label = b.label.expect("discarded boxes are labeled");
            self.halo[level_halo].insert(pack(&b.index), label);
            removed.push(b);
        }
        let kept: Vec<BoxRec> = self
            .boxes
            .iter()
            .zip(&drop)
            .filter(|(_, d)| !**d)
            .map(|(b, _)| *b)
            .collect();
        self.install(kept);
        removed
    }

    /// Split every remaining box into `2^d` children of half width.
    /// Zero-mass children are dropped; labels carry over as warm-start hints.
    pub fn refine(&self, density: &Density) -> Result<ActiveSet> {
        let cells = self.cells * 2;
        if cells >= MAX_CELLS_PER_AXIS {
            return Err(SdotError::InvalidInput(format!(
                "{cells} cells per axis exceeds the index range"
            )));
        }
        let mut next = ActiveSet {
            dim: self.dim,
            side: self.side,
            w1: self.w1,
            level: self.level + 1,
            cells,
            boxes: Vec::new(),
            lookup: HashMap::new(),
            halo: self.halo.clone(),
            offsets: self.offsets.clone(),
        };
        next.halo.push(HashMap::new());
        let nchild = 1usize << self.dim;
        let mut boxes: Vec<BoxRec> = self
            .boxes
            .par_iter()
            .flat_map_iter(|p| {
                let next = &next;
                (0..nchild).filter_map(move |bits| {
                    let mut index = [0u32; MAX_DIM];
                    for a in 0..next.dim {
                        index[a] = 2 * p.index[a] + (bits >> a & 1) as u32;
                    }
                    next.positive_box(index, density).map(|mut c| {
                        c.label = p.label;
                        c
                    })
                })
            })
            .collect();
        boxes.par_sort_unstable_by_key(|b| pack(&b.index));
        next.install(boxes);
        next.classify();
        Ok(next)
    }

    /// Debug form `(r, i_1, ..., i_d)`.
    pub fn debug_tuple(&self, id: usize) -> Vec<u64> {
        let b = &self.boxes[id];
        std::iter::once(self.level as u64)
            .chain(b.index[..self.dim].iter().map(|&i| i as u64))
            .collect()
    }
}
