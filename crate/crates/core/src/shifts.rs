//! Adjacency graph of the final boundary set, shift differences and shift
//! recovery along a greedy spanning tree.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cost::GroundCost;
use crate::error::{Result, SdotError};
use crate::geom::Point;
use crate::grid::{pack, ActiveSet, Index, NeighborStatus};
use crate::measure::Density;

/// How a shift difference is estimated from an edge's pair set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSelection {
    /// The single pair with the smallest separation.
    #[default]
    Closest,
    /// Mean of the midpoint estimates over all pairs.
    Average,
}

/// Neighboring positions `(x_i, x_j)` carrying labels `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub i: usize,
    pub j: usize,
    pub pairs: Vec<(Point, Point)>,
    keys: Vec<(u64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub i: usize,
    pub j: usize,
    pub pair_count: usize,
    /// Estimate of `a_i - a_j`.
    pub a_ij: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyGraph {
    pub n: usize,
    pub pair_sets: Vec<PairSet>,
}

/// Collects every neighboring pair of positions with distinct labels where
/// at least one side is a boundary box. Discarded neighbors contribute their
/// frozen label.
pub fn build_adjacency(active: &ActiveSet, n: usize) -> Result<AdjacencyGraph> {
    let mut sets: BTreeMap<(usize, usize), PairSet> = BTreeMap::new();
    for id in 0..active.len() {
        let b = active.boxes()[id];
        let Some(li) = b.label else {
            return Err(SdotError::InvalidInput(format!(
                "box {:?} is unlabeled",
                active.debug_tuple(id)
            )));
        };
        active.for_each_neighbor(id, |nb| {
            let (lj, other_active) = match nb.status {
                NeighborStatus::Active { label: Some(l), .. } => (l, true),
                NeighborStatus::Discarded { label } => (label, false),
                _ => return,
            };
            // Count active-active pairs once, from the lower key.
            if lj == li || (other_active && pack(&nb.index) < pack(&b.index)) {
                return;
            }
            let (xa, xb) = (active.center_of(&b.index), active.center_of(&nb.index));
            let (ka, kb) = (pack(&b.index), pack(&nb.index));
            let (i, j, pa, pb, key) = if li < lj {
                (li, lj, xa, xb, (ka, kb))
            } else {
                (lj, li, xb, xa, (kb, ka))
            };
            let e = sets.entry((i, j)).or_insert_with(|| PairSet {
                i,
                j,
                pairs: Vec::new(),
                keys: Vec::new(),
            });
            e.pairs.push((pa, pb));
            e.keys.push(key);
        });
    }
    let graph = AdjacencyGraph {
        n,
        pair_sets: sets.into_values().collect(),
    };
    let comps = graph.components();
    if comps.len() > 1 {
        return Err(SdotError::Disconnected(comps));
    }
    Ok(graph)
}

impl AdjacencyGraph {
    /// Graph from explicit edge estimates; used when the pair sets are not needed.
    pub fn edges_only(n: usize, edges: &[(usize, usize)]) -> AdjacencyGraph {
        let pair_sets = edges
            .iter()
            .map(|&(i, j)| PairSet {
                i: i.min(j),
                j: i.max(j),
                pairs: Vec::new(),
                keys: Vec::new(),
            })
            .collect();
        AdjacencyGraph { n, pair_sets }
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for e in &self.pair_sets {
            let (a, b) = (find(&mut parent, e.i), find(&mut parent, e.j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for v in 0..self.n {
            let r = find(&mut parent, v);
            groups.entry(r).or_default().push(v);
        }
        groups.into_values().collect()
    }

    /// Estimates every edge.
    pub fn estimate(
        &self,
        cost: &GroundCost,
        targets: &[Point],
        dim: usize,
        width: f64,
        selection: PairSelection,
    ) -> Vec<GraphEdge> {
        self.pair_sets
            .iter()
            .map(|ps| {
                let (a_ij, bound) =
                    estimate_shift_difference(ps, cost, targets, dim, width, selection);
                GraphEdge {
                    i: ps.i,
                    j: ps.j,
                    pair_count: ps.pairs.len(),
                    a_ij,
                    bound,
                }
            })
            .collect()
    }
}

/// Estimate of `a_i - a_j` as `g_ij` at the midpoint of a selected pair,
/// with its error bound.
pub fn estimate_shift_difference(
    ps: &PairSet,
    cost: &GroundCost,
    targets: &[Point],
    dim: usize,
    width: f64,
    selection: PairSelection,
) -> (f64, f64) {
    let (yi, yj) = (&targets[ps.i][..dim], &targets[ps.j][..dim]);
    let mid = |p: &(Point, Point)| -> Point {
        let mut m = [0.0; crate::geom::MAX_DIM];
        for a in 0..dim {
            m[a] = 0.5 * (p.0[a] + p.1[a]);
        }
        m
    };
    let g = |m: &Point| cost.cost(&m[..dim], yi) - cost.cost(&m[..dim], yj);
    let mut best = 0;
    for k in 1..ps.pairs.len() {
        let ck = cost.cost(&ps.pairs[k].0[..dim], &ps.pairs[k].1[..dim]);
        let cb = cost.cost(&ps.pairs[best].0[..dim], &ps.pairs[best].1[..dim]);
        if ck < cb || (ck == cb && ps.keys.get(k) < ps.keys.get(best)) {
            best = k;
        }
    }
    let bound_of = |p: &(Point, Point)| {
        if cost.is_norm() {
            2.0 * cost.cost(&mid(p)[..dim], &p.1[..dim])
        } else {
            cost.neighbor_cost_bound(width, dim)
        }
    };
    match selection {
        PairSelection::Closest => {
            let p = &ps.pairs[best];
            (g(&mid(p)), bound_of(p))
        }
        PairSelection::Average => {
            let k = ps.pairs.len() as f64;
            let a = ps.pairs.iter().map(|p| g(&mid(p))).sum::<f64>() / k;
            let b = ps.pairs.iter().map(bound_of).fold(0.0, f64::max);
            (a, b)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSet {
    pub values: Vec<f64>,
    pub anchor: usize,
    /// Tree edges as `(known, fixed)` in the order they were used.
    pub tree_edges: Vec<(usize, usize)>,
    /// Accumulated error bound per shift.
    pub errors: Vec<f64>,
    /// `|(a_i - a_j) - a_ij|` for every edge left out of the tree.
    pub residuals: Vec<(usize, usize, f64)>,
}

/// Greedy spanning-tree solve anchored at the vertex of maximal degree.
pub fn solve_shifts(n: usize, edges: &[GraphEdge]) -> Result<ShiftSet> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (k, e) in edges.iter().enumerate() {
        adj[e.i].push((e.j, k));
        adj[e.j].push((e.i, k));
    }
    for a in &mut adj {
        a.sort();
    }
    let anchor = (0..n).fold(0, |b, v| if adj[v].len() > adj[b].len() { v } else { b });
    let mut known = vec![false; n];
    let mut values = vec![0.0; n];
    let mut errors = vec![0.0; n];
    let mut used = vec![false; edges.len()];
    let mut tree_edges = Vec::with_capacity(n.saturating_sub(1));
    known[anchor] = true;
    for _ in 1..n {
        let unknown_nbrs = |v: usize| adj[v].iter().filter(|(u, _)| !known[*u]).count();
        let hub = (0..n).filter(|&v| known[v] && unknown_nbrs(v) > 0).fold(
            None,
            |b: Option<usize>, v| match b {
                Some(b) if unknown_nbrs(b) >= unknown_nbrs(v) => Some(b),
                _ => Some(v),
            },
        );
        let Some(hub) = hub else {
            let g = AdjacencyGraph::edges_only(
                n,
                &edges.iter().map(|e| (e.i, e.j)).collect::<Vec<_>>(),
            );
            return Err(SdotError::Disconnected(g.components()));
        };
        let &(v, k) = adj[hub].iter().find(|(u, _)| !known[*u]).unwrap();
        let e = &edges[k];
        // a_i - a_j = a_ij.
        values[v] = if v == e.i {
            values[hub] + e.a_ij
        } else {
            values[hub] - e.a_ij
        };
        errors[v] = errors[hub] + e.bound;
        known[v] = true;
        used[k] = true;
        tree_edges.push((hub, v));
    }
    let residuals = edges
        .iter()
        .zip(&used)
        .filter(|(_, u)| !**u)
        .map(|(e, _)| (e.i, e.j, ((values[e.i] - values[e.j]) - e.a_ij).abs()))
        .collect();
    Ok(ShiftSet {
        values,
        anchor,
        tree_edges,
        errors,
        residuals,
    })
}

impl ShiftSet {
    /// Pairs violating `a_i - a_j <= c(y_i, y_j)`, which would empty region `j`.
    pub fn dominance_violations(
        &self,
        cost: &GroundCost,
        targets: &[Point],
        dim: usize,
    ) -> Vec<(usize, usize)> {
        let n = self.values.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j
                    && cost.cost(&targets[i][..dim], &targets[j][..dim])
                        < self.values[i] - self.values[j]
                {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Region index maximizing `a_i - c(x, y_i)`. Values within a relative
/// `1e-12` of the maximum count as ties and go to the lowest index, so a
/// common offset on the shifts never changes the label through rounding.
pub fn label_at(x: &[f64], shifts: &[f64], cost: &GroundCost, targets: &[Point]) -> usize {
    let d = x.len();
    let mut values = [0.0f64; 64];
    let mut owned = Vec::new();
    let vals: &mut [f64] = if targets.len() <= values.len() {
        &mut values[..targets.len()]
    } else {
        owned.resize(targets.len(), 0.0);
        &mut owned
    };
    let (mut best, mut scale) = (f64::NEG_INFINITY, 0.0f64);
    for (i, y) in targets.iter().enumerate() {
        let c = cost.cost(x, &y[..d]);
        vals[i] = shifts[i] - c;
        best = best.max(vals[i]);
        scale = scale.max(shifts[i].abs()).max(c);
    }
    let floor = best - TIE_TOLERANCE * scale.max(f64::MIN_POSITIVE);
    vals.iter().position(|&v| v >= floor).unwrap_or(0)
}

const TIE_TOLERANCE: f64 = 1e-12;

/// Labels on a `resolution^dim` grid of cell centers over `[0, side]^dim`,
/// axis 0 varying slowest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub dim: usize,
    pub resolution: usize,
    pub labels: Vec<u32>,
}

impl Raster {
    pub fn cell_index(&self, flat: usize) -> Index {
        let mut idx = [0u32; crate::geom::MAX_DIM];
        let mut f = flat;
        for a in (0..self.dim).rev() {
            idx[a] = (f % self.resolution) as u32;
            f /= self.resolution;
        }
        idx
    }

    /// `μ` of each reconstructed region, summing exact cell masses.
    pub fn region_masses(&self, density: &Density, side: f64, n: usize) -> Vec<f64> {
        let h = side / self.resolution as f64;
        let mut out = vec![0.0; n];
        for (flat, &l) in self.labels.iter().enumerate() {
            let idx = self.cell_index(flat);
            let lo: Vec<f64> = (0..self.dim).map(|a| idx[a] as f64 * h).collect();
            let hi: Vec<f64> = (0..self.dim)
                .map(|a| ((idx[a] + 1) as f64 * h).min(side))
                .collect();
            out[l as usize] += density.mass(&crate::geom::Rect::new(&lo, &hi));
        }
        out
    }
}

pub fn reconstruct_partition(
    shifts: &[f64],
    cost: &GroundCost,
    targets: &[Point],
    dim: usize,
    side: f64,
    resolution: usize,
) -> Raster {
    use rayon::prelude::*;
    let h = side / resolution as f64;
    let total = resolution.pow(dim as u32);
    let labels = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut x = [0.0; crate::geom::MAX_DIM];
            let mut f = flat;
            for a in (0..dim).rev() {
                x[a] = ((f % resolution) as f64 + 0.5) * h;
                f /= resolution;
            }
            label_at(&x[..dim], shifts, cost, targets) as u32
        })
        .collect();
    Raster {
        dim,
        resolution,
        labels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::point;

    fn edge(i: usize, j: usize, a_ij: f64) -> GraphEdge {
        GraphEdge {
            i,
            j,
            pair_count: 1,
            a_ij,
            bound: 0.1,
        }
    }

    #[test]
    fn chain_solve() {
        // The middle vertex has the top degree and anchors; compare up to gauge.
        let s = solve_shifts(3, &[edge(0, 1, 2.0), edge(1, 2, -1.0)]).unwrap();
        let shifted: Vec<f64> = s.values.iter().map(|v| v - s.values[0]).collect();
        assert_eq!(shifted, vec![0.0, -2.0, -1.0]);
        assert_eq!(s.tree_edges.len(), 2);
        assert_eq!(s.anchor, 1);
        assert_eq!(s.errors[1], 0.0);
    }

    #[test]
    fn zero_differences_give_equal_shifts() {
        let s = solve_shifts(
            4,
            &[
                edge(0, 1, 0.0),
                edge(1, 2, 0.0),
                edge(2, 3, 0.0),
                edge(0, 3, 0.0),
            ],
        )
        .unwrap();
        assert!(s.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn triangle_uses_two_edges() {
        let s = solve_shifts(3, &[edge(0, 1, 1.0), edge(1, 2, 1.0), edge(0, 2, 2.5)]).unwrap();
        assert_eq!(s.tree_edges.len(), 2);
        assert_eq!(s.residuals.len(), 1);
        assert!((s.residuals[0].2 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn disconnected_is_an_error() {
        assert!(matches!(
            solve_shifts(3, &[edge(0, 1, 1.0)]),
            Err(SdotError::Disconnected(_))
        ));
    }

    #[test]
    fn quadratic_midpoint_is_mean() {
        // g for l2^2 between y_i=(0,0), y_j=(1,0) is 2x - 1; pick x_i, x_j with g = -0.3, 0.5.
        let ps = PairSet {
            i: 0,
            j: 1,
            pairs: vec![(point(&[0.35, 0.0]), point(&[0.75, 0.0]))],
            keys: vec![(0, 1)],
        };
        let t = [point(&[0.0, 0.0]), point(&[1.0, 0.0])];
        let (a, _) = estimate_shift_difference(
            &ps,
            &GroundCost::l2_squared(),
            &t,
            2,
            0.4,
            PairSelection::Closest,
        );
        assert!((a - 0.1).abs() < 1e-15);
    }

    #[test]
    fn symmetric_pair_gives_zero() {
        let ps = PairSet {
            i: 0,
            j: 1,
            pairs: vec![(point(&[0.45, 0.5]), point(&[0.55, 0.5]))],
            keys: vec![(0, 1)],
        };
        let t = [point(&[0.25, 0.5]), point(&[0.75, 0.5])];
        let (a, b) =
            estimate_shift_difference(&ps, &GroundCost::l2(), &t, 2, 0.1, PairSelection::Closest);
        assert_eq!(a, 0.0);
        assert!((b - 0.1).abs() < 1e-15);
    }

    #[test]
    fn voronoi_when_shifts_vanish() {
        let t = [point(&[0.25, 0.75]), point(&[0.75, 0.25])];
        let r = reconstruct_partition(&[0.0, 0.0], &GroundCost::l2(), &t, 2, 1.0, 64);
        for (flat, &l) in r.labels.iter().enumerate() {
            let idx = r.cell_index(flat);
            let expect = if idx[1] > idx[0] {
                0
            } else if idx[1] < idx[0] {
                1
            } else {
                0
            };
            assert_eq!(l, expect);
        }
        assert_eq!(r.labels.iter().filter(|&&l| l == 0).count(), 64 * 65 / 2);
    }
}
