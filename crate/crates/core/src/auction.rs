//! Forward auction with epsilon scaling for transport problems with
//! divisible source masses.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rayon::prelude::*;

use crate::cost::GroundCost;
use crate::error::{Result, SdotError};
use crate::geom::Point;

/// Discrete transport instance: sources with masses, sinks with capacities.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportProblem {
    masses: Vec<f64>,
    capacities: Vec<f64>,
    /// Row-major `sources x sinks`.
    costs: Vec<f64>,
}

impl TransportProblem {
    pub fn new(
        masses: Vec<f64>,
        capacities: Vec<f64>,
        costs: Vec<f64>,
    ) -> Result<TransportProblem> {
        let (m, n) = (masses.len(), capacities.len());
        if m == 0 || n == 0 || costs.len() != m * n {
            return Err(SdotError::InvalidInput(format!(
                "transport problem shape: {m} sources, {n} sinks, {} costs",
                costs.len()
            )));
        }
        if masses
            .iter()
            .chain(&capacities)
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(SdotError::InvalidInput(
                "masses and capacities must be positive".into(),
            ));
        }
        if costs.iter().any(|c| !c.is_finite()) {
            return Err(SdotError::InvalidInput("costs must be finite".into()));
        }
        let (s, d): (f64, f64) = (masses.iter().sum(), capacities.iter().sum());
        if (s - d).abs() > 1e-9 * s.max(d) {
            return Err(SdotError::Unbalanced {
                supply: s,
                demand: d,
            });
        }
        Ok(TransportProblem {
            masses,
            capacities,
            costs,
        })
    }

    pub fn from_dense(
        costs: &[Vec<f64>],
        masses: Vec<f64>,
        capacities: Vec<f64>,
    ) -> Result<TransportProblem> {
        TransportProblem::new(masses, capacities, costs.concat())
    }

    /// Costs evaluated between source points and target points.
    pub fn from_points(
        cost: &GroundCost,
        dim: usize,
        sources: &[Point],
        masses: Vec<f64>,
        targets: &[Point],
        capacities: Vec<f64>,
    ) -> Result<TransportProblem> {
        let costs: Vec<f64> = sources
            .par_iter()
            .flat_map_iter(|x| targets.iter().map(move |y| cost.cost(&x[..dim], &y[..dim])))
            .collect();
        TransportProblem::new(masses, capacities, costs)
    }

    pub fn sources(&self) -> usize {
        self.masses.len()
    }

    pub fn sinks(&self) -> usize {
        self.capacities.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    #[inline]
    pub fn cost(&self, s: usize, t: usize) -> f64 {
        self.costs[s * self.capacities.len() + t]
    }

    pub fn cost_range(&self) -> f64 {
        let (lo, hi) = self
            .costs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &c| {
                (a.min(c), b.max(c))
            });
        hi - lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsSchedule {
    pub eps0: f64,
    pub factor: f64,
    pub eps_min: f64,
}

impl EpsSchedule {
    /// `range / 8` down to `1e-9 * range` in steps of 4.
    pub fn standard(problem: &TransportProblem) -> EpsSchedule {
        let range = problem.cost_range().max(f64::MIN_POSITIVE * 1e9);
        EpsSchedule {
            eps0: range / 8.0,
            factor: 4.0,
            eps_min: 1e-9 * range,
        }
    }

    /// Standard schedule with a smaller starting epsilon for warm starts.
    pub fn warm(problem: &TransportProblem, eps0: f64) -> EpsSchedule {
        let s = EpsSchedule::standard(problem);
        EpsSchedule {
            eps0: eps0.clamp(s.eps_min * s.factor, s.eps0),
            ..s
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps_min > 0.0 && self.eps0 > self.eps_min && self.factor > 1.0) {
            return Err(SdotError::InvalidInput(format!(
                "bad epsilon schedule {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Per source: `(sink, mass)` sorted by sink.
    pub shares: Vec<Vec<(usize, f64)>>,
    /// Per sink certificate prices.
    pub prices: Vec<f64>,
    pub epsilon_final: f64,
    pub bids: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Destination {
    pub target: usize,
    pub split: bool,
}

impl Assignment {
    /// Largest share wins, ties to the lowest sink id; `split` when more
    /// than one share is non-negligible.
    pub fn destination(&self, source: usize) -> Destination {
        destination_of(&self.shares[source])
    }

    pub fn primal_cost(&self, problem: &TransportProblem) -> f64 {
        self.shares
            .iter()
            .enumerate()
            .map(|(s, sh)| sh.iter().map(|&(t, m)| m * problem.cost(s, t)).sum::<f64>())
            .sum()
    }
}

pub fn destination_of(shares: &[(usize, f64)]) -> Destination {
    let total: f64 = shares.iter().map(|s| s.1).sum();
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for &(t, m) in shares {
        if m > best.1 || (m == best.1 && t < best.0) {
            best = (t, m);
        }
    }
    let significant = shares.iter().filter(|s| s.1 > 1e-9 * total).count();
    Destination {
        target: best.0,
        split: significant > 1,
    }
}

/// Independent post-hoc check of feasibility and epsilon-complementary slackness.
pub fn verify_eps_cs(
    problem: &TransportProblem,
    a: &Assignment,
) -> std::result::Result<(), String> {
    let (m, n) = (problem.sources(), problem.sinks());
    let total: f64 = problem.masses.iter().sum();
    let mut inflow = vec![0.0; n];
    for s in 0..m {
        let out: f64 = a.shares[s].iter().map(|x| x.1).sum();
        if (out - problem.masses[s]).abs() > 1e-9 * problem.masses[s] {
            return Err(format!("source {s} ships {out} of {}", problem.masses[s]));
        }
        for &(t, q) in &a.shares[s] {
            inflow[t] += q;
        }
    }
    for t in 0..n {
        if inflow[t] > problem.capacities[t] + 1e-9 * total {
            return Err(format!(
                "sink {t} receives {} over capacity {}",
                inflow[t], problem.capacities[t]
            ));
        }
    }
    let slack = a.epsilon_final + 1e-12 * problem.cost_range().max(1.0);
    for s in 0..m {
        let best = (0..n)
            .map(|t| problem.cost(s, t) + a.prices[t])
            .fold(f64::INFINITY, f64::min);
        for &(t, q) in &a.shares[s] {
            let v = problem.cost(s, t) + a.prices[t];
            if q > 0.0 && v > best + slack {
                return Err(format!(
                    "eps-CS violated at source {s}, sink {t}: {v} > {best} + {slack}"
                ));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct Held {
    price: f64,
    seq: u64,
    source: u32,
    amount: u64,
}

// Min-heap order on (price, seq).
impl Ord for Held {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .price
            .total_cmp(&self.price)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}
impl PartialOrd for Held {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl PartialEq for Held {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Held {}

struct Sink {
    cap: u64,
    held: u64,
    base: f64,
    heap: BinaryHeap<Held>,
}

impl Sink {
    fn price(&self) -> f64 {
        match self.heap.peek() {
            Some(h) if self.held == self.cap => h.price,
            _ => self.base,
        }
    }
}

const MAX_BIDS_PER_SOURCE: u64 = 4000;

/// Masses are moved in integer units of `total / 2^QUANTA_BITS`, so supply
/// and capacity balance exactly.
const QUANTA_BITS: i32 = 50;

/// Solve with epsilon scaling. `warm_prices` seeds the sink prices.
pub fn solve(
    problem: &TransportProblem,
    warm_prices: Option<&[f64]>,
    schedule: EpsSchedule,
) -> Result<Assignment> {
    schedule.validate()?;
    let (m, n) = (problem.sources(), problem.sinks());
    if let Some(p) = warm_prices {
        if p.len() != n {
            return Err(SdotError::DimensionMismatch {
                expected: n,
                got: p.len(),
            });
        }
    }
    let total: f64 = problem.masses.iter().sum();
    let quantum = total * 2f64.powi(-QUANTA_BITS);
    let to_units = |v: f64| ((v / quantum).round() as u64).max(1);
    let masses: Vec<u64> = problem.masses.iter().map(|&v| to_units(v)).collect();
    let mut caps: Vec<u64> = problem.capacities.iter().map(|&v| to_units(v)).collect();
    let (supply, demand): (u64, u64) = (masses.iter().sum(), caps.iter().sum());
    if supply > demand {
        let largest = (0..n).fold(0, |b, t| if caps[t] > caps[b] { t } else { b });
        caps[largest] += supply - demand;
    }

    let mut sinks: Vec<Sink> = (0..n)
        .map(|t| Sink {
            cap: caps[t],
            held: 0,
            base: warm_prices.map_or(0.0, |p| p[t]),
            heap: BinaryHeap::new(),
        })
        .collect();

    let max_bids = 1_000_000 + MAX_BIDS_PER_SOURCE * m as u64;
    let mut bids = 0u64;
    let mut seq = 0u64;
    let mut unassigned = vec![0u64; m];
    let mut queued = vec![false; m];
    let mut queue = VecDeque::with_capacity(m);
    let mut eps = schedule.eps0;
    loop {
        let floor = sinks.iter().map(|s| s.base).fold(f64::INFINITY, f64::min);
        for s in &mut sinks {
            s.base -= floor;
            s.held = 0;
            s.heap.clear();
        }
        unassigned.copy_from_slice(&masses);
        queue.clear();
        queue.extend(0..m);
        queued.fill(true);

        while let Some(s) = queue.pop_front() {
            queued[s] = false;
            let amount = std::mem::take(&mut unassigned[s]);
            if amount == 0 {
                continue;
            }
            bids += 1;
            if bids > max_bids {
                let best = collect(problem, &sinks, quantum, eps, bids);
                return Err(SdotError::NoConvergence {
                    bids,
                    best: Box::new(best),
                });
            }
            let (mut t1, mut v1, mut v2) = (0, f64::INFINITY, f64::INFINITY);
            for (t, sink) in sinks.iter().enumerate() {
                let v = problem.cost(s, t) + sink.price();
                if v < v1 {
                    v2 = v1;
                    v1 = v;
                    t1 = t;
                } else if v < v2 {
                    v2 = v;
                }
            }
            let bid = if n == 1 {
                sinks[t1].price() + eps
            } else {
                v2 - problem.cost(s, t1) + eps
            };

            let sink = &mut sinks[t1];
            let take = amount.min(sink.cap - sink.held);
            sink.held += take;
            let mut rem = amount - take;
            let mut acquired = take;
            while rem > 0 {
                let Some(mut low) = sink.heap.peek().copied() else {
                    break;
                };
                if low.price >= bid {
                    break;
                }
                sink.heap.pop();
                let victim = low.source as usize;
                if victim == s {
                    // Own share: pay the new price instead of shuffling mass.
                    acquired += low.amount;
                    continue;
                }
                let moved = low.amount.min(rem);
                if moved < low.amount {
                    low.amount -= moved;
                    sink.heap.push(low);
                }
                unassigned[victim] += moved;
                if !queued[victim] {
                    queued[victim] = true;
                    queue.push_back(victim);
                }
                acquired += moved;
                rem -= moved;
            }
            if acquired > 0 {
                seq += 1;
                sink.heap.push(Held {
                    price: bid,
                    seq,
                    source: s as u32,
                    amount: acquired,
                });
            }
            if rem > 0 {
                unassigned[s] += rem;
                if !queued[s] {
                    queued[s] = true;
                    queue.push_back(s);
                }
            }
        }

        if eps <= schedule.eps_min {
            return Ok(collect(problem, &sinks, quantum, eps, bids));
        }
        for s in &mut sinks {
            s.base = s.price();
        }
        eps = (eps / schedule.factor).max(schedule.eps_min);
    }
}

fn collect(
    problem: &TransportProblem,
    sinks: &[Sink],
    quantum: f64,
    eps: f64,
    bids: u64,
) -> Assignment {
    let mut units: Vec<Vec<(usize, u64)>> = vec![Vec::new(); problem.sources()];
    for (t, sink) in sinks.iter().enumerate() {
        for h in sink.heap.iter() {
            let list = &mut units[h.source as usize];
            match list.iter_mut().find(|e| e.0 == t) {
                Some(e) => e.1 += h.amount,
                None => list.push((t, h.amount)),
            }
        }
    }
    let shares = units
        .into_iter()
        .map(|mut list| {
            list.sort_by_key(|e| e.0);
            list.into_iter()
                .map(|(t, u)| (t, u as f64 * quantum))
                .collect()
        })
        .collect();
    Assignment {
        shares,
        prices: sinks.iter().map(Sink::price).collect(),
        epsilon_final: eps,
        bids,
    }
}
