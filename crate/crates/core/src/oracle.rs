//! Slow, independent reference computations: exact small transport problems
//! and tensor midpoint-rule integration.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::error::{Result, SdotError};
use crate::geom::{Point, Rect, MAX_DIM};

pub const MAX_SOURCES: usize = 64;
pub const MAX_SINKS: usize = 8;
pub const MAX_DEPTH: u32 = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTransportInstance {
    /// Row-major `sources x sinks`.
    pub costs: Vec<f64>,
    pub masses: Vec<f64>,
    pub capacities: Vec<f64>,
}

impl DenseTransportInstance {
    pub fn new(costs: Vec<Vec<f64>>, masses: Vec<f64>, capacities: Vec<f64>) -> Result<Self> {
        let n = capacities.len();
        if costs.len() != masses.len() || costs.iter().any(|r| r.len() != n) {
            return Err(SdotError::InvalidInput(
                "cost matrix shape does not match masses and capacities".into(),
            ));
        }
        if costs.iter().flatten().any(|c| !c.is_finite()) {
            return Err(SdotError::InvalidInput(
                "cost matrix has non-finite entries".into(),
            ));
        }
        let (s, t): (f64, f64) = (masses.iter().sum(), capacities.iter().sum());
        if (s - t).abs() > 1e-12 * s.max(t).max(1.0) {
            return Err(SdotError::Unbalanced {
                supply: s,
                demand: t,
            });
        }
        Ok(DenseTransportInstance {
            costs: costs.concat(),
            masses,
            capacities,
        })
    }

    pub fn sources(&self) -> usize {
        self.masses.len()
    }

    pub fn sinks(&self) -> usize {
        self.capacities.len()
    }

    pub fn cost(&self, s: usize, t: usize) -> f64 {
        self.costs[s * self.sinks() + t]
    }

    /// Total cost of a row-major plan.
    pub fn plan_cost(&self, plan: &[f64]) -> f64 {
        plan.iter().zip(&self.costs).map(|(f, c)| f * c).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OraclePlan {
    pub cost: f64,
    /// Row-major flows.
    pub plan: Vec<f64>,
}

/// Exact optimum by the transportation simplex with Bland's rule.
pub fn brute_force_transport(inst: &DenseTransportInstance) -> Result<OraclePlan> {
    let (m, n) = (inst.sources(), inst.sinks());
    if m > MAX_SOURCES || n > MAX_SINKS || m == 0 || n == 0 {
        return Err(SdotError::OracleTooLarge {
            sources: m,
            sinks: n,
        });
    }
    let mut flow = vec![0.0; m * n];
    let mut basic = vec![false; m * n];

    // Northwest corner start; keeps exactly m + n - 1 basic cells.
    let (mut supply, mut demand) = (inst.masses.clone(), inst.capacities.clone());
    let (mut i, mut j) = (0, 0);
    loop {
        let f = supply[i].min(demand[j]);
        flow[i * n + j] = f;
        basic[i * n + j] = true;
        supply[i] -= f;
        demand[j] -= f;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if (supply[i] <= demand[j] && i < m - 1) || j == n - 1 {
            i += 1;
        } else {
            j += 1;
        }
    }

    let scale = inst
        .costs
        .iter()
        .fold(0.0f64, |a, c| a.max(c.abs()))
        .max(1e-300);
    let tol = 1e-12 * scale;
    for _ in 0..100_000 {
        let (u, v) = potentials(inst, &basic);
        let entering =
            (0..m * n).find(|&k| !basic[k] && inst.costs[k] - u[k / n] - v[k % n] < -tol);
        let Some(enter) = entering else {
            for f in &mut flow {
                *f = f.max(0.0);
            }
            return Ok(OraclePlan {
                cost: inst.plan_cost(&flow),
                plan: flow,
            });
        };
        let cycle = basis_path(m, n, &basic, enter / n, enter % n);
        // Odd positions along the path lose flow.
        let theta = cycle
            .iter()
            .step_by(2)
            .map(|&k| flow[k])
            .fold(f64::INFINITY, f64::min);
        let leave = *cycle
            .iter()
            .step_by(2)
            .filter(|&&k| flow[k] == theta)
            .min()
            .unwrap();
        for (pos, &k) in cycle.iter().enumerate() {
            if pos % 2 == 0 {
                flow[k] -= theta;
            } else {
                flow[k] += theta;
            }
        }
        flow[enter] += theta;
        flow[leave] = 0.0;
        basic[leave] = false;
        basic[enter] = true;
    }
    Err(SdotError::InvalidInput(
        "transportation simplex did not terminate".into(),
    ))
}

fn potentials(inst: &DenseTransportInstance, basic: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let (m, n) = (inst.sources(), inst.sinks());
    let mut u = vec![f64::NAN; m];
    let mut v = vec![f64::NAN; n];
    u[0] = 0.0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(node) = queue.pop_front() {
        if node < m {
            for j in 0..n {
                if basic[node * n + j] && v[j].is_nan() {
                    v[j] = inst.cost(node, j) - u[node];
                    queue.push_back(m + j);
                }
            }
        } else {
            let j = node - m;
            for i in 0..m {
                if basic[i * n + j] && u[i].is_nan() {
                    u[i] = inst.cost(i, j) - v[j];
                    queue.push_back(i);
                }
            }
        }
    }
    (u, v)
}

/// Basic cells on the tree path from column `j` back to row `i`, in order.
fn basis_path(m: usize, n: usize, basic: &[bool], i: usize, j: usize) -> Vec<usize> {
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; m + n];
    let mut seen = vec![false; m + n];
    seen[i] = true;
    let mut queue = VecDeque::from([i]);
    while let Some(node) = queue.pop_front() {
        if node == m + j {
            break;
        }
        let nbrs: Vec<(usize, usize)> = if node < m {
            (0..n)
                .filter(|&c| basic[node * n + c])
                .map(|c| (m + c, node * n + c))
                .collect()
        } else {
            let c = node - m;
            (0..m)
                .filter(|&r| basic[r * n + c])
                .map(|r| (r, r * n + c))
                .collect()
        };
        for (next, cell) in nbrs {
            if !seen[next] {
                seen[next] = true;
                parent[next] = Some((node, cell));
                queue.push_back(next);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = m + j;
    while let Some((prev, cell)) = parent[node] {
        path.push(cell);
        node = prev;
    }
    path
}

/// Midpoint rule on a tensor grid with `2^depth` points per axis.
pub fn riemann_integral(
    integrand: &(dyn Fn(&Point) -> f64 + Sync),
    rect: &Rect,
    depth: u32,
) -> f64 {
    assert!(depth <= MAX_DEPTH, "depth capped at {MAX_DEPTH}");
    let k = 1usize << depth;
    let d = rect.dim;
    let h: Vec<f64> = (0..d)
        .map(|a| (rect.hi[a] - rect.lo[a]) / k as f64)
        .collect();
    let cell = h.iter().product::<f64>();
    let inner = k.pow(d as u32 - 1);
    let rows: Vec<f64> = (0..k)
        .into_par_iter()
        .map(|i0| {
            let mut p = [0.0; MAX_DIM];
            p[0] = rect.lo[0] + (i0 as f64 + 0.5) * h[0];
            let mut s = 0.0;
            for rest in 0..inner {
                let mut r = rest;
                for a in 1..d {
                    p[a] = rect.lo[a] + ((r % k) as f64 + 0.5) * h[a];
                    r /= k;
                }
                s += integrand(&p);
            }
            s
        })
        .collect();
    rows.iter().sum::<f64>() * cell
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_diagonal() {
        let inst = DenseTransportInstance::new(
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![0.5, 0.5],
            vec![0.5, 0.5],
        )
        .unwrap();
        let sol = brute_force_transport(&inst).unwrap();
        assert_eq!(sol.cost, 0.0);
        assert_eq!(sol.plan, vec![0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn single_sink() {
        let inst = DenseTransportInstance::new(
            vec![vec![2.0], vec![3.0], vec![5.0]],
            vec![0.2, 0.3, 0.5],
            vec![1.0],
        )
        .unwrap();
        let sol = brute_force_transport(&inst).unwrap();
        assert!((sol.cost - (0.4 + 0.9 + 2.5)).abs() < 1e-15);
    }

    #[test]
    fn size_cap_and_balance() {
        let big = DenseTransportInstance::new(vec![vec![0.0]; 65], vec![1.0 / 65.0; 65], vec![1.0])
            .unwrap();
        assert!(matches!(
            brute_force_transport(&big),
            Err(SdotError::OracleTooLarge { .. })
        ));
        assert!(matches!(
            DenseTransportInstance::new(vec![vec![0.0]], vec![1.0], vec![0.5]),
            Err(SdotError::Unbalanced { .. })
        ));
    }

    #[test]
    fn riemann_examples() {
        let w = 0.375;
        let b = Rect::new(&[0.25, 0.5], &[0.25 + w, 0.5 + w]);
        assert_eq!(riemann_integral(&|_| 1.0, &b, 4), w * w);
        let v = riemann_integral(&|p| p[0] * p[1], &Rect::cube(2, 1.0), 10);
        assert!((v - 0.25).abs() < 1e-6);
        let c = Rect::new(&[-0.5, -0.5], &[0.5, 0.5]);
        let v = riemann_integral(&|p| (p[0] * p[0] + p[1] * p[1]).sqrt(), &c, 11);
        assert!((v - 0.3825979).abs() < 1e-4);
    }

    #[test]
    fn riemann_converges_monotonically() {
        let c = Rect::new(&[0.1, 0.3], &[0.6, 0.9]);
        let f = |p: &Point| (p[0] * 3.0).exp() * p[1].powf(1.5);
        let vals: Vec<f64> = (4..10).map(|dpt| riemann_integral(&f, &c, dpt)).collect();
        let diffs: Vec<f64> = vals.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        assert!(diffs.windows(2).all(|d| d[1] < d[0]), "{diffs:?}");
    }
}
