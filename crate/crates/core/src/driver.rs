//! The boundary method: solve, discard interiors, refine, then recover
//! shifts and finalize the transport cost.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auction::{self, Assignment, EpsSchedule, TransportProblem};
use crate::cost::GroundCost;
use crate::error::{Result, SdotError};
use crate::geom::{Point, MAX_DIM};
use crate::grid::{ActiveSet, BoxRec, Index, NeighborStatus};
use crate::measure::Density;
use crate::shifts::{self, GraphEdge, PairSelection, ShiftSet};
use crate::wasserstein::{self, BoundaryBox, WassersteinReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Toggles {
    pub accumulate_wasserstein: bool,
    pub emit_partition: bool,
    pub emit_shifts: bool,
    pub pair_selection: PairSelection,
}

impl Default for Toggles {
    fn default() -> Self {
        Toggles {
            accumulate_wasserstein: true,
            emit_partition: true,
            emit_shifts: true,
            pair_selection: PairSelection::Closest,
        }
    }
}

/// Validated problem description.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub dim: usize,
    pub side: f64,
    /// Initial width `2^-w1_exp`.
    pub w1_exp: u32,
    /// Final width `2^-target_exp`.
    pub target_exp: u32,
    pub cost: GroundCost,
    pub density: Density,
    pub targets: Vec<Point>,
    pub weights: Vec<f64>,
    pub toggles: Toggles,
    pub seed: u64,
}

impl RunConfig {
    pub fn w1(&self) -> f64 {
        (-(self.w1_exp as f64)).exp2()
    }

    pub fn target_width(&self) -> f64 {
        (-(self.target_exp as f64)).exp2()
    }

    pub fn n(&self) -> usize {
        self.targets.len()
    }

    /// Every violated invariant, one message each.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let n = self.targets.len();
        if !(1..=MAX_DIM).contains(&self.dim) {
            errs.push(format!("dimension must be 1..={MAX_DIM}, got {}", self.dim));
        }
        if self.density.dim() != self.dim {
            errs.push(format!(
                "density has dimension {}, config has {}",
                self.density.dim(),
                self.dim
            ));
        }
        if n < 2 {
            errs.push(format!("need at least 2 targets, got {n}"));
        }
        if self.weights.len() != n {
            errs.push("one weight per target required".to_string());
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            errs.push(format!("target weights sum to {total}, not 1"));
        }
        for (i, w) in self.weights.iter().enumerate() {
            if !(*w > 0.0) {
                errs.push(format!("target {i} has non-positive weight {w}"));
            }
        }
        for (i, y) in self.targets.iter().enumerate() {
            if y[..self.dim.min(MAX_DIM)]
                .iter()
                .any(|v| !(0.0..=self.side).contains(v))
            {
                errs.push(format!(
                    "target {i} at {:?} lies outside [0, {}]^{}",
                    &y[..self.dim.min(MAX_DIM)],
                    self.side,
                    self.dim
                ));
            }
        }
        let ratio = self.side / self.w1();
        if !(ratio >= 1.0 && (ratio - ratio.round()).abs() <= 1e-9 * ratio) {
            errs.push(format!(
                "side {} is not an integer multiple of w1 = 2^-{}",
                self.side, self.w1_exp
            ));
        }
        if self.target_exp < self.w1_exp {
            errs.push(format!(
                "target width 2^-{} is coarser than w1 = 2^-{}",
                self.target_exp, self.w1_exp
            ));
        }
        if self.target_exp > 20 {
            errs.push(format!(
                "target width 2^-{} exceeds the supported index range",
                self.target_exp
            ));
        }
        let w1 = self.w1();
        for (k, p) in self.density.pieces().iter().enumerate() {
            let d = p.region.dim.min(self.dim);
            let on_grid =
                |v: f64| ((v / w1) - (v / w1).round()).abs() <= 1e-9 * (v / w1).abs().max(1.0);
            if !(p.region.lo[..d]
                .iter()
                .chain(&p.region.hi[..d])
                .all(|&v| on_grid(v)))
            {
                errs.push(format!(
                    "density piece {k} boundary is off the initial grid lines"
                ));
            }
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(SdotError::Config(errs))
        }
    }

    /// Target pairs sharing one initial box; a hint that `w1` is too coarse.
    pub fn coarse_pairs(&self) -> Vec<(usize, usize)> {
        let w1 = self.w1();
        let cell =
            |y: &Point| -> Vec<i64> { (0..self.dim).map(|a| (y[a] / w1).floor() as i64).collect() };
        let mut out = Vec::new();
        for i in 0..self.n() {
            for j in i + 1..self.n() {
                if cell(&self.targets[i]) == cell(&self.targets[j]) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct BoundaryState {
    pub active: ActiveSet,
    /// `None` when no closed-form cost integral applies.
    pub p_tilde: Option<f64>,
    /// Magnitude of the terms summed into `p_tilde`, for rounding estimates.
    pub p_tilde_scale: f64,
    pub nu_tilde: Vec<f64>,
    /// Mass discarded so far to each target.
    pub discarded_mass: Vec<f64>,
    pub prices: Option<Vec<f64>>,
}

impl BoundaryState {
    pub fn level(&self) -> u32 {
        self.active.level()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub r: u32,
    pub width: f64,
    pub active_boxes: usize,
    pub boundary_boxes: usize,
    pub boundary_mass: f64,
    pub p_tilde: Option<f64>,
    pub worst_case_error: f64,
    pub auction_bids: u64,
    /// Share of unsplit boxes whose label matches the inherited one.
    pub warm_label_agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalBox {
    pub index: Vec<u32>,
    pub label: usize,
    pub split: bool,
    pub mass: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub iterations: Vec<IterationStats>,
    pub boundary: Vec<FinalBox>,
    pub edges: Vec<GraphEdge>,
    pub shifts: ShiftSet,
    pub wasserstein: Option<WassersteinReport>,
    /// Discarded plus boundary mass per label.
    pub region_mass: Vec<f64>,
    pub unresolved_mass: f64,
    pub warnings: Vec<String>,
    /// Wall time per iteration in seconds; kept out of summaries.
    pub timings: Vec<f64>,
    pub state: BoundaryState,
}

/// Sinks with capacity left, and the problem restricted to them.
fn build_problem(
    state: &BoundaryState,
    cost: &GroundCost,
    targets: &[Point],
) -> Result<(TransportProblem, Vec<usize>)> {
    let active = &state.active;
    let masses: Vec<f64> = active.boxes().iter().map(|b| b.mass).collect();
    let supply: f64 = masses.iter().sum();
    let live: Vec<usize> = (0..targets.len())
        .filter(|&i| state.nu_tilde[i] > 1e-13 * supply.max(1e-300))
        .collect();
    let mut caps: Vec<f64> = live.iter().map(|&i| state.nu_tilde[i]).collect();
    let residual = supply - caps.iter().sum::<f64>();
    if residual.abs() > 1e-9 * supply.max(1.0) {
        return Err(SdotError::Unbalanced {
            supply,
            demand: supply - residual,
        });
    }
    let largest = (0..caps.len()).fold(0, |b, k| if caps[k] > caps[b] { k } else { b });
    caps[largest] += residual;
    let centers: Vec<Point> = (0..active.len()).map(|id| active.center(id)).collect();
    let live_targets: Vec<Point> = live.iter().map(|&i| targets[i]).collect();
    let problem =
        TransportProblem::from_points(cost, active.dim(), &centers, masses, &live_targets, caps)?;
    Ok((problem, live))
}

/// Approximate discrete transport from active boxes to targets.
fn solve_level(
    state: &mut BoundaryState,
    cost: &GroundCost,
    targets: &[Point],
) -> Result<(u64, Option<f64>)> {
    let (problem, live) = build_problem(state, cost, targets)?;
    let warm: Option<Vec<f64>> = state
        .prices
        .as_ref()
        .map(|p| live.iter().map(|&i| p[i]).collect());
    let schedule = match &warm {
        Some(_) => EpsSchedule::warm(
            &problem,
            cost.neighbor_cost_bound(state.active.width(), state.active.dim()),
        ),
        None => EpsSchedule::standard(&problem),
    };
    let assignment = auction::solve(&problem, warm.as_deref(), schedule)?;
    let agreement = apply_assignment(state, &assignment, &live);
    let mut prices = state
        .prices
        .take()
        .unwrap_or_else(|| vec![0.0; targets.len()]);
    for (k, &i) in live.iter().enumerate() {
        prices[i] = assignment.prices[k];
    }
    state.prices = Some(prices);
    Ok((assignment.bids, agreement))
}

/// Writes destinations into the active set; returns warm-label agreement.
fn apply_assignment(state: &mut BoundaryState, a: &Assignment, live: &[usize]) -> Option<f64> {
    let (mut same, mut unsplit) = (0usize, 0usize);
    let had_labels = state
        .active
        .boxes()
        .first()
        .is_some_and(|b| b.label.is_some());
    for id in 0..state.active.len() {
        let d = a.destination(id);
        let label = live[d.target];
        if !d.split {
            unsplit += 1;
            same += (state.active.boxes()[id].label == Some(label)) as usize;
        }
        state.active.set_label(id, label, d.split);
    }
    (had_labels && unsplit > 0).then(|| same as f64 / unsplit as f64)
}

/// Remove internal, unsplit boxes whose label agrees with every
/// neighbor, charging their cost to `p_tilde`.
pub fn discard_interiors(
    state: &mut BoundaryState,
    cost: &GroundCost,
    density: &Density,
    targets: &[Point],
) -> Result<Vec<BoxRec>> {
    let active = &state.active;
    let ids: Vec<usize> = (0..active.len())
        .into_par_iter()
        .filter(|&id| {
            let b = &active.boxes()[id];
            if b.edge || b.split {
                return false;
            }
            let mut agree = true;
            active.for_each_neighbor(id, |n| agree &= n.status.label() == b.label);
            agree
        })
        .collect();
    let rects: Vec<_> = ids.iter().map(|&id| active.rect(id)).collect();
    let removed = state.active.discard(&ids);

    if state.p_tilde.is_some() {
        let parts: Vec<(f64, f64)> = removed
            .par_iter()
            .zip(&rects)
            .map(|(b, r)| {
                wasserstein::integral_and_scale(cost, density, r, &targets[b.label.unwrap()])
            })
            .collect::<Result<_>>()?;
        let mut p = state.p_tilde.unwrap();
        for (v, s) in parts {
            p += v;
            state.p_tilde_scale += s;
        }
        state.p_tilde = Some(p);
    }
    for b in &removed {
        let i = b.label.unwrap();
        state.nu_tilde[i] -= b.mass;
        state.discarded_mass[i] += b.mass;
        if state.nu_tilde[i] < -1e-9 {
            return Err(SdotError::MassAccounting {
                target: i,
                value: state.nu_tilde[i],
            });
        }
    }
    Ok(removed)
}

/// Sum over boundary boxes of `μ(x) * max |g_ij|` on the box, where `i` is
/// the box's label and `j` a differing neighbor label.
pub fn worst_case_running_error(active: &ActiveSet, cost: &GroundCost, targets: &[Point]) -> f64 {
    let d = active.dim();
    let per_box: Vec<f64> = (0..active.len())
        .into_par_iter()
        .map(|id| {
            let b = &active.boxes()[id];
            let Some(i) = b.label else { return 0.0 };
            let mut others: Vec<usize> = Vec::new();
            active.for_each_neighbor(id, |n| {
                if let Some(j) = n.status.label() {
                    if j != i && !others.contains(&j) {
                        others.push(j);
                    }
                }
            });
            if others.is_empty() {
                return 0.0;
            }
            let rect = active.rect(id);
            let mut samples = rect.corners();
            samples.push(rect.center());
            let mut worst = 0.0f64;
            for z in &samples {
                let ci = cost.cost(&z[..d], &targets[i][..d]);
                for &j in &others {
                    worst = worst.max((ci - cost.cost(&z[..d], &targets[j][..d])).abs());
                }
            }
            b.mass * worst
        })
        .collect();
    per_box.iter().sum()
}

/// Labels of a box and all its labeled neighbors, sorted.
fn candidate_labels(active: &ActiveSet, id: usize) -> Vec<usize> {
    let mut c = vec![active.boxes()[id].label.unwrap()];
    active.for_each_neighbor(id, |n| {
        if let Some(l) = n.status.label() {
            c.push(l);
        }
    });
    c.sort_unstable();
    c.dedup();
    c
}

pub fn run(config: &RunConfig) -> Result<RunResult> {
    run_observed(config, |_| {})
}

/// As [`run`], calling `observe` after each discard step.
pub fn run_observed(
    config: &RunConfig,
    mut observe: impl FnMut(&BoundaryState),
) -> Result<RunResult> {
    config.validate()?;
    let (cost, density, targets) = (&config.cost, &config.density, &config.targets);
    let n = config.n();
    let mut warnings = Vec::new();
    for (i, j) in config.coarse_pairs() {
        warnings.push(format!(
            "targets {i} and {j} share an initial box; consider a smaller w1"
        ));
    }
    let closed_form =
        config.toggles.accumulate_wasserstein && wasserstein::closed_form_available(cost, density);
    if config.toggles.accumulate_wasserstein && !closed_form {
        warnings.push(
            "no closed-form cost integral for this cost and density; transport cost unavailable"
                .into(),
        );
    }

    let mut state = BoundaryState {
        active: ActiveSet::initial_grid(config.side, config.w1(), density)?,
        p_tilde: closed_form.then_some(0.0),
        p_tilde_scale: 0.0,
        nu_tilde: config.weights.clone(),
        discarded_mass: vec![0.0; n],
        prices: None,
    };
    let mut iterations = Vec::new();
    let mut timings = Vec::new();
    loop {
        let t0 = Instant::now();
        let active_boxes = state.active.len();
        let (bids, agreement) = solve_level(&mut state, cost, targets)?;
        discard_interiors(&mut state, cost, density, targets)?;
        observe(&state);
        iterations.push(IterationStats {
            r: state.level(),
            width: state.active.width(),
            active_boxes,
            boundary_boxes: state.active.len(),
            boundary_mass: state.active.boxes().iter().map(|b| b.mass).sum(),
            p_tilde: state.p_tilde,
            worst_case_error: worst_case_running_error(&state.active, cost, targets),
            auction_bids: bids,
            warm_label_agreement: agreement,
        });
        let done =
            state.level() - 1 + config.w1_exp >= config.target_exp || state.active.is_empty();
        if done {
            timings.push(t0.elapsed().as_secs_f64());
            break;
        }
        state.active = state.active.refine(density)?;
        timings.push(t0.elapsed().as_secs_f64());
    }

    // Shifts from the final boundary set.
    let active = &state.active;
    let width = active.width();
    let graph = shifts::build_adjacency(active, n)?;
    let edges = graph.estimate(
        cost,
        targets,
        config.dim,
        width,
        config.toggles.pair_selection,
    );
    let shift_set = shifts::solve_shifts(n, &edges)?;
    if cost.is_norm() {
        for (i, j) in shift_set.dominance_violations(cost, targets, config.dim) {
            warnings.push(format!(
                "shift difference a_{i} - a_{j} exceeds c(y_{i}, y_{j}); region {j} would be empty"
            ));
        }
    }

    // Transport cost estimate.
    let boundary_boxes: Vec<BoundaryBox> = (0..active.len())
        .map(|id| BoundaryBox {
            rect: active.rect(id),
            mass: active.boxes()[id].mass,
            label: active.boxes()[id].label.unwrap(),
            candidates: candidate_labels(active, id),
        })
        .collect();
    let wasserstein = match state.p_tilde {
        Some(p) => {
            let mut rep = wasserstein::finalize(p, &boundary_boxes, cost, density, targets)?;
            rep.rounding_allowance += 8.0 * f64::EPSILON * state.p_tilde_scale;
            rep.gamma_star = rep.gamma_boxes + rep.rounding_allowance;
            Some(rep)
        }
        None => None,
    };

    let mut region_mass = state.discarded_mass.clone();
    for b in active.boxes() {
        region_mass[b.label.unwrap()] += b.mass;
    }
    let boundary = active
        .boxes()
        .iter()
        .map(|b| FinalBox {
            index: b.index[..config.dim].to_vec(),
            label: b.label.unwrap(),
            split: b.split,
            mass: b.mass,
        })
        .collect();
    Ok(RunResult {
        unresolved_mass: active.boxes().iter().map(|b| b.mass).sum(),
        iterations,
        boundary,
        edges,
        shifts: shift_set,
        wasserstein,
        region_mass,
        warnings,
        timings,
        state,
    })
}

/// Level-`r` indices of every box meeting the zero set of `g`; used to
/// check that the boundary set keeps the true boundary.
pub fn straddles(active: &ActiveSet, index: &Index, g: impl Fn(&[f64]) -> f64) -> bool {
    let r = active.rect_of(index);
    let d = active.dim();
    let vals: Vec<f64> = r.corners().iter().map(|c| g(&c[..d])).collect();
    vals.iter().any(|&v| v >= 0.0) && vals.iter().any(|&v| v <= 0.0)
}

/// True when the position is neither active nor zero, i.e. discarded.
pub fn is_discarded(active: &ActiveSet, index: &Index) -> bool {
    let mut pos = [0i64; MAX_DIM];
    for a in 0..active.dim() {
        pos[a] = index[a] as i64;
    }
    matches!(active.status_of(&pos).1, NeighborStatus::Discarded { .. })
}
