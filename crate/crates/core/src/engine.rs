//! Anytime branch-and-bound probability bounding.
//!
//! [`BoundsEngine`] maintains converging bounds `l ≤ P(f(x, N(x)) ≥ 0) ≤ u`
//! for one term. Starting from the distribution's support box with the
//! trivial bounds `(0, 1)`, each iteration:
//!
//! 1. **selects** the highest-scoring branches (at most the batch size),
//! 2. **re-bounds** them with the configured method (interval propagation
//!    or backward linear relaxation),
//! 3. **prunes** branches proved nonnegative (their mass moves into `l`) or
//!    proved negative (mass leaves `u`; strictly negative upper bound —
//!    the satisfaction event is closed),
//! 4. **splits** every surviving branch in two along a heuristically chosen
//!    dimension; children are evaluated with cheap interval propagation at
//!    creation and may be pruned on the spot,
//! 5. **updates** `(l, u)` once and emits the new state.
//!
//! Both bounds are monotone, every emitted pair brackets the true
//! probability, and on benign instances (`P(f = 0) = 0`, continuous layout)
//! the gap shrinks to zero, so callers may stop whenever they like.

use crate::bounds::{BoundError, BoundMethod, TermBounder};
use crate::dist::{DimKind, Distribution, VariableLayout};
use crate::expr::InnerExpr;
use crate::interval::{Hyperbox, Interval};
use crate::network::Network;
use crate::par::map_batch;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error("soundness violation: lower bound {l} exceeds upper bound {u} beyond tolerance")]
    BoundsCrossed { l: f64, u: f64 },
}

/// How batch members are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectHeuristic {
    /// Largest branch mass first.
    Prob,
    /// Mass discounted by how loose the cached bounds are:
    /// `mass / ln(e + width)`. Prefers heavy branches that are close to
    /// being decided.
    ProbLogBounds,
}

/// How a branch is split in two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitHeuristic {
    /// Bisect the dimension with the largest edge length.
    LongestEdge,
    /// Try every splittable dimension, evaluate both candidate children,
    /// and pick the dimension whose worse child is closest to being pruned:
    /// score `max(max(l₁, l₂), −min(u₁, u₂))` with bounds rounded to four
    /// decimals; ties are broken by a seeded per-branch RNG.
    BaBSB,
}

/// Stopping criteria; any subset may be set.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Budget {
    pub max_iterations: Option<u64>,
    pub max_time: Option<Duration>,
    /// Stop once `u − l` is this small.
    pub target_width: Option<f64>,
}

impl Budget {
    pub const UNLIMITED: Budget = Budget {
        max_iterations: None,
        max_time: None,
        target_width: None,
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopReason {
    /// `u − l` reached the target width.
    TargetWidthReached,
    /// No branches remain. `parked_mass` is the mass of branches that were
    /// neither prunable nor splittable (fully collapsed boxes kept
    /// inconclusive by floating-point error); it stays inside `[l, u]`.
    Exhausted { parked_mass: f64 },
    IterationBudget,
    TimeBudget,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    /// Maximum branches re-bounded per iteration.
    pub batch_size: usize,
    pub method: BoundMethod,
    pub select: SelectHeuristic,
    pub split: SplitHeuristic,
    pub budget: Budget,
    /// Seed for split tie-breaking. Identical seeds give identical streams,
    /// independent of worker count.
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> EngineConfig {
        EngineConfig {
            batch_size: 128,
            method: BoundMethod::Crown,
            select: SelectHeuristic::Prob,
            split: SplitHeuristic::LongestEdge,
            budget: Budget {
                max_iterations: Some(10_000),
                ..Budget::UNLIMITED
            },
            seed: 0,
        }
    }
}

/// One unresolved region: a box, its exact probability mass, and the most
/// recent sound bounds on the satisfaction function over it.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub box_: Hyperbox,
    pub mass: f64,
    pub cached_bounds: Interval,
    pub serial: u64,
}

/// The engine's headline state: `l ≤ p ≤ u` after `t` iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsState {
    pub l: f64,
    pub u: f64,
    pub t: u64,
}

impl BoundsState {
    pub fn width(&self) -> f64 {
        self.u - self.l
    }
}

/// Per-iteration progress report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgressPoint {
    pub t: u64,
    pub l: f64,
    pub u: f64,
    /// Unresolved branches still stored.
    pub branches: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunReport {
    pub state: BoundsState,
    pub stop: StopReason,
}

#[derive(Debug)]
pub enum StepOutcome {
    Progressed(ProgressPoint),
    Finished(StopReason),
}

struct HeapEntry {
    score: f64,
    branch: Branch,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on score; equal scores surface the older branch first.
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.branch.serial.cmp(&self.branch.serial))
    }
}

fn select_score(heuristic: SelectHeuristic, mass: f64, cached: &Interval) -> f64 {
    match heuristic {
        SelectHeuristic::Prob => mass,
        SelectHeuristic::ProbLogBounds => {
            mass / (std::f64::consts::E + cached.width()).ln()
        }
    }
}

enum PruneClass {
    Satisfied,
    Violated,
    Undecided,
}

/// Boundary semantics in one place: the event is `f ≥ 0` (closed), so a
/// branch is satisfied when its lower bound reaches 0, and violated only
/// when its upper bound is *strictly* negative.
fn classify(bounds: &Interval) -> PruneClass {
    if bounds.lo() >= 0.0 {
        PruneClass::Satisfied
    } else if bounds.hi() < 0.0 {
        PruneClass::Violated
    } else {
        PruneClass::Undecided
    }
}

/// Anytime probability bounder for a single term.
pub struct BoundsEngine {
    bounder: TermBounder,
    dist: Distribution,
    layout: VariableLayout,
    config: EngineConfig,
    heap: BinaryHeap<HeapEntry>,
    state: BoundsState,
    remaining_mass: f64,
    parked_mass: f64,
    next_serial: u64,
    started: Instant,
}

impl BoundsEngine {
    /// Prepares the engine: builds the term bounder, takes the
    /// distribution's support box as the root branch, and caches its
    /// interval-propagation bounds.
    pub fn new(
        net: &Network,
        dist: Distribution,
        layout: VariableLayout,
        expr: &InnerExpr,
        config: EngineConfig,
    ) -> Result<BoundsEngine, EngineError> {
        let bounder = TermBounder::new(net, expr, config.method)?;
        let root_box = dist.support_box(&layout);
        let mass = dist.box_probability(&layout, &root_box);
        let cached = bounder.bound_with_ia(&root_box)?;
        let root = Branch {
            box_: root_box,
            mass,
            cached_bounds: cached,
            serial: 0,
        };
        let mut heap = BinaryHeap::new();
        heap.push(HeapEntry {
            score: select_score(config.select, root.mass, &root.cached_bounds),
            branch: root,
        });
        Ok(BoundsEngine {
            bounder,
            dist,
            layout,
            config,
            heap,
            state: BoundsState { l: 0.0, u: 1.0, t: 0 },
            remaining_mass: mass,
            parked_mass: 0.0,
            next_serial: 1,
            started: Instant::now(),
        })
    }

    pub fn state(&self) -> BoundsState {
        self.state
    }

    pub fn branches_remaining(&self) -> usize {
        self.heap.len()
    }

    /// Mass of stored (still undecided) branches.
    pub fn remaining_mass(&self) -> f64 {
        self.remaining_mass
    }

    /// Mass of parked branches: undecided but no longer refinable.
    pub fn parked_mass(&self) -> f64 {
        self.parked_mass
    }

    /// True when the requested bounding method silently degraded to
    /// interval propagation (unsupported activation).
    pub fn ia_fallback(&self) -> bool {
        self.bounder.ia_fallback()
    }

    pub fn elapsed(&self) -> Duration {
        self.started.elapsed()
    }

    fn progress_point(&self) -> ProgressPoint {
        ProgressPoint {
            t: self.state.t,
            l: self.state.l,
            u: self.state.u,
            branches: self.heap.len(),
            elapsed: self.elapsed(),
        }
    }

    fn stop_reason(&self) -> Option<StopReason> {
        if let Some(w) = self.config.budget.target_width {
            if self.state.width() <= w {
                return Some(StopReason::TargetWidthReached);
            }
        }
        if self.heap.is_empty() {
            return Some(StopReason::Exhausted {
                parked_mass: self.parked_mass,
            });
        }
        if let Some(cap) = self.config.budget.max_iterations {
            if self.state.t >= cap {
                return Some(StopReason::IterationBudget);
            }
        }
        if let Some(limit) = self.config.budget.max_time {
            if self.started.elapsed() >= limit {
                return Some(StopReason::TimeBudget);
            }
        }
        None
    }

    /// Runs one select → bound → prune → split → update iteration, or
    /// reports why no further iteration will run. Errors are fatal: the
    /// engine must not be stepped again after one.
    pub fn step(&mut self) -> Result<StepOutcome, EngineError> {
        if let Some(reason) = self.stop_reason() {
            return Ok(StepOutcome::Finished(reason));
        }

        // Select: pop the top-scoring branches.
        let mut batch = Vec::with_capacity(self.config.batch_size);
        while batch.len() < self.config.batch_size {
            match self.heap.pop() {
                Some(entry) => batch.push(entry.branch),
                None => break,
            }
        }
        for b in &batch {
            self.remaining_mass -= b.mass;
        }

        // Bound: re-evaluate the batch with the configured method.
        let rebounds = map_batch(&batch, |b| self.bounder.bound(&b.box_));

        // Prune the batch.
        let mut sat_mass = 0.0;
        let mut viol_mass = 0.0;
        let mut survivors = Vec::new();
        for (mut branch, bounds) in batch.into_iter().zip(rebounds) {
            let bounds = bounds?;
            match classify(&bounds) {
                PruneClass::Satisfied => sat_mass += branch.mass,
                PruneClass::Violated => viol_mass += branch.mass,
                PruneClass::Undecided => {
                    branch.cached_bounds = bounds;
                    survivors.push(branch);
                }
            }
        }

        // Split every survivor; children are evaluated at creation and may
        // be pruned immediately.
        let splits = map_batch(&survivors, |b| self.split_branch(b));
        for (parent, split) in survivors.into_iter().zip(splits) {
            let children = split?;
            if children.is_empty() {
                // Nothing splittable and not prunable: park the branch. Its
                // mass stays between l and u forever, which is sound.
                self.parked_mass += parent.mass;
                continue;
            }
            for child in children {
                match classify(&child.cached_bounds) {
                    PruneClass::Satisfied => sat_mass += child.mass,
                    PruneClass::Violated => viol_mass += child.mass,
                    PruneClass::Undecided => self.push_branch(child),
                }
            }
        }

        // Update: one bounds improvement and one emission per iteration.
        let mut l = self.state.l + sat_mass;
        let mut u = self.state.u - viol_mass;
        if l > u {
            if l - u > 1e-9 {
                return Err(EngineError::BoundsCrossed { l, u });
            }
            let mid = 0.5 * (l + u);
            l = mid;
            u = mid;
        }
        self.state = BoundsState {
            l: l.clamp(0.0, 1.0),
            u: u.clamp(0.0, 1.0),
            t: self.state.t + 1,
        };
        Ok(StepOutcome::Progressed(self.progress_point()))
    }

    /// Drives `step` until it finishes, feeding one progress point per
    /// iteration to the sink (the trivial `t = 0` state is not emitted; it
    /// is available as `state()` before the first call).
    pub fn run(&mut self, mut sink: impl FnMut(&ProgressPoint)) -> Result<RunReport, EngineError> {
        loop {
            match self.step()? {
                StepOutcome::Progressed(point) => sink(&point),
                StepOutcome::Finished(stop) => {
                    return Ok(RunReport {
                        state: self.state,
                        stop,
                    })
                }
            }
        }
    }

    fn push_branch(&mut self, mut child: Branch) {
        child.serial = self.next_serial;
        self.next_serial += 1;
        self.remaining_mass += child.mass;
        self.heap.push(HeapEntry {
            score: select_score(self.config.select, child.mass, &child.cached_bounds),
            branch: child,
        });
    }

    /// Splits a branch along one heuristically chosen dimension. Children
    /// come back mass-filtered and IA-evaluated, with serial 0 (assigned on
    /// push). An empty result means nothing was splittable.
    fn split_branch(&self, branch: &Branch) -> Result<Vec<Branch>, EngineError> {
        let dims = splittable_dims(&branch.box_, &self.layout);
        if dims.is_empty() {
            return Ok(Vec::new());
        }
        match self.config.split {
            SplitHeuristic::LongestEdge => {
                let d = *dims
                    .iter()
                    .max_by(|a, b| {
                        let la = branch.box_.hi()[**a] - branch.box_.lo()[**a];
                        let lb = branch.box_.hi()[**b] - branch.box_.lo()[**b];
                        la.total_cmp(&lb)
                    })
                    .unwrap();
                self.evaluate_children(&split_boxes(&branch.box_, d, &self.layout))
            }
            SplitHeuristic::BaBSB => {
                let mut best: Vec<(usize, Vec<Branch>)> = Vec::new();
                let mut best_score = f64::NEG_INFINITY;
                for d in dims {
                    let children = self.evaluate_children(&split_boxes(&branch.box_, d, &self.layout))?;
                    if children.is_empty() {
                        continue;
                    }
                    let score = babsb_score(&children);
                    match score.total_cmp(&best_score) {
                        Ordering::Greater => {
                            best_score = score;
                            best = vec![(d, children)];
                        }
                        Ordering::Equal => best.push((d, children)),
                        Ordering::Less => {}
                    }
                }
                if best.is_empty() {
                    return Ok(Vec::new());
                }
                // Tie-break with a per-branch RNG stream: derived from the
                // configured seed and the branch serial only, so the choice
                // does not depend on thread scheduling or worker count.
                let pick = if best.len() == 1 {
                    0
                } else {
                    let stream = self
                        .config
                        .seed
                        .wrapping_add(branch.serial.wrapping_mul(0x9E37_79B9_7F4A_7C15));
                    ChaCha8Rng::seed_from_u64(stream).gen_range(0..best.len())
                };
                Ok(best.swap_remove(pick).1)
            }
        }
    }

    /// Computes mass and creation-time IA bounds for candidate child boxes,
    /// dropping zero-mass children.
    fn evaluate_children(&self, boxes: &[Hyperbox]) -> Result<Vec<Branch>, EngineError> {
        let mut out = Vec::with_capacity(boxes.len());
        for b in boxes {
            let mass = self.dist.box_probability(&self.layout, b);
            if mass == 0.0 {
                continue;
            }
            let cached = self.bounder.bound_with_ia(b)?;
            out.push(Branch {
                box_: b.clone(),
                mass,
                cached_bounds: cached,
                serial: 0,
            });
        }
        Ok(out)
    }
}

/// Improvement score of a candidate split: how close the split comes to
/// pruning its children, judged on four-decimal-rounded bounds. With a
/// single surviving child the score degenerates to that child's own
/// distance-to-pruned.
fn babsb_score(children: &[Branch]) -> f64 {
    let r4 = |x: f64| (x * 1e4).round() / 1e4;
    let max_lo = children
        .iter()
        .map(|c| r4(c.cached_bounds.lo()))
        .fold(f64::NEG_INFINITY, f64::max);
    let min_hi = children
        .iter()
        .map(|c| r4(c.cached_bounds.hi()))
        .fold(f64::INFINITY, f64::min);
    max_lo.max(-min_hi)
}

/// Dimensions along which a box can still be refined, respecting the
/// layout: continuous needs a nondegenerate midpoint, integer at least two
/// lattice points, one-hot an unfixed indicator.
fn splittable_dims(b: &Hyperbox, layout: &VariableLayout) -> Vec<usize> {
    (0..b.dim())
        .filter(|d| {
            let (lo, hi) = (b.lo()[*d], b.hi()[*d]);
            match layout.kind_of_dim(*d) {
                DimKind::Continuous => {
                    let mid = 0.5 * (lo + hi);
                    lo < mid && mid < hi
                }
                DimKind::Integer => hi.floor() >= lo.ceil() + 1.0,
                DimKind::OneHot(_) => lo < hi,
            }
        })
        .collect()
}

/// The kind-specific two-way split of a box along dimension `d`.
fn split_boxes(b: &Hyperbox, d: usize, layout: &VariableLayout) -> Vec<Hyperbox> {
    let (lo, hi) = (b.lo()[d], b.hi()[d]);
    match layout.kind_of_dim(d) {
        DimKind::Continuous => {
            let mid = 0.5 * (lo + hi);
            vec![b.with_dim(d, lo, mid), b.with_dim(d, mid, hi)]
        }
        DimKind::Integer => {
            // Bisect, rounding the cut to the next smaller integer; the
            // sibling starts at the next larger one, so integer points are
            // covered exactly once.
            let cut = (0.5 * (lo + hi)).floor();
            vec![b.with_dim(d, lo, cut), b.with_dim(d, cut + 1.0, hi)]
        }
        DimKind::OneHot(group) => {
            // Child A: the point where indicator d is the category (all
            // other indicators 0). Child B: indicator d ruled out.
            let mut children = Vec::with_capacity(2);
            if group.iter().all(|g| *g == d || b.lo()[*g] <= 0.0) {
                let mut a = b.clone();
                for g in group {
                    a = if *g == d {
                        a.with_dim(*g, 1.0, 1.0)
                    } else {
                        a.with_dim(*g, 0.0, 0.0)
                    };
                }
                children.push(a);
            }
            children.push(b.with_dim(d, 0.0, 0.0));
            children
        }
    }
}
