//! The top-level probabilistic verifier.
//!
//! A problem supplies `v` terms, each defining a probability
//! `pᵢ = P(fᵢ(x, N(x)) ≥ 0)`, and an outer constraint `g(p₁, …, p_v) ≥ 0`.
//! The verifier runs one anytime bounding engine per term, repeatedly pushes
//! the latest per-term intervals through `g` with interval arithmetic, and
//! stops as soon as the resulting interval is conclusive:
//!
//! * lower bound ≥ ε  → **Satisfied** (ε > 0 proves the tightened `g ≥ ε`);
//! * upper bound < 0 → **Violated**;
//! * budgets exhausted, or `g` provably reduces to `0/0` → **Unknown**.
//!
//! Because every engine's bounds are monotone, the verdict cannot depend on
//! the order in which engines are advanced — schedules differ only in how
//! soon they reach a conclusive interval, never in which conclusion they
//! reach.

use crate::engine::{
    BoundsEngine, BoundsState, EngineConfig, ProgressPoint, StepOutcome, StopReason,
};
use crate::expr::{EvalError, OuterAtom, OuterExpr};
use crate::interval::Interval;
use crate::problem::Problem;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Engine(#[from] crate::engine::EngineError),
    #[error("term index {index} out of range ({count} terms)")]
    TermOutOfRange { index: usize, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictStatus {
    Satisfied,
    Violated,
    Unknown,
}

/// Why the verifier stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifyStop {
    /// `g ≥ ε` proved.
    Proved,
    /// `g < 0` proved.
    Disproved,
    /// Budgets ran out (or every stream finished) without a conclusion.
    Budget,
    /// The outer constraint evaluates to an exact `0/0` at fully converged
    /// term probabilities: the problem itself is ill-posed there.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub g_bounds: Interval,
    /// Final `(l, u, t)` per term, in term order.
    pub per_term: Vec<BoundsState>,
    pub stop_reason: VerifyStop,
    /// Human-readable notes (e.g. a term's bounding method silently fell
    /// back to interval propagation).
    pub warnings: Vec<String>,
}

/// Verifier-level configuration. Iteration and width budgets apply to each
/// term's engine separately; the wall-clock budget is shared across all of
/// them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub engine: EngineConfig,
    /// Shared wall-clock budget for the whole verification.
    pub max_time: Option<Duration>,
    /// Satisfaction margin: prove `g ≥ ε` instead of `g ≥ 0`.
    pub epsilon: f64,
}

impl Default for VerifyConfig {
    fn default() -> VerifyConfig {
        VerifyConfig {
            engine: EngineConfig::default(),
            max_time: None,
            epsilon: 0.0,
        }
    }
}

/// Sound interval on the outer constraint over the per-term probability
/// intervals. Total: division across zero produces infinite endpoints,
/// which simply keep the verdict inconclusive.
pub fn outer_bounds(g: &OuterExpr, p_intervals: &[Interval]) -> Interval {
    g.eval_interval(&|OuterAtom::Prob(i)| p_intervals[*i])
}

enum Gather {
    Conclusive(VerdictStatus, VerifyStop, Interval),
    Inconclusive(Interval),
}

fn gather(g: &OuterExpr, states: &[BoundsState], epsilon: f64) -> Gather {
    let intervals: Vec<Interval> = states
        .iter()
        .map(|s| Interval::of(s.l, s.u))
        .collect();
    // The strict evaluation distinguishes "g is exactly 0/0" (ill-posed;
    // refinement can never fix it because bounds only tighten) from ordinary
    // inconclusive division across zero.
    match g.eval_interval_strict(&|OuterAtom::Prob(i)| intervals[*i]) {
        Err(EvalError::ZeroOverZero) => Gather::Conclusive(
            VerdictStatus::Unknown,
            VerifyStop::Degenerate,
            outer_bounds(g, &intervals),
        ),
        Err(_) => unreachable!("interval evaluation only raises 0/0"),
        Ok(gi) => {
            if gi.lo() >= epsilon {
                Gather::Conclusive(VerdictStatus::Satisfied, VerifyStop::Proved, gi)
            } else if gi.hi() < 0.0 {
                Gather::Conclusive(VerdictStatus::Violated, VerifyStop::Disproved, gi)
            } else {
                Gather::Inconclusive(gi)
            }
        }
    }
}

fn build_engines(problem: &Problem, config: &VerifyConfig) -> Result<Vec<BoundsEngine>, VerifyError> {
    problem
        .terms()
        .iter()
        .enumerate()
        .map(|(i, term)| {
            let net = problem.network(&term.network);
            let dist = problem.distribution(&term.distribution).clone();
            let engine_config = EngineConfig {
                // Stagger seeds so same-shaped terms do not share
                // tie-breaking streams; still fully determined by the
                // configured seed.
                seed: config.engine.seed.wrapping_add(i as u64),
                ..config.engine
            };
            BoundsEngine::new(net, dist, problem.layout().clone(), &term.expr, engine_config)
                .map_err(VerifyError::from)
        })
        .collect()
}

fn fallback_warnings(engines: &[BoundsEngine]) -> Vec<String> {
    engines
        .iter()
        .enumerate()
        .filter(|(_, e)| e.ia_fallback())
        .map(|(i, _)| {
            format!(
                "term {}: network activations unsupported by the backward pass; interval propagation used instead",
                i + 1
            )
        })
        .collect()
}

/// Round-robin verification: engines are advanced one iteration at a time,
/// in term order, re-evaluating the outer constraint after every single
/// iteration. Deterministic for a fixed problem, configuration, and seed.
pub fn verify(problem: &Problem, config: &VerifyConfig) -> Result<Verdict, VerifyError> {
    verify_with_sink(problem, config, |_, _| {})
}

/// [`verify`] with a per-iteration observer: `sink(term_index, progress)`
/// fires after every engine iteration, in the exact order the round-robin
/// schedule produced them.
pub fn verify_with_sink(
    problem: &Problem,
    config: &VerifyConfig,
    mut sink: impl FnMut(usize, &ProgressPoint),
) -> Result<Verdict, VerifyError> {
    let started = Instant::now();
    let mut engines = build_engines(problem, config)?;
    let warnings = fallback_warnings(&engines);
    let epsilon = config.epsilon.max(problem.epsilon());

    let mut states: Vec<BoundsState> = engines.iter().map(|e| e.state()).collect();
    let mut live: Vec<bool> = vec![true; engines.len()];

    // The trivial bounds may already decide the outcome (e.g. a threshold
    // no probability can reach).
    match gather(problem.outer(), &states, epsilon) {
        Gather::Conclusive(status, stop, gi) => {
            return Ok(Verdict {
                status,
                g_bounds: gi,
                per_term: states,
                stop_reason: stop,
                warnings,
            })
        }
        Gather::Inconclusive(_) => {}
    }

    let mut last_g = outer_bounds(
        problem.outer(),
        &states.iter().map(|s| Interval::of(s.l, s.u)).collect::<Vec<_>>(),
    );
    loop {
        let mut any_progress = false;
        for (i, engine) in engines.iter_mut().enumerate() {
            if !live[i] {
                continue;
            }
            if let Some(limit) = config.max_time {
                if started.elapsed() >= limit {
                    live.iter_mut().for_each(|l| *l = false);
                    break;
                }
            }
            match engine.step()? {
                StepOutcome::Progressed(point) => {
                    sink(i, &point);
                    any_progress = true;
                    states[i] = engine.state();
                    match gather(problem.outer(), &states, epsilon) {
                        Gather::Conclusive(status, stop, gi) => {
                            return Ok(Verdict {
                                status,
                                g_bounds: gi,
                                per_term: states,
                                stop_reason: stop,
                                warnings,
                            })
                        }
                        Gather::Inconclusive(gi) => last_g = gi,
                    }
                }
                StepOutcome::Finished(_) => {
                    live[i] = false;
                }
            }
        }
        if !any_progress {
            // Every stream hit its own budget or exhausted its branches.
            return Ok(Verdict {
                status: VerdictStatus::Unknown,
                g_bounds: last_g,
                per_term: states,
                stop_reason: VerifyStop::Budget,
                warnings,
            });
        }
    }
}

/// Concurrent verification: one OS thread per term streams iteration
/// results to the orchestrator, which re-evaluates the outer constraint on
/// every message. Iteration counts at the stopping point may differ from
/// [`verify`], but monotone bounds make the verdict schedule-independent.
pub fn verify_concurrent(problem: &Problem, config: &VerifyConfig) -> Result<Verdict, VerifyError> {
    let started = Instant::now();
    let engines = build_engines(problem, config)?;
    let warnings = fallback_warnings(&engines);
    let epsilon = config.epsilon.max(problem.epsilon());

    let mut states: Vec<BoundsState> = engines.iter().map(|e| e.state()).collect();
    match gather(problem.outer(), &states, epsilon) {
        Gather::Conclusive(status, stop, gi) => {
            return Ok(Verdict {
                status,
                g_bounds: gi,
                per_term: states,
                stop_reason: stop,
                warnings,
            })
        }
        Gather::Inconclusive(_) => {}
    }

    enum Msg {
        State(usize, BoundsState),
        Done,
        Failed(VerifyError),
    }

    let stop = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<Msg>();
    let verdict = std::thread::scope(|scope| {
        for (i, mut engine) in engines.into_iter().enumerate() {
            let tx = tx.clone();
            let stop = &stop;
            let max_time = config.max_time;
            scope.spawn(move || loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                if let Some(limit) = max_time {
                    if started.elapsed() >= limit {
                        let _ = tx.send(Msg::Done);
                        break;
                    }
                }
                match engine.step() {
                    Ok(StepOutcome::Progressed(_)) => {
                        if tx.send(Msg::State(i, engine.state())).is_err() {
                            break;
                        }
                    }
                    Ok(StepOutcome::Finished(_)) => {
                        let _ = tx.send(Msg::Done);
                        break;
                    }
                    Err(e) => {
                        let _ = tx.send(Msg::Failed(e.into()));
                        break;
                    }
                }
            });
        }
        drop(tx);

        let mut live = states.len();
        let mut last_g = outer_bounds(
            problem.outer(),
            &states.iter().map(|s| Interval::of(s.l, s.u)).collect::<Vec<_>>(),
        );
        let mut result = None;
        while live > 0 {
            match rx.recv() {
                Ok(Msg::State(i, s)) => {
                    states[i] = s;
                    match gather(problem.outer(), &states, epsilon) {
                        Gather::Conclusive(status, stop_reason, gi) => {
                            result = Some(Ok(Verdict {
                                status,
                                g_bounds: gi,
                                per_term: states.clone(),
                                stop_reason,
                                warnings: warnings.clone(),
                            }));
                            break;
                        }
                        Gather::Inconclusive(gi) => last_g = gi,
                    }
                }
                Ok(Msg::Done) => live -= 1,
                Ok(Msg::Failed(e)) => {
                    result = Some(Err(e));
                    break;
                }
                Err(_) => break,
            }
        }
        stop.store(true, Ordering::Relaxed);
        // Drain remaining messages so senders never block on a full
        // channel (mpsc is unbounded, but be tidy about workers' sends).
        while rx.try_recv().is_ok() {}
        result.unwrap_or_else(|| {
            Ok(Verdict {
                status: VerdictStatus::Unknown,
                g_bounds: last_g,
                per_term: states.clone(),
                stop_reason: VerifyStop::Budget,
                warnings: warnings.clone(),
            })
        })
    });
    verdict
}

/// Outcome of bounding one term in isolation.
#[derive(Debug, Clone, PartialEq)]
pub struct TermRun {
    pub state: BoundsState,
    pub stop: StopReason,
    /// One entry per executed iteration, in order.
    pub trace: Vec<crate::engine::ProgressPoint>,
    pub ia_fallback: bool,
}

/// Runs the anytime bounder for a single term (violation-rate / robustness
/// style use) and returns the final state plus the full iteration trace.
pub fn bound_term(
    problem: &Problem,
    term_index: usize,
    config: &VerifyConfig,
) -> Result<TermRun, VerifyError> {
    let terms = problem.terms();
    if term_index >= terms.len() {
        return Err(VerifyError::TermOutOfRange {
            index: term_index,
            count: terms.len(),
        });
    }
    let term = &terms[term_index];
    let engine_config = EngineConfig {
        seed: config.engine.seed.wrapping_add(term_index as u64),
        budget: crate::engine::Budget {
            max_time: config.max_time,
            ..config.engine.budget
        },
        ..config.engine
    };
    let mut engine = BoundsEngine::new(
        problem.network(&term.network),
        problem.distribution(&term.distribution).clone(),
        problem.layout().clone(),
        &term.expr,
        engine_config,
    )?;
    let ia_fallback = engine.ia_fallback();
    let mut trace = Vec::new();
    let report = engine.run(|p| trace.push(*p))?;
    Ok(TermRun {
        state: report.state,
        stop: report.stop,
        trace,
        ia_fallback,
    })
}

/// Builds the verifier used by `Verifier`-style callers: thin named wrapper
/// so downstream code can hold problem + config together.
pub struct Verifier<'p> {
    pub problem: &'p Problem,
    pub config: VerifyConfig,
}

impl<'p> Verifier<'p> {
    pub fn new(problem: &'p Problem) -> Verifier<'p> {
        Verifier {
            problem,
            config: VerifyConfig::default(),
        }
    }

    pub fn with_config(problem: &'p Problem, config: VerifyConfig) -> Verifier<'p> {
        Verifier { problem, config }
    }

    pub fn run(&self) -> Result<Verdict, VerifyError> {
        verify(self.problem, &self.config)
    }

    pub fn run_concurrent(&self) -> Result<Verdict, VerifyError> {
        verify_concurrent(self.problem, &self.config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Budget;
    use crate::expr::parse_outer;

    #[test]
    fn outer_bounds_examples() {
        // Affine: p1 − 0.3 over [0.5, 0.6].
        let g = parse_outer("p1 - 0.3").unwrap();
        let gi = outer_bounds(&g, &[Interval::of(0.5, 0.6)]);
        assert!((gi.lo() - 0.2).abs() < 1e-15 && (gi.hi() - 0.3).abs() < 1e-15);

        // Parity ratio at point intervals 0.5 with γ = 0.8: 1 − 0.8.
        let g = parse_outer("(p1*p4)/(p2*p3) - 0.8").unwrap();
        let p = vec![Interval::point(0.5); 4];
        let gi = outer_bounds(&g, &p);
        assert!((gi.lo() - 0.2).abs() < 1e-12 && gi.is_point());

        // Division across zero blows up to +∞ on the upper side.
        let p = vec![
            Interval::of(0.2, 0.4),
            Interval::of(0.0, 0.5),
            Interval::of(0.5, 1.0),
            Interval::of(0.2, 0.4),
        ];
        let gi = outer_bounds(&g, &p);
        assert_eq!(gi.hi(), f64::INFINITY);
        assert!(gi.lo().is_finite());
    }

    #[test]
    fn gather_detects_exact_zero_over_zero() {
        let g = parse_outer("(p1*p4)/(p2*p3) - 0.85").unwrap();
        let zero = BoundsState { l: 0.0, u: 0.0, t: 5 };
        match gather(&g, &[zero; 4], 0.0) {
            Gather::Conclusive(VerdictStatus::Unknown, VerifyStop::Degenerate, _) => {}
            _ => panic!("expected degenerate"),
        }
    }

    #[test]
    fn trivial_bounds_can_already_decide() {
        // No probability reaches 1.5, whatever the terms compute.
        let g = parse_outer("p1 - 1.5").unwrap();
        match gather(&g, &[BoundsState { l: 0.0, u: 1.0, t: 0 }], 0.0) {
            Gather::Conclusive(VerdictStatus::Violated, VerifyStop::Disproved, gi) => {
                assert_eq!(gi.hi(), -0.5);
            }
            _ => panic!("expected violated"),
        }
    }

    #[test]
    fn epsilon_tightens_the_goal() {
        let g = parse_outer("p1 - 0.3").unwrap();
        let s = BoundsState { l: 0.35, u: 0.4, t: 3 };
        // Margin 0.04 is proven (g ≥ 0.05 > 0.04)…
        assert!(matches!(
            gather(&g, &[s], 0.04),
            Gather::Conclusive(VerdictStatus::Satisfied, ..)
        ));
        // …but 0.06 is not yet.
        assert!(matches!(gather(&g, &[s], 0.06), Gather::Inconclusive(_)));
    }

    // End-to-end verify()/verify_concurrent() behaviour is exercised in the
    // integration suite with full problems; unit tests here stay on the
    // gather logic.

    #[test]
    fn budget_carries_into_bound_term() {
        use crate::dist::{Component, Univariate, VarLaw, VariableLayout};
        use crate::network::{Activation, Layer};
        let layout = VariableLayout::all_continuous(1);
        let dist = crate::dist::Distribution::new(
            vec![Component {
                weight: 1.0,
                laws: vec![VarLaw::Scalar(Univariate::Uniform { a: 0.0, b: 1.0 })],
            }],
            &layout,
        )
        .unwrap();
        let net = crate::network::Network::new(vec![Layer {
            weights: ndarray::Array2::eye(1),
            bias: ndarray::Array1::zeros(1),
            activation: Activation::Identity,
        }])
        .unwrap();
        let problem = crate::problem::Problem::new(
            [("net".to_string(), net)].into_iter().collect(),
            [("u".to_string(), dist)].into_iter().collect(),
            layout,
            vec![crate::problem::Term {
                network: "net".to_string(),
                distribution: "u".to_string(),
                expr: crate::expr::parse_inner("x1 - 0.5").unwrap(),
            }],
            parse_outer("p1").unwrap(),
            0.0,
        )
        .unwrap();
        let config = VerifyConfig {
            engine: EngineConfig {
                batch_size: 1,
                method: crate::bounds::BoundMethod::Ia,
                budget: Budget {
                    max_iterations: Some(2),
                    ..Budget::UNLIMITED
                },
                ..EngineConfig::default()
            },
            ..VerifyConfig::default()
        };
        let run = bound_term(&problem, 0, &config).unwrap();
        assert_eq!(run.trace.len(), 2, "trace length equals iterations");
        assert_eq!(run.state.t, 2);
        assert_eq!((run.state.l, run.state.u), (0.5, 0.75));
        assert_eq!(run.stop, StopReason::IterationBudget);
        assert!(bound_term(&problem, 5, &config).is_err());
    }
}
