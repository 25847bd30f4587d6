//! Anytime probability bounds and probabilistic verification for
//! feed-forward neural networks.
//!
//! The crate answers questions of the form "with what probability does a
//! network satisfy a property, and is a function of such probabilities
//! nonnegative?" It does so *soundly*: every reported probability comes with
//! a lower and an upper bound that are guaranteed to contain the true value,
//! and the bounds converge as computation proceeds, so the caller can stop at
//! any time with a correct (if loose) answer.
//!
//! The pieces, bottom to top:
//!
//! * [`interval`] — extended-real interval arithmetic and hyperboxes;
//! * [`graph`] — a scalar computation graph evaluated over intervals;
//! * [`network`] — feed-forward network model plus JSON / NNet loading;
//! * [`expr`] — the expression language for satisfaction functions;
//! * [`bounds`] — output bounding: plain interval propagation and backward
//!   linear relaxation;
//! * [`dist`] — input distributions: mixtures of products of univariate
//!   laws, with exact box probabilities, plus Bayesian-network compilation;
//! * [`engine`] — the anytime branch-and-bound probability bounder;
//! * [`verify`] — the top-level verifier combining per-term probability
//!   bounds through an outer constraint;
//! * [`problem`] — problem containers, JSON (de)serialisation, and builders
//!   for common fairness / robustness queries.

pub mod bounds;
pub mod dist;
pub mod engine;
pub mod expr;
pub mod graph;
pub mod interval;
pub mod network;
pub mod par;
pub mod problem;
pub mod verify;

pub use bounds::{BoundMethod, BoundOutcome, FusedGraph, LinearBounds, TermBounder};
pub use dist::{
    BayesNet, BayesNode, BayesNodeKind, Component, Distribution, LeafLaw, Univariate, VarKind,
    VarLaw, Variable, VariableLayout,
};
pub use engine::{
    BoundsEngine, BoundsState, Branch, Budget, EngineConfig, ProgressPoint, SelectHeuristic,
    SplitHeuristic, StopReason,
};
pub use expr::{parse_inner, parse_outer, EvalError, Expr, InnerAtom, InnerExpr, OuterAtom, OuterExpr};
pub use graph::{Graph, Node};
pub use interval::{Hyperbox, Interval};
pub use network::{load_network, Activation, Layer, Network, NetworkFormat};
pub use problem::{
    build_demographic_parity, build_qualified_parity, build_robustness, build_violation_rate,
    load_problem, Problem, ProblemError, Term,
};
pub use verify::{
    bound_term, verify, verify_concurrent, verify_with_sink, TermRun, Verdict, VerdictStatus,
    Verifier, VerifyConfig, VerifyError, VerifyStop,
};
