//! Sound output bounding for satisfaction functions over a box.
//!
//! Two bounding procedures are provided, sharing one calling convention:
//!
//! * **Interval propagation** fuses network and expression into one scalar
//!   computation graph and pushes the box through it (see [`FusedGraph`]).
//!   Works for every supported activation, but ignores correlations between
//!   neurons, so bounds widen quickly with depth.
//! * **Backward linear relaxation** ([`compute_bounds_crown`]) maintains,
//!   for a linear functional of the network outputs, affine lower/upper
//!   bounds in terms of the *input*, substituting backwards layer by layer.
//!   ReLU layers are replaced by their standard chord/adaptive-slope
//!   relaxation; stable neurons stay exact. Only `relu`/`none` activations
//!   are supported — anything else falls back to interval propagation and
//!   flags the fallback in the result.
//!
//! The expression on top of the network is handled by decomposition: if the
//! whole expression is jointly affine in inputs and outputs, it is folded
//! into the backward pass and the result is exact on affine networks. If
//! not, the maximal output-affine subexpressions are each folded into one
//! backward pass (a single output atom being the degenerate case, which
//! recovers plain per-output concretization), and the remaining expression
//! is evaluated with interval arithmetic on top.

use crate::expr::{Expr, InnerAtom, InnerExpr};
use crate::graph::{Graph, GraphError, Node, NodeId};
use crate::interval::{ia_affine, Hyperbox, Interval, IntervalError};
use crate::network::{Activation, Network};
use ndarray::{Array1, Array2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BoundError {
    #[error("expression references input x{} but the network takes {dim} inputs", index + 1)]
    InputRef { index: usize, dim: usize },
    #[error("expression references output y{} but the network has {dim} outputs", index + 1)]
    OutputRef { index: usize, dim: usize },
    #[error("{activation:?} activation is not supported by backward linear bounding")]
    UnsupportedActivation { activation: Activation },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Interval(#[from] IntervalError),
}

/// Which bounding procedure a term uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundMethod {
    Ia,
    Crown,
}

/// Bound plus metadata about how it was produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundOutcome {
    pub interval: Interval,
    /// True when backward linear bounding was requested but interval
    /// propagation had to be used instead (unsupported activation).
    pub ia_fallback: bool,
}

// ---------------------------------------------------------------------------
// Fused interval propagation
// ---------------------------------------------------------------------------

/// Network and expression lowered into one scalar graph, ready for repeated
/// interval propagation over different boxes.
#[derive(Debug, Clone)]
pub struct FusedGraph {
    graph: Graph,
    out: NodeId,
}

impl FusedGraph {
    pub fn new(net: &Network, expr: &InnerExpr) -> Result<FusedGraph, BoundError> {
        check_indices(net, expr)?;
        let n = net.input_dim();
        let mut graph = Graph::new(n);
        let mut x_ids = Vec::with_capacity(n);
        for j in 0..n {
            x_ids.push(graph.push(Node::Input(j))?);
        }
        // The network body is only lowered when the expression actually
        // reads an output.
        let y_ids = if expr.references_output() {
            let mut prev = x_ids.clone();
            for layer in net.layers() {
                let mut next = Vec::with_capacity(layer.out_dim());
                for r in 0..layer.out_dim() {
                    let terms: Vec<(f64, NodeId)> = prev
                        .iter()
                        .enumerate()
                        .map(|(c, id)| (layer.weights[[r, c]], *id))
                        .collect();
                    let z = graph.push(Node::Affine {
                        terms,
                        bias: layer.bias[r],
                    })?;
                    let h = match layer.activation {
                        Activation::Identity => z,
                        Activation::Relu => graph.push(Node::Relu(z))?,
                        Activation::Sigmoid => graph.push(Node::Sigmoid(z))?,
                        Activation::Tanh => graph.push(Node::Tanh(z))?,
                    };
                    next.push(h);
                }
                prev = next;
            }
            prev
        } else {
            Vec::new()
        };
        let out = lower_expr(expr, &mut graph, &x_ids, &y_ids)?;
        Ok(FusedGraph { graph, out })
    }

    /// Sound interval on the expression value over the box.
    pub fn bound(&self, b: &Hyperbox) -> Result<Interval, BoundError> {
        let vals = self.graph.propagate(b)?;
        Ok(vals[self.out])
    }

    /// Exact value at a point (propagates the degenerate box).
    pub fn eval(&self, x: &[f64]) -> Result<f64, BoundError> {
        let vals = self.graph.eval(x)?;
        Ok(vals[self.out])
    }
}

fn check_indices(net: &Network, expr: &InnerExpr) -> Result<(), BoundError> {
    if let Some(j) = expr.max_input_index() {
        if j >= net.input_dim() {
            return Err(BoundError::InputRef {
                index: j,
                dim: net.input_dim(),
            });
        }
    }
    if let Some(k) = expr.max_output_index() {
        if k >= net.output_dim() {
            return Err(BoundError::OutputRef {
                index: k,
                dim: net.output_dim(),
            });
        }
    }
    Ok(())
}

fn lower_expr(
    e: &InnerExpr,
    g: &mut Graph,
    x_ids: &[NodeId],
    y_ids: &[NodeId],
) -> Result<NodeId, BoundError> {
    let id = match e {
        Expr::Atom(InnerAtom::Input(j)) => x_ids[*j],
        Expr::Atom(InnerAtom::Output(k)) => y_ids[*k],
        Expr::Const(c) => g.push(Node::Const(*c))?,
        Expr::Add(a, b) => {
            let (a, b) = (lower_expr(a, g, x_ids, y_ids)?, lower_expr(b, g, x_ids, y_ids)?);
            g.push(Node::Affine {
                terms: vec![(1.0, a), (1.0, b)],
                bias: 0.0,
            })?
        }
        Expr::Sub(a, b) => {
            let (a, b) = (lower_expr(a, g, x_ids, y_ids)?, lower_expr(b, g, x_ids, y_ids)?);
            g.push(Node::Affine {
                terms: vec![(1.0, a), (-1.0, b)],
                bias: 0.0,
            })?
        }
        Expr::Neg(a) => {
            let a = lower_expr(a, g, x_ids, y_ids)?;
            g.push(Node::Affine {
                terms: vec![(-1.0, a)],
                bias: 0.0,
            })?
        }
        Expr::Mul(a, b) => match (as_const(a), as_const(b)) {
            (Some(c), _) => {
                let b = lower_expr(b, g, x_ids, y_ids)?;
                g.push(Node::Affine {
                    terms: vec![(c, b)],
                    bias: 0.0,
                })?
            }
            (_, Some(c)) => {
                let a = lower_expr(a, g, x_ids, y_ids)?;
                g.push(Node::Affine {
                    terms: vec![(c, a)],
                    bias: 0.0,
                })?
            }
            _ => {
                let (a, b) =
                    (lower_expr(a, g, x_ids, y_ids)?, lower_expr(b, g, x_ids, y_ids)?);
                g.push(Node::Mul(a, b))?
            }
        },
        Expr::Div(a, b) => match as_const(b) {
            Some(c) if c != 0.0 => {
                let a = lower_expr(a, g, x_ids, y_ids)?;
                g.push(Node::Affine {
                    terms: vec![(1.0 / c, a)],
                    bias: 0.0,
                })?
            }
            _ => {
                let (a, b) =
                    (lower_expr(a, g, x_ids, y_ids)?, lower_expr(b, g, x_ids, y_ids)?);
                let r = g.push(Node::Recip(b))?;
                g.push(Node::Mul(a, r))?
            }
        },
        Expr::Min(a, b) => {
            let (a, b) = (lower_expr(a, g, x_ids, y_ids)?, lower_expr(b, g, x_ids, y_ids)?);
            g.push(Node::Min(a, b))?
        }
        Expr::Max(a, b) => {
            let (a, b) = (lower_expr(a, g, x_ids, y_ids)?, lower_expr(b, g, x_ids, y_ids)?);
            g.push(Node::Max(a, b))?
        }
        Expr::Relu(a) => {
            let a = lower_expr(a, g, x_ids, y_ids)?;
            g.push(Node::Relu(a))?
        }
        Expr::Sigmoid(a) => {
            let a = lower_expr(a, g, x_ids, y_ids)?;
            g.push(Node::Sigmoid(a))?
        }
        Expr::Tanh(a) => {
            let a = lower_expr(a, g, x_ids, y_ids)?;
            g.push(Node::Tanh(a))?
        }
    };
    Ok(id)
}

fn as_const(e: &InnerExpr) -> Option<f64> {
    match e {
        Expr::Const(c) => Some(*c),
        Expr::Neg(a) => as_const(a).map(|c| -c),
        _ => None,
    }
}

/// Interval propagation over the fused network/expression graph.
pub fn compute_bounds_ia(
    net: &Network,
    expr: &InnerExpr,
    b: &Hyperbox,
) -> Result<Interval, BoundError> {
    FusedGraph::new(net, expr)?.bound(b)
}

// ---------------------------------------------------------------------------
// Backward linear bounds
// ---------------------------------------------------------------------------

/// Affine enclosure of a vector of functionals in terms of the network
/// input: for every `x` in the box,
/// `lower_a·x + lower_b ≤ v(x) ≤ upper_a·x + upper_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBounds {
    pub lower_a: Array2<f64>,
    pub lower_b: Array1<f64>,
    pub upper_a: Array2<f64>,
    pub upper_b: Array1<f64>,
}

impl LinearBounds {
    /// Worst-case evaluation of the affine enclosure over a box.
    pub fn concretize(&self, b: &Hyperbox) -> Vec<Interval> {
        let rows = self.lower_a.nrows();
        let mut out = Vec::with_capacity(rows);
        for i in 0..rows {
            let mut lo = self.lower_b[i];
            let mut hi = self.upper_b[i];
            for j in 0..self.lower_a.ncols() {
                let al = self.lower_a[[i, j]];
                lo += if al >= 0.0 { al * b.lo()[j] } else { al * b.hi()[j] };
                let au = self.upper_a[[i, j]];
                hi += if au >= 0.0 { au * b.hi()[j] } else { au * b.lo()[j] };
            }
            out.push(Interval::of(lo.min(hi), hi.max(lo)));
        }
        out
    }
}

/// Backward linear bounds for the raw network outputs (identity functionals).
pub fn linear_output_bounds(net: &Network, b: &Hyperbox) -> Result<LinearBounds, BoundError> {
    let m = net.output_dim();
    backward_linear(net, b, &Array2::eye(m), &Array1::zeros(m))
}

/// Substitutes the functional `c·N(x) + c0` backwards through the network,
/// producing affine bounds in terms of the input.
fn backward_linear(
    net: &Network,
    b: &Hyperbox,
    c: &Array2<f64>,
    c0: &Array1<f64>,
) -> Result<LinearBounds, BoundError> {
    for layer in net.layers() {
        if !matches!(layer.activation, Activation::Relu | Activation::Identity) {
            return Err(BoundError::UnsupportedActivation {
                activation: layer.activation,
            });
        }
    }

    // Pre-activation intervals per layer, from cheap forward interval
    // propagation.
    let mut preact: Vec<Vec<Interval>> = Vec::with_capacity(net.layers().len());
    let mut h = b.intervals();
    for layer in net.layers() {
        let z = ia_affine(&layer.weights, &layer.bias, &h)?;
        h = match layer.activation {
            Activation::Relu => z.iter().map(Interval::relu).collect(),
            Activation::Identity => z.clone(),
            _ => unreachable!("checked above"),
        };
        preact.push(z);
    }

    let mut lower_a = c.clone();
    let mut upper_a = c.clone();
    let mut lower_b = c0.clone();
    let mut upper_b = c0.clone();

    for (layer, z) in net.layers().iter().zip(&preact).rev() {
        if layer.activation == Activation::Relu {
            // Per-neuron relaxation relu(z) over z ∈ [l, u]:
            //   stable active:   exactly z;
            //   stable inactive: exactly 0;
            //   unstable: upper chord  (u/(u−l))·z − ul/(u−l),
            //             lower line through the origin with slope 0 if
            //             |l| ≥ u else 1 (smaller relaxation area).
            let width = z.len();
            let mut sl = vec![0.0; width];
            let mut su = vec![0.0; width];
            let mut tu = vec![0.0; width];
            for j in 0..width {
                let (l, u) = (z[j].lo(), z[j].hi());
                if l >= 0.0 {
                    sl[j] = 1.0;
                    su[j] = 1.0;
                } else if u <= 0.0 {
                    // relu is identically zero; slopes stay 0.
                } else {
                    su[j] = u / (u - l);
                    tu[j] = -u * l / (u - l);
                    sl[j] = if -l >= u { 0.0 } else { 1.0 };
                }
            }
            for i in 0..lower_a.nrows() {
                for j in 0..width {
                    let a = lower_a[[i, j]];
                    if a >= 0.0 {
                        lower_a[[i, j]] = a * sl[j];
                    } else {
                        lower_a[[i, j]] = a * su[j];
                        lower_b[i] += a * tu[j];
                    }
                    let a = upper_a[[i, j]];
                    if a >= 0.0 {
                        upper_a[[i, j]] = a * su[j];
                        upper_b[i] += a * tu[j];
                    } else {
                        upper_a[[i, j]] = a * sl[j];
                    }
                }
            }
        }
        lower_b = lower_b + lower_a.dot(&layer.bias);
        upper_b = upper_b + upper_a.dot(&layer.bias);
        lower_a = lower_a.dot(&layer.weights);
        upper_a = upper_a.dot(&layer.weights);
    }

    Ok(LinearBounds {
        lower_a,
        lower_b,
        upper_a,
        upper_b,
    })
}

// ---------------------------------------------------------------------------
// Expression decomposition
// ---------------------------------------------------------------------------

/// Affine normal form `x_coefs·x + y_coefs·y + bias` of an expression, when
/// it has one.
#[derive(Debug, Clone)]
struct AffineForm {
    x: Vec<f64>,
    y: Vec<f64>,
    bias: f64,
}

impl AffineForm {
    fn constant(nx: usize, ny: usize, c: f64) -> AffineForm {
        AffineForm {
            x: vec![0.0; nx],
            y: vec![0.0; ny],
            bias: c,
        }
    }

    fn is_constant(&self) -> bool {
        self.x.iter().chain(&self.y).all(|c| *c == 0.0)
    }

    fn combine(mut self, other: &AffineForm, sign: f64) -> AffineForm {
        for (a, b) in self.x.iter_mut().zip(&other.x) {
            *a += sign * b;
        }
        for (a, b) in self.y.iter_mut().zip(&other.y) {
            *a += sign * b;
        }
        self.bias += sign * other.bias;
        self
    }

    fn scale(mut self, s: f64) -> AffineForm {
        self.x.iter_mut().for_each(|a| *a *= s);
        self.y.iter_mut().for_each(|a| *a *= s);
        self.bias *= s;
        self
    }
}

fn affine_form(e: &InnerExpr, nx: usize, ny: usize) -> Option<AffineForm> {
    match e {
        Expr::Const(c) => Some(AffineForm::constant(nx, ny, *c)),
        Expr::Atom(InnerAtom::Input(j)) => {
            let mut f = AffineForm::constant(nx, ny, 0.0);
            f.x[*j] = 1.0;
            Some(f)
        }
        Expr::Atom(InnerAtom::Output(k)) => {
            let mut f = AffineForm::constant(nx, ny, 0.0);
            f.y[*k] = 1.0;
            Some(f)
        }
        Expr::Add(a, b) => {
            let fa = affine_form(a, nx, ny)?;
            let fb = affine_form(b, nx, ny)?;
            Some(fa.combine(&fb, 1.0))
        }
        Expr::Sub(a, b) => {
            let fa = affine_form(a, nx, ny)?;
            let fb = affine_form(b, nx, ny)?;
            Some(fa.combine(&fb, -1.0))
        }
        Expr::Neg(a) => Some(affine_form(a, nx, ny)?.scale(-1.0)),
        Expr::Mul(a, b) => {
            let fa = affine_form(a, nx, ny)?;
            let fb = affine_form(b, nx, ny)?;
            if fa.is_constant() {
                Some(fb.scale(fa.bias))
            } else if fb.is_constant() {
                Some(fa.scale(fb.bias))
            } else {
                None
            }
        }
        Expr::Div(a, b) => {
            let fa = affine_form(a, nx, ny)?;
            let fb = affine_form(b, nx, ny)?;
            if fb.is_constant() && fb.bias != 0.0 {
                Some(fa.scale(1.0 / fb.bias))
            } else {
                None
            }
        }
        _ => None,
    }
}

/// Collects the maximal subexpressions that are affine in the network
/// outputs alone. Descent stops at such a subtree; since a bare output atom
/// qualifies, every output occurrence ends up under exactly one cut.
fn collect_cuts<'e>(e: &'e InnerExpr, nx: usize, ny: usize, cuts: &mut Vec<&'e InnerExpr>) {
    if !e.references_output() {
        return;
    }
    if let Some(form) = affine_form(e, nx, ny) {
        if form.x.iter().all(|c| *c == 0.0) {
            if !cuts.contains(&e) {
                cuts.push(e);
            }
            return;
        }
    }
    match e {
        Expr::Atom(_) | Expr::Const(_) => {}
        Expr::Neg(a) | Expr::Relu(a) | Expr::Sigmoid(a) | Expr::Tanh(a) => {
            collect_cuts(a, nx, ny, cuts)
        }
        Expr::Add(a, b)
        | Expr::Sub(a, b)
        | Expr::Mul(a, b)
        | Expr::Div(a, b)
        | Expr::Min(a, b)
        | Expr::Max(a, b) => {
            collect_cuts(a, nx, ny, cuts);
            collect_cuts(b, nx, ny, cuts);
        }
    }
}

/// How a term is bounded when backward linear bounding is requested.
#[derive(Debug, Clone)]
enum CrownPlan {
    /// Network has activations the backward pass cannot relax.
    Unsupported,
    /// The expression never reads an output; pure interval evaluation.
    PureInput,
    /// Whole expression is affine in (x, y): fold everything into one
    /// backward pass and stay affine to the end (exact on affine nets).
    JointAffine {
        x_coefs: Array1<f64>,
        y_coefs: Array2<f64>,
        bias: f64,
    },
    /// Fold each maximal output-affine subexpression through the network,
    /// then evaluate the rest with intervals, substituting the folded
    /// enclosures.
    Cuts {
        cuts: Vec<InnerExpr>,
        c: Array2<f64>,
        c0: Array1<f64>,
    },
}

// ---------------------------------------------------------------------------
// Term bounder
// ---------------------------------------------------------------------------

/// A prepared bounder for one (network, expression) pair, reused across the
/// many boxes the branch-and-bound loop generates.
#[derive(Debug, Clone)]
pub struct TermBounder {
    net: Network,
    expr: InnerExpr,
    fused: FusedGraph,
    method: BoundMethod,
    plan: CrownPlan,
}

impl TermBounder {
    pub fn new(net: &Network, expr: &InnerExpr, method: BoundMethod) -> Result<TermBounder, BoundError> {
        check_indices(net, expr)?;
        let fused = FusedGraph::new(net, expr)?;
        let plan = match method {
            BoundMethod::Ia => CrownPlan::Unsupported, // unused
            BoundMethod::Crown => make_plan(net, expr),
        };
        Ok(TermBounder {
            net: net.clone(),
            expr: expr.clone(),
            fused,
            method,
            plan,
        })
    }

    /// True when the requested method cannot run on this network and plain
    /// interval propagation is silently used instead.
    pub fn ia_fallback(&self) -> bool {
        self.method == BoundMethod::Crown && matches!(self.plan, CrownPlan::Unsupported)
    }

    /// Plain interval propagation, regardless of the configured method.
    /// The engine uses this for the cheap creation-time evaluation of fresh
    /// branches; the configured method is reserved for selected batches.
    pub fn bound_with_ia(&self, b: &Hyperbox) -> Result<Interval, BoundError> {
        self.fused.bound(b)
    }

    pub fn method(&self) -> BoundMethod {
        self.method
    }

    /// Sound interval on the expression over the box.
    pub fn bound(&self, b: &Hyperbox) -> Result<Interval, BoundError> {
        match (&self.method, &self.plan) {
            (BoundMethod::Ia, _) | (_, CrownPlan::Unsupported) => self.fused.bound(b),
            (_, CrownPlan::PureInput) => {
                Ok(eval_with_substitution(&self.expr, b, &[], None))
            }
            (_, CrownPlan::JointAffine { x_coefs, y_coefs, bias }) => {
                let mut lb = backward_linear(
                    &self.net,
                    b,
                    y_coefs,
                    &Array1::from_elem(1, *bias),
                )?;
                // The input-affine remainder rides along both enclosures
                // unchanged, keeping the whole bound a single affine form.
                for j in 0..x_coefs.len() {
                    lb.lower_a[[0, j]] += x_coefs[j];
                    lb.upper_a[[0, j]] += x_coefs[j];
                }
                Ok(lb.concretize(b)[0])
            }
            (_, CrownPlan::Cuts { cuts, c, c0 }) => {
                let lb = backward_linear(&self.net, b, c, c0)?;
                let folded = lb.concretize(b);
                let subs: Vec<(&InnerExpr, Interval)> = cuts.iter().zip(folded).collect();
                Ok(eval_with_substitution(&self.expr, b, &subs, None))
            }
        }
    }

    #[cfg(test)]
    fn plan_name(&self) -> &'static str {
        match self.plan {
            CrownPlan::Unsupported => "unsupported",
            CrownPlan::PureInput => "pure-input",
            CrownPlan::JointAffine { .. } => "joint-affine",
            CrownPlan::Cuts { .. } => "cuts",
        }
    }
}

fn make_plan(net: &Network, expr: &InnerExpr) -> CrownPlan {
    let supported = net
        .layers()
        .iter()
        .all(|l| matches!(l.activation, Activation::Relu | Activation::Identity));
    if !supported {
        return CrownPlan::Unsupported;
    }
    if !expr.references_output() {
        return CrownPlan::PureInput;
    }
    let (nx, ny) = (net.input_dim(), net.output_dim());
    if let Some(form) = affine_form(expr, nx, ny) {
        let mut y_coefs = Array2::zeros((1, ny));
        for (k, c) in form.y.iter().enumerate() {
            y_coefs[[0, k]] = *c;
        }
        return CrownPlan::JointAffine {
            x_coefs: Array1::from_vec(form.x),
            y_coefs,
            bias: form.bias,
        };
    }
    let mut cut_refs = Vec::new();
    collect_cuts(expr, nx, ny, &mut cut_refs);
    let cuts: Vec<InnerExpr> = cut_refs.iter().map(|c| (*c).clone()).collect();
    let mut c = Array2::zeros((cuts.len(), ny));
    let mut c0 = Array1::zeros(cuts.len());
    for (i, cut) in cuts.iter().enumerate() {
        let form = affine_form(cut, nx, ny).expect("cuts are affine by construction");
        for (k, coef) in form.y.iter().enumerate() {
            c[[i, k]] = *coef;
        }
        c0[i] = form.bias;
    }
    CrownPlan::Cuts { cuts, c, c0 }
}

/// Interval evaluation of an expression over box variables, replacing any
/// node structurally equal to a substituted subtree by its precomputed
/// enclosure. `y_env` serves output atoms that are *not* under any
/// substitution (used only when no substitutions are given).
fn eval_with_substitution(
    e: &InnerExpr,
    b: &Hyperbox,
    subs: &[(&InnerExpr, Interval)],
    y_env: Option<&[Interval]>,
) -> Interval {
    if let Some((_, iv)) = subs.iter().find(|(cut, _)| *cut == e) {
        return *iv;
    }
    match e {
        Expr::Atom(InnerAtom::Input(j)) => b.interval(*j),
        Expr::Atom(InnerAtom::Output(k)) => match y_env {
            Some(ys) => ys[*k],
            // Every output occurrence lies under a cut; bare outputs cannot
            // be reached when substitutions are in play.
            None => unreachable!("output atom y{} outside any substitution", k + 1),
        },
        Expr::Const(c) => Interval::point(*c),
        Expr::Add(x, y) => eval_with_substitution(x, b, subs, y_env)
            .add(&eval_with_substitution(y, b, subs, y_env)),
        Expr::Sub(x, y) => eval_with_substitution(x, b, subs, y_env)
            .sub(&eval_with_substitution(y, b, subs, y_env)),
        Expr::Neg(x) => eval_with_substitution(x, b, subs, y_env).neg(),
        Expr::Mul(x, y) => eval_with_substitution(x, b, subs, y_env)
            .mul(&eval_with_substitution(y, b, subs, y_env)),
        Expr::Div(x, y) => eval_with_substitution(x, b, subs, y_env)
            .div(&eval_with_substitution(y, b, subs, y_env)),
        Expr::Min(x, y) => eval_with_substitution(x, b, subs, y_env)
            .min2(&eval_with_substitution(y, b, subs, y_env)),
        Expr::Max(x, y) => eval_with_substitution(x, b, subs, y_env)
            .max2(&eval_with_substitution(y, b, subs, y_env)),
        Expr::Relu(x) => eval_with_substitution(x, b, subs, y_env).relu(),
        Expr::Sigmoid(x) => eval_with_substitution(x, b, subs, y_env).sigmoid(),
        Expr::Tanh(x) => eval_with_substitution(x, b, subs, y_env).tanh(),
    }
}

/// Backward linear bounding of the expression over the box, falling back to
/// interval propagation (with a flag) when the network has activations the
/// backward pass cannot handle.
pub fn compute_bounds_crown(
    net: &Network,
    expr: &InnerExpr,
    b: &Hyperbox,
) -> Result<BoundOutcome, BoundError> {
    let bounder = TermBounder::new(net, expr, BoundMethod::Crown)?;
    Ok(BoundOutcome {
        interval: bounder.bound(b)?,
        ia_fallback: bounder.ia_fallback(),
    })
}
