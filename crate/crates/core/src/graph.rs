//! A scalar computation DAG and its interval propagation loop.
//!
//! Nodes may only reference earlier nodes, so every graph is topologically
//! ordered by construction and evaluation is a single forward sweep. The
//! primitive set is closed: affine combinations, multiplication, reciprocal,
//! the monotone activations, and binary min/max — exactly the operations the
//! interval rules support.

use crate::interval::{mul_ext, Hyperbox, Interval};
use thiserror::Error;

/// Index of a node within its graph.
pub type NodeId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("node references id {reference} but only {available} nodes exist")]
    ForwardReference { reference: NodeId, available: usize },
    #[error("input dimension {dim} out of range (graph has {input_dim} inputs)")]
    InputOutOfRange { dim: usize, input_dim: usize },
    #[error("box has {actual} dimensions, graph expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
}

/// A single scalar operation.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// The value of input dimension `d`.
    Input(usize),
    Const(f64),
    /// `Σ coef·node + bias`.
    Affine { terms: Vec<(f64, NodeId)>, bias: f64 },
    Mul(NodeId, NodeId),
    Recip(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Min(NodeId, NodeId),
    Max(NodeId, NodeId),
}

impl Node {
    fn max_reference(&self) -> Option<NodeId> {
        match self {
            Node::Input(_) | Node::Const(_) => None,
            Node::Affine { terms, .. } => terms.iter().map(|&(_, id)| id).max(),
            Node::Recip(a) | Node::Relu(a) | Node::Sigmoid(a) | Node::Tanh(a) => Some(*a),
            Node::Mul(a, b) | Node::Min(a, b) | Node::Max(a, b) => Some((*a).max(*b)),
        }
    }
}

/// A scalar DAG over a fixed number of input dimensions.
#[derive(Debug, Clone)]
pub struct Graph {
    input_dim: usize,
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new(input_dim: usize) -> Graph {
        Graph {
            input_dim,
            nodes: Vec::new(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Appends a node; its operands must already exist (topological order).
    pub fn push(&mut self, node: Node) -> Result<NodeId, GraphError> {
        if let Node::Input(d) = node {
            if d >= self.input_dim {
                return Err(GraphError::InputOutOfRange {
                    dim: d,
                    input_dim: self.input_dim,
                });
            }
        }
        if let Some(max_ref) = node.max_reference() {
            if max_ref >= self.nodes.len() {
                return Err(GraphError::ForwardReference {
                    reference: max_ref,
                    available: self.nodes.len(),
                });
            }
        }
        self.nodes.push(node);
        Ok(self.nodes.len() - 1)
    }

    /// Interval propagation: one enclosing interval per node, in order.
    pub fn propagate(&self, input: &Hyperbox) -> Result<Vec<Interval>, GraphError> {
        if input.dim() != self.input_dim {
            return Err(GraphError::DimensionMismatch {
                expected: self.input_dim,
                actual: input.dim(),
            });
        }
        let mut vals: Vec<Interval> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let iv = match node {
                Node::Input(d) => input.interval(*d),
                Node::Const(c) => Interval::point(*c),
                Node::Affine { terms, bias } => affine_interval(terms, *bias, &vals),
                Node::Mul(a, b) => vals[*a].mul(&vals[*b]),
                Node::Recip(a) => vals[*a].recip(),
                Node::Relu(a) => vals[*a].relu(),
                Node::Sigmoid(a) => vals[*a].sigmoid(),
                Node::Tanh(a) => vals[*a].tanh(),
                Node::Min(a, b) => vals[*a].min2(&vals[*b]),
                Node::Max(a, b) => vals[*a].max2(&vals[*b]),
            };
            vals.push(iv);
        }
        Ok(vals)
    }

    /// Exact point evaluation: one value per node, in order.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, GraphError> {
        if x.len() != self.input_dim {
            return Err(GraphError::DimensionMismatch {
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        let mut vals: Vec<f64> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node {
                Node::Input(d) => x[*d],
                Node::Const(c) => *c,
                Node::Affine { terms, bias } => terms
                    .iter()
                    .fold(*bias, |acc, &(c, id)| acc + mul_ext(c, vals[id])),
                Node::Mul(a, b) => mul_ext(vals[*a], vals[*b]),
                Node::Recip(a) => 1.0 / vals[*a],
                Node::Relu(a) => crate::interval::relu(vals[*a]),
                Node::Sigmoid(a) => crate::interval::sigmoid(vals[*a]),
                Node::Tanh(a) => vals[*a].tanh(),
                Node::Min(a, b) => vals[*a].min(vals[*b]),
                Node::Max(a, b) => vals[*a].max(vals[*b]),
            };
            vals.push(v);
        }
        Ok(vals)
    }
}

/// Affine combination of node intervals: coefficient signs pick which
/// endpoint feeds each bound, mirroring the `A⁺/A⁻` matrix rule.
fn affine_interval(terms: &[(f64, NodeId)], bias: f64, vals: &[Interval]) -> Interval {
    let mut lo = bias;
    let mut hi = bias;
    for &(c, id) in terms {
        let iv = &vals[id];
        if c > 0.0 {
            lo = guard_lo(lo + mul_ext(c, iv.lo()));
            hi = guard_hi(hi + mul_ext(c, iv.hi()));
        } else if c < 0.0 {
            lo = guard_lo(lo + mul_ext(c, iv.hi()));
            hi = guard_hi(hi + mul_ext(c, iv.lo()));
        }
    }
    Interval::new(lo, hi).expect("affine accumulation produced an invalid interval")
}

#[inline]
fn guard_lo(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

#[inline]
fn guard_hi(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}
