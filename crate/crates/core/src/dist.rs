//! Input distributions over typed variable layouts.
//!
//! A [`Distribution`] is a finite mixture of product measures: each mixture
//! component assigns one univariate law per layout variable (a categorical
//! weight vector for one-hot variables). This family is closed under the
//! branch-and-bound splits the engine performs, and — crucially — the
//! probability of any axis-aligned box has a closed form, so branch masses
//! are exact rather than estimated.
//!
//! Discrete Bayesian networks are supported by *compilation*: every joint
//! configuration of the discrete nodes becomes one mixture component whose
//! weight is the product of the corresponding CPT entries. Leaf nodes carry
//! a univariate law per parent configuration, so compiled networks can mix
//! discrete structure with continuous marginals.

use crate::interval::Hyperbox;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DistError {
    #[error("bad variable layout: {0}")]
    Layout(String),
    #[error("bad univariate law: {0}")]
    Law(String),
    #[error("bad mixture: {0}")]
    Mixture(String),
    #[error("bad Bayesian network: {0}")]
    BayesNet(String),
    #[error(
        "Bayesian network has {configs} discrete configurations, over the compilation cap {cap}"
    )]
    TooManyConfigs { configs: u128, cap: u64 },
}

// ---------------------------------------------------------------------------
// Variable layouts
// ---------------------------------------------------------------------------

/// How a named variable occupies input dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarKind {
    /// Real-valued; one dimension.
    Continuous { dim: usize },
    /// Integer-valued; one dimension. Splits round to the integer lattice.
    Integer { dim: usize },
    /// One-hot encoded categorical; `dims[c]` is the indicator of category `c`.
    Categorical { dims: Vec<usize> },
}

impl VarKind {
    pub fn dims(&self) -> Vec<usize> {
        match self {
            VarKind::Continuous { dim } | VarKind::Integer { dim } => vec![*dim],
            VarKind::Categorical { dims } => dims.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    #[serde(flatten)]
    pub kind: VarKind,
}

/// What a single input dimension is, from the splitter's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimKind<'a> {
    Continuous,
    Integer,
    /// Member of a one-hot group (the whole group is given).
    OneHot(&'a [usize]),
}

/// Maps the `n` input dimensions to typed, named variables.
///
/// The variables' dimension sets partition `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VariableLayout {
    variables: Vec<Variable>,
    input_dim: usize,
}

impl VariableLayout {
    pub fn new(variables: Vec<Variable>) -> Result<VariableLayout, DistError> {
        let mut dims: Vec<usize> = Vec::new();
        for v in &variables {
            let d = v.kind.dims();
            if let VarKind::Categorical { dims } = &v.kind {
                if dims.len() < 2 {
                    return Err(DistError::Layout(format!(
                        "one-hot variable {:?} needs at least 2 dimensions",
                        v.name
                    )));
                }
            }
            dims.extend(d);
        }
        let input_dim = dims.len();
        let mut seen = vec![false; input_dim];
        for d in &dims {
            if *d >= input_dim || seen[*d] {
                return Err(DistError::Layout(format!(
                    "variable dimensions must partition 0..{input_dim} (dim {d} repeated or out of range)"
                )));
            }
            seen[*d] = true;
        }
        Ok(VariableLayout {
            variables,
            input_dim,
        })
    }

    /// A layout of `n` anonymous continuous variables, one per dimension.
    pub fn all_continuous(n: usize) -> VariableLayout {
        VariableLayout {
            variables: (0..n)
                .map(|d| Variable {
                    name: format!("x{}", d + 1),
                    kind: VarKind::Continuous { dim: d },
                })
                .collect(),
            input_dim: n,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable_named(&self, name: &str) -> Option<(usize, &Variable)> {
        self.variables
            .iter()
            .enumerate()
            .find(|(_, v)| v.name == name)
    }

    pub fn kind_of_dim(&self, dim: usize) -> DimKind<'_> {
        for v in &self.variables {
            match &v.kind {
                VarKind::Continuous { dim: d } if *d == dim => return DimKind::Continuous,
                VarKind::Integer { dim: d } if *d == dim => return DimKind::Integer,
                VarKind::Categorical { dims } if dims.contains(&dim) => {
                    return DimKind::OneHot(dims)
                }
                _ => {}
            }
        }
        // `new` guarantees every dimension is claimed by some variable.
        unreachable!("dimension {dim} not covered by layout")
    }
}

// ---------------------------------------------------------------------------
// Univariate laws
// ---------------------------------------------------------------------------

/// A univariate law for one scalar variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Univariate {
    Uniform { a: f64, b: f64 },
    /// Normal(mu, sigma) truncated to `[a, b]` and renormalised. `a`/`b` may
    /// be infinite (untruncated tails).
    TruncNormal { mu: f64, sigma: f64, a: f64, b: f64 },
    /// Probability mass on the given integer support points.
    IntegerPmf { support: Vec<i64>, weights: Vec<f64> },
    /// Unit mass at a single point.
    Point { c: f64 },
}

/// Standard normal CDF that is total on the extended reals.
fn std_normal_cdf(z: f64) -> f64 {
    if z == f64::NEG_INFINITY {
        return 0.0;
    }
    if z == f64::INFINITY {
        return 1.0;
    }
    // Unit normal; parameters are valid, so construction cannot fail.
    Normal::new(0.0, 1.0).unwrap().cdf(z)
}

fn std_normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

/// Two-sided tail mass clipped from unbounded normals when a finite support
/// box is required.
const NORMAL_CLIP_TAIL: f64 = 1e-12;

impl Univariate {
    pub fn validate(&self) -> Result<(), DistError> {
        match self {
            Univariate::Uniform { a, b } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(DistError::Law(format!(
                        "uniform needs finite a < b, got [{a}, {b}]"
                    )));
                }
            }
            Univariate::TruncNormal { mu, sigma, a, b } => {
                if !mu.is_finite() || !sigma.is_finite() || *sigma <= 0.0 {
                    return Err(DistError::Law(format!(
                        "truncated normal needs finite mu and sigma > 0, got mu={mu}, sigma={sigma}"
                    )));
                }
                if a >= b || a.is_nan() || b.is_nan() {
                    return Err(DistError::Law(format!(
                        "truncated normal needs a < b, got [{a}, {b}]"
                    )));
                }
                let za = std_normal_cdf((a - mu) / sigma);
                let zb = std_normal_cdf((b - mu) / sigma);
                if zb - za <= 0.0 {
                    return Err(DistError::Law(format!(
                        "truncation [{a}, {b}] leaves no mass under Normal({mu}, {sigma})"
                    )));
                }
            }
            Univariate::IntegerPmf { support, weights } => {
                if support.is_empty() || support.len() != weights.len() {
                    return Err(DistError::Law(
                        "integer pmf needs equally many support points and weights".to_string(),
                    ));
                }
                if support.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(DistError::Law(
                        "integer pmf support must be strictly increasing".to_string(),
                    ));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(DistError::Law(
                        "integer pmf weights must be finite and nonnegative".to_string(),
                    ));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(DistError::Law(format!(
                        "integer pmf weights sum to {total}, expected 1 (tolerance 1e-12)"
                    )));
                }
            }
            Univariate::Point { c } => {
                if !c.is_finite() {
                    return Err(DistError::Law(format!("point mass must be finite, got {c}")));
                }
            }
        }
        Ok(())
    }

    /// `P(X ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Univariate::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            Univariate::TruncNormal { mu, sigma, a, b } => {
                if x < *a {
                    return 0.0;
                }
                if x >= *b {
                    return 1.0;
                }
                let za = std_normal_cdf((a - mu) / sigma);
                let zb = std_normal_cdf((b - mu) / sigma);
                let zx = std_normal_cdf((x - mu) / sigma);
                ((zx - za) / (zb - za)).clamp(0.0, 1.0)
            }
            Univariate::IntegerPmf { support, weights } => support
                .iter()
                .zip(weights)
                .filter(|(s, _)| (**s as f64) <= x)
                .map(|(_, w)| *w)
                .sum(),
            Univariate::Point { c } => {
                if x >= *c {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Mass of `[lo, hi]` (closed box face). Continuous laws use the CDF
    /// difference; discrete laws sum the mass points inside.
    pub fn mass_in(&self, lo: f64, hi: f64) -> f64 {
        if lo > hi {
            return 0.0;
        }
        match self {
            Univariate::Uniform { .. } | Univariate::TruncNormal { .. } => {
                (self.cdf(hi) - self.cdf(lo)).max(0.0)
            }
            Univariate::IntegerPmf { support, weights } => support
                .iter()
                .zip(weights)
                .filter(|(s, _)| {
                    let v = **s as f64;
                    v >= lo && v <= hi
                })
                .map(|(_, w)| *w)
                .sum(),
            Univariate::Point { c } => {
                if *c >= lo && *c <= hi {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Finite support interval. Unbounded normal tails are clipped at
    /// quantile `1e-12` per side.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Univariate::Uniform { a, b } => (*a, *b),
            Univariate::TruncNormal { mu, sigma, a, b } => {
                let lo = if a.is_finite() {
                    *a
                } else {
                    mu + sigma * std_normal_quantile(NORMAL_CLIP_TAIL)
                };
                let hi = if b.is_finite() {
                    *b
                } else {
                    mu + sigma * std_normal_quantile(1.0 - NORMAL_CLIP_TAIL)
                };
                (lo, hi)
            }
            Univariate::IntegerPmf { support, .. } => {
                (support[0] as f64, *support.last().unwrap() as f64)
            }
            Univariate::Point { c } => (*c, *c),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Univariate::Uniform { a, b } => rng.gen_range(*a..*b),
            Univariate::TruncNormal { mu, sigma, a, b } => {
                let za = std_normal_cdf((a - mu) / sigma);
                let zb = std_normal_cdf((b - mu) / sigma);
                let u: f64 = rng.gen_range(f64::EPSILON..1.0);
                let x = mu + sigma * std_normal_quantile(za + u * (zb - za));
                x.clamp(
                    if a.is_finite() { *a } else { f64::NEG_INFINITY },
                    if b.is_finite() { *b } else { f64::INFINITY },
                )
            }
            Univariate::IntegerPmf { support, weights } => {
                support[sample_index(weights, rng)] as f64
            }
            Univariate::Point { c } => *c,
        }
    }
}

fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen::<f64>();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

// ---------------------------------------------------------------------------
// Mixtures of product measures
// ---------------------------------------------------------------------------

/// Law of one layout variable inside a product component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VarLaw {
    Scalar(Univariate),
    /// Category weights over a one-hot group, aligned with its `dims`.
    Categorical { weights: Vec<f64> },
}

/// One product component: a weight and one law per layout variable,
/// in layout order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub laws: Vec<VarLaw>,
}

/// Finite mixture of products of univariate laws.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distribution {
    components: Vec<Component>,
}

impl Distribution {
    /// Validates the mixture against a layout: positive weights summing to 1
    /// (tolerance 1e-9), every component covering every variable with a law
    /// of the right shape.
    pub fn new(
        components: Vec<Component>,
        layout: &VariableLayout,
    ) -> Result<Distribution, DistError> {
        check_components(&components, layout)?;
        Ok(Distribution { components })
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Re-checks this mixture against a (possibly different) layout without
    /// rebuilding it.
    pub fn check_layout(&self, layout: &VariableLayout) -> Result<(), DistError> {
        check_components(&self.components, layout)
    }

    /// Exact probability of the closed box.
    ///
    /// `Σ_components weight · Π_variables mass(law restricted to the box)`,
    /// clamped to `[0, 1]`.
    pub fn box_probability(&self, layout: &VariableLayout, b: &Hyperbox) -> f64 {
        assert_eq!(
            b.dim(),
            layout.input_dim(),
            "box dimension must match the layout"
        );
        let mut total = 0.0;
        for comp in &self.components {
            let mut mass = comp.weight;
            for (var, law) in layout.variables().iter().zip(&comp.laws) {
                if mass == 0.0 {
                    break;
                }
                mass *= var_mass(var, law, b);
            }
            total += mass;
        }
        total.clamp(0.0, 1.0)
    }

    /// Smallest finite box carrying all the mass (up to normal tail
    /// clipping); one-hot dimensions get `[0, 1]`.
    pub fn support_box(&self, layout: &VariableLayout) -> Hyperbox {
        let n = layout.input_dim();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for comp in &self.components {
            for (var, law) in layout.variables().iter().zip(&comp.laws) {
                match (&var.kind, law) {
                    (VarKind::Categorical { dims }, _) => {
                        for d in dims {
                            lo[*d] = lo[*d].min(0.0);
                            hi[*d] = hi[*d].max(1.0);
                        }
                    }
                    (VarKind::Continuous { dim } | VarKind::Integer { dim }, VarLaw::Scalar(u)) => {
                        let (a, b) = u.support();
                        lo[*dim] = lo[*dim].min(a);
                        hi[*dim] = hi[*dim].max(b);
                    }
                    // Shape mismatches are rejected at construction.
                    _ => unreachable!("law shape mismatch"),
                }
            }
        }
        Hyperbox::of(lo, hi)
    }

    /// Draws one point: pick a component by weight, then sample each
    /// variable independently.
    pub fn sample<R: Rng + ?Sized>(&self, layout: &VariableLayout, rng: &mut R) -> Vec<f64> {
        let weights: Vec<f64> = self.components.iter().map(|c| c.weight).collect();
        let comp = &self.components[sample_index(&weights, rng)];
        let mut x = vec![0.0; layout.input_dim()];
        for (var, law) in layout.variables().iter().zip(&comp.laws) {
            match (&var.kind, law) {
                (VarKind::Continuous { dim } | VarKind::Integer { dim }, VarLaw::Scalar(u)) => {
                    x[*dim] = u.sample(rng);
                }
                (VarKind::Categorical { dims }, VarLaw::Categorical { weights }) => {
                    let c = sample_index(weights, rng);
                    for (i, d) in dims.iter().enumerate() {
                        x[*d] = if i == c { 1.0 } else { 0.0 };
                    }
                }
                _ => unreachable!("law shape mismatch"),
            }
        }
        x
    }
}

fn check_components(components: &[Component], layout: &VariableLayout) -> Result<(), DistError> {
    if components.is_empty() {
        return Err(DistError::Mixture("mixture has no components".to_string()));
    }
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(DistError::Mixture(format!(
            "component weights sum to {total}, expected 1 (tolerance 1e-9)"
        )));
    }
    for (ci, comp) in components.iter().enumerate() {
        if comp.weight <= 0.0 || !comp.weight.is_finite() {
            return Err(DistError::Mixture(format!(
                "component {ci} has non-positive weight {}",
                comp.weight
            )));
        }
        if comp.laws.len() != layout.variables().len() {
            return Err(DistError::Mixture(format!(
                "component {ci} has {} laws for {} layout variables",
                comp.laws.len(),
                layout.variables().len()
            )));
        }
        for (var, law) in layout.variables().iter().zip(&comp.laws) {
            check_law_shape(var, law, ci)?;
        }
    }
    Ok(())
}

fn check_law_shape(var: &Variable, law: &VarLaw, ci: usize) -> Result<(), DistError> {
    match (&var.kind, law) {
        (VarKind::Continuous { .. }, VarLaw::Scalar(u)) => {
            u.validate()?;
            if matches!(u, Univariate::IntegerPmf { .. }) {
                return Err(DistError::Mixture(format!(
                    "component {ci}: continuous variable {:?} cannot carry an integer pmf",
                    var.name
                )));
            }
            Ok(())
        }
        (VarKind::Integer { .. }, VarLaw::Scalar(u)) => {
            u.validate()?;
            match u {
                Univariate::IntegerPmf { .. } => Ok(()),
                Univariate::Point { c } if c.fract() == 0.0 => Ok(()),
                _ => Err(DistError::Mixture(format!(
                    "component {ci}: integer variable {:?} needs an integer pmf or integer point mass",
                    var.name
                ))),
            }
        }
        (VarKind::Categorical { dims }, VarLaw::Categorical { weights }) => {
            if weights.len() != dims.len() {
                return Err(DistError::Mixture(format!(
                    "component {ci}: variable {:?} has {} categories but {} weights",
                    var.name,
                    dims.len(),
                    weights.len()
                )));
            }
            if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(DistError::Mixture(format!(
                    "component {ci}: variable {:?} has negative or non-finite weights",
                    var.name
                )));
            }
            let total: f64 = weights.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(DistError::Mixture(format!(
                    "component {ci}: weights of {:?} sum to {total}, expected 1",
                    var.name
                )));
            }
            Ok(())
        }
        _ => Err(DistError::Mixture(format!(
            "component {ci}: law shape does not match variable {:?}",
            var.name
        ))),
    }
}

fn var_mass(var: &Variable, law: &VarLaw, b: &Hyperbox) -> f64 {
    match (&var.kind, law) {
        (VarKind::Continuous { dim } | VarKind::Integer { dim }, VarLaw::Scalar(u)) => {
            u.mass_in(b.lo()[*dim], b.hi()[*dim])
        }
        (VarKind::Categorical { dims }, VarLaw::Categorical { weights }) => {
            // A category's one-hot vector lies in the box iff its own
            // indicator admits 1 and every other indicator admits 0.
            let mut mass = 0.0;
            'cat: for (c, w) in weights.iter().enumerate() {
                for (i, d) in dims.iter().enumerate() {
                    let want = if i == c { 1.0 } else { 0.0 };
                    if b.lo()[*d] > want || b.hi()[*d] < want {
                        continue 'cat;
                    }
                }
                mass += w;
            }
            mass
        }
        _ => unreachable!("law shape mismatch"),
    }
}

// ---------------------------------------------------------------------------
// Bayesian networks
// ---------------------------------------------------------------------------

/// Law attached to a leaf node, one per parent configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LeafLaw {
    Scalar(Univariate),
    Categorical { weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum BayesNodeKind {
    /// Discrete node with a conditional probability table. Row `r` of the
    /// CPT is the distribution of this node under parent configuration `r`
    /// (mixed-radix index, first parent most significant).
    Discrete { cardinality: usize, cpt: Vec<Vec<f64>> },
    /// Leaf carrying one univariate/categorical law per parent configuration.
    /// Leaves cannot be parents of other nodes.
    Leaf { laws: Vec<LeafLaw> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesNode {
    /// Must match a layout variable name.
    pub name: String,
    /// Indices of parent nodes; parents must precede this node.
    pub parents: Vec<usize>,
    #[serde(flatten)]
    pub kind: BayesNodeKind,
}

/// A discrete-skeleton Bayesian network, stored in topological order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BayesNet {
    nodes: Vec<BayesNode>,
}

/// Default cap on the number of discrete joint configurations a network may
/// compile to.
pub const DEFAULT_COMPILE_CAP: u64 = 1_000_000;

impl BayesNet {
    pub fn new(nodes: Vec<BayesNode>) -> Result<BayesNet, DistError> {
        for (i, node) in nodes.iter().enumerate() {
            for p in &node.parents {
                if *p >= i {
                    return Err(DistError::BayesNet(format!(
                        "node {:?} lists parent index {p}, but parents must precede it (index {i})",
                        node.name
                    )));
                }
                if !matches!(nodes[*p].kind, BayesNodeKind::Discrete { .. }) {
                    return Err(DistError::BayesNet(format!(
                        "node {:?} has leaf parent {:?}; only discrete nodes may have children",
                        node.name, nodes[*p].name
                    )));
                }
            }
            let rows: usize = node
                .parents
                .iter()
                .map(|p| match &nodes[*p].kind {
                    BayesNodeKind::Discrete { cardinality, .. } => *cardinality,
                    _ => unreachable!(),
                })
                .product();
            match &node.kind {
                BayesNodeKind::Discrete { cardinality, cpt } => {
                    if *cardinality < 2 {
                        return Err(DistError::BayesNet(format!(
                            "discrete node {:?} needs cardinality ≥ 2",
                            node.name
                        )));
                    }
                    if cpt.len() != rows {
                        return Err(DistError::BayesNet(format!(
                            "node {:?} needs {rows} CPT rows, has {}",
                            node.name,
                            cpt.len()
                        )));
                    }
                    for (r, row) in cpt.iter().enumerate() {
                        if row.len() != *cardinality {
                            return Err(DistError::BayesNet(format!(
                                "node {:?} CPT row {r} has {} entries, expected {cardinality}",
                                node.name,
                                row.len()
                            )));
                        }
                        if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                            return Err(DistError::BayesNet(format!(
                                "node {:?} CPT row {r} has negative or non-finite entries",
                                node.name
                            )));
                        }
                        let total: f64 = row.iter().sum();
                        if (total - 1.0).abs() > 1e-9 {
                            return Err(DistError::BayesNet(format!(
                                "node {:?} CPT row {r} sums to {total}, expected 1",
                                node.name
                            )));
                        }
                    }
                }
                BayesNodeKind::Leaf { laws } => {
                    if laws.len() != rows {
                        return Err(DistError::BayesNet(format!(
                            "leaf {:?} needs {rows} laws, has {}",
                            node.name,
                            laws.len()
                        )));
                    }
                    for law in laws {
                        if let LeafLaw::Scalar(u) = law {
                            u.validate()?;
                        }
                    }
                }
            }
        }
        Ok(BayesNet { nodes })
    }

    pub fn nodes(&self) -> &[BayesNode] {
        &self.nodes
    }

    fn discrete_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|i| matches!(self.nodes[*i].kind, BayesNodeKind::Discrete { .. }))
            .collect()
    }

    fn cardinality(&self, node: usize) -> usize {
        match &self.nodes[node].kind {
            BayesNodeKind::Discrete { cardinality, .. } => *cardinality,
            _ => unreachable!("cardinality of a leaf"),
        }
    }

    /// Mixed-radix row index of a parent configuration, first parent most
    /// significant.
    fn row_index(&self, node: usize, values: &[usize]) -> usize {
        let mut idx = 0;
        for p in &self.nodes[node].parents {
            idx = idx * self.cardinality(*p) + values[*p];
        }
        idx
    }

    /// Compiles to a mixture with one component per discrete joint
    /// configuration, using the default cap of 10⁶ configurations.
    ///
    /// Discrete node values map onto their layout variable: a one-hot group
    /// gets the matching indicator, an integer variable gets the value index
    /// itself (0-based).
    pub fn compile(&self, layout: &VariableLayout) -> Result<Distribution, DistError> {
        self.compile_with_cap(layout, DEFAULT_COMPILE_CAP)
    }

    pub fn compile_with_cap(
        &self,
        layout: &VariableLayout,
        cap: u64,
    ) -> Result<Distribution, DistError> {
        let var_for_node: Vec<usize> = self
            .nodes
            .iter()
            .map(|n| {
                layout
                    .variable_named(&n.name)
                    .map(|(i, _)| i)
                    .ok_or_else(|| {
                        DistError::BayesNet(format!(
                            "node {:?} does not name a layout variable",
                            n.name
                        ))
                    })
            })
            .collect::<Result<_, _>>()?;
        if self.nodes.len() != layout.variables().len() {
            return Err(DistError::BayesNet(format!(
                "network has {} nodes for {} layout variables",
                self.nodes.len(),
                layout.variables().len()
            )));
        }

        let discrete = self.discrete_nodes();
        let mut configs: u128 = 1;
        for d in &discrete {
            configs = configs.saturating_mul(self.cardinality(*d) as u128);
        }
        if configs > cap as u128 {
            return Err(DistError::TooManyConfigs { configs, cap });
        }

        let mut components = Vec::with_capacity(configs as usize);
        // values[i] is meaningful only for discrete nodes.
        let mut values = vec![0usize; self.nodes.len()];
        let mut config = vec![0usize; discrete.len()];
        loop {
            for (slot, d) in discrete.iter().enumerate() {
                values[*d] = config[slot];
            }
            let mut weight = 1.0;
            for d in &discrete {
                let BayesNodeKind::Discrete { cpt, .. } = &self.nodes[*d].kind else {
                    unreachable!()
                };
                weight *= cpt[self.row_index(*d, &values)][values[*d]];
            }
            if weight > 0.0 {
                let mut laws = vec![None; layout.variables().len()];
                for (i, node) in self.nodes.iter().enumerate() {
                    let var = &layout.variables()[var_for_node[i]];
                    let law = match &node.kind {
                        BayesNodeKind::Discrete { cardinality, .. } => {
                            discrete_value_law(var, values[i], *cardinality)?
                        }
                        BayesNodeKind::Leaf { laws } => {
                            leaf_law_to_var_law(&laws[self.row_index(i, &values)])
                        }
                    };
                    laws[var_for_node[i]] = Some(law);
                }
                components.push(Component {
                    weight,
                    laws: laws.into_iter().map(Option::unwrap).collect(),
                });
            }

            // Advance the mixed-radix counter, last node fastest.
            let mut slot = discrete.len();
            loop {
                if slot == 0 {
                    return finish_compile(components, layout);
                }
                slot -= 1;
                config[slot] += 1;
                if config[slot] < self.cardinality(discrete[slot]) {
                    break;
                }
                config[slot] = 0;
            }
        }
    }

    /// Ancestral sampling, independent of compilation (oracle for tests).
    pub fn sample<R: Rng + ?Sized>(&self, layout: &VariableLayout, rng: &mut R) -> Vec<f64> {
        let mut values = vec![0usize; self.nodes.len()];
        let mut x = vec![0.0; layout.input_dim()];
        for (i, node) in self.nodes.iter().enumerate() {
            let var = layout
                .variable_named(&node.name)
                .expect("node names a layout variable")
                .1;
            match &node.kind {
                BayesNodeKind::Discrete { cpt, .. } => {
                    let row = &cpt[self.row_index(i, &values)];
                    let v = sample_index(row, rng);
                    values[i] = v;
                    match &var.kind {
                        VarKind::Categorical { dims } => {
                            for (c, d) in dims.iter().enumerate() {
                                x[*d] = if c == v { 1.0 } else { 0.0 };
                            }
                        }
                        VarKind::Integer { dim } => x[*dim] = v as f64,
                        VarKind::Continuous { dim } => x[*dim] = v as f64,
                    }
                }
                BayesNodeKind::Leaf { laws } => {
                    match (&laws[self.row_index(i, &values)], &var.kind) {
                        (LeafLaw::Scalar(u), VarKind::Continuous { dim })
                        | (LeafLaw::Scalar(u), VarKind::Integer { dim }) => {
                            x[*dim] = u.sample(rng);
                        }
                        (LeafLaw::Categorical { weights }, VarKind::Categorical { dims }) => {
                            let c = sample_index(weights, rng);
                            for (i, d) in dims.iter().enumerate() {
                                x[*d] = if i == c { 1.0 } else { 0.0 };
                            }
                        }
                        _ => panic!("leaf law shape does not match variable {:?}", var.name),
                    }
                }
            }
        }
        x
    }
}

fn finish_compile(
    components: Vec<Component>,
    layout: &VariableLayout,
) -> Result<Distribution, DistError> {
    if components.is_empty() {
        return Err(DistError::BayesNet(
            "network assigns zero probability to every configuration".to_string(),
        ));
    }
    Distribution::new(components, layout)
}

/// Deterministic law putting a discrete node's sampled value onto its
/// layout variable.
fn discrete_value_law(var: &Variable, value: usize, cardinality: usize) -> Result<VarLaw, DistError> {
    match &var.kind {
        VarKind::Categorical { dims } => {
            if dims.len() != cardinality {
                return Err(DistError::BayesNet(format!(
                    "node {:?} has cardinality {cardinality} but its one-hot group has {} dims",
                    var.name,
                    dims.len()
                )));
            }
            let mut weights = vec![0.0; cardinality];
            weights[value] = 1.0;
            Ok(VarLaw::Categorical { weights })
        }
        VarKind::Integer { .. } => Ok(VarLaw::Scalar(Univariate::Point { c: value as f64 })),
        VarKind::Continuous { .. } => Err(DistError::BayesNet(format!(
            "discrete node {:?} cannot target a continuous variable",
            var.name
        ))),
    }
}

fn leaf_law_to_var_law(law: &LeafLaw) -> VarLaw {
    match law {
        LeafLaw::Scalar(u) => VarLaw::Scalar(u.clone()),
        LeafLaw::Categorical { weights } => VarLaw::Categorical {
            weights: weights.clone(),
        },
    }
}
