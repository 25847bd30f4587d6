//! The full verification problem: networks, distributions, inner terms, and
//! the outer constraint, plus loaders and ready-made property builders.
//!
//! # Problem files
//!
//! A problem is one JSON document. Networks are referenced by path
//! (relative paths resolve against the problem file's directory);
//! distributions are inline, either as an explicit mixture or as a Bayesian
//! network compiled at load time. Example:
//!
//! ```json
//! {
//!   "layout": [
//!     {"name": "sex", "kind": "categorical", "dims": [0, 1]},
//!     {"name": "capital_gain", "kind": "continuous", "dim": 2}
//!   ],
//!   "networks": {"m": {"path": "model.json"}},
//!   "distributions": {
//!     "d": {"bayes_net": {"nodes": [
//!       {"name": "sex", "parents": [], "node": "discrete",
//!        "cardinality": 2, "cpt": [[0.3307, 0.6693]]},
//!       {"name": "capital_gain", "parents": ["sex"], "node": "leaf",
//!        "laws": [{"kind": "uniform", "a": 0.0, "b": 1.0},
//!                 {"kind": "uniform", "a": 0.0, "b": 2.0}]}
//!     ]}}
//!   },
//!   "terms": [
//!     {"network": "m", "distribution": "d", "f": "min(y1 - y2, -x1)"},
//!     {"network": "m", "distribution": "d", "f": "-x1"},
//!     {"network": "m", "distribution": "d", "f": "min(y1 - y2, x1 - 1)"},
//!     {"network": "m", "distribution": "d", "f": "x1 - 1"}
//!   ],
//!   "outer": "(p1 * p4) / (p2 * p3) - 0.85",
//!   "epsilon": 0.0
//! }
//! ```
//!
//! In a mixture, each component's `laws` is a map keyed by layout variable
//! name: a tagged univariate (`{"kind": "uniform", ...}`) for scalar
//! variables, `{"weights": [...]}` for one-hot groups. A network entry may
//! pin `"format": "json" | "nnet"`; otherwise the file extension decides
//! (`.nnet` → NNet, anything else → JSON).

use crate::dist::{
    BayesNet, BayesNode, BayesNodeKind, Component, DistError, Distribution, Univariate, VarLaw,
    Variable, VariableLayout,
};
use crate::expr::{parse_inner, parse_outer, Expr, InnerExpr, OuterExpr, ParseError};
use crate::network::{load_network, Network, NetworkError, NetworkFormat};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{context}")]
    Parse {
        context: String,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("invalid problem: {0}")]
    Validation(String),
}

/// One inner term: `p = P(f(x, N(x)) ≥ 0)` with `x` drawn from the named
/// distribution and `N` the named network.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub network: String,
    pub distribution: String,
    pub expr: InnerExpr,
}

/// A complete verification problem: prove or refute
/// `g(p₁, …, p_v) ≥ 0` where `pᵢ = P(fᵢ(x, N(x)) ≥ 0)`.
#[derive(Debug, Clone)]
pub struct Problem {
    networks: BTreeMap<String, Network>,
    distributions: BTreeMap<String, Distribution>,
    layout: VariableLayout,
    terms: Vec<Term>,
    outer: OuterExpr,
    /// Constraint-tightening margin: satisfaction requires `g ≥ epsilon`.
    epsilon: f64,
}

impl Problem {
    pub fn new(
        networks: BTreeMap<String, Network>,
        distributions: BTreeMap<String, Distribution>,
        layout: VariableLayout,
        terms: Vec<Term>,
        outer: OuterExpr,
        epsilon: f64,
    ) -> Result<Problem, ProblemError> {
        if terms.is_empty() {
            return Err(ProblemError::Validation(
                "a problem needs at least one term".to_string(),
            ));
        }
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(ProblemError::Validation(format!(
                "epsilon must be finite and non-negative, got {epsilon}"
            )));
        }
        if let Some(i) = outer.max_prob_index() {
            if i >= terms.len() {
                return Err(ProblemError::Validation(format!(
                    "outer constraint references p{} but there are only {} terms",
                    i + 1,
                    terms.len()
                )));
            }
        }
        for (name, dist) in &distributions {
            dist.check_layout(&layout).map_err(|e| {
                ProblemError::Validation(format!("distribution {name:?}: {e}"))
            })?;
        }
        for (ti, term) in terms.iter().enumerate() {
            let net = networks.get(&term.network).ok_or_else(|| {
                ProblemError::Validation(format!(
                    "term {}: unknown network {:?}",
                    ti + 1,
                    term.network
                ))
            })?;
            if !distributions.contains_key(&term.distribution) {
                return Err(ProblemError::Validation(format!(
                    "term {}: unknown distribution {:?}",
                    ti + 1,
                    term.distribution
                )));
            }
            if net.input_dim() != layout.input_dim() {
                return Err(ProblemError::Validation(format!(
                    "term {}: network {:?} has input dimension {} but the layout has {}",
                    ti + 1,
                    term.network,
                    net.input_dim(),
                    layout.input_dim()
                )));
            }
            if let Some(j) = term.expr.max_input_index() {
                if j >= layout.input_dim() {
                    return Err(ProblemError::Validation(format!(
                        "term {}: expression references x{} but the layout has {} dimensions",
                        ti + 1,
                        j + 1,
                        layout.input_dim()
                    )));
                }
            }
            if let Some(k) = term.expr.max_output_index() {
                if k >= net.output_dim() {
                    return Err(ProblemError::Validation(format!(
                        "term {}: expression references y{} but network {:?} has {} outputs",
                        ti + 1,
                        k + 1,
                        term.network,
                        net.output_dim()
                    )));
                }
            }
        }
        Ok(Problem {
            networks,
            distributions,
            layout,
            terms,
            outer,
            epsilon,
        })
    }

    pub fn networks(&self) -> &BTreeMap<String, Network> {
        &self.networks
    }

    pub fn distributions(&self) -> &BTreeMap<String, Distribution> {
        &self.distributions
    }

    pub fn layout(&self) -> &VariableLayout {
        &self.layout
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn outer(&self) -> &OuterExpr {
        &self.outer
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Looks up a network by name. Term references are validated at
    /// construction, so lookups through a term cannot fail.
    pub fn network(&self, name: &str) -> &Network {
        self.networks
            .get(name)
            .unwrap_or_else(|| panic!("unknown network {name:?}"))
    }

    /// Looks up a distribution by name (see [`Problem::network`]).
    pub fn distribution(&self, name: &str) -> &Distribution {
        self.distributions
            .get(name)
            .unwrap_or_else(|| panic!("unknown distribution {name:?}"))
    }
}

#[derive(Deserialize)]
struct NetworkDto {
    path: PathBuf,
    #[serde(default)]
    format: Option<NetworkFormat>,
}

#[derive(Deserialize)]
struct MixtureComponentDto {
    weight: f64,
    laws: BTreeMap<String, VarLaw>,
}

#[derive(Deserialize)]
struct BayesNodeDto {
    name: String,
    #[serde(default)]
    parents: Vec<String>,
    #[serde(flatten)]
    kind: BayesNodeKind,
}

#[derive(Deserialize)]
struct BayesNetDto {
    nodes: Vec<BayesNodeDto>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DistributionDto {
    Mixture { mixture: Vec<MixtureComponentDto> },
    BayesNet { bayes_net: BayesNetDto },
}

#[derive(Deserialize)]
struct TermDto {
    network: String,
    distribution: String,
    f: String,
}

#[derive(Deserialize)]
struct ProblemDto {
    layout: Vec<Variable>,
    networks: BTreeMap<String, NetworkDto>,
    distributions: BTreeMap<String, DistributionDto>,
    terms: Vec<TermDto>,
    outer: String,
    #[serde(default)]
    epsilon: f64,
}

fn infer_format(path: &Path) -> NetworkFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("nnet") => NetworkFormat::Nnet,
        _ => NetworkFormat::Json,
    }
}

fn mixture_from_dto(
    name: &str,
    components: Vec<MixtureComponentDto>,
    layout: &VariableLayout,
) -> Result<Distribution, ProblemError> {
    let mut built = Vec::with_capacity(components.len());
    for (ci, comp) in components.into_iter().enumerate() {
        let mut laws = comp.laws;
        let mut ordered = Vec::with_capacity(layout.variables().len());
        for var in layout.variables() {
            let law = laws.remove(&var.name).ok_or_else(|| {
                ProblemError::Validation(format!(
                    "distribution {name:?}, component {ci}: no law for variable {:?}",
                    var.name
                ))
            })?;
            ordered.push(law);
        }
        if let Some(unknown) = laws.keys().next() {
            return Err(ProblemError::Validation(format!(
                "distribution {name:?}, component {ci}: law for unknown variable {unknown:?}"
            )));
        }
        built.push(Component {
            weight: comp.weight,
            laws: ordered,
        });
    }
    Ok(Distribution::new(built, layout)?)
}

fn bayes_net_from_dto(
    name: &str,
    dto: BayesNetDto,
    layout: &VariableLayout,
) -> Result<Distribution, ProblemError> {
    let index_of: BTreeMap<&str, usize> = dto
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.name.as_str(), i))
        .collect();
    let mut nodes = Vec::with_capacity(dto.nodes.len());
    for node in &dto.nodes {
        let parents = node
            .parents
            .iter()
            .map(|p| {
                index_of.get(p.as_str()).copied().ok_or_else(|| {
                    ProblemError::Validation(format!(
                        "distribution {name:?}: node {:?} lists unknown parent {p:?}",
                        node.name
                    ))
                })
            })
            .collect::<Result<Vec<usize>, ProblemError>>()?;
        nodes.push(BayesNode {
            name: node.name.clone(),
            parents,
            kind: node.kind.clone(),
        });
    }
    Ok(BayesNet::new(nodes)?.compile(layout)?)
}

/// Loads a problem file (schema in the module docs), reading referenced
/// network files and compiling inline Bayesian networks.
pub fn load_problem(path: &Path) -> Result<Problem, ProblemError> {
    let text = std::fs::read_to_string(path).map_err(|source| ProblemError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let dto: ProblemDto = serde_json::from_str(&text).map_err(|source| ProblemError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    let layout = VariableLayout::new(dto.layout)?;

    let mut networks = BTreeMap::new();
    for (name, nd) in dto.networks {
        let net_path = if nd.path.is_absolute() {
            nd.path.clone()
        } else {
            base.join(&nd.path)
        };
        let format = nd.format.unwrap_or_else(|| infer_format(&net_path));
        networks.insert(name, load_network(&net_path, format)?);
    }

    let mut distributions = BTreeMap::new();
    for (name, dd) in dto.distributions {
        let dist = match dd {
            DistributionDto::Mixture { mixture } => mixture_from_dto(&name, mixture, &layout)?,
            DistributionDto::BayesNet { bayes_net } => {
                bayes_net_from_dto(&name, bayes_net, &layout)?
            }
        };
        distributions.insert(name, dist);
    }

    let terms = dto
        .terms
        .iter()
        .enumerate()
        .map(|(ti, td)| {
            let expr = parse_inner(&td.f).map_err(|source| ProblemError::Parse {
                context: format!("term {}", ti + 1),
                source,
            })?;
            Ok(Term {
                network: td.network.clone(),
                distribution: td.distribution.clone(),
                expr,
            })
        })
        .collect::<Result<Vec<Term>, ProblemError>>()?;

    let outer = parse_outer(&dto.outer).map_err(|source| ProblemError::Parse {
        context: "outer constraint".to_string(),
        source,
    })?;

    Problem::new(networks, distributions, layout, terms, outer, dto.epsilon)
}

fn one_net(net: Network) -> BTreeMap<String, Network> {
    [("net".to_string(), net)].into_iter().collect()
}

fn one_dist(dist: Distribution) -> BTreeMap<String, Distribution> {
    [("dist".to_string(), dist)].into_iter().collect()
}

fn term(expr: InnerExpr) -> Term {
    Term {
        network: "net".to_string(),
        distribution: "dist".to_string(),
        expr,
    }
}

/// `y1 − y2`: positive when the network assigns the favourable class.
fn accept_margin() -> InnerExpr {
    Expr::output(0) - Expr::output(1)
}

fn check_one_hot(layout: &VariableLayout, a: usize) -> Result<(), ProblemError> {
    match layout.kind_of_dim(a) {
        crate::dist::DimKind::OneHot(_) => Ok(()),
        _ => Err(ProblemError::Validation(format!(
            "dimension {} is not part of a one-hot group",
            a + 1
        ))),
    }
}

fn check_gamma(gamma: f64) -> Result<(), ProblemError> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(ProblemError::Validation(format!(
            "gamma must be finite and positive, got {gamma}"
        )))
    }
}

/// Group-fairness ratio problem: with dimension `a` the one-hot indicator
/// of the advantaged group, prove
/// `P(accept | ¬a) / P(accept | a) ≥ gamma` via the four-term encoding
///
/// * `f₁ = min(y1 − y2, −x_a)`   (accepted and not advantaged)
/// * `f₂ = −x_a`                  (not advantaged)
/// * `f₃ = min(y1 − y2, x_a − 1)` (accepted and advantaged)
/// * `f₄ = x_a − 1`               (advantaged)
/// * `g  = (p₁·p₄)/(p₂·p₃) − gamma`
pub fn build_demographic_parity(
    net: Network,
    layout: VariableLayout,
    dist: Distribution,
    advantaged: usize,
    gamma: f64,
) -> Result<Problem, ProblemError> {
    check_one_hot(&layout, advantaged)?;
    check_gamma(gamma)?;
    if net.output_dim() < 2 {
        return Err(ProblemError::Validation(format!(
            "group fairness needs at least 2 network outputs, got {}",
            net.output_dim()
        )));
    }
    let xa = || Expr::input(advantaged);
    let terms = vec![
        term(accept_margin().min2(-xa())),
        term(-xa()),
        term(accept_margin().min2(xa() - Expr::constant(1.0))),
        term(xa() - Expr::constant(1.0)),
    ];
    let ratio = Expr::prob(0) * Expr::prob(3) / (Expr::prob(1) * Expr::prob(2));
    let outer = ratio - Expr::constant(gamma);
    Problem::new(one_net(net), one_dist(dist), layout, terms, outer, 0.0)
}

/// Demographic parity restricted to qualified individuals: every inner
/// event is intersected with `x_q ≥ q_hat` by conjoining
/// `min(·, x_q − q_hat)`.
pub fn build_qualified_parity(
    net: Network,
    layout: VariableLayout,
    dist: Distribution,
    advantaged: usize,
    qualified: usize,
    q_hat: f64,
    gamma: f64,
) -> Result<Problem, ProblemError> {
    check_one_hot(&layout, advantaged)?;
    check_gamma(gamma)?;
    if !q_hat.is_finite() {
        return Err(ProblemError::Validation(format!(
            "qualification threshold must be finite, got {q_hat}"
        )));
    }
    if qualified >= layout.input_dim() {
        return Err(ProblemError::Validation(format!(
            "qualification dimension {} out of range (input has {} dimensions)",
            qualified + 1,
            layout.input_dim()
        )));
    }
    if let crate::dist::DimKind::OneHot(group) = layout.kind_of_dim(advantaged) {
        if group.contains(&qualified) {
            return Err(ProblemError::Validation(format!(
                "qualification dimension {} lies in the protected one-hot group",
                qualified + 1
            )));
        }
    }
    let base = build_demographic_parity(net, layout, dist, advantaged, gamma)?;
    let qual = || Expr::input(qualified) - Expr::constant(q_hat);
    let terms = base
        .terms
        .iter()
        .map(|t| term(t.expr.clone().min2(qual())))
        .collect();
    Problem::new(
        base.networks,
        base.distributions,
        base.layout,
        terms,
        base.outer,
        base.epsilon,
    )
}

/// Probability that output 1 is the (weakly) largest score — the violation
/// event for "output 1 should never win" — under a uniform distribution on
/// `region ∩ X`, where `X` is the network's input box. Region endpoints may
/// be infinite; they are clipped against `X`.
pub fn build_violation_rate(
    net: Network,
    region: &[(f64, f64)],
) -> Result<Problem, ProblemError> {
    let n = net.input_dim();
    if region.len() != n {
        return Err(ProblemError::Validation(format!(
            "region has {} dimensions but the network input has {}",
            region.len(),
            n
        )));
    }
    let input_box = net.input_bounds().cloned();
    let mut laws = Vec::with_capacity(n);
    for (d, &(mut lo, mut hi)) in region.iter().enumerate() {
        if let Some(b) = &input_box {
            lo = lo.max(b.lo()[d]);
            hi = hi.min(b.hi()[d]);
        }
        if lo > hi {
            return Err(ProblemError::Validation(format!(
                "region does not intersect the network input box (dimension {} empty)",
                d + 1
            )));
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Err(ProblemError::Validation(format!(
                "sampling region is unbounded in dimension {} and the network declares no input box",
                d + 1
            )));
        }
        laws.push(VarLaw::Scalar(if lo == hi {
            Univariate::Point { c: lo }
        } else {
            Univariate::Uniform { a: lo, b: hi }
        }));
    }
    let layout = VariableLayout::all_continuous(n);
    let dist = Distribution::new(
        vec![Component { weight: 1.0, laws }],
        &layout,
    )?;
    let m = net.output_dim();
    let top = (1..m).fold(Expr::output(0), |acc, k| acc.max2(Expr::output(k)));
    let f = -(top - Expr::output(0));
    Problem::new(
        one_net(net),
        one_dist(dist),
        layout,
        vec![term(f)],
        Expr::prob(0),
        0.0,
    )
}

/// Probability that class `target` (minimal score wins) is assigned across
/// a relative-radius perturbation of `x`: dims in `dims` vary uniformly in
/// `[x_d − r·w_d, x_d + r·w_d]` (clipped to the input box, whose width is
/// `w_d`), all other dims stay fixed at `x_d`.
pub fn build_robustness(
    net: Network,
    x: &[f64],
    r: f64,
    dims: &[usize],
    target: usize,
) -> Result<Problem, ProblemError> {
    let n = net.input_dim();
    if x.len() != n {
        return Err(ProblemError::Validation(format!(
            "reference point has {} dimensions but the network input has {}",
            x.len(),
            n
        )));
    }
    if !(r > 0.0 && r <= 1.0) {
        return Err(ProblemError::Validation(format!(
            "radius fraction must lie in (0, 1], got {r}"
        )));
    }
    if target >= net.output_dim() {
        return Err(ProblemError::Validation(format!(
            "target class {} out of range ({} outputs)",
            target + 1,
            net.output_dim()
        )));
    }
    let input_box = net
        .input_bounds()
        .ok_or_else(|| {
            ProblemError::Validation(
                "the network declares no input box; relative radii need box widths".to_string(),
            )
        })?
        .clone();
    if !input_box.contains(x) {
        return Err(ProblemError::Validation(
            "reference point lies outside the network input box".to_string(),
        ));
    }
    let mut perturbed = vec![false; n];
    for &d in dims {
        if d >= n {
            return Err(ProblemError::Validation(format!(
                "perturbed dimension {} out of range (input has {} dimensions)",
                d + 1,
                n
            )));
        }
        if perturbed[d] {
            return Err(ProblemError::Validation(format!(
                "perturbed dimension {} listed twice",
                d + 1
            )));
        }
        perturbed[d] = true;
    }
    let mut laws = Vec::with_capacity(n);
    for d in 0..n {
        let law = if perturbed[d] {
            let w = input_box.hi()[d] - input_box.lo()[d];
            if !w.is_finite() {
                return Err(ProblemError::Validation(format!(
                    "input box is unbounded in dimension {}",
                    d + 1
                )));
            }
            let lo = (x[d] - r * w).max(input_box.lo()[d]);
            let hi = (x[d] + r * w).min(input_box.hi()[d]);
            if lo == hi {
                Univariate::Point { c: lo }
            } else {
                Univariate::Uniform { a: lo, b: hi }
            }
        } else {
            Univariate::Point { c: x[d] }
        };
        laws.push(VarLaw::Scalar(law));
    }
    let layout = VariableLayout::all_continuous(n);
    let dist = Distribution::new(
        vec![Component {
            weight: 1.0,
            laws,
        }],
        &layout,
    )?;
    let m = net.output_dim();
    let bottom = (1..m).fold(Expr::output(0), |acc, k| acc.min2(Expr::output(k)));
    let f = bottom - Expr::output(target);
    Problem::new(
        one_net(net),
        one_dist(dist),
        layout,
        vec![term(f)],
        Expr::prob(0),
        0.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::VarKind;
    use crate::interval::Hyperbox;
    use crate::network::{Activation, Layer};
    use ndarray::{arr1, arr2};

    fn layout_sex_gain() -> VariableLayout {
        VariableLayout::new(vec![
            Variable {
                name: "sex".to_string(),
                kind: VarKind::Categorical { dims: vec![0, 1] },
            },
            Variable {
                name: "gain".to_string(),
                kind: VarKind::Continuous { dim: 2 },
            },
        ])
        .unwrap()
    }

    fn dist_sex_gain(layout: &VariableLayout) -> Distribution {
        Distribution::new(
            vec![Component {
                weight: 1.0,
                laws: vec![
                    VarLaw::Categorical {
                        weights: vec![0.4, 0.6],
                    },
                    VarLaw::Scalar(Univariate::Uniform { a: 0.0, b: 1.0 }),
                ],
            }],
            layout,
        )
        .unwrap()
    }

    /// 3 inputs → 2 outputs, always preferring class 1.
    fn constant_classifier() -> Network {
        Network::new(vec![Layer {
            weights: arr2(&[[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
            bias: arr1(&[1.0, 0.0]),
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    #[test]
    fn demographic_parity_shape() {
        let layout = layout_sex_gain();
        let dist = dist_sex_gain(&layout);
        let p = build_demographic_parity(constant_classifier(), layout, dist, 0, 0.85).unwrap();
        assert_eq!(p.terms().len(), 4);
        let shown: Vec<String> = p.terms().iter().map(|t| t.expr.to_string()).collect();
        assert_eq!(
            shown,
            vec![
                "min(y1 - y2, -x1)",
                "-x1",
                "min(y1 - y2, x1 - 1)",
                "x1 - 1",
            ]
        );
        assert_eq!(p.outer().to_string(), "p1 * p4 / (p2 * p3) - 0.85");

        // f₂ at the boundary x_a = 0 counts as satisfied (closed event).
        assert_eq!(
            p.terms()[1].expr.eval_inner(&[0.0, 1.0, 0.3], &[]).unwrap(),
            0.0
        );
    }

    #[test]
    fn demographic_parity_rejects_non_onehot_dim() {
        let layout = layout_sex_gain();
        let dist = dist_sex_gain(&layout);
        let err =
            build_demographic_parity(constant_classifier(), layout, dist, 2, 0.85).unwrap_err();
        assert!(matches!(err, ProblemError::Validation(_)));
    }

    #[test]
    fn qualified_parity_conjoins_threshold() {
        let layout = layout_sex_gain();
        let dist = dist_sex_gain(&layout);
        let p = build_qualified_parity(constant_classifier(), layout, dist, 0, 2, 0.5, 0.85)
            .unwrap();
        assert_eq!(
            p.terms()[1].expr.to_string(),
            "min(-x1, x3 - 0.5)"
        );

        // A vacuous threshold (below the support) reduces every fᵢ to the
        // plain parity term on the support.
        let layout = layout_sex_gain();
        let dist = dist_sex_gain(&layout);
        let vac =
            build_qualified_parity(constant_classifier(), layout, dist, 0, 2, -10.0, 0.85)
                .unwrap();
        let layout = layout_sex_gain();
        let dist = dist_sex_gain(&layout);
        let plain = build_demographic_parity(constant_classifier(), layout, dist, 0, 0.85)
            .unwrap();
        for (tv, tp) in vac.terms().iter().zip(plain.terms()) {
            for gain in [0.0, 0.25, 0.9] {
                for sex in [[1.0, 0.0], [0.0, 1.0]] {
                    let x = [sex[0], sex[1], gain];
                    let y = [1.0, 0.0];
                    assert_eq!(
                        tv.expr.eval_inner(&x, &y).unwrap(),
                        tp.expr.eval_inner(&x, &y).unwrap()
                    );
                }
            }
        }

        // The qualification dimension may not sit inside the protected
        // group.
        let layout = layout_sex_gain();
        let dist = dist_sex_gain(&layout);
        let err = build_qualified_parity(constant_classifier(), layout, dist, 0, 1, 0.5, 0.85)
            .unwrap_err();
        assert!(matches!(err, ProblemError::Validation(_)));
    }

    fn boxed_net(weights: ndarray::Array2<f64>, bias: ndarray::Array1<f64>) -> Network {
        let n = weights.ncols();
        Network::with_input_bounds(
            vec![Layer {
                weights,
                bias,
                activation: Activation::Identity,
            }],
            Some(Hyperbox::of(vec![0.0; n], vec![1.0; n])),
        )
        .unwrap()
    }

    #[test]
    fn violation_rate_clips_region_to_input_box() {
        let net = boxed_net(arr2(&[[1.0, 0.0], [0.0, 1.0]]), arr1(&[0.0, 0.0]));
        let p = build_violation_rate(
            net,
            &[(0.5, f64::INFINITY), (f64::NEG_INFINITY, 0.7)],
        )
        .unwrap();
        let support = p.distribution("dist").support_box(p.layout());
        assert_eq!(support.lo(), &[0.5, 0.0]);
        assert_eq!(support.hi(), &[1.0, 0.7]);
        assert_eq!(p.terms()[0].expr.to_string(), "-(max(y1, y2) - y1)");

        // All-equal outputs make the violation event certain: f = 0 ≥ 0.
        let f = &p.terms()[0].expr;
        assert_eq!(f.eval_inner(&[0.6, 0.3], &[2.0, 2.0]).unwrap(), 0.0);

        let net = boxed_net(arr2(&[[1.0, 0.0], [0.0, 1.0]]), arr1(&[0.0, 0.0]));
        let err = build_violation_rate(net, &[(2.0, 3.0), (0.0, 1.0)]).unwrap_err();
        assert!(matches!(err, ProblemError::Validation(_)));
    }

    #[test]
    fn robustness_builds_perturbation_box() {
        // Input box [0,1]², reference (0.5, 0.9), r = 0.05 on dim 1 only.
        let net = boxed_net(arr2(&[[1.0, 0.0], [0.0, 1.0]]), arr1(&[0.0, 0.0]));
        let p = build_robustness(net, &[0.5, 0.9], 0.05, &[0], 1).unwrap();
        let support = p.distribution("dist").support_box(p.layout());
        assert!((support.lo()[0] - 0.45).abs() < 1e-12);
        assert!((support.hi()[0] - 0.55).abs() < 1e-12);
        assert_eq!((support.lo()[1], support.hi()[1]), (0.9, 0.9));
        assert_eq!(p.terms()[0].expr.to_string(), "min(y1, y2) - y2");

        // Perturbations are clipped to the box.
        let net = boxed_net(arr2(&[[1.0, 0.0], [0.0, 1.0]]), arr1(&[0.0, 0.0]));
        let p = build_robustness(net, &[0.99, 0.5], 0.05, &[0], 0).unwrap();
        let support = p.distribution("dist").support_box(p.layout());
        assert_eq!(support.hi()[0], 1.0);

        let net = boxed_net(arr2(&[[1.0, 0.0], [0.0, 1.0]]), arr1(&[0.0, 0.0]));
        let err = build_robustness(net, &[1.5, 0.5], 0.05, &[0], 0).unwrap_err();
        assert!(matches!(err, ProblemError::Validation(_)));
    }

    #[test]
    fn validation_catches_dangling_references() {
        let layout = VariableLayout::all_continuous(1);
        let dist = Distribution::new(
            vec![Component {
                weight: 1.0,
                laws: vec![VarLaw::Scalar(Univariate::Uniform { a: 0.0, b: 1.0 })],
            }],
            &layout,
        )
        .unwrap();
        let net = Network::new(vec![Layer {
            weights: arr2(&[[1.0]]),
            bias: arr1(&[0.0]),
            activation: Activation::Identity,
        }])
        .unwrap();

        // Outer references p2 with a single term.
        let err = Problem::new(
            one_net(net.clone()),
            one_dist(dist.clone()),
            layout.clone(),
            vec![term(parse_inner("x1").unwrap())],
            parse_outer("p2").unwrap(),
            0.0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("p2"));

        // Expression reaching past the network outputs.
        let err = Problem::new(
            one_net(net.clone()),
            one_dist(dist.clone()),
            layout.clone(),
            vec![term(parse_inner("y2").unwrap())],
            parse_outer("p1").unwrap(),
            0.0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("y2"));

        // Unknown distribution name.
        let err = Problem::new(
            one_net(net),
            one_dist(dist),
            layout,
            vec![Term {
                network: "net".to_string(),
                distribution: "elsewhere".to_string(),
                expr: parse_inner("x1").unwrap(),
            }],
            parse_outer("p1").unwrap(),
            0.0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("elsewhere"));
    }

    #[test]
    fn problem_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let net = constant_classifier();
        crate::network::save_network_json(&net, &dir.path().join("model.json")).unwrap();
        let doc = r#"{
            "layout": [
                {"name": "sex", "kind": "categorical", "dims": [0, 1]},
                {"name": "gain", "kind": "continuous", "dim": 2}
            ],
            "networks": {"m": {"path": "model.json"}},
            "distributions": {
                "mix": {"mixture": [
                    {"weight": 0.5,
                     "laws": {"sex": {"weights": [0.4, 0.6]},
                              "gain": {"kind": "uniform", "a": 0.0, "b": 1.0}}},
                    {"weight": 0.5,
                     "laws": {"sex": {"weights": [0.9, 0.1]},
                              "gain": {"kind": "trunc_normal", "mu": 0.5,
                                       "sigma": 0.2, "a": 0.0, "b": 1.0}}}
                ]},
                "bn": {"bayes_net": {"nodes": [
                    {"name": "sex", "parents": [], "node": "discrete",
                     "cardinality": 2, "cpt": [[0.3, 0.7]]},
                    {"name": "gain", "parents": ["sex"], "node": "leaf",
                     "laws": [{"kind": "uniform", "a": 0.0, "b": 1.0},
                              {"kind": "uniform", "a": 0.0, "b": 0.5}]}
                ]}}
            },
            "terms": [
                {"network": "m", "distribution": "mix", "f": "min(y1 - y2, -x1)"},
                {"network": "m", "distribution": "bn", "f": "-x1"}
            ],
            "outer": "p1 / p2 - 0.85",
            "epsilon": 0.01
        }"#;
        let problem_path = dir.path().join("problem.json");
        std::fs::write(&problem_path, doc).unwrap();
        let p = load_problem(&problem_path).unwrap();
        assert_eq!(p.terms().len(), 2);
        assert_eq!(p.epsilon(), 0.01);
        assert_eq!(p.network("m").output_dim(), 2);
        // The BN compiles into one component per sex value.
        assert_eq!(p.distribution("bn").components().len(), 2);
        assert_eq!(p.outer().to_string(), "p1 / p2 - 0.85");

        // Referencing a missing variable in a mixture is caught with the
        // variable's name in the message.
        let bad = doc.replace("\"gain\": {\"kind\": \"uniform\", \"a\": 0.0, \"b\": 1.0}}",
            "\"typo\": {\"kind\": \"uniform\", \"a\": 0.0, \"b\": 1.0}}");
        std::fs::write(&problem_path, bad).unwrap();
        let err = load_problem(&problem_path).unwrap_err();
        assert!(err.to_string().contains("gain"));
    }
}
