//! End-to-end properties of the anytime engine and the verifier: every
//! emitted bound pair encloses a certified reference probability, bounds
//! are monotone and conserve mass, margin instances converge to the right
//! verdict, and the degenerate cases surface as such.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use veriprob_core::dist::{
    Component, Distribution, Univariate, VarKind, VarLaw, Variable, VariableLayout,
};
use veriprob_core::engine::{
    BoundsEngine, Budget, EngineConfig, SelectHeuristic, SplitHeuristic, StepOutcome, StopReason,
};
use veriprob_core::expr::{parse_inner, parse_outer, InnerExpr};
use veriprob_core::interval::Hyperbox;
use veriprob_core::network::{Activation, Layer, Network};
use veriprob_core::problem::{build_demographic_parity, build_qualified_parity, Problem, Term};
use veriprob_core::verify::{verify, verify_concurrent, VerdictStatus, VerifyConfig, VerifyStop};
use veriprob_core::{BoundMethod, TermBounder};
use ndarray::{Array1, Array2};
use std::collections::BTreeMap;

// ---------------------------------------------------------------------------
// Random instances
// ---------------------------------------------------------------------------

fn normalized(rng: &mut StdRng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn random_layout(rng: &mut StdRng) -> VariableLayout {
    let mut variables = Vec::new();
    let mut next_dim = 0;
    for v in 0..rng.gen_range(1..=2) {
        let kind = match rng.gen_range(0..3) {
            0 => {
                let k = VarKind::Continuous { dim: next_dim };
                next_dim += 1;
                k
            }
            1 => {
                let k = VarKind::Integer { dim: next_dim };
                next_dim += 1;
                k
            }
            _ => {
                let cats = rng.gen_range(2..=3);
                let dims = (next_dim..next_dim + cats).collect();
                next_dim += cats;
                VarKind::Categorical { dims }
            }
        };
        variables.push(Variable {
            name: format!("v{v}"),
            kind,
        });
    }
    VariableLayout::new(variables).unwrap()
}

fn random_law(rng: &mut StdRng, kind: &VarKind) -> VarLaw {
    match kind {
        VarKind::Continuous { .. } => {
            let a = rng.gen_range(-1.5..0.5);
            VarLaw::Scalar(if rng.gen_bool(0.7) {
                Univariate::Uniform {
                    a,
                    b: a + rng.gen_range(0.3..2.0),
                }
            } else {
                Univariate::TruncNormal {
                    mu: rng.gen_range(-0.5..0.5),
                    sigma: rng.gen_range(0.3..1.0),
                    a,
                    b: a + rng.gen_range(0.5..2.5),
                }
            })
        }
        VarKind::Integer { .. } => {
            let start = rng.gen_range(-2..2);
            let len = rng.gen_range(2..=4);
            VarLaw::Scalar(Univariate::IntegerPmf {
                support: (start..start + len).collect(),
                weights: normalized(rng, len as usize),
            })
        }
        VarKind::Categorical { dims } => VarLaw::Categorical {
            weights: normalized(rng, dims.len()),
        },
    }
}

fn random_mixture(rng: &mut StdRng, layout: &VariableLayout) -> Distribution {
    let k = rng.gen_range(1..=3);
    let weights = normalized(rng, k);
    let components = weights
        .into_iter()
        .map(|weight| Component {
            weight,
            laws: layout
                .variables()
                .iter()
                .map(|v| random_law(rng, &v.kind))
                .collect(),
        })
        .collect();
    Distribution::new(components, layout).unwrap()
}

fn random_net(rng: &mut StdRng, n_in: usize) -> Network {
    let hidden = rng.gen_range(2..=8);
    Network::new(vec![
        Layer {
            weights: Array2::from_shape_fn((hidden, n_in), |_| rng.gen_range(-1.5..1.5)),
            bias: Array1::from_shape_fn(hidden, |_| rng.gen_range(-0.5..0.5)),
            activation: Activation::Relu,
        },
        Layer {
            weights: Array2::from_shape_fn((2, hidden), |_| rng.gen_range(-1.5..1.5)),
            bias: Array1::from_shape_fn(2, |_| rng.gen_range(-0.5..0.5)),
            activation: Activation::Identity,
        },
    ])
    .unwrap()
}

// ---------------------------------------------------------------------------
// Certified reference probabilities
// ---------------------------------------------------------------------------

/// One slice of a variable's support: its mass and the ranges it pins on
/// the input dimensions it owns.
struct Slice {
    mass: f64,
    ranges: Vec<(usize, f64, f64)>,
}

fn slices(var: &Variable, law: &VarLaw, cont_cells: usize) -> Vec<Slice> {
    match (&var.kind, law) {
        (VarKind::Continuous { dim }, VarLaw::Scalar(u)) => {
            let (a, b) = u.support();
            if a == b {
                return vec![Slice {
                    mass: 1.0,
                    ranges: vec![(*dim, a, b)],
                }];
            }
            (0..cont_cells)
                .map(|i| {
                    let lo = a + (b - a) * i as f64 / cont_cells as f64;
                    let hi = a + (b - a) * (i + 1) as f64 / cont_cells as f64;
                    Slice {
                        mass: u.mass_in(lo, hi),
                        ranges: vec![(*dim, lo, hi)],
                    }
                })
                .collect()
        }
        (VarKind::Integer { dim }, VarLaw::Scalar(u)) => {
            let (a, b) = u.support();
            (a as i64..=b as i64)
                .map(|v| Slice {
                    mass: u.mass_in(v as f64, v as f64),
                    ranges: vec![(*dim, v as f64, v as f64)],
                })
                .filter(|s| s.mass > 0.0)
                .collect()
        }
        (VarKind::Categorical { dims }, VarLaw::Categorical { weights }) => weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(cat, w)| Slice {
                mass: *w,
                ranges: dims
                    .iter()
                    .enumerate()
                    .map(|(j, d)| {
                        let v = if j == cat { 1.0 } else { 0.0 };
                        (*d, v, v)
                    })
                    .collect(),
            })
            .collect(),
        _ => unreachable!("law shape mismatch"),
    }
}

/// Certified interval on `P(f(x, N(x)) ≥ 0)` by exhaustive interval
/// quadrature: partition the support into cells, bound `f` on each with
/// plain interval propagation, and attribute each cell's mass to
/// "certainly satisfied", "possibly satisfied", or neither.
fn certified_probability(
    net: &Network,
    expr: &InnerExpr,
    dist: &Distribution,
    layout: &VariableLayout,
    cont_cells: usize,
) -> (f64, f64) {
    let bounder = TermBounder::new(net, expr, BoundMethod::Ia).unwrap();
    let mut p_lo = 0.0;
    let mut p_hi = 0.0;
    for comp in dist.components() {
        let var_slices: Vec<Vec<Slice>> = layout
            .variables()
            .iter()
            .zip(&comp.laws)
            .map(|(v, law)| slices(v, law, cont_cells))
            .collect();
        let mut idx = vec![0usize; var_slices.len()];
        'cells: loop {
            let mut mass = comp.weight;
            let mut lo = vec![0.0; layout.input_dim()];
            let mut hi = vec![0.0; layout.input_dim()];
            for (vi, &si) in idx.iter().enumerate() {
                let slice = &var_slices[vi][si];
                mass *= slice.mass;
                for &(d, a, b) in &slice.ranges {
                    lo[d] = a;
                    hi[d] = b;
                }
            }
            if mass > 0.0 {
                let iv = bounder.bound(&Hyperbox::of(lo, hi)).unwrap();
                if iv.lo() >= 0.0 {
                    p_lo += mass;
                    p_hi += mass;
                } else if iv.hi() >= 0.0 {
                    p_hi += mass;
                }
            }
            for vi in (0..idx.len()).rev() {
                idx[vi] += 1;
                if idx[vi] < var_slices[vi].len() {
                    continue 'cells;
                }
                idx[vi] = 0;
            }
            break;
        }
    }
    (p_lo.min(1.0), p_hi.min(1.0))
}

// ---------------------------------------------------------------------------
// Engine properties
// ---------------------------------------------------------------------------

const EXPRS: &[&str] = &["y1", "y1 - y2", "min(y1 - y2, -x1)", "max(y1, y2) - 0.5"];

#[test]
fn bounds_enclose_certified_probability_at_every_iteration() {
    let mut rng = StdRng::seed_from_u64(2024);
    for instance in 0..16u64 {
        let layout = random_layout(&mut rng);
        let dist = random_mixture(&mut rng, &layout);
        let net = random_net(&mut rng, layout.input_dim());
        let expr = parse_inner(EXPRS[(instance as usize) % EXPRS.len()]).unwrap();

        let (p_lo, p_hi) = certified_probability(&net, &expr, &dist, &layout, 24);

        let config = EngineConfig {
            batch_size: 4,
            method: if instance % 2 == 0 {
                BoundMethod::Ia
            } else {
                BoundMethod::Crown
            },
            select: if instance % 3 == 0 {
                SelectHeuristic::ProbLogBounds
            } else {
                SelectHeuristic::Prob
            },
            split: if instance % 4 < 2 {
                SplitHeuristic::LongestEdge
            } else {
                SplitHeuristic::BaBSB
            },
            budget: Budget {
                max_iterations: Some(40),
                ..Budget::UNLIMITED
            },
            seed: instance,
        };
        let mut engine =
            BoundsEngine::new(&net, dist.clone(), layout.clone(), &expr, config).unwrap();
        let mut prev = engine.state();
        while let StepOutcome::Progressed(point) = engine.step().unwrap() {
            let s = engine.state();
            assert!(
                s.l <= p_hi + 1e-9 && s.u >= p_lo - 1e-9,
                "instance {instance} t={}: [{}, {}] excludes certified [{p_lo}, {p_hi}]",
                s.t,
                s.l,
                s.u
            );
            assert!(
                s.l >= prev.l - 1e-12 && s.u <= prev.u + 1e-12,
                "instance {instance}: bounds moved the wrong way"
            );
            let booked = s.l + (1.0 - s.u) + engine.remaining_mass() + engine.parked_mass();
            assert!(
                (booked - 1.0).abs() < 1e-6,
                "instance {instance} t={}: mass books to {booked}",
                s.t
            );
            assert_eq!(point.t, s.t);
            prev = s;
        }
    }
}

#[test]
fn discrete_instances_exhaust_to_the_exact_probability() {
    // Bernoulli(0.3) integer × 3-way one-hot: 6 points in total.
    let layout = VariableLayout::new(vec![
        Variable {
            name: "flag".to_string(),
            kind: VarKind::Integer { dim: 0 },
        },
        Variable {
            name: "group".to_string(),
            kind: VarKind::Categorical {
                dims: vec![1, 2, 3],
            },
        },
    ])
    .unwrap();
    let dist = Distribution::new(
        vec![Component {
            weight: 1.0,
            laws: vec![
                VarLaw::Scalar(Univariate::IntegerPmf {
                    support: vec![0, 1],
                    weights: vec![0.7, 0.3],
                }),
                VarLaw::Categorical {
                    weights: vec![0.2, 0.5, 0.3],
                },
            ],
        }],
        &layout,
    )
    .unwrap();
    let net = Network::new(vec![Layer {
        weights: Array2::from_shape_vec((1, 4), vec![1.0, 0.5, -1.0, 0.25]).unwrap(),
        bias: Array1::from_vec(vec![-0.4]),
        activation: Activation::Identity,
    }])
    .unwrap();
    let expr = parse_inner("y1").unwrap();

    // Exact probability by enumerating all six points.
    let mut exact = 0.0;
    for (flag, wf) in [(0.0, 0.7), (1.0, 0.3)] {
        for (cat, wc) in [(0, 0.2), (1, 0.5), (2, 0.3)] {
            let mut x = vec![flag, 0.0, 0.0, 0.0];
            x[1 + cat] = 1.0;
            let y = net.forward(&x).unwrap();
            if expr.eval_inner(&x, &y).unwrap() >= 0.0 {
                exact += wf * wc;
            }
        }
    }

    let config = EngineConfig {
        batch_size: 2,
        method: BoundMethod::Ia,
        budget: Budget::UNLIMITED,
        ..EngineConfig::default()
    };
    let mut engine = BoundsEngine::new(&net, dist, layout, &expr, config).unwrap();
    let report = engine.run(|_| {}).unwrap();
    assert_eq!(report.stop, StopReason::Exhausted { parked_mass: 0.0 });
    assert!(
        (report.state.l - exact).abs() < 1e-12 && (report.state.u - exact).abs() < 1e-12,
        "[{}, {}] should pin {exact}",
        report.state.l,
        report.state.u
    );
}

// ---------------------------------------------------------------------------
// Verifier end-to-end
// ---------------------------------------------------------------------------

fn uniform_1d() -> (VariableLayout, Distribution) {
    let layout = VariableLayout::all_continuous(1);
    let dist = Distribution::new(
        vec![Component {
            weight: 1.0,
            laws: vec![VarLaw::Scalar(Univariate::Uniform { a: 0.0, b: 1.0 })],
        }],
        &layout,
    )
    .unwrap();
    (layout, dist)
}

fn identity_net_1d() -> Network {
    Network::new(vec![Layer {
        weights: Array2::eye(1),
        bias: Array1::zeros(1),
        activation: Activation::Identity,
    }])
    .unwrap()
}

fn threshold_problem(f: &str, outer: &str) -> Problem {
    let (layout, dist) = uniform_1d();
    Problem::new(
        [("net".to_string(), identity_net_1d())].into_iter().collect(),
        [("dist".to_string(), dist)].into_iter().collect(),
        layout,
        vec![Term {
            network: "net".to_string(),
            distribution: "dist".to_string(),
            expr: parse_inner(f).unwrap(),
        }],
        parse_outer(outer).unwrap(),
        0.0,
    )
    .unwrap()
}

fn ia_config(max_iterations: u64) -> VerifyConfig {
    VerifyConfig {
        engine: EngineConfig {
            batch_size: 4,
            method: BoundMethod::Ia,
            select: SelectHeuristic::Prob,
            split: SplitHeuristic::LongestEdge,
            budget: Budget {
                max_iterations: Some(max_iterations),
                ..Budget::UNLIMITED
            },
            seed: 0,
        },
        max_time: None,
        epsilon: 0.0,
    }
}

/// Margin fixtures (the complete regime: `P(f = 0) = 0`, `|g(p)| ≥ 0.05`)
/// must reach the analytically known verdict.
#[test]
fn margin_instances_converge_to_the_oracle_verdict() {
    // P(x ≥ 1/3) = 2/3 against thresholds on both sides.
    let cases = [
        ("x1 - 0.333333", "p1 - 0.5", VerdictStatus::Satisfied),
        ("x1 - 0.333333", "p1 - 0.8", VerdictStatus::Violated),
        ("0.29 - x1", "p1 - 0.2", VerdictStatus::Satisfied),
        ("0.29 - x1", "0.37 - p1", VerdictStatus::Satisfied),
        ("x1 - 0.61", "p1 - 0.45", VerdictStatus::Violated),
    ];
    for (f, g, expected) in cases {
        let problem = threshold_problem(f, g);
        let verdict = verify(&problem, &ia_config(10_000)).unwrap();
        assert_eq!(verdict.status, expected, "f = {f}, g = {g}");
    }
}

#[test]
fn relu_margin_instance_converges() {
    // y = relu(x − 0.25); P(y ≥ 0.1) = P(x ≥ 0.35) = 0.65.
    let (layout, dist) = uniform_1d();
    let net = Network::new(vec![Layer {
        weights: Array2::eye(1),
        bias: Array1::from_vec(vec![-0.25]),
        activation: Activation::Relu,
    }])
    .unwrap();
    let problem = Problem::new(
        [("net".to_string(), net)].into_iter().collect(),
        [("dist".to_string(), dist)].into_iter().collect(),
        layout,
        vec![Term {
            network: "net".to_string(),
            distribution: "dist".to_string(),
            expr: parse_inner("y1 - 0.1").unwrap(),
        }],
        parse_outer("p1 - 0.5").unwrap(),
        0.0,
    )
    .unwrap();
    let verdict = verify(&problem, &ia_config(10_000)).unwrap();
    assert_eq!(verdict.status, VerdictStatus::Satisfied);
}

#[test]
fn unreachable_threshold_needs_no_refinement() {
    let problem = threshold_problem("x1 - 0.5", "p1 - 1.5");
    let verdict = verify(&problem, &ia_config(10_000)).unwrap();
    assert_eq!(verdict.status, VerdictStatus::Violated);
    assert_eq!(verdict.stop_reason, VerifyStop::Disproved);
    assert_eq!(verdict.per_term[0].t, 0, "trivial bounds already decide");
}

/// `g(p) = 0` exactly (the incomplete regime): `g = p₁ − p₂` over two
/// copies of the same term is identically zero, bounds straddle 0 forever,
/// and the verifier must give up rather than guess.
#[test]
fn zero_margin_instance_exhausts_its_budget_unknown() {
    let (layout, dist) = uniform_1d();
    let problem = Problem::new(
        [("net".to_string(), identity_net_1d())].into_iter().collect(),
        [("dist".to_string(), dist)].into_iter().collect(),
        layout,
        vec![
            Term {
                network: "net".to_string(),
                distribution: "dist".to_string(),
                expr: parse_inner("x1 - 0.333333").unwrap(),
            },
            Term {
                network: "net".to_string(),
                distribution: "dist".to_string(),
                expr: parse_inner("x1 - 0.333333").unwrap(),
            },
        ],
        parse_outer("p1 - p2").unwrap(),
        0.0,
    )
    .unwrap();
    let verdict = verify(&problem, &ia_config(400)).unwrap();
    assert_eq!(verdict.status, VerdictStatus::Unknown);
    assert_eq!(verdict.stop_reason, VerifyStop::Budget);
    // The bounds did tighten around the true value 0.
    assert!(verdict.g_bounds.lo() < 0.0 && verdict.g_bounds.hi() > 0.0);
    assert!(verdict.g_bounds.hi() - verdict.g_bounds.lo() < 0.1);
}

fn parity_nets_and_inputs() -> (Network, VariableLayout, Distribution) {
    // Constant classifier: always assigns class 1.
    let net = Network::new(vec![Layer {
        weights: Array2::zeros((2, 3)),
        bias: Array1::from_vec(vec![1.0, 0.0]),
        activation: Activation::Identity,
    }])
    .unwrap();
    let layout = VariableLayout::new(vec![
        Variable {
            name: "sex".to_string(),
            kind: VarKind::Categorical { dims: vec![0, 1] },
        },
        Variable {
            name: "gain".to_string(),
            kind: VarKind::Continuous { dim: 2 },
        },
    ])
    .unwrap();
    let dist = Distribution::new(
        vec![Component {
            weight: 1.0,
            laws: vec![
                VarLaw::Categorical {
                    weights: vec![0.4, 0.6],
                },
                VarLaw::Scalar(Univariate::Uniform { a: 0.0, b: 1.0 }),
            ],
        }],
        &layout,
    )
    .unwrap();
    (net, layout, dist)
}

#[test]
fn parity_of_a_constant_classifier_is_satisfied() {
    let (net, layout, dist) = parity_nets_and_inputs();
    let problem = build_demographic_parity(net, layout, dist, 0, 0.85).unwrap();
    let verdict = verify(&problem, &ia_config(5_000)).unwrap();
    assert_eq!(verdict.status, VerdictStatus::Satisfied);
    // Everyone is accepted, so the ratio is exactly 1 and g = 1 − γ.
    assert!(verdict.g_bounds.lo() <= 0.15 + 1e-9 && verdict.g_bounds.hi() >= 0.15 - 1e-9);
}

#[test]
fn impossible_qualification_is_reported_degenerate() {
    let (net, layout, dist) = parity_nets_and_inputs();
    // Nobody clears gain ≥ 2 on a [0, 1] support: all four probabilities
    // collapse to the exact point 0 and the ratio is 0/0.
    let problem = build_qualified_parity(net, layout, dist, 0, 2, 2.0, 0.85).unwrap();
    let verdict = verify(&problem, &ia_config(5_000)).unwrap();
    assert_eq!(verdict.status, VerdictStatus::Unknown);
    assert_eq!(verdict.stop_reason, VerifyStop::Degenerate);
    // Degeneracy is proved as soon as the numerator and the denominator
    // are both pinned to 0 — after the first two terms collapse; the
    // remaining terms need not have been refined at all.
    assert_eq!((verdict.per_term[0].l, verdict.per_term[0].u), (0.0, 0.0));
    assert_eq!((verdict.per_term[1].l, verdict.per_term[1].u), (0.0, 0.0));
}

#[test]
fn concurrent_verification_reaches_the_same_verdict() {
    let fixtures: Vec<(Problem, VerdictStatus, VerifyStop)> = vec![
        (
            threshold_problem("x1 - 0.333333", "p1 - 0.5"),
            VerdictStatus::Satisfied,
            VerifyStop::Proved,
        ),
        (
            threshold_problem("x1 - 0.333333", "p1 - 0.8"),
            VerdictStatus::Violated,
            VerifyStop::Disproved,
        ),
        {
            let (net, layout, dist) = parity_nets_and_inputs();
            (
                build_qualified_parity(net, layout, dist, 0, 2, 2.0, 0.85).unwrap(),
                VerdictStatus::Unknown,
                VerifyStop::Degenerate,
            )
        },
    ];
    for (problem, status, stop) in fixtures {
        let sequential = verify(&problem, &ia_config(10_000)).unwrap();
        let concurrent = verify_concurrent(&problem, &ia_config(10_000)).unwrap();
        assert_eq!(sequential.status, status);
        assert_eq!(concurrent.status, status, "schedules must agree");
        assert_eq!(sequential.stop_reason, stop);
        assert_eq!(concurrent.stop_reason, stop);
    }
}

#[test]
fn fallback_warning_surfaces_in_the_verdict() {
    let (layout, dist) = uniform_1d();
    let net = Network::new(vec![
        Layer {
            weights: Array2::eye(1),
            bias: Array1::zeros(1),
            activation: Activation::Sigmoid,
        },
        Layer {
            weights: Array2::eye(1),
            bias: Array1::zeros(1),
            activation: Activation::Identity,
        },
    ])
    .unwrap();
    let networks: BTreeMap<String, Network> = [("net".to_string(), net)].into_iter().collect();
    let problem = Problem::new(
        networks,
        [("dist".to_string(), dist)].into_iter().collect(),
        layout,
        vec![Term {
            network: "net".to_string(),
            distribution: "dist".to_string(),
            expr: parse_inner("y1 - 0.6").unwrap(),
        }],
        parse_outer("p1 - 0.2").unwrap(),
        0.0,
    )
    .unwrap();
    let mut config = ia_config(2_000);
    config.engine.method = BoundMethod::Crown;
    let verdict = verify(&problem, &config).unwrap();
    assert!(!verdict.warnings.is_empty(), "sigmoid net cannot use the backward pass");
    // Sound anyway: P(sigmoid(x) ≥ 0.6 on U[0, 1]) ≈ 0.594 > 0.2.
    assert_eq!(verdict.status, VerdictStatus::Satisfied);
}
