//! Distribution oracles: exact box probabilities against Monte-Carlo
//! estimates, Bayesian-network compilation against brute-force joint
//! enumeration, and compiled mixtures against ancestral sampling.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use veriprob_core::dist::{
    BayesNet, BayesNode, BayesNodeKind, Component, Distribution, LeafLaw, Univariate, VarKind,
    VarLaw, Variable, VariableLayout,
};
use veriprob_core::interval::Hyperbox;

fn normalized(rng: &mut StdRng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn random_layout(rng: &mut StdRng) -> VariableLayout {
    let mut variables = Vec::new();
    let mut next_dim = 0;
    for v in 0..rng.gen_range(1..=3) {
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
        VarKind::Continuous { .. } => VarLaw::Scalar(match rng.gen_range(0..3) {
            0 => {
                let a = rng.gen_range(-2.0..1.0);
                Univariate::Uniform {
                    a,
                    b: a + rng.gen_range(0.2..2.0),
                }
            }
            1 => {
                let a = rng.gen_range(-2.0..0.0);
                Univariate::TruncNormal {
                    mu: rng.gen_range(-1.0..1.0),
                    sigma: rng.gen_range(0.2..1.0),
                    a,
                    b: a + rng.gen_range(0.5..3.0),
                }
            }
            _ => Univariate::Point {
                c: rng.gen_range(-1.0..1.0),
            },
        }),
        VarKind::Integer { .. } => {
            let start = rng.gen_range(-3..3);
            let len = rng.gen_range(2..=5);
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

/// A random query box: sub-ranges of the support for scalar dimensions,
/// `{0}`, `{1}`, or `{0,1}` for indicator dimensions.
fn random_box(rng: &mut StdRng, layout: &VariableLayout, dist: &Distribution) -> Hyperbox {
    let support = dist.support_box(layout);
    let mut lo = vec![0.0; layout.input_dim()];
    let mut hi = vec![0.0; layout.input_dim()];
    for var in layout.variables() {
        match &var.kind {
            VarKind::Continuous { dim } | VarKind::Integer { dim } => {
                let (a, b) = (support.lo()[*dim], support.hi()[*dim]);
                let w = b - a;
                let x = a + rng.gen_range(-0.2..0.5) * w;
                let y = x + rng.gen_range(0.1..1.2) * w.max(0.5);
                lo[*dim] = x;
                hi[*dim] = y;
            }
            VarKind::Categorical { dims } => {
                for d in dims {
                    let (a, b) = match rng.gen_range(0..3) {
                        0 => (0.0, 0.0),
                        1 => (1.0, 1.0),
                        _ => (0.0, 1.0),
                    };
                    lo[*d] = a;
                    hi[*d] = b;
                }
            }
        }
    }
    Hyperbox::of(lo, hi)
}

#[test]
fn box_probability_matches_monte_carlo() {
    let mut rng = StdRng::seed_from_u64(314);
    for instance in 0..8 {
        let layout = random_layout(&mut rng);
        let dist = random_mixture(&mut rng, &layout);
        let b = random_box(&mut rng, &layout, &dist);
        let exact = dist.box_probability(&layout, &b);

        let n = 200_000;
        let mut hits = 0usize;
        for _ in 0..n {
            if b.contains(&dist.sample(&layout, &mut rng)) {
                hits += 1;
            }
        }
        let p_hat = hits as f64 / n as f64;
        let sigma = (p_hat * (1.0 - p_hat) / n as f64).sqrt().max(1e-4);
        assert!(
            (exact - p_hat).abs() <= 3.0 * sigma,
            "instance {instance}: exact {exact} vs Monte-Carlo {p_hat} (3σ = {})",
            3.0 * sigma
        );
    }
}

#[test]
fn samples_stay_inside_the_support_box() {
    let mut rng = StdRng::seed_from_u64(99);
    for _ in 0..5 {
        let layout = random_layout(&mut rng);
        let dist = random_mixture(&mut rng, &layout);
        let support = dist.support_box(&layout);
        for _ in 0..2_000 {
            let x = dist.sample(&layout, &mut rng);
            assert!(support.contains(&x), "{x:?} escapes {support:?}");
        }
    }
}

fn two_node_bn() -> (VariableLayout, BayesNet) {
    let layout = VariableLayout::new(vec![
        Variable {
            name: "a".to_string(),
            kind: VarKind::Categorical { dims: vec![0, 1] },
        },
        Variable {
            name: "b".to_string(),
            kind: VarKind::Categorical {
                dims: vec![2, 3, 4],
            },
        },
        Variable {
            name: "c".to_string(),
            kind: VarKind::Continuous { dim: 5 },
        },
    ])
    .unwrap();
    let bn = BayesNet::new(vec![
        BayesNode {
            name: "a".to_string(),
            parents: vec![],
            kind: BayesNodeKind::Discrete {
                cardinality: 2,
                cpt: vec![vec![0.25, 0.75]],
            },
        },
        BayesNode {
            name: "b".to_string(),
            parents: vec![0],
            kind: BayesNodeKind::Discrete {
                cardinality: 3,
                cpt: vec![vec![0.5, 0.3, 0.2], vec![0.1, 0.6, 0.3]],
            },
        },
        BayesNode {
            name: "c".to_string(),
            parents: vec![1],
            kind: BayesNodeKind::Leaf {
                laws: vec![
                    LeafLaw::Scalar(Univariate::Uniform { a: 0.0, b: 1.0 }),
                    LeafLaw::Scalar(Univariate::Uniform { a: 0.0, b: 2.0 }),
                    LeafLaw::Scalar(Univariate::Uniform { a: 1.0, b: 3.0 }),
                ],
            },
        },
    ])
    .unwrap();
    (layout, bn)
}

#[test]
fn compiled_weights_equal_brute_force_joint() {
    let (layout, bn) = two_node_bn();
    let dist = bn.compile(&layout).unwrap();
    // Brute force P(a, b) with b's value moving fastest, exactly the
    // compiler's enumeration order.
    let pa = [0.25, 0.75];
    let pb = [[0.5, 0.3, 0.2], [0.1, 0.6, 0.3]];
    let mut expected = Vec::new();
    for (av, pav) in pa.iter().enumerate() {
        for pbv in &pb[av] {
            expected.push(pav * pbv);
        }
    }
    let got: Vec<f64> = dist.components().iter().map(|c| c.weight).collect();
    assert_eq!(got, expected);
}

#[test]
fn compiled_mixture_matches_ancestral_sampling() {
    let (layout, bn) = two_node_bn();
    let dist = bn.compile(&layout).unwrap();
    let mut rng = StdRng::seed_from_u64(2718);

    let n = 100_000;
    // Marginal P(b = 1) and P(c ≤ 1.0) by ancestral sampling.
    let mut b1 = 0usize;
    let mut c_le_1 = 0usize;
    for _ in 0..n {
        let x = bn.sample(&layout, &mut rng);
        if x[3] == 1.0 {
            b1 += 1;
        }
        if x[5] <= 1.0 {
            c_le_1 += 1;
        }
    }

    let support = dist.support_box(&layout);
    let all = support.intervals();
    let mut b1_box = support.clone();
    b1_box = b1_box.with_dim(2, 0.0, 0.0);
    b1_box = b1_box.with_dim(3, 1.0, 1.0);
    b1_box = b1_box.with_dim(4, 0.0, 0.0);
    let p_b1 = dist.box_probability(&layout, &b1_box);
    let c_box = support.with_dim(5, all[5].lo(), 1.0);
    let p_c = dist.box_probability(&layout, &c_box);

    for (exact, hits, what) in [(p_b1, b1, "P(b=1)"), (p_c, c_le_1, "P(c≤1)")] {
        let p_hat = hits as f64 / n as f64;
        let sigma = (p_hat * (1.0 - p_hat) / n as f64).sqrt().max(1e-4);
        assert!(
            (exact - p_hat).abs() <= 3.0 * sigma,
            "{what}: compiled {exact} vs sampled {p_hat}"
        );
    }
}
