//! The naive enumeration baseline.
//!
//! When every variable is discrete the joint support is a finite set of
//! points, so each term probability can be computed *exactly*: walk every
//! joint configuration, take its probability mass, run the network forward,
//! evaluate the satisfaction function, and sum the mass of the points where
//! it is nonnegative. A point is just the degenerate box `[x, x]`, so the
//! mass and the event semantics are the very same code paths the anytime
//! engine uses — there is no second interpretation to drift out of sync.
//!
//! This is the reference the branch-and-bound verifier is checked against
//! on discrete instances, and a practical tool in its own right when the
//! point count is small (default cap: 10⁷ points per term).

use anyhow::{bail, ensure, Context, Result};
use veriprob_core::{Hyperbox, Problem, VarKind, VerdictStatus};

/// Exact result for one term.
#[derive(Debug, Clone, Copy)]
pub struct TermEnumeration {
    /// Exact probability of `{f(x, N(x)) ≥ 0}`.
    pub probability: f64,
    /// Number of joint points walked.
    pub points: u64,
}

/// Exact verdict for the whole problem.
#[derive(Debug)]
pub struct ExactOutcome {
    pub terms: Vec<TermEnumeration>,
    /// The outer constraint's exact value; `None` when it is undefined
    /// (0/0) at the exact probabilities.
    pub g: Option<f64>,
    pub status: VerdictStatus,
    pub warnings: Vec<String>,
}

/// One admissible value of one variable, as the `(dimension, coordinate)`
/// assignments it pins.
type Choice = Vec<(usize, f64)>;

/// Every admissible value of each variable. Integers enumerate the lattice
/// inside their support; categoricals enumerate their one-hot vectors.
fn variable_choices(problem: &Problem, dist_name: &str) -> Result<Vec<Vec<Choice>>> {
    let layout = problem.layout();
    let support = problem.distribution(dist_name).support_box(layout);
    let mut choices = Vec::with_capacity(layout.variables().len());
    for var in layout.variables() {
        match &var.kind {
            VarKind::Continuous { .. } => bail!(
                "variable '{}' is continuous; enumeration needs an all-discrete layout",
                var.name
            ),
            VarKind::Integer { dim } => {
                let iv = support.interval(*dim);
                let lo = iv.lo().ceil() as i64;
                let hi = iv.hi().floor() as i64;
                ensure!(
                    lo <= hi,
                    "variable '{}' has an empty integer support",
                    var.name
                );
                choices.push((lo..=hi).map(|v| vec![(*dim, v as f64)]).collect());
            }
            VarKind::Categorical { dims } => {
                choices.push(
                    (0..dims.len())
                        .map(|c| {
                            dims.iter()
                                .enumerate()
                                .map(|(j, &d)| (d, if j == c { 1.0 } else { 0.0 }))
                                .collect()
                        })
                        .collect(),
                );
            }
        }
    }
    Ok(choices)
}

fn enumerate_term(problem: &Problem, index: usize, cap: u64) -> Result<TermEnumeration> {
    let term = &problem.terms()[index];
    let layout = problem.layout();
    let net = problem.network(&term.network);
    let dist = problem.distribution(&term.distribution);
    let choices = variable_choices(problem, &term.distribution)?;

    let total: u128 = choices.iter().map(|c| c.len() as u128).product();
    ensure!(
        total <= cap as u128,
        "instance has {total} joint points, above the cap of {cap}"
    );

    let mut idx = vec![0usize; choices.len()];
    let mut x = vec![0.0; layout.input_dim()];
    let mut probability = 0.0;
    let mut points = 0u64;
    'walk: loop {
        for (vi, &i) in idx.iter().enumerate() {
            for &(d, value) in &choices[vi][i] {
                x[d] = value;
            }
        }
        points += 1;
        let point = Hyperbox::of(x.clone(), x.clone());
        let mass = dist.box_probability(layout, &point);
        if mass > 0.0 {
            let y = net.forward(&x)?;
            let f = term
                .expr
                .eval_inner(&x, &y)
                .with_context(|| format!("evaluating f at {x:?}"))?;
            if f >= 0.0 {
                probability += mass;
            }
        }
        // Mixed-radix odometer, last variable fastest.
        let mut k = choices.len();
        while k > 0 {
            k -= 1;
            idx[k] += 1;
            if idx[k] < choices[k].len() {
                continue 'walk;
            }
            idx[k] = 0;
        }
        break;
    }
    Ok(TermEnumeration {
        // Adding tens of thousands of masses can overshoot 1 by rounding.
        probability: probability.min(1.0),
        points,
    })
}

/// Compute every term probability exactly and decide the outer constraint
/// by its sign: `g ≥ ε` is satisfied, `g < 0` is violated, and the gap
/// `0 ≤ g < ε` (possible only with a positive margin) stays unknown.
pub fn enumerate(problem: &Problem, cap: u64, epsilon: f64) -> Result<ExactOutcome> {
    let epsilon = epsilon.max(problem.epsilon());
    let mut terms = Vec::with_capacity(problem.terms().len());
    for index in 0..problem.terms().len() {
        let t = enumerate_term(problem, index, cap).with_context(|| format!("term {}", index + 1))?;
        terms.push(t);
    }
    let ps: Vec<f64> = terms.iter().map(|t| t.probability).collect();
    let mut warnings = Vec::new();
    let (g, status) = match problem.outer().eval_outer(&ps) {
        Ok(g) if g >= epsilon => (Some(g), VerdictStatus::Satisfied),
        Ok(g) if g < 0.0 => (Some(g), VerdictStatus::Violated),
        Ok(g) => {
            warnings.push(format!(
                "outer constraint is {g}, inside the margin gap [0, {epsilon})"
            ));
            (Some(g), VerdictStatus::Unknown)
        }
        Err(err) => {
            warnings.push(format!(
                "outer constraint is undefined at the exact probabilities: {err}"
            ));
            (None, VerdictStatus::Unknown)
        }
    };
    Ok(ExactOutcome {
        terms,
        g,
        status,
        warnings,
    })
}
