//! Extended-real intervals, hyperrectangles, and the scalar bounding rules.
//!
//! Intervals carry `±∞` endpoints (reciprocals across zero produce them) but
//! never NaN. All rules here compute image-enclosing intervals by endpoint
//! evaluation; no outward rounding is performed, so enclosures are sound up
//! to ordinary floating-point error.

use thiserror::Error;

/// Errors from interval-level operations.
#[derive(Debug, Error, PartialEq)]
pub enum IntervalError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid interval endpoints: lo={lo}, hi={hi}")]
    InvalidEndpoints { lo: f64, hi: f64 },
}

/// Normalizes `-0.0` to `+0.0` so that `1/lo`-style case rules never see a
/// signed zero (IEEE `1/-0.0 = -inf` would flip an endpoint).
#[inline]
fn clean_zero(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v
    }
}

/// Extended product with the measure-style convention `±∞ · 0 = 0`.
///
/// Keeps degenerate-at-zero factors from poisoning enclosures with NaN.
#[inline]
pub fn mul_ext(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

/// Extended quotient matching [`mul_ext`]'s convention: `±∞ / ±∞ = 0`,
/// the value `a · (1/c)` takes there. Only called with `c ≠ 0`.
#[inline]
fn div_ext(a: f64, c: f64) -> f64 {
    if a.is_infinite() && c.is_infinite() {
        0.0
    } else {
        a / c
    }
}

/// Addition steered toward a lower bound: an indeterminate `∞ − ∞` widens to `−∞`.
#[inline]
fn add_lo(a: f64, b: f64) -> f64 {
    let s = a + b;
    if s.is_nan() {
        f64::NEG_INFINITY
    } else {
        s
    }
}

/// Addition steered toward an upper bound: an indeterminate `∞ − ∞` widens to `+∞`.
#[inline]
fn add_hi(a: f64, b: f64) -> f64 {
    let s = a + b;
    if s.is_nan() {
        f64::INFINITY
    } else {
        s
    }
}

/// Numerically stable logistic function; exact at `±∞` (0 and 1).
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `max(0, x)`; total on extended reals.
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// A closed extended-real interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    /// The trivial enclosure `[-∞, +∞]`.
    pub const EVERYTHING: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    /// Builds `[lo, hi]`, rejecting NaN and inverted endpoints.
    pub fn new(lo: f64, hi: f64) -> Result<Interval, IntervalError> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(IntervalError::InvalidEndpoints { lo, hi });
        }
        Ok(Interval {
            lo: clean_zero(lo),
            hi: clean_zero(hi),
        })
    }

    /// Like [`Interval::new`] but panics on invalid endpoints; for literals.
    pub fn of(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).expect("invalid interval literal")
    }

    /// The degenerate interval `[x, x]`.
    pub fn point(x: f64) -> Interval {
        debug_assert!(!x.is_nan());
        let x = clean_zero(x);
        Interval { lo: x, hi: x }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// `hi - lo`; a point interval (even at `±∞`) has width 0.
    pub fn width(&self) -> f64 {
        if self.lo == self.hi {
            0.0
        } else {
            self.hi - self.lo
        }
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// `self ⊆ other`.
    pub fn subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    /// `[a,b] + [c,d] = [a+c, b+d]`.
    pub fn add(&self, rhs: &Interval) -> Interval {
        Interval {
            lo: add_lo(self.lo, rhs.lo),
            hi: add_hi(self.hi, rhs.hi),
        }
    }

    /// `-[a,b] = [-b, -a]`.
    pub fn neg(&self) -> Interval {
        Interval {
            lo: clean_zero(-self.hi),
            hi: clean_zero(-self.lo),
        }
    }

    /// `[a,b] - [c,d] = [a,b] + (-[c,d])`.
    pub fn sub(&self, rhs: &Interval) -> Interval {
        self.add(&rhs.neg())
    }

    /// Min/max over the four endpoint products, with `±∞ · 0 = 0`.
    pub fn mul(&self, rhs: &Interval) -> Interval {
        let p1 = mul_ext(self.lo, rhs.lo);
        let p2 = mul_ext(self.lo, rhs.hi);
        let p3 = mul_ext(self.hi, rhs.lo);
        let p4 = mul_ext(self.hi, rhs.hi);
        Interval {
            lo: clean_zero(p1.min(p2).min(p3).min(p4)),
            hi: clean_zero(p1.max(p2).max(p3).max(p4)),
        }
    }

    /// Four-case reciprocal:
    /// lower bound is `1/hi` when `0 ∉ (lo, hi]`, else `−∞`;
    /// upper bound is `1/lo` when `0 ∉ [lo, hi)`, else `+∞`.
    pub fn recip(&self) -> Interval {
        let lo = if self.lo < 0.0 && 0.0 <= self.hi {
            f64::NEG_INFINITY
        } else {
            1.0 / self.hi
        };
        let hi = if self.lo <= 0.0 && 0.0 < self.hi {
            f64::INFINITY
        } else {
            1.0 / self.lo
        };
        Interval {
            lo: clean_zero(lo),
            hi: clean_zero(hi),
        }
    }

    /// Quotient hull. A divisor touching zero is routed through
    /// [`Interval::recip`], which owns the unbounded-side bookkeeping; a
    /// sign-definite divisor divides endpoints directly, so each bound is
    /// rounded once and point inputs reproduce the scalar quotient exactly.
    pub fn div(&self, rhs: &Interval) -> Interval {
        if rhs.lo <= 0.0 && rhs.hi >= 0.0 {
            return self.mul(&rhs.recip());
        }
        let q1 = div_ext(self.lo, rhs.lo);
        let q2 = div_ext(self.lo, rhs.hi);
        let q3 = div_ext(self.hi, rhs.lo);
        let q4 = div_ext(self.hi, rhs.hi);
        Interval {
            lo: clean_zero(q1.min(q2).min(q3).min(q4)),
            hi: clean_zero(q1.max(q2).max(q3).max(q4)),
        }
    }

    /// Image under a monotone nondecreasing function: `[f(lo), f(hi)]`.
    pub fn monotone(&self, f: impl Fn(f64) -> f64) -> Interval {
        Interval {
            lo: clean_zero(f(self.lo)),
            hi: clean_zero(f(self.hi)),
        }
    }

    pub fn relu(&self) -> Interval {
        self.monotone(relu)
    }

    pub fn sigmoid(&self) -> Interval {
        self.monotone(sigmoid)
    }

    pub fn tanh(&self) -> Interval {
        self.monotone(f64::tanh)
    }

    /// Componentwise endpoint min: `[min(a,c), min(b,d)]`.
    pub fn min2(&self, rhs: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(rhs.lo),
            hi: self.hi.min(rhs.hi),
        }
    }

    /// Componentwise endpoint max: `[max(a,c), max(b,d)]`.
    pub fn max2(&self, rhs: &Interval) -> Interval {
        Interval {
            lo: self.lo.max(rhs.lo),
            hi: self.hi.max(rhs.hi),
        }
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Interval-arithmetic image of the affine map `A·x + b` over a box of
/// intervals: `[A⁺x̲ + A⁻x̄ + b, A⁺x̄ + A⁻x̲ + b]` with `A⁺ = max(0, A)`,
/// `A⁻ = min(0, A)` taken entrywise.
pub fn ia_affine(
    weights: &ndarray::Array2<f64>,
    bias: &ndarray::Array1<f64>,
    input: &[Interval],
) -> Result<Vec<Interval>, IntervalError> {
    if weights.ncols() != input.len() {
        return Err(IntervalError::DimensionMismatch {
            expected: weights.ncols(),
            actual: input.len(),
        });
    }
    if weights.nrows() != bias.len() {
        return Err(IntervalError::DimensionMismatch {
            expected: weights.nrows(),
            actual: bias.len(),
        });
    }
    let mut out = Vec::with_capacity(weights.nrows());
    for (row, b) in weights.rows().into_iter().zip(bias.iter()) {
        let mut lo = *b;
        let mut hi = *b;
        for (&a, iv) in row.iter().zip(input.iter()) {
            if a > 0.0 {
                lo = add_lo(lo, mul_ext(a, iv.lo));
                hi = add_hi(hi, mul_ext(a, iv.hi));
            } else if a < 0.0 {
                lo = add_lo(lo, mul_ext(a, iv.hi));
                hi = add_hi(hi, mul_ext(a, iv.lo));
            }
        }
        out.push(Interval {
            lo: clean_zero(lo),
            hi: clean_zero(hi),
        });
    }
    Ok(out)
}

/// An axis-aligned hyperrectangle with finite corners.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperbox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Hyperbox {
    /// Builds `[lo, hi]`, rejecting non-finite corners and `lo > hi`.
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Hyperbox, IntervalError> {
        if lo.len() != hi.len() {
            return Err(IntervalError::DimensionMismatch {
                expected: lo.len(),
                actual: hi.len(),
            });
        }
        for (&a, &b) in lo.iter().zip(hi.iter()) {
            if !a.is_finite() || !b.is_finite() || a > b {
                return Err(IntervalError::InvalidEndpoints { lo: a, hi: b });
            }
        }
        Ok(Hyperbox {
            lo: lo.into_iter().map(clean_zero).collect(),
            hi: hi.into_iter().map(clean_zero).collect(),
        })
    }

    /// Panicking constructor for literals in tests and fixtures.
    pub fn of(lo: Vec<f64>, hi: Vec<f64>) -> Hyperbox {
        Hyperbox::new(lo, hi).expect("invalid hyperbox literal")
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    /// The interval spanned along dimension `d`.
    pub fn interval(&self, d: usize) -> Interval {
        Interval {
            lo: self.lo[d],
            hi: self.hi[d],
        }
    }

    /// The box as a vector of per-dimension intervals.
    pub fn intervals(&self) -> Vec<Interval> {
        (0..self.dim()).map(|d| self.interval(d)).collect()
    }

    /// A copy with dimension `d` replaced by `[lo, hi]`.
    pub fn with_dim(&self, d: usize, lo: f64, hi: f64) -> Hyperbox {
        debug_assert!(lo <= hi && lo.is_finite() && hi.is_finite());
        let mut out = self.clone();
        out.lo[d] = clean_zero(lo);
        out.hi[d] = clean_zero(hi);
        out
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(self.hi.iter()))
                .all(|(&v, (&a, &b))| a <= v && v <= b)
    }

    /// `self ⊆ other` componentwise.
    pub fn subset_of(&self, other: &Hyperbox) -> bool {
        self.dim() == other.dim()
            && (0..self.dim()).all(|d| other.lo[d] <= self.lo[d] && self.hi[d] <= other.hi[d])
    }

    /// The midpoint, a valid member point.
    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(self.hi.iter())
            .map(|(&a, &b)| 0.5 * (a + b))
            .collect()
    }
}

impl std::fmt::Display for Hyperbox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[")?;
        for d in 0..self.dim() {
            if d > 0 {
                write!(f, " × ")?;
            }
            write!(f, "[{}, {}]", self.lo[d], self.hi[d])?;
        }
        write!(f, "]")
    }
}
