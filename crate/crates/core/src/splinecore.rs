//! B-spline basis functions and planar B-spline curves.
//!
//! Basis values follow the Cox–de Boor recursion:
//!
//! ```text
//! B_{i,0}(t) = 1  if t_i <= t < t_{i+1}, else 0
//! B_{i,k}(t) = (t - t_i) / (t_{i+k} - t_i) * B_{i,k-1}(t)
//!            + (t_{i+k+1} - t) / (t_{i+k+1} - t_{i+1}) * B_{i+1,k-1}(t)
//! ```
//!
//! Two conventions pin down the edge cases:
//!
//! * degree-0 spans are half-open, except the last non-empty span of the knot
//!   vector which is closed, so the basis sums to one at every knot including
//!   the right end of a clamped vector;
//! * a recursion term whose denominator is zero (repeated knots) contributes 0.
//!
//! [`basis`] is the literal recursion. [`basis_functions`] evaluates every
//! basis function of a degree at once with a bottom-up table and is what curve
//! evaluation uses.

use nalgebra::Point2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("knot vector must contain at least 2 values, got {0}")]
    TooFewKnots(usize),
    #[error("knot vector is not non-decreasing at index {index}: {prev} > {next}")]
    DecreasingKnots { index: usize, prev: f64, next: f64 },
    #[error("knot value at index {0} is not finite")]
    NonFiniteKnot(usize),
    #[error("basis index {index} with degree {degree} needs {needed} knots, have {len}")]
    IndexOutOfRange {
        index: usize,
        degree: usize,
        needed: usize,
        len: usize,
    },
    #[error("parameter {t} outside [{min}, {max}]")]
    ParameterOutOfRange { t: f64, min: f64, max: f64 },
    #[error("curve of degree {degree} needs at least {needed} control points, got {got}")]
    TooFewControlPoints {
        degree: usize,
        needed: usize,
        got: usize,
    },
    #[error("knot count {got} does not match control points + degree + 1 = {expected}")]
    KnotCountMismatch { expected: usize, got: usize },
    #[error("curve parameter domain [{min}, {max}] is empty")]
    EmptyDomain { min: f64, max: f64 },
    #[error("sample count must be at least 2, got {0}")]
    TooFewSamples(usize),
}

/// Non-decreasing sequence of parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    knots: Vec<f64>,
}

impl KnotVector {
    pub fn new(knots: Vec<f64>) -> Result<Self, SplineError> {
        if knots.len() < 2 {
            return Err(SplineError::TooFewKnots(knots.len()));
        }
        if let Some(i) = knots.iter().position(|k| !k.is_finite()) {
            return Err(SplineError::NonFiniteKnot(i));
        }
        for (i, w) in knots.windows(2).enumerate() {
            if w[0] > w[1] {
                return Err(SplineError::DecreasingKnots {
                    index: i,
                    prev: w[0],
                    next: w[1],
                });
            }
        }
        Ok(Self { knots })
    }

    /// `0, 1, 2, ..., len - 1`.
    pub fn uniform(len: usize) -> Result<Self, SplineError> {
        Self::new((0..len).map(|i| i as f64).collect())
    }

    /// Clamped (open) uniform knots on `[0, 1]` for `num_control` control
    /// points: `degree + 1` repeated zeros and ones with evenly spaced interior
    /// knots. The resulting curve interpolates its first and last control
    /// points.
    pub fn clamped_uniform(num_control: usize, degree: usize) -> Result<Self, SplineError> {
        if num_control < degree + 1 {
            return Err(SplineError::TooFewControlPoints {
                degree,
                needed: degree + 1,
                got: num_control,
            });
        }
        let interior = num_control - degree - 1;
        let mut knots = Vec::with_capacity(num_control + degree + 1);
        knots.extend(std::iter::repeat_n(0.0, degree + 1));
        for j in 1..=interior {
            knots.push(j as f64 / (interior + 1) as f64);
        }
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Self::new(knots)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.knots
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.knots[0]
    }

    pub fn last(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Index of the last span `[t_j, t_{j+1}]` with `t_j < t_{j+1}`, or `None`
    /// when every knot is equal.
    pub fn last_nonempty_span(&self) -> Option<usize> {
        (0..self.knots.len() - 1)
            .rev()
            .find(|&j| self.knots[j] < self.knots[j + 1])
    }

    fn check_parameter(&self, t: f64) -> Result<(), SplineError> {
        if !(t >= self.first() && t <= self.last()) {
            return Err(SplineError::ParameterOutOfRange {
                t,
                min: self.first(),
                max: self.last(),
            });
        }
        Ok(())
    }

    /// Degree-0 indicator with the half-open / closed-last-span convention.
    fn indicator(&self, i: usize, t: f64, last_span: Option<usize>) -> f64 {
        let (lo, hi) = (self.knots[i], self.knots[i + 1]);
        if (lo <= t && t < hi) || (Some(i) == last_span && t == hi) {
            1.0
        } else {
            0.0
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Value of the basis function `B_{i,k}` at `t`.
pub fn basis(i: usize, k: usize, t: f64, knots: &KnotVector) -> Result<f64, SplineError> {
    let needed = i + k + 2;
    if needed > knots.len() {
        return Err(SplineError::IndexOutOfRange {
            index: i,
            degree: k,
            needed,
            len: knots.len(),
        });
    }
    knots.check_parameter(t)?;
    Ok(basis_recursive(i, k, t, knots, knots.last_nonempty_span()))
}

fn basis_recursive(i: usize, k: usize, t: f64, knots: &KnotVector, last: Option<usize>) -> f64 {
    if k == 0 {
        return knots.indicator(i, t, last);
    }
    let u = knots.as_slice();
    let left = ratio(t - u[i], u[i + k] - u[i]) * basis_recursive(i, k - 1, t, knots, last);
    let right = ratio(u[i + k + 1] - t, u[i + k + 1] - u[i + 1])
        * basis_recursive(i + 1, k - 1, t, knots, last);
    left + right
}

/// All basis functions of degree `k` at `t`: element `i` is `B_{i,k}(t)` for
/// `i in 0..knots.len() - k - 1`.
pub fn basis_functions(k: usize, t: f64, knots: &KnotVector) -> Result<Vec<f64>, SplineError> {
    if k + 2 > knots.len() {
        return Err(SplineError::IndexOutOfRange {
            index: 0,
            degree: k,
            needed: k + 2,
            len: knots.len(),
        });
    }
    knots.check_parameter(t)?;
    let u = knots.as_slice();
    let last = knots.last_nonempty_span();
    let mut row: Vec<f64> = (0..u.len() - 1).map(|i| knots.indicator(i, t, last)).collect();
    for d in 1..=k {
        let count = u.len() - d - 1;
        for i in 0..count {
            let left = ratio(t - u[i], u[i + d] - u[i]) * row[i];
            let right = ratio(u[i + d + 1] - t, u[i + d + 1] - u[i + 1]) * row[i + 1];
            row[i] = left + right;
        }
        row.truncate(count);
    }
    Ok(row)
}

/// Planar B-spline curve.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineCurve2D {
    control_points: Vec<Point2<f64>>,
    degree: usize,
    knots: KnotVector,
}

impl BSplineCurve2D {
    pub fn new(
        control_points: Vec<Point2<f64>>,
        degree: usize,
        knots: KnotVector,
    ) -> Result<Self, SplineError> {
        let n = control_points.len();
        if n < degree + 1 {
            return Err(SplineError::TooFewControlPoints {
                degree,
                needed: degree + 1,
                got: n,
            });
        }
        if knots.len() != n + degree + 1 {
            return Err(SplineError::KnotCountMismatch {
                expected: n + degree + 1,
                got: knots.len(),
            });
        }
        let u = knots.as_slice();
        if !(u[degree] < u[n]) {
            return Err(SplineError::EmptyDomain {
                min: u[degree],
                max: u[n],
            });
        }
        Ok(Self {
            control_points,
            degree,
            knots,
        })
    }

    /// Curve with clamped uniform knots, interpolating the end control points.
    pub fn clamped(control_points: Vec<Point2<f64>>, degree: usize) -> Result<Self, SplineError> {
        let knots = KnotVector::clamped_uniform(control_points.len(), degree)?;
        Self::new(control_points, degree, knots)
    }

    pub fn control_points(&self) -> &[Point2<f64>] {
        &self.control_points
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    /// Valid parameter range `[t_degree, t_n]`.
    pub fn domain(&self) -> (f64, f64) {
        let u = self.knots.as_slice();
        (u[self.degree], u[self.control_points.len()])
    }

    pub fn eval(&self, t: f64) -> Result<Point2<f64>, SplineError> {
        let (lo, hi) = self.domain();
        if !(t >= lo && t <= hi) {
            return Err(SplineError::ParameterOutOfRange { t, min: lo, max: hi });
        }
        let weights = basis_functions(self.degree, t, &self.knots)?;
        let (mut x, mut y) = (0.0, 0.0);
        for (p, w) in self.control_points.iter().zip(&weights) {
            x += w * p.x;
            y += w * p.y;
        }
        Ok(Point2::new(x, y))
    }

    /// `m` points at evenly spaced parameters over the domain, endpoints
    /// included.
    pub fn sample(&self, m: usize) -> Result<Vec<Point2<f64>>, SplineError> {
        if m < 2 {
            return Err(SplineError::TooFewSamples(m));
        }
        let (lo, hi) = self.domain();
        (0..m)
            .map(|j| {
                let t = if j == m - 1 {
                    hi
                } else {
                    lo + (hi - lo) * (j as f64 / (m - 1) as f64)
                };
                self.eval(t)
            })
            .collect()
    }
}

/// Free-function form of [`BSplineCurve2D::eval`].
pub fn eval_curve(curve: &BSplineCurve2D, t: f64) -> Result<Point2<f64>, SplineError> {
    curve.eval(t)
}

/// Free-function form of [`BSplineCurve2D::sample`].
pub fn sample_curve(curve: &BSplineCurve2D, m: usize) -> Result<Vec<Point2<f64>>, SplineError> {
    curve.sample(m)
}
