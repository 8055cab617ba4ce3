//! Exact evaluation of Pucci extremal operators and frame-diagonal Bellman
//! families on symmetric 1x1 and 2x2 matrices.
//!
//! The extremal operators over the ellipticity class `[lambda, lambda_max]`
//! have the closed forms
//!
//! ```text
//! M+(X) = lambda_max * sum(e > 0) + lambda * sum(e <= 0)
//! M-(X) = lambda   * sum(e > 0) + lambda_max * sum(e <= 0)
//! ```
//!
//! over the eigenvalues `e` of `X`. They are linked by `M+(X) = -M-(-X)`,
//! which is the compatibility relation the two-membranes system relies on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ellipticity constants `0 < lambda < lambda_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PucciParams {
    pub lambda: f64,
    pub lambda_max: f64,
}

impl PucciParams {
    /// Strict inequality is required; equality would collapse both extremal
    /// operators to a multiple of the trace.
    pub fn new(lambda: f64, lambda_max: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda_max.is_finite()) || lambda <= 0.0 {
            return Err(Error::Config(format!(
                "ellipticity constants must be finite and positive, got ({lambda}, {lambda_max})"
            )));
        }
        if lambda >= lambda_max {
            return Err(Error::Config(format!(
                "ellipticity constants must satisfy lambda < lambda_max, got ({lambda}, {lambda_max})"
            )));
        }
        Ok(Self { lambda, lambda_max })
    }

    /// Escape hatch that skips the strictness check. Only meant for
    /// degenerate-operator diagnostics and tests.
    pub fn new_unchecked(lambda: f64, lambda_max: f64) -> Self {
        Self { lambda, lambda_max }
    }
}

/// Symmetric matrix of dimension 1 or 2. Only `a` is meaningful in 1D;
/// in 2D the entries are `[[a, b], [b, d]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    a: f64,
    b: f64,
    d: f64,
}

impl SymMatrix {
    pub fn sym1(a: f64) -> Self {
        Self { dim: 1, a, b: 0.0, d: 0.0 }
    }

    pub fn sym2(a: f64, b: f64, d: f64) -> Self {
        Self { dim: 2, a, b, d }
    }

    /// Diagonal matrix; `entries` must have length 1 or 2.
    pub fn diag(entries: &[f64]) -> Result<Self> {
        match entries {
            [a] => Ok(Self::sym1(*a)),
            [a, d] => Ok(Self::sym2(*a, 0.0, *d)),
            _ => Err(Error::UnsupportedDimension(entries.len())),
        }
    }

    pub fn zero(dim: usize) -> Result<Self> {
        match dim {
            1 => Ok(Self::sym1(0.0)),
            2 => Ok(Self::sym2(0.0, 0.0, 0.0)),
            _ => Err(Error::UnsupportedDimension(dim)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry accessors; `b` and `d` are zero in 1D.
    pub fn entries(&self) -> (f64, f64, f64) {
        (self.a, self.b, self.d)
    }

    pub fn trace(&self) -> f64 {
        if self.dim == 1 {
            self.a
        } else {
            self.a + self.d
        }
    }

    pub fn det(&self) -> f64 {
        if self.dim == 1 {
            self.a
        } else {
            self.a * self.d - self.b * self.b
        }
    }

    pub fn is_diagonal(&self) -> bool {
        self.b == 0.0
    }

    pub fn neg(&self) -> Self {
        Self { dim: self.dim, a: -self.a, b: -self.b, d: -self.d }
    }

    pub fn scale(&self, t: f64) -> Self {
        Self { dim: self.dim, a: t * self.a, b: t * self.b, d: t * self.d }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            a: self.a - other.a,
            b: self.b - other.b,
            d: self.d - other.d,
        }
    }
}

/// Sorted eigenvalues of a `SymMatrix`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenData {
    dim: usize,
    evals: [f64; 2],
}

impl EigenData {
    pub fn values(&self) -> &[f64] {
        &self.evals[..self.dim]
    }
}

/// Closed-form symmetric eigensolve, ascending order. The 2x2 discriminant
/// uses `hypot` so that nearly-equal eigenvalues do not cancel.
pub fn eigen_sym(x: &SymMatrix) -> EigenData {
    match x.dim {
        1 => EigenData { dim: 1, evals: [x.a, 0.0] },
        2 => {
            let mean = 0.5 * (x.a + x.d);
            let half_gap = 0.5 * (x.a - x.d);
            let radius = f64::hypot(half_gap, x.b);
            EigenData { dim: 2, evals: [mean - radius, mean + radius] }
        }
        d => unreachable!("SymMatrix constructors only allow dim 1 or 2, got {d}"),
    }
}

/// `M+(X)`: largest coefficient on positive curvature, smallest on the rest.
pub fn pucci_plus(p: &PucciParams, x: &SymMatrix) -> f64 {
    eigen_sym(x)
        .values()
        .iter()
        .map(|&e| if e > 0.0 { p.lambda_max * e } else { p.lambda * e })
        .sum()
}

/// `M-(X) = -M+(-X)`.
pub fn pucci_minus(p: &PucciParams, x: &SymMatrix) -> f64 {
    eigen_sym(x)
        .values()
        .iter()
        .map(|&e| if e > 0.0 { p.lambda * e } else { p.lambda_max * e })
        .sum()
}

/// Operator selector: an extremal operator, or a max/min over an explicit
/// finite family of frame-diagonal coefficient assignments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    PucciMax,
    PucciMin,
    BellmanMax,
    BellmanMin,
}

impl OperatorKind {
    /// The convex members sit on the upper membrane, the concave ones below.
    pub fn is_convex(&self) -> bool {
        matches!(self, OperatorKind::PucciMax | OperatorKind::BellmanMax)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    pub params: PucciParams,
    /// Per-direction diagonal coefficients, one row per family member.
    /// Empty for the Pucci kinds.
    pub family: Vec<Vec<f64>>,
}

impl OperatorSpec {
    pub fn pucci_max(params: PucciParams) -> Self {
        Self { kind: OperatorKind::PucciMax, params, family: Vec::new() }
    }

    pub fn pucci_min(params: PucciParams) -> Self {
        Self { kind: OperatorKind::PucciMin, params, family: Vec::new() }
    }

    pub fn bellman(kind: OperatorKind, params: PucciParams, family: Vec<Vec<f64>>) -> Result<Self> {
        let spec = Self { kind, params, family };
        spec.validate(None)?;
        Ok(spec)
    }

    /// Checks the family against the ellipticity box. `dim`, when known,
    /// pins the expected row length.
    pub fn validate(&self, dim: Option<usize>) -> Result<()> {
        match self.kind {
            OperatorKind::PucciMax | OperatorKind::PucciMin => Ok(()),
            OperatorKind::BellmanMax | OperatorKind::BellmanMin => {
                if self.family.is_empty() {
                    return Err(Error::Config(
                        "Bellman operator requires a nonempty coefficient family".into(),
                    ));
                }
                for row in &self.family {
                    if let Some(d) = dim {
                        if row.len() != d {
                            return Err(Error::Config(format!(
                                "Bellman family row has {} coefficients, expected {}",
                                row.len(),
                                d
                            )));
                        }
                    }
                    if row.is_empty() || row.len() > 2 {
                        return Err(Error::Config(
                            "Bellman family rows must have 1 or 2 coefficients".into(),
                        ));
                    }
                    for &c in row {
                        if !(c >= self.params.lambda && c <= self.params.lambda_max) {
                            return Err(Error::Config(format!(
                                "Bellman coefficient {c} outside [{}, {}]",
                                self.params.lambda, self.params.lambda_max
                            )));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// The compatible partner `G(X) = -F(-X)`: swaps max and min, keeps the
    /// family.
    pub fn compatible_partner(&self) -> Self {
        let kind = match self.kind {
            OperatorKind::PucciMax => OperatorKind::PucciMin,
            OperatorKind::PucciMin => OperatorKind::PucciMax,
            OperatorKind::BellmanMax => OperatorKind::BellmanMin,
            OperatorKind::BellmanMin => OperatorKind::BellmanMax,
        };
        Self { kind, params: self.params, family: self.family.clone() }
    }
}

/// Evaluates the operator on a symmetric matrix. Bellman kinds apply their
/// coefficients positionally to the diagonal, so `x` must already be
/// diagonal in the frame the family refers to.
pub fn operator_eval(spec: &OperatorSpec, x: &SymMatrix) -> Result<f64> {
    match spec.kind {
        OperatorKind::PucciMax => Ok(pucci_plus(&spec.params, x)),
        OperatorKind::PucciMin => Ok(pucci_minus(&spec.params, x)),
        OperatorKind::BellmanMax | OperatorKind::BellmanMin => {
            spec.validate(Some(x.dim()))?;
            if !x.is_diagonal() {
                return Err(Error::Config(
                    "Bellman evaluation requires a matrix diagonal in the family frame".into(),
                ));
            }
            let diag = [x.a, x.d];
            let diag = &diag[..x.dim()];
            let mut best = f64::NAN;
            for row in &spec.family {
                let v: f64 = row.iter().zip(diag).map(|(c, e)| c * e).sum();
                best = if best.is_nan() {
                    v
                } else if spec.kind == OperatorKind::BellmanMax {
                    best.max(v)
                } else {
                    best.min(v)
                };
            }
            Ok(best)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p12() -> PucciParams {
        PucciParams::new(1.0, 2.0).unwrap()
    }

    /// Independent oracle: eigenvalues straight from the quadratic formula
    /// on the characteristic polynomial, no shared code with `eigen_sym`.
    fn eigen_oracle_2x2(a: f64, b: f64, d: f64) -> (f64, f64) {
        let tr = a + d;
        let det = a * d - b * b;
        let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
        ((tr - disc) / 2.0, (tr + disc) / 2.0)
    }

    #[test]
    fn eigen_diagonal() {
        let e = eigen_sym(&SymMatrix::diag(&[2.0, -2.0]).unwrap());
        assert_eq!(e.values(), &[-2.0, 2.0]);
    }

    #[test]
    fn eigen_offdiagonal() {
        let e = eigen_sym(&SymMatrix::sym2(0.0, 1.0, 0.0));
        assert_eq!(e.values(), &[-1.0, 1.0]);
    }

    #[test]
    fn eigen_hand_case() {
        // char. polynomial of [[3,1],[1,3]]: t^2 - 6t + 8 -> roots {2, 4}
        let (lo, hi) = eigen_oracle_2x2(3.0, 1.0, 3.0);
        assert_eq!((lo, hi), (2.0, 4.0));
        let e = eigen_sym(&SymMatrix::sym2(3.0, 1.0, 3.0));
        assert_relative_eq!(e.values()[0], lo, max_relative = 1e-14);
        assert_relative_eq!(e.values()[1], hi, max_relative = 1e-14);
    }

    #[test]
    fn eigen_dim_guard() {
        assert!(matches!(
            SymMatrix::diag(&[1.0, 2.0, 3.0]),
            Err(Error::UnsupportedDimension(3))
        ));
    }

    #[test]
    fn pucci_plus_examples() {
        let p = p12();
        let x = SymMatrix::diag(&[2.0, -2.0]).unwrap();
        assert_relative_eq!(pucci_plus(&p, &x), 2.0, max_relative = 1e-14);
        assert_eq!(pucci_plus(&p, &SymMatrix::zero(2).unwrap()), 0.0);
        assert_eq!(pucci_plus(&p, &SymMatrix::sym1(1.0)), 2.0);
    }

    #[test]
    fn pucci_minus_examples() {
        let p = p12();
        let x = SymMatrix::diag(&[2.0, -2.0]).unwrap();
        assert_relative_eq!(pucci_minus(&p, &x), -2.0, max_relative = 1e-14);
        assert_eq!(pucci_minus(&p, &SymMatrix::zero(2).unwrap()), 0.0);
    }

    #[test]
    fn degenerate_params_reduce_to_trace() {
        let p = PucciParams::new_unchecked(1.5, 1.5);
        let x = SymMatrix::sym2(0.7, -0.3, -2.1);
        assert_relative_eq!(pucci_plus(&p, &x), 1.5 * x.trace(), max_relative = 1e-12);
        assert_relative_eq!(pucci_minus(&p, &x), 1.5 * x.trace(), max_relative = 1e-12);
    }

    #[test]
    fn params_validation() {
        assert!(PucciParams::new(1.0, 1.0).is_err());
        assert!(PucciParams::new(2.0, 1.0).is_err());
        assert!(PucciParams::new(0.0, 1.0).is_err());
        assert!(PucciParams::new(0.5, 1.0).is_ok());
    }

    #[test]
    fn bellman_examples() {
        let p = p12();
        let f = OperatorSpec::bellman(
            OperatorKind::BellmanMax,
            p,
            vec![vec![1.0, 1.0], vec![2.0, 2.0]],
        )
        .unwrap();
        let x = SymMatrix::diag(&[1.0, 1.0]).unwrap();
        assert_eq!(operator_eval(&f, &x).unwrap(), 4.0);

        // family {(lambda, lambda_max), (lambda_max, lambda)} on diag(1,-1):
        // candidates {lambda - lambda_max, lambda_max - lambda}, max is the latter
        let f2 = OperatorSpec::bellman(
            OperatorKind::BellmanMax,
            p,
            vec![vec![1.0, 2.0], vec![2.0, 1.0]],
        )
        .unwrap();
        let y = SymMatrix::diag(&[1.0, -1.0]).unwrap();
        assert_eq!(operator_eval(&f2, &y).unwrap(), 1.0);
    }

    #[test]
    fn bellman_guards() {
        let p = p12();
        assert!(OperatorSpec::bellman(OperatorKind::BellmanMax, p, vec![]).is_err());
        assert!(OperatorSpec::bellman(OperatorKind::BellmanMax, p, vec![vec![0.5, 1.0]]).is_err());
        let f = OperatorSpec::bellman(OperatorKind::BellmanMax, p, vec![vec![1.0, 2.0]]).unwrap();
        let off_diag = SymMatrix::sym2(1.0, 0.5, 1.0);
        assert!(operator_eval(&f, &off_diag).is_err());
    }

    #[test]
    fn pucci_1d_sign_rule() {
        let p = p12();
        for a in [-3.0, -0.1, 0.0, 0.1, 3.0] {
            let x = SymMatrix::sym1(a);
            let expect = if a > 0.0 { 2.0 * a } else { 1.0 * a };
            assert_eq!(operator_eval(&OperatorSpec::pucci_max(p), &x).unwrap(), expect);
        }
    }

    proptest! {
        #[test]
        fn ordering_and_compatibility(
            a in -10.0f64..10.0, b in -10.0f64..10.0, d in -10.0f64..10.0,
            lam in 0.1f64..5.0, gap in 0.1f64..5.0,
        ) {
            let p = PucciParams::new(lam, lam + gap).unwrap();
            let x = SymMatrix::sym2(a, b, d);
            let plus = pucci_plus(&p, &x);
            let minus = pucci_minus(&p, &x);
            let scale = 1.0 + plus.abs().max(minus.abs());
            prop_assert!(minus <= plus + 1e-12 * scale);
            prop_assert!((plus + pucci_minus(&p, &x.neg())).abs() <= 1e-12 * scale);
        }

        #[test]
        fn positive_homogeneity(
            a in -10.0f64..10.0, b in -10.0f64..10.0, d in -10.0f64..10.0,
            t in 0.0f64..10.0,
        ) {
            let p = p12();
            let x = SymMatrix::sym2(a, b, d);
            let lhs = pucci_plus(&p, &x.scale(t));
            let rhs = t * pucci_plus(&p, &x);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn ellipticity_sandwich(
            xa in -10.0f64..10.0, xb in -10.0f64..10.0, xd in -10.0f64..10.0,
            ya in -10.0f64..10.0, yb in -10.0f64..10.0, yd in -10.0f64..10.0,
        ) {
            let p = p12();
            let x = SymMatrix::sym2(xa, xb, xd);
            let y = SymMatrix::sym2(ya, yb, yd);
            let diff = pucci_plus(&p, &x) - pucci_plus(&p, &y);
            let lo = pucci_minus(&p, &x.sub(&y));
            let hi = pucci_plus(&p, &x.sub(&y));
            let scale = 1.0 + lo.abs().max(hi.abs()).max(diff.abs());
            prop_assert!(lo <= diff + 1e-12 * scale);
            prop_assert!(diff <= hi + 1e-12 * scale);
        }

        #[test]
        fn eigen_trace_det(
            a in -10.0f64..10.0, b in -10.0f64..10.0, d in -10.0f64..10.0,
        ) {
            let x = SymMatrix::sym2(a, b, d);
            let e = eigen_sym(&x);
            let sum = e.values()[0] + e.values()[1];
            let prod = e.values()[0] * e.values()[1];
            prop_assert!((sum - x.trace()).abs() <= 1e-12 * (1.0 + x.trace().abs()));
            // determinant is where cancellation lives; scale by the entry sizes
            let scale = 1.0 + a.abs().max(b.abs()).max(d.abs()).powi(2);
            prop_assert!((prod - x.det()).abs() <= 1e-12 * scale);
        }
    }
}
