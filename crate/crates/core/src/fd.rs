//! Central finite differences used to cross-check analytic derivatives.

use nalgebra::{DMatrix, DVector};

use crate::bilinear::Bilinear;
use crate::fields::{TestFunction, VectorField};

/// Central-difference Jacobian of `f` at `x`.
pub fn central_jacobian<F>(f: F, x: &DVector<f64>, step: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[j] += step;
        minus[j] -= step;
        cols.push((f(&plus) - f(&minus)) / (2.0 * step));
    }
    DMatrix::from_columns(&cols)
}

/// Central differences of a matrix-valued derivative, as a bilinear map:
/// entry `(c, i, j)` approximates `d/dx_j D(x)[c, i]`.
pub fn central_second<F>(jac: F, x: &DVector<f64>, step: f64) -> Bilinear
where
    F: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let n = x.len();
    let probe = jac(x);
    let mut out = Bilinear::zeros(probe.nrows(), n);
    for j in 0..n {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[j] += step;
        minus[j] -= step;
        let diff = (jac(&plus) - jac(&minus)) / (2.0 * step);
        for c in 0..probe.nrows() {
            for i in 0..n {
                out.set(c, i, j, diff[(c, i)]);
            }
        }
    }
    out
}

/// `|a - b| / max(|b|, 1)` in the Frobenius norm.
pub fn relative_error(approx: &DMatrix<f64>, exact: &DMatrix<f64>) -> f64 {
    (approx - exact).norm() / exact.norm().max(1.0)
}

fn relative_error_bilinear(approx: &Bilinear, exact: &Bilinear) -> f64 {
    let diff: f64 = approx
        .as_slice()
        .iter()
        .zip(exact.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    diff / exact.norm().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeCheck {
    pub first: f64,
    pub second: f64,
}

impl DerivativeCheck {
    /// Default acceptance: `1e-5` for first and `1e-4` for second derivatives.
    pub fn passes(&self) -> bool {
        self.first <= 1e-5 && self.second <= 1e-4
    }
}

pub fn check_vector_field(field: &dyn VectorField, t: f64, x: &DVector<f64>, step: f64) -> DerivativeCheck {
    let fd_jac = central_jacobian(|y| field.eval(t, y), x, step);
    let fd_hess = central_second(|y| field.jacobian(t, y), x, step);
    DerivativeCheck {
        first: relative_error(&fd_jac, &field.jacobian(t, x)),
        second: relative_error_bilinear(&fd_hess, &field.hessian(t, x)),
    }
}

pub fn check_test_function(f: &dyn TestFunction, x: &DVector<f64>, step: f64) -> DerivativeCheck {
    let fd_jac = central_jacobian(|y| f.eval(y), x, step);
    let fd_hess = central_second(|y| f.derivative(y), x, step);
    DerivativeCheck {
        first: relative_error(&fd_jac, &f.derivative(x)),
        second: relative_error_bilinear(&fd_hess, &f.second_derivative(x)),
    }
}

/// Polynomial growth bound of `f` at `x` with the function's own `(c, q)`.
/// Norms of derivatives are Frobenius norms, which dominate operator norms.
pub fn growth_holds(f: &dyn TestFunction, x: &DVector<f64>) -> bool {
    let (c, q) = f.growth();
    let nx = x.norm();
    let bound = c * (1.0 + nx.powf(q));
    f.eval(x).norm() / (1.0 + nx) <= bound && f.derivative(x).norm() <= bound && f.second_derivative(x).norm() <= bound
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{AffineDrift, CubicDrift, Identity, SquareAndSine, SquaredNorm};

    fn probes(dim: usize) -> Vec<DVector<f64>> {
        let vals = [-1.7, -0.3, 0.0, 0.45, 1.2, 2.5];
        (0..vals.len())
            .map(|s| DVector::from_fn(dim, |i, _| vals[(s + 2 * i) % vals.len()]))
            .collect()
    }

    #[test]
    fn analytic_fields_match_differences() {
        let affine = AffineDrift::new(
            DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 2.0, 0.25]),
            DVector::from_vec(vec![0.1, -0.2]),
        );
        for x in probes(2) {
            assert!(check_vector_field(&affine, 0.0, &x, 1e-5).passes());
        }
        for x in probes(1) {
            let c = check_vector_field(&CubicDrift { offset: 0.1 }, 0.0, &x, 1e-5);
            assert!(c.passes(), "{c:?} at {x}");
        }
    }

    #[test]
    fn test_functions_match_differences_and_growth() {
        let fs: Vec<(Box<dyn TestFunction>, usize)> = vec![
            (Box::new(Identity { dim: 2 }), 2),
            (Box::new(SquaredNorm { dim: 1 }), 1),
            (Box::new(SquaredNorm { dim: 2 }), 2),
            (Box::new(SquareAndSine), 1),
        ];
        for (f, d) in &fs {
            for x in probes(*d) {
                let c = check_test_function(f.as_ref(), &x, 1e-5);
                assert!(c.passes(), "{c:?} at {x}");
                assert!(growth_holds(f.as_ref(), &x));
            }
        }
    }

    #[test]
    fn detects_wrong_derivative() {
        struct Wrong;
        impl TestFunction for Wrong {
            fn in_dim(&self) -> usize {
                1
            }
            fn out_dim(&self) -> usize {
                1
            }
            fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
                x.map(|v| v.sin())
            }
            fn derivative(&self, x: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::from_element(1, 1, x[0].cos() * 1.01)
            }
            fn second_derivative(&self, x: &DVector<f64>) -> Bilinear {
                let mut h = Bilinear::zeros(1, 1);
                h.set(0, 0, 0, -x[0].sin());
                h
            }
            fn growth(&self) -> (f64, f64) {
                (1.0, 0.0)
            }
        }
        let c = check_test_function(&Wrong, &DVector::from_element(1, 0.3), 1e-5);
        assert!(!c.passes());
    }
}
