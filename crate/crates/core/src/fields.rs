//! Drift fields, diffusion fields and test functions, each with analytic
//! first and second derivatives.

use nalgebra::{DMatrix, DVector};

use crate::bilinear::Bilinear;

/// Drift `mu: [0, T] x R^d -> R^d` with derivatives in `x`.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64>;
    fn hessian(&self, t: f64, x: &DVector<f64>) -> Bilinear;
    /// Polynomial growth exponent of `eval`.
    fn growth_exponent(&self) -> f64;
}

/// Diffusion `sigma: [0, T] x R^d -> R^{d x m}`.
pub trait DiffusionField: Send + Sync {
    fn dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn eval(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64>;
    /// True when `eval` does not depend on `x`.
    fn is_additive(&self) -> bool;
}

/// `f in C^2(R^d, R^k)` with growth constants `(c, q)`:
/// `max(|f(x)| / (1 + |x|), |f'(x)|, |f''(x)|) <= c (1 + |x|^q)`.
pub trait TestFunction: Send + Sync {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `k x d`.
    fn derivative(&self, x: &DVector<f64>) -> DMatrix<f64>;
    fn second_derivative(&self, x: &DVector<f64>) -> Bilinear;
    fn growth(&self) -> (f64, f64);
}

/// `mu(t, x) = A x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineDrift {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineDrift {
    pub fn new(matrix: DMatrix<f64>, offset: DVector<f64>) -> Self {
        assert!(matrix.is_square() && matrix.nrows() == offset.len());
        Self { matrix, offset }
    }

    /// Scalar `mu(x) = a x`.
    pub fn scalar(a: f64) -> Self {
        Self::new(DMatrix::from_element(1, 1, a), DVector::zeros(1))
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(DMatrix::zeros(dim, dim), DVector::zeros(dim))
    }
}

impl VectorField for AffineDrift {
    fn dim(&self) -> usize {
        self.offset.len()
    }

    fn eval(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x + &self.offset
    }

    fn jacobian(&self, _t: f64, _x: &DVector<f64>) -> DMatrix<f64> {
        self.matrix.clone()
    }

    fn hessian(&self, _t: f64, _x: &DVector<f64>) -> Bilinear {
        Bilinear::zeros(self.dim(), self.dim())
    }

    fn growth_exponent(&self) -> f64 {
        1.0
    }
}

/// Scalar `mu(x) = -x^3 + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicDrift {
    pub offset: f64,
}

impl VectorField for CubicDrift {
    fn dim(&self) -> usize {
        1
    }

    fn eval(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, -x[0].powi(3) + self.offset)
    }

    fn jacobian(&self, _t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, -3.0 * x[0] * x[0])
    }

    fn hessian(&self, _t: f64, x: &DVector<f64>) -> Bilinear {
        let mut h = Bilinear::zeros(1, 1);
        h.set(0, 0, 0, -6.0 * x[0]);
        h
    }

    fn growth_exponent(&self) -> f64 {
        3.0
    }
}

/// Constant `d x m` diffusion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantDiffusion {
    pub matrix: DMatrix<f64>,
}

impl ConstantDiffusion {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        Self { matrix }
    }

    pub fn scalar(value: f64) -> Self {
        Self::new(DMatrix::from_element(1, 1, value))
    }

    pub fn zero(dim: usize, noise_dim: usize) -> Self {
        Self::new(DMatrix::zeros(dim, noise_dim))
    }
}

impl DiffusionField for ConstantDiffusion {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn noise_dim(&self) -> usize {
        self.matrix.ncols()
    }

    fn eval(&self, _t: f64, _x: &DVector<f64>) -> DMatrix<f64> {
        self.matrix.clone()
    }

    fn is_additive(&self) -> bool {
        true
    }
}

/// Scalar `sigma(x) = scale * x` (geometric noise).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearDiffusion {
    pub scale: f64,
}

impl DiffusionField for LinearDiffusion {
    fn dim(&self) -> usize {
        1
    }

    fn noise_dim(&self) -> usize {
        1
    }

    fn eval(&self, _t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.scale * x[0])
    }

    fn is_additive(&self) -> bool {
        false
    }
}

/// `f(x) = x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Identity {
    pub dim: usize,
}

impl TestFunction for Identity {
    fn in_dim(&self) -> usize {
        self.dim
    }

    fn out_dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }

    fn derivative(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }

    fn second_derivative(&self, _x: &DVector<f64>) -> Bilinear {
        Bilinear::zeros(self.dim, self.dim)
    }

    fn growth(&self) -> (f64, f64) {
        (1.0, 0.0)
    }
}

/// `f(x) = |x|^2`, which is `x^2` in one dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquaredNorm {
    pub dim: usize,
}

impl TestFunction for SquaredNorm {
    fn in_dim(&self) -> usize {
        self.dim
    }

    fn out_dim(&self) -> usize {
        1
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, x.norm_squared())
    }

    fn derivative(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(1, self.dim, |_, j| 2.0 * x[j])
    }

    fn second_derivative(&self, _x: &DVector<f64>) -> Bilinear {
        let mut h = Bilinear::zeros(1, self.dim);
        for i in 0..self.dim {
            h.set(0, i, i, 2.0);
        }
        h
    }

    fn growth(&self) -> (f64, f64) {
        (2.0 * (self.dim as f64).sqrt(), 1.0)
    }
}

/// `f(x) = (x^2, sin x)` on the real line.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SquareAndSine;

impl TestFunction for SquareAndSine {
    fn in_dim(&self) -> usize {
        1
    }

    fn out_dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[0] * x[0], x[0].sin()])
    }

    fn derivative(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[2.0 * x[0], x[0].cos()])
    }

    fn second_derivative(&self, x: &DVector<f64>) -> Bilinear {
        let mut h = Bilinear::zeros(2, 1);
        h.set(0, 0, 0, 2.0);
        h.set(1, 0, 0, -x[0].sin());
        h
    }

    fn growth(&self) -> (f64, f64) {
        (2.5, 1.0)
    }
}
