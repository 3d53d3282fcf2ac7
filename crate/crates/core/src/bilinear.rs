use nalgebra::{DMatrix, DVector};

/// Symmetric-or-not bilinear map `(R^n)^2 -> R^k`, stored densely as
/// `data[(c * n + i) * n + j] = B(e_i, e_j)_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bilinear {
    out_dim: usize,
    in_dim: usize,
    data: Vec<f64>,
}

impl Bilinear {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            out_dim,
            in_dim,
            data: vec![0.0; out_dim * in_dim * in_dim],
        }
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    #[inline]
    fn idx(&self, c: usize, i: usize, j: usize) -> usize {
        (c * self.in_dim + i) * self.in_dim + j
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[self.idx(c, i, j)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, i: usize, j: usize, v: f64) {
        let k = self.idx(c, i, j);
        self.data[k] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `B(v, w)`.
    pub fn apply(&self, v: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let n = self.in_dim;
        DVector::from_fn(self.out_dim, |c, _| {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += self.get(c, i, j) * v[i] * w[j];
                }
            }
            acc
        })
    }

    /// `B(e_i, e_j)` as a vector.
    pub fn column(&self, i: usize, j: usize) -> DVector<f64> {
        DVector::from_fn(self.out_dim, |c, _| self.get(c, i, j))
    }

    /// `(v, w) -> L B(v, w)`.
    pub fn left_mul(&self, l: &DMatrix<f64>) -> Bilinear {
        assert_eq!(l.ncols(), self.out_dim);
        let mut out = Bilinear::zeros(l.nrows(), self.in_dim);
        for r in 0..l.nrows() {
            for i in 0..self.in_dim {
                for j in 0..self.in_dim {
                    let mut acc = 0.0;
                    for c in 0..self.out_dim {
                        acc += l[(r, c)] * self.get(c, i, j);
                    }
                    out.set(r, i, j, acc);
                }
            }
        }
        out
    }

    /// Hilbert-Schmidt norm; bounds the operator norm from above.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
