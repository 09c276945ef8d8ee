use std::fmt;

/// Dense row-major 2-D array of `f64`. Scalars are 1×1, row vectors 1×n.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data length does not match shape");
        Self { rows, cols, data }
    }

    pub fn scalar(value: f64) -> Self {
        Self::new(1, 1, vec![value])
    }

    pub fn row(data: Vec<f64>) -> Self {
        let cols = data.len();
        Self::new(1, cols, data)
    }

    pub fn column(data: Vec<f64>) -> Self {
        let rows = data.len();
        Self::new(rows, 1, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row_slice(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Value of a 1×1 tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on a non-scalar tensor");
        self.data[0]
    }

    /// Element read with broadcasting of singleton dimensions.
    #[inline]
    pub(crate) fn bget(&self, i: usize, j: usize) -> f64 {
        let i = if self.rows == 1 { 0 } else { i };
        let j = if self.cols == 1 { 0 } else { j };
        self.data[i * self.cols + j]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::new(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn transpose(&self) -> Tensor {
        Tensor::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self · other` for shapes (r×k)·(k×c).
    pub fn matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.cols, other.rows, "matmul inner dimension mismatch");
        let (r, k, c) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let out_row = &mut out[i * c..(i + 1) * c];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * c..(p + 1) * c];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(r, c, out)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.rows, other.rows, "t_matmul row mismatch");
        let (n, r, c) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; r * c];
        for p in 0..n {
            let a_row = &self.data[p * r..(p + 1) * r];
            let b_row = &other.data[p * c..(p + 1) * c];
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out[i * c..(i + 1) * c];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(r, c, out)
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_t(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.cols, other.cols, "matmul_t column mismatch");
        let (r, k, c) = (self.rows, self.cols, other.rows);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..c {
                let b_row = &other.data[j * k..(j + 1) * k];
                out[i * c + j] = a_row.iter().zip(b_row).map(|(a, b)| a * b).sum();
            }
        }
        Tensor::new(r, c, out)
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Sums `self` down to `shape`, the inverse of broadcasting.
    pub(crate) fn reduce_to(&self, rows: usize, cols: usize) -> Tensor {
        if self.shape() == (rows, cols) {
            return self.clone();
        }
        let mut out = Tensor::zeros(rows, cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let oi = if rows == 1 { 0 } else { i };
                let oj = if cols == 1 { 0 } else { j };
                out.data[oi * cols + oj] += self.data[i * self.cols + j];
            }
        }
        out
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor[{}x{}]{:?}", self.rows, self.cols, self.data)
    }
}

impl From<f64> for Tensor {
    fn from(value: f64) -> Self {
        Tensor::scalar(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        let a = Tensor::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Tensor::new(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
        assert_eq!(a.transpose().t_matmul(&b), c);
        assert_eq!(a.matmul_t(&b.transpose()), c);
    }

    #[test]
    fn reduce_inverts_broadcast() {
        let g = Tensor::filled(3, 2, 1.0);
        assert_eq!(g.reduce_to(1, 2).data(), &[3.0, 3.0]);
        assert_eq!(g.reduce_to(3, 1).data(), &[2.0, 2.0, 2.0]);
        assert_eq!(g.reduce_to(1, 1).item(), 6.0);
    }
}
