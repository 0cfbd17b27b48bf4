//! Dense matrices over a coefficient backend.

use std::fmt;

use crate::coeff::{cmp_modulus, Coeff};

/// Row-major dense matrix.
#[derive(Clone, PartialEq, Debug)]
pub struct Mat<K: Coeff> {
    rows: usize,
    cols: usize,
    data: Vec<K>,
}

impl<K: Coeff> Mat<K> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![K::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, K::one());
        }
        m
    }

    pub fn diag(d: &[K]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, v) in d.iter().enumerate() {
            m.set(i, i, v.clone());
        }
        m
    }

    /// Builds from rows; all rows must have the same length.
    pub fn from_rows(rows: Vec<Vec<K>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        assert!(rows.iter().all(|x| x.len() == c), "ragged matrix");
        Mat {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn get(&self, i: usize, j: usize) -> &K {
        &self.data[i * self.cols + j]
    }
    pub fn set(&mut self, i: usize, j: usize, v: K) {
        self.data[i * self.cols + j] = v;
    }
    pub fn row(&self, i: usize) -> &[K] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
    pub fn to_rows(&self) -> Vec<Vec<K>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn mul(&self, o: &Mat<K>) -> Mat<K> {
        assert_eq!(self.cols, o.rows, "matrix product shape");
        let mut m: Mat<K> = Mat::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..o.cols {
                    let idx = i * o.cols + j;
                    m.data[idx].mul_add_assign(a, o.get(k, j));
                }
            }
        }
        m
    }

    pub fn mul_vec(&self, v: &[K]) -> Vec<K> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                let mut acc = K::zero();
                for (a, b) in self.row(i).iter().zip(v) {
                    acc.mul_add_assign(a, b);
                }
                acc
            })
            .collect()
    }

    pub fn add(&self, o: &Mat<K>) -> Mat<K> {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&o.data)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn sub(&self, o: &Mat<K>) -> Mat<K> {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&o.data)
                .map(|(a, b)| a.sub(b))
                .collect(),
        }
    }

    pub fn scale(&self, c: &K) -> Mat<K> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a.mul(c)).collect(),
        }
    }

    pub fn conj(&self) -> Mat<K> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a.conj()).collect(),
        }
    }

    pub fn transpose(&self) -> Mat<K> {
        let mut m = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m.set(j, i, self.get(i, j).clone());
            }
        }
        m
    }

    /// Sub-block `rows r0..r1`, `cols c0..c1`.
    pub fn block(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Mat<K> {
        let mut m = Mat::zeros(r1 - r0, c1 - c0);
        for i in r0..r1 {
            for j in c0..c1 {
                m.set(i - r0, j - c0, self.get(i, j).clone());
            }
        }
        m
    }

    /// Writes `b` with its top-left corner at `(r0, c0)`.
    pub fn put_block(&mut self, r0: usize, c0: usize, b: &Mat<K>) {
        for i in 0..b.rows {
            for j in 0..b.cols {
                self.set(r0 + i, c0 + j, b.get(i, j).clone());
            }
        }
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Largest entry modulus.
    pub fn max_modulus(&self) -> f64 {
        self.data
            .iter()
            .map(|a| a.modulus_f64())
            .fold(0.0, f64::max)
    }

    pub fn is_zero_tol(&self, tol: f64) -> bool {
        self.data.iter().all(|a| a.is_negligible(tol))
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        (0..self.rows).all(|i| (0..self.cols).all(|j| i == j || self.get(i, j).is_negligible(tol)))
    }

    pub fn diagonal(&self) -> Vec<K> {
        (0..self.rows.min(self.cols))
            .map(|i| self.get(i, i).clone())
            .collect()
    }

    pub fn trace(&self) -> K {
        let mut t = K::zero();
        for i in 0..self.rows.min(self.cols) {
            t.add_assign(self.get(i, i));
        }
        t
    }

    /// Gaussian elimination with modulus pivoting. Returns the reduced
    /// augmented system state; `None` when a pivot falls below `tol`
    /// relative to the largest entry (exact backend: exactly zero).
    fn eliminate(&self, rhs: &Mat<K>, tol: f64) -> Option<(Mat<K>, K)> {
        assert!(self.is_square());
        assert_eq!(rhs.rows, self.rows);
        let n = self.rows;
        let mut a = self.clone();
        let mut b = rhs.clone();
        let mut det = K::one();
        let scale = self.max_modulus().max(1.0);
        for col in 0..n {
            let mut best: Option<usize> = None;
            for r in col..n {
                if a.get(r, col).is_zero() {
                    continue;
                }
                best = match best {
                    None => Some(r),
                    Some(p) => {
                        if cmp_modulus(a.get(r, col), a.get(p, col)) == std::cmp::Ordering::Greater
                        {
                            Some(r)
                        } else {
                            Some(p)
                        }
                    }
                };
            }
            let p = best?;
            if a.get(p, col).is_negligible(tol * scale) {
                return None;
            }
            if p != col {
                for j in 0..n {
                    a.data.swap(p * n + j, col * n + j);
                }
                for j in 0..b.cols {
                    b.data.swap(p * b.cols + j, col * b.cols + j);
                }
                det = det.neg();
            }
            let piv = a.get(col, col).clone();
            det = det.mul(&piv);
            let pinv = piv.inv()?;
            for j in 0..n {
                let v = a.get(col, j).mul(&pinv);
                a.set(col, j, v);
            }
            for j in 0..b.cols {
                let v = b.get(col, j).mul(&pinv);
                b.set(col, j, v);
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a.get(r, col).clone();
                if f.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let v = a.get(r, j).sub(&f.mul(a.get(col, j)));
                    a.set(r, j, v);
                }
                for j in 0..b.cols {
                    let v = b.get(r, j).sub(&f.mul(b.get(col, j)));
                    b.set(r, j, v);
                }
            }
        }
        Some((b, det))
    }

    /// Inverse; `None` if singular (float backend: relative pivot below `tol`).
    pub fn inverse_tol(&self, tol: f64) -> Option<Mat<K>> {
        if !self.is_square() {
            return None;
        }
        self.eliminate(&Mat::identity(self.rows), tol)
            .map(|(b, _)| b)
    }

    pub fn inverse(&self) -> Option<Mat<K>> {
        self.inverse_tol(crate::coeff::DEFAULT_FLOAT_TOL)
    }

    /// Solves `self · X = rhs`.
    pub fn solve(&self, rhs: &Mat<K>) -> Option<Mat<K>> {
        self.eliminate(rhs, crate::coeff::DEFAULT_FLOAT_TOL)
            .map(|(b, _)| b)
    }

    pub fn det(&self) -> K {
        assert!(self.is_square());
        match self.eliminate(&Mat::zeros(self.rows, 0), 0.0) {
            Some((_, d)) => d,
            None => K::zero(),
        }
    }

    /// Rank by elimination with a relative threshold.
    pub fn rank(&self, tol: f64) -> usize {
        let mut a = self.clone();
        let scale = self.max_modulus().max(1.0);
        let mut rank = 0;
        let mut row = 0;
        for col in 0..a.cols {
            if row >= a.rows {
                break;
            }
            let mut best: Option<usize> = None;
            for r in row..a.rows {
                if a.get(r, col).is_negligible(tol * scale) {
                    continue;
                }
                best = match best {
                    None => Some(r),
                    Some(p)
                        if cmp_modulus(a.get(r, col), a.get(p, col))
                            == std::cmp::Ordering::Greater =>
                    {
                        Some(r)
                    }
                    Some(p) => Some(p),
                };
            }
            let Some(p) = best else { continue };
            for j in 0..a.cols {
                a.data.swap(p * a.cols + j, row * a.cols + j);
            }
            let pinv = a.get(row, col).inv().expect("nonzero pivot");
            for r in (row + 1)..a.rows {
                let f = a.get(r, col).mul(&pinv);
                if f.is_zero() {
                    continue;
                }
                for j in col..a.cols {
                    let v = a.get(r, j).sub(&f.mul(a.get(row, j)));
                    a.set(r, j, v);
                }
            }
            row += 1;
            rank += 1;
        }
        rank
    }

    pub fn map<L: Coeff>(&self, f: impl Fn(&K) -> L) -> Mat<L> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn approx_eq(&self, o: &Mat<K>, tol: f64) -> bool {
        self.rows == o.rows
            && self.cols == o.cols
            && self
                .data
                .iter()
                .zip(&o.data)
                .all(|(a, b)| a.sub(b).is_negligible(tol))
    }
}

impl<K: Coeff> fmt::Display for Mat<K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "[")?;
            for j in 0..self.cols {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self.get(i, j))?;
            }
            write!(f, "]")?;
        }
        write!(f, "]")
    }
}
