//! Compressed-row complex matrices and a fixed-step RK4 integrator for
//! `dy/dt = A y`.

use crate::C64;

/// Row-compressed complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
}

impl CsrMatrix {
    /// Builds from coordinate triplets. Duplicates are summed and exact
    /// zeros dropped; columns within a row end up sorted.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            assert!(r < n_rows && c < n_cols, "triplet ({r}, {c}) out of bounds");
            if rows.last() == Some(&r) && col_idx.last() == Some(&c) {
                *values.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                col_idx.push(c);
                values.push(v);
            }
        }
        let keep: Vec<bool> = values.iter().map(|v| *v != C64::new(0.0, 0.0)).collect();
        let mut k = 0;
        let (mut ci, mut vs) = (Vec::with_capacity(values.len()), Vec::with_capacity(values.len()));
        for (i, &r) in rows.iter().enumerate() {
            if keep[i] {
                row_ptr[r + 1] += 1;
                ci.push(col_idx[i]);
                vs.push(values[i]);
                k += 1;
            }
        }
        debug_assert_eq!(k, ci.len());
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx: ci,
            values: vs,
        }
    }

    pub fn from_dense(m: &crate::linalg::CMatrix) -> Self {
        let mut t = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                t.push((r, c, m[(r, c)]));
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), t)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn max_row_nnz(&self) -> usize {
        self.row_ptr.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    /// Entry lookup (binary search within the row).
    pub fn get(&self, r: usize, c: usize) -> C64 {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        match self.col_idx[lo..hi].binary_search(&c) {
            Ok(i) => self.values[lo + i],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    /// Multiplies every stored value by `s`.
    pub fn scale(&mut self, s: C64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[i] * x[self.col_idx[i]];
            }
            *out = acc;
        }
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.n_rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> crate::linalg::CMatrix {
        let mut m = crate::linalg::CMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col_idx[i])] = self.values[i];
            }
        }
        m
    }
}

/// Classic RK4 for `dy/dt = A y` with preallocated stage buffers.
pub struct Rk4 {
    k1: Vec<C64>,
    k2: Vec<C64>,
    k3: Vec<C64>,
    k4: Vec<C64>,
    tmp: Vec<C64>,
}

impl Rk4 {
    pub fn new(n: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); n];
        Rk4 {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
        }
    }

    /// Advances `y` by one step of size `dt`.
    pub fn step(&mut self, a: &CsrMatrix, y: &mut [C64], dt: f64) {
        let h = dt;
        a.mul_vec_into(y, &mut self.k1);
        axpy_into(&mut self.tmp, y, 0.5 * h, &self.k1);
        a.mul_vec_into(&self.tmp, &mut self.k2);
        axpy_into(&mut self.tmp, y, 0.5 * h, &self.k2);
        a.mul_vec_into(&self.tmp, &mut self.k3);
        axpy_into(&mut self.tmp, y, h, &self.k3);
        a.mul_vec_into(&self.tmp, &mut self.k4);
        let w = h / 6.0;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += (self.k1[i] + 2.0 * (self.k2[i] + self.k3[i]) + self.k4[i]) * w;
        }
    }
}

fn axpy_into(out: &mut [C64], y: &[C64], a: f64, k: &[C64]) {
    for ((o, &yi), &ki) in out.iter_mut().zip(y).zip(k) {
        *o = yi + ki * a;
    }
}

/// Euclidean norm.
pub fn norm(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Number of RK4 steps of size `dt` that land exactly on `t`, if any.
pub fn steps_to(t: f64, dt: f64) -> Option<usize> {
    let n = (t / dt).round();
    if n < 0.0 || ((n * dt) - t).abs() > 1e-9 * dt.max(t.abs()) {
        None
    } else {
        Some(n as usize)
    }
}
