//! Compressed sparse row matrices and an ILU(0) preconditioner.

/// Square CSR matrix with sorted column indices and an explicit diagonal in
/// every row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
    diag: Vec<usize>,
}

/// Accumulates `(row, col, value)` entries; duplicates are summed.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    n: usize,
    entries: Vec<(u32, u32, f64)>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        self.entries.push((row as u32, col as u32, value));
    }

    pub fn build(mut self) -> CsrMatrix {
        let n = self.n;
        for r in 0..n {
            self.entries.push((r as u32, r as u32, 0.0));
        }
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(u32, u32)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r as usize + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        let diag = (0..n)
            .map(|r| {
                let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
                row_ptr[r] + cols.binary_search(&(r as u32)).unwrap()
            })
            .collect();
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
            diag,
        }
    }
}

impl CsrMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn diagonal(&self, r: usize) -> f64 {
        self.values[self.diag[r]]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&(c as u32)) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    /// `out = A x`.
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate().take(self.n) {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k] as usize];
            }
            *o = acc;
        }
    }

    /// `out = A x + shift ⊙ x` for a diagonal shift.
    pub fn mul_vec_shifted(&self, shift: &[f64], scale: f64, x: &[f64], out: &mut [f64]) {
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k] as usize];
            }
            out[r] = scale * acc + shift[r] * x[r];
        }
    }

    /// Column sums `1ᵀ A`.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                s[c] += v;
            }
        }
        s
    }

    /// Row sums `A 1`.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|r| self.row(r).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `scale * A + diag(shift)` with the same sparsity pattern.
    pub fn scaled_plus_diagonal(&self, scale: f64, shift: &[f64]) -> CsrMatrix {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= scale);
        for r in 0..self.n {
            m.values[m.diag[r]] += shift[r];
        }
        m
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        d
    }
}

/// Incomplete LU factorization with zero fill, stored in one CSR array
/// (unit lower part below the diagonal, upper part on and above).
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: CsrMatrix,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Self {
        let mut lu = a.clone();
        let n = lu.n;
        // position lookup for the current row
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for k in start..end {
                pos[lu.col_idx[k] as usize] = k;
            }
            for k in start..lu.diag[i] {
                let col = lu.col_idx[k] as usize;
                let factor = lu.values[k] / lu.values[lu.diag[col]];
                lu.values[k] = factor;
                for kk in lu.diag[col] + 1..lu.row_ptr[col + 1] {
                    let p = pos[lu.col_idx[kk] as usize];
                    if p != usize::MAX {
                        lu.values[p] -= factor * lu.values[kk];
                    }
                }
            }
            for k in start..end {
                pos[lu.col_idx[k] as usize] = usize::MAX;
            }
        }
        Self { lu }
    }

    /// Solves `L U x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let lu = &self.lu;
        for i in 0..lu.n {
            let mut acc = x[i];
            for k in lu.row_ptr[i]..lu.diag[i] {
                acc -= lu.values[k] * x[lu.col_idx[k] as usize];
            }
            x[i] = acc;
        }
        for i in (0..lu.n).rev() {
            let mut acc = x[i];
            for k in lu.diag[i] + 1..lu.row_ptr[i + 1] {
                acc -= lu.values[k] * x[lu.col_idx[k] as usize];
            }
            x[i] = acc / lu.values[lu.diag[i]];
        }
    }
}
