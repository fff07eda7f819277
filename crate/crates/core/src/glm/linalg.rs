use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

/// Row-compressed copy of a design, skipping exact zeros.
///
/// Stump designs have one non-zero per split on a row's root-to-leaf path, so Gram
/// assembly and products cost O(nnz) per row instead of O(m).
#[derive(Debug, Clone)]
pub(crate) struct SparseRows {
    pub n_rows: usize,
    pub n_cols: usize,
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl SparseRows {
    pub fn from_dense(z: &DMatrix<f64>) -> Self {
        let (n, m) = z.shape();
        let mut ptr = Vec::with_capacity(n + 1);
        let mut idx = Vec::new();
        let mut val = Vec::new();
        ptr.push(0);
        for i in 0..n {
            for j in 0..m {
                let v = z[(i, j)];
                if v != 0.0 {
                    idx.push(j);
                    val.push(v);
                }
            }
            ptr.push(idx.len());
        }
        Self {
            n_rows: n,
            n_cols: m,
            ptr,
            idx,
            val,
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.ptr[i]..self.ptr[i + 1];
        (&self.idx[r.clone()], &self.val[r])
    }

    /// Rows listed in `keep`, in order.
    pub fn select(&self, keep: &[usize]) -> Self {
        let mut ptr = Vec::with_capacity(keep.len() + 1);
        let mut idx = Vec::new();
        let mut val = Vec::new();
        ptr.push(0);
        for &i in keep {
            let (ix, v) = self.row(i);
            idx.extend_from_slice(ix);
            val.extend_from_slice(v);
            ptr.push(idx.len());
        }
        Self {
            n_rows: keep.len(),
            n_cols: self.n_cols,
            ptr,
            idx,
            val,
        }
    }

    /// Linear predictor `theta[0] + x_i . theta[1..]` for every row.
    pub fn linear_predictor(&self, theta: &DVector<f64>) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| {
                let (ix, v) = self.row(i);
                theta[0] + ix.iter().zip(v).map(|(&j, &x)| x * theta[j + 1]).sum::<f64>()
            })
            .collect()
    }

    /// `[1 X]^T diag(w) [1 X]`, intercept first.
    pub fn weighted_gram(&self, w: &[f64]) -> DMatrix<f64> {
        let m = self.n_cols + 1;
        let mut g = DMatrix::zeros(m, m);
        for i in 0..self.n_rows {
            let wi = w[i];
            if wi == 0.0 {
                continue;
            }
            let (ix, v) = self.row(i);
            g[(0, 0)] += wi;
            for (a, (&ja, &xa)) in ix.iter().zip(v).enumerate() {
                let wa = wi * xa;
                g[(ja + 1, 0)] += wa;
                for (&jb, &xb) in ix[..=a].iter().zip(&v[..=a]) {
                    // ix is increasing, so jb <= ja: lower triangle
                    g[(ja + 1, jb + 1)] += wa * xb;
                }
            }
        }
        g.fill_upper_triangle_with_lower_triangle();
        g
    }

    /// `[1 X]^T v`, intercept first.
    pub fn t_mul(&self, v: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_cols + 1);
        for i in 0..self.n_rows {
            let (ix, x) = self.row(i);
            out[0] += v[i];
            for (&j, &xj) in ix.iter().zip(x) {
                out[j + 1] += xj * v[i];
            }
        }
        out
    }

    /// `x~_i^T A x~_i` with `x~_i = [1, x_i]` for symmetric `A`.
    pub fn quad_form(&self, i: usize, a: &DMatrix<f64>) -> f64 {
        let (ix, v) = self.row(i);
        let mut s = a[(0, 0)];
        for (k, (&ja, &xa)) in ix.iter().zip(v).enumerate() {
            s += 2.0 * xa * a[(ja + 1, 0)];
            s += xa * xa * a[(ja + 1, ja + 1)];
            for (&jb, &xb) in ix[..k].iter().zip(&v[..k]) {
                s += 2.0 * xa * xb * a[(ja + 1, jb + 1)];
            }
        }
        s
    }

    /// `A x~_i`.
    pub fn apply_row(&self, i: usize, a: &DMatrix<f64>) -> DVector<f64> {
        let mut out = a.column(0).into_owned();
        let (ix, v) = self.row(i);
        for (&j, &x) in ix.iter().zip(v) {
            out.axpy(x, &a.column(j + 1), 1.0);
        }
        out
    }

    /// `x~_i . w`.
    pub fn dot_row(&self, i: usize, w: &DVector<f64>) -> f64 {
        let (ix, v) = self.row(i);
        w[0] + ix.iter().zip(v).map(|(&j, &x)| x * w[j + 1]).sum::<f64>()
    }

    /// `A x~_i` for every row, as the columns of a `(m+1) x n` matrix.
    pub fn apply_to_rows(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let m1 = self.n_cols + 1;
        let mut out = DMatrix::zeros(m1, self.n_rows);
        for i in 0..self.n_rows {
            let mut col = out.column_mut(i);
            col.copy_from(&a.column(0));
            let (ix, v) = self.row(i);
            for (&j, &x) in ix.iter().zip(v) {
                col.axpy(x, &a.column(j + 1), 1.0);
            }
        }
        out
    }
}

/// Inverse of a symmetric positive semi-definite matrix; the Moore-Penrose
/// pseudo-inverse when Cholesky fails.
pub(crate) fn psd_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() == 0 {
        return DMatrix::zeros(0, 0);
    }
    if let Some((_, li)) = cholesky_with_inverse(a) {
        let inv = li.transpose() * &li;
        if inv.iter().all(|v| v.is_finite()) {
            return inv;
        }
    }
    pseudo_inverse_sym(a)
}

pub(crate) fn is_positive_definite(a: &DMatrix<f64>) -> bool {
    cholesky_with_inverse(a).is_some()
}

/// Cholesky factor `L` of a symmetric positive-definite matrix together with `L^-1`,
/// by recursive 2x2 blocking so the bulk of the work is matrix products:
/// `L21 = A21 L11^-T`, `L22 = chol(A22 - L21 L21^T)`, `(L^-1)21 = -L22^-1 L21 L11^-1`.
/// `None` if `a` is not numerically positive definite.
fn cholesky_with_inverse(a: &DMatrix<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let m = a.nrows();
    if m <= 48 {
        let l = Cholesky::new(a.clone())?.l();
        let mut inv = DMatrix::identity(m, m);
        if !l.solve_lower_triangular_mut(&mut inv) || !inv.iter().all(|v| v.is_finite()) {
            return None;
        }
        return Some((l, inv));
    }
    let k = m / 2;
    let (l11, i11) = cholesky_with_inverse(&a.view((0, 0), (k, k)).into_owned())?;
    let l21 = a.view((k, 0), (m - k, k)) * i11.transpose();
    let mut s = a.view((k, k), (m - k, m - k)).into_owned();
    s.gemm(-1.0, &l21, &l21.transpose(), 1.0);
    let (l22, i22) = cholesky_with_inverse(&s)?;
    let i21 = -(&i22 * &l21 * &i11);
    let mut l = DMatrix::zeros(m, m);
    l.view_mut((0, 0), (k, k)).copy_from(&l11);
    l.view_mut((k, 0), (m - k, k)).copy_from(&l21);
    l.view_mut((k, k), (m - k, m - k)).copy_from(&l22);
    let mut inv = DMatrix::zeros(m, m);
    inv.view_mut((0, 0), (k, k)).copy_from(&i11);
    inv.view_mut((k, 0), (m - k, k)).copy_from(&i21);
    inv.view_mut((k, k), (m - k, m - k)).copy_from(&i22);
    Some((l, inv))
}

pub(crate) fn pseudo_inverse_sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let dmax = eig.eigenvalues.iter().fold(0.0f64, |m, &d| m.max(d.abs()));
    let tol = dmax * 1e-12 * a.nrows() as f64;
    let inv_d = eig
        .eigenvalues
        .map(|d| if d > tol { 1.0 / d } else { 0.0 });
    let scaled = &eig.eigenvectors * DMatrix::from_diagonal(&inv_d);
    scaled * eig.eigenvectors.transpose()
}

/// Solves `A x = b` for symmetric PSD `A`, falling back to the pseudo-inverse.
pub(crate) fn psd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if let Some(ch) = Cholesky::new(a.clone()) {
        let x = ch.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return x;
        }
    }
    pseudo_inverse_sym(a) * b
}
