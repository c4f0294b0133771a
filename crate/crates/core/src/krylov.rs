//! Restarted GMRES with an ILU(0) preconditioner, used for systems too large
//! for a direct sparse factorization.

use crate::assembly::SparseMatrix;
use crate::error::{QceError, Result};

/// Incomplete LU factorization with the sparsity pattern of the matrix.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag: Vec<usize>,
}

impl Ilu0 {
    /// Requires sorted column indices and a stored diagonal in every row.
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        let n = a.n;
        let mut vals = a.vals.clone();
        let mut diag = vec![usize::MAX; n];
        for i in 0..n {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                if a.cols[k] == i {
                    diag[i] = k;
                }
            }
            if diag[i] == usize::MAX {
                return Err(QceError::SingularSystem(format!("no diagonal entry in row {i}")));
            }
        }
        // marker[j] = position of column j in the current row
        let mut marker = vec![usize::MAX; n];
        for i in 0..n {
            let (lo, hi) = (a.row_ptr[i], a.row_ptr[i + 1]);
            for k in lo..hi {
                marker[a.cols[k]] = k;
            }
            for k in lo..diag[i] {
                let c = a.cols[k];
                let pivot = vals[diag[c]];
                if pivot == 0.0 || !pivot.is_finite() {
                    return Err(QceError::SingularSystem(format!("zero pivot in row {c}")));
                }
                let lik = vals[k] / pivot;
                vals[k] = lik;
                for kk in diag[c] + 1..a.row_ptr[c + 1] {
                    let m = marker[a.cols[kk]];
                    if m != usize::MAX {
                        vals[m] -= lik * vals[kk];
                    }
                }
            }
            for k in lo..hi {
                marker[a.cols[k]] = usize::MAX;
            }
            if vals[diag[i]] == 0.0 {
                return Err(QceError::SingularSystem(format!("zero pivot in row {i}")));
            }
        }
        Ok(Ilu0 {
            n,
            row_ptr: a.row_ptr.clone(),
            cols: a.cols.clone(),
            vals,
            diag,
        })
    }

    /// x ← (LU)⁻¹ x
    pub fn apply(&self, x: &mut [f64]) {
        for i in 0..self.n {
            let mut s = x[i];
            for k in self.row_ptr[i]..self.diag[i] {
                s -= self.vals[k] * x[self.cols[k]];
            }
            x[i] = s;
        }
        for i in (0..self.n).rev() {
            let mut s = x[i];
            for k in self.diag[i] + 1..self.row_ptr[i + 1] {
                s -= self.vals[k] * x[self.cols[k]];
            }
            x[i] = s / self.vals[self.diag[i]];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// ‖f − Ax‖₂ / ‖f‖₂ of the returned iterate.
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned restarted GMRES, stopping when the relative residual
/// drops below `tol` or after `max_iter` inner iterations.
pub fn gmres(a: &SparseMatrix, f: &[f64], pre: &Ilu0, tol: f64, restart: usize, max_iter: usize) -> GmresOutcome {
    let n = a.n;
    let fnorm = norm(f);
    let mut x = vec![0.0; n];
    if fnorm == 0.0 {
        return GmresOutcome { x, iterations: 0, residual: 0.0 };
    }
    let mut iterations = 0;
    while iterations < max_iter {
        let ax = a.matvec(&x);
        let r: Vec<f64> = f.iter().zip(&ax).map(|(b, v)| b - v).collect();
        let beta = norm(&r);
        if beta / fnorm <= tol {
            break;
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut h: Vec<Vec<f64>> = Vec::new();
        let (mut cs, mut sn): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
        let mut g = vec![beta];
        for j in 0..restart {
            iterations += 1;
            let mut z = v[j].clone();
            pre.apply(&mut z);
            let mut w = a.matvec(&z);
            let mut col = vec![0.0; j + 2];
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(&w, vi);
                col[i] = hij;
                for (wk, vk) in w.iter_mut().zip(vi) {
                    *wk -= hij * vk;
                }
            }
            let hn = norm(&w);
            col[j + 1] = hn;
            for i in 0..j {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let d = col[j].hypot(col[j + 1]);
            let (c, s) = if d == 0.0 { (1.0, 0.0) } else { (col[j] / d, col[j + 1] / d) };
            cs.push(c);
            sn.push(s);
            col[j] = d;
            col[j + 1] = 0.0;
            g.push(-s * g[j]);
            g[j] *= c;
            h.push(col);
            let done = g[j + 1].abs() / fnorm <= tol || hn == 0.0 || iterations >= max_iter;
            if !done {
                v.push(w.iter().map(|wi| wi / hn).collect());
            }
            if done || j + 1 == restart {
                // back substitution for the Krylov coefficients
                let m = h.len();
                let mut y = vec![0.0; m];
                for i in (0..m).rev() {
                    let s: f64 = (i + 1..m).map(|k| h[k][i] * y[k]).sum();
                    y[i] = (g[i] - s) / h[i][i];
                }
                let mut u = vec![0.0; n];
                for (yi, vi) in y.iter().zip(&v) {
                    for (uk, vk) in u.iter_mut().zip(vi) {
                        *uk += yi * vk;
                    }
                }
                pre.apply(&mut u);
                for (xk, uk) in x.iter_mut().zip(&u) {
                    *xk += uk;
                }
                break;
            }
        }
    }
    let ax = a.matvec(&x);
    let r: Vec<f64> = f.iter().zip(&ax).map(|(b, v)| b - v).collect();
    let residual = norm(&r) / fnorm;
    GmresOutcome { x, iterations, residual }
}
