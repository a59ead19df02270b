//! Compressed-row sparse matrices and Jacobi-preconditioned Krylov solvers.

use crate::error::{Error, Result};

pub type Triplet = (usize, usize, f64);

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final `‖b − Ax‖ / ‖b‖`.
    pub residual: f64,
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

impl SparseMatrix {
    /// Compresses a triplet list, summing duplicates.
    ///
    /// Entries of one `(i, j)` slot are summed in ascending value order, so the
    /// stored matrix is bitwise independent of the triplet order.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut triplets: Vec<Triplet>) -> Result<Self> {
        if let Some(&(i, j, _)) = triplets.iter().find(|&&(i, j, _)| i >= n_rows || j >= n_cols) {
            return Err(Error::InvalidInput(format!(
                "triplet ({i}, {j}) outside a {n_rows}x{n_cols} matrix"
            )));
        }
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));

        let mut offsets = vec![0usize; n_rows + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                values.push(v);
                offsets[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n_rows {
            offsets[i + 1] += offsets[i];
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            offsets,
            cols,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            offsets: (0..=n).collect(),
            cols: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SparseMatrix {
            values: d.to_vec(),
            ..Self::identity(d.len())
        }
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

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = Triplet> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// Storage position of entry `(i, j)`, if it is in the pattern.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.cols[r.clone()].binary_search(&j).ok().map(|k| r.start + k)
    }

    /// Same pattern, new values (in storage order).
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len(), "value count must match the pattern");
        SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            offsets: self.offsets.clone(),
            cols: self.cols.clone(),
            values,
        }
    }

    /// Adds `d` to the diagonal; every diagonal entry must be in the pattern.
    pub fn add_diagonal(mut self, d: &[f64]) -> Result<Self> {
        assert_eq!(d.len(), self.n_rows.min(self.n_cols));
        for (i, di) in d.iter().enumerate() {
            let k = self
                .find(i, i)
                .ok_or_else(|| Error::InvalidInput(format!("diagonal entry {i} missing from the pattern")))?;
            self.values[k] += di;
        }
        Ok(self)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.offsets[i]..self.offsets[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// `Aᵀ y`
    pub fn transpose_matvec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.n_rows);
        let mut x = vec![0.0; self.n_cols];
        for (i, yi) in y.iter().enumerate() {
            for (j, v) in self.row(i) {
                x[j] += v * yi;
            }
        }
        x
    }

    pub fn transpose(&self) -> Self {
        let mut offsets = vec![0usize; self.n_cols + 1];
        for &j in &self.cols {
            offsets[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            offsets[j + 1] += offsets[j];
        }
        let mut next = offsets.clone();
        let mut cols = vec![0; self.cols.len()];
        let mut values = vec![0.0; self.values.len()];
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                cols[next[j]] = i;
                values[next[j]] = v;
                next[j] += 1;
            }
        }
        SparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            offsets,
            cols,
            values,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.values.iter_mut().for_each(|v| *v *= s);
        self
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A − Aᵀ|` over all entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, j, v) in self.triplets() {
            worst = worst.max((v - self.get(j, i)).abs());
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

fn jacobi(a: &SparseMatrix) -> Vec<f64> {
    a.diagonal()
        .into_iter()
        .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect()
}

fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Preconditioned conjugate gradients for symmetric positive definite `a`.
pub fn cg_solve(a: &SparseMatrix, b: &[f64], tol: f64, maxit: usize) -> Result<(Vec<f64>, SolveStats)> {
    check_finite(b, "cg right-hand side")?;
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                residual: 0.0,
            },
        ));
    }
    let pinv = jacobi(a);
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&pinv).map(|(r, p)| r * p).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=maxit {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::LinearSolver {
                solver: "cg (matrix not positive definite)",
                iterations: it,
                residual: norm(&r) / bnorm,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let res = norm(&r) / bnorm;
        if !res.is_finite() {
            return Err(Error::NonFinite("cg iterate"));
        }
        if res <= tol {
            // confirm against the true residual
            let true_res = residual(a, &x, b) / bnorm;
            if true_res <= tol {
                return Ok((
                    x,
                    SolveStats {
                        iterations: it,
                        residual: true_res,
                    },
                ));
            }
            r = sub_vec(b, &a.matvec(&x));
        }
        for i in 0..n {
            z[i] = r[i] * pinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::LinearSolver {
        solver: "cg",
        iterations: maxit,
        residual: residual(a, &x, b) / bnorm,
    })
}

fn sub_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn residual(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    norm(&sub_vec(b, &a.matvec(x)))
}

/// Right-preconditioned BiCGStab with Jacobi scaling for general square `a`.
///
/// Restarts from the current iterate on breakdown of the shadow recurrence.
pub fn bicgstab_solve(a: &SparseMatrix, b: &[f64], tol: f64, maxit: usize) -> Result<(Vec<f64>, SolveStats)> {
    check_finite(b, "bicgstab right-hand side")?;
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                residual: 0.0,
            },
        ));
    }
    let pinv = jacobi(a);
    let precond = |v: &[f64]| -> Vec<f64> { v.iter().zip(&pinv).map(|(a, b)| a * b).collect() };

    let mut r = b.to_vec();
    let mut it = 0;
    let mut best = (f64::INFINITY, x.clone());
    'restart: while it < maxit {
        let r_hat = r.clone();
        let mut rho = 1.0;
        let mut alpha = 1.0;
        let mut omega = 1.0;
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        while it < maxit {
            it += 1;
            let rho_new = dot(&r_hat, &r);
            if rho_new.abs() <= 1e-300 || omega == 0.0 {
                r = sub_vec(b, &a.matvec(&x));
                continue 'restart;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            let p_hat = precond(&p);
            v = a.matvec(&p_hat);
            let rv = dot(&r_hat, &v);
            if rv == 0.0 {
                r = sub_vec(b, &a.matvec(&x));
                continue 'restart;
            }
            alpha = rho / rv;
            let s: Vec<f64> = (0..n).map(|i| r[i] - alpha * v[i]).collect();
            if norm(&s) / bnorm <= tol {
                for i in 0..n {
                    x[i] += alpha * p_hat[i];
                }
                let res = residual(a, &x, b) / bnorm;
                if res <= tol {
                    return Ok((
                        x,
                        SolveStats {
                            iterations: it,
                            residual: res,
                        },
                    ));
                }
                r = sub_vec(b, &a.matvec(&x));
                continue 'restart;
            }
            let s_hat = precond(&s);
            let t = a.matvec(&s_hat);
            let tt = dot(&t, &t);
            omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
            for i in 0..n {
                x[i] += alpha * p_hat[i] + omega * s_hat[i];
                r[i] = s[i] - omega * t[i];
            }
            let res = norm(&r) / bnorm;
            if !res.is_finite() {
                return Err(Error::NonFinite("bicgstab iterate"));
            }
            if res <= tol {
                let true_res = residual(a, &x, b) / bnorm;
                if true_res <= tol {
                    return Ok((
                        x,
                        SolveStats {
                            iterations: it,
                            residual: true_res,
                        },
                    ));
                }
                if true_res < best.0 {
                    best = (true_res, x.clone());
                }
                r = sub_vec(b, &a.matvec(&x));
                continue 'restart;
            }
        }
    }
    let res = residual(a, &x, b) / bnorm;
    Err(Error::LinearSolver {
        solver: "bicgstab",
        iterations: maxit,
        residual: res.min(best.0),
    })
}
