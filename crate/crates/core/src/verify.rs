//! Brute-force oracles for tests: dense direct solves and finite differences.

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

const MAX_DENSE: usize = 200;

/// Dense row-major copy of a sparse system.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseSystem {
    pub n: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl DenseSystem {
    pub fn mirror(a: &SparseMatrix, b: &[f64]) -> Result<DenseSystem> {
        let n = a.n_rows();
        if a.n_cols() != n || b.len() != n {
            return Err(Error::InvalidInput("dense mirror needs a square system".into()));
        }
        if n > MAX_DENSE {
            return Err(Error::InvalidInput(format!(
                "{n} unknowns is too many for a dense oracle"
            )));
        }
        let mut dense = vec![0.0; n * n];
        for (i, j, v) in a.triplets() {
            dense[i * n + j] = v;
        }
        Ok(DenseSystem {
            n,
            a: dense,
            b: b.to_vec(),
        })
    }

    /// Gaussian elimination with partial pivoting.
    pub fn solve(&self) -> Result<Vec<f64>> {
        let n = self.n;
        let mut a = self.a.clone();
        let mut x = self.b.clone();
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for c in 0..n {
            let p = (c..n)
                .max_by(|&i, &j| a[i * n + c].abs().total_cmp(&a[j * n + c].abs()))
                .unwrap();
            if a[p * n + c].abs() <= 1e-14 * scale || a[p * n + c] == 0.0 {
                return Err(Error::Singular(c));
            }
            if p != c {
                for j in 0..n {
                    a.swap(c * n + j, p * n + j);
                }
                x.swap(c, p);
            }
            for r in c + 1..n {
                let f = a[r * n + c] / a[c * n + c];
                if f == 0.0 {
                    continue;
                }
                for j in c..n {
                    a[r * n + j] -= f * a[c * n + j];
                }
                x[r] -= f * x[c];
            }
        }
        for c in (0..n).rev() {
            let s: f64 = (c + 1..n).map(|j| a[c * n + j] * x[j]).sum();
            x[c] = (x[c] - s) / a[c * n + c];
        }
        Ok(x)
    }
}

pub fn dense_mirror_solve(a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    DenseSystem::mirror(a, b)?.solve()
}

/// Outcome of a finite-difference step sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct FdEstimate {
    pub estimate: f64,
    /// Step at which the estimate was taken.
    pub eps: f64,
    /// Relative spread of the flattest consecutive pair.
    pub plateau: f64,
    /// Set when one-sided slopes stay apart as `eps` shrinks.
    pub kink: bool,
    /// `(eps, central difference)` for every step tried.
    pub sweep: Vec<(f64, f64)>,
}

/// Steps `1e-3, 1e-3.5, …, 1e-7`.
pub fn default_eps_sweep() -> Vec<f64> {
    (0..9).map(|i| 10f64.powf(-3.0 - 0.5 * i as f64)).collect()
}

/// Central-difference derivative of `f` at `x` along `h`.
pub fn fd_directional<F>(mut f: F, x: &[f64], h: &[f64], eps_sweep: &[f64]) -> Result<FdEstimate>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if eps_sweep.len() < 2 || x.len() != h.len() {
        return Err(Error::InvalidInput(
            "fd sweep needs two steps and matching shapes".into(),
        ));
    }
    let f0 = f(x)?;
    if !f0.is_finite() {
        return Err(Error::NonFinite("fd base value"));
    }
    let mut shifted = |eps: f64| -> Result<f64> {
        let y: Vec<f64> = x.iter().zip(h).map(|(a, b)| a + eps * b).collect();
        let v = f(&y)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("fd sample"))
        }
    };
    let mut sweep = Vec::with_capacity(eps_sweep.len());
    let mut asym = Vec::with_capacity(eps_sweep.len());
    for &eps in eps_sweep {
        let (fp, fm) = (shifted(eps)?, shifted(-eps)?);
        let fwd = (fp - f0) / eps;
        let bwd = (f0 - fm) / eps;
        sweep.push((eps, 0.5 * (fwd + bwd)));
        asym.push((fwd - bwd).abs());
    }

    let (mut best, mut plateau) = (0, f64::INFINITY);
    for i in 0..sweep.len() - 1 {
        let (a, b) = (sweep[i].1, sweep[i + 1].1);
        let spread = (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        let spread = if a == b { 0.0 } else { spread };
        if spread < plateau {
            plateau = spread;
            best = i + 1;
        }
    }

    // A smooth f has one-sided slopes converging at rate eps; at a kink their
    // gap stays of the order of the slopes themselves.
    let last = sweep.len() - 1;
    let (eps_min, est_min) = sweep[last];
    let slope_scale = est_min.abs() + 0.5 * asym[last];
    let noise = 4.0 * f64::EPSILON * f0.abs().max(1e-300) / eps_min;
    let kink = asym[last] > 0.1 * asym[0] && asym[last] > 0.1 * slope_scale && asym[last] > 10.0 * noise;

    Ok(FdEstimate {
        estimate: sweep[best].1,
        eps: sweep[best].0,
        plateau,
        kink,
        sweep,
    })
}
