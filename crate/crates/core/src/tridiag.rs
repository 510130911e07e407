//! Symmetric tridiagonal eigensolver: Sturm-sequence bisection for the
//! eigenvalues, inverse iteration for the eigenvectors.
//!
//! Only a handful of interior eigenpairs of a large matrix are ever needed
//! (the levels of the shallow well sit above ~160 deep-well levels), so a
//! full QR sweep would be wasted work.

/// Symmetric tridiagonal matrix stored as its diagonal and sub-diagonal.
#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert!(!diag.is_empty(), "empty tridiagonal matrix");
        assert_eq!(off.len() + 1, diag.len(), "off-diagonal length mismatch");
        Self { diag, off }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let tiny = f64::MIN_POSITIVE.sqrt();
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.diag.len() {
            if q == 0.0 {
                q = tiny;
            }
            q = self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / q;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.diag.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        let pad = 1e-12 * (lo.abs().max(hi.abs())).max(1.0);
        (lo - pad, hi + pad)
    }

    /// The `k`-th smallest eigenvalue (zero based), bisected to roundoff.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        assert!(k < self.dim(), "eigenvalue index out of range");
        let (mut lo, mut hi) = self.gershgorin();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Solve (T - shift) x = b with partial pivoting.
    fn shifted_solve(&self, shift: f64, rhs: &mut [f64]) {
        let n = self.dim();
        if n == 1 {
            let d = self.diag[0] - shift;
            rhs[0] /= if d == 0.0 { f64::EPSILON } else { d };
            return;
        }
        // LU of a tridiagonal with row interchanges: U has two superdiagonals.
        let mut d: Vec<f64> = self.diag.iter().map(|v| v - shift).collect();
        let mut du: Vec<f64> = self.off.clone();
        let mut dl: Vec<f64> = self.off.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swap = vec![false; n - 1];
        let scale = self
            .diag
            .iter()
            .map(|v| v.abs())
            .chain(self.off.iter().map(|v| v.abs()))
            .fold(0.0_f64, f64::max)
            .max(1.0);
        let floor = scale * f64::EPSILON;
        for i in 0..n - 1 {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = floor;
                }
                let m = dl[i] / d[i];
                dl[i] = m;
                d[i + 1] -= m * du[i];
            } else {
                swap[i] = true;
                let m = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = m;
                let tmp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = tmp - m * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -m;
                }
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = floor;
        }
        for i in 0..n - 1 {
            if swap[i] {
                rhs.swap(i, i + 1);
            }
            rhs[i + 1] -= dl[i] * rhs[i];
        }
        rhs[n - 1] /= d[n - 1];
        rhs[n - 2] = (rhs[n - 2] - du[n - 2] * rhs[n - 1]) / d[n - 2];
        for i in (0..n.saturating_sub(2)).rev() {
            rhs[i] = (rhs[i] - du[i] * rhs[i + 1] - du2[i] * rhs[i + 2]) / d[i];
        }
    }

    /// Unit eigenvector for an (accurately bisected) eigenvalue.
    pub fn eigenvector(&self, eigenvalue: f64, orthogonal_to: &[&[f64]]) -> Vec<f64> {
        let n = self.dim();
        // Deterministic, non-symmetric start vector.
        let mut v: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * ((i as f64) * 0.7548776662).fract())
            .collect();
        normalize(&mut v);
        for _ in 0..4 {
            self.shifted_solve(eigenvalue, &mut v);
            for w in orthogonal_to {
                let p: f64 = v.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(w.iter()).for_each(|(a, b)| *a -= p * b);
            }
            normalize(&mut v);
        }
        v
    }

    /// Eigenpairs with indices `first .. first + count` in ascending order.
    pub fn eigenpairs(&self, first: usize, count: usize) -> Vec<(f64, Vec<f64>)> {
        let values: Vec<f64> = (first..first + count).map(|k| self.eigenvalue(k)).collect();
        let scale = values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let mut out: Vec<(f64, Vec<f64>)> = Vec::with_capacity(count);
        for (i, &ev) in values.iter().enumerate() {
            // Re-orthogonalize only within clusters of nearly equal eigenvalues.
            let cluster: Vec<&[f64]> = out[..i]
                .iter()
                .filter(|(e, _)| (e - ev).abs() < 1e-7 * scale)
                .map(|(_, v)| v.as_slice())
                .collect();
            let vec = self.eigenvector(ev, &cluster);
            out.push((ev, vec));
        }
        out
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}
