//! Symmetric tridiagonal eigenproblems: Sturm-sequence bisection for
//! eigenvalues and shifted inverse iteration for eigenvectors.

/// Symmetric tridiagonal matrix with `diag.len() == n` and `off.len() == n - 1`.
#[derive(Clone, Debug)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert!(!diag.is_empty() && off.len() + 1 == diag.len());
        Self { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    fn pivmin(&self) -> f64 {
        let m = self.off.iter().fold(1.0f64, |m, &e| m.max(e * e));
        f64::MIN_POSITIVE * m
    }

    /// Number of eigenvalues strictly below `lambda`.
    pub fn sturm_count(&self, lambda: f64) -> usize {
        let pivmin = self.pivmin();
        let mut count = 0;
        let mut q = self.diag[0] - lambda;
        for i in 0..self.len() {
            if i > 0 {
                q = self.diag[i] - lambda - self.off[i - 1] * self.off[i - 1] / q;
            }
            if q.abs() < pivmin {
                q = -pivmin;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `k`-th smallest eigenvalue (0-based), bisected to full precision.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        assert!(k < self.len());
        let (mut lo, mut hi) = self.gershgorin();
        let pad = 1e-14 * lo.abs().max(hi.abs()).max(1.0);
        lo -= pad;
        hi += pad;
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.sturm_count(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Eigenvector for an accurate eigenvalue estimate, unit Euclidean norm.
    pub fn eigenvector(&self, lambda: f64, iterations: usize) -> Vec<f64> {
        let n = self.len();
        let lu = ShiftedLu::new(self, lambda);
        // Deterministic, non-symmetric start vector.
        let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
        let mut v: Vec<f64> = (0..n)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                0.5 + (state >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect();
        for _ in 0..iterations.max(1) {
            lu.solve(&mut v);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in &mut v {
                *x /= norm;
            }
        }
        v
    }
}

/// LU factorization of `T - σI` with partial pivoting (one extra
/// superdiagonal of fill-in).
struct ShiftedLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl ShiftedLu {
    fn new(t: &SymTridiag, sigma: f64) -> Self {
        let n = t.len();
        let mut dl = t.off.clone();
        let mut du = t.off.clone();
        let mut d: Vec<f64> = t.diag.iter().map(|&x| x - sigma).collect();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        let scale = t.gershgorin().1.abs().max(t.gershgorin().0.abs()).max(1e-300);
        let tiny = f64::EPSILON * scale;
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        for x in &mut d {
            if x.abs() < tiny {
                *x = if *x < 0.0 { -tiny } else { tiny };
            }
        }
        Self {
            dl,
            d,
            du,
            du2,
            swapped,
        }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> SymTridiag {
        SymTridiag::new(vec![2.0; n], vec![-1.0; n - 1])
    }

    #[test]
    fn discrete_laplacian_spectrum() {
        let n = 50;
        let t = laplacian(n);
        for k in 0..5 {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((t.eigenvalue(k) - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn eigenvector_satisfies_equation() {
        let n = 40;
        let diag: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin() + 3.0).collect();
        let off: Vec<f64> = (0..n - 1).map(|i| -0.5 - 0.01 * i as f64).collect();
        let t = SymTridiag::new(diag, off);
        let lam = t.eigenvalue(2);
        let v = t.eigenvector(lam, 2);
        let mut res: f64 = 0.0;
        for i in 0..n {
            let mut tv = t.diag[i] * v[i];
            if i > 0 {
                tv += t.off[i - 1] * v[i - 1];
            }
            if i + 1 < n {
                tv += t.off[i] * v[i + 1];
            }
            res = res.max((tv - lam * v[i]).abs());
        }
        assert!(res < 1e-12, "residual {res}");
    }

    #[test]
    fn sturm_count_is_monotone() {
        let t = laplacian(30);
        let mut last = 0;
        for j in 0..=40 {
            let c = t.sturm_count(j as f64 * 0.1);
            assert!(c >= last);
            last = c;
        }
        assert_eq!(t.sturm_count(4.1), 30);
    }
}
