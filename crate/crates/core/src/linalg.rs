//! Banded solvers used throughout: tridiagonal LU (no pivoting, the matrices
//! we factor are diagonally dominant or symmetric definite after shifting),
//! Sturm counts for symmetric tridiagonals, and a pentadiagonal LU with
//! partial pivoting for the squared linearized pencil.

use num_traits::NumAssign;

/// Tridiagonal matrix with constant off diagonals, stored by its diagonal.
#[derive(Debug, Clone)]
pub struct Tridiag<T> {
    pub sub: Vec<T>,
    pub diag: Vec<T>,
    pub sup: Vec<T>,
}

impl<T: Copy + NumAssign> Tridiag<T> {
    pub fn new(sub: Vec<T>, diag: Vec<T>, sup: Vec<T>) -> Self {
        debug_assert_eq!(sub.len(), diag.len());
        debug_assert_eq!(sup.len(), diag.len());
        Tridiag { sub, diag, sup }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `sub[i]` couples row i to i-1, `sup[i]` couples row i to i+1.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let n = self.len();
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.sub[i] * x[i - 1];
            }
            if i + 1 < n {
                s += self.sup[i] * x[i + 1];
            }
            y.push(s);
        }
        y
    }

    pub fn factor(&self) -> TridiagLu<T> {
        let n = self.len();
        let mut cp = vec![T::zero(); n];
        let mut inv = vec![T::zero(); n];
        let mut denom = self.diag[0];
        inv[0] = T::one() / denom;
        cp[0] = self.sup[0] * inv[0];
        for i in 1..n {
            denom = self.diag[i] - self.sub[i] * cp[i - 1];
            inv[i] = T::one() / denom;
            cp[i] = self.sup[i] * inv[i];
        }
        TridiagLu {
            sub: self.sub.clone(),
            cp,
            inv,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TridiagLu<T> {
    sub: Vec<T>,
    cp: Vec<T>,
    inv: Vec<T>,
}

impl<T: Copy + NumAssign> TridiagLu<T> {
    pub fn solve_in_place(&self, x: &mut [T]) {
        let n = self.inv.len();
        x[0] *= self.inv[0];
        for i in 1..n {
            x[i] = (x[i] - self.sub[i] * x[i - 1]) * self.inv[i];
        }
        for i in (0..n - 1).rev() {
            let t = self.cp[i] * x[i + 1];
            x[i] -= t;
        }
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Mixed solve: real factorisation applied to a complex right-hand side.
pub fn solve_real_complex(
    lu: &TridiagLu<f64>,
    rhs: &[num_complex::Complex64],
) -> Vec<num_complex::Complex64> {
    let re: Vec<f64> = rhs.iter().map(|z| z.re).collect();
    let im: Vec<f64> = rhs.iter().map(|z| z.im).collect();
    let re = lu.solve(&re);
    let im = lu.solve(&im);
    re.into_iter()
        .zip(im)
        .map(|(a, b)| num_complex::Complex64::new(a, b))
        .collect()
}

/// Number of eigenvalues strictly below `x` of a symmetric tridiagonal
/// matrix (`off[i]` couples i and i+1).
pub fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = diag[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        let b2 = off[i - 1] * off[i - 1];
        let prev = if q == 0.0 { f64::EPSILON * (1.0 + b2.sqrt()) } else { q };
        q = diag[i] - x - b2 / prev;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// k-th smallest eigenvalue (0-based) of a symmetric tridiagonal by bisection.
pub fn tridiag_eigenvalue(diag: &[f64], off: &[f64], k: usize) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..diag.len() {
        let mut rad = 0.0;
        if i > 0 {
            rad += off[i - 1].abs();
        }
        if i + 1 < diag.len() {
            rad += off[i].abs();
        }
        lo = lo.min(diag[i] - rad);
        hi = hi.max(diag[i] + rad);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(diag, off, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// General banded matrix with `kl` sub and `ku` super diagonals,
/// LU-factored with partial pivoting (LAPACK gbtrf layout, by rows).
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    width: usize,
    // row-major band storage: row i holds columns i-kl ..= i+ku+kl
    a: Vec<f64>,
    piv: Vec<usize>,
    l: Vec<f64>,
}

impl BandLu {
    /// `entry(i, j)` is called for |i-j| within the band.
    pub fn factor(n: usize, kl: usize, ku: usize, entry: impl Fn(usize, usize) -> f64) -> Self {
        let width = kl + ku + kl + 1;
        let mut a = vec![0.0; n * width];
        let idx = |i: usize, j: usize| i * width + (j + kl - i);
        for i in 0..n {
            let j0 = i.saturating_sub(kl);
            let j1 = (i + ku).min(n - 1);
            for j in j0..=j1 {
                a[idx(i, j)] = entry(i, j);
            }
        }
        let mut piv = vec![0; n];
        let mut l = vec![0.0; n * kl];
        for k in 0..n {
            let imax = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = a[idx(k, k)].abs();
            for i in k + 1..=imax {
                let v = a[idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            let jmax = (k + ku + kl).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    a.swap(idx(k, j), idx(p, j));
                }
            }
            let pivot = a[idx(k, k)];
            for i in k + 1..=imax {
                let f = if pivot == 0.0 { 0.0 } else { a[idx(i, k)] / pivot };
                l[k * kl + (i - k - 1)] = f;
                a[idx(i, k)] = 0.0;
                if f != 0.0 {
                    for j in k + 1..=jmax {
                        let t = a[idx(k, j)];
                        a[idx(i, j)] -= f * t;
                    }
                }
            }
        }
        BandLu {
            n,
            kl,
            width,
            a,
            piv,
            l,
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, kl, width) = (self.n, self.kl, self.width);
        let idx = |i: usize, j: usize| i * width + (j + kl - i);
        let mut x = rhs.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let imax = (k + kl).min(n - 1);
            let xk = x[k];
            for i in k + 1..=imax {
                x[i] -= self.l[k * kl + (i - k - 1)] * xk;
            }
        }
        let ub = width - kl - 1;
        for i in (0..n).rev() {
            let mut s = x[i];
            let jmax = (i + ub).min(n - 1);
            for j in i + 1..=jmax {
                s -= self.a[idx(i, j)] * x[j];
            }
            x[i] = s / self.a[idx(i, i)];
        }
        x
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiag_solve_roundtrip() {
        let n = 50;
        let m = Tridiag::new(
            (0..n).map(|i| -1.0 - 0.01 * i as f64).collect(),
            (0..n).map(|i| 4.0 + (i as f64).sin()).collect(),
            (0..n).map(|i| -0.5 + 0.02 * i as f64).collect(),
        );
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
        let b = m.apply(&x);
        let y = m.factor().solve(&b);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sturm_matches_known_spectrum() {
        // -[1 -2 1] with Dirichlet ends has eigenvalues 2 - 2 cos(k pi/(n+1))
        let n = 40;
        let d = vec![2.0; n];
        let o = vec![-1.0; n - 1];
        for k in [0, 5, 39] {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((tridiag_eigenvalue(&d, &o, k) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn band_lu_needs_pivoting() {
        let n = 30;
        let entry = |i: usize, j: usize| {
            let d = j as i64 - i as i64;
            match d {
                0 => if i % 3 == 0 { 0.0 } else { 1.0 + i as f64 * 0.1 },
                -2 => 0.7,
                -1 => 2.5,
                1 => -1.3,
                2 => 0.4,
                _ => 0.0,
            }
        };
        let lu = BandLu::factor(n, 2, 2, entry);
        let x: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64).sqrt()).collect();
        let mut b = vec![0.0; n];
        for i in 0..n {
            for j in i.saturating_sub(2)..=(i + 2).min(n - 1) {
                b[i] += entry(i, j) * x[j];
            }
        }
        let y = lu.solve(&b);
        for (a, c) in x.iter().zip(&y) {
            assert!((a - c).abs() < 1e-10, "{a} {c}");
        }
    }
}
