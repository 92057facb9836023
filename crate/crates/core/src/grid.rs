//! Uniform radial grid and complex radial fields.
//!
//! Nodes sit at r_i = (i+1) h, i = 0..n, with h = r_max / n. The last node is
//! a Dirichlet node (the field vanishes there). Most numerics act on the
//! reduced unknowns w_i = r_i f_i at the n-1 interior nodes, where the radial
//! Laplacian becomes the plain second difference divided by r.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FOUR_PI: f64 = 4.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    n_points: usize,
    r_max: f64,
}

impl RadialGrid {
    pub fn new(n_points: usize, r_max: f64) -> Result<Self> {
        if n_points < 8 {
            return Err(Error::InvalidGrid(format!("need at least 8 points, got {n_points}")));
        }
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(Error::InvalidGrid(format!("r_max must be positive, got {r_max}")));
        }
        Ok(RadialGrid { n_points, r_max })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn spacing(&self) -> f64 {
        self.r_max / self.n_points as f64
    }

    /// Number of interior unknowns.
    pub fn interior(&self) -> usize {
        self.n_points - 1
    }

    pub fn node(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.node(i)).collect()
    }

    pub fn interior_nodes(&self) -> Vec<f64> {
        (0..self.interior()).map(|i| self.node(i)).collect()
    }

    /// Quadrature weight of the reduced variables: <f|g> = wq * sum w_f w_g.
    pub fn reduced_weight(&self) -> f64 {
        FOUR_PI * self.spacing()
    }

    fn check_same(&self, other: &RadialGrid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Complex field on a radial grid, stored by nodal values f(r_i).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialField {
    grid: RadialGrid,
    values: Vec<Complex64>,
}

impl RadialField {
    pub fn zeros(grid: RadialGrid) -> Self {
        RadialField {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.n_points],
        }
    }

    pub fn from_values(grid: RadialGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n_points {
            return Err(Error::GridMismatch(format!(
                "{} values for {} points",
                values.len(),
                grid.n_points
            )));
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("field values"));
        }
        let mut f = RadialField { grid, values };
        f.enforce_boundary();
        Ok(f)
    }

    pub fn from_fn(grid: RadialGrid, f: impl Fn(f64) -> Complex64) -> Self {
        let mut out = RadialField {
            grid,
            values: grid.nodes().into_iter().map(f).collect(),
        };
        out.enforce_boundary();
        out
    }

    pub fn from_real_fn(grid: RadialGrid, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, |r| Complex64::new(f(r), 0.0))
    }

    pub fn from_real(grid: RadialGrid, re: &[f64]) -> Self {
        let mut values: Vec<Complex64> = re.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        values.resize(grid.n_points, Complex64::new(0.0, 0.0));
        let mut f = RadialField { grid, values };
        f.enforce_boundary();
        f
    }

    pub fn from_parts(grid: RadialGrid, re: &[f64], im: &[f64]) -> Self {
        let mut values: Vec<Complex64> =
            re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect();
        values.resize(grid.n_points, Complex64::new(0.0, 0.0));
        let mut f = RadialField { grid, values };
        f.enforce_boundary();
        f
    }

    /// Build from reduced interior unknowns w = r f.
    pub fn from_reduced(grid: RadialGrid, w: &[Complex64]) -> Self {
        let mut values = Vec::with_capacity(grid.n_points);
        for (i, wi) in w.iter().enumerate().take(grid.interior()) {
            values.push(wi / grid.node(i));
        }
        values.resize(grid.n_points, Complex64::new(0.0, 0.0));
        RadialField { grid, values }
    }

    pub fn from_reduced_real(grid: RadialGrid, w: &[f64]) -> Self {
        let mut values = Vec::with_capacity(grid.n_points);
        for (i, wi) in w.iter().enumerate().take(grid.interior()) {
            values.push(Complex64::new(wi / grid.node(i), 0.0));
        }
        values.resize(grid.n_points, Complex64::new(0.0, 0.0));
        RadialField { grid, values }
    }

    fn enforce_boundary(&mut self) {
        if let Some(last) = self.values.last_mut() {
            *last = Complex64::new(0.0, 0.0);
        }
    }

    pub fn grid(&self) -> RadialGrid {
        self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> Complex64 {
        self.values[i]
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.im).collect()
    }

    pub fn reduced(&self) -> Vec<Complex64> {
        (0..self.grid.interior())
            .map(|i| self.values[i] * self.grid.node(i))
            .collect()
    }

    pub fn reduced_re(&self) -> Vec<f64> {
        (0..self.grid.interior())
            .map(|i| self.values[i].re * self.grid.node(i))
            .collect()
    }

    pub fn reduced_im(&self) -> Vec<f64> {
        (0..self.grid.interior())
            .map(|i| self.values[i].im * self.grid.node(i))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Complex pairing (f|g) = int f conj(g).
    pub fn pairing(&self, other: &RadialField) -> Complex64 {
        debug_assert_eq!(self.grid, other.grid);
        let h = self.grid.spacing();
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..self.grid.interior() {
            let r = self.grid.node(i);
            s += self.values[i] * other.values[i].conj() * (r * r);
        }
        s * (FOUR_PI * h)
    }

    /// Real inner product <f|g> = Re int f conj(g).
    pub fn inner(&self, other: &RadialField) -> f64 {
        self.pairing(other).re
    }

    pub fn try_inner(&self, other: &RadialField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(self.inner(other))
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.inner(self)
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    pub fn l4_norm(&self) -> f64 {
        let h = self.grid.spacing();
        let mut s = 0.0;
        for i in 0..self.grid.interior() {
            let r = self.grid.node(i);
            s += self.values[i].norm_sqr().powi(2) * r * r;
        }
        (FOUR_PI * h * s).powf(0.25)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// ||grad f||^2 as the summed squared first differences of w = r f.
    /// This equals <-Lap f | f> exactly for the discrete Laplacian below.
    pub fn grad_norm_sq(&self) -> f64 {
        let w = self.reduced();
        grad_sq_reduced(&w, self.grid.spacing())
    }

    /// Real H1 inner product <grad f|grad g> + <f|g>.
    pub fn h1_inner(&self, other: &RadialField) -> f64 {
        let h = self.grid.spacing();
        let a = self.reduced();
        let b = other.reduced();
        let m = a.len();
        let mut s = 0.0;
        for i in 0..=m {
            let da = a.get(i).copied().unwrap_or_default() - if i > 0 { a[i - 1] } else { Complex64::default() };
            let db = b.get(i).copied().unwrap_or_default() - if i > 0 { b[i - 1] } else { Complex64::default() };
            s += (da * db.conj()).re;
        }
        FOUR_PI * s / h + self.inner(other)
    }

    pub fn h1_norm_sq(&self) -> f64 {
        self.grad_norm_sq() + self.l2_norm_sq()
    }

    pub fn h1_norm(&self) -> f64 {
        self.h1_norm_sq().sqrt()
    }

    /// omega-adapted H1 norm: (omega^{-1/2} ||grad f||^2 + omega^{1/2} ||f||^2)^{1/2}.
    pub fn h1_omega_norm(&self, omega: f64) -> f64 {
        (self.grad_norm_sq() / omega.sqrt() + omega.sqrt() * self.l2_norm_sq()).sqrt()
    }

    /// Proxy for the homogeneous H^{1/2} norm, (||f||_2 ||grad f||_2)^{1/2},
    /// which bounds it from above by interpolation.
    pub fn hdot_half_proxy(&self) -> f64 {
        (self.l2_norm() * self.grad_norm_sq().sqrt()).sqrt()
    }

    pub fn laplacian(&self) -> RadialField {
        let w = self.reduced();
        let d2 = second_difference(&w, self.grid.spacing());
        RadialField::from_reduced(self.grid, &d2)
    }

    /// r d/dr f via centred differences of w: r f' = w' - w / r.
    pub fn r_derivative(&self) -> RadialField {
        let w = self.reduced();
        let h = self.grid.spacing();
        let m = w.len();
        let mut f = RadialField::zeros(self.grid);
        for i in 0..m {
            let wl = if i > 0 { w[i - 1] } else { Complex64::default() };
            let wr = if i + 1 < m { w[i + 1] } else { Complex64::default() };
            f.values[i] = (wr - wl) / (2.0 * h) - w[i] / self.grid.node(i);
        }
        f
    }

    pub fn scale(&self, a: f64) -> RadialField {
        self.map(|z| z * a)
    }

    pub fn scale_complex(&self, a: Complex64) -> RadialField {
        self.map(|z| z * a)
    }

    pub fn rotate(&self, theta: f64) -> RadialField {
        self.scale_complex(Complex64::from_polar(1.0, theta))
    }

    pub fn mul_i(&self) -> RadialField {
        self.map(|z| Complex64::new(-z.im, z.re))
    }

    pub fn conj(&self) -> RadialField {
        self.map(|z| z.conj())
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> RadialField {
        RadialField {
            grid: self.grid,
            values: self.values.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn zip_map(&self, other: &RadialField, f: impl Fn(Complex64, Complex64) -> Complex64) -> RadialField {
        debug_assert_eq!(self.grid, other.grid);
        RadialField {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, other: &RadialField) -> RadialField {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &RadialField) -> RadialField {
        self.zip_map(other, |a, b| a - b)
    }

    /// self + a * other
    pub fn axpy(&self, a: f64, other: &RadialField) -> RadialField {
        self.zip_map(other, |x, y| x + y * a)
    }

    /// Sample w = r f at an arbitrary radius by four-point Lagrange
    /// interpolation, using the odd extension of w through r = 0.
    pub fn reduced_at(&self, r: f64) -> Complex64 {
        let h = self.grid.spacing();
        let n = self.grid.n_points as i64;
        let wk = |k: i64| -> Complex64 {
            // node index k corresponds to radius (k+1) h; k = -1 is r = 0
            let j = k + 1;
            if j == 0 || j >= n {
                Complex64::default()
            } else if j < 0 {
                let jj = -j;
                if jj >= n {
                    Complex64::default()
                } else {
                    -self.values[(jj - 1) as usize] * (jj as f64 * h)
                }
            } else {
                self.values[(j - 1) as usize] * (j as f64 * h)
            }
        };
        if r >= self.grid.r_max || r <= -self.grid.r_max {
            return Complex64::default();
        }
        let x = r / h - 1.0; // fractional node index
        let k1 = x.floor() as i64;
        let t = x - k1 as f64;
        let (p0, p1, p2, p3) = (wk(k1 - 1), wk(k1), wk(k1 + 1), wk(k1 + 2));
        let c0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
        let c1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
        let c2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
        let c3 = (t + 1.0) * t * (t - 1.0) / 6.0;
        p0 * c0 + p1 * c1 + p2 * c2 + p3 * c3
    }

    /// Interpolated value f(r) for r > 0.
    pub fn value_at(&self, r: f64) -> Complex64 {
        if r <= 0.0 {
            return self.value_at(1e-12);
        }
        self.reduced_at(r) / r
    }

    /// Resample onto another grid (zero outside the source support).
    pub fn resample(&self, grid: RadialGrid) -> RadialField {
        let w: Vec<Complex64> = grid.interior_nodes().iter().map(|&r| self.reduced_at(r)).collect();
        RadialField::from_reduced(grid, &w)
    }

    /// S_omega f (r) = omega^{-1/2} f(omega^{-1/2} r), sampled on the same grid.
    pub fn rescale(&self, omega: f64) -> Result<RadialField> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::BadInput(format!("rescale factor must be positive, got {omega}")));
        }
        let s = omega.powf(-0.5);
        let g = self.grid;
        // w_new(r) = r S f (r) = w(s r)
        let w: Vec<Complex64> = g.interior_nodes().iter().map(|&r| self.reduced_at(s * r)).collect();
        Ok(RadialField::from_reduced(g, &w))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "r,re,im")?;
        for (i, z) in self.values.iter().enumerate() {
            writeln!(out, "{:.17e},{:.17e},{:.17e}", self.grid.node(i), z.re, z.im)?;
        }
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<RadialField> {
        let rd = BufReader::new(std::fs::File::open(path)?);
        let mut rs = Vec::new();
        let mut vals = Vec::new();
        for (ln, line) in rd.lines().enumerate() {
            let line = line?;
            if ln == 0 && line.starts_with('r') {
                continue;
            }
            let parts: Vec<&str> = line.trim().split(',').collect();
            if parts.len() != 3 {
                return Err(Error::BadInput(format!("line {}: expected 3 columns", ln + 1)));
            }
            let p = |s: &str| s.parse::<f64>().map_err(|e| Error::BadInput(format!("line {}: {e}", ln + 1)));
            rs.push(p(parts[0])?);
            vals.push(Complex64::new(p(parts[1])?, p(parts[2])?));
        }
        let r_max = *rs.last().ok_or_else(|| Error::BadInput("empty csv".into()))?;
        let grid = RadialGrid::new(vals.len(), r_max)?;
        RadialField::from_values(grid, vals)
    }

    /// Little-endian binary: u64 n_points, f64 r_max, then (re, im) pairs.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(&(self.grid.n_points as u64).to_le_bytes())?;
        out.write_all(&self.grid.r_max.to_le_bytes())?;
        for z in &self.values {
            out.write_all(&z.re.to_le_bytes())?;
            out.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<RadialField> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        if buf.len() < 16 {
            return Err(Error::BadInput("binary field too short".into()));
        }
        let word = |k: usize| -> [u8; 8] { buf[8 * k..8 * k + 8].try_into().unwrap() };
        let n = u64::from_le_bytes(word(0)) as usize;
        let r_max = f64::from_le_bytes(word(1));
        if buf.len() != 16 + 16 * n {
            return Err(Error::BadInput(format!("binary field: expected {} bytes, got {}", 16 + 16 * n, buf.len())));
        }
        let grid = RadialGrid::new(n, r_max)?;
        let vals = (0..n)
            .map(|i| Complex64::new(f64::from_le_bytes(word(2 + 2 * i)), f64::from_le_bytes(word(3 + 2 * i))))
            .collect();
        RadialField::from_values(grid, vals)
    }
}

/// (w_{i-1} - 2 w_i + w_{i+1}) / h^2 / r_i  with w_{-1} = w_{m} = 0, returned
/// in reduced form (multiplied back by r_i), i.e. the plain second difference.
pub fn second_difference<T>(w: &[T], h: f64) -> Vec<T>
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T> + Default,
{
    let m = w.len();
    let inv = 1.0 / (h * h);
    (0..m)
        .map(|i| {
            let l = if i > 0 { w[i - 1] } else { T::default() };
            let r = if i + 1 < m { w[i + 1] } else { T::default() };
            (l + r - w[i] - w[i]) * inv
        })
        .collect()
}

pub fn grad_sq_reduced(w: &[Complex64], h: f64) -> f64 {
    let mut s = 0.0;
    let mut prev = Complex64::default();
    for wi in w {
        s += (wi - prev).norm_sqr();
        prev = *wi;
    }
    s += prev.norm_sqr();
    FOUR_PI * s / h
}

pub fn grad_sq_reduced_real(w: &[f64], h: f64) -> f64 {
    let mut s = 0.0;
    let mut prev = 0.0;
    for wi in w {
        s += (wi - prev) * (wi - prev);
        prev = *wi;
    }
    s += prev * prev;
    FOUR_PI * s / h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(grid: RadialGrid) -> RadialField {
        RadialField::from_real_fn(grid, |r| (-r * r).exp())
    }

    #[test]
    fn laplacian_is_second_order() {
        let mut errs = Vec::new();
        for n in [512, 1024, 2048] {
            let g = RadialGrid::new(n, 10.0).unwrap();
            let lap = gauss(g).laplacian();
            let exact = RadialField::from_real_fn(g, |r| (4.0 * r * r - 6.0) * (-r * r).exp());
            errs.push(lap.sub(&exact).l2_norm());
        }
        let s1 = (errs[0] / errs[1]).log2();
        let s2 = (errs[1] / errs[2]).log2();
        assert!((s1 - 2.0).abs() < 0.1 && (s2 - 2.0).abs() < 0.1, "{s1} {s2}");
    }

    #[test]
    fn gradient_matches_laplacian_pairing() {
        let g = RadialGrid::new(300, 8.0).unwrap();
        let f = RadialField::from_fn(g, |r| Complex64::new((-r * r / 3.0).exp(), r * (-r).exp()));
        let lhs = f.grad_norm_sq();
        let rhs = -f.laplacian().inner(&f);
        assert!((lhs - rhs).abs() < 1e-10 * lhs);
    }

    #[test]
    fn rescale_scales_mass() {
        let g = RadialGrid::new(2048, 30.0).unwrap();
        let f = gauss(g);
        let s = f.rescale(4.0).unwrap();
        let expect = f.l2_norm_sq() * 4f64.sqrt();
        assert!((s.l2_norm_sq() / expect - 1.0).abs() < 1e-6);
        let back = s.rescale(0.25).unwrap();
        assert!(back.sub(&f).l2_norm() < 1e-6 * f.l2_norm());
    }

    #[test]
    fn io_roundtrips() {
        let g = RadialGrid::new(64, 5.0).unwrap();
        let f = RadialField::from_fn(g, |r| Complex64::new(r.sin(), (-r).exp()));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        f.write_binary(&p).unwrap();
        assert_eq!(RadialField::read_binary(&p).unwrap(), f);
        let p = dir.path().join("f.csv");
        f.write_csv(&p).unwrap();
        let back = RadialField::read_csv(&p).unwrap();
        assert!(back.sub(&f).max_abs() < 1e-15);
    }
}
