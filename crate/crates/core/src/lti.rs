//! Plants, frequency grids, matrix-valued spectra and the two closed-loop norms.
//!
//! Everything downstream works with samples on a uniform grid over the unit
//! circle. The plant is `x_{t+1} = A x_t + Bu u_t + Bw w_t` with unit state and
//! input weights; general positive-definite weights are folded into the
//! matrices at ingestion time. The disturbance is a single column.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Deserialize;
use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::fft;
use crate::util::fmt_sig;

/// Uniform grid `omega_k = 2 pi k / n` on the unit circle; `n` is a power of two.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrequencyGrid {
    n: usize,
}

pub const DEFAULT_GRID: usize = 1024;

impl FrequencyGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(n));
        }
        Ok(FrequencyGrid { n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn omega(&self, k: usize) -> f64 {
        2.0 * PI * (k % self.n) as f64 / self.n as f64
    }

    pub fn omegas(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |k| self.omega(k))
    }

    /// Grid with twice the resolution.
    pub fn refined(&self) -> Self {
        FrequencyGrid { n: 2 * self.n }
    }
}

/// Matrix-valued samples on a [`FrequencyGrid`].
#[derive(Clone, Debug)]
pub struct GridSpectrum {
    grid: FrequencyGrid,
    rows: usize,
    cols: usize,
    values: Vec<DMatrix<Complex64>>,
}

impl GridSpectrum {
    pub fn from_fn<F>(grid: FrequencyGrid, rows: usize, cols: usize, mut f: F) -> Self
    where
        F: FnMut(usize, f64) -> DMatrix<Complex64>,
    {
        let values: Vec<_> = (0..grid.len())
            .map(|k| {
                let m = f(k, grid.omega(k));
                assert_eq!((m.nrows(), m.ncols()), (rows, cols), "sample shape");
                m
            })
            .collect();
        GridSpectrum {
            grid,
            rows,
            cols,
            values,
        }
    }

    pub fn from_scalar_fn<F>(grid: FrequencyGrid, mut f: F) -> Self
    where
        F: FnMut(usize, f64) -> Complex64,
    {
        Self::from_fn(grid, 1, 1, |k, w| DMatrix::from_element(1, 1, f(k, w)))
    }

    pub fn from_real_samples(grid: FrequencyGrid, samples: &[f64]) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} samples on a grid of {}",
                samples.len(),
                grid.len()
            )));
        }
        Ok(Self::from_scalar_fn(grid, |k, _| {
            Complex64::new(samples[k], 0.0)
        }))
    }

    pub fn constant(grid: FrequencyGrid, value: DMatrix<Complex64>) -> Self {
        let (rows, cols) = (value.nrows(), value.ncols());
        GridSpectrum {
            grid,
            rows,
            cols,
            values: vec![value; grid.len()],
        }
    }

    pub fn grid(&self) -> FrequencyGrid {
        self.grid
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, k: usize) -> &DMatrix<Complex64> {
        &self.values[k]
    }

    pub fn scalar(&self, k: usize) -> Complex64 {
        debug_assert_eq!((self.rows, self.cols), (1, 1));
        self.values[k][(0, 0)]
    }

    /// Scalar sample as a real number; the imaginary part must be noise.
    pub fn real_scalar(&self, k: usize) -> f64 {
        let v = self.scalar(k);
        debug_assert!(v.im.abs() <= 1e-9 * (1.0 + v.re.abs()), "non-real sample");
        v.re
    }

    pub fn real_samples(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.real_scalar(k)).collect()
    }

    pub fn map<F>(&self, f: F) -> GridSpectrum
    where
        F: FnMut(&DMatrix<Complex64>) -> DMatrix<Complex64>,
    {
        let values: Vec<_> = self.values.iter().map(f).collect();
        let (rows, cols) = (values[0].nrows(), values[0].ncols());
        GridSpectrum {
            grid: self.grid,
            rows,
            cols,
            values,
        }
    }

    fn check_grid(&self, other: &GridSpectrum) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "grids of {} and {} points",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }

    /// Pointwise matrix product.
    pub fn mul(&self, rhs: &GridSpectrum) -> Result<GridSpectrum> {
        self.check_grid(rhs)?;
        if self.cols != rhs.rows {
            return Err(Error::GridMismatch(format!(
                "product of {}x{} and {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(GridSpectrum {
            grid: self.grid,
            rows: self.rows,
            cols: rhs.cols,
            values: self
                .values
                .iter()
                .zip(rhs.values.iter())
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    pub fn add(&self, rhs: &GridSpectrum) -> Result<GridSpectrum> {
        self.check_grid(rhs)?;
        if (self.rows, self.cols) != (rhs.rows, rhs.cols) {
            return Err(Error::GridMismatch("sum of different shapes".into()));
        }
        Ok(GridSpectrum {
            grid: self.grid,
            rows: self.rows,
            cols: self.cols,
            values: self
                .values
                .iter()
                .zip(rhs.values.iter())
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, rhs: &GridSpectrum) -> Result<GridSpectrum> {
        self.check_grid(rhs)?;
        if (self.rows, self.cols) != (rhs.rows, rhs.cols) {
            return Err(Error::GridMismatch("difference of different shapes".into()));
        }
        Ok(GridSpectrum {
            grid: self.grid,
            rows: self.rows,
            cols: self.cols,
            values: self
                .values
                .iter()
                .zip(rhs.values.iter())
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// Pointwise conjugate transpose (the `*` of a spectrum).
    pub fn adjoint(&self) -> GridSpectrum {
        GridSpectrum {
            grid: self.grid,
            rows: self.cols,
            cols: self.rows,
            values: self.values.iter().map(|m| m.adjoint()).collect(),
        }
    }

    /// Pointwise inverse of a square spectrum.
    pub fn inverse(&self) -> Result<GridSpectrum> {
        if self.rows != self.cols {
            return Err(Error::GridMismatch(
                "inverse of a non-square spectrum".into(),
            ));
        }
        let mut values = Vec::with_capacity(self.len());
        for (k, m) in self.values.iter().enumerate() {
            match m.clone().try_inverse() {
                Some(inv) => values.push(inv),
                None => {
                    return Err(Error::SingularSample {
                        omega: self.grid.omega(k),
                    })
                }
            }
        }
        Ok(GridSpectrum {
            grid: self.grid,
            rows: self.rows,
            cols: self.cols,
            values,
        })
    }

    /// Stack `[self; below]`.
    pub fn vstack(&self, below: &GridSpectrum) -> Result<GridSpectrum> {
        self.check_grid(below)?;
        if self.cols != below.cols {
            return Err(Error::GridMismatch("vstack with different widths".into()));
        }
        let rows = self.rows + below.rows;
        let values = self
            .values
            .iter()
            .zip(below.values.iter())
            .map(|(a, b)| {
                DMatrix::from_fn(rows, self.cols, |i, j| {
                    if i < self.rows {
                        a[(i, j)]
                    } else {
                        b[(i - self.rows, j)]
                    }
                })
            })
            .collect();
        Ok(GridSpectrum {
            grid: self.grid,
            rows,
            cols: self.cols,
            values,
        })
    }

    pub fn scale(&self, s: f64) -> GridSpectrum {
        self.map(|m| m * Complex64::new(s, 0.0))
    }

    /// Largest singular value of the sample at `k`.
    pub fn sigma_max(&self, k: usize) -> f64 {
        sigma_max(&self.values[k])
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|m| m.iter())
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    /// Largest deviation from Hermitian symmetry `X(-omega) = conj(X(omega))`,
    /// which holds for spectra of real-coefficient systems.
    pub fn hermitian_symmetry_residual(&self) -> f64 {
        let n = self.len();
        let mut worst: f64 = 0.0;
        for k in 0..n {
            let mirror = (n - k) % n;
            let a = &self.values[k];
            let b = &self.values[mirror];
            for i in 0..self.rows {
                for j in 0..self.cols {
                    worst = worst.max((a[(i, j)].conj() - b[(i, j)]).norm());
                }
            }
        }
        worst
    }

    /// Fourier coefficients of every entry, indexed by DFT index `0..n`.
    /// Index `t <= n/2` is lag `t`; index `n - t` is lag `-t`.
    pub fn fourier_coefficients(&self) -> Vec<DMatrix<Complex64>> {
        let n = self.len();
        let mut out = vec![DMatrix::zeros(self.rows, self.cols); n];
        let mut series = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..self.rows {
            for j in 0..self.cols {
                for (s, v) in series.iter_mut().zip(&self.values) {
                    *s = v[(i, j)];
                }
                let coeffs = fft::coeffs_from_samples(&series);
                for (t, c) in coeffs.into_iter().enumerate() {
                    out[t][(i, j)] = c;
                }
            }
        }
        out
    }

    /// Inverse of [`fourier_coefficients`](Self::fourier_coefficients).
    pub fn from_fourier_coefficients(
        grid: FrequencyGrid,
        coeffs: &[DMatrix<Complex64>],
    ) -> Result<GridSpectrum> {
        if coeffs.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} coefficients on a grid of {}",
                coeffs.len(),
                grid.len()
            )));
        }
        let (rows, cols) = (coeffs[0].nrows(), coeffs[0].ncols());
        let n = grid.len();
        let mut values = vec![DMatrix::zeros(rows, cols); n];
        let mut series = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..rows {
            for j in 0..cols {
                for (t, c) in coeffs.iter().enumerate() {
                    series[t] = c[(i, j)];
                }
                let samples = fft::samples_from_coeffs(&series);
                for (k, s) in samples.into_iter().enumerate() {
                    values[k][(i, j)] = s;
                }
            }
        }
        Ok(GridSpectrum {
            grid,
            rows,
            cols,
            values,
        })
    }

    /// CSV export with one row per frequency and `re_ij`/`im_ij` columns.
    pub fn to_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        write!(w, "omega")?;
        for i in 0..self.rows {
            for j in 0..self.cols {
                write!(w, ",re_{i}{j},im_{i}{j}")?;
            }
        }
        writeln!(w)?;
        for k in 0..self.len() {
            write!(w, "{}", fmt_sig(self.grid.omega(k)))?;
            let m = &self.values[k];
            for i in 0..self.rows {
                for j in 0..self.cols {
                    write!(w, ",{},{}", fmt_sig(m[(i, j)].re), fmt_sig(m[(i, j)].im))?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Largest singular value; columns and rows reduce to vector norms.
pub fn sigma_max(m: &DMatrix<Complex64>) -> f64 {
    if m.ncols() == 1 || m.nrows() == 1 {
        m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    } else {
        m.clone()
            .svd(false, false)
            .singular_values
            .iter()
            .fold(0.0f64, |acc, s| acc.max(*s))
    }
}

/// A discrete-time plant with unit cost weights and a single disturbance column.
#[derive(Clone, Debug)]
pub struct StateSpaceSystem {
    name: String,
    a: DMatrix<f64>,
    bu: DMatrix<f64>,
    bw: DMatrix<f64>,
}

#[derive(Deserialize)]
struct PlantJson {
    name: Option<String>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "Bu")]
    bu: Vec<Vec<f64>>,
    #[serde(rename = "Bw")]
    bw: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    q: Option<Vec<Vec<f64>>>,
    #[serde(rename = "R")]
    r: Option<Vec<Vec<f64>>>,
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::InvalidPlant(format!("{what} is empty")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidPlant(format!(
            "{what} rows have uneven length"
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidPlant(format!(
            "{what} has non-finite entries"
        )));
    }
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

/// Square root and inverse square root of a symmetric positive definite matrix.
fn spd_sqrt(m: &DMatrix<f64>, what: &str) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let sym = (m + m.transpose()) * 0.5;
    if (m - &sym).norm() > 1e-10 * (1.0 + m.norm()) {
        return Err(Error::InvalidPlant(format!("{what} is not symmetric")));
    }
    let eig = sym.symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v));
    if eig.eigenvalues.iter().any(|&v| v <= 1e-12 * max.max(1.0)) {
        return Err(Error::InvalidPlant(format!(
            "{what} is not positive definite"
        )));
    }
    let d_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.sqrt()));
    let d_isqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    let v = eig.eigenvectors;
    Ok((&v * d_sqrt * v.transpose(), &v * d_isqrt * v.transpose()))
}

impl StateSpaceSystem {
    pub fn new(
        name: impl Into<String>,
        a: DMatrix<f64>,
        bu: DMatrix<f64>,
        bw: DMatrix<f64>,
    ) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::InvalidPlant("A must be square".into()));
        }
        let dx = a.nrows();
        if bu.nrows() != dx || bw.nrows() != dx {
            return Err(Error::InvalidPlant("Bu/Bw row count must match A".into()));
        }
        if bu.ncols() == 0 {
            return Err(Error::InvalidPlant("Bu has no columns".into()));
        }
        if bw.ncols() != 1 {
            return Err(Error::UnsupportedDisturbanceDim(bw.ncols()));
        }
        for m in [&a, &bu, &bw] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidPlant("non-finite entries".into()));
            }
        }
        Ok(StateSpaceSystem {
            name: name.into(),
            a,
            bu,
            bw,
        })
    }

    /// Parse the plant JSON schema `{name, A, Bu, Bw, Q?, R?}` (row-major).
    /// Optional weights are folded into the matrices so that downstream code
    /// always sees unit weights.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: PlantJson = serde_json::from_str(text)?;
        let a = matrix_from_rows(&raw.a, "A")?;
        let bu = matrix_from_rows(&raw.bu, "Bu")?;
        let bw = matrix_from_rows(&raw.bw, "Bw")?;
        let name = raw.name.unwrap_or_else(|| "plant".into());

        let (mut a, mut bu, mut bw) = (a, bu, bw);
        if let Some(q) = raw.q {
            let q = matrix_from_rows(&q, "Q")?;
            if q.nrows() != a.nrows() || q.ncols() != a.nrows() {
                return Err(Error::InvalidPlant("Q shape must match A".into()));
            }
            let (q_sqrt, q_isqrt) = spd_sqrt(&q, "Q")?;
            a = &q_sqrt * a * &q_isqrt;
            bu = &q_sqrt * bu;
            bw = &q_sqrt * bw;
        }
        if let Some(r) = raw.r {
            let r = matrix_from_rows(&r, "R")?;
            if r.nrows() != bu.ncols() || r.ncols() != bu.ncols() {
                return Err(Error::InvalidPlant("R shape must match Bu columns".into()));
            }
            let (_, r_isqrt) = spd_sqrt(&r, "R")?;
            bu *= r_isqrt;
        }
        StateSpaceSystem::new(name, a, bu, bw)
    }

    /// Four-state aircraft benchmark. The published data fixes `A` and `Bu`;
    /// no disturbance column is published, so this constructor reuses `Bu`
    /// for `Bw` as a stand-in. Results depend on that choice.
    pub fn ac17() -> Self {
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                -2.98, 0.93, 0.0, -0.034, //
                -0.99, -0.21, 0.035, -0.001, //
                0.0, 0.0, 0.0, 1.0, //
                0.39, -5.55, 0.0, -1.89,
            ],
        );
        let bu = DMatrix::from_column_slice(4, 1, &[-0.032, 0.0, 0.0, -1.6]);
        let bw = bu.clone();
        StateSpaceSystem::new("AC17", a, bu, bw).expect("embedded plant is valid")
    }

    /// One-state demo plant `a = 0.5`, `bu = bw = 1`.
    pub fn scalar_demo() -> Self {
        StateSpaceSystem::new(
            "scalar-demo",
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .expect("embedded plant is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dx(&self) -> usize {
        self.a.nrows()
    }

    pub fn du(&self) -> usize {
        self.bu.ncols()
    }

    pub fn dw(&self) -> usize {
        self.bw.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn bu(&self) -> &DMatrix<f64> {
        &self.bu
    }

    pub fn bw(&self) -> &DMatrix<f64> {
        &self.bw
    }

    pub fn spectral_radius(&self) -> f64 {
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|l| l.norm())
            .fold(0.0, f64::max)
    }

    /// Distance of the closest `A` eigenvalue to the unit circle.
    pub fn unit_circle_margin(&self) -> f64 {
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|l| (l.norm() - 1.0).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Complexified copy of a real matrix.
pub(crate) fn complexify(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Sample the open-loop transfers `F(z) = (zI - A)^{-1} Bu` and
/// `G(z) = (zI - A)^{-1} Bw` on the grid.
pub fn eval_plant(
    sys: &StateSpaceSystem,
    grid: FrequencyGrid,
) -> Result<(GridSpectrum, GridSpectrum)> {
    let min = 4 * sys.dx();
    if grid.len() < min {
        return Err(Error::GridTooCoarse {
            n: grid.len(),
            dx: sys.dx(),
            min,
        });
    }
    for l in sys.a.complex_eigenvalues().iter() {
        if (l.norm() - 1.0).abs() <= 1e-9 * (1.0 + l.norm()) {
            return Err(Error::SingularResolvent { modulus: l.norm() });
        }
    }
    let dx = sys.dx();
    let a = complexify(&sys.a);
    let b = {
        // Solve against [Bu Bw] in one factorization per grid point.
        let mut joint = DMatrix::zeros(dx, sys.du() + 1);
        joint
            .view_mut((0, 0), (dx, sys.du()))
            .copy_from(&complexify(&sys.bu));
        joint
            .view_mut((0, sys.du()), (dx, 1))
            .copy_from(&complexify(&sys.bw));
        joint
    };
    let mut f_vals = Vec::with_capacity(grid.len());
    let mut g_vals = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let z = Complex64::from_polar(1.0, grid.omega(k));
        let m = DMatrix::identity(dx, dx) * z - &a;
        let sol = m.lu().solve(&b).ok_or(Error::SingularSample {
            omega: grid.omega(k),
        })?;
        f_vals.push(sol.columns(0, sys.du()).into_owned());
        g_vals.push(sol.columns(sys.du(), 1).into_owned());
    }
    Ok((
        GridSpectrum {
            grid,
            rows: dx,
            cols: sys.du(),
            values: f_vals,
        },
        GridSpectrum {
            grid,
            rows: dx,
            cols: 1,
            values: g_vals,
        },
    ))
}

/// Closed loop `T_K = [F K + G; K]` stacking regulated state on top of input.
pub fn closed_loop(f: &GridSpectrum, g: &GridSpectrum, k: &GridSpectrum) -> Result<GridSpectrum> {
    f.mul(k)?.add(g)?.vstack(k)
}

/// Hilbert-Schmidt norm: sqrt of the grid average of `Tr(T* T)`.
pub fn h2_norm(t: &GridSpectrum) -> f64 {
    let total: f64 = t
        .values
        .iter()
        .map(|m| m.iter().map(|v| v.norm_sqr()).sum::<f64>())
        .sum();
    (total / t.len() as f64).sqrt()
}

/// Weighted mean-square cost `(1/N) sum_k Tr(T_k* T_k) n_k` for a real scalar
/// weight spectrum.
pub fn weighted_h2_cost(t: &GridSpectrum, weight: &GridSpectrum) -> Result<f64> {
    if t.grid != weight.grid {
        return Err(Error::GridMismatch("weight on a different grid".into()));
    }
    let mut total = 0.0;
    for k in 0..t.len() {
        let fro: f64 = t.values[k].iter().map(|v| v.norm_sqr()).sum();
        total += fro * weight.real_scalar(k);
    }
    Ok(total / t.len() as f64)
}

/// Grid maximum of the largest singular value.
pub fn hinf_norm(t: &GridSpectrum) -> f64 {
    (0..t.len()).map(|k| t.sigma_max(k)).fold(0.0, f64::max)
}

/// Grid maximum refined by one golden-section pass over the bracketing
/// interval, for spectra that can be evaluated off the grid.
pub fn hinf_norm_refined<F>(t: &GridSpectrum, eval: F) -> f64
where
    F: Fn(f64) -> DMatrix<Complex64>,
{
    let n = t.len();
    let (mut best_k, mut best) = (0usize, 0.0f64);
    for k in 0..n {
        let s = t.sigma_max(k);
        if s > best {
            best = s;
            best_k = k;
        }
    }
    let step = 2.0 * PI / n as f64;
    let center = t.grid.omega(best_k);
    let (mut lo, mut hi) = (center - step, center + step);
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = sigma_max(&eval(x1));
    let mut f2 = sigma_max(&eval(x2));
    for _ in 0..48 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = sigma_max(&eval(x2));
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = sigma_max(&eval(x1));
        }
    }
    best.max(f1).max(f2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> FrequencyGrid {
        FrequencyGrid::new(n).unwrap()
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(FrequencyGrid::new(0).is_err());
        assert!(FrequencyGrid::new(3).is_err());
        assert!(FrequencyGrid::new(48).is_err());
        assert!(FrequencyGrid::new(64).is_ok());
    }

    #[test]
    fn delay_plant_has_unit_delay_transfer() {
        // A = 0, Bu = Bw = 1: F(z) = z^{-1}.
        let sys = StateSpaceSystem::new(
            "delay",
            DMatrix::from_element(1, 1, 0.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let g = grid(64);
        let (f, _) = eval_plant(&sys, g).unwrap();
        for k in 0..g.len() {
            let expect = Complex64::from_polar(1.0, -g.omega(k));
            assert!((f.scalar(k) - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn resolvent_matches_truncated_geometric_series() {
        // Independent route: F(omega) = sum_{t>=1} a^{t-1} e^{-i t omega}.
        let sys = StateSpaceSystem::scalar_demo();
        let g = grid(128);
        let (f, _) = eval_plant(&sys, g).unwrap();
        for k in 0..g.len() {
            let w = g.omega(k);
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 1..=96u32 {
                acc += Complex64::from_polar(0.5f64.powi(t as i32 - 1), -(t as f64) * w);
            }
            assert!((f.scalar(k) - acc).norm() < 1e-12);
        }
    }

    #[test]
    fn aircraft_plant_satisfies_resolvent_identity() {
        let sys = StateSpaceSystem::ac17();
        let g = grid(64);
        let (f, gsp) = eval_plant(&sys, g).unwrap();
        // (zI - A) F = Bu must hold at every grid point.
        for k in [0usize, 7, 31] {
            let z = Complex64::from_polar(1.0, g.omega(k));
            let m = DMatrix::identity(4, 4) * z - complexify(sys.a());
            let res = &m * f.value(k) - complexify(sys.bu());
            assert!(res.norm() < 1e-12);
            let res = &m * gsp.value(k) - complexify(sys.bw());
            assert!(res.norm() < 1e-12);
        }
    }

    #[test]
    fn unit_circle_eigenvalue_is_rejected() {
        let sys = StateSpaceSystem::new(
            "marginal",
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        assert!(matches!(
            eval_plant(&sys, grid(64)),
            Err(Error::SingularResolvent { .. })
        ));
    }

    #[test]
    fn h2_norm_of_identity_is_one() {
        let g = grid(32);
        let t = GridSpectrum::constant(g, DMatrix::identity(1, 1));
        assert!((h2_norm(&t) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn hinf_norm_of_constant_diagonal() {
        let g = grid(32);
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = Complex64::new(2.0, 0.0);
        m[(1, 1)] = Complex64::new(1.0, 0.0);
        let t = GridSpectrum::constant(g, m);
        assert!((hinf_norm(&t) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hs_norm_never_exceeds_hinf_for_single_column_blocks() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let g = grid(64);
        for _ in 0..20 {
            let t = GridSpectrum::from_fn(g, 3, 1, |_, _| {
                DMatrix::from_fn(3, 1, |_, _| {
                    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                })
            });
            assert!(h2_norm(&t) <= hinf_norm(&t) + 1e-12);
        }
    }

    #[test]
    fn plant_spectra_have_hermitian_symmetry() {
        let sys = StateSpaceSystem::ac17();
        let (f, g) = eval_plant(&sys, grid(128)).unwrap();
        assert!(f.hermitian_symmetry_residual() < 1e-12);
        assert!(g.hermitian_symmetry_residual() < 1e-12);
    }

    #[test]
    fn grid_refinement_leaves_h2_norm_still() {
        // Stable plant, so the quadrature is aliasing-limited.
        let sys = StateSpaceSystem::scalar_demo();
        let (_, g1) = eval_plant(&sys, grid(256)).unwrap();
        let (_, g2) = eval_plant(&sys, grid(512)).unwrap();
        assert!((h2_norm(&g1) - h2_norm(&g2)).abs() < 1e-8);
    }

    #[test]
    fn fourier_round_trip() {
        let sys = StateSpaceSystem::scalar_demo();
        let g = grid(64);
        let (f, _) = eval_plant(&sys, g).unwrap();
        let coeffs = f.fourier_coefficients();
        // Strictly causal: lag 0 must vanish, lag 1 is Bu.
        assert!(coeffs[0].norm() < 1e-12);
        assert!((coeffs[1][(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        let back = GridSpectrum::from_fourier_coefficients(g, &coeffs).unwrap();
        for k in 0..g.len() {
            assert!((back.scalar(k) - f.scalar(k)).norm() < 1e-12);
        }
    }

    #[test]
    fn json_ingestion_folds_weights() {
        // Scaling Q and R by identity factors must not change the plant.
        let text = r#"{
            "name": "folded",
            "A": [[0.5]],
            "Bu": [[1.0]],
            "Bw": [[1.0]],
            "Q": [[4.0]],
            "R": [[9.0]]
        }"#;
        let sys = StateSpaceSystem::from_json_str(text).unwrap();
        // Scalar case: A' = A, Bu' = 2 * 1 / 3, Bw' = 2.
        assert!((sys.a()[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((sys.bu()[(0, 0)] - 2.0 / 3.0).abs() < 1e-12);
        assert!((sys.bw()[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn json_rejects_wide_disturbance() {
        let text = r#"{"A": [[0.5]], "Bu": [[1.0]], "Bw": [[1.0, 2.0]]}"#;
        assert!(matches!(
            StateSpaceSystem::from_json_str(text),
            Err(Error::UnsupportedDisturbanceDim(2))
        ));
    }

    #[test]
    fn csv_export_is_parseable() {
        let g = grid(8);
        let t = GridSpectrum::constant(g, DMatrix::from_element(1, 1, Complex64::new(1.5, -0.5)));
        let mut buf = Vec::new();
        t.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "omega,re_00,im_00");
        assert_eq!(lines.count(), 8);
    }
}
