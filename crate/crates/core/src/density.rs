//! Densities on uniform grids by FFT inversion of characteristic functions.

use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::levy::OuModel;
use crate::matops::Matrix;
use crate::polyspec::MultiIndex;

/// Characteristic-function modulus allowed on the boundary of the frequency box.
pub const FREQUENCY_TAIL_TOL: f64 = 1e-8;

/// Tensor grid with nodes `x_k = -L + k h`, `h = 2L/N`, `k = 0..N-1` per axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub halfwidth: Vec<f64>,
    pub n: Vec<usize>,
}

impl GridSpec {
    pub fn new(halfwidth: Vec<f64>, n: Vec<usize>) -> Self {
        assert_eq!(halfwidth.len(), n.len());
        Self { halfwidth, n }
    }

    pub fn uniform(dim: usize, halfwidth: f64, n: usize) -> Self {
        Self::new(vec![halfwidth; dim], vec![n; dim])
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn step(&self, axis: usize) -> f64 {
        2.0 * self.halfwidth[axis] / self.n[axis] as f64
    }

    pub fn node(&self, axis: usize, k: usize) -> f64 {
        -self.halfwidth[axis] + k as f64 * self.step(axis)
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|j| self.step(j)).product()
    }

    /// Per-axis indices of a flat (row-major) index.
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for j in (0..self.dim()).rev() {
            idx[j] = flat % self.n[j];
            flat /= self.n[j];
        }
        idx
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.n).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.unflatten(flat)
            .iter()
            .enumerate()
            .map(|(j, &k)| self.node(j, k))
            .collect()
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    /// Signed frequency index `m` in `-N/2..N/2` for FFT index `k`.
    fn signed(&self, axis: usize, k: usize) -> i64 {
        let n = self.n[axis];
        if k < n / 2 {
            k as i64
        } else {
            k as i64 - n as i64
        }
    }

    /// Frequency `xi = pi m / L` and sign `(-1)^m` at a flat FFT index.
    fn frequency(&self, flat: usize) -> (Vec<f64>, f64, bool) {
        let idx = self.unflatten(flat);
        let mut xi = Vec::with_capacity(self.dim());
        let mut sign = 1.0;
        let mut boundary = false;
        for (j, &k) in idx.iter().enumerate() {
            let m = self.signed(j, k);
            if m == -(self.n[j] as i64 / 2) {
                boundary = true;
            }
            if m.rem_euclid(2) == 1 {
                sign = -sign;
            }
            xi.push(std::f64::consts::PI * m as f64 / self.halfwidth[j]);
        }
        (xi, sign, boundary)
    }
}

/// Real-valued field on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub label: String,
}

#[derive(Serialize)]
struct FieldJson<'a> {
    label: &'a str,
    halfwidth: &'a [f64],
    n: &'a [usize],
    values: &'a [f64],
}

impl DensityField {
    pub fn new(grid: GridSpec, values: Vec<f64>, label: &str) -> Self {
        assert_eq!(grid.len(), values.len());
        Self {
            grid,
            values,
            label: label.to_string(),
        }
    }

    pub fn from_fn(grid: GridSpec, label: &str, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = grid.points().map(|x| f(&x)).collect();
        Self::new(grid, values, label)
    }

    /// Rectangle-rule integral.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Separable cubic Lagrange interpolation.
    pub fn interpolate(&self, x: &[f64]) -> Result<f64> {
        let d = self.grid.dim();
        let mut base = vec![0usize; d];
        let mut weights = vec![[0.0; 4]; d];
        for j in 0..d {
            let u = (x[j] + self.grid.halfwidth[j]) / self.grid.step(j);
            let i = u.floor();
            if !(i >= 1.0 && i + 2.0 <= (self.grid.n[j] - 1) as f64) {
                return Err(Error::InterpolationOutOfRange(format!(
                    "coordinate {} = {} outside the interpolation stencil",
                    j, x[j]
                )));
            }
            let f = u - i;
            base[j] = i as usize - 1;
            weights[j] = [
                -f * (f - 1.0) * (f - 2.0) / 6.0,
                (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
                -(f + 1.0) * f * (f - 2.0) / 2.0,
                (f + 1.0) * f * (f - 1.0) / 6.0,
            ];
        }
        let mut acc = 0.0;
        let mut idx = vec![0usize; d];
        for corner in 0..4usize.pow(d as u32) {
            let mut c = corner;
            let mut w = 1.0;
            for j in 0..d {
                let o = c % 4;
                c /= 4;
                idx[j] = base[j] + o;
                w *= weights[j][o];
            }
            acc += w * self.values[self.grid.flatten(&idx)];
        }
        Ok(acc)
    }

    /// Nearest-node lookup; exact at grid nodes.
    pub fn value_at_node(&self, x: &[f64]) -> Option<f64> {
        let mut idx = Vec::with_capacity(x.len());
        for (j, &xj) in x.iter().enumerate() {
            let u = (xj + self.grid.halfwidth[j]) / self.grid.step(j);
            let k = u.round();
            if (u - k).abs() > 1e-9 || k < 0.0 || k >= self.grid.n[j] as f64 {
                return None;
            }
            idx.push(k as usize);
        }
        Some(self.values[self.grid.flatten(&idx)])
    }

    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        let d = self.grid.dim();
        let header: Vec<String> = (0..d).map(|j| format!("axis{j}")).collect();
        writeln!(out, "{},value", header.join(","))?;
        for (i, v) in self.values.iter().enumerate() {
            let p = self.grid.point(i);
            let coords: Vec<String> = p.iter().map(|x| format!("{x:.16e}")).collect();
            writeln!(out, "{},{:.16e}", coords.join(","), v)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(FieldJson {
            label: &self.label,
            halfwidth: &self.grid.halfwidth,
            n: &self.grid.n,
            values: &self.values,
        })
        .expect("serializable")
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)
    }
}

fn fft_axes(data: &mut [Complex64], shape: &[usize], forward: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let total: usize = shape.iter().product();
    for axis in 0..shape.len() {
        let n = shape[axis];
        let fft = if forward {
            planner.plan_fft_forward(n)
        } else {
            planner.plan_fft_inverse(n)
        };
        let stride: usize = shape[axis + 1..].iter().product();
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for start in 0..total {
            // first element of each line along `axis`
            if !(start / stride).is_multiple_of(n) {
                continue;
            }
            for k in 0..n {
                line[k] = data[start + k * stride];
            }
            fft.process(&mut line);
            for k in 0..n {
                data[start + k * stride] = line[k];
            }
        }
    }
}

/// `(2 pi)^{-d} int e^{-i<xi,x>} cf(xi) d xi` on the grid. Fails with
/// `GridTooCoarse` when `|base|` exceeds the tail tolerance on the boundary
/// of the frequency box.
pub fn invert_with(
    grid: &GridSpec,
    label: &str,
    multiplier: impl Fn(&[f64]) -> Result<(Complex64, Complex64)> + Sync,
) -> Result<DensityField> {
    let evaluated: Vec<(Complex64, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|flat| {
            let (xi, _, boundary) = grid.frequency(flat);
            let (value, base) = multiplier(&xi)?;
            let tail = if boundary { base.norm() } else { 0.0 };
            Ok((value, tail))
        })
        .collect::<Result<Vec<_>>>()?;
    let tail = evaluated.iter().fold(0.0_f64, |m, v| m.max(v.1));
    if tail > FREQUENCY_TAIL_TOL {
        return Err(Error::GridTooCoarse(format!(
            "characteristic function reaches {tail:.3e} on the frequency boundary"
        )));
    }
    let samples: Vec<Complex64> = evaluated.into_iter().map(|v| v.0).collect();
    Ok(invert_samples(grid, label, samples))
}

/// Inverse of [`fourier_samples`]: rebuilds the field from its transform
/// sampled at the grid frequencies.
pub fn invert_samples(grid: &GridSpec, label: &str, samples: Vec<Complex64>) -> DensityField {
    let mut data: Vec<Complex64> = samples
        .into_iter()
        .enumerate()
        .map(|(flat, z)| z * grid.frequency(flat).1)
        .collect();
    fft_axes(&mut data, &grid.n, true);
    let norm: f64 = grid.halfwidth.iter().map(|l| 1.0 / (2.0 * l)).product();
    DensityField::new(grid.clone(), data.iter().map(|z| z.re * norm).collect(), label)
}

/// `int e^{i<xi, x>} f(x) dx` by the grid rule at the frequencies
/// `xi_m = pi m / L`, in the flat order of the grid.
pub fn fourier_samples(f: &DensityField) -> Vec<Complex64> {
    let grid = &f.grid;
    let mut data: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_axes(&mut data, &grid.n, false);
    let cell = grid.cell_volume();
    data.iter()
        .enumerate()
        .map(|(flat, z)| z * grid.frequency(flat).1 * cell)
        .collect()
}

/// Frequency vector attached to a flat grid index.
pub fn frequency_at(grid: &GridSpec, flat: usize) -> Vec<f64> {
    grid.frequency(flat).0
}

/// Grid over the default half-widths of the model with a node count that
/// keeps the total size moderate in every dimension.
pub fn default_grid(model: &OuModel) -> GridSpec {
    let n = match model.dim() {
        1 => 256,
        2 => 128,
        _ => 32,
    };
    GridSpec::new(model.default_halfwidths(), vec![n; model.dim()])
}

/// Stationary characteristic function sampled once at the grid
/// frequencies; the density and all its derivatives are read off it.
#[derive(Debug, Clone)]
pub struct StationaryTransform {
    pub grid: GridSpec,
    cf: Vec<Complex64>,
}

impl StationaryTransform {
    pub fn new(model: &OuModel, grid: &GridSpec) -> Result<Self> {
        check_dim(model, grid)?;
        let cf = (0..grid.len())
            .into_par_iter()
            .map(|flat| Ok(model.psi_inf(&grid.frequency(flat).0)?.exp()))
            .collect::<Result<Vec<_>>>()?;
        let tail = (0..grid.len())
            .filter(|&flat| grid.frequency(flat).2)
            .fold(0.0_f64, |m, flat| m.max(cf[flat].norm()));
        if tail > FREQUENCY_TAIL_TOL {
            return Err(Error::GridTooCoarse(format!(
                "characteristic function reaches {tail:.3e} on the frequency boundary"
            )));
        }
        Ok(Self { grid: grid.clone(), cf })
    }

    pub fn density(&self) -> DensityField {
        invert_samples(&self.grid, "invariant density", self.cf.clone())
    }

    /// `prod_j (c_j . grad)^{m_j} mu`, with `c_j` the columns of `dirs`.
    pub fn derivative(&self, m: &MultiIndex, dirs: &Matrix) -> DensityField {
        let d = self.grid.dim();
        let samples = self
            .cf
            .iter()
            .enumerate()
            .map(|(flat, cf)| {
                let xi = self.grid.frequency(flat).0;
                let mut mult = Complex64::new(1.0, 0.0);
                for j in 0..d {
                    let proj: f64 = (0..d).map(|i| dirs[(i, j)] * xi[i]).sum();
                    mult *= Complex64::new(0.0, -proj).powi(m.0[j] as i32);
                }
                cf * mult
            })
            .collect();
        invert_samples(&self.grid, &format!("derivative {m} of invariant density"), samples)
    }
}

/// Density of the invariant law.
pub fn invariant_density(model: &OuModel, grid: &GridSpec) -> Result<DensityField> {
    Ok(StationaryTransform::new(model, grid)?.density())
}

/// `d^m mu` on the grid via the multiplier `(-i xi)^m`.
pub fn density_derivative(model: &OuModel, grid: &GridSpec, m: &MultiIndex) -> Result<DensityField> {
    let d = model.dim();
    density_directional_derivative(model, grid, m, &Matrix::identity(d, d))
}

/// `prod_j (c_j . grad)^{m_j} mu`, with `c_j` the columns of `dirs`.
pub fn density_directional_derivative(
    model: &OuModel,
    grid: &GridSpec,
    m: &MultiIndex,
    dirs: &Matrix,
) -> Result<DensityField> {
    Ok(StationaryTransform::new(model, grid)?.derivative(m, dirs))
}

/// Grid sized to the law of `X_t` started at `x`: eight standard deviations
/// (Gaussian part when variances diverge) around the mean.
pub fn transition_grid(model: &OuModel, t: f64, x: &[f64], n: usize) -> Result<GridSpec> {
    let d = model.dim();
    let te = model.transition_exponent(t)?;
    let flow = crate::matops::expm(model.b(), t) * DVector::from_column_slice(x);
    let (var, shift): (Vec<f64>, Vec<f64>) = match te.cumulants(2) {
        Ok(c) => {
            let mean = c.mean();
            let var = (0..d).map(|i| c.get(&MultiIndex::unit(d, i).plus_unit(i))).collect::<Result<_>>()?;
            (var, mean)
        }
        Err(Error::DivergentMoment { .. }) => ((0..d).map(|i| te.q_t()[(i, i)]).collect(), vec![0.0; d]),
        Err(e) => return Err(e),
    };
    let halfwidth = (0..d).map(|i| 8.0 * var[i].sqrt() + (flow[i] + shift[i]).abs()).collect();
    Ok(GridSpec::new(halfwidth, vec![n; d]))
}

/// Density of `X_t` started at `x`.
pub fn transition_density(model: &OuModel, t: f64, x: &[f64], grid: &GridSpec) -> Result<DensityField> {
    check_dim(model, grid)?;
    let te = model.transition_exponent(t)?;
    invert_with(grid, &format!("transition density t={t}"), |xi| {
        let cf = te.characteristic_function(xi, x)?;
        Ok((cf, cf))
    })
}

/// `(P_t f)(x) = (2 pi)^{-d} int e^{-i<xi, e^{tB}x>} e^{Psi_t(-xi)} F_f(xi) d xi` at
/// arbitrary points, with `F_f` the grid Fourier transform of `f`.
pub fn semigroup_apply_points(
    model: &OuModel,
    t: f64,
    f: &DensityField,
    points: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let g = semigroup_kernel_field(model, t, f)?;
    let flow = crate::matops::expm(model.b(), t);
    points
        .iter()
        .map(|x| {
            let y = &flow * DVector::from_column_slice(x);
            g.interpolate(y.as_slice())
        })
        .collect()
}

/// `P_t f` at every grid node; nodes whose image `e^{tB}x` leaves the
/// interpolation range are NaN.
pub fn semigroup_apply_grid(model: &OuModel, t: f64, f: &DensityField) -> Result<DensityField> {
    let g = semigroup_kernel_field(model, t, f)?;
    let flow = crate::matops::expm(model.b(), t);
    let values = f
        .grid
        .points()
        .map(|x| {
            let y = &flow * DVector::from_column_slice(&x);
            g.interpolate(y.as_slice()).unwrap_or(f64::NAN)
        })
        .collect();
    Ok(DensityField::new(f.grid.clone(), values, &format!("P_t f, t={t}")))
}

/// `z -> E f(z + Z_t)` on the grid.
fn semigroup_kernel_field(model: &OuModel, t: f64, f: &DensityField) -> Result<DensityField> {
    let grid = &f.grid;
    check_dim(model, grid)?;
    // F_f(xi_m) = h^d sum_k e^{i xi_m x_k} f_k = h^d (-1)^m sum_k e^{2 pi i m k / N} f_k
    let data = fourier_samples(f);
    let te = model.transition_exponent(t)?;
    let weighted: Vec<Complex64> = (0..grid.len())
        .into_par_iter()
        .map(|flat| {
            let neg: Vec<f64> = grid.frequency(flat).0.iter().map(|v| -v).collect();
            Ok(te.eval(&neg)?.exp() * data[flat])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(invert_samples(grid, "semigroup kernel", weighted))
}

fn check_dim(model: &OuModel, grid: &GridSpec) -> Result<()> {
    if grid.dim() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "grid has dimension {}, model {}",
            grid.dim(),
            model.dim()
        )));
    }
    Ok(())
}
