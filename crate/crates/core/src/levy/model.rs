
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{Atom, LevyMeasure, MeasureDiagnostics};
use crate::error::{Error, Result};
use crate::matops::{expm, gram_qt, kalman_index, qinf, spectral_data, Matrix, SpectralData};
use crate::polyspec::{CumulantTable, MultiIndex};
use crate::quadrature::FlowQuadrature;

const PSI_ABS_TOL: f64 = 1e-13;
const PSI_REL_TOL: f64 = 1e-12;

/// Lévy-driven Ornstein-Uhlenbeck model `dX = BX dt + dL` with generating
/// triple `(Q, B, Pi)`. Derived quantities are computed on construction.
#[derive(Debug)]
pub struct OuModel {
    q: Matrix,
    b: Matrix,
    pi: LevyMeasure,
    dim: usize,
    q_inf: Matrix,
    spectral: SpectralData,
    kalman: usize,
    atoms: Vec<Atom>,
    horizon: f64,
    inf_quad: FlowQuadrature,
}

fn complex_quad_scale(pi: &LevyMeasure) -> f64 {
    match pi {
        LevyMeasure::AlphaStable { alpha, .. } => alpha.min(1.0),
        _ => 1.0,
    }
}

impl OuModel {
    pub fn new(q: Matrix, b: Matrix, pi: LevyMeasure) -> Result<Self> {
        let dim = b.nrows();
        if b.ncols() != dim || q.nrows() != dim || q.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "Q is {}x{}, B is {}x{}",
                q.nrows(),
                q.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if (&q - q.transpose()).amax() > 1e-12 * q.amax().max(1.0) {
            return Err(Error::DimensionMismatch("Q is not symmetric".into()));
        }
        pi.validate(dim)?;
        let kalman = kalman_index(&q, &b)?;
        let q_inf = qinf(&q, &b)?;
        let spectral = spectral_data(&b, &q_inf);
        if !pi.diagnostics().log_moment {
            return Err(Error::InvalidMeasure("log moment of Pi is infinite".into()));
        }
        let abscissa = spectral.abscissa;
        let eps = abscissa.abs() / 100.0;
        let horizon = (1e-14f64).ln() / ((abscissa + eps) * complex_quad_scale(&pi));
        let inf_quad = FlowQuadrature::new(&b, horizon);
        let atoms = pi.discrete_atoms();
        Ok(Self {
            q,
            b,
            pi,
            dim,
            q_inf,
            spectral,
            kalman,
            atoms,
            horizon,
            inf_quad,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn q(&self) -> &Matrix {
        &self.q
    }
    pub fn b(&self) -> &Matrix {
        &self.b
    }
    pub fn pi(&self) -> &LevyMeasure {
        &self.pi
    }
    pub fn q_inf(&self) -> &Matrix {
        &self.q_inf
    }
    pub fn spectral(&self) -> &SpectralData {
        &self.spectral
    }
    pub fn kalman_index(&self) -> usize {
        self.kalman
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }
    pub fn diagnostics(&self) -> MeasureDiagnostics {
        self.pi.diagnostics()
    }

    /// Jump exponent `Phi`.
    pub fn phi(&self, eta: &[f64]) -> Complex64 {
        self.pi.phi_with(&self.atoms, eta)
    }

    /// Lévy exponent `Psi(xi) = -<Q xi, xi>/2 + Phi(xi)`.
    pub fn psi(&self, xi: &[f64]) -> Complex64 {
        let v = DVector::from_column_slice(xi);
        Complex64::new(-0.5 * v.dot(&(&self.q * &v)), 0.0) + self.phi(xi)
    }

    fn phi_flow_integral(&self, quad: &FlowQuadrature, xi: &[f64]) -> Result<Complex64> {
        if self.pi.is_null() {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let v = DVector::from_column_slice(xi);
        quad.integrate(
            |e, _| {
                let eta = e.transpose() * &v;
                self.phi(eta.as_slice())
            },
            PSI_ABS_TOL,
            PSI_REL_TOL,
        )
    }

    /// Stationary exponent `Psi_inf(xi) = -<Q_inf xi, xi>/2 + int_0^inf Phi(e^{sB*} xi) ds`.
    pub fn psi_inf(&self, xi: &[f64]) -> Result<Complex64> {
        let v = DVector::from_column_slice(xi);
        let gauss = -0.5 * v.dot(&(&self.q_inf * &v));
        Ok(Complex64::new(gauss, 0.0) + self.phi_flow_integral(&self.inf_quad, xi)?)
    }

    /// Characteristic function of the invariant law.
    pub fn stationary_cf(&self, xi: &[f64]) -> Result<Complex64> {
        Ok(self.psi_inf(xi)?.exp())
    }

    /// Precomputes what is needed to evaluate `Psi_t` for a fixed `t`.
    pub fn transition_exponent(&self, t: f64) -> Result<TransitionExponent<'_>> {
        Ok(TransitionExponent {
            model: self,
            t,
            q_t: gram_qt(&self.q, &self.b, t)?,
            flow: expm(&self.b, t),
            quad: FlowQuadrature::new(&self.b, t.max(0.0)),
        })
    }

    /// `Psi_t(xi) = -<Q_t xi, xi>/2 + int_0^t Phi(e^{sB*} xi) ds`.
    pub fn psi_t(&self, t: f64, xi: &[f64]) -> Result<Complex64> {
        self.transition_exponent(t)?.eval(xi)
    }

    fn divergent(&self, what: &str) -> Error {
        Error::DivergentMoment {
            context: format!("{what} of an alpha-stable jump measure"),
        }
    }

    /// `int z^m Pi_inf(dz)` for every `m` in `indices`, where
    /// `Pi_inf = int_0^inf Pi o e^{-sB} ds`, integrated over `[0, horizon]`.
    fn flow_moments(&self, quad: &FlowQuadrature, indices: &[MultiIndex]) -> Result<Vec<f64>> {
        if self.pi.is_stable() {
            return Err(self.divergent("polynomial moment"));
        }
        if indices.is_empty() || self.atoms.is_empty() {
            return Ok(vec![0.0; indices.len()]);
        }
        let ys: Vec<DVector<f64>> = self
            .atoms
            .iter()
            .map(|a| DVector::from_column_slice(&a.location))
            .collect();
        let scale = self
            .atoms
            .iter()
            .map(|a| a.weight * a.location.iter().map(|v| v.abs()).sum::<f64>().max(1.0).powi(indices.iter().map(|m| m.order()).max().unwrap_or(0) as i32))
            .sum::<f64>();
        quad.integrate(
            |e, _| {
                let mut out = vec![0.0; indices.len()];
                for (a, y) in self.atoms.iter().zip(&ys) {
                    let z = e * y;
                    for (o, m) in out.iter_mut().zip(indices) {
                        *o += a.weight * m.monomial(z.as_slice());
                    }
                }
                out
            },
            1e-16 * scale,
            1e-13,
        )
    }

    /// `int z^m Pi_inf(dz)` for `|m| >= 1`.
    pub fn pi_inf_moment(&self, m: &MultiIndex) -> Result<f64> {
        if m.order() == 0 {
            return Err(Error::DivergentMoment {
                context: "total mass of Pi_inf".into(),
            });
        }
        Ok(self.flow_moments(&self.inf_quad, std::slice::from_ref(m))?[0])
    }

    /// Cumulants of the jump part of the invariant law: order one is
    /// `int_0^inf e^{sB} ds int_{|y|>1} y Pi(dy)`, higher orders are moments of
    /// `Pi_inf`.
    pub fn jump_cumulants(&self, max_order: usize) -> Result<CumulantTable> {
        let d = self.dim;
        let mut table = CumulantTable::new(d, max_order);
        if self.pi.is_null() || max_order == 0 {
            return Ok(table);
        }
        let big = self.pi.large_jump_mean(d)?;
        let neg_b_inv = (-&self.b)
            .try_inverse()
            .ok_or(Error::UnstableDrift { abscissa: 0.0 })?;
        let k1 = neg_b_inv * DVector::from_vec(big);
        for i in 0..d {
            table.set(MultiIndex::unit(d, i), k1[i]);
        }
        if max_order >= 2 {
            let indices: Vec<MultiIndex> = (2..=max_order)
                .flat_map(|k| MultiIndex::of_order(d, k))
                .collect();
            let vals = self.flow_moments(&self.inf_quad, &indices)?;
            for (m, v) in indices.into_iter().zip(vals) {
                table.set(m, v);
            }
        }
        Ok(table)
    }

    /// Cumulants of the invariant law `mu` up to `max_order`.
    pub fn cumulants_mu(&self, max_order: usize) -> Result<CumulantTable> {
        Ok(CumulantTable::gaussian(&self.q_inf, max_order).add(&self.jump_cumulants(max_order)?))
    }

    /// Default grid half-widths: eight standard deviations of the invariant
    /// law (Gaussian part only when second moments are infinite) around
    /// the mean.
    pub fn default_halfwidths(&self) -> Vec<f64> {
        let d = self.dim;
        let (cov, mean) = match self.cumulants_mu(2) {
            Ok(c) => {
                let cov = DMatrix::from_fn(d, d, |i, j| {
                    c.get(&MultiIndex::unit(d, i).plus_unit(j)).unwrap_or(0.0)
                });
                (cov, c.mean())
            }
            Err(_) => (self.q_inf.clone(), vec![0.0; d]),
        };
        (0..d)
            .map(|i| 8.0 * cov[(i, i)].max(1e-12).sqrt() + mean[i].abs())
            .collect()
    }
}

/// `Psi_t` at a fixed time, sharing the Gramian and flow tables across
/// frequencies.
pub struct TransitionExponent<'a> {
    model: &'a OuModel,
    t: f64,
    q_t: Matrix,
    flow: Matrix,
    quad: FlowQuadrature,
}

impl TransitionExponent<'_> {
    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn q_t(&self) -> &Matrix {
        &self.q_t
    }

    /// `e^{tB}`.
    pub fn flow(&self) -> &Matrix {
        &self.flow
    }

    pub fn eval(&self, xi: &[f64]) -> Result<Complex64> {
        let v = DVector::from_column_slice(xi);
        let gauss = -0.5 * v.dot(&(&self.q_t * &v));
        if self.t <= 0.0 {
            return Ok(Complex64::new(gauss, 0.0));
        }
        Ok(Complex64::new(gauss, 0.0) + self.model.phi_flow_integral(&self.quad, xi)?)
    }

    /// `E exp(i<xi, X_t>)` given `X_0 = x`.
    pub fn characteristic_function(&self, xi: &[f64], x: &[f64]) -> Result<Complex64> {
        let v = DVector::from_column_slice(xi);
        let shifted = self.flow.transpose() * v;
        let phase: f64 = shifted.iter().zip(x).map(|(a, b)| a * b).sum();
        Ok((self.eval(xi)? + Complex64::new(0.0, phase)).exp())
    }

    /// Cumulants of `Z_t = X_t - e^{tB} X_0`.
    pub fn cumulants(&self, max_order: usize) -> Result<CumulantTable> {
        let m = self.model;
        let d = m.dim;
        let mut table = CumulantTable::gaussian(&self.q_t, max_order);
        if m.pi.is_null() || self.t <= 0.0 || max_order == 0 {
            return Ok(table);
        }
        let big = DVector::from_vec(m.pi.large_jump_mean(d)?);
        let b_inv = m.b.clone().try_inverse().ok_or(Error::UnstableDrift { abscissa: 0.0 })?;
        let k1 = b_inv * (&self.flow - Matrix::identity(d, d)) * big;
        let mut jumps = CumulantTable::new(d, max_order);
        for i in 0..d {
            jumps.set(MultiIndex::unit(d, i), k1[i]);
        }
        if max_order >= 2 {
            let indices: Vec<MultiIndex> = (2..=max_order)
                .flat_map(|k| MultiIndex::of_order(d, k))
                .collect();
            let vals = m.flow_moments(&self.quad, &indices)?;
            for (idx, v) in indices.into_iter().zip(vals) {
                jumps.set(idx, v);
            }
        }
        table = table.add(&jumps);
        Ok(table)
    }
}
