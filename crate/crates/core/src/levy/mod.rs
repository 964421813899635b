//! Lévy measures, their exponents and moments, and the Lévy-OU model.

mod model;
pub mod stable;

pub use model::{OuModel, TransitionExponent};

use num_complex::Complex64;
use serde::Serialize;

use crate::density::DensityField;
use crate::error::{Error, Result};

/// A point mass (or a spherical direction for stable measures) with weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub location: Vec<f64>,
    pub weight: f64,
}

impl Atom {
    pub fn new(location: Vec<f64>, weight: f64) -> Self {
        Self { location, weight }
    }
}

/// The jump measure `Pi` of the driving Lévy process.
#[derive(Debug, Clone)]
pub enum LevyMeasure {
    Null { dim: usize },
    FiniteAtomic { atoms: Vec<Atom> },
    /// `rate` times a probability density sampled on a bounded grid. The
    /// density is integrated with the grid's rectangle rule, so the
    /// measure is the discrete law on grid nodes.
    CompoundPoissonDensity { rate: f64, density: DensityField },
    /// `Pi(E) = sum_k w_k int_0^inf 1_E(r xi_k) r^{-1-alpha} dr`.
    AlphaStable { alpha: f64, atoms: Vec<Atom> },
}

/// Integrability properties of `Pi` over `|y| > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasureDiagnostics {
    pub log_moment: bool,
    /// Supremum of the finite polynomial moment orders (infinite if all).
    pub poly_moment_sup: f64,
    pub exp_moment: bool,
}

impl MeasureDiagnostics {
    /// Whether `int_{|y|>1} |y|^n Pi(dy)` is finite.
    pub fn poly_moment(&self, n: usize) -> bool {
        (n as f64) < self.poly_moment_sup
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl LevyMeasure {
    pub fn dim(&self) -> Option<usize> {
        match self {
            LevyMeasure::Null { dim } => Some(*dim),
            LevyMeasure::FiniteAtomic { atoms } | LevyMeasure::AlphaStable { atoms, .. } => {
                atoms.first().map(|a| a.location.len())
            }
            LevyMeasure::CompoundPoissonDensity { density, .. } => Some(density.grid.dim()),
        }
    }

    pub fn is_null(&self) -> bool {
        match self {
            LevyMeasure::Null { .. } => true,
            LevyMeasure::FiniteAtomic { atoms } => atoms.iter().all(|a| a.weight == 0.0),
            LevyMeasure::CompoundPoissonDensity { rate, .. } => *rate == 0.0,
            LevyMeasure::AlphaStable { atoms, .. } => atoms.iter().all(|a| a.weight == 0.0),
        }
    }

    pub fn is_stable(&self) -> bool {
        matches!(self, LevyMeasure::AlphaStable { .. }) && !self.is_null()
    }

    /// Checks the measure against dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidMeasure(msg));
        match self {
            LevyMeasure::Null { dim } => {
                if *dim != d {
                    return bad(format!("null measure of dimension {dim}, model has {d}"));
                }
            }
            LevyMeasure::FiniteAtomic { atoms } => {
                for (i, a) in atoms.iter().enumerate() {
                    if a.location.len() != d {
                        return bad(format!("atom {i} has dimension {}", a.location.len()));
                    }
                    if !(a.weight >= 0.0 && a.weight.is_finite()) {
                        return bad(format!("atom {i} has weight {}", a.weight));
                    }
                    if norm(&a.location) == 0.0 {
                        return bad(format!("atom {i} sits at the origin"));
                    }
                }
            }
            LevyMeasure::CompoundPoissonDensity { rate, density } => {
                if density.grid.dim() != d {
                    return bad(format!("jump density has dimension {}", density.grid.dim()));
                }
                if !(*rate >= 0.0 && rate.is_finite()) {
                    return bad(format!("rate {rate}"));
                }
                if density.values.iter().any(|v| v.is_nan() || *v < 0.0) {
                    return bad("jump density takes negative values".into());
                }
                let mass = density.integral();
                if (mass - 1.0).abs() > 1e-8 {
                    return bad(format!("jump density integrates to {mass}"));
                }
            }
            LevyMeasure::AlphaStable { alpha, atoms } => {
                if !(*alpha > 0.0 && *alpha < 2.0) {
                    return bad(format!("stability index {alpha} outside (0, 2)"));
                }
                for (i, a) in atoms.iter().enumerate() {
                    if a.location.len() != d {
                        return bad(format!("direction {i} has dimension {}", a.location.len()));
                    }
                    if (norm(&a.location) - 1.0).abs() > 1e-9 {
                        return bad(format!("direction {i} is not a unit vector"));
                    }
                    if !(a.weight >= 0.0 && a.weight.is_finite()) {
                        return bad(format!("direction {i} has weight {}", a.weight));
                    }
                }
            }
        }
        Ok(())
    }

    /// Finite-activity measures as weighted point masses (empty for null
    /// and stable measures).
    pub fn discrete_atoms(&self) -> Vec<Atom> {
        match self {
            LevyMeasure::FiniteAtomic { atoms } => {
                atoms.iter().filter(|a| a.weight > 0.0).cloned().collect()
            }
            LevyMeasure::CompoundPoissonDensity { rate, density } => {
                let cell = density.grid.cell_volume();
                density
                    .grid
                    .points()
                    .zip(&density.values)
                    .filter(|(x, &v)| v > 0.0 && norm(x) > 0.0)
                    .map(|(x, &v)| Atom::new(x, rate * v * cell))
                    .collect()
            }
            _ => Vec::new(),
        }
    }

    pub fn diagnostics(&self) -> MeasureDiagnostics {
        match self {
            LevyMeasure::AlphaStable { alpha, .. } if !self.is_null() => MeasureDiagnostics {
                log_moment: true,
                poly_moment_sup: *alpha,
                exp_moment: false,
            },
            _ => MeasureDiagnostics {
                log_moment: true,
                poly_moment_sup: f64::INFINITY,
                exp_moment: true,
            },
        }
    }

    /// `Phi(eta) = int (e^{i<eta,y>} - 1 - i<eta,y> 1_{|y|<=1}) Pi(dy)`,
    /// with finite-activity atoms pre-extracted by the caller.
    pub(crate) fn phi_with(&self, atoms: &[Atom], eta: &[f64]) -> Complex64 {
        match self {
            LevyMeasure::Null { .. } => Complex64::new(0.0, 0.0),
            LevyMeasure::FiniteAtomic { .. } | LevyMeasure::CompoundPoissonDensity { .. } => {
                phi_atoms(atoms, eta)
            }
            LevyMeasure::AlphaStable { alpha, atoms } => atoms
                .iter()
                .map(|a| stable::radial_exponent(*alpha, dot(eta, &a.location)) * a.weight)
                .sum(),
        }
    }

    /// Standalone evaluation of `Phi`.
    pub fn phi(&self, eta: &[f64]) -> Complex64 {
        self.phi_with(&self.discrete_atoms(), eta)
    }

    /// `int_{|y|<=1} y Pi(dy)` for finite-activity measures.
    pub fn small_jump_mean(&self, d: usize) -> Vec<f64> {
        let mut m = vec![0.0; d];
        for a in self.discrete_atoms() {
            if norm(&a.location) <= 1.0 {
                for (mi, yi) in m.iter_mut().zip(&a.location) {
                    *mi += a.weight * yi;
                }
            }
        }
        m
    }

    /// `int_{|y|>1} y Pi(dy)` when finite.
    pub fn large_jump_mean(&self, d: usize) -> Result<Vec<f64>> {
        match self {
            LevyMeasure::AlphaStable { alpha, atoms } if !self.is_null() => {
                if *alpha <= 1.0 {
                    return Err(Error::DivergentMoment {
                        context: format!("first moment of a {alpha}-stable measure"),
                    });
                }
                let mut m = vec![0.0; d];
                for a in atoms {
                    for (mi, xi) in m.iter_mut().zip(&a.location) {
                        *mi += a.weight * xi / (alpha - 1.0);
                    }
                }
                Ok(m)
            }
            _ => {
                let mut m = vec![0.0; d];
                for a in self.discrete_atoms() {
                    if norm(&a.location) > 1.0 {
                        for (mi, yi) in m.iter_mut().zip(&a.location) {
                            *mi += a.weight * yi;
                        }
                    }
                }
                Ok(m)
            }
        }
    }

    /// Total jump intensity `Pi(R^d)` of a finite-activity measure.
    pub fn total_mass(&self) -> f64 {
        self.discrete_atoms().iter().map(|a| a.weight).sum()
    }
}

fn phi_atoms(atoms: &[Atom], eta: &[f64]) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for a in atoms {
        let u = dot(eta, &a.location);
        let (s, c) = u.sin_cos();
        let comp = if norm(&a.location) <= 1.0 { u } else { 0.0 };
        acc += Complex64::new(c - 1.0, s - comp) * a.weight;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermitian_symmetry_atoms() {
        let pi = LevyMeasure::FiniteAtomic {
            atoms: vec![Atom::new(vec![1.0, 0.5], 0.7), Atom::new(vec![-2.0, 1.0], 0.3)],
        };
        let eta = [0.4, -1.3];
        let neg = [-0.4, 1.3];
        assert!((pi.phi(&eta) - pi.phi(&neg).conj()).norm() < 1e-15);
    }

    #[test]
    fn rejects_bad_measures() {
        let pi = LevyMeasure::AlphaStable {
            alpha: 2.5,
            atoms: vec![Atom::new(vec![1.0], 1.0)],
        };
        assert!(pi.validate(1).is_err());
        let pi = LevyMeasure::FiniteAtomic {
            atoms: vec![Atom::new(vec![0.0], 1.0)],
        };
        assert!(pi.validate(1).is_err());
    }

    #[test]
    fn stable_poly_moments() {
        let pi = LevyMeasure::AlphaStable {
            alpha: 1.5,
            atoms: vec![Atom::new(vec![1.0], 1.0)],
        };
        let diag = pi.diagnostics();
        assert!(diag.poly_moment(1) && !diag.poly_moment(2) && !diag.exp_moment);
    }
}
