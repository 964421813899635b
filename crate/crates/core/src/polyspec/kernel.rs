use std::collections::BTreeMap;

use super::cumulants::{moments_from_cumulants, CumulantTable};
use super::multiindex::MultiIndex;
use super::poly::Poly;
use crate::error::{Error, Result};
use crate::levy::OuModel;
use crate::matops::{min_eigenvalue, qinf, Matrix, RANK_RTOL};

/// Markov kernel `K f(x) = E f(A x + Y)` known through the cumulants of `Y`
/// (and the optional pre-map `A`).
#[derive(Debug, Clone)]
pub struct MomentKernel {
    pub dim: usize,
    pub cumulants: CumulantTable,
    pub moments: BTreeMap<MultiIndex, f64>,
    pub pre_map: Option<Matrix>,
}

impl MomentKernel {
    pub fn new(cumulants: CumulantTable, pre_map: Option<Matrix>) -> Result<Self> {
        let moments = moments_from_cumulants(&cumulants, cumulants.max_order)?;
        Ok(Self {
            dim: cumulants.dim,
            cumulants,
            moments,
            pre_map,
        })
    }

    pub fn max_order(&self) -> usize {
        self.cumulants.max_order
    }

    /// `p -> E p(x + Y)`.
    fn convolve_moments(&self, p: &Poly) -> Result<Poly> {
        if p.degree() > self.max_order() && !p.is_zero() {
            return Err(Error::IncompleteTable {
                needed: p.degree(),
                available: self.max_order(),
            });
        }
        let mut out = Poly::zero(p.dim);
        for (gamma, c) in &p.terms {
            for beta in gamma.below() {
                let m = self.moments[&beta];
                if m != 0.0 {
                    out.add_term(gamma.sub(&beta), c * gamma.binomial(&beta) * m);
                }
            }
        }
        Ok(out.pruned())
    }

    /// `p -> E p(A x + Y)`.
    pub fn apply(&self, p: &Poly) -> Result<Poly> {
        let convolved = self.convolve_moments(p)?;
        Ok(match &self.pre_map {
            Some(a) => convolved.compose_linear(a).pruned(),
            None => convolved,
        })
    }

    /// Solves `E q(A x + Y) = p` by back-substitution from the top degree.
    pub fn invert(&self, p: &Poly) -> Result<Poly> {
        let target = match &self.pre_map {
            None => p.clone(),
            Some(a) => {
                let d = a.nrows();
                if crate::matops::numerical_rank(a, RANK_RTOL) < d {
                    return Err(Error::SingularPreMap);
                }
                let inv = a.clone().try_inverse().ok_or(Error::SingularPreMap)?;
                p.compose_linear(&inv).pruned()
            }
        };
        // convolution is the identity plus a strictly degree-lowering part
        let mut u = target.clone();
        for _ in 0..=target.degree() {
            let cu = self.convolve_moments(&u)?;
            u = (target.clone() - (cu - u)).pruned();
        }
        Ok(u)
    }
}

/// `E p(A x + Y)`.
pub fn convolve_markov(kernel: &MomentKernel, p: &Poly) -> Result<Poly> {
    kernel.apply(p)
}

/// Inverse of [`convolve_markov`] on polynomials.
pub fn invert_on_polys(kernel: &MomentKernel, p: &Poly) -> Result<Poly> {
    kernel.invert(p)
}

fn ordering_check(cov: &Matrix, scale: f64) -> Result<()> {
    let lmin = min_eigenvalue(cov);
    if lmin < -1e-12 * (1.0 + scale) {
        return Err(Error::OrderingViolated { min_eigenvalue: lmin });
    }
    Ok(())
}

/// Kernel `Lambda` intertwining the diffusion with diffusion matrix
/// `q_tilde` (same drift) and the model: Gaussian part `Q_inf - Q~_inf`
/// plus the jump part of the invariant law.
pub fn build_lambda(model: &OuModel, q_tilde: &Matrix, max_order: usize) -> Result<MomentKernel> {
    let qt_inf = qinf(q_tilde, model.b())?;
    let cov = model.q_inf() - &qt_inf;
    ordering_check(&cov, model.q_inf().amax())?;
    let cumulants = CumulantTable::gaussian(&cov, max_order).add(&model.jump_cumulants(max_order)?);
    MomentKernel::new(cumulants, None)
}

/// Covariance `(varrho / lambda_1) I` of the reference Gaussian.
pub fn reference_variance(model: &OuModel) -> Result<f64> {
    let sd = model.spectral();
    match (sd.varrho, sd.rates.first()) {
        (Some(v), Some(&l1)) if sd.m.is_some() => Ok(v / l1),
        _ => Err(Error::NotDiagonalizable),
    }
}

/// Kernel `V f(x) = E f(M^{-1} x + Y)` intertwining the reference diffusion
/// with the model: `Y` has Gaussian part `Q_inf - (varrho/lambda_1) M^{-1} M^{-T}`
/// and the jump part of the invariant law.
pub fn build_v(model: &OuModel, max_order: usize) -> Result<MomentKernel> {
    let sd = model.spectral();
    let m_inv = sd.m_inv.as_ref().ok_or(Error::NotDiagonalizable)?;
    let var = reference_variance(model)?;
    let cov = model.q_inf() - m_inv * m_inv.transpose() * var;
    ordering_check(&cov, model.q_inf().amax())?;
    let cumulants = CumulantTable::gaussian(&cov, max_order).add(&model.jump_cumulants(max_order)?);
    MomentKernel::new(cumulants, Some(m_inv.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{Atom, LevyMeasure};
    use proptest::prelude::*;

    fn kinetic() -> OuModel {
        OuModel::new(
            Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]),
            Matrix::from_row_slice(2, 2, &[-1.0, 3.0 / 16.0, -1.0, 0.0]),
            LevyMeasure::Null { dim: 2 },
        )
        .unwrap()
    }

    fn arb_poly(d: usize, deg: usize) -> impl Strategy<Value = Poly> {
        let basis = MultiIndex::up_to_order(d, deg);
        let n = basis.len();
        proptest::collection::vec(-2.0f64..2.0, n).prop_map(move |c| {
            let mut p = Poly::zero(d);
            for (m, v) in basis.iter().zip(c) {
                p.add_term(m.clone(), v);
            }
            p
        })
    }

    #[test]
    fn v_kernel_gaussian_block_is_singular_for_kinetic_fp() {
        let model = kinetic();
        let v = build_v(&model, 2).unwrap();
        let cov = Matrix::from_fn(2, 2, |i, j| {
            v.cumulants.get(&MultiIndex::unit(2, i).plus_unit(j)).unwrap()
        });
        let l = min_eigenvalue(&cov);
        assert!(l.abs() < 1e-10 && l > -1e-12, "{l}");
    }

    #[test]
    fn lambda_ordering_violation() {
        let model = kinetic();
        let big = Matrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            build_lambda(&model, &big, 2),
            Err(Error::OrderingViolated { .. })
        ));
    }

    #[test]
    fn convolution_with_poisson_kernel() {
        // Y ~ Poisson(l): E (x + Y)^2 = x^2 + 2 l x + l + l^2
        let l = 0.4;
        let mut c = CumulantTable::new(1, 3);
        for k in 1..=3 {
            c.set(MultiIndex(vec![k]), l);
        }
        let k = MomentKernel::new(c, None).unwrap();
        let p = Poly::monomial(MultiIndex(vec![2]), 1.0);
        let q = k.apply(&p).unwrap();
        assert!((q.coeff(&MultiIndex(vec![1])) - 2.0 * l).abs() < 1e-15);
        assert!((q.coeff(&MultiIndex(vec![0])) - (l + l * l)).abs() < 1e-15);
    }

    #[test]
    fn singular_premap_rejected() {
        let c = CumulantTable::gaussian(&Matrix::identity(2, 2), 2);
        let k = MomentKernel::new(c, Some(Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]))).unwrap();
        let p = Poly::variable(2, 0);
        assert!(matches!(k.invert(&p), Err(Error::SingularPreMap)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn inversion_round_trip(p in arb_poly(2, 5),
                                a in proptest::collection::vec(-1.0f64..1.0, 4),
                                k3 in -0.5f64..0.5) {
            let am = Matrix::from_row_slice(2, 2, &a) + Matrix::identity(2, 2) * 2.5;
            let mut c = CumulantTable::gaussian(&Matrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]), 5);
            c.set(MultiIndex(vec![3, 0]), k3);
            c.set(MultiIndex(vec![1, 0]), 0.3);
            let kern = MomentKernel::new(c, Some(am)).unwrap();
            let q = kern.invert(&p).unwrap();
            let back = kern.apply(&q).unwrap();
            prop_assert!(back.max_abs_diff(&p) <= 1e-10 * (1.0 + p.max_abs_coeff()));
        }

        #[test]
        fn inverse_is_negated_cumulant_convolution(p in arb_poly(1, 6), k3 in -0.5f64..0.5) {
            let mut c = CumulantTable::gaussian(&Matrix::identity(1, 1), 6);
            c.set(MultiIndex(vec![3]), k3);
            c.set(MultiIndex(vec![1]), -0.7);
            let kern = MomentKernel::new(c.clone(), None).unwrap();
            let formal = MomentKernel::new(c.negated(), None).unwrap();
            let a = kern.invert(&p).unwrap();
            let b = formal.apply(&p).unwrap();
            prop_assert!(a.max_abs_diff(&b) < 1e-10 * (1.0 + p.max_abs_coeff()));
        }
    }

    #[test]
    fn lambda_with_jumps_is_well_defined() {
        let model = OuModel::new(
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, -1.0),
            LevyMeasure::FiniteAtomic {
                atoms: vec![Atom::new(vec![1.0], 1.0)],
            },
        )
        .unwrap();
        let lam = build_lambda(&model, &Matrix::from_element(1, 1, 0.5), 4).unwrap();
        // Gaussian part 1/2 - 1/4, jump variance 1/2
        assert!((lam.cumulants.get(&MultiIndex(vec![2])).unwrap() - 0.75).abs() < 1e-13);
    }
}
