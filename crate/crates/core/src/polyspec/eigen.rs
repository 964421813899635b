use std::collections::BTreeMap;

use super::cumulants::{moments_from_cumulants, CumulantTable};
use super::kernel::{build_v, reference_variance, MomentKernel};
use super::multiindex::{factorial, MultiIndex};
use super::poly::Poly;
use crate::density::{DensityField, GridSpec, StationaryTransform};
use crate::error::{Error, Result};
use crate::levy::OuModel;
use crate::matops::Matrix;

/// Cells where the invariant density is at most this are masked.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Grid field with a validity mask.
#[derive(Debug, Clone)]
pub struct MaskedField {
    pub field: DensityField,
    pub mask: Vec<bool>,
}

/// `prod_j phi_{n_j}(s_j x_j)` with
/// `phi_k(x) = e^{x^2/2} (d/dx)^k e^{-x^2/2} / sqrt(k!) = (-1)^k He_k(x) / sqrt(k!)`,
/// orthonormal in `L^2(N(0, diag(s_j^{-2})))`.
pub fn hermite_orthonormal(n: &MultiIndex, scales: &[f64]) -> Poly {
    let d = n.dim();
    let mut out = Poly::constant(d, 1.0);
    for (j, &k) in n.0.iter().enumerate() {
        let k = k as usize;
        // He_k coefficients by He_{k+1} = x He_k - k He_{k-1}
        let mut prev = vec![1.0];
        let mut cur = vec![0.0, 1.0];
        let he = if k == 0 {
            prev
        } else {
            for i in 1..k {
                let mut next = vec![0.0; i + 2];
                for (p, c) in cur.iter().enumerate() {
                    next[p + 1] += c;
                }
                for (p, c) in prev.iter().enumerate() {
                    next[p] -= i as f64 * c;
                }
                prev = cur;
                cur = next;
            }
            cur
        };
        let norm = if k.is_multiple_of(2) { 1.0 } else { -1.0 } / factorial(k).sqrt();
        let mut factor = Poly::zero(d);
        for (p, c) in he.iter().enumerate() {
            let mut idx = MultiIndex::zeros(d);
            idx.0[j] = p as u32;
            factor.add_term(idx, c * norm * scales[j].powi(p as i32));
        }
        out = &out * &factor;
    }
    out
}

/// Eigenfunctions `H_n = V^{-1} h_n` and co-eigenfunctions `G_n = V* h_n`
/// of a model whose drift is diagonalizable with real spectrum.
///
/// The reference law is `N(0, (varrho/lambda_1) I)` in the coordinates
/// `y = M x`, and `h_n` are its orthonormal Hermite polynomials with the
/// common scale `s = sqrt(lambda_1 / varrho)`.
pub struct EigenSystem<'a> {
    model: &'a OuModel,
    max_degree: usize,
    rates: Vec<f64>,
    m: Matrix,
    m_inv: Matrix,
    scale: f64,
    v_kernel: MomentKernel,
    reference_moments: BTreeMap<MultiIndex, f64>,
}

impl<'a> EigenSystem<'a> {
    pub fn new(model: &'a OuModel, max_degree: usize) -> Result<Self> {
        let sd = model.spectral();
        let (m, m_inv) = match (&sd.m, &sd.m_inv) {
            (Some(m), Some(mi)) => (m.clone(), mi.clone()),
            _ => return Err(Error::NotDiagonalizable),
        };
        let var = reference_variance(model)?;
        let d = model.dim();
        let v_kernel = build_v(model, max_degree.max(1))?;
        let reference = CumulantTable::gaussian(&(Matrix::identity(d, d) * var), 2 * max_degree + 2);
        let reference_moments = moments_from_cumulants(&reference, 2 * max_degree + 2)?;
        Ok(Self {
            model,
            max_degree,
            rates: sd.rates.clone(),
            m,
            m_inv,
            scale: (1.0 / var).sqrt(),
            v_kernel,
            reference_moments,
        })
    }

    pub fn model(&self) -> &OuModel {
        self.model
    }
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }
    pub fn m(&self) -> &Matrix {
        &self.m
    }
    pub fn m_inv(&self) -> &Matrix {
        &self.m_inv
    }
    /// `sqrt(lambda_1 / varrho)`.
    pub fn scale(&self) -> f64 {
        self.scale
    }
    pub fn varrho(&self) -> f64 {
        self.rates[0] / (self.scale * self.scale)
    }
    pub fn v_kernel(&self) -> &MomentKernel {
        &self.v_kernel
    }

    /// Diagonal diffusion `dY = -diag(lambda) Y dt + sqrt(Q_ref) dW` whose
    /// invariant law is the reference Gaussian; `V` intertwines it with the model.
    pub fn reference_model(&self) -> Result<OuModel> {
        let d = self.rates.len();
        let var = 1.0 / (self.scale * self.scale);
        let q = Matrix::from_fn(d, d, |i, j| if i == j { 2.0 * var * self.rates[i] } else { 0.0 });
        let b = Matrix::from_fn(d, d, |i, j| if i == j { -self.rates[i] } else { 0.0 });
        OuModel::new(q, b, crate::levy::LevyMeasure::Null { dim: d })
    }

    /// `-<n, lambda>`.
    pub fn eigenvalue(&self, n: &MultiIndex) -> f64 {
        -n.dot(&self.rates)
    }

    fn check_degree(&self, k: usize) -> Result<()> {
        if k > self.max_degree {
            return Err(Error::IncompleteTable {
                needed: k,
                available: self.max_degree,
            });
        }
        Ok(())
    }

    pub fn hermite(&self, n: &MultiIndex) -> Poly {
        hermite_orthonormal(n, &vec![self.scale; n.dim()])
    }

    /// `H_n = V^{-1} h_n` by back-substitution.
    pub fn eigenfunction(&self, n: &MultiIndex) -> Result<Poly> {
        self.check_degree(n.order())?;
        self.v_kernel.invert(&self.hermite(n))
    }

    /// All `H_n`, `|n| <= max_degree`, read off the generating function
    /// `sum_n H_n(x) z^n / sqrt(n!) = exp(-<Mx, Dz> - |z|^2/2) / F(z)` with
    /// `D = s I` and `ln F(z) = K_mu(-M^T D z) - |z|^2/2`, where `K_mu` is the
    /// cumulant generating function of the invariant law. The sign of `z`
    /// follows the `(-1)^k` convention of `phi_k`.
    pub fn eigenfunctions_generating(&self) -> Result<BTreeMap<MultiIndex, Poly>> {
        let d = self.model.dim();
        let k = self.max_degree;
        let keep = |idx: &MultiIndex| idx.0[d..].iter().map(|&e| e as usize).sum::<usize>() <= k;
        let s = self.scale;
        let mut exponent = Poly::zero(2 * d);
        for j in 0..d {
            for i in 0..d {
                let mut idx = MultiIndex::zeros(2 * d);
                idx.0[i] = 1;
                idx.0[d + j] = 1;
                exponent.add_term(idx, -s * self.m[(j, i)]);
            }
        }
        let mut half_sq = Poly::zero(2 * d);
        for j in 0..d {
            let mut idx = MultiIndex::zeros(2 * d);
            idx.0[d + j] = 2;
            half_sq.add_term(idx, 0.5);
        }
        let cumulants = self.model.cumulants_mu(k.max(1))?;
        let mut cgf = Poly::zero(d);
        for (m, v) in &cumulants.entries {
            cgf.add_term(m.clone(), v / m.factorial());
        }
        let a = self.m.transpose() * -s;
        let cgf_z = cgf.compose_linear(&a);
        let mut ln_f = Poly::zero(2 * d);
        for (m, v) in &cgf_z.terms {
            let mut idx = MultiIndex::zeros(2 * d);
            idx.0[d..].copy_from_slice(&m.0);
            ln_f.add_term(idx, *v);
        }
        ln_f = ln_f - half_sq.clone();
        let series_exponent = (exponent - half_sq - ln_f).filtered(keep);
        let series = series_exponent.exp_series(k, &keep);
        let mut out: BTreeMap<MultiIndex, Poly> = MultiIndex::up_to_order(d, k)
            .into_iter()
            .map(|n| (n, Poly::zero(d)))
            .collect();
        for (idx, c) in &series.terms {
            let n = MultiIndex(idx.0[d..].to_vec());
            let x = MultiIndex(idx.0[..d].to_vec());
            if let Some(p) = out.get_mut(&n) {
                p.add_term(x, c * n.factorial().sqrt());
            }
        }
        Ok(out.into_iter().map(|(n, p)| (n, p.pruned())).collect())
    }

    /// `E p` under the reference Gaussian.
    pub fn reference_expectation(&self, p: &Poly) -> Result<f64> {
        p.terms
            .iter()
            .map(|(m, c)| {
                self.reference_moments
                    .get(m)
                    .map(|v| c * v)
                    .ok_or(Error::IncompleteTable {
                        needed: m.order(),
                        available: 2 * self.max_degree + 2,
                    })
            })
            .sum()
    }

    /// `<p, G_n>_mu = <V p, h_n>` in the reference `L^2`.
    pub fn coeigen_pairing(&self, p: &Poly, n: &MultiIndex) -> Result<f64> {
        let vp = self.v_kernel.apply(p)?;
        self.reference_expectation(&(&vp * &self.hermite(n)))
    }

    /// `<H_n, G_m>_mu`.
    pub fn biorthogonality_inner(&self, n: &MultiIndex, m: &MultiIndex) -> Result<f64> {
        self.coeigen_pairing(&self.eigenfunction(n)?, m)
    }

    fn mu_expectation(&self, p: &Poly) -> Result<f64> {
        let cumulants = self.model.cumulants_mu(p.degree().max(1))?;
        let moments = moments_from_cumulants(&cumulants, p.degree().max(1))?;
        Ok(p.terms.iter().map(|(m, c)| c * moments[m]).sum())
    }

    /// `prod_j (c_j . grad)^{m_j} p` with `c_j` the columns of `M^{-1}`.
    fn eigen_directional(&self, p: &Poly, m: &MultiIndex) -> Poly {
        let mut out = p.clone();
        for (j, &k) in m.0.iter().enumerate() {
            let c: Vec<f64> = self.m_inv.column(j).iter().cloned().collect();
            for _ in 0..k {
                out = out.directional(&c);
            }
        }
        out
    }

    /// `<H_n, G_m>_mu` by integration by parts:
    /// `(-s)^{-|m|} / sqrt(m!) E_mu[prod_j (c_j . grad)^{m_j} H_n]`.
    pub fn ibp_pairing(&self, n: &MultiIndex, m: &MultiIndex) -> Result<f64> {
        let h = self.eigenfunction(n)?;
        let dh = self.eigen_directional(&h, m);
        let sign = if m.order().is_multiple_of(2) { 1.0 } else { -1.0 };
        Ok(sign * self.mu_expectation(&dh)? * self.scale.powi(-(m.order() as i32)) / m.factorial().sqrt())
    }

    /// `<H_n, (-1)^{|m|} d^m mu / (sqrt(m!) mu)>_mu = E_mu[d^m H_n] / sqrt(m!)`.
    pub fn coordinate_ibp_pairing(&self, n: &MultiIndex, m: &MultiIndex) -> Result<f64> {
        let h = self.eigenfunction(n)?;
        Ok(self.mu_expectation(&h.partial(m))? / m.factorial().sqrt())
    }

    /// Constant `c_n` with `(-1)^{|n|} d^n mu / (sqrt(n!) mu) = c_n G_n`, defined
    /// when `M` is the identity.
    pub fn coordinate_constant(&self, n: &MultiIndex) -> Option<f64> {
        let d = self.model.dim();
        if (&self.m - Matrix::identity(d, d)).amax() > 1e-12 {
            return None;
        }
        Some((-self.scale).powi(n.order() as i32))
    }

    fn masked_ratio(tr: &StationaryTransform, n: &MultiIndex, dirs: &Matrix, factor: f64, label: &str) -> MaskedField {
        let mu = tr.density();
        let dmu = tr.derivative(n, dirs);
        let mask: Vec<bool> = mu.values.iter().map(|&v| v > DENSITY_FLOOR).collect();
        let values = mu
            .values
            .iter()
            .zip(&dmu.values)
            .zip(&mask)
            .map(|((&m, &dm), &ok)| if ok { factor * dm / m } else { 0.0 })
            .collect();
        MaskedField {
            field: DensityField::new(tr.grid.clone(), values, label),
            mask,
        }
    }

    /// `G_n = V* h_n = s^{-|n|} / sqrt(n!) prod_j (c_j . grad)^{n_j} mu / mu` on a grid.
    pub fn coeigenfunction_grid(&self, n: &MultiIndex, grid: &GridSpec) -> Result<MaskedField> {
        Ok(self.coeigenfunction_on(n, &StationaryTransform::new(self.model, grid)?))
    }

    pub fn coeigenfunction_on(&self, n: &MultiIndex, tr: &StationaryTransform) -> MaskedField {
        let factor = self.scale.powi(-(n.order() as i32)) / n.factorial().sqrt();
        Self::masked_ratio(tr, n, &self.m_inv, factor, &format!("G_{n}"))
    }

    /// `(-1)^{|n|} d^n mu / (sqrt(n!) mu)` on a grid.
    pub fn coordinate_coeigen_grid(&self, n: &MultiIndex, grid: &GridSpec) -> Result<MaskedField> {
        Ok(self.coordinate_coeigen_on(n, &StationaryTransform::new(self.model, grid)?))
    }

    pub fn coordinate_coeigen_on(&self, n: &MultiIndex, tr: &StationaryTransform) -> MaskedField {
        let d = self.model.dim();
        let sign = if n.order().is_multiple_of(2) { 1.0 } else { -1.0 };
        Self::masked_ratio(
            tr,
            n,
            &Matrix::identity(d, d),
            sign / n.factorial().sqrt(),
            &format!("coordinate co-eigenfunction {n}"),
        )
    }

    /// `mu`-weighted least-squares constant `c` with `a = c b` on the joint
    /// mask.
    pub fn fitted_constant(a: &MaskedField, b: &MaskedField, mu: &DensityField) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..mu.values.len() {
            if a.mask[i] && b.mask[i] {
                let w = mu.values[i];
                num += w * a.field.values[i] * b.field.values[i];
                den += w * b.field.values[i] * b.field.values[i];
            }
        }
        num / den
    }

    /// For Gaussian invariant laws: `G_m` as polynomials, from
    /// `mu(y + C u) / mu(y) = exp(-y^T P C u - u^T C^T P C u / 2)`,
    /// `P = Q_inf^{-1}`, `C = M^{-1}`.
    pub fn gaussian_coeigenfunctions(&self, max_order: usize) -> Result<BTreeMap<MultiIndex, Poly>> {
        if !self.model.pi().is_null() {
            return Err(Error::InvalidMeasure(
                "closed-form co-eigenfunctions need a Gaussian invariant law".into(),
            ));
        }
        let d = self.model.dim();
        let p = self
            .model
            .q_inf()
            .clone()
            .try_inverse()
            .ok_or(Error::OrderingViolated { min_eigenvalue: 0.0 })?;
        let pc = &p * &self.m_inv;
        let cpc = self.m_inv.transpose() * &pc;
        let mut exponent = Poly::zero(2 * d);
        for i in 0..d {
            for j in 0..d {
                let mut idx = MultiIndex::zeros(2 * d);
                idx.0[i] = 1;
                idx.0[d + j] = 1;
                exponent.add_term(idx, -pc[(i, j)]);
                let mut idx = MultiIndex::zeros(2 * d);
                idx.0[d + i] += 1;
                idx.0[d + j] += 1;
                exponent.add_term(idx, -0.5 * cpc[(i, j)]);
            }
        }
        let keep = |idx: &MultiIndex| idx.0[d..].iter().map(|&e| e as usize).sum::<usize>() <= max_order;
        let series = exponent.exp_series(max_order, &keep);
        let mut out: BTreeMap<MultiIndex, Poly> = MultiIndex::up_to_order(d, max_order)
            .into_iter()
            .map(|n| (n, Poly::zero(d)))
            .collect();
        for (idx, c) in &series.terms {
            let m = MultiIndex(idx.0[d..].to_vec());
            let y = MultiIndex(idx.0[..d].to_vec());
            let f = self.scale.powi(-(m.order() as i32)) * m.factorial().sqrt();
            if let Some(g) = out.get_mut(&m) {
                g.add_term(y, c * f);
            }
        }
        Ok(out.into_iter().map(|(n, p)| (n, p.pruned())).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{Atom, LevyMeasure};
    use crate::polyspec::poly_semigroup_apply;

    fn kinetic() -> OuModel {
        OuModel::new(
            Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]),
            Matrix::from_row_slice(2, 2, &[-1.0, 3.0 / 16.0, -1.0, 0.0]),
            LevyMeasure::Null { dim: 2 },
        )
        .unwrap()
    }

    fn cp1d() -> OuModel {
        OuModel::new(
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, -1.0),
            LevyMeasure::FiniteAtomic {
                atoms: vec![Atom::new(vec![1.0], 1.0)],
            },
        )
        .unwrap()
    }

    #[test]
    fn hermite_sign_and_normalization() {
        let h1 = hermite_orthonormal(&MultiIndex(vec![1, 0]), &[1.0, 1.0]);
        assert_eq!(h1.coeff(&MultiIndex(vec![1, 0])), -1.0);
        let h2 = hermite_orthonormal(&MultiIndex(vec![2]), &[1.0]);
        let r = 2f64.sqrt().recip();
        assert!((h2.coeff(&MultiIndex(vec![2])) - r).abs() < 1e-15);
        assert!((h2.coeff(&MultiIndex(vec![0])) + r).abs() < 1e-15);
    }

    #[test]
    fn eigen_relation_kinetic_fp() {
        let model = kinetic();
        let es = EigenSystem::new(&model, 4).unwrap();
        let t = 0.8;
        for n in MultiIndex::up_to_order(2, 4) {
            let h = es.eigenfunction(&n).unwrap();
            let pt = poly_semigroup_apply(&model, t, &h).unwrap();
            let expect = h.scale((es.eigenvalue(&n) * t).exp());
            assert!(pt.max_abs_diff(&expect) < 1e-10, "n {n}: {}", pt.max_abs_diff(&expect));
        }
    }

    #[test]
    fn v_intertwines_reference_and_model() {
        for model in [kinetic(), cp1d()] {
            let es = EigenSystem::new(&model, 4).unwrap();
            let reference = es.reference_model().unwrap();
            let d = model.dim();
            for n in MultiIndex::up_to_order(d, 4) {
                let p = Poly::monomial(n.clone(), 1.0) + Poly::constant(d, 0.5);
                for t in [0.3, 2.0] {
                    let lhs = es.v_kernel().apply(&poly_semigroup_apply(&model, t, &p).unwrap()).unwrap();
                    let rhs = poly_semigroup_apply(&reference, t, &es.v_kernel().apply(&p).unwrap()).unwrap();
                    assert!(lhs.max_abs_diff(&rhs) < 1e-10, "n {n} t {t}: {}", lhs.max_abs_diff(&rhs));
                }
            }
        }
    }

    #[test]
    fn generating_function_agrees_with_back_substitution() {
        for model in [kinetic(), cp1d()] {
            let es = EigenSystem::new(&model, 5).unwrap();
            let gen = es.eigenfunctions_generating().unwrap();
            for (n, g) in &gen {
                let h = es.eigenfunction(n).unwrap();
                assert!(g.max_abs_diff(&h) < 1e-10, "n {n}: {}", g.max_abs_diff(&h));
            }
        }
    }

    #[test]
    fn biorthogonality_exact_and_by_parts() {
        let model = cp1d();
        let es = EigenSystem::new(&model, 5).unwrap();
        for n in MultiIndex::up_to_order(1, 5) {
            for m in MultiIndex::up_to_order(1, 5) {
                let delta = if n == m { 1.0 } else { 0.0 };
                assert!((es.biorthogonality_inner(&n, &m).unwrap() - delta).abs() < 1e-12);
                assert!((es.ibp_pairing(&n, &m).unwrap() - delta).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gaussian_coeigenfunctions_match_hermite_for_standard_normal() {
        let model = OuModel::new(
            Matrix::from_element(1, 1, 2.0),
            Matrix::from_element(1, 1, -1.0),
            LevyMeasure::Null { dim: 1 },
        )
        .unwrap();
        let es = EigenSystem::new(&model, 8).unwrap();
        let g = es.gaussian_coeigenfunctions(8).unwrap();
        for (n, gn) in g {
            assert!(gn.max_abs_diff(&es.hermite(&n)) < 1e-12);
        }
    }
}
