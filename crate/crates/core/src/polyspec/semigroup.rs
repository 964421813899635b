use super::kernel::MomentKernel;
use super::multiindex::MultiIndex;
use super::poly::Poly;
use crate::error::{Error, Result};
use crate::levy::OuModel;
use crate::matops::Matrix;

/// Kernel of `P_t`: pre-map `e^{tB}` and the cumulants of `Z_t`.
pub fn transition_kernel(model: &OuModel, t: f64, max_order: usize) -> Result<MomentKernel> {
    let te = model.transition_exponent(t)?;
    MomentKernel::new(te.cumulants(max_order)?, Some(te.flow().clone()))
}

/// `P_t p(x) = E p(e^{tB} x + Z_t)` exactly on polynomials.
pub fn poly_semigroup_apply(model: &OuModel, t: f64, p: &Poly) -> Result<Poly> {
    transition_kernel(model, t, p.degree().max(1))?.apply(p)
}

/// `p -> p(A x)`.
pub fn compose_linear(p: &Poly, a: &Matrix) -> Poly {
    p.compose_linear(a)
}

/// `L p = <Bx, grad p>`.
pub fn drift_apply(b: &Matrix, p: &Poly) -> Poly {
    let d = b.nrows();
    let mut out = Poly::zero(d);
    for i in 0..d {
        let di = p.derivative(i);
        if di.is_zero() {
            continue;
        }
        let row: Vec<f64> = b.row(i).iter().cloned().collect();
        out = out + &Poly::linear(&row) * &di;
    }
    out.pruned()
}

/// Generator applied to a polynomial: diffusion, drift and the jump part
/// expanded through the moments of `Pi`.
pub fn generator_apply(model: &OuModel, p: &Poly) -> Result<Poly> {
    let d = model.dim();
    let q = model.q();
    let mut out = drift_apply(model.b(), p);
    for i in 0..d {
        for j in 0..d {
            if q[(i, j)] != 0.0 {
                out = out + p.derivative(i).derivative(j).scale(0.5 * q[(i, j)]);
            }
        }
    }
    if model.pi().is_null() {
        return Ok(out.pruned());
    }
    if model.pi().is_stable() {
        return Err(Error::DivergentMoment {
            context: "generator on polynomials under an alpha-stable jump measure".into(),
        });
    }
    let big = model.pi().large_jump_mean(d)?;
    for (i, &m) in big.iter().enumerate() {
        out = out + p.derivative(i).scale(m);
    }
    for k in 2..=p.degree() {
        for beta in MultiIndex::of_order(d, k) {
            let jb: f64 = model
                .atoms()
                .iter()
                .map(|a| a.weight * beta.monomial(&a.location))
                .sum();
            if jb != 0.0 {
                out = out + p.partial(&beta).scale(jb / beta.factorial());
            }
        }
    }
    Ok(out.pruned())
}
