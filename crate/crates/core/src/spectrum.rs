//! Point spectrum: the eigenvalue lattice, multiplicities from the drift
//! operator and from the generator on polynomials, spectral expansions,
//! the Mehler kernel and a compactness diagnostic.

use nalgebra::DVector;
use serde::Serialize;

use crate::density::{
    density_derivative, invariant_density, semigroup_apply_grid, DensityField, GridSpec, StationaryTransform,
};
use crate::error::{Error, Result};
use crate::levy::OuModel;
use crate::matops::{expm, gram_qt, Matrix};
use crate::polyspec::{drift_apply, generator_apply, EigenSystem, MultiIndex, Poly};

/// Largest number of lattice points enumerated.
pub const MAX_LATTICE_POINTS: usize = 1_000_000;
const KERNEL_RTOL: f64 = 1e-9;

/// A value `theta = <n, lambda>` with every multi-index attaining it.
#[derive(Debug, Clone, Serialize)]
pub struct LatticePoint {
    pub theta: f64,
    pub representatives: Vec<MultiIndex>,
}

impl LatticePoint {
    pub fn multiplicity(&self) -> usize {
        self.representatives.len()
    }
}

/// All `<n, rates>` at most `cutoff`, grouped to tolerance `1e-9 (1 + cutoff)`.
pub fn lattice(rates: &[f64], cutoff: f64) -> Result<Vec<LatticePoint>> {
    if rates.iter().any(|&r| r <= 0.0) {
        return Err(Error::UnstableDrift {
            abscissa: -rates.iter().cloned().fold(f64::INFINITY, f64::min),
        });
    }
    let d = rates.len();
    let mut found: Vec<(f64, MultiIndex)> = Vec::new();
    let mut cur = vec![0u32; d];
    fn rec(
        rates: &[f64],
        cutoff: f64,
        pos: usize,
        acc: f64,
        cur: &mut Vec<u32>,
        found: &mut Vec<(f64, MultiIndex)>,
    ) -> Result<()> {
        if pos == rates.len() {
            if found.len() >= MAX_LATTICE_POINTS {
                return Err(Error::CutoffTooLarge { count: found.len() + 1 });
            }
            found.push((acc, MultiIndex(cur.clone())));
            return Ok(());
        }
        let mut k = 0u32;
        loop {
            let v = acc + k as f64 * rates[pos];
            if v > cutoff * (1.0 + 1e-12) + 1e-12 {
                break;
            }
            cur[pos] = k;
            rec(rates, cutoff, pos + 1, v, cur, found)?;
            k += 1;
        }
        cur[pos] = 0;
        Ok(())
    }
    rec(rates, cutoff, 0, 0.0, &mut cur, &mut found)?;
    found.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let tol = 1e-9 * (1.0 + cutoff);
    let mut out: Vec<LatticePoint> = Vec::new();
    for (v, n) in found {
        match out.last_mut() {
            Some(last) if (v - last.theta).abs() <= tol => last.representatives.push(n),
            _ => out.push(LatticePoint {
                theta: v,
                representatives: vec![n],
            }),
        }
    }
    Ok(out)
}

/// Matrix of `L = <Bx, grad>` on homogeneous polynomials of degree `k`,
/// in the basis returned alongside (columns are images).
pub fn drift_operator_matrix(b: &Matrix, k: usize) -> (Vec<MultiIndex>, Matrix) {
    let basis = MultiIndex::of_order(b.nrows(), k);
    let op = operator_matrix(&basis, |p| Ok(drift_apply(b, p))).expect("drift is infallible");
    (basis, op)
}

/// Matrix of the generator on polynomials of degree `<= k_max`.
pub fn generator_matrix(model: &OuModel, k_max: usize) -> Result<(Vec<MultiIndex>, Matrix)> {
    let basis = MultiIndex::up_to_order(model.dim(), k_max);
    let op = operator_matrix(&basis, |p| generator_apply(model, p))?;
    Ok((basis, op))
}

fn operator_matrix(basis: &[MultiIndex], apply: impl Fn(&Poly) -> Result<Poly>) -> Result<Matrix> {
    let n = basis.len();
    let mut m = Matrix::zeros(n, n);
    for (j, idx) in basis.iter().enumerate() {
        let img = apply(&Poly::monomial(idx.clone(), 1.0))?;
        for (i, c) in img.coefficients_on(basis).into_iter().enumerate() {
            m[(i, j)] = c;
        }
        for k in img.terms.keys() {
            if !basis.contains(k) {
                return Err(Error::DimensionMismatch(format!(
                    "operator leaves the polynomial space at {k}"
                )));
            }
        }
    }
    Ok(m)
}

/// Multiplicities of an eigenvalue: algebraic `M_a`, geometric `M_g` and
/// the index `iota` (length of the longest Jordan chain).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Multiplicity {
    pub algebraic: usize,
    pub geometric: usize,
    pub index: usize,
}

fn orthonormal_null_space(a: &Matrix, rtol: f64, scale: f64) -> Matrix {
    let n = a.ncols();
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let sv = &svd.singular_values;
    // nalgebra returns min(rows, cols) singular values; pad for square inputs
    let cols: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= rtol * scale).collect();
    let mut out = Matrix::zeros(n, cols.len());
    for (c, &i) in cols.iter().enumerate() {
        for j in 0..n {
            out[(j, c)] = vt[(i, j)];
        }
    }
    out
}

/// Dimensions of `ker (A - theta)^r` grown by `K_{r+1} = ker P_r (A - theta)`,
/// `P_r` the orthogonal projector onto `K_r^perp`.
pub fn operator_multiplicity(a: &Matrix, theta: f64) -> Multiplicity {
    let n = a.nrows();
    let shifted = a - Matrix::identity(n, n) * theta;
    let scale = shifted.clone().singular_values().max().max(1.0);
    let mut basis = Matrix::zeros(n, 0);
    let mut geometric = 0;
    let mut index = 0;
    for r in 1..=n + 1 {
        let proj = Matrix::identity(n, n) - &basis * basis.transpose();
        let next = orthonormal_null_space(&(proj * &shifted), KERNEL_RTOL, scale);
        if r == 1 {
            geometric = next.ncols();
        }
        if next.ncols() == basis.ncols() {
            break;
        }
        index = r;
        basis = next;
    }
    Multiplicity {
        algebraic: basis.ncols(),
        geometric,
        index,
    }
}

/// Multiplicities of `theta` for `L` on polynomials of degree `<= k_max`,
/// summing over homogeneous blocks.
pub fn multiplicities(b: &Matrix, theta: f64, k_max: usize) -> Result<Multiplicity> {
    let abscissa = crate::matops::spectral_abscissa(b);
    let required = (theta / abscissa).abs().ceil() as usize;
    if required > k_max {
        return Err(Error::CutoffTooSmall { k_max, required });
    }
    let mut total = Multiplicity {
        algebraic: 0,
        geometric: 0,
        index: 0,
    };
    for k in 0..=k_max {
        let (_, op) = drift_operator_matrix(b, k);
        let m = operator_multiplicity(&op, theta);
        total.algebraic += m.algebraic;
        total.geometric += m.geometric;
        total.index = total.index.max(m.index);
    }
    Ok(total)
}

/// One row of a multiplicity table.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralLine {
    pub eigenvalue: f64,
    pub lattice_multiplicity: usize,
    pub representatives: Vec<MultiIndex>,
    pub drift: Multiplicity,
    pub generator: Option<Multiplicity>,
}

/// Spectrum summary serialized by the CLI.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub rates: Vec<f64>,
    pub diagonalizable: bool,
    pub real_spectrum: bool,
    pub varrho: Option<f64>,
    pub kalman_index: usize,
    pub lines: Vec<SpectralLine>,
    pub isospectral: Option<bool>,
    pub semisimple_iff_diagonalizable: bool,
}

/// Lattice eigenvalues with drift- and generator-based multiplicities up to
/// degree `k_max`; only eigenvalues whose eigenfunctions provably have
/// degree `<= k_max` are listed.
pub fn isospectrality_check(model: &OuModel, k_max: usize) -> Result<SpectralReport> {
    let sd = model.spectral();
    if !sd.real_spectrum {
        return Err(Error::NotDiagonalizable);
    }
    let lambda1 = sd.rates[0];
    let points = lattice(&sd.rates, k_max as f64 * lambda1)?;
    let generator = match generator_matrix(model, k_max) {
        Ok((_, op)) => Some(op),
        Err(Error::DivergentMoment { .. }) => None,
        Err(e) => return Err(e),
    };
    let mut lines = Vec::new();
    for p in points {
        let theta = -p.theta;
        let drift = multiplicities(model.b(), theta, k_max)?;
        let gen = generator.as_ref().map(|op| operator_multiplicity(op, theta));
        lines.push(SpectralLine {
            eigenvalue: theta,
            lattice_multiplicity: p.multiplicity(),
            representatives: p.representatives,
            drift,
            generator: gen,
        });
    }
    let isospectral = generator
        .as_ref()
        .map(|_| lines.iter().all(|l| l.generator == Some(l.drift)));
    let semisimple = lines.iter().all(|l| l.drift.algebraic == l.drift.geometric);
    Ok(SpectralReport {
        rates: sd.rates.clone(),
        diagonalizable: sd.diagonalizable,
        real_spectrum: sd.real_spectrum,
        varrho: sd.varrho,
        kalman_index: model.kalman_index(),
        lines,
        isospectral,
        semisimple_iff_diagonalizable: semisimple == sd.diagonalizable,
    })
}

/// `sum_{|n| <= cutoff} e^{-t <n, lambda>} <p, G_n> H_n`.
pub fn spectral_apply(es: &EigenSystem, t: f64, p: &Poly, cutoff: usize) -> Result<Poly> {
    let d = es.model().dim();
    let mut out = Poly::zero(d);
    for n in MultiIndex::up_to_order(d, cutoff) {
        let c = es.coeigen_pairing(p, &n)?;
        if c != 0.0 {
            out = out + es.eigenfunction(&n)?.scale(c * (es.eigenvalue(&n) * t).exp());
        }
    }
    Ok(out.pruned())
}

/// Tolerance for the expansion to count as matching the grid semigroup.
pub const THRESHOLD_TOL: f64 = 1e-4;

/// Empirical threshold time of the truncated spectral expansion.
#[derive(Debug, Clone, Serialize)]
pub struct ThresholdTime {
    pub cutoff: usize,
    /// Smallest scanned `t` from which on every scanned time matches.
    pub t0: Option<f64>,
    /// `(t, max error)` over the bulk of `mu`.
    pub scan: Vec<(f64, f64)>,
}

/// Scans `t` geometrically and compares the `cutoff`-truncated expansion of
/// the window `f(x) = exp(-sum x_j^2 / (2 w_j^2))`, `w_j = L_j / 8`, with
/// the grid semigroup on nodes where `mu >= 1e-3 max mu`.
pub fn threshold_time(model: &OuModel, grid: &GridSpec, cutoff: usize) -> Result<ThresholdTime> {
    let d = model.dim();
    let es = EigenSystem::new(model, cutoff)?;
    let tr = StationaryTransform::new(model, grid)?;
    let mu = tr.density();
    let w: Vec<f64> = grid.halfwidth.iter().map(|l| l / 8.0).collect();
    let f = DensityField::from_fn(grid.clone(), "window", |x| {
        (-x.iter().zip(&w).map(|(xi, wi)| xi * xi / (2.0 * wi * wi)).sum::<f64>()).exp()
    });
    let peak = mu.max_abs();
    let bulk: Vec<usize> = (0..grid.len()).filter(|&k| mu.values[k] >= 1e-3 * peak).collect();
    let vol = grid.cell_volume();
    let mut terms = Vec::new();
    for n in MultiIndex::up_to_order(d, cutoff) {
        let g = es.coeigenfunction_on(&n, &tr);
        let coeff: f64 = (0..grid.len())
            .filter(|&k| g.mask[k])
            .map(|k| f.values[k] * g.field.values[k] * mu.values[k])
            .sum::<f64>()
            * vol;
        let h = es.eigenfunction(&n)?;
        let at: Vec<f64> = bulk.iter().map(|&k| h.eval(&grid.point(k))).collect();
        terms.push((es.eigenvalue(&n), coeff, at));
    }
    let rate = es.rates()[0];
    let mut scan = Vec::new();
    let mut t = 0.02 / rate;
    while t <= 40.0 / rate {
        let exact = semigroup_apply_grid(model, t, &f)?;
        let mut err: f64 = 0.0;
        for (i, &k) in bulk.iter().enumerate() {
            let series: f64 = terms.iter().map(|(ev, c, at)| (ev * t).exp() * c * at[i]).sum();
            let e = exact.values[k];
            if e.is_finite() {
                err = err.max((series - e).abs());
            }
        }
        scan.push((t, err));
        t *= 1.25;
    }
    let t0 = scan
        .iter()
        .rposition(|&(_, e)| e > THRESHOLD_TOL)
        .map_or(Some(scan[0].0), |i| scan.get(i + 1).map(|s| s.0));
    Ok(ThresholdTime { cutoff, t0, scan })
}

/// Truncated Mehler series and its closed form.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MehlerValue {
    pub series: f64,
    pub closed_form: f64,
}

/// `p_t(x, y) / mu(y)` for a Gaussian model, as the series
/// `sum_{|n| <= cutoff} e^{-t <n, lambda>} H_n(x) G_n(y)` and in closed form.
pub fn mehler_kernel(es: &EigenSystem, t: f64, x: &[f64], y: &[f64], cutoff: usize) -> Result<MehlerValue> {
    let model = es.model();
    let d = model.dim();
    let g = es.gaussian_coeigenfunctions(cutoff)?;
    let mut series = 0.0;
    for n in MultiIndex::up_to_order(d, cutoff) {
        let h = es.eigenfunction(&n)?;
        series += (es.eigenvalue(&n) * t).exp() * h.eval(x) * g[&n].eval(y);
    }
    Ok(MehlerValue {
        series,
        closed_form: mehler_closed_form(model, t, x, y)?,
    })
}

/// `p_t(x, y) / mu(y)` for a Gaussian model:
/// `sqrt(det Q_inf / det Q_t) exp(y^T Q_inf^{-1} y / 2 - (y - e^{tB}x)^T Q_t^{-1} (y - e^{tB}x) / 2)`.
pub struct MehlerClosedForm {
    flow: Matrix,
    qt_inv: Matrix,
    qi_inv: Matrix,
    log_det_ratio: f64,
}

impl MehlerClosedForm {
    pub fn new(model: &OuModel, t: f64) -> Result<Self> {
        let singular = || Error::HypoellipticityFailure { rank: 0, dim: model.dim() };
        let qt = gram_qt(model.q(), model.b(), t)?;
        let qi = model.q_inf();
        Ok(Self {
            flow: expm(model.b(), t),
            qt_inv: qt.clone().try_inverse().ok_or_else(singular)?,
            qi_inv: qi.clone().try_inverse().ok_or_else(singular)?,
            log_det_ratio: 0.5 * (qi.determinant().ln() - qt.determinant().ln()),
        })
    }

    pub fn ln_value(&self, x: &[f64], y: &[f64]) -> f64 {
        let yv = DVector::from_column_slice(y);
        let r = &yv - &self.flow * DVector::from_column_slice(x);
        self.log_det_ratio + 0.5 * yv.dot(&(&self.qi_inv * &yv)) - 0.5 * r.dot(&(&self.qt_inv * &r))
    }

    pub fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        self.ln_value(x, y).exp()
    }
}

pub fn mehler_closed_form(model: &OuModel, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(MehlerClosedForm::new(model, t)?.value(x, y))
}

/// Outcome of the compactness diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict")]
pub enum CompactnessVerdict {
    /// A polynomial moment of `Pi` is infinite, so polynomials of that order
    /// are not in every `L^p(mu)` and the semigroup cannot be compact.
    NonCompactNecessaryFail { order: usize },
    /// `|grad W|`, `W = -ln mu`, increases along every axis ray.
    CompactSufficient,
    Inconclusive { reason: String },
}

/// Checks the polynomial moments of `Pi` up to `n_max`, then the growth of
/// `|grad W|` over the outer quarter of the resolvable part of each axis
/// ray through the origin.
pub fn compactness_diagnostic(model: &OuModel, grid: &GridSpec, n_max: usize) -> Result<CompactnessVerdict> {
    let diag = model.diagnostics();
    if let Some(order) = (1..=n_max).find(|&n| !diag.poly_moment(n)) {
        return Ok(CompactnessVerdict::NonCompactNecessaryFail { order });
    }
    let d = model.dim();
    let mu = invariant_density(model, grid)?;
    let grads: Vec<_> = (0..d)
        .map(|j| density_derivative(model, grid, &MultiIndex::unit(d, j)))
        .collect::<Result<_>>()?;
    let peak = mu.max_abs();
    let centre: Vec<usize> = grid.n.iter().map(|&n| n / 2).collect();
    for axis in 0..d {
        for dir in [1i64, -1] {
            let mut profile = Vec::new();
            let mut k = centre[axis] as i64;
            while k >= 0 && (k as usize) < grid.n[axis] {
                let mut idx = centre.clone();
                idx[axis] = k as usize;
                let flat = grid.flatten(&idx);
                let m = mu.values[flat];
                if m <= 1e-9 * peak {
                    break;
                }
                let g: f64 = grads.iter().map(|f| (f.values[flat] / m).powi(2)).sum::<f64>().sqrt();
                profile.push(g);
                k += dir;
            }
            let start = profile.len() * 3 / 4;
            let outer = &profile[start.min(profile.len())..];
            if outer.len() < 3 {
                return Ok(CompactnessVerdict::Inconclusive {
                    reason: format!("axis {axis} ray resolves only {} cells", profile.len()),
                });
            }
            let monotone = outer.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9));
            if !monotone || outer[outer.len() - 1] <= outer[0] {
                return Ok(CompactnessVerdict::Inconclusive {
                    reason: format!("|grad W| not increasing along axis {axis} direction {dir}"),
                });
            }
        }
    }
    Ok(CompactnessVerdict::CompactSufficient)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_time_shrinks_with_cutoff() {
        // standard normal invariant law, rate 1
        let model = OuModel::new(
            Matrix::from_element(1, 1, 2.0),
            Matrix::from_element(1, 1, -1.0),
            crate::levy::LevyMeasure::Null { dim: 1 },
        )
        .unwrap();
        let grid = GridSpec::new(vec![8.0], vec![256]);
        let low = threshold_time(&model, &grid, 4).unwrap();
        let high = threshold_time(&model, &grid, 8).unwrap();
        let (t_low, t_high) = (low.t0.unwrap(), high.t0.unwrap());
        assert!(t_high < t_low, "{t_high} vs {t_low}");
        assert!(low.scan[0].1 > THRESHOLD_TOL);
        // the first neglected degree decays like e^{-(N+1)t}
        assert!(t_low > 0.5 && t_low < 5.0, "{t_low}");
    }

    #[test]
    fn lattice_groups_coincidences() {
        let pts = lattice(&[0.25, 0.75], 1.0).unwrap();
        let at = |v: f64| pts.iter().find(|p| (p.theta - v).abs() < 1e-12).unwrap();
        assert_eq!(at(0.75).multiplicity(), 2);
        assert_eq!(at(1.0).multiplicity(), 2);
        assert_eq!(at(0.5).multiplicity(), 1);
    }

    #[test]
    fn lattice_too_large() {
        assert!(matches!(
            lattice(&[1e-3, 1e-3, 1e-3], 10.0),
            Err(Error::CutoffTooLarge { .. })
        ));
    }

    #[test]
    fn jordan_block_multiplicities() {
        let b = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -1.0]);
        for k in 1..=4usize {
            let m = multiplicities(&b, -(k as f64), 6).unwrap();
            assert_eq!(m, Multiplicity { algebraic: k + 1, geometric: 1, index: k + 1 });
        }
    }

    #[test]
    fn diagonal_multiplicities() {
        let b = Matrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let m = multiplicities(&b, -2.0, 6).unwrap();
        assert_eq!(m, Multiplicity { algebraic: 2, geometric: 2, index: 1 });
        assert!(matches!(multiplicities(&b, -7.0, 6), Err(Error::CutoffTooSmall { .. })));
    }
}
