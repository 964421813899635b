//! Dense matrix primitives: exponential, Gramians, Lyapunov solve, Kalman
//! index and spectral data of the drift.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::FlowQuadrature;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative singular-value threshold for numerical rank.
pub const RANK_RTOL: f64 = 1e-10;
const EIGEN_RANK_RTOL: f64 = 1e-8;
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// `e^{tB}` by scaling and squaring with a degree-13 Pade approximant.
pub fn expm(b: &Matrix, t: f64) -> Matrix {
    let n = b.nrows();
    let a = b * t;
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a / 2f64.powi(s);
    let id = Matrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let c = &PADE13;
    let u_inner = &a6 * (&a6 * c[13] + &a4 * c[11] + &a2 * c[9]);
    let u = &a * (u_inner + &a6 * c[7] + &a4 * c[5] + &a2 * c[3] + &id * c[1]);
    let v = &a6 * (&a6 * c[12] + &a4 * c[10] + &a2 * c[8])
        + &a6 * c[6]
        + &a4 * c[4]
        + &a2 * c[2]
        + &id * c[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Pade denominator is invertible");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Largest real part of the eigenvalues.
pub fn spectral_abscissa(b: &Matrix) -> f64 {
    b.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Number of singular values above `rtol * sigma_max`.
pub fn numerical_rank(m: &Matrix, rtol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rtol * smax).count()
}

/// Symmetric square root of a positive semidefinite matrix; negative
/// eigenvalues from roundoff are clipped.
pub fn sqrt_psd(q: &Matrix) -> Matrix {
    let sym = (q + q.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * Matrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(q: &Matrix) -> f64 {
    let sym = (q + q.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Controllability Gramian `Q_t = int_0^t e^{sB} Q e^{sB*} ds`.
pub fn gram_qt(q: &Matrix, b: &Matrix, t: f64) -> Result<Matrix> {
    if t <= 0.0 {
        return Ok(Matrix::zeros(q.nrows(), q.ncols()));
    }
    let fq = FlowQuadrature::new(b, t);
    let g = fq.integrate(|e, _| e * q * e.transpose(), 1e-12, 0.0)?;
    Ok((&g + g.transpose()) * 0.5)
}

/// Stationary covariance: the solution of `BX + XB* = -Q`.
pub fn qinf(q: &Matrix, b: &Matrix) -> Result<Matrix> {
    let abscissa = spectral_abscissa(b);
    if abscissa >= 0.0 {
        return Err(Error::UnstableDrift { abscissa });
    }
    let d = b.nrows();
    let id = Matrix::identity(d, d);
    // column-major vec: vec(BX + XB^T) = (I (x) B + B (x) I) vec(X)
    let k = id.kronecker(b) + b.kronecker(&id);
    let rhs = DVector::from_iterator(d * d, q.iter().map(|v| -v));
    let x = k
        .lu()
        .solve(&rhs)
        .ok_or(Error::UnstableDrift { abscissa })?;
    let x = Matrix::from_column_slice(d, d, x.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

/// Smallest `n` with `rank[Q^{1/2}, B Q^{1/2}, ..., B^n Q^{1/2}] = d`.
pub fn kalman_index(q: &Matrix, b: &Matrix) -> Result<usize> {
    let d = b.nrows();
    let root = sqrt_psd(q);
    let mut block = root.clone();
    let mut stacked = root;
    let mut rank = numerical_rank(&stacked, RANK_RTOL);
    for n in 0..d {
        if rank == d {
            return Ok(n);
        }
        block = b * &block;
        let mut next = Matrix::zeros(d, stacked.ncols() + d);
        next.columns_mut(0, stacked.ncols()).copy_from(&stacked);
        next.columns_mut(stacked.ncols(), d).copy_from(&block);
        stacked = next;
        rank = numerical_rank(&stacked, RANK_RTOL);
    }
    if rank == d {
        return Ok(d);
    }
    Err(Error::HypoellipticityFailure { rank, dim: d })
}

/// An eigenvalue of `B` with its multiplicities.
#[derive(Debug, Clone, Serialize)]
pub struct EigenGroup {
    pub re: f64,
    pub im: f64,
    pub algebraic: usize,
    pub geometric: usize,
}

/// Spectral information on the drift used by the eigenfunction machinery.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub eigenvalues: Vec<Complex64>,
    pub groups: Vec<EigenGroup>,
    pub abscissa: f64,
    pub real_spectrum: bool,
    pub diagonalizable: bool,
    /// Decay rates `-Re(eigenvalue)`, ascending, with multiplicity.
    pub rates: Vec<f64>,
    /// Rows are left eigenvectors: `M B M^{-1} = -diag(rates)`.
    pub m: Option<Matrix>,
    pub m_inv: Option<Matrix>,
    /// Smallest eigenvalue of `rates[0] * M Q_inf M^T`.
    pub varrho: Option<f64>,
}

fn group_eigenvalues(eigs: &[Complex64]) -> Vec<(Complex64, usize)> {
    let mut groups: Vec<(Complex64, usize, Complex64)> = Vec::new();
    for &z in eigs {
        let tol = 1e-6 * (1.0 + z.norm());
        if let Some(g) = groups.iter_mut().find(|g| (g.0 - z).norm() <= tol) {
            g.1 += 1;
            g.2 += z;
            g.0 = g.2 / g.1 as f64;
        } else {
            groups.push((z, 1, z));
        }
    }
    groups.into_iter().map(|(z, n, _)| (z, n)).collect()
}

/// Orthonormal basis (as rows) of the numerical null space of `a`.
fn null_space_rows(a: &Matrix, rtol: f64) -> Matrix {
    let n = a.ncols();
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let scale = smax.max(1.0);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= rtol * scale {
            rows.push(vt.row(i).iter().cloned().collect());
        }
    }
    // nalgebra returns min(nrows, ncols) singular values; square inputs only here
    let mut out = Matrix::zeros(rows.len(), n);
    for (i, r) in rows.iter().enumerate() {
        for j in 0..n {
            out[(i, j)] = r[j];
        }
    }
    out
}

/// Reduced row echelon form, used to make eigenvector bases canonical.
fn rref(mut a: Matrix) -> Matrix {
    let (rows, cols) = a.shape();
    let tol = 1e-12 * a.amax().max(1.0);
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let (piv, val) = (r..rows)
            .map(|i| (i, a[(i, c)].abs()))
            .fold((r, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= tol {
            continue;
        }
        a.swap_rows(r, piv);
        let p = a[(r, c)];
        for j in 0..cols {
            a[(r, j)] /= p;
        }
        for i in 0..rows {
            if i != r {
                let f = a[(i, c)];
                if f != 0.0 {
                    for j in 0..cols {
                        a[(i, j)] -= f * a[(r, j)];
                    }
                }
            }
        }
        r += 1;
    }
    a
}

/// Eigen-decomposition data of `B`, including the left-eigenvector matrix
/// `M` and the constant `varrho` when the spectrum is real and `B` is
/// diagonalizable.
pub fn spectral_data(b: &Matrix, q_inf: &Matrix) -> SpectralData {
    let d = b.nrows();
    let eigenvalues: Vec<Complex64> = b.clone().complex_eigenvalues().iter().cloned().collect();
    let abscissa = eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let bnorm = b.amax().max(1.0);
    let real_spectrum = eigenvalues.iter().all(|z| z.im.abs() <= 1e-9 * bnorm);
    let mut groups = Vec::new();
    let mut diagonalizable = true;
    for (z, alg) in group_eigenvalues(&eigenvalues) {
        let geometric = if z.im.abs() <= 1e-9 * bnorm {
            let shifted = b - Matrix::identity(d, d) * z.re;
            d - numerical_rank(&shifted, EIGEN_RANK_RTOL)
        } else {
            // complex pair: rank of the real 2d x 2d realification
            let mut big = Matrix::zeros(2 * d, 2 * d);
            let shifted = b - Matrix::identity(d, d) * z.re;
            big.view_mut((0, 0), (d, d)).copy_from(&shifted);
            big.view_mut((d, d), (d, d)).copy_from(&shifted);
            big.view_mut((0, d), (d, d)).copy_from(&(Matrix::identity(d, d) * z.im));
            big.view_mut((d, 0), (d, d)).copy_from(&(Matrix::identity(d, d) * -z.im));
            (2 * d - numerical_rank(&big, EIGEN_RANK_RTOL)) / 2
        };
        if geometric != alg {
            diagonalizable = false;
        }
        groups.push(EigenGroup {
            re: z.re,
            im: z.im,
            algebraic: alg,
            geometric,
        });
    }
    groups.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
    let mut rates: Vec<f64> = eigenvalues.iter().map(|z| -z.re).collect();
    rates.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut m = None;
    let mut m_inv = None;
    let mut varrho = None;
    if real_spectrum && diagonalizable && abscissa < 0.0 {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut group_rates: Vec<f64> = Vec::new();
        for g in &groups {
            let shifted = b.transpose() - Matrix::identity(d, d) * g.re;
            let basis = rref(null_space_rows(&shifted, EIGEN_RANK_RTOL));
            for i in 0..basis.nrows() {
                let mut row: Vec<f64> = basis.row(i).iter().cloned().collect();
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                let big = row.iter().cloned().fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
                let sign = if big < 0.0 { -1.0 } else { 1.0 };
                row.iter_mut().for_each(|v| *v *= sign / norm);
                rows.push(row);
                group_rates.push(-g.re);
            }
        }
        if rows.len() == d {
            let mm = Matrix::from_fn(d, d, |i, j| rows[i][j]);
            if let Some(inv) = mm.clone().try_inverse() {
                let lambda1 = group_rates[0];
                let cov = &mm * q_inf * mm.transpose() * lambda1;
                varrho = Some(min_eigenvalue(&cov));
                rates = group_rates;
                m = Some(mm);
                m_inv = Some(inv);
            }
        }
    }
    SpectralData {
        eigenvalues,
        groups,
        abscissa,
        real_spectrum,
        diagonalizable,
        rates,
        m,
        m_inv,
        varrho,
    }
}
