use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use serde::Serialize;

use super::multiindex::MultiIndex;

/// Coefficients below this fraction of the largest are dropped.
pub const PRUNE_RTOL: f64 = 1e-14;

/// Polynomial in `dim` real variables with sparse coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    pub dim: usize,
    pub terms: BTreeMap<MultiIndex, f64>,
}

#[derive(Serialize)]
struct TermJson<'a> {
    index: &'a [u32],
    coeff: f64,
}

#[derive(Serialize)]
struct PolyJson<'a> {
    dim: usize,
    degree: usize,
    terms: Vec<TermJson<'a>>,
}

impl Poly {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::monomial(MultiIndex::zeros(dim), c)
    }

    pub fn monomial(index: MultiIndex, c: f64) -> Self {
        let dim = index.dim();
        let mut terms = BTreeMap::new();
        if c != 0.0 {
            terms.insert(index, c);
        }
        Self { dim, terms }
    }

    pub fn variable(dim: usize, i: usize) -> Self {
        Self::monomial(MultiIndex::unit(dim, i), 1.0)
    }

    /// `sum_j coeffs_j x_j`.
    pub fn linear(coeffs: &[f64]) -> Self {
        let dim = coeffs.len();
        let mut p = Self::zero(dim);
        for (i, &c) in coeffs.iter().enumerate() {
            p.add_term(MultiIndex::unit(dim, i), c);
        }
        p
    }

    pub fn add_term(&mut self, index: MultiIndex, c: f64) {
        if c == 0.0 {
            return;
        }
        let e = self.terms.entry(index).or_insert(0.0);
        *e += c;
    }

    pub fn coeff(&self, index: &MultiIndex) -> f64 {
        self.terms.get(index).copied().unwrap_or(0.0)
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(|k| k.order()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|&c| c == 0.0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Drops negligible coefficients relative to the largest.
    pub fn pruned(mut self) -> Self {
        let cut = PRUNE_RTOL * self.max_abs_coeff();
        self.terms.retain(|_, c| c.abs() > cut);
        self
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            terms: self.terms.iter().map(|(k, v)| (k.clone(), v * c)).collect(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(k, c)| c * k.monomial(x)).sum()
    }

    pub fn derivative(&self, i: usize) -> Self {
        let mut out = Self::zero(self.dim);
        for (k, c) in &self.terms {
            let e = k.0[i];
            if e > 0 {
                let mut kk = k.clone();
                kk.0[i] -= 1;
                out.add_term(kk, c * e as f64);
            }
        }
        out
    }

    /// `d^m p`.
    pub fn partial(&self, m: &MultiIndex) -> Self {
        let mut out = self.clone();
        for (i, &k) in m.0.iter().enumerate() {
            for _ in 0..k {
                out = out.derivative(i);
            }
        }
        out
    }

    /// Directional derivative along `v`.
    pub fn directional(&self, v: &[f64]) -> Self {
        let mut out = Self::zero(self.dim);
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                out = out + self.derivative(i).scale(vi);
            }
        }
        out
    }

    pub fn homogeneous_part(&self, k: usize) -> Self {
        self.filtered(|m| m.order() == k)
    }

    pub fn truncate_degree(&self, k: usize) -> Self {
        self.filtered(|m| m.order() <= k)
    }

    pub fn filtered(&self, keep: impl Fn(&MultiIndex) -> bool) -> Self {
        Self {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .filter(|(k, _)| keep(k))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        }
    }

    /// Product keeping only monomials accepted by `keep`. Valid as a
    /// truncated product whenever `keep` is downward closed.
    pub fn mul_filtered(&self, other: &Self, keep: &impl Fn(&MultiIndex) -> bool) -> Self {
        let mut out = Self::zero(self.dim);
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                let k = a.add(b);
                if keep(&k) {
                    out.add_term(k, ca * cb);
                }
            }
        }
        out
    }

    /// `exp(self)` as a truncated series; `self` must vanish at the origin
    /// and `keep` must reject every monomial of order above `max_order` in
    /// the tracked variables.
    pub fn exp_series(&self, max_order: usize, keep: &impl Fn(&MultiIndex) -> bool) -> Self {
        let mut result = Self::constant(self.dim, 1.0);
        let mut power = Self::constant(self.dim, 1.0);
        for k in 1..=max_order {
            power = power.mul_filtered(self, keep).scale(1.0 / k as f64);
            if power.is_zero() {
                break;
            }
            result = result + power.clone();
        }
        result
    }

    /// `x -> p(Ax)`.
    pub fn compose_linear(&self, a: &DMatrix<f64>) -> Self {
        let d_out = a.ncols();
        let rows: Vec<Poly> = (0..a.nrows())
            .map(|i| Poly::linear(&a.row(i).iter().cloned().collect::<Vec<_>>()))
            .collect();
        let mut powers: Vec<Vec<Poly>> = rows
            .iter()
            .map(|_| vec![Poly::constant(d_out, 1.0)])
            .collect();
        let mut out = Self::zero(d_out);
        for (k, c) in &self.terms {
            let mut term = Poly::constant(d_out, *c);
            for (i, &e) in k.0.iter().enumerate() {
                while powers[i].len() <= e as usize {
                    let next = powers[i].last().unwrap() * &rows[i];
                    powers[i].push(next);
                }
                if e > 0 {
                    term = &term * &powers[i][e as usize];
                }
            }
            out = out + term;
        }
        out
    }

    /// Largest absolute coefficient difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut m: f64 = 0.0;
        for (k, c) in &self.terms {
            m = m.max((c - other.coeff(k)).abs());
        }
        for (k, c) in &other.terms {
            if !self.terms.contains_key(k) {
                m = m.max(c.abs());
            }
        }
        m
    }

    /// Coefficients on a fixed monomial basis.
    pub fn coefficients_on(&self, basis: &[MultiIndex]) -> Vec<f64> {
        basis.iter().map(|m| self.coeff(m)).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let json = PolyJson {
            dim: self.dim,
            degree: self.degree(),
            terms: self
                .terms
                .iter()
                .map(|(k, &c)| TermJson { index: &k.0, coeff: c })
                .collect(),
        };
        serde_json::to_value(json).expect("serializable")
    }
}

impl Add for Poly {
    type Output = Poly;
    fn add(mut self, rhs: Poly) -> Poly {
        for (k, c) in rhs.terms {
            self.add_term(k, c);
        }
        self
    }
}

impl Sub for Poly {
    type Output = Poly;
    fn sub(self, rhs: Poly) -> Poly {
        self + rhs.scale(-1.0)
    }
}

impl Neg for Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        self.mul_filtered(rhs, &|_| true)
    }
}
