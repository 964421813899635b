use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::multiindex::MultiIndex;
use crate::error::{Error, Result};

/// Cumulants `kappa_m` for every multi-index with `1 <= |m| <= max_order`;
/// absent entries are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantTable {
    pub dim: usize,
    pub max_order: usize,
    pub entries: BTreeMap<MultiIndex, f64>,
}

impl CumulantTable {
    pub fn new(dim: usize, max_order: usize) -> Self {
        Self {
            dim,
            max_order,
            entries: BTreeMap::new(),
        }
    }

    /// Centered Gaussian with covariance `cov`, complete to any order.
    pub fn gaussian(cov: &DMatrix<f64>, max_order: usize) -> Self {
        let d = cov.nrows();
        let mut t = Self::new(d, max_order);
        if max_order >= 2 {
            for i in 0..d {
                for j in i..d {
                    let m = MultiIndex::unit(d, i).plus_unit(j);
                    t.set(m, cov[(i, j)]);
                }
            }
        }
        t
    }

    pub fn set(&mut self, m: MultiIndex, v: f64) {
        if v == 0.0 {
            self.entries.remove(&m);
        } else {
            self.entries.insert(m, v);
        }
    }

    pub fn get(&self, m: &MultiIndex) -> Result<f64> {
        if m.order() > self.max_order {
            return Err(Error::IncompleteTable {
                needed: m.order(),
                available: self.max_order,
            });
        }
        Ok(self.entries.get(m).copied().unwrap_or(0.0))
    }

    /// Cumulants of an independent sum.
    pub fn add(&self, other: &Self) -> Self {
        let mut out = Self::new(self.dim, self.max_order.min(other.max_order));
        for (k, v) in self.entries.iter().chain(&other.entries) {
            if k.order() <= out.max_order {
                let cur = out.entries.get(k).copied().unwrap_or(0.0);
                out.set(k.clone(), cur + v);
            }
        }
        out
    }

    pub fn negated(&self) -> Self {
        let mut out = self.clone();
        out.entries.values_mut().for_each(|v| *v = -*v);
        out
    }

    /// Cumulants of `A Y` given those of `Y`.
    pub fn linear_image(&self, a: &DMatrix<f64>) -> Self {
        use super::poly::Poly;
        // kappa_m(AY) = m! [u^m] K_Y(A^T u)
        let d_out = a.nrows();
        let mut cgf = Poly::zero(self.dim);
        for (k, v) in &self.entries {
            cgf.add_term(k.clone(), v / k.factorial());
        }
        let image = cgf.compose_linear(&a.transpose());
        let mut out = Self::new(d_out, self.max_order);
        for (k, v) in image.terms {
            out.set(k.clone(), v * k.factorial());
        }
        out
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.entries.get(&MultiIndex::unit(self.dim, i)).copied().unwrap_or(0.0))
            .collect()
    }
}

#[derive(Default, Clone, Copy)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

/// Raw moments `E[Y^m]` for `|m| <= order` through
/// `m_{a+e_i} = sum_{b<=a} C(a,b) kappa_{b+e_i} m_{a-b}`.
pub fn moments_from_cumulants(c: &CumulantTable, order: usize) -> Result<BTreeMap<MultiIndex, f64>> {
    if order > c.max_order && order > 0 {
        return Err(Error::IncompleteTable {
            needed: order,
            available: c.max_order,
        });
    }
    let d = c.dim;
    let mut m: BTreeMap<MultiIndex, f64> = BTreeMap::new();
    m.insert(MultiIndex::zeros(d), 1.0);
    for k in 1..=order {
        for gamma in MultiIndex::of_order(d, k) {
            let i = gamma.0.iter().position(|&e| e > 0).expect("order >= 1");
            let mut alpha = gamma.clone();
            alpha.0[i] -= 1;
            let mut acc = Kahan::default();
            for beta in alpha.below() {
                let kappa = c.get(&beta.plus_unit(i))?;
                if kappa == 0.0 {
                    continue;
                }
                acc.add(alpha.binomial(&beta) * kappa * m[&alpha.sub(&beta)]);
            }
            m.insert(gamma, acc.sum);
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Moments from cumulants by summing over set partitions of
    /// `{0..n-1}` (restricted growth strings), 1D.
    fn moment_by_partitions(kappa: &[f64], n: usize) -> f64 {
        fn rec(kappa: &[f64], n: usize, pos: usize, blocks: &mut Vec<usize>, acc: &mut f64) {
            if pos == n {
                *acc += blocks.iter().map(|&s| kappa[s]).product::<f64>();
                return;
            }
            for b in 0..blocks.len() {
                blocks[b] += 1;
                rec(kappa, n, pos + 1, blocks, acc);
                blocks[b] -= 1;
            }
            blocks.push(1);
            rec(kappa, n, pos + 1, blocks, acc);
            blocks.pop();
        }
        let mut acc = 0.0;
        rec(kappa, n, 0, &mut Vec::new(), &mut acc);
        acc
    }

    #[test]
    fn standard_gaussian_moments() {
        let c = CumulantTable::gaussian(&DMatrix::identity(1, 1), 8);
        let m = moments_from_cumulants(&c, 8).unwrap();
        assert_eq!(m[&MultiIndex(vec![4])], 3.0);
        assert_eq!(m[&MultiIndex(vec![6])], 15.0);
        assert_eq!(m[&MultiIndex(vec![5])], 0.0);
    }

    #[test]
    fn poisson_moments() {
        let lam = 0.7;
        let mut c = CumulantTable::new(1, 4);
        for k in 1..=4 {
            c.set(MultiIndex(vec![k]), lam);
        }
        let m = moments_from_cumulants(&c, 3).unwrap();
        assert!((m[&MultiIndex(vec![2])] - (lam + lam * lam)).abs() < 1e-15);
        assert!((m[&MultiIndex(vec![3])] - (lam + 3.0 * lam * lam + lam.powi(3))).abs() < 1e-15);
    }

    #[test]
    fn bivariate_gaussian_mixed_moment() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let m = moments_from_cumulants(&CumulantTable::gaussian(&cov, 4), 4).unwrap();
        // Isserlis: E[X^2 Y^2] = s11 s22 + 2 s12^2
        assert!((m[&MultiIndex(vec![2, 2])] - (2.0 + 2.0 * 0.25)).abs() < 1e-14);
    }

    #[test]
    fn incomplete_table_detected() {
        let c = CumulantTable::new(1, 2);
        assert!(matches!(moments_from_cumulants(&c, 3), Err(Error::IncompleteTable { .. })));
    }

    proptest! {
        #[test]
        fn recursion_matches_set_partitions(kappa in proptest::collection::vec(-1.0f64..1.0, 7)) {
            let mut c = CumulantTable::new(1, 7);
            for (k, v) in kappa.iter().enumerate() {
                c.set(MultiIndex(vec![k as u32 + 1]), *v);
            }
            let m = moments_from_cumulants(&c, 7).unwrap();
            let mut full = vec![0.0];
            full.extend(kappa.iter());
            for n in 1..=7 {
                let oracle = moment_by_partitions(&full, n);
                prop_assert!((m[&MultiIndex(vec![n as u32])] - oracle).abs() < 1e-11 * (1.0 + oracle.abs()));
            }
        }

        #[test]
        fn linear_image_of_gaussian(a in proptest::collection::vec(-1.0f64..1.0, 4)) {
            let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
            let am = DMatrix::from_row_slice(2, 2, &a);
            let img = CumulantTable::gaussian(&cov, 3).linear_image(&am);
            let expect = CumulantTable::gaussian(&(&am * &cov * am.transpose()), 3);
            for m in MultiIndex::up_to_order(2, 3) {
                if m.order() == 0 { continue; }
                prop_assert!((img.get(&m).unwrap() - expect.get(&m).unwrap()).abs() < 1e-13);
            }
        }
    }
}
