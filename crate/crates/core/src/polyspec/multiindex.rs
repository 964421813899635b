use serde::{Deserialize, Serialize};

/// Multi-index `n in N^d`, ordered lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zeros(d: usize) -> Self {
        Self(vec![0; d])
    }

    pub fn unit(d: usize, i: usize) -> Self {
        let mut v = vec![0; d];
        v[i] = 1;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn order(&self) -> usize {
        self.0.iter().map(|&k| k as usize).sum()
    }

    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&k| factorial(k as usize)).product()
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &Self) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self - other`; requires `other <= self`.
    pub fn sub(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn plus_unit(&self, i: usize) -> Self {
        let mut v = self.0.clone();
        v[i] += 1;
        Self(v)
    }

    /// `prod_j C(self_j, beta_j)`.
    pub fn binomial(&self, beta: &Self) -> f64 {
        self.0
            .iter()
            .zip(&beta.0)
            .map(|(&a, &b)| binomial(a as usize, b as usize))
            .product()
    }

    /// `x^self`.
    pub fn monomial(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(&k, &xi)| xi.powi(k as i32)).product()
    }

    /// Inner product with a real vector.
    pub fn dot(&self, v: &[f64]) -> f64 {
        self.0.iter().zip(v).map(|(&k, &x)| k as f64 * x).sum()
    }

    /// All multi-indices of exact order `k` in `d` variables, ascending.
    pub fn of_order(d: usize, k: usize) -> Vec<Self> {
        let mut out = Vec::new();
        let mut cur = vec![0u32; d];
        fill(&mut out, &mut cur, 0, k);
        out.sort();
        out
    }

    /// All multi-indices of order `<= k`, by order then lexicographic.
    pub fn up_to_order(d: usize, k: usize) -> Vec<Self> {
        (0..=k).flat_map(|j| Self::of_order(d, j)).collect()
    }

    /// All `beta <= self`.
    pub fn below(&self) -> Vec<Self> {
        let mut out = vec![Vec::with_capacity(self.dim())];
        for &k in &self.0 {
            let mut next = Vec::with_capacity(out.len() * (k as usize + 1));
            for prefix in &out {
                for j in 0..=k {
                    let mut p = prefix.clone();
                    p.push(j);
                    next.push(p);
                }
            }
            out = next;
        }
        out.into_iter().map(Self).collect()
    }
}

fn fill(out: &mut Vec<MultiIndex>, cur: &mut Vec<u32>, pos: usize, left: usize) {
    if cur.is_empty() {
        if left == 0 {
            out.push(MultiIndex(Vec::new()));
        }
        return;
    }
    if pos == cur.len() - 1 {
        cur[pos] = left as u32;
        out.push(MultiIndex(cur.clone()));
        return;
    }
    for k in 0..=left {
        cur[pos] = k as u32;
        fill(out, cur, pos + 1, left - k);
    }
}

impl std::fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|k| k.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut r = 1.0;
    for j in 0..k {
        r = r * (n - j) as f64 / (j + 1) as f64;
    }
    r.round()
}

/// Number of monomials of degree `<= k` in `d` variables.
pub fn count_up_to(d: usize, k: usize) -> usize {
    binomial(d + k, k) as usize
}
