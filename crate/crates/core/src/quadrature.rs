//! Gauss-Legendre panel quadrature and flow tables for integrals of the form
//! `int_0^T f(e^{sB}) ds`.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matops::expm;

/// Points per panel.
pub const GL_ORDER: usize = 16;
const MAX_LEVELS: usize = 9;

/// Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, half * w))
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

pub fn gauss_legendre() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(GL_ORDER))
}

/// Values that can be accumulated by a quadrature rule.
pub trait Accumulate: Clone {
    fn zero_like(&self) -> Self;
    fn add_scaled(&mut self, w: f64, other: &Self);
    fn max_abs_diff(&self, other: &Self) -> f64;
    fn max_abs(&self) -> f64;
}

impl Accumulate for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn add_scaled(&mut self, w: f64, other: &Self) {
        *self += w * other;
    }
    fn max_abs_diff(&self, other: &Self) -> f64 {
        (self - other).abs()
    }
    fn max_abs(&self) -> f64 {
        self.abs()
    }
}

impl Accumulate for Complex64 {
    fn zero_like(&self) -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn add_scaled(&mut self, w: f64, other: &Self) {
        *self += other * w;
    }
    fn max_abs_diff(&self, other: &Self) -> f64 {
        (self - other).norm()
    }
    fn max_abs(&self) -> f64 {
        self.norm()
    }
}

impl Accumulate for Vec<f64> {
    fn zero_like(&self) -> Self {
        vec![0.0; self.len()]
    }
    fn add_scaled(&mut self, w: f64, other: &Self) {
        for (a, b) in self.iter_mut().zip(other) {
            *a += w * b;
        }
    }
    fn max_abs_diff(&self, other: &Self) -> f64 {
        self.iter()
            .zip(other)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
    fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, a| m.max(a.abs()))
    }
}

impl Accumulate for DMatrix<f64> {
    fn zero_like(&self) -> Self {
        DMatrix::zeros(self.nrows(), self.ncols())
    }
    fn add_scaled(&mut self, w: f64, other: &Self) {
        *self += other * w;
    }
    fn max_abs_diff(&self, other: &Self) -> f64 {
        (self - other).amax()
    }
    fn max_abs(&self) -> f64 {
        self.amax()
    }
}

/// Composite Gauss-Legendre on `panels` equal panels of `[a, b]`.
pub fn integrate_panels<T: Accumulate>(
    mut f: impl FnMut(f64) -> T,
    a: f64,
    b: f64,
    panels: usize,
) -> T {
    let rule = gauss_legendre();
    let h = (b - a) / panels as f64;
    let mut acc: Option<T> = None;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for (s, w) in rule.on(lo, lo + h) {
            let v = f(s);
            match acc.as_mut() {
                Some(acc) => acc.add_scaled(w, &v),
                None => {
                    let mut z = v.zero_like();
                    z.add_scaled(w, &v);
                    acc = Some(z);
                }
            }
        }
    }
    acc.expect("at least one panel")
}

/// Doubles the panel count until two successive results agree to
/// `abs_tol + rel_tol * |I|`.
pub fn integrate_adaptive<T: Accumulate>(
    mut f: impl FnMut(f64) -> T,
    a: f64,
    b: f64,
    initial_panels: usize,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<T> {
    let mut panels = initial_panels.max(1);
    let mut prev = integrate_panels(&mut f, a, b, panels);
    for _ in 0..MAX_LEVELS + 4 {
        panels *= 2;
        let next = integrate_panels(&mut f, a, b, panels);
        let diff = next.max_abs_diff(&prev);
        if diff <= abs_tol + rel_tol * next.max_abs() {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NonConvergedQuadrature {
        context: format!("integral over [{a}, {b}] with {panels} panels"),
    })
}

/// One refinement level of a flow table.
#[derive(Debug)]
pub struct FlowNodes {
    pub times: Vec<f64>,
    pub weights: Vec<f64>,
    /// `e^{sB}` at each node.
    pub flows: Vec<DMatrix<f64>>,
}

/// Cached quadrature nodes on `[0, horizon]` together with the matrix
/// exponentials `e^{sB}` at those nodes, refined lazily by panel doubling.
#[derive(Debug)]
pub struct FlowQuadrature {
    b: DMatrix<f64>,
    horizon: f64,
    base_panels: usize,
    levels: Vec<OnceLock<FlowNodes>>,
}

impl FlowQuadrature {
    pub fn new(b: &DMatrix<f64>, horizon: f64) -> Self {
        let scale = b.iter().fold(0.0_f64, |m, v| m.max(v.abs())) * b.nrows() as f64;
        let base = ((horizon * scale) / 2.0).ceil() as usize;
        Self {
            b: b.clone(),
            horizon,
            base_panels: base.clamp(4, 256),
            levels: (0..MAX_LEVELS).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn level(&self, k: usize) -> &FlowNodes {
        self.levels[k].get_or_init(|| {
            let panels = self.base_panels << k;
            let h = self.horizon / panels as f64;
            let rule = gauss_legendre();
            let mut times = Vec::with_capacity(panels * GL_ORDER);
            let mut weights = Vec::with_capacity(panels * GL_ORDER);
            for p in 0..panels {
                let lo = p as f64 * h;
                for (s, w) in rule.on(lo, lo + h) {
                    times.push(s);
                    weights.push(w);
                }
            }
            let flows = times.iter().map(|&s| expm(&self.b, s)).collect();
            FlowNodes {
                times,
                weights,
                flows,
            }
        })
    }

    fn sum_level<T: Accumulate>(&self, k: usize, f: &mut impl FnMut(&DMatrix<f64>, f64) -> T) -> T {
        let nodes = self.level(k);
        let mut acc: Option<T> = None;
        for ((e, &s), &w) in nodes.flows.iter().zip(&nodes.times).zip(&nodes.weights) {
            let v = f(e, s);
            match acc.as_mut() {
                Some(acc) => acc.add_scaled(w, &v),
                None => {
                    let mut z = v.zero_like();
                    z.add_scaled(w, &v);
                    acc = Some(z);
                }
            }
        }
        acc.expect("nonempty table")
    }

    /// Integrates `f(e^{sB}, s)` over `[0, horizon]`, refining until two
    /// successive levels differ by at most `abs_tol + rel_tol * |I|`.
    pub fn integrate<T: Accumulate>(
        &self,
        mut f: impl FnMut(&DMatrix<f64>, f64) -> T,
        abs_tol: f64,
        rel_tol: f64,
    ) -> Result<T> {
        let mut prev = self.sum_level(0, &mut f);
        for k in 1..MAX_LEVELS {
            let next = self.sum_level(k, &mut f);
            if next.max_abs_diff(&prev) <= abs_tol + rel_tol * next.max_abs() {
                return Ok(next);
            }
            prev = next;
        }
        Err(Error::NonConvergedQuadrature {
            context: format!(
                "flow integral on [0, {}] after {} panels",
                self.horizon,
                self.base_panels << (MAX_LEVELS - 1)
            ),
        })
    }
}
