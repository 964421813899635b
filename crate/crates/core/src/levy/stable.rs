//! One-sided radial alpha-stable exponent
//! `I_alpha(u) = int_0^inf (e^{iru} - 1 - iru 1_{r<=1}) r^{-1-alpha} dr`.

use num_complex::Complex64;
use statrs::function::gamma::gamma;

use crate::quadrature::integrate_adaptive;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Closed form of `I_alpha(u)`.
pub fn radial_exponent(alpha: f64, u: f64) -> Complex64 {
    if u == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let a = u.abs();
    let sgn = u.signum();
    if (alpha - 1.0).abs() < 1e-12 {
        return Complex64::new(
            -std::f64::consts::FRAC_PI_2 * a,
            -u * a.ln() + u * (1.0 - EULER_GAMMA),
        );
    }
    let g = gamma(-alpha) * a.powf(alpha);
    let phase = -std::f64::consts::FRAC_PI_2 * alpha * sgn;
    Complex64::from_polar(g, phase) + Complex64::new(0.0, u / (alpha - 1.0))
}

const SPLIT: f64 = 60.0;

/// `I_alpha(u)` by splitting the radial integral at `r = 1`: a power
/// series plus panel quadrature on the inner part and panel quadrature
/// plus an asymptotic expansion on the oscillatory outer part.
pub fn radial_exponent_numeric(alpha: f64, u: f64) -> Complex64 {
    if u == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    if u < 0.0 {
        return radial_exponent_numeric(alpha, -u).conj();
    }
    inner(alpha, u) + outer(alpha, u)
}

fn series(alpha: f64, u: f64) -> Complex64 {
    // sum_{k>=2} (iu)^k / (k! (k - alpha))
    let iu = Complex64::new(0.0, u);
    let mut term = iu;
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 2..200 {
        term = term * iu / k as f64;
        let t = term / (k as f64 - alpha);
        acc += t;
        if t.norm() < 1e-18 * acc.norm().max(1e-300) {
            break;
        }
    }
    acc
}

fn inner(alpha: f64, u: f64) -> Complex64 {
    if u <= 1.0 {
        return series(alpha, u);
    }
    let f = |s: f64| {
        let e = Complex64::new(0.0, s).exp() - 1.0 - Complex64::new(0.0, s);
        e * s.powf(-1.0 - alpha)
    };
    let panels = (u - 1.0).ceil() as usize;
    let body = integrate_adaptive(f, 1.0, u, panels.max(1), 1e-15, 1e-14)
        .expect("smooth integrand converges");
    (series(alpha, 1.0) + body) * u.powf(alpha)
}

fn outer(alpha: f64, u: f64) -> Complex64 {
    let s_end = u.max(SPLIT);
    let mut body = Complex64::new(0.0, 0.0);
    if u < 1.0 {
        let g = |v: f64| {
            let s = v.exp();
            (Complex64::new(0.0, s).exp() - 1.0) * (-alpha * v).exp()
        };
        body += integrate_adaptive(g, u.ln(), 0.0, 8, 1e-15, 1e-14)
            .expect("smooth integrand converges");
    }
    let lo = u.max(1.0);
    if s_end > lo {
        let f = |s: f64| (Complex64::new(0.0, s).exp() - 1.0) * s.powf(-1.0 - alpha);
        body += integrate_adaptive(f, lo, s_end, (s_end - lo).ceil() as usize, 1e-15, 1e-14)
            .expect("smooth integrand converges");
    }
    // int_S^inf e^{is} s^{-1-alpha} ds = -e^{iS} sum_k (1+alpha)_k S^{-1-alpha-k} / i^{k+1}
    let mut tail = Complex64::new(0.0, 0.0);
    let mut rising = 1.0;
    let mut ipow = Complex64::new(0.0, 1.0);
    for k in 0..30 {
        let t = rising * s_end.powf(-1.0 - alpha - k as f64) / ipow;
        tail += t;
        if t.norm() < 1e-18 {
            break;
        }
        rising *= 1.0 + alpha + k as f64;
        ipow *= Complex64::new(0.0, 1.0);
    }
    let tail = -Complex64::new(0.0, s_end).exp() * tail - s_end.powf(-alpha) / alpha;
    (body + tail) * u.powf(alpha)
}
