//! Numerical check of the separated Koopman form
//! `g(x⁺) = A g(x) + B̂(x, u) u` on a scalar polynomial system whose drift
//! leaves the span of the monomials `x, x², …, x^N` invariant.
//!
//! `B̂(x, u) = ∫₀¹ ∂𝔅/∂u (x, λu) dλ` with
//! `𝔅(x, u) = [∫₀¹ g'(f(x,0) + λ (f(x,u) − f(x,0))) dλ] (f(x,u) − f(x,0))`.
//! Both integrals use Gauss–Legendre quadrature; `∂/∂u` is a central difference.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Gauss–Legendre rule on `[0, 1]`, optionally repeated over equal panels.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// `points`-point rule on each of `panels` equal sub-intervals of `[0, 1]`.
    pub fn new(points: usize, panels: usize) -> Result<Self> {
        if points == 0 || panels == 0 {
            return Err(Error::Quadrature("rule needs at least one point and panel"));
        }
        let (ref_nodes, ref_weights) = legendre_nodes(points)?;
        let width = 1.0 / panels as f64;
        let mut nodes = Vec::with_capacity(points * panels);
        let mut weights = Vec::with_capacity(points * panels);
        for k in 0..panels {
            let left = k as f64 * width;
            for (t, w) in ref_nodes.iter().zip(&ref_weights) {
                nodes.push(left + 0.5 * width * (t + 1.0));
                weights.push(0.5 * width * w);
            }
        }
        Ok(Self { nodes, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫₀¹ f(λ) dλ` for vector-valued `f` with `dim` outputs.
    pub fn integrate_vec<F>(&self, dim: usize, mut f: F) -> Vec<f64>
    where
        F: FnMut(f64) -> Vec<f64>,
    {
        let mut acc = vec![0.0; dim];
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            for (a, v) in acc.iter_mut().zip(f(*x)) {
                *a += w * v;
            }
        }
        acc
    }
}

/// Nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
fn legendre_nodes(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = libm::cos(core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut converged = false;
        for _ in 0..100 {
            let (p, d) = legendre_eval(n, z);
            let dz = p / d;
            z -= dz;
            if libm::fabs(dz) < 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged || !z.is_finite() {
            return Err(Error::Quadrature("Legendre root iteration did not converge"));
        }
        let (_, dp) = legendre_eval(n, z);
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Ok((nodes, weights))
}

/// `(P_n(z), P_n'(z))` by the three-term recurrence.
fn legendre_eval(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// `x⁺ = a x + b x u + c u`; the drift `x ↦ a x` maps each monomial `xⁱ` to `aⁱ xⁱ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarPolySystem {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ScalarPolySystem {
    pub fn step(&self, x: f64, u: f64) -> f64 {
        self.a * x + self.b * x * u + self.c * u
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KoopmanFormSettings {
    pub quadrature_points: usize,
    pub panels: usize,
    pub fd_step: f64,
}

impl Default for KoopmanFormSettings {
    fn default() -> Self {
        Self {
            quadrature_points: 64,
            panels: 1,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KoopmanFormReport {
    pub max_residual: f64,
    pub worst_x: f64,
    pub worst_u: f64,
    pub evaluations: usize,
}

fn monomials(z: f64, degree: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(degree);
    let mut p = 1.0;
    for _ in 0..degree {
        p *= z;
        out.push(p);
    }
    out
}

fn monomial_derivatives(z: f64, degree: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(degree);
    let mut p = 1.0;
    for i in 1..=degree {
        out.push(i as f64 * p);
        p *= z;
    }
    out
}

/// Evaluates the residual `‖g(x⁺) − A g(x) − B̂(x,u) u‖₂` over the grid and
/// returns its maximum.
pub fn verify_koopman_form(
    system: &ScalarPolySystem,
    degree: usize,
    x_grid: &[f64],
    u_grid: &[f64],
    settings: &KoopmanFormSettings,
) -> Result<KoopmanFormReport> {
    if degree == 0 {
        return Err(Error::InvalidArgument("need at least one monomial feature".into()));
    }
    if !(settings.fd_step > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let rule = GaussLegendre::new(settings.quadrature_points, settings.panels)?;
    let drift: Vec<f64> = (1..=degree).map(|i| libm::pow(system.a, i as f64)).collect();

    let big_b = |x: f64, u: f64| -> Vec<f64> {
        let f0 = system.step(x, 0.0);
        let delta = system.step(x, u) - f0;
        let mean_jac = rule.integrate_vec(degree, |lam| monomial_derivatives(f0 + lam * delta, degree));
        mean_jac.into_iter().map(|j| j * delta).collect()
    };
    let h = settings.fd_step;
    let b_hat = |x: f64, u: f64| -> Vec<f64> {
        rule.integrate_vec(degree, |lam| {
            let v = lam * u;
            let plus = big_b(x, v + h);
            let minus = big_b(x, v - h);
            plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * h)).collect()
        })
    };

    let mut report = KoopmanFormReport {
        max_residual: 0.0,
        worst_x: f64::NAN,
        worst_u: f64::NAN,
        evaluations: 0,
    };
    for &x in x_grid {
        let gx = monomials(x, degree);
        for &u in u_grid {
            let g_next = monomials(system.step(x, u), degree);
            let bh = b_hat(x, u);
            let mut r2 = 0.0;
            for i in 0..degree {
                let r = g_next[i] - drift[i] * gx[i] - bh[i] * u;
                r2 += r * r;
            }
            let r = libm::sqrt(r2);
            if !r.is_finite() {
                return Err(Error::Quadrature("non-finite residual"));
            }
            report.evaluations += 1;
            if r > report.max_residual || report.worst_x.is_nan() {
                report.max_residual = r;
                report.worst_x = x;
                report.worst_u = u;
            }
        }
    }
    Ok(report)
}

/// `count` equally spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}
