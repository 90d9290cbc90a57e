//! Cartpole plant, fixed-step RK4 with zero-order-hold input, and the
//! discrete-dynamics abstraction shared by the solvers.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::Matrix;

/// Standard gravity used by the reference simulation environment.
pub const DEFAULT_GRAVITY: f64 = 9.8;

/// Physical parameters of the cartpole. `l` is the half-length of the pole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartpoleParams {
    pub m_c: f64,
    pub m_p: f64,
    pub l: f64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
}

fn default_gravity() -> f64 {
    DEFAULT_GRAVITY
}

impl CartpoleParams {
    pub fn new(m_c: f64, m_p: f64, l: f64) -> Self {
        Self {
            m_c,
            m_p,
            l,
            gravity: DEFAULT_GRAVITY,
        }
    }

    /// Nominal model parameters of the benchmark.
    pub fn nominal() -> Self {
        Self::new(0.75, 0.075, 0.375)
    }

    /// True plant parameters of the benchmark.
    pub fn true_plant() -> Self {
        Self::new(1.0, 0.1, 0.5)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.m_c, self.m_p, self.l, self.gravity]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "cartpole parameters must be finite and strictly positive".into(),
            ))
        }
    }
}

/// Multiplies both masses and the pole half-length by `1 + pct`; gravity is kept.
pub fn scale_params(nominal: &CartpoleParams, pct: f64) -> CartpoleParams {
    let s = 1.0 + pct;
    CartpoleParams {
        m_c: nominal.m_c * s,
        m_p: nominal.m_p * s,
        l: nominal.l * s,
        gravity: nominal.gravity,
    }
}

/// Cartpole state `[x, ẋ, θ, θ̇]`; θ = 0 is upright and is not wrapped.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CartpoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl CartpoleState {
    pub const DIM: usize = 4;

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }

    pub fn from_slice(s: &[f64]) -> Result<Self> {
        check_len("CartpoleState", 4, s.len())?;
        Ok(Self {
            x: s[0],
            x_dot: s[1],
            theta: s[2],
            theta_dot: s[3],
        })
    }
}

impl From<[f64; 4]> for CartpoleState {
    fn from(a: [f64; 4]) -> Self {
        Self {
            x: a[0],
            x_dot: a[1],
            theta: a[2],
            theta_dot: a[3],
        }
    }
}

/// Continuous-time right-hand side `[ẋ, ẍ, θ̇, θ̈]` for a horizontal force `force`.
///
/// The angular acceleration is self-contained and is evaluated first; the cart
/// acceleration then substitutes it.
pub fn cartpole_rhs(s: &[f64; 4], force: f64, p: &CartpoleParams) -> [f64; 4] {
    let [_, x_dot, theta, theta_dot] = *s;
    let total = p.m_c + p.m_p;
    let (sin, cos) = (libm::sin(theta), libm::cos(theta));
    let theta_acc = (p.gravity * sin + cos * ((-force - p.m_p * p.l * theta_dot * theta_dot * sin) / total))
        / (p.l * (4.0 / 3.0 - p.m_p * cos * cos / total));
    let x_acc = (force + p.m_p * p.l * (theta_dot * theta_dot * sin - theta_acc * cos)) / total;
    [x_dot, x_acc, theta_dot, theta_acc]
}

/// One classical RK4 step of length `dt` with the force held constant.
pub fn rk4_step(s: &[f64; 4], force: f64, dt: f64, p: &CartpoleParams) -> Result<[f64; 4]> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("time step must be positive".into()));
    }
    let add = |a: &[f64; 4], k: &[f64; 4], h: f64| -> [f64; 4] {
        [a[0] + h * k[0], a[1] + h * k[1], a[2] + h * k[2], a[3] + h * k[3]]
    };
    let k1 = cartpole_rhs(s, force, p);
    let k2 = cartpole_rhs(&add(s, &k1, 0.5 * dt), force, p);
    let k3 = cartpole_rhs(&add(s, &k2, 0.5 * dt), force, p);
    let k4 = cartpole_rhs(&add(s, &k3, dt), force, p);
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cartpole integration"));
    }
    Ok(out)
}

/// A deterministic discrete-time system `x⁺ = f(x, u)`.
pub trait DiscreteDynamics {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>>;

    /// `(∂f/∂x, ∂f/∂u)` at `(x, u)`. Defaults to central differences.
    fn jacobians(&self, x: &[f64], u: &[f64]) -> Result<(Matrix, Matrix)> {
        finite_difference_jacobians(self, x, u, 1e-6)
    }
}

/// Central finite-difference Jacobians of a discrete system.
pub fn finite_difference_jacobians<D: DiscreteDynamics + ?Sized>(
    f: &D,
    x: &[f64],
    u: &[f64],
    h: f64,
) -> Result<(Matrix, Matrix)> {
    let n = f.state_dim();
    let p = f.input_dim();
    check_len("jacobians state", n, x.len())?;
    check_len("jacobians input", p, u.len())?;
    let mut jx = Matrix::zeros(n, n);
    let mut ju = Matrix::zeros(n, p);
    let mut xp = x.to_vec();
    for j in 0..n {
        xp[j] = x[j] + h;
        let plus = f.step(&xp, u)?;
        xp[j] = x[j] - h;
        let minus = f.step(&xp, u)?;
        xp[j] = x[j];
        for i in 0..n {
            jx[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    let mut up = u.to_vec();
    for j in 0..p {
        up[j] = u[j] + h;
        let plus = f.step(x, &up)?;
        up[j] = u[j] - h;
        let minus = f.step(x, &up)?;
        up[j] = u[j];
        for i in 0..n {
            ju[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    Ok((jx, ju))
}

/// Sampled cartpole: RK4 over one control period with zero-order hold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cartpole {
    pub params: CartpoleParams,
    pub dt: f64,
    /// Optional symmetric clip on the applied force.
    pub force_limit: Option<f64>,
}

impl Cartpole {
    pub fn new(params: CartpoleParams, dt: f64) -> Self {
        Self {
            params,
            dt,
            force_limit: None,
        }
    }

    pub fn applied_force(&self, u: f64) -> f64 {
        match self.force_limit {
            Some(lim) => u.clamp(-lim, lim),
            None => u,
        }
    }
}

impl DiscreteDynamics for Cartpole {
    fn state_dim(&self) -> usize {
        4
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        check_len("Cartpole::step state", 4, x.len())?;
        check_len("Cartpole::step input", 1, u.len())?;
        let s = [x[0], x[1], x[2], x[3]];
        Ok(rk4_step(&s, self.applied_force(u[0]), self.dt, &self.params)?.to_vec())
    }
}

/// `x⁺ = A x + B u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDynamics {
    pub a: Matrix,
    pub b: Matrix,
}

impl LinearDynamics {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        check_len("LinearDynamics A cols", a.rows(), a.cols())?;
        check_len("LinearDynamics B rows", a.rows(), b.rows())?;
        Ok(Self { a, b })
    }
}

impl DiscreteDynamics for LinearDynamics {
    fn state_dim(&self) -> usize {
        self.a.rows()
    }

    fn input_dim(&self) -> usize {
        self.b.cols()
    }

    fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.a.matvec(x)?;
        let bu = self.b.matvec(u)?;
        for (o, v) in out.iter_mut().zip(bu) {
            *o += v;
        }
        Ok(out)
    }

    fn jacobians(&self, x: &[f64], u: &[f64]) -> Result<(Matrix, Matrix)> {
        check_len("LinearDynamics state", self.a.rows(), x.len())?;
        check_len("LinearDynamics input", self.b.cols(), u.len())?;
        Ok((self.a.clone(), self.b.clone()))
    }
}

/// Rolls `f` forward from `x0` under `inputs`; returns `inputs.len() + 1` states.
pub fn rollout<D: DiscreteDynamics + ?Sized>(f: &D, x0: &[f64], inputs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(x0.to_vec());
    for u in inputs {
        let next = f.step(states.last().map(Vec::as_slice).unwrap_or(&[]), u)?;
        states.push(next);
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::PI;

    #[test]
    fn upright_equilibrium_is_still() {
        let d = cartpole_rhs(&[0.0; 4], 0.0, &CartpoleParams::true_plant());
        assert_eq!(d, [0.0; 4]);
    }

    #[test]
    fn hanging_position_has_no_acceleration() {
        let d = cartpole_rhs(&[0.0, 0.0, PI, 0.0], 0.0, &CartpoleParams::true_plant());
        // sin(π) is ~1.2e-16 in floating point.
        assert!(d[1].abs() < 1e-14 && d[3].abs() < 1e-14);
        assert_eq!(d[0], 0.0);
        assert_eq!(d[2], 0.0);
    }

    #[test]
    fn angular_acceleration_is_odd_in_angle() {
        let p = CartpoleParams::nominal();
        for th in [0.05, 0.3, 1.0, 2.0] {
            let a = cartpole_rhs(&[0.0, 0.0, th, 0.0], 0.0, &p)[3];
            let b = cartpole_rhs(&[0.0, 0.0, -th, 0.0], 0.0, &p)[3];
            assert!(a > 0.0);
            assert_eq!(a, -b);
        }
    }

    #[test]
    fn equilibrium_is_a_fixed_point_of_the_step() {
        let plant = Cartpole::new(CartpoleParams::true_plant(), 1.0 / 15.0);
        assert_eq!(plant.step(&[0.0; 4], &[0.0]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn rejects_nonpositive_dt() {
        assert!(rk4_step(&[0.0; 4], 0.0, 0.0, &CartpoleParams::nominal()).is_err());
    }

    #[test]
    fn scaling_params() {
        let n = CartpoleParams::nominal();
        assert_eq!(scale_params(&n, 0.0), n);
        let s = scale_params(&n, 0.10);
        assert!((s.m_c - 0.825).abs() < 1e-15);
        assert!((s.m_p - 0.0825).abs() < 1e-15);
        assert!((s.l - 0.4125).abs() < 1e-15);
        assert_eq!(s.gravity, n.gravity);
        let t = scale_params(&n, 1.0 / 3.0);
        let truth = CartpoleParams::true_plant();
        assert!((t.m_c - truth.m_c).abs() < 1e-15);
        assert!((t.m_p - truth.m_p).abs() < 1e-15);
        assert!((t.l - truth.l).abs() < 1e-15);
    }

    #[test]
    fn force_limit_clips() {
        let mut plant = Cartpole::new(CartpoleParams::nominal(), 0.05);
        plant.force_limit = Some(2.0);
        assert_eq!(
            plant.step(&[0.0; 4], &[10.0]).unwrap(),
            plant.step(&[0.0; 4], &[2.0]).unwrap()
        );
    }
}
