//! Stochastic LTI agent models stepped at the network update interval.
//!
//! Cart-pole state ordering is `(s, θ, ṡ, θ̇)`: cart position [m], pole angle
//! from upright [rad], and their rates. Input is the horizontal force on the
//! cart [N].

use nalgebra::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::scalar::Real;

/// `x(k+1) = A·x(k) + B·u(k) + v(k)` with `v ~ N(0, sigma_v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiModel<T: Real> {
    pub a: Matrix<T>,
    pub b: Matrix<T>,
    pub sigma_v: Matrix<T>,
    /// Discretisation step [s]; equals the network update interval.
    pub dt: T,
}

impl<T: Real> LtiModel<T> {
    pub fn new(a: Matrix<T>, b: Matrix<T>, sigma_v: Matrix<T>, dt: T) -> Result<Self> {
        let n = a.nrows();
        linalg::check_shape("LtiModel::a", &a, n, n)?;
        if b.nrows() != n {
            return Err(Error::dimension("LtiModel::b rows", n, b.nrows()));
        }
        linalg::check_shape("LtiModel::sigma_v", &sigma_v, n, n)?;
        // validates symmetry and semidefiniteness
        linalg::psd_factor(&sigma_v)?;
        if !(dt > T::zero()) {
            return Err(Error::Config("model time step must be positive".into()));
        }
        Ok(Self { a, b, sigma_v, dt })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// `A + B·F` for a local feedback gain `F` (m×n).
    pub fn closed_loop(&self, f_local: &Matrix<T>) -> Matrix<T> {
        &self.a + &self.b * f_local
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState<T: Real> {
    pub x: Vector<T>,
    pub k: u64,
}

impl<T: Real> AgentState<T> {
    pub fn new(x: Vector<T>, k: u64) -> Self {
        Self { x, k }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(Vector::zeros(n), 0)
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|v| v.is_finite())
    }
}

/// Holds one state component of one agent at a fixed value over `[start_step, end_step)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSpec {
    pub agent_id: usize,
    pub start_step: u64,
    pub end_step: u64,
    pub component: usize,
    pub value: f64,
    /// Components forced to zero while the hold is active (the held coordinate's rate).
    #[serde(default)]
    pub zero_components: Vec<usize>,
}

impl DisturbanceSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.start_step >= self.end_step {
            return Err(Error::Config(format!(
                "disturbance window [{}, {}) is empty",
                self.start_step, self.end_step
            )));
        }
        if self.component >= n || self.zero_components.iter().any(|&c| c >= n) {
            return Err(Error::Config(format!(
                "disturbance component out of range for state dimension {n}"
            )));
        }
        Ok(())
    }

    pub fn is_active(&self, k: u64) -> bool {
        (self.start_step..self.end_step).contains(&k)
    }

    /// Overwrites the held components if the hold is active at `state.k`.
    pub fn apply<T: Real>(&self, agent_id: usize, state: &mut AgentState<T>) {
        if agent_id != self.agent_id || !self.is_active(state.k) {
            return;
        }
        state.x[self.component] = T::lit(self.value);
        for &c in &self.zero_components {
            state.x[c] = T::zero();
        }
    }
}

pub fn apply_disturbances<T: Real>(agent_id: usize, state: &mut AgentState<T>, disturbances: &[DisturbanceSpec]) {
    for d in disturbances {
        d.apply(agent_id, state);
    }
}

/// One step of the agent dynamics with externally drawn noise.
pub fn step<T: Real>(
    model: &LtiModel<T>,
    state: &AgentState<T>,
    u: &Vector<T>,
    noise: &Vector<T>,
) -> Result<AgentState<T>> {
    linalg::check_len("step state", &state.x, model.n())?;
    linalg::check_len("step input", u, model.m())?;
    linalg::check_len("step noise", noise, model.n())?;
    let x = &model.a * &state.x + &model.b * u + noise;
    Ok(AgentState::new(x, state.k + 1))
}

/// [`step`] followed by any active disturbance hold for `agent_id`.
pub fn step_disturbed<T: Real>(
    model: &LtiModel<T>,
    agent_id: usize,
    state: &AgentState<T>,
    u: &Vector<T>,
    noise: &Vector<T>,
    disturbances: &[DisturbanceSpec],
) -> Result<AgentState<T>> {
    let mut next = step(model, state, u, noise)?;
    apply_disturbances(agent_id, &mut next, disturbances);
    Ok(next)
}

/// Physical parameters of a cart with a uniform rod pendulum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPoleParams {
    /// [kg]
    pub cart_mass: f64,
    /// [kg]
    pub pole_mass: f64,
    /// Pivot to centre of mass [m].
    pub pole_half_length: f64,
    /// [m/s²]
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    /// Viscous cart friction [N·s/m].
    #[serde(default)]
    pub cart_damping: f64,
}

fn default_gravity() -> f64 {
    9.81
}

impl CartPoleParams {
    /// Quanser IP02 cart with the long single pendulum.
    pub fn off_the_shelf() -> Self {
        Self {
            cart_mass: 0.94,
            pole_mass: 0.230,
            pole_half_length: 0.3302,
            gravity: 9.81,
            cart_damping: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = [self.cart_mass, self.pole_mass, self.pole_half_length, self.gravity];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(
                "cart-pole masses, length and gravity must be positive".into(),
            ));
        }
        if !(self.cart_damping.is_finite() && self.cart_damping >= 0.0) {
            return Err(Error::Config("cart damping must be non-negative".into()));
        }
        Ok(())
    }

    /// Continuous-time linearisation about the upright equilibrium.
    pub fn continuous<T: Real>(&self) -> Result<(Matrix<T>, Matrix<T>)> {
        self.validate()?;
        let (mc, mp, l, g, c) = (
            self.cart_mass,
            self.pole_mass,
            self.pole_half_length,
            self.gravity,
            self.cart_damping,
        );
        let inertia = mp * l * l / 3.0;
        let jp = inertia + mp * l * l;
        let det = (mc + mp) * jp - (mp * l).powi(2);
        let mut a = Matrix::<f64>::zeros(4, 4);
        a[(0, 2)] = 1.0;
        a[(1, 3)] = 1.0;
        a[(2, 1)] = -(mp * l).powi(2) * g / det;
        a[(2, 2)] = -jp * c / det;
        a[(3, 1)] = (mc + mp) * mp * g * l / det;
        a[(3, 2)] = mp * l * c / det;
        let mut b = Matrix::<f64>::zeros(4, 1);
        b[(2, 0)] = jp / det;
        b[(3, 0)] = -mp * l / det;
        Ok((a.map(T::lit), b.map(T::lit)))
    }
}

/// Zero-order-hold discretisation of `ẋ = Ac·x + Bc·u`.
pub fn zoh<T: Real>(ac: &Matrix<T>, bc: &Matrix<T>, dt: T) -> (Matrix<T>, Matrix<T>) {
    let n = ac.nrows();
    let m = bc.ncols();
    let mut aug = Matrix::<T>::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(ac * dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(bc * dt));
    let e = aug.exp();
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
}

/// Discrete cart-pole model about the upright equilibrium.
pub fn make_cartpole_model<T: Real>(params: &CartPoleParams, dt: T, sigma_v: Matrix<T>) -> Result<LtiModel<T>> {
    if !(dt > T::zero()) {
        return Err(Error::Config("time step must be positive".into()));
    }
    let (ac, bc) = params.continuous::<T>()?;
    let (a, b) = zoh(&ac, &bc, dt);
    LtiModel::new(a, b, sigma_v, dt)
}

/// Zero-mean Gaussian sampler for a fixed covariance.
#[derive(Debug, Clone)]
pub struct NoiseSampler<T: Real> {
    factor: Matrix<T>,
}

impl<T: Real> NoiseSampler<T>
where
    StandardNormal: Distribution<T>,
{
    pub fn new(sigma_v: &Matrix<T>) -> Result<Self> {
        Ok(Self {
            factor: linalg::psd_factor(sigma_v)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector<T> {
        let z = Vector::<T>::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        &self.factor * z
    }
}

pub fn sample_noise<T: Real, R: Rng + ?Sized>(rng: &mut R, sigma_v: &Matrix<T>) -> Result<Vector<T>>
where
    StandardNormal: Distribution<T>,
{
    Ok(NoiseSampler::new(sigma_v)?.sample(rng))
}

pub fn eigenvalues<T: Real>(m: &Matrix<T>) -> Vec<Complex<T>> {
    m.complex_eigenvalues().iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> Vector<f64> {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn identity_model_keeps_state() {
        let m = LtiModel::new(Matrix::identity(2, 2), Matrix::zeros(2, 1), Matrix::zeros(2, 2), 0.1).unwrap();
        let s = AgentState::new(v(&[1.0, 2.0]), 0);
        let next = step(&m, &s, &v(&[42.0]), &v(&[0.0, 0.0])).unwrap();
        assert_eq!(next.x, v(&[1.0, 2.0]));
        assert_eq!(next.k, 1);
    }

    #[test]
    fn pure_input_model() {
        let m = LtiModel::new(Matrix::zeros(1, 1), Matrix::identity(1, 1), Matrix::zeros(1, 1), 0.1).unwrap();
        let next = step(&m, &AgentState::zeros(1), &v(&[3.0]), &v(&[0.5])).unwrap();
        assert_eq!(next.x, v(&[3.5]));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = LtiModel::new(Matrix::identity(2, 2), Matrix::zeros(2, 1), Matrix::zeros(2, 2), 0.1).unwrap();
        let s = AgentState::zeros(2);
        assert!(matches!(
            step(&m, &s, &v(&[1.0, 2.0]), &v(&[0.0, 0.0])),
            Err(Error::Dimension { .. })
        ));
        assert!(LtiModel::new(
            Matrix::<f64>::identity(2, 2),
            Matrix::zeros(3, 1),
            Matrix::zeros(2, 2),
            0.1
        )
        .is_err());
    }

    #[test]
    fn cartpole_equilibrium_and_instability() {
        let m = make_cartpole_model(&CartPoleParams::off_the_shelf(), 0.1, Matrix::zeros(4, 4)).unwrap();
        let next = step(&m, &AgentState::zeros(4), &v(&[0.0]), &v(&[0.0; 4])).unwrap();
        assert_eq!(next.x, Vector::zeros(4));
        let rho = linalg::spectral_radius(&m.a);
        assert!(rho > 1.0, "spectral radius {rho}");
        // upright pendulum pole: exp(λ·dt) with λ = sqrt(a32)
        let (ac, _) = CartPoleParams::off_the_shelf().continuous::<f64>().unwrap();
        let expected = (ac[(3, 1)].sqrt() * 0.1).exp();
        assert!((rho - expected).abs() < 1e-9);
    }

    #[test]
    fn cartpole_zoh_small_step_limit() {
        let m = make_cartpole_model(&CartPoleParams::off_the_shelf(), 1e-9, Matrix::zeros(4, 4)).unwrap();
        assert!(linalg::max_abs(&(&m.a - Matrix::identity(4, 4))) < 1e-7);
        assert!(linalg::max_abs(&m.b) < 1e-7);
    }

    #[test]
    fn cartpole_is_deterministic() {
        let p = CartPoleParams::off_the_shelf();
        let a = make_cartpole_model::<f64>(&p, 0.1, Matrix::zeros(4, 4)).unwrap();
        let b = make_cartpole_model::<f64>(&p, 0.1, Matrix::zeros(4, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cartpole_rejects_bad_params() {
        let mut p = CartPoleParams::off_the_shelf();
        p.pole_mass = 0.0;
        assert!(make_cartpole_model::<f64>(&p, 0.1, Matrix::zeros(4, 4)).is_err());
        assert!(make_cartpole_model::<f64>(&CartPoleParams::off_the_shelf(), 0.0, Matrix::zeros(4, 4)).is_err());
    }

    #[test]
    fn cartpole_f32_matches_f64() {
        let p = CartPoleParams::off_the_shelf();
        let a64 = make_cartpole_model::<f64>(&p, 0.1, Matrix::zeros(4, 4)).unwrap();
        let a32 = make_cartpole_model::<f32>(&p, 0.1, Matrix::zeros(4, 4)).unwrap();
        for (x, y) in a64.a.iter().zip(a32.a.iter()) {
            assert!((x - *y as f64).abs() < 1e-4);
        }
    }

    #[test]
    fn zero_covariance_gives_zero_noise() {
        let mut rng = stream(1, Domain::ProcessNoise, 0, 0);
        let s = NoiseSampler::new(&Matrix::<f64>::zeros(4, 4)).unwrap();
        for _ in 0..100 {
            assert_eq!(s.sample(&mut rng), Vector::zeros(4));
        }
        assert!(sample_noise(&mut rng, &Matrix::from_row_slice(1, 1, &[-1.0])).is_err());
    }

    #[test]
    fn noise_covariance_monte_carlo() {
        let sigma = Matrix::<f64>::identity(4, 4) * 1e-8;
        let sampler = NoiseSampler::new(&sigma).unwrap();
        let samples = 100_000;
        let mut cov = Matrix::<f64>::zeros(4, 4);
        let mut cross = 0.0;
        for k in 0..samples {
            let a = sampler.sample(&mut stream(9, Domain::ProcessNoise, 0, k));
            let b = sampler.sample(&mut stream(9, Domain::ProcessNoise, 1, k));
            cov += &a * a.transpose();
            cross += a[0] * b[0];
        }
        cov /= samples as f64;
        cross /= samples as f64;
        for i in 0..4 {
            let rel = (cov[(i, i)] - 1e-8).abs() / 1e-8;
            assert!(rel < 0.05, "variance {i} off by {rel}");
        }
        // standard error of the cross moment is 1e-8/sqrt(N) ≈ 3.2e-11
        assert!(cross.abs() < 5.0 * 1e-8 / (samples as f64).sqrt());
    }

    #[test]
    fn disturbance_hold() {
        let d = DisturbanceSpec {
            agent_id: 2,
            start_step: 5,
            end_step: 8,
            component: 0,
            value: 0.2,
            zero_components: vec![2],
        };
        d.validate(4).unwrap();
        let m = make_cartpole_model(&CartPoleParams::off_the_shelf(), 0.1, Matrix::zeros(4, 4)).unwrap();
        let mut s = AgentState::new(v(&[0.0, 0.01, 0.0, 0.0]), 0);
        for _ in 0..10 {
            s = step_disturbed(&m, 2, &s, &v(&[0.3]), &v(&[0.0; 4]), std::slice::from_ref(&d)).unwrap();
            if d.is_active(s.k) {
                assert_eq!(s.x[0], 0.2);
                assert_eq!(s.x[2], 0.0);
            } else {
                assert_ne!(s.x[0], 0.2);
            }
        }
        let bad = DisturbanceSpec {
            start_step: 8,
            end_step: 8,
            ..d
        };
        assert!(bad.validate(4).is_err());
    }

    proptest! {
        #[test]
        fn step_is_linear(
            x1 in prop::collection::vec(-10.0f64..10.0, 4),
            x2 in prop::collection::vec(-10.0f64..10.0, 4),
            w1 in prop::collection::vec(-1.0f64..1.0, 4),
            w2 in prop::collection::vec(-1.0f64..1.0, 4),
            u1 in -5.0f64..5.0,
            u2 in -5.0f64..5.0,
        ) {
            let m = make_cartpole_model(&CartPoleParams::off_the_shelf(), 0.1, Matrix::zeros(4, 4)).unwrap();
            let s = |x: &[f64], u: f64, w: &[f64]| {
                step(&m, &AgentState::new(v(x), 0), &v(&[u]), &v(w)).unwrap().x
            };
            let sum: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a + b).collect();
            let wsum: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a + b).collect();
            let lhs = s(&sum, u1 + u2, &wsum);
            let rhs = s(&x1, u1, &w1) + s(&x2, u2, &w2) - s(&[0.0; 4], 0.0, &[0.0; 4]);
            prop_assert!((lhs - rhs).amax() < 1e-9);
        }

        #[test]
        fn origin_is_fixed_point(dt in 0.01f64..0.5) {
            let m = make_cartpole_model(&CartPoleParams::off_the_shelf(), dt, Matrix::zeros(4, 4)).unwrap();
            let next = step(&m, &AgentState::zeros(4), &v(&[0.0]), &v(&[0.0; 4])).unwrap();
            prop_assert_eq!(next.x, Vector::zeros(4));
        }
    }
}
