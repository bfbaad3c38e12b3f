//! Offline synthesis of the synchronising LQR controller and the online control law.

use crate::dynamics::LtiModel;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::scalar::Real;

/// Per-agent state and input weights plus the pairwise synchronisation weight.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec<T: Real> {
    pub q: Vec<Matrix<T>>,
    pub q_sync: Matrix<T>,
    pub r: Vec<Matrix<T>>,
}

impl<T: Real> CostSpec<T> {
    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        if self.q.len() != self.r.len() {
            return Err(Error::dimension("CostSpec agents", self.q.len(), self.r.len()));
        }
        linalg::check_shape("CostSpec::q_sync", &self.q_sync, n, n)?;
        check_psd("q_sync", &self.q_sync)?;
        for (qi, ri) in self.q.iter().zip(&self.r) {
            linalg::check_shape("CostSpec::q", qi, n, n)?;
            linalg::check_shape("CostSpec::r", ri, m, m)?;
            check_psd("q", qi)?;
            linalg::cholesky_factor(ri)
                .map_err(|_| Error::Config("input weight R must be positive definite".into()))?;
        }
        Ok(())
    }

    pub fn agents(&self) -> usize {
        self.q.len()
    }
}

fn check_psd<T: Real>(name: &str, m: &Matrix<T>) -> Result<()> {
    linalg::psd_factor(m)
        .map(|_| ())
        .map_err(|_| Error::Config(format!("{name} must be symmetric positive semidefinite")))
}

/// Block-structured weights of the augmented problem.
///
/// Diagonal state blocks are `Q_i + (N−1)·Q_sync`, off-diagonal blocks `−Q_sync`;
/// the input weight is block diagonal.
pub fn build_augmented_cost<T: Real>(models: &[LtiModel<T>], cost: &CostSpec<T>) -> Result<(Matrix<T>, Matrix<T>)> {
    let (n, m) = common_dims(models)?;
    if cost.agents() != models.len() {
        return Err(Error::dimension("augmented cost agents", models.len(), cost.agents()));
    }
    cost.validate(n, m)?;
    let agents = models.len();
    let others = T::from_usize_lossy(agents.saturating_sub(1));
    let mut q = Matrix::zeros(agents * n, agents * n);
    let mut r = Matrix::zeros(agents * m, agents * m);
    for i in 0..agents {
        for j in 0..agents {
            let block = if i == j {
                &cost.q[i] + &cost.q_sync * others
            } else {
                -&cost.q_sync
            };
            q.view_mut((i * n, j * n), (n, n)).copy_from(&block);
        }
        r.view_mut((i * m, i * m), (m, m)).copy_from(&cost.r[i]);
    }
    Ok((q, r))
}

/// Block-diagonal augmented dynamics `(Ã, B̃)`.
pub fn augmented_dynamics<T: Real>(models: &[LtiModel<T>]) -> Result<(Matrix<T>, Matrix<T>)> {
    let (n, m) = common_dims(models)?;
    let agents = models.len();
    let mut a = Matrix::zeros(agents * n, agents * n);
    let mut b = Matrix::zeros(agents * n, agents * m);
    for (i, model) in models.iter().enumerate() {
        a.view_mut((i * n, i * n), (n, n)).copy_from(&model.a);
        b.view_mut((i * n, i * m), (n, m)).copy_from(&model.b);
    }
    Ok((a, b))
}

fn common_dims<T: Real>(models: &[LtiModel<T>]) -> Result<(usize, usize)> {
    let first = models
        .first()
        .ok_or_else(|| Error::Config("at least one agent model is required".into()))?;
    let (n, m) = (first.n(), first.m());
    for model in models {
        if model.n() != n || model.m() != m {
            return Err(Error::dimension(
                "agent model",
                format!("n={n}, m={m}"),
                format!("n={}, m={}", model.n(), model.m()),
            ));
        }
    }
    Ok((n, m))
}

#[derive(Debug, Clone, Copy)]
pub struct RiccatiOptions<T: Real> {
    /// Convergence threshold on the max-abs elementwise change of the iterate.
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for RiccatiOptions<T> {
    fn default() -> Self {
        let floor = T::machine_eps() * T::lit(1e3);
        let tol = T::lit(1e-10);
        Self {
            tol: if floor > tol { floor } else { tol },
            max_iter: 1_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RiccatiSolution<T: Real> {
    pub p: Matrix<T>,
    /// State feedback with the sign convention `u = gain·x`.
    pub gain: Matrix<T>,
    pub iterations: usize,
}

/// Infinite-horizon discrete-time LQR by fixed-point iteration of the Riccati recursion.
pub fn solve_dare<T: Real>(
    a: &Matrix<T>,
    b: &Matrix<T>,
    q: &Matrix<T>,
    r: &Matrix<T>,
    opts: RiccatiOptions<T>,
) -> Result<RiccatiSolution<T>> {
    let n = a.nrows();
    linalg::check_shape("dare A", a, n, n)?;
    linalg::check_shape("dare Q", q, n, n)?;
    let m = b.ncols();
    linalg::check_shape("dare B", b, n, m)?;
    linalg::check_shape("dare R", r, m, m)?;

    let feedback = |p: &Matrix<T>| -> Result<(Matrix<T>, Matrix<T>)> {
        let atp = a.transpose() * p;
        let s = r + b.transpose() * p * b;
        let bt_pa = b.transpose() * p * a;
        let chol = s
            .cholesky()
            .ok_or_else(|| Error::Synthesis("R + BᵀPB lost positive definiteness".into()))?;
        Ok((atp, chol.solve(&bt_pa)))
    };

    let mut p = q.clone();
    for iter in 1..=opts.max_iter {
        let (atp, k) = feedback(&p)?;
        let mut next = q + &atp * a - (&atp * b) * &k;
        next = (&next + next.transpose()) * T::lit(0.5);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::Synthesis(format!("Riccati iterate diverged at step {iter}")));
        }
        let change = linalg::max_abs(&(&next - &p));
        p = next;
        if change <= opts.tol {
            let (_, k) = feedback(&p)?;
            return Ok(RiccatiSolution {
                p,
                gain: -k,
                iterations: iter,
            });
        }
    }
    Err(Error::Synthesis(format!(
        "Riccati iteration did not converge within {} iterations",
        opts.max_iter
    )))
}

/// Static feedback `u_i = F_ii·x_i + Σ_{j∈Ω_i} F_ij·x̂_ij`, stored as one
/// `(N·m)×(N·n)` block matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet<T: Real> {
    pub n: usize,
    pub m: usize,
    pub f: Matrix<T>,
    omega: Vec<Vec<usize>>,
}

impl<T: Real> GainSet<T> {
    pub fn from_matrix(f: Matrix<T>, agents: usize, n: usize, m: usize) -> Result<Self> {
        linalg::check_shape("GainSet", &f, agents * m, agents * n)?;
        let omega = (0..agents)
            .map(|i| {
                (0..agents)
                    .filter(|&j| j != i && f.view((i * m, j * n), (m, n)).iter().any(|v| *v != T::zero()))
                    .collect()
            })
            .collect();
        Ok(Self { n, m, f, omega })
    }

    pub fn zeros(agents: usize, n: usize, m: usize) -> Self {
        Self::from_matrix(Matrix::zeros(agents * m, agents * n), agents, n, m).expect("consistent shape")
    }

    pub fn agents(&self) -> usize {
        self.omega.len()
    }

    pub fn f_ij(&self, i: usize, j: usize) -> Matrix<T> {
        self.f.view((i * self.m, j * self.n), (self.m, self.n)).into_owned()
    }

    pub fn f_ii(&self, i: usize) -> Matrix<T> {
        self.f_ij(i, i)
    }

    /// Agents whose estimates enter agent `i`'s control law.
    pub fn omega(&self, i: usize) -> &[usize] {
        &self.omega[i]
    }

    /// Augmented closed loop `Ã + B̃·F` under perfect state information.
    pub fn closed_loop_augmented(&self, models: &[LtiModel<T>]) -> Result<Matrix<T>> {
        let (a, b) = augmented_dynamics(models)?;
        Ok(a + b * &self.f)
    }

    /// `A_i + B_i·F_ii` for every agent.
    pub fn local_closed_loops(&self, models: &[LtiModel<T>]) -> Vec<Matrix<T>> {
        models
            .iter()
            .enumerate()
            .map(|(i, model)| model.closed_loop(&self.f_ii(i)))
            .collect()
    }
}

/// Synthesises the augmented LQR controller and partitions it per agent.
pub fn solve_lqr<T: Real>(models: &[LtiModel<T>], cost: &CostSpec<T>, opts: RiccatiOptions<T>) -> Result<GainSet<T>> {
    let (q, r) = build_augmented_cost(models, cost)?;
    let (a, b) = augmented_dynamics(models)?;
    let sol = solve_dare(&a, &b, &q, &r, opts)?;
    let (n, m) = common_dims(models)?;
    GainSet::from_matrix(sol.gain, models.len(), n, m)
}

/// Control input of agent `i` from its own state and its bank of estimates
/// (indexed by agent id).
pub fn control_input<T: Real>(
    i: usize,
    x_i: &Vector<T>,
    estimates: &[Vector<T>],
    gains: &GainSet<T>,
) -> Result<Vector<T>> {
    linalg::check_len("control_input state", x_i, gains.n)?;
    let (n, m) = (gains.n, gains.m);
    let mut u = gains.f.view((i * m, i * n), (m, n)) * x_i;
    for &j in gains.omega(i) {
        let est = estimates
            .get(j)
            .filter(|e| e.len() == n)
            .ok_or_else(|| Error::Contract {
                round: 0,
                agent: i,
                message: format!("missing estimate of agent {j}"),
            })?;
        u += gains.f.view((i * m, j * n), (m, n)) * est;
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{make_cartpole_model, CartPoleParams};

    fn scalar_model(a: f64, b: f64) -> LtiModel<f64> {
        LtiModel::new(
            Matrix::from_element(1, 1, a),
            Matrix::from_element(1, 1, b),
            Matrix::zeros(1, 1),
            0.1,
        )
        .unwrap()
    }

    fn cartpoles(k: usize) -> Vec<LtiModel<f64>> {
        (0..k)
            .map(|_| make_cartpole_model(&CartPoleParams::off_the_shelf(), 0.1, Matrix::zeros(4, 4)).unwrap())
            .collect()
    }

    fn cost(k: usize, q_sync0: f64) -> CostSpec<f64> {
        let mut qs = Matrix::zeros(4, 4);
        qs[(0, 0)] = q_sync0;
        CostSpec {
            q: vec![Matrix::from_diagonal(&Vector::from_column_slice(&[1.0, 1.0, 0.1, 0.1])); k],
            q_sync: qs,
            r: vec![Matrix::from_element(1, 1, 0.1); k],
        }
    }

    #[test]
    fn decoupled_augmented_cost() {
        let models = cartpoles(2);
        let mut c = cost(2, 0.0);
        c.q[1] = Matrix::identity(4, 4) * 2.0;
        let (q, r) = build_augmented_cost(&models, &c).unwrap();
        assert_eq!(q.view((0, 0), (4, 4)), c.q[0]);
        assert_eq!(q.view((4, 4), (4, 4)), c.q[1]);
        assert_eq!(q.view((0, 4), (4, 4)), Matrix::zeros(4, 4));
        assert_eq!(r, Matrix::identity(2, 2) * 0.1);
    }

    #[test]
    fn two_agent_sync_blocks() {
        let models = cartpoles(2);
        let mut c = cost(2, 10.0);
        c.q = vec![Matrix::identity(4, 4); 2];
        let (q, _) = build_augmented_cost(&models, &c).unwrap();
        let mut expected_off = Matrix::zeros(4, 4);
        expected_off[(0, 0)] = -10.0;
        assert_eq!(q.view((0, 4), (4, 4)), expected_off);
        assert_eq!(q.view((4, 0), (4, 4)), expected_off);
        assert_eq!(q[(0, 0)], 11.0);
    }

    #[test]
    fn three_agent_blocks_match_pairwise_expansion() {
        // Σ_{i<j} (x_i − x_j)ᵀ S (x_i − x_j) expanded by hand: each agent appears
        // in two pairs, so its diagonal block gains 2S, cross blocks are −S.
        let models = cartpoles(3);
        let s = Matrix::from_fn(4, 4, |i, j| if i == j { 1.0 + i as f64 } else { 0.25 });
        let c = CostSpec {
            q: vec![Matrix::identity(4, 4); 3],
            q_sync: s.clone(),
            r: vec![Matrix::from_element(1, 1, 0.1); 3],
        };
        let (q, _) = build_augmented_cost(&models, &c).unwrap();
        // independent route: evaluate the quadratic form on random stacked vectors
        let x = Vector::from_fn(12, |i, _| ((i * 7 + 3) % 11) as f64 - 5.0);
        let xs: Vec<Vector<f64>> = (0..3).map(|i| x.rows(4 * i, 4).into_owned()).collect();
        let mut direct = 0.0;
        for xi in &xs {
            direct += (xi.transpose() * xi)[(0, 0)];
        }
        for i in 0..3 {
            for j in (i + 1)..3 {
                let d = &xs[i] - &xs[j];
                direct += (d.transpose() * &s * &d)[(0, 0)];
            }
        }
        let quad = (x.transpose() * &q * &x)[(0, 0)];
        assert!((quad - direct).abs() < 1e-9);
        assert_eq!(q.view((0, 0), (4, 4)), Matrix::identity(4, 4) + &s * 2.0);
    }

    /// Finite-horizon value iteration run until the scalar Riccati map stops moving.
    fn scalar_value_iteration(a: f64, b: f64, q: f64, r: f64) -> (f64, f64) {
        let mut p = 0.0;
        for _ in 0..10_000 {
            p = q + a * a * p - (a * b * p).powi(2) / (r + b * b * p);
        }
        (p, a * b * p / (r + b * b * p))
    }

    #[test]
    fn scalar_riccati_matches_oracle() {
        let (p_ref, k_ref) = scalar_value_iteration(0.5, 1.0, 1.0, 1.0);
        assert!((p_ref - 1.13278).abs() < 1e-5);
        assert!((k_ref - 0.26557).abs() < 1e-5);
        let sol = solve_dare(
            &Matrix::from_element(1, 1, 0.5),
            &Matrix::from_element(1, 1, 1.0),
            &Matrix::from_element(1, 1, 1.0),
            &Matrix::from_element(1, 1, 1.0),
            RiccatiOptions::default(),
        )
        .unwrap();
        assert!((sol.p[(0, 0)] - p_ref).abs() < 1e-9);
        assert!((sol.gain[(0, 0)].abs() - k_ref).abs() < 1e-9);
        assert!(sol.gain[(0, 0)] < 0.0);
    }

    #[test]
    fn iteration_cap_reports_synthesis_error() {
        let err = solve_dare(
            &Matrix::from_element(1, 1, 0.99),
            &Matrix::from_element(1, 1, 1.0),
            &Matrix::from_element(1, 1, 1.0),
            &Matrix::from_element(1, 1, 1.0),
            RiccatiOptions {
                tol: 1e-14,
                max_iter: 2,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Synthesis(_)));
    }

    #[test]
    fn decoupled_cost_gives_no_cross_gains() {
        let models = cartpoles(3);
        let gains = solve_lqr(&models, &cost(3, 0.0), RiccatiOptions::default()).unwrap();
        for i in 0..3 {
            assert!(gains.omega(i).is_empty());
            for j in 0..3 {
                if i != j {
                    assert_eq!(gains.f_ij(i, j), Matrix::zeros(1, 4));
                }
            }
        }
    }

    #[test]
    fn synthesized_loops_are_stable_and_deterministic() {
        let models = cartpoles(3);
        let g1 = solve_lqr(&models, &cost(3, 10.0), RiccatiOptions::default()).unwrap();
        let g2 = solve_lqr(&models, &cost(3, 10.0), RiccatiOptions::default()).unwrap();
        assert_eq!(g1, g2);
        assert!(linalg::spectral_radius(&g1.closed_loop_augmented(&models).unwrap()) < 1.0);
        for cl in g1.local_closed_loops(&models) {
            assert!(linalg::spectral_radius(&cl) < 1.0);
        }
        assert_eq!(g1.omega(0), &[1, 2]);
    }

    #[test]
    fn scalar_scalar_model_gain() {
        let models = vec![scalar_model(0.5, 1.0)];
        let c = CostSpec {
            q: vec![Matrix::from_element(1, 1, 1.0)],
            q_sync: Matrix::zeros(1, 1),
            r: vec![Matrix::from_element(1, 1, 1.0)],
        };
        let g = solve_lqr(&models, &c, RiccatiOptions::default()).unwrap();
        assert!((g.f_ii(0)[(0, 0)] + 0.26557).abs() < 1e-5);
    }

    #[test]
    fn control_law_cases() {
        let mut f = Matrix::zeros(2, 4);
        f[(0, 0)] = -1.0;
        f[(0, 1)] = -2.0;
        f[(0, 2)] = 0.5;
        f[(0, 3)] = 0.25;
        let gains = GainSet::from_matrix(f, 2, 2, 1).unwrap();
        let zero = Vector::zeros(2);
        assert_eq!(
            control_input(0, &zero, &[zero.clone(), zero.clone()], &gains).unwrap()[0],
            0.0
        );
        // agent 1 has no coupling
        assert!(gains.omega(1).is_empty());
        let x = Vector::from_column_slice(&[1.0, 1.0]);
        assert_eq!(control_input(1, &x, &[], &gains).unwrap()[0], 0.0);
        let e1 = Vector::from_column_slice(&[1.0, 0.0]);
        let u = control_input(0, &x, &[zero.clone(), e1], &gains).unwrap();
        assert_eq!(u[0], -3.0 + 0.5);
        assert!(matches!(
            control_input(0, &x, &[zero], &gains),
            Err(Error::Contract { .. })
        ));
    }
}
