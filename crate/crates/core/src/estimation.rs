//! Model-propagated estimates of every agent's state under one-round delay,
//! message loss and sporadic transmissions.
//!
//! On reception of `x_j(k−1)` the estimate is a one-step prediction from the
//! received state; otherwise the previous estimate is propagated. In both
//! cases agent `j`'s coupling input is reconstructed from the receiving bank's
//! own previous-round estimates.

use crate::control::GainSet;
use crate::dynamics::LtiModel;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::scalar::Real;

/// What one receiver learned about agent `j` in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedAgent<T: Real> {
    /// Agent `j` was scheduled and sent.
    pub kappa: bool,
    /// The message reached this receiver.
    pub phi: bool,
    /// `x_j(k−1)`, present exactly when `kappa && phi`.
    pub payload: Option<Vector<T>>,
}

impl<T: Real> ObservedAgent<T> {
    pub fn silent() -> Self {
        Self {
            kappa: false,
            phi: false,
            payload: None,
        }
    }

    pub fn lost() -> Self {
        Self {
            kappa: true,
            phi: false,
            payload: None,
        }
    }

    pub fn received(x_prev: Vector<T>) -> Self {
        Self {
            kappa: true,
            phi: true,
            payload: Some(x_prev),
        }
    }

    pub fn delivered(&self) -> bool {
        self.kappa && self.phi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundObservation<T: Real> {
    pub round: u64,
    pub agents: Vec<ObservedAgent<T>>,
}

impl<T: Real> RoundObservation<T> {
    pub fn silent(round: u64, agents: usize) -> Self {
        Self {
            round,
            agents: vec![ObservedAgent::silent(); agents],
        }
    }

    fn validate(&self, agents: usize, n: usize) -> Result<()> {
        if self.agents.len() != agents {
            return Err(Error::dimension("RoundObservation agents", agents, self.agents.len()));
        }
        for (j, a) in self.agents.iter().enumerate() {
            match (&a.payload, a.delivered()) {
                (Some(p), true) if p.len() == n => {}
                (None, false) => {}
                _ => {
                    return Err(Error::Contract {
                        round: self.round,
                        agent: j,
                        message: "payload must be present exactly when kappa·phi = 1".into(),
                    })
                }
            }
        }
        Ok(())
    }
}

/// Precomputed per-agent prediction matrices.
#[derive(Debug, Clone)]
pub struct Predictor<T: Real> {
    n: usize,
    m: usize,
    closed: Vec<Matrix<T>>,
    b: Vec<Matrix<T>>,
    local: Vec<Matrix<T>>,
    /// The gain matrix with its diagonal blocks removed.
    f_coupling: Matrix<T>,
}

impl<T: Real> Predictor<T> {
    pub fn new(models: &[LtiModel<T>], gains: &GainSet<T>) -> Result<Self> {
        if models.len() != gains.agents() {
            return Err(Error::dimension("Predictor agents", gains.agents(), models.len()));
        }
        let (n, m) = (gains.n, gains.m);
        for model in models {
            if model.n() != n || model.m() != m {
                return Err(Error::dimension(
                    "Predictor model",
                    format!("n={n}, m={m}"),
                    format!("n={}, m={}", model.n(), model.m()),
                ));
            }
        }
        let mut f_coupling = gains.f.clone();
        for i in 0..models.len() {
            f_coupling.view_mut((i * m, i * n), (m, n)).fill(T::zero());
        }
        Ok(Self {
            n,
            m,
            closed: gains.local_closed_loops(models),
            b: models.iter().map(|md| md.b.clone()).collect(),
            local: (0..models.len()).map(|i| gains.f_ii(i)).collect(),
            f_coupling,
        })
    }

    pub fn agents(&self) -> usize {
        self.closed.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn closed_loop(&self, j: usize) -> &Matrix<T> {
        &self.closed[j]
    }

    /// `Σ_{ℓ∈Ω_j} F_jℓ·x̂_ℓ` for every `j`, stacked (length `N·m`).
    pub fn coupling(&self, stacked: &Vector<T>) -> Vector<T> {
        &self.f_coupling * stacked
    }

    /// Control law with the coupling term read from a bank.
    pub fn control(&self, i: usize, x_i: &Vector<T>, bank: &EstimatorBank<T>) -> Vector<T> {
        let m = self.m;
        let coupling = self.f_coupling.rows(i * m, m).clone_owned() * &bank.estimates;
        &self.local[i] * x_i + coupling
    }
}

/// Agent `owner`'s estimates of all agents, itself included.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorBank<T: Real> {
    pub owner: usize,
    n: usize,
    estimates: Vector<T>,
    round: u64,
}

impl<T: Real> EstimatorBank<T> {
    /// Bank whose estimates equal the known initial states.
    pub fn new(owner: usize, initial: &[Vector<T>], round: u64) -> Result<Self> {
        let n = initial
            .first()
            .map(|x| x.len())
            .ok_or_else(|| Error::Config("estimator bank needs at least one agent".into()))?;
        if owner >= initial.len() {
            return Err(Error::Config(format!("bank owner {owner} out of range")));
        }
        let mut estimates = Vector::zeros(initial.len() * n);
        for (j, x) in initial.iter().enumerate() {
            linalg::check_len("EstimatorBank initial state", x, n)?;
            estimates.rows_mut(j * n, n).copy_from(x);
        }
        Ok(Self {
            owner,
            n,
            estimates,
            round,
        })
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn agents(&self) -> usize {
        self.estimates.len() / self.n
    }

    pub fn estimate(&self, j: usize) -> Vector<T> {
        self.estimates.rows(j * self.n, self.n).into_owned()
    }

    pub fn estimates(&self) -> Vec<Vector<T>> {
        (0..self.agents()).map(|j| self.estimate(j)).collect()
    }

    pub fn stacked(&self) -> &Vector<T> {
        &self.estimates
    }

    /// Advances the bank by one round.
    pub fn advance(&self, obs: &RoundObservation<T>, predictor: &Predictor<T>) -> Result<Self> {
        if obs.round != self.round + 1 {
            return Err(Error::Sequencing {
                expected: self.round + 1,
                actual: obs.round,
            });
        }
        let n = self.n;
        obs.validate(self.agents(), n)?;
        if predictor.agents() != self.agents() || predictor.n() != n {
            return Err(Error::dimension(
                "EstimatorBank predictor",
                self.agents(),
                predictor.agents(),
            ));
        }
        let coupling = predictor.coupling(&self.estimates);
        let m = predictor.m;
        let mut next = Vector::zeros(self.estimates.len());
        for (j, seen) in obs.agents.iter().enumerate() {
            let base = match &seen.payload {
                Some(x_prev) if seen.delivered() => x_prev.clone(),
                _ => self.estimate(j),
            };
            let c = coupling.rows(j * m, m);
            let x_next = &predictor.closed[j] * base + &predictor.b[j] * c;
            next.rows_mut(j * n, n).copy_from(&x_next);
        }
        Ok(Self {
            owner: self.owner,
            n,
            estimates: next,
            round: obs.round,
        })
    }

    /// `x_i − x̂_ii`: the error every other agent's estimate of the owner has
    /// when no message of the owner was lost.
    pub fn self_error(&self, x_owner: &Vector<T>) -> Vector<T> {
        x_owner - self.estimate(self.owner)
    }

    /// `x_j − x̂_ij`.
    pub fn error_of(&self, j: usize, x_j: &Vector<T>) -> Vector<T> {
        x_j - self.estimate(j)
    }
}

/// Convenience wrapper building the predictor on every call.
pub fn update<T: Real>(
    bank: &EstimatorBank<T>,
    obs: &RoundObservation<T>,
    models: &[LtiModel<T>],
    gains: &GainSet<T>,
) -> Result<EstimatorBank<T>> {
    bank.advance(obs, &Predictor::new(models, gains)?)
}

pub fn self_error<T: Real>(bank: &EstimatorBank<T>, x_i: &Vector<T>) -> Vector<T> {
    bank.self_error(x_i)
}

/// Closed form of the error after `noise.len()` rounds without communication:
/// `Ã^K·e + Σ_s Ã^{K−1−s}·v_s`.
pub fn propagate_error_closed_form<T: Real>(closed_loop: &Matrix<T>, e0: &Vector<T>, noise: &[Vector<T>]) -> Vector<T> {
    let k = noise.len();
    let mut out = linalg::mat_pow(closed_loop, k) * e0;
    for (s, v) in noise.iter().enumerate() {
        out += linalg::mat_pow(closed_loop, k - 1 - s) * v;
    }
    out
}
