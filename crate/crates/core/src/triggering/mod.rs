//! Predictive priority measure, its Chernoff approximation, and quantisation.
//!
//! The score is built on the chi-square distribution of the squared
//! Mahalanobis distance of a zero-mean Gaussian error. It lies in `[0, 0.5]`
//! while the predicted distance stays below the agent's threshold `δ` and in
//! `[0.5, 1]` once the threshold is exceeded, increasing with the predicted
//! distance throughout. A grant threshold of `0.5` therefore means "the
//! predicted error crosses `δ`".

pub mod gamma;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::scalar::Real;

pub use gamma::{chi_square_cdf, gamma_p, gamma_q, ln_gamma};

/// `eᵀ·V⁻¹·e`.
pub fn mahalanobis_sq<T: Real>(e: &Vector<T>, v_inverse: &Matrix<T>) -> T {
    (e.transpose() * v_inverse * e)[(0, 0)]
}

/// `Σ_{s=0}^{h−1} M^s·Σ_v·(M^s)ᵀ`: covariance of `h` steps of noise propagated by `M`.
pub fn propagated_variance<T: Real>(transition: &Matrix<T>, sigma_v: &Matrix<T>, h: usize) -> Matrix<T> {
    let n = transition.nrows();
    let mut total = Matrix::zeros(n, n);
    let mut power = Matrix::identity(n, n);
    for _ in 0..h {
        total += &power * sigma_v * power.transpose();
        power = transition * power;
    }
    (&total + total.transpose()) * T::lit(0.5)
}

/// Mean of the error `H + 1` rounds ahead without communication: `Ã^{H+1}·ê`.
pub fn propagate_error_mean<T: Real>(closed_loop: &Matrix<T>, e: &Vector<T>, horizon: usize) -> Vector<T> {
    let mut out = e.clone();
    for _ in 0..=horizon {
        out = closed_loop * out;
    }
    out
}

/// Closed-form gamma term `γ(n/2, |δ − d²|/2) / Γ(n/2)`.
///
/// Below the threshold this is the probability that a `χ²_n` variable stays
/// below `δ − d²`; above it the arguments are reversed.
pub fn gamma_term<T: Real>(delta: T, d_sq: T, n: usize) -> T {
    let a = T::from_usize_lossy(n) * T::lit(0.5);
    gamma_p(a, (delta - d_sq).abs() * T::lit(0.5))
}

fn split_score<T: Real>(delta: T, d_sq: T, cdf: impl Fn(T) -> T) -> T {
    let half = T::lit(0.5);
    if d_sq <= delta {
        half * (T::one() - cdf(delta - d_sq))
    } else {
        half + half * cdf(d_sq - delta)
    }
}

/// Ranking score from the exact chi-square CDF. Monotone non-decreasing in `d_sq`.
pub fn priority<T: Real>(delta: T, d_sq: T, n: usize) -> T {
    let a = T::from_usize_lossy(n) * T::lit(0.5);
    split_score(delta, d_sq, |x| gamma_p(a, x * T::lit(0.5)))
}

/// Chernoff-style approximation of the `χ²_n` CDF.
///
/// With `β = x/n` and `g(β) = (β·e^{1−β})^{n/2}` (the tail bound in both
/// directions), returns `g/2` below the mean and `1 − g/2` above it. It is
/// continuous, strictly increasing and equals `1/2` at `x = n`.
pub fn chernoff_cdf<T: Real>(n: usize, x: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    let nt = T::from_usize_lossy(n);
    let beta = x / nt;
    let log_g = nt * T::lit(0.5) * (beta.ln() + T::one() - beta);
    let g = log_g.exp();
    let half = T::lit(0.5);
    if beta <= T::one() {
        half * g
    } else {
        T::one() - half * g
    }
}

/// [`priority`] with the CDF replaced by [`chernoff_cdf`]; induces the same ranking.
pub fn priority_chernoff<T: Real>(delta: T, d_sq: T, n: usize) -> T {
    split_score(delta, d_sq, |x| chernoff_cdf(n, x))
}

/// `floor(P·(2^W − 1) + 1/2)` clamped to the representable range.
pub fn quantize<T: Real>(p: T, w_p: u32) -> u32 {
    let max = max_level(w_p);
    if !(p > T::zero()) {
        return 0;
    }
    let scaled = (p * T::from_usize_lossy(max as usize) + T::lit(0.5)).floor();
    let level = scaled.to_f64_lossy();
    if level >= max as f64 {
        max
    } else {
        level as u32
    }
}

pub fn max_level(w_p: u32) -> u32 {
    assert!((1..=16).contains(&w_p), "priority width must be 1..=16 bits");
    (1u32 << w_p) - 1
}

/// Any component of `e` beyond its bound in absolute value.
pub fn saturates<T: Real>(e: &Vector<T>, e_max: &Vector<T>) -> bool {
    e.iter().zip(e_max.iter()).any(|(v, m)| v.abs() > *m)
}

/// [`quantize`] with the saturation rule: the top level whenever `e` leaves the `e_max` box.
pub fn quantize_saturating<T: Real>(p: T, e: &Vector<T>, e_max: &Vector<T>, w_p: u32) -> u32 {
    if saturates(e, e_max) {
        max_level(w_p)
    } else {
        quantize(p, w_p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PriorityMeasure {
    Exact,
    #[default]
    Chernoff,
}

impl PriorityMeasure {
    pub fn score<T: Real>(self, delta: T, d_sq: T, n: usize) -> T {
        match self {
            PriorityMeasure::Exact => priority(delta, d_sq, n),
            PriorityMeasure::Chernoff => priority_chernoff(delta, d_sq, n),
        }
    }
}

/// Error covariances and thresholds for one agent, computed once per configuration.
#[derive(Debug, Clone)]
pub struct ErrorStatistics<T: Real> {
    pub horizon: usize,
    pub closed_loop: Matrix<T>,
    /// Covariance of the error `H + 1` rounds ahead and its inverse.
    pub v_ahead: Matrix<T>,
    pub v_ahead_inv: Matrix<T>,
    /// One-round covariance (`H = 0`) and its inverse.
    pub v_now: Matrix<T>,
    pub v_now_inv: Matrix<T>,
    pub delta_ahead: T,
    pub delta_now: T,
    pub e_max: Vector<T>,
}

impl<T: Real> ErrorStatistics<T> {
    pub fn new(closed_loop: Matrix<T>, sigma_v: &Matrix<T>, horizon: usize, e_max: Vector<T>) -> Result<Self> {
        let n = closed_loop.nrows();
        linalg::check_shape("ErrorStatistics closed loop", &closed_loop, n, n)?;
        linalg::check_shape("ErrorStatistics sigma_v", sigma_v, n, n)?;
        linalg::check_len("ErrorStatistics e_max", &e_max, n)?;
        if e_max.iter().any(|v| !(*v > T::zero())) {
            return Err(Error::Config("e_max entries must be positive".into()));
        }
        let v_ahead = propagated_variance(&closed_loop, sigma_v, horizon + 1);
        let v_now = propagated_variance(&closed_loop, sigma_v, 1);
        let v_ahead_inv = linalg::spd_inverse(&v_ahead)
            .map_err(|_| Error::Config("propagated error covariance is singular".into()))?;
        let v_now_inv =
            linalg::spd_inverse(&v_now).map_err(|_| Error::Config("process noise covariance is singular".into()))?;
        Ok(Self {
            horizon,
            delta_ahead: mahalanobis_sq(&e_max, &v_ahead_inv),
            delta_now: mahalanobis_sq(&e_max, &v_now_inv),
            closed_loop,
            v_ahead,
            v_ahead_inv,
            v_now,
            v_now_inv,
            e_max,
        })
    }

    pub fn n(&self) -> usize {
        self.closed_loop.nrows()
    }

    /// Squared distance of the predicted error mean `H + 1` rounds ahead.
    pub fn predicted_distance(&self, e: &Vector<T>) -> T {
        let mean = propagate_error_mean(&self.closed_loop, e, self.horizon);
        mahalanobis_sq(&mean, &self.v_ahead_inv)
    }

    /// Same as [`Self::predicted_distance`] with `H = 0`.
    pub fn instant_distance(&self, e: &Vector<T>) -> T {
        let mean = &self.closed_loop * e;
        mahalanobis_sq(&mean, &self.v_now_inv)
    }

    /// Raw and quantised priorities for the current self-estimation error.
    pub fn evaluate(&self, agent: usize, e: &Vector<T>, measure: PriorityMeasure, w_p: u32) -> PriorityRecord<T> {
        let n = self.n();
        let p_h = measure.score(self.delta_ahead, self.predicted_distance(e), n);
        let p_0 = measure.score(self.delta_now, self.instant_distance(e), n);
        PriorityRecord {
            agent,
            p_h,
            p_0,
            quantized: quantize_saturating(p_h, e, &self.e_max, w_p),
            quantized_0: quantize_saturating(p_0, e, &self.e_max, w_p),
            w_p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorityRecord<T: Real> {
    pub agent: usize,
    pub p_h: T,
    pub p_0: T,
    pub quantized: u32,
    pub quantized_0: u32,
    pub w_p: u32,
}
