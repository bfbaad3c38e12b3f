//! Empirical checks of the drift argument: Lyapunov value, multi-step
//! horizon, the one-step error bound, mean-square boundedness and the
//! per-window case partition.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::dynamics::NoiseSampler;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_factor, mat_pow, spd_inverse, spectral_norm, Matrix, Vector};
use crate::rng::{stream, Domain};
use crate::scalar::Real;
use crate::triggering::mahalanobis_sq;

/// Sum of squared Mahalanobis distances of all own and cross errors.
///
/// `cross[i]` lists `(j, ê_ij)` pairs, measured with the variance of agent `j`.
pub fn lyapunov_v<T: Real>(
    own: &[Vector<T>],
    cross: &[Vec<(usize, Vector<T>)>],
    v_inverses: &[Matrix<T>],
) -> Result<T> {
    if v_inverses.len() != own.len() {
        return Err(Error::dimension("lyapunov_v variances", own.len(), v_inverses.len()));
    }
    let mut total = T::zero();
    for (e, v_inv) in own.iter().zip(v_inverses) {
        total += mahalanobis_sq(e, v_inv);
    }
    for (i, row) in cross.iter().enumerate() {
        for (j, e) in row {
            if *j == i {
                continue;
            }
            let v_inv = v_inverses
                .get(*j)
                .ok_or_else(|| Error::dimension("lyapunov_v cross index", v_inverses.len(), j + 1))?;
            total += mahalanobis_sq(e, v_inv);
        }
    }
    Ok(total)
}

/// Drift horizon `K = ceil(2N / M_C)`.
pub fn horizon_k(n: usize, m_c: usize) -> usize {
    assert!(m_c >= 1, "M_C must be at least 1");
    (2 * n).div_ceil(m_c)
}

/// `L⁻¹ Ã L` with `Σ_v = L Lᵀ`: the closed loop in whitened error coordinates.
pub fn whitened<T: Real>(closed_loop: &Matrix<T>, sigma_v: &Matrix<T>) -> Result<Matrix<T>> {
    let l = cholesky_factor(sigma_v)?;
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Config("noise covariance factor is singular".into()))?;
    Ok(l_inv * closed_loop * l)
}

/// `‖L⁻¹ Ã L‖₂²`.
pub fn whitened_norm_sq<T: Real>(closed_loop: &Matrix<T>, sigma_v: &Matrix<T>) -> Result<T> {
    let s = spectral_norm(&whitened(closed_loop, sigma_v)?);
    Ok(s * s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftBoundPoint {
    pub d2_start: f64,
    pub lhs_mean: f64,
    pub standard_error: f64,
    pub rhs: f64,
    /// `rhs + 3·SE − lhs_mean`; non-negative when the point passes.
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftBoundReport {
    pub verdict: Verdict,
    pub norm_sq: f64,
    pub samples: usize,
    pub points: Vec<DriftBoundPoint>,
}

/// Below this many samples the standard error is not trusted.
pub const DRIFT_BOUND_MIN_SAMPLES: usize = 1000;

/// Monte-Carlo check of `E[d²(Ãê + v)] ≤ ‖Ã‖²·d²(ê) + n` at every grid point,
/// with `d²` taken in the `Σ_v` metric.
pub fn drift_bound_check<T: Real>(
    closed_loop: &Matrix<T>,
    sigma_v: &Matrix<T>,
    grid: &[Vector<T>],
    samples: usize,
    seed: u64,
) -> Result<DriftBoundReport>
where
    StandardNormal: Distribution<T>,
{
    let n = closed_loop.nrows();
    let norm_sq = whitened_norm_sq(closed_loop, sigma_v)?.to_f64_lossy();
    let metric = spd_inverse(sigma_v)?;
    let sampler = NoiseSampler::new(sigma_v)?;
    if samples < DRIFT_BOUND_MIN_SAMPLES {
        return Ok(DriftBoundReport {
            verdict: Verdict::Inconclusive,
            norm_sq,
            samples,
            points: Vec::new(),
        });
    }
    let mut points = Vec::with_capacity(grid.len());
    for (g, e) in grid.iter().enumerate() {
        if e.len() != n {
            return Err(Error::dimension("drift_bound_check grid point", n, e.len()));
        }
        let mean_next = closed_loop * e;
        let mut rng = stream(seed, Domain::MonteCarlo, g as u64, 0);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..samples {
            let next = &mean_next + sampler.sample(&mut rng);
            let d2 = mahalanobis_sq(&next, &metric).to_f64_lossy();
            sum += d2;
            sum_sq += d2 * d2;
        }
        let count = samples as f64;
        let mean = sum / count;
        let var = (sum_sq / count - mean * mean).max(0.0) * count / (count - 1.0);
        let se = (var / count).sqrt();
        let d2_start = mahalanobis_sq(e, &metric).to_f64_lossy();
        let rhs = norm_sq * d2_start + n as f64;
        points.push(DriftBoundPoint {
            d2_start,
            lhs_mean: mean,
            standard_error: se,
            rhs,
            margin: rhs + 3.0 * se - mean,
        });
    }
    let verdict = if points.iter().all(|p| p.margin >= 0.0) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(DriftBoundReport {
        verdict,
        norm_sq,
        samples,
        points,
    })
}

/// Noise-free form of the bound: `d²(Ãê) ≤ ‖Ã‖²·d²(ê)`, up to rounding.
pub fn drift_bound_noiseless<T: Real>(
    closed_loop: &Matrix<T>,
    sigma_v: &Matrix<T>,
    grid: &[Vector<T>],
) -> Result<bool> {
    let norm_sq = whitened_norm_sq(closed_loop, sigma_v)?;
    let metric = spd_inverse(sigma_v)?;
    let slack = T::lit(1e3) * T::machine_eps();
    Ok(grid.iter().all(|e| {
        let lhs = mahalanobis_sq(&(closed_loop * e), &metric);
        let rhs = norm_sq * mahalanobis_sq(e, &metric);
        lhs <= rhs * (T::one() + slack) + slack
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct MsbReport {
    pub window: usize,
    pub growth: f64,
    pub sup: f64,
    pub sup_first_half: f64,
    pub sup_second_half: f64,
    pub bounded: bool,
    /// Windowed mean of `Σ_i ‖x_i‖²`, one entry per full window.
    #[serde(skip)]
    pub windowed: Vec<f64>,
}

/// Windowed second moment of the state and the half-run growth verdict.
///
/// `sq_norms[k]` is `Σ_i ‖x_i(k)‖²`.
pub fn msb_monitor(sq_norms: &[f64], window: usize, growth: f64) -> Result<MsbReport> {
    if window == 0 {
        return Err(Error::Config("MSB window must be positive".into()));
    }
    if !(growth.is_finite() && growth >= 1.0) {
        return Err(Error::Config("MSB growth factor must be at least 1".into()));
    }
    let needed = 10 * window;
    if sq_norms.len() < needed {
        return Err(Error::TraceTooShort {
            len: sq_norms.len(),
            needed,
        });
    }
    let mut windowed = Vec::with_capacity(sq_norms.len() - window + 1);
    let mut sum = 0.0;
    for (k, v) in sq_norms.iter().enumerate() {
        sum += v;
        if k >= window {
            sum -= sq_norms[k - window];
        }
        if k + 1 >= window {
            windowed.push(sum / window as f64);
        }
    }
    // a window belongs to the half its last round falls in
    let split = (sq_norms.len() / 2).saturating_sub(window - 1);
    let sup_of = |s: &[f64]| {
        s.iter().fold(0.0f64, |acc, &v| {
            if acc.is_nan() || v.is_nan() {
                f64::NAN
            } else {
                acc.max(v)
            }
        })
    };
    let sup_first_half = sup_of(&windowed[..split]);
    let sup_second_half = sup_of(&windowed[split..]);
    let all_finite = sq_norms.iter().all(|v| v.is_finite());
    let bounded = all_finite && sup_second_half <= growth * sup_first_half;
    Ok(MsbReport {
        window,
        growth,
        sup: sup_of(&windowed),
        sup_first_half,
        sup_second_half,
        bounded,
        windowed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    /// Error at the end of the window is below the threshold.
    C1,
    /// Above the threshold, with at least one transmission at the given window offset.
    C2 { last_tx: usize },
    /// Above the threshold, no transmission, but below it at some point.
    C3a,
    /// Above the threshold throughout without transmitting.
    C3b,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CaseCounts {
    pub c1: usize,
    pub c2: usize,
    pub c3a: usize,
    pub c3b: usize,
}

impl CaseCounts {
    pub fn total(&self) -> usize {
        self.c1 + self.c2 + self.c3a + self.c3b
    }

    fn add(&mut self, case: Case) {
        match case {
            Case::C1 => self.c1 += 1,
            Case::C2 { .. } => self.c2 += 1,
            Case::C3a => self.c3a += 1,
            Case::C3b => self.c3b += 1,
        }
    }
}

/// Classifies the window `[start, start + k)` of one agent.
///
/// `d2[t]` is the agent's own squared error distance at round `t`, `sent[t]`
/// whether it transmitted its state at round `t`. An agent that was granted
/// but never got its state through counts as not having transmitted.
pub fn classify_window(d2: &[f64], sent: &[bool], start: usize, k: usize, delta: f64) -> Case {
    let end = start + k - 1;
    if d2[end] <= delta {
        return Case::C1;
    }
    if let Some(offset) = (start..=end).rev().find(|&t| sent[t]).map(|t| t - start) {
        return Case::C2 { last_tx: offset };
    }
    if d2[start..=end].iter().any(|&d| d <= delta) {
        Case::C3a
    } else {
        Case::C3b
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DriftProbe {
    pub k: usize,
    /// Drift value per round.
    #[serde(skip)]
    pub v: Vec<f64>,
    pub counts: CaseCounts,
    pub per_agent: Vec<CaseCounts>,
}

/// Classifies every sliding `K`-window of every agent. Windows need the
/// round after their end, so the last `K` rounds start no window.
pub fn partition_cases(d2: &[Vec<f64>], sent: &[Vec<bool>], k: usize, delta: f64, v: Vec<f64>) -> Result<DriftProbe> {
    if k < 2 {
        return Err(Error::Config("drift horizon must be at least 2".into()));
    }
    if d2.len() != sent.len() {
        return Err(Error::dimension("partition_cases agents", d2.len(), sent.len()));
    }
    let mut counts = CaseCounts::default();
    let mut per_agent = Vec::with_capacity(d2.len());
    for (series, flags) in d2.iter().zip(sent) {
        if series.len() != flags.len() {
            return Err(Error::dimension("partition_cases rounds", series.len(), flags.len()));
        }
        let mut own = CaseCounts::default();
        for start in 0..series.len().saturating_sub(k) {
            let case = classify_window(series, flags, start, k, delta);
            own.add(case);
            counts.add(case);
        }
        per_agent.push(own);
    }
    Ok(DriftProbe {
        k,
        v,
        counts,
        per_agent,
    })
}

/// Noise-accumulation bound for a window whose last transmission is at offset `r`:
/// `n · Σ_{s=r}^{K} ‖Ã_w^{K−s}‖²`.
pub fn c2_bound(whitened_closed_loop: &Matrix<f64>, k: usize, r: usize) -> f64 {
    let n = whitened_closed_loop.nrows() as f64;
    (0..=k.saturating_sub(r))
        .map(|j| {
            let s = spectral_norm(&mat_pow(whitened_closed_loop, j));
            n * s * s
        })
        .sum()
}

#[derive(Debug, Clone, Serialize)]
pub struct SpotCheck {
    pub windows: usize,
    pub mean_excess: f64,
    pub standard_error: f64,
    pub pass: bool,
}

/// Checks the realized `d²` one round after every c₂ window against its bound,
/// on average: `mean(d² − bound) ≤ 3·SE`.
pub fn c2_spot_check(d2: &[f64], sent: &[bool], k: usize, delta: f64, whitened_closed_loop: &Matrix<f64>) -> SpotCheck {
    let bounds: Vec<f64> = (0..=k).map(|r| c2_bound(whitened_closed_loop, k, r)).collect();
    let mut excess = Vec::new();
    for start in 0..d2.len().saturating_sub(k) {
        if let Case::C2 { last_tx } = classify_window(d2, sent, start, k, delta) {
            excess.push(d2[start + k] - bounds[last_tx]);
        }
    }
    let count = excess.len() as f64;
    if excess.len() < 2 {
        return SpotCheck {
            windows: excess.len(),
            mean_excess: f64::NAN,
            standard_error: f64::NAN,
            pass: true,
        };
    }
    let mean = excess.iter().sum::<f64>() / count;
    let var = excess.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (count - 1.0);
    let se = (var / count).sqrt();
    SpotCheck {
        windows: excess.len(),
        mean_excess: mean,
        standard_error: se,
        pass: mean <= 3.0 * se,
    }
}
