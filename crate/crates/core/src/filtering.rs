//! First-order low-pass filter on `S⁺(p, n)`.
//!
//! The update `x ← (y dt + τ x) / (dt + τ)` is read as a weighted
//! rank-preserving mean of the estimate and the new measurement with weight
//! `α = dt / (dt + τ)` on the measurement.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fixed_rank::{mean_two, PsdFixedRank};
use crate::linalg::{compact_svd, Matrix, SpdMatrix, StiefelBasis};
use crate::math;

/// Resampling attempts for a numerically rank-deficient measurement.
const MAX_RESAMPLES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    /// Time constant, in the unit of `dt`.
    pub tau: f64,
    pub dt: f64,
    pub steps: usize,
    /// Noise magnitude as a fraction of the signal magnitude.
    pub noise_level: f64,
    /// Inject an outlier every `k`-th step.
    pub outlier_period: Option<usize>,
    /// Noise multiplier on outlier steps.
    pub outlier_scale: f64,
    pub seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            tau: 50.0,
            dt: 1.0,
            steps: 500,
            noise_level: 0.5,
            outlier_period: None,
            outlier_scale: 10.0,
            seed: 0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) || !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig("tau and dt must be positive"));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be at least 1"));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(Error::InvalidConfig("noise level must be nonnegative"));
        }
        if self.outlier_period == Some(0) {
            return Err(Error::InvalidConfig("outlier period must be at least 1"));
        }
        if !(self.outlier_scale >= 0.0 && self.outlier_scale.is_finite()) {
            return Err(Error::InvalidConfig("outlier scale must be nonnegative"));
        }
        Ok(())
    }

    /// Weight of the measurement in one update.
    pub fn alpha(&self) -> f64 {
        self.dt / (self.dt + self.tau)
    }

    fn is_outlier_step(&self, step: usize) -> bool {
        matches!(self.outlier_period, Some(k) if step > 0 && step % k == 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub estimate: PsdFixedRank,
    pub step_index: usize,
    /// Measurements rejected so far because they sat on the cut locus.
    pub rejected: usize,
}

impl FilterState {
    pub fn new(estimate: PsdFixedRank) -> Self {
        Self {
            estimate,
            step_index: 0,
            rejected: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Accepted,
    /// The measurement's span was at the cut locus of the estimate's span;
    /// the estimate was kept.
    Rejected,
}

/// One filter update. A measurement at the cut locus is skipped and
/// flagged; every other failure is an error.
pub fn filter_step(
    state: &FilterState,
    measurement: &PsdFixedRank,
    config: &FilterConfig,
) -> Result<(FilterState, StepStatus)> {
    match mean_two(&state.estimate, measurement, config.alpha()) {
        Ok(estimate) => Ok((
            FilterState {
                estimate,
                step_index: state.step_index + 1,
                rejected: state.rejected,
            },
            StepStatus::Accepted,
        )),
        Err(Error::AlignmentSingular { .. }) => Ok((
            FilterState {
                estimate: state.estimate.clone(),
                step_index: state.step_index + 1,
                rejected: state.rejected + 1,
            },
            StepStatus::Rejected,
        )),
        Err(e) => Err(e),
    }
}

/// `(Z + ν)(Z + ν)ᵀ` for an `n×p` factor `Z`, with i.i.d. Gaussian `ν` of
/// standard deviation `noise_level · ‖Z‖_F / √(np)`, so that
/// `E‖ν‖²_F = (noise_level · ‖Z‖_F)²`.
pub fn generate_measurement<R: Rng + ?Sized>(truth: &Matrix, noise_level: f64, rng: &mut R) -> Result<PsdFixedRank> {
    let (n, p) = truth.shape();
    if n == 0 || p == 0 || p > n {
        return Err(Error::Domain("truth factor must be n×p with 1 ≤ p ≤ n"));
    }
    if truth.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let magnitude = truth.norm();
    if magnitude == 0.0 {
        return Err(Error::Domain("truth factor must be nonzero"));
    }
    let sigma = noise_level * magnitude / math::sqrt((n * p) as f64);
    let mut smallest = 0.0;
    for _ in 0..MAX_RESAMPLES {
        let noisy = truth + Matrix::from_fn(n, p, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
        let svd = compact_svd(&noisy)?;
        smallest = svd.singular_values[p - 1];
        if smallest > 1e-12 * svd.singular_values[0] {
            let shape: Vec<f64> = svd.singular_values.iter().map(|s| s * s).collect();
            let shape = SpdMatrix::from_diagonal(&shape)?;
            return PsdFixedRank::new(StiefelBasis::from_matrix_unchecked(svd.left), shape);
        }
    }
    Err(Error::RankDeficient {
        rank: p,
        eigenvalue: smallest * smallest,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Truth,
    Measurement,
    Estimate,
}

impl RowKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RowKind::Truth => "truth",
            RowKind::Measurement => "measurement",
            RowKind::Estimate => "estimate",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub kind: RowKind,
    /// Upper-triangular dense coefficients, row by row.
    pub coefficients: Vec<f64>,
    /// Frobenius distance to the truth.
    pub err_fro: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub rows: Vec<TrajectoryRow>,
    /// Steps whose measurement was rejected at the cut locus.
    pub rejected_steps: Vec<usize>,
}

impl Trajectory {
    /// Errors of `kind` rows, in step order.
    pub fn errors(&self, kind: RowKind) -> Vec<f64> {
        self.rows.iter().filter(|r| r.kind == kind).map(|r| r.err_fro).collect()
    }

    /// Mean error of `kind` rows over the last `window` steps.
    pub fn mean_error_tail(&self, kind: RowKind, window: usize) -> f64 {
        let errors = self.errors(kind);
        let tail = &errors[errors.len().saturating_sub(window)..];
        tail.iter().sum::<f64>() / tail.len().max(1) as f64
    }

    pub fn max_error(&self, kind: RowKind) -> f64 {
        self.errors(kind).into_iter().fold(0.0, f64::max)
    }

    pub fn final_error(&self, kind: RowKind) -> f64 {
        self.errors(kind).last().copied().unwrap_or(f64::NAN)
    }
}

fn upper_triangle(m: &Matrix) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn row(step: usize, kind: RowKind, dense: &Matrix, truth: &Matrix) -> TrajectoryRow {
    TrajectoryRow {
        step,
        kind,
        coefficients: upper_triangle(dense),
        err_fro: (dense - truth).norm(),
    }
}

fn measurement_at(config: &FilterConfig, truth: &Matrix, step: usize, rng: &mut ChaCha8Rng) -> Result<PsdFixedRank> {
    let level = if config.is_outlier_step(step) {
        config.noise_level * config.outlier_scale
    } else {
        config.noise_level
    };
    generate_measurement(truth, level, rng)
}

/// Filters `config.steps` noisy measurements of `Z Zᵀ`, starting from the
/// first measurement.
pub fn run_experiment(config: &FilterConfig, truth: &Matrix) -> Result<Trajectory> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let first = measurement_at(config, truth, 0, &mut rng)?;
    run(config, truth, first.clone(), Some(first), &mut rng)
}

/// As [`run_experiment`], from a given initial estimate.
pub fn run_experiment_from(config: &FilterConfig, truth: &Matrix, initial: PsdFixedRank) -> Result<Trajectory> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    run(config, truth, initial, None, &mut rng)
}

fn run(
    config: &FilterConfig,
    truth: &Matrix,
    initial: PsdFixedRank,
    first_measurement: Option<PsdFixedRank>,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let n = truth.nrows();
    if initial.n() != n || initial.p() != truth.ncols() {
        return Err(Error::DimensionMismatch {
            expected: truth.shape(),
            found: (initial.n(), initial.p()),
        });
    }
    let truth_dense = truth * truth.transpose();
    let mut rows = Vec::with_capacity(2 * config.steps + 1);
    rows.push(row(0, RowKind::Truth, &truth_dense, &truth_dense));
    let mut state = FilterState::new(initial);
    let mut rejected_steps = Vec::new();
    let mut pending = first_measurement;
    for step in 0..config.steps {
        let measurement = match pending.take() {
            Some(m) => m,
            None => measurement_at(config, truth, step, rng)?,
        };
        if step > 0 || state.estimate != measurement {
            let (next, status) = filter_step(&state, &measurement, config)?;
            if status == StepStatus::Rejected {
                rejected_steps.push(step);
            }
            state = next;
        }
        rows.push(row(step, RowKind::Measurement, &measurement.to_dense(), &truth_dense));
        rows.push(row(step, RowKind::Estimate, &state.estimate.to_dense(), &truth_dense));
    }
    Ok(Trajectory {
        n,
        rows,
        rejected_steps,
    })
}
