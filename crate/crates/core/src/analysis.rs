//! Numerical certificates computed along trajectories: dissipation
//! inequalities for NI/OSNI members, the network Lyapunov function
//! `W = V̂_p + V_c - Ŷ_pᵀ Y_c` and its decrease bound, consensus error and
//! controller steady states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{SystemModel, Trajectory};
use crate::error::{check_len, Error, Result};
use crate::network::{ClosedLoopSystem, NetworkTrajectory};
use crate::scalar::{dot, max_abs, norm, Scalar};

pub const DEFAULT_LYAPUNOV_TOL: f64 = 1e-3;
pub const DEFAULT_CONSENSUS_THRESHOLD: f64 = 0.05;
pub const DEFAULT_RATE_TOL: f64 = 1e-4;
pub const DEFAULT_MIN_DURATION: f64 = 0.5;
pub const DEFAULT_STEADY_STATE_TOL: f64 = 1e-2;

/// Attached to every steady-state report.
pub const STEADY_STATE_NOTE: &str =
    "only the closed-loop consequence (zero mean controller output \
in detected steady states) is checked; the constant-input inequality on the plant network is \
assumed, not verified";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DissipationKind {
    /// `V̇ ≤ uᵀẏ`
    Ni,
    /// `V̇ ≤ uᵀẏ - ε|ẏ|²`
    Osni,
}

/// How `V̇` is obtained along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageRate {
    /// `∇V · f` when the model has a storage gradient, finite differences
    /// otherwise.
    Auto,
    /// `∇V(x) · f(x, u)` at each sample.
    Gradient,
    /// Central differences of `V(x(t))` on the recorded grid (interior
    /// samples only).
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipationReport<T: Scalar> {
    pub kind: DissipationKind,
    pub epsilon: T,
    /// Largest positive value of `V̇ - supply` over the grid (zero if the
    /// inequality holds everywhere).
    pub max_violation: T,
    pub violation_times: Vec<T>,
    pub tolerance: T,
    pub pass: bool,
    pub rate: StorageRate,
}

/// `1e-6 + 1e-4 · max|supply|`.
pub fn default_dissipation_tolerance<T: Scalar>(max_abs_supply: T) -> T {
    T::lit(1e-6) + T::lit(1e-4) * max_abs_supply
}

/// Samples of `V̇ - (uᵀẏ - ε|ẏ|²)` along a trajectory, as `(t, residual,
/// supply)` triples. `epsilon = 0` gives the NI residual.
pub fn dissipation_residuals<T: Scalar>(
    model: &SystemModel<T>,
    traj: &Trajectory<T>,
    epsilon: T,
    rate: StorageRate,
) -> Result<Vec<(T, T, T)>> {
    let n = traj.len();
    if n < 3 {
        return Err(Error::GridTooShort(n));
    }
    if !model.has_storage() {
        return Err(Error::MissingStorage(model.name().to_owned()));
    }
    let rate = match rate {
        StorageRate::Auto if model.has_storage_gradient() => StorageRate::Gradient,
        StorageRate::Auto => StorageRate::FiniteDifference,
        other => other,
    };
    let supply = |i: usize| {
        let ydot = &traj.output_rates[i];
        dot(&traj.inputs[i], ydot) - epsilon * dot(ydot, ydot)
    };
    let out = match rate {
        StorageRate::Gradient => {
            if !model.has_storage_gradient() {
                return Err(Error::MissingStorage(format!(
                    "{} has no storage gradient",
                    model.name()
                )));
            }
            (0..n)
                .map(|i| {
                    let x = &traj.states[i];
                    let grad = model.storage_gradient(x).expect("checked above");
                    let vdot = dot(&grad, &model.field(x, &traj.inputs[i]));
                    let s = supply(i);
                    (traj.times[i], vdot - s, s)
                })
                .collect()
        }
        _ => {
            let v: Vec<T> = traj
                .states
                .iter()
                .map(|x| model.storage(x).expect("checked above"))
                .collect();
            (1..n - 1)
                .map(|i| {
                    let vdot = (v[i + 1] - v[i - 1]) / (traj.times[i + 1] - traj.times[i - 1]);
                    let s = supply(i);
                    (traj.times[i], vdot - s, s)
                })
                .collect()
        }
    };
    Ok(out)
}

fn dissipation_report<T: Scalar>(
    kind: DissipationKind,
    model: &SystemModel<T>,
    traj: &Trajectory<T>,
    epsilon: T,
    tol: Option<T>,
) -> Result<DissipationReport<T>> {
    let rate = if model.has_storage_gradient() {
        StorageRate::Gradient
    } else {
        StorageRate::FiniteDifference
    };
    let residuals = dissipation_residuals(model, traj, epsilon, rate)?;
    let tolerance = tol.unwrap_or_else(|| {
        let max_supply = residuals
            .iter()
            .fold(T::zero(), |acc, &(_, _, s)| acc.max(s.abs()));
        default_dissipation_tolerance(max_supply)
    });
    let mut max_violation = T::zero();
    let mut violation_times = Vec::new();
    for &(t, r, _) in &residuals {
        // NaN counts as a violation
        if !(r <= tolerance) {
            violation_times.push(t);
        }
        if r.is_nan() {
            max_violation = T::nan();
        } else if !max_violation.is_nan() {
            max_violation = max_violation.max(r);
        }
    }
    Ok(DissipationReport {
        kind,
        epsilon,
        max_violation,
        pass: max_violation <= tolerance,
        violation_times,
        tolerance,
        rate,
    })
}

/// Checks `V̇ ≤ uᵀẏ` at every sample. `tol = None` applies
/// [`default_dissipation_tolerance`].
pub fn check_ni_dissipation<T: Scalar>(
    model: &SystemModel<T>,
    traj: &Trajectory<T>,
    tol: Option<T>,
) -> Result<DissipationReport<T>> {
    dissipation_report(DissipationKind::Ni, model, traj, T::zero(), tol)
}

/// Checks `V̇ ≤ uᵀẏ - ε|ẏ|²` at every sample.
pub fn check_osni_dissipation<T: Scalar>(
    model: &SystemModel<T>,
    traj: &Trajectory<T>,
    epsilon: T,
    tol: Option<T>,
) -> Result<DissipationReport<T>> {
    if !(epsilon > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "strictness level must be positive, got {epsilon}"
        )));
    }
    dissipation_report(DissipationKind::Osni, model, traj, epsilon, tol)
}

/// `W(x) = Σ V_pi + Σ V_ck - ((Q ⊗ I_m) Y_p)ᵀ Y_c`.
pub fn total_storage<T: Scalar>(clm: &ClosedLoopSystem<T>, x: &[T]) -> Result<T> {
    check_len("stacked state", clm.state_dim(), x.len())?;
    let (xp, xc) = clm.split(x);
    let vp = clm
        .plants()
        .storage(xp)
        .ok_or_else(|| Error::MissingStorage("plant network".into()))?;
    let vc = clm
        .controllers()
        .storage(xc)
        .ok_or_else(|| Error::MissingStorage("controller network".into()))?;
    let (yp, yc) = clm.outputs(x);
    let edge = clm.incidence().apply(clm.io_dim(), &yp)?;
    Ok(vp + vc - dot(&edge, &yc))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSeries<T: Scalar> {
    pub times: Vec<T>,
    pub w: Vec<T>,
    /// Central differences in the interior, second-order one-sided
    /// differences at the two ends.
    pub w_rate: Vec<T>,
    /// `-ε_min |Ẏ_c|²`
    pub bound: Vec<T>,
    /// `bound - w_rate`; negative values violate the decrease bound.
    pub margin: Vec<T>,
    pub eps_min: T,
}

impl<T: Scalar> LyapunovSeries<T> {
    pub fn w0(&self) -> T {
        self.w[0]
    }

    pub fn w_end(&self) -> T {
        *self.w.last().expect("series has at least 3 samples")
    }

    /// Smallest margin over interior samples.
    pub fn worst_interior_margin(&self) -> T {
        let n = self.margin.len();
        self.margin[1..n - 1].iter().fold(T::infinity(), |acc, &m| {
            if m.is_nan() || acc.is_nan() {
                T::nan()
            } else {
                acc.min(m)
            }
        })
    }
}

fn finite_difference_rates<T: Scalar>(times: &[T], w: &[T]) -> Vec<T> {
    let n = w.len();
    let mut out = vec![T::zero(); n];
    for i in 1..n - 1 {
        out[i] = (w[i + 1] - w[i - 1]) / (times[i + 1] - times[i - 1]);
    }
    let (three, four) = (T::lit(3.0), T::lit(4.0));
    let h0 = times[1] - times[0];
    out[0] = (-three * w[0] + four * w[1] - w[2]) / (h0 + h0);
    let hn = times[n - 1] - times[n - 2];
    out[n - 1] = (three * w[n - 1] - four * w[n - 2] + w[n - 3]) / (hn + hn);
    out
}

pub fn lyapunov_series<T: Scalar>(
    clm: &ClosedLoopSystem<T>,
    ntraj: &NetworkTrajectory<T>,
) -> Result<LyapunovSeries<T>> {
    let n = ntraj.len();
    if n < 3 {
        return Err(Error::GridTooShort(n));
    }
    let w = ntraj
        .base
        .states
        .iter()
        .map(|x| total_storage(clm, x))
        .collect::<Result<Vec<T>>>()?;
    let times = ntraj.base.times.clone();
    let w_rate = finite_difference_rates(&times, &w);
    let eps_min = clm.eps_min();
    let bound: Vec<T> = ntraj
        .controller_output_rates
        .iter()
        .map(|r| -eps_min * dot(r, r))
        .collect();
    let margin = bound.iter().zip(&w_rate).map(|(&b, &r)| b - r).collect();
    Ok(LyapunovSeries {
        times,
        w,
        w_rate,
        bound,
        margin,
        eps_min,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovCheck<T: Scalar> {
    pub pass: bool,
    pub worst_margin: T,
}

/// Passes iff `dW/dt ≤ -ε_min|Ẏ_c|² + tol` at every interior sample.
pub fn check_lyapunov_decrease<T: Scalar>(series: &LyapunovSeries<T>, tol: T) -> LyapunovCheck<T> {
    let worst_margin = series.worst_interior_margin();
    LyapunovCheck {
        pass: worst_margin >= -tol,
        worst_margin,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusReport<T: Scalar> {
    pub times: Vec<T>,
    /// `max_{i,j} |y_pi - y_pj|`
    pub errors: Vec<T>,
    pub final_error: T,
    pub threshold: T,
    pub settled: bool,
    /// Smallest recorded `t*` with `e(t) < threshold` for every recorded
    /// `t ≥ t*`.
    pub settle_time: Option<T>,
}

/// Largest pairwise output distance between plants.
pub fn pairwise_spread<T: Scalar>(outputs: &[T], io_dim: usize) -> T {
    let n = outputs.len() / io_dim.max(1);
    let mut worst = T::zero();
    let mut diff = vec![T::zero(); io_dim];
    for i in 0..n {
        for j in i + 1..n {
            for c in 0..io_dim {
                diff[c] = outputs[i * io_dim + c] - outputs[j * io_dim + c];
            }
            let d = norm(&diff);
            worst = if d.is_nan() { d } else { worst.max(d) };
        }
    }
    worst
}

pub fn consensus_error<T: Scalar>(
    ntraj: &NetworkTrajectory<T>,
    io_dim: usize,
    threshold: T,
) -> ConsensusReport<T> {
    let errors: Vec<T> = ntraj
        .plant_outputs
        .iter()
        .map(|y| pairwise_spread(y, io_dim))
        .collect();
    consensus_report(ntraj.times().to_vec(), errors, threshold)
}

/// Builds a report from a precomputed error series.
pub fn consensus_report<T: Scalar>(
    times: Vec<T>,
    errors: Vec<T>,
    threshold: T,
) -> ConsensusReport<T> {
    let final_error = errors.last().copied().unwrap_or_else(T::zero);
    let last_bad = errors.iter().rposition(|&e| !(e < threshold));
    let settle_time = match last_bad {
        None => times.first().copied(),
        Some(i) => times.get(i + 1).copied(),
    };
    ConsensusReport {
        settled: settle_time.is_some(),
        settle_time,
        final_error,
        threshold,
        times,
        errors,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateWindow<T: Scalar> {
    pub start: T,
    pub end: T,
    /// `Ȳ_c`
    pub mean_controller_output: Vec<T>,
    /// `Ū_c`, the mean edge differences
    pub mean_controller_input: Vec<T>,
    pub max_rate: T,
}

fn mean_of<T: Scalar>(rows: &[Vec<T>]) -> Vec<T> {
    let dim = rows.first().map_or(0, Vec::len);
    let count = T::lit(rows.len() as f64);
    (0..dim)
        .map(|c| rows.iter().fold(T::zero(), |acc, r| acc + r[c]) / count)
        .collect()
}

/// Maximal runs of samples with `max|Ẏ_c| < rate_tol` lasting at least
/// `min_duration`.
pub fn detect_steady_state<T: Scalar>(
    ntraj: &NetworkTrajectory<T>,
    rate_tol: T,
    min_duration: T,
) -> Vec<SteadyStateWindow<T>> {
    let rates: Vec<T> = ntraj
        .controller_output_rates
        .iter()
        .map(|r| max_abs(r))
        .collect();
    let times = ntraj.times();
    let mut windows = Vec::new();
    let mut i = 0;
    while i < rates.len() {
        if !(rates[i] < rate_tol) {
            i += 1;
            continue;
        }
        let start = i;
        while i < rates.len() && rates[i] < rate_tol {
            i += 1;
        }
        let end = i - 1;
        if end > start && times[end] - times[start] >= min_duration {
            windows.push(SteadyStateWindow {
                start: times[start],
                end: times[end],
                mean_controller_output: mean_of(&ntraj.controller_outputs[start..=end]),
                mean_controller_input: mean_of(&ntraj.edge_differences[start..=end]),
                max_rate: rates[start..=end]
                    .iter()
                    .fold(T::zero(), |acc, &r| acc.max(r)),
            });
        }
    }
    windows
}

/// True iff every window has `|Ȳ_c| ≤ tol`. See [`STEADY_STATE_NOTE`].
pub fn check_steady_state_consequence<T: Scalar>(windows: &[SteadyStateWindow<T>], tol: T) -> bool {
    windows
        .iter()
        .all(|w| norm(&w.mean_controller_output) <= tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositiveDefiniteReport<T: Scalar> {
    pub value_at_origin: T,
    pub origin_ok: bool,
    pub radius: T,
    pub n_samples: usize,
    pub seed: u64,
    pub n_checked: usize,
    pub counterexample: Option<(Vec<T>, T)>,
    pub pass: bool,
}

/// Sample check that `fn(0) = 0` (within `1e-12`) and `fn(x) > 0` for
/// seeded uniform samples in the punctured ball `0 < |x| ≤ radius`.
/// Stops at the first counterexample.
pub fn sample_positive_definite<T: Scalar>(
    f: &dyn Fn(&[T]) -> T,
    dim: usize,
    radius: T,
    n_samples: usize,
    seed: u64,
) -> PositiveDefiniteReport<T> {
    let value_at_origin = f(&vec![T::zero(); dim]);
    let origin_ok = value_at_origin.abs() <= T::lit(1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = radius.to_f64_lossy();
    let mut counterexample = None;
    let mut n_checked = 0;
    let mut x = vec![T::zero(); dim];
    let mut direction = vec![0.0f64; dim];
    while n_checked < n_samples && dim > 0 {
        // Gaussian direction, radius r·U^(1/d): uniform in the ball without
        // rejection, which would starve in high dimension.
        for d in direction.iter_mut() {
            *d = rng.sample(StandardNormal);
        }
        let len = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
        let u: f64 = rng.gen_range(0.0..1.0);
        let scale = r * (1.0 - u).powf(1.0 / dim as f64) / len;
        for (xi, d) in x.iter_mut().zip(&direction) {
            *xi = T::lit(d * scale);
        }
        if !(len > 0.0) || norm(&x) == T::zero() {
            continue;
        }
        n_checked += 1;
        let v = f(&x);
        if !(v > T::zero()) {
            counterexample = Some((x.clone(), v));
            break;
        }
    }
    PositiveDefiniteReport {
        value_at_origin,
        origin_ok,
        radius,
        n_samples,
        seed,
        n_checked,
        pass: origin_ok && counterexample.is_none(),
        counterexample,
    }
}
