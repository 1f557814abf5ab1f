//! Nonlinear state-space systems `ẋ = f(x, u)`, `y = h(x)` and fixed-step
//! RK4 integration.
//!
//! The output map takes the state only, so a [`SystemModel`] never has
//! direct feedthrough and interconnections of models are always well posed.

use std::fmt;
use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::scalar::{max_abs, norm, Scalar};

type VectorField<T> = Arc<dyn Fn(&[T], &[T]) -> Vec<T> + Send + Sync>;
type StateMap<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;
type ScalarField<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;

/// States with any component above this magnitude count as divergent.
pub const DIVERGENCE_BOUND: f64 = 1e9;

/// A nonlinear state-space system with optional output Jacobian, storage
/// function and declared output-strictness level.
///
/// All closures must be pure. Models are cheap to clone (closures are
/// reference counted) and can be shared between threads.
#[derive(Clone)]
pub struct SystemModel<T: Scalar> {
    name: String,
    state_dim: usize,
    input_dim: usize,
    output_dim: usize,
    f: VectorField<T>,
    h: StateMap<T>,
    output_jacobian: Option<StateMap<T>>,
    storage: Option<ScalarField<T>>,
    storage_gradient: Option<StateMap<T>>,
    strictness: Option<T>,
}

impl<T: Scalar> fmt::Debug for SystemModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemModel")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("input_dim", &self.input_dim)
            .field("output_dim", &self.output_dim)
            .field("output_jacobian", &self.output_jacobian.is_some())
            .field("storage", &self.storage.is_some())
            .field("storage_gradient", &self.storage_gradient.is_some())
            .field("strictness", &self.strictness)
            .finish()
    }
}

impl<T: Scalar> SystemModel<T> {
    pub fn new(
        name: impl Into<String>,
        state_dim: usize,
        input_dim: usize,
        output_dim: usize,
        f: impl Fn(&[T], &[T]) -> Vec<T> + Send + Sync + 'static,
        h: impl Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            state_dim,
            input_dim,
            output_dim,
            f: Arc::new(f),
            h: Arc::new(h),
            output_jacobian: None,
            storage: None,
            storage_gradient: None,
            strictness: None,
        }
    }

    /// Row-major `output_dim × state_dim` Jacobian `∂h/∂x`.
    pub fn with_output_jacobian(
        mut self,
        jac: impl Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
    ) -> Self {
        self.output_jacobian = Some(Arc::new(jac));
        self
    }

    pub fn with_storage(mut self, storage: impl Fn(&[T]) -> T + Send + Sync + 'static) -> Self {
        self.storage = Some(Arc::new(storage));
        self
    }

    /// Attaches `∇V`. Only meaningful together with [`Self::with_storage`].
    pub fn with_storage_gradient(
        mut self,
        gradient: impl Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
    ) -> Self {
        self.storage_gradient = Some(Arc::new(gradient));
        self
    }

    /// Declares the output-strictness level `ε` the model is certified for.
    pub fn with_strictness(mut self, epsilon: T) -> Self {
        self.strictness = Some(epsilon);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn strictness(&self) -> Option<T> {
        self.strictness
    }

    pub fn has_storage(&self) -> bool {
        self.storage.is_some()
    }

    pub fn has_storage_gradient(&self) -> bool {
        self.storage_gradient.is_some()
    }

    pub fn has_output_jacobian(&self) -> bool {
        self.output_jacobian.is_some()
    }

    /// `f(x, u)` without dimension checks.
    #[inline]
    pub fn field(&self, x: &[T], u: &[T]) -> Vec<T> {
        (self.f)(x, u)
    }

    /// `h(x)` without dimension checks.
    #[inline]
    pub fn output(&self, x: &[T]) -> Vec<T> {
        (self.h)(x)
    }

    pub fn output_jacobian(&self, x: &[T]) -> Option<Vec<T>> {
        self.output_jacobian.as_ref().map(|j| j(x))
    }

    pub fn storage(&self, x: &[T]) -> Option<T> {
        self.storage.as_ref().map(|v| v(x))
    }

    pub fn storage_gradient(&self, x: &[T]) -> Option<Vec<T>> {
        self.storage_gradient.as_ref().map(|g| g(x))
    }

    fn check_dims(&self, x: &[T], u: &[T]) -> Result<()> {
        check_len("state", self.state_dim, x.len())?;
        check_len("input", self.input_dim, u.len())
    }

    /// Evaluates `f(x, u)` after validating dimensions.
    pub fn eval_field(&self, x: &[T], u: &[T]) -> Result<Vec<T>> {
        self.check_dims(x, u)?;
        Ok(self.field(x, u))
    }

    /// `ẏ = (∂h/∂x)(x) · f(x, u)`.
    ///
    /// Uses the analytic Jacobian when one is attached. Otherwise falls back
    /// to a central difference of `h` along `f`, which is only accurate to
    /// roughly `1e-6` relative.
    pub fn output_rate(&self, x: &[T], u: &[T]) -> Result<Vec<T>> {
        self.check_dims(x, u)?;
        Ok(self.output_rate_unchecked(x, u))
    }

    pub(crate) fn output_rate_unchecked(&self, x: &[T], u: &[T]) -> Vec<T> {
        let dx = self.field(x, u);
        match &self.output_jacobian {
            Some(jac) => mat_vec(&jac(x), self.output_dim, &dx),
            None => self.fd_output_rate(x, &dx),
        }
    }

    fn fd_output_rate(&self, x: &[T], dx: &[T]) -> Vec<T> {
        let speed = norm(dx);
        if speed == T::zero() {
            return vec![T::zero(); self.output_dim];
        }
        let delta = T::lit(1e-6) * (T::one() + norm(x));
        let scale = delta / speed;
        let fwd: Vec<T> = x.iter().zip(dx).map(|(&xi, &di)| xi + scale * di).collect();
        let bwd: Vec<T> = x.iter().zip(dx).map(|(&xi, &di)| xi - scale * di).collect();
        let (yf, yb) = (self.output(&fwd), self.output(&bwd));
        let two_delta = delta + delta;
        yf.iter()
            .zip(&yb)
            .map(|(&a, &b)| (a - b) / two_delta * speed)
            .collect()
    }

    /// Largest relative deviation between the attached Jacobian and a
    /// central-difference Jacobian of `h` at `x`. `None` when no Jacobian is
    /// attached.
    pub fn jacobian_fd_deviation(&self, x: &[T]) -> Option<T> {
        let jac = self.output_jacobian(x)?;
        let n = self.state_dim;
        let mut worst = T::zero();
        for col in 0..n {
            let delta = T::lit(1e-6) * (T::one() + x[col].abs());
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[col] = xp[col] + delta;
            xm[col] = xm[col] - delta;
            let (yp, ym) = (self.output(&xp), self.output(&xm));
            for row in 0..self.output_dim {
                let fd = (yp[row] - ym[row]) / (delta + delta);
                let exact = jac[row * n + col];
                let dev = (fd - exact).abs() / (T::one() + exact.abs());
                worst = worst.max(dev);
            }
        }
        Some(worst)
    }
}

fn mat_vec<T: Scalar>(a: &[T], rows: usize, v: &[T]) -> Vec<T> {
    let cols = v.len();
    (0..rows)
        .map(|r| {
            a[r * cols..(r + 1) * cols]
                .iter()
                .zip(v)
                .fold(T::zero(), |acc, (&aij, &vj)| acc + aij * vj)
        })
        .collect()
}

/// Fixed-step integration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig<T: Scalar> {
    pub step: T,
    pub t_end: T,
    pub record_every: usize,
}

impl<T: Scalar> Default for IntegratorConfig<T> {
    fn default() -> Self {
        Self {
            step: T::lit(1e-3),
            t_end: T::lit(30.0),
            record_every: 1,
        }
    }
}

impl<T: Scalar> IntegratorConfig<T> {
    pub fn new(step: T, t_end: T, record_every: usize) -> Result<Self> {
        let cfg = Self {
            step,
            t_end,
            record_every,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > T::zero()) || !self.step.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if !(self.t_end > T::zero()) || !self.t_end.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        if self.step > self.t_end {
            return Err(Error::InvalidConfig(format!(
                "step {} exceeds t_end {}",
                self.step, self.t_end
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidConfig(
                "record_every must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Number of integration steps on the grid `t_i = i · step`.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.step).round().to_usize().unwrap_or(0)
    }

    /// Number of recorded samples, `floor(n_steps / record_every) + 1`.
    pub fn n_records(&self) -> usize {
        self.n_steps() / self.record_every + 1
    }
}

/// Sampled solution of a simulated system.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Scalar> {
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
    pub inputs: Vec<Vec<T>>,
    pub outputs: Vec<Vec<T>>,
    pub output_rates: Vec<Vec<T>>,
    /// Time at which the state became non-finite or exceeded
    /// [`DIVERGENCE_BOUND`]; the arrays stop at the last good sample.
    pub divergence: Option<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn diverged(&self) -> bool {
        self.divergence.is_some()
    }

    pub fn final_state(&self) -> Option<&[T]> {
        self.states.last().map(Vec::as_slice)
    }

    /// Spacing of the recorded grid.
    pub fn spacing(&self) -> Option<T> {
        (self.times.len() >= 2).then(|| self.times[1] - self.times[0])
    }
}

fn is_divergent<T: Scalar>(x: &[T]) -> bool {
    x.iter().any(|v| !v.is_finite()) || max_abs(x) > T::lit(DIVERGENCE_BOUND)
}

/// One classical RK4 step for a time-dependent field `ẋ = g(t, x)`.
pub(crate) fn rk4_field_step<T: Scalar>(
    g: &dyn Fn(T, &[T]) -> Vec<T>,
    x: &[T],
    t: T,
    step: T,
) -> Vec<T> {
    let half = step * T::half();
    let axpy =
        |a: T, k: &[T]| -> Vec<T> { x.iter().zip(k).map(|(&xi, &ki)| xi + a * ki).collect() };
    let k1 = g(t, x);
    let k2 = g(t + half, &axpy(half, &k1));
    let k3 = g(t + half, &axpy(half, &k2));
    let k4 = g(t + step, &axpy(step, &k3));
    let sixth = step / T::lit(6.0);
    let two = T::lit(2.0);
    (0..x.len())
        .map(|i| x[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
        .collect()
}

/// One RK4 step of `model` from `(t, x)` with input signal `u_fn`.
pub fn rk4_step<T: Scalar>(
    model: &SystemModel<T>,
    x: &[T],
    u_fn: &dyn Fn(T) -> Vec<T>,
    t: T,
    step: T,
) -> Result<Vec<T>> {
    if !(step > T::zero()) {
        return Err(Error::InvalidConfig(format!(
            "step must be positive, got {step}"
        )));
    }
    model.check_dims(x, &u_fn(t))?;
    let next = rk4_field_step(&|s, xs: &[T]| model.field(xs, &u_fn(s)), x, t, step);
    if is_divergent(&next) {
        return Err(Error::Divergence {
            time: (t + step).to_f64_lossy(),
        });
    }
    Ok(next)
}

/// Integrates `ẋ = g(t, x)` on the uniform grid and hands every recorded
/// sample to `record`. Returns the divergence time, if any.
pub(crate) fn integrate<T: Scalar>(
    g: &dyn Fn(T, &[T]) -> Vec<T>,
    x0: &[T],
    cfg: &IntegratorConfig<T>,
    mut record: impl FnMut(T, &[T]),
) -> Option<T> {
    let n_steps = cfg.n_steps();
    let mut x = x0.to_vec();
    record(T::zero(), &x);
    for i in 0..n_steps {
        let t = T::lit(i as f64) * cfg.step;
        let next = rk4_field_step(g, &x, t, cfg.step);
        let t_next = T::lit((i + 1) as f64) * cfg.step;
        if is_divergent(&next) {
            return Some(t_next);
        }
        x = next;
        if (i + 1) % cfg.record_every == 0 {
            record(t_next, &x);
        }
    }
    None
}

/// Simulates `model` from `x0` under the input signal `u_fn`.
///
/// Divergence is not an error: the returned trajectory is truncated and
/// carries the divergence time.
pub fn simulate<T: Scalar>(
    model: &SystemModel<T>,
    x0: &[T],
    u_fn: &dyn Fn(T) -> Vec<T>,
    cfg: &IntegratorConfig<T>,
) -> Result<Trajectory<T>> {
    cfg.validate()?;
    model.check_dims(x0, &u_fn(T::zero()))?;
    let capacity = cfg.n_records();
    let mut traj = Trajectory {
        times: Vec::with_capacity(capacity),
        states: Vec::with_capacity(capacity),
        inputs: Vec::with_capacity(capacity),
        outputs: Vec::with_capacity(capacity),
        output_rates: Vec::with_capacity(capacity),
        divergence: None,
    };
    let field = |t: T, x: &[T]| model.field(x, &u_fn(t));
    traj.divergence = integrate(&field, x0, cfg, |t, x| {
        let u = u_fn(t);
        traj.times.push(t);
        traj.outputs.push(model.output(x));
        traj.output_rates.push(model.output_rate_unchecked(x, &u));
        traj.states.push(x.to_vec());
        traj.inputs.push(u);
    });
    Ok(traj)
}

/// Zero input signal of dimension `dim`.
pub fn zero_input<T: Scalar>(dim: usize) -> impl Fn(T) -> Vec<T> {
    move |_| vec![T::zero(); dim]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn decay() -> SystemModel<f64> {
        SystemModel::<f64>::new("decay", 1, 1, 1, |x, _u| vec![-x[0]], |x| x.to_vec())
            .with_output_jacobian(|_| vec![1.0])
    }

    fn integrator() -> SystemModel<f64> {
        SystemModel::new("integrator", 1, 1, 1, |_x, u| vec![u[0]], |x| x.to_vec())
    }

    #[test]
    fn rk4_decay_step() {
        let x = rk4_step(&decay(), &[1.0], &zero_input(1), 0.0, 0.1).unwrap();
        // 1 - h + h²/2 - h³/6 + h⁴/24 at h = 0.1
        assert_abs_diff_eq!(x[0], 0.904_837_5, epsilon = 1e-7);
        assert_abs_diff_eq!(x[0], (-0.1f64).exp(), epsilon = 1e-7);
    }

    #[test]
    fn rk4_trivial_fields() {
        let still = SystemModel::new("still", 2, 1, 1, |_x, _u| vec![0.0, 0.0], |x| vec![x[0]]);
        let x = rk4_step(&still, &[0.3, -0.2], &zero_input(1), 0.0, 0.5).unwrap();
        assert_eq!(x, vec![0.3, -0.2]);
        let x = rk4_step(&integrator(), &[0.0], &|_| vec![1.0], 0.0, 0.5).unwrap();
        assert_eq!(x, vec![0.5]);
    }

    #[test]
    fn rk4_reports_divergence() {
        let blow = SystemModel::new("blow", 1, 1, 1, |x, _u| vec![x[0] * 1e12], |x| x.to_vec());
        let err = rk4_step(&blow, &[1.0], &zero_input(1), 2.0, 1.0).unwrap_err();
        assert_eq!(err, Error::Divergence { time: 3.0 });
        assert!(rk4_step(&blow, &[1.0], &zero_input(1), 0.0, 0.0).is_err());
    }

    #[test]
    fn simulate_decay_matches_exponential() {
        let cfg = IntegratorConfig::new(1e-3, 1.0, 1).unwrap();
        let traj = simulate(&decay(), &[1.0], &zero_input(1), &cfg).unwrap();
        assert_eq!(traj.len(), 1001);
        assert_abs_diff_eq!(
            traj.final_state().unwrap()[0],
            (-1.0f64).exp(),
            epsilon = 1e-9
        );
        assert!(!traj.diverged());
    }

    #[test]
    fn single_step_horizon_records_two_samples() {
        let cfg = IntegratorConfig::new(0.01, 0.01, 1).unwrap();
        let traj = simulate(&decay(), &[1.0], &zero_input(1), &cfg).unwrap();
        assert_eq!(traj.len(), 2);
        assert_eq!(traj.times, vec![0.0, 0.01]);
    }

    #[test]
    fn decimation_row_count() {
        let cfg = IntegratorConfig::new(1e-3, 1.0, 7).unwrap();
        let traj = simulate(&decay(), &[1.0], &zero_input(1), &cfg).unwrap();
        assert_eq!(traj.len(), 1000 / 7 + 1);
        assert_eq!(traj.len(), cfg.n_records());
    }

    #[test]
    fn simulate_flags_divergence_with_partial_trajectory() {
        let blow =
            SystemModel::<f64>::new("blow", 1, 1, 1, |x, _u| vec![x[0] * x[0]], |x| x.to_vec());
        let cfg = IntegratorConfig::new(1e-2, 5.0, 1).unwrap();
        let traj = simulate(&blow, &[1.0], &zero_input(1), &cfg).unwrap();
        let t_div = traj.divergence.expect("x' = x² blows up at t = 1");
        assert!(t_div > 0.9 && t_div < 1.1, "{t_div}");
        assert!(traj.len() < cfg.n_records());
        assert!(traj.states.iter().all(|x| x[0].is_finite()));
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::new(0.0, 1.0, 1).is_err());
        assert!(IntegratorConfig::new(2.0, 1.0, 1).is_err());
        assert!(IntegratorConfig::new(0.1, 1.0, 0).is_err());
        assert!(IntegratorConfig::new(-0.1, 1.0, 1).is_err());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = decay();
        assert!(matches!(
            m.output_rate(&[1.0, 2.0], &[0.0]),
            Err(Error::LengthMismatch { .. })
        ));
        let cfg = IntegratorConfig::new(0.1, 1.0, 1).unwrap();
        assert!(simulate(&m, &[1.0, 2.0], &zero_input(1), &cfg).is_err());
        assert!(simulate(&m, &[1.0], &zero_input(2), &cfg).is_err());
    }

    #[test]
    fn finite_difference_output_rate_fallback() {
        let no_jac = SystemModel::<f64>::new(
            "cubic-out",
            2,
            1,
            1,
            |x, u| vec![x[1], -x[0] + u[0]],
            |x| vec![x[0] + x[0] * x[0] * x[0]],
        );
        let (x, u) = ([0.3, -0.7], [0.2]);
        let exact = (1.0 + 3.0 * 0.09) * -0.7;
        let fd = no_jac.output_rate(&x, &u).unwrap()[0];
        assert!((fd - exact).abs() <= 1e-5 * exact.abs(), "{fd} vs {exact}");
        assert_eq!(no_jac.output_rate(&[0.0, 0.0], &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn simulation_runs_in_single_precision() {
        let m: SystemModel<f32> =
            SystemModel::<f32>::new("decay32", 1, 1, 1, |x, _u| vec![-x[0]], |x| x.to_vec());
        let cfg = IntegratorConfig::new(1e-2f32, 1.0, 1).unwrap();
        let traj = simulate(&m, &[1.0f32], &zero_input(1), &cfg).unwrap();
        assert!((traj.final_state().unwrap()[0] - (-1.0f32).exp()).abs() < 1e-5);
    }
}
