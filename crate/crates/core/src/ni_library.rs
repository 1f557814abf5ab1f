//! Concrete negative-imaginary plants and output strictly negative-imaginary
//! (OSNI) controllers, each with its storage function.
//!
//! * [`make_pendulum`]: spring-loaded pendulum, NI with the mechanical
//!   energy as storage.
//! * [`make_first_order_osni`]: `ẋ = ρ(x) + αu, y = x`, OSNI for any
//!   `ε ∈ (0, 1/α]` when `V(x) = -(1/α)∫₀ˣ ρ` is positive definite.
//! * [`make_second_order_osni`]: `ẋ₁ = x₂, ẋ₂ = η(x₁) - βx₂ + αu, y = x₁`,
//!   OSNI for any `ε ∈ (0, β/α]` when
//!   `V = -(1/α)∫₀^{x₁} η + x₂²/(2α)` is positive definite.

use crate::dynamics::SystemModel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Standard gravity used by the pendulum models.
pub const GRAVITY: f64 = 9.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumParams<T: Scalar> {
    pub mass: T,
    pub length: T,
    pub spring: T,
    pub gravity: T,
}

impl<T: Scalar> PendulumParams<T> {
    pub fn new(mass: T, length: T, spring: T) -> Result<Self> {
        Self::with_gravity(mass, length, spring, T::lit(GRAVITY))
    }

    pub fn with_gravity(mass: T, length: T, spring: T, gravity: T) -> Result<Self> {
        let p = Self {
            mass,
            length,
            spring,
            gravity,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mass", self.mass),
            ("length", self.length),
            ("spring", self.spring),
            ("gravity", self.gravity),
        ] {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "pendulum {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Rotational inertia `m l²`.
    pub fn inertia(&self) -> T {
        self.mass * self.length * self.length
    }

    pub fn field(&self, x: &[T], u: T) -> [T; 2] {
        let mgl = self.mass * self.gravity * self.length;
        [
            x[1],
            (-self.spring * x[0] - mgl * x[0].sin() + u) / self.inertia(),
        ]
    }

    /// `½κx₁² + ½ml²x₂² + mgl(1 - cos x₁)`.
    pub fn storage(&self, x: &[T]) -> T {
        let half = T::half();
        let mgl = self.mass * self.gravity * self.length;
        half * self.spring * x[0] * x[0]
            + half * self.inertia() * x[1] * x[1]
            + mgl * (T::one() - x[0].cos())
    }

    pub fn storage_gradient(&self, x: &[T]) -> [T; 2] {
        let mgl = self.mass * self.gravity * self.length;
        [self.spring * x[0] + mgl * x[0].sin(), self.inertia() * x[1]]
    }
}

/// Pendulum with torsional spring: state `(angle, angular rate)`, input a
/// torque, output the angle.
pub fn make_pendulum<T: Scalar>(p: PendulumParams<T>) -> Result<SystemModel<T>> {
    p.validate()?;
    Ok(SystemModel::new(
        "pendulum",
        2,
        1,
        1,
        move |x, u| p.field(x, u[0]).to_vec(),
        |x| vec![x[0]],
    )
    .with_output_jacobian(|_| vec![T::one(), T::zero()])
    .with_storage(move |x| p.storage(x))
    .with_storage_gradient(move |x| p.storage_gradient(x).to_vec()))
}

/// Scalar nonlinearity `s(x) = a·x + b·x³ + c·sin x`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NonlinearitySpec<T: Scalar> {
    pub linear: T,
    pub cubic: T,
    pub sine: T,
}

impl<T: Scalar> NonlinearitySpec<T> {
    pub fn new(linear: T, cubic: T, sine: T) -> Self {
        Self {
            linear,
            cubic,
            sine,
        }
    }

    /// `-β x - φ x³`, the damping nonlinearity of the cubic controller.
    pub fn cubic_damping(beta: T, phi: T) -> Self {
        Self::new(-beta, -phi, T::zero())
    }

    pub fn eval(&self, x: T) -> T {
        self.linear * x + self.cubic * x * x * x + self.sine * x.sin()
    }

    /// `∫₀ˣ s = a x²/2 + b x⁴/4 + c (1 - cos x)`.
    pub fn antiderivative(&self, x: T) -> T {
        let x2 = x * x;
        self.linear * x2 * T::half()
            + self.cubic * x2 * x2 * T::lit(0.25)
            + self.sine * (T::one() - x.cos())
    }

    fn validate(&self, what: &str) -> Result<()> {
        if [self.linear, self.cubic, self.sine]
            .iter()
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidParameter(format!(
                "{what} coefficients must be finite"
            )));
        }
        Ok(())
    }

    /// Sufficient condition for `-∫₀ˣ s` to be positive definite: the
    /// polynomial part must be dissipative and the sine term dominated by
    /// the linear term, using `1 - cos x < x²/2` for `x ≠ 0`.
    fn check_dissipative(&self, what: &str) -> Result<()> {
        self.validate(what)?;
        let (a, b, c) = (self.linear, self.cubic, self.sine);
        let zero = T::zero();
        let polynomial_ok = (a < zero && b <= zero) || (a <= zero && b < zero);
        if !polynomial_ok {
            return Err(Error::NotPositiveDefinite(format!(
                "{what} needs linear < 0 with cubic <= 0, or linear <= 0 with cubic < 0 \
                 (got linear = {a}, cubic = {b})"
            )));
        }
        if c.abs() > a.abs() {
            return Err(Error::NotPositiveDefinite(format!(
                "{what} sine coefficient {c} must not exceed |linear| = {}",
                a.abs()
            )));
        }
        Ok(())
    }
}

fn check_strictness<T: Scalar>(epsilon: T, max: T, range: &str) -> Result<()> {
    if !(epsilon > T::zero() && epsilon <= max) {
        return Err(Error::InvalidParameter(format!(
            "strictness level {epsilon} outside the admissible range (0, {range}] = (0, {max}]"
        )));
    }
    Ok(())
}

fn check_positive<T: Scalar>(name: &str, v: T) -> Result<()> {
    if !(v > T::zero() && v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )));
    }
    Ok(())
}

/// Parameters of `ẋ = ρ(x) + αu, y = x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderOsniParams<T: Scalar> {
    pub rho: NonlinearitySpec<T>,
    pub alpha: T,
    pub epsilon: T,
}

impl<T: Scalar> FirstOrderOsniParams<T> {
    /// `epsilon = None` selects the largest admissible level `1/α`.
    pub fn new(rho: NonlinearitySpec<T>, alpha: T, epsilon: Option<T>) -> Result<Self> {
        check_positive("alpha", alpha)?;
        let p = Self {
            rho,
            alpha,
            epsilon: epsilon.unwrap_or_else(|| alpha.recip()),
        };
        p.validate()?;
        Ok(p)
    }

    /// `ẋ = -βx - φx³ + αu` with storage `β/(2α) x² + φ/(4α) x⁴`.
    pub fn cubic(beta: T, phi: T, alpha: T, epsilon: Option<T>) -> Result<Self> {
        Self::new(NonlinearitySpec::cubic_damping(beta, phi), alpha, epsilon)
    }

    pub fn max_epsilon(&self) -> T {
        self.alpha.recip()
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("alpha", self.alpha)?;
        check_strictness(self.epsilon, self.max_epsilon(), "1/alpha")?;
        self.rho.check_dissipative("rho")
    }

    pub fn storage(&self, x: T) -> T {
        -self.rho.antiderivative(x) / self.alpha
    }
}

pub fn make_first_order_osni<T: Scalar>(p: FirstOrderOsniParams<T>) -> Result<SystemModel<T>> {
    p.validate()?;
    Ok(SystemModel::new(
        "first_order_osni",
        1,
        1,
        1,
        move |x, u| vec![p.rho.eval(x[0]) + p.alpha * u[0]],
        |x| vec![x[0]],
    )
    .with_output_jacobian(|_| vec![T::one()])
    .with_storage(move |x| p.storage(x[0]))
    .with_storage_gradient(move |x| vec![-p.rho.eval(x[0]) / p.alpha])
    .with_strictness(p.epsilon))
}

/// Parameters of `ẋ₁ = x₂, ẋ₂ = η(x₁) - βx₂ + αu, y = x₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderOsniParams<T: Scalar> {
    pub eta: NonlinearitySpec<T>,
    pub alpha: T,
    pub beta: T,
    pub epsilon: T,
}

impl<T: Scalar> SecondOrderOsniParams<T> {
    /// `epsilon = None` selects the largest admissible level `β/α`.
    pub fn new(eta: NonlinearitySpec<T>, alpha: T, beta: T, epsilon: Option<T>) -> Result<Self> {
        check_positive("alpha", alpha)?;
        check_positive("beta", beta)?;
        let p = Self {
            eta,
            alpha,
            beta,
            epsilon: epsilon.unwrap_or(beta / alpha),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn max_epsilon(&self) -> T {
        self.beta / self.alpha
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("alpha", self.alpha)?;
        check_positive("beta", self.beta)?;
        check_strictness(self.epsilon, self.max_epsilon(), "beta/alpha")?;
        self.eta.check_dissipative("eta")
    }

    pub fn storage(&self, x: &[T]) -> T {
        (-self.eta.antiderivative(x[0]) + T::half() * x[1] * x[1]) / self.alpha
    }
}

pub fn make_second_order_osni<T: Scalar>(p: SecondOrderOsniParams<T>) -> Result<SystemModel<T>> {
    p.validate()?;
    Ok(SystemModel::new(
        "second_order_osni",
        2,
        1,
        1,
        move |x, u| vec![x[1], p.eta.eval(x[0]) - p.beta * x[1] + p.alpha * u[0]],
        |x| vec![x[0]],
    )
    .with_output_jacobian(|_| vec![T::one(), T::zero()])
    .with_storage(move |x| p.storage(x))
    .with_storage_gradient(move |x| vec![-p.eta.eval(x[0]) / p.alpha, x[1] / p.alpha])
    .with_strictness(p.epsilon))
}

/// `V̇ - (u ẏ - ε ẏ²)` for the first-order template, in closed form
/// `(ε - 1/α)(ρ(x) + αu)²`.
pub fn osni_residual_first_order<T: Scalar>(p: &FirstOrderOsniParams<T>, x: T, u: T) -> T {
    let rate = p.rho.eval(x) + p.alpha * u;
    (p.epsilon - p.alpha.recip()) * rate * rate
}

/// `V̇ - (u ẏ - ε ẏ²)` for the second-order template, in closed form
/// `(ε - β/α) x₂²`.
pub fn osni_residual_second_order<T: Scalar>(
    p: &SecondOrderOsniParams<T>,
    _x1: T,
    x2: T,
    _u: T,
) -> T {
    (p.epsilon - p.beta / p.alpha) * x2 * x2
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn pendulum1() -> SystemModel<f64> {
        make_pendulum(PendulumParams::new(1.0, 0.5, 3.0).unwrap()).unwrap()
    }

    #[test]
    fn pendulum_equilibrium_and_field() {
        let m = pendulum1();
        assert_eq!(m.field(&[0.0, 0.0], &[0.0]), vec![0.0, 0.0]);
        assert_eq!(m.storage(&[0.0, 0.0]), Some(0.0));
        let f = m.field(&[FRAC_PI_2, 0.0], &[0.0]);
        assert_abs_diff_eq!(f[1], 4.0 * (-3.0 * FRAC_PI_2 - 4.9), epsilon = 1e-12);
        assert_abs_diff_eq!(f[1], -38.4496, epsilon = 5e-5);
        assert_abs_diff_eq!(m.storage(&[0.0, 1.0]).unwrap(), 0.125, epsilon = 1e-15);
    }

    #[test]
    fn pendulum_output_rate_is_angular_velocity() {
        let m = pendulum1();
        assert_eq!(m.output_rate(&[0.4, -1.3], &[2.0]).unwrap(), vec![-1.3]);
        assert!(m.jacobian_fd_deviation(&[0.4, -1.3]).unwrap() < 1e-5);
    }

    #[test]
    fn pendulum_rejects_nonpositive_params() {
        assert!(PendulumParams::new(0.0, 0.5, 3.0).is_err());
        assert!(PendulumParams::new(1.0, -0.5, 3.0).is_err());
        assert!(PendulumParams::with_gravity(1.0, 0.5, 3.0, f64::NAN).is_err());
    }

    #[test]
    fn cubic_controller_storage_values() {
        let c1 = FirstOrderOsniParams::cubic(10.0, 15.0, 20.0, None).unwrap();
        assert_abs_diff_eq!(c1.storage(1.0), 0.4375, epsilon = 1e-15);
        assert_abs_diff_eq!(
            c1.storage(0.7),
            0.25 * 0.49 + 0.1875 * 0.2401,
            epsilon = 1e-15
        );
        let c2 = FirstOrderOsniParams::cubic(20.0, 5.0, 30.0, None).unwrap();
        assert_abs_diff_eq!(c2.storage(1.0), 0.375, epsilon = 1e-15);
        assert_eq!(c1.epsilon, 1.0 / 20.0);

        let model = make_first_order_osni(c1).unwrap();
        let (x, u) = (0.3, -0.2);
        assert_abs_diff_eq!(
            model.field(&[x], &[u])[0],
            -10.0 * x - 15.0 * x * x * x + 20.0 * u,
            epsilon = 1e-14
        );
    }

    #[test]
    fn first_order_output_rate() {
        let p = FirstOrderOsniParams::cubic(10.0, 15.0, 20.0, None).unwrap();
        let m = make_first_order_osni(p).unwrap();
        let rate = m.output_rate(&[0.1], &[0.05]).unwrap()[0];
        assert_abs_diff_eq!(rate, -0.015, epsilon = 1e-14);
    }

    #[test]
    fn identity_nonlinearity_storage() {
        let p =
            FirstOrderOsniParams::new(NonlinearitySpec::new(-1.0, 0.0, 0.0), 1.0, None).unwrap();
        assert_eq!(p.storage(0.0), 0.0);
        assert_abs_diff_eq!(p.storage(0.8), 0.32, epsilon = 1e-15);
    }

    #[test]
    fn first_order_rejects_inadmissible() {
        let rho = NonlinearitySpec::cubic_damping(10.0, 15.0);
        assert!(matches!(
            FirstOrderOsniParams::new(rho, 20.0, Some(0.1)),
            Err(Error::InvalidParameter(_))
        ));
        assert!(FirstOrderOsniParams::new(rho, 20.0, Some(0.0)).is_err());
        assert!(FirstOrderOsniParams::new(rho, 0.0, None).is_err());
        // growing nonlinearity gives an indefinite storage
        assert!(matches!(
            FirstOrderOsniParams::new(NonlinearitySpec::new(1.0, 0.0, 0.0), 1.0, None),
            Err(Error::NotPositiveDefinite(_))
        ));
        assert!(
            FirstOrderOsniParams::new(NonlinearitySpec::new(-1.0, 1.0, 0.0), 1.0, None).is_err()
        );
        assert!(
            FirstOrderOsniParams::new(NonlinearitySpec::new(0.0, 0.0, 0.0), 1.0, None).is_err()
        );
        assert!(
            FirstOrderOsniParams::new(NonlinearitySpec::new(-1.0, 0.0, 2.0), 1.0, None).is_err()
        );
        assert!(
            FirstOrderOsniParams::new(NonlinearitySpec::new(0.0, -1.0, 0.5), 1.0, None).is_err()
        );
        assert!(
            FirstOrderOsniParams::new(NonlinearitySpec::new(-1.0, 0.0, 1.0), 1.0, None).is_ok()
        );
        assert!(
            FirstOrderOsniParams::new(NonlinearitySpec::new(0.0, -1.0, 0.0), 1.0, None).is_ok()
        );
    }

    #[test]
    fn second_order_examples() {
        let unit =
            SecondOrderOsniParams::new(NonlinearitySpec::new(-1.0, 0.0, 0.0), 1.0, 1.0, None)
                .unwrap();
        assert_eq!(unit.storage(&[0.0, 0.0]), 0.0);
        assert_abs_diff_eq!(unit.storage(&[1.0, 2.0]), 0.5 + 2.0, epsilon = 1e-15);
        let m = make_second_order_osni(unit).unwrap();
        assert_eq!(m.field(&[1.0, 1.0], &[0.0]), vec![1.0, -2.0]);

        let p = SecondOrderOsniParams::new(NonlinearitySpec::new(-2.0, -1.0, 0.0), 2.0, 4.0, None)
            .unwrap();
        assert_eq!(p.max_epsilon(), 2.0);
        assert_eq!(p.epsilon, 2.0);
        assert!(SecondOrderOsniParams::new(p.eta, 2.0, 4.0, Some(2.0 + 1e-12)).is_err());
        assert!(SecondOrderOsniParams::new(p.eta, 2.0, 4.0, Some(1e-9)).is_ok());
        assert!(SecondOrderOsniParams::new(p.eta, 2.0, 0.0, None).is_err());
    }

    #[test]
    fn first_order_residual_values() {
        let rho = NonlinearitySpec::new(-1.0, 0.0, 0.0);
        let boundary = FirstOrderOsniParams::new(rho, 1.0, None).unwrap();
        assert_eq!(osni_residual_first_order(&boundary, 0.7, -3.0), 0.0);
        let half = FirstOrderOsniParams::new(rho, 1.0, Some(0.5)).unwrap();
        assert_eq!(osni_residual_first_order(&half, 0.0, 1.0), -0.5);
        // ρ(x) + αu = -x + u vanishes at u = x
        assert_eq!(osni_residual_first_order(&half, 0.4, 0.4), 0.0);
    }

    #[test]
    fn second_order_residual_values() {
        let eta = NonlinearitySpec::new(-1.0, 0.0, 0.0);
        let boundary = SecondOrderOsniParams::new(eta, 1.0, 2.0, None).unwrap();
        assert_eq!(osni_residual_second_order(&boundary, 0.3, 5.0, 1.0), 0.0);
        let p = SecondOrderOsniParams::new(eta, 1.0, 2.0, Some(1.0)).unwrap();
        assert_eq!(osni_residual_second_order(&p, 0.0, 3.0, 0.0), -9.0);
        assert_eq!(osni_residual_second_order(&p, 2.0, 0.0, -4.0), 0.0);
    }

    /// `∇V · f` minus the OSNI supply rate, evaluated from the model itself.
    fn model_residual(m: &SystemModel<f64>, eps: f64, x: &[f64], u: f64) -> f64 {
        let grad = m.storage_gradient(x).unwrap();
        let f = m.field(x, &[u]);
        let vdot: f64 = grad.iter().zip(&f).map(|(g, f)| g * f).sum();
        let ydot = m.output_rate(x, &[u]).unwrap()[0];
        vdot - (u * ydot - eps * ydot * ydot)
    }

    #[test]
    fn closed_form_residuals_match_gradient_evaluation() {
        let p1 = FirstOrderOsniParams::new(NonlinearitySpec::new(-2.0, -0.5, 1.5), 3.0, Some(0.2))
            .unwrap();
        let m1 = make_first_order_osni(p1).unwrap();
        let p2 = SecondOrderOsniParams::new(
            NonlinearitySpec::new(-2.0, -1.0, -0.5),
            2.0,
            4.0,
            Some(0.7),
        )
        .unwrap();
        let m2 = make_second_order_osni(p2).unwrap();
        for (x1, x2, u) in [(0.3, -1.2, 0.8), (-1.7, 0.4, -2.0), (2.0, 2.0, 0.0)] {
            assert_abs_diff_eq!(
                model_residual(&m1, p1.epsilon, &[x1], u),
                osni_residual_first_order(&p1, x1, u),
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                model_residual(&m2, p2.epsilon, &[x1, x2], u),
                osni_residual_second_order(&p2, x1, x2, u),
                epsilon = 1e-12
            );
        }
    }
}
