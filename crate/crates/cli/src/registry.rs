//! Named plant models available to `type = "custom"` scenario entries.

use std::collections::BTreeMap;

use ni_consensus::SystemModel64;

/// Names accepted by [`build`].
pub const MODELS: &[(&str, &[&str])] = &[
    ("mass_spring_damper", &["damping", "mass", "stiffness"]),
    ("duffing", &["hardening", "stiffness"]),
];

fn param(name: &str, params: &BTreeMap<String, f64>, key: &str) -> Result<f64, String> {
    params
        .get(key)
        .copied()
        .ok_or_else(|| format!("model `{name}` needs parameter `{key}`"))
}

/// Builds a registered model from its parameter table. Every parameter
/// must be present and no others may appear.
pub fn build(name: &str, params: &BTreeMap<String, f64>) -> Result<SystemModel64, String> {
    let expected = MODELS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, p)| *p)
        .ok_or_else(|| {
            let known: Vec<_> = MODELS.iter().map(|(n, _)| *n).collect();
            format!(
                "unknown custom model `{name}` (known: {})",
                known.join(", ")
            )
        })?;
    if let Some(extra) = params.keys().find(|k| !expected.contains(&k.as_str())) {
        return Err(format!("model `{name}` has no parameter `{extra}`"));
    }
    for (key, v) in params {
        if !v.is_finite() {
            return Err(format!("parameter `{key}` must be finite, got {v}"));
        }
    }
    match name {
        "mass_spring_damper" => {
            let m = param(name, params, "mass")?;
            let c = param(name, params, "damping")?;
            let k = param(name, params, "stiffness")?;
            if !(m > 0.0 && k > 0.0 && c >= 0.0) {
                return Err(format!(
                    "need mass > 0, stiffness > 0, damping >= 0; got mass {m}, stiffness {k}, damping {c}"
                ));
            }
            Ok(mass_spring_damper(m, c, k))
        }
        "duffing" => {
            let k = param(name, params, "stiffness")?;
            let h = param(name, params, "hardening")?;
            if !(k > 0.0 && h >= 0.0) {
                return Err(format!(
                    "need stiffness > 0, hardening >= 0; got stiffness {k}, hardening {h}"
                ));
            }
            Ok(duffing(k, h))
        }
        _ => unreachable!("checked against MODELS"),
    }
}

/// `m ẍ = -c ẋ - k x + u`, `y = x`, `V = ½kx² + ½mẋ²`.
fn mass_spring_damper(m: f64, c: f64, k: f64) -> SystemModel64 {
    SystemModel64::new(
        "mass_spring_damper",
        2,
        1,
        1,
        move |x: &[f64], u: &[f64]| vec![x[1], (-c * x[1] - k * x[0] + u[0]) / m],
        |x: &[f64]| vec![x[0]],
    )
    .with_output_jacobian(|_| vec![1.0, 0.0])
    .with_storage(move |x| 0.5 * k * x[0] * x[0] + 0.5 * m * x[1] * x[1])
    .with_storage_gradient(move |x| vec![k * x[0], m * x[1]])
}

/// Lossless hardening spring with unit mass.
fn duffing(k: f64, h: f64) -> SystemModel64 {
    SystemModel64::new(
        "duffing",
        2,
        1,
        1,
        move |x: &[f64], u: &[f64]| vec![x[1], -k * x[0] - h * x[0].powi(3) + u[0]],
        |x: &[f64]| vec![x[0]],
    )
    .with_output_jacobian(|_| vec![1.0, 0.0])
    .with_storage(move |x| 0.5 * x[1] * x[1] + 0.5 * k * x[0] * x[0] + 0.25 * h * x[0].powi(4))
    .with_storage_gradient(move |x| vec![k * x[0] + h * x[0].powi(3), x[1]])
}
