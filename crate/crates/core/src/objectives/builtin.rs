use serde::{Deserialize, Serialize};

use super::{EvalError, Objective};
use crate::space::{ParamPoint, SearchSpace};

/// Unique maximizer of [`gan_proxy`] on the generator/discriminator lattice.
pub const GAN_PROXY_PEAK: [i64; 3] = [3, 140, 3];

/// Amplitude of the ripple term in [`gan_proxy`].
pub const GAN_PROXY_RIPPLE: f64 = 1e-3;

const GAN_PROXY_BASE: f64 = 30.0;
const GAN_PROXY_CURVATURE: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinId {
    Sphere,
    RastriginDiscrete,
    GanProxy,
}

impl BuiltinId {
    pub fn as_str(&self) -> &'static str {
        match self {
            BuiltinId::Sphere => "sphere",
            BuiltinId::RastriginDiscrete => "rastrigin_discrete",
            BuiltinId::GanProxy => "gan_proxy",
        }
    }
}

impl std::str::FromStr for BuiltinId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sphere" => Ok(Self::Sphere),
            "rastrigin_discrete" => Ok(Self::RastriginDiscrete),
            "gan_proxy" => Ok(Self::GanProxy),
            other => Err(format!(
                "unknown builtin `{other}` (expected sphere, rastrigin_discrete or gan_proxy)"
            )),
        }
    }
}

/// `-sum((u_i - 0.5)^2)` over unit-cube coordinates.
pub fn sphere(unit: &[f64]) -> f64 {
    -unit.iter().map(|u| (u - 0.5).powi(2)).sum::<f64>()
}

/// Negated Rastrigin on `[-5.12, 5.12]^d`, centered in the unit cube. Maximum 0.
pub fn rastrigin_discrete(unit: &[f64]) -> f64 {
    let d = unit.len() as f64;
    let sum: f64 = unit
        .iter()
        .map(|u| {
            let z = 5.12 * (2.0 * u - 1.0);
            z * z - 10.0 * (2.0 * std::f64::consts::PI * z).cos()
        })
        .sum();
    -(10.0 * d + sum)
}

/// Desk-scale stand-in for a trained model's validation score over `(m, n, k)`.
///
/// A concave quadratic bowl in unit-cube coordinates peaked at
/// [`GAN_PROXY_PEAK`], plus a bounded ripple. The smallest step away from the
/// peak costs `12 / 48^2 ≈ 5.2e-3`, more than twice the ripple amplitude, so
/// the lattice argmax is unique.
pub fn gan_proxy(point: &ParamPoint) -> Result<f64, EvalError> {
    SearchSpace::gan_lattice().require_valid(point)?;
    let [m, n, k] = [point.0[0] as f64, point.0[1] as f64, point.0[2] as f64];
    let [pm, pn, pk] = GAN_PROXY_PEAK.map(|v| v as f64);
    let bowl = ((m - pm) / 9.0).powi(2) + ((n - pn) / 192.0).powi(2) + ((k - pk) / 8.0).powi(2);
    let ripple = GAN_PROXY_RIPPLE * (2.1 * m + 0.37 * n + 1.3 * k).sin();
    Ok(GAN_PROXY_BASE - GAN_PROXY_CURVATURE * bowl + ripple)
}

/// A builtin landscape bound to a search space.
pub struct Builtin {
    id: BuiltinId,
    space: SearchSpace,
}

impl Builtin {
    pub fn new(id: BuiltinId, space: &SearchSpace) -> Result<Self, String> {
        if id == BuiltinId::GanProxy && space.dim() != 3 {
            return Err(format!(
                "gan_proxy needs the 3-parameter (m, n, k) space, got {} parameters",
                space.dim()
            ));
        }
        Ok(Self {
            id,
            space: space.clone(),
        })
    }
}

impl Objective for Builtin {
    fn id(&self) -> &str {
        self.id.as_str()
    }

    fn evaluate(&mut self, point: &ParamPoint) -> Result<f64, EvalError> {
        match self.id {
            BuiltinId::GanProxy => gan_proxy(point),
            BuiltinId::Sphere => Ok(sphere(&self.space.normalize(point)?)),
            BuiltinId::RastriginDiscrete => Ok(rastrigin_discrete(&self.space.normalize(point)?)),
        }
    }
}
