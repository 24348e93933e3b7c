//! Bounded integer hyperparameter lattices.
//!
//! A [`SearchSpace`] is an ordered list of integer dimensions, each with
//! inclusive bounds and an optional divisibility constraint. Points on the
//! lattice are [`ParamPoint`]s. Lattice order is lexicographic: the first
//! parameter is the most significant digit.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default refusal threshold for [`SearchSpace::enumerate`].
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpaceError {
    #[error("point has {got} coordinates, space has {expected} parameters")]
    ArityMismatch { expected: usize, got: usize },
    #[error("parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("search space has no parameters")]
    Empty,
    #[error("point {point} is not on the lattice: {reason}")]
    InvalidPoint { point: ParamPoint, reason: String },
    #[error("lattice has {size} points, refusing to enumerate more than {cap}")]
    LatticeTooLarge { size: u128, cap: u64 },
}

fn default_multiple_of() -> i64 {
    1
}

/// One integer dimension: `lower..=upper`, restricted to multiples of `multiple_of`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamDef {
    pub name: String,
    pub lower: i64,
    pub upper: i64,
    #[serde(default = "default_multiple_of")]
    pub multiple_of: i64,
}

impl ParamDef {
    pub fn new(
        name: impl Into<String>,
        lower: i64,
        upper: i64,
        multiple_of: i64,
    ) -> Result<Self, SpaceError> {
        let def = Self {
            name: name.into(),
            lower,
            upper,
            multiple_of,
        };
        def.check()?;
        Ok(def)
    }

    /// Unconstrained dimension.
    pub fn range(name: impl Into<String>, lower: i64, upper: i64) -> Result<Self, SpaceError> {
        Self::new(name, lower, upper, 1)
    }

    fn check(&self) -> Result<(), SpaceError> {
        let fail = |reason: String| {
            Err(SpaceError::InvalidParam {
                name: self.name.clone(),
                reason,
            })
        };
        if self.name.is_empty() {
            return fail("name must not be empty".into());
        }
        if self.multiple_of < 1 {
            return fail(format!(
                "multiple_of must be >= 1, got {}",
                self.multiple_of
            ));
        }
        if self.lower > self.upper {
            return fail(format!("lower {} > upper {}", self.lower, self.upper));
        }
        if self.first_valid() > self.last_valid() {
            return fail(format!(
                "no multiple of {} in [{}, {}]",
                self.multiple_of, self.lower, self.upper
            ));
        }
        Ok(())
    }

    /// Smallest admissible value.
    pub fn first_valid(&self) -> i64 {
        let q = self.multiple_of;
        -((-self.lower).div_euclid(q)) * q
    }

    /// Largest admissible value.
    pub fn last_valid(&self) -> i64 {
        let q = self.multiple_of;
        self.upper.div_euclid(q) * q
    }

    /// Number of admissible values.
    pub fn count(&self) -> u64 {
        ((self.last_valid() - self.first_valid()) / self.multiple_of + 1) as u64
    }

    pub fn contains(&self, v: i64) -> bool {
        v >= self.lower && v <= self.upper && v.rem_euclid(self.multiple_of) == 0
    }

    /// Admissible values in increasing order.
    pub fn values(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.count() as i64).map(move |i| self.first_valid() + i * self.multiple_of)
    }

    fn span(&self) -> f64 {
        (self.upper - self.lower) as f64
    }

    /// Nearest admissible value to `raw` after clamping to the bounds.
    /// Ties round toward the smaller value; NaN maps to the first value.
    pub fn snap(&self, raw: f64) -> i64 {
        if raw.is_nan() {
            return self.first_valid();
        }
        let x = raw.clamp(self.lower as f64, self.upper as f64);
        let q = self.multiple_of as f64;
        let below = (x / q).floor() * q;
        let above = below + q;
        let nearest = if x - below <= above - x { below } else { above };
        (nearest as i64).clamp(self.first_valid(), self.last_valid())
    }
}

/// A point on the lattice, one integer per parameter in space order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamPoint(pub Vec<i64>);

impl ParamPoint {
    pub fn new(values: Vec<i64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<i64>> for ParamPoint {
    fn from(values: Vec<i64>) -> Self {
        Self(values)
    }
}

impl fmt::Display for ParamPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Ordered collection of integer dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ParamDef>", into = "Vec<ParamDef>")]
pub struct SearchSpace {
    params: Vec<ParamDef>,
}

impl TryFrom<Vec<ParamDef>> for SearchSpace {
    type Error = SpaceError;

    fn try_from(params: Vec<ParamDef>) -> Result<Self, Self::Error> {
        Self::new(params)
    }
}

impl From<SearchSpace> for Vec<ParamDef> {
    fn from(space: SearchSpace) -> Self {
        space.params
    }
}

impl SearchSpace {
    pub fn new(params: Vec<ParamDef>) -> Result<Self, SpaceError> {
        if params.is_empty() {
            return Err(SpaceError::Empty);
        }
        for (i, p) in params.iter().enumerate() {
            p.check()?;
            if params[..i].iter().any(|q| q.name == p.name) {
                return Err(SpaceError::DuplicateName(p.name.clone()));
            }
        }
        Ok(Self { params })
    }

    /// The generator/discriminator lattice: `m` in [2, 11], `n` in [64, 256]
    /// restricted to multiples of 4, `k` in [2, 10].
    pub fn gan_lattice() -> Self {
        Self {
            params: vec![
                ParamDef {
                    name: "m".into(),
                    lower: 2,
                    upper: 11,
                    multiple_of: 1,
                },
                ParamDef {
                    name: "n".into(),
                    lower: 64,
                    upper: 256,
                    multiple_of: 4,
                },
                ParamDef {
                    name: "k".into(),
                    lower: 2,
                    upper: 10,
                    multiple_of: 1,
                },
            ],
        }
    }

    pub fn params(&self) -> &[ParamDef] {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    /// Product of per-dimension counts, saturating.
    pub fn lattice_size(&self) -> u128 {
        self.params
            .iter()
            .fold(1u128, |acc, p| acc.saturating_mul(p.count() as u128))
    }

    fn check_arity(&self, got: usize) -> Result<(), SpaceError> {
        if got != self.dim() {
            return Err(SpaceError::ArityMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    pub fn validate(&self, point: &ParamPoint) -> Result<bool, SpaceError> {
        self.check_arity(point.len())?;
        Ok(self
            .params
            .iter()
            .zip(point.values())
            .all(|(p, &v)| p.contains(v)))
    }

    /// Like [`validate`](Self::validate) but reports which coordinate is off.
    pub fn require_valid(&self, point: &ParamPoint) -> Result<(), SpaceError> {
        self.check_arity(point.len())?;
        for (p, &v) in self.params.iter().zip(point.values()) {
            if !p.contains(v) {
                let reason = if v < p.lower || v > p.upper {
                    format!("{} = {v} outside [{}, {}]", p.name, p.lower, p.upper)
                } else {
                    format!("{} = {v} is not a multiple of {}", p.name, p.multiple_of)
                };
                return Err(SpaceError::InvalidPoint {
                    point: point.clone(),
                    reason,
                });
            }
        }
        Ok(())
    }

    pub fn enumerate(&self) -> Result<Vec<ParamPoint>, SpaceError> {
        self.enumerate_capped(DEFAULT_ENUMERATION_CAP)
    }

    /// All lattice points in lexicographic order, refusing above `cap`.
    pub fn enumerate_capped(&self, cap: u64) -> Result<Vec<ParamPoint>, SpaceError> {
        let size = self.lattice_size();
        if size > cap as u128 {
            return Err(SpaceError::LatticeTooLarge { size, cap });
        }
        Ok((0..size as u64).map(|i| self.point_at(i)).collect())
    }

    /// The `index`-th lattice point in enumeration order.
    ///
    /// Panics if `index` is not below [`lattice_size`](Self::lattice_size).
    pub fn point_at(&self, index: u64) -> ParamPoint {
        assert!(
            (index as u128) < self.lattice_size(),
            "lattice index out of range"
        );
        let mut rest = index;
        let mut values = vec![0; self.dim()];
        for (slot, p) in values.iter_mut().zip(&self.params).rev() {
            let count = p.count();
            *slot = p.first_valid() + (rest % count) as i64 * p.multiple_of;
            rest /= count;
        }
        ParamPoint(values)
    }

    /// Inverse of [`point_at`](Self::point_at).
    pub fn index_of(&self, point: &ParamPoint) -> Result<u64, SpaceError> {
        self.require_valid(point)?;
        let mut index = 0u64;
        for (p, &v) in self.params.iter().zip(point.values()) {
            index = index * p.count() + ((v - p.first_valid()) / p.multiple_of) as u64;
        }
        Ok(index)
    }

    /// Map a valid point into `[0, 1]^d`. Degenerate dimensions map to 0.
    pub fn normalize(&self, point: &ParamPoint) -> Result<Vec<f64>, SpaceError> {
        self.require_valid(point)?;
        Ok(self.normalize_unchecked(point))
    }

    pub(crate) fn normalize_unchecked(&self, point: &ParamPoint) -> Vec<f64> {
        self.params
            .iter()
            .zip(point.values())
            .map(|(p, &v)| {
                if p.upper == p.lower {
                    0.0
                } else {
                    (v - p.lower) as f64 / p.span()
                }
            })
            .collect()
    }

    /// Map unit-cube coordinates back to raw parameter units (not snapped).
    pub fn denormalize(&self, unit: &[f64]) -> Result<Vec<f64>, SpaceError> {
        self.check_arity(unit.len())?;
        Ok(self
            .params
            .iter()
            .zip(unit)
            .map(|(p, &u)| p.lower as f64 + u * p.span())
            .collect())
    }

    /// Nearest lattice point to a raw (parameter-unit) vector.
    pub fn snap(&self, raw: &[f64]) -> Result<ParamPoint, SpaceError> {
        self.check_arity(raw.len())?;
        Ok(ParamPoint(
            self.params
                .iter()
                .zip(raw)
                .map(|(p, &x)| p.snap(x))
                .collect(),
        ))
    }

    /// Nearest lattice point to a unit-cube vector.
    pub fn snap_unit(&self, unit: &[f64]) -> Result<ParamPoint, SpaceError> {
        self.snap(&self.denormalize(unit)?)
    }
}
