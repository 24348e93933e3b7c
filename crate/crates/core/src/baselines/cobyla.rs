//! Linear-approximation trust-region search in the unit cube.
//!
//! Keeps a simplex of `d + 1` vertices, fits the linear interpolant through
//! their scores and steps a trust radius `rho` from the best vertex along the
//! interpolant's ascent direction. An improving step replaces the worst
//! vertex; otherwise `rho` halves and the simplex is rebuilt around the best
//! vertex. Bound constraints are enforced by clipping to `[0, 1]^d`. Points
//! are snapped to the lattice for evaluation; vertices stay continuous.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::history::{Evaluator, RunError, RunOutcome, StopReason};
use crate::objectives::Objective;
use crate::sampling::seeded;
use crate::space::SearchSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CobylaConfig {
    pub rho_begin: f64,
    pub rho_end: f64,
    pub max_evals: usize,
    pub seed: u64,
}

impl Default for CobylaConfig {
    fn default() -> Self {
        Self {
            rho_begin: 0.25,
            rho_end: 1e-3,
            max_evals: 100,
            seed: 0,
        }
    }
}

impl CobylaConfig {
    pub fn validate(&self, space: &SearchSpace) -> Result<(), RunError> {
        if !(self.rho_end > 0.0 && self.rho_end < self.rho_begin && self.rho_begin <= 0.5) {
            return Err(RunError::Config(format!(
                "cobyla: need 0 < rho_end < rho_begin <= 0.5, got rho_begin = {}, rho_end = {}",
                self.rho_begin, self.rho_end
            )));
        }
        if self.max_evals < space.dim() + 2 {
            return Err(RunError::Config(format!(
                "cobyla: max_evals must be at least d + 2 = {}",
                space.dim() + 2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Vertex {
    x: Vec<f64>,
    score: Option<f64>,
}

/// Observable state after each step, for invariant checks.
#[derive(Debug, Clone)]
pub struct CobylaTrace {
    pub radii: Vec<f64>,
    pub simplices: Vec<Vec<Vec<f64>>>,
}

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` for (numerically) singular systems.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>, tol: f64) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= tol {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let (top, rest) = a.split_at_mut(row);
            for (t, p) in rest[0][col..].iter_mut().zip(&top[col][col..]) {
                *t -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

struct Search<'e, 'a> {
    ev: &'e mut Evaluator<'a>,
    trace: Option<&'e mut CobylaTrace>,
}

impl Search<'_, '_> {
    fn score(&mut self, x: &[f64]) -> Result<Option<Option<f64>>, RunError> {
        if !self.ev.budget_left() {
            return Ok(None);
        }
        let p = self.ev.space().snap_unit(x)?;
        Ok(Some(self.ev.evaluate(&p)?.score()))
    }

    /// Base vertex plus one axis step of length `rho` per dimension, stepping
    /// inward when the outward step would leave the cube.
    fn build(&mut self, base: Vertex, rho: f64) -> Result<Option<Vec<Vertex>>, RunError> {
        let mut simplex = vec![base.clone()];
        for i in 0..base.x.len() {
            let mut x = base.x.clone();
            x[i] = if x[i] + rho <= 1.0 {
                x[i] + rho
            } else {
                x[i] - rho
            };
            match self.score(&x)? {
                Some(score) => simplex.push(Vertex { x, score }),
                None => return Ok(None),
            }
        }
        Ok(Some(simplex))
    }

    fn record(&mut self, rho: f64, simplex: &[Vertex]) {
        if let Some(t) = self.trace.as_deref_mut() {
            t.radii.push(rho);
            t.simplices
                .push(simplex.iter().map(|v| v.x.clone()).collect());
        }
    }
}

fn best_index(simplex: &[Vertex]) -> usize {
    let mut best = 0;
    for (i, v) in simplex.iter().enumerate() {
        let better = match (v.score, simplex[best].score) {
            (Some(a), Some(b)) => a > b,
            (Some(_), None) => true,
            _ => false,
        };
        if better {
            best = i;
        }
    }
    best
}

fn worst_index(simplex: &[Vertex], skip: usize) -> usize {
    let mut worst = if skip == 0 { 1 } else { 0 };
    for (i, v) in simplex.iter().enumerate() {
        if i == skip {
            continue;
        }
        let worse = match (v.score, simplex[worst].score) {
            (None, Some(_)) => true,
            (Some(a), Some(b)) => a < b,
            _ => false,
        };
        if worse {
            worst = i;
        }
    }
    worst
}

/// Ascent direction of the linear interpolant through the simplex.
fn gradient(simplex: &[Vertex], best: usize, rho: f64) -> Option<Vec<f64>> {
    let fb = simplex[best].score?;
    let xb = &simplex[best].x;
    let mut rows = Vec::with_capacity(simplex.len() - 1);
    let mut rhs = Vec::with_capacity(simplex.len() - 1);
    for (i, v) in simplex.iter().enumerate() {
        if i == best {
            continue;
        }
        rows.push(v.x.iter().zip(xb).map(|(a, b)| a - b).collect());
        rhs.push(v.score? - fb);
    }
    solve(rows, rhs, 1e-9 * rho)
}

pub fn run_cobyla(
    space: &SearchSpace,
    objective: &mut dyn Objective,
    cfg: &CobylaConfig,
) -> Result<RunOutcome, RunError> {
    run_cobyla_traced(space, objective, cfg, None)
}

/// [`run_cobyla`] that also reports radius and simplex after every step.
pub fn run_cobyla_traced(
    space: &SearchSpace,
    objective: &mut dyn Objective,
    cfg: &CobylaConfig,
    trace: Option<&mut CobylaTrace>,
) -> Result<RunOutcome, RunError> {
    cfg.validate(space)?;
    let mut ev = Evaluator::new(space, objective, cfg.max_evals, false);
    let stop = cobyla_loop(&mut Search { ev: &mut ev, trace }, space.dim(), cfg)?;
    ev.finish(stop)
}

fn cobyla_loop(
    s: &mut Search<'_, '_>,
    dim: usize,
    cfg: &CobylaConfig,
) -> Result<StopReason, RunError> {
    let mut rng = seeded(cfg.seed);
    let x0: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let mut rho = cfg.rho_begin;

    let Some(score) = s.score(&x0)? else {
        return Ok(StopReason::Budget);
    };
    let Some(mut simplex) = s.build(Vertex { x: x0, score }, rho)? else {
        return Ok(StopReason::Budget);
    };
    s.record(rho, &simplex);

    loop {
        if !s.ev.budget_left() {
            return Ok(StopReason::Budget);
        }
        let best = best_index(&simplex);
        let fb = simplex[best].score;

        let trial = gradient(&simplex, best, rho).and_then(|g| {
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return None;
            }
            let xb = &simplex[best].x;
            let x: Vec<f64> = xb
                .iter()
                .zip(&g)
                .map(|(x, gi)| (x + rho * gi / norm).clamp(0.0, 1.0))
                .collect();
            (x != *xb).then_some(x)
        });

        let improved = match trial {
            Some(x) => {
                let Some(ft) = s.score(&x)? else {
                    return Ok(StopReason::Budget);
                };
                match (ft, fb) {
                    (Some(ft), Some(fb)) if ft > fb => {
                        let worst = worst_index(&simplex, best);
                        simplex[worst] = Vertex { x, score: Some(ft) };
                        true
                    }
                    (Some(_), None) => {
                        let worst = worst_index(&simplex, best);
                        simplex[worst] = Vertex { x, score: ft };
                        true
                    }
                    _ => false,
                }
            }
            None => false,
        };

        if !improved {
            rho *= 0.5;
            if rho < cfg.rho_end {
                return Ok(StopReason::Converged);
            }
            let base = simplex[best].clone();
            match s.build(base, rho)? {
                Some(next) => simplex = next,
                None => return Ok(StopReason::Budget),
            }
        }
        s.record(rho, &simplex);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{Builtin, BuiltinId, EvalError};
    use crate::space::{ParamDef, ParamPoint};

    struct Decreasing;
    impl Objective for Decreasing {
        fn id(&self) -> &str {
            "decreasing"
        }
        fn evaluate(&mut self, p: &ParamPoint) -> Result<f64, EvalError> {
            Ok(-(p.0[0] as f64))
        }
    }

    struct Flat;
    impl Objective for Flat {
        fn id(&self) -> &str {
            "flat"
        }
        fn evaluate(&mut self, _: &ParamPoint) -> Result<f64, EvalError> {
            Ok(0.0)
        }
    }

    #[test]
    fn solve_small_systems() {
        let x = solve(vec![vec![2.0, 1.0], vec![1.0, 3.0]], vec![3.0, 5.0], 1e-12).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
        assert!(solve(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 2.0], 1e-12).is_none());
    }

    #[test]
    fn monotone_1d_reaches_lower_bound() {
        let space = SearchSpace::new(vec![ParamDef::range("x", 0, 20).unwrap()]).unwrap();
        for seed in 0..5 {
            let cfg = CobylaConfig {
                seed,
                max_evals: 40,
                ..Default::default()
            };
            let out = run_cobyla(&space, &mut Decreasing, &cfg).unwrap();
            assert_eq!(out.best.point, ParamPoint(vec![0]), "seed {seed}");
        }
    }

    #[test]
    fn sphere_3d_reaches_center() {
        let space = SearchSpace::new(vec![
            ParamDef::range("a", 0, 20).unwrap(),
            ParamDef::range("b", 0, 20).unwrap(),
            ParamDef::range("c", 0, 20).unwrap(),
        ])
        .unwrap();
        let cfg = CobylaConfig {
            max_evals: 60,
            seed: 11,
            ..Default::default()
        };
        let mut obj = Builtin::new(BuiltinId::Sphere, &space).unwrap();
        let out = run_cobyla(&space, &mut obj, &cfg).unwrap();
        assert_eq!(out.best.point, ParamPoint(vec![10, 10, 10]));
    }

    #[test]
    fn flat_landscape_shrinks_to_rho_end() {
        let space = SearchSpace::gan_lattice();
        let cfg = CobylaConfig::default();
        let mut trace = CobylaTrace {
            radii: vec![],
            simplices: vec![],
        };
        let out = run_cobyla_traced(&space, &mut Flat, &cfg, Some(&mut trace)).unwrap();
        assert_eq!(out.stop, StopReason::Converged);
        assert_eq!(out.best.iteration, 0);
        assert!(trace.radii.windows(2).all(|w| w[1] <= w[0]));
        assert!(*trace.radii.last().unwrap() >= cfg.rho_end);
        assert!(*trace.radii.last().unwrap() < 2.0 * cfg.rho_end);
    }

    #[test]
    fn config_validation() {
        let space = SearchSpace::gan_lattice();
        assert!(CobylaConfig::default().validate(&space).is_ok());
        for (b, e) in [(0.6, 0.1), (0.1, 0.2), (0.2, 0.0)] {
            let c = CobylaConfig {
                rho_begin: b,
                rho_end: e,
                ..Default::default()
            };
            assert!(c.validate(&space).is_err());
        }
        let c = CobylaConfig {
            max_evals: 4,
            ..Default::default()
        };
        assert!(c.validate(&space).is_err());
    }
}
