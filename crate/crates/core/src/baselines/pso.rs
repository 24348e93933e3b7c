//! Global-best particle swarm in the unit cube.
//!
//! Positions and velocities are continuous; positions are snapped to the
//! lattice only for evaluation. Updates are synchronous: the whole swarm is
//! evaluated, then personal and global bests are refreshed, then everyone
//! moves. Particles start at rest at uniform random positions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::history::{Evaluator, RunError, RunOutcome, StopReason};
use crate::objectives::Objective;
use crate::sampling::seeded;
use crate::space::SearchSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsoConfig {
    pub n_particles: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Per-coordinate speed limit in unit-cube lengths.
    pub v_max: f64,
    pub max_evals: usize,
    /// Cap on swarm generations.
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            n_particles: 8,
            inertia: 0.729,
            cognitive: 1.49445,
            social: 1.49445,
            v_max: 0.25,
            max_evals: 100,
            max_iters: 1000,
            seed: 0,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |msg: String| Err(RunError::Config(format!("pso: {msg}")));
        if self.n_particles < 2 {
            return bad(format!(
                "n_particles must be at least 2, got {}",
                self.n_particles
            ));
        }
        if !(self.inertia > 0.0 && self.inertia < 1.0) {
            return bad(format!("inertia must lie in (0, 1), got {}", self.inertia));
        }
        for (name, c) in [("cognitive", self.cognitive), ("social", self.social)] {
            if !(c.is_finite() && c > 0.0) {
                return bad(format!("{name} must be positive, got {c}"));
            }
        }
        if !(self.v_max.is_finite() && self.v_max > 0.0) {
            return bad(format!("v_max must be positive, got {}", self.v_max));
        }
        if self.max_evals == 0 || self.max_iters == 0 {
            return bad("max_evals and max_iters must be at least 1".into());
        }
        Ok(())
    }
}

/// Velocity update for one particle, clamped to `[-v_max, v_max]` per
/// coordinate. `r1` and `r2` are the per-coordinate uniform draws.
#[allow(clippy::too_many_arguments)]
pub fn update_velocity(
    cfg: &PsoConfig,
    velocity: &[f64],
    position: &[f64],
    personal_best: &[f64],
    global_best: &[f64],
    r1: &[f64],
    r2: &[f64],
) -> Vec<f64> {
    (0..velocity.len())
        .map(|i| {
            let v = cfg.inertia * velocity[i]
                + cfg.cognitive * r1[i] * (personal_best[i] - position[i])
                + cfg.social * r2[i] * (global_best[i] - position[i]);
            v.clamp(-cfg.v_max, cfg.v_max)
        })
        .collect()
}

/// Move a particle and keep it inside the cube. A coordinate that hits a
/// wall has its velocity zeroed.
pub fn step_position(position: &mut [f64], velocity: &mut [f64]) {
    for (x, v) in position.iter_mut().zip(velocity.iter_mut()) {
        let next = *x + *v;
        if !(0.0..=1.0).contains(&next) {
            *v = 0.0;
        }
        *x = next.clamp(0.0, 1.0);
    }
}

#[derive(Debug, Clone)]
struct Particle {
    x: Vec<f64>,
    v: Vec<f64>,
    best_x: Vec<f64>,
    best: Option<f64>,
}

pub fn run_pso(
    space: &SearchSpace,
    objective: &mut dyn Objective,
    cfg: &PsoConfig,
) -> Result<RunOutcome, RunError> {
    cfg.validate()?;
    let mut ev = Evaluator::new(space, objective, cfg.max_evals, false);
    let stop = pso_loop(&mut ev, space, cfg)?;
    ev.finish(stop)
}

fn pso_loop(
    ev: &mut Evaluator<'_>,
    space: &SearchSpace,
    cfg: &PsoConfig,
) -> Result<StopReason, RunError> {
    let d = space.dim();
    let mut rng = seeded(cfg.seed);
    let mut swarm: Vec<Particle> = (0..cfg.n_particles)
        .map(|_| {
            let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            Particle {
                v: vec![0.0; d],
                best_x: x.clone(),
                x,
                best: None,
            }
        })
        .collect();
    let mut global: Option<(Vec<f64>, f64)> = None;

    for _ in 0..cfg.max_iters {
        let mut scores = Vec::with_capacity(swarm.len());
        for p in &swarm {
            if !ev.budget_left() {
                break;
            }
            let point = space.snap_unit(&p.x)?;
            scores.push(ev.evaluate(&point)?.score());
        }
        // partial final generation still updates the evaluated particles
        for (p, s) in swarm.iter_mut().zip(&scores) {
            let Some(s) = *s else { continue };
            if p.best.is_none_or(|b| s > b) {
                p.best = Some(s);
                p.best_x = p.x.clone();
            }
            if global.as_ref().is_none_or(|(_, g)| s > *g) {
                global = Some((p.x.clone(), s));
            }
        }
        if !ev.budget_left() {
            return Ok(StopReason::Budget);
        }
        let Some((gx, _)) = &global else { continue };
        for p in &mut swarm {
            let r1: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let r2: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            p.v = update_velocity(cfg, &p.v, &p.x, &p.best_x, gx, &r1, &r2);
            step_position(&mut p.x, &mut p.v);
        }
    }
    Ok(StopReason::IterationLimit)
}
