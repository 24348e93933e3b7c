use crate::history::{Evaluator, RunError, RunOutcome, StopReason};
use crate::objectives::Objective;
use crate::sampling::{seeded, IndexSampler};
use crate::space::SearchSpace;

/// Uniform random search over the lattice, without replacement.
pub fn run_random(
    space: &SearchSpace,
    objective: &mut dyn Objective,
    max_evals: usize,
    seed: u64,
) -> Result<RunOutcome, RunError> {
    if max_evals == 0 {
        return Err(RunError::Config(
            "random: max_evals must be at least 1".into(),
        ));
    }
    let size = u64::try_from(space.lattice_size()).unwrap_or(u64::MAX);
    let mut rng = seeded(seed);
    let mut sampler = IndexSampler::new(size);
    let mut ev = Evaluator::new(space, objective, max_evals, false);
    let stop = loop {
        if !ev.budget_left() {
            break StopReason::Budget;
        }
        let Some(i) = sampler.next(&mut rng) else {
            break StopReason::Exhausted;
        };
        ev.evaluate(&space.point_at(i))?;
    };
    ev.finish(stop)
}
