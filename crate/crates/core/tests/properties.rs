mod common;

use std::collections::HashSet;

use proptest::prelude::*;

use hypertune::acquisition::{
    probability_of_improvement, select_next, ucb, AcquisitionConfig, AcquisitionError,
};
use hypertune::baselines::{run_cobyla_traced, CobylaConfig, CobylaTrace, PsoConfig};
use hypertune::gp::{fit, KernelConfig, Posterior};
use hypertune::objectives::{Builtin, BuiltinId};
use hypertune::{
    run_bo, run_cobyla, run_pso, run_random, BoConfig, ParamDef, ParamPoint, SearchSpace,
};

fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>, f64, f64)> {
    (1usize..=3, 1usize..=50).prop_flat_map(|(d, n)| {
        (
            proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, d), n),
            proptest::collection::vec(-5.0f64..5.0, n),
            proptest::collection::vec(0.15f64..0.6, d),
            1e-3f64..1e-1,
        )
            .prop_map(|(xs, ys, ls, noise)| {
                let pm = ys.iter().sum::<f64>() / ys.len() as f64;
                (xs, ys, ls, noise, pm)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn gp_matches_explicit_inverse((xs, ys, ls, noise, pm) in instance(), probe_seed in 0u64..1000) {
        let kernel = KernelConfig::default().with_length_scale(ls).with_noise(noise);
        let model = fit(&kernel, pm, &xs, &ys).unwrap();
        let d = xs[0].len();
        let probes: Vec<Vec<f64>> = (0..5)
            .map(|j| (0..d).map(|i| (probe_seed as f64 * 0.618 + (i * 7 + j * 3) as f64 * 0.137) % 1.0).collect())
            .chain(xs.iter().take(3).cloned())
            .collect();
        for x in &probes {
            let fast = model.predict(x).unwrap();
            let slow = common::naive_posterior(&model, x);
            prop_assert!((fast.mean - slow.mean).abs() <= 1e-8, "mean {} vs {}", fast.mean, slow.mean);
            prop_assert!((fast.variance - slow.variance).abs() <= 1e-8, "var {} vs {}", fast.variance, slow.variance);
            prop_assert!(fast.variance >= 0.0 && fast.variance <= model.max_variance());
        }
    }

    #[test]
    fn gp_interpolates_without_noise(n in 2usize..20, seed in 0u64..500) {
        // distinct points on a 5x5 grid
        let mut idx: Vec<usize> = (0..25).collect();
        let mut s = seed;
        for i in (1..idx.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            idx.swap(i, (s >> 33) as usize % (i + 1));
        }
        let xs: Vec<Vec<f64>> = idx[..n].iter().map(|&i| vec![(i % 5) as f64 / 4.0, (i / 5) as f64 / 4.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x[0]).sin() + x[1] * x[1] - 0.5).collect();
        let kernel = KernelConfig::default().with_length_scale(vec![0.2]).with_noise(0.0);
        let pm = ys.iter().sum::<f64>() / n as f64;
        let model = fit(&kernel, pm, &xs, &ys).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            prop_assert!((model.predict(x).unwrap().mean - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn gp_is_permutation_invariant((xs, ys, ls, noise, pm) in instance(), rot in 0usize..50) {
        let kernel = KernelConfig::default().with_length_scale(ls).with_noise(noise);
        let a = fit(&kernel, pm, &xs, &ys).unwrap();
        let r = rot % xs.len();
        let mut xs2 = xs.clone();
        let mut ys2 = ys.clone();
        xs2.rotate_left(r);
        ys2.rotate_left(r);
        xs2.reverse();
        ys2.reverse();
        let b = fit(&kernel, pm, &xs2, &ys2).unwrap();
        let probe = vec![0.37; xs[0].len()];
        for x in xs.iter().take(4).chain(std::iter::once(&probe)) {
            let (pa, pb) = (a.predict(x).unwrap(), b.predict(x).unwrap());
            prop_assert!((pa.mean - pb.mean).abs() <= 1e-8);
            prop_assert!((pa.variance - pb.variance).abs() <= 1e-8);
        }
    }

    #[test]
    fn ucb_monotone_in_lambda(mean in -10.0f64..10.0, var in 1e-6f64..10.0, l1 in 0.0f64..5.0, dl in 1e-3f64..5.0) {
        let p = Posterior { mean, variance: var };
        prop_assert!(ucb(&p, l1 + dl) > ucb(&p, l1));
        prop_assert_eq!(ucb(&p, 0.0), mean);
    }

    #[test]
    fn pi_monotone(mean in -5.0f64..5.0, dm in 1e-3f64..2.0, sd in 0.05f64..3.0, ds in 1e-2f64..2.0, inc in -5.0f64..5.0) {
        let at = |m: f64, s: f64| probability_of_improvement(&Posterior { mean: m, variance: s * s }, inc);
        prop_assert!(at(mean + dm, sd) >= at(mean, sd));
        if mean < inc {
            prop_assert!(at(mean, sd + ds) >= at(mean, sd));
        }
        let v = at(mean, sd);
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn select_next_skips_visited(mask in proptest::collection::vec(any::<bool>(), 20), seed in 0u64..100) {
        let space = SearchSpace::new(vec![ParamDef::range("a", 0, 3).unwrap(), ParamDef::range("b", 0, 4).unwrap()]).unwrap();
        let pts = space.enumerate().unwrap();
        let visited: HashSet<ParamPoint> = pts.iter().zip(&mask).filter(|(_, m)| **m).map(|(p, _)| p.clone()).collect();
        let xs: Vec<Vec<f64>> = pts.iter().take(4).map(|p| space.normalize(p).unwrap()).collect();
        let ys: Vec<f64> = (0..4).map(|i| ((seed + i) % 7) as f64).collect();
        let model = fit(&KernelConfig::default(), 3.0, &xs, &ys).unwrap();
        match select_next(&model, &space, &AcquisitionConfig::default(), &visited) {
            Ok(p) => prop_assert!(!visited.contains(&p) && space.validate(&p).unwrap()),
            Err(e) => {
                prop_assert_eq!(e, AcquisitionError::Exhausted);
                prop_assert_eq!(visited.len(), pts.len());
            }
        }
    }

    #[test]
    fn exploit_only_picks_best_unvisited_mean(seed in 0u64..200, hold in 0usize..30) {
        let space = SearchSpace::new(vec![ParamDef::range("a", 0, 5).unwrap(), ParamDef::range("b", 0, 4).unwrap()]).unwrap();
        let pts = space.enumerate().unwrap();
        let f = |p: &ParamPoint| ((p.0[0] * 3 + p.0[1] * 5 + seed as i64) % 11) as f64;
        let observed: Vec<&ParamPoint> = pts.iter().enumerate().filter(|(i, _)| i % 3 != hold % 3).map(|(_, p)| p).collect();
        let xs: Vec<Vec<f64>> = observed.iter().map(|p| space.normalize(p).unwrap()).collect();
        let ys: Vec<f64> = observed.iter().map(|p| f(p)).collect();
        let pm = ys.iter().sum::<f64>() / ys.len() as f64;
        let model = fit(&KernelConfig::default().with_noise(0.0), pm, &xs, &ys).unwrap();
        let visited: HashSet<ParamPoint> = observed.iter().map(|p| (*p).clone()).collect();
        let chosen = select_next(&model, &space, &AcquisitionConfig::ucb(0.0), &visited).unwrap();
        let mut best: Option<(ParamPoint, f64)> = None;
        for p in pts.iter().filter(|p| !visited.contains(*p)) {
            let m = model.predict(&space.normalize(p).unwrap()).unwrap().mean;
            if best.as_ref().is_none_or(|(_, b)| m > *b) {
                best = Some((p.clone(), m));
            }
        }
        prop_assert_eq!(chosen, best.unwrap().0);
    }

    #[test]
    fn argmax_invariant_under_target_shift(seed in 0u64..200, shift in -64i32..64) {
        let space = SearchSpace::new(vec![ParamDef::range("a", 0, 6).unwrap(), ParamDef::range("b", 0, 6).unwrap()]).unwrap();
        let pts = space.enumerate().unwrap();
        let chosen: Vec<&ParamPoint> = pts.iter().enumerate().filter(|(i, _)| (i * 7 + seed as usize).is_multiple_of(5)).map(|(_, p)| p).collect();
        let xs: Vec<Vec<f64>> = chosen.iter().map(|p| space.normalize(p).unwrap()).collect();
        // dyadic targets keep the shift exact
        let ys: Vec<f64> = chosen.iter().map(|p| ((p.0[0] * 5 + p.0[1] * 3 + seed as i64) % 13) as f64 / 8.0).collect();
        let shifted: Vec<f64> = ys.iter().map(|y| y + f64::from(shift)).collect();
        let visited: HashSet<ParamPoint> = chosen.iter().map(|p| (*p).clone()).collect();
        let pick = |ys: &[f64]| {
            let pm = ys.iter().sum::<f64>() / ys.len() as f64;
            let model = fit(&KernelConfig::default(), pm, &xs, ys).unwrap();
            select_next(&model, &space, &AcquisitionConfig::default(), &visited).unwrap()
        };
        prop_assert_eq!(pick(&ys), pick(&shifted));
    }

    #[test]
    fn bo_uses_whole_budget_or_lattice(upper_a in 0i64..4, upper_b in 0i64..4, budget in 1usize..12, seed in 0u64..50) {
        let space = SearchSpace::new(vec![ParamDef::range("a", 0, upper_a).unwrap(), ParamDef::range("b", 0, upper_b).unwrap()]).unwrap();
        let size = space.lattice_size() as usize;
        let mut obj = Builtin::new(BuiltinId::Sphere, &space).unwrap();
        let mut cfg = BoConfig::default().with_budget(budget).with_seed(seed);
        cfg.n_initial = cfg.n_initial.min(budget);
        if size < 2 || budget < 2 { cfg.n_initial = 1; }
        let out = run_bo(&space, &mut obj, &cfg).unwrap();
        prop_assert_eq!(out.history.len(), budget.min(size));
        let distinct: HashSet<_> = out.history.records.iter().map(|r| &r.point).collect();
        prop_assert_eq!(distinct.len(), out.history.len());
    }

    #[test]
    fn optimizers_keep_monotone_traces_and_valid_points(seed in 0u64..1000) {
        let space = SearchSpace::gan_lattice();
        let mk = || Builtin::new(BuiltinId::GanProxy, &space).unwrap();
        let runs = [
            run_cobyla(&space, &mut mk(), &CobylaConfig { max_evals: 30, seed, ..Default::default() }).unwrap(),
            run_pso(&space, &mut mk(), &PsoConfig { max_evals: 30, seed, ..Default::default() }).unwrap(),
            run_random(&space, &mut mk(), 30, seed).unwrap(),
        ];
        for out in &runs {
            let trace = out.history.best_so_far();
            prop_assert!(trace.windows(2).all(|w| w[1] >= w[0]));
            let mut running = f64::NEG_INFINITY;
            for (r, b) in out.history.records.iter().zip(&trace) {
                running = running.max(r.score);
                prop_assert_eq!(running, *b);
                prop_assert!(space.validate(&r.point).unwrap());
            }
            prop_assert_eq!(out.best.score, running);
        }
    }

    #[test]
    fn cobyla_radius_shrinks_and_simplex_stays_in_cube(seed in 0u64..1000, rho in 0.05f64..0.5) {
        let space = SearchSpace::gan_lattice();
        let mut obj = Builtin::new(BuiltinId::RastriginDiscrete, &space).unwrap();
        let cfg = CobylaConfig { rho_begin: rho, rho_end: 1e-3, max_evals: 60, seed };
        let mut trace = CobylaTrace { radii: vec![], simplices: vec![] };
        run_cobyla_traced(&space, &mut obj, &cfg, Some(&mut trace)).unwrap();
        prop_assert!(trace.radii.windows(2).all(|w| w[1] <= w[0]));
        for simplex in &trace.simplices {
            prop_assert_eq!(simplex.len(), 4);
            prop_assert!(simplex.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn fixed_seed_runs_are_bit_identical() {
    let space = SearchSpace::gan_lattice();
    let mk = || Builtin::new(BuiltinId::GanProxy, &space).unwrap();
    let scores = |h: &hypertune::History| {
        h.records
            .iter()
            .map(|r| (r.point.clone(), r.score.to_bits()))
            .collect::<Vec<_>>()
    };
    for seed in [0, 7, 42] {
        let bo = BoConfig::default().with_budget(20).with_seed(seed);
        assert_eq!(
            scores(&run_bo(&space, &mut mk(), &bo).unwrap().history),
            scores(&run_bo(&space, &mut mk(), &bo).unwrap().history)
        );
        let c = CobylaConfig {
            max_evals: 40,
            seed,
            ..Default::default()
        };
        assert_eq!(
            scores(&run_cobyla(&space, &mut mk(), &c).unwrap().history),
            scores(&run_cobyla(&space, &mut mk(), &c).unwrap().history)
        );
        let p = PsoConfig {
            max_evals: 40,
            seed,
            ..Default::default()
        };
        assert_eq!(
            scores(&run_pso(&space, &mut mk(), &p).unwrap().history),
            scores(&run_pso(&space, &mut mk(), &p).unwrap().history)
        );
    }
}

#[test]
fn bo_seed_42_thirty_iterations_finds_enumerated_max() {
    let space = SearchSpace::gan_lattice();
    let oracle = space
        .enumerate()
        .unwrap()
        .into_iter()
        .map(|p| hypertune::objectives::gan_proxy(&p).unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    let mut obj = Builtin::new(BuiltinId::GanProxy, &space).unwrap();
    let out = run_bo(
        &space,
        &mut obj,
        &BoConfig::default().with_budget(30).with_seed(42),
    )
    .unwrap();
    assert_eq!(out.best.score, oracle);
}
