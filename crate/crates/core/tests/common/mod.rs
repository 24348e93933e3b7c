//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::path::PathBuf;
use std::time::Duration;

use nalgebra::{DMatrix, DVector};

use hypertune::gp::{GpModel, Posterior};
use hypertune::objectives::ExternalObjective;

/// Posterior from an explicit inverse of the full covariance matrix.
pub fn naive_posterior(model: &GpModel, x: &[f64]) -> Posterior {
    let k = model.kernel();
    let xs = model.train_x();
    let n = xs.len();
    let se = |a: &[f64], b: &[f64]| {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&k.length_scale)
            .map(|((p, q), l)| ((p - q) / l).powi(2))
            .sum();
        k.signal_variance * (-0.5 * r2).exp()
    };
    let ys = model.train_y();
    let pm = model.prior_mean();
    let scale = if n >= 2 {
        let mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
        if var > 0.0 {
            var.sqrt()
        } else {
            1.0
        }
    } else {
        1.0
    };
    let a = DMatrix::from_fn(n, n, |i, j| {
        se(&xs[i], &xs[j])
            + if i == j {
                k.noise_variance + model.jitter()
            } else {
                0.0
            }
    });
    let inv = a.try_inverse().expect("invertible");
    let kstar = DVector::from_fn(n, |i, _| se(x, &xs[i]));
    let yc = DVector::from_fn(n, |i, _| (ys[i] - pm) / scale);
    let mean = pm + scale * (kstar.transpose() * &inv * yc)[(0, 0)];
    let var = scale
        * scale
        * (k.signal_variance + k.noise_variance - (kstar.transpose() * &inv * &kstar)[(0, 0)]);
    Posterior {
        mean,
        variance: var.max(0.0),
    }
}

/// Scripted NDJSON child; see `fixtures/protocol/mock_objective.py`.
pub fn mock_objective(
    mode: &str,
    log: Option<&std::path::Path>,
    timeout: Duration,
) -> ExternalObjective {
    let script =
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/protocol/mock_objective.py");
    let mut cmd = vec![
        "python3".to_string(),
        script.display().to_string(),
        mode.to_string(),
    ];
    if let Some(l) = log {
        cmd.push(l.display().to_string());
    }
    ExternalObjective::new(cmd, vec!["m".into()], timeout)
}
