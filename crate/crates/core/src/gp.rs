//! Gaussian-process regression with a squared-exponential kernel.
//!
//! Inputs are expected in the unit cube (see [`SearchSpace::normalize`]).
//! Targets are centered on the supplied prior mean and, with two or more
//! distinct observations, scaled to unit variance before factorization.
//! Posteriors are always reported in the original target units.
//!
//! [`SearchSpace::normalize`]: crate::space::SearchSpace::normalize

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Length-scale grid used by [`fit_with_grid`] by default.
pub const LENGTH_SCALE_GRID: [f64; 5] = [0.05, 0.1, 0.2, 0.4, 0.8];

const JITTER_ESCALATIONS: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GpError {
    #[error("input has {got} coordinates, expected {expected}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("{xs} inputs but {ys} targets")]
    LengthMismatch { xs: usize, ys: usize },
    #[error("no training data")]
    Empty,
    #[error("invalid kernel configuration: {0}")]
    InvalidKernel(String),
    #[error("non-finite training data")]
    NonFinite,
    #[error("covariance not positive definite even with jitter {jitter:e}")]
    IllConditioned { jitter: f64 },
}

fn default_signal_variance() -> f64 {
    1.0
}
fn default_length_scale() -> Vec<f64> {
    vec![0.2]
}
fn default_noise_variance() -> f64 {
    1e-6
}
fn default_jitter() -> f64 {
    1e-9
}

/// Squared-exponential kernel hyperparameters.
///
/// A single `length_scale` entry is broadcast to every input dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default = "default_signal_variance")]
    pub signal_variance: f64,
    #[serde(default = "default_length_scale")]
    pub length_scale: Vec<f64>,
    #[serde(default = "default_noise_variance")]
    pub noise_variance: f64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            signal_variance: default_signal_variance(),
            length_scale: default_length_scale(),
            noise_variance: default_noise_variance(),
            jitter: default_jitter(),
        }
    }
}

impl KernelConfig {
    pub fn with_length_scale(mut self, length_scale: Vec<f64>) -> Self {
        self.length_scale = length_scale;
        self
    }

    pub fn with_noise(mut self, noise_variance: f64) -> Self {
        self.noise_variance = noise_variance;
        self
    }

    pub fn validate(&self) -> Result<(), GpError> {
        let bad = |msg: &str| Err(GpError::InvalidKernel(msg.to_string()));
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return bad("signal_variance must be positive");
        }
        if self.length_scale.is_empty() {
            return bad("length_scale must not be empty");
        }
        if !self.length_scale.iter().all(|l| *l > 0.0 && l.is_finite()) {
            return bad("every length_scale must be positive");
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return bad("noise_variance must be non-negative");
        }
        if !(self.jitter > 0.0 && self.jitter.is_finite()) {
            return bad("jitter must be positive");
        }
        Ok(())
    }

    /// Expand the length scales to `dim` entries.
    pub fn expanded(&self, dim: usize) -> Result<KernelConfig, GpError> {
        self.validate()?;
        let length_scale = match self.length_scale.len() {
            1 => vec![self.length_scale[0]; dim],
            n if n == dim => self.length_scale.clone(),
            n => {
                return Err(GpError::InvalidKernel(format!(
                    "{n} length scales for {dim} dimensions"
                )))
            }
        };
        Ok(KernelConfig {
            length_scale,
            ..self.clone()
        })
    }

    fn scale_for(&self, i: usize) -> f64 {
        if self.length_scale.len() == 1 {
            self.length_scale[0]
        } else {
            self.length_scale[i]
        }
    }

    /// `signal_variance * exp(-0.5 * sum(((x_i - y_i) / l_i)^2))`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64, GpError> {
        if x.len() != y.len() {
            return Err(GpError::ArityMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if self.length_scale.len() != 1 && self.length_scale.len() != x.len() {
            return Err(GpError::ArityMismatch {
                expected: self.length_scale.len(),
                got: x.len(),
            });
        }
        Ok(self.eval_unchecked(x, y))
    }

    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let r2: f64 = x
            .iter()
            .zip(y)
            .enumerate()
            .map(|(i, (a, b))| {
                let d = (a - b) / self.scale_for(i);
                d * d
            })
            .sum();
        self.signal_variance * (-0.5 * r2).exp()
    }
}

/// Posterior of the latent function at one input, in original target units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub mean: f64,
    /// Variance, not standard deviation.
    pub variance: f64,
}

impl Posterior {
    pub fn std_dev(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

/// A fitted Gaussian process. Immutable; `predict` is pure.
#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: KernelConfig,
    prior_mean: f64,
    y_scale: f64,
    jitter: f64,
    train_x: Vec<Vec<f64>>,
    train_y: Vec<f64>,
    /// Lower Cholesky factor of K + (noise + jitter) I, row-major.
    factor: Vec<f64>,
    /// (K + (noise + jitter) I)^-1 applied to the standardized targets.
    alpha: Vec<f64>,
}

/// Average the targets of identical input rows, keeping first-seen order.
fn merge_duplicates(xs: &[Vec<f64>], ys: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut ux: Vec<Vec<f64>> = Vec::with_capacity(xs.len());
    let mut sums: Vec<(f64, usize)> = Vec::with_capacity(xs.len());
    for (x, &y) in xs.iter().zip(ys) {
        match ux.iter().position(|u| u == x) {
            Some(i) => {
                sums[i].0 += y;
                sums[i].1 += 1;
            }
            None => {
                ux.push(x.clone());
                sums.push((y, 1));
            }
        }
    }
    let uy = sums.into_iter().map(|(s, c)| s / c as f64).collect();
    (ux, uy)
}

/// In-place Cholesky of a row-major SPD matrix; returns false on breakdown.
fn cholesky(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d.is_finite() && d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for k in j + 1..n {
            a[j * n + k] = 0.0;
        }
    }
    true
}

/// Solve L z = b for lower-triangular L.
fn forward_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * z[k];
        }
        z[i] = s / l[i * n + i];
    }
    z
}

/// Solve L^T z = b for lower-triangular L.
fn backward_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * z[k];
        }
        z[i] = s / l[i * n + i];
    }
    z
}

/// Fit a GP to `xs`/`ys` with the given prior mean.
///
/// Duplicate input rows are merged by averaging. If the covariance cannot be
/// factored, the jitter is raised tenfold up to three times before giving up.
pub fn fit(
    kernel: &KernelConfig,
    prior_mean: f64,
    xs: &[Vec<f64>],
    ys: &[f64],
) -> Result<GpModel, GpError> {
    if xs.len() != ys.len() {
        return Err(GpError::LengthMismatch {
            xs: xs.len(),
            ys: ys.len(),
        });
    }
    if xs.is_empty() {
        return Err(GpError::Empty);
    }
    let dim = xs[0].len();
    if let Some(bad) = xs.iter().find(|x| x.len() != dim) {
        return Err(GpError::ArityMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    if !prior_mean.is_finite()
        || ys.iter().any(|y| !y.is_finite())
        || xs.iter().flatten().any(|v| !v.is_finite())
    {
        return Err(GpError::NonFinite);
    }
    let kernel = kernel.expanded(dim)?;
    let (train_x, train_y) = merge_duplicates(xs, ys);
    let n = train_x.len();

    let y_scale = if n >= 2 {
        let mean = train_y.iter().sum::<f64>() / n as f64;
        let var = train_y.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
        if var > 0.0 {
            var.sqrt()
        } else {
            1.0
        }
    } else {
        1.0
    };
    let centered: Vec<f64> = train_y.iter().map(|y| (y - prior_mean) / y_scale).collect();

    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = kernel.eval_unchecked(&train_x[i], &train_x[j]);
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }

    let mut jitter = kernel.jitter;
    for attempt in 0..=JITTER_ESCALATIONS {
        let mut factor = gram.clone();
        for i in 0..n {
            factor[i * n + i] += kernel.noise_variance + jitter;
        }
        if cholesky(&mut factor, n) {
            let alpha = backward_solve(&factor, n, &forward_solve(&factor, n, &centered));
            return Ok(GpModel {
                kernel,
                prior_mean,
                y_scale,
                jitter,
                train_x,
                train_y,
                factor,
                alpha,
            });
        }
        if attempt < JITTER_ESCALATIONS {
            jitter *= 10.0;
        }
    }
    Err(GpError::IllConditioned { jitter })
}

/// Fit with the length scales that maximize the log marginal likelihood.
///
/// Every combination of `grid` values across dimensions is tried when there
/// are at most 625 of them; otherwise a shared (isotropic) scale is searched.
/// Ties keep the earliest combination in grid order.
pub fn fit_with_grid(
    kernel: &KernelConfig,
    prior_mean: f64,
    xs: &[Vec<f64>],
    ys: &[f64],
    grid: &[f64],
) -> Result<GpModel, GpError> {
    let dim = xs.first().map_or(0, Vec::len);
    if grid.is_empty() || dim == 0 {
        return fit(kernel, prior_mean, xs, ys);
    }
    let full = (grid.len() as u64)
        .checked_pow(dim as u32)
        .filter(|&c| c <= 625);
    let candidates: Vec<Vec<f64>> = match full {
        Some(count) => (0..count)
            .map(|mut idx| {
                let mut ls = vec![0.0; dim];
                for slot in ls.iter_mut().rev() {
                    *slot = grid[(idx % grid.len() as u64) as usize];
                    idx /= grid.len() as u64;
                }
                ls
            })
            .collect(),
        None => grid.iter().map(|&l| vec![l; dim]).collect(),
    };

    let mut best: Option<(f64, GpModel)> = None;
    let mut last_err = None;
    for ls in candidates {
        let cfg = kernel.clone().with_length_scale(ls);
        match fit(&cfg, prior_mean, xs, ys) {
            Ok(model) => {
                let lml = model.log_marginal_likelihood();
                if best.as_ref().is_none_or(|(b, _)| lml > *b) {
                    best = Some((lml, model));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((_, model)) => Ok(model),
        None => Err(last_err.unwrap_or(GpError::Empty)),
    }
}

impl GpModel {
    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    /// Standard deviation used to scale targets (1 when not standardized).
    pub fn y_scale(&self) -> f64 {
        self.y_scale
    }

    /// Jitter actually added to the diagonal after escalation.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.train_x[0].len()
    }

    pub fn train_x(&self) -> &[Vec<f64>] {
        &self.train_x
    }

    pub fn train_y(&self) -> &[f64] {
        &self.train_y
    }

    pub fn len(&self) -> usize {
        self.train_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_x.is_empty()
    }

    /// Lower Cholesky factor as rows.
    pub fn factor_rows(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        self.factor.chunks(n).map(<[f64]>::to_vec).collect()
    }

    /// Upper bound on posterior variance in original units.
    pub fn max_variance(&self) -> f64 {
        self.y_scale
            * self.y_scale
            * (self.kernel.signal_variance + self.kernel.noise_variance + self.jitter)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Posterior, GpError> {
        if x.len() != self.dim() {
            return Err(GpError::ArityMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> Posterior {
        let n = self.len();
        let kstar: Vec<f64> = self
            .train_x
            .iter()
            .map(|t| self.kernel.eval_unchecked(x, t))
            .collect();
        let mean_std: f64 = kstar.iter().zip(&self.alpha).map(|(k, a)| k * a).sum();
        let v = forward_solve(&self.factor, n, &kstar);
        let explained: f64 = v.iter().map(|z| z * z).sum();
        let var_std =
            (self.kernel.signal_variance + self.kernel.noise_variance - explained).max(0.0);
        Posterior {
            mean: self.prior_mean + self.y_scale * mean_std,
            variance: self.y_scale * self.y_scale * var_std,
        }
    }

    /// Log marginal likelihood of the standardized targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len();
        let fit_term: f64 = self
            .train_y
            .iter()
            .zip(&self.alpha)
            .map(|(y, a)| (y - self.prior_mean) / self.y_scale * a)
            .sum();
        let log_det: f64 = (0..n).map(|i| self.factor[i * n + i].ln()).sum();
        -0.5 * fit_term - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
    }
}
