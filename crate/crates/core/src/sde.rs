//! Monte Carlo layer for `dR = (θ + σα(X, t))R dt + σR dB`.
//!
//! `α` is a function of the log coordinate `X = ln R - (θ - σ²/2)t`, in
//! which `dX = σα dt + σ dB`. The Girsanov log-density
//! `L_t = -(1/2)∫α² ds - ∫α dB` is accumulated with left-point sums and
//! compared against the potential `Z` with `∂Z/∂x = α/σ`,
//! `∂Z/∂t = -(σ/2)α_x - α²/2`: whenever `α` solves the mean-correction
//! Burgers equation, `L_t = -[Z(X_t, t) - Z(X_0, 0)]` path by path.

use std::collections::hash_map::DefaultHasher;
use std::f64::consts::PI;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::{analyze_fn, grid_node, CoeffTrajectory, FourierState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Plain Euler–Maruyama on R.
    Euler,
    /// Euler on X, then `R = r0/|r0| · exp(X + (θ - σ²/2)t)`.
    LogEuler,
    /// `R_t = r0 exp(σB̃_t - σ²t/2)`, exact under the drift-free measure.
    ExactQ,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Euler => "euler",
            Scheme::LogEuler => "log_euler",
            Scheme::ExactQ => "exact_q",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "euler" => Ok(Scheme::Euler),
            "log_euler" => Ok(Scheme::LogEuler),
            "exact_q" => Ok(Scheme::ExactQ),
            other => Err(format!(
                "unknown scheme `{other}` (expected euler, log_euler or exact_q)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdeParams {
    pub theta: f64,
    pub sigma: f64,
    pub r0: f64,
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    pub master_seed: u64,
}

impl SdeParams {
    pub fn validate(&self) -> Result<()> {
        if !self.theta.is_finite() {
            return Err(Error::config("theta", "must be finite"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::config(
                "sigma",
                "volatility must be positive and finite",
            ));
        }
        if !(self.r0 != 0.0 && self.r0.is_finite()) {
            return Err(Error::config(
                "r0",
                "initial value must be finite and non-zero",
            ));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::config(
                "T",
                "horizon must be non-negative and finite",
            ));
        }
        if self.steps < 1 {
            return Err(Error::config("steps", "at least one time step is required"));
        }
        if self.paths < 1 {
            return Err(Error::config("paths", "at least one path is required"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt()
    }

    /// `(θ - σ²/2) t`, the deterministic part removed by the log coordinate.
    fn log_drift(&self, t: f64) -> f64 {
        (self.theta - 0.5 * self.sigma * self.sigma) * t
    }
}

/// `α(x, t)` in the log coordinate, extended 2π-periodically in `x`.
#[derive(Clone)]
pub enum AlphaField {
    Zero,
    Constant(f64),
    Spectral(SpectralAlpha),
    Custom(CustomAlpha),
}

/// Solver output read in the equation's own time, linearly interpolated
/// between stored steps.
#[derive(Debug, Clone)]
pub struct SpectralAlpha {
    states: Vec<FourierState>,
    delta: f64,
}

#[derive(Clone)]
pub struct CustomAlpha {
    label: String,
    f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for AlphaField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// `x` mapped into `[-π, π)`.
pub fn wrap_period(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

impl AlphaField {
    pub fn from_trajectory(trajectory: &CoeffTrajectory) -> Self {
        AlphaField::Spectral(SpectralAlpha {
            states: trajectory.paper_time_states(),
            delta: trajectory.config.delta,
        })
    }

    pub fn custom(
        label: impl Into<String>,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        AlphaField::Custom(CustomAlpha {
            label: label.into(),
            f: Arc::new(f),
        })
    }

    pub fn label(&self) -> String {
        match self {
            AlphaField::Zero => "zero".into(),
            AlphaField::Constant(a) => format!("constant({a})"),
            AlphaField::Spectral(s) => format!(
                "spectral(N={}, n={}, delta={})",
                s.states[0].order(),
                s.states.len() - 1,
                s.delta
            ),
            AlphaField::Custom(c) => format!("custom({})", c.label),
        }
    }

    /// Whether evaluation needs the path's position (and hence R > 0).
    pub fn is_state_dependent(&self) -> bool {
        matches!(self, AlphaField::Spectral(_) | AlphaField::Custom(_))
    }

    /// Largest time at which the field is defined, if bounded.
    pub fn horizon(&self) -> Option<f64> {
        match self {
            AlphaField::Spectral(s) => Some(s.horizon()),
            _ => None,
        }
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        match self {
            AlphaField::Zero => 0.0,
            AlphaField::Constant(a) => *a,
            AlphaField::Spectral(s) => s.eval(wrap_period(x), t),
            AlphaField::Custom(c) => (c.f)(wrap_period(x), t),
        }
    }

    /// Fourier band of `α(·, t)`. Spectral fields keep their own order;
    /// custom fields are sampled on `grid_size` nodes and truncated to `order`.
    pub fn band_at(&self, t: f64, order: usize, grid_size: usize) -> Result<FourierState> {
        let mut band = match self {
            AlphaField::Zero => FourierState::zeros(order, t),
            AlphaField::Constant(a) => FourierState::constant(order, *a),
            AlphaField::Spectral(s) => s.band_at(t),
            AlphaField::Custom(c) => analyze_fn(order, grid_size, |x| (c.f)(x, t))?,
        };
        band.t = t;
        Ok(band)
    }

    /// Identity of the field's content, used to match a potential with the
    /// field it was built from.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        match self {
            AlphaField::Zero => 0u8.hash(&mut h),
            AlphaField::Constant(a) => {
                1u8.hash(&mut h);
                a.to_bits().hash(&mut h);
            }
            AlphaField::Spectral(s) => {
                2u8.hash(&mut h);
                s.delta.to_bits().hash(&mut h);
                for st in &s.states {
                    for c in st.coeffs() {
                        c.re.to_bits().hash(&mut h);
                        c.im.to_bits().hash(&mut h);
                    }
                }
            }
            AlphaField::Custom(c) => {
                3u8.hash(&mut h);
                c.label.hash(&mut h);
            }
        }
        h.finish()
    }
}

impl SpectralAlpha {
    pub fn states(&self) -> &[FourierState] {
        &self.states
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn horizon(&self) -> f64 {
        (self.states.len() - 1) as f64 * self.delta
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let last = self.states.len() - 1;
        if last == 0 || t <= 0.0 {
            return (0, 0.0);
        }
        let pos = t / self.delta;
        let j = (pos.floor() as usize).min(last - 1);
        let w = (pos - j as f64).clamp(0.0, 1.0);
        (j, w)
    }

    fn eval(&self, x: f64, t: f64) -> f64 {
        let (j, w) = self.locate(t);
        let left = self.states[j].eval(x);
        if w == 0.0 {
            left
        } else {
            (1.0 - w) * left + w * self.states[j + 1].eval(x)
        }
    }

    fn band_at(&self, t: f64) -> FourierState {
        let (j, w) = self.locate(t);
        if w == 0.0 {
            return self.states[j].clone();
        }
        let coeffs = self.states[j]
            .coeffs()
            .iter()
            .zip(self.states[j + 1].coeffs())
            .map(|(a, b)| a * (1.0 - w) + b * w)
            .collect();
        FourierState::from_coeffs(self.states[j].order(), coeffs, t)
            .expect("interpolated band keeps its length")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PathStatus {
    Ok,
    /// R overflowed or became NaN.
    NonFinite {
        step: usize,
    },
    /// R reached zero or changed sign while α needed the log coordinate.
    SignLost {
        step: usize,
    },
}

#[derive(Debug, Clone)]
pub struct SamplePath {
    /// Brownian increments `ΔB_j ~ N(0, δ)`, `j = 0..steps`.
    pub increments: Vec<f64>,
    /// `R_j`, `j = 0..=steps`. Entries after a failure are NaN.
    pub r: Vec<f64>,
    pub status: PathStatus,
}

impl SamplePath {
    pub fn is_ok(&self) -> bool {
        self.status == PathStatus::Ok
    }
}

#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub scheme: Scheme,
    pub params: SdeParams,
    pub paths: Vec<SamplePath>,
}

impl PathEnsemble {
    pub fn excluded(&self) -> usize {
        self.paths.iter().filter(|p| !p.is_ok()).count()
    }
}

/// Plain Euler–Maruyama on `R`.
pub fn simulate_em(params: &SdeParams, alpha: &AlphaField) -> Result<PathEnsemble> {
    simulate(params, alpha, Scheme::Euler)
}

/// Exact lognormal sampling under the drift-free measure.
pub fn simulate_exact_q(params: &SdeParams) -> Result<PathEnsemble> {
    simulate(params, &AlphaField::Zero, Scheme::ExactQ)
}

/// Simulates every path of the ensemble. Path `p` draws its increments from
/// ChaCha8 stream `p` under `master_seed`, so the result does not depend on
/// how paths are scheduled across threads.
pub fn simulate(params: &SdeParams, alpha: &AlphaField, scheme: Scheme) -> Result<PathEnsemble> {
    params.validate()?;
    if scheme != Scheme::ExactQ && alpha.is_state_dependent() {
        if params.r0 <= 0.0 {
            return Err(Error::config(
                "r0",
                "a state-dependent alpha needs r0 > 0 (log coordinate)",
            ));
        }
        if let Some(h) = alpha.horizon() {
            if h + 1e-9 * h.max(1.0) < params.horizon {
                return Err(Error::TrajectoryTooShort {
                    available: h,
                    requested: params.horizon,
                });
            }
        }
    }
    let paths = (0..params.paths)
        .into_par_iter()
        .map(|p| simulate_path(params, alpha, scheme, p))
        .collect();
    Ok(PathEnsemble {
        scheme,
        params: params.clone(),
        paths,
    })
}

fn brownian_increments(params: &SdeParams, path: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.master_seed);
    rng.set_stream(path as u64);
    let scale = params.dt().sqrt();
    (0..params.steps)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// A step-halving pair driven by the same Brownian paths: the fine
/// ensemble uses `2·steps` increments, the coarse one sums them in pairs.
pub fn simulate_halving_pair(
    params: &SdeParams,
    alpha: &AlphaField,
    scheme: Scheme,
) -> Result<(PathEnsemble, PathEnsemble)> {
    let fine_params = SdeParams {
        steps: 2 * params.steps,
        ..params.clone()
    };
    let fine = simulate(&fine_params, alpha, scheme)?;
    let paths = fine
        .paths
        .par_iter()
        .map(|p| {
            let increments = p.increments.chunks(2).map(|c| c[0] + c[1]).collect();
            integrate_path(params, alpha, scheme, increments)
        })
        .collect();
    let coarse = PathEnsemble {
        scheme,
        params: params.clone(),
        paths,
    };
    Ok((coarse, fine))
}

fn simulate_path(
    params: &SdeParams,
    alpha: &AlphaField,
    scheme: Scheme,
    path: usize,
) -> SamplePath {
    integrate_path(params, alpha, scheme, brownian_increments(params, path))
}

fn integrate_path(
    params: &SdeParams,
    alpha: &AlphaField,
    scheme: Scheme,
    increments: Vec<f64>,
) -> SamplePath {
    let dt = params.dt();
    let sigma = params.sigma;
    let steps = params.steps;
    let mut r = Vec::with_capacity(steps + 1);
    r.push(params.r0);
    let mut status = PathStatus::Ok;
    match scheme {
        Scheme::Euler => {
            let needs_x = alpha.is_state_dependent();
            for (j, db) in increments.iter().enumerate() {
                let t = params.time(j);
                let rj = r[j];
                let a = if needs_x {
                    if rj <= 0.0 {
                        status = PathStatus::SignLost { step: j };
                        break;
                    }
                    alpha.eval(rj.ln() - params.log_drift(t), t)
                } else {
                    alpha.eval(0.0, t)
                };
                let next = rj + (params.theta + sigma * a) * rj * dt + sigma * rj * db;
                if !next.is_finite() {
                    status = PathStatus::NonFinite { step: j + 1 };
                    break;
                }
                r.push(next);
            }
        }
        Scheme::LogEuler => {
            let sign = params.r0.signum();
            let mut x = params.r0.abs().ln();
            for (j, db) in increments.iter().enumerate() {
                let t = params.time(j);
                x += sigma * alpha.eval(x, t) * dt + sigma * db;
                let next = sign * (x + params.log_drift(params.time(j + 1))).exp();
                if !next.is_finite() {
                    status = PathStatus::NonFinite { step: j + 1 };
                    break;
                }
                r.push(next);
            }
        }
        Scheme::ExactQ => {
            let mut b = 0.0;
            for (j, db) in increments.iter().enumerate() {
                b += db;
                let t = params.time(j + 1);
                let next = params.r0 * (sigma * b - 0.5 * sigma * sigma * t).exp();
                if !next.is_finite() {
                    status = PathStatus::NonFinite { step: j + 1 };
                    break;
                }
                r.push(next);
            }
        }
    }
    r.resize(steps + 1, f64::NAN);
    SamplePath {
        increments,
        r,
        status,
    }
}

/// Fraction of all `(path, time)` samples with `R·r0 > 0`. Samples of
/// failed paths count as sign losses.
pub fn sign_fraction(ensemble: &PathEnsemble) -> f64 {
    let r0 = ensemble.params.r0;
    let total: usize = ensemble.paths.iter().map(|p| p.r.len()).sum();
    let same: usize = ensemble
        .paths
        .iter()
        .map(|p| p.r.iter().filter(|&&v| v * r0 > 0.0).count())
        .sum();
    same as f64 / total as f64
}

/// `X_j = ln R_j - (θ - σ²/2) t_j` per path; excluded paths yield an empty
/// vector.
pub fn x_transform(ensemble: &PathEnsemble) -> Result<Vec<Vec<f64>>> {
    let params = &ensemble.params;
    ensemble
        .paths
        .iter()
        .enumerate()
        .map(|(p, path)| {
            if !path.is_ok() {
                return Ok(Vec::new());
            }
            path.r
                .iter()
                .enumerate()
                .map(|(j, &rj)| {
                    if rj <= 0.0 || !rj.is_finite() {
                        Err(Error::SignViolation {
                            path: p,
                            step: j,
                            value: rj,
                        })
                    } else {
                        Ok(rj.ln() - params.log_drift(params.time(j)))
                    }
                })
                .collect()
        })
        .collect()
}

/// Inverse of [`x_transform`] for positive paths.
pub fn r_from_x(x: &[f64], params: &SdeParams) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(j, &xj)| (xj + params.log_drift(params.time(j))).exp())
        .collect()
}

/// `L_j = -Σ_{i<j} [α(X_i, t_i)² δ/2 + α(X_i, t_i) ΔB_i]` per path, at every
/// grid time; excluded paths yield an empty vector.
pub fn girsanov_log_density(ensemble: &PathEnsemble, alpha: &AlphaField) -> Result<Vec<Vec<f64>>> {
    let params = &ensemble.params;
    for (p, path) in ensemble.paths.iter().enumerate() {
        if path.increments.len() != params.steps {
            return Err(Error::Contract(format!(
                "path {p} stores {} increments, expected {}",
                path.increments.len(),
                params.steps
            )));
        }
    }
    let xs = if alpha.is_state_dependent() {
        Some(x_transform(ensemble)?)
    } else {
        None
    };
    let dt = params.dt();
    Ok(ensemble
        .paths
        .iter()
        .enumerate()
        .map(|(p, path)| {
            if !path.is_ok() {
                return Vec::new();
            }
            let mut out = Vec::with_capacity(params.steps + 1);
            let mut acc = 0.0;
            out.push(acc);
            for (j, db) in path.increments.iter().enumerate() {
                let t = params.time(j);
                let x = xs.as_ref().map_or(0.0, |xs| xs[p][j]);
                let a = alpha.eval(x, t);
                acc -= 0.5 * a * a * dt + a * db;
                out.push(acc);
            }
            out
        })
        .collect())
}

/// Layout of the space-time table on which `Z` is built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeGrid {
    /// Spatial nodes on `[-π, π)`.
    pub grid_size: usize,
    /// Band kept for sampled (custom) fields.
    pub order: usize,
    pub n_steps: usize,
    pub horizon: f64,
}

impl SpaceTimeGrid {
    /// The time grid a spectral field was solved on.
    pub fn matching(alpha: &AlphaField, grid_size: usize, fallback: SpaceTimeGrid) -> Self {
        match alpha {
            AlphaField::Spectral(s) => SpaceTimeGrid {
                grid_size,
                order: s.states[0].order(),
                n_steps: s.states.len() - 1,
                horizon: s.horizon(),
            },
            _ => SpaceTimeGrid {
                grid_size,
                ..fallback
            },
        }
    }

    fn delta(&self) -> f64 {
        if self.n_steps == 0 {
            0.0
        } else {
            self.horizon / self.n_steps as f64
        }
    }
}

/// Potential `Z(x, t)` with `Z(x0, 0) = 0`.
#[derive(Debug, Clone)]
pub struct ZField {
    pub sigma: f64,
    pub x0: f64,
    pub layout: SpaceTimeGrid,
    /// Band of α at each layout time.
    pub bands: Vec<FourierState>,
    /// `∫₀^{t_j} [-(σ/2)α_x(x0, s) - α(x0, s)²/2] ds` (composite trapezoid).
    pub time_integral: Vec<f64>,
    /// `values[j][m] = Z(x_m, t_j)`.
    pub values: Vec<Vec<f64>>,
    /// Largest |mean of α| over time; non-zero means Z carries a term linear in x.
    pub mean_drift: f64,
    alpha_fingerprint: u64,
}

/// `∫_{x0}^{x} Σ_k c_k e^{ikξ} dξ`, mode by mode.
fn band_antiderivative(band: &FourierState, x: f64, x0: f64) -> f64 {
    let mut acc = band.get(0).re * (x - x0);
    for k in 1..=band.order() as isize {
        let kf = k as f64;
        let diff = Complex64::cis(kf * x) - Complex64::cis(kf * x0);
        acc += 2.0 * (band.get(k) * diff / Complex64::new(0.0, kf)).re;
    }
    acc
}

/// Builds `Z` from `∂Z/∂x = α/σ` at every layout time and
/// `∂Z/∂t = -(σ/2)α_x - α²/2` along the anchor line `x = x0`.
pub fn reconstruct_z(
    alpha: &AlphaField,
    sigma: f64,
    x0: f64,
    layout: SpaceTimeGrid,
) -> Result<ZField> {
    if !(sigma > 0.0) {
        return Err(Error::config("sigma", "volatility must be positive"));
    }
    if layout.grid_size < 2 * layout.order + 1 {
        return Err(Error::Aliasing {
            grid: layout.grid_size,
            order: layout.order,
            need: 2 * layout.order + 1,
        });
    }
    let delta = layout.delta();
    let bands = (0..=layout.n_steps)
        .map(|j| alpha.band_at(j as f64 * delta, layout.order, layout.grid_size))
        .collect::<Result<Vec<_>>>()?;
    let anchor_rate: Vec<f64> = bands
        .iter()
        .map(|b| -0.5 * sigma * b.eval_derivative(x0, 1) - 0.5 * b.eval(x0).powi(2))
        .collect();
    let mut time_integral = Vec::with_capacity(bands.len());
    time_integral.push(0.0);
    for j in 1..bands.len() {
        let prev = time_integral[j - 1];
        time_integral.push(prev + 0.5 * delta * (anchor_rate[j - 1] + anchor_rate[j]));
    }
    let values = bands
        .iter()
        .zip(&time_integral)
        .map(|(b, g)| {
            (0..layout.grid_size)
                .map(|m| band_antiderivative(b, grid_node(m, layout.grid_size), x0) / sigma + g)
                .collect()
        })
        .collect();
    let mean_drift = bands.iter().map(|b| b.get(0).re.abs()).fold(0.0, f64::max);
    Ok(ZField {
        sigma,
        x0,
        layout,
        bands,
        time_integral,
        values,
        mean_drift,
        alpha_fingerprint: alpha.fingerprint(),
    })
}

impl ZField {
    pub fn has_linear_term(&self) -> bool {
        self.mean_drift != 0.0
    }

    fn at_level(&self, j: usize, x: f64) -> f64 {
        band_antiderivative(&self.bands[j], x, self.x0) / self.sigma + self.time_integral[j]
    }

    /// `Z(x, t)` for any real `x` (no periodic wrap: the mean of α makes Z
    /// grow linearly), linear in `t` between layout times.
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let delta = self.layout.delta();
        if self.layout.n_steps == 0 || t <= 0.0 {
            return self.at_level(0, x);
        }
        let pos = t / delta;
        let j = (pos.floor() as usize).min(self.layout.n_steps - 1);
        let w = (pos - j as f64).clamp(0.0, 1.0);
        if w == 0.0 {
            self.at_level(j, x)
        } else if w == 1.0 {
            self.at_level(j + 1, x)
        } else {
            (1.0 - w) * self.at_level(j, x) + w * self.at_level(j + 1, x)
        }
    }

    /// `max |∂_t(α/σ) - ∂_x(-(σ/2)α_x - α²/2)|` over interior layout times
    /// and grid nodes: the compatibility condition of the two equations
    /// defining Z, which holds exactly when α solves the mean-correction
    /// equation. Time derivatives are central differences.
    pub fn mixed_partials_residual(&self) -> Result<f64> {
        let n = self.layout.n_steps;
        if n < 2 {
            return Err(Error::Contract(
                "mixed-partials check needs at least three time levels".into(),
            ));
        }
        let delta = self.layout.delta();
        let sigma = self.sigma;
        let m = self.layout.grid_size;
        let worst = (1..n)
            .into_par_iter()
            .map(|j| {
                let (prev, band, next) = (&self.bands[j - 1], &self.bands[j], &self.bands[j + 1]);
                (0..m)
                    .map(|i| {
                        let x = grid_node(i, m);
                        let a_t = (next.eval(x) - prev.eval(x)) / (2.0 * delta);
                        let a = band.eval(x);
                        let a_x = band.eval_derivative(x, 1);
                        let a_xx = band.eval_derivative(x, 2);
                        let flux_x = -0.5 * sigma * a_xx - a * a_x;
                        (a_t / sigma - flux_x).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(0.0, f64::max);
        Ok(worst)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualStats {
    /// `|L_n + Z(X_n, T) - Z(X_0, 0)|` for each included path, in path order.
    pub residuals: Vec<f64>,
    pub mean: f64,
    pub max: f64,
}

impl ResidualStats {
    /// `mean(coarse) / mean(fine)` for a step-halving pair.
    pub fn halving_ratio(coarse: &ResidualStats, fine: &ResidualStats) -> f64 {
        coarse.mean / fine.mean
    }
}

/// Compares the endpoint of the log-density with `-[Z(X_T, T) - Z(X_0, 0)]`
/// on every included path.
pub fn path_independence_residual(
    ensemble: &PathEnsemble,
    z: &ZField,
    alpha: &AlphaField,
) -> Result<ResidualStats> {
    let params = &ensemble.params;
    if z.alpha_fingerprint != alpha.fingerprint() {
        return Err(Error::Contract(format!(
            "potential was not built from {}",
            alpha.label()
        )));
    }
    if z.sigma != params.sigma {
        return Err(Error::Contract(format!(
            "potential uses sigma = {} but the ensemble uses {}",
            z.sigma, params.sigma
        )));
    }
    let covered = z.layout.horizon;
    if alpha.is_state_dependent() && covered + 1e-9 * covered.max(1.0) < params.horizon {
        return Err(Error::TrajectoryTooShort {
            available: covered,
            requested: params.horizon,
        });
    }
    let xs = x_transform(ensemble)?;
    let log_density = girsanov_log_density(ensemble, alpha)?;
    let t_end = params.horizon;
    let residuals: Vec<f64> = xs
        .iter()
        .zip(&log_density)
        .filter(|(x, _)| !x.is_empty())
        .map(|(x, l)| {
            let dz = z.eval(x[params.steps], t_end) - z.eval(x[0], 0.0);
            (l[params.steps] + dz).abs()
        })
        .collect();
    let (mean, _) = mean_and_se(&residuals);
    let max = residuals.iter().cloned().fold(0.0, f64::max);
    Ok(ResidualStats {
        residuals,
        mean,
        max,
    })
}

/// Sample mean and its standard error.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Aggregates written to the ensemble summary file.
#[derive(Debug, Clone, Serialize)]
#[allow(non_snake_case)]
pub struct EnsembleSummary {
    pub paths: usize,
    pub steps: usize,
    pub scheme: Scheme,
    pub sign_fraction: f64,
    pub mean_RT: f64,
    pub se_RT: f64,
    pub density_mean: Option<f64>,
    pub density_se: Option<f64>,
    pub pi_residual_mean: Option<f64>,
    pub pi_residual_max: Option<f64>,
    pub excluded_paths: usize,
}

pub fn summarize(
    ensemble: &PathEnsemble,
    log_density: Option<&[Vec<f64>]>,
    residual: Option<&ResidualStats>,
) -> EnsembleSummary {
    let steps = ensemble.params.steps;
    let terminal: Vec<f64> = ensemble
        .paths
        .iter()
        .filter(|p| p.is_ok())
        .map(|p| p.r[steps])
        .collect();
    let (mean_rt, se_rt) = mean_and_se(&terminal);
    let density = log_density.map(|ld| {
        let d: Vec<f64> = ld
            .iter()
            .filter(|l| !l.is_empty())
            .map(|l| l[steps].exp())
            .collect();
        mean_and_se(&d)
    });
    EnsembleSummary {
        paths: ensemble.params.paths,
        steps,
        scheme: ensemble.scheme,
        sign_fraction: sign_fraction(ensemble),
        mean_RT: mean_rt,
        se_RT: se_rt,
        density_mean: density.map(|d| d.0),
        density_se: density.map(|d| d.1),
        pi_residual_mean: residual.map(|r| r.mean),
        pi_residual_max: residual.map(|r| r.max),
        excluded_paths: ensemble.excluded(),
    }
}
