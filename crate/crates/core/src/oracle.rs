//! Independent ground truth for the Burgers dynamics on the periodic domain.
//!
//! All solvers here target the standard, dissipative orientation
//! `u_s + u u_x = ν u_xx`. The mean-correction equation maps onto it through
//! `u(x, s) = -σ α(x, T - s)` with `ν = σ²/2` (see [`time_reversal_map`]).

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::{grid_node, CoeffTrajectory, FourierState, GridFunction};

/// Mean magnitude (relative to the data scale) accepted as "zero mean".
const ZERO_MEAN_TOL: f64 = 1e-12;

/// exp(-700) is still a normal double.
const MIN_LOG_PHI: f64 = -700.0;

/// Smallest grid the reference solver accepts.
pub const MIN_FD_RESOLUTION: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViscousParams {
    pub nu: f64,
    pub horizon: f64,
}

impl ViscousParams {
    pub fn new(nu: f64, horizon: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::config("nu", "viscosity must be positive and finite"));
        }
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::config(
                "T",
                "horizon must be non-negative and finite",
            ));
        }
        Ok(ViscousParams { nu, horizon })
    }

    /// `ν = σ²/2`.
    pub fn from_sigma(sigma: f64, horizon: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::config(
                "sigma",
                "volatility must be positive and finite",
            ));
        }
        Self::new(sigma * sigma / 2.0, horizon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    HopfCole,
    ReferenceFd,
}

impl fmt::Display for OracleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleMethod::HopfCole => "hopf_cole",
            OracleMethod::ReferenceFd => "reference_fd",
        })
    }
}

impl std::str::FromStr for OracleMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "hopf_cole" => Ok(OracleMethod::HopfCole),
            "reference_fd" => Ok(OracleMethod::ReferenceFd),
            other => Err(format!(
                "unknown method `{other}` (expected hopf_cole or reference_fd)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub grid: GridFunction,
    pub method: OracleMethod,
    /// Number of points of the internal grid.
    pub resolution: usize,
    pub est_error: f64,
    /// Time step used by the reference solver.
    pub step: Option<f64>,
}

#[derive(Serialize)]
struct Sidecar {
    method: OracleMethod,
    resolution: usize,
    est_error: f64,
}

impl OracleSolution {
    /// `{"method": ..., "resolution": ..., "est_error": ...}`
    pub fn sidecar_json(&self) -> String {
        serde_json::to_string(&Sidecar {
            method: self.method,
            resolution: self.resolution,
            est_error: self.est_error,
        })
        .expect("sidecar is plain data")
    }
}

/// Solution of the standard-orientation equation as a coefficient sequence
/// at `s_j = j·δ`.
#[derive(Debug, Clone)]
pub struct StandardTrajectory {
    pub states: Vec<FourierState>,
    pub delta: f64,
    pub nu: f64,
}

impl StandardTrajectory {
    pub fn final_state(&self) -> &FourierState {
        self.states.last().expect("non-empty trajectory")
    }
}

/// `v(x, s) = -σ α(x, T - s)` for `s ∈ [0, T]`.
///
/// `T` must coincide with a stored time of the trajectory (read in the
/// equation's own time, see [`CoeffTrajectory::paper_time_states`]).
pub fn time_reversal_map(trajectory: &CoeffTrajectory, horizon: f64) -> Result<StandardTrajectory> {
    let config = &trajectory.config;
    let available = trajectory.final_time();
    let sigma = config.sigma;
    if !(horizon >= 0.0) {
        return Err(Error::config("T", "horizon must be non-negative"));
    }
    let last = if config.delta > 0.0 {
        (horizon / config.delta).round()
    } else {
        0.0
    };
    let tol = 1e-9 * horizon.max(1.0);
    if last > config.n_steps as f64 || horizon > available + tol {
        return Err(Error::TrajectoryTooShort {
            available,
            requested: horizon,
        });
    }
    let last = last as usize;
    if (config.time(last) - horizon).abs() > tol {
        return Err(Error::Contract(format!(
            "horizon {horizon} is not a stored time (step {})",
            config.delta
        )));
    }
    let paper = trajectory.paper_time_states();
    let states = (0..=last)
        .map(|j| {
            let mut v = paper[last - j].scaled(-sigma);
            v.t = config.time(j);
            v
        })
        .collect();
    Ok(StandardTrajectory {
        states,
        delta: config.delta,
        nu: sigma * sigma / 2.0,
    })
}

/// Fourier modes of real grid samples on `x_m = -π + 2πm/M`, as `(k, c_k)`
/// with `|k| <= M/2`; an even grid's Nyquist coefficient is split evenly
/// between `±M/2` so the interpolant stays real.
fn analyze_modes(values: &[f64]) -> Vec<(isize, Complex64)> {
    let m = values.len();
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let scale = 1.0 / m as f64;
    let mut modes = Vec::with_capacity(m + 1);
    for (r, c) in buf.into_iter().enumerate() {
        let c = c * scale;
        if 2 * r == m {
            let half = m as isize / 2;
            let c = c * 0.5 * parity(half);
            modes.push((half, c));
            modes.push((-half, c));
            continue;
        }
        let k = if 2 * r < m {
            r as isize
        } else {
            r as isize - m as isize
        };
        modes.push((k, c * parity(k)));
    }
    modes
}

/// `(-1)^k`, the phase between nodes starting at `-π` and FFT nodes starting at 0.
fn parity(k: isize) -> f64 {
    if k.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Real samples of `Σ c_k e^{ikx}` on a `size`-point grid starting at `-π`.
fn synthesize_modes(modes: &[(isize, Complex64)], size: usize) -> Vec<f64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); size];
    for &(k, c) in modes {
        assert!(
            2 * k.unsigned_abs() <= size,
            "mode {k} does not fit a grid of {size}"
        );
        buf[k.rem_euclid(size as isize) as usize] += c * parity(k);
    }
    FftPlanner::new().plan_fft_inverse(size).process(&mut buf);
    buf.into_iter().map(|c| c.re).collect()
}

/// Heat-equation potential `φ(·, t)` in Fourier form.
struct HeatPotential {
    modes: Vec<(isize, Complex64)>,
    nu: f64,
    resolution: usize,
    est_error: f64,
}

impl HeatPotential {
    /// `φ(x, 0) = exp(-(1/2ν) ∫ u₀)`, then `φ̂_k(t) = φ̂_k(0) e^{-νk²t}`.
    fn build(initial: &GridFunction, t: f64, nu: f64) -> Result<Self> {
        let m = initial.len();
        let u_modes = analyze_modes(initial.values());
        let scale = initial.max_abs().max(1.0);
        let mean = u_modes
            .iter()
            .find(|(k, _)| *k == 0)
            .map(|(_, c)| c.re)
            .unwrap_or(0.0);
        if mean.abs() > ZERO_MEAN_TOL * scale {
            return Err(Error::NonZeroMean { mean });
        }
        let factor = 4usize.max(512usize.div_ceil(m));
        let fine = factor * m;

        let antiderivative: Vec<(isize, Complex64)> = u_modes
            .iter()
            .filter(|(k, _)| *k != 0)
            .map(|&(k, c)| (k, c / Complex64::new(0.0, k as f64)))
            .collect();
        let potential = synthesize_modes(&antiderivative, fine);
        let log_phi: Vec<f64> = potential.iter().map(|u| -u / (2.0 * nu)).collect();
        let top = log_phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let bottom = log_phi.iter().cloned().fold(f64::INFINITY, f64::min);
        if bottom - top < MIN_LOG_PHI {
            return Err(Error::Resolution(format!(
                "heat potential spans exp({:.1}); reduce the amplitude or raise nu",
                bottom - top
            )));
        }
        let phi0: Vec<f64> = log_phi.iter().map(|l| (l - top).exp()).collect();
        let phi_min = (bottom - top).exp();

        let mut modes = analyze_modes(&phi0);
        for (k, c) in modes.iter_mut() {
            let kf = *k as f64;
            *c *= (-nu * kf * kf * t).exp();
        }
        // resolution estimate: energy left in the upper half of the fine band,
        // plus whatever the input grid could not resolve
        let phi_tail: f64 = modes
            .iter()
            .filter(|(k, _)| 4 * k.unsigned_abs() > fine)
            .map(|(k, c)| c.norm() * (1.0 + k.unsigned_abs() as f64))
            .sum();
        let u_tail: f64 = u_modes
            .iter()
            .filter(|(k, _)| 4 * k.unsigned_abs() > m)
            .map(|(_, c)| c.norm())
            .sum();
        let est_error = 2.0 * nu * phi_tail / phi_min + u_tail + 1e-14 * initial.max_abs();
        Ok(HeatPotential {
            modes,
            nu,
            resolution: fine,
            est_error,
        })
    }

    /// `u = -2ν φ_x / φ` at `x`.
    fn velocity(&self, x: f64) -> f64 {
        let mut phi = 0.0;
        let mut phi_x = 0.0;
        for &(k, c) in &self.modes {
            let e = c * Complex64::cis(k as f64 * x);
            phi += e.re;
            phi_x += -(k as f64) * e.im;
        }
        -2.0 * self.nu * phi_x / phi
    }
}

/// Closed-form periodic solution of `u_t + u u_x = ν u_xx` via the
/// Hopf–Cole substitution `u = -2ν φ_x/φ`. Requires zero-mean data.
pub fn hopf_cole_solve(
    initial: &GridFunction,
    t: f64,
    params: &ViscousParams,
) -> Result<OracleSolution> {
    check_time(t)?;
    let heat = HeatPotential::build(initial, t, params.nu)?;
    let values = initial.nodes().map(|x| heat.velocity(x)).collect();
    Ok(OracleSolution {
        grid: GridFunction::new(values)?,
        method: OracleMethod::HopfCole,
        resolution: heat.resolution,
        est_error: heat.est_error,
        step: None,
    })
}

/// [`hopf_cole_solve`] for data with mean `ū`: solves for `w₀ = u₀ - ū` and
/// returns `u(x, t) = ū + w(x - ū t, t)`.
pub fn hopf_cole_solve_shifted(
    initial: &GridFunction,
    t: f64,
    params: &ViscousParams,
) -> Result<OracleSolution> {
    check_time(t)?;
    let mean = initial.mean();
    let centred = GridFunction::new(initial.values().iter().map(|v| v - mean).collect())?;
    let heat = HeatPotential::build(&centred, t, params.nu)?;
    let values = initial
        .nodes()
        .map(|x| mean + heat.velocity(x - mean * t))
        .collect();
    Ok(OracleSolution {
        grid: GridFunction::new(values)?,
        method: OracleMethod::HopfCole,
        resolution: heat.resolution,
        est_error: heat.est_error,
        step: None,
    })
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::config("T", "time must be non-negative and finite"));
    }
    Ok(())
}

/// Largest explicit step allowed on a grid of spacing `h`: `h²/(4ν)`.
pub fn fd_step_bound(resolution: usize, nu: f64) -> f64 {
    let h = 2.0 * PI / resolution as f64;
    h * h / (4.0 * nu)
}

/// Second-order central differences in conservation form, advanced with
/// Heun's method at the largest step `t/n <= h²/(4ν)`.
///
/// `resolution` must be an even multiple of the input grid size: the input
/// nodes are a subset of the solver grid, and a half-resolution run provides
/// the Richardson error estimate.
pub fn reference_fd_solve(
    initial: &GridFunction,
    t: f64,
    params: &ViscousParams,
    resolution: usize,
) -> Result<OracleSolution> {
    check_time(t)?;
    check_resolution(initial.len(), resolution)?;
    let bound = fd_step_bound(resolution, params.nu);
    let n = (t / bound).ceil() as usize;
    run_reference(initial, t, params.nu, resolution, n)
}

/// [`reference_fd_solve`] with a caller-imposed step. Refuses steps above the
/// stability bound and steps that do not divide `t`.
pub fn reference_fd_solve_with_step(
    initial: &GridFunction,
    t: f64,
    params: &ViscousParams,
    resolution: usize,
    step: f64,
) -> Result<OracleSolution> {
    check_time(t)?;
    check_resolution(initial.len(), resolution)?;
    let bound = fd_step_bound(resolution, params.nu);
    if !(step > 0.0) || step > bound {
        return Err(Error::UnstableStep {
            requested: step,
            bound,
        });
    }
    let n = (t / step).round();
    if (n * step - t).abs() > 1e-9 * t.max(step) {
        return Err(Error::Contract(format!(
            "step {step} does not divide t = {t}"
        )));
    }
    run_reference(initial, t, params.nu, resolution, n as usize)
}

fn check_resolution(grid: usize, resolution: usize) -> Result<()> {
    if resolution < MIN_FD_RESOLUTION {
        return Err(Error::config(
            "resolution",
            format!("reference grid needs at least {MIN_FD_RESOLUTION} points"),
        ));
    }
    if !resolution.is_multiple_of(2 * grid) {
        return Err(Error::config(
            "resolution",
            format!("{resolution} is not an even multiple of the {grid}-point input grid"),
        ));
    }
    Ok(())
}

fn run_reference(
    initial: &GridFunction,
    t: f64,
    nu: f64,
    resolution: usize,
    n_steps: usize,
) -> Result<OracleSolution> {
    let m = initial.len();
    let modes = analyze_modes(initial.values());
    let march = |size: usize, n: usize| -> Vec<f64> {
        let mut u = synthesize_modes(&modes, size);
        let step = if n > 0 { t / n as f64 } else { 0.0 };
        fd_march(&mut u, nu, 2.0 * PI / size as f64, step, n);
        let stride = size / m;
        (0..m).map(|i| u[i * stride]).collect()
    };
    let fine = march(resolution, n_steps);
    let half = resolution / 2;
    let coarse_steps = (t / fd_step_bound(half, nu)).ceil() as usize;
    let coarse = march(half, coarse_steps);
    let est_error = fine
        .iter()
        .zip(&coarse)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / 3.0;
    if let Some(index) = fine.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(OracleSolution {
        grid: GridFunction::new(fine)?,
        method: OracleMethod::ReferenceFd,
        resolution,
        est_error,
        step: Some(if n_steps > 0 { t / n_steps as f64 } else { 0.0 }),
    })
}

fn fd_march(u: &mut [f64], nu: f64, h: f64, dt: f64, n_steps: usize) {
    let len = u.len();
    let mut k1 = vec![0.0; len];
    let mut k2 = vec![0.0; len];
    let mut flux = vec![0.0; len];
    let mut stage = vec![0.0; len];
    for _ in 0..n_steps {
        fd_rhs(u, nu, h, &mut flux, &mut k1);
        for i in 0..len {
            stage[i] = u[i] + dt * k1[i];
        }
        fd_rhs(&stage, nu, h, &mut flux, &mut k2);
        for i in 0..len {
            u[i] = 0.5 * (u[i] + stage[i] + dt * k2[i]);
        }
    }
}

/// `-(F_{i+1/2} - F_{i-1/2})/h + ν (u_{i+1} - 2u_i + u_{i-1})/h²` with
/// `F_{i+1/2} = (u_i² + u_{i+1}²)/4`.
fn fd_rhs(u: &[f64], nu: f64, h: f64, flux: &mut [f64], out: &mut [f64]) {
    let len = u.len();
    for i in 0..len {
        let r = u[(i + 1) % len];
        flux[i] = (u[i] * u[i] + r * r) / 4.0;
    }
    let inv_h = 1.0 / h;
    let diff = nu / (h * h);
    for i in 0..len {
        let l = (i + len - 1) % len;
        let r = (i + 1) % len;
        out[i] = -(flux[i] - flux[l]) * inv_h + diff * (u[r] - 2.0 * u[i] + u[l]);
    }
}

/// Samples of a standard-orientation state on `M` nodes.
pub fn sample_state(state: &FourierState, grid_size: usize) -> Result<GridFunction> {
    GridFunction::new(
        (0..grid_size)
            .map(|m| state.eval(grid_node(m, grid_size)))
            .collect(),
    )
}
