//! Truncated Fourier (Galerkin) discretization of the time-reverse viscous
//! Burgers equation
//!
//! ```text
//! a_t = -(sigma^2 / 2) a_xx - sigma a a_x,      x in [-pi, pi) (periodic)
//! ```
//!
//! The solution is represented by the band `a^(k, t)`, `k = -N..=N`, of a
//! 2π-periodic real function. Products are projected back onto the band:
//! convolution terms whose partner index falls outside `[-N, N]` vanish.
//! Time is advanced with the explicit forward-difference recurrence
//!
//! ```text
//! a^(k, t_j) = (1 + s δ σ² k² / 2) a^(k, t_{j-1}) - s (δ σ i k / 2) Σ_p a^(p) a^(k-p)
//! ```
//!
//! with `s = +1` for [`Direction::PaperForward`] (the equation as written,
//! which amplifies mode `k` by `1 + δσ²k²/2` every step) and `s = -1` for
//! [`Direction::WellPosedReverse`] (the same equation stepped backwards in
//! time, i.e. the dissipative orientation).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficient magnitude above which [`evolve`] aborts.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

/// Relative tolerance for Hermitian symmetry and for the discarded imaginary
/// part of a synthesized grid.
pub const HERMITIAN_TOL: f64 = 1e-12;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// The recurrence exactly as derived: ill-posed, high modes grow.
    PaperForward,
    /// Both right-hand-side signs flipped: stepping the equation backwards
    /// from terminal data, which is the standard dissipative Burgers flow.
    WellPosedReverse,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::PaperForward => 1.0,
            Direction::WellPosedReverse => -1.0,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::PaperForward => "paper_forward",
            Direction::WellPosedReverse => "well_posed_reverse",
        })
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "paper_forward" => Ok(Direction::PaperForward),
            "well_posed_reverse" => Ok(Direction::WellPosedReverse),
            other => Err(format!(
                "unknown direction `{other}` (expected paper_forward or well_posed_reverse)"
            )),
        }
    }
}

/// Discretization parameters of a spectral solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralConfig {
    /// Truncation order N: modes `-N..=N` are kept.
    pub order: usize,
    pub sigma: f64,
    pub delta: f64,
    pub n_steps: usize,
    pub horizon: f64,
    /// Synthesis / quadrature grid size M.
    pub grid_size: usize,
    pub direction: Direction,
}

impl SpectralConfig {
    /// Builds a configuration with `δ = T / n` and the default grid `M = 4N`.
    pub fn new(
        order: usize,
        sigma: f64,
        horizon: f64,
        n_steps: usize,
        direction: Direction,
    ) -> Result<Self> {
        let delta = if n_steps > 0 {
            horizon / n_steps as f64
        } else {
            0.0
        };
        let config = SpectralConfig {
            order,
            sigma,
            delta,
            n_steps,
            horizon,
            grid_size: 4 * order.max(1),
            direction,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_grid_size(mut self, grid_size: usize) -> Result<Self> {
        self.grid_size = grid_size;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::config("N", "truncation order must be at least 1"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::config(
                "sigma",
                "volatility must be positive and finite",
            ));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::config(
                "T",
                "horizon must be non-negative and finite",
            ));
        }
        if self.grid_size < 2 * self.order + 1 {
            return Err(Error::config(
                "M",
                format!(
                    "grid size {} is below 2N+1 = {}",
                    self.grid_size,
                    2 * self.order + 1
                ),
            ));
        }
        if self.n_steps > 0 {
            if !(self.delta > 0.0 && self.delta.is_finite()) {
                return Err(Error::config("delta", "time step must be positive"));
            }
            let mismatch = (self.n_steps as f64 * self.delta - self.horizon).abs();
            if mismatch > 4.0 * f64::EPSILON * self.horizon {
                return Err(Error::config(
                    "delta",
                    format!(
                        "n * delta = {} does not match T = {}",
                        self.n_steps as f64 * self.delta,
                        self.horizon
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Time of step `j`, computed by multiplication.
    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.delta
    }

    /// Per-step amplification of the linear part for mode `k`.
    pub fn linear_factor(&self, k: isize) -> f64 {
        let k = k as f64;
        1.0 + self.direction.sign() * self.delta * self.sigma * self.sigma * k * k / 2.0
    }
}

/// Band of complex Fourier coefficients `a^(k)`, `k = -N..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierState {
    coeffs: Vec<Complex64>,
    pub t: f64,
    order: usize,
}

impl FourierState {
    pub fn zeros(order: usize, t: f64) -> Self {
        FourierState {
            coeffs: vec![Complex64::new(0.0, 0.0); 2 * order + 1],
            t,
            order,
        }
    }

    pub fn from_coeffs(order: usize, coeffs: Vec<Complex64>, t: f64) -> Result<Self> {
        if coeffs.len() != 2 * order + 1 {
            return Err(Error::Contract(format!(
                "{} coefficients supplied for order {order} (need {})",
                coeffs.len(),
                2 * order + 1
            )));
        }
        Ok(FourierState { coeffs, t, order })
    }

    /// `c` in mode 0, zero elsewhere.
    pub fn constant(order: usize, c: f64) -> Self {
        let mut s = Self::zeros(order, 0.0);
        s.set(0, Complex64::new(c, 0.0));
        s
    }

    /// `amplitude · sin(k x)`, i.e. `a^(±k) = ∓ i·amplitude/2`.
    pub fn sine_mode(order: usize, k: usize, amplitude: f64) -> Self {
        assert!(
            k >= 1 && k <= order,
            "sine mode {k} outside band 1..={order}"
        );
        let mut s = Self::zeros(order, 0.0);
        s.set(k as isize, Complex64::new(0.0, -amplitude / 2.0));
        s.set(-(k as isize), Complex64::new(0.0, amplitude / 2.0));
        s
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Coefficients ordered from mode `-N` to mode `N`.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn modes(&self) -> impl Iterator<Item = isize> {
        let n = self.order as isize;
        -n..=n
    }

    #[inline]
    pub fn get(&self, k: isize) -> Complex64 {
        self.coeffs[(k + self.order as isize) as usize]
    }

    #[inline]
    pub fn set(&mut self, k: isize, value: Complex64) {
        let idx = (k + self.order as isize) as usize;
        self.coeffs[idx] = value;
    }

    /// Coefficient if `k` lies in the band, zero otherwise.
    #[inline]
    pub fn get_or_zero(&self, k: isize) -> Complex64 {
        if k.unsigned_abs() <= self.order {
            self.get(k)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    pub fn max_modulus(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Wavenumber `k >= 0` of the pair `±k` with the largest modulus (ties
    /// resolved towards larger k).
    pub fn dominant_mode(&self) -> isize {
        let mut best = (0isize, -1.0);
        for k in 0..=self.order as isize {
            let m = self.get(k).norm().max(self.get(-k).norm());
            if m >= best.1 {
                best = (k, m);
            }
        }
        best.0
    }

    /// `max_k |a^(-k) - conj(a^(k))|`.
    pub fn hermitian_defect(&self) -> f64 {
        self.modes()
            .map(|k| (self.get(-k) - self.get(k).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs
            .iter()
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// `Σ_k |a^(k)|`, an upper bound for the sup norm of the synthesized function.
    pub fn l1_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    pub fn scaled(&self, factor: f64) -> FourierState {
        FourierState {
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
            t: self.t,
            order: self.order,
        }
    }

    /// Real value `Σ_k a^(k) e^{ikx}` of a Hermitian band.
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_derivative(x, 0)
    }

    /// `d^m/dx^m` of the synthesized real function at `x`, assuming
    /// Hermitian symmetry (only modes `k >= 0` are read).
    pub fn eval_derivative(&self, x: f64, m: u32) -> f64 {
        let z = Complex64::cis(x);
        let mut zk = Complex64::new(1.0, 0.0);
        let mut acc = if m == 0 { self.get(0).re } else { 0.0 };
        for k in 1..=self.order as isize {
            zk *= z;
            let factor = (I * k as f64).powu(m);
            acc += 2.0 * (factor * self.get(k) * zk).re;
        }
        acc
    }
}

/// Real samples of a periodic function on `x_m = -π + 2πm/M`, `m = 0..M`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if values.is_empty() {
            return Err(Error::Contract("empty grid".into()));
        }
        Ok(GridFunction { values })
    }

    pub fn from_fn(grid_size: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..grid_size).map(|m| f(grid_node(m, grid_size))).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let m = self.values.len();
        (0..m).map(move |i| grid_node(i, m))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Node `x_m = -π + 2πm/M`.
pub fn grid_node(m: usize, grid_size: usize) -> f64 {
    -PI + 2.0 * PI * m as f64 / grid_size as f64
}

/// `e^{ik x_m}` on the grid, built from an exactly indexed table of roots of
/// unity so that all modes share the same rounding.
struct GridPhases {
    roots: Vec<Complex64>,
}

impl GridPhases {
    fn new(grid_size: usize) -> Self {
        let roots = (0..grid_size)
            .map(|r| Complex64::cis(2.0 * PI * r as f64 / grid_size as f64))
            .collect();
        GridPhases { roots }
    }

    #[inline]
    fn phase(&self, k: isize, m: usize) -> Complex64 {
        let size = self.roots.len() as i128;
        let r = ((k as i128).rem_euclid(size) * m as i128 % size) as usize;
        let root = self.roots[r];
        // e^{-ikπ} = (-1)^k
        if k.rem_euclid(2) == 0 {
            root
        } else {
            -root
        }
    }
}

/// Initial band from grid samples: `a^(k,0) = (1/M) Σ_m α(x_m, 0) e^{-ik x_m}`,
/// the uniform rectangle rule for `(1/2π)∫ α e^{-ikx} dx`, symmetrized once.
pub fn init_coeffs(initial: &GridFunction, config: &SpectralConfig) -> Result<FourierState> {
    let grid_size = initial.len();
    let order = config.order;
    if grid_size < 2 * order + 1 {
        return Err(Error::Aliasing {
            grid: grid_size,
            order,
            need: 2 * order + 1,
        });
    }
    if grid_size != config.grid_size {
        return Err(Error::config(
            "M",
            format!(
                "grid has {grid_size} samples but the configuration expects {}",
                config.grid_size
            ),
        ));
    }
    if let Some(index) = initial.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(analyze(initial.values(), order))
}

/// Discrete Fourier analysis of real samples onto the band `-order..=order`.
fn analyze(values: &[f64], order: usize) -> FourierState {
    let grid_size = values.len();
    let phases = GridPhases::new(grid_size);
    let scale = 1.0 / grid_size as f64;
    let mut raw = FourierState::zeros(order, 0.0);
    for k in raw.modes() {
        let sum: Complex64 = values
            .iter()
            .enumerate()
            .map(|(m, &v)| phases.phase(k, m).conj() * v)
            .sum();
        raw.set(k, sum * scale);
    }
    let mut out = FourierState::zeros(order, 0.0);
    for k in raw.modes() {
        out.set(k, (raw.get(k) + raw.get(-k).conj()) * 0.5);
    }
    out
}

/// Band of a real function sampled on `grid_size` nodes, truncated to `order`.
pub fn analyze_fn(order: usize, grid_size: usize, f: impl Fn(f64) -> f64) -> Result<FourierState> {
    let grid = GridFunction::from_fn(grid_size, f)?;
    if grid_size < 2 * order + 1 {
        return Err(Error::Aliasing {
            grid: grid_size,
            order,
            need: 2 * order + 1,
        });
    }
    Ok(analyze(grid.values(), order))
}

/// Band-projected product: `c(k) = Σ_{p=-N}^{N} a(p) b(k-p)` for `|k| <= N`,
/// terms with `|k-p| > N` contribute nothing.
pub fn truncated_convolution(a: &FourierState, b: &FourierState) -> Result<FourierState> {
    if a.order != b.order {
        return Err(Error::OrderMismatch {
            left: a.order,
            right: b.order,
        });
    }
    Ok(convolve_band(a, b))
}

fn convolve_band(a: &FourierState, b: &FourierState) -> FourierState {
    let n = a.order as isize;
    let mut out = FourierState::zeros(a.order, a.t);
    for k in -n..=n {
        let lo = (k - n).max(-n);
        let hi = (k + n).min(n);
        let mut acc = Complex64::new(0.0, 0.0);
        for p in lo..=hi {
            acc += a.get(p) * b.get(k - p);
        }
        out.set(k, acc);
    }
    out
}

/// Right-hand side of the spectral ODE system,
/// `s·[(σ²/2) k² a(k) − (σ i k / 2) Σ_p a(p) a(k−p)]`, with `s` the direction sign.
/// Mode 0 is exactly zero.
pub fn spectral_rhs(state: &FourierState, config: &SpectralConfig) -> FourierState {
    let s = config.direction.sign();
    let sigma = config.sigma;
    let conv = convolve_band(state, state);
    let mut out = FourierState::zeros(state.order, state.t);
    for k in state.modes().filter(|&k| k != 0) {
        let kf = k as f64;
        let linear = state.get(k) * (sigma * sigma * kf * kf / 2.0);
        let nonlinear = I * conv.get(k) * (sigma * kf / 2.0);
        out.set(k, (linear - nonlinear) * s);
    }
    out
}

/// One step of the forward-difference recurrence. Mode 0 is copied unchanged.
pub fn galerkin_step(state: &FourierState, config: &SpectralConfig) -> FourierState {
    let s = config.direction.sign();
    let conv = convolve_band(state, state);
    let mut out = FourierState::zeros(state.order, state.t + config.delta);
    out.set(0, state.get(0));
    for k in state.modes().filter(|&k| k != 0) {
        let kf = k as f64;
        let growth = config.linear_factor(k);
        let coupling = s * config.delta * config.sigma * kf / 2.0;
        out.set(k, state.get(k) * growth - I * conv.get(k) * coupling);
    }
    out
}

/// Solved coefficient sequence at `t_j = j·δ`, `j = 0..=n`.
#[derive(Debug, Clone)]
pub struct CoeffTrajectory {
    pub states: Vec<FourierState>,
    pub config: SpectralConfig,
    /// `max_k |a^(k, t_j)|` per step.
    pub max_modulus: Vec<f64>,
}

/// Iterates [`galerkin_step`] `n` times. Aborts with [`Error::BlowUp`] as soon
/// as a coefficient exceeds [`BLOW_UP_THRESHOLD`] or stops being finite.
pub fn evolve(initial: &FourierState, config: &SpectralConfig) -> Result<CoeffTrajectory> {
    config.validate()?;
    if initial.order != config.order {
        return Err(Error::OrderMismatch {
            left: initial.order,
            right: config.order,
        });
    }
    let mut first = initial.clone();
    first.t = 0.0;
    let mut states = Vec::with_capacity(config.n_steps + 1);
    let mut max_modulus = Vec::with_capacity(config.n_steps + 1);
    max_modulus.push(first.max_modulus());
    states.push(first);
    for j in 1..=config.n_steps {
        let mut next = galerkin_step(&states[j - 1], config);
        next.t = config.time(j);
        let peak = next.max_modulus();
        if !next.is_finite() || !(peak <= BLOW_UP_THRESHOLD) {
            let mode = (0..=config.order as isize)
                .find(|&k| !(next.get(k).norm() + next.get(-k).norm()).is_finite())
                .unwrap_or_else(|| next.dominant_mode());
            return Err(Error::BlowUp {
                step: j,
                time: next.t,
                mode,
                magnitude: peak,
            });
        }
        max_modulus.push(peak);
        states.push(next);
    }
    Ok(CoeffTrajectory {
        states,
        config: config.clone(),
        max_modulus,
    })
}

impl CoeffTrajectory {
    pub fn final_state(&self) -> &FourierState {
        self.states
            .last()
            .expect("trajectory holds at least the initial state")
    }

    pub fn final_time(&self) -> f64 {
        self.final_state().t
    }

    /// The solution as a function of the equation's own time variable:
    /// unchanged for [`Direction::PaperForward`]; reversed for
    /// [`Direction::WellPosedReverse`], whose state `j` holds `α` at
    /// `t = (n - j)·δ`. Time stamps are rewritten as `i·δ`.
    pub fn paper_time_states(&self) -> Vec<FourierState> {
        let mut states = self.states.clone();
        if self.config.direction == Direction::WellPosedReverse {
            states.reverse();
        }
        for (i, s) in states.iter_mut().enumerate() {
            s.t = self.config.time(i);
        }
        states
    }

    /// Largest Hermitian defect over all stored states, relative to the
    /// largest coefficient modulus seen.
    pub fn relative_hermitian_defect(&self) -> f64 {
        let defect = self
            .states
            .iter()
            .map(FourierState::hermitian_defect)
            .fold(0.0, f64::max);
        let scale = self.max_modulus.iter().cloned().fold(0.0, f64::max);
        if scale == 0.0 {
            defect
        } else {
            defect / scale
        }
    }

    /// Estimate of the PDE residual `|α_t + (σ²/2)α_xx + σαα_x|` left by
    /// the discrete trajectory: the first-order time truncation `(δ/2)|α_tt|`
    /// (from second differences of stored states) plus the part of the
    /// nonlinear flux that the band projection discards.
    pub fn truncation_error_estimate(&self) -> f64 {
        let delta = self.config.delta;
        let time_part = if self.states.len() >= 3 {
            self.states
                .windows(3)
                .map(|w| {
                    w[0].coeffs
                        .iter()
                        .zip(&w[1].coeffs)
                        .zip(&w[2].coeffs)
                        .map(|((a, b), c)| (a - b * 2.0 + c).norm())
                        .sum::<f64>()
                })
                .fold(0.0, f64::max)
                / (2.0 * delta)
        } else {
            0.0
        };
        let sigma = self.config.sigma;
        let projection_part = self
            .states
            .iter()
            .map(|s| {
                let n = s.order as isize;
                let mut leak = 0.0;
                for k in (n + 1)..=(2 * n) {
                    for sign in [-1isize, 1] {
                        let kk = sign * k;
                        let mut acc = Complex64::new(0.0, 0.0);
                        for p in (kk - n).max(-n)..=(kk + n).min(n) {
                            acc += s.get(p) * s.get(kk - p);
                        }
                        leak += acc.norm() * sigma * k as f64 / 2.0;
                    }
                }
                leak
            })
            .fold(0.0, f64::max);
        time_part + projection_part
    }
}

/// Grid samples together with the size of the imaginary part that was
/// dropped when taking the real part.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub grid: GridFunction,
    pub imag_residual: f64,
}

/// `α_N(x_m) = Σ_k a^(k) e^{ik x_m}` on `grid_size` nodes.
pub fn synthesize(state: &FourierState, grid_size: usize) -> Result<Synthesis> {
    if grid_size < 2 * state.order + 1 {
        return Err(Error::Aliasing {
            grid: grid_size,
            order: state.order,
            need: 2 * state.order + 1,
        });
    }
    let scale = state.max_modulus();
    let tol = HERMITIAN_TOL * scale;
    let defect = state.hermitian_defect();
    if defect > tol {
        return Err(Error::Integrity(format!(
            "Hermitian defect {defect:e} exceeds {tol:e}"
        )));
    }
    let phases = GridPhases::new(grid_size);
    let mut values = Vec::with_capacity(grid_size);
    let mut imag_residual: f64 = 0.0;
    for m in 0..grid_size {
        let v: Complex64 = state
            .modes()
            .map(|k| state.get(k) * phases.phase(k, m))
            .sum();
        imag_residual = imag_residual.max(v.im.abs());
        values.push(v.re);
    }
    if imag_residual > tol {
        return Err(Error::Integrity(format!(
            "imaginary residual {imag_residual:e} exceeds {tol:e}"
        )));
    }
    Ok(Synthesis {
        grid: GridFunction::new(values)?,
        imag_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sin_state(order: usize) -> FourierState {
        FourierState::sine_mode(order, 1, 1.0)
    }

    fn cfg(order: usize, sigma: f64, delta: f64, direction: Direction) -> SpectralConfig {
        SpectralConfig::new(order, sigma, delta, 1, direction).unwrap()
    }

    #[test]
    fn constant_grid_has_only_mean_mode() {
        let config = cfg(4, 1.0, 0.01, Direction::PaperForward)
            .with_grid_size(16)
            .unwrap();
        let grid = GridFunction::new(vec![3.0; 16]).unwrap();
        let s = init_coeffs(&grid, &config).unwrap();
        assert_eq!(s.get(0), Complex64::new(3.0, 0.0));
        for k in s.modes().filter(|&k| k != 0) {
            assert!(s.get(k).norm() <= 1e-15, "mode {k}: {}", s.get(k));
        }
    }

    #[test]
    fn sine_grid_gives_analytic_pair() {
        let config = cfg(4, 1.0, 0.01, Direction::PaperForward)
            .with_grid_size(32)
            .unwrap();
        let grid = GridFunction::from_fn(32, f64::sin).unwrap();
        let s = init_coeffs(&grid, &config).unwrap();
        assert!((s.get(1) - Complex64::new(0.0, -0.5)).norm() <= 1e-14);
        assert!((s.get(-1) - Complex64::new(0.0, 0.5)).norm() <= 1e-14);
        for k in s.modes().filter(|k| k.abs() != 1) {
            assert!(s.get(k).norm() <= 1e-14);
        }
        assert_eq!(s.hermitian_defect(), 0.0);
    }

    #[test]
    fn init_rejects_aliasing_grid_and_nan() {
        let config = cfg(4, 1.0, 0.01, Direction::PaperForward);
        let short = GridFunction::new(vec![1.0; 8]).unwrap();
        assert!(matches!(
            init_coeffs(&short, &config),
            Err(Error::Aliasing { need: 9, .. })
        ));
        assert!(matches!(
            GridFunction::new(vec![0.0, f64::NAN, 1.0]),
            Err(Error::NonFinite { index: 1 })
        ));
        assert!(
            SpectralConfig::new(4, 1.0, 1.0, 10, Direction::PaperForward)
                .unwrap()
                .with_grid_size(8)
                .is_err()
        );
    }

    #[test]
    fn convolution_of_trivial_states() {
        let c = FourierState::constant(3, 1.5);
        let out = truncated_convolution(&c, &c).unwrap();
        assert_eq!(out.get(0), Complex64::new(2.25, 0.0));
        assert!(out
            .modes()
            .filter(|&k| k != 0)
            .all(|k| out.get(k).norm() == 0.0));

        let s = sin_state(2);
        let sq = truncated_convolution(&s, &s).unwrap();
        assert!((sq.get(0) - Complex64::new(0.5, 0.0)).norm() < 1e-16);
        assert!((sq.get(2) - Complex64::new(-0.25, 0.0)).norm() < 1e-16);
        assert!((sq.get(-2) - Complex64::new(-0.25, 0.0)).norm() < 1e-16);
        assert_eq!(sq.get(1).norm() + sq.get(-1).norm(), 0.0);
    }

    #[test]
    fn convolution_rejects_mismatched_orders() {
        let err = truncated_convolution(&sin_state(2), &sin_state(3)).unwrap_err();
        assert!(matches!(err, Error::OrderMismatch { left: 2, right: 3 }));
    }

    #[test]
    fn rhs_hand_values() {
        let config = cfg(2, 1.0, 0.01, Direction::PaperForward);
        let zero = spectral_rhs(&FourierState::zeros(2, 0.0), &config);
        assert_eq!(zero.max_modulus(), 0.0);
        let flat = spectral_rhs(&FourierState::constant(2, 0.7), &config);
        assert_eq!(flat.max_modulus(), 0.0);

        let r = spectral_rhs(&sin_state(2), &config);
        assert!((r.get(1) - Complex64::new(0.0, -0.25)).norm() < 1e-16);
        assert!((r.get(2) - Complex64::new(0.0, 0.25)).norm() < 1e-16);
        assert_eq!(r.get(0), Complex64::new(0.0, 0.0));
        assert!(r.hermitian_defect() < 1e-16);
    }

    #[test]
    fn step_hand_values() {
        let config = cfg(2, 1.0, 0.01, Direction::PaperForward);
        let next = galerkin_step(&sin_state(2), &config);
        assert!((next.get(1) - Complex64::new(0.0, -0.5025)).norm() < 1e-15);
        assert!((next.get(2) - Complex64::new(0.0, 0.0025)).norm() < 1e-15);

        let c = FourierState::constant(2, -4.25);
        for direction in [Direction::PaperForward, Direction::WellPosedReverse] {
            let out = galerkin_step(&c, &cfg(2, 3.0, 0.5, direction));
            assert_eq!(out.coeffs(), c.coeffs());
        }
        let z = galerkin_step(&FourierState::zeros(2, 0.0), &config);
        assert_eq!(z.max_modulus(), 0.0);
    }

    #[test]
    fn evolve_with_no_steps_returns_initial() {
        let config = SpectralConfig::new(3, 1.0, 0.0, 0, Direction::PaperForward).unwrap();
        let traj = evolve(&sin_state(3), &config).unwrap();
        assert_eq!(traj.states.len(), 1);
        assert_eq!(traj.states[0], sin_state(3));
    }

    #[test]
    fn evolve_reports_blow_up() {
        // mode 8 grows by 1 + 0.5·64/2 = 17 per step
        let config = SpectralConfig::new(8, 1.0, 50.0, 100, Direction::PaperForward).unwrap();
        let init = FourierState::sine_mode(8, 8, 1.0);
        match evolve(&init, &config) {
            Err(Error::BlowUp { step, mode, .. }) => {
                // 17^j / 2 > 1e12 first at j = 10
                assert_eq!(step, 10);
                assert_eq!(mode.abs(), 8);
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn synthesize_simple_states() {
        let g = synthesize(&FourierState::constant(3, 2.5), 16).unwrap();
        assert!(g.grid.values().iter().all(|&v| (v - 2.5).abs() < 1e-15));
        let g = synthesize(&sin_state(3), 32).unwrap();
        for (x, v) in g.grid.nodes().zip(g.grid.values()) {
            assert!((x.sin() - v).abs() <= 1e-14);
        }
        assert!(g.imag_residual <= 1e-15);
    }

    #[test]
    fn synthesize_rejects_non_hermitian() {
        let mut s = sin_state(2);
        s.set(2, Complex64::new(0.1, 0.0));
        assert!(matches!(synthesize(&s, 8), Err(Error::Integrity(_))));
    }

    #[test]
    fn pointwise_evaluation_matches_grid() {
        let s = analyze_fn(12, 64, |x| (x.cos()).exp()).unwrap();
        let g = synthesize(&s, 40).unwrap();
        for (x, v) in g.grid.nodes().zip(g.grid.values()) {
            assert!((s.eval(x) - v).abs() < 1e-13);
        }
        // derivative of exp(cos x) is -sin x exp(cos x)
        let x: f64 = 0.37;
        let exact = -x.sin() * x.cos().exp();
        let d = s.eval_derivative(x, 1);
        assert!((d - exact).abs() < 1e-8, "{d} vs {exact}");
    }

    #[test]
    fn paper_time_reverses_well_posed_solves() {
        let config = SpectralConfig::new(4, 1.0, 0.1, 10, Direction::WellPosedReverse).unwrap();
        let traj = evolve(&sin_state(4), &config).unwrap();
        let paper = traj.paper_time_states();
        assert_eq!(paper[10].coeffs(), traj.states[0].coeffs());
        assert_eq!(paper[0].coeffs(), traj.states[10].coeffs());
        assert_eq!(paper[3].t, 3.0 * config.delta);
    }

    #[test]
    fn direction_parses_and_prints() {
        for d in [Direction::PaperForward, Direction::WellPosedReverse] {
            assert_eq!(d.to_string().parse::<Direction>().unwrap(), d);
        }
        assert!("sideways".parse::<Direction>().is_err());
    }
}
