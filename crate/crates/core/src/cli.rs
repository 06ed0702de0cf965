//! Command-line configuration and the five pipelines.
//!
//! Every setting is a `--key value` pair and may also come from a flat
//! `key = value` file given with `--config`. A flag beats the file, the file
//! beats the built-in default. All resolved values are echoed to
//! `{out}_manifest.txt`, which is itself a valid `--config` file.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Arg, ArgMatches};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io;
use crate::oracle::{self, OracleMethod, OracleSolution, ViscousParams};
use crate::sde::{self, AlphaField, PathEnsemble, Scheme, SdeParams, SpaceTimeGrid};
use crate::spectral::{
    self, CoeffTrajectory, Direction, FourierState, GridFunction, SpectralConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BLOW_UP: i32 = 3;
pub const EXIT_VERIFY_FAILED: i32 = 4;

/// Keys accepted on the command line and in config files, in manifest order.
pub const KEYS: &[&str] = &[
    "N",
    "sigma",
    "T",
    "n",
    "delta",
    "M",
    "direction",
    "preset",
    "amplitude",
    "input",
    "theta",
    "r0",
    "steps",
    "paths",
    "seed",
    "scheme",
    "method",
    "resolution",
    "x0",
    "galilean_shift",
    "full_trajectory",
    "dump",
    "out",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Solve,
    Oracle,
    Simulate,
    Verify,
    InitData,
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CommandKind::Solve => "solve",
            CommandKind::Oracle => "oracle",
            CommandKind::Simulate => "simulate",
            CommandKind::Verify => "verify",
            CommandKind::InitData => "init-data",
        })
    }
}

impl FromStr for CommandKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "solve" => Ok(CommandKind::Solve),
            "oracle" => Ok(CommandKind::Oracle),
            "simulate" => Ok(CommandKind::Simulate),
            "verify" => Ok(CommandKind::Verify),
            "init-data" => Ok(CommandKind::InitData),
            other => Err(format!("unknown command `{other}`")),
        }
    }
}

/// Initial data for α, used when no `input` grid file is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Zero,
    Constant,
    Sine,
    ExpCos,
}

impl Preset {
    fn eval(self, amplitude: f64, x: f64) -> f64 {
        match self {
            Preset::Zero => 0.0,
            Preset::Constant => amplitude,
            Preset::Sine => amplitude * x.sin(),
            Preset::ExpCos => amplitude * x.cos().exp(),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Zero => "zero",
            Preset::Constant => "constant",
            Preset::Sine => "sine",
            Preset::ExpCos => "exp-cos",
        })
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "zero" => Ok(Preset::Zero),
            "constant" => Ok(Preset::Constant),
            "sine" => Ok(Preset::Sine),
            "exp-cos" => Ok(Preset::ExpCos),
            other => Err(format!(
                "unknown preset `{other}` (zero|constant|sine|exp-cos)"
            )),
        }
    }
}

/// Where a resolved value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Default,
    File,
    Flag,
}

/// A flag that replaced a value from the config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Override {
    pub key: String,
    pub file_value: String,
    pub flag_value: String,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: CommandKind,
    pub order: usize,
    pub sigma: f64,
    pub horizon: f64,
    pub n_steps: usize,
    pub grid_size: usize,
    pub direction: Direction,
    pub preset: Preset,
    pub amplitude: f64,
    pub input: Option<PathBuf>,
    pub theta: f64,
    pub r0: f64,
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub method: OracleMethod,
    pub resolution: usize,
    pub x0: f64,
    pub galilean_shift: bool,
    pub full_trajectory: bool,
    pub dump: bool,
    pub out: String,
    pub config_file: Option<PathBuf>,
    pub origins: BTreeMap<String, Origin>,
    pub overrides: Vec<Override>,
}

fn command() -> clap::Command {
    let mut cmd = clap::Command::new("meanrev-burgers")
        .about("Galerkin solver, Burgers oracle and Girsanov Monte Carlo for the mean-correction function")
        .arg(
            Arg::new("command")
                .required(true)
                .value_parser(["solve", "oracle", "simulate", "verify", "init-data"]),
        )
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("PATH")
                .help("flat `key = value` file; flags take precedence"),
        );
    for key in KEYS {
        cmd = cmd.arg(Arg::new(*key).long(*key).value_name("VALUE"));
    }
    cmd
}

/// Reads a flat `key = value` file. Blank lines and `#` comments are skipped.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
    parse_config_text(&text, &path.display().to_string())
}

pub fn parse_config_text(text: &str, source_name: &str) -> Result<BTreeMap<String, String>> {
    let mut values = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            source_name: source_name.to_string(),
            line: i + 1,
            message: format!("expected `key = value`, found `{line}`"),
        })?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::config(key, format!("unknown key in {source_name}")));
        }
        values.insert(key.to_string(), value.trim().to_string());
    }
    Ok(values)
}

/// Parses arguments (without the program name handling that clap does) into
/// a validated configuration.
pub fn parse_config<I, T>(args: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = command()
        .try_get_matches_from(args)
        .map_err(|e| Error::config("arguments", e.to_string()))?;
    from_matches(&matches)
}

struct Sources {
    file: BTreeMap<String, String>,
    flags: BTreeMap<String, String>,
    origins: BTreeMap<String, Origin>,
    overrides: Vec<Override>,
}

impl Sources {
    fn raw(&mut self, key: &str) -> Option<String> {
        let flag = self.flags.get(key);
        let file = self.file.get(key);
        match (flag, file) {
            (Some(f), Some(g)) => {
                if f != g {
                    self.overrides.push(Override {
                        key: key.to_string(),
                        file_value: g.clone(),
                        flag_value: f.clone(),
                    });
                }
                self.origins.insert(key.to_string(), Origin::Flag);
                Some(f.clone())
            }
            (Some(f), None) => {
                self.origins.insert(key.to_string(), Origin::Flag);
                Some(f.clone())
            }
            (None, Some(g)) => {
                self.origins.insert(key.to_string(), Origin::File);
                Some(g.clone())
            }
            (None, None) => {
                self.origins.insert(key.to_string(), Origin::Default);
                None
            }
        }
    }

    fn get<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            Some(v) => v
                .parse()
                .map_err(|e| Error::config(key, format!("cannot parse `{v}`: {e}"))),
            None => Ok(default),
        }
    }

    fn get_opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::config(key, format!("cannot parse `{v}`: {e}"))),
            None => Ok(None),
        }
    }
}

fn from_matches(matches: &ArgMatches) -> Result<RunConfig> {
    let command: CommandKind = matches
        .get_one::<String>("command")
        .expect("required by clap")
        .parse()
        .map_err(|e: String| Error::config("command", e))?;
    let config_file = matches.get_one::<String>("config").map(PathBuf::from);
    let file = match &config_file {
        Some(p) => read_config_file(p)?,
        None => BTreeMap::new(),
    };
    let flags = KEYS
        .iter()
        .filter_map(|k| {
            matches
                .get_one::<String>(k)
                .map(|v| (k.to_string(), v.clone()))
        })
        .collect();
    let mut src = Sources {
        file,
        flags,
        origins: BTreeMap::new(),
        overrides: Vec::new(),
    };

    let order: usize = src.get("N", 16)?;
    if order < 1 {
        return Err(Error::config("N", "truncation order must be at least 1"));
    }
    let sigma: f64 = src.get("sigma", 1.0)?;
    let horizon: f64 = src.get("T", 0.5)?;
    let n_flag: Option<usize> = src.get_opt("n")?;
    let delta_flag: Option<f64> = src.get_opt("delta")?;
    let n_steps = match (n_flag, delta_flag) {
        (Some(n), None) => n,
        (None, None) => 1000,
        (n, Some(delta)) => {
            if !(delta > 0.0 && delta.is_finite()) {
                return Err(Error::config("delta", "time step must be positive"));
            }
            let implied = (horizon / delta).round();
            if implied < 1.0 || (implied * delta - horizon).abs() > 1e-9 * horizon.abs().max(delta)
            {
                return Err(Error::config(
                    "delta",
                    format!("delta = {delta} does not divide T = {horizon}"),
                ));
            }
            if let Some(n) = n {
                if n as f64 != implied {
                    return Err(Error::config(
                        "delta",
                        format!("delta = {delta} implies n = {implied}, but n = {n}"),
                    ));
                }
            }
            implied as usize
        }
    };
    let m_flag: Option<usize> = src.get_opt("M")?;
    let direction: Direction = src.get("direction", Direction::WellPosedReverse)?;
    let preset: Preset = src.get("preset", Preset::Sine)?;
    let amplitude: f64 = src.get("amplitude", 1.0)?;
    let input: Option<PathBuf> = src
        .raw("input")
        .filter(|s| !s.is_empty())
        .map(PathBuf::from);
    let theta: f64 = src.get("theta", 0.05)?;
    let r0: f64 = src.get("r0", 1.0)?;
    let steps: usize = src.get("steps", 100)?;
    let paths: usize = src.get("paths", 1000)?;
    let seed: u64 = src.get("seed", 42)?;
    let scheme: Scheme = src.get("scheme", Scheme::LogEuler)?;
    let method: OracleMethod = src.get("method", OracleMethod::HopfCole)?;
    let resolution_flag: Option<usize> = src.get_opt("resolution")?;
    let x0: f64 = src.get("x0", 0.0)?;
    let galilean_shift: bool = src.get("galilean_shift", false)?;
    let full_trajectory: bool = src.get("full_trajectory", true)?;
    let dump: bool = src.get("dump", false)?;
    let out: String = src.get("out", "out/run".to_string())?;
    if out.is_empty() {
        return Err(Error::config("out", "output prefix must not be empty"));
    }
    if !amplitude.is_finite() {
        return Err(Error::config("amplitude", "must be finite"));
    }
    if !x0.is_finite() {
        return Err(Error::config("x0", "must be finite"));
    }

    let grid_size = match &input {
        Some(path) => {
            if !path.is_file() {
                return Err(Error::config(
                    "input",
                    format!("{} does not exist", path.display()),
                ));
            }
            let len = read_grid(path)?.len();
            match m_flag {
                Some(m) if m != len => {
                    return Err(Error::config(
                        "M",
                        format!("M = {m} but {} has {len} samples", path.display()),
                    ))
                }
                _ => len,
            }
        }
        None => m_flag.unwrap_or(4 * order),
    };
    let resolution = resolution_flag.unwrap_or(8 * grid_size);

    let config = RunConfig {
        command,
        order,
        sigma,
        horizon,
        n_steps,
        grid_size,
        direction,
        preset,
        amplitude,
        input,
        theta,
        r0,
        steps,
        paths,
        seed,
        scheme,
        method,
        resolution,
        x0,
        galilean_shift,
        full_trajectory,
        dump,
        out,
        config_file,
        origins: src.origins,
        overrides: src.overrides,
    };
    config.spectral_config(direction)?;
    config.sde_params().validate()?;
    Ok(config)
}

fn read_grid(path: &Path) -> Result<GridFunction> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config("input", format!("cannot read {}: {e}", path.display())))?;
    io::parse_grid_csv(&text, &path.display().to_string())
}

impl RunConfig {
    pub fn spectral_config(&self, direction: Direction) -> Result<SpectralConfig> {
        SpectralConfig::new(
            self.order,
            self.sigma,
            self.horizon,
            self.n_steps,
            direction,
        )?
        .with_grid_size(self.grid_size)
    }

    pub fn sde_params(&self) -> SdeParams {
        SdeParams {
            theta: self.theta,
            sigma: self.sigma,
            r0: self.r0,
            horizon: self.horizon,
            steps: self.steps,
            paths: self.paths,
            master_seed: self.seed,
        }
    }

    /// α at the start of the solve, from `input` or the preset.
    pub fn initial_grid(&self) -> Result<GridFunction> {
        match &self.input {
            Some(path) => read_grid(path),
            None => {
                let (preset, amplitude) = (self.preset, self.amplitude);
                GridFunction::from_fn(self.grid_size, |x| preset.eval(amplitude, x))
            }
        }
    }

    pub fn output_path(&self, suffix: &str) -> PathBuf {
        PathBuf::from(format!("{}_{suffix}", self.out))
    }

    fn resolved_values(&self) -> Vec<(&'static str, String)> {
        let mut v = vec![
            ("N", self.order.to_string()),
            ("sigma", format!("{:?}", self.sigma)),
            ("T", format!("{:?}", self.horizon)),
            ("n", self.n_steps.to_string()),
            ("delta", format!("{:?}", self.horizon / self.n_steps as f64)),
            ("M", self.grid_size.to_string()),
            ("direction", self.direction.to_string()),
            ("preset", self.preset.to_string()),
            ("amplitude", format!("{:?}", self.amplitude)),
        ];
        if let Some(input) = &self.input {
            v.push(("input", input.display().to_string()));
        }
        v.extend([
            ("theta", format!("{:?}", self.theta)),
            ("r0", format!("{:?}", self.r0)),
            ("steps", self.steps.to_string()),
            ("paths", self.paths.to_string()),
            ("seed", self.seed.to_string()),
            ("scheme", self.scheme.to_string()),
            ("method", self.method.to_string()),
            ("resolution", self.resolution.to_string()),
            ("x0", format!("{:?}", self.x0)),
            ("galilean_shift", self.galilean_shift.to_string()),
            ("full_trajectory", self.full_trajectory.to_string()),
            ("dump", self.dump.to_string()),
            ("out", self.out.clone()),
        ]);
        v
    }

    /// Manifest text. The timestamp line is the only part that varies
    /// between identical runs.
    pub fn manifest(&self, unix_time: u64) -> String {
        let mut s = String::new();
        s.push_str("# meanrev-burgers run manifest\n");
        s.push_str(&format!("# command: {}\n", self.command));
        s.push_str(&format!("# written at unix time {unix_time}\n"));
        if let Some(p) = &self.config_file {
            s.push_str(&format!("# config file: {}\n", p.display()));
        }
        for o in &self.overrides {
            s.push_str(&format!(
                "# {}: flag value {} overrides file value {}\n",
                o.key, o.flag_value, o.file_value
            ));
        }
        for (key, value) in self.resolved_values() {
            let origin = match self.origins.get(key) {
                Some(Origin::Flag) => "flag",
                Some(Origin::File) => "file",
                _ => "default",
            };
            s.push_str(&format!("{key} = {value}  # {origin}\n"));
        }
        s
    }
}

/// Entry point for the binary: parses, runs, reports, returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let config = match from_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    match run(&config) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::Parse { .. } | Error::Aliasing { .. } => EXIT_CONFIG,
        Error::BlowUp { .. } => EXIT_BLOW_UP,
        _ => EXIT_OTHER,
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Runs the configured command and returns the exit code. Blow-ups are
/// reported in `{out}_blowup.json` before the code is returned.
pub fn run(config: &RunConfig) -> Result<i32> {
    io::write_atomic(
        &config.output_path("manifest.txt"),
        config.manifest(unix_now()).as_bytes(),
    )?;
    let outcome = match config.command {
        CommandKind::Solve => run_solve(config),
        CommandKind::Oracle => run_oracle(config),
        CommandKind::Simulate => run_simulate(config),
        CommandKind::Verify => run_verify(config),
        CommandKind::InitData => run_init_data(config),
    };
    match outcome {
        Err(Error::BlowUp {
            step,
            time,
            mode,
            magnitude,
        }) => {
            let spectral = config.spectral_config(config.direction)?;
            let report = BlowUpReport {
                step,
                time,
                mode_at_abort: mode,
                magnitude,
                threshold: spectral::BLOW_UP_THRESHOLD,
                fastest_growing_mode: config.order,
                growth_factor_per_step: spectral.linear_factor(config.order as isize),
                direction: config.direction,
            };
            write_json(&config.output_path("blowup.json"), &report)?;
            eprintln!(
                "blow-up at step {step} (t = {time}): mode {mode} reached {magnitude:e}; \
                 fastest-growing mode is {} (factor {} per step)",
                config.order, report.growth_factor_per_step
            );
            Ok(EXIT_BLOW_UP)
        }
        other => other,
    }
}

#[derive(Debug, Serialize)]
struct BlowUpReport {
    step: usize,
    time: f64,
    mode_at_abort: isize,
    magnitude: f64,
    threshold: f64,
    fastest_growing_mode: usize,
    growth_factor_per_step: f64,
    direction: Direction,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    io::write_atomic(path, text.as_bytes())
}

fn solve(config: &RunConfig, direction: Direction) -> Result<CoeffTrajectory> {
    let spectral = config.spectral_config(direction)?;
    let initial = spectral::init_coeffs(&config.initial_grid()?, &spectral)?;
    spectral::evolve(&initial, &spectral)
}

fn run_solve(config: &RunConfig) -> Result<i32> {
    let trajectory = solve(config, config.direction)?;
    let states: &[FourierState] = if config.full_trajectory {
        &trajectory.states
    } else {
        std::slice::from_ref(trajectory.final_state())
    };
    io::write_atomic(
        &config.output_path("coeffs.csv"),
        io::coeff_csv(states).as_bytes(),
    )?;
    let synthesis = spectral::synthesize(trajectory.final_state(), config.grid_size)?;
    io::write_atomic(
        &config.output_path("grid.csv"),
        io::grid_csv(&synthesis.grid).as_bytes(),
    )?;
    Ok(EXIT_OK)
}

/// Runs the oracle in the Burgers frame `u = -σα` and reports α again, so the
/// output is directly comparable with the `solve` grid.
fn run_oracle(config: &RunConfig) -> Result<i32> {
    let alpha0 = config.initial_grid()?;
    let u0 = GridFunction::new(alpha0.values().iter().map(|a| -config.sigma * a).collect())?;
    let params = ViscousParams::from_sigma(config.sigma, config.horizon)?;
    let solution = match config.method {
        OracleMethod::HopfCole if config.galilean_shift => {
            oracle::hopf_cole_solve_shifted(&u0, config.horizon, &params)?
        }
        OracleMethod::HopfCole => oracle::hopf_cole_solve(&u0, config.horizon, &params)?,
        OracleMethod::ReferenceFd => {
            oracle::reference_fd_solve(&u0, config.horizon, &params, config.resolution)?
        }
    };
    let alpha = OracleSolution {
        grid: GridFunction::new(
            solution
                .grid
                .values()
                .iter()
                .map(|u| -u / config.sigma)
                .collect(),
        )?,
        est_error: solution.est_error / config.sigma,
        ..solution
    };
    io::write_atomic(
        &config.output_path("oracle.csv"),
        io::grid_csv(&alpha.grid).as_bytes(),
    )?;
    io::write_atomic(
        &config.output_path("oracle.json"),
        format!("{}\n", alpha.sidecar_json()).as_bytes(),
    )?;
    Ok(EXIT_OK)
}

fn run_init_data(config: &RunConfig) -> Result<i32> {
    let grid = config.initial_grid()?;
    io::write_atomic(
        &config.output_path("init.csv"),
        io::grid_csv(&grid).as_bytes(),
    )?;
    Ok(EXIT_OK)
}

/// α for the Monte Carlo commands: constants stay closed-form, anything else
/// is solved in the well-posed direction.
fn simulation_alpha(config: &RunConfig) -> Result<(AlphaField, Option<CoeffTrajectory>)> {
    if config.input.is_none() {
        match config.preset {
            Preset::Zero => return Ok((AlphaField::Zero, None)),
            Preset::Constant => return Ok((AlphaField::Constant(config.amplitude), None)),
            _ => {}
        }
    }
    let trajectory = solve(config, Direction::WellPosedReverse)?;
    Ok((AlphaField::from_trajectory(&trajectory), Some(trajectory)))
}

fn potential_layout(config: &RunConfig, alpha: &AlphaField) -> SpaceTimeGrid {
    SpaceTimeGrid::matching(
        alpha,
        config.grid_size,
        SpaceTimeGrid {
            grid_size: config.grid_size,
            order: config.order,
            n_steps: config.n_steps,
            horizon: config.horizon,
        },
    )
}

fn run_simulate(config: &RunConfig) -> Result<i32> {
    let params = config.sde_params();
    let (alpha, _) = simulation_alpha(config)?;
    let ensemble = sde::simulate(&params, &alpha, config.scheme)?;
    let under_p = config.scheme != Scheme::ExactQ && params.r0 > 0.0;
    let (log_density, residual) = if under_p {
        let ld = sde::girsanov_log_density(&ensemble, &alpha)?;
        let z = sde::reconstruct_z(
            &alpha,
            config.sigma,
            config.x0,
            potential_layout(config, &alpha),
        )?;
        let res = sde::path_independence_residual(&ensemble, &z, &alpha)?;
        (Some(ld), Some(res))
    } else {
        (None, None)
    };
    let summary = sde::summarize(&ensemble, log_density.as_deref(), residual.as_ref());
    write_json(&config.output_path("summary.json"), &summary)?;
    if config.dump {
        write_paths(config, &ensemble, log_density.as_deref())?;
    }
    Ok(EXIT_OK)
}

fn write_paths(
    config: &RunConfig,
    ensemble: &PathEnsemble,
    log_density: Option<&[Vec<f64>]>,
) -> Result<()> {
    let xs = if ensemble.params.r0 > 0.0 {
        Some(sde::x_transform(ensemble)?)
    } else {
        None
    };
    io::write_atomic(
        &config.output_path("paths.csv"),
        io::paths_csv(ensemble, xs.as_deref(), log_density).as_bytes(),
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
    pub rule: String,
}

impl Check {
    fn at_most(value: f64, threshold: f64, rule: impl Into<String>) -> Self {
        Check {
            pass: value <= threshold,
            value,
            threshold,
            rule: rule.into(),
        }
    }

    fn at_least(value: f64, threshold: f64, rule: impl Into<String>) -> Self {
        Check {
            pass: value >= threshold,
            value,
            threshold,
            rule: rule.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Checks {
    pub hermitian: Check,
    pub zero_mode: Check,
    pub sign_fraction: Check,
    pub density_martingale: Check,
    pub path_independence: Check,
    pub integrability: Check,
}

impl Checks {
    fn all_pass(&self) -> bool {
        [
            &self.hermitian,
            &self.zero_mode,
            &self.sign_fraction,
            &self.density_martingale,
            &self.path_independence,
            &self.integrability,
        ]
        .iter()
        .all(|c| c.pass)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub schema: u32,
    pub pass: bool,
    pub alpha: String,
    pub constant_alpha: bool,
    pub steps_coarse: usize,
    pub steps_fine: usize,
    pub paths: usize,
    pub pi_residual_max: f64,
    pub pi_residual_mean: f64,
    pub pi_residual_mean_coarse: f64,
    pub checks: Checks,
}

/// Relative size below which a non-zero mode counts as rounding noise when
/// deciding whether α is constant.
const CONSTANT_TOL: f64 = 1e-14;

fn is_constant(state: &FourierState) -> bool {
    let scale = state.max_modulus();
    state
        .modes()
        .filter(|&k| k != 0)
        .all(|k| state.get(k).norm() <= CONSTANT_TOL * scale)
}

/// Solve, reconstruct the potential, simulate a step-halving pair with shared
/// Brownian paths, and judge the results.
fn run_verify(config: &RunConfig) -> Result<i32> {
    if config.scheme == Scheme::ExactQ {
        return Err(Error::config(
            "scheme",
            "verify needs paths under the drifted measure (euler or log_euler)",
        ));
    }
    let trajectory = solve(config, Direction::WellPosedReverse)?;
    let alpha = AlphaField::from_trajectory(&trajectory);
    let params = config.sde_params();

    let hermitian_defect = trajectory.relative_hermitian_defect();
    let synthesis = spectral::synthesize(trajectory.final_state(), config.grid_size)?;
    let scale = trajectory
        .final_state()
        .max_modulus()
        .max(f64::MIN_POSITIVE);
    let hermitian = hermitian_defect.max(synthesis.imag_residual / scale);

    let mode0 = trajectory.states[0].get(0);
    let zero_mode_drift = trajectory
        .states
        .iter()
        .map(|s| (s.get(0) - mode0).norm())
        .fold(0.0, f64::max);

    let z = sde::reconstruct_z(
        &alpha,
        config.sigma,
        config.x0,
        potential_layout(config, &alpha),
    )?;
    let (coarse, fine) = sde::simulate_halving_pair(&params, &alpha, config.scheme)?;
    let res_coarse = sde::path_independence_residual(&coarse, &z, &alpha)?;
    let res_fine = sde::path_independence_residual(&fine, &z, &alpha)?;

    let signs = sde::sign_fraction(&coarse).min(sde::sign_fraction(&fine));
    let log_density = sde::girsanov_log_density(&fine, &alpha)?;
    let summary = sde::summarize(&fine, Some(&log_density), Some(&res_fine));
    let density_z = match (summary.density_mean, summary.density_se) {
        (Some(m), Some(se)) if se > 0.0 => (m - 1.0).abs() / se,
        (Some(1.0), _) => 0.0,
        _ => f64::INFINITY,
    };

    let constant_alpha = is_constant(&trajectory.states[0]);
    let path_independence = if constant_alpha {
        Check::at_most(
            res_coarse.max.max(res_fine.max),
            1e-12,
            "max residual, exact telescoping",
        )
    } else {
        Check::at_least(
            residual_ratio(res_coarse.mean, res_fine.mean),
            1.5,
            "mean residual ratio under step halving",
        )
    };

    let mixed = z.mixed_partials_residual()?;
    let bound = trajectory.truncation_error_estimate();
    // The floor keeps an exactly-zero bound from failing on rounding noise.
    let integrability = Check::at_most(
        mixed,
        10.0 * bound + 1e-12,
        format!("mixed-partials residual vs 10 x truncation estimate {bound:e}"),
    );

    let checks = Checks {
        hermitian: Check::at_most(hermitian, spectral::HERMITIAN_TOL, "relative defect"),
        zero_mode: Check::at_most(zero_mode_drift, 0.0, "bit-exact"),
        sign_fraction: Check::at_least(signs, 1.0, "all paths keep their sign"),
        density_martingale: Check::at_most(density_z, 3.0, "|mean exp(L) - 1| in standard errors"),
        path_independence,
        integrability,
    };
    let verdict = Verdict {
        schema: 1,
        pass: checks.all_pass(),
        alpha: alpha.label(),
        constant_alpha,
        steps_coarse: coarse.params.steps,
        steps_fine: fine.params.steps,
        paths: params.paths,
        pi_residual_max: res_fine.max,
        pi_residual_mean: res_fine.mean,
        pi_residual_mean_coarse: res_coarse.mean,
        checks,
    };
    write_json(&config.output_path("summary.json"), &summary)?;
    write_json(&config.output_path("verdict.json"), &verdict)?;
    Ok(if verdict.pass {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAILED
    })
}

fn residual_ratio(coarse: f64, fine: f64) -> f64 {
    if fine > 0.0 {
        coarse / fine
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig> {
        parse_config(std::iter::once("meanrev-burgers").chain(args.iter().copied()))
    }

    #[test]
    fn happy_path_solve_config() {
        let c = parse(&[
            "solve",
            "--N",
            "16",
            "--sigma",
            "0.2",
            "--T",
            "1",
            "--n",
            "1000",
            "--direction",
            "well_posed_reverse",
            "--preset",
            "sine",
        ])
        .unwrap();
        assert_eq!(c.command, CommandKind::Solve);
        assert_eq!((c.order, c.n_steps, c.grid_size), (16, 1000, 64));
        assert_eq!(c.sigma, 0.2);
        assert_eq!(c.resolution, 512);
        assert_eq!(c.origins["sigma"], Origin::Flag);
        assert_eq!(c.origins["theta"], Origin::Default);
    }

    #[test]
    fn zero_order_is_rejected_by_name() {
        match parse(&["solve", "--N", "0"]) {
            Err(e @ Error::Config { .. }) => {
                assert!(matches!(&e, Error::Config { key, .. } if key == "N"));
                assert_eq!(exit_code(&e), EXIT_CONFIG);
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn delta_and_n_must_agree() {
        let c = parse(&["solve", "--T", "1", "--delta", "0.01"]).unwrap();
        assert_eq!(c.n_steps, 100);
        assert!(parse(&["solve", "--T", "1", "--delta", "0.03"]).is_err());
        let e = parse(&["solve", "--T", "1", "--delta", "0.01", "--n", "50"]).unwrap_err();
        assert!(matches!(e, Error::Config { key, .. } if key == "delta"));
    }

    #[test]
    fn config_text_rejects_unknown_keys() {
        let ok = parse_config_text("# c\nsigma = 0.2  # inline\n\nN=8\n", "f").unwrap();
        assert_eq!(ok["sigma"], "0.2");
        assert_eq!(ok["N"], "8");
        match parse_config_text("sigmaa = 1\n", "f") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "sigmaa"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_config_text("sigma 1\n", "f"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn manifest_lists_every_key_once() {
        let c = parse(&["simulate", "--paths", "10"]).unwrap();
        let text = c.manifest(0);
        let parsed = parse_config_text(&text, "manifest").unwrap();
        for key in KEYS.iter().filter(|k| **k != "input") {
            assert!(parsed.contains_key(*key), "{key} missing");
        }
        assert_eq!(parsed["paths"], "10");
    }

    #[test]
    fn preset_values() {
        assert_eq!(Preset::Zero.eval(2.0, 1.0), 0.0);
        assert_eq!(Preset::Constant.eval(2.0, 1.0), 2.0);
        assert_eq!(Preset::Sine.eval(2.0, 0.5), 2.0 * 0.5f64.sin());
        assert_eq!(Preset::ExpCos.eval(1.0, 0.0), 1f64.exp());
        assert_eq!("exp-cos".parse::<Preset>().unwrap(), Preset::ExpCos);
    }
}
