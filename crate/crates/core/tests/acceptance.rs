//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

mod common;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::{brute_convolution, linf, random_hermitian, rng};
use meanrev_burgers::oracle::{hopf_cole_solve, time_reversal_map, ViscousParams};
use meanrev_burgers::sde::{
    girsanov_log_density, mean_and_se, path_independence_residual, reconstruct_z, sign_fraction,
    simulate, simulate_exact_q, simulate_halving_pair, AlphaField, ResidualStats, Scheme,
    SdeParams, SpaceTimeGrid,
};
use meanrev_burgers::spectral::{
    evolve, galerkin_step, init_coeffs, synthesize, truncated_convolution, CoeffTrajectory,
    Direction, FourierState, GridFunction, SpectralConfig,
};
use num_complex::Complex64;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// One step of the recurrence written out term by term:
/// `b(k) = (1 + sδσ²k²/2) a(k) - s(δσik/2) Σ_{p} a(p) a(k-p)` with
/// out-of-band factors dropped, `b(0) = a(0)`.
fn recurrence_by_hand(a: &FourierState, sigma: f64, delta: f64, sign: f64) -> Vec<Complex64> {
    let n = a.order() as isize;
    let mut out = Vec::new();
    for k in -n..=n {
        if k == 0 {
            out.push(a.get(0));
            continue;
        }
        let mut sum = Complex64::new(0.0, 0.0);
        for p in -n..=n {
            let q = k - p;
            if q.abs() <= n {
                sum += a.get(p) * a.get(q);
            }
        }
        let kf = k as f64;
        let linear = a.get(k) * (1.0 + sign * delta * sigma * sigma * kf * kf / 2.0);
        let nonlinear = Complex64::new(0.0, sign * delta * sigma * kf / 2.0) * sum;
        out.push(linear - nonlinear);
    }
    out
}

fn criterion_1() -> Outcome {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let order = r.random_range(1..=8);
        let state = random_hermitian(order, 1.0, &mut r);
        let sigma = r.random_range(0.1..2.0);
        let direction = if trial % 2 == 0 {
            Direction::PaperForward
        } else {
            Direction::WellPosedReverse
        };
        let sign = if direction == Direction::PaperForward {
            1.0
        } else {
            -1.0
        };
        let n_steps = 100;
        let config = SpectralConfig::new(order, sigma, 1.0, n_steps, direction).unwrap();
        let fast = galerkin_step(&state, &config);
        let slow = recurrence_by_hand(&state, sigma, config.delta, sign);
        let scale = slow.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let err = fast
            .modes()
            .zip(&slow)
            .map(|(k, s)| (fast.get(k) - s).norm())
            .fold(0.0, f64::max);
        worst = worst.max(err / scale);
    }
    outcome(
        worst <= 1e-14,
        format!("recurrence fidelity: max relative error {worst:.2e} over 100 states (tol 1e-14)"),
    )
}

fn criterion_2() -> Outcome {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for order in [2, 8, 32, 64] {
        for _ in 0..100 {
            let a = random_hermitian(order, 1.0, &mut r);
            let b = random_hermitian(order, 1.0, &mut r);
            let fast = truncated_convolution(&a, &b).unwrap();
            let slow = brute_convolution(&a, &b);
            for (k, s) in fast.modes().zip(&slow) {
                worst = worst.max((fast.get(k) - s).norm());
            }
        }
    }
    outcome(
        worst <= 1e-13,
        format!("convolution oracle: max error {worst:.2e} for N in {{2,8,32,64}} (tol 1e-13)"),
    )
}

fn criterion_3() -> Outcome {
    let mut r = rng(3);
    let mut drift: f64 = 0.0;
    for direction in [Direction::PaperForward, Direction::WellPosedReverse] {
        let initial = random_hermitian(4, 0.5, &mut r);
        let config = SpectralConfig::new(4, 0.1, 1.0, 10_000, direction).unwrap();
        let trajectory = evolve(&initial, &config).unwrap();
        let a0 = trajectory.states[0].get(0);
        for s in &trajectory.states {
            drift = drift.max((s.get(0) - a0).norm());
        }
    }
    outcome(
        drift == 0.0,
        format!("zero-mode conservation: max |a(0,t_n) - a(0,0)| = {drift:e} over 1e4 steps, both directions (must be 0)"),
    )
}

fn criterion_4() -> Outcome {
    let mut r = rng(4);
    let mut defect: f64 = 0.0;
    let mut imag: f64 = 0.0;
    for (i, direction) in [Direction::PaperForward, Direction::WellPosedReverse]
        .into_iter()
        .cycle()
        .take(10)
        .enumerate()
    {
        let order = 4 + 2 * i;
        let initial = random_hermitian(order, 0.3, &mut r);
        // short horizon keeps the ill-posed direction below the blow-up guard
        let config = SpectralConfig::new(order, 0.5, 0.02, 200, direction).unwrap();
        let trajectory = evolve(&initial, &config).unwrap();
        defect = defect.max(trajectory.relative_hermitian_defect());
        for s in &trajectory.states {
            let synth = synthesize(s, config.grid_size).unwrap();
            imag = imag.max(synth.imag_residual / s.max_modulus());
        }
    }
    outcome(
        defect <= 1e-12 && imag <= 1e-12,
        format!("Hermitian symmetry: relative defect {defect:.2e}, imaginary residual {imag:.2e} (tol 1e-12)"),
    )
}

fn spectral_vs_hopf_cole(n: usize) -> f64 {
    let config = SpectralConfig::new(32, 1.0, 0.5, n, Direction::WellPosedReverse).unwrap();
    let initial = init_coeffs(
        &GridFunction::from_fn(config.grid_size, f64::sin).unwrap(),
        &config,
    )
    .unwrap();
    let trajectory = evolve(&initial, &config).unwrap();
    let v = time_reversal_map(&trajectory, 0.5).unwrap();
    let spectral = synthesize(v.final_state(), config.grid_size).unwrap().grid;
    let u0 = GridFunction::from_fn(config.grid_size, |x| -x.sin()).unwrap();
    let hc = hopf_cole_solve(&u0, 0.5, &ViscousParams::new(0.5, 0.5).unwrap()).unwrap();
    linf(spectral.values(), hc.grid.values())
}

fn criterion_5() -> Outcome {
    let e1 = spectral_vs_hopf_cole(5_000);
    let e2 = spectral_vs_hopf_cole(10_000);
    let ratio = e1 / e2;
    outcome(
        e1 <= 1e-3 && ratio >= 1.8,
        format!("oracle cross-validation: L∞ error {e1:.3e} at n=5000 (tol 1e-3), halving ratio {ratio:.3} (need >= 1.8)"),
    )
}

fn criterion_6() -> Outcome {
    let order = 16;
    let config = SpectralConfig::new(order, 1.0, 0.1, 100, Direction::PaperForward).unwrap();
    let initial = FourierState::sine_mode(order, order, 1e-6);
    let trajectory = evolve(&initial, &config).unwrap();
    let factor = 1.0 + config.delta * (order * order) as f64 / 2.0;
    let a0 = initial.get(order as isize).norm();
    let worst = trajectory
        .states
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let want = factor.powi(j as i32) * a0;
            (s.get(order as isize).norm() - want).abs() / want
        })
        .fold(0.0, f64::max);
    outcome(
        worst <= 1e-12,
        format!("growth law: |a(N,t_j)| vs (1+δσ²N²/2)^j |a(N,0)|, max relative error {worst:.2e} for j <= 100 (tol 1e-12)"),
    )
}

fn burgers_alpha(order: usize, n: usize) -> (CoeffTrajectory, AlphaField) {
    let config = SpectralConfig::new(order, 1.0, 0.5, n, Direction::WellPosedReverse).unwrap();
    let initial = init_coeffs(
        &GridFunction::from_fn(config.grid_size, f64::sin).unwrap(),
        &config,
    )
    .unwrap();
    let trajectory = evolve(&initial, &config).unwrap();
    let alpha = AlphaField::from_trajectory(&trajectory);
    (trajectory, alpha)
}

fn sde_params(steps: usize, paths: usize, seed: u64) -> SdeParams {
    SdeParams {
        theta: 0.05,
        sigma: 1.0,
        r0: 1.0,
        horizon: 0.5,
        steps,
        paths,
        master_seed: seed,
    }
}

fn criterion_7() -> Outcome {
    let p = sde_params(1_000, 10_000, 7);
    let exact = sign_fraction(&simulate_exact_q(&p).unwrap());
    let (_, alpha) = burgers_alpha(16, 1_000);
    let log_euler = sign_fraction(&simulate(&p, &alpha, Scheme::LogEuler).unwrap());
    outcome(
        exact == 1.0 && log_euler == 1.0,
        format!("sign preservation: exact-Q {exact}, log-Euler {log_euler} over 1e4 paths x 1e3 steps (must be 1.0)"),
    )
}

fn density_z(alpha: &AlphaField, p: &SdeParams) -> (f64, f64, f64) {
    let ens = simulate(p, alpha, Scheme::LogEuler).unwrap();
    let ld = girsanov_log_density(&ens, alpha).unwrap();
    let d: Vec<f64> = ld.iter().map(|l| l[p.steps].exp()).collect();
    let (mean, se) = mean_and_se(&d);
    (mean, se, (mean - 1.0).abs() / se)
}

fn criterion_8() -> Outcome {
    let p = sde_params(100, 100_000, 8);
    let (mc, sc, zc) = density_z(&AlphaField::Constant(0.3), &p);
    let (_, alpha) = burgers_alpha(16, 1_000);
    let (ms, ss, zs) = density_z(&alpha, &p);
    outcome(
        zc <= 3.0 && zs <= 3.0,
        format!(
            "density martingale: α=0.3 mean {mc:.5} (se {sc:.1e}, {zc:.2} se); solver α mean {ms:.5} (se {ss:.1e}, {zs:.2} se); 1e5 paths (tol 3 se)"
        ),
    )
}

fn residual_pair(
    alpha: &AlphaField,
    z: &meanrev_burgers::sde::ZField,
    steps: usize,
) -> (ResidualStats, ResidualStats) {
    let (coarse, fine) =
        simulate_halving_pair(&sde_params(steps, 1_000, 9), alpha, Scheme::LogEuler).unwrap();
    (
        path_independence_residual(&coarse, z, alpha).unwrap(),
        path_independence_residual(&fine, z, alpha).unwrap(),
    )
}

fn criterion_9() -> Outcome {
    let constant = AlphaField::Constant(0.3);
    let fallback = SpaceTimeGrid {
        grid_size: 64,
        order: 16,
        n_steps: 2_000,
        horizon: 0.5,
    };
    let zc = reconstruct_z(&constant, 1.0, 0.0, fallback).unwrap();
    let (c1, c2) = residual_pair(&constant, &zc, 100);
    let constant_max = c1.max.max(c2.max);
    let constant_ok = constant_max <= 1e-12;

    let (_, alpha) = burgers_alpha(16, 2_000);
    let zb = reconstruct_z(
        &alpha,
        1.0,
        0.0,
        SpaceTimeGrid::matching(&alpha, 64, fallback),
    )
    .unwrap();
    let mut ratios = Vec::new();
    let mut finest = f64::NAN;
    for steps in [100, 200, 400] {
        let (coarse, fine) = residual_pair(&alpha, &zb, steps);
        ratios.push(ResidualStats::halving_ratio(&coarse, &fine));
        finest = fine.mean;
    }
    let ratios_ok = ratios.iter().all(|r| *r >= 1.5);

    let control = AlphaField::custom("sin x (1+t)", |x, t| x.sin() * (1.0 + t));
    let zn = reconstruct_z(&control, 1.0, 0.0, fallback).unwrap();
    let (_, control_fine) = residual_pair(&control, &zn, 400);
    let separation = control_fine.mean / finest;
    let control_ok = separation >= 10.0;

    let ratio_text: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    outcome(
        constant_ok && ratios_ok && control_ok,
        format!(
            "path independence: constant α max {constant_max:.2e} (tol 1e-12) [{}]; Burgers α mean ratios 100->200->400->800 = {} (need >= 1.5) [{}]; control/Burgers at 800 steps = {separation:.1} (need >= 10) [{}]",
            if constant_ok { "ok" } else { "FAIL" },
            ratio_text.join(", "),
            if ratios_ok { "ok" } else { "FAIL" },
            if control_ok { "ok" } else { "FAIL" },
        ),
    )
}

fn criterion_10() -> Outcome {
    let (trajectory, alpha) = burgers_alpha(16, 2_000);
    let bound = trajectory.truncation_error_estimate();
    let layout = SpaceTimeGrid::matching(
        &alpha,
        64,
        SpaceTimeGrid {
            grid_size: 64,
            order: 16,
            n_steps: 2_000,
            horizon: 0.5,
        },
    );
    let solver = reconstruct_z(&alpha, 1.0, 0.0, layout)
        .unwrap()
        .mixed_partials_residual()
        .unwrap();
    let control_alpha = AlphaField::custom("sin x (1+t)", |x, t| x.sin() * (1.0 + t));
    let control = reconstruct_z(&control_alpha, 1.0, 0.0, layout)
        .unwrap()
        .mixed_partials_residual()
        .unwrap();
    outcome(
        solver <= 10.0 * bound && control >= 100.0 * bound,
        format!(
            "integrability: solver α residual {solver:.3e} = {:.2} x truncation {bound:.3e} (need <= 10); control {control:.3e} = {:.0} x (need >= 100)",
            solver / bound,
            control / bound
        ),
    )
}

fn data_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.to_string_lossy().ends_with("_manifest.txt"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn criterion_11() -> Outcome {
    let commands: [&[&str]; 5] = [
        &["solve", "--N", "16", "--n", "500", "--out", "d/solve"],
        &[
            "oracle",
            "--method",
            "reference_fd",
            "--N",
            "8",
            "--out",
            "d/oracle",
        ],
        &[
            "simulate", "--paths", "500", "--steps", "50", "--dump", "true", "--out", "d/sim",
        ],
        &["verify", "--paths", "300", "--out", "d/verify"],
        &["init-data", "--preset", "exp-cos", "--out", "d/init"],
    ];
    let root = tempfile::tempdir().unwrap();
    for run in ["a", "b"] {
        let dir = root.path().join(run);
        fs::create_dir_all(&dir).unwrap();
        for args in commands {
            let status = Command::new(env!("CARGO_BIN_EXE_meanrev-burgers"))
                .current_dir(&dir)
                .args(args)
                .output()
                .unwrap()
                .status;
            // verify may report a failed check; determinism is about the files
            assert!(
                matches!(status.code(), Some(0) | Some(4)),
                "{args:?}: {status}"
            );
        }
    }
    let a = data_files(&root.path().join("a/d"));
    let b = data_files(&root.path().join("b/d"));
    let identical = a == b;
    outcome(
        identical && !a.is_empty(),
        format!(
            "determinism: {} data files from solve/oracle/simulate/verify/init-data, two runs {}",
            a.len(),
            if identical {
                "byte-identical"
            } else {
                "differ"
            }
        ),
    )
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 11] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
    ];
    let mut failed = 0;
    for (id, check) in criteria {
        let start = Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} {id:>2}  {}  ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
