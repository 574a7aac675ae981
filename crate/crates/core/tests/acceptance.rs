//! Acceptance suite: one test per criterion, each printing a single
//! `[acceptance] ... PASS|FAIL` line to the real stdout.
//!
//! Tests share one lock so timing measurements run on a quiet machine.

use std::io::Write;
use std::sync::Mutex;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use steady_ie::collocation::{assembly_count, reset_assembly_count};
use steady_ie::continuation::{sweep_with, FrcPoint};
use steady_ie::green::linear_response;
use steady_ie::modal::{compute_modes, ModalBasis};
use steady_ie::model::{build_oscillator_chain, ForcingSpec, MechModel, PolyNonlinearity};
use steady_ie::oracle::{compare_orbit, integrate_to_steady_state};
use steady_ie::solvers::{
    contraction_report, flatten_nodal, nonlinear_map, original_jacobian, original_residual, prepare_frequency,
    reformulated_jacobian, reformulated_residual, solve_prepared, starting_guess, unflatten_nodal, nodal_norm,
    PeriodicSolution,
};
use steady_ie::{
    assemble_convolution, build_grid, gamma_bound, refinement_study, solve_steady_state, sweep,
    Formulation, LinearResponsePath, SolverConfig, Strategy, SweepConfig,
};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "[acceptance] criterion {id:>2} {name}: {verdict} ({detail})");
    let _ = out.flush();
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn benchmark_chain() -> (MechModel, ModalBasis) {
    let model = build_oscillator_chain(20, 1.0, 1.0, 1.0, 0.5).unwrap();
    let basis = compute_modes(&model).unwrap();
    (model, basis)
}

/// 60 frequencies bracketing the first natural frequency (≈ 0.1495).
fn benchmark_sweep(steps: usize, n_nodes: usize) -> SweepConfig {
    SweepConfig {
        omega_start: 0.10,
        omega_end: 0.20,
        steps,
        n_nodes,
        ..SweepConfig::default()
    }
}

/// Duffing oscillator `x'' + 2c x' + x + x³ = F sin(Ωt)`.
fn duffing(c: f64) -> (MechModel, ModalBasis) {
    let model = build_oscillator_chain(1, 1.0, 0.5, c, 0.5).unwrap();
    let basis = compute_modes(&model).unwrap();
    (model, basis)
}

#[test]
fn criterion_01_formulation_equivalence() {
    let _g = serial();
    let (model, basis) = benchmark_chain();
    let start = std::time::Instant::now();
    let mut worst = 0.0_f64;
    let mut mutual = 0;
    let mut total = 0;
    for f in [0.01, 0.02] {
        let forcing = ForcingSpec::uniform_sine(20, f);
        let run = |formulation| {
            let cfg = SolverConfig {
                tol: 1e-10,
                formulation,
                ..SolverConfig::default()
            };
            sweep(&model, &basis, &forcing, &benchmark_sweep(60, 128), &cfg).unwrap()
        };
        let re = run(Formulation::Reformulated);
        let orig = run(Formulation::Original);
        for (a, b) in re.iter().zip(&orig) {
            total += 1;
            if a.converged && b.converged {
                mutual += 1;
                worst = worst.max(((a.amplitude - b.amplitude) / b.amplitude).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        "formulation equivalence",
        worst < 1e-8 && mutual > 0,
        &format!("worst relative difference {worst:.2e} < 1e-8 over {mutual}/{total} mutually converged points; {secs:.1} s"),
    );
}

#[test]
fn criterion_02_rom_accuracy() {
    let _g = serial();
    let (model, basis) = benchmark_chain();
    let rom = basis.truncate(&[1, 2, 3]).unwrap();
    let forcing = ForcingSpec::uniform_sine(20, 0.01);
    let cfg = SolverConfig {
        tol: 1e-10,
        ..SolverConfig::default()
    };
    let sw = benchmark_sweep(60, 128);
    let full = sweep(&model, &basis, &forcing, &sw, &cfg).unwrap();
    let reduced = sweep(&model, &rom, &forcing, &sw, &cfg).unwrap();
    let peak = |pts: &[FrcPoint]| {
        pts.iter()
            .filter(|p| p.converged)
            .map(|p| p.amplitude)
            .fold(0.0_f64, f64::max)
    };
    let peak_err = (peak(&reduced) - peak(&full)).abs() / peak(&full);
    let mut off_peak = 0.0_f64;
    let mut mutual = 0;
    for (a, b) in reduced.iter().zip(&full) {
        if a.converged && b.converged {
            mutual += 1;
            off_peak = off_peak.max((a.amplitude - b.amplitude).abs() / b.amplitude);
        }
    }
    report(
        2,
        "reduced-order accuracy",
        peak_err < 0.02 && off_peak < 0.02 && mutual == full.len(),
        &format!("peak error {peak_err:.2e}, worst pointwise error {off_peak:.2e} (< 2e-2) over {mutual} points"),
    );
}

#[test]
fn criterion_03_oracle_equivalence() {
    let _g = serial();
    let model = build_oscillator_chain(2, 1.0, 1.0, 1.0, 0.5).unwrap();
    let basis = compute_modes(&model).unwrap();
    let forcing = ForcingSpec::uniform_sine(2, 0.01);
    let cfg = SolverConfig {
        tol: 1e-12,
        ..SolverConfig::default()
    };
    let mut details = Vec::new();
    let mut pass = true;
    for omega in [0.4, 1.4, 3.0] {
        let setup = prepare_frequency(&basis, &forcing, omega, 256, &cfg).unwrap();
        let z0 = starting_guess(&model, &basis, &setup, None).unwrap();
        let contraction = contraction_report(&model, &basis, setup.operator.as_ref().unwrap(), &setup.eta_lin, &z0).unwrap();
        let sol = solve_prepared(&model, &basis, &setup, &z0, &cfg).unwrap();
        let orbit = integrate_to_steady_state(&model, &forcing, omega, 1e-8, 2000, 2048).unwrap();
        let cmp = compare_orbit(&sol, &basis, &orbit).unwrap();
        let shift_ok = cmp.phase_shift.abs() < setup.grid.spacing();
        pass &= contraction.predicted_convergent && sol.converged && cmp.sup_error < 1e-4 && shift_ok;
        details.push(format!(
            "Ω={omega}: q={:.2e}, error {:.2e}, shift {:.1e}",
            contraction.q, cmp.sup_error, cmp.phase_shift
        ));
    }
    report(3, "time-integration oracle", pass, &details.join("; "));
}

#[test]
fn criterion_04_linear_closed_form() {
    let _g = serial();
    let zeta = 0.05;
    let omega = 0.8;
    let amp = 1.0;
    let model = MechModel::new(
        "linear",
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 2.0 * zeta),
        DMatrix::from_element(1, 1, 1.0),
        PolyNonlinearity::zero(1),
    )
    .unwrap();
    let basis = compute_modes(&model).unwrap();
    // x = F (re sin Ωt - im cos Ωt) / (re² + im²)
    let re = 1.0 - omega * omega;
    let im = 2.0 * zeta * omega;
    let exact = |t: f64| amp * (re * (omega * t).sin() - im * (omega * t).cos()) / (re * re + im * im);
    let forcing = ForcingSpec::uniform_sine(1, amp);
    let mut closed_err = 0.0_f64;
    let mut quad_errs = Vec::new();
    for n in [64, 128, 256, 512] {
        let grid = build_grid(n, 2.0 * std::f64::consts::PI / omega).unwrap();
        let modal = basis.project_forcing(&forcing).unwrap();
        let u = basis.modes()[(0, 0)];
        let err = |path| {
            let eta = linear_response(&basis, &modal, &grid, path).unwrap();
            grid.nodes()
                .iter()
                .enumerate()
                .map(|(p, &t)| (u * eta[(p, 0)] - exact(t)).abs())
                .fold(0.0_f64, f64::max)
        };
        closed_err = closed_err.max(err(LinearResponsePath::ClosedForm));
        quad_errs.push(err(LinearResponsePath::Quadrature));
    }
    let ratios: Vec<f64> = quad_errs.windows(2).map(|w| w[0] / w[1]).collect();
    let ratios_ok = ratios.iter().all(|r| (3.5..=4.5).contains(r));
    report(
        4,
        "linear closed form",
        closed_err < 1e-10 && ratios_ok,
        &format!("closed-form error {closed_err:.2e} (< 1e-10); quadrature refinement ratios {ratios:.3?} (within [3.5, 4.5])"),
    );
}

#[test]
fn criterion_05_gamma_bound() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_501);
    let mut violations = 0;
    let mut worst = 0.0_f64;
    let mut example = String::new();
    for _ in 0..50 {
        let omega0 = 10f64.powf(rng.gen_range(-1.0..1.0));
        let zeta = rng.gen_range(0.01..2.0);
        let period = 10f64.powf(rng.gen_range(-1.0..2.0));
        let m = MechModel::new(
            "mode",
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 2.0 * zeta * omega0),
            DMatrix::from_element(1, 1, omega0 * omega0),
            PolyNonlinearity::zero(1),
        )
        .unwrap();
        let basis = compute_modes(&m).unwrap();
        let gamma = gamma_bound(&basis, period).unwrap();
        let norm = assemble_convolution(&basis, &build_grid(512, period).unwrap())
            .unwrap()
            .inf_norm();
        let excess = norm / gamma;
        if norm > gamma * (1.0 + 1e-6) {
            violations += 1;
            if excess > worst {
                worst = excess;
                example = format!("ω₀={omega0:.3}, ζ={zeta:.3}, T={period:.3}: ‖A‖={norm:.3e} vs Γ={gamma:.3e}");
            }
        }
    }
    let detail = if violations == 0 {
        "all 50 samples within Γ(T)(1+1e-6)".to_string()
    } else {
        format!("{violations}/50 samples exceed Γ(T)(1+1e-6), worst ratio {worst:.2} at {example}")
    };
    report(5, "operator norm bound", violations == 0, &detail);
}

#[test]
fn criterion_06_monotone_contraction() {
    let _g = serial();
    let cfg = SolverConfig {
        tol: 1e-12,
        strategy: Strategy::PicardOnly,
        ..SolverConfig::default()
    };
    let mut checked = 0;
    let mut failures = Vec::new();
    let mut inspect = |label: &str, sol: &PeriodicSolution, q: f64| {
        checked += 1;
        let h = &sol.picard_history;
        for (i, w) in h.windows(2).enumerate() {
            if w[1] >= w[0] || w[1] > q * w[0] * (1.0 + 1e-6) {
                failures.push(format!("{label} Ω={:.4} step {}: {:.3e} -> {:.3e} (q={q:.3e})", sol.omega, i + 1, w[0], w[1]));
                break;
            }
        }
    };
    let cases: Vec<(&str, MechModel, f64, SweepConfig)> = vec![
        ("2-dof", build_oscillator_chain(2, 1.0, 1.0, 1.0, 0.5).unwrap(), 0.01, SweepConfig {
            omega_start: 0.2,
            omega_end: 4.0,
            steps: 20,
            n_nodes: 128,
            contraction: true,
            ..SweepConfig::default()
        }),
        ("duffing", build_oscillator_chain(1, 1.0, 0.5, 0.05, 0.5).unwrap(), 0.05, SweepConfig {
            omega_start: 0.2,
            omega_end: 3.0,
            steps: 20,
            n_nodes: 128,
            contraction: true,
            ..SweepConfig::default()
        }),
        ("20-dof", build_oscillator_chain(20, 1.0, 1.0, 1.0, 0.5).unwrap(), 0.01, SweepConfig {
            contraction: true,
            ..benchmark_sweep(30, 128)
        }),
    ];
    for (label, model, f, sw) in cases {
        let basis = compute_modes(&model).unwrap();
        let forcing = ForcingSpec::uniform_sine(model.dim(), f);
        sweep_with(&model, &basis, &forcing, &sw, &cfg, |point, sol| {
            if let Some(c) = point.contraction {
                if c.predicted_convergent {
                    inspect(label, sol, c.q);
                }
            }
        })
        .unwrap();
    }
    let detail = if failures.is_empty() {
        format!("{checked} predicted-convergent solves, all strictly decreasing with ratio <= q(1+1e-6)")
    } else {
        format!("{} of {checked} solves violate: {}", failures.len(), failures.join("; "))
    };
    report(6, "monotone Picard contraction", failures.is_empty() && checked > 0, &detail);
}

#[test]
fn criterion_07_iteration_count_equality() {
    let _g = serial();
    let (model, basis) = benchmark_chain();
    let forcing = ForcingSpec::uniform_sine(20, 0.01);
    let totals: Vec<(usize, bool)> = [Formulation::Reformulated, Formulation::Original]
        .into_iter()
        .map(|formulation| {
            let cfg = SolverConfig {
                tol: 1e-10,
                formulation,
                ..SolverConfig::default()
            };
            let pts = sweep(&model, &basis, &forcing, &benchmark_sweep(60, 128), &cfg).unwrap();
            (
                pts.iter().map(|p| p.picard_iters).sum(),
                pts.iter().all(|p| p.converged && p.newton_iters == 0),
            )
        })
        .collect();
    report(
        7,
        "Picard iteration-count equality",
        totals[0] == totals[1] && totals[0].1,
        &format!("reformulated {} vs original {} total Picard iterations", totals[0].0, totals[1].0),
    );
}

#[test]
fn criterion_08_speed_trend() {
    let _g = serial();
    let (model, basis) = benchmark_chain();
    let forcing = ForcingSpec::uniform_sine(20, 0.01);
    let sw = benchmark_sweep(20, 512);
    let run = |formulation| -> f64 {
        let cfg = SolverConfig {
            formulation,
            strategy: Strategy::PicardOnly,
            ..SolverConfig::default()
        };
        let pts = sweep(&model, &basis, &forcing, &sw, &cfg).unwrap();
        assert!(pts.iter().all(|p| p.converged));
        pts.iter().map(|p| p.picard_seconds).sum()
    };
    let mut re = Vec::new();
    let mut orig = Vec::new();
    for _ in 0..5 {
        re.push(run(Formulation::Reformulated));
        orig.push(run(Formulation::Original));
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let (mr, mo) = (median(&mut re), median(&mut orig));
    report(
        8,
        "speed trend",
        mr <= mo,
        &format!("median Picard time reformulated {mr:.3} s vs original {mo:.3} s"),
    );
}

#[test]
fn criterion_09_newton_correctness() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let h = 1e-6;
    let mut worst = 0.0_f64;
    for trial in 0..20 {
        let n = 1 + trial % 4;
        let model = build_oscillator_chain(n, 1.0, rng.gen_range(0.5..2.0), rng.gen_range(0.05..0.5), rng.gen_range(0.1..1.0))
            .unwrap();
        let basis = compute_modes(&model).unwrap();
        let forcing = ForcingSpec::uniform_sine(n, rng.gen_range(0.01..0.5));
        let nodes = 16;
        let setup = prepare_frequency(&basis, &forcing, rng.gen_range(0.3..2.5), nodes, &SolverConfig::default()).unwrap();
        let a = setup.operator.as_ref().unwrap();
        let x = DMatrix::from_fn(nodes, n, |_, _| rng.gen_range(-0.5..0.5));
        let v = DMatrix::from_fn(nodes, n, |_, _| rng.gen_range(-1.0..1.0));
        let fd = |f: &dyn Fn(&DMatrix<f64>) -> DMatrix<f64>| (f(&(&x + &v * h)) - f(&(&x - &v * h))) / (2.0 * h);
        let jr = reformulated_jacobian(&model, &basis, a, &setup.eta_lin, &x).unwrap();
        let fr = fd(&|z| reformulated_residual(&model, &basis, a, &setup.eta_lin, z).unwrap());
        worst = worst.max((unflatten_nodal(&(&jr * flatten_nodal(&v)), nodes, n) - fr).amax());
        let jo = original_jacobian(&model, &basis, a, &setup.eta_lin, &x).unwrap();
        let fo = fd(&|e| original_residual(&model, &basis, a, &setup.eta_lin, e).unwrap());
        worst = worst.max((unflatten_nodal(&(&jo * flatten_nodal(&v)), nodes, n) - fo).amax());
    }

    // continuation up to the resonance of a lightly damped Duffing oscillator
    let (model, basis) = duffing(0.02);
    let forcing = ForcingSpec::uniform_sine(1, 0.01);
    let cfg = SolverConfig {
        tol: 1e-14,
        ..SolverConfig::default()
    };
    let prev = solve_steady_state(&model, &basis, &forcing, 0.95, 128, None, &cfg).unwrap();
    let picard = solve_steady_state(&model, &basis, &forcing, 1.0, 128, Some(&prev.zeta_nodal), &SolverConfig {
        strategy: Strategy::PicardOnly,
        ..cfg.clone()
    })
    .unwrap();
    let newton = solve_steady_state(&model, &basis, &forcing, 1.0, 128, Some(&prev.zeta_nodal), &SolverConfig {
        strategy: Strategy::NewtonOnly,
        ..cfg
    })
    .unwrap();
    let r = &newton.newton_history;
    let tail = &r[r.len().saturating_sub(4)..];
    let c_fit = tail
        .windows(2)
        .map(|w| w[1] / (w[0] * w[0]))
        .fold(0.0_f64, f64::max);
    let quadratic = tail.len() == 4 && c_fit.is_finite() && c_fit * tail[0] < 1.0;
    report(
        9,
        "Newton correctness",
        worst < 1e-6 && prev.converged && !picard.converged && newton.converged && quadratic,
        &format!(
            "finite-difference mismatch {worst:.2e} (< 1e-6) over 20 states x 2 orderings; Picard at resonance converged={}; Newton residuals {}, fitted C={c_fit:.2e}",
            picard.converged,
            sci(tail)
        ),
    );
}

#[test]
fn criterion_10_bijection_round_trip() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(7_777);
    let tol = 1e-10;
    let cfg = SolverConfig {
        tol,
        strategy: Strategy::NewtonOnly,
        ..SolverConfig::default()
    };
    let mut worst_orig = 0.0_f64;
    let mut worst_round = 0.0_f64;
    let mut converged = 0;
    for _ in 0..10 {
        let n = rng.gen_range(1..=5);
        let model =
            build_oscillator_chain(n, rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0), rng.gen_range(0.05..0.5), rng.gen_range(0.1..1.0))
                .unwrap();
        let basis = compute_modes(&model).unwrap();
        let forcing = ForcingSpec::uniform_sine(n, rng.gen_range(0.01..0.2));
        let omega = rng.gen_range(0.3..3.0);
        let setup = prepare_frequency(&basis, &forcing, omega, 64, &cfg).unwrap();
        let z0 = starting_guess(&model, &basis, &setup, None).unwrap();
        let sol = solve_prepared(&model, &basis, &setup, &z0, &cfg).unwrap();
        if !sol.converged {
            continue;
        }
        converged += 1;
        let a = setup.operator.as_ref().unwrap();
        let eta = &setup.eta_lin + a.apply(&sol.zeta_nodal).unwrap();
        worst_orig = worst_orig.max(nodal_norm(&original_residual(&model, &basis, a, &setup.eta_lin, &eta).unwrap()));
        let back = nonlinear_map(&model, &basis, &eta).unwrap();
        worst_round = worst_round.max(nodal_norm(&(back - &sol.zeta_nodal)));
    }
    report(
        10,
        "bijection round trip",
        converged == 10 && worst_orig < 2.0 * tol && worst_round < 2.0 * tol,
        &format!("{converged}/10 converged; original-equation residual {worst_orig:.2e}, round-trip error {worst_round:.2e} (< 2e-10)"),
    );
}

#[test]
fn criterion_11_collocation_convergence() {
    let _g = serial();
    let (model, basis) = duffing(0.1);
    let forcing = ForcingSpec::uniform_sine(1, 0.1);
    let cfg = SolverConfig {
        tol: 1e-13,
        ..SolverConfig::default()
    };
    let study = refinement_study(&model, &basis, &forcing, 0.8, &[32, 64, 128, 256, 1024], &cfg).unwrap();
    let errors: Vec<f64> = study[..4].iter().map(|e| e.error).collect();
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let pass = errors.windows(2).all(|w| w[1] < w[0]) && ratios.iter().all(|r| (3.0..=5.0).contains(r));
    report(
        11,
        "collocation convergence",
        pass,
        &format!("errors {}; ratios {ratios:.3?} (within [3, 5])", sci(&errors)),
    );
}

#[test]
fn criterion_12_precomputation_economy() {
    let _g = serial();
    let (model, basis) = benchmark_chain();
    let forcing = ForcingSpec::uniform_sine(20, 0.01);
    let cfg = SolverConfig {
        strategy: Strategy::PicardOnly,
        ..SolverConfig::default()
    };
    let mut per_point = Vec::new();
    let mut iters = Vec::new();
    for omega in benchmark_sweep(12, 128).frequencies() {
        reset_assembly_count();
        let sol = solve_steady_state(&model, &basis, &forcing, omega, 128, None, &cfg).unwrap();
        per_point.push(assembly_count());
        iters.push(sol.picard_iters);
    }
    let distinct = {
        let mut v = iters.clone();
        v.sort_unstable();
        v.dedup();
        v.len()
    };
    report(
        12,
        "precomputation economy",
        per_point.iter().all(|&c| c == 1) && distinct > 1,
        &format!("assemblies per point {per_point:?} with Picard counts {iters:?}"),
    );
}
