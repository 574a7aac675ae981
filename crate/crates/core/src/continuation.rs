//! Sequential frequency continuation and refinement studies.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modal::ModalBasis;
use crate::model::{ForcingSpec, MechModel};
use crate::solvers::{
    contraction_report, prepare_frequency, solve_prepared, starting_guess, ContractionReport, PeriodicSolution,
    SolverConfig, SolverPath,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Up,
    Down,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeMetric {
    /// Largest `|x_i(t_p)|` over nodes and coordinates.
    #[default]
    MaxAbsAllDofs,
    /// Largest `|x_i(t_p)|` for one coordinate (one-based).
    MaxAbsDof(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Up,
    Down,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub omega_start: f64,
    pub omega_end: f64,
    pub steps: usize,
    pub direction: Direction,
    pub metric: AmplitudeMetric,
    pub n_nodes: usize,
    pub warm_start: bool,
    /// Evaluate the contraction check at every point (advisory only).
    pub contraction: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            omega_start: 0.5,
            omega_end: 1.5,
            steps: 50,
            direction: Direction::Up,
            metric: AmplitudeMetric::MaxAbsAllDofs,
            n_nodes: 128,
            warm_start: true,
            contraction: false,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("omega_start", self.omega_start), ("omega_end", self.omega_end)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.steps < 2 {
            return Err(Error::InvalidParameter(format!(
                "a sweep needs at least 2 frequencies, got {}",
                self.steps
            )));
        }
        if self.n_nodes < crate::collocation::MIN_NODES {
            return Err(Error::InvalidParameter(format!("too few collocation nodes: {}", self.n_nodes)));
        }
        Ok(())
    }

    /// Uniform frequency grid from `omega_start` to `omega_end` inclusive.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.steps;
        (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                self.omega_start + s * (self.omega_end - self.omega_start)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrcPoint {
    pub omega: f64,
    /// NaN for points without a converged solution.
    pub amplitude: f64,
    pub converged: bool,
    pub picard_iters: usize,
    pub newton_iters: usize,
    pub picard_seconds: f64,
    pub newton_seconds: f64,
    /// `None` when the point could not be set up (e.g. resonance).
    pub solver_path: Option<SolverPath>,
    pub branch: Branch,
    pub final_residual: f64,
    pub diagnostic: Option<String>,
    pub contraction: Option<ContractionReport>,
}

/// Largest physical displacement of a converged solution under `metric`.
pub fn amplitude(basis: &ModalBasis, solution: &PeriodicSolution, metric: AmplitudeMetric) -> Result<f64> {
    if !solution.converged {
        return Err(Error::NotConverged(format!(
            "no amplitude for the unconverged solution at omega = {}",
            solution.omega
        )));
    }
    nodal_amplitude(basis, &solution.eta_nodal, metric)
}

pub(crate) fn nodal_amplitude(basis: &ModalBasis, eta: &DMatrix<f64>, metric: AmplitudeMetric) -> Result<f64> {
    if eta.ncols() != basis.len() {
        return Err(Error::DimensionMismatch {
            context: "amplitude modes",
            expected: basis.len(),
            found: eta.ncols(),
        });
    }
    let x = eta * basis.modes().transpose();
    match metric {
        AmplitudeMetric::MaxAbsAllDofs => Ok(x.amax()),
        AmplitudeMetric::MaxAbsDof(i) => {
            if i == 0 || i > basis.full_dim() {
                return Err(Error::InvalidParameter(format!(
                    "amplitude coordinate {i} outside 1..={}",
                    basis.full_dim()
                )));
            }
            Ok(x.column(i - 1).amax())
        }
    }
}

/// Physical displacements at the nodes (`N x n`).
pub fn physical_nodal(basis: &ModalBasis, eta: &DMatrix<f64>) -> DMatrix<f64> {
    eta * basis.modes().transpose()
}

pub fn sweep(
    model: &MechModel,
    basis: &ModalBasis,
    forcing: &ForcingSpec,
    sweep: &SweepConfig,
    cfg: &SolverConfig,
) -> Result<Vec<FrcPoint>> {
    sweep_with(model, basis, forcing, sweep, cfg, |_, _| {})
}

/// Like [`sweep`], calling `observe` with every solved point and its solution.
pub fn sweep_with(
    model: &MechModel,
    basis: &ModalBasis,
    forcing: &ForcingSpec,
    sweep: &SweepConfig,
    cfg: &SolverConfig,
    mut observe: impl FnMut(&FrcPoint, &PeriodicSolution),
) -> Result<Vec<FrcPoint>> {
    sweep.validate()?;
    cfg.validate()?;
    if let AmplitudeMetric::MaxAbsDof(i) = sweep.metric {
        if i == 0 || i > basis.full_dim() {
            return Err(Error::InvalidParameter(format!(
                "amplitude coordinate {i} outside 1..={}",
                basis.full_dim()
            )));
        }
    }
    let up = sweep.frequencies();
    let mut legs: Vec<(Branch, Vec<f64>)> = Vec::new();
    if matches!(sweep.direction, Direction::Up | Direction::Both) {
        legs.push((Branch::Up, up.clone()));
    }
    if matches!(sweep.direction, Direction::Down | Direction::Both) {
        legs.push((Branch::Down, up.iter().rev().copied().collect()));
    }
    let mut points = Vec::new();
    for (branch, omegas) in legs {
        let mut warm: Option<DMatrix<f64>> = None;
        for omega in omegas {
            let seed = if sweep.warm_start { warm.take() } else { None };
            match solve_point(model, basis, forcing, omega, seed.as_ref(), sweep, cfg) {
                Ok((solution, contraction)) => {
                    let amp = if solution.converged {
                        nodal_amplitude(basis, &solution.eta_nodal, sweep.metric)?
                    } else {
                        f64::NAN
                    };
                    let point = FrcPoint {
                        omega,
                        amplitude: amp,
                        converged: solution.converged,
                        picard_iters: solution.picard_iters,
                        newton_iters: solution.newton_iters,
                        picard_seconds: solution.picard_seconds,
                        newton_seconds: solution.newton_seconds,
                        solver_path: Some(solution.solver_path),
                        branch,
                        final_residual: solution.final_residual,
                        diagnostic: solution.diagnostic.clone(),
                        contraction,
                    };
                    observe(&point, &solution);
                    if solution.converged {
                        warm = Some(solution.zeta_nodal);
                    }
                    points.push(point);
                }
                Err(err @ (Error::Resonance { .. } | Error::NotConverged(_))) => points.push(FrcPoint {
                    omega,
                    amplitude: f64::NAN,
                    converged: false,
                    picard_iters: 0,
                    newton_iters: 0,
                    picard_seconds: 0.0,
                    newton_seconds: 0.0,
                    solver_path: None,
                    branch,
                    final_residual: f64::NAN,
                    diagnostic: Some(err.to_string()),
                    contraction: None,
                }),
                Err(err) => return Err(err),
            }
        }
    }
    Ok(points)
}

fn solve_point(
    model: &MechModel,
    basis: &ModalBasis,
    forcing: &ForcingSpec,
    omega: f64,
    warm: Option<&DMatrix<f64>>,
    sweep: &SweepConfig,
    cfg: &SolverConfig,
) -> Result<(PeriodicSolution, Option<ContractionReport>)> {
    let setup = prepare_frequency(basis, forcing, omega, sweep.n_nodes, cfg)?;
    let z0 = starting_guess(model, basis, &setup, warm)?;
    let contraction = if sweep.contraction {
        let a = setup.operator_or_build(basis)?;
        Some(contraction_report(model, basis, &a, &setup.eta_lin, &z0)?)
    } else {
        None
    };
    Ok((solve_prepared(model, basis, &setup, &z0, cfg)?, contraction))
}

#[derive(Debug, Clone)]
pub struct RefinementEntry {
    pub n_nodes: usize,
    pub solution: PeriodicSolution,
    /// Sup-norm displacement error against the finest grid at this grid's nodes.
    pub error: f64,
}

/// Solves at every `N` in `n_list` (ascending) and measures each against the last.
pub fn refinement_study(
    model: &MechModel,
    basis: &ModalBasis,
    forcing: &ForcingSpec,
    omega: f64,
    n_list: &[usize],
    cfg: &SolverConfig,
) -> Result<Vec<RefinementEntry>> {
    if n_list.len() < 2 {
        return Err(Error::InvalidParameter("refinement needs at least two grids".into()));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("refinement grids must be strictly ascending".into()));
    }
    let mut solutions = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let sol = crate::solvers::solve_steady_state(model, basis, forcing, omega, n, None, cfg)?;
        if !sol.converged {
            return Err(Error::NotConverged(format!(
                "refinement member N = {n} failed: {}",
                sol.diagnostic.clone().unwrap_or_default()
            )));
        }
        solutions.push(sol);
    }
    let finest = physical_nodal(basis, &solutions.last().expect("non-empty").eta_nodal);
    let n_fine = *n_list.last().expect("non-empty");
    let fine_grid = crate::collocation::build_grid(n_fine, 2.0 * std::f64::consts::PI / omega)?;
    let fine_cols: Vec<Vec<f64>> = (0..finest.ncols()).map(|i| finest.column(i).iter().copied().collect()).collect();
    let mut out = Vec::with_capacity(n_list.len());
    for (n, solution) in n_list.iter().copied().zip(solutions) {
        let x = physical_nodal(basis, &solution.eta_nodal);
        let h = fine_grid.period() / n as f64;
        let mut err = 0.0_f64;
        for p in 0..n {
            let t = p as f64 * h;
            for (i, col) in fine_cols.iter().enumerate() {
                let reference = if n_fine.is_multiple_of(n) {
                    col[p * (n_fine / n)]
                } else {
                    fine_grid.interpolate(col, t)?
                };
                err = err.max((x[(p, i)] - reference).abs());
            }
        }
        out.push(RefinementEntry {
            n_nodes: n,
            solution,
            error: err,
        });
    }
    Ok(out)
}

/// Closed-form amplitude of a purely linear model under harmonic forcing,
/// sampled on `n_samples` phase points, summed over all retained modes.
pub fn linear_amplitude(
    basis: &ModalBasis,
    forcing: &ForcingSpec,
    omega: f64,
    n_samples: usize,
    metric: AmplitudeMetric,
) -> Result<f64> {
    let modal = basis.project_forcing(forcing)?;
    let mut eta = DMatrix::zeros(n_samples, basis.len());
    let period = 2.0 * std::f64::consts::PI / omega;
    for (j, c) in basis.constants().iter().enumerate() {
        for h in modal.harmonics() {
            let nu = h.k as f64 * omega;
            let re = c.omega0 * c.omega0 - nu * nu;
            let im = 2.0 * c.zeta * c.omega0 * nu;
            let den = re * re + im * im;
            // (c - i s) / (re + i im)
            let ar = (h.cos[j] * re - h.sin[j] * im) / den;
            let ai = (-h.sin[j] * re - h.cos[j] * im) / den;
            for p in 0..n_samples {
                let t = p as f64 * period / n_samples as f64;
                let (s, co) = (nu * t).sin_cos();
                eta[(p, j)] += ar * co - ai * s;
            }
        }
    }
    nodal_amplitude(basis, &eta, metric)
}
