//! Picard and Newton iterations for the collocated integral equations.
//!
//! Nodal matrices are `N x m`: row `p` holds the modal state at node `t_p`.
//! Two unknowns are supported:
//!
//! * reformulated: `ζ = G(η_lin + A ζ)` with `G(y) = -U_mᵀ S(U_m y)` node-wise,
//!   where the convolution `A` is assembled once per period;
//! * original: `η = η_lin + A G(η)`, where the kernel is resampled on every
//!   iteration because the nonlinearity sits inside the integral.
//!
//! All norms are sup-norms over nodes of the Euclidean norm over modes.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::collocation::{
    apply_generators, assemble_convolution, build_grid, kernel_generators, reversed_extension,
    CollocationGrid, ConvolutionOperator,
};
use crate::error::{Error, Result};
use crate::green::{gamma_bound, linear_response, LinearResponsePath};
use crate::modal::ModalBasis;
use crate::model::{ForcingSpec, MechModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    PicardThenNewton,
    PicardOnly,
    NewtonOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    #[default]
    Reformulated,
    Original,
}

/// Which iterations produced (or failed to produce) a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverPath {
    Picard,
    PicardThenNewton,
    Newton,
}

impl SolverPath {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverPath::Picard => "picard",
            SolverPath::PicardThenNewton => "picard_then_newton",
            SolverPath::Newton => "newton",
        }
    }
}

impl std::str::FromStr for SolverPath {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "picard" => Ok(SolverPath::Picard),
            "picard_then_newton" => Ok(SolverPath::PicardThenNewton),
            "newton" => Ok(SolverPath::Newton),
            other => Err(Error::Parse(format!("unknown solver path '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_picard: usize,
    pub max_newton: usize,
    /// Consecutive increases of the Picard update norm treated as divergence.
    pub divergence_window: usize,
    pub strategy: Strategy,
    pub formulation: Formulation,
    pub linear_path: LinearResponsePath,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_picard: 1000,
            max_newton: 25,
            divergence_window: 5,
            strategy: Strategy::default(),
            formulation: Formulation::default(),
            linear_path: LinearResponsePath::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_picard == 0 || self.max_newton == 0 || self.divergence_window == 0 {
            return Err(Error::InvalidParameter(
                "iteration caps and divergence window must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PeriodicSolution {
    /// Nonlinear-force unknown `ζ` at the nodes.
    pub zeta_nodal: DMatrix<f64>,
    /// Modal response `η` at the nodes.
    pub eta_nodal: DMatrix<f64>,
    pub omega: f64,
    pub converged: bool,
    pub picard_iters: usize,
    pub newton_iters: usize,
    pub final_residual: f64,
    pub solver_path: SolverPath,
    pub formulation: Formulation,
    /// Picard update norms `‖ζ_ℓ - ζ_{ℓ-1}‖`.
    pub picard_history: Vec<f64>,
    /// Newton residual norms, starting with the initial guess.
    pub newton_history: Vec<f64>,
    pub picard_seconds: f64,
    pub newton_seconds: f64,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub q: f64,
    /// `‖E‖ / (1 - q)`, infinite when `q ≥ 1`.
    pub delta_required: f64,
    pub first_error: f64,
    pub radius: f64,
    pub gamma: f64,
    pub lipschitz: f64,
    pub predicted_convergent: bool,
}

/// Sup over nodes of the Euclidean norm across modes.
pub fn nodal_norm(z: &DMatrix<f64>) -> f64 {
    (0..z.nrows())
        .map(|p| z.row(p).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, |acc, v| if v.is_nan() { f64::NAN } else { acc.max(v) })
}

fn diff_norm(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for p in 0..a.nrows() {
        let mut s = 0.0;
        for j in 0..a.ncols() {
            let d = a[(p, j)] - b[(p, j)];
            s += d * d;
        }
        if s.is_nan() {
            return f64::NAN;
        }
        worst = worst.max(s.sqrt());
    }
    worst
}

/// Stacks a nodal matrix as `v[p m + j] = z[(p, j)]`.
pub fn flatten_nodal(z: &DMatrix<f64>) -> DVector<f64> {
    let (n, m) = z.shape();
    DVector::from_fn(n * m, |i, _| z[(i / m, i % m)])
}

pub fn unflatten_nodal(v: &DVector<f64>, n_nodes: usize, n_modes: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n_nodes, n_modes, |p, j| v[p * n_modes + j])
}

/// Node-wise modal nonlinearity `G(y) = -U_mᵀ S(U_m y)`.
struct ModalMap<'a> {
    model: &'a MechModel,
    u: &'a DMatrix<f64>,
    ut: DMatrix<f64>,
}

impl<'a> ModalMap<'a> {
    fn new(model: &'a MechModel, basis: &'a ModalBasis) -> Result<Self> {
        if model.dim() != basis.full_dim() {
            return Err(Error::DimensionMismatch {
                context: "model vs modal basis",
                expected: basis.full_dim(),
                found: model.dim(),
            });
        }
        Ok(Self {
            model,
            u: basis.modes(),
            ut: basis.modes().transpose(),
        })
    }

    fn n_modes(&self) -> usize {
        self.u.ncols()
    }

    fn check(&self, y: &DMatrix<f64>, n_nodes: usize) -> Result<()> {
        if y.ncols() != self.n_modes() {
            return Err(Error::DimensionMismatch {
                context: "nodal modes",
                expected: self.n_modes(),
                found: y.ncols(),
            });
        }
        if y.nrows() != n_nodes {
            return Err(Error::DimensionMismatch {
                context: "nodal nodes",
                expected: n_nodes,
                found: y.nrows(),
            });
        }
        Ok(())
    }

    fn apply_into(&self, y: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        let nl = self.model.nonlinearity();
        if nl.is_linear() {
            out.fill(0.0);
            return;
        }
        let (n, m) = (self.u.nrows(), self.n_modes());
        let mut yp = DVector::zeros(m);
        let mut x = DVector::zeros(n);
        let mut s = DVector::zeros(n);
        let mut g = DVector::zeros(m);
        for p in 0..y.nrows() {
            for j in 0..m {
                yp[j] = y[(p, j)];
            }
            x.gemv(1.0, self.u, &yp, 0.0);
            nl.eval_into(x.as_slice(), s.as_mut_slice());
            g.gemv(-1.0, &self.ut, &s, 0.0);
            for j in 0..m {
                out[(p, j)] = g[j];
            }
        }
    }

    fn apply(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(y.nrows(), y.ncols());
        self.apply_into(y, &mut out);
        out
    }

    /// `B_p = U_mᵀ DS(U_m y_p) U_m`, so that `DG(y)_p = -B_p`.
    fn blocks(&self, y: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let (n, m) = (self.u.nrows(), self.n_modes());
        let nl = self.model.nonlinearity();
        let mut jac = DMatrix::zeros(n, n);
        let mut x = DVector::zeros(n);
        (0..y.nrows())
            .map(|p| {
                if nl.is_linear() {
                    return DMatrix::zeros(m, m);
                }
                let yp = y.row(p).transpose();
                x.gemv(1.0, self.u, &yp, 0.0);
                nl.jacobian_into(x.as_slice(), &mut jac);
                &self.ut * &jac * self.u
            })
            .collect()
    }
}

fn check_operator(a: &ConvolutionOperator, basis: &ModalBasis, eta_lin: &DMatrix<f64>) -> Result<()> {
    if a.n_modes() != basis.len() {
        return Err(Error::DimensionMismatch {
            context: "operator modes",
            expected: basis.len(),
            found: a.n_modes(),
        });
    }
    if eta_lin.shape() != (a.n_nodes(), a.n_modes()) {
        return Err(Error::DimensionMismatch {
            context: "linear response nodes",
            expected: a.n_nodes(),
            found: eta_lin.nrows(),
        });
    }
    Ok(())
}

fn omega_of(period: f64) -> f64 {
    2.0 * std::f64::consts::PI / period
}

/// `G(η)` at every node.
pub fn nonlinear_map(model: &MechModel, basis: &ModalBasis, eta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let map = ModalMap::new(model, basis)?;
    map.check(eta, eta.nrows())?;
    Ok(map.apply(eta))
}

/// `η = η_lin + A ζ`.
pub fn recover_eta(a: &ConvolutionOperator, eta_lin: &DMatrix<f64>, zeta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if eta_lin.shape() != zeta.shape() {
        return Err(Error::DimensionMismatch {
            context: "recovery shapes",
            expected: zeta.nrows(),
            found: eta_lin.nrows(),
        });
    }
    Ok(eta_lin + a.apply(zeta)?)
}

/// Cold-start guess `ζ₀ = G(η_lin)`.
pub fn initial_guess(model: &MechModel, basis: &ModalBasis, eta_lin: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    nonlinear_map(model, basis, eta_lin)
}

/// `F(ζ) = ζ - G(η_lin + A ζ)`.
pub fn reformulated_residual(
    model: &MechModel,
    basis: &ModalBasis,
    a: &ConvolutionOperator,
    eta_lin: &DMatrix<f64>,
    zeta: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_operator(a, basis, eta_lin)?;
    let map = ModalMap::new(model, basis)?;
    map.check(zeta, a.n_nodes())?;
    let eta = eta_lin + a.apply(zeta)?;
    Ok(zeta - map.apply(&eta))
}

/// `F(η) = η - η_lin - A G(η)`.
pub fn original_residual(
    model: &MechModel,
    basis: &ModalBasis,
    a: &ConvolutionOperator,
    eta_lin: &DMatrix<f64>,
    eta: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_operator(a, basis, eta_lin)?;
    let map = ModalMap::new(model, basis)?;
    map.check(eta, a.n_nodes())?;
    Ok(eta - eta_lin - a.apply(&map.apply(eta))?)
}

fn jacobian_reformulated_from(a: &ConvolutionOperator, blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let (n, m) = (a.n_nodes(), a.n_modes());
    let mut jac = DMatrix::identity(n * m, n * m);
    for q in 0..n {
        for k in 0..m {
            let g = a.generator(k);
            for p in 0..n {
                let akpq = g[(p + n - q) % n];
                let b = &blocks[p];
                for i in 0..m {
                    jac[(p * m + i, q * m + k)] += b[(i, k)] * akpq;
                }
            }
        }
    }
    jac
}

fn jacobian_original_from(a: &ConvolutionOperator, blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let (n, m) = (a.n_nodes(), a.n_modes());
    let mut jac = DMatrix::identity(n * m, n * m);
    for q in 0..n {
        let b = &blocks[q];
        for k in 0..m {
            for p in 0..n {
                let d = (p + n - q) % n;
                for j in 0..m {
                    jac[(p * m + j, q * m + k)] += a.generator(j)[d] * b[(j, k)];
                }
            }
        }
    }
    jac
}

/// `J = I + B Â` for the reformulated residual, in the flattened layout.
pub fn reformulated_jacobian(
    model: &MechModel,
    basis: &ModalBasis,
    a: &ConvolutionOperator,
    eta_lin: &DMatrix<f64>,
    zeta: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_operator(a, basis, eta_lin)?;
    let map = ModalMap::new(model, basis)?;
    map.check(zeta, a.n_nodes())?;
    let eta = eta_lin + a.apply(zeta)?;
    Ok(jacobian_reformulated_from(a, &map.blocks(&eta)))
}

/// `J = I + Â B` for the original residual, in the flattened layout.
pub fn original_jacobian(
    model: &MechModel,
    basis: &ModalBasis,
    a: &ConvolutionOperator,
    eta_lin: &DMatrix<f64>,
    eta: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_operator(a, basis, eta_lin)?;
    let map = ModalMap::new(model, basis)?;
    map.check(eta, a.n_nodes())?;
    Ok(jacobian_original_from(a, &map.blocks(eta)))
}

struct PicardRun {
    zeta: DMatrix<f64>,
    eta: DMatrix<f64>,
    converged: bool,
    iters: usize,
    residual: f64,
    history: Vec<f64>,
    diagnostic: Option<String>,
}

/// Shared Picard driver; `convolve(z, out)` writes `A z`.
///
/// Iterating `ζ_ℓ = G(η_lin + A ζ_{ℓ-1})`, the update norm `d_ℓ` is exactly
/// the residual of `ζ_{ℓ-1}`, so on success `ζ_{ℓ-1}` and its `η` are returned.
fn picard_loop(
    map: &ModalMap<'_>,
    eta_lin: &DMatrix<f64>,
    z0: &DMatrix<f64>,
    cfg: &SolverConfig,
    mut convolve: impl FnMut(&DMatrix<f64>, &mut DMatrix<f64>),
) -> PicardRun {
    let (n, m) = eta_lin.shape();
    let mut zeta = z0.clone();
    let mut conv = DMatrix::zeros(n, m);
    convolve(&zeta, &mut conv);
    let mut eta = eta_lin + &conv;
    let mut next = DMatrix::zeros(n, m);
    let mut history = Vec::new();
    let mut best: Option<(f64, DMatrix<f64>, DMatrix<f64>)> = None;
    let mut increases = 0usize;
    let mut diagnostic = None;
    for iter in 1..=cfg.max_picard {
        map.apply_into(&eta, &mut next);
        let d = diff_norm(&next, &zeta);
        history.push(d);
        if !d.is_finite() {
            diagnostic = Some(format!("non-finite Picard update at iteration {iter}"));
            break;
        }
        if d <= cfg.tol {
            return PicardRun {
                zeta,
                eta,
                converged: true,
                iters: iter,
                residual: d,
                history,
                diagnostic: None,
            };
        }
        if best.as_ref().is_none_or(|(bd, _, _)| d < *bd) {
            best = Some((d, zeta.clone(), eta.clone()));
        }
        if history.len() >= 2 && d > history[history.len() - 2] {
            increases += 1;
            if increases >= cfg.divergence_window {
                diagnostic = Some(format!(
                    "Picard diverging: update norm rose {increases} times in a row (now {d:.3e})"
                ));
                break;
            }
        } else {
            increases = 0;
        }
        std::mem::swap(&mut zeta, &mut next);
        convolve(&zeta, &mut conv);
        eta.copy_from(eta_lin);
        eta += &conv;
    }
    let diagnostic = diagnostic.unwrap_or_else(|| format!("Picard hit the cap of {} iterations", cfg.max_picard));
    let iters = history.len();
    let (residual, zeta, eta) = best.unwrap_or((f64::NAN, zeta, eta));
    PicardRun {
        zeta,
        eta,
        converged: false,
        iters,
        residual,
        history,
        diagnostic: Some(diagnostic),
    }
}

fn picard_solution(run: PicardRun, omega: f64, formulation: Formulation, seconds: f64) -> PeriodicSolution {
    PeriodicSolution {
        zeta_nodal: run.zeta,
        eta_nodal: run.eta,
        omega,
        converged: run.converged,
        picard_iters: run.iters,
        newton_iters: 0,
        final_residual: run.residual,
        solver_path: SolverPath::Picard,
        formulation,
        picard_history: run.history,
        newton_history: Vec::new(),
        picard_seconds: seconds,
        newton_seconds: 0.0,
        diagnostic: run.diagnostic,
    }
}

/// Fixed-point iteration on `ζ` with the precomputed operator.
pub fn picard_reformulated(
    model: &MechModel,
    basis: &ModalBasis,
    a: &ConvolutionOperator,
    eta_lin: &DMatrix<f64>,
    zeta0: &DMatrix<f64>,
    cfg: &SolverConfig,
) -> Result<PeriodicSolution> {
    cfg.validate()?;
    check_operator(a, basis, eta_lin)?;
    let map = ModalMap::new(model, basis)?;
    map.check(zeta0, a.n_nodes())?;
    let start = Instant::now();
    let run = picard_loop(&map, eta_lin, zeta0, cfg, |z, out| a.apply_into(z, out));
    Ok(picard_solution(run, omega_of(a.period()), Formulation::Reformulated, start.elapsed().as_secs_f64()))
}

/// Fixed-point iteration on `η = η_lin + A G(η)`, resampling the kernel every step.
///
/// `z0` is the initial nonlinear-force iterate; for a displacement seed `η₀`
/// pass `G(η₀)`. Convergence is measured on successive force iterates, which
/// traces the same sequence of `η` as the textbook iteration.
pub fn picard_original(
    model: &MechModel,
    basis: &ModalBasis,
    grid: &CollocationGrid,
    eta_lin: &DMatrix<f64>,
    z0: &DMatrix<f64>,
    cfg: &SolverConfig,
) -> Result<PeriodicSolution> {
    cfg.validate()?;
    let map = ModalMap::new(model, basis)?;
    map.check(eta_lin, grid.len())?;
    map.check(z0, grid.len())?;
    crate::green::ensure_nonresonant(basis, grid.period())?;
    let start = Instant::now();
    let run = picard_loop(&map, eta_lin, z0, cfg, |z, out| {
        let reversed: Vec<Vec<f64>> = basis
            .constants()
            .iter()
            .map(|c| reversed_extension(&crate::collocation::kernel_generator(c, grid)))
            .collect();
        apply_generators(&reversed, z, out);
    });
    Ok(picard_solution(run, grid.omega(), Formulation::Original, start.elapsed().as_secs_f64()))
}

struct NewtonRun {
    state: DMatrix<f64>,
    converged: bool,
    iters: usize,
    residual: f64,
    history: Vec<f64>,
    diagnostic: Option<String>,
}

/// Partial-pivoting LU solve. A singular matrix shows up as non-finite entries.
fn dense_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    use faer::prelude::SpSolver;
    let n = a.nrows();
    let lu = faer::mat::from_column_major_slice::<f64, usize, usize>(a.as_slice(), n, n).partial_piv_lu();
    let rhs = faer::mat::from_column_major_slice::<f64, usize, usize>(b.as_slice(), n, 1);
    let x = lu.solve(rhs);
    DVector::from_fn(n, |i, _| x.read(i, 0))
}

/// Undamped Newton iteration on nodal unknowns.
fn newton_loop(
    x0: &DMatrix<f64>,
    cfg: &SolverConfig,
    mut residual: impl FnMut(&DMatrix<f64>) -> DMatrix<f64>,
    mut jacobian: impl FnMut(&DMatrix<f64>) -> DMatrix<f64>,
) -> NewtonRun {
    let (n, m) = x0.shape();
    let mut x = x0.clone();
    let mut history = Vec::new();
    let mut diagnostic = None;
    let mut converged = false;
    let mut iters = 0;
    loop {
        let f = residual(&x);
        let r = nodal_norm(&f);
        history.push(r);
        if !r.is_finite() {
            diagnostic = Some(format!("non-finite Newton residual after {iters} steps"));
            break;
        }
        if r <= cfg.tol {
            converged = true;
            break;
        }
        if iters == cfg.max_newton {
            diagnostic = Some(format!("Newton hit the cap of {} steps (residual {r:.3e})", cfg.max_newton));
            break;
        }
        let jac = jacobian(&x);
        let delta = dense_solve(&jac, &(-flatten_nodal(&f)));
        if delta.iter().any(|v| !v.is_finite()) {
            diagnostic = Some(format!("singular Newton Jacobian at step {}", iters + 1));
            break;
        }
        x += unflatten_nodal(&delta, n, m);
        iters += 1;
    }
    let residual = *history.last().unwrap_or(&f64::NAN);
    NewtonRun {
        state: x,
        converged,
        iters,
        residual,
        history,
        diagnostic,
    }
}

/// Newton on `F(ζ) = ζ - G(η_lin + A ζ)` with `J = I + B Â`.
pub fn newton_reformulated(
    model: &MechModel,
    basis: &ModalBasis,
    a: &ConvolutionOperator,
    eta_lin: &DMatrix<f64>,
    zeta0: &DMatrix<f64>,
    cfg: &SolverConfig,
) -> Result<PeriodicSolution> {
    cfg.validate()?;
    check_operator(a, basis, eta_lin)?;
    let map = ModalMap::new(model, basis)?;
    map.check(zeta0, a.n_nodes())?;
    let start = Instant::now();
    let eta_of = |z: &DMatrix<f64>| {
        let mut conv = DMatrix::zeros(z.nrows(), z.ncols());
        a.apply_into(z, &mut conv);
        eta_lin + conv
    };
    let run = newton_loop(
        zeta0,
        cfg,
        |z| z - map.apply(&eta_of(z)),
        |z| jacobian_reformulated_from(a, &map.blocks(&eta_of(z))),
    );
    let eta = eta_of(&run.state);
    Ok(PeriodicSolution {
        zeta_nodal: run.state,
        eta_nodal: eta,
        omega: omega_of(a.period()),
        converged: run.converged,
        picard_iters: 0,
        newton_iters: run.iters,
        final_residual: run.residual,
        solver_path: SolverPath::Newton,
        formulation: Formulation::Reformulated,
        picard_history: Vec::new(),
        newton_history: run.history,
        picard_seconds: 0.0,
        newton_seconds: start.elapsed().as_secs_f64(),
        diagnostic: run.diagnostic,
    })
}

/// Newton on `F(η) = η - η_lin - A G(η)` with `J = I + Â B`.
///
/// The returned `ζ` is `G(η)` at the final iterate.
pub fn newton_original(
    model: &MechModel,
    basis: &ModalBasis,
    a: &ConvolutionOperator,
    eta_lin: &DMatrix<f64>,
    eta0: &DMatrix<f64>,
    cfg: &SolverConfig,
) -> Result<PeriodicSolution> {
    cfg.validate()?;
    check_operator(a, basis, eta_lin)?;
    let map = ModalMap::new(model, basis)?;
    map.check(eta0, a.n_nodes())?;
    let start = Instant::now();
    let run = newton_loop(
        eta0,
        cfg,
        |e| {
            let mut conv = DMatrix::zeros(e.nrows(), e.ncols());
            a.apply_into(&map.apply(e), &mut conv);
            e - eta_lin - conv
        },
        |e| jacobian_original_from(a, &map.blocks(e)),
    );
    let zeta = map.apply(&run.state);
    Ok(PeriodicSolution {
        zeta_nodal: zeta,
        eta_nodal: run.state,
        omega: omega_of(a.period()),
        converged: run.converged,
        picard_iters: 0,
        newton_iters: run.iters,
        final_residual: run.residual,
        solver_path: SolverPath::Newton,
        formulation: Formulation::Original,
        picard_history: Vec::new(),
        newton_history: run.history,
        picard_seconds: 0.0,
        newton_seconds: start.elapsed().as_secs_f64(),
        diagnostic: run.diagnostic,
    })
}

/// Contraction test on the ball of radius `radius` around `ζ₀`.
pub fn check_contraction(
    model: &MechModel,
    basis: &ModalBasis,
    a: &ConvolutionOperator,
    eta_lin: &DMatrix<f64>,
    zeta0: &DMatrix<f64>,
    radius: f64,
) -> Result<ContractionReport> {
    let parts = ContractionParts::new(model, basis, a, eta_lin, zeta0)?;
    Ok(parts.report(model, radius))
}

/// Contraction test with the smallest self-consistent radius
/// `δ = ‖E‖ / (1 - q(δ))`, found by fixed-point iteration on `δ`.
pub fn contraction_report(
    model: &MechModel,
    basis: &ModalBasis,
    a: &ConvolutionOperator,
    eta_lin: &DMatrix<f64>,
    zeta0: &DMatrix<f64>,
) -> Result<ContractionReport> {
    let parts = ContractionParts::new(model, basis, a, eta_lin, zeta0)?;
    let mut radius = parts.first_error;
    let mut report = parts.report(model, radius);
    for _ in 0..100 {
        if report.q >= 1.0 {
            return Ok(report);
        }
        let next = report.delta_required * (1.0 + 1e-12);
        if next <= radius {
            break;
        }
        radius = next;
        report = parts.report(model, radius);
    }
    Ok(report)
}

struct ContractionParts {
    gamma: f64,
    u_norm: f64,
    center: f64,
    first_error: f64,
}

impl ContractionParts {
    fn new(
        model: &MechModel,
        basis: &ModalBasis,
        a: &ConvolutionOperator,
        eta_lin: &DMatrix<f64>,
        zeta0: &DMatrix<f64>,
    ) -> Result<Self> {
        check_operator(a, basis, eta_lin)?;
        let map = ModalMap::new(model, basis)?;
        map.check(zeta0, a.n_nodes())?;
        let eta0 = eta_lin + a.apply(zeta0)?;
        let first_error = diff_norm(&map.apply(&eta0), zeta0);
        Ok(Self {
            gamma: gamma_bound(basis, a.period())?,
            u_norm: basis.modes_spectral_norm(),
            center: nodal_norm(&eta0),
            first_error,
        })
    }

    fn report(&self, model: &MechModel, radius: f64) -> ContractionReport {
        let r_x = self.u_norm * (self.center + self.gamma * radius);
        let lipschitz = model.lipschitz_on_ball(r_x);
        let q = self.u_norm * lipschitz * self.u_norm * self.gamma;
        let delta_required = if q < 1.0 {
            self.first_error / (1.0 - q)
        } else {
            f64::INFINITY
        };
        ContractionReport {
            q,
            delta_required,
            first_error: self.first_error,
            radius,
            gamma: self.gamma,
            lipschitz,
            predicted_convergent: q < 1.0 && delta_required.is_finite() && radius >= delta_required,
        }
    }
}

/// Precomputed data for one excitation frequency.
#[derive(Debug, Clone)]
pub struct FrequencySetup {
    pub grid: CollocationGrid,
    pub eta_lin: DMatrix<f64>,
    /// Assembled only for the reformulated formulation.
    pub operator: Option<ConvolutionOperator>,
}

pub fn prepare_frequency(
    basis: &ModalBasis,
    forcing: &ForcingSpec,
    omega: f64,
    n_nodes: usize,
    cfg: &SolverConfig,
) -> Result<FrequencySetup> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidParameter(format!("omega must be positive, got {omega}")));
    }
    let grid = build_grid(n_nodes, 2.0 * std::f64::consts::PI / omega)?;
    let modal_forcing = basis.project_forcing(forcing)?;
    let operator = match cfg.formulation {
        Formulation::Reformulated => Some(assemble_convolution(basis, &grid)?),
        Formulation::Original => None,
    };
    let eta_lin = linear_response(basis, &modal_forcing, &grid, cfg.linear_path)?;
    Ok(FrequencySetup {
        grid,
        eta_lin,
        operator,
    })
}

/// One steady-state solve at excitation frequency `omega`.
///
/// `warm_start` is a nodal `ζ`, reused verbatim. Reformulated solves assemble
/// the convolution exactly once; original solves resample the kernel in every
/// Picard step and only build an operator if Newton is needed.
pub fn solve_steady_state(
    model: &MechModel,
    basis: &ModalBasis,
    forcing: &ForcingSpec,
    omega: f64,
    n_nodes: usize,
    warm_start: Option<&DMatrix<f64>>,
    cfg: &SolverConfig,
) -> Result<PeriodicSolution> {
    cfg.validate()?;
    let setup = prepare_frequency(basis, forcing, omega, n_nodes, cfg)?;
    let z0 = starting_guess(model, basis, &setup, warm_start)?;
    solve_prepared(model, basis, &setup, &z0, cfg)
}

/// `ζ₀`: the warm start if given, else `G(η_lin)`.
pub fn starting_guess(
    model: &MechModel,
    basis: &ModalBasis,
    setup: &FrequencySetup,
    warm_start: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    match warm_start {
        Some(z) => {
            if z.shape() != setup.eta_lin.shape() {
                return Err(Error::DimensionMismatch {
                    context: "warm start",
                    expected: setup.eta_lin.nrows(),
                    found: z.nrows(),
                });
            }
            Ok(z.clone())
        }
        None => initial_guess(model, basis, &setup.eta_lin),
    }
}

impl FrequencySetup {
    /// The assembled operator, or one built from fresh kernel samples for
    /// the original formulation (not counted as an assembly).
    pub fn operator_or_build(&self, basis: &ModalBasis) -> Result<std::borrow::Cow<'_, ConvolutionOperator>> {
        match &self.operator {
            Some(a) => Ok(std::borrow::Cow::Borrowed(a)),
            None => Ok(std::borrow::Cow::Owned(ConvolutionOperator::from_generators(
                self.grid.period(),
                kernel_generators(basis, &self.grid)?,
            ))),
        }
    }
}

/// Runs the configured strategy from `z0` on a prepared frequency.
pub fn solve_prepared(
    model: &MechModel,
    basis: &ModalBasis,
    setup: &FrequencySetup,
    z0: &DMatrix<f64>,
    cfg: &SolverConfig,
) -> Result<PeriodicSolution> {
    cfg.validate()?;
    match (cfg.formulation, setup.operator.as_ref()) {
        (Formulation::Reformulated, Some(a)) => run_strategy(
            cfg,
            || picard_reformulated(model, basis, a, &setup.eta_lin, z0, cfg),
            |seed: &PeriodicSolution| newton_reformulated(model, basis, a, &setup.eta_lin, &seed.zeta_nodal, cfg),
            || newton_reformulated(model, basis, a, &setup.eta_lin, z0, cfg),
        ),
        (Formulation::Reformulated, None) => Err(Error::InvalidParameter(
            "reformulated solve needs an assembled convolution operator".into(),
        )),
        (Formulation::Original, _) => run_strategy(
            cfg,
            || picard_original(model, basis, &setup.grid, &setup.eta_lin, z0, cfg),
            |seed: &PeriodicSolution| {
                let a = setup.operator_or_build(basis)?;
                newton_original(model, basis, &a, &setup.eta_lin, &seed.eta_nodal, cfg)
            },
            || {
                let a = setup.operator_or_build(basis)?;
                let eta0 = recover_eta(&a, &setup.eta_lin, z0)?;
                newton_original(model, basis, &a, &setup.eta_lin, &eta0, cfg)
            },
        ),
    }
}

fn run_strategy(
    cfg: &SolverConfig,
    picard: impl FnOnce() -> Result<PeriodicSolution>,
    newton_from: impl FnOnce(&PeriodicSolution) -> Result<PeriodicSolution>,
    newton_cold: impl FnOnce() -> Result<PeriodicSolution>,
) -> Result<PeriodicSolution> {
    match cfg.strategy {
        Strategy::PicardOnly => picard(),
        Strategy::NewtonOnly => newton_cold(),
        Strategy::PicardThenNewton => {
            let first = picard()?;
            if first.converged {
                return Ok(first);
            }
            let usable = first.zeta_nodal.iter().all(|v| v.is_finite())
                && first.eta_nodal.iter().all(|v| v.is_finite());
            let mut second = if usable { newton_from(&first)? } else { newton_cold()? };
            second.solver_path = SolverPath::PicardThenNewton;
            second.picard_iters = first.picard_iters;
            second.picard_history = first.picard_history;
            second.picard_seconds = first.picard_seconds;
            if !second.converged {
                second.diagnostic = Some(format!(
                    "{}; then {}",
                    first.diagnostic.unwrap_or_default(),
                    second.diagnostic.unwrap_or_default()
                ));
            }
            Ok(second)
        }
    }
}
