//! Reference steady states from direct time integration of `M x'' + C x' + K x + S(x) = f(t)`.
//!
//! Deliberately shares no numerics with the integral-equation modules: it only
//! uses the model matrices, the polynomial nonlinearity and the forcing.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modal::ModalBasis;
use crate::model::{ForcingSpec, MechModel};
use crate::solvers::PeriodicSolution;

pub const DEFAULT_STEPS_PER_PERIOD: usize = 2048;

#[derive(Debug, Clone)]
pub struct SteadyOrbit {
    /// Displacements at `t_k = k T / K`, one row per sample.
    pub samples: DMatrix<f64>,
    pub omega: f64,
    pub periods_integrated: usize,
    pub settle_residual: f64,
}

impl SteadyOrbit {
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }
}

struct Rhs<'a> {
    model: &'a MechModel,
    forcing: &'a ForcingSpec,
    omega: f64,
    mass_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    force: Vec<f64>,
    nl: Vec<f64>,
}

impl Rhs<'_> {
    /// Acceleration at `(t, x, v)`.
    fn accel(&mut self, t: f64, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.forcing.eval_into(t, self.omega, &mut self.force);
        self.model.nonlinearity().eval_into(x.as_slice(), &mut self.nl);
        let mut rhs = DVector::from_column_slice(&self.force);
        rhs -= self.model.damping() * v;
        rhs -= self.model.stiffness() * x;
        rhs -= DVector::from_column_slice(&self.nl);
        self.mass_chol.solve(&rhs)
    }
}

/// Integrates from rest with classical fourth-order Runge-Kutta until two
/// consecutive periods differ by less than `settle_tol` (sup-norm).
pub fn integrate_to_steady_state(
    model: &MechModel,
    forcing: &ForcingSpec,
    omega: f64,
    settle_tol: f64,
    max_periods: usize,
    steps_per_period: usize,
) -> Result<SteadyOrbit> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidParameter(format!("omega must be positive, got {omega}")));
    }
    if !(settle_tol > 0.0) || max_periods < 2 || steps_per_period < 4 {
        return Err(Error::InvalidParameter(
            "need settle_tol > 0, max_periods >= 2 and steps_per_period >= 4".into(),
        ));
    }
    let n = model.dim();
    if forcing.dim() != n {
        return Err(Error::DimensionMismatch {
            context: "oracle forcing",
            expected: n,
            found: forcing.dim(),
        });
    }
    if model.damping().clone().cholesky().is_none() {
        return Err(Error::InvalidParameter(
            "time-integration oracle needs positive definite damping so transients decay".into(),
        ));
    }
    let mass_chol = model
        .mass()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Validation("mass matrix is not positive definite".into()))?;
    let mut rhs = Rhs {
        model,
        forcing,
        omega,
        mass_chol,
        force: vec![0.0; n],
        nl: vec![0.0; n],
    };

    let period = 2.0 * std::f64::consts::PI / omega;
    let k = steps_per_period;
    let h = period / k as f64;
    let mut x = DVector::zeros(n);
    let mut v = DVector::zeros(n);
    let mut prev: Option<DMatrix<f64>> = None;
    let mut last_residual = f64::INFINITY;
    let mut residuals = Vec::new();
    for period_idx in 0..max_periods {
        let mut samples = DMatrix::zeros(k, n);
        let t0 = period_idx as f64 * period;
        for step in 0..k {
            samples.row_mut(step).copy_from(&x.transpose());
            let t = t0 + step as f64 * h;
            let a1 = rhs.accel(t, &x, &v);
            let x2 = &x + &v * (0.5 * h);
            let v2 = &v + &a1 * (0.5 * h);
            let a2 = rhs.accel(t + 0.5 * h, &x2, &v2);
            let x3 = &x + &v2 * (0.5 * h);
            let v3 = &v + &a2 * (0.5 * h);
            let a3 = rhs.accel(t + 0.5 * h, &x3, &v3);
            let x4 = &x + &v3 * h;
            let v4 = &v + &a3 * h;
            let a4 = rhs.accel(t + h, &x4, &v4);
            x += (&v + &v2 * 2.0 + &v3 * 2.0 + &v4) * (h / 6.0);
            v += (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
        }
        if !x.iter().chain(v.iter()).all(|c| c.is_finite()) {
            return Err(Error::NotConverged(format!(
                "time integration blew up in period {}",
                period_idx + 1
            )));
        }
        if let Some(p) = &prev {
            last_residual = (&samples - p).amax();
            residuals.push(last_residual);
            if last_residual < settle_tol {
                return Ok(SteadyOrbit {
                    samples,
                    omega,
                    periods_integrated: period_idx + 1,
                    settle_residual: last_residual,
                });
            }
        }
        prev = Some(samples);
    }
    let decay = match residuals.as_slice() {
        [.., a, b] if *a > 0.0 => b / a,
        _ => f64::NAN,
    };
    Err(Error::Unsettled {
        periods: max_periods,
        residual: last_residual,
        decay,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitComparison {
    pub sup_error: f64,
    pub rms_error: f64,
    pub per_dof: Vec<f64>,
    /// Best alignment shift, wrapped to `(-T/2, T/2]`.
    pub phase_shift: f64,
}

/// Compares a collocation solution with a time-integrated orbit at the
/// collocation nodes, scanning one period of orbit shifts for the best fit.
pub fn compare_orbit(solution: &PeriodicSolution, basis: &ModalBasis, orbit: &SteadyOrbit) -> Result<OrbitComparison> {
    if (solution.omega - orbit.omega).abs() > 1e-12 * orbit.omega {
        return Err(Error::InvalidParameter(format!(
            "frequency mismatch: solution at {} vs orbit at {}",
            solution.omega, orbit.omega
        )));
    }
    let x = &solution.eta_nodal * basis.modes().transpose();
    if x.ncols() != orbit.samples.ncols() {
        return Err(Error::DimensionMismatch {
            context: "orbit coordinates",
            expected: orbit.samples.ncols(),
            found: x.ncols(),
        });
    }
    let (n_nodes, n) = x.shape();
    let k = orbit.samples.nrows();
    // orbit value at phase fraction s (periodic linear interpolation)
    let sample = |s: f64, i: usize| -> f64 {
        let u = (s * k as f64).rem_euclid(k as f64);
        let l = (u.floor() as usize).min(k - 1);
        let f = u - l as f64;
        orbit.samples[(l, i)] * (1.0 - f) + orbit.samples[((l + 1) % k, i)] * f
    };
    let mut best = (f64::INFINITY, 0usize);
    for shift in 0..k {
        let mut worst = 0.0_f64;
        for p in 0..n_nodes {
            let s = p as f64 / n_nodes as f64 + shift as f64 / k as f64;
            for i in 0..n {
                worst = worst.max((x[(p, i)] - sample(s, i)).abs());
            }
            if worst >= best.0 {
                break;
            }
        }
        if worst < best.0 {
            best = (worst, shift);
        }
    }
    let shift = best.1;
    let mut per_dof = vec![0.0_f64; n];
    let mut sq = 0.0;
    for p in 0..n_nodes {
        let s = p as f64 / n_nodes as f64 + shift as f64 / k as f64;
        for (i, worst) in per_dof.iter_mut().enumerate() {
            let d = (x[(p, i)] - sample(s, i)).abs();
            *worst = worst.max(d);
            sq += d * d;
        }
    }
    let mut frac = shift as f64 / k as f64;
    if frac > 0.5 {
        frac -= 1.0;
    }
    Ok(OrbitComparison {
        sup_error: per_dof.iter().copied().fold(0.0, f64::max),
        rms_error: (sq / (n_nodes * n) as f64).sqrt(),
        per_dof,
        phase_shift: frac * orbit.period(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_oscillator_chain, PolyNonlinearity};

    fn one_dof(zeta: f64) -> MechModel {
        MechModel::new(
            "1dof",
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 2.0 * zeta),
            DMatrix::from_element(1, 1, 1.0),
            PolyNonlinearity::zero(1),
        )
        .unwrap()
    }

    /// `x'' + 2ζx' + x = sin(Ωt)` steady state.
    fn harmonic(zeta: f64, omega: f64, t: f64) -> f64 {
        let re = 1.0 - omega * omega;
        let im = 2.0 * zeta * omega;
        let den = re * re + im * im;
        (re * (omega * t).sin() - im * (omega * t).cos()) / den
    }

    fn orbit_error(steps: usize) -> f64 {
        let model = one_dof(0.1);
        let f = ForcingSpec::uniform_sine(1, 1.0);
        let orbit = integrate_to_steady_state(&model, &f, 0.8, 1e-13, 400, steps).unwrap();
        let t_step = orbit.period() / steps as f64;
        (0..steps)
            .map(|k| (orbit.samples[(k, 0)] - harmonic(0.1, 0.8, k as f64 * t_step)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn linear_orbit_matches_closed_form() {
        assert!(orbit_error(2048) < 1e-6);
    }

    #[test]
    fn fourth_order_convergence() {
        let e1 = orbit_error(32);
        let e2 = orbit_error(64);
        let ratio = e1 / e2;
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn unsettled_and_undamped_errors() {
        let f = ForcingSpec::uniform_sine(1, 1.0);
        assert!(matches!(
            integrate_to_steady_state(&one_dof(0.001), &f, 0.8, 1e-12, 3, 64),
            Err(Error::Unsettled { periods: 3, .. })
        ));
        let undamped = build_oscillator_chain(2, 1.0, 1.0, 0.0, 0.5).unwrap();
        assert!(integrate_to_steady_state(&undamped, &ForcingSpec::uniform_sine(2, 0.1), 0.5, 1e-8, 10, 64).is_err());
    }

    #[test]
    fn self_comparison_is_zero() {
        let model = one_dof(0.2);
        let f = ForcingSpec::uniform_sine(1, 1.0);
        let orbit = integrate_to_steady_state(&model, &f, 0.5, 1e-12, 400, 256).unwrap();
        let basis = crate::modal::compute_modes(&model).unwrap();
        // a solution whose nodal values are the orbit samples themselves
        let sol = PeriodicSolution {
            zeta_nodal: DMatrix::zeros(256, 1),
            eta_nodal: orbit.samples.clone() / basis.modes()[(0, 0)],
            omega: 0.5,
            converged: true,
            picard_iters: 0,
            newton_iters: 0,
            final_residual: 0.0,
            solver_path: crate::solvers::SolverPath::Picard,
            formulation: crate::solvers::Formulation::Reformulated,
            picard_history: vec![],
            newton_history: vec![],
            picard_seconds: 0.0,
            newton_seconds: 0.0,
            diagnostic: None,
        };
        let cmp = compare_orbit(&sol, &basis, &orbit).unwrap();
        assert!(cmp.sup_error < 1e-15);
        assert_eq!(cmp.phase_shift, 0.0);
        let mut other = sol.clone();
        other.omega = 0.6;
        assert!(compare_orbit(&other, &basis, &orbit).is_err());
    }
}
