//! Undamped modal decomposition, damping ratios and modal truncation.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{spectral_norm, ForcingSpec, Harmonic, MechModel};

const CRITICAL_TOL: f64 = 1e-12;
const PROPORTIONAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DampingRegime {
    Underdamped,
    Critical,
    Overdamped,
}

/// Eigenvalue constants of `η'' + 2ζω₀η' + ω₀²η`.
///
/// `lambda_pair` holds `(-ζ + √(ζ²-1))ω₀` and `(-ζ - √(ζ²-1))ω₀` in that
/// order, so `beta` is the root closer to zero when overdamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeConstants {
    pub omega0: f64,
    pub zeta: f64,
    pub regime: DampingRegime,
    /// Real part of the second eigenvalue.
    pub alpha: f64,
    /// Magnitude of the imaginary part of the second eigenvalue.
    pub omega: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda_pair: [Complex64; 2],
}

pub fn eigen_constants(omega0: f64, zeta: f64) -> ModeConstants {
    let disc = Complex64::new(zeta * zeta - 1.0, 0.0).sqrt();
    let l1 = (Complex64::new(-zeta, 0.0) + disc) * omega0;
    let l2 = (Complex64::new(-zeta, 0.0) - disc) * omega0;
    let regime = if (zeta - 1.0).abs() <= CRITICAL_TOL {
        DampingRegime::Critical
    } else if zeta < 1.0 {
        DampingRegime::Underdamped
    } else {
        DampingRegime::Overdamped
    };
    let (lambda_pair, beta, gamma) = match regime {
        DampingRegime::Critical => {
            let l = Complex64::new(-omega0 * zeta, 0.0);
            ([l, l], l.re, l.re)
        }
        _ => ([l1, l2], l1.re, l2.re),
    };
    ModeConstants {
        omega0,
        zeta,
        regime,
        alpha: lambda_pair[1].re,
        omega: lambda_pair[1].im.abs(),
        beta,
        gamma,
        lambda_pair,
    }
}

/// Mass-normalized (possibly truncated) set of undamped vibration modes.
#[derive(Debug, Clone)]
pub struct ModalBasis {
    n: usize,
    modes_matrix: DMatrix<f64>,
    omega0: Vec<f64>,
    zeta: Vec<f64>,
    constants: Vec<ModeConstants>,
    mode_numbers: Vec<usize>,
}

/// All `n` undamped modes, sorted by ascending frequency and mass-normalized.
///
/// Each mode is signed so that its first non-negligible entry is positive.
pub fn compute_modes(model: &MechModel) -> Result<ModalBasis> {
    let n = model.dim();
    let chol = model
        .mass()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::EigenSolver("Cholesky factorization of M failed".into()))?;
    let l = chol.l();
    // L^{-1} K L^{-T}
    let x = l
        .solve_lower_triangular(model.stiffness())
        .ok_or_else(|| Error::EigenSolver("triangular solve failed".into()))?;
    let reduced = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| Error::EigenSolver("triangular solve failed".into()))?;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let eig = reduced.symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let v_sorted = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    let mut modes = l
        .transpose()
        .solve_upper_triangular(&v_sorted)
        .ok_or_else(|| Error::EigenSolver("back substitution failed".into()))?;

    let mut omega0 = Vec::with_capacity(n);
    for (j, &o) in order.iter().enumerate() {
        let lam = eig.eigenvalues[o];
        if !(lam > 1e-12 * scale) || !lam.is_finite() {
            return Err(Error::UnsupportedModel(format!(
                "mode {} has zero frequency (eigenvalue {lam:.3e}); rigid-body modes are not supported",
                j + 1
            )));
        }
        omega0.push(lam.sqrt());
    }

    for j in 0..n {
        let mut col = modes.column_mut(j);
        let cmax = col.amax();
        if let Some(first) = col.iter().find(|v| v.abs() > 1e-8 * cmax).copied() {
            if first < 0.0 {
                col.neg_mut();
            }
        }
    }

    let modal_damping = modes.transpose() * model.damping() * &modes;
    let diag_scale = (0..n).fold(0.0_f64, |a, i| a.max(modal_damping[(i, i)].abs()));
    let mut max_offdiag = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                max_offdiag = max_offdiag.max(modal_damping[(i, j)].abs());
            }
        }
    }
    let tolerance = PROPORTIONAL_TOL * diag_scale;
    if max_offdiag > tolerance {
        return Err(Error::NonProportionalDamping {
            max_offdiag,
            tolerance,
        });
    }

    let zeta: Vec<f64> = (0..n)
        .map(|j| modal_damping[(j, j)] / (2.0 * omega0[j]))
        .collect();
    if let Some(j) = zeta.iter().position(|z| *z < -1e-12) {
        return Err(Error::UnsupportedModel(format!(
            "mode {} has negative damping ratio {:.3e}",
            j + 1,
            zeta[j]
        )));
    }
    let zeta: Vec<f64> = zeta.into_iter().map(|z| z.max(0.0)).collect();
    let constants = omega0
        .iter()
        .zip(&zeta)
        .map(|(&w, &z)| eigen_constants(w, z))
        .collect();
    Ok(ModalBasis {
        n,
        modes_matrix: modes,
        omega0,
        zeta,
        constants,
        mode_numbers: (1..=n).collect(),
    })
}

impl ModalBasis {
    /// Full dimension `n` of the physical coordinates.
    pub fn full_dim(&self) -> usize {
        self.n
    }

    /// Number `m` of retained modes.
    pub fn len(&self) -> usize {
        self.omega0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega0.is_empty()
    }

    /// `n x m` matrix of retained mode shapes.
    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes_matrix
    }

    pub fn omega0(&self) -> &[f64] {
        &self.omega0
    }

    pub fn zeta(&self) -> &[f64] {
        &self.zeta
    }

    pub fn constants(&self) -> &[ModeConstants] {
        &self.constants
    }

    /// One-based numbers (in the full ascending-frequency ordering) of the retained modes.
    pub fn mode_numbers(&self) -> &[usize] {
        &self.mode_numbers
    }

    pub fn modes_spectral_norm(&self) -> f64 {
        spectral_norm(&self.modes_matrix)
    }

    /// Keeps the modes with the given one-based numbers, in the given order.
    ///
    /// Numbers refer to positions in this basis, so truncating the full basis
    /// with `1..=n` returns an identical copy.
    pub fn truncate(&self, mode_numbers: &[usize]) -> Result<ModalBasis> {
        if mode_numbers.is_empty() {
            return Err(Error::InvalidParameter("mode selection is empty".into()));
        }
        let m = self.len();
        let mut seen = vec![false; m];
        for &k in mode_numbers {
            if k == 0 || k > m {
                return Err(Error::InvalidParameter(format!(
                    "mode number {k} outside 1..={m}"
                )));
            }
            if std::mem::replace(&mut seen[k - 1], true) {
                return Err(Error::InvalidParameter(format!("mode number {k} selected twice")));
            }
        }
        let cols: Vec<usize> = mode_numbers.iter().map(|k| k - 1).collect();
        Ok(ModalBasis {
            n: self.n,
            modes_matrix: self.modes_matrix.select_columns(cols.iter()),
            omega0: cols.iter().map(|&c| self.omega0[c]).collect(),
            zeta: cols.iter().map(|&c| self.zeta[c]).collect(),
            constants: cols.iter().map(|&c| self.constants[c]).collect(),
            mode_numbers: cols.iter().map(|&c| self.mode_numbers[c]).collect(),
        })
    }

    /// Modal forcing `φ(t) = U_mᵀ f(t)`, harmonic by harmonic.
    pub fn project_forcing(&self, forcing: &ForcingSpec) -> Result<ForcingSpec> {
        if forcing.dim() != self.n {
            return Err(Error::DimensionMismatch {
                context: "forcing projection",
                expected: self.n,
                found: forcing.dim(),
            });
        }
        let ut = self.modes_matrix.transpose();
        let harmonics = forcing
            .harmonics()
            .iter()
            .map(|h| Harmonic {
                k: h.k,
                cos: &ut * &h.cos,
                sin: &ut * &h.sin,
            })
            .collect();
        ForcingSpec::new(self.len(), harmonics)
    }

    /// Physical displacement `U_m η` for one modal state.
    pub fn to_physical(&self, eta: &DVector<f64>) -> DVector<f64> {
        &self.modes_matrix * eta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_oscillator_chain, PolyNonlinearity};
    use approx::assert_relative_eq;

    fn one_dof(m: f64, c: f64, k: f64) -> MechModel {
        MechModel::new(
            "1dof",
            DMatrix::from_element(1, 1, m),
            DMatrix::from_element(1, 1, c),
            DMatrix::from_element(1, 1, k),
            PolyNonlinearity::zero(1),
        )
        .unwrap()
    }

    #[test]
    fn single_dof_hand_solution() {
        let basis = compute_modes(&one_dof(1.0, 0.4, 4.0)).unwrap();
        assert_relative_eq!(basis.omega0()[0], 2.0, epsilon = 1e-14);
        assert_relative_eq!(basis.modes()[(0, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(basis.zeta()[0], 0.1, epsilon = 1e-14);
    }

    #[test]
    fn two_mass_chain_frequencies() {
        let model = build_oscillator_chain(2, 1.0, 1.0, 1.0, 0.5).unwrap();
        let basis = compute_modes(&model).unwrap();
        assert_relative_eq!(basis.omega0()[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(basis.omega0()[1], 3f64.sqrt(), epsilon = 1e-12);
        assert!(basis.modes()[(0, 0)] > 0.0 && basis.modes()[(0, 1)] > 0.0);
    }

    #[test]
    fn mass_and_stiffness_orthogonality() {
        let mut mass = DMatrix::identity(3, 3) * 2.0;
        mass[(0, 1)] = 0.3;
        mass[(1, 0)] = 0.3;
        let stiff = DMatrix::from_row_slice(3, 3, &[3.0, -1.0, 0.0, -1.0, 2.5, -0.7, 0.0, -0.7, 1.2]);
        let damping = &mass * 0.05 + &stiff * 0.02;
        let model = MechModel::new("dense", mass.clone(), damping, stiff.clone(), PolyNonlinearity::zero(3))
            .unwrap();
        let basis = compute_modes(&model).unwrap();
        let u = basis.modes();
        let gram = u.transpose() * &mass * u;
        assert!((gram - DMatrix::identity(3, 3)).amax() < 1e-10);
        let kk = u.transpose() * &stiff * u;
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { basis.omega0()[i].powi(2) } else { 0.0 };
                assert!((kk[(i, j)] - expect).abs() < 1e-8 * stiff.amax());
            }
        }
        for j in 0..3 {
            let r = (&stiff - &mass * basis.omega0()[j].powi(2)) * u.column(j);
            assert!(r.amax() < 1e-8 * stiff.amax());
        }
        assert!(basis.omega0().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn non_proportional_damping_is_rejected() {
        let model = build_oscillator_chain(3, 1.0, 1.0, 0.0, 0.0).unwrap();
        let mut damping = DMatrix::zeros(3, 3);
        damping[(0, 0)] = 0.5;
        let model = MechModel::new(
            "np",
            model.mass().clone(),
            damping,
            model.stiffness().clone(),
            PolyNonlinearity::zero(3),
        )
        .unwrap();
        assert!(matches!(
            compute_modes(&model),
            Err(Error::NonProportionalDamping { .. })
        ));
    }

    #[test]
    fn rigid_body_mode_is_rejected() {
        let model = one_dof(1.0, 0.1, 0.0);
        assert!(matches!(compute_modes(&model), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn eigen_constants_underdamped() {
        let c = eigen_constants(1.0, 0.5);
        assert_eq!(c.regime, DampingRegime::Underdamped);
        assert_relative_eq!(c.alpha, -0.5, epsilon = 1e-15);
        assert_relative_eq!(c.omega, 0.8660254037844386, epsilon = 1e-15);
        for l in c.lambda_pair {
            assert!((l * l + l + 1.0).norm() < 1e-14);
        }
    }

    #[test]
    fn eigen_constants_critical() {
        let c = eigen_constants(1.0, 1.0);
        assert_eq!(c.regime, DampingRegime::Critical);
        assert_eq!(c.beta, -1.0);
        assert_eq!(c.gamma, -1.0);
    }

    #[test]
    fn eigen_constants_overdamped() {
        let c = eigen_constants(2.0, 2.0);
        assert_eq!(c.regime, DampingRegime::Overdamped);
        let s3 = 3f64.sqrt();
        assert_relative_eq!(c.beta, (-2.0 + s3) * 2.0, epsilon = 1e-14);
        assert_relative_eq!(c.gamma, (-2.0 - s3) * 2.0, epsilon = 1e-14);
        assert!(c.beta < 0.0 && c.gamma < 0.0);
    }

    #[test]
    fn full_truncation_is_identity() {
        let model = build_oscillator_chain(4, 1.0, 1.0, 0.3, 0.5).unwrap();
        let basis = compute_modes(&model).unwrap();
        let same = basis.truncate(&[1, 2, 3, 4]).unwrap();
        assert_eq!(same.modes(), basis.modes());
        assert_eq!(same.omega0(), basis.omega0());
        assert_eq!(same.zeta(), basis.zeta());
    }

    #[test]
    fn first_three_modes_of_benchmark_chain() {
        let model = build_oscillator_chain(20, 1.0, 1.0, 1.0, 0.5).unwrap();
        let basis = compute_modes(&model).unwrap();
        let rom = basis.truncate(&[1, 2, 3]).unwrap();
        assert_eq!(rom.len(), 3);
        assert_eq!(rom.full_dim(), 20);
        assert_eq!(rom.mode_numbers(), &[1, 2, 3]);
        let expected = 2.0 * (std::f64::consts::PI / 42.0).sin();
        assert_relative_eq!(rom.omega0()[0], expected, epsilon = 1e-12);
    }

    #[test]
    fn truncation_rejects_bad_indices() {
        let model = build_oscillator_chain(3, 1.0, 1.0, 0.3, 0.5).unwrap();
        let basis = compute_modes(&model).unwrap();
        assert!(basis.truncate(&[0]).is_err());
        assert!(basis.truncate(&[4]).is_err());
        assert!(basis.truncate(&[2, 2]).is_err());
        assert!(basis.truncate(&[]).is_err());
    }

    #[test]
    fn forcing_projection() {
        let model = build_oscillator_chain(2, 1.0, 1.0, 1.0, 0.5).unwrap();
        let basis = compute_modes(&model).unwrap();
        let f = ForcingSpec::uniform_sine(2, 0.3);
        let phi = basis.project_forcing(&f).unwrap();
        let u = basis.modes();
        for j in 0..2 {
            let expect = 0.3 * (u[(0, j)] + u[(1, j)]);
            assert_relative_eq!(phi.harmonics()[0].sin[j], expect, epsilon = 1e-15);
            assert_eq!(phi.harmonics()[0].cos[j], 0.0);
        }
        let zero = basis.project_forcing(&ForcingSpec::zero(2)).unwrap();
        assert!(zero.harmonics().is_empty());
        assert!(basis.project_forcing(&ForcingSpec::zero(3)).is_err());
    }
}
