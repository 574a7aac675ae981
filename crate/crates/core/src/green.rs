//! Periodic Green's functions of the decoupled modal oscillators.
//!
//! For `η'' + 2ζω₀η' + ω₀²η = φ(t)` with `T`-periodic `φ`, the unique
//! `T`-periodic response is `η(t) = ∫₀ᵀ L(t - s) φ(s) ds`. `L` is evaluated on
//! `(-T, T]`; the causal part uses the Heaviside convention `h(0) = 1`.
//!
//! All exponentials are arranged as `e^{α(t+T)}` with `t + T > 0`, so they
//! never exceed one for damped modes.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::collocation::{circulant_apply, kernel_generator, CollocationGrid};
use crate::error::{Error, Result};
use crate::modal::{DampingRegime, ModalBasis, ModeConstants};
use crate::model::ForcingSpec;

const RESONANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct GreenKernel {
    pub mode: ModeConstants,
    pub period: f64,
}

impl GreenKernel {
    pub fn new(mode: ModeConstants, period: f64) -> Self {
        Self { mode, period }
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        let period = self.period;
        if !(t > -period && t <= period) {
            return Err(Error::OutOfRange(format!(
                "Green's function argument {t} outside (-{period}, {period}]"
            )));
        }
        Ok(self.value_unchecked(t))
    }

    /// Evaluates `L(t)`; `t` must lie in `(-T, T]`.
    pub(crate) fn value_unchecked(&self, t: f64) -> f64 {
        let period = self.period;
        let causal = t >= 0.0;
        let c = &self.mode;
        match c.regime {
            DampingRegime::Underdamped => {
                let (a, w) = (c.alpha, c.omega);
                let decay = (a * period).exp();
                let one_minus = -(a * period).exp_m1();
                let half = (0.5 * w * period).sin();
                let denom = one_minus * one_minus + 4.0 * decay * half * half;
                let periodic = (a * (t + period)).exp()
                    * ((w * (t + period)).sin() - decay * (w * t).sin())
                    / (w * denom);
                if causal {
                    periodic + (a * t).exp() * (w * t).sin() / w
                } else {
                    periodic
                }
            }
            DampingRegime::Critical => {
                let a = c.alpha;
                let one_minus = -(a * period).exp_m1();
                let periodic =
                    (a * (t + period)).exp() * (one_minus * t + period) / (one_minus * one_minus);
                if causal {
                    periodic + t * (a * t).exp()
                } else {
                    periodic
                }
            }
            DampingRegime::Overdamped => {
                let (b, g) = (c.beta, c.gamma);
                let term = |l: f64| (l * (t + period)).exp() / (-(l * period).exp_m1());
                let mut v = term(b) - term(g);
                if causal {
                    v += (b * t).exp() - (g * t).exp();
                }
                v / (b - g)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceViolation {
    /// One-based position of the mode within the basis.
    pub mode: usize,
    pub harmonic: i64,
    pub distance: f64,
}

/// Lists every retained eigenvalue lying on `i (2π/T) l` for some integer `l`.
pub fn check_nonresonance(basis: &ModalBasis, period: f64) -> Vec<ResonanceViolation> {
    let base = 2.0 * std::f64::consts::PI / period;
    let mut out = Vec::new();
    for (j, c) in basis.constants().iter().enumerate() {
        for lam in c.lambda_pair {
            let l = (lam.im / base).round();
            let distance = Complex64::new(lam.re, lam.im - l * base).norm();
            if distance <= RESONANCE_TOL * base {
                out.push(ResonanceViolation {
                    mode: j + 1,
                    harmonic: l as i64,
                    distance,
                });
                break;
            }
        }
    }
    out
}

pub(crate) fn ensure_nonresonant(basis: &ModalBasis, period: f64) -> Result<()> {
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::InvalidParameter(format!("period must be positive, got {period}")));
    }
    match check_nonresonance(basis, period).first() {
        None => Ok(()),
        Some(v) => Err(Error::Resonance {
            mode: v.mode,
            harmonic: v.harmonic,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LinearResponsePath {
    /// Harmonic-by-harmonic frequency response factors.
    #[default]
    ClosedForm,
    /// Lumped quadrature of the Green's function against the sampled forcing.
    Quadrature,
}

/// Periodic response of the linear modal equations at the grid nodes (`N x m`).
pub fn linear_response(
    basis: &ModalBasis,
    modal_forcing: &ForcingSpec,
    grid: &CollocationGrid,
    path: LinearResponsePath,
) -> Result<DMatrix<f64>> {
    let m = basis.len();
    if modal_forcing.dim() != m {
        return Err(Error::DimensionMismatch {
            context: "modal forcing",
            expected: m,
            found: modal_forcing.dim(),
        });
    }
    let period = grid.period();
    ensure_nonresonant(basis, period)?;
    let omega = grid.omega();
    let n_nodes = grid.len();
    let mut eta = DMatrix::zeros(n_nodes, m);
    match path {
        LinearResponsePath::ClosedForm => {
            for (j, c) in basis.constants().iter().enumerate() {
                for h in modal_forcing.harmonics() {
                    let nu = h.k as f64 * omega;
                    let factor = Complex64::new(1.0, 0.0)
                        / Complex64::new(c.omega0 * c.omega0 - nu * nu, 2.0 * c.zeta * c.omega0 * nu);
                    let amp = factor * Complex64::new(h.cos[j], -h.sin[j]);
                    for (p, &t) in grid.nodes().iter().enumerate() {
                        let (s, co) = (nu * t).sin_cos();
                        eta[(p, j)] += amp.re * co - amp.im * s;
                    }
                }
            }
        }
        LinearResponsePath::Quadrature => {
            let mut phi = vec![0.0; m];
            let mut samples = DMatrix::zeros(n_nodes, m);
            for (p, &t) in grid.nodes().iter().enumerate() {
                modal_forcing.eval_into(t, omega, &mut phi);
                for j in 0..m {
                    samples[(p, j)] = phi[j];
                }
            }
            for (j, c) in basis.constants().iter().enumerate() {
                let generator = kernel_generator(c, grid);
                let rev = crate::collocation::reversed_extension(&generator);
                circulant_apply(&rev, samples.column(j).as_slice(), eta.column_mut(j).as_mut_slice());
            }
        }
    }
    Ok(eta)
}

/// `Γ(T) = max T·max(|e^{λT}|, 1) / |1 - e^{λT}|` over every retained eigenvalue.
pub fn gamma_bound(basis: &ModalBasis, period: f64) -> Result<f64> {
    ensure_nonresonant(basis, period)?;
    let mut gamma = 0.0_f64;
    for (j, c) in basis.constants().iter().enumerate() {
        for lam in c.lambda_pair {
            let e = (lam * period).exp();
            let gap = (Complex64::new(1.0, 0.0) - e).norm();
            if gap == 0.0 {
                return Err(Error::Resonance {
                    mode: j + 1,
                    harmonic: 0,
                });
            }
            gamma = gamma.max(period * e.norm().max(1.0) / gap);
        }
    }
    Ok(gamma)
}
