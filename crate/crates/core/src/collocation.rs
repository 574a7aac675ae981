//! Uniform periodic collocation grid and the discrete convolution operators.
//!
//! With nodes `t_p = p T / N` and equal weights `T / N`, the lumped quadrature
//! of `∫₀ᵀ L(t_p - s) z(s) ds` is circulant for every mode: the entry in row
//! `p`, column `q` only depends on `(p - q) mod N`, because `L` is periodic on
//! its negative half. Each mode is therefore stored as one generator vector.

use std::cell::Cell;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::green::{ensure_nonresonant, GreenKernel};
use crate::modal::{ModalBasis, ModeConstants};

pub const MIN_NODES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct CollocationGrid {
    period: f64,
    nodes: Vec<f64>,
}

pub fn build_grid(n_nodes: usize, period: f64) -> Result<CollocationGrid> {
    if n_nodes < MIN_NODES {
        return Err(Error::InvalidParameter(format!(
            "collocation needs at least {MIN_NODES} nodes, got {n_nodes}"
        )));
    }
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::InvalidParameter(format!("period must be positive, got {period}")));
    }
    let h = period / n_nodes as f64;
    Ok(CollocationGrid {
        period,
        nodes: (0..n_nodes).map(|p| p as f64 * h).collect(),
    })
}

impl CollocationGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.period
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.len() as f64
    }

    /// Quadrature weight shared by every node.
    pub fn weight(&self) -> f64 {
        self.spacing()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Periodic hat function centred on node `i`, evaluated at `t`.
    pub fn hat(&self, i: usize, t: f64) -> f64 {
        let h = self.spacing();
        let n = self.len() as f64;
        let s = (t / h - i as f64).rem_euclid(n);
        let d = s.min(n - s);
        (1.0 - d).max(0.0)
    }

    /// Piecewise-linear periodic interpolant of nodal values at `t`.
    pub fn interpolate(&self, values: &[f64], t: f64) -> Result<f64> {
        let n = self.len();
        if values.len() != n {
            return Err(Error::DimensionMismatch {
                context: "interpolation values",
                expected: n,
                found: values.len(),
            });
        }
        let s = (t / self.spacing()).rem_euclid(n as f64);
        let left = (s.floor() as usize).min(n - 1);
        let frac = s - left as f64;
        let right = (left + 1) % n;
        Ok(values[left] * (1.0 - frac) + values[right] * frac)
    }
}

thread_local! {
    static ASSEMBLIES: Cell<usize> = const { Cell::new(0) };
}

/// Number of convolution operators assembled on this thread so far.
pub fn assembly_count() -> usize {
    ASSEMBLIES.with(|c| c.get())
}

pub fn reset_assembly_count() {
    ASSEMBLIES.with(|c| c.set(0));
}

/// Circulant generator `g[d] = (T/N) L(d T/N)` for one mode.
pub fn kernel_generator(mode: &ModeConstants, grid: &CollocationGrid) -> Vec<f64> {
    let kernel = GreenKernel::new(*mode, grid.period());
    let h = grid.spacing();
    let w = grid.weight();
    (0..grid.len())
        .map(|d| w * kernel.value_unchecked(d as f64 * h))
        .collect()
}

/// Generators of every retained mode, checked against resonance.
pub fn kernel_generators(basis: &ModalBasis, grid: &CollocationGrid) -> Result<Vec<Vec<f64>>> {
    ensure_nonresonant(basis, grid.period())?;
    Ok(basis
        .constants()
        .iter()
        .map(|c| kernel_generator(c, grid))
        .collect())
}

/// Layout `r[k] = g[(2N - k) mod N]` for `k` in `0..2N`, so row `p` of the
/// circulant is the contiguous slice `r[N - p .. 2N - p]`.
pub(crate) fn reversed_extension(generator: &[f64]) -> Vec<f64> {
    let n = generator.len();
    (0..2 * n).map(|k| generator[(2 * n - k) % n]).collect()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out = C z` for the circulant whose reversed extension is `rev`.
pub(crate) fn circulant_apply(rev: &[f64], z: &[f64], out: &mut [f64]) {
    let n = z.len();
    debug_assert_eq!(rev.len(), 2 * n);
    for (p, o) in out.iter_mut().enumerate() {
        *o = dot(&rev[n - p..2 * n - p], z);
    }
}

/// `out[:, j] = A_j z[:, j]` for nodal matrices (`N x m`).
pub(crate) fn apply_generators(reversed: &[Vec<f64>], z: &DMatrix<f64>, out: &mut DMatrix<f64>) {
    for (j, rev) in reversed.iter().enumerate() {
        circulant_apply(rev, z.column(j).as_slice(), out.column_mut(j).as_mut_slice());
    }
}

/// Per-mode convolution matrices `A_j`, stored as circulant generators.
///
/// Dense matrices are only built on request; the solvers apply the operator
/// through the generators.
#[derive(Clone)]
pub struct ConvolutionOperator {
    period: f64,
    generators: Vec<Vec<f64>>,
    reversed: Vec<Vec<f64>>,
    spectra: Vec<Vec<Complex64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for ConvolutionOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConvolutionOperator")
            .field("period", &self.period)
            .field("n_nodes", &self.n_nodes())
            .field("n_modes", &self.n_modes())
            .finish()
    }
}

pub fn assemble_convolution(basis: &ModalBasis, grid: &CollocationGrid) -> Result<ConvolutionOperator> {
    let generators = kernel_generators(basis, grid)?;
    ASSEMBLIES.with(|c| c.set(c.get() + 1));
    Ok(ConvolutionOperator::from_generators(grid.period(), generators))
}

impl ConvolutionOperator {
    pub(crate) fn from_generators(period: f64, generators: Vec<Vec<f64>>) -> Self {
        let n = generators.first().map_or(0, Vec::len);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let spectra = generators
            .iter()
            .map(|g| {
                let mut buf: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                forward.process(&mut buf);
                buf
            })
            .collect();
        let reversed = generators.iter().map(|g| reversed_extension(g)).collect();
        Self {
            period,
            generators,
            reversed,
            spectra,
            forward,
            inverse,
        }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn n_nodes(&self) -> usize {
        self.generators.first().map_or(0, Vec::len)
    }

    pub fn n_modes(&self) -> usize {
        self.generators.len()
    }

    pub fn generator(&self, mode: usize) -> &[f64] {
        &self.generators[mode]
    }

    fn check_shape(&self, z: &DMatrix<f64>) -> Result<()> {
        if z.nrows() != self.n_nodes() {
            return Err(Error::DimensionMismatch {
                context: "convolution nodes",
                expected: self.n_nodes(),
                found: z.nrows(),
            });
        }
        if z.ncols() != self.n_modes() {
            return Err(Error::DimensionMismatch {
                context: "convolution modes",
                expected: self.n_modes(),
                found: z.ncols(),
            });
        }
        Ok(())
    }

    /// Direct `O(N²m)` application to nodal values (`N x m`).
    pub fn apply(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_shape(z)?;
        let mut out = DMatrix::zeros(z.nrows(), z.ncols());
        apply_generators(&self.reversed, z, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_into(&self, z: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        apply_generators(&self.reversed, z, out);
    }

    /// Same product through FFT circular convolution.
    pub fn apply_fft(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_shape(z)?;
        let n = self.n_nodes();
        let mut out = DMatrix::zeros(n, self.n_modes());
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (j, spec) in self.spectra.iter().enumerate() {
            for (b, &v) in buf.iter_mut().zip(z.column(j).iter()) {
                *b = Complex64::new(v, 0.0);
            }
            self.forward.process(&mut buf);
            for (b, s) in buf.iter_mut().zip(spec) {
                *b *= s;
            }
            self.inverse.process(&mut buf);
            for (o, b) in out.column_mut(j).iter_mut().zip(&buf) {
                *o = b.re / n as f64;
            }
        }
        Ok(out)
    }

    /// Dense `N x N` matrix of one mode.
    pub fn dense_matrix(&self, mode: usize) -> DMatrix<f64> {
        let g = &self.generators[mode];
        let n = g.len();
        DMatrix::from_fn(n, n, |p, q| g[(p + n - q) % n])
    }

    /// `max_j ‖A_j‖∞`; every row of a circulant has the same absolute sum.
    pub fn inf_norm(&self) -> f64 {
        self.generators
            .iter()
            .map(|g| g.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}
