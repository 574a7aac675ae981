//! Mechanical models `M x'' + C x' + K x + S(x) = f(t)`.
//!
//! The geometric nonlinearity `S` is a sparse polynomial made of quadratic and
//! cubic monomials, so `S(0) = 0` and `DS(0) = 0` hold structurally. The forcing
//! is a finite, mean-free Fourier series in the excitation frequency.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// One monomial `coef * x[j] * x[k]` contributing to row `row` of `S`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticTerm {
    pub row: usize,
    pub idx: [usize; 2],
    pub coef: f64,
}

/// One monomial `coef * x[j] * x[k] * x[l]` contributing to row `row` of `S`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicTerm {
    pub row: usize,
    pub idx: [usize; 3],
    pub coef: f64,
}

/// Sparse polynomial nonlinearity with only quadratic and cubic terms.
///
/// Indices are zero-based and each index multiset is kept sorted. A given
/// `(row, multiset)` pair may appear at most once.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolyNonlinearity {
    dim: usize,
    quadratic: Vec<QuadraticTerm>,
    cubic: Vec<CubicTerm>,
}

impl PolyNonlinearity {
    pub fn new(dim: usize, quadratic: Vec<QuadraticTerm>, cubic: Vec<CubicTerm>) -> Result<Self> {
        let mut quadratic = quadratic;
        let mut cubic = cubic;
        let mut seen_q = BTreeMap::new();
        for term in quadratic.iter_mut() {
            term.idx.sort_unstable();
            check_indices(dim, term.row, &term.idx)?;
            if !term.coef.is_finite() {
                return Err(Error::Validation(format!(
                    "quadratic term for row {} has a non-finite coefficient",
                    term.row + 1
                )));
            }
            if seen_q.insert((term.row, term.idx), ()).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate quadratic entry for row {} indices {:?} (coefficients must be pre-summed)",
                    term.row + 1,
                    term.idx.map(|i| i + 1)
                )));
            }
        }
        let mut seen_c = BTreeMap::new();
        for term in cubic.iter_mut() {
            term.idx.sort_unstable();
            check_indices(dim, term.row, &term.idx)?;
            if !term.coef.is_finite() {
                return Err(Error::Validation(format!(
                    "cubic term for row {} has a non-finite coefficient",
                    term.row + 1
                )));
            }
            if seen_c.insert((term.row, term.idx), ()).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate cubic entry for row {} indices {:?} (coefficients must be pre-summed)",
                    term.row + 1,
                    term.idx.map(|i| i + 1)
                )));
            }
        }
        Ok(Self {
            dim,
            quadratic,
            cubic,
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            quadratic: Vec::new(),
            cubic: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn quadratic(&self) -> &[QuadraticTerm] {
        &self.quadratic
    }

    pub fn cubic(&self) -> &[CubicTerm] {
        &self.cubic
    }

    pub fn is_linear(&self) -> bool {
        self.quadratic.is_empty() && self.cubic.is_empty()
    }

    /// Writes `S(x)` into `out` without bounds-checking the lengths.
    pub(crate) fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for t in &self.quadratic {
            out[t.row] += t.coef * x[t.idx[0]] * x[t.idx[1]];
        }
        for t in &self.cubic {
            out[t.row] += t.coef * x[t.idx[0]] * x[t.idx[1]] * x[t.idx[2]];
        }
    }

    /// Overwrites `jac` with `DS(x)`.
    pub(crate) fn jacobian_into(&self, x: &[f64], jac: &mut DMatrix<f64>) {
        jac.fill(0.0);
        for t in &self.quadratic {
            let [j, k] = t.idx;
            jac[(t.row, j)] += t.coef * x[k];
            jac[(t.row, k)] += t.coef * x[j];
        }
        for t in &self.cubic {
            let [j, k, l] = t.idx;
            jac[(t.row, j)] += t.coef * x[k] * x[l];
            jac[(t.row, k)] += t.coef * x[j] * x[l];
            jac[(t.row, l)] += t.coef * x[j] * x[k];
        }
    }
}

fn check_indices(dim: usize, row: usize, idx: &[usize]) -> Result<()> {
    if row >= dim || idx.iter().any(|&i| i >= dim) {
        return Err(Error::Validation(format!(
            "nonlinearity index out of range 1..={dim}: row {}, indices {:?}",
            row + 1,
            idx.iter().map(|i| i + 1).collect::<Vec<_>>()
        )));
    }
    Ok(())
}

/// One forcing harmonic `cos_coef * cos(k Ω t) + sin_coef * sin(k Ω t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Harmonic {
    pub k: u32,
    pub cos: DVector<f64>,
    pub sin: DVector<f64>,
}

/// Mean-free Fourier-series forcing `f(t) = Σ_k c_k cos(kΩt) + s_k sin(kΩt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingSpec {
    dim: usize,
    harmonics: Vec<Harmonic>,
}

impl ForcingSpec {
    pub fn new(dim: usize, harmonics: Vec<Harmonic>) -> Result<Self> {
        for h in &harmonics {
            if h.k == 0 {
                return Err(Error::Validation(
                    "forcing harmonic index must be >= 1 (constant loads are not supported)".into(),
                ));
            }
            if h.cos.len() != dim || h.sin.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "forcing harmonic",
                    expected: dim,
                    found: h.cos.len().max(h.sin.len()),
                });
            }
        }
        Ok(Self { dim, harmonics })
    }

    /// `F sin(Ωt)` applied identically to every coordinate.
    pub fn uniform_sine(dim: usize, amplitude: f64) -> Self {
        Self {
            dim,
            harmonics: vec![Harmonic {
                k: 1,
                cos: DVector::zeros(dim),
                sin: DVector::from_element(dim, amplitude),
            }],
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            harmonics: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn harmonics(&self) -> &[Harmonic] {
        &self.harmonics
    }

    /// Returns the same spatial pattern scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            harmonics: self
                .harmonics
                .iter()
                .map(|h| Harmonic {
                    k: h.k,
                    cos: &h.cos * factor,
                    sin: &h.sin * factor,
                })
                .collect(),
        }
    }

    pub fn eval(&self, t: f64, omega: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        self.eval_into(t, omega, out.as_mut_slice());
        out
    }

    pub(crate) fn eval_into(&self, t: f64, omega: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for h in &self.harmonics {
            let (s, c) = (h.k as f64 * omega * t).sin_cos();
            for (i, o) in out.iter_mut().enumerate() {
                *o += h.cos[i] * c + h.sin[i] * s;
            }
        }
    }
}

/// Mass, damping and stiffness matrices plus the polynomial nonlinearity.
#[derive(Debug, Clone)]
pub struct MechModel {
    pub label: String,
    mass: DMatrix<f64>,
    damping: DMatrix<f64>,
    stiffness: DMatrix<f64>,
    nonlinearity: PolyNonlinearity,
}

impl MechModel {
    /// Validates symmetry and definiteness of `M` and `K` and builds the model.
    ///
    /// Proportionality of `C` is checked later, during modal decomposition.
    pub fn new(
        label: impl Into<String>,
        mass: DMatrix<f64>,
        damping: DMatrix<f64>,
        stiffness: DMatrix<f64>,
        nonlinearity: PolyNonlinearity,
    ) -> Result<Self> {
        let n = mass.nrows();
        if n == 0 {
            return Err(Error::InvalidParameter("model dimension must be >= 1".into()));
        }
        for (name, mat) in [("M", &mass), ("C", &damping), ("K", &stiffness)] {
            if mat.nrows() != n || mat.ncols() != n {
                return Err(Error::Validation(format!(
                    "{name} must be {n}x{n}, got {}x{}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("{name} has non-finite entries")));
            }
        }
        if nonlinearity.dim() != n {
            return Err(Error::DimensionMismatch {
                context: "nonlinearity",
                expected: n,
                found: nonlinearity.dim(),
            });
        }
        check_symmetric("M", &mass)?;
        check_symmetric("K", &stiffness)?;
        if mass.clone().cholesky().is_none() {
            return Err(Error::Validation("M is not positive definite".into()));
        }
        let k_eigs = stiffness.clone().symmetric_eigenvalues();
        let k_scale = k_eigs.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let k_min = k_eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        if k_min < -1e-10 * k_scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Validation(format!(
                "K is not positive semi-definite (smallest eigenvalue {k_min:.3e})"
            )));
        }
        Ok(Self {
            label: label.into(),
            mass,
            damping,
            stiffness,
            nonlinearity,
        })
    }

    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn damping(&self) -> &DMatrix<f64> {
        &self.damping
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    pub fn nonlinearity(&self) -> &PolyNonlinearity {
        &self.nonlinearity
    }

    pub fn eval_nonlinearity(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("state has non-finite entries".into()));
        }
        let mut out = DVector::zeros(self.dim());
        self.nonlinearity.eval_into(x.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    pub fn eval_nonlinearity_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_len(x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("state has non-finite entries".into()));
        }
        let mut jac = DMatrix::zeros(self.dim(), self.dim());
        self.nonlinearity.jacobian_into(x.as_slice(), &mut jac);
        Ok(jac)
    }

    /// Upper bound on `sup { ||DS(x)||_2 : ||x||_2 <= radius }`.
    ///
    /// Every coordinate satisfies `|x_i| <= radius` on the ball, so each
    /// Jacobian entry is bounded by summing `|coef| * radius^(degree-1)` over
    /// the monomials that touch it. The spectral norm of that nonnegative
    /// entry-bound matrix dominates the spectral norm of `DS(x)`.
    pub fn lipschitz_on_ball(&self, radius: f64) -> f64 {
        let nl = &self.nonlinearity;
        if nl.is_linear() {
            return 0.0;
        }
        let n = self.dim();
        let mut bound = DMatrix::<f64>::zeros(n, n);
        for t in nl.quadratic() {
            let c = t.coef.abs() * radius;
            bound[(t.row, t.idx[0])] += c;
            bound[(t.row, t.idx[1])] += c;
        }
        for t in nl.cubic() {
            let c = t.coef.abs() * radius * radius;
            for &i in &t.idx {
                bound[(t.row, i)] += c;
            }
        }
        spectral_norm(&bound)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "state vector",
                expected: self.dim(),
                found: len,
            });
        }
        Ok(())
    }
}

pub(crate) fn spectral_norm(mat: &DMatrix<f64>) -> f64 {
    if mat.is_empty() {
        return 0.0;
    }
    mat.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

fn check_symmetric(name: &str, mat: &DMatrix<f64>) -> Result<()> {
    let scale = mat.amax().max(f64::MIN_POSITIVE);
    let asym = (mat - mat.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::Validation(format!(
            "{name} is not symmetric (max |{name} - {name}^T| = {asym:.3e})"
        )));
    }
    Ok(())
}

/// Chain of `n` equal masses between two walls, linked by linear springs,
/// dampers and cubic springs `kappa * (stretch)^3`.
///
/// `S_i(x) = kappa * [(x_i - x_{i-1})^3 - (x_{i+1} - x_i)^3]` with `x_0 = x_{n+1} = 0`.
pub fn build_oscillator_chain(n: usize, mass: f64, k: f64, c: f64, kappa: f64) -> Result<MechModel> {
    if n == 0 {
        return Err(Error::InvalidParameter("chain length n must be >= 1".into()));
    }
    if !(mass > 0.0) || !(k > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mass and stiffness must be positive (mass = {mass}, k = {k})"
        )));
    }
    if !(c >= 0.0) || !(kappa >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "damping and cubic coefficient must be nonnegative (c = {c}, kappa = {kappa})"
        )));
    }
    let tridiag = |a: f64| {
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                2.0 * a
            } else if i.abs_diff(j) == 1 {
                -a
            } else {
                0.0
            }
        })
    };
    let mass_m = DMatrix::identity(n, n) * mass;

    // Spring e joins coordinate e-1 (left) and e (right); springs 0 and n are grounded.
    // With stretch d = x_right - x_left: S_right += kappa d^3, S_left -= kappa d^3.
    let mut acc: BTreeMap<(usize, [usize; 3]), f64> = BTreeMap::new();
    if kappa > 0.0 {
        for e in 0..=n {
            let left = e.checked_sub(1);
            let right = if e < n { Some(e) } else { None };
            // d = x_right - x_left written as signed linear terms.
            let mut lin: Vec<(usize, f64)> = Vec::new();
            if let Some(r) = right {
                lin.push((r, 1.0));
            }
            if let Some(l) = left {
                lin.push((l, -1.0));
            }
            // Expand d^3 into monomials.
            let mut cube: BTreeMap<[usize; 3], f64> = BTreeMap::new();
            for &(a, ca) in &lin {
                for &(b, cb) in &lin {
                    for &(g, cg) in &lin {
                        let mut idx = [a, b, g];
                        idx.sort_unstable();
                        *cube.entry(idx).or_insert(0.0) += ca * cb * cg;
                    }
                }
            }
            for (idx, coef) in cube {
                if let Some(r) = right {
                    *acc.entry((r, idx)).or_insert(0.0) += kappa * coef;
                }
                if let Some(l) = left {
                    *acc.entry((l, idx)).or_insert(0.0) -= kappa * coef;
                }
            }
        }
    }
    let cubic = acc
        .into_iter()
        .filter(|(_, coef)| *coef != 0.0)
        .map(|((row, idx), coef)| CubicTerm { row, idx, coef })
        .collect();
    let nonlinearity = PolyNonlinearity::new(n, Vec::new(), cubic)?;
    MechModel::new(
        format!("chain(n={n}, m={mass}, k={k}, c={c}, kappa={kappa})"),
        mass_m,
        tridiag(c),
        tridiag(k),
        nonlinearity,
    )
}

// ---------------------------------------------------------------------------
// Model file (JSON)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVec {
    Scalar(f64),
    Vec(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TridiagSpec {
    pub diag: ScalarOrVec,
    pub off: ScalarOrVec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Dense(Vec<Vec<f64>>),
    Tridiag { tridiag: TridiagSpec },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NonlinearitySpec {
    #[serde(default)]
    pub quadratic: Vec<Vec<f64>>,
    #[serde(default)]
    pub cubic: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HarmonicSpec {
    pub k: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cos: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sin: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ForcingFileSpec {
    #[serde(default)]
    pub harmonics: Vec<HarmonicSpec>,
}

/// On-disk model description. Nonlinearity indices are one-based.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub n: usize,
    #[serde(rename = "M")]
    pub mass: MatrixSpec,
    #[serde(rename = "C")]
    pub damping: MatrixSpec,
    #[serde(rename = "K")]
    pub stiffness: MatrixSpec,
    #[serde(default)]
    pub nonlinearity: NonlinearitySpec,
    #[serde(default)]
    pub forcing: ForcingFileSpec,
}

impl ModelFile {
    pub fn from_model(model: &MechModel, forcing: &ForcingSpec) -> Self {
        let dense = |m: &DMatrix<f64>| {
            MatrixSpec::Dense(
                (0..m.nrows())
                    .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                    .collect(),
            )
        };
        let nl = model.nonlinearity();
        Self {
            label: Some(model.label.clone()),
            n: model.dim(),
            mass: dense(model.mass()),
            damping: dense(model.damping()),
            stiffness: dense(model.stiffness()),
            nonlinearity: NonlinearitySpec {
                quadratic: nl
                    .quadratic()
                    .iter()
                    .map(|t| {
                        vec![
                            (t.row + 1) as f64,
                            (t.idx[0] + 1) as f64,
                            (t.idx[1] + 1) as f64,
                            t.coef,
                        ]
                    })
                    .collect(),
                cubic: nl
                    .cubic()
                    .iter()
                    .map(|t| {
                        vec![
                            (t.row + 1) as f64,
                            (t.idx[0] + 1) as f64,
                            (t.idx[1] + 1) as f64,
                            (t.idx[2] + 1) as f64,
                            t.coef,
                        ]
                    })
                    .collect(),
            },
            forcing: ForcingFileSpec {
                harmonics: forcing
                    .harmonics()
                    .iter()
                    .map(|h| HarmonicSpec {
                        k: h.k,
                        cos: Some(h.cos.iter().cloned().collect()),
                        sin: Some(h.sin.iter().cloned().collect()),
                    })
                    .collect(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model file serializes")
    }

    pub fn build(&self) -> Result<(MechModel, ForcingSpec)> {
        let n = self.n;
        if n == 0 {
            return Err(Error::Validation("field `n` must be >= 1".into()));
        }
        let mass = matrix_from_spec("M", &self.mass, n)?;
        let damping = matrix_from_spec("C", &self.damping, n)?;
        let stiffness = matrix_from_spec("K", &self.stiffness, n)?;

        let mut quadratic = Vec::with_capacity(self.nonlinearity.quadratic.len());
        for (e, entry) in self.nonlinearity.quadratic.iter().enumerate() {
            if entry.len() != 4 {
                return Err(Error::Parse(format!(
                    "nonlinearity.quadratic[{e}]: expected [i, j, k, coef], got {} values",
                    entry.len()
                )));
            }
            let row = one_based(entry[0], n, "nonlinearity.quadratic", e)?;
            let j = one_based(entry[1], n, "nonlinearity.quadratic", e)?;
            let k = one_based(entry[2], n, "nonlinearity.quadratic", e)?;
            quadratic.push(QuadraticTerm {
                row,
                idx: [j, k],
                coef: entry[3],
            });
        }
        let mut cubic = Vec::with_capacity(self.nonlinearity.cubic.len());
        for (e, entry) in self.nonlinearity.cubic.iter().enumerate() {
            if entry.len() != 5 {
                return Err(Error::Parse(format!(
                    "nonlinearity.cubic[{e}]: expected [i, j, k, l, coef], got {} values",
                    entry.len()
                )));
            }
            let row = one_based(entry[0], n, "nonlinearity.cubic", e)?;
            let j = one_based(entry[1], n, "nonlinearity.cubic", e)?;
            let k = one_based(entry[2], n, "nonlinearity.cubic", e)?;
            let l = one_based(entry[3], n, "nonlinearity.cubic", e)?;
            cubic.push(CubicTerm {
                row,
                idx: [j, k, l],
                coef: entry[4],
            });
        }
        let nonlinearity = PolyNonlinearity::new(n, quadratic, cubic)?;

        let mut harmonics = Vec::new();
        for (e, h) in self.forcing.harmonics.iter().enumerate() {
            let vec_of = |v: &Option<Vec<f64>>, what: &str| -> Result<DVector<f64>> {
                match v {
                    None => Ok(DVector::zeros(n)),
                    Some(v) if v.len() == n => Ok(DVector::from_column_slice(v)),
                    Some(v) => Err(Error::Validation(format!(
                        "forcing.harmonics[{e}].{what}: expected {n} entries, got {}",
                        v.len()
                    ))),
                }
            };
            harmonics.push(Harmonic {
                k: h.k,
                cos: vec_of(&h.cos, "cos")?,
                sin: vec_of(&h.sin, "sin")?,
            });
        }
        let forcing = ForcingSpec::new(n, harmonics)?;
        let label = self.label.clone().unwrap_or_else(|| format!("model(n={n})"));
        let model = MechModel::new(label, mass, damping, stiffness, nonlinearity)?;
        Ok((model, forcing))
    }
}

fn one_based(v: f64, n: usize, field: &str, entry: usize) -> Result<usize> {
    if v.fract() != 0.0 || v < 1.0 || v > n as f64 {
        return Err(Error::Validation(format!(
            "{field}[{entry}]: index {v} is not an integer in 1..={n}"
        )));
    }
    Ok(v as usize - 1)
}

fn band(spec: &ScalarOrVec, len: usize, name: &str, part: &str) -> Result<Vec<f64>> {
    match spec {
        ScalarOrVec::Scalar(v) => Ok(vec![*v; len]),
        ScalarOrVec::Vec(v) if v.len() == len => Ok(v.clone()),
        ScalarOrVec::Vec(v) => Err(Error::Validation(format!(
            "{name}.tridiag.{part}: expected {len} entries, got {}",
            v.len()
        ))),
    }
}

fn matrix_from_spec(name: &str, spec: &MatrixSpec, n: usize) -> Result<DMatrix<f64>> {
    match spec {
        MatrixSpec::Dense(rows) => {
            if rows.len() != n {
                return Err(Error::Validation(format!(
                    "{name}: expected {n} rows, got {}",
                    rows.len()
                )));
            }
            for (i, r) in rows.iter().enumerate() {
                if r.len() != n {
                    return Err(Error::Validation(format!(
                        "{name}[{i}]: expected {n} columns, got {}",
                        r.len()
                    )));
                }
            }
            Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
        }
        MatrixSpec::Tridiag { tridiag } => {
            let diag = band(&tridiag.diag, n, name, "diag")?;
            let off = band(&tridiag.off, n.saturating_sub(1), name, "off")?;
            Ok(DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    diag[i]
                } else if j == i + 1 {
                    off[i]
                } else if i == j + 1 {
                    off[j]
                } else {
                    0.0
                }
            }))
        }
    }
}

/// Parses a model file from JSON text.
pub fn parse_model(text: &str) -> Result<(MechModel, ForcingSpec)> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| {
        Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column()))
    })?;
    file.build()
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(MechModel, ForcingSpec)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_model(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}
