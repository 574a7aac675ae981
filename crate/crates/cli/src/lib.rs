//! Experiment driver behind the `steady-ie` binary: run configuration,
//! forced-response sweeps, output files and summary tables.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use steady_ie::continuation::{sweep_with, Branch};
use steady_ie::oracle::{compare_orbit, integrate_to_steady_state, DEFAULT_STEPS_PER_PERIOD};
use steady_ie::{
    build_oscillator_chain, compute_modes, load_model, AmplitudeMetric, ContractionReport, Direction, ForcingSpec,
    Formulation, FrcPoint, MechModel, ModalBasis, PeriodicSolution, SolverConfig, SolverPath, Strategy, SweepConfig,
};

/// Parameters of the builtin oscillator chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainParams {
    pub n: usize,
    pub mass: f64,
    pub k: f64,
    pub c: f64,
    pub kappa: f64,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            n: 20,
            mass: 1.0,
            k: 1.0,
            c: 1.0,
            kappa: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulationChoice {
    #[default]
    Reformulated,
    Original,
    Both,
}

impl FormulationChoice {
    pub fn formulations(self) -> Vec<Formulation> {
        match self {
            FormulationChoice::Reformulated => vec![Formulation::Reformulated],
            FormulationChoice::Original => vec![Formulation::Original],
            FormulationChoice::Both => vec![Formulation::Reformulated, Formulation::Original],
        }
    }
}

/// Everything a run needs. The JSON config file uses these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Model file; takes the place of `chain` when set.
    pub model: Option<PathBuf>,
    pub chain: Option<ChainParams>,
    /// One-based retained modes; all modes when absent.
    pub modes: Option<Vec<usize>>,
    pub omega_start: f64,
    pub omega_end: f64,
    pub steps: usize,
    /// Forcing amplitudes. Each one scales the model's forcing pattern
    /// (unit sine on every mass for the builtin chain).
    pub force_amps: Vec<f64>,
    #[serde(rename = "N")]
    pub n_nodes: usize,
    pub tol: f64,
    pub max_picard: usize,
    pub max_newton: usize,
    pub strategy: Strategy,
    pub formulation: FormulationChoice,
    pub direction: Direction,
    pub metric: AmplitudeMetric,
    pub warm_start: bool,
    pub contraction: bool,
    pub oracle_check: bool,
    pub oracle_points: usize,
    pub oracle_settle_tol: f64,
    pub oracle_max_periods: usize,
    pub out: PathBuf,
    pub plot: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let solver = SolverConfig::default();
        Self {
            model: None,
            chain: None,
            modes: None,
            omega_start: 0.10,
            omega_end: 0.20,
            steps: 60,
            force_amps: vec![0.01],
            n_nodes: 128,
            tol: solver.tol,
            max_picard: solver.max_picard,
            max_newton: solver.max_newton,
            strategy: Strategy::default(),
            formulation: FormulationChoice::default(),
            direction: Direction::default(),
            metric: AmplitudeMetric::default(),
            warm_start: true,
            contraction: false,
            oracle_check: false,
            oracle_points: 3,
            oracle_settle_tol: 1e-10,
            oracle_max_periods: 20_000,
            out: PathBuf::from("out"),
            plot: true,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            !(self.model.is_some() && self.chain.is_some()),
            "give either a model file or chain parameters, not both"
        );
        ensure!(self.steps > 0, "the frequency list is empty (steps = 0)");
        ensure!(!self.force_amps.is_empty(), "no forcing amplitudes given");
        ensure!(
            self.force_amps.iter().all(|f| f.is_finite()),
            "forcing amplitudes must be finite"
        );
        if let Some(modes) = &self.modes {
            ensure!(!modes.is_empty(), "the mode selection is empty");
        }
        if self.oracle_check {
            ensure!(self.oracle_points > 0, "oracle_points must be at least 1");
        }
        self.solver_config().validate()?;
        self.sweep_config().validate()?;
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            max_picard: self.max_picard,
            max_newton: self.max_newton,
            strategy: self.strategy,
            ..SolverConfig::default()
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            omega_start: self.omega_start,
            omega_end: self.omega_end,
            steps: self.steps,
            direction: self.direction,
            metric: self.metric,
            n_nodes: self.n_nodes,
            warm_start: self.warm_start,
            contraction: self.contraction,
        }
    }

    /// Model, base forcing pattern, full basis and retained basis.
    pub fn load(&self) -> Result<(MechModel, ForcingSpec, ModalBasis, ModalBasis)> {
        let (model, forcing) = match &self.model {
            Some(path) => load_model(path).with_context(|| format!("loading model {}", path.display()))?,
            None => {
                let c = self.chain.unwrap_or_default();
                let model = build_oscillator_chain(c.n, c.mass, c.k, c.c, c.kappa)?;
                let forcing = ForcingSpec::uniform_sine(c.n, 1.0);
                (model, forcing)
            }
        };
        let full = compute_modes(&model)?;
        let basis = match &self.modes {
            Some(modes) => full.truncate(modes)?,
            None => full.clone(),
        };
        Ok((model, forcing, full, basis))
    }
}

/// Parses `n,m,k,c,kappa`.
pub fn parse_chain(s: &str) -> Result<ChainParams> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    ensure!(parts.len() == 5, "expected n,m,k,c,kappa, got '{s}'");
    let n = parts[0].parse().with_context(|| format!("bad chain size '{}'", parts[0]))?;
    let num = |i: usize| -> Result<f64> { parts[i].parse().with_context(|| format!("bad number '{}'", parts[i])) };
    Ok(ChainParams {
        n,
        mass: num(1)?,
        k: num(2)?,
        c: num(3)?,
        kappa: num(4)?,
    })
}

/// Parses a mode list such as `1,2,3` or `1-20`.
pub fn parse_modes(s: &str) -> Result<Vec<usize>> {
    let mut modes = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: usize = a.trim().parse().with_context(|| format!("bad mode range '{part}'"))?;
                let b: usize = b.trim().parse().with_context(|| format!("bad mode range '{part}'"))?;
                ensure!(a <= b, "empty mode range '{part}'");
                modes.extend(a..=b);
            }
            None => modes.push(part.parse().with_context(|| format!("bad mode number '{part}'"))?),
        }
    }
    Ok(modes)
}

/// Parses `start:end:steps`.
pub fn parse_omega(s: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    ensure!(parts.len() == 3, "expected start:end:steps, got '{s}'");
    Ok((
        parts[0].parse().with_context(|| format!("bad start frequency '{}'", parts[0]))?,
        parts[1].parse().with_context(|| format!("bad end frequency '{}'", parts[1]))?,
        parts[2].parse().with_context(|| format!("bad step count '{}'", parts[2]))?,
    ))
}

/// `max_abs_all_dofs`, or `max_abs_dof:i` with a one-based coordinate.
pub fn parse_metric(s: &str) -> Result<AmplitudeMetric> {
    match s.split_once(':') {
        None if s == "max_abs_all_dofs" => Ok(AmplitudeMetric::MaxAbsAllDofs),
        Some(("max_abs_dof", i)) => Ok(AmplitudeMetric::MaxAbsDof(
            i.parse().with_context(|| format!("bad coordinate '{i}'"))?,
        )),
        _ => bail!("unknown metric '{s}' (use max_abs_all_dofs or max_abs_dof:i)"),
    }
}

/// Parses a snake_case enum value through its serde representation.
pub fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).with_context(|| format!("unknown value '{s}'"))
}

/// One CSV row of a forced response curve.
#[derive(Debug, Clone, PartialEq)]
pub struct FrcRow {
    pub omega: f64,
    pub amplitude: f64,
    pub converged: bool,
    pub picard_iters: usize,
    pub newton_iters: usize,
    pub solver_path: Option<SolverPath>,
}

impl From<&FrcPoint> for FrcRow {
    fn from(p: &FrcPoint) -> Self {
        Self {
            omega: p.omega,
            amplitude: p.amplitude,
            converged: p.converged,
            picard_iters: p.picard_iters,
            newton_iters: p.newton_iters,
            solver_path: p.solver_path,
        }
    }
}

impl FrcRow {
    /// Field-wise equality treating NaN amplitudes as equal.
    pub fn same_as(&self, other: &FrcRow) -> bool {
        let amp = self.amplitude == other.amplitude || (self.amplitude.is_nan() && other.amplitude.is_nan());
        amp && self.omega == other.omega
            && self.converged == other.converged
            && self.picard_iters == other.picard_iters
            && self.newton_iters == other.newton_iters
            && self.solver_path == other.solver_path
    }
}

const CSV_HEADER: [&str; 6] = ["omega", "amplitude", "converged", "picard_iters", "newton_iters", "solver_path"];

pub fn write_frc_csv(path: &Path, rows: &[FrcRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            format!("{:.16e}", r.omega),
            format!("{:.16e}", r.amplitude),
            r.converged.to_string(),
            r.picard_iters.to_string(),
            r.newton_iters.to_string(),
            r.solver_path.map_or("none", SolverPath::as_str).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_frc_csv(path: &Path) -> Result<Vec<FrcRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    ensure!(
        r.headers()?.iter().eq(CSV_HEADER.iter().copied()),
        "unexpected CSV header in {}",
        path.display()
    );
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        ensure!(rec.len() == 6, "expected 6 columns, got {}", rec.len());
        rows.push(FrcRow {
            omega: rec[0].parse()?,
            amplitude: rec[1].parse()?,
            converged: rec[2].parse()?,
            picard_iters: rec[3].parse()?,
            newton_iters: rec[4].parse()?,
            solver_path: match &rec[5] {
                "none" => None,
                s => Some(s.parse()?),
            },
        });
    }
    Ok(rows)
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionEntry {
    pub q: Option<f64>,
    pub delta_required: Option<f64>,
    pub first_error: Option<f64>,
    pub radius: Option<f64>,
    pub gamma: Option<f64>,
    pub lipschitz: Option<f64>,
    pub predicted_convergent: bool,
}

impl From<&ContractionReport> for ContractionEntry {
    fn from(c: &ContractionReport) -> Self {
        Self {
            q: finite(c.q),
            delta_required: finite(c.delta_required),
            first_error: finite(c.first_error),
            radius: finite(c.radius),
            gamma: finite(c.gamma),
            lipschitz: finite(c.lipschitz),
            predicted_convergent: c.predicted_convergent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEntry {
    pub omega: f64,
    /// `None` for points without a converged solution.
    pub amplitude: Option<f64>,
    pub converged: bool,
    pub branch: Branch,
    pub solver_path: Option<SolverPath>,
    pub picard_iters: usize,
    pub newton_iters: usize,
    pub final_residual: Option<f64>,
    pub diagnostic: Option<String>,
    pub contraction: Option<ContractionEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub omega: f64,
    pub sup_error: Option<f64>,
    pub rms_error: Option<f64>,
    pub phase_shift: Option<f64>,
    pub periods_integrated: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub force_amp: f64,
    pub formulation: Formulation,
    pub csv: String,
    pub points: Vec<PointEntry>,
    pub converged_points: usize,
    pub picard_iters: usize,
    pub newton_iters: usize,
    pub oracle: Vec<OracleEntry>,
}

/// Wall-clock data; the only part of a report that varies between runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveTiming {
    pub force_amp: f64,
    pub formulation: Formulation,
    pub picard_seconds: f64,
    pub newton_seconds: f64,
    pub sweep_seconds: f64,
    pub point_seconds: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub label: String,
    pub dim: usize,
    pub modes: Vec<usize>,
    pub omega0: Vec<f64>,
    pub zeta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub model: ModelSummary,
    pub curves: Vec<CurveReport>,
    pub timings: Vec<CurveTiming>,
}

fn amp_tag(f: f64) -> String {
    format!("{f}")
}

/// Converged, distinct frequencies farthest (relatively) from every natural frequency.
fn oracle_candidates(solutions: &[PeriodicSolution], omega0: &[f64], count: usize) -> Vec<usize> {
    let detuning = |omega: f64| {
        omega0
            .iter()
            .map(|w| (omega - w).abs() / w)
            .fold(f64::INFINITY, f64::min)
    };
    let mut idx: Vec<usize> = Vec::new();
    for (i, s) in solutions.iter().enumerate() {
        if !idx.iter().any(|&j| solutions[j].omega == s.omega) {
            idx.push(i);
        }
    }
    idx.sort_by(|&a, &b| detuning(solutions[b].omega).total_cmp(&detuning(solutions[a].omega)));
    idx.truncate(count);
    idx.sort_by(|&a, &b| solutions[a].omega.total_cmp(&solutions[b].omega));
    idx
}

fn oracle_check(
    cfg: &RunConfig,
    model: &MechModel,
    forcing: &ForcingSpec,
    basis: &ModalBasis,
    omega0: &[f64],
    solutions: &[PeriodicSolution],
) -> Vec<OracleEntry> {
    oracle_candidates(solutions, omega0, cfg.oracle_points)
        .into_iter()
        .map(|i| {
            let sol = &solutions[i];
            let result = integrate_to_steady_state(
                model,
                forcing,
                sol.omega,
                cfg.oracle_settle_tol,
                cfg.oracle_max_periods,
                DEFAULT_STEPS_PER_PERIOD,
            )
            .and_then(|orbit| compare_orbit(sol, basis, &orbit).map(|c| (c, orbit.periods_integrated)));
            match result {
                Ok((c, periods)) => OracleEntry {
                    omega: sol.omega,
                    sup_error: finite(c.sup_error),
                    rms_error: finite(c.rms_error),
                    phase_shift: finite(c.phase_shift),
                    periods_integrated: Some(periods),
                    error: None,
                },
                Err(e) => OracleEntry {
                    omega: sol.omega,
                    sup_error: None,
                    rms_error: None,
                    phase_shift: None,
                    periods_integrated: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Runs every requested sweep and writes CSV, report and plot files into `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let (model, base_forcing, full, basis) = cfg.load()?;
    if let AmplitudeMetric::MaxAbsDof(i) = cfg.metric {
        ensure!(i >= 1 && i <= model.dim(), "metric coordinate {i} outside 1..={}", model.dim());
    }
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let sweep_cfg = cfg.sweep_config();

    let mut curves = Vec::new();
    let mut timings = Vec::new();
    let mut plot = String::new();
    for &amp in &cfg.force_amps {
        let forcing = base_forcing.scaled(amp);
        for (fi, formulation) in cfg.formulation.formulations().into_iter().enumerate() {
            let solver = SolverConfig {
                formulation,
                ..cfg.solver_config()
            };
            let mut solutions = Vec::new();
            let start = Instant::now();
            let points = sweep_with(&model, &basis, &forcing, &sweep_cfg, &solver, |p, s| {
                if p.converged {
                    solutions.push(s.clone());
                }
            })?;
            let sweep_seconds = start.elapsed().as_secs_f64();

            let rows: Vec<FrcRow> = points.iter().map(FrcRow::from).collect();
            let csv_name = format!("frc_{}_F{}.csv", formulation_tag(formulation), amp_tag(amp));
            write_frc_csv(&cfg.out.join(&csv_name), &rows)?;

            // the oracle does not depend on the formulation, so check the first one only
            let oracle = if cfg.oracle_check && fi == 0 {
                oracle_check(cfg, &model, &forcing, &basis, full.omega0(), &solutions)
            } else {
                Vec::new()
            };

            let _ = writeln!(plot, "# formulation={} F={}", formulation_tag(formulation), amp_tag(amp));
            let _ = writeln!(plot, "# omega amplitude");
            for r in &rows {
                let _ = writeln!(plot, "{:.16e} {:.16e}", r.omega, r.amplitude);
            }
            plot.push_str("\n\n");

            timings.push(CurveTiming {
                force_amp: amp,
                formulation,
                picard_seconds: points.iter().map(|p| p.picard_seconds).sum(),
                newton_seconds: points.iter().map(|p| p.newton_seconds).sum(),
                sweep_seconds,
                point_seconds: points.iter().map(|p| [p.picard_seconds, p.newton_seconds]).collect(),
            });
            curves.push(CurveReport {
                force_amp: amp,
                formulation,
                csv: csv_name,
                converged_points: points.iter().filter(|p| p.converged).count(),
                picard_iters: points.iter().map(|p| p.picard_iters).sum(),
                newton_iters: points.iter().map(|p| p.newton_iters).sum(),
                points: points
                    .iter()
                    .map(|p| PointEntry {
                        omega: p.omega,
                        amplitude: finite(p.amplitude),
                        converged: p.converged,
                        branch: p.branch,
                        solver_path: p.solver_path,
                        picard_iters: p.picard_iters,
                        newton_iters: p.newton_iters,
                        final_residual: finite(p.final_residual),
                        diagnostic: p.diagnostic.clone(),
                        contraction: p.contraction.as_ref().map(ContractionEntry::from),
                    })
                    .collect(),
                oracle,
            });
        }
    }

    let report = RunReport {
        config: cfg.clone(),
        model: ModelSummary {
            label: model.label.clone(),
            dim: model.dim(),
            modes: basis.mode_numbers().to_vec(),
            omega0: basis.omega0().to_vec(),
            zeta: basis.zeta().to_vec(),
        },
        curves,
        timings,
    };
    let json = serde_json::to_string_pretty(&report)?;
    fs::write(cfg.out.join("report.json"), json + "\n")?;
    if cfg.plot {
        fs::write(cfg.out.join("frc.dat"), plot)?;
    }
    Ok(report)
}

pub fn formulation_tag(f: Formulation) -> &'static str {
    match f {
        Formulation::Reformulated => "reformulated",
        Formulation::Original => "original",
    }
}

pub fn load_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing report {}", path.display()))
}

/// Time and iteration totals per forcing amplitude and formulation.
pub fn report_tables(report: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Computational time [s]");
    let _ = writeln!(
        out,
        "{:<14} {:>12} {:>12} {:>12} {:>12}",
        "formulation", "F", "total", "Picard", "Newton"
    );
    for t in &report.timings {
        let _ = writeln!(
            out,
            "{:<14} {:>12} {:>12.3} {:>12.3} {:>12.3}",
            formulation_tag(t.formulation),
            amp_tag(t.force_amp),
            t.picard_seconds + t.newton_seconds,
            t.picard_seconds,
            t.newton_seconds
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "Iterations: total (Picard, Newton)");
    let _ = writeln!(out, "{:<14} {:>12} {:>24} {:>10}", "formulation", "F", "iterations", "converged");
    for c in &report.curves {
        let _ = writeln!(
            out,
            "{:<14} {:>12} {:>24} {:>10}",
            formulation_tag(c.formulation),
            amp_tag(c.force_amp),
            format!("{} ({}, {})", c.picard_iters + c.newton_iters, c.picard_iters, c.newton_iters),
            format!("{}/{}", c.converged_points, c.points.len())
        );
    }
    let oracle: Vec<_> = report.curves.iter().filter(|c| !c.oracle.is_empty()).collect();
    if !oracle.is_empty() {
        let _ = writeln!(out);
        let _ = writeln!(out, "Time-integration check (sup-norm error)");
        for c in oracle {
            for o in &c.oracle {
                let err = match (o.sup_error, &o.error) {
                    (Some(e), _) => format!("{e:.3e}"),
                    (None, Some(msg)) => msg.clone(),
                    (None, None) => "n/a".into(),
                };
                let _ = writeln!(out, "F={:<10} omega={:<12.6} {}", amp_tag(c.force_amp), o.omega, err);
            }
        }
    }
    out
}
