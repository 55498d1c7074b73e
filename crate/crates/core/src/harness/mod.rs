//! Configuration-driven experiments: trajectories from each method, rate
//! fits, comparisons and convergence sweeps.

mod config;
mod output;

pub use config::{ExperimentConfig, Method, ModelSpec, SpinBosonSpec};
pub use output::{fmt12, read_json, sidecar_path, write_file, write_json, Trajectory};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, CircuitStats};
use crate::dilation::{self, SvdLcu};
use crate::heom::{self, Truncation};
use crate::linalg::{c, CMatrix, CVector};
use crate::lindblad::{evolve_lindblad, LindbladGenerator, LindbladOptions};
use crate::models::SystemModel;
use crate::propagator::{compute_propagator_series, encode_initial, PropagatorSeries, Subspace};
use crate::qsim::{populations_from_counts, sample_counts, RegisterState};
use crate::units::Units;
use crate::{Error, Result, C64};

/// Everything a run produces besides the files themselves.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub trajectory: Trajectory,
    pub truncation: Option<Truncation>,
    /// Largest singular value of `G(t)` per grid point (circuit methods).
    pub sigma0: Option<Vec<f64>>,
    /// Compiled-circuit statistics per grid point (circuit methods with a
    /// main register of at most two qubits).
    pub circuit_stats: Option<Vec<CircuitStats>>,
}

impl RunResult {
    pub fn metadata(&self) -> serde_json::Value {
        let cfg: serde_json::Map<String, serde_json::Value> = self
            .config
            .to_pairs()
            .into_iter()
            .map(|(k, v)| (k, serde_json::Value::String(v)))
            .collect();
        serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "model": self.config.model.name(),
            "method": self.config.method.to_string(),
            "config": cfg,
            "columns": self.trajectory.columns,
            "truncation": self.truncation,
            "sigma0": self.sigma0,
            "circuit_stats": self.circuit_stats,
        })
    }

    /// Writes the CSV and its `.json` sidecar.
    pub fn write(&self, csv: &std::path::Path) -> Result<()> {
        self.trajectory.write_csv(csv)?;
        write_json(&sidecar_path(csv), &self.metadata())
    }
}

fn subspace_of(cfg: &ExperimentConfig, model: &SystemModel) -> Result<Subspace> {
    Subspace::parse(model, &cfg.subspace.iter().map(String::as_str).collect::<Vec<_>>())
}

/// Column names for a subspace: `P_XX` for populations, `RE_XY`/`IM_XY`
/// for coherences, or `ABS_XY` when only magnitudes are available.
pub fn column_names(sub: &Subspace, magnitudes_only: bool) -> Vec<String> {
    let mut cols = Vec::new();
    for (&(p, q), l) in sub.entries().iter().zip(sub.labels()) {
        if p == q {
            cols.push(format!("P_{l}"));
        } else if magnitudes_only {
            cols.push(format!("ABS_{l}"));
        } else {
            cols.push(format!("RE_{l}"));
            cols.push(format!("IM_{l}"));
        }
    }
    cols
}

fn row_from(sub: &Subspace, value: impl Fn(usize) -> C64) -> Vec<f64> {
    let mut row = Vec::new();
    for (j, &(p, q)) in sub.entries().iter().enumerate() {
        let v = value(j);
        if p == q {
            row.push(v.re);
        } else {
            row.push(v.re);
            row.push(v.im);
        }
    }
    row
}

/// Runs one experiment.
pub fn run(cfg: &ExperimentConfig) -> Result<RunResult> {
    cfg.validate()?;
    let model = cfg.model(cfg.k_terms)?;
    let sub = subspace_of(cfg, &model)?;
    let grid = cfg.grid();
    match cfg.method {
        Method::Heom => {
            let tr = cfg.truncation();
            let rhos = heom::reduced_trajectory(&model, &tr, &grid, cfg.dt)?;
            let mut traj = Trajectory::new(column_names(&sub, false));
            for (t, rho) in grid.iter().zip(&rhos) {
                traj.push(*t, row_from(&sub, |j| rho[sub.entries()[j]]));
            }
            Ok(RunResult {
                config: cfg.clone(),
                trajectory: traj,
                truncation: Some(tr),
                sigma0: None,
                circuit_stats: None,
            })
        }
        Method::Lindblad => {
            let lmodel = model.with_bath_terms(cfg.lindblad_k)?;
            let gen = LindbladGenerator::build(
                &lmodel,
                LindbladOptions {
                    lamb_shift: cfg.lamb_shift,
                    ..Default::default()
                },
            )?;
            let rhos = evolve_lindblad(&gen, &model.rho0, &grid, cfg.dt)?;
            let mut traj = Trajectory::new(column_names(&sub, false));
            for (t, rho) in grid.iter().zip(&rhos) {
                traj.push(*t, row_from(&sub, |j| rho[sub.entries()[j]]));
            }
            Ok(RunResult {
                config: cfg.clone(),
                trajectory: traj,
                truncation: None,
                sigma0: None,
                circuit_stats: None,
            })
        }
        Method::Circuit | Method::CircuitShots => {
            let series = compute_propagator_series(&model, &sub, &grid, &cfg.truncation(), cfg.dt)?;
            circuit_run(cfg, &model, &series)
        }
    }
}

/// Circuit-method trajectory from an existing propagator series.
pub fn circuit_run(cfg: &ExperimentConfig, model: &SystemModel, series: &PropagatorSeries) -> Result<RunResult> {
    let sub = &series.subspace;
    let phi0 = encode_initial(&model.rho0, sub)?;
    let shots = cfg.method == Method::CircuitShots;
    let points: Vec<(Vec<f64>, f64, Option<CircuitStats>)> = (0..series.len())
        .into_par_iter()
        .map(|i| {
            let p = circuit_point(
                series,
                i,
                &phi0,
                if shots {
                    Some((cfg.shots, cfg.seed.wrapping_add(i as u64)))
                } else {
                    None
                },
            )?;
            let row = if shots {
                p.shot_magnitudes.clone().expect("sampling was requested")
            } else {
                row_from(sub, |j| p.values[j])
            };
            Ok((row, p.sigma0, p.stats))
        })
        .collect::<Result<_>>()?;
    let mut traj = Trajectory::new(column_names(sub, shots));
    let mut sigma0 = Vec::new();
    let mut stats = Vec::new();
    for (t, (row, s0, st)) in series.times.iter().zip(points) {
        traj.push(*t, row);
        sigma0.push(s0);
        if let Some(st) = st {
            stats.push(st);
        }
    }
    let stats = (stats.len() == series.len()).then_some(stats);
    Ok(RunResult {
        config: cfg.clone(),
        trajectory: traj,
        truncation: Some(series.meta.truncation.clone()),
        sigma0: Some(sigma0),
        circuit_stats: stats,
    })
}

/// One grid point of a circuit run.
#[derive(Debug, Clone)]
pub struct CircuitPoint {
    pub lcu: SvdLcu,
    pub circuit: Circuit,
    pub sigma0: f64,
    /// Statevector estimate of `G(t) phi0` for each subspace entry.
    pub values: Vec<C64>,
    /// Shot estimates `sigma0 |phi0| sqrt(N_i / N_c)`.
    pub shot_magnitudes: Option<Vec<f64>>,
    pub stats: Option<CircuitStats>,
}

/// Builds, simulates and optionally samples the dilation circuit for
/// `G(t_i)` acting on the (unnormalized) register vector `phi0`.
pub fn circuit_point(series: &PropagatorSeries, i: usize, phi0: &CVector, sampling: Option<(u64, u64)>) -> Result<CircuitPoint> {
    let (lcu, circ) = dilation::dilate(&series.mats[i])?;
    let norm0 = phi0.norm();
    let state = RegisterState::from_main(&(phi0 / c(norm0, 0.0)), 1)?.apply(&circ)?;
    let block = state.block(1, 0);
    let scale = lcu.sigma0 * norm0;
    let values: Vec<C64> = block.iter().take(series.subspace.len()).map(|a| a * scale).collect();
    let shot_magnitudes = match sampling {
        Some((shots, seed)) => {
            let counts = sample_counts(&state, shots, seed)?;
            let p = populations_from_counts(&counts, lcu.sigma0, series.subspace.register_dim())?;
            Some(p.into_iter().take(series.subspace.len()).map(|x| x * norm0).collect())
        }
        None => None,
    };
    let stats = if series.subspace.n_qubits() <= 2 {
        Some(circuit_stats(&circ)?)
    } else {
        None
    };
    Ok(CircuitPoint {
        sigma0: lcu.sigma0,
        lcu,
        circuit: circ,
        values,
        shot_magnitudes,
        stats,
    })
}

/// Statistics of the export form of a circuit (dense blocks compiled).
pub fn circuit_stats(circ: &Circuit) -> Result<CircuitStats> {
    Ok(dilation::compile(circ)?.stats())
}

/// Propagator series for a configuration's model, subspace and grid.
pub fn propagator_series(cfg: &ExperimentConfig) -> Result<PropagatorSeries> {
    let model = cfg.model(cfg.k_terms)?;
    let sub = subspace_of(cfg, &model)?;
    compute_propagator_series(&model, &sub, &cfg.grid(), &cfg.truncation(), cfg.dt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub window: (f64, f64),
    /// Decay rate in s⁻¹ (or inverse model time for dimensionless models).
    pub rate: f64,
    /// Root-mean-square residual of the `ln P` regression.
    pub residual: f64,
    pub points: usize,
    pub method: String,
}

/// Least-squares fit of `ln P(t)` over the window; `k = -slope`.
pub fn fit_rate(times: &[f64], values: &[f64], window: (f64, f64), units: Units) -> Result<RateFit> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::Fit(format!("empty window [{lo}, {hi}]")));
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= lo - 1e-9 && **t <= hi + 1e-9)
        .map(|(t, v)| (*t, *v))
        .collect();
    if pts.len() < 10 {
        return Err(Error::Fit(format!(
            "only {} grid points inside [{lo}, {hi}], need at least 10",
            pts.len()
        )));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::Fit(format!("non-positive population {v} at t = {t}")));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxx = pts.iter().map(|p| (p.0 - mt).powi(2)).sum::<f64>();
    let sxy = pts.iter().map(|p| (p.0 - mt) * (p.1.ln() - my)).sum::<f64>();
    let slope = sxy / sxx;
    let resid = (pts.iter().map(|p| (p.1.ln() - (my + slope * (p.0 - mt))).powi(2)).sum::<f64>() / n).sqrt();
    Ok(RateFit {
        window,
        rate: units.rate_to_per_second(-slope),
        residual: resid,
        points: pts.len(),
        method: "ln-linear".into(),
    })
}

/// Rate fit of a named trajectory column.
pub fn fit_column(traj: &Trajectory, column: &str, window: (f64, f64), units: Units) -> Result<RateFit> {
    let v = traj.column(column).ok_or_else(|| Error::Fit(format!("no column `{column}`")))?;
    fit_rate(&traj.times, &v, window, units)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDeviation {
    pub column: String,
    pub max: f64,
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRatio {
    pub column: String,
    pub rate_a: f64,
    pub rate_b: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub deviations: Vec<ColumnDeviation>,
    pub rates: Vec<RateRatio>,
}

/// Per-column max and RMS deviations over shared columns, plus `k_a / k_b`
/// for population columns when a fit window is given and both fits succeed.
pub fn compare(a: &Trajectory, b: &Trajectory, window: Option<(f64, f64)>, units: Units) -> Result<Comparison> {
    if a.times.len() != b.times.len() || a.times.iter().zip(&b.times).any(|(x, y)| (x - y).abs() > 1e-9 * x.abs().max(1.0)) {
        return Err(Error::GridMismatch(format!(
            "time grids differ ({} vs {} points)",
            a.len(),
            b.len()
        )));
    }
    let shared: Vec<&String> = a.columns.iter().filter(|c| b.column_index(c).is_some()).collect();
    if shared.is_empty() {
        return Err(Error::GridMismatch("no observable columns in common".into()));
    }
    let mut deviations = Vec::new();
    let mut rates = Vec::new();
    for col in shared {
        let (x, y) = (a.column(col).unwrap(), b.column(col).unwrap());
        let diffs: Vec<f64> = x.iter().zip(&y).map(|(p, q)| (p - q).abs()).collect();
        let max = diffs.iter().copied().fold(0.0, f64::max);
        let rms = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt();
        deviations.push(ColumnDeviation {
            column: col.clone(),
            max,
            rms,
        });
        if let (Some(w), true) = (window, col.starts_with("P_")) {
            if let (Ok(fa), Ok(fb)) = (fit_rate(&a.times, &x, w, units), fit_rate(&b.times, &y, w, units)) {
                rates.push(RateRatio {
                    column: col.clone(),
                    rate_a: fa.rate,
                    rate_b: fb.rate,
                    ratio: fa.rate / fb.rate,
                });
            }
        }
    }
    Ok(Comparison { deviations, rates })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    K,
    L,
    /// Cap of the first expansion term only.
    L1,
    #[serde(rename = "D_h")]
    Dh,
    #[serde(rename = "dt")]
    Dt,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "K" => Ok(SweepParam::K),
            "L" => Ok(SweepParam::L),
            "L1" => Ok(SweepParam::L1),
            "D_h" => Ok(SweepParam::Dh),
            "dt" => Ok(SweepParam::Dt),
            other => Err(Error::config(
                "param",
                format!("unknown sweep parameter `{other}` (K, L, L1, D_h, dt)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    /// Tracked observables at the final grid time.
    pub final_values: Vec<f64>,
    /// Max deviation over all times and columns from the previous row.
    pub deviation: Option<f64>,
    /// Fitted rate of the first population column, when a window is set.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub param: SweepParam,
    pub columns: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// Deviations between consecutive parameter values.
    pub fn deviations(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.deviation).collect()
    }

    /// True when the last step moved every observable by less than `tol`.
    pub fn converged(&self, tol: f64) -> bool {
        self.deviations().last().is_some_and(|&d| d < tol)
    }
}

/// Reruns `cfg` for each parameter value (a monotone list) and reports the
/// change of the tracked observables between consecutive values.
pub fn convergence_sweep(cfg: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<SweepReport> {
    if values.len() < 2 {
        return Err(Error::config("values", "a sweep needs at least two values"));
    }
    let inc = values.windows(2).all(|w| w[1] > w[0]);
    let dec = values.windows(2).all(|w| w[1] < w[0]);
    if !inc && !dec {
        return Err(Error::config("values", "sweep values must be strictly monotone"));
    }
    let mut rows: Vec<SweepRow> = Vec::new();
    let mut prev: Option<Trajectory> = None;
    let mut columns = Vec::new();
    for &v in values {
        let c = sweep_config(cfg, param, v)?;
        let res = run(&c)?;
        let traj = res.trajectory;
        let deviation = prev.as_ref().map(|p| {
            p.values
                .iter()
                .zip(&traj.values)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max)
        });
        let rate = match (c.fit_window, traj.columns.iter().find(|n| n.starts_with("P_"))) {
            (Some(w), Some(col)) => fit_column(&traj, col, w, c.model(1)?.units).ok().map(|f| f.rate),
            _ => None,
        };
        rows.push(SweepRow {
            value: v,
            final_values: traj.values.last().cloned().unwrap_or_default(),
            deviation,
            rate,
        });
        columns = traj.columns.clone();
        prev = Some(traj);
    }
    Ok(SweepReport { param, columns, rows })
}

fn sweep_config(cfg: &ExperimentConfig, param: SweepParam, v: f64) -> Result<ExperimentConfig> {
    let as_int = || -> Result<usize> {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::config("values", format!("{v} is not a positive integer")))
        }
    };
    let mut c = cfg.clone();
    match param {
        SweepParam::K => c.k_terms = as_int()?,
        SweepParam::L => c.caps = vec![as_int()?],
        SweepParam::L1 => {
            let l = as_int()?;
            if c.caps.len() == 1 {
                c.caps.push(c.caps[0]);
            }
            c.caps[0] = l;
        }
        SweepParam::Dh => c.depth = as_int()?,
        SweepParam::Dt => c.dt = v,
    }
    c.validate()?;
    Ok(c)
}

/// Bath decomposition table for the configured model.
pub fn decomposition_table(cfg: &ExperimentConfig, k_terms: usize) -> Result<serde_json::Value> {
    let model = cfg.model(k_terms)?;
    let bath = &model.couplings[0].bath;
    Ok(serde_json::json!({
        "model": model.label,
        "eta": bath.density.eta,
        "omega_c": bath.density.omega_c,
        "beta": bath.beta,
        "baths": model.couplings.len(),
        "modes": bath.modes.iter().map(|m| serde_json::json!({"d": [m.d.re, m.d.im], "v": m.v, "r": m.r})).collect::<Vec<_>>(),
    }))
}

/// Reduced density matrices along a hierarchy run; exposed for callers that
/// need the full matrix rather than subspace columns.
pub fn heom_density_trajectory(cfg: &ExperimentConfig) -> Result<Vec<CMatrix>> {
    let model = cfg.model(cfg.k_terms)?;
    heom::reduced_trajectory(&model, &cfg.truncation(), &cfg.grid(), cfg.dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sb(method: &str, extra: &str) -> ExperimentConfig {
        ExperimentConfig::parse(&format!(
            "model = spin-boson\nmethod = {method}\nt_max = 2\ngrid_step = 0.2\nK = 2\nL = 3\nD_h = 3\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn synthetic_exponential_rate() {
        let k = 1e11 * 1e-15;
        let times: Vec<f64> = (0..=50).map(|i| 3000.0 + 20.0 * i as f64).collect();
        let p: Vec<f64> = times.iter().map(|t| (-k * t).exp()).collect();
        let f = fit_rate(&times, &p, (3000.0, 4000.0), Units::Wavenumber).unwrap();
        assert!((f.rate / 1e11 - 1.0).abs() < 1e-6);
        assert_eq!(f.points, 51);
        assert!(fit_rate(&times, &p, (3000.0, 3100.0), Units::Wavenumber).is_err());
        let mut bad = p.clone();
        bad[3] = 0.0;
        assert!(matches!(
            fit_rate(&times, &bad, (3000.0, 4000.0), Units::Wavenumber),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn heom_schema() {
        let r = run(&sb("heom", "subspace = DD,DA,AA\n")).unwrap();
        assert_eq!(r.trajectory.columns, vec!["P_DD", "RE_DA", "IM_DA", "P_AA"]);
        assert_eq!(r.trajectory.len(), 11);
        assert_eq!(r.trajectory.values[0], vec![1.0, 0.0, 0.0, 0.0]);
        let tri = ExperimentConfig::parse("model = triad-bent\nt_max = 0\n").unwrap();
        let r = run(&tri.with_overrides(&[("subspace".into(), "DD,AA".into())]).unwrap()).unwrap();
        assert_eq!(r.trajectory.columns, vec!["P_DD", "P_AA"]);
    }

    #[test]
    fn circuit_matches_heom() {
        let h = run(&sb("heom", "subspace = DD,DA,AD,AA\n")).unwrap();
        let c = run(&sb("circuit", "subspace = DD,DA,AD,AA\n")).unwrap();
        let cmp = compare(&h.trajectory, &c.trajectory, None, Units::Dimensionless).unwrap();
        assert!(cmp.deviations.iter().all(|d| d.max < 1e-8), "{cmp:?}");
        assert_eq!(c.sigma0.as_ref().unwrap().len(), 11);
        assert!(c.circuit_stats.as_ref().unwrap().iter().all(|s| s.two_qubit_count <= 13));
    }

    #[test]
    fn shots_are_reproducible() {
        let cfg = sb("circuit-shots", "shots = 2000\nseed = 5\n");
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.trajectory.to_csv(), b.trajectory.to_csv());
        assert_eq!(a.trajectory.columns, vec!["P_DD", "P_AA"]);
    }

    #[test]
    fn identical_inputs_compare_to_zero() {
        let r = run(&sb("heom", "")).unwrap();
        let cmp = compare(&r.trajectory, &r.trajectory, None, Units::Dimensionless).unwrap();
        assert!(cmp.deviations.iter().all(|d| d.max == 0.0 && d.rms == 0.0));
        let mut short = r.trajectory.clone();
        short.times.pop();
        short.values.pop();
        assert!(matches!(
            compare(&r.trajectory, &short, None, Units::Dimensionless),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn zero_coupling_depth_sweep_is_flat() {
        let cfg = sb("heom", "sb_eta = 0\n");
        let rep = convergence_sweep(&cfg, SweepParam::Dh, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(rep.deviations(), vec![0.0, 0.0]);
        assert!(convergence_sweep(&cfg, SweepParam::Dh, &[1.0, 3.0, 2.0]).is_err());
    }

    #[test]
    fn files_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out/run.csv");
        let r = run(&sb("circuit", "")).unwrap();
        r.write(&path).unwrap();
        let back = Trajectory::read_csv(&path).unwrap();
        assert_eq!(back.to_csv(), r.trajectory.to_csv());
        let meta = read_json(&sidecar_path(&path)).unwrap();
        assert_eq!(meta["method"], "circuit");
        assert_eq!(meta["sigma0"].as_array().unwrap().len(), 11);
        let cfg = ExperimentConfig::from_pairs(
            &meta["config"]
                .as_object()
                .unwrap()
                .iter()
                .map(|(k, v)| (k.clone(), v.as_str().unwrap().to_string()))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        assert_eq!(cfg, r.config);
    }
}
