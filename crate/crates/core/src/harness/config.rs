//! Flat `key = value` experiment configuration.
//!
//! Lines starting with `#` or `;` are comments. Keys:
//!
//! | key | meaning |
//! |-----|---------|
//! | `model` | `triad-bent`, `triad-linear`, `fmo` or `spin-boson` |
//! | `method` | `heom`, `lindblad`, `circuit` or `circuit-shots` |
//! | `K` | expansion terms per bath |
//! | `L` | per-term Fock cap, one value or a comma list (last entry repeats) |
//! | `D_h` | global hierarchy depth |
//! | `max_states` | cap on the number of hierarchy states |
//! | `dt`, `t_max`, `grid_step` | integrator step, final time and output spacing |
//! | `subspace` | comma list of pair labels, e.g. `DD,DA,AD,AA` |
//! | `shots`, `seed` | sampling for `circuit-shots` (time point `i` uses `seed + i`) |
//! | `lindblad_k` | expansion terms used for the Lindblad rates |
//! | `lamb_shift` | include the Lamb shift (`true`/`false`) |
//! | `fit_window` | `t_lo,t_hi` for rate fits |
//! | `output` | CSV path; the metadata sidecar uses the same stem with `.json` |
//! | `sb_v`, `sb_e0`, `sb_eta`, `sb_omega_c`, `sb_beta` | custom spin-boson parameters (dimensionless) |

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::heom::{Truncation, DEFAULT_MAX_STATES};
use crate::models::{self, SystemModel};
use crate::units::Units;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Heom,
    Lindblad,
    Circuit,
    CircuitShots,
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heom" => Ok(Method::Heom),
            "lindblad" => Ok(Method::Lindblad),
            "circuit" => Ok(Method::Circuit),
            "circuit-shots" => Ok(Method::CircuitShots),
            other => Err(Error::config("method", format!("unknown method `{other}`"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Heom => "heom",
            Method::Lindblad => "lindblad",
            Method::Circuit => "circuit",
            Method::CircuitShots => "circuit-shots",
        })
    }
}

/// Custom biased spin-boson model in dimensionless units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinBosonSpec {
    pub v: f64,
    pub e0: f64,
    pub eta: f64,
    pub omega_c: f64,
    pub beta: f64,
}

impl Default for SpinBosonSpec {
    fn default() -> Self {
        SpinBosonSpec {
            v: 0.5,
            e0: 2.5,
            eta: 0.1,
            omega_c: 1.0,
            beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelSpec {
    Preset(String),
    SpinBoson(SpinBosonSpec),
}

impl ModelSpec {
    pub fn name(&self) -> &str {
        match self {
            ModelSpec::Preset(n) => n,
            ModelSpec::SpinBoson(_) => "spin-boson",
        }
    }

    fn is_triad(&self) -> bool {
        matches!(self, ModelSpec::Preset(n) if n.starts_with("triad"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub method: Method,
    pub k_terms: usize,
    pub caps: Vec<usize>,
    pub depth: usize,
    pub max_states: usize,
    pub dt: f64,
    pub t_max: f64,
    pub grid_step: f64,
    pub subspace: Vec<String>,
    pub shots: u64,
    pub seed: u64,
    pub lindblad_k: usize,
    pub lamb_shift: bool,
    pub fit_window: Option<(f64, f64)>,
    pub output: Option<PathBuf>,
}

const KEYS: &[&str] = &[
    "model",
    "method",
    "K",
    "L",
    "D_h",
    "max_states",
    "dt",
    "t_max",
    "grid_step",
    "subspace",
    "shots",
    "seed",
    "lindblad_k",
    "lamb_shift",
    "fit_window",
    "output",
    "sb_v",
    "sb_e0",
    "sb_eta",
    "sb_omega_c",
    "sb_beta",
];

impl ExperimentConfig {
    /// Defaults for a model and method.
    pub fn defaults(model: &str, method: Method) -> Result<Self> {
        let spec = match model {
            "triad-bent" | "triad-linear" | "fmo" => ModelSpec::Preset(model.to_string()),
            "spin-boson" => ModelSpec::SpinBoson(SpinBosonSpec::default()),
            other => return Err(Error::UnknownPreset(other.to_string())),
        };
        let mut cfg = ExperimentConfig {
            model: spec.clone(),
            method,
            k_terms: 5,
            caps: vec![60, 1],
            depth: 64,
            max_states: DEFAULT_MAX_STATES,
            dt: 0.25,
            t_max: 4000.0,
            grid_step: 20.0,
            subspace: vec!["DD".into(), "DA".into(), "AD".into(), "AA".into()],
            shots: 20000,
            seed: 2024,
            lindblad_k: 10_000,
            lamb_shift: true,
            fit_window: Some((3000.0, 4000.0)),
            output: None,
        };
        match spec {
            ModelSpec::Preset(ref n) if n == "fmo" => {
                cfg.k_terms = 2;
                cfg.caps = vec![4];
                cfg.depth = 4;
                cfg.t_max = 1000.0;
                cfg.grid_step = 5.0;
                cfg.subspace = ["11", "22", "33", "66"].iter().map(|s| s.to_string()).collect();
                cfg.fit_window = None;
            }
            ModelSpec::SpinBoson(_) => {
                cfg.k_terms = 3;
                cfg.caps = vec![6];
                cfg.depth = 6;
                cfg.dt = 0.001;
                cfg.t_max = 10.0;
                cfg.grid_step = 0.1;
                cfg.subspace = vec!["DD".into(), "AA".into()];
                cfg.fit_window = None;
            }
            _ => {}
        }
        cfg.dt = default_dt(&cfg.model, method);
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", lineno + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Self::from_pairs(&pairs)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Builds a configuration from key/value pairs; `model` and `method`
    /// choose the defaults the remaining keys override.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut map: BTreeMap<&str, &str> = BTreeMap::new();
        for (k, v) in pairs {
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::config(k, "unknown key"));
            }
            if map.insert(k.as_str(), v.as_str()).is_some() {
                return Err(Error::config(k, "key given more than once"));
            }
        }
        let model = map.get("model").copied().ok_or_else(|| Error::config("model", "missing"))?;
        let method: Method = map.get("method").copied().unwrap_or("heom").parse()?;
        let mut cfg = Self::defaults(model, method).map_err(|e| match e {
            Error::UnknownPreset(m) => Error::config("model", format!("unknown model `{m}`")),
            other => other,
        })?;
        cfg.apply(&map)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Overrides individual keys (used for command-line `--set key=value`).
    pub fn with_overrides(&self, pairs: &[(String, String)]) -> Result<Self> {
        let mut merged: BTreeMap<String, String> = self.to_pairs().into_iter().collect();
        for (k, v) in pairs {
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::config(k, "unknown key"));
            }
            merged.insert(k.clone(), v.clone());
        }
        let method_changed = pairs.iter().any(|(k, _)| k == "method" || k == "model");
        if method_changed && !pairs.iter().any(|(k, _)| k == "dt") {
            merged.remove("dt");
        }
        let list: Vec<(String, String)> = merged.into_iter().collect();
        Self::from_pairs(&list)
    }

    fn apply(&mut self, map: &BTreeMap<&str, &str>) -> Result<()> {
        let mut sb = match &self.model {
            ModelSpec::SpinBoson(s) => Some(*s),
            _ => None,
        };
        for (&k, &v) in map {
            match k {
                "model" | "method" => {}
                "K" => self.k_terms = num(k, v)?,
                "L" => {
                    self.caps = v.split(',').map(|x| num(k, x.trim())).collect::<Result<_>>()?;
                }
                "D_h" => self.depth = num(k, v)?,
                "max_states" => self.max_states = num(k, v)?,
                "dt" => self.dt = num(k, v)?,
                "t_max" => self.t_max = num(k, v)?,
                "grid_step" => self.grid_step = num(k, v)?,
                "subspace" => self.subspace = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
                "shots" => self.shots = num(k, v)?,
                "seed" => self.seed = num(k, v)?,
                "lindblad_k" => self.lindblad_k = num(k, v)?,
                "lamb_shift" => {
                    self.lamb_shift = match v {
                        "true" | "yes" | "1" => true,
                        "false" | "no" | "0" => false,
                        _ => return Err(Error::config(k, format!("expected true or false, got `{v}`"))),
                    }
                }
                "fit_window" => {
                    self.fit_window = if v.is_empty() || v == "none" {
                        None
                    } else {
                        let (a, b) = v.split_once(',').ok_or_else(|| Error::config(k, "expected `t_lo,t_hi`"))?;
                        Some((num(k, a.trim())?, num(k, b.trim())?))
                    }
                }
                "output" => self.output = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
                "sb_v" | "sb_e0" | "sb_eta" | "sb_omega_c" | "sb_beta" => {
                    let s = sb.as_mut().ok_or_else(|| Error::config(k, "only valid with model = spin-boson"))?;
                    let x: f64 = num(k, v)?;
                    match k {
                        "sb_v" => s.v = x,
                        "sb_e0" => s.e0 = x,
                        "sb_eta" => s.eta = x,
                        "sb_omega_c" => s.omega_c = x,
                        _ => s.beta = x,
                    }
                }
                _ => unreachable!("keys are checked against KEYS"),
            }
        }
        if let Some(s) = sb {
            self.model = ModelSpec::SpinBoson(s);
        }
        Ok(())
    }

    /// Checks every key, naming the first offending one.
    pub fn validate(&self) -> Result<()> {
        if self.k_terms < 1 {
            return Err(Error::config("K", "must be >= 1"));
        }
        if self.caps.is_empty() || self.caps.iter().any(|&l| l < 1) {
            return Err(Error::config("L", "every cap must be >= 1"));
        }
        if self.depth < 1 {
            return Err(Error::config("D_h", "must be >= 1"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::config("dt", "must be positive"));
        }
        if !(self.grid_step > 0.0) || !self.grid_step.is_finite() {
            return Err(Error::config("grid_step", "must be positive"));
        }
        if !(self.t_max >= 0.0) || !self.t_max.is_finite() {
            return Err(Error::config("t_max", "must be non-negative"));
        }
        if crate::sparse::steps_to(self.grid_step, self.dt).is_none_or(|n| n == 0) {
            return Err(Error::config(
                "grid_step",
                format!("{} is not a multiple of dt = {}", self.grid_step, self.dt),
            ));
        }
        if crate::sparse::steps_to(self.t_max, self.grid_step).is_none() {
            return Err(Error::config(
                "t_max",
                format!("{} is not a multiple of grid_step = {}", self.t_max, self.grid_step),
            ));
        }
        if self.subspace.is_empty() {
            return Err(Error::config("subspace", "must list at least one entry"));
        }
        if self.method == Method::CircuitShots && self.shots == 0 {
            return Err(Error::config("shots", "must be >= 1"));
        }
        if self.lindblad_k < 1 {
            return Err(Error::config("lindblad_k", "must be >= 1"));
        }
        if let Some((a, b)) = self.fit_window {
            if !(a < b) {
                return Err(Error::config("fit_window", "t_lo must be below t_hi"));
            }
        }
        if let ModelSpec::SpinBoson(s) = &self.model {
            for (k, x) in [
                ("sb_v", s.v),
                ("sb_e0", s.e0),
                ("sb_eta", s.eta),
                ("sb_omega_c", s.omega_c),
                ("sb_beta", s.beta),
            ] {
                let ok = match k {
                    "sb_eta" => x >= 0.0,
                    "sb_omega_c" | "sb_beta" => x > 0.0,
                    _ => true,
                };
                if !ok || !x.is_finite() {
                    return Err(Error::config(k, format!("invalid value {x}")));
                }
            }
        }
        let model = self.model(self.k_terms).map_err(|e| match e {
            Error::MatsubaraResonance { .. } => Error::config("K", e.to_string()),
            other => other,
        })?;
        crate::propagator::Subspace::parse(&model, &self.subspace.iter().map(String::as_str).collect::<Vec<_>>())
            .map_err(|e| Error::config("subspace", e.to_string()))?;
        Ok(())
    }

    /// The physical model with `k_terms` expansion terms per bath.
    pub fn model(&self, k_terms: usize) -> Result<SystemModel> {
        match &self.model {
            ModelSpec::Preset(name) => models::preset(name, k_terms),
            ModelSpec::SpinBoson(s) => {
                models::spin_boson_model("spin-boson", Units::Dimensionless, s.v, s.e0, s.eta, s.omega_c, s.beta, k_terms)
            }
        }
    }

    pub fn truncation(&self) -> Truncation {
        Truncation {
            caps: self.caps.clone(),
            depth: self.depth,
            max_states: self.max_states,
        }
    }

    /// Output times `0, grid_step, ..., t_max`.
    pub fn grid(&self) -> Vec<f64> {
        let n = crate::sparse::steps_to(self.t_max, self.grid_step).unwrap_or(0);
        (0..=n).map(|i| i as f64 * self.grid_step).collect()
    }

    /// Canonical key/value form; parsing it back gives the same config.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut p = vec![
            ("model".to_string(), self.model.name().to_string()),
            ("method".into(), self.method.to_string()),
            ("K".into(), self.k_terms.to_string()),
            ("L".into(), join(&self.caps)),
            ("D_h".into(), self.depth.to_string()),
            ("max_states".into(), self.max_states.to_string()),
            ("dt".into(), self.dt.to_string()),
            ("t_max".into(), self.t_max.to_string()),
            ("grid_step".into(), self.grid_step.to_string()),
            ("subspace".into(), self.subspace.join(",")),
            ("shots".into(), self.shots.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("lindblad_k".into(), self.lindblad_k.to_string()),
            ("lamb_shift".into(), self.lamb_shift.to_string()),
            (
                "fit_window".into(),
                self.fit_window.map_or("none".to_string(), |(a, b)| format!("{a},{b}")),
            ),
        ];
        if let Some(o) = &self.output {
            p.push(("output".into(), o.display().to_string()));
        }
        if let ModelSpec::SpinBoson(s) = &self.model {
            for (k, x) in [
                ("sb_v", s.v),
                ("sb_e0", s.e0),
                ("sb_eta", s.eta),
                ("sb_omega_c", s.omega_c),
                ("sb_beta", s.beta),
            ] {
                p.push((k.into(), x.to_string()));
            }
        }
        p
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.to_pairs() {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Step size per model and method. The triad Lindblad generator is stiff
/// (damping near 6 fs⁻¹), so it needs a much smaller step than the hierarchy.
fn default_dt(model: &ModelSpec, method: Method) -> f64 {
    match (model, method) {
        (ModelSpec::SpinBoson(_), _) => 0.001,
        (m, Method::Lindblad) if m.is_triad() => 0.02,
        _ => 0.25,
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::config(key, format!("cannot parse `{v}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_with_comments_and_lists() {
        let cfg = ExperimentConfig::parse(
            "# triad run\nmodel = triad-bent\nmethod = heom\nK = 4\nL = 30, 2\nD_h = 40\n; comment\nsubspace = DD,AA\n",
        )
        .unwrap();
        assert_eq!(cfg.k_terms, 4);
        assert_eq!(cfg.caps, vec![30, 2]);
        assert_eq!(cfg.subspace, vec!["DD", "AA"]);
        assert_eq!(cfg.grid().len(), 201);
    }

    #[test]
    fn errors_name_the_key() {
        let key_of = |text: &str| match ExperimentConfig::parse(text).unwrap_err() {
            Error::Config { key, .. } => key,
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(key_of("model = triad-bent\nfoo = 1\n"), "foo");
        assert_eq!(key_of("model = triad-bent\ndt = -1\n"), "dt");
        assert_eq!(key_of("model = triad-bent\nK = two\n"), "K");
        assert_eq!(key_of("model = triad-bent\ngrid_step = 0.3\n"), "grid_step");
        assert_eq!(key_of("model = triad-bent\nsubspace = DD,XX\n"), "subspace");
        assert_eq!(key_of("model = folded\n"), "model");
        assert_eq!(key_of("method = heom\n"), "model");
        assert_eq!(key_of("model = fmo\nsb_v = 1\n"), "sb_v");
        assert_eq!(key_of("model = triad-bent\nK = 2\nK = 3\n"), "K");
        assert_eq!(ExperimentConfig::parse("model = fmo\nnonsense\n").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn method_specific_step() {
        let cfg = ExperimentConfig::parse("model = triad-linear\nmethod = lindblad\n").unwrap();
        assert_eq!(cfg.dt, 0.02);
        let cfg = ExperimentConfig::parse("model = fmo\nmethod = circuit\n").unwrap();
        assert_eq!((cfg.dt, cfg.k_terms, cfg.depth), (0.25, 2, 4));
    }

    #[test]
    fn pairs_roundtrip() {
        for text in [
            "model = fmo\nmethod = circuit-shots\nshots = 1000\noutput = out/x.csv\n",
            "model = spin-boson\nsb_eta = 0.01\n",
        ] {
            let cfg = ExperimentConfig::parse(text).unwrap();
            assert_eq!(ExperimentConfig::parse(&cfg.to_string()).unwrap(), cfg);
        }
    }

    #[test]
    fn overrides() {
        let cfg = ExperimentConfig::parse("model = triad-bent\n").unwrap();
        let lind = cfg.with_overrides(&[("method".into(), "lindblad".into())]).unwrap();
        assert_eq!(lind.dt, 0.02);
        let k = cfg.with_overrides(&[("K".into(), "3".into())]).unwrap();
        assert_eq!((k.k_terms, k.dt), (3, cfg.dt));
    }
}
