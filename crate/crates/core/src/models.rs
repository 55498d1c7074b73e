//! Concrete physical models: the solvated molecular triad (a biased
//! spin-boson model), the seven-site FMO complex, and Marcus rates.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::bath::{debye_decompose, BathDecomposition, SpectralDensity};
use crate::linalg::{self, c, CMatrix};
use crate::units::{self, Units};
use crate::{Error, Result};

/// Tolerance for Hermiticity checks on model matrices.
const HERMITIAN_TOL: f64 = 1e-12;

/// A system operator `A_m` coupled to its own harmonic bath.
#[derive(Debug, Clone)]
pub struct Coupling {
    pub operator: CMatrix,
    pub bath: BathDecomposition,
}

#[derive(Debug, Clone)]
pub struct SystemModel {
    pub label: String,
    pub units: Units,
    pub h_s: CMatrix,
    pub couplings: Vec<Coupling>,
    pub rho0: CMatrix,
    /// Single-character-or-more names of the system basis states, used to
    /// label subspace entries (`DD`, `11`, ...).
    pub basis_labels: Vec<String>,
}

impl SystemModel {
    pub fn dim(&self) -> usize {
        self.h_s.nrows()
    }

    /// Number of expansion terms per bath (all baths share one `K`).
    pub fn bath_terms(&self) -> usize {
        self.couplings.first().map_or(0, |c| c.bath.len())
    }

    /// Checks Hermiticity of `H_S` and every `A_m`, and that `rho0` is a
    /// density matrix.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if !self.h_s.is_square() || self.rho0.shape() != (n, n) || self.basis_labels.len() != n {
            return Err(Error::Domain(format!("model `{}` has inconsistent dimensions", self.label)));
        }
        if linalg::hermiticity_deviation(&self.h_s) > HERMITIAN_TOL {
            return Err(Error::Domain("system Hamiltonian is not Hermitian".into()));
        }
        for (m, cpl) in self.couplings.iter().enumerate() {
            if cpl.operator.shape() != (n, n) || linalg::hermiticity_deviation(&cpl.operator) > HERMITIAN_TOL {
                return Err(Error::Domain(format!("coupling operator {m} is not an n x n Hermitian matrix")));
            }
        }
        let k = self.bath_terms();
        if self.couplings.iter().any(|c| c.bath.len() != k) {
            return Err(Error::BathConfig("all baths must use the same number of expansion terms".into()));
        }
        if linalg::hermiticity_deviation(&self.rho0) > HERMITIAN_TOL {
            return Err(Error::Domain("initial density matrix is not Hermitian".into()));
        }
        if (linalg::trace(&self.rho0) - c(1.0, 0.0)).norm() > HERMITIAN_TOL {
            return Err(Error::Domain("initial density matrix must have unit trace".into()));
        }
        if linalg::min_eigenvalue(&self.rho0) < -HERMITIAN_TOL {
            return Err(Error::Domain("initial density matrix is not positive semidefinite".into()));
        }
        Ok(())
    }

    /// Same model with every bath re-expanded using `k_terms` terms.
    pub fn with_bath_terms(&self, k_terms: usize) -> Result<SystemModel> {
        let mut out = self.clone();
        for cpl in &mut out.couplings {
            cpl.bath = debye_decompose(&cpl.bath.density, cpl.bath.beta, k_terms)?;
        }
        Ok(out)
    }

    /// Same model with a different initial density matrix.
    pub fn with_initial_state(&self, rho0: CMatrix) -> Result<SystemModel> {
        let mut out = self.clone();
        out.rho0 = rho0;
        out.validate()?;
        Ok(out)
    }

    /// Index of a basis label such as `D` or `3`.
    pub fn basis_index(&self, label: &str) -> Option<usize> {
        self.basis_labels.iter().position(|l| l == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Conformation {
    Bent,
    Linear,
}

impl FromStr for Conformation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bent" => Ok(Conformation::Bent),
            "linear" => Ok(Conformation::Linear),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

impl fmt::Display for Conformation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Conformation::Bent => "bent",
            Conformation::Linear => "linear",
        })
    }
}

/// Spin-boson parameters of the triad's ππ* → CT1 transfer.
/// `v`, `e0` and `eta` are in eV, `omega_c` in cm⁻¹, `temperature` in K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriadParams {
    pub v: f64,
    pub e0: f64,
    pub eta: f64,
    pub omega_c: f64,
    pub temperature: f64,
}

impl TriadParams {
    #[allow(clippy::approx_constant)]
    pub fn for_conformation(conf: Conformation) -> Self {
        match conf {
            Conformation::Bent => TriadParams {
                v: 2.4e-2,
                e0: 0.507,
                eta: 0.2565,
                omega_c: 25.0,
                temperature: 300.0,
            },
            Conformation::Linear => TriadParams {
                v: 9.0e-3,
                e0: 0.236,
                eta: 0.318,
                omega_c: 25.0,
                temperature: 300.0,
            },
        }
    }
}

/// `H_S = V sx + E0 sz` with basis `|D> = (1,0)`, `|A> = (0,1)`, a single
/// bath coupled through `sz`, and `rho0 = |D><D|`. Energies in cm⁻¹.
pub fn triad_model(conf: Conformation, k_terms: usize) -> Result<SystemModel> {
    let p = TriadParams::for_conformation(conf);
    let label = match conf {
        Conformation::Bent => "triad-bent",
        Conformation::Linear => "triad-linear",
    };
    spin_boson_model(
        label,
        Units::Wavenumber,
        units::ev_to_wavenumber(p.v),
        units::ev_to_wavenumber(p.e0),
        units::ev_to_wavenumber(p.eta),
        p.omega_c,
        units::beta_from_kelvin(p.temperature),
        k_terms,
    )
}

/// Generic biased spin-boson model `V sx + E0 sz` with a Debye bath on `sz`,
/// starting in the upper site `|D>`.
#[allow(clippy::too_many_arguments)]
pub fn spin_boson_model(
    label: &str,
    units: Units,
    v: f64,
    e0: f64,
    eta: f64,
    omega_c: f64,
    beta: f64,
    k_terms: usize,
) -> Result<SystemModel> {
    let h_s = linalg::pauli_x() * c(v, 0.0) + linalg::pauli_z() * c(e0, 0.0);
    let density = SpectralDensity::debye(eta, omega_c)?;
    let bath = debye_decompose(&density, beta, k_terms)?;
    let model = SystemModel {
        label: label.to_string(),
        units,
        h_s,
        couplings: vec![Coupling {
            operator: linalg::pauli_z(),
            bath,
        }],
        rho0: linalg::real_matrix(2, 2, &[1.0, 0.0, 0.0, 0.0]),
        basis_labels: vec!["D".into(), "A".into()],
    };
    model.validate()?;
    Ok(model)
}

/// Site energies and couplings of the seven-site FMO Hamiltonian (cm⁻¹).
#[rustfmt::skip]
pub const FMO_HAMILTONIAN: [[f64; 7]; 7] = [
    [310.0, -97.9,   5.5,  -5.8,   6.7, -12.1, -10.3],
    [-97.9, 230.0,  30.1,   7.3,   2.0,  11.5,   4.8],
    [  5.5,  30.1,   0.0, -58.8,  -1.5,  -9.6,   4.7],
    [ -5.8,   7.3, -58.8, 180.0, -64.9, -17.4, -64.4],
    [  6.7,   2.0,  -1.5, -64.9, 405.0,  89.0,  -6.4],
    [-12.1,  11.5,  -9.6, -17.4,  89.0, 320.0,  31.7],
    [-10.3,   4.8,   4.7, -64.4,  -6.4,  31.7, 270.0],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmoParams {
    pub hamiltonian: [[f64; 7]; 7],
    /// Debye coupling strength in cm⁻¹.
    pub eta: f64,
    /// Bath correlation time `1/omega_c` in fs.
    pub correlation_time_fs: f64,
    pub temperature: f64,
    /// Zero-based index of the initially excited site.
    pub initial_site: usize,
}

impl Default for FmoParams {
    fn default() -> Self {
        FmoParams {
            hamiltonian: FMO_HAMILTONIAN,
            eta: 70.0,
            correlation_time_fs: 50.0,
            temperature: 300.0,
            initial_site: 0,
        }
    }
}

pub fn fmo_model(k_terms: usize) -> Result<SystemModel> {
    fmo_model_with(&FmoParams::default(), k_terms)
}

/// Frenkel exciton model: one identical Debye bath per site, coupled through
/// the site projector `|m><m|`.
pub fn fmo_model_with(p: &FmoParams, k_terms: usize) -> Result<SystemModel> {
    let n = 7;
    let flat: Vec<f64> = p.hamiltonian.iter().flatten().copied().collect();
    let h_s = linalg::real_matrix(n, n, &flat);
    let density = SpectralDensity::debye(p.eta, units::wavenumber_from_inverse_fs(p.correlation_time_fs))?;
    let bath = debye_decompose(&density, units::beta_from_kelvin(p.temperature), k_terms)?;
    let couplings = (0..n)
        .map(|m| {
            let mut op = CMatrix::zeros(n, n);
            op[(m, m)] = c(1.0, 0.0);
            Coupling {
                operator: op,
                bath: bath.clone(),
            }
        })
        .collect();
    if p.initial_site >= n {
        return Err(Error::Domain(format!("initial site {} out of range", p.initial_site + 1)));
    }
    let mut rho0 = CMatrix::zeros(n, n);
    rho0[(p.initial_site, p.initial_site)] = c(1.0, 0.0);
    let model = SystemModel {
        label: "fmo".into(),
        units: Units::Wavenumber,
        h_s,
        couplings,
        rho0,
        basis_labels: (1..=n).map(|i| i.to_string()).collect(),
    };
    model.validate()?;
    Ok(model)
}

/// Builds a named preset: `triad-bent`, `triad-linear` or `fmo`.
pub fn preset(name: &str, k_terms: usize) -> Result<SystemModel> {
    match name {
        "triad-bent" => triad_model(Conformation::Bent, k_terms),
        "triad-linear" => triad_model(Conformation::Linear, k_terms),
        "fmo" => fmo_model(k_terms),
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

/// Nonadiabatic Marcus rate in s⁻¹ with `lambda = 2 eta` and
/// `E_DA = 2 E0`, evaluated in eV.
pub fn marcus_rate(p: &TriadParams) -> Result<f64> {
    let lambda = 2.0 * p.eta;
    if !(lambda > 0.0) || !(p.temperature > 0.0) {
        return Err(Error::Domain(
            "Marcus rate needs positive reorganization energy and temperature".into(),
        ));
    }
    let kt = units::wavenumber_to_ev(units::BOLTZMANN_WAVENUMBERS_PER_K * p.temperature);
    Ok(marcus_expression(p.v, 2.0 * p.e0, lambda, kt) / units::HBAR_EV_S)
}

/// Same rate evaluated entirely in cm⁻¹ (`hbar = 1`), converted to s⁻¹.
pub fn marcus_rate_wavenumber(p: &TriadParams) -> Result<f64> {
    let lambda = 2.0 * units::ev_to_wavenumber(p.eta);
    if !(lambda > 0.0) || !(p.temperature > 0.0) {
        return Err(Error::Domain(
            "Marcus rate needs positive reorganization energy and temperature".into(),
        ));
    }
    let kt = units::BOLTZMANN_WAVENUMBERS_PER_K * p.temperature;
    let v = units::ev_to_wavenumber(p.v);
    let gap = 2.0 * units::ev_to_wavenumber(p.e0);
    let per_fs = marcus_expression(v, gap, lambda, kt) * units::ANGULAR_FS_PER_WAVENUMBER;
    Ok(per_fs * 1e15)
}

/// `V^2 sqrt(pi / (lambda kT)) exp(-(gap - lambda)^2 / (4 lambda kT))`
/// in energy units with `hbar = 1`.
pub fn marcus_expression(v: f64, gap: f64, lambda: f64, kt: f64) -> f64 {
    v * v * (std::f64::consts::PI / (lambda * kt)).sqrt() * (-(gap - lambda).powi(2) / (4.0 * lambda * kt)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    #[allow(clippy::approx_constant)]
    fn triad_preset_parameters() {
        let b = TriadParams::for_conformation(Conformation::Bent);
        assert_eq!((b.v, b.e0, b.eta, b.omega_c), (2.4e-2, 0.507, 0.2565, 25.0));
        let l = TriadParams::for_conformation(Conformation::Linear);
        assert_eq!((l.v, l.e0, l.eta, l.omega_c), (9.0e-3, 0.236, 0.318, 25.0));

        let m = triad_model(Conformation::Bent, 3).unwrap();
        assert_eq!(m.dim(), 2);
        assert_relative_eq!(m.h_s[(0, 1)].re, 0.024 * units::WAVENUMBERS_PER_EV);
        assert_relative_eq!(m.h_s[(0, 0)].re, 0.507 * units::WAVENUMBERS_PER_EV);
        assert_relative_eq!(m.h_s[(1, 1)].re, -0.507 * units::WAVENUMBERS_PER_EV);
        assert_eq!(m.couplings.len(), 1);
        assert_eq!(m.couplings[0].bath.len(), 3);
        let rho2 = &m.rho0 * &m.rho0;
        assert!(linalg::max_abs_diff(&rho2, &m.rho0) < 1e-15);
        assert_relative_eq!(linalg::trace(&m.rho0).re, 1.0);
    }

    #[test]
    fn fmo_matrix_entries() {
        let m = fmo_model(2).unwrap();
        assert_eq!(m.dim(), 7);
        assert_relative_eq!(linalg::trace(&m.h_s).re, 1715.0, epsilon = 1e-9);
        assert_eq!(m.h_s[(0, 1)].re, -97.9);
        assert_eq!(m.h_s[(1, 0)].re, -97.9);
        let diag: Vec<f64> = (0..7).map(|i| m.h_s[(i, i)].re).collect();
        assert_eq!(diag, vec![310.0, 230.0, 0.0, 180.0, 405.0, 320.0, 270.0]);
        let sum = m.couplings.iter().fold(CMatrix::zeros(7, 7), |acc, c| acc + &c.operator);
        assert!(linalg::max_abs_diff(&sum, &CMatrix::identity(7, 7)) < 1e-15);
        assert_eq!(m.rho0[(0, 0)].re, 1.0);
        assert_eq!(m.basis_index("3"), Some(2));
    }

    #[test]
    fn presets_by_name() {
        assert!(preset("triad-linear", 2).is_ok());
        assert!(matches!(preset("triad-folded", 2), Err(Error::UnknownPreset(_))));
        assert!("twisted".parse::<Conformation>().is_err());
    }

    #[test]
    fn marcus_activationless_limit() {
        // gap == lambda: the exponential factor is exactly one
        let p = TriadParams {
            v: 0.01,
            e0: 0.3,
            eta: 0.3,
            omega_c: 25.0,
            temperature: 300.0,
        };
        let kt = units::wavenumber_to_ev(units::KT_300K_WAVENUMBERS);
        let prefactor = p.v * p.v * (std::f64::consts::PI / (0.6 * kt)).sqrt() / units::HBAR_EV_S;
        assert_relative_eq!(marcus_rate(&p).unwrap(), prefactor, max_relative = 1e-14);
    }

    #[test]
    fn marcus_is_unit_independent() {
        for conf in [Conformation::Bent, Conformation::Linear] {
            let p = TriadParams::for_conformation(conf);
            assert_relative_eq!(marcus_rate(&p).unwrap(), marcus_rate_wavenumber(&p).unwrap(), max_relative = 1e-10);
        }
    }

    #[test]
    fn marcus_rejects_bad_domain() {
        let mut p = TriadParams::for_conformation(Conformation::Bent);
        p.temperature = 0.0;
        assert!(marcus_rate(&p).is_err());
        p.temperature = 300.0;
        p.eta = 0.0;
        assert!(marcus_rate(&p).is_err());
    }

    #[test]
    fn invalid_density_rejected() {
        let m = triad_model(Conformation::Bent, 1).unwrap();
        let bad = linalg::real_matrix(2, 2, &[0.7, 0.0, 0.0, 0.7]);
        assert!(m.with_initial_state(bad).is_err());
        let neg = linalg::real_matrix(2, 2, &[1.5, 0.0, 0.0, -0.5]);
        assert!(m.with_initial_state(neg).is_err());
    }
}
