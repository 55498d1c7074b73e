//! Projection of the hierarchy dynamics onto a subspace of density-matrix
//! elements, giving the non-unitary propagator series `G(t)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::heom::{self, EffectiveLiouvillian, HeomSpace, HeomState, Truncation};
use crate::linalg::{c, CMatrix, CVector};
use crate::models::SystemModel;
use crate::{Error, Result};

/// Largest weight an initial density matrix may have outside the subspace.
pub const LEAKAGE_TOLERANCE: f64 = 1e-12;

/// Ordered set `S` of `(p, q)` pairs, zero-padded to a power of two.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subspace {
    entries: Vec<(usize, usize)>,
    labels: Vec<String>,
}

impl Subspace {
    pub fn new(entries: Vec<(usize, usize)>, labels: Vec<String>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Subspace("subspace is empty".into()));
        }
        if entries.len() != labels.len() {
            return Err(Error::Subspace("one label is needed per entry".into()));
        }
        for (i, e) in entries.iter().enumerate() {
            if entries[..i].contains(e) {
                return Err(Error::Subspace(format!("duplicate entry {}", labels[i])));
            }
        }
        Ok(Subspace { entries, labels })
    }

    /// Parses labels such as `DD`, `DA` or `11`, `66` against the model's
    /// basis names. `p:q` is also accepted for multi-character names.
    pub fn parse(model: &SystemModel, labels: &[&str]) -> Result<Self> {
        let mut entries = Vec::with_capacity(labels.len());
        for &l in labels {
            entries.push(parse_pair(model, l)?);
        }
        let names = entries
            .iter()
            .map(|&(p, q)| format!("{}{}", model.basis_labels[p], model.basis_labels[q]))
            .collect();
        Self::new(entries, names)
    }

    /// All `n^2` elements in row-major order.
    pub fn full(model: &SystemModel) -> Self {
        let n = model.dim();
        let entries: Vec<_> = (0..n).flat_map(|p| (0..n).map(move |q| (p, q))).collect();
        let labels = entries
            .iter()
            .map(|&(p, q)| format!("{}{}", model.basis_labels[p], model.basis_labels[q]))
            .collect();
        Subspace { entries, labels }
    }

    /// The diagonal pairs `(p, p)`.
    pub fn diagonal(model: &SystemModel) -> Self {
        let entries: Vec<_> = (0..model.dim()).map(|p| (p, p)).collect();
        let labels = entries
            .iter()
            .map(|&(p, q)| format!("{}{}", model.basis_labels[p], model.basis_labels[q]))
            .collect();
        Subspace { entries, labels }
    }

    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Register dimension: `len()` rounded up to a power of two.
    pub fn register_dim(&self) -> usize {
        self.entries.len().next_power_of_two()
    }

    /// Number of main-register qubits.
    pub fn n_qubits(&self) -> usize {
        self.register_dim().trailing_zeros() as usize
    }

    pub fn position(&self, pair: (usize, usize)) -> Option<usize> {
        self.entries.iter().position(|&e| e == pair)
    }

    fn check_fits(&self, dim: usize) -> Result<()> {
        if self.entries.iter().any(|&(p, q)| p >= dim || q >= dim) {
            return Err(Error::Subspace(format!("entry outside a {dim}-level system")));
        }
        Ok(())
    }
}

fn parse_pair(model: &SystemModel, label: &str) -> Result<(usize, usize)> {
    if let Some((a, b)) = label.split_once(':') {
        if let (Some(p), Some(q)) = (model.basis_index(a), model.basis_index(b)) {
            return Ok((p, q));
        }
    }
    let mut found = None;
    for (i, _) in label.char_indices().skip(1) {
        let (a, b) = label.split_at(i);
        if let (Some(p), Some(q)) = (model.basis_index(a), model.basis_index(b)) {
            if found.is_some() {
                return Err(Error::Subspace(format!("ambiguous subspace entry `{label}`")));
            }
            found = Some((p, q));
        }
    }
    found.ok_or_else(|| Error::Subspace(format!("unknown subspace entry `{label}` for model `{}`", model.label)))
}

/// Register vector with component `j = <p_j|rho0|q_j>`; padded slots are 0.
pub fn encode_initial(rho0: &CMatrix, sub: &Subspace) -> Result<CVector> {
    sub.check_fits(rho0.nrows())?;
    let mut outside = 0.0f64;
    for p in 0..rho0.nrows() {
        for q in 0..rho0.ncols() {
            if sub.position((p, q)).is_none() {
                outside = outside.max(rho0[(p, q)].norm());
            }
        }
    }
    if outside > LEAKAGE_TOLERANCE {
        return Err(Error::InitialStateLeakage { weight: outside });
    }
    let mut v = CVector::zeros(sub.register_dim());
    for (j, &(p, q)) in sub.entries.iter().enumerate() {
        v[j] = rho0[(p, q)];
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub model: String,
    pub subspace: Vec<String>,
    pub k_terms: usize,
    pub truncation: Truncation,
    pub dt: f64,
}

/// `G(t)` on a time grid. Padded rows and columns are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorSeries {
    pub times: Vec<f64>,
    pub mats: Vec<CMatrix>,
    pub subspace: Subspace,
    pub meta: SeriesMeta,
}

impl PropagatorSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest singular value of `G(t_i)`.
    pub fn sigma0(&self, i: usize) -> f64 {
        self.mats[i].clone().singular_values().max()
    }

    /// `G(t_i) phi0`.
    pub fn apply(&self, i: usize, phi0: &CVector) -> CVector {
        &self.mats[i] * phi0
    }

    /// Propagator on a smaller subspace whose entries all belong to this one.
    pub fn restrict(&self, sub: &Subspace) -> Result<PropagatorSeries> {
        let idx: Vec<usize> = sub
            .entries
            .iter()
            .zip(&sub.labels)
            .map(|(&e, l)| {
                self.subspace
                    .position(e)
                    .ok_or_else(|| Error::Subspace(format!("entry {l} is not in the computed subspace")))
            })
            .collect::<Result<_>>()?;
        let n = sub.register_dim();
        let mats = self
            .mats
            .iter()
            .map(|g| {
                let mut m = CMatrix::zeros(n, n);
                for (a, &i) in idx.iter().enumerate() {
                    for (b, &j) in idx.iter().enumerate() {
                        m[(a, b)] = g[(i, j)];
                    }
                }
                m
            })
            .collect();
        let mut meta = self.meta.clone();
        meta.subspace = sub.labels.clone();
        Ok(PropagatorSeries {
            times: self.times.clone(),
            mats,
            subspace: sub.clone(),
            meta,
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        let matrices: Vec<Vec<[f64; 2]>> = self
            .mats
            .iter()
            .map(|m| {
                let mut row_major = Vec::with_capacity(m.len());
                for r in 0..m.nrows() {
                    for col in 0..m.ncols() {
                        row_major.push([m[(r, col)].re, m[(r, col)].im]);
                    }
                }
                row_major
            })
            .collect();
        serde_json::json!({
            "times": self.times,
            "dim": self.subspace.register_dim(),
            "matrices": matrices,
            "subspace": self.subspace,
            "meta": self.meta,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            times: Vec<f64>,
            dim: usize,
            matrices: Vec<Vec<[f64; 2]>>,
            subspace: Subspace,
            meta: SeriesMeta,
        }
        let raw: Raw = serde_json::from_value(v.clone()).map_err(|e| Error::Parse(format!("propagator series: {e}")))?;
        if raw.times.len() != raw.matrices.len() || raw.dim != raw.subspace.register_dim() {
            return Err(Error::Parse("propagator series: inconsistent sizes".into()));
        }
        let mut mats = Vec::with_capacity(raw.matrices.len());
        for m in &raw.matrices {
            if m.len() != raw.dim * raw.dim {
                return Err(Error::Parse("propagator series: matrix has the wrong size".into()));
            }
            mats.push(CMatrix::from_fn(raw.dim, raw.dim, |r, col| {
                let [re, im] = m[r * raw.dim + col];
                c(re, im)
            }));
        }
        Ok(PropagatorSeries {
            times: raw.times,
            mats,
            subspace: raw.subspace,
            meta: raw.meta,
        })
    }
}

/// One hierarchy run per subspace entry: column `j` is the projection onto
/// `S` of the run started from `|p_j>|q_j~>|0>`. Columns run in parallel.
pub fn compute_propagator_series(
    model: &SystemModel,
    sub: &Subspace,
    grid: &[f64],
    truncation: &Truncation,
    dt: f64,
) -> Result<PropagatorSeries> {
    sub.check_fits(model.dim())?;
    if grid.first() != Some(&0.0) {
        return Err(Error::config("grid_step", "propagator grid must start at t = 0"));
    }
    heom::grid_steps(grid, dt)?;
    let space = HeomSpace::build(model, truncation)?;
    let gen = EffectiveLiouvillian::build(model, &space)?;
    let columns: Vec<Vec<CVector>> = sub
        .entries
        .par_iter()
        .map(|&(p, q)| {
            let mut state = HeomState::basis(&space, p, q);
            let mut col = Vec::with_capacity(grid.len());
            heom::evolve(&gen, &mut state, grid, dt, |_, _, s| {
                let mut v = CVector::zeros(sub.register_dim());
                for (i, &(a, b)) in sub.entries.iter().enumerate() {
                    v[i] = s.element(&space, a, b);
                }
                col.push(v);
                Ok(())
            })?;
            Ok(col)
        })
        .collect::<Result<_>>()?;
    let n = sub.register_dim();
    let mats = (0..grid.len())
        .map(|t| {
            let mut m = CMatrix::zeros(n, n);
            for (j, col) in columns.iter().enumerate() {
                m.set_column(j, &col[t]);
            }
            m
        })
        .collect();
    Ok(PropagatorSeries {
        times: grid.to_vec(),
        mats,
        subspace: sub.clone(),
        meta: SeriesMeta {
            model: model.label.clone(),
            subspace: sub.labels.clone(),
            k_terms: model.bath_terms(),
            truncation: truncation.clone(),
            dt,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heom::reduced_trajectory;
    use crate::linalg::real_matrix;
    use crate::models::{fmo_model, spin_boson_model, triad_model, Conformation};
    use crate::units::Units;

    fn sb() -> SystemModel {
        spin_boson_model("sb", Units::Dimensionless, 0.5, 2.5, 0.5, 1.0, 1.0, 2).unwrap()
    }

    #[test]
    fn encode_examples() {
        let tri = triad_model(Conformation::Bent, 1).unwrap();
        let s = Subspace::parse(&tri, &["DD", "DA", "AD", "AA"]).unwrap();
        let v = encode_initial(&tri.rho0, &s).unwrap();
        assert_eq!(v.as_slice(), &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);

        let fmo = fmo_model(1).unwrap();
        let s = Subspace::parse(&fmo, &["11", "22"]).unwrap();
        assert_eq!(encode_initial(&fmo.rho0, &s).unwrap().as_slice(), &[c(1.0, 0.0), c(0.0, 0.0)]);

        let half = real_matrix(2, 2, &[0.5, 0.0, 0.0, 0.5]);
        let s = Subspace::parse(&tri, &["DD", "AA"]).unwrap();
        assert_eq!(encode_initial(&half, &s).unwrap().as_slice(), &[c(0.5, 0.0), c(0.5, 0.0)]);
    }

    #[test]
    fn leakage_and_bad_labels() {
        let tri = triad_model(Conformation::Bent, 1).unwrap();
        let s = Subspace::parse(&tri, &["AA", "DA"]).unwrap();
        assert!(matches!(encode_initial(&tri.rho0, &s), Err(Error::InitialStateLeakage { .. })));
        assert!(Subspace::parse(&tri, &["DX"]).is_err());
        assert!(Subspace::parse(&tri, &["DD", "DD"]).is_err());
        assert_eq!(Subspace::parse(&tri, &["D:A"]).unwrap().entries(), &[(0, 1)]);
    }

    #[test]
    fn padding_to_power_of_two() {
        let fmo = fmo_model(1).unwrap();
        let s = Subspace::parse(&fmo, &["11", "22", "33"]).unwrap();
        assert_eq!(s.register_dim(), 4);
        assert_eq!(s.n_qubits(), 2);
        let v = encode_initial(&fmo.rho0, &s).unwrap();
        assert_eq!(v[3], c(0.0, 0.0));
    }

    #[test]
    fn series_matches_direct_run() {
        let m = sb();
        let tr = Truncation::uniform(4, 4);
        let grid: Vec<f64> = (0..=8).map(|i| i as f64 * 0.5).collect();
        let s = Subspace::full(&m);
        let g = compute_propagator_series(&m, &s, &grid, &tr, 0.01).unwrap();
        assert_eq!(g.mats[0], CMatrix::identity(4, 4));
        let direct = reduced_trajectory(&m, &tr, &grid, 0.01).unwrap();
        let phi0 = encode_initial(&m.rho0, &s).unwrap();
        for (i, rho) in direct.iter().enumerate() {
            let phi = g.apply(i, &phi0);
            assert!((phi[0] - rho[(0, 0)]).norm() <= 1e-10);
            assert!((phi[3] - rho[(1, 1)]).norm() <= 1e-10);
            assert!((phi[0] + phi[3] - c(1.0, 0.0)).norm() < 1e-6);
        }
    }

    #[test]
    fn restriction_is_a_submatrix_and_json_roundtrips() {
        let m = sb();
        let grid = [0.0, 1.0, 2.0];
        let full = compute_propagator_series(&m, &Subspace::full(&m), &grid, &Truncation::uniform(3, 3), 0.01).unwrap();
        let sub = Subspace::parse(&m, &["DD", "AA"]).unwrap();
        let direct = compute_propagator_series(&m, &sub, &grid, &Truncation::uniform(3, 3), 0.01).unwrap();
        let restricted = full.restrict(&sub).unwrap();
        assert_eq!(restricted.mats, direct.mats);
        let back = PropagatorSeries::from_json(&full.to_json()).unwrap();
        assert_eq!(back, full);
        assert!(full.sigma0(0) > 0.999_999 && full.sigma0(0) < 1.000_001);
    }

    #[test]
    fn grid_must_start_at_zero() {
        let m = sb();
        let err = compute_propagator_series(&m, &Subspace::full(&m), &[1.0, 2.0], &Truncation::uniform(2, 2), 0.1);
        assert!(err.is_err());
    }
}
