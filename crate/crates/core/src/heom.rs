//! Twin-space HEOM: hierarchy indexing, assembly of the effective
//! Liouvillian and fixed-step RK4 evolution.
//!
//! A hierarchy state `|p>|q~>|n>` is stored at offset
//! `(p * sys_dim + q) * n_ados + ado(n)`, where ADOs are enumerated
//! lexicographically with the all-zero vector at index 0. Modes are ordered
//! bath-major: mode `j` is term `j % K` of bath `j / K`.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::linalg::{c, CMatrix};
use crate::models::SystemModel;
use crate::sparse::{self, CsrMatrix, Rk4};
use crate::{Error, Result, C64};

/// Default cap on the total number of hierarchy states.
pub const DEFAULT_MAX_STATES: usize = 5_000_000;
/// Hierarchy norm above which a run is declared divergent.
pub const NORM_LIMIT: f64 = 1e3;

/// Hierarchy truncation: a Fock cap per expansion term plus a global depth.
///
/// `caps[k]` bounds `n_j` for every mode whose term index is `k`; when
/// `caps` is shorter than `K` its last entry is repeated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub caps: Vec<usize>,
    pub depth: usize,
    pub max_states: usize,
}

impl Truncation {
    pub fn uniform(cap: usize, depth: usize) -> Self {
        Truncation {
            caps: vec![cap],
            depth,
            max_states: DEFAULT_MAX_STATES,
        }
    }

    pub fn with_caps(caps: Vec<usize>, depth: usize) -> Self {
        Truncation {
            caps,
            depth,
            max_states: DEFAULT_MAX_STATES,
        }
    }

    /// Cap for expansion term `k`.
    pub fn cap(&self, k: usize) -> usize {
        self.caps.get(k).or(self.caps.last()).copied().unwrap_or(0)
    }

    fn validate(&self) -> Result<()> {
        if self.caps.is_empty() || self.caps.iter().any(|&l| l < 1) {
            return Err(Error::config("L", "every per-mode cap must be >= 1"));
        }
        if self.depth < 1 {
            return Err(Error::config("D_h", "global depth cap must be >= 1"));
        }
        Ok(())
    }
}

/// Index space of the hierarchy.
#[derive(Debug, Clone)]
pub struct HeomSpace {
    sys_dim: usize,
    n_modes: usize,
    k_terms: usize,
    truncation: Truncation,
    ados: Vec<Vec<u16>>,
    lookup: HashMap<Vec<u16>, usize>,
}

impl HeomSpace {
    /// Enumerates admissible ADO vectors for `model` under `truncation`.
    pub fn build(model: &SystemModel, truncation: &Truncation) -> Result<Self> {
        truncation.validate()?;
        let k_terms = model.bath_terms();
        let n_modes = model.couplings.len() * k_terms;
        let caps: Vec<usize> = (0..n_modes)
            .map(|j| truncation.cap(j % k_terms.max(1)).min(truncation.depth))
            .collect();
        let per_ado = model.dim() * model.dim();
        let mut ados = Vec::new();
        let mut current = vec![0u16; n_modes];
        enumerate(
            &caps,
            truncation.depth,
            0,
            &mut current,
            &mut ados,
            truncation.max_states / per_ado.max(1) + 1,
        )?;
        let states = ados.len() * per_ado;
        if states > truncation.max_states {
            return Err(Error::DimensionOverflow {
                states,
                cap: truncation.max_states,
            });
        }
        let lookup = ados.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Ok(HeomSpace {
            sys_dim: model.dim(),
            n_modes,
            k_terms,
            truncation: truncation.clone(),
            ados,
            lookup,
        })
    }

    pub fn sys_dim(&self) -> usize {
        self.sys_dim
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_ados(&self) -> usize {
        self.ados.len()
    }

    pub fn dim(&self) -> usize {
        self.sys_dim * self.sys_dim * self.ados.len()
    }

    pub fn truncation(&self) -> &Truncation {
        &self.truncation
    }

    pub fn ado(&self, index: usize) -> &[u16] {
        &self.ados[index]
    }

    pub fn ado_index(&self, n: &[u16]) -> Option<usize> {
        self.lookup.get(n).copied()
    }

    pub fn encode(&self, p: usize, q: usize, n: &[u16]) -> Option<usize> {
        if p >= self.sys_dim || q >= self.sys_dim {
            return None;
        }
        self.ado_index(n).map(|a| (p * self.sys_dim + q) * self.ados.len() + a)
    }

    pub fn decode(&self, offset: usize) -> Option<(usize, usize, &[u16])> {
        if offset >= self.dim() {
            return None;
        }
        let na = self.ados.len();
        let (pq, a) = (offset / na, offset % na);
        Some((pq / self.sys_dim, pq % self.sys_dim, &self.ados[a]))
    }
}

fn enumerate(caps: &[usize], left: usize, j: usize, current: &mut Vec<u16>, out: &mut Vec<Vec<u16>>, limit: usize) -> Result<()> {
    if j == caps.len() {
        out.push(current.clone());
        if out.len() > limit {
            return Err(Error::DimensionOverflow {
                states: usize::MAX,
                cap: limit,
            });
        }
        return Ok(());
    }
    for n in 0..=caps[j].min(left) {
        current[j] = n as u16;
        enumerate(caps, left - n, j + 1, current, out, limit)?;
    }
    current[j] = 0;
    Ok(())
}

/// The generator `-i * scale * H` of the hierarchy together with its
/// provenance. `scale` converts energy units into angular frequency.
#[derive(Debug, Clone)]
pub struct EffectiveLiouvillian {
    generator: CsrMatrix,
    scale: f64,
    pub label: String,
    pub k_terms: usize,
    pub truncation: Truncation,
}

impl EffectiveLiouvillian {
    /// Assembles the twin-space effective Hamiltonian
    /// `H^ - H~ - i sum v b+b + sum A^ (sqrt(r) b + d/sqrt(r) b+) - A~ (sqrt(r) b + d*/sqrt(r) b+)`.
    /// Tilde operators act as `O^T` on the `q` index.
    pub fn build(model: &SystemModel, space: &HeomSpace) -> Result<Self> {
        if space.sys_dim != model.dim() || space.n_modes != model.couplings.len() * model.bath_terms() {
            return Err(Error::BathConfig("hierarchy space does not match the model's baths".into()));
        }
        let n = model.dim();
        let na = space.n_ados();
        let kt = space.k_terms;
        let scale = model.units.angular_scale();
        let off = |p: usize, q: usize, a: usize| (p * n + q) * na + a;
        let nz = |m: &CMatrix| -> Vec<(usize, usize, C64)> {
            let mut v = Vec::new();
            for i in 0..n {
                for j in 0..n {
                    if m[(i, j)] != c(0.0, 0.0) {
                        v.push((i, j, m[(i, j)]));
                    }
                }
            }
            v
        };
        let h_nz = nz(&model.h_s);
        let a_nz: Vec<_> = model.couplings.iter().map(|cp| nz(&cp.operator)).collect();
        let modes: Vec<_> = (0..space.n_modes)
            .map(|j| {
                let mode = model.couplings[j / kt].bath.modes[j % kt];
                (j / kt, mode)
            })
            .collect();

        let mut t: Vec<(usize, usize, C64)> = Vec::new();
        let mut neighbour = vec![0u16; space.n_modes];
        for a in 0..na {
            let vec_n = space.ado(a);
            let damp: f64 = vec_n.iter().zip(&modes).map(|(&nj, (_, m))| nj as f64 * m.v).sum();
            // H^ - H~ and damping
            for p in 0..n {
                for q in 0..n {
                    if damp != 0.0 {
                        t.push((off(p, q, a), off(p, q, a), c(0.0, -damp)));
                    }
                }
            }
            for &(i, j, h) in &h_nz {
                for q in 0..n {
                    t.push((off(i, q, a), off(j, q, a), h));
                }
                for p in 0..n {
                    // (H~)_{(p,q),(p,q')} = H[q', q]
                    t.push((off(p, j, a), off(p, i, a), -h));
                }
            }
            neighbour.copy_from_slice(vec_n);
            for (j, &(m, mode)) in modes.iter().enumerate() {
                let nj = vec_n[j] as f64;
                let sr = mode.r.sqrt();
                // lowering: couples to n + e_j
                neighbour[j] = vec_n[j] + 1;
                if let Some(b) = space.ado_index(&neighbour) {
                    let w = sr * (nj + 1.0).sqrt();
                    push_coupling(&mut t, &a_nz[m], n, na, a, b, c(w, 0.0), c(w, 0.0));
                }
                // raising: couples to n - e_j
                if vec_n[j] > 0 {
                    neighbour[j] = vec_n[j] - 1;
                    if let Some(b) = space.ado_index(&neighbour) {
                        let w = nj.sqrt() / sr;
                        push_coupling(&mut t, &a_nz[m], n, na, a, b, mode.d * w, mode.d.conj() * w);
                    }
                }
                neighbour[j] = vec_n[j];
            }
        }
        let dim = space.dim();
        let mut generator = CsrMatrix::from_triplets(dim, dim, t);
        generator.scale(c(0.0, -scale));
        Ok(EffectiveLiouvillian {
            generator,
            scale,
            label: model.label.clone(),
            k_terms: model.bath_terms(),
            truncation: space.truncation.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.generator.n_rows()
    }

    pub fn nnz(&self) -> usize {
        self.generator.nnz()
    }

    pub fn max_row_nnz(&self) -> usize {
        self.generator.max_row_nnz()
    }

    /// Matrix element of the effective Hamiltonian (energy units).
    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.generator.get(row, col) / c(0.0, -self.scale)
    }

    /// `-i * scale * H`, the right-hand side of `dPsi/dt`.
    pub fn generator(&self) -> &CsrMatrix {
        &self.generator
    }
}

/// Adds `wa * A^ - wt * A~` between ADO `a` (rows) and ADO `b` (columns).
#[allow(clippy::too_many_arguments)]
fn push_coupling(
    t: &mut Vec<(usize, usize, C64)>,
    a_nz: &[(usize, usize, C64)],
    n: usize,
    na: usize,
    a: usize,
    b: usize,
    wa: C64,
    wt: C64,
) {
    let off = |p: usize, q: usize, x: usize| (p * n + q) * na + x;
    for &(i, j, v) in a_nz {
        for q in 0..n {
            t.push((off(i, q, a), off(j, q, b), wa * v));
        }
        for p in 0..n {
            t.push((off(p, j, a), off(p, i, b), -wt * v));
        }
    }
}

/// Hierarchy vector `|Psi>`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeomState {
    pub data: Vec<C64>,
}

impl HeomState {
    /// `rho0` placed in the `n = 0` block, all auxiliary blocks zero.
    pub fn from_density(space: &HeomSpace, rho0: &CMatrix) -> Self {
        let n = space.sys_dim;
        let mut data = vec![c(0.0, 0.0); space.dim()];
        for p in 0..n {
            for q in 0..n {
                data[(p * n + q) * space.n_ados()] = rho0[(p, q)];
            }
        }
        HeomState { data }
    }

    /// Basis hierarchy state `|p>|q~>|0>`.
    pub fn basis(space: &HeomSpace, p: usize, q: usize) -> Self {
        let mut data = vec![c(0.0, 0.0); space.dim()];
        data[(p * space.sys_dim + q) * space.n_ados()] = c(1.0, 0.0);
        HeomState { data }
    }

    /// Reduced density matrix (the `n = 0` block).
    pub fn reduced_density(&self, space: &HeomSpace) -> CMatrix {
        let n = space.sys_dim;
        CMatrix::from_fn(n, n, |p, q| self.data[(p * n + q) * space.n_ados()])
    }

    /// Element `<p|rho|q>` of the reduced density matrix.
    pub fn element(&self, space: &HeomSpace, p: usize, q: usize) -> C64 {
        self.data[(p * space.sys_dim + q) * space.n_ados()]
    }

    pub fn norm(&self) -> f64 {
        sparse::norm(&self.data)
    }
}

/// Integrates `dPsi/dt = -i scale H Psi` with RK4 and calls `observe` at
/// every time in `grid` (ascending, each a multiple of `dt`).
pub fn evolve<F>(gen: &EffectiveLiouvillian, state: &mut HeomState, grid: &[f64], dt: f64, mut observe: F) -> Result<()>
where
    F: FnMut(usize, f64, &HeomState) -> Result<()>,
{
    if !(dt > 0.0) {
        return Err(Error::config("dt", "time step must be positive"));
    }
    let steps = grid_steps(grid, dt)?;
    let mut rk = Rk4::new(state.data.len());
    let mut done = 0usize;
    for (i, (&t, &target)) in grid.iter().zip(&steps).enumerate() {
        while done < target {
            rk.step(&gen.generator, &mut state.data, dt);
            done += 1;
            if done.is_multiple_of(64) || done == target {
                check_norm(state, done as f64 * dt)?;
            }
        }
        observe(i, t, state)?;
    }
    Ok(())
}

/// Converts grid times into cumulative step counts, rejecting times that
/// are not ascending multiples of `dt`.
pub fn grid_steps(grid: &[f64], dt: f64) -> Result<Vec<usize>> {
    let mut prev = 0usize;
    let mut out = Vec::with_capacity(grid.len());
    for (i, &t) in grid.iter().enumerate() {
        let s = sparse::steps_to(t, dt)
            .ok_or_else(|| Error::config("grid_step", format!("grid time {t} is not a non-negative multiple of dt = {dt}")))?;
        if i > 0 && s <= prev {
            return Err(Error::config("grid_step", "grid times must be strictly increasing"));
        }
        prev = s;
        out.push(s);
    }
    Ok(out)
}

fn check_norm(state: &HeomState, time: f64) -> Result<()> {
    let norm = state.norm();
    if !(norm <= NORM_LIMIT) {
        return Err(Error::Divergence {
            time,
            norm,
            limit: NORM_LIMIT,
        });
    }
    Ok(())
}

/// Runs the physical initial state and returns the reduced density matrix
/// at every grid time.
pub fn reduced_trajectory(model: &SystemModel, truncation: &Truncation, grid: &[f64], dt: f64) -> Result<Vec<CMatrix>> {
    let space = HeomSpace::build(model, truncation)?;
    let gen = EffectiveLiouvillian::build(model, &space)?;
    let mut state = HeomState::from_density(&space, &model.rho0);
    let mut out = Vec::with_capacity(grid.len());
    evolve(&gen, &mut state, grid, dt, |_, _, s| {
        out.push(s.reduced_density(&space));
        Ok(())
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::models::{spin_boson_model, triad_model, Conformation};
    use crate::units::Units;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    fn sb(eta: f64, k: usize) -> SystemModel {
        spin_boson_model("sb", Units::Dimensionless, 0.5, 2.5, eta, 1.0, 1.0, k).unwrap()
    }

    #[test]
    fn smallest_space() {
        let s = HeomSpace::build(&sb(1.0, 1), &Truncation::uniform(1, 1)).unwrap();
        assert_eq!(s.dim(), 8);
        assert_eq!(s.ado(0), &[0]);
        assert_eq!(s.ado(1), &[1]);
    }

    #[test]
    fn space_size_matches_brute_force() {
        let s = HeomSpace::build(&sb(1.0, 5), &Truncation::uniform(6, 6)).unwrap();
        let mut count = 0;
        for i in 0..7usize.pow(5) {
            let digits: Vec<usize> = (0..5).map(|j| (i / 7usize.pow(j)) % 7).collect();
            if digits.iter().sum::<usize>() <= 6 {
                count += 1;
            }
        }
        assert_eq!(count, binom(11, 5));
        assert_eq!(s.dim(), 4 * count);
    }

    #[test]
    fn per_term_caps() {
        let s = HeomSpace::build(&sb(1.0, 3), &Truncation::with_caps(vec![3, 1], 10)).unwrap();
        assert_eq!(s.n_ados(), 4 * 2 * 2);
        assert!(s.ado_index(&[3, 1, 1]).is_some());
        assert!(s.ado_index(&[0, 0, 2]).is_none());
    }

    #[test]
    fn overflow_is_reported() {
        let mut tr = Truncation::uniform(10, 10);
        tr.max_states = 1000;
        assert!(matches!(HeomSpace::build(&sb(1.0, 5), &tr), Err(Error::DimensionOverflow { .. })));
    }

    #[test]
    fn bad_truncation_names_key() {
        let err = HeomSpace::build(&sb(1.0, 2), &Truncation::uniform(0, 3)).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "L"));
    }

    #[test]
    fn ladder_element() {
        // single mode, L = 1: <n=1|b+|n=0> carries the d/sqrt(r) factor
        let m = sb(1.0, 1);
        let s = HeomSpace::build(&m, &Truncation::uniform(1, 1)).unwrap();
        let g = EffectiveLiouvillian::build(&m, &s).unwrap();
        let d = m.couplings[0].bath.modes[0].d;
        let r = m.couplings[0].bath.modes[0].r;
        // row (D,A,n=1), column (D,A,n=0): A^ - A~ with A = sz gives 1 - (-1) weights
        let row = s.encode(0, 1, &[1]).unwrap();
        let col = s.encode(0, 1, &[0]).unwrap();
        let expect = d / r.sqrt() * 1.0 - d.conj() / r.sqrt() * (-1.0);
        assert!((g.entry(row, col) - expect).norm() < 1e-12);
        // and the lowering side carries sqrt(r)
        let expect_low = c(r.sqrt() * 2.0, 0.0);
        assert!((g.entry(col, row) - expect_low).norm() < 1e-12);
        assert!(g.max_row_nnz() <= 2 + 2 * s.n_modes() + 1);
    }

    fn rabi(v: f64, e0: f64, t: f64) -> f64 {
        let om = (v * v + e0 * e0).sqrt();
        1.0 - v * v / (om * om) * (om * t).sin().powi(2)
    }

    #[test]
    fn zero_coupling_is_rabi_and_keeps_ados_empty() {
        let m = sb(0.0, 2);
        let s = HeomSpace::build(&m, &Truncation::uniform(2, 2)).unwrap();
        let g = EffectiveLiouvillian::build(&m, &s).unwrap();
        let mut st = HeomState::from_density(&s, &m.rho0);
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
        let mut min = 1.0f64;
        evolve(&g, &mut st, &grid, 0.001, |_, t, state| {
            let rho = state.reduced_density(&s);
            assert!((rho[(0, 0)].re - rabi(0.5, 2.5, t)).abs() < 1e-9);
            min = min.min(rho[(0, 0)].re);
            for a in 1..s.n_ados() {
                for pq in 0..4 {
                    assert_eq!(state.data[pq * s.n_ados() + a], c(0.0, 0.0));
                }
            }
            Ok(())
        })
        .unwrap();
        assert_relative_eq!(1.0 - min, 0.038_461_5, epsilon = 2e-4);
    }

    #[test]
    fn triad_zero_coupling_matches_rabi() {
        let mut m = triad_model(Conformation::Bent, 2).unwrap();
        m = m.with_bath_terms(2).unwrap();
        for cp in &mut m.couplings {
            for mode in &mut cp.bath.modes {
                mode.d = c(0.0, 0.0);
            }
        }
        let rho = reduced_trajectory(&m, &Truncation::uniform(2, 2), &[0.0, 100.0], 0.025).unwrap();
        let v = m.h_s[(0, 1)].re;
        let e0 = m.h_s[(0, 0)].re;
        let s = m.units.angular_scale();
        let diff = (rho[1][(0, 0)].re - rabi(v * s, e0 * s, 100.0)).abs();
        assert!(diff < 1e-8, "{diff}");
    }

    #[test]
    fn trace_and_hermiticity_along_trajectory() {
        let m = sb(0.1, 3);
        let grid: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let traj = reduced_trajectory(&m, &Truncation::uniform(6, 6), &grid, 0.001).unwrap();
        for rho in traj {
            assert!((linalg::trace(&rho) - c(1.0, 0.0)).norm() < 1e-6);
            assert!(linalg::hermiticity_deviation(&rho) < 1e-8);
        }
    }

    #[test]
    fn rk4_self_convergence() {
        let m = sb(0.5, 2);
        let tr = Truncation::uniform(4, 4);
        let p = |dt: f64| reduced_trajectory(&m, &tr, &[0.0, 4.0], dt).unwrap()[1][(0, 0)].re;
        let (a, b, cc) = (p(0.1), p(0.05), p(0.025));
        let ratio = (a - b).abs() / (b - cc).abs();
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
    }

    #[test]
    fn t_zero_is_identity_and_bad_grid_rejected() {
        let m = sb(1.0, 2);
        let traj = reduced_trajectory(&m, &Truncation::uniform(2, 2), &[0.0], 0.1).unwrap();
        assert_eq!(traj[0], m.rho0);
        assert!(reduced_trajectory(&m, &Truncation::uniform(2, 2), &[0.0, 0.15], 0.1).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let m = sb(1.0, 2);
        // a huge step makes RK4 unstable
        let err = reduced_trajectory(&m, &Truncation::uniform(8, 8), &[0.0, 4000.0], 2.0).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
        assert_eq!(err.exit_code(), 3);
    }

    proptest! {
        #[test]
        fn encode_decode_roundtrip(i in 0usize..10_000) {
            let m = sb(1.0, 4);
            let s = HeomSpace::build(&m, &Truncation::with_caps(vec![5, 2], 6)).unwrap();
            let i = i % s.dim();
            let (p, q, n) = s.decode(i).unwrap();
            let n = n.to_vec();
            prop_assert_eq!(s.encode(p, q, &n), Some(i));
        }
    }
}
