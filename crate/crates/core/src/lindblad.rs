//! Secular Lindblad master equation derived from the same Debye baths:
//! jump operators from the Bohr-frequency decomposition, damping rates and
//! Lamb shift from the half-sided Fourier transform of `C(t)`.

use crate::bath::BathDecomposition;
use crate::heom::grid_steps;
use crate::linalg::{self, c, kron, CMatrix};
use crate::models::SystemModel;
use crate::sparse::{CsrMatrix, Rk4};
use crate::{Error, Result, C64};

/// Default width used to group Bohr frequencies (energy units).
pub const DEFAULT_GROUPING_TOLERANCE: f64 = 1e-6;
/// Most negative eigenvalue of `rho(t)` tolerated before aborting.
pub const POSITIVITY_TOLERANCE: f64 = 1e-6;

/// `Gamma(w) = sum_k d_k / (v_k - i w)`, so `gamma = 2 Re Gamma` and
/// `S = Im Gamma`.
pub fn half_fourier_gamma(dec: &BathDecomposition, omega: f64) -> C64 {
    dec.modes.iter().map(|m| m.d / c(m.v, -omega)).sum()
}

/// One dissipative channel `gamma (A rho A^dag - {A^dag A, rho}/2)`.
#[derive(Debug, Clone)]
pub struct JumpTerm {
    pub coupling: usize,
    pub omega: f64,
    /// `A_m(w)` in the site basis.
    pub operator: CMatrix,
    pub gamma: f64,
    pub shift: f64,
}

#[derive(Debug, Clone)]
pub struct LindbladGenerator {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
    /// Grouped Bohr frequencies `e' - e`, ascending.
    pub bohr_frequencies: Vec<f64>,
    pub jumps: Vec<JumpTerm>,
    pub h_s: CMatrix,
    pub lamb_shift: CMatrix,
    pub include_lamb_shift: bool,
    scale: f64,
    superoperator: CsrMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LindbladOptions {
    pub grouping_tolerance: f64,
    pub lamb_shift: bool,
}

impl Default for LindbladOptions {
    fn default() -> Self {
        LindbladOptions {
            grouping_tolerance: DEFAULT_GROUPING_TOLERANCE,
            lamb_shift: true,
        }
    }
}

impl LindbladGenerator {
    pub fn build(model: &SystemModel, opts: LindbladOptions) -> Result<Self> {
        let n = model.dim();
        let (eps, vecs) = linalg::eigh(&model.h_s);
        let mut diffs: Vec<f64> = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                diffs.push(eps[b] - eps[a]);
            }
        }
        diffs.sort_by(f64::total_cmp);
        let mut groups: Vec<Vec<f64>> = Vec::new();
        for w in diffs {
            match groups.last_mut() {
                Some(g) if w - g[g.len() - 1] <= opts.grouping_tolerance => g.push(w),
                _ => groups.push(vec![w]),
            }
        }
        let bohr: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
        let group_of = |w: f64| {
            groups
                .iter()
                .position(|g| w >= g[0] - opts.grouping_tolerance * 0.5 && w <= g[g.len() - 1] + opts.grouping_tolerance * 0.5)
                .expect("every difference belongs to a group")
        };

        let mut jumps = Vec::new();
        let mut lamb = CMatrix::zeros(n, n);
        for (m, cpl) in model.couplings.iter().enumerate() {
            let a_eig = vecs.adjoint() * &cpl.operator * &vecs;
            let mut ops = vec![CMatrix::zeros(n, n); bohr.len()];
            for a in 0..n {
                for b in 0..n {
                    ops[group_of(eps[b] - eps[a])][(a, b)] += a_eig[(a, b)];
                }
            }
            for (gi, op_eig) in ops.into_iter().enumerate() {
                if linalg::max_abs(&op_eig) < 1e-14 {
                    continue;
                }
                let omega = bohr[gi];
                let big = half_fourier_gamma(&cpl.bath, omega);
                let mut gamma = 2.0 * big.re;
                if gamma < 0.0 {
                    log::warn!("negative damping rate {gamma:e} at w = {omega} for coupling {m} clamped to zero");
                    gamma = 0.0;
                }
                let operator = &vecs * op_eig * vecs.adjoint();
                if opts.lamb_shift {
                    lamb += operator.adjoint() * &operator * c(big.im, 0.0);
                }
                jumps.push(JumpTerm {
                    coupling: m,
                    omega,
                    operator,
                    gamma,
                    shift: big.im,
                });
            }
        }
        let scale = model.units.angular_scale();
        let superoperator = assemble(&model.h_s, &lamb, &jumps, scale);
        Ok(LindbladGenerator {
            eigenvalues: eps,
            eigenvectors: vecs,
            bohr_frequencies: bohr,
            jumps,
            h_s: model.h_s.clone(),
            lamb_shift: lamb,
            include_lamb_shift: opts.lamb_shift,
            scale,
            superoperator,
        })
    }

    /// `d vec(rho)/dt` as a matrix on row-major `vec(rho)`.
    pub fn superoperator(&self) -> &CsrMatrix {
        &self.superoperator
    }

    /// Sum of jump operators belonging to coupling `m`.
    pub fn jump_sum(&self, m: usize) -> CMatrix {
        let n = self.h_s.nrows();
        self.jumps
            .iter()
            .filter(|j| j.coupling == m)
            .fold(CMatrix::zeros(n, n), |acc, j| acc + &j.operator)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// `-i[H + H_LS, rho] + sum gamma (A rho A^dag - {A^dag A, rho}/2)`, scaled
/// to angular frequency. On row-major `vec`, `A rho B -> kron(A, B^T)`.
fn assemble(h: &CMatrix, lamb: &CMatrix, jumps: &[JumpTerm], scale: f64) -> CsrMatrix {
    let n = h.nrows();
    let id = CMatrix::identity(n, n);
    let hh = h + lamb;
    let mut l = (kron(&hh, &id) - kron(&id, &hh.transpose())) * c(0.0, -1.0);
    for j in jumps {
        if j.gamma == 0.0 {
            continue;
        }
        let a = &j.operator;
        let ada = a.adjoint() * a;
        let d = kron(a, &a.conjugate()) - (kron(&ada, &id) + kron(&id, &ada.transpose())) * c(0.5, 0.0);
        l += d * c(j.gamma, 0.0);
    }
    CsrMatrix::from_dense(&(l * c(scale, 0.0)))
}

/// RK4 integration of the master equation; returns `rho` at every grid time.
pub fn evolve_lindblad(gen: &LindbladGenerator, rho0: &CMatrix, grid: &[f64], dt: f64) -> Result<Vec<CMatrix>> {
    if !(dt > 0.0) {
        return Err(Error::config("dt", "time step must be positive"));
    }
    let n = rho0.nrows();
    if n != gen.h_s.nrows() {
        return Err(Error::Domain("initial state does not match the generator".into()));
    }
    let steps = grid_steps(grid, dt)?;
    let mut y: Vec<C64> = (0..n * n).map(|i| rho0[(i / n, i % n)]).collect();
    let mut rk = Rk4::new(n * n);
    let mut done = 0;
    let mut out = Vec::with_capacity(grid.len());
    for (&t, &target) in grid.iter().zip(&steps) {
        while done < target {
            rk.step(&gen.superoperator, &mut y, dt);
            done += 1;
        }
        if y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Divergence {
                time: t,
                norm: f64::INFINITY,
                limit: f64::MAX,
            });
        }
        let rho = CMatrix::from_fn(n, n, |p, q| y[p * n + q]);
        let herm = (&rho + rho.adjoint()) * c(0.5, 0.0);
        let min = linalg::min_eigenvalue(&herm);
        if min < -POSITIVITY_TOLERANCE {
            return Err(Error::Positivity {
                time: t,
                min_eigenvalue: min,
            });
        }
        out.push(rho);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{debye_decompose, SpectralDensity};
    use crate::models::{fmo_model, spin_boson_model, triad_model, Conformation};
    use crate::units::Units;
    use approx::assert_relative_eq;

    fn dec(eta: f64, k: usize) -> BathDecomposition {
        debye_decompose(&SpectralDensity::debye(eta, 1.0).unwrap(), 1.0, k).unwrap()
    }

    #[test]
    fn zero_coupling_has_no_rates() {
        let g = half_fourier_gamma(&dec(0.0, 4), 0.7);
        assert_eq!(g, c(0.0, 0.0));
    }

    #[test]
    fn zero_frequency_limit() {
        let g2 = 2.0 * half_fourier_gamma(&dec(1.0, 2), 0.0).re;
        assert_relative_eq!(g2, 1.93, epsilon = 0.01);
        let mut prev = 0.0;
        for k in [2, 5, 20, 100, 1000] {
            let g = 2.0 * half_fourier_gamma(&dec(1.0, k), 0.0).re;
            assert!(g > prev && g < 2.0);
            prev = g;
        }
        assert!((prev - 2.0).abs() < 1e-3);
    }

    #[test]
    fn detailed_balance_at_large_k() {
        let density = SpectralDensity::debye(1.0, 1.0).unwrap();
        for k in [20, 50, 200] {
            let d = debye_decompose(&density, 1.0, k).unwrap();
            let ratio = half_fourier_gamma(&d, 1.0).re / half_fourier_gamma(&d, -1.0).re;
            assert!((ratio / 1f64.exp() - 1.0).abs() < 0.01, "K = {k}: {ratio}");
            // against the exact Fourier transform
            let exact = density.thermal_rate(1.0, 1.0);
            assert!((2.0 * half_fourier_gamma(&d, 1.0).re / exact - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn two_level_bohr_set_and_lamb_shift_commutes() {
        let m = triad_model(Conformation::Bent, 50).unwrap();
        let g = LindbladGenerator::build(&m, LindbladOptions::default()).unwrap();
        let v = m.h_s[(0, 1)].re;
        let e0 = m.h_s[(0, 0)].re;
        let delta = 2.0 * (v * v + e0 * e0).sqrt();
        assert_eq!(g.bohr_frequencies.len(), 3);
        assert_relative_eq!(g.bohr_frequencies[0], -delta, max_relative = 1e-12);
        assert!(g.bohr_frequencies[1].abs() < 1e-9);
        assert_relative_eq!(g.bohr_frequencies[2], delta, max_relative = 1e-12);
        let comm = &m.h_s * &g.lamb_shift - &g.lamb_shift * &m.h_s;
        assert!(linalg::max_abs(&comm) <= 1e-8 * linalg::max_abs(&m.h_s).max(1.0));
        assert!(linalg::max_abs_diff(&g.jump_sum(0), &m.couplings[0].operator) < 1e-12);
    }

    #[test]
    fn fmo_completeness_and_adjoint_pairs() {
        let m = fmo_model(2).unwrap();
        let g = LindbladGenerator::build(&m, LindbladOptions::default()).unwrap();
        for i in 0..7 {
            assert!(linalg::max_abs_diff(&g.jump_sum(i), &m.couplings[i].operator) < 1e-12);
        }
        for j in &g.jumps {
            let partner = g
                .jumps
                .iter()
                .find(|o| o.coupling == j.coupling && (o.omega + j.omega).abs() < 1e-6)
                .unwrap();
            assert!(linalg::max_abs_diff(&partner.operator, &j.operator.adjoint()) < 1e-12);
        }
        let comm = &m.h_s * &g.lamb_shift - &g.lamb_shift * &m.h_s;
        assert!(linalg::max_abs(&comm) <= 1e-8);
    }

    #[test]
    fn trace_hermiticity_positivity() {
        let m = spin_boson_model("sb", Units::Dimensionless, 0.5, 2.5, 0.1, 1.0, 1.0, 200).unwrap();
        let g = LindbladGenerator::build(&m, LindbladOptions::default()).unwrap();
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
        for rho in evolve_lindblad(&g, &m.rho0, &grid, 0.001).unwrap() {
            assert!((linalg::trace(&rho) - c(1.0, 0.0)).norm() < 1e-9);
            assert!(linalg::hermiticity_deviation(&rho) < 1e-10);
            assert!(linalg::min_eigenvalue(&rho) > -1e-8);
        }
    }

    #[test]
    fn zero_coupling_is_shifted_rabi() {
        let m = spin_boson_model("sb", Units::Dimensionless, 0.5, 2.5, 0.0, 1.0, 1.0, 3).unwrap();
        let g = LindbladGenerator::build(&m, LindbladOptions::default()).unwrap();
        assert!(g.jumps.iter().all(|j| j.gamma == 0.0));
        let traj = evolve_lindblad(&g, &m.rho0, &[0.0, 1.0, 2.0, 3.0], 0.001).unwrap();
        let om = (0.25f64 + 6.25).sqrt();
        for (i, rho) in traj.iter().enumerate() {
            let t = i as f64;
            let p = 1.0 - 0.25 / (om * om) * (om * t).sin().powi(2);
            assert!((rho[(0, 0)].re - p).abs() < 1e-9);
        }
    }

    #[test]
    fn positivity_violation_is_reported() {
        let m = spin_boson_model("sb", Units::Dimensionless, 0.5, 2.5, 1.0, 1.0, 1.0, 50).unwrap();
        let g = LindbladGenerator::build(&m, LindbladOptions::default()).unwrap();
        // an unphysical initial state drifts negative immediately
        let bad = linalg::real_matrix(2, 2, &[1.2, 0.0, 0.0, -0.2]);
        let err = evolve_lindblad(&g, &bad, &[0.0, 0.1], 0.001).unwrap_err();
        assert!(matches!(err, Error::Positivity { .. }));
    }
}
