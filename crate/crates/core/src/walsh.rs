//! Diagonal-unitary synthesis with Walsh operators.
//!
//! `w_j` applies `Z` to qubit `l` iff bit `l` of `j` is set, so
//! `e^{iF} = prod_j e^{i a_j w_j}` with `f_k = sum_j a_j (-1)^{popcount(j & k)}`.

use crate::circuit::Gate;
use crate::{Error, Result};

/// Walsh coefficients with magnitude at or below this are dropped.
pub const DEFAULT_DROP_THRESHOLD: f64 = 1e-12;
/// Slack allowed on normalized singular values outside `[0, 1]`.
pub const SIGMA_SLACK: f64 = 1e-12;

/// Phases of `Sigma+ (+) Sigma-`: `f_k = arccos(s_k)` on the first half and
/// `-arccos(s_k)` on the second.
pub fn phases_from_singulars(sigma_tilde: &[f64]) -> Result<Vec<f64>> {
    let mut f = Vec::with_capacity(2 * sigma_tilde.len());
    for &s in sigma_tilde {
        if !(-SIGMA_SLACK..=1.0 + SIGMA_SLACK).contains(&s) {
            return Err(Error::Domain(format!("normalized singular value {s} is outside [0, 1]")));
        }
        f.push(s.clamp(0.0, 1.0).acos());
    }
    let minus: Vec<f64> = f.iter().map(|x| -x).collect();
    f.extend(minus);
    Ok(f)
}

/// `a_j = (1/N) sum_k (-1)^{popcount(j & k)} f_k` by an in-place butterfly.
pub fn walsh_transform(f: &[f64]) -> Result<Vec<f64>> {
    let n = f.len();
    if !n.is_power_of_two() {
        return Err(Error::Domain(format!("Walsh transform length {n} is not a power of two")));
    }
    let mut a = f.to_vec();
    let mut h = 1;
    while h < n {
        for i in (0..n).step_by(2 * h) {
            for j in i..i + h {
                let (x, y) = (a[j], a[j + h]);
                a[j] = x + y;
                a[j + h] = x - y;
            }
        }
        h *= 2;
    }
    let inv = 1.0 / n as f64;
    a.iter_mut().for_each(|x| *x *= inv);
    Ok(a)
}

/// Gate list for `prod_j e^{i a_j w_j}` on `log2(a.len())` qubits.
///
/// Terms sharing a target (the highest set bit of `j`) are visited in
/// Gray-code order of the remaining bits, so consecutive parity ladders
/// differ by a single CNOT. `a_0` becomes a global phase.
pub fn synthesize_diagonal(a: &[f64], threshold: f64) -> Vec<Gate> {
    let n = a.len();
    assert!(n.is_power_of_two(), "coefficient vector length must be a power of two");
    let m = n.trailing_zeros() as usize;
    let mut gates = Vec::new();
    if a[0].abs() > threshold {
        gates.push(Gate::GlobalPhase(a[0]));
    }
    for t in 0..m {
        let block = 1usize << t;
        if (0..block).all(|s| a[block + s].abs() <= threshold) {
            continue;
        }
        let mut prev = 0usize;
        for i in 0..block {
            let s = i ^ (i >> 1);
            let changed = s ^ prev;
            if changed != 0 {
                gates.push(Gate::Cx {
                    control: changed.trailing_zeros() as usize,
                    target: t,
                });
            }
            prev = s;
            let coeff = a[block + s];
            if coeff.abs() > threshold {
                gates.push(Gate::Rz(t, -2.0 * coeff));
            }
        }
        if prev != 0 {
            gates.push(Gate::Cx {
                control: prev.trailing_zeros() as usize,
                target: t,
            });
        }
    }
    gates
}

/// Gates realizing `Sigma+ (+) Sigma-` for normalized singular values,
/// with the block-selecting qubit most significant.
pub fn sigma_block_gates(sigma_tilde: &[f64]) -> Result<Vec<Gate>> {
    let f = phases_from_singulars(sigma_tilde)?;
    Ok(synthesize_diagonal(&walsh_transform(&f)?, DEFAULT_DROP_THRESHOLD))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Circuit;
    use crate::linalg::{c, CMatrix};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn direct(f: &[f64]) -> Vec<f64> {
        let n = f.len();
        (0..n)
            .map(|j| {
                (0..n)
                    .map(|k| if (j & k).count_ones() % 2 == 0 { f[k] } else { -f[k] })
                    .sum::<f64>()
                    / n as f64
            })
            .collect()
    }

    fn reconstruct(gates: Vec<Gate>, m: usize) -> CMatrix {
        let mut circ = Circuit::new(m);
        circ.extend(gates).unwrap();
        circ.unitary()
    }

    fn diag_exp(f: &[f64]) -> CMatrix {
        CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(f.len(), f.iter().map(|&x| c(0.0, x).exp())))
    }

    #[test]
    fn phase_examples() {
        assert_eq!(phases_from_singulars(&[1.0, 1.0]).unwrap(), vec![0.0; 4]);
        let f = phases_from_singulars(&[0.0, 0.3]).unwrap();
        assert_relative_eq!(f[0], PI / 2.0);
        assert_relative_eq!(f[2], -PI / 2.0);
        let f = phases_from_singulars(&[1.0, 0.5]).unwrap();
        for (x, y) in f.iter().zip([0.0, PI / 3.0, 0.0, -PI / 3.0]) {
            assert_relative_eq!(*x, y, epsilon = 1e-15);
        }
        assert!(phases_from_singulars(&[1.1]).is_err());
        assert!(phases_from_singulars(&[1.0 + 1e-13]).is_ok());
    }

    #[test]
    fn transform_examples() {
        let a = walsh_transform(&[0.7; 8]).unwrap();
        assert_relative_eq!(a[0], 0.7);
        assert!(a[1..].iter().all(|x| x.abs() < 1e-16));
        let a = walsh_transform(&[0.3, 1.1]).unwrap();
        assert_relative_eq!(a[0], 0.7);
        assert_relative_eq!(a[1], -0.4);
        assert!(walsh_transform(&[1.0; 3]).is_err());
    }

    #[test]
    fn global_phase_only() {
        let mut a = vec![0.0; 8];
        a[0] = 0.4;
        assert_eq!(synthesize_diagonal(&a, DEFAULT_DROP_THRESHOLD), vec![Gate::GlobalPhase(0.4)]);
    }

    fn counts(m: usize) -> (usize, usize) {
        let a: Vec<f64> = (0..1usize << m).map(|j| 0.1 + 0.01 * j as f64).collect();
        let mut circ = Circuit::new(m);
        circ.extend(synthesize_diagonal(&a, DEFAULT_DROP_THRESHOLD)).unwrap();
        let s = circ.stats();
        (s.two_qubit_count, s.rotation_count)
    }

    #[test]
    fn dense_gate_counts() {
        assert_eq!(counts(2), (2, 3));
        assert_eq!(counts(3), (6, 7));
        assert_eq!(counts(4), (14, 15));
    }

    #[test]
    fn three_qubit_reconstruction() {
        let f: Vec<f64> = (0..8).map(|k| (k as f64 * 0.77).sin()).collect();
        let u = reconstruct(synthesize_diagonal(&walsh_transform(&f).unwrap(), DEFAULT_DROP_THRESHOLD), 3);
        assert!(crate::linalg::max_abs_diff(&u, &diag_exp(&f)) < 1e-10);
    }

    proptest! {
        #[test]
        fn butterfly_matches_direct_sum(f in prop::collection::vec(-3.0f64..3.0, 16)) {
            let fast = walsh_transform(&f).unwrap();
            for (x, y) in fast.iter().zip(direct(&f)) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            // involution up to 1/N
            let back: Vec<f64> = walsh_transform(&fast).unwrap().iter().map(|x| x * 16.0).collect();
            for (x, y) in back.iter().zip(&f) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn sigma_block_reconstruction(s in prop::collection::vec(0.0f64..=1.0, 1..=8)) {
            let n = s.len().next_power_of_two();
            let mut s = s;
            s.resize(n, 0.0);
            let m = (2 * n).trailing_zeros() as usize;
            let u = reconstruct(sigma_block_gates(&s).unwrap(), m);
            let f = phases_from_singulars(&s).unwrap();
            prop_assert!(crate::linalg::max_abs_diff(&u, &diag_exp(&f)) < 1e-10);
        }

        #[test]
        fn term_order_does_not_matter(f in prop::collection::vec(-2.0f64..2.0, 8), seed in 0u64..1000) {
            // product of individual Walsh exponentials in a shuffled order
            let a = walsh_transform(&f).unwrap();
            let mut order: Vec<usize> = (0..8).collect();
            let mut x = seed;
            for i in (1..8).rev() {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                order.swap(i, (x >> 33) as usize % (i + 1));
            }
            let mut u = CMatrix::identity(8, 8);
            for j in order {
                let mut single = vec![0.0; 8];
                single[j] = a[j];
                u = reconstruct(synthesize_diagonal(&single, DEFAULT_DROP_THRESHOLD), 3) * u;
            }
            prop_assert!(crate::linalg::max_abs_diff(&u, &diag_exp(&f)) < 1e-10);
        }
    }
}
