//! Statevector simulation and seeded shot sampling.
//!
//! Sampling uses `ChaCha20Rng::seed_from_u64(seed)` and draws one uniform
//! `f64` per shot, inverted through the cumulative distribution over basis
//! states in index order. Bitstrings are written most significant qubit
//! first, so the ancilla of a dilation circuit is the leftmost character.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{apply_gate, Circuit};
use crate::linalg::{c, CVector};
use crate::{Error, Result, C64};

/// Allowed drift of the state norm.
pub const NORM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct RegisterState {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl RegisterState {
    /// `|0...0>` on `n_qubits`.
    pub fn zero(n_qubits: usize) -> Self {
        let mut amps = vec![c(0.0, 0.0); 1 << n_qubits];
        amps[0] = c(1.0, 0.0);
        RegisterState { n_qubits, amps }
    }

    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        if !amps.len().is_power_of_two() {
            return Err(Error::RegisterMismatch(format!("{} amplitudes is not a power of two", amps.len())));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Domain(format!("state has norm {norm}, expected 1")));
        }
        Ok(RegisterState {
            n_qubits: amps.len().trailing_zeros() as usize,
            amps,
        })
    }

    /// `|0>_ancillas (x) |phi>` with the ancillas above the main register.
    pub fn from_main(phi: &CVector, n_ancilla: usize) -> Result<Self> {
        let mut amps = vec![c(0.0, 0.0); phi.len() << n_ancilla];
        amps[..phi.len()].copy_from_slice(phi.as_slice());
        Self::from_amplitudes(amps)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Main-register amplitudes for a fixed value of the top `n_ancilla` qubits.
    pub fn block(&self, n_ancilla: usize, value: usize) -> Vec<C64> {
        let size = self.amps.len() >> n_ancilla;
        self.amps[value * size..(value + 1) * size].to_vec()
    }

    pub fn apply_in_place(&mut self, circ: &Circuit) -> Result<()> {
        if circ.n_qubits() != self.n_qubits {
            return Err(Error::RegisterMismatch(format!(
                "circuit acts on {} qubits, state has {}",
                circ.n_qubits(),
                self.n_qubits
            )));
        }
        for g in circ.gates() {
            apply_gate(&mut self.amps, g);
        }
        Ok(())
    }

    pub fn apply(mut self, circ: &Circuit) -> Result<Self> {
        self.apply_in_place(circ)?;
        Ok(self)
    }
}

/// Measurement record `{bitstring: count}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotCounts {
    pub n_qubits: usize,
    pub shots: u64,
    pub seed: u64,
    pub counts: BTreeMap<String, u64>,
}

impl ShotCounts {
    pub fn get(&self, index: usize) -> u64 {
        self.counts.get(&bitstring(index, self.n_qubits)).copied().unwrap_or(0)
    }

    /// The plain `{bitstring: count}` map.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.counts).expect("string map serializes")
    }

    pub fn from_json(v: &serde_json::Value, seed: u64) -> Result<Self> {
        let counts: BTreeMap<String, u64> = serde_json::from_value(v.clone()).map_err(|e| Error::Parse(format!("counts: {e}")))?;
        let n_qubits = counts.keys().next().map_or(0, |k| k.len());
        if counts
            .keys()
            .any(|k| k.len() != n_qubits || !k.chars().all(|ch| ch == '0' || ch == '1'))
        {
            return Err(Error::Parse("counts: bitstrings must be equal-length binary strings".into()));
        }
        Ok(ShotCounts {
            n_qubits,
            shots: counts.values().sum(),
            seed,
            counts,
        })
    }
}

pub fn bitstring(index: usize, n_qubits: usize) -> String {
    (0..n_qubits).rev().map(|q| if index >> q & 1 == 1 { '1' } else { '0' }).collect()
}

/// Multinomial sampling of `shots` outcomes from `|amplitude|^2`.
pub fn sample_counts(state: &RegisterState, shots: u64, seed: u64) -> Result<ShotCounts> {
    if shots == 0 {
        return Err(Error::ZeroShots);
    }
    let mut cdf = Vec::with_capacity(state.amps.len());
    let mut acc = 0.0;
    for a in &state.amps {
        acc += a.norm_sqr();
        cdf.push(acc);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut hist = vec![0u64; cdf.len()];
    for _ in 0..shots {
        let u = rng.gen::<f64>() * acc;
        let i = cdf.partition_point(|&x| x <= u).min(cdf.len() - 1);
        hist[i] += 1;
    }
    let counts = hist
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(i, &n)| (bitstring(i, state.n_qubits), n))
        .collect();
    Ok(ShotCounts {
        n_qubits: state.n_qubits,
        shots,
        seed,
        counts,
    })
}

/// `P_i = sigma0 sqrt(N_i / N_c)` for every main-register index `i` with the
/// single ancilla (top qubit) measured in `0`.
pub fn populations_from_counts(counts: &ShotCounts, sigma0: f64, register_dim: usize) -> Result<Vec<f64>> {
    if counts.shots == 0 {
        return Err(Error::ZeroShots);
    }
    if register_dim << 1 != 1usize << counts.n_qubits {
        return Err(Error::RegisterMismatch("counts do not match a one-ancilla register".into()));
    }
    Ok((0..register_dim)
        .map(|i| sigma0 * (counts.get(i) as f64 / counts.shots as f64).sqrt())
        .collect())
}

/// Predicted readout band `P sqrt(1 -/+ N_err / N_exact)` with
/// `N_exact = N_c (P / sigma0)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotBand {
    pub n_exact: f64,
    pub n_err: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ShotBand {
    /// Half the band width, used as a one-sigma error estimate.
    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }
}

/// Error band for a population read out from `shots` samples. `n_err`
/// defaults to the Poisson value `sqrt(N_exact)`.
pub fn shot_error_model(p_exact: f64, sigma0: f64, shots: u64, n_err: Option<f64>) -> Result<ShotBand> {
    if !(p_exact > 0.0) {
        return Err(Error::UndefinedBand);
    }
    if !(sigma0 > 0.0) || shots == 0 {
        return Err(Error::Domain("error band needs sigma0 > 0 and at least one shot".into()));
    }
    let n_exact = shots as f64 * (p_exact / sigma0).powi(2);
    let n_err = n_err.unwrap_or_else(|| n_exact.sqrt());
    let ratio = n_err / n_exact;
    Ok(ShotBand {
        n_exact,
        n_err,
        lower: p_exact * (1.0 - ratio).max(0.0).sqrt(),
        upper: p_exact * (1.0 + ratio).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Gate;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn hadamard_on_zero() {
        let mut circ = Circuit::new(1);
        circ.push(Gate::H(0)).unwrap();
        let s = RegisterState::zero(1).apply(&circ).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.amplitudes()[0] - c(h, 0.0)).norm() < 1e-15);
        assert!((s.amplitudes()[1] - c(h, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn basis_state_sampling() {
        let mut amps = vec![c(0.0, 0.0); 4];
        amps[1] = c(1.0, 0.0);
        let s = RegisterState::from_amplitudes(amps).unwrap();
        let counts = sample_counts(&s, 1000, 7).unwrap();
        assert_eq!(counts.counts.len(), 1);
        assert_eq!(counts.counts["01"], 1000);
        assert!(matches!(sample_counts(&s, 0, 7), Err(Error::ZeroShots)));
    }

    #[test]
    fn uniform_sampling_statistics() {
        let s = RegisterState::from_amplitudes(vec![c(0.5, 0.0); 4]).unwrap();
        let n = 4_000_000u64;
        let counts = sample_counts(&s, n, 1).unwrap();
        let sd = (0.25f64 * 0.75 / n as f64).sqrt();
        for i in 0..4 {
            let f = counts.get(i) as f64 / n as f64;
            assert!((f - 0.25).abs() < 5.0 * sd, "outcome {i}: {f}");
        }
    }

    #[test]
    fn population_readout_examples() {
        let mut map = BTreeMap::new();
        map.insert("001".to_string(), 100u64);
        let all = ShotCounts {
            n_qubits: 3,
            shots: 100,
            seed: 0,
            counts: map,
        };
        assert_eq!(populations_from_counts(&all, 1.0, 4).unwrap(), vec![0.0, 1.0, 0.0, 0.0]);
        let mut map = BTreeMap::new();
        map.insert("000".to_string(), 25u64);
        map.insert("100".to_string(), 75u64);
        let quarter = ShotCounts {
            n_qubits: 3,
            shots: 100,
            seed: 0,
            counts: map,
        };
        assert_eq!(populations_from_counts(&quarter, 1.0, 4).unwrap()[0], 0.5);
        let empty = ShotCounts {
            n_qubits: 3,
            shots: 0,
            seed: 0,
            counts: BTreeMap::new(),
        };
        assert!(populations_from_counts(&empty, 1.0, 4).is_err());
    }

    #[test]
    fn error_band_examples() {
        let b = shot_error_model(0.3, 1.0, 20000, Some(0.0)).unwrap();
        assert_eq!((b.lower, b.upper), (0.3, 0.3));
        let b = shot_error_model(0.1, 1.0, 20000, None).unwrap();
        assert_relative_eq!(b.n_exact, 200.0, max_relative = 1e-12);
        assert_relative_eq!(b.lower, 0.0963, epsilon = 1e-4);
        assert_relative_eq!(b.upper, 0.1034, epsilon = 1e-4);
        assert!(matches!(shot_error_model(0.0, 1.0, 100, None), Err(Error::UndefinedBand)));
        let wide = |p: f64| {
            let b = shot_error_model(p, 1.0, 20000, Some(10.0)).unwrap();
            (b.upper - b.lower) / p
        };
        assert!(wide(0.05) > wide(0.1) && wide(0.1) > wide(0.5));
    }

    #[test]
    fn counts_json_roundtrip() {
        let s = RegisterState::from_amplitudes(vec![c(0.5, 0.0); 4]).unwrap();
        let counts = sample_counts(&s, 500, 9).unwrap();
        let back = ShotCounts::from_json(&counts.to_json(), 9).unwrap();
        assert_eq!(back, counts);
    }

    #[test]
    fn mismatched_circuit_rejected() {
        assert!(RegisterState::zero(2).apply(&Circuit::new(3)).is_err());
    }

    proptest! {
        #[test]
        fn seeded_replay_is_identical(seed in any::<u64>(), shots in 1u64..5000) {
            let s = RegisterState::from_amplitudes(vec![c(0.6, 0.0), c(0.0, 0.48), c(0.64, 0.0), c(0.0, 0.0)]).unwrap();
            prop_assert_eq!(sample_counts(&s, shots, seed).unwrap(), sample_counts(&s, shots, seed).unwrap());
            prop_assert_eq!(sample_counts(&s, shots, seed).unwrap().counts.values().sum::<u64>(), shots);
        }

        #[test]
        fn norm_is_preserved(ops in prop::collection::vec((0usize..4, 0usize..3, 0usize..3, -3.0f64..3.0), 100)) {
            let mut circ = Circuit::new(3);
            for (kind, a, b, t) in ops {
                let g = match kind {
                    0 => Gate::H(a),
                    1 => Gate::X(a),
                    2 => Gate::Rz(a, t),
                    _ if a != b => Gate::Cx { control: a, target: b },
                    _ => Gate::GlobalPhase(t),
                };
                circ.push(g).unwrap();
            }
            let s = RegisterState::zero(3).apply(&circ).unwrap();
            prop_assert!((s.norm() - 1.0).abs() < 1e-12);
        }
    }
}
