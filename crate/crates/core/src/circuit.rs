//! Gate lists on `n` qubits, their dense reconstruction, statistics and
//! OpenQASM 2.0 export.
//!
//! Qubit 0 is the least significant bit of a basis-state index. A dense
//! gate on `qubits = [a, b, ...]` maps `qubits[i]` to bit `i` of its matrix
//! index.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::linalg::{c, CMatrix};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    H(usize),
    X(usize),
    /// `diag(e^{-i theta/2}, e^{i theta/2})`.
    Rz(usize, f64),
    Cx {
        control: usize,
        target: usize,
    },
    Dense {
        qubits: Vec<usize>,
        matrix: CMatrix,
    },
    GlobalPhase(f64),
}

impl Gate {
    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Gate::H(q) | Gate::X(q) | Gate::Rz(q, _) => vec![*q],
            Gate::Cx { control, target } => vec![*control, *target],
            Gate::Dense { qubits, .. } => qubits.clone(),
            Gate::GlobalPhase(_) => vec![],
        }
    }

    /// Same gate with every qubit index passed through `map`.
    pub fn remap(&self, map: impl Fn(usize) -> usize) -> Gate {
        match self {
            Gate::H(q) => Gate::H(map(*q)),
            Gate::X(q) => Gate::X(map(*q)),
            Gate::Rz(q, t) => Gate::Rz(map(*q), *t),
            Gate::Cx { control, target } => Gate::Cx {
                control: map(*control),
                target: map(*target),
            },
            Gate::Dense { qubits, matrix } => Gate::Dense {
                qubits: qubits.iter().map(|&q| map(q)).collect(),
                matrix: matrix.clone(),
            },
            Gate::GlobalPhase(p) => Gate::GlobalPhase(*p),
        }
    }
}

pub fn rz_matrix(theta: f64) -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        C64::from_polar(1.0, -theta / 2.0),
        C64::from_polar(1.0, theta / 2.0),
    ]))
}

pub fn h_matrix() -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    crate::linalg::real_matrix(2, 2, &[s, s, s, -s])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CircuitStats {
    pub n_qubits: usize,
    pub depth: usize,
    pub two_qubit_count: usize,
    pub rotation_count: usize,
    pub single_qubit_count: usize,
    pub dense_count: usize,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Circuit {
            n_qubits,
            gates: Vec::new(),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn into_gates(self) -> Vec<Gate> {
        self.gates
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        let qs = gate.qubits();
        for (i, &q) in qs.iter().enumerate() {
            if q >= self.n_qubits {
                return Err(Error::QubitIndex {
                    index: q,
                    n_qubits: self.n_qubits,
                });
            }
            if qs[..i].contains(&q) {
                return Err(Error::RegisterMismatch(format!("gate addresses qubit {q} twice")));
            }
        }
        if let Gate::Dense { qubits, matrix } = &gate {
            let d = 1usize << qubits.len();
            if matrix.shape() != (d, d) {
                return Err(Error::RegisterMismatch(format!(
                    "dense gate on {} qubits needs a {d}x{d} matrix",
                    qubits.len()
                )));
            }
        }
        self.gates.push(gate);
        Ok(())
    }

    pub fn extend<I: IntoIterator<Item = Gate>>(&mut self, gates: I) -> Result<()> {
        for g in gates {
            self.push(g)?;
        }
        Ok(())
    }

    /// Total global phase carried by `GlobalPhase` gates.
    pub fn global_phase(&self) -> f64 {
        self.gates.iter().map(|g| if let Gate::GlobalPhase(p) = g { *p } else { 0.0 }).sum()
    }

    /// The `2^n x 2^n` matrix of the whole gate list.
    pub fn unitary(&self) -> CMatrix {
        let d = 1usize << self.n_qubits;
        let mut m = CMatrix::zeros(d, d);
        let mut col = vec![c(0.0, 0.0); d];
        for j in 0..d {
            col.iter_mut().for_each(|x| *x = c(0.0, 0.0));
            col[j] = c(1.0, 0.0);
            for g in &self.gates {
                apply_gate(&mut col, g);
            }
            for i in 0..d {
                m[(i, j)] = col[i];
            }
        }
        m
    }

    /// Depth is the longest chain over qubit timelines (global phases do
    /// not count); the two-qubit count is the number of CNOTs.
    pub fn stats(&self) -> CircuitStats {
        let mut level = vec![0usize; self.n_qubits];
        let mut s = CircuitStats {
            n_qubits: self.n_qubits,
            ..Default::default()
        };
        for g in &self.gates {
            match g {
                Gate::GlobalPhase(_) => continue,
                Gate::Cx { .. } => s.two_qubit_count += 1,
                Gate::Rz(..) => {
                    s.rotation_count += 1;
                    s.single_qubit_count += 1;
                }
                Gate::H(_) | Gate::X(_) => s.single_qubit_count += 1,
                Gate::Dense { .. } => s.dense_count += 1,
            }
            let qs = g.qubits();
            let next = qs.iter().map(|&q| level[q]).max().unwrap_or(0) + 1;
            for q in qs {
                level[q] = next;
            }
        }
        s.depth = level.into_iter().max().unwrap_or(0);
        s
    }

    /// OpenQASM 2.0 text. Dense gates must be compiled away first; the
    /// global phase is written as a comment.
    pub fn to_qasm(&self) -> Result<String> {
        let n = self.n_qubits;
        let mut out = String::from("OPENQASM 2.0;\ninclude \"qelib1.inc\";\n");
        let _ = writeln!(out, "qreg q[{n}];\ncreg c[{n}];");
        let phase = self.global_phase();
        if phase != 0.0 {
            let _ = writeln!(out, "// global phase: {phase:.17e}");
        }
        for g in &self.gates {
            match g {
                Gate::H(q) => writeln!(out, "h q[{q}];"),
                Gate::X(q) => writeln!(out, "x q[{q}];"),
                Gate::Rz(q, t) => writeln!(out, "rz({t:.17e}) q[{q}];"),
                Gate::Cx { control, target } => writeln!(out, "cx q[{control}],q[{target}];"),
                Gate::GlobalPhase(_) => Ok(()),
                Gate::Dense { .. } => return Err(Error::RegisterMismatch("dense gates must be compiled before export".into())),
            }
            .expect("writing to a String cannot fail");
        }
        let _ = writeln!(out, "measure q -> c;");
        Ok(out)
    }
}

/// Applies one gate in place to a state vector of length `2^n`.
pub fn apply_gate(state: &mut [C64], gate: &Gate) {
    match gate {
        Gate::H(q) => apply_1q(state, *q, &h_matrix()),
        Gate::X(q) => {
            let b = 1usize << q;
            for i in 0..state.len() {
                if i & b == 0 {
                    state.swap(i, i | b);
                }
            }
        }
        Gate::Rz(q, t) => {
            let (lo, hi) = (C64::from_polar(1.0, -t / 2.0), C64::from_polar(1.0, t / 2.0));
            let b = 1usize << q;
            for (i, a) in state.iter_mut().enumerate() {
                *a *= if i & b == 0 { lo } else { hi };
            }
        }
        Gate::Cx { control, target } => {
            let (cb, tb) = (1usize << control, 1usize << target);
            for i in 0..state.len() {
                if i & cb != 0 && i & tb == 0 {
                    state.swap(i, i | tb);
                }
            }
        }
        Gate::Dense { qubits, matrix } => apply_dense(state, qubits, matrix),
        Gate::GlobalPhase(p) => {
            let f = C64::from_polar(1.0, *p);
            state.iter_mut().for_each(|a| *a *= f);
        }
    }
}

fn apply_1q(state: &mut [C64], q: usize, m: &CMatrix) {
    let b = 1usize << q;
    for i in 0..state.len() {
        if i & b == 0 {
            let (a0, a1) = (state[i], state[i | b]);
            state[i] = m[(0, 0)] * a0 + m[(0, 1)] * a1;
            state[i | b] = m[(1, 0)] * a0 + m[(1, 1)] * a1;
        }
    }
}

fn apply_dense(state: &mut [C64], qubits: &[usize], m: &CMatrix) {
    let k = qubits.len();
    let d = 1usize << k;
    let mask: usize = qubits.iter().map(|&q| 1usize << q).sum();
    let offsets: Vec<usize> = (0..d)
        .map(|s| (0..k).filter(|&i| s >> i & 1 == 1).map(|i| 1usize << qubits[i]).sum())
        .collect();
    let mut buf = vec![c(0.0, 0.0); d];
    for base in 0..state.len() {
        if base & mask != 0 {
            continue;
        }
        for (s, &o) in offsets.iter().enumerate() {
            buf[s] = state[base + o];
        }
        for (r, &o) in offsets.iter().enumerate() {
            let mut acc = c(0.0, 0.0);
            for (s, &b) in buf.iter().enumerate() {
                acc += m[(r, s)] * b;
            }
            state[base + o] = acc;
        }
    }
}
