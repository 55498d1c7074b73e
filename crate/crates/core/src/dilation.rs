//! SVD dilation of a non-unitary propagator into a two-term linear
//! combination of unitaries, the one-ancilla circuit that implements it,
//! and basis-gate compilation of its dense one- and two-qubit blocks.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::circuit::{h_matrix, rz_matrix, Circuit, Gate};
use crate::linalg::{c, kron, pauli_x, pauli_y, pauli_z, unitarity_deviation, CMatrix};
use crate::walsh;
use crate::{Error, Result, C64};

/// Largest deviation from unitarity accepted by the compilers.
pub const UNITARITY_TOLERANCE: f64 = 1e-10;
/// Interaction coefficients below this are treated as zero when counting
/// the CNOTs a two-qubit block needs.
pub const INTERACTION_TOLERANCE: f64 = 1e-10;

/// `G = U diag(sigma) V^dagger = (sigma0/2) (U Sigma+ V^dagger + U Sigma- V^dagger)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdLcu {
    pub u: CMatrix,
    pub v: CMatrix,
    /// Descending singular values.
    pub sigma: Vec<f64>,
    pub sigma0: f64,
    pub sigma_plus: Vec<C64>,
    pub sigma_minus: Vec<C64>,
}

impl SvdLcu {
    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    /// `sigma / sigma0`, each in `[0, 1]`.
    pub fn sigma_tilde(&self) -> Vec<f64> {
        self.sigma.iter().map(|s| (s / self.sigma0).min(1.0)).collect()
    }

    pub fn v_dagger(&self) -> CMatrix {
        self.v.adjoint()
    }

    /// `(sigma0/2) U (Sigma+ + Sigma-) V^dagger`.
    pub fn reconstruct(&self) -> CMatrix {
        let mid: Vec<C64> = self
            .sigma_plus
            .iter()
            .zip(&self.sigma_minus)
            .map(|(p, m)| (p + m) * (self.sigma0 / 2.0))
            .collect();
        let d = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(mid));
        &self.u * d * self.v.adjoint()
    }
}

/// SVD with a fixed gauge: singular values descending, and each pair
/// `(u_j, v_j)` rephased so the first non-negligible entry of `u_j` is real
/// and positive.
pub fn svd_lcu(g: &CMatrix) -> Result<SvdLcu> {
    if !g.is_square() || g.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return Err(Error::Domain("propagator must be a finite square matrix".into()));
    }
    let n = g.nrows();
    let svd = g.clone().svd(true, true);
    let u0 = svd.u.expect("requested U");
    let v0 = svd.v_t.expect("requested V^T").adjoint();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let sigma0 = sigma[0];
    if !(sigma0 > 0.0) {
        return Err(Error::ZeroMatrix);
    }
    let mut u = CMatrix::zeros(n, n);
    let mut v = CMatrix::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        let mut uj = u0.column(i).into_owned();
        let mut vj = v0.column(i).into_owned();
        if let Some(first) = uj.iter().find(|x| x.norm() > 1e-12).copied() {
            let ph = C64::from_polar(1.0, -first.arg());
            uj *= ph;
            vj *= ph;
        }
        u.set_column(j, &uj);
        v.set_column(j, &vj);
    }
    let tilde: Vec<f64> = sigma.iter().map(|s| (s / sigma0).min(1.0)).collect();
    let sigma_plus = tilde.iter().map(|&s| c(s, (1.0 - s * s).max(0.0).sqrt())).collect();
    let sigma_minus = tilde.iter().map(|&s| c(s, -(1.0 - s * s).max(0.0).sqrt())).collect();
    Ok(SvdLcu {
        u,
        v,
        sigma,
        sigma0,
        sigma_plus,
        sigma_minus,
    })
}

/// One-ancilla dilation circuit on `n + 1` qubits, the ancilla being qubit
/// `n` (most significant): `V^dagger` on the main register, `H` on the
/// ancilla, the `Sigma+ (+) Sigma-` block, `U` on the main register, `H` on
/// the ancilla. The ancilla-0 block of the output is `G phi / sigma0`.
pub fn build_dilated_circuit(lcu: &SvdLcu, usigma_gates: &[Gate]) -> Result<Circuit> {
    let dim = lcu.dim();
    if !dim.is_power_of_two() {
        return Err(Error::RegisterMismatch(format!("register dimension {dim} is not a power of two")));
    }
    let n = dim.trailing_zeros() as usize;
    let main: Vec<usize> = (0..n).collect();
    let mut circ = Circuit::new(n + 1);
    circ.push(Gate::Dense {
        qubits: main.clone(),
        matrix: lcu.v_dagger(),
    })?;
    circ.push(Gate::H(n))?;
    for g in usigma_gates {
        circ.push(g.clone())
            .map_err(|e| Error::RegisterMismatch(format!("diagonal block does not fit the register: {e}")))?;
    }
    circ.push(Gate::Dense {
        qubits: main,
        matrix: lcu.u.clone(),
    })?;
    circ.push(Gate::H(n))?;
    Ok(circ)
}

/// SVD, Walsh synthesis and circuit assembly in one call.
pub fn dilate(g: &CMatrix) -> Result<(SvdLcu, Circuit)> {
    let lcu = svd_lcu(g)?;
    let gates = walsh::sigma_block_gates(&lcu.sigma_tilde())?;
    let circ = build_dilated_circuit(&lcu, &gates)?;
    Ok((lcu, circ))
}

/// Replaces every dense gate by `H`/`RZ`/`CX`/global-phase gates.
/// Only one- and two-qubit dense gates are supported.
pub fn compile(circ: &Circuit) -> Result<Circuit> {
    let mut out = Circuit::new(circ.n_qubits());
    let mut phase = 0.0;
    for g in circ.gates() {
        let gates = match g {
            Gate::Dense { qubits, matrix } => match qubits.len() {
                0 => vec![Gate::GlobalPhase(matrix[(0, 0)].arg())],
                1 => decompose_1q(matrix, qubits[0])?,
                2 => decompose_2q(matrix, [qubits[0], qubits[1]])?,
                k => return Err(Error::RegisterMismatch(format!("cannot compile a dense gate on {k} qubits"))),
            },
            other => vec![other.clone()],
        };
        for g in gates {
            match g {
                Gate::GlobalPhase(p) => phase += p,
                other => out.push(other)?,
            }
        }
    }
    let phase = wrap_phase(phase);
    if phase != 0.0 {
        out.push(Gate::GlobalPhase(phase))?;
    }
    Ok(out)
}

fn wrap_phase(p: f64) -> f64 {
    let w = p.rem_euclid(2.0 * std::f64::consts::PI);
    if w > std::f64::consts::PI {
        w - 2.0 * std::f64::consts::PI
    } else {
        w
    }
}

fn check_unitary(m: &CMatrix, dim: usize) -> Result<()> {
    if m.shape() != (dim, dim) {
        return Err(Error::RegisterMismatch(format!("expected a {dim}x{dim} matrix")));
    }
    let deviation = unitarity_deviation(m);
    if !(deviation <= UNITARITY_TOLERANCE) {
        return Err(Error::NotUnitary { deviation });
    }
    Ok(())
}

/// ZYZ decomposition `M = e^{i phi} Rz(alpha) Ry(beta) Rz(gamma)` emitted as
/// `Rz(gamma - pi/2) H Rz(beta) H Rz(alpha + pi/2)` plus a global phase.
/// Exact including the phase.
pub fn decompose_1q(m: &CMatrix, qubit: usize) -> Result<Vec<Gate>> {
    check_unitary(m, 2)?;
    Ok(zyz_gates(m, qubit))
}

fn zyz_gates(m: &CMatrix, qubit: usize) -> Vec<Gate> {
    const EPS: f64 = 1e-14;
    let mut gates = Vec::new();
    let push_rz = |gates: &mut Vec<Gate>, theta: f64| {
        let t = wrap_phase(theta);
        if t.abs() > EPS {
            gates.push(Gate::Rz(qubit, t));
        }
    };
    if m[(1, 0)].norm() < EPS {
        // diagonal: one rotation and a phase
        let (p0, p1) = (m[(0, 0)].arg(), m[(1, 1)].arg());
        push_rz(&mut gates, p1 - p0);
    } else {
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let phi = det.arg() / 2.0;
        let w = m * C64::from_polar(1.0, -phi);
        let beta = 2.0 * w[(1, 0)].norm().atan2(w[(0, 0)].norm());
        let sum = if w[(1, 1)].norm() > EPS { 2.0 * w[(1, 1)].arg() } else { 0.0 };
        let diff = 2.0 * w[(1, 0)].arg();
        let (alpha, gamma) = ((sum + diff) / 2.0, (sum - diff) / 2.0);
        push_rz(&mut gates, gamma - FRAC_PI_2);
        gates.push(Gate::H(qubit));
        push_rz(&mut gates, beta);
        gates.push(Gate::H(qubit));
        push_rz(&mut gates, alpha + FRAC_PI_2);
    }
    // global phase measured against the emitted gates, so angle wrapping
    // cannot lose a sign
    let mut circ_m = CMatrix::identity(2, 2);
    for g in &gates {
        let gm = match g {
            Gate::Rz(_, t) => rz_matrix(*t),
            Gate::H(_) => h_matrix(),
            _ => unreachable!(),
        };
        circ_m = gm * circ_m;
    }
    let (i, j) = if m[(0, 0)].norm() >= m[(1, 0)].norm() { (0, 0) } else { (1, 0) };
    let exact = wrap_phase((m[(i, j)] / circ_m[(i, j)]).arg());
    if exact.abs() > EPS {
        gates.push(Gate::GlobalPhase(exact));
    }
    gates
}

/// Canonical interaction `exp(i (a XX + b YY + c ZZ))`.
pub fn interaction(a: f64, b: f64, cc: f64) -> CMatrix {
    let h = kron(&pauli_x(), &pauli_x()) * c(a, 0.0) + kron(&pauli_y(), &pauli_y()) * c(b, 0.0) + kron(&pauli_z(), &pauli_z()) * c(cc, 0.0);
    let (vals, vecs) = crate::linalg::eigh(&h);
    let d = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(4, vals.iter().map(|&e| c(0.0, e).exp())));
    &vecs * d * vecs.adjoint()
}

fn magic_basis() -> CMatrix {
    let s = FRAC_1_SQRT_2;
    #[rustfmt::skip]
    let m = CMatrix::from_row_slice(4, 4, &[
        c(s, 0.0), c(0.0, s), c(0.0, 0.0), c(0.0, 0.0),
        c(0.0, 0.0), c(0.0, 0.0), c(0.0, s), c(s, 0.0),
        c(0.0, 0.0), c(0.0, 0.0), c(0.0, s), c(-s, 0.0),
        c(s, 0.0), c(0.0, -s), c(0.0, 0.0), c(0.0, 0.0),
    ]);
    m
}

/// `M = A (x) B` for a 4x4 tensor product (first factor on the high bit).
fn factor_kron(m: &CMatrix) -> (CMatrix, CMatrix) {
    let block = |a: usize, cc: usize| CMatrix::from_fn(2, 2, |b, d| m[(2 * a + b, 2 * cc + d)]);
    let (mut best, mut arg) = (-1.0, (0, 0));
    for a in 0..2 {
        for cc in 0..2 {
            let nrm = block(a, cc).norm();
            if nrm > best {
                best = nrm;
                arg = (a, cc);
            }
        }
    }
    let blk = block(arg.0, arg.1);
    let det = blk[(0, 0)] * blk[(1, 1)] - blk[(0, 1)] * blk[(1, 0)];
    let b = blk / det.sqrt();
    let a = CMatrix::from_fn(2, 2, |i, j| (b.adjoint() * block(i, j)).trace() / 2.0);
    (a, b)
}

/// Two-qubit circuit in progress: `e^{i phase} (a1 (x) b1) N(k) (a2 (x) b2)`.
struct Kak {
    phase: f64,
    a1: CMatrix,
    b1: CMatrix,
    k: [f64; 3],
    a2: CMatrix,
    b2: CMatrix,
}

impl Kak {
    /// `N(k) = N(k') P` with `P = i^s sigma (x) sigma`, `k'_i = k_i - s pi/2`.
    fn shift(&mut self, i: usize, s: f64) {
        let p = [pauli_x(), pauli_y(), pauli_z()][i].clone();
        self.k[i] -= s * FRAC_PI_2;
        self.phase += s * FRAC_PI_2;
        self.a2 = &p * &self.a2;
        self.b2 = &p * &self.b2;
    }

    /// `N(k) = (C^dag (x) C^dag) N(k') (C (x) C)` for a local Clifford `C`
    /// that permutes two interaction terms.
    fn conjugate(&mut self, cl: &CMatrix, swap: (usize, usize)) {
        self.k.swap(swap.0, swap.1);
        let cd = cl.adjoint();
        self.a1 = &self.a1 * &cd;
        self.b1 = &self.b1 * &cd;
        self.a2 = cl * &self.a2;
        self.b2 = cl * &self.b2;
    }

    /// `N(k) = (P (x) I) N(k') (P (x) I)` flipping the signs of two terms.
    fn flip(&mut self, p: &CMatrix, pair: (usize, usize)) {
        self.k[pair.0] = -self.k[pair.0];
        self.k[pair.1] = -self.k[pair.1];
        self.a1 = &self.a1 * p;
        self.a2 = p * &self.a2;
    }
}

fn sqrt_x() -> CMatrix {
    // Rx(pi/2) = (I - iX)/sqrt2 maps Y -> Z and Z -> -Y
    (CMatrix::identity(2, 2) - pauli_x() * c(0.0, 1.0)) * c(FRAC_1_SQRT_2, 0.0)
}

fn s_gate() -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0)]))
}

fn kak(m: &CMatrix) -> Kak {
    let det = m.determinant();
    let g0 = det.arg() / 4.0;
    let su = m * C64::from_polar(1.0, -g0);
    let bm = magic_basis();
    let up = bm.adjoint() * &su * &bm;
    let m2 = up.transpose() * &up;
    let m2 = (&m2 + m2.transpose()) * c(0.5, 0.0);
    let re = DMatrix::from_fn(4, 4, |i, j| m2[(i, j)].re);
    let im = DMatrix::from_fn(4, 4, |i, j| m2[(i, j)].im);
    let mut p = DMatrix::<f64>::identity(4, 4);
    let mut best = f64::INFINITY;
    for x in [0.5497, 1.3372, -0.8137, 2.7519, 0.1234, 5.0] {
        let eig = SymmetricEigen::new(&re + &im * x);
        let pc = eig.eigenvectors.map(|v| c(v, 0.0));
        let dm = pc.transpose() * &m2 * &pc;
        let off = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| dm[(i, j)].norm())
            .fold(0.0, f64::max);
        if off < best {
            best = off;
            p = eig.eigenvectors.clone();
        }
        if off < 1e-12 {
            break;
        }
    }
    if p.determinant() < 0.0 {
        p.column_mut(0).neg_mut();
    }
    let pc = p.map(|v| c(v, 0.0));
    let dm = pc.transpose() * &m2 * &pc;
    let mut theta: Vec<f64> = (0..4).map(|i| dm[(i, i)].arg() / 2.0).collect();
    let k1_of = |theta: &[f64]| {
        let dinv = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            4,
            theta.iter().map(|&t| C64::from_polar(1.0, -t)),
        ));
        &up * &pc * dinv
    };
    let mut k1 = k1_of(&theta);
    if k1.determinant().re < 0.0 {
        theta[0] += std::f64::consts::PI;
        k1 = k1_of(&theta);
    }
    let k2 = pc.transpose();
    let l1 = &bm * k1 * bm.adjoint();
    let l2 = &bm * k2 * bm.adjoint();
    let diag_of = |pm: CMatrix| {
        let d = bm.adjoint() * kron(&pm, &pm) * &bm;
        [d[(0, 0)].re, d[(1, 1)].re, d[(2, 2)].re, d[(3, 3)].re]
    };
    let (dx, dy, dz) = (diag_of(pauli_x()), diag_of(pauli_y()), diag_of(pauli_z()));
    let proj = |d: [f64; 4]| (0..4).map(|i| theta[i] * d[i]).sum::<f64>() / 4.0;
    let g = theta.iter().sum::<f64>() / 4.0;
    let (a1, b1) = factor_kron(&l1);
    let (a2, b2) = factor_kron(&l2);
    Kak {
        phase: g0 + g,
        a1,
        b1,
        k: [proj(dx), proj(dy), proj(dz)],
        a2,
        b2,
    }
}

enum Segment {
    Local(CMatrix, CMatrix),
    /// CNOT with control on the high (`true`) or low qubit.
    Cx(bool),
}

/// At most three CNOTs, exact including the global phase. `qubits` follows
/// the dense-gate convention: `qubits[0]` is the low bit of the matrix index.
pub fn decompose_2q(m: &CMatrix, qubits: [usize; 2]) -> Result<Vec<Gate>> {
    check_unitary(m, 4)?;
    let mut k = kak(m);
    for i in 0..3 {
        while k.k[i] > FRAC_PI_4 {
            k.shift(i, 1.0);
        }
        while k.k[i] <= -FRAC_PI_4 {
            k.shift(i, -1.0);
        }
    }
    let (sx, s) = (sqrt_x(), s_gate());
    let by_abs = |k: &Kak, i: usize, j: usize| k.k[i].abs() < k.k[j].abs() - 1e-13;
    if by_abs(&k, 0, 1) {
        k.conjugate(&s, (0, 1));
    }
    if by_abs(&k, 1, 2) {
        k.conjugate(&sx, (1, 2));
    }
    if by_abs(&k, 0, 1) {
        k.conjugate(&s, (0, 1));
    }
    if k.k[0] < 0.0 {
        k.flip(&pauli_z(), (0, 1));
    }
    if k.k[1] < 0.0 {
        k.flip(&pauli_x(), (1, 2));
    }
    let [a, b, cc] = k.k;
    let zero = |x: f64| x.abs() < INTERACTION_TOLERANCE;
    let i2 = CMatrix::identity(2, 2);
    let h = h_matrix();
    let mut segs = Vec::new();
    let mut phase = k.phase;
    if zero(a) && zero(b) && zero(cc) {
        segs.push(Segment::Local(&k.a1 * &k.a2, &k.b1 * &k.b2));
    } else if (a - FRAC_PI_4).abs() < INTERACTION_TOLERANCE && zero(b) && zero(cc) {
        // exp(i pi/4 XX) = (H(x)H) e^{-i pi/4} CZ (Rz(-pi/2)(x)Rz(-pi/2)) (H(x)H)
        let r = rz_matrix(-FRAC_PI_2);
        phase -= FRAC_PI_4;
        segs.push(Segment::Local(&r * &h * &k.a2, &h * &r * &h * &k.b2));
        segs.push(Segment::Cx(true));
        segs.push(Segment::Local(&k.a1 * &h, k.b1.clone()));
    } else if zero(cc) {
        // N(a, b, 0) = (C^dag(x)C^dag) CX (e^{iaX} (x) e^{ibZ}) CX (C(x)C)
        let cd = sx.adjoint();
        let ex = &h * rz_matrix(-2.0 * a) * &h;
        let ez = rz_matrix(-2.0 * b);
        segs.push(Segment::Local(&sx * &k.a2, &sx * &k.b2));
        segs.push(Segment::Cx(true));
        segs.push(Segment::Local(ex, ez));
        segs.push(Segment::Cx(true));
        segs.push(Segment::Local(&k.a1 * &cd, &k.b1 * &cd));
    } else {
        let ry = |t: f64| {
            let (s_, c_) = (t / 2.0).sin_cos();
            crate::linalg::real_matrix(2, 2, &[c_, -s_, s_, c_])
        };
        let (t1, t2, t3) = (FRAC_PI_2 - 2.0 * cc, 2.0 * a - FRAC_PI_2, FRAC_PI_2 - 2.0 * b);
        let template = [
            Segment::Local(i2.clone(), rz_matrix(-FRAC_PI_2)),
            Segment::Cx(false),
            Segment::Local(rz_matrix(t1), ry(t2)),
            Segment::Cx(true),
            Segment::Local(i2.clone(), ry(t3)),
            Segment::Cx(false),
            Segment::Local(rz_matrix(FRAC_PI_2), i2.clone()),
        ];
        let t = segments_matrix(&template);
        let target = interaction(a, b, cc);
        let psi = (t.adjoint() * target).trace().arg();
        phase += psi;
        let mut it = template.into_iter();
        if let Some(Segment::Local(x, y)) = it.next() {
            segs.push(Segment::Local(x * &k.a2, y * &k.b2));
        }
        let mut rest: Vec<Segment> = it.collect();
        if let Some(Segment::Local(x, y)) = rest.pop() {
            segs.extend(rest);
            segs.push(Segment::Local(&k.a1 * x, &k.b1 * y));
        }
    }
    let [lo, hi] = qubits;
    let mut gates = Vec::new();
    for seg in segs {
        match seg {
            Segment::Local(a, b) => {
                for g in zyz_gates(&a, hi).into_iter().chain(zyz_gates(&b, lo)) {
                    match g {
                        Gate::GlobalPhase(p) => phase += p,
                        other => gates.push(other),
                    }
                }
            }
            Segment::Cx(true) => gates.push(Gate::Cx { control: hi, target: lo }),
            Segment::Cx(false) => gates.push(Gate::Cx { control: lo, target: hi }),
        }
    }
    let phase = wrap_phase(phase);
    if phase.abs() > 1e-14 {
        gates.push(Gate::GlobalPhase(phase));
    }
    Ok(gates)
}

/// Matrix of a segment list (first segment applied first), high bit first.
fn segments_matrix(segs: &[Segment]) -> CMatrix {
    let x = pauli_x();
    let p0 = crate::linalg::real_matrix(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let p1 = crate::linalg::real_matrix(2, 2, &[0.0, 0.0, 0.0, 1.0]);
    let i2 = CMatrix::identity(2, 2);
    let mut m = CMatrix::identity(4, 4);
    for s in segs {
        let g = match s {
            Segment::Local(a, b) => kron(a, b),
            Segment::Cx(true) => kron(&p0, &i2) + kron(&p1, &x),
            Segment::Cx(false) => kron(&i2, &p0) + kron(&x, &p1),
        };
        m = g * m;
    }
    m
}
