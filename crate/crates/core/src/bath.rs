//! Debye spectral densities and the exponential expansion of the bath
//! correlation function.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::{Error, Result, C64};

/// Relative distance below which a Matsubara frequency is treated as
/// resonant with the Debye cutoff.
pub const RESONANCE_TOLERANCE: f64 = 1e-10;

/// Debye spectral density `J(w) = eta * w * wc / (w^2 + wc^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    pub eta: f64,
    pub omega_c: f64,
}

impl SpectralDensity {
    pub fn debye(eta: f64, omega_c: f64) -> Result<Self> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::Domain(format!("coupling strength must be >= 0, got {eta}")));
        }
        if !(omega_c > 0.0) || !omega_c.is_finite() {
            return Err(Error::Domain(format!("cutoff frequency must be > 0, got {omega_c}")));
        }
        Ok(Self { eta, omega_c })
    }

    pub fn eval(&self, omega: f64) -> f64 {
        self.eta * omega * self.omega_c / (omega * omega + self.omega_c * self.omega_c)
    }

    /// Reorganization energy `(1/pi) ∫ J(w)/w dw = eta / 2`.
    pub fn reorganization_energy(&self) -> f64 {
        0.5 * self.eta
    }

    /// Exact Fourier transform of the correlation function,
    /// `2 J(w) (n(w) + 1)` continued to negative `w` by oddness of `J`.
    /// Used as an independent reference for finite-K damping rates.
    pub fn thermal_rate(&self, beta: f64, omega: f64) -> f64 {
        if omega.abs() < 1e-300 {
            return 2.0 * self.eta / (beta * self.omega_c);
        }
        // 2 J(w) / (1 - exp(-beta w)), valid for both signs of w.
        2.0 * self.eval(omega) / (-(-beta * omega).exp_m1())
    }
}

/// One term `d e^{-v t}` of the correlation-function expansion together
/// with the filtering scale `r` used to rescale the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathMode {
    pub d: C64,
    pub v: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathDecomposition {
    pub density: SpectralDensity,
    pub beta: f64,
    pub modes: Vec<BathMode>,
}

impl BathDecomposition {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// `C(t) = Σ_k d_k e^{-v_k t}` with `t` in inverse energy units.
    pub fn correlation(&self, t: f64) -> C64 {
        self.modes.iter().map(|m| m.d * (-m.v * t).exp()).sum()
    }
}

/// Closed-form exponential expansion of the Debye correlation function with
/// `k_terms` terms: the Debye pole plus `k_terms - 1` Matsubara terms.
///
/// The filtering scale is `r_k = |d_k|`; an exactly uncoupled mode
/// (`eta = 0`) keeps `r_k = 1` so the rescaled ladder stays finite.
pub fn debye_decompose(density: &SpectralDensity, beta: f64, k_terms: usize) -> Result<BathDecomposition> {
    if k_terms == 0 {
        return Err(Error::Domain("number of expansion terms must be >= 1".into()));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Domain(format!("inverse temperature must be > 0, got {beta}")));
    }
    let SpectralDensity { eta, omega_c } = *density;
    if !(omega_c > 0.0) {
        return Err(Error::Domain(format!("cutoff frequency must be > 0, got {omega_c}")));
    }
    let mut modes = Vec::with_capacity(k_terms);
    let half = 0.5 * beta * omega_c;
    let d1 = C64::new(eta * omega_c / 2.0 / half.tan(), -eta * omega_c / 2.0);
    modes.push(mode(d1, omega_c));
    for k in 2..=k_terms {
        let v = 2.0 * PI * (k - 1) as f64 / beta;
        if (v - omega_c).abs() < RESONANCE_TOLERANCE * omega_c {
            return Err(Error::MatsubaraResonance { k, v, omega_c });
        }
        let d = 2.0 / beta * eta * v * omega_c / (v * v - omega_c * omega_c);
        modes.push(mode(C64::new(d, 0.0), v));
    }
    Ok(BathDecomposition {
        density: *density,
        beta,
        modes,
    })
}

fn mode(d: C64, v: f64) -> BathMode {
    let r = if d.norm() > 0.0 { d.norm() } else { 1.0 };
    BathMode { d, v, r }
}

/// `Σ_k d_k e^{-v_k t}`.
pub fn correlation_closed_form(dec: &BathDecomposition, t: f64) -> C64 {
    dec.correlation(t)
}

/// Reference evaluation of
/// `C(t) = (1/pi) ∫_0^∞ J(w) [coth(beta w / 2) cos(w t) - i sin(w t)] dw`
/// by adaptive Gauss-Kronrod quadrature.
///
/// The integral runs up to `200 * max(omega_c, 1/beta)`, where `coth` equals
/// 1 to double precision. The remaining tail `∫ J(w) e^{-i w t}` is added
/// with a three-term integration-by-parts expansion. The absolute error
/// target is `1e-8 * (eta/beta + eta*omega_c)`, which is 1e-8 relative to
/// the natural magnitude of `C`.
pub fn correlation_quadrature(density: &SpectralDensity, beta: f64, t: f64) -> Result<C64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("quadrature oracle needs t > 0, got {t}")));
    }
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("inverse temperature must be > 0, got {beta}")));
    }
    let SpectralDensity { eta, omega_c } = *density;
    if eta == 0.0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let upper = 200.0 * omega_c.max(1.0 / beta);
    let scale = eta / beta + eta * omega_c;
    let tol = 1e-8 * scale;

    let integrand = |w: f64| -> C64 {
        let j = density.eval(w);
        let coth = 1.0 / (0.5 * beta * w).tanh();
        C64::new(j * coth * (w * t).cos(), -j * (w * t).sin())
    };

    let panel = (PI / t).min(upper / 16.0).min(omega_c.min(1.0 / beta));
    let n_panels = (upper / panel).ceil() as usize;
    let width = upper / n_panels as f64;
    let per_panel_tol = tol / n_panels as f64;
    let mut total = C64::new(0.0, 0.0);
    let mut err = 0.0;
    for i in 0..n_panels {
        let a = i as f64 * width;
        let (val, e) = adaptive_gk(&integrand, a, a + width, per_panel_tol.max(1e-300), 40);
        total += val;
        err += e;
    }

    // Tail beyond `upper`: coth = 1, integrand J(w) e^{-iwt}.
    let w2 = omega_c * omega_c;
    let denom = upper * upper + w2;
    let j0 = eta * omega_c * upper / denom;
    let j1 = eta * omega_c * (w2 - upper * upper) / (denom * denom);
    let j2 = eta * omega_c * 2.0 * upper * (upper * upper - 3.0 * w2) / (denom * denom * denom);
    let it = C64::new(0.0, t);
    let tail = C64::from_polar(1.0, -upper * t) * (j0 / it + j1 / (it * it) + j2 / (it * it * it));
    total += tail;

    if err > tol {
        return Err(Error::Quadrature {
            achieved: err / PI,
            requested: tol / PI,
        });
    }
    Ok(total / PI)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS_K: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
// Gauss weights for the odd-indexed Kronrod nodes (7-point rule).
const GK_WEIGHTS_G: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * GK_WEIGHTS_K[7];
    let mut gauss = fc * GK_WEIGHTS_G[3];
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let s = f(c - x) + f(c + x);
        kron += s * GK_WEIGHTS_K[i];
        if i % 2 == 1 {
            gauss += s * GK_WEIGHTS_G[i / 2];
        }
    }
    ((kron * h), ((kron - gauss) * h).norm())
}

fn adaptive_gk<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> (C64, f64) {
    let (val, err) = gk15(f, a, b);
    if err <= tol || depth == 0 {
        return (val, err);
    }
    let m = 0.5 * (a + b);
    let (l, el) = adaptive_gk(f, a, m, 0.5 * tol, depth - 1);
    let (r, er) = adaptive_gk(f, m, b, 0.5 * tol, depth - 1);
    (l + r, el + er)
}
