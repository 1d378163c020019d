//! The interferometer itself.
//!
//! Each atom starts in `|g⟩`, takes over the state of its cavity through a
//! π-pulse swap (which puts a `−i` on the transferred excitation), picks up a
//! dispersive phase `e^{iΦ}` on `|e⟩`, and is rotated about X by the Ramsey
//! pulse area `2θ`. Cavity qubit `|0⟩/|1⟩` maps onto atomic `|g⟩/|e⟩`.

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::{ComplexAmplitude, SingleExcitationState, TwoQubitState};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const NEG_I: Complex64 = Complex64::new(0.0, -1.0);

/// Apparatus setting in radians. `theta*` is half the Ramsey pulse area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolAngles {
    pub theta1: f64,
    pub theta2: f64,
    pub phi1: f64,
    pub phi2: f64,
}

impl ProtocolAngles {
    pub const ZERO: Self = Self {
        theta1: 0.0,
        theta2: 0.0,
        phi1: 0.0,
        phi2: 0.0,
    };

    pub fn new(theta1: f64, theta2: f64, phi1: f64, phi2: f64) -> Self {
        Self {
            theta1,
            theta2,
            phi1,
            phi2,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.theta1, self.theta2, self.phi1, self.phi2]
    }

    pub fn from_array([theta1, theta2, phi1, phi2]: [f64; 4]) -> Self {
        Self::new(theta1, theta2, phi1, phi2)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    /// Reduces to `θ ∈ [0, π)`, `Φ ∈ [0, 2π)`. Outcome probabilities are
    /// unchanged by the reduction.
    pub fn canonical(self) -> Self {
        fn wrap(x: f64, period: f64) -> f64 {
            let r = x.rem_euclid(period);
            // rem_euclid can round up to exactly `period`
            if r >= period {
                0.0
            } else {
                r
            }
        }
        Self::new(
            wrap(self.theta1, PI),
            wrap(self.theta2, PI),
            wrap(self.phi1, TAU),
            wrap(self.phi2, TAU),
        )
    }
}

/// 2×2 complex matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomMatrix(pub [[ComplexAmplitude; 2]; 2]);

impl AtomMatrix {
    pub fn diag(a: Complex64, b: Complex64) -> Self {
        Self([[a, ZERO], [ZERO, b]])
    }

    pub fn identity() -> Self {
        Self::diag(ONE, ONE)
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = [[ZERO; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, entry) in row.iter_mut().enumerate() {
                *entry = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Self(out)
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        Self([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    pub fn determinant(&self) -> Complex64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    /// Largest entry of `|M·M† − I|`.
    pub fn unitarity_defect(&self) -> f64 {
        let p = self.mul(&self.adjoint());
        let id = Self::identity();
        p.0.iter()
            .flatten()
            .zip(id.0.iter().flatten())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    /// `self ⊗ other`, with row/column index `2·i + j` for first-factor index
    /// `i` and second-factor index `j`.
    pub fn kron(&self, other: &Self) -> [[Complex64; 4]; 4] {
        let mut out = [[ZERO; 4]; 4];
        for (i, k) in (0..2).flat_map(|i| (0..2).map(move |k| (i, k))) {
            for (j, l) in (0..2).flat_map(|j| (0..2).map(move |l| (j, l))) {
                out[2 * i + j][2 * k + l] = self.0[i][k] * other.0[j][l];
            }
        }
        out
    }
}

/// X rotation by the pulse area `2θ`, in the `(|g⟩, |e⟩)` basis.
fn ramsey_rotation(theta: f64) -> AtomMatrix {
    let (s, c) = theta.sin_cos();
    let c = Complex64::new(c, 0.0);
    let mis = Complex64::new(0.0, -s);
    AtomMatrix([[c, mis], [mis, c]])
}

/// Matrix for one atom: `Rx(2θ) · diag(1, e^{iΦ}) · diag(1, −i)`; the
/// rightmost factor (the swap phase) acts first.
pub fn atom_matrix(theta: f64, phi: f64) -> AtomMatrix {
    let dispersive = AtomMatrix::diag(ONE, Complex64::from_polar(1.0, phi));
    let swap_phase = AtomMatrix::diag(ONE, NEG_I);
    ramsey_rotation(theta).mul(&dispersive).mul(&swap_phase)
}

/// Final two-atom amplitudes after both atoms leave the apparatus; the
/// cavities end in `|0⟩_A|0⟩_B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalCoefficients {
    /// `|g⟩₁|g⟩₂`
    pub gg: ComplexAmplitude,
    /// `|g⟩₁|e⟩₂`
    pub ge: ComplexAmplitude,
    /// `|e⟩₁|g⟩₂`
    pub eg: ComplexAmplitude,
    /// `|e⟩₁|e⟩₂`
    pub ee: ComplexAmplitude,
}

impl FinalCoefficients {
    pub fn to_array(self) -> [ComplexAmplitude; 4] {
        [self.gg, self.ge, self.eg, self.ee]
    }

    pub fn from_array([gg, ge, eg, ee]: [ComplexAmplitude; 4]) -> Self {
        Self { gg, ge, eg, ee }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.to_array().iter().map(|z| z.norm_sqr()).sum()
    }

    /// `AD − BC`.
    pub fn determinant(&self) -> ComplexAmplitude {
        self.gg * self.ee - self.ge * self.eg
    }
}

/// `(A,B,C,D)ᵀ = (M₁ ⊗ M₂)(α,β,γ,δ)ᵀ`.
pub fn apply_protocol(state: &TwoQubitState, angles: &ProtocolAngles) -> Result<FinalCoefficients> {
    state.ensure_normalized()?;
    if !angles.is_finite() {
        return Err(Error::NonFinite("protocol angle"));
    }
    let m1 = atom_matrix(angles.theta1, angles.phi1);
    let m2 = atom_matrix(angles.theta2, angles.phi2);
    let full = m1.kron(&m2);
    let v = state.amplitudes();
    let mut out = [ZERO; 4];
    for (row, o) in full.iter().zip(out.iter_mut()) {
        *o = row.iter().zip(v.iter()).map(|(m, x)| m * x).sum();
    }
    Ok(FinalCoefficients::from_array(out))
}

/// `|AD − BC + e^{i(Φ₁+Φ₂)}(αδ − βγ)|`, zero up to rounding.
pub fn phase_identity_residual(state: &TwoQubitState, angles: &ProtocolAngles) -> Result<f64> {
    let coeffs = apply_protocol(state, angles)?;
    let phase = Complex64::from_polar(1.0, angles.phi1 + angles.phi2);
    Ok((coeffs.determinant() + phase * state.determinant()).norm())
}

/// Probability that the single atom of the one-atom scheme exits in `|e⟩`.
///
/// The atom swaps with cavity A, takes the dispersive phase `Φ`, then
/// undergoes a π/2 pulse with cavity B, which acts on the pair
/// `(|g⟩|1⟩_B, |e⟩|0⟩_B)` exactly as [`atom_matrix`] with `θ = π/4` acts on
/// `(|g⟩, |e⟩)`.
pub fn single_particle_probability(state: &SingleExcitationState, phi: f64) -> Result<f64> {
    state.ensure_normalized()?;
    if !phi.is_finite() {
        return Err(Error::NonFinite("phase"));
    }
    let [_, excited] = atom_matrix(FRAC_PI_4, phi).apply([state.amp_01, state.amp_10]);
    Ok(excited.norm_sqr())
}

/// Fringe contrast `(P_max − P_min)/(P_max + P_min)` of
/// [`single_particle_probability`] over `grid_points` uniform phases in
/// `[0, 2π)`.
pub fn single_particle_visibility(state: &SingleExcitationState, grid_points: usize) -> Result<f64> {
    if grid_points < 8 {
        return Err(Error::InvalidConfig(format!(
            "single-particle sweep needs at least 8 grid points, got {grid_points}"
        )));
    }
    let mut max = f64::NEG_INFINITY;
    let mut min = f64::INFINITY;
    for k in 0..grid_points {
        let phi = TAU * k as f64 / grid_points as f64;
        let p = single_particle_probability(state, phi)?;
        max = max.max(p);
        min = min.min(p);
    }
    Ok(if max + min > 0.0 {
        (max - min) / (max + min)
    } else {
        0.0
    })
}
