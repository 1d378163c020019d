//! Pure two-qubit cavity states.
//!
//! Amplitudes are stored in the fixed basis order
//! `(|0⟩_A|0⟩_B, |0⟩_A|1⟩_B, |1⟩_A|0⟩_B, |1⟩_A|1⟩_B) = (α, β, γ, δ)`.
//! States are kept exactly as given: no global phase is removed.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexAmplitude = Complex64;

/// Allowed deviation of the squared norm from one.
pub const NORM_TOLERANCE: f64 = 1e-9;

const ZERO_AMPLITUDE: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitState {
    amps: [ComplexAmplitude; 4],
}

impl TwoQubitState {
    /// Wraps four amplitudes without checking normalization.
    pub fn from_amplitudes(amps: [ComplexAmplitude; 4]) -> Result<Self> {
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("state amplitude"));
        }
        Ok(Self { amps })
    }

    /// Builds a state and requires it to be normalized.
    pub fn new(amps: [ComplexAmplitude; 4]) -> Result<Self> {
        let state = Self::from_amplitudes(amps)?;
        state.ensure_normalized()?;
        Ok(state)
    }

    /// Real-coefficient state `a|00⟩ + b|01⟩ + c|10⟩ + d|11⟩`.
    pub fn real(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        Self::new([a, b, c, d].map(|x| Complex64::new(x, 0.0)))
    }

    /// `(|00⟩ + |11⟩)/√2`.
    pub fn bell() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            amps: [
                Complex64::new(h, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(h, 0.0),
            ],
        }
    }

    /// `|00⟩`.
    pub fn ground() -> Self {
        let mut amps = [Complex64::new(0.0, 0.0); 4];
        amps[0] = Complex64::new(1.0, 0.0);
        Self { amps }
    }

    pub fn amplitudes(&self) -> [ComplexAmplitude; 4] {
        self.amps
    }

    pub fn alpha(&self) -> ComplexAmplitude {
        self.amps[0]
    }

    pub fn beta(&self) -> ComplexAmplitude {
        self.amps[1]
    }

    pub fn gamma(&self) -> ComplexAmplitude {
        self.amps[2]
    }

    pub fn delta(&self) -> ComplexAmplitude {
        self.amps[3]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOLERANCE
    }

    pub fn ensure_normalized(&self) -> Result<()> {
        if self.is_normalized() {
            Ok(())
        } else {
            Err(Error::NotNormalized {
                norm_sqr: self.norm_sqr(),
            })
        }
    }

    /// `αδ − βγ`, the determinant of the 2×2 coefficient matrix.
    pub fn determinant(&self) -> ComplexAmplitude {
        self.amps[0] * self.amps[3] - self.amps[1] * self.amps[2]
    }

    /// Multiplies every amplitude by `e^{iφ}`.
    pub fn with_global_phase(&self, phi: f64) -> Self {
        let phase = Complex64::from_polar(1.0, phi);
        Self {
            amps: self.amps.map(|z| z * phase),
        }
    }

    /// Exchanges the roles of cavity A and cavity B: `(α,β,γ,δ) → (α,γ,β,δ)`.
    pub fn swap_qubits(&self) -> Self {
        let [a, b, c, d] = self.amps;
        Self {
            amps: [a, c, b, d],
        }
    }

    pub fn is_real(&self) -> bool {
        self.amps.iter().all(|z| z.im == 0.0)
    }
}

/// Rescales a state to unit norm, preserving amplitude ratios.
pub fn normalize(state: &TwoQubitState) -> Result<TwoQubitState> {
    if state.amps.iter().all(|z| z.norm() < ZERO_AMPLITUDE) {
        return Err(Error::ZeroState);
    }
    let norm = state.norm_sqr().sqrt();
    Ok(TwoQubitState {
        amps: state.amps.map(|z| z / norm),
    })
}

/// Concurrence of a normalized pure state, `2|αδ − βγ|`.
pub fn concurrence_exact(state: &TwoQubitState) -> Result<f64> {
    state.ensure_normalized()?;
    Ok(2.0 * state.determinant().norm())
}

/// Haar-random pure state: four independent standard complex Gaussians,
/// normalized. The generator is ChaCha8 seeded from `seed`.
pub fn random_pure_state(seed: u64) -> TwoQubitState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut amps = [Complex64::new(0.0, 0.0); 4];
        for z in amps.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *z = Complex64::new(re, im);
        }
        let raw = TwoQubitState { amps };
        if let Ok(state) = normalize(&raw) {
            return state;
        }
    }
}

/// Two-level state `α|0⟩_A|1⟩_B + β|1⟩_A|0⟩_B` used by the one-atom scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleExcitationState {
    /// Coefficient of `|0⟩_A|1⟩_B`.
    pub amp_01: ComplexAmplitude,
    /// Coefficient of `|1⟩_A|0⟩_B`.
    pub amp_10: ComplexAmplitude,
}

impl SingleExcitationState {
    pub fn new(amp_01: ComplexAmplitude, amp_10: ComplexAmplitude) -> Result<Self> {
        let state = Self { amp_01, amp_10 };
        if [amp_01, amp_10]
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::NonFinite("state amplitude"));
        }
        state.ensure_normalized()?;
        Ok(state)
    }

    /// Extracts the single-excitation sector of a two-qubit state. The `|00⟩`
    /// and `|11⟩` amplitudes must vanish.
    pub fn from_two_qubit(state: &TwoQubitState) -> Result<Self> {
        if state.alpha().norm() > ZERO_AMPLITUDE || state.delta().norm() > ZERO_AMPLITUDE {
            return Err(Error::NotSingleExcitation);
        }
        Self::new(state.beta(), state.gamma())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp_01.norm_sqr() + self.amp_10.norm_sqr()
    }

    pub fn ensure_normalized(&self) -> Result<()> {
        let norm_sqr = self.norm_sqr();
        if (norm_sqr - 1.0).abs() <= NORM_TOLERANCE {
            Ok(())
        } else {
            Err(Error::NotNormalized { norm_sqr })
        }
    }
}

/// On-disk state document.
///
/// ```json
/// { "amplitudes": [[re, im], [re, im], [re, im], [re, im]], "normalize": false }
/// ```
///
/// The four entries are `(α, β, γ, δ)` for `|00⟩, |01⟩, |10⟩, |11⟩`, first
/// index cavity A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFile {
    pub amplitudes: [[f64; 2]; 4],
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub normalize: bool,
}

impl From<&TwoQubitState> for StateFile {
    fn from(state: &TwoQubitState) -> Self {
        Self {
            amplitudes: state.amps.map(|z| [z.re, z.im]),
            normalize: false,
        }
    }
}

impl StateFile {
    /// Converts to a state. Renormalizes when the document asks for it or
    /// `force_normalize` is set; otherwise the norm must already be one.
    pub fn into_state(self, force_normalize: bool) -> Result<TwoQubitState> {
        let raw =
            TwoQubitState::from_amplitudes(self.amplitudes.map(|[re, im]| Complex64::new(re, im)))?;
        if self.normalize || force_normalize {
            normalize(&raw)
        } else {
            raw.ensure_normalized()?;
            Ok(raw)
        }
    }
}

pub fn parse_state(text: &str, force_normalize: bool) -> Result<TwoQubitState> {
    let doc: StateFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    doc.into_state(force_normalize)
}

pub fn serialize_state(state: &TwoQubitState) -> String {
    serde_json::to_string_pretty(&StateFile::from(state)).expect("state document serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn normalize_scales_basis_state() {
        let raw = TwoQubitState::from_amplitudes([c(2.0), c(0.0), c(0.0), c(0.0)]).unwrap();
        let s = normalize(&raw).unwrap();
        assert_eq!(s.amplitudes(), [c(1.0), c(0.0), c(0.0), c(0.0)]);
    }

    #[test]
    fn normalize_symmetric_pair() {
        let raw = TwoQubitState::from_amplitudes([c(1.0), c(0.0), c(0.0), c(1.0)]).unwrap();
        let s = normalize(&raw).unwrap();
        assert_abs_diff_eq!(s.alpha().re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.delta().re, FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_eq!(s.beta(), c(0.0));
    }

    #[test]
    fn normalize_rejects_zero_state() {
        let raw = TwoQubitState::from_amplitudes([c(0.0); 4]).unwrap();
        assert!(matches!(normalize(&raw), Err(Error::ZeroState)));
    }

    #[test]
    fn non_finite_amplitude_rejected() {
        let r = TwoQubitState::from_amplitudes([c(f64::NAN), c(0.0), c(0.0), c(0.0)]);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn concurrence_examples() {
        assert_eq!(concurrence_exact(&TwoQubitState::ground()).unwrap(), 0.0);
        assert_abs_diff_eq!(
            concurrence_exact(&TwoQubitState::bell()).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        // single-excitation sector: 2|αβ|
        let s = TwoQubitState::new([
            c(0.0),
            Complex64::from_polar(0.6, 0.3),
            Complex64::from_polar(0.8, -1.1),
            c(0.0),
        ])
        .unwrap();
        assert_abs_diff_eq!(concurrence_exact(&s).unwrap(), 0.96, epsilon = 1e-15);
    }

    #[test]
    fn concurrence_requires_normalization() {
        let raw = TwoQubitState::from_amplitudes([c(1.0), c(0.0), c(0.0), c(1.0)]).unwrap();
        assert!(matches!(
            concurrence_exact(&raw),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn random_state_is_deterministic_and_normalized() {
        for seed in [0u64, 1, 42, u64::MAX] {
            let a = random_pure_state(seed);
            let b = random_pure_state(seed);
            assert_eq!(a, b);
            assert!((a.norm_sqr() - 1.0).abs() <= 1e-12);
        }
        assert_ne!(random_pure_state(0), random_pure_state(1));
    }

    // Frozen from an independent numpy Monte Carlo (4e6 Haar states):
    // mean 0.588843, standard deviation 0.230202.
    const HAAR_MEAN_CONCURRENCE: f64 = 0.588843;
    const HAAR_STD_CONCURRENCE: f64 = 0.230202;

    #[test]
    fn haar_mean_concurrence() {
        let n = 10_000;
        let mean = (0..n)
            .map(|s| concurrence_exact(&random_pure_state(s)).unwrap())
            .sum::<f64>()
            / n as f64;
        let band = 3.0 * HAAR_STD_CONCURRENCE / (n as f64).sqrt();
        assert!((0.55..=0.65).contains(&mean), "mean {mean}");
        assert!(
            (mean - HAAR_MEAN_CONCURRENCE).abs() <= band,
            "mean {mean} outside {HAAR_MEAN_CONCURRENCE} ± {band}"
        );
    }

    #[test]
    fn parse_bell_document() {
        let h = FRAC_1_SQRT_2;
        let text = format!(r#"{{"amplitudes": [[{h}, 0], [0, 0], [0, 0], [{h}, 0.0]]}}"#);
        let s = parse_state(&text, false).unwrap();
        assert_eq!(s, TwoQubitState::bell());
    }

    #[test]
    fn parse_normalizes_on_request() {
        let text = r#"{"amplitudes": [[0.5, 0], [0, 0], [0, 0], [0.5, 0]], "normalize": true}"#;
        let s = parse_state(text, false).unwrap();
        assert!((s.norm_sqr() - 1.0).abs() < 1e-15);
        let text = r#"{"amplitudes": [[0.5, 0], [0, 0], [0, 0], [0.5, 0]]}"#;
        assert!(matches!(
            parse_state(text, false),
            Err(Error::NotNormalized { .. })
        ));
        assert!(parse_state(text, true).is_ok());
    }

    #[test]
    fn parse_rejects_malformed() {
        for text in [
            r#"{"amplitudes": [[1, 0], [0, 0], [0, 0]"#,
            r#"{"amplitudes": [[1, 0], [0, 0], [0, 0]]}"#,
            r#"{"amplitudes": [[1, 0, 0], [0, 0], [0, 0], [0, 0]]}"#,
            r#"{"amps": []}"#,
            "",
        ] {
            assert!(matches!(parse_state(text, false), Err(Error::Parse(_))), "{text}");
        }
    }

    #[test]
    fn single_excitation_extraction() {
        let h = FRAC_1_SQRT_2;
        let s = TwoQubitState::new([c(0.0), c(h), c(h), c(0.0)]).unwrap();
        let se = SingleExcitationState::from_two_qubit(&s).unwrap();
        assert_eq!(se.amp_01, c(h));
        assert!(matches!(
            SingleExcitationState::from_two_qubit(&TwoQubitState::bell()),
            Err(Error::NotSingleExcitation)
        ));
    }

    proptest! {
        #[test]
        fn concurrence_in_unit_interval(seed in any::<u64>()) {
            let cval = concurrence_exact(&random_pure_state(seed)).unwrap();
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&cval));
        }

        #[test]
        fn concurrence_invariant_under_global_phase_and_swap(seed in any::<u64>(), phi in -10.0f64..10.0) {
            let s = random_pure_state(seed);
            let c0 = concurrence_exact(&s).unwrap();
            prop_assert!((concurrence_exact(&s.with_global_phase(phi)).unwrap() - c0).abs() <= 1e-12);
            prop_assert!((concurrence_exact(&s.swap_qubits()).unwrap() - c0).abs() <= 1e-12);
        }

        #[test]
        fn serialize_parse_round_trip(seed in any::<u64>()) {
            let s = random_pure_state(seed);
            let back = parse_state(&serialize_state(&s), false).unwrap();
            for (x, y) in s.amplitudes().iter().zip(back.amplitudes().iter()) {
                prop_assert_eq!(x, y);
            }
        }
    }
}
