//! Coherent-state PSK alphabet, beam-splitter channel and nearest-letter decoding.
//!
//! Letters are indexed `1..=N`; letter `k` sits at phase `2πk/N`, so letter `N`
//! is the phase-0 reference. Amplitudes are in shot-noise units: a heterodyne
//! outcome around a coherent state `|γ⟩` is distributed as `(1/π)e^{-|β-γ|²}`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Alphabet size, signal amplitude and channel transmittance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Number of letters `N ≥ 2`.
    pub letters: usize,
    /// Signal amplitude `a ≥ 0`; the mean photon number is `a²`.
    pub amplitude: f64,
    /// Channel transmittance `η ∈ [0, 1]`.
    pub transmittance: f64,
}

impl ProtocolParams {
    pub fn new(letters: usize, amplitude: f64, transmittance: f64) -> Result<Self> {
        let params = Self {
            letters,
            amplitude,
            transmittance,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.letters < 2 {
            return Err(Error::Domain(format!(
                "alphabet size must be at least 2, got {}",
                self.letters
            )));
        }
        if !self.amplitude.is_finite() || self.amplitude < 0.0 {
            return Err(Error::Domain(format!(
                "amplitude must be finite and nonnegative, got {}",
                self.amplitude
            )));
        }
        if !(0.0..=1.0).contains(&self.transmittance) {
            return Err(Error::Domain(format!(
                "transmittance must lie in [0, 1], got {}",
                self.transmittance
            )));
        }
        Ok(())
    }

    /// Amplitude reaching Bob, `√η·a`.
    pub fn bob_amplitude(&self) -> f64 {
        self.transmittance.sqrt() * self.amplitude
    }

    /// Amplitude tapped by Eve, `√(1-η)·a`.
    pub fn eve_amplitude(&self) -> f64 {
        (1.0 - self.transmittance).sqrt() * self.amplitude
    }

    /// Angular width of one decoding sector, `2π/N`.
    pub fn sector_width(&self) -> f64 {
        TAU / self.letters as f64
    }

    /// Phase `2πk/N` of letter `k` (no range check).
    pub fn letter_phase(&self, k: usize) -> f64 {
        TAU * k as f64 / self.letters as f64
    }

    pub fn with_amplitude(self, amplitude: f64) -> Self {
        Self { amplitude, ..self }
    }

    pub fn with_transmittance(self, transmittance: f64) -> Self {
        Self {
            transmittance,
            ..self
        }
    }

    pub(crate) fn check_letter(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.letters {
            return Err(Error::Domain(format!(
                "letter index {k} outside 1..={}",
                self.letters
            )));
        }
        Ok(())
    }
}

/// A heterodyne outcome `β = x + i·p` in shot-noise units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseSpacePoint {
    pub x: f64,
    pub p: f64,
}

impl PhaseSpacePoint {
    pub const ORIGIN: Self = Self { x: 0.0, p: 0.0 };

    pub fn new(x: f64, p: f64) -> Self {
        Self { x, p }
    }

    pub fn from_polar(radius: f64, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            x: radius * c,
            p: radius * s,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.x * self.x + self.p * self.p
    }

    pub fn modulus(&self) -> f64 {
        self.x.hypot(self.p)
    }

    /// Argument in `(-π, π]`; the origin has argument 0.
    pub fn arg(&self) -> f64 {
        if self.x == 0.0 && self.p == 0.0 {
            0.0
        } else {
            self.p.atan2(self.x)
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            x: self.x * factor,
            p: self.p * factor,
        }
    }

    /// Rotation by `angle` about the origin.
    pub fn rotated(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            x: c * self.x - s * self.p,
            p: s * self.x + c * self.p,
        }
    }

    pub fn distance_sqr(&self, other: &Self) -> f64 {
        let dx = self.x - other.x;
        let dp = self.p - other.p;
        dx * dx + dp * dp
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.p.is_finite()
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.x, self.p)
    }
}

impl From<Complex64> for PhaseSpacePoint {
    fn from(z: Complex64) -> Self {
        Self { x: z.re, p: z.im }
    }
}

/// One letter of the alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphabetState {
    pub index: usize,
    pub value: PhaseSpacePoint,
}

/// Bob's and Eve's shares of a letter after the lossy channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitStates {
    pub bob: PhaseSpacePoint,
    pub eve: PhaseSpacePoint,
}

/// Amplitude `a·e^{i2πk/N}` of letter `k`.
pub fn alphabet_state(k: usize, params: &ProtocolParams) -> Result<PhaseSpacePoint> {
    params.validate()?;
    params.check_letter(k)?;
    // k = N is phase 0 exactly
    let phase = if k == params.letters {
        0.0
    } else {
        params.letter_phase(k)
    };
    Ok(PhaseSpacePoint::from_polar(params.amplitude, phase))
}

/// All `N` letters in index order.
pub fn alphabet(params: &ProtocolParams) -> Result<Vec<AlphabetState>> {
    (1..=params.letters)
        .map(|k| {
            Ok(AlphabetState {
                index: k,
                value: alphabet_state(k, params)?,
            })
        })
        .collect()
}

/// Inner product `⟨α|β⟩ = exp(-|α|²/2 - |β|²/2 + α*β)` of two coherent states.
pub fn coherent_overlap(alpha: PhaseSpacePoint, beta: PhaseSpacePoint) -> Complex64 {
    let a = alpha.to_complex();
    let b = beta.to_complex();
    (a.conj() * b - 0.5 * (a.norm_sqr() + b.norm_sqr())).exp()
}

/// Beam-splitter image of letter `k`: `(√η·α_k, √(1-η)·α_k)`.
pub fn beam_split(k: usize, params: &ProtocolParams) -> Result<SplitStates> {
    let alpha = alphabet_state(k, params)?;
    Ok(SplitStates {
        bob: alpha.scaled(params.transmittance.sqrt()),
        eve: alpha.scaled((1.0 - params.transmittance).sqrt()),
    })
}

// Relative tolerance, in units of sector widths, for treating β as lying on
// a sector boundary.
const BOUNDARY_TOL: f64 = 1e-12;

/// Letter whose state is closest to `β`, i.e. maximizes `|⟨α_l|β⟩|²`.
///
/// All letters share the modulus `a`, so this is the letter whose phase is
/// angularly nearest to `arg β`. Points on a sector boundary (and the origin)
/// go to the smallest qualifying index.
pub fn decode(beta: PhaseSpacePoint, params: &ProtocolParams) -> usize {
    let n = params.letters;
    if beta.x == 0.0 && beta.p == 0.0 {
        return 1;
    }
    // position in units of the sector width, in [0, N)
    let t = beta.arg().rem_euclid(TAU) / params.sector_width();
    let lower = t.floor();
    let frac = t - lower;
    let to_letter = |j: i64| -> usize {
        let r = j.rem_euclid(n as i64) as usize;
        if r == 0 {
            n
        } else {
            r
        }
    };
    if (frac - 0.5).abs() <= BOUNDARY_TOL {
        let a = to_letter(lower as i64);
        let b = to_letter(lower as i64 + 1);
        a.min(b)
    } else {
        to_letter(t.round() as i64)
    }
}

/// Letter phases `2πk/N` for `k = 1..=N` as `(cos, sin)` pairs.
pub(crate) fn letter_directions(letters: usize) -> Vec<(f64, f64)> {
    (1..=letters)
        .map(|k| {
            if k == letters {
                (1.0, 0.0)
            } else {
                let (s, c) = (TAU * k as f64 / letters as f64).sin_cos();
                (c, s)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn params(n: usize, a: f64, eta: f64) -> ProtocolParams {
        ProtocolParams::new(n, a, eta).unwrap()
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ProtocolParams::new(1, 1.0, 0.5).is_err());
        assert!(ProtocolParams::new(4, -0.1, 0.5).is_err());
        assert!(ProtocolParams::new(4, 1.0, 1.5).is_err());
        assert!(ProtocolParams::new(4, f64::NAN, 0.5).is_err());
        assert!(ProtocolParams::new(4, 1.0, -0.01).is_err());
    }

    #[test]
    fn alphabet_state_examples() {
        let z = alphabet_state(7, &params(7, 1.4, 0.5)).unwrap();
        assert_eq!(z, PhaseSpacePoint::new(1.4, 0.0));

        let z = alphabet_state(1, &params(4, 2.0, 0.5)).unwrap();
        assert!(z.x.abs() < 1e-15 && (z.p - 2.0).abs() < 1e-15);

        let z = alphabet_state(2, &params(3, 1.0, 0.5)).unwrap();
        assert!((z.x + 0.5).abs() < 1e-15);
        assert!((z.p + 0.75f64.sqrt()).abs() < 1e-15);

        assert!(alphabet_state(0, &params(3, 1.0, 0.5)).is_err());
        assert!(alphabet_state(4, &params(3, 1.0, 0.5)).is_err());
    }

    #[test]
    fn alphabet_is_uniformly_spaced() {
        let p = params(9, 1.7, 0.3);
        let letters = alphabet(&p).unwrap();
        for w in letters.windows(2) {
            assert!((w[0].value.modulus() - 1.7).abs() < 1e-14);
            let d = (w[1].value.arg() - w[0].value.arg()).rem_euclid(TAU);
            assert!((d - p.sector_width()).abs() < 1e-12);
        }
    }

    #[test]
    fn overlap_examples() {
        let a = PhaseSpacePoint::new(0.3, -1.2);
        assert!((coherent_overlap(a, a) - Complex64::new(1.0, 0.0)).norm() < 1e-15);

        let b = PhaseSpacePoint::new(0.7, 0.4);
        let vac = coherent_overlap(PhaseSpacePoint::ORIGIN, b);
        assert!((vac.re - (-b.norm_sqr() / 2.0).exp()).abs() < 1e-15);
        assert!(vac.im.abs() < 1e-15);

        // |1 - i|² = 2
        let o = coherent_overlap(PhaseSpacePoint::new(1.0, 0.0), PhaseSpacePoint::new(0.0, 1.0));
        assert!((o.norm_sqr() - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn beam_split_examples() {
        let s = beam_split(3, &params(5, 1.3, 1.0)).unwrap();
        assert_eq!(s.eve.norm_sqr(), 0.0);

        let p = params(5, 1.3, 0.0);
        let s = beam_split(3, &p).unwrap();
        assert_eq!(s.bob.norm_sqr(), 0.0);
        assert_eq!(s.eve, alphabet_state(3, &p).unwrap());

        let s = beam_split(4, &params(4, 2.0, 0.5)).unwrap();
        let r2 = 2f64.sqrt();
        assert!((s.bob.x - r2).abs() < 1e-15 && s.bob.p == 0.0);
        assert!((s.eve.x - r2).abs() < 1e-15 && s.eve.p == 0.0);
    }

    #[test]
    fn decode_examples() {
        let p4 = params(4, 1.0, 1.0);
        assert_eq!(decode(PhaseSpacePoint::new(0.5, 0.1), &p4), 4);

        let p = params(6, 1.1, 0.7);
        let a2 = alphabet_state(2, &p).unwrap();
        assert_eq!(decode(a2.scaled(0.01), &p), 2);
        assert_eq!(decode(a2.scaled(37.0), &p), 2);

        // boundary between letters 1 and 2 at phase 3π/8
        let p8 = params(8, 1.0, 1.0);
        let b = PhaseSpacePoint::from_polar(0.8, 3.0 * PI / 8.0);
        assert_eq!(decode(b, &p8), 1);
        // boundary between N and 1
        let b = PhaseSpacePoint::from_polar(0.8, PI / 8.0);
        assert_eq!(decode(b, &p8), 1);
        // boundary between 4 and 5
        let b = PhaseSpacePoint::from_polar(2.0, 9.0 * PI / 8.0);
        assert_eq!(decode(b, &p8), 4);

        assert_eq!(decode(PhaseSpacePoint::ORIGIN, &p8), 1);
    }

    #[test]
    fn decode_agrees_with_overlap_maximization() {
        let p = params(7, 1.3, 1.0);
        let letters = alphabet(&p).unwrap();
        for i in 0..200 {
            let b = PhaseSpacePoint::from_polar(0.1 + 0.02 * i as f64, 0.37 * i as f64);
            let best = letters
                .iter()
                .max_by(|x, y| {
                    coherent_overlap(x.value, b)
                        .norm_sqr()
                        .total_cmp(&coherent_overlap(y.value, b).norm_sqr())
                })
                .unwrap();
            assert_eq!(decode(b, &p), best.index);
        }
    }

    proptest! {
        #[test]
        fn overlap_modulus(ax in -4.0..4.0f64, ap in -4.0..4.0f64, bx in -4.0..4.0f64, bp in -4.0..4.0f64) {
            let a = PhaseSpacePoint::new(ax, ap);
            let b = PhaseSpacePoint::new(bx, bp);
            let lhs = coherent_overlap(a, b).norm_sqr();
            let rhs = (-a.distance_sqr(&b)).exp();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn beam_split_conserves_energy(n in 2usize..40, k in 1usize..40, a in 0.0..6.0f64, eta in 0.0..=1.0f64) {
            let k = 1 + (k - 1) % n;
            let p = params(n, a, eta);
            let s = beam_split(k, &p).unwrap();
            prop_assert!((s.bob.norm_sqr() + s.eve.norm_sqr() - a * a).abs() < 1e-12);
        }

        #[test]
        fn decode_is_rotation_covariant(n in 2usize..20, r in 0.01..5.0f64, theta in 0.0..TAU) {
            let p = params(n, 1.0, 1.0);
            let w = p.sector_width();
            // stay away from sector boundaries
            let off = (theta / w).fract();
            prop_assume!((off - 0.5).abs() > 1e-6);
            let b = PhaseSpacePoint::from_polar(r, theta);
            let l = decode(b, &p);
            let l_rot = decode(b.rotated(w), &p);
            prop_assert_eq!(l_rot, l % n + 1);
        }

        #[test]
        fn decode_recovers_letters(n in 2usize..64, a in 0.01..6.0f64) {
            let p = params(n, a, 1.0);
            for k in 1..=n {
                prop_assert_eq!(decode(alphabet_state(k, &p).unwrap(), &p), k);
            }
        }
    }
}
