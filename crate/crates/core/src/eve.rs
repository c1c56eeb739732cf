//! Eve's Holevo information under the beam-splitting attack.
//!
//! Eve's states `|ε_k⟩ = |√(1-η)·α_k⟩` share the alphabet's `2π/N` symmetry,
//! so in the Fourier basis `{|m⟩}` they read `Σ_m c_m e^{i2πkm/N}|m⟩` and her
//! unconditional state is diagonal with weights `|c_m|²`. These weights are
//! the inverse discrete Fourier transform of the overlap sequence
//! `⟨ε_N|ε_k⟩ = exp(-a²(1-η)(1 - e^{i2πk/N}))`.
//!
//! Direct reconciliation: `I_AE = H(|c_1|², …, |c_N|²)`.
//!
//! Reverse reconciliation: conditioned on Bob's outcome `β`, Eve holds
//! `ρ(β) = Σ_k p_k(β)|ε_k⟩⟨ε_k|`, whose matrix in the Fourier basis is
//! `c_m c_n Σ_k p_k e^{i2πk(m-n)/N}`; `I_BE(β) = S(ρ_E) - S(ρ(β))`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::alphabet::{PhaseSpacePoint, ProtocolParams};
use crate::eigen::{EigenSolver, HermitianMatrix};
use crate::error::{Error, Result};
use crate::info::{entropy_bits, Constellation};

/// Weights below this are treated as round-off of an exact zero.
pub const CLAMP_TOL: f64 = 1e-10;
/// Weights or eigenvalues below `-BUG_TOL` indicate a broken computation.
pub const BUG_TOL: f64 = 1e-8;
/// Fourier components with `|c_m|²` at or below this are dropped from the
/// conditioned matrix; the eigenvalues they carry are of the same size.
pub const SUPPORT_TOL: f64 = 1e-15;

/// Eve's Fourier-basis weights `|c_m|²` and real coefficients `c_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralWeights {
    /// `weights[m - 1] = |c_m|²`.
    pub weights: Vec<f64>,
    /// `coeffs[m - 1] = c_m = √|c_m|²` (phase convention: real, nonnegative).
    pub coeffs: Vec<f64>,
}

impl SpectralWeights {
    pub fn entropy(&self) -> f64 {
        entropy_bits(&self.weights)
    }
}

/// `e^{i2πt/N}` for `t = 0..N`, indexed by `t mod N` so that products of
/// indices never lose accuracy to large phase arguments.
fn unit_roots(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|t| {
            if t == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::from_polar(1.0, std::f64::consts::TAU * t as f64 / n as f64)
            }
        })
        .collect()
}

fn overlap_with_roots(k: usize, params: &ProtocolParams, roots: &[Complex64]) -> Complex64 {
    let n = params.letters;
    let b2 = params.amplitude * params.amplitude * (1.0 - params.transmittance);
    (-(Complex64::new(1.0, 0.0) - roots[k % n]) * b2).exp()
}

/// `⟨ε_N|ε_k⟩ = exp(-a²(1-η)(1 - e^{i2πk/N}))`.
pub fn eve_overlap(k: usize, params: &ProtocolParams) -> Result<Complex64> {
    params.validate()?;
    params.check_letter(k)?;
    Ok(overlap_with_roots(k, params, &unit_roots(params.letters)))
}

/// Weights `|c_m|² = (1/N) Σ_n e^{-i2πmn/N} ⟨ε_N|ε_n⟩`.
pub fn spectral_weights(params: &ProtocolParams) -> Result<SpectralWeights> {
    params.validate()?;
    let n = params.letters;
    let roots = unit_roots(n);
    let overlaps: Vec<Complex64> = (1..=n).map(|k| overlap_with_roots(k, params, &roots)).collect();
    let mut weights = Vec::with_capacity(n);
    for m in 1..=n {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, ov) in overlaps.iter().enumerate() {
            let t = (m * (j + 1)) % n;
            acc += roots[t].conj() * ov;
        }
        acc /= n as f64;
        if acc.im.abs() > CLAMP_TOL {
            return Err(Error::Numerical(format!(
                "spectral weight {m} has imaginary residue {:e}",
                acc.im
            )));
        }
        if acc.re < -BUG_TOL {
            return Err(Error::Numerical(format!(
                "spectral weight {m} is negative ({:e})",
                acc.re
            )));
        }
        weights.push(acc.re.max(0.0));
    }
    let coeffs = weights.iter().map(|w| w.sqrt()).collect();
    Ok(SpectralWeights { weights, coeffs })
}

/// Eve's information about Alice's letter, `S(ρ_E) = H(|c|²)`.
pub fn iae_direct(params: &ProtocolParams) -> Result<f64> {
    Ok(spectral_weights(params)?.entropy())
}

/// Eve's state conditioned on Bob's outcome, in the Fourier basis.
#[derive(Debug, Clone, PartialEq)]
pub struct EveConditionedMatrix {
    pub matrix: HermitianMatrix,
}

impl EveConditionedMatrix {
    /// Eigenvalues with round-off negatives in `[-1e-8, 0)` clamped to zero.
    pub fn eigenvalues(&self, solver: EigenSolver) -> Result<Vec<f64>> {
        clamp_spectrum(solver.eigenvalues(&self.matrix)?)
    }

    /// Von Neumann entropy in bits.
    pub fn entropy(&self, solver: EigenSolver) -> Result<f64> {
        Ok(entropy_bits(&self.eigenvalues(solver)?))
    }
}

fn clamp_spectrum(mut values: Vec<f64>) -> Result<Vec<f64>> {
    for v in values.iter_mut() {
        if *v < -BUG_TOL {
            return Err(Error::Numerical(format!(
                "conditioned state has eigenvalue {v:e}"
            )));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(values)
}

/// `M_mn = c_m c_n Σ_k p_k(β) e^{i2πk(m-n)/N}` on the full `N`-dimensional basis.
pub fn eve_conditioned_matrix(beta: PhaseSpacePoint, params: &ProtocolParams) -> Result<EveConditionedMatrix> {
    let weights = spectral_weights(params)?;
    let n = params.letters;
    let mut probs = vec![0.0; n];
    Constellation::new(params).posterior_into(beta, &mut probs);
    let roots = unit_roots(n);
    let shift = phase_sums(&probs, &roots);
    let mut matrix = HermitianMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let d = (i + n - j) % n;
            matrix.set(i, j, shift[d] * (weights.coeffs[i] * weights.coeffs[j]));
        }
    }
    Ok(EveConditionedMatrix { matrix })
}

/// `w(d) = Σ_k p_k e^{i2πkd/N}` for `d = 0..N`.
fn phase_sums(probs: &[f64], roots: &[Complex64]) -> Vec<Complex64> {
    let n = probs.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    phase_sums_into(probs, roots, &mut out);
    out
}

fn phase_sums_into(probs: &[f64], roots: &[Complex64], out: &mut [Complex64]) {
    let n = probs.len();
    for (d, slot) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut t = d % n;
        for &p in probs {
            // letter k = idx + 1 contributes phase k·d
            acc += roots[t] * p;
            t += d;
            if t >= n {
                t -= n;
            }
        }
        *slot = acc;
    }
}

/// Eve's information about Bob's outcome `β` under reverse reconciliation.
pub fn ibe_pointwise(beta: PhaseSpacePoint, params: &ProtocolParams) -> Result<f64> {
    let model = EveModel::new(params)?;
    let mut probs = vec![0.0; params.letters];
    Constellation::new(params).posterior_into(beta, &mut probs);
    let mut scratch = model.scratch();
    model.ibe(&probs, &mut scratch).map_err(|e| with_location(e, beta))
}

pub(crate) fn with_location(err: Error, beta: PhaseSpacePoint) -> Error {
    match err {
        Error::EigenConvergence {
            dim,
            iterations,
            residual,
            ..
        } => Error::EigenConvergence {
            dim,
            iterations,
            residual,
            location: format!(" at beta = ({}, {})", beta.x, beta.p),
        },
        other => other,
    }
}

/// Per-`(N, a, η)` data shared by all reverse-reconciliation evaluations.
#[derive(Debug, Clone)]
pub struct EveModel {
    weights: SpectralWeights,
    iae: f64,
    /// Zero-based indices `m - 1` with `|c_m|² > SUPPORT_TOL`.
    support: Vec<usize>,
    roots: Vec<Complex64>,
    solver: EigenSolver,
}

/// Reusable buffers for [`EveModel::conditioned_entropy`].
#[derive(Debug, Clone)]
pub struct EveScratch {
    shifts: Vec<Complex64>,
    matrix: HermitianMatrix,
}

impl EveModel {
    pub fn new(params: &ProtocolParams) -> Result<Self> {
        let weights = spectral_weights(params)?;
        let iae = weights.entropy();
        let support = weights
            .weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > SUPPORT_TOL)
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            weights,
            iae,
            support,
            roots: unit_roots(params.letters),
            solver: EigenSolver::default(),
        })
    }

    pub fn with_solver(mut self, solver: EigenSolver) -> Self {
        self.solver = solver;
        self
    }

    pub fn weights(&self) -> &SpectralWeights {
        &self.weights
    }

    /// `I_AE = S(ρ_E)`.
    pub fn iae(&self) -> f64 {
        self.iae
    }

    /// Dimension of the conditioned matrix after dropping negligible
    /// Fourier components.
    pub fn rank(&self) -> usize {
        self.support.len()
    }

    pub fn scratch(&self) -> EveScratch {
        EveScratch {
            shifts: vec![Complex64::new(0.0, 0.0); self.roots.len()],
            matrix: HermitianMatrix::zeros(self.support.len()),
        }
    }

    /// `S(ρ(β))` for the posterior `p_k(β)`.
    pub fn conditioned_entropy(&self, posterior: &[f64], scratch: &mut EveScratch) -> Result<f64> {
        let n = self.roots.len();
        phase_sums_into(posterior, &self.roots, &mut scratch.shifts);
        let c = &self.weights.coeffs;
        for (a, &i) in self.support.iter().enumerate() {
            for (b, &j) in self.support.iter().enumerate() {
                let d = (i + n - j) % n;
                scratch.matrix.set(a, b, scratch.shifts[d] * (c[i] * c[j]));
            }
        }
        let spectrum = clamp_spectrum(self.solver.eigenvalues(&scratch.matrix)?)?;
        Ok(entropy_bits(&spectrum))
    }

    /// `I_BE(β) = S(ρ_E) - S(ρ(β))`, clamped to `[0, I_AE]` after round-off.
    pub fn ibe(&self, posterior: &[f64], scratch: &mut EveScratch) -> Result<f64> {
        let value = self.iae - self.conditioned_entropy(posterior, scratch)?;
        if value < -BUG_TOL {
            return Err(Error::Numerical(format!(
                "conditioned entropy exceeds the unconditional one by {:e}",
                -value
            )));
        }
        Ok(value.clamp(0.0, self.iae))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn params(n: usize, a: f64, eta: f64) -> ProtocolParams {
        ProtocolParams::new(n, a, eta).unwrap()
    }

    fn h2(p: f64) -> f64 {
        entropy_bits(&[p, 1.0 - p])
    }

    #[test]
    fn overlap_examples() {
        let p = params(5, 1.3, 0.4);
        assert!((eve_overlap(5, &p).unwrap() - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        for k in 1..=5 {
            let o = eve_overlap(k, &params(5, 1.3, 1.0)).unwrap();
            assert!((o - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
        let (a, eta) = (1.1f64, 0.35);
        let o = eve_overlap(1, &params(2, a, eta)).unwrap();
        assert!((o.re - (-2.0 * a * a * (1.0 - eta)).exp()).abs() < 1e-14);
        assert!(o.im.abs() < 1e-14);
        assert!(eve_overlap(0, &p).is_err());
    }

    #[test]
    fn weights_examples() {
        let w = spectral_weights(&params(6, 2.0, 1.0)).unwrap();
        assert_eq!(w.weights.iter().filter(|&&x| x > 1e-14).count(), 1);
        assert!((w.weights[5] - 1.0).abs() < 1e-14);
        assert!(w.entropy().abs() < 1e-12);

        let (a, eta) = (0.9f64, 0.3);
        let e = (-2.0 * a * a * (1.0 - eta)).exp();
        let w = spectral_weights(&params(2, a, eta)).unwrap();
        // m = 2 ≡ 0 carries the even photon numbers
        assert!((w.weights[1] - (1.0 + e) / 2.0).abs() < 1e-15);
        assert!((w.weights[0] - (1.0 - e) / 2.0).abs() < 1e-15);

        let w = spectral_weights(&params(4, 12.0, 0.0)).unwrap();
        assert!(w.weights.iter().all(|&x| (x - 0.25).abs() < 1e-12));
    }

    #[test]
    fn iae_examples() {
        assert!(iae_direct(&params(8, 1.5, 1.0)).unwrap().abs() < 1e-12);
        assert!((iae_direct(&params(8, 15.0, 0.0)).unwrap() - 3.0).abs() < 1e-9);
        let expected = h2((1.0 + (-1.0f64).exp()) / 2.0);
        assert!((iae_direct(&params(2, 1.0, 0.5)).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn conditioned_matrix_examples() {
        let m = eve_conditioned_matrix(PhaseSpacePoint::new(0.4, 1.0), &params(5, 0.0, 0.5)).unwrap();
        assert!(m.entropy(EigenSolver::Jacobi).unwrap().abs() < 1e-12);
        assert!((m.matrix.get(4, 4).re - 1.0).abs() < 1e-14);

        let p = params(6, 1.4, 0.45);
        let w = spectral_weights(&p).unwrap();
        let m = eve_conditioned_matrix(PhaseSpacePoint::ORIGIN, &p).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let expect = if i == j { w.weights[i] } else { 0.0 };
                assert!((m.matrix.get(i, j) - Complex64::new(expect, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn ibe_examples() {
        let p = params(4, 1.2, 0.6);
        assert!(ibe_pointwise(PhaseSpacePoint::ORIGIN, &p).unwrap().abs() < 1e-12);
        assert_eq!(ibe_pointwise(PhaseSpacePoint::new(1.0, 1.0), &params(4, 0.0, 0.6)).unwrap(), 0.0);
    }

    #[test]
    fn truncated_model_matches_full_matrix() {
        for (n, a, eta) in [(3, 0.7, 0.2), (8, 2.5, 0.3), (16, 1.2, 0.7), (32, 4.0, 0.1)] {
            let p = params(n, a, eta);
            let model = EveModel::new(&p).unwrap();
            let beta = PhaseSpacePoint::new(0.8, -0.35);
            let full = eve_conditioned_matrix(beta, &p).unwrap();
            let expect = model.iae() - full.entropy(EigenSolver::Jacobi).unwrap();
            let got = ibe_pointwise(beta, &p).unwrap();
            assert!((got - expect).abs() < 1e-10, "N={n}: {got} vs {expect}");
        }
    }

    proptest! {
        #[test]
        fn weights_normalized_and_gram_consistent(n in 2usize..=64, a in 0.0..=6.0f64, eta in 0.0..=1.0f64) {
            let p = params(n, a, eta);
            let w = spectral_weights(&p).unwrap();
            prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            let roots = unit_roots(n);
            for k in 1..=n {
                let mut fwd = Complex64::new(0.0, 0.0);
                for m in 1..=n {
                    fwd += roots[(k * m) % n] * w.weights[m - 1];
                }
                prop_assert!((fwd - eve_overlap(k, &p).unwrap()).norm() < 1e-10);
            }
        }

        #[test]
        fn ibe_bounded_and_rotation_invariant(n in 2usize..=12, a in 0.0..=4.0f64, eta in 0.0..=1.0f64,
                                              r in 0.0..6.0f64, th in 0.0..TAU) {
            let p = params(n, a, eta);
            let beta = PhaseSpacePoint::from_polar(r, th);
            let v = ibe_pointwise(beta, &p).unwrap();
            let iae = iae_direct(&p).unwrap();
            prop_assert!(v >= 0.0 && v <= iae + 1e-9);
            let rot = ibe_pointwise(beta.rotated(p.sector_width()), &p).unwrap();
            prop_assert!((v - rot).abs() < 1e-10);
        }

        #[test]
        fn conditioned_matrix_is_a_state(n in 2usize..=10, a in 0.0..=4.0f64, eta in 0.0..=1.0f64,
                                         r in 0.0..6.0f64, th in 0.0..TAU) {
            let m = eve_conditioned_matrix(PhaseSpacePoint::from_polar(r, th), &params(n, a, eta)).unwrap();
            prop_assert!(m.matrix.hermiticity_defect() < 1e-14);
            prop_assert!((m.matrix.trace().re - 1.0).abs() < 1e-10);
            let raw = EigenSolver::Jacobi.eigenvalues(&m.matrix).unwrap();
            prop_assert!(raw.iter().all(|&x| x >= -1e-10));
            prop_assert!((raw.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}
