//! Heterodyne likelihoods, posteriors and Alice–Bob mutual information.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::alphabet::{letter_directions, PhaseSpacePoint, ProtocolParams};
use crate::error::{Error, Result};
use crate::quadrature::{GridDiagnostics, IntegralEstimate, PolarRule, QuadratureGrid};

/// Posterior `p_k(β)` over the letters given the outcome `β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDistribution {
    /// `probs[k - 1]` is the probability of letter `k`.
    pub probs: Vec<f64>,
    pub at: PhaseSpacePoint,
}

impl PosteriorDistribution {
    pub fn entropy(&self) -> f64 {
        entropy_bits(&self.probs)
    }
}

/// Letter directions at Bob's amplitude, cached for repeated pointwise
/// evaluation.
#[derive(Debug, Clone)]
pub struct Constellation {
    letters: usize,
    bob_amplitude: f64,
    directions: Vec<(f64, f64)>,
}

impl Constellation {
    pub fn new(params: &ProtocolParams) -> Self {
        Self {
            letters: params.letters,
            bob_amplitude: params.bob_amplitude(),
            directions: letter_directions(params.letters),
        }
    }

    pub fn letters(&self) -> usize {
        self.letters
    }

    /// Writes the posterior into `probs` and returns the marginal density.
    ///
    /// `-|β - s·e^{iφ_k}|² = -|β|² - s² + 2s·Re(β e^{-iφ_k})`; the common
    /// factor cancels in the posterior and the largest exponent is factored
    /// out before exponentiation.
    pub fn posterior_into(&self, beta: PhaseSpacePoint, probs: &mut [f64]) -> f64 {
        debug_assert_eq!(probs.len(), self.letters);
        let s2 = 2.0 * self.bob_amplitude;
        let mut top = f64::NEG_INFINITY;
        for (slot, &(c, s)) in probs.iter_mut().zip(&self.directions) {
            let e = s2 * (beta.x * c + beta.p * s);
            *slot = e;
            top = top.max(e);
        }
        let mut total = 0.0;
        for slot in probs.iter_mut() {
            *slot = (*slot - top).exp();
            total += *slot;
        }
        let inv = 1.0 / total;
        for slot in probs.iter_mut() {
            *slot *= inv;
        }
        let s = self.bob_amplitude;
        (top - beta.norm_sqr() - s * s).exp() * total / (PI * self.letters as f64)
    }

    /// Marginal density and pointwise `I_AB(β)` in one pass.
    pub fn marginal_and_iab(&self, beta: PhaseSpacePoint, probs: &mut [f64]) -> (f64, f64) {
        let density = self.posterior_into(beta, probs);
        (density, iab_from_posterior(probs))
    }
}

/// `log₂N - H(P)` clamped to `[0, log₂N]`.
pub(crate) fn iab_from_posterior(probs: &[f64]) -> f64 {
    let max = (probs.len() as f64).log2();
    (max - entropy_bits(probs)).clamp(0.0, max)
}

/// Shannon entropy in bits with `0·log 0 = 0`; no validation.
pub(crate) fn entropy_bits(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.log2())
        .sum::<f64>()
}

/// Heterodyne density `(1/π)e^{-|β - √η α_k|²}` of outcome `β` given letter `k`.
pub fn likelihood(beta: PhaseSpacePoint, k: usize, params: &ProtocolParams) -> Result<f64> {
    params.validate()?;
    params.check_letter(k)?;
    let (c, s) = letter_directions(params.letters)[k - 1];
    let bob = PhaseSpacePoint::new(c, s).scaled(params.bob_amplitude());
    Ok((-beta.distance_sqr(&bob)).exp() / PI)
}

/// Unconditional outcome density `(1/N)Σ_k p(β|k)`.
pub fn marginal(beta: PhaseSpacePoint, params: &ProtocolParams) -> f64 {
    let mut probs = vec![0.0; params.letters];
    Constellation::new(params).posterior_into(beta, &mut probs)
}

pub fn posterior(beta: PhaseSpacePoint, params: &ProtocolParams) -> PosteriorDistribution {
    let mut probs = vec![0.0; params.letters];
    Constellation::new(params).posterior_into(beta, &mut probs);
    PosteriorDistribution { probs, at: beta }
}

/// Shannon entropy in bits of a probability vector.
///
/// Components below `-1e-12` (or non-finite) are rejected; tiny negative
/// round-off is treated as zero.
pub fn shannon_entropy(probs: &[f64]) -> Result<f64> {
    if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < -1e-12) {
        return Err(Error::Domain(format!(
            "probability component {bad} is not a valid probability"
        )));
    }
    Ok(entropy_bits(probs))
}

/// Information Bob holds about Alice's letter after observing `β`.
pub fn iab_pointwise(beta: PhaseSpacePoint, params: &ProtocolParams) -> f64 {
    let mut probs = vec![0.0; params.letters];
    Constellation::new(params).posterior_into(beta, &mut probs);
    iab_from_posterior(&probs)
}

/// Mutual information `∫ p(β) I_AB(β) dβ` over the truncated plane.
pub fn iab_total(params: &ProtocolParams, grid: &QuadratureGrid) -> Result<IntegralEstimate> {
    let rule = PolarRule::new(params, grid)?;
    let constellation = Constellation::new(params);
    let n = params.letters;
    let [value, normalization] = rule.integrate_rays_multi(|theta| {
        let mut probs = vec![0.0; n];
        let (s, c) = theta.sin_cos();
        let mut acc = [0.0; 2];
        for &(r, w) in &rule.radial {
            let (density, iab) = constellation.marginal_and_iab(PhaseSpacePoint::new(r * c, r * s), &mut probs);
            acc[0] += w * density * iab;
            acc[1] += w * density;
        }
        Ok(acc)
    })?;
    Ok(IntegralEstimate {
        value,
        diagnostics: GridDiagnostics::new(&rule, grid, normalization),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::alphabet_state;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn params(n: usize, a: f64, eta: f64) -> ProtocolParams {
        ProtocolParams::new(n, a, eta).unwrap()
    }

    #[test]
    fn likelihood_examples() {
        let p = params(5, 1.3, 0.6);
        let bob = alphabet_state(2, &p).unwrap().scaled(0.6f64.sqrt());
        assert!((likelihood(bob, 2, &p).unwrap() - 1.0 / PI).abs() < 1e-15);
        let off = PhaseSpacePoint::new(bob.x + 0.6, bob.p - 0.8);
        assert!((likelihood(off, 2, &p).unwrap() - (-1.0f64).exp() / PI).abs() < 1e-15);
        assert!(likelihood(off, 6, &p).is_err());
    }

    #[test]
    fn marginal_examples() {
        let b = PhaseSpacePoint::new(0.4, -0.9);
        for n in [2, 3, 7] {
            let m = marginal(b, &params(n, 0.0, 0.4));
            assert!((m - (-b.norm_sqr()).exp() / PI).abs() < 1e-15);
        }
        // two letters at ±1, both at distance 1 from the origin
        let m = marginal(PhaseSpacePoint::ORIGIN, &params(2, 1.0, 1.0));
        assert!((m - (-1.0f64).exp() / PI).abs() < 1e-15);
    }

    #[test]
    fn marginal_matches_likelihood_average() {
        let p = params(6, 1.7, 0.45);
        let b = PhaseSpacePoint::new(-0.3, 1.9);
        let avg: f64 = (1..=6).map(|k| likelihood(b, k, &p).unwrap()).sum::<f64>() / 6.0;
        assert!((marginal(b, &p) - avg).abs() < 1e-15);
    }

    #[test]
    fn posterior_examples() {
        let post = posterior(PhaseSpacePoint::new(1.0, 2.0), &params(4, 0.0, 0.5));
        assert!(post.probs.iter().all(|&q| (q - 0.25).abs() < 1e-15));

        let post = posterior(PhaseSpacePoint::ORIGIN, &params(2, 1.3, 0.7));
        assert_eq!(post.probs, vec![0.5, 0.5]);

        let p = params(5, 2.0, 0.9);
        let a1 = alphabet_state(1, &p).unwrap();
        let post = posterior(a1.scaled(40.0), &p);
        assert!(post.probs[0] > 1.0 - 1e-12);
        assert!(post.probs.iter().all(|q| q.is_finite()));
    }

    #[test]
    fn entropy_examples() {
        assert!((shannon_entropy(&[0.25; 4]).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(shannon_entropy(&[1.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!((shannon_entropy(&[0.5, 0.5]).unwrap() - 1.0).abs() < 1e-15);
        assert!(shannon_entropy(&[1.1, -0.1]).is_err());
        assert!(shannon_entropy(&[f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn iab_pointwise_examples() {
        let b = PhaseSpacePoint::new(0.7, 0.2);
        assert_eq!(iab_pointwise(b, &params(6, 0.0, 0.8)), 0.0);
        assert!(iab_pointwise(PhaseSpacePoint::ORIGIN, &params(2, 1.0, 0.5)).abs() < 1e-15);

        let p = params(4, 1.0, 0.8);
        let far = alphabet_state(3, &p).unwrap().scaled(50.0);
        assert!((iab_pointwise(far, &p) - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn posterior_is_normalized(n in 2usize..64, a in 0.0..6.0f64, eta in 0.0..=1.0f64,
                                   r in 0.0..30.0f64, th in 0.0..TAU) {
            let post = posterior(PhaseSpacePoint::from_polar(r, th), &params(n, a, eta));
            let sum: f64 = post.probs.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-10);
            prop_assert!(post.probs.iter().all(|&q| q >= 0.0));
        }

        #[test]
        fn iab_rotation_invariant_and_bounded(n in 2usize..32, a in 0.0..5.0f64, eta in 0.0..=1.0f64,
                                              r in 0.0..8.0f64, th in 0.0..TAU) {
            let p = params(n, a, eta);
            let b = PhaseSpacePoint::from_polar(r, th);
            let i0 = iab_pointwise(b, &p);
            let i1 = iab_pointwise(b.rotated(p.sector_width()), &p);
            prop_assert!((i0 - i1).abs() < 1e-12);
            prop_assert!((0.0..=(n as f64).log2()).contains(&i0));
            let m0 = marginal(b, &p);
            let m1 = marginal(b.rotated(p.sector_width()), &p);
            prop_assert!((m0 - m1).abs() <= 1e-12 * m0.max(1e-300) + 1e-300);
        }
    }
}
