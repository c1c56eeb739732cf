//! Seeded simulation of encode → loss → heterodyne → decode → postselect.
//!
//! Samples are split into fixed batches; batch `b` draws from a ChaCha20
//! stream seeded with `seed` on stream number `b`, so results do not depend
//! on the thread count. Normals come from the Box–Muller transform, two
//! uniforms per quadrature pair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::{decode, letter_directions, PhaseSpacePoint, ProtocolParams};
use crate::error::{Error, Result};
use crate::info::{entropy_bits, Constellation};
use crate::keyrate::PsaMask;

/// Samples per RNG stream.
pub const BATCH: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Postselection {
    Off,
    /// Keep outcomes with `I_AB(β) > I_AE`.
    DirectPsa,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub params: ProtocolParams,
    pub samples: u64,
    pub seed: u64,
    pub postselection: Postselection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub trials: u64,
    pub accepted: u64,
    /// Wrong decodings among all trials.
    pub symbol_error_rate: f64,
    /// Plug-in `I(k; l)` from the `(k, l)` histogram of all trials.
    pub empirical_iab: f64,
    /// Sample mean of `I_AB(β)` over all outcomes, an unbiased estimate of
    /// the quadrature `I_AB`.
    pub sampled_iab: f64,
    pub sampled_iab_stderr: f64,
    pub accepted_fraction: f64,
    pub accepted_stderr: f64,
    /// `confusion[k-1][l-1]` counts trials sending `k` decoded as `l`.
    pub confusion: Vec<Vec<u64>>,
    /// Same histogram restricted to postselected outcomes.
    pub accepted_confusion: Option<Vec<Vec<u64>>>,
    /// Plug-in `I(k; l)` over postselected outcomes.
    pub accepted_empirical_iab: Option<f64>,
}

#[derive(Debug, Clone)]
struct Tally {
    confusion: Vec<Vec<u64>>,
    accepted_confusion: Vec<Vec<u64>>,
    accepted: u64,
    iab_sum: f64,
    iab_sq: f64,
}

impl Tally {
    fn new(n: usize) -> Self {
        Self {
            confusion: vec![vec![0; n]; n],
            accepted_confusion: vec![vec![0; n]; n],
            accepted: 0,
            iab_sum: 0.0,
            iab_sq: 0.0,
        }
    }

    fn merge(mut self, other: &Tally) -> Self {
        add_counts(&mut self.confusion, &other.confusion);
        add_counts(&mut self.accepted_confusion, &other.accepted_confusion);
        self.accepted += other.accepted;
        self.iab_sum += other.iab_sum;
        self.iab_sq += other.iab_sq;
        self
    }
}

fn add_counts(into: &mut [Vec<u64>], from: &[Vec<u64>]) {
    for (row, o) in into.iter_mut().zip(from) {
        for (c, v) in row.iter_mut().zip(o) {
            *c += v;
        }
    }
}

/// Pair of independent standard normals.
fn box_muller<R: Rng>(rng: &mut R) -> (f64, f64) {
    // 1 - U lies in (0, 1], keeping the logarithm finite
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (r * c, r * s)
}

pub fn simulate(config: &SimulationConfig) -> Result<SimulationReport> {
    let params = config.params;
    params.validate()?;
    if config.samples == 0 {
        return Err(Error::Domain("samples must be at least 1".into()));
    }
    let n = params.letters;
    let bob: Vec<PhaseSpacePoint> = letter_directions(n)
        .into_iter()
        .map(|(c, s)| PhaseSpacePoint::new(c, s).scaled(params.bob_amplitude()))
        .collect();
    let constellation = Constellation::new(&params);
    let mask = match config.postselection {
        Postselection::Off => None,
        Postselection::DirectPsa => Some(PsaMask::new(&params)?),
    };
    let noise = std::f64::consts::FRAC_1_SQRT_2;
    let batches = config.samples.div_ceil(BATCH);

    let tallies: Vec<Tally> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
            rng.set_stream(b);
            let count = BATCH.min(config.samples - b * BATCH);
            let mut tally = Tally::new(n);
            let mut probs = vec![0.0; n];
            for _ in 0..count {
                let k = rng.gen_range(0..n);
                let (g1, g2) = box_muller(&mut rng);
                let beta = PhaseSpacePoint::new(bob[k].x + noise * g1, bob[k].p + noise * g2);
                let (_, iab) = constellation.marginal_and_iab(beta, &mut probs);
                tally.iab_sum += iab;
                tally.iab_sq += iab * iab;
                let l = decode(beta, &params) - 1;
                tally.confusion[k][l] += 1;
                if mask.as_ref().is_none_or(|m| m.accepts(beta, &mut probs)) {
                    tally.accepted += 1;
                    tally.accepted_confusion[k][l] += 1;
                }
            }
            tally
        })
        .collect();
    let total = tallies.iter().fold(Tally::new(n), |acc, t| acc.merge(t));

    let trials = config.samples as f64;
    let mean = total.iab_sum / trials;
    let var = (total.iab_sq / trials - mean * mean).max(0.0);
    let errors: u64 = (0..n)
        .map(|k| total.confusion[k].iter().sum::<u64>() - total.confusion[k][k])
        .sum();
    let accepted_fraction = total.accepted as f64 / trials;
    let report = SimulationReport {
        trials: config.samples,
        accepted: total.accepted,
        symbol_error_rate: errors as f64 / trials,
        empirical_iab: empirical_confusion_entropy(&total.confusion),
        sampled_iab: mean,
        sampled_iab_stderr: (var / trials).sqrt(),
        accepted_fraction,
        accepted_stderr: (accepted_fraction * (1.0 - accepted_fraction) / trials).sqrt(),
        accepted_empirical_iab: mask.as_ref().map(|_| empirical_confusion_entropy(&total.accepted_confusion)),
        accepted_confusion: mask.as_ref().map(|_| total.accepted_confusion),
        confusion: total.confusion,
    };
    Ok(report)
}

/// Plug-in mutual information `H(k) + H(l) - H(k, l)` of a confusion matrix,
/// in bits.
///
/// With uniform letters this is `log₂N - H(k|l)`; the row marginal is taken
/// from the counts so that postselected histograms are handled as well.
pub fn empirical_confusion_entropy(confusion: &[Vec<u64>]) -> f64 {
    let total: u64 = confusion.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    let n = confusion.len();
    let rows: Vec<f64> = confusion.iter().map(|r| r.iter().sum::<u64>() as f64 / t).collect();
    let cols: Vec<f64> = (0..n)
        .map(|l| confusion.iter().map(|r| r[l]).sum::<u64>() as f64 / t)
        .collect();
    let joint: Vec<f64> = confusion.iter().flatten().map(|&c| c as f64 / t).collect();
    (entropy_bits(&rows) + entropy_bits(&cols) - entropy_bits(&joint)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(n: usize, a: f64, eta: f64, samples: u64) -> SimulationConfig {
        SimulationConfig {
            params: ProtocolParams::new(n, a, eta).unwrap(),
            samples,
            seed: 7,
            postselection: Postselection::Off,
        }
    }

    #[test]
    fn identity_and_uniform_matrices() {
        let id: Vec<Vec<u64>> = (0..4).map(|i| (0..4).map(|j| u64::from(i == j) * 10).collect()).collect();
        assert!((empirical_confusion_entropy(&id) - 2.0).abs() < 1e-15);
        assert!(empirical_confusion_entropy(&[vec![5; 3], vec![5; 3], vec![5; 3]]).abs() < 1e-15);
        assert_eq!(empirical_confusion_entropy(&[vec![0, 0], vec![0, 0]]), 0.0);
    }

    #[test]
    fn zero_amplitude_is_guessing() {
        let r = simulate(&config(4, 0.0, 0.7, 200_000)).unwrap();
        assert!((r.symbol_error_rate - 0.75).abs() < 0.005);
        assert_eq!(r.sampled_iab, 0.0);
    }

    #[test]
    fn separated_letters_decode() {
        let r = simulate(&config(4, 10.0, 1.0, 100_000)).unwrap();
        assert!(r.symbol_error_rate < 1e-4);
    }

    #[test]
    fn rows_count_trials_and_reruns_match() {
        let c = config(3, 1.1, 0.6, 150_001);
        let r = simulate(&c).unwrap();
        assert_eq!(r.confusion.iter().flatten().sum::<u64>(), 150_001);
        assert_eq!(r, simulate(&c).unwrap());
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(simulate(&config(2, 1.0, 0.5, 0)).is_err());
    }
}
