//! Amplitude optimization, transmittance sweeps and crossings of optimized
//! rate curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::ProtocolParams;
use crate::error::{Error, Result};
use crate::keyrate::{keyrate, rate_only, RateMode};
use crate::quadrature::QuadratureGrid;

/// Crossing brackets are bisected at least down to this width.
pub const CROSSING_WIDTH: f64 = 1e-3;
/// Bisection continues past [`CROSSING_WIDTH`] until `|ΔG|` at the
/// midpoint is below this.
pub const CROSSING_RESIDUAL: f64 = 1e-4;
const MAX_CROSSING_EVALUATIONS: usize = 60;

/// Search settings for [`optimize_amplitude`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSearch {
    pub lo: f64,
    pub hi: f64,
    /// Coarse scan spacing.
    pub step: f64,
    /// Golden-section stopping width in amplitude.
    pub tolerance: f64,
    /// Coarse local maxima within this many bits of the best are refined.
    pub near_tie: f64,
    /// A refined runner-up within this many bits of the winner is reported.
    pub secondary_window: f64,
}

impl Default for AmplitudeSearch {
    fn default() -> Self {
        Self {
            lo: 0.05,
            hi: 5.0,
            step: 0.05,
            tolerance: 1e-3,
            near_tie: 1e-3,
            secondary_window: 1e-4,
        }
    }
}

impl AmplitudeSearch {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.lo, self.hi, self.step, self.tolerance, self.near_tie, self.secondary_window]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.lo < 0.0 || self.hi <= self.lo || self.step <= 0.0 || self.tolerance <= 0.0 {
            return Err(Error::Domain(format!("invalid amplitude search {self:?}")));
        }
        if self.near_tie < 0.0 || self.secondary_window < 0.0 {
            return Err(Error::Domain("tie windows must be nonnegative".into()));
        }
        Ok(())
    }

    /// Coarse scan amplitudes `lo, lo + step, …` up to `hi` inclusive.
    pub fn coarse_points(&self) -> Vec<f64> {
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.lo + i as f64 * self.step).collect()
    }
}

/// Best rate over the amplitude at one transmittance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub eta: f64,
    pub letters: usize,
    pub mode: RateMode,
    /// `None` when no amplitude gives a positive rate in a nonnegative mode.
    pub optimal_amplitude: Option<f64>,
    /// Optimized rate; clamped at zero in postselected and reverse modes.
    pub rate: f64,
    /// Largest rate found before clamping.
    pub raw_rate: f64,
    /// Accepted fraction at the optimal amplitude (1 without postselection).
    pub accepted_fraction: f64,
    /// Another local maximum within the secondary window of the winner.
    pub secondary_maximum: Option<(f64, f64)>,
}

/// Result of bisecting `G(n_low, η) - G(n_high, η)` for its sign change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingRecord {
    pub n_low: usize,
    pub n_high: usize,
    pub mode: RateMode,
    pub eta_star: f64,
    /// Final bracket `(lo, hi)`.
    pub bracket: (f64, f64),
    pub width: f64,
    /// `ΔG` at `eta_star`.
    pub delta_at_star: f64,
    /// `ΔG` at the final bracket ends.
    pub delta_lo: f64,
    pub delta_hi: f64,
    pub evaluations: usize,
}

/// Maximizes `f` on `[lo, hi]` by golden-section search until the bracket
/// is narrower than `tol`; returns the best evaluated `(x, f(x))`.
pub fn golden_section<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}

fn evaluate(letters: usize, eta: f64, a: f64, mode: RateMode, grid: &QuadratureGrid) -> Result<f64> {
    rate_only(&ProtocolParams::new(letters, a, eta)?, grid, mode)
}

/// Maximizes the rate over the amplitude at transmittance `eta`.
///
/// A coarse scan is followed by golden-section refinement around every
/// coarse local maximum within `near_tie` of the best one.
pub fn optimize_amplitude(
    eta: f64,
    letters: usize,
    mode: RateMode,
    grid: &QuadratureGrid,
    search: &AmplitudeSearch,
) -> Result<SweepPoint> {
    search.validate()?;
    ProtocolParams::new(letters, search.lo, eta)?;
    let amps = search.coarse_points();
    let rates = amps
        .iter()
        .map(|&a| evaluate(letters, eta, a, mode, grid))
        .collect::<Result<Vec<_>>>()?;
    let best_coarse = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let last = amps.len() - 1;
    let peaks: Vec<usize> = (0..=last)
        .filter(|&i| {
            let left = i == 0 || rates[i] >= rates[i - 1];
            let right = i == last || rates[i] > rates[i + 1];
            left && right && rates[i] >= best_coarse - search.near_tie
        })
        .collect();

    // refined (a, G) per peak; never worse than the coarse point itself
    let mut refined = Vec::with_capacity(peaks.len());
    for &i in &peaks {
        let lo = amps[i.saturating_sub(1)];
        let hi = amps[(i + 1).min(last)];
        let (a, g) = golden_section(|a| evaluate(letters, eta, a, mode, grid), lo, hi, search.tolerance)?;
        refined.push(if g >= rates[i] { (a, g) } else { (amps[i], rates[i]) });
    }
    refined.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.total_cmp(&y.0)));
    let (a_best, g_best) = refined[0];
    let secondary_maximum = refined
        .get(1)
        .filter(|(a, g)| g_best - g <= search.secondary_window && (a - a_best).abs() > search.step)
        .copied();

    if mode.nonnegative() && g_best <= 0.0 {
        return Ok(SweepPoint {
            eta,
            letters,
            mode,
            optimal_amplitude: None,
            rate: 0.0,
            raw_rate: g_best,
            accepted_fraction: 0.0,
            secondary_maximum: None,
        });
    }
    let accepted_fraction = if mode.postselect {
        keyrate(&ProtocolParams::new(letters, a_best, eta)?, grid, mode)?.accepted_fraction
    } else {
        1.0
    };
    Ok(SweepPoint {
        eta,
        letters,
        mode,
        optimal_amplitude: Some(a_best),
        rate: if mode.nonnegative() { g_best.max(0.0) } else { g_best },
        raw_rate: g_best,
        accepted_fraction,
        secondary_maximum,
    })
}

/// [`optimize_amplitude`] at every transmittance in `etas`, in parallel;
/// failures are kept per point.
pub fn sweep_eta(
    letters: usize,
    mode: RateMode,
    etas: &[f64],
    grid: &QuadratureGrid,
    search: &AmplitudeSearch,
) -> Vec<Result<SweepPoint>> {
    etas.par_iter()
        .map(|&eta| optimize_amplitude(eta, letters, mode, grid, search))
        .collect()
}

/// `G(n_low, η) - G(n_high, η)` with both rates amplitude-optimized.
pub fn rate_difference(
    n_low: usize,
    n_high: usize,
    eta: f64,
    mode: RateMode,
    grid: &QuadratureGrid,
    search: &AmplitudeSearch,
) -> Result<f64> {
    let low = optimize_amplitude(eta, n_low, mode, grid, search)?;
    let high = optimize_amplitude(eta, n_high, mode, grid, search)?;
    Ok(low.rate - high.rate)
}

/// Transmittance where the optimized rate curves of `n_low` and `n_high`
/// letters intersect, by bisection inside `bracket`.
pub fn find_crossing(
    n_low: usize,
    n_high: usize,
    mode: RateMode,
    bracket: (f64, f64),
    grid: &QuadratureGrid,
    search: &AmplitudeSearch,
) -> Result<CrossingRecord> {
    let (mut lo, mut hi) = bracket;
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
        return Err(Error::Domain(format!("invalid transmittance bracket ({lo}, {hi})")));
    }
    let diff = |eta: f64| rate_difference(n_low, n_high, eta, mode, grid, search);
    let mut f_lo = diff(lo)?;
    let mut f_hi = diff(hi)?;
    let mut evaluations = 2;
    if f_lo.signum() == f_hi.signum() && f_lo != 0.0 && f_hi != 0.0 {
        return Err(Error::Bracket { lo, hi, f_lo, f_hi });
    }
    // bisect to the target width, then on until the midpoint difference is
    // below the verification threshold
    let (eta_star, delta_at_star) = if f_lo == 0.0 {
        (lo, f_lo)
    } else if f_hi == 0.0 {
        (hi, f_hi)
    } else {
        loop {
            let mid = 0.5 * (lo + hi);
            let f_mid = diff(mid)?;
            evaluations += 1;
            let narrow = hi - lo <= CROSSING_WIDTH;
            if f_mid == 0.0 || (narrow && f_mid.abs() < CROSSING_RESIDUAL) || evaluations >= MAX_CROSSING_EVALUATIONS {
                break (mid, f_mid);
            }
            if f_mid.signum() == f_lo.signum() {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
                f_hi = f_mid;
            }
        }
    };
    Ok(CrossingRecord {
        n_low,
        n_high,
        mode,
        eta_star,
        bracket: (lo, hi),
        width: hi - lo,
        delta_at_star,
        delta_lo: f_lo,
        delta_hi: f_hi,
        evaluations,
    })
}

/// Sub-brackets of consecutive `etas` over which `G(n_low) - G(n_high)`
/// changes sign, with the sampled differences.
pub fn scan_brackets(
    n_low: usize,
    n_high: usize,
    mode: RateMode,
    etas: &[f64],
    grid: &QuadratureGrid,
    search: &AmplitudeSearch,
) -> Result<(Vec<(f64, f64)>, Vec<f64>)> {
    let deltas = etas
        .par_iter()
        .map(|&eta| rate_difference(n_low, n_high, eta, mode, grid, search))
        .collect::<Result<Vec<_>>>()?;
    let brackets = etas
        .windows(2)
        .zip(deltas.windows(2))
        .filter(|(_, d)| d[0] == 0.0 || d[0].signum() != d[1].signum())
        .map(|(e, _)| (e[0], e[1]))
        .collect();
    Ok((brackets, deltas))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_section_finds_parabola_peak() {
        let (x, fx) = golden_section(|x| Ok(-(x - 1.234f64).powi(2)), 0.0, 3.0, 1e-6).unwrap();
        assert!((x - 1.234).abs() < 1e-6);
        assert!(fx <= 0.0 && fx > -1e-12);
    }

    #[test]
    fn coarse_points_cover_interval() {
        let pts = AmplitudeSearch::default().coarse_points();
        assert_eq!(pts.len(), 100);
        assert!((pts[0] - 0.05).abs() < 1e-15);
        assert!((pts[99] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_transmittance_has_no_rate() {
        let grid = QuadratureGrid::new(32, 16).unwrap();
        let search = AmplitudeSearch {
            step: 0.5,
            ..AmplitudeSearch::default()
        };
        for mode in [RateMode::DIRECT_POSTSELECTED, RateMode::REVERSE] {
            let p = optimize_amplitude(0.0, 3, mode, &grid, &search).unwrap();
            assert_eq!(p.rate, 0.0);
            assert_eq!(p.optimal_amplitude, None);
        }
    }

    #[test]
    fn invalid_bracket_rejected() {
        let grid = QuadratureGrid::new(32, 16).unwrap();
        let search = AmplitudeSearch::default();
        assert!(find_crossing(2, 3, RateMode::DIRECT_POSTSELECTED, (0.6, 0.4), &grid, &search).is_err());
    }
}
