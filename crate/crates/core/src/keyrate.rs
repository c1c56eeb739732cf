//! Secret key rates for direct and reverse reconciliation, with and without
//! postselection, plus the postselection border.
//!
//! The postselected direct-reconciliation rate is
//! `∫ p(β)·max(I_AB(β) - I_AE, 0) dβ`. Along each quadrature ray the sign
//! changes of `I_AB - I_AE` are located and Gauss–Legendre nodes are placed
//! on every accepted piece, so the kink at the border costs no accuracy.
//! [`keyrate_direct_on_grid`] evaluates the same integral with the plain
//! tensor grid and [`keyrate_direct_masked`] integrates outward from the
//! border returned by [`psa_boundary`]; both serve as cross-checks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alphabet::{PhaseSpacePoint, ProtocolParams};
use crate::error::{Error, Result};
use crate::eve::{iae_direct, with_location, EveModel};
use crate::info::Constellation;
use crate::quadrature::{
    positive_part_on_ray, sign_changes, GridDiagnostics, PolarRule, QuadratureGrid,
    BOUNDARY_SCAN_STEP,
};

/// Radius tolerance of [`psa_boundary`].
pub const BOUNDARY_TOL: f64 = 1e-4;

/// Below this marginal density a grid point's contribution to the reverse
/// rate (at most `p·log₂N` per unit weight) is negligible and the
/// eigensolve is skipped.
const NEGLIGIBLE_DENSITY: f64 = 1e-20;

/// Direction of the classical error-correction messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reconciliation {
    /// Alice to Bob; Eve targets Alice's letter.
    Direct,
    /// Bob to Alice; Eve targets Bob's outcome.
    Reverse,
}

impl fmt::Display for Reconciliation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reconciliation::Direct => "direct",
            Reconciliation::Reverse => "reverse",
        })
    }
}

impl FromStr for Reconciliation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "direct" | "dr" => Ok(Reconciliation::Direct),
            "reverse" | "rr" => Ok(Reconciliation::Reverse),
            other => Err(Error::Domain(format!(
                "unknown reconciliation '{other}', expected direct or reverse"
            ))),
        }
    }
}

/// Reconciliation direction together with the postselection switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RateMode {
    pub reconciliation: Reconciliation,
    pub postselect: bool,
}

impl RateMode {
    pub const DIRECT_POSTSELECTED: Self = Self {
        reconciliation: Reconciliation::Direct,
        postselect: true,
    };
    pub const DIRECT: Self = Self {
        reconciliation: Reconciliation::Direct,
        postselect: false,
    };
    pub const REVERSE: Self = Self {
        reconciliation: Reconciliation::Reverse,
        postselect: false,
    };

    pub fn new(reconciliation: Reconciliation, postselect: bool) -> Self {
        Self {
            reconciliation,
            postselect,
        }
    }

    /// Whether the reported rate is a nonnegative quantity by construction.
    pub fn nonnegative(&self) -> bool {
        self.postselect || self.reconciliation == Reconciliation::Reverse
    }
}

/// A key rate with the information terms it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateResult {
    /// `G` in bits per transmission; unpostselected rates may be negative.
    pub rate: f64,
    pub mode: Reconciliation,
    pub postselected: bool,
    pub params: ProtocolParams,
    /// `∫ p(β) dβ` over the accepted region (the normalization without
    /// postselection).
    pub accepted_fraction: f64,
    /// `I_AB` over the whole plane.
    pub iab: f64,
    /// `I_AE` for direct reconciliation, `∫ p(β) I_BE(β) dβ` for reverse.
    pub eve_information: f64,
    /// Reverse reconciliation: grid points where `I_AB(β) < I_BE(β)`.
    pub negative_samples: Option<usize>,
    pub diagnostics: GridDiagnostics,
}

impl KeyRateResult {
    /// `max(G, 0)`, the rate a run of the protocol can actually deliver.
    pub fn operational_rate(&self) -> f64 {
        self.rate.max(0.0)
    }
}

/// Border of the postselected area over one sector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostselectionBoundary {
    pub params: ProtocolParams,
    /// `I_AE`, the threshold on `I_AB(β)`.
    pub threshold: f64,
    /// Sampled angles, from `0` to `2π/N` inclusive.
    pub angles: Vec<f64>,
    /// Smallest accepted radius per angle; `None` when `I_AB < I_AE` out to
    /// the truncation radius.
    pub radii: Vec<Option<f64>>,
    pub r_max: f64,
}

impl PostselectionBoundary {
    /// No angle has an accepted radius.
    pub fn is_empty(&self) -> bool {
        self.radii.iter().all(Option::is_none)
    }
}

/// Smallest radius along `θ` where `I_AB ≥ threshold`, to `tol`.
fn border_radius(constellation: &Constellation, threshold: f64, theta: f64, r_max: f64, tol: f64) -> Option<f64> {
    let mut probs = vec![0.0; constellation.letters()];
    let (s, c) = theta.sin_cos();
    let mut advantage = |r: f64| {
        let (_, iab) = constellation.marginal_and_iab(PhaseSpacePoint::new(r * c, r * s), &mut probs);
        iab - threshold
    };
    if advantage(0.0) >= 0.0 {
        return Some(0.0);
    }
    let mut prev = 0.0;
    let steps = (r_max / BOUNDARY_SCAN_STEP).ceil() as usize;
    for i in 1..=steps {
        let r = (i as f64 * BOUNDARY_SCAN_STEP).min(r_max);
        if advantage(r) >= 0.0 {
            let (mut lo, mut hi) = (prev, r);
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                if advantage(mid) >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(hi);
        }
        prev = r;
    }
    None
}

/// Postselection border `r*(θ)` sampled at `angular_nodes + 1` angles
/// across one sector.
pub fn psa_boundary(params: &ProtocolParams, grid: &QuadratureGrid) -> Result<PostselectionBoundary> {
    params.validate()?;
    grid.validate()?;
    let r_max = grid.truncation_radius(params)?;
    let threshold = iae_direct(params)?;
    let constellation = Constellation::new(params);
    let m = grid.angular_nodes;
    let angles: Vec<f64> = (0..=m).map(|j| params.sector_width() * j as f64 / m as f64).collect();
    let radii = angles
        .iter()
        .map(|&theta| border_radius(&constellation, threshold, theta, r_max, BOUNDARY_TOL))
        .collect();
    Ok(PostselectionBoundary {
        params: *params,
        threshold,
        angles,
        radii,
        r_max,
    })
}

/// Direct reconciliation rate `I_AB - I_AE`, or its postselected version.
pub fn keyrate_direct(params: &ProtocolParams, grid: &QuadratureGrid, postselect: bool) -> Result<KeyRateResult> {
    let rule = PolarRule::new(params, grid)?;
    let iae = iae_direct(params)?;
    let constellation = Constellation::new(params);
    let n = params.letters;
    let [iab, normalization] = rule.integrate_rays_multi(|theta| {
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
    let (rate, accepted_fraction) = if postselect {
        let [rate, accepted] = postselected_direct(&rule, &constellation, iae)?;
        (rate, accepted)
    } else {
        (iab - iae, normalization)
    };
    check_finite(rate, "direct rate")?;
    Ok(KeyRateResult {
        rate,
        mode: Reconciliation::Direct,
        postselected: postselect,
        params: *params,
        accepted_fraction: accepted_fraction.clamp(0.0, 1.0),
        iab,
        eve_information: iae,
        negative_samples: None,
        diagnostics: GridDiagnostics::new(&rule, grid, normalization),
    })
}

/// `[∫ p·max(I_AB - I_AE, 0), ∫_PSA p]` with border-resolved rays.
fn postselected_direct(rule: &PolarRule, constellation: &Constellation, iae: f64) -> Result<[f64; 2]> {
    let n = constellation.letters();
    rule.integrate_rays_multi(|theta| {
        let mut probs = vec![0.0; n];
        let (s, c) = theta.sin_cos();
        let ray = positive_part_on_ray(
            |r| {
                let (density, iab) = constellation.marginal_and_iab(PhaseSpacePoint::new(r * c, r * s), &mut probs);
                (density, iab - iae)
            },
            rule.r_max,
            &rule.gauss,
        );
        Ok([ray.integral, ray.measure])
    })
}

/// Postselected direct rate alone; the inner loop of amplitude optimization.
pub(crate) fn direct_postselected_rate(params: &ProtocolParams, grid: &QuadratureGrid) -> Result<f64> {
    let rule = PolarRule::new(params, grid)?;
    let iae = iae_direct(params)?;
    let [rate, _] = postselected_direct(&rule, &Constellation::new(params), iae)?;
    check_finite(rate, "direct rate")
}

/// Postselected direct rate with `max(·, 0)` sampled on the plain tensor
/// grid, without locating the border.
pub fn keyrate_direct_on_grid(params: &ProtocolParams, grid: &QuadratureGrid) -> Result<f64> {
    let rule = PolarRule::new(params, grid)?;
    let iae = iae_direct(params)?;
    let constellation = Constellation::new(params);
    let n = params.letters;
    rule.integrate_with(
        || vec![0.0; n],
        |probs, beta| {
            let (density, iab) = constellation.marginal_and_iab(beta, probs);
            density * (iab - iae).max(0.0)
        },
    )
}

/// Postselected direct rate integrated outward from the border `r*(θ)`
/// (found at each angular node with tolerance [`BOUNDARY_TOL`]) with the
/// signed integrand `I_AB - I_AE`.
pub fn keyrate_direct_masked(params: &ProtocolParams, grid: &QuadratureGrid) -> Result<f64> {
    let rule = PolarRule::new(params, grid)?;
    let iae = iae_direct(params)?;
    let constellation = Constellation::new(params);
    let n = params.letters;
    rule.integrate_rays(|theta| {
        let Some(start) = border_radius(&constellation, iae, theta, rule.r_max, BOUNDARY_TOL) else {
            return Ok(0.0);
        };
        let mut probs = vec![0.0; n];
        let (s, c) = theta.sin_cos();
        Ok(rule
            .gauss
            .mapped(start, rule.r_max)
            .map(|(r, w)| {
                let (density, iab) = constellation.marginal_and_iab(PhaseSpacePoint::new(r * c, r * s), &mut probs);
                w * r * density * (iab - iae)
            })
            .sum())
    })
}

/// Reverse reconciliation rate `∫ p(β)(I_AB(β) - I_BE(β)) dβ`.
///
/// With `postselect` the integrand is replaced by its positive part; the
/// number of grid points where it was negative is reported either way.
pub fn keyrate_reverse(params: &ProtocolParams, grid: &QuadratureGrid, postselect: bool) -> Result<KeyRateResult> {
    let rule = PolarRule::new(params, grid)?;
    let model = EveModel::new(params)?;
    let constellation = Constellation::new(params);
    let n = params.letters;
    // [rate, iab, ibe, accepted, normalization, negative count]
    let [rate, iab, ibe, accepted, normalization, negatives] = rule.integrate_rays_multi(|theta| {
        let mut probs = vec![0.0; n];
        let mut scratch = model.scratch();
        let (s, c) = theta.sin_cos();
        let mut acc = [0.0; 6];
        let mut negatives = 0usize;
        for &(r, w) in &rule.radial {
            let beta = PhaseSpacePoint::new(r * c, r * s);
            let (density, iab) = constellation.marginal_and_iab(beta, &mut probs);
            acc[4] += w * density;
            if density < NEGLIGIBLE_DENSITY {
                continue;
            }
            let ibe = model.ibe(&probs, &mut scratch).map_err(|e| with_location(e, beta))?;
            let advantage = iab - ibe;
            if advantage < 0.0 {
                negatives += 1;
            }
            let kept = if postselect { advantage.max(0.0) } else { advantage };
            acc[0] += w * density * kept;
            acc[1] += w * density * iab;
            acc[2] += w * density * ibe;
            if !postselect || advantage > 0.0 {
                acc[3] += w * density;
            }
        }
        acc[5] = negatives as f64;
        Ok(acc)
    })?;
    check_finite(rate, "reverse rate")?;
    Ok(KeyRateResult {
        rate,
        mode: Reconciliation::Reverse,
        postselected: postselect,
        params: *params,
        accepted_fraction: if postselect { accepted } else { normalization }.clamp(0.0, 1.0),
        iab,
        eve_information: ibe,
        // counted over one sector; every slot was scaled by the angular weight
        negative_samples: Some((negatives / rule.angle_weight).round() as usize),
        diagnostics: GridDiagnostics::new(&rule, grid, normalization),
    })
}

/// Dispatches on `mode`.
pub fn keyrate(params: &ProtocolParams, grid: &QuadratureGrid, mode: RateMode) -> Result<KeyRateResult> {
    match mode.reconciliation {
        Reconciliation::Direct => keyrate_direct(params, grid, mode.postselect),
        Reconciliation::Reverse => keyrate_reverse(params, grid, mode.postselect),
    }
}

/// Rate alone, skipping the auxiliary integrals where possible.
pub fn rate_only(params: &ProtocolParams, grid: &QuadratureGrid, mode: RateMode) -> Result<f64> {
    if mode == RateMode::DIRECT_POSTSELECTED {
        direct_postselected_rate(params, grid)
    } else {
        Ok(keyrate(params, grid, mode)?.rate)
    }
}

/// [`keyrate`] plus a second evaluation with doubled node counts; the
/// change in the rate is recorded in the diagnostics.
pub fn keyrate_checked(params: &ProtocolParams, grid: &QuadratureGrid, mode: RateMode) -> Result<KeyRateResult> {
    let mut result = keyrate(params, grid, mode)?;
    let fine = rate_only(params, &grid.refined(), mode)?;
    result.diagnostics.record_refinement((fine - result.rate).abs());
    Ok(result)
}

/// Sign changes of `I_AB - I_AE` along the ray at `θ`; more than one means
/// the accepted region is not star-shaped there.
pub fn border_crossings(params: &ProtocolParams, grid: &QuadratureGrid, theta: f64) -> Result<Vec<f64>> {
    let r_max = grid.truncation_radius(params)?;
    let iae = iae_direct(params)?;
    let constellation = Constellation::new(params);
    let mut probs = vec![0.0; params.letters];
    let (s, c) = theta.sin_cos();
    Ok(sign_changes(
        |r| constellation.marginal_and_iab(PhaseSpacePoint::new(r * c, r * s), &mut probs).1 - iae,
        r_max,
        BOUNDARY_SCAN_STEP,
        1e-12,
    ))
}

/// Pointwise postselection rule for simulated outcomes: accept `β` when
/// `I_AB(β) > I_AE`.
#[derive(Debug, Clone)]
pub struct PsaMask {
    constellation: Constellation,
    threshold: f64,
}

impl PsaMask {
    pub fn new(params: &ProtocolParams) -> Result<Self> {
        Ok(Self {
            constellation: Constellation::new(params),
            threshold: iae_direct(params)?,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn accepts(&self, beta: PhaseSpacePoint, scratch: &mut [f64]) -> bool {
        self.constellation.marginal_and_iab(beta, scratch).1 > self.threshold
    }
}

fn check_finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numerical(format!("{what} is not finite ({value})")))
    }
}
