//! Polar quadrature over one `2π/N` sector of phase space.
//!
//! Every integrand used by the engine is invariant under rotation by `2π/N`,
//! so the plane integral is `N` times the integral over `θ ∈ [0, 2π/N)`.
//! Radial nodes are Gauss–Legendre on `[0, r_max]`; angular nodes are the
//! uniform midpoint rule, which is spectrally accurate for periodic
//! integrands.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::{PhaseSpacePoint, ProtocolParams};
use crate::error::{Error, Result};

pub const MIN_RADIAL_NODES: usize = 32;
pub const MIN_ANGULAR_NODES: usize = 16;
/// Truncation margin beyond Bob's amplitude, in shot-noise units.
pub const TAIL_MARGIN: f64 = 6.0;
/// Radial step of the sign-change scan used to locate postselection borders.
pub const BOUNDARY_SCAN_STEP: f64 = 0.05;
/// Accepted range of `∫ p(β) dβ` over the truncated grid.
pub const NORMALIZATION_TOL: f64 = 1e-6;

pub const RULE_ID: &str = "gauss-legendre-radial/uniform-midpoint-angular";

/// Discretization of the phase-space integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    /// Gauss–Legendre nodes on `[0, r_max]` (per postselection piece when the
    /// integrand is split at its sign changes).
    pub radial_nodes: usize,
    /// Uniform angular nodes per `2π/N` sector.
    pub angular_nodes: usize,
    /// Explicit truncation radius; `None` uses `√η·a + 6`.
    pub r_max: Option<f64>,
    /// Tolerated change of a reported rate, in bits, when both node counts
    /// are doubled.
    pub convergence_target: f64,
}

impl Default for QuadratureGrid {
    fn default() -> Self {
        Self {
            radial_nodes: 96,
            angular_nodes: 64,
            r_max: None,
            convergence_target: 1e-5,
        }
    }
}

impl QuadratureGrid {
    pub fn new(radial_nodes: usize, angular_nodes: usize) -> Result<Self> {
        let grid = Self {
            radial_nodes,
            angular_nodes,
            ..Self::default()
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.radial_nodes < MIN_RADIAL_NODES {
            return Err(Error::Domain(format!(
                "need at least {MIN_RADIAL_NODES} radial nodes, got {}",
                self.radial_nodes
            )));
        }
        if self.angular_nodes < MIN_ANGULAR_NODES {
            return Err(Error::Domain(format!(
                "need at least {MIN_ANGULAR_NODES} angular nodes per sector, got {}",
                self.angular_nodes
            )));
        }
        if !(self.convergence_target > 0.0) {
            return Err(Error::Domain(format!(
                "convergence target must be positive, got {}",
                self.convergence_target
            )));
        }
        if let Some(r) = self.r_max {
            if !r.is_finite() {
                return Err(Error::Domain(format!("r_max must be finite, got {r}")));
            }
        }
        Ok(())
    }

    /// Both node counts doubled.
    pub fn refined(&self) -> Self {
        Self {
            radial_nodes: 2 * self.radial_nodes,
            angular_nodes: 2 * self.angular_nodes,
            ..*self
        }
    }

    /// Truncation radius for `params`, at least `√η·a + 6`.
    pub fn truncation_radius(&self, params: &ProtocolParams) -> Result<f64> {
        let floor = params.bob_amplitude() + TAIL_MARGIN;
        match self.r_max {
            None => Ok(floor),
            Some(r) if r >= floor => Ok(r),
            Some(r) => Err(Error::Domain(format!(
                "r_max = {r} is below sqrt(eta)*a + {TAIL_MARGIN} = {floor}"
            ))),
        }
    }
}

/// Integration diagnostics attached to every integrated quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDiagnostics {
    pub rule: String,
    pub radial_nodes: usize,
    pub angular_nodes: usize,
    pub r_max: f64,
    /// `∫ p(β) dβ` on the truncated grid.
    pub normalization: f64,
    /// Normalization within `[1 - 1e-6, 1]` (up to round-off).
    pub normalized: bool,
    pub convergence_target: f64,
    /// Change of the primary quantity when node counts are doubled, if checked.
    pub achieved_delta: Option<f64>,
    pub converged: Option<bool>,
}

impl GridDiagnostics {
    pub(crate) fn new(rule: &PolarRule, grid: &QuadratureGrid, normalization: f64) -> Self {
        Self {
            rule: RULE_ID.to_string(),
            radial_nodes: grid.radial_nodes,
            angular_nodes: grid.angular_nodes,
            r_max: rule.r_max,
            normalization,
            normalized: normalization >= 1.0 - NORMALIZATION_TOL
                && normalization <= 1.0 + 1e-12,
            convergence_target: grid.convergence_target,
            achieved_delta: None,
            converged: None,
        }
    }

    pub(crate) fn record_refinement(&mut self, delta: f64) {
        self.achieved_delta = Some(delta);
        self.converged = Some(delta < self.convergence_target);
    }
}

/// An integral together with its grid diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralEstimate {
    pub value: f64,
    pub diagnostics: GridDiagnostics,
}

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes by Newton iteration on `P_n`, ascending order.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, z);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Nodes and weights mapped affinely onto `[lo, hi]`.
    pub fn mapped(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor rule over one sector: Gauss–Legendre in `r`, midpoint in `θ`.
#[derive(Debug, Clone)]
pub struct PolarRule {
    pub letters: usize,
    pub r_max: f64,
    /// Angular nodes in `[0, 2π/N)`.
    pub angles: Vec<f64>,
    /// Weight of one angular node, including the factor `N` for the sector
    /// replication.
    pub angle_weight: f64,
    /// Radial nodes `(r, w·r)` with the polar Jacobian folded into the weight.
    pub radial: Vec<(f64, f64)>,
    pub gauss: GaussLegendre,
}

impl PolarRule {
    pub fn new(params: &ProtocolParams, grid: &QuadratureGrid) -> Result<Self> {
        params.validate()?;
        grid.validate()?;
        let r_max = grid.truncation_radius(params)?;
        let sector = params.sector_width();
        let m = grid.angular_nodes;
        let angles = (0..m).map(|j| (j as f64 + 0.5) * sector / m as f64).collect();
        let gauss = GaussLegendre::new(grid.radial_nodes);
        let radial = gauss.mapped(0.0, r_max).map(|(r, w)| (r, w * r)).collect();
        Ok(Self {
            letters: params.letters,
            r_max,
            angles,
            angle_weight: params.letters as f64 * sector / m as f64,
            radial,
            gauss,
        })
    }

    /// Integrates `f` with per-ray scratch state created by `init`.
    ///
    /// Rays are evaluated in parallel; the reduction order is fixed, so the
    /// result does not depend on the thread count.
    pub fn integrate_with<S, I, F>(&self, init: I, f: F) -> Result<f64>
    where
        I: Fn() -> S + Sync,
        F: Fn(&mut S, PhaseSpacePoint) -> f64 + Sync,
    {
        self.integrate_rays(|theta| {
            let mut state = init();
            let (s, c) = theta.sin_cos();
            let mut acc = 0.0;
            for &(r, w) in &self.radial {
                let beta = PhaseSpacePoint::new(r * c, r * s);
                let v = f(&mut state, beta);
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        value: v,
                        x: beta.x,
                        p: beta.p,
                    });
                }
                acc += w * v;
            }
            Ok(acc)
        })
    }

    /// Sums `ray(θ_j)` (a radial integral including the `r` Jacobian) over the
    /// angular nodes with the sector weights.
    pub fn integrate_rays<F>(&self, ray: F) -> Result<f64>
    where
        F: Fn(f64) -> Result<f64> + Sync,
    {
        let [v] = self.integrate_rays_multi(|theta| Ok([ray(theta)?]))?;
        Ok(v)
    }

    /// Like [`integrate_rays`](Self::integrate_rays) for `K` integrals sharing
    /// one pass over the rays.
    pub fn integrate_rays_multi<const K: usize, F>(&self, ray: F) -> Result<[f64; K]>
    where
        F: Fn(f64) -> Result<[f64; K]> + Sync,
    {
        let per_ray: Vec<[f64; K]> = self
            .angles
            .par_iter()
            .map(|&theta| ray(theta))
            .collect::<Result<_>>()?;
        let mut total = [0.0; K];
        for values in &per_ray {
            for (t, v) in total.iter_mut().zip(values) {
                *t += v;
            }
        }
        Ok(total.map(|t| t * self.angle_weight))
    }
}

/// `N × ∫_sector f(β) r dr dθ` for a rotation-invariant integrand.
pub fn integrate_phase_space<F>(f: F, params: &ProtocolParams, grid: &QuadratureGrid) -> Result<IntegralEstimate>
where
    F: Fn(PhaseSpacePoint) -> f64 + Sync,
{
    let rule = PolarRule::new(params, grid)?;
    let value = rule.integrate_with(|| (), |_, beta| f(beta))?;
    let normalization = normalization_on(&rule, params)?;
    Ok(IntegralEstimate {
        value,
        diagnostics: GridDiagnostics::new(&rule, grid, normalization),
    })
}

/// `∫ p(β) dβ` on the rule's truncated grid.
pub(crate) fn normalization_on(rule: &PolarRule, params: &ProtocolParams) -> Result<f64> {
    let constellation = crate::info::Constellation::new(params);
    let n = params.letters;
    rule.integrate_with(
        || vec![0.0; n],
        |probs, beta| constellation.posterior_into(beta, probs),
    )
}

/// Reports `max_k |f(β e^{i2π/N}) - f(β)|` over a deterministic spread of
/// sample points inside the truncation disk.
pub fn rotation_defect<F>(f: F, params: &ProtocolParams, r_max: f64, samples: usize) -> f64
where
    F: Fn(PhaseSpacePoint) -> f64,
{
    let width = params.sector_width();
    (0..samples)
        .map(|i| {
            // golden-angle spiral
            let t = (i as f64 + 0.5) / samples as f64;
            let beta = PhaseSpacePoint::from_polar(r_max * t.sqrt(), 2.399_963_229_728_653 * i as f64);
            (f(beta.rotated(width)) - f(beta)).abs()
        })
        .fold(0.0, f64::max)
}

/// Positive-part integral along one ray.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RayPositivePart {
    /// `∫ r·ρ(r)·max(g(r), 0) dr`.
    pub integral: f64,
    /// `∫ r·ρ(r)·1[g(r) > 0] dr`.
    pub measure: f64,
}

/// Sign changes of `g` on `[0, r_max]`, located by a scan of step `step`
/// and refined by bisection to `tol`.
///
/// Regions of one sign narrower than `step` can be missed; their contribution
/// is bounded by the integrand times that width.
pub fn sign_changes<G>(mut g: G, r_max: f64, step: f64, tol: f64) -> Vec<f64>
where
    G: FnMut(f64) -> f64,
{
    let count = (r_max / step).ceil().max(1.0) as usize;
    let mut roots = Vec::new();
    let mut r_prev = 0.0;
    let mut pos_prev = g(0.0) > 0.0;
    for i in 1..=count {
        let r = (i as f64 * step).min(r_max);
        let pos = g(r) > 0.0;
        if pos != pos_prev {
            let (mut lo, mut hi) = (r_prev, r);
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                if (g(mid) > 0.0) == pos_prev {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        r_prev = r;
        pos_prev = pos;
    }
    roots
}

/// Integrates `r·ρ·max(g, 0)` along a ray, placing Gauss–Legendre nodes on
/// each sub-interval where `g > 0` so the kink at the border is resolved
/// exactly. `eval(r)` returns `(ρ(r), g(r))`.
pub fn positive_part_on_ray<E>(mut eval: E, r_max: f64, gauss: &GaussLegendre) -> RayPositivePart
where
    E: FnMut(f64) -> (f64, f64),
{
    let roots = sign_changes(|r| eval(r).1, r_max, BOUNDARY_SCAN_STEP, 1e-12);
    let mut breaks = Vec::with_capacity(roots.len() + 2);
    breaks.push(0.0);
    breaks.extend(roots);
    breaks.push(r_max);
    let mut out = RayPositivePart::default();
    for piece in breaks.windows(2) {
        let (lo, hi) = (piece[0], piece[1]);
        if hi <= lo || eval(0.5 * (lo + hi)).1 <= 0.0 {
            continue;
        }
        for (r, w) in gauss.mapped(lo, hi) {
            let (rho, g) = eval(r);
            out.integral += w * r * rho * g.max(0.0);
            if g > 0.0 {
                out.measure += w * r * rho;
            }
        }
    }
    out
}
