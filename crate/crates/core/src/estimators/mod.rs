//! Monte Carlo estimators.
//!
//! Replicate `r` of a run with seed `s` draws all of its randomness from
//! `RngKey::new(s, r)` and contributes integer counts only, so every
//! estimate is bit-identical for any number of worker threads.

mod criterion;
mod events;

pub use criterion::*;
pub use events::*;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{walk_cluster, Connectivity, Direction};
use crate::dynamics::{sample_clocks, DynParams};
use crate::error::{contract, Result, SdpError};
use crate::field::{sample_field, SiteField};
use crate::lattice::{rectangle_window, Rho, Site, Window};
use crate::rng::{hash_words, RngKey, StreamTag};
use crate::sdp::{sample_sdp_in, DestructionRule, SdpParams, Workspace};
use crate::stats::{Comparison, EstimateResult};

/// Runs `samples` replicates in parallel; `f` adds replicate `r`'s
/// contribution to a zeroed slice of `len` counters.
pub(crate) fn tally<F>(samples: u64, len: usize, f: F) -> Result<Vec<u64>>
where
    F: Fn(&mut Workspace, u64, &mut [u64]) -> Result<()> + Sync,
{
    (0..samples)
        .into_par_iter()
        .try_fold(
            || (Workspace::new(), vec![0u64; len]),
            |(mut ws, mut acc), r| {
                f(&mut ws, r, &mut acc)?;
                Ok::<_, SdpError>((ws, acc))
            },
        )
        .map(|res| res.map(|(_, acc)| acc))
        .try_reduce(
            || vec![0u64; len],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )
}

pub(crate) fn check_samples(samples: u64) -> Result<()> {
    if samples == 0 {
        return Err(contract("at least one sample is required"));
    }
    Ok(())
}

fn validate(params: SdpParams, rule: DestructionRule, samples: u64) -> Result<()> {
    SdpParams::new(params.p, params.delta)?;
    rule.validate()?;
    check_samples(samples)
}

fn describe(name: &str, params: SdpParams, rule: DestructionRule, extra: &str) -> String {
    format!("{name}(p={},delta={},{extra},rule={rule})", params.p, params.delta)
}

/// Whether the occupied 4-cluster of `o` reaches `∂B(o, n)`.
pub(crate) fn reaches_sphere(ws: &mut Workspace, z: &SiteField, o: Site, n: u32) -> bool {
    walk_cluster(z, o, |s| s.distance(o) <= n, |s| s.distance(o) == n, &mut ws.seen, &mut ws.queue)
}

/// Window `(2n+1)^2` centred at the origin.
pub fn theta_window(n: u32) -> Result<Window> {
    let r = i32::try_from(n).map_err(|_| contract("radius overflows i32"))?;
    Window::new(Site::new(-r, -r), 2 * n + 1, 2 * n + 1)
}

/// Probability that the origin's occupied cluster in `z` reaches
/// `∂B(O, n)`, the finite-volume stand-in for `θ(p, delta)`.
pub fn estimate_theta(params: SdpParams, n: u32, rule: DestructionRule, samples: u64, seed: u64) -> Result<EstimateResult> {
    validate(params, rule, samples)?;
    let region = theta_window(n)?;
    let o = Site::new(0, 0);
    let counts = tally(samples, 1, |ws, r, acc| {
        let s = sample_sdp_in(ws, &region, params, rule, RngKey::new(seed, r))?;
        acc[0] += reaches_sphere(ws, &s.z, o, n) as u64;
        Ok(())
    })?;
    Ok(EstimateResult::from_counts(describe("theta", params, rule, &format!("n={n}")), counts[0], samples, seed))
}

/// Occupied horizontal 4-crossing and vacant vertical 8-crossing of `z`.
pub(crate) fn crossing_pair(ws: &mut Workspace, z: &SiteField) -> (bool, bool) {
    let occ = ws.labeler.crossing(z, true, Connectivity::Four, Direction::Horizontal);
    let vac = ws.labeler.crossing(z, false, Connectivity::Eight, Direction::Vertical);
    (occ, vac)
}

/// Vacant vertical *-crossing of the sub-rectangle `[x0,x1) x [y0,y1)` of `z`.
pub(crate) fn vacant_crossing(
    ws: &mut Workspace,
    z: &SiteField,
    x0: u32,
    x1: u32,
    y0: u32,
    y1: u32,
    dir: Direction,
) -> Result<bool> {
    let part = z.crop(&z.window().sub(x0, x1, y0, y1)?)?;
    Ok(ws.labeler.crossing(&part, false, Connectivity::Eight, dir))
}

/// `f(rho, s)` together with the dual vacant crossing estimate `h(rho, s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub estimate: EstimateResult,
    pub dual: EstimateResult,
    /// Samples with both crossings or neither (must be zero).
    pub duality_violations: u64,
}

/// Occupied horizontal crossing of the `floor(rho s) x s` rectangle.
pub fn estimate_crossing(
    params: SdpParams,
    rho: Rho,
    s: u32,
    rule: DestructionRule,
    samples: u64,
    seed: u64,
) -> Result<CrossingReport> {
    validate(params, rule, samples)?;
    let region = rectangle_window(rho, s)?;
    let counts = tally(samples, 3, |ws, r, acc| {
        let sample = sample_sdp_in(ws, &region, params, rule, RngKey::new(seed, r))?;
        let (occ, vac) = crossing_pair(ws, &sample.z);
        acc[0] += occ as u64;
        acc[1] += vac as u64;
        acc[2] += (occ == vac) as u64;
        Ok(())
    })?;
    let extra = format!("rho={rho},s={s}");
    Ok(CrossingReport {
        estimate: EstimateResult::from_counts(describe("crossing", params, rule, &extra), counts[0], samples, seed),
        dual: EstimateResult::from_counts(describe("dual-crossing", params, rule, &extra), counts[1], samples, seed),
        duality_violations: counts[2],
    })
}

/// Crossing probability of the `floor(rho s) x s` rectangle under plain
/// Bernoulli(`density`) site percolation. Replicates are coupled across
/// densities through the shared uniforms of the `Initial` stream.
pub fn ordinary_crossing(density: f64, rho: Rho, s: u32, samples: u64, seed: u64) -> Result<EstimateResult> {
    SdpParams::new(density, 0.0)?;
    check_samples(samples)?;
    let region = rectangle_window(rho, s)?;
    let counts = tally(samples, 1, |ws, r, acc| {
        let x = sample_field(region, density, &RngKey::new(seed, r).stream(StreamTag::Initial))?;
        acc[0] += ws.labeler.crossing(&x, true, Connectivity::Four, Direction::Horizontal) as u64;
        Ok(())
    })?;
    Ok(EstimateResult::from_counts(format!("ordinary-crossing(d={density},rho={rho},s={s})"), counts[0], samples, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalePc {
    pub s: u32,
    pub pc: f64,
    pub bracket: (f64, f64),
}

/// Bisection estimate of the critical density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcEstimate {
    /// Midpoint of the final bracket at the largest scale.
    pub pc: f64,
    pub bracket: (f64, f64),
    pub s: u32,
    pub steps: u32,
    pub samples: u64,
    pub seed: u64,
    /// One bisection per requested scale, ascending in `s`.
    pub per_scale: Vec<ScalePc>,
}

impl PcEstimate {
    pub fn bracket_width(&self) -> f64 {
        self.bracket.1 - self.bracket.0
    }
}

pub const DEFAULT_PC_STEPS: u32 = 6;

/// Bisection on the density at which the square crossing probability of
/// ordinary percolation passes 1/2.
pub fn estimate_pc(s_list: &[u32], samples: u64, seed: u64) -> Result<PcEstimate> {
    estimate_pc_steps(s_list, DEFAULT_PC_STEPS, samples, seed)
}

pub fn estimate_pc_steps(s_list: &[u32], steps: u32, samples: u64, seed: u64) -> Result<PcEstimate> {
    check_samples(samples)?;
    let mut scales = s_list.to_vec();
    scales.sort_unstable();
    scales.dedup();
    if scales.is_empty() {
        return Err(contract("estimate_pc needs at least one scale"));
    }
    let mut per_scale = Vec::with_capacity(scales.len());
    for &s in &scales {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..steps {
            let mid = 0.5 * (lo + hi);
            if ordinary_crossing(mid, Rho::integer(1), s, samples, seed)?.point < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        per_scale.push(ScalePc { s, pc: 0.5 * (lo + hi), bracket: (lo, hi) });
    }
    let last = per_scale.last().unwrap().clone();
    Ok(PcEstimate { pc: last.pc, bracket: last.bracket, s: last.s, steps, samples, seed, per_scale })
}

/// Distribution of the number of distinct `z`-clusters joining the left
/// and right sides of an `n x n` window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    /// `histogram[c]` samples had exactly `c` crossing clusters.
    pub histogram: Vec<u64>,
    pub samples: u64,
    pub seed: u64,
}

impl UniquenessReport {
    pub fn fraction_at_least(&self, c: usize) -> f64 {
        self.histogram.iter().skip(c).sum::<u64>() as f64 / self.samples as f64
    }
}

pub fn uniqueness_diagnostic(
    params: SdpParams,
    n: u32,
    rule: DestructionRule,
    samples: u64,
    seed: u64,
) -> Result<UniquenessReport> {
    validate(params, rule, samples)?;
    let region = Window::at_origin(n, n)?;
    // at most ceil(n/2) disjoint horizontal crossings fit in n rows
    let buckets = n.div_ceil(2) as usize + 1;
    let histogram = tally(samples, buckets, |ws, r, acc| {
        let s = sample_sdp_in(ws, &region, params, rule, RngKey::new(seed, r))?;
        let c = ws.labeler.spanning_count(&s.z, true, Connectivity::Four, Direction::Horizontal);
        acc[c.min(buckets - 1)] += 1;
        Ok(())
    })?;
    Ok(UniquenessReport { histogram, samples, seed })
}

/// Comparison of the model with plain Bernoulli percolation at the
/// effective density `p + (1 - p) delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcriticalReport {
    pub sdp: EstimateResult,
    pub direct: EstimateResult,
    pub comparison: Comparison,
    /// Samples whose `z` differs from the direct field somewhere.
    pub differing_samples: u64,
    /// Fraction of initially occupied sites removed by the rule.
    pub destroyed_fraction: f64,
}

impl SubcriticalReport {
    pub fn consistent(&self, multiples: f64) -> bool {
        self.comparison.within(multiples)
    }
}

/// Direct field drawn from the `Enhancement` stream at the effective
/// density, so that at `p = 0` it coincides bit for bit with `z`.
pub fn subcritical_reduction_check(
    params: SdpParams,
    rho: Rho,
    s: u32,
    rule: DestructionRule,
    samples: u64,
    seed: u64,
) -> Result<SubcriticalReport> {
    validate(params, rule, samples)?;
    let region = rectangle_window(rho, s)?;
    let eff = params.effective_density();
    let counts = tally(samples, 5, |ws, r, acc| {
        let key = RngKey::new(seed, r);
        let sample = sample_sdp_in(ws, &region, params, rule, key)?;
        let direct = sample_field(region, eff, &key.stream(StreamTag::Enhancement))?;
        acc[0] += ws.labeler.crossing(&sample.z, true, Connectivity::Four, Direction::Horizontal) as u64;
        acc[1] += ws.labeler.crossing(&direct, true, Connectivity::Four, Direction::Horizontal) as u64;
        acc[2] += (sample.z != direct) as u64;
        let initial = sample.x.crop(&region)?;
        acc[3] += initial.count_occupied() as u64;
        acc[4] += initial.excess_over(&sample.x_star)? as u64;
        Ok(())
    })?;
    let extra = format!("rho={rho},s={s}");
    let sdp = EstimateResult::from_counts(describe("crossing", params, rule, &extra), counts[0], samples, seed);
    let direct = EstimateResult::from_counts(format!("ordinary-crossing(d={eff},{extra})"), counts[1], samples, seed);
    Ok(SubcriticalReport {
        comparison: Comparison::new(&sdp, &direct),
        sdp,
        direct,
        differing_samples: counts[2],
        destroyed_fraction: if counts[3] == 0 { 0.0 } else { counts[4] as f64 / counts[3] as f64 },
    })
}

/// Crossing estimates of `ω(τ, t)` for every entry of `times`, all
/// evaluated on the same clock field in each replicate.
pub fn estimate_dynamics_crossing(
    times: &[DynParams],
    rho: Rho,
    s: u32,
    rule: DestructionRule,
    samples: u64,
    seed: u64,
) -> Result<Vec<CrossingReport>> {
    rule.validate()?;
    check_samples(samples)?;
    if times.is_empty() {
        return Err(contract("no (tau, t) pairs given"));
    }
    let region = rectangle_window(rho, s)?;
    let clock_window = region.expand(rule.margin());
    let horizon = times.iter().map(|d| d.t).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let counts = tally(samples, 3 * times.len(), |ws, r, acc| {
        let clocks = sample_clocks(clock_window, horizon, &RngKey::new(seed, r).stream(StreamTag::Clock))?;
        for (j, &d) in times.iter().enumerate() {
            let z = clocks.evolve_destruct_in(ws, d, rule)?;
            let (occ, vac) = crossing_pair(ws, &z);
            acc[3 * j] += occ as u64;
            acc[3 * j + 1] += vac as u64;
            acc[3 * j + 2] += (occ == vac) as u64;
        }
        Ok(())
    })?;
    Ok(times
        .iter()
        .enumerate()
        .map(|(j, d)| {
            let extra = format!("tau={},t={},rho={rho},s={s},rule={rule}", d.tau, d.t);
            CrossingReport {
                estimate: EstimateResult::from_counts(format!("dynamics-crossing({extra})"), counts[3 * j], samples, seed),
                dual: EstimateResult::from_counts(format!("dynamics-dual-crossing({extra})"), counts[3 * j + 1], samples, seed),
                duality_violations: counts[3 * j + 2],
            }
        })
        .collect())
}

/// Crossing probabilities at two parameter points where the first field
/// dominates the second: `p2 >= p1` and `p2 + (1-p2) delta2 <= p1 + (1-p1) delta1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub dominating: EstimateResult,
    pub dominated: EstimateResult,
    pub comparison: Comparison,
}

impl DominationReport {
    pub fn holds(&self, multiples: f64) -> bool {
        self.comparison.not_below(multiples)
    }
}

pub fn domination_check(
    first: SdpParams,
    second: SdpParams,
    rho: Rho,
    s: u32,
    rule: DestructionRule,
    samples: u64,
    seed: u64,
) -> Result<DominationReport> {
    if !(second.p >= first.p && second.effective_density() <= first.effective_density()) {
        return Err(SdpError::InvalidConfig(format!(
            "({}, {}) does not dominate ({}, {})",
            first.p, first.delta, second.p, second.delta
        )));
    }
    let dominating = estimate_crossing(first, rho, s, rule, samples, seed)?.estimate;
    let dominated = estimate_crossing(second, rho, s, rule, samples, hash_words(&[seed, 1]))?.estimate;
    Ok(DominationReport { comparison: Comparison::new(&dominating, &dominated), dominating, dominated })
}
