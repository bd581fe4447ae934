//! The finite-size supercriticality criterion and the box events its proof
//! is built from.

use serde::{Deserialize, Serialize};

use super::{check_samples, estimate_crossing, tally, vacant_crossing, CrossingReport};
use crate::cluster::{Connectivity, Direction};
use crate::error::{contract, Result, SdpError};
use crate::lattice::{Rho, Site, Window};
use crate::rng::{hash_words, RngKey, SiteStream, StreamTag};
use crate::sdp::{sample_sdp_in, DestructionRule, SdpParams, Workspace};
use crate::stats::{wilson_interval, EstimateResult, Z95};

/// `alpha` is admissible iff `49 alpha^2 < alpha / 4`, i.e. `0 < alpha < 1/196`.
pub fn alpha_admissible(alpha: f64) -> bool {
    // divided through by alpha to avoid rounding at the endpoint
    alpha > 0.0 && 196.0 * alpha < 1.0
}

/// Smallest positive integer `N` with `exp(-N phi) < alpha / 4`.
pub fn n_hat(alpha: f64, phi: f64) -> Result<u32> {
    if !alpha_admissible(alpha) {
        return Err(SdpError::InvalidConfig(format!("alpha = {alpha} violates 49 alpha^2 < alpha/4")));
    }
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(SdpError::InvalidConfig(format!("decay rate must be positive and finite, got {phi}")));
    }
    let target = (4.0 / alpha).ln();
    let mut n = ((target / phi).floor() as u64).max(1);
    while n > 1 && ((n - 1) as f64) * phi > target {
        n -= 1;
    }
    while (n as f64) * phi <= target {
        n += 1;
    }
    u32::try_from(n).map_err(|_| SdpError::InvalidConfig(format!("N-hat = {n} overflows")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionConfig {
    pub alpha: f64,
    pub n: u32,
    pub n_hat: u32,
    pub phi_estimate: Option<f64>,
}

impl CriterionConfig {
    pub fn new(alpha: f64, n: u32, n_hat: u32, phi_estimate: Option<f64>) -> Result<Self> {
        if !alpha_admissible(alpha) {
            return Err(SdpError::InvalidConfig(format!(
                "alpha = {alpha} violates 49 alpha^2 < alpha/4 (need alpha < 1/196)"
            )));
        }
        if n == 0 || n_hat == 0 {
            return Err(SdpError::InvalidConfig("scales must be positive".into()));
        }
        Ok(Self { alpha, n, n_hat, phi_estimate })
    }

    /// Derives `n_hat` from a decay-rate estimate.
    pub fn from_phi(alpha: f64, n: u32, phi: f64) -> Result<Self> {
        Self::new(alpha, n, n_hat(alpha, phi)?, Some(phi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionVerdict {
    pub holds: bool,
    pub f3n: EstimateResult,
    /// `f3n.ci_low - (1 - alpha)`.
    pub margin: f64,
    /// `h(3, 3^k n)` for `k = 0, 1, 2`, when requested.
    pub scale_chain: Option<Vec<EstimateResult>>,
    pub alpha: f64,
    pub n: u32,
    pub n_hat: u32,
    pub phi_estimate: Option<f64>,
    pub duality_violations: u64,
}

/// Estimates `f(3, n)` and decides whether `f(3, n) > 1 - alpha` is
/// established at 95% confidence with `n >= n_hat`.
pub fn finite_size_criterion(
    params: SdpParams,
    cfg: &CriterionConfig,
    rule: DestructionRule,
    samples: u64,
    seed: u64,
) -> Result<CriterionVerdict> {
    finite_size_criterion_with_chain(params, cfg, rule, samples, None, seed)
}

/// As [`finite_size_criterion`], also estimating `h(3, 3n)` and `h(3, 9n)`
/// with `chain_samples` samples each. The chain is reported only.
pub fn finite_size_criterion_with_chain(
    params: SdpParams,
    cfg: &CriterionConfig,
    rule: DestructionRule,
    samples: u64,
    chain_samples: Option<u64>,
    seed: u64,
) -> Result<CriterionVerdict> {
    let cfg = CriterionConfig::new(cfg.alpha, cfg.n, cfg.n_hat, cfg.phi_estimate)?;
    let CrossingReport { estimate: f3n, dual, duality_violations } =
        estimate_crossing(params, Rho::integer(3), cfg.n, rule, samples, seed)?;
    let scale_chain = match chain_samples {
        None => None,
        Some(m) => {
            let mut chain = vec![dual];
            for k in 1..=2u32 {
                let n = cfg.n.checked_mul(3u32.pow(k)).ok_or_else(|| contract("scale overflow"))?;
                chain.push(estimate_crossing(params, Rho::integer(3), n, rule, m, hash_words(&[seed, k as u64]))?.dual);
            }
            Some(chain)
        }
    };
    let threshold = 1.0 - cfg.alpha;
    Ok(CriterionVerdict {
        holds: f3n.ci_low > threshold && cfg.n >= cfg.n_hat,
        margin: f3n.ci_low - threshold,
        f3n,
        scale_chain,
        alpha: cfg.alpha,
        n: cfg.n,
        n_hat: cfg.n_hat,
        phi_estimate: cfg.phi_estimate,
        duality_violations,
    })
}

/// Candidate scales `16, 32, ..., 512`.
pub fn default_scales() -> Vec<u32> {
    (4..=9).map(|e| 1u32 << e).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSearchConfig {
    pub alpha: f64,
    pub n_hat: u32,
    pub phi_estimate: Option<f64>,
    pub scales: Vec<u32>,
    pub samples: u64,
    /// Samples of the screening run at each scale (0 disables screening).
    pub pilot_samples: u64,
    pub seed: u64,
}

/// Quantile used to screen out hopeless scales from a pilot run: a scale
/// is skipped when even this wide upper bound stays below `1 - alpha`.
pub const PILOT_Z: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleStatus {
    BelowNHat,
    ScreenedOut,
    Evaluated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleOutcome {
    pub n: u32,
    pub status: ScaleStatus,
    pub pilot: Option<EstimateResult>,
    pub verdict: Option<CriterionVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSearch {
    pub outcomes: Vec<ScaleOutcome>,
    /// Smallest scale whose verdict holds.
    pub found: Option<u32>,
}

/// Scans the scales in ascending order and stops at the first one whose
/// verdict holds. Scale `n` uses seed `hash(seed, n)` for the full run
/// and `hash(seed, n, 1)` for its pilot.
pub fn scale_search(params: SdpParams, rule: DestructionRule, cfg: &ScaleSearchConfig) -> Result<ScaleSearch> {
    check_samples(cfg.samples)?;
    let mut scales = cfg.scales.clone();
    scales.sort_unstable();
    scales.dedup();
    if scales.is_empty() {
        return Err(SdpError::InvalidConfig("no scales to search".into()));
    }
    let mut outcomes = Vec::new();
    for n in scales {
        let config = CriterionConfig::new(cfg.alpha, n, cfg.n_hat, cfg.phi_estimate)?;
        if n < cfg.n_hat {
            outcomes.push(ScaleOutcome { n, status: ScaleStatus::BelowNHat, pilot: None, verdict: None });
            continue;
        }
        let mut pilot = None;
        if cfg.pilot_samples > 0 {
            let p = estimate_crossing(params, Rho::integer(3), n, rule, cfg.pilot_samples, hash_words(&[cfg.seed, n as u64, 1]))?
                .estimate;
            let upper = wilson_interval(p.successes, p.n_samples, PILOT_Z).1;
            if upper < 1.0 - cfg.alpha {
                outcomes.push(ScaleOutcome { n, status: ScaleStatus::ScreenedOut, pilot: Some(p), verdict: None });
                continue;
            }
            pilot = Some(p);
        }
        let verdict = finite_size_criterion(params, &config, rule, cfg.samples, hash_words(&[cfg.seed, n as u64]))?;
        let holds = verdict.holds;
        outcomes.push(ScaleOutcome { n, status: ScaleStatus::Evaluated, pilot, verdict: Some(verdict) });
        if holds {
            return Ok(ScaleSearch { outcomes, found: Some(n) });
        }
    }
    Ok(ScaleSearch { outcomes, found: None })
}

/// Probability that the origin's cluster is finite but reaches distance
/// `k`, for one value of `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub k: u32,
    pub estimate: EstimateResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiEstimate {
    pub p: f64,
    /// Fitted decay rate, or a lower bound when `lower_bound` is set.
    pub phi: f64,
    pub lower_bound: bool,
    pub intercept: Option<f64>,
    /// Standard error of the fitted slope (three or more fitted points).
    pub std_error: Option<f64>,
    pub points: Vec<DecayPoint>,
    /// `ln q_k - fit` for the fitted points.
    pub residuals: Vec<f64>,
    /// Half-width of the square window every event is evaluated in.
    pub window_radius: u32,
}

/// Walks the occupied cluster of the origin in the square `[-r, r]^2`,
/// drawing sites lazily from `stream`. Returns the largest distance from
/// the origin reached, or `None` when the origin is vacant or the cluster
/// touches the square's boundary.
fn finite_cluster_radius(ws: &mut Workspace, stream: &SiteStream, p: f64, r: i32) -> Option<u32> {
    let open = |s: Site| stream.uniform(s) < p;
    let o = Site::new(0, 0);
    if !open(o) {
        return None;
    }
    let side = (2 * r + 1) as usize;
    let idx = |s: Site| (s.y + r) as usize * side + (s.x + r) as usize;
    ws.seen.clear();
    ws.seen.resize(side * side, false);
    ws.queue.clear();
    ws.seen[idx(o)] = true;
    ws.queue.push_back(o);
    let mut radius = 0;
    while let Some(s) = ws.queue.pop_front() {
        if s.x.abs() == r || s.y.abs() == r {
            return None;
        }
        radius = radius.max(s.distance(o));
        for (dx, dy) in [(1, 0), (0, 1), (-1, 0), (0, -1)] {
            let t = Site::new(s.x + dx, s.y + dy);
            if !ws.seen[idx(t)] && open(t) {
                ws.seen[idx(t)] = true;
                ws.queue.push_back(t);
            }
        }
    }
    Some(radius)
}

/// Estimates `q_k` for each `k` under Bernoulli(`p`) percolation and fits
/// `ln q_k = a - phi k` by least squares over the `k` with `q_k > 0`.
///
/// All `k` share one window `[-2K, 2K]^2` with `K = max k`, so the events
/// are nested and the estimates are pointwise decreasing in `k`. With fewer
/// than two positive estimates the rate cannot be fitted and a lower bound
/// `max_k -ln(U_k) / k` is returned instead, where `U_k` is the upper 95%
/// Wilson bound of `q_k`.
pub fn estimate_phi(p: f64, k_list: &[u32], samples: u64, seed: u64) -> Result<PhiEstimate> {
    SdpParams::new(p, 0.0)?;
    check_samples(samples)?;
    let mut ks = k_list.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let k_max = *ks.last().ok_or_else(|| contract("no cutoffs given"))?;
    if k_max == 0 || k_max > 1 << 12 {
        return Err(contract(format!("largest cutoff must be in 1..=4096, got {k_max}")));
    }
    let r = 2 * k_max as i32;
    let counts = tally(samples, ks.len(), |ws, rep, acc| {
        let stream = RngKey::new(seed, rep).stream(StreamTag::Initial);
        if let Some(radius) = finite_cluster_radius(ws, &stream, p, r) {
            for (slot, &k) in acc.iter_mut().zip(&ks) {
                *slot += (radius >= k) as u64;
            }
        }
        Ok(())
    })?;
    let points: Vec<DecayPoint> = ks
        .iter()
        .zip(&counts)
        .map(|(&k, &c)| DecayPoint { k, estimate: EstimateResult::from_counts(format!("blocked(p={p},k={k})"), c, samples, seed) })
        .collect();
    let fit: Vec<(f64, f64)> =
        points.iter().filter(|q| q.estimate.successes > 0).map(|q| (q.k as f64, q.estimate.point.ln())).collect();
    if fit.len() < 2 || fit.iter().all(|(x, _)| *x == fit[0].0) {
        let phi = points
            .iter()
            .filter(|q| q.k > 0)
            .map(|q| -wilson_interval(q.estimate.successes, samples, Z95).1.ln() / q.k as f64)
            .fold(0.0, f64::max);
        return Ok(PhiEstimate {
            p,
            phi,
            lower_bound: true,
            intercept: None,
            std_error: None,
            points,
            residuals: Vec::new(),
            window_radius: r as u32,
        });
    }
    let m = fit.len() as f64;
    let mx = fit.iter().map(|(x, _)| x).sum::<f64>() / m;
    let my = fit.iter().map(|(_, y)| y).sum::<f64>() / m;
    let sxx: f64 = fit.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let sxy: f64 = fit.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = fit.iter().map(|(x, y)| y - (intercept + slope * x)).collect();
    let std_error = (fit.len() > 2).then(|| (residuals.iter().map(|e| e * e).sum::<f64>() / (m - 2.0) / sxx).sqrt());
    Ok(PhiEstimate {
        p,
        phi: -slope,
        lower_bound: false,
        intercept: Some(intercept),
        std_error,
        points,
        residuals,
        window_radius: r as u32,
    })
}

/// Vertical vacant *-crossings of the `9n x 3n` box (A), of its bottom
/// third (B) and of its top third (C), evaluated on the same field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbcReport {
    pub a: EstimateResult,
    pub b: EstimateResult,
    pub c: EstimateResult,
    /// Samples with A but not both B and C (must be zero).
    pub inclusion_violations: u64,
}

pub fn abc_event_check(params: SdpParams, n: u32, rule: DestructionRule, samples: u64, seed: u64) -> Result<AbcReport> {
    SdpParams::new(params.p, params.delta)?;
    rule.validate()?;
    check_samples(samples)?;
    let region = Window::at_origin(9 * n, 3 * n)?;
    let counts = tally(samples, 4, |ws, r, acc| {
        let z = sample_sdp_in(ws, &region, params, rule, RngKey::new(seed, r))?.z;
        let a = ws.labeler.crossing(&z, false, Connectivity::Eight, Direction::Vertical);
        let b = vacant_crossing(ws, &z, 0, 9 * n, 0, n, Direction::Vertical)?;
        let c = vacant_crossing(ws, &z, 0, 9 * n, 2 * n, 3 * n, Direction::Vertical)?;
        for (slot, hit) in acc.iter_mut().zip([a, b, c, a && !(b && c)]) {
            *slot += hit as u64;
        }
        Ok(())
    })?;
    let est = |name: &str, c: u64| {
        EstimateResult::from_counts(format!("{name}(p={},delta={},n={n},rule={rule})", params.p, params.delta), c, samples, seed)
    };
    Ok(AbcReport {
        a: est("event-a", counts[0]),
        b: est("event-b", counts[1]),
        c: est("event-c", counts[2]),
        inclusion_violations: counts[3],
    })
}

/// The sub-rectangles of `[0, 9n) x [0, n)` one of which is crossed by
/// vacant *-paths whenever the whole box is crossed vertically: four
/// overlapping `3n x n` strips crossed vertically and the three `n x n`
/// squares between their overlaps crossed horizontally.
pub fn union_bound_rectangles(n: u32) -> [(u32, u32, Direction); 7] {
    [
        (0, 3 * n, Direction::Vertical),
        (2 * n, 5 * n, Direction::Vertical),
        (4 * n, 7 * n, Direction::Vertical),
        (6 * n, 9 * n, Direction::Vertical),
        (2 * n, 3 * n, Direction::Horizontal),
        (4 * n, 5 * n, Direction::Horizontal),
        (6 * n, 7 * n, Direction::Horizontal),
    ]
}

/// `lhs <= rhs + multiples * std_error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub std_error: f64,
    pub holds: bool,
}

impl BoundCheck {
    fn new(lhs: f64, rhs: f64, std_error: f64, multiples: f64) -> Self {
        Self { lhs, rhs, std_error, holds: lhs <= rhs + multiples * std_error }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubadditivityReport {
    pub h9: EstimateResult,
    pub h3: EstimateResult,
    pub h1: EstimateResult,
    /// Samples where the `9n x n` box is crossed but none of the seven
    /// sub-rectangles is (must be zero).
    pub witness_violations: u64,
    /// `h(9,n) <= 4 h(3,n) + 3 h(1,n)`.
    pub four_three: BoundCheck,
    /// `h(9,n) <= 7 h(3,n)`.
    pub seven: BoundCheck,
}

/// Tolerance of the statistical bounds, in standard errors.
pub const BOUND_SE: f64 = 4.0;

pub fn subadditivity_check(
    params: SdpParams,
    n: u32,
    rule: DestructionRule,
    samples: u64,
    seed: u64,
) -> Result<SubadditivityReport> {
    SdpParams::new(params.p, params.delta)?;
    rule.validate()?;
    check_samples(samples)?;
    let region = Window::at_origin(9 * n, n)?;
    let rects = union_bound_rectangles(n);
    let counts = tally(samples, 2, |ws, r, acc| {
        let z = sample_sdp_in(ws, &region, params, rule, RngKey::new(seed, r))?.z;
        let b = ws.labeler.crossing(&z, false, Connectivity::Eight, Direction::Vertical);
        acc[0] += b as u64;
        if b {
            let mut witnessed = false;
            for &(x0, x1, dir) in &rects {
                if vacant_crossing(ws, &z, x0, x1, 0, n, dir)? {
                    witnessed = true;
                    break;
                }
            }
            acc[1] += !witnessed as u64;
        }
        Ok(())
    })?;
    let h9 = EstimateResult::from_counts(
        format!("vacant-crossing(p={},delta={},rho=9,s={n},rule={rule})", params.p, params.delta),
        counts[0],
        samples,
        seed,
    );
    let h3 = estimate_crossing(params, Rho::integer(3), n, rule, samples, hash_words(&[seed, 3]))?.dual;
    let h1 = estimate_crossing(params, Rho::integer(1), n, rule, samples, hash_words(&[seed, 1]))?.dual;
    let (s9, s3, s1) = (h9.std_error(), h3.std_error(), h1.std_error());
    let four_three = BoundCheck::new(
        h9.point,
        4.0 * h3.point + 3.0 * h1.point,
        (s9 * s9 + 16.0 * s3 * s3 + 9.0 * s1 * s1).sqrt(),
        BOUND_SE,
    );
    let seven = BoundCheck::new(h9.point, 7.0 * h3.point, (s9 * s9 + 49.0 * s3 * s3).sqrt(), BOUND_SE);
    Ok(SubadditivityReport { h9, h3, h1, witness_violations: counts[1], four_three, seven })
}

/// `h(3, 3n) - 49 h(3, n)^2`, which bounds `exp(-n phi)` from below when
/// positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionAudit {
    pub h_large: EstimateResult,
    pub h_small: EstimateResult,
    pub residual: f64,
    /// Delta-method standard error of the residual.
    pub std_error: f64,
    pub ci: (f64, f64),
}

pub fn recursion_audit(params: SdpParams, n: u32, rule: DestructionRule, samples: u64, seed: u64) -> Result<RecursionAudit> {
    let h_large = estimate_crossing(params, Rho::integer(3), 3 * n, rule, samples, seed)?.dual;
    let h_small = estimate_crossing(params, Rho::integer(3), n, rule, samples, hash_words(&[seed, 1]))?.dual;
    let residual = h_large.point - 49.0 * h_small.point * h_small.point;
    let std_error = (h_large.std_error().powi(2) + (98.0 * h_small.point * h_small.std_error()).powi(2)).sqrt();
    Ok(RecursionAudit {
        residual,
        std_error,
        ci: (residual - Z95 * std_error, residual + Z95 * std_error),
        h_large,
        h_small,
    })
}
