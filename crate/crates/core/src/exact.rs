//! Exact law of the finite-range model on tiny regions by total enumeration.
//!
//! Only the initial sites within distance `k` of the region (the "support")
//! influence `z` on the region, so the sum runs over the `2^|support|`
//! initial configurations, collapses them onto the surviving pattern on the
//! region, and folds in the enhancement field analytically. All sums are
//! compensated.

use std::collections::{HashSet, VecDeque};

use crate::error::{contract, Result, SdpError};
use crate::field::SiteField;
use crate::lattice::{Ball, Site, Window};
use crate::sdp::{DestructionRule, SdpParams};
use crate::stats::CompensatedSum;

pub const MAX_REGION_SITES: usize = 16;
pub const MAX_SUPPORT_SITES: usize = 24;

/// Distribution of `z` restricted to `region`, indexed by region bitmask
/// (bit `i` = flat index `i`).
#[derive(Debug, Clone)]
pub struct ExactLaw {
    region: Window,
    probs: Vec<f64>,
}

impl ExactLaw {
    pub fn region(&self) -> &Window {
        &self.region
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn probability(&self, predicate: impl Fn(&SiteField) -> bool) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(m, _)| predicate(&SiteField::from_mask(self.region, *m as u64)))
            .map(|(_, &q)| q)
            .collect::<CompensatedSum>()
            .value()
    }

    /// Probability that `z` takes the given values at the given sites.
    pub fn cylinder(&self, pattern: &[(Site, bool)]) -> Result<f64> {
        let mut care = 0usize;
        let mut want = 0usize;
        for &(s, v) in pattern {
            let i = self.region.index(s).ok_or_else(|| contract(format!("site {s} outside region")))?;
            care |= 1 << i;
            want |= (v as usize) << i;
        }
        Ok(self
            .probs
            .iter()
            .enumerate()
            .filter(|(m, _)| m & care == want)
            .map(|(_, &q)| q)
            .collect::<CompensatedSum>()
            .value())
    }
}

struct RegionSite {
    bit: u32,
    ball: u32,
    sphere: u32,
}

/// Exact law of the finite-range model on `region` with cutoff `k`.
pub fn exact_z_law(region: &Window, params: SdpParams, k: u32) -> Result<ExactLaw> {
    SdpParams::new(params.p, params.delta)?;
    DestructionRule::FiniteRange { k }.validate()?;
    let r = region.len();
    if r > MAX_REGION_SITES {
        return Err(SdpError::BudgetExceeded(format!("region has {r} sites, limit {MAX_REGION_SITES}")));
    }
    let outer = region.expand(k);
    let support: Vec<Site> =
        outer.sites().filter(|s| region.sites().any(|i| i.distance(*s) <= k)).collect();
    let m = support.len();
    if m > MAX_SUPPORT_SITES {
        return Err(SdpError::BudgetExceeded(format!(
            "{m} initial sites influence the region, limit {MAX_SUPPORT_SITES}"
        )));
    }
    let bit_of = |s: Site| support.iter().position(|t| *t == s).map(|i| 1u32 << i).unwrap_or(0);
    let adjacency: Vec<u32> = support
        .iter()
        .map(|s| {
            [(1, 0), (0, 1), (-1, 0), (0, -1)]
                .iter()
                .map(|(dx, dy)| bit_of(Site::new(s.x + dx, s.y + dy)))
                .fold(0, |a, b| a | b)
        })
        .collect();
    let sites: Vec<RegionSite> = region
        .sites()
        .map(|i| {
            let ball = Ball::new(i, k);
            RegionSite {
                bit: bit_of(i),
                ball: ball.sites().map(bit_of).fold(0, |a, b| a | b),
                sphere: ball.boundary().into_iter().map(bit_of).fold(0, |a, b| a | b),
            }
        })
        .collect();

    let weight_by_count: Vec<f64> =
        (0..=m).map(|c| params.p.powi(c as i32) * (1.0 - params.p).powi((m - c) as i32)).collect();
    let mut survivors = vec![CompensatedSum::default(); 1 << r];
    for x in 0..(1u32 << m) {
        let mut pattern = 0usize;
        for (idx, rs) in sites.iter().enumerate() {
            if x & rs.bit == 0 {
                continue;
            }
            let allowed = x & rs.ball;
            let mut cluster = rs.bit;
            let mut frontier = rs.bit;
            while frontier != 0 {
                let mut grown = 0u32;
                let mut f = frontier;
                while f != 0 {
                    let b = f.trailing_zeros();
                    grown |= adjacency[b as usize];
                    f &= f - 1;
                }
                frontier = grown & allowed & !cluster;
                cluster |= frontier;
            }
            if cluster & rs.sphere == 0 {
                pattern |= 1 << idx;
            }
        }
        survivors[pattern].add(weight_by_count[x.count_ones() as usize]);
    }
    let survivors: Vec<f64> = survivors.iter().map(|s| s.value()).collect();

    // z = x_star | y with y ~ Bernoulli(delta)^r:
    // P(z) = (1-delta)^(r-|z|) * sum_{a subset z} W(a) delta^(|z|-|a|)
    let d = params.delta;
    let mut probs = vec![0.0; 1 << r];
    for (z, slot) in probs.iter_mut().enumerate() {
        let nz = (z as u32).count_ones() as i32;
        let mut acc = CompensatedSum::default();
        let mut a = z;
        loop {
            let w = survivors[a];
            if w != 0.0 {
                acc.add(w * d.powi(nz - (a as u32).count_ones() as i32));
            }
            if a == 0 {
                break;
            }
            a = (a - 1) & z;
        }
        *slot = acc.value() * (1.0 - d).powi(r as i32 - nz);
    }
    Ok(ExactLaw { region: *region, probs })
}

/// Exact probability of `predicate(z)` under the finite-range model.
pub fn enumerate_exact(
    region: &Window,
    params: SdpParams,
    rule: DestructionRule,
    predicate: impl Fn(&SiteField) -> bool,
) -> Result<f64> {
    match rule {
        DestructionRule::FiniteRange { k } => Ok(exact_z_law(region, params, k)?.probability(predicate)),
        other => Err(SdpError::InvalidConfig(format!("exact enumeration supports finite-range rules only, got {other}"))),
    }
}

/// `P(O <-> ∂B(O, k))` for Bernoulli(`p`) site percolation, by enumerating
/// every configuration of the ball.
pub fn arm_probability_exact(p: f64, k: u32) -> Result<f64> {
    let ball = Ball::new(Site::new(0, 0), k);
    let sites: Vec<Site> = ball.sites().collect();
    if sites.len() > MAX_SUPPORT_SITES {
        return Err(SdpError::BudgetExceeded(format!("ball of radius {k} has {} sites", sites.len())));
    }
    let origin = sites.iter().position(|s| *s == Site::new(0, 0)).unwrap();
    let n = sites.len();
    let mut total = CompensatedSum::default();
    for mask in 0u64..1 << n {
        if mask >> origin & 1 == 0 {
            continue;
        }
        let open: HashSet<Site> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| sites[i]).collect();
        let mut seen = HashSet::from([Site::new(0, 0)]);
        let mut queue = VecDeque::from([Site::new(0, 0)]);
        let mut hit = k == 0;
        while let Some(s) = queue.pop_front() {
            if ball.on_boundary(s) {
                hit = true;
                break;
            }
            for t in [(1, 0), (0, 1), (-1, 0), (0, -1)].map(|(dx, dy)| Site::new(s.x + dx, s.y + dy)) {
                if open.contains(&t) && seen.insert(t) {
                    queue.push_back(t);
                }
            }
        }
        if hit {
            let c = mask.count_ones() as i32;
            total.add(p.powi(c) * (1.0 - p).powi(n as i32 - c));
        }
    }
    Ok(total.value())
}
