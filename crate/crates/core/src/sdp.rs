//! The self-destructive percolation transform.
//!
//! A draw consists of an initial Bernoulli(p) field `x`, an independent
//! Bernoulli(delta) enhancement field `y`, the field `x_star` obtained from
//! `x` by vacating every "infinite" occupied cluster, and the final field
//! `z = x_star | y`. What counts as infinite on a finite window is set by a
//! [`DestructionRule`].

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::{walk_cluster, Connectivity, Labeler, NO_LABEL};
use crate::error::{check_probability, contract, Result, SdpError};
use crate::field::{sample_field, SiteField};
use crate::lattice::{Site, Window};
use crate::rng::{RngKey, StreamTag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpParams {
    pub p: f64,
    pub delta: f64,
}

impl SdpParams {
    pub fn new(p: f64, delta: f64) -> Result<Self> {
        check_probability("p", p)?;
        check_probability("delta", delta)?;
        Ok(Self { p, delta })
    }

    /// Density of the Bernoulli field that `x | y` would give without
    /// destruction.
    pub fn effective_density(&self) -> f64 {
        self.p + (1.0 - self.p) * self.delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DestructionRule {
    /// A site is vacated iff its occupied cluster reaches L1 distance `k`.
    /// Exactly the finite-range model; needs a margin of `k` sites.
    FiniteRange { k: u32 },
    /// A site is vacated iff its occupied cluster touches the outer ring of
    /// the sampled window.
    WindowBoundary,
    /// No destruction: ordinary percolation.
    None,
}

impl DestructionRule {
    pub fn margin(&self) -> u32 {
        match self {
            DestructionRule::FiniteRange { k } => *k,
            _ => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DestructionRule::FiniteRange { k: 0 } => {
                Err(SdpError::InvalidConfig("finite-range cutoff k must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Parses the CLI spelling; `k` is used by `finite-range` only.
    pub fn parse_with_k(name: &str, k: u32) -> Result<Self> {
        let rule = match name.parse()? {
            DestructionRule::FiniteRange { .. } => DestructionRule::FiniteRange { k },
            other => other,
        };
        rule.validate()?;
        Ok(rule)
    }
}

impl fmt::Display for DestructionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DestructionRule::FiniteRange { k } => write!(f, "finite-range(k={k})"),
            DestructionRule::WindowBoundary => f.write_str("window-boundary"),
            DestructionRule::None => f.write_str("none"),
        }
    }
}

impl FromStr for DestructionRule {
    type Err = SdpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "finite-range" => Ok(DestructionRule::FiniteRange { k: 1 }),
            "window-boundary" => Ok(DestructionRule::WindowBoundary),
            "none" => Ok(DestructionRule::None),
            other => Err(SdpError::InvalidConfig(format!("unknown destruction rule {other:?}"))),
        }
    }
}

/// Scratch buffers reused across samples.
#[derive(Debug, Default)]
pub struct Workspace {
    pub(crate) labeler: Labeler,
    pub(crate) seen: Vec<bool>,
    pub(crate) queue: VecDeque<Site>,
    marks: Vec<bool>,
}

impl Workspace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn labeler(&mut self) -> &mut Labeler {
        &mut self.labeler
    }
}

/// Applies `rule` to `x` and returns the surviving field on `region`.
pub fn destroy(x: &SiteField, rule: DestructionRule, region: &Window) -> Result<SiteField> {
    destroy_in(&mut Workspace::new(), x, rule, region)
}

pub fn destroy_in(ws: &mut Workspace, x: &SiteField, rule: DestructionRule, region: &Window) -> Result<SiteField> {
    rule.validate()?;
    let win = *x.window();
    if !win.contains_window(&region.expand(rule.margin())) {
        return Err(contract(format!(
            "region {}x{} at {} plus margin {} does not fit the sampled {}x{} window at {}",
            region.width,
            region.height,
            region.origin,
            rule.margin(),
            win.width,
            win.height,
            win.origin
        )));
    }
    match rule {
        DestructionRule::None => x.crop(region),
        DestructionRule::WindowBoundary => {
            let labels = ws.labeler.label(x, true, Connectivity::Four);
            ws.marks.clear();
            ws.marks.resize(win.len(), false);
            let (w, h) = (win.width as usize, win.height as usize);
            let ring = (0..w).flat_map(|c| [c, (h - 1) * w + c]).chain((0..h).flat_map(|r| [r * w, r * w + w - 1]));
            for i in ring {
                if labels[i] != NO_LABEL {
                    ws.marks[labels[i] as usize] = true;
                }
            }
            let mut out = x.clone();
            for (i, bit) in out.bits_mut().iter_mut().enumerate() {
                if *bit && ws.marks[labels[i] as usize] {
                    *bit = false;
                }
            }
            out.crop(region)
        }
        DestructionRule::FiniteRange { k } => {
            // A cluster with at most k sites cannot reach distance k.
            let labels = ws.labeler.label(x, true, Connectivity::Four).to_vec();
            ws.marks.clear();
            ws.marks.resize(win.len(), false);
            let mut sizes = vec![0u32; win.len()];
            for &l in labels.iter().filter(|&&l| l != NO_LABEL) {
                sizes[l as usize] += 1;
            }
            let mut out = x.crop(region)?;
            for idx in 0..region.len() {
                let i = region.site(idx);
                let l = labels[win.index_unchecked(i)];
                if l == NO_LABEL || sizes[l as usize] <= k {
                    continue;
                }
                let reaches = walk_cluster(
                    x,
                    i,
                    |s| s.distance(i) <= k,
                    |s| s.distance(i) == k,
                    &mut ws.seen,
                    &mut ws.queue,
                );
                if reaches {
                    out.bits_mut()[idx] = false;
                }
            }
            Ok(out)
        }
    }
}

/// One draw `(x, y, x_star, z)` of the model on `region`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpSample {
    /// Initial field on the region plus the rule's margin.
    pub x: SiteField,
    pub y: SiteField,
    pub x_star: SiteField,
    pub z: SiteField,
    pub rule: DestructionRule,
    pub params: SdpParams,
}

/// Draws `x` on `region` grown by the rule's margin from the `Initial`
/// stream and `y` on `region` from the `Enhancement` stream of `key`.
pub fn sample_sdp(region: &Window, params: SdpParams, rule: DestructionRule, key: RngKey) -> Result<SdpSample> {
    sample_sdp_in(&mut Workspace::new(), region, params, rule, key)
}

pub fn sample_sdp_in(
    ws: &mut Workspace,
    region: &Window,
    params: SdpParams,
    rule: DestructionRule,
    key: RngKey,
) -> Result<SdpSample> {
    SdpParams::new(params.p, params.delta)?;
    let sampled = region.expand(rule.margin());
    let x = sample_field(sampled, params.p, &key.stream(StreamTag::Initial))?;
    let y = sample_field(*region, params.delta, &key.stream(StreamTag::Enhancement))?;
    let x_star = destroy_in(ws, &x, rule, region)?;
    let z = x_star.or(&y)?;
    Ok(SdpSample { x, y, x_star, z, rule, params })
}

/// `P(Z_O = 1) = delta + (1 - delta)(p - pi)`, where `pi` is the probability
/// that the origin's initial cluster is destroyed.
pub fn occupancy_identity(params: SdpParams, pi_k: f64) -> Result<f64> {
    SdpParams::new(params.p, params.delta)?;
    if !(0.0..=params.p).contains(&pi_k) {
        return Err(contract(format!("destruction probability {pi_k} must lie in [0, p = {}]", params.p)));
    }
    Ok(params.delta + (1.0 - params.delta) * (params.p - pi_k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn window(w: u32, h: u32) -> Window {
        Window::at_origin(w, h).unwrap()
    }

    #[test]
    fn destroy_examples() {
        let w = window(6, 5);
        let full = SiteField::occupied(w);
        assert_eq!(destroy(&full, DestructionRule::WindowBoundary, &w).unwrap().count_occupied(), 0);
        for rule in [DestructionRule::WindowBoundary, DestructionRule::None, DestructionRule::FiniteRange { k: 1 }] {
            let region = w.inset(rule.margin()).unwrap();
            assert_eq!(destroy(&SiteField::vacant(w), rule, &region).unwrap().count_occupied(), 0);
        }
        let lone = SiteField::from_fn(w, |s| s == Site::new(2, 2));
        for k in 1..=2 {
            let region = w.inset(k).unwrap();
            let out = destroy(&lone, DestructionRule::FiniteRange { k }, &region).unwrap();
            assert_eq!(out, lone.crop(&region).unwrap());
        }
        assert_eq!(destroy(&full, DestructionRule::None, &w).unwrap(), full);
    }

    #[test]
    fn destroy_requires_margin() {
        let w = window(5, 5);
        let x = SiteField::occupied(w);
        assert!(matches!(
            destroy(&x, DestructionRule::FiniteRange { k: 1 }, &w),
            Err(SdpError::ContractViolation(_))
        ));
        assert!(destroy(&x, DestructionRule::FiniteRange { k: 0 }, &w).is_err());
    }

    #[test]
    fn finite_range_k1_keeps_exactly_isolated_sites() {
        let w = window(7, 7);
        let region = w.inset(1).unwrap();
        for rep in 0..50 {
            let x = sample_field(w, 0.45, &RngKey::new(9, rep).stream(StreamTag::Initial)).unwrap();
            let out = destroy(&x, DestructionRule::FiniteRange { k: 1 }, &region).unwrap();
            for s in region.sites() {
                let isolated = x.get(s)
                    && [(1, 0), (0, 1), (-1, 0), (0, -1)].iter().all(|(dx, dy)| !x.get(Site::new(s.x + dx, s.y + dy)));
                assert_eq!(out.get(s), isolated);
            }
        }
    }

    #[test]
    fn sample_sdp_degenerate_parameters() {
        let region = Window::new(Site::new(-3, 2), 12, 9).unwrap();
        for rule in [DestructionRule::WindowBoundary, DestructionRule::FiniteRange { k: 2 }, DestructionRule::None] {
            let key = RngKey::new(31, 4);
            let s = sample_sdp(&region, SdpParams::new(0.0, 0.35).unwrap(), rule, key).unwrap();
            let direct = sample_field(region, 0.35, &key.stream(StreamTag::Enhancement)).unwrap();
            assert_eq!(s.z, direct);
            let s = sample_sdp(&region, SdpParams::new(0.7, 1.0).unwrap(), rule, key).unwrap();
            assert_eq!(s.z.count_occupied(), region.len());
        }
    }

    #[test]
    fn occupancy_identity_examples() {
        assert_eq!(occupancy_identity(SdpParams::new(0.4, 1.0).unwrap(), 0.1).unwrap(), 1.0);
        assert_eq!(occupancy_identity(SdpParams::new(0.0, 0.3).unwrap(), 0.0).unwrap(), 0.3);
        assert!(occupancy_identity(SdpParams::new(0.2, 0.3).unwrap(), 0.25).is_err());
    }

    #[test]
    fn rule_parsing() {
        assert_eq!(DestructionRule::parse_with_k("finite-range", 3).unwrap(), DestructionRule::FiniteRange { k: 3 });
        assert_eq!(DestructionRule::parse_with_k("window-boundary", 3).unwrap(), DestructionRule::WindowBoundary);
        assert!(DestructionRule::parse_with_k("finite-range", 0).is_err());
        assert!("infinite".parse::<DestructionRule>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sample_invariants(seed in any::<u64>(), p in 0.0f64..=1.0, delta in 0.0f64..=1.0, k in 1u32..4) {
            let region = window(14, 11);
            let params = SdpParams::new(p, delta).unwrap();
            for rule in [DestructionRule::WindowBoundary, DestructionRule::FiniteRange { k }, DestructionRule::None] {
                let s = sample_sdp(&region, params, rule, RngKey::new(seed, 0)).unwrap();
                let x_region = s.x.crop(&region).unwrap();
                prop_assert!(s.x_star.is_below(&x_region).unwrap());
                prop_assert!(s.y.is_below(&s.z).unwrap());
                prop_assert!(s.x_star.is_below(&s.z).unwrap());
                for i in 0..region.len() {
                    prop_assert_eq!(s.z.bits()[i], s.x_star.bits()[i] | s.y.bits()[i]);
                }
                if rule == DestructionRule::None {
                    prop_assert_eq!(&s.x_star, &x_region);
                }
            }
        }

        #[test]
        fn finite_range_destroys_superset_of_window_boundary(seed in any::<u64>(), p in 0.3f64..0.9, k in 1u32..4) {
            // Every region site is more than k away from the outer ring, so a
            // cluster reaching the ring from i has already reached distance k.
            let win = window(20, 16);
            let region = win.inset(k + 1).unwrap();
            let x = sample_field(win, p, &RngKey::new(seed, 1).stream(StreamTag::Initial)).unwrap();
            let fr = destroy(&x, DestructionRule::FiniteRange { k }, &region).unwrap();
            let wb = destroy(&x, DestructionRule::WindowBoundary, &region).unwrap();
            prop_assert!(fr.is_below(&wb).unwrap());
            let none = destroy(&x, DestructionRule::None, &region).unwrap();
            prop_assert!(wb.is_below(&none).unwrap());
        }
    }
}
