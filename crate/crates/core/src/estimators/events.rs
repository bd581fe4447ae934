//! Named events on a final configuration, positive-correlation checks and
//! Monte Carlo versus exact-law comparisons.

use serde::{Deserialize, Serialize};

use super::{check_samples, reaches_sphere, tally};
use crate::cluster::{walk_cluster, Connectivity, Direction};
use crate::error::{Result, SdpError};
use crate::exact::{exact_z_law, ExactLaw};
use crate::field::SiteField;
use crate::lattice::{Site, Window};
use crate::rng::RngKey;
use crate::sdp::{sample_sdp_in, DestructionRule, SdpParams, Workspace};
use crate::stats::EstimateResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Event {
    Occupied(Site),
    /// Both sites lie in one occupied 4-cluster of the field.
    Connected(Site, Site),
    /// Occupied 4-path from `center` to `∂B(center, radius)`.
    Arm { center: Site, radius: u32 },
    AllOccupied(Window),
    /// Occupied 4-crossing of a sub-window.
    OccupiedCrossing { window: Window, direction: Direction },
    /// Vacant *-crossing of a sub-window.
    VacantCrossing { window: Window, direction: Direction },
    AtLeast(usize),
    Not(Box<Event>),
}

impl Event {
    pub fn is_increasing(&self) -> bool {
        match self {
            Event::VacantCrossing { .. } => false,
            Event::Not(e) => e.is_decreasing(),
            _ => true,
        }
    }

    pub fn is_decreasing(&self) -> bool {
        match self {
            Event::VacantCrossing { .. } => true,
            Event::Not(e) => e.is_increasing(),
            _ => false,
        }
    }

    pub fn occurs(&self, ws: &mut Workspace, z: &SiteField) -> Result<bool> {
        Ok(match self {
            Event::Occupied(s) => z.get(*s),
            Event::Connected(a, b) => {
                let (a, b) = (*a, *b);
                z.get(b) && walk_cluster(z, a, |_| true, |s| s == b, &mut ws.seen, &mut ws.queue)
            }
            Event::Arm { center, radius } => reaches_sphere(ws, z, *center, *radius),
            Event::AllOccupied(w) => w.sites().all(|s| z.get(s)),
            Event::OccupiedCrossing { window, direction } => {
                ws.labeler.crossing(&z.crop(window)?, true, Connectivity::Four, *direction)
            }
            Event::VacantCrossing { window, direction } => {
                ws.labeler.crossing(&z.crop(window)?, false, Connectivity::Eight, *direction)
            }
            Event::AtLeast(c) => z.count_occupied() >= *c,
            Event::Not(e) => !e.occurs(ws, z)?,
        })
    }
}

fn row(y: i32) -> Window {
    Window::new(Site::new(0, y), 3, 1).unwrap()
}

fn col(x: i32) -> Window {
    Window::new(Site::new(x, 0), 1, 3).unwrap()
}

/// The 3x3 region anchored at the origin used by the exact catalogs.
pub fn catalog_region() -> Window {
    Window::at_origin(3, 3).unwrap()
}

/// Pairs of increasing events on [`catalog_region`].
pub fn fkg_catalog() -> Vec<(&'static str, Event, Event)> {
    let region = catalog_region();
    let h = Event::OccupiedCrossing { window: region, direction: Direction::Horizontal };
    let v = Event::OccupiedCrossing { window: region, direction: Direction::Vertical };
    let center = Event::Occupied(Site::new(1, 1));
    let corner = Event::Occupied(Site::new(0, 0));
    let diag = Event::Connected(Site::new(0, 0), Site::new(2, 2));
    let arm = Event::Arm { center: Site::new(1, 1), radius: 1 };
    let lower = Event::OccupiedCrossing { window: Window::at_origin(3, 2).unwrap(), direction: Direction::Horizontal };
    let upper = Event::OccupiedCrossing {
        window: Window::new(Site::new(0, 1), 3, 2).unwrap(),
        direction: Direction::Horizontal,
    };
    vec![
        ("horizontal-vertical", h.clone(), v.clone()),
        ("horizontal-center", h.clone(), center.clone()),
        ("vertical-center", v, center.clone()),
        ("center-corner", center, corner.clone()),
        ("diagonal-horizontal", diag.clone(), h.clone()),
        ("row0-row2", Event::AllOccupied(row(0)), Event::AllOccupied(row(2))),
        ("row0-col0", Event::AllOccupied(row(0)), Event::AllOccupied(col(0))),
        ("arm-horizontal", arm, h),
        ("corner-diagonal", corner, diag),
        ("lower-upper", lower, upper),
    ]
}

/// Events on [`catalog_region`] for comparing Monte Carlo with the exact law.
pub fn oracle_catalog() -> Vec<(&'static str, Event)> {
    let region = catalog_region();
    vec![
        ("center", Event::Occupied(Site::new(1, 1))),
        ("corner", Event::Occupied(Site::new(0, 0))),
        ("edge", Event::Occupied(Site::new(1, 0))),
        ("horizontal", Event::OccupiedCrossing { window: region, direction: Direction::Horizontal }),
        ("vertical", Event::OccupiedCrossing { window: region, direction: Direction::Vertical }),
        ("vacant-vertical", Event::VacantCrossing { window: region, direction: Direction::Vertical }),
        ("diagonal", Event::Connected(Site::new(0, 0), Site::new(2, 2))),
        ("arm", Event::Arm { center: Site::new(1, 1), radius: 1 }),
        ("row0", Event::AllOccupied(row(0))),
        ("at-least-5", Event::AtLeast(5)),
        ("all-vacant", Event::Not(Box::new(Event::AtLeast(1)))),
        ("not-center", Event::Not(Box::new(Event::Occupied(Site::new(1, 1))))),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPair {
    pub region: Window,
    pub a: Event,
    pub b: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkgReport {
    pub a: EstimateResult,
    pub b: EstimateResult,
    pub ab: EstimateResult,
    /// `P(A and B) - P(A) P(B)`.
    pub gap: f64,
    /// Standard error of `gap` under independence of `A` and `B`.
    pub std_error: f64,
    /// `gap >= -4 std_error`.
    pub holds: bool,
}

pub const FKG_SE: f64 = 4.0;

fn require_increasing(pair: &EventPair) -> Result<()> {
    if !(pair.a.is_increasing() && pair.b.is_increasing()) {
        return Err(SdpError::InvalidConfig("positive correlation is checked for increasing events only".into()));
    }
    Ok(())
}

/// Estimates `P(A)`, `P(B)` and `P(A and B)` from the same samples of `z`
/// on `pair.region`.
pub fn fkg_check(
    params: SdpParams,
    rule: DestructionRule,
    pair: &EventPair,
    samples: u64,
    seed: u64,
) -> Result<FkgReport> {
    require_increasing(pair)?;
    SdpParams::new(params.p, params.delta)?;
    rule.validate()?;
    check_samples(samples)?;
    // counts of (A,B) = (1,1), (1,0), (0,1)
    let c = tally(samples, 3, |ws, r, acc| {
        let z = sample_sdp_in(ws, &pair.region, params, rule, RngKey::new(seed, r))?.z;
        match (pair.a.occurs(ws, &z)?, pair.b.occurs(ws, &z)?) {
            (true, true) => acc[0] += 1,
            (true, false) => acc[1] += 1,
            (false, true) => acc[2] += 1,
            _ => {}
        }
        Ok(())
    })?;
    let n = samples as f64;
    let (pab, pa, pb) = (c[0] as f64 / n, (c[0] + c[1]) as f64 / n, (c[0] + c[2]) as f64 / n);
    let gap = pab - pa * pb;
    // score-test error: the variance of the gap's influence function
    // 1_AB - pb 1_A - pa 1_B at zero covariance. The plug-in variance
    // collapses when the joint cell is nearly empty.
    let std_error = (pa * (1.0 - pa) * pb * (1.0 - pb) / n).sqrt();
    let name = |s: &str| format!("fkg-{s}(p={},delta={},rule={rule})", params.p, params.delta);
    Ok(FkgReport {
        a: EstimateResult::from_counts(name("a"), c[0] + c[1], samples, seed),
        b: EstimateResult::from_counts(name("b"), c[0] + c[2], samples, seed),
        ab: EstimateResult::from_counts(name("ab"), c[0], samples, seed),
        gap,
        std_error,
        holds: gap >= -FKG_SE * std_error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactCorrelation {
    pub a: f64,
    pub b: f64,
    pub ab: f64,
    pub gap: f64,
}

/// `P(A and B) - P(A) P(B)` under the exact law of the finite-range model.
pub fn fkg_exact(params: SdpParams, k: u32, pair: &EventPair) -> Result<ExactCorrelation> {
    let law = exact_z_law(&pair.region, params, k)?;
    let ta = event_table(pair.region, &pair.a)?;
    let tb = event_table(pair.region, &pair.b)?;
    let a = law.probability(|z| ta[z.to_mask() as usize]);
    let b = law.probability(|z| tb[z.to_mask() as usize]);
    let ab = law.probability(|z| {
        let m = z.to_mask() as usize;
        ta[m] && tb[m]
    });
    Ok(ExactCorrelation { a, b, ab, gap: ab - a * b })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub exact: f64,
    pub estimate: EstimateResult,
    /// `sqrt(exact (1 - exact) / n)`.
    pub std_error: f64,
    /// `|estimate - exact| <= 4 std_error`.
    pub within: bool,
}

/// Monte Carlo estimates of each event under the finite-range rule with
/// cutoff `k`, against the exact law on `region`.
pub fn oracle_comparison(
    params: SdpParams,
    k: u32,
    region: &Window,
    events: &[(&str, Event)],
    samples: u64,
    seed: u64,
) -> Result<Vec<OracleCheck>> {
    check_samples(samples)?;
    let rule = DestructionRule::FiniteRange { k };
    let law = exact_z_law(region, params, k)?;
    let counts = tally(samples, events.len(), |ws, r, acc| {
        let z = sample_sdp_in(ws, region, params, rule, RngKey::new(seed, r))?.z;
        for (slot, (_, e)) in acc.iter_mut().zip(events) {
            *slot += e.occurs(ws, &z)? as u64;
        }
        Ok(())
    })?;
    events
        .iter()
        .zip(counts)
        .map(|((name, e), c)| {
            let exact = exact_event_probability(&law, e)?;
            let estimate = EstimateResult::from_counts(format!("oracle-{name}"), c, samples, seed);
            let std_error = (exact * (1.0 - exact) / samples as f64).sqrt();
            let within = (estimate.point - exact).abs() <= FKG_SE * std_error;
            Ok(OracleCheck { name: name.to_string(), exact, estimate, std_error, within })
        })
        .collect()
}

/// Indicator of `event` for every configuration of `region`, by mask.
fn event_table(region: Window, event: &Event) -> Result<Vec<bool>> {
    let mut ws = Workspace::new();
    (0..1u64 << region.len()).map(|m| event.occurs(&mut ws, &SiteField::from_mask(region, m))).collect()
}

pub fn exact_event_probability(law: &ExactLaw, event: &Event) -> Result<f64> {
    let table = event_table(*law.region(), event)?;
    Ok(law.probability(|z| table[z.to_mask() as usize]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: f64, d: f64) -> SdpParams {
        SdpParams::new(p, d).unwrap()
    }

    #[test]
    fn catalog_monotonicity_flags() {
        assert!(fkg_catalog().iter().all(|(_, a, b)| a.is_increasing() && b.is_increasing()));
        let all = oracle_catalog();
        assert!(all.len() >= 10);
        assert!(!all.iter().find(|(n, _)| *n == "vacant-vertical").unwrap().1.is_increasing());
        assert!(all.iter().find(|(n, _)| *n == "all-vacant").unwrap().1.is_decreasing());
    }

    #[test]
    fn events_on_fixed_fields() {
        let mut ws = Workspace::new();
        let region = catalog_region();
        let full = SiteField::occupied(region);
        let empty = SiteField::vacant(region);
        for (_, e) in oracle_catalog() {
            if e.is_increasing() && !matches!(e, Event::AtLeast(_)) {
                assert!(e.occurs(&mut ws, &full).unwrap());
                assert!(!e.occurs(&mut ws, &empty).unwrap());
            }
        }
        // an L-shaped path connects the corners
        let mut f = SiteField::vacant(region);
        for s in [(0, 0), (1, 0), (2, 0), (2, 1), (2, 2)] {
            f.set(Site::new(s.0, s.1), true).unwrap();
        }
        assert!(Event::Connected(Site::new(0, 0), Site::new(2, 2)).occurs(&mut ws, &f).unwrap());
        assert!(!Event::Connected(Site::new(0, 0), Site::new(0, 2)).occurs(&mut ws, &f).unwrap());
    }

    #[test]
    fn identical_events_have_nonnegative_gap() {
        let e = Event::Occupied(Site::new(1, 1));
        let pair = EventPair { region: catalog_region(), a: e.clone(), b: e };
        let x = fkg_exact(params(0.6, 0.2), 1, &pair).unwrap();
        assert!((x.ab - x.a).abs() < 1e-15 && x.gap >= 0.0);
        let r = fkg_check(params(0.6, 0.2), DestructionRule::FiniteRange { k: 1 }, &pair, 500, 1).unwrap();
        assert_eq!(r.ab.successes, r.a.successes);
        assert!(r.holds);
    }

    #[test]
    fn rejects_non_increasing_events() {
        let region = catalog_region();
        let pair = EventPair {
            region,
            a: Event::VacantCrossing { window: region, direction: Direction::Vertical },
            b: Event::Occupied(Site::new(1, 1)),
        };
        assert!(fkg_check(params(0.5, 0.5), DestructionRule::WindowBoundary, &pair, 10, 1).is_err());
    }
}
