use sdp_core::dynamics::DynParams;
use sdp_core::estimators::{
    catalog_region, domination_check, estimate_dynamics_crossing, estimate_phi, estimate_theta, fkg_check, fkg_exact,
    Event, EventPair,
};
use sdp_core::lattice::{Rho, Site};
use sdp_core::sdp::{DestructionRule, SdpParams};
use sdp_core::stats::Comparison;

// Two neighbouring open sites are exactly what the radius-1 rule destroys:
// without enhancement, adjacent sites are never both occupied. So the
// finite-range model is not positively associated, and the increasing
// catalog avoids such pairs.
#[test]
fn adjacent_sites_are_negatively_correlated_at_range_one() {
    let pair = EventPair {
        region: catalog_region(),
        a: Event::Occupied(Site::new(1, 1)),
        b: Event::Occupied(Site::new(2, 1)),
    };
    let params = SdpParams::new(0.4, 0.0).unwrap();
    let exact = fkg_exact(params, 1, &pair).unwrap();
    assert_eq!(exact.ab, 0.0);
    assert!(exact.gap < -0.002, "gap {}", exact.gap);
    let mc = fkg_check(params, DestructionRule::FiniteRange { k: 1 }, &pair, 20_000, 3).unwrap();
    assert!(!mc.holds, "gap {} se {}", mc.gap, mc.std_error);
    assert!((mc.gap - exact.gap).abs() < 4.0 * mc.std_error + 0.005);
}

#[test]
fn later_destruction_lowers_crossing() {
    let t = 1.2;
    let times: Vec<DynParams> = [0.0, 0.3, 0.6, 0.9, 1.2].iter().map(|&tau| DynParams::new(tau, t).unwrap()).collect();
    let reports = estimate_dynamics_crossing(&times, Rho::integer(1), 32, DestructionRule::WindowBoundary, 4000, 9).unwrap();
    for w in reports.windows(2) {
        let c = Comparison::new(&w[0].estimate, &w[1].estimate);
        assert!(c.not_below(4.0), "{} then {}", w[0].estimate.point, w[1].estimate.point);
    }
    assert!(reports[0].estimate.point > reports[4].estimate.point);
}

#[test]
fn equal_effective_density_with_smaller_p_dominates() {
    let first = SdpParams::new(0.3, 0.5).unwrap();
    let second = SdpParams::new(0.5, 0.29).unwrap();
    let r = domination_check(first, second, Rho::integer(1), 32, DestructionRule::WindowBoundary, 4000, 12).unwrap();
    assert!(r.holds(4.0), "{} vs {}", r.dominating.point, r.dominated.point);
}

#[test]
fn theta_increases_with_enhancement() {
    let rule = DestructionRule::WindowBoundary;
    let lo = estimate_theta(SdpParams::new(0.6, 0.2).unwrap(), 12, rule, 4000, 5).unwrap();
    let hi = estimate_theta(SdpParams::new(0.6, 0.5).unwrap(), 12, rule, 4000, 6).unwrap();
    assert!(Comparison::new(&hi, &lo).not_below(4.0));
    assert!(hi.point > lo.point);
}

#[test]
fn decay_rate_grows_with_density() {
    let ks = [1, 2, 3, 4, 5, 6, 8];
    let low = estimate_phi(0.65, &ks, 20_000, 1).unwrap();
    let high = estimate_phi(0.75, &ks, 20_000, 2).unwrap();
    assert!(high.phi > low.phi, "{} vs {}", low.phi, high.phi);
}
