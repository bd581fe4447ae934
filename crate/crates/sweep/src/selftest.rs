//! Invariant suites run by `sdp selftest`.

use sdp_core::dynamics::{params_from_times, quadrant_monotonicity_check, sample_clocks, times_from_params, DynParams};
use sdp_core::estimators::{
    catalog_region, estimate_crossing, fkg_catalog, fkg_check, fkg_exact, Event, oracle_catalog, oracle_comparison, EventPair,
};
use sdp_core::cluster::Direction;
use sdp_core::lattice::{Rho, Site, Window};
use sdp_core::rng::{RngKey, StreamTag};
use sdp_core::sdp::{DestructionRule, SdpParams};
use sdp_core::Result;

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn grid() -> Vec<SdpParams> {
    let vals = [0.3, 0.6, 0.9];
    vals.iter().flat_map(|&p| vals.iter().map(move |&d| SdpParams { p, delta: d })).collect()
}

fn duality(samples: u64, seed: u64) -> Result<SuiteResult> {
    let mut violations = 0;
    for (i, params) in grid().into_iter().enumerate() {
        let r = estimate_crossing(params, Rho::integer(3), 16, DestructionRule::WindowBoundary, samples, seed + i as u64)?;
        violations += r.duality_violations;
    }
    Ok(SuiteResult {
        name: "duality",
        passed: violations == 0,
        detail: format!("{violations} violations over 9 parameter points x {samples} samples"),
    })
}

fn oracle(samples: u64, seed: u64) -> Result<SuiteResult> {
    let mut failed = Vec::new();
    let mut total = 0;
    for (p, d) in [(0.6, 0.2), (0.3, 0.7)] {
        for c in oracle_comparison(SdpParams::new(p, d)?, 1, &catalog_region(), &oracle_catalog(), samples, seed)? {
            total += 1;
            if !c.within {
                failed.push(format!("{}@({p},{d})", c.name));
            }
        }
    }
    Ok(SuiteResult {
        name: "oracle",
        passed: failed.is_empty(),
        detail: format!("{} of {total} predicates outside 4 SE {failed:?}", failed.len()),
    })
}

fn coupling(samples: u64, seed: u64) -> Result<SuiteResult> {
    let fields = samples.div_ceil(10).max(1);
    let window = Window::at_origin(32, 32)?;
    let mut violations = 0;
    for r in 0..fields {
        let clocks = sample_clocks(window, 2.5, &RngKey::new(seed, r).stream(StreamTag::Clock))?;
        for rule in [DestructionRule::WindowBoundary, DestructionRule::FiniteRange { k: 2 }] {
            for (tau, t1, t2) in [(0.5, 0.7, 1.9), (1.0, 1.0, 2.5), (0.9, 1.2, 1.6)] {
                let rep = quadrant_monotonicity_check(&clocks, DynParams::new(tau, t1)?, DynParams::new(tau, t2)?, rule)?;
                violations += rep.violations + rep.undestroyed_violations;
            }
        }
    }
    Ok(SuiteResult {
        name: "coupling",
        passed: violations == 0,
        detail: format!("{violations} pointwise violations over {fields} clock fields"),
    })
}

/// Tolerance of the exact positive-correlation check.
pub const EXACT_TOL: f64 = 1e-12;

fn fkg(samples: u64, seed: u64) -> Result<SuiteResult> {
    let mut worst = f64::INFINITY;
    let mut failed = Vec::new();
    for (p, d) in [(0.6, 0.2), (0.3, 0.7), (0.5, 0.5), (0.8, 0.1), (0.2, 0.2), (0.9, 0.6)] {
        for (name, a, b) in fkg_catalog() {
            let x = fkg_exact(SdpParams::new(p, d)?, 1, &EventPair { region: catalog_region(), a, b })?;
            worst = worst.min(x.gap);
            if x.gap < -EXACT_TOL {
                failed.push(format!("{name}@({p},{d})"));
            }
        }
    }
    let region = Window::at_origin(16, 8)?;
    let strip = |y| -> Result<Event> {
        Ok(Event::OccupiedCrossing { window: Window::new(Site::new(0, y), 16, 3)?, direction: Direction::Horizontal })
    };
    let pair = EventPair { region, a: strip(0)?, b: strip(5)? };
    for (p, d) in [(0.6, 0.3), (0.4, 0.5)] {
        let r = fkg_check(SdpParams::new(p, d)?, DestructionRule::WindowBoundary, &pair, samples, seed)?;
        if !r.holds {
            failed.push(format!("parallel-strips@({p},{d})"));
        }
    }
    Ok(SuiteResult {
        name: "fkg",
        passed: failed.is_empty(),
        detail: format!("smallest exact gap {worst:.3e}; failures {failed:?}"),
    })
}

fn parameter_map(_samples: u64, seed: u64) -> Result<SuiteResult> {
    let stream = RngKey::new(seed, 0).stream(StreamTag::Auxiliary);
    let mut worst = 0.0f64;
    for i in 0..10_000 {
        let s = SdpParams::new(stream.uniform(Site::new(i, 0)), stream.uniform(Site::new(i, 1)))?;
        let back = params_from_times(times_from_params(s)?);
        worst = worst.max((back.p - s.p).abs() + (back.delta - s.delta).abs());
    }
    Ok(SuiteResult {
        name: "parameter-map",
        passed: worst < 1e-12,
        detail: format!("worst roundtrip error {worst:.3e} over 10000 pairs"),
    })
}

pub fn run_selftest(samples: u64, seed: u64) -> Result<Vec<SuiteResult>> {
    let suites: [fn(u64, u64) -> Result<SuiteResult>; 5] = [duality, oracle, coupling, fkg, parameter_map];
    suites.iter().map(|f| f(samples, seed)).collect()
}
