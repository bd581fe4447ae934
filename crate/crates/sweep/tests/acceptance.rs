//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use sdp_core::cluster::Direction;
use sdp_core::dynamics::{params_from_times, quadrant_monotonicity_check, sample_clocks, times_from_params, DynParams};
use sdp_core::estimators::{
    abc_event_check, catalog_region, default_scales, estimate_crossing, estimate_dynamics_crossing, estimate_pc,
    estimate_phi, fkg_catalog, fkg_check, fkg_exact, n_hat, oracle_comparison, scale_search, subadditivity_check,
    subcritical_reduction_check, Event, EventPair, ScaleSearchConfig,
};
use sdp_core::exact::{arm_probability_exact, exact_z_law};
use sdp_core::lattice::{Rho, Site, Window};
use sdp_core::rng::{RngKey, StreamTag};
use sdp_core::sdp::{occupancy_identity, DestructionRule, SdpParams};
use sdp_core::stats::Comparison;
use sdp_core::Result;

use sdp_sweep::store::read_store;

const SE: f64 = 4.0;
const EXACT: f64 = 1e-12;
const ALPHA: f64 = 0.005;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

fn center_occupancy() -> Result<Outcome> {
    let mut worst_identity = 0.0f64;
    let mut notes = Vec::new();
    let mut ok = true;
    let center = Site::new(1, 1);
    for (p, d) in [(0.6, 0.2), (0.3, 0.7)] {
        let params = SdpParams::new(p, d)?;
        let law = exact_z_law(&catalog_region(), params, 1)?;
        let exact = law.cylinder(&[(center, true)])?;
        // the origin's cluster reaches distance 1 iff it and some neighbour are open
        let pi_closed = p * (1.0 - (1.0 - p).powi(4));
        let pi_enum = arm_probability_exact(p, 1)?;
        for pi in [pi_closed, pi_enum] {
            worst_identity = worst_identity.max((exact - occupancy_identity(params, pi)?).abs());
        }
        let mc = oracle_comparison(params, 1, &catalog_region(), &[("center", Event::Occupied(center))], 100_000, 11)?;
        let c = &mc[0];
        ok &= c.within;
        notes.push(format!("({p},{d}): exact {:.6} mc {:.6} ({:+.2} SE)", c.exact, c.estimate.point, (c.estimate.point - c.exact) / c.std_error));
    }
    ok &= worst_identity <= EXACT;
    outcome(ok, format!("identity error {worst_identity:.2e}; {}", notes.join("; ")))
}

fn strip_independence() -> Result<Outcome> {
    let strip = Window::at_origin(7, 1)?;
    let (a, b) = (Site::new(0, 0), Site::new(6, 0));
    let mut worst = 0.0f64;
    for (p, d) in [(0.6, 0.2), (0.3, 0.7), (0.9, 0.1), (0.5, 0.5)] {
        let law = exact_z_law(&strip, SdpParams::new(p, d)?, 1)?;
        for va in [false, true] {
            for vb in [false, true] {
                let joint = law.cylinder(&[(a, va), (b, vb)])?;
                worst = worst.max((joint - law.cylinder(&[(a, va)])? * law.cylinder(&[(b, vb)])?).abs());
            }
        }
    }
    outcome(worst <= EXACT, format!("largest factorization defect {worst:.2e} over 4 parameter points"))
}

fn duality() -> Result<Outcome> {
    let mut violations = 0;
    let vals = [0.3, 0.6, 0.9];
    for (i, &p) in vals.iter().enumerate() {
        for (j, &d) in vals.iter().enumerate() {
            let r = estimate_crossing(SdpParams::new(p, d)?, Rho::integer(3), 16, DestructionRule::WindowBoundary, 10_000, (10 * i + j) as u64)?;
            violations += r.duality_violations;
        }
    }
    outcome(violations == 0, format!("{violations} violations in 9 x 10^4 samples of a 48x16 rectangle"))
}

fn structural_events() -> Result<Outcome> {
    let params = SdpParams::new(0.65, 0.3)?;
    let rule = DestructionRule::WindowBoundary;
    let abc = abc_event_check(params, 16, rule, 10_000, 21)?;
    let sub = subadditivity_check(params, 16, rule, 10_000, 22)?;
    let ok = abc.inclusion_violations == 0 && sub.witness_violations == 0 && sub.seven.holds && sub.four_three.holds;
    outcome(
        ok,
        format!(
            "inclusion violations {}, witness violations {}, h9 {:.4} <= 7 h3 {:.4}, <= 4 h3 + 3 h1 {:.4}",
            abc.inclusion_violations, sub.witness_violations, sub.h9.point, sub.seven.rhs, sub.four_three.rhs
        ),
    )
}

fn parameter_map() -> Result<Outcome> {
    let stream = RngKey::new(5, 0).stream(StreamTag::Auxiliary);
    let mut worst = 0.0f64;
    for i in 0..10_000 {
        let s = SdpParams::new(stream.uniform(Site::new(i, 0)), stream.uniform(Site::new(i, 1)))?;
        let back = params_from_times(times_from_params(s)?);
        worst = worst.max((back.p - s.p).abs().max((back.delta - s.delta).abs()));
    }
    let rule = DestructionRule::WindowBoundary;
    let mut ok = worst < EXACT;
    let mut notes = vec![format!("roundtrip error {worst:.2e}")];
    // the second pair keeps the crossing probability away from 0 and 1
    for (i, (tau, t)) in [(0.9, 1.6), (0.5, 1.5)].into_iter().enumerate() {
        let d = DynParams::new(tau, t)?;
        let seed = 31 + 2 * i as u64;
        let dynamic = estimate_dynamics_crossing(&[d], Rho::integer(4), 16, rule, 10_000, seed)?.remove(0);
        let direct = estimate_crossing(params_from_times(d), Rho::integer(4), 16, rule, 10_000, seed + 1)?;
        let cmp = Comparison::new(&dynamic.estimate, &direct.estimate);
        ok &= cmp.within(SE);
        notes.push(format!(
            "({tau},{t}): clocks {:.4} vs direct {:.4} ({:+.2} SE)",
            dynamic.estimate.point,
            direct.estimate.point,
            if cmp.std_error > 0.0 { cmp.gap / cmp.std_error } else { 0.0 }
        ));
    }
    outcome(ok, notes.join("; "))
}

fn coupling() -> Result<Outcome> {
    let window = Window::at_origin(64, 64)?;
    let triples = [(0.3, 0.5, 1.2), (0.9, 0.9, 1.6), (1.2, 1.5, 2.5), (0.6, 2.0, 3.0)];
    let mut violations = 0;
    for r in 0..1000 {
        let clocks = sample_clocks(window, 3.0, &RngKey::new(41, r).stream(StreamTag::Clock))?;
        for rule in [DestructionRule::WindowBoundary, DestructionRule::FiniteRange { k: 2 }] {
            for (tau, t1, t2) in triples {
                let rep = quadrant_monotonicity_check(&clocks, DynParams::new(tau, t1)?, DynParams::new(tau, t2)?, rule)?;
                violations += rep.violations + rep.undestroyed_violations;
            }
        }
    }
    outcome(violations == 0, format!("{violations} pointwise violations over 1000 clock fields"))
}

fn fkg() -> Result<Outcome> {
    let points = [(0.6, 0.2), (0.3, 0.7), (0.5, 0.5), (0.8, 0.1), (0.2, 0.2), (0.9, 0.6)];
    let mut worst = f64::INFINITY;
    let mut failed = Vec::new();
    let mut checks = 0;
    for (i, (p, d)) in points.into_iter().enumerate() {
        let params = SdpParams::new(p, d)?;
        for (name, a, b) in fkg_catalog() {
            let pair = EventPair { region: catalog_region(), a, b };
            let x = fkg_exact(params, 1, &pair)?;
            worst = worst.min(x.gap);
            if x.gap < -EXACT {
                failed.push(format!("exact {name}@({p},{d})"));
            }
            let mc = fkg_check(params, DestructionRule::FiniteRange { k: 1 }, &pair, 10_000, 50 + i as u64)?;
            checks += 1;
            if !mc.holds {
                failed.push(format!("mc {name}@({p},{d})"));
            }
        }
        let strip = |y| -> Result<Event> {
            Ok(Event::OccupiedCrossing { window: Window::new(Site::new(0, y), 16, 3)?, direction: Direction::Horizontal })
        };
        let pair = EventPair { region: Window::at_origin(16, 8)?, a: strip(0)?, b: strip(5)? };
        let mc = fkg_check(params, DestructionRule::WindowBoundary, &pair, 10_000, 60 + i as u64)?;
        checks += 1;
        if !mc.holds {
            failed.push(format!("mc parallel-strips@({p},{d})"));
        }
    }
    outcome(
        failed.is_empty(),
        format!("smallest exact covariance {worst:.3e} over 60 pairs; {checks} MC checks; failures {failed:?}"),
    )
}

fn finite_size_criterion() -> Result<Outcome> {
    let rule = DestructionRule::WindowBoundary;
    let pc = estimate_pc(&[64, 128], 10_000, 71)?;
    let p = pc.pc + 0.05;
    let phi = estimate_phi(p, &sdp_sweep::cli::PHI_CUTOFFS, 100_000, 72)?;
    let nh = n_hat(ALPHA, phi.phi)?;
    let cfg = |delta: f64| ScaleSearchConfig {
        alpha: ALPHA,
        n_hat: nh,
        phi_estimate: Some(phi.phi),
        scales: default_scales(),
        samples: 200_000,
        pilot_samples: 1000,
        seed: hash_seed(delta),
    };
    let hot = scale_search(SdpParams::new(p, 0.75)?, rule, &cfg(0.75))?;
    let cold = scale_search(SdpParams::new(p, 0.0)?, rule, &cfg(0.0))?;
    let hot_detail = match hot.found {
        Some(n) => {
            let v = hot.outcomes.iter().find(|o| o.n == n).and_then(|o| o.verdict.as_ref()).unwrap();
            format!("n = {n}, f = {:.6}, ci_low = {:.6}", v.f3n.point, v.f3n.ci_low)
        }
        None => "no scale".into(),
    };
    outcome(
        hot.found.is_some() && cold.found.is_none(),
        format!(
            "p_c ~ {:.4}, p = {p:.4}, phi {} {:.4}, N-hat {nh}; delta 0.75: {hot_detail}; delta 0: {}",
            pc.pc,
            if phi.lower_bound { ">=" } else { "=" },
            phi.phi,
            match cold.found {
                Some(n) => format!("qualifies at n = {n}"),
                None => "no scale qualifies".into(),
            }
        ),
    )
}

fn hash_seed(delta: f64) -> u64 {
    sdp_core::rng::hash_words(&[73, delta.to_bits()])
}

fn subcritical() -> Result<Outcome> {
    let rule = DestructionRule::WindowBoundary;
    let mut differing = 0;
    for d in [0.2, 0.5, 0.8] {
        differing += subcritical_reduction_check(SdpParams::new(0.0, d)?, Rho::integer(1), 64, rule, 1000, 81)?.differing_samples;
    }
    let r = subcritical_reduction_check(SdpParams::new(0.3, 0.2)?, Rho::integer(1), 64, rule, 10_000, 82)?;
    outcome(
        differing == 0 && r.consistent(SE),
        format!(
            "p = 0: {differing} differing samples; (0.3, 0.2): {:.4} vs {:.4} ({:+.2} SE)",
            r.sdp.point,
            r.direct.point,
            if r.comparison.std_error > 0.0 { r.comparison.gap / r.comparison.std_error } else { 0.0 }
        ),
    )
}

fn sdp(args: &[&str], threads: usize) -> Result<()> {
    let status = Command::new(env!("CARGO_BIN_EXE_sdp"))
        .args(args)
        .arg("--quiet")
        .args(["--threads", &threads.to_string()])
        .status()
        .expect("sdp binary runs");
    assert!(status.success(), "sdp {args:?} failed with {status}");
    Ok(())
}

fn record_set(path: &Path) -> Result<BTreeSet<String>> {
    let store = read_store(path).expect("store reads");
    assert!(store.corrupt.is_empty());
    Ok(store.records.iter().map(|r| serde_json::to_string(&r.payload()).unwrap()).collect())
}

fn determinism() -> Result<Outcome> {
    let dir = tempfile::tempdir().expect("temp dir");
    let grid = [
        "sweep",
        "--p-grid",
        "0.1,0.3,0.5,0.7,0.9",
        "--delta-grid",
        "0.1,0.3,0.5,0.7,0.9",
        "--scales",
        "16",
        "--samples",
        "2000",
        "--seed",
        "91",
        "--store",
    ];
    let path = |name: &str| dir.path().join(name);
    let run = |name: &str, extra: &[&str], threads| -> Result<()> {
        let p = path(name);
        let mut args: Vec<&str> = grid.to_vec();
        let s = p.to_str().unwrap().to_string();
        args.push(&s);
        args.extend_from_slice(extra);
        sdp(&args, threads)
    };
    run("full1.jsonl", &[], 1)?;
    run("full8.jsonl", &[], 8)?;
    run("resumed.jsonl", &["--max-cells", "12"], 8)?;
    let partial = record_set(&path("resumed.jsonl"))?.len();
    run("resumed.jsonl", &[], 1)?;
    let before = std::fs::read(path("resumed.jsonl")).unwrap();
    run("resumed.jsonl", &[], 1)?;
    let idle = before == std::fs::read(path("resumed.jsonl")).unwrap();
    let (a, b, c) = (record_set(&path("full1.jsonl"))?, record_set(&path("full8.jsonl"))?, record_set(&path("resumed.jsonl"))?);
    outcome(
        a.len() == 25 && a == b && a == c && partial == 12 && idle,
        format!(
            "{} records; threads 1 vs 8 {}; interrupted at {partial} and resumed {}; third run idle: {idle}",
            a.len(),
            if a == b { "identical" } else { "DIFFER" },
            if a == c { "identical" } else { "DIFFERS" }
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Result<Outcome>); 10] = [
        ("exact center occupancy", center_occupancy),
        ("finite-range independence", strip_independence),
        ("crossing duality", duality),
        ("structural events", structural_events),
        ("parameter map", parameter_map),
        ("coupling monotonicity", coupling),
        ("positive correlation", fkg),
        ("finite-size criterion", finite_size_criterion),
        ("subcritical reduction", subcritical),
        ("determinism and resume", determinism),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (passed, detail) = match f() {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failures += !passed as usize;
        println!(
            "criterion {:>2} {} {name}: {detail} [{:.1} s]",
            i + 1,
            if passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failures > 0 {
        println!("{failures} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
