//! The `sdp` command line.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use sdp_core::dynamics::{params_from_times, times_from_params, DynParams};
use sdp_core::estimators::{
    default_scales, estimate_crossing, estimate_dynamics_crossing, estimate_pc_steps, estimate_phi, estimate_theta,
    finite_size_criterion, n_hat as n_hat_for, scale_search, CriterionConfig, ScaleSearchConfig, ScaleStatus,
};
use sdp_core::lattice::Rho;
use sdp_core::sdp::{DestructionRule, SdpParams};
use sdp_core::stats::EstimateResult;

use crate::error::{CliError, EXIT_OK, EXIT_SELFTEST};
use crate::export::{emit_heatmap, export_csv};
use crate::selftest::run_selftest;
use crate::spec::{Quantity, SweepSpec};
use crate::store::{append_record, now_secs, run_sweep, PcRecord, ResultRecord, RunOptions};

/// Environment variable read when `--threads` is absent.
pub const THREADS_ENV: &str = "SDP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "sdp", version, about = "Self-destructive percolation on the square lattice")]
pub struct Cli {
    /// Worker threads (default: $SDP_THREADS, else all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct RuleArgs {
    /// Destruction rule: finite-range, window-boundary or none.
    #[arg(long, default_value = "window-boundary")]
    pub rule: String,
    /// Cutoff of the finite-range rule.
    #[arg(long, default_value_t = 1)]
    pub k: u32,
}

impl RuleArgs {
    fn rule(&self) -> Result<DestructionRule, CliError> {
        Ok(DestructionRule::parse_with_k(&self.rule, self.k)?)
    }
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    #[arg(long, default_value_t = 10_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Print one JSON object instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Probability that the origin connects to distance n.
    Theta {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        n: u32,
        #[command(flatten)]
        rule: RuleArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Occupied horizontal crossing of a floor(rho n) x n rectangle.
    Crossing {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value = "1")]
        rho: Rho,
        #[arg(long)]
        n: u32,
        #[command(flatten)]
        rule: RuleArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Finite-size criterion f(3, n) > 1 - alpha at one scale, or a search
    /// over scales.
    Criterion {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        delta: f64,
        /// Scale to test; omit to search 16, 32, ..., 512.
        #[arg(long)]
        n: Option<u32>,
        #[arg(long, default_value_t = 0.005)]
        alpha: f64,
        /// Lower admissible scale; derived from --phi or estimated when absent.
        #[arg(long)]
        n_hat: Option<u32>,
        /// Decay rate used to derive N-hat.
        #[arg(long)]
        phi: Option<f64>,
        /// Samples of the decay-rate estimate.
        #[arg(long, default_value_t = 100_000)]
        phi_samples: u64,
        /// Samples of the screening run at each searched scale.
        #[arg(long, default_value_t = 1000)]
        pilot_samples: u64,
        #[command(flatten)]
        rule: RuleArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Crossing probability of the Poisson-clock evolution omega(tau, t).
    Dynamics {
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        t: Option<f64>,
        /// Alternative to --tau/--t, mapped through the parameter map.
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value = "1")]
        rho: Rho,
        #[arg(long)]
        n: u32,
        #[command(flatten)]
        rule: RuleArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Estimate the critical density by bisection on square crossings.
    Pc {
        /// Comma-separated square sizes; the largest one gives the estimate.
        #[arg(long, value_delimiter = ',', default_values_t = [64u32, 128])]
        s_list: Vec<u32>,
        #[arg(long, default_value_t = 6)]
        steps: u32,
        /// Append the estimate to this store.
        #[arg(long)]
        store: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate a grid of cells into a resumable store.
    Sweep {
        /// JSON sweep specification; replaces the grid flags.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        p_grid: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        delta_grid: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        scales: Vec<u32>,
        /// theta, crossing or criterion.
        #[arg(long, default_value = "theta")]
        quantity: String,
        #[arg(long, default_value = "1")]
        rho: Rho,
        #[arg(long, default_value_t = 0.005)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        n_hat: u32,
        #[command(flatten)]
        rule: RuleArgs,
        #[arg(long, default_value_t = 1000)]
        samples: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        store: PathBuf,
        /// Stop after this many newly evaluated cells.
        #[arg(long)]
        max_cells: Option<usize>,
        #[arg(long)]
        quiet: bool,
    },
    /// Write the store's cell estimates as CSV.
    Export {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write an SVG heatmap of one quantity over the (p, delta) grid.
    Heatmap {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "theta")]
        quantity: String,
        #[arg(long)]
        n: Option<u32>,
        /// Critical-point marker; defaults to the store's last estimate.
        #[arg(long)]
        pc: Option<f64>,
    },
    /// Run the invariant suites.
    Selftest {
        #[arg(long, default_value_t = 1000)]
        samples: u64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => Some(
                v.trim()
                    .parse()
                    .map_err(|_| CliError::Validation(format!("{THREADS_ENV}={v:?} is not a thread count")))?,
            ),
            _ => None,
        },
    };
    if n == Some(0) {
        return Err(CliError::Validation("thread count must be positive".into()));
    }
    Ok(n)
}

fn report(quantity: &str, params: Value, e: &EstimateResult, start: Instant, as_json: bool) -> String {
    if as_json {
        json!({
            "quantity": quantity,
            "params": params,
            "estimate": e.point,
            "ci": [e.ci_low, e.ci_high],
            "n_samples": e.n_samples,
            "seed": e.seed,
            "elapsed_ms": start.elapsed().as_millis() as u64,
        })
        .to_string()
    } else {
        format!(
            "{quantity} = {:.6}  95% CI [{:.6}, {:.6}]  ({} samples, seed {}, {} ms)",
            e.point,
            e.ci_low,
            e.ci_high,
            e.n_samples,
            e.seed,
            start.elapsed().as_millis()
        )
    }
}

/// Cutoffs used when the decay rate has to be estimated.
pub const PHI_CUTOFFS: [u32; 9] = [1, 2, 3, 4, 5, 6, 8, 10, 12];

fn execute(command: Command) -> Result<i32, CliError> {
    let start = Instant::now();
    match command {
        Command::Theta { p, delta, n, rule, run } => {
            let rule = rule.rule()?;
            let e = estimate_theta(SdpParams::new(p, delta)?, n, rule, run.samples, run.seed)?;
            let params = json!({"p": p, "delta": delta, "n": n, "rule": rule});
            println!("{}", report("theta", params, &e, start, run.json));
        }
        Command::Crossing { p, delta, rho, n, rule, run } => {
            let rule = rule.rule()?;
            let r = estimate_crossing(SdpParams::new(p, delta)?, rho, n, rule, run.samples, run.seed)?;
            if r.duality_violations > 0 {
                return Err(CliError::Runtime(format!("{} duality violations", r.duality_violations)));
            }
            let params = json!({"p": p, "delta": delta, "rho": rho.to_string(), "n": n, "rule": rule});
            println!("{}", report("crossing", params, &r.estimate, start, run.json));
        }
        Command::Criterion { p, delta, n, alpha, n_hat, phi, phi_samples, pilot_samples, rule, run } => {
            let rule = rule.rule()?;
            let params = SdpParams::new(p, delta)?;
            let (n_hat, phi) = match (n_hat, phi) {
                (Some(h), phi) => (h, phi),
                (None, Some(phi)) => (n_hat_for(alpha, phi)?, Some(phi)),
                (None, None) => {
                    let est = estimate_phi(p, &PHI_CUTOFFS, phi_samples, run.seed)?;
                    if !run.json {
                        println!(
                            "phi({p}) {} {:.5} from {} samples",
                            if est.lower_bound { ">=" } else { "=" },
                            est.phi,
                            phi_samples
                        );
                    }
                    (n_hat_for(alpha, est.phi)?, Some(est.phi))
                }
            };
            match n {
                Some(n) => {
                    let cfg = CriterionConfig::new(alpha, n, n_hat, phi)?;
                    let v = finite_size_criterion(params, &cfg, rule, run.samples, run.seed)?;
                    let desc = json!({"p": p, "delta": delta, "n": n, "alpha": alpha, "n_hat": n_hat,
                        "phi": phi, "rule": rule, "holds": v.holds});
                    println!("{}", report("criterion", desc, &v.f3n, start, run.json));
                    if !run.json {
                        println!("n_hat = {n_hat}, margin = {:+.6}, holds = {}", v.margin, v.holds);
                    }
                }
                None => {
                    let cfg = ScaleSearchConfig {
                        alpha,
                        n_hat,
                        phi_estimate: phi,
                        scales: default_scales(),
                        samples: run.samples,
                        pilot_samples,
                        seed: run.seed,
                    };
                    let s = scale_search(params, rule, &cfg)?;
                    let found = s.found.and_then(|n| s.outcomes.iter().find(|o| o.n == n)).and_then(|o| o.verdict.clone());
                    if run.json {
                        println!(
                            "{}",
                            json!({
                                "quantity": "criterion-search",
                                "params": {"p": p, "delta": delta, "alpha": alpha, "n_hat": n_hat, "phi": phi,
                                    "rule": rule, "scales": cfg.scales, "found": s.found},
                                "estimate": found.as_ref().map(|v| v.f3n.point),
                                "ci": found.as_ref().map(|v| [v.f3n.ci_low, v.f3n.ci_high]),
                                "n_samples": run.samples,
                                "seed": run.seed,
                                "elapsed_ms": start.elapsed().as_millis() as u64,
                            })
                        );
                    } else {
                        println!("n_hat = {n_hat}");
                        for o in &s.outcomes {
                            let detail = match (o.status, &o.verdict, &o.pilot) {
                                (ScaleStatus::Evaluated, Some(v), _) => {
                                    format!("f = {:.6}, ci_low = {:.6}, holds = {}", v.f3n.point, v.f3n.ci_low, v.holds)
                                }
                                (ScaleStatus::ScreenedOut, _, Some(pl)) => format!("screened out, pilot f = {:.4}", pl.point),
                                _ => "below n_hat".into(),
                            };
                            println!("n = {:>4}: {detail}", o.n);
                        }
                        match s.found {
                            Some(n) => println!("criterion holds at n = {n}"),
                            None => println!("no scale qualifies"),
                        }
                    }
                }
            }
        }
        Command::Dynamics { tau, t, p, delta, rho, n, rule, run } => {
            let rule = rule.rule()?;
            let d = match (tau, t, p, delta) {
                (Some(tau), Some(t), None, None) => DynParams::new(tau, t)?,
                (None, None, Some(p), Some(delta)) => times_from_params(SdpParams::new(p, delta)?)?,
                _ => return Err(CliError::Validation("give either --tau and --t, or --p and --delta".into())),
            };
            let mapped = params_from_times(d);
            let r = estimate_dynamics_crossing(&[d], rho, n, rule, run.samples, run.seed)?.remove(0);
            let params = json!({"tau": d.tau, "t": d.t, "p": mapped.p, "delta": mapped.delta,
                "rho": rho.to_string(), "n": n, "rule": rule});
            println!("{}", report("dynamics-crossing", params, &r.estimate, start, run.json));
        }
        Command::Pc { s_list, steps, store, run } => {
            let est = estimate_pc_steps(&s_list, steps, run.samples, run.seed)?;
            if let Some(path) = store {
                let rec = PcRecord {
                    spec_hash: format!("pc:{}", serde_json::to_string(&(&s_list, steps, run.samples, run.seed)).unwrap()),
                    estimate: est.clone(),
                    wall_ms: start.elapsed().as_millis() as u64,
                    timestamp: now_secs(),
                };
                append_record(&path, &ResultRecord::Pc(rec))?;
            }
            if run.json {
                println!(
                    "{}",
                    json!({
                        "quantity": "pc",
                        "params": {"s_list": s_list, "steps": steps, "per_scale": est.per_scale},
                        "estimate": est.pc,
                        "ci": [est.bracket.0, est.bracket.1],
                        "n_samples": run.samples,
                        "seed": run.seed,
                        "elapsed_ms": start.elapsed().as_millis() as u64,
                    })
                );
            } else {
                for s in &est.per_scale {
                    println!("s = {:>4}: p_c in [{:.6}, {:.6}]", s.s, s.bracket.0, s.bracket.1);
                }
                println!("p_c = {:.6} (bracket width {:.6})", est.pc, est.bracket_width());
            }
        }
        Command::Sweep {
            spec,
            p_grid,
            delta_grid,
            scales,
            quantity,
            rho,
            alpha,
            n_hat,
            rule,
            samples,
            seed,
            store,
            max_cells,
            quiet,
        } => {
            let spec = match spec {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
                    serde_json::from_str::<SweepSpec>(&text)
                        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
                }
                None => SweepSpec {
                    p_grid,
                    delta_grid,
                    scales,
                    rule: rule.rule()?,
                    samples_per_cell: samples,
                    master_seed: seed,
                    quantity: match quantity.as_str() {
                        "theta" => Quantity::Theta,
                        "crossing" => Quantity::Crossing { rho },
                        "criterion" => Quantity::Criterion { alpha, n_hat },
                        other => return Err(CliError::Validation(format!("unknown quantity {other:?}"))),
                    },
                },
            };
            let summary = run_sweep(&spec, &store, &RunOptions { max_cells, quiet })?;
            println!(
                "evaluated {} cells, {} already present, {} corrupt lines skipped",
                summary.evaluated, summary.skipped, summary.corrupt_lines
            );
        }
        Command::Export { store, out } => {
            let rows = export_csv(&store, &out)?;
            println!("wrote {rows} rows to {}", out.display());
        }
        Command::Heatmap { store, out, quantity, n, pc } => {
            emit_heatmap(&store, &quantity, n, pc, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Selftest { samples, seed } => {
            let results = run_selftest(samples, seed)?;
            let mut ok = true;
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                ok &= r.passed;
            }
            return Ok(if ok { EXIT_OK } else { EXIT_SELFTEST });
        }
    }
    Ok(EXIT_OK)
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => crate::error::EXIT_VALIDATION,
            };
        }
    };
    let outcome = resolve_threads(cli.threads).and_then(|threads| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            builder = builder.num_threads(n);
        }
        let pool = builder.build().map_err(|e| CliError::Runtime(e.to_string()))?;
        pool.install(|| execute(cli.command))
    });
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
