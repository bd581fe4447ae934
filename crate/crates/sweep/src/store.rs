//! Line-delimited JSON result store.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::sync::mpsc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sdp_core::estimators::{
    estimate_crossing, estimate_theta, finite_size_criterion, CriterionConfig, CriterionVerdict, PcEstimate,
};
use sdp_core::sdp::SdpParams;
use sdp_core::stats::EstimateResult;

use crate::error::CliError;
use crate::spec::{CellIndex, Quantity, SweepSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub spec_hash: String,
    pub quantity: String,
    pub cell: CellIndex,
    pub p: f64,
    pub delta: f64,
    pub n: u32,
    pub estimate: EstimateResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<CriterionVerdict>,
    pub wall_ms: u64,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcRecord {
    pub spec_hash: String,
    pub estimate: PcEstimate,
    pub wall_ms: u64,
    pub timestamp: u64,
}

/// One line of the store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
pub enum ResultRecord {
    Cell(CellRecord),
    Pc(PcRecord),
}

impl ResultRecord {
    pub fn spec_hash(&self) -> &str {
        match self {
            ResultRecord::Cell(c) => &c.spec_hash,
            ResultRecord::Pc(p) => &p.spec_hash,
        }
    }

    /// The record with run-dependent fields (`wall_ms`, `timestamp`)
    /// zeroed, for comparing stores across runs.
    pub fn payload(&self) -> ResultRecord {
        let mut r = self.clone();
        match &mut r {
            ResultRecord::Cell(c) => (c.wall_ms, c.timestamp) = (0, 0),
            ResultRecord::Pc(p) => (p.wall_ms, p.timestamp) = (0, 0),
        }
        r
    }
}

#[derive(Debug, Default)]
pub struct StoreContents {
    pub records: Vec<ResultRecord>,
    /// `(line number, message)` of lines that failed to parse.
    pub corrupt: Vec<(usize, String)>,
}

impl StoreContents {
    pub fn cells(&self) -> impl Iterator<Item = &CellRecord> {
        self.records.iter().filter_map(|r| match r {
            ResultRecord::Cell(c) => Some(c),
            _ => None,
        })
    }

    /// Most recently appended critical-point estimate.
    pub fn last_pc(&self) -> Option<&PcRecord> {
        self.records.iter().rev().find_map(|r| match r {
            ResultRecord::Pc(p) => Some(p),
            _ => None,
        })
    }
}

/// Reads a store; a missing file reads as empty. Unparseable lines are
/// collected in `corrupt` and otherwise ignored.
pub fn read_store(path: &Path) -> Result<StoreContents, CliError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(StoreContents::default()),
        Err(e) => return Err(CliError::io(path, e)),
    };
    let mut out = StoreContents::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ResultRecord>(&line) {
            Ok(r) => out.records.push(r),
            Err(e) => out.corrupt.push((i + 1, e.to_string())),
        }
    }
    Ok(out)
}

fn open_append(path: &Path) -> Result<File, CliError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| CliError::io(path, e))?;
    // a torn final line would otherwise swallow the next record
    let len = f.metadata().map_err(|e| CliError::io(path, e))?.len();
    if len > 0 {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        if bytes.last() != Some(&b'\n') {
            f.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
        }
    }
    Ok(f)
}

pub fn append_record(path: &Path, record: &ResultRecord) -> Result<(), CliError> {
    let mut f = open_append(path)?;
    writeln!(f, "{}", serde_json::to_string(record).expect("record serializes")).map_err(|e| CliError::io(path, e))
}

pub fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Evaluate at most this many pending cells (simulates an interruption).
    pub max_cells: Option<usize>,
    /// Suppress the per-cell log line.
    pub quiet: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub evaluated: usize,
    pub skipped: usize,
    pub corrupt_lines: usize,
}

pub fn evaluate_cell(spec: &SweepSpec, cell: CellIndex) -> Result<CellRecord, CliError> {
    let start = Instant::now();
    let (p, delta, n) = (spec.p_grid[cell.p], spec.delta_grid[cell.delta], spec.scales[cell.n]);
    let params = SdpParams::new(p, delta)?;
    let seed = spec.cell_seed(cell);
    let samples = spec.samples_per_cell;
    let (estimate, verdict) = match &spec.quantity {
        Quantity::Theta => (estimate_theta(params, n, spec.rule, samples, seed)?, None),
        Quantity::Crossing { rho } => (estimate_crossing(params, *rho, n, spec.rule, samples, seed)?.estimate, None),
        Quantity::Criterion { alpha, n_hat } => {
            let cfg = CriterionConfig::new(*alpha, n, *n_hat, None)?;
            let v = finite_size_criterion(params, &cfg, spec.rule, samples, seed)?;
            (v.f3n.clone(), Some(v))
        }
    };
    Ok(CellRecord {
        spec_hash: spec.hash(),
        quantity: spec.quantity.label(),
        cell,
        p,
        delta,
        n,
        estimate,
        verdict,
        wall_ms: start.elapsed().as_millis() as u64,
        timestamp: now_secs(),
    })
}

/// Evaluates every cell of `spec` not yet in the store and appends one
/// record per cell. Cells run in parallel; this thread is the only writer.
pub fn run_sweep(spec: &SweepSpec, store: &Path, opts: &RunOptions) -> Result<RunSummary, CliError> {
    spec.validate()?;
    let hash = spec.hash();
    let existing = read_store(store)?;
    for (line, msg) in &existing.corrupt {
        eprintln!("warning: {}:{line}: skipping corrupt record ({msg})", store.display());
    }
    let done: HashSet<CellIndex> = existing.cells().filter(|c| c.spec_hash == hash).map(|c| c.cell).collect();
    let all = spec.cells();
    let mut pending: Vec<CellIndex> = all.iter().copied().filter(|c| !done.contains(c)).collect();
    if let Some(m) = opts.max_cells {
        pending.truncate(m);
    }
    let mut file = open_append(store)?;
    let (tx, rx) = mpsc::channel::<Result<CellRecord, CliError>>();
    let total = pending.len();
    let mut first_error = None;
    // the producer thread sits outside the caller's pool, so give it one of
    // the same size
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(rayon::current_num_threads())
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    std::thread::scope(|scope| {
        scope.spawn(move || {
            pool.install(|| {
                pending.par_iter().for_each_with(tx, |tx, &c| {
                    let _ = tx.send(evaluate_cell(spec, c));
                })
            });
        });
        for (i, result) in rx.into_iter().enumerate() {
            match result {
                Ok(rec) => {
                    let line = serde_json::to_string(&ResultRecord::Cell(rec.clone())).expect("record serializes");
                    if let Err(e) = writeln!(file, "{line}").and_then(|_| file.flush()) {
                        first_error.get_or_insert(CliError::io(store, e));
                    } else if !opts.quiet {
                        eprintln!(
                            "[{}/{total}] p={} delta={} n={} {}={:.6} ({} ms)",
                            i + 1,
                            rec.p,
                            rec.delta,
                            rec.n,
                            rec.quantity,
                            rec.estimate.point,
                            rec.wall_ms
                        );
                    }
                }
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }
    });
    if let Some(e) = first_error {
        return Err(e);
    }
    Ok(RunSummary { evaluated: total, skipped: done.len(), corrupt_lines: existing.corrupt.len() })
}
